//! Sampled checks of the coefficient bounds under which the periodic
//! solution is unique and asymptotically stable with decay rate `c / 2`.
//!
//! `f >> L` means `f >= L` everywhere and `f > L` on a set of positive
//! measure. Both are checked on a finite grid only, so a pass is evidence
//! over the sampled box and nothing more.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floquet::{bound_constants, BoundConstants};
use crate::model::{ForcingSeries, ModelSpec, RestoringForce};

/// Samples within this distance of a bound are inconclusive.
pub const VERDICT_TOL: f64 = 1e-9;
pub const MIN_SAMPLES: usize = 16;
pub const ZERO_GRID: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
    NotApplicable,
}

impl Verdict {
    /// Fail dominates, then inconclusive.
    pub fn all(items: &[Verdict]) -> Verdict {
        if items.contains(&Verdict::Fail) {
            Verdict::Fail
        } else if items.contains(&Verdict::Inconclusive) {
            Verdict::Inconclusive
        } else if items.iter().all(|v| *v == Verdict::NotApplicable) {
            Verdict::NotApplicable
        } else {
            Verdict::Pass
        }
    }
}

/// `f >> bound` from the sampled range `[inf, sup]` of `f`.
pub fn dominates(inf: f64, sup: f64, bound: f64) -> Verdict {
    if inf < bound - VERDICT_TOL {
        Verdict::Fail
    } else if inf < bound {
        Verdict::Inconclusive
    } else if sup > bound + VERDICT_TOL {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    }
}

/// `f << bound`.
pub fn dominated(inf: f64, sup: f64, bound: f64) -> Verdict {
    dominates(-sup, -inf, -bound)
}

/// `f < bound` at every sample.
pub fn strictly_below(sup: f64, bound: f64) -> Verdict {
    if sup < bound - VERDICT_TOL {
        Verdict::Pass
    } else if sup > bound + VERDICT_TOL {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    }
}

/// Rectangle of `(t, x)` over which `g_x` is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleBox {
    pub t: (f64, f64),
    pub x: (f64, f64),
}

impl SampleBox {
    /// One full period in `t`.
    pub fn over_period(model: &ModelSpec, x: (f64, f64)) -> Self {
        Self {
            t: (0.0, model.period()),
            x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub inf: f64,
    pub sup: f64,
}

impl Range {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        values.fold(
            Range {
                inf: f64::INFINITY,
                sup: f64::NEG_INFINITY,
            },
            |r, v| Range {
                inf: r.inf.min(v),
                sup: r.sup.max(v),
            },
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdicts {
    /// `c > 0`
    pub damping_positive: Verdict,
    /// `g_x < pi^2/T^2 + c^2/4`
    pub gprime_upper: Verdict,
    /// `g_x >> alpha`
    pub gprime_lower: Verdict,
    /// `mean(alpha) >> c^2/4`
    pub alpha_mean_above: Verdict,
    pub smooth_decay: Verdict,
    /// `h` has finitely many zeros per period (not identically zero).
    pub h_finite_zeros: Verdict,
    /// `0 << a, b << (2 pi)^2/T^2 + c^2/4`: unique periodic solution.
    pub piecewise_uniqueness: Verdict,
    /// `0 << a, b << pi^2/T^2 + c^2/4`: asymptotically stable.
    pub piecewise_stability: Verdict,
    /// `c^2/4 << a, b << pi^2/T^2 + c^2/4`: decay rate `c / 2`.
    pub piecewise_decay: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub c: f64,
    pub period: f64,
    pub region: SampleBox,
    pub samples: usize,
    pub constants: BoundConstants,
    pub gprime_inf: f64,
    pub gprime_sup: f64,
    pub alpha_mean: f64,
    /// Sampled range of `g_x(t, x) - alpha(t)`.
    pub margin: Range,
    /// Sampled ranges of `a(t)` and `b(t)` for piecewise models.
    pub a_range: Option<Range>,
    pub b_range: Option<Range>,
    pub h_identically_zero: bool,
    /// Sign changes of `h` on `[0, T]`; tangential zeros are not seen, so
    /// the true count is at least this.
    pub h_zero_count: usize,
    pub h_zeros: Vec<f64>,
    pub verdicts: Verdicts,
    pub note: String,
}

impl BoundsReport {
    /// Verdicts as a function of the recorded numbers only.
    pub fn derive_verdicts(&self) -> Verdicts {
        let k = &self.constants;
        let damping_positive = if self.c > 0.0 { Verdict::Pass } else { Verdict::Fail };
        let gprime_upper = strictly_below(self.gprime_sup, k.stability_bound);
        let gprime_lower = dominates(self.margin.inf, self.margin.sup, 0.0);
        let alpha_mean_above = dominates(self.alpha_mean, self.alpha_mean, k.damping_bound);
        let smooth_decay = Verdict::all(&[damping_positive, gprime_upper, gprime_lower, alpha_mean_above]);
        let h_finite_zeros = if self.h_identically_zero {
            Verdict::Fail
        } else {
            Verdict::Pass
        };

        let window = |lower: f64, upper: f64| match (self.a_range, self.b_range) {
            (Some(a), Some(b)) => Verdict::all(&[
                h_finite_zeros,
                dominates(a.inf, a.sup, lower),
                dominated(a.inf, a.sup, upper),
                dominates(b.inf, b.sup, lower),
                dominated(b.inf, b.sup, upper),
            ]),
            _ => Verdict::NotApplicable,
        };
        let piecewise_uniqueness = window(0.0, k.uniqueness_bound);
        let piecewise_stability = window(0.0, k.stability_bound);
        let piecewise_decay = match window(k.damping_bound, k.stability_bound) {
            Verdict::NotApplicable => Verdict::NotApplicable,
            v => Verdict::all(&[v, damping_positive]),
        };
        Verdicts {
            damping_positive,
            gprime_upper,
            gprime_lower,
            alpha_mean_above,
            smooth_decay,
            h_finite_zeros,
            piecewise_uniqueness,
            piecewise_stability,
            piecewise_decay,
        }
    }
}

fn linspace(a: f64, b: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| {
        if i + 1 == n {
            b
        } else {
            a + (b - a) * i as f64 / (n - 1) as f64
        }
    })
}

/// Samples `g_x` on a `samples x samples` grid over `region` and checks the
/// hypotheses against the lower envelope `alpha`.
pub fn check_hypotheses(
    model: &ModelSpec,
    region: SampleBox,
    alpha: &ForcingSeries,
    samples: usize,
) -> Result<BoundsReport> {
    if samples < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_SAMPLES} samples per axis, got {samples}"
        )));
    }
    let (t0, t1) = region.t;
    let (x0, x1) = region.x;
    if !(t0.is_finite() && t1.is_finite() && x0.is_finite() && x1.is_finite()) || t1 < t0 || x1 < x0 {
        return Err(Error::InvalidArgument(format!(
            "sample box {region:?} is empty or not finite"
        )));
    }
    let grid: Vec<(f64, f64)> = linspace(t0, t1, samples)
        .flat_map(|t| linspace(x0, x1, samples).map(move |x| (t, x)))
        .collect();
    let gprime = Range::of(grid.iter().map(|&(t, x)| model.eval_g_x(t, x)));
    let margin = Range::of(grid.iter().map(|&(t, x)| model.eval_g_x(t, x) - alpha.eval(t)));
    let (a_range, b_range) = match model.restoring() {
        RestoringForce::PiecewiseLinear { a, b } => (
            Some(Range::of(linspace(t0, t1, samples).map(|t| a.eval(t)))),
            Some(Range::of(linspace(t0, t1, samples).map(|t| b.eval(t)))),
        ),
        _ => (None, None),
    };
    let h = model.forcing();
    let h_identically_zero = h.mean() == 0.0 && h.is_constant();
    let h_zeros = if h_identically_zero {
        Vec::new()
    } else {
        sign_changes(|t| h.eval(t), 0.0, model.period(), ZERO_GRID)
    };

    let mut report = BoundsReport {
        c: model.damping(),
        period: model.period(),
        region,
        samples,
        constants: bound_constants(model.damping(), model.period()),
        gprime_inf: gprime.inf,
        gprime_sup: gprime.sup,
        alpha_mean: alpha.mean(),
        margin,
        a_range,
        b_range,
        h_identically_zero,
        h_zero_count: h_zeros.len(),
        h_zeros,
        verdicts: Verdicts {
            damping_positive: Verdict::NotApplicable,
            gprime_upper: Verdict::NotApplicable,
            gprime_lower: Verdict::NotApplicable,
            alpha_mean_above: Verdict::NotApplicable,
            smooth_decay: Verdict::NotApplicable,
            h_finite_zeros: Verdict::NotApplicable,
            piecewise_uniqueness: Verdict::NotApplicable,
            piecewise_stability: Verdict::NotApplicable,
            piecewise_decay: Verdict::NotApplicable,
        },
        note: format!(
            "sampled, not proven: g_x checked on a {samples}x{samples} grid over t in [{t0}, {t1}], x in [{x0}, {x1}] only; zero count of h is a lower bound"
        ),
    };
    report.verdicts = report.derive_verdicts();
    Ok(report)
}

/// Zeros of `f` located by sign changes on a uniform grid of `n` intervals
/// over `[a, b]`, each refined by bisection.
pub fn sign_changes(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> Vec<f64> {
    let mut zeros = Vec::new();
    let at = |i: usize| if i == n { b } else { a + (b - a) * i as f64 / n as f64 };
    let mut last: Option<(f64, f64)> = None;
    for i in 0..=n {
        let t = at(i);
        let v = f(t);
        if v == 0.0 || !v.is_finite() {
            continue;
        }
        if let Some((tl, vl)) = last {
            if vl.signum() != v.signum() {
                let (mut lo, mut hi) = (tl, t);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if f(mid).signum() == vl.signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                zeros.push(0.5 * (lo + hi));
            }
        }
        last = Some((t, v));
    }
    zeros
}
