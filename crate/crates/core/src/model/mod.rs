//! Oscillator models `x'' + c x' + g(t, x) = h(t)` with `T`-periodic
//! coefficients.
//!
//! Restoring forces form a closed set of variants so that both `g` and its
//! `x`-derivative are evaluated exactly. All periodic coefficients are
//! finite Fourier series sharing the model period.

mod config;

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub use config::{load_model, model_to_document, ModelDocument, PeriodDoc, SeriesDoc};

/// One term `cos_coeff * cos(2 pi n t / T) + sin_coeff * sin(2 pi n t / T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Harmonic {
    pub order: u32,
    pub cos_coeff: f64,
    pub sin_coeff: f64,
}

/// A finite Fourier series with period `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingSeries {
    period: f64,
    mean: f64,
    harmonics: Vec<Harmonic>,
}

impl ForcingSeries {
    pub fn new(period: f64, mean: f64, harmonics: Vec<Harmonic>) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::config("period", format!("must be positive, got {period}")));
        }
        if !mean.is_finite() {
            return Err(Error::config("mean", "must be finite"));
        }
        for (i, hm) in harmonics.iter().enumerate() {
            if hm.order == 0 {
                return Err(Error::config(
                    format!("harmonics[{i}].n"),
                    "harmonic order must be a positive integer",
                ));
            }
            if !(hm.cos_coeff.is_finite() && hm.sin_coeff.is_finite()) {
                return Err(Error::config(format!("harmonics[{i}]"), "coefficients must be finite"));
            }
            if i > 0 && harmonics[i - 1].order >= hm.order {
                return Err(Error::config(
                    format!("harmonics[{i}].n"),
                    "harmonic orders must be strictly increasing",
                ));
            }
        }
        Ok(Self {
            period,
            mean,
            harmonics,
        })
    }

    pub fn constant(period: f64, value: f64) -> Result<Self> {
        Self::new(period, value, Vec::new())
    }

    /// `mean + cos_coeff * cos(2 pi t / T)`.
    pub fn cosine(period: f64, mean: f64, cos_coeff: f64) -> Result<Self> {
        Self::new(
            period,
            mean,
            vec![Harmonic {
                order: 1,
                cos_coeff,
                sin_coeff: 0.0,
            }],
        )
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn harmonics(&self) -> &[Harmonic] {
        &self.harmonics
    }

    pub fn is_constant(&self) -> bool {
        self.harmonics.iter().all(|h| h.cos_coeff == 0.0 && h.sin_coeff == 0.0)
    }

    pub fn eval(&self, t: f64) -> f64 {
        if self.harmonics.is_empty() {
            return self.mean;
        }
        // Reduce to one period first so that f(t + T) == f(t) up to rounding
        // of the reduction itself.
        let phase = 2.0 * PI * (t.rem_euclid(self.period) / self.period);
        self.harmonics.iter().fold(self.mean, |acc, h| {
            let (s, c) = (h.order as f64 * phase).sin_cos();
            acc + h.cos_coeff * c + h.sin_coeff * s
        })
    }

    /// Lower and upper bounds from the absolute sum of the coefficients.
    pub fn envelope(&self) -> (f64, f64) {
        let spread: f64 = self.harmonics.iter().map(|h| h.cos_coeff.hypot(h.sin_coeff)).sum();
        (self.mean - spread, self.mean + spread)
    }

    pub(crate) fn set_mean(&mut self, mean: f64) {
        self.mean = mean;
    }

    /// Sets one coefficient of harmonic `order`, inserting the harmonic if
    /// absent.
    pub(crate) fn set_harmonic(&mut self, order: u32, cos: Option<f64>, sin: Option<f64>) {
        let idx = match self.harmonics.binary_search_by_key(&order, |h| h.order) {
            Ok(i) => i,
            Err(i) => {
                self.harmonics.insert(
                    i,
                    Harmonic {
                        order,
                        cos_coeff: 0.0,
                        sin_coeff: 0.0,
                    },
                );
                i
            }
        };
        if let Some(c) = cos {
            self.harmonics[idx].cos_coeff = c;
        }
        if let Some(s) = sin {
            self.harmonics[idx].sin_coeff = s;
        }
    }

    fn with_period(mut self, period: f64) -> Self {
        self.period = period;
        self
    }
}

/// Term `p_j(t) * x^j` of a polynomial restoring force.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyTerm {
    pub power: u32,
    pub coeff: ForcingSeries,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RestoringForce {
    /// `k x`
    Linear { k: f64 },
    /// `sum_j p_j(t) x^j`
    PolyFourier { terms: Vec<PolyTerm> },
    /// `k x + delta sin x`
    SinePerturbed { k: f64, delta: f64 },
    /// `a(t) x^+ - b(t) x^-` with `x^+ = max(x, 0)` and `x^- = max(-x, 0)`.
    PiecewiseLinear { a: ForcingSeries, b: ForcingSeries },
}

/// Which linear branch of a piecewise force is active. Smooth variants
/// ignore it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Positive,
    Negative,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Positive => 1.0,
            Branch::Negative => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Branch::Positive => Branch::Negative,
            Branch::Negative => Branch::Positive,
        }
    }
}

impl RestoringForce {
    pub fn kind(&self) -> &'static str {
        match self {
            RestoringForce::Linear { .. } => "linear",
            RestoringForce::PolyFourier { .. } => "poly_fourier",
            RestoringForce::SinePerturbed { .. } => "sine_perturbed",
            RestoringForce::PiecewiseLinear { .. } => "piecewise_linear",
        }
    }

    fn series(&self) -> Vec<(String, &ForcingSeries)> {
        match self {
            RestoringForce::PolyFourier { terms } => terms
                .iter()
                .enumerate()
                .map(|(i, t)| (format!("g.coeffs[{i}]"), &t.coeff))
                .collect(),
            RestoringForce::PiecewiseLinear { a, b } => {
                vec![("g.a".to_string(), a), ("g.b".to_string(), b)]
            }
            _ => Vec::new(),
        }
    }
}

/// The full problem `x'' + c x' + g(t, x) = h(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    c: f64,
    period: f64,
    g: RestoringForce,
    h: ForcingSeries,
}

impl ModelSpec {
    pub fn new(name: impl Into<String>, c: f64, period: f64, g: RestoringForce, h: ForcingSeries) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::config("c", format!("damping must be finite and >= 0, got {c}")));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::config("T", format!("period must be positive, got {period}")));
        }
        check_period("h", period, h.period)?;
        match &g {
            RestoringForce::Linear { k } if !k.is_finite() => {
                return Err(Error::config("g.k", "must be finite"));
            }
            RestoringForce::SinePerturbed { k, delta } if !(k.is_finite() && delta.is_finite()) => {
                return Err(Error::config("g", "k and delta must be finite"));
            }
            RestoringForce::PolyFourier { terms } => {
                if terms.is_empty() {
                    return Err(Error::config("g.coeffs", "at least one term required"));
                }
                for (i, term) in terms.iter().enumerate() {
                    if term.power == 0 {
                        return Err(Error::config(format!("g.coeffs[{i}].power"), "power must be >= 1"));
                    }
                    if i > 0 && terms[i - 1].power >= term.power {
                        return Err(Error::config(
                            format!("g.coeffs[{i}].power"),
                            "powers must be strictly increasing",
                        ));
                    }
                }
            }
            _ => {}
        }
        for (field, series) in g.series() {
            check_period(&field, period, series.period)?;
        }
        Ok(Self {
            name: name.into(),
            c,
            period,
            g,
            h,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn damping(&self) -> f64 {
        self.c
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn restoring(&self) -> &RestoringForce {
        &self.g
    }

    pub fn forcing(&self) -> &ForcingSeries {
        &self.h
    }

    pub fn is_piecewise(&self) -> bool {
        matches!(self.g, RestoringForce::PiecewiseLinear { .. })
    }

    /// True when `g` is linear in `x`, so the variational equation does not
    /// depend on the reference orbit.
    pub fn is_linear_in_x(&self) -> bool {
        match &self.g {
            RestoringForce::Linear { .. } => true,
            RestoringForce::PolyFourier { terms } => terms.iter().all(|t| t.power == 1),
            RestoringForce::SinePerturbed { delta, .. } => *delta == 0.0,
            RestoringForce::PiecewiseLinear { a, b } => a == b,
        }
    }

    pub fn eval_h(&self, t: f64) -> f64 {
        self.h.eval(t)
    }

    pub fn eval_g(&self, t: f64, x: f64) -> f64 {
        match &self.g {
            RestoringForce::Linear { k } => k * x,
            RestoringForce::PolyFourier { terms } => terms
                .iter()
                .map(|term| term.coeff.eval(t) * x.powi(term.power as i32))
                .sum(),
            RestoringForce::SinePerturbed { k, delta } => k * x + delta * x.sin(),
            RestoringForce::PiecewiseLinear { a, b } => a.eval(t) * x.max(0.0) - b.eval(t) * (-x).max(0.0),
        }
    }

    /// `dg/dx`. For the piecewise force this selects `a(t)` for `x >= 0`
    /// and `b(t)` for `x < 0`.
    pub fn eval_g_x(&self, t: f64, x: f64) -> f64 {
        match &self.g {
            RestoringForce::Linear { k } => *k,
            RestoringForce::PolyFourier { terms } => terms
                .iter()
                .map(|term| {
                    let j = term.power as i32;
                    term.coeff.eval(t) * j as f64 * x.powi(j - 1)
                })
                .sum(),
            RestoringForce::SinePerturbed { k, delta } => k + delta * x.cos(),
            RestoringForce::PiecewiseLinear { a, b } => {
                if x >= 0.0 {
                    a.eval(t)
                } else {
                    b.eval(t)
                }
            }
        }
    }

    /// `g` with the piecewise branch frozen, so that the field stays smooth
    /// when an integration step slightly overshoots a zero of `x`.
    pub fn eval_g_branch(&self, t: f64, x: f64, branch: Branch) -> f64 {
        match (&self.g, branch) {
            (RestoringForce::PiecewiseLinear { a, .. }, Branch::Positive) => a.eval(t) * x,
            (RestoringForce::PiecewiseLinear { b, .. }, Branch::Negative) => b.eval(t) * x,
            _ => self.eval_g(t, x),
        }
    }

    pub fn eval_g_x_branch(&self, t: f64, x: f64, branch: Branch) -> f64 {
        match (&self.g, branch) {
            (RestoringForce::PiecewiseLinear { a, .. }, Branch::Positive) => a.eval(t),
            (RestoringForce::PiecewiseLinear { b, .. }, Branch::Negative) => b.eval(t),
            _ => self.eval_g_x(t, x),
        }
    }

    /// Acceleration `h(t) - c v - g(t, x)` on the given branch.
    pub fn acceleration(&self, t: f64, x: f64, v: f64, branch: Branch) -> f64 {
        self.h.eval(t) - self.c * v - self.eval_g_branch(t, x, branch)
    }

    /// Returns a copy with the scalar addressed by `path` replaced.
    ///
    /// Recognized paths: `c`, `g.k`, `g.delta`, `g.a`, `g.b` (means of the
    /// piecewise coefficients), `g.p<j>` (mean of `p_j`), `g.p<j>.cos<n>`,
    /// `g.p<j>.sin<n>`, `h.mean`, `h.cos<n>`, `h.sin<n>`, and `epsilon`,
    /// which sets the first cosine harmonic of `p_1` to `epsilon / 4`.
    pub fn with_parameter(&self, path: &str, value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::InvalidArgument(format!("parameter value {value} is not finite")));
        }
        let bad = || {
            Error::InvalidArgument(format!(
                "parameter path `{path}` does not address a scalar of model `{}`",
                self.name
            ))
        };
        let mut out = self.clone();
        let parts: Vec<&str> = path.split('.').collect();
        match parts.as_slice() {
            ["c"] => {
                if value < 0.0 {
                    return Err(Error::InvalidArgument("damping must be >= 0".into()));
                }
                out.c = value;
            }
            ["epsilon"] | ["eps"] => match &mut out.g {
                RestoringForce::PolyFourier { terms } => {
                    let term = terms.iter_mut().find(|t| t.power == 1).ok_or_else(bad)?;
                    term.coeff.set_harmonic(1, Some(value / 4.0), None);
                }
                _ => return Err(bad()),
            },
            ["g", field] => match (&mut out.g, *field) {
                (RestoringForce::Linear { k }, "k") => *k = value,
                (RestoringForce::SinePerturbed { k, .. }, "k") => *k = value,
                (RestoringForce::SinePerturbed { delta, .. }, "delta") => *delta = value,
                (RestoringForce::PiecewiseLinear { a, .. }, "a") => a.set_mean(value),
                (RestoringForce::PiecewiseLinear { b, .. }, "b") => b.set_mean(value),
                (RestoringForce::PolyFourier { terms }, f) => {
                    let j = parse_index(f, "p").ok_or_else(bad)?;
                    let term = terms.iter_mut().find(|t| t.power == j).ok_or_else(bad)?;
                    term.coeff.set_mean(value);
                }
                _ => return Err(bad()),
            },
            ["g", coeff, harmonic] => {
                let series = match (&mut out.g, *coeff) {
                    (RestoringForce::PiecewiseLinear { a, .. }, "a") => a,
                    (RestoringForce::PiecewiseLinear { b, .. }, "b") => b,
                    (RestoringForce::PolyFourier { terms }, f) => {
                        let j = parse_index(f, "p").ok_or_else(bad)?;
                        &mut terms.iter_mut().find(|t| t.power == j).ok_or_else(bad)?.coeff
                    }
                    _ => return Err(bad()),
                };
                set_series_field(series, harmonic, value).ok_or_else(bad)?;
            }
            ["h", field] => set_series_field(&mut out.h, field, value).ok_or_else(bad)?,
            _ => return Err(bad()),
        }
        Ok(out)
    }

    /// The undamped equation `y'' + (g_x - c^2/4) y = 0` obtained from a
    /// linear model by `y = e^{ct/2} x`, with the forcing dropped.
    pub fn undamped_linear_part(&self) -> Result<Self> {
        let shift = self.c * self.c / 4.0;
        let g = match &self.g {
            RestoringForce::Linear { k } => RestoringForce::Linear { k: k - shift },
            RestoringForce::PolyFourier { terms } if self.is_linear_in_x() => {
                let mut coeff = terms[0].coeff.clone();
                coeff.set_mean(coeff.mean - shift);
                RestoringForce::PolyFourier {
                    terms: vec![PolyTerm { power: 1, coeff }],
                }
            }
            RestoringForce::SinePerturbed { k, delta } if *delta == 0.0 => RestoringForce::Linear { k: k - shift },
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "model `{}` is not linear in x; the discriminant is defined for linear equations only",
                    self.name
                )))
            }
        };
        ModelSpec::new(
            format!("{} (undamped)", self.name),
            0.0,
            self.period,
            g,
            ForcingSeries::constant(self.period, 0.0)?,
        )
    }

    /// Replaces the model period, rescaling no coefficients.
    pub fn with_period(&self, period: f64) -> Result<Self> {
        let retime = |s: &ForcingSeries| s.clone().with_period(period);
        let g = match &self.g {
            RestoringForce::PolyFourier { terms } => RestoringForce::PolyFourier {
                terms: terms
                    .iter()
                    .map(|t| PolyTerm {
                        power: t.power,
                        coeff: retime(&t.coeff),
                    })
                    .collect(),
            },
            RestoringForce::PiecewiseLinear { a, b } => RestoringForce::PiecewiseLinear {
                a: retime(a),
                b: retime(b),
            },
            other => other.clone(),
        };
        ModelSpec::new(self.name.clone(), self.c, period, g, retime(&self.h))
    }
}

fn parse_index(field: &str, prefix: &str) -> Option<u32> {
    field.strip_prefix(prefix)?.parse().ok().filter(|&n| n > 0)
}

fn set_series_field(series: &mut ForcingSeries, field: &str, value: f64) -> Option<()> {
    if field == "mean" {
        series.set_mean(value);
    } else if let Some(n) = parse_index(field, "cos") {
        series.set_harmonic(n, Some(value), None);
    } else {
        let n = parse_index(field, "sin")?;
        series.set_harmonic(n, None, Some(value));
    }
    Some(())
}

fn check_period(field: &str, expected: f64, found: f64) -> Result<()> {
    if (expected - found).abs() > 1e-12 * expected.abs().max(1.0) {
        return Err(Error::PeriodMismatch {
            field: field.to_string(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Constructors for the reference models used in tests, examples and the CLI.
pub mod presets {
    use super::*;

    pub const TWO_PI: f64 = 2.0 * PI;

    /// `x'' + c x' + k x = amp cos t`, period `2 pi`.
    pub fn linear(c: f64, k: f64, amp: f64) -> ModelSpec {
        ModelSpec::new(
            "linear",
            c,
            TWO_PI,
            RestoringForce::Linear { k },
            ForcingSeries::cosine(TWO_PI, 0.0, amp).unwrap(),
        )
        .unwrap()
    }

    /// `x'' + c x' + k x + delta sin x = amp cos t`, period `2 pi`.
    pub fn sine_perturbed(c: f64, k: f64, delta: f64, amp: f64) -> ModelSpec {
        ModelSpec::new(
            "sine_perturbed",
            c,
            TWO_PI,
            RestoringForce::SinePerturbed { k, delta },
            ForcingSeries::cosine(TWO_PI, 0.0, amp).unwrap(),
        )
        .unwrap()
    }

    /// `x'' + c x' + a x^+ - b x^- = amp cos t` with constant `a`, `b`.
    pub fn piecewise(c: f64, a: f64, b: f64, amp: f64) -> ModelSpec {
        ModelSpec::new(
            "piecewise_linear",
            c,
            TWO_PI,
            RestoringForce::PiecewiseLinear {
                a: ForcingSeries::constant(TWO_PI, a).unwrap(),
                b: ForcingSeries::constant(TWO_PI, b).unwrap(),
            },
            ForcingSeries::cosine(TWO_PI, 0.0, amp).unwrap(),
        )
        .unwrap()
    }

    /// Damped Mathieu equation `x'' + c x' + (1 + c^2 + eps cos t) x / 4 = 0`.
    pub fn damped_mathieu(c: f64, eps: f64) -> ModelSpec {
        let p1 = ForcingSeries::cosine(TWO_PI, (1.0 + c * c) / 4.0, eps / 4.0).unwrap();
        ModelSpec::new(
            "damped_mathieu",
            c,
            TWO_PI,
            RestoringForce::PolyFourier {
                terms: vec![PolyTerm { power: 1, coeff: p1 }],
            },
            ForcingSeries::constant(TWO_PI, 0.0).unwrap(),
        )
        .unwrap()
    }

    /// Undamped Mathieu equation `y'' + (1 + eps cos t) y / 4 = 0`.
    pub fn mathieu(eps: f64) -> ModelSpec {
        let mut m = damped_mathieu(0.0, eps);
        m.name = "mathieu".into();
        m
    }
}
