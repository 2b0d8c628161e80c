//! Adaptive Dormand–Prince 5(4) integration of the oscillator and of its
//! variational equation, with cubic Hermite dense output and location of the
//! zero crossings of `x` for piecewise-linear restoring forces.
//!
//! For piecewise models the branch of `g` is frozen for the duration of each
//! step. When `x` leaves the side of the active branch the step is cut at the
//! crossing, which is found by bisection on the dense output and then polished
//! by Newton iteration on actual steps, and the integration restarts on the
//! other branch. Every step therefore sees a smooth right-hand side.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Branch, ModelSpec};

/// Largest `|x|` accepted at a located crossing.
pub const EVENT_X_TOL: f64 = 1e-12;

const MAX_EVENT_ITERS: usize = 12;
const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    pub rtol: f64,
    pub atol: f64,
    /// Defaults to `T / 16` when unset.
    pub max_step: Option<f64>,
    /// Crossing times are bisected to `event_tol * max(1, |t|)`.
    pub event_tol: f64,
    pub max_steps: usize,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            max_step: None,
            event_tol: 1e-13,
            max_steps: 1_000_000,
        }
    }
}

impl IntegratorSettings {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !(positive(self.rtol) && self.rtol >= 1e-14) {
            return Err(Error::InvalidArgument(format!(
                "rtol must be >= 1e-14, got {}",
                self.rtol
            )));
        }
        if !positive(self.atol) {
            return Err(Error::InvalidArgument(format!(
                "atol must be positive, got {}",
                self.atol
            )));
        }
        if !positive(self.event_tol) {
            return Err(Error::InvalidArgument("event_tol must be positive".into()));
        }
        if let Some(h) = self.max_step {
            if !positive(h) {
                return Err(Error::InvalidArgument("max_step must be positive".into()));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument("max_steps must be positive".into()));
        }
        Ok(())
    }

    pub fn max_step_for(&self, model: &ModelSpec) -> f64 {
        self.max_step.unwrap_or(model.period() / 16.0)
    }
}

/// State `(x, x')` at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub t: f64,
    pub x: f64,
    pub v: f64,
}

impl PhasePoint {
    pub fn new(t: f64, x: f64, v: f64) -> Self {
        Self { t, x, v }
    }

    pub fn origin() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn state(&self) -> [f64; 2] {
        [self.x, self.v]
    }

    /// Max-norm distance between the `(x, v)` parts.
    pub fn distance(&self, other: &PhasePoint) -> f64 {
        (self.x - other.x).abs().max((self.v - other.v).abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Crossing {
    /// `x` goes from positive to negative.
    Downward,
    Upward,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub direction: Crossing,
}

/// One accepted step with the data for its cubic Hermite interpolant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub t0: f64,
    pub t1: f64,
    pub y0: [f64; 2],
    pub y1: [f64; 2],
    pub f0: [f64; 2],
    pub f1: [f64; 2],
}

impl Segment {
    fn eval(&self, t: f64) -> [f64; 2] {
        if t == self.t1 {
            return self.y1;
        }
        if t == self.t0 {
            return self.y0;
        }
        hermite(self.t0, self.t1 - self.t0, &self.y0, &self.y1, &self.f0, &self.f1, t)
    }
}

fn hermite<const N: usize>(
    t0: f64,
    h: f64,
    y0: &[f64; N],
    y1: &[f64; N],
    f0: &[f64; N],
    f1: &[f64; N],
    t: f64,
) -> [f64; N] {
    let s = (t - t0) / h;
    let s1 = 1.0 - s;
    let h00 = (1.0 + 2.0 * s) * s1 * s1;
    let h10 = s * s1 * s1;
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i];
    }
    out
}

/// Dense solution record over `[start.t, end.t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    start: PhasePoint,
    segments: Vec<Segment>,
    events: Vec<Event>,
}

impl Trajectory {
    pub fn start(&self) -> PhasePoint {
        self.start
    }

    pub fn end(&self) -> PhasePoint {
        match self.segments.last() {
            Some(s) => PhasePoint::new(s.t1, s.y1[0], s.y1[1]),
            None => self.start,
        }
    }

    pub fn span(&self) -> (f64, f64) {
        (self.start.t, self.end().t)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn interpolate(&self, t: f64) -> Result<PhasePoint> {
        let (a, b) = self.span();
        if !(t >= a && t <= b) {
            return Err(Error::OutOfRange { t, start: a, end: b });
        }
        if self.segments.is_empty() {
            return Ok(self.start);
        }
        let idx = self.segments.partition_point(|s| s.t1 < t).min(self.segments.len() - 1);
        let y = self.segments[idx].eval(t);
        Ok(PhasePoint::new(t, y[0], y[1]))
    }

    /// `n + 1` equally spaced points including both endpoints.
    pub fn sample(&self, n: usize) -> Vec<PhasePoint> {
        let (a, b) = self.span();
        let n = n.max(1);
        (0..=n)
            .map(|i| {
                let t = if i == n { b } else { a + (b - a) * i as f64 / n as f64 };
                self.interpolate(t).expect("sample time inside span")
            })
            .collect()
    }
}

/// Base point together with the sensitivity matrix `M = d(x, v)(t) / d(x, v)(t0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationalState {
    pub base: PhasePoint,
    pub m: Matrix2<f64>,
}

trait System<const N: usize> {
    fn rhs(&self, t: f64, y: &[f64; N], branch: Branch) -> [f64; N];
}

struct Oscillator<'a>(&'a ModelSpec);

impl System<2> for Oscillator<'_> {
    fn rhs(&self, t: f64, y: &[f64; 2], branch: Branch) -> [f64; 2] {
        [y[1], self.0.acceleration(t, y[0], y[1], branch)]
    }
}

/// Base state followed by the two columns of `M`:
/// `[x, v, m11, m21, m12, m22]`.
struct Variational<'a>(&'a ModelSpec);

fn linearized_columns(p: f64, c: f64, y: &[f64; 6], out: &mut [f64; 6]) {
    out[2] = y[3];
    out[3] = -p * y[2] - c * y[3];
    out[4] = y[5];
    out[5] = -p * y[4] - c * y[5];
}

impl System<6> for Variational<'_> {
    fn rhs(&self, t: f64, y: &[f64; 6], branch: Branch) -> [f64; 6] {
        let m = self.0;
        let p = m.eval_g_x_branch(t, y[0], branch);
        let mut out = [0.0; 6];
        out[0] = y[1];
        out[1] = m.acceleration(t, y[0], y[1], branch);
        linearized_columns(p, m.damping(), y, &mut out);
        out
    }
}

/// Linearization about the zero function: `p(t) = g_x(t, 0)`, base frozen at 0.
struct ZeroLinearization<'a>(&'a ModelSpec);

impl System<6> for ZeroLinearization<'_> {
    fn rhs(&self, t: f64, y: &[f64; 6], _branch: Branch) -> [f64; 6] {
        let p = self.0.eval_g_x(t, 0.0);
        let mut out = [0.0; 6];
        linearized_columns(p, self.0.damping(), y, &mut out);
        out
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct StepResult<const N: usize> {
    y: [f64; N],
    f: [f64; N],
    err: f64,
}

fn combine<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        let mut acc = 0.0;
        for (a, k) in terms {
            acc += a * k[i];
        }
        out[i] += h * acc;
    }
    out
}

fn dp_step<const N: usize, S: System<N>>(
    sys: &S,
    t: f64,
    y: &[f64; N],
    k1: &[f64; N],
    h: f64,
    branch: Branch,
    settings: &IntegratorSettings,
) -> StepResult<N> {
    let k2 = sys.rhs(t + C2 * h, &combine(y, h, &[(A21, k1)]), branch);
    let k3 = sys.rhs(t + C3 * h, &combine(y, h, &[(A31, k1), (A32, &k2)]), branch);
    let k4 = sys.rhs(t + C4 * h, &combine(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]), branch);
    let k5 = sys.rhs(
        t + C5 * h,
        &combine(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        branch,
    );
    let k6 = sys.rhs(
        t + h,
        &combine(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        branch,
    );
    let y_new = combine(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = sys.rhs(t + h, &y_new, branch);

    let mut sum = 0.0;
    for i in 0..N {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sc = settings.atol + settings.rtol * y[i].abs().max(y_new[i].abs());
        sum += (e / sc).powi(2);
    }
    StepResult {
        y: y_new,
        f: k7,
        err: (sum / N as f64).sqrt(),
    }
}

fn rms_scaled<const N: usize>(v: &[f64; N], y: &[f64; N], settings: &IntegratorSettings) -> f64 {
    let sum: f64 = (0..N)
        .map(|i| (v[i] / (settings.atol + settings.rtol * y[i].abs())).powi(2))
        .sum();
    (sum / N as f64).sqrt()
}

/// Starting step size heuristic of Hairer, Nørsett and Wanner.
fn initial_step<const N: usize, S: System<N>>(
    sys: &S,
    t: f64,
    y: &[f64; N],
    f0: &[f64; N],
    branch: Branch,
    max_step: f64,
    settings: &IntegratorSettings,
) -> f64 {
    let d0 = rms_scaled(y, y, settings);
    let d1 = rms_scaled(f0, y, settings);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(max_step);
    let y1 = combine(y, h0, &[(1.0, f0)]);
    let f1 = sys.rhs(t + h0, &y1, branch);
    let mut diff = [0.0; N];
    for i in 0..N {
        diff[i] = f1[i] - f0[i];
    }
    let d2 = rms_scaled(&diff, y, settings) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(max_step)
}

fn initial_branch(model: &ModelSpec, t: f64, x: f64, v: f64) -> Branch {
    let positive = if x != 0.0 {
        x > 0.0
    } else if v != 0.0 {
        v > 0.0
    } else {
        model.eval_h(t) - model.eval_g(t, 0.0) >= 0.0
    };
    if positive {
        Branch::Positive
    } else {
        Branch::Negative
    }
}

struct Run<const N: usize> {
    y: [f64; N],
    trajectory: Trajectory,
}

fn first_two<const N: usize>(y: &[f64; N]) -> [f64; 2] {
    [y[0], y[1]]
}

fn run<const N: usize, S: System<N>>(
    sys: &S,
    model: &ModelSpec,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    settings: &IntegratorSettings,
    detect_events: bool,
) -> Result<Run<N>> {
    settings.validate()?;
    if !t0.is_finite() || !t_end.is_finite() || t_end < t0 {
        return Err(Error::InvalidArgument(format!(
            "integration interval [{t0}, {t_end}] is empty or not finite"
        )));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { t: t0 });
    }
    let start = PhasePoint::new(t0, y0[0], y0[1]);
    let mut segments = Vec::new();
    let mut events = Vec::new();
    if t_end == t0 {
        return Ok(Run {
            y: y0,
            trajectory: Trajectory {
                start,
                segments,
                events,
            },
        });
    }

    let max_step = settings.max_step_for(model);
    let mut branch = initial_branch(model, t0, y0[0], y0[1]);
    let mut t = t0;
    let mut y = y0;
    let mut k1 = sys.rhs(t, &y, branch);
    let mut h = initial_step(sys, t, &y, &k1, branch, max_step, settings);
    let mut steps = 0usize;
    let mut rejected_last = false;

    while t < t_end {
        steps += 1;
        if steps > settings.max_steps {
            return Err(Error::TooManySteps {
                steps: settings.max_steps,
                t,
            });
        }
        h = h.min(max_step);
        let mut last = false;
        if t + h >= t_end - 1e-14 * t_end.abs().max(1.0) {
            h = t_end - t;
            last = true;
        }
        if h <= 1e-14 * t.abs().max(1.0) && !last {
            return Err(Error::StepUnderflow { t });
        }

        let step = dp_step(sys, t, &y, &k1, h, branch, settings);
        if !step.err.is_finite() || step.y.iter().any(|v| !v.is_finite()) {
            if h <= 1e-14 * t.abs().max(1.0) {
                return Err(Error::NonFinite { t });
            }
            h *= FAC_MIN;
            rejected_last = true;
            continue;
        }
        if step.err > 1.0 {
            h *= (SAFETY * step.err.powf(-0.2)).max(FAC_MIN);
            rejected_last = true;
            if h <= 1e-14 * t.abs().max(1.0) {
                return Err(Error::StepUnderflow { t });
            }
            continue;
        }

        let mut fac = (SAFETY * step.err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX);
        if rejected_last {
            fac = fac.min(1.0);
        }
        rejected_last = false;

        if detect_events {
            if let Some(theta) = crossing_fraction(t, h, &y, &step.y, &k1, &step.f, branch, settings) {
                let (tau, ye, fe) = locate_crossing(sys, t, h, theta, &y, &k1, branch, settings);
                segments.push(Segment {
                    t0: t,
                    t1: tau,
                    y0: first_two(&y),
                    y1: first_two(&ye),
                    f0: first_two(&k1),
                    f1: first_two(&fe),
                });
                events.push(Event {
                    t: tau,
                    direction: match branch {
                        Branch::Positive => Crossing::Downward,
                        Branch::Negative => Crossing::Upward,
                    },
                });
                branch = branch.flipped();
                t = tau;
                y = ye;
                k1 = sys.rhs(t, &y, branch);
                continue;
            }
        }

        let t_next = if last { t_end } else { t + h };
        segments.push(Segment {
            t0: t,
            t1: t_next,
            y0: first_two(&y),
            y1: first_two(&step.y),
            f0: first_two(&k1),
            f1: first_two(&step.f),
        });
        t = t_next;
        y = step.y;
        k1 = step.f;
        h *= fac;
    }

    Ok(Run {
        y,
        trajectory: Trajectory {
            start,
            segments,
            events,
        },
    })
}

/// Fraction of the step at which `x` first leaves the side of `branch`,
/// bisected on the dense output.
#[allow(clippy::too_many_arguments)]
fn crossing_fraction<const N: usize>(
    t: f64,
    h: f64,
    y0: &[f64; N],
    y1: &[f64; N],
    f0: &[f64; N],
    f1: &[f64; N],
    branch: Branch,
    settings: &IntegratorSettings,
) -> Option<f64> {
    let s = branch.sign();
    let (a, b) = (first_two(y0), first_two(y1));
    let (fa, fb) = (first_two(f0), first_two(f1));
    let x_at = |theta: f64| {
        if theta == 1.0 {
            b[0]
        } else {
            hermite(
                0.0,
                1.0,
                &a,
                &b,
                &[fa[0] * h, fa[1] * h],
                &[fb[0] * h, fb[1] * h],
                theta,
            )[0]
        }
    };
    const PROBES: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];
    let mut lo = 0.0;
    let mut hi = None;
    for &p in &PROBES {
        if x_at(p) * s < 0.0 {
            hi = Some(p);
            break;
        }
        lo = p;
    }
    let mut hi = hi?;
    let tol = settings.event_tol * t.abs().max(1.0) / h;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if x_at(mid) * s < 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Steps from `t` to the crossing with the branch frozen, polishing the
/// crossing time by Newton iteration on `x(tau) = 0`.
#[allow(clippy::too_many_arguments)]
fn locate_crossing<const N: usize, S: System<N>>(
    sys: &S,
    t: f64,
    h: f64,
    theta: f64,
    y: &[f64; N],
    k1: &[f64; N],
    branch: Branch,
    settings: &IntegratorSettings,
) -> (f64, [f64; N], [f64; N]) {
    let mut tau = t + theta * h;
    let mut best = dp_step(sys, t, y, k1, tau - t, branch, settings);
    let mut best_tau = tau;
    for _ in 0..MAX_EVENT_ITERS {
        let x = best.y[0];
        if x.abs() <= EVENT_X_TOL {
            break;
        }
        let next = tau - x / best.y[1];
        if !next.is_finite() || next <= t || next > t + h || next == tau {
            break;
        }
        tau = next;
        let trial = dp_step(sys, t, y, k1, tau - t, branch, settings);
        if trial.y[0].abs() >= best.y[0].abs() {
            break;
        }
        best = trial;
        best_tau = tau;
    }
    (best_tau, best.y, best.f)
}

/// Integrates `x' = v, v' = h(t) - c v - g(t, x)` from `start` to `t_end`.
pub fn integrate(
    model: &ModelSpec,
    start: PhasePoint,
    t_end: f64,
    settings: &IntegratorSettings,
) -> Result<Trajectory> {
    let out = run(
        &Oscillator(model),
        model,
        start.t,
        start.state(),
        t_end,
        settings,
        model.is_piecewise(),
    )?;
    Ok(out.trajectory)
}

/// Integrates the oscillator together with `M' = A(t) M`, `M(start.t) = I`,
/// where `A = [[0, 1], [-g_x(t, x(t)), -c]]`.
pub fn integrate_with_sensitivity(
    model: &ModelSpec,
    start: PhasePoint,
    t_end: f64,
    settings: &IntegratorSettings,
) -> Result<(Trajectory, VariationalState)> {
    let y0 = [start.x, start.v, 1.0, 0.0, 0.0, 1.0];
    let out = run(
        &Variational(model),
        model,
        start.t,
        y0,
        t_end,
        settings,
        model.is_piecewise(),
    )?;
    let end = out.trajectory.end();
    let state = VariationalState {
        base: PhasePoint::new(end.t, out.y[0], out.y[1]),
        m: matrix_from_state(&out.y),
    };
    Ok((out.trajectory, state))
}

pub fn integrate_variational(
    model: &ModelSpec,
    start: PhasePoint,
    t_end: f64,
    settings: &IntegratorSettings,
) -> Result<VariationalState> {
    integrate_with_sensitivity(model, start, t_end, settings).map(|(_, s)| s)
}

/// Fundamental matrix of the linearization about `x = 0`, that is of
/// `y'' + c y' + g_x(t, 0) y = 0`, over `[t0, t_end]`.
pub fn linearized_flow_about_zero(
    model: &ModelSpec,
    t0: f64,
    t_end: f64,
    settings: &IntegratorSettings,
) -> Result<Matrix2<f64>> {
    let y0 = [0.0, 0.0, 1.0, 0.0, 0.0, 1.0];
    let out = run(&ZeroLinearization(model), model, t0, y0, t_end, settings, false)?;
    Ok(matrix_from_state(&out.y))
}

fn matrix_from_state(y: &[f64; 6]) -> Matrix2<f64> {
    Matrix2::new(y[2], y[4], y[3], y[5])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets::*;
    use std::f64::consts::PI;

    fn damped_closed_form(c: f64, k: f64, t: f64) -> (f64, f64) {
        // x(0) = 1, x'(0) = 0 for c^2 < 4k
        let a = c / 2.0;
        let w = (k - a * a).sqrt();
        let e = (-a * t).exp();
        let x = e * ((w * t).cos() + (a / w) * (w * t).sin());
        let v = -e * (k / w) * (w * t).sin();
        (x, v)
    }

    #[test]
    fn harmonic_oscillator_half_period() {
        let m = linear(0.0, 1.0, 0.0);
        let tr = integrate(&m, PhasePoint::new(0.0, 1.0, 0.0), PI, &IntegratorSettings::default()).unwrap();
        let end = tr.end();
        assert_eq!(end.t, PI);
        assert!((end.x + 1.0).abs() < 1e-9, "{end:?}");
        assert!(end.v.abs() < 1e-9);
        let mid = tr.interpolate(PI / 2.0).unwrap();
        assert!(mid.x.abs() < 1e-8, "{mid:?}");
    }

    #[test]
    fn damped_linear_closed_form() {
        let m = linear(1.0, 0.34, 0.0);
        let t_end = 2.0 * PI;
        let tr = integrate(
            &m,
            PhasePoint::new(0.0, 1.0, 0.0),
            t_end,
            &IntegratorSettings::default(),
        )
        .unwrap();
        let expected = (-PI).exp() * ((0.6 * PI).cos() + (0.5 / 0.3) * (0.6 * PI).sin());
        let (x, v) = damped_closed_form(1.0, 0.34, t_end);
        assert!((x - expected).abs() < 1e-15);
        assert!((tr.end().x - x).abs() < 1e-9);
        assert!((tr.end().v - v).abs() < 1e-9);
    }

    #[test]
    fn tolerance_monotonicity() {
        let pairs = [(1.0, 0.34), (0.5, 0.2), (0.2, 1.0), (1.0, 2.0), (0.1, 0.5)];
        for (c, k) in pairs {
            let m = linear(c, k, 0.0);
            let (x, v) = damped_closed_form(c, k, 10.0);
            let mut prev = f64::INFINITY;
            for (rtol, atol) in [(1e-6, 1e-8), (5e-7, 5e-9), (1e-8, 1e-10), (5e-9, 5e-11)] {
                let s = IntegratorSettings::with_tolerances(rtol, atol);
                let end = integrate(&m, PhasePoint::new(0.0, 1.0, 0.0), 10.0, &s).unwrap().end();
                let err = (end.x - x).abs().max((end.v - v).abs());
                assert!(err <= prev * 1.05, "c={c} k={k} rtol={rtol}: {err} > {prev}");
                prev = err;
            }
        }
    }

    #[test]
    fn endpoints_are_exact() {
        let m = sine_perturbed(0.5, 0.2, 0.05, 0.1);
        let tr = integrate(&m, PhasePoint::new(0.0, 0.3, -0.2), 7.0, &IntegratorSettings::default()).unwrap();
        for seg in tr.segments() {
            let p = tr.interpolate(seg.t1).unwrap();
            assert_eq!([p.x, p.v], seg.y1);
        }
        assert_eq!(tr.interpolate(0.0).unwrap(), PhasePoint::new(0.0, 0.3, -0.2));
        assert!(matches!(tr.interpolate(7.5), Err(Error::OutOfRange { .. })));
        assert!(matches!(tr.interpolate(-0.1), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn zero_length_is_identity() {
        let m = piecewise(1.0, 0.45, 0.3, 1.0);
        let s = integrate_variational(&m, PhasePoint::new(1.0, 0.5, 0.1), 1.0, &IntegratorSettings::default()).unwrap();
        assert_eq!(s.m, Matrix2::identity());
        assert_eq!(s.base, PhasePoint::new(1.0, 0.5, 0.1));
        assert!(integrate(&m, PhasePoint::new(1.0, 0.5, 0.1), 0.5, &IntegratorSettings::default()).is_err());
    }

    #[test]
    fn jacobi_liouville_linear() {
        let m = linear(1.0, 0.34, 0.0);
        let s = integrate_variational(&m, PhasePoint::origin(), 2.0 * PI, &IntegratorSettings::default()).unwrap();
        let expected = (-2.0 * PI).exp();
        assert!((expected - 1.867442e-3).abs() < 1e-9);
        assert!((s.m.determinant() / expected - 1.0).abs() < 1e-8);
    }

    /// Fixed-step classical RK4 evaluating the raw piecewise field.
    fn rk4_reference(m: &ModelSpec, x0: f64, v0: f64, t_end: f64, h: f64) -> (f64, f64) {
        let f = |t: f64, x: f64, v: f64| (v, m.eval_h(t) - m.damping() * v - m.eval_g(t, x));
        let n = (t_end / h).round() as usize;
        let h = t_end / n as f64;
        let (mut x, mut v) = (x0, v0);
        for i in 0..n {
            let t = i as f64 * h;
            let (a1, b1) = f(t, x, v);
            let (a2, b2) = f(t + h / 2.0, x + h / 2.0 * a1, v + h / 2.0 * b1);
            let (a3, b3) = f(t + h / 2.0, x + h / 2.0 * a2, v + h / 2.0 * b2);
            let (a4, b4) = f(t + h, x + h * a3, v + h * b3);
            x += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
            v += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
        }
        (x, v)
    }

    #[test]
    fn piecewise_events_alternate_and_match_rk4() {
        let m = piecewise(1.0, 0.45, 0.3, 0.0);
        let tr = integrate(&m, PhasePoint::new(0.0, 1.0, 0.0), 20.0, &IntegratorSettings::default()).unwrap();
        let ev = tr.events();
        assert!(ev.len() >= 2, "{} events", ev.len());
        assert_eq!(ev[0].direction, Crossing::Downward);
        for w in ev.windows(2) {
            assert_ne!(w[0].direction, w[1].direction);
            assert!(w[1].t > w[0].t);
        }
        for e in ev {
            let p = tr.interpolate(e.t).unwrap();
            assert!(p.x.abs() <= 1e-11, "x({}) = {}", e.t, p.x);
            let before = tr.interpolate(e.t - 1e-3).unwrap().x;
            let after = tr.interpolate(e.t + 1e-3).unwrap().x;
            assert!(before * after < 0.0);
        }
        // continuity of the interpolant across each event
        for w in tr.segments().windows(2) {
            assert_eq!(w[0].t1, w[1].t0);
            assert_eq!(w[0].y1, w[1].y0);
        }
        let (x, v) = rk4_reference(&m, 1.0, 0.0, 20.0, 1e-4);
        let end = tr.end();
        assert!((end.x - x).abs() < 1e-8, "{} vs {x}", end.x);
        assert!((end.v - v).abs() < 1e-8);
    }

    #[test]
    fn deterministic() {
        let m = piecewise(1.0, 0.45, 0.3, 1.0);
        let s = IntegratorSettings::default();
        let a = integrate(&m, PhasePoint::new(0.0, 0.2, 0.1), 30.0, &s).unwrap();
        let b = integrate(&m, PhasePoint::new(0.0, 0.2, 0.1), 30.0, &s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn blow_up_is_reported() {
        // x'' = x^3 escapes to infinity in finite time
        use crate::model::{ForcingSeries, PolyTerm, RestoringForce};
        let m = ModelSpec::new(
            "blowup",
            0.0,
            1.0,
            RestoringForce::PolyFourier {
                terms: vec![PolyTerm {
                    power: 3,
                    coeff: ForcingSeries::constant(1.0, -1.0).unwrap(),
                }],
            },
            ForcingSeries::constant(1.0, 0.0).unwrap(),
        )
        .unwrap();
        let err = integrate(&m, PhasePoint::new(0.0, 10.0, 0.0), 5.0, &IntegratorSettings::default()).unwrap_err();
        assert!(
            matches!(
                err,
                Error::StepUnderflow { .. } | Error::NonFinite { .. } | Error::TooManySteps { .. }
            ),
            "{err}"
        );
    }

    #[test]
    fn settings_validation() {
        assert!(IntegratorSettings::with_tolerances(1e-15, 1e-12).validate().is_err());
        assert!(IntegratorSettings::with_tolerances(1e-10, 0.0).validate().is_err());
        assert!(IntegratorSettings::default().validate().is_ok());
    }
}
