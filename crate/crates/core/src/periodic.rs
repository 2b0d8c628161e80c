//! Periodic solutions as fixed points of the Poincaré map `P: X -> X(T; X)`,
//! found by damped Newton shooting, and the decay rate of nearby solutions
//! measured from Poincaré iterates.

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floquet::{floquet_from_matrix, FloquetData, INDEX_TOL};
use crate::integrate::{integrate, integrate_with_sensitivity, IntegratorSettings, PhasePoint, Trajectory};
use crate::model::ModelSpec;

pub const RESIDUAL_TOL: f64 = 1e-10;
pub const STEP_TOL: f64 = 1e-11;
pub const MAX_NEWTON_ITERS: usize = 50;
pub const MAX_HALVINGS: u32 = 10;
/// Fixed points closer than this (max norm) are the same orbit.
pub const CLUSTER_RADIUS: f64 = 1e-6;
/// Iterates whose distance to the orbit lies in this range enter the
/// decay-rate regression.
pub const DECAY_WINDOW: (f64, f64) = (1e-10, 1e-3);
pub const DECAY_MIN_POINTS: usize = 4;
pub const DECAY_RETRIES: usize = 3;
const MAX_ITERATES: usize = 2000;
/// An iterate this many times farther out than the initial offset counts as
/// divergence.
const DIVERGENCE_FACTOR: f64 = 100.0;

/// Image of a point under the period map and the Jacobian of the map there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoincareImage {
    pub point: PhasePoint,
    pub jacobian: Matrix2<f64>,
}

/// `P(X)` and `DP(X)`; `X` is taken at `t = 0`.
pub fn poincare_map(model: &ModelSpec, x: PhasePoint, settings: &IntegratorSettings) -> Result<PoincareImage> {
    poincare_with_trajectory(model, [x.x, x.v], settings).map(|(img, _)| img)
}

fn poincare_with_trajectory(
    model: &ModelSpec,
    x: [f64; 2],
    settings: &IntegratorSettings,
) -> Result<(PoincareImage, Trajectory)> {
    let start = PhasePoint::new(0.0, x[0], x[1]);
    let (trajectory, state) = integrate_with_sensitivity(model, start, model.period(), settings)?;
    Ok((
        PoincareImage {
            point: state.base,
            jacobian: state.m,
        },
        trajectory,
    ))
}

/// `P(X)` without the variational equation.
pub fn poincare_point(model: &ModelSpec, x: [f64; 2], settings: &IntegratorSettings) -> Result<[f64; 2]> {
    let end = integrate(model, PhasePoint::new(0.0, x[0], x[1]), model.period(), settings)?.end();
    Ok([end.x, end.v])
}

fn max_norm(v: &Vector2<f64>) -> f64 {
    v[0].abs().max(v[1].abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicOrbit {
    /// The fixed point, at `t = 0`.
    pub x0: PhasePoint,
    /// `|P(x0) - x0|` in the max norm.
    pub residual: f64,
    /// The orbit over one period.
    pub samples: Trajectory,
    /// Multipliers of the linearization about the orbit.
    pub floquet: FloquetData,
    pub jacobian: Matrix2<f64>,
    pub iterations: usize,
}

struct Evaluation {
    x: Vector2<f64>,
    image: PoincareImage,
    trajectory: Trajectory,
    residual: f64,
}

fn evaluate(model: &ModelSpec, x: Vector2<f64>, settings: &IntegratorSettings) -> Result<Evaluation> {
    let (image, trajectory) = poincare_with_trajectory(model, [x[0], x[1]], settings)?;
    let g = Vector2::new(image.point.x, image.point.v) - x;
    Ok(Evaluation {
        x,
        image,
        trajectory,
        residual: max_norm(&g),
    })
}

/// Newton iteration on `G(X) = P(X) - X` with Jacobian `DP - I` and step
/// halving whenever the residual grows.
pub fn find_periodic(model: &ModelSpec, guess: PhasePoint, settings: &IntegratorSettings) -> Result<PeriodicOrbit> {
    let mut cur = evaluate(model, Vector2::new(guess.x, guess.v), settings)?;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_NEWTON_ITERS {
        let jac = cur.image.jacobian - Matrix2::identity();
        let det = jac.determinant();
        if det.abs() <= INDEX_TOL {
            return Err(Error::SingularJacobian { det });
        }
        let g = Vector2::new(cur.image.point.x, cur.image.point.v) - cur.x;
        let step = -(jac.try_inverse().ok_or(Error::SingularJacobian { det })? * g);
        let small_step = max_norm(&step) <= STEP_TOL * (1.0 + max_norm(&cur.x));
        if cur.residual <= RESIDUAL_TOL && small_step {
            converged = true;
            break;
        }
        iterations += 1;

        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = evaluate(model, cur.x + step * lambda, settings);
            match trial {
                Ok(t) if t.residual < cur.residual => {
                    accepted = Some(t);
                    break;
                }
                _ => lambda *= 0.5,
            }
        }
        match accepted {
            Some(next) => cur = next,
            // no decrease along the Newton direction: at the noise floor of
            // the integrator if the residual is already small
            None if cur.residual <= RESIDUAL_TOL => {
                converged = true;
                break;
            }
            None => {
                return Err(Error::NoConvergence {
                    iterations,
                    residual: cur.residual,
                })
            }
        }
    }
    if !converged && cur.residual > RESIDUAL_TOL {
        return Err(Error::NoConvergence {
            iterations,
            residual: cur.residual,
        });
    }

    let floquet = floquet_from_matrix(&cur.image.jacobian, model.period());
    Ok(PeriodicOrbit {
        x0: PhasePoint::new(0.0, cur.x[0], cur.x[1]),
        residual: cur.residual,
        samples: cur.trajectory,
        floquet,
        jacobian: cur.image.jacobian,
        iterations,
    })
}

/// Axis-aligned rectangle in the `(x, v)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseBox {
    pub x: (f64, f64),
    pub v: (f64, f64),
}

impl PhaseBox {
    pub fn square(lo: f64, hi: f64) -> Self {
        Self {
            x: (lo, hi),
            v: (lo, hi),
        }
    }

    /// `m x m` grid including the corners, row-major in `v` then `x`.
    pub fn grid(&self, m: usize) -> Vec<[f64; 2]> {
        let lerp = |(a, b): (f64, f64), i: usize| {
            if m == 1 {
                0.5 * (a + b)
            } else {
                a + (b - a) * i as f64 / (m - 1) as f64
            }
        };
        (0..m)
            .flat_map(|j| (0..m).map(move |i| [lerp(self.x, i), lerp(self.v, j)]))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StartOutcome {
    Converged {
        cluster: usize,
        x: f64,
        v: f64,
        residual: f64,
        iterations: usize,
    },
    Failed {
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeStart {
    pub guess: [f64; 2],
    pub outcome: StartOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitCluster {
    pub x0: PhasePoint,
    pub residual: f64,
    pub members: usize,
    pub floquet: FloquetData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub grid: usize,
    pub region: PhaseBox,
    pub starts: Vec<ProbeStart>,
    pub clusters: Vec<OrbitCluster>,
}

impl UniquenessReport {
    pub fn converged(&self) -> usize {
        self.starts
            .iter()
            .filter(|s| matches!(s.outcome, StartOutcome::Converged { .. }))
            .count()
    }
}

/// Runs [`find_periodic`] from every node of an `m x m` grid and clusters
/// the fixed points found. Starts run in parallel; the report is assembled
/// in grid order.
pub fn uniqueness_probe(
    model: &ModelSpec,
    region: PhaseBox,
    m: usize,
    settings: &IntegratorSettings,
) -> Result<UniquenessReport> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "probe grid must be at least 2x2, got {m}"
        )));
    }
    let guesses = region.grid(m);
    let results: Vec<Result<PeriodicOrbit>> = guesses
        .par_iter()
        .map(|g| find_periodic(model, PhasePoint::new(0.0, g[0], g[1]), settings))
        .collect();

    let mut clusters: Vec<OrbitCluster> = Vec::new();
    let mut starts = Vec::with_capacity(guesses.len());
    for (guess, result) in guesses.into_iter().zip(results) {
        let outcome = match result {
            Ok(orbit) => {
                let idx = match clusters.iter().position(|c| c.x0.distance(&orbit.x0) <= CLUSTER_RADIUS) {
                    Some(i) => {
                        clusters[i].members += 1;
                        i
                    }
                    None => {
                        clusters.push(OrbitCluster {
                            x0: orbit.x0,
                            residual: orbit.residual,
                            members: 1,
                            floquet: orbit.floquet,
                        });
                        clusters.len() - 1
                    }
                };
                StartOutcome::Converged {
                    cluster: idx,
                    x: orbit.x0.x,
                    v: orbit.x0.v,
                    residual: orbit.residual,
                    iterations: orbit.iterations,
                }
            }
            Err(e) => StartOutcome::Failed { message: e.to_string() },
        };
        starts.push(ProbeStart { guess, outcome });
    }
    Ok(UniquenessReport {
        grid: m,
        region,
        starts,
        clusters,
    })
}

/// Exponential approach rate of Poincaré iterates to a periodic orbit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayEstimate {
    /// Minus the fitted slope of `ln |P^n X - X0|` against `n T`; positive
    /// means decaying.
    pub rate: f64,
    pub stderr: f64,
    pub points_used: usize,
    /// Smallest and largest distance that entered the fit.
    pub window: (f64, f64),
    /// Offset actually used after retries.
    pub offset: [f64; 2],
    /// `P^n X - X0` for `n = 0, 1, ...` as far as iterated.
    pub iterates: Vec<[f64; 2]>,
}

enum IterateFailure {
    Diverged,
    Fatal(Error),
}

/// Iterates the Poincaré map from `orbit.x0 + d0` and fits the decay rate by
/// least squares. On divergence the offset is divided by 10, up to
/// [`DECAY_RETRIES`] times.
pub fn decay_rate_iterates(
    model: &ModelSpec,
    orbit: &PeriodicOrbit,
    d0: [f64; 2],
    settings: &IntegratorSettings,
) -> Result<DecayEstimate> {
    if d0[0] == 0.0 && d0[1] == 0.0 || !d0.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument(
            "initial offset must be nonzero and finite".into(),
        ));
    }
    let mut offset = d0;
    for _ in 0..=DECAY_RETRIES {
        match iterate_offsets(model, orbit, offset, settings) {
            Ok(iterates) => return fit_decay(model.period(), offset, iterates),
            Err(IterateFailure::Diverged) => offset = [offset[0] / 10.0, offset[1] / 10.0],
            Err(IterateFailure::Fatal(e)) => return Err(e),
        }
    }
    Err(Error::Diverged { retries: DECAY_RETRIES })
}

fn iterate_offsets(
    model: &ModelSpec,
    orbit: &PeriodicOrbit,
    offset: [f64; 2],
    settings: &IntegratorSettings,
) -> std::result::Result<Vec<[f64; 2]>, IterateFailure> {
    let center = [orbit.x0.x, orbit.x0.v];
    let start = offset[0].abs().max(offset[1].abs());
    let mut x = [center[0] + offset[0], center[1] + offset[1]];
    let mut out = vec![offset];
    for _ in 0..MAX_ITERATES {
        x = match poincare_point(model, x, settings) {
            Ok(p) => p,
            Err(Error::StepUnderflow { .. } | Error::NonFinite { .. } | Error::TooManySteps { .. }) => {
                return Err(IterateFailure::Diverged)
            }
            Err(e) => return Err(IterateFailure::Fatal(e)),
        };
        let d = [x[0] - center[0], x[1] - center[1]];
        let dist = d[0].abs().max(d[1].abs());
        if !dist.is_finite() || dist > DIVERGENCE_FACTOR * start {
            return Err(IterateFailure::Diverged);
        }
        out.push(d);
        if dist < DECAY_WINDOW.0 {
            break;
        }
    }
    Ok(out)
}

fn fit_decay(period: f64, offset: [f64; 2], iterates: Vec<[f64; 2]>) -> Result<DecayEstimate> {
    let (lo, hi) = DECAY_WINDOW;
    let points: Vec<(f64, f64)> = iterates
        .iter()
        .enumerate()
        .filter_map(|(n, d)| {
            let dist = d[0].abs().max(d[1].abs());
            (dist >= lo && dist <= hi * (1.0 + 1e-12)).then_some((n as f64 * period, dist))
        })
        .collect();
    if points.len() < DECAY_MIN_POINTS {
        return Err(Error::TooFewPoints {
            found: points.len(),
            needed: DECAY_MIN_POINTS,
        });
    }
    let (slope, stderr) = least_squares_slope(points.iter().map(|&(t, d)| (t, d.ln())));
    let window = points
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &(_, d)| (a.min(d), b.max(d)));
    Ok(DecayEstimate {
        rate: -slope,
        stderr,
        points_used: points.len(),
        window,
        offset,
        iterates,
    })
}

/// Ordinary least-squares slope and its standard error.
fn least_squares_slope(points: impl Iterator<Item = (f64, f64)> + Clone) -> (f64, f64) {
    let n = points.clone().count() as f64;
    let (sx, sy) = points.clone().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let (sxx, sxy) = points.clone().fold((0.0, 0.0), |(a, b), (x, y)| {
        (a + (x - mx).powi(2), b + (x - mx) * (y - my))
    });
    let slope = sxy / sxx;
    let ssr: f64 = points.map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    let stderr = if n > 2.0 {
        (ssr / (n - 2.0) / sxx).sqrt()
    } else {
        f64::INFINITY
    };
    (slope, stderr)
}

/// `|P(X0 + d) - X0 - DP d|` in the max norm.
pub fn linearization_remainder(
    model: &ModelSpec,
    orbit: &PeriodicOrbit,
    d: [f64; 2],
    settings: &IntegratorSettings,
) -> Result<f64> {
    let p = poincare_point(model, [orbit.x0.x + d[0], orbit.x0.v + d[1]], settings)?;
    let lin = orbit.jacobian * Vector2::new(d[0], d[1]);
    let r = Vector2::new(p[0] - orbit.x0.x - lin[0], p[1] - orbit.x0.v - lin[1]);
    Ok(max_norm(&r))
}

/// `K = |P(X0 + s d) - X0 - DP s d| / |s d|^2` for each scale `s`; roughly
/// constant when `P` is twice differentiable at the orbit.
pub fn remainder_constants(
    model: &ModelSpec,
    orbit: &PeriodicOrbit,
    direction: [f64; 2],
    scales: &[f64],
    settings: &IntegratorSettings,
) -> Result<Vec<f64>> {
    let norm = direction[0].abs().max(direction[1].abs());
    scales
        .iter()
        .map(|&s| {
            let d = [direction[0] * s, direction[1] * s];
            Ok(linearization_remainder(model, orbit, d, settings)? / (norm * s).powi(2))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::floquet::{monodromy, Classification, Reference};
    use crate::model::presets::*;

    fn settings() -> IntegratorSettings {
        IntegratorSettings::default()
    }

    /// Particular solution of `x'' + c x' + k x = cos t`.
    fn forced_linear_x0(c: f64, k: f64) -> (f64, f64) {
        let den = (k - 1.0).powi(2) + c * c;
        ((k - 1.0) / den, c / den)
    }

    #[test]
    fn equilibrium_is_fixed() {
        let m = linear(1.0, 0.34, 0.0);
        let img = poincare_map(&m, PhasePoint::origin(), &settings()).unwrap();
        assert_eq!([img.point.x, img.point.v], [0.0, 0.0]);
        let mono = monodromy(&m, Reference::Zero, &settings()).unwrap();
        assert!((img.jacobian - mono.m).abs().max() < 1e-12);
        let orbit = find_periodic(&m, PhasePoint::origin(), &settings()).unwrap();
        assert_eq!(orbit.residual, 0.0);
        assert_eq!(orbit.x0, PhasePoint::origin());
    }

    #[test]
    fn forced_linear_map_is_affine() {
        let m = linear(1.0, 0.34, 1.0);
        let mono = monodromy(&m, Reference::Zero, &settings()).unwrap();
        let pts = [[0.3, -0.2], [1.5, 0.7], [-2.0, 0.1], [0.0, 1.0]];
        for a in pts {
            for b in pts {
                let pa = poincare_point(&m, a, &settings()).unwrap();
                let pb = poincare_point(&m, b, &settings()).unwrap();
                let lin = mono.m * Vector2::new(a[0] - b[0], a[1] - b[1]);
                assert!((pa[0] - pb[0] - lin[0]).abs() < 1e-8);
                assert!((pa[1] - pb[1] - lin[1]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn forced_linear_closed_form_orbit() {
        let m = linear(1.0, 0.34, 1.0);
        let orbit = find_periodic(&m, PhasePoint::origin(), &settings()).unwrap();
        let (x, v) = forced_linear_x0(1.0, 0.34);
        assert!((x - -0.459738).abs() < 1e-6 && (v - 0.696573).abs() < 1e-6);
        assert!((orbit.x0.x - x).abs() < 1e-9, "{:?}", orbit.x0);
        assert!((orbit.x0.v - v).abs() < 1e-9);
        assert!(orbit.residual <= RESIDUAL_TOL);
        let end = orbit.samples.end();
        assert!((end.x - orbit.x0.x).abs() < 1e-9 && (end.v - orbit.x0.v).abs() < 1e-9);
        assert_eq!(orbit.floquet.classification, Classification::ComplexPair);
    }

    #[test]
    fn sine_perturbed_orbit() {
        let m = sine_perturbed(0.5, 0.2, 0.05, 0.1);
        let orbit = find_periodic(&m, PhasePoint::origin(), &settings()).unwrap();
        assert!(orbit.residual <= RESIDUAL_TOL);
        assert_eq!(orbit.floquet.classification, Classification::ComplexPair);
        assert!((orbit.floquet.decay_rate - 0.25).abs() < 1e-6);
        // fixed-point contract from scratch
        let p = poincare_point(&m, [orbit.x0.x, orbit.x0.v], &settings()).unwrap();
        assert!((p[0] - orbit.x0.x).abs().max((p[1] - orbit.x0.v).abs()) <= RESIDUAL_TOL);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let m = sine_perturbed(0.5, 0.2, 0.05, 0.1);
        let x = [0.4, -0.3];
        let img = poincare_map(&m, PhasePoint::new(0.0, x[0], x[1]), &settings()).unwrap();
        let h = 1e-6;
        for j in 0..2 {
            let mut a = x;
            let mut b = x;
            a[j] += h;
            b[j] -= h;
            let pa = poincare_point(&m, a, &settings()).unwrap();
            let pb = poincare_point(&m, b, &settings()).unwrap();
            for i in 0..2 {
                let fd = (pa[i] - pb[i]) / (2.0 * h);
                assert!(
                    (fd - img.jacobian[(i, j)]).abs() < 1e-6,
                    "({i},{j}) {fd} vs {}",
                    img.jacobian[(i, j)]
                );
            }
        }
    }

    #[test]
    fn unstable_orbit_still_found() {
        let m = linear(1.0, -0.5, 1.0);
        let orbit = find_periodic(&m, PhasePoint::new(0.0, 1.0, 1.0), &settings()).unwrap();
        let (x, v) = forced_linear_x0(1.0, -0.5);
        assert!((orbit.x0.x - x).abs() < 1e-9 && (orbit.x0.v - v).abs() < 1e-9);
        assert!(!orbit.floquet.is_stable());
        let est = decay_rate_iterates(&m, &orbit, [1e-3, 0.0], &settings());
        assert!(matches!(est, Err(Error::Diverged { retries: 3 })), "{est:?}");
    }

    #[test]
    fn degenerate_orbit_is_singular() {
        // k = 0, c = 0: every constant is 2 pi periodic, multiplier 1 twice
        let m = linear(0.0, 0.0, 0.0);
        let err = find_periodic(&m, PhasePoint::new(0.0, 0.5, 0.0), &settings()).unwrap_err();
        assert!(matches!(err, Error::SingularJacobian { .. }), "{err}");
    }

    #[test]
    fn grid_layout() {
        let g = PhaseBox::square(-2.0, 2.0).grid(3);
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], [-2.0, -2.0]);
        assert_eq!(g[1], [0.0, -2.0]);
        assert_eq!(g[8], [2.0, 2.0]);
    }

    #[test]
    fn probe_linear_single_cluster() {
        let m = linear(1.0, 0.34, 1.0);
        let rep = uniqueness_probe(&m, PhaseBox::square(-3.0, 3.0), 2, &settings()).unwrap();
        assert_eq!(rep.clusters.len(), 1);
        assert_eq!(rep.converged(), 4);
        let (x, v) = forced_linear_x0(1.0, 0.34);
        assert!((rep.clusters[0].x0.x - x).abs() < 1e-9 && (rep.clusters[0].x0.v - v).abs() < 1e-9);
        assert!(uniqueness_probe(&m, PhaseBox::square(-1.0, 1.0), 1, &settings()).is_err());
    }

    #[test]
    fn decay_of_forced_linear() {
        let m = linear(1.0, 0.34, 1.0);
        let orbit = find_periodic(&m, PhasePoint::origin(), &settings()).unwrap();
        let est = decay_rate_iterates(&m, &orbit, [1e-3, 0.0], &settings()).unwrap();
        assert!(est.points_used >= DECAY_MIN_POINTS);
        assert!((est.rate - 0.5).abs() <= 0.02 * 0.5, "{est:?}");
        assert!(est.window.0 >= DECAY_WINDOW.0 && est.window.1 <= DECAY_WINDOW.1 * (1.0 + 1e-12));
    }

    #[test]
    fn regression_slope() {
        let pts = (0..5).map(|i| (i as f64, 3.0 - 0.25 * i as f64));
        let (s, e) = least_squares_slope(pts);
        assert!((s + 0.25).abs() < 1e-14);
        assert!(e < 1e-12);
    }

    #[test]
    fn iterates_spiral_for_complex_pair() {
        let m = sine_perturbed(0.5, 0.2, 0.05, 0.1);
        let orbit = find_periodic(&m, PhasePoint::origin(), &settings()).unwrap();
        let est = decay_rate_iterates(&m, &orbit, [1e-3, 0.0], &settings()).unwrap();
        let angles: Vec<f64> = est.iterates.iter().take(6).map(|d| d[1].atan2(d[0])).collect();
        let turns = angles.windows(2).filter(|w| (w[1] - w[0]).abs() > 1e-2).count();
        assert!(turns >= 4, "{angles:?}");
    }
}
