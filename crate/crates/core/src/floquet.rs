//! Monodromy matrices, Floquet multipliers and exponents, Hill
//! discriminants and the stability bounds that go with them.

use std::f64::consts::PI;

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{integrate_with_sensitivity, linearized_flow_about_zero, IntegratorSettings, PhasePoint};
use crate::model::{presets, ModelSpec};

/// `|tr^2 - 4 det| <= DISC_TOL * max(1, tr^2)` is a double multiplier.
pub const DISC_TOL: f64 = 1e-8;
/// `|det(I - M)|` below this is a degenerate fixed point (index 0).
pub const INDEX_TOL: f64 = 1e-9;
/// Largest periodicity defect accepted for an orbit reference.
pub const REFERENCE_RESIDUAL_TOL: f64 = 1e-8;

/// The solution the linearization is taken about.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reference {
    /// The zero function; for models linear in `x` this gives the
    /// monodromy of every solution.
    Zero,
    /// The periodic orbit through this point at `t = 0`.
    Orbit { x: f64, v: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monodromy {
    pub m: Matrix2<f64>,
    pub period: f64,
    pub c: f64,
    pub about: Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    ComplexPair,
    RealDistinct,
    RealDouble,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::ComplexPair => "ComplexPair",
            Classification::RealDistinct => "RealDistinct",
            Classification::RealDouble => "RealDouble",
        }
    }
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloquetData {
    pub trace: f64,
    pub det: f64,
    /// Ordered by decreasing modulus; for a complex pair the first has
    /// positive imaginary part.
    pub multipliers: [Complex64; 2],
    /// `mu = exp(T lambda)` with `Im lambda` in `(-pi/T, pi/T]`.
    pub exponents: [Complex64; 2],
    pub classification: Classification,
    /// `|mu_1|`, the spectral radius.
    pub modulus: f64,
    /// `-max Re lambda`.
    pub decay_rate: f64,
    /// Brouwer index `sign det(I - M)`, 0 when degenerate.
    pub index: i8,
}

impl FloquetData {
    pub fn moduli(&self) -> [f64; 2] {
        [self.multipliers[0].norm(), self.multipliers[1].norm()]
    }

    /// Asymptotic stability: both multipliers inside the unit circle.
    pub fn is_stable(&self) -> bool {
        self.moduli().iter().all(|&r| r < 1.0)
    }
}

/// Period map of the linearized equation about `about`.
pub fn monodromy(model: &ModelSpec, about: Reference, settings: &IntegratorSettings) -> Result<Monodromy> {
    let period = model.period();
    let m = match about {
        Reference::Zero => linearized_flow_about_zero(model, 0.0, period, settings)?,
        Reference::Orbit { x, v } => {
            let start = PhasePoint::new(0.0, x, v);
            let (_, state) = integrate_with_sensitivity(model, start, period, settings)?;
            let residual = state.base.distance(&start);
            if residual > REFERENCE_RESIDUAL_TOL {
                return Err(Error::InvalidArgument(format!(
                    "reference orbit is not {period}-periodic (residual {residual:e})"
                )));
            }
            state.m
        }
    };
    Ok(Monodromy {
        m,
        period,
        c: model.damping(),
        about,
    })
}

pub fn floquet_data(mono: &Monodromy) -> FloquetData {
    floquet_from_matrix(&mono.m, mono.period)
}

/// Multipliers as roots of `mu^2 - tr mu + det = 0`.
pub fn floquet_from_matrix(m: &Matrix2<f64>, period: f64) -> FloquetData {
    let trace = m.trace();
    let det = m.determinant();
    let disc = trace * trace - 4.0 * det;
    let (classification, multipliers) = if disc.abs() <= DISC_TOL * (trace * trace).max(1.0) {
        let mu = Complex64::new(trace / 2.0, 0.0);
        (Classification::RealDouble, [mu, mu])
    } else if disc < 0.0 {
        let im = (-disc).sqrt() / 2.0;
        (
            Classification::ComplexPair,
            [Complex64::new(trace / 2.0, im), Complex64::new(trace / 2.0, -im)],
        )
    } else {
        // avoid cancellation in the smaller root
        let s = disc.sqrt();
        let big = 0.5 * (trace + s.copysign(trace));
        let small = if big != 0.0 { det / big } else { 0.0 };
        (
            Classification::RealDistinct,
            [Complex64::new(big, 0.0), Complex64::new(small, 0.0)],
        )
    };
    let exponents = multipliers.map(|mu| principal_log(mu) / period);
    let decay_rate = -exponents[0].re.max(exponents[1].re);
    let d = 1.0 - trace + det;
    let index = if d.abs() <= INDEX_TOL {
        0
    } else if d > 0.0 {
        1
    } else {
        -1
    };
    FloquetData {
        trace,
        det,
        multipliers,
        exponents,
        classification,
        modulus: multipliers[0].norm(),
        decay_rate,
        index,
    }
}

fn principal_log(mu: Complex64) -> Complex64 {
    // -0.0 imaginary parts would select the -pi branch
    let mu = if mu.im == 0.0 { Complex64::new(mu.re, 0.0) } else { mu };
    Complex64::new(mu.norm().ln(), mu.arg())
}

/// Hill discriminant `y1(T) + y2'(T)` of the undamped equation
/// `y'' + (g_x - c^2/4) y = 0` associated with a model linear in `x`.
pub fn discriminant(model: &ModelSpec, settings: &IntegratorSettings) -> Result<f64> {
    let undamped = model.undamped_linear_part()?;
    let m = linearized_flow_about_zero(&undamped, 0.0, undamped.period(), settings)?;
    Ok(m.trace())
}

/// Discriminant of `y'' + (1 + eps cos t) y / 4 = 0` over `[0, 2 pi]`.
pub fn mathieu_discriminant(eps: f64, settings: &IntegratorSettings) -> Result<f64> {
    discriminant(&presets::mathieu(eps), settings)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscriminantSample {
    pub epsilon: f64,
    pub discriminant: f64,
    /// `(discriminant + 2) / epsilon^2`
    pub coefficient: f64,
}

/// Fit of the small-`eps` law `Delta(eps) = -2 + C eps^2 + O(eps^4)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminantFit {
    pub samples: Vec<DiscriminantSample>,
    /// Largest relative spread of the per-sample coefficients.
    pub spread: f64,
    /// Richardson extrapolation of the coefficient from the two smallest
    /// `eps`, eliminating the `eps^2` correction.
    pub extrapolated: f64,
    pub published: f64,
    /// `|extrapolated - published| / |published|`
    pub discrepancy: f64,
}

/// Published value of the `eps^2` coefficient, kept for comparison.
pub const PUBLISHED_COEFFICIENT: f64 = -PI / 64.0;

pub fn fit_discriminant(epsilons: &[f64], settings: &IntegratorSettings) -> Result<DiscriminantFit> {
    fit_discriminant_for(&presets::mathieu(0.0), epsilons, settings)
}

/// As [`fit_discriminant`] for any model whose `epsilon` parameter scales
/// the first harmonic of the linear coefficient.
pub fn fit_discriminant_for(
    model: &ModelSpec,
    epsilons: &[f64],
    settings: &IntegratorSettings,
) -> Result<DiscriminantFit> {
    if epsilons.len() < 2 || epsilons.iter().any(|&e| e == 0.0 || !e.is_finite()) {
        return Err(Error::InvalidArgument(
            "need at least two nonzero epsilon values for the coefficient fit".into(),
        ));
    }
    let samples = epsilons
        .iter()
        .map(|&eps| {
            let d = discriminant(&model.with_parameter("epsilon", eps)?, settings)?;
            Ok(DiscriminantSample {
                epsilon: eps,
                discriminant: d,
                coefficient: (d + 2.0) / (eps * eps),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let coeffs: Vec<f64> = samples.iter().map(|s| s.coefficient).collect();
    let hi = coeffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = coeffs.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = coeffs.iter().map(|c| c.abs()).fold(0.0, f64::max);
    let spread = if scale > 0.0 { (hi - lo) / scale } else { 0.0 };

    let mut by_size = samples.clone();
    by_size.sort_by(|a, b| a.epsilon.abs().total_cmp(&b.epsilon.abs()));
    let (s1, s2) = (&by_size[0], &by_size[1]);
    let r2 = (s2.epsilon / s1.epsilon).powi(2);
    let extrapolated = if (r2 - 1.0).abs() > 1e-12 {
        (r2 * s1.coefficient - s2.coefficient) / (r2 - 1.0)
    } else {
        s1.coefficient
    };
    Ok(DiscriminantFit {
        samples,
        spread,
        extrapolated,
        published: PUBLISHED_COEFFICIENT,
        discrepancy: ((extrapolated - PUBLISHED_COEFFICIENT) / PUBLISHED_COEFFICIENT).abs(),
    })
}

/// Bounds entering the stability and uniqueness hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    /// `c^2 / 4`
    pub damping_bound: f64,
    /// `pi^2 / T^2 + c^2 / 4`
    pub stability_bound: f64,
    /// `(2 pi)^2 / T^2 + c^2 / 4`
    pub uniqueness_bound: f64,
    /// Periodic eigenvalues `(2 n pi / T)^2`, `n = 1..=4`.
    pub eigenvalues: [f64; 4],
}

pub fn bound_constants(c: f64, period: f64) -> BoundConstants {
    let q = c * c / 4.0;
    let w = PI / period;
    BoundConstants {
        damping_bound: q,
        stability_bound: w * w + q,
        uniqueness_bound: 4.0 * w * w + q,
        eigenvalues: [1.0, 2.0, 3.0, 4.0].map(|n| (2.0 * n * w).powi(2)),
    }
}
