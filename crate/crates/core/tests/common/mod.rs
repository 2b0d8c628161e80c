#![allow(dead_code)]

use std::f64::consts::PI;

use duffing_decay::model::{ForcingSeries, Harmonic, PolyTerm};
use duffing_decay::{ModelSpec, RestoringForce};
use rand::rngs::StdRng;
use rand::Rng;

pub const TWO_PI: f64 = 2.0 * PI;

pub fn series(period: f64, mean: f64, cos1: f64, sin1: f64) -> ForcingSeries {
    ForcingSeries::new(
        period,
        mean,
        vec![Harmonic {
            order: 1,
            cos_coeff: cos1,
            sin_coeff: sin1,
        }],
    )
    .unwrap()
}

/// A random model of variant `kind % 4` with moderate coefficients.
pub fn random_model(rng: &mut StdRng, kind: usize) -> ModelSpec {
    let c = rng.gen_range(0.2..1.0);
    let period = rng.gen_range(3.0..TWO_PI);
    let g = match kind % 4 {
        0 => RestoringForce::Linear {
            k: rng.gen_range(-0.3..1.5),
        },
        1 => RestoringForce::PolyFourier {
            terms: vec![
                PolyTerm {
                    power: 1,
                    coeff: series(
                        period,
                        rng.gen_range(0.2..1.0),
                        rng.gen_range(-0.2..0.2),
                        rng.gen_range(-0.2..0.2),
                    ),
                },
                PolyTerm {
                    power: 3,
                    coeff: series(period, rng.gen_range(0.1..0.5), rng.gen_range(-0.1..0.1), 0.0),
                },
            ],
        },
        2 => RestoringForce::SinePerturbed {
            k: rng.gen_range(0.1..1.0),
            delta: rng.gen_range(-0.3..0.3),
        },
        _ => RestoringForce::PiecewiseLinear {
            a: series(
                period,
                rng.gen_range(0.2..1.0),
                rng.gen_range(-0.1..0.1),
                rng.gen_range(-0.1..0.1),
            ),
            b: series(period, rng.gen_range(0.2..1.0), rng.gen_range(-0.1..0.1), 0.0),
        },
    };
    let h = series(
        period,
        rng.gen_range(-0.2..0.2),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-0.5..0.5),
    );
    ModelSpec::new(format!("random-{kind}"), c, period, g, h).unwrap()
}

/// Duffing-type model `x'' + c x' + (p1 + p3 x^2) x = h` with a forced,
/// nonzero orbit, so the period map has a nonvanishing second derivative.
pub fn random_smooth_nonlinear(rng: &mut StdRng) -> ModelSpec {
    let period = TWO_PI;
    let c = rng.gen_range(0.3..1.0);
    let g = RestoringForce::PolyFourier {
        terms: vec![
            PolyTerm {
                power: 1,
                coeff: series(period, rng.gen_range(0.3..1.0), rng.gen_range(-0.1..0.1), 0.0),
            },
            PolyTerm {
                power: 2,
                coeff: series(period, rng.gen_range(0.2..0.6), 0.0, 0.0),
            },
            PolyTerm {
                power: 3,
                coeff: series(period, rng.gen_range(0.2..0.6), 0.0, 0.0),
            },
        ],
    };
    let h = series(period, 0.0, rng.gen_range(0.2..0.5), 0.0);
    ModelSpec::new("duffing", c, period, g, h).unwrap()
}
