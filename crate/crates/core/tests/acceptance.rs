//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

mod common;

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use duffing_decay::analysis::{check_hypotheses, csv_string, refine_transitions, sweep, SampleBox, SweepTask, Verdict};
use duffing_decay::floquet::{discriminant, fit_discriminant, floquet_data, mathieu_discriminant, monodromy};
use duffing_decay::integrate::integrate_with_sensitivity;
use duffing_decay::model::presets;
use duffing_decay::periodic::{
    decay_rate_iterates, find_periodic, poincare_map, poincare_point, remainder_constants, uniqueness_probe, PhaseBox,
};
use duffing_decay::{Classification, ForcingSeries, IntegratorSettings, PhasePoint, Reference};
use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn tight() -> IntegratorSettings {
    IntegratorSettings::with_tolerances(1e-12, 1e-14)
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Multipliers `e^{rho T}` for the roots of `rho^2 + c rho + k = 0`.
fn closed_form_multipliers(c: f64, k: f64, period: f64) -> [Complex64; 2] {
    let s = Complex64::new(c * c / 4.0 - k, 0.0).sqrt();
    let r1 = -c / 2.0 + s;
    let r2 = -c / 2.0 - s;
    [(r1 * period).exp(), (r2 * period).exp()]
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let cases = [(1.0, -0.5), (1.0, 0.1), (1.0, 0.34), (1.0, 1.0), (0.5, 0.2)];
    let mut worst: f64 = 0.0;
    for (c, k) in cases {
        let model = presets::linear(c, k, 1.0);
        let f = floquet_data(&monodromy(&model, Reference::Zero, &tight()).map_err(|e| e.to_string())?);
        for mu in closed_form_multipliers(c, k, 2.0 * PI) {
            let err = f
                .multipliers
                .iter()
                .map(|m| (m - mu).norm() / mu.norm())
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(err);
            ensure!(err <= 1e-8, "c={c} k={k}: multiplier {mu} off by {err:e} relative");
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 5.0, "runtime {secs:.2} s");
    Ok(format!("max rel err {worst:.1e}, {secs:.2} s"))
}

fn criterion_2() -> Outcome {
    let mut rng = StdRng::seed_from_u64(2);
    let settings = IntegratorSettings::default();
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let model = common::random_model(&mut rng, i);
        let start = PhasePoint::new(0.0, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let (_, state) =
            integrate_with_sensitivity(&model, start, model.period(), &settings).map_err(|e| e.to_string())?;
        let expected = (-model.damping() * model.period()).exp();
        let err = rel(state.m.determinant(), expected);
        worst = worst.max(err);
        ensure!(
            err <= 1e-7,
            "model {i} ({}): det off by {err:e}",
            model.restoring().kind()
        );
    }
    Ok(format!("20 models, max rel err {worst:.1e}"))
}

fn criterion_3() -> Outcome {
    let s = tight();
    let d0 = mathieu_discriminant(0.0, &s).map_err(|e| e.to_string())?;
    ensure!((d0 + 2.0).abs() <= 1e-9, "Delta(0) = {d0}");
    for eps in [0.05, 0.1, 0.2] {
        let d = mathieu_discriminant(eps, &s).map_err(|e| e.to_string())?;
        ensure!(d < -2.0 - 1e-5, "Delta({eps}) = {d}");
    }
    let fit = fit_discriminant(&[0.05, 0.025, 0.0125], &s).map_err(|e| e.to_string())?;
    ensure!(fit.spread <= 0.1, "coefficient spread {}", fit.spread);
    ensure!(
        fit.extrapolated < 0.0,
        "coefficient {} has the wrong sign",
        fit.extrapolated
    );
    Ok(format!(
        "coefficient {:.6} (spread {:.1e}); published {:.6}, discrepancy {:.0}%",
        fit.extrapolated,
        fit.spread,
        fit.published,
        100.0 * fit.discrepancy
    ))
}

fn criterion_4() -> Outcome {
    let s = IntegratorSettings::default();
    let model = presets::sine_perturbed(0.5, 0.2, 0.05, 0.1);
    let alpha = ForcingSeries::constant(model.period(), 0.15).unwrap();
    let report =
        check_hypotheses(&model, SampleBox::over_period(&model, (-2.0, 2.0)), &alpha, 64).map_err(|e| e.to_string())?;
    ensure!(
        report.verdicts.smooth_decay == Verdict::Pass,
        "hypotheses: {:?}",
        report.verdicts
    );
    let probe = uniqueness_probe(&model, PhaseBox::square(-2.0, 2.0), 3, &s).map_err(|e| e.to_string())?;
    ensure!(probe.clusters.len() == 1, "{} clusters", probe.clusters.len());
    let orbit = find_periodic(&model, PhasePoint::origin(), &s).map_err(|e| e.to_string())?;
    let f = orbit.floquet;
    ensure!(f.classification == Classification::ComplexPair, "{}", f.classification);
    ensure!((f.decay_rate - 0.25).abs() <= 1e-6, "Floquet decay {}", f.decay_rate);
    let d = decay_rate_iterates(&model, &orbit, [1e-3, 0.0], &s).map_err(|e| e.to_string())?;
    ensure!(rel(d.rate, 0.25) <= 0.02, "measured decay {}", d.rate);
    Ok(format!("Floquet decay {:.10}, measured {:.5}", f.decay_rate, d.rate))
}

fn criterion_5() -> Outcome {
    let s = IntegratorSettings::default();
    let model = presets::piecewise(1.0, 0.45, 0.3, 1.0);
    let a = ForcingSeries::constant(model.period(), 0.3).unwrap();
    let report =
        check_hypotheses(&model, SampleBox::over_period(&model, (-2.0, 2.0)), &a, 64).map_err(|e| e.to_string())?;
    ensure!(
        report.verdicts.piecewise_decay == Verdict::Pass,
        "hypotheses: {:?}",
        report.verdicts
    );
    ensure!(report.h_zero_count == 2, "h zeros {}", report.h_zero_count);
    let probe = uniqueness_probe(&model, PhaseBox::square(-2.0, 2.0), 3, &s).map_err(|e| e.to_string())?;
    ensure!(probe.clusters.len() == 1, "{} clusters", probe.clusters.len());
    let orbit = find_periodic(&model, PhasePoint::origin(), &s).map_err(|e| e.to_string())?;
    let f = orbit.floquet;
    ensure!(f.classification == Classification::ComplexPair, "{}", f.classification);
    ensure!(rel(f.modulus, (-PI).exp()) <= 1e-6, "modulus {}", f.modulus);
    let d = decay_rate_iterates(&model, &orbit, [1e-3, 0.0], &s).map_err(|e| e.to_string())?;
    ensure!(rel(d.rate, 0.5) <= 0.02, "measured decay {}", d.rate);
    let events = orbit.samples.events();
    ensure!(!events.is_empty(), "orbit has no zero crossings");
    let mut worst: f64 = 0.0;
    for e in events {
        let x = orbit.samples.interpolate(e.t).map_err(|e| e.to_string())?.x.abs();
        worst = worst.max(x);
        ensure!(x <= 1e-11, "|x| = {x:e} at event t = {}", e.t);
    }
    Ok(format!(
        "modulus {:.10}, measured {:.5}, {} events with |x| <= {worst:.1e}",
        f.modulus,
        d.rate,
        events.len()
    ))
}

fn criterion_6() -> Outcome {
    let s = IntegratorSettings::default();
    let model = presets::linear(1.0, 0.34, 1.0);
    // k = 1/4 + n^2/4 puts the rotation angle at n pi: M = -e^{-pi} I, a
    // genuine double multiplier. 20 nodes on [-0.5, 1] stay clear of k = 0.5.
    let values: Vec<f64> = (0..20).map(|i| -0.5 + 1.5 * i as f64 / 19.0).collect();
    let rows = sweep(&model, "g.k", &values, SweepTask::Floquet, &s, 4).map_err(|e| e.to_string())?;
    for r in &rows {
        let (class, stable) = r.label().ok_or_else(|| format!("k={}: {:?}", r.param, r.error))?;
        let k = r.param;
        if k <= 0.0 {
            ensure!(!stable, "k={k} reported stable");
        } else if k < 0.25 {
            ensure!(
                stable && class == Classification::RealDistinct,
                "k={k}: {class} stable={stable}"
            );
        } else {
            ensure!(
                stable && class == Classification::ComplexPair,
                "k={k}: {class} stable={stable}"
            );
            let rate = r.decay_rate.unwrap();
            ensure!((rate - 0.5).abs() <= 1e-8, "k={k}: decay rate {rate}");
        }
    }
    let resonant =
        floquet_data(&monodromy(&presets::linear(1.0, 0.5, 1.0), Reference::Zero, &s).map_err(|e| e.to_string())?);
    ensure!(
        resonant.classification == Classification::RealDouble
            && rel(resonant.modulus, (-PI).exp()) <= 1e-8
            && (resonant.decay_rate - 0.5).abs() <= 1e-8,
        "k=0.5: {:?}",
        resonant
    );
    let ts = refine_transitions(&model, "g.k", &rows, SweepTask::Floquet, &s, 1e-3, 4).map_err(|e| e.to_string())?;
    ensure!(ts.len() == 2, "{} transitions: {ts:?}", ts.len());
    for (t, target) in ts.iter().zip([0.0, 0.25]) {
        ensure!(t.hi - t.lo <= 1e-3, "bracket [{}, {}] too wide", t.lo, t.hi);
        ensure!(
            t.lo - 1e-3 <= target && target <= t.hi + 1e-3,
            "bracket [{}, {}] misses {target}",
            t.lo,
            t.hi
        );
    }
    Ok(format!(
        "transitions in [{:.5}, {:.5}] and [{:.5}, {:.5}]; k=0.5 double multiplier, decay {:.10}",
        ts[0].lo, ts[0].hi, ts[1].lo, ts[1].hi, resonant.decay_rate
    ))
}

fn criterion_7() -> Outcome {
    let s = tight();
    let mut rng = StdRng::seed_from_u64(7);
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        let model = common::random_model(&mut rng, i);
        let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let dp = poincare_map(&model, PhasePoint::new(0.0, x[0], x[1]), &s)
            .map_err(|e| e.to_string())?
            .jacobian;
        for j in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let pp = poincare_point(&model, xp, &s).map_err(|e| e.to_string())?;
            let pm = poincare_point(&model, xm, &s).map_err(|e| e.to_string())?;
            for r in 0..2 {
                let fd = (pp[r] - pm[r]) / (2.0 * h);
                let err = (fd - dp[(r, j)]).abs();
                worst = worst.max(err);
                ensure!(
                    err <= 1e-6,
                    "model {i} ({}): DP[{r},{j}] off by {err:e}",
                    model.restoring().kind()
                );
            }
        }
    }

    let mut spreads: f64 = 0.0;
    for _ in 0..3 {
        let model = common::random_smooth_nonlinear(&mut rng);
        let orbit = find_periodic(&model, PhasePoint::origin(), &s).map_err(|e| e.to_string())?;
        let ks = remainder_constants(&model, &orbit, [1.0, 0.0], &[1e-3, 1e-4, 1e-5], &s).map_err(|e| e.to_string())?;
        let hi = ks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = ks.iter().cloned().fold(f64::INFINITY, f64::min);
        let spread = (hi - lo) / hi;
        spreads = spreads.max(spread);
        ensure!(lo > 0.0 && spread <= 0.1, "remainder constants {ks:?} not stable");
    }
    Ok(format!("max Jacobian err {worst:.1e}, K spread {spreads:.1e}"))
}

fn criterion_8() -> Outcome {
    let s = IntegratorSettings::default();
    let linear = presets::linear(1.0, 0.34, 1.0);
    let values: Vec<f64> = (0..16).map(|i| -0.5 + 0.1 * i as f64).collect();
    let piecewise = presets::piecewise(1.0, 0.45, 0.3, 1.0);
    let a_values: Vec<f64> = (0..8).map(|i| 0.3 + 0.05 * i as f64).collect();
    let run = |workers: usize| -> Result<String, String> {
        let a = sweep(&linear, "g.k", &values, SweepTask::Floquet, &s, workers).map_err(|e| e.to_string())?;
        let b = sweep(&piecewise, "g.a", &a_values, SweepTask::Periodic, &s, workers).map_err(|e| e.to_string())?;
        Ok(csv_string(&a).map_err(|e| e.to_string())? + &csv_string(&b).map_err(|e| e.to_string())?)
    };
    let one = run(1)?;
    let many = run(4)?;
    let again = run(4)?;
    ensure!(one == many, "1-worker and 4-worker CSV differ");
    ensure!(many == again, "repeated runs differ");
    Ok(format!("{} bytes identical across 1/4/4 workers", one.len()))
}

fn main() {
    // Warm the Mathieu discriminant once so criterion 1's timing is not
    // charged for thread-pool start-up elsewhere.
    let _ = discriminant(&presets::mathieu(0.0), &IntegratorSettings::default());

    let criteria: [Criterion; 8] = [
        ("closed-form linear multipliers", criterion_1),
        ("determinant of the monodromy matrix", criterion_2),
        ("Mathieu discriminant", criterion_3),
        ("smooth restoring force end to end", criterion_4),
        ("piecewise restoring force end to end", criterion_5),
        ("stiffness sweep classification", criterion_6),
        ("Jacobian and quadratic remainder", criterion_7),
        ("deterministic sweeps", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS  {}  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {}  {name}: {detail}", i + 1)
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
