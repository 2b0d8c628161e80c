//! One-parameter sweeps over a model, run on a fixed-size worker pool and
//! collected in grid order.

use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floquet::{floquet_data, monodromy, Classification, FloquetData, Reference};
use crate::integrate::{IntegratorSettings, PhasePoint};
use crate::model::ModelSpec;
use crate::periodic::{decay_rate_iterates, find_periodic, PeriodicOrbit};

pub const CSV_HEADER: [&str; 15] = [
    "param",
    "trace",
    "det",
    "mu1_re",
    "mu1_im",
    "mu2_re",
    "mu2_im",
    "modulus",
    "classification",
    "decay_rate",
    "stable",
    "x0",
    "v0",
    "residual",
    "error",
];

/// Offset used by the decay task, along `x`.
pub const DEFAULT_D0: [f64; 2] = [1e-3, 0.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepTask {
    /// Multipliers about zero for models linear in `x`, about the periodic
    /// orbit otherwise.
    Floquet,
    Periodic,
    /// Like `Periodic`, with `decay_rate` replaced by the iterate regression.
    Decay,
}

impl FromStr for SweepTask {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "floquet" => Ok(Self::Floquet),
            "periodic" => Ok(Self::Periodic),
            "decay" => Ok(Self::Decay),
            _ => Err(Error::InvalidArgument(format!(
                "unknown sweep task `{s}` (expected floquet, periodic or decay)"
            ))),
        }
    }
}

/// Inclusive grid `lo:hi:n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl RangeSpec {
    pub fn values(&self) -> Vec<f64> {
        match self.n {
            0 => Vec::new(),
            1 => vec![self.lo],
            n => (0..n)
                .map(|i| {
                    if i + 1 == n {
                        self.hi
                    } else {
                        self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64
                    }
                })
                .collect(),
        }
    }
}

impl FromStr for RangeSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("range `{s}` is not of the form lo:hi:n"));
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, n] = parts.as_slice() else {
            return Err(bad());
        };
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        let n: usize = n.trim().parse().map_err(|_| bad())?;
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(bad());
        }
        Ok(Self { lo, hi, n })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: f64,
    pub trace: Option<f64>,
    pub det: Option<f64>,
    pub mu1: Option<[f64; 2]>,
    pub mu2: Option<[f64; 2]>,
    pub modulus: Option<f64>,
    pub classification: Option<Classification>,
    pub decay_rate: Option<f64>,
    pub stable: Option<bool>,
    pub x0: Option<f64>,
    pub v0: Option<f64>,
    pub residual: Option<f64>,
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(param: f64, e: &Error) -> Self {
        Self {
            param,
            error: Some(e.to_string()),
            ..Self::default()
        }
    }

    fn fill_floquet(&mut self, f: &FloquetData) {
        self.trace = Some(f.trace);
        self.det = Some(f.det);
        self.mu1 = Some([f.multipliers[0].re, f.multipliers[0].im]);
        self.mu2 = Some([f.multipliers[1].re, f.multipliers[1].im]);
        self.modulus = Some(f.modulus);
        self.classification = Some(f.classification);
        self.decay_rate = Some(f.decay_rate);
        self.stable = Some(f.is_stable());
    }

    fn fill_orbit(&mut self, o: &PeriodicOrbit) {
        self.fill_floquet(&o.floquet);
        self.x0 = Some(o.x0.x);
        self.v0 = Some(o.x0.v);
        self.residual = Some(o.residual);
    }

    /// Classification and stability, the quantities transitions are
    /// detected on.
    pub fn label(&self) -> Option<(Classification, bool)> {
        Some((self.classification?, self.stable?))
    }
}

/// Runs `task` on a single model, recording failures in the row.
pub fn analyze(model: &ModelSpec, param: f64, task: SweepTask, settings: &IntegratorSettings) -> SweepRow {
    let mut row = SweepRow {
        param,
        ..SweepRow::default()
    };
    let orbit = || find_periodic(model, PhasePoint::origin(), settings);
    let outcome = match task {
        SweepTask::Floquet if model.is_linear_in_x() => {
            monodromy(model, Reference::Zero, settings).map(|m| row.fill_floquet(&floquet_data(&m)))
        }
        SweepTask::Floquet | SweepTask::Periodic => orbit().map(|o| row.fill_orbit(&o)),
        SweepTask::Decay => orbit().and_then(|o| {
            row.fill_orbit(&o);
            let d = decay_rate_iterates(model, &o, DEFAULT_D0, settings)?;
            row.decay_rate = Some(d.rate);
            Ok(())
        }),
    };
    match outcome {
        Ok(()) => row,
        Err(e) => SweepRow::failed(param, &e),
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    if workers == 0 {
        return Err(Error::InvalidArgument("need at least one worker".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))
}

/// One row per value, in the order given. A bad parameter path is an error
/// for the whole sweep; anything else is recorded per row.
pub fn sweep(
    model: &ModelSpec,
    parameter: &str,
    values: &[f64],
    task: SweepTask,
    settings: &IntegratorSettings,
    workers: usize,
) -> Result<Vec<SweepRow>> {
    settings.validate()?;
    if let Some(&v) = values.first() {
        model.with_parameter(parameter, v)?;
    }
    let pool = pool(workers)?;
    Ok(pool.install(|| {
        values
            .par_iter()
            .map(|&v| match model.with_parameter(parameter, v) {
                Ok(m) => analyze(&m, v, task, settings),
                Err(e) => SweepRow::failed(v, &e),
            })
            .collect()
    }))
}

/// An interval of the parameter across which the label changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub lo: f64,
    pub hi: f64,
    pub below: Option<(Classification, bool)>,
    pub above: Option<(Classification, bool)>,
}

/// Bisects every pair of adjacent rows whose labels differ until the
/// bracket is at most `width` wide. Brackets are refined in parallel.
pub fn refine_transitions(
    model: &ModelSpec,
    parameter: &str,
    rows: &[SweepRow],
    task: SweepTask,
    settings: &IntegratorSettings,
    width: f64,
    workers: usize,
) -> Result<Vec<Transition>> {
    if width.is_nan() || width <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "refinement width must be positive, got {width}"
        )));
    }
    let brackets: Vec<(&SweepRow, &SweepRow)> = rows
        .windows(2)
        .filter(|w| w[0].label() != w[1].label())
        .map(|w| (&w[0], &w[1]))
        .collect();
    let label_at = |v: f64| -> Result<Option<(Classification, bool)>> {
        Ok(analyze(&model.with_parameter(parameter, v)?, v, task, settings).label())
    };
    let pool = pool(workers)?;
    pool.install(|| {
        brackets
            .par_iter()
            .map(|(a, b)| {
                let (mut lo, mut hi) = (a.param, b.param);
                let (below, above) = (a.label(), b.label());
                while (hi - lo).abs() > width {
                    let mid = 0.5 * (lo + hi);
                    if label_at(mid)? == below {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Ok(Transition { lo, hi, below, above })
            })
            .collect()
    })
}

/// Fixed-width scientific notation with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn cell(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            format_f64(r.param),
            cell(r.trace),
            cell(r.det),
            cell(r.mu1.map(|m| m[0])),
            cell(r.mu1.map(|m| m[1])),
            cell(r.mu2.map(|m| m[0])),
            cell(r.mu2.map(|m| m[1])),
            cell(r.modulus),
            r.classification.map(|c| c.as_str().to_string()).unwrap_or_default(),
            cell(r.decay_rate),
            r.stable.map(|s| s.to_string()).unwrap_or_default(),
            cell(r.x0),
            cell(r.v0),
            cell(r.residual),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(rows: &[SweepRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Short human summary of transitions, one per line.
pub fn describe_transitions(ts: &[Transition]) -> String {
    let name = |l: &Option<(Classification, bool)>| match l {
        Some((c, true)) => format!("stable {c}"),
        Some((c, false)) => format!("unstable {c}"),
        None => "failed".to_string(),
    };
    let mut s = String::new();
    for t in ts {
        let _ = writeln!(s, "[{}, {}]: {} -> {}", t.lo, t.hi, name(&t.below), name(&t.above));
    }
    s
}
