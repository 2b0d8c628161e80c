//! Command-line front end. Exit status: 0 success, 1 analysis failure,
//! 2 usage or configuration error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use super::bounds::{check_hypotheses, SampleBox};
use super::report::{to_json, Report};
use super::sweep::{csv_string, describe_transitions, refine_transitions, sweep, RangeSpec, SweepTask};
use crate::error::{Error, Result};
use crate::floquet::{
    discriminant, fit_discriminant_for, floquet_data, monodromy, DiscriminantSample, FloquetData, Reference,
};
use crate::integrate::{Event, IntegratorSettings, PhasePoint};
use crate::model::{load_model, ForcingSeries, ModelSpec};
use crate::periodic::{
    decay_rate_iterates, find_periodic, remainder_constants, uniqueness_probe, PeriodicOrbit, PhaseBox,
};

#[derive(Debug, Parser)]
#[command(
    name = "duffing-decay",
    version,
    about = "Periodic solutions, Floquet multipliers and decay rates of damped forced oscillators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum About {
    /// Zero for models linear in x, the periodic orbit otherwise.
    Auto,
    Zero,
    Orbit,
}

#[derive(Debug, Args)]
struct Common {
    /// Model document (JSON).
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 1e-10)]
    rtol: f64,
    #[arg(long, default_value_t = 1e-12)]
    atol: f64,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the coefficient hypotheses on a sampled (t, x) box.
    Check {
        #[command(flatten)]
        common: Common,
        /// x range `lo:hi`.
        #[arg(long = "box", value_parser = parse_interval, allow_hyphen_values = true)]
        x_box: (f64, f64),
        /// t range `lo:hi`; one period by default.
        #[arg(long, value_parser = parse_interval, allow_hyphen_values = true)]
        t_box: Option<(f64, f64)>,
        /// Constant lower envelope of g_x.
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        /// Grid points per axis.
        #[arg(long, default_value_t = 64)]
        samples: usize,
    },
    /// Find a periodic solution by Newton shooting.
    FindPeriodic {
        #[command(flatten)]
        common: Common,
        /// Initial guess `x,v` at t = 0.
        #[arg(long, value_parser = parse_pair, allow_hyphen_values = true, default_value = "0,0")]
        guess: [f64; 2],
        /// Also run an m x m multi-start uniqueness probe.
        #[arg(long)]
        grid: Option<usize>,
        /// Square `lo:hi` for the probe.
        #[arg(long = "box", value_parser = parse_interval, allow_hyphen_values = true, default_value = "-2:2")]
        probe_box: (f64, f64),
    },
    /// Monodromy matrix and Floquet data.
    Floquet {
        #[command(flatten)]
        common: Common,
        /// Set the `epsilon` parameter before the analysis.
        #[arg(long, allow_hyphen_values = true)]
        epsilon: Option<f64>,
        #[arg(long, value_enum, default_value_t = About::Auto)]
        about: About,
        #[arg(long, value_parser = parse_pair, allow_hyphen_values = true, default_value = "0,0")]
        guess: [f64; 2],
    },
    /// Measured decay rate of Poincaré iterates towards the periodic orbit.
    Decay {
        #[command(flatten)]
        common: Common,
        /// Initial offset, either `dx` or `dx,dv`.
        #[arg(long, value_parser = parse_offset, allow_hyphen_values = true, default_value = "1e-3")]
        d0: [f64; 2],
        #[arg(long, value_parser = parse_pair, allow_hyphen_values = true, default_value = "0,0")]
        guess: [f64; 2],
    },
    /// Analyse a grid of values of one model parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Parameter path, e.g. `g.k`, `c`, `epsilon`.
        #[arg(long)]
        param: String,
        /// Inclusive grid `lo:hi:n`.
        #[arg(long, allow_hyphen_values = true)]
        range: String,
        #[arg(long, value_enum, default_value_t = TaskArg::Floquet)]
        task: TaskArg,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Bisect label changes to this width and report them on stderr.
        #[arg(long)]
        refine: Option<f64>,
    },
    /// Hill discriminant of the undamped transform over a list of epsilon.
    Discriminant {
        #[command(flatten)]
        common: Common,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            default_value = "0.05,0.025,0.0125"
        )]
        epsilon: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    Floquet,
    Periodic,
    Decay,
}

impl From<TaskArg> for SweepTask {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Floquet => SweepTask::Floquet,
            TaskArg::Periodic => SweepTask::Periodic,
            TaskArg::Decay => SweepTask::Decay,
        }
    }
}

fn parse_interval(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("`{s}` is not of the form lo:hi"))?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{a}: {e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{b}: {e}"))?;
    if !(a.is_finite() && b.is_finite() && a <= b) {
        return Err(format!("`{s}` is not a finite interval with lo <= hi"));
    }
    Ok((a, b))
}

fn parse_pair(s: &str) -> std::result::Result<[f64; 2], String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("`{s}` is not of the form x,v"))?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{a}: {e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{b}: {e}"))?;
    Ok([a, b])
}

fn parse_offset(s: &str) -> std::result::Result<[f64; 2], String> {
    if s.contains(',') {
        parse_pair(s)
    } else {
        let d: f64 = s.trim().parse().map_err(|e| format!("{s}: {e}"))?;
        Ok([d, 0.0])
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}

struct Loaded {
    model: ModelSpec,
    settings: IntegratorSettings,
}

fn load(common: &Common) -> Result<Loaded> {
    let text = std::fs::read_to_string(&common.model)
        .map_err(|e| Error::InvalidArgument(format!("cannot read model file {}: {e}", common.model.display())))?;
    let model = load_model(&text)?;
    let settings = IntegratorSettings::with_tolerances(common.rtol, common.atol);
    settings.validate()?;
    Ok(Loaded { model, settings })
}

fn json_only(common: &Common) -> Result<()> {
    match common.format {
        Some(Format::Csv) => Err(Error::InvalidArgument(
            "CSV output is only available for `sweep`".into(),
        )),
        _ => Ok(()),
    }
}

fn emit(common: &Common, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match &common.out {
        Some(path) => std::fs::write(path, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn emit_report<R: Serialize>(common: &Common, report: &Report<R>, stdout: &mut dyn Write) -> Result<()> {
    emit(common, &to_json(report)?, stdout)
}

#[derive(Debug, Serialize)]
struct OrbitSummary {
    x0: f64,
    v0: f64,
    residual: f64,
    iterations: usize,
    floquet: FloquetData,
    stable: bool,
    events: Vec<Event>,
}

impl From<&PeriodicOrbit> for OrbitSummary {
    fn from(o: &PeriodicOrbit) -> Self {
        Self {
            x0: o.x0.x,
            v0: o.x0.v,
            residual: o.residual,
            iterations: o.iterations,
            floquet: o.floquet,
            stable: o.floquet.is_stable(),
            events: o.samples.events().to_vec(),
        }
    }
}

#[derive(Debug, Serialize)]
struct FloquetResult {
    about: Reference,
    monodromy: [[f64; 2]; 2],
    floquet: FloquetData,
    stable: bool,
    /// `e^{-cT}`
    det_expected: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    discriminant: Option<f64>,
}

#[derive(Debug, Serialize)]
struct DecayResult {
    orbit: OrbitSummary,
    floquet_decay_rate: f64,
    measured: crate::periodic::DecayEstimate,
    relative_difference: f64,
    /// Quadratic remainder constants along `d0` at scales 1, 0.1, 0.01.
    remainder_constants: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct DiscriminantResult {
    samples: Vec<DiscriminantSample>,
    fit: Option<crate::floquet::DiscriminantFit>,
}

fn execute(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    match command {
        Command::Check {
            common,
            x_box,
            t_box,
            alpha,
            samples,
        } => {
            json_only(&common)?;
            let Loaded { model, settings } = load(&common)?;
            let region = SampleBox {
                t: t_box.unwrap_or((0.0, model.period())),
                x: x_box,
            };
            let alpha_series = ForcingSeries::constant(model.period(), alpha)?;
            let result = check_hypotheses(&model, region, &alpha_series, samples)?;
            let mut report = Report::new(
                &model,
                &settings,
                json!({"box": {"t": region.t, "x": region.x}, "alpha": alpha, "samples": samples}),
                &result,
            );
            report.warn(result.note.clone());
            if model.damping() <= 0.0 {
                report.warn("c <= 0: the damping hypothesis fails");
            }
            emit_report(&common, &report, stdout)
        }
        Command::FindPeriodic {
            common,
            guess,
            grid,
            probe_box,
        } => {
            json_only(&common)?;
            let Loaded { model, settings } = load(&common)?;
            let orbit = find_periodic(&model, PhasePoint::new(0.0, guess[0], guess[1]), &settings)?;
            let probe = grid
                .map(|m| uniqueness_probe(&model, PhaseBox::square(probe_box.0, probe_box.1), m, &settings))
                .transpose()?;
            let mut report = Report::new(
                &model,
                &settings,
                json!({"guess": guess, "grid": grid, "box": probe_box}),
                json!({"orbit": OrbitSummary::from(&orbit), "probe": probe}),
            );
            if let Some(p) = &probe {
                if p.clusters.len() != 1 {
                    report.warn(format!("probe found {} distinct periodic solutions", p.clusters.len()));
                }
                if p.converged() < p.starts.len() {
                    report.warn(format!(
                        "{} of {} starts did not converge",
                        p.starts.len() - p.converged(),
                        p.starts.len()
                    ));
                }
            }
            emit_report(&common, &report, stdout)
        }
        Command::Floquet {
            common,
            epsilon,
            about,
            guess,
        } => {
            json_only(&common)?;
            let Loaded { mut model, settings } = load(&common)?;
            if let Some(eps) = epsilon {
                model = model.with_parameter("epsilon", eps)?;
            }
            let mut warnings = Vec::new();
            let reference = match about {
                About::Zero => {
                    if !model.is_linear_in_x() {
                        warnings.push(
                            "linearization about x = 0, which is not a solution of this model unless h = 0".to_string(),
                        );
                    }
                    Reference::Zero
                }
                About::Auto if model.is_linear_in_x() => Reference::Zero,
                About::Auto | About::Orbit => {
                    let o = find_periodic(&model, PhasePoint::new(0.0, guess[0], guess[1]), &settings)?;
                    Reference::Orbit { x: o.x0.x, v: o.x0.v }
                }
            };
            let mono = monodromy(&model, reference, &settings)?;
            let data = floquet_data(&mono);
            let disc = if model.is_linear_in_x() {
                Some(discriminant(&model, &settings)?)
            } else {
                None
            };
            let result = FloquetResult {
                about: reference,
                monodromy: [[mono.m[(0, 0)], mono.m[(0, 1)]], [mono.m[(1, 0)], mono.m[(1, 1)]]],
                floquet: data,
                stable: data.is_stable(),
                det_expected: (-model.damping() * model.period()).exp(),
                discriminant: disc,
            };
            let mut report = Report::new(
                &model,
                &settings,
                json!({"epsilon": epsilon, "about": format!("{about:?}").to_lowercase(), "guess": guess}),
                result,
            );
            for w in warnings {
                report.warn(w);
            }
            emit_report(&common, &report, stdout)
        }
        Command::Decay { common, d0, guess } => {
            json_only(&common)?;
            let Loaded { model, settings } = load(&common)?;
            let orbit = find_periodic(&model, PhasePoint::new(0.0, guess[0], guess[1]), &settings)?;
            let measured = decay_rate_iterates(&model, &orbit, d0, &settings)?;
            let floquet_rate = orbit.floquet.decay_rate;
            let remainders = remainder_constants(&model, &orbit, d0, &[1.0, 0.1, 0.01], &settings)?;
            let result = DecayResult {
                orbit: OrbitSummary::from(&orbit),
                floquet_decay_rate: floquet_rate,
                relative_difference: ((measured.rate - floquet_rate) / floquet_rate).abs(),
                measured,
                remainder_constants: remainders,
            };
            let mut report = Report::new(&model, &settings, json!({"d0": d0, "guess": guess}), &result);
            if result.measured.offset != d0 {
                report.warn(format!(
                    "iterates diverged from the requested offset; used {:?}",
                    result.measured.offset
                ));
            }
            emit_report(&common, &report, stdout)
        }
        Command::Sweep {
            common,
            param,
            range,
            task,
            workers,
            refine,
        } => {
            let Loaded { model, settings } = load(&common)?;
            let spec: RangeSpec = range.parse()?;
            let values = spec.values();
            let task = SweepTask::from(task);
            let rows = sweep(&model, &param, &values, task, &settings, workers)?;
            let transitions = refine
                .map(|w| refine_transitions(&model, &param, &rows, task, &settings, w, workers))
                .transpose()?;
            if let Some(ts) = &transitions {
                stderr.write_all(describe_transitions(ts).as_bytes())?;
            }
            match common.format.unwrap_or(Format::Csv) {
                Format::Csv => emit(&common, &csv_string(&rows)?, stdout),
                Format::Json => {
                    let report = Report::new(
                        &model,
                        &settings,
                        json!({"param": param, "range": spec, "task": task, "workers": workers, "refine": refine}),
                        json!({"rows": rows, "transitions": transitions}),
                    );
                    emit_report(&common, &report, stdout)
                }
            }
        }
        Command::Discriminant { common, epsilon } => {
            json_only(&common)?;
            let Loaded { model, settings } = load(&common)?;
            let samples = epsilon
                .iter()
                .map(|&eps| {
                    let d = discriminant(&model.with_parameter("epsilon", eps)?, &settings)?;
                    Ok(DiscriminantSample {
                        epsilon: eps,
                        discriminant: d,
                        coefficient: if eps != 0.0 { (d + 2.0) / (eps * eps) } else { f64::NAN },
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let nonzero: Vec<f64> = epsilon.iter().copied().filter(|&e| e != 0.0).collect();
            let fit = if nonzero.len() >= 2 {
                Some(fit_discriminant_for(&model, &nonzero, &settings)?)
            } else {
                None
            };
            let mut report = Report::new(
                &model,
                &settings,
                json!({"epsilon": epsilon}),
                DiscriminantResult { samples, fit },
            );
            if let Some(f) = report.result.fit.clone() {
                let msg = format!(
                    "fitted eps^2 coefficient {:.6} differs from the published {:.6} by {:.1}%",
                    f.extrapolated,
                    f.published,
                    100.0 * f.discrepancy
                );
                if f.discrepancy > 0.1 {
                    report.warn(msg);
                }
                if f.spread > 0.1 {
                    report.warn(format!(
                        "coefficient spread {:.3} exceeds 10%: not in the eps^2 regime",
                        f.spread
                    ));
                }
            }
            emit_report(&common, &report, stdout)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argument_parsers() {
        assert_eq!(parse_interval("-2:2"), Ok((-2.0, 2.0)));
        assert!(parse_interval("2:-2").is_err());
        assert_eq!(parse_pair("-0.5, 1"), Ok([-0.5, 1.0]));
        assert_eq!(parse_offset("1e-3"), Ok([1e-3, 0.0]));
        assert_eq!(parse_offset("0,1e-3"), Ok([0.0, 1e-3]));
    }

    #[test]
    fn usage_errors_exit_2() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(run(["duffing-decay", "frobnicate"], &mut out, &mut err), 2);
        let code = run(
            ["duffing-decay", "floquet", "--model", "/nonexistent/model.json"],
            &mut out,
            &mut err,
        );
        assert_eq!(code, 2);
        assert!(String::from_utf8_lossy(&err).contains("cannot read model file"));
    }

    #[test]
    fn help_exits_0() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(run(["duffing-decay", "--help"], &mut out, &mut err), 0);
        assert!(String::from_utf8_lossy(&out).contains("sweep"));
    }
}
