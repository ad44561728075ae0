//! Time stepping with diagnostics, record sinks, and the run summary.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{CheckLevel, DeltaChoice, OutputFormat, RunConfig};
use crate::diagnostics::{fit_after_transient, DecayFit, Monitor, StepDiagnostics, TheoreticalConstants};
use crate::error::Error;
use crate::scheme::{equilibrium_from_initial, implicit_step};

pub const CSV_COLUMNS: [&str; 12] = [
    "step",
    "time",
    "entropy",
    "dissipation",
    "gamma",
    "norm_dev",
    "norm_pi",
    "norm_ortho",
    "reaction_defect",
    "mass_residual",
    "max_principle_violation",
    "picard_iterations",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Completed,
    InequalityFailure,
    SolverFailure,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CheckTally {
    pub passed: usize,
    pub failed: usize,
    /// Smallest `rhs - lhs` seen; negative when some check failed.
    pub worst_margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub status: RunStatus,
    pub steps_completed: usize,
    pub n_steps: usize,
    pub final_time: f64,
    pub rho_star: f64,
    pub delta: Option<f64>,
    pub kappa_entropy: Option<DecayFit>,
    pub kappa_norm: Option<DecayFit>,
    pub fit_notes: Vec<String>,
    pub final_mass_residual: f64,
    pub max_mass_residual: f64,
    pub max_bounds_violation: f64,
    pub max_picard_iterations: usize,
    pub truncated_steps: usize,
    pub checks: BTreeMap<&'static str, CheckTally>,
    pub inequality_failures: usize,
    pub constants: TheoreticalConstants,
    pub error: Option<String>,
}

impl RunSummary {
    /// Process exit status: 0 completed, 2 failed check under `fatal`,
    /// 3 solver failure.
    pub fn exit_code(&self) -> i32 {
        match self.status {
            RunStatus::Completed => 0,
            RunStatus::InequalityFailure => 2,
            RunStatus::SolverFailure => 3,
        }
    }
}

/// Destination of the per-step records.
pub trait RecordSink {
    fn record(&mut self, diag: &StepDiagnostics) -> io::Result<()>;
    fn finish(&mut self, summary: &RunSummary) -> io::Result<()>;
}

/// Discards everything; useful for in-process runs.
#[derive(Debug, Default)]
pub struct NullSink;

impl RecordSink for NullSink {
    fn record(&mut self, _: &StepDiagnostics) -> io::Result<()> {
        Ok(())
    }
    fn finish(&mut self, _: &RunSummary) -> io::Result<()> {
        Ok(())
    }
}

/// Keeps every record in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub records: Vec<StepDiagnostics>,
}

impl RecordSink for MemorySink {
    fn record(&mut self, diag: &StepDiagnostics) -> io::Result<()> {
        self.records.push(diag.clone());
        Ok(())
    }
    fn finish(&mut self, _: &RunSummary) -> io::Result<()> {
        Ok(())
    }
}

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV rows with 17 significant digits; the summary goes to a JSON sidecar
/// `<output>.summary.json`.
pub struct CsvSink {
    writer: csv::Writer<BufWriter<File>>,
    summary_path: PathBuf,
}

impl CsvSink {
    pub fn create(path: &Path) -> io::Result<Self> {
        let mut writer = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        writer.write_record(CSV_COLUMNS)?;
        Ok(Self {
            writer,
            summary_path: summary_path(path),
        })
    }
}

pub fn summary_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".summary.json");
    PathBuf::from(name)
}

impl RecordSink for CsvSink {
    fn record(&mut self, d: &StepDiagnostics) -> io::Result<()> {
        self.writer.write_record([
            d.step.to_string(),
            float(d.time),
            float(d.entropy),
            float(d.dissipation),
            d.gamma.map(float).unwrap_or_default(),
            float(d.norm_dev),
            float(d.norm_pi),
            float(d.norm_ortho),
            float(d.reaction_defect),
            float(d.mass_residual),
            float(d.max_principle_violation),
            d.picard_iterations.to_string(),
        ])?;
        Ok(())
    }

    fn finish(&mut self, summary: &RunSummary) -> io::Result<()> {
        self.writer.flush()?;
        let mut f = BufWriter::new(File::create(&self.summary_path)?);
        serde_json::to_writer_pretty(&mut f, summary)?;
        writeln!(f)?;
        f.flush()
    }
}

/// One JSON object per line; the last line is `{"summary": ...}`.
pub struct JsonlSink {
    writer: BufWriter<File>,
}

impl JsonlSink {
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(Self {
            writer: BufWriter::new(File::create(path)?),
        })
    }
}

impl RecordSink for JsonlSink {
    fn record(&mut self, d: &StepDiagnostics) -> io::Result<()> {
        serde_json::to_writer(&mut self.writer, d)?;
        writeln!(self.writer)
    }

    fn finish(&mut self, summary: &RunSummary) -> io::Result<()> {
        serde_json::to_writer(&mut self.writer, &serde_json::json!({ "summary": summary }))?;
        writeln!(self.writer)?;
        self.writer.flush()
    }
}

pub fn open_sink(format: OutputFormat, path: &Path) -> io::Result<Box<dyn RecordSink>> {
    Ok(match format {
        OutputFormat::Csv => Box::new(CsvSink::create(path)?),
        OutputFormat::Jsonl => Box::new(JsonlSink::create(path)?),
    })
}

/// Step from `t = 0` to `t_final`, writing a record every `stride` steps
/// and checking each transition unless checks are off.
///
/// Failed checks are reported on `log`. Only I/O errors are returned as
/// `Err`; solver and check failures end up in the summary status.
pub fn run_simulation(config: &RunConfig, sink: &mut dyn RecordSink, log: &mut dyn Write) -> io::Result<RunSummary> {
    let mesh = &config.mesh;
    let profiles = &config.profiles;
    let params = &config.params;
    let eq = equilibrium_from_initial(&config.initial, profiles, mesh);
    let constants = TheoreticalConstants::new(profiles, &eq, mesh, params.rho_min, params.rho_max);
    let delta = match config.delta {
        DeltaChoice::Off => 0.0,
        DeltaChoice::Value(d) => d,
        DeltaChoice::Auto => constants.default_delta(),
    };
    let checking = config.check_level != CheckLevel::Off;
    let every_step = checking || delta > 0.0;

    let mut summary = RunSummary {
        status: RunStatus::Completed,
        steps_completed: 0,
        n_steps: config.n_steps,
        final_time: 0.0,
        rho_star: eq.rho_star,
        delta: (delta > 0.0).then_some(delta),
        kappa_entropy: None,
        kappa_norm: None,
        fit_notes: Vec::new(),
        final_mass_residual: 0.0,
        max_mass_residual: 0.0,
        max_bounds_violation: f64::NEG_INFINITY,
        max_picard_iterations: 0,
        truncated_steps: 0,
        checks: BTreeMap::new(),
        inequality_failures: 0,
        constants,
        error: None,
    };

    let mut monitor = match Monitor::new(mesh, profiles, &eq, params, delta) {
        Ok(m) => m,
        Err(e) => return fail_solver(summary, e, sink),
    };
    let (mut times, mut entropy, mut norms) = (Vec::new(), Vec::new(), Vec::new());
    let mut keep = |d: &StepDiagnostics| {
        times.push(d.time);
        entropy.push(d.entropy);
        norms.push(d.norm_dev);
    };

    match monitor.observe(0, &config.initial, None) {
        Ok((d0, _)) => {
            summary.max_bounds_violation = d0.max_principle_violation;
            sink.record(&d0)?;
            keep(&d0);
        }
        Err(e) => return fail_solver(summary, e, sink),
    }

    let mut state = config.initial.clone();
    for n in 1..=config.n_steps {
        let (next, report) = match implicit_step(&state, profiles, mesh, params) {
            Ok(r) => r,
            Err(e @ Error::BoundsRejected { .. }) => {
                summary.status = RunStatus::InequalityFailure;
                summary.error = Some(e.to_string());
                writeln!(log, "step {n}: {e}")?;
                break;
            }
            Err(e) => {
                summary.status = RunStatus::SolverFailure;
                summary.error = Some(format!("step {n}: {e}"));
                break;
            }
        };
        summary.steps_completed = n;
        summary.final_time = n as f64 * params.dt;
        summary.max_picard_iterations = summary.max_picard_iterations.max(report.picard_iterations);
        summary.truncated_steps += usize::from(report.truncated_sweeps > 0);
        summary.max_bounds_violation = summary.max_bounds_violation.max(report.bounds_violation);
        let mass_residual = (next.mass_difference(mesh) - eq.mass_difference).abs();
        summary.max_mass_residual = summary.max_mass_residual.max(mass_residual);
        summary.final_mass_residual = mass_residual;

        let record_now = n % config.stride == 0;
        if every_step || record_now {
            let (diag, flags) = match monitor.observe(n, &next, Some(&report)) {
                Ok(r) => r,
                Err(e) => {
                    summary.status = RunStatus::SolverFailure;
                    summary.error = Some(format!("step {n}: {e}"));
                    break;
                }
            };
            let mut failed = false;
            if let (true, Some(flags)) = (checking, flags) {
                for (name, check) in flags.named() {
                    let tally = summary.checks.entry(name).or_default();
                    let margin = check.margin();
                    tally.worst_margin = Some(tally.worst_margin.map_or(margin, |m: f64| m.min(margin)));
                    if check.holds() {
                        tally.passed += 1;
                    } else {
                        tally.failed += 1;
                        summary.inequality_failures += 1;
                        failed = true;
                        writeln!(
                            log,
                            "step {n}: {name} fails: lhs {:.6e} > rhs {:.6e}",
                            check.lhs, check.rhs
                        )?;
                    }
                }
            }
            if record_now {
                sink.record(&diag)?;
                keep(&diag);
            }
            if failed && config.check_level == CheckLevel::Fatal {
                summary.status = RunStatus::InequalityFailure;
                summary.error = Some(format!("step {n}: inequality check failed"));
                break;
            }
        }
        state = next;
    }

    for (label, series, slot) in [
        ("entropy", &entropy, &mut summary.kappa_entropy),
        ("norm_dev", &norms, &mut summary.kappa_norm),
    ] {
        match fit_after_transient(&times, series, config.skip_fraction) {
            Ok(fit) => *slot = Some(fit),
            Err(e) => summary.fit_notes.push(format!("{label}: {e}")),
        }
    }
    sink.finish(&summary)?;
    Ok(summary)
}

fn fail_solver(mut summary: RunSummary, e: Error, sink: &mut dyn RecordSink) -> io::Result<RunSummary> {
    summary.status = RunStatus::SolverFailure;
    summary.error = Some(e.to_string());
    sink.finish(&summary)?;
    Ok(summary)
}

/// Read one column of a diagnostics CSV as `(time, value)` pairs.
pub fn read_csv_column(path: &Path, column: &str) -> Result<(Vec<f64>, Vec<f64>), String> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let headers = reader.headers().map_err(|e| e.to_string())?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| format!("no column `{name}` in {}", path.display()))
    };
    let (t_idx, v_idx) = (find("time")?, find(column)?);
    let (mut times, mut values) = (Vec::new(), Vec::new());
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let parse = |idx: usize| {
            rec.get(idx)
                .unwrap_or("")
                .trim()
                .parse::<f64>()
                .map_err(|_| format!("row {}: column `{}` is not a number", row + 1, &headers[idx]))
        };
        times.push(parse(t_idx)?);
        values.push(parse(v_idx)?);
    }
    Ok((times, values))
}
