use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use torus_drift::analytic::{predict_drift, CaseTag, DriftPrediction};
use torus_drift::ergodic::{drift_estimate, empirical_measure, DriftCheckpoint, EmpiricalMeasure};
use torus_drift::field::{classify_direction, FieldSpec, DirectionClass, RATIONAL_TOL};
use torus_drift::flow::{detect_torus_period, integrate, IntegratorOptions, PeriodReport};
use torus_drift::invariance::{residual_panel, ResidualRecord, TestFunction, PANEL_FREQ_BOUND};
use torus_drift::format_real;

use crate::scenario::Scenario;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;
const PERIOD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    /// Measured and predicted drifts agree within tolerance.
    Pass,
    /// Both exist but disagree.
    Mismatch,
    /// No closed form for this field; measured drift only.
    Unsupported,
    /// Integration or prediction raised an error.
    Failed,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Mismatch => "MISMATCH",
            Status::Unsupported => "UNSUPPORTED",
            Status::Failed => "FAILED",
        }
    }

    pub fn is_failure(self) -> bool {
        matches!(self, Status::Mismatch | Status::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualSummary {
    pub max_residual: f64,
    pub max_bound: f64,
    pub count: usize,
}

/// One row of the comparison report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub scenario_id: String,
    pub start_index: usize,
    pub family: &'static str,
    pub x0: Vec<f64>,
    pub t_end: f64,
    pub status: Status,
    pub case_tag: Option<String>,
    pub measured: Option<Vec<f64>>,
    pub predicted: Option<Vec<f64>>,
    pub abs_error: Option<Vec<f64>>,
    /// `abs_tol + rel_tol·|predicted|`.
    pub allowed: Option<f64>,
    pub stationary_exit: bool,
    pub residuals: Option<ResidualSummary>,
    pub period: Option<PeriodReport>,
    pub notes: Vec<String>,
}

/// Everything one (scenario, start) task produced.
#[derive(Debug, Clone)]
pub struct StartResult {
    pub comparison: Comparison,
    pub checkpoints: Vec<DriftCheckpoint>,
    pub measure: Option<EmpiricalMeasure>,
    pub residuals: Vec<ResidualRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub rows: Vec<Comparison>,
    pub passed: bool,
}

impl Report {
    fn new(rows: Vec<Comparison>) -> Self {
        let passed = rows.iter().all(|r| !r.status.is_failure());
        Self {
            schema_version: SCHEMA_VERSION,
            rows,
            passed,
        }
    }
}

fn direction_class(sc: &Scenario) -> Result<Option<DirectionClass>, torus_drift::Error> {
    match &sc.spec {
        FieldSpec::Direction { xi, .. } | FieldSpec::Rectified { xi, .. } => {
            classify_direction(xi, sc.bound, RATIONAL_TOL).map(Some)
        }
        _ => Ok(None),
    }
}

fn predict(sc: &Scenario, x0: &[f64]) -> Result<DriftPrediction, torus_drift::Error> {
    let class = direction_class(sc)?;
    predict_drift(&sc.spec, x0, class.as_ref())
}

fn options(sc: &Scenario) -> IntegratorOptions {
    IntegratorOptions::with_tolerances(sc.rtol, sc.atol)
}

fn blank(sc: &Scenario, index: usize) -> Comparison {
    Comparison {
        scenario_id: sc.id.clone(),
        start_index: index,
        family: sc.spec.family(),
        x0: sc.starts[index].clone(),
        t_end: sc.t_end,
        status: Status::Failed,
        case_tag: None,
        measured: None,
        predicted: None,
        abs_error: None,
        allowed: None,
        stationary_exit: false,
        residuals: None,
        period: None,
        notes: Vec::new(),
    }
}

fn apply_prediction(row: &mut Comparison, sc: &Scenario, pred: Result<DriftPrediction, torus_drift::Error>) {
    match pred {
        Ok(p) => {
            row.case_tag = Some(p.case_tag.to_string());
            row.notes.extend(p.notes);
            if p.case_tag == CaseTag::Unsupported {
                row.status = Status::Unsupported;
            } else {
                row.predicted = Some(p.value);
            }
        }
        Err(e) => {
            row.status = Status::Failed;
            row.notes.push(format!("prediction: {e}"));
        }
    }
    if let (Some(m), Some(p)) = (&row.measured, &row.predicted) {
        let err: Vec<f64> = m.iter().zip(p).map(|(a, b)| (a - b).abs()).collect();
        let scale = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        let allowed = sc.abs_tol + sc.rel_tol * scale;
        let within = err.iter().all(|e| *e <= allowed);
        row.status = if within { Status::Pass } else { Status::Mismatch };
        row.abs_error = Some(err);
        row.allowed = Some(allowed);
    }
}

/// Simulates one start and compares it with the prediction.
pub fn run_start(sc: &Scenario, index: usize) -> StartResult {
    let x0 = &sc.starts[index];
    let mut row = blank(sc, index);
    let mut out = StartResult {
        comparison: row.clone(),
        checkpoints: Vec::new(),
        measure: None,
        residuals: Vec::new(),
    };
    let opts = options(sc);
    let traj = match integrate(&sc.spec, x0, sc.t_end, &opts) {
        Ok(t) => t,
        Err(e) => {
            row.notes.push(format!("integration: {e}"));
            out.comparison = row;
            return out;
        }
    };
    row.stationary_exit = traj.stationary_exit.is_some();
    match drift_estimate(&traj) {
        Ok(est) => {
            row.measured = Some(est.last.clone());
            out.checkpoints = est.checkpoints;
            row.status = Status::Unsupported;
        }
        Err(e) => row.notes.push(format!("drift: {e}")),
    }

    if sc.measures {
        let measured = empirical_measure(&traj, sc.n).and_then(|mu| {
            let panel = TestFunction::panel(sc.dim(), sc.panel_size, sc.panel_seed, PANEL_FREQ_BOUND)?;
            let records = residual_panel(&sc.spec, &mu, &panel, traj.t_end)?;
            Ok((mu, records))
        });
        match measured {
            Ok((mu, records)) => {
                row.residuals = Some(ResidualSummary {
                    max_residual: records.iter().map(|r| r.residual.abs()).fold(0.0, f64::max),
                    max_bound: records.iter().map(|r| r.bound).fold(0.0, f64::max),
                    count: records.len(),
                });
                out.measure = Some(mu);
                out.residuals = records;
            }
            Err(e) => row.notes.push(format!("measure: {e}")),
        }
    }
    drop(traj);

    if sc.period_tau_max > 0.0 {
        match detect_torus_period(&sc.spec, x0, sc.period_tau_max, PERIOD_TOL, &opts) {
            Ok(p) => row.period = Some(p),
            Err(e) => row.notes.push(format!("period: {e}")),
        }
    }

    if row.measured.is_some() {
        apply_prediction(&mut row, sc, predict(sc, x0));
    } else {
        row.status = Status::Failed;
    }
    out.comparison = row;
    out
}

/// Runs every (scenario, start) pair on a pool of `jobs` threads. Results
/// come back ordered by scenario then start index.
pub fn run(scenarios: &[Scenario], jobs: usize) -> Result<Vec<(usize, StartResult)>, CliError> {
    let tasks: Vec<(usize, usize)> = scenarios
        .iter()
        .enumerate()
        .flat_map(|(s, sc)| (0..sc.starts.len()).map(move |i| (s, i)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        tasks
            .par_iter()
            .map(|&(s, i)| (s, run_start(&scenarios[s], i)))
            .collect()
    }))
}

/// Analytic predictions only.
pub fn predict_all(scenarios: &[Scenario]) -> Report {
    let mut rows = Vec::new();
    for sc in scenarios {
        for i in 0..sc.starts.len() {
            let mut row = blank(sc, i);
            apply_prediction(&mut row, sc, predict(sc, &sc.starts[i]));
            if row.status == Status::Failed && row.notes.is_empty() {
                row.notes.push("no prediction".into());
            }
            if row.predicted.is_some() {
                row.status = Status::Pass;
            }
            rows.push(row);
        }
    }
    Report::new(rows)
}

/// `# schema_version=.. generated=<unix seconds>`, the only line that varies between runs.
pub fn header() -> String {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("# schema_version={SCHEMA_VERSION} generated={secs}\n")
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format_real(*x)).collect::<Vec<_>>().join(",")
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(header().as_bytes()).map_err(io_err(path))?;
    f.write_all(body.as_bytes()).map_err(io_err(path))
}

/// Drift checkpoints of one scenario.
pub fn drift_csv(sc: &Scenario, results: &[&StartResult]) -> String {
    let d = sc.dim();
    let mut s = String::from("scenario_id,start_index,t");
    for j in 1..=d {
        write!(s, ",X{j}").unwrap();
    }
    for j in 1..=d {
        write!(s, ",drift{j}").unwrap();
    }
    s.push('\n');
    for r in results {
        for cp in &r.checkpoints {
            writeln!(
                s,
                "{},{},{},{},{}",
                sc.id,
                r.comparison.start_index,
                format_real(cp.t),
                join(&cp.x),
                join(&cp.drift)
            )
            .unwrap();
        }
    }
    s
}

pub fn residual_csv(sc: &Scenario, results: &[&StartResult]) -> String {
    let mut s = String::from("scenario_id,start_index,psi_id,horizon,residual,bound\n");
    for r in results {
        for rec in &r.residuals {
            writeln!(
                s,
                "{},{},{},{},{},{}",
                sc.id,
                r.comparison.start_index,
                rec.psi_id,
                format_real(rec.horizon),
                format_real(rec.residual),
                format_real(rec.bound)
            )
            .unwrap();
        }
    }
    s
}

/// Long format: one line per drift component.
pub fn comparison_csv(report: &Report) -> String {
    let mut s = String::from(
        "scenario_id,start_index,family,status,case_tag,component,measured,predicted,abs_error,allowed,\
         stationary_exit,residual_max,residual_bound,period_found,period_tau,period_k,notes\n",
    );
    let opt = |v: Option<f64>| v.map(format_real).unwrap_or_default();
    for r in &report.rows {
        let d = r.x0.len();
        let (res_max, res_bound) = r
            .residuals
            .as_ref()
            .map_or((None, None), |s| (Some(s.max_residual), Some(s.max_bound)));
        let (found, tau, k) = match &r.period {
            Some(p) => (
                p.found.to_string(),
                if p.found { format_real(p.tau) } else { String::new() },
                p.lattice.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "),
            ),
            None => (String::new(), String::new(), String::new()),
        };
        let notes = r.notes.join("; ").replace('"', "'");
        for j in 0..d {
            let pick = |v: &Option<Vec<f64>>| v.as_ref().map(|v| v[j]);
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},\"{}\"",
                r.scenario_id,
                r.start_index,
                r.family,
                r.status.as_str(),
                r.case_tag.as_deref().unwrap_or(""),
                j + 1,
                opt(pick(&r.measured)),
                opt(pick(&r.predicted)),
                opt(pick(&r.abs_error)),
                opt(r.allowed),
                r.stationary_exit,
                opt(res_max),
                opt(res_bound),
                found,
                tau,
                k,
                notes
            )
            .unwrap();
        }
    }
    s
}

/// Writes every artifact under `out` and returns the merged report.
///
/// Layout: `comparison.csv`, `comparison.json`, and per scenario
/// `<id>/drift.csv`, `<id>/residuals.csv`, `<id>/measure_<start>.csv`.
pub fn write_outputs(out: &Path, scenarios: &[Scenario], results: &[(usize, StartResult)]) -> Result<Report, CliError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    for (s, sc) in scenarios.iter().enumerate() {
        let dir = out.join(&sc.id);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mine: Vec<&StartResult> = results.iter().filter(|(i, _)| *i == s).map(|(_, r)| r).collect();
        write_file(&dir.join("drift.csv"), &drift_csv(sc, &mine))?;
        if sc.measures {
            write_file(&dir.join("residuals.csv"), &residual_csv(sc, &mine))?;
            for r in &mine {
                if let Some(mu) = &r.measure {
                    let mut body = Vec::new();
                    mu.write_csv(&mut body).expect("writing to memory");
                    let path = dir.join(format!("measure_{}.csv", r.comparison.start_index));
                    write_file(&path, std::str::from_utf8(&body).expect("csv is utf-8"))?;
                }
            }
        }
    }
    let report = Report::new(results.iter().map(|(_, r)| r.comparison.clone()).collect());
    write_file(&out.join("comparison.csv"), &comparison_csv(&report))?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
    let path = out.join("comparison.json");
    fs::write(&path, json + "\n").map_err(io_err(&path))?;
    Ok(report)
}

/// The human-readable summary printed after a run.
pub fn summary(report: &Report) -> String {
    let mut s = String::new();
    for r in &report.rows {
        let err = r
            .abs_error
            .as_ref()
            .map(|e| format!("{:.2e}", e.iter().cloned().fold(0.0, f64::max)))
            .unwrap_or_else(|| "-".into());
        writeln!(
            s,
            "{:<11} {}[{}] {} err {}",
            r.status.as_str(),
            r.scenario_id,
            r.start_index,
            r.case_tag.as_deref().unwrap_or("-"),
            err
        )
        .unwrap();
    }
    let bad = report.rows.iter().filter(|r| r.status.is_failure()).count();
    writeln!(s, "{} rows, {} outside tolerance or failed", report.rows.len(), bad).unwrap();
    s
}
