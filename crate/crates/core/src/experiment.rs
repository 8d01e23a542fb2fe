//! Experiment orchestration: solve runs, sweeps, lemma suites and fits of
//! archived CSVs, each producing a JSON manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{parse_config, ConfigError, ExperimentConfig, ProfileKind};
use crate::estimates::{
    fit_decay, run_all, verify_main_theorem, verify_ueps_scaling, DecayFit, DecayFits,
    DyadicWindows, LemmaReport, PinchReport, ScalingReport,
};
use crate::grid::RadialField;
use crate::io::{emit_csv, read_csv, write_json, IoError};
use crate::model::ModelEnd;
use crate::solver::{closed_form_eps0, continue_to_limit, solve_eps, Solution};

/// Bumped whenever the manifest layout changes.
pub const SCHEMA_VERSION: u32 = 1;
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SOLUTION_FILE: &str = "solution.csv";
pub const TIMINGS_FILE: &str = "timings.json";

/// Process exit status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Success,
    ValidationFailure,
    SolverFailure,
    AcceptanceFailure,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Success => 0,
            RunStatus::ValidationFailure => 1,
            RunStatus::SolverFailure => 2,
            RunStatus::AcceptanceFailure => 3,
        }
    }

    /// The more severe of two outcomes; solver failures dominate.
    fn worst(self, other: RunStatus) -> RunStatus {
        let rank = |s: RunStatus| match s {
            RunStatus::Success => 0,
            RunStatus::AcceptanceFailure => 1,
            RunStatus::ValidationFailure => 2,
            RunStatus::SolverFailure => 3,
        };
        if rank(other) > rank(self) {
            other
        } else {
            self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub dim: u32,
    pub t0: f64,
    pub t_max: f64,
    pub cells: usize,
    /// The mass constant `c0`.
    pub c0: f64,
    pub sup_forcing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub eps: f64,
    pub newton_iterations: usize,
    pub final_residual: f64,
    pub sup_u: f64,
    /// `S(eps) = sup_t |u_eps| t^delta` for the first configured delta.
    pub scaled_u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSummary {
    pub newton_iterations: usize,
    pub final_residual: f64,
    pub sup_u: f64,
    pub sup_excess: f64,
    pub sup_base_deviation: f64,
    pub sup_fiber_deviation: f64,
    pub sup_laplacian: f64,
    /// `sup |u - u_oracle|` against the quadrature solution.
    pub oracle_sup_error: Option<f64>,
}

/// Pass flags of the checks a run performs; `None` when not run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceFlags {
    pub main_theorem_envelope: Option<bool>,
    pub scaling_envelope: Option<bool>,
    pub trivial_bound: Option<bool>,
    pub lemma_suites: Option<bool>,
}

impl AcceptanceFlags {
    fn all_pass(&self) -> bool {
        [
            self.main_theorem_envelope,
            self.scaling_envelope,
            self.trivial_bound,
            self.lemma_suites,
        ]
        .iter()
        .all(|f| f.unwrap_or(true))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub artifact_version: String,
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
    pub model: Option<ModelSummary>,
    pub trace: Vec<TraceEntry>,
    pub limit: Option<LimitSummary>,
    /// Asymptotic power-law fit of each field of the limit.
    pub fits: BTreeMap<String, Option<DecayFit>>,
    pub main_theorem: Option<PinchReport>,
    pub scaling: Vec<ScalingReport>,
    pub lemmas: Vec<LemmaReport>,
    pub acceptance: AcceptanceFlags,
    pub status: RunStatus,
}

impl RunManifest {
    pub fn empty(command: &str, cfg: &ExperimentConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            artifact_version: ARTIFACT_VERSION.to_string(),
            command: command.to_string(),
            config: config_echo(cfg),
            stages: Vec::new(),
            model: None,
            trace: Vec::new(),
            limit: None,
            fits: BTreeMap::new(),
            main_theorem: None,
            scaling: Vec::new(),
            lemmas: Vec::new(),
            acceptance: AcceptanceFlags::default(),
            status: RunStatus::Success,
        }
    }

    fn record<T, E: fmt::Display>(&mut self, name: &str, result: Result<T, E>) -> Option<T> {
        let (status, error, value) = match result {
            Ok(v) => (StageStatus::Ok, None, Some(v)),
            Err(e) => (StageStatus::Failed, Some(e.to_string()), None),
        };
        self.stages.push(StageRecord {
            name: name.to_string(),
            status,
            error,
        });
        value
    }

    fn skip(&mut self, name: &str) {
        self.stages.push(StageRecord {
            name: name.to_string(),
            status: StageStatus::Skipped,
            error: None,
        });
    }

    fn finish(&mut self) {
        let failed = self.stages.iter().any(|s| s.status == StageStatus::Failed);
        self.status = if failed {
            RunStatus::SolverFailure
        } else if !self.acceptance.all_pass() {
            RunStatus::AcceptanceFailure
        } else {
            RunStatus::Success
        };
    }
}

/// Wall-clock seconds per stage. Kept out of the manifest so the manifest
/// is byte-stable across runs.
pub type Timings = BTreeMap<String, f64>;

pub fn config_echo(cfg: &ExperimentConfig) -> BTreeMap<String, String> {
    cfg.entries()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

/// Rebuilds the configuration from a manifest's config echo.
pub fn config_from_echo(echo: &BTreeMap<String, String>) -> Result<ExperimentConfig, ConfigError> {
    let text: String = echo.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    parse_config(&text)
}

struct Clock(Timings);

impl Clock {
    fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.0
            .insert(name.to_string(), start.elapsed().as_secs_f64());
        out
    }
}

/// Everything a solve run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub timings: Timings,
    pub model: Option<ModelEnd>,
    pub limit: Option<Solution>,
}

#[derive(Debug, Clone, Copy)]
struct Stages {
    lemmas: bool,
}

fn scaled_sup(field: &RadialField, delta: f64) -> f64 {
    field
        .nodes()
        .iter()
        .zip(field.values())
        .fold(0.0, |m, (&t, &v)| m.max(v.abs() * t.powf(delta)))
}

fn asymptotic(field: &RadialField, windows: &DyadicWindows) -> Option<DecayFit> {
    fit_decay(&field.map(|_, v| v.abs()), windows)
        .asymptotic()
        .copied()
}

fn solve_pipeline(cfg: &ExperimentConfig, command: &str, stages: Stages) -> RunOutcome {
    let mut m = RunManifest::empty(command, cfg);
    let mut clock = Clock(Timings::new());
    let deltas = cfg.deltas();

    let model = clock.time("normalize_mass", || cfg.build_model());
    let model = m.record("normalize_mass", model);
    let grid = model
        .as_ref()
        .and_then(|_| m.record("build_grid", cfg.build_grid()).map(Arc::new));
    let continuation = match (&model, &grid) {
        (Some(model), Some(grid)) => {
            m.model = Some(ModelSummary {
                dim: model.dim(),
                t0: model.t0(),
                t_max: grid.end(),
                cells: grid.cells(),
                c0: model.mass(),
                sup_forcing: model.sup_forcing(grid),
            });
            let run = clock.time("continue_to_limit", || {
                continue_to_limit(model, Arc::clone(grid), &cfg.solver)
            });
            m.record("continue_to_limit", run)
        }
        _ => {
            m.skip("continue_to_limit");
            None
        }
    };

    let mut limit = None;
    match (&model, &grid, continuation) {
        (Some(model), Some(grid), Some(cont)) => {
            m.trace = cont
                .trace
                .iter()
                .map(|s| TraceEntry {
                    eps: s.eps(),
                    newton_iterations: s.newton_report().iterations,
                    final_residual: s.newton_report().final_residual,
                    sup_u: s.u().sup_abs(),
                    scaled_u: scaled_sup(s.u(), deltas[0]),
                })
                .collect();
            let sol = &cont.limit;
            let oracle = clock.time("oracle", || closed_form_eps0(model, grid));
            let oracle = m.record("oracle", oracle);
            let ratios = sol.ratios();
            let laplacian = sol.laplacian(model.dim());
            m.limit = Some(LimitSummary {
                newton_iterations: sol.newton_report().iterations,
                final_residual: sol.newton_report().final_residual,
                sup_u: sol.u().sup_abs(),
                sup_excess: sol.excess().sup_abs(),
                sup_base_deviation: ratios.base_deviation.sup_abs(),
                sup_fiber_deviation: ratios.fiber_deviation.sup_abs(),
                sup_laplacian: laplacian.sup_abs(),
                oracle_sup_error: oracle.map(|o| sol.sup_distance(&o)),
            });
            let windows = cfg.windows();
            for (name, field) in [
                ("u", sol.u()),
                ("h_minus_t", sol.excess()),
                ("lambda_base_minus_1", &ratios.base_deviation),
                ("lambda_fiber_minus_1", &ratios.fiber_deviation),
                ("laplacian_u", &laplacian),
            ] {
                m.fits.insert(name.to_string(), asymptotic(field, &windows));
            }

            let pinch = clock.time("verify_main_theorem", || {
                verify_main_theorem(model, sol, &windows)
            });
            if let Some(p) = m.record("verify_main_theorem", pinch) {
                m.acceptance.main_theorem_envelope = Some(p.envelope_holds);
                m.main_theorem = Some(p);
            }
            let scaling = clock.time("verify_ueps_scaling", || {
                deltas
                    .iter()
                    .map(|&d| verify_ueps_scaling(model, &cont.trace, d))
                    .collect::<Result<Vec<_>, _>>()
            });
            if let Some(reports) = m.record("verify_ueps_scaling", scaling) {
                m.acceptance.scaling_envelope = Some(reports.iter().all(|r| r.envelope_holds));
                m.acceptance.trivial_bound = Some(reports.iter().all(|r| r.trivial_bound_holds));
                m.scaling = reports;
            }
            limit = Some(cont.limit);
        }
        _ => {
            for name in ["oracle", "verify_main_theorem", "verify_ueps_scaling"] {
                m.skip(name);
            }
        }
    }

    if stages.lemmas {
        lemma_stage(cfg, &mut m, &mut clock);
    }
    m.finish();
    RunOutcome {
        manifest: m,
        timings: clock.0,
        model,
        limit,
    }
}

fn lemma_stage(cfg: &ExperimentConfig, m: &mut RunManifest, clock: &mut Clock) {
    let a = &cfg.analysis;
    let reports = clock.time("lemma_suites", || {
        run_all(&a.lemma_dims, a.lemma_samples, a.seed)
    });
    if let Some(reports) = m.record("lemma_suites", reports) {
        m.acceptance.lemma_suites = Some(reports.iter().all(|r| r.pass));
        m.lemmas = reports;
    }
}

/// Runs the full pipeline without touching the file system.
pub fn execute(cfg: &ExperimentConfig) -> RunOutcome {
    solve_pipeline(cfg, "solve", Stages { lemmas: true })
}

fn write_run(
    cfg: &ExperimentConfig,
    dir: &Path,
    outcome: &RunOutcome,
) -> Result<Vec<PathBuf>, IoError> {
    let mut written = Vec::new();
    if cfg.output.csv {
        if let (Some(model), Some(limit)) = (&outcome.model, &outcome.limit) {
            let path = dir.join(SOLUTION_FILE);
            emit_csv(model, limit, &path)?;
            written.push(path);
        }
    }
    if cfg.output.timings {
        let path = dir.join(TIMINGS_FILE);
        write_json(&outcome.timings, &path)?;
        written.push(path);
    }
    if cfg.output.manifest {
        let path = dir.join(MANIFEST_FILE);
        emit_manifest(&outcome.manifest, &path)?;
        written.push(path);
    }
    Ok(written)
}

pub fn emit_manifest<T: Serialize>(manifest: &T, path: &Path) -> Result<(), IoError> {
    write_json(manifest, path)
}

/// Normalizes the model, runs the continuation, checks both theorems and
/// the lemma suites, and writes CSV, manifest and timings to the output
/// directory. Stage failures are recorded in the manifest.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome, IoError> {
    let outcome = execute(cfg);
    write_run(cfg, &cfg.output.dir, &outcome)?;
    Ok(outcome)
}

/// Lemma suites only.
pub fn run_lemmas(cfg: &ExperimentConfig) -> Result<RunOutcome, IoError> {
    let mut m = RunManifest::empty("lemmas", cfg);
    let mut clock = Clock(Timings::new());
    lemma_stage(cfg, &mut m, &mut clock);
    m.finish();
    let outcome = RunOutcome {
        manifest: m,
        timings: clock.0,
        model: None,
        limit: None,
    };
    write_run(cfg, &cfg.output.dir, &outcome)?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub eps: f64,
    pub newton_iterations: usize,
    pub final_residual: f64,
    pub sup_u: f64,
    pub scaled_u: f64,
    pub csv: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentRun {
    pub exponent: f64,
    pub directory: String,
    pub manifest: RunManifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub schema_version: u32,
    pub artifact_version: String,
    pub config: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
    pub eps_points: Vec<SweepPoint>,
    pub exponent_runs: Vec<ExponentRun>,
    pub status: RunStatus,
}

/// Solves at each `sweep.eps` value and reruns the solve pipeline (without
/// lemma suites) for each `sweep.exponents` value, in parallel, each in its
/// own subdirectory.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepManifest, IoError> {
    let dir = &cfg.output.dir;
    let mut stages = RunManifest::empty("sweep", cfg);
    let mut eps_points = Vec::new();
    if !cfg.sweep.eps.is_empty() {
        let result = eps_sweep(cfg);
        if let Some(points) = stages.record("eps_sweep", result) {
            for (k, (point, model, sol)) in points.into_iter().enumerate() {
                let mut point = point;
                if cfg.output.csv {
                    let name = format!("eps_{k:03}.csv");
                    emit_csv(&model, &sol, &dir.join(&name))?;
                    point.csv = Some(name);
                }
                eps_points.push(point);
            }
        }
    }
    let runs: Vec<(f64, String, RunOutcome)> = cfg
        .sweep
        .exponents
        .par_iter()
        .enumerate()
        .map(|(k, &exponent)| {
            let mut sub = cfg.clone();
            if sub.model.profile == ProfileKind::Zero {
                sub.model.profile = ProfileKind::Power;
            }
            sub.model.exponent = exponent;
            sub.analysis.deltas.clear();
            let name = format!("exponent_{k:03}");
            sub.output.dir = dir.join(&name);
            (
                exponent,
                name,
                solve_pipeline(&sub, "solve", Stages { lemmas: false }),
            )
        })
        .collect();
    let mut status = RunStatus::Success;
    let mut exponent_runs = Vec::new();
    for (exponent, name, outcome) in runs {
        let mut sub = cfg.clone();
        sub.output.dir = dir.join(&name);
        write_run(&sub, &sub.output.dir, &outcome)?;
        status = status.worst(outcome.manifest.status);
        exponent_runs.push(ExponentRun {
            exponent,
            directory: name,
            manifest: outcome.manifest,
        });
    }
    stages.finish();
    let manifest = SweepManifest {
        schema_version: SCHEMA_VERSION,
        artifact_version: ARTIFACT_VERSION.to_string(),
        config: stages.config,
        status: status.worst(stages.status),
        stages: stages.stages,
        eps_points,
        exponent_runs,
    };
    if cfg.output.manifest {
        emit_manifest(&manifest, &dir.join(MANIFEST_FILE))?;
    }
    Ok(manifest)
}

type EpsSolve = (SweepPoint, ModelEnd, Solution);

fn eps_sweep(cfg: &ExperimentConfig) -> Result<Vec<EpsSolve>, crate::solver::SolverError> {
    let model = cfg.build_model()?;
    let grid = Arc::new(cfg.build_grid()?);
    let delta = cfg.deltas()[0];
    let mut targets = cfg.sweep.eps.clone();
    targets.sort_by(|a, b| b.total_cmp(a));
    // Walk the continuation ladder down to each target so every solve has
    // a nearby warm start.
    let ladder = cfg.solver.schedule();
    let mut rung = 0;
    let mut warm: Option<Solution> = None;
    let mut out = Vec::new();
    for &eps in &targets {
        while rung < ladder.len() && ladder[rung] > eps {
            warm = Some(solve_eps(
                &model,
                Arc::clone(&grid),
                ladder[rung],
                &cfg.solver,
                warm.as_ref(),
            )?);
            rung += 1;
        }
        let sol = solve_eps(&model, Arc::clone(&grid), eps, &cfg.solver, warm.as_ref())?;
        out.push((
            SweepPoint {
                eps,
                newton_iterations: sol.newton_report().iterations,
                final_residual: sol.newton_report().final_residual,
                sup_u: sol.u().sup_abs(),
                scaled_u: scaled_sup(sol.u(), delta),
                csv: None,
            },
            model.clone(),
            sol.clone(),
        ));
        warm = Some(sol);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub schema_version: u32,
    pub source: String,
    pub windows: DyadicWindows,
    /// Per-window fits of `|field|` for each column.
    pub fits: BTreeMap<String, DecayFits>,
    pub asymptotic: BTreeMap<String, Option<DecayFit>>,
}

/// Re-fits decay exponents of every column of a solution CSV.
pub fn fit_csv(path: &Path, windows: &DyadicWindows) -> Result<FitReport, IoError> {
    let table = read_csv(path)?;
    let fields = table.fields().map_err(|e| IoError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut fits = BTreeMap::new();
    let mut asymptotic_fits = BTreeMap::new();
    for (name, field) in fields {
        let f = fit_decay(&field.map(|_, v| v.abs()), windows);
        asymptotic_fits.insert(name.to_string(), f.asymptotic().copied());
        fits.insert(name.to_string(), f);
    }
    Ok(FitReport {
        schema_version: SCHEMA_VERSION,
        source: path.display().to_string(),
        windows: *windows,
        fits,
        asymptotic: asymptotic_fits,
    })
}
