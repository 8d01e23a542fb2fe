//! Flat `section.key = value` experiment configuration.
//!
//! ```text
//! # comments start with '#'
//! model.n = 1
//! model.profile = power
//! model.exponent = 3
//! grid.cells = 512
//! ```
//!
//! Every violation in a document is reported, each with its line number.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::estimates::DyadicWindows;
use crate::grid::{Grading, RadialGrid};
use crate::model::{ForcingProfile, ModelEnd, ModelError};
use crate::solver::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    Zero,
    Power,
    DampedOscillatory,
}

impl ProfileKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProfileKind::Zero => "zero",
            ProfileKind::Power => "power",
            ProfileKind::DampedOscillatory => "damped_oscillatory",
        }
    }
}

impl FromStr for ProfileKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "zero" => Ok(ProfileKind::Zero),
            "power" => Ok(ProfileKind::Power),
            "damped_oscillatory" => Ok(ProfileKind::DampedOscillatory),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub n: u32,
    pub t0: f64,
    pub profile: ProfileKind,
    pub amplitude: f64,
    /// The decay exponent `N` of the forcing.
    pub exponent: f64,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSection {
    /// Truncation `T`; defaults to `1000 t0`.
    pub t_max: Option<f64>,
    pub cells: usize,
    pub grading: Grading,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSection {
    /// Weights for the `eps`-scaling check; empty means
    /// `min(0.5, (N - 1 - 1/n) / 2)`.
    pub deltas: Vec<f64>,
    pub window_ratio: f64,
    pub window_step: f64,
    pub window_min_nodes: usize,
    pub lemma_samples: usize,
    pub lemma_dims: Vec<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub csv: bool,
    pub manifest: bool,
    /// Wall-clock per stage, written to a separate file so the manifest
    /// stays byte-stable.
    pub timings: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSection {
    pub eps: Vec<f64>,
    pub exponents: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub grid: GridSection,
    pub solver: SolverConfig,
    pub analysis: AnalysisSection,
    pub output: OutputSection,
    pub sweep: SweepSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelSection {
                n: 1,
                t0: 2.0,
                profile: ProfileKind::Zero,
                amplitude: 1.0,
                exponent: 3.0,
                frequency: 0.0,
            },
            grid: GridSection {
                t_max: None,
                cells: 512,
                grading: Grading::Geometric,
            },
            solver: SolverConfig::default(),
            analysis: AnalysisSection {
                deltas: Vec::new(),
                window_ratio: 4.0,
                window_step: 2.0,
                window_min_nodes: 8,
                lemma_samples: 10_000,
                lemma_dims: (2..=8).collect(),
                seed: 0,
            },
            output: OutputSection {
                dir: PathBuf::from("out"),
                csv: true,
                manifest: true,
                timings: true,
            },
            sweep: SweepSection {
                eps: Vec::new(),
                exponents: Vec::new(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Syntax {
        line: usize,
        text: String,
    },
    UnknownKey {
        line: usize,
        key: String,
    },
    DuplicateKey {
        key: String,
        first: usize,
        second: usize,
    },
    Type {
        line: usize,
        key: String,
        expected: &'static str,
        value: String,
    },
    Invariant {
        line: Option<usize>,
        message: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Syntax { line, text } => {
                write!(
                    f,
                    "line {line}: expected `section.key = value`, got `{text}`"
                )
            }
            Violation::UnknownKey { line, key } => write!(f, "line {line}: unknown key `{key}`"),
            Violation::DuplicateKey { key, first, second } => {
                write!(f, "lines {first} and {second}: duplicate key `{key}`")
            }
            Violation::Type {
                line,
                key,
                expected,
                value,
            } => write!(f, "line {line}: `{key}` expects {expected}, got `{value}`"),
            Violation::Invariant {
                line: Some(l),
                message,
            } => write!(f, "line {l}: {message}"),
            Violation::Invariant {
                line: None,
                message,
            } => f.write_str(message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigError {
    pub violations: Vec<Violation>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} configuration error(s):", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  {v}")?;
        }
        Ok(())
    }
}

const KEYS: &[&str] = &[
    "model.n",
    "model.t0",
    "model.profile",
    "model.amplitude",
    "model.exponent",
    "model.frequency",
    "grid.t_max",
    "grid.cells",
    "grid.grading",
    "solver.eps_start",
    "solver.eps_ratio",
    "solver.eps_floor",
    "solver.newton_tol",
    "solver.newton_max_iter",
    "solver.line_search_halvings",
    "solver.order",
    "analysis.deltas",
    "analysis.window_ratio",
    "analysis.window_step",
    "analysis.window_min_nodes",
    "analysis.lemma_samples",
    "analysis.lemma_dims",
    "analysis.seed",
    "output.dir",
    "output.csv",
    "output.manifest",
    "output.timings",
    "sweep.eps",
    "sweep.exponents",
];

struct Reader {
    entries: BTreeMap<String, (usize, String)>,
    violations: Vec<Violation>,
}

impl Reader {
    fn line(&self, key: &str) -> Option<usize> {
        self.entries.get(key).map(|(l, _)| *l)
    }

    fn get<T>(
        &mut self,
        key: &str,
        expected: &'static str,
        slot: &mut T,
        parse: impl Fn(&str) -> Option<T>,
    ) {
        if let Some((line, raw)) = self.entries.get(key) {
            match parse(raw) {
                Some(v) => *slot = v,
                None => self.violations.push(Violation::Type {
                    line: *line,
                    key: key.to_string(),
                    expected,
                    value: raw.clone(),
                }),
            }
        }
    }

    fn float(&mut self, key: &str, slot: &mut f64) {
        self.get(key, "a finite number", slot, |s| {
            s.parse::<f64>().ok().filter(|v| v.is_finite())
        });
    }

    fn uint<T: FromStr>(&mut self, key: &str, slot: &mut T) {
        self.get(key, "a non-negative integer", slot, |s| s.parse::<T>().ok());
    }

    fn flag(&mut self, key: &str, slot: &mut bool) {
        self.get(key, "true or false", slot, |s| s.parse::<bool>().ok());
    }

    fn list<T: FromStr>(&mut self, key: &str, expected: &'static str, slot: &mut Vec<T>) {
        self.get(key, expected, slot, |s| {
            if s.trim().is_empty() {
                return Some(Vec::new());
            }
            s.split(',').map(|p| p.trim().parse::<T>().ok()).collect()
        });
    }

    fn invariant(&mut self, key: Option<&str>, message: String) {
        let line = key.and_then(|k| self.line(k));
        self.violations.push(Violation::Invariant { line, message });
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut reader = Reader {
        entries: BTreeMap::new(),
        violations: Vec::new(),
    };
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            reader.violations.push(Violation::Syntax {
                line,
                text: content.to_string(),
            });
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        if !key.contains('.') || key.contains(char::is_whitespace) {
            reader.violations.push(Violation::Syntax {
                line,
                text: content.to_string(),
            });
            continue;
        }
        if !KEYS.contains(&key) {
            reader.violations.push(Violation::UnknownKey {
                line,
                key: key.to_string(),
            });
            continue;
        }
        if let Some((first, _)) = reader.entries.get(key) {
            reader.violations.push(Violation::DuplicateKey {
                key: key.to_string(),
                first: *first,
                second: line,
            });
            continue;
        }
        reader
            .entries
            .insert(key.to_string(), (line, value.to_string()));
    }

    let mut cfg = ExperimentConfig::default();
    let r = &mut reader;
    r.uint("model.n", &mut cfg.model.n);
    r.float("model.t0", &mut cfg.model.t0);
    r.get(
        "model.profile",
        "one of zero, power, damped_oscillatory",
        &mut cfg.model.profile,
        |s| s.parse().ok(),
    );
    r.float("model.amplitude", &mut cfg.model.amplitude);
    r.float("model.exponent", &mut cfg.model.exponent);
    r.float("model.frequency", &mut cfg.model.frequency);
    let mut t_max = f64::NAN;
    r.float("grid.t_max", &mut t_max);
    if !t_max.is_nan() {
        cfg.grid.t_max = Some(t_max);
    }
    r.uint("grid.cells", &mut cfg.grid.cells);
    r.get(
        "grid.grading",
        "one of uniform_t, uniform_quasi, geometric",
        &mut cfg.grid.grading,
        |s| s.parse::<Grading>().ok(),
    );
    r.float("solver.eps_start", &mut cfg.solver.eps_start);
    r.float("solver.eps_ratio", &mut cfg.solver.eps_ratio);
    r.float("solver.eps_floor", &mut cfg.solver.eps_floor);
    r.float("solver.newton_tol", &mut cfg.solver.newton_tol);
    r.uint("solver.newton_max_iter", &mut cfg.solver.newton_max_iter);
    r.uint(
        "solver.line_search_halvings",
        &mut cfg.solver.line_search_halvings,
    );
    r.uint("solver.order", &mut cfg.solver.order);
    r.list(
        "analysis.deltas",
        "a comma-separated list of numbers",
        &mut cfg.analysis.deltas,
    );
    r.float("analysis.window_ratio", &mut cfg.analysis.window_ratio);
    r.float("analysis.window_step", &mut cfg.analysis.window_step);
    r.uint(
        "analysis.window_min_nodes",
        &mut cfg.analysis.window_min_nodes,
    );
    r.uint("analysis.lemma_samples", &mut cfg.analysis.lemma_samples);
    r.list(
        "analysis.lemma_dims",
        "a comma-separated list of integers",
        &mut cfg.analysis.lemma_dims,
    );
    r.uint("analysis.seed", &mut cfg.analysis.seed);
    r.get("output.dir", "a path", &mut cfg.output.dir, |s| {
        (!s.is_empty()).then(|| PathBuf::from(s))
    });
    r.flag("output.csv", &mut cfg.output.csv);
    r.flag("output.manifest", &mut cfg.output.manifest);
    r.flag("output.timings", &mut cfg.output.timings);
    r.list(
        "sweep.eps",
        "a comma-separated list of numbers",
        &mut cfg.sweep.eps,
    );
    r.list(
        "sweep.exponents",
        "a comma-separated list of numbers",
        &mut cfg.sweep.exponents,
    );

    validate(&cfg, r);
    if reader.violations.is_empty() {
        Ok(cfg)
    } else {
        reader.violations.sort_by_key(|v| match v {
            Violation::Syntax { line, .. }
            | Violation::UnknownKey { line, .. }
            | Violation::Type { line, .. } => *line,
            Violation::DuplicateKey { second, .. } => *second,
            Violation::Invariant { line, .. } => line.unwrap_or(usize::MAX),
        });
        Err(ConfigError {
            violations: reader.violations,
        })
    }
}

fn validate(cfg: &ExperimentConfig, r: &mut Reader) {
    let m = &cfg.model;
    if m.n < 1 {
        r.invariant(Some("model.n"), "model.n must be at least 1".into());
    }
    if !(m.t0 > 1.0) {
        r.invariant(
            Some("model.t0"),
            format!("model.t0 must exceed 1, got {}", m.t0),
        );
    }
    let n = m.n.max(1) as f64;
    let forced = m.profile != ProfileKind::Zero;
    if forced && !(m.exponent > 1.0 + 1.0 / n) {
        r.invariant(
            Some("model.exponent"),
            format!(
                "model.exponent must exceed 1 + 1/n = {}, got {}",
                1.0 + 1.0 / n,
                m.exponent
            ),
        );
    }
    let t_max = cfg.t_max();
    if !(t_max > m.t0) {
        r.invariant(
            Some("grid.t_max"),
            format!("grid.t_max must exceed model.t0, got {t_max}"),
        );
    }
    if cfg.grid.cells < crate::grid::MIN_CELLS {
        r.invariant(
            Some("grid.cells"),
            format!(
                "grid.cells must be at least {}, got {}",
                crate::grid::MIN_CELLS,
                cfg.grid.cells
            ),
        );
    }
    if let Err(e) = cfg.solver.validate() {
        r.invariant(None, e.to_string());
    }
    let max_delta = if forced {
        m.exponent - 1.0 - 1.0 / n
    } else {
        f64::INFINITY
    };
    for &d in &cfg.analysis.deltas {
        if !(d > 0.0 && d < max_delta) {
            r.invariant(
                Some("analysis.deltas"),
                format!("delta {d} outside the admissible range (0, {max_delta})"),
            );
        }
    }
    let a = &cfg.analysis;
    if !(a.window_step > 1.0 && a.window_ratio >= a.window_step) {
        r.invariant(
            Some("analysis.window_ratio"),
            "windows need window_ratio >= window_step > 1".into(),
        );
    }
    if a.window_min_nodes < 2 {
        r.invariant(
            Some("analysis.window_min_nodes"),
            "analysis.window_min_nodes must be at least 2".into(),
        );
    }
    if a.lemma_dims.iter().any(|&d| d < 1) {
        r.invariant(
            Some("analysis.lemma_dims"),
            "lemma dimensions must be at least 1".into(),
        );
    }
    if a.lemma_samples < 1 {
        r.invariant(
            Some("analysis.lemma_samples"),
            "analysis.lemma_samples must be positive".into(),
        );
    }
    if cfg.sweep.eps.iter().any(|&e| !(e >= 0.0)) {
        r.invariant(
            Some("sweep.eps"),
            "sweep.eps values must be non-negative".into(),
        );
    }
    if cfg.sweep.exponents.iter().any(|&e| !(e > 1.0 + 1.0 / n)) {
        r.invariant(
            Some("sweep.exponents"),
            format!(
                "sweep.exponents must all exceed 1 + 1/n = {}",
                1.0 + 1.0 / n
            ),
        );
    }
}

impl ExperimentConfig {
    pub fn t_max(&self) -> f64 {
        self.grid.t_max.unwrap_or(1e3 * self.model.t0)
    }

    pub fn profile(&self) -> ForcingProfile {
        let m = &self.model;
        match m.profile {
            ProfileKind::Zero => ForcingProfile::Zero,
            ProfileKind::Power => ForcingProfile::Power {
                amplitude: m.amplitude,
                exponent: m.exponent,
            },
            ProfileKind::DampedOscillatory => ForcingProfile::DampedOscillatory {
                amplitude: m.amplitude,
                exponent: m.exponent,
                frequency: m.frequency,
            },
        }
    }

    /// The model end with its mass constant normalized.
    pub fn build_model(&self) -> Result<ModelEnd, ModelError> {
        ModelEnd::new(self.model.n, self.model.t0, self.profile())?.normalize_mass()
    }

    pub fn build_grid(&self) -> Result<RadialGrid, ModelError> {
        Ok(RadialGrid::with_grading(
            self.grid.grading,
            self.model.n,
            self.model.t0,
            self.t_max(),
            self.grid.cells,
        )?)
    }

    pub fn windows(&self) -> DyadicWindows {
        DyadicWindows {
            start: None,
            end: None,
            ratio: self.analysis.window_ratio,
            step: self.analysis.window_step,
            min_nodes: self.analysis.window_min_nodes,
        }
    }

    /// The configured deltas, or the default weight for the profile.
    pub fn deltas(&self) -> Vec<f64> {
        if !self.analysis.deltas.is_empty() {
            return self.analysis.deltas.clone();
        }
        let n = self.model.n as f64;
        match self.model.profile {
            ProfileKind::Zero => vec![0.5],
            _ => vec![0.5_f64.min(0.5 * (self.model.exponent - 1.0 - 1.0 / n))],
        }
    }

    /// `(key, value)` pairs in document order; the inverse of
    /// [`parse_config`].
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        fn list<T: ToString>(v: &[T]) -> String {
            v.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
        }
        let (m, g, s, a, o) = (
            &self.model,
            &self.grid,
            &self.solver,
            &self.analysis,
            &self.output,
        );
        let mut out = vec![
            ("model.n", m.n.to_string()),
            ("model.t0", m.t0.to_string()),
            ("model.profile", m.profile.as_str().to_string()),
            ("model.amplitude", m.amplitude.to_string()),
            ("model.exponent", m.exponent.to_string()),
            ("model.frequency", m.frequency.to_string()),
        ];
        if let Some(t) = g.t_max {
            out.push(("grid.t_max", t.to_string()));
        }
        out.extend([
            ("grid.cells", g.cells.to_string()),
            ("grid.grading", g.grading.to_string()),
            ("solver.eps_start", s.eps_start.to_string()),
            ("solver.eps_ratio", s.eps_ratio.to_string()),
            ("solver.eps_floor", s.eps_floor.to_string()),
            ("solver.newton_tol", s.newton_tol.to_string()),
            ("solver.newton_max_iter", s.newton_max_iter.to_string()),
            (
                "solver.line_search_halvings",
                s.line_search_halvings.to_string(),
            ),
            ("solver.order", s.order.to_string()),
        ]);
        if !a.deltas.is_empty() {
            out.push(("analysis.deltas", list(&a.deltas)));
        }
        out.extend([
            ("analysis.window_ratio", a.window_ratio.to_string()),
            ("analysis.window_step", a.window_step.to_string()),
            ("analysis.window_min_nodes", a.window_min_nodes.to_string()),
            ("analysis.lemma_samples", a.lemma_samples.to_string()),
            ("analysis.lemma_dims", list(&a.lemma_dims)),
            ("analysis.seed", a.seed.to_string()),
            ("output.dir", o.dir.display().to_string()),
            ("output.csv", o.csv.to_string()),
            ("output.manifest", o.manifest.to_string()),
            ("output.timings", o.timings.to_string()),
        ]);
        if !self.sweep.eps.is_empty() {
            out.push(("sweep.eps", list(&self.sweep.eps)));
        }
        if !self.sweep.exponents.is_empty() {
            out.push(("sweep.exponents", list(&self.sweep.exponents)));
        }
        out
    }
}

/// Renders a configuration in the flat format.
pub fn emit_config(cfg: &ExperimentConfig) -> String {
    cfg.entries()
        .into_iter()
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config("model.n = 1\nmodel.profile = zero\n").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.t_max(), 2000.0);
        assert_eq!(cfg.deltas(), vec![0.5]);
    }

    #[test]
    fn non_integrable_exponent_rejected() {
        let err =
            parse_config("model.n = 1\nmodel.profile = power\nmodel.exponent = 1.0\n").unwrap_err();
        assert_eq!(err.violations.len(), 1);
        assert!(
            matches!(&err.violations[0], Violation::Invariant { line: Some(3), message } if message.contains("1 + 1/n = 2"))
        );
    }

    #[test]
    fn duplicate_key_reports_both_lines() {
        let err = parse_config("model.n = 1\n\nmodel.n = 2\n").unwrap_err();
        assert_eq!(
            err.violations,
            vec![Violation::DuplicateKey {
                key: "model.n".into(),
                first: 1,
                second: 3
            }]
        );
    }

    #[test]
    fn all_violations_collected() {
        let text =
            "model.n = two\nmodel.colour = red\nnonsense\ngrid.cells = 3\nsolver.eps_ratio = 1.5\n";
        let err = parse_config(text).unwrap_err();
        let lines: Vec<Option<usize>> = err
            .violations
            .iter()
            .map(|v| match v {
                Violation::Syntax { line, .. }
                | Violation::UnknownKey { line, .. }
                | Violation::Type { line, .. } => Some(*line),
                Violation::DuplicateKey { second, .. } => Some(*second),
                Violation::Invariant { line, .. } => *line,
            })
            .collect();
        assert_eq!(lines, vec![Some(1), Some(2), Some(3), Some(4), None]);
        let shown = err.to_string();
        assert!(shown.contains("line 2: unknown key `model.colour`"));
    }

    #[test]
    fn emitted_config_round_trips() {
        let text = "model.n = 3\nmodel.profile = damped_oscillatory\nmodel.amplitude = -0.25\n\
                    model.exponent = 3.3333333333333335\nmodel.frequency = 2\ngrid.t_max = 12345.5\n\
                    grid.grading = uniform_quasi\nsolver.eps_floor = 1e-12\nsolver.order = 4\n\
                    analysis.deltas = 0.1, 0.25\nanalysis.lemma_dims = 2, 3\nanalysis.seed = 18446744073709551615\n\
                    output.dir = /tmp/some dir\noutput.timings = false\nsweep.eps = 1, 0.5\nsweep.exponents = 3, 4.5\n";
        let cfg = parse_config(text).unwrap();
        let again = parse_config(&emit_config(&cfg)).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(emit_config(&cfg), emit_config(&again));
        assert_eq!(cfg.solver.eps_floor, 1e-12);
        assert_eq!(cfg.output.dir, PathBuf::from("/tmp/some dir"));
    }

    #[test]
    fn default_delta_follows_exponent() {
        let cfg =
            parse_config("model.n = 1\nmodel.profile = power\nmodel.exponent = 2.5\n").unwrap();
        assert_eq!(cfg.deltas(), vec![0.25]);
        let cfg =
            parse_config("model.n = 2\nmodel.profile = power\nmodel.exponent = 3.5\n").unwrap();
        assert_eq!(cfg.deltas(), vec![0.5]);
    }
}
