//! JSON experiment configs, cartesian sweeps and on-disk outputs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{RuleId, DEFAULT_CC_ITERS, DEFAULT_CC_TAU};
use crate::attacks::{AttackId, LittleDirection};
use crate::audit::AuditReport;
use crate::error::{Error, Result};
use crate::problems::ProblemSpec;
use crate::scalar::Scalar;
use crate::simulator::{run, RunConfig, RunResult, StepMetrics, StepParam, Theta1};
use crate::theory::TheoremOutputs;
use crate::SCHEMA_VERSION;

/// Default cap on the number of runs one config may expand to.
pub const DEFAULT_MAX_RUNS: usize = 10_000;

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "RESAM_OUTPUT_DIR";

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

fn default_replicas() -> usize {
    1
}

fn default_max_runs() -> usize {
    DEFAULT_MAX_RUNS
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("resam-out")
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    #[default]
    Quadratic,
    Logistic,
}

/// Lists of values swept over; an empty or absent axis keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub beta: Vec<StepParam>,
    /// Attack names; `"none"` means no attack.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attack: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rule: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub f: Vec<usize>,
}

impl SweepAxes {
    pub fn is_empty(&self) -> bool {
        self.beta.is_empty() && self.attack.is_empty() && self.rule.is_empty() && self.f.is_empty()
    }
}

/// One experiment file: a base run plus sweep axes and replicas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub n: usize,
    pub f: usize,
    pub steps: usize,
    pub gamma: StepParam,
    pub beta: StepParam,
    pub rule: String,
    /// Multi-Krum* selection size; `n - f` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cc_iters: Option<usize>,
    /// Attack name, `"none"` or absent for no attack.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack_zeta: Option<f64>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub little_direction: LittleDirection,
    #[serde(default)]
    pub problem: ProblemKind,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_star: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    /// Samples per class of the logistic dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_seed: Option<u64>,
    /// Base seed; replica `k` (from 1) runs with `seed + k`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub theta1: Theta1,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default, skip_serializing_if = "SweepAxes::is_empty")]
    pub sweep: SweepAxes,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_max_runs")]
    pub max_runs: usize,
    /// Worker threads for sweeps; all logical cores when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Treat a diverged run as a failure.
    #[serde(default, skip_serializing_if = "is_default")]
    pub fail_on_divergence: bool,
}

fn config_error(path: impl Into<String>, err: impl std::fmt::Display) -> Error {
    Error::Config {
        path: path.into(),
        message: err.to_string(),
    }
}

/// One fully resolved run of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedRun {
    pub id: String,
    pub rule: String,
    pub attack: String,
    pub f: usize,
    pub beta: StepParam,
    pub replica: usize,
    pub seed: u64,
    pub config: RunConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config_error("<root>", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| config_error(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn parse_rule(&self, name: &str, path: &str) -> Result<RuleId> {
        let rule = match name.parse::<RuleId>().map_err(|e| config_error(path, e))? {
            RuleId::MultiKrumStar { .. } => RuleId::MultiKrumStar { q: self.q },
            RuleId::Cc { .. } => RuleId::Cc {
                c_tau: self.c_tau.unwrap_or(DEFAULT_CC_TAU),
                iters: self.cc_iters.unwrap_or(DEFAULT_CC_ITERS),
            },
            other => other,
        };
        rule.validate().map_err(|e| config_error(path, e))?;
        Ok(rule)
    }

    fn parse_attack(&self, name: Option<&str>, path: &str) -> Result<Option<AttackId>> {
        match name {
            None | Some("none") => Ok(None),
            Some(name) => {
                let mut attack = AttackId::parse(name, self.attack_zeta).map_err(|e| config_error(path, e))?;
                if let AttackId::Little { direction, .. } = &mut attack {
                    *direction = self.little_direction;
                }
                Ok(Some(attack))
            }
        }
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec> {
        let need = |field: &str| config_error(field, format!("required for problem `{:?}`", self.problem).to_lowercase());
        match self.problem {
            ProblemKind::Quadratic => {
                for (field, set) in [("mu", self.mu.is_some()), ("n_samples", self.n_samples.is_some()), ("batch", self.batch.is_some()), ("reg", self.reg.is_some()), ("data_seed", self.data_seed.is_some())] {
                    if set {
                        return Err(config_error(field, "not used by the quadratic problem"));
                    }
                }
                Ok(ProblemSpec::Quadratic {
                    dim: self.dim,
                    sigma: self.sigma.ok_or_else(|| need("sigma"))?,
                    theta_star: self.theta_star.clone(),
                })
            }
            ProblemKind::Logistic => {
                for (field, set) in [("sigma", self.sigma.is_some()), ("theta_star", self.theta_star.is_some())] {
                    if set {
                        return Err(config_error(field, "not used by the logistic problem"));
                    }
                }
                Ok(ProblemSpec::Logistic {
                    dim: self.dim,
                    mu: self.mu.ok_or_else(|| need("mu"))?,
                    n_samples: self.n_samples.ok_or_else(|| need("n_samples"))?,
                    batch: self.batch.ok_or_else(|| need("batch"))?,
                    reg: self.reg.unwrap_or(0.0),
                    data_seed: self.data_seed.unwrap_or(0),
                })
            }
        }
    }

    /// Number of runs the config expands to.
    pub fn run_count(&self) -> usize {
        let axis = |len: usize| len.max(1);
        axis(self.sweep.rule.len())
            * axis(self.sweep.attack.len())
            * axis(self.sweep.f.len())
            * axis(self.sweep.beta.len())
            * self.replicas
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(config_error(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        if self.replicas == 0 {
            return Err(config_error("replicas", "must be >= 1"));
        }
        if self.threads == Some(0) {
            return Err(config_error("threads", "must be >= 1"));
        }
        if self.run_count() > self.max_runs {
            return Err(config_error(
                "sweep",
                format!("expands to {} runs, above max_runs = {}", self.run_count(), self.max_runs),
            ));
        }
        self.plan().map(|_| ())
    }

    /// Expands the sweep in a fixed order: rule, attack, f, beta, replica.
    pub fn plan(&self) -> Result<Vec<PlannedRun>> {
        let problem = self.problem_spec()?;
        let rules: Vec<(String, String)> = if self.sweep.rule.is_empty() {
            vec![(self.rule.clone(), "rule".into())]
        } else {
            self.sweep.rule.iter().enumerate().map(|(i, r)| (r.clone(), format!("sweep.rule[{i}]"))).collect()
        };
        let attacks: Vec<(Option<String>, String)> = if self.sweep.attack.is_empty() {
            vec![(self.attack.clone(), "attack".into())]
        } else {
            self.sweep.attack.iter().enumerate().map(|(i, a)| (Some(a.clone()), format!("sweep.attack[{i}]"))).collect()
        };
        let fs: Vec<(usize, String)> = if self.sweep.f.is_empty() {
            vec![(self.f, "f".into())]
        } else {
            self.sweep.f.iter().enumerate().map(|(i, &f)| (f, format!("sweep.f[{i}]"))).collect()
        };
        let betas: Vec<(StepParam, String)> = if self.sweep.beta.is_empty() {
            vec![(self.beta, "beta".into())]
        } else {
            self.sweep.beta.iter().enumerate().map(|(i, &b)| (b, format!("sweep.beta[{i}]"))).collect()
        };

        let mut planned = Vec::with_capacity(self.run_count());
        for (rule_name, rule_path) in &rules {
            let rule = self.parse_rule(rule_name, rule_path)?;
            for (attack_name, attack_path) in &attacks {
                let attack = self.parse_attack(attack_name.as_deref(), attack_path)?;
                for (f, f_path) in &fs {
                    for (beta, beta_path) in &betas {
                        for replica in 1..=self.replicas {
                            let seed = self.seed.wrapping_add(replica as u64);
                            let config = RunConfig {
                                n: self.n,
                                f: *f,
                                steps: self.steps,
                                gamma: self.gamma,
                                beta: *beta,
                                rule,
                                attack,
                                problem: problem.clone(),
                                seed,
                                theta1: self.theta1.clone(),
                                submission_order: None,
                                record_trajectory: false,
                            };
                            config.validate().map_err(|e| {
                                let path = match e {
                                    Error::ByzantineBound { .. } => f_path.as_str(),
                                    Error::InvalidParameter(ref m) if m.starts_with("beta") => beta_path.as_str(),
                                    Error::InvalidParameter(ref m) if m.starts_with("gamma") => "gamma",
                                    Error::InvalidParameter(ref m) if m.starts_with("steps") => "steps",
                                    Error::UnsupportedProblem(_) => attack_path.as_str(),
                                    Error::DimensionMismatch { .. } => "theta1",
                                    _ => "<root>",
                                };
                                config_error(path, e)
                            })?;
                            planned.push(PlannedRun {
                                id: format!("run-{:05}", planned.len()),
                                rule: rule_name.clone(),
                                attack: attack_name.clone().unwrap_or_else(|| "none".into()),
                                f: *f,
                                beta: *beta,
                                replica,
                                seed,
                                config,
                            });
                        }
                    }
                }
            }
        }
        Ok(planned)
    }
}

/// JSON summary of one finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub id: String,
    pub rule: String,
    pub attack: String,
    pub f: usize,
    pub replica: usize,
    pub seed: u64,
    pub config: RunConfig,
    pub gamma: f64,
    pub beta: f64,
    pub steps_completed: usize,
    pub theta_hat: Vec<f64>,
    pub theta_hat_index: usize,
    pub avg_grad_sq: Option<f64>,
    pub final_loss: Option<f64>,
    pub final_accuracy: Option<f64>,
    pub diverged_at: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theory: Option<TheoremOutputs>,
    pub metrics_csv: String,
}

/// One entry of the sweep index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub rule: String,
    pub attack: String,
    pub f: usize,
    pub beta: f64,
    pub replica: usize,
    pub seed: u64,
    pub csv: String,
    pub summary: String,
    pub diverged_at: Option<usize>,
    pub final_accuracy: Option<f64>,
    pub avg_grad_sq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepIndex {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub runs: Vec<IndexEntry>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Renders the per-step metrics as CSV.
pub fn metrics_csv(metrics: &[StepMetrics]) -> String {
    let mut out = String::with_capacity(64 * (metrics.len() + 1));
    out.push_str(StepMetrics::CSV_HEADER);
    out.push('\n');
    for m in metrics {
        out.push_str(&m.csv_row());
        out.push('\n');
    }
    out
}

/// Writes `contents` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(format!("not a file path: {}", path.display())))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let mut file = fs::File::create(&tmp)?;
    file.write_all(contents)?;
    file.sync_all()?;
    drop(file);
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn write_audit_report<S: Scalar + Serialize>(path: &Path, report: &AuditReport<S>) -> Result<()> {
    write_json(path, report)
}

fn summarize<S: Scalar>(run: &PlannedRun, result: &RunResult<S>, csv_name: &str) -> RunSummary {
    RunSummary {
        schema_version: SCHEMA_VERSION,
        id: run.id.clone(),
        rule: run.rule.clone(),
        attack: run.attack.clone(),
        f: run.f,
        replica: run.replica,
        seed: run.seed,
        config: run.config.clone(),
        gamma: result.gamma,
        beta: result.beta,
        steps_completed: result.metrics.len(),
        theta_hat: result.theta_hat.to_f64_vec(),
        theta_hat_index: result.theta_hat_index,
        avg_grad_sq: finite(result.avg_grad_sq),
        final_loss: finite(result.final_loss),
        final_accuracy: result.final_accuracy,
        diverged_at: result.diverged_at,
        theory: result.theory,
        metrics_csv: csv_name.to_string(),
    }
}

/// Result of executing a whole config.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub index: SweepIndex,
    pub index_path: PathBuf,
    pub diverged: Vec<String>,
}

/// Runs every planned run on a bounded pool and writes, under `output_dir`,
/// `runs/<id>.csv`, `runs/<id>.json` and `index.json`.
pub fn execute(config: &ExperimentConfig, output_dir: &Path) -> Result<SweepOutcome> {
    config.validate()?;
    let planned = config.plan()?;
    let runs_dir = output_dir.join("runs");
    fs::create_dir_all(&runs_dir).map_err(|e| Error::Io(format!("{}: {e}", runs_dir.display())))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Io(e.to_string()))?;
    let entries: Vec<IndexEntry> = pool.install(|| {
        planned
            .par_iter()
            .map(|p| -> Result<IndexEntry> {
                let result = run::<f64>(&p.config)?;
                let csv = format!("{}.csv", p.id);
                let json = format!("{}.json", p.id);
                write_atomic(&runs_dir.join(&csv), metrics_csv(&result.metrics).as_bytes())?;
                write_json(&runs_dir.join(&json), &summarize(p, &result, &csv))?;
                Ok(IndexEntry {
                    id: p.id.clone(),
                    rule: p.rule.clone(),
                    attack: p.attack.clone(),
                    f: p.f,
                    beta: result.beta,
                    replica: p.replica,
                    seed: p.seed,
                    csv: format!("runs/{csv}"),
                    summary: format!("runs/{json}"),
                    diverged_at: result.diverged_at,
                    final_accuracy: result.final_accuracy,
                    avg_grad_sq: finite(result.avg_grad_sq),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let diverged = entries
        .iter()
        .filter(|e| e.diverged_at.is_some())
        .map(|e| e.id.clone())
        .collect();
    let index = SweepIndex {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        runs: entries,
    };
    let index_path = output_dir.join("index.json");
    write_json(&index_path, &index)?;
    Ok(SweepOutcome {
        index,
        index_path,
        diverged,
    })
}

/// `output_dir` from the config unless overridden by [`OUTPUT_DIR_ENV`].
pub fn resolve_output_dir(config: &ExperimentConfig, env_value: Option<&str>) -> PathBuf {
    match env_value {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => config.output_dir.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "n": 5, "f": 1, "steps": 20, "gamma": 0.1, "beta": 0.9,
        "rule": "cwtm", "attack": "little",
        "problem": "quadratic", "dim": 2, "sigma": 1.0,
        "theta1": [1.0, -1.0]
    }"#;

    fn base() -> ExperimentConfig {
        ExperimentConfig::from_json(BASE).unwrap()
    }

    #[test]
    fn round_trip() {
        let mut cfg = base();
        cfg.sweep.rule = vec!["mda".into(), "gm".into()];
        cfg.sweep.beta = vec![StepParam::Value(0.0), StepParam::THEOREM];
        let again = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn empty_axes_give_one_run() {
        let plan = base().plan().unwrap();
        assert_eq!(plan.len(), 1);
        assert_eq!(plan[0].seed, 1);
    }

    #[test]
    fn replicas_derive_seeds() {
        let mut cfg = base();
        cfg.replicas = 5;
        let seeds: Vec<u64> = cfg.plan().unwrap().iter().map(|p| p.seed).collect();
        assert_eq!(seeds, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn sweep_is_the_cartesian_product_in_order() {
        let mut cfg = base();
        cfg.sweep.rule = vec!["mda".into(), "cwmed".into()];
        cfg.sweep.attack = vec!["none".into(), "empire".into(), "sign_flip".into()];
        cfg.sweep.f = vec![0, 1];
        cfg.sweep.beta = vec![StepParam::Value(0.0), StepParam::Value(0.5)];
        cfg.replicas = 2;
        let plan = cfg.plan().unwrap();
        assert_eq!(plan.len(), 2 * 3 * 2 * 2 * 2);
        let mut expected = Vec::new();
        for r in ["mda", "cwmed"] {
            for a in ["none", "empire", "sign_flip"] {
                for f in [0, 1] {
                    for b in [0.0, 0.5] {
                        for k in 1..=2u64 {
                            expected.push((r.to_string(), a.to_string(), f, StepParam::Value(b), k));
                        }
                    }
                }
            }
        }
        let got: Vec<_> = plan
            .iter()
            .map(|p| (p.rule.clone(), p.attack.clone(), p.f, p.beta, p.seed))
            .collect();
        assert_eq!(got, expected);
        let ids: std::collections::BTreeSet<_> = plan.iter().map(|p| p.id.clone()).collect();
        assert_eq!(ids.len(), plan.len());
    }

    #[test]
    fn errors_name_the_field() {
        let bad = BASE.replace("\"cwtm\"", "\"krum\"");
        match ExperimentConfig::from_json(&bad) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "rule"),
            other => panic!("{other:?}"),
        }
        let bad = BASE.replace("\"steps\"", "\"stpes\"");
        match ExperimentConfig::from_json(&bad) {
            Err(Error::Config { message, .. }) => assert!(message.contains("stpes")),
            other => panic!("{other:?}"),
        }
        let mut cfg = base();
        cfg.sweep.attack = vec!["empire".into(), "label_flip".into()];
        match cfg.validate() {
            Err(Error::Config { path, .. }) => assert_eq!(path, "sweep.attack[1]"),
            other => panic!("{other:?}"),
        }
        let mut cfg = base();
        cfg.sweep.f = vec![1, 5];
        match cfg.validate() {
            Err(Error::Config { path, .. }) => assert_eq!(path, "sweep.f[1]"),
            other => panic!("{other:?}"),
        }
        let mut cfg = base();
        cfg.replicas = 20_000;
        assert!(matches!(cfg.validate(), Err(Error::Config { .. })));
    }

    #[test]
    fn logistic_fields_required() {
        let text = BASE.replace("\"quadratic\"", "\"logistic\"").replace(", \"sigma\": 1.0", "");
        match ExperimentConfig::from_json(&text) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "mu"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn execute_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = base();
        cfg.replicas = 3;
        cfg.threads = Some(2);
        let out = execute(&cfg, dir.path()).unwrap();
        assert_eq!(out.index.runs.len(), 3);
        for entry in &out.index.runs {
            let csv = fs::read_to_string(dir.path().join(&entry.csv)).unwrap();
            let mut lines = csv.lines();
            assert_eq!(lines.next(), Some(StepMetrics::CSV_HEADER));
            assert_eq!(lines.count(), 20);
            let summary: RunSummary =
                serde_json::from_str(&fs::read_to_string(dir.path().join(&entry.summary)).unwrap()).unwrap();
            assert_eq!(summary.schema_version, SCHEMA_VERSION);
            assert_eq!(summary.id, entry.id);
        }
        let index: SweepIndex =
            serde_json::from_str(&fs::read_to_string(out.index_path).unwrap()).unwrap();
        assert_eq!(index, out.index);
        let leftovers: Vec<_> = fs::read_dir(dir.path().join("runs"))
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".tmp"))
            .collect();
        assert!(leftovers.is_empty());
    }

    #[test]
    fn output_dir_override() {
        let cfg = base();
        assert_eq!(resolve_output_dir(&cfg, None), PathBuf::from("resam-out"));
        assert_eq!(resolve_output_dir(&cfg, Some("/tmp/x")), PathBuf::from("/tmp/x"));
    }
}
