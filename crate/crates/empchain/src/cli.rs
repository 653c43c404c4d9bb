//! Batch front-end: parse a JSON run config, execute one named experiment,
//! write CSV + JSON reports.
//!
//! Exit codes: `0` on completion, `1` when an experiment with a verdict
//! fails, `2` on configuration errors. The seed must come from the config or
//! the command line — there is no wall-clock default, so identical inputs
//! give byte-identical outputs. The thread count (`RAYON_NUM_THREADS`)
//! affects wall time only, never results.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::chaining::{build_admissible, Metric};
use crate::estimator::{
    class_n_zero, exact_bias, global_deviation_bound, global_failure_probability,
    EstimatorConfig, TruncationRule,
};
use crate::function_class::{
    heavy_tail_pair, interval_indicators, ADecay, FunctionClass, HeavyTailSpec,
};
use crate::measure::DiscreteSpace;
use crate::report::{summary_json, write_report_files, ReportError, SweepReport};
use crate::verify::{
    self, bias_sweep, clt_test, lemma21_coverage, necessity_sweep, oscillation_sweep,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("seed required: pass --seed or set \"seed\" in the config")]
    MissingSeed,
    #[error("config error: {0}")]
    BadConfig(String),
    #[error("could not read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("could not parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Report(#[from] ReportError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    ChainInfo,
    Estimate,
    BiasSweep,
    CltTest,
    Oscillation,
    Necessity,
    Lemma21,
}

impl Experiment {
    pub fn stem(self) -> &'static str {
        match self {
            Experiment::ChainInfo => "chain_info",
            Experiment::Estimate => "estimate",
            Experiment::BiasSweep => "bias_sweep",
            Experiment::CltTest => "clt_test",
            Experiment::Oscillation => "oscillation",
            Experiment::Necessity => "necessity",
            Experiment::Lemma21 => "lemma21",
        }
    }
}

/// Class source: a named generator, a class file, or inline values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassSpec {
    Generator(Generator),
    File { path: PathBuf },
    Inline {
        probs: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    IntervalIndicators { d: usize },
    HeavyTail(HeavyTailParams),
}

/// Heavy-tail generator parameters; missing fields take the bundled defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeavyTailParams {
    pub b_exponent: Option<f64>,
    pub a_decay: Option<ADecay>,
    pub atoms: Option<usize>,
    pub total_mass: Option<f64>,
}

impl HeavyTailParams {
    pub fn resolve(&self) -> Result<HeavyTailSpec, CliError> {
        let defaults = HeavyTailSpec::default();
        let b_exponent = self.b_exponent.unwrap_or(defaults.b_exponent);
        let a_decay = self.a_decay.unwrap_or(defaults.a_decay);
        let atoms = self.atoms.unwrap_or(defaults.atoms);
        let total_mass = self.total_mass.unwrap_or(0.35);
        HeavyTailSpec::with_total_mass(b_exponent, a_decay, atoms, total_mass)
            .map_err(|e| CliError::BadConfig(e.to_string()))
    }
}

/// On-disk class format: `{"probs": [...], "values": [[...]], "anchor": i}`.
#[derive(Debug, Deserialize)]
struct ClassFile {
    probs: Vec<f64>,
    values: Vec<Vec<f64>>,
    #[serde(default)]
    anchor: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorParams {
    pub c0: Option<f64>,
    pub rule: Option<TruncationRule>,
    pub n: Option<usize>,
}

impl EstimatorParams {
    fn resolve(&self, fallback_n: Option<usize>) -> Result<EstimatorConfig, CliError> {
        let n = self
            .n
            .or(fallback_n)
            .ok_or_else(|| CliError::BadConfig("sample size n missing".into()))?;
        let config = EstimatorConfig {
            c0: self.c0.unwrap_or(1.0),
            rule: self.rule.unwrap_or(TruncationRule::SqrtN),
            n,
        };
        config
            .validate()
            .map_err(|e| CliError::BadConfig(e.to_string()))?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    pub n: Option<Vec<usize>>,
    pub u: Option<Vec<f64>>,
    pub delta: Option<Vec<f64>>,
    pub b_exponents: Option<Vec<f64>>,
    pub s: Option<usize>,
    pub eta: Option<f64>,
    pub subset: Option<Vec<usize>>,
    pub replicates: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub experiment: Option<Experiment>,
    pub class: ClassSpec,
    #[serde(default)]
    pub estimator: EstimatorParams,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: RunConfig = serde_json::from_str(&text).map_err(|e| {
            CliError::BadConfig(format!("{} (at line {}, column {})", e, e.line(), e.column()))
        })?;
        Ok(config)
    }

    pub fn build_class(&self) -> Result<Arc<FunctionClass>, CliError> {
        match &self.class {
            ClassSpec::Generator(Generator::IntervalIndicators { d }) => {
                if *d < 2 {
                    return Err(CliError::BadConfig(
                        "interval_indicators needs d >= 2".into(),
                    ));
                }
                Ok(Arc::new(interval_indicators(*d)))
            }
            ClassSpec::Generator(Generator::HeavyTail(params)) => {
                let spec = params.resolve()?;
                let (_, class) =
                    heavy_tail_pair(&spec).map_err(|e| CliError::BadConfig(e.to_string()))?;
                Ok(Arc::new(class))
            }
            ClassSpec::File { path } => {
                let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                    path: path.clone(),
                    source,
                })?;
                let file: ClassFile = serde_json::from_str(&text)?;
                let space = DiscreteSpace::new(file.probs)
                    .map_err(|e| CliError::BadConfig(e.to_string()))?;
                let class = FunctionClass::from_space(space, file.values)
                    .map_err(|e| CliError::BadConfig(e.to_string()))?;
                if let Some(anchor) = file.anchor {
                    if anchor != class.anchor_index() {
                        return Err(CliError::BadConfig(format!(
                            "declared anchor {anchor} does not point at the zero function (expected {})",
                            class.anchor_index()
                        )));
                    }
                }
                Ok(Arc::new(class))
            }
            ClassSpec::Inline { probs, values } => {
                let space = DiscreteSpace::new(probs.clone())
                    .map_err(|e| CliError::BadConfig(e.to_string()))?;
                let class = FunctionClass::from_space(space, values.clone())
                    .map_err(|e| CliError::BadConfig(e.to_string()))?;
                Ok(Arc::new(class))
            }
        }
    }
}

/// Result of a run: exit code, files written, and the JSON summary.
#[derive(Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub summary: Value,
    pub files: Vec<PathBuf>,
}

const DEFAULT_N_GRID: [usize; 7] = [16, 64, 256, 1024, 4096, 16384, 65536];

/// Execute one experiment.
pub fn run(
    experiment: Experiment,
    config: &RunConfig,
    seed_override: Option<u64>,
    out_override: Option<PathBuf>,
) -> Result<RunOutcome, CliError> {
    if let Some(declared) = config.experiment {
        if declared != experiment {
            return Err(CliError::BadConfig(format!(
                "config declares experiment {declared:?}, command line asked for {experiment:?}"
            )));
        }
    }
    let seed = seed_override.or(config.seed).ok_or(CliError::MissingSeed)?;
    let out_dir = out_override
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir).map_err(|source| CliError::Io {
        path: out_dir.clone(),
        source,
    })?;

    let config_value = serde_json::to_value(config)?;
    let stem = experiment.stem();
    let write = |csv: &str, payload: Value| -> Result<(Value, Vec<PathBuf>), CliError> {
        let summary = summary_json(&config_value, seed, &payload)?;
        write_report_files(&out_dir, stem, csv, &summary)?;
        Ok((
            summary,
            vec![
                out_dir.join(format!("{stem}.csv")),
                out_dir.join(format!("{stem}.json")),
            ],
        ))
    };

    match experiment {
        Experiment::ChainInfo => {
            let class = config.build_class()?;
            let seq_l2 = build_admissible(&class, Metric::L2);
            let seq_linf = build_admissible(&class, Metric::Linf);
            let gamma2 = seq_l2.gamma_functional(2).expect("L2 sequence");
            let gamma1 = seq_linf.gamma_functional(1).expect("Linf sequence");
            let mut csv = String::from("s,level_size,budget\n");
            for (s, size) in seq_l2.level_sizes().iter().enumerate() {
                let budget = crate::chaining::level_budget(s).min(class.len());
                csv.push_str(&format!("{s},{size},{budget}\n"));
            }
            let payload = serde_json::json!({
                "class_size": class.len(),
                "atom_count": class.space().atom_count(),
                "s_max": seq_l2.s_max(),
                "level_sizes": seq_l2.level_sizes(),
                "gamma2_estimate": gamma2,
                "gamma1_estimate": gamma1,
                "sequence": seq_l2.levels_json(),
            });
            let (summary, files) = write(&csv, payload)?;
            Ok(RunOutcome {
                exit_code: 0,
                summary,
                files,
            })
        }
        Experiment::Estimate => {
            let class = config.build_class()?;
            let est = config.estimator.resolve(None)?;
            let seq = build_admissible(&class, Metric::L2);
            let gamma2 = seq.gamma_functional(2).expect("L2 sequence");
            let bias = exact_bias(&seq, &est);
            let u_grid = config.grids.u.clone().unwrap_or_else(|| vec![1.0, 2.0, 4.0]);
            let mut report = SweepReport::new("u", u_grid.clone());
            let mut bounds = Vec::new();
            let mut failures = Vec::new();
            for &u in &u_grid {
                bounds.push(
                    global_deviation_bound(u, gamma2, est.n, est.c0)
                        .map_err(|e| CliError::BadConfig(e.to_string()))?,
                );
                failures.push(
                    global_failure_probability(u, seq.s_max(), est.c0)
                        .map_err(|e| CliError::BadConfig(e.to_string()))?,
                );
            }
            report.push_series("global_deviation_bound", bounds);
            report.push_series("failure_probability", failures);
            let payload = serde_json::json!({
                "gamma2_estimate": gamma2,
                "sqrt_n_sup_bias": bias.sqrt_n_sup_bias,
                "n_zero": class_n_zero(&seq, &est),
                "estimator": est,
            });
            let (summary, files) = write(&report.to_csv(), payload)?;
            Ok(RunOutcome {
                exit_code: 0,
                summary,
                files,
            })
        }
        Experiment::BiasSweep => {
            let class = config.build_class()?;
            let n_grid = config
                .grids
                .n
                .clone()
                .unwrap_or_else(|| DEFAULT_N_GRID.to_vec());
            let est = config.estimator.resolve(n_grid.first().copied())?;
            let seq = build_admissible(&class, Metric::L2);
            let report = bias_sweep(&seq, &n_grid, &est);
            let payload = serde_json::json!({
                "first": report.series_named("sqrt_n_sup_bias").expect("series")[0],
                "last": report.series_named("sqrt_n_sup_bias").expect("series")
                    .last().copied(),
            });
            let (summary, files) = write(&report.to_csv(), payload)?;
            Ok(RunOutcome {
                exit_code: 0,
                summary,
                files,
            })
        }
        Experiment::CltTest => {
            let class = config.build_class()?;
            let subset = config
                .grids
                .subset
                .clone()
                .ok_or_else(|| CliError::BadConfig("clt-test needs grids.subset".into()))?;
            for &f in &subset {
                if f >= class.len() {
                    return Err(CliError::BadConfig(format!(
                        "subset index {f} out of range (class size {})",
                        class.len()
                    )));
                }
            }
            let est = config.estimator.resolve(None)?;
            let replicates = config.grids.replicates.unwrap_or(2000);
            let seq = build_admissible(&class, Metric::L2);
            let report = clt_test(&seq, &subset, &est, replicates, seed)
                .map_err(|e| CliError::BadConfig(e.to_string()))?;
            let pass = report.pass;
            let (summary, files) = write(&report.to_csv(), serde_json::to_value(&report)?)?;
            Ok(RunOutcome {
                exit_code: if pass { 0 } else { 1 },
                summary,
                files,
            })
        }
        Experiment::Oscillation => {
            let class = config.build_class()?;
            let delta_grid = config
                .grids
                .delta
                .clone()
                .unwrap_or_else(|| vec![0.1, 0.2, 0.3]);
            let n_grid = config.grids.n.clone().unwrap_or_else(|| vec![256, 1024]);
            let eta = config.grids.eta.unwrap_or(0.5);
            let replicates = config.grids.replicates.unwrap_or(1000);
            let est = config.estimator.resolve(n_grid.first().copied())?;
            let seq = build_admissible(&class, Metric::L2);
            let report =
                oscillation_sweep(&seq, &delta_grid, &n_grid, eta, &est, replicates, seed);
            let (summary, files) = write(&report.to_csv(), report.metadata.clone())?;
            Ok(RunOutcome {
                exit_code: 0,
                summary,
                files,
            })
        }
        Experiment::Necessity => {
            let params = match &config.class {
                ClassSpec::Generator(Generator::HeavyTail(params)) => params.clone(),
                _ => {
                    return Err(CliError::BadConfig(
                        "necessity runs on the heavy_tail generator".into(),
                    ))
                }
            };
            let spec = params.resolve()?;
            let b_exponents = config
                .grids
                .b_exponents
                .clone()
                .unwrap_or_else(|| vec![0.25, 0.5]);
            let n_grid = config
                .grids
                .n
                .clone()
                .unwrap_or_else(|| DEFAULT_N_GRID.to_vec());
            let (report, verdicts) = necessity_sweep(&spec, &b_exponents, &n_grid)
                .map_err(|e| CliError::BadConfig(e.to_string()))?;
            let payload = serde_json::json!({ "verdicts": verdicts });
            let (summary, files) = write(&report.to_csv(), payload)?;
            Ok(RunOutcome {
                exit_code: 0,
                summary,
                files,
            })
        }
        Experiment::Lemma21 => {
            let class = config.build_class()?;
            let s = config.grids.s.unwrap_or(1);
            let u_grid = config
                .grids
                .u
                .clone()
                .unwrap_or_else(|| vec![0.6, 1.0, 2.0, 4.0]);
            let replicates = config.grids.replicates.unwrap_or(10_000);
            let est = config.estimator.resolve(None)?;
            let seq = build_admissible(&class, Metric::L2);
            let report = lemma21_coverage(&seq, s, &u_grid, &est, replicates, seed)
                .map_err(|e| CliError::BadConfig(e.to_string()))?;
            let rates = report.series_named("violation_rate").expect("series");
            let bounds = report.series_named("bound").expect("series");
            let covered = rates.iter().zip(bounds).all(|(r, b)| r <= b);
            let payload = serde_json::json!({ "covered": covered });
            let (summary, files) = write(&report.to_csv(), payload)?;
            Ok(RunOutcome {
                exit_code: if covered { 0 } else { 1 },
                summary,
                files,
            })
        }
    }
}

/// Schema and invariant check without running; returns human-readable
/// diagnostics plus cheap derived quantities.
pub fn validate(path: &Path) -> Result<Vec<String>, CliError> {
    let mut diagnostics = Vec::new();
    let config = RunConfig::from_path(path)?;
    if config.seed.is_none() {
        diagnostics.push(
            "seed missing: runs will require --seed (no wall-clock default)".to_string(),
        );
    }
    match config.build_class() {
        Ok(class) => {
            let atoms = class.space().atom_count();
            diagnostics.push(format!(
                "class ok: {} functions on {} atoms",
                class.len(),
                atoms
            ));
            if class.len() <= 512 {
                let seq = build_admissible(&class, Metric::L2);
                diagnostics.push(format!(
                    "derived: s_max = {}, level sizes {:?}",
                    seq.s_max(),
                    seq.level_sizes()
                ));
                if let Some(n) = config.estimator.n {
                    if class.len() <= 64 {
                        if let Some(n0) =
                            config.estimator.resolve(Some(n)).ok().and_then(|est| {
                                class_n_zero(&seq, &est)
                            })
                        {
                            diagnostics.push(format!("derived: identity regime from n ≥ {n0}"));
                        }
                    }
                    let outcomes = (atoms as f64).powi(n as i32);
                    if outcomes > verify::ENUMERATION_CAP {
                        diagnostics.push(format!(
                            "warning: enumeration oracle infeasible (atom_count^n = {outcomes:.3e} > {:.0e})",
                            verify::ENUMERATION_CAP
                        ));
                    }
                }
            }
        }
        Err(e) => diagnostics.push(format!("class error: {e}")),
    }
    if let Some(u_grid) = &config.grids.u {
        for &u in u_grid {
            if u <= 0.5 {
                diagnostics.push(format!(
                    "u grid value {u} violates the precondition u > 1/2"
                ));
            }
        }
    }
    if let Some(n_grid) = &config.grids.n {
        if n_grid.windows(2).any(|w| w[0] >= w[1]) {
            diagnostics.push("n grid must be strictly increasing".to_string());
        }
    }
    Ok(diagnostics)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval_config(extra: &str) -> RunConfig {
        let json = format!(
            r#"{{
                "class": {{"generator": {{"interval_indicators": {{"d": 4}}}}}},
                "estimator": {{"c0": 1.0, "rule": "sqrt_n", "n": 64}}
                {extra}
            }}"#
        );
        serde_json::from_str(&json).unwrap()
    }

    #[test]
    fn parse_minimal_config() {
        let config = interval_config(", \"seed\": 7");
        assert_eq!(config.seed, Some(7));
        let class = config.build_class().unwrap();
        assert_eq!(class.len(), 11);
    }

    #[test]
    fn missing_seed_is_an_error() {
        let config = interval_config("");
        let err = run(Experiment::ChainInfo, &config, None, Some(std::env::temp_dir()));
        assert!(matches!(err, Err(CliError::MissingSeed)));
    }

    #[test]
    fn experiment_mismatch_rejected() {
        let mut config = interval_config(", \"seed\": 7");
        config.experiment = Some(Experiment::Necessity);
        let err = run(
            Experiment::ChainInfo,
            &config,
            None,
            Some(std::env::temp_dir()),
        );
        assert!(matches!(err, Err(CliError::BadConfig(_))));
    }

    #[test]
    fn chain_info_reports_chain_shape() {
        let dir = tempfile::tempdir().unwrap();
        let config = interval_config(", \"seed\": 7");
        let outcome = run(
            Experiment::ChainInfo,
            &config,
            None,
            Some(dir.path().to_path_buf()),
        )
        .unwrap();
        assert_eq!(outcome.exit_code, 0);
        assert_eq!(outcome.summary["result"]["s_max"], 2);
        assert!(outcome.files.iter().all(|f| f.exists()));
    }

    #[test]
    fn heavy_tail_params_resolve_to_defaults() {
        let params = HeavyTailParams::default();
        let spec = params.resolve().unwrap();
        assert_eq!(spec, HeavyTailSpec::default());
    }
}
