//! Experiment orchestration: sweep cells over (alpha, bound, xi, m, seed),
//! the coverage oracle validating the `1 - delta` contract, and report
//! files.
//!
//! Every cell is deterministic given its seed: all stage seeds derive from
//! the cell seed, and report files serialize floats at full precision, so a
//! rerun of any subset reproduces its rows byte-for-byte. Wall-clock
//! timings go to a separate file to keep the result files reproducible.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{evaluate_bound_with_table, gaussian_kl, BoundKind, BoundSettings};
use crate::data::{
    convert_supervised, make_synthetic, make_synthetic_multilabel, read_labeled, split_holdout,
    LabeledDataset, LoggedDataset, LoggedRecord,
};
use crate::error::{Error, Result};
use crate::estimators::{true_risk_labeled, true_risk_softmax};
use crate::learn::{certify, minimize_bound, OptimSettings, PolicyClass, Verdict};
use crate::math::derive_seed;
use crate::policies::{
    lig_propensity_quadrature, train_logging_policy, GaussianPrior, LigParams, McSettings,
};

/// Clipping rule: the paper's default ties `tau` to the action count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TauRule {
    Auto,
    Fixed(f64),
}

impl TauRule {
    pub fn resolve(&self, num_actions: usize) -> f64 {
        match self {
            TauRule::Auto => 1.0 / num_actions as f64,
            TauRule::Fixed(t) => *t,
        }
    }
}

impl std::str::FromStr for TauRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            Ok(TauRule::Auto)
        } else {
            s.parse::<f64>()
                .map(TauRule::Fixed)
                .map_err(|_| Error::Invalid(format!("tau must be 'auto' or a float, got {s:?}")))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum DatasetSpec {
    Synthetic {
        n: usize,
        num_actions: usize,
        feature_dim: usize,
        test_n: usize,
        label_seed: u64,
        multilabel: bool,
    },
    Files {
        train: PathBuf,
        test: PathBuf,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub alphas: Vec<f64>,
    pub bounds: Vec<BoundKind>,
    pub xis: Vec<f64>,
    pub ms: Vec<usize>,
    pub seeds: Vec<u64>,
    pub tau: TauRule,
    pub delta: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub mc_train: usize,
    pub mc_eval: usize,
    pub policy_class: PolicyClass,
    pub logger_l2: f64,
    pub logger_lr: f64,
    pub logger_epochs: usize,
}

impl ExperimentConfig {
    pub fn desk_defaults(dataset: DatasetSpec) -> Self {
        Self {
            dataset,
            alphas: vec![1.0],
            bounds: vec![BoundKind::Cbb],
            xis: vec![-0.5],
            ms: vec![1],
            seeds: vec![0],
            tau: TauRule::Auto,
            delta: 0.05,
            epochs: 100,
            lr: 1e-3,
            batch_size: 256,
            mc_train: 32,
            mc_eval: 2048,
            policy_class: PolicyClass::Lig,
            logger_l2: 1e-6,
            logger_lr: 0.1,
            logger_epochs: 10,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.bounds.is_empty() || self.ms.is_empty() || self.seeds.is_empty() {
            return Err(Error::Invalid("empty sweep axis".into()));
        }
        if self.xis.is_empty() && self.bounds.contains(&BoundKind::Cbb) {
            return Err(Error::Invalid("cbb sweep needs at least one xi".into()));
        }
        Ok(())
    }
}

/// One sweep cell outcome. `error` is set (and metrics are NaN) when a
/// stage failed; the sweep always continues.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub bound: BoundKind,
    pub xi: f64,
    pub m: usize,
    pub seed: u64,
    pub guaranteed_risk: f64,
    pub true_risk_pi_star: f64,
    pub guaranteed_improvement: f64,
    pub true_risk_pi0: f64,
    pub logging_risk_estimate: f64,
    pub kl: f64,
    pub best_epoch: usize,
    pub deploy: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Per-cell wall-clock seconds, aligned with `rows`; kept out of the
    /// deterministic result files.
    pub timings: Vec<f64>,
}

fn load_labeled(config: &ExperimentConfig, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    match &config.dataset {
        DatasetSpec::Synthetic {
            n,
            num_actions,
            feature_dim,
            test_n,
            label_seed,
            multilabel,
        } => {
            let gen = if *multilabel {
                make_synthetic_multilabel
            } else {
                make_synthetic
            };
            let train = gen(*n, *num_actions, *feature_dim, *label_seed, derive_seed(seed, &[30]))?;
            let test = gen(
                *test_n,
                *num_actions,
                *feature_dim,
                *label_seed,
                derive_seed(seed, &[31]),
            )?;
            Ok((train, test))
        }
        DatasetSpec::Files { train, test } => Ok((read_labeled(train)?, read_labeled(test)?)),
    }
}

/// Runs one sweep cell end to end: logger on the 5% split, logging on the
/// rest, bound minimization, certification, true-risk evaluation.
pub fn run_cell(
    config: &ExperimentConfig,
    alpha: f64,
    bound: BoundKind,
    xi: f64,
    m: usize,
    seed: u64,
) -> Result<SweepRow> {
    let (train, test) = load_labeled(config, seed)?;
    let (logger_split, log_split) = split_holdout(&train, 0.05, derive_seed(seed, &[32]))?;
    let logger_base = train_logging_policy(
        &logger_split,
        config.logger_l2,
        config.logger_lr,
        config.logger_epochs,
        derive_seed(seed, &[33]),
    )?;
    let logged = convert_supervised(&log_split, &logger_base, alpha, m, derive_seed(seed, &[34]))?;
    let logger = logged.logger_params().expect("conversion stores logger").clone();
    let prior = GaussianPrior::from_logger(&logger, 1.0)?;
    let tau = config.tau.resolve(train.num_actions);
    let settings = BoundSettings {
        kind: bound,
        tau,
        delta: config.delta,
        xi,
        n_lambda: 100,
    };
    let optim = OptimSettings {
        lr: config.lr,
        epochs: config.epochs,
        batch_size: config.batch_size,
        seed: derive_seed(seed, &[35]),
        ..OptimSettings::default()
    };
    let mc_train = McSettings {
        num_samples: config.mc_train,
        seed: derive_seed(seed, &[36]),
        antithetic: true,
    };
    let mc_eval = McSettings {
        num_samples: config.mc_eval,
        seed: derive_seed(seed, &[37]),
        antithetic: true,
    };
    let outcome = minimize_bound(
        &logged,
        &prior,
        &settings,
        &optim,
        &mc_train,
        &mc_eval,
        config.policy_class,
    )?;
    let cert = certify(
        &outcome.policy,
        &logged,
        &prior,
        &settings,
        &mc_eval,
        config.policy_class,
        format!("cell-a{alpha}-{bound}-xi{xi}-m{m}-s{seed}"),
        Some(mc_train),
        Some(optim),
    )?;
    let mc_true = McSettings {
        num_samples: config.mc_eval,
        seed: derive_seed(seed, &[38]),
        antithetic: true,
    };
    let true_risk_star = match config.policy_class {
        PolicyClass::Lig => true_risk_labeled(&outcome.policy, &test, &mc_true)?,
        PolicyClass::MixedLogit => mixed_logit_true_risk(&outcome.policy, &test, &mc_true)?,
    };
    let true_risk_pi0 = true_risk_softmax(&logger, &test)?;
    Ok(SweepRow {
        alpha,
        bound,
        xi,
        m,
        seed,
        guaranteed_risk: cert.guaranteed_risk,
        true_risk_pi_star: true_risk_star,
        guaranteed_improvement: cert.guaranteed_improvement,
        true_risk_pi0,
        logging_risk_estimate: cert.logging_risk,
        kl: cert.bound_report.kl,
        best_epoch: outcome.best_epoch,
        deploy: cert.verdict == Verdict::Deploy,
        error: None,
    })
}

fn mixed_logit_true_risk(
    policy: &LigParams,
    test: &LabeledDataset,
    mc: &McSettings,
) -> Result<f64> {
    let per_example: Vec<f64> = test
        .examples
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let seeded = mc.with_seed(derive_seed(mc.seed, &[11, i as u64]));
            let probs =
                crate::policies::mixed_logit_propensity_all(policy, &ex.features, &seeded)?;
            Ok(-ex.labels.iter().map(|&l| probs[l]).sum::<f64>())
        })
        .collect::<Result<_>>()?;
    Ok(crate::math::pairwise_sum(&per_example) / per_example.len() as f64)
}

/// The full sweep: the product of the config axes, cells in parallel,
/// failures recorded per cell.
pub fn run_experiment(config: &ExperimentConfig) -> Result<SweepReport> {
    config.validate()?;
    let mut cells = Vec::new();
    for &alpha in &config.alphas {
        for &bound in &config.bounds {
            let xis: &[f64] = if bound == BoundKind::Cbb { &config.xis } else { &[0.0] };
            for &xi in xis {
                for &m in &config.ms {
                    for &seed in &config.seeds {
                        cells.push((alpha, bound, xi, m, seed));
                    }
                }
            }
        }
    }
    let outcomes: Vec<(SweepRow, f64)> = cells
        .par_iter()
        .map(|&(alpha, bound, xi, m, seed)| {
            let start = std::time::Instant::now();
            let row = run_cell(config, alpha, bound, xi, m, seed).unwrap_or_else(|err| SweepRow {
                alpha,
                bound,
                xi,
                m,
                seed,
                guaranteed_risk: f64::NAN,
                true_risk_pi_star: f64::NAN,
                guaranteed_improvement: f64::NAN,
                true_risk_pi0: f64::NAN,
                logging_risk_estimate: f64::NAN,
                kl: f64::NAN,
                best_epoch: 0,
                deploy: false,
                error: Some(err.to_string()),
            });
            (row, start.elapsed().as_secs_f64())
        })
        .collect();
    let (rows, timings) = outcomes.into_iter().unzip();
    Ok(SweepReport { rows, timings })
}

// ---------------------------------------------------------------------------
// Coverage oracle
// ---------------------------------------------------------------------------

/// Synthetic reference environment with a finite context pool, so the true
/// risk of any policy is an exact enumeration over pool x actions
/// (propensities by deterministic quadrature).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageEnv {
    pub num_actions: usize,
    pub feature_dim: usize,
    pub pool_size: usize,
    pub n: usize,
    pub alpha: f64,
    pub label_seed: u64,
    pub env_seed: u64,
}

impl Default for CoverageEnv {
    fn default() -> Self {
        Self {
            num_actions: 5,
            feature_dim: 10,
            pool_size: 200,
            n: 2000,
            alpha: 0.5,
            label_seed: 1,
            env_seed: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageReport {
    pub bound: BoundKind,
    pub xi: f64,
    pub delta: f64,
    pub trials: usize,
    pub violations: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_bound: f64,
    pub mean_true_risk: f64,
}

/// 95% Wilson interval for a binomial proportion.
fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959963984540054_f64;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Draws `trials` independent logged datasets from the reference
/// environment, evaluates the selected bound at a fixed, freshly drawn
/// policy per trial, and counts how often the exact true risk exceeds the
/// bound. The rate must stay below `delta` up to binomial noise.
pub fn coverage_check(
    env: &CoverageEnv,
    settings: &BoundSettings,
    mc_eval: &McSettings,
    trials: usize,
    seed: u64,
) -> Result<CoverageReport> {
    settings.validate()?;
    if trials == 0 {
        return Err(Error::Invalid("trials must be >= 1".into()));
    }
    let pool = make_synthetic(
        env.pool_size,
        env.num_actions,
        env.feature_dim,
        env.label_seed,
        derive_seed(env.env_seed, &[40]),
    )?;
    let logger_train = make_synthetic(
        1000,
        env.num_actions,
        env.feature_dim,
        env.label_seed,
        derive_seed(env.env_seed, &[41]),
    )?;
    let logger = train_logging_policy(&logger_train, 1e-6, 0.1, 10, derive_seed(env.env_seed, &[42]))?
        .scaled(env.alpha);
    let prior = GaussianPrior::from_logger(&logger, 1.0)?;
    let pool_probs: Vec<Vec<f64>> = pool
        .examples
        .iter()
        .map(|ex| logger.propensities(&ex.features))
        .collect::<Result<_>>()?;

    let outcomes: Vec<(bool, f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<(bool, f64, f64)> {
            let t = trial as u64;
            // Fixed policy for this trial, drawn before its data.
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, &[43, t]));
            let mu: Vec<Vec<f64>> = prior
                .mu0
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|&v| v + 0.5 * rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect();
            let sigma = (0.25 * rng.sample::<f64, _>(StandardNormal)).exp();
            let policy = LigParams::new(mu, sigma)?;

            // Exact true risk by enumeration over the pool.
            let per_ctx: Vec<f64> = pool
                .examples
                .iter()
                .map(|ex| {
                    let probs = lig_propensity_quadrature(&policy, &ex.features)?;
                    Ok(-ex.labels.iter().map(|&l| probs[l]).sum::<f64>())
                })
                .collect::<Result<_>>()?;
            let true_risk = crate::math::pairwise_mean(&per_ctx);

            // Fresh logged sample.
            let mut data_rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, &[44, t]));
            let mut records = Vec::with_capacity(env.n);
            let mut pool_idx = Vec::with_capacity(env.n);
            for _ in 0..env.n {
                let ctx = data_rng.gen_range(0..env.pool_size);
                let u: f64 = data_rng.gen();
                let probs = &pool_probs[ctx];
                let mut action = probs.len() - 1;
                let mut acc = 0.0;
                for (a, &p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        action = a;
                        break;
                    }
                }
                let ex = &pool.examples[ctx];
                records.push(LoggedRecord {
                    features: ex.features.clone(),
                    action,
                    cost: if ex.labels.contains(&action) { -1.0 } else { 0.0 },
                    logging_propensity: probs[action],
                    group_id: None,
                });
                pool_idx.push(ctx);
            }
            let data = LoggedDataset::new(
                records,
                env.num_actions,
                env.feature_dim,
                Some(logger.clone()),
            )?;

            // Policy propensities per unique pool context, then per record.
            let mc_trial = mc_eval.with_seed(derive_seed(seed, &[45, t]));
            let pool_table: Vec<Vec<f64>> = (0..env.pool_size)
                .map(|ctx| {
                    let seeded = mc_trial.with_seed(derive_seed(mc_trial.seed, &[10, ctx as u64]));
                    crate::policies::lig_propensity_all(&policy, &pool.examples[ctx].features, &seeded)
                })
                .collect::<Result<_>>()?;
            let table: Vec<Vec<f64>> = pool_idx.iter().map(|&c| pool_table[c].clone()).collect();
            let kl = gaussian_kl(&policy, &prior)?;
            let report = evaluate_bound_with_table(&table, kl, &data, settings, mc_trial.num_samples)?;
            if !report.bound_value.is_finite() {
                return Err(Error::NonFinite("coverage bound".into()));
            }
            Ok((true_risk > report.bound_value, report.bound_value, true_risk))
        })
        .collect::<Result<_>>()?;

    let violations = outcomes.iter().filter(|o| o.0).count();
    let (ci_low, ci_high) = wilson_interval(violations, trials);
    Ok(CoverageReport {
        bound: settings.kind,
        xi: settings.xi,
        delta: settings.delta,
        trials,
        violations,
        rate: violations as f64 / trials as f64,
        ci_low,
        ci_high,
        mean_bound: outcomes.iter().map(|o| o.1).sum::<f64>() / trials as f64,
        mean_true_risk: outcomes.iter().map(|o| o.2).sum::<f64>() / trials as f64,
    })
}

// ---------------------------------------------------------------------------
// Report emission
// ---------------------------------------------------------------------------

/// Full-precision float formatting (17 significant digits) for report files.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.16e}")
    }
}

const CSV_HEADER: &str = "alpha,bound,xi,m,seed,guaranteed_risk,true_risk_pi_star,guaranteed_improvement,true_risk_pi0,logging_risk_estimate,kl,best_epoch,deploy,error";

fn row_to_csv(row: &SweepRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        format_float(row.alpha),
        row.bound,
        format_float(row.xi),
        row.m,
        row.seed,
        format_float(row.guaranteed_risk),
        format_float(row.true_risk_pi_star),
        format_float(row.guaranteed_improvement),
        format_float(row.true_risk_pi0),
        format_float(row.logging_risk_estimate),
        format_float(row.kl),
        row.best_epoch,
        row.deploy,
        row.error.as_deref().unwrap_or("")
    )
}

pub fn write_results_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row_to_csv(row));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_results_json(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let json = serde_json::to_string_pretty(rows).expect("rows serialize");
    std::fs::write(path, json)?;
    Ok(())
}

pub fn read_results_json(path: impl AsRef<Path>) -> Result<Vec<SweepRow>> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })
}

/// Plot-ready long format: one metric per row, mirroring the three panels
/// (guaranteed risk, true risk of the minimizer, guaranteed improvement).
pub fn write_long_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("alpha,bound,xi,m,seed,metric,value\n");
    for row in rows {
        for (metric, value) in [
            ("guaranteed_risk", row.guaranteed_risk),
            ("true_risk_pi_star", row.true_risk_pi_star),
            ("guaranteed_improvement", row.guaranteed_improvement),
        ] {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                format_float(row.alpha),
                row.bound,
                format_float(row.xi),
                row.m,
                row.seed,
                metric,
                format_float(value)
            ));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_timings_csv(timings: &[f64], rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "alpha,bound,xi,m,seed,seconds")?;
    for (row, secs) in rows.iter().zip(timings) {
        writeln!(
            w,
            "{},{},{},{},{},{:.3}",
            row.alpha, row.bound, row.xi, row.m, row.seed, secs
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the full report family into a directory.
pub fn emit_report(report: &SweepReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_results_csv(&report.rows, dir.join("results.csv"))?;
    write_results_json(&report.rows, dir.join("results.json"))?;
    write_long_csv(&report.rows, dir.join("long.csv"))?;
    write_timings_csv(&report.timings, &report.rows, dir.join("timings.csv"))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Flat key-value config files
// ---------------------------------------------------------------------------

/// Parses a flat `key value` / `key = value` file mirroring the CLI flags;
/// `#` starts a comment.
pub fn parse_config_file(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)?;
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = if let Some((k, v)) = line.split_once('=') {
            (k.trim(), v.trim())
        } else if let Some((k, v)) = line.split_once(char::is_whitespace) {
            (k.trim(), v.trim())
        } else {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected 'key value' or 'key = value', got {line:?}"),
            });
        };
        if key.is_empty() || value.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                message: "empty key or value".into(),
            });
        }
        pairs.push((key.to_string(), value.to_string()));
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            alphas: vec![0.5, 1.0],
            bounds: vec![BoundKind::Catoni, BoundKind::Cbb],
            xis: vec![-0.5],
            seeds: vec![3],
            epochs: 2,
            mc_train: 16,
            mc_eval: 64,
            batch_size: 64,
            ..ExperimentConfig::desk_defaults(DatasetSpec::Synthetic {
                n: 300,
                num_actions: 3,
                feature_dim: 4,
                test_n: 100,
                label_seed: 5,
                multilabel: false,
            })
        }
    }

    #[test]
    fn sweep_product_and_determinism() {
        let config = tiny_config();
        let report = run_experiment(&config).unwrap();
        assert_eq!(report.rows.len(), 4, "2 bounds x 2 alphas x 1 seed");
        for row in &report.rows {
            assert!(row.error.is_none(), "{:?}", row.error);
            assert!(row.guaranteed_risk.is_finite());
        }
        let again = run_experiment(&config).unwrap();
        let a = serde_json::to_string(&report.rows).unwrap();
        let b = serde_json::to_string(&again.rows).unwrap();
        assert_eq!(a, b, "sweep must be bit-deterministic");
    }

    #[test]
    fn sweep_records_cell_failures() {
        let mut config = tiny_config();
        config.bounds = vec![BoundKind::Ls];
        config.ms = vec![2]; // LS refuses grouped data
        config.alphas = vec![1.0];
        let report = run_experiment(&config).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert!(report.rows[0].error.is_some());
    }

    #[test]
    fn report_files_roundtrip() {
        let config = tiny_config();
        let mut report = run_experiment(&config).unwrap();
        report.rows.truncate(2);
        report.timings.truncate(2);
        let dir = tempfile::tempdir().unwrap();
        emit_report(&report, dir.path()).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert!(csv.starts_with("alpha,"), "header row present");
        assert_eq!(csv.lines().count(), 3);
        let long = std::fs::read_to_string(dir.path().join("long.csv")).unwrap();
        assert_eq!(long.lines().count(), 1 + 3 * 2, "three metrics per row");
        let back = read_results_json(dir.path().join("results.json")).unwrap();
        assert_eq!(
            serde_json::to_string(&back).unwrap(),
            serde_json::to_string(&report.rows).unwrap()
        );
    }

    #[test]
    fn config_file_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.conf");
        std::fs::write(&path, "seed 7\ndelta = 0.05\n# comment\ntau auto\n\nbound cbb\n").unwrap();
        let pairs = parse_config_file(&path).unwrap();
        assert_eq!(
            pairs,
            vec![
                ("seed".to_string(), "7".to_string()),
                ("delta".to_string(), "0.05".to_string()),
                ("tau".to_string(), "auto".to_string()),
                ("bound".to_string(), "cbb".to_string()),
            ]
        );
        std::fs::write(&path, "loneword\n").unwrap();
        assert!(parse_config_file(&path).is_err());
    }

    #[test]
    fn wilson_interval_basics() {
        let (lo, hi) = wilson_interval(0, 1);
        assert!(lo == 0.0 && hi < 1.0);
        let (lo, hi) = wilson_interval(1, 1);
        assert!(lo > 0.0 && hi == 1.0);
        let (lo, hi) = wilson_interval(10, 200);
        assert!(lo < 0.05 && hi > 0.05);
    }

    #[test]
    fn coverage_smoke_and_delta_monotonicity() {
        let env = CoverageEnv {
            pool_size: 40,
            n: 200,
            ..CoverageEnv::default()
        };
        let mc = McSettings::new(256, 9).unwrap();
        let tau = 0.2;
        let tight = BoundSettings {
            kind: BoundKind::Catoni,
            tau,
            delta: 0.05,
            xi: 0.0,
            n_lambda: 100,
        };
        let loose = BoundSettings {
            delta: 0.5,
            ..tight
        };
        let a = coverage_check(&env, &tight, &mc, 5, 11).unwrap();
        let b = coverage_check(&env, &loose, &mc, 5, 11).unwrap();
        assert_eq!(a.trials, 5);
        assert!(a.violations == 0, "tiny-sample smoke: {}", a.violations);
        // Same data and policies, looser delta -> smaller bound values.
        assert!(b.mean_bound <= a.mean_bound + 1e-12);

        let single = coverage_check(&env, &tight, &mc, 1, 12).unwrap();
        assert!(single.rate == 0.0 || single.rate == 1.0);
        assert!(single.ci_high - single.ci_low > 0.5, "wide interval at one trial");
    }
}
