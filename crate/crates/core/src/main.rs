//! `bandit-certify`: learn contextual-bandit policies from logged data and
//! certify them with high-probability risk bounds.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use bandit_certify::bounds::{BoundKind, BoundSettings};
use bandit_certify::data::{
    convert_supervised, make_synthetic, make_synthetic_multilabel, read_dataset, read_labeled,
    split_holdout, write_dataset, write_labeled,
};
use bandit_certify::estimators::{true_risk_labeled, true_risk_labeled_quadrature, true_risk_softmax};
use bandit_certify::harness::{
    coverage_check, emit_report, parse_config_file, run_experiment, CoverageEnv, DatasetSpec,
    ExperimentConfig, TauRule,
};
use bandit_certify::learn::{
    certify, minimize_bound, write_certificate, OptimSettings, PolicyClass,
};
use bandit_certify::policies::{
    read_policy, train_logging_policy, write_policy, GaussianPrior, McSettings, Policy,
};

#[derive(Parser)]
#[command(name = "bandit-certify", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; a flat `key value` config file given
/// via `--config` supplies defaults for any flag not set explicitly.
#[derive(Args, Debug, Clone)]
struct Shared {
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value_t = 0.05)]
    delta: f64,
    /// Clipping factor: `auto` resolves to 1/K.
    #[arg(long, global = true, default_value = "auto")]
    tau: TauRule,
    /// Control-variate shift for the cbb bound.
    #[arg(long, global = true, default_value_t = -0.5, allow_hyphen_values = true)]
    xi: f64,
    #[arg(long, global = true, default_value = "cbb")]
    bound: BoundKind,
    #[arg(long, global = true, default_value_t = 100)]
    epochs: usize,
    #[arg(long, global = true, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, global = true, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, global = true, default_value_t = 32)]
    mc_train: usize,
    #[arg(long, global = true, default_value_t = 2048)]
    mc_eval: usize,
    #[arg(long, global = true, default_value = "lig")]
    policy_class: PolicyClass,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled dataset (JSON lines).
    MakeSynth {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 1)]
        label_seed: u64,
        #[arg(long, default_value_t = false)]
        multilabel: bool,
    },
    /// Play a softmax logging policy on labeled data, producing a log.
    Convert {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        logger: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1)]
        m: usize,
    },
    /// Fit a softmax logging policy on labeled data.
    TrainLogger {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        l2: f64,
        #[arg(long, default_value_t = 0.1)]
        logger_lr: f64,
        #[arg(long, default_value_t = 10)]
        logger_epochs: usize,
        /// Optional 5% holdout handling: train on the first split of the
        /// given fraction, leaving the rest untouched for logging.
        #[arg(long)]
        holdout_fraction: Option<f64>,
    },
    /// Minimize the selected bound over the policy class.
    Optimize {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        data: PathBuf,
        /// Prior center; defaults to the logging policy stored in the data.
        #[arg(long)]
        prior: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        prior_scale: f64,
    },
    /// Certify an existing policy on logged data.
    Certify {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        prior: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        prior_scale: f64,
    },
    /// Evaluate a policy's true risk on labeled test data.
    Evaluate {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Use deterministic quadrature propensities instead of Monte Carlo.
        #[arg(long, default_value_t = false)]
        exact: bool,
    },
    /// Validate the 1-delta contract on the reference environment.
    Coverage {
        #[command(flatten)]
        shared: Shared,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        p: usize,
        #[arg(long, default_value_t = 200)]
        pool: usize,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
    },
    /// Run the experiment grid and emit report files.
    Sweep {
        #[command(flatten)]
        shared: Shared,
        #[arg(long, value_delimiter = ',', default_value = "1.0")]
        alphas: Vec<f64>,
        #[arg(long = "bounds", value_delimiter = ',', default_value = "cbb")]
        bound_kinds: Vec<BoundKind>,
        #[arg(long, value_delimiter = ',', default_value = "-0.5", allow_hyphen_values = true)]
        xis: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        ms: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        p: usize,
        #[arg(long, default_value_t = 1000)]
        test_n: usize,
        #[arg(long, default_value_t = 1)]
        label_seed: u64,
        #[arg(long, default_value_t = false)]
        multilabel: bool,
        /// Labeled train/test files instead of synthetic data.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
    },
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // A `--config FILE` anywhere on the command line injects `key value`
    // pairs as defaults for flags not given explicitly.
    let mut args: Vec<String> = std::env::args().collect();
    if let Some(pos) = args.iter().position(|a| a == "--config") {
        if pos + 1 >= args.len() {
            return Err("--config requires a path".into());
        }
        let path = args.remove(pos + 1);
        args.remove(pos);
        for (key, value) in parse_config_file(&path)? {
            let flag = format!("--{key}");
            if !args.iter().any(|a| a == &flag || a.starts_with(&format!("{flag}="))) {
                args.push(flag);
                args.push(value);
            }
        }
    }
    let cli = Cli::parse_from(args);
    run(cli.command)?;
    Ok(())
}

fn settings_from(shared: &Shared, num_actions: usize) -> BoundSettings {
    BoundSettings {
        kind: shared.bound,
        tau: shared.tau.resolve(num_actions),
        delta: shared.delta,
        xi: shared.xi,
        n_lambda: 100,
    }
}

fn out_dir(shared: &Shared) -> PathBuf {
    shared.out.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn prior_from(
    prior_path: &Option<PathBuf>,
    prior_scale: f64,
    data: &bandit_certify::data::LoggedDataset,
) -> Result<GaussianPrior, Box<dyn std::error::Error>> {
    let weights = match prior_path {
        Some(path) => match read_policy(path)? {
            Policy::Softmax(s) => s.weights().to_vec(),
            Policy::Lig(l) => l.mu,
        },
        None => data
            .logger_params()
            .ok_or("dataset stores no logging policy; pass --prior")?
            .weights()
            .to_vec(),
    };
    Ok(GaussianPrior::new(weights, prior_scale)?)
}

fn run(command: Command) -> Result<(), Box<dyn std::error::Error>> {
    match command {
        Command::MakeSynth {
            shared,
            n,
            k,
            p,
            label_seed,
            multilabel,
        } => {
            let data = if multilabel {
                make_synthetic_multilabel(n, k, p, label_seed, shared.seed)?
            } else {
                make_synthetic(n, k, p, label_seed, shared.seed)?
            };
            let dir = out_dir(&shared);
            std::fs::create_dir_all(&dir)?;
            let path = dir.join("labeled.jsonl");
            write_labeled(&data, &path)?;
            println!("wrote {} examples (K={k}, p={p}) to {}", data.len(), path.display());
        }
        Command::Convert {
            shared,
            data,
            logger,
            alpha,
            m,
        } => {
            let labeled = read_labeled(&data)?;
            let logger = match read_policy(&logger)? {
                Policy::Softmax(s) => s,
                Policy::Lig(_) => return Err("logging policy must be a softmax policy".into()),
            };
            let logged = convert_supervised(&labeled, &logger, alpha, m, shared.seed)?;
            let dir = out_dir(&shared);
            std::fs::create_dir_all(&dir)?;
            let path = dir.join("logged.jsonl");
            write_dataset(&logged, &path)?;
            println!(
                "wrote {} records over {} contexts to {}",
                logged.len(),
                logged.num_contexts(),
                path.display()
            );
        }
        Command::TrainLogger {
            shared,
            data,
            l2,
            logger_lr,
            logger_epochs,
            holdout_fraction,
        } => {
            let full = read_labeled(&data)?;
            let dir = out_dir(&shared);
            std::fs::create_dir_all(&dir)?;
            let train = match holdout_fraction {
                Some(f) => {
                    let (head, rest) = split_holdout(&full, f, shared.seed)?;
                    write_labeled(&rest, dir.join("logging-split.jsonl"))?;
                    head
                }
                None => full,
            };
            let logger = train_logging_policy(&train, l2, logger_lr, logger_epochs, shared.seed)?;
            let path = dir.join("logger.json");
            write_policy(&Policy::Softmax(logger), &path)?;
            println!("wrote logging policy to {}", path.display());
        }
        Command::Optimize {
            shared,
            data,
            prior,
            prior_scale,
        } => {
            let logged = read_dataset(&data)?;
            let prior = prior_from(&prior, prior_scale, &logged)?;
            let settings = settings_from(&shared, logged.num_actions());
            let optim = OptimSettings {
                lr: shared.lr,
                epochs: shared.epochs,
                batch_size: shared.batch_size,
                seed: shared.seed,
                ..OptimSettings::default()
            };
            let mc_train = McSettings {
                num_samples: shared.mc_train,
                seed: shared.seed.wrapping_add(1),
                antithetic: true,
            };
            let mc_eval = McSettings {
                num_samples: shared.mc_eval,
                seed: shared.seed.wrapping_add(2),
                antithetic: true,
            };
            let outcome = minimize_bound(
                &logged, &prior, &settings, &optim, &mc_train, &mc_eval, shared.policy_class,
            )?;
            let dir = out_dir(&shared);
            std::fs::create_dir_all(&dir)?;
            let policy_path = dir.join("policy.json");
            write_policy(&Policy::Lig(outcome.policy.clone()), &policy_path)?;
            std::fs::write(
                dir.join("trajectory.json"),
                serde_json::to_string_pretty(&outcome.trajectory)?,
            )?;
            let cert = certify(
                &outcome.policy,
                &logged,
                &prior,
                &settings,
                &mc_eval,
                shared.policy_class,
                policy_path.display().to_string(),
                Some(mc_train),
                Some(optim),
            )?;
            write_certificate(&cert, dir.join("certificate.json"))?;
            if let Some(reason) = &outcome.aborted {
                eprintln!("warning: training stopped early: {reason}");
            }
            println!(
                "GR {:.6}  logging risk {:.6}  GI {:.6}  verdict {:?}  (best epoch {})",
                cert.guaranteed_risk,
                cert.logging_risk,
                cert.guaranteed_improvement,
                cert.verdict,
                outcome.best_epoch
            );
        }
        Command::Certify {
            shared,
            data,
            policy,
            prior,
            prior_scale,
        } => {
            let logged = read_dataset(&data)?;
            let prior = prior_from(&prior, prior_scale, &logged)?;
            let settings = settings_from(&shared, logged.num_actions());
            let lig = match read_policy(&policy)? {
                Policy::Lig(l) => l,
                Policy::Softmax(_) => {
                    return Err("certify expects a lig policy file".into());
                }
            };
            let mc_eval = McSettings {
                num_samples: shared.mc_eval,
                seed: shared.seed.wrapping_add(2),
                antithetic: true,
            };
            let cert = certify(
                &lig,
                &logged,
                &prior,
                &settings,
                &mc_eval,
                shared.policy_class,
                policy.display().to_string(),
                None,
                None,
            )?;
            let dir = out_dir(&shared);
            std::fs::create_dir_all(&dir)?;
            write_certificate(&cert, dir.join("certificate.json"))?;
            println!(
                "GR {:.6}  logging risk {:.6}  GI {:.6}  verdict {:?}",
                cert.guaranteed_risk, cert.logging_risk, cert.guaranteed_improvement, cert.verdict
            );
        }
        Command::Evaluate {
            shared,
            policy,
            test,
            exact,
        } => {
            let test = read_labeled(&test)?;
            let risk = match read_policy(&policy)? {
                Policy::Softmax(s) => true_risk_softmax(&s, &test)?,
                Policy::Lig(l) => {
                    if exact {
                        true_risk_labeled_quadrature(&l, &test)?
                    } else {
                        let mc = McSettings {
                            num_samples: shared.mc_eval,
                            seed: shared.seed,
                            antithetic: true,
                        };
                        true_risk_labeled(&l, &test, &mc)?
                    }
                }
            };
            println!("true risk: {risk:.6}");
        }
        Command::Coverage {
            shared,
            k,
            p,
            pool,
            n,
            trials,
            alpha,
        } => {
            let env = CoverageEnv {
                num_actions: k,
                feature_dim: p,
                pool_size: pool,
                n,
                alpha,
                label_seed: 1,
                env_seed: 2,
            };
            let settings = settings_from(&shared, k);
            let mc_eval = McSettings {
                num_samples: shared.mc_eval,
                seed: shared.seed.wrapping_add(2),
                antithetic: true,
            };
            let report = coverage_check(&env, &settings, &mc_eval, trials, shared.seed)?;
            let dir = out_dir(&shared);
            std::fs::create_dir_all(&dir)?;
            std::fs::write(
                dir.join("coverage.json"),
                serde_json::to_string_pretty(&report)?,
            )?;
            println!(
                "bound {}  violations {}/{}  rate {:.4}  CI [{:.4}, {:.4}]  delta {}",
                report.bound, report.violations, report.trials, report.rate, report.ci_low,
                report.ci_high, report.delta
            );
        }
        Command::Sweep {
            shared,
            alphas,
            bound_kinds,
            xis,
            ms,
            seeds,
            n,
            k,
            p,
            test_n,
            label_seed,
            multilabel,
            data,
            test,
        } => {
            let dataset = match (data, test) {
                (Some(train), Some(test)) => DatasetSpec::Files { train, test },
                (None, None) => DatasetSpec::Synthetic {
                    n,
                    num_actions: k,
                    feature_dim: p,
                    test_n,
                    label_seed,
                    multilabel,
                },
                _ => return Err("--data and --test must be given together".into()),
            };
            let config = ExperimentConfig {
                dataset,
                alphas,
                bounds: bound_kinds,
                xis,
                ms,
                seeds,
                tau: shared.tau,
                delta: shared.delta,
                epochs: shared.epochs,
                lr: shared.lr,
                batch_size: shared.batch_size,
                mc_train: shared.mc_train,
                mc_eval: shared.mc_eval,
                policy_class: shared.policy_class,
                logger_l2: 1e-6,
                logger_lr: 0.1,
                logger_epochs: 10,
            };
            let report = run_experiment(&config)?;
            let dir = out_dir(&shared);
            emit_report(&report, &dir)?;
            let failures = report.rows.iter().filter(|r| r.error.is_some()).count();
            println!(
                "{} cells -> {} ({} failed)",
                report.rows.len(),
                dir.display(),
                failures
            );
        }
    }
    Ok(())
}
