use std::time::Instant;

use bandit_certify::bounds::{BoundKind, BoundSettings};
use bandit_certify::data::{convert_supervised, make_synthetic, split_holdout};
use bandit_certify::estimators::{estimate_logging_risk, true_risk_labeled, true_risk_softmax};
use bandit_certify::learn::{certify, minimize_bound, OptimSettings, PolicyClass};
use bandit_certify::policies::{train_logging_policy, GaussianPrior, McSettings};

fn main() {
    let alpha: f64 = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let epochs: usize = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(40);
    let t0 = Instant::now();
    let train = make_synthetic(20_000, 10, 20, 1, 2).unwrap();
    let test = make_synthetic(5_000, 10, 20, 1, 99).unwrap();
    let (logger_split, log_split) = split_holdout(&train, 0.05, 3).unwrap();
    let logger = train_logging_policy(&logger_split, 1e-6, 0.1, 10, 4).unwrap();
    let logged = convert_supervised(&log_split, &logger, alpha, 1, 5).unwrap();
    let scaled = logged.logger_params().unwrap().clone();
    let prior = GaussianPrior::from_logger(&scaled, 1.0).unwrap();
    let settings = BoundSettings { kind: BoundKind::Cbb, tau: 0.1, delta: 0.05, xi: -0.5, n_lambda: 100 };
    let optim = OptimSettings { epochs, seed: 8, ..OptimSettings::default() };
    let mc_train = McSettings { num_samples: 32, seed: 9, antithetic: true };
    let mc_eval = McSettings { num_samples: 256, seed: 10, antithetic: true };
    let out = minimize_bound(&logged, &prior, &settings, &optim, &mc_train, &mc_eval, PolicyClass::Lig).unwrap();
    let mc_cert = McSettings { num_samples: 2048, seed: 11, antithetic: true };
    let cert = certify(&out.policy, &logged, &prior, &settings, &mc_cert, PolicyClass::Lig, "bench", None, None).unwrap();
    let r_star = true_risk_labeled(&out.policy, &test, &mc_cert).unwrap();
    let r_pi0 = true_risk_softmax(&scaled, &test).unwrap();
    println!("alpha={alpha} epochs={epochs} total {:.1}s", t0.elapsed().as_secs_f64());
    println!("logging risk est {:.4}  R(pi0) true {:.4}", estimate_logging_risk(&logged), r_pi0);
    println!("GR {:.4}  GI {:.4}  R(pi*) {:.4}  best_epoch {}", cert.guaranteed_risk, cert.guaranteed_improvement, r_star, out.best_epoch);
    for p in out.trajectory.iter().step_by(8) {
        println!("  epoch {:3}: bound {:.5} kl {:.2} emp {:.4}", p.epoch, p.report.bound_value, p.report.kl, p.report.empirical_term);
    }
}
