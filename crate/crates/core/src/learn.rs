//! Bound minimization over policy parameters and the deployment decision.
//!
//! Training follows the recipe the certificates allow: minibatch Adam on a
//! differentiable estimate of the selected bound, where the risk, bias and
//! second-moment terms are driven by shared-draw reparameterized propensity
//! gradients and the KL term is differentiated exactly. The full-data bound
//! is re-evaluated once per epoch at evaluation-grade sample counts (with a
//! fixed evaluation seed, so epochs are compared under common random
//! numbers) and the parameters achieving the best evaluated bound are
//! returned, never the last iterate.
//!
//! Free-parameter handling per bound kind:
//! - square-root (LS): no free parameter;
//! - Catoni: `lambda` is optimized jointly with `(mu, sigma)` through its
//!   logarithm during training; evaluation re-minimizes it numerically;
//! - CBB: at every step the grid value minimizing the current estimated
//!   bound is selected, then gradients are taken holding it fixed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{
    cbb_bracket, evaluate_bound_with_table, gaussian_kl, BoundKind, BoundReport, BoundSettings,
    LambdaGrid, MGroupMoment,
};
use crate::data::LoggedDataset;
use crate::error::{Error, Result};
use crate::estimators::{bias_term, estimate_logging_risk, second_moment_term};
use crate::math::{derive_seed, dot, norm2, pairwise_mean};
use crate::policies::{
    lig_propensity_all, mixed_logit_propensity_all, GaussianPrior, GradWorkspace, LigParams,
    McSettings,
};

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

/// First-order optimizer settings. Defaults follow the bound-optimization
/// recipe: Adam at `1e-3` for 100 epochs, minibatch 256.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimSettings {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub seed: u64,
}

impl Default for OptimSettings {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 100,
            batch_size: 256,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            seed: 0,
        }
    }
}

/// Adam moment buffers.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One Adam update with bias correction:
/// `m <- b1 m + (1-b1) g; v <- b2 v + (1-b2) g^2; p <- p - lr m^ / (sqrt(v^) + eps)`.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, settings: &OptimSettings) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - settings.beta1.powi(t);
    let bc2 = 1.0 - settings.beta2.powi(t);
    for i in 0..params.len() {
        state.m[i] = settings.beta1 * state.m[i] + (1.0 - settings.beta1) * grads[i];
        state.v[i] = settings.beta2 * state.v[i] + (1.0 - settings.beta2) * grads[i] * grads[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= settings.lr * m_hat / (v_hat.sqrt() + settings.eps_adam);
    }
}

// ---------------------------------------------------------------------------
// Differentiable bound objective
// ---------------------------------------------------------------------------

/// Which propensity map the learned `(mu, sigma)` parametrize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyClass {
    Lig,
    MixedLogit,
}

impl std::str::FromStr for PolicyClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lig" => Ok(PolicyClass::Lig),
            "mixed-logit" | "mixedlogit" | "mixed_logit" => Ok(PolicyClass::MixedLogit),
            other => Err(Error::Invalid(format!("unknown policy class {other:?}"))),
        }
    }
}

/// Per-context propensity values and their parameter gradients, for the
/// actions in `needed` (other entries stay zero). Gradients with respect to
/// each mean row are rank-one in the features: `d value[a] / d mu_b =
/// dmu_coeff[a][b] * phi`.
struct ContextEval {
    values: Vec<f64>,
    dmu_coeff: Vec<Vec<f64>>,
    dsigma: Vec<f64>,
}

fn eval_context(
    class: PolicyClass,
    params: &LigParams,
    features: &[f64],
    needed: &[usize],
    mc: &McSettings,
    want_grad: bool,
) -> Result<ContextEval> {
    let k = params.num_actions();
    match class {
        PolicyClass::Lig => {
            let scores = params.normalized_scores(features)?;
            let mut rng = ChaCha12Rng::seed_from_u64(mc.seed);
            let s = mc.num_samples;
            let mut draws = Vec::with_capacity(s);
            if mc.antithetic {
                while draws.len() + 2 <= s {
                    let z: f64 = rng.sample(rand_distr::StandardNormal);
                    draws.push(z);
                    draws.push(-z);
                }
                if draws.len() < s {
                    draws.push(rng.sample(rand_distr::StandardNormal));
                }
            } else {
                for _ in 0..s {
                    draws.push(rng.sample(rand_distr::StandardNormal));
                }
            }
            let mut values = vec![0.0; k];
            let mut d_scores = vec![vec![0.0; k]; k];
            let mut dsigma = vec![0.0; k];
            let mut ws = GradWorkspace::new(k);
            let weight = 1.0 / draws.len() as f64;
            for &a in needed {
                for &eps in &draws {
                    let g = ws.accumulate(
                        &scores,
                        a,
                        eps,
                        weight,
                        &mut d_scores[a],
                        &mut dsigma[a],
                        params.sigma,
                    );
                    values[a] += weight * g;
                }
            }
            let scale = 1.0 / (params.sigma * norm2(features));
            let dmu_coeff = if want_grad {
                d_scores
                    .iter()
                    .map(|row| row.iter().map(|&d| d * scale).collect())
                    .collect()
            } else {
                Vec::new()
            };
            Ok(ContextEval {
                values,
                dmu_coeff,
                dsigma,
            })
        }
        PolicyClass::MixedLogit => {
            let base: Vec<f64> = params.mu.iter().map(|row| dot(row, features)).collect();
            let scale = params.sigma * norm2(features);
            let mut rng = ChaCha12Rng::seed_from_u64(mc.seed);
            let s = mc.num_samples;
            let mut values = vec![0.0; k];
            let mut dmu_coeff = vec![vec![0.0; k]; k];
            let mut dsigma = vec![0.0; k];
            let mut z = vec![0.0; k];
            let mut scores = vec![0.0; k];
            let mut probs = vec![0.0; k];
            let mut draws_done = 0usize;
            let mut sign = 1.0;
            while draws_done < s {
                if !mc.antithetic || sign > 0.0 {
                    for zi in z.iter_mut() {
                        *zi = rng.sample(rand_distr::StandardNormal);
                    }
                }
                for b in 0..k {
                    scores[b] = base[b] + scale * sign * z[b];
                }
                let lse = crate::math::logsumexp(&scores);
                for b in 0..k {
                    probs[b] = (scores[b] - lse).exp();
                }
                for &a in needed {
                    values[a] += probs[a];
                    if want_grad {
                        let pa = probs[a];
                        for b in 0..k {
                            let dd = pa * ((b == a) as u8 as f64 - probs[b]);
                            dmu_coeff[a][b] += dd;
                            dsigma[a] += dd * norm2(features) * sign * z[b];
                        }
                    }
                }
                draws_done += 1;
                if mc.antithetic {
                    sign = -sign;
                }
            }
            let inv = 1.0 / s as f64;
            for a in 0..k {
                values[a] *= inv;
                dsigma[a] *= inv;
                for c in dmu_coeff[a].iter_mut() {
                    *c *= inv;
                }
            }
            Ok(ContextEval {
                values,
                dmu_coeff,
                dsigma,
            })
        }
    }
}

/// Value and gradient of the training objective on a batch of contexts
/// (`None` = all), pure given the seed: finite differences under common
/// random numbers land on the same draws.
pub struct ObjectiveEval {
    pub value: f64,
    pub d_mu: Vec<Vec<f64>>,
    pub d_log_sigma: f64,
    pub d_log_lambda: f64,
    pub risk: f64,
    pub bias: f64,
    pub variance: f64,
    pub kl: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn bound_objective(
    class: PolicyClass,
    params: &LigParams,
    log_lambda: f64,
    data: &LoggedDataset,
    prior: &GaussianPrior,
    settings: &BoundSettings,
    grid: &LambdaGrid,
    mc: &McSettings,
    batch: Option<&[usize]>,
    seed: u64,
) -> Result<ObjectiveEval> {
    let k = data.num_actions();
    let p = data.feature_dim();
    let full: Vec<usize>;
    let batch: &[usize] = match batch {
        Some(b) => b,
        None => {
            full = (0..data.num_contexts()).collect();
            &full
        }
    };
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let needs_moments = settings.kind == BoundKind::Cbb;
    let logger = if needs_moments {
        Some(crate::estimators::logger_context_table(data)?)
    } else {
        None
    };
    // LS and Catoni run on plain cIPS; only CBB uses the control variate.
    let shift = if needs_moments { settings.xi } else { 0.0 };

    // Per-context propensity evaluations (parallel, order-stable seeds).
    let evals: Vec<ContextEval> = batch
        .par_iter()
        .map(|&ctx| {
            let range = &data.context_ranges()[ctx];
            let needed: Vec<usize> = if needs_moments {
                (0..k).collect()
            } else {
                let mut acts: Vec<usize> =
                    range.clone().map(|i| data.records()[i].action).collect();
                acts.sort_unstable();
                acts.dedup();
                acts
            };
            let seeded = mc.with_seed(derive_seed(seed, &[20, ctx as u64]));
            eval_context(class, params, data.context_features(ctx), &needed, &seeded, true)
        })
        .collect::<Result<_>>()?;

    // Batch estimate of the empirical risk term.
    let per_ctx_risk: Vec<f64> = batch
        .iter()
        .zip(&evals)
        .map(|(&ctx, ev)| {
            let range = &data.context_ranges()[ctx];
            let mut acc = 0.0;
            for i in range.clone() {
                let rec = &data.records()[i];
                let w = ev.values[rec.action] / rec.logging_propensity.max(settings.tau);
                acc += w * (rec.cost - shift);
            }
            acc / range.len() as f64
        })
        .collect();
    let risk = shift + pairwise_mean(&per_ctx_risk);

    let kl = gaussian_kl(params, prior)?;
    let n = data.len();
    let n_c = data.num_contexts();

    let (bias, per_ctx_v) = if needs_moments {
        let logger = logger.as_ref().unwrap();
        let b: Vec<f64> = batch
            .iter()
            .zip(&evals)
            .map(|(&ctx, ev)| bias_term(&ev.values, &logger[ctx], settings.tau))
            .collect();
        let v: Vec<f64> = batch
            .iter()
            .zip(&evals)
            .map(|(&ctx, ev)| second_moment_term(&ev.values, &logger[ctx], settings.tau))
            .collect();
        (pairwise_mean(&b), v)
    } else {
        (0.0, Vec::new())
    };

    // Assemble value and the partials of the bound wrt (risk, bias, v_i, kl).
    let d_risk: f64;
    let d_kl: f64;
    let mut d_bias = 0.0;
    let mut d_log_lambda = 0.0;
    let mut cbb_lambda = 0.0; // grid value held fixed while differentiating
    let value;
    match settings.kind {
        BoundKind::Ls => {
            let kappa = kl + (2.0 * (n as f64).sqrt() / settings.delta).ln();
            let lin = 2.0 * kappa / (settings.tau * n as f64);
            let radicand = 2.0 * (risk + 1.0 / settings.tau) * kappa / (settings.tau * n as f64);
            let sqrt_term = radicand.max(0.0).sqrt();
            value = risk + lin + sqrt_term;
            let guard = sqrt_term.max(1e-12);
            d_risk = 1.0 + kappa / (settings.tau * n as f64 * guard);
            d_kl = 2.0 / (settings.tau * n as f64)
                + (risk + 1.0 / settings.tau) / (settings.tau * n as f64 * guard);
        }
        BoundKind::Catoni => {
            let lambda = log_lambda.exp();
            let kappa = kl + (2.0 * (n as f64).sqrt() / settings.delta).ln();
            let expo = (-settings.tau * lambda * risk - kappa / n as f64).exp();
            let denom = settings.tau * lambda.exp_m1();
            value = (1.0 - expo) / denom;
            d_risk = expo * lambda / lambda.exp_m1();
            d_kl = expo / (n as f64 * denom);
            let d_lambda = expo * risk / lambda.exp_m1()
                - (1.0 - expo) * lambda.exp() / (settings.tau * lambda.exp_m1() * lambda.exp_m1());
            d_log_lambda = d_lambda * lambda;
        }
        BoundKind::Cbb => {
            let sqrt_term =
                ((kl + (4.0 * (n_c as f64).sqrt() / settings.delta).ln()) / (2.0 * n_c as f64))
                    .sqrt();
            // Batch moment aggregates by interaction count.
            let mut by_m: std::collections::BTreeMap<usize, (usize, f64)> = Default::default();
            for (&ctx, &v) in batch.iter().zip(&per_ctx_v) {
                let m = data.context_ranges()[ctx].len();
                let e = by_m.entry(m).or_insert((0, 0.0));
                e.0 += 1;
                e.1 += v;
            }
            let moments: Vec<MGroupMoment> = by_m
                .into_iter()
                .map(|(m, (contexts, sum))| MGroupMoment {
                    m,
                    contexts,
                    mean_v: sum / contexts as f64,
                })
                .collect();
            let mut best = (f64::INFINITY, grid.values[0]);
            for &lam in &grid.values {
                let b = cbb_bracket(lam, kl, settings, n_c, &moments)?;
                if b < best.0 {
                    best = (b, lam);
                }
            }
            let (bracket, lambda) = best;
            value = risk - settings.xi * bias + sqrt_term + bracket;
            d_risk = 1.0;
            d_bias = -settings.xi;
            let guard = sqrt_term.max(1e-12);
            d_kl = 1.0 / (4.0 * n_c as f64 * guard) + 1.0 / lambda;
            cbb_lambda = lambda;
        }
    }

    // Gradient assembly: per-context action coefficients, then one rank-one
    // update per mean row.
    let mut d_mu = vec![vec![0.0; p]; k];
    let mut d_sigma_total = 0.0;
    let inv_batch = 1.0 / batch.len() as f64;
    let mut coef = vec![0.0; k];
    for (&ctx, ev) in batch.iter().zip(&evals) {
        let range = &data.context_ranges()[ctx];
        coef.iter_mut().for_each(|c| *c = 0.0);
        for i in range.clone() {
            let rec = &data.records()[i];
            coef[rec.action] += d_risk * (rec.cost - shift)
                / rec.logging_propensity.max(settings.tau)
                * inv_batch
                / range.len() as f64;
        }
        if needs_moments {
            let logger = logger.as_ref().unwrap();
            let m = range.len() as f64;
            let g = crate::bounds::g_fn(cbb_lambda * settings.b_xi() / (m * n_c as f64))?;
            let v_ctx_coeff = cbb_lambda * settings.l_xi() * g / (m * n_c as f64) * inv_batch;
            for (a, c) in coef.iter_mut().enumerate() {
                let p0 = logger[ctx][a];
                if p0 < settings.tau {
                    *c += d_bias * (1.0 - p0 / settings.tau) * inv_batch;
                }
                let denom = p0.max(settings.tau);
                *c += v_ctx_coeff * p0 / (denom * denom);
            }
        }
        for (a, &ca) in coef.iter().enumerate() {
            if ca == 0.0 {
                continue;
            }
            d_sigma_total += ca * ev.dsigma[a];
            let feats = data.context_features(ctx);
            for (b, row) in d_mu.iter_mut().enumerate() {
                let c = ca * ev.dmu_coeff[a][b];
                if c != 0.0 {
                    for (rv, &fv) in row.iter_mut().zip(feats) {
                        *rv += c * fv;
                    }
                }
            }
        }
    }

    // Exact KL gradient.
    let s2 = prior.sigma0 * prior.sigma0;
    for (b, row) in d_mu.iter_mut().enumerate() {
        for (j, rv) in row.iter_mut().enumerate() {
            *rv += d_kl * (params.mu[b][j] - prior.mu0[b][j]) / s2;
        }
    }
    let d = prior.dim() as f64;
    d_sigma_total += d_kl * d * (params.sigma / s2 - 1.0 / params.sigma);

    Ok(ObjectiveEval {
        value,
        d_mu,
        d_log_sigma: d_sigma_total * params.sigma,
        d_log_lambda,
        risk,
        bias,
        variance: if per_ctx_v.is_empty() { 0.0 } else { pairwise_mean(&per_ctx_v) },
        kl,
    })
}

// ---------------------------------------------------------------------------
// minimize_bound
// ---------------------------------------------------------------------------

/// One trajectory point: the full-data evaluation-grade bound after an
/// epoch (epoch 0 is the initialization).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub report: BoundReport,
}

#[derive(Debug, Clone)]
pub struct LearnResult {
    pub policy: LigParams,
    pub trajectory: Vec<EpochReport>,
    pub best_epoch: usize,
    /// Set when training stopped early on a non-finite loss; the returned
    /// policy is the last good snapshot by best-so-far selection.
    pub aborted: Option<String>,
}

/// Evaluation-grade bound for either policy class (the public bound ops
/// cover the LIG class; the mixed-logit comparison shares everything but
/// the propensity table).
pub fn evaluate_bound_for_class(
    class: PolicyClass,
    policy: &LigParams,
    data: &LoggedDataset,
    prior: &GaussianPrior,
    settings: &BoundSettings,
    mc: &McSettings,
) -> Result<BoundReport> {
    let table: Vec<Vec<f64>> = (0..data.num_contexts())
        .into_par_iter()
        .map(|ctx| {
            let seeded = mc.with_seed(derive_seed(mc.seed, &[10, ctx as u64]));
            match class {
                PolicyClass::Lig => lig_propensity_all(policy, data.context_features(ctx), &seeded),
                PolicyClass::MixedLogit => {
                    mixed_logit_propensity_all(policy, data.context_features(ctx), &seeded)
                }
            }
        })
        .collect::<Result<_>>()?;
    let kl = gaussian_kl(policy, prior)?;
    evaluate_bound_with_table(&table, kl, data, settings, mc.num_samples)
}

/// Minimizes the selected bound over the policy parameters, starting from
/// the prior center (`mu = mu0`, `sigma = 1`), and returns the parameters
/// with the best full-data evaluated bound along the trajectory.
#[allow(clippy::too_many_arguments)]
pub fn minimize_bound(
    data: &LoggedDataset,
    prior: &GaussianPrior,
    settings: &BoundSettings,
    optim: &OptimSettings,
    mc_train: &McSettings,
    mc_eval: &McSettings,
    class: PolicyClass,
) -> Result<LearnResult> {
    settings.validate()?;
    if data.num_actions() != prior.mu0.len() || data.feature_dim() != prior.mu0[0].len() {
        return Err(Error::dim(
            "prior vs data",
            data.num_actions() * data.feature_dim(),
            prior.mu0.len() * prior.mu0[0].len(),
        ));
    }
    let k = data.num_actions();
    let p = data.feature_dim();
    let grid = crate::bounds::lambda_grid(data.len(), settings)?;

    // Flat layout: [mu row-major, log sigma, (log lambda for Catoni)].
    let with_lambda = settings.kind == BoundKind::Catoni;
    let dim = k * p + 1 + usize::from(with_lambda);
    let mut flat = vec![0.0; dim];
    for (a, row) in prior.mu0.iter().enumerate() {
        flat[a * p..(a + 1) * p].copy_from_slice(row);
    }
    flat[k * p] = 0.0; // log sigma = 0

    let unpack = |flat: &[f64]| -> Result<(LigParams, f64)> {
        let mu: Vec<Vec<f64>> = (0..k).map(|a| flat[a * p..(a + 1) * p].to_vec()).collect();
        let sigma = flat[k * p].exp();
        Ok((LigParams::new(mu, sigma)?, if with_lambda { flat[k * p + 1] } else { 0.0 }))
    };

    let eval_full = |flat: &[f64]| -> Result<BoundReport> {
        let (policy, _) = unpack(flat)?;
        evaluate_bound_for_class(class, &policy, data, prior, settings, mc_eval)
    };

    let mut trajectory = Vec::with_capacity(optim.epochs + 1);
    let init_report = eval_full(&flat)?;
    let mut best_value = init_report.bound_value;
    let mut best_flat = flat.clone();
    let mut best_epoch = 0usize;
    trajectory.push(EpochReport {
        epoch: 0,
        report: init_report,
    });

    let mut adam = AdamState::new(dim);
    let mut aborted = None;
    let mut indices: Vec<usize> = (0..data.num_contexts()).collect();
    let batch_size = optim.batch_size.clamp(1, data.num_contexts());

    'epochs: for epoch in 1..=optim.epochs {
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(optim.seed, &[6, epoch as u64]));
        for i in (1..indices.len()).rev() {
            let j = rng.gen_range(0..=i);
            indices.swap(i, j);
        }
        for (step, chunk) in indices.chunks(batch_size).enumerate() {
            let (policy, log_lambda) = unpack(&flat)?;
            let seed = derive_seed(optim.seed, &[7, epoch as u64, step as u64]);
            let eval = bound_objective(
                class, &policy, log_lambda, data, prior, settings, &grid, mc_train,
                Some(chunk), seed,
            )?;
            let mut grads = vec![0.0; dim];
            for (a, row) in eval.d_mu.iter().enumerate() {
                grads[a * p..(a + 1) * p].copy_from_slice(row);
            }
            grads[k * p] = eval.d_log_sigma;
            if with_lambda {
                grads[k * p + 1] = eval.d_log_lambda;
            }
            if !eval.value.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                aborted = Some(format!(
                    "non-finite loss or gradient at epoch {epoch}, step {step}"
                ));
                break 'epochs;
            }
            adam_step(&mut flat, &grads, &mut adam, optim);
        }
        let report = eval_full(&flat)?;
        if report.bound_value < best_value {
            best_value = report.bound_value;
            best_flat = flat.clone();
            best_epoch = epoch;
        }
        trajectory.push(EpochReport {
            epoch,
            report,
        });
    }

    let (policy, _) = unpack(&best_flat)?;
    Ok(LearnResult {
        policy,
        trajectory,
        best_epoch,
        aborted,
    })
}

// ---------------------------------------------------------------------------
// Certification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Deploy,
    KeepLogging,
}

/// Snapshot of everything that produced a certificate, for reproducibility.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SettingsSnapshot {
    pub bound: BoundSettings,
    pub mc_eval: McSettings,
    pub mc_train: Option<McSettings>,
    pub optim: Option<OptimSettings>,
    pub policy_class: PolicyClass,
    pub n: usize,
    pub n_contexts: usize,
}

/// The deployable outcome: a guaranteed risk, the logging baseline, their
/// difference and the resulting decision.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificate {
    pub guaranteed_risk: f64,
    pub logging_risk: f64,
    pub guaranteed_improvement: f64,
    pub verdict: Verdict,
    pub bound_report: BoundReport,
    pub policy_ref: String,
    pub run_id: String,
    pub snapshot: SettingsSnapshot,
}

/// Builds the certificate for a policy on logged data: `GR` is the bound
/// value, `GI = logging_risk - GR`, deploy iff `GI > 0`.
pub fn certify(
    policy: &LigParams,
    data: &LoggedDataset,
    prior: &GaussianPrior,
    settings: &BoundSettings,
    mc_eval: &McSettings,
    class: PolicyClass,
    policy_ref: impl Into<String>,
    mc_train: Option<McSettings>,
    optim: Option<OptimSettings>,
) -> Result<Certificate> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let report = evaluate_bound_for_class(class, policy, data, prior, settings, mc_eval)?;
    let logging_risk = estimate_logging_risk(data);
    let gr = report.bound_value;
    let gi = logging_risk - gr;
    let snapshot = SettingsSnapshot {
        bound: *settings,
        mc_eval: *mc_eval,
        mc_train,
        optim,
        policy_class: class,
        n: data.len(),
        n_contexts: data.num_contexts(),
    };
    let policy_ref = policy_ref.into();
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(&snapshot).expect("snapshot serializes"));
    hasher.update(policy_ref.as_bytes());
    let run_id = hex_prefix(&hasher.finalize(), 12);
    Ok(Certificate {
        guaranteed_risk: gr,
        logging_risk,
        guaranteed_improvement: gi,
        verdict: if gi > 0.0 { Verdict::Deploy } else { Verdict::KeepLogging },
        bound_report: report,
        policy_ref,
        run_id,
        snapshot,
    })
}

fn hex_prefix(bytes: &[u8], chars: usize) -> String {
    let mut s = String::with_capacity(chars);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
        if s.len() >= chars {
            break;
        }
    }
    s.truncate(chars);
    s
}

pub fn write_certificate(cert: &Certificate, path: impl AsRef<std::path::Path>) -> Result<()> {
    let json = serde_json::to_string_pretty(cert).expect("certificate serializes");
    std::fs::write(path, json)?;
    Ok(())
}

pub fn read_certificate(path: impl AsRef<std::path::Path>) -> Result<Certificate> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })
}
