//! Policy classes: linear softmax (logging), linear independent Gaussian
//! (the learnable class) and mixed logit (a comparison class).
//!
//! A LIG policy draws a score matrix `theta ~ N(mu, sigma^2 I)` and plays
//! `argmax_a phi(x)^T theta_a`. Its propensity reduces to a one-dimensional
//! integral over a standard normal `eps`:
//!
//! ```text
//! pi(a|x) = E_eps[ prod_{a' != a} Phi(eps + (s_a - s_a')) ],
//! s_b = phi(x)^T mu_b / (sigma * ||phi(x)||)
//! ```
//!
//! Three evaluators of this integral coexist, with different contracts:
//!
//! - [`lig_propensity`] / [`lig_propensity_grad`]: plain Monte-Carlo average
//!   of the integrand over shared `eps` draws, and the matching analytic
//!   reparameterization gradient. This is the training path.
//! - [`lig_propensity_all`]: all-action vector from shared `K`-dimensional
//!   draws. Each draw is scored by the conditional split of the argmax
//!   probability given the maximum score, so the `K` entries partition 1
//!   exactly per draw: the returned vector sums to 1 to machine precision
//!   while staying unbiased for every action. This is the evaluation path
//!   feeding certificates and conditional moments.
//! - [`lig_propensity_quadrature`]: deterministic composite-Simpson
//!   evaluation of the 1-D integral, used where an effectively exact value
//!   is wanted (coverage oracles, closed-form checks).

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{
    derive_seed, dot, ln_normal_cdf, ln_normal_pdf, logsumexp, norm2, normal_cdf, normal_pdf,
};

// ---------------------------------------------------------------------------
// Parameter types
// ---------------------------------------------------------------------------

/// Linear softmax policy `pi(a|x) ∝ exp(phi(x)^T w_a)`; row `a` of the
/// weight matrix scores action `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxParams {
    weights: Vec<Vec<f64>>,
}

impl SoftmaxParams {
    pub fn new(weights: Vec<Vec<f64>>) -> Result<Self> {
        validate_matrix(&weights, "softmax weights")?;
        Ok(Self { weights })
    }

    pub fn zeros(num_actions: usize, feature_dim: usize) -> Self {
        Self {
            weights: vec![vec![0.0; feature_dim]; num_actions],
        }
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn num_actions(&self) -> usize {
        self.weights.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.weights[0].len()
    }

    /// Weights scaled by an inverse temperature.
    pub fn scaled(&self, alpha: f64) -> SoftmaxParams {
        SoftmaxParams {
            weights: self
                .weights
                .iter()
                .map(|row| row.iter().map(|w| alpha * w).collect())
                .collect(),
        }
    }

    pub fn scores(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.feature_dim() {
            return Err(Error::dim("features", self.feature_dim(), features.len()));
        }
        let scores: Vec<f64> = self.weights.iter().map(|row| dot(row, features)).collect();
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("softmax scores".into()));
        }
        Ok(scores)
    }

    /// Full probability vector; entries are `exp(s_a - logsumexp(s))`.
    pub fn propensities(&self, features: &[f64]) -> Result<Vec<f64>> {
        let scores = self.scores(features)?;
        let lse = logsumexp(&scores);
        Ok(scores.iter().map(|s| (s - lse).exp()).collect())
    }

    pub fn propensity(&self, features: &[f64], action: usize) -> Result<f64> {
        let probs = self.propensities(features)?;
        probs
            .get(action)
            .copied()
            .ok_or_else(|| Error::dim("action", self.num_actions(), action))
    }
}

/// Linear independent Gaussian policy: mean matrix `mu` (K x p) and a
/// shared positive scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LigParams {
    pub mu: Vec<Vec<f64>>,
    pub sigma: f64,
}

impl LigParams {
    pub fn new(mu: Vec<Vec<f64>>, sigma: f64) -> Result<Self> {
        validate_matrix(&mu, "lig mean")?;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::range("sigma", format!("{sigma} not in (0, inf)")));
        }
        Ok(Self { mu, sigma })
    }

    pub fn num_actions(&self) -> usize {
        self.mu.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.mu[0].len()
    }

    /// Normalized score gaps `s_b = phi^T mu_b / (sigma ||phi||)`.
    pub(crate) fn normalized_scores(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.feature_dim() {
            return Err(Error::dim("features", self.feature_dim(), features.len()));
        }
        let norm = norm2(features);
        if norm == 0.0 {
            return Err(Error::Invalid("zero feature vector".into()));
        }
        let denom = self.sigma * norm;
        Ok(self.mu.iter().map(|row| dot(row, features) / denom).collect())
    }
}

/// Isotropic Gaussian prior anchoring the KL term; built from the logging
/// policy's parameters so it stays data-free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    pub mu0: Vec<Vec<f64>>,
    pub sigma0: f64,
}

impl GaussianPrior {
    pub fn new(mu0: Vec<Vec<f64>>, sigma0: f64) -> Result<Self> {
        validate_matrix(&mu0, "prior mean")?;
        if !(sigma0 > 0.0 && sigma0.is_finite()) {
            return Err(Error::range("sigma0", format!("{sigma0} not in (0, inf)")));
        }
        Ok(Self { mu0, sigma0 })
    }

    pub fn from_logger(logger: &SoftmaxParams, sigma0: f64) -> Result<Self> {
        Self::new(logger.weights().to_vec(), sigma0)
    }

    pub fn dim(&self) -> usize {
        self.mu0.len() * self.mu0[0].len()
    }

    /// The policy at the prior's center (`mu = mu0`, `sigma = sigma0`).
    pub fn center(&self) -> LigParams {
        LigParams {
            mu: self.mu0.clone(),
            sigma: self.sigma0,
        }
    }
}

fn validate_matrix(m: &[Vec<f64>], what: &str) -> Result<()> {
    if m.is_empty() || m[0].is_empty() {
        return Err(Error::Invalid(format!("{what}: empty matrix")));
    }
    let p = m[0].len();
    for row in m {
        if row.len() != p {
            return Err(Error::dim(what, p, row.len()));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(what.into()));
        }
    }
    Ok(())
}

/// Monte-Carlo settings for propensity integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub num_samples: usize,
    pub seed: u64,
    pub antithetic: bool,
}

impl McSettings {
    pub fn new(num_samples: usize, seed: u64) -> Result<Self> {
        if num_samples < 1 {
            return Err(Error::range("num_samples", "must be >= 1".to_string()));
        }
        Ok(Self {
            num_samples,
            seed,
            antithetic: true,
        })
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }
}

// ---------------------------------------------------------------------------
// Draw generation
// ---------------------------------------------------------------------------

/// Scalar standard-normal draws; antithetic pairs are adjacent.
fn scalar_draws(mc: &McSettings) -> Vec<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(mc.seed);
    let s = mc.num_samples;
    let mut out = Vec::with_capacity(s);
    if mc.antithetic {
        while out.len() + 2 <= s {
            let z: f64 = rng.sample(StandardNormal);
            out.push(z);
            out.push(-z);
        }
        if out.len() < s {
            out.push(rng.sample(StandardNormal));
        }
    } else {
        for _ in 0..s {
            out.push(rng.sample(StandardNormal));
        }
    }
    out
}

/// K-dimensional draws for the shared all-action evaluators.
fn vector_draws(mc: &McSettings, k: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha12Rng::seed_from_u64(mc.seed);
    let s = mc.num_samples;
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(s);
    if mc.antithetic {
        while out.len() + 2 <= s {
            let z: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
            let neg = z.iter().map(|v| -v).collect();
            out.push(z);
            out.push(neg);
        }
        if out.len() < s {
            out.push((0..k).map(|_| rng.sample(StandardNormal)).collect());
        }
    } else {
        for _ in 0..s {
            out.push((0..k).map(|_| rng.sample(StandardNormal)).collect());
        }
    }
    out
}

// ---------------------------------------------------------------------------
// LIG sampling and propensities
// ---------------------------------------------------------------------------

/// Draws `theta ~ N(mu, sigma^2 I)` and returns `argmax_a phi^T theta_a`;
/// ties break to the lowest index.
pub fn lig_sample_action(params: &LigParams, features: &[f64], seed: u64) -> Result<usize> {
    if features.len() != params.feature_dim() {
        return Err(Error::dim("features", params.feature_dim(), features.len()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut best = 0usize;
    let mut best_score = f64::NEG_INFINITY;
    for (a, row) in params.mu.iter().enumerate() {
        let mut score = 0.0;
        for (j, &m) in row.iter().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            score += features[j] * (m + params.sigma * z);
        }
        if score > best_score {
            best_score = score;
            best = a;
        }
    }
    Ok(best)
}

/// Integrand `G(eps, a) = prod_{b != a} Phi(eps + s_a - s_b)`, at
/// quadrature precision.
fn g_integrand(scores: &[f64], action: usize, eps: f64) -> f64 {
    let sa = scores[action];
    let mut g = 1.0;
    for (b, &sb) in scores.iter().enumerate() {
        if b != action {
            g *= normal_cdf(eps + sa - sb);
        }
    }
    g
}

/// Same integrand with the fast fused CDF, matching the gradient kernel's
/// arithmetic so finite differences of the value see the same function.
fn g_integrand_fast(scores: &[f64], action: usize, eps: f64) -> f64 {
    let sa = scores[action];
    let mut g = 1.0;
    for (b, &sb) in scores.iter().enumerate() {
        if b != action {
            g *= crate::math::fast_phi_pdf(eps + sa - sb).0;
        }
    }
    g
}

/// Monte-Carlo propensity of a single action (the training-side estimator).
pub fn lig_propensity(
    params: &LigParams,
    features: &[f64],
    action: usize,
    mc: &McSettings,
) -> Result<f64> {
    Ok(lig_propensity_with_se(params, features, action, mc)?.0)
}

/// Same estimator, also returning the Monte-Carlo standard error (computed
/// over antithetic pair means when pairing is on).
pub fn lig_propensity_with_se(
    params: &LigParams,
    features: &[f64],
    action: usize,
    mc: &McSettings,
) -> Result<(f64, f64)> {
    let scores = params.normalized_scores(features)?;
    if action >= scores.len() {
        return Err(Error::dim("action", scores.len(), action));
    }
    let draws = scalar_draws(mc);
    let values: Vec<f64> = if mc.antithetic && draws.len() >= 2 {
        draws
            .chunks(2)
            .map(|pair| {
                let mut acc = 0.0;
                for &eps in pair {
                    acc += g_integrand_fast(&scores, action, eps);
                }
                acc / pair.len() as f64
            })
            .collect()
    } else {
        draws.iter().map(|&eps| g_integrand_fast(&scores, action, eps)).collect()
    };
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok((mean, (var / n).sqrt()))
}

/// All-action propensity vector from shared draws.
///
/// Per draw `Z ~ N(0, I_K)` the maximum `t = max_b (Z_b + s_b)` is located,
/// and each action is credited with the conditional probability that it is
/// the argmax given that maximum:
/// `w_a = h_a(t) / sum_b h_b(t)` with
/// `h_a(t) = pdf(t - s_a) * prod_{b != a} Phi(t - s_b)`.
/// `sum_b h_b` is the exact density of the maximum, so each `w_a` is
/// unbiased for `pi(a|x)` and the vector sums to 1 per draw. Weights are
/// formed in log space, so widely spread scores stay finite.
pub fn lig_propensity_all(params: &LigParams, features: &[f64], mc: &McSettings) -> Result<Vec<f64>> {
    let scores = params.normalized_scores(features)?;
    let k = scores.len();
    let draws = vector_draws(mc, k);
    let mut acc = vec![0.0; k];
    let mut cdf = vec![0.0; k];
    let mut pdf = vec![0.0; k];
    let mut prefix = vec![0.0; k + 1];
    let mut suffix = vec![0.0; k + 1];
    for z in &draws {
        let mut t = f64::NEG_INFINITY;
        for b in 0..k {
            let v = z[b] + scores[b];
            if v > t {
                t = v;
            }
        }
        for b in 0..k {
            let (c, d) = crate::math::fast_phi_pdf(t - scores[b]);
            cdf[b] = c;
            pdf[b] = d;
        }
        prefix[0] = 1.0;
        for b in 0..k {
            prefix[b + 1] = prefix[b] * cdf[b];
        }
        suffix[k] = 1.0;
        for b in (0..k).rev() {
            suffix[b] = suffix[b + 1] * cdf[b];
        }
        let mut denom = 0.0;
        for b in 0..k {
            denom += pdf[b] * prefix[b] * suffix[b + 1];
        }
        if denom > 0.0 {
            for b in 0..k {
                acc[b] += pdf[b] * prefix[b] * suffix[b + 1] / denom;
            }
        } else {
            // Deep-tail draw: redo this draw's split in log space.
            partition_log_space(&scores, t, &mut acc);
        }
    }
    let s = draws.len() as f64;
    for v in &mut acc {
        *v /= s;
    }
    Ok(acc)
}

fn partition_log_space(scores: &[f64], t: f64, acc: &mut [f64]) {
    let k = scores.len();
    let mut log_h = vec![0.0; k];
    let mut total = 0.0;
    let mut ln_cdf = vec![0.0; k];
    for b in 0..k {
        ln_cdf[b] = ln_normal_cdf(t - scores[b]);
        total += ln_cdf[b];
    }
    for b in 0..k {
        log_h[b] = ln_normal_pdf(t - scores[b]) + total - ln_cdf[b];
    }
    let lse = logsumexp(&log_h);
    for b in 0..k {
        acc[b] += (log_h[b] - lse).exp();
    }
}

/// Deterministic evaluation of the 1-D propensity integral by composite
/// Simpson quadrature on `eps in [-8.5, 8.5]`. The integrand has unit
/// curvature scale in `eps` regardless of the score spread, so a fixed rule
/// reaches ~1e-10 absolute error.
pub fn lig_propensity_quadrature(params: &LigParams, features: &[f64]) -> Result<Vec<f64>> {
    let scores = params.normalized_scores(features)?;
    let k = scores.len();
    const HALF_RANGE: f64 = 8.5;
    const INTERVALS: usize = 3200; // even
    let h = 2.0 * HALF_RANGE / INTERVALS as f64;
    let mut out = vec![0.0; k];
    for (a, v) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for i in 0..=INTERVALS {
            let eps = -HALF_RANGE + i as f64 * h;
            let w = if i == 0 || i == INTERVALS {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * normal_pdf(eps) * g_integrand(&scores, a, eps);
        }
        *v = acc * h / 3.0;
    }
    Ok(out)
}

/// Gradient of the Monte-Carlo propensity with respect to `mu` and `sigma`,
/// using the same `eps` draws as [`lig_propensity`] for the same settings.
///
/// Per draw, with `z_b = eps + s_a - s_b`:
/// `dG/dz_b = pdf(z_b) * prod_{c != a,b} Phi(z_c)`, chained through
/// `s_b = phi^T mu_b / (sigma ||phi||)`.
pub fn lig_propensity_grad(
    params: &LigParams,
    features: &[f64],
    action: usize,
    mc: &McSettings,
) -> Result<(Vec<Vec<f64>>, f64)> {
    let scores = params.normalized_scores(features)?;
    let k = scores.len();
    if action >= k {
        return Err(Error::dim("action", k, action));
    }
    let draws = scalar_draws(mc);
    let mut d_scores = vec![0.0; k];
    let mut d_sigma = 0.0;
    let mut workspace = GradWorkspace::new(k);
    for &eps in &draws {
        workspace.accumulate(&scores, action, eps, 1.0, &mut d_scores, &mut d_sigma, params.sigma);
    }
    let inv = 1.0 / draws.len() as f64;
    for v in &mut d_scores {
        *v *= inv;
    }
    d_sigma *= inv;

    // Chain s_b -> mu_b: ds_b/dmu_b = phi / (sigma ||phi||).
    let norm = norm2(features);
    let scale = 1.0 / (params.sigma * norm);
    let d_mu = d_scores
        .iter()
        .map(|&ds| features.iter().map(|&f| ds * f * scale).collect())
        .collect();
    Ok((d_mu, d_sigma))
}

/// Scratch space for the per-draw gradient kernel, shared with the learning
/// loop. Accumulates `weight * dG/ds_b` into `d_scores` and the direct
/// sigma term `weight * dG/dsigma` into `d_sigma`.
pub(crate) struct GradWorkspace {
    phis: Vec<f64>,
    pdfs: Vec<f64>,
    prefix: Vec<f64>,
    suffix: Vec<f64>,
    z: Vec<f64>,
}

impl GradWorkspace {
    pub(crate) fn new(k: usize) -> Self {
        Self {
            phis: vec![0.0; k],
            pdfs: vec![0.0; k],
            prefix: vec![0.0; k + 1],
            suffix: vec![0.0; k + 1],
            z: vec![0.0; k],
        }
    }

    /// Returns the integrand value G for this draw.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn accumulate(
        &mut self,
        scores: &[f64],
        action: usize,
        eps: f64,
        weight: f64,
        d_scores: &mut [f64],
        d_sigma: &mut f64,
        sigma: f64,
    ) -> f64 {
        let k = scores.len();
        let sa = scores[action];
        // Factor list excludes the target action; keep index mapping b -> slot.
        let mut slot = 0usize;
        for b in 0..k {
            if b == action {
                continue;
            }
            let z = eps + sa - scores[b];
            self.z[slot] = z;
            let (cdf, pdf) = crate::math::fast_phi_pdf(z);
            self.phis[slot] = cdf;
            self.pdfs[slot] = pdf;
            slot += 1;
        }
        let m = slot;
        self.prefix[0] = 1.0;
        for i in 0..m {
            self.prefix[i + 1] = self.prefix[i] * self.phis[i];
        }
        self.suffix[m] = 1.0;
        for i in (0..m).rev() {
            self.suffix[i] = self.suffix[i + 1] * self.phis[i];
        }
        let g_value = self.prefix[m];

        let mut slot = 0usize;
        let mut sum_coeff = 0.0;
        for b in 0..k {
            if b == action {
                continue;
            }
            let others = self.prefix[slot] * self.suffix[slot + 1];
            let coeff = self.pdfs[slot] * others; // dG/dz_b
            sum_coeff += coeff;
            d_scores[b] -= weight * coeff;
            // dz_b/dsigma = -(z_b - eps)/sigma
            *d_sigma -= weight * coeff * (self.z[slot] - eps) / sigma;
            slot += 1;
        }
        d_scores[action] += weight * sum_coeff;
        g_value
    }
}

// ---------------------------------------------------------------------------
// Comparison estimators
// ---------------------------------------------------------------------------

/// Naive propensity estimate: fraction of `S` full parameter draws whose
/// induced argmax equals `action`.
pub fn naive_mc_propensity(
    params: &LigParams,
    features: &[f64],
    action: usize,
    num_samples: usize,
    seed: u64,
) -> Result<f64> {
    if num_samples < 1 {
        return Err(Error::range("num_samples", "must be >= 1".to_string()));
    }
    if action >= params.num_actions() {
        return Err(Error::dim("action", params.num_actions(), action));
    }
    let mut hits = 0usize;
    for s in 0..num_samples {
        let a = lig_sample_action(params, features, derive_seed(seed, &[3, s as u64]))?;
        if a == action {
            hits += 1;
        }
    }
    Ok(hits as f64 / num_samples as f64)
}

/// Mixed-logit propensity `E_theta[softmax(phi^T theta)_a]` with shared
/// score-space draws.
pub fn mixed_logit_propensity(
    params: &LigParams,
    features: &[f64],
    action: usize,
    mc: &McSettings,
) -> Result<f64> {
    let all = mixed_logit_propensity_all(params, features, mc)?;
    all.get(action)
        .copied()
        .ok_or_else(|| Error::dim("action", params.num_actions(), action))
}

/// All-action mixed-logit vector; each draw contributes a softmax vector,
/// so the average sums to 1 to machine precision.
pub fn mixed_logit_propensity_all(
    params: &LigParams,
    features: &[f64],
    mc: &McSettings,
) -> Result<Vec<f64>> {
    if features.len() != params.feature_dim() {
        return Err(Error::dim("features", params.feature_dim(), features.len()));
    }
    let k = params.num_actions();
    let base: Vec<f64> = params.mu.iter().map(|row| dot(row, features)).collect();
    if base.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mixed-logit scores".into()));
    }
    let scale = params.sigma * norm2(features);
    let draws = vector_draws(mc, k);
    let mut acc = vec![0.0; k];
    let mut scores = vec![0.0; k];
    for z in &draws {
        for b in 0..k {
            scores[b] = base[b] + scale * z[b];
        }
        let lse = logsumexp(&scores);
        for b in 0..k {
            acc[b] += (scores[b] - lse).exp();
        }
    }
    for v in &mut acc {
        *v /= draws.len() as f64;
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Logging-policy training
// ---------------------------------------------------------------------------

/// Fits a linear softmax by minimizing multiclass cross-entropy (first
/// label as the target in multilabel mode) plus `l2 * ||w||^2`, with the
/// optimizer from [`crate::learn`].
pub fn train_logging_policy(
    data: &crate::data::LabeledDataset,
    l2: f64,
    lr: f64,
    epochs: usize,
    seed: u64,
) -> Result<SoftmaxParams> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(l2 >= 0.0) || !(lr > 0.0) {
        return Err(Error::range("l2/lr", format!("l2={l2}, lr={lr}")));
    }
    let k = data.num_actions;
    let p = data.feature_dim;
    let mut params = vec![0.0; k * p];
    let mut adam = crate::learn::AdamState::new(params.len());
    let opt = crate::learn::OptimSettings {
        lr,
        epochs,
        seed,
        ..crate::learn::OptimSettings::default()
    };
    // Full-batch: the logging split is small and the recipe counts epochs.
    let batch = data.len();
    let mut indices: Vec<usize> = (0..data.len()).collect();
    let mut grad = vec![0.0; k * p];
    for epoch in 0..epochs {
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, &[4, epoch as u64]));
        for i in (1..indices.len()).rev() {
            let j = rng.gen_range(0..=i);
            indices.swap(i, j);
        }
        for chunk in indices.chunks(batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut loss = 0.0;
            for &idx in chunk {
                let ex = &data.examples[idx];
                let target = ex.labels[0];
                let mut scores = vec![0.0; k];
                for (a, s) in scores.iter_mut().enumerate() {
                    *s = dot(&params[a * p..(a + 1) * p], &ex.features);
                }
                let lse = logsumexp(&scores);
                loss += lse - scores[target];
                for a in 0..k {
                    let prob = (scores[a] - lse).exp();
                    let coeff = (prob - if a == target { 1.0 } else { 0.0 }) / chunk.len() as f64;
                    for (j, &f) in ex.features.iter().enumerate() {
                        grad[a * p + j] += coeff * f;
                    }
                }
            }
            loss /= chunk.len() as f64;
            for (g, w) in grad.iter_mut().zip(&params) {
                *g += 2.0 * l2 * *w;
                loss += l2 * *w * *w / chunk.len() as f64;
            }
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    value: loss,
                });
            }
            crate::learn::adam_step(&mut params, &grad, &mut adam, &opt);
        }
    }
    SoftmaxParams::new((0..k).map(|a| params[a * p..(a + 1) * p].to_vec()).collect())
}

// ---------------------------------------------------------------------------
// Convenience wrapper: softmax propensity as a free function
// ---------------------------------------------------------------------------

pub fn softmax_propensity(params: &SoftmaxParams, features: &[f64], action: usize) -> Result<f64> {
    params.propensity(features, action)
}

pub fn softmax_propensity_all(params: &SoftmaxParams, features: &[f64]) -> Result<Vec<f64>> {
    params.propensities(features)
}

// ---------------------------------------------------------------------------
// Policy files
// ---------------------------------------------------------------------------

/// On-disk policy representation shared by the CLI and the harness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyFile {
    pub kind: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub p: usize,
    pub mu: Vec<Vec<f64>>,
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone)]
pub enum Policy {
    Softmax(SoftmaxParams),
    Lig(LigParams),
}

pub fn write_policy(policy: &Policy, path: impl AsRef<Path>) -> Result<()> {
    let file = match policy {
        Policy::Softmax(s) => PolicyFile {
            kind: "softmax".into(),
            k: s.num_actions(),
            p: s.feature_dim(),
            mu: s.weights().to_vec(),
            sigma: None,
        },
        Policy::Lig(l) => PolicyFile {
            kind: "lig".into(),
            k: l.num_actions(),
            p: l.feature_dim(),
            mu: l.mu.clone(),
            sigma: Some(l.sigma),
        },
    };
    let json = serde_json::to_string_pretty(&file).expect("policy serializes");
    std::fs::write(path, json)?;
    Ok(())
}

pub fn read_policy(path: impl AsRef<Path>) -> Result<Policy> {
    let text = std::fs::read_to_string(path)?;
    let file: PolicyFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if file.mu.len() != file.k || file.mu.first().map(|r| r.len()) != Some(file.p) {
        return Err(Error::Invalid("policy file: mu shape disagrees with K, p".into()));
    }
    match file.kind.as_str() {
        "softmax" => Ok(Policy::Softmax(SoftmaxParams::new(file.mu)?)),
        "lig" => {
            let sigma = file
                .sigma
                .ok_or_else(|| Error::Invalid("lig policy file requires sigma".into()))?;
            Ok(Policy::Lig(LigParams::new(file.mu, sigma)?))
        }
        other => Err(Error::Invalid(format!("unknown policy kind {other:?}"))),
    }
}
