//! PAC-Bayesian certificates: the square-root (LS) bound, Catoni's bound
//! and the conditional Bernstein bound (CBB), for i.i.d. and
//! multiple-interactions logs.
//!
//! All three upper-bound the true risk `R(pi_Q)` with probability at least
//! `1 - delta`, uniformly over posteriors `Q`, in terms of an empirical
//! clipped-IPS risk and the Gaussian KL divergence to a data-free prior:
//!
//! ```text
//! LS     = R  + 2 kap/(tau n) + sqrt(2 [R + 1/tau] kap / (tau n))
//! Catoni = min_{lam>0} [1 - exp(-tau lam R - kap/n)] / (tau (e^lam - 1))
//! CBB    = R_xi - xi B + sqrt((KL + ln(4 sqrt(n)/delta)) / (2n))
//!          + min_{lam in Grid} { (KL + ln(2 n_lam/delta))/lam
//!                                + lam l_xi mean_i[ V_i g(lam b_xi/(m_i n_c)) / (m_i n_c) ] }
//! ```
//!
//! with `kap = KL + ln(2 sqrt(n)/delta)`. Catoni's bound dominates LS for
//! every admissible input, which the test suite checks en masse. The CBB
//! grid lives in the parametrization in which its endpoints
//! `[a, b] = [sqrt(2 n tau ln(1/delta) / (5 l_xi)), 2n/b_xi]` are derived;
//! reports also expose the equivalent main-text value `lambda / n`.

use serde::{Deserialize, Serialize};

use crate::data::LoggedDataset;
use crate::error::{Error, Result};
use crate::estimators::{
    bias_term, cvcips_risk, lig_context_table, logger_context_table, second_moment_term,
};
use crate::math::pairwise_mean;
use crate::policies::{GaussianPrior, LigParams, McSettings};

/// Which certificate to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Ls,
    Catoni,
    Cbb,
}

impl std::str::FromStr for BoundKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ls" => Ok(BoundKind::Ls),
            "catoni" => Ok(BoundKind::Catoni),
            "cbb" => Ok(BoundKind::Cbb),
            other => Err(Error::Invalid(format!("unknown bound kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for BoundKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BoundKind::Ls => "ls",
            BoundKind::Catoni => "catoni",
            BoundKind::Cbb => "cbb",
        })
    }
}

/// Everything a bound evaluation needs besides data and policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSettings {
    pub kind: BoundKind,
    pub tau: f64,
    pub delta: f64,
    /// Control-variate shift; only the CBB bound uses it.
    pub xi: f64,
    /// CBB grid size.
    pub n_lambda: usize,
}

impl BoundSettings {
    pub fn new(kind: BoundKind, tau: f64) -> Self {
        Self {
            kind,
            tau,
            delta: 0.05,
            xi: -0.5,
            n_lambda: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::range("tau", format!("{} not in (0, 1]", self.tau)));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::range("delta", format!("{} not in (0, 1]", self.delta)));
        }
        if !(-1.0..=0.0).contains(&self.xi) {
            return Err(Error::range("xi", format!("{} not in [-1, 0]", self.xi)));
        }
        if self.n_lambda < 2 {
            return Err(Error::range("n_lambda", "must be >= 2".to_string()));
        }
        Ok(())
    }

    pub fn l_xi(&self) -> f64 {
        (self.xi * self.xi).max((1.0 + self.xi) * (1.0 + self.xi))
    }

    pub fn b_xi(&self) -> f64 {
        (1.0 + self.xi) / self.tau - self.xi
    }
}

// ---------------------------------------------------------------------------
// Ingredients
// ---------------------------------------------------------------------------

/// `g(u) = (e^u - 1 - u) / u^2`, extended by its Taylor value 1/2 at 0.
pub fn g_fn(u: f64) -> Result<f64> {
    if u < 0.0 {
        return Err(Error::range("g argument", format!("{u} < 0")));
    }
    if u > 1e-6 {
        Ok((u.exp_m1() - u) / (u * u))
    } else {
        Ok(0.5 + u / 6.0 + u * u / 24.0 + u * u * u / 120.0)
    }
}

/// KL divergence between two isotropic Gaussians with shared scales,
/// `N(mu, sigma^2 I_d)` against `N(mu0, sigma0^2 I_d)`:
/// `||mu - mu0||^2 / (2 sigma0^2) + d (sigma^2/(2 sigma0^2) + ln(sigma0/sigma) - 1/2)`.
pub fn gaussian_kl(q: &LigParams, prior: &GaussianPrior) -> Result<f64> {
    if q.num_actions() != prior.mu0.len() || q.feature_dim() != prior.mu0[0].len() {
        return Err(Error::dim(
            "prior mean",
            q.num_actions() * q.feature_dim(),
            prior.mu0.len() * prior.mu0[0].len(),
        ));
    }
    let d = prior.dim() as f64;
    let mut sq = 0.0;
    for (qrow, prow) in q.mu.iter().zip(&prior.mu0) {
        for (qv, pv) in qrow.iter().zip(prow) {
            let diff = qv - pv;
            sq += diff * diff;
        }
    }
    let s2 = prior.sigma0 * prior.sigma0;
    let ratio = q.sigma / prior.sigma0;
    Ok(sq / (2.0 * s2) + d * (ratio * ratio / 2.0 - ratio.ln() - 0.5))
}

#[inline]
fn ln_2sqrt_n_over_delta(n: usize, delta: f64) -> f64 {
    (2.0 * (n as f64).sqrt() / delta).ln()
}

// ---------------------------------------------------------------------------
// LS bound
// ---------------------------------------------------------------------------

/// Square-root PAC-Bayes bound on the clipped IPS risk.
pub fn ls_bound(empirical_cips: f64, kl: f64, n: usize, settings: &BoundSettings) -> Result<f64> {
    settings.validate()?;
    if kl < 0.0 {
        return Err(Error::range("kl", format!("{kl} < 0")));
    }
    if n < 1 {
        return Err(Error::range("n", "must be >= 1".to_string()));
    }
    let tau = settings.tau;
    let kappa = kl + ln_2sqrt_n_over_delta(n, settings.delta);
    let radicand = 2.0 * (empirical_cips + 1.0 / tau) * kappa / (tau * n as f64);
    if radicand < 0.0 {
        return Err(Error::Invalid(format!(
            "negative radicand: empirical risk {empirical_cips} below -1/tau"
        )));
    }
    Ok(empirical_cips + 2.0 * kappa / (tau * n as f64) + radicand.sqrt())
}

// ---------------------------------------------------------------------------
// Catoni bound
// ---------------------------------------------------------------------------

/// Catoni objective at a fixed `lambda`.
pub fn catoni_objective(
    lambda: f64,
    empirical_cips: f64,
    kl: f64,
    n: usize,
    settings: &BoundSettings,
) -> f64 {
    let tau = settings.tau;
    let kappa = kl + ln_2sqrt_n_over_delta(n, settings.delta);
    let exponent = -tau * lambda * empirical_cips - kappa / n as f64;
    (1.0 - exponent.exp()) / (tau * lambda.exp_m1())
}

const CATONI_LAMBDA_LO: f64 = 1e-6;
const CATONI_LAMBDA_HI: f64 = 50.0;
const CATONI_SCAN_POINTS: usize = 200;

/// Minimizes the Catoni objective over `lambda` with a log-spaced scan on
/// `[1e-6, 50]` followed by golden-section refinement to `|dlam| <= 1e-6`.
/// Returns the bound value and the minimizing `lambda`.
pub fn catoni_bound(
    empirical_cips: f64,
    kl: f64,
    n: usize,
    settings: &BoundSettings,
) -> Result<(f64, f64)> {
    settings.validate()?;
    if kl < 0.0 {
        return Err(Error::range("kl", format!("{kl} < 0")));
    }
    if n < 1 {
        return Err(Error::range("n", "must be >= 1".to_string()));
    }
    let f = |lam: f64| catoni_objective(lam, empirical_cips, kl, n, settings);

    let log_lo = CATONI_LAMBDA_LO.ln();
    let log_hi = CATONI_LAMBDA_HI.ln();
    let mut best_idx = 0usize;
    let mut best_val = f64::INFINITY;
    let mut grid = Vec::with_capacity(CATONI_SCAN_POINTS);
    for i in 0..CATONI_SCAN_POINTS {
        let lam =
            (log_lo + (log_hi - log_lo) * i as f64 / (CATONI_SCAN_POINTS - 1) as f64).exp();
        let v = f(lam);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("catoni objective at lambda {lam}")));
        }
        grid.push(lam);
        if v < best_val {
            best_val = v;
            best_idx = i;
        }
    }
    let mut lo = grid[best_idx.saturating_sub(1)];
    let mut hi = grid[(best_idx + 1).min(CATONI_SCAN_POINTS - 1)];
    // Golden-section search.
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > 1e-6 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    let candidates = [(best_val, grid[best_idx]), (f1, x1), (f2, x2)];
    let (value, lambda) = candidates
        .iter()
        .cloned()
        .min_by(|a, b| a.0.partial_cmp(&b.0).expect("finite objective"))
        .expect("nonempty");
    Ok((value, lambda))
}

/// Linearized Catoni value at the fixed `lambda = 1/50`: a closed-form
/// upper bound on [`catoni_bound`] obtained from `1 - e^{-x} <= x`, useful
/// as an independent sanity cap.
pub fn catoni_linear_upper(empirical_cips: f64, kl: f64, n: usize, settings: &BoundSettings) -> f64 {
    let lambda: f64 = 1.0 / 50.0;
    let tau = settings.tau;
    let kappa = kl + ln_2sqrt_n_over_delta(n, settings.delta);
    (tau * lambda * empirical_cips + kappa / n as f64) / (tau * lambda.exp_m1())
}

// ---------------------------------------------------------------------------
// Lambda grid
// ---------------------------------------------------------------------------

/// Strictly increasing positive grid for the CBB free parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub values: Vec<f64>,
}

/// Evenly spaced grid on `[a, b]` with
/// `a = sqrt(2 n tau ln(1/delta) / (5 l_xi))` and `b = 2n / b_xi`;
/// falls back to a log-spaced grid on `[1e-3 b, b]` when the interval is
/// empty (tiny `n`, or `delta = 1` collapsing `a` to zero).
pub fn lambda_grid(n: usize, settings: &BoundSettings) -> Result<LambdaGrid> {
    settings.validate()?;
    if n < 1 {
        return Err(Error::range("n", "must be >= 1".to_string()));
    }
    let nf = n as f64;
    let l_xi = settings.l_xi();
    let b_xi = settings.b_xi();
    let a = (2.0 * nf * settings.tau * (1.0 / settings.delta).ln() / (5.0 * l_xi)).sqrt();
    let b = 2.0 * nf / b_xi;
    let m = settings.n_lambda;
    let values: Vec<f64> = if a > 0.0 && a < b {
        (0..m)
            .map(|i| a + (b - a) * i as f64 / (m - 1) as f64)
            .collect()
    } else {
        let lo = (1e-3 * b).ln();
        let hi = b.ln();
        (0..m)
            .map(|i| (lo + (hi - lo) * i as f64 / (m - 1) as f64).exp())
            .collect()
    };
    Ok(LambdaGrid { values })
}

// ---------------------------------------------------------------------------
// CBB bound
// ---------------------------------------------------------------------------

/// Second-moment aggregate for one interaction count, enough to rebuild the
/// CBB bracket from a serialized report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MGroupMoment {
    pub m: usize,
    pub contexts: usize,
    pub mean_v: f64,
}

/// Fully itemized outcome of a bound evaluation; certificates embed it so
/// every term is auditable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub bound_value: f64,
    pub empirical_term: f64,
    pub kl: f64,
    pub n: usize,
    pub n_contexts: usize,
    pub tau: f64,
    pub delta: f64,
    pub xi: Option<f64>,
    pub mc_samples: usize,
    pub chosen_lambda: Option<f64>,
    /// Main-text parametrization of the CBB minimizer (`lambda / n`).
    pub chosen_lambda_scaled: Option<f64>,
    pub bias: Option<f64>,
    pub bias_term: Option<f64>,
    pub sqrt_term: Option<f64>,
    pub variance: Option<f64>,
    pub variance_by_m: Option<Vec<MGroupMoment>>,
    pub bracket_term: Option<f64>,
    pub linear_term: Option<f64>,
    pub grid: Option<Vec<f64>>,
}

impl BoundReport {
    fn base(kind: BoundKind, settings: &BoundSettings, data: &LoggedDataset, mc_samples: usize) -> Self {
        BoundReport {
            kind,
            bound_value: f64::NAN,
            empirical_term: f64::NAN,
            kl: f64::NAN,
            n: data.len(),
            n_contexts: data.num_contexts(),
            tau: settings.tau,
            delta: settings.delta,
            xi: None,
            mc_samples,
            chosen_lambda: None,
            chosen_lambda_scaled: None,
            bias: None,
            bias_term: None,
            sqrt_term: None,
            variance: None,
            variance_by_m: None,
            bracket_term: None,
            linear_term: None,
            grid: None,
        }
    }
}

/// CBB bracket at a fixed `lambda`, from per-m second-moment aggregates:
/// `(KL + ln(2 n_lam / delta)) / lambda
///  + lambda l_xi mean_i[ v_i g(lambda b_xi / (m_i n_c)) / (m_i n_c) ]`.
///
/// The mean runs over the contexts the aggregates describe (all of them for
/// a full evaluation, a minibatch during training); `n_contexts` is always
/// the full-data `n_c` appearing inside the bound's formula.
pub fn cbb_bracket(
    lambda: f64,
    kl: f64,
    settings: &BoundSettings,
    n_contexts: usize,
    moments: &[MGroupMoment],
) -> Result<f64> {
    let kl_term = (kl + (2.0 * settings.n_lambda as f64 / settings.delta).ln()) / lambda;
    let l_xi = settings.l_xi();
    let b_xi = settings.b_xi();
    let nc = n_contexts as f64;
    let total: usize = moments.iter().map(|m| m.contexts).sum();
    let mut v_term = 0.0;
    for mom in moments {
        let mn = mom.m as f64 * nc;
        let g = g_fn(lambda * b_xi / mn)?;
        v_term += (mom.contexts as f64 / total as f64) * mom.mean_v * g / mn;
    }
    Ok(kl_term + lambda * l_xi * v_term)
}

struct CbbCore {
    empirical: f64,
    bias: f64,
    variance: f64,
    kl: f64,
    sqrt_term: f64,
    bracket: f64,
    lambda: f64,
    grid: LambdaGrid,
    moments: Vec<MGroupMoment>,
}

fn cbb_core(
    policy_table: &[Vec<f64>],
    kl: f64,
    data: &LoggedDataset,
    settings: &BoundSettings,
) -> Result<CbbCore> {
    settings.validate()?;
    let logger_table = logger_context_table(data)?;

    // Per-record policy propensities read off the per-context vectors.
    let mut propensities = vec![0.0; data.len()];
    for (ctx, range) in data.context_ranges().iter().enumerate() {
        for i in range.clone() {
            propensities[i] = policy_table[ctx][data.records()[i].action];
        }
    }
    let empirical = cvcips_risk(&propensities, data, settings.tau, settings.xi)?;

    let per_context_b: Vec<f64> = policy_table
        .iter()
        .zip(&logger_table)
        .map(|(q, p0)| bias_term(q, p0, settings.tau))
        .collect();
    let bias = pairwise_mean(&per_context_b);

    let per_context_v: Vec<f64> = policy_table
        .iter()
        .zip(&logger_table)
        .map(|(q, p0)| second_moment_term(q, p0, settings.tau))
        .collect();
    let variance = pairwise_mean(&per_context_v);

    // Aggregate second moments by interaction count.
    let mut by_m: std::collections::BTreeMap<usize, (usize, f64)> = std::collections::BTreeMap::new();
    for (range, &v) in data.context_ranges().iter().zip(&per_context_v) {
        let entry = by_m.entry(range.len()).or_insert((0, 0.0));
        entry.0 += 1;
        entry.1 += v;
    }
    let moments: Vec<MGroupMoment> = by_m
        .into_iter()
        .map(|(m, (contexts, sum))| MGroupMoment {
            m,
            contexts,
            mean_v: sum / contexts as f64,
        })
        .collect();

    let n_c = data.num_contexts();
    let sqrt_term =
        ((kl + (4.0 * (n_c as f64).sqrt() / settings.delta).ln()) / (2.0 * n_c as f64)).sqrt();

    let grid = lambda_grid(data.len(), settings)?;
    let mut best = (f64::INFINITY, grid.values[0]);
    for &lam in &grid.values {
        let v = cbb_bracket(lam, kl, settings, n_c, &moments)?;
        if v < best.0 {
            best = (v, lam);
        }
    }
    Ok(CbbCore {
        empirical,
        bias,
        variance,
        kl,
        sqrt_term,
        bracket: best.0,
        lambda: best.1,
        grid,
        moments,
    })
}

fn cbb_report(
    core: CbbCore,
    data: &LoggedDataset,
    settings: &BoundSettings,
    mc_samples: usize,
) -> BoundReport {
    let bias_term = -settings.xi * core.bias;
    let bound_value = core.empirical + bias_term + core.sqrt_term + core.bracket;
    BoundReport {
        kind: BoundKind::Cbb,
        bound_value,
        empirical_term: core.empirical,
        kl: core.kl,
        xi: Some(settings.xi),
        chosen_lambda: Some(core.lambda),
        chosen_lambda_scaled: Some(core.lambda / data.len() as f64),
        bias: Some(core.bias),
        bias_term: Some(bias_term),
        sqrt_term: Some(core.sqrt_term),
        variance: Some(core.variance),
        variance_by_m: Some(core.moments),
        bracket_term: Some(core.bracket),
        grid: Some(core.grid.values),
        ..BoundReport::base(BoundKind::Cbb, settings, data, mc_samples)
    }
}

/// Core bound assembly from a per-context propensity table and a KL value;
/// shared between the LIG path below and the class-generic path in
/// [`crate::learn`].
pub(crate) fn evaluate_bound_with_table(
    policy_table: &[Vec<f64>],
    kl: f64,
    data: &LoggedDataset,
    settings: &BoundSettings,
    mc_samples: usize,
) -> Result<BoundReport> {
    settings.validate()?;
    if policy_table.len() != data.num_contexts() {
        return Err(Error::dim("propensity table", data.num_contexts(), policy_table.len()));
    }
    if kl < 0.0 {
        return Err(Error::range("kl", format!("{kl} < 0")));
    }
    match settings.kind {
        BoundKind::Cbb => {
            let core = cbb_core(policy_table, kl, data, settings)?;
            Ok(cbb_report(core, data, settings, mc_samples))
        }
        kind => {
            if data.context_ranges().iter().any(|r| r.len() > 1) {
                return Err(Error::RequiresIid);
            }
            let mut propensities = vec![0.0; data.len()];
            for (ctx, range) in data.context_ranges().iter().enumerate() {
                for i in range.clone() {
                    propensities[i] = policy_table[ctx][data.records()[i].action];
                }
            }
            let empirical = cvcips_risk(&propensities, data, settings.tau, 0.0)?;
            let mut report = BoundReport::base(kind, settings, data, mc_samples);
            report.empirical_term = empirical;
            report.kl = kl;
            match kind {
                BoundKind::Ls => {
                    let kappa = kl + ln_2sqrt_n_over_delta(data.len(), settings.delta);
                    report.linear_term = Some(2.0 * kappa / (settings.tau * data.len() as f64));
                    report.bound_value = ls_bound(empirical, kl, data.len(), settings)?;
                    report.sqrt_term =
                        Some(report.bound_value - empirical - report.linear_term.unwrap());
                }
                BoundKind::Catoni => {
                    let (value, lambda) = catoni_bound(empirical, kl, data.len(), settings)?;
                    report.bound_value = value;
                    report.chosen_lambda = Some(lambda);
                }
                BoundKind::Cbb => unreachable!(),
            }
            Ok(report)
        }
    }
}

/// Conditional Bernstein bound for i.i.d. records.
pub fn cbb_bound(
    policy: &LigParams,
    data: &LoggedDataset,
    prior: &GaussianPrior,
    settings: &BoundSettings,
    mc: &McSettings,
) -> Result<BoundReport> {
    if data.context_ranges().iter().any(|r| r.len() > 1) {
        return Err(Error::RequiresIid);
    }
    let table = lig_context_table(policy, data, mc)?;
    let kl = gaussian_kl(policy, prior)?;
    let core = cbb_core(&table, kl, data, settings)?;
    Ok(cbb_report(core, data, settings, mc.num_samples))
}

/// Conditional Bernstein bound for grouped (multiple-interactions) data.
/// With every group of size one it coincides with [`cbb_bound`] on the
/// ungrouped view.
pub fn cbb_bound_multi(
    policy: &LigParams,
    data: &LoggedDataset,
    prior: &GaussianPrior,
    settings: &BoundSettings,
    mc: &McSettings,
) -> Result<BoundReport> {
    if !data.is_grouped() {
        return Err(Error::RequiresGroups);
    }
    let table = lig_context_table(policy, data, mc)?;
    let kl = gaussian_kl(policy, prior)?;
    let core = cbb_core(&table, kl, data, settings)?;
    Ok(cbb_report(core, data, settings, mc.num_samples))
}

/// Evaluation-grade bound dispatch for LIG policies, used by learning,
/// certification and the harness. LS and Catoni presume i.i.d. records and
/// refuse logs with repeated interactions.
pub fn evaluate_bound(
    policy: &LigParams,
    data: &LoggedDataset,
    prior: &GaussianPrior,
    settings: &BoundSettings,
    mc: &McSettings,
) -> Result<BoundReport> {
    settings.validate()?;
    let table = lig_context_table(policy, data, mc)?;
    let kl = gaussian_kl(policy, prior)?;
    evaluate_bound_with_table(&table, kl, data, settings, mc.num_samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{convert_supervised, make_synthetic};
    use crate::policies::SoftmaxParams;
    use proptest::prelude::*;

    fn settings(kind: BoundKind, tau: f64, delta: f64, xi: f64) -> BoundSettings {
        BoundSettings {
            kind,
            tau,
            delta,
            xi,
            n_lambda: 100,
        }
    }

    #[test]
    fn g_reference_values() {
        assert!((g_fn(0.0).unwrap() - 0.5).abs() < 1e-15);
        let g1 = g_fn(1.0).unwrap();
        assert!((g1 - 0.7182818284590452).abs() < 1e-14, "g(1)={g1}");
        let g2 = g_fn(2.0).unwrap();
        assert!((g2 - 1.0972640247326626).abs() < 1e-14, "g(2)={g2}");
        assert!(g2 <= 1.1);
        assert!(g_fn(-0.1).is_err());
    }

    #[test]
    fn g_is_increasing_and_convex_on_mesh() {
        let mesh: Vec<f64> = (0..=1000).map(|i| 4.0 * i as f64 / 1000.0).collect();
        let vals: Vec<f64> = mesh.iter().map(|&u| g_fn(u).unwrap()).collect();
        for w in vals.windows(2) {
            assert!(w[1] > w[0]);
        }
        for w in vals.windows(3) {
            assert!(w[2] - w[1] >= w[1] - w[0] - 1e-12);
        }
    }

    #[test]
    fn kl_reference_values() {
        let q = LigParams::new(vec![vec![1.0]], 1.0).unwrap();
        let p = GaussianPrior::new(vec![vec![0.0]], 1.0).unwrap();
        assert!((gaussian_kl(&q, &p).unwrap() - 0.5).abs() < 1e-15);

        let q = LigParams::new(vec![vec![0.3, -0.7]], 1.0).unwrap();
        let p = GaussianPrior::new(vec![vec![0.3, -0.7]], 1.0).unwrap();
        assert_eq!(gaussian_kl(&q, &p).unwrap(), 0.0);

        // d = 2, mu = mu0, sigma = 0.5, sigma0 = 1.
        let q = LigParams::new(vec![vec![0.0, 0.0]], 0.5).unwrap();
        let kl = gaussian_kl(&q, &p2()).unwrap();
        assert!((kl - 0.6362943611198906).abs() < 1e-12, "kl={kl}");
    }

    fn p2() -> GaussianPrior {
        GaussianPrior::new(vec![vec![0.0, 0.0]], 1.0).unwrap()
    }

    #[test]
    fn ls_frozen_oracle() {
        let s = settings(BoundKind::Ls, 0.1, 0.05, 0.0);
        let v = ls_bound(-0.5, 0.0, 100, &s).unwrap();
        // mpmath: -0.5 + 1.1982929094215964 + 3.3739861646878705
        assert!((v - 4.0722790741094669).abs() < 1e-12, "ls={v}");
    }

    #[test]
    fn ls_zero_radicand_and_monotonicity() {
        let s = settings(BoundKind::Ls, 0.2, 0.1, 0.0);
        let n = 400;
        let v = ls_bound(-5.0, 0.0, n, &s).unwrap();
        let kappa = (2.0 * (n as f64).sqrt() / 0.1f64).ln();
        assert!((v - (-5.0 + 2.0 * kappa / (0.2 * n as f64))).abs() < 1e-12);

        let mut last = f64::NEG_INFINITY;
        for kl in [0.0, 1.0, 5.0, 50.0] {
            let v = ls_bound(-0.3, kl, 1000, &s).unwrap();
            assert!(v > last);
            last = v;
        }
        assert!(ls_bound(-5.0 - 1e-9, 0.0, n, &s).is_err());
    }

    #[test]
    fn catoni_minimality_and_linear_cap() {
        let s = settings(BoundKind::Catoni, 0.1, 0.05, 0.0);
        let (value, lambda) = catoni_bound(-0.5, 3.0, 1000, &s).unwrap();
        assert!(lambda > 0.0);
        // Minimum is below the objective at any probe point, including 1/50.
        for probe in [0.02, 0.1, 0.5, 1.0, 5.0, lambda * 1.01] {
            assert!(value <= catoni_objective(probe, -0.5, 3.0, 1000, &s) + 1e-12);
        }
        assert!(value <= catoni_linear_upper(-0.5, 3.0, 1000, &s) + 1e-12);
    }

    #[test]
    fn catoni_dominates_ls_on_spec_example() {
        let s = settings(BoundKind::Catoni, 0.1, 0.05, 0.0);
        let (c, _) = catoni_bound(-0.5, 0.0, 100, &s).unwrap();
        assert!(c <= 4.0722790741094669);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn catoni_never_exceeds_ls(
            tau in 0.01f64..1.0,
            delta in 0.001f64..1.0,
            kl in 0.0f64..1000.0,
            n in 10usize..1_000_000,
            frac in 0.0f64..1.0,
        ) {
            let s = settings(BoundKind::Catoni, tau, delta, 0.0);
            let empirical = -frac / tau; // admissible range [-1/tau, 0]
            let ls = ls_bound(empirical, kl, n, &s).unwrap();
            let (c, _) = catoni_bound(empirical, kl, n, &s).unwrap();
            prop_assert!(c <= ls + 1e-9, "catoni {c} > ls {ls}");
        }

        #[test]
        fn bounds_monotone_in_delta(
            tau in 0.05f64..1.0,
            kl in 0.0f64..100.0,
            frac in 0.0f64..1.0,
        ) {
            let empirical = -frac / tau;
            let loose = settings(BoundKind::Ls, tau, 0.5, 0.0);
            let tight = settings(BoundKind::Ls, tau, 0.05, 0.0);
            prop_assert!(
                ls_bound(empirical, kl, 500, &loose).unwrap()
                    <= ls_bound(empirical, kl, 500, &tight).unwrap()
            );
            let (c_loose, _) = catoni_bound(empirical, kl, 500, &loose).unwrap();
            let (c_tight, _) = catoni_bound(empirical, kl, 500, &tight).unwrap();
            prop_assert!(c_loose <= c_tight + 1e-12);
        }
    }

    #[test]
    fn catoni_monotone_in_kl() {
        let s = settings(BoundKind::Catoni, 0.1, 0.05, 0.0);
        let mut last = f64::NEG_INFINITY;
        for kl in [0.0, 0.5, 2.0, 10.0, 100.0] {
            let (v, _) = catoni_bound(-0.4, kl, 2000, &s).unwrap();
            assert!(v > last, "kl={kl}: {v} <= {last}");
            last = v;
        }
    }

    #[test]
    fn lambda_grid_endpoints_and_cases() {
        // xi = 0, tau = 0.1: l = 1, b_xi = 10 -> b = n/5.
        let s = settings(BoundKind::Cbb, 0.1, 0.05, 0.0);
        let n = 10_000;
        let grid = lambda_grid(n, &s).unwrap();
        assert_eq!(grid.values.len(), 100);
        let a = (2.0 * n as f64 * 0.1 * (1.0f64 / 0.05).ln() / 5.0).sqrt();
        let b = n as f64 / 5.0;
        assert!((grid.values[0] - a).abs() < 1e-9);
        assert!((grid.values[99] - b).abs() < 1e-9);
        for w in grid.values.windows(2) {
            assert!(w[1] > w[0]);
        }

        // l_xi corner values.
        assert!((settings(BoundKind::Cbb, 0.1, 0.05, -0.5).l_xi() - 0.25).abs() < 1e-15);
        assert!((settings(BoundKind::Cbb, 0.1, 0.05, -1.0).l_xi() - 1.0).abs() < 1e-15);
        assert!((settings(BoundKind::Cbb, 0.1, 0.05, -1.0).b_xi() - 1.0).abs() < 1e-15);

        // Tiny n triggers the log-spaced fallback, still positive increasing.
        let tiny = lambda_grid(1, &s).unwrap();
        assert_eq!(tiny.values.len(), 100);
        assert!(tiny.values[0] > 0.0);
        for w in tiny.values.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    fn small_instance(seed: u64) -> (LigParams, LoggedDataset, GaussianPrior) {
        let labeled = make_synthetic(50, 3, 4, 7, seed).unwrap();
        let logger = SoftmaxParams::new(
            (0..3)
                .map(|a| (0..4).map(|j| ((a * 4 + j) as f64 * 0.3).sin() * 0.8).collect())
                .collect(),
        )
        .unwrap();
        let data = convert_supervised(&labeled, &logger, 1.0, 1, seed + 1).unwrap();
        let prior = GaussianPrior::from_logger(data.logger_params().unwrap(), 1.0).unwrap();
        let policy = LigParams::new(
            (0..3)
                .map(|a| (0..4).map(|j| ((a + j) as f64 * 0.2).cos() * 0.5).collect())
                .collect(),
            0.9,
        )
        .unwrap();
        (policy, data, prior)
    }

    #[test]
    fn cbb_component_dump_recombines() {
        let (policy, data, prior) = small_instance(7);
        let s = settings(BoundKind::Cbb, 1.0 / 3.0, 0.05, -0.5);
        let mc = McSettings::new(128, 7).unwrap();
        let report = cbb_bound(&policy, &data, &prior, &s, &mc).unwrap();

        // Independent recombination from the dumped components.
        let bracket: f64 = report
            .grid
            .as_ref()
            .unwrap()
            .iter()
            .map(|&lam| {
                cbb_bracket(
                    lam,
                    report.kl,
                    &s,
                    report.n_contexts,
                    report.variance_by_m.as_ref().unwrap(),
                )
                .unwrap()
            })
            .fold(f64::INFINITY, f64::min);
        let direct = report.empirical_term - s.xi * report.bias.unwrap()
            + report.sqrt_term.unwrap()
            + bracket;
        assert!(
            (direct - report.bound_value).abs() < 1e-9,
            "direct {direct} report {}",
            report.bound_value
        );
        // Bracket minimality against the grid endpoints.
        let ends = [
            report.grid.as_ref().unwrap()[0],
            *report.grid.as_ref().unwrap().last().unwrap(),
        ];
        for lam in ends {
            let v = cbb_bracket(lam, report.kl, &s, report.n_contexts, report.variance_by_m.as_ref().unwrap()).unwrap();
            assert!(report.bracket_term.unwrap() <= v + 1e-12);
        }
        // Report invariant: penalties are nonnegative apart from the xi shift.
        assert!(report.bound_value >= report.empirical_term - s.xi.abs() - 1e-12);
    }

    #[test]
    fn cbb_xi_zero_kills_bias_term() {
        let (policy, data, prior) = small_instance(9);
        let s = settings(BoundKind::Cbb, 0.5, 0.05, 0.0);
        let mc = McSettings::new(128, 9).unwrap();
        let report = cbb_bound(&policy, &data, &prior, &s, &mc).unwrap();
        assert_eq!(report.bias_term.unwrap(), 0.0);
        assert!(report.bias.unwrap() >= 0.0);
    }

    #[test]
    fn cbb_uniform_logger_hits_variance_ceiling() {
        let labeled = make_synthetic(60, 4, 3, 3, 4).unwrap();
        let logger = SoftmaxParams::zeros(4, 3);
        let data = convert_supervised(&labeled, &logger, 0.0, 1, 5).unwrap();
        let prior = GaussianPrior::from_logger(data.logger_params().unwrap(), 1.0).unwrap();
        let policy = LigParams::new(vec![vec![0.4, -0.2, 0.1]; 4], 1.0).unwrap();
        let s = settings(BoundKind::Cbb, 0.25, 0.05, -0.5);
        let mc = McSettings::new(128, 6).unwrap();
        let report = cbb_bound(&policy, &data, &prior, &s, &mc).unwrap();
        assert!((report.variance.unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn cbb_multi_matches_iid_at_m_one() {
        let labeled = make_synthetic(40, 3, 2, 5, 6).unwrap();
        let logger = SoftmaxParams::new(vec![vec![0.5, -0.1], vec![0.0, 0.3], vec![-0.2, 0.2]]).unwrap();
        // m = 1 but grouped: force group ids.
        let iid = convert_supervised(&labeled, &logger, 1.0, 1, 7).unwrap();
        let grouped_records: Vec<_> = iid
            .records()
            .iter()
            .enumerate()
            .map(|(i, r)| crate::data::LoggedRecord {
                group_id: Some(i),
                ..r.clone()
            })
            .collect();
        let grouped = LoggedDataset::new(
            grouped_records,
            iid.num_actions(),
            iid.feature_dim(),
            iid.logger_params().cloned(),
        )
        .unwrap();
        let prior = GaussianPrior::from_logger(iid.logger_params().unwrap(), 1.0).unwrap();
        let policy = LigParams::new(vec![vec![0.3, 0.1], vec![-0.2, 0.4], vec![0.0, 0.0]], 0.8).unwrap();
        let s = settings(BoundKind::Cbb, 1.0 / 3.0, 0.05, -0.5);
        let mc = McSettings::new(256, 8).unwrap();
        let a = cbb_bound(&policy, &iid, &prior, &s, &mc).unwrap();
        let b = cbb_bound_multi(&policy, &grouped, &prior, &s, &mc).unwrap();
        assert!((a.bound_value - b.bound_value).abs() < 1e-9);
        // Reparametrization bookkeeping.
        assert!(
            (a.chosen_lambda.unwrap() / a.n as f64 - a.chosen_lambda_scaled.unwrap()).abs()
                < 1e-15
        );
        assert!(cbb_bound_multi(&policy, &iid, &prior, &s, &mc).is_err());
        assert!(cbb_bound(&policy, &grouped, &prior, &s, &mc).is_ok(), "singleton groups are iid");
    }

    #[test]
    fn cbb_single_context_is_finite() {
        let labeled = make_synthetic(1, 3, 2, 8, 9).unwrap();
        let logger = SoftmaxParams::zeros(3, 2);
        let data = convert_supervised(&labeled, &logger, 0.0, 3, 10).unwrap();
        assert_eq!(data.num_contexts(), 1);
        let prior = GaussianPrior::from_logger(data.logger_params().unwrap(), 1.0).unwrap();
        let policy = LigParams::new(vec![vec![0.1, 0.0], vec![0.0, 0.1], vec![0.1, 0.1]], 1.0).unwrap();
        let s = settings(BoundKind::Cbb, 1.0 / 3.0, 0.05, -0.5);
        let mc = McSettings::new(64, 11).unwrap();
        let report = cbb_bound_multi(&policy, &data, &prior, &s, &mc).unwrap();
        assert!(report.bound_value.is_finite());
    }

    #[test]
    fn evaluate_bound_dispatch_and_iid_refusal() {
        let (policy, data, prior) = small_instance(13);
        let mc = McSettings::new(64, 13).unwrap();
        for kind in [BoundKind::Ls, BoundKind::Catoni, BoundKind::Cbb] {
            let s = settings(kind, 1.0 / 3.0, 0.05, -0.5);
            let report = evaluate_bound(&policy, &data, &prior, &s, &mc).unwrap();
            assert!(report.bound_value.is_finite());
            assert_eq!(report.kind, kind);
        }
        // Grouped data with m > 1 is rejected for LS/Catoni.
        let labeled = make_synthetic(10, 3, 4, 7, 14).unwrap();
        let logger = SoftmaxParams::zeros(3, 4);
        let grouped = convert_supervised(&labeled, &logger, 0.0, 2, 15).unwrap();
        let prior2 = GaussianPrior::from_logger(grouped.logger_params().unwrap(), 1.0).unwrap();
        let s = settings(BoundKind::Ls, 1.0 / 3.0, 0.05, 0.0);
        assert!(evaluate_bound(&policy, &grouped, &prior2, &s, &mc).is_err());
    }
}
