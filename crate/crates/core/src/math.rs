//! Scalar numerics shared across the crate: standard-normal functions,
//! stable reductions and deterministic seed derivation.

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

#[inline]
pub fn ln_normal_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Standard normal CDF via the complementary error function.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Fused standard-normal CDF and density sharing one exponential, for the
/// Monte-Carlo hot paths. Abramowitz-Stegun 26.2.17 polynomial, absolute
/// CDF error below 7.5e-8; the negative branch is cancellation-free, so
/// small tail values keep relative accuracy down to density underflow.
/// Quadrature-grade code paths use [`normal_cdf`] instead.
#[inline]
pub fn fast_phi_pdf(x: f64) -> (f64, f64) {
    const B1: f64 = 0.319_381_530;
    const B2: f64 = -0.356_563_782;
    const B3: f64 = 1.781_477_937;
    const B4: f64 = -1.821_255_978;
    const B5: f64 = 1.330_274_429;
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    let pdf = INV_SQRT_2PI * (-0.5 * x * x).exp();
    let t = 1.0 / (1.0 + 0.231_641_9 * x.abs());
    let poly = ((((B5 * t + B4) * t + B3) * t + B2) * t + B1) * t;
    let tail = pdf * poly;
    if x >= 0.0 {
        (1.0 - tail, pdf)
    } else {
        (tail, pdf)
    }
}

/// Log of the standard normal CDF, finite for all inputs.
///
/// `erfc` underflows around `x = -37.5`; below that we switch to the
/// asymptotic tail expansion `ln Phi(x) = ln pdf(x) - ln|x| + ln(1 - x^-2 + 3 x^-4)`.
pub fn ln_normal_cdf(x: f64) -> f64 {
    if x > -37.0 {
        let c = 0.5 * libm::erfc(-x / SQRT_2);
        if c > 0.0 {
            return c.ln();
        }
    }
    let inv2 = 1.0 / (x * x);
    ln_normal_pdf(x) - (-x).ln() + (1.0 - inv2 + 3.0 * inv2 * inv2).max(f64::MIN_POSITIVE).ln()
}

/// Numerically stable log-sum-exp.
pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Deterministic pairwise summation; the reduction tree depends only on the
/// slice length, so parallel producers feeding a `Vec` cannot change the
/// reported totals.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// Mean with the same deterministic reduction.
pub fn pairwise_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    pairwise_sum(values) / values.len() as f64
}

#[inline]
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a stream seed from a base seed and a path of indices. Used so
/// that per-record random draws do not depend on evaluation order.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut s = splitmix64(base ^ 0xD1B5_4A32_D192_ED03);
    for &p in path {
        s = splitmix64(s ^ splitmix64(p.wrapping_add(0x2545_F491_4F6C_DD1D)));
    }
    s
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_reference_points() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.0) - 0.841344746068542948).abs() < 1e-14);
        assert!((normal_cdf(-1.0) - 0.158655253931457051).abs() < 1e-14);
        assert!((normal_cdf(3.0) - 0.998650101968369905).abs() < 1e-14);
    }

    #[test]
    fn ln_cdf_matches_cdf_in_bulk_and_is_finite_in_tail() {
        for &x in &[-30.0, -8.0, -3.0, -1.0, 0.0, 2.0, 10.0] {
            let direct = normal_cdf(x).ln();
            assert!(
                (ln_normal_cdf(x) - direct).abs() < 1e-10 * direct.abs().max(1.0),
                "x={x}"
            );
        }
        let deep = ln_normal_cdf(-60.0);
        assert!(deep.is_finite());
        // ln Phi(-60) ~ -1805.9; sanity check the leading term.
        assert!((deep - (-0.5 * 3600.0 - LN_SQRT_2PI - 60f64.ln())).abs() < 1e-3);
    }

    #[test]
    fn logsumexp_shifts() {
        let v = [1000.0, 1000.0];
        assert!((logsumexp(&v) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn pairwise_sum_matches_naive_on_small_inputs() {
        let v: Vec<f64> = (0..17).map(|i| (i as f64) * 0.37 - 2.0).collect();
        let naive: f64 = v.iter().sum();
        assert!((pairwise_sum(&v) - naive).abs() < 1e-12);
    }

    #[test]
    fn derive_seed_is_order_sensitive_and_deterministic() {
        assert_eq!(derive_seed(7, &[1, 2]), derive_seed(7, &[1, 2]));
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
        assert_ne!(derive_seed(7, &[0]), derive_seed(8, &[0]));
    }
}
