//! Scaled complementary error function and the exponential ⊗ Gaussian
//! building block used by the lifetime and g² fit models.

/// erfcx(x) = exp(x²)·erfc(x) for x ≥ 0, evaluated without overflow.
pub fn erfcx(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x <= 8.0 {
        // exp(x²) ≤ e^64 and erfc(x) ≥ 1e-29: the direct product is safe
        (x * x).exp() * libm::erfc(x)
    } else {
        // asymptotic series: 1/(x√π) Σ (−1)^k (2k−1)!! / (2x²)^k
        let inv2x2 = 1.0 / (2.0 * x * x);
        let mut term = 1.0_f64;
        let mut sum = 1.0_f64;
        for k in 1..30u32 {
            term *= -((2 * k - 1) as f64) * inv2x2;
            sum += term;
            if term.abs() < 1e-17 {
                break;
            }
        }
        sum / (x * std::f64::consts::PI.sqrt())
    }
}

/// One-sided exponential decay convolved with a normalized Gaussian:
///
/// ```text
/// (θ(s−t0)·e^(−(s−t0)/τ)) ⊗ N(0, σ²)  evaluated at t
/// = ½ · e^(σ²/2τ² − Δt/τ) · erfc((σ/τ − Δt/σ)/√2),   Δt = t − t0
/// ```
///
/// computed through erfcx where the direct exponential would overflow.
pub fn exp_gauss(t: f64, t0: f64, tau: f64, sigma: f64) -> f64 {
    debug_assert!(tau > 0.0 && sigma >= 0.0);
    let dt = t - t0;
    if sigma == 0.0 {
        return if dt <= 0.0 { 0.0 } else { (-dt / tau).exp() };
    }
    let z = std::f64::consts::FRAC_1_SQRT_2 * (sigma / tau - dt / sigma);
    if z >= 0.0 {
        0.5 * erfcx(z) * (-0.5 * (dt / sigma) * (dt / sigma)).exp()
    } else {
        // z < 0 implies Δt > σ²/τ, so the exponent is negative
        let expo = 0.5 * (sigma / tau) * (sigma / tau) - dt / tau;
        0.5 * expo.exp() * libm::erfc(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erfcx_small_matches_direct() {
        for x in [0.0_f64, 0.3, 1.0, 3.0, 7.9] {
            let direct = (x * x).exp() * libm::erfc(x);
            assert!((erfcx(x) - direct).abs() < 1e-14 * direct.max(1.0));
        }
    }

    #[test]
    fn erfcx_continuous_at_branch() {
        let lo = erfcx(8.0 - 1e-13);
        let hi = erfcx(8.0 + 1e-13);
        assert!((lo - hi).abs() < 1e-13, "{lo} vs {hi}");
    }

    #[test]
    fn erfcx_large_argument() {
        // erfcx(x) → 1/(x√π)
        let x = 1e6;
        let approx = 1.0 / (x * std::f64::consts::PI.sqrt());
        assert!((erfcx(x) - approx).abs() / approx < 1e-10);
    }

    #[test]
    fn exp_gauss_reduces_to_exponential() {
        assert_eq!(exp_gauss(-1.0, 0.0, 1.0, 0.0), 0.0);
        let v = exp_gauss(2.0, 0.0, 1.0, 0.0);
        assert!((v - (-2.0_f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn exp_gauss_quadrature_check() {
        // direct numerical integration of the convolution, starting exactly
        // at the step so the integrand is smooth over the whole range
        let (t0, tau, sigma) = (1.0e-9_f64, 0.4e-9_f64, 0.123e-9_f64);
        for &t in &[0.6e-9_f64, 1.0e-9, 1.4e-9, 3.0e-9] {
            let mut acc = 0.0;
            let n = 200_000;
            let s_lo = t0;
            let s_hi = (t + 10.0 * sigma).max(t0 + 50.0 * tau);
            let h = (s_hi - s_lo) / n as f64;
            for i in 0..=n {
                let s = s_lo + i as f64 * h;
                let f = (-(s - t0) / tau).exp();
                let g = (-(t - s) * (t - s) / (2.0 * sigma * sigma)).exp()
                    / (sigma * (2.0 * std::f64::consts::PI).sqrt());
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                acc += w * f * g * h;
            }
            let closed = exp_gauss(t, t0, tau, sigma);
            assert!(
                (closed - acc).abs() < 1e-5 * acc.max(1e-6),
                "t={t}: closed {closed} vs quadrature {acc}"
            );
        }
    }
}
