//! Adaptive Dormand–Prince 5(4) integrator for small fixed-size systems.

/// Integration failure: the controller pushed the step size below what f64
/// resolution supports for the requested span.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepUnderflow;

const RTOL: f64 = 1e-10;
const ATOL: f64 = 1e-13;

/// Integrate dy/dt = f(y) from 0 to `t_end` with steps capped at `dt_max`.
/// The right-hand side is autonomous, which is all the callers need.
pub fn integrate<const N: usize, F>(
    mut y: [f64; N],
    t_end: f64,
    dt_max: f64,
    f: F,
) -> Result<[f64; N], StepUnderflow>
where
    F: Fn(&[f64; N]) -> [f64; N],
{
    if t_end == 0.0 {
        return Ok(y);
    }
    let mut t = 0.0_f64;
    let mut h = (t_end / 16.0).min(dt_max);
    let h_floor = t_end * 1e-15;
    let mut k1 = f(&y);

    while t < t_end {
        if h < h_floor {
            return Err(StepUnderflow);
        }
        h = h.min(dt_max).min(t_end - t);

        let k2 = f(&stage(&y, h, &[(0.2, &k1)]));
        let k3 = f(&stage(&y, h, &[(3.0 / 40.0, &k1), (9.0 / 40.0, &k2)]));
        let k4 = f(&stage(
            &y,
            h,
            &[(44.0 / 45.0, &k1), (-56.0 / 15.0, &k2), (32.0 / 9.0, &k3)],
        ));
        let k5 = f(&stage(
            &y,
            h,
            &[
                (19372.0 / 6561.0, &k1),
                (-25360.0 / 2187.0, &k2),
                (64448.0 / 6561.0, &k3),
                (-212.0 / 729.0, &k4),
            ],
        ));
        let k6 = f(&stage(
            &y,
            h,
            &[
                (9017.0 / 3168.0, &k1),
                (-355.0 / 33.0, &k2),
                (46732.0 / 5247.0, &k3),
                (49.0 / 176.0, &k4),
                (-5103.0 / 18656.0, &k5),
            ],
        ));
        let y5 = stage(
            &y,
            h,
            &[
                (35.0 / 384.0, &k1),
                (500.0 / 1113.0, &k3),
                (125.0 / 192.0, &k4),
                (-2187.0 / 6784.0, &k5),
                (11.0 / 84.0, &k6),
            ],
        );
        let k7 = f(&y5);

        // embedded 4th-order error estimate
        let mut err_sq = 0.0_f64;
        for i in 0..N {
            let e = h
                * (71.0 / 57600.0 * k1[i] - 71.0 / 16695.0 * k3[i] + 71.0 / 1920.0 * k4[i]
                    - 17253.0 / 339200.0 * k5[i]
                    + 22.0 / 525.0 * k6[i]
                    - 1.0 / 40.0 * k7[i]);
            let scale = ATOL + RTOL * y[i].abs().max(y5[i].abs());
            err_sq += (e / scale) * (e / scale);
        }
        let err = (err_sq / N as f64).sqrt();

        if err <= 1.0 {
            t += h;
            y = y5;
            k1 = k7; // FSAL
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
    }
    Ok(y)
}

fn stage<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let y = integrate([1.0], 3.0, 10.0, |y| [-y[0]]).unwrap();
        assert!((y[0] - (-3.0_f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn harmonic_oscillator() {
        let y = integrate([1.0, 0.0], 20.0 * std::f64::consts::PI, 1.0, |y| [y[1], -y[0]]).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-7, "cos(20π) drifted: {}", y[0]);
        assert!(y[1].abs() < 1e-7);
    }

    #[test]
    fn zero_time_is_identity() {
        let y = integrate([0.3, -0.1], 0.0, 1.0, |y| [y[1], -y[0]]).unwrap();
        assert_eq!(y, [0.3, -0.1]);
    }
}
