//! Damped least-squares engine (Levenberg–Marquardt) with box bounds,
//! forward-difference Jacobians, covariance from JᵀJ, and profile-likelihood
//! one-sided intervals for parameters that finish pinned at a bound —
//! the "0 +ε/−0" style of reporting used for correlation dips.

mod convolve;
mod models;
mod special;

pub use convolve::{gaussian_convolve, ConvGrid};
pub use models::{
    fit_g2_exponential, fit_g2_rabi, fit_lifetime, fit_q_vs_diameter, GammaSpec, QPoint, RiseMode,
};
pub use special::{erfcx, exp_gauss};

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("rank-deficient normal equations: JᵀJ is singular")]
    RankDeficient,
    #[error("no convergence after {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("ill-posed fit: {0}")]
    IllPosed(String),
}

/// One free parameter of a fit: name, starting value, box bounds and a
/// characteristic scale used for finite-difference steps. `min == max`
/// fixes the parameter.
#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: String,
    pub init: f64,
    pub min: f64,
    pub max: f64,
    pub scale: f64,
}

impl ParamSpec {
    pub fn free(name: &str, init: f64) -> Self {
        ParamSpec {
            name: name.into(),
            init,
            min: f64::NEG_INFINITY,
            max: f64::INFINITY,
            scale: if init != 0.0 { init.abs() } else { 1.0 },
        }
    }

    pub fn bounded(name: &str, init: f64, min: f64, max: f64) -> Self {
        ParamSpec {
            name: name.into(),
            init,
            min,
            max,
            scale: if init != 0.0 { init.abs() } else { 1.0 },
        }
    }

    pub fn fixed(name: &str, value: f64) -> Self {
        ParamSpec {
            name: name.into(),
            init: value,
            min: value,
            max: value,
            scale: if value != 0.0 { value.abs() } else { 1.0 },
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    fn is_fixed(&self) -> bool {
        self.min == self.max
    }
}

/// Asymmetric uncertainty for a parameter pinned at a bound: the allowed
/// excursion below and above the fitted value at Δχ² = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneSided {
    pub below: f64,
    pub above: f64,
}

/// Fit output: named parameter estimates, 1σ uncertainties, covariance
/// (row-major), reduced χ², and profile-scan one-sided intervals for
/// bound-pinned parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub sigma: Vec<f64>,
    pub one_sided: Vec<Option<OneSided>>,
    /// Row-major n×n covariance; rows/columns of fixed parameters are zero.
    pub covariance: Vec<f64>,
    pub chi2: f64,
    pub chi2_reduced: f64,
    pub n_iterations: usize,
    pub n_points: usize,
}

impl FitResult {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn value(&self, name: &str) -> f64 {
        self.values[self.index_of(name).expect("unknown parameter")]
    }

    pub fn sigma_of(&self, name: &str) -> f64 {
        self.sigma[self.index_of(name).expect("unknown parameter")]
    }

    pub fn one_sided_of(&self, name: &str) -> Option<OneSided> {
        self.one_sided[self.index_of(name).expect("unknown parameter")]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("FitResult serializes")
    }
}

const MAX_ITER: usize = 500;
const STEP_TOL: f64 = 1e-10;
const GRAD_TOL: f64 = 1e-12;
const FTOL: f64 = 1e-12;
const LAMBDA_MAX: f64 = 1e14;

/// Minimize the sum of squared residuals over the parameter box.
///
/// `residuals` fills its output slice (length `n_resid`) for a parameter
/// vector; residuals are expected to be pre-weighted by the caller.
pub fn least_squares<F>(
    residuals: F,
    n_resid: usize,
    specs: &[ParamSpec],
) -> Result<FitResult, FitError>
where
    F: Fn(&[f64], &mut [f64]),
{
    let mut res = fit_core(&residuals, n_resid, specs)?;
    attach_one_sided(&residuals, n_resid, specs, &mut res)?;
    Ok(res)
}

fn eval_chi2<F: Fn(&[f64], &mut [f64])>(f: &F, p: &[f64], buf: &mut [f64]) -> f64 {
    f(p, buf);
    buf.iter().map(|r| r * r).sum()
}

/// Forward-difference Jacobian over the free parameters (column-major by
/// free index). Steps respect the upper bound by flipping direction.
pub fn forward_jacobian<F: Fn(&[f64], &mut [f64])>(
    f: &F,
    p: &[f64],
    specs: &[ParamSpec],
    n_resid: usize,
) -> (Vec<usize>, DMatrix<f64>) {
    let free: Vec<usize> = (0..specs.len()).filter(|&i| !specs[i].is_fixed()).collect();
    let mut r0 = vec![0.0; n_resid];
    f(p, &mut r0);
    let mut jac = DMatrix::zeros(n_resid, free.len());
    let mut pt = p.to_vec();
    let mut rt = vec![0.0; n_resid];
    for (col, &j) in free.iter().enumerate() {
        let mut h = f64::EPSILON.sqrt() * p[j].abs().max(specs[j].scale);
        if p[j] + h > specs[j].max {
            h = -h;
        }
        pt[j] = p[j] + h;
        let h_actual = pt[j] - p[j]; // exact representable step
        f(&pt, &mut rt);
        for i in 0..n_resid {
            jac[(i, col)] = (rt[i] - r0[i]) / h_actual;
        }
        pt[j] = p[j];
    }
    (free, jac)
}

fn fit_core<F: Fn(&[f64], &mut [f64])>(
    f: &F,
    n_resid: usize,
    specs: &[ParamSpec],
) -> Result<FitResult, FitError> {
    if n_resid == 0 {
        return Err(FitError::InvalidInput("no residuals".into()));
    }
    for s in specs {
        if !s.init.is_finite() {
            return Err(FitError::InvalidInput(format!("{}: non-finite init", s.name)));
        }
        if s.init < s.min || s.init > s.max {
            return Err(FitError::InvalidInput(format!(
                "{}: init {} outside [{}, {}]",
                s.name, s.init, s.min, s.max
            )));
        }
    }

    let n_par = specs.len();
    let free: Vec<usize> = (0..n_par).filter(|&i| !specs[i].is_fixed()).collect();
    let mut p: Vec<f64> = specs.iter().map(|s| s.init).collect();
    let mut buf = vec![0.0; n_resid];
    let mut chi2 = eval_chi2(f, &p, &mut buf);
    let mut n_iterations = 0usize;

    if !free.is_empty() {
        let mut lambda = 1e-3;
        let mut converged = false;
        while n_iterations < MAX_ITER {
            n_iterations += 1;
            let (_, jac) = forward_jacobian(f, &p, specs, n_resid);
            let mut r = DVector::zeros(n_resid);
            f(&p, buf.as_mut_slice());
            for i in 0..n_resid {
                r[i] = buf[i];
            }
            let g = jac.transpose() * &r;

            // parameters sitting on a bound with the gradient pushing
            // outward are pegged: they leave the active set until the
            // gradient turns inward
            let active: Vec<usize> = free
                .iter()
                .enumerate()
                .filter(|&(col, &j)| {
                    !((p[j] == specs[j].min && g[col] > 0.0)
                        || (p[j] == specs[j].max && g[col] < 0.0))
                })
                .map(|(col, _)| col)
                .collect();
            if active.is_empty() {
                converged = true; // KKT: every free parameter pegged outward
                break;
            }
            let g_act = DVector::from_iterator(active.len(), active.iter().map(|&c| g[c]));
            if g_act.amax() < GRAD_TOL {
                converged = true;
                break;
            }
            let jac_act = jac.select_columns(active.iter());
            let jtj = jac_act.transpose() * &jac_act;

            // inner damping loop
            let mut accepted = false;
            while lambda <= LAMBDA_MAX {
                let mut a = jtj.clone();
                for i in 0..active.len() {
                    let d = jtj[(i, i)];
                    a[(i, i)] = d + lambda * d.max(1e-30);
                }
                if let Some(ch) = Cholesky::new(a) {
                    let delta = ch.solve(&(-&g_act));
                    let mut pt = p.clone();
                    for (row, &col) in active.iter().enumerate() {
                        let j = free[col];
                        pt[j] = (p[j] + delta[row]).clamp(specs[j].min, specs[j].max);
                    }
                    let chi2_t = eval_chi2(f, &pt, &mut buf);
                    if chi2_t <= chi2 {
                        // relative step over the accepted move
                        let rel_step = free
                            .iter()
                            .map(|&j| (pt[j] - p[j]).abs() / p[j].abs().max(specs[j].scale))
                            .fold(0.0_f64, f64::max);
                        let chi2_drop = chi2 - chi2_t;
                        p = pt;
                        chi2 = chi2_t;
                        lambda = (lambda / 3.0).max(1e-12);
                        accepted = true;
                        if rel_step < STEP_TOL || chi2_drop <= FTOL * chi2.max(1e-300) {
                            converged = true;
                        }
                        break;
                    }
                }
                lambda *= 10.0;
            }
            if !accepted {
                // the trust region collapsed: no representable step improves χ²
                converged = true;
            }
            if converged {
                break;
            }
        }
        if !converged {
            return Err(FitError::NonConvergence {
                iterations: n_iterations,
            });
        }
        // snap parameters that converged asymptotically onto a bound; the
        // move is inside the convergence tolerance and makes pinning exact
        let mut snapped = false;
        for &j in &free {
            let tol = 1e-6 * specs[j].scale.max(p[j].abs());
            if specs[j].min.is_finite() && (p[j] - specs[j].min).abs() <= tol && p[j] != specs[j].min {
                p[j] = specs[j].min;
                snapped = true;
            } else if specs[j].max.is_finite()
                && (specs[j].max - p[j]).abs() <= tol
                && p[j] != specs[j].max
            {
                p[j] = specs[j].max;
                snapped = true;
            }
        }
        if snapped {
            chi2 = eval_chi2(f, &p, &mut buf);
        }
    }

    // covariance = chi2_reduced · (JᵀJ)⁻¹ over the free parameters
    let dof = n_resid.saturating_sub(free.len()).max(1);
    let chi2_reduced = chi2 / dof as f64;
    let mut covariance = vec![0.0; n_par * n_par];
    let mut sigma = vec![0.0; n_par];
    if !free.is_empty() {
        let (_, jac) = forward_jacobian(f, &p, specs, n_resid);
        let jtj = jac.transpose() * &jac;
        let inv = Cholesky::new(jtj.clone())
            .map(|ch| ch.inverse())
            .or_else(|| jtj.try_inverse())
            .ok_or(FitError::RankDeficient)?;
        for (ci, &i) in free.iter().enumerate() {
            for (cj, &j) in free.iter().enumerate() {
                covariance[i * n_par + j] = chi2_reduced * inv[(ci, cj)];
            }
            let var = covariance[i * n_par + i];
            if var < 0.0 || !var.is_finite() {
                return Err(FitError::RankDeficient);
            }
            sigma[i] = var.sqrt();
        }
    }

    Ok(FitResult {
        names: specs.iter().map(|s| s.name.clone()).collect(),
        values: p,
        sigma,
        one_sided: vec![None; n_par],
        covariance,
        chi2,
        chi2_reduced,
        n_iterations,
        n_points: n_resid,
    })
}

/// Profile-likelihood scan for parameters that finished at a box bound:
/// walk the parameter into the box, re-minimizing the others, until
/// χ² − χ²_min = 1.
fn attach_one_sided<F: Fn(&[f64], &mut [f64])>(
    f: &F,
    n_resid: usize,
    specs: &[ParamSpec],
    res: &mut FitResult,
) -> Result<(), FitError> {
    let chi2_min = res.chi2;
    for j in 0..specs.len() {
        if specs[j].is_fixed() {
            continue;
        }
        let v = res.values[j];
        let tol = 1e-9 * specs[j].scale.max(v.abs());
        let at_min = (v - specs[j].min).abs() <= tol && specs[j].min.is_finite();
        let at_max = (specs[j].max - v).abs() <= tol && specs[j].max.is_finite();
        if !(at_min ^ at_max) {
            continue;
        }
        let dir = if at_min { 1.0 } else { -1.0 };
        let limit = if at_min {
            specs[j].max - v
        } else {
            v - specs[j].min
        };

        let profile = |excess: f64| -> Result<f64, FitError> {
            let mut scan: Vec<ParamSpec> = specs.to_vec();
            for (k, s) in scan.iter_mut().enumerate() {
                s.init = res.values[k]; // warm start
            }
            scan[j] = ParamSpec::fixed(&specs[j].name, v + dir * excess);
            Ok(fit_core(f, n_resid, &scan)?.chi2)
        };

        // bracket Δχ² = 1 geometrically, then bisect
        let mut step = res.sigma[j];
        if !(step > 0.0) || !step.is_finite() {
            step = 0.01 * specs[j].scale;
        }
        let mut lo = 0.0_f64;
        let mut hi = step.min(limit);
        let mut hit_limit = false;
        for _ in 0..60 {
            if profile(hi)? - chi2_min >= 1.0 {
                break;
            }
            lo = hi;
            if hi >= limit {
                hit_limit = true;
                break;
            }
            hi = (hi * 2.0).min(limit);
        }
        let excess = if hit_limit {
            limit
        } else {
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                if profile(mid)? - chi2_min >= 1.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if (hi - lo) <= 1e-3 * hi.max(1e-300) {
                    break;
                }
            }
            0.5 * (lo + hi)
        };
        res.one_sided[j] = Some(if at_min {
            OneSided {
                below: 0.0,
                above: excess,
            }
        } else {
            OneSided {
                below: excess,
                above: 0.0,
            }
        });
    }
    Ok(())
}

/// Gaussian instrument response (detector timing jitter), FWHM in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstrumentResponse {
    pub fwhm: f64,
}

impl InstrumentResponse {
    pub fn sigma(&self) -> f64 {
        self.fwhm / (8.0 * 2.0_f64.ln()).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_model_exact_recovery() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.25 * x).collect();
        let r = least_squares(
            |p, out| {
                for (i, x) in xs.iter().enumerate() {
                    out[i] = p[0] * x - ys[i];
                }
            },
            xs.len(),
            &[ParamSpec::free("a", 0.7)],
        )
        .unwrap();
        assert!((r.value("a") - 3.25).abs() < 1e-12);
        assert!(r.chi2 < 1e-20);
    }

    #[test]
    fn quadratic_bowl_from_random_starts() {
        for init in [-7.0, -0.3, 2.0, 55.0] {
            let r = least_squares(
                |p, out| {
                    out[0] = p[0] - 2.0;
                    out[1] = 2.0 * (p[1] + 1.5);
                },
                2,
                &[ParamSpec::free("x", init), ParamSpec::free("y", -init)],
            )
            .unwrap();
            assert!((r.value("x") - 2.0).abs() < 1e-9);
            assert!((r.value("y") + 1.5).abs() < 1e-9);
        }
    }

    #[test]
    fn fixed_parameters_do_not_move() {
        let r = least_squares(
            |p, out| {
                out[0] = p[0] + p[1] - 3.0;
            },
            1,
            &[ParamSpec::fixed("a", 1.0), ParamSpec::free("b", 0.0)],
        )
        .unwrap();
        assert_eq!(r.value("a"), 1.0);
        assert!((r.value("b") - 2.0).abs() < 1e-10);
        assert_eq!(r.sigma_of("a"), 0.0);
    }

    #[test]
    fn bound_pinned_parameter_gets_one_sided_interval() {
        // y_i = 0 measured with σ = 1; model y = a ≥ 0 → â pins at 0 and the
        // Δχ²=1 scan gives ε = 1/√N
        let n = 25usize;
        let r = least_squares(
            |p, out| {
                for o in out.iter_mut() {
                    *o = p[0];
                }
            },
            n,
            &[ParamSpec::bounded("a", 0.2, 0.0, f64::INFINITY)],
        )
        .unwrap();
        assert_eq!(r.value("a"), 0.0);
        let os = r.one_sided_of("a").expect("pinned at zero");
        assert_eq!(os.below, 0.0);
        let expected = 1.0 / (n as f64).sqrt();
        assert!(
            (os.above - expected).abs() < 0.01 * expected,
            "upper excess {} vs {}",
            os.above,
            expected
        );
    }

    #[test]
    fn init_outside_bounds_rejected() {
        let r = least_squares(
            |p, out| out[0] = p[0],
            1,
            &[ParamSpec::bounded("a", 2.0, 0.0, 1.0)],
        );
        assert!(matches!(r, Err(FitError::InvalidInput(_))));
    }

    #[test]
    fn covariance_matches_analytic_linear_case() {
        // weighted linear fit y = a x with σ_i = 1: var(â) = red_chi2 / Σx²
        let xs: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + if *x as i64 % 2 == 0 { 0.5 } else { -0.5 }).collect();
        let r = least_squares(
            |p, out| {
                for (i, x) in xs.iter().enumerate() {
                    out[i] = p[0] * x - ys[i];
                }
            },
            xs.len(),
            &[ParamSpec::free("a", 1.0)],
        )
        .unwrap();
        let sx2: f64 = xs.iter().map(|x| x * x).sum();
        let expected = (r.chi2_reduced / sx2).sqrt();
        // forward differences carry ~√ε relative noise into J
        assert!((r.sigma_of("a") - expected).abs() < 1e-6 * expected);
    }
}
