//! Deterministic dynamics of a driven two-level emitter: optical Bloch
//! equations, steady state, second-order correlation g²(τ) via the quantum
//! regression route and via the closed resonance-fluorescence form, and the
//! pulsed decay shape used for lifetime analysis.
//!
//! Rate conventions: every rate in [`EmitterParams`] is angular (rad/s).
//! A drive quoted as "1 GHz" in lab units enters as 2π·1e9 rad/s; the config
//! layer performs that conversion. Decay rates are 1/lifetime regardless of
//! convention.

mod ode;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("step size underflow during integration")]
    StepUnderflow,
    #[error("correlation undefined: steady-state population is zero (no drive)")]
    UndefinedCorrelation,
    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),
    #[error("bad grid: {0}")]
    BadGrid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Two-level emitter rates. All angular (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmitterParams {
    /// Radiative decay rate of the reference (uncoupled) emitter.
    pub gamma_rad: f64,
    /// Pure dephasing rate.
    pub gamma_deph: f64,
    /// Rabi frequency of the drive.
    pub rabi: f64,
    /// Laser detuning from the transition.
    pub detuning: f64,
    /// Cavity enhancement multiplier applied to `gamma_rad`; 1 means the
    /// bulk/waveguide reference.
    pub purcell: f64,
}

impl EmitterParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.gamma_rad >= 0.0 && self.gamma_deph >= 0.0 && self.rabi >= 0.0) {
            return Err(DynamicsError::InvalidParams(
                "rates must be non-negative".into(),
            ));
        }
        if !(self.purcell > 0.0) {
            return Err(DynamicsError::InvalidParams("purcell must be > 0".into()));
        }
        if !self.detuning.is_finite() {
            return Err(DynamicsError::InvalidParams("detuning must be finite".into()));
        }
        Ok(())
    }

    /// Total population decay rate Γ_eff = purcell · gamma_rad.
    pub fn gamma_eff(&self) -> f64 {
        self.purcell * self.gamma_rad
    }

    /// Coherence decay rate Γ_eff/2 + gamma_deph.
    pub fn coherence_rate(&self) -> f64 {
        0.5 * self.gamma_eff() + self.gamma_deph
    }

    /// Closed-form steady state of the Bloch equations.
    pub fn steady_state(&self) -> BlochState {
        let omega = self.rabi;
        if omega == 0.0 {
            return BlochState::GROUND;
        }
        let gamma = self.gamma_eff();
        let g2c = self.coherence_rate();
        if g2c == 0.0 {
            // undamped drive: populations equalize, coherence averages out
            return BlochState {
                excited: 0.5,
                coh_re: 0.0,
                coh_im: 0.0,
            };
        }
        let pump = omega * omega * g2c / (2.0 * (g2c * g2c + self.detuning * self.detuning));
        let p = pump / (gamma + 2.0 * pump);
        let coh_im = 0.5 * omega * (1.0 - 2.0 * p) * g2c
            / (g2c * g2c + self.detuning * self.detuning);
        let coh_re = self.detuning / g2c * coh_im;
        BlochState {
            excited: p,
            coh_re,
            coh_im,
        }
    }

    /// Steady-state excited population.
    pub fn steady_population(&self) -> f64 {
        self.steady_state().excited
    }
}

/// Bloch vector in density-matrix components: excited population and the
/// ground–excited coherence ρ_ge split into real and imaginary parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochState {
    pub excited: f64,
    pub coh_re: f64,
    pub coh_im: f64,
}

impl BlochState {
    pub const GROUND: BlochState = BlochState {
        excited: 0.0,
        coh_re: 0.0,
        coh_im: 0.0,
    };

    /// |ρ_ge|² − ρ_ee(1 − ρ_ee); physical states keep this ≤ 0.
    pub fn physicality_excess(&self) -> f64 {
        self.coh_re * self.coh_re + self.coh_im * self.coh_im
            - self.excited * (1.0 - self.excited)
    }

    fn to_array(self) -> [f64; 3] {
        [self.excited, self.coh_re, self.coh_im]
    }

    fn from_array(a: [f64; 3]) -> Self {
        BlochState {
            excited: a[0],
            coh_re: a[1],
            coh_im: a[2],
        }
    }
}

/// Time derivative of the Bloch vector for a rotating-frame drive:
///
/// ```text
/// dp/dt  =  Ω·Im(ρ_ge) − Γ_eff·p
/// dρ_ge/dt = (−iΔ − Γ₂)ρ_ge − i(Ω/2)(2p − 1),   Γ₂ = Γ_eff/2 + γ_deph
/// ```
pub fn bloch_rhs(state: &BlochState, p: &EmitterParams) -> BlochState {
    let gamma = p.gamma_eff();
    let g2c = p.coherence_rate();
    let omega = p.rabi;
    let delta = p.detuning;
    BlochState {
        excited: omega * state.coh_im - gamma * state.excited,
        coh_re: delta * state.coh_im - g2c * state.coh_re,
        coh_im: -delta * state.coh_re - 0.5 * omega * (2.0 * state.excited - 1.0)
            - g2c * state.coh_im,
    }
}

/// Evolve a Bloch state for time `t` (adaptive 5th/4th order, relative
/// tolerance 1e-10, steps capped at `dt_max`).
pub fn evolve_bloch(
    state: &BlochState,
    p: &EmitterParams,
    t: f64,
    dt_max: f64,
) -> Result<BlochState, DynamicsError> {
    p.validate()?;
    if !(t >= 0.0) {
        return Err(DynamicsError::InvalidParams("t must be >= 0".into()));
    }
    if !(dt_max > 0.0) {
        return Err(DynamicsError::InvalidParams("dt_max must be > 0".into()));
    }
    let y = ode::integrate(state.to_array(), t, dt_max, |y| {
        bloch_rhs(&BlochState::from_array(*y), p).to_array()
    })
    .map_err(|_| DynamicsError::StepUnderflow)?;
    Ok(BlochState::from_array(y))
}

/// Second-order correlation curve on a grid symmetric about τ = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Curve {
    /// Delay grid in seconds, uniform and symmetric about zero.
    pub tau: Vec<f64>,
    pub values: Vec<f64>,
    /// Per-bin standard errors when the curve came from counted data.
    pub errors: Option<Vec<f64>>,
}

impl G2Curve {
    /// Grid spacing in seconds.
    pub fn spacing(&self) -> f64 {
        if self.tau.len() < 2 {
            return 0.0;
        }
        (self.tau[self.tau.len() - 1] - self.tau[0]) / (self.tau.len() - 1) as f64
    }

    /// Rescale so that the mean over the outer `wing_fraction` of bins on
    /// each side is exactly 1. Count-normalized curves from a blinking
    /// emitter sit on a flat pedestal above 1 inside a nanosecond-scale
    /// window; this removes the pedestal before fitting, and is a no-op
    /// within noise for non-blinking data.
    pub fn renormalize_wings(&self, wing_fraction: f64) -> G2Curve {
        let n = self.tau.len();
        let k = ((n as f64 * wing_fraction * 0.5).round() as usize).clamp(1, n / 2);
        let wing_sum: f64 = self.values[..k].iter().chain(self.values[n - k..].iter()).sum();
        let wing = wing_sum / (2 * k) as f64;
        if !(wing > 0.0) {
            return self.clone();
        }
        G2Curve {
            tau: self.tau.clone(),
            values: self.values.iter().map(|v| v / wing).collect(),
            errors: self
                .errors
                .as_ref()
                .map(|e| e.iter().map(|x| x / wing).collect()),
        }
    }

    /// Two-column CSV: tau_s,value (plus an error column when present).
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        if self.errors.is_some() {
            writeln!(w, "tau_s,value,error")?;
        } else {
            writeln!(w, "tau_s,value")?;
        }
        for (i, (t, v)) in self.tau.iter().zip(&self.values).enumerate() {
            match &self.errors {
                Some(e) => writeln!(w, "{:e},{:e},{:e}", t, v, e[i])?,
                None => writeln!(w, "{:e},{:e}", t, v)?,
            }
        }
        Ok(())
    }
}

/// g²(τ) by the quantum regression route: re-prepare the emitter in the
/// ground state at τ = 0, propagate the Bloch equations, and normalize the
/// excited population by its steady-state value. The result is mirrored to
/// negative delays.
///
/// `tau_half` is the non-negative half of the grid: uniform, starting at 0.
pub fn g2_regression(p: &EmitterParams, tau_half: &[f64]) -> Result<G2Curve, DynamicsError> {
    p.validate()?;
    if tau_half.is_empty() || tau_half[0] != 0.0 {
        return Err(DynamicsError::BadGrid("grid must start at τ = 0".into()));
    }
    if tau_half.len() >= 2 {
        let dt = tau_half[1] - tau_half[0];
        if !(dt > 0.0) {
            return Err(DynamicsError::BadGrid("grid must be ascending".into()));
        }
        for w in tau_half.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt {
                return Err(DynamicsError::BadGrid("grid must be uniform".into()));
            }
        }
    }
    let pss = p.steady_population();
    if pss <= 0.0 {
        return Err(DynamicsError::UndefinedCorrelation);
    }

    let mut half = Vec::with_capacity(tau_half.len());
    half.push(0.0); // ground-state preparation: exactly zero at τ = 0
    let mut state = BlochState::GROUND;
    for w in tau_half.windows(2) {
        let dt = w[1] - w[0];
        state = evolve_bloch(&state, p, dt, dt)?;
        half.push((state.excited / pss).max(0.0));
    }

    let n = tau_half.len();
    let mut tau = Vec::with_capacity(2 * n - 1);
    let mut values = Vec::with_capacity(2 * n - 1);
    for i in (1..n).rev() {
        tau.push(-tau_half[i]);
        values.push(half[i]);
    }
    tau.extend_from_slice(tau_half);
    values.extend_from_slice(&half);
    Ok(G2Curve {
        tau,
        values,
        errors: None,
    })
}

/// Closed-form g²(τ) for resonant drive without pure dephasing:
///
/// ```text
/// g²(τ) = 1 − e^(−3Γτ/4) [cos(μτ) + (3Γ/4μ) sin(μτ)],  μ = sqrt(Ω² − (Γ/4)²)
/// ```
///
/// continued with hyperbolic functions when Ω < Γ/4. Refuses detuned or
/// dephased parameters rather than approximating.
pub fn g2_closed_form(p: &EmitterParams, tau: f64) -> Result<f64, DynamicsError> {
    p.validate()?;
    if p.detuning != 0.0 {
        return Err(DynamicsError::UnsupportedRegime(
            "closed form requires zero detuning".into(),
        ));
    }
    if p.gamma_deph != 0.0 {
        return Err(DynamicsError::UnsupportedRegime(
            "closed form requires zero pure dephasing".into(),
        ));
    }
    Ok(g2_closed_form_rates(p.gamma_eff(), p.rabi, tau))
}

/// The same closed form expressed directly in rates: total decay `gamma`
/// (rad/s) and drive `omega` (rad/s). Used as the fit model for the
/// power-series correlation measurements.
pub fn g2_closed_form_rates(gamma: f64, omega: f64, tau: f64) -> f64 {
    let t = tau.abs();
    let q = omega * omega - (gamma / 4.0) * (gamma / 4.0);
    let scale = omega * omega + (gamma / 4.0) * (gamma / 4.0);
    let env = 0.75 * gamma;
    if q.abs() <= 1e-12 * scale {
        // critically damped limit μ → 0
        1.0 - (-env * t).exp() * (1.0 + env * t)
    } else if q > 0.0 {
        let mu = q.sqrt();
        1.0 - (-env * t).exp() * ((mu * t).cos() + (env / mu) * (mu * t).sin())
    } else {
        // overdamped: evaluate as a sum of two decaying exponentials so the
        // cosh never overflows
        let nu = (-q).sqrt();
        let c = env / nu;
        1.0 - 0.5 * ((1.0 + c) * ((nu - env) * t).exp() + (1.0 - c) * ((-nu - env) * t).exp())
    }
}

/// Intensity of a pulsed decay with a finite rise:
/// A·(1 − e^(−(t−t0)/rise))·e^(−(t−t0)/decay) for t > t0, else 0.
/// rise = 0 degenerates to a single exponential.
pub fn pulsed_decay_model(t: f64, amplitude: f64, t0: f64, rise_time: f64, decay_time: f64) -> f64 {
    let dt = t - t0;
    if dt <= 0.0 {
        return 0.0;
    }
    let decay = (-dt / decay_time).exp();
    if rise_time == 0.0 {
        amplitude * decay
    } else {
        amplitude * (1.0 - (-dt / rise_time).exp()) * decay
    }
}

/// Histogram of arrival times folded on the excitation period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    /// Bin centers (s).
    pub t: Vec<f64>,
    /// Counts per bin.
    pub counts: Vec<f64>,
    /// Rise time (s) when known from a generator or a fit.
    pub rise_time: Option<f64>,
    /// Decay time (s) when known from a generator or a fit.
    pub decay_time: Option<f64>,
}

impl DecayCurve {
    /// Two-column CSV: t_s,counts.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t_s,counts")?;
        for (t, c) in self.t.iter().zip(&self.counts) {
            writeln!(w, "{:e},{:e}", t, c)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TAU: f64 = std::f64::consts::TAU;

    fn params(rabi_ghz: f64, gamma_ghz: f64) -> EmitterParams {
        EmitterParams {
            gamma_rad: TAU * gamma_ghz * 1e9,
            gamma_deph: 0.0,
            rabi: TAU * rabi_ghz * 1e9,
            detuning: 0.0,
            purcell: 1.0,
        }
    }

    #[test]
    fn undriven_excited_state_decays_exponentially() {
        let p = params(0.0, 2.5);
        let s0 = BlochState {
            excited: 1.0,
            coh_re: 0.0,
            coh_im: 0.0,
        };
        let t = 0.3e-9;
        let s = evolve_bloch(&s0, &p, t, t).unwrap();
        let expected = (-p.gamma_eff() * t).exp();
        assert!((s.excited - expected).abs() < 1e-8);
    }

    #[test]
    fn evolve_zero_time_identity() {
        let p = params(1.0, 2.5);
        let s0 = BlochState {
            excited: 0.4,
            coh_re: 0.1,
            coh_im: -0.2,
        };
        let s = evolve_bloch(&s0, &p, 0.0, 1.0).unwrap();
        assert_eq!(s, s0);
    }

    #[test]
    fn steady_state_matches_long_time_integration() {
        for (w, g, d, deph) in [
            (1.0, 2.5, 0.0, 0.0),
            (0.3, 2.5, 0.0, 0.5),
            (2.0, 1.0, 1.5, 0.0),
            (4.0, 2.5, -0.7, 0.3),
        ] {
            let p = EmitterParams {
                gamma_rad: TAU * g * 1e9,
                gamma_deph: TAU * deph * 1e9,
                rabi: TAU * w * 1e9,
                detuning: TAU * d * 1e9,
                purcell: 1.0,
            };
            let t = 200.0 / p.gamma_eff();
            let s = evolve_bloch(&BlochState::GROUND, &p, t, t).unwrap();
            let ss = p.steady_state();
            assert!(
                (s.excited - ss.excited).abs() < 1e-9,
                "population mismatch for Ω={w} GHz: {} vs {}",
                s.excited,
                ss.excited
            );
            assert!((s.coh_re - ss.coh_re).abs() < 1e-9);
            assert!((s.coh_im - ss.coh_im).abs() < 1e-9);
        }
    }

    #[test]
    fn far_detuned_population_vanishes() {
        let mut p = params(1.0, 2.5);
        p.detuning = TAU * 1e14;
        assert!(p.steady_population() < 1e-8);
    }

    #[test]
    fn rhs_zero_at_steady_state() {
        let p = params(1.3, 2.5);
        let ss = p.steady_state();
        let d = bloch_rhs(&ss, &p);
        let scale = p.gamma_eff();
        assert!(d.excited.abs() / scale < 1e-14);
        assert!(d.coh_re.abs() / scale < 1e-14);
        assert!(d.coh_im.abs() / scale < 1e-14);
    }

    #[test]
    fn g2_zero_is_exactly_zero_and_wings_reach_one() {
        let p = params(1.0, 2.5);
        let n = 400;
        let dt = 20.0 / p.gamma_eff() / (n - 1) as f64;
        let grid: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
        let g2 = g2_regression(&p, &grid).unwrap();
        let mid = g2.tau.len() / 2;
        assert_eq!(g2.values[mid], 0.0);
        assert!((g2.values[0] - 1.0).abs() < 1e-3);
        assert!((g2.values[g2.values.len() - 1] - 1.0).abs() < 1e-3);
        // mirror symmetry by construction
        for i in 0..g2.tau.len() {
            assert_eq!(g2.values[i], g2.values[g2.tau.len() - 1 - i]);
        }
    }

    #[test]
    fn g2_regression_rejects_undriven() {
        let p = params(0.0, 2.5);
        let grid = [0.0, 1e-12, 2e-12];
        assert!(matches!(
            g2_regression(&p, &grid),
            Err(DynamicsError::UndefinedCorrelation)
        ));
    }

    #[test]
    fn closed_form_basics() {
        let p = params(1.0, 2.5);
        assert_eq!(g2_closed_form(&p, 0.0).unwrap(), 0.0);
        // strong drive: first maximum near π/Ω
        let strong = params(50.0, 2.5);
        let t_peak = std::f64::consts::PI / strong.rabi;
        let g_peak = g2_closed_form(&strong, t_peak).unwrap();
        assert!(g_peak > 1.5, "expected Rabi overshoot, got {g_peak}");
        let g_half = g2_closed_form(&strong, 0.5 * t_peak).unwrap();
        assert!(g_half < g_peak);
    }

    #[test]
    fn closed_form_refuses_dephasing_and_detuning() {
        let mut p = params(1.0, 2.5);
        p.gamma_deph = 1e9;
        assert!(g2_closed_form(&p, 1e-10).is_err());
        let mut p = params(1.0, 2.5);
        p.detuning = 1e9;
        assert!(g2_closed_form(&p, 1e-10).is_err());
    }

    #[test]
    fn physicality_preserved() {
        for (w, g) in [(0.1, 2.5), (1.0, 2.5), (10.0, 2.5), (4.0, 0.3)] {
            let p = params(w, g);
            let mut s = BlochState::GROUND;
            let dt = 0.5 / p.gamma_eff();
            for _ in 0..60 {
                s = evolve_bloch(&s, &p, dt, dt).unwrap();
                assert!(s.excited >= -1e-12 && s.excited <= 1.0 + 1e-12);
                assert!(s.physicality_excess() < 1e-9);
            }
        }
    }

    #[test]
    fn pulsed_decay_shape() {
        // rise = 0 → single exponential
        let v = pulsed_decay_model(1.0e-9, 2.0, 0.0, 0.0, 0.5e-9);
        assert!((v - 2.0 * (-2.0_f64).exp()).abs() < 1e-15);
        assert_eq!(pulsed_decay_model(-1e-12, 1.0, 0.0, 0.0, 1e-9), 0.0);
        // finite rise pushes the peak past t0
        let peak_t = (0..1000)
            .map(|i| i as f64 * 1e-12)
            .max_by(|a, b| {
                pulsed_decay_model(*a, 1.0, 0.0, 0.1e-9, 0.4e-9)
                    .partial_cmp(&pulsed_decay_model(*b, 1.0, 0.0, 0.1e-9, 0.4e-9))
                    .unwrap()
            })
            .unwrap();
        assert!(peak_t > 0.0);
    }

    #[test]
    fn wing_renormalization_scales_out_pedestal() {
        let tau: Vec<f64> = (-50..=50).map(|i| i as f64 * 1e-10).collect();
        let values: Vec<f64> = tau.iter().map(|_| 1.25).collect();
        let g = G2Curve {
            tau,
            values,
            errors: None,
        };
        let r = g.renormalize_wings(0.2);
        assert!((r.values[0] - 1.0).abs() < 1e-12);
        assert!((r.values[50] - 1.0).abs() < 1e-12);
    }
}
