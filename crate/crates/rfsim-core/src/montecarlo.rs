//! Stochastic photon time-tag generation.
//!
//! Emission times come from a quantum-jump unraveling of the driven
//! two-level emitter: the conditional (no-jump) state evolves under the
//! non-Hermitian generator, a uniform deviate picks the jump time from the
//! survival probability, and every emission resets the emitter to the
//! ground state. Blinking, laser-scatter background, detector imperfections
//! and the correlator beamsplitter are separate passes over the tag stream.
//!
//! Generation is sharded in fixed 1 ms windows; each shard draws from its
//! own RNG stream keyed by (seed, stage, shard), so outputs are bit-stable
//! under any thread count. A shard starts from the ground state, which
//! perturbs correlations for about one emission period per millisecond.

use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::{Distribution, Open01};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::EmitterParams;
use crate::rng::{stream, Stage};
use crate::timetags::TimeTagSeries;

/// Fixed generation shard length (1 ms).
const SHARD_PS: u64 = 1_000_000_000;

/// Minimum survival-table resolution for the renewal sampler.
const TABLE_LEN_MIN: usize = 8192;

/// Excitation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SourceMode {
    /// Continuous-wave drive at the Rabi frequency in [`EmitterParams`].
    Cw,
    /// Pulsed excitation: an ideal preparation pulse at `rep_rate` promotes
    /// the emitter to the excited state with probability `excitation_prob`.
    Pulsed { rep_rate: f64, excitation_prob: f64 },
}

/// Everything the photon source needs: emitter rates, excitation mode,
/// blinking telegraph rates, scatter background, and the fraction of
/// emitted photons that make it into the collection path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    pub emitter: EmitterParams,
    pub mode: SourceMode,
    /// Rate of leaving the ON state (1/s).
    pub blink_on_rate: f64,
    /// Rate of leaving the OFF state (1/s).
    pub blink_off_rate: f64,
    /// Homogeneous background rate (counts/s) merged into the stream.
    pub background_rate: f64,
    pub collection_efficiency: f64,
}

impl SourceConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.emitter.validate().map_err(|e| e.to_string())?;
        if !(self.blink_on_rate >= 0.0 && self.blink_off_rate >= 0.0) {
            return Err("blink rates must be non-negative".into());
        }
        if !(self.background_rate >= 0.0) {
            return Err("background rate must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.collection_efficiency) {
            return Err("collection efficiency must be in [0,1]".into());
        }
        if let SourceMode::Pulsed {
            rep_rate,
            excitation_prob,
        } = self.mode
        {
            if !(rep_rate > 0.0) {
                return Err("rep_rate must be > 0".into());
            }
            if !(0.0..=1.0).contains(&excitation_prob) {
                return Err("excitation_prob must be in [0,1]".into());
            }
        }
        Ok(())
    }

    /// Mean photon rate entering the collection path (counts/s), before
    /// blinking and detection.
    pub fn collected_rate(&self) -> f64 {
        let emitted = match self.mode {
            SourceMode::Cw => self.emitter.gamma_eff() * self.emitter.steady_population(),
            SourceMode::Pulsed {
                rep_rate,
                excitation_prob,
            } => rep_rate * excitation_prob,
        };
        emitted * self.collection_efficiency
    }

    /// Fraction of time the telegraph spends ON.
    pub fn blink_duty(&self) -> f64 {
        duty_cycle(self.blink_on_rate, self.blink_off_rate)
    }
}

fn duty_cycle(on_rate: f64, off_rate: f64) -> f64 {
    if on_rate == 0.0 {
        1.0
    } else {
        off_rate / (on_rate + off_rate)
    }
}

/// Single-photon detector imperfections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub quantum_efficiency: f64,
    /// Gaussian timing-jitter FWHM (ps).
    pub jitter_fwhm_ps: f64,
    /// Non-paralyzable dead time (ps).
    pub dead_time_ps: u64,
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.quantum_efficiency) {
            return Err("quantum efficiency must be in [0,1]".into());
        }
        if !(self.jitter_fwhm_ps >= 0.0) {
            return Err("jitter must be non-negative".into());
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// conditional no-jump evolution
// ---------------------------------------------------------------------------

/// Propagator for the conditional wavefunction (c_g, c_e) under
/// d c/dt = M c with
/// M = [[−γd/4, −iΩ/2], [−iΩ/2, iΔ − Γ/2 − γd/4]].
///
/// exp(Mt) is evaluated from the 2×2 trace/deviator split; both eigenvalues
/// have non-positive real part, so the exponentials never overflow.
#[derive(Debug, Clone, Copy)]
struct NoJumpPropagator {
    half_trace: C64,
    root: C64,
    dev_diag: C64,
    dev_off: C64,
}

impl NoJumpPropagator {
    fn new(p: &EmitterParams) -> Self {
        let gamma = p.gamma_eff();
        let gd = p.gamma_deph;
        let m00 = C64::new(-0.25 * gd, 0.0);
        let m11 = C64::new(-0.5 * gamma - 0.25 * gd, p.detuning);
        let off = C64::new(0.0, -0.5 * p.rabi);
        let half_trace = 0.5 * (m00 + m11);
        let dev_diag = m00 - half_trace;
        let root = (dev_diag * dev_diag + off * off).sqrt();
        NoJumpPropagator {
            half_trace,
            root,
            dev_diag,
            dev_off: off,
        }
    }

    fn evolve(&self, cg: C64, ce: C64, t: f64) -> (C64, C64) {
        let st = self.half_trace * t;
        let bt = self.root * t;
        let ep = (st + bt).exp();
        let em = (st - bt).exp();
        let cosh = 0.5 * (ep + em);
        let sinh_over_b = if bt.norm() < 1e-8 {
            st.exp() * t * (C64::new(1.0, 0.0) + bt * bt / 6.0)
        } else {
            (ep - em) / (2.0 * self.root)
        };
        (
            cosh * cg + sinh_over_b * (self.dev_diag * cg + self.dev_off * ce),
            cosh * ce + sinh_over_b * (self.dev_off * cg - self.dev_diag * ce),
        )
    }

    /// Squared norm of the conditional state after time t.
    fn survival(&self, cg: C64, ce: C64, t: f64) -> f64 {
        let (g, e) = self.evolve(cg, ce, t);
        g.norm_sqr() + e.norm_sqr()
    }
}

/// Inverse-CDF sampler for the waiting time between emissions when the only
/// jump channel is radiative decay: every emission resets the emitter to the
/// ground state, so the inter-emission intervals are i.i.d. draws from the
/// ground-state survival curve.
struct WaitingTimeSampler {
    t_max: f64,
    dt: f64,
    survival: Vec<f64>,
}

impl WaitingTimeSampler {
    fn new(prop: &NoJumpPropagator, rabi: f64) -> Self {
        let g0 = C64::new(1.0, 0.0);
        let e0 = C64::new(0.0, 0.0);
        // find where the survival drops below 1e-18
        let mut t_max = -2.0 / prop.half_trace.re.min(-f64::MIN_POSITIVE);
        for _ in 0..200 {
            if prop.survival(g0, e0, t_max) < 1e-18 {
                break;
            }
            t_max *= 2.0;
        }
        // resolve strong-drive Rabi structure with ≥ 40 points per cycle
        let cycles = t_max * rabi / std::f64::consts::TAU;
        let len = ((cycles * 40.0) as usize).clamp(TABLE_LEN_MIN, 1 << 20);
        let dt = t_max / (len - 1) as f64;
        let mut survival = Vec::with_capacity(len);
        let mut floor = 1.0_f64;
        for i in 0..len {
            let n = prop.survival(g0, e0, i as f64 * dt).min(floor);
            survival.push(n);
            floor = n;
        }
        WaitingTimeSampler {
            t_max,
            dt,
            survival,
        }
    }

    /// Waiting time in seconds for a uniform deviate r ∈ (0,1).
    fn sample(&self, r: f64) -> f64 {
        let idx = self.survival.partition_point(|&n| n > r);
        if idx == 0 {
            return 0.0;
        }
        if idx >= self.survival.len() {
            return self.t_max;
        }
        let hi = self.survival[idx - 1];
        let lo = self.survival[idx];
        let frac = if hi > lo { (hi - r) / (hi - lo) } else { 0.5 };
        ((idx - 1) as f64 + frac) * self.dt
    }
}

// ---------------------------------------------------------------------------
// emission
// ---------------------------------------------------------------------------

/// Generate the emitted-and-collected photon stream for `duration` seconds.
/// Deterministic in (config, seed) regardless of thread count.
pub fn simulate_emission_tags(src: &SourceConfig, duration: f64, seed: u64) -> TimeTagSeries {
    assert!(duration > 0.0, "duration must be positive");
    let duration_ps = (duration * 1e12).round() as u64;
    let n_shards = duration_ps.div_ceil(SHARD_PS).max(1);

    let tags: Vec<u64> = match src.mode {
        SourceMode::Cw => {
            let p = &src.emitter;
            if p.rabi == 0.0 || p.gamma_eff() == 0.0 {
                Vec::new() // undriven or non-radiative emitter never emits
            } else if p.gamma_deph == 0.0 {
                let prop = NoJumpPropagator::new(p);
                let sampler = WaitingTimeSampler::new(&prop, p.rabi);
                (0..n_shards)
                    .into_par_iter()
                    .map(|shard| {
                        cw_shard_renewal(src, &sampler, shard, duration_ps, seed)
                    })
                    .flatten()
                    .collect()
            } else {
                let prop = NoJumpPropagator::new(p);
                (0..n_shards)
                    .into_par_iter()
                    .map(|shard| cw_shard_general(src, &prop, shard, duration_ps, seed))
                    .flatten()
                    .collect()
            }
        }
        SourceMode::Pulsed {
            rep_rate,
            excitation_prob,
        } => (0..n_shards)
            .into_par_iter()
            .map(|shard| {
                pulsed_shard(src, rep_rate, excitation_prob, shard, duration_ps, seed)
            })
            .flatten()
            .collect(),
    };
    TimeTagSeries::from_unsorted(0, duration_ps, tags)
}

fn shard_bounds(shard: u64, duration_ps: u64) -> (u64, u64) {
    let start = shard * SHARD_PS;
    let end = ((shard + 1) * SHARD_PS).min(duration_ps);
    (start, end)
}

fn cw_shard_renewal(
    src: &SourceConfig,
    sampler: &WaitingTimeSampler,
    shard: u64,
    duration_ps: u64,
    seed: u64,
) -> Vec<u64> {
    let mut rng = stream(seed, Stage::Emission, shard);
    let (start_ps, end_ps) = shard_bounds(shard, duration_ps);
    let span = (end_ps - start_ps) as f64 * 1e-12;
    let eta = src.collection_efficiency;
    let mut tags = Vec::new();
    let mut t = 0.0_f64; // seconds from shard start
    loop {
        let r: f64 = Open01.sample(&mut rng);
        t += sampler.sample(r);
        if t >= span {
            break;
        }
        let collected = eta >= 1.0 || rng.gen::<f64>() < eta;
        if collected {
            let tag = start_ps as f64 + t * 1e12;
            if tag < duration_ps as f64 {
                tags.push(tag.round() as u64);
            }
        }
    }
    tags
}

fn cw_shard_general(
    src: &SourceConfig,
    prop: &NoJumpPropagator,
    shard: u64,
    duration_ps: u64,
    seed: u64,
) -> Vec<u64> {
    let mut rng = stream(seed, Stage::Emission, shard);
    let (start_ps, end_ps) = shard_bounds(shard, duration_ps);
    let span = (end_ps - start_ps) as f64 * 1e-12;
    let p = &src.emitter;
    let eta = src.collection_efficiency;
    let gamma = p.gamma_eff();
    let step0 = 1.0 / (gamma + p.gamma_deph + p.rabi + p.detuning.abs());

    let mut tags = Vec::new();
    let mut t = 0.0_f64;
    let (mut cg, mut ce) = (C64::new(1.0, 0.0), C64::new(0.0, 0.0));
    'outer: while t < span {
        let r: f64 = Open01.sample(&mut rng);
        // bracket the jump time on the survival curve
        let mut lo = 0.0_f64;
        let mut hi = step0;
        while prop.survival(cg, ce, hi) > r {
            lo = hi;
            hi *= 2.0;
            if t + lo >= span {
                // no jump inside this shard
                break 'outer;
            }
        }
        // bisect to sub-picosecond resolution
        while hi - lo > 0.05e-12 {
            let mid = 0.5 * (lo + hi);
            if prop.survival(cg, ce, mid) > r {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let tj = 0.5 * (lo + hi);
        t += tj;
        if t >= span {
            break;
        }
        let (g, e) = prop.evolve(cg, ce, tj);
        let w_emit = gamma * e.norm_sqr();
        let w_deph = 0.5 * p.gamma_deph * (g.norm_sqr() + e.norm_sqr());
        if rng.gen::<f64>() * (w_emit + w_deph) < w_emit {
            // radiative jump: record and reset
            let collected = eta >= 1.0 || rng.gen::<f64>() < eta;
            if collected {
                let tag = start_ps as f64 + t * 1e12;
                if tag < duration_ps as f64 {
                    tags.push(tag.round() as u64);
                }
            }
            cg = C64::new(1.0, 0.0);
            ce = C64::new(0.0, 0.0);
        } else {
            // dephasing jump: phase flip, renormalize
            let norm = (g.norm_sqr() + e.norm_sqr()).sqrt();
            cg = g / norm;
            ce = -e / norm;
        }
    }
    tags
}

fn pulsed_shard(
    src: &SourceConfig,
    rep_rate: f64,
    excitation_prob: f64,
    shard: u64,
    duration_ps: u64,
    seed: u64,
) -> Vec<u64> {
    let mut rng = stream(seed, Stage::Emission, shard);
    let (start_ps, end_ps) = shard_bounds(shard, duration_ps);
    let period_ps = 1e12 / rep_rate;
    let gamma = src.emitter.gamma_eff();
    if gamma <= 0.0 {
        return Vec::new();
    }
    let eta = src.collection_efficiency;

    let first_pulse = (start_ps as f64 / period_ps).ceil() as u64;
    let mut tags = Vec::new();
    let mut busy_until = 0.0_f64; // emitter still excited before this time (ps)
    let mut k = first_pulse;
    loop {
        let t_pulse = k as f64 * period_ps;
        if t_pulse >= end_ps as f64 {
            break;
        }
        k += 1;
        if t_pulse < busy_until {
            continue; // preparation pulse arrives while still excited
        }
        if excitation_prob < 1.0 && !rng.gen_bool(excitation_prob) {
            continue;
        }
        let u: f64 = Open01.sample(&mut rng);
        let delay_ps = -u.ln() / gamma * 1e12;
        let t_emit = t_pulse + delay_ps;
        busy_until = t_emit;
        let collected = eta >= 1.0 || rng.gen::<f64>() < eta;
        if collected && t_emit < duration_ps as f64 {
            tags.push(t_emit.round() as u64);
        }
    }
    tags
}

// ---------------------------------------------------------------------------
// stream transformations
// ---------------------------------------------------------------------------

/// Drop tags that fall into OFF periods of a two-state telegraph.
/// `on_rate` is the rate of leaving ON, `off_rate` the rate of leaving OFF;
/// the long-run kept fraction is off_rate / (on_rate + off_rate).
pub fn apply_blinking(
    tags: &TimeTagSeries,
    on_rate: f64,
    off_rate: f64,
    seed: u64,
) -> TimeTagSeries {
    assert!(on_rate >= 0.0 && off_rate >= 0.0);
    if on_rate == 0.0 {
        return tags.clone(); // never leaves ON
    }
    let mut rng = stream(seed, Stage::Blinking, 0);
    let duty = duty_cycle(on_rate, off_rate);
    let mut on = rng.gen::<f64>() < duty;
    let mut t_edge = 0.0_f64; // ps
    let mut kept = Vec::new();
    let mut idx = 0usize;
    let n = tags.timestamps.len();
    while idx < n && t_edge < tags.duration_ps as f64 {
        let rate = if on { on_rate } else { off_rate };
        let dwell_ps = if rate == 0.0 {
            f64::INFINITY
        } else {
            let u: f64 = Open01.sample(&mut rng);
            -u.ln() / rate * 1e12
        };
        let next_edge = t_edge + dwell_ps;
        while idx < n && (tags.timestamps[idx] as f64) < next_edge {
            if on {
                kept.push(tags.timestamps[idx]);
            }
            idx += 1;
        }
        t_edge = next_edge;
        on = !on;
    }
    TimeTagSeries {
        channel: tags.channel,
        duration_ps: tags.duration_ps,
        timestamps: kept,
    }
}

/// Merge a homogeneous Poisson background of the given rate (counts/s).
pub fn add_background(tags: &TimeTagSeries, rate: f64, seed: u64) -> TimeTagSeries {
    assert!(rate >= 0.0);
    if rate == 0.0 {
        return tags.clone();
    }
    let mut rng = stream(seed, Stage::Background, 0);
    let mut extra = Vec::new();
    let mut t = 0.0_f64; // ps
    loop {
        let u: f64 = Open01.sample(&mut rng);
        t += -u.ln() / rate * 1e12;
        if t >= tags.duration_ps as f64 {
            break;
        }
        extra.push(t.round() as u64);
    }
    let mut all = tags.timestamps.clone();
    all.extend_from_slice(&extra);
    TimeTagSeries::from_unsorted(tags.channel, tags.duration_ps, all)
}

/// Apply detector imperfections: quantum-efficiency thinning, Gaussian
/// timing jitter (applied in continuous time, then rounded and re-sorted),
/// and a non-paralyzable dead time.
pub fn detect(tags: &TimeTagSeries, det: &DetectorConfig, seed: u64) -> TimeTagSeries {
    let mut rng = stream(seed, Stage::Detection, tags.channel as u64);
    let qe = det.quantum_efficiency;

    let mut kept: Vec<u64> = if qe >= 1.0 {
        tags.timestamps.clone()
    } else {
        tags.timestamps
            .iter()
            .copied()
            .filter(|_| rng.gen::<f64>() < qe)
            .collect()
    };

    if det.jitter_fwhm_ps > 0.0 {
        let sigma = det.jitter_fwhm_ps / (8.0 * 2.0_f64.ln()).sqrt();
        let normal = rand_distr::Normal::new(0.0, sigma).expect("valid sigma");
        let mut jittered = Vec::with_capacity(kept.len());
        for t in kept {
            let tj = t as f64 + normal.sample(&mut rng);
            if tj >= 0.0 && tj < tags.duration_ps as f64 {
                jittered.push(tj.round() as u64);
            }
        }
        jittered.sort_unstable();
        jittered.dedup();
        kept = jittered;
    }

    if det.dead_time_ps > 0 {
        let mut alive = Vec::with_capacity(kept.len());
        let mut last: Option<u64> = None;
        for t in kept {
            if last.map_or(true, |l| t >= l + det.dead_time_ps) {
                alive.push(t);
                last = Some(t);
            }
        }
        kept = alive;
    }

    TimeTagSeries {
        channel: tags.channel,
        duration_ps: tags.duration_ps,
        timestamps: kept,
    }
}

/// Route each tag to one of two output channels with probability 1/2.
pub fn hbt_split(tags: &TimeTagSeries, seed: u64) -> (TimeTagSeries, TimeTagSeries) {
    let mut rng = stream(seed, Stage::Split, 0);
    let mut ch0 = Vec::with_capacity(tags.timestamps.len() / 2 + 16);
    let mut ch1 = Vec::with_capacity(tags.timestamps.len() / 2 + 16);
    for &t in &tags.timestamps {
        if rng.gen::<bool>() {
            ch0.push(t);
        } else {
            ch1.push(t);
        }
    }
    (
        TimeTagSeries {
            channel: 0,
            duration_ps: tags.duration_ps,
            timestamps: ch0,
        },
        TimeTagSeries {
            channel: 1,
            duration_ps: tags.duration_ps,
            timestamps: ch1,
        },
    )
}
