//! Coincidence histograms, g² normalization, lifetime folding, and
//! count-rate corrections.
//!
//! The correlator is multi-start/multi-stop: every pair inside the window
//! is counted, which is unbiased at Mcts/s rates where classic start–stop
//! electronics would undercount.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{DecayCurve, G2Curve};
use crate::montecarlo::DetectorConfig;
use crate::timetags::TimeTagSeries;

#[derive(Debug, Error)]
pub enum CorrelatorError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("normalization requires positive rates and duration")]
    ZeroRate,
    #[error("detector saturated: measured rate × dead time ≥ 1")]
    Saturated,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Binned coincidences with the metadata needed for normalization.
///
/// Bins are centered on integer multiples of `bin_width_ps`; delay `dt`
/// lands in bin `round(dt / bin_width)` with ties away from zero, so the
/// partition is exactly symmetric under `dt → −dt`. For even bin widths the
/// central bin spans one picosecond tick fewer than the others;
/// [`CorrelationHistogram::bin_tick_width`] reports the exact width and the
/// normalization uses it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationHistogram {
    pub bin_width_ps: u64,
    /// Lower edge of the first bin (ps).
    pub tau_min_ps: i64,
    /// Upper edge of the last bin (ps).
    pub tau_max_ps: i64,
    /// Counts per bin; bin `i` is centered at `(i − n_half)·bin_width`.
    pub counts: Vec<u64>,
    pub acq_duration_ps: u64,
    /// Singles rate of the first input (counts/s).
    pub rate_ch0: f64,
    /// Singles rate of the second input (counts/s).
    pub rate_ch1: f64,
}

impl CorrelationHistogram {
    pub fn n_half(&self) -> usize {
        self.counts.len() / 2
    }

    /// Center of bin `i` in picoseconds.
    pub fn bin_center_ps(&self, i: usize) -> i64 {
        (i as i64 - self.n_half() as i64) * self.bin_width_ps as i64
    }

    /// Exact number of picosecond ticks covered by bin `i`.
    pub fn bin_tick_width(&self, i: usize) -> u64 {
        if i == self.n_half() {
            2 * self.bin_width_ps.div_ceil(2) - 1
        } else {
            self.bin_width_ps
        }
    }

    /// CSV export: tau_ps,counts,g2,g2_err.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), CorrelatorError> {
        let g2 = normalize_g2(self)?;
        writeln!(w, "tau_ps,counts,g2,g2_err")?;
        let errs = g2.errors.as_ref().expect("normalize_g2 attaches errors");
        for i in 0..self.counts.len() {
            writeln!(
                w,
                "{},{},{:e},{:e}",
                self.bin_center_ps(i),
                self.counts[i],
                g2.values[i],
                errs[i]
            )?;
        }
        Ok(())
    }
}

/// Delay → bin index: round to the nearest multiple of `bw`, ties away
/// from zero. Symmetric by construction: idx(−dt) = −idx(dt).
#[inline]
fn bin_index(dt: i64, bw: i64) -> i64 {
    let half = bw / 2;
    let mag = (dt.abs() + half) / bw;
    if dt < 0 {
        -mag
    } else {
        mag
    }
}

/// Multi-start/multi-stop coincidence histogram of `b` relative to `a`:
/// every pair with `|t_b − t_a|` inside the window increments the bin of
/// `t_b − t_a`. The window is rounded to a whole number of bins.
///
/// Runs in O(N_a · window · rate_b) via a two-pointer sweep and is
/// parallelized over slabs of `a`; the result is independent of the slab
/// split.
pub fn correlate(
    a: &TimeTagSeries,
    b: &TimeTagSeries,
    bin_width_ps: u64,
    window_ps: u64,
) -> Result<CorrelationHistogram, CorrelatorError> {
    if bin_width_ps == 0 || window_ps == 0 {
        return Err(CorrelatorError::Contract(
            "bin width and window must be positive".into(),
        ));
    }
    if !a.is_valid() || !b.is_valid() {
        return Err(CorrelatorError::Contract(
            "inputs must be sorted, strictly increasing, inside [0, duration)".into(),
        ));
    }
    if a.duration_ps != b.duration_ps {
        return Err(CorrelatorError::Contract(
            "inputs must share one acquisition duration".into(),
        ));
    }

    let bw = bin_width_ps as i64;
    let n_half = ((window_ps + bin_width_ps / 2) / bin_width_ps).max(1) as i64;
    // largest |dt| that still falls inside bin ±n_half
    let dt_max = (n_half + 1) * bw - bw / 2 - 1;
    let n_bins = (2 * n_half + 1) as usize;

    let sweep = |a_slab: &[u64]| -> Vec<u64> {
        let mut counts = vec![0u64; n_bins];
        if a_slab.is_empty() {
            return counts;
        }
        let first = a_slab[0] as i64 - dt_max;
        let mut lo = b
            .timestamps
            .partition_point(|&t| (t as i64) < first);
        for &ta in a_slab {
            let ta = ta as i64;
            while lo < b.timestamps.len() && (b.timestamps[lo] as i64) < ta - dt_max {
                lo += 1;
            }
            let mut j = lo;
            while j < b.timestamps.len() {
                let dt = b.timestamps[j] as i64 - ta;
                if dt > dt_max {
                    break;
                }
                let idx = bin_index(dt, bw);
                counts[(idx + n_half) as usize] += 1;
                j += 1;
            }
        }
        counts
    };

    let counts = if a.timestamps.len() > 20_000 {
        let chunk = (a.timestamps.len() / (8 * rayon::current_num_threads().max(1))).max(4096);
        a.timestamps
            .par_chunks(chunk)
            .map(sweep)
            .reduce(
                || vec![0u64; n_bins],
                |mut acc, c| {
                    for (x, y) in acc.iter_mut().zip(c) {
                        *x += y;
                    }
                    acc
                },
            )
    } else {
        sweep(&a.timestamps)
    };

    let duration_s = a.duration_ps as f64 * 1e-12;
    Ok(CorrelationHistogram {
        bin_width_ps,
        tau_min_ps: -n_half * bw - bw / 2,
        tau_max_ps: n_half * bw + (bw - bw / 2),
        counts,
        acq_duration_ps: a.duration_ps,
        rate_ch0: a.timestamps.len() as f64 / duration_s,
        rate_ch1: b.timestamps.len() as f64 / duration_s,
    })
}

/// Normalize a coincidence histogram to g²: divide each bin by
/// r₀·r₁·(bin width)·(acquisition time). Per-bin Poisson standard errors
/// (√N with an N ≥ 1 floor) ride along on the returned curve.
pub fn normalize_g2(h: &CorrelationHistogram) -> Result<G2Curve, CorrelatorError> {
    if !(h.rate_ch0 > 0.0 && h.rate_ch1 > 0.0 && h.acq_duration_ps > 0) {
        return Err(CorrelatorError::ZeroRate);
    }
    let t_s = h.acq_duration_ps as f64 * 1e-12;
    let mut tau = Vec::with_capacity(h.counts.len());
    let mut values = Vec::with_capacity(h.counts.len());
    let mut errors = Vec::with_capacity(h.counts.len());
    for i in 0..h.counts.len() {
        let norm = h.rate_ch0 * h.rate_ch1 * (h.bin_tick_width(i) as f64 * 1e-12) * t_s;
        tau.push(h.bin_center_ps(i) as f64 * 1e-12);
        values.push(h.counts[i] as f64 / norm);
        errors.push((h.counts[i].max(1) as f64).sqrt() / norm);
    }
    Ok(G2Curve {
        tau,
        values,
        errors: Some(errors),
    })
}

/// Fold a pulsed-excitation tag stream on the repetition period.
/// Bin centers are seconds from the pulse arrival.
pub fn lifetime_histogram(tags: &TimeTagSeries, rep_rate: f64, bin_width_ps: u64) -> DecayCurve {
    assert!(rep_rate > 0.0 && bin_width_ps > 0);
    let period_ps = 1e12 / rep_rate;
    let n_bins = ((period_ps / bin_width_ps as f64).floor() as usize).max(1);
    let mut counts = vec![0.0_f64; n_bins];
    for &t in &tags.timestamps {
        let pos = (t as f64) % period_ps;
        let idx = (pos / bin_width_ps as f64) as usize;
        if idx < n_bins {
            counts[idx] += 1.0;
        }
    }
    let t = (0..n_bins)
        .map(|i| (i as f64 + 0.5) * bin_width_ps as f64 * 1e-12)
        .collect();
    DecayCurve {
        t,
        counts,
        rise_time: None,
        decay_time: None,
    }
}

/// Dead-time correction model for converting a measured SPAD rate into the
/// photon arrival rate at the detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DeadTimeModel {
    /// Arrival rate ≈ measured · (1 + frac): a fixed fractional counting
    /// loss, the convention used for the headline count-rate arithmetic.
    Multiplicative { frac: f64 },
    /// Invert measured = arrival / (1 + arrival·τ_dead).
    NonParalyzable,
}

/// Convert a measured count rate (counts/s) to the photon rate arriving at
/// the detector, undoing dead time and quantum efficiency.
pub fn deadtime_corrected_rate(
    measured: f64,
    det: &DetectorConfig,
    model: DeadTimeModel,
) -> Result<f64, CorrelatorError> {
    if !(measured >= 0.0) {
        return Err(CorrelatorError::Contract("measured rate must be >= 0".into()));
    }
    if !(det.quantum_efficiency > 0.0) {
        return Err(CorrelatorError::Contract(
            "quantum efficiency must be > 0 to invert".into(),
        ));
    }
    let at_detector = match model {
        DeadTimeModel::Multiplicative { frac } => measured * (1.0 + frac),
        DeadTimeModel::NonParalyzable => {
            let dead_s = det.dead_time_ps as f64 * 1e-12;
            let occupancy = measured * dead_s;
            if occupancy >= 1.0 {
                return Err(CorrelatorError::Saturated);
            }
            measured / (1.0 - occupancy)
        }
    };
    Ok(at_detector / det.quantum_efficiency)
}
