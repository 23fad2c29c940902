//! Simulation and analysis toolkit for cavity-enhanced single-photon
//! resonance fluorescence.
//!
//! The crate is organized around the stages of a photon-counting experiment:
//!
//! * [`photonics`] — closed-form cavity and emitter parameter models
//!   (Purcell factor, pillar quality factor vs. diameter, mode wavelength
//!   and polarization splitting).
//! * [`dynamics`] — deterministic two-level-system dynamics: optical Bloch
//!   equations, steady state, and second-order correlation functions.
//! * [`montecarlo`] — stochastic photon time-tag generation with blinking,
//!   laser-scatter background, detector imperfections and beamsplitting.
//! * [`correlator`] — coincidence and lifetime histograms from time tags,
//!   normalization to g², count-rate corrections.
//! * [`fitkit`] — damped least-squares engine and the instrument-response
//!   aware fit models used to analyze the histograms.
//! * [`config`] — TOML run configuration with explicit unit suffixes.
//!
//! All quantities are SI internally: seconds, meters, and angular rates in
//! rad/s. Time tags are integer picoseconds.

pub mod bessel;
pub mod config;
pub mod correlator;
pub mod dynamics;
pub mod fitkit;
pub mod montecarlo;
pub mod photonics;
pub mod rng;
pub mod timetags;
pub mod units;

pub use correlator::{correlate, deadtime_corrected_rate, lifetime_histogram, normalize_g2, CorrelationHistogram, DeadTimeModel};
pub use dynamics::{g2_closed_form, g2_regression, pulsed_decay_model, BlochState, DecayCurve, EmitterParams, G2Curve};
pub use fitkit::{fit_g2_exponential, fit_g2_rabi, fit_lifetime, fit_q_vs_diameter, FitResult, InstrumentResponse};
pub use montecarlo::{add_background, apply_blinking, detect, hbt_split, simulate_emission_tags, DetectorConfig, SourceConfig, SourceMode};
pub use photonics::{purcell_factor, purcell_from_lifetimes, CavityGeometry, CavityMode};
pub use timetags::TimeTagSeries;
