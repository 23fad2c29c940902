//! TOML run configuration.
//!
//! Values carry explicit unit suffixes (`"930 nm"`, `"2.5 GHz"`, `"50 ns"`)
//! or are bare numbers in SI base units. Emitter rates are quoted as
//! ordinary frequencies and converted to angular rates (×2π) on load;
//! counting rates (blinking, background, repetition) stay ordinary.
//! Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::EmitterParams;
use crate::montecarlo::{DetectorConfig, SourceConfig, SourceMode};
use crate::photonics::{CavityGeometry, ModeModel, VolumeModel};
use crate::units::{Frequency, Length, Time};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub cavity: CavitySection,
    pub emitter: EmitterSection,
    pub source: SourceSection,
    pub detector: DetectorSection,
    pub run: RunSection,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySection {
    pub radius: Length,
    pub waveguide_width: Length,
    pub n_core: f64,
    /// Effective index of the guided mode; sets β = 2π·n_eff/λ_planar
    /// unless `beta` is given explicitly.
    #[serde(default)]
    pub n_eff: Option<f64>,
    /// Propagation constant override (1/m).
    #[serde(default)]
    pub beta: Option<f64>,
    pub lambda_planar: Length,
    pub q_planar: f64,
    pub kappa: Length,
    /// Transverse confinement parameter; defaults to the first zero of J0.
    #[serde(default)]
    pub u01: Option<f64>,
    /// Mode volume heuristic V = η·πR²·(λ/n).
    #[serde(default)]
    pub volume_eta: Option<f64>,
    /// Fixed mode volume (m³); overrides `volume_eta`.
    #[serde(default)]
    pub volume: Option<f64>,
    #[serde(default)]
    pub splitting_amp: Option<f64>,
    #[serde(default)]
    pub splitting_exp: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterSection {
    /// Radiative decay rate as an ordinary frequency (stored angular).
    pub gamma_rad: Frequency,
    #[serde(default)]
    pub gamma_deph: Option<Frequency>,
    pub rabi: Frequency,
    #[serde(default)]
    pub detuning: Option<Frequency>,
    #[serde(default)]
    pub purcell: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    /// `"cw"` or `"pulsed"`.
    pub mode: String,
    #[serde(default)]
    pub rep_rate: Option<Frequency>,
    #[serde(default)]
    pub excitation_prob: Option<f64>,
    /// Telegraph rate of leaving ON (counts/s).
    #[serde(default)]
    pub blink_on_rate: Option<Frequency>,
    /// Telegraph rate of leaving OFF (counts/s).
    #[serde(default)]
    pub blink_off_rate: Option<Frequency>,
    /// Scatter background (counts/s) merged before detection.
    #[serde(default)]
    pub background_rate: Option<Frequency>,
    #[serde(default)]
    pub collection_efficiency: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub quantum_efficiency: f64,
    pub jitter_fwhm: Time,
    pub dead_time: Time,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    /// Acquisition length; alternative to `n_events`.
    #[serde(default)]
    pub duration: Option<Time>,
    /// Approximate detected-event target; converted to a duration from the
    /// configured rate chain.
    #[serde(default)]
    pub n_events: Option<u64>,
    pub bin_width: Time,
    pub window: Time,
    #[serde(default)]
    pub output_dir: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::from_str(&text)
    }

    pub fn from_str(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.geometry()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.emitter()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.source().validate().map_err(ConfigError::Invalid)?;
        self.detector().validate().map_err(ConfigError::Invalid)?;
        match (self.run.duration, self.run.n_events) {
            (None, None) => {
                return Err(ConfigError::Invalid(
                    "run needs either duration or n_events".into(),
                ))
            }
            (Some(d), None) if !(d.0 > 0.0) => {
                return Err(ConfigError::Invalid("duration must be > 0".into()))
            }
            (Some(_), Some(_)) => {
                return Err(ConfigError::Invalid(
                    "duration and n_events are mutually exclusive".into(),
                ))
            }
            _ => {}
        }
        if !(self.run.bin_width.0 > 0.0) || !(self.run.window.0 > 0.0) {
            return Err(ConfigError::Invalid("bin_width and window must be > 0".into()));
        }
        if self.run.window.0 < self.run.bin_width.0 {
            return Err(ConfigError::Invalid("window must cover at least one bin".into()));
        }
        Ok(())
    }

    pub fn geometry(&self) -> CavityGeometry {
        let beta = self.cavity.beta.unwrap_or_else(|| {
            let n_eff = self.cavity.n_eff.unwrap_or(3.415);
            2.0 * std::f64::consts::PI * n_eff / self.cavity.lambda_planar.0
        });
        CavityGeometry {
            radius: self.cavity.radius.0,
            waveguide_width: self.cavity.waveguide_width.0,
            n_core: self.cavity.n_core,
            beta,
            lambda_planar: self.cavity.lambda_planar.0,
            q_planar: self.cavity.q_planar,
            kappa: self.cavity.kappa.0,
        }
    }

    pub fn mode_model(&self) -> ModeModel {
        let default = ModeModel::default();
        ModeModel {
            u01: self.cavity.u01.unwrap_or(default.u01),
            volume: match (self.cavity.volume, self.cavity.volume_eta) {
                (Some(v), _) => VolumeModel::Fixed(v),
                (None, Some(eta)) => VolumeModel::Scaled { eta },
                (None, None) => default.volume,
            },
            splitting_amp: self.cavity.splitting_amp.unwrap_or(default.splitting_amp),
            splitting_exp: self.cavity.splitting_exp.unwrap_or(default.splitting_exp),
        }
    }

    pub fn emitter(&self) -> EmitterParams {
        const TWO_PI: f64 = std::f64::consts::TAU;
        EmitterParams {
            gamma_rad: TWO_PI * self.emitter.gamma_rad.0,
            gamma_deph: TWO_PI * self.emitter.gamma_deph.map_or(0.0, |f| f.0),
            rabi: TWO_PI * self.emitter.rabi.0,
            detuning: TWO_PI * self.emitter.detuning.map_or(0.0, |f| f.0),
            purcell: self.emitter.purcell.unwrap_or(1.0),
        }
    }

    pub fn source(&self) -> SourceConfig {
        let mode = match self.source.mode.as_str() {
            "pulsed" => SourceMode::Pulsed {
                rep_rate: self.source.rep_rate.map_or(0.0, |f| f.0),
                excitation_prob: self.source.excitation_prob.unwrap_or(1.0),
            },
            _ => SourceMode::Cw,
        };
        SourceConfig {
            emitter: self.emitter(),
            mode,
            blink_on_rate: self.source.blink_on_rate.map_or(0.0, |f| f.0),
            blink_off_rate: self.source.blink_off_rate.map_or(0.0, |f| f.0),
            background_rate: self.source.background_rate.map_or(0.0, |f| f.0),
            collection_efficiency: self.source.collection_efficiency.unwrap_or(1.0),
        }
    }

    pub fn detector(&self) -> DetectorConfig {
        DetectorConfig {
            quantum_efficiency: self.detector.quantum_efficiency,
            jitter_fwhm_ps: self.detector.jitter_fwhm.0 * 1e12,
            dead_time_ps: (self.detector.dead_time.0 * 1e12).round() as u64,
        }
    }

    pub fn source_mode_is_valid(&self) -> Result<(), ConfigError> {
        match self.source.mode.as_str() {
            "cw" | "pulsed" => Ok(()),
            other => Err(ConfigError::Invalid(format!(
                "source mode must be \"cw\" or \"pulsed\", got {other:?}"
            ))),
        }
    }

    /// Acquisition duration in seconds, resolving an `n_events` target via
    /// the configured rate chain (approximate: blinking duty, collection and
    /// quantum efficiency; dead time ignored).
    pub fn duration_s(&self) -> Result<f64, ConfigError> {
        if let Some(d) = self.run.duration {
            return Ok(d.0);
        }
        let n = self.run.n_events.ok_or_else(|| {
            ConfigError::Invalid("run needs either duration or n_events".into())
        })? as f64;
        let src = self.source();
        let rate =
            src.collected_rate() * src.blink_duty() * self.detector.quantum_efficiency;
        if !(rate > 0.0) {
            return Err(ConfigError::Invalid(
                "cannot derive duration from n_events: expected rate is zero".into(),
            ));
        }
        Ok(n / rate)
    }

    pub fn bin_width_ps(&self) -> u64 {
        (self.run.bin_width.0 * 1e12).round().max(1.0) as u64
    }

    pub fn window_ps(&self) -> u64 {
        (self.run.window.0 * 1e12).round().max(1.0) as u64
    }
}

pub const EXAMPLE_CONFIG: &str = r#"# photon stream simulation parameters
[cavity]
radius = "1.25 um"
waveguide_width = "0.95 um"
n_core = 3.46
n_eff = 3.415
lambda_planar = "930 nm"
q_planar = 8350.0
kappa = "0.38 nm"
volume_eta = 3.0
splitting_amp = 1.5625e-22
splitting_exp = 2.0

[emitter]
gamma_rad = "2.5 GHz"
gamma_deph = "0 Hz"
rabi = "1 GHz"
detuning = "0 Hz"
purcell = 1.0

[source]
mode = "cw"
blink_on_rate = "0 Hz"
blink_off_rate = "0 Hz"
background_rate = "0 Hz"
collection_efficiency = 1.0

[detector]
quantum_efficiency = 0.22
jitter_fwhm = "289 ps"
dead_time = "50 ns"

[run]
seed = 42
duration = "2 ms"
bin_width = "100 ps"
window = "5 ns"
output_dir = "out"
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_config_parses_and_converts() {
        let cfg = RunConfig::from_str(EXAMPLE_CONFIG).unwrap();
        let g = cfg.geometry();
        assert!((g.lambda_planar - 930e-9).abs() < 1e-20);
        assert!((g.kappa - 3.8e-10).abs() < 1e-21);
        let e = cfg.emitter();
        assert!((e.gamma_rad - std::f64::consts::TAU * 2.5e9).abs() < 1.0);
        assert!((e.rabi - std::f64::consts::TAU * 1e9).abs() < 1.0);
        let d = cfg.detector();
        assert_eq!(d.dead_time_ps, 50_000);
        assert!((d.jitter_fwhm_ps - 289.0).abs() < 1e-9);
        assert_eq!(cfg.bin_width_ps(), 100);
        assert_eq!(cfg.window_ps(), 5000);
        assert_eq!(cfg.duration_s().unwrap(), 2e-3);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = EXAMPLE_CONFIG.replace("volume_eta = 3.0", "volume_eta = 3.0\nbogus_key = 1");
        assert!(RunConfig::from_str(&bad).is_err());
    }

    #[test]
    fn duration_and_n_events_are_exclusive() {
        let bad = EXAMPLE_CONFIG.replace("duration = \"2 ms\"", "duration = \"2 ms\"\nn_events = 5");
        assert!(RunConfig::from_str(&bad).is_err());
        let neither = EXAMPLE_CONFIG.replace("duration = \"2 ms\"\n", "");
        assert!(RunConfig::from_str(&neither).is_err());
    }

    #[test]
    fn n_events_derives_duration() {
        let cfg_text = EXAMPLE_CONFIG.replace("duration = \"2 ms\"", "n_events = 100000");
        let cfg = RunConfig::from_str(&cfg_text).unwrap();
        let d = cfg.duration_s().unwrap();
        let src = cfg.source();
        let rate = src.collected_rate() * 0.22;
        assert!((d * rate - 1e5).abs() / 1e5 < 1e-9);
    }
}
