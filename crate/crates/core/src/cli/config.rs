//! JSON run configuration. Frequencies are "(2π)·MHz" scalars, times are μs
//! unless the field name says otherwise.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{DecayObservable, Table1Settings};
use crate::engine::{EnsembleConfig, Frame, InitialState, IntegratorConfig, PulseModel, SampleSchedule, Scenario};
use crate::error::{Error, Result};
use crate::hamiltonian::{DriveConfig, SignalConfig};
use crate::noise::{DriveErrorMode, InitMode, NoiseConfig};
use crate::sequence::{build_sequence_with_layout, resonance_tau, Layout};
use crate::spin::StaticSensor;
use crate::units::{mhz, ns, us};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSection {
    pub d_mhz: f64,
    pub ex_mhz: f64,
    #[serde(default)]
    pub ey_mhz: f64,
    #[serde(default)]
    pub delta_bz_mhz: f64,
}

impl Default for SensorSection {
    fn default() -> Self {
        SensorSection { d_mhz: 2870.0, ex_mhz: 20.0, ey_mhz: 0.0, delta_bz_mhz: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    pub rf_rabi_mhz: f64,
    pub mw_rabi_mhz: f64,
    /// Defaults to 2E_x.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rf_freq_mhz: Option<f64>,
    /// Defaults to D + E_x.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mw_freq_mhz: Option<f64>,
    #[serde(default)]
    pub mw_phase: f64,
    /// Allow drive frequencies away from resonance (lab frame only).
    #[serde(default)]
    pub off_resonance: bool,
}

impl Default for DriveSection {
    fn default() -> Self {
        DriveSection {
            rf_rabi_mhz: 4.0,
            mw_rabi_mhz: 40.0,
            rf_freq_mhz: None,
            mw_freq_mhz: None,
            mw_phase: 0.0,
            off_resonance: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSection {
    #[serde(default)]
    pub coupling_mhz: f64,
    /// Δω = ω_ac − 2E_x.
    #[serde(default)]
    pub detuning_mhz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceSection {
    pub family: String,
    /// Number of pulses (cycles of 2τ for "none"). Exclusive with `duration_us`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_pulses: Option<usize>,
    /// Shortest sequence at least this long, in whole phase patterns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_us: Option<f64>,
    /// Pulse spacing τ; defaults to the resonance value for `resonance_mhz`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_us: Option<f64>,
    #[serde(default = "default_resonance")]
    pub resonance_mhz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phases: Option<Vec<f64>>,
    #[serde(default = "default_layout")]
    pub layout: Layout,
}

fn default_resonance() -> f64 {
    0.1
}

fn default_layout() -> Layout {
    Layout::Centered
}

impl Default for SequenceSection {
    fn default() -> Self {
        SequenceSection {
            family: "cpmg".into(),
            n_pulses: Some(64),
            duration_us: None,
            tau_us: None,
            resonance_mhz: default_resonance(),
            phases: None,
            layout: default_layout(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    /// `null` disables δ_E.
    pub t2star_us: Option<f64>,
    pub tau_c_us: f64,
    pub eta_r: f64,
    pub tau_r_us: f64,
    pub eta_m: f64,
    pub tau_m_us: f64,
    pub delta_e_init: InitMode,
    pub drive_init: InitMode,
    pub drive_mode: DriveErrorMode,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let n = NoiseConfig::default();
        NoiseSection {
            t2star_us: None,
            tau_c_us: n.tau_c * 1e6,
            eta_r: n.eta_r,
            tau_r_us: n.tau_r * 1e6,
            eta_m: n.eta_m,
            tau_m_us: n.tau_m * 1e6,
            delta_e_init: n.delta_e_init,
            drive_init: n.drive_init,
            drive_mode: n.drive_mode,
        }
    }
}

impl NoiseSection {
    pub fn to_noise(&self) -> NoiseConfig {
        NoiseConfig {
            t2star: self.t2star_us.map(us),
            tau_c: us(self.tau_c_us),
            eta_r: self.eta_r,
            tau_r: us(self.tau_r_us),
            eta_m: self.eta_m,
            tau_m: us(self.tau_m_us),
            delta_e_init: self.delta_e_init,
            drive_init: self.drive_init,
            drive_mode: self.drive_mode,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSection {
    pub noise_dt_ns: f64,
    pub free_step_max_ns: f64,
    pub pulse_substeps: usize,
    pub frame: Frame,
    pub pulse_model: PulseModel,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        let i = IntegratorConfig::default();
        IntegratorSection {
            noise_dt_ns: i.noise_dt * 1e9,
            free_step_max_ns: i.free_step_max * 1e9,
            pulse_substeps: i.pulse_substeps,
            frame: i.frame,
            pulse_model: i.pulse_model,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum SamplingSection {
    Echo { stride: usize },
    UniformUs { interval: f64 },
    TimesUs(Vec<f64>),
}

impl Default for SamplingSection {
    fn default() -> Self {
        SamplingSection::Echo { stride: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub n_realizations: usize,
    pub base_seed: u64,
    /// Not part of the echoed config: results do not depend on it.
    #[serde(default, skip_serializing)]
    pub workers: usize,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection { n_realizations: 200, base_seed: 1, workers: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    pub start_mhz: f64,
    pub stop_mhz: f64,
    pub step_mhz: f64,
    /// Fixed pulse count; `None` picks the length with an on-resonance phase near π/2.
    pub n_pulses: Option<usize>,
}

impl Default for ScanSection {
    fn default() -> Self {
        ScanSection { start_mhz: 0.05, stop_mhz: 0.15, step_mhz: 0.005, n_pulses: None }
    }
}

impl ScanSection {
    pub fn grid(&self) -> Result<Vec<f64>> {
        if !(self.step_mhz > 0.0 && self.stop_mhz >= self.start_mhz) {
            return Err(Error::Config("scan needs step_mhz > 0 and stop_mhz >= start_mhz".into()));
        }
        let n = ((self.stop_mhz - self.start_mhz) / self.step_mhz + 1e-9).floor() as usize;
        Ok((0..=n).map(|k| mhz(self.start_mhz + k as f64 * self.step_mhz)).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub observable: DecayObservable,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection { observable: DecayObservable::Envelope }
    }
}

/// Everything a command needs; serialized back verbatim into every output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub sensor: SensorSection,
    #[serde(default)]
    pub drive: DriveSection,
    #[serde(default)]
    pub signal: SignalSection,
    #[serde(default)]
    pub sequence: SequenceSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub scan: ScanSection,
    #[serde(default)]
    pub table1: Table1Settings,
    /// Like `workers`, excluded from the echo and the hash.
    #[serde(default = "default_out", skip_serializing)]
    pub output_dir: String,
}

fn default_out() -> String {
    "out".into()
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            sensor: SensorSection::default(),
            drive: DriveSection::default(),
            signal: SignalSection::default(),
            sequence: SequenceSection::default(),
            noise: NoiseSection::default(),
            integrator: IntegratorSection::default(),
            sampling: SamplingSection::default(),
            ensemble: EnsembleSection::default(),
            analysis: AnalysisSection::default(),
            scan: ScanSection::default(),
            table1: Table1Settings::default(),
            output_dir: default_out(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        // serde_json reports "at line L column C".
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the compact JSON echo, lowercase hex.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(hex(&Sha256::digest(&bytes)))
    }

    pub fn ensemble_config(&self) -> EnsembleConfig {
        EnsembleConfig::new(self.ensemble.n_realizations, self.ensemble.base_seed, self.ensemble.workers)
    }

    pub fn sensor(&self) -> Result<StaticSensor> {
        let s = &self.sensor;
        StaticSensor::from_mhz(s.d_mhz, s.ex_mhz, s.ey_mhz, s.delta_bz_mhz)
    }

    pub fn drive(&self, sensor: &StaticSensor) -> Result<DriveConfig> {
        let d = &self.drive;
        let mut drive = DriveConfig::resonant(sensor, mhz(d.rf_rabi_mhz), mhz(d.mw_rabi_mhz));
        if let Some(f) = d.rf_freq_mhz {
            drive.rf_freq = mhz(f);
        }
        if let Some(f) = d.mw_freq_mhz {
            drive.mw_freq = mhz(f);
        }
        drive.mw_phase = d.mw_phase;
        drive.validate()?;
        if !d.off_resonance && !drive.is_resonant(sensor) {
            return Err(Error::Config(
                "drive is off resonance (rf_freq != 2 E_x or mw_freq != D + E_x); set drive.off_resonance = true".into(),
            ));
        }
        if drive.mw_rabi <= drive.rf_rabi {
            return Err(Error::Config(format!(
                "MW Rabi frequency {} MHz must exceed the RF Rabi frequency {} MHz",
                d.mw_rabi_mhz, d.rf_rabi_mhz
            )));
        }
        Ok(drive)
    }

    pub fn tau(&self) -> Result<f64> {
        match self.sequence.tau_us {
            Some(t) => Ok(us(t)),
            None => resonance_tau(mhz(self.sequence.resonance_mhz)),
        }
    }

    fn pattern_len(&self) -> usize {
        match (&self.sequence.phases, self.sequence.family.as_str()) {
            (Some(p), _) if !p.is_empty() => p.len(),
            (_, "ldd8b") => 8,
            _ => 1,
        }
    }

    pub fn n_pulses(&self, tau: f64) -> Result<usize> {
        match (self.sequence.n_pulses, self.sequence.duration_us) {
            (Some(n), None) => Ok(n),
            (None, Some(d)) => {
                let block = self.pattern_len();
                Ok(((us(d) / (2.0 * tau)).ceil() as usize).div_ceil(block).max(1) * block)
            }
            _ => Err(Error::Config("sequence needs exactly one of n_pulses or duration_us".into())),
        }
    }

    /// Resolve into an engine scenario with `n_pulses` pulses (or the configured count).
    pub fn scenario_with(&self, n_pulses: Option<usize>) -> Result<Scenario> {
        let sensor = self.sensor()?;
        let drive = self.drive(&sensor)?;
        let tau = self.tau()?;
        let n = match n_pulses {
            Some(n) => n,
            None => self.n_pulses(tau)?,
        };
        let tp = match self.integrator.pulse_model {
            PulseModel::Finite => drive.pulse_duration(),
            PulseModel::Ideal => 0.0,
        };
        let phases = self.sequence.phases.clone().unwrap_or_default();
        let sequence = build_sequence_with_layout(&self.sequence.family, n, tau, tp, &phases, self.sequence.layout)?;
        let signal = SignalConfig::at_detuning(&sensor, mhz(self.signal.coupling_mhz), mhz(self.signal.detuning_mhz));
        let sampling = match &self.sampling {
            SamplingSection::Echo { stride } => SampleSchedule::Echo { stride: *stride },
            SamplingSection::UniformUs { interval } => SampleSchedule::Uniform { interval: us(*interval) },
            SamplingSection::TimesUs(t) => SampleSchedule::Times(t.iter().map(|&x| us(x)).collect()),
        };
        let i = &self.integrator;
        let sc = Scenario {
            sensor,
            drive,
            signal,
            sequence,
            noise: self.noise.to_noise(),
            integrator: IntegratorConfig {
                noise_dt: ns(i.noise_dt_ns),
                free_step_max: ns(i.free_step_max_ns),
                pulse_substeps: i.pulse_substeps,
                frame: i.frame,
                pulse_model: i.pulse_model,
            },
            sampling,
            initial: InitialState::Plus,
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn scenario(&self) -> Result<Scenario> {
        self.scenario_with(None)
    }

    /// Non-fatal physics warnings for a resolved scenario.
    pub fn warnings(sc: &Scenario) -> Vec<String> {
        let mut w = sc.drive.hierarchy_warnings(sc.noise.delta_e_std());
        w.extend(sc.signal.validity_warnings(&sc.sensor));
        w
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
