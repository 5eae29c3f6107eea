//! Ornstein-Uhlenbeck noise channels: the transverse fluctuation δ_E and the
//! relative amplitude errors η_r (RF) and η_m (MW).
//!
//! Each channel owns a ChaCha8 stream seeded from (base seed, trajectory
//! index, channel id), so a trajectory's noise path depends on nothing but
//! those three numbers.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Correlation time and diffusion constant of one OU channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    pub tau: f64,
    pub diffusion: f64,
}

impl OuParams {
    pub fn new(tau: f64, diffusion: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("OU correlation time must be > 0, got {tau}")));
        }
        if !(diffusion >= 0.0 && diffusion.is_finite()) {
            return Err(Error::InvalidParameter(format!("OU diffusion must be >= 0, got {diffusion}")));
        }
        Ok(OuParams { tau, diffusion })
    }

    /// Params whose stationary standard deviation is `std`.
    pub fn from_std(tau: f64, std: f64) -> Result<Self> {
        Self::new(tau, 2.0 * std * std / tau)
    }

    pub fn stationary_variance(&self) -> f64 {
        self.diffusion * self.tau / 2.0
    }

    pub fn stationary_std(&self) -> f64 {
        self.stationary_variance().sqrt()
    }
}

/// How a channel's first value is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Draw from the stationary distribution.
    #[default]
    Stationary,
    /// Start at exactly zero.
    Zero,
}

/// A single OU channel with its own random stream.
#[derive(Clone, Debug)]
pub struct OuProcess {
    params: OuParams,
    current: f64,
    rng: ChaCha8Rng,
}

impl OuProcess {
    pub fn new(params: OuParams, seed: u64, init: InitMode) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let current = match init {
            InitMode::Stationary => params.stationary_std() * rng.sample::<f64, _>(StandardNormal),
            InitMode::Zero => 0.0,
        };
        OuProcess { params, current, rng }
    }

    pub fn with_value(params: OuParams, seed: u64, value: f64) -> Self {
        OuProcess { params, current: value, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn params(&self) -> &OuParams {
        &self.params
    }

    pub fn value(&self) -> f64 {
        self.current
    }

    /// Exact update over `dt`, one Gaussian draw.
    pub fn step(&mut self, dt: f64) -> Result<f64> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("OU step must be > 0, got {dt}")));
        }
        let x = dt / self.params.tau;
        let decay = (-x).exp();
        let spread = (self.params.stationary_variance() * -(-2.0 * x).exp_m1()).sqrt();
        let n: f64 = self.rng.sample(StandardNormal);
        self.current = self.current * decay + spread * n;
        Ok(self.current)
    }

    pub fn path(&mut self, dt: f64, steps: usize) -> Result<Vec<f64>> {
        (0..steps).map(|_| self.step(dt)).collect()
    }
}

/// Free-function form of [`OuProcess::step`].
pub fn ou_step(process: &mut OuProcess, dt: f64) -> Result<f64> {
    process.step(dt)
}

/// Diffusion constant of δ_E for a target dephasing time.
///
/// c = 4/(T₂*²·τ_c): the stationary standard deviation is √2/T₂*, which
/// makes the quasi-static free-induction decay of the clock coherence
/// exp[−(t/T₂*)²].
pub fn diffusion_from_t2star(t2star: f64, tau_c: f64) -> Result<f64> {
    if !(t2star > 0.0 && tau_c > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "T2* and tau_c must be positive, got {t2star}, {tau_c}"
        )));
    }
    Ok(4.0 / (t2star * t2star * tau_c))
}

/// c = 2η²Ω²/τ for an absolute Rabi error with stationary std ηΩ.
pub fn diffusion_from_relative_error(eta: f64, rabi: f64, tau: f64) -> Result<f64> {
    if !(eta >= 0.0 && rabi > 0.0 && tau > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need eta >= 0, rabi > 0, tau > 0; got {eta}, {rabi}, {tau}"
        )));
    }
    Ok(2.0 * eta * eta * rabi * rabi / tau)
}

/// Whether drive-amplitude errors evolve during a run or stay frozen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveErrorMode {
    #[default]
    Ou,
    QuasiStatic,
}

/// Noise model for a run. Drive errors are relative (dimensionless).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Dephasing time setting the δ_E amplitude; `None` disables δ_E.
    pub t2star: Option<f64>,
    pub tau_c: f64,
    pub eta_r: f64,
    pub tau_r: f64,
    pub eta_m: f64,
    pub tau_m: f64,
    pub delta_e_init: InitMode,
    pub drive_init: InitMode,
    pub drive_mode: DriveErrorMode,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            t2star: None,
            tau_c: 20e-6,
            eta_r: 0.005,
            tau_r: 500e-6,
            eta_m: 0.005,
            tau_m: 500e-6,
            delta_e_init: InitMode::Stationary,
            drive_init: InitMode::Stationary,
            drive_mode: DriveErrorMode::Ou,
        }
    }
}

impl NoiseConfig {
    /// No noise on any channel.
    pub fn quiet() -> Self {
        NoiseConfig { t2star: None, eta_r: 0.0, eta_m: 0.0, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.t2star {
            diffusion_from_t2star(t, self.tau_c)?;
        }
        for (name, eta, tau) in [("eta_r", self.eta_r, self.tau_r), ("eta_m", self.eta_m, self.tau_m)] {
            if !(eta >= 0.0 && eta.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {eta}")));
            }
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(Error::InvalidParameter(format!("correlation time for {name} must be > 0")));
            }
        }
        if !(self.tau_c > 0.0) {
            return Err(Error::InvalidParameter("tau_c must be > 0".into()));
        }
        Ok(())
    }

    pub fn delta_e_params(&self) -> Result<OuParams> {
        match self.t2star {
            Some(t) => OuParams::new(self.tau_c, diffusion_from_t2star(t, self.tau_c)?),
            None => OuParams::new(self.tau_c, 0.0),
        }
    }

    /// Stationary std of δ_E in rad/s.
    pub fn delta_e_std(&self) -> f64 {
        self.delta_e_params().map(|p| p.stationary_std()).unwrap_or(0.0)
    }

    /// Shortest correlation time among channels that actually fluctuate.
    pub fn shortest_active_tau(&self) -> Option<f64> {
        let mut taus = Vec::new();
        if self.t2star.is_some() {
            taus.push(self.tau_c);
        }
        if self.drive_mode == DriveErrorMode::Ou {
            if self.eta_r > 0.0 {
                taus.push(self.tau_r);
            }
            if self.eta_m > 0.0 {
                taus.push(self.tau_m);
            }
        }
        taus.into_iter().reduce(f64::min)
    }
}

/// Instantaneous noise values: δ_E in rad/s, η_r and η_m relative.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseValues {
    pub delta_e: f64,
    pub eta_r: f64,
    pub eta_m: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Channel {
    DeltaE = 0,
    EtaR = 1,
    EtaM = 2,
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one channel of one trajectory.
pub fn channel_seed(base_seed: u64, trajectory: u64, channel: Channel) -> u64 {
    splitmix64(splitmix64(splitmix64(base_seed) ^ trajectory) ^ (channel as u64).wrapping_add(0xA5A5))
}

/// The three independent channels driving one trajectory.
#[derive(Clone, Debug)]
pub struct NoiseChannelSet {
    pub delta_e: OuProcess,
    pub eta_r: OuProcess,
    pub eta_m: OuProcess,
    mode: DriveErrorMode,
}

impl NoiseChannelSet {
    pub fn new(cfg: &NoiseConfig, base_seed: u64, trajectory: u64) -> Result<Self> {
        cfg.validate()?;
        let seed = |ch| channel_seed(base_seed, trajectory, ch);
        let eta_r = OuParams::from_std(cfg.tau_r, cfg.eta_r)?;
        let eta_m = OuParams::from_std(cfg.tau_m, cfg.eta_m)?;
        // A frozen error has to start somewhere other than zero to matter.
        let drive_init = match cfg.drive_mode {
            DriveErrorMode::QuasiStatic => InitMode::Stationary,
            DriveErrorMode::Ou => cfg.drive_init,
        };
        Ok(NoiseChannelSet {
            delta_e: OuProcess::new(cfg.delta_e_params()?, seed(Channel::DeltaE), cfg.delta_e_init),
            eta_r: OuProcess::new(eta_r, seed(Channel::EtaR), drive_init),
            eta_m: OuProcess::new(eta_m, seed(Channel::EtaM), drive_init),
            mode: cfg.drive_mode,
        })
    }

    pub fn values(&self) -> NoiseValues {
        NoiseValues { delta_e: self.delta_e.value(), eta_r: self.eta_r.value(), eta_m: self.eta_m.value() }
    }

    pub fn step(&mut self, dt: f64) -> Result<NoiseValues> {
        self.delta_e.step(dt)?;
        if self.mode == DriveErrorMode::Ou {
            self.eta_r.step(dt)?;
            self.eta_m.step(dt)?;
        }
        Ok(self.values())
    }
}

/// One row of a noise-path dump.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NoiseSample {
    pub t: f64,
    pub delta_e: f64,
    pub eta_r: f64,
    pub eta_m: f64,
}

/// Sample a channel set on a uniform grid, starting with the initial value.
pub fn sample_path(set: &mut NoiseChannelSet, dt: f64, steps: usize) -> Result<Vec<NoiseSample>> {
    let mut out = Vec::with_capacity(steps + 1);
    let v = set.values();
    out.push(NoiseSample { t: 0.0, delta_e: v.delta_e, eta_r: v.eta_r, eta_m: v.eta_m });
    for k in 1..=steps {
        let v = set.step(dt)?;
        out.push(NoiseSample { t: k as f64 * dt, delta_e: v.delta_e, eta_r: v.eta_r, eta_m: v.eta_m });
    }
    Ok(out)
}

pub fn write_path_csv<W: Write>(mut w: W, path: &[NoiseSample]) -> Result<()> {
    writeln!(w, "t,delta_e,eta_r,eta_m")?;
    for s in path {
        writeln!(w, "{:e},{:e},{:e},{:e}", s.t, s.delta_e, s.eta_r, s.eta_m)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn variance(x: &[f64]) -> f64 {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
    }

    fn autocorr(x: &[f64], lag: usize) -> f64 {
        let n = x.len() - lag;
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let v = variance(x);
        (0..n).map(|i| (x[i] - m) * (x[i + lag] - m)).sum::<f64>() / (n as f64 * v)
    }

    #[test]
    fn deterministic_decay_without_diffusion() {
        let p = OuParams::new(2.0, 0.0).unwrap();
        let mut ou = OuProcess::with_value(p, 1, 3.0);
        let v = ou.step(0.5).unwrap();
        assert!((v - 3.0 * (-0.25f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn stationary_variance_from_zero_start() {
        let p = OuParams::new(1.0, 0.8).unwrap();
        let mut ou = OuProcess::new(p, 7, InitMode::Zero);
        let path = ou.path(0.1, 100_000).unwrap();
        let v = variance(&path[100..]);
        assert!((v / p.stationary_variance() - 1.0).abs() < 0.05, "variance {v}");
    }

    #[test]
    fn autocorrelation_is_exponential() {
        let p = OuParams::new(1.0, 2.0).unwrap();
        let mut ou = OuProcess::new(p, 11, InitMode::Stationary);
        let path = ou.path(0.1, 100_000).unwrap();
        for lag in (0..=30).step_by(3) {
            let r = autocorr(&path, lag);
            let expected = (-(lag as f64) * 0.1).exp();
            assert!((r - expected).abs() < 0.05, "lag {lag}: {r} vs {expected}");
        }
    }

    #[test]
    fn step_size_does_not_change_statistics() {
        let p = OuParams::new(1.0, 2.0).unwrap();
        let coarse = OuProcess::new(p, 3, InitMode::Stationary).path(0.5, 100_000).unwrap();
        let fine = OuProcess::new(p, 4, InitMode::Stationary).path(0.05, 200_000).unwrap();
        assert!((variance(&coarse) / variance(&fine) - 1.0).abs() < 0.06);
        let r_coarse = autocorr(&coarse, 1);
        let r_fine = autocorr(&fine, 10);
        assert!((r_coarse - r_fine).abs() < 0.05);
    }

    #[test]
    fn t2star_diffusion() {
        let c = diffusion_from_t2star(1.8e-6, 20e-6).unwrap();
        assert!((c - 4.0 / (1.8e-6f64.powi(2) * 20e-6)).abs() / c < 1e-14);
        let c2 = diffusion_from_t2star(3.6e-6, 20e-6).unwrap();
        assert!((c / c2 - 4.0).abs() < 1e-12);
        let p = OuParams::new(20e-6, c).unwrap();
        assert!((p.stationary_std() - 2f64.sqrt() / 1.8e-6).abs() / p.stationary_std() < 1e-12);
        assert!(diffusion_from_t2star(0.0, 1.0).is_err());
    }

    #[test]
    fn relative_error_diffusion() {
        let omega = crate::units::mhz(40.0);
        let c = diffusion_from_relative_error(0.005, omega, 500e-6).unwrap();
        let p = OuParams::new(500e-6, c).unwrap();
        assert!((p.stationary_std() - 0.005 * omega).abs() / (0.005 * omega) < 1e-12);
        assert_eq!(diffusion_from_relative_error(0.0, omega, 500e-6).unwrap(), 0.0);

        let mut ou = OuProcess::new(p, 5, InitMode::Stationary);
        let path = ou.path(50e-6, 100_000).unwrap();
        assert!((variance(&path).sqrt() / (0.005 * omega) - 1.0).abs() < 0.05);
    }

    #[test]
    fn zero_eta_stays_zero() {
        let cfg = NoiseConfig { eta_r: 0.0, eta_m: 0.0, ..Default::default() };
        let mut set = NoiseChannelSet::new(&cfg, 1, 0).unwrap();
        for _ in 0..100 {
            let v = set.step(1e-8).unwrap();
            assert_eq!((v.eta_r, v.eta_m), (0.0, 0.0));
        }
    }

    #[test]
    fn reproducible_and_seed_sensitive() {
        let cfg = NoiseConfig { t2star: Some(1.8e-6), ..Default::default() };
        let a = sample_path(&mut NoiseChannelSet::new(&cfg, 42, 3).unwrap(), 1e-8, 1000).unwrap();
        let b = sample_path(&mut NoiseChannelSet::new(&cfg, 42, 3).unwrap(), 1e-8, 1000).unwrap();
        let c = sample_path(&mut NoiseChannelSet::new(&cfg, 42, 4).unwrap(), 1e-8, 1000).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn channels_are_uncorrelated() {
        let cfg = NoiseConfig {
            t2star: Some(1.0),
            tau_c: 1.0,
            eta_r: 1.0,
            tau_r: 1.0,
            eta_m: 1.0,
            tau_m: 1.0,
            ..Default::default()
        };
        let path = sample_path(&mut NoiseChannelSet::new(&cfg, 9, 0).unwrap(), 1.0, 100_000).unwrap();
        let cols: [Vec<f64>; 3] = [
            path.iter().map(|s| s.delta_e).collect(),
            path.iter().map(|s| s.eta_r).collect(),
            path.iter().map(|s| s.eta_m).collect(),
        ];
        let corr = |a: &[f64], b: &[f64]| {
            let n = a.len() as f64;
            let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
            let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
            cov / (variance(a) * variance(b)).sqrt()
        };
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert!(corr(&cols[i], &cols[j]).abs() < 0.02);
        }
    }

    #[test]
    fn quasi_static_freezes_drive_errors() {
        let cfg = NoiseConfig { drive_mode: DriveErrorMode::QuasiStatic, ..Default::default() };
        let mut set = NoiseChannelSet::new(&cfg, 1, 0).unwrap();
        let v0 = set.values();
        assert!(v0.eta_r != 0.0);
        let v1 = set.step(1e-4).unwrap();
        assert_eq!((v0.eta_r, v0.eta_m), (v1.eta_r, v1.eta_m));
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let cfg = NoiseConfig { t2star: Some(1e-6), ..Default::default() };
        let path = sample_path(&mut NoiseChannelSet::new(&cfg, 1, 0).unwrap(), 1e-8, 5).unwrap();
        let mut buf = Vec::new();
        write_path_csv(&mut buf, &path).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,delta_e,eta_r,eta_m\n"));
        assert_eq!(text.lines().count(), 7);
    }

    #[test]
    fn rejects_bad_step() {
        let mut ou = OuProcess::new(OuParams::new(1.0, 1.0).unwrap(), 0, InitMode::Zero);
        assert!(ou.step(0.0).is_err());
        assert!(OuParams::new(0.0, 1.0).is_err());
    }
}
