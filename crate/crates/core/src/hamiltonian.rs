//! Lab-frame, rotating-frame and RWA effective Hamiltonians of the driven
//! sensor.
//!
//! The rotating frame is the interaction picture of H₀ = D S_z² + E_x(S_x² − S_y²).
//! The effective (RWA) matrix is only defined on resonance, ω_rf = 2E_x and
//! ω = D + E_x; static δ_Bz and E_y enter the lab and rotating frames only.

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseValues;
use crate::spin::{
    c, spin_operators, static_hamiltonian, transverse_x, SpinMatrix, StaticSensor, MINUS_ONE,
    PLUS_ONE, ZERO,
};

/// 2×2 operator on the {|+1⟩, |−1⟩} subspace.
pub type Qubit = Matrix2<Complex64>;

const RESONANCE_TOL: f64 = 1e-9;

/// Continuous RF drive and pulsed MW drive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveConfig {
    pub rf_rabi: f64,
    pub rf_freq: f64,
    pub mw_rabi: f64,
    pub mw_freq: f64,
    /// Offset added to every pulse phase.
    #[serde(default)]
    pub mw_phase: f64,
}

impl DriveConfig {
    /// Drive tuned to ω_rf = 2E_x and ω = D + E_x.
    pub fn resonant(sensor: &StaticSensor, rf_rabi: f64, mw_rabi: f64) -> Self {
        DriveConfig {
            rf_rabi,
            rf_freq: 2.0 * sensor.ex,
            mw_rabi,
            mw_freq: sensor.d + sensor.ex,
            mw_phase: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rf_rabi", self.rf_rabi),
            ("rf_freq", self.rf_freq),
            ("mw_rabi", self.mw_rabi),
            ("mw_freq", self.mw_freq),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !self.mw_phase.is_finite() {
            return Err(Error::InvalidParameter("mw_phase must be finite".into()));
        }
        Ok(())
    }

    /// Length of a 2π pulse, 2π/Ω.
    pub fn pulse_duration(&self) -> f64 {
        std::f64::consts::TAU / self.mw_rabi
    }

    pub fn is_resonant(&self, sensor: &StaticSensor) -> bool {
        close(self.rf_freq, 2.0 * sensor.ex) && close(self.mw_freq, sensor.d + sensor.ex)
    }

    /// Messages for violations of Ω ≫ Ω_rf ≫ std(δ_E).
    pub fn hierarchy_warnings(&self, delta_e_std: f64) -> Vec<String> {
        let mut out = Vec::new();
        if self.mw_rabi < 5.0 * self.rf_rabi {
            out.push(format!(
                "MW Rabi {:.3e} rad/s is not much larger than RF Rabi {:.3e} rad/s",
                self.mw_rabi, self.rf_rabi
            ));
        }
        if delta_e_std > 0.0 && self.rf_rabi < 5.0 * delta_e_std {
            out.push(format!(
                "RF Rabi {:.3e} rad/s is not much larger than the delta_E spread {:.3e} rad/s",
                self.rf_rabi, delta_e_std
            ));
        }
        out
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= RESONANCE_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Weak AC field g cos(ω_ac t) along z.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SignalConfig {
    pub coupling: f64,
    pub freq: f64,
}

impl SignalConfig {
    pub fn none() -> Self {
        SignalConfig { coupling: 0.0, freq: 0.0 }
    }

    /// Signal at ω_ac = 2E_x + Δω.
    pub fn at_detuning(sensor: &StaticSensor, coupling: f64, detuning: f64) -> Self {
        SignalConfig { coupling, freq: 2.0 * sensor.ex + detuning }
    }

    /// Δω = ω_ac − 2E_x
    pub fn detuning(&self, sensor: &StaticSensor) -> f64 {
        self.freq - 2.0 * sensor.ex
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.coupling.is_finite() && self.freq.is_finite()) {
            return Err(Error::InvalidParameter("signal parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn validity_warnings(&self, sensor: &StaticSensor) -> Vec<String> {
        if self.coupling != 0.0 && self.detuning(sensor).abs() > 0.1 * sensor.ex {
            vec![format!(
                "signal detuning {:.3e} rad/s is not small compared with E_x = {:.3e} rad/s",
                self.detuning(sensor),
                sensor.ex
            )]
        } else {
            Vec::new()
        }
    }

    /// ω_s(t) = g cos(ω_ac t)
    pub fn field(&self, t: f64) -> f64 {
        self.coupling * (self.freq * t).cos()
    }
}

/// Evaluation context for the time-dependent Hamiltonians.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameSnapshot {
    pub time: f64,
    pub noise: NoiseValues,
    pub mw_on: bool,
    pub mw_phase: f64,
}

impl FrameSnapshot {
    pub fn free(time: f64, noise: NoiseValues) -> Self {
        FrameSnapshot { time, noise, mw_on: false, mw_phase: 0.0 }
    }

    pub fn pulse(time: f64, noise: NoiseValues, phase: f64) -> Self {
        FrameSnapshot { time, noise, mw_on: true, mw_phase: phase }
    }
}

/// H₀ = D S_z² + E_x(S_x² − S_y²)
pub fn frame_hamiltonian(sensor: &StaticSensor) -> SpinMatrix {
    static_hamiltonian(&StaticSensor { ey: 0.0, delta_bz: 0.0, ..*sensor })
}

/// Everything in the lab Hamiltonian except H₀.
fn lab_perturbation(
    sensor: &StaticSensor,
    drive: &DriveConfig,
    signal: &SignalConfig,
    snap: &FrameSnapshot,
) -> SpinMatrix {
    let (sx, _, sz) = spin_operators();
    let t = snap.time;
    let rf = drive.rf_rabi * (1.0 + snap.noise.eta_r) * (drive.rf_freq * t).cos();
    let z_coeff = sensor.delta_bz + signal.field(t) + rf;
    let mut v = transverse_x().scale(snap.noise.delta_e) + sz.scale(z_coeff);
    if sensor.ey != 0.0 {
        v = v + crate::spin::transverse_y().scale(sensor.ey);
    }
    if snap.mw_on {
        let mw = drive.mw_rabi * (1.0 + snap.noise.eta_m) * (drive.mw_freq * t + drive.mw_phase + snap.mw_phase).cos();
        v = v + sx.scale(mw);
    }
    v
}

/// Full lab-frame Hamiltonian with RF, MW, signal and noise terms.
pub fn lab_frame_hamiltonian(
    sensor: &StaticSensor,
    drive: &DriveConfig,
    signal: &SignalConfig,
    snap: &FrameSnapshot,
) -> SpinMatrix {
    frame_hamiltonian(sensor) + lab_perturbation(sensor, drive, signal, snap)
}

/// Energies of H₀ in (|+⟩, |0⟩, |−⟩) order.
pub fn frame_energies(sensor: &StaticSensor) -> [f64; 3] {
    [sensor.d + sensor.ex, 0.0, sensor.d - sensor.ex]
}

/// U₀(t) = exp(−iH₀t) in closed form.
pub fn frame_propagator(sensor: &StaticSensor, t: f64) -> SpinMatrix {
    let e = frame_energies(sensor);
    let phases = SpinMatrix::from_fn(|r, col| {
        if r == col {
            Complex64::from_polar(1.0, -e[r] * t)
        } else {
            c(0.0)
        }
    });
    SpinMatrix::from_dressed(&phases)
}

/// Interaction-picture Hamiltonian U₀†HU₀ − H₀ = U₀†(H − H₀)U₀.
pub fn rotating_frame_hamiltonian(
    sensor: &StaticSensor,
    drive: &DriveConfig,
    signal: &SignalConfig,
    snap: &FrameSnapshot,
) -> SpinMatrix {
    let v = lab_perturbation(sensor, drive, signal, snap).to_dressed();
    let e = frame_energies(sensor);
    let t = snap.time;
    let rotated = SpinMatrix::from_fn(|j, k| v.get(j, k) * Complex64::from_polar(1.0, (e[j] - e[k]) * t));
    SpinMatrix::from_dressed(&rotated)
}

/// RWA effective Hamiltonian in the (|+1⟩, |0⟩, |−1⟩) basis.
pub fn effective_hamiltonian(
    sensor: &StaticSensor,
    drive: &DriveConfig,
    signal: &SignalConfig,
    snap: &FrameSnapshot,
) -> Result<SpinMatrix> {
    if !close(drive.rf_freq, 2.0 * sensor.ex) {
        return Err(Error::Precondition(format!(
            "effective Hamiltonian needs omega_rf = 2 E_x ({:.6e} != {:.6e})",
            drive.rf_freq,
            2.0 * sensor.ex
        )));
    }
    if snap.mw_on && !close(drive.mw_freq, sensor.d + sensor.ex) {
        return Err(Error::Precondition(format!(
            "effective Hamiltonian needs omega = D + E_x ({:.6e} != {:.6e})",
            drive.mw_freq,
            sensor.d + sensor.ex
        )));
    }
    Ok(effective_unchecked(drive, signal.coupling, signal.detuning(sensor), snap))
}

/// [`effective_hamiltonian`] without the resonance checks; `detuning` is Δω.
pub fn effective_unchecked(drive: &DriveConfig, coupling: f64, detuning: f64, snap: &FrameSnapshot) -> SpinMatrix {
    let n = &snap.noise;
    let h = 0.5 * (drive.rf_rabi * (1.0 + n.eta_r) + coupling * (detuning * snap.time).cos());
    let mut m = SpinMatrix::zeros();
    m.0[(PLUS_ONE, PLUS_ONE)] = c(h);
    m.0[(MINUS_ONE, MINUS_ONE)] = c(-h);
    m.0[(PLUS_ONE, MINUS_ONE)] = c(n.delta_e);
    m.0[(MINUS_ONE, PLUS_ONE)] = c(n.delta_e);
    if snap.mw_on {
        let amp = std::f64::consts::SQRT_2 / 4.0 * (1.0 + n.eta_m) * drive.mw_rabi;
        let up = Complex64::from_polar(amp, -(drive.mw_phase + snap.mw_phase));
        m.0[(PLUS_ONE, ZERO)] = up;
        m.0[(MINUS_ONE, ZERO)] = up;
        m.0[(ZERO, PLUS_ONE)] = up.conj();
        m.0[(ZERO, MINUS_ONE)] = up.conj();
    }
    m
}

/// Pauli matrices divided by two on {|+1⟩, |−1⟩}.
pub fn half_pauli() -> (Qubit, Qubit) {
    let z = Qubit::new(c(0.5), c(0.0), c(0.0), c(-0.5));
    let x = Qubit::new(c(0.0), c(0.5), c(0.5), c(0.0));
    (z, x)
}

/// H_free = [Ω_rf(1 + η_r) + g cos(Δω t)]σ_z + 2δ_E σ_x with σ = Pauli/2.
pub fn two_level_free_hamiltonian(drive: &DriveConfig, coupling: f64, detuning: f64, snap: &FrameSnapshot) -> Qubit {
    let (sz, sx) = half_pauli();
    let n = &snap.noise;
    sz * c(drive.rf_rabi * (1.0 + n.eta_r) + coupling * (detuning * snap.time).cos()) + sx * c(2.0 * n.delta_e)
}

/// Project a 3×3 operator onto {|+1⟩, |−1⟩}.
pub fn project_two_level(m: &SpinMatrix) -> Qubit {
    Qubit::new(
        m.get(PLUS_ONE, PLUS_ONE),
        m.get(PLUS_ONE, MINUS_ONE),
        m.get(MINUS_ONE, PLUS_ONE),
        m.get(MINUS_ONE, MINUS_ONE),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{expm_taylor, rng_f64};
    use crate::units::mhz;

    fn snap_with(t: f64, de: f64, er: f64, em: f64, on: bool, phase: f64) -> FrameSnapshot {
        FrameSnapshot { time: t, noise: NoiseValues { delta_e: de, eta_r: er, eta_m: em }, mw_on: on, mw_phase: phase }
    }

    fn toy() -> (StaticSensor, DriveConfig, SignalConfig) {
        let s = StaticSensor::new(5.0, 0.7, 0.0, 0.0).unwrap();
        let d = DriveConfig::resonant(&s, 0.3, 0.9);
        let g = SignalConfig::at_detuning(&s, 0.05, 0.02);
        (s, d, g)
    }

    #[test]
    fn lab_reduces_to_static_without_drives() {
        let s = StaticSensor::new(5.0, 0.7, 0.2, 0.1).unwrap();
        let d = DriveConfig { rf_rabi: 0.0, rf_freq: 1.4, mw_rabi: 0.0, mw_freq: 5.7, mw_phase: 0.0 };
        let h = lab_frame_hamiltonian(&s, &d, &SignalConfig::none(), &snap_with(1.3, 0.0, 0.0, 0.0, true, 0.0));
        assert!((h - static_hamiltonian(&s)).max_abs() < 1e-15);
    }

    #[test]
    fn lab_mw_term_at_origin() {
        let (s, d, _) = toy();
        let off = lab_frame_hamiltonian(&s, &d, &SignalConfig::none(), &snap_with(0.0, 0.0, 0.0, 0.01, false, 0.0));
        let on = lab_frame_hamiltonian(&s, &d, &SignalConfig::none(), &snap_with(0.0, 0.0, 0.0, 0.01, true, 0.0));
        let (sx, _, _) = spin_operators();
        assert!(((on - off) - sx.scale(d.mw_rabi * 1.01)).max_abs() < 1e-15);
    }

    #[test]
    fn lab_matches_term_by_term_substitution() {
        let mut seed = 17u64;
        for _ in 0..20 {
            let t = 10.0 * rng_f64(&mut seed);
            let (de, er, em, ph) = (rng_f64(&mut seed), 0.1 * rng_f64(&mut seed), 0.1 * rng_f64(&mut seed), 6.0 * rng_f64(&mut seed));
            let (s, d, g) = toy();
            let h = lab_frame_hamiltonian(&s, &d, &g, &snap_with(t, de, er, em, true, ph));
            // Entry-wise expansion of the operator sum.
            let zc = g.coupling * (g.freq * t).cos() + d.rf_rabi * (1.0 + er) * (d.rf_freq * t).cos();
            let xc = d.mw_rabi * (1.0 + em) * (d.mw_freq * t + ph).cos() / 2f64.sqrt();
            let expect = [
                [c(s.d + zc), c(xc), c(s.ex + de)],
                [c(xc), c(0.0), c(xc)],
                [c(s.ex + de), c(xc), c(s.d - zc)],
            ];
            for i in 0..3 {
                for j in 0..3 {
                    assert!((h.get(i, j) - expect[i][j]).norm() < 1e-13);
                }
            }
            assert!(h.hermiticity_error() < 1e-12);
        }
    }

    #[test]
    fn rotating_frame_vs_numeric_transform() {
        let (s, d, g) = toy();
        let h0 = frame_hamiltonian(&s);
        let mut seed = 5u64;
        for _ in 0..10 {
            let t = 3.0 * rng_f64(&mut seed);
            let snap = snap_with(t, 0.11, 0.02, -0.03, true, 0.4);
            let h = lab_frame_hamiltonian(&s, &d, &g, &snap);
            let u0 = expm_taylor(&h0.scale_c(Complex64::new(0.0, -t)));
            let step = 1e-4;
            let udag = |tt: f64| expm_taylor(&h0.scale_c(Complex64::new(0.0, tt)));
            // fourth-order central difference of U₀†
            let du = (udag(t - 2.0 * step).scale(1.0) - udag(t - step).scale(8.0) + udag(t + step).scale(8.0)
                - udag(t + 2.0 * step))
            .scale(1.0 / (12.0 * step));
            let numeric = u0.adjoint() * h * u0 + (du * u0).scale_c(Complex64::i());
            let closed = rotating_frame_hamiltonian(&s, &d, &g, &snap);
            assert!((numeric - closed).max_abs() < 1e-9, "t = {t}: {}", (numeric - closed).max_abs());
        }
    }

    #[test]
    fn rotating_frame_vanishes_without_drives() {
        let s = StaticSensor::new(5.0, 0.7, 0.0, 0.0).unwrap();
        let d = DriveConfig { rf_rabi: 0.0, ..DriveConfig::resonant(&s, 0.0, 0.0) };
        let h = rotating_frame_hamiltonian(&s, &d, &SignalConfig::none(), &snap_with(2.2, 0.0, 0.0, 0.0, true, 0.0));
        assert!(h.max_abs() < 1e-15);
    }

    #[test]
    fn rotating_frame_diagonal_entry() {
        let (s, d, g) = toy();
        let t = 1.7;
        let h = rotating_frame_hamiltonian(&s, &d, &g, &snap_with(t, 0.0, 0.01, 0.0, false, 0.0));
        let a = d.rf_rabi * 1.01 * (d.rf_freq * t).cos() + g.field(t);
        assert!((h.get(0, 0) - c(a * (2.0 * s.ex * t).cos())).norm() < 1e-13);
        assert!((h.get(2, 2) + c(a * (2.0 * s.ex * t).cos())).norm() < 1e-13);
        // δ_E(S_x² − S_y²) commutes with H₀ and survives unrotated.
        let h2 = rotating_frame_hamiltonian(&s, &d, &SignalConfig::none(), &snap_with(t, 0.2, -1.0, 0.0, false, 0.0));
        assert!((h2.get(0, 2) - c(0.2)).norm() < 1e-13);
    }

    #[test]
    fn effective_requires_resonance() {
        let (s, mut d, g) = toy();
        d.rf_freq *= 1.01;
        assert!(effective_hamiltonian(&s, &d, &g, &FrameSnapshot::default()).is_err());
        let (s, mut d, g) = toy();
        d.mw_freq += 0.1;
        assert!(effective_hamiltonian(&s, &d, &g, &snap_with(0.0, 0.0, 0.0, 0.0, true, 0.0)).is_err());
    }

    #[test]
    fn effective_free_part_matches_two_level() {
        let (s, d, g) = toy();
        let snap = snap_with(0.9, 0.04, 0.003, 0.0, false, 0.0);
        let h = effective_hamiltonian(&s, &d, &g, &snap).unwrap();
        let two = two_level_free_hamiltonian(&d, g.coupling, g.detuning(&s), &snap);
        assert!((project_two_level(&h) - two).norm() < 1e-15);
        for k in 0..3 {
            assert_eq!(h.get(ZERO, k), c(0.0));
        }
    }

    #[test]
    fn two_level_limits() {
        let d = DriveConfig { rf_rabi: 2.0, rf_freq: 1.0, mw_rabi: 10.0, mw_freq: 1.0, mw_phase: 0.0 };
        let snap = snap_with(0.0, 0.0, 0.1, 0.0, false, 0.0);
        let h = two_level_free_hamiltonian(&d, 0.0, 1.0, &snap);
        assert_eq!(h, Qubit::new(c(1.1), c(0.0), c(0.0), c(-1.1)));
        let dw = 3.0;
        let snap = snap_with(std::f64::consts::FRAC_PI_2 / dw, 0.0, 0.0, 0.0, false, 0.0);
        let with = two_level_free_hamiltonian(&d, 0.5, dw, &snap);
        let without = two_level_free_hamiltonian(&d, 0.0, dw, &snap);
        assert!((with - without).norm() < 1e-15);
    }

    #[test]
    fn pulse_block_structure() {
        let s = StaticSensor::from_mhz(2870.0, 20.0, 0.0, 0.0).unwrap();
        let d = DriveConfig::resonant(&s, mhz(4.0), mhz(40.0));
        let h = effective_hamiltonian(&s, &d, &SignalConfig::none(), &snap_with(0.0, 0.0, 0.0, 0.0, true, 0.0)).unwrap();
        let dressed = h.to_dressed();
        // |0⟩↔|+⟩ coupling Ω/2, |+⟩↔|−⟩ coupling Ω_rf/2, nothing else.
        assert!((dressed.get(0, 1) - c(d.mw_rabi / 2.0)).norm() < 1e-6);
        assert!((dressed.get(0, 2) - c(d.rf_rabi / 2.0)).norm() < 1e-6);
        assert!(dressed.get(1, 2).norm() < 1e-6);
        for k in 0..3 {
            assert!(dressed.get(k, k).norm() < 1e-6);
        }
    }

    #[test]
    fn mw_phase_rotates_coupling() {
        let (s, d, g) = toy();
        let h = effective_hamiltonian(&s, &d, &g, &snap_with(0.0, 0.0, 0.0, 0.0, true, 0.5)).unwrap();
        let amp = 2f64.sqrt() / 4.0 * d.mw_rabi;
        assert!((h.get(0, 1) - Complex64::from_polar(amp, -0.5)).norm() < 1e-15);
        assert!((h.get(1, 2) - Complex64::from_polar(amp, 0.5)).norm() < 1e-15);
        assert!(h.hermiticity_error() < 1e-15);
    }

    #[test]
    fn rwa_secular_part() {
        // Averaging the rotating-frame matrix over one period of 2E_x leaves
        // the effective matrix up to O(Ω_rf/4E_x).
        let s = StaticSensor::new(50.0, 10.0, 0.0, 0.0).unwrap();
        let d = DriveConfig::resonant(&s, 0.4, 0.0);
        let period = std::f64::consts::TAU / (2.0 * s.ex);
        let n = 4000;
        let mut avg = SpinMatrix::zeros();
        for k in 0..n {
            let t = (k as f64 + 0.5) / n as f64 * period;
            avg = avg + rotating_frame_hamiltonian(&s, &d, &SignalConfig::none(), &snap_with(t, 0.05, 0.0, 0.0, false, 0.0));
        }
        avg = avg.scale(1.0 / n as f64);
        let eff = effective_hamiltonian(&s, &d, &SignalConfig::none(), &snap_with(0.0, 0.05, 0.0, 0.0, false, 0.0)).unwrap();
        assert!((avg - eff).max_abs() < d.rf_rabi * d.rf_rabi / (4.0 * s.ex));
    }

    #[test]
    fn clock_splitting_is_second_order_in_field() {
        let s = StaticSensor::from_mhz(2870.0, 8.0, 0.0, 0.0).unwrap();
        let split = |b: f64| {
            let es = crate::spin::eigensystem(&s.with_delta_bz(b));
            es.energies[0] - es.energies[2]
        };
        let base = split(0.0);
        let fields: Vec<f64> = (0..6).map(|k| s.ex * 1e-4 * 2f64.powi(k)).collect();
        let shifts: Vec<f64> = fields.iter().map(|&b| split(b) - base).collect();
        let slope = (shifts[5].ln() - shifts[0].ln()) / (fields[5].ln() - fields[0].ln());
        assert!((slope - 2.0).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn hierarchy_warning() {
        let s = StaticSensor::from_mhz(2870.0, 8.0, 0.0, 0.0).unwrap();
        assert!(DriveConfig::resonant(&s, mhz(4.0), mhz(40.0)).hierarchy_warnings(1e5).is_empty());
        assert_eq!(DriveConfig::resonant(&s, mhz(20.0), mhz(40.0)).hierarchy_warnings(1e5).len(), 1);
        assert_eq!(DriveConfig::resonant(&s, mhz(0.1), mhz(40.0)).hierarchy_warnings(1e6).len(), 1);
    }
}
