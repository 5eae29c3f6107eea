//! Fast self-check suite behind `validate`.

use std::f64::consts::TAU;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::engine::perturbative::{
    exact_free_propagator, ideal_flip, max_abs, perturbative_free_propagator, two_pulse_product,
};
use crate::engine::{run_ensemble, EnsembleConfig, Frame, IntegratorConfig, PulseModel, SampleSchedule, Scenario};
use crate::engine::{step_propagator, InitialState};
use crate::error::Result;
use crate::hamiltonian::{effective_hamiltonian, DriveConfig, FrameSnapshot, Qubit, SignalConfig};
use crate::noise::{InitMode, NoiseConfig, NoiseValues, OuParams, OuProcess};
use crate::sequence::{build_sequence_with_layout, fourier_coefficient, response_function, Layout};
use crate::spin::{eigensystem, numeric_eigenvalues, spin_operators, static_hamiltonian, StaticSensor};
use crate::units::mhz;

/// Deliberate defects for checking that the suite can fail.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Faults {
    /// Use −S_y in the commutator check.
    pub flip_sy: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &'static str, measured: f64, tolerance: f64) -> Self {
        Check { name, measured, tolerance, passed: measured.is_finite() && measured <= tolerance }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:<28} measured {:.3e}  tolerance {:.1e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.tolerance
        )
    }
}

/// Largest deviation of the three cyclic su(2) relations [S_i, S_j] = iε_ijk S_k.
fn su2_check(faults: Faults) -> Check {
    let (sx, sy, sz) = spin_operators();
    let sy = if faults.flip_sy { sy.scale(-1.0) } else { sy };
    let i = num_complex::Complex64::new(0.0, 1.0);
    let err = [
        sx.commutator(&sy) - sz.scale_c(i),
        sy.commutator(&sz) - sx.scale_c(i),
        sz.commutator(&sx) - sy.scale_c(i),
    ]
    .iter()
    .map(|m| m.max_abs())
    .fold(0.0, f64::max);
    Check::at_most("su2_commutators", err, 1e-14)
}

fn eigenvalue_check(rng: &mut ChaCha8Rng) -> Check {
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let d = mhz(rng.random_range(100.0..5000.0));
        let p = StaticSensor {
            d,
            ex: mhz(rng.random_range(0.0..50.0)),
            ey: mhz(rng.random_range(-50.0..50.0)),
            delta_bz: mhz(rng.random_range(-50.0..50.0)),
        };
        let mut closed = eigensystem(&p).energies;
        closed.sort_by(|a, b| b.total_cmp(a));
        let numeric = numeric_eigenvalues(&static_hamiltonian(&p));
        for k in 0..3 {
            worst = worst.max((closed[k] - numeric[k]).abs() / d);
        }
    }
    Check::at_most("eigenvalues_closed_form", worst, 1e-10)
}

fn unitarity_check(rng: &mut ChaCha8Rng) -> Result<Check> {
    let sensor = StaticSensor::from_mhz(2870.0, 0.3, 0.0, 0.0)?;
    let drive = DriveConfig::resonant(&sensor, mhz(0.1), mhz(40.0));
    let signal = SignalConfig::at_detuning(&sensor, mhz(0.005), mhz(0.1));
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let noise = NoiseValues {
            delta_e: mhz(rng.random_range(-0.05..0.05)),
            eta_r: rng.random_range(-0.01..0.01),
            eta_m: rng.random_range(-0.01..0.01),
        };
        let t = rng.random_range(0.0..1e-3);
        let snap = if rng.random_bool(0.5) {
            FrameSnapshot::free(t, noise)
        } else {
            FrameSnapshot::pulse(t, noise, rng.random_range(0.0..TAU))
        };
        let h = effective_hamiltonian(&sensor, &drive, &signal, &snap)?;
        let u = step_propagator(&h, rng.random_range(1e-9..1e-6));
        worst = worst.max(u.unitarity_error());
    }
    Ok(Check::at_most("propagator_unitarity", worst, 1e-12))
}

fn ou_checks() -> Result<Vec<Check>> {
    let p = OuParams::new(1.0, 2.0)?;
    let dt = 0.1;
    let path = OuProcess::new(p, 11, InitMode::Stationary).path(dt, 100_000)?;
    let n = path.len() as f64;
    let mean = path.iter().sum::<f64>() / n;
    let var = path.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let mut corr_err = 0.0f64;
    for lag in (1..=30).step_by(3) {
        let m = path.len() - lag;
        let r = (0..m).map(|i| (path[i] - mean) * (path[i + lag] - mean)).sum::<f64>() / (m as f64 * var);
        corr_err = corr_err.max((r - (-(lag as f64) * dt).exp()).abs());
    }
    Ok(vec![
        Check::at_most("ou_stationary_variance", (var / p.stationary_variance() - 1.0).abs(), 0.05),
        Check::at_most("ou_autocorrelation", corr_err, 0.05),
    ])
}

fn fourier_check() -> Result<Check> {
    let tau = 1.0;
    let seq = build_sequence_with_layout("cpmg", 2, tau, 0.0, &[], Layout::Centered)?;
    let f = response_function(&seq);
    let mut worst = 0.0f64;
    for n in 1..=20 {
        worst = worst.max((f.cosine_coefficient(n, 4.0 * tau) - fourier_coefficient(n)?).abs());
    }
    Ok(Check::at_most("fourier_coefficients", worst, 1e-6))
}

fn log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

fn perturbative_checks() -> Result<Vec<Check>> {
    let rf = mhz(4.0);
    let tau = 2.5e-6;
    let ratios: Vec<f64> = (0..8).map(|k| 10f64.powf(-3.0 + 1.5 * k as f64 / 7.0)).collect();
    let mut errs = Vec::new();
    for r in &ratios {
        let d = r * rf;
        errs.push(max_abs(&(exact_free_propagator(rf, d, tau) - perturbative_free_propagator(rf, d, tau)?)));
    }
    let expansion = log_slope(&ratios, &errs);

    let d = 1e-2 * rf;
    let u = two_pulse_product(rf, d, tau, &ideal_flip());
    let off = (u[(0, 1)].im / (8.0 * d.powi(3) * tau / (rf * rf)) - 1.0).abs();

    let ratios: Vec<f64> = (0..6).map(|k| 10f64.powf(-3.0 + 0.3 * k as f64)).collect();
    let residual: Vec<f64> = ratios
        .iter()
        .map(|r| max_abs(&(two_pulse_product(rf, r * rf, tau, &ideal_flip()) + Qubit::identity())))
        .collect();
    let residual = log_slope(&ratios, &residual);
    Ok(vec![
        Check::at_most("expansion_error_slope_4", (expansion - 4.0).abs(), 0.3),
        Check::at_most("two_pulse_off_diagonal", off, 0.05),
        Check::at_most("even_pulse_residual_slope_3", (residual - 3.0).abs(), 0.3),
    ])
}

fn echo_check() -> Result<Check> {
    let sensor = StaticSensor::from_mhz(2870.0, 20.0, 0.0, 0.0)?;
    let drive = DriveConfig::resonant(&sensor, mhz(4.0), mhz(40.0));
    let mut worst = 0.0f64;
    for n in [2, 8, 32] {
        let sc = Scenario {
            sensor,
            drive,
            signal: SignalConfig::none(),
            sequence: build_sequence_with_layout("cpmg", n, 2.5e-6, 0.0, &[], Layout::Additive)?,
            noise: NoiseConfig::quiet(),
            integrator: IntegratorConfig {
                noise_dt: 10e-9,
                free_step_max: 10e-9,
                pulse_substeps: 20,
                frame: Frame::Effective,
                pulse_model: PulseModel::Ideal,
            },
            sampling: SampleSchedule::Echo { stride: 1 },
            initial: InitialState::Plus,
        };
        let res = run_ensemble(&sc, &EnsembleConfig::new(1, 1, 1))?;
        worst = worst.max(res.mean_p_plus.iter().map(|p| (1.0 - p).abs()).fold(0.0, f64::max));
    }
    Ok(Check::at_most("echo_identity", worst, 1e-6))
}

/// Run every check. Errors are only returned for internal failures, not for
/// failed checks.
pub fn run_validation(faults: Faults) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut checks = vec![su2_check(faults), eigenvalue_check(&mut rng), unitarity_check(&mut rng)?];
    checks.extend(ou_checks()?);
    checks.push(fourier_check()?);
    checks.extend(perturbative_checks()?);
    checks.push(echo_check()?);
    Ok(checks)
}
