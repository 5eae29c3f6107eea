//! Matrix exponentials for piecewise-constant Hamiltonians.

use num_complex::Complex64;

use crate::hamiltonian::{effective_unchecked, DriveConfig, FrameSnapshot, Qubit};
use crate::noise::NoiseValues;
use crate::spin::{c, hermitian_eigen, SpinMatrix};

/// exp(−iH dt) through the eigen-decomposition of a Hermitian H.
pub fn step_propagator(h: &SpinMatrix, dt: f64) -> SpinMatrix {
    let (vals, vecs) = hermitian_eigen(h);
    let v = vecs.0;
    let phases = nalgebra::Matrix3::from_fn(|r, col| {
        if r == col {
            Complex64::from_polar(1.0, -vals[r] * dt)
        } else {
            c(0.0)
        }
    });
    SpinMatrix(v * phases * v.adjoint())
}

/// Perfect 2π rotation in {|0⟩, |+⟩}: −1 on |0⟩ and |+⟩, |−⟩ untouched.
/// On {|+1⟩, |−1⟩} this is −X.
pub fn ideal_pulse() -> SpinMatrix {
    SpinMatrix::from_dressed(&SpinMatrix::from_real_diagonal([-1.0, -1.0, 1.0]))
}

/// One 2π pulse of the effective Hamiltonian with noise frozen and no signal.
pub fn pulse_propagator(drive: &DriveConfig, noise: &NoiseValues, phase: f64) -> SpinMatrix {
    let snap = FrameSnapshot::pulse(0.0, *noise, phase);
    let h = effective_unchecked(drive, 0.0, 0.0, &snap);
    step_propagator(&h, drive.pulse_duration())
}

/// Pulse propagator with a signal term, midpoint-sampled over `substeps`.
#[allow(clippy::too_many_arguments)]
pub fn pulse_propagator_with_signal(
    drive: &DriveConfig,
    coupling: f64,
    detuning: f64,
    noise: &NoiseValues,
    phase: f64,
    t_start: f64,
    duration: f64,
    substeps: usize,
) -> SpinMatrix {
    let n = substeps.max(1);
    let dt = duration / n as f64;
    let mut u = SpinMatrix::identity();
    for k in 0..n {
        let snap = FrameSnapshot::pulse(t_start + (k as f64 + 0.5) * dt, *noise, phase);
        u = step_propagator(&effective_unchecked(drive, coupling, detuning, &snap), dt) * u;
    }
    u
}

/// exp(−i dt [[h, δ], [δ, −h]]) as (diag, off-diagonal) pieces:
/// returns (cos − i h s, −i δ s) with s = sin(r dt)/r.
#[inline]
pub fn qubit_free_coeffs(h: f64, delta: f64, dt: f64) -> (Complex64, Complex64, Complex64) {
    let r = h.hypot(delta);
    let (sn, cs) = (r * dt).sin_cos();
    let s = if r == 0.0 { dt } else { sn / r };
    (Complex64::new(cs, -h * s), Complex64::new(cs, h * s), Complex64::new(0.0, -delta * s))
}

/// exp(−iH dt) for a Hermitian 2×2 H.
pub fn qubit_expm(h: &Qubit, dt: f64) -> Qubit {
    let mean = 0.5 * (h[(0, 0)].re + h[(1, 1)].re);
    let z = 0.5 * (h[(0, 0)].re - h[(1, 1)].re);
    let off = h[(0, 1)];
    let r = (z * z + off.norm_sqr()).sqrt();
    let (sn, cs) = (r * dt).sin_cos();
    let s = if r == 0.0 { dt } else { sn / r };
    let g = Complex64::from_polar(1.0, -mean * dt);
    let m = Qubit::new(
        Complex64::new(cs, -z * s),
        Complex64::new(0.0, -s) * off,
        Complex64::new(0.0, -s) * off.conj(),
        Complex64::new(cs, z * s),
    );
    m * g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::SpinState;
    use crate::testutil::{expm_taylor, random_hermitian};
    use crate::units::mhz;

    #[test]
    fn zero_hamiltonian_is_identity() {
        assert!((step_propagator(&SpinMatrix::zeros(), 1.0) - SpinMatrix::identity()).max_abs() < 1e-15);
    }

    #[test]
    fn diagonal_case() {
        let (a, dt) = (1.3, 0.7);
        let u = step_propagator(&SpinMatrix::from_real_diagonal([a, 0.0, -a]), dt);
        assert!((u.get(0, 0) - Complex64::from_polar(1.0, -a * dt)).norm() < 1e-14);
        assert!((u.get(1, 1) - c(1.0)).norm() < 1e-14);
        assert!((u.get(2, 2) - Complex64::from_polar(1.0, a * dt)).norm() < 1e-14);
    }

    #[test]
    fn matches_taylor_on_random_hermitian() {
        let mut seed = 99;
        for _ in 0..50 {
            let h = random_hermitian(&mut seed);
            let norm = {
                let (v, _) = hermitian_eigen(&h);
                v.iter().map(|x| x.abs()).fold(0.0, f64::max)
            };
            let dt = 0.1 / norm;
            let u = step_propagator(&h, dt);
            let reference = expm_taylor(&h.scale_c(Complex64::new(0.0, -dt)));
            assert!((u - reference).max_abs() < 1e-10);
            assert!(u.unitarity_error() < 1e-12);
        }
    }

    #[test]
    fn ideal_pulse_action() {
        let p = ideal_pulse();
        assert!(((p * SpinState::plus()).0 + SpinState::plus().0).norm() < 1e-15);
        assert!(((p * SpinState::minus()).0 - SpinState::minus().0).norm() < 1e-15);
        assert!(((p * SpinState::plus_one()).0 + SpinState::minus_one().0).norm() < 1e-15);
    }

    #[test]
    fn finite_pulse_flips_plus() {
        let drive = DriveConfig { rf_rabi: mhz(0.4), rf_freq: 0.0, mw_rabi: mhz(40.0), mw_freq: 0.0, mw_phase: 0.0 };
        let u = pulse_propagator(&drive, &NoiseValues::default(), 0.0);
        assert!((u * SpinState::plus()).overlap(&SpinState::plus()) > 1.0 - 1e-3);
        assert!((u.apply(&SpinState::plus()).inner(&SpinState::plus()) + c(1.0)).norm() < 0.05);
        // {|+1⟩, |−1⟩} block is −X up to the finite-pulse error
        let block = crate::hamiltonian::project_two_level(&u);
        let target = Qubit::new(c(0.0), c(-1.0), c(-1.0), c(0.0));
        assert!((block - target).norm() < 1e-1);
    }

    #[test]
    fn substepped_pulse_without_signal_is_single_exponential() {
        let drive = DriveConfig { rf_rabi: mhz(4.0), rf_freq: 0.0, mw_rabi: mhz(40.0), mw_freq: 0.0, mw_phase: 0.0 };
        let noise = NoiseValues { delta_e: 1e5, eta_r: 0.01, eta_m: -0.01 };
        let a = pulse_propagator(&drive, &noise, 0.3);
        let b = pulse_propagator_with_signal(&drive, 0.0, 0.0, &noise, 0.3, 1e-6, drive.pulse_duration(), 20);
        assert!((a - b).max_abs() < 1e-12);
    }

    #[test]
    fn qubit_paths_agree() {
        let (h, d, dt) = (0.8, 0.3, 1.7);
        let q = Qubit::new(c(h), c(d), c(d), c(-h));
        let u = qubit_expm(&q, dt);
        let (a, b, o) = qubit_free_coeffs(h, d, dt);
        assert!((u[(0, 0)] - a).norm() < 1e-14);
        assert!((u[(1, 1)] - b).norm() < 1e-14);
        assert!((u[(0, 1)] - o).norm() < 1e-14);
        let mut three = SpinMatrix::zeros();
        three.0[(0, 0)] = c(h);
        three.0[(2, 2)] = c(-h);
        three.0[(0, 2)] = c(d);
        three.0[(2, 0)] = c(d);
        let full = step_propagator(&three, dt);
        assert!((full.get(0, 2) - o).norm() < 1e-14);
    }
}
