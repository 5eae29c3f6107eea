//! Closed-form expansion of the dressed free propagator in δ_E/Ω_rf and the
//! echo product built from it.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::hamiltonian::Qubit;
use crate::spin::c;

use super::propagator::qubit_expm;
use num_complex::Complex64;

fn pauli() -> (Qubit, Qubit, Qubit) {
    let i = Qubit::identity();
    let x = Qubit::new(c(0.0), c(1.0), c(1.0), c(0.0));
    let z = Qubit::new(c(1.0), c(0.0), c(0.0), c(-1.0));
    (i, x, z)
}

/// Number of full RF periods in τ, if Ω_rf·τ ∈ 2πℤ.
fn rf_turns(rf_rabi: f64, tau: f64) -> Result<i64> {
    let turns = rf_rabi * tau / TAU;
    let m = turns.round();
    if (turns - m).abs() > 1e-9 * turns.abs().max(1.0) {
        return Err(Error::Precondition(format!(
            "expansion needs Omega_rf * tau to be a multiple of 2 pi (got {turns} turns)"
        )));
    }
    Ok(m as i64)
}

/// H_free = Ω_rf σ_z + 2δ_E σ_x with σ = Pauli/2.
pub fn free_hamiltonian(rf_rabi: f64, delta_e: f64) -> Qubit {
    let (_, x, z) = pauli();
    z * c(0.5 * rf_rabi) + x * c(delta_e)
}

/// exp(−iH_free τ).
pub fn exact_free_propagator(rf_rabi: f64, delta_e: f64, tau: f64) -> Qubit {
    qubit_expm(&free_hamiltonian(rf_rabi, delta_e), tau)
}

/// (−1)^m [I − iτ(δ²/Ω_rf)Z − iτ(2δ³/Ω_rf²)X] with Pauli Z, X and
/// m = Ω_rf τ/2π.
pub fn perturbative_free_propagator(rf_rabi: f64, delta_e: f64, tau: f64) -> Result<Qubit> {
    if !(rf_rabi > 0.0 && tau > 0.0) {
        return Err(Error::InvalidParameter("need Omega_rf > 0 and tau > 0".into()));
    }
    if delta_e.abs() >= rf_rabi {
        return Err(Error::Precondition("expansion needs |delta_E| << Omega_rf".into()));
    }
    let m = rf_turns(rf_rabi, tau)?;
    let (i, x, z) = pauli();
    let minus_i = Complex64::new(0.0, -1.0);
    let u = i + z * (minus_i * tau * delta_e * delta_e / rf_rabi)
        + x * (minus_i * tau * 2.0 * delta_e.powi(3) / (rf_rabi * rf_rabi));
    Ok(if m % 2 == 0 { u } else { -u })
}

/// Perfect π rotation on {|+1⟩, |−1⟩}: −iX.
pub fn ideal_flip() -> Qubit {
    let (_, x, _) = pauli();
    x * Complex64::new(0.0, -1.0)
}

/// U_τ P U_2τ P U_τ with exact free propagators.
pub fn two_pulse_product(rf_rabi: f64, delta_e: f64, tau: f64, pulse: &Qubit) -> Qubit {
    let u1 = exact_free_propagator(rf_rabi, delta_e, tau);
    let u2 = exact_free_propagator(rf_rabi, delta_e, 2.0 * tau);
    u1 * pulse * u2 * pulse * u1
}

/// The same product from the truncated expansion.
pub fn two_pulse_product_expanded(rf_rabi: f64, delta_e: f64, tau: f64, pulse: &Qubit) -> Result<Qubit> {
    let u1 = perturbative_free_propagator(rf_rabi, delta_e, tau)?;
    let u2 = perturbative_free_propagator(rf_rabi, delta_e, 2.0 * tau)?;
    Ok(u1 * pulse * u2 * pulse * u1)
}

/// Spectral-norm-free error measure: largest entry modulus.
pub fn max_abs(m: &Qubit) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::mhz;

    fn slope(xs: &[f64], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
        let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
        let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
        let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
        let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
        num / den
    }

    #[test]
    fn zero_noise_is_identity_up_to_sign() {
        let rf = mhz(4.0);
        let tau = 2.5e-6;
        let u = perturbative_free_propagator(rf, 0.0, tau).unwrap();
        assert_eq!(u, Qubit::identity());
        assert!(max_abs(&(exact_free_propagator(rf, 0.0, tau) - u)) < 1e-12);
    }

    #[test]
    fn precondition_on_rf_turns() {
        assert!(perturbative_free_propagator(mhz(4.0), 1e3, 2.4e-6).is_err());
        assert!(perturbative_free_propagator(mhz(4.0), 1e8, 2.5e-6).is_err());
    }

    #[test]
    fn expansion_error_is_fourth_order() {
        let rf = mhz(4.0);
        let tau = 2.5e-6;
        let ratios: Vec<f64> = (0..8).map(|k| 10f64.powf(-3.0 + 1.5 * k as f64 / 7.0)).collect();
        let errs: Vec<f64> = ratios
            .iter()
            .map(|r| {
                let d = r * rf;
                max_abs(&(exact_free_propagator(rf, d, tau) - perturbative_free_propagator(rf, d, tau).unwrap()))
            })
            .collect();
        let s = slope(&ratios, &errs);
        assert!((s - 4.0).abs() < 0.3, "slope {s}");
    }

    #[test]
    fn two_pulse_off_diagonal() {
        let rf = mhz(4.0);
        let tau = 2.5e-6;
        let d = 1e-2 * rf;
        let u = two_pulse_product(rf, d, tau, &ideal_flip());
        let expect = 8.0 * d.powi(3) * tau / (rf * rf);
        assert!((u[(0, 1)].im / expect - 1.0).abs() < 0.05, "{} vs {expect}", u[(0, 1)]);
        assert!(u[(0, 1)].re.abs() < 0.05 * expect);
        assert!((u[(0, 0)].re + 1.0).abs() < 1e-3);
        let e = two_pulse_product_expanded(rf, d, tau, &ideal_flip()).unwrap();
        assert!((e[(0, 1)].im / expect - 1.0).abs() < 1e-3);
    }

    #[test]
    fn residual_after_even_pulses_is_third_order() {
        let rf = mhz(4.0);
        let tau = 2.5e-6;
        let ratios: Vec<f64> = (0..6).map(|k| 10f64.powf(-3.0 + 0.3 * k as f64)).collect();
        let errs: Vec<f64> = ratios
            .iter()
            .map(|r| max_abs(&(two_pulse_product(rf, r * rf, tau, &ideal_flip()) + Qubit::identity())))
            .collect();
        let s = slope(&ratios, &errs);
        assert!((s - 3.0).abs() < 0.3, "slope {s}");
    }
}
