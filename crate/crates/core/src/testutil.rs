//! Independent numerical oracles shared by unit tests.

use num_complex::Complex64;

use crate::spin::SpinMatrix;

/// exp(A) by scaling and squaring around a 30-term Taylor series.
pub fn expm_taylor(a: &SpinMatrix) -> SpinMatrix {
    let norm = a.max_abs() * 3.0;
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a.scale(0.5f64.powi(squarings));
    let mut term = SpinMatrix::identity();
    let mut sum = SpinMatrix::identity();
    for k in 1..30 {
        term = (term * scaled).scale(1.0 / k as f64);
        sum = sum + term;
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

/// Uniform draw in [0, 1) from a SplitMix64 counter.
pub fn rng_f64(state: &mut u64) -> f64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Random Hermitian matrix with entries in [−1, 1].
pub fn random_hermitian(state: &mut u64) -> SpinMatrix {
    let mut m = SpinMatrix::zeros();
    for i in 0..3 {
        m.0[(i, i)] = Complex64::new(2.0 * rng_f64(state) - 1.0, 0.0);
        for j in (i + 1)..3 {
            let z = Complex64::new(2.0 * rng_f64(state) - 1.0, 2.0 * rng_f64(state) - 1.0);
            m.0[(i, j)] = z;
            m.0[(j, i)] = z.conj();
        }
    }
    m
}
