//! Spin-1 operator algebra and the static zero-field sensor Hamiltonian.
//!
//! Every matrix and state in the crate is expressed in the ordered basis
//! (|+1⟩, |0⟩, |−1⟩). The zero-field eigenbasis (|+⟩, |0⟩, |−⟩) with
//! |±⟩ = (|+1⟩ ± |−1⟩)/√2 is reachable through [`SpinState::to_dressed`]
//! and [`SpinState::from_dressed`].
//!
//! Only the uniaxial ZFS `D` enters the frame Hamiltonian used elsewhere; a
//! separate longitudinal correction to `D` is not modelled.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const PLUS_ONE: usize = 0;
pub const ZERO: usize = 1;
pub const MINUS_ONE: usize = 2;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[inline]
pub(crate) fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// A 3×3 complex operator on the spin-1 space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpinMatrix(pub Matrix3<Complex64>);

impl SpinMatrix {
    pub fn zeros() -> Self {
        SpinMatrix(Matrix3::zeros())
    }

    pub fn identity() -> Self {
        SpinMatrix(Matrix3::identity())
    }

    pub fn from_fn(f: impl FnMut(usize, usize) -> Complex64) -> Self {
        SpinMatrix(Matrix3::from_fn(f))
    }

    pub fn from_real_diagonal(d: [f64; 3]) -> Self {
        let mut m = Matrix3::zeros();
        for (i, v) in d.iter().enumerate() {
            m[(i, i)] = c(*v);
        }
        SpinMatrix(m)
    }

    /// |a⟩⟨b|
    pub fn outer(a: &SpinState, b: &SpinState) -> Self {
        SpinMatrix(a.0 * b.0.adjoint())
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.0[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        SpinMatrix(self.0.adjoint())
    }

    pub fn scale(&self, s: f64) -> Self {
        SpinMatrix(self.0 * c(s))
    }

    pub fn scale_c(&self, s: Complex64) -> Self {
        SpinMatrix(self.0 * s)
    }

    pub fn commutator(&self, other: &SpinMatrix) -> Self {
        SpinMatrix(self.0 * other.0 - other.0 * self.0)
    }

    pub fn anticommutator(&self, other: &SpinMatrix) -> Self {
        SpinMatrix(self.0 * other.0 + other.0 * self.0)
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// max |H − H†| entry.
    pub fn hermiticity_error(&self) -> f64 {
        (self.0 - self.0.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// max |U†U − I| entry.
    pub fn unitarity_error(&self) -> f64 {
        (self.0.adjoint() * self.0 - Matrix3::identity())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    pub fn apply(&self, psi: &SpinState) -> SpinState {
        SpinState(self.0 * psi.0)
    }

    /// The same operator written in the (|+⟩, |0⟩, |−⟩) basis.
    pub fn to_dressed(&self) -> SpinMatrix {
        let v = dressed_basis().0;
        SpinMatrix(v.adjoint() * self.0 * v)
    }

    pub fn from_dressed(m: &SpinMatrix) -> SpinMatrix {
        let v = dressed_basis().0;
        SpinMatrix(v * m.0 * v.adjoint())
    }
}

impl Add for SpinMatrix {
    type Output = SpinMatrix;
    fn add(self, rhs: SpinMatrix) -> SpinMatrix {
        SpinMatrix(self.0 + rhs.0)
    }
}

impl Sub for SpinMatrix {
    type Output = SpinMatrix;
    fn sub(self, rhs: SpinMatrix) -> SpinMatrix {
        SpinMatrix(self.0 - rhs.0)
    }
}

impl Neg for SpinMatrix {
    type Output = SpinMatrix;
    fn neg(self) -> SpinMatrix {
        SpinMatrix(-self.0)
    }
}

impl Mul for SpinMatrix {
    type Output = SpinMatrix;
    fn mul(self, rhs: SpinMatrix) -> SpinMatrix {
        SpinMatrix(self.0 * rhs.0)
    }
}

impl Mul<SpinState> for SpinMatrix {
    type Output = SpinState;
    fn mul(self, rhs: SpinState) -> SpinState {
        SpinState(self.0 * rhs.0)
    }
}

/// A pure spin-1 state, amplitudes in (|+1⟩, |0⟩, |−1⟩).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpinState(pub Vector3<Complex64>);

impl SpinState {
    pub fn new(a_plus_one: Complex64, a_zero: Complex64, a_minus_one: Complex64) -> Self {
        SpinState(Vector3::new(a_plus_one, a_zero, a_minus_one))
    }

    pub fn plus_one() -> Self {
        Self::new(c(1.0), c(0.0), c(0.0))
    }

    pub fn zero() -> Self {
        Self::new(c(0.0), c(1.0), c(0.0))
    }

    pub fn minus_one() -> Self {
        Self::new(c(0.0), c(0.0), c(1.0))
    }

    /// |+⟩ = (|+1⟩ + |−1⟩)/√2
    pub fn plus() -> Self {
        Self::new(c(FRAC_1_SQRT_2), c(0.0), c(FRAC_1_SQRT_2))
    }

    /// |−⟩ = (|+1⟩ − |−1⟩)/√2
    pub fn minus() -> Self {
        Self::new(c(FRAC_1_SQRT_2), c(0.0), c(-FRAC_1_SQRT_2))
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn normalized(&self) -> Self {
        SpinState(self.0 / c(self.norm()))
    }

    /// ⟨self|other⟩
    pub fn inner(&self, other: &SpinState) -> Complex64 {
        self.0.dotc(&other.0)
    }

    /// |⟨self|other⟩|²
    pub fn overlap(&self, other: &SpinState) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// Populations of |+⟩, |0⟩ and |−⟩.
    pub fn dressed_populations(&self) -> [f64; 3] {
        let d = self.to_dressed();
        [d.0[0].norm_sqr(), d.0[1].norm_sqr(), d.0[2].norm_sqr()]
    }

    /// Amplitudes in the (|+⟩, |0⟩, |−⟩) basis.
    pub fn to_dressed(&self) -> SpinState {
        let a = self.0[PLUS_ONE];
        let b = self.0[MINUS_ONE];
        SpinState::new(
            (a + b) * FRAC_1_SQRT_2,
            self.0[ZERO],
            (a - b) * FRAC_1_SQRT_2,
        )
    }

    /// Inverse of [`SpinState::to_dressed`].
    pub fn from_dressed(d: &SpinState) -> SpinState {
        let p = d.0[0];
        let m = d.0[2];
        SpinState::new((p + m) * FRAC_1_SQRT_2, d.0[1], (p - m) * FRAC_1_SQRT_2)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Unitary whose columns are |+⟩, |0⟩, |−⟩ in the (|+1⟩, |0⟩, |−1⟩) basis.
pub fn dressed_basis() -> SpinMatrix {
    let s = FRAC_1_SQRT_2;
    SpinMatrix(Matrix3::new(
        c(s),
        c(0.0),
        c(s),
        c(0.0),
        c(1.0),
        c(0.0),
        c(s),
        c(0.0),
        c(-s),
    ))
}

/// Spin-1 operators S_x, S_y, S_z with S_z = diag(1, 0, −1).
pub fn spin_operators() -> (SpinMatrix, SpinMatrix, SpinMatrix) {
    let s = FRAC_1_SQRT_2;
    let z = c(0.0);
    let sx = Matrix3::new(z, c(s), z, c(s), z, c(s), z, c(s), z);
    let i = Complex64::new(0.0, s);
    let sy = Matrix3::new(z, -i, z, i, z, -i, z, i, z);
    let sz = Matrix3::new(c(1.0), z, z, z, z, z, z, z, c(-1.0));
    (SpinMatrix(sx), SpinMatrix(sy), SpinMatrix(sz))
}

/// S_x² − S_y² = |+1⟩⟨−1| + |−1⟩⟨+1|.
pub fn transverse_x() -> SpinMatrix {
    let mut m = Matrix3::zeros();
    m[(PLUS_ONE, MINUS_ONE)] = c(1.0);
    m[(MINUS_ONE, PLUS_ONE)] = c(1.0);
    SpinMatrix(m)
}

/// S_xS_y + S_yS_x = −i|+1⟩⟨−1| + i|−1⟩⟨+1|.
pub fn transverse_y() -> SpinMatrix {
    let mut m = Matrix3::zeros();
    m[(PLUS_ONE, MINUS_ONE)] = Complex64::new(0.0, -1.0);
    m[(MINUS_ONE, PLUS_ONE)] = Complex64::new(0.0, 1.0);
    SpinMatrix(m)
}

/// Static zero-field parameters. All fields are angular frequencies (rad/s).
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StaticSensor {
    /// Uniaxial (longitudinal) ZFS.
    pub d: f64,
    /// Transverse ZFS along x.
    pub ex: f64,
    /// Transverse ZFS along y.
    pub ey: f64,
    /// Zeeman-like longitudinal offset.
    pub delta_bz: f64,
}

impl StaticSensor {
    pub fn new(d: f64, ex: f64, ey: f64, delta_bz: f64) -> Result<Self> {
        let s = StaticSensor { d, ex, ey, delta_bz };
        s.validate()?;
        Ok(s)
    }

    /// Convenience constructor taking "(2π)·MHz" values.
    pub fn from_mhz(d: f64, ex: f64, ey: f64, delta_bz: f64) -> Result<Self> {
        use crate::units::mhz;
        Self::new(mhz(d), mhz(ex), mhz(ey), mhz(delta_bz))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d > 0.0 && self.d.is_finite()) {
            return Err(Error::InvalidParameter(format!("D must be positive, got {}", self.d)));
        }
        if !(self.ex >= 0.0 && self.ex.is_finite()) {
            return Err(Error::InvalidParameter(format!("E_x must be >= 0, got {}", self.ex)));
        }
        if !self.ey.is_finite() || !self.delta_bz.is_finite() {
            return Err(Error::InvalidParameter("E_y and delta_Bz must be finite".into()));
        }
        Ok(())
    }

    /// √(E_x² + E_y²)
    pub fn e_perp(&self) -> f64 {
        self.ex.hypot(self.ey)
    }

    pub fn with_delta_bz(&self, delta_bz: f64) -> Self {
        StaticSensor { delta_bz, ..*self }
    }
}

/// H = D S_z² + δ_Bz S_z + E_x(S_x² − S_y²) + E_y(S_xS_y + S_yS_x).
pub fn static_hamiltonian(p: &StaticSensor) -> SpinMatrix {
    let (_, _, sz) = spin_operators();
    let sz2 = sz * sz;
    sz2.scale(p.d) + sz.scale(p.delta_bz) + transverse_x().scale(p.ex) + transverse_y().scale(p.ey)
}

/// Closed-form eigensystem of the static Hamiltonian.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    /// (E₊, E₀, E₋)
    pub energies: [f64; 3],
    /// (|ψ₊⟩, |ψ₀⟩, |ψ₋⟩)
    pub states: [SpinState; 3],
    pub theta: f64,
    pub phi: f64,
    /// E_x = E_y = δ_Bz = 0: the |±1⟩ pair is degenerate and `states`
    /// holds |+1⟩, |−1⟩ for it.
    pub degenerate: bool,
}

pub fn eigensystem(p: &StaticSensor) -> EigenSystem {
    let e_perp = p.e_perp();
    let r = e_perp.hypot(p.delta_bz);
    if r == 0.0 {
        return EigenSystem {
            energies: [p.d, 0.0, p.d],
            states: [SpinState::plus_one(), SpinState::zero(), SpinState::minus_one()],
            theta: 0.0,
            phi: 0.0,
            degenerate: true,
        };
    }
    let theta = e_perp.atan2(p.delta_bz);
    let phi = p.ey.atan2(p.ex);
    let (s, co) = (theta / 2.0).sin_cos();
    let e_iphi = Complex64::from_polar(1.0, phi);
    let psi_plus = SpinState::new(c(co), c(0.0), e_iphi * s);
    let psi_minus = SpinState::new(c(s), c(0.0), -e_iphi * co);
    EigenSystem {
        energies: [p.d + r, 0.0, p.d - r],
        states: [psi_plus, SpinState::zero(), psi_minus],
        theta,
        phi,
        degenerate: false,
    }
}

/// Eigen-decomposition of a Hermitian 3×3 matrix, eigenvalues descending
/// (so the |0⟩ level of a sensor with D > E_⊥ comes last).
pub fn hermitian_eigen(h: &SpinMatrix) -> ([f64; 3], SpinMatrix) {
    let eig = SymmetricEigen::new(h.0);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = [eig.eigenvalues[idx[0]], eig.eigenvalues[idx[1]], eig.eigenvalues[idx[2]]];
    let vectors = Matrix3::from_fn(|r, col| eig.eigenvectors[(r, idx[col])]);
    (values, SpinMatrix(vectors))
}

/// Numeric eigenvalues, descending.
pub fn numeric_eigenvalues(h: &SpinMatrix) -> [f64; 3] {
    hermitian_eigen(h).0
}

/// One row of [`energy_vs_field_scan`].
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct EnergyRow {
    pub delta_bz: f64,
    pub e_plus: f64,
    pub e_minus: f64,
    pub e_zero: f64,
}

pub fn energy_vs_field_scan(p: &StaticSensor, delta_bz_grid: &[f64]) -> Result<Vec<EnergyRow>> {
    delta_bz_grid
        .iter()
        .map(|&b| {
            if !b.is_finite() {
                return Err(Error::InvalidParameter(format!("non-finite field value {b}")));
            }
            let es = eigensystem(&p.with_delta_bz(b));
            Ok(EnergyRow { delta_bz: b, e_plus: es.energies[0], e_minus: es.energies[2], e_zero: es.energies[1] })
        })
        .collect()
}
