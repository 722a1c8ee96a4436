//! Small dense complex matrices and the helpers shared by the solvers.

use nalgebra::{Matrix2, Matrix3, Matrix3x2, Vector3};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type Vec3 = Vector3<f64>;
pub type RMat3 = Matrix3<f64>;
pub type CMat3 = Matrix3<C64>;
pub type CMat2 = Matrix2<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

/// Two orthonormal real 3-vectors stored column-wise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Basis32(Matrix3x2<f64>);

impl Basis32 {
    /// Builds a basis, checking orthonormality to 1e-12.
    pub fn new(u1: Vec3, u2: Vec3) -> Option<Self> {
        let ok = (u1.norm() - 1.0).abs() < 1e-12
            && (u2.norm() - 1.0).abs() < 1e-12
            && u1.dot(&u2).abs() < 1e-12;
        ok.then(|| Basis32(Matrix3x2::from_columns(&[u1, u2])))
    }

    /// The cross-range basis `[e1, e2]` of the array plane.
    pub fn cross_range() -> Self {
        Basis32(Matrix3x2::new(1.0, 0.0, 0.0, 1.0, 0.0, 0.0))
    }

    pub fn matrix(&self) -> &Matrix3x2<f64> {
        &self.0
    }

    pub fn column(&self, j: usize) -> Vec3 {
        self.0.column(j).into_owned()
    }

    /// `U Uᵀ`, the orthogonal projector onto the span.
    pub fn projector(&self) -> RMat3 {
        self.0 * self.0.transpose()
    }

    /// `Uᵀ M V`.
    pub fn compress(&self, m: &CMat3, v: &Basis32) -> CMat2 {
        let u = self.0.map(C64::from);
        let w = v.0.map(C64::from);
        u.transpose() * m * w
    }

    /// `U M Vᵀ`.
    pub fn expand(&self, m: &CMat2, v: &Basis32) -> CMat3 {
        let u = self.0.map(C64::from);
        let w = v.0.map(C64::from);
        u * m * w.transpose()
    }
}

pub fn complexify(m: &RMat3) -> CMat3 {
    m.map(C64::from)
}

/// Relative anti-Hermitian residual `‖M − M*‖ / ‖M‖` (0 for the zero matrix).
pub fn hermitian_residual(m: &CMat2) -> f64 {
    let n = m.norm();
    if n == 0.0 {
        0.0
    } else {
        (m - m.adjoint()).norm() / n
    }
}

/// Singular values `(σ1, σ2)` of a 2×2 complex matrix, closed form.
pub fn singular_values2(m: &CMat2) -> (f64, f64) {
    let fro2 = m.norm_squared();
    let det = m.determinant().norm();
    let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt();
    let s1 = ((fro2 + disc) / 2.0).sqrt();
    // σ1σ2 = |det|, avoids cancellation in the small one
    let s2 = if s1 > 0.0 { det / s1 } else { 0.0 };
    (s1, s2)
}

/// 2-norm condition number; infinite for singular input.
pub fn cond2(m: &CMat2) -> f64 {
    let (s1, s2) = singular_values2(m);
    if s2 == 0.0 {
        f64::INFINITY
    } else {
        s1 / s2
    }
}

/// Composite trapezoid weights on `n` uniform nodes with spacing `h`.
pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    (0..n)
        .map(|i| if i == 0 || i + 1 == n { h / 2.0 } else { h })
        .collect()
}
