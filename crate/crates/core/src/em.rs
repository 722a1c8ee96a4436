//! Green functions, projectors, polarization bases and Stokes parameters.

use std::f64::consts::PI;

use nalgebra::SVD;

use crate::error::{Error, Result};
use crate::linalg::{Basis32, CMat2, CMat3, RMat3, Vec3, C64, I};

/// Speed of light used throughout, in m/s.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Wavenumber `k = ω/c` in rad/m, always positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Wavenumber(f64);

impl Wavenumber {
    pub fn new(k: f64) -> Result<Self> {
        if k > 0.0 && k.is_finite() {
            Ok(Wavenumber(k))
        } else {
            Err(Error::invalid(format!(
                "wavenumber must be positive, got {k}"
            )))
        }
    }

    pub fn from_omega(omega: f64) -> Result<Self> {
        Self::new(omega / SPEED_OF_LIGHT)
    }

    pub fn get(self) -> f64 {
        self.0
    }

    pub fn omega(self) -> f64 {
        self.0 * SPEED_OF_LIGHT
    }
}

/// Separation `x − y`, rejecting points closer than `1e-12·max(1,|x|,|y|)`.
fn separation(x: &Vec3, y: &Vec3) -> Result<(Vec3, f64)> {
    let d = x - y;
    let r = d.norm();
    let scale = 1.0f64.max(x.norm()).max(y.norm());
    if r <= 1e-12 * scale {
        return Err(Error::Coincident(*x, *y));
    }
    Ok((d, r))
}

/// `exp(ikr) / (4πr)`.
pub fn scalar_green(x: &Vec3, y: &Vec3, k: Wavenumber) -> Result<C64> {
    let (_, r) = separation(x, y)?;
    Ok(C64::from_polar(1.0 / (4.0 * PI * r), k.0 * r))
}

/// Dyadic Green function of the homogeneous medium.
pub fn dyadic_green(x: &Vec3, y: &Vec3, k: Wavenumber) -> Result<CMat3> {
    let (d, r) = separation(x, y)?;
    Ok(dyad(&d, r, k.0))
}

#[inline]
pub(crate) fn dyad(d: &Vec3, r: f64, k: f64) -> CMat3 {
    let kr = k * r;
    let g = C64::from_polar(1.0 / (4.0 * PI * r), kr);
    let m = (I * kr - 1.0) / (kr * kr);
    let diag = g * (1.0 + m);
    let rad = g * (1.0 + 3.0 * m) / (r * r);
    CMat3::from_fn(|i, j| {
        let v = -rad * (d[i] * d[j]);
        if i == j {
            v + diag
        } else {
            v
        }
    })
}

/// Orthogonal projector onto `(x − y)⊥`.
pub fn projector(x: &Vec3, y: &Vec3) -> Result<RMat3> {
    let (d, r) = separation(x, y)?;
    let n = d / r;
    Ok(RMat3::identity() - n * n.transpose())
}

/// Deterministic orthonormal basis of `(y0 − x_s)⊥`.
pub fn source_basis(x_s: &Vec3, y0: &Vec3) -> Result<Basis32> {
    let (d, r) = separation(y0, x_s)?;
    let n = d / r;
    let seed = if n.z.abs() < 0.9 {
        Vec3::z()
    } else {
        Vec3::x()
    };
    let u1 = (seed - n * seed.dot(&n)).normalize();
    let u2 = n.cross(&u1);
    Basis32::new(u1, u2).ok_or_else(|| Error::Degenerate("source basis".into()))
}

/// Stokes parameters `(I, Q, U, V)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StokesVec {
    pub i: f64,
    pub q: f64,
    pub u: f64,
    pub v: f64,
}

impl StokesVec {
    /// Builds the vector; unphysical values are allowed but logged.
    pub fn new(i: f64, q: f64, u: f64, v: f64) -> Self {
        let s = StokesVec { i, q, u, v };
        if !s.is_physical() {
            log::warn!("Stokes vector {s:?} violates I >= 0, I^2 >= Q^2+U^2+V^2");
        }
        s
    }

    pub fn is_physical(&self) -> bool {
        let pol = self.q * self.q + self.u * self.u + self.v * self.v;
        self.i >= 0.0 && self.i * self.i >= pol * (1.0 - 1e-12)
    }
}

pub fn coherency_from_stokes(s: &StokesVec) -> CMat2 {
    CMat2::new(
        C64::from(0.5 * (s.i + s.q)),
        C64::new(0.5 * s.u, 0.5 * s.v),
        C64::new(0.5 * s.u, -0.5 * s.v),
        C64::from(0.5 * (s.i - s.q)),
    )
}

/// Inverse of [`coherency_from_stokes`]; rejects non-Hermitian input.
pub fn stokes_from_coherency(psi: &CMat2) -> Result<StokesVec> {
    let res = crate::linalg::hermitian_residual(psi);
    if res > 1e-10 {
        return Err(Error::NotHermitian(res));
    }
    let (a, b, d) = (psi[(0, 0)].re, psi[(0, 1)], psi[(1, 1)].re);
    Ok(StokesVec::new(a + d, a - d, 2.0 * b.re, 2.0 * b.im))
}

/// Condition number of `P(x_r,y0) P(x_s,x_r) P(y0,x_s)` on its rank-2 range.
pub fn projected_green_condition(x_r: &Vec3, x_s: &Vec3, y0: &Vec3) -> Result<f64> {
    let (e1, _) = separation(x_s, x_r)?;
    let (e2, _) = separation(y0, x_r)?;
    separation(y0, x_s)?;
    if e1.cross(&e2).norm() <= 1e-12 * e1.norm() * e2.norm() {
        return Err(Error::Degenerate(
            "receiver, source and reference are collinear".into(),
        ));
    }
    let m = projector(x_r, y0)? * projector(x_s, x_r)? * projector(y0, x_s)?;
    let mut s: Vec<f64> = SVD::new(m, false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s[0] / s[1])
}
