//! Scene description and synthetic data: Born responses and coherency
//! matrices measured on a planar array.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ArrayDataSet, DataKind, DataMeta};
use crate::em::{dyadic_green, source_basis, Wavenumber};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_residual, Basis32, CMat2, CMat3, Vec3, C64};
use crate::serial;

/// Point scatterer with a frequency-independent polarizability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    #[serde(with = "serial::vec3")]
    pub position: Vec3,
    #[serde(with = "serial::cmat3")]
    pub alpha: CMat3,
}

impl Scatterer {
    /// Checks that `alpha` is complex symmetric to 1e-12 relative.
    pub fn new(position: Vec3, alpha: CMat3) -> Result<Self> {
        let s = Scatterer { position, alpha };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let asym = (self.alpha - self.alpha.transpose()).norm();
        if asym > 1e-12 * self.alpha.norm() {
            return Err(Error::invalid(format!(
                "polarizability at {:?} is not symmetric",
                self.position
            )));
        }
        if !self.position.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("scatterer position".into()));
        }
        Ok(())
    }
}

/// Source coherency `J̃_s(ω)` in the source basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SourceCoherency {
    Constant {
        #[serde(with = "serial::cmat2")]
        matrix: CMat2,
    },
    /// Linearly interpolated between tabulated angular frequencies.
    Tabulated {
        omegas: Vec<f64>,
        #[serde(with = "serial::cmat2_vec")]
        matrices: Vec<CMat2>,
    },
    /// Power spectrum of the Gaussian-modulated stationary source, times `I₂`.
    Gaussian { corr_time: f64, omega0: f64 },
}

impl SourceCoherency {
    pub fn identity() -> Self {
        SourceCoherency::Constant {
            matrix: CMat2::identity(),
        }
    }

    pub fn at(&self, omega: f64) -> Result<CMat2> {
        match self {
            SourceCoherency::Constant { matrix } => Ok(*matrix),
            SourceCoherency::Gaussian { corr_time, omega0 } => {
                let j = crate::stochastic::source_spectrum(omega, *corr_time, *omega0);
                Ok(CMat2::identity() * C64::from(j))
            }
            SourceCoherency::Tabulated { omegas, matrices } => {
                if omegas.len() != matrices.len() || omegas.is_empty() {
                    return Err(Error::invalid(
                        "tabulated coherency needs matching, non-empty tables",
                    ));
                }
                let tol = 1e-9 * omega.abs();
                let hi = omegas.partition_point(|&w| w < omega - tol);
                if hi == omegas.len() || (hi == 0 && omegas[0] > omega + tol) {
                    return Err(Error::invalid(format!(
                        "frequency {omega} outside tabulated coherency"
                    )));
                }
                if (omegas[hi] - omega).abs() <= tol || hi == 0 {
                    return Ok(matrices[hi]);
                }
                let t = (omega - omegas[hi - 1]) / (omegas[hi] - omegas[hi - 1]);
                Ok(matrices[hi - 1] * C64::from(1.0 - t) + matrices[hi] * C64::from(t))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    #[serde(with = "serial::vec3")]
    pub position: Vec3,
    /// Fixed point near the scatterers defining the source polarization basis.
    #[serde(with = "serial::vec3")]
    pub reference: Vec3,
    pub coherency: SourceCoherency,
}

impl SourceSpec {
    pub fn basis(&self) -> Result<Basis32> {
        source_basis(&self.position, &self.reference)
    }

    /// `J̃_s(ω)`, checked Hermitian.
    pub fn coherency_at(&self, omega: f64) -> Result<CMat2> {
        let j = self.coherency.at(omega)?;
        let res = hermitian_residual(&j);
        if res > 1e-10 {
            return Err(Error::NotHermitian(res));
        }
        Ok(j)
    }
}

/// Square-grid receiver array of side `side` in the plane `x3 = 0`,
/// centered at the origin. Endpoints included: spacing `side/(n−1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeom {
    pub side: f64,
    pub n1: usize,
    pub n2: usize,
}

impl ArrayGeom {
    pub fn square(side: f64, n: usize) -> Self {
        ArrayGeom { side, n1: n, n2: n }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.side > 0.0) || self.n1 < 2 || self.n2 < 2 {
            return Err(Error::invalid(format!(
                "array needs side > 0 and >= 2 receivers per axis, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> (f64, f64) {
        (
            self.side / (self.n1 - 1) as f64,
            self.side / (self.n2 - 1) as f64,
        )
    }

    /// Quadrature weight of each receiver cell.
    pub fn weight(&self) -> f64 {
        let (h1, h2) = self.spacing();
        h1 * h2
    }

    /// Receiver at grid row `i` (along x1) and column `j` (along x2).
    pub fn receiver(&self, i: usize, j: usize) -> Vec3 {
        let (h1, h2) = self.spacing();
        Vec3::new(
            -self.side / 2.0 + i as f64 * h1,
            -self.side / 2.0 + j as f64 * h2,
            0.0,
        )
    }

    /// Receiver with row-major index `r`.
    pub fn receiver_at(&self, r: usize) -> Vec3 {
        self.receiver(r / self.n2, r % self.n2)
    }

    /// All receivers, row-major.
    pub fn receivers(&self) -> Vec<Vec3> {
        (0..self.n1)
            .flat_map(|i| (0..self.n2).map(move |j| (i, j)))
            .map(|(i, j)| self.receiver(i, j))
            .collect()
    }

    pub fn corners(&self) -> [Vec3; 4] {
        let h = self.side / 2.0;
        [
            Vec3::new(-h, -h, 0.0),
            Vec3::new(h, -h, 0.0),
            Vec3::new(-h, h, 0.0),
            Vec3::new(h, h, 0.0),
        ]
    }
}

/// Box `[−b/2,b/2]² × [L−h/2, L+h/2]` around `center`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImagingWindow {
    #[serde(with = "serial::vec3")]
    pub center: Vec3,
    /// Cross-range extent `b`.
    pub cross: f64,
    /// Range extent `h`.
    pub range: f64,
}

impl ImagingWindow {
    pub fn contains(&self, p: &Vec3) -> bool {
        let d = p - self.center;
        let eps = 1e-9 * (self.cross + self.range);
        d.x.abs() <= self.cross / 2.0 + eps
            && d.y.abs() <= self.cross / 2.0 + eps
            && d.z.abs() <= self.range / 2.0 + eps
    }

    /// Distance from the array plane to the window center.
    pub fn depth(&self) -> f64 {
        self.center.z
    }
}

/// Uniform grid of `count` angular frequencies on `[ω0 − B/2, ω0 + B/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyBand {
    pub center: f64,
    pub bandwidth: f64,
    pub count: usize,
}

impl FrequencyBand {
    pub fn from_hz(lo: f64, hi: f64, count: usize) -> Self {
        let tau = std::f64::consts::TAU;
        FrequencyBand {
            center: tau * (lo + hi) / 2.0,
            bandwidth: tau * (hi - lo),
            count,
        }
    }

    /// A single frequency, for single-frequency work.
    pub fn single(omega: f64) -> Self {
        FrequencyBand {
            center: omega,
            bandwidth: 0.0,
            count: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 || !(self.center - self.bandwidth / 2.0 > 0.0) || self.bandwidth < 0.0 {
            return Err(Error::invalid(format!("invalid frequency band {self:?}")));
        }
        if self.count == 1 && self.bandwidth != 0.0 {
            return Err(Error::invalid(
                "a band with nonzero width needs at least 2 frequencies",
            ));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.bandwidth / (self.count - 1) as f64
        }
    }

    pub fn omega(&self, f: usize) -> f64 {
        if self.count < 2 {
            self.center
        } else {
            self.center - self.bandwidth / 2.0 + f as f64 * self.step()
        }
    }

    pub fn omegas(&self) -> Vec<f64> {
        (0..self.count).map(|f| self.omega(f)).collect()
    }

    pub fn wavenumber(&self, f: usize) -> Result<Wavenumber> {
        Wavenumber::from_omega(self.omega(f))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub source: SourceSpec,
    pub array: ArrayGeom,
    pub window: ImagingWindow,
    pub scatterers: Vec<Scatterer>,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        self.array.validate()?;
        for s in &self.scatterers {
            s.validate()?;
            if !self.window.contains(&s.position) {
                return Err(Error::invalid(format!(
                    "scatterer at {:?} lies outside the imaging window",
                    s.position
                )));
            }
        }
        self.source.basis()?;
        Ok(())
    }

    pub fn meta(&self, band: FrequencyBand) -> DataMeta {
        DataMeta {
            array: self.array,
            source: self.source.clone(),
            band,
        }
    }
}

/// Per-frequency precomputation of the scatterers' secondary sources.
pub(crate) struct Secondary {
    positions: Vec<Vec3>,
    /// `α_n G(y_n, x_s)` plus, optionally, the double-scattering feed.
    sources: Vec<CMat3>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Order {
    Born,
    SecondOnly,
    BornPlusSecond,
}

impl Secondary {
    fn new(scene: &Scene, k: Wavenumber, order: Order) -> Result<Self> {
        let x_s = scene.source.position;
        let sc = &scene.scatterers;
        let direct = sc
            .iter()
            .map(|s| Ok(s.alpha * dyadic_green(&s.position, &x_s, k)?))
            .collect::<Result<Vec<_>>>()?;
        let sources = if order == Order::Born {
            direct
        } else {
            let mut out = Vec::with_capacity(sc.len());
            for (n, s) in sc.iter().enumerate() {
                let mut feed = CMat3::zeros();
                for (m, t) in sc.iter().enumerate() {
                    if m != n {
                        feed += dyadic_green(&s.position, &t.position, k)? * direct[m];
                    }
                }
                let second = s.alpha * feed;
                out.push(if order == Order::SecondOnly {
                    second
                } else {
                    second + direct[n]
                });
            }
            out
        };
        Ok(Secondary {
            positions: sc.iter().map(|s| s.position).collect(),
            sources,
        })
    }

    pub(crate) fn born(scene: &Scene, k: Wavenumber) -> Result<Self> {
        Self::new(scene, k, Order::Born)
    }

    pub(crate) fn at(&self, x_r: &Vec3, k: Wavenumber) -> Result<CMat3> {
        let mut acc = CMat3::zeros();
        for (y, src) in self.positions.iter().zip(&self.sources) {
            acc += dyadic_green(x_r, y, k)? * src;
        }
        Ok(acc)
    }
}

fn response(scene: &Scene, k: Wavenumber, order: Order) -> Result<Vec<CMat3>> {
    let sec = Secondary::new(scene, k, order)?;
    scene
        .array
        .receivers()
        .par_iter()
        .map(|x| sec.at(x, k))
        .collect()
}

/// Single-scattering array response `Π(x_r)` at every receiver (row-major).
pub fn born_response(scene: &Scene, k: Wavenumber) -> Result<Vec<CMat3>> {
    response(scene, k, Order::Born)
}

/// Double-scattering term `Π₂(x_r)`.
pub fn second_born_response(scene: &Scene, k: Wavenumber) -> Result<Vec<CMat3>> {
    response(scene, k, Order::SecondOnly)
}

/// Array response over a band as a `response3x3` dataset.
pub fn response_dataset(
    scene: &Scene,
    band: FrequencyBand,
    second_born: bool,
) -> Result<ArrayDataSet> {
    band.validate()?;
    let order = if second_born {
        Order::BornPlusSecond
    } else {
        Order::Born
    };
    let secs = (0..band.count)
        .map(|f| Secondary::new(scene, band.wavenumber(f)?, order))
        .collect::<Result<Vec<_>>>()?;
    let blocks = scene
        .array
        .receivers()
        .par_iter()
        .map(|x| {
            let mut block = Vec::with_capacity(band.count * 9);
            for (f, sec) in secs.iter().enumerate() {
                let m = sec.at(x, band.wavenumber(f)?)?;
                block.extend_from_slice(m.transpose().as_slice());
            }
            Ok(block)
        })
        .collect::<Result<Vec<_>>>()?;
    ArrayDataSet::from_blocks(DataKind::Response3x3, scene.meta(band), blocks)
}

/// Projected incident field `G̃ = U∥ᵀ G(x_r, x_s) U_s`.
pub fn gtilde(x_r: &Vec3, x_s: &Vec3, y0: &Vec3, k: Wavenumber) -> Result<CMat2> {
    let us = source_basis(x_s, y0)?;
    Ok(Basis32::cross_range().compress(&dyadic_green(x_r, x_s, k)?, &us))
}

/// Coherency matrices `Ψ = (G̃ + Π̃) J̃_s (G̃ + Π̃)*` at every receiver and frequency.
pub fn coherency_synthesize(
    scene: &Scene,
    band: FrequencyBand,
    second_born: bool,
) -> Result<ArrayDataSet> {
    let resp = response_dataset(scene, band, second_born)?;
    coherency_from_response(scene, &resp)
}

/// Coherency data generated by a given array response.
pub fn coherency_from_response(scene: &Scene, resp: &ArrayDataSet) -> Result<ArrayDataSet> {
    let band = resp.meta.band;
    let us = scene.source.basis()?;
    let up = Basis32::cross_range();
    let x_s = scene.source.position;
    let js = band
        .omegas()
        .iter()
        .map(|&w| scene.source.coherency_at(w))
        .collect::<Result<Vec<_>>>()?;
    let blocks = scene
        .array
        .receivers()
        .par_iter()
        .enumerate()
        .map(|(r, x)| {
            let mut block = Vec::with_capacity(band.count * 4);
            for (f, j) in js.iter().enumerate() {
                let k = band.wavenumber(f)?;
                let g = up.compress(&dyadic_green(x, &x_s, k)?, &us);
                let p = up.compress(&resp.mat3(r, f), &us);
                let psi = four_term(&g, &p, j);
                block.extend_from_slice(psi.transpose().as_slice());
            }
            Ok(block)
        })
        .collect::<Result<Vec<_>>>()?;
    ArrayDataSet::from_blocks(DataKind::Coherency2x2, scene.meta(band), blocks)
}

/// `G̃JG̃* + Π̃JG̃* + G̃JΠ̃* + Π̃JΠ̃*`, made exactly Hermitian.
pub fn four_term(g: &CMat2, p: &CMat2, j: &CMat2) -> CMat2 {
    let t = g + p;
    let m = t * j * t.adjoint();
    (m + m.adjoint()) * C64::from(0.5)
}

/// Cubic lattice of identical dipoles filling a cube.
pub fn build_cube_scene(
    center: Vec3,
    side: f64,
    spacing: f64,
    alpha0: CMat3,
) -> Result<Vec<Scatterer>> {
    if !(spacing > 0.0) || side < spacing {
        return Err(Error::invalid("cube needs spacing > 0 and side >= spacing"));
    }
    let n = (side / spacing + 1e-9).floor() as usize + 1;
    let start = center - Vec3::repeat(side / 2.0);
    let mut out = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for l in 0..n {
                let p = start + Vec3::new(i as f64, j as f64, l as f64) * spacing;
                out.push(Scatterer::new(p, alpha0)?);
            }
        }
    }
    Ok(out)
}
