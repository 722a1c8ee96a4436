//! Kirchhoff migration, spread functions, tensor recovery and the
//! source-placement check.

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    flatten, read_container, unflatten, write_container, ArrayDataSet, DataKind, Header,
};
use crate::em::{dyad, dyadic_green, source_basis, Wavenumber};
use crate::error::{Error, Result};
use crate::linalg::{complexify, trapezoid_weights, Basis32, CMat2, CMat3, Vec3, C64};
use crate::scene::{ArrayGeom, ImagingWindow};
use crate::serial;

/// Largest grid a full-volume image may have.
pub const MAX_VOLUME_POINTS: usize = 250_000;

/// Axis-aligned imaging grid; index `(i0, i1, i2)` runs along x1, x2, x3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    #[serde(with = "serial::vec3")]
    pub origin: Vec3,
    pub step: [f64; 3],
    pub counts: [usize; 3],
}

impl ImageGrid {
    pub fn new(origin: Vec3, step: [f64; 3], counts: [usize; 3]) -> Result<Self> {
        if counts.contains(&0) || step.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid(
                "image grid needs positive counts and finite steps",
            ));
        }
        Ok(ImageGrid {
            origin,
            step,
            counts,
        })
    }

    /// One point.
    pub fn point(y: Vec3) -> Self {
        ImageGrid {
            origin: y,
            step: [0.0; 3],
            counts: [1; 3],
        }
    }

    fn axis(center: f64, extent: f64, spacing: f64) -> (f64, usize) {
        let half = (extent / 2.0 / spacing + 1e-9).floor() as usize;
        (center - half as f64 * spacing, 2 * half + 1)
    }

    /// Plane `x3 = depth` over the window's cross-range extent.
    pub fn cross_range_slice(w: &ImagingWindow, depth: f64, spacing: f64) -> Result<Self> {
        let (o1, n1) = Self::axis(w.center.x, w.cross, spacing);
        let (o2, n2) = Self::axis(w.center.y, w.cross, spacing);
        Self::new(
            Vec3::new(o1, o2, depth),
            [spacing, spacing, 0.0],
            [n1, n2, 1],
        )
    }

    /// Plane `x2 = x2` over the window's cross-range (x1) and range extent.
    pub fn range_slice(w: &ImagingWindow, x2: f64, spacing: f64) -> Result<Self> {
        let (o1, n1) = Self::axis(w.center.x, w.cross, spacing);
        let (o3, n3) = Self::axis(w.center.z, w.range, spacing);
        Self::new(Vec3::new(o1, x2, o3), [spacing, 0.0, spacing], [n1, 1, n3])
    }

    /// Full window volume, refused above [`MAX_VOLUME_POINTS`].
    pub fn volume(w: &ImagingWindow, spacing: f64) -> Result<Self> {
        let (o1, n1) = Self::axis(w.center.x, w.cross, spacing);
        let (o2, n2) = Self::axis(w.center.y, w.cross, spacing);
        let (o3, n3) = Self::axis(w.center.z, w.range, spacing);
        if n1 * n2 * n3 > MAX_VOLUME_POINTS {
            return Err(Error::invalid(format!(
                "volume grid of {} points exceeds the limit of {MAX_VOLUME_POINTS}",
                n1 * n2 * n3
            )));
        }
        Self::new(Vec3::new(o1, o2, o3), [spacing; 3], [n1, n2, n3])
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: [usize; 3]) -> usize {
        (i[0] * self.counts[1] + i[1]) * self.counts[2] + i[2]
    }

    pub fn unindex(&self, n: usize) -> [usize; 3] {
        let i2 = n % self.counts[2];
        let i1 = (n / self.counts[2]) % self.counts[1];
        [n / (self.counts[1] * self.counts[2]), i1, i2]
    }

    pub fn at(&self, i: [usize; 3]) -> Vec3 {
        self.origin
            + Vec3::new(
                i[0] as f64 * self.step[0],
                i[1] as f64 * self.step[1],
                i[2] as f64 * self.step[2],
            )
    }

    pub fn points(&self) -> Vec<Vec3> {
        (0..self.len()).map(|n| self.at(self.unindex(n))).collect()
    }

    /// Grid index closest to `p`.
    pub fn nearest(&self, p: &Vec3) -> [usize; 3] {
        let mut out = [0; 3];
        for a in 0..3 {
            if self.counts[a] > 1 && self.step[a] > 0.0 {
                let t = ((p[a] - self.origin[a]) / self.step[a]).round();
                out[a] = t.clamp(0.0, (self.counts[a] - 1) as f64) as usize;
            }
        }
        out
    }
}

/// Matrix types an image can hold.
pub trait FieldValue: Copy + Send + Sync + std::fmt::Debug {
    const KIND: DataKind;
    const DIM: usize;
    fn frobenius(&self) -> f64;
    fn row_major(&self) -> Vec<C64>;
    fn from_row_major(v: &[C64]) -> Self;
}

impl FieldValue for CMat3 {
    const KIND: DataKind = DataKind::Image3x3;
    const DIM: usize = 3;
    fn frobenius(&self) -> f64 {
        self.norm()
    }
    fn row_major(&self) -> Vec<C64> {
        self.transpose().as_slice().to_vec()
    }
    fn from_row_major(v: &[C64]) -> Self {
        CMat3::from_row_slice(v)
    }
}

impl FieldValue for CMat2 {
    const KIND: DataKind = DataKind::Image2x2;
    const DIM: usize = 2;
    fn frobenius(&self) -> f64 {
        self.norm()
    }
    fn row_major(&self) -> Vec<C64> {
        self.transpose().as_slice().to_vec()
    }
    fn from_row_major(v: &[C64]) -> Self {
        CMat2::from_row_slice(v)
    }
}

/// Matrix field over an [`ImageGrid`] with cached Frobenius norms.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageField<M> {
    pub grid: ImageGrid,
    values: Vec<M>,
    norms: Vec<f64>,
}

impl<M: FieldValue> ImageField<M> {
    pub fn new(grid: ImageGrid, values: Vec<M>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invalid(format!(
                "{} values for a grid of {}",
                values.len(),
                grid.len()
            )));
        }
        let norms = values.iter().map(M::frobenius).collect();
        Ok(ImageField {
            grid,
            values,
            norms,
        })
    }

    pub fn values(&self) -> &[M] {
        &self.values
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn get(&self, i: [usize; 3]) -> &M {
        &self.values[self.grid.index(i)]
    }

    /// Index of the largest norm; the lowest index wins ties.
    pub fn argmax(&self) -> [usize; 3] {
        let mut best = 0;
        for (n, v) in self.norms.iter().enumerate() {
            if *v > self.norms[best] {
                best = n;
            }
        }
        self.grid.unindex(best)
    }

    pub fn max_norm(&self) -> f64 {
        self.norms.iter().copied().fold(0.0, f64::max)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let [a, b, c] = self.grid.counts;
        let header = Header {
            kind: M::KIND,
            shape: vec![a, b, c, M::DIM, M::DIM, 2],
            meta: serde_json::json!({ "grid": self.grid }),
        };
        let flat: Vec<C64> = self.values.iter().flat_map(M::row_major).collect();
        write_container(path, &header, &flatten(&flat))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let (h, payload) = read_container(path)?;
        if h.kind != M::KIND {
            return Err(Error::invalid(format!(
                "expected {:?}, file holds {:?}",
                M::KIND,
                h.kind
            )));
        }
        let grid: ImageGrid = serde_json::from_value(h.meta["grid"].clone())?;
        let [a, b, c] = grid.counts;
        if h.shape != [a, b, c, M::DIM, M::DIM, 2] {
            return Err(Error::invalid("image shape disagrees with its grid"));
        }
        let z = unflatten(&payload);
        let values = z
            .chunks_exact(M::DIM * M::DIM)
            .map(M::from_row_major)
            .collect();
        Self::new(grid, values)
    }
}

fn require_response(ds: &ArrayDataSet) -> Result<()> {
    match ds.kind {
        DataKind::Response3x3 | DataKind::Preprocessed3x3 => Ok(()),
        k => Err(Error::invalid(format!(
            "migration needs 3x3 array data, got {k:?}"
        ))),
    }
}

/// Per-frequency image and receiver spread at one point.
#[derive(Debug, Clone, Copy)]
pub struct PointSpectrum {
    pub image: CMat3,
    pub hr: CMat3,
}

/// Single-frequency images (and `H_r(y,y)`) at `y` for every frequency of `ds`.
/// Receivers are summed in a fixed order.
pub fn point_spectrum(ds: &ArrayDataSet, y: &Vec3) -> Result<Vec<PointSpectrum>> {
    require_response(ds)?;
    let band = ds.meta.band;
    let ks = (0..band.count)
        .map(|f| band.wavenumber(f))
        .collect::<Result<Vec<_>>>()?;
    let nf = ks.len();
    let mut acc_i = vec![CMat3::zeros(); nf];
    let mut acc_h = vec![CMat3::zeros(); nf];
    let array = &ds.meta.array;
    for r in 0..ds.receivers() {
        let x = array.receiver_at(r);
        let d = x - y;
        let dist = d.norm();
        if dist <= 1e-12 * 1f64.max(x.norm()).max(y.norm()) {
            return Err(Error::Coincident(x, *y));
        }
        for (f, k) in ks.iter().enumerate() {
            let gc = dyad(&d, dist, k.get()).map(|z| z.conj());
            acc_i[f] += gc * ds.mat3(r, f);
            acc_h[f] += gc * gc.map(|z| z.conj());
        }
    }
    let w = C64::from(array.weight());
    let x_s = ds.meta.source.position;
    ks.iter()
        .enumerate()
        .map(|(f, k)| {
            let gs = dyadic_green(&x_s, y, *k)?.map(|z| z.conj());
            Ok(PointSpectrum {
                image: acc_i[f] * gs * w,
                hr: acc_h[f] * w,
            })
        })
        .collect()
}

/// `I_KM(y; k_f)` for frequency index `f` of the dataset.
pub fn kirchhoff_single(ds: &ArrayDataSet, f: usize, y: &Vec3) -> Result<CMat3> {
    if f >= ds.freqs() {
        return Err(Error::invalid("frequency index out of range"));
    }
    let mut one = ds.meta.clone();
    one.band = crate::scene::FrequencyBand::single(ds.meta.band.omega(f));
    let mut sub = ArrayDataSet::zeros(ds.kind, one)?;
    for r in 0..ds.receivers() {
        sub.set_mat3(r, 0, &ds.mat3(r, f));
    }
    Ok(point_spectrum(&sub, y)?[0].image)
}

fn band_weights(ds: &ArrayDataSet) -> Result<Vec<f64>> {
    let band = ds.meta.band;
    if band.count < 2 {
        return Err(Error::invalid(
            "band integration needs at least 2 frequencies",
        ));
    }
    Ok(trapezoid_weights(band.count, band.step()))
}

/// Trapezoid integral over the band of the single-frequency images at `y`.
pub fn kirchhoff_band(ds: &ArrayDataSet, y: &Vec3) -> Result<CMat3> {
    let w = band_weights(ds)?;
    let spec = point_spectrum(ds, y)?;
    Ok(spec
        .iter()
        .zip(&w)
        .fold(CMat3::zeros(), |acc, (s, w)| acc + s.image * C64::from(*w)))
}

/// Band image over a grid.
pub fn image_band(ds: &ArrayDataSet, grid: &ImageGrid) -> Result<ImageField<CMat3>> {
    let values = grid
        .points()
        .par_iter()
        .map(|y| kirchhoff_band(ds, y))
        .collect::<Result<Vec<_>>>()?;
    ImageField::new(*grid, values)
}

/// Single-frequency image over a grid.
pub fn image_single(ds: &ArrayDataSet, f: usize, grid: &ImageGrid) -> Result<ImageField<CMat3>> {
    let values = grid
        .points()
        .par_iter()
        .map(|y| kirchhoff_single(ds, f, y))
        .collect::<Result<Vec<_>>>()?;
    ImageField::new(*grid, values)
}

/// `H_s(y, y') = conj(G(x_s,y)) G(x_s,y')`.
pub fn h_s(y: &Vec3, y2: &Vec3, k: Wavenumber, x_s: &Vec3) -> Result<CMat3> {
    Ok(dyadic_green(x_s, y, k)?.map(|z| z.conj()) * dyadic_green(x_s, y2, k)?)
}

/// `H_r(y, y') = Σ_r w conj(G(x_r,y)) G(x_r,y')`.
pub fn h_r(y: &Vec3, y2: &Vec3, k: Wavenumber, array: &ArrayGeom) -> Result<CMat3> {
    let mut acc = CMat3::zeros();
    for x in array.receivers() {
        acc += dyadic_green(&x, y, k)?.map(|z| z.conj()) * dyadic_green(&x, y2, k)?;
    }
    Ok(acc * C64::from(array.weight()))
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Far-field closed form of `H_r` for a square array at depth `depth`.
pub fn h_r_fraunhofer(y: &Vec3, y2: &Vec3, k: Wavenumber, side: f64, depth: f64) -> CMat3 {
    let k = k.get();
    let scale = side * side / (4.0 * PI * depth).powi(2);
    let s = sinc(k * side * (y.x - y2.x) / (2.0 * depth))
        * sinc(k * side * (y.y - y2.y) / (2.0 * depth));
    let phase = C64::from_polar(scale * s, k * (y2.z - y.z));
    complexify(&Basis32::cross_range().projector()) * phase
}

/// Far-field form of `(4πL)² H_s`: a phase times `P_s`.
pub fn h_s_fraunhofer(y: &Vec3, y2: &Vec3, k: Wavenumber, x_s: &Vec3, y0: &Vec3) -> Result<CMat3> {
    let ps = source_basis(x_s, y0)?.projector();
    let phase = C64::from_polar(1.0, k.get() * ((x_s - y2).norm() - (x_s - y).norm()));
    Ok(complexify(&ps) * phase)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryMode {
    /// Invert the computed 2×2 spread factors.
    #[default]
    Exact,
    /// Scale by `(4πL)⁴ / mes A`.
    Fraunhofer,
}

/// Everything the recovery needs besides the image.
#[derive(Debug, Clone, Copy)]
pub struct RecoveryGeom {
    pub x_s: Vec3,
    pub basis: Basis32,
    pub side: f64,
    pub depth: f64,
}

impl RecoveryGeom {
    pub fn from_dataset(ds: &ArrayDataSet) -> Result<Self> {
        let src = &ds.meta.source;
        Ok(RecoveryGeom {
            x_s: src.position,
            basis: src.basis()?,
            side: ds.meta.array.side,
            depth: src.reference.z,
        })
    }
}

/// Projected tensor `α̃` from the image value at `y` and `H_r(y,y)`.
pub fn recover_alpha_single(
    image: &CMat3,
    hr: &CMat3,
    y: &Vec3,
    k: Wavenumber,
    geom: &RecoveryGeom,
    mode: RecoveryMode,
) -> Result<CMat2> {
    let up = Basis32::cross_range();
    let it = up.compress(image, &geom.basis);
    match mode {
        RecoveryMode::Fraunhofer => {
            let mes = geom.side * geom.side;
            if !(mes > 0.0) {
                return Err(Error::invalid("array area must be positive"));
            }
            Ok(it * C64::from((4.0 * PI * geom.depth).powi(4) / mes))
        }
        RecoveryMode::Exact => {
            let left = up.compress(hr, &up);
            let right = geom.basis.compress(&h_s(y, y, k, &geom.x_s)?, &geom.basis);
            let inv = |m: CMat2, what: &str| {
                let cond = crate::linalg::cond2(&m);
                if cond > 1e12 {
                    return Err(Error::Singular {
                        what: what.into(),
                        cond,
                    });
                }
                m.try_inverse().ok_or(Error::Singular {
                    what: what.into(),
                    cond,
                })
            };
            Ok(inv(left, "receiver spread factor")? * it * inv(right, "source spread factor")?)
        }
    }
}

/// Per-frequency recovered tensors at `y`.
pub fn recover_spectrum(ds: &ArrayDataSet, y: &Vec3, mode: RecoveryMode) -> Result<Vec<CMat2>> {
    let geom = RecoveryGeom::from_dataset(ds)?;
    let band = ds.meta.band;
    point_spectrum(ds, y)?
        .iter()
        .enumerate()
        .map(|(f, s)| recover_alpha_single(&s.image, &s.hr, y, band.wavenumber(f)?, &geom, mode))
        .collect()
}

/// `(1/B) ∫ α̃(ω) dω` by the trapezoid rule.
pub fn recover_alpha_band(alphas: &[CMat2], band_step: f64) -> Result<CMat2> {
    if alphas.len() < 2 {
        return Err(Error::invalid(
            "band averaging needs at least 2 frequencies",
        ));
    }
    let w = trapezoid_weights(alphas.len(), band_step);
    let total: f64 = w.iter().sum();
    Ok(alphas.iter().zip(&w).fold(CMat2::zeros(), |acc, (a, w)| {
        acc + a * C64::from(*w / total)
    }))
}

/// Band-averaged tensor estimate over a grid.
pub fn recover_field(
    ds: &ArrayDataSet,
    grid: &ImageGrid,
    mode: RecoveryMode,
) -> Result<ImageField<CMat2>> {
    let step = ds.meta.band.step();
    let values = grid
        .points()
        .par_iter()
        .map(|y| recover_alpha_band(&recover_spectrum(ds, y, mode)?, step))
        .collect::<Result<Vec<_>>>()?;
    ImageField::new(*grid, values)
}

/// Band image and band-averaged recovered tensor over a grid, sharing one
/// pass over the receivers per point.
pub fn image_and_recover(
    ds: &ArrayDataSet,
    grid: &ImageGrid,
    mode: RecoveryMode,
) -> Result<(ImageField<CMat3>, ImageField<CMat2>)> {
    let w = band_weights(ds)?;
    let geom = RecoveryGeom::from_dataset(ds)?;
    let band = ds.meta.band;
    let pairs = grid
        .points()
        .par_iter()
        .map(|y| {
            let spec = point_spectrum(ds, y)?;
            let image = spec
                .iter()
                .zip(&w)
                .fold(CMat3::zeros(), |acc, (s, w)| acc + s.image * C64::from(*w));
            let alphas = spec
                .iter()
                .enumerate()
                .map(|(f, s)| {
                    recover_alpha_single(&s.image, &s.hr, y, band.wavenumber(f)?, &geom, mode)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((image, recover_alpha_band(&alphas, band.step())?))
        })
        .collect::<Result<Vec<_>>>()?;
    let (images, alphas): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    Ok((
        ImageField::new(*grid, images)?,
        ImageField::new(*grid, alphas)?,
    ))
}

/// Rotates every tensor so its (1,1) entry is real and non-negative,
/// regularized by `δ = δ_rel · max |α̃₁₁|`.
pub fn phase_correct(field: &ImageField<CMat2>, delta_rel: f64) -> Result<ImageField<CMat2>> {
    if !(delta_rel >= 0.0) {
        return Err(Error::invalid(
            "phase-correction delta must be non-negative",
        ));
    }
    let peak = field
        .values()
        .iter()
        .map(|a| a[(0, 0)].norm())
        .fold(0.0, f64::max);
    let delta = delta_rel * peak;
    let values = field
        .values()
        .iter()
        .map(|a| {
            let a11 = a[(0, 0)];
            let den = a11.norm() + delta;
            let factor = if den > 0.0 {
                a11.conj() / den
            } else {
                C64::from(0.0)
            };
            a * factor
        })
        .collect();
    ImageField::new(field.grid, values)
}

/// Cone-union placement check for the source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub gamma: f64,
    /// Cone slope `c`.
    pub slope: f64,
    pub admissible: bool,
    /// `min_r |x_r∥ − x_s∥| / |x_r − x_s| − γc`; negative when violated.
    pub margin: f64,
}

/// Slope `c = (a+b)/√((2L−h)² + (a+b)²)`.
pub fn cone_slope(side: f64, window: &ImagingWindow) -> f64 {
    let (ab, l2h) = (side + window.cross, 2.0 * window.depth() - window.range);
    ab / (l2h * l2h + ab * ab).sqrt()
}

pub fn region_check(
    array: &ArrayGeom,
    window: &ImagingWindow,
    x_s: &Vec3,
    gamma: f64,
) -> Result<RegionReport> {
    if gamma != 1.0 && gamma != 3.0 {
        return Err(Error::invalid(format!("gamma must be 1 or 3, got {gamma}")));
    }
    let slope = cone_slope(array.side, window);
    let ratio = |x: &Vec3| {
        let d = x - x_s;
        let n = d.norm();
        if n == 0.0 {
            0.0
        } else {
            (d.x * d.x + d.y * d.y).sqrt() / n
        }
    };
    let worst = array
        .receivers()
        .iter()
        .chain(array.corners().iter())
        .map(ratio)
        .fold(f64::INFINITY, f64::min);
    let margin = worst - gamma * slope;
    Ok(RegionReport {
        gamma,
        slope,
        admissible: margin > 0.0,
        margin,
    })
}

/// Range phase `φ(η) = η + |x_s − y|` for `y = (y∥, L + η)`.
pub fn range_phase(x_s: &Vec3, y_par: (f64, f64), depth: f64, eta: f64) -> f64 {
    eta + (x_s - Vec3::new(y_par.0, y_par.1, depth + eta)).norm()
}
