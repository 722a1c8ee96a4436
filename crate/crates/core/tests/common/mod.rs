#![allow(dead_code)]

use polarmig::config::{reference_tensors, ExperimentConfig, REFERENCE_POSITIONS};
use polarmig::linalg::{CMat2, CMat3, Vec3, C64};
use polarmig::scene::{FrequencyBand, Scatterer, Scene};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LAMBDA0: f64 = 0.125;
pub const L: f64 = 100.0 * LAMBDA0;
pub const NORMS: [f64; 3] = [3.44, 3.93, 3.82];

pub fn lam(x: f64) -> f64 {
    x * LAMBDA0
}

pub fn y0() -> Vec3 {
    Vec3::new(0.0, 0.0, L)
}

pub fn reference_points() -> Vec<Vec3> {
    REFERENCE_POSITIONS
        .iter()
        .map(|p| Vec3::new(lam(p[0]), lam(p[1]), lam(p[2])))
        .collect()
}

/// Reference scene with `n × n` receivers and the given scatterers.
pub fn scene_with(n: usize, scatterers: Vec<Scatterer>) -> Scene {
    let mut s = ExperimentConfig::reference(n, 2).scene().unwrap();
    s.scatterers = scatterers;
    s
}

pub fn three_dipoles(n: usize) -> Scene {
    let sc = reference_points()
        .into_iter()
        .zip(reference_tensors())
        .map(|(p, a)| Scatterer::new(p, a).unwrap())
        .collect();
    scene_with(n, sc)
}

pub fn single(n: usize, at: Vec3, alpha: CMat3) -> Scene {
    scene_with(n, vec![Scatterer::new(at, alpha).unwrap()])
}

pub fn reference_band(count: usize) -> FrequencyBand {
    FrequencyBand::from_hz(1.2e9, 3.6e9, count)
}

pub fn omega0() -> f64 {
    std::f64::consts::TAU * 2.4e9
}

pub type Rng8 = ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cplx(rng: &mut impl Rng) -> C64 {
    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

pub fn random_symmetric(rng: &mut impl Rng) -> CMat3 {
    let mut a = CMat3::zeros();
    for i in 0..3 {
        for j in i..3 {
            let z = cplx(rng);
            a[(i, j)] = z;
            a[(j, i)] = z;
        }
    }
    a
}

pub fn random_hermitian_pd(rng: &mut impl Rng) -> CMat2 {
    let m = CMat2::new(cplx(rng), cplx(rng), cplx(rng), cplx(rng));
    m * m.adjoint() + CMat2::identity() * C64::from(0.5)
}

/// Random point inside the reference imaging window.
pub fn window_point(rng: &mut impl Rng) -> Vec3 {
    Vec3::new(
        lam(rng.random_range(-14.0..14.0)),
        lam(rng.random_range(-14.0..14.0)),
        lam(rng.random_range(86.0..114.0)),
    )
}

pub fn rel<M: std::ops::Sub<Output = M> + Copy>(a: M, b: M, norm: impl Fn(&M) -> f64) -> f64 {
    norm(&(a - b)) / norm(&b)
}

/// Index of the first interior local minimum of `v`.
pub fn first_local_min(v: &[f64]) -> Option<usize> {
    (1..v.len() - 1).find(|&i| v[i] < v[i - 1] && v[i] <= v[i + 1])
}
