//! Stationary Gaussian source, received time signals, empirical
//! autocorrelations and ergodicity diagnostics.

use std::f64::consts::{PI, TAU};
use std::path::Path;
use std::sync::Arc;

use nalgebra::Matrix2;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dataset::{read_container, write_container, ArrayDataSet, DataKind, Header};
use crate::em::{dyadic_green, Wavenumber, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::linalg::{Basis32, CMat2, CMat3, Vec3, C64};
use crate::scene::{FrequencyBand, Scene, Secondary, SourceCoherency};

/// Power spectrum of the source correlation, `(1/2π)∫ J(τ) e^{iωτ} dτ`.
pub fn source_spectrum(omega: f64, corr_time: f64, omega0: f64) -> f64 {
    let s = corr_time * corr_time / (4.0 * PI);
    (-(omega - omega0).powi(2) * s).exp() + (-(omega + omega0).powi(2) * s).exp()
}

/// `J(τ) = (4π/t_c) cos(ω0 τ) exp(−π (τ/t_c)²)`.
pub fn source_correlation(tau: f64, corr_time: f64, omega0: f64) -> f64 {
    4.0 * PI / corr_time * (omega0 * tau).cos() * (-PI * (tau / corr_time).powi(2)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceProcessSpec {
    pub corr_time: f64,
    pub omega0: f64,
    /// Sample interval in seconds.
    pub dt: f64,
    pub samples: usize,
    pub seed: u64,
}

impl SourceProcessSpec {
    /// `t_c = 1 ns`, 2.4 GHz carrier, `2T ≈ 532 ns` over 8001 samples.
    pub fn reference(seed: u64) -> Self {
        let half = 266e-9;
        SourceProcessSpec {
            corr_time: 1e-9,
            omega0: TAU * 2.4e9,
            dt: 2.0 * half / 8000.0,
            samples: 8001,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.corr_time > 0.0 && self.dt > 0.0 && self.omega0 > 0.0) || self.samples < 2 {
            return Err(Error::invalid(format!("invalid source process {self:?}")));
        }
        let top = self.omega0 + 3.0 * PI / self.corr_time;
        if PI / self.dt <= top {
            return Err(Error::invalid(format!(
                "sampling interval {:.3e} s does not resolve frequencies up to {:.3e} rad/s",
                self.dt, top
            )));
        }
        Ok(())
    }

    pub fn coherency(&self) -> SourceCoherency {
        SourceCoherency::Gaussian {
            corr_time: self.corr_time,
            omega0: self.omega0,
        }
    }
}

/// Multichannel real samples, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal {
    pub dt: f64,
    pub start: f64,
    channels: usize,
    data: Vec<f64>,
}

impl TimeSignal {
    pub fn new(dt: f64, start: f64, channels: Vec<Vec<f64>>) -> Result<Self> {
        let n = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != n) {
            return Err(Error::invalid("channels of unequal length"));
        }
        let data: Vec<f64> = channels.concat();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("time signal".into()));
        }
        Ok(TimeSignal {
            dt,
            start,
            channels: channels.len(),
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.channels).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn time(&self, i: usize) -> f64 {
        self.start + i as f64 * self.dt
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let h = Header {
            kind: DataKind::Timeseries,
            shape: vec![self.channels, self.len()],
            meta: serde_json::json!({ "dt": self.dt, "start": self.start }),
        };
        write_container(path, &h, &self.data)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let (h, data) = read_container(path)?;
        if h.kind != DataKind::Timeseries || h.shape.len() != 2 {
            return Err(Error::invalid("not a time series"));
        }
        let dt = h.meta["dt"]
            .as_f64()
            .ok_or_else(|| Error::invalid("missing dt"))?;
        let start = h.meta["start"]
            .as_f64()
            .ok_or_else(|| Error::invalid("missing start"))?;
        Ok(TimeSignal {
            dt,
            start,
            channels: h.shape[0],
            data,
        })
    }
}

/// Independent generator for `(seed, realization, stream)`.
pub fn stream_rng(seed: u64, realization: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream((realization << 16) | stream);
    rng
}

fn fft_pair(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    let mut planner = FftPlanner::new();
    (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
}

/// Angular frequency represented by FFT bin `q` of length `n`, under the
/// `e^{−iωt}` synthesis convention (forward bins carry `−ω`).
fn bin_omega(q: usize, n: usize, dt: f64) -> f64 {
    let signed = if q <= n / 2 {
        q as f64
    } else {
        q as f64 - n as f64
    };
    -TAU * signed / (n as f64 * dt)
}

/// One scalar realization of length `n` by spectral shaping of white noise.
fn synth_scalar(spec: &SourceProcessSpec, n: usize, rng: &mut ChaCha20Rng) -> Vec<f64> {
    let (fwd, inv) = fft_pair(n);
    let mut buf: Vec<C64> = (0..n)
        .map(|_| {
            let x: f64 = StandardNormal.sample(rng);
            C64::from(x)
        })
        .collect();
    fwd.process(&mut buf);
    for (q, z) in buf.iter_mut().enumerate() {
        let w = bin_omega(q, n, spec.dt);
        *z *= (TAU * source_spectrum(w, spec.corr_time, spec.omega0) / spec.dt).sqrt();
    }
    inv.process(&mut buf);
    buf.iter().map(|z| z.re / n as f64).collect()
}

/// Source realization: two independent processes along the columns of `basis`.
pub fn synth_source(
    spec: &SourceProcessSpec,
    basis: &Basis32,
    realization: u64,
) -> Result<TimeSignal> {
    spec.validate()?;
    synth_source_len(spec, basis, realization, spec.samples, 0.0)
}

fn synth_source_len(
    spec: &SourceProcessSpec,
    basis: &Basis32,
    realization: u64,
    n: usize,
    start: f64,
) -> Result<TimeSignal> {
    let comps: Vec<Vec<f64>> = (0..2)
        .map(|c| synth_scalar(spec, n, &mut stream_rng(spec.seed, realization, c)))
        .collect();
    let (u1, u2) = (basis.column(0), basis.column(1));
    let channels = (0..3)
        .map(|d| {
            comps[0]
                .iter()
                .zip(&comps[1])
                .map(|(a, b)| u1[d] * a + u2[d] * b)
                .collect()
        })
        .collect();
    TimeSignal::new(spec.dt, start, channels)
}

/// Frequency-domain propagation from the source to the receivers.
pub struct Propagator {
    n: usize,
    padded: usize,
    dt: f64,
    start: f64,
    /// `(bin, k, scatterer feed)` for the positive frequencies kept.
    bins: Vec<(usize, Wavenumber, Secondary)>,
    x_s: Vec3,
    source: Vec<Vec<C64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Propagator {
    /// Prepares the padded source spectrum; frequencies outside
    /// `band_limit` (rad/s) are dropped.
    pub fn new(scene: &Scene, source: &TimeSignal, band_limit: (f64, f64)) -> Result<Self> {
        if source.channels() != 3 {
            return Err(Error::invalid("source must have 3 channels"));
        }
        if !(band_limit.0 > 0.0 && band_limit.1 > band_limit.0) {
            return Err(Error::invalid("band limit must be 0 < lo < hi"));
        }
        let n = source.len();
        let padded = (2 * n).next_power_of_two();
        let (fwd, inv) = fft_pair(padded);
        let spectra = (0..3)
            .map(|c| {
                let mut buf: Vec<C64> = source.channel(c).iter().map(|&v| C64::from(v)).collect();
                buf.resize(padded, C64::from(0.0));
                fwd.process(&mut buf);
                buf
            })
            .collect();
        let mut bins = Vec::new();
        for q in (padded / 2 + 1)..padded {
            let w = bin_omega(q, padded, source.dt);
            if w >= band_limit.0 && w <= band_limit.1 {
                let k = Wavenumber::from_omega(w)?;
                bins.push((q, k, Secondary::born(scene, k)?));
            }
        }
        Ok(Propagator {
            n,
            padded,
            dt: source.dt,
            start: source.start,
            bins,
            x_s: scene.source.position,
            source: spectra,
            inv,
        })
    }

    /// `(G + Π) j` at receiver `x_r`, as a 3-channel signal on the source's time axis.
    pub fn received(&self, x_r: &Vec3) -> Result<TimeSignal> {
        let zero = C64::from(0.0);
        let mut out = vec![vec![zero; self.padded]; 3];
        for (q, k, sec) in &self.bins {
            let h: CMat3 = dyadic_green(x_r, &self.x_s, *k)? + sec.at(x_r, *k)?;
            let mirror = self.padded - q;
            for i in 0..3 {
                let (mut pos, mut neg) = (zero, zero);
                for j in 0..3 {
                    pos += h[(i, j)] * self.source[j][*q];
                    neg += h[(i, j)].conj() * self.source[j][mirror];
                }
                out[i][*q] = pos;
                out[i][mirror] = neg;
            }
        }
        let scale = 1.0 / self.padded as f64;
        let channels = out
            .into_iter()
            .map(|mut buf| {
                self.inv.process(&mut buf);
                buf[..self.n].iter().map(|z| z.re * scale).collect()
            })
            .collect();
        TimeSignal::new(self.dt, self.start, channels)
    }
}

/// Received signals at the given receiver positions.
pub fn simulate_received(
    scene: &Scene,
    source: &TimeSignal,
    band_limit: (f64, f64),
    receivers: &[Vec3],
) -> Result<Vec<TimeSignal>> {
    let prop = Propagator::new(scene, source, band_limit)?;
    receivers.par_iter().map(|x| prop.received(x)).collect()
}

/// Empirical cross-range autocorrelation `ψ(τ_l)`, `l = −m..=m`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagCorrelation {
    pub dt: f64,
    pub max_lag: usize,
    pub values: Vec<Matrix2<f64>>,
}

impl LagCorrelation {
    pub fn at(&self, lag: isize) -> &Matrix2<f64> {
        &self.values[(lag + self.max_lag as isize) as usize]
    }
}

/// Analysis window `[start, start + 2T)` in samples of the signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub first: usize,
    pub len: usize,
}

fn check_window(sig: &TimeSignal, w: Window, max_lag: usize) -> Result<()> {
    if sig.channels() < 2
        || w.len == 0
        || w.first < max_lag
        || w.first + w.len + max_lag > sig.len()
    {
        return Err(Error::invalid(format!(
            "window {w:?} with lag margin {max_lag} exceeds a signal of {} samples",
            sig.len()
        )));
    }
    Ok(())
}

/// `ψ(τ) = (1/2T) Σ_t E∥(t+τ) E∥(t)ᵀ Δt` over the window, via zero-padded FFT correlation.
pub fn empirical_autocorrelation(
    sig: &TimeSignal,
    w: Window,
    max_lag: usize,
) -> Result<LagCorrelation> {
    check_window(sig, w, max_lag)?;
    let seg = w.len + 2 * max_lag;
    let size = (2 * seg).next_power_of_two();
    let (fwd, inv) = fft_pair(size);
    let spectra = |windowed: bool| -> Vec<Vec<C64>> {
        (0..2)
            .map(|c| {
                let x = sig.channel(c);
                let mut buf = vec![C64::from(0.0); size];
                for (i, v) in x[w.first - max_lag..w.first + w.len + max_lag]
                    .iter()
                    .enumerate()
                {
                    let inside = i >= max_lag && i < max_lag + w.len;
                    if !windowed || inside {
                        buf[i] = C64::from(*v);
                    }
                }
                fwd.process(&mut buf);
                buf
            })
            .collect()
    };
    let (full, win) = (spectra(false), spectra(true));
    let m = max_lag as isize;
    let mut values = vec![Matrix2::zeros(); 2 * max_lag + 1];
    for i in 0..2 {
        for j in 0..2 {
            let mut buf: Vec<C64> = full[i]
                .iter()
                .zip(&win[j])
                .map(|(a, b)| a * b.conj())
                .collect();
            inv.process(&mut buf);
            for l in -m..=m {
                let idx = l.rem_euclid(size as isize) as usize;
                values[(l + m) as usize][(i, j)] = buf[idx].re / (size * w.len) as f64;
            }
        }
    }
    Ok(LagCorrelation {
        dt: sig.dt,
        max_lag,
        values,
    })
}

/// Frequency-domain estimators of the coherency matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SpectralEstimator {
    /// `(2π/2T) E_T(ω) E_T(ω)*` of the windowed field.
    Periodogram,
    /// Fourier transform of `ψ` truncated at `max_lag` seconds.
    LagWindow { max_lag: f64 },
}

/// `Ψ̂(ω) = (Δt/2π) Σ_l ψ(τ_l) e^{iωτ_l}`, symmetrized to be Hermitian.
pub fn lag_spectrum(corr: &LagCorrelation, omegas: &[f64]) -> Vec<CMat2> {
    let m = corr.max_lag as isize;
    omegas
        .iter()
        .map(|&w| {
            let step = C64::from_polar(1.0, w * corr.dt);
            let mut z = C64::from_polar(1.0, -w * corr.dt * m as f64);
            let mut acc = CMat2::zeros();
            for (n, psi) in corr.values.iter().enumerate() {
                if n % 256 == 0 {
                    z = C64::from_polar(1.0, w * corr.dt * (n as isize - m) as f64);
                }
                acc += psi.map(C64::from) * z;
                z *= step;
            }
            let est = acc * C64::from(corr.dt / TAU);
            (est + est.adjoint()) * C64::from(0.5)
        })
        .collect()
}

/// `(2π/2T) E_T E_T*` with `E_T(ω) = (Δt/2π) Σ_window E∥(t) e^{iωt}`.
pub fn periodogram(sig: &TimeSignal, w: Window, omegas: &[f64]) -> Result<Vec<CMat2>> {
    check_window(sig, w, 0)?;
    let two_t = w.len as f64 * sig.dt;
    Ok(omegas
        .iter()
        .map(|&om| {
            let mut e = [C64::from(0.0); 2];
            for (c, ec) in e.iter_mut().enumerate() {
                let x = sig.channel(c);
                for i in w.first..w.first + w.len {
                    *ec += C64::from_polar(x[i], om * sig.time(i));
                }
                *ec *= sig.dt / TAU;
            }
            let v = nalgebra::Vector2::new(e[0], e[1]);
            v * v.adjoint() * C64::from(TAU / two_t)
        })
        .collect())
}

/// Settings of the time-domain acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StochasticSettings {
    pub process: SourceProcessSpec,
    /// Discarded time before the analysis window, seconds.
    pub lead_in: f64,
    /// Simulated band `(lo, hi)` in rad/s.
    pub band_limit: (f64, f64),
    pub estimator: SpectralEstimator,
    pub realizations: usize,
}

impl StochasticSettings {
    /// Lead-in and lag window sized from the scene's path delays.
    pub fn for_scene(scene: &Scene, process: SourceProcessSpec, realizations: usize) -> Self {
        let spread = delay_spread(scene);
        let direct = max_direct_delay(scene);
        StochasticSettings {
            process,
            lead_in: direct + spread + 10.0 * process.corr_time,
            band_limit: (TAU * 0.5e9, TAU * 4.3e9),
            estimator: SpectralEstimator::LagWindow {
                max_lag: spread + 5.0 * process.corr_time,
            },
            realizations,
        }
    }

    fn lag_samples(&self) -> usize {
        match self.estimator {
            SpectralEstimator::Periodogram => 0,
            SpectralEstimator::LagWindow { max_lag } => (max_lag / self.process.dt).ceil() as usize,
        }
    }

    fn layout(&self) -> (usize, Window) {
        let lead = (self.lead_in / self.process.dt).ceil() as usize;
        let m = self.lag_samples();
        let first = lead.max(m);
        let w = Window {
            first,
            len: self.process.samples,
        };
        (first + w.len + m, w)
    }
}

fn probe_points(scene: &Scene) -> Vec<Vec3> {
    let mut pts: Vec<Vec3> = scene.array.corners().to_vec();
    pts.push(Vec3::zeros());
    pts
}

/// Largest source-to-receiver travel time.
fn max_direct_delay(scene: &Scene) -> f64 {
    let x_s = scene.source.position;
    probe_points(scene)
        .iter()
        .map(|x| (x - x_s).norm())
        .fold(0.0, f64::max)
        / SPEED_OF_LIGHT
}

/// Largest excess travel time of a scattered path over the direct one.
pub fn delay_spread(scene: &Scene) -> f64 {
    let x_s = scene.source.position;
    let pts = probe_points(scene);
    let mut worst = 0.0f64;
    for s in &scene.scatterers {
        for x in &pts {
            let excess = (s.position - x_s).norm() + (x - s.position).norm() - (x - x_s).norm();
            worst = worst.max(excess);
        }
    }
    worst / SPEED_OF_LIGHT
}

/// Coherency estimate for one received signal.
fn estimate(
    sig: &TimeSignal,
    settings: &StochasticSettings,
    w: Window,
    omegas: &[f64],
) -> Result<Vec<CMat2>> {
    match settings.estimator {
        SpectralEstimator::Periodogram => periodogram(sig, w, omegas),
        SpectralEstimator::LagWindow { .. } => {
            let corr = empirical_autocorrelation(sig, w, settings.lag_samples())?;
            Ok(lag_spectrum(&corr, omegas))
        }
    }
}

/// Ensemble-averaged coherency estimates over the array, as a dataset whose
/// source coherency is the process spectrum.
pub fn stochastic_coherency(
    scene: &Scene,
    band: FrequencyBand,
    settings: &StochasticSettings,
) -> Result<ArrayDataSet> {
    settings.process.validate()?;
    if settings.realizations == 0 {
        return Err(Error::invalid("need at least one realization"));
    }
    let mut scene = scene.clone();
    scene.source.coherency = settings.process.coherency();
    let (total, w) = settings.layout();
    let basis = scene.source.basis()?;
    let omegas = band.omegas();
    let receivers = scene.array.receivers();
    let mut acc = vec![vec![CMat2::zeros(); omegas.len()]; receivers.len()];
    for real in 0..settings.realizations {
        let src = synth_source_len(&settings.process, &basis, real as u64, total, 0.0)?;
        let prop = Propagator::new(&scene, &src, settings.band_limit)?;
        let est = receivers
            .par_iter()
            .map(|x| estimate(&prop.received(x)?, settings, w, &omegas))
            .collect::<Result<Vec<_>>>()?;
        for (a, e) in acc.iter_mut().zip(est) {
            for (a, e) in a.iter_mut().zip(e) {
                *a += e;
            }
        }
    }
    let scale = C64::from(1.0 / settings.realizations as f64);
    let blocks = acc
        .into_iter()
        .map(|ms| {
            ms.iter()
                .flat_map(|m| (m * scale).transpose().as_slice().to_vec())
                .collect()
        })
        .collect();
    ArrayDataSet::from_blocks(DataKind::Coherency2x2, scene.meta(band), blocks)
}

/// Variance of `ψ` versus half-duration `T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErgodicityRow {
    pub half_duration: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErgodicityReport {
    pub rows: Vec<ErgodicityRow>,
    /// Least-squares slope of `log variance` against `log T`.
    pub slope: f64,
    /// Bootstrap variance of the variance estimate from the first half of
    /// the realizations and from all of them, at the longest `T`.
    pub vov_half: f64,
    pub vov_full: f64,
}

impl ErgodicityReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("half_duration_s,variance\n");
        for r in &self.rows {
            s.push_str(&format!("{:.6e},{:.9e}\n", r.half_duration, r.variance));
        }
        s.push_str(&format!("# slope,{:.6}\n", self.slope));
        s
    }
}

/// Unbiased sample variance.
pub fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Bootstrap estimate of the variance of [`sample_variance`].
pub fn bootstrap_variance_of_variance(x: &[f64], resamples: usize, seed: u64) -> f64 {
    use rand::Rng;
    let mut rng = stream_rng(seed, 0, 7);
    let stats: Vec<f64> = (0..resamples)
        .map(|_| {
            let draw: Vec<f64> = (0..x.len())
                .map(|_| x[rng.random_range(0..x.len())])
                .collect();
            sample_variance(&draw)
        })
        .collect();
    sample_variance(&stats)
}

/// Measures how the spread of `ψ(τ)` across realizations shrinks with `T`.
/// Lags are spaced by `lag_spacing` seconds up to the scene's delay spread.
pub fn ergodicity_probe(
    scene: &Scene,
    receivers: &[Vec3],
    half_durations: &[f64],
    realizations: usize,
    process: SourceProcessSpec,
    lag_spacing: f64,
) -> Result<ErgodicityReport> {
    if half_durations.len() < 3 {
        return Err(Error::invalid("need at least 3 acquisition times"));
    }
    if realizations < 30 {
        return Err(Error::invalid("need at least 30 realizations"));
    }
    if receivers.is_empty() || !(lag_spacing > 0.0) {
        return Err(Error::invalid("need receivers and a positive lag spacing"));
    }
    let mut scene = scene.clone();
    scene.source.coherency = process.coherency();
    let basis = scene.source.basis()?;
    let lag_max = delay_spread(&scene) + 2.0 * process.corr_time;
    let lags: Vec<usize> = (0..)
        .map(|j| (j as f64 * lag_spacing / process.dt).round() as usize)
        .take_while(|&l| l as f64 * process.dt <= lag_max)
        .collect();
    let m = *lags.last().expect("lag 0 always present");
    let mut rows = Vec::new();
    let mut last_samples = Vec::new();
    for &t in half_durations {
        let len = (2.0 * t / process.dt).round() as usize;
        let spec = SourceProcessSpec {
            samples: len,
            ..process
        };
        spec.validate()?;
        let settings = StochasticSettings {
            process: spec,
            lead_in: max_direct_delay(&scene) + lag_max + 10.0 * process.corr_time,
            band_limit: (TAU * 0.5e9, TAU * 4.3e9),
            estimator: SpectralEstimator::LagWindow {
                max_lag: m as f64 * process.dt,
            },
            realizations,
        };
        let (total, w) = settings.layout();
        // samples[feature][realization]
        let per_real = (0..realizations)
            .into_par_iter()
            .map(|r| {
                let src = synth_source_len(&spec, &basis, r as u64, total, 0.0)?;
                let prop = Propagator::new(&scene, &src, settings.band_limit)?;
                let mut feats = Vec::new();
                for x in receivers {
                    let sig = prop.received(x)?;
                    let (a, b) = (sig.channel(0), sig.channel(1));
                    for &l in &lags {
                        for (p, q) in [(a, a), (a, b), (b, a), (b, b)] {
                            let s: f64 = (w.first..w.first + w.len).map(|i| p[i + l] * q[i]).sum();
                            feats.push(s / w.len as f64);
                        }
                    }
                }
                Ok(feats)
            })
            .collect::<Result<Vec<_>>>()?;
        let nfeat = per_real[0].len();
        let columns: Vec<Vec<f64>> = (0..nfeat)
            .map(|f| per_real.iter().map(|v| v[f]).collect())
            .collect();
        let variance = columns.iter().map(|c| sample_variance(c)).sum::<f64>() / nfeat as f64;
        rows.push(ErgodicityRow {
            half_duration: t,
            variance,
        });
        last_samples = columns;
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .map(|r| (r.half_duration.ln(), r.variance.ln()))
        .unzip();
    let slope = fit_slope(&lx, &ly);
    // pooled over features: normalize each feature by its variance first
    let pooled = |n: usize| -> f64 {
        last_samples
            .iter()
            .enumerate()
            .map(|(f, c)| {
                let v = sample_variance(c);
                let z: Vec<f64> = c[..n].iter().map(|x| x / v.sqrt()).collect();
                bootstrap_variance_of_variance(&z, 400, process.seed ^ f as u64)
            })
            .sum::<f64>()
            / last_samples.len() as f64
    };
    Ok(ErgodicityReport {
        rows,
        slope,
        vov_half: pooled(realizations / 2),
        vov_full: pooled(realizations),
    })
}

/// Ordinary least-squares slope.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
