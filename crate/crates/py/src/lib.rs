//! Python bindings: Green functions, Stokes algebra, datasets and the
//! imaging pipeline. Matrices cross the boundary as nested lists.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;

use polarmig::config::regime_report;
use polarmig::migrate::{
    kirchhoff_band, phase_correct, recover_alpha_band, recover_spectrum, ImageField, ImageGrid,
};
use polarmig::pipeline;
use polarmig::{
    ArrayDataSet, CMat2, CMat3, Error, ExperimentConfig, RecoveryMode, StokesVec, Vec3, Wavenumber,
};

type Rows = Vec<Vec<Complex64>>;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyOSError::new_err(io.to_string()),
        e if e.is_numerical() => PyArithmeticError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn vec3(p: [f64; 3]) -> Vec3 {
    Vec3::new(p[0], p[1], p[2])
}

fn rows3(m: &CMat3) -> Rows {
    (0..3)
        .map(|i| (0..3).map(|j| m[(i, j)]).collect())
        .collect()
}

fn rows2(m: &CMat2) -> Rows {
    (0..2)
        .map(|i| (0..2).map(|j| m[(i, j)]).collect())
        .collect()
}

fn mat2(rows: Vec<Vec<Complex64>>) -> PyResult<CMat2> {
    if rows.len() != 2 || rows.iter().any(|r| r.len() != 2) {
        return Err(PyValueError::new_err("expected a 2x2 matrix"));
    }
    Ok(CMat2::from_fn(|i, j| rows[i][j]))
}

fn wavenumber(k: f64) -> PyResult<Wavenumber> {
    Wavenumber::new(k).map_err(to_py)
}

fn mode(name: &str) -> PyResult<RecoveryMode> {
    match name {
        "exact" => Ok(RecoveryMode::Exact),
        "fraunhofer" => Ok(RecoveryMode::Fraunhofer),
        _ => Err(PyValueError::new_err(format!("unknown mode {name:?}"))),
    }
}

/// `e^{ik|x−y|} / (4π|x−y|)`.
#[pyfunction]
fn scalar_green(x: [f64; 3], y: [f64; 3], k: f64) -> PyResult<Complex64> {
    polarmig::scalar_green(&vec3(x), &vec3(y), wavenumber(k)?).map_err(to_py)
}

/// Electric dyadic Green function as a 3x3 nested list.
#[pyfunction]
fn dyadic_green(x: [f64; 3], y: [f64; 3], k: f64) -> PyResult<Rows> {
    Ok(rows3(
        &polarmig::dyadic_green(&vec3(x), &vec3(y), wavenumber(k)?).map_err(to_py)?,
    ))
}

/// Orthonormal columns spanning the plane transverse to `y0 − x_s`, as two 3-vectors.
#[pyfunction]
fn source_basis(x_s: [f64; 3], y0: [f64; 3]) -> PyResult<Vec<[f64; 3]>> {
    let b = polarmig::source_basis(&vec3(x_s), &vec3(y0)).map_err(to_py)?;
    Ok((0..2).map(|c| b.column(c).into()).collect())
}

#[pyfunction]
fn projected_green_condition(x_r: [f64; 3], x_s: [f64; 3], y0: [f64; 3]) -> PyResult<f64> {
    polarmig::projected_green_condition(&vec3(x_r), &vec3(x_s), &vec3(y0)).map_err(to_py)
}

#[pyfunction]
fn coherency_from_stokes(i: f64, q: f64, u: f64, v: f64) -> Rows {
    rows2(&polarmig::em::coherency_from_stokes(&StokesVec::new(
        i, q, u, v,
    )))
}

/// Returns `(I, Q, U, V)`.
#[pyfunction]
fn stokes_from_coherency(m: Vec<Vec<Complex64>>) -> PyResult<(f64, f64, f64, f64)> {
    let s = polarmig::em::stokes_from_coherency(&mat2(m)?).map_err(to_py)?;
    Ok((s.i, s.q, s.u, s.v))
}

/// Experiment description; round-trips through JSON.
#[pyclass(name = "Config")]
#[derive(Clone)]
struct PyConfig(ExperimentConfig);

#[pymethods]
impl PyConfig {
    /// Three-dipole reference experiment.
    #[staticmethod]
    fn reference(receivers: usize, freqs: usize) -> Self {
        PyConfig(ExperimentConfig::reference(receivers, freqs))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        ExperimentConfig::load(path).map(PyConfig).map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text)
            .map(PyConfig)
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.0).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn validate(&self) -> PyResult<()> {
        self.0.validate().map_err(to_py)
    }

    #[getter]
    fn lambda0(&self) -> PyResult<f64> {
        self.0.lambda0().map_err(to_py)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.0.seed = seed;
    }

    /// Scatterer positions in metres.
    fn scatterer_positions(&self) -> PyResult<Vec<[f64; 3]>> {
        let scene = self.0.scene().map_err(to_py)?;
        Ok(scene.scatterers.iter().map(|s| s.position.into()).collect())
    }

    /// Human-readable regime and source-placement report.
    fn regime_report(&self) -> PyResult<String> {
        let scene = self.0.scene().map_err(to_py)?;
        let band = self.0.band().map_err(to_py)?;
        Ok(regime_report(&scene, &band, self.0.pipeline.gamma)
            .map_err(to_py)?
            .render())
    }
}

/// Matrix field over receivers and frequencies.
#[pyclass(name = "DataSet")]
struct PyDataSet(ArrayDataSet);

#[pymethods]
impl PyDataSet {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        ArrayDataSet::read(path).map(PyDataSet).map_err(to_py)
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        self.0.write(path).map_err(to_py)
    }

    #[getter]
    fn kind(&self) -> String {
        format!("{:?}", self.0.kind)
    }

    #[getter]
    fn receivers(&self) -> usize {
        self.0.receivers()
    }

    #[getter]
    fn freqs(&self) -> usize {
        self.0.freqs()
    }

    /// Matrix at receiver `r` and frequency `f`.
    fn matrix(&self, r: usize, f: usize) -> PyResult<Vec<Vec<Complex64>>> {
        if r >= self.0.receivers() || f >= self.0.freqs() {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(match self.0.dim() {
            2 => rows2(&self.0.mat2(r, f)),
            _ => rows3(&self.0.mat3(r, f)),
        })
    }
}

/// Coherency measurements for a config (stochastic when it asks for it).
#[pyfunction]
fn simulate(config: &PyConfig) -> PyResult<PyDataSet> {
    let cfg = &config.0;
    let scene = cfg.scene().map_err(to_py)?;
    let band = cfg.band().map_err(to_py)?;
    pipeline::simulate(cfg, &scene, band)
        .map(PyDataSet)
        .map_err(to_py)
}

/// Returns the preprocessed data and the receivers that needed regularization.
#[pyfunction]
fn preprocess(data: &PyDataSet) -> PyResult<(PyDataSet, Vec<usize>)> {
    let (ds, report) = polarmig::preprocess::preprocess(&data.0).map_err(to_py)?;
    Ok((PyDataSet(ds), report.regularized))
}

/// Band-integrated Kirchhoff image at a point.
#[pyfunction]
fn image(data: &PyDataSet, point: [f64; 3]) -> PyResult<Rows> {
    Ok(rows3(
        &kirchhoff_band(&data.0, &vec3(point)).map_err(to_py)?,
    ))
}

/// Band-averaged projected tensor at a point, phase-fixed on its (1,1) entry.
#[pyfunction]
#[pyo3(signature = (data, point, mode = "exact"))]
fn recover(data: &PyDataSet, point: [f64; 3], mode: &str) -> PyResult<Rows> {
    let spectrum = recover_spectrum(&data.0, &vec3(point), self::mode(mode)?).map_err(to_py)?;
    let alpha = recover_alpha_band(&spectrum, data.0.meta.band.step()).map_err(to_py)?;
    let field = ImageField::new(ImageGrid::point(vec3(point)), vec![alpha]).map_err(to_py)?;
    Ok(rows2(
        &phase_correct(&field, 0.0).map_err(to_py)?.values()[0],
    ))
}

/// Runs every stage into `out_dir`; returns the recovered tensor norms.
#[pyfunction]
fn run_pipeline(config: &PyConfig, out_dir: PathBuf) -> PyResult<Vec<f64>> {
    let out = pipeline::run_pipeline(&config.0, out_dir).map_err(to_py)?;
    Ok(out.recovered.iter().map(|a| a.norm()).collect())
}

#[pymodule]
#[pyo3(name = "polarmig")]
fn polarmig_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyDataSet>()?;
    m.add_function(wrap_pyfunction!(scalar_green, m)?)?;
    m.add_function(wrap_pyfunction!(dyadic_green, m)?)?;
    m.add_function(wrap_pyfunction!(source_basis, m)?)?;
    m.add_function(wrap_pyfunction!(projected_green_condition, m)?)?;
    m.add_function(wrap_pyfunction!(coherency_from_stokes, m)?)?;
    m.add_function(wrap_pyfunction!(stokes_from_coherency, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(preprocess, m)?)?;
    m.add_function(wrap_pyfunction!(image, m)?)?;
    m.add_function(wrap_pyfunction!(recover, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
