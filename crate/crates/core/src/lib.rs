//! Polarization-resolved imaging of small scatterers from coherency-matrix
//! measurements: forward modelling, preprocessing into approximate
//! full-field data, Kirchhoff migration and projected tensor recovery.

pub mod config;
pub mod dataset;
pub mod em;
pub mod error;
pub mod glyph;
pub mod linalg;
pub mod migrate;
pub mod pipeline;
pub mod preprocess;
pub mod scene;
mod serial;
pub mod stochastic;

pub use config::ExperimentConfig;
pub use dataset::{ArrayDataSet, DataKind};
pub use em::{
    dyadic_green, projected_green_condition, scalar_green, source_basis, StokesVec, Wavenumber,
};
pub use error::{Error, Result};
pub use linalg::{Basis32, CMat2, CMat3, Vec3, C64};
pub use migrate::{ImageField, ImageGrid, RecoveryMode};
pub use scene::{
    ArrayGeom, FrequencyBand, ImagingWindow, Scatterer, Scene, SourceCoherency, SourceSpec,
};
