//! End-to-end driver: simulate, preprocess, migrate, recover, report.
//!
//! Output directory layout:
//!
//! ```text
//! config.json          normalized copy of the input
//! report.txt           regime, source placement, preprocessing, tensors
//! regime.json
//! coherency.pmg        simulated measurements
//! preprocessed.pmg     approximate full-field data
//! slices.csv           index of the slices below
//! image_<name>.pmg     band Kirchhoff image (3x3)
//! alpha_<name>.pmg     phase-corrected recovered tensors (2x2)
//! glyphs_<name>.svg/.csv
//! recovered.csv        tensors at the configured scatterer positions
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{regime_report, ExperimentConfig, RegimeReport};
use crate::dataset::ArrayDataSet;
use crate::error::{Error, Result};
use crate::glyph::emit_glyphs;
use crate::linalg::{CMat2, Vec3};
use crate::migrate::{
    image_and_recover, phase_correct, recover_alpha_band, recover_spectrum, ImageField, ImageGrid,
};
use crate::preprocess::{preprocess, PreprocessReport};
use crate::scene::{coherency_synthesize, FrequencyBand, Scene};
use crate::stochastic::{stochastic_coherency, SourceProcessSpec, StochasticSettings};

/// Tables with more scatterers than this are not written.
const TABLE_LIMIT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SliceKind {
    /// Constant `x3`.
    CrossRange,
    /// Constant `x2`.
    Range,
}

#[derive(Debug, Clone)]
pub struct SliceSpec {
    pub name: String,
    pub kind: SliceKind,
    /// `x3` for cross-range slices, `x2` for range slices, in metres.
    pub coordinate: f64,
    pub grid: ImageGrid,
}

/// Cross-range and range slices requested by the configuration.
pub fn slice_specs(cfg: &ExperimentConfig, scene: &Scene) -> Result<Vec<SliceSpec>> {
    let l0 = cfg.lambda0()?;
    let spacing = cfg.pipeline.slice_spacing.resolve(l0)?;
    let mut out = Vec::new();
    for (i, d) in cfg.pipeline.cross_range_depths.iter().enumerate() {
        let z = d.resolve(l0)?;
        out.push(SliceSpec {
            name: format!("cross{i}"),
            kind: SliceKind::CrossRange,
            coordinate: z,
            grid: ImageGrid::cross_range_slice(&scene.window, z, spacing)?,
        });
    }
    for (i, p) in cfg.pipeline.range_planes.iter().enumerate() {
        let x2 = p.resolve(l0)?;
        out.push(SliceSpec {
            name: format!("range{i}"),
            kind: SliceKind::Range,
            coordinate: x2,
            grid: ImageGrid::range_slice(&scene.window, x2, spacing)?,
        });
    }
    Ok(out)
}

/// Coherency data for the configured scene, deterministic or time-domain.
pub fn simulate(
    cfg: &ExperimentConfig,
    scene: &Scene,
    band: FrequencyBand,
) -> Result<ArrayDataSet> {
    match &cfg.pipeline.stochastic {
        None => coherency_synthesize(scene, band, cfg.pipeline.second_born),
        Some(st) => {
            if st.samples < 2 {
                return Err(Error::invalid("pipeline.stochastic.samples must be >= 2"));
            }
            let process = SourceProcessSpec {
                corr_time: st.corr_time_s,
                omega0: band.center,
                dt: 2.0 * st.half_duration_s / (st.samples - 1) as f64,
                samples: st.samples,
                seed: cfg.seed,
            };
            let settings = StochasticSettings::for_scene(scene, process, st.realizations);
            stochastic_coherency(scene, band, &settings)
        }
    }
}

/// Recovered, phase-uncorrected band tensor at each point.
pub fn recover_at(
    ds: &ArrayDataSet,
    points: &[Vec3],
    cfg: &ExperimentConfig,
) -> Result<Vec<CMat2>> {
    let step = ds.meta.band.step();
    points
        .iter()
        .map(|y| recover_alpha_band(&recover_spectrum(ds, y, cfg.pipeline.mode)?, step))
        .collect()
}

/// Rotates a single tensor so its (1,1) entry is real.
fn rotate(a: &CMat2) -> CMat2 {
    let a11 = a[(0, 0)];
    if a11.norm() > 0.0 {
        a * (a11.conj() / a11.norm())
    } else {
        *a
    }
}

fn fmt_mat(a: &CMat2) -> String {
    [(0, 0), (0, 1), (1, 0), (1, 1)]
        .iter()
        .map(|&(i, j)| format!("{:.10e},{:.10e}", a[(i, j)].re, a[(i, j)].im))
        .collect::<Vec<_>>()
        .join(",")
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub dir: PathBuf,
    pub regime: RegimeReport,
    pub preprocess: PreprocessReport,
    /// Phase-corrected recovered tensor at each configured scatterer.
    pub recovered: Vec<CMat2>,
    /// `(name, argmax point, peak norm)` per slice.
    pub peaks: Vec<(String, Vec3, f64)>,
}

/// Runs every stage and writes the artifact directory.
pub fn run_pipeline(cfg: &ExperimentConfig, out: impl AsRef<Path>) -> Result<PipelineOutput> {
    cfg.validate()?;
    let dir = out.as_ref().to_path_buf();
    fs::create_dir_all(&dir)?;
    let scene = cfg.scene()?;
    let band = cfg.band()?;
    let l0 = cfg.lambda0()?;

    let regime = regime_report(&scene, &band, cfg.pipeline.gamma)?;
    let mut report = String::from("# regime\n");
    report.push_str(&regime.render());
    if !regime.region.admissible {
        log::warn!(
            "source placement violates the cone condition (margin {:.4})",
            regime.region.margin
        );
    }
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
    fs::write(
        dir.join("regime.json"),
        serde_json::to_string_pretty(&regime)?,
    )?;

    let data = simulate(cfg, &scene, band)?;
    data.write(dir.join("coherency.pmg"))?;
    let (pre, pre_report) = preprocess(&data)?;
    pre.write(dir.join("preprocessed.pmg"))?;
    report.push_str("\n# preprocessing\n");
    report.push_str(&pre_report.summary());
    report.push('\n');

    let mut index = String::from(
        "name,kind,coordinate_m,coordinate_lambda0,points,peak_x1,peak_x2,peak_x3,peak_norm\n",
    );
    let mut peaks = Vec::new();
    for s in slice_specs(cfg, &scene)? {
        log::info!("imaging slice {} ({} points)", s.name, s.grid.len());
        let (image, alpha) = image_and_recover(&pre, &s.grid, cfg.pipeline.mode)?;
        let alpha = phase_correct(&alpha, cfg.pipeline.delta_rel)?;
        image.write(dir.join(format!("image_{}.pmg", s.name)))?;
        alpha.write(dir.join(format!("alpha_{}.pmg", s.name)))?;
        write_glyphs(&alpha, cfg.pipeline.glyph_threshold, &dir, &s.name)?;
        let at = alpha.grid.at(alpha.argmax());
        let kind = match s.kind {
            SliceKind::CrossRange => "cross_range",
            SliceKind::Range => "range",
        };
        writeln!(
            index,
            "{},{kind},{:.10e},{:.6},{},{:.10e},{:.10e},{:.10e},{:.10e}",
            s.name,
            s.coordinate,
            s.coordinate / l0,
            s.grid.len(),
            at.x,
            at.y,
            at.z,
            alpha.max_norm()
        )
        .expect("string write");
        peaks.push((s.name.clone(), at, alpha.max_norm()));
    }
    fs::write(dir.join("slices.csv"), index)?;

    let mut recovered = Vec::new();
    if !scene.scatterers.is_empty() && scene.scatterers.len() <= TABLE_LIMIT {
        let pts: Vec<Vec3> = scene.scatterers.iter().map(|s| s.position).collect();
        recovered = recover_at(&pre, &pts, cfg)?.iter().map(rotate).collect();
        let mut table = String::from(
            "index,x1,x2,x3,norm,a11_re,a11_im,a12_re,a12_im,a21_re,a21_im,a22_re,a22_im\n",
        );
        report.push_str("\n# recovered tensors\n");
        for (n, (p, a)) in pts.iter().zip(&recovered).enumerate() {
            writeln!(
                table,
                "{n},{:.10e},{:.10e},{:.10e},{:.10e},{}",
                p.x,
                p.y,
                p.z,
                a.norm(),
                fmt_mat(a)
            )
            .expect("string write");
            writeln!(report, "scatterer {n}: |alpha| = {:.4}", a.norm()).expect("string write");
        }
        fs::write(dir.join("recovered.csv"), table)?;
    }
    fs::write(dir.join("report.txt"), report)?;
    Ok(PipelineOutput {
        dir,
        regime,
        preprocess: pre_report,
        recovered,
        peaks,
    })
}

/// Writes `glyphs_<name>.svg` and `.csv`; a field with no signal gets none.
pub fn write_glyphs(
    field: &ImageField<CMat2>,
    threshold: f64,
    dir: &Path,
    name: &str,
) -> Result<usize> {
    if !(field.max_norm() > 0.0) {
        return Ok(0);
    }
    let g = emit_glyphs(field, threshold)?;
    fs::write(dir.join(format!("glyphs_{name}.svg")), &g.svg)?;
    fs::write(dir.join(format!("glyphs_{name}.csv")), &g.csv)?;
    Ok(g.count)
}
