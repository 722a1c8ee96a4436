//! JSON experiment description. Lengths are metres or strings such as
//! `"20 lambda0"` (multiples of the central wavelength) or `"0.3 m"`.

use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::em::SPEED_OF_LIGHT;
use crate::error::{Error, Result};
use crate::linalg::{CMat2, CMat3, Vec3, C64};
use crate::migrate::{region_check, RecoveryMode, RegionReport};
use crate::scene::{
    build_cube_scene, ArrayGeom, FrequencyBand, ImagingWindow, Scatterer, Scene, SourceCoherency,
    SourceSpec,
};
use crate::serial;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Length {
    Metres(f64),
    Text(String),
}

impl Length {
    pub fn lambda(x: f64) -> Self {
        Length::Text(format!("{x} lambda0"))
    }

    pub fn resolve(&self, lambda0: f64) -> Result<f64> {
        match self {
            Length::Metres(v) => Ok(*v),
            Length::Text(s) => {
                let mut parts = s.split_whitespace();
                let num = parts.next().ok_or_else(|| Error::invalid("empty length"))?;
                let value: f64 = num
                    .parse()
                    .map_err(|_| Error::invalid(format!("cannot parse length {s:?}")))?;
                let unit = parts.next().unwrap_or("m");
                if parts.next().is_some() {
                    return Err(Error::invalid(format!("trailing text in length {s:?}")));
                }
                match unit {
                    "m" => Ok(value),
                    "lambda0" | "lambda" => Ok(value * lambda0),
                    u => Err(Error::invalid(format!(
                        "unknown length unit {u:?} in {s:?}"
                    ))),
                }
            }
        }
    }
}

fn point(p: &[Length; 3], lambda0: f64, what: &str) -> Result<Vec3> {
    let v = p
        .iter()
        .map(|l| l.resolve(lambda0))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::invalid(format!("{what}: {e}")))?;
    Ok(Vec3::new(v[0], v[1], v[2]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandConfig {
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub side: Length,
    pub receivers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    pub position: [Length; 3],
    #[serde(with = "serial::cmat2", default = "identity2")]
    pub coherency: CMat2,
}

fn identity2() -> CMat2 {
    CMat2::identity()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub center: [Length; 3],
    pub cross: Length,
    pub range: Length,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScattererConfig {
    pub position: [Length; 3],
    #[serde(with = "serial::cmat3")]
    pub alpha: CMat3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeConfig {
    pub center: [Length; 3],
    pub side: Length,
    pub spacing: Length,
    #[serde(with = "serial::cmat3")]
    pub alpha: CMat3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticConfig {
    pub corr_time_s: f64,
    pub half_duration_s: f64,
    pub samples: usize,
    pub realizations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub second_born: bool,
    pub gamma: f64,
    pub delta_rel: f64,
    pub mode: RecoveryMode,
    pub slice_spacing: Length,
    /// Depths of the cross-range slices.
    pub cross_range_depths: Vec<Length>,
    /// `x2` positions of the range slices.
    pub range_planes: Vec<Length>,
    pub glyph_threshold: f64,
    pub stochastic: Option<StochasticConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            second_born: false,
            gamma: 3.0,
            delta_rel: 1e-6,
            mode: RecoveryMode::Exact,
            slice_spacing: Length::lambda(0.5),
            cross_range_depths: vec![],
            range_planes: vec![],
            glyph_threshold: 0.5,
            stochastic: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub band: BandConfig,
    pub array: ArrayConfig,
    pub source: SourceConfig,
    pub window: WindowConfig,
    #[serde(default)]
    pub scatterers: Vec<ScattererConfig>,
    #[serde(default)]
    pub cube: Option<CubeConfig>,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub seed: u64,
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// The three polarizability tensors of the reference scene.
pub fn reference_tensors() -> [CMat3; 3] {
    let a1 = CMat3::new(
        c(2., 1.),
        c(0., -1.),
        c(1., 0.),
        c(0., -1.),
        c(1., 2.),
        c(0., 1.),
        c(1., 0.),
        c(0., 1.),
        c(1., 1.),
    );
    let a2 = CMat3::new(
        c(2., 2.),
        c(-1., 1.),
        c(0., 0.5),
        c(-1., 1.),
        c(1., 2.),
        c(0., 0.),
        c(0., 0.5),
        c(0., 0.),
        c(1., 0.),
    );
    let a3 = CMat3::new(
        c(2., -2.),
        c(1., 1.),
        c(0., 0.),
        c(1., 1.),
        c(1., 2.),
        c(0.5, -0.5),
        c(0., 0.),
        c(0.5, -0.5),
        c(0., 1.),
    );
    [a1, a2, a3]
}

/// Positions of the reference dipoles, in wavelengths.
pub const REFERENCE_POSITIONS: [[f64; 3]; 3] =
    [[-6.0, -5.0, 100.0], [7.0, -5.0, 100.0], [5.0, 8.0, 106.0]];

impl ExperimentConfig {
    /// Three dipoles seen by a 20λ0 array from 100λ0, 1.2–3.6 GHz.
    pub fn reference(receivers: usize, freqs: usize) -> Self {
        let lam = |x: f64| Length::lambda(x);
        let l = 100.0;
        let scatterers = REFERENCE_POSITIONS
            .iter()
            .zip(reference_tensors())
            .map(|(p, alpha)| ScattererConfig {
                position: [lam(p[0]), lam(p[1]), lam(p[2])],
                alpha,
            })
            .collect();
        ExperimentConfig {
            band: BandConfig {
                f_min_hz: 1.2e9,
                f_max_hz: 3.6e9,
                count: freqs,
            },
            array: ArrayConfig {
                side: lam(20.0),
                receivers,
            },
            source: SourceConfig {
                position: [lam(l / 2.0), lam(0.0), lam(l * (1.0 - 0.75f64.sqrt()))],
                coherency: CMat2::identity(),
            },
            window: WindowConfig {
                center: [lam(0.0), lam(0.0), lam(l)],
                cross: lam(30.0),
                range: lam(30.0),
            },
            scatterers,
            cube: None,
            pipeline: PipelineConfig {
                cross_range_depths: vec![lam(100.0), lam(106.0)],
                range_planes: vec![lam(-5.0), lam(8.0)],
                ..PipelineConfig::default()
            },
            seed: 1,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    pub fn band(&self) -> Result<FrequencyBand> {
        let b = &self.band;
        if !(b.f_min_hz > 0.0 && b.f_max_hz >= b.f_min_hz) {
            return Err(Error::invalid("band: need 0 < f_min_hz <= f_max_hz"));
        }
        if b.count < 2 && b.f_max_hz != b.f_min_hz {
            return Err(Error::invalid("band: count must be >= 2 for a band"));
        }
        let band = FrequencyBand::from_hz(b.f_min_hz, b.f_max_hz, b.count);
        band.validate()?;
        Ok(band)
    }

    /// Central wavelength `λ0 = 2πc/ω0`.
    pub fn lambda0(&self) -> Result<f64> {
        Ok(TAU * SPEED_OF_LIGHT / self.band()?.center)
    }

    pub fn scene(&self) -> Result<Scene> {
        let l0 = self.lambda0()?;
        let field = |what: &str, l: &Length| {
            l.resolve(l0)
                .map_err(|e| Error::invalid(format!("{what}: {e}")))
        };
        let center = point(&self.window.center, l0, "window.center")?;
        let window = ImagingWindow {
            center,
            cross: field("window.cross", &self.window.cross)?,
            range: field("window.range", &self.window.range)?,
        };
        let array = ArrayGeom::square(field("array.side", &self.array.side)?, self.array.receivers);
        let source = SourceSpec {
            position: point(&self.source.position, l0, "source.position")?,
            reference: center,
            coherency: SourceCoherency::Constant {
                matrix: self.source.coherency,
            },
        };
        let mut scatterers = self
            .scatterers
            .iter()
            .enumerate()
            .map(|(i, s)| {
                Scatterer::new(
                    point(&s.position, l0, &format!("scatterers[{i}].position"))?,
                    s.alpha,
                )
                .map_err(|e| Error::invalid(format!("scatterers[{i}]: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(cube) = &self.cube {
            scatterers.extend(build_cube_scene(
                point(&cube.center, l0, "cube.center")?,
                field("cube.side", &cube.side)?,
                field("cube.spacing", &cube.spacing)?,
                cube.alpha,
            )?);
        }
        let scene = Scene {
            source,
            array,
            window,
            scatterers,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        self.scene()?;
        let p = &self.pipeline;
        if p.gamma != 1.0 && p.gamma != 3.0 {
            return Err(Error::invalid("pipeline.gamma must be 1 or 3"));
        }
        if !(p.delta_rel >= 0.0) {
            return Err(Error::invalid("pipeline.delta_rel must be >= 0"));
        }
        if !(0.0..=1.0).contains(&p.glyph_threshold) {
            return Err(Error::invalid(
                "pipeline.glyph_threshold must lie in [0, 1]",
            ));
        }
        if !(p.slice_spacing.resolve(self.lambda0()?)? > 0.0) {
            return Err(Error::invalid("pipeline.slice_spacing must be positive"));
        }
        Ok(())
    }
}

/// One scaling assumption with its computed value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeCheck {
    pub name: &'static str,
    pub value: f64,
    pub requirement: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub theta_a: f64,
    pub theta_b: f64,
    pub theta_h: f64,
    pub kl: f64,
    pub kh: f64,
    pub checks: Vec<RegimeCheck>,
    pub region: RegionReport,
}

/// `x ≪ y` is read as `x ≤ y/10`.
fn much_less(x: f64, y: f64) -> bool {
    x <= y / 10.0
}

/// Fresnel numbers and far-field diagnostics at the central frequency.
pub fn regime_report(scene: &Scene, band: &FrequencyBand, gamma: f64) -> Result<RegimeReport> {
    let k = band.center / SPEED_OF_LIGHT;
    let (a, b, h, l) = (
        scene.array.side,
        scene.window.cross,
        scene.window.range,
        scene.window.depth(),
    );
    let (ta, tb, th) = (k * a * a / l, k * b * b / l, k * h * h / l);
    let (kl, kh) = (k * l, k * h);
    let check = |name, value, requirement: &str, pass| RegimeCheck {
        name,
        value,
        requirement: requirement.into(),
        pass,
    };
    let checks = vec![
        check("theta_a", ta, "theta_a << kL", much_less(ta, kl)),
        check("theta_b", tb, "theta_b << kL", much_less(tb, kl)),
        check("theta_h", th, "theta_h << kL", much_less(th, kl)),
        check("theta_b", tb, "theta_b << 1", much_less(tb, 1.0)),
        check("theta_a", ta, "1 << theta_a", much_less(1.0, ta)),
        check(
            "theta_a",
            ta,
            "theta_a << L^2/a^2",
            much_less(ta, (l / a).powi(2)),
        ),
        check("kh", kh, "kh = O(1), read as kh <= 10", kh <= 10.0),
        check("kL", kl, "kL >> 1", much_less(1.0, kl)),
    ];
    let region = region_check(&scene.array, &scene.window, &scene.source.position, gamma)?;
    Ok(RegimeReport {
        theta_a: ta,
        theta_b: tb,
        theta_h: th,
        kl,
        kh,
        checks,
        region,
    })
}

impl RegimeReport {
    pub fn render(&self) -> String {
        let mut s = format!(
            "theta_a = {:.4}\ntheta_b = {:.4}\ntheta_h = {:.4}\nkL = {:.4}\nkh = {:.4}\n",
            self.theta_a, self.theta_b, self.theta_h, self.kl, self.kh
        );
        for c in &self.checks {
            s.push_str(&format!(
                "[{}] {} (value {:.4})\n",
                if c.pass { "pass" } else { "FAIL" },
                c.requirement,
                c.value
            ));
        }
        s.push_str(&format!(
            "source region check (gamma = {}): {} (cone slope {:.4}, margin {:.4})\n",
            self.region.gamma,
            if self.region.admissible {
                "admissible"
            } else {
                "VIOLATED"
            },
            self.region.slope,
            self.region.margin
        ));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_strings() {
        assert_eq!(
            Length::Text("20 lambda0".into()).resolve(0.125).unwrap(),
            2.5
        );
        assert_eq!(Length::Text("0.3 m".into()).resolve(0.125).unwrap(), 0.3);
        assert_eq!(Length::Text("2".into()).resolve(0.125).unwrap(), 2.0);
        assert_eq!(Length::Metres(1.5).resolve(0.125).unwrap(), 1.5);
        assert!(Length::Text("2 furlongs".into()).resolve(0.125).is_err());
        assert!(Length::Text("x lambda0".into()).resolve(0.125).is_err());
    }

    #[test]
    fn reference_config_roundtrips_and_builds() {
        let cfg = ExperimentConfig::reference(31, 64);
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let scene = back.scene().unwrap();
        assert!((back.lambda0().unwrap() - 0.125).abs() < 1e-12);
        assert_eq!(scene.scatterers.len(), 3);
        assert!(
            (scene.source.position - Vec3::new(6.25, 0.0, 12.5 * (1.0 - 0.75f64.sqrt()))).norm()
                < 1e-12
        );
    }

    #[test]
    fn reference_regime_is_reported_honestly() {
        let cfg = ExperimentConfig::reference(31, 64);
        let r = regime_report(&cfg.scene().unwrap(), &cfg.band().unwrap(), 3.0).unwrap();
        assert!((r.theta_b - TAU * 900.0 / 100.0).abs() < 1e-9);
        let tb_small = r
            .checks
            .iter()
            .find(|c| c.requirement == "theta_b << 1")
            .unwrap();
        assert!(!tb_small.pass);
        assert!(r.region.admissible);
        assert!(r.render().contains("FAIL"));
    }

    #[test]
    fn field_level_errors() {
        let mut cfg = ExperimentConfig::reference(31, 64);
        cfg.window.cross = Length::Text("thirty".into());
        let e = cfg.scene().unwrap_err().to_string();
        assert!(e.contains("window.cross"), "{e}");
        let mut cfg = ExperimentConfig::reference(31, 64);
        cfg.scatterers[0].position[2] = Length::lambda(200.0);
        assert!(cfg.scene().is_err());
    }
}
