use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use polarmig::config::{regime_report, ExperimentConfig};
use polarmig::dataset::ArrayDataSet;
use polarmig::migrate::{image_and_recover, phase_correct, ImageField};
use polarmig::pipeline::{run_pipeline, simulate, slice_specs, write_glyphs};
use polarmig::preprocess::preprocess;
use polarmig::scene::response_dataset;
use polarmig::{CMat2, Error, RecoveryMode, Result};

/// Thread-count override for the parallel kernels.
const THREADS_VAR: &str = "POLARMIG_THREADS";

#[derive(Parser)]
#[command(
    name = "polarmig",
    version,
    about = "Polarization-resolved Kirchhoff migration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Overrides applied on top of the config file.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// Experiment config (JSON).
    #[arg(long, short)]
    config: PathBuf,
    /// Base seed for the random streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Include double scattering in the forward model.
    #[arg(long)]
    second_born: bool,
    /// Source-region aperture factor (1 or 3).
    #[arg(long)]
    gamma: Option<f64>,
    /// Phase-correction threshold relative to the peak norm.
    #[arg(long)]
    delta_rel: Option<f64>,
    /// Tensor recovery: exact or fraunhofer.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<RecoveryMode>,
    /// Receivers per side.
    #[arg(long)]
    receivers: Option<usize>,
    /// Number of frequencies.
    #[arg(long)]
    freqs: Option<usize>,
}

fn parse_mode(s: &str) -> std::result::Result<RecoveryMode, String> {
    match s {
        "exact" => Ok(RecoveryMode::Exact),
        "fraunhofer" => Ok(RecoveryMode::Fraunhofer),
        _ => Err(format!("unknown mode {s:?} (exact | fraunhofer)")),
    }
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.pipeline.second_born |= self.second_born;
        if let Some(g) = self.gamma {
            cfg.pipeline.gamma = g;
        }
        if let Some(d) = self.delta_rel {
            cfg.pipeline.delta_rel = d;
        }
        if let Some(m) = self.mode {
            cfg.pipeline.mode = m;
        }
        if let Some(n) = self.receivers {
            cfg.array.receivers = n;
        }
        if let Some(n) = self.freqs {
            cfg.band.count = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate coherency measurements (and optionally the raw response).
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, short)]
        out: PathBuf,
        /// Also write the scattered response `Π`.
        #[arg(long)]
        response: Option<PathBuf>,
    },
    /// Turn coherency data into approximate full-field data.
    Preprocess {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Band Kirchhoff images on the configured slices.
    Image {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Phase-corrected projected tensors on the configured slices.
    Recover {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Time-domain acquisition; needs a `pipeline.stochastic` section.
    Stochastic {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Print the regime and source-placement report.
    Report {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Ellipse glyphs for a recovered tensor image.
    Glyphs {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value = "field")]
        name: String,
    },
    /// Every stage, into one artifact directory.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn slices(cfg: &ExperimentConfig, input: &Path, out_dir: &Path, images: bool) -> Result<()> {
    let ds = ArrayDataSet::read(input)?;
    let scene = cfg.scene()?;
    std::fs::create_dir_all(out_dir)?;
    for s in slice_specs(cfg, &scene)? {
        let (image, alpha) = image_and_recover(&ds, &s.grid, cfg.pipeline.mode)?;
        if images {
            image.write(out_dir.join(format!("image_{}.pmg", s.name)))?;
        } else {
            phase_correct(&alpha, cfg.pipeline.delta_rel)?
                .write(out_dir.join(format!("alpha_{}.pmg", s.name)))?;
        }
        println!(
            "{}: peak {:.6e}",
            s.name,
            if images {
                image.max_norm()
            } else {
                alpha.max_norm()
            }
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { cfg, out, response } => {
            let cfg = cfg.load()?;
            let (scene, band) = (cfg.scene()?, cfg.band()?);
            if cfg.pipeline.stochastic.is_some() {
                log::info!(
                    "config has a stochastic section; use `stochastic` for time-domain data"
                );
            }
            let mut det = cfg.clone();
            det.pipeline.stochastic = None;
            simulate(&det, &scene, band)?.write(&out)?;
            if let Some(p) = response {
                response_dataset(&scene, band, cfg.pipeline.second_born)?.write(p)?;
            }
        }
        Command::Preprocess { input, out } => {
            let (pre, report) = preprocess(&ArrayDataSet::read(input)?)?;
            pre.write(out)?;
            println!("{}", report.summary());
        }
        Command::Image {
            cfg,
            input,
            out_dir,
        } => slices(&cfg.load()?, &input, &out_dir, true)?,
        Command::Recover {
            cfg,
            input,
            out_dir,
        } => slices(&cfg.load()?, &input, &out_dir, false)?,
        Command::Stochastic { cfg, out } => {
            let cfg = cfg.load()?;
            if cfg.pipeline.stochastic.is_none() {
                return Err(Error::Invalid(
                    "config has no pipeline.stochastic section".into(),
                ));
            }
            simulate(&cfg, &cfg.scene()?, cfg.band()?)?.write(out)?;
        }
        Command::Report { cfg } => {
            let cfg = cfg.load()?;
            print!(
                "{}",
                regime_report(&cfg.scene()?, &cfg.band()?, cfg.pipeline.gamma)?.render()
            );
        }
        Command::Glyphs {
            input,
            threshold,
            out_dir,
            name,
        } => {
            let field = ImageField::<CMat2>::read(input)?;
            std::fs::create_dir_all(&out_dir)?;
            let n = write_glyphs(&field, threshold, &out_dir, &name)?;
            println!("{n} glyphs");
        }
        Command::Run { cfg, out_dir } => {
            let cfg = cfg.load()?;
            let out = run_pipeline(&cfg, &out_dir)?;
            print!("{}", out.regime.render());
            for (n, a) in out.recovered.iter().enumerate() {
                println!("scatterer {n}: |alpha| = {:.4}", a.norm());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Ok(v) = std::env::var(THREADS_VAR) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                {
                    log::warn!("could not size the thread pool: {e}");
                }
            }
            _ => {
                eprintln!("error: {THREADS_VAR} must be a positive integer, got {v:?}");
                return ExitCode::from(2);
            }
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
