//! Command-line front end.
//!
//! Each subcommand loads a [`RunConfig`] (or the defaults), applies flag
//! overrides, writes its outputs and stores the effective config next to
//! them. On failure any files already written by the command are removed.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{
    derive_seed, RunConfig, STREAM_ENCODER, STREAM_EVAL, STREAM_GENERATOR_INIT, STREAM_MMD, STREAM_SAMPLE,
};
use crate::encoders::{fit_pca, fit_random_projection, train_autoencoder, Encoder, EncoderKind};
use crate::error::{Error, Result};
use crate::gennet::{self, default_latent_dim, init_generator, GeneratorModel, Interpolation};
use crate::grid::{make_channel_exemplar, sample_patches, Grid};
use crate::mmd::mmd2;
use crate::optimsynth;
use crate::pgm::{read_pgm, write_pgm};
use crate::seeded_rng;
use crate::stats::eval_report;

#[derive(Debug, Parser)]
#[command(name = "geommd", version, about = "Patch-distribution synthesis of 2D geological images")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config's run seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a procedural channel exemplar.
    MakeExemplar {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        height: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        fraction: Option<f64>,
    },
    /// Fit an encoder on exemplar patches.
    FitEncoder {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        exemplar: Option<PathBuf>,
        /// identity, random_projection, pca or autoencoder.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        code_dim: Option<usize>,
    },
    /// MMD² between patch samples of two images.
    Mmd {
        #[command(flatten)]
        common: Common,
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Fixed length scale; disables the median heuristic.
        #[arg(long)]
        length_scale: Option<f64>,
    },
    /// Optimization-based synthesis.
    SynthOpt {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        exemplar: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Train a generator.
    TrainGen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        exemplar: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Draw realizations from a trained generator.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 16)]
        count: usize,
        /// `coord,from,to,steps`: sweep one latent coordinate.
        #[arg(long)]
        interpolate: Option<String>,
    },
    /// Histogram and two-point statistics of realizations.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        exemplar: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(required = true)]
        realizations: Vec<PathBuf>,
    },
}

/// Files written so far by a command; deleted unless the command succeeds.
#[derive(Default)]
struct Outputs {
    written: Vec<PathBuf>,
    keep: bool,
}

impl Outputs {
    fn track(&mut self, p: impl Into<PathBuf>) {
        self.written.push(p.into());
    }

    fn pgm(&mut self, p: &Path, g: &Grid) -> Result<()> {
        self.track(p);
        write_pgm(p, g)
    }

    fn text(&mut self, p: &Path, s: &str) -> Result<()> {
        self.track(p);
        std::fs::File::create(p)?.write_all(s.as_bytes())?;
        Ok(())
    }

    /// Effective config stored as `<out>.config.json`.
    fn config_beside(&mut self, out: &Path, cfg: &RunConfig) -> Result<()> {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".config.json");
        self.text(&out.with_file_name(name), &cfg.to_json()?)
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.keep {
            for p in &self.written {
                let _ = std::fs::remove_file(p);
            }
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn with_exemplar_path(cfg: &mut RunConfig, path: &Option<PathBuf>) -> Result<()> {
    if let Some(p) = path {
        cfg.exemplar.path = Some(p.clone());
        cfg.check_paths()?;
    }
    Ok(())
}

/// Load the exemplar named by the config or generate the procedural one.
pub fn load_exemplar(cfg: &RunConfig) -> Result<Grid> {
    match &cfg.exemplar.path {
        Some(p) => read_pgm(p),
        None => make_channel_exemplar(
            cfg.exemplar.height,
            cfg.exemplar.width,
            cfg.exemplar.channel_fraction,
            &mut seeded_rng(cfg.exemplar_seed()),
        ),
    }
}

/// Load the configured encoder file or fit a fresh encoder on the exemplar.
pub fn build_encoder(cfg: &RunConfig, exemplar: &Grid) -> Result<Encoder> {
    if let Some(p) = &cfg.encoder.model_path {
        let enc = Encoder::from_json(&std::fs::read_to_string(p)?)?;
        let d = cfg.patch.size * cfg.patch.size;
        if enc.input_dim() != d {
            return Err(Error::Config(format!("encoder input {} does not match patch dim {d}", enc.input_dim())));
        }
        return Ok(enc);
    }
    let p = cfg.patch.size;
    let mut rng = seeded_rng(derive_seed(cfg.seed, STREAM_ENCODER));
    match cfg.encoder.kind {
        EncoderKind::Identity => Ok(Encoder::identity(p * p)),
        EncoderKind::RandomProjection => fit_random_projection(p * p, cfg.encoder.code_dim, false, &mut rng),
        EncoderKind::Pca => {
            let sample = sample_patches(exemplar, cfg.encoder.fit_patches, p, cfg.patch.pad(), &mut rng)?;
            fit_pca(&sample, cfg.encoder.code_dim)
        }
        EncoderKind::Autoencoder => {
            let sample = sample_patches(exemplar, cfg.encoder.fit_patches, p, cfg.patch.pad(), &mut rng)?;
            Ok(train_autoencoder(&sample, &cfg.autoencoder(), &mut rng)?.encoder)
        }
    }
}

fn parse_kind(s: &str) -> Result<EncoderKind> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| Error::InvalidArgument(format!("unknown encoder kind '{s}'")))
}

pub fn parse_interpolation(s: &str) -> Result<Interpolation> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || Error::InvalidArgument(format!("--interpolate expects coord,from,to,steps, got '{s}'"));
    if parts.len() != 4 {
        return Err(bad());
    }
    Ok(Interpolation {
        coordinate: parts[0].parse().map_err(|_| bad())?,
        from: parts[1].parse().map_err(|_| bad())?,
        to: parts[2].parse().map_err(|_| bad())?,
        steps: parts[3].parse().map_err(|_| bad())?,
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

pub fn execute(cli: Cli) -> Result<()> {
    let mut out = Outputs::default();
    match cli.command {
        Command::MakeExemplar { common, out: path, height, width, fraction } => {
            let mut cfg = load_config(&common)?;
            cfg.exemplar.path = None;
            if let Some(h) = height {
                cfg.exemplar.height = h;
            }
            if let Some(w) = width {
                cfg.exemplar.width = w;
            }
            if let Some(f) = fraction {
                cfg.exemplar.channel_fraction = f;
            }
            let ex = load_exemplar(&cfg)?;
            out.pgm(&path, &ex)?;
            out.config_beside(&path, &cfg)?;
        }
        Command::FitEncoder { common, out: path, exemplar, kind, code_dim } => {
            let mut cfg = load_config(&common)?;
            with_exemplar_path(&mut cfg, &exemplar)?;
            cfg.encoder.model_path = None;
            if let Some(k) = kind {
                cfg.encoder.kind = parse_kind(&k)?;
            }
            if let Some(c) = code_dim {
                cfg.encoder.code_dim = c;
            }
            let ex = load_exemplar(&cfg)?;
            let enc = build_encoder(&cfg, &ex)?;
            out.text(&path, &enc.to_json()?)?;
            out.config_beside(&path, &cfg)?;
        }
        Command::Mmd { common, a, b, csv, length_scale } => {
            let mut cfg = load_config(&common)?;
            if let Some(l) = length_scale {
                cfg.kernel = cfg.kernel.with_length_scale(l);
            }
            cfg.kernel.validate()?;
            let ga = read_pgm(&a)?;
            let gb = read_pgm(&b)?;
            let enc = build_encoder(&cfg, &ga)?;
            let seed = derive_seed(cfg.seed, STREAM_MMD);
            let (p, pad, n) = (cfg.patch.size, cfg.patch.pad(), cfg.patch.per_iter);
            let xa = sample_patches(&ga, n, p, pad, &mut seeded_rng(seed))?;
            let xb = sample_patches(&gb, n, p, pad, &mut seeded_rng(seed))?;
            let res = mmd2(&cfg.kernel, &enc, &xa, &xb)?;
            println!("{:.17e}", res.value);
            if let Some(path) = csv {
                let ls = res.length_scale_used.map(|l| l.to_string()).unwrap_or_default();
                let text = format!(
                    "mmd2,gram_xx_mean,gram_yy_mean,gram_xy_mean,length_scale_used\n{},{},{},{},{}\n",
                    res.value, res.gram_xx_mean, res.gram_yy_mean, res.gram_xy_mean, ls
                );
                out.text(&path, &text)?;
                out.config_beside(&path, &cfg)?;
            }
        }
        Command::SynthOpt { common, out: path, trace, exemplar, iterations } => {
            let mut cfg = load_config(&common)?;
            with_exemplar_path(&mut cfg, &exemplar)?;
            if let Some(it) = iterations {
                cfg.synth.iterations = it;
            }
            let ex = load_exemplar(&cfg)?;
            let enc = build_encoder(&cfg, &ex)?;
            let res = optimsynth::synthesize(&ex, &enc, &cfg.synth_config())?;
            out.pgm(&path, &res.grid)?;
            let trace_path = trace.unwrap_or_else(|| path.with_extension("loss.csv"));
            out.track(&trace_path);
            optimsynth::write_trace_csv(&trace_path, &res.trace)?;
            out.config_beside(&path, &cfg)?;
        }
        Command::TrainGen { common, out: path, trace, exemplar, iterations, lambda } => {
            let mut cfg = load_config(&common)?;
            with_exemplar_path(&mut cfg, &exemplar)?;
            if let Some(it) = iterations {
                cfg.generator.iterations = it;
            }
            if let Some(l) = lambda {
                cfg.generator.lambda = l;
            }
            let ex = load_exemplar(&cfg)?;
            let enc = build_encoder(&cfg, &ex)?;
            let g = &cfg.generator;
            let latent = g.latent_dim.unwrap_or_else(|| {
                default_latent_dim(g.out_height, g.out_width, cfg.patch.size, enc.code_dim())
            });
            let model = init_generator(
                latent,
                &g.hidden_dims,
                g.out_height,
                g.out_width,
                &mut seeded_rng(derive_seed(cfg.seed, STREAM_GENERATOR_INIT)),
            )?;
            let (model, rows) = gennet::train_generator(&ex, model, &enc, &cfg.gen_train_config())?;
            out.text(&path, &model.to_json()?)?;
            let trace_path = trace.unwrap_or_else(|| path.with_extension("trace.csv"));
            out.track(&trace_path);
            gennet::write_trace_csv(&trace_path, &rows)?;
            out.config_beside(&path, &cfg)?;
        }
        Command::Sample { common, model, out_dir, count, interpolate } => {
            let cfg = load_config(&common)?;
            let interp = interpolate.as_deref().map(parse_interpolation).transpose()?;
            let model = GeneratorModel::from_json(&std::fs::read_to_string(&model)?)?;
            let grids = gennet::sample(&model, count, &mut seeded_rng(derive_seed(cfg.seed, STREAM_SAMPLE)), interp)?;
            ensure_dir(&out_dir)?;
            for (i, g) in grids.iter().enumerate() {
                out.pgm(&out_dir.join(format!("real_{i:04}.pgm")), g)?;
            }
            out.text(&out_dir.join("config.json"), &cfg.to_json()?)?;
        }
        Command::Eval { common, exemplar, out_dir, realizations } => {
            let mut cfg = load_config(&common)?;
            with_exemplar_path(&mut cfg, &exemplar)?;
            let ex = load_exemplar(&cfg)?;
            let reals = realizations.iter().map(read_pgm).collect::<Result<Vec<_>>>()?;
            let report =
                eval_report(&ex, &reals, &cfg.eval_config(), &mut seeded_rng(derive_seed(cfg.seed, STREAM_EVAL)))?;
            ensure_dir(&out_dir)?;
            for name in ["histogram.csv", "pf_x.csv", "pf_y.csv"] {
                out.track(out_dir.join(name));
            }
            report.write_csvs(&out_dir)?;
            out.text(&out_dir.join("config.json"), &cfg.to_json()?)?;
        }
    }
    out.keep = true;
    Ok(())
}

/// Parse arguments, run, and map the outcome to an exit status. Errors are
/// reported as a single line on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("geommd: {}", e.to_string().replace('\n', " "));
            1
        }
    }
}
