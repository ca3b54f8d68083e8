mod settings;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sss_denoise::bench::{
    parse_methods, render_table, run_benchmark, BenchmarkRun, TableFormat, TableRow,
};
use sss_denoise::filters::FilterSpec;
use sss_denoise::metrics::{MetricReport, SsimConfig};
use sss_denoise::noise::{NoiseKind, NoiseSpec};
use sss_denoise::self2self::{checkpoint, denoise};
use sss_denoise::synthetic::sonar_scene;
use sss_denoise::{load_image, save_image, Error, Result};

use settings::{Overrides, Settings};

/// Single-image self-supervised denoising for side-scan sonar, with
/// classical baselines and quality metrics.
#[derive(Parser, Debug)]
#[command(name = "sss-denoise", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Corrupt an image with seeded synthetic noise.
    Noise {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Apply one classical filter.
    Filter {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train the masked network on one image and write the ensemble prediction.
    Denoise {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the trained weights here.
        #[arg(long)]
        save_model: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Score a denoised image against its noisy input and an optional clean reference.
    Eval {
        #[arg(long)]
        denoised: PathBuf,
        /// The noisy input the denoiser saw (EPI reference).
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        clean: Option<PathBuf>,
        /// Row label; defaults to the denoised file name.
        #[arg(long)]
        label: Option<String>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Corrupt (optionally), run every method, score, and write reports.
    Bench {
        /// Noisy input. Omit when `--noise` corrupts `--clean` instead.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        /// Clean reference; the corruption source when `--noise` is set.
        #[arg(long)]
        clean: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Render a synthetic sonar-like test scene.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 256)]
        height: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// `key = value` config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Noise model, e.g. `gaussian:0.1`, `saltpepper:0.1`, `speckle:0.2`.
    #[arg(long)]
    noise: Option<NoiseKind>,
    /// Filter spec, e.g. `median:3` or `bilateral:2,2.0,0.1`.
    #[arg(long)]
    filter: Option<FilterSpec>,
    /// Comma separated methods for `bench`.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    keep_prob: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    ensemble: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report format: text or csv.
    #[arg(long)]
    format: Option<TableFormat>,
    /// Progress line interval in training iterations.
    #[arg(long)]
    log_every: Option<usize>,
    /// Penalize the kept pixels instead of the hidden ones (for comparison only).
    #[arg(long, hide = true)]
    literal_loss: bool,
}

impl CommonArgs {
    fn settings(&self) -> Result<Settings> {
        let flags = Overrides {
            iters: self.iters,
            keep_prob: self.keep_prob,
            dropout: self.dropout,
            lr: self.lr,
            ensemble: self.ensemble,
            seed: self.seed,
            literal_loss: self.literal_loss,
            noise: self.noise,
            filter: self.filter,
            methods: self.methods.as_deref().map(parse_methods).transpose()?,
            format: self.format,
            log_every: self.log_every,
        };
        Settings::resolve(self.config.as_deref(), &flags)
    }
}

fn missing(what: &str) -> Error {
    Error::InvalidParameter(format!("{what} is required (flag or config file)"))
}

fn progress_logger(every: usize) -> impl FnMut(usize, f64) {
    move |iter, loss| {
        if iter % every == 0 {
            eprintln!("iter={iter} loss={loss:.6}");
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Noise { input, out, common } => {
            let s = common.settings()?;
            let kind = s.noise.ok_or_else(|| missing("--noise"))?;
            let img = load_image(&input)?;
            save_image(&NoiseSpec::new(kind, s.seed)?.apply(&img)?, &out)
        }
        Command::Filter { input, out, common } => {
            let s = common.settings()?;
            let spec = s.filter.ok_or_else(|| missing("--filter"))?;
            save_image(&spec.apply(&load_image(&input)?)?, &out)
        }
        Command::Denoise {
            input,
            out,
            save_model,
            common,
        } => {
            let s = common.settings()?;
            let img = load_image(&input)?;
            let (result, model) =
                denoise(&img, &s.train, &s.predict, progress_logger(s.log_every))?;
            save_image(&result, &out)?;
            if let Some(path) = save_model {
                checkpoint::save(&model, path)?;
            }
            Ok(())
        }
        Command::Eval {
            denoised,
            raw,
            clean,
            label,
            common,
        } => {
            let s = common.settings()?;
            let clean = clean.as_deref().map(load_image).transpose()?;
            let report = MetricReport::evaluate(
                &load_image(&denoised)?,
                &load_image(&raw)?,
                clean.as_ref(),
                &SsimConfig::default(),
            )?;
            let row = TableRow {
                method: label.unwrap_or_else(|| file_label(&denoised)),
                report,
            };
            print!("{}", render_table(&[row], s.format));
            Ok(())
        }
        Command::Bench {
            input,
            clean,
            out_dir,
            common,
        } => {
            let s = common.settings()?;
            let (source, clean_reference) = match (s.noise, input, clean) {
                (Some(_), None, Some(clean)) => (clean, None),
                (Some(_), Some(_), _) => {
                    return Err(Error::InvalidParameter(
                        "--noise corrupts --clean; do not also pass --in".into(),
                    ))
                }
                (Some(_), None, None) => return Err(missing("--clean")),
                (None, Some(input), clean) => (input, clean),
                (None, None, _) => return Err(missing("--in (or --clean with --noise)")),
            };
            let run = BenchmarkRun {
                source,
                clean_reference,
                noise: s.noise,
                methods: s.methods.clone().ok_or_else(|| missing("--methods"))?,
                output_dir: out_dir,
                seed: s.seed,
                train: s.train,
                predict: s.predict,
                ssim: SsimConfig::default(),
            };
            let out = run_benchmark(&run, progress_logger(s.log_every))?;
            print!("{}", render_table(&out.rows, s.format));
            Ok(())
        }
        Command::Synth {
            out,
            width,
            height,
            seed,
        } => save_image(&sonar_scene(width, height, seed)?, &out),
    }
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
