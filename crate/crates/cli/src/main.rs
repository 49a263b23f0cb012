use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ridgeprint::pipeline::{
    run_eval, run_extract, run_synth, ExtractReport, GaborExtractor, PipelineConfig, PipelineError, ThresholdMode,
};
use ridgeprint::synth::SynthSpec;

const EXIT_FAILURE: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_REJECTED: u8 = 3;

#[derive(Parser)]
#[command(name = "ridgeprint", version, about = "Fingerprint minutiae extraction and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract minutiae from one PGM image.
    Extract {
        image: PathBuf,
        #[command(flatten)]
        opts: PipelineOpts,
    },
    /// Extract and score every image of a dataset against ground truth.
    Eval {
        dataset_dir: PathBuf,
        truth_dir: PathBuf,
        #[command(flatten)]
        opts: PipelineOpts,
        /// Images processed concurrently.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Generate a seeded synthetic corpus with ground-truth files.
    Synth {
        spec: PathBuf,
        /// Number of images; seeds run from the spec's seed upwards.
        #[arg(short = 'n', long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value = "corpus")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct PipelineOpts {
    /// TOML configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    block_size: Option<usize>,
    /// `auto` or a fixed level 0..=255.
    #[arg(long)]
    threshold: Option<ThresholdMode>,
    /// Match distance in pixels.
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    dump_intermediates: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl PipelineOpts {
    fn resolve(&self) -> Result<PipelineConfig, PipelineError> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(b) = self.block_size {
            cfg.block_size = b;
        }
        if let Some(t) = self.threshold {
            cfg.threshold = t;
        }
        if let Some(t) = self.tolerance {
            cfg.tolerance = t;
        }
        if self.dump_intermediates {
            cfg.dump_intermediates = true;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code(err: &PipelineError) -> u8 {
    match err {
        PipelineError::Image(_)
        | PipelineError::MinutiaeFile(_)
        | PipelineError::Synth(_)
        | PipelineError::Config(_)
        | PipelineError::Io { .. }
        | PipelineError::EmptyDataset(_) => EXIT_INPUT,
        _ => EXIT_FAILURE,
    }
}

fn run(cli: Cli) -> Result<u8, PipelineError> {
    match cli.command {
        Command::Extract { image, opts } => {
            let cfg = opts.resolve()?;
            match run_extract(&image, &cfg)? {
                ExtractReport::Written { minutiae_path, minutiae, dumps } => {
                    println!("{} minutiae written to {}", minutiae.len(), minutiae_path.display());
                    for d in dumps {
                        println!("  {}", d.display());
                    }
                    Ok(0)
                }
                ExtractReport::Rejected(r) => {
                    eprintln!(
                        "rejected: recoverable fraction {:.4} is below the threshold {:.4}",
                        r.recoverable_fraction, r.threshold
                    );
                    Ok(EXIT_REJECTED)
                }
            }
        }
        Command::Eval { dataset_dir, truth_dir, opts, workers } => {
            let cfg = opts.resolve()?;
            let run = run_eval(&dataset_dir, &truth_dir, &cfg, workers, &GaborExtractor)?;
            let r = &run.report;
            println!("{} images scored: mean SEN {:.2}%, mean SPE {:.2}%", r.n, 100.0 * r.mean_sen, 100.0 * r.mean_spe);
            println!("reports: {} and {}", run.report_txt.display(), run.report_csv.display());
            Ok(0)
        }
        Command::Synth { spec, count, out } => {
            let spec = SynthSpec::load(&spec)?;
            let written = run_synth(&spec, count, &out)?;
            println!("{} images written to {}", written.len(), out.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
