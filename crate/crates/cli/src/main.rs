use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use segfeat_cli::commands::{self, SegmentOptions};
use segfeat_cli::{CliResult, RunConfig};
use segfeat_core::data::SynthConfig;
use segfeat_core::Split;

#[derive(Parser)]
#[command(name = "segfeat", version, about = "Phoneme boundary detection with learned segmental features")]
struct Cli {
    /// TOML run configuration. `SEGFEAT_<SECTION>_<KEY>` variables override it.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(long, short, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract normalized frame features for every manifest entry.
    Features {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write one CSV per utterance.
        #[arg(long)]
        csv: bool,
    },
    /// Train a model and write checkpoints and logs to the output directory.
    Train {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Comma separated: segfeat, phn, bin.
        #[arg(long, value_delimiter = ',')]
        losses: Option<Vec<String>>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Predict boundaries for a WAV file or every entry of a manifest.
    Segment {
        #[arg(long)]
        model: PathBuf,
        /// A `.wav` file or a `.csv` manifest.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Known number of segments.
        #[arg(long)]
        k: Option<usize>,
        /// Longest segment in frames (default: unbounded).
        #[arg(long)]
        max_seg_frames: Option<usize>,
        #[arg(long)]
        split: Option<Split>,
        #[arg(long)]
        textgrid: bool,
    },
    /// Score predicted boundaries against manifest annotations.
    Eval {
        /// Directory of `<key>.csv` boundary files.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        split: Option<Split>,
        #[arg(long)]
        tolerance: Option<f64>,
        /// Also write the report as CSV.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write a seeded synthetic corpus with a manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 240)]
        utterances: usize,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 20)]
        val: usize,
        #[arg(long, default_value_t = 20)]
        test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), std::env::vars())?;
    let manifest = |cfg: &RunConfig, flag: Option<PathBuf>| flag.map_or_else(|| cfg.manifest_path(), Ok);
    match cli.command {
        Command::Features { manifest: m, out, csv } => {
            let m = manifest(&cfg, m)?;
            let s = commands::features(&cfg, &m, &out, csv)?;
            println!("wrote features for {} utterances to {}", s.utterances, out.display());
        }
        Command::Train { manifest: m, out, epochs, losses, seed } => {
            if let Some(m) = m {
                cfg.data.manifest = m.display().to_string();
            }
            if let Some(o) = out {
                cfg.output.dir = o.display().to_string();
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(l) = losses {
                cfg.train.losses = l;
            }
            if let Some(s) = seed {
                cfg.train.seed = s;
                cfg.model.seed = s;
            }
            cfg.validate()?;
            let s = commands::train(&cfg)?;
            println!("best epoch {} of {}", s.best_epoch, s.logs.len());
            println!("{}", s.best_val);
            println!("checkpoints: {} {}", s.best_model.display(), s.last_model.display());
        }
        Command::Segment { model, input, out, k, max_seg_frames, split, textgrid } => {
            let opts = SegmentOptions { k, max_seg_frames, textgrid, split };
            let n = commands::segment(&model, &input, &out, &opts)?;
            println!("segmented {n} utterances into {}", out.display());
        }
        Command::Eval { pred, manifest: m, split, tolerance, report } => {
            if let Some(t) = tolerance {
                cfg.eval.tolerance = t;
                cfg.validate()?;
            }
            let m = manifest(&cfg, m)?;
            let r = commands::eval(&cfg, &pred, &m, split)?;
            println!("{r}");
            if let Some(p) = report {
                commands::write_report(&p, &r)?;
            }
        }
        Command::Synth { out, utterances, classes, val, test, seed } => {
            let sc = SynthConfig {
                n_utterances: utterances,
                n_classes: classes,
                seed,
                sample_rate: cfg.data.sample_rate,
                ..Default::default()
            };
            let m = commands::synth(&out, &sc, val, test)?;
            println!("wrote {utterances} utterances; manifest {}", m.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
