//! `fbpick`: synthetic corpora, training, picking, evaluation, ablation and
//! noise-robustness runs for the DSU-Net first-break picker, driven by one
//! TOML run configuration.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod corpus;
mod error;
pub mod eval;
pub mod infer;
pub mod train;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use fbpick_seismic::pipeline::check_threshold;
use fbpick_seismic::read_gather;

pub use config::RunConfig;
pub use error::{CliError, Result};

use crate::corpus::{Manifest, Split};
use crate::eval::Axis;
use crate::infer::{picks_text, AnyModel};

#[derive(Debug, Parser)]
#[command(name = "fbpick", version, about = "Seismic first-break picking with DSU-Net")]
pub struct Cli {
    /// Run configuration (TOML). Defaults apply to every missing key.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set training.epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Suppress progress lines on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus into the data directory.
    Synth {
        #[arg(long)]
        force: bool,
    },
    /// Train one model per configured seed.
    Train,
    /// Pick gathers with a trained checkpoint; one picks file per gather.
    Pick {
        /// Defaults to the checkpoint of the first configured seed.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Defaults to `<output_dir>/picks`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Gather files; the test split of the corpus when empty.
        inputs: Vec<PathBuf>,
    },
    /// Calibrated metrics and APR sweeps on the test split.
    Eval,
    /// Train and score model variants along one axis.
    Ablate {
        #[arg(long, value_enum, default_value_t = AxisArg::All)]
        axis: AxisArg,
    },
    /// Metrics at calibrated APR under increasing noise.
    Robustness,
    /// Print the effective configuration.
    Config,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    Branches,
    Scope,
    Kernel,
    All,
}

impl Cli {
    pub fn load_config(&self) -> Result<RunConfig> {
        let mut c = RunConfig::load(self.config.as_deref(), &self.overrides)?;
        if let Some(p) = &self.data_dir {
            c.paths.data_dir = p.clone();
        }
        if let Some(p) = &self.run_dir {
            c.paths.run_dir = p.clone();
        }
        if let Some(p) = &self.output_dir {
            c.paths.output_dir = p.clone();
        }
        Ok(c)
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let config = cli.load_config()?;
    let quiet = cli.quiet;
    let mut progress = |line: &str| {
        if !quiet {
            eprintln!("{line}");
        }
    };
    match &cli.command {
        Command::Config => print!("{}", config.to_toml()),
        Command::Synth { force } => {
            let m = corpus::synthesize(&config.synth, &config.paths.data_dir, *force)?;
            let count = |s| m.entries(s).count();
            println!(
                "wrote {} train, {} val, {} test gathers to {}",
                count(Split::Train),
                count(Split::Val),
                count(Split::Test),
                config.paths.data_dir.display()
            );
        }
        Command::Train => {
            let model = config.model.to_model_config()?;
            let train = corpus::load_split(&config, Split::Train, false)?;
            let val = corpus::load_split(&config, Split::Val, false)?;
            eval::write(&config.paths.run_dir, "config.toml", &config.to_toml())?;
            for o in train::train_all(&config, &model, &config.paths.run_dir, &train, &val, &mut progress)? {
                println!(
                    "seed {}: best val bce {:.6} at epoch {} of {}, {}",
                    o.seed,
                    o.best_val_loss,
                    o.best_epoch,
                    o.epochs_run,
                    o.checkpoint.display()
                );
            }
        }
        Command::Pick {
            checkpoint,
            threshold,
            out,
            inputs,
        } => {
            check_threshold(*threshold).map_err(|e| CliError::Usage(e.to_string()))?;
            let ck = checkpoint
                .clone()
                .unwrap_or_else(|| train::checkpoint_path(&config.paths.run_dir, config.training.seeds[0]));
            let model = AnyModel::load(&ck, config.training.precision)?;
            let files = corpus::input_files(&config, inputs)?;
            let manifest = Manifest::load(&config.paths.data_dir).ok();
            let out = out.clone().unwrap_or_else(|| config.paths.output_dir.join("picks"));
            std::fs::create_dir_all(&out).map_err(|e| CliError::data(out.display(), e))?;
            for f in &files {
                let g = read_gather(f).map_err(|e| CliError::data(f.display(), e))?;
                let lmo = corpus::resolve_lmo(&config, manifest.as_ref(), &g.survey_id)?;
                let res = model.pick(&g, &lmo, *threshold)?;
                let stem = f.file_stem().map_or("gather".into(), |s| s.to_string_lossy().into_owned());
                eval::write(&out, &format!("{stem}.picks"), &picks_text(&res, g.dt))?;
                progress(&format!("{}: APR {:.4}", f.display(), res.apr()));
            }
            println!("wrote {} picks files to {}", files.len(), out.display());
        }
        Command::Eval => {
            let test = corpus::load_split(&config, Split::Test, false)?;
            let rows = eval::run_eval(&config, &test, &mut |_| {})?;
            for r in &rows {
                println!("{}", eval::summary_line(&config, r));
            }
        }
        Command::Ablate { axis } => {
            let train = corpus::load_split(&config, Split::Train, false)?;
            let val = corpus::load_split(&config, Split::Val, false)?;
            let test = corpus::load_split(&config, Split::Test, false)?;
            let axes: &[Axis] = match axis {
                AxisArg::Branches => &[Axis::Branches],
                AxisArg::Scope => &[Axis::Scope],
                AxisArg::Kernel => &[Axis::Kernel],
                AxisArg::All => &[Axis::Branches, Axis::Scope, Axis::Kernel],
            };
            for &a in axes {
                let rows = eval::run_ablation(&config, a, &train, &val, &test, &mut progress)?;
                println!("{}", eval::score_table(&rows));
            }
        }
        Command::Robustness => {
            let clean = corpus::load_split(&config, Split::Test, true)?;
            for (label, rows) in eval::run_robustness(&config, &clean, &mut |_| {})? {
                println!("{label}\n{}", fbpick_seismic::robustness::robustness_table(&rows));
            }
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("fbpick: {e}");
            e.exit_code()
        }
    }
}
