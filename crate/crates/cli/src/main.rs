//! `uotnet` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 training divergence,
//! 3 a failed oracle check in `validate`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use uotnet::config::RunConfig;
use uotnet::io::{loss_log_csv, render_planar, write_loss_log, Snapshot};
use uotnet::oracle::validation_suite;
use uotnet::problems::{preset_summary, PRESET_IDS};
use uotnet::training::{Control, StopReason, TrainConfig, Trainer, SNAPSHOT_TIMES};
use uotnet::{build_preset, Error};

const USAGE: u8 = 1;
const DIVERGED: u8 = 2;
const CHECK_FAILED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "uotnet",
    version,
    about = "Neural solver for dynamic unbalanced optimal transport"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one problem and export the loss log, snapshots and a checkpoint.
    ///
    /// Without --out nothing is written to disk and the loss log goes to
    /// stdout. With --out the directory receives loss_log.csv,
    /// snapshot_t{0.00,0.25,0.50,0.75,1.00}.csv, a .pgm per snapshot for
    /// planar grids, and checkpoint.txt holding the final training state.
    ///
    /// The config file is TOML; see the key reference printed by
    /// `uotnet run --help-config`.
    Run {
        /// Preset id (see `uotnet presets`); overrides the config's `preset` key.
        #[arg(long)]
        preset: Option<String>,
        /// TOML config file
        #[arg(long)]
        config: Option<PathBuf>,
        /// Network initialisation seed
        #[arg(long)]
        seed: Option<u64>,
        /// Iteration cap.
        #[arg(long)]
        iters: Option<usize>,
        /// Output directory, created if missing
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Print every logged loss line to stderr.
        #[arg(long)]
        verbose: bool,
        /// Print the config file key reference and exit.
        #[arg(long)]
        help_config: bool,
    },
    /// Run the oracle suite and print its report.
    Validate,
    /// Render the density of a planar grid snapshot as a binary PGM.
    Render {
        /// Snapshot CSV written by `run`
        #[arg(long)]
        snapshot: PathBuf,
        /// Output .pgm path
        #[arg(long)]
        out: PathBuf,
    },
    /// List preset ids.
    Presets,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run {
            preset,
            config,
            seed,
            iters,
            out,
            resume,
            verbose,
            help_config,
        } => {
            if help_config {
                stdout(uotnet::config::KEY_REFERENCE);
                return ExitCode::SUCCESS;
            }
            let args = RunArgs {
                preset,
                config,
                seed,
                iters,
                out,
                resume,
                verbose,
            };
            run(&args)
        }
        Command::Validate => validate(),
        Command::Render { snapshot, out } => render(&snapshot, &out),
        Command::Presets => {
            let mut text = String::new();
            for id in PRESET_IDS {
                text.push_str(&format!("{id:<22} {}\n", preset_summary(id).unwrap_or("")));
            }
            stdout(&text);
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Diverged(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(DIVERGED)
        }
        Err(Failure::Checks) => ExitCode::from(CHECK_FAILED),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(USAGE)
        }
    }
}

enum Failure {
    Usage(String),
    Diverged(String),
    Checks,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Diverged { .. } | Error::NonFinite(_) => Failure::Diverged(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

struct RunArgs {
    preset: Option<String>,
    config: Option<PathBuf>,
    seed: Option<u64>,
    iters: Option<usize>,
    out: Option<PathBuf>,
    resume: Option<PathBuf>,
    verbose: bool,
}

fn run(args: &RunArgs) -> Result<(), Failure> {
    let (spec, mut train) = match &args.config {
        Some(path) => RunConfig::load(path)?.resolve(args.preset.as_deref())?,
        None => {
            let id = args
                .preset
                .as_deref()
                .ok_or_else(|| Failure::Usage("run needs --preset or --config".into()))?;
            (build_preset(id)?, TrainConfig::default())
        }
    };
    if let Some(seed) = args.seed {
        train.seed = seed;
    }
    if let Some(iters) = args.iters {
        train.max_iters = iters;
    }
    let mut trainer = Trainer::new(spec, train)?;
    if let Some(path) = &args.resume {
        let state = uotnet::training::TrainState::load(path)?;
        trainer.resume(state)?;
    }
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?;
    }
    let log_interval = trainer.config.log_interval;
    let verbose = args.verbose;
    let outcome = trainer.run(|it, r, _| {
        if verbose && it % log_interval == 0 {
            eprintln!(
                "iter {it:>6}  L_c {:.3e}  L_hj {:.3e}  L_ic {:.3e}  L_bc {:.3e}  total {:.3e}  W {:.4}",
                r.continuity, r.hj, r.endpoint, r.boundary, r.total, r.cost
            );
        }
        Control::Continue
    });
    let stop = match outcome {
        Ok(stop) => stop,
        Err(e) => {
            // keep whatever was logged before the failure
            emit_log(&trainer, args.out.as_deref())?;
            return Err(e.into());
        }
    };
    emit_log(&trainer, args.out.as_deref())?;
    let Some(dir) = &args.out else {
        return Ok(());
    };
    let snapshots = trainer.snapshots()?;
    for s in &snapshots {
        s.export(&dir.join(format!("snapshot_t{:.2}.csv", s.t)))?;
        if s.grid.as_ref().is_some_and(|g| g.len() == 2) {
            render_planar(s, &dir.join(format!("rho_t{:.2}.pgm", s.t)))?;
        }
    }
    debug_assert_eq!(snapshots.len(), SNAPSHOT_TIMES.len());
    trainer.state.save(&dir.join("checkpoint.txt"))?;
    let best = trainer.state.best.as_ref().map(|b| (b.iteration, b.report.total));
    eprintln!(
        "stopped after {} iterations ({}); best total {:.4e} at iteration {}",
        trainer.state.iteration,
        match stop {
            StopReason::Threshold => "below threshold",
            StopReason::MaxIters => "iteration cap",
            StopReason::Observer => "observer",
        },
        best.map_or(f64::NAN, |b| b.1),
        best.map_or(0, |b| b.0),
    );
    Ok(())
}

fn emit_log(trainer: &Trainer, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(dir) => write_loss_log(&trainer.history, &dir.join("loss_log.csv"))?,
        None => stdout(&loss_log_csv(&trainer.history)),
    }
    Ok(())
}

fn validate() -> Result<(), Failure> {
    let report = validation_suite()?;
    stdout(&report.to_string());
    if report.passed() {
        stdout(&format!("all {} checks passed\n", report.checks.len()));
        Ok(())
    } else {
        stdout(&format!(
            "{} of {} checks failed\n",
            report.failures().count(),
            report.checks.len()
        ));
        Err(Failure::Checks)
    }
}

fn render(snapshot: &Path, out: &Path) -> Result<(), Failure> {
    let s = Snapshot::import(snapshot)?;
    render_planar(&s, out)?;
    Ok(())
}

// a closed pipe (e.g. `| head`) is not an error worth reporting
fn stdout(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|()| out.flush());
}
