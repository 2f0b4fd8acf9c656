use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gradpush::harness::output::{self, RawWriter};
use gradpush::harness::{ratio_study, run_averaging, run_experiment_with, verification_campaign, ExperimentConfig};
use gradpush::Error;

#[derive(Parser)]
#[command(name = "gradpush", version, about = "Push-sum averaging and gradient-push over faulty directed networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Averaging demo: mean max deviation from the average per slot.
    Raps(Common),
    /// Optimization experiment with the centralized baseline.
    Rasgp(Common),
    /// Trace every run and cross-validate it against the linear system.
    Verify(Common),
    /// E_c/E_dist over bidirectional cycles of several sizes.
    Ratio {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "5,10,20")]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "2000,10000,20000")]
        checkpoints: Vec<u64>,
    },
    /// Re-run a recorded config and compare raw series byte for byte.
    Replay(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Attach the verifier to every run.
    #[arg(long)]
    verify: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.runs {
            cfg.runs = r;
        }
        if let Some(h) = self.horizon {
            cfg.horizon = h;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = Some(o.clone());
        }
        cfg.verify |= self.verify;
        cfg.validate()?;
        Ok(cfg)
    }
}

enum Outcome {
    Ok,
    VerificationFailed,
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("results"))
}

fn report_failures(reports: &[gradpush::VerificationReport]) -> Outcome {
    let failed: Vec<_> = reports.iter().filter(|r| !r.is_ok()).collect();
    for r in &failed {
        eprint!("{r}");
    }
    if failed.is_empty() {
        if !reports.is_empty() {
            println!("verified {} runs: ok", reports.len());
        }
        Outcome::Ok
    } else {
        eprintln!("{} of {} runs failed verification", failed.len(), reports.len());
        Outcome::VerificationFailed
    }
}

fn rasgp(cfg: &ExperimentConfig) -> Result<Outcome, Error> {
    let dir = out_dir(cfg);
    fs::create_dir_all(&dir)?;
    let raw = if cfg.persist_raw { Some(RawWriter::new(&dir)?) } else { None };
    let out = run_experiment_with(cfg, |r| match &raw {
        Some(w) => w.write(r),
        None => Ok(()),
    })?;
    output::write_experiment(&dir, cfg, &out)?;
    println!("wrote {}", dir.display());
    Ok(report_failures(&out.reports))
}

fn run(command: Command) -> Result<Outcome, Error> {
    match command {
        Command::Raps(c) => {
            let cfg = c.load()?;
            let dir = out_dir(&cfg);
            let out = run_averaging(&cfg)?;
            fs::create_dir_all(&dir)?;
            fs::write(dir.join("consensus.csv"), output::averaging_csv(&out.max_error))?;
            println!("final max deviation {:.3e}", out.max_error.last().copied().unwrap_or(0.0));
            Ok(report_failures(&out.reports))
        }
        Command::Rasgp(c) => rasgp(&c.load()?),
        Command::Verify(c) => {
            let cfg = c.load()?;
            let report = verification_campaign(&cfg)?;
            print!("{}", report.summary);
            if let Some(dir) = &c.out {
                fs::create_dir_all(dir)?;
                fs::write(dir.join("verification.txt"), report.summary.to_string())?;
            }
            for f in &report.failures {
                eprint!("{f}");
            }
            Ok(if report.is_ok() { Outcome::Ok } else { Outcome::VerificationFailed })
        }
        Command::Ratio { common, sizes, checkpoints } => {
            let cfg = common.load()?;
            let rows = ratio_study(&cfg, &sizes, &checkpoints)?;
            let dir = out_dir(&cfg);
            fs::create_dir_all(&dir)?;
            let csv = output::ratio_csv(&rows);
            fs::write(dir.join("ratio.csv"), &csv)?;
            print!("{csv}");
            Ok(Outcome::Ok)
        }
        Command::Replay(c) => {
            let recorded = c.config.parent().map(Path::to_path_buf).unwrap_or_default();
            let mut cfg = c.load()?;
            let target = c.out.clone().unwrap_or_else(|| recorded.join("replay"));
            cfg.out_dir = Some(target.clone());
            cfg.persist_raw = true;
            let outcome = rasgp(&cfg)?;
            if !recorded.join("raw").is_dir() {
                println!("no recorded raw series beside the config; nothing to compare");
                return Ok(outcome);
            }
            let mismatched = output::compare_raw(&recorded, &target)?;
            if mismatched.is_empty() {
                println!("replay identical to {}", recorded.display());
                Ok(outcome)
            } else {
                eprintln!("replay differs in: {}", mismatched.join(", "));
                Ok(Outcome::VerificationFailed)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::VerificationFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::RunFailed { run, seed, .. } = &e {
                eprintln!("replay with --seed of the experiment and run index {run} (run key {seed:#018x})");
            }
            ExitCode::from(if e.is_configuration() { 2 } else { 1 })
        }
    }
}
