//! Batch driver behind the `gibbsctrl` binary.

pub mod commands;
pub mod config;
pub mod csv;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

pub use self::config::ExperimentConfig;
pub use self::csv::{emit_csv, read_csv, CsvTable, Field};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subcommand {
    Solve,
    Simulate,
    Optimize,
    Compare,
    LimitSweep,
    Certify,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "gibbsctrl", version, about = "Soft-killed mean-field control experiments")]
pub struct Args {
    #[arg(value_enum)]
    pub command: Subcommand,
    /// TOML experiment file.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `mc.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; falls back to GIBBSCTRL_THREADS, then to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overrides `output.dir`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// `section.key=value`, applied in order after the file is read.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

/// Reads the configuration with all overrides applied.
pub fn resolve(args: &Args) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| Error::io(&args.config, e))?;
    let mut overrides = args.overrides.clone();
    if let Some(s) = args.seed {
        overrides.push(format!("mc.seed={s}"));
    }
    if let Some(d) = &args.out_dir {
        overrides.push(format!("output.dir={}", toml::Value::String(d.display().to_string())));
    }
    ExperimentConfig::from_toml(&text, &overrides)
}

fn thread_count(args: &Args) -> Result<usize> {
    if let Some(k) = args.threads {
        return Ok(k);
    }
    match std::env::var("GIBBSCTRL_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("GIBBSCTRL_THREADS=`{v}` is not a count"))),
        Err(_) => Ok(0),
    }
}

pub fn run(args: &Args) -> Result<()> {
    let cfg = resolve(args)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(args)?)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let art = commands::Artifacts::new(&cfg, &PathBuf::from(&cfg.output.dir))?;
    pool.install(|| match args.command {
        Subcommand::Solve => commands::solve(&cfg, &art),
        Subcommand::Simulate => commands::simulate(&cfg, &art),
        Subcommand::Optimize => commands::optimize(&cfg, &art),
        Subcommand::Compare => commands::compare(&cfg, &art),
        Subcommand::LimitSweep => commands::limit_sweep(&cfg, &art),
        Subcommand::Certify => commands::certify(&cfg, &art),
    })
}

/// Exit status 2 for configuration errors, 3 for solver non-convergence,
/// 1 for anything else.
pub fn main_with<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gibbsctrl: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                Error::NonConvergence { .. } => 3,
                _ => 1,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(dir: &std::path::Path, cmd: &str, extra: &[&str]) -> Args {
        let cfg = dir.join("c.toml");
        if !cfg.exists() {
            std::fs::write(&cfg, "[problem]\nterminal = \"constant\"\nterminal_constant = 0.0\n").unwrap();
        }
        let mut v = vec![
            "gibbsctrl".to_string(),
            cmd.into(),
            "--config".into(),
            cfg.display().to_string(),
        ];
        v.extend(extra.iter().map(|s| s.to_string()));
        Args::try_parse_from(v).unwrap()
    }

    #[test]
    fn solve_with_zero_data_gives_zero_value() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let a = args(
            dir.path(),
            "solve",
            &[
                "--out-dir",
                out.to_str().unwrap(),
                "--set",
                "solver.dx=0.05",
                "--set",
                "solver.steps=50",
            ],
        );
        run(&a).unwrap();
        let t = read_csv(&out.join("fields.csv")).unwrap();
        assert!(!t.rows.is_empty());
        assert!(t.floats("u").unwrap().iter().all(|u| u.abs() <= 1e-8));
        assert!(t.floats("alpha").unwrap().iter().all(|u| u.abs() <= 1e-8));
        let resolved = std::fs::read_to_string(out.join("config.toml")).unwrap();
        assert_eq!(
            ExperimentConfig::from_toml(&resolved, &[]).unwrap(),
            resolve(&a).unwrap()
        );
    }

    #[test]
    fn unknown_override_fails_before_any_work() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let a = args(
            dir.path(),
            "solve",
            &["--out-dir", out.to_str().unwrap(), "--set", "solver.tol=1"],
        );
        assert!(matches!(run(&a), Err(Error::Config(_))));
        assert!(!out.exists());
    }

    #[test]
    fn non_convergence_leaves_a_residual_trace() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("c.toml"), "").unwrap();
        let out = dir.path().join("out");
        let a = args(
            dir.path(),
            "solve",
            &[
                "--out-dir",
                out.to_str().unwrap(),
                "--set",
                "solver.dx=0.05",
                "--set",
                "solver.steps=50",
                "--set",
                "solver.max_outer=3",
            ],
        );
        assert!(matches!(run(&a), Err(Error::NonConvergence { .. })));
        let t = read_csv(&out.join("residual_trace.csv")).unwrap();
        assert_eq!(t.rows.len(), 3);
    }

    #[test]
    fn every_artifact_carries_hash_and_seed() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let a = args(
            dir.path(),
            "limit-sweep",
            &[
                "--out-dir",
                out.to_str().unwrap(),
                "--seed",
                "9",
                "--set",
                "problem.terminal=\"distance\"",
                "--set",
                "mc.particles=200",
                "--set",
                "mc.sim_steps=20",
            ],
        );
        run(&a).unwrap();
        let hash = resolve(&a).unwrap().hash();
        for f in ["limit_sweep.csv", "survival.csv"] {
            let t = read_csv(&out.join(f)).unwrap();
            assert_eq!(&t.header[..2], &["config_hash", "seed"]);
            assert!(t.column("config_hash").unwrap().iter().all(|h| *h == hash));
            assert!(t.column("seed").unwrap().iter().all(|s| *s == "9"));
        }
    }
}
