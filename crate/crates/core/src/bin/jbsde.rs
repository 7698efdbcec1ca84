use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use jbsde::driver::cache::{cache_ensemble, load_ensemble};
use jbsde::driver::TimeGrid;
use jbsde::experiment::{load_config, run_experiment, run_suite, write_outputs, Format, ReportBundle, Suite, SuiteOptions};
use jbsde::problem::builtins;

#[derive(Parser)]
#[command(name = "jbsde", version, about = "Monte Carlo runs and checks for jump BSDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the checks of a TOML config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a named suite with its built-in seeds.
    Suite {
        #[arg(value_enum)]
        name: SuiteName,
        #[command(flatten)]
        common: Common,
    },
    /// Write or inspect a cached path ensemble.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Subcommand)]
enum CacheAction {
    /// Simulate a builtin problem's factor and save it.
    Make {
        path: PathBuf,
        #[arg(long, default_value = "jump_terminal")]
        problem: String,
        #[arg(long, default_value_t = 1000)]
        paths: usize,
        #[arg(long, default_value_t = 64)]
        steps: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Load a cache file and print its shape.
    Verify { path: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteName {
    Oracle,
    Inequalities,
    Contraction,
    Convergence,
}

impl From<SuiteName> for Suite {
    fn from(s: SuiteName) -> Self {
        match s {
            SuiteName::Oracle => Suite::Oracle,
            SuiteName::Inequalities => Suite::Inequalities,
            SuiteName::Contraction => Suite::Contraction,
            SuiteName::Convergence => Suite::Convergence,
        }
    }
}

#[derive(Args)]
struct Common {
    /// Output directory.
    #[arg(long, env = "JBSDE_OUT_DIR")]
    out: Option<PathBuf>,
    /// Comma-separated subset of json,csv.
    #[arg(long, value_delimiter = ',', value_parser = parse_format)]
    format: Option<Vec<Format>>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_format(s: &str) -> Result<Format, String> {
    match s.trim() {
        "json" => Ok(Format::Json),
        "csv" => Ok(Format::Csv),
        other => Err(format!("unknown format `{other}`, expected json or csv")),
    }
}

fn finish(bundle: &ReportBundle, out: &Path, formats: &[Format]) -> Result<ExitCode> {
    let manifest = write_outputs(bundle, out, formats)?;
    for c in &bundle.checks {
        eprintln!("{} {}", if c.passed { "PASS" } else { "FAIL" }, c.name);
    }
    let failures: Vec<_> = bundle
        .failures()
        .iter()
        .map(|c| {
            json!({
                "name": c.name,
                "lhs": c.lhs,
                "rhs": c.rhs,
                "measured_ratio": c.measured_ratio,
                "violations": c.violations,
                "witness": c.witness,
            })
        })
        .collect();
    let summary = json!({
        "passed": failures.is_empty(),
        "checks": bundle.checks.len(),
        "failures": failures,
        "out": out,
        "files": manifest.files.iter().map(|f| &f.path).collect::<Vec<_>>(),
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(if bundle.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, common } => {
            let mut cfg = load_config(&config)?;
            if let Some(n) = common.paths {
                cfg.ensemble.n_paths = n;
            }
            if let Some(n) = common.steps {
                cfg.grid.n_steps = n;
            }
            if let Some(s) = common.seed {
                cfg.ensemble.seed = Some(s);
            }
            cfg.validate()?;
            let out = common.out.unwrap_or_else(|| cfg.output.dir.clone());
            let formats = common.format.unwrap_or_else(|| cfg.output.formats.clone());
            let bundle = run_experiment(&cfg)?;
            finish(&bundle, &out, &formats)
        }
        Command::Suite { name, common } => {
            let suite = Suite::from(name);
            let opts = SuiteOptions {
                n_paths: common.paths,
                n_steps: common.steps,
                seed: common.seed,
            };
            let out = common
                .out
                .unwrap_or_else(|| PathBuf::from("jbsde-out").join(suite.name()));
            let formats = common.format.unwrap_or_else(|| vec![Format::Json, Format::Csv]);
            let bundle = run_suite(suite, &opts)?;
            finish(&bundle, &out, &formats)
        }
        Command::Cache { action } => match action {
            CacheAction::Make {
                path,
                problem,
                paths,
                steps,
                seed,
            } => {
                let prob = builtins::builtin(&problem)?;
                let grid = TimeGrid::uniform(1.0, steps)?;
                let ens = prob.simulate(&grid, paths, seed)?;
                cache_ensemble(&ens, &path).with_context(|| format!("writing {}", path.display()))?;
                if load_ensemble(&path)? != ens {
                    bail!("reloaded ensemble differs from the simulated one");
                }
                println!("{}", json!({ "path": path, "problem": problem, "paths": paths, "steps": steps, "seed": seed }));
                Ok(ExitCode::SUCCESS)
            }
            CacheAction::Verify { path } => {
                let ens = load_ensemble(&path)?;
                println!(
                    "{}",
                    json!({
                        "path": path,
                        "paths": ens.n_paths(),
                        "steps": ens.n_steps(),
                        "dim_k": ens.dim_k(),
                        "marks": ens.n_marks(),
                        "seed": ens.seed(),
                    })
                );
                Ok(ExitCode::SUCCESS)
            }
        },
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
