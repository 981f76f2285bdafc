use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ctxbo::harness::{
    export_heatmap, exit_code, resolve_output_dir, run_compare, run_learn, simulate_to_csv, ComparisonSpec, ModelFile,
    RunConfig,
};
use ctxbo::{Error, Result};

#[derive(Parser)]
#[command(name = "ctxbo", version, about = "Learn and evaluate context-adaptive controller weights")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the outer learning loop described by a run config.
    Learn { config: PathBuf },
    /// Compare controllers on paired closed-loop episodes.
    Compare { spec: PathBuf },
    /// Simulate one episode and dump its trajectory.
    Simulate {
        config: PathBuf,
        #[arg(long, num_args = 1.., required = true, allow_negative_numbers = true)]
        z: Vec<f64>,
        #[arg(long, num_args = 1.., required = true, allow_negative_numbers = true)]
        theta: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Export adapted weights on a context grid.
    Heatmap {
        model: PathBuf,
        #[arg(long, default_value_t = 21)]
        grid: usize,
    },
}

fn model_output_dir(model: &Path, file: &ModelFile) -> PathBuf {
    let configured = model.parent().map_or_else(|| file.run_config.output_dir.clone(), Path::to_path_buf);
    resolve_output_dir(&configured)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Learn { config } => {
            let cfg = RunConfig::load(&config)?;
            let out = resolve_output_dir(&cfg.output_dir);
            let result = run_learn(&cfg, &out)?;
            println!("{}", result.model_path.display());
        }
        Command::Compare { spec } => {
            let spec = ComparisonSpec::load(&spec)?;
            let out = resolve_output_dir(&spec.output_dir);
            let cmp = run_compare(&spec, &out)?;
            println!("controller,episodes,safe_episodes,mean_travel_time,mean_acceleration");
            for r in &cmp.rows {
                println!(
                    "{},{},{},{:.4},{:.4}",
                    r.controller, r.episodes, r.safe_episodes, r.mean_travel_time, r.mean_acceleration
                );
            }
        }
        Command::Simulate { config, z, theta, seed } => {
            let cfg = RunConfig::load(&config)?;
            let out = resolve_output_dir(&cfg.output_dir);
            let outcome = simulate_to_csv(&cfg, &z, &theta, seed, &out)?;
            println!(
                "exit_time={} coll_margin={} accel_integral={}",
                outcome.exit_time, outcome.coll_margin, outcome.accel_integral
            );
        }
        Command::Heatmap { model, grid } => {
            let file = ModelFile::load(&model)?;
            let m = file.model()?;
            let out = model_output_dir(&model, &file);
            export_heatmap(&m, grid, &out).map_err(|e| match e {
                Error::InvalidInput(msg) => Error::Config(msg),
                other => other,
            })?;
            println!("{}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
