use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ntswe::config::{ExperimentConfig, Stage};
use ntswe::diagnostics::summary_table;
use ntswe::pipeline::{load_reports, run_pipeline, PipelineOutput};

/// Energy-preserving full and reduced order shallow water experiments.
#[derive(Parser)]
#[command(name = "ntswe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: FOM, POD and DEIM reduced models, reports.
    Run(Common),
    /// Full order model only; writes the snapshot files.
    Fom(Common),
    /// One reduced model, reusing the snapshots of an earlier `fom` run.
    Rom {
        #[arg(long, value_enum)]
        method: Method,
        #[command(flatten)]
        common: Common,
    },
    /// Print the error and timing summary stored in an output directory.
    Report {
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Pod,
    Deim,
}

#[derive(Args)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// geostrophic_adjustment (ex1), shear_instability (ex2) or custom.
    #[arg(long, value_name = "NAME")]
    scenario: Option<String>,
    /// POD modes per component (default: energy criterion).
    #[arg(long, value_name = "N")]
    modes: Option<usize>,
    /// DEIM points per block (default: energy criterion).
    #[arg(long, value_name = "M")]
    deim_modes: Option<usize>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, num_args = 2, value_names = ["NX", "NY"])]
    grid: Option<Vec<usize>>,
    /// Number of time steps, replacing the scenario's end time.
    #[arg(long, value_name = "K")]
    steps: Option<usize>,
}

fn load_config(path: Option<&PathBuf>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p).map_err(|e| anyhow!("stage `config` failed: {e}")),
        None => Ok(ExperimentConfig::default()),
    }
}

impl Common {
    fn config(&self, stages: Option<Vec<Stage>>) -> Result<ExperimentConfig> {
        let mut c = load_config(self.config.as_ref())?;
        if let Some(s) = &self.scenario {
            c.scenario = s.parse().map_err(|e| anyhow!("stage `config` failed: {e}"))?;
        }
        if let Some(n) = self.modes {
            c.rom.modes = Some(n);
        }
        if let Some(m) = self.deim_modes {
            c.rom.deim_modes = Some(m);
        }
        if let Some(dir) = &self.out {
            c.output.dir = dir.clone();
        }
        if let Some(g) = &self.grid {
            c.grid.nx = g[0];
            c.grid.ny = g[1];
        }
        if let Some(k) = self.steps {
            c.set_steps(k);
        }
        if let Some(s) = stages {
            c.output.stages = s;
        }
        Ok(c)
    }
}

fn print_output(out: &PipelineOutput) {
    let c = &out.config;
    println!(
        "{}: {}x{} grid, {} steps of {}",
        c.scenario,
        c.grid.nx,
        c.grid.ny,
        c.steps(),
        c.time.dt
    );
    if let Some(t) = out.fom.wall_time {
        println!(
            "fom: {:.3} s, {:.1} iterations per step",
            t.as_secs_f64(),
            out.fom.mean_iterations
        );
    }
    for r in &out.roms {
        let points = if r.deim_modes > 0 { format!(", {} points", r.deim_modes) } else { String::new() };
        println!(
            "{}: {} modes{points}, {:.1} iterations per step",
            r.method, r.modes, r.mean_iterations
        );
    }
    let table = summary_table(&out.error_reports(), out.timing.as_ref());
    if !table.is_empty() {
        println!("\n{table}");
    }
    println!("artifacts in {}", c.output.dir.display());
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.command {
        Command::Run(common) => common.config(None)?,
        Command::Fom(common) => common.config(Some(vec![Stage::Fom]))?,
        Command::Rom { method, common } => common.config(Some(vec![match method {
            Method::Pod => Stage::Pod,
            Method::Deim => Stage::Deim,
        }]))?,
        Command::Report { config, out } => {
            let mut c = load_config(config.as_ref())?;
            if let Some(dir) = out {
                c.output.dir = dir.clone();
            }
            let (errors, timing) = load_reports(&c.output.dir).map_err(|e| anyhow!("stage `report` failed: {e}"))?;
            if errors.is_empty() && timing.is_none() {
                anyhow::bail!("stage `report` failed: no reports in {}", c.output.dir.display());
            }
            print!("{}", summary_table(&errors, timing.as_ref()));
            return Ok(());
        }
    };
    let out = run_pipeline(&config)?;
    print_output(&out);
    Ok(())
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
