//! `qlink` — command-line front end for the two-node quantum network
//! simulator: scenario runs, bundled figure reproductions, parameter sweeps,
//! and the transfer inefficiency budget.

mod config;
mod error;
mod experiments;
mod figures;
mod sweep;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use config::{DeviceOverrides, Params, ScenarioFile, OUTPUT_ENV};
use error::{CliError, CliResult};
use experiments::{run_experiment, Experiment, RunOutput};

#[derive(Parser)]
#[command(
    name = "qlink",
    version,
    about = "Simulator for a two-node superconducting quantum network linked by a long multimode cable"
)]
struct Cli {
    /// Output directory (overrides the scenario setting and QLINK_OUTPUT_DIR)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario configuration file
    Run {
        /// Path to a scenario TOML file
        config: PathBuf,
    },
    /// Run a bundled figure-reproduction scenario (2a..2f, 3a, 3c, 3d, 3e,
    /// 3f, 4b, 4d, S3, S7, S8, S9, S11, S12)
    Reproduce {
        /// Figure identifier
        figure_id: String,
    },
    /// Sweep scenario parameters over one or more axes
    Sweep {
        /// Path to a scenario TOML file
        config: PathBuf,
        /// Axis spec `key=v1..v2:n` (repeatable)
        #[arg(long = "axis", required = true)]
        axes: Vec<String>,
        /// Number of worker threads
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Master seed (defaults to the scenario seed)
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compute and print the transfer inefficiency budget for a device config
    Budget {
        /// Path to a device TOML file ([device] overrides, optional [budget] options)
        device_config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.cmd {
        Cmd::Run { config } => cmd_run(&config, cli.out.as_deref()),
        Cmd::Reproduce { figure_id } => cmd_reproduce(&figure_id, cli.out.as_deref()),
        Cmd::Sweep {
            config,
            axes,
            workers,
            seed,
        } => cmd_sweep(&config, &axes, workers, seed, cli.out.as_deref()),
        Cmd::Budget { device_config } => cmd_budget(&device_config, cli.out.as_deref()),
    }
}

fn read_config(path: &Path) -> CliResult<String> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))
}

/// Output base directory: CLI flag > scenario setting > environment > ./qlink-out.
fn base_dir(cli_out: Option<&Path>, scenario_out: Option<&str>) -> PathBuf {
    if let Some(p) = cli_out {
        return p.to_path_buf();
    }
    if let Some(p) = scenario_out {
        return PathBuf::from(p);
    }
    if let Ok(p) = std::env::var(OUTPUT_ENV) {
        if !p.is_empty() {
            return PathBuf::from(p);
        }
    }
    PathBuf::from("qlink-out")
}

fn write_outputs(
    dir: &Path,
    manifest: &serde_json::Value,
    files: &[(String, String)],
) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    for (name, contents) in files {
        fs::write(dir.join(name), contents)?;
    }
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}

fn manifest(
    scn: &ScenarioFile,
    seed: u64,
    out: &RunOutput,
    extra: serde_json::Value,
) -> CliResult<serde_json::Value> {
    let mut file_names: Vec<&str> = out.files.iter().map(|(n, _)| n.as_str()).collect();
    file_names.sort_unstable();
    let mut m = json!({
        "name": scn.name,
        "experiment": scn.experiment,
        "seed": seed,
        "version": env!("CARGO_PKG_VERSION"),
        "device": serde_json::to_value(&scn.device)?,
        "params": serde_json::to_value(&scn.params)?,
        "metrics": serde_json::to_value(&out.metrics)?,
        "outputs": file_names,
    });
    if let (Some(obj), serde_json::Value::Object(ex)) = (m.as_object_mut(), extra) {
        for (k, v) in ex {
            obj.insert(k, v);
        }
    }
    Ok(m)
}

fn print_metrics(out: &RunOutput) {
    for (k, v) in &out.metrics {
        println!("{k} = {v:.6}");
    }
}

fn run_scenario_to(scn: &ScenarioFile, dir: &Path) -> CliResult<RunOutput> {
    let exp: Experiment = scn.experiment.parse()?;
    let device = scn.device.resolve()?;
    let seed = scn.seed.unwrap_or(0);
    let params = Params::new(scn.params.clone());
    let out = run_experiment(exp, &device, &params, seed)?;
    let m = manifest(scn, seed, &out, json!({}))?;
    write_outputs(dir, &m, &out.files)?;
    Ok(out)
}

fn cmd_run(config: &Path, cli_out: Option<&Path>) -> CliResult<()> {
    let scn = ScenarioFile::parse(&read_config(config)?)?;
    let dir = base_dir(cli_out, scn.output_dir.as_deref()).join(&scn.name);
    let out = run_scenario_to(&scn, &dir)?;
    print_metrics(&out);
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_reproduce(figure_id: &str, cli_out: Option<&Path>) -> CliResult<()> {
    let fig = figures::lookup(figure_id)?;
    let scn = ScenarioFile::parse(fig.scenario)
        .map_err(|e| CliError::Runtime(format!("bundled scenario {figure_id}: {e}")))?;
    let dir = base_dir(cli_out, scn.output_dir.as_deref()).join(&scn.name);
    let out = run_scenario_to(&scn, &dir)?;
    fs::write(dir.join("README.md"), format!("{}\n", fig.readme))?;
    print_metrics(&out);
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_sweep(
    config: &Path,
    axis_specs: &[String],
    workers: usize,
    seed: Option<u64>,
    cli_out: Option<&Path>,
) -> CliResult<()> {
    if workers == 0 {
        return Err(CliError::validation("--workers must be at least 1"));
    }
    let scn = ScenarioFile::parse(&read_config(config)?)?;
    let axes: Vec<sweep::AxisSpec> = axis_specs
        .iter()
        .map(|s| sweep::parse_axis(s))
        .collect::<CliResult<_>>()?;
    let device = scn.device.resolve()?;
    let master = seed.or(scn.seed).unwrap_or(0);
    let csv = sweep::run_sweep(&scn, &device, &axes, workers, master)?;

    let dir = base_dir(cli_out, scn.output_dir.as_deref()).join(format!("{}-sweep", scn.name));
    let axes_json: Vec<serde_json::Value> = axes
        .iter()
        .map(|a| json!({ "key": a.key, "values": a.values }))
        .collect();
    let m = json!({
        "name": scn.name,
        "experiment": scn.experiment,
        "seed": master,
        "version": env!("CARGO_PKG_VERSION"),
        "device": serde_json::to_value(&scn.device)?,
        "params": serde_json::to_value(&scn.params)?,
        "axes": axes_json,
        "outputs": ["sweep.csv"],
    });
    write_outputs(&dir, &m, &[("sweep.csv".to_string(), csv)])?;
    println!("wrote {}", dir.display());
    Ok(())
}

/// Device configuration file for the `budget` subcommand.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceFile {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    output_dir: Option<String>,
    #[serde(default)]
    device: DeviceOverrides,
    #[serde(default)]
    budget: toml::Table,
}

fn cmd_budget(device_config: &Path, cli_out: Option<&Path>) -> CliResult<()> {
    let file: DeviceFile = toml::from_str(&read_config(device_config)?)
        .map_err(|e| CliError::Validation(format!("device config: {e}")))?;
    let device = file.device.resolve()?;
    let params = Params::new(file.budget.clone());
    let out = run_experiment(Experiment::Budget, &device, &params, 0)?;

    println!("transfer inefficiency budget:");
    for (k, v) in &out.metrics {
        println!("  {:<20} {:6.2}%", k.replace('_', " "), v * 100.0);
    }

    let name = file.name.unwrap_or_else(|| "budget".to_string());
    let dir = base_dir(cli_out, file.output_dir.as_deref()).join(&name);
    let mut file_names: Vec<&str> = out.files.iter().map(|(n, _)| n.as_str()).collect();
    file_names.sort_unstable();
    let m = json!({
        "name": name,
        "experiment": "budget",
        "seed": 0,
        "version": env!("CARGO_PKG_VERSION"),
        "device": serde_json::to_value(&file.device)?,
        "params": serde_json::to_value(&file.budget)?,
        "metrics": serde_json::to_value(&out.metrics)?,
        "outputs": file_names,
    });
    write_outputs(&dir, &m, &out.files)?;
    println!("wrote {}", dir.display());
    Ok(())
}
