use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};
use qkdnet::scenario::{
    preset, run_scenario, write_gnuplot, write_histogram_csv, write_rows_csv, write_rows_json, Manifest,
    ScenarioConfig, ScenarioError, PRESET_NAMES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Emit {
    Csv,
    Json,
    Both,
}

/// Simulate QKD frames in a packet-switched network and compute optimized
/// finite-key rates over parameter sweeps.
#[derive(Debug, Parser)]
#[command(name = "qkdnet", version)]
struct Cli {
    /// Scenario config or a manifest from an earlier run (JSON).
    #[arg(long, conflicts_with = "preset", required_unless_present_any = ["preset", "list_presets"])]
    config: Option<PathBuf>,
    /// Built-in scenario set.
    #[arg(long)]
    preset: Option<String>,
    /// Multiplies the frames generated per pair.
    #[arg(long)]
    scale: Option<f64>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    emit: Emit,
    /// Also write a gnuplot-friendly .dat file per scenario.
    #[arg(long)]
    gnuplot: bool,
    #[arg(long)]
    list_presets: bool,
}

enum Failure {
    Config(anyhow::Error),
    Other(anyhow::Error),
}

fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if value.get("config").is_some() && value.get("cells").is_some() {
        let manifest: Manifest = serde_json::from_value(value).context("reading manifest")?;
        return Ok(manifest.config);
    }
    serde_json::from_value(value).with_context(|| format!("reading scenario config {}", path.display()))
}

fn configs(cli: &Cli) -> Result<Vec<ScenarioConfig>, Failure> {
    let mut list = match (&cli.config, &cli.preset) {
        (Some(path), _) => vec![load_config(path).map_err(Failure::Config)?],
        (None, Some(name)) => preset(name).map_err(|e| Failure::Config(e.into()))?,
        (None, None) => unreachable!("clap requires one of them"),
    };
    for c in &mut list {
        if let Some(s) = cli.scale {
            c.scale = s;
        }
        if let Some(s) = cli.seed {
            c.seed = s;
        }
    }
    Ok(list)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

/// Returns the number of failed cells.
fn run_one(cli: &Cli, config: &ScenarioConfig) -> Result<usize, Failure> {
    let output = run_scenario(config, cli.workers).map_err(|e| match e {
        ScenarioError::ConfigInvalid { .. } | ScenarioError::Topology(_) | ScenarioError::UnknownPreset(_) => {
            Failure::Config(anyhow::Error::new(e).context(format!("scenario {}", config.name)))
        }
        other => Failure::Other(other.into()),
    })?;
    let write = || -> Result<()> {
        fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
        let stem = cli.out.join(&config.name);
        let path = |ext: &str| stem.with_extension(ext);
        if matches!(cli.emit, Emit::Csv | Emit::Both) {
            write_rows_csv(&output.rows, create(&path("csv"))?)?;
        }
        if matches!(cli.emit, Emit::Json | Emit::Both) {
            write_rows_json(&output.rows, create(&path("json"))?)?;
        }
        fs::write(path("manifest.json"), output.manifest().to_json())?;
        if !output.histograms.is_empty() {
            write_histogram_csv(&output.histograms, create(&path("hist.csv"))?)?;
        }
        if cli.gnuplot {
            write_gnuplot(&output, create(&path("dat"))?)?;
        }
        Ok(())
    };
    write().map_err(Failure::Other)?;
    eprintln!(
        "{}: {} cells, {} rows, {} failed cells -> {}",
        config.name,
        output.cells.len(),
        output.rows.len(),
        output.failed_cells.len(),
        cli.out.display()
    );
    Ok(output.failed_cells.len())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.list_presets {
        for name in PRESET_NAMES {
            println!("{name}");
        }
        return ExitCode::SUCCESS;
    }
    let result = configs(&cli).and_then(|list| {
        let mut failed = 0;
        for c in &list {
            failed += run_one(&cli, c)?;
        }
        Ok(failed)
    });
    match result {
        Ok(0) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(3),
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
