//! `gfcsim` command-line front end.
//!
//! Exit status: 0 for a clean run, 2 when a run collapsed or stopped early,
//! 1 for any configuration, usage or I/O error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use gfcsim_core::engine::{run as simulate, RunResult};
use gfcsim_core::output::{csv_string, parse_csv, run_metrics, summarize, RunSummary};
use gfcsim_core::plot::plot_panels;
use gfcsim_core::scenario::{parse_scenario, Override, ResolvedScenario};

const DEFAULT_PANELS: [&str; 4] = ["v_dc", "i_dc", "omega", "p"];

#[derive(Parser)]
#[command(name = "gfcsim", version, about = "Grid-forming converter EMT simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write waveforms, metrics and plots.
    Run {
        #[command(flatten)]
        input: Input,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Channels to plot, comma separated (default: v_dc,i_dc,omega,p).
        #[arg(long, value_delimiter = ',')]
        channels: Vec<String>,
    },
    /// Run one simulation per value of a parameter.
    Sweep {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        out: PathBuf,
        /// Parameter and values, e.g. `gfc.*.controller.alpha=0.25,0.5`.
        #[arg(long)]
        sweep: String,
    },
    /// Plot channels of a waveform CSV.
    Plot {
        /// A `waveforms.csv` file.
        csv: PathBuf,
        /// Output directory (default: next to the CSV).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Channels to plot, comma separated (default: all).
        #[arg(long, value_delimiter = ',')]
        channels: Vec<String>,
    },
    /// Parse and check a scenario without running it.
    Validate {
        #[command(flatten)]
        input: Input,
    },
}

#[derive(Args)]
struct Input {
    /// Scenario file (`.toml`), or a `resolved.json` from an earlier run.
    #[arg(long)]
    scenario: PathBuf,
    /// Parameter override `key=value`; repeatable.
    #[arg(long = "set")]
    sets: Vec<String>,
}

impl Input {
    fn resolve(&self, extra: Option<&str>) -> Result<ResolvedScenario> {
        let mut ov = self
            .sets
            .iter()
            .map(|s| Override::parse(s))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(e) = extra {
            ov.push(Override::parse(e)?);
        }
        parse_scenario(&self.scenario, &ov)
            .with_context(|| format!("scenario {}", self.scenario.display()))
    }
}

fn failed(r: &RunResult) -> bool {
    r.collapsed() || r.terminated_early()
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_run(dir: &Path, resolved: &ResolvedScenario, result: &RunResult, channels: &[String]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write(&dir.join("resolved.json"), &resolved.to_json())?;
    write(&dir.join("waveforms.csv"), &csv_string(&result.log))?;
    write(&dir.join("metrics.json"), &run_metrics(&resolved.scenario, result).to_json())?;
    for panel in plot_panels(&result.log, channels)? {
        write(&dir.join(format!("{}.svg", panel.name)), &panel.svg)?;
    }
    Ok(())
}

fn cmd_run(input: &Input, out: &Path, channels: Vec<String>) -> Result<u8> {
    let resolved = input.resolve(None)?;
    let result = simulate(&resolved.scenario)?;
    let channels = if channels.is_empty() {
        DEFAULT_PANELS.iter().map(|s| s.to_string()).collect()
    } else {
        channels
    };
    // Unknown channels are a usage error; check before writing anything.
    plot_panels(&result.log, &channels)?;
    write_run(out, &resolved, &result, &channels)?;
    let s = summarize(&resolved.scenario, &result);
    println!("{}: {:?}", resolved.scenario.name, result.status);
    print_summary_header();
    print_summary_row(&resolved.scenario.name, &s);
    Ok(if failed(&result) { 2 } else { 0 })
}

fn print_summary_header() {
    println!(
        "{:<24} {:>9} {:>12} {:>12} {:>9}",
        "run", "collapsed", "settling_s", "f_nadir_pu", "min_vdc"
    );
}

fn print_summary_row(label: &str, s: &RunSummary) {
    let settle = s.settling_time.map_or("-".into(), |t| format!("{t:.3}"));
    println!(
        "{:<24} {:>9} {:>12} {:>12.5} {:>9.4}",
        label, s.collapsed, settle, s.frequency_nadir, s.min_vdc
    );
}

fn sweep_threads() -> Option<usize> {
    std::env::var("GFCSIM_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n| n > 0)
}

fn cmd_sweep(input: &Input, out: &Path, sweep: &str) -> Result<u8> {
    let (key, values) = sweep
        .split_once('=')
        .context("--sweep expects key=v1,v2,...")?;
    let values: Vec<&str> = values
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .collect();
    if key.trim().is_empty() || values.is_empty() {
        bail!("--sweep needs a parameter and at least one value");
    }
    // Every configuration is checked before any run starts.
    let runs = values
        .iter()
        .map(|v| input.resolve(Some(&format!("{}={v}", key.trim()))))
        .collect::<Result<Vec<_>>>()?;

    let channels: Vec<String> = DEFAULT_PANELS.iter().map(|s| s.to_string()).collect();
    let work = || -> Vec<Result<(RunResult, RunSummary)>> {
        runs.par_iter()
            .enumerate()
            .map(|(k, r)| {
                let result = simulate(&r.scenario)?;
                write_run(&out.join(format!("run{k}")), r, &result, &channels)?;
                let s = summarize(&r.scenario, &result);
                Ok((result, s))
            })
            .collect()
    };
    let results = match sweep_threads() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building thread pool")?
            .install(work),
        None => work(),
    };

    let mut csv = String::from("value,collapsed,settling_time_s,frequency_nadir_pu,min_vdc_pu,dir\n");
    let mut code = 0;
    print_summary_header();
    for (k, (v, res)) in values.iter().zip(results).enumerate() {
        let (result, s) = res?;
        if failed(&result) {
            code = 2;
        }
        csv.push_str(&format!(
            "{v},{},{},{:?},{:?},run{k}\n",
            s.collapsed,
            s.settling_time.map_or(String::new(), |t| format!("{t:?}")),
            s.frequency_nadir,
            s.min_vdc
        ));
        print_summary_row(&format!("{}={v}", key.trim()), &s);
    }
    write(&out.join("summary.csv"), &csv)?;
    Ok(code)
}

fn cmd_plot(csv: &Path, out: Option<PathBuf>, channels: Vec<String>) -> Result<u8> {
    let text = fs::read_to_string(csv).with_context(|| format!("reading {}", csv.display()))?;
    let log = parse_csv(&text).with_context(|| format!("parsing {}", csv.display()))?;
    let panels = plot_panels(&log, &channels)?;
    let dir = out.unwrap_or_else(|| csv.parent().map(Path::to_path_buf).unwrap_or_default());
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for p in panels {
        let path = dir.join(format!("{}.svg", p.name));
        write(&path, &p.svg)?;
        println!("{}", path.display());
    }
    Ok(0)
}

fn cmd_validate(input: &Input) -> Result<u8> {
    let r = input.resolve(None)?;
    gfcsim_core::engine::assemble(&r.scenario)?;
    println!(
        "{}: ok ({} converters, {} events)",
        r.scenario.name,
        r.scenario.gfcs.len(),
        r.scenario.events.len()
    );
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Run { input, out, channels } => cmd_run(&input, &out, channels),
        Command::Sweep { input, out, sweep } => cmd_sweep(&input, &out, &sweep),
        Command::Plot { csv, out, channels } => cmd_plot(&csv, out, channels),
        Command::Validate { input } => cmd_validate(&input),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
