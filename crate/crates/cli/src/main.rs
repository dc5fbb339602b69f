use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use rayon::prelude::*;

use rplsim::battery::{parse_battery_list, BatteryType};
use rplsim::metrics::{compare_report, final_honest_mean, read_csv, write_csv, Metric, RunMetrics};
use rplsim::scenario::{load_scenario_file, preset, PRESETS};
use rplsim::{run, RunOptions, ScenarioConfig, SimDuration};

#[derive(Parser)]
#[command(name = "rplsim", version, about = "Battery-draining attack simulator for RPL networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its per-node CSV.
    Simulate {
        /// Scenario file, or the name of a shipped preset.
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Override the scenario duration, in seconds.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare an attacked run against a baseline run of the same scenario.
    Compare {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        attack: PathBuf,
        /// Also write the report as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario per battery type, with and without its attack.
    Sweep {
        #[arg(long)]
        scenario: String,
        /// Comma-separated battery names or capacities such as `750mAh`.
        #[arg(long)]
        batteries: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        duration: Option<f64>,
        /// Also write the grid as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List shipped scenarios.
    Presets {
        /// Write each preset's scenario file into this directory.
        #[arg(long)]
        export: Option<PathBuf>,
    },
}

enum Failure {
    Invalid(anyhow::Error),
    Runtime(anyhow::Error),
}

type Outcome = Result<(), Failure>;

fn invalid<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Invalid(e.into())
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
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
    let result = match cli.command {
        Command::Simulate { scenario, seed, duration, out } => simulate(&scenario, seed, duration, &out),
        Command::Compare { baseline, attack, out } => compare(&baseline, &attack, out.as_deref()),
        Command::Sweep { scenario, batteries, seed, duration, out } => {
            sweep(&scenario, &batteries, seed, duration, out.as_deref())
        }
        Command::Presets { export } => presets(export.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load(scenario: &str) -> Result<ScenarioConfig, Failure> {
    let path = Path::new(scenario);
    if !path.exists() {
        if let Some(cfg) = preset(scenario) {
            return Ok(cfg);
        }
    }
    load_scenario_file(path).map_err(invalid)
}

fn options(seed: u64, duration: Option<f64>) -> Result<RunOptions, Failure> {
    let duration = match duration {
        Some(d) if d.is_finite() && d > 0.0 => Some(SimDuration::from_secs_f64(d)),
        Some(d) => return Err(invalid(anyhow!("--duration must be positive, got {d}"))),
        None => None,
    };
    Ok(RunOptions {
        seed: Some(seed),
        duration,
        log_events: false,
    })
}

fn simulate(scenario: &str, seed: u64, duration: Option<f64>, out: &Path) -> Outcome {
    let cfg = load(scenario)?;
    let opts = options(seed, duration)?;
    eprintln!("simulating {} ({}) seed {seed}", cfg.name, cfg.attack.kind);
    let output = run(cfg, &opts).map_err(runtime)?;
    let file = fs::File::create(out)
        .with_context(|| format!("cannot create {}", out.display()))
        .map_err(runtime)?;
    write_csv(&output.metrics, std::io::BufWriter::new(file)).map_err(runtime)?;
    print!("{}", summary(&output.metrics).map_err(runtime)?);
    eprintln!("wrote {} ({} events)", out.display(), output.dispatched);
    Ok(())
}

fn summary(m: &RunMetrics) -> anyhow::Result<String> {
    let mut o = String::new();
    for n in m.honest() {
        let Some(s) = n.last() else { continue };
        let soc = s.soc_pct.map(|v| format!("{v:.2}%")).unwrap_or_else(|| "inf".into());
        o += &format!(
            "node {:>3}  cpu {:>10.4} s  lpm {:>10.2} s  tx {:>9.4} s  rx {:>9.4} s  power {:.6} mW  soc {}  sent {} dropped {}\n",
            n.id,
            s.timers.t_cpu.as_secs_f64(),
            s.timers.t_lpm.as_secs_f64(),
            s.timers.t_tx.as_secs_f64(),
            s.timers.t_rx.as_secs_f64(),
            s.avg_power_mw(),
            soc,
            s.counters.sent,
            s.counters.dropped,
        );
    }
    let mean = |metric| final_honest_mean(m, metric).map(|v| v.unwrap_or(f64::NAN));
    o += &format!(
        "honest-mean  cpu {:.4} s  lpm {:.2} s  tx {:.4} s  rx {:.4} s  power {:.6} mW  delivered {}/{}\n",
        mean(Metric::Cpu)?,
        mean(Metric::Lpm)?,
        mean(Metric::Tx)?,
        mean(Metric::Rx)?,
        mean(Metric::Power)?,
        m.packets.delivered,
        m.packets.sent,
    );
    Ok(o)
}

fn read_run(path: &Path) -> Result<RunMetrics, Failure> {
    let file = fs::File::open(path)
        .with_context(|| format!("cannot open {}", path.display()))
        .map_err(invalid)?;
    read_csv(file)
        .with_context(|| format!("{}", path.display()))
        .map_err(invalid)
}

fn compare(baseline: &Path, attack: &Path, out: Option<&Path>) -> Outcome {
    let base = read_run(baseline)?;
    let att = read_run(attack)?;
    let report = compare_report(&base, &att).map_err(invalid)?;
    print!("{}", report.to_text());
    if let Some(out) = out {
        fs::write(out, report.to_csv())
            .with_context(|| format!("cannot write {}", out.display()))
            .map_err(runtime)?;
    }
    Ok(())
}

struct Cell {
    consumed_pct: f64,
    empty: usize,
}

impl Cell {
    fn text(&self) -> String {
        if self.empty > 0 {
            format!("Empty ({})", self.empty)
        } else {
            format!("{:.2}%", self.consumed_pct)
        }
    }
}

fn thread_pool() -> anyhow::Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("RPLSIM_THREADS") {
        let n: usize = v.parse().with_context(|| format!("RPLSIM_THREADS={v}"))?;
        b = b.num_threads(n);
    }
    Ok(b.build()?)
}

fn sweep(scenario: &str, batteries: &str, seed: u64, duration: Option<f64>, out: Option<&Path>) -> Outcome {
    let cfg = load(scenario)?;
    let types: Vec<BatteryType> = parse_battery_list(batteries).map_err(invalid)?;
    let opts = options(seed, duration)?;
    let attack = cfg.attack.kind.label();
    let jobs: Vec<(usize, bool)> = (0..types.len()).flat_map(|i| [(i, false), (i, true)]).collect();
    let pool = thread_pool().map_err(invalid)?;
    let cells = pool
        .install(|| {
            jobs.par_iter()
                .map(|&(i, attacked)| {
                    let c = cfg.clone().with_battery(types[i].clone());
                    let c = if attacked { c } else { c.without_attack() };
                    eprintln!("running {} {}", types[i], if attacked { attack } else { "none" });
                    let m = run(c, &opts)?.metrics;
                    let pct: Vec<f64> = m.batteries.values().map(|b| b.consumed_pct).collect();
                    Ok(Cell {
                        consumed_pct: pct.iter().sum::<f64>() / pct.len().max(1) as f64,
                        empty: m.empty_honest_nodes(),
                    })
                })
                .collect::<Result<Vec<_>, rplsim::sim::SimError>>()
        })
        .map_err(runtime)?;

    let names: Vec<String> = types.iter().map(|t| t.to_string()).collect();
    let width = names.iter().map(|n| n.len()).max().unwrap_or(0).max(12);
    let mut text = format!("{:<10}", "condition");
    let mut csv = String::from("condition");
    for n in &names {
        text += &format!(" {n:>width$}");
        csv += &format!(",{n}");
    }
    text.push('\n');
    csv.push('\n');
    for (row, attacked) in [("none", false), (attack, true)] {
        text += &format!("{row:<10}");
        csv += row;
        for i in 0..types.len() {
            let cell = &cells[2 * i + attacked as usize];
            text += &format!(" {:>width$}", cell.text());
            csv += &format!(",{}", cell.text());
        }
        text.push('\n');
        csv.push('\n');
    }
    print!("{text}");
    if let Some(out) = out {
        fs::write(out, csv)
            .with_context(|| format!("cannot write {}", out.display()))
            .map_err(runtime)?;
    }
    Ok(())
}

fn presets(export: Option<&Path>) -> Outcome {
    for p in PRESETS {
        let cfg = preset(p.name).ok_or_else(|| runtime(anyhow!("preset {} missing", p.name)))?;
        println!("{:<22} {}", p.name, cfg.description);
        if let Some(dir) = export {
            fs::create_dir_all(dir)
                .with_context(|| format!("cannot create {}", dir.display()))
                .map_err(runtime)?;
            let path = dir.join(format!("{}.scn", p.name));
            fs::write(&path, p.text)
                .with_context(|| format!("cannot write {}", path.display()))
                .map_err(runtime)?;
        }
    }
    Ok(())
}
