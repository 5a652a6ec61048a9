use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use ris_swipt::channel::{ris_output_power, ris_reflected_noise_power, ChannelStats};
use ris_swipt::config::{load_scenario_file, REFERENCE_CONFIG};
use ris_swipt::montecarlo::{
    mc_ergodic_rate, mc_ris_noise_power, mc_ris_output_power, mc_second_moment, rate_approximation,
    McEstimate, MIN_SAMPLES,
};
use ris_swipt::optimizer::{initialize, initialize_seeded, run_from, RunResult};
use ris_swipt::trace::to_jsonl;
use ris_swipt::{Error, RisMode, Scenario};

/// Trajectory, hover-time and RIS reflection planner for UAV SWIPT.
#[derive(Parser)]
#[command(name = "planner", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the alternating optimizer on one scenario.
    Optimize {
        scenario: PathBuf,
        #[arg(long)]
        mode: Option<RisMode>,
        #[arg(long)]
        elements: Option<usize>,
        /// Start from a jittered initial point drawn with this seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Optimize for several RIS sizes in both modes and write fig2_data.csv.
    SweepElements {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [16usize, 32, 64])]
        elements: Vec<usize>,
        /// Restrict the sweep to one mode.
        #[arg(long)]
        mode: Option<RisMode>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare closed-form channel statistics with Monte Carlo estimates.
    Validate {
        scenario: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Print the reference scenario file.
    ExampleConfig,
}

enum Failure {
    Scenario(String),
    Samples(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Scenario(_) => 2,
            Failure::Samples(_) => 3,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Other(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    if !path.is_file() {
        return Err(Failure::Scenario(format!("scenario not found: {}", path.display())));
    }
    load_scenario_file(path).map_err(|e| Failure::Scenario(format!("invalid scenario {}: {e}", path.display())))
}

fn run(sc: &Scenario, seed: Option<u64>) -> Result<RunResult, Failure> {
    let (phi, plan) = match seed {
        Some(s) => initialize_seeded(sc, s)?,
        None => initialize(sc)?,
    };
    Ok(run_from(sc, phi, plan)?)
}

fn write_outputs(sc: &Scenario, r: &RunResult, dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)?;
    let mut traj = String::from("l,x_m,y_m,t_s\n");
    for (l, (q, t)) in r.plan.hover_points().iter().zip(&r.plan.hover_times).enumerate() {
        writeln!(traj, "{},{},{},{}", l + 1, q.re, q.im, t).unwrap();
    }
    fs::write(dir.join("trajectory.csv"), traj)?;

    let mut phi = String::from("l,m,amplitude,phase_rad\n");
    for (l, v) in r.phi.phi.iter().enumerate() {
        for (m, c) in v.iter().enumerate() {
            writeln!(phi, "{},{},{},{}", l + 1, m + 1, c.norm(), c.arg()).unwrap();
        }
    }
    fs::write(dir.join("phi.csv"), phi)?;
    fs::write(dir.join("trace.jsonl"), to_jsonl(&r.trace))?;

    let e = &r.energy;
    let mut s = String::new();
    writeln!(s, "mode: {}", sc.ris_mode).unwrap();
    writeln!(s, "elements: {}", sc.num_elements).unwrap();
    writeln!(s, "total_energy_J: {}", e.total).unwrap();
    writeln!(s, "uav_energy_J: {}", e.flight_energy + e.hover_energy + e.radiated_energy).unwrap();
    writeln!(s, "flight_energy_J: {}", e.flight_energy).unwrap();
    writeln!(s, "hover_energy_J: {}", e.hover_energy).unwrap();
    writeln!(s, "radiated_energy_J: {}", e.radiated_energy).unwrap();
    writeln!(s, "ris_energy_J: {}", e.ris_energy).unwrap();
    writeln!(s, "min_harvest_ratio: {}", r.min_harvest(sc)).unwrap();
    writeln!(s, "mean_ris_distance_m: {}", r.mean_ris_distance(sc)).unwrap();
    writeln!(s, "outer_iterations: {}", r.outer_iterations).unwrap();
    writeln!(s, "termination: {}", r.termination).unwrap();
    fs::write(dir.join("summary.txt"), s)?;
    Ok(())
}

fn cmd_optimize(
    path: &Path,
    mode: Option<RisMode>,
    elements: Option<usize>,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), Failure> {
    let mut sc = load(path)?;
    if let Some(m) = mode {
        sc = sc.with_mode(m);
    }
    if let Some(m) = elements {
        sc = sc.with_elements(m);
    }
    sc.validate()?;
    let r = run(&sc, seed)?;
    write_outputs(&sc, &r, out)?;
    println!("total energy {:.3} J ({}), results in {}", r.energy.total, r.termination, out.display());
    Ok(())
}

fn thread_pool() -> Result<rayon::ThreadPool, Failure> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("PLANNER_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Failure::Other(format!("PLANNER_THREADS must be a positive integer, got {v:?}")))?;
        b = b.num_threads(n.max(1));
    }
    b.build().map_err(|e| Failure::Other(e.to_string()))
}

fn cmd_sweep(path: &Path, elements: &[usize], mode: Option<RisMode>, out: &Path) -> Result<(), Failure> {
    let base = load(path)?;
    let modes = match mode {
        Some(m) => vec![m],
        None => vec![RisMode::Active, RisMode::Passive],
    };
    let cells: Vec<(usize, RisMode)> = elements.iter().flat_map(|&m| modes.iter().map(move |&o| (m, o))).collect();
    fs::create_dir_all(out)?;
    let results: Vec<Result<f64, String>> = thread_pool()?.install(|| {
        cells
            .par_iter()
            .map(|&(m, mode)| {
                let sc = base.clone().with_elements(m).with_mode(mode);
                let cell = out.join(format!("M{m}_{mode}"));
                let r = run(&sc, None).map_err(|f| match f {
                    Failure::Other(s) | Failure::Scenario(s) | Failure::Samples(s) => s,
                })?;
                write_outputs(&sc, &r, &cell).map_err(|_| format!("cannot write {}", cell.display()))?;
                Ok(r.energy.total)
            })
            .collect()
    });
    let mut csv = String::from("M,mode,total_energy_J\n");
    for ((m, mode), r) in cells.iter().zip(&results) {
        match r {
            Ok(e) => writeln!(csv, "{m},{mode},{e}").unwrap(),
            Err(msg) => {
                eprintln!("M={m} {mode}: {msg}");
                writeln!(csv, "{m},{mode},NaN").unwrap()
            }
        }
    }
    fs::write(out.join("fig2_data.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

struct Row {
    name: String,
    closed: f64,
    est: McEstimate,
    hard: bool,
}

fn cmd_validate(path: &Path, samples: usize, seed: u64) -> Result<bool, Failure> {
    let sc = load(path)?;
    if samples < MIN_SAMPLES {
        return Err(Failure::Samples(format!(
            "insufficient samples: {samples} < {MIN_SAMPLES}"
        )));
    }
    let (phi, plan) = initialize(&sc)?;
    let stats = ChannelStats::at_points(&sc, plan.hover_points());
    let mut rows = Vec::new();
    for l in 0..plan.num_hover() {
        let q = plan.hover(l);
        let p = &phi.phi[l];
        for k in 0..sc.num_users() {
            let link = stats.link(k, l);
            rows.push(Row {
                name: format!("E|g|^2 k={} l={}", k + 1, l + 1),
                closed: link.second_moment(p),
                est: mc_second_moment(&sc, q, k, l, p, samples, seed),
                hard: true,
            });
            if sc.ris_mode == RisMode::Active {
                rows.push(Row {
                    name: format!("RIS noise k={} l={}", k + 1, l + 1),
                    closed: ris_reflected_noise_power(&sc, link.beta_r, p),
                    est: mc_ris_noise_power(&sc, q, k, l, p, samples, seed),
                    hard: true,
                });
            }
            rows.push(Row {
                name: format!("rate k={} l={}", k + 1, l + 1),
                closed: rate_approximation(&sc, q, k, p),
                est: mc_ergodic_rate(&sc, q, k, l, p, samples, seed),
                hard: false,
            });
        }
        rows.push(Row {
            name: format!("RIS output l={}", l + 1),
            closed: ris_output_power(&sc, stats.beta_t(l), p),
            est: mc_ris_output_power(&sc, q, l, p, samples, seed),
            hard: true,
        });
    }
    println!("{:<22} {:>14} {:>14} {:>12} {:>8}", "quantity", "closed_form", "mc_mean", "mc_se", "z");
    let mut ok = true;
    for r in &rows {
        let z = r.est.z_score(r.closed);
        let flag = if !r.hard {
            " (logged)"
        } else if z.abs() > 3.0 {
            ok = false;
            " FAIL"
        } else {
            ""
        };
        println!(
            "{:<22} {:>14.6e} {:>14.6e} {:>12.3e} {:>8.2}{flag}",
            r.name, r.closed, r.est.mean, r.est.se, z
        );
    }
    println!("{}", if ok { "all 3-SE checks passed" } else { "some 3-SE checks failed" });
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Optimize { scenario, mode, elements, seed, out } => {
            cmd_optimize(scenario, *mode, *elements, *seed, out).map(|_| true)
        }
        Command::SweepElements { scenario, elements, mode, out } => cmd_sweep(scenario, elements, *mode, out).map(|_| true),
        Command::Validate { scenario, samples, seed } => cmd_validate(scenario, *samples, *seed),
        Command::ExampleConfig => {
            print!("{REFERENCE_CONFIG}");
            Ok(true)
        }
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            let msg = match &f {
                Failure::Scenario(m) | Failure::Samples(m) | Failure::Other(m) => m,
            };
            eprintln!("planner: {msg}");
            ExitCode::from(f.code())
        }
    }
}
