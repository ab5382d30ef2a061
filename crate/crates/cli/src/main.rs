use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use singlab_cli::config::{Lab, LabConfig, DEFAULT_CONFIG};
use singlab_cli::pipeline::{run_stage, Stage, StageName};
use singlab_cli::plots::{emit_plots, write_orbit, write_trajectory};
use singlab_cli::report::{to_json, MasterReport};
use singlab_core::solenoid::{FiberPoint, SolenoidPoint};
use singlab_core::torus::TorusPoint;

#[derive(Parser)]
#[command(name = "singlab", version, about = "Numerical laboratory for a singular attractor that is not sectional-hyperbolic")]
struct Cli {
    /// Configuration file; the built-in default when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for reports and CSV files.
    #[arg(long, global = true, env = "SINGLAB_OUT", default_value = "out")]
    out: PathBuf,
    /// Overrides the master seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; all cores when omitted.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run certificates and write their reports.
    Verify {
        #[arg(value_enum)]
        what: Target,
    },
    /// Write a section orbit, and optionally a flow trajectory, as CSV.
    Orbit {
        #[arg(long, allow_hyphen_values = true)]
        x1: f64,
        #[arg(long, allow_hyphen_values = true)]
        x2: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        y1: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        y2: f64,
        /// Number of section iterates; the configured default when omitted.
        #[arg(long)]
        steps: Option<usize>,
        /// Also integrate the flow for this long.
        #[arg(long)]
        flow_time: Option<f64>,
        #[arg(long, default_value_t = 0.01)]
        every: f64,
    },
    /// Write the plot CSV files, reusing artifacts of earlier runs.
    EmitPlots,
    /// Print the built-in default configuration.
    DefaultConfig,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Target {
    Lp,
    H6,
    Solenoid,
    Blowup,
    Flow,
    Indices,
    Irg,
    Robust,
    All,
}

impl Target {
    fn stages(self) -> Vec<StageName> {
        match self {
            Target::Lp => vec![StageName::Lp],
            Target::H6 => vec![StageName::H6],
            Target::Solenoid => vec![StageName::Solenoid],
            Target::Blowup => vec![StageName::Blowup],
            Target::Flow => vec![StageName::Flow],
            Target::Indices => vec![StageName::Indices],
            Target::Irg => vec![StageName::Irg],
            Target::Robust => vec![StageName::Robust],
            Target::All => StageName::ALL.to_vec(),
        }
    }
}

const INVALID_CONFIG: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::DefaultConfig = cli.command {
        print!("{DEFAULT_CONFIG}");
        return ExitCode::SUCCESS;
    }
    let cfg = match &cli.config {
        Some(p) => LabConfig::load(p),
        None => LabConfig::parse(DEFAULT_CONFIG),
    };
    let cfg = match cfg {
        Ok(c) => match cli.seed {
            Some(s) => c.with_master_seed(s),
            None => c,
        },
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(INVALID_CONFIG);
        }
    };
    let lab = match Lab::build(&cfg) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(INVALID_CONFIG);
        }
    };
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    if let Err(e) = std::fs::create_dir_all(&cli.out) {
        eprintln!("error: cannot create {}: {e}", cli.out.display());
        return ExitCode::FAILURE;
    }
    match run(&cli, &lab) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn write(path: &Path, text: &str) -> Result<(), String> {
    std::fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn run(cli: &Cli, lab: &Lab) -> Result<bool, String> {
    let out = &cli.out;
    match &cli.command {
        Command::Verify { what } => {
            let mut stages: Vec<Stage> = Vec::new();
            let mut timings = BTreeMap::new();
            for name in what.stages() {
                let t = Instant::now();
                let stage = run_stage(lab, name).map_err(|e| format!("verify {}: {e}", name.id()))?;
                timings.insert(name.id(), t.elapsed().as_secs_f64());
                for r in &stage.reports {
                    let status = if r.pass { "PASS" } else { "FAIL" };
                    println!("{status} {:<26} margin {:>12.6e}{}", r.property, r.margin, r.reason.as_ref().map(|s| format!("  ({s})")).unwrap_or_default());
                }
                write(&out.join(format!("{}.json", name.id())), &to_json(&stage))?;
                stages.push(stage);
            }
            write(&out.join("timings.json"), &to_json(&timings))?;
            if let Target::All = what {
                let master = MasterReport::assemble(&lab.cfg, &stages);
                write(&out.join("master_report.json"), &to_json(&master))?;
                let v = &master.verdict;
                println!(
                    "verdict: singular-hyperbolic {:?}, sectional-hyperbolic {:?}, robust transitivity evidence {:?}",
                    v.singular_hyperbolic, v.sectional_hyperbolic, v.robust_transitivity_evidence
                );
            }
            Ok(stages.iter().all(Stage::pass))
        }
        Command::Orbit { x1, x2, y1, y2, steps, flow_time, every } => {
            let z = SolenoidPoint::new(TorusPoint::new(*x1, *x2), FiberPoint::new(*y1, *y2));
            let steps = steps.unwrap_or(lab.certification().plots.orbit_steps);
            let f = write_orbit(lab, z, steps, out).map_err(|e| e.to_string())?;
            println!("wrote {}", f.display());
            if let Some(t) = flow_time {
                let f = write_trajectory(lab, z, *t, *every, out).map_err(|e| e.to_string())?;
                println!("wrote {}", f.display());
            }
            Ok(true)
        }
        Command::EmitPlots => {
            for f in emit_plots(lab, out).map_err(|e| e.to_string())? {
                println!("wrote {}", f.display());
            }
            Ok(true)
        }
        Command::DefaultConfig => unreachable!("handled before the configuration is loaded"),
    }
}
