mod output;
mod scenario;

use clap::{Parser, Subcommand, ValueEnum};
use eikf::bench::{bench_update, fitted_exponent, BenchConfig};
use eikf::filter::FilterVariant;
use eikf::selftest::{self, Fault};
use eikf::sim::{run_sweep, ScenarioConfig, ScenarioError, SensorKind, SweepAxis};
use output::{RunManifest, QUANTITIES};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "eikf", version, about = "Monte-Carlo inertial odometry experiments")]
struct Cli {
    /// Print a fully populated scenario config and exit.
    #[arg(long, value_name = "PRESET", num_args = 0..=1, default_missing_value = "vio")]
    emit_default_config: Option<Preset>,
    /// Worker threads for trial-parallel execution (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Vio,
    Lio,
}

#[derive(Clone, Copy, ValueEnum)]
enum SensorArg {
    Camera,
    Lidar,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    CameraJacobianSignFlip,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario config (or re-run a manifest.json) and write result CSVs.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Replaces the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Dotted config path and JSON value, e.g. `init.scale=2` or `filters=["EKF","EIKF-C"]`.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Time one measurement update against the number of features.
    BenchUpdate {
        #[arg(long, value_delimiter = ',', default_values_t = [1000usize, 10000, 100000])]
        n: Vec<usize>,
        #[arg(long, value_enum, default_value = "camera")]
        sensor: SensorArg,
        #[arg(long, default_value_t = 7)]
        reps: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [FilterVariant::EikfC, FilterVariant::Iekf])]
        variants: Vec<FilterVariant>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fast property checks; exits 1 if any fails.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<FaultArg>,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
    Selftest(Vec<String>),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Config(m) => Self::Config(m),
            e => Self::Runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Selftest(failed)) => {
            eprintln!("selftest failed: {}", failed.join(", "));
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    if let Some(preset) = cli.emit_default_config {
        let cfg = match preset {
            Preset::Vio => ScenarioConfig::vio(),
            Preset::Lio => ScenarioConfig::lio(),
        };
        println!("{}", serde_json::to_string_pretty(&cfg).expect("config serialises"));
        return Ok(());
    }
    match cli.command {
        Some(Command::Run { config, out, seed, overrides }) => cmd_run(&config, &out, seed, &overrides),
        Some(Command::BenchUpdate { n, sensor, reps, variants, seed, out }) => {
            let sensor = match sensor {
                SensorArg::Camera => SensorKind::Camera,
                SensorArg::Lidar => SensorKind::Lidar,
            };
            cmd_bench_update(BenchConfig { n_list: n, sensor, reps, variants, seed }, out)
        }
        Some(Command::Selftest { seed, inject_fault }) => {
            let fault = match inject_fault {
                Some(FaultArg::CameraJacobianSignFlip) => Fault::CameraJacobianSignFlip,
                None => Fault::None,
            };
            cmd_selftest(fault, seed)
        }
        None => Err(Failure::Config("no command given; see --help".into())),
    }
}

fn cmd_run(config: &std::path::Path, out: &std::path::Path, seed: Option<u64>, overrides: &[String]) -> Result<(), Failure> {
    let cfg = scenario::load(config, overrides, seed).map_err(Failure::Config)?;
    let started_at = chrono::Utc::now().to_rfc3339();
    let groups = run_sweep(&cfg)?;
    let finished_at = chrono::Utc::now().to_rfc3339();

    std::fs::create_dir_all(out).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", out.display())))?;
    let sweep = cfg.sweep.axis != SweepAxis::None;
    let mut outputs = Vec::new();
    for q in QUANTITIES {
        let path = out.join(output::rmse_file_name(q));
        output::write_rmse(&path, q, &groups, &cfg.filters, sweep).map_err(Failure::Runtime)?;
        outputs.push(path);
    }
    if sweep {
        let path = out.join("sweep.csv");
        output::write_sweep(&path, &groups, &cfg.filters).map_err(Failure::Runtime)?;
        outputs.push(path);
    }
    let summary = output::summarize(&groups, &cfg.filters, sweep);
    let manifest_path = out.join("manifest.json");
    outputs.push(manifest_path.clone());
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: scenario::config_hash(&cfg),
        seed: cfg.seed,
        started_at,
        finished_at,
        summary: summary.clone(),
        outputs,
        config: cfg,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    std::fs::write(&manifest_path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", manifest_path.display())))?;

    let fmt = |v: Option<f64>| v.map_or("diverged".to_string(), |v| format!("{v:.5}"));
    for s in summary {
        let prefix = s.sweep_value.map(|v| format!("{v:>8} ")).unwrap_or_default();
        println!(
            "{prefix}{:<7} orientation {:>10} deg  position {:>10} m  diverged {}",
            s.filter.name(),
            fmt(s.avg_rmse_orientation_deg),
            fmt(s.avg_rmse_position_m),
            s.diverged_trials
        );
    }
    Ok(())
}

fn cmd_bench_update(cfg: BenchConfig, out: Option<PathBuf>) -> Result<(), Failure> {
    let rows = bench_update(&cfg)?;
    let sink: Box<dyn std::io::Write> = match &out {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let io = |e: csv::Error| Failure::Runtime(e.to_string());
    w.write_record(["n", "variant", "median_update_ms"]).map_err(io)?;
    for r in &rows {
        w.write_record([r.n.to_string(), r.variant.name().to_string(), r.median_ms.to_string()])
            .map_err(io)?;
    }
    w.flush().map_err(|e| Failure::Runtime(e.to_string()))?;
    if cfg.n_list.len() < 2 {
        eprintln!("warning: a single batch size cannot fix an exponent");
    }
    for &v in &cfg.variants {
        eprintln!("fitted exponent {}: {:.3}", v.name(), fitted_exponent(&rows, v));
    }
    Ok(())
}

fn cmd_selftest(fault: Fault, seed: u64) -> Result<(), Failure> {
    let start = std::time::Instant::now();
    let results = selftest::run(fault, seed);
    let mut failed = Vec::new();
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        if !r.passed {
            failed.push(r.name.to_string());
        }
    }
    println!("{} checks in {:.2?}", results.len(), start.elapsed());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Selftest(failed))
    }
}
