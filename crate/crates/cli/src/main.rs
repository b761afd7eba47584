use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use rcesdf::benchmark::{run_benchmark, summarize, BenchmarkOptions, MethodSummary};
use rcesdf::distance_field::SignConvention;
use rcesdf::env_esdf::build_env_esdf;
use rcesdf::pipeline::{
    effective_margin, parse_trajectory_csv, plan_with, trajectory_csv, validate_samples, Method, PlanOptions,
};
use rcesdf::rc_esdf::build_rc_esdf;
use rcesdf::scene::{load_scenario, Scenario};
use rcesdf::Error;

mod svg;

/// Sampling interval of the written trajectory, seconds.
const CSV_INTERVAL: f64 = 0.05;

#[derive(Parser)]
#[command(name = "rcplan", version, about = "Whole-body SE(2) trajectory optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan one trajectory and write trajectory.csv, control_points.json,
    /// result.json and plot.svg. Exits 1 if planning fails or the result
    /// does not pass validation.
    Plan {
        scenario: PathBuf,
        #[arg(short, long, default_value = "out")]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Rc)]
        method: MethodArg,
        /// Validator sampling density in meters.
        #[arg(long)]
        density: Option<f64>,
        /// Include the cost breakdown after every iteration in result.json.
        #[arg(long)]
        trace: bool,
        #[arg(long)]
        no_plot: bool,
    },
    /// Run each method from the same seeded random start/goal pairs and
    /// write benchmark.json.
    Benchmark {
        scenario: PathBuf,
        #[arg(short, long, default_value = "out")]
        output: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "rc,wbfp")]
        methods: Vec<MethodArg>,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Leave timing fields out so repeated runs are byte-identical.
        #[arg(long)]
        omit_timings: bool,
    },
    /// Dump a distance field and render it as field.svg.
    Field {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = Which::Rc)]
        which: Which,
        #[arg(short, long, default_value = "out")]
        output: PathBuf,
    },
    /// Check a trajectory CSV against a scenario and print the report.
    /// Exits 0 iff collision free and within limits.
    Validate {
        trajectory: PathBuf,
        scenario: PathBuf,
        #[arg(long)]
        density: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Rc,
    Wbfp,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Rc => Method::Rc,
            MethodArg::Wbfp => Method::Wbfp,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    /// Robot-centric field in the body frame.
    Rc,
    /// Signed field over the world map.
    Env,
}

/// Failure classes mapped to exit codes.
enum Failure {
    /// Planning or validation failed.
    Task(Error),
    /// Inputs or outputs could not be read or written.
    Io(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. } | Error::Parse { .. } => Failure::Io(e),
            other => Failure::Task(other),
        }
    }
}

type Outcome = std::result::Result<bool, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Plan {
            scenario,
            output,
            method,
            density,
            trace,
            no_plot,
        } => cmd_plan(&scenario, &output, method.into(), density, trace, !no_plot),
        Command::Benchmark {
            scenario,
            output,
            methods,
            reps,
            seed,
            omit_timings,
        } => {
            let opts = BenchmarkOptions {
                methods: methods.into_iter().map(Method::from).collect(),
                reps,
                seed,
                omit_timings,
            };
            cmd_benchmark(&scenario, &output, &opts)
        }
        Command::Field { scenario, which, output } => cmd_field(&scenario, which, &output),
        Command::Validate {
            trajectory,
            scenario,
            density,
        } => cmd_validate(&trajectory, &scenario, density),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Task(e)) => {
            println!("{}", error_json(&e));
            ExitCode::from(1)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn error_json(e: &Error) -> String {
    let kind = match e {
        Error::Io { .. } => "io",
        Error::Parse { .. } => "parse",
        Error::InvalidScenario(_) => "invalid_scenario",
        Error::InvalidArgument(_) => "invalid_argument",
        Error::Degenerate(_) => "degenerate",
        Error::OutOfBounds { .. } | Error::SampleOutOfBounds { .. } => "out_of_bounds",
        Error::IndexOutOfRange { .. } => "index_out_of_range",
        Error::NoPath(_) => "no_path",
        Error::NonFinite { .. } => "non_finite",
    };
    serde_json::to_string_pretty(&json!({ "error": kind, "message": e.to_string() })).expect("json")
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::Io(Error::io(path, e)))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Io(Error::io(dir, e)))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn cmd_plan(path: &Path, out: &Path, method: Method, density: Option<f64>, trace: bool, plot: bool) -> Outcome {
    let mut scenario = load_scenario(path)?;
    if density.is_some() {
        scenario.config.validator_density = density;
        scenario.config.validate()?;
    }
    create_dir(out)?;
    let result = match plan_with(&scenario, &PlanOptions { method, trace }) {
        Ok(r) => r,
        Err(e) => {
            write(&out.join("error.json"), error_json(&e))?;
            return Err(Failure::Task(e));
        }
    };
    write(&out.join("trajectory.csv"), trajectory_csv(&result.trajectory, CSV_INTERVAL)?)?;
    write(&out.join("control_points.json"), to_json(&result.trajectory))?;
    write(&out.join("result.json"), to_json(&result))?;
    if plot {
        write(&out.join("plot.svg"), svg::plan(&scenario, &result))?;
    }
    let v = &result.validation;
    println!(
        "{method}: {} iterations, cost {:.4}, {:?}, optimize {:.3} s",
        result.report.iterations, result.report.final_cost, result.report.termination, result.timings.optimize
    );
    println!(
        "collision_free={} min_clearance={} limits_ok={}",
        v.collision_free,
        v.min_clearance.map_or("n/a".into(), |c| format!("{c:.4}")),
        v.limits_ok()
    );
    for l in &v.violated_limits {
        println!("  {} peak {:.4} exceeds {:.4}", l.quantity, l.max_observed, l.limit);
    }
    Ok(v.is_ok())
}

fn cmd_benchmark(path: &Path, out: &Path, opts: &BenchmarkOptions) -> Outcome {
    let scenario = load_scenario(path)?;
    let records = run_benchmark(&scenario, opts)?;
    create_dir(out)?;
    write(&out.join("benchmark.json"), to_json(&records))?;
    print_summary(&summarize(&records));
    Ok(true)
}

fn print_summary(rows: &[MethodSummary]) {
    let ms = |v: Option<f64>| v.map_or("-".to_string(), |s| format!("{:.3}", s * 1e3));
    println!(
        "{:<6} {:>5} {:>5} {:>12} {:>12} {:>14} {:>10} {:>10} {:>10}",
        "method", "runs", "free", "build [ms]", "opt [ms]", "per-iter [ms]", "iters", "length", "jerk"
    );
    for r in rows {
        println!(
            "{:<6} {:>5} {:>5} {:>12} {:>12} {:>14} {:>10.1} {:>10.3} {:>10.3}",
            r.method.to_string(),
            r.runs,
            r.collision_free,
            ms(r.mean_field_build_time),
            ms(r.mean_opt_time),
            ms(r.mean_per_iteration_time),
            r.mean_iterations,
            r.mean_length,
            r.mean_jerk
        );
    }
}

fn cmd_field(path: &Path, which: Which, out: &Path) -> Outcome {
    let scenario = load_scenario(path)?;
    let (field, convention) = field_for(&scenario, which)?;
    create_dir(out)?;
    write(&out.join("field.txt"), field.to_dump(convention))?;
    write(&out.join("field.svg"), svg::field(&field))?;
    println!(
        "{}x{} vertices at {} m, min {:.4}",
        field.nx + 1,
        field.ny + 1,
        field.resolution,
        field.min_value()
    );
    Ok(true)
}

fn field_for(scenario: &Scenario, which: Which) -> Result<(rcesdf::distance_field::ScalarField2D, SignConvention), Error> {
    Ok(match which {
        Which::Rc => {
            let rc = build_rc_esdf(&scenario.robot, scenario.config.rc_resolution, effective_margin(scenario))?;
            (rc.field, SignConvention::InsideNegativeOutsideZero)
        }
        Which::Env => (build_env_esdf(&scenario.grid)?.field, SignConvention::InsideNegativeOutsidePositive),
    })
}

fn cmd_validate(traj: &Path, path: &Path, density: Option<f64>) -> Outcome {
    let scenario = load_scenario(path)?;
    let text = fs::read_to_string(traj).map_err(|e| Failure::Io(Error::io(traj, e)))?;
    let samples = parse_trajectory_csv(&text)?;
    let report = validate_samples(&samples, &scenario, density.unwrap_or(scenario.config.density()))?;
    print!("{}", to_json(&report));
    Ok(report.is_ok())
}
