use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hypersketch::formats::{read_points, read_sketch, write_points, write_sketch, FormatError};
use hypersketch::harness::{
    gen_ball, gen_close_pairs, gen_sphere, run_jl_trials, run_trials, true_sq_dists, HarnessError, TrialConfig,
    DEFAULT_WORK_BUDGET,
};
use hypersketch::jl_baseline::bits_per_point;
use hypersketch::planner::{measure, DEFAULT_N_CONSTANT};
use hypersketch::recovery::{estimate_pair, RecoveryError};
use hypersketch::{plan_with, sketch_set, CascadeError, CascadePlan, Mode, PlanConfig, PlanError, PointSet};

const EXIT_USAGE: u8 = 1;
const EXIT_PRECONDITION: u8 = 2;
const EXIT_INTEGRITY: u8 = 3;
const EXIT_VERIFICATION: u8 = 4;

#[derive(Parser)]
#[command(name = "hypersketch", version, about = "Sign-cascade sketches of point sets")]
struct Cli {
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct PlanArgs {
    /// Target relative error.
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Multiplier in the dimension schedule.
    #[arg(long, default_value_t = DEFAULT_N_CONSTANT)]
    n_constant: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Print the derived sketch plan for a point file.
    Plan {
        input: PathBuf,
        #[command(flatten)]
        plan: PlanArgs,
    },
    /// Sketch a point file into a binary sketch file.
    Sketch {
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        /// Target relative error (ignored with --plan).
        #[arg(long, required_unless_present = "plan")]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_N_CONSTANT)]
        n_constant: f64,
        /// Use a plan previously printed by `plan`.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Recover squared distances from a sketch file as CSV.
    Estimate {
        sketch: PathBuf,
        /// Every pair i < j.
        #[arg(long, conflicts_with = "pair")]
        all: bool,
        /// A pair `i,j`; may be repeated.
        #[arg(long, value_parser = parse_pair, required_unless_present = "all")]
        pair: Vec<(usize, usize)>,
        /// Point file with the original points, adds true_sq_dist and rel_error columns.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Monte-Carlo check of the every-pair guarantee.
    Verify {
        input: PathBuf,
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        /// Refuse runs above this many Gaussian multiply-adds.
        #[arg(long, default_value_t = DEFAULT_WORK_BUDGET)]
        work_budget: f64,
        /// Write per-trial rows here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the cascade and the quantized projection baseline side by side.
    CompareJl {
        input: PathBuf,
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = DEFAULT_WORK_BUDGET)]
        work_budget: f64,
    },
    /// Generate a synthetic point file.
    Gen {
        #[arg(long)]
        mode: Mode,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        /// Minimum pairwise distance (between directions in ball mode).
        #[arg(long, conflicts_with = "close_pair")]
        min_dist: Option<f64>,
        /// Sphere only: well-separated points plus one pair at exactly this distance.
        #[arg(long)]
        close_pair: Option<f64>,
        /// Ball only: lower bound on squared norms.
        #[arg(long, default_value_t = 0.25)]
        rho: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `i,j`, got `{s}`"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad index `{v}`"));
    Ok((parse(a)?, parse(b)?))
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        let code = if e.is_integrity() { EXIT_INTEGRITY } else { EXIT_PRECONDITION };
        Self::new(code, e.to_string())
    }
}

impl From<PlanError> for Failure {
    fn from(e: PlanError) -> Self {
        Self::new(EXIT_PRECONDITION, e.to_string())
    }
}

impl From<CascadeError> for Failure {
    fn from(e: CascadeError) -> Self {
        Self::new(EXIT_PRECONDITION, e.to_string())
    }
}

impl From<RecoveryError> for Failure {
    fn from(e: RecoveryError) -> Self {
        Self::new(EXIT_PRECONDITION, e.to_string())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Self::new(EXIT_PRECONDITION, e.to_string())
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", path.display())))
}

fn load_points(path: &Path) -> Result<PointSet, Failure> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|_| Failure::new(EXIT_PRECONDITION, format!("{}: not UTF-8 text", path.display())))?;
    read_points(&text).map_err(|e| Failure::new(EXIT_PRECONDITION, format!("{}: {e}", path.display())))
}

fn make_plan(points: &PointSet, args: &PlanArgs) -> Result<CascadePlan, Failure> {
    Ok(plan_with(points, args.epsilon, args.seed, &PlanConfig { n_constant: args.n_constant })?)
}

fn cmd_plan(input: &Path, args: &PlanArgs) -> Result<(), Failure> {
    let points = load_points(input)?;
    let plan = make_plan(&points, args)?;
    let meas = measure(&points)?;
    let jl = bits_per_point(points.len(), meas.raw_min_dist, args.epsilon) * points.len() as u64;
    print!("{}", plan.to_text());
    println!("jl_bit_budget = {jl}");
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_sketch(
    input: &Path,
    output: &Path,
    epsilon: Option<f64>,
    seed: u64,
    n_constant: f64,
    plan_path: Option<&Path>,
) -> Result<(), Failure> {
    let points = load_points(input)?;
    let plan = match plan_path {
        Some(p) => {
            let text = String::from_utf8(read_file(p)?)
                .map_err(|_| Failure::new(EXIT_PRECONDITION, format!("{}: not UTF-8 text", p.display())))?;
            CascadePlan::from_text(&text)?
        }
        None => {
            let epsilon = epsilon.ok_or_else(|| Failure::new(EXIT_USAGE, "--epsilon is required"))?;
            make_plan(&points, &PlanArgs { epsilon, seed, n_constant })?
        }
    };
    let bundle = sketch_set(&points, &plan)?;
    write_file(output, &write_sketch(&bundle))
}

fn cmd_estimate(sketch: &Path, all: bool, pairs: &[(usize, usize)], truth: Option<&Path>) -> Result<(), Failure> {
    let bundle = read_sketch(&read_file(sketch)?)?;
    let truth = match truth {
        Some(p) => {
            let pts = load_points(p)?;
            if pts.len() != bundle.len() {
                return Err(Failure::new(
                    EXIT_PRECONDITION,
                    format!("truth file has {} points, sketch has {}", pts.len(), bundle.len()),
                ));
            }
            Some(true_sq_dists(&pts))
        }
        None => None,
    };
    let n = bundle.len();
    let selected: Vec<(usize, usize)> =
        if all { (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect() } else { pairs.to_vec() };

    let mut out = String::from(if truth.is_some() { "i,j,est_sq_dist,true_sq_dist,rel_error\n" } else { "i,j,est_sq_dist\n" });
    for (i, j) in selected {
        let est = estimate_pair(&bundle, i, j)?;
        match &truth {
            Some(t) => {
                let tru = t[i][j];
                let rel = if tru > 0.0 { (est.est_sq_dist - tru).abs() / tru } else { f64::NAN };
                let _ = writeln!(out, "{i},{j},{},{tru},{rel}", est.est_sq_dist);
            }
            None => {
                let _ = writeln!(out, "{i},{j},{}", est.est_sq_dist);
            }
        }
    }
    print!("{out}");
    Ok(())
}

fn cmd_verify(
    input: &Path,
    args: &PlanArgs,
    trials: usize,
    work_budget: f64,
    csv: Option<&Path>,
) -> Result<(), Failure> {
    let points = load_points(input)?;
    let plan = make_plan(&points, args)?;
    let config = TrialConfig { plan: PlanConfig { n_constant: args.n_constant }, work_budget };
    let report = run_trials(&points, args.epsilon, trials, args.seed, &config)?;
    println!("ell: {}\nN: {}\nbit_budget: {}", plan.ell, plan.final_dim(), plan.bit_budget);
    print!("{}", report.summary());
    println!("additive_bound_holds: {}", report.additive_bound_holds());
    if let Some(path) = csv {
        write_file(path, report.to_csv().as_bytes())?;
    }
    if report.accepted() && report.additive_bound_holds() {
        Ok(())
    } else {
        Err(Failure::new(EXIT_VERIFICATION, "verification failed"))
    }
}

fn cmd_compare(input: &Path, args: &PlanArgs, trials: usize, work_budget: f64) -> Result<(), Failure> {
    let points = load_points(input)?;
    let plan = make_plan(&points, args)?;
    let config = TrialConfig { plan: PlanConfig { n_constant: args.n_constant }, work_budget };
    let cascade = run_trials(&points, args.epsilon, trials, args.seed, &config)?;
    let (jl, jl_bits) = run_jl_trials(&points, args.epsilon, trials, args.seed)?;
    let rate = |r: Option<f64>| r.map_or_else(|| "undefined".to_string(), |v| v.to_string());
    println!("method,bits_total,max_rel_error,success_rate");
    println!("hypersketch,{},{},{}", plan.bit_budget, cascade.max_rel_error(), rate(cascade.success_rate));
    println!("jl_baseline,{jl_bits},{},{}", jl.max_rel_error(), rate(jl.success_rate));
    if cascade.accepted() && jl.accepted() {
        Ok(())
    } else {
        Err(Failure::new(EXIT_VERIFICATION, "at least one method missed its target success rate"))
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen(
    mode: Mode,
    n: usize,
    d: usize,
    min_dist: Option<f64>,
    close_pair: Option<f64>,
    rho: f64,
    seed: u64,
    output: Option<&Path>,
) -> Result<(), Failure> {
    let points = match (mode, min_dist, close_pair) {
        (Mode::Sphere, Some(m), None) => gen_sphere(n, d, m, seed)?,
        (Mode::Sphere, None, Some(m)) => gen_close_pairs(n, d, m, seed)?,
        (Mode::Ball, Some(m), None) => gen_ball(n, d, rho, m, seed)?,
        (Mode::Ball, _, Some(_)) => return Err(Failure::new(EXIT_USAGE, "--close-pair applies to sphere mode only")),
        _ => return Err(Failure::new(EXIT_USAGE, "one of --min-dist or --close-pair is required")),
    };
    let text = write_points(&points);
    match output {
        Some(p) => write_file(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
    }
    match cli.command {
        Command::Plan { input, plan } => cmd_plan(&input, &plan),
        Command::Sketch { input, output, epsilon, seed, n_constant, plan } => {
            cmd_sketch(&input, &output, epsilon, seed, n_constant, plan.as_deref())
        }
        Command::Estimate { sketch, all, pair, truth } => cmd_estimate(&sketch, all, &pair, truth.as_deref()),
        Command::Verify { input, plan, trials, work_budget, csv } => {
            cmd_verify(&input, &plan, trials, work_budget, csv.as_deref())
        }
        Command::CompareJl { input, plan, trials, work_budget } => cmd_compare(&input, &plan, trials, work_budget),
        Command::Gen { mode, n, d, min_dist, close_pair, rho, seed, output } => {
            cmd_gen(mode, n, d, min_dist, close_pair, rho, seed, output.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
