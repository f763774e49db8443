use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use riecur::experiment::{run_grid_to_csv, GridSpec, SyntheticProblem};
use riecur::io::{matrix_to_frames, read_matrix, separate_background, video_to_matrix, write_matrix};
use riecur::selftest::run_selftest;
use riecur::solver::{LowRankEstimate, SolveResult};
use riecur::{DenseMatrix, RpcaError, SolverConfig, SolverKind};

const EXIT_INVALID: u8 = 2;
const EXIT_FORMAT: u8 = 3;
const EXIT_SOLVER: u8 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "riecur",
    version,
    about = "Robust PCA via Riemannian CUR and baseline solvers"
)]
struct Cli {
    #[command(flatten)]
    solver: SolverArgs,

    #[command(subcommand)]
    command: Command,
}

/// Solver settings shared by `solve` and `video`.
#[derive(Args, Debug, Clone)]
struct SolverArgs {
    /// Target rank r.
    #[arg(long, global = true, default_value_t = 5)]
    rank: usize,
    /// Stop when the relative residual reaches this value.
    #[arg(long, global = true, default_value_t = 1e-6)]
    tol: f64,
    /// Threshold decay rate in (0, 1).
    #[arg(long, global = true, default_value_t = 0.65)]
    gamma: f64,
    /// Initial threshold (default: largest residual after initialization).
    #[arg(long, global = true)]
    zeta0: Option<f64>,
    /// Number of sampled rows (default: max(ceil(3 ln m), r + 2)).
    #[arg(long, global = true)]
    samples_rows: Option<usize>,
    /// Number of sampled columns (default: max(ceil(3 ln n), r + 2)).
    #[arg(long, global = true)]
    samples_cols: Option<usize>,
    #[arg(long, global = true, default_value_t = 100)]
    max_iters: usize,
    /// Draw fresh row and column indices every iteration.
    #[arg(long, global = true)]
    resample: bool,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// riecur, ircur or accaltproj.
    #[arg(long, global = true, default_value = "riecur")]
    solver: SolverKind,
    /// First initialization threshold (default: half the largest sampled |D|).
    #[arg(long, global = true)]
    beta1: Option<f64>,
    /// Second initialization threshold (default: gamma * beta1).
    #[arg(long, global = true)]
    beta2: Option<f64>,
    /// Exit with status 4 when the solver does not converge.
    #[arg(long, global = true)]
    strict: bool,
    /// Regularize ill-conditioned intersection matrices instead of failing.
    #[arg(long, global = true)]
    tikhonov: bool,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            tol: self.tol,
            gamma: self.gamma,
            zeta0: self.zeta0,
            rows_sampled: self.samples_rows,
            cols_sampled: self.samples_cols,
            max_iters: self.max_iters,
            resample: self.resample,
            seed: self.seed,
            beta1: self.beta1,
            beta2: self.beta2,
            ridge_fallback: self.tikhonov,
            ..SolverConfig::new(self.rank)
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decompose a matrix file (binary or .csv) and write the factors.
    Solve {
        input: PathBuf,
        /// Directory for the factor files and summary.txt.
        #[arg(long, short)]
        out: PathBuf,
        /// Also write the dense low-rank estimate to this path.
        #[arg(long)]
        dense_l: Option<PathBuf>,
    },
    /// Generate a synthetic problem D = L + S as d, l and s matrix files.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        alpha: f64,
        /// Outlier magnitude bound (default: the rank).
        #[arg(long)]
        amplitude: Option<f64>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Run a benchmark grid spec, appending results to a CSV file.
    Bench {
        spec: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Split a directory of PGM frames into background and foreground.
    Video {
        frames: PathBuf,
        #[arg(long)]
        background: PathBuf,
        #[arg(long)]
        foreground: PathBuf,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

enum Failure {
    Lib(RpcaError),
    NotConverged(String),
}

impl From<RpcaError> for Failure {
    fn from(e: RpcaError) -> Self {
        Failure::Lib(e)
    }
}

fn exit_code(e: &RpcaError) -> u8 {
    match e {
        RpcaError::InvalidArgument(_) => EXIT_INVALID,
        RpcaError::Format { .. } | RpcaError::Io { .. } => EXIT_FORMAT,
        RpcaError::SingularInitialization { .. }
        | RpcaError::SingularIntersection { .. }
        | RpcaError::StepFailure { .. }
        | RpcaError::DegenerateInput(_) => EXIT_SOLVER,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::NotConverged(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_SOLVER)
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Solve { input, out, dense_l } => solve(&cli.solver, input, out, dense_l.as_deref()),
        Command::Synth {
            n,
            alpha,
            amplitude,
            out,
        } => synth(&cli.solver, *n, *alpha, *amplitude, out),
        Command::Bench { spec, out } => bench(spec, out),
        Command::Video {
            frames,
            background,
            foreground,
        } => video(&cli.solver, frames, background, foreground),
        Command::Selftest => selftest(cli.solver.seed),
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| {
        Failure::Lib(RpcaError::Io {
            path: dir.into(),
            source: e,
        })
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| {
        Failure::Lib(RpcaError::Io {
            path: path.into(),
            source: e,
        })
    })
}

fn summary(res: &SolveResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "solver = {}", res.solver);
    let _ = writeln!(s, "converged = {}", res.converged);
    let _ = writeln!(s, "iterations = {}", res.iterations);
    let _ = writeln!(s, "final_error = {:e}", res.final_error());
    let _ = writeln!(s, "init_time_s = {:.6}", res.init_time.as_secs_f64());
    let _ = writeln!(s, "total_time_s = {:.6}", res.total_time().as_secs_f64());
    let history: Vec<String> = res.error_history.iter().map(|e| format!("{e:e}")).collect();
    let _ = writeln!(s, "error_history = {}", history.join(", "));
    s
}

fn check_converged(args: &SolverArgs, res: &SolveResult) -> Result<(), Failure> {
    if args.strict && !res.converged {
        return Err(Failure::NotConverged(format!(
            "{} did not converge in {} iterations (final error {:e})",
            res.solver,
            res.iterations,
            res.final_error()
        )));
    }
    Ok(())
}

fn join_indices(idx: &[usize]) -> String {
    idx.iter().map(usize::to_string).collect::<Vec<_>>().join("\n") + "\n"
}

fn solve(args: &SolverArgs, input: &Path, out: &Path, dense_l: Option<&Path>) -> Result<(), Failure> {
    let d = read_matrix(input)?;
    let res = args.solver.solve(&d, &args.config())?;
    create_dir(out)?;
    match &res.low_rank {
        LowRankEstimate::Cur(f) => {
            write_matrix(&DenseMatrix::from_dmatrix(f.c().clone())?, &out.join("c.rpcamat"))?;
            write_matrix(
                &DenseMatrix::from_dmatrix(f.u_pinv().clone())?,
                &out.join("u_pinv.rpcamat"),
            )?;
            write_matrix(&DenseMatrix::from_dmatrix(f.r().clone())?, &out.join("r.rpcamat"))?;
            write_text(&out.join("row_indices.txt"), &join_indices(f.row_indices().as_slice()))?;
            write_text(&out.join("col_indices.txt"), &join_indices(f.col_indices().as_slice()))?;
        }
        LowRankEstimate::Svd(svd) => {
            write_matrix(svd.w(), &out.join("w.rpcamat"))?;
            write_matrix(svd.v(), &out.join("v.rpcamat"))?;
            let sigma: Vec<String> = svd.sigma().iter().map(|s| format!("{s:?}")).collect();
            write_text(&out.join("sigma.txt"), &(sigma.join("\n") + "\n"))?;
        }
    }
    if let Some(path) = dense_l {
        write_matrix(&res.low_rank.to_dense(), path)?;
    }
    let text = summary(&res);
    write_text(&out.join("summary.txt"), &text)?;
    print!("{text}");
    check_converged(args, &res)
}

fn synth(args: &SolverArgs, n: usize, alpha: f64, amplitude: Option<f64>, out: &Path) -> Result<(), Failure> {
    let p = SyntheticProblem::generate(n, args.rank, alpha, amplitude, args.seed)?;
    create_dir(out)?;
    write_matrix(&p.d, &out.join("d.rpcamat"))?;
    write_matrix(&p.l_true, &out.join("l.rpcamat"))?;
    write_matrix(&p.s_true, &out.join("s.rpcamat"))?;
    println!(
        "wrote {n}x{n} problem (r = {}, alpha = {alpha}) to {}",
        args.rank,
        out.display()
    );
    Ok(())
}

fn bench(spec_path: &Path, out: &Path) -> Result<(), Failure> {
    let spec = GridSpec::from_file(spec_path)?;
    let rows = run_grid_to_csv(&spec, out)?;
    for row in rows.iter().filter(|r| r.is_aggregate()) {
        println!(
            "{:10} n={:<6} alpha={:<5} median_rel_error={:.3e} mean_time_s={:.4} {}",
            row.solver.name(),
            row.n,
            row.alpha,
            row.final_rel_error,
            row.wall_time_s,
            row.status
        );
    }
    println!("{} rows appended to {}", rows.len(), out.display());
    Ok(())
}

fn video(args: &SolverArgs, frames: &Path, background: &Path, foreground: &Path) -> Result<(), Failure> {
    let (d, meta) = video_to_matrix(frames)?;
    let mut cfg = args.config();
    cfg.ridge_fallback = true;
    let sep = separate_background(&d, args.solver, &cfg)?;
    matrix_to_frames(&sep.background, &meta, background)?;
    matrix_to_frames(&sep.foreground_magnitude(), &meta, foreground)?;
    println!(
        "{} frames of {}x{}: background -> {}, foreground -> {}",
        meta.frame_count,
        meta.frame_width,
        meta.frame_height,
        background.display(),
        foreground.display()
    );
    print!("{}", summary(&sep.result));
    check_converged(args, &sep.result)
}

fn selftest(seed: u64) -> Result<(), Failure> {
    let outcomes = run_selftest(seed);
    let mut failed = 0;
    for o in &outcomes {
        println!("{} {} ({})", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
        failed += usize::from(!o.passed);
    }
    if failed > 0 {
        return Err(Failure::NotConverged(format!(
            "{failed} of {} checks failed",
            outcomes.len()
        )));
    }
    Ok(())
}
