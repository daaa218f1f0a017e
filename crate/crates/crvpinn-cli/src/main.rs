//! Experiment runner: trains the benchmark problems with the robust or the
//! baseline loss, verifies the discrete calculus identities, runs the
//! inf-sup analysis, exports Gram matrices, and times the loss overhead.

mod lemmas;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crvpinn::problems::Problem;
use crvpinn::sparse::write_matrix_market_file;
use crvpinn::train::{
    bench_loss_overhead, train, write_manifest, write_records_csv_file, LossKind, TrainConfig,
};

fn parse_problem(s: &str) -> Result<Problem, String> {
    Problem::from_name(s).map_err(|e| e.to_string())
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    s.parse()
}

#[derive(Parser)]
#[command(name = "crvpinn", version, about = "Robust collocation training on the unit square")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network on one benchmark problem and write the run artifacts
    Train(TrainArgs),
    /// Randomized checks of the discrete calculus identities
    Lemmas(LemmasArgs),
    /// Inf-sup verification for the first-order Stokes system
    Infsup(InfsupArgs),
    /// Export a problem's Gram matrix in Matrix Market format
    ExportGram(ExportGramArgs),
    /// Compare per-iteration cost of the robust and baseline losses
    Bench(BenchArgs),
}

#[derive(clap::Args)]
struct TrainArgs {
    #[arg(long, value_parser = parse_problem)]
    problem: Problem,
    /// Grid subdivisions per axis
    #[arg(long, default_value_t = 32)]
    n: usize,
    /// Hidden tanh layers
    #[arg(long, default_value_t = 2)]
    layers: usize,
    /// Hidden layer width
    #[arg(long, default_value_t = 50)]
    width: usize,
    /// Learning rate
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 5000)]
    iters: usize,
    #[arg(long, env = "CRVPINN_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = parse_loss, default_value = "crvpinn")]
    loss: LossKind,
    /// Output directory for records.csv, manifest.json and final.ckpt
    #[arg(long, default_value = "runs/latest")]
    out: PathBuf,
    /// Record every k-th iteration
    #[arg(long, default_value_t = 1)]
    record_every: usize,
    /// Also render a log-scale convergence chart
    #[arg(long, default_value_t = false)]
    svg: bool,
}

#[derive(clap::Args)]
struct LemmasArgs {
    /// Grid sizes, comma separated
    #[arg(long, value_delimiter = ',', default_values_t = vec![4usize, 16, 64])]
    n: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, env = "CRVPINN_SEED", default_value_t = 0)]
    seed: u64,
    /// Negative control: flip one stencil sign so the checks must fail
    #[arg(long, hide = true, default_value_t = false)]
    inject_bug: bool,
}

#[derive(clap::Args)]
struct InfsupArgs {
    /// Grid sizes, comma separated
    #[arg(long, value_delimiter = ',', default_values_t = vec![8usize, 12, 16])]
    n: Vec<usize>,
    /// Directory for the CSV table
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(clap::Args)]
struct ExportGramArgs {
    #[arg(long, value_parser = parse_problem)]
    problem: Problem,
    #[arg(long, default_value_t = 4)]
    n: usize,
    /// Only the Matrix Market coordinate format is supported
    #[arg(long, default_value = "mtx")]
    format: String,
    /// Output path; defaults to <problem>-gram-n<N>.mtx
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct BenchArgs {
    #[arg(long, value_parser = parse_problem, default_value = "laplace-sinsin")]
    problem: Problem,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    iters: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 100)]
    width: usize,
    #[arg(long, env = "CRVPINN_SEED", default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Lemmas(args) => cmd_lemmas(args),
        Command::Infsup(args) => cmd_infsup(args),
        Command::ExportGram(args) => cmd_export_gram(args),
        Command::Bench(args) => cmd_bench(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}

fn cmd_train(args: TrainArgs) -> crvpinn::Result<ExitCode> {
    let config = TrainConfig {
        problem: args.problem,
        n: args.n,
        hidden_layers: args.layers,
        width: args.width,
        learning_rate: args.lr,
        iterations: args.iters,
        seed: args.seed,
        loss_kind: args.loss,
        record_stride: args.record_every,
        out_dir: Some(args.out.display().to_string()),
    };
    std::fs::create_dir_all(&args.out)?;
    write_manifest(&config, &args.out.join("manifest.json"))?;
    let outcome = train(&config)?;
    write_records_csv_file(&outcome.records, &args.out.join("records.csv"))?;
    crvpinn::nn::save_checkpoint(
        &args.out.join("final.ckpt"),
        &outcome.params,
        config.iterations as u64,
    )?;
    if args.svg {
        std::fs::write(
            args.out.join("convergence.svg"),
            svg::convergence_chart(&outcome.records),
        )?;
    }
    if let Some(last) = outcome.records.last() {
        println!(
            "{}: N={} iters={} loss={:.6e} sqrt_loss={:.6e} err_discrete={:.6e} err_analytic={:.6e}",
            args.problem.name(),
            args.n,
            args.iters,
            last.loss,
            last.sqrt_loss,
            last.err_discrete,
            last.err_analytic
        );
        if args.problem == Problem::AdvectionDiffusion {
            // boundary-layer error is conventionally reported eps-scaled too
            println!(
                "eps-scaled analytic error: {:.6e}",
                crvpinn::problems::ADVECTION_EPS * last.err_analytic
            );
        }
    }
    println!("artifacts written to {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_lemmas(args: LemmasArgs) -> crvpinn::Result<ExitCode> {
    if args.trials == 0 {
        println!("warning: 0 trials requested; checks pass vacuously");
        return Ok(ExitCode::SUCCESS);
    }
    let reports = lemmas::run_checks(&args.n, args.trials, args.seed, args.inject_bug);
    let mut all_pass = true;
    for r in &reports {
        let status = if r.pass { "PASS" } else { "FAIL" };
        print!(
            "{:<22} N={:<3} {status}  (max relative defect {:.3e}",
            r.name, r.n, r.max_defect
        );
        match r.witness_seed {
            Some(seed) => println!(", witness seed {seed})"),
            None => println!(")"),
        }
        all_pass &= r.pass;
    }
    Ok(if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_infsup(args: InfsupArgs) -> crvpinn::Result<ExitCode> {
    std::fs::create_dir_all(&args.out)?;
    let mut csv = String::from("n,lambda0,lambda1,alpha\n");
    println!("{:>4} {:>14} {:>14} {:>10}", "N", "lambda0", "lambda1", "alpha");
    for &n in &args.n {
        let rep = crvpinn::infsup::infsup_constant(n)?;
        println!(
            "{:>4} {:>14.6e} {:>14.6e} {:>10.6}",
            rep.n, rep.lambda0, rep.lambda1, rep.alpha
        );
        csv.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e}\n",
            rep.n, rep.lambda0, rep.lambda1, rep.alpha
        ));
    }
    let path = args.out.join("infsup.csv");
    std::fs::write(&path, csv)?;
    println!("table written to {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_export_gram(args: ExportGramArgs) -> crvpinn::Result<ExitCode> {
    if args.format != "mtx" {
        eprintln!("error: unsupported format '{}', expected 'mtx'", args.format);
        return Ok(ExitCode::from(2));
    }
    let pspec = crvpinn::problems::ProblemSpec::new(args.problem, args.n)?;
    let gram = pspec.build_gram()?;
    let path = args.out.unwrap_or_else(|| {
        PathBuf::from(format!("{}-gram-n{}.mtx", args.problem.name(), args.n))
    });
    write_matrix_market_file(gram.matrix(), &path)?;
    println!(
        "{} Gram at N={}: {}x{} with {} nonzeros -> {}",
        args.problem.name(),
        args.n,
        gram.dim(),
        gram.dim(),
        gram.matrix().nnz(),
        path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(args: BenchArgs) -> crvpinn::Result<ExitCode> {
    let report = bench_loss_overhead(
        args.problem,
        args.n,
        args.layers,
        args.width,
        args.iters,
        args.seed,
    )?;
    println!(
        "{} at N={}, {} iterations, {}x{} net",
        args.problem.name(),
        args.n,
        args.iters,
        args.layers,
        args.width
    );
    println!("one-time factorization: {:.2} ms", report.factorize_ms);
    println!("baseline loss:  {:.4} ms/iter", report.pinn_ms_per_iter);
    println!("robust loss:    {:.4} ms/iter", report.crvpinn_ms_per_iter);
    println!("ratio: {:.4}", report.ratio());
    if report.ratio() > 1.6 {
        println!("warning: overhead ratio above 1.6");
    }
    Ok(ExitCode::SUCCESS)
}
