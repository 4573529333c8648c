//! Command-line driver: build, query, evaluate, exhaustive oracle, stats.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use logt::decoding::SupportOrder;
use logt::encoding::Construction;
use logt::eval::{self, GroundTruth};
use logt::io::{
    load_index, parse_ground_truth, read_vecs, save_index, write_report_csv, write_results_csv,
    VecsFormat,
};
use logt::model::{validate_dataset, Dataset};
use logt::search::{query, query_cascade};
use logt::{BuildParams, Index, QueryParams, RankedResult, Strategy};

#[derive(Parser)]
#[command(name = "logt", version, about = "Group-testing similarity search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Random,
    Orthogonal,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncoderArg {
    Sum,
    Pinv,
}

#[derive(Subcommand)]
enum Command {
    /// Build an index from a vector file.
    Build(BuildArgs),
    /// Run ranked queries against an index.
    Query(QueryArgs),
    /// Evaluate an index against ground truth.
    Eval(EvalArgs),
    /// Exhaustive-search baseline over raw vectors.
    Oracle(OracleArgs),
    /// Print index shapes and the predicted complexity ratio.
    Stats(StatsArgs),
}

#[derive(Args)]
struct BuildArgs {
    /// Input vectors (.fvecs or .bvecs).
    #[arg(long)]
    vectors: PathBuf,
    /// Memory-unit size.
    #[arg(long, default_value_t = 50)]
    n: usize,
    /// Units per vector.
    #[arg(long, default_value_t = 4)]
    m: usize,
    #[arg(long, value_enum, default_value = "orthogonal")]
    strategy: StrategyArg,
    /// Chunk factor k: orthogonal grouping works on chunks of k*n vectors.
    #[arg(long, default_value_t = 16)]
    chunk_factor: usize,
    #[arg(long, value_enum, default_value = "pinv")]
    encoder: EncoderArg,
    /// Decoder support order (0 or 1).
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(0..=1))]
    order: u8,
    /// Non-zeros per decoder column; 0 keeps the dense least-squares fit.
    #[arg(long = "omp-L", default_value_t = 300)]
    omp_l: usize,
    /// Cascade head energy fraction in (0, 1].
    #[arg(long)]
    cascade_p: Option<f64>,
    /// Product-quantization subspace count (must divide d).
    #[arg(long)]
    pq_m: Option<usize>,
    /// Number of build batches.
    #[arg(long, default_value_t = 1)]
    batches: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rescale input columns to unit norm instead of rejecting them.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    normalize: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    index: PathBuf,
    /// Query vectors (.fvecs or .bvecs).
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    /// Apply per-unit non-maxima suppression.
    #[arg(long)]
    correct: bool,
    /// Cascade shortlist size |R|.
    #[arg(long)]
    shortlist: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    /// Ground truth: `query_id | relevant ids | ignore ids` per line.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = 100)]
    top_k: usize,
    #[arg(long)]
    correct: bool,
    #[arg(long)]
    shortlist: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    vectors: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    index: PathBuf,
}

fn load_vectors(path: &Path, normalize: bool) -> anyhow::Result<Dataset> {
    let raw = read_vecs(path, VecsFormat::from_path(path))
        .with_context(|| format!("reading {}", path.display()))?;
    validate_dataset(raw.data, raw.d, normalize)
        .with_context(|| format!("validating {}", path.display()))
}

fn run_queries(
    index: &Index,
    queries: &Dataset,
    params: &QueryParams,
) -> anyhow::Result<Vec<RankedResult>> {
    let cascade = index.decoder().cascade().is_some();
    (0..queries.len())
        .map(|qi| {
            let q = queries.column(qi);
            let r = if cascade {
                query_cascade(index, q, params)
            } else {
                query(index, q, params)
            };
            r.with_context(|| format!("query {qi}"))
        })
        .collect()
}

fn build(args: BuildArgs) -> anyhow::Result<()> {
    let dataset = load_vectors(&args.vectors, args.normalize)?;
    let params = BuildParams {
        n: args.n,
        m: args.m,
        strategy: match args.strategy {
            StrategyArg::Random => Strategy::Random,
            StrategyArg::Orthogonal => Strategy::Orthogonal,
        },
        chunk_factor: args.chunk_factor,
        encoder: match args.encoder {
            EncoderArg::Sum => Construction::Sum,
            EncoderArg::Pinv => Construction::Pinv,
        },
        order: if args.order == 0 {
            SupportOrder::Order0
        } else {
            SupportOrder::Order1
        },
        omp_l: (args.omp_l > 0).then_some(args.omp_l),
        cascade_p: args.cascade_p,
        pq_subspaces: args.pq_m,
        seed: args.seed,
    };
    let started = std::time::Instant::now();
    let index = if args.batches <= 1 {
        Index::build(&dataset, &params)?
    } else {
        let d = dataset.dim();
        let n = dataset.len();
        if args.batches > n {
            bail!("{} batches for {} vectors", args.batches, n);
        }
        // Contiguous batches of near-equal size.
        let per = n.div_ceil(args.batches);
        let slices: Vec<Dataset> = (0..args.batches)
            .map(|b| {
                let lo = b * per;
                let hi = ((b + 1) * per).min(n);
                let cols: Vec<f64> = (lo..hi).flat_map(|i| dataset.column(i).to_vec()).collect();
                validate_dataset(cols, d, false)
            })
            .collect::<Result<_, _>>()?;
        eval::batch_build(slices.into_iter().map(Ok), &params)?
    };
    eprintln!(
        "built index over {} vectors in {:.1?}",
        index.num_vectors(),
        started.elapsed()
    );
    save_index(&index, &args.out)?;
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

fn run_query_cmd(args: QueryArgs) -> anyhow::Result<()> {
    let index = load_index(&args.index)?;
    let queries = load_vectors(&args.queries, true)?;
    let params = QueryParams {
        top_k: args.top_k,
        correction: args.correct,
        shortlist_size: args.shortlist,
        correction_depth: None,
    };
    let results = run_queries(&index, &queries, &params)?;
    write_results_csv(&args.out, &results)?;
    eprintln!("wrote {} rankings to {}", results.len(), args.out.display());
    Ok(())
}

fn run_eval(args: EvalArgs) -> anyhow::Result<()> {
    let index = load_index(&args.index)?;
    let queries = load_vectors(&args.queries, true)?;
    let gt: GroundTruth = parse_ground_truth(&args.gt, queries.len())?;
    let params = QueryParams {
        top_k: args.top_k,
        correction: args.correct,
        shortlist_size: args.shortlist,
        correction_depth: None,
    };
    let report = eval::evaluate(&index, &queries, &gt, &params)?;
    write_report_csv(&args.out, &report)?;
    println!(
        "mAP {:.4} over {} queries ({} skipped)",
        report.map, report.evaluated, report.skipped
    );
    println!(
        "rho {:.4} (mean decode ops {:.0}, mean query time {:.3} ms)",
        report.rho,
        report.mean_decode_ops,
        report.mean_seconds * 1e3
    );
    Ok(())
}

fn run_oracle(args: OracleArgs) -> anyhow::Result<()> {
    let dataset = load_vectors(&args.vectors, true)?;
    let queries = load_vectors(&args.queries, true)?;
    let results: Vec<RankedResult> = (0..queries.len())
        .map(|qi| eval::exhaustive_ranked(&dataset, queries.column(qi), args.top_k))
        .collect::<Result<_, _>>()?;
    write_results_csv(&args.out, &results)?;
    eprintln!("wrote {} rankings to {}", results.len(), args.out.display());
    Ok(())
}

fn run_stats(args: StatsArgs) -> anyhow::Result<()> {
    let index = load_index(&args.index)?;
    println!("{}", index.stats());
    Ok(())
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("LOGT_THREADS") {
        if let Ok(threads) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global();
        }
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Build(args) => build(args),
        Command::Query(args) => run_query_cmd(args),
        Command::Eval(args) => run_eval(args),
        Command::Oracle(args) => run_oracle(args),
        Command::Stats(args) => run_stats(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
