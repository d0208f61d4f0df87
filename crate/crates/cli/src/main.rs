use std::fmt::Write as _;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use designspace::complexity::{ComplexityCeiling, Metric};
use designspace::diststat::{
    bucket_stats, compare_pools, edf, normalize_weights, random_search_curve, subsample_ks, BinScale, Binning,
    EdfCurve, Sample, WeightedPool, DEFAULT_BINS, DEFAULT_REPEATS,
};
use designspace::exec::Execution;
use designspace::pool::evaluator::{
    apply_results, read_results, run_subprocess, write_requests, EvalRequest, EvalResult, EvaluatorConfig,
};
use designspace::pool::{
    evaluate_synthetic, filter_pool, read_pool, sample_records, samples, synthetic_error, write_pool, ModelRecord, Pool,
};
use designspace::space::DesignSpace;
use designspace::Error;
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "designspace",
    version,
    about = "Sample, cost and compare network design spaces"
)]
struct Cli {
    /// Run simulations on one thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample unevaluated architectures into a new pool file.
    Sample {
        #[arg(long)]
        space: String,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the exact number of architectures (and cells) in a space.
    Size {
        #[arg(long)]
        space: String,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Evaluate the unevaluated records of a pool.
    Eval(EvalArgs),
    /// Append records from JSONL files to a pool, validating each one.
    Ingest {
        #[arg(long)]
        pool: PathBuf,
        files: Vec<PathBuf>,
    },
    /// Keep records strictly below a complexity ceiling.
    Filter {
        #[arg(long)]
        pool: PathBuf,
        /// `r56-flops`, `r56-params`, `in-flops`, `in-params` or `<metric>:<limit>`.
        #[arg(long)]
        ceiling: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Error EDF of a pool, optionally normalized for complexity.
    Edf {
        #[arg(long)]
        pool: PathBuf,
        #[command(flatten)]
        bins: BinArgs,
        #[arg(long)]
        normalize: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Compare the error distributions of two pools.
    Compare {
        /// Given twice: the two pools to compare.
        #[arg(long, required = true)]
        pool: Vec<PathBuf>,
        #[command(flatten)]
        bins: BinArgs,
        /// Skip complexity normalization.
        #[arg(long)]
        raw: bool,
        #[arg(long, default_value_t = 10.0)]
        eps: f64,
        /// Also write both EDFs as CSV here.
        #[arg(long)]
        curves: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Random search efficiency curve.
    Rs {
        #[arg(long)]
        pool: PathBuf,
        /// Comma-separated evaluation budgets.
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024])]
        m: Vec<usize>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        bins: BinArgs,
        #[arg(long)]
        normalize: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Error statistics within each complexity bin.
    Buckets {
        #[arg(long)]
        pool: PathBuf,
        #[command(flatten)]
        bins: BinArgs,
        #[command(flatten)]
        output: Output,
    },
    /// KS distance between a pool and its random subsamples.
    #[command(name = "subsample-ks")]
    SubsampleKs {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [10usize, 100, 1000])]
        n: Vec<usize>,
        #[arg(long, default_value_t = DEFAULT_REPEATS)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        allow_mixed: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Answer evaluation requests on stdin with the synthetic oracle.
    #[command(hide = true)]
    SyntheticEvaluator,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pool: PathBuf,
    /// Where to write the evaluated pool.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the built-in synthetic oracle.
    #[arg(long, conflicts_with_all = ["evaluator", "write_requests", "read_results"])]
    synthetic: bool,
    /// Evaluator command speaking JSON lines on stdin/stdout, split on
    /// whitespace into program and arguments.
    #[arg(long)]
    evaluator: Option<String>,
    /// Seconds to wait for each result line.
    #[arg(long, default_value_t = 600)]
    timeout: u64,
    #[arg(long, default_value_t = 2)]
    retries: u32,
    /// Write the request file for an offline evaluator and stop.
    #[arg(long, conflicts_with_all = ["evaluator", "read_results"])]
    write_requests: Option<PathBuf>,
    /// Read results produced for a request file.
    #[arg(long, conflicts_with = "evaluator")]
    read_results: Option<PathBuf>,
}

#[derive(Args)]
struct BinArgs {
    #[arg(long, default_value = "flops")]
    metric: String,
    /// Complexity range `lo:hi`; defaults to the span of the data.
    #[arg(long)]
    range: Option<String>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    /// Equal-width bins instead of log-spaced ones.
    #[arg(long)]
    linear: bool,
    /// Allow synthetic and external records in one analysis.
    #[arg(long)]
    allow_mixed: bool,
}

#[derive(Args)]
struct Output {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

const POOL_DIR_ENV: &str = "DESIGNSPACE_POOL_DIR";

/// Relative pool paths live under `$DESIGNSPACE_POOL_DIR` when it is set.
fn pool_path(p: &Path) -> PathBuf {
    match std::env::var_os(POOL_DIR_ENV) {
        Some(dir) if p.is_relative() => Path::new(&dir).join(p),
        _ => p.to_path_buf(),
    }
}

fn load(p: &Path) -> anyhow::Result<Vec<ModelRecord>> {
    Ok(read_pool(&pool_path(p))?)
}

fn emit(output: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match output {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn parse_range(s: &str) -> Result<(f64, f64), Error> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| Error::Parse(format!("range `{s}` is not lo:hi")))?;
    let num = |x: &str| {
        x.trim()
            .parse::<f64>()
            .map_err(|_| Error::Parse(format!("bad number `{x}` in range")))
    };
    Ok((num(lo)?, num(hi)?))
}

impl BinArgs {
    fn metric(&self) -> Result<Metric, Error> {
        self.metric.parse()
    }

    fn samples(&self, records: &[ModelRecord]) -> anyhow::Result<Vec<Sample>> {
        Ok(samples(records, self.metric()?, self.allow_mixed)?)
    }

    fn binning(&self, data: &[Sample]) -> Result<Binning, Error> {
        let scale = if self.linear { BinScale::Linear } else { BinScale::Log };
        match &self.range {
            Some(r) => {
                let (lo, hi) = parse_range(r)?;
                Binning::new(lo, hi, self.bins, scale)
            }
            None => Binning::covering(data, self.bins, scale),
        }
    }
}

fn weighted(data: &[Sample], bins: Option<&Binning>) -> Result<WeightedPool, Error> {
    match bins {
        Some(b) => normalize_weights(data, b),
        None => WeightedPool::uniform(data),
    }
}

fn curve_csv(label: Option<&str>, c: &EdfCurve, out: &mut String) {
    for (t, f) in c.points() {
        match label {
            Some(l) => writeln!(out, "{l},{t},{f}").unwrap(),
            None => writeln!(out, "{t},{f}").unwrap(),
        }
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    match cli.command {
        Command::Sample { space, n, seed, out } => {
            let space = DesignSpace::resolve(&space)?;
            let records = sample_records(&space, n, seed, exec)?;
            write_pool(&pool_path(&out), &records)?;
        }
        Command::Size { space, format } => {
            let s = DesignSpace::resolve(&space)?;
            let size = s.size().to_string();
            let cells = s.cell_count().map(|c| c.to_string());
            let text = match format {
                Format::Json => {
                    let mut v = json!({ "space": s.name(), "architectures": size });
                    if let Some(c) = &cells {
                        v["cells"] = json!(c);
                    }
                    format!("{v}\n")
                }
                Format::Csv => {
                    let mut t = format!("quantity,count\narchitectures,{size}\n");
                    if let Some(c) = &cells {
                        writeln!(t, "cells,{c}").unwrap();
                    }
                    t
                }
                Format::Text => match &cells {
                    Some(c) => format!("cells {c}\narchitectures {size}\n"),
                    None => format!("{size}\n"),
                },
            };
            emit(None, &text)?;
        }
        Command::Eval(args) => eval(args)?,
        Command::Ingest { pool, files } => {
            let mut pool = Pool::open(&pool_path(&pool))?;
            let mut reports = Vec::new();
            if files.is_empty() {
                reports.push(json!({"file": "-", "report": pool.ingest(io::stdin().lock())?}));
            }
            for f in files {
                let file = std::fs::File::open(&f).with_context(|| format!("opening {}", f.display()))?;
                let report = pool.ingest(BufReader::new(file))?;
                reports.push(json!({"file": f, "report": report}));
            }
            emit(None, &format!("{}\n", serde_json::to_string_pretty(&reports)?))?;
        }
        Command::Filter { pool, ceiling, out } => {
            let c = match ComplexityCeiling::preset(&ceiling) {
                Some(c) => c,
                None => {
                    let (m, limit) = ceiling
                        .split_once(':')
                        .ok_or_else(|| Error::Parse(format!("unknown ceiling `{ceiling}`")))?;
                    let limit = limit
                        .parse::<f64>()
                        .map_err(|_| Error::Parse(format!("bad ceiling limit `{limit}`")))?;
                    ComplexityCeiling::new(m.parse()?, limit as u64)?
                }
            };
            let records = load(&pool)?;
            write_pool(&pool_path(&out), &filter_pool(&records, &c))?;
        }
        Command::Edf {
            pool,
            bins,
            normalize,
            output,
        } => {
            let data = bins.samples(&load(&pool)?)?;
            let binning = if normalize { Some(bins.binning(&data)?) } else { None };
            let curve = edf(&weighted(&data, binning.as_ref())?)?;
            let text = match output.format {
                Format::Json => format!("{}\n", json!({ "points": curve.points() })),
                _ => {
                    let mut t = String::from("threshold,fraction\n");
                    curve_csv(None, &curve, &mut t);
                    t
                }
            };
            emit(output.out.as_deref(), &text)?;
        }
        Command::Compare {
            pool,
            bins,
            raw,
            eps,
            curves,
            output,
        } => {
            if pool.len() != 2 {
                bail!(Error::Parse(format!(
                    "compare takes exactly two pools, got {}",
                    pool.len()
                )));
            }
            let a = bins.samples(&load(&pool[0])?)?;
            let b = bins.samples(&load(&pool[1])?)?;
            let binning = if raw {
                None
            } else {
                let both: Vec<Sample> = a.iter().chain(&b).copied().collect();
                Some(bins.binning(&both)?)
            };
            let c = compare_pools(
                &weighted(&a, binning.as_ref())?,
                &weighted(&b, binning.as_ref())?,
                Some(eps),
            )?;
            if let Some(path) = curves {
                let mut t = String::from("pool,threshold,fraction\n");
                curve_csv(Some("a"), c.edf_a.as_ref().unwrap(), &mut t);
                curve_csv(Some("b"), c.edf_b.as_ref().unwrap(), &mut t);
                emit(Some(&path), &t)?;
            }
            let report = json!({
                "d": c.d,
                "p_value": c.p_value,
                "n_a": a.len(),
                "n_b": b.len(),
                "n_eff_a": c.n_eff_a,
                "n_eff_b": c.n_eff_b,
                "eps": eps,
                "area_a": c.area_a,
                "area_b": c.area_b,
                "metric": bins.metric()?,
                "binning": binning,
            });
            let text = match output.format {
                Format::Csv => format!(
                    "d,p_value,n_a,n_b,area_a,area_b\n{},{},{},{},{},{}\n",
                    c.d,
                    c.p_value,
                    a.len(),
                    b.len(),
                    opt(c.area_a),
                    opt(c.area_b)
                ),
                _ => format!("{}\n", serde_json::to_string_pretty(&report)?),
            };
            emit(output.out.as_deref(), &text)?;
        }
        Command::Rs {
            pool,
            m,
            trials,
            seed,
            bins,
            normalize,
            output,
        } => {
            let data = bins.samples(&load(&pool)?)?;
            let binning = if normalize { Some(bins.binning(&data)?) } else { None };
            let curve = random_search_curve(&weighted(&data, binning.as_ref())?, &m, trials, seed, exec)?;
            let text = match output.format {
                Format::Json => format!("{}\n", serde_json::to_string_pretty(&curve)?),
                _ => {
                    let mut t = String::from("m,trials,mean,std,lo,hi\n");
                    for r in &curve {
                        writeln!(t, "{},{},{},{},{},{}", r.m, r.trials, r.mean, r.std, r.lo, r.hi).unwrap();
                    }
                    t
                }
            };
            emit(output.out.as_deref(), &text)?;
        }
        Command::Buckets { pool, bins, output } => {
            let data = bins.samples(&load(&pool)?)?;
            let binning = bins.binning(&data)?;
            let stats = bucket_stats(&data, &binning);
            if stats.iter().all(|s| s.count == 0) {
                return Err(Error::EmptyRange {
                    lo: binning.lo,
                    hi: binning.hi,
                }
                .into());
            }
            let text = match output.format {
                Format::Json => format!("{}\n", serde_json::to_string_pretty(&stats)?),
                _ => {
                    let mut t = String::from("bin,lo,hi,count,mean,std\n");
                    for s in &stats {
                        writeln!(
                            t,
                            "{},{},{},{},{},{}",
                            s.bin,
                            s.lo,
                            s.hi,
                            s.count,
                            opt(s.mean),
                            opt(s.std)
                        )
                        .unwrap();
                    }
                    t
                }
            };
            emit(output.out.as_deref(), &text)?;
        }
        Command::SubsampleKs {
            pool,
            n,
            repeats,
            seed,
            allow_mixed,
            output,
        } => {
            let errors: Vec<f64> = samples(&load(&pool)?, Metric::Flops, allow_mixed)?
                .iter()
                .map(|s| s.error)
                .collect();
            let rows = subsample_ks(&errors, &n, repeats, seed, exec)?;
            let text = match output.format {
                Format::Json => format!("{}\n", serde_json::to_string_pretty(&rows)?),
                _ => {
                    let mut t = String::from("n,repeats,mean_d,std_err\n");
                    for r in &rows {
                        writeln!(t, "{},{},{},{}", r.n, r.repeats, r.mean_d, r.std_err).unwrap();
                    }
                    t
                }
            };
            emit(output.out.as_deref(), &text)?;
        }
        Command::SyntheticEvaluator => serve_synthetic()?,
    }
    Ok(())
}

fn eval(args: EvalArgs) -> anyhow::Result<()> {
    let mut records = load(&args.pool)?;
    let requests: Vec<EvalRequest> = records
        .iter()
        .filter(|r| r.error.is_none())
        .map(EvalRequest::from_record)
        .collect();
    if let Some(path) = &args.write_requests {
        write_requests(path, &requests)?;
        eprintln!("wrote {} requests to {}", requests.len(), path.display());
        return Ok(());
    }
    let Some(out) = &args.out else {
        bail!(Error::InvalidConfig("--out is required".into()));
    };
    if args.synthetic {
        for r in records.iter_mut().filter(|r| r.error.is_none()) {
            evaluate_synthetic(r);
        }
    } else {
        let outcome = if let Some(path) = &args.read_results {
            read_results(path, &requests)?
        } else if let Some(cmd) = &args.evaluator {
            let cfg = EvaluatorConfig {
                command: cmd.split_whitespace().map(String::from).collect(),
                timeout: Duration::from_secs(args.timeout),
                retries: args.retries,
            };
            run_subprocess(&cfg, &requests)?
        } else {
            bail!(Error::InvalidConfig(
                "choose --synthetic, --evaluator, --write-requests or --read-results".into()
            ));
        };
        for w in &outcome.warnings {
            eprintln!("warning: {w}");
        }
        if !outcome.missing.is_empty() {
            eprintln!("{} requests still unanswered", outcome.missing.len());
        }
        apply_results(&mut records, &outcome.results);
    }
    write_pool(&pool_path(out), &records)?;
    Ok(())
}

fn serve_synthetic() -> anyhow::Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for line in io::stdin().lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let req: EvalRequest = serde_json::from_str(&line).map_err(|e| Error::Parse(e.to_string()))?;
        let c = req.arch.complexity(req.regime)?;
        let res = EvalResult {
            run_id: req.run_id,
            error: synthetic_error(&req.arch, c.flops, c.params, req.seed),
            metadata: json!({ "source": "synthetic" }),
        };
        writeln!(out, "{}", serde_json::to_string(&res)?)?;
        out.flush()?;
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Parse(_) | Error::Json(_)) => 2,
        Some(Error::InfeasibleGrid { .. } | Error::InvalidConfig(_) | Error::UnknownOp(_)) => 3,
        Some(Error::EmptyRange { .. }) => 4,
        Some(Error::Evaluator(_)) => 5,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
