//! `popfit` — fit popularity models to request traces and predict LRU cache
//! hit ratios.
//!
//! Subcommands: `synth` (generate ground-truth datasets), `ingest` (trace
//! file → count histogram), `estimate` (histogram → fitted mixing +
//! catalog), `predict-hr` (model hit-ratio curves), `simulate`
//! (trace-driven LRU curves), `compare` (MARE reports), `reproduce`
//! (canned end-to-end experiments with pinned seeds).

// `!(hi > lo)` deliberately rejects NaN bounds alongside empty ranges.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use popfit::cache::{
    hr_curve_model, CurveMode, CurveSource, HitRatioCurve, ModelSource, PopularityVector,
    TransientPolicy,
};
use popfit::estimators::{
    naive_estimate, np_ml_estimate, pareto_ml_estimate, peak_refit, penalized_np_estimate,
    zipf_fit_from_histogram, EstimationResult, GridSpec, Initialization, PenaltyConfig,
    SolverConfig,
};
use popfit::mixture::MixingDistribution;
use popfit::report::{compare_hr, compare_mixture, PmfReference};
use popfit::sim::{hr_curve_sim, lru_simulate};
use popfit::trace::{
    counts_from_trace, histogram_from_counts, ingest_trace, synth_delta, synth_pareto,
    trace_from_counts, CountHistogram, DocumentCounts, TraceFormat,
};

#[derive(Parser)]
#[command(name = "popfit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic catalog and its zero-censored counts.
    Synth(SynthArgs),
    /// Reduce a trace file to counts and a count histogram.
    Ingest(IngestArgs),
    /// Fit a popularity model to a count histogram.
    Estimate(EstimateArgs),
    /// Evaluate model hit-ratio curves.
    PredictHr(PredictArgs),
    /// Trace-driven LRU simulation over a capacity grid.
    Simulate(SimulateArgs),
    /// MARE comparison of two curves or two request-count distributions.
    Compare(CompareArgs),
    /// Run a named end-to-end experiment with pinned seeds.
    Reproduce(ReproduceArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GeneratorKind {
    Pareto,
    Delta,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    generator: GeneratorKind,
    /// Catalog size (number of documents, observed or not).
    #[arg(long)]
    n: u64,
    #[arg(long, required_if_eq("generator", "pareto"))]
    alpha: Option<f64>,
    #[arg(long, required_if_eq("generator", "pareto"))]
    xm: Option<f64>,
    #[arg(long, required_if_eq("generator", "delta"))]
    lambda: Option<f64>,
    #[arg(long)]
    seed: u64,
    /// Per-document counts JSON.
    #[arg(long)]
    counts_out: Option<PathBuf>,
    /// Count histogram JSON.
    #[arg(long)]
    histogram_out: Option<PathBuf>,
    /// Shuffled request trace, one identifier per line.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Ground-truth JSON (generator, seed, catalog size).
    #[arg(long)]
    ground_truth_out: Option<PathBuf>,
    /// Binary little-endian f64 column with one popularity per document;
    /// referenced from the ground-truth JSON.
    #[arg(long)]
    popularities_out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatKind {
    /// One identifier per line.
    Lines,
    /// `timestamp,identifier` rows (header optional).
    Csv,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "lines")]
    format: FormatKind,
    #[arg(long)]
    histogram_out: PathBuf,
    #[arg(long)]
    counts_out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodKind {
    Naive,
    Np,
    NpPenalized,
    NpPeak,
    Pareto,
    Zipf,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    histogram: PathBuf,
    #[arg(long, value_enum)]
    method: MethodKind,
    #[arg(long, default_value_t = 0.01)]
    grid_lower: f64,
    #[arg(long, default_value_t = 1.2)]
    grid_upper_factor: f64,
    #[arg(long, default_value_t = 128)]
    grid_points: usize,
    #[arg(long, default_value_t = 2000)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1e-10)]
    relative_tolerance: f64,
    #[arg(long, default_value_t = 1e-8)]
    kkt_tolerance: f64,
    /// Smoothness weight for --method np-penalized.
    #[arg(long, default_value_t = 0.1)]
    rho: f64,
    /// Regression window for --method zipf.
    #[arg(long, default_value_t = 20_000)]
    top_n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

impl EstimateArgs {
    fn grid(&self) -> GridSpec {
        GridSpec {
            lower: self.grid_lower,
            upper_factor: self.grid_upper_factor,
            points: self.grid_points,
        }
    }

    fn solver(&self) -> SolverConfig {
        SolverConfig {
            max_iterations: self.max_iterations,
            relative_tolerance: self.relative_tolerance,
            kkt_tolerance: self.kkt_tolerance,
            initialization: Initialization::Uniform,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Irm,
    IrmM,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeKind {
    Stationary,
    Transient,
}

#[derive(Args)]
struct PredictArgs {
    /// Mixing JSON (for --model irm-m).
    #[arg(long, conflicts_with = "counts")]
    mixing: Option<PathBuf>,
    /// Counts JSON; each document's count becomes its rate (for --model irm).
    #[arg(long)]
    counts: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: ModelKind,
    #[arg(long, value_enum)]
    mode: ModeKind,
    #[arg(long, default_value_t = 1.0)]
    window: f64,
    /// Relative cache sizes: `lo:hi:count` or a comma list.
    #[arg(long)]
    deltas: String,
    /// Catalog size normalizing the delta axis.
    #[arg(long)]
    k_reference: f64,
    /// Catalog size of the model itself (defaults to --k-reference for
    /// irm-m, to the number of documents for irm).
    #[arg(long)]
    k_model: Option<f64>,
    /// Freeze eviction at the window end for points beyond the reachable
    /// range instead of erroring (exact no-eviction expectation).
    #[arg(long)]
    cap_at_window: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, value_enum, default_value = "lines")]
    format: FormatKind,
    /// Comma-separated strictly increasing capacities.
    #[arg(long)]
    capacities: String,
    /// Catalog size normalizing the delta axis (defaults to the number of
    /// distinct documents in the trace).
    #[arg(long)]
    k_reference: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Also write per-capacity hit/miss records as JSON.
    #[arg(long)]
    results_out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CompareKind {
    Hr,
    Pmf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long, value_enum)]
    kind: CompareKind,
    /// Curve CSV (hr) or mixing/histogram JSON (pmf).
    #[arg(long)]
    reference: PathBuf,
    /// Curve CSV (hr) or mixing JSON (pmf).
    #[arg(long)]
    estimate: PathBuf,
    /// Largest count compared (pmf only).
    #[arg(long)]
    j_max: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExperimentKind {
    DeltaCatalog,
    ParetoFit,
    ZipfBaseline,
    HrPrt,
    HrDelta,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScaleKind {
    Desk,
    Paper,
}

#[derive(Args)]
struct ReproduceArgs {
    #[arg(value_enum)]
    experiment: ExperimentKind,
    #[arg(long, value_enum, default_value = "desk")]
    scale: ScaleKind,
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let payload = serde_json::json!({
                "schema_version": 1,
                "kind": "computation",
                "error": format!("{err:#}"),
            });
            eprintln!("{payload}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Ingest(args) => cmd_ingest(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::PredictHr(args) => cmd_predict(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Reproduce(args) => cmd_reproduce(args),
    }
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_curve(path: &Path, curve: &HitRatioCurve) -> anyhow::Result<()> {
    write_file(path, &curve.to_csv())?;
    let meta_path = path.with_extension("meta.json");
    write_file(&meta_path, &curve.meta_json())?;
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> anyhow::Result<()> {
    let (gt, dc) = match args.generator {
        GeneratorKind::Pareto => synth_pareto(
            args.n,
            args.alpha.expect("clap enforces --alpha"),
            args.xm.expect("clap enforces --xm"),
            args.seed,
        )?,
        GeneratorKind::Delta => {
            synth_delta(args.n, args.lambda.expect("clap enforces --lambda"), args.seed)?
        }
    };
    println!(
        "synth: catalog {}, observed {}, requests {}",
        gt.catalog_size(),
        dc.observed_docs(),
        dc.total_requests()
    );
    if let Some(path) = &args.counts_out {
        write_file(path, &dc.to_json())?;
    }
    if let Some(path) = &args.histogram_out {
        write_file(path, &histogram_from_counts(&dc).to_json())?;
    }
    if let Some(path) = &args.trace_out {
        let trace = trace_from_counts(&dc, args.seed.wrapping_add(1));
        let mut body = String::with_capacity(trace.len() * 8);
        for id in &trace.requests {
            body.push_str(id);
            body.push('\n');
        }
        write_file(path, &body)?;
    }
    if let Some(path) = &args.ground_truth_out {
        match &args.popularities_out {
            Some(pop_path) => {
                fs::write(pop_path, gt.popularities_le_bytes())?;
                let name = pop_path
                    .file_name()
                    .and_then(|n| n.to_str())
                    .ok_or_else(|| anyhow!("bad popularities path"))?;
                write_file(path, &gt.to_json(0, Some(name)))?;
            }
            None => write_file(path, &gt.to_json(100_000, None))?,
        }
    }
    Ok(())
}

fn read_trace(path: &Path, format: FormatKind) -> anyhow::Result<popfit::trace::RequestTrace> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let format = match format {
        FormatKind::Lines => TraceFormat::IdPerLine,
        FormatKind::Csv => TraceFormat::CsvTimestampId,
    };
    Ok(ingest_trace(file, format)?)
}

fn cmd_ingest(args: IngestArgs) -> anyhow::Result<()> {
    let trace = read_trace(&args.input, args.format)?;
    let dc = counts_from_trace(&trace);
    let h = histogram_from_counts(&dc);
    println!(
        "ingest: {} requests, {} documents, max count {}",
        trace.len(),
        dc.observed_docs(),
        h.max_count()
    );
    write_file(&args.histogram_out, &h.to_json())?;
    if let Some(path) = &args.counts_out {
        write_file(path, &dc.to_json())?;
    }
    Ok(())
}

fn cmd_estimate(args: EstimateArgs) -> anyhow::Result<()> {
    let text = fs::read_to_string(&args.histogram)
        .with_context(|| format!("reading {}", args.histogram.display()))?;
    let h = CountHistogram::from_json(&text)?;
    let result = run_estimate(&h, &args)?;
    println!(
        "estimate[{}]: catalog {:.1}, log-likelihood {:.6}, iterations {}, converged {}",
        serde_json::to_string(&result.method)?.trim_matches('"'),
        result.catalog_estimate,
        result.log_likelihood,
        result.iterations,
        result.converged
    );
    write_file(&args.out, &result.to_json())?;
    Ok(())
}

fn run_estimate(h: &CountHistogram, args: &EstimateArgs) -> anyhow::Result<EstimationResult> {
    let r = match args.method {
        MethodKind::Naive => naive_estimate(h)?,
        MethodKind::Np => np_ml_estimate(h, &args.grid(), &args.solver())?,
        MethodKind::NpPenalized => penalized_np_estimate(
            h,
            &args.grid(),
            &PenaltyConfig { rho: args.rho },
            &args.solver(),
        )?,
        MethodKind::NpPeak => {
            let base = np_ml_estimate(h, &args.grid(), &args.solver())?;
            peak_refit(&base, h, &args.solver())?
        }
        MethodKind::Pareto => pareto_ml_estimate(h, &args.solver())?,
        MethodKind::Zipf => zipf_fit_from_histogram(h, args.top_n)?,
    };
    Ok(r)
}

fn parse_deltas(spec: &str) -> anyhow::Result<Vec<f64>> {
    if let Some((lo, rest)) = spec.split_once(':') {
        let (hi, count) = rest
            .split_once(':')
            .ok_or_else(|| anyhow!("expected lo:hi:count in `{spec}`"))?;
        let lo: f64 = lo.parse()?;
        let hi: f64 = hi.parse()?;
        let count: usize = count.parse()?;
        if count < 1 || !(hi > lo) {
            bail!("bad delta range `{spec}`");
        }
        if count == 1 {
            return Ok(vec![lo]);
        }
        return Ok((0..count)
            .map(|i| lo + i as f64 * (hi - lo) / (count - 1) as f64)
            .collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(Into::into))
        .collect()
}

fn cmd_predict(args: PredictArgs) -> anyhow::Result<()> {
    let deltas = parse_deltas(&args.deltas)?;
    let mode = match args.mode {
        ModeKind::Stationary => CurveMode::Stationary,
        ModeKind::Transient => CurveMode::Transient {
            window: args.window,
        },
    };
    let policy = if args.cap_at_window {
        TransientPolicy::CapAtWindow
    } else {
        TransientPolicy::Strict
    };
    let curve = match args.model {
        ModelKind::IrmM => {
            let path = args
                .mixing
                .as_ref()
                .ok_or_else(|| anyhow!("--model irm-m requires --mixing"))?;
            let f = MixingDistribution::from_json(&fs::read_to_string(path)?)?;
            let k_model = args.k_model.unwrap_or(args.k_reference);
            hr_curve_model(
                ModelSource::Irmm(&f),
                &deltas,
                mode,
                policy,
                k_model,
                args.k_reference,
            )?
        }
        ModelKind::Irm => {
            let path = args
                .counts
                .as_ref()
                .ok_or_else(|| anyhow!("--model irm requires --counts"))?;
            let dc = DocumentCounts::from_json(&fs::read_to_string(path)?)?;
            let lambdas: Vec<f64> = dc.counts.values().map(|&c| c as f64).collect();
            let pv = PopularityVector::new(lambdas)?;
            let k_model = args.k_model.unwrap_or(pv.len() as f64);
            hr_curve_model(
                ModelSource::Irm(&pv),
                &deltas,
                mode,
                policy,
                k_model,
                args.k_reference,
            )?
        }
    };
    for p in &curve.points {
        println!("delta {:.6} -> hit ratio {:.6}", p.delta, p.hit_ratio);
    }
    write_curve(&args.out, &curve)?;
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let trace = read_trace(&args.trace, args.format)?;
    let capacities: Vec<usize> = args
        .capacities
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .context("parsing --capacities")?;
    let distinct = counts_from_trace(&trace).observed_docs() as f64;
    let k_ref = args.k_reference.unwrap_or(distinct);
    let curve = hr_curve_sim(&trace, &capacities, k_ref)?;
    for (cap, p) in capacities.iter().zip(&curve.points) {
        println!("capacity {cap} (delta {:.6}) -> hit ratio {:.6}", p.delta, p.hit_ratio);
    }
    write_curve(&args.out, &curve)?;
    if let Some(path) = &args.results_out {
        let descriptor = args.trace.display().to_string();
        let records: Vec<serde_json::Value> = capacities
            .iter()
            .map(|&cap| {
                let r = lru_simulate(&trace, cap)?;
                Ok(serde_json::json!({
                    "capacity": cap,
                    "hits": r.hits,
                    "misses": r.misses,
                    "hit_ratio": r.hit_ratio(),
                    "trace": descriptor,
                }))
            })
            .collect::<anyhow::Result<_>>()?;
        let doc = serde_json::json!({ "schema_version": 1, "results": records });
        write_file(path, &serde_json::to_string_pretty(&doc)?)?;
    }
    Ok(())
}

fn read_curve(path: &Path) -> anyhow::Result<HitRatioCurve> {
    let body = fs::read_to_string(path)?;
    let meta_path = path.with_extension("meta.json");
    let (mode, source, k_ref) = match fs::read_to_string(&meta_path) {
        Ok(meta) => {
            #[derive(serde::Deserialize)]
            struct Meta {
                k_reference: f64,
                #[serde(flatten)]
                mode: CurveMode,
                source: CurveSource,
            }
            let m: Meta = serde_json::from_str(&meta)?;
            (m.mode, m.source, m.k_reference)
        }
        Err(_) => (CurveMode::Stationary, CurveSource::Simulation, 1.0),
    };
    Ok(HitRatioCurve::from_csv(&body, mode, source, k_ref)?)
}

fn cmd_compare(args: CompareArgs) -> anyhow::Result<()> {
    let report = match args.kind {
        CompareKind::Hr => {
            let reference = read_curve(&args.reference)?;
            let estimate = read_curve(&args.estimate)?;
            compare_hr(&reference, &estimate)?
        }
        CompareKind::Pmf => {
            let est =
                MixingDistribution::from_json(&fs::read_to_string(&args.estimate)?)?;
            let ref_text = fs::read_to_string(&args.reference)?;
            // the reference may be a mixing or a histogram
            if let Ok(f) = MixingDistribution::from_json(&ref_text) {
                let j_max = args
                    .j_max
                    .ok_or_else(|| anyhow!("--kind pmf with a mixing reference requires --j-max"))?;
                compare_mixture(&PmfReference::Mixing(&f), &est, j_max)?
            } else {
                let h = CountHistogram::from_json(&ref_text)?;
                let j_max = args.j_max.unwrap_or_else(|| h.max_count());
                compare_mixture(&PmfReference::Empirical(&h), &est, j_max)?
            }
        }
    };
    println!(
        "compare: MARE {:.6} over {} points",
        report.mare,
        report.per_point.len()
    );
    write_file(&args.out, &report.to_json())?;
    Ok(())
}

// --- reproduce ---------------------------------------------------------------

mod manifest {
    use serde::Deserialize;

    pub const RAW: &str = include_str!("../manifests/experiments.json");

    #[derive(Deserialize)]
    pub struct Manifest {
        pub experiments: Experiments,
    }

    #[derive(Deserialize)]
    pub struct Experiments {
        #[serde(rename = "delta-catalog")]
        pub delta_catalog: Experiment,
        #[serde(rename = "pareto-fit")]
        pub pareto_fit: Experiment,
        #[serde(rename = "zipf-baseline")]
        pub zipf_baseline: Experiment,
        #[serde(rename = "hr-prt")]
        pub hr_prt: Experiment,
        #[serde(rename = "hr-delta")]
        pub hr_delta: Experiment,
    }

    #[derive(Deserialize)]
    pub struct Experiment {
        pub alpha: Option<f64>,
        pub xm: Option<f64>,
        pub lambda: Option<f64>,
        pub delta_grid: Option<DeltaGrid>,
        pub desk: Setting,
        pub paper: Setting,
    }

    #[derive(Deserialize, Clone, Copy)]
    pub struct DeltaGrid {
        pub lo: f64,
        pub hi: f64,
        pub points: usize,
    }

    #[derive(Deserialize)]
    pub struct Setting {
        pub n_docs: u64,
        pub seeds: Vec<u64>,
        pub top_n: Option<usize>,
    }

    pub fn load() -> Manifest {
        serde_json::from_str(RAW).expect("embedded manifest parses")
    }
}

fn cmd_reproduce(args: ReproduceArgs) -> anyhow::Result<()> {
    fs::create_dir_all(&args.out_dir)?;
    write_file(&args.out_dir.join("experiments.json"), manifest::RAW)?;
    let m = manifest::load();
    match args.experiment {
        ExperimentKind::DeltaCatalog => reproduce_delta_catalog(&m, args.scale, &args.out_dir),
        ExperimentKind::ParetoFit => reproduce_pareto_fit(&m, args.scale, &args.out_dir),
        ExperimentKind::ZipfBaseline => reproduce_zipf(&m, args.scale, &args.out_dir),
        ExperimentKind::HrPrt => reproduce_hr_prt(&m, args.scale, &args.out_dir),
        ExperimentKind::HrDelta => reproduce_hr_delta(&m, args.scale, &args.out_dir),
    }
}

fn setting(exp: &manifest::Experiment, scale: ScaleKind) -> &manifest::Setting {
    match scale {
        ScaleKind::Desk => &exp.desk,
        ScaleKind::Paper => &exp.paper,
    }
}

fn reproduce_delta_catalog(
    m: &manifest::Manifest,
    scale: ScaleKind,
    out: &Path,
) -> anyhow::Result<()> {
    let exp = &m.experiments.delta_catalog;
    let s = setting(exp, scale);
    let lambda = exp.lambda.unwrap();
    let mut rows = Vec::new();
    for &seed in &s.seeds {
        let (_, dc) = synth_delta(s.n_docs, lambda, seed)?;
        let h = histogram_from_counts(&dc);
        let r = np_ml_estimate(&h, &GridSpec::default(), &SolverConfig::default())?;
        let err = (r.catalog_estimate - s.n_docs as f64).abs() / s.n_docs as f64;
        println!(
            "delta-catalog seed {seed}: observed {}, estimate {:.1}, relative error {:.4}",
            h.observed_docs(),
            r.catalog_estimate,
            err
        );
        write_file(&out.join(format!("estimate-seed{seed}.json")), &r.to_json())?;
        rows.push(serde_json::json!({
            "seed": seed,
            "observed_docs": h.observed_docs(),
            "catalog_estimate": r.catalog_estimate,
            "relative_error": err,
        }));
    }
    let avg = rows
        .iter()
        .map(|r| r["relative_error"].as_f64().unwrap())
        .sum::<f64>()
        / rows.len() as f64;
    println!("delta-catalog: average relative error {avg:.4}");
    let report = serde_json::json!({
        "schema_version": 1,
        "experiment": "delta-catalog",
        "catalog_size": s.n_docs,
        "runs": rows,
        "average_relative_error": avg,
    });
    write_file(&out.join("report.json"), &serde_json::to_string_pretty(&report)?)?;
    Ok(())
}

fn reproduce_pareto_fit(
    m: &manifest::Manifest,
    scale: ScaleKind,
    out: &Path,
) -> anyhow::Result<()> {
    let exp = &m.experiments.pareto_fit;
    let s = setting(exp, scale);
    let seed = s.seeds[0];
    let (_, dc) = synth_pareto(s.n_docs, exp.alpha.unwrap(), exp.xm.unwrap(), seed)?;
    let h = histogram_from_counts(&dc);
    let r = pareto_ml_estimate(&h, &SolverConfig::default())?;
    let (alpha, xm) = match r.mixing {
        MixingDistribution::Pareto(p) => (p.alpha, p.xm),
        _ => unreachable!(),
    };
    println!(
        "pareto-fit (n = {}): alpha {:.4}, xm {:.5} (generator: {}, {})",
        s.n_docs,
        alpha,
        xm,
        exp.alpha.unwrap(),
        exp.xm.unwrap()
    );
    write_file(&out.join("estimate.json"), &r.to_json())?;
    let report = serde_json::json!({
        "schema_version": 1,
        "experiment": "pareto-fit",
        "n_docs": s.n_docs,
        "seed": seed,
        "alpha": alpha,
        "xm": xm,
        "converged": r.converged,
    });
    write_file(&out.join("report.json"), &serde_json::to_string_pretty(&report)?)?;
    Ok(())
}

fn reproduce_zipf(m: &manifest::Manifest, scale: ScaleKind, out: &Path) -> anyhow::Result<()> {
    let exp = &m.experiments.zipf_baseline;
    let s = setting(exp, scale);
    let seed = s.seeds[0];
    let (_, dc) = synth_pareto(s.n_docs, exp.alpha.unwrap(), exp.xm.unwrap(), seed)?;
    let h = histogram_from_counts(&dc);
    let zipf = zipf_fit_from_histogram(&h, s.top_n.unwrap())?;
    let ml = pareto_ml_estimate(&h, &SolverConfig::default())?;
    let alpha_z = match zipf.mixing {
        MixingDistribution::Pareto(p) => p.alpha,
        _ => unreachable!(),
    };
    let alpha_ml = match ml.mixing {
        MixingDistribution::Pareto(p) => p.alpha,
        _ => unreachable!(),
    };
    println!(
        "zipf-baseline (top {}): log-log alpha {:.4} vs ML alpha {:.4} (truth {})",
        s.top_n.unwrap(),
        alpha_z,
        alpha_ml,
        exp.alpha.unwrap()
    );
    write_file(&out.join("zipf.json"), &zipf.to_json())?;
    write_file(&out.join("pareto-ml.json"), &ml.to_json())?;
    let report = serde_json::json!({
        "schema_version": 1,
        "experiment": "zipf-baseline",
        "n_docs": s.n_docs,
        "seed": seed,
        "top_n": s.top_n.unwrap(),
        "alpha_zipf": alpha_z,
        "alpha_ml": alpha_ml,
    });
    write_file(&out.join("report.json"), &serde_json::to_string_pretty(&report)?)?;
    Ok(())
}

fn hr_experiment(
    dc: &DocumentCounts,
    k_gt: f64,
    grid: manifest::DeltaGrid,
    seed: u64,
    out: &Path,
    label: &str,
) -> anyhow::Result<()> {
    let h = histogram_from_counts(dc);
    let np = np_ml_estimate(&h, &GridSpec::default(), &SolverConfig::default())?;
    let trace = trace_from_counts(dc, seed.wrapping_add(1));

    let raw: Vec<f64> = (0..grid.points)
        .map(|i| grid.lo + i as f64 * (grid.hi - grid.lo) / (grid.points - 1) as f64)
        .collect();
    let caps: Vec<usize> = raw.iter().map(|d| (d * k_gt).round() as usize).collect();
    let deltas: Vec<f64> = caps.iter().map(|&c| c as f64 / k_gt).collect();

    let sim = hr_curve_sim(&trace, &caps, k_gt)?;
    let np_curve = hr_curve_model(
        ModelSource::Irmm(&np.mixing),
        &deltas,
        CurveMode::Transient { window: 1.0 },
        TransientPolicy::CapAtWindow,
        np.catalog_estimate,
        k_gt,
    )?;
    let lambdas: Vec<f64> = dc.counts.values().map(|&c| c as f64).collect();
    let pv = PopularityVector::new(lambdas)?;
    let naive_curve = hr_curve_model(
        ModelSource::Irm(&pv),
        &deltas,
        CurveMode::Transient { window: 1.0 },
        TransientPolicy::CapAtWindow,
        pv.len() as f64,
        k_gt,
    )?;

    write_curve(&out.join("simulation.csv"), &sim)?;
    write_curve(&out.join("np-model.csv"), &np_curve)?;
    write_curve(&out.join("naive-model.csv"), &naive_curve)?;
    write_file(&out.join("np-estimate.json"), &np.to_json())?;

    let rep_np = compare_hr(&sim, &np_curve)?
        .with_metadata("estimate_method", "np".into())
        .with_metadata("seed", seed.to_string());
    let rep_naive = compare_hr(&sim, &naive_curve)?
        .with_metadata("estimate_method", "naive".into())
        .with_metadata("seed", seed.to_string());
    println!(
        "{label}: NP hit-ratio MARE {:.5}, naive {:.4} ({:.0}x)",
        rep_np.mare,
        rep_naive.mare,
        rep_naive.mare / rep_np.mare
    );
    write_file(&out.join("compare-np.json"), &rep_np.to_json())?;
    write_file(&out.join("compare-naive.json"), &rep_naive.to_json())?;
    Ok(())
}

fn reproduce_hr_prt(m: &manifest::Manifest, scale: ScaleKind, out: &Path) -> anyhow::Result<()> {
    let exp = &m.experiments.hr_prt;
    let s = setting(exp, scale);
    let seed = s.seeds[0];
    let (_, dc) = synth_pareto(s.n_docs, exp.alpha.unwrap(), exp.xm.unwrap(), seed)?;
    hr_experiment(&dc, s.n_docs as f64, exp.delta_grid.unwrap(), seed, out, "hr-prt")
}

fn reproduce_hr_delta(m: &manifest::Manifest, scale: ScaleKind, out: &Path) -> anyhow::Result<()> {
    let exp = &m.experiments.hr_delta;
    let s = setting(exp, scale);
    let seed = s.seeds[0];
    let (_, dc) = synth_delta(s.n_docs, exp.lambda.unwrap(), seed)?;
    hr_experiment(&dc, s.n_docs as f64, exp.delta_grid.unwrap(), seed, out, "hr-delta")
}
