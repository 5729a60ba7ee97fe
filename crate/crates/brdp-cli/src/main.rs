//! `brdp` — calibrate, allocate, sample, compose, and run experiments for
//! budget-recycled differentially private release.
//!
//! Every subcommand prints one JSON document (or `key,value` CSV rows) to
//! stdout or `--out`; failures print `{"error": <category>, "message": …}`
//! to stderr and exit nonzero. Runs are deterministic under a fixed seed.

use brdp_cli::{
    ingest_csv, render_report, run_experiment, ExperimentConfig, HarnessError, MechanismChoice,
    ReportFormat, Result,
};
use brdp_core::{
    allocate, calibrate_kernel, epsilon_at_delta, find_p, plan_acceptance, plan_at_p,
    BrdpMechanism, BudgetPair, ComposedBrdpProfile, ComposedKernelProfile, ErrorBound, KernelKind,
    ObjectiveMode, PopulationModel, QueryKind, DEFAULT_SEARCH_TOL,
};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use serde_json::{json, Map, Value};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

// ---------------------------------------------------------------------------
// Argument surface
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "brdp",
    version,
    about = "Budget-recycled differentially private release toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate a noise kernel to a privacy budget.
    Calibrate(CalibrateArgs),
    /// Split a total budget into kernel budget and recycling rate.
    Allocate(AllocateArgs),
    /// Draw releases from a recycled mechanism.
    Sample(SampleArgs),
    /// Report analytic acceptance and expected rounds.
    AcceptRate(AcceptRateArgs),
    /// Account the privacy cost of repeated releases.
    Compose(ComposeArgs),
    /// Optimize the sampling rate of a subsampled release.
    SubsampleOpt(SubsampleOptArgs),
    /// Run a full experiment over a CSV dataset.
    Experiment(ExperimentArgs),
}

/// Privacy budget and kernel family shared by the planning subcommands.
#[derive(Args)]
struct BudgetArgs {
    /// Noise kernel family (gaussian | laplace).
    #[arg(long, value_parser = parse_kernel)]
    kernel: KernelKind,
    /// Total privacy budget ε.
    #[arg(long)]
    epsilon: f64,
    /// Total failure probability δ.
    #[arg(long, default_value_t = 1e-5)]
    delta: f64,
    /// Query sensitivity Δ_f.
    #[arg(long, default_value_t = 1.0)]
    sensitivity: f64,
}

/// Output destination and format shared by every subcommand.
#[derive(Args)]
struct OutputArgs {
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format (json | csv).
    #[arg(long, default_value = "json", value_parser = parse_format)]
    format: ReportFormat,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    budget: BudgetArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct AllocateArgs {
    #[command(flatten)]
    budget: BudgetArgs,
    /// Soft error bound θ.
    #[arg(long)]
    theta: f64,
    /// Search tolerance.
    #[arg(long, default_value_t = DEFAULT_SEARCH_TOL)]
    tol: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    budget: BudgetArgs,
    /// Soft error bound θ.
    #[arg(long)]
    theta: f64,
    /// Fixed recycling rate; when omitted the budget split is optimized.
    #[arg(long)]
    q: Option<f64>,
    /// True answer to privatize.
    #[arg(long, default_value_t = 0.0)]
    answer: f64,
    /// Number of releases to draw.
    #[arg(long, default_value_t = 1)]
    trials: u32,
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Search tolerance.
    #[arg(long, default_value_t = DEFAULT_SEARCH_TOL)]
    tol: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct AcceptRateArgs {
    #[command(flatten)]
    budget: BudgetArgs,
    /// Soft error bound θ.
    #[arg(long)]
    theta: f64,
    /// Fixed recycling rate; when omitted the budget split is optimized.
    #[arg(long)]
    q: Option<f64>,
    /// Search tolerance.
    #[arg(long, default_value_t = DEFAULT_SEARCH_TOL)]
    tol: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ComposeArgs {
    #[command(flatten)]
    budget: BudgetArgs,
    /// Soft error bound θ (recycled mechanism only).
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    /// Fixed recycling rate; when omitted the budget split is optimized.
    #[arg(long)]
    q: Option<f64>,
    /// Release pipeline to compose (dp | brdp).
    #[arg(long, default_value = "brdp", value_parser = parse_mechanism)]
    mechanism: MechanismChoice,
    /// Number of composed releases T.
    #[arg(long)]
    rounds: u32,
    /// δ at which the composed ε is read off (defaults to --delta).
    #[arg(long)]
    target_delta: Option<f64>,
    /// Search tolerance.
    #[arg(long, default_value_t = DEFAULT_SEARCH_TOL)]
    tol: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SubsampleOptArgs {
    #[command(flatten)]
    budget: BudgetArgs,
    /// Soft error bound θ.
    #[arg(long)]
    theta: f64,
    /// Query family (sum | average | count).
    #[arg(long, value_parser = parse_query)]
    query: QueryKind,
    /// Population size |X|.
    #[arg(long)]
    size: u64,
    /// Population mean μ.
    #[arg(long, default_value_t = 0.0)]
    mu: f64,
    /// Population standard deviation σ_x.
    #[arg(long)]
    sigma_x: f64,
    /// Predicate hit rate p_c (Count queries).
    #[arg(long, default_value_t = 0.5)]
    p_c: f64,
    /// Fixed sampling rate; when omitted the rate is optimized.
    #[arg(long)]
    sampling_rate: Option<f64>,
    /// Search tolerance.
    #[arg(long, default_value_t = DEFAULT_SEARCH_TOL)]
    tol: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Release pipeline (dp | brdp | subsampled).
    #[arg(long, value_parser = parse_mechanism)]
    mechanism: Option<MechanismChoice>,
    /// Noise kernel family (gaussian | laplace).
    #[arg(long, value_parser = parse_kernel)]
    kernel: Option<KernelKind>,
    /// Total privacy budget ε.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Total failure probability δ.
    #[arg(long)]
    delta: Option<f64>,
    /// Soft error bound θ.
    #[arg(long)]
    theta: Option<f64>,
    /// Query family (sum | average | count).
    #[arg(long, value_parser = parse_query)]
    query: Option<QueryKind>,
    /// Releases per partition.
    #[arg(long)]
    trials: Option<u32>,
    /// Number of disjoint dataset partitions.
    #[arg(long)]
    partitions: Option<u32>,
    /// Master random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Search tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Fixed recycling rate override.
    #[arg(long)]
    q: Option<f64>,
    /// Fixed Bernoulli sampling rate (subsampled pipeline).
    #[arg(long)]
    sampling_rate: Option<f64>,
    /// Target δ for the composed-leakage figure.
    #[arg(long)]
    composed_delta: Option<f64>,
    /// Dataset CSV path.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Identifier column name.
    #[arg(long)]
    id_column: Option<String>,
    /// Value column name.
    #[arg(long)]
    value_column: Option<String>,
    /// Lower clipping bound.
    #[arg(long)]
    clip_lo: Option<f64>,
    /// Upper clipping bound.
    #[arg(long)]
    clip_hi: Option<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

// ---------------------------------------------------------------------------
// Flag parsers
// ---------------------------------------------------------------------------

fn parse_kernel(s: &str) -> std::result::Result<KernelKind, String> {
    match s {
        "gaussian" => Ok(KernelKind::Gaussian),
        "laplace" | "laplacian" => Ok(KernelKind::Laplacian),
        other => Err(format!("unknown kernel {other:?} (expected gaussian or laplace)")),
    }
}

fn parse_query(s: &str) -> std::result::Result<QueryKind, String> {
    match s {
        "sum" => Ok(QueryKind::Sum),
        "average" => Ok(QueryKind::Average),
        "count" => Ok(QueryKind::Count),
        other => Err(format!(
            "unknown query {other:?} (expected sum, average, or count)"
        )),
    }
}

fn parse_mechanism(s: &str) -> std::result::Result<MechanismChoice, String> {
    match s {
        "dp" => Ok(MechanismChoice::Dp),
        "brdp" => Ok(MechanismChoice::Brdp),
        "subsampled" => Ok(MechanismChoice::Subsampled),
        other => Err(format!(
            "unknown mechanism {other:?} (expected dp, brdp, or subsampled)"
        )),
    }
}

fn parse_format(s: &str) -> std::result::Result<ReportFormat, String> {
    s.parse().map_err(|e: HarnessError| e.to_string())
}

// ---------------------------------------------------------------------------
// Output plumbing
// ---------------------------------------------------------------------------

/// Serialize a small result document in the requested format: pretty JSON,
/// or flattened dotted `key,value` CSV rows.
fn render_value<T: Serialize>(value: &T, format: ReportFormat) -> Result<String> {
    let value = serde_json::to_value(value)?;
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(&value)?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["key", "value"])?;
            let mut rows = Vec::new();
            flatten_json("", &value, &mut rows);
            for (key, cell) in rows {
                w.write_record([key.as_str(), cell.as_str()])?;
            }
            let bytes = w
                .into_inner()
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv writer emits UTF-8"))
        }
    }
}

/// Flatten nested JSON into dotted keys; arrays index as `key.0`, `key.1`…
fn flatten_json(prefix: &str, value: &Value, rows: &mut Vec<(String, String)>) {
    let join = |key: &str| {
        if prefix.is_empty() {
            key.to_string()
        } else {
            format!("{prefix}.{key}")
        }
    };
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                flatten_json(&join(k), v, rows);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten_json(&join(&i.to_string()), v, rows);
            }
        }
        Value::Null => rows.push((prefix.to_string(), String::new())),
        Value::String(s) => rows.push((prefix.to_string(), s.clone())),
        other => rows.push((prefix.to_string(), other.to_string())),
    }
}

fn write_output(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Mechanism resolution shared by sample / accept-rate / compose
// ---------------------------------------------------------------------------

/// Resolve a recycled mechanism from a budget: a fixed `q` calibrates the
/// kernel at the full budget; otherwise the split is optimized.
fn resolve_mechanism(
    budget: &BudgetArgs,
    theta: f64,
    q: Option<f64>,
    tol: f64,
) -> Result<BrdpMechanism> {
    let total = BudgetPair::new(budget.epsilon, budget.delta)?;
    let bound = ErrorBound::new(theta)?;
    let (kernel_budget, q) = match q {
        Some(q) => (total, q),
        None => {
            let alloc = allocate(
                budget.kernel,
                &total,
                budget.sensitivity,
                theta,
                tol,
                ObjectiveMode::Default,
            )?;
            (BudgetPair::new(alloc.epsilon_y, alloc.delta_y)?, alloc.q)
        }
    };
    let kernel = calibrate_kernel(budget.kernel, &kernel_budget, budget.sensitivity)?;
    Ok(BrdpMechanism::new(kernel, q, bound)?)
}

/// Audit block attached to every planning subcommand's output.
fn mechanism_summary(mech: &BrdpMechanism) -> Value {
    let sw = mech.shift_params();
    json!({
        "kernel": mech.kernel,
        "q": mech.q,
        "theta": mech.bound.theta,
        "w": sw.w,
        "l": sw.l,
        "analytic_acceptance": mech.acceptance_rate(),
        "expected_rounds": mech.expected_rounds(),
    })
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_calibrate(args: &CalibrateArgs) -> Result<String> {
    let total = BudgetPair::new(args.budget.epsilon, args.budget.delta)?;
    let kernel = calibrate_kernel(args.budget.kernel, &total, args.budget.sensitivity)?;
    render_value(&kernel, args.output.format)
}

fn cmd_allocate(args: &AllocateArgs) -> Result<String> {
    let total = BudgetPair::new(args.budget.epsilon, args.budget.delta)?;
    let alloc = allocate(
        args.budget.kernel,
        &total,
        args.budget.sensitivity,
        args.theta,
        args.tol,
        ObjectiveMode::Default,
    )?;
    let kernel = calibrate_kernel(
        args.budget.kernel,
        &BudgetPair::new(alloc.epsilon_y, alloc.delta_y)?,
        args.budget.sensitivity,
    )?;
    let mech = BrdpMechanism::new(kernel, alloc.q, ErrorBound::new(args.theta)?)?;
    let doc = json!({
        "allocation": alloc,
        "mechanism": mechanism_summary(&mech),
    });
    render_value(&doc, args.output.format)
}

fn cmd_sample(args: &SampleArgs) -> Result<String> {
    let mech = resolve_mechanism(&args.budget, args.theta, args.q, args.tol)?;
    let mut outputs = Vec::with_capacity(args.trials as usize);
    let mut rounds = Vec::with_capacity(args.trials as usize);
    let mut hits = 0u64;
    for trial in 0..args.trials {
        let mut rng = ChaCha12Rng::seed_from_u64(args.seed);
        rng.set_stream(u64::from(trial));
        let (value, n_rounds) = mech.sample(args.answer, &mut rng)?;
        if (value - args.answer).abs() <= args.theta {
            hits += 1;
        }
        outputs.push(value);
        rounds.push(n_rounds);
    }
    let doc = json!({
        "answer": args.answer,
        "seed": args.seed,
        "trials": args.trials,
        "empirical_acceptance": hits as f64 / f64::from(args.trials),
        "mechanism": mechanism_summary(&mech),
        "outputs": outputs,
        "rounds": rounds,
    });
    render_value(&doc, args.output.format)
}

fn cmd_accept_rate(args: &AcceptRateArgs) -> Result<String> {
    let mech = resolve_mechanism(&args.budget, args.theta, args.q, args.tol)?;
    render_value(&mechanism_summary(&mech), args.output.format)
}

fn cmd_compose(args: &ComposeArgs) -> Result<String> {
    let target_delta = args.target_delta.unwrap_or(args.budget.delta);
    let (epsilon, mech_summary) = match args.mechanism {
        MechanismChoice::Dp => {
            let total = BudgetPair::new(args.budget.epsilon, args.budget.delta)?;
            let kernel = calibrate_kernel(args.budget.kernel, &total, args.budget.sensitivity)?;
            let profile = ComposedKernelProfile::new(&kernel, args.rounds)?;
            let eps = epsilon_at_delta(|e| profile.delta_at(e), target_delta, 1e-6)?;
            (eps, json!({ "kernel": kernel, "q": 0.0 }))
        }
        MechanismChoice::Brdp => {
            let mech = resolve_mechanism(&args.budget, args.theta, args.q, args.tol)?;
            let profile = ComposedBrdpProfile::new(&mech, args.rounds)?;
            let eps = epsilon_at_delta(|e| profile.delta_at(e), target_delta, 1e-6)?;
            (eps, mechanism_summary(&mech))
        }
        MechanismChoice::Subsampled => {
            return Err(HarnessError::Config(
                "compose supports mechanisms dp and brdp".into(),
            ))
        }
    };
    let doc = json!({
        "rounds": args.rounds,
        "target_delta": target_delta,
        "composed_epsilon": epsilon,
        "mechanism": mech_summary,
    });
    render_value(&doc, args.output.format)
}

fn cmd_subsample_opt(args: &SubsampleOptArgs) -> Result<String> {
    let total = BudgetPair::new(args.budget.epsilon, args.budget.delta)?;
    let pop = PopulationModel::new(args.size, args.mu, args.sigma_x, args.p_c)?;
    let plan = match args.sampling_rate {
        Some(p) => plan_at_p(
            args.budget.kernel,
            p,
            &total,
            args.budget.sensitivity,
            args.theta,
            args.query,
            &pop,
            args.tol,
            ObjectiveMode::Default,
        )?,
        None => find_p(
            args.budget.kernel,
            &total,
            args.budget.sensitivity,
            args.theta,
            args.query,
            &pop,
            args.tol,
            ObjectiveMode::Default,
        )?,
    };
    let acceptance = plan_acceptance(&plan)?;
    let doc = json!({
        "plan": plan,
        "analytic_acceptance": acceptance,
    });
    render_value(&doc, args.output.format)
}

// ---------------------------------------------------------------------------
// Experiment config merging
// ---------------------------------------------------------------------------

/// Insert `value` at `key` when the flag was given (flags beat the config).
fn override_field<T: Serialize>(map: &mut Map<String, Value>, key: &str, flag: &Option<T>) {
    if let Some(v) = flag {
        map.insert(
            key.to_string(),
            serde_json::to_value(v).expect("flag values serialize"),
        );
    }
}

/// Merge the optional config file with flag overrides into a validated
/// experiment config.
fn merge_experiment_config(args: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut map: Map<String, Value> = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            match serde_json::from_str(&text)? {
                Value::Object(map) => map,
                _ => {
                    return Err(HarnessError::Config(
                        "experiment config must be a JSON object".into(),
                    ))
                }
            }
        }
        None => Map::new(),
    };
    override_field(&mut map, "mechanism", &args.mechanism);
    override_field(&mut map, "kernel", &args.kernel);
    override_field(&mut map, "epsilon", &args.epsilon);
    override_field(&mut map, "delta", &args.delta);
    override_field(&mut map, "theta", &args.theta);
    override_field(&mut map, "query", &args.query);
    override_field(&mut map, "trials", &args.trials);
    override_field(&mut map, "partitions", &args.partitions);
    override_field(&mut map, "seed", &args.seed);
    override_field(&mut map, "tol", &args.tol);
    override_field(&mut map, "q_override", &args.q);
    override_field(&mut map, "sampling_rate", &args.sampling_rate);
    override_field(&mut map, "composed_delta", &args.composed_delta);

    // The data block merges field-wise so a config's dataset can be
    // retargeted (e.g. a different path) without restating the schema.
    let mut data = match map.remove("data") {
        Some(Value::Object(m)) => m,
        Some(Value::Null) | None => Map::new(),
        Some(_) => {
            return Err(HarnessError::Config(
                "config field \"data\" must be an object".into(),
            ))
        }
    };
    override_field(
        &mut data,
        "path",
        &args.data.as_ref().map(|p| p.display().to_string()),
    );
    override_field(&mut data, "id_column", &args.id_column);
    override_field(&mut data, "value_column", &args.value_column);
    override_field(&mut data, "clip_lo", &args.clip_lo);
    override_field(&mut data, "clip_hi", &args.clip_hi);
    if !data.is_empty() {
        map.insert("data".to_string(), Value::Object(data));
    }

    let config: ExperimentConfig = serde_json::from_value(Value::Object(map))
        .map_err(|e| HarnessError::Config(format!("invalid experiment config: {e}")))?;
    Ok(config)
}

fn cmd_experiment(args: &ExperimentArgs) -> Result<String> {
    let config = merge_experiment_config(args)?;
    let data = config.data.clone().ok_or_else(|| {
        HarnessError::Config(
            "experiment requires a dataset (config \"data\" block or --data/--id-column/\
             --value-column/--clip-lo/--clip-hi)"
                .into(),
        )
    })?;
    let table = ingest_csv(
        Path::new(&data.path),
        &data.id_column,
        &data.value_column,
        data.clip_lo,
        data.clip_hi,
    )?;
    let start = Instant::now();
    let report = run_experiment(&config, &table)?;
    // Runtime goes to stderr only: the report must be byte-identical across
    // runs of the same config + seed.
    eprintln!("runtime_seconds: {:.3}", start.elapsed().as_secs_f64());
    render_report(&report, args.output.format)
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

fn run(cli: &Cli) -> Result<()> {
    let (text, out) = match &cli.command {
        Command::Calibrate(a) => (cmd_calibrate(a)?, &a.output),
        Command::Allocate(a) => (cmd_allocate(a)?, &a.output),
        Command::Sample(a) => (cmd_sample(a)?, &a.output),
        Command::AcceptRate(a) => (cmd_accept_rate(a)?, &a.output),
        Command::Compose(a) => (cmd_compose(a)?, &a.output),
        Command::SubsampleOpt(a) => (cmd_subsample_opt(a)?, &a.output),
        Command::Experiment(a) => (cmd_experiment(a)?, &a.output),
    };
    write_output(&text, out.out.as_deref())
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(&cli) {
        let doc = json!({ "error": err.category(), "message": err.to_string() });
        eprintln!("{doc}");
        std::process::exit(1);
    }
}
