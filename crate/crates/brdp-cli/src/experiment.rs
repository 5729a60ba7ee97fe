//! Experiment engine: resolve a mechanism from a config, run repeated
//! queries over a (possibly partitioned) dataset, and measure acceptance.
//!
//! Reproducibility contract: a fixed config + seed yields bit-identical
//! results. Every (partition, trial) pair draws from its own counter-derived
//! random sub-stream of the master seed, so trials are order-independent
//! and could run in parallel without changing a single bit.

use crate::dataset::DatasetTable;
use crate::error::{HarnessError, Result};
use crate::report::{AcceptanceReport, ResolvedParams};
use brdp_core::{
    allocate, calibrate_kernel, epsilon_at_delta, find_p, plan_acceptance, plan_at_p,
    BrdpMechanism, BudgetPair, ComposedBrdpProfile, ComposedKernelProfile, ErrorBound, KernelKind,
    ObjectiveMode, PopulationModel, QueryKind, MAX_SAMPLE_ROUNDS,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// Tolerance used when inverting composed profiles for the leakage report.
const COMPOSE_TOL: f64 = 1e-6;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Which release pipeline an experiment exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MechanismChoice {
    /// Plain kernel noise at the full budget (no recycling).
    Dp,
    /// Budget-recycled release (kernel split + recycling rate).
    Brdp,
    /// Budget-recycled release over a Bernoulli subsample.
    Subsampled,
}

/// Membership window 𝒞 for Count queries: x 𝜖 𝒞 ⇔ lo < x ≤ hi, with
/// either side omitted meaning unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct CountPredicate {
    /// Exclusive lower bound.
    #[serde(default)]
    pub lo: Option<f64>,
    /// Inclusive upper bound.
    #[serde(default)]
    pub hi: Option<f64>,
}

impl CountPredicate {
    /// Membership test.
    #[must_use]
    pub fn contains(&self, x: f64) -> bool {
        self.lo.is_none_or(|lo| x > lo) && self.hi.is_none_or(|hi| x <= hi)
    }
}

/// Dataset source block of an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    /// CSV file path.
    pub path: String,
    /// Identifier column (must exist; contents unread).
    pub id_column: String,
    /// Value column to ingest.
    pub value_column: String,
    /// Lower clipping bound.
    pub clip_lo: f64,
    /// Upper clipping bound.
    pub clip_hi: f64,
}

fn default_delta() -> f64 {
    1e-5
}
fn default_trials() -> u32 {
    1000
}
fn default_partitions() -> u32 {
    1
}
fn default_tol() -> f64 {
    brdp_core::DEFAULT_SEARCH_TOL
}
fn default_true() -> bool {
    true
}

/// Full experiment protocol: mechanism, budget, query, trial plan, seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Release pipeline under test.
    pub mechanism: MechanismChoice,
    /// Noise kernel family.
    pub kernel: KernelKind,
    /// Total privacy budget ε.
    pub epsilon: f64,
    /// Total failure probability δ (defaults to 1e−5).
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Soft error bound θ.
    pub theta: f64,
    /// Query family.
    pub query: QueryKind,
    /// Membership window for Count queries (counts everything if absent).
    #[serde(default)]
    pub predicate: Option<CountPredicate>,
    /// Number of repeated releases per partition.
    #[serde(default = "default_trials")]
    pub trials: u32,
    /// Number of disjoint dataset partitions queried side by side.
    #[serde(default = "default_partitions")]
    pub partitions: u32,
    /// Master random seed.
    #[serde(default)]
    pub seed: u64,
    /// Search tolerance for budget/rate optimization.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Fixed recycling rate; skips allocation and calibrates the kernel at
    /// the full budget (q = 0 reproduces the plain-DP release exactly).
    #[serde(default)]
    pub q_override: Option<f64>,
    /// Fixed Bernoulli sampling rate for the subsampled pipeline; when
    /// absent the rate is optimized.
    #[serde(default)]
    pub sampling_rate: Option<f64>,
    /// Target δ for the composed-leakage figure (defaults to `delta`).
    #[serde(default)]
    pub composed_delta: Option<f64>,
    /// Shift released outputs to empirical mean 0 per partition before
    /// reporting (pure post-processing for box plots).
    #[serde(default = "default_true")]
    pub calibrate_outputs: bool,
    /// Fail instead of redrawing when a Bernoulli subsample comes up empty.
    #[serde(default)]
    pub fail_on_empty_subsample: bool,
    /// Dataset source (may also be supplied by CLI flags).
    #[serde(default)]
    pub data: Option<DataConfig>,
}

impl ExperimentConfig {
    /// Validate the protocol invariants that do not depend on the data.
    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(HarnessError::Config("trials must be >= 1".into()));
        }
        if self.partitions < 1 {
            return Err(HarnessError::Config("partitions must be >= 1".into()));
        }
        if let Some(q) = self.q_override {
            if !(0.0..=1.0).contains(&q) {
                return Err(HarnessError::Config(format!(
                    "q override must lie in [0,1], got {q}"
                )));
            }
        }
        if let Some(p) = self.sampling_rate {
            if !(p > 0.0 && p <= 1.0) {
                return Err(HarnessError::Config(format!(
                    "sampling rate must lie in (0,1], got {p}"
                )));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Queries
// ---------------------------------------------------------------------------

/// Evaluate a query over clipped values. Count uses the membership window
/// (or counts every record when none is given).
#[must_use]
pub fn run_query(values: &[f64], kind: QueryKind, predicate: Option<&CountPredicate>) -> f64 {
    match kind {
        QueryKind::Sum => values.iter().sum(),
        QueryKind::Average => values.iter().sum::<f64>() / values.len() as f64,
        QueryKind::Count => values
            .iter()
            .filter(|&&x| predicate.is_none_or(|c| c.contains(x)))
            .count() as f64,
    }
}

/// Evaluate the inverse-probability estimator over a subsample mask:
/// Sum and Count scale the subsample aggregate by |X|/|X_s|; Average is the
/// subsample mean.
#[must_use]
pub fn run_subsampled_query(
    values: &[f64],
    mask: &[bool],
    kind: QueryKind,
    predicate: Option<&CountPredicate>,
) -> f64 {
    let selected = mask.iter().filter(|&&m| m).count();
    debug_assert!(selected > 0, "caller must redraw empty subsamples");
    let scale = values.len() as f64 / selected as f64;
    let picked = values
        .iter()
        .zip(mask)
        .filter_map(|(&x, &m)| m.then_some(x));
    match kind {
        QueryKind::Sum => scale * picked.sum::<f64>(),
        QueryKind::Average => picked.sum::<f64>() / selected as f64,
        QueryKind::Count => {
            scale
                * picked
                    .filter(|&x| predicate.is_none_or(|c| c.contains(x)))
                    .count() as f64
        }
    }
}

// ---------------------------------------------------------------------------
// Mechanism resolution
// ---------------------------------------------------------------------------

/// Everything needed to release one partition's answer repeatedly.
struct PartitionPlan {
    /// True (unnoised) query answer.
    answer: f64,
    /// Release mechanism (for Subsampled this is the inner mechanism whose
    /// kernel works at the scaled sensitivity Δ_f/p).
    mech: BrdpMechanism,
    /// Sampling rate (1.0 when not subsampled).
    p: f64,
    /// Analytic end-to-end acceptance.
    analytic_acceptance: f64,
    /// Audit row for the report.
    resolved: ResolvedParams,
}

/// Estimate the population model of a partition for sampling-rate planning:
/// mean, population standard deviation, and the predicate hit rate.
fn population_of(values: &[f64], predicate: Option<&CountPredicate>) -> Result<PopulationModel> {
    let n = values.len() as f64;
    let mu = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n;
    let p_c = values
        .iter()
        .filter(|&&x| predicate.is_none_or(|c| c.contains(x)))
        .count() as f64
        / n;
    Ok(PopulationModel::new(values.len() as u64, mu, var.sqrt(), p_c)?)
}

fn resolve_partition(
    config: &ExperimentConfig,
    index: u32,
    values: &[f64],
    clip_width: f64,
) -> Result<PartitionPlan> {
    let sensitivity = match config.query {
        QueryKind::Sum => clip_width,
        QueryKind::Count => 1.0,
        QueryKind::Average => clip_width / values.len() as f64,
    };
    let budget = BudgetPair::new(config.epsilon, config.delta)?;
    let bound = ErrorBound::new(config.theta)?;
    let answer = run_query(values, config.query, config.predicate.as_ref());

    // Each arm yields the mechanism plus the kernel budget it was actually
    // calibrated at, so the audit row reflects the resolved split.
    let (mech, p, plan, kernel_budget) = match config.mechanism {
        MechanismChoice::Dp => {
            let kernel = calibrate_kernel(config.kernel, &budget, sensitivity)?;
            (BrdpMechanism::new(kernel, 0.0, bound)?, 1.0, None, budget)
        }
        MechanismChoice::Brdp => {
            let (kernel_budget, q) = match config.q_override {
                Some(q) => (budget, q),
                None => {
                    let alloc = allocate(
                        config.kernel,
                        &budget,
                        sensitivity,
                        config.theta,
                        config.tol,
                        ObjectiveMode::Default,
                    )?;
                    (BudgetPair::new(alloc.epsilon_y, alloc.delta_y)?, alloc.q)
                }
            };
            let kernel = calibrate_kernel(config.kernel, &kernel_budget, sensitivity)?;
            (
                BrdpMechanism::new(kernel, q, bound)?,
                1.0,
                None,
                kernel_budget,
            )
        }
        MechanismChoice::Subsampled => {
            let pop = population_of(values, config.predicate.as_ref())?;
            let plan = match config.sampling_rate {
                Some(p) => plan_at_p(
                    config.kernel,
                    p,
                    &budget,
                    sensitivity,
                    config.theta,
                    config.query,
                    &pop,
                    config.tol,
                    ObjectiveMode::Default,
                )?,
                None => find_p(
                    config.kernel,
                    &budget,
                    sensitivity,
                    config.theta,
                    config.query,
                    &pop,
                    config.tol,
                    ObjectiveMode::Default,
                )?,
            };
            let kernel_budget =
                BudgetPair::new(plan.allocation.epsilon_y, plan.allocation.delta_y)?;
            let kernel =
                calibrate_kernel(config.kernel, &kernel_budget, plan.scaled_sensitivity)?;
            let mech = BrdpMechanism::new(kernel, plan.allocation.q, bound)?;
            let p = plan.p;
            (mech, p, Some(plan), kernel_budget)
        }
    };

    let analytic_acceptance = match &plan {
        Some(plan) => plan_acceptance(plan)?,
        None => mech.acceptance_rate(),
    };
    let sw = mech.shift_params();
    let resolved = ResolvedParams {
        partition: index,
        size: values.len() as u64,
        sensitivity: mech.kernel.sensitivity,
        scale: mech.kernel.scale,
        epsilon_y: kernel_budget.epsilon,
        delta_y: kernel_budget.delta,
        q: mech.q,
        p,
        w: sw.w,
        l: sw.l,
        analytic_acceptance,
        warning: plan.as_ref().and_then(|pl| pl.warning.clone()),
    };
    Ok(PartitionPlan {
        answer,
        mech,
        p,
        analytic_acceptance,
        resolved,
    })
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

/// Split `n` records into `parts` contiguous, near-equal chunks.
fn partition_ranges(n: usize, parts: u32) -> Vec<std::ops::Range<usize>> {
    let parts = parts as usize;
    (0..parts)
        .map(|i| (i * n / parts)..((i + 1) * n / parts))
        .collect()
}

/// Release one subsampled answer: fresh Bernoulli subsample and fresh noise
/// every recycle round.
fn sample_subsampled<R: Rng + ?Sized>(
    config: &ExperimentConfig,
    plan: &PartitionPlan,
    values: &[f64],
    rng: &mut R,
) -> Result<f64> {
    let theta = config.theta;
    let q = plan.mech.q;
    let mut mask = vec![false; values.len()];
    for _ in 0..MAX_SAMPLE_ROUNDS {
        // Draw the subsample; redraw (or fail) when it comes up empty.
        loop {
            let mut any = false;
            for slot in &mut mask {
                *slot = rng.random::<f64>() < plan.p;
                any |= *slot;
            }
            if any {
                break;
            }
            if config.fail_on_empty_subsample {
                return Err(HarnessError::EmptyDataset(
                    "Bernoulli subsample came up empty".into(),
                ));
            }
        }
        let estimate = run_subsampled_query(
            values,
            &mask,
            config.query,
            config.predicate.as_ref(),
        );
        let candidate = estimate + plan.mech.kernel.sample_noise(rng);
        if (candidate - plan.answer).abs() <= theta {
            return Ok(candidate);
        }
        if rng.random::<f64>() >= q {
            return Ok(candidate);
        }
    }
    Err(HarnessError::Core(brdp_core::BrdpError::Nontermination(
        format!("subsampled release loop exceeded {MAX_SAMPLE_ROUNDS} rounds"),
    )))
}

/// Composed-leakage ε of the resolved mechanism after `t` releases, at the
/// report's target δ.
fn composed_epsilon(
    config: &ExperimentConfig,
    plan: &PartitionPlan,
    t: u32,
    target_delta: f64,
) -> Result<f64> {
    let eps = match config.mechanism {
        MechanismChoice::Dp => {
            let prof = ComposedKernelProfile::new(&plan.mech.kernel, t)?;
            epsilon_at_delta(|e| prof.delta_at(e), target_delta, COMPOSE_TOL)?
        }
        // Recycled pipelines compose the (inner) recycled mechanism; for the
        // subsampled pipeline this is an upper bound since per-release
        // amplification only shrinks leakage.
        MechanismChoice::Brdp | MechanismChoice::Subsampled => {
            let prof = ComposedBrdpProfile::new(&plan.mech, t)?;
            epsilon_at_delta(|e| prof.delta_at(e), target_delta, COMPOSE_TOL)?
        }
    };
    Ok(eps)
}

/// Run the full protocol: resolve per-partition mechanisms, execute
/// trials × partitions releases on counter-derived random streams, and
/// assemble the acceptance report.
pub fn run_experiment(config: &ExperimentConfig, table: &DatasetTable) -> Result<AcceptanceReport> {
    config.validate()?;
    if (config.partitions as usize) > table.len() {
        return Err(HarnessError::Config(format!(
            "{} partitions cannot all be nonempty over {} records",
            config.partitions,
            table.len()
        )));
    }
    let clip_width = table.clip_hi - table.clip_lo;
    let ranges = partition_ranges(table.len(), config.partitions);
    let mut plans = Vec::with_capacity(ranges.len());
    for (i, range) in ranges.iter().enumerate() {
        plans.push(resolve_partition(
            config,
            i as u32,
            &table.values[range.clone()],
            clip_width,
        )?);
    }

    let trials = config.trials;
    let mut outputs: Vec<f64> = Vec::with_capacity(plans.len() * trials as usize);
    let mut hits: u64 = 0;
    for (p_idx, plan) in plans.iter().enumerate() {
        let range = ranges[p_idx].clone();
        let values = &table.values[range];
        let mut partition_outputs = Vec::with_capacity(trials as usize);
        for trial in 0..trials {
            let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
            rng.set_stream(((p_idx as u64) << 32) | trial as u64);
            let released = match config.mechanism {
                MechanismChoice::Subsampled => {
                    sample_subsampled(config, plan, values, &mut rng)?
                }
                _ => plan.mech.sample(plan.answer, &mut rng)?.0,
            };
            if (released - plan.answer).abs() <= config.theta {
                hits += 1;
            }
            partition_outputs.push(released);
        }
        if config.calibrate_outputs {
            let mean =
                partition_outputs.iter().sum::<f64>() / partition_outputs.len() as f64;
            for v in &mut partition_outputs {
                *v -= mean;
            }
        }
        outputs.extend(partition_outputs);
    }

    let n_total = (plans.len() as u64 * trials as u64) as f64;
    let empirical = hits as f64 / n_total;
    let empirical_se = (empirical * (1.0 - empirical) / n_total).sqrt();
    let analytic = plans
        .iter()
        .map(|p| p.analytic_acceptance)
        .sum::<f64>()
        / plans.len() as f64;
    let target_delta = config.composed_delta.unwrap_or(config.delta);
    let composed = composed_epsilon(config, &plans[0], trials, target_delta)?;

    Ok(AcceptanceReport {
        mechanism: config.mechanism,
        kernel: config.kernel,
        query: config.query,
        trials,
        partitions: config.partitions,
        seed: config.seed,
        empirical_acceptance: empirical,
        empirical_se,
        analytic_acceptance: analytic,
        composed_epsilon: composed,
        composed_delta: target_delta,
        outputs_calibrated: config.calibrate_outputs,
        output_quantiles: crate::report::quantiles_of(&outputs),
        resolved: plans.into_iter().map(|p| p.resolved).collect(),
        outputs,
    })
}
