//! Subsampling-amplified mechanisms.
//!
//! Running the mechanism on a Bernoulli-p subsample amplifies privacy —
//! an inner (ε_in, δ_in) budget appears externally as
//! (ln(1 + p(e^{ε_in} − 1)), p·δ_in) — but adds sampling error with scale
//! σ_E(p) to the released estimate. The sampling-rate search trades those
//! off: for each p it deamplifies the total budget, reallocates the inner
//! budget, and scores the combined acceptance objective against the error
//! bound θ over the total noise √(σ_y² + σ_E²).

use crate::budgeting::{allocate, allocate_with, objective_value, AllocationResult, ObjectiveMode};
use crate::error::{BrdpError, Result};
use crate::kernels::{calibrate_kernel, BudgetPair, CalibratedKernel, KernelKind};
use crate::mechanism::ErrorBound;
use crate::numerics::phi;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Monte-Carlo draw count for acceptance estimates without a closed form.
const MC_DRAWS: usize = 10_000;
/// Fixed stream seed for those estimates, keeping them reproducible.
const MC_SEED: u64 = 0x6272_6470_5f6d_63;
/// Iteration cap for the outer sampling-rate search.
const OUTER_ITERS: usize = 300;
/// Normal-approximation threshold for subsampled counts: the expected
/// Bernoulli variance mass |X_s|·p_c·(1−p_c) should reach this value.
const COUNT_NORMAL_THRESHOLD: f64 = 10.0;

/// Statistical model of the population a query runs over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationModel {
    /// Number of records |X|.
    pub size: u64,
    /// Mean of a record's value.
    pub mu: f64,
    /// Standard deviation of a record's value.
    pub sigma_x: f64,
    /// Probability a record satisfies the counted predicate.
    pub p_c: f64,
}

impl PopulationModel {
    /// Validated constructor.
    pub fn new(size: u64, mu: f64, sigma_x: f64, p_c: f64) -> Result<Self> {
        if size == 0 {
            return Err(BrdpError::Domain("population size must be >= 1".into()));
        }
        if !mu.is_finite() {
            return Err(BrdpError::Domain(format!("population mean must be finite, got {mu}")));
        }
        if !(sigma_x >= 0.0 && sigma_x.is_finite()) {
            return Err(BrdpError::Domain(format!(
                "population spread must be finite and >= 0, got {sigma_x}"
            )));
        }
        if !(0.0..=1.0).contains(&p_c) {
            return Err(BrdpError::Domain(format!(
                "predicate rate must lie in [0,1], got {p_c}"
            )));
        }
        Ok(Self { size, mu, sigma_x, p_c })
    }
}

/// Query families with distinct sensitivity and sampling-error behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryKind {
    /// Σ_i x_i.
    Sum,
    /// (1/|X|)·Σ_i x_i.
    Average,
    /// Σ_i 𝟙[predicate(x_i)].
    Count,
}

/// Resolved subsampled-mechanism configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampledPlan {
    /// Kernel family of the inner mechanism.
    pub kind: KernelKind,
    /// Bernoulli sampling rate.
    pub p: f64,
    /// Error bound the acceptance objective was scored against.
    pub theta: f64,
    /// Budget the inner mechanism consumes (deamplified total).
    pub inner_budget: BudgetPair,
    /// Sampling-error scale σ_E(p).
    pub sigma_e: f64,
    /// Sensitivity of the scaled subsample estimator, Δ_f / p.
    pub scaled_sensitivity: f64,
    /// Inner budget split and recycling rate.
    pub allocation: AllocationResult,
    /// Set when a statistical approximation underlying the plan is thin.
    pub warning: Option<String>,
}

// ---------------------------------------------------------------------------
// Amplification algebra
// ---------------------------------------------------------------------------

/// External budget of an inner (ε, δ) mechanism run on a Bernoulli-p
/// subsample: (ln(1 + p·(e^ε − 1)), p·δ). `p = 1` is an exact identity.
pub fn amplify(inner: &BudgetPair, p: f64) -> Result<BudgetPair> {
    check_rate(p)?;
    if p == 1.0 {
        return Ok(*inner);
    }
    Ok(BudgetPair {
        epsilon: (p * inner.epsilon.exp_m1()).ln_1p(),
        delta: p * inner.delta,
    })
}

/// Inner budget whose subsampled release meets the external `total`:
/// ε_in = ln(1 + (e^ε − 1)/p), δ_in = δ/p. Infeasible when δ/p > 1.
pub fn deamplify(total: &BudgetPair, p: f64) -> Result<BudgetPair> {
    check_rate(p)?;
    if p == 1.0 {
        return Ok(*total);
    }
    let delta = total.delta / p;
    if delta > 1.0 {
        return Err(BrdpError::Infeasible(format!(
            "delta {} cannot be met at sampling rate {p}: inner delta would be {delta}",
            total.delta
        )));
    }
    Ok(BudgetPair {
        epsilon: (total.epsilon.exp_m1() / p).ln_1p(),
        delta,
    })
}

fn check_rate(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(BrdpError::Domain(format!(
            "sampling rate must lie in (0,1], got {p}"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Sampling error
// ---------------------------------------------------------------------------

/// Standard deviation of the scaled subsample estimator's sampling error.
/// Exactly 0 at p = 1; otherwise σ_x·√(|X|(1−p)/p) for sums,
/// σ_x·√((1−p)/(p|X|)) for averages, and √(|X|(1−p)·p_c(1−p_c)/p) for
/// counts.
pub fn sampling_sigma(kind: QueryKind, pop: &PopulationModel, p: f64) -> Result<f64> {
    check_rate(p)?;
    if p == 1.0 {
        return Ok(0.0);
    }
    let n = pop.size as f64;
    let ratio = (1.0 - p) / p;
    Ok(match kind {
        QueryKind::Sum => pop.sigma_x * (n * ratio).sqrt(),
        QueryKind::Average => pop.sigma_x * (ratio / n).sqrt(),
        QueryKind::Count => (n * ratio * pop.p_c * (1.0 - pop.p_c)).sqrt(),
    })
}

/// One draw of (estimator − truth) for a fresh synthetic population and a
/// fresh Bernoulli-p subsample. Values are N(μ, σ_x) for sums and averages
/// and Bernoulli(p_c) predicate indicators for counts; the subsample
/// estimator rescales by |X|/|X_s|, redrawing the subsample if it comes up
/// empty.
pub fn simulate_sampling_error<R: Rng + ?Sized>(
    kind: QueryKind,
    pop: &PopulationModel,
    p: f64,
    rng: &mut R,
) -> Result<f64> {
    check_rate(p)?;
    let n = pop.size as usize;
    let values: Vec<f64> = match kind {
        QueryKind::Sum | QueryKind::Average => {
            let dist = Normal::new(pop.mu, pop.sigma_x)
                .map_err(|e| BrdpError::Domain(format!("population model: {e}")))?;
            (0..n).map(|_| dist.sample(rng)).collect()
        }
        QueryKind::Count => (0..n)
            .map(|_| f64::from(u8::from(rng.random::<f64>() < pop.p_c)))
            .collect(),
    };
    let total: f64 = values.iter().sum();
    let (sub_total, sub_len) = loop {
        let mut acc = 0.0;
        let mut len = 0u64;
        for &v in &values {
            if rng.random::<f64>() < p {
                acc += v;
                len += 1;
            }
        }
        if len > 0 {
            break (acc, len);
        }
    };
    let scale = pop.size as f64 / sub_len as f64;
    Ok(match kind {
        QueryKind::Sum | QueryKind::Count => scale * sub_total - total,
        QueryKind::Average => sub_total / sub_len as f64 - total / pop.size as f64,
    })
}

// ---------------------------------------------------------------------------
// Combined acceptance objective
// ---------------------------------------------------------------------------

/// P(|kernel noise + sampling error| ≤ θ) with the sampling error taken as
/// N(0, σ_E). Closed form for the Gaussian kernel — the total noise is
/// N(0, σ_y² + σ_E²) — and a fixed-seed Monte-Carlo estimate otherwise.
pub fn combined_p_theta(
    kernel: &CalibratedKernel,
    sigma_e: f64,
    bound: &ErrorBound,
) -> Result<f64> {
    if !(sigma_e >= 0.0 && sigma_e.is_finite()) {
        return Err(BrdpError::Domain(format!(
            "sampling-error scale must be finite and >= 0, got {sigma_e}"
        )));
    }
    match kernel.kind {
        KernelKind::Gaussian => Ok(gaussian_combined_p_theta(kernel.scale, sigma_e, bound.theta)),
        KernelKind::Laplacian => {
            let mut rng = ChaCha12Rng::seed_from_u64(MC_SEED);
            let sampling = Normal::new(0.0, sigma_e)
                .map_err(|e| BrdpError::Domain(format!("sampling error model: {e}")))?;
            let mut hits = 0usize;
            for _ in 0..MC_DRAWS {
                let noise = kernel.sample_noise(&mut rng) + sampling.sample(&mut rng);
                if noise.abs() <= bound.theta {
                    hits += 1;
                }
            }
            Ok(hits as f64 / MC_DRAWS as f64)
        }
    }
}

fn gaussian_combined_p_theta(sigma_y: f64, sigma_e: f64, theta: f64) -> f64 {
    let total = sigma_y.hypot(sigma_e);
    (2.0 * phi(theta / total) - 1.0).clamp(0.0, 1.0)
}

/// Allocation objective scored against the combined acceptance probability.
pub fn combined_objective(
    kernel: &CalibratedKernel,
    sigma_e: f64,
    bound: &ErrorBound,
    q: f64,
    mode: ObjectiveMode,
) -> Result<f64> {
    Ok(objective_value(combined_p_theta(kernel, sigma_e, bound)?, q, mode))
}

/// Overall acceptance probability of a plan: p̃_θ / (1 − (1 − p̃_θ)·q) with
/// p̃_θ the combined per-round acceptance.
pub fn plan_acceptance(plan: &SubsampledPlan) -> Result<f64> {
    let kernel = calibrate_kernel(
        plan.kind,
        &BudgetPair::new(plan.allocation.epsilon_y, plan.allocation.delta_y)?,
        plan.scaled_sensitivity,
    )?;
    let p_theta = combined_p_theta(&kernel, plan.sigma_e, &ErrorBound::new(plan.theta)?)?;
    if p_theta <= 0.0 {
        return Ok(0.0);
    }
    Ok(p_theta / (1.0 - (1.0 - p_theta) * plan.allocation.q))
}

// ---------------------------------------------------------------------------
// Sampling-rate optimization
// ---------------------------------------------------------------------------

/// Resolve the plan at a fixed sampling rate: deamplify the budget, derive
/// the sampling-error scale, and allocate the inner budget. The Gaussian
/// inner allocation scores the combined objective; the Laplacian one has no
/// closed combined form and uses the plain kernel-only objective.
pub fn plan_at_p(
    kind: KernelKind,
    p: f64,
    total: &BudgetPair,
    sensitivity: f64,
    theta: f64,
    query: QueryKind,
    pop: &PopulationModel,
    tol: f64,
    mode: ObjectiveMode,
) -> Result<SubsampledPlan> {
    check_rate(p)?;
    let bound = ErrorBound::new(theta)?;
    let inner = deamplify(total, p)?;
    let sigma_e = sampling_sigma(query, pop, p)?;
    let scaled_sensitivity = sensitivity / p;
    let allocation = match kind {
        KernelKind::Gaussian => allocate_with(kind, &inner, scaled_sensitivity, theta, tol, |k, q| {
            objective_value(gaussian_combined_p_theta(k.scale, sigma_e, bound.theta), q, mode)
        })?,
        KernelKind::Laplacian => allocate(kind, &inner, scaled_sensitivity, theta, tol, mode)?,
    };
    let warning = count_warning(query, pop, p);
    Ok(SubsampledPlan {
        kind,
        p,
        theta,
        inner_budget: inner,
        sigma_e,
        scaled_sensitivity,
        allocation,
        warning,
    })
}

fn count_warning(query: QueryKind, pop: &PopulationModel, p: f64) -> Option<String> {
    if query != QueryKind::Count {
        return None;
    }
    let mass = p * pop.size as f64 * pop.p_c * (1.0 - pop.p_c);
    (mass < COUNT_NORMAL_THRESHOLD).then(|| {
        format!(
            "subsampled count has expected indicator variance mass {mass:.3} < \
             {COUNT_NORMAL_THRESHOLD}; the normal approximation of its sampling error is thin"
        )
    })
}

/// Optimal sampling rate for a subsampled release under `total`: ternary
/// search of p ∈ [tol, 1] on the combined objective of the per-p optimal
/// inner allocation, then an exact p = 1 boundary probe that wins only on
/// strict improvement. The search itself runs on the Gaussian closed form;
/// a Laplacian plan is then resolved at the chosen rate.
pub fn find_p(
    kind: KernelKind,
    total: &BudgetPair,
    sensitivity: f64,
    theta: f64,
    query: QueryKind,
    pop: &PopulationModel,
    tol: f64,
    mode: ObjectiveMode,
) -> Result<SubsampledPlan> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(BrdpError::Domain(format!(
            "search tolerance must lie in (0,1), got {tol}"
        )));
    }
    let probe = |p: f64| plan_at_p(KernelKind::Gaussian, p, total, sensitivity, theta, query, pop, tol, mode);
    let mut lo = tol;
    let mut hi = 1.0;
    for _ in 0..OUTER_ITERS {
        if hi - lo <= tol {
            break;
        }
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        let o1 = probe(m1)?.allocation.objective_value;
        let o2 = probe(m2)?.allocation.objective_value;
        if o1 > o2 {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let center = 0.5 * (lo + hi);
    let interior = probe(center)?;
    let edge = probe(1.0)?;
    let best_p = if edge.allocation.objective_value < interior.allocation.objective_value {
        1.0
    } else {
        center
    };
    match kind {
        KernelKind::Gaussian => {
            if best_p == 1.0 {
                Ok(edge)
            } else {
                Ok(interior)
            }
        }
        KernelKind::Laplacian => {
            plan_at_p(kind, best_p, total, sensitivity, theta, query, pop, tol, mode)
        }
    }
}
