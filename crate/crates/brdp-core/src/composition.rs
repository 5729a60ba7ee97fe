//! T-fold sequential composition accounting.
//!
//! The composed mechanism profile is the binomial mixture
//! δ_Γ^T(ε) = Σ_{k=0}^{T} C(T,k)·(1−W)^k·W^{T−k} · δ_Z^T(ε − (T−k)𝓛),
//! where δ_Z^T is the T-fold kernel profile: closed-form for the Gaussian
//! kernel (its composed loss law is N(Tμ, 2Tμ) with μ = Δ_f²/(2σ²)) and an
//! FFT-composed loss grid for the Laplacian. A direct grid-convolution
//! oracle covers small T, alongside the classical basic and advanced
//! composition formulas.

use crate::error::{BrdpError, Result};
use crate::kernels::{default_pld_grid, BudgetPair, CalibratedKernel, KernelKind, PldGrid};
use crate::mechanism::{BrdpMechanism, ShiftWeight};
use crate::numerics::{exp_eps_phi, ln_choose, phi};
use serde::{Deserialize, Serialize};

/// One composed-leakage question: a mechanism, how many times it runs, and
/// the ε at which to read the composed profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositionQuery {
    /// The mechanism applied T times to the same data.
    pub mechanism: BrdpMechanism,
    /// Composition count T ≥ 1.
    pub t: u32,
    /// Profile evaluation point.
    pub target_epsilon: f64,
}

/// The recycling phase's own loss distribution: mass 1−W at loss 0 and
/// mass W at loss 𝓛 (the two weights sum to 1 by construction).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecyclerPld {
    /// Loss shift 𝓛 carried by the recycled branch.
    pub shift: f64,
    /// Probability W of the shifted branch.
    pub weight: f64,
}

impl RecyclerPld {
    /// The recycler loss law of a mechanism.
    #[must_use]
    pub fn from_mechanism(mech: &BrdpMechanism) -> Self {
        let ShiftWeight { w, l } = mech.shift_params();
        Self { shift: l, weight: w }
    }

    /// Atoms as (loss, mass) pairs.
    #[must_use]
    pub fn atoms(&self) -> [(f64, f64); 2] {
        [(0.0, 1.0 - self.weight), (self.shift, self.weight)]
    }
}

// ---------------------------------------------------------------------------
// Composed kernel profiles
// ---------------------------------------------------------------------------

enum ProfileForm {
    /// Composed Gaussian loss N(μ_T, 2μ_T) with μ_T = T·Δ²/(2σ²).
    GaussianClosed { mu_t: f64 },
    /// Discretized loss with precomputed suffix sums: for cell centers z_i,
    /// s1[i] = Σ_{j ≥ i} m_j and se[i] = Σ_{j ≥ i} m_j·e^{−z_j}, so
    /// δ(ε) = tail + s1[i*] − e^ε·se[i*] at the first i* with z_{i*} > ε.
    Grid {
        origin: f64,
        step: f64,
        s1: Vec<f64>,
        se: Vec<f64>,
        tail: f64,
    },
}

/// Memoized T-fold kernel profile δ_Z^T(ε), cheap to evaluate at many ε.
pub struct ComposedKernelProfile {
    form: ProfileForm,
}

impl ComposedKernelProfile {
    /// Build the composed profile for `t` uses of `kernel`.
    pub fn new(kernel: &CalibratedKernel, t: u32) -> Result<Self> {
        if t == 0 {
            return Err(BrdpError::Domain("composition count must be >= 1".into()));
        }
        match kernel.kind {
            KernelKind::Gaussian => Ok(Self {
                form: ProfileForm::GaussianClosed {
                    mu_t: f64::from(t) * kernel.gaussian_loss_mean(),
                },
            }),
            KernelKind::Laplacian => {
                let grid = default_pld_grid(kernel)?.self_compose(t)?;
                Ok(Self::from_grid(&grid))
            }
        }
    }

    /// Suffix-sum view of an existing loss grid.
    #[must_use]
    pub fn from_grid(grid: &PldGrid) -> Self {
        let n = grid.mass.len();
        let mut s1 = vec![0.0; n + 1];
        let mut se = vec![0.0; n + 1];
        for i in (0..n).rev() {
            let z = grid.center(i);
            s1[i] = s1[i + 1] + grid.mass[i];
            se[i] = se[i + 1] + grid.mass[i] * (-z).exp();
        }
        Self {
            form: ProfileForm::Grid {
                origin: grid.origin,
                step: grid.step,
                s1,
                se,
                tail: grid.tail_mass,
            },
        }
    }

    /// δ_Z^T(ε); accepts any real ε including −∞ (where it returns 1).
    #[must_use]
    pub fn delta_at(&self, epsilon: f64) -> f64 {
        match &self.form {
            ProfileForm::GaussianClosed { mu_t } => {
                let s = (2.0 * mu_t).sqrt();
                let v = phi((mu_t - epsilon) / s) - exp_eps_phi(epsilon, (-mu_t - epsilon) / s);
                v.clamp(0.0, 1.0)
            }
            ProfileForm::Grid { origin, step, s1, se, tail } => {
                let n = s1.len() - 1;
                // First cell index whose center exceeds ε.
                let (mut lo, mut hi) = (0usize, n);
                while lo < hi {
                    let mid = (lo + hi) / 2;
                    if origin + mid as f64 * step > epsilon {
                        hi = mid;
                    } else {
                        lo = mid + 1;
                    }
                }
                if lo == n {
                    return tail.clamp(0.0, 1.0);
                }
                // e^ε·se computed in log space so a large ε cannot overflow
                // against a vanishing suffix.
                let sub = if se[lo] > 0.0 { (epsilon + se[lo].ln()).exp() } else { 0.0 };
                (tail + s1[lo] - sub).clamp(0.0, 1.0)
            }
        }
    }
}

/// T-fold kernel profile δ_Z^T(ε) (one-shot convenience over
/// [`ComposedKernelProfile`]).
pub fn kernel_profile_t(kernel: &CalibratedKernel, t: u32, epsilon: f64) -> Result<f64> {
    Ok(ComposedKernelProfile::new(kernel, t)?.delta_at(epsilon))
}

// ---------------------------------------------------------------------------
// Composed mechanism profile
// ---------------------------------------------------------------------------

/// Memoized T-fold mechanism profile: the binomial mixture over shift
/// counts, with weights computed in log space. Evaluation cost is linear
/// in T on top of the memoized kernel profile.
pub struct ComposedBrdpProfile {
    kernel_profile: ComposedKernelProfile,
    /// (mixture weight, loss shift) per surviving binomial term.
    terms: Vec<(f64, f64)>,
}

impl ComposedBrdpProfile {
    /// Build the composed profile of `t` uses of `mech`.
    pub fn new(mech: &BrdpMechanism, t: u32) -> Result<Self> {
        let kernel_profile = ComposedKernelProfile::new(&mech.kernel, t)?;
        let ShiftWeight { w, l } = mech.shift_params();
        let tt = u64::from(t);
        let mut terms = Vec::new();
        if mech.q == 0.0 || w == 0.0 {
            // Single surviving term: no shift.
            terms.push((1.0, 0.0));
        } else if w == 1.0 {
            terms.push((1.0, f64::from(t) * l));
        } else {
            let (ln_w, ln_1w) = (w.ln(), (1.0 - w).ln());
            for k in 0..=tt {
                let ln_weight =
                    ln_choose(tt, k) + k as f64 * ln_1w + (tt - k) as f64 * ln_w;
                let weight = ln_weight.exp();
                if weight > 0.0 {
                    let shift = if tt - k == 0 { 0.0 } else { (tt - k) as f64 * l };
                    terms.push((weight, shift));
                }
            }
        }
        Ok(Self { kernel_profile, terms })
    }

    /// δ_Γ^T(ε) = Σ_k weight_k · δ_Z^T(ε − shift_k).
    #[must_use]
    pub fn delta_at(&self, epsilon: f64) -> f64 {
        let mut acc = 0.0;
        for &(weight, shift) in &self.terms {
            let arg = if shift == 0.0 {
                epsilon
            } else if shift.is_infinite() {
                f64::NEG_INFINITY
            } else {
                epsilon - shift
            };
            acc += weight * self.kernel_profile.delta_at(arg);
        }
        acc.clamp(0.0, 1.0)
    }
}

/// Composed mechanism profile δ_Γ^T at the query's evaluation point.
pub fn brdp_profile_t(query: &CompositionQuery) -> Result<f64> {
    Ok(ComposedBrdpProfile::new(&query.mechanism, query.t)?.delta_at(query.target_epsilon))
}

/// Direct convolution oracle for small T: builds the mechanism loss grid as
/// (kernel loss) ⊛ (recycler atoms), self-convolves it T times, and reads
/// the hockey-stick expectation. The recycler shift is rounded to the grid,
/// so exact agreement tests should pick q with 𝓛 on a grid multiple.
pub fn brute_force_t(mech: &BrdpMechanism, t: u32, epsilon: f64) -> Result<f64> {
    if t == 0 || t > 8 {
        return Err(BrdpError::Domain(format!(
            "brute-force oracle covers 1 <= T <= 8, got {t}"
        )));
    }
    if mech.q >= 1.0 {
        return Err(BrdpError::Domain(
            "q = 1 has an infinite loss shift; the oracle grid cannot hold it".into(),
        ));
    }
    let grid = default_pld_grid(&mech.kernel)?;
    let joint = if mech.q == 0.0 {
        grid
    } else {
        grid.convolve_atoms(&RecyclerPld::from_mechanism(mech).atoms())
    };
    Ok(joint.self_compose(t)?.delta_at(epsilon))
}

// ---------------------------------------------------------------------------
// Classical composition formulas and profile inversion
// ---------------------------------------------------------------------------

/// Basic sequential composition: T mechanisms at (ε, δ) jointly satisfy
/// (T·ε, min(1, T·δ)).
#[must_use]
pub fn basic_composition(budget: &BudgetPair, t: u32) -> BudgetPair {
    BudgetPair {
        epsilon: f64::from(t) * budget.epsilon,
        delta: (f64::from(t) * budget.delta).min(1.0),
    }
}

/// Advanced sequential composition at the budget's δ:
/// ε_T = T·ε·(e^ε − 1) + √T·ε·√(2·ln(1/δ)). Requires δ ∈ (0, 1).
pub fn advanced_composition(budget: &BudgetPair, t: u32) -> Result<f64> {
    if !(budget.delta > 0.0 && budget.delta < 1.0) {
        return Err(BrdpError::Domain(format!(
            "advanced composition needs delta in (0,1), got {}",
            budget.delta
        )));
    }
    let eps = budget.epsilon;
    let tf = f64::from(t);
    Ok(tf * eps * eps.exp_m1() + tf.sqrt() * eps * (2.0 * (1.0 / budget.delta).ln()).sqrt())
}

/// Smallest ε ≥ 0 (within `tol`, feasible side) with profile(ε) ≤ δ_target,
/// for any nonincreasing profile. Fails with a bracket error when the
/// target is unreachable within the expansion cap.
pub fn epsilon_at_delta<F>(profile: F, target_delta: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(target_delta > 0.0 && target_delta < 1.0) {
        return Err(BrdpError::Domain(format!(
            "target delta must lie in (0,1), got {target_delta}"
        )));
    }
    if !(tol > 0.0) {
        return Err(BrdpError::Domain(format!("tol must be positive, got {tol}")));
    }
    if profile(0.0) <= target_delta {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut expansions = 0;
    while profile(hi) > target_delta {
        lo = hi;
        hi *= 2.0;
        expansions += 1;
        if expansions > 60 {
            return Err(BrdpError::Bracket(format!(
                "profile stays above {target_delta} out to epsilon = {hi}"
            )));
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if profile(mid) <= target_delta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
