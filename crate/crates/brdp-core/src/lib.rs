//! Budget-recycling differential privacy.
//!
//! A budget-recycling mechanism releases a noisy query answer ỹ = y + N
//! but keeps redrawing the noise while the draw lands outside a soft error
//! bound [y − θ, y + θ]: each out-of-bound draw is released anyway with
//! probability 1 − q and recycled with probability q. Recycling reshapes
//! the release density — mass inside the bound grows by 1/(1 − p̄_θ·q) —
//! which buys utility, and the extra privacy leakage it causes is paid for
//! by splitting a total budget (ε, δ) between the noise kernel and the
//! recycling rate.
//!
//! The crate covers the full pipeline:
//!
//! - [`kernels`] — Gaussian and Laplacian noise kernels, budget
//!   calibration, exact privacy profiles δ_Z(ε), and discretized
//!   privacy-loss grids;
//! - [`mechanism`] — the recycling release itself: density, sampling,
//!   acceptance rate, and the shift pair (W, 𝓛) behind the reported
//!   profile δ_Γ(ε) = (1 − W)·δ_Z(ε) + W·δ_Z(ε − 𝓛), plus the exact
//!   hockey-stick diagnostic that measures that model's tightness;
//! - [`budgeting`] — the tightest recycling rate a budget admits and the
//!   kernel/recycler budget split minimizing expected release rounds;
//! - [`composition`] — T-fold composition accounting: binomial-mixture
//!   profiles, an FFT convolution oracle, and the classical basic and
//!   advanced composition bounds;
//! - [`subsampling`] — Bernoulli-subsampled variants: privacy
//!   amplification, sampling-error scales, and the optimal sampling rate
//!   under a combined acceptance objective;
//! - [`numerics`] — the special-function layer (normal CDF in log space,
//!   log-binomials, adaptive quadrature) everything above leans on.

pub mod budgeting;
pub mod composition;
pub mod error;
pub mod kernels;
pub mod mechanism;
pub mod numerics;
pub mod subsampling;

pub use budgeting::{
    allocate, baseline_q, find_q, find_q_for_kernel, objective, objective_value,
    AllocationResult, ObjectiveMode, DEFAULT_SEARCH_TOL,
};
pub use composition::{
    advanced_composition, basic_composition, brdp_profile_t, brute_force_t, epsilon_at_delta,
    kernel_profile_t, ComposedBrdpProfile, ComposedKernelProfile, CompositionQuery, RecyclerPld,
};
pub use error::{BrdpError, Result};
pub use kernels::{
    calibrate_gaussian, calibrate_kernel, calibrate_laplace, default_pld_grid,
    laplace_budget_epsilon, pld_grid, BudgetPair, CalibratedKernel, KernelKind, PldGrid,
    DEFAULT_GRID_STEP,
};
pub use mechanism::{
    bar_p_theta, brdp_privacy_profile, brdp_profile_diagnostic, p_theta, shift_params,
    BrdpMechanism, ErrorBound, ShiftWeight, MAX_SAMPLE_ROUNDS,
};
pub use subsampling::{
    amplify, combined_objective, combined_p_theta, deamplify, find_p, plan_acceptance, plan_at_p,
    sampling_sigma, simulate_sampling_error, PopulationModel, QueryKind, SubsampledPlan,
};
