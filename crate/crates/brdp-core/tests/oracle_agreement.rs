//! Agreement with independently derived reference values.
//!
//! Every constant below was produced outside this crate (closed forms
//! evaluated in high-precision / SciPy sessions) and frozen here, so these
//! tests cannot drift along with the implementation they check.

use approx::assert_abs_diff_eq;
use brdp_core::{
    calibrate_gaussian, calibrate_kernel, shift_params, BrdpMechanism, BudgetPair,
    CalibratedKernel, ErrorBound, KernelKind,
};

fn gaussian(scale: f64) -> CalibratedKernel {
    CalibratedKernel::new(KernelKind::Gaussian, scale, 1.0).unwrap()
}

fn laplace(scale: f64) -> CalibratedKernel {
    CalibratedKernel::new(KernelKind::Laplacian, scale, 1.0).unwrap()
}

// ---------------------------------------------------------------------------
// Kernel calibration and profiles
// ---------------------------------------------------------------------------

#[test]
fn gaussian_calibration_matches_reference_root() {
    // Smallest σ with δ(σ; ε=2, Δ_f=1) ≤ 1e−5, found by an independent
    // high-precision bisection of the analytic profile.
    let k = calibrate_gaussian(&BudgetPair::new(2.0, 1e-5).unwrap(), 1.0).unwrap();
    assert_abs_diff_eq!(k.scale, 1.993_812_445_643_537, epsilon = 1e-6);
    // Tightness: the returned scale meets the budget, a 0.1% smaller one
    // does not.
    assert!(k.privacy_profile(2.0) <= 1e-5);
    let smaller = gaussian(k.scale * 0.999);
    assert!(smaller.privacy_profile(2.0) > 1e-5);
}

#[test]
fn gaussian_profile_matches_reference_value() {
    // δ(ε=1) for σ = 1, Δ_f = 1: Φ(−1/2) − e·Φ(−3/2).
    let k = gaussian(1.0);
    assert_abs_diff_eq!(
        k.privacy_profile(1.0),
        0.126_936_737_506_643_92,
        epsilon = 1e-12
    );
}

#[test]
fn laplace_cdf_and_profile_match_reference_values() {
    let k = laplace(1.0);
    // F(1) = 1 − e^{−1}/2.
    assert_abs_diff_eq!(k.cdf(1.0), 0.816_060_279_414_278_8, epsilon = 1e-15);
    // δ(ε=0.3) for b = 1, Δ_f = 1: 1 − e^{(0.3−1)/2}.
    assert_abs_diff_eq!(
        k.privacy_profile(0.3),
        0.295_311_910_281_286_6,
        epsilon = 1e-15
    );
}

#[test]
fn closed_form_profiles_agree_with_quadrature() {
    // The closed forms must reproduce the defining hockey-stick integral
    // ∫ max{0, f_N(t) − e^ε f_N(t − Δ_f)} dt to 1e−9 at every probe.
    for scale in [0.5, 1.0, 2.0] {
        for eps in [0.1, 1.0, 3.0] {
            for k in [gaussian(scale), laplace(scale)] {
                let closed = k.privacy_profile(eps);
                let quad = k.privacy_profile_quadrature(eps, 1e-12).unwrap();
                assert!(
                    (closed - quad).abs() <= 1e-9,
                    "{:?} scale {scale} eps {eps}: closed {closed} vs quadrature {quad}",
                    k.kind
                );
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Recycling-specific quantities
// ---------------------------------------------------------------------------

#[test]
fn shift_weight_matches_normal_cdf_derivation() {
    // Gaussian σ = 1, θ = 1, Δ_f = 1: both shift-window lobes reduce to
    // Φ(1) − Φ(0) = 0.341344746…; 𝓛(q = ½) = ln 2.
    let k = gaussian(1.0);
    let sw = shift_params(&k, &ErrorBound::new(1.0).unwrap(), 0.5);
    assert_abs_diff_eq!(sw.w, 0.341_344_746_068_542_9, epsilon = 1e-12);
    assert_abs_diff_eq!(sw.l, std::f64::consts::LN_2, epsilon = 1e-15);
}

#[test]
fn acceptance_matches_reference_value() {
    // σ = 1, θ = 1, q = ½: p_θ = 2Φ(1) − 1, acceptance p_θ/(1 − p̄_θ q).
    let mech =
        BrdpMechanism::new(gaussian(1.0), 0.5, ErrorBound::new(1.0).unwrap()).unwrap();
    assert_abs_diff_eq!(
        mech.acceptance_rate(),
        0.811_426_582_654_939_7,
        epsilon = 1e-12
    );
}

#[test]
fn budgeted_laplace_spends_the_delta_component() {
    // The (ε, δ)-aware Laplacian budget is ε′ = ε − 2·ln(1 − δ) > ε, so the
    // calibrated scale is strictly tighter than the pure-ε scale and its
    // profile vanishes from the enhanced budget onward.
    let budget = BudgetPair::new(1.0, 1e-2).unwrap();
    let k = calibrate_kernel(KernelKind::Laplacian, &budget, 1.0).unwrap();
    let eps_prime = 1.0 - 2.0 * (-1e-2f64).ln_1p();
    assert_abs_diff_eq!(k.scale, 1.0 / eps_prime, epsilon = 1e-12);
    assert!(k.scale < 1.0);
    assert_abs_diff_eq!(k.privacy_profile(eps_prime), 0.0, epsilon = 1e-15);
    // At the plain ε the budget is spent exactly: δ(ε) = 1 − e^{(ε−ε′)/2}
    // = 1 − e^{ln(1−δ)} = δ, i.e. the enhanced budget is tight at (ε, δ).
    assert_abs_diff_eq!(k.privacy_profile(1.0), 1e-2, epsilon = 1e-12);
}
