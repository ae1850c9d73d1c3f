//! Dynamical checks that the computed local stability boundary is where
//! simulated behavior actually changes. For p = 10, δ = 1 the first
//! characteristic-root crossing sits at τ₀ ≈ 2.9304: solutions settle onto
//! the equilibrium for delays below it and onto a periodic band beyond it.

use dde_stability::{
    integrate, nicholson_hopf_delays, tail_statistics, DelayMeasure, InitialHistory,
    IntegrateOptions, ModelInstance, Rate, ReproductionFunction,
};

fn run(tau: f64, horizon: f64) -> dde_stability::TailStatistics {
    let model = ModelInstance::new(
        ReproductionFunction::nicholson(10.0, 1.0, 1.0).unwrap(),
        Rate::constant(1.0).unwrap(),
        DelayMeasure::single_lag(tau).unwrap(),
    );
    let phi = InitialHistory::constant(1.0).unwrap();
    let traj = integrate(&model, &phi, horizon, &IntegrateOptions::with_step(0.01)).unwrap();
    tail_statistics(&traj, 0.25, 1e-4 * 10.0f64.ln()).unwrap()
}

#[test]
fn equilibrium_attracts_below_the_boundary() {
    let tau0 = nicholson_hopf_delays(10.0, 1.0)[0];
    assert!((tau0 - 2.930442).abs() < 1e-5);
    // Clearly inside the stable range, yet more than twice the principal
    // arcsin branch of the crossing formula (~0.832): convergence here
    // rules that branch out as the stability boundary.
    let tail = run(2.0, 800.0);
    assert!(
        tail.converged,
        "expected convergence at tau = 2.0, got band [{}, {}]",
        tail.inf_est, tail.sup_est
    );
    assert!((tail.limit_est.unwrap() - 10.0f64.ln()).abs() < 1e-3);
}

#[test]
fn oscillation_sets_in_past_the_boundary() {
    let tau0 = nicholson_hopf_delays(10.0, 1.0)[0];
    let tail = run(1.2 * tau0, 600.0);
    assert!(
        !tail.converged && tail.sup_est - tail.inf_est > 0.1,
        "expected sustained oscillation at tau = {:.3}, got band [{}, {}]",
        1.2 * tau0,
        tail.inf_est,
        tail.sup_est
    );
}
