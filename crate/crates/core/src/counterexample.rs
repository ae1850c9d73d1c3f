//! Constructive realization of a prescribed attracting interval.
//!
//! When the map `x ↦ f(x)` overshoots its equilibrium (`M = max f on
//! [0, K] > K`, `m = min f on [K, M]`), no interval strictly inside
//! `(m, M)` traps every solution of the delay model: for any targets
//! `a ∈ (m, x_max)` and `b ∈ (K, M)` with `min f on [K, b] < a` there is a
//! piecewise-frozen delay schedule and an initial function whose solution
//! oscillates exactly between `a` and `b`.
//!
//! The construction alternates two frozen samples. While the sample reads
//! a point `x₁` with `f(x₁) = m₁ < a`, the state relaxes from `b` down to
//! `a` (reaching it at `τ₁ = ln((b−m₁)/(a−m₁))/r`); while it reads the
//! maximizer `x_max` with `f(x_max) = M`, the state relaxes back up to `b`
//! (at `τ₂ = τ₁ + ln((M−a)/(M−b))/r`). Each phase is a pure linear
//! relaxation, so every switch instant and sample point has a closed form;
//! the schedule recomputes them per cycle rather than repeating offsets, so
//! solver drift cannot desynchronize the sampling.

use serde::Serialize;

use crate::analysis;
use crate::error::{Error, Result};
use crate::integrator::{
    self, History, InitialHistory, IntegrateOptions, ModelInstance, Rate, Trajectory,
};
use crate::measure::DelayMeasure;
use crate::reproduction::{ExtremumMode, ExtremumTie, ReproductionFunction};
use crate::search;

/// Piecewise-constant sampling schedule: `samples[i]` is the frozen past
/// instant in force on `(switch_times[i], switch_times[i+1]]`; the last
/// sample stays in force beyond the final switch.
#[derive(Clone, Debug, Serialize)]
pub struct DelaySchedule {
    switch_times: Vec<f64>,
    samples: Vec<f64>,
}

impl DelaySchedule {
    pub fn new(switch_times: Vec<f64>, samples: Vec<f64>) -> Result<Self> {
        if switch_times.is_empty() || switch_times.len() != samples.len() {
            return Err(Error::InvalidMeasure {
                reason: "schedule needs equal-length, nonempty switch and sample lists".into(),
            });
        }
        if switch_times[0] != 0.0 {
            return Err(Error::InvalidMeasure {
                reason: format!("schedule must start at time 0, got {}", switch_times[0]),
            });
        }
        if switch_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidMeasure {
                reason: "schedule switch times must be strictly increasing".into(),
            });
        }
        for (s, tau) in samples.iter().zip(&switch_times) {
            if !(s.is_finite() && s <= tau) {
                return Err(Error::InvalidMeasure {
                    reason: format!("frozen sample {s} lies after its activation time {tau}"),
                });
            }
        }
        Ok(Self {
            switch_times,
            samples,
        })
    }

    /// Single frozen sample `s ≤ 0` in force for all `t ≥ 0`.
    pub fn single(sample: f64) -> Result<Self> {
        Self::new(vec![0.0], vec![sample])
    }

    /// The sample instant in force at time `t`.
    pub fn active_sample(&self, t: f64) -> f64 {
        let i = self
            .switch_times
            .partition_point(|&s| s < t)
            .saturating_sub(1);
        self.samples[i]
    }

    pub fn switch_times(&self) -> &[f64] {
        &self.switch_times
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }
}

/// Targets for the construction: realize `liminf x = target_low` and
/// `limsup x = target_high` for the model `x' = r [f(x(h(t))) − x]`.
#[derive(Clone, Debug)]
pub struct CounterexampleSpec {
    pub f: ReproductionFunction,
    pub r: f64,
    pub target_low: f64,
    pub target_high: f64,
}

/// Closed-form quantities predicted by the construction.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Predicted {
    /// First downswitch: `x(tau1) = target_low`.
    pub tau1: f64,
    /// Cycle period: `x(tau2) = target_high`.
    pub tau2: f64,
    /// Sampled point with `f(x1) < target_low`.
    pub x1: f64,
    /// Forcing level during downswings: `m1 = f(x1)`.
    pub m1: f64,
    /// Initial frozen sample: `φ(s0) = x1`, `s0 ∈ (−1, 0)`.
    pub s0: f64,
    /// Offset into each downswing where the maximizer is crossed.
    pub s1: f64,
}

/// Output of [`construct`].
#[derive(Clone, Debug)]
pub struct Construction {
    pub history: InitialHistory,
    pub schedule: DelaySchedule,
    pub predicted: Predicted,
}

/// Simulation-backed check of a construction.
#[derive(Debug)]
pub struct ValidationOutcome {
    pub inf_est: f64,
    pub sup_est: f64,
    /// Largest deviation of `x` from the predicted value over all switch
    /// instants (`target_high` at even switches, `target_low` at odd ones).
    pub max_abs_dev_from_prediction: f64,
    pub trajectory: Trajectory,
}

const LOG_RATIO_CAP: f64 = 1e6;
const MIN_TARGET_MARGIN: f64 = 1e-6;

/// Build the initial function, the sampling schedule covering `cycles` full
/// periods, and the predicted switch data.
pub fn construct(spec: &CounterexampleSpec, cycles: usize) -> Result<Construction> {
    if !(spec.r.is_finite() && spec.r > 0.0) {
        return Err(Error::InvalidParameters {
            reason: format!("rate must be positive, got {}", spec.r),
        });
    }
    if cycles == 0 {
        return Err(Error::InvalidParameters {
            reason: "at least one cycle is required".into(),
        });
    }
    let f = &spec.f;
    let (a, b) = (spec.target_low, spec.target_high);
    let k = f.equilibrium().ok_or(Error::NoEquilibrium)?;
    let (m, big_m) = analysis::attracting_interval(f)?;
    let (x_max, _) = f.peak_over_basin().expect("equilibrium implies a peak");
    if !(m < a && a < x_max) {
        return Err(Error::InfeasibleTargets {
            reason: format!("target_low must lie in (m, x_max) = ({m}, {x_max}), got {a}"),
        });
    }
    if !(k < b && b < big_m) {
        return Err(Error::InfeasibleTargets {
            reason: format!("target_high must lie in (K, M) = ({k}, {big_m}), got {b}"),
        });
    }
    let (_, dip) = f.extremum_points(k, b, ExtremumMode::Min, ExtremumTie::Smallest)?;
    if dip >= a {
        return Err(Error::InfeasibleTargets {
            reason: format!("min of f on [K, target_high] is {dip} >= target_low {a}"),
        });
    }

    // Largest grid point of (K, b) whose image falls below target_low;
    // taking the largest maximizes the margin a − m1.
    let n = search::grid_size(k, b);
    let mut x1 = None;
    for i in (1..n).rev() {
        let x = k + (b - k) * i as f64 / n as f64;
        if f.eval_raw(x) < a {
            x1 = Some(x);
            break;
        }
    }
    let x1 = x1.ok_or_else(|| Error::InfeasibleTargets {
        reason: format!("no sampled point of (K, {b}) maps below target_low {a}"),
    })?;
    let m1 = f.eval_raw(x1);
    if a - m1 < MIN_TARGET_MARGIN {
        return Err(Error::InfeasibleTargets {
            reason: format!(
                "target_low {a} is within {MIN_TARGET_MARGIN:e} of the sampled forcing {m1}"
            ),
        });
    }

    let down_ratio = (b - m1) / (a - m1);
    let up_ratio = (big_m - a) / (big_m - b);
    if !(down_ratio.is_finite() && up_ratio.is_finite())
        || down_ratio > LOG_RATIO_CAP
        || up_ratio > LOG_RATIO_CAP
    {
        return Err(Error::InfeasibleTargets {
            reason: format!(
                "relaxation ratios {down_ratio:.3e} / {up_ratio:.3e} exceed the cap {LOG_RATIO_CAP:e}; the cycle time diverges"
            ),
        });
    }
    let tau1 = down_ratio.ln() / spec.r;
    let tau2 = tau1 + up_ratio.ln() / spec.r;
    // Crossing offsets, both in closed form from the phase relaxations:
    // the downswing passes x_max at s1, the upswing passes x1 at sigma.
    let s1 = ((b - m1) / (x_max - m1)).ln() / spec.r;
    let sigma = ((big_m - a) / (big_m - x1)).ln() / spec.r;
    let s0 = (x1 - a) / (b - a) - 1.0;

    let mut switch_times = Vec::with_capacity(2 * cycles);
    let mut samples = Vec::with_capacity(2 * cycles);
    for j in 0..cycles {
        let cycle_start = j as f64 * tau2;
        switch_times.push(cycle_start);
        samples.push(if j == 0 {
            s0
        } else {
            (j - 1) as f64 * tau2 + tau1 + sigma
        });
        switch_times.push(cycle_start + tau1);
        samples.push(cycle_start + s1);
    }
    let schedule = DelaySchedule::new(switch_times, samples)?;
    let history = InitialHistory::linear_ramp(-1.0, a, b)?;
    Ok(Construction {
        history,
        schedule,
        predicted: Predicted {
            tau1,
            tau2,
            x1,
            m1,
            s0,
            s1,
        },
    })
}

/// Integrate the constructed problem over `horizon_cycles` periods and
/// compare against the predictions: `x = target_high` at even switches,
/// `x = target_low` at odd switches, and the whole trajectory inside
/// `[target_low, target_high]` up to tolerance.
pub fn validate(spec: &CounterexampleSpec, horizon_cycles: usize) -> Result<ValidationOutcome> {
    let built = construct(spec, horizon_cycles)?;
    let model = ModelInstance::new(
        spec.f.clone(),
        Rate::constant(spec.r)?,
        DelayMeasure::frozen_schedule(built.schedule.clone()),
    );
    let horizon = horizon_cycles as f64 * built.predicted.tau2;
    let traj = integrator::integrate(
        &model,
        &built.history,
        horizon,
        &IntegrateOptions::default(),
    )?;

    let mut max_dev = 0.0f64;
    for j in 0..horizon_cycles {
        let t_high = j as f64 * built.predicted.tau2;
        let t_low = t_high + built.predicted.tau1;
        let dev_high = (traj.value(t_high)? - spec.target_high).abs();
        let dev_low = (traj.value(t_low)? - spec.target_low).abs();
        max_dev = max_dev.max(dev_high).max(dev_low);
    }
    max_dev = max_dev.max((traj.value(horizon)? - spec.target_high).abs());

    let mut inf = f64::INFINITY;
    let mut sup = f64::NEG_INFINITY;
    for (_, x) in traj.knots() {
        inf = inf.min(x);
        sup = sup.max(x);
    }
    Ok(ValidationOutcome {
        inf_est: inf,
        sup_est: sup,
        max_abs_dev_from_prediction: max_dev,
        trajectory: traj,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::exact_linear_relaxation;

    fn e3_spec() -> CounterexampleSpec {
        CounterexampleSpec {
            f: ReproductionFunction::nicholson(std::f64::consts::E.powi(3), 1.0, 1.0).unwrap(),
            r: 1.0,
            target_low: 0.5,
            target_high: 6.0,
        }
    }

    #[test]
    fn schedule_validation_and_lookup() {
        let s = DelaySchedule::new(vec![0.0, 1.0, 2.5], vec![-0.5, 0.3, 1.7]).unwrap();
        assert_eq!(s.active_sample(0.0), -0.5);
        assert_eq!(s.active_sample(0.99), -0.5);
        assert_eq!(s.active_sample(1.0), -0.5);
        assert_eq!(s.active_sample(1.0 + 1e-12), 0.3);
        assert_eq!(s.active_sample(2.5), 0.3);
        assert_eq!(s.active_sample(100.0), 1.7);

        assert!(DelaySchedule::new(vec![0.5], vec![0.0]).is_err());
        assert!(DelaySchedule::new(vec![0.0, 1.0], vec![0.0, 1.5]).is_err());
        assert!(DelaySchedule::new(vec![0.0, 0.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn construction_matches_closed_form_oracle() {
        let spec = e3_spec();
        let built = construct(&spec, 1).unwrap();
        let p = built.predicted;

        // Oracle: recompute every quantity from scratch.
        let f = |x: f64| std::f64::consts::E.powi(3) * x * (-x).exp();
        let big_m = crate::reproduction::E_SQUARED;
        assert!(f(p.x1) < spec.target_low);
        let m1 = f(p.x1);
        assert!((p.m1 - m1).abs() < 1e-12);
        let tau1 = ((spec.target_high - m1) / (spec.target_low - m1)).ln();
        let tau2 = tau1 + ((big_m - spec.target_low) / (big_m - spec.target_high)).ln();
        assert!((p.tau1 - tau1).abs() < 1e-9, "{} vs {}", p.tau1, tau1);
        assert!((p.tau2 - tau2).abs() < 1e-9);

        // Magnitudes from the worked example: m1 near 6 e^{-3}, tau1 near
        // 3.344, tau2 near 4.945.
        assert!((p.m1 - 6.0 * (-3.0f64).exp()).abs() < 1e-3);
        assert!((p.tau1 - 3.344).abs() < 5e-3);
        assert!((p.tau2 - 4.945).abs() < 5e-3);

        // The initial sample reads exactly x1.
        let phi = &built.history;
        assert!((phi.domain_start() - (-1.0)).abs() < 1e-15);
        let traj_val = spec.target_low + (p.s0 + 1.0) * (spec.target_high - spec.target_low);
        assert!((traj_val - p.x1).abs() < 1e-12);
    }

    #[test]
    fn schedule_samples_precede_activation() {
        let built = construct(&e3_spec(), 4).unwrap();
        let st = built.schedule.switch_times();
        let sm = built.schedule.samples();
        assert_eq!(st.len(), 8);
        for i in 0..st.len() {
            assert!(
                sm[i] < st[i],
                "sample {} not before switch {}",
                sm[i],
                st[i]
            );
            if i > 0 {
                // Each sample lies inside the previous phase.
                assert!(sm[i] > st[i - 1] || i == 1);
            }
        }
    }

    #[test]
    fn degenerate_targets_are_rejected() {
        // target_high at the top of the attracting interval: upswing time
        // diverges.
        let mut spec = e3_spec();
        spec.target_high = crate::reproduction::E_SQUARED - 1e-9;
        assert!(matches!(
            construct(&spec, 1),
            Err(Error::InfeasibleTargets { .. })
        ));

        // No sampled point of (K, b) maps below target_low.
        let mut spec2 = e3_spec();
        spec2.target_low = 0.25;
        spec2.target_high = 5.0;
        assert!(matches!(
            construct(&spec2, 1),
            Err(Error::InfeasibleTargets { .. })
        ));

        // target_low below the attracting floor.
        let mut spec3 = e3_spec();
        spec3.target_low = 0.01;
        assert!(matches!(
            construct(&spec3, 1),
            Err(Error::InfeasibleTargets { .. })
        ));
    }

    #[test]
    fn single_cycle_tracks_linear_relaxation() {
        let spec = e3_spec();
        let built = construct(&spec, 1).unwrap();
        let out = validate(&spec, 1).unwrap();
        assert!(out.max_abs_dev_from_prediction < 1e-8);
        let p = built.predicted;
        // Downswing: x(t) = (b - m1) e^{-rt} + m1.
        for i in 0..=20 {
            let t = p.tau1 * i as f64 / 20.0;
            let exact = exact_linear_relaxation(spec.r, p.m1, spec.target_high, t);
            let got = out.trajectory.value(t).unwrap();
            assert!((got - exact).abs() < 1e-9, "t = {t}: {got} vs {exact}");
        }
        // Upswing: relaxation toward M starting from a.
        let big_m = crate::reproduction::E_SQUARED;
        for i in 1..=20 {
            let t = p.tau1 + (p.tau2 - p.tau1) * i as f64 / 20.0;
            let exact = exact_linear_relaxation(spec.r, big_m, spec.target_low, t - p.tau1);
            let got = out.trajectory.value(t).unwrap();
            assert!((got - exact).abs() < 1e-9, "t = {t}: {got} vs {exact}");
        }
    }

    #[test]
    fn ten_cycles_hold_the_band() {
        let spec = e3_spec();
        let out = validate(&spec, 10).unwrap();
        assert!((out.inf_est - spec.target_low).abs() < 1e-3);
        assert!((out.sup_est - spec.target_high).abs() < 1e-3);
        assert!(out.max_abs_dev_from_prediction < 1e-6);
        // Monotone alternation between switch instants.
        let built = construct(&spec, 10).unwrap();
        let st = built.schedule.switch_times();
        let mut prev: Option<(f64, f64)> = None;
        for (t, x) in out.trajectory.knots() {
            if let Some((pt, px)) = prev {
                let phase = st.partition_point(|&s| s < t).saturating_sub(1);
                if pt > st[phase] {
                    if phase % 2 == 0 {
                        assert!(x < px, "not decreasing at t = {t} in phase {phase}");
                    } else {
                        assert!(x > px, "not increasing at t = {t} in phase {phase}");
                    }
                }
            }
            prev = Some((t, x));
        }
    }

    #[test]
    fn sampled_points_read_intended_values() {
        let spec = e3_spec();
        let built = construct(&spec, 6).unwrap();
        let out = validate(&spec, 6).unwrap();
        let (x_max, _) = spec.f.peak_over_basin().unwrap();
        for (i, (&tau, &s)) in built
            .schedule
            .switch_times()
            .iter()
            .zip(built.schedule.samples())
            .enumerate()
        {
            let intended = if i % 2 == 0 {
                built.predicted.x1
            } else {
                x_max
            };
            let got = out.trajectory.value(s).unwrap();
            assert!(
                (got - intended).abs() < 1e-6,
                "sample {i} at s = {s} (switch {tau}) reads {got}, wanted {intended}"
            );
        }
    }

    #[test]
    fn construction_succeeds_near_interval_edges() {
        // Any band strictly inside (m, M) is realizable: push both targets
        // within 0.01 of the interval edges.
        let f = ReproductionFunction::nicholson(std::f64::consts::E.powi(3), 1.0, 1.0).unwrap();
        let (m, big_m) = crate::analysis::attracting_interval(&f).unwrap();
        let spec = CounterexampleSpec {
            f,
            r: 1.0,
            target_low: m + 0.01,
            target_high: big_m - 0.01,
        };
        let out = validate(&spec, 2).unwrap();
        assert!((out.inf_est - spec.target_low).abs() < 1e-3);
        assert!((out.sup_est - spec.target_high).abs() < 1e-3);

        // The realized band never converges: tail statistics report the
        // oscillation range and no limit.
        let tail = crate::integrator::tail_statistics(&out.trajectory, 0.25, 1e-4).unwrap();
        assert!(!tail.converged);
        assert!(tail.limit_est.is_none());
        assert!(tail.sup_est - tail.inf_est > 1.0);
    }

    #[test]
    fn near_two_cycle_targets_oscillate() {
        // Targets just inside a genuine 2-cycle of the map.
        let f = ReproductionFunction::nicholson(10.0, 1.0, 1.0).unwrap();
        let cycles = crate::analysis::two_cycle_scan(&f).unwrap();
        let (a_star, b_star) = cycles[0];
        let spec = CounterexampleSpec {
            f,
            r: 1.0,
            target_low: a_star + 0.05,
            target_high: b_star - 0.05,
        };
        let out = validate(&spec, 3).unwrap();
        assert!((out.inf_est - spec.target_low).abs() < 1e-3);
        assert!((out.sup_est - spec.target_high).abs() < 1e-3);
    }
}
