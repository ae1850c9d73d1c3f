//! Discrete-map and threshold analysis.
//!
//! The long-run behavior of the distributed-delay model is governed by the
//! one-dimensional map `x ↦ f(x)`. This module implements the toolbox built
//! on that observation:
//!
//! - [`permanence_bounds`]: a positive band `[A, B]` that traps every
//!   solution, constructed from the observed initial range;
//! - [`bound_sequences`]: the two-sided extremum recursion whose limits
//!   decide convergence to the equilibrium versus a residual band;
//! - [`coppel_global_attractivity`]: the second-iterate test — the
//!   equilibrium attracts all positive orbits of the map exactly when it is
//!   the only fixed point of `f∘f`;
//! - [`check_overshoot_return`]: the equivalent interval condition "an
//!   overshoot above `K` returns above `a`";
//! - [`attracting_interval`]: the sharpest delay-uniform trapping interval
//!   `(m, M)` once absolute stability fails;
//! - [`small_delay_threshold`]: delay bounds under which all solutions
//!   converge regardless of the kernel;
//! - [`nicholson_report`] / [`mackey_glass_report`]: regime classification
//!   and every threshold for the two built-in models, including the delays
//!   at which the linearization at `K` crosses the imaginary axis.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::reproduction::{
    Descriptor, ExtremumMode, ExtremumTie, ReproductionFunction, DEFAULT_GRID, E_SQUARED,
};
use crate::search;

/// Grid size for the second-iterate fixed-point scan.
pub const COPPEL_SCAN_POINTS: usize = 1 << 16;

/// Default grid size for the overshoot-return condition.
pub const OVERSHOOT_GRID: usize = 4096;

/// Positive band `[lower, upper]` confining every solution.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PermanenceBounds {
    pub lower: f64,
    pub upper: f64,
}

/// The two-sided extremum recursion: `lower` climbs toward `K` from below,
/// `upper` descends from above. `converged_to_k` reports whether both
/// reached the equilibrium (as opposed to stalling on a residual band).
#[derive(Clone, Debug, Serialize)]
pub struct BoundSequence {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub converged_to_k: bool,
}

/// Outcome of the second-iterate fixed-point scan.
#[derive(Clone, Debug, Serialize)]
pub struct CoppelResult {
    pub pass: bool,
    /// Fixed points of `f∘f` other than the equilibrium.
    pub extra_fixed_points: Vec<f64>,
}

/// Outcome of the overshoot-return scan.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct OvershootReturn {
    pub holds: bool,
    /// First grid value of `a` at which the condition fails.
    pub witness: Option<f64>,
}

/// Small-delay stability thresholds `1/(r(L+1))` and `1/(r(L*+1))`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SmallDelayThresholds {
    pub tau_l: f64,
    pub tau_l_star: Option<f64>,
}

/// Stability classification of a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// No positive equilibrium; every solution decays to zero.
    Extinction,
    /// The equilibrium attracts all positive solutions for every delay.
    DelayIndependentGlobal,
    /// Attractivity depends on the delay.
    DelayDependent,
}

/// Full analysis output for one model.
#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub regime: Regime,
    pub equilibrium: Option<f64>,
    /// `(m, M)`: sharpest delay-uniform attracting interval when absolute
    /// stability fails; equals `(K, K)` otherwise.
    pub attracting_interval: Option<(f64, f64)>,
    pub coppel_pass: Option<bool>,
    pub two_cycles: Vec<(f64, f64)>,
    /// Named delay thresholds (time units).
    pub thresholds: BTreeMap<String, f64>,
    /// Delays at which the linearization at `K` has a purely imaginary
    /// characteristic root; the first entry is the local stability boundary.
    pub hopf_delays: Vec<f64>,
    /// Set when two published forms of the same threshold disagree; both are
    /// listed in `thresholds`.
    pub threshold_discrepancy: bool,
    pub descriptor: Descriptor,
}

/// Iterates of the map `x ↦ f(x)` starting from `x0`, length `n + 1`.
pub fn difference_orbit(f: &ReproductionFunction, x0: f64, n: usize) -> Result<Vec<f64>> {
    if x0.is_nan() || x0 <= 0.0 {
        return Err(Error::NegativeInput { x: x0 });
    }
    let mut orbit = Vec::with_capacity(n + 1);
    orbit.push(x0);
    let mut x = x0;
    for _ in 0..n {
        x = f.eval(x)?;
        orbit.push(x);
    }
    Ok(orbit)
}

/// Trap band `[A, B]` from an observed initial range.
///
/// The observed range is first widened to straddle `K` (to `K/2` from below
/// or `2K` from above when it does not), then
/// `B = max{max f on the range, observed max, max f on [0, K]}` and
/// `A = min{min f on the range, observed min, min f on [K, B]}`.
pub fn permanence_bounds(
    f: &ReproductionFunction,
    observed_min: f64,
    observed_max: f64,
) -> Result<PermanenceBounds> {
    let k = f.equilibrium().ok_or(Error::NoEquilibrium)?;
    if !(observed_min > 0.0 && observed_min <= observed_max) {
        return Err(Error::InvalidParameters {
            reason: format!(
                "observed range must satisfy 0 < min <= max, got [{observed_min}, {observed_max}]"
            ),
        });
    }
    let x_min = if observed_min < k {
        observed_min
    } else {
        observed_min.min(k / 2.0)
    };
    let x_max = if observed_max > k {
        observed_max
    } else {
        observed_max.max(2.0 * k)
    };
    let (_, range_max) =
        f.extremum_points(x_min, x_max, ExtremumMode::Max, ExtremumTie::Greatest)?;
    let (_, range_min) =
        f.extremum_points(x_min, x_max, ExtremumMode::Min, ExtremumTie::Smallest)?;
    let peak = f.peak_over_basin().map(|(_, v)| v).unwrap_or(k);
    let upper = range_max.max(x_max).max(peak);
    let (_, above_min) = f.extremum_points(k, upper, ExtremumMode::Min, ExtremumTie::Smallest)?;
    let lower = range_min.min(x_min).min(above_min);
    Ok(PermanenceBounds { lower, upper })
}

/// The two-sided extremum recursion started from a permanence band:
/// `upper_0 = max f on [A, K]`, `lower_0 = min f on [K, upper_0]`, then
/// `upper_{j+1} = max f on [lower_j, upper_j]` and
/// `lower_{j+1} = min f on [lower_j, upper_{j+1}]`.
///
/// Stops when both bounds are within `tol` of `K`, when a bound crosses `K`
/// (the monotone case), or when both bounds stall (relative change below
/// 1e-12 across five iterations) — the stalled case reports
/// `converged_to_k = false` and the limits bracket the map's residual band.
pub fn bound_sequences(
    f: &ReproductionFunction,
    start: &PermanenceBounds,
    max_iter: usize,
    tol: f64,
) -> Result<BoundSequence> {
    const STALL_SPAN: usize = 5;
    const STALL_REL: f64 = 1e-12;

    let k = f.equilibrium().ok_or(Error::NoEquilibrium)?;
    if !(start.lower > 0.0 && start.lower <= k) {
        return Err(Error::InvalidParameters {
            reason: format!(
                "permanence band [{}, {}] does not bracket K = {k}",
                start.lower, start.upper
            ),
        });
    }
    let (_, upper0) =
        f.extremum_points(start.lower, k, ExtremumMode::Max, ExtremumTie::Greatest)?;
    let mut upper = vec![upper0];
    if upper0 <= k {
        // Monotone case: no overshoot above K is possible.
        return Ok(BoundSequence {
            lower: vec![k.min(upper0)],
            upper,
            converged_to_k: true,
        });
    }
    let (_, lower0) = f.extremum_points(k, upper0, ExtremumMode::Min, ExtremumTie::Smallest)?;
    let mut lower = vec![lower0];
    let mut converged = false;
    for _ in 1..=max_iter {
        let (m_prev, big_prev) = (*lower.last().unwrap(), *upper.last().unwrap());
        if m_prev >= k || big_prev <= k {
            converged = true;
            break;
        }
        let (_, big_next) =
            f.extremum_points(m_prev, big_prev, ExtremumMode::Max, ExtremumTie::Greatest)?;
        let (_, m_next) = f.extremum_points(
            m_prev,
            big_next.max(m_prev),
            ExtremumMode::Min,
            ExtremumTie::Smallest,
        )?;
        upper.push(big_next);
        lower.push(m_next);
        if (big_next - k).max(k - m_next) < tol {
            converged = true;
            break;
        }
        let n = lower.len();
        if n > STALL_SPAN {
            let dl = (lower[n - 1] - lower[n - 1 - STALL_SPAN]).abs();
            let du = (upper[n - 1] - upper[n - 1 - STALL_SPAN]).abs();
            if dl <= STALL_REL * lower[n - 1].abs() && du <= STALL_REL * upper[n - 1].abs() {
                break;
            }
        }
    }
    Ok(BoundSequence {
        lower,
        upper,
        converged_to_k: converged,
    })
}

fn coppel_scan(f: &ReproductionFunction, scan: usize) -> Result<(f64, Vec<f64>)> {
    let k = f.equilibrium().ok_or(Error::NoEquilibrium)?;
    let b = permanence_bounds(f, k, k)?.upper;
    let lo = 1e-6 * k;
    let hi = b + 1.0;
    let g = |x: f64| f.eval_raw(f.eval_raw(x)) - x;
    let n = scan.max(1024);
    let h = (hi - lo) / n as f64;
    let mut roots: Vec<f64> = Vec::new();
    let mut prev_x = lo;
    let mut prev_g = g(lo);
    for i in 1..=n {
        let x = if i == n { hi } else { lo + i as f64 * h };
        let gx = g(x);
        if prev_g * gx < 0.0 {
            roots.push(search::bisect(&g, prev_x, x, prev_g));
        } else if gx == 0.0 && prev_g != 0.0 {
            roots.push(x);
        }
        prev_x = x;
        prev_g = gx;
    }
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-7 * a.abs().max(1.0));
    Ok((k, roots))
}

/// Second-iterate test: the equilibrium attracts every positive orbit of
/// the map `x ↦ f(x)` exactly when it is the only fixed point of `f∘f`.
/// Scans `f(f(x)) − x` for sign changes over `(1e-6 K, B + 1]` and refines
/// each by bisection.
pub fn coppel_global_attractivity(f: &ReproductionFunction, scan: usize) -> Result<CoppelResult> {
    let (k, roots) = coppel_scan(f, scan)?;
    let tol = 1e-6 * k.max(1.0);
    let extra: Vec<f64> = roots.into_iter().filter(|x| (x - k).abs() > tol).collect();
    Ok(CoppelResult {
        pass: extra.is_empty(),
        extra_fixed_points: extra,
    })
}

/// Two-cycles `(a, b)` of the map with `a < K < b`, `f(a) = b`, `f(b) = a`,
/// paired from the second-iterate fixed points.
pub fn two_cycle_scan(f: &ReproductionFunction) -> Result<Vec<(f64, f64)>> {
    let coppel = coppel_global_attractivity(f, COPPEL_SCAN_POINTS)?;
    let k = f.equilibrium().expect("checked by coppel scan");
    let mut cycles: Vec<(f64, f64)> = Vec::new();
    for &a in coppel.extra_fixed_points.iter().filter(|&&x| x < k) {
        let fa = f.eval_raw(a);
        let tol = 1e-6 * fa.abs().max(1.0);
        let partner =
            coppel.extra_fixed_points.iter().copied().find(|&b| {
                b > k && (f.eval_raw(a) - b).abs() < tol && (f.eval_raw(b) - a).abs() < tol
            });
        if let Some(b) = partner {
            cycles.push((a, b));
        }
    }
    Ok(cycles)
}

/// Sharpest delay-uniform attracting interval `(m, M)` with
/// `M = max f on [0, K]` and `m = min f on [K, M]`. Returns `(K, K)` when
/// the map never overshoots (`M ≤ K`), i.e. in the delay-independent case.
pub fn attracting_interval(f: &ReproductionFunction) -> Result<(f64, f64)> {
    let k = f.equilibrium().ok_or(Error::NoEquilibrium)?;
    let (_, big_m) = f
        .peak_over_basin()
        .map(Ok)
        .unwrap_or_else(|| f.extremum_points(0.0, k, ExtremumMode::Max, ExtremumTie::Greatest))?;
    if big_m <= k + 1e-12 * k.max(1.0) {
        return Ok((k, k));
    }
    let (_, m) = f.extremum_points(k, big_m, ExtremumMode::Min, ExtremumTie::Smallest)?;
    Ok((m, big_m))
}

/// Scan of the overshoot-return condition: for every `a` in a dense grid
/// over `(0, K)`, if `max f on [a, K]` exceeds `K` then
/// `min f on [K, that max]` must stay above `a`. Failure at some `a` is
/// equivalent to the map having extra second-iterate fixed points.
pub fn check_overshoot_return(f: &ReproductionFunction, a_grid: usize) -> Result<OvershootReturn> {
    let k = f.equilibrium().ok_or(Error::NoEquilibrium)?;
    let n = a_grid.max(16);
    for i in 1..n {
        let a = k * i as f64 / n as f64;
        let (_, max_val) = f.extremum_points(a, k, ExtremumMode::Max, ExtremumTie::Greatest)?;
        if max_val > k {
            let (_, min_val) =
                f.extremum_points(k, max_val, ExtremumMode::Min, ExtremumTie::Smallest)?;
            if min_val <= a {
                return Ok(OvershootReturn {
                    holds: false,
                    witness: Some(a),
                });
            }
        }
    }
    Ok(OvershootReturn {
        holds: true,
        witness: None,
    })
}

/// Delay thresholds below which every solution converges to `K` for any
/// kernel: `tau_l = 1/(r(L+1))` from the global Lipschitz constant and the
/// generally larger `tau_l_star = 1/(r(L*+1))` from the equilibrium secant
/// bound (`None` without an equilibrium).
pub fn small_delay_threshold(f: &ReproductionFunction, r: f64) -> Result<SmallDelayThresholds> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::InvalidParameters {
            reason: format!("rate must be positive, got {r}"),
        });
    }
    let lip = f.lipschitz_constants(DEFAULT_GRID);
    Ok(SmallDelayThresholds {
        tau_l: 1.0 / (r * (lip.l + 1.0)),
        tau_l_star: lip.l_star.map(|ls| 1.0 / (r * (ls + 1.0))),
    })
}

/// Delays at which the linearized Nicholson model has a purely imaginary
/// characteristic root, for `u = ln(p/δ) > 2`:
///
/// ```text
/// ω = δ √(u(u−2)),   τ_k = [π − arcsin(√(u(u−2))/(u−1)) + 2πk] / ω.
/// ```
///
/// The root condition is `iω + δ = δ(1−u) e^{-iωτ}`; its real part forces
/// `cos ωτ = 1/(1−u) < 0`, so `ωτ` lies in the second quadrant — hence the
/// `π −` branch of the arcsine. The first entry is the boundary of local
/// stability; beyond it the equilibrium cannot be globally attractive.
pub fn nicholson_hopf_delays(p: f64, delta: f64) -> Vec<f64> {
    let u = (p / delta).ln();
    if u.is_nan() || u <= 2.0 {
        return Vec::new();
    }
    let omega_hat = (u * (u - 2.0)).sqrt();
    let omega = delta * omega_hat;
    let base = std::f64::consts::PI - (omega_hat / (u - 1.0)).asin();
    let cap = 100.0 / delta;
    let mut out = Vec::new();
    for k in 0..10 {
        let tau = (base + 2.0 * std::f64::consts::PI * k as f64) / omega;
        out.push(tau);
        if tau > cap {
            break;
        }
    }
    out
}

fn base_report(f: &ReproductionFunction, regime: Regime, r: f64) -> Result<StabilityReport> {
    let mut thresholds = BTreeMap::new();
    let (attracting, coppel_pass, two_cycles) = if f.equilibrium().is_some() {
        let small = small_delay_threshold(f, r)?;
        thresholds.insert("tau_l".to_string(), small.tau_l);
        if let Some(ts) = small.tau_l_star {
            thresholds.insert("tau_l_star".to_string(), ts);
        }
        let coppel = coppel_global_attractivity(f, COPPEL_SCAN_POINTS)?;
        let cycles = two_cycle_scan(f)?;
        (Some(attracting_interval(f)?), Some(coppel.pass), cycles)
    } else {
        (None, None, Vec::new())
    };
    Ok(StabilityReport {
        regime,
        equilibrium: f.equilibrium(),
        attracting_interval: attracting,
        coppel_pass,
        two_cycles,
        thresholds,
        hopf_delays: Vec::new(),
        threshold_discrepancy: false,
        descriptor: f.descriptor(),
    })
}

/// Regime classification and thresholds for the Nicholson model
/// `x' = δ [ (p/δ) x(past) e^{-a x(past)} − x ]`.
///
/// Regimes: `p ≤ δ` extinction; `δ < p < δ e²` delay-independent global
/// attractivity; otherwise delay-dependent. The thresholds map carries
/// `tau_l`, `tau_l_star`, and `tau_comparison` — the constant-delay bound
/// obtained by solving `(e^{δτ} − 1)(p/δ − 1) = 1` for τ.
pub fn nicholson_report(p: f64, delta: f64, a: f64) -> Result<StabilityReport> {
    let f = ReproductionFunction::nicholson(p, delta, a)?;
    let regime = if f.equilibrium().is_none() {
        Regime::Extinction
    } else if p < delta * E_SQUARED {
        Regime::DelayIndependentGlobal
    } else {
        Regime::DelayDependent
    };
    let mut report = base_report(&f, regime, delta)?;
    if f.equilibrium().is_some() {
        let tau_comparison = (1.0 + delta / (p - delta)).ln() / delta;
        report
            .thresholds
            .insert("tau_comparison".to_string(), tau_comparison);
        report.hopf_delays = nicholson_hopf_delays(p, delta);
    }
    Ok(report)
}

/// Regime classification and thresholds for the Mackey-Glass model
/// `x' = b [ (a/b) x(past) / (1 + x(past)^γ) − x ]`.
///
/// Regimes: `a ≤ b` extinction; `γ ≤ 2`, or `γ > 2` with
/// `a < γb/(γ−2)`, delay-independent; otherwise delay-dependent.
///
/// Two published forms of the secant-bound delay threshold circulate for
/// this model: `4γ/(a(γ−1)² + 4bγ)` (the value of `1/(b(L*+1))` with
/// `L* = a(γ−1)²/(4bγ)`) and `4b²γ/(a²(γ−1)² + 4abγ)`, which differ unless
/// `b² = a`. Both are reported — `tau_l_star` and `tau_l_star_alt` — and
/// `threshold_discrepancy` is set when they disagree; simulation validates
/// the former.
pub fn mackey_glass_report(a: f64, b: f64, gamma: f64) -> Result<StabilityReport> {
    let f = ReproductionFunction::mackey_glass(a, b, gamma)?;
    let regime = if f.equilibrium().is_none() {
        Regime::Extinction
    } else if gamma <= 2.0 || a < gamma * b / (gamma - 2.0) {
        Regime::DelayIndependentGlobal
    } else {
        Regime::DelayDependent
    };
    let mut report = base_report(&f, regime, b)?;
    if f.equilibrium().is_some() && gamma > 1.0 {
        let alt = 4.0 * b * b * gamma / (a * a * (gamma - 1.0).powi(2) + 4.0 * a * b * gamma);
        report.thresholds.insert("tau_l_star_alt".to_string(), alt);
        if let Some(&main) = report.thresholds.get("tau_l_star") {
            report.threshold_discrepancy = (alt - main).abs() > 1e-9 * main.max(1e-300);
        }
    }
    Ok(report)
}

/// Generic report for a user-supplied nonlinearity: regime from the
/// second-iterate test, thresholds from the Lipschitz descriptors.
pub fn stability_report(f: &ReproductionFunction, r: f64) -> Result<StabilityReport> {
    if f.equilibrium().is_none() {
        return base_report(f, Regime::Extinction, r);
    }
    let coppel = coppel_global_attractivity(f, COPPEL_SCAN_POINTS)?;
    let regime = if coppel.pass {
        Regime::DelayIndependentGlobal
    } else {
        Regime::DelayDependent
    };
    base_report(f, regime, r)
}
