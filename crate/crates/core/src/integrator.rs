//! Method-of-steps integration with dense output.
//!
//! The initial value problem
//!
//! ```text
//! x'(t) = r(t) [ ∫ f(x(s)) dR(t,s) − x(t) ],   x(t) = φ(t) for t ≤ 0,
//! ```
//!
//! is integrated by fixed-step classical Runge-Kutta. Each stage evaluates
//! the distributed-delay integral against the trajectory computed so far
//! (and against φ for arguments at or before zero). Dense output is a cubic
//! Hermite interpolant on the stored `(x, x')` knots, so history lookups at
//! arbitrary past times converge at the solver's order.
//!
//! Steps are aligned to the measure's switch times and to the rate
//! function's breakpoints, and every Runge-Kutta stage of a step resolves
//! piecewise-frozen sampling at the step midpoint. Integrating a frozen
//! schedule therefore treats each phase as its own smooth initial value
//! problem, which is what the two-phase relaxation constructions require.
//!
//! Stage lookups that land inside the step currently being computed (only
//! possible when a kernel carries mass at lags below the step size) are
//! served by extrapolating the previous segment's cubic; a guard rejects
//! steps larger than a quarter of the smallest positive point-mass lag.

use std::io::Write as IoWrite;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::DelayMeasure;
use crate::reproduction::ReproductionFunction;

/// A queryable history: anything the delay integral can sample.
pub trait History {
    /// Value at time `t`; out-of-span queries are a hard error.
    fn value(&self, t: f64) -> Result<f64>;
    /// Available span `(lo, hi)`.
    fn span(&self) -> (f64, f64);
}

/// Closure-backed history over a fixed span, mainly for feeding analytic
/// histories to [`DelayMeasure::stieltjes_apply`] in tests and experiments.
pub struct FnHistory<F: Fn(f64) -> f64> {
    lo: f64,
    hi: f64,
    f: F,
}

impl<F: Fn(f64) -> f64> FnHistory<F> {
    pub fn new(lo: f64, hi: f64, f: F) -> Self {
        Self { lo, hi, f }
    }
}

impl<F: Fn(f64) -> f64> History for FnHistory<F> {
    fn value(&self, t: f64) -> Result<f64> {
        if t < self.lo || t > self.hi {
            return Err(Error::HistoryGap {
                t,
                span_lo: self.lo,
                span_hi: self.hi,
            });
        }
        Ok((self.f)(t))
    }

    fn span(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
}

type HistoryEval = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// The initial function φ on `[domain_start, 0]`: continuous, nonnegative,
/// positive at zero.
#[derive(Clone)]
pub struct InitialHistory {
    domain_start: f64,
    eval: HistoryEval,
    value_at_zero: f64,
}

impl std::fmt::Debug for InitialHistory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InitialHistory")
            .field("domain_start", &self.domain_start)
            .field("value_at_zero", &self.value_at_zero)
            .finish_non_exhaustive()
    }
}

impl InitialHistory {
    /// Constant history φ ≡ c on all of `(-∞, 0]`.
    pub fn constant(c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidHistory {
                reason: format!("constant history needs a positive value, got {c}"),
            });
        }
        Ok(Self {
            domain_start: f64::NEG_INFINITY,
            eval: Arc::new(move |_| c),
            value_at_zero: c,
        })
    }

    /// Linear ramp from `(domain_start, start_value)` to `(0, end_value)`.
    pub fn linear_ramp(domain_start: f64, start_value: f64, end_value: f64) -> Result<Self> {
        if !(domain_start.is_finite() && domain_start < 0.0) {
            return Err(Error::InvalidHistory {
                reason: format!("ramp start time must be negative and finite, got {domain_start}"),
            });
        }
        let slope = (end_value - start_value) / (0.0 - domain_start);
        Self::from_fn(domain_start, move |t| end_value + slope * t)
    }

    /// Piecewise-linear table of `(t, x)` points with `t` ascending up to 0.
    pub fn table(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 || points.last().map(|p| p.0) != Some(0.0) {
            return Err(Error::InvalidHistory {
                reason: "history table needs at least two points and must end at t = 0".into(),
            });
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidHistory {
                    reason: "history table times must be strictly increasing".into(),
                });
            }
        }
        let start = points[0].0;
        let pts = points;
        Self::from_fn(start, move |t| {
            let i = pts.partition_point(|&(a, _)| a < t).clamp(1, pts.len() - 1);
            let (t0, x0) = pts[i - 1];
            let (t1, x1) = pts[i];
            x0 + (x1 - x0) * (t - t0) / (t1 - t0)
        })
    }

    /// Arbitrary continuous history on `[domain_start, 0]`. Nonnegativity
    /// and `φ(0) > 0` are checked on a sampling grid.
    pub fn from_fn<F>(domain_start: f64, eval: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(domain_start.is_finite() && domain_start <= 0.0) {
            return Err(Error::InvalidHistory {
                reason: format!("history domain start must be finite and <= 0, got {domain_start}"),
            });
        }
        let value_at_zero = eval(0.0);
        if !(value_at_zero.is_finite() && value_at_zero > 0.0) {
            return Err(Error::InvalidHistory {
                reason: format!("history must satisfy φ(0) > 0, got {value_at_zero}"),
            });
        }
        let n = 2048;
        for i in 0..=n {
            let t = domain_start * (1.0 - i as f64 / n as f64);
            let v = eval(t);
            if !(v.is_finite() && v >= -1e-12) {
                return Err(Error::InvalidHistory {
                    reason: format!("history must be finite and nonnegative, got φ({t}) = {v}"),
                });
            }
        }
        Ok(Self {
            domain_start,
            eval: Arc::new(eval),
            value_at_zero,
        })
    }

    pub fn domain_start(&self) -> f64 {
        self.domain_start
    }

    pub fn value_at_zero(&self) -> f64 {
        self.value_at_zero
    }

    fn value(&self, t: f64) -> Result<f64> {
        let tol = 1e-9 * self.domain_start.abs().max(1.0);
        if t < self.domain_start - tol || t > 0.0 {
            return Err(Error::HistoryGap {
                t,
                span_lo: self.domain_start,
                span_hi: 0.0,
            });
        }
        Ok((self.eval)(t.max(self.domain_start)))
    }
}

/// The inflow/outflow rate `r(t)`: constant or piecewise constant.
#[derive(Clone, Debug)]
pub enum Rate {
    Constant(f64),
    PiecewiseConstant { times: Vec<f64>, values: Vec<f64> },
}

impl Rate {
    pub fn constant(r: f64) -> Result<Self> {
        if !(r.is_finite() && r >= 0.0) {
            return Err(Error::InvalidParameters {
                reason: format!("rate must be finite and nonnegative, got {r}"),
            });
        }
        Ok(Self::Constant(r))
    }

    /// `values[i]` applies on `[times[i], times[i+1])`; `times[0]` must be 0.
    pub fn piecewise_constant(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() || times.is_empty() || times[0] != 0.0 {
            return Err(Error::InvalidParameters {
                reason: "piecewise rate needs matching times/values with times[0] = 0".into(),
            });
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameters {
                reason: "piecewise rate times must be strictly increasing".into(),
            });
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameters {
                reason: "piecewise rate values must be finite and nonnegative".into(),
            });
        }
        Ok(Self::PiecewiseConstant { times, values })
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            Self::Constant(r) => *r,
            Self::PiecewiseConstant { times, values } => {
                let i = times.partition_point(|&s| s <= t).saturating_sub(1);
                values[i]
            }
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::Constant(_) => Vec::new(),
            Self::PiecewiseConstant { times, .. } => times[1..].to_vec(),
        }
    }
}

/// A complete model: nonlinearity, rate, and delay measure.
#[derive(Clone, Debug)]
pub struct ModelInstance {
    pub f: ReproductionFunction,
    pub r: Rate,
    pub measure: DelayMeasure,
}

impl ModelInstance {
    pub fn new(f: ReproductionFunction, r: Rate, measure: DelayMeasure) -> Self {
        Self { f, r, measure }
    }

    /// Default experiment horizon: 100 memory lengths or 500 time units,
    /// whichever is larger.
    pub fn default_horizon(&self) -> f64 {
        match self.measure.memory_length() {
            Some(mem) => (100.0 * mem).max(500.0),
            None => 500.0,
        }
    }
}

/// Integration method; fixed-step classical Runge-Kutta is the only one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum Method {
    #[default]
    Rk4,
}

#[derive(Clone, Debug)]
pub struct IntegrateOptions {
    /// Step size; `None` selects `min(0.01, min positive lag / 8)`.
    pub step: Option<f64>,
    pub method: Method,
    /// Additional times the steps must land on exactly.
    pub extra_breakpoints: Vec<f64>,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            step: None,
            method: Method::Rk4,
            extra_breakpoints: Vec::new(),
        }
    }
}

impl IntegrateOptions {
    pub fn with_step(step: f64) -> Self {
        Self {
            step: Some(step),
            ..Self::default()
        }
    }
}

/// Step statistics recorded by [`integrate`].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct StepStats {
    pub steps: usize,
    pub rhs_evals: usize,
    pub min_x: f64,
    pub max_x: f64,
}

#[derive(Clone, Copy, Debug)]
struct PhaseRec {
    t_start: f64,
    seg_start: usize,
    inv_h: f64,
}

/// Dense-output numerical solution on `[0, t_end]`, queryable on the whole
/// span plus the initial-history domain.
#[derive(Clone, Debug)]
pub struct Trajectory {
    ts: Vec<f64>,
    xs: Vec<f64>,
    d_left: Vec<f64>,
    d_right: Vec<f64>,
    phases: Vec<PhaseRec>,
    initial: InitialHistory,
    memory_len: Option<f64>,
    stats: StepStats,
}

#[inline]
fn hermite(t0: f64, t1: f64, x0: f64, x1: f64, d0: f64, d1: f64, t: f64) -> f64 {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    let omt = 1.0 - s;
    let h00 = (1.0 + 2.0 * s) * omt * omt;
    let h10 = s * omt * omt;
    let h01 = s2 * (3.0 - 2.0 * s);
    let h11 = s2 * (s - 1.0);
    h00 * x0 + h10 * h * d0 + h01 * x1 + h11 * h * d1
}

#[inline]
fn locate_segment(phases: &[PhaseRec], ts: &[f64], t: f64) -> usize {
    let n_seg = ts.len() - 1;
    let p = phases
        .partition_point(|ph| ph.t_start <= t)
        .saturating_sub(1);
    let ph = &phases[p];
    let seg_end = if p + 1 < phases.len() {
        phases[p + 1].seg_start.min(n_seg)
    } else {
        n_seg
    };
    let raw = ((t - ph.t_start) * ph.inv_h) as usize;
    let mut i =
        (ph.seg_start + raw).clamp(ph.seg_start, seg_end.saturating_sub(1).max(ph.seg_start));
    i = i.min(n_seg - 1);
    while i > 0 && t < ts[i] {
        i -= 1;
    }
    while i + 1 < n_seg && t > ts[i + 1] {
        i += 1;
    }
    i
}

impl Trajectory {
    /// Endpoint of the computed span.
    pub fn end_time(&self) -> f64 {
        *self.ts.last().unwrap()
    }

    pub fn stats(&self) -> StepStats {
        self.stats
    }

    /// Memory length of the measure this trajectory was produced with;
    /// `None` for frozen schedules.
    pub fn memory_length(&self) -> Option<f64> {
        self.memory_len
    }

    pub fn initial_history(&self) -> &InitialHistory {
        &self.initial
    }

    /// Knot times and values.
    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.ts.iter().copied().zip(self.xs.iter().copied())
    }

    /// CSV export: header `t,x`, one knot every `stride` rows, full
    /// round-trip precision.
    pub fn write_csv<W: IoWrite>(&self, stride: usize, out: &mut W) -> std::io::Result<()> {
        let stride = stride.max(1);
        writeln!(out, "t,x")?;
        let last = self.ts.len() - 1;
        for i in (0..self.ts.len()).step_by(stride) {
            writeln!(out, "{},{}", self.ts[i], self.xs[i])?;
        }
        if !last.is_multiple_of(stride) {
            writeln!(out, "{},{}", self.ts[last], self.xs[last])?;
        }
        Ok(())
    }
}

impl History for Trajectory {
    fn value(&self, t: f64) -> Result<f64> {
        if t <= 0.0 {
            if t == 0.0 {
                return Ok(self.xs[0]);
            }
            return self.initial.value(t);
        }
        let t_end = self.end_time();
        if t > t_end {
            if t <= t_end + 1e-9 * t_end.max(1.0) {
                return Ok(*self.xs.last().unwrap());
            }
            return Err(Error::HistoryGap {
                t,
                span_lo: self.initial.domain_start,
                span_hi: t_end,
            });
        }
        let i = locate_segment(&self.phases, &self.ts, t);
        Ok(hermite(
            self.ts[i],
            self.ts[i + 1],
            self.xs[i],
            self.xs[i + 1],
            self.d_left[i],
            self.d_right[i],
            t,
        ))
    }

    fn span(&self) -> (f64, f64) {
        (self.initial.domain_start, self.end_time())
    }
}

/// Partially built trajectory exposed to stage evaluations. Lookups past
/// the last completed knot (at most one step ahead) extrapolate the
/// previous segment's cubic.
struct BuildView<'a> {
    ts: &'a [f64],
    xs: &'a [f64],
    d_left: &'a [f64],
    d_right: &'a [f64],
    phases: &'a [PhaseRec],
    initial: &'a InitialHistory,
    step: f64,
    first_slope: f64,
}

impl History for BuildView<'_> {
    fn value(&self, t: f64) -> Result<f64> {
        if t <= 0.0 {
            if t == 0.0 {
                return Ok(self.xs[0]);
            }
            return self.initial.value(t);
        }
        let t_last = *self.ts.last().unwrap();
        if t <= t_last {
            let i = locate_segment(self.phases, self.ts, t);
            return Ok(hermite(
                self.ts[i],
                self.ts[i + 1],
                self.xs[i],
                self.xs[i + 1],
                self.d_left[i],
                self.d_right[i],
                t,
            ));
        }
        if t <= t_last + self.step * 1.000_000_1 {
            let n_seg = self.ts.len() - 1;
            if n_seg == 0 {
                return Ok(self.xs[0] + t * self.first_slope);
            }
            let i = n_seg - 1;
            return Ok(hermite(
                self.ts[i],
                self.ts[i + 1],
                self.xs[i],
                self.xs[i + 1],
                self.d_left[i],
                self.d_right[i],
                t,
            ));
        }
        Err(Error::HistoryGap {
            t,
            span_lo: self.initial.domain_start,
            span_hi: t_last,
        })
    }

    fn span(&self) -> (f64, f64) {
        (self.initial.domain_start, *self.ts.last().unwrap())
    }
}

/// Closed-form solution of the linear relaxation `x' = r (c − x)`:
/// `x(t) = (x0 − c) e^{-r t} + c`. Serves as the per-phase oracle for the
/// frozen-forcing constructions and for integrator tests.
pub fn exact_linear_relaxation(r: f64, c: f64, x0: f64, t: f64) -> f64 {
    c + (x0 - c) * (-r * t).exp()
}

fn collect_breakpoints(model: &ModelInstance, extra: &[f64], horizon: f64) -> Vec<f64> {
    let mut bps: Vec<f64> = model
        .measure
        .time_breakpoints()
        .into_iter()
        .chain(model.r.breakpoints())
        .chain(extra.iter().copied())
        .filter(|&t| t > 0.0 && t < horizon)
        .collect();
    bps.sort_by(f64::total_cmp);
    bps.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(1.0));
    bps.push(horizon);
    bps
}

/// Integrate the model from the initial history over `[0, horizon]`.
pub fn integrate(
    model: &ModelInstance,
    history: &InitialHistory,
    horizon: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidRun {
            reason: format!("horizon must be positive and finite, got {horizon}"),
        });
    }
    let min_lag = model.measure.min_positive_lag();
    let step = match opts.step {
        Some(h) => h,
        None => min_lag.map_or(0.01, |l| (l / 8.0).min(0.01)),
    };
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidRun {
            reason: format!("step must be positive and finite, got {step}"),
        });
    }
    if let Some(l) = min_lag {
        if step > l / 4.0 {
            return Err(Error::StepTooLarge {
                step,
                limit: l / 4.0,
            });
        }
    }
    // The measure's memory must be reachable from the history domain.
    let earliest = match &model.measure {
        DelayMeasure::FrozenSchedule(s) => s.samples().iter().copied().fold(0.0, f64::min),
        _ => model.measure.memory_bound(0.0),
    };
    let ds = history.domain_start();
    if earliest < ds - 1e-9 * ds.abs().max(1.0) {
        return Err(Error::InvalidRun {
            reason: format!(
                "measure reaches back to t = {earliest} but the initial history only covers [{ds}, 0]"
            ),
        });
    }

    let breakpoints = collect_breakpoints(model, &opts.extra_breakpoints, horizon);

    let x0 = history.value_at_zero();
    let mut ts: Vec<f64> = vec![0.0];
    let mut xs: Vec<f64> = vec![x0];
    let mut d_left: Vec<f64> = Vec::new();
    let mut d_right: Vec<f64> = Vec::new();
    let mut phases: Vec<PhaseRec> = Vec::new();
    let mut rhs_evals = 0usize;
    let mut min_x = x0;
    let mut max_x = x0;

    let g = |y: f64| model.f.eval_raw(y);

    let mut t_cur = 0.0;
    let mut x_cur = x0;
    for &bp in &breakpoints {
        let seg_len = bp - t_cur;
        if seg_len <= 0.0 {
            continue;
        }
        let n_sub = ((seg_len / step - 1e-9).ceil() as usize).max(1);
        let sub_h = seg_len / n_sub as f64;
        let phase_start = t_cur;
        phases.push(PhaseRec {
            t_start: phase_start,
            seg_start: ts.len() - 1,
            inv_h: 1.0 / sub_h,
        });

        // Derivative at the phase start, evaluated in this phase.
        let mut k1 = {
            let view = BuildView {
                ts: &ts,
                xs: &xs,
                d_left: &d_left,
                d_right: &d_right,
                phases: &phases,
                initial: history,
                step: sub_h,
                first_slope: 0.0,
            };
            let phase_t = t_cur + 0.5 * sub_h;
            let integral = model.measure.apply_with_phase(phase_t, t_cur, &view, &g)?;
            rhs_evals += 1;
            model.r.value(phase_t) * (integral - x_cur)
        };

        for j in 1..=n_sub {
            let t_next = if j == n_sub {
                bp
            } else {
                phase_start + j as f64 * sub_h
            };
            let h = t_next - t_cur;
            let phase_t = t_cur + 0.5 * h;
            let (x_next, d_end) = {
                let view = BuildView {
                    ts: &ts,
                    xs: &xs,
                    d_left: &d_left,
                    d_right: &d_right,
                    phases: &phases,
                    initial: history,
                    step: h,
                    first_slope: k1,
                };
                // Both the frozen-schedule phase and the rate piece are
                // resolved at the step midpoint: steps align to their
                // breakpoints, so stages landing exactly on a switch time
                // must still read this step's piece.
                let stage = |t_stage: f64, x_stage: f64| -> Result<f64> {
                    let integral = model
                        .measure
                        .apply_with_phase(phase_t, t_stage, &view, &g)?;
                    Ok(model.r.value(phase_t) * (integral - x_stage))
                };
                let k2 = stage(t_cur + 0.5 * h, x_cur + 0.5 * h * k1)?;
                let k3 = stage(t_cur + 0.5 * h, x_cur + 0.5 * h * k2)?;
                let k4 = stage(t_next, x_cur + h * k3)?;
                let x_next = x_cur + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                rhs_evals += 3;
                if !x_next.is_finite() {
                    return Err(Error::Diverged {
                        t: t_next,
                        last_valid: t_cur,
                    });
                }
                let d_end = stage(t_next, x_next)?;
                rhs_evals += 1;
                (x_next, d_end)
            };
            if x_next <= 0.0 {
                return Err(Error::PositivityLost {
                    t: t_next,
                    x: x_next,
                });
            }
            ts.push(t_next);
            xs.push(x_next);
            d_left.push(k1);
            d_right.push(d_end);
            min_x = min_x.min(x_next);
            max_x = max_x.max(x_next);
            t_cur = t_next;
            x_cur = x_next;
            k1 = d_end;
        }
    }

    let steps = ts.len() - 1;
    Ok(Trajectory {
        ts,
        xs,
        d_left,
        d_right,
        phases,
        initial: history.clone(),
        memory_len: model.measure.memory_length(),
        stats: StepStats {
            steps,
            rhs_evals,
            min_x,
            max_x,
        },
    })
}

/// Tail estimates over the trailing window of a trajectory.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TailStatistics {
    pub window_start: f64,
    pub inf_est: f64,
    pub sup_est: f64,
    pub converged: bool,
    pub limit_est: Option<f64>,
}

/// Infimum/supremum over the trailing `window_fraction` of the span,
/// declared converged when their gap is below `convergence_tol`. The
/// window must cover at least ten memory lengths.
pub fn tail_statistics(
    traj: &Trajectory,
    window_fraction: f64,
    convergence_tol: f64,
) -> Result<TailStatistics> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::TailWindow {
            reason: format!("window fraction must lie in (0, 1], got {window_fraction}"),
        });
    }
    let t_end = traj.end_time();
    let window = window_fraction * t_end;
    if let Some(mem) = traj.memory_length() {
        if mem > 0.0 && window < 10.0 * mem {
            return Err(Error::TailWindow {
                reason: format!(
                    "window {window} shorter than ten memory lengths ({})",
                    10.0 * mem
                ),
            });
        }
    }
    let start = t_end - window;
    let mut inf = f64::INFINITY;
    let mut sup = f64::NEG_INFINITY;
    for (t, x) in traj.knots() {
        if t >= start {
            inf = inf.min(x);
            sup = sup.max(x);
        }
    }
    let converged = sup - inf < convergence_tol;
    Ok(TailStatistics {
        window_start: start,
        inf_est: inf,
        sup_est: sup,
        converged,
        limit_est: converged.then_some(0.5 * (inf + sup)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counterexample::DelaySchedule;
    use crate::measure::KernelShape;

    fn nicholson_model(p: f64, measure: DelayMeasure) -> ModelInstance {
        ModelInstance::new(
            ReproductionFunction::nicholson(p, 1.0, 1.0).unwrap(),
            Rate::constant(1.0).unwrap(),
            measure,
        )
    }

    fn example_one() -> (ModelInstance, InitialHistory) {
        let schedule = DelaySchedule::single(-1.0).unwrap();
        let model = nicholson_model(5.0, DelayMeasure::frozen_schedule(schedule));
        let phi = InitialHistory::linear_ramp(-1.0, 0.0, 1.0).unwrap();
        (model, phi)
    }

    #[test]
    fn equilibrium_is_preserved() {
        let k = 5.0f64.ln();
        let model = nicholson_model(5.0, DelayMeasure::single_lag(1.0).unwrap());
        let phi = InitialHistory::constant(k).unwrap();
        let traj = integrate(&model, &phi, 50.0, &IntegrateOptions::default()).unwrap();
        let max_dev = traj.knots().map(|(_, x)| (x - k).abs()).fold(0.0, f64::max);
        assert!(max_dev < 1e-11, "equilibrium drifted by {max_dev}");
    }

    #[test]
    fn frozen_sample_at_zero_reduces_to_scalar_ode() {
        // x' + x = (e/2) x(0) e^{-x(0)} with x(0) = 2 relaxes to 1/e, away
        // from the map equilibrium 1 - ln 2.
        let e = std::f64::consts::E;
        let model = nicholson_model(e / 2.0, {
            let s = DelaySchedule::single(0.0).unwrap();
            DelayMeasure::frozen_schedule(s)
        });
        let phi = InitialHistory::constant(2.0).unwrap();
        let traj = integrate(&model, &phi, 30.0, &IntegrateOptions::with_step(0.01)).unwrap();
        let mut worst = 0.0f64;
        for i in 0..=3000 {
            let t = i as f64 * 0.01;
            let exact = 1.0 / e + (2.0 - 1.0 / e) * (-t).exp();
            worst = worst.max((traj.value(t).unwrap() - exact).abs());
        }
        assert!(worst < 1e-9, "max deviation {worst}");
        let tail = tail_statistics(&traj, 0.25, 1e-6).unwrap();
        assert!(tail.converged);
        let limit = tail.limit_est.unwrap();
        assert!((limit - 1.0 / e).abs() < 1e-6);
        assert!((limit - (1.0 - 2.0f64.ln())).abs() > 0.05);
    }

    #[test]
    fn example_one_matches_exponential() {
        let (model, phi) = example_one();
        let traj = integrate(&model, &phi, 10.0, &IntegrateOptions::with_step(0.01)).unwrap();
        let mut worst = 0.0f64;
        for i in 0..=10_000 {
            let t = i as f64 * 1e-3;
            worst = worst.max((traj.value(t).unwrap() - (-t).exp()).abs());
        }
        assert!(worst < 1e-6, "max deviation {worst}");
    }

    #[test]
    fn convergence_order_is_fourth() {
        let (model, phi) = example_one();
        let err = |h: f64| -> f64 {
            let traj = integrate(&model, &phi, 10.0, &IntegrateOptions::with_step(h)).unwrap();
            let mut worst = 0.0f64;
            for i in 0..=250 {
                let t = i as f64 * 0.04;
                worst = worst.max((traj.value(t).unwrap() - (-t).exp()).abs());
            }
            worst
        };
        let (e1, e2, e3) = (err(0.04), err(0.02), err(0.01));
        let order12 = (e1 / e2).log2();
        let order23 = (e2 / e3).log2();
        assert!(
            order12 > 3.8 && order23 > 3.8,
            "observed orders {order12:.2}, {order23:.2} (errors {e1:e}, {e2:e}, {e3:e})"
        );
    }

    #[test]
    fn bitwise_deterministic() {
        let model = nicholson_model(10.0, DelayMeasure::single_lag(1.0).unwrap());
        let phi = InitialHistory::constant(1.0).unwrap();
        let a = integrate(&model, &phi, 40.0, &IntegrateOptions::default()).unwrap();
        let b = integrate(&model, &phi, 40.0, &IntegrateOptions::default()).unwrap();
        assert_eq!(a.ts.len(), b.ts.len());
        for (x, y) in a.xs.iter().zip(&b.xs) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn step_guard_rejects_large_steps() {
        let model = nicholson_model(5.0, DelayMeasure::single_lag(10.0).unwrap());
        let phi = InitialHistory::constant(1.0).unwrap();
        let err = integrate(&model, &phi, 5.0, &IntegrateOptions::with_step(3.0)).unwrap_err();
        assert!(matches!(err, Error::StepTooLarge { .. }));
    }

    #[test]
    fn unreachable_memory_is_rejected() {
        let model = nicholson_model(5.0, DelayMeasure::single_lag(2.0).unwrap());
        let phi = InitialHistory::linear_ramp(-1.0, 0.5, 1.0).unwrap();
        let err = integrate(&model, &phi, 5.0, &IntegrateOptions::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidRun { .. }));
    }

    #[test]
    fn divergence_reports_last_valid_time() {
        // Pure growth: the delayed feedback sustains x ~ e^{3.2 t}, which
        // overflows well before the horizon.
        let f = ReproductionFunction::custom(|x| 100.0 * x, 100.0).unwrap();
        let model = ModelInstance::new(
            f,
            Rate::constant(1.0).unwrap(),
            DelayMeasure::single_lag(1.0).unwrap(),
        );
        let phi = InitialHistory::constant(1.0).unwrap();
        let err = integrate(&model, &phi, 300.0, &IntegrateOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }));
    }

    #[test]
    fn kernel_mass_near_zero_uses_extrapolation() {
        // Uniform kernel on [0, 1]: quadrature nodes fall below the step
        // size, so stage lookups extrapolate into the current step. A
        // constant state must stay constant.
        let f = ReproductionFunction::custom(|x| x, 1.0).unwrap();
        let model = ModelInstance::new(
            f,
            Rate::constant(1.0).unwrap(),
            DelayMeasure::kernel(KernelShape::Uniform {
                lag_lo: 0.0,
                lag_hi: 1.0,
            })
            .unwrap(),
        );
        let phi = InitialHistory::constant(1.0).unwrap();
        let traj = integrate(&model, &phi, 10.0, &IntegrateOptions::with_step(0.01)).unwrap();
        let max_dev = traj
            .knots()
            .map(|(_, x)| (x - 1.0).abs())
            .fold(0.0, f64::max);
        assert!(max_dev < 1e-9, "constant state drifted by {max_dev}");
    }

    #[test]
    fn piecewise_rate_matches_closed_form() {
        // Frozen forcing f(x(0)) = 1/e with r = 0 until t = 5, r = 1 after:
        // the state holds at 2, then relaxes toward 1/e.
        let e = std::f64::consts::E;
        let model = ModelInstance::new(
            ReproductionFunction::nicholson(e / 2.0, 1.0, 1.0).unwrap(),
            Rate::piecewise_constant(vec![0.0, 5.0], vec![0.0, 1.0]).unwrap(),
            DelayMeasure::frozen_schedule(DelaySchedule::single(0.0).unwrap()),
        );
        let phi = InitialHistory::constant(2.0).unwrap();
        let traj = integrate(&model, &phi, 15.0, &IntegrateOptions::with_step(0.01)).unwrap();
        for i in 0..=1500 {
            let t = i as f64 * 0.01;
            let exact = if t <= 5.0 {
                2.0
            } else {
                exact_linear_relaxation(1.0, 1.0 / e, 2.0, t - 5.0)
            };
            let got = traj.value(t).unwrap();
            assert!((got - exact).abs() < 1e-9, "t = {t}: {got} vs {exact}");
        }
    }

    #[test]
    fn exact_linear_relaxation_examples() {
        let e = std::f64::consts::E;
        assert!((exact_linear_relaxation(1.0, 0.0, 1.0, 1.0) - 1.0 / e).abs() < 1e-15);
        assert_eq!(exact_linear_relaxation(2.0, 5.0, 5.0, 12.3), 5.0);
        // Relaxation from b toward m reaches a at t = ln((b-m)/(a-m))/r.
        let (b, m, a) = (6.0f64, 0.3f64, 0.5f64);
        let t = ((b - m) / (a - m)).ln();
        assert!((exact_linear_relaxation(1.0, m, b, t) - a).abs() < 1e-12);
    }

    #[test]
    fn tail_statistics_constant_and_window_guard() {
        let k = 5.0f64.ln();
        let model = nicholson_model(5.0, DelayMeasure::single_lag(1.0).unwrap());
        let phi = InitialHistory::constant(k).unwrap();
        let traj = integrate(&model, &phi, 60.0, &IntegrateOptions::default()).unwrap();
        let tail = tail_statistics(&traj, 0.25, 1e-4).unwrap();
        assert!(tail.converged);
        assert!((tail.limit_est.unwrap() - k).abs() < 1e-10);
        assert!((tail.inf_est - k).abs() < 1e-10 && (tail.sup_est - k).abs() < 1e-10);

        let model_slow = nicholson_model(5.0, DelayMeasure::single_lag(10.0).unwrap());
        let short = integrate(&model_slow, &phi, 50.0, &IntegrateOptions::default()).unwrap();
        assert!(matches!(
            tail_statistics(&short, 0.25, 1e-4),
            Err(Error::TailWindow { .. })
        ));
    }

    #[test]
    fn csv_export_keeps_header_stride_and_final_row() {
        let model = nicholson_model(5.0, DelayMeasure::single_lag(1.0).unwrap());
        let phi = InitialHistory::constant(1.0).unwrap();
        let traj = integrate(&model, &phi, 1.0, &IntegrateOptions::with_step(0.01)).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(7, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x");
        // 100 knots at stride 7 plus the forced final row.
        assert_eq!(lines.len(), 1 + 15 + 1);
        let (t_last, _) = lines.last().unwrap().split_once(',').unwrap();
        assert_eq!(t_last.parse::<f64>().unwrap(), 1.0);
        // Full round-trip precision.
        let (_, x_mid) = lines[3].split_once(',').unwrap();
        let parsed: f64 = x_mid.parse().unwrap();
        assert_eq!(parsed.to_string(), x_mid);
    }

    #[test]
    fn history_validation() {
        assert!(InitialHistory::constant(0.0).is_err());
        assert!(InitialHistory::constant(-1.0).is_err());
        // φ(-1) = 0 is allowed; only φ(0) must be positive.
        assert!(InitialHistory::linear_ramp(-1.0, 0.0, 1.0).is_ok());
        assert!(InitialHistory::linear_ramp(-1.0, 1.0, 0.0).is_err());
        assert!(InitialHistory::from_fn(-2.0, |t| t).is_err());
        let table = InitialHistory::table(vec![(-2.0, 1.0), (-1.0, 0.5), (0.0, 2.0)]).unwrap();
        assert!((table.value(-1.5).unwrap() - 0.75).abs() < 1e-12);
    }
}
