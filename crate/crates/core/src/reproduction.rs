//! Production nonlinearities and their analytic descriptors.
//!
//! A [`ReproductionFunction`] is a continuous map `f: [0,∞) → [0,∞)` with
//! `f(0) = 0` and at most one positive fixed point `K`, at which
//! `f(x) > x` on `(0, K)` and `f(x) < x` beyond. Two classical population
//! nonlinearities are built in:
//!
//! - Nicholson (Ricker) type, normalized as `f(x) = (p/δ) x e^{-a x}`, so
//!   the model `x' = δ [f(delayed x) − x]` carries per-capita mortality δ
//!   and maximal reproduction rate p.
//! - Mackey-Glass (Hill) type, normalized as `f(x) = (a/b) x / (1 + x^γ)`,
//!   matching `x' = b [f(delayed x) − x]`.
//!
//! User-supplied nonlinearities are accepted with a declared Lipschitz
//! bound; their descriptors are estimated numerically.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::search::{self, Mode, TieBreak};

/// Euler's number squared; the Nicholson map loses local stability of its
/// fixed point exactly when `p/δ` crosses this value.
pub const E_SQUARED: f64 = 7.389_056_098_930_649_5;

/// Evaluator for user-supplied nonlinearities.
pub type CustomEval = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Default number of sample points for numeric descriptor estimation.
pub const DEFAULT_GRID: usize = 65_536;

#[derive(Clone)]
pub enum Kind {
    Nicholson { p: f64, delta: f64, a: f64 },
    MackeyGlass { a: f64, b: f64, gamma: f64 },
    Custom { eval: CustomEval, lipschitz: f64 },
}

impl fmt::Debug for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kind::Nicholson { p, delta, a } => f
                .debug_struct("Nicholson")
                .field("p", p)
                .field("delta", delta)
                .field("a", a)
                .finish(),
            Kind::MackeyGlass { a, b, gamma } => f
                .debug_struct("MackeyGlass")
                .field("a", a)
                .field("b", b)
                .field("gamma", gamma)
                .finish(),
            Kind::Custom { lipschitz, .. } => f
                .debug_struct("Custom")
                .field("lipschitz", lipschitz)
                .finish_non_exhaustive(),
        }
    }
}

/// Extremum selection mode for [`ReproductionFunction::extremum_points`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ExtremumMode {
    Min,
    Max,
}

/// Tie resolution when an extremum is attained at several points.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ExtremumTie {
    /// Keep the greatest attaining point (used for maxima on `[a, K]`).
    Greatest,
    /// Keep the smallest attaining point (used for the minimum location).
    Smallest,
}

/// Lipschitz descriptors: `l` bounds `|f(x)-f(y)|/|x-y|` globally, `l_star`
/// bounds the secant slope through the equilibrium,
/// `sup |f(x)-K| / |x-K|`. Both enter the small-delay stability thresholds.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LipschitzConstants {
    pub l: f64,
    pub l_star: Option<f64>,
}

/// Serializable summary of a nonlinearity's analytic descriptors.
#[derive(Clone, Debug, Serialize)]
pub struct Descriptor {
    pub equilibrium: Option<f64>,
    /// Greatest maximizer of `f` on `[0, K]`.
    pub x_max: Option<f64>,
    /// Maximum of `f` over `[0, K]`.
    pub max_over_basin: Option<f64>,
    pub lipschitz: f64,
    pub lipschitz_star: Option<f64>,
    /// Set when derivative-based descriptors are unreliable near zero
    /// (Mackey-Glass with γ < 1 has an unbounded second derivative there).
    pub smoothness_warning: bool,
}

#[derive(Clone, Copy, Debug)]
struct Peak {
    x_max: f64,
    value: f64,
}

/// A production nonlinearity together with its cached descriptors.
#[derive(Clone, Debug)]
pub struct ReproductionFunction {
    kind: Kind,
    equilibrium: Option<f64>,
    peak: Option<Peak>,
    smoothness_warning: bool,
}

impl ReproductionFunction {
    /// Nicholson (Ricker) nonlinearity `f(x) = (p/δ) x e^{-a x}`.
    pub fn nicholson(p: f64, delta: f64, a: f64) -> Result<Self> {
        for (name, v) in [("p", p), ("delta", delta), ("a", a)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameters {
                    reason: format!("nicholson parameter {name} must be positive, got {v}"),
                });
            }
        }
        let ratio = p / delta;
        // p = δ exactly gives f(x) < x for all x > 0: extinction regime.
        let equilibrium = (ratio > 1.0).then(|| ratio.ln() / a);
        let peak = equilibrium.map(|k| {
            let x_crit = 1.0 / a;
            if x_crit < k {
                Peak {
                    x_max: x_crit,
                    value: ratio / (a * std::f64::consts::E),
                }
            } else {
                // f is increasing on [0, K]; the maximum sits at K itself.
                Peak { x_max: k, value: k }
            }
        });
        Ok(Self {
            kind: Kind::Nicholson { p, delta, a },
            equilibrium,
            peak,
            smoothness_warning: false,
        })
    }

    /// Mackey-Glass (Hill) nonlinearity `f(x) = (a/b) x / (1 + x^γ)`.
    pub fn mackey_glass(a: f64, b: f64, gamma: f64) -> Result<Self> {
        for (name, v) in [("a", a), ("b", b), ("gamma", gamma)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameters {
                    reason: format!("mackey-glass parameter {name} must be positive, got {v}"),
                });
            }
        }
        let ratio = a / b;
        let equilibrium = (ratio > 1.0).then(|| (ratio - 1.0).powf(1.0 / gamma));
        let peak = equilibrium.map(|k| {
            if gamma > 1.0 {
                let x_crit = (gamma - 1.0).powf(-1.0 / gamma);
                if x_crit < k {
                    let value = ratio * x_crit * (gamma - 1.0) / gamma;
                    Peak {
                        x_max: x_crit,
                        value,
                    }
                } else {
                    Peak { x_max: k, value: k }
                }
            } else {
                // γ ≤ 1: f is monotone increasing, max over [0, K] is K.
                Peak { x_max: k, value: k }
            }
        });
        Ok(Self {
            kind: Kind::MackeyGlass { a, b, gamma },
            equilibrium,
            peak,
            smoothness_warning: gamma < 1.0,
        })
    }

    /// User-supplied nonlinearity with a declared Lipschitz bound. The bound
    /// is trusted but spot-checked against a finite-difference estimate when
    /// [`Self::lipschitz_constants`] runs; the larger of the two is reported.
    pub fn custom<F>(eval: F, lipschitz: f64) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(lipschitz.is_finite() && lipschitz >= 0.0) {
            return Err(Error::InvalidParameters {
                reason: format!("declared Lipschitz bound must be nonnegative, got {lipschitz}"),
            });
        }
        let f0 = eval(0.0);
        if f0.abs() > 1e-12 {
            return Err(Error::InvalidParameters {
                reason: format!("custom nonlinearity must satisfy f(0) = 0, got f(0) = {f0}"),
            });
        }
        let eval: CustomEval = Arc::new(eval);
        let equilibrium = custom_equilibrium(&eval)?;
        let peak = equilibrium.map(|k| {
            let f = |x: f64| eval(x);
            let n = search::grid_size(0.0, k);
            let (x_max, value) =
                search::grid_extremum(&f, 0.0, k, n, Mode::Max, TieBreak::Greatest);
            Peak { x_max, value }
        });
        Ok(Self {
            kind: Kind::Custom { eval, lipschitz },
            equilibrium,
            peak,
            smoothness_warning: false,
        })
    }

    pub fn kind(&self) -> &Kind {
        &self.kind
    }

    /// Evaluate `f(x)`; negative arguments are a domain error.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Err(Error::NegativeInput { x });
        }
        Ok(self.eval_raw(x))
    }

    /// Evaluation without the domain check. The integrator uses this path:
    /// interpolation noise may produce arguments a few ulps below zero on
    /// trajectories that decay to the origin.
    pub(crate) fn eval_raw(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Nicholson { p, delta, a } => (p / delta) * x * (-a * x).exp(),
            Kind::MackeyGlass { a, b, gamma } => (a / b) * x / (1.0 + x.abs().powf(*gamma)),
            Kind::Custom { eval, .. } => eval(x),
        }
    }

    /// The positive fixed point `K`, absent in the extinction regime.
    pub fn equilibrium(&self) -> Option<f64> {
        self.equilibrium
    }

    /// Greatest maximizer of `f` over `[0, K]` and the attained maximum.
    pub fn peak_over_basin(&self) -> Option<(f64, f64)> {
        self.peak.map(|p| (p.x_max, p.value))
    }

    pub fn smoothness_warning(&self) -> bool {
        self.smoothness_warning
    }

    /// Global Lipschitz constant `L = sup |f'|` and the equilibrium secant
    /// bound `L* = sup |f(x)-K|/|x-K|` (absent without an equilibrium).
    ///
    /// Built-in kinds use closed forms where valid. Note `L* ≥ 1` always:
    /// the secant from the origin to `(K, K)` has slope one. The closed-form
    /// interior-slope bounds are therefore used only when they reach 1;
    /// otherwise `L*` falls back to a grid estimate.
    pub fn lipschitz_constants(&self, grid_resolution: usize) -> LipschitzConstants {
        let l = match &self.kind {
            Kind::Nicholson { p, delta, .. } => p / delta,
            Kind::MackeyGlass { a, b, gamma } => {
                let base = a / b;
                if *gamma > 1.0 {
                    base.max(a * (gamma - 1.0).powi(2) / (4.0 * b * gamma))
                } else {
                    base
                }
            }
            Kind::Custom { lipschitz, .. } => {
                lipschitz.max(self.numeric_slope_sup(grid_resolution))
            }
        };
        let l_star = self.equilibrium.map(|k| {
            let closed = match &self.kind {
                Kind::Nicholson { p, delta, .. } => Some(p / (delta * E_SQUARED)),
                Kind::MackeyGlass { a, b, gamma } if *gamma > 1.0 => {
                    Some(a * (gamma - 1.0).powi(2) / (4.0 * b * gamma))
                }
                _ => None,
            };
            match closed {
                Some(c) if c >= 1.0 => c,
                _ => self.numeric_secant_sup(k, grid_resolution),
            }
        });
        LipschitzConstants { l, l_star }
    }

    fn analysis_span(&self) -> f64 {
        10.0 * self.equilibrium.unwrap_or(1.0).max(1.0)
    }

    fn numeric_slope_sup(&self, n: usize) -> f64 {
        let hi = self.analysis_span();
        let n = n.max(256);
        let h = hi / n as f64;
        let mut sup: f64 = 0.0;
        let mut prev = self.eval_raw(0.0);
        for i in 1..=n {
            let x = i as f64 * h;
            let v = self.eval_raw(x);
            sup = sup.max(((v - prev) / h).abs());
            prev = v;
        }
        sup
    }

    fn numeric_secant_sup(&self, k: f64, n: usize) -> f64 {
        let hi = self.analysis_span();
        let n = n.max(256);
        let h = hi / n as f64;
        let mut sup: f64 = 0.0;
        for i in 0..=n {
            let x = i as f64 * h;
            if (x - k).abs() < 16.0 * h {
                continue;
            }
            sup = sup.max(((self.eval_raw(x) - k) / (x - k)).abs());
        }
        // Near the equilibrium the ratio tends to |f'(K)|.
        sup.max(self.derivatives(k).map_or(0.0, |d| d.d1.abs()))
    }

    fn derivatives(&self, x: f64) -> Option<Derivatives> {
        match &self.kind {
            Kind::Nicholson { p, delta, a } => {
                let c = p / delta;
                let e = (-a * x).exp();
                Some(Derivatives {
                    d1: c * e * (1.0 - a * x),
                    d2: c * a * e * (a * x - 2.0),
                    d3: c * a * a * e * (3.0 - a * x),
                })
            }
            Kind::MackeyGlass { a, b, gamma } if x > 0.0 => {
                let c = a / b;
                let g = *gamma;
                let u = x.powf(g);
                let d = 1.0 + u;
                let bb = (1.0 + g) + (1.0 - g) * u;
                let d1 = c * (1.0 + (1.0 - g) * u) / (d * d);
                let d2 = -c * g * (u / x) * bb / (d * d * d);
                let d3 = -c
                    * g
                    * (u / (x * x))
                    * ((g - 1.0) * bb + (1.0 - g) * g * u - 3.0 * g * u * bb / d)
                    / (d * d * d);
                Some(Derivatives { d1, d2, d3 })
            }
            _ => None,
        }
    }

    /// Schwarzian derivative `(Sf)(x) = f'''/f' − (3/2)(f''/f')²`.
    ///
    /// Closed-form derivatives for the built-in kinds, fourth-order central
    /// differences for custom nonlinearities. Points where `f'` vanishes are
    /// poles of `Sf` and rejected.
    pub fn schwarzian(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Err(Error::NegativeInput { x });
        }
        let d = match self.derivatives(x) {
            Some(d) => d,
            None => {
                let f = |y: f64| self.eval_raw(y);
                let h = (1e-3 * x.max(1.0)).min(x / 4.0);
                Derivatives {
                    d1: (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h))
                        / (12.0 * h),
                    d2: (-f(x + 2.0 * h) + 16.0 * f(x + h) - 30.0 * f(x) + 16.0 * f(x - h)
                        - f(x - 2.0 * h))
                        / (12.0 * h * h),
                    d3: (-f(x + 3.0 * h) + 8.0 * f(x + 2.0 * h) - 13.0 * f(x + h)
                        + 13.0 * f(x - h)
                        - 8.0 * f(x - 2.0 * h)
                        + f(x - 3.0 * h))
                        / (8.0 * h * h * h),
                }
            }
        };
        let scale = match &self.kind {
            Kind::Nicholson { p, delta, .. } => p / delta,
            Kind::MackeyGlass { a, b, .. } => a / b,
            Kind::Custom { lipschitz, .. } => lipschitz.max(1.0),
        };
        if d.d1.abs() < 1e-8 * scale.max(1.0) {
            return Err(Error::SchwarzianSingular {
                x,
                slope: d.d1.abs(),
            });
        }
        let ratio = d.d2 / d.d1;
        Ok(d.d3 / d.d1 - 1.5 * ratio * ratio)
    }

    /// Extremum of `f` over `[lo, hi]` by grid scan plus golden-section
    /// refinement, with exact tie resolution as requested. Returns the
    /// attaining point and the attained value.
    pub fn extremum_points(
        &self,
        lo: f64,
        hi: f64,
        mode: ExtremumMode,
        tie: ExtremumTie,
    ) -> Result<(f64, f64)> {
        if lo < 0.0 {
            return Err(Error::NegativeInput { x: lo });
        }
        if lo > hi {
            return Err(Error::EmptyInterval { lo, hi });
        }
        if lo == hi {
            return Ok((lo, self.eval_raw(lo)));
        }
        let f = |x: f64| self.eval_raw(x);
        let n = search::grid_size(lo, hi);
        let mode = match mode {
            ExtremumMode::Min => Mode::Min,
            ExtremumMode::Max => Mode::Max,
        };
        let tie = match tie {
            ExtremumTie::Greatest => TieBreak::Greatest,
            ExtremumTie::Smallest => TieBreak::Smallest,
        };
        Ok(search::grid_extremum(&f, lo, hi, n, mode, tie))
    }

    /// Descriptor bundle for reports.
    pub fn descriptor(&self) -> Descriptor {
        let lip = self.lipschitz_constants(DEFAULT_GRID);
        Descriptor {
            equilibrium: self.equilibrium,
            x_max: self.peak.map(|p| p.x_max),
            max_over_basin: self.peak.map(|p| p.value),
            lipschitz: lip.l,
            lipschitz_star: lip.l_star,
            smoothness_warning: self.smoothness_warning,
        }
    }
}

struct Derivatives {
    d1: f64,
    d2: f64,
    d3: f64,
}

/// Locate the positive fixed point of a custom nonlinearity, or report the
/// extinction regime (`f(x) < x` for every sampled `x > 0`) as `None`.
/// Several crossings of `f(x) = x` violate the single-equilibrium
/// assumption and are rejected.
fn custom_equilibrium(eval: &CustomEval) -> Result<Option<f64>> {
    const STEP: f64 = 1.0 / 512.0;
    const CAP: f64 = 1024.0;
    const NEGATIVE_RUN: usize = 16;

    let g = |x: f64| eval(x) - x;
    let mut roots: Vec<f64> = Vec::new();
    let mut prev_x = STEP;
    let mut prev_g = g(prev_x);
    let mut negative_run = usize::from(prev_g < 0.0);
    let mut i = 2usize;
    loop {
        let x = i as f64 * STEP;
        if x > CAP {
            break;
        }
        let gx = g(x);
        if prev_g * gx < 0.0 {
            roots.push(search::bisect(&g, prev_x, x, prev_g));
        } else if gx == 0.0 && prev_g != 0.0 {
            roots.push(x);
        }
        negative_run = if gx < 0.0 { negative_run + 1 } else { 0 };
        if negative_run >= NEGATIVE_RUN && !roots.is_empty() {
            break;
        }
        prev_x = x;
        prev_g = gx;
        i += 1;
    }
    match roots.len() {
        0 => Ok(None),
        1 => Ok(Some(roots[0])),
        _ => Err(Error::AmbiguousEquilibrium { near: roots }),
    }
}
