//! Delay kernels and the history integral.
//!
//! A [`DelayMeasure`] is a probability measure `R(t, ·)` over past times
//! with finite memory. The integral term of the model,
//! `∫ g(x(s)) dR(t,s)`, is evaluated against any queryable history by
//! [`DelayMeasure::stieltjes_apply`]. Four representations are supported:
//!
//! - [`DelayMeasure::atoms`]: point masses at fixed lags (concentrated
//!   delays `x(t − τ_k)` with constant weights),
//! - [`DelayMeasure::kernel`]: an absolutely continuous convolution kernel
//!   `k(t − s)` integrated by composite Gauss-Legendre quadrature,
//! - [`DelayMeasure::mixture`]: a convex combination of the two,
//! - [`DelayMeasure::frozen_schedule`]: sampling the history at fixed past
//!   instants from a [`DelaySchedule`]; this variant deliberately violates
//!   the fading-memory requirement `h(t) → ∞` and is flagged as such.

use std::sync::Arc;

use serde::Serialize;

use crate::counterexample::DelaySchedule;
use crate::error::{Error, Result};
use crate::integrator::History;

/// Abscissae of the 4-point Gauss-Legendre rule on [-1, 1].
const GL4_X: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
/// Weights of the 4-point Gauss-Legendre rule on [-1, 1].
const GL4_W: [f64; 4] = [
    0.347_854_845_137_453_85,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_85,
];

/// Default quadrature panels per unit of lag-window width.
pub const DEFAULT_PANELS_PER_UNIT: usize = 8;

/// A point mass: `weight` at lag `lag`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Atom {
    pub weight: f64,
    pub lag: f64,
}

/// Parametric kernel densities for the absolutely continuous variant.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub enum KernelShape {
    /// Constant density on `[lag_lo, lag_hi]`.
    Uniform { lag_lo: f64, lag_hi: f64 },
    /// Gamma density `u^{shape-1} e^{-u/scale}` truncated to finite support
    /// so the discarded tail mass is negligible, then renormalized.
    TruncatedGamma { shape: f64, scale: f64 },
    /// Piecewise-linear tabulated density on `[u_0, u_last]`.
    Table { points: Vec<(f64, f64)> },
}

/// A kernel with precomputed quadrature nodes and normalized weights
/// (the weights sum to one).
#[derive(Clone, Debug)]
pub struct Kernel {
    shape: KernelShape,
    lag_lo: f64,
    lag_hi: f64,
    node_lags: Vec<f64>,
    node_weights: Vec<f64>,
}

impl Kernel {
    fn build(shape: KernelShape, panels_per_unit: usize) -> Result<Self> {
        let (lag_lo, lag_hi, density): (f64, f64, Box<dyn Fn(f64) -> f64>) = match &shape {
            KernelShape::Uniform { lag_lo, lag_hi } => {
                if !(lag_lo.is_finite() && lag_hi.is_finite() && *lag_lo >= 0.0 && lag_hi > lag_lo)
                {
                    return Err(Error::InvalidMeasure {
                        reason: format!(
                            "uniform kernel needs 0 <= lag_lo < lag_hi, got [{lag_lo}, {lag_hi}]"
                        ),
                    });
                }
                (*lag_lo, *lag_hi, Box::new(|_| 1.0))
            }
            KernelShape::TruncatedGamma { shape: k, scale } => {
                if !(k.is_finite() && scale.is_finite() && *k >= 1.0 && *scale > 0.0) {
                    return Err(Error::InvalidMeasure {
                        reason: format!(
                            "truncated gamma kernel needs shape >= 1 and scale > 0, got shape {k}, scale {scale}"
                        ),
                    });
                }
                let (k, scale) = (*k, *scale);
                let density = move |u: f64| u.powf(k - 1.0) * (-u / scale).exp();
                let hi = gamma_truncation_point(k, scale, &density, panels_per_unit);
                (0.0, hi, Box::new(density))
            }
            KernelShape::Table { points } => {
                if points.len() < 2 {
                    return Err(Error::InvalidMeasure {
                        reason: "tabulated kernel needs at least two points".into(),
                    });
                }
                for w in points.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return Err(Error::InvalidMeasure {
                            reason: "tabulated kernel abscissae must be strictly increasing".into(),
                        });
                    }
                }
                if points
                    .iter()
                    .any(|&(u, k)| !(u.is_finite() && k.is_finite() && u >= 0.0 && k >= 0.0))
                {
                    return Err(Error::InvalidMeasure {
                        reason: "tabulated kernel needs finite nonnegative entries".into(),
                    });
                }
                let pts = points.clone();
                let lo = pts[0].0;
                let hi = pts[pts.len() - 1].0;
                let density = move |u: f64| {
                    let i = pts.partition_point(|&(a, _)| a < u).clamp(1, pts.len() - 1);
                    let (u0, k0) = pts[i - 1];
                    let (u1, k1) = pts[i];
                    k0 + (k1 - k0) * (u - u0) / (u1 - u0)
                };
                (lo, hi, Box::new(density))
            }
        };

        let (node_lags, mut node_weights) =
            quadrature_nodes(lag_lo, lag_hi, &*density, panels_per_unit);
        let total: f64 = node_weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidMeasure {
                reason: "kernel density has zero or non-finite mass".into(),
            });
        }
        for w in &mut node_weights {
            *w /= total;
        }
        Ok(Self {
            shape,
            lag_lo,
            lag_hi,
            node_lags,
            node_weights,
        })
    }

    pub fn shape(&self) -> &KernelShape {
        &self.shape
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lag_lo, self.lag_hi)
    }

    fn apply<H: History, G: Fn(f64) -> f64>(&self, t: f64, history: &H, g: &G) -> Result<f64> {
        let mut acc = 0.0;
        for (u, w) in self.node_lags.iter().zip(&self.node_weights) {
            acc += w * g(history.value(t - u)?);
        }
        Ok(acc)
    }
}

fn quadrature_nodes(
    lo: f64,
    hi: f64,
    density: &dyn Fn(f64) -> f64,
    panels_per_unit: usize,
) -> (Vec<f64>, Vec<f64>) {
    let panels_per_unit = panels_per_unit.max(1);
    let panels = (((hi - lo) * panels_per_unit as f64).ceil() as usize).max(1);
    let width = (hi - lo) / panels as f64;
    let half = 0.5 * width;
    let mut lags = Vec::with_capacity(4 * panels);
    let mut weights = Vec::with_capacity(4 * panels);
    for p in 0..panels {
        let center = lo + (p as f64 + 0.5) * width;
        for (x, w) in GL4_X.iter().zip(GL4_W) {
            let u = center + half * x;
            lags.push(u);
            weights.push(w * half * density(u));
        }
    }
    (lags, weights)
}

/// Extend the truncation point until the relative mass added by further
/// extension falls below 1e-9, so the discarded tail is negligible against
/// the renormalized total.
fn gamma_truncation_point(
    k: f64,
    scale: f64,
    density: &dyn Fn(f64) -> f64,
    panels_per_unit: usize,
) -> f64 {
    let mass = |hi: f64| -> f64 {
        let (_, w) = quadrature_nodes(0.0, hi, density, panels_per_unit);
        w.iter().sum()
    };
    let mut hi = scale * (k + 8.0 * (k + 1.0).sqrt() + 20.0);
    let mut current = mass(hi);
    for _ in 0..64 {
        let next_hi = hi * 1.5;
        let next = mass(next_hi);
        if next - current <= 1e-9 * next.max(f64::MIN_POSITIVE) {
            return hi;
        }
        hi = next_hi;
        current = next;
    }
    hi
}

/// A delay kernel `R(t, s)`: a probability measure over past times.
#[derive(Clone, Debug)]
pub enum DelayMeasure {
    Atoms(Vec<Atom>),
    Kernel(Kernel),
    Mixture {
        alpha: f64,
        atoms: Vec<Atom>,
        kernel: Kernel,
    },
    FrozenSchedule(Arc<DelaySchedule>),
}

fn validate_atoms(atoms: &[Atom]) -> Result<()> {
    if atoms.is_empty() {
        return Err(Error::InvalidMeasure {
            reason: "atom list is empty".into(),
        });
    }
    for a in atoms {
        if !(a.weight.is_finite() && a.weight > 0.0 && a.lag.is_finite() && a.lag >= 0.0) {
            return Err(Error::InvalidMeasure {
                reason: format!(
                    "atom needs weight > 0 and lag >= 0, got weight {}, lag {}",
                    a.weight, a.lag
                ),
            });
        }
    }
    let total: f64 = atoms.iter().map(|a| a.weight).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidMeasure {
            reason: format!("atom weights must sum to 1, got {total}"),
        });
    }
    Ok(())
}

impl DelayMeasure {
    /// Concentrated delays: point masses `(weight, lag)`. Weights must sum
    /// to one.
    pub fn atoms(atoms: Vec<(f64, f64)>) -> Result<Self> {
        let atoms: Vec<Atom> = atoms
            .into_iter()
            .map(|(weight, lag)| Atom { weight, lag })
            .collect();
        validate_atoms(&atoms)?;
        Ok(Self::Atoms(atoms))
    }

    /// A single unit atom at `lag`: the classical `x(t − lag)` term.
    pub fn single_lag(lag: f64) -> Result<Self> {
        Self::atoms(vec![(1.0, lag)])
    }

    /// Absolutely continuous kernel with the default quadrature density.
    pub fn kernel(shape: KernelShape) -> Result<Self> {
        Self::kernel_with_panels(shape, DEFAULT_PANELS_PER_UNIT)
    }

    /// Kernel with an explicit panel density (panels per unit lag, four
    /// Gauss-Legendre nodes per panel).
    pub fn kernel_with_panels(shape: KernelShape, panels_per_unit: usize) -> Result<Self> {
        Ok(Self::Kernel(Kernel::build(shape, panels_per_unit)?))
    }

    /// Convex combination: `alpha` on the atoms, `1 − alpha` on the kernel.
    pub fn mixture(alpha: f64, atoms: Vec<(f64, f64)>, shape: KernelShape) -> Result<Self> {
        Self::mixture_with_panels(alpha, atoms, shape, DEFAULT_PANELS_PER_UNIT)
    }

    pub fn mixture_with_panels(
        alpha: f64,
        atoms: Vec<(f64, f64)>,
        shape: KernelShape,
        panels_per_unit: usize,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidMeasure {
                reason: format!("mixture weight must lie in [0, 1], got {alpha}"),
            });
        }
        let atoms: Vec<Atom> = atoms
            .into_iter()
            .map(|(weight, lag)| Atom { weight, lag })
            .collect();
        validate_atoms(&atoms)?;
        Ok(Self::Mixture {
            alpha,
            atoms,
            kernel: Kernel::build(shape, panels_per_unit)?,
        })
    }

    /// Piecewise-frozen sampling of the history at scheduled past instants.
    pub fn frozen_schedule(schedule: DelaySchedule) -> Self {
        Self::FrozenSchedule(Arc::new(schedule))
    }

    /// Total mass; construction guarantees one.
    pub fn total_mass(&self) -> f64 {
        match self {
            Self::Atoms(atoms) => atoms.iter().map(|a| a.weight).sum(),
            Self::Kernel(k) => k.node_weights.iter().sum(),
            Self::Mixture {
                alpha,
                atoms,
                kernel,
            } => {
                alpha * atoms.iter().map(|a| a.weight).sum::<f64>()
                    + (1.0 - alpha) * kernel.node_weights.iter().sum::<f64>()
            }
            Self::FrozenSchedule(_) => 1.0,
        }
    }

    /// The earliest past instant the measure references at time `t`:
    /// `t − max lag` for the distributed variants, the active frozen sample
    /// for a schedule.
    pub fn memory_bound(&self, t: f64) -> f64 {
        match self {
            Self::FrozenSchedule(s) => s.active_sample(t),
            _ => t - self.memory_length().unwrap_or(0.0),
        }
    }

    /// Width of the memory window (max lag). `None` for frozen schedules,
    /// whose lookback `t − h(t)` grows without bound.
    pub fn memory_length(&self) -> Option<f64> {
        match self {
            Self::Atoms(atoms) => Some(atoms.iter().map(|a| a.lag).fold(0.0, f64::max)),
            Self::Kernel(k) => Some(k.lag_hi),
            Self::Mixture { atoms, kernel, .. } => {
                let am = atoms.iter().map(|a| a.lag).fold(0.0, f64::max);
                Some(am.max(kernel.lag_hi))
            }
            Self::FrozenSchedule(_) => None,
        }
    }

    /// Whether `h(t) → ∞` holds. Frozen schedules violate it by design.
    pub fn fading_memory(&self) -> bool {
        !matches!(self, Self::FrozenSchedule(_))
    }

    /// Smallest strictly positive lag carried by point masses or the lower
    /// edge of a kernel window; used by the integrator's step guard.
    pub fn min_positive_lag(&self) -> Option<f64> {
        let pos = |v: f64| (v > 0.0).then_some(v);
        match self {
            Self::Atoms(atoms) => atoms
                .iter()
                .filter_map(|a| pos(a.lag))
                .min_by(f64::total_cmp),
            Self::Kernel(k) => pos(k.lag_lo),
            Self::Mixture { atoms, kernel, .. } => {
                let am = atoms
                    .iter()
                    .filter_map(|a| pos(a.lag))
                    .min_by(f64::total_cmp);
                match (am, pos(kernel.lag_lo)) {
                    (Some(a), Some(b)) => Some(a.min(b)),
                    (a, b) => a.or(b),
                }
            }
            Self::FrozenSchedule(_) => None,
        }
    }

    /// Times at which the measure changes discontinuously in `t`; the
    /// integrator aligns its steps to these.
    pub fn time_breakpoints(&self) -> Vec<f64> {
        match self {
            Self::FrozenSchedule(s) => s.switch_times().to_vec(),
            _ => Vec::new(),
        }
    }

    /// Evaluate `∫ g(x(s)) dR(t, s)` against `history`.
    pub fn stieltjes_apply<H: History, G: Fn(f64) -> f64>(
        &self,
        t: f64,
        history: &H,
        g: &G,
    ) -> Result<f64> {
        self.apply_with_phase(t, t, history, g)
    }

    /// Like [`Self::stieltjes_apply`], but with the piecewise-frozen phase
    /// resolved at `phase_t` rather than the evaluation time. The integrator
    /// passes the midpoint of the current step here so that all Runge-Kutta
    /// stages of a step sample one phase, including stages that fall exactly
    /// on a switch time.
    pub(crate) fn apply_with_phase<H: History, G: Fn(f64) -> f64>(
        &self,
        phase_t: f64,
        t: f64,
        history: &H,
        g: &G,
    ) -> Result<f64> {
        match self {
            Self::Atoms(atoms) => apply_atoms(atoms, t, history, g),
            Self::Kernel(k) => k.apply(t, history, g),
            Self::Mixture {
                alpha,
                atoms,
                kernel,
            } => Ok(alpha * apply_atoms(atoms, t, history, g)?
                + (1.0 - alpha) * kernel.apply(t, history, g)?),
            Self::FrozenSchedule(s) => Ok(g(history.value(s.active_sample(phase_t))?)),
        }
    }
}

fn apply_atoms<H: History, G: Fn(f64) -> f64>(
    atoms: &[Atom],
    t: f64,
    history: &H,
    g: &G,
) -> Result<f64> {
    let mut acc = 0.0;
    for a in atoms {
        acc += a.weight * g(history.value(t - a.lag)?);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::FnHistory;
    use proptest::prelude::*;

    fn uniform(lo: f64, hi: f64) -> DelayMeasure {
        DelayMeasure::kernel(KernelShape::Uniform {
            lag_lo: lo,
            lag_hi: hi,
        })
        .unwrap()
    }

    #[test]
    fn total_mass_is_one() {
        assert_eq!(DelayMeasure::single_lag(1.0).unwrap().total_mass(), 1.0);
        assert!((uniform(0.5, 1.5).total_mass() - 1.0).abs() < 1e-12);
        let mix = DelayMeasure::mixture(
            0.3,
            vec![(1.0, 1.0)],
            KernelShape::Uniform {
                lag_lo: 0.5,
                lag_hi: 1.5,
            },
        )
        .unwrap();
        assert!((mix.total_mass() - 1.0).abs() < 1e-12);
        let gamma = DelayMeasure::kernel(KernelShape::TruncatedGamma {
            shape: 3.0,
            scale: 0.7,
        })
        .unwrap();
        assert!((gamma.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn construction_rejects_invalid_input() {
        assert!(DelayMeasure::atoms(vec![]).is_err());
        assert!(DelayMeasure::atoms(vec![(0.5, 1.0)]).is_err());
        assert!(DelayMeasure::atoms(vec![(1.0, -2.0)]).is_err());
        assert!(DelayMeasure::kernel(KernelShape::Uniform {
            lag_lo: 2.0,
            lag_hi: 1.0
        })
        .is_err());
        assert!(DelayMeasure::mixture(
            1.5,
            vec![(1.0, 1.0)],
            KernelShape::Uniform {
                lag_lo: 0.0,
                lag_hi: 1.0
            }
        )
        .is_err());
    }

    #[test]
    fn memory_bound_examples() {
        let m = DelayMeasure::atoms(vec![(0.5, 1.0), (0.5, 3.0)]).unwrap();
        assert_eq!(m.memory_bound(10.0), 7.0);
        assert_eq!(uniform(0.5, 1.5).memory_bound(2.0), 0.5);

        let sched = DelaySchedule::single(-0.4).unwrap();
        let frozen = DelayMeasure::frozen_schedule(sched);
        assert_eq!(frozen.memory_bound(1.0), -0.4);
        assert!(!frozen.fading_memory());
        assert!(frozen.memory_length().is_none());
    }

    #[test]
    fn stieltjes_closed_form_examples() {
        let hist = FnHistory::new(-10.0, 10.0, |s| s);
        // Kernel uniform on [1, 2], history x(s) = s, g = id, t = 5:
        // ∫_3^4 s ds = 3.5.
        let k = uniform(1.0, 2.0);
        let v = k.stieltjes_apply(5.0, &hist, &|x| x).unwrap();
        assert!((v - 3.5).abs() < 1e-12);

        let atom = DelayMeasure::single_lag(1.0).unwrap();
        let va = atom.stieltjes_apply(5.0, &hist, &|x| x).unwrap();
        assert!((va - 4.0).abs() < 1e-12);

        let mix = DelayMeasure::mixture(
            0.5,
            vec![(1.0, 1.0)],
            KernelShape::Uniform {
                lag_lo: 1.0,
                lag_hi: 2.0,
            },
        )
        .unwrap();
        let vm = mix.stieltjes_apply(5.0, &hist, &|x| x).unwrap();
        assert!((vm - 3.75).abs() < 1e-12);
    }

    #[test]
    fn constant_history_reproduces_g_of_c() {
        let hist = FnHistory::new(-50.0, 50.0, |_| 2.5);
        let g = |x: f64| 5.0 * x * (-x).exp();
        let expect = g(2.5);
        let sched = DelaySchedule::single(-1.0).unwrap();
        for m in [
            DelayMeasure::atoms(vec![(0.25, 0.5), (0.75, 4.0)]).unwrap(),
            uniform(0.0, 3.0),
            DelayMeasure::mixture(
                0.4,
                vec![(1.0, 2.0)],
                KernelShape::TruncatedGamma {
                    shape: 2.0,
                    scale: 1.0,
                },
            )
            .unwrap(),
            DelayMeasure::frozen_schedule(sched),
        ] {
            let v = m.stieltjes_apply(5.0, &hist, &g).unwrap();
            assert!(
                (v - expect).abs() < 1e-9,
                "mass-1 property failed for {m:?}: {v} vs {expect}"
            );
        }
    }

    #[test]
    fn history_gap_is_reported() {
        let hist = FnHistory::new(0.0, 10.0, |s| s);
        let m = DelayMeasure::single_lag(3.0).unwrap();
        let err = m.stieltjes_apply(2.0, &hist, &|x| x).unwrap_err();
        assert!(matches!(err, crate::Error::HistoryGap { .. }));
    }

    #[test]
    fn doubling_panels_converges() {
        let hist = FnHistory::new(-30.0, 30.0, |s| (0.3 * s).sin() + 2.0);
        let g = |x: f64| x * x;
        // Gamma shape 3 keeps the density smooth at the origin; fractional
        // shapes have unbounded high derivatives there and converge slower.
        for shape in [
            KernelShape::Uniform {
                lag_lo: 1.0,
                lag_hi: 4.0,
            },
            KernelShape::TruncatedGamma {
                shape: 3.0,
                scale: 0.8,
            },
        ] {
            let coarse = DelayMeasure::kernel_with_panels(shape.clone(), 8).unwrap();
            let fine = DelayMeasure::kernel_with_panels(shape, 16).unwrap();
            let vc = coarse.stieltjes_apply(6.0, &hist, &g).unwrap();
            let vf = fine.stieltjes_apply(6.0, &hist, &g).unwrap();
            assert!(
                (vc - vf).abs() < 1e-8,
                "panel refinement moved the result: {vc} vs {vf}"
            );
        }
    }

    proptest! {
        #[test]
        fn linearity_in_g_on_atom_measures(
            raw in proptest::collection::vec((0.05f64..1.0, 0.0f64..5.0), 1..6),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let total: f64 = raw.iter().map(|(w, _)| w).sum();
            let atoms: Vec<(f64, f64)> =
                raw.iter().map(|&(w, lag)| (w / total, lag)).collect();
            let m = DelayMeasure::atoms(atoms).unwrap();
            let hist = FnHistory::new(-10.0, 10.0, |s| 0.5 * s + 1.0);
            let g1 = |x: f64| x * x;
            let g2 = |x: f64| (x - 1.0).abs();
            let combined = m
                .stieltjes_apply(2.0, &hist, &|x| a * g1(x) + b * g2(x))
                .unwrap();
            let split = a * m.stieltjes_apply(2.0, &hist, &g1).unwrap()
                + b * m.stieltjes_apply(2.0, &hist, &g2).unwrap();
            prop_assert!((combined - split).abs() <= 1e-12 * (1.0 + combined.abs()));
        }

        #[test]
        fn monotone_in_g(
            raw in proptest::collection::vec((0.05f64..1.0, 0.0f64..5.0), 1..6),
        ) {
            let total: f64 = raw.iter().map(|(w, _)| w).sum();
            let atoms: Vec<(f64, f64)> =
                raw.iter().map(|&(w, lag)| (w / total, lag)).collect();
            let m = DelayMeasure::atoms(atoms).unwrap();
            let hist = FnHistory::new(-10.0, 10.0, |s| s.cos() + 1.5);
            let g1 = |x: f64| x;
            let g2 = |x: f64| x + 0.25 * (1.0 + x.sin());
            let v1 = m.stieltjes_apply(3.0, &hist, &g1).unwrap();
            let v2 = m.stieltjes_apply(3.0, &hist, &g2).unwrap();
            prop_assert!(v1 <= v2 + 1e-12);
        }
    }
}
