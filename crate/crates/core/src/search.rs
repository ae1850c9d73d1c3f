//! Grid scans, golden-section refinement, and bisection shared by the
//! analysis routines.

/// Absolute tolerance on abscissae for refined extrema and roots.
pub(crate) const X_TOL: f64 = 1e-9;

/// Default grid density for scans: points per unit of interval width.
pub(crate) const POINTS_PER_UNIT: f64 = 4096.0;

const GOLDEN_INV: f64 = 0.618_033_988_749_894_9; // 1/phi

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub(crate) enum Mode {
    Min,
    Max,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub(crate) enum TieBreak {
    Greatest,
    Smallest,
}

pub(crate) fn grid_size(lo: f64, hi: f64) -> usize {
    let width = (hi - lo).max(0.0);
    ((width * POINTS_PER_UNIT).ceil() as usize).clamp(256, 1 << 21)
}

/// Scan a uniform grid over `[lo, hi]` for the extremum, resolving exact
/// ties in the requested direction. `Greatest` keeps the rightmost among
/// equal-valued points, `Smallest` the leftmost.
pub(crate) fn grid_extremum<F: Fn(f64) -> f64>(
    f: &F,
    lo: f64,
    hi: f64,
    n: usize,
    mode: Mode,
    tie: TieBreak,
) -> (f64, f64) {
    debug_assert!(hi >= lo);
    if hi == lo || n < 2 {
        return (lo, f(lo));
    }
    let h = (hi - lo) / n as f64;
    let point = |i: usize| {
        if i == n {
            hi
        } else {
            lo + i as f64 * h
        }
    };
    let better = |candidate: f64, best: f64| match mode {
        Mode::Max => candidate > best,
        Mode::Min => candidate < best,
    };
    let (mut best_x, mut best_v) = match tie {
        // Right-to-left with strict improvement keeps the greatest tied point.
        TieBreak::Greatest => {
            let mut bx = hi;
            let mut bv = f(hi);
            for i in (0..n).rev() {
                let x = point(i);
                let v = f(x);
                if better(v, bv) {
                    bx = x;
                    bv = v;
                }
            }
            (bx, bv)
        }
        TieBreak::Smallest => {
            let mut bx = lo;
            let mut bv = f(lo);
            for i in 1..=n {
                let x = point(i);
                let v = f(x);
                if better(v, bv) {
                    bx = x;
                    bv = v;
                }
            }
            (bx, bv)
        }
    };
    // Golden-section refinement inside the bracketing cells.
    let a = (best_x - h).max(lo);
    let b = (best_x + h).min(hi);
    let (rx, rv) = golden_section(f, a, b, mode);
    if better(rv, best_v) {
        best_x = rx;
        best_v = rv;
    }
    (best_x, best_v)
}

/// Golden-section search on `[a, b]`, returning `(x, f(x))` at the located
/// extremum within `X_TOL` on the abscissa.
pub(crate) fn golden_section<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, mode: Mode) -> (f64, f64) {
    let sign = match mode {
        Mode::Min => 1.0,
        Mode::Max => -1.0,
    };
    let g = |x: f64| sign * f(x);
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - GOLDEN_INV * (hi - lo);
    let mut x2 = lo + GOLDEN_INV * (hi - lo);
    let mut f1 = g(x1);
    let mut f2 = g(x2);
    while hi - lo > X_TOL {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN_INV * (hi - lo);
            f1 = g(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN_INV * (hi - lo);
            f2 = g(x2);
        }
    }
    let xm = 0.5 * (lo + hi);
    (xm, f(xm))
}

/// Bisection for a sign change of `f` on `[a, b]`; `fa` and `fb` must have
/// opposite signs. Refines to `X_TOL` on the abscissa.
pub(crate) fn bisect<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64) -> f64 {
    let mut lo = a;
    let mut hi = b;
    let mut flo = fa;
    for _ in 0..200 {
        if hi - lo <= X_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_vertex() {
        let f = |x: f64| (x - 1.3).powi(2);
        let (x, v) = golden_section(&f, 0.0, 3.0, Mode::Min);
        assert!((x - 1.3).abs() < 1e-8);
        assert!(v < 1e-15);
    }

    #[test]
    fn grid_extremum_tie_breaks() {
        // Flat function: every point ties.
        let f = |_x: f64| 2.0;
        let (xg, _) = grid_extremum(&f, 0.0, 1.0, 64, Mode::Max, TieBreak::Greatest);
        assert_eq!(xg, 1.0);
        let (xs, _) = grid_extremum(&f, 0.0, 1.0, 64, Mode::Min, TieBreak::Smallest);
        assert_eq!(xs, 0.0);
    }

    #[test]
    fn bisect_refines_root() {
        let f = |x: f64| x * x - 2.0;
        let r = bisect(&f, 0.0, 2.0, -2.0);
        assert!((r - std::f64::consts::SQRT_2).abs() < 1e-8);
    }
}
