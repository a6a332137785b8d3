// One-dimensional bracketing helpers shared by the allocators.

use crate::scalar::Scalar;

/// Final state of a bracketed search on a function that is positive at `lo`
/// and non-positive at `hi`.
#[derive(Clone, Debug)]
pub(crate) struct Bracket<T, P> {
    pub lo: T,
    pub hi: T,
    pub f_lo: T,
    pub f_hi: T,
    pub at_lo: P,
    pub at_hi: P,
    pub iterations: usize,
    pub converged: bool,
}

/// Regula falsi with the Illinois modification and a bisection safeguard.
///
/// `f` must satisfy `f(lo) > 0 >= f(hi)`; it need not be continuous, in which
/// case the bracket closes onto the jump. Stops when `|f(hi)| <= ftol` or the
/// bracket is narrower than `xtol` relative to `|hi|`.
pub(crate) fn shrink_bracket<T, P, F>(
    mut f: F,
    mut b: Bracket<T, P>,
    xtol: T,
    ftol: T,
    max_iter: usize,
) -> Bracket<T, P>
where
    T: Scalar,
    F: FnMut(T) -> (T, P),
{
    let half = T::lit(0.5);
    let mut w_lo = b.f_lo;
    let mut w_hi = b.f_hi;
    let mut last_side = 0i8;
    let mut width = b.hi - b.lo;
    let mut stalled = 0;
    while b.iterations < max_iter {
        if -b.f_hi <= ftol || b.hi - b.lo <= xtol * b.hi.abs().max(T::min_positive_value()) {
            b.converged = true;
            return b;
        }
        let secant = b.lo + (b.hi - b.lo) * w_lo / (w_lo - w_hi);
        let x = if stalled >= 2 || !(secant > b.lo && secant < b.hi) {
            stalled = 0;
            b.lo + (b.hi - b.lo) * half
        } else {
            secant
        };
        if !(x > b.lo && x < b.hi) {
            // Bracket is at floating-point resolution.
            b.converged = true;
            return b;
        }
        let (fx, px) = f(x);
        b.iterations += 1;
        if fx > T::zero() {
            b.lo = x;
            b.f_lo = fx;
            b.at_lo = px;
            w_lo = fx;
            if last_side == 1 {
                w_hi = w_hi * half;
            }
            last_side = 1;
        } else {
            b.hi = x;
            b.f_hi = fx;
            b.at_hi = px;
            w_hi = fx;
            if last_side == -1 {
                w_lo = w_lo * half;
            }
            last_side = -1;
        }
        let new_width = b.hi - b.lo;
        if new_width > width * half {
            stalled += 1;
        } else {
            stalled = 0;
        }
        width = new_width;
    }
    b
}

/// Maximizer of a unimodal function on `[lo, hi]` by golden-section search.
pub(crate) fn golden_max<T: Scalar, F: FnMut(T) -> T>(
    mut f: F,
    mut lo: T,
    mut hi: T,
    iters: usize,
) -> T {
    let r = T::lit(0.618_033_988_749_894_8);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        }
    }
    (lo + hi) * T::lit(0.5)
}
