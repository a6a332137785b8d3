//! High-SNR approximation of the joint allocation.
//!
//! As both budgets grow, the balanced link SNR tends to `alpha_i*phi_i*P_S`
//! with `phi_i = |g_i||h_i| / (1 + |h_i|/|g_i|)` and the relay fraction tends
//! to `beta_i = alpha_i*r_i/tau` with `r_i = |g_i|/|h_i|`. The problem becomes
//!
//! ```text
//! maximize   sum_i ln(alpha_i * phi_i)
//! subject to sum_i alpha_i <= 1,   (1/tau) * sum_i alpha_i*r_i <= 1
//! ```
//!
//! whose optimum is `alpha_i = 1 / (l1 + l2*r_i/tau)`. Multipliers refer to
//! the natural-log objective.

use std::cell::Cell;

use thiserror::Error;

use crate::channel::{NetworkRealization, Subchannel};
use crate::error::Error;
use crate::global::Allocation;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct AsymptoticSolution<T> {
    pub alphas: Vec<T>,
    pub betas: Vec<T>,
    pub lambda1: T,
    pub lambda2: T,
    /// Multipliers of the equivalent form `beta_i = 1/(l1' + l2'*tau/r_i)`.
    pub lambda1_prime: T,
    pub lambda2_prime: T,
    pub phi: Vec<T>,
    /// High-SNR sum rate `sum_i log2(alpha_i*phi_i*P_S)` in bits.
    pub objective: T,
}

impl<T: Scalar> AsymptoticSolution<T> {
    /// The allocation evaluated with the exact finite-SNR link rates.
    pub fn exact_allocation(&self, net: &NetworkRealization<T>) -> Allocation<T> {
        let mut alloc = Allocation::from_fractions(net, self.alphas.clone(), self.betas.clone());
        alloc.lambda1 = self.lambda1;
        alloc.lambda2 = self.lambda2;
        alloc
    }
}

#[derive(Debug, Error)]
pub enum AsymptoticError<T: Scalar> {
    #[error("multiplier search did not converge after {iterations} iterations")]
    NonConvergence {
        iterations: usize,
        best: Box<AsymptoticSolution<T>>,
    },
    #[error(transparent)]
    Invalid(#[from] Error),
}

pub fn phi<T: Scalar>(ch: &Subchannel<T>) -> T {
    let (g, h) = (ch.g2.sqrt(), ch.h2.sqrt());
    g * h / (T::one() + h / g)
}

/// High-SNR link SNR `alpha*phi*P_S`.
pub fn asymptotic_link_snr<T: Scalar>(alpha: T, p_s: T, ch: &Subchannel<T>) -> Result<T, Error> {
    if ch.is_degenerate() {
        return Err(Error::invalid("ch", "both gains must be > 0"));
    }
    Ok(alpha * phi(ch) * p_s)
}

/// `max(0, 1/(lp1 + lp2*tau*|h|/|g|))`.
pub fn asymptotic_beta_closed_form<T: Scalar>(h_over_g: T, tau: T, lp1: T, lp2: T) -> T {
    let d = lp1 + lp2 * tau * h_over_g;
    if d > T::zero() {
        d.recip()
    } else {
        T::zero()
    }
}

const MAX_ITERS: usize = 200;

/// Solves the high-SNR problem exactly.
///
/// Each constraint is tried alone first; when neither alone yields a feasible
/// point both are tight, and `l2` is found by bisection with `l1` re-solved
/// by an inner bisection for every trial `l2`.
pub fn solve_asymptotic<T: Scalar>(
    net: &NetworkRealization<T>,
) -> Result<AsymptoticSolution<T>, AsymptoticError<T>> {
    if let Some(i) = net.channels.iter().position(|c| c.is_degenerate()) {
        return Err(Error::ZeroGain { link: i }.into());
    }
    let tau = net.tau();
    let n = T::from_usize_lossy(net.n());
    let w: Vec<T> = net
        .channels
        .iter()
        .map(|c| (c.g2 / c.h2).sqrt() / tau)
        .collect();
    let alphas_at = |l1: T, l2: T| -> Vec<T> {
        w.iter()
            .map(|&wi| {
                let d = l1 + l2 * wi;
                if d > T::zero() {
                    d.recip()
                } else {
                    T::zero()
                }
            })
            .collect()
    };
    let relay_sum = |a: &[T]| a.iter().zip(&w).map(|(&x, &wi)| x * wi).sum::<T>();
    let slack = T::lit(1e-12);

    // Source budget alone: equal split.
    let equal = alphas_at(n, T::zero());
    if relay_sum(&equal) <= T::one() + slack {
        return Ok(finish(net, equal, n, T::zero()));
    }
    // Relay budget alone: alpha_i proportional to 1/r_i.
    let inverse = alphas_at(T::zero(), n);
    if inverse.iter().copied().sum::<T>() <= T::one() + slack {
        return Ok(finish(net, inverse, T::zero(), n));
    }

    let iterations = Cell::new(0);
    let inner_ok = Cell::new(true);
    // Inner: l1 >= 0 with sum alpha = 1 for a given l2, or 0 if already under.
    let inner = |l2: T| -> T {
        let excess = |l1: T| alphas_at(l1, l2).iter().copied().sum::<T>() - T::one();
        if excess(T::zero()) <= T::zero() {
            return T::zero();
        }
        let (l1, k, done) = bisect(excess, n);
        iterations.set(iterations.get() + k);
        inner_ok.set(inner_ok.get() && done);
        l1
    };
    let outer = |l2: T, l1: T| relay_sum(&alphas_at(l1, l2)) - T::one();
    let mut ok = true;
    let (mut lo, mut hi) = (T::zero(), n);
    // The relay excess is positive at l2 = 0 (checked above) and falls as l2 grows.
    while outer(hi, inner(hi)) > T::zero() {
        lo = hi;
        hi = hi * T::lit(2.0);
        if !hi.is_finite() {
            ok = false;
            break;
        }
    }
    let mut outer_iters = 0;
    while outer_iters < MAX_ITERS {
        let mid = (lo + hi) * T::lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if outer(mid, inner(mid)) > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
        outer_iters += 1;
    }
    ok &= outer_iters < MAX_ITERS;
    let l2 = hi;
    let l1 = inner(l2);
    let sol = finish(net, alphas_at(l1, l2), l1, l2);
    if ok && inner_ok.get() {
        Ok(sol)
    } else {
        Err(AsymptoticError::NonConvergence {
            iterations: iterations.get() + outer_iters,
            best: Box::new(sol),
        })
    }
}

/// Bisection for the root of a decreasing `f` on `[0, inf)` with `f(0) > 0`,
/// starting from the bracket `[0, hi]`. Returns the upper end, which keeps
/// `f <= 0`.
fn bisect<T: Scalar, F: Fn(T) -> T>(f: F, mut hi: T) -> (T, usize, bool) {
    let mut lo = T::zero();
    let mut k = 0;
    while f(hi) > T::zero() {
        lo = hi;
        hi = hi * T::lit(2.0);
        k += 1;
        if !hi.is_finite() || k > MAX_ITERS {
            return (lo, k, false);
        }
    }
    while k < MAX_ITERS {
        let mid = (lo + hi) * T::lit(0.5);
        if mid <= lo || mid >= hi {
            return (hi, k, true);
        }
        if f(mid) > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
        k += 1;
    }
    (hi, k, false)
}

fn finish<T: Scalar>(
    net: &NetworkRealization<T>,
    alphas: Vec<T>,
    l1: T,
    l2: T,
) -> AsymptoticSolution<T> {
    let tau = net.tau();
    let betas: Vec<T> = alphas
        .iter()
        .zip(&net.channels)
        .map(|(&a, c)| a * (c.g2 / c.h2).sqrt() / tau)
        .collect();
    let phi: Vec<T> = net.channels.iter().map(phi).collect();
    let objective = alphas
        .iter()
        .zip(&phi)
        .map(|(&a, &f)| (a * f * net.p_s).log2())
        .sum();
    // 1/beta_i = l2 + l1*tau/r_i, so the primed pair is the swapped pair.
    AsymptoticSolution {
        alphas,
        betas,
        lambda1: l1,
        lambda2: l2,
        lambda1_prime: l2,
        lambda2_prime: l1,
        phi,
        objective,
    }
}

/// Checks that, among links with equal relay-destination gains, a weaker
/// source-relay gain never gets a smaller source fraction. Trivially true
/// when the relay budget is slack.
pub fn check_inverse_waterfilling<T: Scalar>(
    sol: &AsymptoticSolution<T>,
    net: &NetworkRealization<T>,
) -> bool {
    if sol.lambda2 <= T::zero() {
        return true;
    }
    let ch = &net.channels;
    (0..ch.len()).all(|i| {
        (0..ch.len()).all(|j| {
            ch[i].h2 != ch[j].h2 || !(ch[i].g2 < ch[j].g2) || sol.alphas[i] >= sol.alphas[j]
        })
    })
}
