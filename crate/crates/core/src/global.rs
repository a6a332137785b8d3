//! Joint source/relay power allocation with full channel knowledge at both
//! nodes (plain and sorted pairing).
//!
//! Every optimal allocation balances each link so that
//! `(beta_i/alpha_i)*tau = (alpha_i*P_S*g2_i + 1)/(beta_i*P_R*h2_i + 1)`. With the
//! relay fraction tied to the source fraction this way, the problem becomes
//!
//! ```text
//! maximize   sum_i rate_i(alpha_i)
//! subject to sum_i alpha_i <= 1,   sum_i beta_i(alpha_i) <= 1
//! ```
//!
//! which separates per link under two multipliers. The solver maximizes each
//! link's Lagrangian `rate - l1*alpha - l2*beta` exactly, and drives the two
//! multipliers to complementary slackness with nested bracketed searches
//! (`l1` inside, `l2` outside).
//!
//! At low SNR a link's rate grows quadratically before it turns concave, so the
//! per-link maximizer can jump from zero to a positive value as a multiplier
//! moves. When such a jump straddles the budget the dual point does not yield
//! a tight primal allocation. The solver then re-solves with the ambiguous
//! links forced in or out, keeping each forced link on the concave branch of
//! its Lagrangian, and returns the best feasible candidate.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::channel::{sort_for_asf, NetworkRealization};
use crate::error::Error;
use crate::link::{af_link_snr, link_capacity, BalancedLink, LinkPowers};
use crate::scalar::Scalar;
use crate::search::{golden_max, shrink_bracket, Bracket};

/// Per-subchannel fractions of both budgets and the rates they achieve.
#[derive(Clone, Debug, PartialEq)]
pub struct Allocation<T> {
    /// `P_Si / P_S`.
    pub alphas: Vec<T>,
    /// `P_Ri / P_R`.
    pub betas: Vec<T>,
    pub per_link_rates: Vec<T>,
    pub sum_rate: T,
    /// Multiplier of `sum alpha <= 1` at the returned point.
    pub lambda1: T,
    /// Multiplier of `sum beta <= 1` at the returned point.
    pub lambda2: T,
}

impl<T: Scalar> Allocation<T> {
    /// Builds an allocation from explicit fractions, evaluating the rates with
    /// the two-variable link SNR.
    pub fn from_fractions(net: &NetworkRealization<T>, alphas: Vec<T>, betas: Vec<T>) -> Self {
        assert_eq!(alphas.len(), net.n());
        assert_eq!(betas.len(), net.n());
        let per_link_rates: Vec<T> = net
            .channels
            .iter()
            .zip(alphas.iter().zip(&betas))
            .map(|(ch, (&a, &b))| {
                let p = LinkPowers {
                    ps_i: a * net.p_s,
                    pr_i: b * net.p_r,
                };
                link_capacity(af_link_snr(p, ch))
            })
            .collect();
        let sum_rate = per_link_rates.iter().copied().sum();
        Self {
            alphas,
            betas,
            per_link_rates,
            sum_rate,
            lambda1: T::zero(),
            lambda2: T::zero(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig<T> {
    /// Complementary-slackness tolerance on each budget sum.
    pub tol: T,
    /// Cap on the iterations of every bracketed multiplier search.
    pub max_iters: usize,
    /// Initial upper end of each multiplier bracket; grown by 4x as needed.
    pub multiplier_bracket: T,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-8),
            max_iters: 200,
            multiplier_bracket: T::one(),
        }
    }
}

impl<T: Scalar> SolverConfig<T> {
    fn validate(&self) -> Result<(), Error> {
        if !(self.tol > T::zero()) {
            return Err(Error::invalid("tol", "must be > 0"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters", "must be >= 1"));
        }
        if !(self.multiplier_bracket > T::zero() && self.multiplier_bracket.is_finite()) {
            return Err(Error::invalid(
                "multiplier_bracket",
                "must be finite and > 0",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum AllocError<T: Scalar> {
    #[error("multiplier search did not converge after {iterations} iterations")]
    NonConvergence {
        iterations: usize,
        /// Best feasible allocation seen before giving up.
        best: Box<Allocation<T>>,
    },
    #[error(transparent)]
    Invalid(#[from] Error),
}

/// Joint allocation with the identity pairing of source-relay and
/// relay-destination subchannels.
///
/// Links with a zero gain on either hop get `alpha = beta = 0` and take no
/// part in the optimization.
pub fn solve_case1<T: Scalar>(
    net: &NetworkRealization<T>,
    cfg: &SolverConfig<T>,
) -> Result<Allocation<T>, AllocError<T>> {
    cfg.validate()?;
    let (index, links): (Vec<usize>, Vec<_>) = net
        .channels
        .iter()
        .enumerate()
        .filter(|(_, ch)| !ch.is_degenerate())
        .map(|(i, ch)| (i, BalancedLink::new(net.p_s, net.p_r, ch)))
        .unzip();
    let problem = Problem::new(links, T::one(), T::one(), cfg);
    let outcome = problem.solve();
    let (lambda1, lambda2) =
        problem.multipliers(&outcome.alphas, (outcome.lambda1, outcome.lambda2));

    let mut alphas = vec![T::zero(); net.n()];
    let mut betas = vec![T::zero(); net.n()];
    for ((&i, link), &a) in index.iter().zip(&problem.links).zip(&outcome.alphas) {
        alphas[i] = a;
        betas[i] = link.relay_fraction(a);
    }
    let mut alloc = Allocation::from_fractions(net, alphas, betas);
    alloc.lambda1 = lambda1;
    alloc.lambda2 = lambda2;
    if outcome.converged {
        Ok(alloc)
    } else {
        Err(AllocError::NonConvergence {
            iterations: outcome.iterations,
            best: Box::new(alloc),
        })
    }
}

/// Joint allocation after sorting both hops (see [`sort_for_asf`]). The result
/// is indexed over the sorted pairs.
pub fn solve_case3<T: Scalar>(
    net: &NetworkRealization<T>,
    cfg: &SolverConfig<T>,
) -> Result<Allocation<T>, AllocError<T>> {
    solve_case1(&sort_for_asf(net), cfg)
}

/// Residual of the source/relay balance condition on every link.
///
/// Reports `|(beta/alpha)*tau - (alpha*P_S*g2 + 1)/(beta*P_R*h2 + 1)|` for links
/// with `alpha > 0` and zero elsewhere.
pub fn verify_kkt<T: Scalar>(net: &NetworkRealization<T>, alloc: &Allocation<T>) -> Vec<T> {
    let tau = net.tau();
    net.channels
        .iter()
        .zip(alloc.alphas.iter().zip(&alloc.betas))
        .map(|(ch, (&a, &b))| {
            if a <= T::zero() {
                return T::zero();
            }
            let lhs = b / a * tau;
            let rhs = (a * net.p_s * ch.g2 + T::one()) / (b * net.p_r * ch.h2 + T::one());
            (lhs - rhs).abs()
        })
        .collect()
}

/// How each link answers a pair of multipliers.
#[derive(Clone, Copy)]
enum Mapping<'a> {
    /// Global maximizer of the per-link Lagrangian, zero or on the stationary
    /// branch. Jumps where a link switches on, so it is only solved coarsely.
    Dual,
    /// Continuous response over a fixed support (see `Problem::respond`).
    Forced(&'a [bool]),
}

impl Mapping<'_> {
    /// Relative multiplier resolution of the bracketed searches.
    fn xtol<T: Scalar>(self) -> T {
        match self {
            Mapping::Dual => T::lit(DUAL_XTOL),
            Mapping::Forced(_) => T::lit(1e-15),
        }
    }
}

const DUAL_XTOL: f64 = 1e-4;

/// Nondegenerate links sharing budgets `b1` (source) and `b2` (relay).
struct Problem<'c, T> {
    links: Vec<BalancedLink<T>>,
    amax: Vec<T>,
    b1: T,
    b2: T,
    cfg: &'c SolverConfig<T>,
}

/// Solution of the inner (`l1`) search at a fixed `l2`.
#[derive(Clone, Debug)]
struct Inner<T> {
    lambda1: T,
    alphas: Vec<T>,
}

#[derive(Clone, Debug)]
struct Outcome<T> {
    alphas: Vec<T>,
    lambda1: T,
    lambda2: T,
    iterations: usize,
    converged: bool,
}

impl<T: Scalar> Outcome<T> {
    fn fixed(alphas: Vec<T>) -> Self {
        Self {
            alphas,
            lambda1: T::zero(),
            lambda2: T::zero(),
            iterations: 0,
            converged: true,
        }
    }
}

/// Cap on links whose inclusion is re-decided by enumeration.
const MAX_AMBIGUOUS: usize = 4;
/// Largest contested support searched link by link when a duality gap remains.
const MAX_SCAN_SUPPORT: usize = 3;
const SCAN_GRID: usize = 24;
const SCAN_REFINE: usize = 32;
const PEAK_ITERS: usize = 32;
const MAX_ROUNDS: usize = 6;
/// Best lone links whose singles and pairs are tried when a gap remains.
const SOLO_POOL: usize = 4;

impl<'c, T: Scalar> Problem<'c, T> {
    fn new(links: Vec<BalancedLink<T>>, b1: T, b2: T, cfg: &'c SolverConfig<T>) -> Self {
        let amax = links
            .iter()
            .map(|l| l.source_fraction(b2).min(b1))
            .collect();
        Self {
            links,
            amax,
            b1,
            b2,
            cfg,
        }
    }

    fn slope(&self, k: usize, alpha: T, l1: T, l2: T) -> T {
        let (dr, db) = self.links[k].derivatives(alpha);
        dr - l1 - l2 * db
    }

    fn lagrangian(&self, k: usize, alpha: T, l1: T, l2: T) -> T {
        let link = &self.links[k];
        link.rate(alpha) - l1 * alpha - l2 * link.relay_fraction(alpha)
    }

    /// Where the Lagrangian slope peaks; it rises from `-l1 - l2/tau` at zero
    /// and falls once the rate turns concave. The location ignores `l1`.
    fn peaks(&self, l2: T) -> Vec<T> {
        self.peaks_for(l2, None)
    }

    /// Peaks of the links in `support` (all when `None`); zero elsewhere.
    fn peaks_for(&self, l2: T, support: Option<&[bool]>) -> Vec<T> {
        (0..self.links.len())
            .map(|k| {
                if support.is_some_and(|s| !s[k]) {
                    return T::zero();
                }
                golden_max(
                    |a| self.slope(k, a, T::zero(), l2),
                    T::zero(),
                    self.amax[k],
                    PEAK_ITERS,
                )
            })
            .collect()
    }

    /// Positive stationary point of the per-link Lagrangian past the peak, if
    /// the slope ever becomes positive.
    fn branch(&self, k: usize, l1: T, l2: T, peak: T) -> Option<T> {
        let f_peak = self.slope(k, peak, l1, l2);
        if f_peak <= T::zero() {
            return None;
        }
        let amax = self.amax[k];
        let f_max = self.slope(k, amax, l1, l2);
        if f_max >= T::zero() {
            return Some(amax);
        }
        let start = Bracket {
            lo: peak,
            hi: amax,
            f_lo: f_peak,
            f_hi: f_max,
            at_lo: (),
            at_hi: (),
            iterations: 0,
            converged: false,
        };
        let ftol = T::lit(1e-13) * (f_peak - f_max);
        let b = shrink_bracket(
            |a| (self.slope(k, a, l1, l2), ()),
            start,
            T::lit(1e-13),
            ftol,
            200,
        );
        Some(b.hi)
    }

    /// Per-link response with the support held fixed. Supported links follow
    /// the stationary branch; once it disappears they slide from the slope
    /// peak towards zero as the slope there turns more negative. This keeps
    /// the response continuous and decreasing in both multipliers.
    fn respond(&self, support: &[bool], l1: T, l2: T, peaks: &[T]) -> Vec<T> {
        (0..self.links.len())
            .map(|k| {
                if !support[k] {
                    return T::zero();
                }
                let peak = peaks[k];
                self.branch(k, l1, l2, peak).unwrap_or_else(|| {
                    let deficit = -self.slope(k, peak, l1, l2);
                    let scale = self.links[k].d_rate(peak).max(T::min_positive_value());
                    peak * scale / (scale + deficit)
                })
            })
            .collect()
    }

    fn respond_with(&self, mapping: Mapping<'_>, l1: T, l2: T, peaks: &[T]) -> Vec<T> {
        match mapping {
            Mapping::Forced(support) => self.respond(support, l1, l2, peaks),
            Mapping::Dual => (0..self.links.len())
                .map(|k| match self.branch(k, l1, l2, peaks[k]) {
                    Some(a) if self.lagrangian(k, a, l1, l2) > T::zero() => a,
                    _ => T::zero(),
                })
                .collect(),
        }
    }

    /// Whether link `k` switches on when it maximizes its own Lagrangian.
    fn wants_on(&self, k: usize, l1: T, l2: T, peak: T) -> bool {
        self.branch(k, l1, l2, peak)
            .is_some_and(|a| self.lagrangian(k, a, l1, l2) > T::zero())
    }

    /// Multipliers consistent with `alphas`: zero on a slack budget, the
    /// other fitted to `d rate = l1 + l2 * d beta` over the active links.
    /// `fallback` is kept when both budgets bind and the fit is singular.
    fn multipliers(&self, alphas: &[T], fallback: (T, T)) -> (T, T) {
        let tol = self.cfg.tol;
        let slack1 = Self::alpha_sum(alphas) < self.b1 - tol;
        let slack2 = self.beta_sum(alphas) < self.b2 - tol;
        let slopes: Vec<(T, T)> = self
            .links
            .iter()
            .zip(alphas)
            .filter(|(_, &a)| a > T::zero())
            .map(|(l, &a)| l.derivatives(a))
            .collect();
        let m = T::from_usize_lossy(slopes.len().max(1));
        let mean = |f: &dyn Fn(&(T, T)) -> T| slopes.iter().map(f).sum::<T>() / m;
        let zero = T::zero();
        match (slack1, slack2) {
            _ if slopes.is_empty() => (zero, zero),
            (true, true) => (zero, zero),
            (true, false) => (zero, mean(&|&(d, s)| d / s).max(zero)),
            (false, true) => (mean(&|&(d, _)| d).max(zero), zero),
            (false, false) => {
                let (md, ms) = (mean(&|&(d, _)| d), mean(&|&(_, s)| s));
                let var = mean(&|&(_, s)| (s - ms) * (s - ms));
                if var <= T::epsilon() * ms * ms {
                    return fallback;
                }
                let l2 = mean(&|&(d, s)| (d - md) * (s - ms)) / var;
                ((md - l2 * ms).max(zero), l2.max(zero))
            }
        }
    }

    fn alpha_sum(alphas: &[T]) -> T {
        alphas.iter().copied().sum()
    }

    fn beta_sum(&self, alphas: &[T]) -> T {
        self.links
            .iter()
            .zip(alphas)
            .map(|(l, &a)| l.relay_fraction(a))
            .sum()
    }

    fn objective(&self, alphas: &[T]) -> T {
        self.links.iter().zip(alphas).map(|(l, &a)| l.rate(a)).sum()
    }

    fn is_feasible(&self, alphas: &[T]) -> bool {
        let slack = self.cfg.tol;
        Self::alpha_sum(alphas) <= self.b1 + slack && self.beta_sum(alphas) <= self.b2 + slack
    }

    /// Dual function; an upper bound on the optimum for any nonnegative pair.
    fn dual_bound(&self, l1: T, l2: T) -> T {
        let peaks = self.peaks(l2);
        let mut total = l1 * self.b1 + l2 * self.b2;
        for (k, &peak) in peaks.iter().enumerate() {
            if let Some(a) = self.branch(k, l1, l2, peak) {
                total = total + self.lagrangian(k, a, l1, l2).max(T::zero());
            }
        }
        total
    }

    /// Price at which the budget excess `f` stops being positive, with the
    /// response there.
    ///
    /// When the budget is already met at zero price (typically a link pinned
    /// at its cap), the largest price keeping it within `tol` of tight is
    /// returned instead, so the price still reflects the binding budget.
    /// `Err` carries the last price tried when no bracket is found.
    fn price<P>(
        &self,
        mut f: impl FnMut(T) -> (T, P),
        xtol: T,
        hint: T,
    ) -> Result<(T, P, usize, bool), (T, usize)> {
        let tol = self.cfg.tol;
        let (f0, p0) = f(T::zero());
        if f0 <= -tol {
            return Ok((T::zero(), p0, 0, true));
        }
        let shift = if f0 <= tol { tol } else { T::zero() };
        let mut g = |x: T| {
            let (v, p) = f(x);
            (v + shift, p)
        };
        let two = T::lit(2.0);
        let (mut lo, mut f_lo, mut at_lo) = (T::zero(), f0 + shift, p0);
        let mut hi = if hint > T::zero() {
            hint
        } else {
            self.cfg.multiplier_bracket
        };
        let (mut f_hi, mut at_hi) = g(hi);
        let mut steps = 0;
        if f_hi <= T::zero() && hint > T::zero() {
            // Walk down from the hint for a tight lower end.
            loop {
                let x = hi / two;
                steps += 1;
                if steps >= self.cfg.max_iters || x < hint * T::lit(1e-6) {
                    break;
                }
                let (fx, px) = g(x);
                if fx > T::zero() {
                    (lo, f_lo, at_lo) = (x, fx, px);
                    break;
                }
                (hi, f_hi, at_hi) = (x, fx, px);
            }
        }
        let factor = if hint > T::zero() { two } else { T::lit(4.0) };
        while f_hi > T::zero() {
            steps += 1;
            if steps >= self.cfg.max_iters || !hi.is_finite() {
                return Err((hi, steps));
            }
            (lo, f_lo, at_lo) = (hi, f_hi, at_hi);
            hi = hi * factor;
            (f_hi, at_hi) = g(hi);
        }
        let start = Bracket {
            lo,
            hi,
            f_lo,
            f_hi,
            at_lo,
            at_hi,
            iterations: 0,
            converged: false,
        };
        let b = shrink_bracket(g, start, xtol, tol, self.cfg.max_iters);
        Ok((b.hi, b.at_hi, steps + b.iterations, b.converged))
    }

    /// Solves for `l1` at fixed `l2` so that the source budget is met.
    fn inner(&self, mapping: Mapping<'_>, l2: T, hint: T) -> (Inner<T>, usize, bool) {
        let peaks = match mapping {
            Mapping::Dual => self.peaks(l2),
            Mapping::Forced(support) => self.peaks_for(l2, Some(support)),
        };
        let eval = |l1: T| {
            let a = self.respond_with(mapping, l1, l2, &peaks);
            (Self::alpha_sum(&a) - self.b1, a)
        };
        match self.price(eval, mapping.xtol(), hint) {
            Ok((lambda1, alphas, it, ok)) => (Inner { lambda1, alphas }, it, ok),
            Err((hi, grown)) => (
                Inner {
                    lambda1: hi,
                    alphas: vec![T::zero(); self.links.len()],
                },
                grown,
                false,
            ),
        }
    }

    /// Both multipliers for a given response: `l1` inside, `l2` outside.
    fn solve_with(&self, mapping: Mapping<'_>) -> Outcome<T> {
        let mut iterations = 0;
        let mut converged = true;
        let mut hint = T::zero();
        let eval = |l2: T| {
            let (inner, it, ok) = self.inner(mapping, l2, hint);
            iterations += it;
            converged &= ok;
            if ok && inner.lambda1 > T::zero() {
                hint = inner.lambda1;
            }
            (self.beta_sum(&inner.alphas) - self.b2, inner)
        };
        let found = self.price(eval, mapping.xtol(), T::zero());
        match found {
            Ok((lambda2, inner, it, ok)) => Outcome {
                alphas: inner.alphas,
                lambda1: inner.lambda1,
                lambda2,
                iterations: iterations + it,
                converged: converged && ok,
            },
            // No multiplier fits the relay budget; fall back to nothing allocated.
            Err((hi, grown)) => Outcome {
                alphas: vec![T::zero(); self.links.len()],
                lambda1: T::zero(),
                lambda2: hi,
                iterations: iterations + grown,
                converged: false,
            },
        }
    }

    /// Solves a fixed support, dropping links whose stationary branch vanishes
    /// at the final multipliers. Returns the surviving support alongside.
    fn solve_forced(&self, mut support: Vec<bool>) -> (Outcome<T>, Vec<bool>) {
        let mut iterations = 0;
        loop {
            if !support.iter().any(|&s| s) {
                let mut out = Outcome::fixed(vec![T::zero(); self.links.len()]);
                out.iterations = iterations;
                return (out, support);
            }
            let mut out = self.solve_with(Mapping::Forced(&support));
            iterations += out.iterations;
            out.iterations = iterations;
            if !out.converged {
                return (out, support);
            }
            let peaks = self.peaks_for(out.lambda2, Some(&support));
            let vanished: Vec<usize> = (0..self.links.len())
                .filter(|&k| {
                    support[k] && self.branch(k, out.lambda1, out.lambda2, peaks[k]).is_none()
                })
                .collect();
            if vanished.is_empty() {
                return (out, support);
            }
            if vanished.len() == support.iter().filter(|&&s| s).count() {
                // Every link was squeezed below its peak: shed only the one
                // pushed furthest, the others may recover.
                let ratio = |k: usize| out.alphas[k] / peaks[k].max(T::min_positive_value());
                let worst = vanished.iter().copied().fold(vanished[0], |w, k| {
                    if ratio(k) < ratio(w) {
                        k
                    } else {
                        w
                    }
                });
                support[worst] = false;
            } else {
                for k in vanished {
                    support[k] = false;
                }
            }
        }
    }

    /// Links whose membership in the support disagrees with what their own
    /// Lagrangian prefers at the outcome's multipliers.
    fn disputed(&self, out: &Outcome<T>, support: &[bool]) -> Vec<usize> {
        let peaks = self.peaks(out.lambda2);
        (0..self.links.len())
            .filter(|&k| support[k] != self.wants_on(k, out.lambda1, out.lambda2, peaks[k]))
            .collect()
    }

    fn solve(&self) -> Outcome<T> {
        let n = self.links.len();
        if n <= 2 {
            let all: Vec<usize> = (0..n).collect();
            return Outcome::fixed(self.subset_optimum(&all));
        }

        // A coarse dual solve suggests the support; active-set rounds then
        // flip every link whose own Lagrangian disagrees with its membership
        // until nothing is disputed or a support repeats.
        let coarse = self.solve_with(Mapping::Dual);
        if !coarse.converged {
            return coarse;
        }
        let mut total_iters = coarse.iterations;
        let by_solo = self.rank_by_solo_rate();
        let mut support: Vec<bool> = coarse.alphas.iter().map(|&a| a > T::zero()).collect();
        let mut best = (Outcome::fixed(vec![T::zero(); n]), T::zero());
        if support.iter().filter(|&&s| s).count() < 2 {
            // Low SNR: one link takes everything at the coarse prices, and a
            // direct search over small supports is exact and cheaper.
            let pool = (0..n).filter(|&k| support[k]).collect();
            self.keep(&mut best, coarse);
            self.small_search(&mut best, &pool, &by_solo);
            best.0.iterations = total_iters;
            return best.0;
        }
        let mut tried: Vec<Vec<bool>> = Vec::new();
        let mut pool: BTreeSet<usize> = BTreeSet::new();
        let mut disputed: BTreeSet<usize> = BTreeSet::new();
        let (mut kept, mut prices);
        loop {
            tried.push(support.clone());
            let out;
            (out, kept) = self.solve_forced(support);
            total_iters += out.iterations;
            if !out.converged {
                return Outcome {
                    iterations: total_iters,
                    ..out
                };
            }
            pool.extend((0..n).filter(|&k| kept[k]));
            prices = (out.lambda1, out.lambda2);
            let now = self.disputed(&out, &kept);
            self.keep(&mut best, out);
            if now.is_empty() {
                // The dual certifies this allocation.
                best.0.iterations = total_iters;
                return best.0;
            }
            let mut next = kept.clone();
            for &k in &now {
                next[k] = !next[k];
            }
            disputed.extend(now);
            if tried.contains(&next) || tried.len() > MAX_ROUNDS {
                break;
            }
            support = next;
        }

        // Re-decide the disputed links by enumeration around the last support.
        let ambiguous: Vec<usize> = by_solo
            .iter()
            .copied()
            .filter(|k| disputed.contains(k))
            .take(MAX_AMBIGUOUS)
            .collect();
        let core: Vec<usize> = (0..n)
            .filter(|k| kept[*k] && !ambiguous.contains(k))
            .collect();
        for mask in 1u32..(1 << ambiguous.len()) {
            let mut support = vec![false; n];
            for &k in &core {
                support[k] = true;
            }
            for (bit, &k) in ambiguous.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    support[k] = true;
                }
            }
            if tried.contains(&support) {
                continue;
            }
            let (candidate, _) = self.solve_forced(support);
            total_iters += candidate.iterations;
            if candidate.converged {
                self.keep(&mut best, candidate);
            }
        }

        // A remaining duality gap with a small support usually means a link
        // sits on the convex part of its rate curve; search those exactly.
        if self.dual_bound(prices.0, prices.1) - best.1 > self.cfg.tol {
            self.small_search(&mut best, &pool, &by_solo);
        }
        best.0.iterations = total_iters;
        best.0
    }

    /// Direct search over supports of at most three links: the best lone
    /// links alone and in pairs, then the best small support found so far
    /// topped up from `pool` and the solo ranking.
    fn small_search(&self, best: &mut (Outcome<T>, T), pool: &BTreeSet<usize>, by_solo: &[usize]) {
        let top = &by_solo[..by_solo.len().min(SOLO_POOL)];
        for (i, &j) in top.iter().enumerate() {
            for &k in &top[i..] {
                let pair = if j == k { vec![j] } else { vec![j, k] };
                self.keep(best, Outcome::fixed(self.subset_optimum(&pair)));
            }
        }
        let mut small: Vec<usize> = (0..self.links.len())
            .filter(|&k| best.0.alphas[k] > T::zero())
            .collect();
        if small.len() > MAX_SCAN_SUPPORT {
            return;
        }
        for &k in pool.iter().chain(by_solo) {
            if small.len() == MAX_SCAN_SUPPORT {
                break;
            }
            if !small.contains(&k) {
                small.push(k);
            }
        }
        small.sort_unstable();
        self.keep(best, Outcome::fixed(self.subset_optimum(&small)));
    }

    /// Replaces `best` when `cand` is feasible and better.
    fn keep(&self, best: &mut (Outcome<T>, T), cand: Outcome<T>) {
        if !self.is_feasible(&cand.alphas) {
            return;
        }
        let value = self.objective(&cand.alphas);
        if value > best.1 {
            *best = (cand, value);
        }
    }

    /// Link indices ordered by the rate each would get alone, best first.
    fn rank_by_solo_rate(&self) -> Vec<usize> {
        let solo: Vec<T> = (0..self.links.len())
            .map(|k| self.links[k].rate(self.amax[k]))
            .collect();
        let mut order: Vec<usize> = (0..self.links.len()).collect();
        order.sort_by(|&a, &b| {
            solo[b]
                .partial_cmp(&solo[a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        order
    }

    /// Optimum restricted to at most three links, by direct search.
    fn subset_optimum(&self, subset: &[usize]) -> Vec<T> {
        let mut alphas = vec![T::zero(); self.links.len()];
        match *subset {
            [] => {}
            // A lone link's rate increases with its share, so it takes all it can.
            [k] => alphas[k] = self.amax[k],
            [j, k] => {
                let (x, y) = self.pair(j, k);
                alphas[j] = x;
                alphas[k] = y;
            }
            _ => {
                if let Some((found, _)) = self.scan(subset) {
                    alphas = found;
                }
            }
        }
        alphas
    }

    /// Exact search for two links: the first link's share is scanned and the
    /// second takes the most the leftover budgets allow.
    fn pair(&self, j: usize, k: usize) -> (T, T) {
        let (a, b) = (&self.links[j], &self.links[k]);
        let fill = |x: T| -> (T, T) {
            let rest = self.b2 - a.relay_fraction(x);
            let y = if rest > T::zero() {
                (self.b1 - x).min(b.source_fraction(rest)).max(T::zero())
            } else {
                T::zero()
            };
            (a.rate(x) + b.rate(y), y)
        };
        let x = maximize_1d(|x| fill(x).0, self.amax[j]);
        (x, fill(x).1)
    }

    /// Scans the share of each contested link, solving the others on the
    /// leftover budgets. This recovers optima where a link sits on the convex
    /// part of its rate curve, which no choice of multipliers exposes.
    fn scan(&self, contested: &[usize]) -> Option<(Vec<T>, T)> {
        let mut best: Option<(Vec<T>, T)> = None;
        for &j in contested {
            let others: Vec<usize> = contested.iter().copied().filter(|&k| k != j).collect();
            let value_at = |x: T| -> (T, Vec<T>) {
                let link = &self.links[j];
                let mut alphas = vec![T::zero(); self.links.len()];
                alphas[j] = x;
                let r1 = self.b1 - x;
                let r2 = self.b2 - link.relay_fraction(x);
                let mut value = link.rate(x);
                if r1 > T::zero() && r2 > T::zero() {
                    let sub = Problem::new(
                        others.iter().map(|&k| self.links[k]).collect(),
                        r1,
                        r2,
                        self.cfg,
                    );
                    let out = sub.solve();
                    value = value + sub.objective(&out.alphas);
                    for (&k, &a) in others.iter().zip(&out.alphas) {
                        alphas[k] = a;
                    }
                }
                (value, alphas)
            };
            let x = maximize_1d(|x| value_at(x).0, self.amax[j]);
            let (value, alphas) = value_at(x);
            if self.is_feasible(&alphas) && best.as_ref().map_or(true, |b| value > b.1) {
                best = Some((alphas, value));
            }
        }
        best
    }
}

/// Maximizer of `f` on `[0, hi]`: a uniform grid, then golden section around
/// the best grid point.
fn maximize_1d<T: Scalar>(mut f: impl FnMut(T) -> T, hi: T) -> T {
    if !(hi > T::zero()) {
        return T::zero();
    }
    let step = hi / T::from_usize_lossy(SCAN_GRID);
    let grid: Vec<T> = (0..=SCAN_GRID)
        .map(|i| (step * T::from_usize_lossy(i)).min(hi))
        .collect();
    let values: Vec<T> = grid.iter().map(|&x| f(x)).collect();
    let top = (0..grid.len()).fold(0, |b, i| if values[i] > values[b] { i } else { b });
    let x = golden_max(
        &mut f,
        grid[top.saturating_sub(1)],
        grid[(top + 1).min(SCAN_GRID)],
        SCAN_REFINE,
    );
    if f(x) >= values[top] {
        x
    } else {
        grid[top]
    }
}
