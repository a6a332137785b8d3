//! Relay-side allocation when only the relay knows every channel.
//!
//! The source splits its power without seeing the relay-destination hop and
//! commits to a data rate `gamma_i = delta * log2(1 + P_Si*g2_i)` on each link.
//! The relay then forwards a link only if it can carry the committed rate in
//! full, spending exactly the relay fraction that meets it. Links are picked
//! greedily by rate per unit of relay budget.

use std::cmp::Ordering;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;

use crate::channel::{sample_network, sort_for_asf, ChannelStats, NetworkRealization};
use crate::error::{Error, Result};
use crate::experiment::derive_trial_seed;
use crate::scalar::{log2_1p, Scalar};

/// How the source splits its budget across the subchannels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum SourceMode {
    WaterFill,
    #[default]
    Equal,
}

impl SourceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceMode::WaterFill => "waterfill",
            SourceMode::Equal => "equal",
        }
    }
}

impl FromStr for SourceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "waterfill" => Ok(SourceMode::WaterFill),
            "equal" => Ok(SourceMode::Equal),
            other => Err(Error::invalid(
                "source mode",
                format!("expected waterfill or equal, got {other:?}"),
            )),
        }
    }
}

/// Source powers and the rates the source commits to.
#[derive(Clone, Debug, PartialEq)]
pub struct SourcePlan<T> {
    pub ps_alloc: Vec<T>,
    pub gammas: Vec<T>,
    pub delta: T,
}

/// Outcome of the relay's link selection.
#[derive(Clone, Debug, PartialEq)]
pub struct RelaySelection<T> {
    pub selected: Vec<bool>,
    /// Relay fraction spent on each link, zero when not forwarded.
    pub beta_tilde: Vec<T>,
    pub achieved_rates: Vec<T>,
    pub sum_rate: T,
    /// Relay fraction left unspent.
    pub leftover: T,
}

impl<T: Scalar> RelaySelection<T> {
    fn from_choice(selected: Vec<bool>, costs: &[T], rates: &[T]) -> Self {
        let pick = |v: &[T]| -> Vec<T> {
            v.iter()
                .zip(&selected)
                .map(|(&x, &s)| if s { x } else { T::zero() })
                .collect()
        };
        let beta_tilde = pick(costs);
        let achieved_rates = pick(rates);
        let sum_rate = achieved_rates.iter().copied().sum();
        let spent: T = beta_tilde.iter().copied().sum();
        Self {
            selected,
            beta_tilde,
            achieved_rates,
            sum_rate,
            leftover: (T::one() - spent).max(T::zero()),
        }
    }
}

/// Classical water-filling: `p_i = max(0, mu - 1/g2_i)` with `sum p_i = p`.
pub fn water_fill<T: Scalar>(g2s: &[T], p: T) -> Result<Vec<T>> {
    if !(p > T::zero() && p.is_finite()) {
        return Err(Error::invalid(
            "p",
            format!("power must be finite and > 0, got {p}"),
        ));
    }
    if let Some(bad) = g2s.iter().find(|g| !(g.is_finite() && **g >= T::zero())) {
        return Err(Error::invalid(
            "g2s",
            format!("gain must be finite and >= 0, got {bad}"),
        ));
    }
    let mut order: Vec<usize> = (0..g2s.len()).filter(|&i| g2s[i] > T::zero()).collect();
    if order.is_empty() {
        return Err(Error::AllZeroGains);
    }
    order.sort_by(|&a, &b| g2s[b].partial_cmp(&g2s[a]).unwrap_or(Ordering::Equal));

    // Grow the active set strongest first until the next floor sits above the level.
    let mut floors = T::zero();
    let mut level = T::zero();
    let mut active = 0;
    for (k, &i) in order.iter().enumerate() {
        let floor = g2s[i].recip();
        if k > 0 && floor >= level {
            break;
        }
        floors = floors + floor;
        active = k + 1;
        level = (p + floors) / T::from_usize_lossy(active);
    }
    let mut out = vec![T::zero(); g2s.len()];
    for &i in &order[..active] {
        out[i] = (level - g2s[i].recip()).max(T::zero());
    }
    Ok(out)
}

/// `n` equal shares of `p`; the last share absorbs rounding so the sum is `p`.
pub fn equal_split<T: Scalar>(n: usize, p: T) -> Vec<T> {
    if n == 0 {
        return Vec::new();
    }
    let share = p / T::from_usize_lossy(n);
    let mut out = vec![share; n];
    let head: T = out[..n - 1].iter().copied().sum();
    out[n - 1] = p - head;
    out
}

pub fn make_source_plan<T: Scalar>(
    net: &NetworkRealization<T>,
    delta: T,
    mode: SourceMode,
) -> Result<SourcePlan<T>> {
    if !(delta >= T::zero() && delta <= T::one()) {
        return Err(Error::invalid(
            "delta",
            format!("must lie in [0, 1], got {delta}"),
        ));
    }
    let ps_alloc = match mode {
        SourceMode::WaterFill => water_fill(&net.g2s(), net.p_s)?,
        SourceMode::Equal => equal_split(net.n(), net.p_s),
    };
    let gammas = ps_alloc
        .iter()
        .zip(&net.channels)
        .map(|(&p, ch)| delta * log2_1p(p * ch.g2))
        .collect();
    Ok(SourcePlan {
        ps_alloc,
        gammas,
        delta,
    })
}

/// Smallest relay fraction that carries `gamma_i` on link `i`, or `None` when
/// no finite fraction does.
///
/// With `rho = P_Si*g2_i` and `t = 2^gamma - 1`, the relay-side rate equals
/// `gamma` at `v = t*(rho + 1)/(rho - t)`, where `v = beta*P_R*h2_i`.
pub fn min_relay_fraction<T: Scalar>(
    plan: &SourcePlan<T>,
    net: &NetworkRealization<T>,
    i: usize,
) -> Option<T> {
    let gamma = plan.gammas[i];
    if gamma <= T::zero() {
        return Some(T::zero());
    }
    let h2 = net.channels[i].h2;
    let rho = plan.ps_alloc[i] * net.channels[i].g2;
    let t = (gamma * T::LN_2()).exp_m1();
    if h2 <= T::zero() || plan.delta >= T::one() || rho <= t {
        return None;
    }
    let v = t * (rho + T::one()) / (rho - t);
    Some(v / (net.p_r * h2))
}

/// Per-link relay costs of a plan, infinite where a link cannot be carried.
pub fn relay_costs<T: Scalar>(plan: &SourcePlan<T>, net: &NetworkRealization<T>) -> Vec<T> {
    (0..net.n())
        .map(|i| min_relay_fraction(plan, net, i).unwrap_or_else(T::infinity))
        .collect()
}

/// Scans links by efficiency `rate / cost` (ties: cheaper, then lower index)
/// and takes each one that still fits the remaining relay budget.
///
/// Links with zero rate are never taken.
pub fn greedy_select<T: Scalar>(costs: &[T], rates: &[T]) -> RelaySelection<T> {
    assert_eq!(costs.len(), rates.len(), "one cost per rate");
    let eta = |i: usize| rates[i] / costs[i];
    let mut order: Vec<usize> = (0..costs.len()).filter(|&i| rates[i] > T::zero()).collect();
    order.sort_by(|&a, &b| {
        eta(b)
            .partial_cmp(&eta(a))
            .unwrap_or(Ordering::Equal)
            .then(costs[a].partial_cmp(&costs[b]).unwrap_or(Ordering::Equal))
            .then(a.cmp(&b))
    });
    let mut selected = vec![false; costs.len()];
    let mut budget = T::one();
    for i in order {
        if costs[i] <= budget {
            selected[i] = true;
            budget = budget - costs[i];
        }
    }
    RelaySelection::from_choice(selected, costs, rates)
}

pub const BRUTE_FORCE_MAX_LINKS: usize = 25;

/// Exhaustive search for the subset with the largest total rate whose costs
/// fit in one relay budget. Ties go to the smaller total cost, then to the
/// lexicographically smallest index list.
pub fn brute_force_select<T: Scalar>(costs: &[T], rates: &[T]) -> Result<RelaySelection<T>> {
    assert_eq!(costs.len(), rates.len(), "one cost per rate");
    let n = costs.len();
    if n > BRUTE_FORCE_MAX_LINKS {
        return Err(Error::TooManyLinks {
            n,
            max: BRUTE_FORCE_MAX_LINKS,
        });
    }
    let usable: Vec<usize> = (0..n)
        .filter(|&i| rates[i] > T::zero() && costs[i] <= T::one())
        .collect();
    let mut search = Subsets {
        costs,
        rates,
        usable: &usable,
        current: Vec::new(),
        best: (Vec::new(), T::zero(), T::zero()),
    };
    search.visit(0, T::zero(), T::zero());
    let mut selected = vec![false; n];
    for &i in &search.best.0 {
        selected[i] = true;
    }
    Ok(RelaySelection::from_choice(selected, costs, rates))
}

struct Subsets<'a, T> {
    costs: &'a [T],
    rates: &'a [T],
    usable: &'a [usize],
    current: Vec<usize>,
    /// Index list, rate, cost.
    best: (Vec<usize>, T, T),
}

impl<T: Scalar> Subsets<'_, T> {
    // Depth-first in index order, so every subset is summed in the same order
    // and the lexicographic tie-break is the first one seen.
    fn visit(&mut self, from: usize, rate: T, cost: T) {
        let better = match rate.partial_cmp(&self.best.1) {
            Some(Ordering::Greater) => true,
            Some(Ordering::Equal) => cost < self.best.2,
            _ => false,
        };
        if better {
            self.best = (self.current.clone(), rate, cost);
        }
        for k in from..self.usable.len() {
            let i = self.usable[k];
            let c = cost + self.costs[i];
            if c > T::one() {
                continue;
            }
            self.current.push(i);
            self.visit(k + 1, rate + self.rates[i], c);
            self.current.pop();
        }
    }
}

pub fn solve_case2<T: Scalar>(
    net: &NetworkRealization<T>,
    delta: T,
    mode: SourceMode,
) -> Result<RelaySelection<T>> {
    let plan = make_source_plan(net, delta, mode)?;
    Ok(greedy_select(&relay_costs(&plan, net), &plan.gammas))
}

/// Case II on the sorted pairing; the source plan is built after sorting.
pub fn solve_case4<T: Scalar>(
    net: &NetworkRealization<T>,
    delta: T,
    mode: SourceMode,
) -> Result<RelaySelection<T>> {
    solve_case2(&sort_for_asf(net), delta, mode)
}

/// Which pairing of the two hops the relay uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Pairing {
    #[default]
    Identity,
    Sorted,
}

impl Pairing {
    pub fn solve<T: Scalar>(
        self,
        net: &NetworkRealization<T>,
        delta: T,
        mode: SourceMode,
    ) -> Result<RelaySelection<T>> {
        match self {
            Pairing::Identity => solve_case2(net, delta, mode),
            Pairing::Sorted => solve_case4(net, delta, mode),
        }
    }
}

/// Arg-max of the Monte Carlo mean sum rate over a grid of `delta` values.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaChoice<T> {
    pub delta: T,
    pub expected_sum_rate: T,
    /// The evaluated grid and its mean sum rates.
    pub grid: Vec<(T, T)>,
}

/// `{step, 2*step, ...}` strictly inside `(0, 1)`.
pub fn delta_grid<T: Scalar>(step: T) -> Result<Vec<T>> {
    if !(step > T::zero() && step <= T::lit(0.5)) {
        return Err(Error::invalid(
            "grid_step",
            format!("must lie in (0, 0.5], got {step}"),
        ));
    }
    // Points within a rounding error of 1 count as the excluded endpoint.
    let edge = T::one() - step * T::lit(1e-6);
    Ok((1..)
        .map(|k| step * T::from_usize_lossy(k))
        .take_while(|&d| d < edge)
        .collect())
}

/// Picks the `delta` with the largest mean sum rate over `trials` seeded
/// channel draws.
///
/// Every grid point is evaluated on the same draws. Trials run in parallel and
/// are reduced in trial order, so the result does not depend on the thread
/// count. Ties go to the smaller `delta`.
#[allow(clippy::too_many_arguments)]
pub fn optimize_delta<T: Scalar>(
    stats: &ChannelStats<T>,
    p_s: T,
    p_r: T,
    mode: SourceMode,
    pairing: Pairing,
    grid_step: T,
    trials: usize,
    seed: u64,
) -> Result<DeltaChoice<T>> {
    optimize_delta_at(stats, p_s, p_r, mode, pairing, grid_step, trials, seed, 0)
}

/// [`optimize_delta`] on trial indices `first_trial..first_trial + trials`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn optimize_delta_at<T: Scalar>(
    stats: &ChannelStats<T>,
    p_s: T,
    p_r: T,
    mode: SourceMode,
    pairing: Pairing,
    grid_step: T,
    trials: usize,
    seed: u64,
    first_trial: u64,
) -> Result<DeltaChoice<T>> {
    if trials == 0 {
        return Err(Error::invalid("trials", "must be >= 1"));
    }
    let grid = delta_grid(grid_step)?;
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<T>> {
            let net = sample_network(
                stats,
                p_s,
                p_r,
                derive_trial_seed(seed, first_trial + t as u64),
            )?;
            let net = match pairing {
                Pairing::Identity => net,
                Pairing::Sorted => sort_for_asf(&net),
            };
            let ps_alloc = match mode {
                SourceMode::WaterFill => water_fill(&net.g2s(), net.p_s)?,
                SourceMode::Equal => equal_split(net.n(), net.p_s),
            };
            let capacity: Vec<T> = ps_alloc
                .iter()
                .zip(&net.channels)
                .map(|(&p, ch)| log2_1p(p * ch.g2))
                .collect();
            Ok(grid
                .iter()
                .map(|&delta| {
                    let plan = SourcePlan {
                        ps_alloc: ps_alloc.clone(),
                        gammas: capacity.iter().map(|&c| delta * c).collect(),
                        delta,
                    };
                    greedy_select(&relay_costs(&plan, &net), &plan.gammas).sum_rate
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;

    let scale = T::from_usize_lossy(trials).recip();
    let means: Vec<(T, T)> = grid
        .iter()
        .enumerate()
        .map(|(k, &delta)| {
            let total = per_trial.iter().fold(T::zero(), |acc, row| acc + row[k]);
            (delta, total * scale)
        })
        .collect();
    let (delta, expected_sum_rate) =
        means
            .iter()
            .copied()
            .fold((grid[0], T::neg_infinity()), |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            });
    Ok(DeltaChoice {
        delta,
        expected_sum_rate,
        grid: means,
    })
}

/// One tabulated optimal `delta`.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaRecord {
    pub sigma_g2: f64,
    pub sigma_h2: f64,
    pub n: usize,
    pub tau: f64,
    pub snr_db: f64,
    pub mode: SourceMode,
    pub delta_star: f64,
}

pub const DELTA_TABLE_HEADER: &str = "# sigma_g2 sigma_h2 n tau snr_db mode delta_star";

/// Writes records one per line, whitespace separated, after a `#` header.
/// Floats use Rust's shortest round-trip form.
pub fn write_delta_table<W: Write>(mut out: W, records: &[DeltaRecord]) -> Result<()> {
    writeln!(out, "{DELTA_TABLE_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{} {} {} {} {} {} {}",
            r.sigma_g2,
            r.sigma_h2,
            r.n,
            r.tau,
            r.snr_db,
            r.mode.as_str(),
            r.delta_star
        )?;
    }
    Ok(())
}

/// Reads a table written by [`write_delta_table`]. Blank lines and lines
/// starting with `#` are skipped.
pub fn read_delta_table<R: BufRead>(input: R) -> Result<Vec<DeltaRecord>> {
    let mut records = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: String| Error::Parse {
            line: k + 1,
            reason,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(bad(format!("expected 7 fields, got {}", fields.len())));
        }
        let float = |i: usize| {
            fields[i]
                .parse::<f64>()
                .map_err(|e| bad(format!("field {}: {e}", i + 1)))
        };
        records.push(DeltaRecord {
            sigma_g2: float(0)?,
            sigma_h2: float(1)?,
            n: fields[2]
                .parse()
                .map_err(|e| bad(format!("field 3: {e}")))?,
            tau: float(3)?,
            snr_db: float(4)?,
            mode: fields[5].parse().map_err(|e: Error| bad(e.to_string()))?,
            delta_star: float(6)?,
        });
    }
    Ok(records)
}
