//! Monte Carlo sweeps of mean sum rate against total SNR.
//!
//! Every trial draws one channel realization and feeds it to each requested
//! scheme, so differences between schemes are paired. Trials run on the rayon
//! pool and are reduced in trial order, which keeps the output independent of
//! the number of worker threads.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::asymptotic::{solve_asymptotic, AsymptoticError};
use crate::channel::{sample_network, ChannelStats, NetworkRealization};
use crate::error::{Error, Result};
use crate::global::{solve_case1, solve_case3, AllocError, Allocation, SolverConfig};
use crate::relay::{optimize_delta_at, Pairing, SourceMode};

/// One allocation scheme. The derived order is the CSV row order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Case {
    /// Joint allocation, identity pairing.
    Joint,
    /// Relay-side greedy selection, identity pairing.
    Relay,
    /// Joint allocation, sorted pairing.
    JointSorted,
    /// Relay-side greedy selection, sorted pairing.
    RelaySorted,
    /// High-SNR closed form evaluated with the exact rates.
    Asymptotic,
}

impl Case {
    pub const ALL: [Case; 5] = [
        Case::Joint,
        Case::Relay,
        Case::JointSorted,
        Case::RelaySorted,
        Case::Asymptotic,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Case::Joint => "1",
            Case::Relay => "2",
            Case::JointSorted => "3",
            Case::RelaySorted => "4",
            Case::Asymptotic => "asym",
        }
    }

    fn uses_delta(self) -> Option<Pairing> {
        match self {
            Case::Relay => Some(Pairing::Identity),
            Case::RelaySorted => Some(Pairing::Sorted),
            _ => None,
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Case::ALL
            .into_iter()
            .find(|c| c.label() == s)
            .ok_or_else(|| {
                Error::invalid(
                    "cases",
                    format!("unknown case {s:?}; expected 1, 2, 3, 4 or asym"),
                )
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DeltaMode {
    Fixed(f64),
    /// Calibrated per SNR point by Monte Carlo over a grid.
    Optimized,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub cases: Vec<Case>,
    pub n: usize,
    /// `P_R / P_S`.
    pub tau: f64,
    /// Total SNR points `P * sigma2`, in dB.
    pub snr_db: Vec<f64>,
    /// Variance of every fading coefficient on both hops.
    pub sigma2: f64,
    pub trials: usize,
    pub master_seed: u64,
    pub delta_mode: DeltaMode,
    pub source_mode: SourceMode,
    pub delta_step: f64,
    /// Draws used to pick `delta` at each SNR point; disjoint from the
    /// evaluation draws.
    pub calibration_trials: usize,
    pub solver: SolverConfig<f64>,
    pub out_path: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            cases: vec![Case::Joint, Case::Relay],
            n: 20,
            tau: 1.0,
            snr_db: (0..=20).map(|k| 2.0 * k as f64).collect(),
            sigma2: 1.0,
            trials: 2000,
            master_seed: 1,
            delta_mode: DeltaMode::Optimized,
            source_mode: SourceMode::Equal,
            delta_step: 0.02,
            calibration_trials: 1000,
            solver: SolverConfig::default(),
            out_path: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cases.is_empty() {
            return Err(Error::invalid("cases", "at least one case is required"));
        }
        if self.n == 0 {
            return Err(Error::invalid("n", "must be >= 1"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid(
                "tau",
                format!("must be finite and > 0, got {}", self.tau),
            ));
        }
        if self.snr_db.is_empty() {
            return Err(Error::invalid(
                "snr_db",
                "at least one SNR point is required",
            ));
        }
        if let Some(bad) = self.snr_db.iter().find(|s| !s.is_finite()) {
            return Err(Error::invalid(
                "snr_db",
                format!("must be finite, got {bad}"),
            ));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::invalid(
                "sigma2",
                format!("must be finite and > 0, got {}", self.sigma2),
            ));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials", "must be >= 1"));
        }
        if let DeltaMode::Fixed(d) = self.delta_mode {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::invalid(
                    "delta",
                    format!("must lie in (0, 1), got {d}"),
                ));
            }
        }
        if self.calibration_trials == 0 {
            return Err(Error::invalid("calibration_trials", "must be >= 1"));
        }
        if !(self.delta_step > 0.0 && self.delta_step <= 0.5) {
            return Err(Error::invalid(
                "delta_step",
                format!("must lie in (0, 0.5], got {}", self.delta_step),
            ));
        }
        Ok(())
    }

    fn stats(&self) -> Result<ChannelStats<f64>> {
        ChannelStats::shared(self.n, self.sigma2, self.sigma2)
    }

    /// Source and relay budgets at a total SNR.
    pub fn budgets(&self, snr_db: f64) -> (f64, f64) {
        let p = 10f64.powf(snr_db / 10.0) / self.sigma2;
        (p / (1.0 + self.tau), self.tau * p / (1.0 + self.tau))
    }
}

/// One aggregated point of a curve.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub snr_db: f64,
    pub case: Case,
    pub mean_sum_rate: f64,
    pub std_err: f64,
    pub trials: usize,
    pub delta_used: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SumRateCurve {
    pub rows: Vec<CurveRow>,
}

impl SumRateCurve {
    pub fn get(&self, snr_db: f64, case: Case) -> Option<&CurveRow> {
        self.rows
            .iter()
            .find(|r| r.snr_db == snr_db && r.case == case)
    }

    /// `(snr_db, mean)` for one case, in SNR order.
    pub fn series(&self, case: Case) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.case == case)
            .map(|r| (r.snr_db, r.mean_sum_rate))
            .collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    }
}

/// Per-trial sum rates of every requested case at one SNR point.
#[derive(Clone, Debug, PartialEq)]
pub struct PointTrials {
    pub snr_db: f64,
    /// Case, its `delta` if it uses one, and one sum rate per trial.
    pub cases: Vec<(Case, Option<f64>, Vec<f64>)>,
}

impl PointTrials {
    pub fn rates(&self, case: Case) -> Option<&[f64]> {
        self.cases
            .iter()
            .find(|c| c.0 == case)
            .map(|c| c.2.as_slice())
    }
}

/// Trial seed from a master seed: `mix(mix(master) ^ trial)` with the
/// SplitMix64 finalizer as `mix`. Both steps are bijections, so distinct
/// trial indices always map to distinct seeds.
pub fn derive_trial_seed(master_seed: u64, trial_index: u64) -> u64 {
    mix(mix(master_seed) ^ trial_index)
}

fn mix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Trial indices at and above this are reserved for `delta` calibration.
pub const CALIBRATION_TRIAL_BASE: u64 = 1 << 63;

/// The `delta` each relay-side case uses at one SNR point.
pub fn choose_delta(cfg: &ExperimentConfig, snr_db: f64, pairing: Pairing) -> Result<f64> {
    match cfg.delta_mode {
        DeltaMode::Fixed(d) => Ok(d),
        DeltaMode::Optimized => {
            let (p_s, p_r) = cfg.budgets(snr_db);
            let choice = optimize_delta_at(
                &cfg.stats()?,
                p_s,
                p_r,
                cfg.source_mode,
                pairing,
                cfg.delta_step,
                cfg.calibration_trials,
                cfg.master_seed,
                CALIBRATION_TRIAL_BASE,
            )?;
            Ok(choice.delta)
        }
    }
}

fn sum_rate(
    case: Case,
    net: &NetworkRealization<f64>,
    cfg: &ExperimentConfig,
    delta: Option<f64>,
) -> Result<f64> {
    // A capped multiplier search still yields a feasible allocation; use it.
    let joint = |r: std::result::Result<Allocation<f64>, AllocError<f64>>| match r {
        Ok(a) => Ok(a.sum_rate),
        Err(AllocError::NonConvergence { best, .. }) => Ok(best.sum_rate),
        Err(AllocError::Invalid(e)) => Err(e),
    };
    match case {
        Case::Joint => joint(solve_case1(net, &cfg.solver)),
        Case::JointSorted => joint(solve_case3(net, &cfg.solver)),
        Case::Relay | Case::RelaySorted => {
            let pairing = case.uses_delta().expect("relay case");
            Ok(pairing
                .solve(net, delta.expect("delta chosen"), cfg.source_mode)?
                .sum_rate)
        }
        Case::Asymptotic => match solve_asymptotic(net) {
            Ok(sol) => Ok(sol.exact_allocation(net).sum_rate),
            Err(AsymptoticError::NonConvergence { best, .. }) => {
                Ok(best.exact_allocation(net).sum_rate)
            }
            // Only reachable with a zero gain, which fading draws never produce.
            Err(AsymptoticError::Invalid(e)) => Err(e),
        },
    }
}

/// Runs every requested case on the same `cfg.trials` draws at one SNR point.
pub fn simulate_point(cfg: &ExperimentConfig, snr_db: f64) -> Result<PointTrials> {
    cfg.validate()?;
    let mut cases: Vec<Case> = cfg.cases.clone();
    cases.sort();
    cases.dedup();
    let deltas = cases
        .iter()
        .map(|c| {
            c.uses_delta()
                .map(|p| choose_delta(cfg, snr_db, p))
                .transpose()
        })
        .collect::<Result<Vec<_>>>()?;
    let stats = cfg.stats()?;
    let (p_s, p_r) = cfg.budgets(snr_db);
    let per_trial = (0..cfg.trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<f64>> {
            let net = sample_network(
                &stats,
                p_s,
                p_r,
                derive_trial_seed(cfg.master_seed, t as u64),
            )?;
            cases
                .iter()
                .zip(&deltas)
                .map(|(&c, &d)| sum_rate(c, &net, cfg, d))
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PointTrials {
        snr_db,
        cases: cases
            .iter()
            .enumerate()
            .map(|(k, &c)| (c, deltas[k], per_trial.iter().map(|row| row[k]).collect()))
            .collect(),
    })
}

/// Mean and standard error of the mean; the error is 0 for a single sample.
pub fn mean_and_std_err(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SumRateCurve> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &snr_db in &cfg.snr_db {
        let point = simulate_point(cfg, snr_db)?;
        for (case, delta, rates) in point.cases {
            let (mean, std_err) = mean_and_std_err(&rates);
            rows.push(CurveRow {
                snr_db,
                case,
                mean_sum_rate: mean,
                std_err,
                trials: rates.len(),
                delta_used: delta,
            });
        }
    }
    let curve = SumRateCurve { rows };
    if let Some(path) = &cfg.out_path {
        write_csv(&curve, path)?;
    }
    Ok(curve)
}

pub const CSV_HEADER: &str = "snr_db,case,mean_sum_rate,std_err,trials,delta_used";

/// Writes the curve sorted by SNR, then case.
pub fn write_csv_to<W: Write>(curve: &SumRateCurve, mut out: W) -> Result<()> {
    let mut rows: Vec<&CurveRow> = curve.rows.iter().collect();
    rows.sort_by(|a, b| a.snr_db.total_cmp(&b.snr_db).then(a.case.cmp(&b.case)));
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        let delta = r.delta_used.map_or_else(|| "n/a".to_string(), format_g6);
        writeln!(
            out,
            "{},{},{},{},{},{}",
            format_g6(r.snr_db),
            r.case,
            format_g6(r.mean_sum_rate),
            format_g6(r.std_err),
            r.trials,
            delta
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_csv(curve: &SumRateCurve, path: &Path) -> Result<()> {
    write_csv_to(curve, BufWriter::new(File::create(path)?))
}

/// Six significant digits in the style of C's `%g`: fixed notation for
/// decimal exponents in `[-4, 6)`, scientific otherwise, trailing zeros dropped.
pub fn format_g6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
