//! Subchannel gains, their Rayleigh-fading statistics and the sorted pairing
//! used by amplify-sort-and-forward relaying.
//!
//! Gains are kept as squared magnitudes. Phases never enter a capacity
//! expression, so they are not generated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Squared gains of one source-relay / relay-destination subchannel pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Subchannel<T> {
    /// `|g_i|^2`, source to relay.
    pub g2: T,
    /// `|h_i|^2`, relay to destination.
    pub h2: T,
}

impl<T: Scalar> Subchannel<T> {
    pub fn new(g2: T, h2: T) -> Result<Self> {
        check_gain("g2", g2)?;
        check_gain("h2", h2)?;
        Ok(Self { g2, h2 })
    }

    pub fn is_degenerate(&self) -> bool {
        self.g2 <= T::zero() || self.h2 <= T::zero()
    }
}

fn check_gain<T: Scalar>(field: &'static str, v: T) -> Result<()> {
    if !v.is_finite() || v < T::zero() {
        return Err(Error::invalid(
            field,
            format!("gain must be finite and >= 0, got {v}"),
        ));
    }
    Ok(())
}

/// Fading variances of the two hops.
///
/// A single-element vector is shared by all `n` subchannels; otherwise the
/// vectors carry one variance per subchannel.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStats<T> {
    pub sigma_g2: Vec<T>,
    pub sigma_h2: Vec<T>,
    pub n: usize,
}

impl<T: Scalar> ChannelStats<T> {
    pub fn shared(n: usize, sigma_g2: T, sigma_h2: T) -> Result<Self> {
        Self::new(vec![sigma_g2], vec![sigma_h2], n)
    }

    pub fn per_link(sigma_g2: Vec<T>, sigma_h2: Vec<T>) -> Result<Self> {
        let n = sigma_g2.len();
        Self::new(sigma_g2, sigma_h2, n)
    }

    fn new(sigma_g2: Vec<T>, sigma_h2: Vec<T>, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n", "need at least one subchannel"));
        }
        for (field, v) in [("sigma_g2", &sigma_g2), ("sigma_h2", &sigma_h2)] {
            if v.len() != 1 && v.len() != n {
                return Err(Error::invalid(
                    field,
                    format!("expected 1 or {n} variances, got {}", v.len()),
                ));
            }
            if let Some(bad) = v.iter().find(|s| !(s.is_finite() && **s > T::zero())) {
                return Err(Error::invalid(
                    field,
                    format!("variance must be finite and > 0, got {bad}"),
                ));
            }
        }
        Ok(Self {
            sigma_g2,
            sigma_h2,
            n,
        })
    }

    pub fn sigma_g2_at(&self, i: usize) -> T {
        if self.sigma_g2.len() == 1 {
            self.sigma_g2[0]
        } else {
            self.sigma_g2[i]
        }
    }

    pub fn sigma_h2_at(&self, i: usize) -> T {
        if self.sigma_h2.len() == 1 {
            self.sigma_h2[0]
        } else {
            self.sigma_h2[i]
        }
    }
}

/// One channel draw together with the two power budgets.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkRealization<T> {
    pub channels: Vec<Subchannel<T>>,
    pub p_s: T,
    pub p_r: T,
}

impl<T: Scalar> NetworkRealization<T> {
    pub fn new(channels: Vec<Subchannel<T>>, p_s: T, p_r: T) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::invalid("channels", "need at least one subchannel"));
        }
        for (field, p) in [("p_s", p_s), ("p_r", p_r)] {
            if !(p.is_finite() && p > T::zero()) {
                return Err(Error::invalid(
                    field,
                    format!("power budget must be finite and > 0, got {p}"),
                ));
            }
        }
        Ok(Self { channels, p_s, p_r })
    }

    /// Builds a realization from parallel gain lists.
    pub fn from_gains(g2: &[T], h2: &[T], p_s: T, p_r: T) -> Result<Self> {
        if g2.len() != h2.len() {
            return Err(Error::invalid(
                "h2",
                format!("length {} differs from g2 length {}", h2.len(), g2.len()),
            ));
        }
        let channels = g2
            .iter()
            .zip(h2)
            .map(|(&g, &h)| Subchannel::new(g, h))
            .collect::<Result<Vec<_>>>()?;
        Self::new(channels, p_s, p_r)
    }

    pub fn n(&self) -> usize {
        self.channels.len()
    }

    /// Relay-to-source budget ratio `P_R / P_S`.
    pub fn tau(&self) -> T {
        self.p_r / self.p_s
    }

    pub fn g2s(&self) -> Vec<T> {
        self.channels.iter().map(|c| c.g2).collect()
    }

    pub fn h2s(&self) -> Vec<T> {
        self.channels.iter().map(|c| c.h2).collect()
    }

    pub fn with_budgets(&self, p_s: T, p_r: T) -> Result<Self> {
        Self::new(self.channels.clone(), p_s, p_r)
    }
}

/// Draws one Rayleigh-fading realization.
///
/// Each squared gain is exponential with mean equal to its hop variance (the
/// squared magnitude of a zero-mean circular complex Gaussian). Draws are
/// taken per subchannel in the order `g2, h2` from a ChaCha8 stream keyed by
/// `seed`, so a seed fully determines the realization.
pub fn sample_network<T: Scalar>(
    stats: &ChannelStats<T>,
    p_s: T,
    p_r: T,
    seed: u64,
) -> Result<NetworkRealization<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let channels = (0..stats.n)
        .map(|i| {
            let g2 = stats.sigma_g2_at(i) * T::lit(unit_exponential(&mut rng));
            let h2 = stats.sigma_h2_at(i) * T::lit(unit_exponential(&mut rng));
            Subchannel { g2, h2 }
        })
        .collect();
    NetworkRealization::new(channels, p_s, p_r)
}

/// Inverse-CDF draw from Exp(1). `1 - u` lies in `(0, 1]`, so the result is finite.
fn unit_exponential<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.gen();
    -(1.0 - u).ln()
}

/// Pairs the i-th strongest source-relay gain with the i-th strongest
/// relay-destination gain.
///
/// Both lists are sorted independently in decreasing order and zipped back
/// together. The sort is stable, so equal gains keep their original order.
pub fn sort_for_asf<T: Scalar>(net: &NetworkRealization<T>) -> NetworkRealization<T> {
    let mut g2 = net.g2s();
    let mut h2 = net.h2s();
    let desc = |a: &T, b: &T| b.partial_cmp(a).expect("gains are finite");
    g2.sort_by(desc);
    h2.sort_by(desc);
    NetworkRealization {
        channels: g2
            .into_iter()
            .zip(h2)
            .map(|(g2, h2)| Subchannel { g2, h2 })
            .collect(),
        p_s: net.p_s,
        p_r: net.p_r,
    }
}
