//! Closed-form SNR and capacity expressions of an amplify-and-forward link.
//!
//! Noise has unit power on both hops, so every power here is an SNR scale.
//! Rates are in bits per channel use (base-2 logarithm) and no half-duplex
//! factor is applied.

use crate::channel::{NetworkRealization, Subchannel};
use crate::error::{Error, Result};
use crate::scalar::{log2_1p, Scalar};

/// Transmit powers spent on one subchannel by the source and by the relay.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkPowers<T> {
    pub ps_i: T,
    pub pr_i: T,
}

/// End-to-end SNR of an amplify-and-forward subchannel.
///
/// `ps*pr*g2*h2 / (ps*g2 + pr*h2 + 1)`; zero when either power is zero.
pub fn af_link_snr<T: Scalar>(p: LinkPowers<T>, ch: &Subchannel<T>) -> T {
    let u = p.ps_i * ch.g2;
    let v = p.pr_i * ch.h2;
    if u <= T::zero() || v <= T::zero() {
        return T::zero();
    }
    u * v / (u + v + T::one())
}

pub fn link_capacity<T: Scalar>(rho: T) -> T {
    log2_1p(rho)
}

/// `sqrt(1 + 4*a*h2*(a*g2 + 1))` with `a = alpha * p_s`.
pub fn a_function<T: Scalar>(alpha: T, p_s: T, ch: &Subchannel<T>) -> T {
    let a = alpha * p_s;
    let four = T::lit(4.0);
    (T::one() + four * a * ch.h2 * (a * ch.g2 + T::one())).sqrt()
}

/// Relay fraction that balances a source fraction `alpha` on link `i`.
///
/// The returned `beta` solves `tau*beta*(beta*P_R*h2 + 1) = alpha*(alpha*P_S*g2 + 1)`,
/// i.e. `beta = (A(alpha) - 1) / (2*P_R*h2)`.
pub fn beta_from_alpha<T: Scalar>(alpha: T, net: &NetworkRealization<T>, i: usize) -> Result<T> {
    let ch = &net.channels[i];
    if alpha <= T::zero() {
        return Ok(T::zero());
    }
    if ch.h2 <= T::zero() {
        return Err(Error::DegenerateChannel { link: i });
    }
    Ok(BalancedLink::new(net.p_s, net.p_r, ch).relay_fraction(alpha))
}

/// Sum capacity when every relay fraction is tied to its source fraction
/// through [`beta_from_alpha`].
pub fn sum_capacity_alpha<T: Scalar>(alphas: &[T], net: &NetworkRealization<T>) -> T {
    assert_eq!(alphas.len(), net.n(), "one fraction per subchannel");
    alphas
        .iter()
        .zip(&net.channels)
        .map(|(&alpha, ch)| {
            if alpha <= T::zero() {
                return T::zero();
            }
            let half = T::lit(0.5);
            let u = alpha * net.p_s * ch.g2;
            let a = a_function(alpha, net.p_s, ch);
            log2_1p(u * (a - T::one()) * half / (u + (T::one() + a) * half))
        })
        .sum()
}

/// Analytic gradient of [`sum_capacity_alpha`] with respect to each fraction.
pub fn sum_capacity_alpha_gradient<T: Scalar>(alphas: &[T], net: &NetworkRealization<T>) -> Vec<T> {
    assert_eq!(alphas.len(), net.n(), "one fraction per subchannel");
    alphas
        .iter()
        .zip(&net.channels)
        .map(|(&alpha, ch)| {
            if ch.is_degenerate() {
                T::zero()
            } else {
                BalancedLink::new(net.p_s, net.p_r, ch).d_rate(alpha)
            }
        })
        .collect()
}

/// Gradient of `log2(1 + rho)` with respect to `(P_Si, P_Ri)`.
pub fn link_capacity_gradient<T: Scalar>(p: LinkPowers<T>, ch: &Subchannel<T>) -> [T; 2] {
    let (u, v) = (p.ps_i * ch.g2, p.pr_i * ch.h2);
    let one = T::one();
    let s = (one + u + v).recip();
    [
        ch.g2 * ((one + u).recip() - s) / T::LN_2(),
        ch.h2 * ((one + v).recip() - s) / T::LN_2(),
    ]
}

/// Hessian of `log2(1 + rho)` with respect to `(P_Si, P_Ri)`.
///
/// Writing the rate as `log2(1+u) + log2(1+v) - log2(1+u+v)`, the determinant
/// has the sign of `2*u*v - 1`: the capacity is jointly concave in the two
/// powers only where `u*v >= 1/2`. Below that one direction curves upward.
pub fn link_capacity_hessian<T: Scalar>(p: LinkPowers<T>, ch: &Subchannel<T>) -> [[T; 2]; 2] {
    let (u, v) = (p.ps_i * ch.g2, p.pr_i * ch.h2);
    let one = T::one();
    let s2 = (one + u + v).powi(-2);
    let ln2 = T::LN_2();
    let ss = ch.g2 * ch.g2 * (s2 - (one + u).powi(-2)) / ln2;
    let rr = ch.h2 * ch.h2 * (s2 - (one + v).powi(-2)) / ln2;
    let sr = ch.g2 * ch.h2 * s2 / ln2;
    [[ss, sr], [sr, rr]]
}

/// Rate of link `i` when the relay spends `beta` of its budget and the source
/// side delivers SNR `rho_sr` at the relay.
pub fn relay_side_capacity<T: Scalar>(rho_sr: T, beta: T, p_r: T, h2: T) -> T {
    let v = beta * p_r * h2;
    if v <= T::zero() || rho_sr <= T::zero() {
        return T::zero();
    }
    log2_1p(rho_sr * v / (rho_sr + v + T::one()))
}

/// One subchannel restricted to the source/relay balance curve.
///
/// With `u = alpha*P_S*g2` and `v = beta*P_R*h2`, the balance condition reads
/// `v*(1 + v) = (h2/g2) * u*(1 + u)` and the rate is
/// `log2(1+u) + log2(1+v) - log2(1+u+v)`. All quantities are evaluated without
/// forming `h2/g2`, so a zero `g2` is harmless.
#[derive(Clone, Copy, Debug)]
pub struct BalancedLink<T> {
    pub p_s: T,
    pub p_r: T,
    pub g2: T,
    pub h2: T,
}

/// `u`, `v` and `A` at one point of the balance curve.
#[derive(Clone, Copy, Debug)]
struct CurvePoint<T> {
    u: T,
    v: T,
    a: T,
    root: T,
}

impl<T: Scalar> BalancedLink<T> {
    pub fn new(p_s: T, p_r: T, ch: &Subchannel<T>) -> Self {
        Self {
            p_s,
            p_r,
            g2: ch.g2,
            h2: ch.h2,
        }
    }

    fn point(&self, alpha: T) -> CurvePoint<T> {
        let two = T::lit(2.0);
        let a = alpha * self.p_s;
        let u = a * self.g2;
        let q = T::lit(4.0) * a * self.h2 * (u + T::one());
        let root = (T::one() + q).sqrt();
        // (root - 1)/2 rewritten to avoid cancellation at small q.
        let v = q / (two * (root + T::one()));
        CurvePoint { u, v, a, root }
    }

    pub fn rate(&self, alpha: T) -> T {
        if alpha <= T::zero() {
            return T::zero();
        }
        let p = self.point(alpha);
        log2_1p(p.u) + log2_1p(p.v) - log2_1p(p.u + p.v)
    }

    pub fn relay_fraction(&self, alpha: T) -> T {
        if alpha <= T::zero() {
            return T::zero();
        }
        self.point(alpha).v / (self.p_r * self.h2)
    }

    /// `d v / d alpha` on the balance curve.
    fn dv(&self, p: &CurvePoint<T>) -> T {
        self.p_s * self.h2 * (T::one() + T::lit(2.0) * p.a * self.g2) / p.root
    }

    pub fn d_rate(&self, alpha: T) -> T {
        self.derivatives(alpha).0
    }

    pub fn d_relay_fraction(&self, alpha: T) -> T {
        self.derivatives(alpha).1
    }

    /// `d rate / d alpha` and `d beta / d alpha` from one curve evaluation.
    pub fn derivatives(&self, alpha: T) -> (T, T) {
        let p = self.point(alpha.max(T::zero()));
        let one = T::one();
        let s = one + p.u + p.v;
        let du = self.p_s * self.g2;
        let dv = self.dv(&p);
        let dfu = p.v / ((one + p.u) * s);
        let dfv = p.u / ((one + p.v) * s);
        ((dfu * du + dfv * dv) / T::LN_2(), dv / (self.p_r * self.h2))
    }

    /// Largest source fraction whose balanced relay fraction fits the whole
    /// relay budget, capped at 1.
    pub fn max_alpha(&self) -> T {
        self.source_fraction(T::one()).min(T::one())
    }

    /// Inverse of [`relay_fraction`](Self::relay_fraction).
    pub fn source_fraction(&self, beta: T) -> T {
        // g2*a^2 + a = c with c = x*(1 + x*h2), x = beta*P_R
        let x = beta.max(T::zero()) * self.p_r;
        let c = x * (T::one() + x * self.h2);
        let a = T::lit(2.0) * c / (T::one() + (T::one() + T::lit(4.0) * self.g2 * c).sqrt());
        a / self.p_s
    }
}
