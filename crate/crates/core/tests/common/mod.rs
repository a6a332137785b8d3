#![allow(dead_code)]

//! Reference computations shared by the integration tests. Everything here is
//! derived independently of the library's solver paths.

/// Relay power `x` balancing source power `a` on a link:
/// `x*(x*h2 + 1) = a*(a*g2 + 1)`, positive root.
pub fn balanced_relay_power(a: f64, g2: f64, h2: f64) -> f64 {
    let c = a * (a * g2 + 1.0);
    if c == 0.0 {
        return 0.0;
    }
    2.0 * c / (1.0 + (1.0 + 4.0 * h2 * c).sqrt())
}

/// Inverse of [`balanced_relay_power`]: the source power balancing relay power `x`.
pub fn balanced_source_power(x: f64, g2: f64, h2: f64) -> f64 {
    let c = x * (x * h2 + 1.0);
    if c == 0.0 {
        return 0.0;
    }
    2.0 * c / (1.0 + (1.0 + 4.0 * g2 * c).sqrt())
}

pub fn two_hop_rate(a: f64, x: f64, g2: f64, h2: f64) -> f64 {
    let (u, v) = (a * g2, x * h2);
    (1.0 + u * v / (u + v + 1.0)).log2()
}

pub struct Instance {
    pub g2: Vec<f64>,
    pub h2: Vec<f64>,
    pub p_s: f64,
    pub p_r: f64,
}

impl Instance {
    /// Rate and relay fraction of link `i` at source fraction `alpha`.
    pub fn link(&self, i: usize, alpha: f64) -> (f64, f64) {
        let a = alpha * self.p_s;
        let x = balanced_relay_power(a, self.g2[i], self.h2[i]);
        (two_hop_rate(a, x, self.g2[i], self.h2[i]), x / self.p_r)
    }

    /// Largest source fraction of link `i` that fits both residual budgets.
    fn last_link(&self, i: usize, alpha_left: f64, beta_left: f64) -> f64 {
        if alpha_left <= 0.0 || beta_left <= 0.0 {
            return 0.0;
        }
        let a = balanced_source_power(beta_left * self.p_r, self.g2[i], self.h2[i]);
        alpha_left.min(a / self.p_s)
    }

    /// Best objective over the balanced allocations whose leading fractions lie
    /// on a grid of the given step; the last link takes all it can.
    pub fn grid_optimum(&self, step: f64) -> f64 {
        let n = self.g2.len();
        let last = n - 1;
        let pts = (1.0 / step).round() as usize;
        let table: Vec<Vec<(f64, f64)>> = (0..last)
            .map(|i| (0..=pts).map(|k| self.link(i, k as f64 * step)).collect())
            .collect();
        let finish = |alpha_used: f64, beta_used: f64, rate: f64| {
            let a = self.last_link(last, 1.0 - alpha_used, 1.0 - beta_used);
            rate + self.link(last, a).0
        };
        match n {
            1 => finish(0.0, 0.0, 0.0),
            2 => (0..=pts)
                .filter(|&k| table[0][k].1 <= 1.0)
                .map(|k| finish(k as f64 * step, table[0][k].1, table[0][k].0))
                .fold(f64::MIN, f64::max),
            3 => {
                let mut best = f64::MIN;
                for k1 in 0..=pts {
                    let (r1, b1) = table[0][k1];
                    if b1 > 1.0 {
                        break;
                    }
                    for k2 in 0..=(pts - k1) {
                        let (r2, b2) = table[1][k2];
                        if b1 + b2 > 1.0 {
                            break;
                        }
                        best = best.max(finish((k1 + k2) as f64 * step, b1 + b2, r1 + r2));
                    }
                }
                best
            }
            _ => panic!("grid oracle supports up to three links"),
        }
    }
}

/// Small deterministic generator so test instances do not depend on the
/// library's sampling path.
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn exp(&mut self) -> f64 {
        -(1.0 - self.uniform()).ln()
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }
}
