//! The survivor-count law `q_n`, its moments, and samplers of the memory-two
//! Markov chain `X_n = B_n (1 + X_{n-1}) + (1 - B_n) X_{n-2}`,
//! `B_n ~ Bernoulli(1/n)`.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, Zero};
use rand::Rng;
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::rational::{self, Rational};
use crate::rng;

/// Default largest `n` for exact moments.
pub const EXACT_MOMENT_MAX_N: usize = 5000;

/// Exact law of a survivor count: `k → P(k)`, zero masses omitted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurvivorDistribution {
    pub n: usize,
    pub mass: BTreeMap<usize, Rational>,
}

impl Serialize for SurvivorDistribution {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        struct Mass<'a>(&'a BTreeMap<usize, Rational>);
        impl Serialize for Mass<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                let mut m = s.serialize_map(Some(self.0.len()))?;
                for (k, v) in self.0 {
                    m.serialize_entry(&k.to_string(), &rational::format(v))?;
                }
                m.end()
            }
        }
        let mut m = s.serialize_map(Some(2))?;
        m.serialize_entry("n", &self.n)?;
        m.serialize_entry("mass", &Mass(&self.mass))?;
        m.end()
    }
}

impl SurvivorDistribution {
    /// Normalizes integer counts into probabilities.
    pub fn from_counts(n: usize, counts: &BTreeMap<usize, u64>) -> Result<Self> {
        let total: u64 = counts.values().sum();
        if total == 0 {
            return Err(Error::EmptySample);
        }
        let total = BigInt::from(total);
        let mass = counts
            .iter()
            .filter(|(_, &c)| c > 0)
            .map(|(&k, &c)| (k, Rational::new(BigInt::from(c), total.clone())))
            .collect();
        Ok(SurvivorDistribution { n, mass })
    }

    pub fn prob(&self, k: usize) -> Rational {
        self.mass.get(&k).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn total(&self) -> Rational {
        self.mass.values().sum()
    }

    pub fn mean(&self) -> Rational {
        self.mass.iter().map(|(&k, p)| p * rational::int(k as i64)).sum()
    }

    pub fn variance(&self) -> Rational {
        let m = self.mean();
        let second: Rational = self
            .mass
            .iter()
            .map(|(&k, p)| p * rational::int((k * k) as i64))
            .sum();
        second - &m * &m
    }

    pub fn total_variation(&self, other: &SurvivorDistribution) -> Rational {
        let keys: std::collections::BTreeSet<usize> = self.mass.keys().chain(other.mass.keys()).copied().collect();
        let sum: Rational = keys.iter().map(|&k| (self.prob(k) - other.prob(k)).abs()).sum();
        sum / rational::int(2)
    }
}

/// `N! · q_N(k)` for `k = 0..=N`, from
/// `c_N(k) = c_{N-1}(k-1) + (N-1)^2 c_{N-2}(k)`.
pub fn q_numerators(n: usize) -> Vec<BigUint> {
    let mut older = vec![BigUint::one()];
    if n == 0 {
        return older;
    }
    let mut old = vec![BigUint::zero(), BigUint::one()];
    for big_n in 2..=n {
        let w = BigUint::from(((big_n - 1) * (big_n - 1)) as u64);
        let mut next = vec![BigUint::zero(); big_n + 1];
        for (k, c) in old.iter().enumerate() {
            next[k + 1] += c;
        }
        for (k, c) in older.iter().enumerate() {
            if !c.is_zero() {
                next[k] += c * &w;
            }
        }
        older = std::mem::replace(&mut old, next);
    }
    old
}

pub fn q_exact(n: usize) -> SurvivorDistribution {
    let fact: BigUint = (1..=n as u64).product();
    let fact = BigInt::from(fact);
    let mass = q_numerators(n)
        .into_iter()
        .enumerate()
        .filter(|(_, c)| !c.is_zero())
        .map(|(k, c)| (k, Rational::new(BigInt::from(c), fact.clone())))
        .collect();
    SurvivorDistribution { n, mass }
}

/// `q_{2m}(0) = ∏_{i=1}^{m} (1 − 1/(2i))`.
pub fn product_formula_q0(m: usize) -> Rational {
    (1..=m as i64).map(|i| rational::ratio(2 * i - 1, 2 * i)).product()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentMode {
    Exact,
    Floating,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    /// Exact values as `"p/q"` text when computed exactly.
    pub mean_exact: Option<String>,
    pub variance_exact: Option<String>,
    pub floating: bool,
}

/// Raw moments `E[X_n], E[X_n^2], E[X_n^3]` in double precision.
pub fn raw_moments_f64(n: usize) -> [f64; 3] {
    let mut older = [0.0; 3];
    if n == 0 {
        return older;
    }
    let mut old = [1.0; 3];
    for m in 2..=n {
        let p = 1.0 / m as f64;
        let [a1, a2, a3] = old;
        // E(1+X)^k expanded
        let up = [1.0 + a1, 1.0 + 2.0 * a1 + a2, 1.0 + 3.0 * a1 + 3.0 * a2 + a3];
        let next = [
            p * up[0] + (1.0 - p) * older[0],
            p * up[1] + (1.0 - p) * older[1],
            p * up[2] + (1.0 - p) * older[2],
        ];
        older = old;
        old = next;
    }
    old
}

/// `(E[X_n], E[X_n^2])` exactly.
pub fn raw_moments_exact(n: usize) -> (Rational, Rational) {
    let mut older = (Rational::zero(), Rational::zero());
    if n == 0 {
        return older;
    }
    let one = Rational::one();
    let mut old = (one.clone(), one.clone());
    for m in 2..=n {
        let p = rational::ratio(1, m as i64);
        let q = &one - &p;
        let up1 = &one + &old.0;
        let up2 = &one + rational::int(2) * &old.0 + &old.1;
        let next = (&p * up1 + &q * &older.0, &p * up2 + &q * &older.1);
        older = std::mem::replace(&mut old, next);
    }
    old
}

pub fn q_moments(n: usize, mode: MomentMode) -> Result<Moments> {
    q_moments_bounded(n, mode, EXACT_MOMENT_MAX_N)
}

pub fn q_moments_bounded(n: usize, mode: MomentMode, exact_max_n: usize) -> Result<Moments> {
    match mode {
        MomentMode::Exact => {
            if n > exact_max_n {
                return Err(Error::SizeLimit { n, max: exact_max_n });
            }
            let (m1, m2) = raw_moments_exact(n);
            let var = &m2 - &m1 * &m1;
            Ok(Moments {
                n,
                mean: rational::to_f64(&m1),
                variance: rational::to_f64(&var),
                mean_exact: Some(rational::format(&m1)),
                variance_exact: Some(rational::format(&var)),
                floating: false,
            })
        }
        MomentMode::Floating => {
            let [m1, m2, _] = raw_moments_f64(n);
            Ok(Moments {
                n,
                mean: m1,
                variance: m2 - m1 * m1,
                mean_exact: None,
                variance_exact: None,
                floating: true,
            })
        }
    }
}

/// Skewness of `q_n` from the third-moment recurrence.
pub fn q_skewness(n: usize) -> f64 {
    let [m1, m2, m3] = raw_moments_f64(n);
    let var = m2 - m1 * m1;
    let mu3 = m3 - 3.0 * m1 * m2 + 2.0 * m1 * m1 * m1;
    mu3 / var.powf(1.5)
}

/// Realizes the chain sequentially with fresh `B_m` for `m = 1..=n`.
pub fn sample_markov(n: usize, rng: &mut impl Rng) -> usize {
    let (mut older, mut old) = (0usize, 0usize);
    for m in 1..=n {
        let next = if rng::bernoulli_inverse(rng, m as u64) {
            1 + old
        } else {
            older
        };
        older = old;
        old = next;
    }
    if n == 0 {
        0
    } else {
        old
    }
}

/// Same law, walking the path from `n` down to `0` in the two-step tree and
/// jumping over runs of black (`m → m − 2`) edges with one uniform draw.
///
/// From node `m` the chance that the next `r` edges are all black is
/// `S(r) = ∏ (1 − 1/(m − 2i))`, `i < r`; the run length is the largest `r`
/// with `U ≤ S(r)`.
pub fn sample_two_step_fast(n: usize, rng: &mut impl Rng) -> usize {
    let mut m = n;
    let mut red = 0;
    while m > 0 {
        let u = rng::uniform_f64(rng);
        let log_u = if u > 0.0 { u.ln() } else { f64::NEG_INFINITY };
        let max_run = m / 2;
        let log_s = |r: usize| log_black_run(m, r);
        // largest r in [0, max_run] with log S(r) ≥ log U
        let (mut lo, mut hi) = (0usize, max_run);
        while lo < hi {
            let mid = lo + (hi - lo).div_ceil(2);
            if log_s(mid) >= log_u {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        m -= 2 * lo;
        if m > 0 {
            red += 1;
            m -= 1;
        }
    }
    red
}

/// `ln S(r)` for runs starting at node `m` (`r ≤ ⌊m/2⌋`; odd runs never
/// pass node 1, where the edge is red almost surely).
fn log_black_run(m: usize, r: usize) -> f64 {
    if r == 0 {
        return 0.0;
    }
    let a = (m / 2) as f64;
    let r = r as f64;
    if m % 2 == 0 {
        // ∏_{j=a-r+1}^{a} (j − 1/2)/j
        (ln_gamma(a + 0.5) - ln_gamma(a - r + 0.5)) - (ln_gamma(a + 1.0) - ln_gamma(a - r + 1.0))
    } else {
        // ∏_{j=a-r+1}^{a} j/(j + 1/2); the factor j = 0 is zero
        if a - r + 1.0 <= 0.0 {
            return f64::NEG_INFINITY;
        }
        (ln_gamma(a + 1.0) - ln_gamma(a - r + 1.0)) - (ln_gamma(a + 1.5) - ln_gamma(a - r + 1.5))
    }
}

/// Exact law of the red-edge count from `n` to `0`, by pushing path weights
/// down the tree: node `j` sends weight `1/j` along its red edge and
/// `1 − 1/j` along its black edge.
pub fn two_step_law(n: usize) -> SurvivorDistribution {
    // w[j][c] holds the path weight times n!/j!, an integer
    let mut w: Vec<BTreeMap<usize, BigUint>> = vec![BTreeMap::new(); n + 1];
    w[n].insert(0, BigUint::one());
    for j in (1..=n).rev() {
        let here = std::mem::take(&mut w[j]);
        for (c, weight) in here {
            *w[j - 1].entry(c + 1).or_default() += &weight;
            if j >= 2 {
                *w[j - 2].entry(c).or_default() += &weight * BigUint::from(((j - 1) * (j - 1)) as u64);
            }
        }
    }
    let fact = BigInt::from((1..=n as u64).product::<BigUint>());
    let mass = std::mem::take(&mut w[0])
        .into_iter()
        .filter(|(_, v)| !v.is_zero())
        .map(|(c, v)| (c, Rational::new(BigInt::from(v), fact.clone())))
        .collect();
    SurvivorDistribution { n, mass }
}
