//! Exhaustive counts over configuration spaces: the FF model over
//! `S_n × S_{n-1}` and the constrained Left/Right models over
//! `S_{n-2} × S_{n-1}`.
//!
//! Work is split into one chunk per speed permutation (ranked in the
//! factorial number system); chunk tallies are summed in rank order, so the
//! result never depends on the number of worker threads.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};
use rayon::prelude::*;
use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::engine::{resolve, Parameter, PreparedParameter, Shot, ShotSequence};
use crate::error::{Error, Result};
use crate::law::SurvivorDistribution;
use crate::perm;
use crate::rational::{self, Rational};
use crate::scheme::GenericParameter;

pub const FF_MAX_N: usize = 7;
pub const CONSTRAINED_MAX_N: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTable {
    pub counts: BTreeMap<usize, u64>,
    pub total: u64,
    pub chunks: u64,
}

impl Serialize for CountTable {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        struct Counts<'a>(&'a BTreeMap<usize, u64>);
        impl Serialize for Counts<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                let mut m = s.serialize_map(Some(self.0.len()))?;
                for (k, v) in self.0 {
                    m.serialize_entry(&k.to_string(), v)?;
                }
                m.end()
            }
        }
        let mut m = s.serialize_map(Some(3))?;
        m.serialize_entry("counts", &Counts(&self.counts))?;
        m.serialize_entry("total", &self.total)?;
        m.serialize_entry("chunks", &self.chunks)?;
        m.end()
    }
}

impl CountTable {
    fn from_tally(tally: &[u64], chunks: u64) -> Self {
        let counts: BTreeMap<usize, u64> = tally.iter().enumerate().filter(|(_, &c)| c > 0).map(|(k, &c)| (k, c)).collect();
        let total = tally.iter().sum();
        CountTable { counts, total, chunks }
    }

    pub fn count(&self, k: usize) -> u64 {
        self.counts.get(&k).copied().unwrap_or(0)
    }

    pub fn to_distribution(&self, n: usize) -> Result<SurvivorDistribution> {
        SurvivorDistribution::from_counts(n, &self.counts)
    }
}

/// FF enumeration result: survivor-count table plus, per shot position, the
/// number of configurations in which that bullet survives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FfEnumeration {
    pub table: CountTable,
    pub survival_by_position: Vec<u64>,
}

fn check_size(n: usize, max_n: usize) -> Result<()> {
    if n > max_n {
        Err(Error::SizeLimit { n, max: max_n })
    } else {
        Ok(())
    }
}

pub fn enumerate_ff(p: &GenericParameter) -> Result<FfEnumeration> {
    enumerate_ff_bounded(p, FF_MAX_N)
}

pub fn enumerate_ff_bounded(p: &GenericParameter, max_n: usize) -> Result<FfEnumeration> {
    let n = p.n();
    check_size(n, max_n)?;
    let prepared = PreparedParameter::new(p);
    let chunks = perm::factorial(n);
    let per_chunk: Vec<Result<(Vec<u64>, Vec<u64>)>> = (0..chunks)
        .into_par_iter()
        .map(|rank| {
            let sigma = perm::unrank(rank, n);
            let mut tally = vec![0u64; n + 1];
            let mut by_pos = vec![0u64; n];
            let mut tau: Vec<usize> = (0..n.saturating_sub(1)).collect();
            loop {
                let partners = prepared.partners(&sigma, &tau)?;
                let mut k = 0;
                for (i, _) in partners.iter().enumerate().filter(|(_, q)| q.is_none()) {
                    by_pos[i] += 1;
                    k += 1;
                }
                tally[k] += 1;
                if !perm::next_permutation(&mut tau) {
                    break;
                }
            }
            Ok((tally, by_pos))
        })
        .collect();
    let mut tally = vec![0u64; n + 1];
    let mut by_pos = vec![0u64; n];
    for chunk in per_chunk {
        let (t, b) = chunk?;
        tally.iter_mut().zip(t).for_each(|(x, y)| *x += y);
        by_pos.iter_mut().zip(b).for_each(|(x, y)| *x += y);
    }
    Ok(FfEnumeration {
        table: CountTable::from_tally(&tally, chunks),
        survival_by_position: by_pos,
    })
}

/// Admissible numbers of crossings of the special segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrossingSet {
    /// `{0}`
    Zero,
    /// `Z_+`
    All,
    /// `Z_+ \ {0}`
    Positive,
}

impl CrossingSet {
    pub fn contains(self, crossings: usize) -> bool {
        match self {
            CrossingSet::Zero => crossings == 0,
            CrossingSet::All => true,
            CrossingSet::Positive => crossings > 0,
        }
    }

    pub const ALL: [CrossingSet; 3] = [CrossingSet::Zero, CrossingSet::All, CrossingSet::Positive];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// Speeds `(free…, v_min, v_r)`, delays `(free…, Δ*)`, segment height `s`
/// and crossing set `A`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConstrainedParameter {
    #[serde(with = "rational::text_vec")]
    pub free_speeds: Vec<Rational>,
    #[serde(with = "rational::text")]
    pub v_min: Rational,
    #[serde(with = "rational::text")]
    pub v_r: Rational,
    #[serde(with = "rational::text_vec")]
    pub free_delays: Vec<Rational>,
    #[serde(with = "rational::text")]
    pub delta_star: Rational,
    #[serde(with = "rational::text")]
    pub s: Rational,
    pub a: CrossingSet,
}

/// `H = v_min · v_r · Δ* / (v_r − v_min)`, the height where
/// `HL(v_min, 0)` meets `HL(v_r, Δ*)`.
pub fn intersection_height(v_min: &Rational, v_r: &Rational, delta_star: &Rational) -> Result<Rational> {
    if v_min >= v_r {
        return Err(Error::invalid("v_r", "must exceed v_min"));
    }
    Ok(v_min * v_r * delta_star / (v_r - v_min))
}

impl ConstrainedParameter {
    pub fn new(
        free_speeds: Vec<Rational>,
        v_min: Rational,
        v_r: Rational,
        free_delays: Vec<Rational>,
        delta_star: Rational,
        s: Rational,
        a: CrossingSet,
    ) -> Result<Self> {
        if free_speeds.len() != free_delays.len() {
            return Err(Error::DimensionMismatch {
                detail: format!("{} free speeds vs {} free delays", free_speeds.len(), free_delays.len()),
            });
        }
        if v_min.is_negative() {
            return Err(Error::invalid("v_min", "speeds must be non-negative"));
        }
        if free_speeds.iter().chain([&v_r]).any(|v| v <= &v_min) {
            return Err(Error::invalid("v_min", "must be the strictly smallest speed"));
        }
        let mut all: Vec<&Rational> = free_speeds.iter().chain([&v_r]).collect();
        all.sort();
        if let Some(w) = all.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::EqualSpeeds {
                speed: rational::format(w[0]),
            });
        }
        if free_delays.iter().chain([&delta_star]).any(|d| !d.is_positive()) {
            return Err(Error::invalid("delays", "delays must be strictly positive"));
        }
        let h = intersection_height(&v_min, &v_r, &delta_star)?;
        if s.is_negative() || s > h {
            return Err(Error::invalid("s", format!("must lie in [0, {}]", rational::format(&h))));
        }
        Ok(ConstrainedParameter {
            free_speeds,
            v_min,
            v_r,
            free_delays,
            delta_star,
            s,
            a,
        })
    }

    /// Reads a plain parameter as a constrained one: the smallest speed is
    /// `v_min`, the median speed (index `n / 2`) is `v_r`, the last delay is
    /// `Δ*`. Bullets faster than `v_r` are the ones that can cross `S`.
    pub fn from_parameter(p: &Parameter, s: Rational, a: CrossingSet) -> Result<Self> {
        let n = p.n();
        if n < 2 {
            return Err(Error::invalid("speeds", "constrained models need at least two speeds"));
        }
        let v = p.speeds();
        let d = p.delays();
        let r = n / 2;
        let free = v[1..].iter().enumerate().filter(|&(i, _)| i + 1 != r).map(|(_, x)| x.clone()).collect();
        ConstrainedParameter::new(
            free,
            v[0].clone(),
            v[r].clone(),
            d[..n - 2].to_vec(),
            d[n - 2].clone(),
            s,
            a,
        )
    }

    pub fn n(&self) -> usize {
        self.free_speeds.len() + 2
    }

    pub fn intersection_height(&self) -> Rational {
        intersection_height(&self.v_min, &self.v_r, &self.delta_star).expect("validated")
    }

    pub fn with_segment(&self, s: Rational, a: CrossingSet) -> Result<Self> {
        ConstrainedParameter::new(
            self.free_speeds.clone(),
            self.v_min.clone(),
            self.v_r.clone(),
            self.free_delays.clone(),
            self.delta_star.clone(),
            s,
            a,
        )
    }

    /// The underlying sorted parameter (all `n` speeds, all `n − 1` delays).
    pub fn parameter(&self) -> Result<Parameter> {
        let mut delays = self.free_delays.clone();
        delays.push(self.delta_star.clone());
        let speeds = self
            .free_speeds
            .iter()
            .chain([&self.v_min, &self.v_r])
            .cloned()
            .collect();
        Parameter::from_unsorted(speeds, delays)
    }

    fn delays(&self) -> Vec<Rational> {
        let mut d = self.free_delays.clone();
        d.push(self.delta_star.clone());
        d
    }
}

/// The `n − 1` shots of one constrained configuration and the shot index of
/// the distinguished bullet.
pub fn constrained_shots(cp: &ConstrainedParameter, side: Side, sigma: &[usize], tau: &[usize]) -> Result<(ShotSequence, usize, Rational)> {
    let n = cp.n();
    if sigma.len() != n - 2 || tau.len() != n - 1 {
        return Err(Error::DimensionMismatch {
            detail: format!("configuration ({}, {}) for constrained size {n}", sigma.len(), tau.len()),
        });
    }
    let delays = cp.delays();
    let star = n - 2;
    let gap = tau.iter().position(|&t| t == star).expect("tau is a permutation");
    let mut shots = Vec::with_capacity(n - 1);
    let mut distinguished = usize::MAX;
    let mut t_right = Rational::zero();
    let mut time = Rational::zero();
    let mut free = 0;
    for i in 0..n {
        if i > 0 {
            time += &delays[tau[i - 1]];
        }
        if i == gap {
            if side == Side::Left {
                distinguished = shots.len();
                shots.push(Shot::new(time.clone(), cp.v_min.clone()));
            }
        } else if i == gap + 1 {
            t_right = time.clone();
            if side == Side::Right {
                distinguished = shots.len();
                shots.push(Shot::new(time.clone(), cp.v_r.clone()));
            }
        } else {
            shots.push(Shot::new(time.clone(), cp.free_speeds[sigma[free]].clone()));
            free += 1;
        }
    }
    Ok((ShotSequence::new(shots)?, distinguished, t_right))
}

/// Number of non-distinguished true trajectories meeting
/// `S = L(v_r, T_R) ∩ {0 < height ≤ s}`.
pub fn count_crossings(cp: &ConstrainedParameter, side: Side, sigma: &[usize], tau: &[usize]) -> Result<(usize, usize)> {
    let (shots, distinguished, t_right) = constrained_shots(cp, side, sigma, tau)?;
    let d = resolve(&shots)?;
    let mut crossings = 0;
    for (i, b) in d.bullets.iter().enumerate() {
        if i == distinguished {
            continue;
        }
        // crossing time of the bullet's line with L(v_r, T_R)
        let t = (&b.speed * &b.birth - &cp.v_r * &t_right) / (&b.speed - &cp.v_r);
        let h = &cp.v_r * (&t - &t_right);
        if !h.is_positive() || h > cp.s || t < b.birth {
            continue;
        }
        match b.death.finite() {
            Some(death) if &t > death => {}
            Some(death) if &t == death => {
                if side == Side::Right && b.partner == Some(distinguished) {
                    crossings += 1;
                } else {
                    return Err(Error::DegenerateConstraint {
                        detail: format!(
                            "bullet {i} dies on the special segment at height {}",
                            rational::format(&h)
                        ),
                    });
                }
            }
            _ => crossings += 1,
        }
    }
    Ok((crossings, d.survivor_count()))
}

pub fn enumerate_constrained(cp: &ConstrainedParameter, side: Side) -> Result<CountTable> {
    enumerate_constrained_bounded(cp, side, CONSTRAINED_MAX_N)
}

pub fn enumerate_constrained_bounded(cp: &ConstrainedParameter, side: Side, max_n: usize) -> Result<CountTable> {
    let n = cp.n();
    check_size(n, max_n)?;
    GenericParameter::certify(cp.parameter()?)?;
    let chunks = perm::factorial(n - 2);
    let per_chunk: Vec<Result<Vec<u64>>> = (0..chunks)
        .into_par_iter()
        .map(|rank| {
            let sigma = perm::unrank(rank, n - 2);
            let mut tally = vec![0u64; n];
            let mut tau: Vec<usize> = (0..n - 1).collect();
            loop {
                let (crossings, k) = count_crossings(cp, side, &sigma, &tau)?;
                if cp.a.contains(crossings) {
                    tally[k] += 1;
                }
                if !perm::next_permutation(&mut tau) {
                    break;
                }
            }
            Ok(tally)
        })
        .collect();
    let mut tally = vec![0u64; n];
    for chunk in per_chunk {
        tally.iter_mut().zip(chunk?).for_each(|(x, y)| *x += y);
    }
    Ok(CountTable::from_tally(&tally, chunks))
}
