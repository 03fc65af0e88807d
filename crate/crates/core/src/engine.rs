//! Resolution of a shooting sequence into its true space-time diagram.
//!
//! Bullets leave the origin one after another, so among live bullets the
//! front-to-back order is the shot order. Two live bullets can only be the
//! first to collide if no live bullet sits between them in that order, which
//! lets [`resolve`] keep a linked list of live bullets plus a priority queue
//! of adjacent-pair collision times. [`resolve_naive`] is the plain
//! all-pairs minimum scan and serves as its oracle.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt::Debug;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, ExtendedTime, HalfLine, SpaceTimePoint};
use crate::rational::{self, Rational};

/// Sorted speeds `V_1 < … < V_n` (all `≥ 0`) and `n − 1` positive delays.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawParameter")]
pub struct Parameter {
    #[serde(with = "rational::text_vec")]
    speeds: Vec<Rational>,
    #[serde(with = "rational::text_vec")]
    delays: Vec<Rational>,
}

#[derive(Deserialize)]
struct RawParameter {
    #[serde(with = "rational::text_vec")]
    speeds: Vec<Rational>,
    #[serde(with = "rational::text_vec")]
    delays: Vec<Rational>,
}

impl TryFrom<RawParameter> for Parameter {
    type Error = Error;

    fn try_from(raw: RawParameter) -> Result<Self> {
        Parameter::new(raw.speeds, raw.delays)
    }
}

impl Parameter {
    pub fn new(speeds: Vec<Rational>, delays: Vec<Rational>) -> Result<Self> {
        if speeds.iter().any(|v| v.is_negative()) {
            return Err(Error::invalid("speeds", "speeds must be non-negative"));
        }
        if speeds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("speeds", "speeds must be strictly increasing"));
        }
        if delays.iter().any(|d| !d.is_positive()) {
            return Err(Error::invalid("delays", "delays must be strictly positive"));
        }
        if delays.len() + 1 != speeds.len().max(1) {
            return Err(Error::invalid(
                "delays",
                format!("expected {} delays for {} speeds, got {}", speeds.len().max(1) - 1, speeds.len(), delays.len()),
            ));
        }
        Ok(Parameter { speeds, delays })
    }

    /// Sorts the speeds first; useful for sampled parameters.
    pub fn from_unsorted(mut speeds: Vec<Rational>, delays: Vec<Rational>) -> Result<Self> {
        speeds.sort();
        Parameter::new(speeds, delays)
    }

    pub fn n(&self) -> usize {
        self.speeds.len()
    }

    pub fn speeds(&self) -> &[Rational] {
        &self.speeds
    }

    pub fn delays(&self) -> &[Rational] {
        &self.delays
    }

    /// Multiplies every speed by `speed_factor` and every delay by `delay_factor`.
    pub fn scaled(&self, speed_factor: &Rational, delay_factor: &Rational) -> Result<Parameter> {
        Parameter::new(
            self.speeds.iter().map(|v| v * speed_factor).collect(),
            self.delays.iter().map(|d| d * delay_factor).collect(),
        )
    }
}

/// Assignment of speeds to shot positions (`sigma`) and of delays to
/// inter-shot gaps (`tau`). Both are 0-based permutations.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Configuration {
    pub sigma: Vec<usize>,
    pub tau: Vec<usize>,
}

pub(crate) fn is_permutation(p: &[usize]) -> bool {
    let mut seen = vec![false; p.len()];
    p.iter().all(|&x| x < seen.len() && !std::mem::replace(&mut seen[x], true))
}

impl Configuration {
    pub fn new(sigma: Vec<usize>, tau: Vec<usize>) -> Result<Self> {
        if !is_permutation(&sigma) {
            return Err(Error::invalid("sigma", "not a permutation"));
        }
        if !is_permutation(&tau) {
            return Err(Error::invalid("tau", "not a permutation"));
        }
        Ok(Configuration { sigma, tau })
    }

    pub fn identity(n: usize) -> Self {
        Configuration {
            sigma: (0..n).collect(),
            tau: (0..n.saturating_sub(1)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Shot {
    #[serde(with = "rational::text")]
    pub birth: Rational,
    #[serde(with = "rational::text")]
    pub speed: Rational,
}

impl Shot {
    pub fn new(birth: Rational, speed: Rational) -> Self {
        Shot { birth, speed }
    }

    pub fn half_line(&self) -> HalfLine {
        HalfLine::new(self.speed.clone(), self.birth.clone())
    }
}

/// Bullets in shot order with strictly increasing birth times and pairwise
/// distinct non-negative speeds.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct ShotSequence {
    shots: Vec<Shot>,
}

impl ShotSequence {
    pub fn new(shots: Vec<Shot>) -> Result<Self> {
        if shots.windows(2).any(|w| w[0].birth >= w[1].birth) {
            return Err(Error::invalid("shots", "birth times must be strictly increasing"));
        }
        if shots.iter().any(|s| s.speed.is_negative()) {
            return Err(Error::invalid("shots", "speeds must be non-negative"));
        }
        let mut speeds: Vec<&Rational> = shots.iter().map(|s| &s.speed).collect();
        speeds.sort();
        if let Some(w) = speeds.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::EqualSpeeds {
                speed: rational::format(w[0]),
            });
        }
        Ok(ShotSequence { shots })
    }

    pub fn from_parts(births: Vec<Rational>, speeds: Vec<Rational>) -> Result<Self> {
        if births.len() != speeds.len() {
            return Err(Error::DimensionMismatch {
                detail: format!("{} births vs {} speeds", births.len(), speeds.len()),
            });
        }
        ShotSequence::new(births.into_iter().zip(speeds).map(|(t, v)| Shot::new(t, v)).collect())
    }

    pub(crate) fn new_unchecked(shots: Vec<Shot>) -> Self {
        debug_assert!(ShotSequence::new(shots.clone()).is_ok());
        ShotSequence { shots }
    }

    pub fn shots(&self) -> &[Shot] {
        &self.shots
    }

    pub fn len(&self) -> usize {
        self.shots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shots.is_empty()
    }

    pub fn prefix(&self, len: usize) -> ShotSequence {
        ShotSequence {
            shots: self.shots[..len].to_vec(),
        }
    }
}

/// Birth times are prefix sums of the permuted delays; bullet `j` gets speed
/// `V[sigma[j]]`.
pub fn realize(p: &Parameter, c: &Configuration) -> Result<ShotSequence> {
    if c.sigma.len() != p.n() || c.tau.len() != p.n().saturating_sub(1) {
        return Err(Error::DimensionMismatch {
            detail: format!(
                "configuration ({}, {}) for parameter of size {}",
                c.sigma.len(),
                c.tau.len(),
                p.n()
            ),
        });
    }
    let mut shots = Vec::with_capacity(p.n());
    let mut birth = Rational::zero();
    for (j, &s) in c.sigma.iter().enumerate() {
        if j > 0 {
            birth += &p.delays[c.tau[j - 1]];
        }
        shots.push(Shot::new(birth.clone(), p.speeds[s].clone()));
    }
    Ok(ShotSequence::new_unchecked(shots))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BulletFate {
    #[serde(with = "rational::text")]
    pub birth: Rational,
    #[serde(with = "rational::text")]
    pub speed: Rational,
    #[serde(serialize_with = "serialize_extended")]
    pub death: ExtendedTime,
    pub partner: Option<usize>,
}

fn serialize_extended<S: serde::Serializer>(t: &ExtendedTime, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&t.to_string())
}

/// The resolved space-time diagram. Bullet indices are 0-based shot order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagram {
    pub bullets: Vec<BulletFate>,
    pub survivors: Vec<usize>,
}

impl Diagram {
    pub fn n(&self) -> usize {
        self.bullets.len()
    }

    pub fn survivor_count(&self) -> usize {
        self.survivors.len()
    }

    pub fn death_point(&self, i: usize) -> Option<SpaceTimePoint> {
        let b = &self.bullets[i];
        b.death.finite().map(|t| SpaceTimePoint {
            time: t.clone(),
            position: &b.speed * (t - &b.birth),
        })
    }

    /// Matched pairs `(i, j)` with `i < j`, ordered by `i`.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.bullets
            .iter()
            .enumerate()
            .filter_map(|(i, b)| b.partner.filter(|&j| i < j).map(|j| (i, j)))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Exact integer keys for collision times.
//
// With speeds written over a common denominator (v_i = a_i / Ds) and births
// over another (t_i = b_i / Dt), the crossing time of bullets i < j is
// (a_i b_i − a_j b_j) / (Dt (a_i − a_j)). Keys keep the unreduced fraction
// and compare by cross-multiplication.

trait KeyInt: Clone + Ord + Debug {
    fn from_big(v: &BigInt) -> Option<Self>;
    fn to_big(&self) -> BigInt;
    fn mul(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn add(&self, other: &Self) -> Self;
    fn neg(&self) -> Self;
    fn is_negative(&self) -> bool;
    fn is_zero(&self) -> bool;
}

impl KeyInt for i128 {
    fn from_big(v: &BigInt) -> Option<Self> {
        v.to_i128()
    }
    fn to_big(&self) -> BigInt {
        BigInt::from(*self)
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn neg(&self) -> Self {
        -self
    }
    fn is_negative(&self) -> bool {
        *self < 0
    }
    fn is_zero(&self) -> bool {
        *self == 0
    }
}

impl KeyInt for BigInt {
    fn from_big(v: &BigInt) -> Option<Self> {
        Some(v.clone())
    }
    fn to_big(&self) -> BigInt {
        self.clone()
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn neg(&self) -> Self {
        -self
    }
    fn is_negative(&self) -> bool {
        Signed::is_negative(self)
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
}

/// `num / den` in units of `1 / Dt`, with `den > 0`.
#[derive(Debug, Clone)]
struct Key<I> {
    num: I,
    den: I,
}

impl<I: KeyInt> PartialEq for Key<I> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<I: KeyInt> Eq for Key<I> {}

impl<I: KeyInt> PartialOrd for Key<I> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<I: KeyInt> Ord for Key<I> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.num.mul(&other.den).cmp(&other.num.mul(&self.den))
    }
}

/// Shots rescaled to integers over common denominators.
struct Scaled<I> {
    a: Vec<I>,
    b: Vec<I>,
    ab: Vec<I>,
    time_denom: BigInt,
}

fn lcm_of<'a>(values: impl Iterator<Item = &'a BigInt>) -> BigInt {
    values.fold(BigInt::one(), |acc, d| acc.lcm(d))
}

struct ScaledBig {
    a: Vec<BigInt>,
    b: Vec<BigInt>,
    time_denom: BigInt,
}

impl ScaledBig {
    fn new(shots: &[Shot]) -> Self {
        let ds = lcm_of(shots.iter().map(|s| s.speed.denom()));
        let dt = lcm_of(shots.iter().map(|s| s.birth.denom()));
        let a = shots.iter().map(|s| s.speed.numer() * (&ds / s.speed.denom())).collect();
        let b = shots.iter().map(|s| s.birth.numer() * (&dt / s.birth.denom())).collect();
        ScaledBig { a, b, time_denom: dt }
    }

    /// Narrows to `I` when every cross product stays in range
    /// (|num| ≤ 2AB, den ≤ A, products ≤ 2A²B).
    fn narrow<I: KeyInt>(&self, limit_bits: u64) -> Option<Scaled<I>> {
        let max_a = self.a.iter().map(|x| x.abs()).max().unwrap_or_default();
        let max_b = self.b.iter().map(|x| x.abs()).max().unwrap_or_default();
        let bound = BigInt::from(2) * &max_a * &max_a * (&max_b + 1u32) + 1u32;
        if bound.bits() >= limit_bits {
            return None;
        }
        let conv = |v: &[BigInt]| v.iter().map(I::from_big).collect::<Option<Vec<I>>>();
        let a = conv(&self.a)?;
        let b = conv(&self.b)?;
        let ab = a.iter().zip(&b).map(|(x, y)| x.mul(y)).collect();
        Some(Scaled {
            a,
            b,
            ab,
            time_denom: self.time_denom.clone(),
        })
    }
}

impl<I: KeyInt> Scaled<I> {
    /// Virtual collision key of bullets `i < j`, `None` when infinite.
    fn key(&self, i: usize, j: usize) -> Option<Key<I>> {
        let mut num = self.ab[i].sub(&self.ab[j]);
        let mut den = self.a[i].sub(&self.a[j]);
        if den.is_zero() {
            return None;
        }
        if den.is_negative() {
            num = num.neg();
            den = den.neg();
        }
        // finite iff T ≥ t_j (the later birth)
        if num.cmp(&self.b[j].mul(&den)) == Ordering::Less {
            None
        } else {
            Some(Key { num, den })
        }
    }

    fn to_time(&self, key: &Key<I>) -> Rational {
        Rational::new(key.num.to_big(), key.den.to_big() * &self.time_denom)
    }
}

/// Result of the event loop before conversion to rationals.
struct Outcome<I> {
    partner: Vec<Option<usize>>,
    death: Vec<Option<Key<I>>>,
}

const NONE: usize = usize::MAX;

fn run_queue<I: KeyInt>(sc: &Scaled<I>, n: usize) -> Result<Outcome<I>> {
    let mut prev: Vec<usize> = (0..n).map(|i| if i == 0 { NONE } else { i - 1 }).collect();
    let mut next: Vec<usize> = (0..n).map(|i| if i + 1 == n { NONE } else { i + 1 }).collect();
    let mut alive = vec![true; n];
    let mut partner = vec![None; n];
    let mut death: Vec<Option<Key<I>>> = vec![None; n];

    let mut heap: BinaryHeap<Reverse<(Key<I>, usize, usize)>> = BinaryHeap::with_capacity(n);
    for i in 0..n.saturating_sub(1) {
        if let Some(k) = sc.key(i, i + 1) {
            heap.push(Reverse((k, i, i + 1)));
        }
    }

    let mut batch: Vec<(usize, usize)> = Vec::new();
    let mut touched: Vec<usize> = Vec::new();
    while let Some(Reverse((time, i, j))) = heap.pop() {
        if !(alive[i] && alive[j] && next[i] == j) {
            continue;
        }
        batch.clear();
        batch.push((i, j));
        while let Some(Reverse((k, _, _))) = heap.peek() {
            if *k != time {
                break;
            }
            let Reverse((_, x, y)) = heap.pop().expect("peeked");
            if alive[x] && alive[y] && next[x] == y {
                batch.push((x, y));
            }
        }
        // adjacent pairs sharing a bullet meet at a common point
        if batch.len() > 1 {
            batch.sort_unstable();
            for w in batch.windows(2) {
                if w[0].1 >= w[1].0 {
                    return Err(Error::singular(format!(
                        "bullets {}, {} and {} meet at time {}",
                        w[0].0,
                        w[0].1,
                        w[1].1,
                        rational::format(&sc.to_time(&time))
                    )));
                }
            }
        }
        touched.clear();
        for &(x, y) in &batch {
            alive[x] = false;
            alive[y] = false;
            partner[x] = Some(y);
            partner[y] = Some(x);
            death[x] = Some(time.clone());
            death[y] = Some(time.clone());
            let p = prev[x];
            let q = next[y];
            if p != NONE {
                next[p] = q;
                touched.push(p);
            }
            if q != NONE {
                prev[q] = p;
            }
        }
        touched.sort_unstable();
        touched.dedup();
        for &p in &touched {
            let q = next[p];
            if !alive[p] || q == NONE {
                continue;
            }
            if let Some(k) = sc.key(p, q) {
                if k <= time {
                    return Err(Error::singular(format!(
                        "bullets {p} and {q} meet no later than a collision that separated them"
                    )));
                }
                heap.push(Reverse((k, p, q)));
            }
        }
    }
    Ok(Outcome { partner, death })
}

fn build_diagram<I: KeyInt>(shots: &[Shot], sc: &Scaled<I>, out: Outcome<I>) -> Diagram {
    let bullets = shots
        .iter()
        .zip(out.partner.iter().zip(&out.death))
        .map(|(s, (p, d))| BulletFate {
            birth: s.birth.clone(),
            speed: s.speed.clone(),
            death: match d {
                Some(k) => ExtendedTime::Finite(sc.to_time(k)),
                None => ExtendedTime::Infinity,
            },
            partner: *p,
        })
        .collect();
    let survivors = out
        .partner
        .iter()
        .enumerate()
        .filter(|(_, p)| p.is_none())
        .map(|(i, _)| i)
        .collect();
    Diagram { bullets, survivors }
}

/// Runs `f` on the narrowest exact integer representation of `shots`.
fn with_scaled<T>(
    shots: &[Shot],
    f_small: impl FnOnce(&Scaled<i128>) -> T,
    f_big: impl FnOnce(&Scaled<BigInt>) -> T,
) -> T {
    let big = ScaledBig::new(shots);
    match big.narrow::<i128>(126) {
        Some(sc) => f_small(&sc),
        None => f_big(&big.narrow::<BigInt>(u64::MAX).expect("BigInt never overflows")),
    }
}

/// Event-driven resolution: `O(n log n)` collision events via adjacent pairs.
pub fn resolve(shots: &ShotSequence) -> Result<Diagram> {
    let n = shots.len();
    let s = shots.shots();
    with_scaled(
        s,
        |sc| Ok(build_diagram(s, sc, run_queue(sc, n)?)),
        |sc| Ok(build_diagram(s, sc, run_queue(sc, n)?)),
    )
}

/// Number of survivors; skips building the diagram.
pub fn survivor_count(shots: &ShotSequence) -> Result<usize> {
    let n = shots.len();
    let count = |p: &[Option<usize>]| p.iter().filter(|x| x.is_none()).count();
    with_scaled(
        shots.shots(),
        |sc| run_queue(sc, n).map(|o| count(&o.partner)),
        |sc| run_queue(sc, n).map(|o| count(&o.partner)),
    )
}

/// The literal iterative algorithm: repeatedly remove every live pair whose
/// virtual collision time is the global minimum. `O(n³)`.
pub fn resolve_naive(shots: &ShotSequence) -> Result<Diagram> {
    let s = shots.shots();
    let n = s.len();
    let lines: Vec<HalfLine> = s.iter().map(Shot::half_line).collect();
    let mut live: Vec<usize> = (0..n).collect();
    let mut partner = vec![None; n];
    let mut death = vec![ExtendedTime::Infinity; n];
    loop {
        let mut best = ExtendedTime::Infinity;
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for (x, &i) in live.iter().enumerate() {
            for &j in &live[x + 1..] {
                let t = geometry::virtual_collision_time(&lines[i], &lines[j])?;
                match t.cmp(&best) {
                    Ordering::Less => {
                        best = t;
                        pairs.clear();
                        pairs.push((i, j));
                    }
                    Ordering::Equal if best.is_finite() => pairs.push((i, j)),
                    _ => {}
                }
            }
        }
        let ExtendedTime::Finite(time) = best else { break };
        let mut involved: Vec<usize> = pairs.iter().flat_map(|&(i, j)| [i, j]).collect();
        involved.sort_unstable();
        if involved.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::singular(format!(
                "a bullet belongs to two colliding pairs at time {}",
                rational::format(&time)
            )));
        }
        for &(i, j) in &pairs {
            let position = lines[i].height_at(&time);
            let point = SpaceTimePoint {
                time: time.clone(),
                position,
            };
            if let Some(&k) = live.iter().find(|&&k| k != i && k != j && lines[k].contains(&point)) {
                return Err(Error::singular(format!(
                    "bullets {i}, {j} and {k} are concurrent at time {}",
                    rational::format(&time)
                )));
            }
            partner[i] = Some(j);
            partner[j] = Some(i);
            death[i] = ExtendedTime::Finite(time.clone());
            death[j] = ExtendedTime::Finite(time.clone());
        }
        live.retain(|&k| partner[k].is_none());
    }
    let bullets = s
        .iter()
        .zip(partner.iter().zip(death))
        .map(|(shot, (p, d))| BulletFate {
            birth: shot.birth.clone(),
            speed: shot.speed.clone(),
            death: d,
            partner: *p,
        })
        .collect();
    let survivors = (0..n).filter(|&i| partner[i].is_none()).collect();
    Ok(Diagram { bullets, survivors })
}

/// Survivor counts `|S_1|, …, |S_n|` of the prefixes of a shooting stream.
/// Each prefix is resolved from scratch.
pub fn survivor_trajectory(speeds: &[Rational], delays: &[Rational], n: usize) -> Result<Vec<usize>> {
    if speeds.len() < n || delays.len() + 1 < n {
        return Err(Error::DimensionMismatch {
            detail: format!("{} speeds / {} delays for {n} bullets", speeds.len(), delays.len()),
        });
    }
    let mut shots = Vec::with_capacity(n);
    let mut birth = Rational::zero();
    for j in 0..n {
        if j > 0 {
            birth += &delays[j - 1];
        }
        shots.push(Shot::new(birth.clone(), speeds[j].clone()));
    }
    let seq = ShotSequence::new(shots)?;
    let counts = |partners: Vec<Option<usize>>| partners.iter().filter(|p| p.is_none()).count();
    with_scaled(
        seq.shots(),
        |sc| (1..=n).map(|j| run_queue(sc, j).map(|o| counts(o.partner))).collect(),
        |sc| (1..=n).map(|j| run_queue(sc, j).map(|o| counts(o.partner))).collect(),
    )
}

/// A parameter rescaled once to integers so that many configurations can be
/// resolved without rational arithmetic.
#[derive(Debug, Clone)]
pub struct PreparedParameter {
    n: usize,
    small: Option<(Vec<i128>, Vec<i128>)>,
    big: (Vec<BigInt>, Vec<BigInt>),
    time_denom: BigInt,
}

impl PreparedParameter {
    pub fn new(p: &Parameter) -> Self {
        let ds = lcm_of(p.speeds().iter().map(|v| v.denom()));
        let dt = lcm_of(p.delays().iter().map(|d| d.denom()));
        let a: Vec<BigInt> = p.speeds().iter().map(|v| v.numer() * (&ds / v.denom())).collect();
        let d: Vec<BigInt> = p.delays().iter().map(|x| x.numer() * (&dt / x.denom())).collect();
        let max_a = a.iter().max().cloned().unwrap_or_default();
        let sum_d: BigInt = d.iter().sum();
        let bound = BigInt::from(2) * &max_a * &max_a * (sum_d + 1u32) + 1u32;
        let small = if bound.bits() < 126 {
            let conv = |v: &[BigInt]| v.iter().map(|x| x.to_i128()).collect::<Option<Vec<i128>>>();
            conv(&a).zip(conv(&d))
        } else {
            None
        };
        PreparedParameter {
            n: p.n(),
            small,
            big: (a, d),
            time_denom: dt,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn scaled<I: KeyInt>(&self, a: &[I], d: &[I], sigma: &[usize], tau: &[usize], zero: I) -> Scaled<I> {
        let av: Vec<I> = sigma.iter().map(|&s| a[s].clone()).collect();
        let mut bv = Vec::with_capacity(sigma.len());
        let mut t = zero;
        for j in 0..sigma.len() {
            if j > 0 {
                t = t.add(&d[tau[j - 1]]);
            }
            bv.push(t.clone());
        }
        let ab = av.iter().zip(&bv).map(|(x, y)| x.mul(y)).collect();
        Scaled {
            a: av,
            b: bv,
            ab,
            time_denom: self.time_denom.clone(),
        }
    }

    /// Collision partner of every bullet (shot order) in configuration
    /// `(sigma, tau)`, which must have the right dimensions.
    pub fn partners(&self, sigma: &[usize], tau: &[usize]) -> Result<Vec<Option<usize>>> {
        debug_assert!(sigma.len() == self.n && tau.len() + 1 == self.n.max(1));
        match &self.small {
            Some((a, d)) => run_queue(&self.scaled(a, d, sigma, tau, 0i128), self.n).map(|o| o.partner),
            None => {
                let (a, d) = &self.big;
                run_queue(&self.scaled(a, d, sigma, tau, BigInt::zero()), self.n).map(|o| o.partner)
            }
        }
    }

    pub fn survivor_count(&self, sigma: &[usize], tau: &[usize]) -> Result<usize> {
        Ok(self.partners(sigma, tau)?.iter().filter(|p| p.is_none()).count())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn seq(pairs: &[(Rational, Rational)]) -> ShotSequence {
        ShotSequence::new(pairs.iter().map(|(t, v)| Shot::new(t.clone(), v.clone())).collect()).unwrap()
    }

    #[test]
    fn single_bullet_survives() {
        let d = resolve(&seq(&[(int(0), int(5))])).unwrap();
        assert_eq!(d.survivors, vec![0]);
        assert_eq!(d.bullets[0].death, ExtendedTime::Infinity);
        assert_eq!(d.bullets[0].partner, None);
    }

    #[test]
    fn faster_second_bullet_catches_the_first() {
        let d = resolve(&seq(&[(int(0), int(1)), (int(1), int(2))])).unwrap();
        assert!(d.survivors.is_empty());
        assert_eq!(d.bullets[0].partner, Some(1));
        assert_eq!(d.bullets[1].partner, Some(0));
        assert_eq!(d.bullets[0].death, ExtendedTime::Finite(int(2)));
        assert_eq!(d.death_point(1).unwrap().position, int(2));
    }

    #[test]
    fn decreasing_speeds_never_collide() {
        let d = resolve(&seq(&[(int(0), int(3)), (int(1), int(2)), (int(2), int(1))])).unwrap();
        assert_eq!(d.survivors, vec![0, 1, 2]);
    }

    #[test]
    fn zero_speed_bullet_is_hit_in_the_barrel() {
        let d = resolve(&seq(&[(int(0), int(0)), (int(1), int(5))])).unwrap();
        assert!(d.survivors.is_empty());
        let p = d.death_point(0).unwrap();
        assert_eq!((p.time, p.position), (int(1), int(0)));
    }

    #[test]
    fn triple_collision_is_singular() {
        // lines 1@0, 2@1 and 3@4/3 all pass through (2, 2)
        let s = seq(&[(int(0), int(1)), (int(1), int(2)), (ratio(4, 3), int(3))]);
        assert!(matches!(resolve(&s), Err(Error::SingularParameter { .. })));
        assert!(matches!(resolve_naive(&s), Err(Error::SingularParameter { .. })));
    }

    #[test]
    fn simultaneous_disjoint_collisions_are_allowed() {
        // two independent pairs far apart in time order but equal collision times
        // pair A: (0, 1) & (1, 2) meet at t = 2, y = 2
        // pair B: (3/2, 4) & (7/4, 8) meet at t = 2, y = 2 ... would coincide;
        // use pair B with y = 1: (3/2, 2) & (7/4, 4) → t = 2, y = 1
        let s = seq(&[
            (int(0), int(1)),
            (int(1), int(2)),
            (ratio(3, 2), int(2) + ratio(1, 1000)),
            (ratio(7, 4), int(4)),
        ]);
        let fast = resolve(&s).unwrap();
        let slow = resolve_naive(&s).unwrap();
        assert_eq!(fast, slow);
    }

    #[test]
    fn realize_examples() {
        let p = Parameter::new(vec![int(1), int(2)], vec![int(1)]).unwrap();
        let s = realize(&p, &Configuration::identity(2)).unwrap();
        assert_eq!(s, seq(&[(int(0), int(1)), (int(1), int(2))]));

        let p = Parameter::new(vec![int(1), int(2), int(3)], vec![int(1), int(2)]).unwrap();
        let c = Configuration::new(vec![2, 0, 1], vec![1, 0]).unwrap();
        let s = realize(&p, &c).unwrap();
        assert_eq!(s, seq(&[(int(0), int(3)), (int(2), int(1)), (int(3), int(2))]));

        let rev = realize(&p, &Configuration::new(vec![0, 1, 2], vec![1, 0]).unwrap()).unwrap();
        let id = realize(&p, &Configuration::identity(3)).unwrap();
        let births = |s: &ShotSequence| s.shots().iter().map(|x| x.birth.clone()).collect::<Vec<_>>();
        assert_eq!(births(&rev), vec![int(0), int(2), int(3)]);
        assert_eq!(births(&id), vec![int(0), int(1), int(3)]);
    }

    #[test]
    fn realize_rejects_wrong_dimensions() {
        let p = Parameter::new(vec![int(1), int(2)], vec![int(1)]).unwrap();
        let err = realize(&p, &Configuration::identity(3)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn parameter_validation_names_the_field() {
        let e = Parameter::new(vec![int(2), int(1)], vec![int(1)]).unwrap_err();
        assert!(matches!(e, Error::InvalidInput { ref field, .. } if field == "speeds"));
        let e = Parameter::new(vec![int(1), int(2)], vec![int(0)]).unwrap_err();
        assert!(matches!(e, Error::InvalidInput { ref field, .. } if field == "delays"));
        let e = Parameter::new(vec![int(-1), int(2)], vec![int(1)]).unwrap_err();
        assert!(matches!(e, Error::InvalidInput { ref field, .. } if field == "speeds"));
        let e = Parameter::new(vec![int(1), int(2)], vec![]).unwrap_err();
        assert!(matches!(e, Error::InvalidInput { ref field, .. } if field == "delays"));
    }

    #[test]
    fn parameter_json_schema() {
        let p: Parameter = serde_json::from_str(r#"{"speeds": ["1/3","1/2","2"], "delays": ["1","1"]}"#).unwrap();
        assert_eq!(p.speeds()[0], ratio(1, 3));
        let back = serde_json::to_string(&p).unwrap();
        assert_eq!(back, r#"{"speeds":["1/3","1/2","2"],"delays":["1","1"]}"#);
        let err = serde_json::from_str::<Parameter>(r#"{"speeds": ["1","1/2"], "delays": ["1"]}"#).unwrap_err();
        assert!(err.to_string().contains("speeds"), "{err}");
    }

    #[test]
    fn trajectory_examples() {
        let speeds = vec![int(3), int(2), int(1)];
        let delays = vec![int(1), int(5)];
        assert_eq!(survivor_trajectory(&speeds, &delays, 3).unwrap(), vec![1, 2, 3]);
        let speeds = vec![int(1), int(2), int(3), ratio(1, 2)];
        let delays = vec![int(1), int(1), int(1)];
        let traj = survivor_trajectory(&speeds, &delays, 4).unwrap();
        assert_eq!(traj[0], 1);
        for w in traj.windows(2) {
            assert_eq!((w[1] as i64 - w[0] as i64).abs(), 1);
        }
    }

    /// Dyadic draws like the samplers use (exact values of doubles).
    fn random_shots(rng: &mut impl Rng, n: usize, dyadic: bool) -> ShotSequence {
        loop {
            let mut births = Vec::with_capacity(n);
            let mut t = Rational::zero();
            for j in 0..n {
                if j > 0 {
                    t += if dyadic {
                        Rational::new(BigInt::from(rng.gen_range(1u64..1 << 20)), BigInt::from(1u64 << 18))
                    } else {
                        ratio(rng.gen_range(1..50), rng.gen_range(1..13))
                    };
                }
                births.push(t.clone());
            }
            let speeds: Vec<_> = (0..n)
                .map(|_| {
                    if dyadic {
                        Rational::new(BigInt::from(rng.gen_range(0u64..1 << 53)), BigInt::from(1u64 << 53))
                    } else {
                        ratio(rng.gen_range(0..100), rng.gen_range(1..17))
                    }
                })
                .collect();
            if let Ok(s) = ShotSequence::from_parts(births, speeds) {
                return s;
            }
        }
    }

    fn check_invariants(d: &Diagram) {
        let n = d.n();
        assert_eq!(d.survivors.len() % 2, n % 2);
        for (i, b) in d.bullets.iter().enumerate() {
            match b.partner {
                Some(j) => {
                    assert_eq!(d.bullets[j].partner, Some(i));
                    assert_eq!(d.bullets[j].death, b.death);
                    assert_eq!(d.death_point(i).unwrap().position, d.death_point(j).unwrap().position);
                }
                None => assert_eq!(b.death, ExtendedTime::Infinity),
            }
        }
        for (x, &i) in d.survivors.iter().enumerate() {
            for &j in &d.survivors[x + 1..] {
                let t = geometry::virtual_collision_time(
                    &HalfLine::new(d.bullets[i].speed.clone(), d.bullets[i].birth.clone()),
                    &HalfLine::new(d.bullets[j].speed.clone(), d.bullets[j].birth.clone()),
                )
                .unwrap();
                assert_eq!(t, ExtendedTime::Infinity);
            }
        }
        // true trajectories never cross except at a shared death point
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (&d.bullets[i], &d.bullets[j]);
                let t = geometry::virtual_collision_time(
                    &HalfLine::new(a.speed.clone(), a.birth.clone()),
                    &HalfLine::new(b.speed.clone(), b.birth.clone()),
                )
                .unwrap();
                if let ExtendedTime::Finite(t) = t {
                    let on_a = ExtendedTime::Finite(t.clone()) <= a.death;
                    let on_b = ExtendedTime::Finite(t.clone()) <= b.death;
                    if on_a && on_b {
                        assert_eq!(a.partner, Some(j), "trajectories {i} and {j} cross without colliding");
                    }
                }
            }
        }
    }

    #[test]
    fn queue_engine_matches_naive_scan() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        for trial in 0..600 {
            let n = 1 + trial % 8;
            let s = random_shots(&mut rng, n, trial % 2 == 0);
            let fast = resolve(&s);
            let slow = resolve_naive(&s);
            match (&fast, &slow) {
                (Ok(a), Ok(b)) => {
                    assert_eq!(a, b);
                    check_invariants(a);
                    assert_eq!(survivor_count(&s).unwrap(), a.survivor_count());
                }
                (Err(Error::SingularParameter { .. }), Err(Error::SingularParameter { .. })) => {}
                _ => panic!("engines disagree on {s:?}: {fast:?} vs {slow:?}"),
            }
        }
    }

    #[test]
    fn big_integer_path_matches_naive_scan() {
        // denominators with large lcm force the BigInt representation
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let n = rng.gen_range(2..8);
            let shots: Vec<Shot> = (0..n)
                .scan(Rational::zero(), |t, j| {
                    if j > 0 {
                        *t += ratio(rng.gen_range(1..1_000_000_007), rng.gen_range(1_000_000..1_000_000_007));
                    }
                    Some(Shot::new(
                        t.clone(),
                        ratio(rng.gen_range(1..1_000_000_007), rng.gen_range(1_000_000..1_000_000_007)),
                    ))
                })
                .collect();
            let s = ShotSequence::new(shots).unwrap();
            assert!(ScaledBig::new(s.shots()).narrow::<i128>(126).is_none());
            assert_eq!(resolve(&s).unwrap(), resolve_naive(&s).unwrap());
        }
    }

    #[test]
    fn zero_minimal_speed_law() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.gen_range(2..8);
            let s = random_shots(&mut rng, n, false);
            // force a zero speed at a random shot position
            let a = rng.gen_range(0..n);
            let mut shots = s.shots().to_vec();
            if shots.iter().any(|x| x.speed.is_zero()) {
                continue;
            }
            shots[a].speed = int(0);
            let s = ShotSequence::new(shots).unwrap();
            let d = resolve(&s).unwrap();
            if a == n - 1 {
                assert!(d.survivors.contains(&a));
            } else {
                assert_eq!(d.bullets[a].partner, Some(a + 1));
                assert_eq!(d.bullets[a].death, ExtendedTime::Finite(s.shots()[a + 1].birth.clone()));
            }
        }
    }

    #[test]
    fn prepared_parameter_matches_realize() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        for trial in 0..120 {
            let n = 1 + trial % 5;
            let dyadic = trial % 2 == 0;
            let s = random_shots(&mut rng, n, dyadic);
            let speeds: Vec<Rational> = s.shots().iter().map(|x| x.speed.clone()).collect();
            let delays: Vec<Rational> = s.shots().windows(2).map(|w| &w[1].birth - &w[0].birth).collect();
            let p = Parameter::from_unsorted(speeds, delays).unwrap();
            let prepared = PreparedParameter::new(&p);
            crate::perm::for_each(n, |sigma| {
                crate::perm::for_each(n - 1, |tau| {
                    let c = Configuration::new(sigma.to_vec(), tau.to_vec()).unwrap();
                    match resolve(&realize(&p, &c).unwrap()) {
                        Ok(d) => {
                            let partners: Vec<_> = d.bullets.iter().map(|b| b.partner).collect();
                            assert_eq!(prepared.partners(sigma, tau).unwrap(), partners);
                        }
                        Err(e) => assert_eq!(prepared.partners(sigma, tau).unwrap_err(), e),
                    }
                })
            });
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn trajectory_steps_are_plus_minus_one(seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 30;
            let speeds: Vec<Rational> = (0..n).map(|_| ratio(rng.gen_range(0..1_000_000), 1_000_000)).collect();
            let mut sorted = speeds.clone();
            sorted.sort();
            sorted.dedup();
            prop_assume!(sorted.len() == n);
            let delays = vec![int(1); n - 1];
            match survivor_trajectory(&speeds, &delays, n) {
                Ok(traj) => {
                    prop_assert_eq!(traj[0], 1);
                    for w in traj.windows(2) {
                        prop_assert!(w[1] + 1 == w[0] || w[0] + 1 == w[1]);
                    }
                }
                Err(Error::SingularParameter { .. }) => {}
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
        }
    }
}
