//! Genericity certification, critical patterns and the topological colliding
//! scheme (TCS).

use std::collections::HashMap;

use num_traits::{Signed, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{realize, Configuration, Parameter};
use crate::error::{Error, Result};
use crate::geometry::{self, HalfLine, SpaceTimePoint};
use crate::rational::{self, Rational};

/// Default exhaustive bound for the pattern scan.
pub const DEFAULT_PATTERN_MAX_N: usize = 12;

/// Three speeds and two disjoint delay sums whose half-lines
/// `HL(v_m, 0)`, `HL(v_l, d_l)`, `HL(v_r, d_l + d_r)` are concurrent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CriticalPattern {
    /// Indices into the sorted speed vector.
    pub m: usize,
    pub l: usize,
    pub r: usize,
    #[serde(with = "rational::text")]
    pub v_m: Rational,
    #[serde(with = "rational::text")]
    pub v_l: Rational,
    #[serde(with = "rational::text")]
    pub v_r: Rational,
    #[serde(with = "rational::text")]
    pub d_l: Rational,
    #[serde(with = "rational::text")]
    pub d_r: Rational,
    /// Delay indices summed into `d_l` and `d_r`.
    pub left_delays: Vec<usize>,
    pub right_delays: Vec<usize>,
    #[serde(with = "rational::text")]
    pub triple_height: Rational,
    pub minimal: bool,
}

fn mask_indices(mask: usize) -> Vec<usize> {
    (0..usize::BITS as usize).filter(|b| mask >> b & 1 == 1).collect()
}

fn subset_sums(delays: &[Rational]) -> Vec<Rational> {
    let mut sums = vec![Rational::zero(); 1 << delays.len()];
    for mask in 1..sums.len() {
        let low = mask.trailing_zeros() as usize;
        sums[mask] = &sums[mask & (mask - 1)] + &delays[low];
    }
    sums
}

pub fn find_critical_patterns(p: &Parameter) -> Result<Vec<CriticalPattern>> {
    find_critical_patterns_bounded(p, DEFAULT_PATTERN_MAX_N)
}

/// For each ordered speed pair `(m, l)` and left delay set `L`, the crossing
/// point `P` of `HL(v_m, 0)` and `HL(v_l, d_l)` fixes the birth a third line
/// of speed `v_r` needs to pass through `P`; the matching right sets are
/// looked up by subset sum.
pub fn find_critical_patterns_bounded(p: &Parameter, max_n: usize) -> Result<Vec<CriticalPattern>> {
    let n = p.n();
    if n > max_n {
        return Err(Error::SizeLimit { n, max: max_n });
    }
    if n < 3 {
        return Ok(Vec::new());
    }
    let speeds = p.speeds();
    let sums = subset_sums(p.delays());
    let full = sums.len() - 1;
    let mut by_sum: HashMap<&Rational, Vec<usize>> = HashMap::new();
    for (mask, s) in sums.iter().enumerate().skip(1) {
        by_sum.entry(s).or_default().push(mask);
    }

    let per_m: Vec<Vec<CriticalPattern>> = (0..n)
        .into_par_iter()
        .map(|m| {
            let mut found = Vec::new();
            if speeds[m].is_zero() {
                return found;
            }
            let base = HalfLine::new(speeds[m].clone(), Rational::zero());
            for l in (0..n).filter(|&l| l != m && !speeds[l].is_zero()) {
                for left in 1..=full {
                    let d_l = &sums[left];
                    let second = HalfLine::new(speeds[l].clone(), d_l.clone());
                    let Ok(Some(point)) = geometry::collision_point(&base, &second) else {
                        continue;
                    };
                    for r in (0..n).filter(|&r| r != m && r != l && !speeds[r].is_zero()) {
                        let d_r = &point.time - &point.position / &speeds[r] - d_l;
                        if !d_r.is_positive() {
                            continue;
                        }
                        let Some(masks) = by_sum.get(&d_r) else { continue };
                        for &right in masks.iter().filter(|&&mask| mask & left == 0) {
                            found.push(CriticalPattern {
                                m,
                                l,
                                r,
                                v_m: speeds[m].clone(),
                                v_l: speeds[l].clone(),
                                v_r: speeds[r].clone(),
                                d_l: d_l.clone(),
                                d_r: d_r.clone(),
                                left_delays: mask_indices(left),
                                right_delays: mask_indices(right),
                                triple_height: point.position.clone(),
                                minimal: left.count_ones() == 1 && right.count_ones() == 1,
                            });
                        }
                    }
                }
            }
            found
        })
        .collect();
    Ok(per_m.into_iter().flatten().collect())
}

pub fn is_generic(p: &Parameter) -> Result<bool> {
    Ok(find_critical_patterns(p)?.is_empty())
}

/// A parameter that has been certified free of critical patterns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct GenericParameter(Parameter);

impl GenericParameter {
    pub fn certify(p: Parameter) -> Result<Self> {
        Self::certify_bounded(p, DEFAULT_PATTERN_MAX_N)
    }

    pub fn certify_bounded(p: Parameter, max_n: usize) -> Result<Self> {
        let patterns = find_critical_patterns_bounded(&p, max_n)?;
        if patterns.is_empty() {
            Ok(GenericParameter(p))
        } else {
            Err(Error::NotGeneric {
                patterns: patterns.len(),
            })
        }
    }

    pub fn get(&self) -> &Parameter {
        &self.0
    }

    pub fn into_inner(self) -> Parameter {
        self.0
    }
}

impl std::ops::Deref for GenericParameter {
    type Target = Parameter;

    fn deref(&self) -> &Parameter {
        &self.0
    }
}

/// The TCS restricted to one configuration: `sign(i, j, k)` for bullets in
/// shot order. For `n = 2` only the pair entry is meaningful.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct TcsTable {
    n: usize,
    signs: Vec<i8>,
}

impl TcsTable {
    pub fn n(&self) -> usize {
        self.n
    }

    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    /// `Γ(i, j, k)` for distinct `i, j, k`; symmetric in `i, j`.
    pub fn sign(&self, i: usize, j: usize, k: usize) -> i8 {
        self.signs[self.idx(i, j, k)]
    }

    /// The `n = 2` entry `Γ(1, 2, *)`.
    pub fn pair_entry(&self) -> i8 {
        debug_assert_eq!(self.n, 2);
        self.signs[self.idx(0, 1, 0)]
    }

    /// Whether the virtual collision point of `i` and `j` exists. Any third
    /// index works since the entry is zero exactly when the point is absent.
    fn meets(&self, i: usize, j: usize) -> bool {
        if self.n == 2 {
            return self.pair_entry() != 0;
        }
        let k = (0..self.n).find(|&k| k != i && k != j).expect("n ≥ 3");
        self.sign(i, j, k) != 0
    }

    /// Builds a table from explicit entries; used for hand-made schemes.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize, usize) -> i8) -> Self {
        let mut signs = vec![0; n * n * n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                for k in 0..n {
                    if n == 2 || (k != i && k != j) {
                        signs[(i * n + j) * n + k] = f(i.min(j), i.max(j), k);
                    }
                }
            }
        }
        TcsTable { n, signs }
    }
}

pub fn compute_tcs(p: &Parameter, c: &Configuration) -> Result<TcsTable> {
    let g = GenericParameter::certify(p.clone())?;
    compute_tcs_generic(&g, c)
}

pub fn compute_tcs_generic(p: &GenericParameter, c: &Configuration) -> Result<TcsTable> {
    let shots = realize(p, c)?;
    let lines: Vec<HalfLine> = shots.shots().iter().map(|s| s.half_line()).collect();
    let n = lines.len();
    let mut points: HashMap<(usize, usize), Option<SpaceTimePoint>> = HashMap::new();
    for i in 0..n {
        for j in i + 1..n {
            points.insert((i, j), geometry::collision_point(&lines[i], &lines[j])?);
        }
    }
    Ok(TcsTable::from_fn(n, |i, j, k| match &points[&(i, j)] {
        None => 0,
        Some(_) if n == 2 => 1,
        Some(m) => geometry::side_of_line(m, &lines[k]),
    }))
}

/// Survivors and matched pairs decided by the TCS recursion.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TcsResolution {
    pub survivors: Vec<usize>,
    pub pairs: Vec<(usize, usize)>,
}

pub fn survivors_from_tcs(t: &TcsTable) -> Result<Vec<usize>> {
    resolve_tcs(t).map(|r| r.survivors)
}

pub fn resolve_tcs(t: &TcsTable) -> Result<TcsResolution> {
    let all: Vec<usize> = (0..t.n()).collect();
    let mut r = recurse(t, &all)?;
    r.survivors.sort_unstable();
    r.pairs.sort_unstable();
    Ok(r)
}

/// `set` is in shot order. The first bullet either meets nobody (it
/// survives), or the earliest `J` whose meeting point with it lies above
/// every other line decides the split.
fn recurse(t: &TcsTable, set: &[usize]) -> Result<TcsResolution> {
    let Some((&first, rest)) = set.split_first() else {
        return Ok(TcsResolution::default());
    };
    if !rest.iter().any(|&j| t.meets(first, j)) {
        let mut r = recurse(t, rest)?;
        r.survivors.push(first);
        return Ok(r);
    }
    let pos = rest.iter().position(|&j| {
        t.meets(first, j) && set.iter().all(|&k| k == first || k == j || t.sign(first, j, k) == 1)
    });
    let Some(pos) = pos else {
        return Err(Error::RecursionStuck { set: set.to_vec() });
    };
    let j = rest[pos];
    let inner = recurse(t, &rest[..=pos])?;
    if inner.survivors.contains(&j) {
        let mut r = recurse(t, &rest[pos + 1..])?;
        r.pairs.push((first, j));
        r.pairs.extend(inner.pairs);
        r.survivors.extend(inner.survivors.into_iter().filter(|&x| x != j));
        Ok(r)
    } else {
        let partner = inner
            .pairs
            .iter()
            .find_map(|&(a, b)| if a == j { Some(b) } else if b == j { Some(a) } else { None })
            .expect("a non-surviving bullet is paired");
        let remaining: Vec<usize> = set.iter().copied().filter(|&x| x != j && x != partner).collect();
        let mut r = recurse(t, &remaining)?;
        r.pairs.push((j.min(partner), j.max(partner)));
        Ok(r)
    }
}
