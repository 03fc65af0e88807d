//! Samplers for the random bullet models and their combinatorial
//! equivalents, plus empirical-versus-exact comparison.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::engine::{self, realize, Configuration, Parameter, PreparedParameter, Shot, ShotSequence};
use crate::enumeration::{ConstrainedParameter, CrossingSet};
use crate::error::{Error, Result};
use crate::geometry::ExtendedTime;
use crate::law::SurvivorDistribution;
use crate::perm;
use crate::rational::{self, Rational};
use crate::rng::{self, Stream};
use crate::scheme::GenericParameter;

/// Resampling cap for the probability-zero singular draws.
pub const SINGULAR_RETRIES: usize = 16;

/// Samples per independent random stream in [`monte_carlo`].
pub const BATCH_SIZE: u64 = 1000;

#[derive(Debug, Clone, PartialEq)]
pub enum SpeedSampler {
    /// Uniform on `[0, 1)`.
    Uniform,
    Exponential { rate: f64 },
    /// Uniform choice among the listed values.
    Table(Vec<Rational>),
}

impl SpeedSampler {
    pub fn draw(&self, rng: &mut impl Rng) -> Rational {
        match self {
            SpeedSampler::Uniform => rng::uniform_dyadic(rng),
            SpeedSampler::Exponential { rate } => {
                let u = rng::uniform_f64(rng);
                let x = -(1.0 - u).ln() / rate;
                rational::from_f64(x).expect("finite draw")
            }
            SpeedSampler::Table(values) => values[rng.gen_range(0..values.len())].clone(),
        }
    }

    /// `n` pairwise distinct draws; repeats are rejected and redrawn.
    pub fn draw_distinct(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<Rational>> {
        if let SpeedSampler::Table(values) = self {
            let mut distinct = values.clone();
            distinct.sort();
            distinct.dedup();
            if distinct.len() < n {
                return Err(Error::invalid("table", format!("{} distinct values for {n} draws", distinct.len())));
            }
        }
        let mut out: Vec<Rational> = Vec::with_capacity(n);
        while out.len() < n {
            let x = self.draw(rng);
            if !out.contains(&x) {
                out.push(x);
            }
        }
        Ok(out)
    }

    /// `n` strictly positive draws (zero is redrawn).
    pub fn draw_positive(&self, n: usize, rng: &mut impl Rng) -> Vec<Rational> {
        (0..n)
            .map(|_| loop {
                let x = self.draw(rng);
                if x.is_positive() {
                    break x;
                }
            })
            .collect()
    }
}

fn count_with_retries(mut attempt: impl FnMut() -> Result<usize>) -> Result<usize> {
    let mut last = None;
    for _ in 0..SINGULAR_RETRIES {
        match attempt() {
            Err(e @ Error::SingularParameter { .. }) => last = Some(e),
            other => return other,
        }
    }
    Err(last.expect("at least one attempt"))
}

fn shots_from(speeds: Vec<Rational>, delays: &[Rational]) -> ShotSequence {
    let mut t = Rational::zero();
    let shots = speeds
        .into_iter()
        .enumerate()
        .map(|(j, v)| {
            if j > 0 {
                t += &delays[j - 1];
            }
            Shot::new(t.clone(), v)
        })
        .collect();
    ShotSequence::new(shots).expect("distinct speeds, positive delays")
}

/// Random speeds, bullets fired at times `1, 2, …, n`.
pub fn sample_ru(n: usize, speeds: &SpeedSampler, rng: &mut impl Rng) -> Result<usize> {
    let unit = vec![rational::int(1); n.saturating_sub(1)];
    count_with_retries(|| engine::survivor_count(&shots_from(speeds.draw_distinct(n, rng)?, &unit)))
}

/// Random speeds and i.i.d. random delays.
pub fn sample_rr(n: usize, speeds: &SpeedSampler, delays: &SpeedSampler, rng: &mut impl Rng) -> Result<usize> {
    count_with_retries(|| {
        let v = speeds.draw_distinct(n, rng)?;
        let d = delays.draw_positive(n.saturating_sub(1), rng);
        engine::survivor_count(&shots_from(v, &d))
    })
}

/// Uniform independent `(σ, τ)`.
pub fn random_configuration(n: usize, rng: &mut impl Rng) -> Configuration {
    let mut sigma: Vec<usize> = (0..n).collect();
    let mut tau: Vec<usize> = (0..n.saturating_sub(1)).collect();
    sigma.shuffle(rng);
    tau.shuffle(rng);
    Configuration { sigma, tau }
}

/// Fixed generic parameter, uniform configuration.
pub fn sample_ff(p: &PreparedParameter, rng: &mut impl Rng) -> Result<usize> {
    let c = random_configuration(p.n(), rng);
    p.survivor_count(&c.sigma, &c.tau)
}

/// Continuous, strictly increasing `f` with `f(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum Acceleration {
    Identity,
    Square,
    Sqrt,
    OneMinusExp,
    /// Piecewise-linear through the listed `(x, f(x))` points, extended
    /// linearly past the last one.
    Table(Vec<(f64, f64)>),
}

impl Acceleration {
    pub fn table(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 || points[0] != (0.0, 0.0) {
            return Err(Error::invalid("acceleration", "table must start at (0, 0) and have two points"));
        }
        if points.windows(2).any(|w| !(w[1].0 > w[0].0 && w[1].1 > w[0].1)) {
            return Err(Error::invalid("acceleration", "table must be strictly increasing"));
        }
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::invalid("acceleration", "table values must be finite"));
        }
        Ok(Acceleration::Table(points))
    }

    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Acceleration::Identity => x,
            Acceleration::Square => x * x,
            Acceleration::Sqrt => x.sqrt(),
            Acceleration::OneMinusExp => -(-x).exp_m1(),
            Acceleration::Table(pts) => {
                let i = pts.partition_point(|p| p.0 <= x).clamp(1, pts.len() - 1);
                let (x0, y0) = pts[i - 1];
                let (x1, y1) = pts[i];
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            }
        }
    }
}

/// Impetuses, delays and a distance law `D_t(i) = f(I_i (t − T_i))`.
#[derive(Debug, Clone)]
pub struct ImpetusProblem {
    linear: GenericParameter,
    pub acceleration: Acceleration,
}

impl ImpetusProblem {
    pub fn new(impetuses: Vec<Rational>, delays: Vec<Rational>, acceleration: Acceleration) -> Result<Self> {
        if impetuses.iter().any(|i| !i.is_positive()) {
            return Err(Error::invalid("impetuses", "impetuses must be positive"));
        }
        let linear = GenericParameter::certify(Parameter::from_unsorted(impetuses, delays)?)?;
        Ok(ImpetusProblem { linear, acceleration })
    }

    /// The linear problem with speeds equal to the impetuses.
    pub fn linear(&self) -> &GenericParameter {
        &self.linear
    }
}

/// `Φ(t, y) = (t, f(y))` maps the linear diagram onto the accelerated one, so
/// survivors are those of the linear problem.
pub fn sample_faf(ip: &ImpetusProblem, prepared: &PreparedParameter, rng: &mut impl Rng) -> Result<usize> {
    debug_assert_eq!(prepared.n(), ip.linear.n());
    sample_ff(prepared, rng)
}

pub fn faf_survivors(ip: &ImpetusProblem, c: &Configuration) -> Result<Vec<usize>> {
    Ok(engine::resolve(&realize(&ip.linear, c)?)?.survivors)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FafAudit {
    pub collisions_checked: usize,
    pub orderings_checked: usize,
    pub violations: usize,
}

/// Checks the reduction numerically: colliding bullets sit at the same
/// accelerated distance, and at every grid time the accelerated distances of
/// live bullets are ordered like the linear ones.
pub fn audit_faf(ip: &ImpetusProblem, c: &Configuration) -> Result<FafAudit> {
    let shots = realize(&ip.linear, c)?;
    let d = engine::resolve(&shots)?;
    let f = |i: usize, t: f64| {
        let b = &d.bullets[i];
        ip.acceleration.apply(rational::to_f64(&b.speed) * (t - rational::to_f64(&b.birth)))
    };
    let mut audit = FafAudit::default();
    for (i, j) in d.pairs() {
        let t = rational::to_f64(d.bullets[i].death.finite().expect("paired"));
        let (a, b) = (f(i, t), f(j, t));
        audit.collisions_checked += 1;
        if (a - b).abs() > 1e-9 * a.abs().max(b.abs()).max(1.0) {
            audit.violations += 1;
        }
    }
    let mut times: Vec<Rational> = d.bullets.iter().map(|b| b.birth.clone()).collect();
    times.extend(d.bullets.iter().filter_map(|b| b.death.finite().cloned()));
    times.sort();
    times.dedup();
    let last = times.last().cloned().unwrap_or_default();
    times.push(last + rational::int(1));
    let grid: Vec<Rational> = times.windows(2).map(|w| (&w[0] + &w[1]) / rational::int(2)).collect();
    for t in &grid {
        let live: Vec<usize> = (0..d.n())
            .filter(|&i| &d.bullets[i].birth <= t && d.bullets[i].death > ExtendedTime::Finite(t.clone()))
            .collect();
        let tf = rational::to_f64(t);
        for (x, &i) in live.iter().enumerate() {
            for &j in &live[x + 1..] {
                let yi = &d.bullets[i].speed * (t - &d.bullets[i].birth);
                let yj = &d.bullets[j].speed * (t - &d.bullets[j].birth);
                let (fi, fj) = (f(i, tf), f(j, tf));
                audit.orderings_checked += 1;
                let linear = yi.cmp(&yj);
                let accel = fi.partial_cmp(&fj).unwrap_or(std::cmp::Ordering::Equal);
                if accel != std::cmp::Ordering::Equal && accel != linear {
                    audit.violations += 1;
                }
            }
        }
    }
    Ok(audit)
}

/// Model 5 run: sizes `|L_1|, …, |L_n|`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlockRun {
    pub sizes: Vec<usize>,
    pub final_size: usize,
}

/// A faster shot kills the slowest live bullet; a shot no faster than all
/// live bullets joins as the new slowest, so the flock is a stack.
pub fn flock_run<T: PartialOrd + Clone>(speeds: &[T]) -> FlockRun {
    let mut stack: Vec<T> = Vec::new();
    let mut sizes = Vec::with_capacity(speeds.len());
    for v in speeds {
        match stack.last() {
            Some(min) if v > min => {
                stack.pop();
            }
            _ => stack.push(v.clone()),
        }
        sizes.push(stack.len());
    }
    FlockRun {
        final_size: stack.len(),
        sizes,
    }
}

/// Number of odd-length cycles of `perm`.
pub fn odd_cycle_count(perm: &[usize]) -> usize {
    perm::cycle_lengths(perm).into_iter().filter(|l| l % 2 == 1).count()
}

/// Model 7: repeatedly take the argmin of the remaining matrix and delete
/// rows and columns `i*` and `j*`; counts rounds with `i* = j*`.
pub fn matrix_extremes_run(entries: &[Vec<f64>]) -> Result<usize> {
    let n = entries.len();
    if entries.iter().any(|row| row.len() != n) {
        return Err(Error::DimensionMismatch {
            detail: "matrix must be square".to_string(),
        });
    }
    let mut cells: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for (i, row) in entries.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            cells.push((x, i, j));
        }
    }
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    if cells.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::invalid("entries", "entries must be distinct"));
    }
    let mut alive = vec![true; n];
    let mut diagonal = 0;
    for &(_, i, j) in &cells {
        if alive[i] && alive[j] {
            if i == j {
                diagonal += 1;
            }
            alive[i] = false;
            alive[j] = false;
        }
    }
    Ok(diagonal)
}

pub fn sample_matrix(n: usize, rng: &mut impl Rng) -> Result<usize> {
    count_with_retries(|| {
        let m: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng::uniform_f64(rng)).collect()).collect();
        matrix_extremes_run(&m).map_err(|_| Error::singular("tied matrix entries"))
    })
}

/// Red-edge counts `D_0, …, D_n` in the two-step tree; `b[m − 1]` is `B_m`.
pub fn two_step_distances(b: &[bool]) -> Vec<usize> {
    let mut d = vec![0usize; b.len() + 1];
    for m in 1..=b.len() {
        d[m] = if b[m - 1] { d[m - 1] + 1 } else { d[m - 2] };
    }
    d
}

pub fn two_step_distance(b: &[bool]) -> usize {
    *two_step_distances(b).last().expect("D_0 exists")
}

/// `B_1, …, B_n` with `B_m ~ Bernoulli(1/m)`.
pub fn sample_bernoullis(n: usize, rng: &mut impl Rng) -> Vec<bool> {
    (1..=n as u64).map(|m| rng::bernoulli_inverse(rng, m)).collect()
}

/// Shots needed to kill a slowest bullet of speed `x` with uniform shots.
pub fn flock_destruction_time(x: f64, rng: &mut impl Rng) -> Result<u64> {
    if !(0.0..1.0).contains(&x) {
        return Err(Error::invalid("x", "must lie in [0, 1)"));
    }
    let mut stack = vec![x];
    let mut shots = 0u64;
    while let Some(&top) = stack.last() {
        shots += 1;
        let u = rng::uniform_f64(rng);
        if u > top {
            stack.pop();
        } else {
            stack.push(u);
        }
    }
    Ok(shots)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub samples: u64,
    pub tv: f64,
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Total variation and a chi-square goodness-of-fit test against an exact
/// law. Cells are the support of `reference`; adjacent cells are pooled
/// upward until each expected count is at least 5. Any sample outside the
/// support makes the statistic infinite.
pub fn compare_empirical(counts: &BTreeMap<usize, u64>, reference: &SurvivorDistribution) -> Result<Comparison> {
    let total: u64 = counts.values().sum();
    if total == 0 {
        return Err(Error::EmptySample);
    }
    let empirical = SurvivorDistribution::from_counts(reference.n, counts)?;
    let tv = rational::to_f64(&empirical.total_variation(reference));
    let outside: u64 = counts
        .iter()
        .filter(|(k, _)| !reference.mass.contains_key(k))
        .map(|(_, &c)| c)
        .sum();
    if outside > 0 {
        return Ok(Comparison {
            samples: total,
            tv,
            chi_square: f64::INFINITY,
            dof: reference.mass.len().saturating_sub(1),
            p_value: 0.0,
        });
    }
    let n_total = BigInt::from(total);
    let mut bins: Vec<(f64, u64)> = Vec::new();
    let (mut expected, mut observed) = (0.0, 0u64);
    for (k, p) in &reference.mass {
        expected += rational::to_f64(&(p * Rational::from_integer(n_total.clone())));
        observed += counts.get(k).copied().unwrap_or(0);
        if expected >= 5.0 {
            bins.push((expected, observed));
            expected = 0.0;
            observed = 0;
        }
    }
    if expected > 0.0 || observed > 0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += expected;
                last.1 += observed;
            }
            None => bins.push((expected, observed)),
        }
    }
    let chi_square: f64 = bins.iter().map(|&(e, o)| (o as f64 - e).powi(2) / e).sum();
    let dof = bins.len().saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        ChiSquared::new(dof as f64).expect("positive dof").sf(chi_square)
    };
    Ok(Comparison {
        samples: total,
        tv,
        chi_square,
        dof,
        p_value,
    })
}

/// Runs `samples` draws split into fixed-size batches; batch `b` uses stream
/// `b` of `seed`. Thread count does not affect the result.
pub fn monte_carlo<F>(samples: u64, seed: u64, draw: F) -> Result<BTreeMap<usize, u64>>
where
    F: Fn(&mut Stream) -> Result<usize> + Sync,
{
    let batches = samples.div_ceil(BATCH_SIZE);
    let per_batch: Vec<Result<BTreeMap<usize, u64>>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(seed, b);
            let size = BATCH_SIZE.min(samples - b * BATCH_SIZE);
            let mut counts = BTreeMap::new();
            for _ in 0..size {
                *counts.entry(draw(&mut rng)?).or_insert(0) += 1;
            }
            Ok(counts)
        })
        .collect();
    let mut counts = BTreeMap::new();
    for batch in per_batch {
        for (k, c) in batch? {
            *counts.entry(k).or_insert(0) += c;
        }
    }
    Ok(counts)
}

/// Same batching for real-valued draws; returns the draws in batch order.
pub fn monte_carlo_values<T, F>(samples: u64, seed: u64, draw: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut Stream) -> Result<T> + Sync,
{
    let batches = samples.div_ceil(BATCH_SIZE);
    let per_batch: Vec<Result<Vec<T>>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(seed, b);
            let size = BATCH_SIZE.min(samples - b * BATCH_SIZE);
            (0..size).map(|_| draw(&mut rng)).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(samples as usize);
    for batch in per_batch {
        out.extend(batch?);
    }
    Ok(out)
}

/// Draws from an exact law by inversion (used for calibration).
pub fn sample_reference(reference: &SurvivorDistribution, rng: &mut impl Rng) -> usize {
    let u = rng::uniform_f64(rng);
    let mut acc = 0.0;
    for (&k, p) in &reference.mass {
        acc += rational::to_f64(p);
        if u < acc {
            return k;
        }
    }
    *reference.mass.keys().last().expect("non-empty law")
}

/// Uniform speeds and delays (delays shifted away from zero) drawn from
/// `seed`, redrawn until generic.
pub fn random_generic_parameter(n: usize, seed: u64) -> Result<GenericParameter> {
    let mut rng = rng::stream(seed, u64::MAX);
    loop {
        let speeds = SpeedSampler::Uniform.draw_distinct(n, &mut rng)?;
        let delays = SpeedSampler::Uniform
            .draw_positive(n.saturating_sub(1), &mut rng)
            .into_iter()
            .map(|d| d + rational::ratio(1, 2))
            .collect();
        match GenericParameter::certify(Parameter::from_unsorted(speeds, delays)?) {
            Ok(g) => return Ok(g),
            Err(Error::NotGeneric { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
}

/// Constrained parameter with `v_min` in `[1/2, 3/4)`, `v_r` in `[3/2, 2)`,
/// free speeds in `[1, 3)`, free delays in `[1/4, 5/4)` and `Δ*` in `[2, 3)`,
/// so that faster bullets fired after `T_R` can reach `S`. Segment `s = 0`,
/// crossing set `All`.
pub fn random_constrained_parameter(n: usize, seed: u64) -> Result<ConstrainedParameter> {
    if n < 2 {
        return Err(Error::invalid("n", "constrained models need at least two bullets"));
    }
    let mut r = rng::stream(seed, n as u64);
    let u = SpeedSampler::Uniform;
    let free = u.draw_distinct(n - 2, &mut r)?.into_iter().map(|x| x * rational::int(2) + rational::int(1)).collect();
    let v_min = rational::ratio(1, 2) + u.draw(&mut r) / rational::int(4);
    let v_r = rational::ratio(3, 2) + u.draw(&mut r) / rational::int(2);
    let delays = u.draw_positive(n - 2, &mut r).into_iter().map(|x| x + rational::ratio(1, 4)).collect();
    let delta_star = rational::int(2) + u.draw(&mut r);
    ConstrainedParameter::new(free, v_min, v_r, delays, delta_star, Rational::zero(), CrossingSet::All)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::q_exact;
    use crate::rational::{int, ratio};

    #[test]
    fn trivial_sizes() {
        let mut r = rng::stream(0, 0);
        assert_eq!(sample_ru(0, &SpeedSampler::Uniform, &mut r).unwrap(), 0);
        assert_eq!(sample_ru(1, &SpeedSampler::Uniform, &mut r).unwrap(), 1);
        let exp = SpeedSampler::Exponential { rate: 1.0 };
        assert_eq!(sample_rr(0, &SpeedSampler::Uniform, &exp, &mut r).unwrap(), 0);
        assert_eq!(sample_rr(1, &SpeedSampler::Uniform, &exp, &mut r).unwrap(), 1);
    }

    #[test]
    fn draws_are_exact_doubles() {
        let mut r = rng::stream(4, 0);
        for sampler in [SpeedSampler::Uniform, SpeedSampler::Exponential { rate: 2.0 }] {
            for _ in 0..200 {
                let x = sampler.draw(&mut r);
                assert_eq!(rational::from_f64(rational::to_f64(&x)).unwrap(), x);
                assert!(!x.is_negative());
            }
        }
        let table = SpeedSampler::Table(vec![int(1), int(2)]);
        assert!(table.draw_distinct(3, &mut r).is_err());
        let mut two = table.draw_distinct(2, &mut r).unwrap();
        two.sort();
        assert_eq!(two, vec![int(1), int(2)]);
    }

    #[test]
    fn flock_examples() {
        let run = flock_run(&[0.5, 0.3, 0.7]);
        assert_eq!(run.sizes, vec![1, 2, 1]);
        assert_eq!(run.final_size, 1);
        assert_eq!(flock_run(&[5, 4, 3, 2, 1]).final_size, 5);
    }

    #[test]
    fn flock_parity() {
        let mut r = rng::stream(8, 0);
        let speeds: Vec<f64> = (0..1000).map(|_| rng::uniform_f64(&mut r)).collect();
        for (j, s) in flock_run(&speeds).sizes.iter().enumerate() {
            assert_eq!(s % 2, (j + 1) % 2);
        }
    }

    #[test]
    fn odd_cycle_examples() {
        assert_eq!(odd_cycle_count(&[0, 1, 2]), 3);
        assert_eq!(odd_cycle_count(&[1, 2, 0]), 1);
        assert_eq!(odd_cycle_count(&[0, 2, 1]), 1);
        perm::for_each(6, |p| assert_eq!(odd_cycle_count(p) % 2, 0));
    }

    #[test]
    fn matrix_examples() {
        assert_eq!(matrix_extremes_run(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap(), 2);
        assert_eq!(matrix_extremes_run(&[vec![2.0, 1.0], vec![3.0, 4.0]]).unwrap(), 0);
        assert_eq!(matrix_extremes_run(&[vec![7.0]]).unwrap(), 1);
        assert!(matrix_extremes_run(&[vec![1.0, 1.0], vec![3.0, 4.0]]).is_err());
    }

    /// Literal removal loop on a shrinking matrix.
    fn matrix_oracle(m: &[Vec<f64>]) -> usize {
        let mut rows: Vec<usize> = (0..m.len()).collect();
        let mut diag = 0;
        while !rows.is_empty() {
            let mut best = (f64::INFINITY, 0, 0);
            for &i in &rows {
                for &j in &rows {
                    if m[i][j] < best.0 {
                        best = (m[i][j], i, j);
                    }
                }
            }
            if best.1 == best.2 {
                diag += 1;
            }
            rows.retain(|&x| x != best.1 && x != best.2);
        }
        diag
    }

    #[test]
    fn matrix_scan_matches_literal_loop() {
        let mut r = rng::stream(12, 0);
        for n in 1..9 {
            for _ in 0..50 {
                let m: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng::uniform_f64(&mut r)).collect()).collect();
                assert_eq!(matrix_extremes_run(&m).unwrap(), matrix_oracle(&m));
            }
        }
    }

    #[test]
    fn two_step_examples() {
        assert_eq!(two_step_distance(&[true; 7]), 7);
        assert_eq!(two_step_distance(&[true, false, false, false]), 0);
        let mut r = rng::stream(2, 0);
        for _ in 0..100 {
            let d = two_step_distances(&sample_bernoullis(200, &mut r));
            for m in 2..d.len() {
                assert!(d[m] >= d[m - 2]);
            }
        }
    }

    #[test]
    fn destruction_time_at_zero_is_one() {
        let mut r = rng::stream(3, 0);
        for _ in 0..100 {
            assert_eq!(flock_destruction_time(0.0, &mut r).unwrap(), 1);
        }
        assert!(flock_destruction_time(1.0, &mut r).is_err());
    }

    #[test]
    fn comparison_examples() {
        let q = q_exact(6);
        let same = compare_empirical(&BTreeMap::from([(0, 5u64), (2, 10)]), &q).unwrap();
        assert!(same.tv > 0.0);
        assert!(compare_empirical(&BTreeMap::new(), &q).is_err());
        let degenerate = compare_empirical(&BTreeMap::from([(6, 100_000u64)]), &q).unwrap();
        assert!(degenerate.tv > 0.99);
        assert!(degenerate.p_value < 1e-12);
        let odd = compare_empirical(&BTreeMap::from([(1, 3u64), (2, 3)]), &q).unwrap();
        assert_eq!(odd.p_value, 0.0);
        let q2 = q_exact(2);
        let perfect = compare_empirical(&BTreeMap::from([(0, 50u64), (2, 50)]), &q2).unwrap();
        assert_eq!(perfect.tv, 0.0);
        assert_eq!(perfect.chi_square, 0.0);
    }

    #[test]
    fn chi_square_is_calibrated() {
        let q = q_exact(10);
        let mut passes = 0;
        for rep in 0..100 {
            let counts = monte_carlo(100_000, 1000 + rep, |r| Ok(sample_reference(&q, r))).unwrap();
            if compare_empirical(&counts, &q).unwrap().p_value > 1e-3 {
                passes += 1;
            }
        }
        assert!(passes >= 99, "{passes}");
    }

    #[test]
    fn monte_carlo_does_not_depend_on_threads() {
        let draw = |r: &mut Stream| sample_ru(6, &SpeedSampler::Uniform, r);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| monte_carlo(2500, 5, draw)).unwrap();
        let b = three.install(|| monte_carlo(2500, 5, draw)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.values().sum::<u64>(), 2500);
    }

    #[test]
    fn faf_identity_reproduces_ff() {
        let imp = vec![ratio(1, 3), ratio(7, 5), ratio(2, 9), int(2), ratio(11, 4)];
        let del = vec![int(1), ratio(3, 2), ratio(5, 7), ratio(9, 4)];
        let ip = ImpetusProblem::new(imp, del, Acceleration::Identity).unwrap();
        let prepared = PreparedParameter::new(ip.linear());
        let mut a = rng::stream(21, 0);
        let mut b = rng::stream(21, 0);
        for _ in 0..200 {
            assert_eq!(sample_faf(&ip, &prepared, &mut a).unwrap(), sample_ff(&prepared, &mut b).unwrap());
        }
    }

    #[test]
    fn faf_audit_is_clean() {
        let imp = vec![ratio(1, 3), ratio(7, 5), ratio(2, 9), int(2), ratio(11, 4), ratio(5, 6)];
        let del = vec![int(1), ratio(3, 2), ratio(5, 7), ratio(9, 4), ratio(1, 3)];
        let mut r = rng::stream(30, 0);
        for acc in [Acceleration::Square, Acceleration::Sqrt, Acceleration::OneMinusExp] {
            let ip = ImpetusProblem::new(imp.clone(), del.clone(), acc).unwrap();
            for _ in 0..200 {
                let c = random_configuration(6, &mut r);
                let audit = audit_faf(&ip, &c).unwrap();
                assert_eq!(audit.violations, 0, "{audit:?}");
                assert!(audit.orderings_checked > 0);
            }
        }
    }

    #[test]
    fn acceleration_table_validation() {
        assert!(Acceleration::table(vec![(0.0, 0.0), (1.0, 2.0), (2.0, 3.0)]).is_ok());
        assert!(Acceleration::table(vec![(0.0, 1.0), (1.0, 2.0)]).is_err());
        assert!(Acceleration::table(vec![(0.0, 0.0), (1.0, 2.0), (2.0, 2.0)]).is_err());
        let t = Acceleration::table(vec![(0.0, 0.0), (1.0, 2.0), (2.0, 3.0)]).unwrap();
        assert_eq!(t.apply(0.5), 1.0);
        assert_eq!(t.apply(1.5), 2.5);
        assert_eq!(t.apply(3.0), 4.0);
    }

    #[test]
    fn generic_parameter_draw_is_reproducible() {
        let a = random_generic_parameter(5, 17).unwrap();
        let b = random_generic_parameter(5, 17).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, random_generic_parameter(5, 18).unwrap());
    }
}
