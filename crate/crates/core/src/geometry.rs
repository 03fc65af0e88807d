//! Virtual space-time primitives.
//!
//! A bullet shot at time `birth` with speed `v` occupies the half-line
//! `{(t, v·(t − birth)) : t ≥ birth}`. All predicates here are exact.

use std::cmp::Ordering;

use num_traits::Zero;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rational::{self, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HalfLine {
    pub speed: Rational,
    pub birth: Rational,
}

impl HalfLine {
    pub fn new(speed: Rational, birth: Rational) -> Self {
        HalfLine { speed, birth }
    }

    /// Height of the supporting line at `time` (may be negative before birth).
    pub fn height_at(&self, time: &Rational) -> Rational {
        &self.speed * (time - &self.birth)
    }

    pub fn contains(&self, p: &SpaceTimePoint) -> bool {
        p.time >= self.birth && self.height_at(&p.time) == p.position
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct SpaceTimePoint {
    #[serde(with = "rational::text")]
    pub time: Rational,
    #[serde(with = "rational::text")]
    pub position: Rational,
}

/// A time that may be infinite; `Infinity` is greater than every finite time.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExtendedTime {
    Finite(Rational),
    Infinity,
}

impl ExtendedTime {
    pub fn is_finite(&self) -> bool {
        matches!(self, ExtendedTime::Finite(_))
    }

    pub fn finite(&self) -> Option<&Rational> {
        match self {
            ExtendedTime::Finite(t) => Some(t),
            ExtendedTime::Infinity => None,
        }
    }
}

impl std::fmt::Display for ExtendedTime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExtendedTime::Finite(t) => f.write_str(&rational::format(t)),
            ExtendedTime::Infinity => f.write_str("inf"),
        }
    }
}

fn check_speeds(a: &HalfLine, b: &HalfLine) -> Result<()> {
    if a.speed == b.speed {
        Err(Error::EqualSpeeds {
            speed: rational::format(&a.speed),
        })
    } else {
        Ok(())
    }
}

/// Time at which the supporting lines of `a` and `b` cross (possibly before
/// either bullet is shot).
pub fn line_crossing_time(a: &HalfLine, b: &HalfLine) -> Result<Rational> {
    check_speeds(a, b)?;
    let numer = &a.speed * &a.birth - &b.speed * &b.birth;
    Ok(numer / (&a.speed - &b.speed))
}

/// Virtual collision time: the crossing time of the two supporting lines when
/// both bullets have been shot by then, `Infinity` otherwise.
pub fn virtual_collision_time(a: &HalfLine, b: &HalfLine) -> Result<ExtendedTime> {
    let t = line_crossing_time(a, b)?;
    if t >= a.birth && t >= b.birth {
        Ok(ExtendedTime::Finite(t))
    } else {
        Ok(ExtendedTime::Infinity)
    }
}

pub fn collision_point(a: &HalfLine, b: &HalfLine) -> Result<Option<SpaceTimePoint>> {
    Ok(match virtual_collision_time(a, b)? {
        ExtendedTime::Finite(time) => {
            let position = a.height_at(&time);
            Some(SpaceTimePoint { time, position })
        }
        ExtendedTime::Infinity => None,
    })
}

/// Whether the three half-lines share a common point.
pub fn concurrent(a: &HalfLine, b: &HalfLine, c: &HalfLine) -> Result<bool> {
    check_speeds(a, c)?;
    check_speeds(b, c)?;
    Ok(match collision_point(a, b)? {
        Some(p) => c.contains(&p),
        None => false,
    })
}

/// Sign of `p` relative to the full line supporting `l`: `+1` above,
/// `-1` below, `0` on it.
pub fn side_of_line(p: &SpaceTimePoint, l: &HalfLine) -> i8 {
    let diff = &p.position - l.height_at(&p.time);
    match diff.cmp(&Rational::zero()) {
        Ordering::Greater => 1,
        Ordering::Less => -1,
        Ordering::Equal => 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};
    use proptest::prelude::*;

    fn hl(v: Rational, t: Rational) -> HalfLine {
        HalfLine::new(v, t)
    }

    fn pt(t: Rational, y: Rational) -> SpaceTimePoint {
        SpaceTimePoint {
            time: t,
            position: y,
        }
    }

    #[test]
    fn collision_time_examples() {
        let t = virtual_collision_time(&hl(int(0), int(0)), &hl(int(1), int(3))).unwrap();
        assert_eq!(t, ExtendedTime::Finite(int(3)));
        let t = virtual_collision_time(&hl(int(1), int(0)), &hl(int(2), int(1))).unwrap();
        assert_eq!(t, ExtendedTime::Finite(int(2)));
        let t = virtual_collision_time(&hl(int(2), int(0)), &hl(int(1), int(1))).unwrap();
        assert_eq!(t, ExtendedTime::Infinity);
    }

    #[test]
    fn equal_speeds_rejected() {
        let err = virtual_collision_time(&hl(int(1), int(0)), &hl(int(1), int(4))).unwrap_err();
        assert!(matches!(err, Error::EqualSpeeds { .. }));
        assert!(collision_point(&hl(int(2), int(0)), &hl(int(2), int(1))).is_err());
    }

    #[test]
    fn collision_point_examples() {
        let p = collision_point(&hl(int(1), int(0)), &hl(int(2), int(1))).unwrap();
        assert_eq!(p, Some(pt(int(2), int(2))));
        let p = collision_point(&hl(int(2), int(0)), &hl(int(1), int(1))).unwrap();
        assert_eq!(p, None);
        let p = collision_point(&hl(int(0), int(0)), &hl(int(1), int(3))).unwrap();
        assert_eq!(p, Some(pt(int(3), int(0))));
    }

    #[test]
    fn concurrency_examples() {
        let a = hl(int(1), int(0));
        let b = hl(int(2), int(1));
        assert!(concurrent(&a, &b, &hl(int(3), ratio(4, 3))).unwrap());
        assert!(!concurrent(&a, &b, &hl(int(3), int(1))).unwrap());
        // no finite collision between the first two
        let c = hl(int(2), int(0));
        let d = hl(int(1), int(1));
        assert!(!concurrent(&c, &d, &hl(int(3), int(5))).unwrap());
    }

    #[test]
    fn concurrency_needs_the_point_on_the_half_line() {
        // (2,2) lies on the supporting line of speed 1/2 born at -2, which is
        // a legal half-line (negative birth) containing the point...
        let a = hl(int(1), int(0));
        let b = hl(int(2), int(1));
        assert!(concurrent(&a, &b, &hl(ratio(1, 2), int(-2))).unwrap());
        // ...but a line through (2,2) born after t = 2 does not contain it.
        let late = hl(int(-2), int(3));
        assert_eq!(late.height_at(&int(2)), int(2));
        assert!(!concurrent(&a, &b, &late).unwrap());
    }

    #[test]
    fn side_examples() {
        assert_eq!(side_of_line(&pt(int(2), int(2)), &hl(int(3), int(1))), -1);
        assert_eq!(side_of_line(&pt(int(2), int(2)), &hl(int(1), int(0))), 0);
        assert_eq!(side_of_line(&pt(int(2), int(5)), &hl(int(1), int(0))), 1);
    }

    #[test]
    fn extended_time_order() {
        assert!(ExtendedTime::Finite(int(1_000_000)) < ExtendedTime::Infinity);
        assert!(ExtendedTime::Finite(int(-1)) < ExtendedTime::Finite(int(0)));
    }

    fn small_rational() -> impl Strategy<Value = Rational> {
        (0i64..200, 1i64..30).prop_map(|(p, q)| ratio(p, q))
    }

    fn positive_rational() -> impl Strategy<Value = Rational> {
        (1i64..50, 1i64..20).prop_map(|(p, q)| ratio(p, q))
    }

    fn distinct_lines(k: usize) -> impl Strategy<Value = Vec<HalfLine>> {
        proptest::collection::vec((small_rational(), small_rational()), k)
            .prop_filter("distinct speeds", |v| {
                (0..v.len()).all(|i| (i + 1..v.len()).all(|j| v[i].0 != v[j].0))
            })
            .prop_map(|v| v.into_iter().map(|(s, t)| hl(s, t)).collect())
    }

    proptest! {
        #[test]
        fn collision_time_is_symmetric(lines in distinct_lines(2)) {
            prop_assert_eq!(
                virtual_collision_time(&lines[0], &lines[1]).unwrap(),
                virtual_collision_time(&lines[1], &lines[0]).unwrap()
            );
        }

        #[test]
        fn similarity_maps_points_and_signs(
            lines in distinct_lines(3),
            c in positive_rational(),
            d in positive_rational(),
        ) {
            let scale = |l: &HalfLine| hl(&l.speed * &c, &l.birth * &d);
            let scaled: Vec<_> = lines.iter().map(scale).collect();
            let p = collision_point(&lines[0], &lines[1]).unwrap();
            let q = collision_point(&scaled[0], &scaled[1]).unwrap();
            prop_assert_eq!(p.is_some(), q.is_some());
            if let (Some(p), Some(q)) = (p, q) {
                prop_assert_eq!(&q.time, &(&p.time * &d));
                prop_assert_eq!(&q.position, &(&p.position * &c * &d));
                prop_assert_eq!(side_of_line(&p, &lines[2]), side_of_line(&q, &scaled[2]));
            }
        }

        #[test]
        fn concurrency_is_permutation_invariant(lines in distinct_lines(3)) {
            let [a, b, c] = [&lines[0], &lines[1], &lines[2]];
            let base = concurrent(a, b, c).unwrap();
            for (x, y, z) in [(a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)] {
                prop_assert_eq!(concurrent(x, y, z).unwrap(), base);
            }
        }

        #[test]
        fn constructed_concurrency_is_detected(
            a in distinct_lines(2),
            v in small_rational(),
        ) {
            // Through the collision point of a[0], a[1], build a third line.
            if let Some(p) = collision_point(&a[0], &a[1]).unwrap() {
                prop_assume!(v != a[0].speed && v != a[1].speed && !v.is_zero());
                let birth = &p.time - &p.position / &v;
                let c = hl(v, birth);
                prop_assert!(concurrent(&a[0], &a[1], &c).unwrap());
                prop_assert!(concurrent(&c, &a[1], &a[0]).unwrap());
            }
        }
    }

    #[test]
    fn random_triples_are_not_concurrent() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| ratio(rng.gen_range(0..1_000_000), rng.gen_range(1..1_000_000));
        let mut checked = 0;
        while checked < 1000 {
            let lines: Vec<_> = (0..3).map(|_| hl(draw(&mut rng), draw(&mut rng))).collect();
            if lines[0].speed == lines[1].speed || lines[0].speed == lines[2].speed || lines[1].speed == lines[2].speed {
                continue;
            }
            assert!(!concurrent(&lines[0], &lines[1], &lines[2]).unwrap());
            checked += 1;
        }
    }
}
