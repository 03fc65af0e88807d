//! Verification suites. Each suite runs a list of checks, prints a table on
//! standard error and stops at the first failure.

use std::collections::BTreeMap;

use anyhow::Result;
use serde::Serialize;
use serde_json::json;

use bullets::engine::{self, realize, Configuration, Parameter, PreparedParameter};
use bullets::enumeration::{enumerate_constrained_bounded, enumerate_ff_bounded, CountTable, CrossingSet, Side};
use bullets::law::{self, q_exact, MomentMode, SurvivorDistribution};
use bullets::rational::{self, int};
use bullets::scheme::{compute_tcs_generic, survivors_from_tcs, GenericParameter};
use bullets::stochastic::{self, Acceleration, ImpetusProblem, SpeedSampler};
use bullets::{perm, rng, Error};

use crate::commands::destruction_stats;
use crate::{max_n, Cli, Output, Suite, EXIT_VERIFY};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Collected checks; `check` returns `Err(Stop)` on the first failure.
#[derive(Debug, Default)]
pub struct Report {
    pub checks: Vec<Check>,
}

#[derive(Debug)]
pub struct Stop;

impl Report {
    pub fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) -> std::result::Result<(), Stop> {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
        if passed {
            Ok(())
        } else {
            Err(Stop)
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// A suite body: `Ok(Ok(()))` ran to the end, `Ok(Err(Stop))` failed fast.
type SuiteResult = Result<std::result::Result<(), Stop>>;

/// Knobs shared by every suite.
#[derive(Debug, Clone, Copy)]
pub struct Settings {
    pub seed: u64,
    /// Largest `n` for exhaustive checks.
    pub max_n: usize,
}

impl Settings {
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        Ok(Settings {
            seed: cli.common.seed,
            max_n: max_n(&cli.common, 6)?,
        })
    }
}

pub fn run_suite(cli: &Cli, suite: Suite) -> Result<Output> {
    let settings = Settings::from_cli(cli)?;
    let mut report = Report::default();
    let order: Vec<Suite> = match suite {
        Suite::All => vec![Suite::Qn, Suite::Tcs, Suite::Lrrr, Suite::Faf, Suite::Models, Suite::Flock, Suite::Clt],
        s => vec![s],
    };
    for s in order {
        if run_one(s, &settings, &mut report)?.is_err() {
            break;
        }
    }
    let mut log = String::new();
    for c in &report.checks {
        log.push_str(&format!("  {}  {:<44} {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail));
    }
    let passed = report.passed();
    let name = serde_json::to_value(suite)?;
    let mut csv = String::from("check,passed,detail\n");
    for c in &report.checks {
        csv.push_str(&format!("{},{},\"{}\"\n", c.name, c.passed, c.detail.replace('"', "'")));
    }
    let mut o = Output::new(json!({ "suite": name, "passed": passed, "checks": report.checks }));
    o.csv = Some(csv);
    o.log = log;
    if !passed {
        o.exit_code = EXIT_VERIFY;
    }
    Ok(o)
}

pub fn run_one(suite: Suite, s: &Settings, r: &mut Report) -> SuiteResult {
    match suite {
        Suite::Qn => qn(s, r),
        Suite::Tcs => tcs(s, r),
        Suite::Lrrr => lrrr(s, r),
        Suite::Faf => faf(s, r),
        Suite::Models => models(s, r),
        Suite::Flock => flock(s, r),
        Suite::Clt => clt(s, r),
        Suite::All => unreachable!("expanded by the caller"),
    }
}

fn mass_text(d: &SurvivorDistribution) -> String {
    let parts: Vec<String> = d.mass.iter().map(|(k, p)| format!("{k}:{}", rational::format(p))).collect();
    format!("{{{}}}", parts.join(", "))
}

/// First generic parameter among seeds `seed, seed + 1000, …` whose
/// smallest speed is replaced by zero.
pub fn zero_speed_parameter(n: usize, seed: u64) -> Result<GenericParameter> {
    for attempt in 0.. {
        let p = stochastic::random_generic_parameter(n, seed + 1000 * attempt)?;
        let mut speeds = p.speeds().to_vec();
        speeds[0] = int(0);
        match GenericParameter::certify(Parameter::new(speeds, p.delays().to_vec())?) {
            Ok(g) => return Ok(g),
            Err(Error::NotGeneric { .. }) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    unreachable!()
}

/// Two random generic parameters and one with a zero minimal speed.
pub fn test_parameters(n: usize, seed: u64) -> Result<Vec<GenericParameter>> {
    Ok(vec![
        stochastic::random_generic_parameter(n, seed + 100 + n as u64)?,
        stochastic::random_generic_parameter(n, seed + 200 + n as u64)?,
        zero_speed_parameter(n, seed + 300 + n as u64)?,
    ])
}

/// `(1/n) q_{n−1}(k−1) + (1 − 1/n) q_{n−2}(k)` for every `k`.
pub fn zero_speed_mixture(n: usize) -> SurvivorDistribution {
    let nn = int(n as i64);
    let (a, b) = (q_exact(n - 1), q_exact(n - 2));
    let mass = (0..=n)
        .map(|k| {
            let first = k.checked_sub(1).map_or(int(0), |j| a.prob(j));
            (k, first / &nn + b.prob(k) * (&nn - int(1)) / &nn)
        })
        .filter(|(_, p)| p != &int(0))
        .collect();
    SurvivorDistribution { n, mass }
}

fn qn(s: &Settings, r: &mut Report) -> SuiteResult {
    let expected = [(2, "{0:1/2, 2:1/2}"), (3, "{1:5/6, 3:1/6}"), (4, "{0:3/8, 2:7/12, 4:1/24}")];
    for (n, text) in expected {
        let got = mass_text(&q_exact(n));
        if r.check(format!("q_{n} exact"), got == text, got).is_err() {
            return Ok(Err(Stop));
        }
    }
    let product_ok = (1..=100).all(|m| q_exact(2 * m).prob(0) == law::product_formula_q0(m));
    if r.check("q_2m(0) product formula, m <= 100", product_ok, "").is_err() {
        return Ok(Err(Stop));
    }
    let top = s.max_n.min(6);
    let mut witnesses: Vec<Vec<u64>> = Vec::new();
    for n in 2..=top {
        let params = test_parameters(n, s.seed)?;
        let mut tables: Vec<CountTable> = Vec::new();
        for (i, p) in params.iter().enumerate() {
            let e = enumerate_ff_bounded(p, n)?;
            let d = e.table.to_distribution(n)?;
            let label = if i == 2 { "zero speed" } else { "random" };
            if r.check(format!("enumeration = q_{n} ({label} #{i})"), d == q_exact(n), mass_text(&d)).is_err() {
                return Ok(Err(Stop));
            }
            if n == 4 {
                witnesses.push(e.survival_by_position.clone());
            }
            tables.push(e.table);
        }
        let same = tables.windows(2).all(|w| w[0].counts == w[1].counts);
        if r.check(format!("parameter invariance, n = {n}"), same, format!("{} parameters", tables.len())).is_err() {
            return Ok(Err(Stop));
        }
        if n >= 3 {
            let d = tables[2].to_distribution(n)?;
            let ok = d == zero_speed_mixture(n);
            if r.check(format!("zero-speed decomposition, n = {n}"), ok, mass_text(&d)).is_err() {
                return Ok(Err(Stop));
            }
        }
    }
    if top >= 4 {
        let differ = (0..witnesses.len()).any(|i| (i + 1..witnesses.len()).any(|j| witnesses[i] != witnesses[j]));
        if r.check("per-position survival differs, n = 4", differ, format!("{witnesses:?}")).is_err() {
            return Ok(Err(Stop));
        }
    }
    Ok(Ok(()))
}

fn tcs(s: &Settings, r: &mut Report) -> SuiteResult {
    for n in 2..=s.max_n.min(5) {
        let (mut agree, mut total, mut stuck) = (0u64, 0u64, 0u64);
        for p in test_parameters(n, s.seed)? {
            let mut failure = None;
            perm::for_each(n, |sigma| {
                perm::for_each(n - 1, |tau| {
                    if failure.is_some() {
                        return;
                    }
                    let c = Configuration {
                        sigma: sigma.to_vec(),
                        tau: tau.to_vec(),
                    };
                    total += 1;
                    let outcome = compute_tcs_generic(&p, &c).and_then(|t| {
                        let expected = engine::resolve(&realize(&p, &c)?)?.survivors;
                        Ok((survivors_from_tcs(&t), expected))
                    });
                    match outcome {
                        Ok((Ok(got), expected)) if got == expected => agree += 1,
                        Ok((Ok(_), _)) => {}
                        Ok((Err(Error::RecursionStuck { .. }), _)) => stuck += 1,
                        Ok((Err(e), _)) | Err(e) => failure = Some(e),
                    }
                })
            });
            if let Some(e) = failure {
                return Err(e.into());
            }
        }
        let detail = format!("{agree}/{total} configurations, {stuck} stuck");
        if r.check(format!("TCS survivors = engine, n = {n}"), agree == total && stuck == 0, detail).is_err() {
            return Ok(Err(Stop));
        }
    }
    Ok(Ok(()))
}

fn lrrr(s: &Settings, r: &mut Report) -> SuiteResult {
    let mut positive = 0;
    for n in 2..=s.max_n.min(6) {
        let (mut cases, mut equal) = (0, 0);
        let mut g: Vec<BTreeMap<usize, u64>> = Vec::new();
        let mut g_sides_agree = true;
        for k in 0..3 {
            let base = stochastic::random_constrained_parameter(n, s.seed + 11 + k)?;
            let h = base.intersection_height();
            for seg in [int(0), &h / int(2), h.clone()] {
                for a in CrossingSet::ALL {
                    let cp = base.with_segment(seg.clone(), a)?;
                    let left = enumerate_constrained_bounded(&cp, Side::Left, n)?;
                    let right = enumerate_constrained_bounded(&cp, Side::Right, n)?;
                    cases += 1;
                    if left.counts == right.counts {
                        equal += 1;
                    }
                    if a == CrossingSet::Positive && left.total > 0 {
                        positive += 1;
                    }
                    if seg == int(0) && a == CrossingSet::Zero {
                        g_sides_agree &= left.counts == right.counts;
                        g.push(left.counts);
                    }
                }
            }
        }
        if r.check(format!("P2 left = right, n = {n}"), equal == cases, format!("{equal}/{cases} (s, A, parameter) cases")).is_err() {
            return Ok(Err(Stop));
        }
        let constant = g.windows(2).all(|w| w[0] == w[1]);
        let detail = format!("g_{n} = {:?}", g.first().cloned().unwrap_or_default());
        if r.check(format!("P3 s = 0, A = {{0}}, n = {n}"), g_sides_agree && constant, detail).is_err() {
            return Ok(Err(Stop));
        }
    }
    if s.max_n >= 4 {
        let ok = positive > 0;
        if r.check("positive crossing counts occur", ok, format!("{positive} non-empty A = Z+ \\ {{0}} tables")).is_err() {
            return Ok(Err(Stop));
        }
    }
    Ok(Ok(()))
}

/// Monte Carlo TV and chi-square gate against `q_n`.
fn law_check(r: &mut Report, name: String, n: usize, counts: &BTreeMap<usize, u64>) -> SuiteResult {
    let cmp = stochastic::compare_empirical(counts, &q_exact(n))?;
    let ok = cmp.tv < 0.02 && cmp.p_value > 1e-3;
    Ok(r.check(name, ok, format!("TV {:.4}, p {:.4}", cmp.tv, cmp.p_value)))
}

fn faf(s: &Settings, r: &mut Report) -> SuiteResult {
    let p = stochastic::random_generic_parameter(6, s.seed + 600)?;
    for (name, acc) in [("square", Acceleration::Square), ("sqrt", Acceleration::Sqrt), ("1 - exp(-x)", Acceleration::OneMinusExp)] {
        let ip = ImpetusProblem::new(p.speeds().to_vec(), p.delays().to_vec(), acc)?;
        let mut rng = rng::stream(s.seed, 600);
        let (mut violations, mut orderings) = (0, 0);
        for _ in 0..1000 {
            let c = stochastic::random_configuration(6, &mut rng);
            let audit = stochastic::audit_faf(&ip, &c)?;
            violations += audit.violations;
            orderings += audit.orderings_checked;
        }
        let detail = format!("1000 configurations, {orderings} orderings, {violations} violations");
        if r.check(format!("FAF reduction audit, f = {name}"), violations == 0, detail).is_err() {
            return Ok(Err(Stop));
        }
    }
    let ip = ImpetusProblem::new(p.speeds().to_vec(), p.delays().to_vec(), Acceleration::Identity)?;
    let prepared = PreparedParameter::new(ip.linear());
    let (mut a, mut b) = (rng::stream(s.seed, 601), rng::stream(s.seed, 601));
    let mut same = true;
    for _ in 0..1000 {
        same &= stochastic::sample_faf(&ip, &prepared, &mut a)? == stochastic::sample_ff(&prepared, &mut b)?;
    }
    if r.check("FAF with f = id reproduces FF draws", same, "1000 seeded draws").is_err() {
        return Ok(Err(Stop));
    }
    let g = stochastic::random_generic_parameter(8, s.seed + 800)?;
    let ip = ImpetusProblem::new(g.speeds().to_vec(), g.delays().to_vec(), Acceleration::Sqrt)?;
    let prepared = PreparedParameter::new(ip.linear());
    let counts = stochastic::monte_carlo(100_000, s.seed, |rng| stochastic::sample_faf(&ip, &prepared, rng))?;
    law_check(r, "FAF law at n = 8".into(), 8, &counts)
}

/// Empirical laws of the four bullet models and the matrix model.
pub fn monte_carlo_laws(n: usize, seed: u64) -> Result<Vec<(String, BTreeMap<usize, u64>)>> {
    let samples = 100_000;
    let uniform = SpeedSampler::Uniform;
    let exponential = SpeedSampler::Exponential { rate: 1.0 };
    let g = stochastic::random_generic_parameter(n, seed)?;
    let prepared = PreparedParameter::new(&g);
    let ip = ImpetusProblem::new(g.speeds().iter().map(|v| v + int(1)).collect(), g.delays().to_vec(), Acceleration::OneMinusExp)?;
    let faf_prepared = PreparedParameter::new(ip.linear());
    Ok(vec![
        ("RU".into(), stochastic::monte_carlo(samples, seed, |r| stochastic::sample_ru(n, &uniform, r))?),
        ("RR".into(), stochastic::monte_carlo(samples, seed + 1, |r| stochastic::sample_rr(n, &uniform, &exponential, r))?),
        ("FF".into(), stochastic::monte_carlo(samples, seed + 2, |r| stochastic::sample_ff(&prepared, r))?),
        ("FAF".into(), stochastic::monte_carlo(samples, seed + 3, |r| stochastic::sample_faf(&ip, &faf_prepared, r))?),
        ("matrix".into(), stochastic::monte_carlo(samples, seed + 4, |r| stochastic::sample_matrix(n, r))?),
    ])
}

fn models(s: &Settings, r: &mut Report) -> SuiteResult {
    for n in 0..=8 {
        let mut flock = BTreeMap::new();
        let mut cycles = BTreeMap::new();
        perm::for_each(n, |p| {
            *flock.entry(stochastic::flock_run(p).final_size).or_insert(0u64) += 1;
            *cycles.entry(stochastic::odd_cycle_count(p)).or_insert(0u64) += 1;
        });
        let ok = SurvivorDistribution::from_counts(n, &flock)? == q_exact(n) && SurvivorDistribution::from_counts(n, &cycles)? == q_exact(n);
        if r.check(format!("flock and odd cycles = q_{n}"), ok, format!("{} orderings", perm::factorial(n))).is_err() {
            return Ok(Err(Stop));
        }
    }
    let bad = (0..=500).find(|&n| law::two_step_law(n) != q_exact(n));
    if r.check("two-step tree law = q_n, n <= 500", bad.is_none(), bad.map(|n| format!("first mismatch at {n}")).unwrap_or_default()).is_err() {
        return Ok(Err(Stop));
    }
    for n in [8, 10] {
        for (name, counts) in monte_carlo_laws(n, s.seed + n as u64 * 10)? {
            if law_check(r, format!("{name} law at n = {n}"), n, &counts)?.is_err() {
                return Ok(Err(Stop));
            }
        }
    }
    Ok(Ok(()))
}

fn flock(s: &Settings, r: &mut Report) -> SuiteResult {
    for x in [0.5, 0.9] {
        let (mean, se) = destruction_stats(x, 1_000_000, s.seed + 90)?;
        let expected = 1.0 / ((1.0 - x) * (1.0 - x));
        let ok = (mean - expected).abs() <= 3.0 * se;
        if r.check(format!("E T_x = 1/(1-x)^2, x = {x}"), ok, format!("mean {mean:.4} vs {expected}, SE {se:.4}")).is_err() {
            return Ok(Err(Stop));
        }
    }
    for x in [0.25, 0.5] {
        let (m1, se1) = destruction_stats(x, 200_000, s.seed + 91)?;
        let draws = stochastic::monte_carlo_values(200_000, s.seed + 92, |rng| {
            let u = rng::uniform_f64(rng);
            stochastic::flock_destruction_time(u * x, rng)
        })?;
        let len = draws.len() as f64;
        let m2 = draws.iter().map(|&t| t as f64).sum::<f64>() / len;
        let var2 = draws.iter().map(|&t| (t as f64 - m2).powi(2)).sum::<f64>() / (len - 1.0);
        let se2 = (var2 / len).sqrt();
        let gap = m1 - 1.0 - x * (m2 + m1);
        let se = ((1.0 - x).powi(2) * se1 * se1 + x * x * se2 * se2).sqrt();
        let detail = format!("E T_x - 1 - x(E T_Ux + E T_x) = {gap:.4}, SE {se:.4}");
        if r.check(format!("integral equation, x = {x}"), gap.abs() <= 3.0 * se, detail).is_err() {
            return Ok(Err(Stop));
        }
    }
    let mut rng = rng::stream(s.seed, 93);
    let speeds: Vec<f64> = (0..100_000).map(|_| rng::uniform_f64(&mut rng)).collect();
    let run = stochastic::flock_run(&speeds);
    let zeros = run.sizes.iter().enumerate().filter(|&(j, &size)| j + 1 > 10 && size == 0).count();
    if r.check("flock of 1e5 shots returns to 0 after step 10", zeros > 0, format!("{zeros} returns")).is_err() {
        return Ok(Err(Stop));
    }
    let mut rng = rng::stream(s.seed, 94);
    let mut monotone = true;
    for _ in 0..100 {
        let d = stochastic::two_step_distances(&stochastic::sample_bernoullis(1000, &mut rng));
        monotone &= (2..d.len()).all(|m| d[m] >= d[m - 2]);
    }
    if r.check("two-step D_2k and D_2k+1 non-decreasing", monotone, "100 runs of length 1000").is_err() {
        return Ok(Err(Stop));
    }
    Ok(Ok(()))
}

/// Sample mean, variance and skewness.
pub fn sample_shape(xs: &[usize]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().map(|&x| x as f64).sum::<f64>() / n;
    let m2 = xs.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|&x| (x as f64 - mean).powi(3)).sum::<f64>() / n;
    (mean, m2 * n / (n - 1.0), m3 / m2.powf(1.5))
}

fn clt(s: &Settings, r: &mut Report) -> SuiteResult {
    let big = law::q_moments(1_000_000, MomentMode::Floating)?;
    let half_log = 0.5 * (1e6f64).ln();
    let detail = format!("mean {:.4}, variance {:.4}, (1/2) ln n {:.4}", big.mean, big.variance, half_log);
    let ok = (big.mean - half_log).abs() <= 1.0 && (big.variance - half_log).abs() <= 1.5;
    if r.check("moments at n = 1e6", ok, detail).is_err() {
        return Ok(Err(Stop));
    }
    let exact = law::q_moments(2000, MomentMode::Exact)?;
    let float = law::q_moments(2000, MomentMode::Floating)?;
    let ok = (exact.mean - float.mean).abs() < 1e-9 && (exact.variance - float.variance).abs() < 1e-9;
    if r.check("floating = exact moments, n = 2000", ok, format!("{} vs {}", exact.mean, float.mean)).is_err() {
        return Ok(Err(Stop));
    }
    let n = 100_000;
    let draws = stochastic::monte_carlo_values(100_000, s.seed + 95, |rng| Ok(law::sample_two_step_fast(n, rng)))?;
    let (mean, var, skew) = sample_shape(&draws);
    let m = law::q_moments(n, MomentMode::Floating)?;
    let ok = (mean / m.mean - 1.0).abs() < 0.1 && (var / m.variance - 1.0).abs() < 0.1;
    let detail = format!("sample mean {mean:.4} vs {:.4}, variance {var:.4} vs {:.4}", m.mean, m.variance);
    if r.check("sample moments at n = 1e5 within 10%", ok, detail).is_err() {
        return Ok(Err(Stop));
    }
    let detail = format!("sample skewness {skew:.4}, exact {:.4}, gate 0.2", law::q_skewness(n));
    Ok(r.check("standardized skewness at n = 1e5 below 0.2", skew.abs() < 0.2, detail))
}
