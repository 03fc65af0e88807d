use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use bullets::engine::{self, Parameter, PreparedParameter};
use bullets::enumeration::{
    self, ConstrainedParameter, CountTable, CrossingSet, Side, CONSTRAINED_MAX_N, FF_MAX_N,
};
use bullets::law::{self, q_exact, MomentMode, EXACT_MOMENT_MAX_N};
use bullets::rational::{self, Rational};
use bullets::scheme::{self, GenericParameter, DEFAULT_PATTERN_MAX_N};
use bullets::stochastic::{self, Acceleration, ImpetusProblem, SpeedSampler};
use bullets::rng;

use crate::{max_n, usage, AccelerationArg, AltModel, Cli, CliError, Command, CrossingArg, EnumModel, Output, SimModel};

/// Default cap on `trajectory` without `--long-run`.
pub const TRAJECTORY_MAX_N: usize = 5000;

pub fn dispatch(cli: &Cli) -> Result<Output> {
    match &cli.command {
        Command::Dist { n, floating } => dist(cli, *n, *floating),
        Command::Enumerate { params, model, s, a } => enumerate(cli, params, *model, s, *a),
        Command::Simulate {
            model,
            n,
            samples,
            params,
            acceleration,
        } => simulate(cli, *model, *n, *samples, params.as_deref(), *acceleration),
        Command::Alt { model, n, samples, x } => alt(cli, *model, *n, *samples, *x),
        Command::Analyze { params } => analyze(cli, params),
        Command::Trajectory { n, params, long_run } => trajectory(cli, *n, params.as_deref(), *long_run),
        Command::Verify { suite } => crate::verify::run_suite(cli, *suite),
    }
}

/// File bytes and their SHA-256.
pub fn read_params(path: &Path) -> Result<(Vec<u8>, String)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let hash = hex::encode(Sha256::digest(&bytes));
    Ok((bytes, hash))
}

fn parse_json<'a, T: Deserialize<'a>>(bytes: &'a [u8], path: &Path) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| usage(format!("{}: {e}", path.display())))
}

pub fn load_parameter(path: &Path) -> Result<(Parameter, String)> {
    let (bytes, hash) = read_params(path)?;
    Ok((parse_json(&bytes, path)?, hash))
}

/// The pattern report printed when a parameter is not generic.
pub fn pattern_report(p: &Parameter, patterns: &[scheme::CriticalPattern]) -> Value {
    json!({
        "generic": patterns.is_empty(),
        "n": p.n(),
        "pattern_count": patterns.len(),
        "minimal_pattern_count": patterns.iter().filter(|c| c.minimal).count(),
        "patterns": patterns,
    })
}

/// Certifies `p`, turning a failure into a report that exits with code 3.
pub fn certify(p: Parameter, bound: usize, hash: Option<&str>) -> Result<GenericParameter> {
    let patterns = scheme::find_critical_patterns_bounded(&p, bound)?;
    if patterns.is_empty() {
        Ok(GenericParameter::certify_bounded(p, bound)?)
    } else {
        Err(CliError::Singular {
            message: format!("parameter is not generic: {} critical pattern(s)", patterns.len()),
            report: Some(pattern_report(&p, &patterns)),
            parameter_hash: hash.map(str::to_string),
        }
        .into())
    }
}

fn mass_csv(mass: &BTreeMap<usize, String>, header: &str) -> String {
    let mut csv = format!("k,{header}\n");
    for (k, v) in mass {
        csv.push_str(&format!("{k},{v}\n"));
    }
    csv
}

fn dist(cli: &Cli, n: usize, floating: bool) -> Result<Output> {
    if floating {
        let m = law::q_moments(n, MomentMode::Floating)?;
        let skewness = law::q_skewness(n);
        let result = json!({
            "n": n,
            "floating": true,
            "mean": m.mean,
            "variance": m.variance,
            "skewness": skewness,
        });
        let csv = format!("statistic,value\nmean,{}\nvariance,{}\nskewness,{}\n", m.mean, m.variance, skewness);
        let mut o = Output::new(result);
        o.csv = Some(csv);
        return Ok(o);
    }
    let bound = max_n(&cli.common, EXACT_MOMENT_MAX_N)?;
    if n > bound {
        return Err(usage(format!("exact law limited to n <= {bound}; use --floating or raise --max-n")));
    }
    let q = q_exact(n);
    let mass: BTreeMap<usize, String> = q.mass.iter().map(|(k, p)| (*k, rational::format(p))).collect();
    let result = json!({
        "n": n,
        "floating": false,
        "mass": mass,
        "mean": rational::format(&q.mean()),
        "variance": rational::format(&q.variance()),
    });
    let mut o = Output::new(result);
    o.csv = Some(mass_csv(&mass, "probability"));
    Ok(o)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstrained {
    #[serde(with = "rational::text_vec")]
    free_speeds: Vec<Rational>,
    #[serde(with = "rational::text")]
    v_min: Rational,
    #[serde(with = "rational::text")]
    v_r: Rational,
    #[serde(with = "rational::text_vec")]
    free_delays: Vec<Rational>,
    #[serde(with = "rational::text")]
    delta_star: Rational,
}

/// Reads either the constrained schema or a plain parameter file.
fn load_constrained(path: &Path, a: CrossingSet) -> Result<(ConstrainedParameter, String)> {
    let (bytes, hash) = read_params(path)?;
    let value: Value = parse_json(&bytes, path)?;
    let cp = if value.get("v_min").is_some() {
        let raw: RawConstrained = parse_json(&bytes, path)?;
        ConstrainedParameter::new(
            raw.free_speeds,
            raw.v_min,
            raw.v_r,
            raw.free_delays,
            raw.delta_star,
            Rational::from_integer(0.into()),
            a,
        )?
    } else {
        let p: Parameter = parse_json(&bytes, path)?;
        ConstrainedParameter::from_parameter(&p, Rational::from_integer(0.into()), a)?
    };
    Ok((cp, hash))
}

pub fn parse_segment(text: &str, h: &Rational) -> Result<Rational> {
    match text.trim() {
        "H" => Ok(h.clone()),
        "H/2" => Ok(h / rational::int(2)),
        other => rational::parse(other).map_err(|_| usage(format!("--s: expected a rational, H or H/2, got {other:?}"))),
    }
}

fn crossing_set(a: CrossingArg) -> CrossingSet {
    match a {
        CrossingArg::Zero => CrossingSet::Zero,
        CrossingArg::All => CrossingSet::All,
        CrossingArg::Pos => CrossingSet::Positive,
    }
}

fn table_json(table: &CountTable, n: usize) -> Result<Value> {
    let dist = if table.total > 0 {
        let d = table.to_distribution(n)?;
        Value::Object(d.mass.iter().map(|(k, p)| (k.to_string(), Value::String(rational::format(p)))).collect())
    } else {
        Value::Null
    };
    Ok(json!({
        "counts": table.counts,
        "total": table.total,
        "chunks": table.chunks,
        "distribution": dist,
    }))
}

fn counts_csv(table: &CountTable) -> String {
    let mut csv = String::from("k,count\n");
    for (k, c) in &table.counts {
        csv.push_str(&format!("{k},{c}\n"));
    }
    csv
}

fn enumerate(cli: &Cli, params: &Path, model: EnumModel, s: &str, a: CrossingArg) -> Result<Output> {
    match model {
        EnumModel::Ff => {
            let (p, hash) = load_parameter(params)?;
            let bound = max_n(&cli.common, FF_MAX_N)?;
            if p.n() > bound {
                return Err(usage(format!("exhaustive enumeration limited to n <= {bound}; raise --max-n")));
            }
            let g = certify(p, bound.max(DEFAULT_PATTERN_MAX_N), Some(&hash))?;
            let e = enumeration::enumerate_ff_bounded(&g, bound)?;
            let mut result = json!({ "model": "ff", "n": g.n(), "parameter_hash": hash });
            merge(&mut result, table_json(&e.table, g.n())?);
            result["survival_by_position"] = json!(e.survival_by_position);
            let mut o = Output::new(result);
            o.csv = Some(counts_csv(&e.table));
            o.parameter_hash = Some(hash);
            Ok(o)
        }
        EnumModel::Lr | EnumModel::Rr => {
            let (base, hash) = load_constrained(params, crossing_set(a))?;
            let bound = max_n(&cli.common, CONSTRAINED_MAX_N)?;
            if base.n() > bound {
                return Err(usage(format!("exhaustive enumeration limited to n <= {bound}; raise --max-n")));
            }
            let h = base.intersection_height();
            let cp = base.with_segment(parse_segment(s, &h)?, crossing_set(a))?;
            let full = cp.parameter()?;
            certify(full, bound.max(DEFAULT_PATTERN_MAX_N), Some(&hash))?;
            let side = if model == EnumModel::Lr { Side::Left } else { Side::Right };
            let table = enumeration::enumerate_constrained_bounded(&cp, side, bound)?;
            let mut result = json!({
                "model": if side == Side::Left { "lr" } else { "rr" },
                "n": cp.n(),
                "parameter_hash": hash,
                "h": rational::format(&h),
                "s": rational::format(&cp.s),
                "a": cp.a,
            });
            merge(&mut result, table_json(&table, cp.n() - 1)?);
            let mut o = Output::new(result);
            o.csv = Some(counts_csv(&table));
            o.parameter_hash = Some(hash);
            Ok(o)
        }
    }
}

fn merge(into: &mut Value, from: Value) {
    if let (Value::Object(a), Value::Object(b)) = (into, from) {
        a.extend(b);
    }
}

fn acceleration(a: AccelerationArg) -> Acceleration {
    match a {
        AccelerationArg::Identity => Acceleration::Identity,
        AccelerationArg::Square => Acceleration::Square,
        AccelerationArg::Sqrt => Acceleration::Sqrt,
        AccelerationArg::OneMinusExp => Acceleration::OneMinusExp,
    }
}

/// Monte Carlo payload shared by `simulate` and `alt`.
pub fn sample_payload(model: &str, n: usize, samples: u64, seed: u64, counts: &BTreeMap<usize, u64>) -> Result<Output> {
    let cmp = stochastic::compare_empirical(counts, &q_exact(n))?;
    let result = json!({
        "model": model,
        "n": n,
        "samples": samples,
        "seed": seed,
        "floating": true,
        "counts": counts,
        "tv_vs_qn": cmp.tv,
        "chi_square": cmp.chi_square,
        "dof": cmp.dof,
        "p_value": cmp.p_value,
    });
    let mut csv = String::from("k,count\n");
    for (k, c) in counts {
        csv.push_str(&format!("{k},{c}\n"));
    }
    let mut o = Output::new(result);
    o.csv = Some(csv);
    Ok(o)
}

fn fixed_parameter(cli: &Cli, n: usize, params: Option<&Path>) -> Result<(GenericParameter, Option<String>)> {
    match params {
        Some(path) => {
            let (p, hash) = load_parameter(path)?;
            if p.n() != n {
                return Err(usage(format!("--n {n} but the parameter file has {} speeds", p.n())));
            }
            Ok((certify(p, max_n(&cli.common, DEFAULT_PATTERN_MAX_N)?.max(n), Some(&hash))?, Some(hash)))
        }
        None => Ok((stochastic::random_generic_parameter(n, cli.common.seed)?, None)),
    }
}

fn simulate(cli: &Cli, model: SimModel, n: usize, samples: u64, params: Option<&Path>, acc: AccelerationArg) -> Result<Output> {
    if samples == 0 {
        return Err(usage("--samples must be positive"));
    }
    let seed = cli.common.seed;
    let uniform = SpeedSampler::Uniform;
    let exponential = SpeedSampler::Exponential { rate: 1.0 };
    let (counts, hash, parameter) = match model {
        SimModel::Ru => (stochastic::monte_carlo(samples, seed, |r| stochastic::sample_ru(n, &uniform, r))?, None, None),
        SimModel::Rr => (
            stochastic::monte_carlo(samples, seed, |r| stochastic::sample_rr(n, &uniform, &exponential, r))?,
            None,
            None,
        ),
        SimModel::Ff => {
            let (g, hash) = fixed_parameter(cli, n, params)?;
            let prepared = PreparedParameter::new(&g);
            let counts = stochastic::monte_carlo(samples, seed, |r| stochastic::sample_ff(&prepared, r))?;
            (counts, hash, Some(serde_json::to_value(g.get())?))
        }
        SimModel::Faf => {
            let (g, hash) = fixed_parameter(cli, n, params)?;
            let p = g.into_inner();
            let ip = ImpetusProblem::new(p.speeds().to_vec(), p.delays().to_vec(), acceleration(acc))?;
            let prepared = PreparedParameter::new(ip.linear());
            let counts = stochastic::monte_carlo(samples, seed, |r| stochastic::sample_faf(&ip, &prepared, r))?;
            (counts, hash, Some(serde_json::to_value(&p)?))
        }
    };
    let name = serde_json::to_value(model)?.as_str().unwrap_or_default().to_string();
    let mut o = sample_payload(&name, n, samples, seed, &counts)?;
    if let Some(p) = parameter {
        o.result["parameter"] = p;
    }
    if model == SimModel::Faf {
        o.result["acceleration"] = serde_json::to_value(acc)?;
    }
    o.parameter_hash = hash;
    Ok(o)
}

/// Mean and standard error of the destruction time at `x`.
pub fn destruction_stats(x: f64, samples: u64, seed: u64) -> Result<(f64, f64)> {
    let draws = stochastic::monte_carlo_values(samples, seed, |r| stochastic::flock_destruction_time(x, r))?;
    let len = draws.len() as f64;
    let mean = draws.iter().map(|&t| t as f64).sum::<f64>() / len;
    let var = draws.iter().map(|&t| (t as f64 - mean).powi(2)).sum::<f64>() / (len - 1.0);
    Ok((mean, (var / len).sqrt()))
}

fn alt(cli: &Cli, model: AltModel, n: usize, samples: u64, x: f64) -> Result<Output> {
    if samples == 0 {
        return Err(usage("--samples must be positive"));
    }
    let seed = cli.common.seed;
    let counts = match model {
        AltModel::Destruction => {
            if !(0.0..1.0).contains(&x) {
                return Err(usage("--x must lie in [0, 1)"));
            }
            let (mean, se) = destruction_stats(x, samples, seed)?;
            let expected = 1.0 / ((1.0 - x) * (1.0 - x));
            let result = json!({
                "model": "destruction",
                "x": x,
                "samples": samples,
                "seed": seed,
                "floating": true,
                "mean": mean,
                "standard_error": se,
                "expected": expected,
                "z_score": (mean - expected) / se,
            });
            let mut o = Output::new(result);
            o.csv = Some(format!("x,samples,mean,standard_error,expected\n{x},{samples},{mean},{se},{expected}\n"));
            return Ok(o);
        }
        AltModel::Flock => stochastic::monte_carlo(samples, seed, |r| {
            let speeds: Vec<f64> = (0..n).map(|_| rng::uniform_f64(r)).collect();
            Ok(stochastic::flock_run(&speeds).final_size)
        })?,
        AltModel::Cycles => stochastic::monte_carlo(samples, seed, |r| {
            use rand::seq::SliceRandom;
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(r);
            Ok(stochastic::odd_cycle_count(&p))
        })?,
        AltModel::Matrix => stochastic::monte_carlo(samples, seed, |r| stochastic::sample_matrix(n, r))?,
        AltModel::TwoStep => stochastic::monte_carlo(samples, seed, |r| {
            Ok(stochastic::two_step_distance(&stochastic::sample_bernoullis(n, r)))
        })?,
        AltModel::Markov => stochastic::monte_carlo(samples, seed, |r| Ok(law::sample_markov(n, r)))?,
    };
    let name = serde_json::to_value(model)?.as_str().unwrap_or_default().to_string();
    sample_payload(&name, n, samples, seed, &counts)
}

fn analyze(cli: &Cli, params: &Path) -> Result<Output> {
    let (p, hash) = load_parameter(params)?;
    let bound = max_n(&cli.common, DEFAULT_PATTERN_MAX_N)?;
    let patterns = scheme::find_critical_patterns_bounded(&p, bound)?;
    let mut result = pattern_report(&p, &patterns);
    result["parameter_hash"] = json!(hash);
    let mut o = Output::new(result);
    o.parameter_hash = Some(hash);
    Ok(o)
}

#[derive(Deserialize)]
struct RawStream {
    #[serde(with = "rational::text_vec")]
    speeds: Vec<Rational>,
    #[serde(with = "rational::text_vec")]
    delays: Vec<Rational>,
}

fn trajectory(cli: &Cli, n: usize, params: Option<&Path>, long_run: bool) -> Result<Output> {
    let cap = if long_run { usize::MAX } else { cli.common.max_n.unwrap_or(TRAJECTORY_MAX_N) };
    if n > cap {
        return Err(usage(format!("trajectory limited to n <= {cap}; pass --long-run")));
    }
    let (speeds, delays, hash) = match params {
        Some(path) => {
            let (bytes, hash) = read_params(path)?;
            let raw: RawStream = parse_json(&bytes, path)?;
            (raw.speeds, raw.delays, Some(hash))
        }
        None => {
            let mut r = rng::stream(cli.common.seed, 0);
            let speeds = SpeedSampler::Uniform.draw_distinct(n, &mut r)?;
            (speeds, vec![rational::int(1); n.saturating_sub(1)], None)
        }
    };
    let sizes = engine::survivor_trajectory(&speeds, &delays, n)?;
    let mut csv = String::from("j,size\n");
    for (j, s) in sizes.iter().enumerate() {
        csv.push_str(&format!("{},{s}\n", j + 1));
    }
    let mut o = Output::new(json!({ "n": n, "sizes": sizes }));
    o.csv = Some(csv);
    o.parameter_hash = hash;
    Ok(o)
}
