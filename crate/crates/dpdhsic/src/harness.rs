//! Monte Carlo size and power estimation over a one-parameter grid, with
//! results persisted to CSV after every grid point.
//!
//! Replicate `r` of grid point `i` draws its data from stream
//! `replicate_stream(i, r)` of the experiment seed, and each test uses the
//! same stream of a seed derived from the test's fixed tag. All tests at a
//! replicate therefore see the same data, and a row depends only on the
//! seed, the grid point and the test.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use dpdhsic_core::math::wilson_interval;
use dpdhsic_core::rng::{replicate_stream, stream_rng};
use dpdhsic_core::{PrivacyParams, TestConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{AppError, AppResult, ParseError};
use crate::generators::GeneratorSpec;
use crate::methods::{Bandwidth, TestKind};

/// Column order of the results CSV.
pub const CSV_HEADER: [&str; 14] = [
    "param_name",
    "param_value",
    "test",
    "n",
    "d",
    "epsilon",
    "delta",
    "alpha",
    "B",
    "reps",
    "reject_rate",
    "ci_lo",
    "ci_hi",
    "seconds",
];

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridParam {
    N,
    Epsilon,
    D,
    Rho,
    Sigma,
}

impl GridParam {
    pub fn name(self) -> &'static str {
        match self {
            GridParam::N => "n",
            GridParam::Epsilon => "epsilon",
            GridParam::D => "d",
            GridParam::Rho => "rho",
            GridParam::Sigma => "sigma",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub param: GridParam,
    pub values: Vec<f64>,
}

fn default_alpha() -> f64 {
    0.05
}

fn default_resamples() -> usize {
    200
}

fn default_epsilon() -> f64 {
    1.0
}

/// One Monte Carlo experiment: a generator, the tests to run on every
/// replicate, and the grid parameter that varies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub generator: GeneratorSpec,
    pub tests: Vec<TestKind>,
    pub grid: Grid,
    pub replications: usize,
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(rename = "B", default = "default_resamples")]
    pub resamples: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub bandwidth: Bandwidth,
    /// Write wall-clock seconds per grid point; when false the column is 0
    /// so reruns produce byte-identical files.
    #[serde(default)]
    pub record_time: bool,
}

/// Fully resolved settings of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSpec {
    pub generator: GeneratorSpec,
    pub privacy: PrivacyParams,
}

const TOP_KEYS: &[&str] = &[
    "generator",
    "tests",
    "grid",
    "replications",
    "seed",
    "alpha",
    "B",
    "epsilon",
    "delta",
    "bandwidth",
    "record_time",
];
const TOP_REQUIRED: &[&str] = &["generator", "tests", "grid", "replications", "seed"];

fn generator_keys(kind: &str) -> Option<(&'static [&'static str], &'static [&'static str])> {
    Some(match kind {
        "null-gaussian" => (&["kind", "n", "d"], &["n", "d"]),
        "product-dependence" => (&["kind", "n", "sigma"], &["n", "sigma"]),
        "toeplitz" => (&["kind", "n", "d", "rho", "groups"], &["n", "d", "rho"]),
        "sem-chain" => (&["kind", "n", "d", "sigma"], &["n", "d"]),
        _ => return None,
    })
}

fn escape(key: &str) -> String {
    key.replace('~', "~0").replace('/', "~1")
}

fn object<'a>(v: &'a Value, at: &str) -> AppResult<&'a serde_json::Map<String, Value>> {
    v.as_object()
        .ok_or_else(|| AppError::config(at, "expected a JSON object"))
}

fn check_object(map: &serde_json::Map<String, Value>, at: &str, allowed: &[&str], required: &[&str]) -> AppResult<()> {
    if let Some(key) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(AppError::config(
            format!("{at}/{}", escape(key)),
            format!("unknown key `{key}`; allowed keys are {}", allowed.join(", ")),
        ));
    }
    if let Some(key) = required.iter().find(|k| !map.contains_key(**k)) {
        return Err(AppError::config(
            format!("{at}/{key}"),
            format!("missing required key `{key}`"),
        ));
    }
    Ok(())
}

/// Rejects unknown or missing keys anywhere in the document, naming the
/// offending key by JSON pointer.
fn check_keys(doc: &Value) -> AppResult<()> {
    let top = object(doc, "")?;
    check_object(top, "", TOP_KEYS, TOP_REQUIRED)?;
    let gen = object(&top["generator"], "/generator")?;
    let kind = gen
        .get("kind")
        .ok_or_else(|| AppError::config("/generator/kind", "missing required key `kind`"))?;
    let kind = kind
        .as_str()
        .ok_or_else(|| AppError::config("/generator/kind", "expected a string"))?;
    let (allowed, required) = generator_keys(kind).ok_or_else(|| {
        AppError::config(
            "/generator/kind",
            format!("unknown generator `{kind}`; expected null-gaussian, product-dependence, toeplitz or sem-chain"),
        )
    })?;
    check_object(gen, "/generator", allowed, required)?;
    let grid = object(&top["grid"], "/grid")?;
    check_object(grid, "/grid", &["param", "values"], &["param", "values"])
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    path.iter()
        .filter_map(|seg| match seg {
            Segment::Seq { index } => Some(format!("/{index}")),
            Segment::Map { key } => Some(format!("/{}", escape(key))),
            Segment::Enum { .. } | Segment::Unknown => None,
        })
        .collect()
}

/// Parses and validates an experiment description.
pub fn parse_spec(text: &str) -> AppResult<ExperimentSpec> {
    let doc: Value = serde_json::from_str(text).map_err(|e| AppError::config("", format!("malformed JSON: {e}")))?;
    check_keys(&doc)?;
    let mut de = serde_json::Deserializer::from_str(text);
    let spec: ExperimentSpec = serde_path_to_error::deserialize(&mut de)
        .map_err(|e| AppError::config(pointer_of(e.path()), e.inner().to_string()))?;
    spec.validate()?;
    Ok(spec)
}

pub fn read_spec_file(path: &Path) -> AppResult<ExperimentSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    parse_spec(&text)
}

fn whole(v: f64, at: &str, min: usize) -> AppResult<usize> {
    if v.fract() == 0.0 && v >= min as f64 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(AppError::config(at, format!("{v} is not an integer >= {min}")))
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> AppResult<()> {
        if self.replications == 0 {
            return Err(AppError::config("/replications", "replications must be at least 1"));
        }
        if self.grid.values.is_empty() {
            return Err(AppError::config("/grid/values", "the grid is empty"));
        }
        if self.tests.is_empty() {
            return Err(AppError::config("/tests", "no tests listed"));
        }
        let mut seen = HashSet::new();
        for (i, t) in self.tests.iter().enumerate() {
            if !seen.insert(*t) {
                return Err(AppError::config(
                    format!("/tests/{i}"),
                    format!("`{t}` is listed twice"),
                ));
            }
        }
        TestConfig::new(self.alpha, self.resamples, self.seed)
            .map_err(|e| AppError::config("/alpha", e.to_string()))?;
        if !(self.delta >= 0.0 && self.delta < 1.0) {
            return Err(AppError::config("/delta", "delta must lie in [0, 1)"));
        }
        let applies = match self.grid.param {
            GridParam::N | GridParam::Epsilon => true,
            GridParam::D => !matches!(self.generator, GeneratorSpec::ProductDependence { .. }),
            GridParam::Rho => matches!(self.generator, GeneratorSpec::Toeplitz { .. }),
            GridParam::Sigma => matches!(
                self.generator,
                GeneratorSpec::ProductDependence { .. } | GeneratorSpec::SemChain { .. }
            ),
        };
        if !applies {
            return Err(AppError::config(
                "/grid/param",
                format!(
                    "the {} generator has no parameter `{}`",
                    self.generator.kind(),
                    self.grid.param.name()
                ),
            ));
        }
        for i in 0..self.grid.values.len() {
            self.point(i)?;
        }
        Ok(())
    }

    /// Settings at grid index `index`.
    pub fn point(&self, index: usize) -> AppResult<PointSpec> {
        let at = format!("/grid/values/{index}");
        let value = *self
            .grid
            .values
            .get(index)
            .ok_or_else(|| AppError::config("/grid/values", format!("no grid point {index}")))?;
        let mut generator = self.generator.clone();
        let mut epsilon = self.epsilon;
        match (self.grid.param, &mut generator) {
            (GridParam::Epsilon, _) => epsilon = value,
            (GridParam::N, g) => {
                let v = whole(value, &at, 2)?;
                match g {
                    GeneratorSpec::NullGaussian { n, .. }
                    | GeneratorSpec::ProductDependence { n, .. }
                    | GeneratorSpec::Toeplitz { n, .. }
                    | GeneratorSpec::SemChain { n, .. } => *n = v,
                }
            }
            (GridParam::D, GeneratorSpec::NullGaussian { d, .. })
            | (GridParam::D, GeneratorSpec::Toeplitz { d, .. })
            | (GridParam::D, GeneratorSpec::SemChain { d, .. }) => *d = whole(value, &at, 2)?,
            (GridParam::Rho, GeneratorSpec::Toeplitz { rho, .. }) => *rho = value,
            (GridParam::Sigma, GeneratorSpec::ProductDependence { sigma, .. })
            | (GridParam::Sigma, GeneratorSpec::SemChain { sigma, .. }) => *sigma = value,
            _ => {
                return Err(AppError::config(
                    "/grid/param",
                    format!(
                        "the {} generator has no parameter `{}`",
                        generator.kind(),
                        self.grid.param.name()
                    ),
                ))
            }
        }
        if let Err((field, msg)) = generator.validate() {
            let ptr = if field == self.grid.param.name() {
                at.clone()
            } else {
                format!("/generator/{field}")
            };
            return Err(AppError::config(ptr, msg));
        }
        let privacy = PrivacyParams::new(epsilon, self.delta).map_err(|e| {
            let ptr = if self.grid.param == GridParam::Epsilon {
                at.clone()
            } else {
                "/epsilon".into()
            };
            AppError::config(ptr, e.to_string())
        })?;
        Ok(PointSpec { generator, privacy })
    }
}

/// One cell of a size or power table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub param_name: String,
    pub param_value: f64,
    pub test: String,
    pub n: usize,
    pub d: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub alpha: f64,
    #[serde(rename = "B")]
    pub resamples: usize,
    pub reps: usize,
    pub reject_rate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub seconds: f64,
}

impl ResultRow {
    fn key(&self) -> (&str, u64, &str) {
        (&self.param_name, self.param_value.to_bits(), &self.test)
    }
}

/// Rejections out of a number of independent replicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RateEstimate {
    pub rejections: usize,
    pub reps: usize,
}

impl RateEstimate {
    pub fn rate(&self) -> f64 {
        self.rejections as f64 / self.reps as f64
    }

    /// Wilson 95% interval, widened if needed to contain the rate.
    pub fn wilson95(&self) -> (f64, f64) {
        let (lo, hi) = wilson_interval(self.rejections, self.reps, Z95);
        (lo.min(self.rate()).max(0.0), hi.max(self.rate()).min(1.0))
    }

    /// Binomial standard error at the estimated rate.
    pub fn standard_error(&self) -> f64 {
        let p = self.rate();
        (p * (1.0 - p) / self.reps as f64).sqrt()
    }
}

/// Runs `trial(rep)` for `rep in 0..reps` in parallel and counts
/// rejections for each of `k` procedures. The first failed replicate
/// aborts the estimate.
pub fn estimate_rejection_rates<E, F>(reps: usize, k: usize, trial: F) -> Result<Vec<RateEstimate>, E>
where
    E: Send,
    F: Fn(u32) -> Result<Vec<bool>, E> + Sync,
{
    let outcomes: Vec<Vec<bool>> = (0..reps as u32).into_par_iter().map(&trial).collect::<Result<_, E>>()?;
    Ok((0..k)
        .map(|t| RateEstimate {
            rejections: outcomes.iter().filter(|o| o[t]).count(),
            reps,
        })
        .collect())
}

/// Single-procedure form of [`estimate_rejection_rates`].
pub fn estimate_rejection_rate<E, F>(reps: usize, trial: F) -> Result<RateEstimate, E>
where
    E: Send,
    F: Fn(u32) -> Result<bool, E> + Sync,
{
    let est = estimate_rejection_rates(reps, 1, |r| trial(r).map(|b| vec![b]))?;
    Ok(est[0])
}

/// Seed of the random stream family used by `test`.
pub fn test_seed(seed: u64, test: TestKind) -> u64 {
    seed.wrapping_add(test.stream_tag().wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Rejection rates of `tests` at grid index `index`.
pub fn run_point(spec: &ExperimentSpec, index: usize, tests: &[TestKind]) -> AppResult<Vec<ResultRow>> {
    let point = spec.point(index)?;
    let config = TestConfig::new(spec.alpha, spec.resamples, spec.seed)?;
    let start = Instant::now();
    let estimates = estimate_rejection_rates(spec.replications, tests.len(), |rep| {
        let stream = replicate_stream(index as u32, rep);
        let data = point.generator.generate(&mut stream_rng(spec.seed, stream))?;
        let specs = spec.bandwidth.specs(&data)?;
        tests
            .iter()
            .map(|&t| {
                let mut rng = stream_rng(test_seed(spec.seed, t), stream);
                Ok(t.run(&data, &specs, &point.privacy, &config, &mut rng)?.reject)
            })
            .collect::<dpdhsic_core::Result<Vec<bool>>>()
    })?;
    let seconds = if spec.record_time {
        start.elapsed().as_secs_f64()
    } else {
        0.0
    };
    Ok(tests
        .iter()
        .zip(estimates)
        .map(|(t, est)| {
            let (ci_lo, ci_hi) = est.wilson95();
            ResultRow {
                param_name: spec.grid.param.name().to_string(),
                param_value: spec.grid.values[index],
                test: t.name().to_string(),
                n: point.generator.n(),
                d: point.generator.d(),
                epsilon: point.privacy.epsilon(),
                delta: point.privacy.delta(),
                alpha: spec.alpha,
                resamples: spec.resamples,
                reps: spec.replications,
                reject_rate: est.rate(),
                ci_lo,
                ci_hi,
                seconds,
            }
        })
        .collect())
}

/// Rows in grid-then-test order, followed by rows the spec does not
/// describe, in their original order.
fn ordered(spec: &ExperimentSpec, rows: Vec<ResultRow>) -> Vec<ResultRow> {
    let mut slots: Vec<Option<ResultRow>> = rows.into_iter().map(Some).collect();
    let mut out = Vec::with_capacity(slots.len());
    for &value in &spec.grid.values {
        for t in &spec.tests {
            let key = (spec.grid.param.name(), value.to_bits(), t.name());
            if let Some(slot) = slots.iter_mut().find(|s| s.as_ref().is_some_and(|r| r.key() == key)) {
                out.push(slot.take().expect("slot is filled"));
            }
        }
    }
    out.extend(slots.into_iter().flatten());
    out
}

/// Runs every grid point, rewriting `out` after each one. Grid points
/// whose rows are all present in an existing `out` are skipped, so an
/// interrupted run can be resumed. `on_row` sees each newly computed row.
pub fn run_experiment(
    spec: &ExperimentSpec,
    out: &Path,
    mut on_row: impl FnMut(&ResultRow),
) -> AppResult<Vec<ResultRow>> {
    spec.validate()?;
    let mut rows = if out.exists() {
        read_results_csv(out)?
    } else {
        Vec::new()
    };
    for (index, &value) in spec.grid.values.iter().enumerate() {
        let point = spec.point(index)?;
        let name = spec.grid.param.name();
        let mut missing = Vec::new();
        for &t in &spec.tests {
            match rows.iter().find(|r| r.key() == (name, value.to_bits(), t.name())) {
                None => missing.push(t),
                Some(r) => {
                    let same = r.n == point.generator.n()
                        && r.d == point.generator.d()
                        && r.epsilon == point.privacy.epsilon()
                        && r.delta == point.privacy.delta()
                        && r.alpha == spec.alpha
                        && r.resamples == spec.resamples
                        && r.reps == spec.replications;
                    if !same {
                        return Err(AppError::config(
                            "",
                            format!(
                                "{} already holds a {t} row for {name} = {value} from a different configuration",
                                out.display()
                            ),
                        ));
                    }
                }
            }
        }
        if missing.is_empty() {
            continue;
        }
        let fresh = run_point(spec, index, &missing)?;
        fresh.iter().for_each(&mut on_row);
        rows.extend(fresh);
        rows = ordered(spec, rows);
        write_results_csv(&rows, out)?;
    }
    Ok(ordered(spec, rows))
}

pub fn write_results<W: Write>(rows: &[ResultRow], writer: W) -> csv::Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    wtr.write_record(CSV_HEADER)?;
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes to a temporary sibling, then renames it over `path`.
pub fn write_results_csv(rows: &[ResultRow], path: &Path) -> AppResult<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    let file = std::fs::File::create(&tmp).map_err(|e| AppError::io(&tmp, e))?;
    write_results(rows, std::io::BufWriter::new(file)).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => AppError::io(&tmp, io),
        other => AppError::Usage(format!("cannot serialize results: {other:?}")),
    })?;
    std::fs::rename(&tmp, path).map_err(|e| AppError::io(path, e))
}

pub fn read_results<R: Read>(reader: R) -> Result<Vec<ResultRow>, ParseError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| ParseError::new(1, e.to_string()))?.clone();
    let names: Vec<&str> = header.iter().collect();
    if let Some(missing) = CSV_HEADER.iter().find(|c| !names.contains(c)) {
        return Err(ParseError::new(1, format!("missing column `{missing}`")));
    }
    if names != CSV_HEADER {
        return Err(ParseError::new(
            1,
            format!("expected header `{}`", CSV_HEADER.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| ParseError::new(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let row: ResultRow = record
            .deserialize(Some(&header))
            .map_err(|e| ParseError::new(line, e.to_string()))?;
        if !(row.ci_lo <= row.reject_rate && row.reject_rate <= row.ci_hi) {
            return Err(ParseError::new(line, "reject_rate lies outside [ci_lo, ci_hi]"));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_results_csv(path: &Path) -> AppResult<Vec<ResultRow>> {
    let file = std::fs::File::open(path).map_err(|e| AppError::io(path, e))?;
    read_results(std::io::BufReader::new(file)).map_err(|e| AppError::parse(path, e))
}
