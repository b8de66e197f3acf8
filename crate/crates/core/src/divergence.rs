//! Divergence of triples and the divergence function of a ball.
//!
//! For `r = d(c, {a, b}) > 0` and `ρ = δr - γ`, `div(a, b, c)` is the length
//! of a shortest `a`–`b` path with no vertex `v` satisfying `d(c, v) ≤ ρ`.
//! When `ρ ≤ 0` nothing is removed.
//!
//! `Div(n)` is estimated as a maximum over an admissible triple set, so the
//! result is always a lower bound on the supremum at ball scale.
//!
//! Admissible triples keep `d(a, b) ≤ n_max` and
//! `r ≤ r_cut = ⌊(n_max/2 - γ)/(1 - δ)⌋`. Beyond `r_cut` every geodesic from
//! `a` to `b` already avoids the removed ball (each of its vertices is within
//! `d(a,b)/2` of an endpoint), so those triples contribute exactly `d(a, b)`.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::floyd::{FloydError, FloydFunction, DEFAULT_MARGIN};
use crate::graph::{BfsScratch, GraphBall, UNREACHED};

pub const DEFAULT_EXHAUSTIVE_CAP: usize = 400;
pub const DEFAULT_SAMPLES: usize = 2000;

#[derive(Debug, Error, PartialEq)]
pub enum DivergenceError {
    #[error("divergence parameters need 0 < δ < 1 and γ ≥ 0, got δ = {delta}, γ = {gamma}")]
    InvalidParams { delta: f64, gamma: f64 },
    #[error("d(c, {{a, b}}) must be positive")]
    PreconditionViolated,
    #[error("vertex {0} not in the ball")]
    VertexOutOfRange(usize),
    #[error("n_max = {n_max} needs a ball of radius ≥ {needed} under margin {margin} (radius is {radius})")]
    MarginViolated { n_max: u32, radius: u32, margin: f64, needed: u32 },
    #[error("growth fit needs at least 4 finite positive samples, got {0}")]
    InsufficientData(usize),
    #[error("samples do not cover D({0})")]
    RangeMismatch(u32),
    #[error(transparent)]
    Floyd(#[from] FloydError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DivergenceParams {
    pub delta: f64,
    pub gamma: f64,
}

impl DivergenceParams {
    pub fn new(delta: f64, gamma: f64) -> Result<Self, DivergenceError> {
        if !(delta > 0.0 && delta < 1.0 && gamma >= 0.0 && gamma.is_finite()) {
            return Err(DivergenceError::InvalidParams { delta, gamma });
        }
        Ok(DivergenceParams { delta, gamma })
    }

    pub fn forbidden_radius(&self, r: u32) -> f64 {
        self.delta * r as f64 - self.gamma
    }

    /// Largest `r` at which a geodesic between points within `n` of each
    /// other can meet the removed ball.
    pub fn relevant_radius(&self, n: u32) -> u32 {
        let bound = (n as f64 / 2.0 - self.gamma) / (1.0 - self.delta);
        if bound < 1.0 {
            1
        } else {
            bound.floor() as u32
        }
    }
}

impl Default for DivergenceParams {
    fn default() -> Self {
        DivergenceParams { delta: 0.5, gamma: 0.0 }
    }
}

/// Divergence value; infinity is a tag, never a float sentinel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DivValue {
    Finite(u32),
    Infinite,
}

impl DivValue {
    pub fn finite(self) -> Option<u32> {
        match self {
            DivValue::Finite(v) => Some(v),
            DivValue::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, DivValue::Infinite)
    }

    fn from_distance(d: u32) -> Self {
        if d == UNREACHED {
            DivValue::Infinite
        } else {
            DivValue::Finite(d)
        }
    }
}

impl Ord for DivValue {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (DivValue::Finite(a), DivValue::Finite(b)) => a.cmp(b),
            (DivValue::Finite(_), DivValue::Infinite) => Ordering::Less,
            (DivValue::Infinite, DivValue::Finite(_)) => Ordering::Greater,
            (DivValue::Infinite, DivValue::Infinite) => Ordering::Equal,
        }
    }
}

impl PartialOrd for DivValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl std::fmt::Display for DivValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DivValue::Finite(v) => write!(f, "{v}"),
            DivValue::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for DivValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            DivValue::Finite(v) => s.serialize_u32(*v),
            DivValue::Infinite => s.serialize_str("inf"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DivergenceSample {
    pub n: u32,
    pub value: DivValue,
    /// `(a, b, c)` with `a ≤ b`.
    pub witness: (usize, usize, usize),
    pub forbidden_radius: f64,
}

impl DivergenceSample {
    /// Larger value wins; ties go to the lexicographically smaller witness.
    fn beats(&self, other: &DivergenceSample) -> bool {
        match self.value.cmp(&other.value) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => self.witness < other.witness,
        }
    }
}

/// `div_{γ,δ}(a, b, c)` inside the ball.
pub fn div_triple(
    ball: &GraphBall,
    a: usize,
    b: usize,
    c: usize,
    params: DivergenceParams,
) -> Result<DivValue, DivergenceError> {
    for v in [a, b, c] {
        if v >= ball.vertex_count() {
            return Err(DivergenceError::VertexOutOfRange(v));
        }
    }
    let from_c = ball.distances_from(c);
    let r = from_c[a].min(from_c[b]);
    if r == 0 {
        return Err(DivergenceError::PreconditionViolated);
    }
    let rho = params.forbidden_radius(r);
    let blocked = |v: usize| rho > 0.0 && from_c[v] as f64 <= rho;
    let mut scratch = BfsScratch::new(ball.vertex_count());
    scratch.run(ball, &[a], blocked, None, |v, _| v == b);
    Ok(DivValue::from_distance(scratch.dist()[b]))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TripleProtocol {
    Exhaustive,
    Sampled,
    /// Exhaustive for vertex-transitive balls or balls under the size cap.
    Auto,
}

impl std::fmt::Display for TripleProtocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TripleProtocol::Exhaustive => "exhaustive",
            TripleProtocol::Sampled => "sampled",
            TripleProtocol::Auto => "auto",
        })
    }
}

impl std::str::FromStr for TripleProtocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exhaustive" => Ok(TripleProtocol::Exhaustive),
            "sampled" => Ok(TripleProtocol::Sampled),
            "auto" => Ok(TripleProtocol::Auto),
            _ => Err(format!("unknown protocol {s:?} (exhaustive|sampled|auto)")),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EstimateOptions {
    pub margin: f64,
    pub exhaustive_cap: usize,
    pub samples: usize,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions { margin: DEFAULT_MARGIN, exhaustive_cap: DEFAULT_EXHAUSTIVE_CAP, samples: DEFAULT_SAMPLES }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DivergenceEstimate {
    /// One entry per `n` in `1..=n_max` that admits a triple.
    pub samples: Vec<DivergenceSample>,
    /// `Exhaustive` or `Sampled`, never `Auto`.
    pub protocol: TripleProtocol,
    pub seed: u64,
    pub triples_evaluated: u64,
    pub centres: usize,
}

/// Centres whose triples and detours keep clear of the truncation sphere.
/// For vertex-transitive balls the base alone represents every centre.
fn admissible_centres(ball: &GraphBall, n_max: u32, params: DivergenceParams) -> Vec<usize> {
    if ball.hints().vertex_transitive {
        return vec![0];
    }
    let reach = params.relevant_radius(n_max) + n_max;
    let room = if ball.hints().tree { 0 } else { n_max };
    (0..ball.vertex_count()).filter(|&v| ball.dist_to_base(v) + reach + room <= ball.radius()).collect()
}

/// Margin policy: `n_max · margin ≤ radius`. Tree balls have no detours to
/// truncate, so they only need room for the triples themselves.
fn check_margin(ball: &GraphBall, n_max: u32, params: DivergenceParams, margin: f64) -> Result<(), DivergenceError> {
    let reach = params.relevant_radius(n_max) + n_max;
    let needed = if ball.hints().tree { reach } else { ((n_max as f64) * margin).ceil() as u32 };
    if ball.radius() < needed {
        return Err(DivergenceError::MarginViolated { n_max, radius: ball.radius(), margin, needed });
    }
    Ok(())
}

/// Per source: best sample for each exact `d(a, b) = k ≤ n_max`.
struct SourceResult {
    best_at: Vec<Option<DivergenceSample>>,
    triples: u64,
}

struct Scratch {
    from_c: BfsScratch,
    plain: BfsScratch,
    punctured: BfsScratch,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch { from_c: BfsScratch::new(n), plain: BfsScratch::new(n), punctured: BfsScratch::new(n) }
    }
}

/// All admissible triples with near endpoint `a` and centre `c`:
/// targets are `b` with `d(a,b) ≤ n_max` and `d(c,b) ≥ d(c,a)`.
fn evaluate_source(
    ball: &GraphBall,
    from_c: &[u32],
    a: usize,
    c: usize,
    n_max: u32,
    params: DivergenceParams,
    only: Option<usize>,
    plain: &mut BfsScratch,
    punctured: &mut BfsScratch,
) -> SourceResult {
    let ra = from_c[a];
    let rho = params.forbidden_radius(ra);
    plain.run(ball, &[a], |_| false, Some(n_max), |_, _| false);
    let targets: Vec<usize> = match only {
        Some(b) => vec![b],
        None => plain
            .touched()
            .iter()
            .copied()
            .filter(|&b| from_c[b] != UNREACHED && from_c[b] >= ra)
            .collect(),
    };
    let mut is_target = std::collections::HashSet::with_capacity(targets.len());
    is_target.extend(targets.iter().copied());
    let mut remaining = targets.len();
    let blocked = |v: usize| rho > 0.0 && from_c[v] != UNREACHED && from_c[v] as f64 <= rho;
    punctured.run(ball, &[a], blocked, None, |v, _| {
        if is_target.contains(&v) {
            remaining -= 1;
        }
        remaining == 0
    });
    let mut best_at: Vec<Option<DivergenceSample>> = vec![None; n_max as usize + 1];
    for &b in &targets {
        let k = plain.dist()[b];
        let sample = DivergenceSample {
            n: k,
            value: DivValue::from_distance(punctured.dist()[b]),
            witness: (a.min(b), a.max(b), c),
            forbidden_radius: rho,
        };
        let slot = &mut best_at[k as usize];
        if slot.as_ref().map_or(true, |cur| sample.beats(cur)) {
            *slot = Some(sample);
        }
    }
    SourceResult { best_at, triples: targets.len() as u64 }
}

/// Estimates `Div(n)` for `n = 1..=n_max`.
pub fn div_function_estimate(
    ball: &GraphBall,
    n_max: u32,
    params: DivergenceParams,
    protocol: TripleProtocol,
    seed: u64,
    options: EstimateOptions,
) -> Result<DivergenceEstimate, DivergenceError> {
    check_margin(ball, n_max, params, options.margin)?;
    let centres = admissible_centres(ball, n_max, params);
    if centres.is_empty() {
        return Err(DivergenceError::MarginViolated {
            n_max,
            radius: ball.radius(),
            margin: options.margin,
            needed: params.relevant_radius(n_max) + 2 * n_max,
        });
    }
    let protocol = match protocol {
        TripleProtocol::Auto
            if ball.hints().vertex_transitive || ball.vertex_count() <= options.exhaustive_cap =>
        {
            TripleProtocol::Exhaustive
        }
        TripleProtocol::Auto => TripleProtocol::Sampled,
        p => p,
    };
    let r_cut = params.relevant_radius(n_max);
    let n = ball.vertex_count();

    let results: Vec<SourceResult> = match protocol {
        TripleProtocol::Exhaustive => {
            let jobs: Vec<(usize, Vec<u32>, Vec<usize>)> = centres
                .iter()
                .map(|&c| {
                    let from_c = ball.distances_from(c);
                    let sources = (0..n).filter(|&a| from_c[a] >= 1 && from_c[a] <= r_cut).collect();
                    (c, from_c, sources)
                })
                .collect();
            let pairs: Vec<(usize, usize)> = jobs
                .iter()
                .enumerate()
                .flat_map(|(j, (_, _, sources))| sources.iter().map(move |&a| (j, a)))
                .collect();
            pairs
                .par_iter()
                .map_init(
                    || Scratch::new(n),
                    |s, &(j, a)| {
                        let (c, from_c, _) = &jobs[j];
                        evaluate_source(ball, from_c, a, *c, n_max, params, None, &mut s.plain, &mut s.punctured)
                    },
                )
                .collect()
        }
        _ => {
            let mut master = ChaCha8Rng::seed_from_u64(seed);
            let seeds: Vec<u64> = (0..options.samples).map(|_| master.gen()).collect();
            seeds
                .par_iter()
                .map_init(
                    || Scratch::new(n),
                    |s, &sample_seed| {
                        sample_triple(ball, &centres, r_cut, n_max, params, sample_seed, s)
                    },
                )
                .collect()
        }
    };

    let mut best_at: Vec<Option<DivergenceSample>> = vec![None; n_max as usize + 1];
    let mut triples = 0;
    for result in results {
        triples += result.triples;
        for (k, cand) in result.best_at.into_iter().enumerate() {
            if let Some(cand) = cand {
                let slot = &mut best_at[k];
                if slot.as_ref().map_or(true, |cur| cand.beats(cur)) {
                    *slot = Some(cand);
                }
            }
        }
    }
    // Div(n) takes every triple with d(a, b) ≤ n.
    let mut samples = Vec::new();
    let mut running: Option<DivergenceSample> = None;
    for n in 1..=n_max {
        if let Some(cand) = best_at[n as usize] {
            if running.as_ref().map_or(true, |cur| cand.beats(cur)) {
                running = Some(cand);
            }
        }
        if let Some(best) = running {
            samples.push(DivergenceSample { n, ..best });
        }
    }
    Ok(DivergenceEstimate { samples, protocol, seed, triples_evaluated: triples, centres: centres.len() })
}

/// One sampled triple. Half the time `b` is chosen so that `c` lies on a
/// geodesic from `a` to `b`, where large divergence values live.
fn sample_triple(
    ball: &GraphBall,
    centres: &[usize],
    r_cut: u32,
    n_max: u32,
    params: DivergenceParams,
    seed: u64,
    s: &mut Scratch,
) -> SourceResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let empty = SourceResult { best_at: vec![None; n_max as usize + 1], triples: 0 };
    let c = centres[rng.gen_range(0..centres.len())];
    let Scratch { from_c: centre_bfs, plain, punctured } = s;
    // Depth r_cut + n_max covers every target of every source.
    centre_bfs.run(ball, &[c], |_| false, Some(r_cut + n_max), |_, _| false);
    let from_c = centre_bfs.dist();
    let sources: Vec<usize> = {
        let mut v: Vec<usize> =
            centre_bfs.touched().iter().copied().filter(|&a| from_c[a] >= 1 && from_c[a] <= r_cut).collect();
        v.sort_unstable();
        v
    };
    if sources.is_empty() {
        return empty;
    }
    let a = sources[rng.gen_range(0..sources.len())];
    let ra = from_c[a];
    plain.run(ball, &[a], |_| false, Some(n_max), |_, _| false);
    let d_a = plain.dist();
    let mut targets: Vec<usize> =
        plain.touched().iter().copied().filter(|&b| from_c[b] != UNREACHED && from_c[b] >= ra).collect();
    targets.sort_unstable();
    if targets.is_empty() {
        return empty;
    }
    let through_c: Vec<usize> = targets.iter().copied().filter(|&b| d_a[b] == ra + from_c[b]).collect();
    let b = if !through_c.is_empty() && rng.gen_bool(0.5) {
        through_c[rng.gen_range(0..through_c.len())]
    } else {
        targets[rng.gen_range(0..targets.len())]
    };
    evaluate_source(ball, from_c, a, c, n_max, params, Some(b), plain, punctured)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthVerdict {
    LinearCompatible,
    Superlinear,
    Sublinear,
    Infinite,
}

impl std::fmt::Display for GrowthVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GrowthVerdict::LinearCompatible => "linear-compatible",
            GrowthVerdict::Superlinear => "superlinear",
            GrowthVerdict::Sublinear => "sublinear",
            GrowthVerdict::Infinite => "infinite",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FitThresholds {
    pub low: f64,
    pub high: f64,
}

impl Default for FitThresholds {
    fn default() -> Self {
        FitThresholds { low: 0.8, high: 1.2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GrowthFit {
    /// Least-squares slope of `log value` against `log n`; absent when any
    /// sample is infinite.
    pub slope: Option<f64>,
    pub verdict: GrowthVerdict,
}

pub fn growth_fit(samples: &[DivergenceSample], thresholds: FitThresholds) -> Result<GrowthFit, DivergenceError> {
    if samples.iter().any(|s| s.value.is_infinite()) {
        return Ok(GrowthFit { slope: None, verdict: GrowthVerdict::Infinite });
    }
    let points: Vec<(f64, f64)> = samples
        .iter()
        .filter_map(|s| match s.value {
            DivValue::Finite(v) if v > 0 && s.n > 0 => Some(((s.n as f64).ln(), (v as f64).ln())),
            _ => None,
        })
        .collect();
    if points.len() < 4 {
        return Err(DivergenceError::InsufficientData(points.len()));
    }
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return Err(DivergenceError::InsufficientData(1));
    }
    let slope = sxy / sxx;
    let verdict = if slope > thresholds.high {
        GrowthVerdict::Superlinear
    } else if slope < thresholds.low {
        GrowthVerdict::Sublinear
    } else {
        GrowthVerdict::LinearCompatible
    };
    Ok(GrowthFit { slope: Some(slope), verdict })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionVerdict {
    Decaying,
    NonDecaying,
    Infinite,
}

impl std::fmt::Display for CriterionVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CriterionVerdict::Decaying => "decaying",
            CriterionVerdict::NonDecaying => "non-decaying",
            CriterionVerdict::Infinite => "infinite",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CriterionTerm {
    pub n: u32,
    pub d_2n: DivValue,
    /// `⌊δn - γ⌋`, the Floyd function argument.
    pub f_arg: u64,
    pub f_value: f64,
    /// `D(2n) · f(⌊δn - γ⌋)`; absent when `D(2n)` is infinite.
    pub product: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriterionReport {
    pub terms: Vec<CriterionTerm>,
    pub verdict: CriterionVerdict,
}

/// The sequence `D(2n) · f(δn - γ)` over `n_range`. Decaying means the
/// final term is below a tenth of the largest.
pub fn criterion_check(
    samples: &[DivergenceSample],
    f: &FloydFunction,
    params: DivergenceParams,
    n_range: std::ops::RangeInclusive<u32>,
) -> Result<CriterionReport, DivergenceError> {
    let mut terms = Vec::new();
    for n in n_range {
        let d = samples.iter().find(|s| s.n == 2 * n).ok_or(DivergenceError::RangeMismatch(2 * n))?;
        let arg = params.delta * n as f64 - params.gamma;
        if arg < 0.0 {
            return Err(DivergenceError::RangeMismatch(2 * n));
        }
        let f_arg = arg.floor() as u64;
        let f_value = f.eval(f_arg)?;
        let product = d.value.finite().map(|v| v as f64 * f_value);
        terms.push(CriterionTerm { n, d_2n: d.value, f_arg, f_value, product });
    }
    if terms.is_empty() {
        return Err(DivergenceError::RangeMismatch(0));
    }
    let verdict = if terms.iter().any(|t| t.product.is_none()) {
        CriterionVerdict::Infinite
    } else {
        let max = terms.iter().filter_map(|t| t.product).fold(0.0, f64::max);
        let last = terms.last().and_then(|t| t.product).unwrap();
        if last < 0.1 * max {
            CriterionVerdict::Decaying
        } else {
            CriterionVerdict::NonDecaying
        }
    };
    Ok(CriterionReport { terms, verdict })
}

/// CSV rows `n,value_or_inf,a,b,c,forbidden_radius,protocol,seed`.
pub fn estimate_to_csv(estimate: &DivergenceEstimate) -> String {
    let mut out = String::from("n,value_or_inf,a,b,c,forbidden_radius,protocol,seed\n");
    for s in &estimate.samples {
        let (a, b, c) = s.witness;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.n, s.value, a, b, c, s.forbidden_radius, estimate.protocol, estimate.seed
        );
    }
    out
}

/// Synthetic samples with `D(n) = value(n)`, for composing with
/// [`criterion_check`] and [`growth_fit`].
pub fn synthetic_samples(ns: impl IntoIterator<Item = u32>, value: impl Fn(u32) -> DivValue) -> Vec<DivergenceSample> {
    ns.into_iter()
        .map(|n| DivergenceSample { n, value: value(n), witness: (0, 0, 0), forbidden_radius: 0.0 })
        .collect()
}
