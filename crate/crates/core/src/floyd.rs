//! Floyd functions, Floyd rescaling of a ball and Floyd distances.
//!
//! An edge `{u, v}` gets length `f(n)` with `n = min(d(b,u), d(b,v))`, and
//! `f(0)` is taken to be `f(1)`. Distances are weighted shortest paths
//! inside the ball, hence upper bounds on the ambient Floyd distance except
//! when the ambient graph is a tree.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::graph::{GraphBall, UNREACHED};
use crate::quasigeodesic::qg_certify;

/// Default truncation margin: radii are only reported up to `radius / 3`.
pub const DEFAULT_MARGIN: f64 = 3.0;
/// Spheres with more vertices than this use an evenly spaced source subset.
pub const DEFAULT_SOURCE_CAP: usize = 2048;

#[derive(Debug, Error, PartialEq)]
pub enum FloydError {
    #[error("invalid Floyd function parameter: {0}")]
    InvalidParameter(String),
    #[error("custom table has no value for f({n}) (table covers f(1)..=f({len}))")]
    TableExhausted { n: u64, len: usize },
    #[error("condition (a) violated at n = {n}: f(n)/f(n+1) = {ratio} outside [1, {bound}]")]
    ConditionAViolated { n: u64, ratio: f64, bound: f64 },
    #[error("sphere radius {r} exceeds ball radius {radius} / margin {margin}")]
    RadiusOutOfMargin { r: u32, radius: u32, margin: f64 },
    #[error("sphere radius {r} outside the ball (radius {radius})")]
    RadiusOutOfRange { r: u32, radius: u32 },
    #[error("no qualifying quasi-geodesic segments among {samples} samples")]
    SampleExhausted { samples: usize },
    #[error("range must satisfy {0}")]
    InvalidRange(String),
    #[error("cannot read table: {0}")]
    TableRead(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum FloydKind {
    /// `n^-p`, `p > 1`.
    InversePower { p: f64 },
    /// `λ^n`, `0 < λ < 1`.
    Exponential { lambda: f64 },
    /// `1 / (n² + 1)`.
    InverseSquarePlusOne,
    /// `values[i] = f(i + 1)`.
    Table(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FloydFunction {
    kind: FloydKind,
    scale: f64,
    ratio_bound: f64,
}

impl FloydFunction {
    pub fn inverse_power(p: f64) -> Result<Self, FloydError> {
        if !(p.is_finite() && p > 1.0) {
            return Err(FloydError::InvalidParameter(format!("inverse power needs p > 1, got {p}")));
        }
        Ok(FloydFunction { kind: FloydKind::InversePower { p }, scale: 1.0, ratio_bound: 2f64.powf(p) })
    }

    pub fn exponential(lambda: f64) -> Result<Self, FloydError> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(FloydError::InvalidParameter(format!("exponential needs 0 < λ < 1, got {lambda}")));
        }
        Ok(FloydFunction { kind: FloydKind::Exponential { lambda }, scale: 1.0, ratio_bound: 1.0 / lambda })
    }

    pub fn inverse_square_plus_one() -> Self {
        // (n+1)²+1 / (n²+1) is largest at n = 1.
        FloydFunction { kind: FloydKind::InverseSquarePlusOne, scale: 1.0, ratio_bound: 2.5 }
    }

    /// Table of `f(1), f(2), ...`. The ratio bound defaults to the largest
    /// consecutive ratio in the table.
    pub fn table(values: Vec<f64>) -> Result<Self, FloydError> {
        let bound = values
            .windows(2)
            .map(|w| w[0] / w[1])
            .fold(1.0, f64::max);
        Self::table_with_bound(values, bound)
    }

    pub fn table_with_bound(values: Vec<f64>, ratio_bound: f64) -> Result<Self, FloydError> {
        if values.is_empty() {
            return Err(FloydError::InvalidParameter("empty table".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(FloydError::InvalidParameter(format!("table value {v} is not a positive real")));
        }
        if !(ratio_bound.is_finite() && ratio_bound >= 1.0) {
            return Err(FloydError::InvalidParameter(format!("ratio bound {ratio_bound} must be ≥ 1")));
        }
        Ok(FloydFunction { kind: FloydKind::Table(values), scale: 1.0, ratio_bound })
    }

    pub fn read_table(path: impl AsRef<Path>) -> Result<Self, FloydError> {
        let text = std::fs::read_to_string(path).map_err(|e| FloydError::TableRead(e.to_string()))?;
        let values = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                l.trim()
                    .parse::<f64>()
                    .map_err(|_| FloydError::TableRead(format!("line {}: {l:?} is not a real", i + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::table(values)
    }

    /// Parses `invpow:<p>`, `exp:<lambda>`, `invsq1`, `table:<path>`.
    pub fn parse(spec: &str) -> Result<Self, FloydError> {
        let bad = || FloydError::InvalidParameter(format!("unknown Floyd function {spec:?}"));
        if spec == "invsq1" {
            return Ok(Self::inverse_square_plus_one());
        }
        let (kind, arg) = spec.split_once(':').ok_or_else(bad)?;
        match kind {
            "invpow" => Self::inverse_power(arg.parse().map_err(|_| bad())?),
            "exp" => Self::exponential(arg.parse().map_err(|_| bad())?),
            "table" => Self::read_table(arg),
            _ => Err(bad()),
        }
    }

    /// `c · f`; condition (a) and its constant are unchanged.
    pub fn scaled(&self, c: f64) -> Self {
        assert!(c > 0.0 && c.is_finite(), "scale must be a positive real");
        FloydFunction { scale: self.scale * c, ..self.clone() }
    }

    pub fn kind(&self) -> &FloydKind {
        &self.kind
    }

    /// The constant `K` of condition (a).
    pub fn ratio_bound(&self) -> f64 {
        self.ratio_bound
    }

    /// Largest `n` with a defined value, if bounded.
    pub fn table_len(&self) -> Option<usize> {
        match &self.kind {
            FloydKind::Table(v) => Some(v.len()),
            _ => None,
        }
    }

    /// `f(n)` with `f(0) := f(1)`.
    pub fn eval(&self, n: u64) -> Result<f64, FloydError> {
        let m = n.max(1);
        let raw = match &self.kind {
            FloydKind::InversePower { p } => {
                if p.fract() == 0.0 && *p <= i32::MAX as f64 && m <= i32::MAX as u64 {
                    1.0 / (m as f64).powi(*p as i32)
                } else {
                    (m as f64).powf(-p)
                }
            }
            FloydKind::Exponential { lambda } => {
                if m <= i32::MAX as u64 {
                    lambda.powi(m as i32)
                } else {
                    lambda.powf(m as f64)
                }
            }
            FloydKind::InverseSquarePlusOne => 1.0 / ((m as f64) * (m as f64) + 1.0),
            FloydKind::Table(values) => *values
                .get((m - 1) as usize)
                .ok_or(FloydError::TableExhausted { n, len: values.len() })?,
        };
        Ok(raw * self.scale)
    }
}

impl std::fmt::Display for FloydFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.kind {
            FloydKind::InversePower { p } => write!(f, "invpow:{p}")?,
            FloydKind::Exponential { lambda } => write!(f, "exp:{lambda}")?,
            FloydKind::InverseSquarePlusOne => write!(f, "invsq1")?,
            FloydKind::Table(v) => write!(f, "table[{}]", v.len())?,
        }
        if self.scale != 1.0 {
            write!(f, "*{}", self.scale)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SummabilityCertificate {
    /// Summability follows from the closed form.
    Analytic { reason: &'static str },
    /// Only a finite partial sum is known; the tail is unverified.
    PartialSumOnly { partial_sum: f64, terms: usize, unverified_tail: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub k_observed: f64,
    /// Where the largest ratio `f(n)/f(n+1)` occurs.
    pub k_attained_at: u64,
    pub condition_a_ok: bool,
    pub condition_b: SummabilityCertificate,
    pub checked_up_to: u64,
}

/// Checks `1 ≤ f(n)/f(n+1) ≤ K` for `1 ≤ n < check_range` and issues a
/// summability certificate.
pub fn validate_floyd_function(f: &FloydFunction, check_range: u64) -> Result<ValidationReport, FloydError> {
    if check_range < 2 {
        return Err(FloydError::InvalidRange("check_range ≥ 2".into()));
    }
    let last = match f.table_len() {
        Some(len) => check_range.min(len as u64),
        None => check_range,
    };
    let mut k_observed = 1.0;
    let mut k_at = 1;
    let mut prev = f.eval(1)?;
    for n in 1..last {
        let next = f.eval(n + 1)?;
        if !next.is_normal() {
            break;
        }
        let ratio = prev / next;
        if ratio < 1.0 || ratio > f.ratio_bound() * (1.0 + 1e-12) {
            return Err(FloydError::ConditionAViolated { n, ratio, bound: f.ratio_bound() });
        }
        if ratio > k_observed {
            k_observed = ratio;
            k_at = n;
        }
        prev = next;
    }
    let condition_b = match f.kind() {
        FloydKind::InversePower { .. } => SummabilityCertificate::Analytic { reason: "p-series with p > 1" },
        FloydKind::Exponential { .. } => SummabilityCertificate::Analytic { reason: "geometric series with ratio < 1" },
        FloydKind::InverseSquarePlusOne => SummabilityCertificate::Analytic { reason: "dominated by Σ 1/n²" },
        FloydKind::Table(values) => SummabilityCertificate::PartialSumOnly {
            partial_sum: values.iter().sum::<f64>() * f.scale,
            terms: values.len(),
            unverified_tail: true,
        },
    };
    Ok(ValidationReport { k_observed, k_attained_at: k_at, condition_a_ok: true, condition_b, checked_up_to: last })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SublinearityVerdict {
    /// Final `n·f(n)` below a tenth of the initial value.
    TendingToZero,
    /// Decreasing overall but not yet below the threshold.
    Decreasing,
    NotDecreasing,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SublinearityReport {
    /// `n · f(n)` for `n = 1..=n_max`.
    pub values: Vec<f64>,
    pub verdict: SublinearityVerdict,
}

pub fn check_sublinearity(f: &FloydFunction, n_max: u64) -> Result<SublinearityReport, FloydError> {
    if n_max < 2 {
        return Err(FloydError::InvalidRange("n_max ≥ 2".into()));
    }
    let values = (1..=n_max)
        .map(|n| Ok(n as f64 * f.eval(n)?))
        .collect::<Result<Vec<_>, FloydError>>()?;
    let (first, last) = (values[0], *values.last().unwrap());
    let verdict = if last < 0.1 * first {
        SublinearityVerdict::TendingToZero
    } else if last < first {
        SublinearityVerdict::Decreasing
    } else {
        SublinearityVerdict::NotDecreasing
    };
    Ok(SublinearityReport { values, verdict })
}

/// Floyd edge lengths over a ball. Edge weights depend only on the smaller
/// endpoint level, so one value per level is stored.
#[derive(Clone, Debug)]
pub struct FloydWeighting<'a> {
    ball: &'a GraphBall,
    function: FloydFunction,
    level_weight: Vec<f64>,
}

pub fn floyd_weighting<'a>(ball: &'a GraphBall, f: &FloydFunction) -> Result<FloydWeighting<'a>, FloydError> {
    let level_weight = (0..=ball.radius() as u64).map(|n| f.eval(n)).collect::<Result<Vec<_>, _>>()?;
    Ok(FloydWeighting { ball, function: f.clone(), level_weight })
}

impl<'a> FloydWeighting<'a> {
    pub fn ball(&self) -> &'a GraphBall {
        self.ball
    }

    pub fn function(&self) -> &FloydFunction {
        &self.function
    }

    #[inline]
    pub fn edge_weight(&self, u: usize, v: usize) -> f64 {
        let level = self.ball.dist_to_base(u).min(self.ball.dist_to_base(v));
        self.level_weight[level as usize]
    }

    /// `(u, v, weight)` for every edge with `u < v`.
    pub fn weighted_edges(&self) -> Vec<(usize, usize, f64)> {
        self.ball.edges().map(|(u, v)| (u, v, self.edge_weight(u, v))).collect()
    }

    /// Floyd length of a vertex path.
    pub fn path_length(&self, path: &[usize]) -> f64 {
        path.windows(2).map(|e| self.edge_weight(e[0], e[1])).sum()
    }

    /// Single-source Floyd distances (label-setting, binary heap).
    pub fn distances_from(&self, source: usize) -> Vec<f64> {
        let n = self.ball.vertex_count();
        let mut dist = vec![f64::INFINITY; n];
        let mut settled = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(HeapEntry { dist: 0.0, vertex: source });
        while let Some(HeapEntry { dist: d, vertex: u }) = heap.pop() {
            if settled[u] {
                continue;
            }
            settled[u] = true;
            let du = self.ball.dist_to_base(u);
            for &w in self.ball.neighbors(u) {
                let w = w as usize;
                if settled[w] {
                    continue;
                }
                let level = du.min(self.ball.dist_to_base(w));
                let nd = d + self.level_weight[level as usize];
                if nd < dist[w] {
                    dist[w] = nd;
                    heap.push(HeapEntry { dist: nd, vertex: w });
                }
            }
        }
        dist
    }
}

#[derive(Clone, Copy, Debug)]
struct HeapEntry {
    dist: f64,
    vertex: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    // Min-heap on distance, then on vertex index.
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.vertex.cmp(&self.vertex))
    }
}

/// In-ball Floyd distance; an upper bound on the ambient value.
pub fn floyd_distance(w: &FloydWeighting<'_>, u: usize, v: usize) -> f64 {
    if u == v {
        return 0.0;
    }
    w.distances_from(u)[v]
}

/// Whether `r` is admissible under `margin`. Balls known to sit in an
/// ambient tree are exact at every radius.
pub fn radius_within_margin(ball: &GraphBall, r: u32, margin: f64) -> bool {
    if ball.hints().tree {
        r <= ball.radius()
    } else {
        r as f64 * margin <= ball.radius() as f64
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DiameterOptions {
    pub margin: f64,
    pub source_cap: usize,
}

impl Default for DiameterOptions {
    fn default() -> Self {
        DiameterOptions { margin: DEFAULT_MARGIN, source_cap: DEFAULT_SOURCE_CAP }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SphereDiameter {
    pub r: u32,
    pub diameter: f64,
    /// Lexicographically smallest pair `(u, v)`, `u ≤ v`, attaining the maximum.
    pub witness: (usize, usize),
    pub sphere_size: usize,
    /// True if only a subset of sphere vertices served as sources.
    pub sampled: bool,
}

/// Largest Floyd distance between two vertices of `S_r`.
pub fn sphere_floyd_diameter(
    w: &FloydWeighting<'_>,
    r: u32,
    options: DiameterOptions,
) -> Result<SphereDiameter, FloydError> {
    let ball = w.ball();
    if r > ball.radius() {
        return Err(FloydError::RadiusOutOfRange { r, radius: ball.radius() });
    }
    if !radius_within_margin(ball, r, options.margin) {
        return Err(FloydError::RadiusOutOfMargin { r, radius: ball.radius(), margin: options.margin });
    }
    let sphere = ball.sphere(r).expect("radius checked").vertices;
    let sampled = sphere.len() > options.source_cap.max(1);
    let sources: Vec<usize> = if sampled {
        let cap = options.source_cap.max(1);
        (0..cap).map(|i| sphere[i * sphere.len() / cap]).collect()
    } else {
        sphere.clone()
    };

    // Every pair is within 2 · max d_f(b, S_r). Sources are scanned in
    // ascending chunks, and once a pair meets that bound no later source can
    // improve the value or produce a smaller witness.
    let from_base = w.distances_from(ball.base());
    let bound = 2.0 * sphere.iter().map(|&t| from_base[t]).fold(0.0, f64::max);
    let mut best = (0.0, (sphere[0], sphere[0]));
    for chunk in sources.chunks(SOURCE_CHUNK) {
        let per_source: Vec<(f64, (usize, usize))> = chunk
            .par_iter()
            .map(|&s| {
                let dist = w.distances_from(s);
                let mut best = (0.0, (s, s));
                for &t in &sphere {
                    let pair = (s.min(t), s.max(t));
                    if better(dist[t], pair, best) {
                        best = (dist[t], pair);
                    }
                }
                best
            })
            .collect();
        best = per_source.into_iter().fold(best, |acc, cand| if better(cand.0, cand.1, acc) { cand } else { acc });
        if best.0 >= bound * (1.0 - BOUND_SLACK) {
            break;
        }
    }
    let (diameter, witness) = best;
    Ok(SphereDiameter { r, diameter, witness, sphere_size: sphere.len(), sampled })
}

/// Sources evaluated between checks of the triangle bound.
const SOURCE_CHUNK: usize = 64;
/// Relative slack for float rounding when comparing against the bound.
const BOUND_SLACK: f64 = 1e-12;

fn better(value: f64, pair: (usize, usize), best: (f64, (usize, usize))) -> bool {
    value > best.0 || (value == best.0 && pair < best.1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiameterTrend {
    Vanishing,
    NonVanishing,
    Inconclusive,
}

impl std::fmt::Display for DiameterTrend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DiameterTrend::Vanishing => "vanishing",
            DiameterTrend::NonVanishing => "non-vanishing",
            DiameterTrend::Inconclusive => "inconclusive",
        })
    }
}

/// Classifies a sequence of sphere diameters ordered by radius.
///
/// Vanishing: strictly decreasing and the last value at most half the
/// first. Non-vanishing: the last value is at least 90% of the maximum.
/// A finite probe cannot tell one boundary point from two, so no point
/// count is ever reported.
pub fn classify_trend(diameters: &[f64]) -> DiameterTrend {
    if diameters.len() < 2 {
        return DiameterTrend::Inconclusive;
    }
    let first = diameters[0];
    let last = *diameters.last().unwrap();
    let max = diameters.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let strictly_decreasing = diameters.windows(2).all(|p| p[1] < p[0]);
    if strictly_decreasing && last <= 0.5 * first {
        DiameterTrend::Vanishing
    } else if last >= 0.9 * max {
        DiameterTrend::NonVanishing
    } else {
        DiameterTrend::Inconclusive
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KarlssonEstimate {
    /// Smallest `ρ` such that every sampled segment avoiding the closed ball
    /// `B_b(ρ)` had Floyd length `< ε`. Empirical, never a certificate.
    pub radius: u32,
    pub segments: usize,
    pub samples: usize,
    pub seed: u64,
    /// Longest Floyd length among sampled segments that avoid `B_b(radius)`.
    pub longest_outside: f64,
}

/// A sampled quasi-geodesic segment: lowest base level visited, Floyd length.
#[derive(Clone, Copy, Debug)]
struct Segment {
    min_level: u32,
    floyd_length: f64,
}

/// Estimates the radius of a ball outside which `C`-quasi-geodesics are
/// Floyd-short. Segments are random geodesics between random vertex pairs,
/// plus (for `C > 1`) concatenations of two geodesics through a random
/// waypoint that certify at constant `≤ C`.
pub fn karlsson_set_estimate(
    w: &FloydWeighting<'_>,
    c: f64,
    epsilon: f64,
    samples: usize,
    seed: u64,
) -> Result<KarlssonEstimate, FloydError> {
    if !(c >= 1.0) {
        return Err(FloydError::InvalidParameter(format!("C must be ≥ 1, got {c}")));
    }
    if !(epsilon > 0.0) {
        return Err(FloydError::InvalidParameter(format!("ε must be > 0, got {epsilon}")));
    }
    let ball = w.ball();
    let n = ball.vertex_count();
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..samples).map(|_| master.gen()).collect();

    let segments: Vec<Segment> = seeds
        .par_iter()
        .filter_map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let u = rng.gen_range(0..n);
            let v = rng.gen_range(0..n);
            let detour = c > 1.0 && rng.gen_bool(0.5);
            let path = if detour {
                let mid = rng.gen_range(0..n);
                let mut first = random_geodesic(ball, u, mid, &mut rng)?;
                let second = random_geodesic(ball, mid, v, &mut rng)?;
                first.extend_from_slice(&second[1..]);
                let cert = qg_certify(ball, &first).ok()?;
                if cert.c > c {
                    return None;
                }
                first
            } else {
                random_geodesic(ball, u, v, &mut rng)?
            };
            if path.len() < 2 {
                return None;
            }
            let min_level = path.iter().map(|&x| ball.dist_to_base(x)).min().unwrap();
            Some(Segment { min_level, floyd_length: w.path_length(&path) })
        })
        .collect();
    if segments.is_empty() {
        return Err(FloydError::SampleExhausted { samples });
    }
    let radius = segments
        .iter()
        .filter(|s| s.floyd_length >= epsilon)
        .map(|s| s.min_level)
        .max()
        .unwrap_or(0);
    let longest_outside = segments
        .iter()
        .filter(|s| s.min_level > radius)
        .map(|s| s.floyd_length)
        .fold(0.0, f64::max);
    Ok(KarlssonEstimate { radius, segments: segments.len(), samples, seed, longest_outside })
}

/// Uniformly random choice among shortest-path predecessors at each step.
fn random_geodesic(ball: &GraphBall, from: usize, to: usize, rng: &mut ChaCha8Rng) -> Option<Vec<usize>> {
    let dist = ball.distances_from(to);
    if dist[from] == UNREACHED {
        return None;
    }
    let mut path = vec![from];
    let mut cur = from;
    let mut options = Vec::new();
    while dist[cur] > 0 {
        options.clear();
        options.extend(
            ball.neighbors(cur)
                .iter()
                .map(|&x| x as usize)
                .filter(|&x| dist[x] != UNREACHED && dist[x] + 1 == dist[cur]),
        );
        cur = options[rng.gen_range(0..options.len())];
        path.push(cur);
    }
    Some(path)
}
