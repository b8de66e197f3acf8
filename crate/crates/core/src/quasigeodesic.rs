//! Quasi-geodesic certification, escape rays and the wideness probe.
//!
//! A vertex path `p` is a `C`-quasi-geodesic when every pair of positions
//! `i < j` satisfies `d/C - C ≤ j - i ≤ C·d + C` with `d = d(p_i, p_j)`.
//! Positions, not vertices, are paired: a path that revisits a vertex pays
//! for the loop.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::graph::{BfsScratch, GraphBall, UNREACHED};

/// `K` used by [`escape_constants`].
pub const ESCAPE_K: f64 = 4.0;

#[derive(Debug, Error, PartialEq)]
pub enum QgError {
    #[error("path is empty")]
    EmptyPath,
    #[error("path steps from {0} to {1}, which are not adjacent")]
    NonPath(usize, usize),
    #[error("vertex {0} not in the ball")]
    VertexOutOfRange(usize),
    #[error("quasi-geodesic constant must be ≥ 1, got {0}")]
    InvalidConstant(f64),
    #[error("inner radius {inner} must be below outer radius {outer} ≤ ball radius {radius}")]
    BadRadii { inner: f64, outer: u32, radius: u32 },
    #[error("start vertex lies inside the forbidden ball (d(b,x) = {distance} ≤ {inner})")]
    StartInsideBall { distance: u32, inner: f64 },
    #[error("segment length {length} does not fit a ball of radius {radius}")]
    SegmentTooLong { length: u32, radius: u32 },
    #[error("malformed witness line: {0}")]
    MalformedWitness(String),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathWitness {
    pub vertices: Vec<usize>,
    pub certified_c: Option<f64>,
}

impl PathWitness {
    /// `C=<value> v0 v1 ...`, or `C=uncertified ...`.
    pub fn to_line(&self) -> String {
        let mut line = match self.certified_c {
            Some(c) => format!("C={c}"),
            None => "C=uncertified".to_string(),
        };
        for v in &self.vertices {
            line.push(' ');
            line.push_str(&v.to_string());
        }
        line
    }

    pub fn parse_line(line: &str) -> Result<Self, QgError> {
        let bad = || QgError::MalformedWitness(line.to_string());
        let mut fields = line.split_whitespace();
        let head = fields.next().ok_or_else(bad)?;
        let value = head.strip_prefix("C=").ok_or_else(bad)?;
        let certified_c = match value {
            "uncertified" => None,
            v => Some(v.parse::<f64>().map_err(|_| bad())?),
        };
        let vertices = fields.map(|f| f.parse().map_err(|_| bad())).collect::<Result<Vec<_>, _>>()?;
        if vertices.is_empty() {
            return Err(bad());
        }
        Ok(PathWitness { vertices, certified_c })
    }
}

/// Writes one witness per line.
pub fn format_witnesses(witnesses: &[PathWitness]) -> String {
    witnesses.iter().map(|w| w.to_line() + "\n").collect()
}

pub fn parse_witnesses(text: &str) -> Result<Vec<PathWitness>, QgError> {
    text.lines().filter(|l| !l.trim().is_empty()).map(PathWitness::parse_line).collect()
}

/// Smallest `C ≥ 1` meeting both inequalities for one pair with path
/// length `len` and distance `dist`.
pub fn pair_min_constant(len: u32, dist: u32) -> f64 {
    let (l, d) = (len as f64, dist as f64);
    let upper = l / (d + 1.0);
    // d/C - C ≤ l  ⇔  C² + lC - d ≥ 0.
    let lower = (-l + (l * l + 4.0 * d).sqrt()) / 2.0;
    upper.max(lower).max(1.0)
}

/// Whether `c` satisfies both inequalities for the pair (tolerance `1e-12`).
pub fn pair_satisfied(c: f64, len: u32, dist: u32) -> bool {
    let (l, d) = (len as f64, dist as f64);
    d / c - c <= l + 1e-12 && l <= c * d + c + 1e-12
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QgCertificate {
    pub c: f64,
    /// First position pair (lexicographic) attaining `c`, if `c > 1`.
    pub binding_pair: Option<(usize, usize)>,
}

/// Least `C ≥ 1` for which `path` is a `C`-quasi-geodesic in the ball metric.
///
/// Each pair constraint is monotone in `C`, so the minimum is the largest
/// per-pair threshold; these are solved in closed form.
pub fn qg_certify(ball: &GraphBall, path: &[usize]) -> Result<QgCertificate, QgError> {
    let matrix = path_distance_matrix(ball, path)?;
    let m = path.len();
    let mut best = 1.0;
    let mut binding = None;
    for i in 0..m {
        for j in i + 1..m {
            let c = pair_min_constant((j - i) as u32, matrix[i][j]);
            if c > best {
                best = c;
                binding = Some((i, j));
            }
        }
    }
    Ok(QgCertificate { c: best, binding_pair: binding })
}

/// Ball distances between all positions of a valid path.
pub fn path_distance_matrix(ball: &GraphBall, path: &[usize]) -> Result<Vec<Vec<u32>>, QgError> {
    if path.is_empty() {
        return Err(QgError::EmptyPath);
    }
    if let Some(&v) = path.iter().find(|&&v| v >= ball.vertex_count()) {
        return Err(QgError::VertexOutOfRange(v));
    }
    if let Some(w) = path.windows(2).find(|w| !ball.is_adjacent(w[0], w[1])) {
        return Err(QgError::NonPath(w[0], w[1]));
    }
    let mut distinct: HashMap<usize, usize> = HashMap::new();
    for &v in path {
        let next = distinct.len();
        distinct.entry(v).or_insert(next);
    }
    let mut order: Vec<usize> = vec![0; distinct.len()];
    for (&v, &i) in &distinct {
        order[i] = v;
    }
    let mut scratch = BfsScratch::new(ball.vertex_count());
    let mut table = vec![vec![0u32; order.len()]; order.len()];
    for (i, &s) in order.iter().enumerate() {
        let mut remaining = order.len();
        scratch.run(ball, &[s], |_| false, None, |v, _| {
            if distinct.contains_key(&v) {
                remaining -= 1;
            }
            remaining == 0
        });
        for (j, &t) in order.iter().enumerate() {
            table[i][j] = scratch.dist()[t];
        }
    }
    Ok(path
        .iter()
        .map(|a| path.iter().map(|b| table[distinct[a]][distinct[b]]).collect())
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EscapeConstants {
    pub k: f64,
    pub r: f64,
}

/// Constants with `2r/K + C < (KC-1)r/(KC) - C` for every `r > R`, using
/// the fixed choice `K = 4`, which gives `R = 2C / (1 - 1/(KC) - 2/K)`.
pub fn escape_constants(c: f64) -> Result<EscapeConstants, QgError> {
    if !(c >= 1.0 && c.is_finite()) {
        return Err(QgError::InvalidConstant(c));
    }
    let k = ESCAPE_K;
    let r = 2.0 * c / (1.0 - 1.0 / (k * c) - 2.0 / k);
    Ok(EscapeConstants { k, r })
}

/// Both sides of the escape inequality at radius `r`.
pub fn escape_inequality_sides(k: f64, c: f64, r: f64) -> (f64, f64) {
    (2.0 * r / k + c, (k * c - 1.0) * r / (k * c) - c)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum EscapeOutcome {
    Found { witness: PathWitness },
    /// Truncation prevents a verdict; never a refutation.
    Inconclusive,
}

/// Cap on partial paths expanded by the near-shortest fallback, per start.
const BACKTRACK_BUDGET: usize = 200_000;

/// Looks for a path from some `x'` with `d(x, x') ≤ C` out to the sphere
/// `S_outer` that avoids the closed ball `B_b(inner)` and is a
/// `C`-quasi-geodesic. Shortest punctured paths are tried first, then
/// simple paths at most `⌊2C⌋` longer.
pub fn escape_ray_search(
    ball: &GraphBall,
    x: usize,
    c: f64,
    inner: f64,
    outer: u32,
) -> Result<EscapeOutcome, QgError> {
    if !(c >= 1.0) {
        return Err(QgError::InvalidConstant(c));
    }
    if x >= ball.vertex_count() {
        return Err(QgError::VertexOutOfRange(x));
    }
    if !(inner < outer as f64) || outer > ball.radius() {
        return Err(QgError::BadRadii { inner, outer, radius: ball.radius() });
    }
    if ball.dist_to_base(x) as f64 <= inner {
        return Err(QgError::StartInsideBall { distance: ball.dist_to_base(x), inner });
    }
    let forbidden = |v: usize| ball.dist_to_base(v) as f64 <= inner;
    let reach = c.floor() as u32;
    let near = ball.bfs(&[x], |_| false, Some(reach));
    let mut starts: Vec<usize> = (0..ball.vertex_count())
        .filter(|&v| near[v] != UNREACHED && !forbidden(v))
        .collect();
    starts.sort_by_key(|&v| (near[v], v));

    // Punctured distance from every vertex to the outer sphere.
    let targets: Vec<usize> = ball.sphere(outer).expect("outer checked").vertices;
    let to_outer = ball.bfs(&targets, forbidden, None);

    for &start in &starts {
        let dist = ball.bfs(&[start], forbidden, None);
        let Some(&target) = targets
            .iter()
            .filter(|&&t| dist[t] != UNREACHED)
            .min_by_key(|&&t| (dist[t], t))
        else {
            continue;
        };
        let path = ball.trace_geodesic(&dist, target).expect("reachable");
        let cert = qg_certify(ball, &path)?;
        if cert.c <= c {
            return Ok(EscapeOutcome::Found { witness: PathWitness { vertices: path, certified_c: Some(cert.c) } });
        }
    }

    let slack = (2.0 * c).floor() as u32;
    for &start in &starts {
        if to_outer[start] == UNREACHED {
            continue;
        }
        let limit = to_outer[start] + slack;
        if let Some(path) = near_shortest_search(ball, start, outer, limit, &forbidden, &to_outer, c)? {
            let cert = qg_certify(ball, &path)?;
            return Ok(EscapeOutcome::Found { witness: PathWitness { vertices: path, certified_c: Some(cert.c) } });
        }
    }
    Ok(EscapeOutcome::Inconclusive)
}

/// Depth-first enumeration of simple punctured paths of length `≤ limit`
/// ending on the outer sphere; returns the first one certifying at `≤ c`.
fn near_shortest_search(
    ball: &GraphBall,
    start: usize,
    outer: u32,
    limit: u32,
    forbidden: &dyn Fn(usize) -> bool,
    to_outer: &[u32],
    c: f64,
) -> Result<Option<Vec<usize>>, QgError> {
    let mut path = vec![start];
    let mut on_path = vec![false; ball.vertex_count()];
    on_path[start] = true;
    let mut cursor = vec![0usize];
    let mut budget = BACKTRACK_BUDGET;
    while let Some(&top) = path.last() {
        let depth = cursor.len() - 1;
        let idx = cursor[depth];
        if idx == 0 && ball.dist_to_base(top) == outer {
            let cert = qg_certify(ball, &path)?;
            if cert.c <= c {
                return Ok(Some(path));
            }
        }
        let neighbors = ball.neighbors(top);
        if idx >= neighbors.len() {
            on_path[top] = false;
            path.pop();
            cursor.pop();
            continue;
        }
        if budget == 0 {
            return Ok(None);
        }
        cursor[depth] += 1;
        let w = neighbors[idx] as usize;
        let used = (path.len()) as u32;
        if on_path[w] || forbidden(w) || to_outer[w] == UNREACHED || used + to_outer[w] > limit {
            continue;
        }
        budget -= 1;
        on_path[w] = true;
        path.push(w);
        cursor.push(0);
    }
    Ok(None)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VertexProbe {
    pub vertex: usize,
    pub witness: Option<PathWitness>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WidenessReport {
    pub c: f64,
    pub segment_length: u32,
    pub eligible: usize,
    pub passed: usize,
    /// Fraction of eligible vertices with a witness; `1.0` when none are eligible.
    pub pass_fraction: f64,
    pub failures: Vec<usize>,
    pub probes: Vec<VertexProbe>,
}

/// Start positions tried per split point when searching for an arm pair.
const ARM_ATTEMPTS: usize = 8;

/// Finite-scale check of the first wideness clause: every vertex with room
/// for the segment (`d(b,x) ≤ radius - ⌈L/2⌉`) is within `C` of the middle
/// of a `C`-quasi-geodesic segment of length `L`.
pub fn wideness_probe(ball: &GraphBall, c: f64, segment_length: u32) -> Result<WidenessReport, QgError> {
    if !(c >= 1.0) {
        return Err(QgError::InvalidConstant(c));
    }
    let arm = segment_length.div_ceil(2);
    if segment_length == 0 || arm > ball.radius() {
        return Err(QgError::SegmentTooLong { length: segment_length, radius: ball.radius() });
    }
    let eligible: Vec<usize> = (0..ball.vertex_count())
        .filter(|&v| ball.dist_to_base(v) + arm <= ball.radius())
        .collect();
    let n = ball.vertex_count();
    let probes: Vec<VertexProbe> = eligible
        .par_iter()
        .map_init(
            || (BfsScratch::new(n), BfsScratch::new(n), BfsScratch::new(n)),
            |(near, centre, far), &x| VertexProbe {
                vertex: x,
                witness: probe_vertex(ball, x, c, segment_length, near, centre, far),
            },
        )
        .collect();
    let failures: Vec<usize> = probes.iter().filter(|p| p.witness.is_none()).map(|p| p.vertex).collect();
    let passed = probes.len() - failures.len();
    let pass_fraction = if probes.is_empty() { 1.0 } else { passed as f64 / probes.len() as f64 };
    Ok(WidenessReport { c, segment_length, eligible: probes.len(), passed, pass_fraction, failures, probes })
}

fn probe_vertex(
    ball: &GraphBall,
    x: usize,
    c: f64,
    length: u32,
    near: &mut BfsScratch,
    centre: &mut BfsScratch,
    far: &mut BfsScratch,
) -> Option<PathWitness> {
    let (a1, a2) = (length.div_ceil(2), length / 2);
    near.run(ball, &[x], |_| false, Some(c.floor() as u32), |_, _| false);
    let mut splits: Vec<usize> = near.touched().to_vec();
    splits.sort_by_key(|&v| (near.dist()[v], v));

    for &mid in &splits {
        centre.run(ball, &[mid], |_| false, Some(a1), |_, _| false);
        let d0 = centre.dist();
        let mut heads: Vec<usize> = centre.touched().iter().copied().filter(|&v| d0[v] == a1).collect();
        heads.sort_unstable();
        let mut tails: Vec<usize> = centre.touched().iter().copied().filter(|&v| d0[v] == a2).collect();
        tails.sort_unstable();

        for &p in heads.iter().take(ARM_ATTEMPTS) {
            far.run(ball, &[p], |_| false, Some(length), |_, _| false);
            let dp = far.dist();
            if let Some(&q) = tails.iter().find(|&&q| dp[q] == length) {
                let path = join_arms(ball, d0, p, q);
                return Some(PathWitness { vertices: path, certified_c: Some(1.0) });
            }
        }
        if c > 1.0 {
            for &p in heads.iter().take(ARM_ATTEMPTS) {
                for &q in tails.iter().filter(|&&q| q != p).take(ARM_ATTEMPTS) {
                    let path = join_arms(ball, d0, p, q);
                    if let Ok(cert) = qg_certify(ball, &path) {
                        if cert.c <= c {
                            return Some(PathWitness { vertices: path, certified_c: Some(cert.c) });
                        }
                    }
                }
            }
        }
    }
    None
}

/// `p → mid → q` along geodesics of the BFS tree rooted at `mid`.
fn join_arms(ball: &GraphBall, from_mid: &[u32], p: usize, q: usize) -> Vec<usize> {
    let mut path = ball.trace_geodesic(from_mid, p).expect("p reached");
    path.reverse();
    let second = ball.trace_geodesic(from_mid, q).expect("q reached");
    path.extend_from_slice(&second[1..]);
    path
}
