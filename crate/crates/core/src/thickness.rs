//! Finite-scale verification of declared thick structures.
//!
//! A structure of order `k ≥ 1` lists subsets `Y_α` that must coarsely
//! cover the ball, be chained through overlaps of large diameter, and each
//! be thick of order at most `k - 1` (via a nested structure, or as a wide
//! leaf when none is given). At order `0` every listed subset is a leaf.
//!
//! "Infinite diameter" is replaced by `diam ≥ D_min`, and sub-metrics are
//! those of the induced subgraph; a disconnected subset fails outright.

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::divergence::{
    div_function_estimate, growth_fit, DivergenceError, DivergenceParams, EstimateOptions, FitThresholds,
    GrowthVerdict, TripleProtocol,
};
use crate::graph::{BfsScratch, GraphBall, UNREACHED};
use crate::quasigeodesic::{wideness_probe, QgError};

/// At most this many violators or failures are listed in a report.
const LISTED: usize = 32;

#[derive(Debug, Error)]
pub enum ThickError {
    #[error("subset {0:?} is empty")]
    EmptySubset(String),
    #[error("subset {name:?} lists vertex {vertex}, outside the ball")]
    VertexOutOfRange { name: String, vertex: usize },
    #[error("subset {name:?} has vertex {vertex} outside its parent subset")]
    NotNested { name: String, vertex: usize },
    #[error("thickness constant must be a finite real ≥ 0, got {0}")]
    InvalidConstant(f64),
    #[error("D_min must be ≥ 1")]
    InvalidDiameterFloor,
    #[error("subset {name:?}: {reason}")]
    StructureDepthMismatch { name: String, reason: String },
    #[error("structure JSON: {0}")]
    Parse(String),
    #[error("structure file: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
    #[error(transparent)]
    Qg(#[from] QgError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThickStructure {
    #[serde(rename = "C")]
    pub c: f64,
    pub order: u32,
    #[serde(rename = "D_min")]
    pub d_min: u32,
    pub subsets: Vec<Subset>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subset {
    pub name: String,
    /// Ambient ball indices, also inside nested structures.
    pub vertices: Vec<usize>,
    #[serde(default)]
    pub substructure: Option<Box<ThickStructure>>,
}

impl ThickStructure {
    /// The whole ball as a single subset.
    pub fn whole(ball: &GraphBall, c: f64, order: u32, d_min: u32) -> Self {
        ThickStructure {
            c,
            order,
            d_min,
            subsets: vec![Subset { name: "all".into(), vertices: (0..ball.vertex_count()).collect(), substructure: None }],
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ThickError> {
        serde_json::from_str(text).map_err(|e| ThickError::Parse(e.to_string()))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, ThickError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("structure serialises")
    }

    /// Checks the invariants of this level and every nested one.
    pub fn validate(&self, ball: &GraphBall) -> Result<(), ThickError> {
        self.validate_within(ball, None)
    }

    fn validate_within(&self, ball: &GraphBall, parent: Option<&BTreeSet<usize>>) -> Result<(), ThickError> {
        if !(self.c.is_finite() && self.c >= 0.0) {
            return Err(ThickError::InvalidConstant(self.c));
        }
        if self.d_min == 0 {
            return Err(ThickError::InvalidDiameterFloor);
        }
        for s in &self.subsets {
            if s.vertices.is_empty() {
                return Err(ThickError::EmptySubset(s.name.clone()));
            }
            if let Some(&v) = s.vertices.iter().find(|&&v| v >= ball.vertex_count()) {
                return Err(ThickError::VertexOutOfRange { name: s.name.clone(), vertex: v });
            }
            if let Some(parent) = parent {
                if let Some(&v) = s.vertices.iter().find(|v| !parent.contains(v)) {
                    return Err(ThickError::NotNested { name: s.name.clone(), vertex: v });
                }
            }
            if let Some(sub) = &s.substructure {
                if self.order == 0 {
                    return Err(ThickError::StructureDepthMismatch {
                        name: s.name.clone(),
                        reason: "order 0 subsets are leaves and take no substructure".into(),
                    });
                }
                if sub.order >= self.order {
                    return Err(ThickError::StructureDepthMismatch {
                        name: s.name.clone(),
                        reason: format!("substructure order {} is not below {}", sub.order, self.order),
                    });
                }
                let members: BTreeSet<usize> = s.vertices.iter().copied().collect();
                sub.validate_within(ball, Some(&members))?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverReport {
    pub c: f64,
    pub ok: bool,
    pub violator_count: usize,
    /// Smallest violators, at most a few dozen.
    pub violators: Vec<usize>,
}

/// Every ball vertex within `C` of some subset.
pub fn verify_cover(ball: &GraphBall, structure: &ThickStructure) -> CoverReport {
    let depth = structure.c.floor() as u32;
    let sources: Vec<usize> = structure.subsets.iter().flat_map(|s| s.vertices.iter().copied()).collect();
    let mut scratch = BfsScratch::new(ball.vertex_count());
    scratch.run(ball, &sources, |_| false, Some(depth), |_, _| false);
    let dist = scratch.dist();
    let mut violators: Vec<usize> = (0..ball.vertex_count()).filter(|&v| dist[v] == UNREACHED).collect();
    let violator_count = violators.len();
    violators.truncate(LISTED);
    CoverReport { c: structure.c, ok: violator_count == 0, violator_count, violators }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainReport {
    pub d_min: u32,
    pub ok: bool,
    /// Directed edges `(i, j)`: `diam(N_C(Y_i) ∩ Y_j) ≥ D_min`.
    pub edges: Vec<(usize, usize)>,
}

/// Subsets are chained when the overlap graph is strongly connected, so a
/// chain exists between every ordered pair.
pub fn verify_chains(ball: &GraphBall, structure: &ThickStructure) -> ChainReport {
    let depth = structure.c.floor() as u32;
    let k = structure.subsets.len();
    let neighbourhoods: Vec<Vec<bool>> = structure
        .subsets
        .par_iter()
        .map(|s| {
            let mut scratch = BfsScratch::new(ball.vertex_count());
            scratch.run(ball, &s.vertices, |_| false, Some(depth), |_, _| false);
            let mut inside = vec![false; ball.vertex_count()];
            for &v in scratch.touched() {
                inside[v] = true;
            }
            inside
        })
        .collect();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j))).collect();
    let edges: Vec<(usize, usize)> = pairs
        .into_par_iter()
        .filter(|&(i, j)| {
            let mut overlap: Vec<usize> =
                structure.subsets[j].vertices.iter().copied().filter(|&v| neighbourhoods[i][v]).collect();
            overlap.sort_unstable();
            overlap.dedup();
            diameter_at_least(ball, &overlap, structure.d_min)
        })
        .collect();
    let ok = strongly_connected(k, &edges);
    ChainReport { d_min: structure.d_min, ok, edges }
}

/// Whether some pair of `set` is at ambient distance ≥ `floor`.
fn diameter_at_least(ball: &GraphBall, set: &[usize], floor: u32) -> bool {
    if set.len() < 2 {
        return false;
    }
    let mut member = vec![false; ball.vertex_count()];
    for &v in set {
        member[v] = true;
    }
    let mut scratch = BfsScratch::new(ball.vertex_count());
    for &u in set {
        let mut found = false;
        scratch.run(ball, &[u], |_| false, None, |v, d| {
            found = d >= floor && member[v];
            found
        });
        if found {
            return true;
        }
    }
    false
}

fn strongly_connected(k: usize, edges: &[(usize, usize)]) -> bool {
    if k <= 1 {
        return true;
    }
    let reach_all = |forward: bool| {
        let mut seen = vec![false; k];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &(a, b) in edges {
                let (from, to) = if forward { (a, b) } else { (b, a) };
                if from == u && !seen[to] {
                    seen[to] = true;
                    stack.push(to);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach_all(true) && reach_all(false)
}

/// Parameters for the order-0 leaf checks.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ThickParams {
    pub divergence: DivergenceParams,
    /// Quasi-geodesic constant for the wideness probe.
    pub qg_c: f64,
    pub segment_length: u32,
    /// Divergence is fitted over `n_min..=n_max`.
    pub n_min: u32,
    pub n_max: u32,
    pub margin: f64,
    pub protocol: TripleProtocol,
    pub samples: usize,
    pub seed: u64,
    pub thresholds: FitThresholds,
}

impl Default for ThickParams {
    fn default() -> Self {
        ThickParams {
            divergence: DivergenceParams::default(),
            qg_c: 1.0,
            segment_length: 8,
            n_min: 1,
            n_max: 4,
            margin: crate::floyd::DEFAULT_MARGIN,
            protocol: TripleProtocol::Auto,
            samples: crate::divergence::DEFAULT_SAMPLES,
            seed: 0,
            thresholds: FitThresholds::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LeafReport {
    pub connected: bool,
    pub eligible: usize,
    pub pass_fraction: f64,
    /// Ambient indices of probe failures, at most a few dozen.
    pub failures: Vec<usize>,
    pub slope: Option<f64>,
    pub divergence_verdict: Option<GrowthVerdict>,
    /// Every leaf witness lies within `(k+1)C` of its vertex, so it serves
    /// each enclosing level too.
    pub leaf_reach_ok: bool,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubsetVerdict {
    pub name: String,
    pub size: usize,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leaf: Option<LeafReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nested: Option<Box<ThickVerdict>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThickVerdict {
    pub order: u32,
    #[serde(rename = "C")]
    pub c: f64,
    /// The finite stand-in for infinite diameter.
    #[serde(rename = "D_min")]
    pub d_min: u32,
    pub cover_ok: bool,
    pub cover: CoverReport,
    pub chain_ok: bool,
    pub chains: ChainReport,
    pub recursive_ok: bool,
    pub subsets: Vec<SubsetVerdict>,
    pub overall: bool,
}

pub fn verify_thick(ball: &GraphBall, structure: &ThickStructure, params: &ThickParams) -> Result<ThickVerdict, ThickError> {
    structure.validate(ball)?;
    verify_level(ball, structure, params, None, structure.order)
}

fn verify_level(
    ball: &GraphBall,
    structure: &ThickStructure,
    params: &ThickParams,
    region: Option<&[usize]>,
    top_order: u32,
) -> Result<ThickVerdict, ThickError> {
    let (cover, chains) = match region {
        None => (verify_cover(ball, structure), verify_chains(ball, structure)),
        Some(r) => {
            // Nested levels are measured in their parent's induced metric.
            let (sub, map) = ball.induced(r).map_err(|_| ThickError::StructureDepthMismatch {
                name: "parent".into(),
                reason: "induced subgraph is disconnected".into(),
            })?;
            let local = localise(structure, &map);
            let mut cover = verify_cover(&sub, &local);
            cover.violators = cover.violators.iter().map(|&v| map[v]).collect();
            let chains = verify_chains(&sub, &local);
            (cover, chains)
        }
    };
    let mut subsets = Vec::with_capacity(structure.subsets.len());
    for s in &structure.subsets {
        let verdict = match &s.substructure {
            Some(sub) => {
                let nested = verify_level(ball, sub, params, Some(&s.vertices), top_order)?;
                SubsetVerdict { name: s.name.clone(), size: s.vertices.len(), ok: nested.overall, leaf: None, nested: Some(Box::new(nested)) }
            }
            None => {
                let leaf = verify_leaf(ball, &s.vertices, params, top_order)?;
                SubsetVerdict { name: s.name.clone(), size: s.vertices.len(), ok: leaf.ok, leaf: Some(leaf), nested: None }
            }
        };
        subsets.push(verdict);
    }
    let recursive_ok = subsets.iter().all(|s| s.ok);
    Ok(ThickVerdict {
        order: structure.order,
        c: structure.c,
        d_min: structure.d_min,
        cover_ok: cover.ok,
        cover,
        chain_ok: chains.ok,
        chains,
        recursive_ok,
        overall: false,
        subsets,
    })
    .map(|mut v| {
        v.overall = v.cover_ok && v.chain_ok && v.recursive_ok;
        v
    })
}

/// Rewrites a structure's vertex lists into the local labels of an induced
/// sub-ball whose local→ambient map is `map`.
fn localise(structure: &ThickStructure, map: &[usize]) -> ThickStructure {
    let mut to_local = std::collections::HashMap::with_capacity(map.len());
    for (l, &a) in map.iter().enumerate() {
        to_local.insert(a, l);
    }
    ThickStructure {
        c: structure.c,
        order: structure.order,
        d_min: structure.d_min,
        subsets: structure
            .subsets
            .iter()
            .map(|s| Subset {
                name: s.name.clone(),
                vertices: s.vertices.iter().map(|v| to_local[v]).collect(),
                substructure: None,
            })
            .collect(),
    }
}

fn verify_leaf(ball: &GraphBall, vertices: &[usize], params: &ThickParams, top_order: u32) -> Result<LeafReport, ThickError> {
    let Ok((sub, map)) = ball.induced(vertices) else {
        return Ok(LeafReport {
            connected: false,
            eligible: 0,
            pass_fraction: 0.0,
            failures: Vec::new(),
            slope: None,
            divergence_verdict: None,
            leaf_reach_ok: false,
            ok: false,
        });
    };
    let probe = wideness_probe(&sub, params.qg_c, params.segment_length)?;
    let reach = (top_order as f64 + 1.0) * params.qg_c;
    let mut scratch = BfsScratch::new(sub.vertex_count());
    let leaf_reach_ok = probe.probes.iter().all(|p| {
        p.witness.as_ref().map_or(true, |w| {
            let on_witness: BTreeSet<usize> = w.vertices.iter().copied().collect();
            let mut near = false;
            scratch.run(&sub, &[p.vertex], |_| false, Some(reach.floor() as u32), |v, _| {
                near = on_witness.contains(&v);
                near
            });
            near
        })
    });
    let estimate = div_function_estimate(
        &sub,
        params.n_max,
        params.divergence,
        params.protocol,
        params.seed,
        EstimateOptions { margin: params.margin, samples: params.samples, ..EstimateOptions::default() },
    )?;
    let window: Vec<_> = estimate.samples.iter().copied().filter(|s| s.n >= params.n_min).collect();
    let fit = growth_fit(&window, params.thresholds)?;
    let ok = probe.pass_fraction == 1.0 && fit.verdict == GrowthVerdict::LinearCompatible;
    Ok(LeafReport {
        connected: true,
        eligible: probe.eligible,
        pass_fraction: probe.pass_fraction,
        failures: probe.failures.iter().take(LISTED).map(|&v| map[v]).collect(),
        slope: fit.slope,
        divergence_verdict: Some(fit.verdict),
        leaf_reach_ok,
        ok,
    })
}
