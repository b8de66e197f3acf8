//! Finite balls of locally finite graphs.
//!
//! A [`GraphBall`] is an immutable, connected, based graph stored in
//! compressed adjacency form. The base is always vertex `0`; every other
//! vertex carries its BFS distance to the base. Vertices at distance
//! `< radius` have their full ambient neighbourhood, vertices on the outer
//! sphere may be truncated.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

/// Sentinel for "not reached" in BFS distance vectors.
pub const UNREACHED: u32 = u32::MAX;

const FILE_MAGIC: &str = "floydlab-graph v1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("edge list is empty")]
    EmptyEdgeList,
    #[error("base vertex {0} does not appear in the graph")]
    BaseNotInGraph(usize),
    #[error("vertex {vertex} out of range for {vertex_count} vertices")]
    VertexOutOfRange { vertex: usize, vertex_count: usize },
    #[error("self loop at vertex {0}")]
    SelfLoop(usize),
    #[error("adjacency is not symmetric: {0} lists {1} but not conversely")]
    Asymmetric(usize, usize),
    #[error("graph is disconnected: vertex {0} unreachable from base")]
    DisconnectedGraph(usize),
    #[error("vertex {vertex} lies at distance {distance} > declared radius {radius}")]
    RadiusMismatch { vertex: usize, distance: u32, radius: u32 },
    #[error("sphere radius {r} outside 0..={radius}")]
    RadiusOutOfRange { r: u32, radius: u32 },
    #[error("vertex set is empty")]
    EmptyVertexSet,
}

#[derive(Debug, Error)]
pub enum GraphFileError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("graph fails ball invariants: {0}")]
    Consistency(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Facts about the ambient (untruncated) graph that a producer such as a
/// Cayley-ball generator can vouch for. Graphs read from files carry none.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AmbientHints {
    /// Automorphisms act transitively on vertices (true for Cayley graphs).
    pub vertex_transitive: bool,
    /// The ambient graph is a tree, so in-ball paths are exact.
    pub tree: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphBall {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    dist: Vec<u32>,
    radius: u32,
    hints: AmbientHints,
}

/// All vertices at a fixed distance from the base, in ascending index order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sphere {
    pub radius: u32,
    pub vertices: Vec<usize>,
}

impl GraphBall {
    /// Builds a ball from an edge list. The vertex count is one more than the
    /// largest endpoint; duplicate edges are merged.
    pub fn from_edges(
        edges: &[(usize, usize)],
        base: usize,
        declared_radius: u32,
    ) -> Result<Self, GraphError> {
        if edges.is_empty() {
            return Err(GraphError::EmptyEdgeList);
        }
        let vertex_count = edges.iter().map(|&(u, v)| u.max(v)).max().unwrap_or(0) + 1;
        if !edges.iter().any(|&(u, v)| u == base || v == base) {
            return Err(GraphError::BaseNotInGraph(base));
        }
        Self::with_vertex_count(vertex_count, edges, base, declared_radius)
    }

    /// Like [`GraphBall::from_edges`] but with an explicit vertex count, so a
    /// single isolated base vertex (`vertex_count = 1`, no edges) is allowed.
    pub fn with_vertex_count(
        vertex_count: usize,
        edges: &[(usize, usize)],
        base: usize,
        declared_radius: u32,
    ) -> Result<Self, GraphError> {
        if vertex_count == 0 {
            return Err(GraphError::EmptyVertexSet);
        }
        if base >= vertex_count {
            return Err(GraphError::BaseNotInGraph(base));
        }
        let mut adjacency = vec![Vec::new(); vertex_count];
        for &(u, v) in edges {
            for w in [u, v] {
                if w >= vertex_count {
                    return Err(GraphError::VertexOutOfRange { vertex: w, vertex_count });
                }
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            adjacency[u].push(v as u32);
            adjacency[v].push(u as u32);
        }
        Self::from_adjacency(adjacency, base, declared_radius)
    }

    /// Builds a ball from per-vertex neighbour lists. Lists are sorted and
    /// deduplicated; symmetry, loops, connectivity and radius are checked.
    /// If `base != 0`, the base and vertex `0` swap labels.
    pub fn from_adjacency(
        mut adjacency: Vec<Vec<u32>>,
        base: usize,
        declared_radius: u32,
    ) -> Result<Self, GraphError> {
        let n = adjacency.len();
        if n == 0 {
            return Err(GraphError::EmptyVertexSet);
        }
        if base >= n {
            return Err(GraphError::BaseNotInGraph(base));
        }
        for (u, list) in adjacency.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup();
            if let Some(&w) = list.iter().find(|&&w| w as usize >= n) {
                return Err(GraphError::VertexOutOfRange { vertex: w as usize, vertex_count: n });
            }
            if list.binary_search(&(u as u32)).is_ok() {
                return Err(GraphError::SelfLoop(u));
            }
        }
        for (u, list) in adjacency.iter().enumerate() {
            for &w in list {
                if adjacency[w as usize].binary_search(&(u as u32)).is_err() {
                    return Err(GraphError::Asymmetric(u, w as usize));
                }
            }
        }

        if base != 0 {
            let relabel = |w: u32| -> u32 {
                if w as usize == base {
                    0
                } else if w == 0 {
                    base as u32
                } else {
                    w
                }
            };
            adjacency.swap(0, base);
            for list in adjacency.iter_mut() {
                for w in list.iter_mut() {
                    *w = relabel(*w);
                }
                list.sort_unstable();
            }
        }

        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::with_capacity(adjacency.iter().map(Vec::len).sum());
        offsets.push(0);
        for list in &adjacency {
            targets.extend_from_slice(list);
            offsets.push(targets.len());
        }
        let mut ball = GraphBall {
            offsets,
            targets,
            dist: Vec::new(),
            radius: declared_radius,
            hints: AmbientHints::default(),
        };
        let dist = ball.bfs(&[0], |_| false, None);
        if let Some(v) = dist.iter().position(|&d| d == UNREACHED) {
            let original = if v == 0 { base } else if v == base { 0 } else { v };
            return Err(GraphError::DisconnectedGraph(original));
        }
        if let Some((v, &d)) = dist.iter().enumerate().find(|(_, &d)| d > declared_radius) {
            return Err(GraphError::RadiusMismatch { vertex: v, distance: d, radius: declared_radius });
        }
        ball.dist = dist;
        Ok(ball)
    }

    pub fn with_hints(mut self, hints: AmbientHints) -> Self {
        self.hints = hints;
        self
    }

    pub fn without_hints(self) -> Self {
        self.with_hints(AmbientHints::default())
    }

    pub fn hints(&self) -> AmbientHints {
        self.hints
    }

    pub fn vertex_count(&self) -> usize {
        self.dist.len()
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn base(&self) -> usize {
        0
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    #[inline]
    pub fn dist_to_base(&self, v: usize) -> u32 {
        self.dist[v]
    }

    pub fn base_distances(&self) -> &[u32] {
        &self.dist
    }

    pub fn is_adjacent(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&(v as u32)).is_ok()
    }

    /// Edges `(u, v)` with `u < v` in ascending lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.vertex_count()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .map(|&w| w as usize)
                .filter(move |&w| w > u)
                .map(move |w| (u, w))
        })
    }

    pub fn sphere(&self, r: u32) -> Result<Sphere, GraphError> {
        if r > self.radius {
            return Err(GraphError::RadiusOutOfRange { r, radius: self.radius });
        }
        let vertices = (0..self.vertex_count()).filter(|&v| self.dist[v] == r).collect();
        Ok(Sphere { radius: r, vertices })
    }

    /// Sizes of all spheres `S_0..=S_radius`.
    pub fn sphere_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.radius as usize + 1];
        for &d in &self.dist {
            sizes[d as usize] += 1;
        }
        sizes
    }

    /// Multi-source BFS avoiding `blocked` vertices (sources are never
    /// blocked), optionally stopping at `max_depth`.
    pub fn bfs(
        &self,
        sources: &[usize],
        blocked: impl Fn(usize) -> bool,
        max_depth: Option<u32>,
    ) -> Vec<u32> {
        let mut dist = vec![UNREACHED; self.offsets.len() - 1];
        let mut queue = VecDeque::new();
        for &s in sources {
            if dist[s] == UNREACHED {
                dist[s] = 0;
                queue.push_back(s);
            }
        }
        while let Some(u) = queue.pop_front() {
            let du = dist[u];
            if max_depth.is_some_and(|m| du >= m) {
                continue;
            }
            for &w in self.neighbors(u) {
                let w = w as usize;
                if dist[w] == UNREACHED && !blocked(w) {
                    dist[w] = du + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Distances from `source` to every vertex, inside the ball.
    pub fn distances_from(&self, source: usize) -> Vec<u32> {
        self.bfs(&[source], |_| false, None)
    }

    /// Shortest-path length inside the ball. Far from the truncation sphere
    /// this is the ambient distance; near it, only an upper bound.
    pub fn graph_distance(&self, u: usize, v: usize) -> u32 {
        if u == v {
            return 0;
        }
        let mut dist = vec![UNREACHED; self.vertex_count()];
        let mut queue = VecDeque::from([u]);
        dist[u] = 0;
        while let Some(x) = queue.pop_front() {
            for &w in self.neighbors(x) {
                let w = w as usize;
                if dist[w] == UNREACHED {
                    dist[w] = dist[x] + 1;
                    if w == v {
                        return dist[w];
                    }
                    queue.push_back(w);
                }
            }
        }
        UNREACHED
    }

    /// Walks back from `target` along strictly decreasing entries of a BFS
    /// distance vector, returning a geodesic from the BFS source to `target`.
    /// Among equally good predecessors the smallest index is taken.
    pub fn trace_geodesic(&self, dist: &[u32], target: usize) -> Option<Vec<usize>> {
        if dist[target] == UNREACHED {
            return None;
        }
        let mut path = vec![target];
        let mut cur = target;
        while dist[cur] > 0 {
            let next = self
                .neighbors(cur)
                .iter()
                .map(|&w| w as usize)
                .find(|&w| dist[w] != UNREACHED && dist[w] + 1 == dist[cur])?;
            path.push(next);
            cur = next;
        }
        path.reverse();
        Some(path)
    }

    /// Induced subgraph on `vertices`, based at the member closest to the
    /// ambient base (smallest index on ties). Returns the sub-ball and the
    /// map from local to ambient indices. Fails if the induced subgraph is
    /// disconnected.
    pub fn induced(&self, vertices: &[usize]) -> Result<(GraphBall, Vec<usize>), GraphError> {
        let mut members: Vec<usize> = vertices.to_vec();
        members.sort_unstable();
        members.dedup();
        if members.is_empty() {
            return Err(GraphError::EmptyVertexSet);
        }
        if let Some(&v) = members.iter().find(|&&v| v >= self.vertex_count()) {
            return Err(GraphError::VertexOutOfRange { vertex: v, vertex_count: self.vertex_count() });
        }
        let whole = members.len() == self.vertex_count();
        let mut local = vec![u32::MAX; self.vertex_count()];
        for (i, &v) in members.iter().enumerate() {
            local[v] = i as u32;
        }
        let adjacency: Vec<Vec<u32>> = members
            .iter()
            .map(|&v| {
                self.neighbors(v)
                    .iter()
                    .filter_map(|&w| {
                        let l = local[w as usize];
                        (l != u32::MAX).then_some(l)
                    })
                    .collect()
            })
            .collect();
        let base_local = (0..members.len())
            .min_by_key(|&i| (self.dist[members[i]], members[i]))
            .expect("nonempty");

        // Radius is only known after BFS; build with a permissive radius and
        // then tighten.
        let probe = GraphBall::from_adjacency(adjacency, base_local, u32::MAX)?;
        let radius = probe.dist.iter().copied().max().unwrap_or(0);
        let mut sub = probe;
        sub.radius = radius;
        if whole {
            sub.hints = self.hints;
        }
        // Undo the base/0 label swap in the local→ambient map.
        let mut map = members;
        map.swap(0, base_local);
        Ok((sub, map))
    }
}

/// Reusable BFS state for many small searches on one large ball. Only the
/// vertices touched by the previous run are reset.
pub struct BfsScratch {
    dist: Vec<u32>,
    touched: Vec<usize>,
    head: usize,
}

impl BfsScratch {
    pub fn new(vertex_count: usize) -> Self {
        BfsScratch { dist: vec![UNREACHED; vertex_count], touched: Vec::new(), head: 0 }
    }

    /// BFS from `sources`, never entering `blocked` vertices and not
    /// expanding past `max_depth`. `visit` sees each vertex as it is
    /// discovered (sources included) and may return `true` to stop early.
    pub fn run(
        &mut self,
        ball: &GraphBall,
        sources: &[usize],
        blocked: impl Fn(usize) -> bool,
        max_depth: Option<u32>,
        mut visit: impl FnMut(usize, u32) -> bool,
    ) {
        for &v in &self.touched {
            self.dist[v] = UNREACHED;
        }
        self.touched.clear();
        self.head = 0;
        for &s in sources {
            if self.dist[s] == UNREACHED {
                self.dist[s] = 0;
                self.touched.push(s);
                if visit(s, 0) {
                    return;
                }
            }
        }
        while self.head < self.touched.len() {
            let u = self.touched[self.head];
            self.head += 1;
            let du = self.dist[u];
            if max_depth.is_some_and(|m| du >= m) {
                continue;
            }
            for &w in ball.neighbors(u) {
                let w = w as usize;
                if self.dist[w] == UNREACHED && !blocked(w) {
                    self.dist[w] = du + 1;
                    self.touched.push(w);
                    if visit(w, du + 1) {
                        return;
                    }
                }
            }
        }
    }

    /// Distances of the last run; `UNREACHED` outside the explored region.
    pub fn dist(&self) -> &[u32] {
        &self.dist
    }

    /// Vertices discovered by the last run, in discovery order.
    pub fn touched(&self) -> &[usize] {
        &self.touched
    }
}

/// Serialises a ball in the `floydlab-graph v1` text format.
pub fn write_graph(ball: &GraphBall) -> String {
    let mut out = String::new();
    out.push_str(FILE_MAGIC);
    out.push('\n');
    let _ = writeln!(out, "{} {} {} {}", ball.vertex_count(), ball.edge_count(), ball.base(), ball.radius());
    for (u, v) in ball.edges() {
        let _ = writeln!(out, "{u} {v}");
    }
    out
}

pub fn write_graph_file(ball: &GraphBall, path: impl AsRef<Path>) -> Result<(), GraphFileError> {
    std::fs::write(path, write_graph(ball))?;
    Ok(())
}

pub fn read_graph_file(path: impl AsRef<Path>) -> Result<GraphBall, GraphFileError> {
    let text = std::fs::read_to_string(path)?;
    parse_graph(&text)
}

fn parse_err(line: usize, message: impl Into<String>) -> GraphFileError {
    GraphFileError::Parse { line, message: message.into() }
}

/// Canonical decimal: ASCII digits only, no sign, no redundant leading zero.
fn parse_number(field: &str, line: usize) -> Result<usize, GraphFileError> {
    let canonical = !field.is_empty()
        && field.bytes().all(|b| b.is_ascii_digit())
        && !(field.len() > 1 && field.starts_with('0'));
    if !canonical {
        return Err(parse_err(line, format!("malformed integer {field:?}")));
    }
    field.parse().map_err(|_| parse_err(line, format!("integer {field:?} out of range")))
}

fn parse_fields<const N: usize>(text: &str, line: usize) -> Result<[usize; N], GraphFileError> {
    let parts: Vec<&str> = text.split(' ').collect();
    if parts.len() != N {
        return Err(parse_err(line, format!("expected {N} space-separated fields")));
    }
    let mut out = [0; N];
    for (slot, part) in out.iter_mut().zip(parts) {
        *slot = parse_number(part, line)?;
    }
    Ok(out)
}

/// Parses the `floydlab-graph v1` format, rejecting any deviation from what
/// [`write_graph`] emits.
pub fn parse_graph(text: &str) -> Result<GraphBall, GraphFileError> {
    if !text.ends_with('\n') {
        let last = text.split('\n').count();
        return Err(parse_err(last, "missing final line feed"));
    }
    let lines: Vec<&str> = text[..text.len() - 1].split('\n').collect();
    if let Some(i) = lines.iter().position(|l| l.contains('\r')) {
        return Err(parse_err(i + 1, "carriage return not allowed"));
    }
    if lines[0] != FILE_MAGIC {
        return Err(parse_err(1, format!("expected header {FILE_MAGIC:?}, found {:?}", lines[0])));
    }
    let header = lines.get(1).ok_or_else(|| parse_err(2, "missing size line"))?;
    let [vertex_count, edge_count, base, radius] = parse_fields::<4>(header, 2)?;
    let radius = u32::try_from(radius).map_err(|_| parse_err(2, "radius out of range"))?;
    let body = &lines[2..];
    if body.len() != edge_count {
        let line = 3 + body.len().min(edge_count);
        return Err(parse_err(
            line,
            format!("declared {edge_count} edges but found {} edge lines", body.len()),
        ));
    }
    let mut edges = Vec::with_capacity(edge_count);
    for (i, text) in body.iter().enumerate() {
        let line = i + 3;
        let [u, v] = parse_fields::<2>(text, line)?;
        if u >= v {
            return Err(parse_err(line, format!("edge {u} {v} must satisfy u < v")));
        }
        if let Some(&prev) = edges.last() {
            if (u, v) <= prev {
                return Err(parse_err(line, "edges must be strictly ascending"));
            }
        }
        edges.push((u, v));
    }
    Ok(GraphBall::with_vertex_count(vertex_count, &edges, base, radius)?)
}
