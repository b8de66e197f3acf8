//! Independent oracles shared by the integration tests. Nothing here calls
//! the library's own shortest-path code.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, VecDeque};

use floydlab::graph::GraphBall;
use floydlab::groups::{labelled_cayley_ball, locate_word, Element, GroupModel, DEFAULT_VERTEX_CAP};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random connected graph on `2..=max_vertices` vertices: a random tree
/// plus each remaining pair with probability `extra`.
pub fn random_connected_edges(seed: u64, max_vertices: usize, extra: f64) -> (usize, Vec<(usize, usize)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_vertices);
    let mut edges = BTreeSet::new();
    for v in 1..n {
        let u = rng.gen_range(0..v);
        edges.insert((u, v));
    }
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(extra) {
                edges.insert((u, v));
            }
        }
    }
    (n, edges.into_iter().collect())
}

pub fn ball_from(n: usize, edges: &[(usize, usize)]) -> GraphBall {
    GraphBall::with_vertex_count(n, edges, 0, n as u32).expect("connected test graph")
}

pub fn adjacency(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    adj
}

pub fn bfs_distances(adj: &[Vec<usize>], source: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[source] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Minimum over every simple path of the summed edge weights
/// `f(min(d(b,u), d(b,v)))`, for all ordered pairs.
pub fn brute_force_floyd(n: usize, edges: &[(usize, usize)], base: usize, f: impl Fn(usize) -> f64) -> Vec<Vec<f64>> {
    let adj = adjacency(n, edges);
    let level = bfs_distances(&adj, base);
    let weight = |u: usize, v: usize| f(level[u].min(level[v]));
    let mut best = vec![vec![f64::INFINITY; n]; n];
    for s in 0..n {
        let mut on_path = vec![false; n];
        extend(&adj, &weight, s, 0.0, &mut on_path, &mut best[s]);
    }
    best
}

fn extend(
    adj: &[Vec<usize>],
    weight: &impl Fn(usize, usize) -> f64,
    u: usize,
    length: f64,
    on_path: &mut [bool],
    best: &mut [f64],
) {
    on_path[u] = true;
    if length < best[u] {
        best[u] = length;
    }
    for &v in &adj[u] {
        if !on_path[v] {
            extend(adj, weight, v, length + weight(u, v), on_path, best);
        }
    }
    on_path[u] = false;
}

/// `f(n) = n^-p` with `f(0) = f(1)`, evaluated independently of the library.
pub fn inverse_power(p: f64) -> impl Fn(usize) -> f64 {
    move |n| (n.max(1) as f64).powf(-p)
}

/// Z² ball with a lookup from lattice points to vertices.
pub struct Grid {
    pub ball: GraphBall,
    pub index: HashMap<(i64, i64), usize>,
}

impl Grid {
    pub fn new(radius: u32) -> Self {
        let model = floydlab::groups::FreeAbelian { rank: 2 };
        let (ball, elements) = labelled_cayley_ball(&model, radius, DEFAULT_VERTEX_CAP).unwrap();
        let index = elements
            .iter()
            .enumerate()
            .map(|(v, e)| match e {
                Element::Vector(xy) => ((xy[0], xy[1]), v),
                _ => unreachable!("Z² elements are vectors"),
            })
            .collect();
        Grid { ball, index }
    }

    pub fn at(&self, x: i64, y: i64) -> usize {
        self.index[&(x, y)]
    }
}

/// Vertex reached from the identity by a word of generator indices.
pub fn vertex_of(model: &dyn GroupModel, radius: u32, word: &[usize]) -> (GraphBall, usize) {
    let (ball, elements) = labelled_cayley_ball(model, radius, DEFAULT_VERTEX_CAP).unwrap();
    let v = locate_word(model, &elements, word).expect("word inside the ball");
    (ball, v)
}

/// Sphere sizes by enumerating every word of length ≤ `radius` and keeping
/// the shortest length reaching each element.
pub fn word_enumeration_growth(model: &dyn GroupModel, radius: u32) -> Vec<usize> {
    let mut shortest: HashMap<Vec<u8>, u32> = HashMap::new();
    let mut words: Vec<Element> = vec![model.identity()];
    shortest.insert(model.canonical_key(&model.identity()), 0);
    for len in 1..=radius {
        let mut next = Vec::with_capacity(words.len() * model.generator_count());
        for w in &words {
            for g in 0..model.generator_count() {
                let x = model.multiply(w, g);
                shortest.entry(model.canonical_key(&x)).or_insert(len);
                next.push(x);
            }
        }
        words = next;
    }
    let mut sizes = vec![0; radius as usize + 1];
    for &l in shortest.values() {
        sizes[l as usize] += 1;
    }
    sizes
}
