//! Group models with canonical normal forms and Cayley-ball enumeration.
//!
//! Generator conventions (they fix the Cayley graph, so they matter):
//!
//! * `FreeAbelian(n)`: `x1, X1, x2, X2, ...` for `+e_i, -e_i`.
//! * `Free(k)`: `a, A, b, B, ...`, uppercase is the inverse letter.
//! * `Heisenberg`: `a, A, b, B` with `a = (1,0,0)`, `b = (0,1,0)` and
//!   `(x,y,z)·(x',y',z') = (x+x', y+y', z+z'+x·y')`.
//! * `DirectProduct(L, R)` / `FreeProduct(L, R)`: the generators of `L`
//!   prefixed `L.` followed by those of `R` prefixed `R.`.
//!
//! In every model generator `2i + 1` is the inverse of generator `2i`.

use std::collections::HashMap;

use thiserror::Error;

use crate::graph::{AmbientHints, GraphBall, GraphError};

pub const DEFAULT_VERTEX_CAP: usize = 5_000_000;

#[derive(Debug, Error)]
pub enum GroupError {
    #[error("ball exceeds the vertex cap of {cap}")]
    BallTooLarge { cap: usize },
    #[error("model axiom violation in {model}: (x·{generator})·{generator}⁻¹ ≠ x")]
    ModelAxiomViolation { model: String, generator: String },
    #[error("unknown model specification {0:?}")]
    UnknownModel(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Which factor a free-product syllable belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Factor {
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Element {
    /// Integer coordinates (free abelian groups, Heisenberg triples).
    Vector(Vec<i64>),
    /// Freely reduced word; letter `i + 1` is generator `i`, `-(i + 1)` its inverse.
    Word(Vec<i32>),
    Pair(Box<Element>, Box<Element>),
    /// Nonempty syllables alternating between the two factors, each nontrivial.
    Syllables(Vec<(Factor, Element)>),
}

impl Element {
    /// Self-delimiting byte encoding; injective on elements.
    pub fn encode(&self, out: &mut Vec<u8>) {
        match self {
            Element::Vector(v) => {
                out.push(1);
                out.extend_from_slice(&(v.len() as u32).to_le_bytes());
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            Element::Word(w) => {
                out.push(2);
                out.extend_from_slice(&(w.len() as u32).to_le_bytes());
                for x in w {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            Element::Pair(a, b) => {
                out.push(3);
                a.encode(out);
                b.encode(out);
            }
            Element::Syllables(s) => {
                out.push(4);
                out.extend_from_slice(&(s.len() as u32).to_le_bytes());
                for (factor, e) in s {
                    out.push(match factor {
                        Factor::Left => 0,
                        Factor::Right => 1,
                    });
                    e.encode(out);
                }
            }
        }
    }
}

/// Group arithmetic over a symmetric finite generating set.
pub trait GroupModel: Send + Sync {
    /// CLI-style name, e.g. `zn:2`.
    fn name(&self) -> String;
    fn generators(&self) -> Vec<String>;
    fn identity(&self) -> Element;
    /// Right multiplication `x · g` by generator index `g`.
    fn multiply(&self, x: &Element, g: usize) -> Element;

    fn generator_count(&self) -> usize {
        self.generators().len()
    }

    fn inverse_generator(&self, g: usize) -> usize {
        g ^ 1
    }

    fn canonical_key(&self, x: &Element) -> Vec<u8> {
        let mut out = Vec::new();
        x.encode(&mut out);
        out
    }

    /// Whether the Cayley graph for these generators is a tree.
    fn cayley_graph_is_tree(&self) -> bool {
        false
    }
}

fn letter_label(i: usize, inverse: bool) -> String {
    if i < 26 {
        let c = (b'a' + i as u8) as char;
        if inverse {
            c.to_ascii_uppercase().to_string()
        } else {
            c.to_string()
        }
    } else if inverse {
        format!("G{}", i + 1)
    } else {
        format!("g{}", i + 1)
    }
}

#[derive(Clone, Debug)]
pub struct FreeAbelian {
    pub rank: usize,
}

impl GroupModel for FreeAbelian {
    fn name(&self) -> String {
        format!("zn:{}", self.rank)
    }

    fn generators(&self) -> Vec<String> {
        (1..=self.rank).flat_map(|i| [format!("x{i}"), format!("X{i}")]).collect()
    }

    fn generator_count(&self) -> usize {
        2 * self.rank
    }

    fn identity(&self) -> Element {
        Element::Vector(vec![0; self.rank])
    }

    fn multiply(&self, x: &Element, g: usize) -> Element {
        let Element::Vector(v) = x else { unreachable!("free abelian element must be a vector") };
        let mut v = v.clone();
        v[g / 2] += if g % 2 == 0 { 1 } else { -1 };
        Element::Vector(v)
    }

    fn cayley_graph_is_tree(&self) -> bool {
        self.rank <= 1
    }
}

#[derive(Clone, Debug)]
pub struct Free {
    pub rank: usize,
}

impl GroupModel for Free {
    fn name(&self) -> String {
        format!("free:{}", self.rank)
    }

    fn generators(&self) -> Vec<String> {
        (0..self.rank).flat_map(|i| [letter_label(i, false), letter_label(i, true)]).collect()
    }

    fn generator_count(&self) -> usize {
        2 * self.rank
    }

    fn identity(&self) -> Element {
        Element::Word(Vec::new())
    }

    fn multiply(&self, x: &Element, g: usize) -> Element {
        let Element::Word(w) = x else { unreachable!("free group element must be a word") };
        let letter = (g / 2 + 1) as i32 * if g % 2 == 0 { 1 } else { -1 };
        let mut w = w.clone();
        if w.last() == Some(&-letter) {
            w.pop();
        } else {
            w.push(letter);
        }
        Element::Word(w)
    }

    fn cayley_graph_is_tree(&self) -> bool {
        true
    }
}

#[derive(Clone, Debug, Default)]
pub struct Heisenberg;

impl GroupModel for Heisenberg {
    fn name(&self) -> String {
        "heis".into()
    }

    fn generators(&self) -> Vec<String> {
        ["a", "A", "b", "B"].map(String::from).to_vec()
    }

    fn generator_count(&self) -> usize {
        4
    }

    fn identity(&self) -> Element {
        Element::Vector(vec![0, 0, 0])
    }

    fn multiply(&self, x: &Element, g: usize) -> Element {
        let Element::Vector(v) = x else { unreachable!("Heisenberg element must be a triple") };
        let (x, y, z) = (v[0], v[1], v[2]);
        let (dx, dy) = match g {
            0 => (1, 0),
            1 => (-1, 0),
            2 => (0, 1),
            3 => (0, -1),
            _ => panic!("Heisenberg has four generators"),
        };
        Element::Vector(vec![x + dx, y + dy, z + x * dy])
    }
}

pub struct DirectProduct {
    pub left: Box<dyn GroupModel>,
    pub right: Box<dyn GroupModel>,
}

impl GroupModel for DirectProduct {
    fn name(&self) -> String {
        format!("prod:{},{}", wrap(&self.left.name()), wrap(&self.right.name()))
    }

    fn generators(&self) -> Vec<String> {
        prefixed_generators(self.left.as_ref(), self.right.as_ref())
    }

    fn generator_count(&self) -> usize {
        self.left.generator_count() + self.right.generator_count()
    }

    fn identity(&self) -> Element {
        Element::Pair(Box::new(self.left.identity()), Box::new(self.right.identity()))
    }

    fn multiply(&self, x: &Element, g: usize) -> Element {
        let Element::Pair(a, b) = x else { unreachable!("product element must be a pair") };
        let split = self.left.generator_count();
        if g < split {
            Element::Pair(Box::new(self.left.multiply(a, g)), b.clone())
        } else {
            Element::Pair(a.clone(), Box::new(self.right.multiply(b, g - split)))
        }
    }

    fn inverse_generator(&self, g: usize) -> usize {
        let split = self.left.generator_count();
        if g < split {
            self.left.inverse_generator(g)
        } else {
            split + self.right.inverse_generator(g - split)
        }
    }

    fn cayley_graph_is_tree(&self) -> bool {
        let (l, r) = (&self.left, &self.right);
        (l.generator_count() == 0 && r.cayley_graph_is_tree())
            || (r.generator_count() == 0 && l.cayley_graph_is_tree())
    }
}

pub struct FreeProduct {
    pub left: Box<dyn GroupModel>,
    pub right: Box<dyn GroupModel>,
}

impl FreeProduct {
    fn factor(&self, side: Factor) -> &dyn GroupModel {
        match side {
            Factor::Left => self.left.as_ref(),
            Factor::Right => self.right.as_ref(),
        }
    }
}

impl GroupModel for FreeProduct {
    fn name(&self) -> String {
        format!("freeprod:{},{}", wrap(&self.left.name()), wrap(&self.right.name()))
    }

    fn generators(&self) -> Vec<String> {
        prefixed_generators(self.left.as_ref(), self.right.as_ref())
    }

    fn generator_count(&self) -> usize {
        self.left.generator_count() + self.right.generator_count()
    }

    fn identity(&self) -> Element {
        Element::Syllables(Vec::new())
    }

    fn multiply(&self, x: &Element, g: usize) -> Element {
        let Element::Syllables(s) = x else { unreachable!("free product element must be syllables") };
        let split = self.left.generator_count();
        let (side, local) = if g < split { (Factor::Left, g) } else { (Factor::Right, g - split) };
        let factor = self.factor(side);
        let identity_key = factor.canonical_key(&factor.identity());
        let mut s = s.clone();
        match s.last_mut() {
            Some((last_side, syllable)) if *last_side == side => {
                let next = factor.multiply(syllable, local);
                if factor.canonical_key(&next) == identity_key {
                    s.pop();
                } else {
                    *syllable = next;
                }
            }
            _ => {
                let next = factor.multiply(&factor.identity(), local);
                if factor.canonical_key(&next) != identity_key {
                    s.push((side, next));
                }
            }
        }
        Element::Syllables(s)
    }

    fn inverse_generator(&self, g: usize) -> usize {
        let split = self.left.generator_count();
        if g < split {
            self.left.inverse_generator(g)
        } else {
            split + self.right.inverse_generator(g - split)
        }
    }

    fn cayley_graph_is_tree(&self) -> bool {
        self.left.cayley_graph_is_tree() && self.right.cayley_graph_is_tree()
    }
}

fn prefixed_generators(left: &dyn GroupModel, right: &dyn GroupModel) -> Vec<String> {
    left.generators()
        .into_iter()
        .map(|g| format!("L.{g}"))
        .chain(right.generators().into_iter().map(|g| format!("R.{g}")))
        .collect()
}

fn wrap(name: &str) -> String {
    if name.contains(',') {
        format!("({name})")
    } else {
        name.to_string()
    }
}

/// Parses `zn:<n>`, `free:<k>`, `heis`, `prod:<m1>,<m2>`, `freeprod:<m1>,<m2>`.
/// Nested binary models can be parenthesised, e.g. `prod:(prod:zn:1,zn:1),zn:1`;
/// without parentheses the first top-level comma splits the operands.
pub fn parse_model(spec: &str) -> Result<Box<dyn GroupModel>, GroupError> {
    let unknown = || GroupError::UnknownModel(spec.to_string());
    let spec = strip_parens(spec.trim());
    if spec == "heis" {
        return Ok(Box::new(Heisenberg));
    }
    let (kind, rest) = spec.split_once(':').ok_or_else(unknown)?;
    match kind {
        "zn" => Ok(Box::new(FreeAbelian { rank: rest.parse().map_err(|_| unknown())? })),
        "free" => Ok(Box::new(Free { rank: rest.parse().map_err(|_| unknown())? })),
        "prod" | "freeprod" => {
            let (l, r) = split_top_level(rest).ok_or_else(unknown)?;
            let left = parse_model(l)?;
            let right = parse_model(r)?;
            Ok(if kind == "prod" {
                Box::new(DirectProduct { left, right })
            } else {
                Box::new(FreeProduct { left, right })
            })
        }
        _ => Err(unknown()),
    }
}

fn strip_parens(s: &str) -> &str {
    if s.starts_with('(') && s.ends_with(')') {
        // Only strip if the outer pair matches.
        let mut depth = 0i32;
        for (i, c) in s.char_indices() {
            match c {
                '(' => depth += 1,
                ')' => {
                    depth -= 1;
                    if depth == 0 && i != s.len() - 1 {
                        return s;
                    }
                }
                _ => {}
            }
        }
        return strip_parens(&s[1..s.len() - 1]);
    }
    s
}

/// Splits `rest` at the first comma outside parentheses.
fn split_top_level(rest: &str) -> Option<(&str, &str)> {
    let mut depth = 0i32;
    for (i, c) in rest.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => return Some((&rest[..i], &rest[i + 1..])),
            _ => {}
        }
    }
    None
}

/// Breadth-first enumeration of the ball of the given word-length radius.
/// Vertex `0` is the identity; vertices are numbered in BFS discovery order.
pub fn cayley_ball(model: &dyn GroupModel, radius: u32, vertex_cap: usize) -> Result<GraphBall, GroupError> {
    Ok(enumerate_ball(model, radius, vertex_cap, false)?.0)
}

/// [`cayley_ball`] together with the group element at each vertex.
pub fn labelled_cayley_ball(
    model: &dyn GroupModel,
    radius: u32,
    vertex_cap: usize,
) -> Result<(GraphBall, Vec<Element>), GroupError> {
    enumerate_ball(model, radius, vertex_cap, true)
}

fn enumerate_ball(
    model: &dyn GroupModel,
    radius: u32,
    vertex_cap: usize,
    keep_elements: bool,
) -> Result<(GraphBall, Vec<Element>), GroupError> {
    let generators = model.generator_count();
    let mut index: HashMap<Vec<u8>, u32> = HashMap::new();
    let identity = model.identity();
    index.insert(model.canonical_key(&identity), 0);
    let mut adjacency: Vec<Vec<u32>> = vec![Vec::new()];
    let mut elements = Vec::new();
    if keep_elements {
        elements.push(identity.clone());
    }
    let mut layer: Vec<(u32, Element)> = vec![(0, identity)];

    for depth in 0..=radius {
        let mut next = Vec::new();
        for (u, x) in &layer {
            let key = model.canonical_key(x);
            for g in 0..generators {
                let y = model.multiply(x, g);
                let back = model.multiply(&y, model.inverse_generator(g));
                if model.canonical_key(&back) != key {
                    return Err(GroupError::ModelAxiomViolation {
                        model: model.name(),
                        generator: model.generators()[g].clone(),
                    });
                }
                let y_key = model.canonical_key(&y);
                let v = match index.get(&y_key) {
                    Some(&v) => v,
                    None if depth < radius => {
                        let v = adjacency.len() as u32;
                        if adjacency.len() >= vertex_cap {
                            return Err(GroupError::BallTooLarge { cap: vertex_cap });
                        }
                        index.insert(y_key, v);
                        adjacency.push(Vec::new());
                        if keep_elements {
                            elements.push(y.clone());
                        }
                        next.push((v, y));
                        v
                    }
                    None => continue,
                };
                if v != *u {
                    adjacency[*u as usize].push(v);
                }
            }
        }
        layer = next;
    }
    let hints = AmbientHints { vertex_transitive: true, tree: model.cayley_graph_is_tree() };
    Ok((GraphBall::from_adjacency(adjacency, 0, radius)?.with_hints(hints), elements))
}

/// Vertex of the element reached by the word (generator indices), if the
/// element lies in the ball.
pub fn locate_word(model: &dyn GroupModel, elements: &[Element], word: &[usize]) -> Option<usize> {
    let mut x = model.identity();
    for &g in word {
        x = model.multiply(&x, g);
    }
    let key = model.canonical_key(&x);
    elements.iter().position(|e| model.canonical_key(e) == key)
}

/// `|S_r|` for `r = 0..=radius`.
pub fn growth_series(model: &dyn GroupModel, radius: u32, vertex_cap: usize) -> Result<Vec<usize>, GroupError> {
    Ok(cayley_ball(model, radius, vertex_cap)?.sphere_sizes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z2_ball_count() {
        let ball = cayley_ball(&FreeAbelian { rank: 2 }, 2, DEFAULT_VERTEX_CAP).unwrap();
        assert_eq!(ball.vertex_count(), 13);
        assert!(ball.hints().vertex_transitive);
        assert!(!ball.hints().tree);
    }

    #[test]
    fn f2_ball_count() {
        let ball = cayley_ball(&Free { rank: 2 }, 3, DEFAULT_VERTEX_CAP).unwrap();
        assert_eq!(ball.vertex_count(), 53);
        assert_eq!(ball.edge_count(), 52);
        assert!(ball.hints().tree);
    }

    #[test]
    fn radius_zero_is_a_point() {
        for spec in ["zn:3", "free:2", "heis", "prod:zn:1,free:2", "freeprod:zn:2,zn:1"] {
            let model = parse_model(spec).unwrap();
            let ball = cayley_ball(model.as_ref(), 0, DEFAULT_VERTEX_CAP).unwrap();
            assert_eq!(ball.vertex_count(), 1, "{spec}");
            assert_eq!(ball.edge_count(), 0, "{spec}");
        }
    }

    #[test]
    fn line_growth() {
        let sizes = growth_series(&FreeAbelian { rank: 1 }, 5, DEFAULT_VERTEX_CAP).unwrap();
        assert_eq!(sizes, vec![1, 2, 2, 2, 2, 2]);
    }

    #[test]
    fn vertex_cap_enforced() {
        let err = cayley_ball(&Free { rank: 2 }, 6, 100).unwrap_err();
        assert!(matches!(err, GroupError::BallTooLarge { cap: 100 }));
    }

    #[test]
    fn free_word_reduction() {
        let f = Free { rank: 2 };
        let a = f.multiply(&f.identity(), 0);
        assert_eq!(a, Element::Word(vec![1]));
        assert_eq!(f.multiply(&a, 1), f.identity());
        let ab = f.multiply(&a, 2);
        assert_eq!(ab, Element::Word(vec![1, 2]));
    }

    #[test]
    fn heisenberg_commutator_is_central() {
        // [a, b] = a b A B = (0, 0, 1).
        let h = Heisenberg;
        let mut x = h.identity();
        for g in [0, 2, 1, 3] {
            x = h.multiply(&x, g);
        }
        assert_eq!(x, Element::Vector(vec![0, 0, 1]));
    }

    #[test]
    fn free_product_of_lines_is_f2() {
        let fp = parse_model("freeprod:zn:1,zn:1").unwrap();
        let f2 = Free { rank: 2 };
        for r in 0..=5 {
            assert_eq!(
                growth_series(fp.as_ref(), r, DEFAULT_VERTEX_CAP).unwrap(),
                growth_series(&f2, r, DEFAULT_VERTEX_CAP).unwrap()
            );
        }
        assert!(fp.cayley_graph_is_tree());
    }

    #[test]
    fn free_product_syllables_merge() {
        let fp = parse_model("freeprod:zn:2,zn:1").unwrap();
        let mut x = fp.identity();
        for g in [0, 2, 4, 1] {
            x = fp.multiply(&x, g);
        }
        // x1 x2 | t | X1 : three syllables.
        let Element::Syllables(s) = &x else { panic!() };
        assert_eq!(s.len(), 3);
        x = fp.multiply(&x, 0);
        x = fp.multiply(&x, 5);
        // Cancelling the last syllable merges back to x1 x2.
        let Element::Syllables(s) = &x else { panic!() };
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].1, Element::Vector(vec![1, 1]));
    }

    #[test]
    fn parse_nested_models() {
        assert_eq!(parse_model("prod:zn:1,free:2").unwrap().name(), "prod:zn:1,free:2");
        assert_eq!(parse_model("freeprod:zn:2,zn:1").unwrap().generator_count(), 6);
        let nested = parse_model("prod:(prod:zn:1,zn:1),zn:1").unwrap();
        assert_eq!(nested.generator_count(), 6);
        assert_eq!(nested.name(), "prod:(prod:zn:1,zn:1),zn:1");
        assert!(parse_model("sl:2").is_err());
        assert!(parse_model("zn:x").is_err());
        assert!(parse_model("prod:zn:1").is_err());
    }

    struct Broken;
    impl GroupModel for Broken {
        fn name(&self) -> String {
            "broken".into()
        }
        fn generators(&self) -> Vec<String> {
            vec!["s".into(), "S".into()]
        }
        fn identity(&self) -> Element {
            Element::Vector(vec![0])
        }
        // Both generators add one: (x·s)·S ≠ x.
        fn multiply(&self, x: &Element, _g: usize) -> Element {
            let Element::Vector(v) = x else { unreachable!() };
            Element::Vector(vec![v[0] + 1])
        }
    }

    #[test]
    fn axiom_violation_detected() {
        assert!(matches!(
            cayley_ball(&Broken, 2, DEFAULT_VERTEX_CAP),
            Err(GroupError::ModelAxiomViolation { .. })
        ));
    }
}
