//! Vertex-labeled graphs over `{L, R}` presenting the itinerary shifts.
//!
//! A word is accepted when some directed path spells it with its vertex
//! labels. The empty word is accepted by every nonempty graph.
//!
//! Templates come from a combinatorial model of the partition. Each region is
//! a vertex; the inverse return map carries
//!
//! * the region under generation `k` of a chain onto the region under
//!   generation `k + 1`, and the region under the last generation onto the
//!   cells `B` and `O` of the half-plane where the first crossing generation
//!   lies;
//! * `B` of `X` (inside `E★`) onto `B` and `O` of the other half-plane;
//! * `O` of `X` (outside `E★`) onto `O` of `X` and the cell beside the primary
//!   segment of `X`.
//!
//! Reversing these arrows gives the forward-time graph.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::flow::{Flow, SectionPoint, Side};
use crate::pullback::{PullbackCount, Quantities, RegionKind, RegionPartition};

/// Directed graph with vertices labeled `L` or `R`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SoficGraph {
    pub names: Vec<String>,
    pub labels: Vec<Side>,
    /// Sorted successor lists.
    pub succ: Vec<Vec<usize>>,
}

impl SoficGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// The two-vertex presentation of all words over `{L, R}`.
    pub fn full_shift() -> Self {
        let mut g = Self::new();
        let l = g.add_vertex("L", Side::L);
        let r = g.add_vertex("R", Side::R);
        for a in [l, r] {
            for b in [l, r] {
                g.add_edge(a, b);
            }
        }
        g
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }

    /// Adds a vertex, or returns the existing one with that name.
    pub fn add_vertex(&mut self, name: &str, label: Side) -> usize {
        if let Some(i) = self.vertex(name) {
            return i;
        }
        self.names.push(name.to_string());
        self.labels.push(label);
        self.succ.push(Vec::new());
        self.names.len() - 1
    }

    pub fn vertex(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn add_edge(&mut self, from: usize, to: usize) {
        let list = &mut self.succ[from];
        if let Err(pos) = list.binary_search(&to) {
            list.insert(pos, to);
        }
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.succ[from].binary_search(&to).is_ok()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.succ.iter().enumerate().flat_map(|(a, l)| l.iter().map(move |&b| (a, b)))
    }

    pub fn predecessors(&self) -> Vec<Vec<usize>> {
        let mut pred = vec![Vec::new(); self.len()];
        for (a, b) in self.edges() {
            pred[b].push(a);
        }
        pred
    }

    /// Same vertices with every edge reversed.
    pub fn reversed(&self) -> Self {
        let mut g = Self {
            names: self.names.clone(),
            labels: self.labels.clone(),
            succ: vec![Vec::new(); self.len()],
        };
        for (a, b) in self.edges() {
            g.add_edge(b, a);
        }
        g
    }

    /// Exchanges the labels `L` and `R`.
    pub fn swapped(&self) -> Self {
        let mut g = self.clone();
        for l in &mut g.labels {
            *l = l.other();
        }
        g
    }

    /// Subgraph on the vertices with `keep[v]`.
    fn induced(&self, keep: &[bool]) -> Self {
        let mut index = vec![usize::MAX; self.len()];
        let mut g = Self::new();
        for v in 0..self.len() {
            if keep[v] {
                index[v] = g.names.len();
                g.names.push(self.names[v].clone());
                g.labels.push(self.labels[v]);
                g.succ.push(Vec::new());
            }
        }
        for (a, b) in self.edges() {
            if keep[a] && keep[b] {
                g.add_edge(index[a], index[b]);
            }
        }
        g
    }

    /// Removes vertices until every vertex has a predecessor and a successor.
    pub fn trim(&self) -> Self {
        let mut keep = vec![true; self.len()];
        loop {
            let mut indeg = vec![0usize; self.len()];
            let mut outdeg = vec![0usize; self.len()];
            for (a, b) in self.edges() {
                if keep[a] && keep[b] {
                    outdeg[a] += 1;
                    indeg[b] += 1;
                }
            }
            let mut changed = false;
            for v in 0..self.len() {
                if keep[v] && (indeg[v] == 0 || outdeg[v] == 0) {
                    keep[v] = false;
                    changed = true;
                }
            }
            if !changed {
                return self.induced(&keep);
            }
        }
    }

    /// Quotient by the coarsest label-preserving forward bisimulation.
    pub fn forward_quotient(&self) -> Self {
        let n = self.len();
        let mut block: Vec<usize> = self.labels.iter().map(|l| *l as usize).collect();
        loop {
            let mut sigs: BTreeMap<(usize, Vec<usize>), usize> = BTreeMap::new();
            let mut next = vec![0; n];
            for v in 0..n {
                let succ: BTreeSet<usize> = self.succ[v].iter().map(|&w| block[w]).collect();
                let key = (block[v], succ.into_iter().collect());
                let id = sigs.len();
                next[v] = *sigs.entry(key).or_insert(id);
            }
            let count_old = block.iter().collect::<BTreeSet<_>>().len();
            let stable = sigs.len() == count_old;
            block = next;
            if stable {
                break;
            }
        }
        // canonical block order: first vertex of each block
        let mut order: Vec<usize> = Vec::new();
        let mut seen = BTreeMap::new();
        for v in 0..n {
            seen.entry(block[v]).or_insert_with(|| {
                order.push(v);
                order.len() - 1
            });
        }
        let mut g = Self::new();
        for &v in &order {
            let members: Vec<&str> = (0..n).filter(|&w| block[w] == block[v]).map(|w| self.names[w].as_str()).collect();
            g.names.push(members.join("+"));
            g.labels.push(self.labels[v]);
            g.succ.push(Vec::new());
        }
        for (a, b) in self.edges() {
            g.add_edge(seen[&block[a]], seen[&block[b]]);
        }
        g
    }

    /// Alternates forward and backward bisimulation quotients with trimming
    /// until nothing changes. Both quotients preserve the set of label
    /// sequences along paths, so the language is unchanged.
    pub fn simplify(&self) -> Self {
        let mut g = self.trim();
        loop {
            let before = (g.len(), g.edge_count());
            g = g.forward_quotient();
            g = g.reversed().forward_quotient().reversed();
            g = g.trim();
            if (g.len(), g.edge_count()) == before {
                return g;
            }
        }
    }

    fn parse_word(word: &str) -> Option<Vec<Side>> {
        word.chars().map(Side::from_letter).collect()
    }

    /// Whether a path spells `word`. Letters other than `L` and `R` reject.
    pub fn accepts(&self, word: &str) -> bool {
        let Some(letters) = Self::parse_word(word) else {
            return false;
        };
        if self.is_empty() {
            return false;
        }
        let mut current: Vec<bool> = vec![false; self.len()];
        let Some((&first, rest)) = letters.split_first() else {
            return true;
        };
        for v in 0..self.len() {
            current[v] = self.labels[v] == first;
        }
        for &letter in rest {
            let mut next = vec![false; self.len()];
            for v in (0..self.len()).filter(|&v| current[v]) {
                for &w in &self.succ[v] {
                    if self.labels[w] == letter {
                        next[w] = true;
                    }
                }
            }
            current = next;
        }
        current.iter().any(|&b| b)
    }

    /// All accepted words of length exactly `n`, sorted.
    pub fn words(&self, n: usize) -> Vec<String> {
        let mut out = Vec::new();
        if n == 0 {
            if !self.is_empty() {
                out.push(String::new());
            }
            return out;
        }
        let mut stack: Vec<(String, Vec<bool>)> = Vec::new();
        for letter in [Side::R, Side::L] {
            let set: Vec<bool> = self.labels.iter().map(|&l| l == letter).collect();
            if set.iter().any(|&b| b) {
                stack.push((letter.letter().to_string(), set));
            }
        }
        while let Some((w, set)) = stack.pop() {
            if w.len() == n {
                out.push(w);
                continue;
            }
            for letter in [Side::R, Side::L] {
                let mut next = vec![false; self.len()];
                for v in (0..self.len()).filter(|&v| set[v]) {
                    for &x in &self.succ[v] {
                        if self.labels[x] == letter {
                            next[x] = true;
                        }
                    }
                }
                if next.iter().any(|&b| b) {
                    let mut w2 = w.clone();
                    w2.push(letter.letter());
                    stack.push((w2, next));
                }
            }
        }
        out.sort();
        out
    }

    /// Accepted words of every length `1..=n`.
    pub fn language(&self, n: usize) -> BTreeSet<String> {
        (1..=n).flat_map(|k| self.words(k)).collect()
    }

    pub fn to_dot(&self, title: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "digraph \"{title}\" {{");
        for (i, name) in self.names.iter().enumerate() {
            let shape = match self.labels[i] {
                Side::L => "circle",
                Side::R => "box",
            };
            let _ = writeln!(s, "  v{i} [label=\"{}\", tooltip=\"{name}\", shape={shape}];", self.labels[i].letter());
        }
        for (a, b) in self.edges() {
            let _ = writeln!(s, "  v{a} -> v{b};");
        }
        s.push_str("}\n");
        s
    }

    pub fn to_json(&self) -> serde_json::Value {
        let vertices: Vec<_> = (0..self.len())
            .map(|i| {
                serde_json::json!({
                    "name": self.names[i],
                    "label": self.labels[i].letter().to_string(),
                    "successors": self.succ[i],
                })
            })
            .collect();
        serde_json::json!({ "vertices": vertices })
    }

    /// Edge-labeled form: each edge carries the label of its head, and a
    /// start state feeds every vertex.
    pub fn to_edge_labeled(&self) -> Vec<(String, String, char)> {
        let mut out: Vec<(String, String, char)> = (0..self.len())
            .map(|v| ("start".to_string(), self.names[v].clone(), self.labels[v].letter()))
            .collect();
        for (a, b) in self.edges() {
            out.push((self.names[a].clone(), self.names[b].clone(), self.labels[b].letter()));
        }
        out
    }
}

/// Outcome of a containment query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Containment {
    pub holds: bool,
    /// True when decided for all lengths by the subset construction.
    pub exact: bool,
    /// Set when the subset construction hit its state cap.
    pub fell_back: bool,
    pub counterexample: Option<String>,
}

/// Cap on subset states for exact containment.
pub const SUBSET_STATE_CAP: usize = 1 << 16;

/// Whether every word of length at most `n` accepted by `small` is accepted
/// by `big`. The subset construction decides all lengths at once when it
/// stays under [`SUBSET_STATE_CAP`]; otherwise words are compared up to `n`.
pub fn contains(big: &SoficGraph, small: &SoficGraph, n: usize) -> Result<Containment> {
    if n == 0 {
        return Err(Error::Precondition("containment length must be at least 1".into()));
    }
    if let Some(result) = contains_exact(big, small, SUBSET_STATE_CAP) {
        return Ok(result);
    }
    for k in 1..=n {
        for w in small.words(k) {
            if !big.accepts(&w) {
                return Ok(Containment {
                    holds: false,
                    exact: false,
                    fell_back: true,
                    counterexample: Some(w),
                });
            }
        }
    }
    Ok(Containment {
        holds: true,
        exact: false,
        fell_back: true,
        counterexample: None,
    })
}

/// Product of `small` with the determinized `big`; `None` past `cap` states.
pub fn contains_exact(big: &SoficGraph, small: &SoficGraph, cap: usize) -> Option<Containment> {
    type State = (usize, Vec<usize>);
    let mut seen: HashMap<State, Option<(usize, char)>> = HashMap::new();
    let mut order: Vec<State> = Vec::new();
    let mut queue = VecDeque::new();
    let word_of = |idx: usize, order: &Vec<State>, seen: &HashMap<State, Option<(usize, char)>>| {
        let mut w = Vec::new();
        let mut cur = Some(idx);
        while let Some(i) = cur {
            let st = &order[i];
            w.push(small.labels[st.0].letter());
            cur = seen[st].map(|p| p.0);
        }
        w.reverse();
        w.into_iter().collect::<String>()
    };
    for v in 0..small.len() {
        let set: Vec<usize> = (0..big.len()).filter(|&u| big.labels[u] == small.labels[v]).collect();
        if set.is_empty() {
            return Some(Containment {
                holds: false,
                exact: true,
                fell_back: false,
                counterexample: Some(small.labels[v].letter().to_string()),
            });
        }
        let st = (v, set);
        if !seen.contains_key(&st) {
            seen.insert(st.clone(), None);
            order.push(st);
            queue.push_back(order.len() - 1);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (v, set) = order[i].clone();
        for &v2 in &small.succ[v] {
            let label = small.labels[v2];
            let next: BTreeSet<usize> = set
                .iter()
                .flat_map(|&u| big.succ[u].iter().copied())
                .filter(|&u| big.labels[u] == label)
                .collect();
            if next.is_empty() {
                let mut w = word_of(i, &order, &seen);
                w.push(label.letter());
                return Some(Containment {
                    holds: false,
                    exact: true,
                    fell_back: false,
                    counterexample: Some(w),
                });
            }
            let st = (v2, next.into_iter().collect());
            if !seen.contains_key(&st) {
                if seen.len() >= cap {
                    return None;
                }
                seen.insert(st.clone(), Some((i, label.letter())));
                order.push(st);
                queue.push_back(order.len() - 1);
            }
        }
    }
    Some(Containment {
        holds: true,
        exact: true,
        fell_back: false,
        counterexample: None,
    })
}

/// Equality of the languages of `a` and `b` on words up to length `n`.
pub fn same_language(a: &SoficGraph, b: &SoficGraph, n: usize) -> bool {
    n == 0 || [(a, b), (b, a)].iter().all(|(x, y)| contains(x, y, n).is_ok_and(|c| c.holds))
}

// ---------------------------------------------------------------------------
// Theorem cases and templates

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TheoremCase {
    /// `ℓ_C = r_C = ℓ_∩ + 1 = r_∩ + 1`.
    Main1,
    /// `ℓ_C = r_C + 1 = r_∩ + 2 <= ℓ_∩`.
    Main2First,
    /// `r_C = ℓ_C + 1 = ℓ_∩ + 2 <= r_∩`.
    Main2Second,
    Main3,
}

impl TheoremCase {
    pub fn classify(q: &Quantities) -> Result<Self> {
        q.validate()?;
        let (lc, rc) = (q.l_c, q.r_c);
        if let (Some(l), Some(r)) = (q.l_cap.exact(), q.r_cap.exact()) {
            if lc == rc && lc == l + 1 && rc == r + 1 {
                return Ok(TheoremCase::Main1);
            }
        }
        if lc == rc + 1 && q.r_cap.exact() == Some(lc - 2) && q.l_cap.at_least() >= lc {
            return Ok(TheoremCase::Main2First);
        }
        if rc == lc + 1 && q.l_cap.exact() == Some(rc - 2) && q.r_cap.at_least() >= rc {
            return Ok(TheoremCase::Main2Second);
        }
        Ok(TheoremCase::Main3)
    }

    pub fn name(self) -> &'static str {
        match self {
            TheoremCase::Main1 => "main1",
            TheoremCase::Main2First => "main2-first",
            TheoremCase::Main2Second => "main2-second",
            TheoremCase::Main3 => "main3",
        }
    }
}

pub fn classify(q: &Quantities) -> Result<TheoremCase> {
    TheoremCase::classify(q)
}

/// Length of one pullback chain in the combinatorial model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainLen {
    /// Generations `0 .. n` before the first crossing at generation `n`.
    Finite(u32),
    /// First crossing at some generation `>= n`.
    AtLeast(u32),
    /// The chain never crosses.
    Infinite,
}

impl From<PullbackCount> for ChainLen {
    fn from(c: PullbackCount) -> Self {
        match c {
            PullbackCount::Exact(n) => ChainLen::Finite(n),
            PullbackCount::AboveBudget { above_budget } => ChainLen::AtLeast(above_budget + 1),
        }
    }
}

/// Positions of the labeled points `P^{-k}(X★d)` and the pullback chains,
/// determined by the four integers.
///
/// `P^{-k}(X★d)` lies on the side given by the alternating itinerary of the
/// branch of `d` through `X★d`, and it is inside `E★` exactly while the next
/// point switches side. Generation `k` of the chain started on `X` spans
/// `P^{-k}(X★d)` and `P^{-(k-1)}(X̄★d)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainModel {
    pub l_c: u32,
    pub r_c: u32,
    pub chains: [ChainLen; 2],
}

fn si(side: Side) -> usize {
    match side {
        Side::L => 0,
        Side::R => 1,
    }
}

impl ChainModel {
    /// Model of `q`; with `long_infinite`, the chain that is not pinned by
    /// the alternating lengths is taken to never cross.
    pub fn new(q: &Quantities, long_infinite: bool) -> Self {
        let mut chains = [ChainLen::from(q.l_cap), ChainLen::from(q.r_cap)];
        if long_infinite {
            if q.l_c > q.r_c {
                chains[0] = ChainLen::Infinite;
            } else if q.r_c > q.l_c {
                chains[1] = ChainLen::Infinite;
            }
        }
        Self {
            l_c: q.l_c,
            r_c: q.r_c,
            chains,
        }
    }

    pub fn with_chains(l_c: u32, r_c: u32, left: ChainLen, right: ChainLen) -> Self {
        Self {
            l_c,
            r_c,
            chains: [left, right],
        }
    }

    fn alternating(&self, of: Side) -> u32 {
        match of {
            Side::L => self.l_c,
            Side::R => self.r_c,
        }
    }

    /// Half-plane of `P^{-k}(of★d)`.
    pub fn point_side(&self, of: Side, k: u32) -> Side {
        let k = k.min(self.alternating(of) - 1);
        if k % 2 == 0 {
            of
        } else {
            of.other()
        }
    }

    pub fn point_inside(&self, of: Side, k: u32) -> bool {
        k + 2 <= self.alternating(of)
    }

    pub fn generation_side(&self, of: Side, k: u32) -> Side {
        self.point_side(of, k)
    }

    pub fn generation_inside(&self, of: Side, k: u32) -> bool {
        self.point_inside(of, k)
    }

    /// Number of explicit generations (regions) of the chain.
    pub fn chain_len(&self, of: Side) -> u32 {
        match self.chains[si(of)] {
            ChainLen::Finite(n) | ChainLen::AtLeast(n) => n,
            ChainLen::Infinite => self.alternating(of).saturating_sub(1).max(1),
        }
    }

    /// Whether generations `1 .. chain_len` form single arcs: their two
    /// endpoints share a half-plane and an inside/outside status.
    pub fn is_consistent(&self) -> bool {
        [Side::L, Side::R].iter().all(|&of| {
            let n = match self.chains[si(of)] {
                ChainLen::Finite(n) => n + 1,
                ChainLen::AtLeast(n) => n,
                ChainLen::Infinite => self.alternating(of) + 4,
            };
            (1..n).all(|k| {
                let same_side = self.point_side(of, k) == self.point_side(of.other(), k - 1);
                let same_status = self.point_inside(of, k) == self.point_inside(of.other(), k - 1);
                same_side && (same_status || k == n - 1 && matches!(self.chains[si(of)], ChainLen::Finite(_)))
            })
        })
    }

    /// Schematic position on M of `P^{-k}(of★d)` (the half-plane is implied).
    /// Points of one half-plane decrease in `v` along the zigzag of chain
    /// endpoints; ties on a shared leg put the longer branch first.
    pub fn m_position(&self, _side: Side, of: Side, k: u32) -> f64 {
        let longer = self.alternating(of) > self.alternating(of.other())
            || (self.alternating(of) == self.alternating(of.other()) && of == Side::L);
        -(k as f64 - if longer { 0.5 } else { 0.0 })
    }

    /// Schematic `(v(cX★), v(dX★))`.
    pub fn ejection_base(&self, side: Side) -> (f64, f64) {
        let mut inside_min = f64::INFINITY;
        let mut outside_max = f64::NEG_INFINITY;
        for of in [Side::L, Side::R] {
            for k in 0..self.alternating(of) + 6 {
                if self.point_side(of, k) != side {
                    continue;
                }
                let v = self.m_position(side, of, k);
                if self.point_inside(of, k) {
                    inside_min = inside_min.min(v);
                } else {
                    outside_max = outside_max.max(v);
                }
            }
        }
        let c = match (inside_min.is_finite(), outside_max.is_finite()) {
            (true, true) => 0.5 * (inside_min + outside_max),
            (true, false) => inside_min - 0.5,
            // every labeled point sits at or below 0.5
            _ => 1.0,
        };
        (c, 2.0)
    }
}

fn region_name(kind: RegionKind, side: Side) -> String {
    kind.id(side)
}

/// Forward-time graph of the combinatorial partition described by `model`.
pub fn chain_graph(model: &ChainModel) -> SoficGraph {
    // build P^{-1} arrows, then reverse
    let mut g = SoficGraph::new();
    for side in [Side::L, Side::R] {
        g.add_vertex(&region_name(RegionKind::Outside, side), side);
        g.add_vertex(&region_name(RegionKind::Inside, side), side);
    }
    let cell = |g: &mut SoficGraph, of: Side, k: u32| {
        let side = model.generation_side(of, k);
        g.add_vertex(&region_name(RegionKind::Chain { of, k }, side), side)
    };
    for of in [Side::L, Side::R] {
        let n = model.chain_len(of);
        let ids: Vec<usize> = (0..n).map(|k| cell(&mut g, of, k)).collect();
        for w in ids.windows(2) {
            g.add_edge(w[0], w[1]);
        }
        let last = *ids.last().expect("chains have at least one generation");
        let exits = |g: &mut SoficGraph, from: usize, side: Side| {
            let b = g.vertex(&region_name(RegionKind::Inside, side)).unwrap();
            let o = g.vertex(&region_name(RegionKind::Outside, side)).unwrap();
            g.add_edge(from, b);
            g.add_edge(from, o);
        };
        match model.chains[si(of)] {
            ChainLen::Finite(n) => exits(&mut g, last, model.generation_side(of, n)),
            ChainLen::AtLeast(n) => {
                exits(&mut g, last, model.generation_side(of, n));
                let side = model.generation_side(of, n);
                let tail = g.add_vertex(&format!("P{}{}+", of.letter(), n), side);
                g.add_edge(last, tail);
                g.add_edge(tail, tail);
                exits(&mut g, tail, model.generation_side(of, n + model.alternating(of) + 1));
            }
            ChainLen::Infinite => {
                let side = model.generation_side(of, n);
                let tail = g.add_vertex(&format!("P{}{}+", of.letter(), n), side);
                g.add_edge(last, tail);
                g.add_edge(tail, tail);
            }
        }
    }
    for side in [Side::L, Side::R] {
        let b = g.vertex(&region_name(RegionKind::Inside, side)).unwrap();
        let o = g.vertex(&region_name(RegionKind::Outside, side)).unwrap();
        let b2 = g.vertex(&region_name(RegionKind::Inside, side.other())).unwrap();
        let o2 = g.vertex(&region_name(RegionKind::Outside, side.other())).unwrap();
        let a0 = g.vertex(&region_name(RegionKind::Chain { of: side, k: 0 }, side)).unwrap();
        g.add_edge(b, b2);
        g.add_edge(b, o2);
        g.add_edge(o, o);
        g.add_edge(o, a0);
    }
    g.reversed()
}

/// Template graphs for one set of quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphBounds {
    pub case: TheoremCase,
    /// Exact graph (Markov case only).
    pub exact: Option<SoficGraph>,
    pub lower: SoficGraph,
    pub upper: SoficGraph,
}

/// Template graphs for the case of `q`.
///
/// * Main1: the partition is Markov and one graph describes the dynamics
///   exactly. For `ℓ_∩ = 1` it presents the full shift.
/// * Main2: the upper graph keeps the crossing of the long chain at
///   generation `ℓ_∩` (or `r_∩`); the lower graph lets the long chain run
///   forever, which yields a Markov partition.
/// * Main3: the upper graph uses every chain region before the first
///   crossings; the lower graph is the Main1 graph when `ℓ_C = r_C`, and the
///   guaranteed Main2 graph for `(ℓ_C, r_C)` otherwise.
pub fn graph_template(q: &Quantities) -> Result<GraphBounds> {
    let case = TheoremCase::classify(q)?;
    let upper = chain_graph(&ChainModel::new(q, false));
    Ok(match case {
        TheoremCase::Main1 => GraphBounds {
            case,
            exact: Some(upper.clone()),
            lower: upper.clone(),
            upper,
        },
        TheoremCase::Main2First | TheoremCase::Main2Second => GraphBounds {
            case,
            exact: None,
            lower: chain_graph(&ChainModel::new(q, true)),
            upper,
        },
        TheoremCase::Main3 => {
            let (lc, rc) = (q.l_c, q.r_c);
            let lower_model = if lc == rc {
                ChainModel::with_chains(lc, rc, ChainLen::Finite(lc - 1), ChainLen::Finite(rc - 1))
            } else if lc > rc {
                ChainModel::with_chains(lc, rc, ChainLen::Infinite, ChainLen::Finite(rc - 1))
            } else {
                ChainModel::with_chains(lc, rc, ChainLen::Finite(lc - 1), ChainLen::Infinite)
            };
            GraphBounds {
                case,
                exact: None,
                lower: chain_graph(&lower_model),
                upper,
            }
        }
    })
}

/// Alternating block of `len` letters starting with `first`.
pub fn alternating_block(first: Side, len: usize) -> String {
    (0..len)
        .map(|i| if i % 2 == 0 { first.letter() } else { first.other().letter() })
        .collect()
}

/// Whether `word` obeys the Main1 rule for `ℓ_∩ = n`: between two
/// consecutive repeated letters the gap is 1 or at least `n + 1`. The first
/// `n` letters of a finite word are unconstrained on their left.
pub fn main1_rule(word: &str, n: usize) -> bool {
    let b = word.as_bytes();
    let repeats: Vec<usize> = (0..b.len().saturating_sub(1)).filter(|&i| b[i] == b[i + 1]).collect();
    repeats.windows(2).all(|w| w[1] - w[0] == 1 || w[1] - w[0] >= n + 1)
}

// ---------------------------------------------------------------------------
// Graphs from the computed partition

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GraphMode {
    Exact,
    Upper,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionSampling {
    pub samples_per_region: usize,
    /// Samples closer than this to a boundary arc are discarded.
    pub boundary_margin: f64,
    /// Fraction of undetermined samples tolerated in exact mode.
    pub undetermined_fraction: f64,
    pub seed: u64,
}

impl Default for RegionSampling {
    fn default() -> Self {
        Self {
            samples_per_region: 400,
            boundary_margin: 1e-4,
            undetermined_fraction: 0.05,
            seed: 0x5eed,
        }
    }
}

/// Transitions found by sampling, in inverse time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionCounts {
    /// `(from, to) -> samples` for `P^{-1}(from) ∩ to`.
    pub counts: BTreeMap<(String, String), usize>,
    pub undetermined: BTreeMap<String, usize>,
    pub attempted: BTreeMap<String, usize>,
}

fn region_box(partition: &RegionPartition, side: Side, kind: RegionKind) -> (f64, f64, f64, f64) {
    let mut b = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, 0.0f64);
    let name = match kind {
        RegionKind::Chain { of, k } if k > 0 => Some(format!("P{}S^-{}", of.letter(), k)),
        RegionKind::Chain { .. } | RegionKind::Inside => Some(format!("E{}★", side.letter())),
        RegionKind::Outside => None,
    };
    for arc in partition.arcs.iter().filter(|a| a.arc.side == side) {
        if name.as_ref().map_or(true, |n| *n == arc.name) {
            for p in &arc.arc.points {
                b.0 = b.0.min(p.u1);
                b.1 = b.1.max(p.u1);
                b.3 = b.3.max(p.u2);
            }
        }
    }
    if kind == RegionKind::Outside {
        let w = (b.1 - b.0).max(0.5);
        b.0 -= 0.2 * w;
        b.1 += 0.2 * w;
        b.3 *= 1.2;
    }
    b
}

/// Samples every region, maps the samples by `P^{-1}` and records the cells
/// they land in.
pub fn sample_transitions(partition: &RegionPartition, flow: &Flow, config: &RegionSampling) -> Result<TransitionCounts> {
    if !partition.has_geometry() {
        return Err(Error::Precondition("partition has no geometry to locate points".into()));
    }
    let jobs: Vec<(usize, u64)> = partition
        .regions
        .iter()
        .enumerate()
        .flat_map(|(i, _)| (0..config.samples_per_region as u64).map(move |j| (i, j)))
        .collect();
    let results: Vec<(usize, Option<String>)> = jobs
        .par_iter()
        .map(|&(i, j)| {
            let region = &partition.regions[i];
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(((i as u64) << 32) | j);
            let bx = region_box(partition, region.side, region.kind);
            for _ in 0..2000 {
                let p = SectionPoint::new(region.side, rng.gen_range(bx.0..bx.1), rng.gen_range(bx.2..bx.3));
                if partition.locate(&p).map(|r| &r.id) != Some(&region.id) {
                    continue;
                }
                if partition.boundary_distance(&p) < config.boundary_margin {
                    continue;
                }
                let Ok(rec) = flow.poincare_backward(&p) else {
                    return (i, None);
                };
                let q = rec.point;
                if partition.boundary_distance(&q) < config.boundary_margin {
                    return (i, None);
                }
                return (i, partition.locate(&q).map(|r| r.id.clone()));
            }
            (i, None)
        })
        .collect();
    let mut counts = BTreeMap::new();
    let mut undetermined = BTreeMap::new();
    let mut attempted = BTreeMap::new();
    for (i, target) in results {
        let from = partition.regions[i].id.clone();
        *attempted.entry(from.clone()).or_insert(0) += 1;
        match target {
            Some(to) => *counts.entry((from, to)).or_insert(0) += 1,
            None => *undetermined.entry(from).or_insert(0) += 1,
        }
    }
    Ok(TransitionCounts {
        counts,
        undetermined,
        attempted,
    })
}

/// Forward-time graph of region transitions measured on `partition`.
///
/// In exact mode the case must be Main1 and too many undetermined samples in
/// one region are fatal. In lower mode the chain that never crosses in the
/// guaranteed picture is closed by a self-loop on its last region.
pub fn graph_from_partition(partition: &RegionPartition, flow: &Flow, mode: GraphMode, config: &RegionSampling) -> Result<SoficGraph> {
    let case = TheoremCase::classify(&partition.quantities)?;
    if mode == GraphMode::Exact && case != TheoremCase::Main1 {
        return Err(Error::Precondition(format!("exact graphs need the main1 case, found {}", case.name())));
    }
    let t = sample_transitions(partition, flow, config)?;
    if mode == GraphMode::Exact {
        for (region, &bad) in &t.undetermined {
            let total = t.attempted[region];
            if bad as f64 > config.undetermined_fraction * total as f64 {
                return Err(Error::UndeterminedTransition(region.clone()));
            }
        }
    }
    graph_from_transitions(partition, &t, mode)
}

/// Assembles the forward-time graph from measured transitions.
pub fn graph_from_transitions(partition: &RegionPartition, t: &TransitionCounts, mode: GraphMode) -> Result<SoficGraph> {
    let mut inverse = SoficGraph::new();
    for r in &partition.regions {
        inverse.add_vertex(&r.id, r.side);
    }
    for (from, to) in t.counts.keys() {
        let (a, b) = (inverse.vertex(from), inverse.vertex(to));
        if let (Some(a), Some(b)) = (a, b) {
            inverse.add_edge(a, b);
        }
    }
    if mode == GraphMode::Lower {
        let q = &partition.quantities;
        let long = if q.l_c > q.r_c {
            Some(Side::L)
        } else if q.r_c > q.l_c {
            Some(Side::R)
        } else {
            None
        };
        if let Some(of) = long {
            let last = partition
                .regions
                .iter()
                .filter_map(|r| match r.kind {
                    RegionKind::Chain { of: o, k } if o == of => Some((k, r.id.clone())),
                    _ => None,
                })
                .max();
            if let Some((_, id)) = last {
                let v = inverse.vertex(&id).unwrap();
                inverse.succ[v].clear();
                inverse.add_edge(v, v);
            }
        }
    }
    Ok(inverse.reversed())
}
