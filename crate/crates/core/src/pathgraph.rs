//! Path-graphs: collections of edge-disjoint complex paths viewed through
//! their quotient graph, conflict/intersection/index ratios, non-conflicting
//! Eulerian tours, a long-path decomposition builder, rainbow structures for
//! online path routing, and spanning path-tree constructions.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::StageError;
use crate::fractions::{almost_balanced_orientation, fractions};
use crate::graph::{
    compatible, ComplexHypergraph, Incidence, Index, ItemId, VertexId, WigglyEdge, WILDCARD,
};
use crate::path::{concat_at_vertex, ComplexPath, PathElem};

/// A set of pairwise edge-disjoint complex paths over a host complex graph.
#[derive(Debug, Clone, Default)]
pub struct PathGraph {
    pub paths: Vec<ComplexPath>,
}

impl PathGraph {
    pub fn new(paths: Vec<ComplexPath>) -> Self {
        PathGraph { paths }
    }

    /// Every path valid in the host and no item shared between two paths.
    pub fn validate(&self, g: &ComplexHypergraph) -> Result<(), StageError> {
        let mut seen: BTreeSet<ItemId> = BTreeSet::new();
        for (i, p) in self.paths.iter().enumerate() {
            let check = p.validate(g);
            if let Some(v) = check.violation {
                return Err(StageError::verification(
                    "path_graph",
                    format!("path {i} invalid: {:?} {}", v.rule, v.detail),
                ));
            }
            for id in p.items() {
                if !seen.insert(id) {
                    return Err(StageError::verification(
                        "path_graph",
                        format!("item {id} used by more than one path"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// A path in a chosen traversal direction: `forward` reads the stored
/// element sequence left to right.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrientedPath {
    pub idx: usize,
    pub forward: bool,
}

pub fn orient(p: &ComplexPath, forward: bool) -> ComplexPath {
    if forward {
        p.clone()
    } else {
        p.reversed()
    }
}

/// Vertices of the maximal initial segment of `p` containing no wiggly edge
/// and at most ell ordinary edges.
pub fn sub_vertices(p: &ComplexPath, g: &ComplexHypergraph) -> BTreeSet<VertexId> {
    let mut out = BTreeSet::new();
    let mut ordinary = 0u64;
    for e in p.elems() {
        match *e {
            PathElem::Vertex(v) => {
                out.insert(v);
            }
            PathElem::Ordinary(_) => {
                ordinary += 1;
                if ordinary > g.ell() {
                    break;
                }
            }
            PathElem::Wiggly { .. } | PathElem::Stub(_) => break,
        }
    }
    out
}

/// Whether two paths starting at the same vertex are non-conflicting there:
/// initial segments meet only in the start, and the initial indices differ,
/// are wildcards, or one of the paths is universal at the start.
pub fn non_conflicting_at(g: &ComplexHypergraph, p1: &ComplexPath, p2: &ComplexPath) -> bool {
    let (Some(crate::path::PathEnd::Vertex(v1)), Some(crate::path::PathEnd::Vertex(v2))) =
        (p1.first_end(), p2.first_end())
    else {
        return false;
    };
    if v1 != v2 {
        return false;
    }
    let s1 = sub_vertices(p1, g);
    let s2 = sub_vertices(p2, g);
    if s1.intersection(&s2).count() != 1 {
        return false;
    }
    let i1 = p1.initial_index(g);
    let i2 = p2.initial_index(g);
    i1 != i2
        || i1 == WILDCARD
        || i2 == WILDCARD
        || p1.is_universal_at_start(g)
        || p2.is_universal_at_start(g)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct VertexRatios {
    pub deg: u64,
    pub conf_count: u64,
    pub inter_count: u64,
    pub inc_count: u64,
}

impl VertexRatios {
    pub fn conf(&self) -> f64 {
        self.conf_count as f64 / self.deg.max(1) as f64
    }
    pub fn inter(&self) -> f64 {
        self.inter_count as f64 / self.deg.max(1) as f64
    }
    pub fn inc(&self) -> f64 {
        self.inc_count as f64 / self.deg.max(1) as f64
    }
}

#[derive(Debug, Clone, Default)]
pub struct Ratios {
    pub per_vertex: BTreeMap<VertexId, VertexRatios>,
}

impl Ratios {
    pub fn conf(&self) -> f64 {
        self.per_vertex.values().map(|r| r.conf()).fold(0.0, f64::max)
    }
    pub fn inter(&self) -> f64 {
        self.per_vertex.values().map(|r| r.inter()).fold(0.0, f64::max)
    }
    pub fn inc(&self) -> f64 {
        self.per_vertex.values().map(|r| r.inc()).fold(0.0, f64::max)
    }

    /// conf(v) <= inc(v) + ell * inter(v) at every vertex, checked with the
    /// common denominator cleared.
    pub fn inequality_holds(&self, ell: u64) -> bool {
        self.per_vertex
            .values()
            .all(|r| r.conf_count <= r.inc_count + ell * r.inter_count)
    }
}

/// Paths oriented to start at `v`; loop-paths contribute both orientations.
fn starts_at(pg: &PathGraph, g: &ComplexHypergraph, v: VertexId) -> Vec<OrientedPath> {
    let mut out = Vec::new();
    for (i, p) in pg.paths.iter().enumerate() {
        if let Some((a, b)) = p.end_vertices(g) {
            if a == v {
                out.push(OrientedPath { idx: i, forward: true });
            }
            if b == v {
                out.push(OrientedPath { idx: i, forward: false });
            }
        }
    }
    out
}

/// The quotient graph (one wiggly edge per path, wildcard indices at
/// universal ends) together with the conflict, intersection and
/// index-conflict ratios of every vertex.
pub fn quotient_and_ratios(
    g: &ComplexHypergraph,
    pg: &PathGraph,
) -> Result<(ComplexHypergraph, Ratios), StageError> {
    let mut q = ComplexHypergraph::new(g.ell());
    for v in g.vertices() {
        q.add_vertex(v);
    }
    for p in &pg.paths {
        let (a, b) = p.end_vertices(g).ok_or_else(|| {
            StageError::precondition("quotient_and_ratios", "path with stub end")
        })?;
        let ia = if p.is_universal_at_start(g) { WILDCARD } else { p.initial_index(g) };
        let ib = if p.is_universal_at_end(g) { WILDCARD } else { p.terminal_index(g) };
        q.add_wiggly(WigglyEdge {
            ends: [Incidence::new(a, ia), Incidence::new(b, ib)],
            len: p.length(g),
        })
        .map_err(|e| StageError::verification("quotient_and_ratios", e.to_string()))?;
    }

    let mut ratios = Ratios::default();
    for v in g.vertices() {
        let members = starts_at(pg, g, v);
        if members.is_empty() {
            continue;
        }
        let oriented: Vec<ComplexPath> =
            members.iter().map(|m| orient(&pg.paths[m.idx], m.forward)).collect();
        let subs: Vec<BTreeSet<VertexId>> =
            oriented.iter().map(|p| sub_vertices(p, g)).collect();
        let idxs: Vec<Index> = oriented.iter().map(|p| p.initial_index(g)).collect();
        let unis: Vec<bool> = oriented.iter().map(|p| p.is_universal_at_start(g)).collect();
        let deg = members.len() as u64;
        let n = members.len();
        let mut conf_max = 0u64;
        let mut inc_max = 0u64;
        for a in 0..n {
            let mut conf = 0u64;
            for b in 0..n {
                if a == b {
                    continue;
                }
                let disjoint = subs[a].intersection(&subs[b]).count() == 1;
                let idx_ok = idxs[a] != idxs[b]
                    || idxs[a] == WILDCARD
                    || idxs[b] == WILDCARD
                    || unis[a]
                    || unis[b];
                if !(disjoint && idx_ok) {
                    conf += 1;
                }
            }
            conf_max = conf_max.max(conf);
            if !unis[a] && idxs[a] != WILDCARD {
                let same = (0..n).filter(|&b| b != a && idxs[b] == idxs[a]).count() as u64;
                inc_max = inc_max.max(same);
            }
        }
        let mut inter_max = 0u64;
        let mut per_w: BTreeMap<VertexId, u64> = BTreeMap::new();
        for s in &subs {
            for &w in s {
                if w != v {
                    *per_w.entry(w).or_insert(0) += 1;
                }
            }
        }
        for (_, c) in per_w {
            inter_max = inter_max.max(c);
        }
        ratios.per_vertex.insert(
            v,
            VertexRatios { deg, conf_count: conf_max, inter_count: inter_max, inc_count: inc_max },
        );
    }
    Ok((q, ratios))
}

/// An Eulerian tour or trail over a path-graph: each path traversed once in
/// a chosen direction.
#[derive(Debug, Clone)]
pub struct Tour {
    pub steps: Vec<OrientedPath>,
    pub closed: bool,
}

fn step_ends(pg: &PathGraph, g: &ComplexHypergraph, s: OrientedPath) -> (VertexId, VertexId) {
    let (a, b) = pg.paths[s.idx].end_vertices(g).unwrap();
    if s.forward {
        (a, b)
    } else {
        (b, a)
    }
}

/// Check that a tour traverses every path exactly once, consecutive steps
/// share their meeting vertex, and every transition (including the wrap of a
/// closed tour) is non-conflicting.
pub fn verify_tour(g: &ComplexHypergraph, pg: &PathGraph, t: &Tour) -> Result<(), StageError> {
    if t.steps.len() != pg.paths.len() {
        return Err(StageError::verification("verify_tour", "step count differs from path count"));
    }
    let mut seen = vec![false; pg.paths.len()];
    for s in &t.steps {
        if seen[s.idx] {
            return Err(StageError::verification("verify_tour", format!("path {} repeated", s.idx)));
        }
        seen[s.idx] = true;
    }
    let n = t.steps.len();
    let pairs = if t.closed { n } else { n.saturating_sub(1) };
    for i in 0..pairs {
        let s = t.steps[i];
        let sn = t.steps[(i + 1) % n];
        let (_, v) = step_ends(pg, g, s);
        let (w, _) = step_ends(pg, g, sn);
        if v != w {
            return Err(StageError::verification(
                "verify_tour",
                format!("steps {i} and {} do not meet", (i + 1) % n),
            ));
        }
        let from_v_prev = orient(&pg.paths[s.idx], !s.forward);
        let from_v_next = orient(&pg.paths[sn.idx], sn.forward);
        if !non_conflicting_at(g, &from_v_prev, &from_v_next) {
            return Err(StageError::verification(
                "verify_tour",
                format!("conflicting transition at vertex {v} between steps {i} and {}", (i + 1) % n),
            ));
        }
    }
    Ok(())
}

type NodeKey = (u8, u32);

struct TourEdge {
    a: NodeKey,
    b: NodeKey,
    dep_a: Option<OrientedPath>,
    dep_b: Option<OrientedPath>,
}

struct OrientCache {
    sub: BTreeSet<VertexId>,
    idx: Index,
    universal: bool,
}

struct TourSearch<'a> {
    edges: &'a [TourEdge],
    adj: &'a BTreeMap<NodeKey, Vec<usize>>,
    cache: &'a BTreeMap<(usize, bool), OrientCache>,
    used: Vec<bool>,
    seq: Vec<usize>,
    steps: usize,
    budget: usize,
}

impl<'a> TourSearch<'a> {
    fn conflict(&self, p: OrientedPath, q: OrientedPath) -> bool {
        let a = &self.cache[&(p.idx, p.forward)];
        let b = &self.cache[&(q.idx, q.forward)];
        let disjoint = a.sub.intersection(&b.sub).count() == 1;
        let idx_ok = a.idx != b.idx
            || a.idx == WILDCARD
            || b.idx == WILDCARD
            || a.universal
            || b.universal;
        !(disjoint && idx_ok)
    }

    fn dep(&self, slot: usize, side: NodeKey) -> Option<OrientedPath> {
        let e = &self.edges[slot];
        if e.a == side {
            e.dep_a
        } else {
            e.dep_b
        }
    }

    fn dfs(
        &mut self,
        cur: NodeKey,
        arrived: Option<OrientedPath>,
        left: usize,
        start: NodeKey,
        first_dep: Option<OrientedPath>,
    ) -> bool {
        self.steps += 1;
        if self.steps > self.budget {
            return false;
        }
        if left == 0 {
            if cur != start {
                return false;
            }
            // wrap transition of the closed tour
            return match (arrived, first_dep) {
                (Some(p), Some(q)) => !self.conflict(p, q),
                _ => true,
            };
        }
        let slots = self.adj.get(&cur).cloned().unwrap_or_default();
        for slot in slots {
            if self.used[slot] {
                continue;
            }
            let dep = self.dep(slot, cur);
            if cur.0 == 0 {
                if let (Some(p), Some(q)) = (arrived, dep) {
                    if self.conflict(p, q) {
                        continue;
                    }
                }
            }
            let e = &self.edges[slot];
            let next = if e.a == cur { e.b } else { e.a };
            let next_arrived = self.dep(slot, next);
            self.used[slot] = true;
            self.seq.push(slot);
            let fd = if first_dep.is_none() { dep } else { first_dep };
            if self.dfs(next, next_arrived, left - 1, start, fd) {
                return true;
            }
            self.used[slot] = false;
            self.seq.pop();
        }
        false
    }
}

/// Find a non-conflicting Eulerian tour of an Eulerian path-graph.
/// Loop-paths are rerouted through auxiliary degree-2 vertices so each
/// orientation becomes a separate half-edge; the tour is then built by a
/// transition-aware depth-first search with restarts, and fully re-verified.
pub fn euler_tour_nc(
    g: &ComplexHypergraph,
    pg: &PathGraph,
    rng: &mut ChaCha8Rng,
    budget: Option<usize>,
) -> Result<Tour, StageError> {
    if pg.paths.is_empty() {
        return Err(StageError::precondition("euler_tour_nc", "empty path-graph"));
    }
    // degree and connectivity check on the quotient
    let mut deg: BTreeMap<VertexId, u64> = BTreeMap::new();
    let mut adj_v: BTreeMap<VertexId, BTreeSet<VertexId>> = BTreeMap::new();
    for p in &pg.paths {
        let (a, b) = p
            .end_vertices(g)
            .ok_or_else(|| StageError::precondition("euler_tour_nc", "path with stub end"))?;
        *deg.entry(a).or_insert(0) += 1;
        *deg.entry(b).or_insert(0) += 1;
        adj_v.entry(a).or_default().insert(b);
        adj_v.entry(b).or_default().insert(a);
    }
    if deg.values().any(|&d| d % 2 == 1) {
        return Err(StageError::precondition("euler_tour_nc", "quotient has odd degrees"));
    }
    let support: Vec<VertexId> = deg.keys().copied().collect();
    let mut reach: BTreeSet<VertexId> = BTreeSet::from([support[0]]);
    let mut queue = VecDeque::from([support[0]]);
    while let Some(v) = queue.pop_front() {
        for &w in adj_v.get(&v).into_iter().flatten() {
            if reach.insert(w) {
                queue.push_back(w);
            }
        }
    }
    if reach.len() != support.len() {
        return Err(StageError::precondition("euler_tour_nc", "quotient not connected"));
    }

    // expanded edge list: loop-paths become two half-edges through an aux node
    let mut edges: Vec<TourEdge> = Vec::new();
    for (i, p) in pg.paths.iter().enumerate() {
        let (a, b) = p.end_vertices(g).unwrap();
        if a != b {
            edges.push(TourEdge {
                a: (0, a),
                b: (0, b),
                dep_a: Some(OrientedPath { idx: i, forward: true }),
                dep_b: Some(OrientedPath { idx: i, forward: false }),
            });
        } else {
            edges.push(TourEdge {
                a: (0, a),
                b: (1, i as u32),
                dep_a: Some(OrientedPath { idx: i, forward: true }),
                dep_b: None,
            });
            edges.push(TourEdge {
                a: (0, a),
                b: (1, i as u32),
                dep_a: Some(OrientedPath { idx: i, forward: false }),
                dep_b: None,
            });
        }
    }
    let mut cache: BTreeMap<(usize, bool), OrientCache> = BTreeMap::new();
    for (i, p) in pg.paths.iter().enumerate() {
        for fwd in [true, false] {
            let o = orient(p, fwd);
            cache.insert(
                (i, fwd),
                OrientCache {
                    sub: sub_vertices(&o, g),
                    idx: o.initial_index(g),
                    universal: o.is_universal_at_start(g),
                },
            );
        }
    }
    let start: NodeKey = (0, support[0]);
    let per_try = budget.unwrap_or(200_000);
    for _restart in 0..8 {
        let mut adj: BTreeMap<NodeKey, Vec<usize>> = BTreeMap::new();
        for (slot, e) in edges.iter().enumerate() {
            adj.entry(e.a).or_default().push(slot);
            adj.entry(e.b).or_default().push(slot);
        }
        for slots in adj.values_mut() {
            slots.shuffle(rng);
        }
        let total = edges.len();
        let mut search = TourSearch {
            edges: &edges,
            adj: &adj,
            cache: &cache,
            used: vec![false; total],
            seq: Vec::new(),
            steps: 0,
            budget: per_try,
        };
        // the search recurses once per quotient edge, so give it room
        let (found, seq) = std::thread::scope(|scope| {
            std::thread::Builder::new()
                .stack_size(512 << 20)
                .spawn_scoped(scope, move || {
                    let ok = search.dfs(start, None, total, start, None);
                    (ok, search.seq)
                })
                .expect("tour search thread")
                .join()
                .expect("tour search thread panicked")
        });
        if found {
            // collapse aux half-edge pairs back into oriented loop steps
            let mut steps: Vec<OrientedPath> = Vec::new();
            let mut cur = start;
            for &slot in &seq {
                let e = &edges[slot];
                let next = if e.a == cur { e.b } else { e.a };
                if cur.0 == 0 {
                    let dep = if e.a == cur { e.dep_a } else { e.dep_b };
                    steps.push(dep.unwrap());
                }
                cur = next;
            }
            let tour = Tour { steps, closed: true };
            verify_tour(g, pg, &tour)?;
            return Ok(tour);
        }
    }
    Err(StageError::budget(
        "euler_tour_nc",
        "no non-conflicting tour found within the search budget",
    ))
}

/// Concatenate the paths of a non-conflicting Eulerian tour or trail of a
/// long-path-graph decomposing an ell-divisible host into one complex
/// ell-path.
pub fn trail_to_ell_paths(
    g: &ComplexHypergraph,
    pg: &PathGraph,
    t: &Tour,
) -> Result<ComplexPath, StageError> {
    if !g.is_ell_divisible() {
        return Err(StageError::precondition("trail_to_ell_paths", "host not 0 mod ell"));
    }
    // the path-graph must decompose the host
    let mut covered: BTreeSet<ItemId> = BTreeSet::new();
    for p in &pg.paths {
        covered.extend(p.items());
    }
    let all: BTreeSet<ItemId> = g.item_ids().into_iter().collect();
    if covered != all {
        return Err(StageError::precondition(
            "trail_to_ell_paths",
            "path-graph does not cover the host exactly",
        ));
    }
    for (i, p) in pg.paths.iter().enumerate() {
        if !p.is_long(g) {
            return Err(StageError::precondition(
                "trail_to_ell_paths",
                format!("path {i} is not long"),
            ));
        }
    }
    verify_tour(g, pg, t)?;
    let mut acc = orient(&pg.paths[t.steps[0].idx], t.steps[0].forward);
    for s in &t.steps[1..] {
        let next = orient(&pg.paths[s.idx], s.forward);
        acc = concat_at_vertex(&acc, &next);
    }
    let check = acc.validate(g);
    if let Some(v) = check.violation {
        return Err(StageError::verification(
            "trail_to_ell_paths",
            format!("concatenation invalid: {:?} {}", v.rule, v.detail),
        ));
    }
    if !acc.is_ell_path(g) {
        return Err(StageError::verification(
            "trail_to_ell_paths",
            format!("concatenation has residue {}", acc.residue(g)),
        ));
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// long-path-graph construction

#[derive(Debug, Clone, Copy)]
pub struct LongPathConfig {
    /// Size of the clique gadget replacing each wiggly edge.
    pub clique: usize,
    pub retries: usize,
}

impl Default for LongPathConfig {
    fn default() -> Self {
        LongPathConfig { clique: 5, retries: 12 }
    }
}

const AUXV: VertexId = VertexId::MAX;

/// Eulerian walks of a multigraph with auxiliary edges pairing odd degrees;
/// returns the start vertex and the edge slots of each closed walk.
fn euler_walks(all: &[(VertexId, VertexId)]) -> Vec<(VertexId, Vec<usize>)> {
    let mut adj: BTreeMap<VertexId, Vec<usize>> = BTreeMap::new();
    for (i, &(u, v)) in all.iter().enumerate() {
        adj.entry(u).or_default().push(i);
        if u != v {
            adj.entry(v).or_default().push(i);
        }
    }
    let mut used = vec![false; all.len()];
    let mut next_slot: BTreeMap<VertexId, usize> = BTreeMap::new();
    let mut walks = Vec::new();
    let mut starts: Vec<VertexId> = Vec::new();
    if adj.contains_key(&AUXV) {
        starts.push(AUXV);
    }
    starts.extend(adj.keys().copied().filter(|&v| v != AUXV));
    for start in starts {
        loop {
            if !adj[&start].iter().any(|&i| !used[i]) {
                break;
            }
            let mut circuit: Vec<usize> = Vec::new();
            let mut stack: Vec<(VertexId, Option<usize>)> = vec![(start, None)];
            while let Some(&(v, _)) = stack.last() {
                let slots = adj.get(&v).cloned().unwrap_or_default();
                let cursor = next_slot.entry(v).or_insert(0);
                let mut advanced = false;
                while *cursor < slots.len() {
                    let i = slots[*cursor];
                    *cursor += 1;
                    if !used[i] {
                        used[i] = true;
                        let (a, b) = all[i];
                        let w = if a == v { b } else { a };
                        stack.push((w, Some(i)));
                        advanced = true;
                        break;
                    }
                }
                if !advanced {
                    let (_, via) = stack.pop().unwrap();
                    if let Some(i) = via {
                        circuit.push(i);
                    }
                }
            }
            circuit.reverse();
            if !circuit.is_empty() {
                walks.push((start, circuit));
            }
        }
    }
    walks
}

/// Incremental segment state, enforcing path validity (vertex spacing and
/// index compatibility) plus the rule that the two half-edges of one gadget
/// never share a segment.
struct SegBuilder {
    ell: u64,
    elems: Vec<PathElem>,
    last_pos: BTreeMap<VertexId, u64>,
    pos: u64,
    last_token: Option<Index>,
    gadgets: BTreeSet<ItemId>,
    edge_count: usize,
}

impl SegBuilder {
    fn start(ell: u64, v: VertexId) -> Self {
        SegBuilder {
            ell,
            elems: vec![PathElem::Vertex(v)],
            last_pos: BTreeMap::from([(v, 0)]),
            pos: 0,
            last_token: None,
            gadgets: BTreeSet::new(),
            edge_count: 0,
        }
    }

    fn cur_vertex(&self) -> VertexId {
        match *self.elems.last().unwrap() {
            PathElem::Vertex(v) => v,
            _ => unreachable!(),
        }
    }

    fn can_add_ordinary(&self, far: VertexId) -> bool {
        match self.last_pos.get(&far) {
            Some(&p) => self.pos + 1 - p > self.ell,
            None => true,
        }
    }

    fn add_ordinary(&mut self, id: ItemId, far: VertexId) {
        self.pos += 1;
        self.last_pos.insert(far, self.pos);
        self.elems.push(PathElem::Ordinary(id));
        self.elems.push(PathElem::Vertex(far));
        self.edge_count += 1;
    }

    fn can_add_star(&self, gadget: ItemId, enter_idx: Index) -> bool {
        !self.gadgets.contains(&gadget)
            && self.last_token.map_or(true, |t| compatible(t, enter_idx))
    }

    fn add_star(
        &mut self,
        id: ItemId,
        first_slot: u8,
        far: VertexId,
        gadget: ItemId,
        exit_idx: Index,
    ) {
        self.gadgets.insert(gadget);
        self.last_token = Some(exit_idx);
        self.pos = 0;
        self.last_pos = BTreeMap::from([(far, 0)]);
        self.elems.push(PathElem::Wiggly { id, first_slot });
        self.elems.push(PathElem::Vertex(far));
        self.edge_count += 1;
    }
}

struct TrimmedSeg {
    elems: Vec<PathElem>,
    /// Original wiggly edge and star tag glued before the first element.
    start_glue: Option<(ItemId, u8)>,
    end_glue: Option<(ItemId, u8)>,
}

/// Decompose a stub-free complex graph into long paths with intersection
/// ratio at most 1/c and quotient degree above deg/2ell at every vertex.
/// Wiggly edges are replaced by clique gadgets with two indexed unit
/// half-edges, the gadget graph is cut along Eulerian walks into valid
/// segments, and the halves are recombined around the original edges.
pub fn build_long_path_graph(
    g: &ComplexHypergraph,
    c: u64,
    cfg: LongPathConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PathGraph, StageError> {
    if g.stub_count() > 0 || g.hyper_count() > 0 {
        return Err(StageError::precondition(
            "build_long_path_graph",
            "host must be a complex graph without stubs",
        ));
    }
    let ell = g.ell();
    // gadget expansion
    let mut gs = ComplexHypergraph::new(ell);
    for v in g.vertices() {
        gs.add_vertex(v);
    }
    let mut fresh: VertexId = g.vertices().max().map_or(0, |v| v + 1);
    // maps from expanded ids back to the host
    let mut ord_map: BTreeMap<ItemId, ItemId> = BTreeMap::new();
    let mut star_of: BTreeMap<ItemId, (ItemId, u8)> = BTreeMap::new();
    let mut interior: BTreeSet<VertexId> = BTreeSet::new();
    for id in g.ordinary_ids() {
        let (u, v) = g.ordinary(id).unwrap();
        let nid = gs.add_ordinary(u, v).map_err(|e| {
            StageError::precondition("build_long_path_graph", e.to_string())
        })?;
        ord_map.insert(nid, id);
    }
    for id in g.wiggly_ids() {
        let w = g.wiggly(id).unwrap().clone();
        let q = cfg.clique.max(3);
        let verts: Vec<VertexId> = (0..q as u32).map(|i| fresh + i).collect();
        fresh += q as u32;
        for &x in &verts {
            gs.add_vertex(x);
            interior.insert(x);
        }
        for i in 0..q {
            for j in i + 1..q {
                gs.add_ordinary(verts[i], verts[j]).unwrap();
            }
        }
        let (i1, i2) = (w.ends[0].index, w.ends[1].index);
        let s0 = gs
            .add_wiggly(WigglyEdge {
                ends: [Incidence::new(w.ends[0].vertex, i1), Incidence::new(verts[1], i2)],
                len: 1,
            })
            .unwrap();
        let s1 = gs
            .add_wiggly(WigglyEdge {
                ends: [Incidence::new(verts[0], i1), Incidence::new(w.ends[1].vertex, i2)],
                len: 1,
            })
            .unwrap();
        star_of.insert(s0, (id, 0));
        star_of.insert(s1, (id, 1));
    }

    let mut medges: Vec<(ItemId, VertexId, VertexId)> = Vec::new();
    for id in gs.ordinary_ids() {
        let (u, v) = gs.ordinary(id).unwrap();
        medges.push((id, u, v));
    }
    for id in gs.wiggly_ids() {
        let w = gs.wiggly(id).unwrap();
        medges.push((id, w.ends[0].vertex, w.ends[1].vertex));
    }

    let mut last_detail = String::new();
    for _try in 0..cfg.retries.max(1) {
        medges.shuffle(rng);
        let mut all: Vec<(VertexId, VertexId)> = medges.iter().map(|&(_, u, v)| (u, v)).collect();
        let mut degree: BTreeMap<VertexId, usize> = BTreeMap::new();
        for &(u, v) in &all {
            *degree.entry(u).or_insert(0) += 1;
            *degree.entry(v).or_insert(0) += 1;
        }
        let real_edges = all.len();
        for (&v, &d) in &degree {
            if d % 2 == 1 {
                all.push((AUXV, v));
            }
        }

        // cut the walks into valid segments, forcing extra cuts until every
        // vertex owns the quotient degree the postcondition demands
        let need: BTreeMap<VertexId, u64> = g
            .vertices()
            .map(|v| {
                let d = u64::from(g.degrees(v).unwrap().deg);
                (v, d / (2 * ell) + 1)
            })
            .collect();
        let mut end_count: BTreeMap<VertexId, u64> = BTreeMap::new();
        let mut visits: BTreeMap<VertexId, u64> = BTreeMap::new();
        let mut segments: Vec<Vec<PathElem>> = Vec::new();
        for (start, walk) in euler_walks(&all) {
            let mut seg: Option<SegBuilder> = if start == AUXV {
                None
            } else {
                Some(SegBuilder::start(ell, start))
            };
            let mut cur = start;
            let close = |b: SegBuilder, segments: &mut Vec<Vec<PathElem>>,
                             end_count: &mut BTreeMap<VertexId, u64>| {
                if b.edge_count > 0 {
                    let first = match b.elems[0] {
                        PathElem::Vertex(v) => v,
                        _ => unreachable!(),
                    };
                    *end_count.entry(first).or_insert(0) += 1;
                    *end_count.entry(b.cur_vertex()).or_insert(0) += 1;
                    segments.push(b.elems);
                }
            };
            for slot in walk {
                let (a, b) = all[slot];
                let far = if cur == a { b } else { a };
                if slot >= real_edges {
                    // auxiliary edge: hard cut
                    if let Some(bld) = seg.take() {
                        close(bld, &mut segments, &mut end_count);
                    }
                    cur = far;
                    if cur != AUXV {
                        seg = Some(SegBuilder::start(ell, cur));
                    }
                    continue;
                }
                let (id, _, _) = medges[slot];
                let bld = seg.get_or_insert_with(|| SegBuilder::start(ell, cur));
                if let Some(&(orig, tag)) = star_of.get(&id) {
                    let w = gs.wiggly(id).unwrap();
                    let first_slot = if w.ends[0].vertex == cur { 0u8 } else { 1u8 };
                    let enter_idx = w.ends[first_slot as usize].index;
                    let exit_idx = w.ends[1 - first_slot as usize].index;
                    if !bld.can_add_star(orig, enter_idx) {
                        let done = seg.take().unwrap();
                        close(done, &mut segments, &mut end_count);
                        let bld = seg.insert(SegBuilder::start(ell, cur));
                        bld.add_star(id, first_slot, far, orig, exit_idx);
                    } else {
                        bld.add_star(id, first_slot, far, orig, exit_idx);
                    }
                    let _ = tag;
                } else if !bld.can_add_ordinary(far) {
                    let done = seg.take().unwrap();
                    close(done, &mut segments, &mut end_count);
                    let bld = seg.insert(SegBuilder::start(ell, cur));
                    bld.add_ordinary(id, far);
                } else {
                    bld.add_ordinary(id, far);
                }
                cur = far;
                if !interior.contains(&cur) && cur != AUXV {
                    let seen = visits.entry(cur).or_insert(0);
                    *seen += 1;
                    let total = (degree.get(&cur).copied().unwrap_or(0) / 2) as u64;
                    let remaining = total.saturating_sub(*seen);
                    let ends = end_count.get(&cur).copied().unwrap_or(0);
                    let seg_len = seg.as_ref().map_or(0, |s| s.edge_count) as u64;
                    let deficit = need[&cur].saturating_sub(ends);
                    if deficit > 0 && seg_len >= ell {
                        // spread the cuts over the remaining visits so other
                        // vertices nearby still find room for theirs
                        let cuts_wanted = deficit.div_ceil(2);
                        let must = remaining <= cuts_wanted * ell;
                        let num = (cuts_wanted * 2).min(remaining.max(1)) as u32;
                        if must || rng.gen_ratio(num, remaining.max(1) as u32) {
                            let done = seg.take().unwrap();
                            close(done, &mut segments, &mut end_count);
                            seg = Some(SegBuilder::start(ell, cur));
                        }
                    }
                }
            }
            if let Some(bld) = seg.take() {
                close(bld, &mut segments, &mut end_count);
            }
        }

        // merge segments cut too short (all-ordinary, fewer than ell edges)
        // into any compatible neighbor sharing an endpoint
        let seg_first = |e: &[PathElem]| match e[0] {
            PathElem::Vertex(v) => v,
            _ => unreachable!(),
        };
        let seg_last = |e: &[PathElem]| match *e.last().unwrap() {
            PathElem::Vertex(v) => v,
            _ => unreachable!(),
        };
        let rev_elems = |e: &[PathElem]| -> Vec<PathElem> {
            e.iter()
                .rev()
                .map(|x| match *x {
                    PathElem::Wiggly { id, first_slot } => {
                        PathElem::Wiggly { id, first_slot: 1 - first_slot }
                    }
                    other => other,
                })
                .collect()
        };
        let seg_ok = |e: &[PathElem]| -> bool {
            let mut gadgets = BTreeSet::new();
            for x in e {
                if let PathElem::Wiggly { id, .. } = x {
                    if let Some(&(orig, _)) = star_of.get(id) {
                        if !gadgets.insert(orig) {
                            return false;
                        }
                    }
                }
            }
            ComplexPath::new(e.to_vec()).validate(&gs).ok()
        };
        let mut seg_ends: BTreeMap<VertexId, u64> = BTreeMap::new();
        for s in &segments {
            *seg_ends.entry(seg_first(s)).or_insert(0) += 1;
            *seg_ends.entry(seg_last(s)).or_insert(0) += 1;
        }
        let mut i = 0;
        while i < segments.len() {
            let short = segments[i].len() / 2 < ell as usize
                && segments[i].iter().all(|e| !matches!(e, PathElem::Wiggly { .. }));
            if !short {
                i += 1;
                continue;
            }
            // prefer a merge whose junction vertex can spare two ends
            let mut merged_into: Option<(usize, Vec<PathElem>, VertexId)> = None;
            'strict: for lenient in [false, true] {
                for j in 0..segments.len() {
                    if j == i {
                        continue;
                    }
                    let (tf, tl) = (seg_first(&segments[j]), seg_last(&segments[j]));
                    let attempts: [(bool, bool); 4] =
                        [(false, false), (false, true), (true, false), (true, true)];
                    for (rev_s, append) in attempts {
                        let s = if rev_s { rev_elems(&segments[i]) } else { segments[i].clone() };
                        let (cand, junction) = if append && tl == seg_first(&s) {
                            let mut c = segments[j].clone();
                            c.extend_from_slice(&s[1..]);
                            (Some(c), tl)
                        } else if !append && seg_last(&s) == tf {
                            let mut c = s.clone();
                            c.extend_from_slice(&segments[j][1..]);
                            (Some(c), tf)
                        } else {
                            (None, 0)
                        };
                        let Some(c) = cand else { continue };
                        let spare = interior.contains(&junction)
                            || seg_ends.get(&junction).copied().unwrap_or(0)
                                >= need.get(&junction).copied().unwrap_or(0) + 2;
                        if (lenient || spare) && seg_ok(&c) {
                            merged_into = Some((j, c, junction));
                            break 'strict;
                        }
                    }
                }
            }
            if let Some((j, c, junction)) = merged_into {
                if !interior.contains(&junction) {
                    *seg_ends.entry(junction).or_insert(2) -= 2;
                }
                segments[j] = c;
                segments.remove(i);
            } else {
                i += 1;
            }
        }

        // trim gadget interiors, drop pure-interior segments
        let mut trimmed: Vec<TrimmedSeg> = Vec::new();
        for elems in segments {
            let star_positions: Vec<usize> = elems
                .iter()
                .enumerate()
                .filter_map(|(i, e)| match e {
                    PathElem::Wiggly { id, .. } if star_of.contains_key(id) => Some(i),
                    _ => None,
                })
                .collect();
            if star_positions.is_empty() {
                let has_real = elems.iter().any(|e| matches!(e, PathElem::Ordinary(id) if ord_map.contains_key(id)));
                if has_real {
                    trimmed.push(TrimmedSeg { elems, start_glue: None, end_glue: None });
                }
                continue;
            }
            let mut begin = 0usize;
            let mut end = elems.len();
            let mut start_glue = None;
            let mut end_glue = None;
            for &p in &star_positions {
                let (id, first_slot) = match elems[p] {
                    PathElem::Wiggly { id, first_slot } => (id, first_slot),
                    _ => unreachable!(),
                };
                let (orig, tag) = star_of[&id];
                // the real slot of star `tag` is slot `tag` of the original edge
                let real_first = first_slot == tag;
                if real_first {
                    // traversed real -> interior: everything from the star on
                    // is interior; this is the end glue
                    end = end.min(p);
                    end_glue = Some((orig, tag));
                } else {
                    // traversed interior -> real: real part starts after it
                    begin = begin.max(p + 1);
                    start_glue = Some((orig, tag));
                }
            }
            let core: Vec<PathElem> = elems[begin..end].to_vec();
            if core.is_empty() {
                // the star sat at the very boundary; keep the lone real vertex
                let v = if let Some((orig, tag)) = start_glue.or(end_glue) {
                    g.wiggly(orig).unwrap().ends[tag as usize].vertex
                } else {
                    unreachable!()
                };
                trimmed.push(TrimmedSeg {
                    elems: vec![PathElem::Vertex(v)],
                    start_glue,
                    end_glue,
                });
            } else {
                trimmed.push(TrimmedSeg { elems: core, start_glue, end_glue });
            }
        }

        // connectors: each original wiggly edge joins two segment ports
        let mut ports: BTreeMap<ItemId, Vec<(usize, bool)>> = BTreeMap::new();
        for (i, t) in trimmed.iter().enumerate() {
            if let Some((orig, _)) = t.start_glue {
                ports.entry(orig).or_default().push((i, false));
            }
            if let Some((orig, _)) = t.end_glue {
                ports.entry(orig).or_default().push((i, true));
            }
        }
        let mut ok = ports.values().all(|v| v.len() == 2);
        if !ok {
            last_detail = "a gadget lost one of its half-edges".into();
            continue;
        }

        // stitch chains and cycles
        let mut visited = vec![false; trimmed.len()];
        let mut paths: Vec<ComplexPath> = Vec::new();
        let glue_at = |t: &TrimmedSeg, at_end: bool| if at_end { t.end_glue } else { t.start_glue };
        let stitch = |seed: usize,
                          from_end: bool,
                          visited: &mut Vec<bool>,
                          paths: &mut Vec<ComplexPath>| {
            // traverse starting at the (seed, from_end) port, which for chain
            // seeds is the open port
            let mut elems: Vec<PathElem> = if from_end {
                trimmed[seed].elems.iter().rev().map(|e| match *e {
                    PathElem::Wiggly { id, first_slot } => {
                        PathElem::Wiggly { id, first_slot: 1 - first_slot }
                    }
                    other => other,
                }).collect()
            } else {
                trimmed[seed].elems.clone()
            };
            visited[seed] = true;
            let mut cur = seed;
            let mut leaving_end = !from_end;
            loop {
                let glue = glue_at(&trimmed[cur], leaving_end);
                let Some((orig, tag)) = glue else { break };
                let w = g.wiggly(orig).unwrap();
                let far = w.ends[1 - tag as usize].vertex;
                elems.push(PathElem::Wiggly { id: orig, first_slot: tag });
                elems.push(PathElem::Vertex(far));
                let others = &ports[&orig];
                let (nxt, nxt_end) = if others[0].0 == cur && (others[0].1 == leaving_end) {
                    others[1]
                } else {
                    others[0]
                };
                if visited[nxt] {
                    // closed a cycle back into the seed segment
                    break;
                }
                visited[nxt] = true;
                let seg = &trimmed[nxt];
                let add: Vec<PathElem> = if nxt_end {
                    seg.elems.iter().rev().map(|e| match *e {
                        PathElem::Wiggly { id, first_slot } => {
                            PathElem::Wiggly { id, first_slot: 1 - first_slot }
                        }
                        other => other,
                    }).collect()
                } else {
                    seg.elems.clone()
                };
                elems.extend_from_slice(&add[1..]);
                cur = nxt;
                leaving_end = !nxt_end;
            }
            paths.push(ComplexPath::new(elems));
        };
        // chains first (segments with an open port)
        for i in 0..trimmed.len() {
            if visited[i] {
                continue;
            }
            if trimmed[i].start_glue.is_none() {
                stitch(i, false, &mut visited, &mut paths);
            } else if trimmed[i].end_glue.is_none() {
                stitch(i, true, &mut visited, &mut paths);
            }
        }
        // remaining segments sit on cycles; cut each at its seed
        for i in 0..trimmed.len() {
            if !visited[i] {
                stitch(i, false, &mut visited, &mut paths);
            }
        }

        // map expanded ordinary ids back to the host
        let paths: Vec<ComplexPath> = paths
            .into_iter()
            .map(|p| {
                ComplexPath::new(
                    p.into_elems()
                        .into_iter()
                        .map(|e| match e {
                            PathElem::Ordinary(id) => PathElem::Ordinary(ord_map[&id]),
                            other => other,
                        })
                        .collect(),
                )
            })
            .collect();
        let mut pg = PathGraph::new(paths);

        // raise deficient quotient degrees by splitting paths at interior
        // occurrences of the vertex, keeping both halves long
        let is_long_elems = |e: &[PathElem]| -> bool {
            let wig = e.iter().any(|x| matches!(x, PathElem::Wiggly { .. }));
            let ord = e.iter().filter(|x| matches!(x, PathElem::Ordinary(_))).count() as u64;
            wig || ord >= ell
        };
        let mut rounds = 0usize;
        loop {
            rounds += 1;
            if rounds > 4 * g.vertex_count() {
                break;
            }
            let mut qdeg: BTreeMap<VertexId, u64> = BTreeMap::new();
            for p in &pg.paths {
                if let Some((a, b)) = p.end_vertices(g) {
                    *qdeg.entry(a).or_insert(0) += 1;
                    *qdeg.entry(b).or_insert(0) += 1;
                }
            }
            let ratios = quotient_and_ratios(g, &pg).map(|(_, r)| r).unwrap_or_default();
            let deficient = g.vertices().find(|&v| {
                let d = u64::from(g.degrees(v).unwrap().deg);
                if d == 0 {
                    return false;
                }
                let q = qdeg.get(&v).copied().unwrap_or(0);
                if q * 2 * ell <= d {
                    return true;
                }
                // more ends at v also relax its intersection ratio
                let r = ratios.per_vertex.get(&v).copied().unwrap_or_default();
                r.inter_count * c > r.deg
            });
            let Some(v) = deficient else { break };
            // when the intersection ratio drove the violation, find the
            // vertex the initial segments crowd onto so new ends avoid it
            let popular_w: Option<VertexId> = {
                let r = ratios.per_vertex.get(&v).copied().unwrap_or_default();
                if r.deg > 0 && r.inter_count * c > r.deg {
                    let mut per_w: BTreeMap<VertexId, u64> = BTreeMap::new();
                    for m in starts_at(&pg, g, v) {
                        let o = orient(&pg.paths[m.idx], m.forward);
                        for w in sub_vertices(&o, g) {
                            if w != v {
                                *per_w.entry(w).or_insert(0) += 1;
                            }
                        }
                    }
                    per_w.into_iter().max_by_key(|&(_, n)| n).map(|(w, _)| w)
                } else {
                    None
                }
            };
            // vertices reachable from `pos` within ell ordinary edges, both ways
            let window_hits = |es: &[PathElem], pos: usize, w: VertexId| -> bool {
                for dir in [-1i64, 1i64] {
                    let mut ord = 0u64;
                    let mut i = pos as i64;
                    loop {
                        i += dir;
                        if i < 0 || i as usize >= es.len() {
                            break;
                        }
                        match es[i as usize] {
                            PathElem::Vertex(x) => {
                                if x == w {
                                    return true;
                                }
                            }
                            PathElem::Ordinary(_) => {
                                ord += 1;
                                if ord > ell {
                                    break;
                                }
                            }
                            _ => break,
                        }
                    }
                }
                false
            };
            // a donor ending at `at` whose other end keeps enough quotient
            // degree after losing the junction ends
            let find_donor = |pg: &PathGraph, at: VertexId, skip: usize| -> Option<(usize, bool)> {
                for (qi, q) in pg.paths.iter().enumerate() {
                    if qi == skip {
                        continue;
                    }
                    let (a, b) = q.end_vertices(g)?;
                    let dv = u64::from(g.degrees(at).unwrap().deg);
                    if (qdeg.get(&at).copied().unwrap_or(0) - 2) * 2 * ell <= dv {
                        return None;
                    }
                    if b == at {
                        return Some((qi, true));
                    }
                    if a == at {
                        return Some((qi, false));
                    }
                }
                None
            };
            let mut fixed = false;
            'outer: for pi in 0..pg.paths.len() {
                let es = pg.paths[pi].elems().to_vec();
                for pos in (2..es.len().saturating_sub(1)).step_by(2) {
                    if !matches!(es[pos], PathElem::Vertex(w) if w == v) {
                        continue;
                    }
                    let left_ok = is_long_elems(&es[..=pos]);
                    let right_ok = is_long_elems(&es[pos..]);
                    let (pa, pb) = pg.paths[pi].end_vertices(g).unwrap();
                    let left_donor = if left_ok { None } else { find_donor(&pg, pa, pi) };
                    let right_donor = if right_ok { None } else { find_donor(&pg, pb, pi) };
                    if (!left_ok && left_donor.is_none()) || (!right_ok && right_donor.is_none()) {
                        continue;
                    }
                    if let (Some((a, _)), Some((b, _))) = (left_donor, right_donor) {
                        if a == b {
                            continue;
                        }
                    }
                    let mut cur = pg.paths[pi].clone();
                    let mut split_at = pos;
                    if let Some((qi, fwd)) = left_donor {
                        let q = orient(&pg.paths[qi], fwd);
                        split_at += q.elems().len() - 1;
                        cur = concat_at_vertex(&q, &cur);
                    }
                    if let Some((ri, fwd)) = right_donor {
                        let r = orient(&pg.paths[ri], !fwd);
                        cur = concat_at_vertex(&cur, &r);
                    }
                    if !cur.validate(g).ok() {
                        continue;
                    }
                    let ces = cur.elems();
                    if !is_long_elems(&ces[..=split_at]) || !is_long_elems(&ces[split_at..]) {
                        continue;
                    }
                    if let Some(w) = popular_w {
                        if window_hits(ces, split_at, w) {
                            continue;
                        }
                    }
                    let left = ComplexPath::new(ces[..=split_at].to_vec());
                    let right = ComplexPath::new(ces[split_at..].to_vec());
                    let mut drop: Vec<usize> = vec![pi];
                    if let Some((qi, _)) = left_donor {
                        drop.push(qi);
                    }
                    if let Some((ri, _)) = right_donor {
                        drop.push(ri);
                    }
                    drop.sort_unstable();
                    for d in drop.into_iter().rev() {
                        pg.paths.remove(d);
                    }
                    pg.paths.push(left);
                    pg.paths.push(right);
                    fixed = true;
                    break 'outer;
                }
            }
            if !fixed {
                break;
            }
        }

        // full postcondition verification
        if let Err(e) = pg.validate(g) {
            last_detail = format!("{e}");
            continue;
        }
        let mut covered: BTreeSet<ItemId> = BTreeSet::new();
        for p in &pg.paths {
            covered.extend(p.items());
        }
        let all_items: BTreeSet<ItemId> = g.item_ids().into_iter().collect();
        if covered != all_items {
            last_detail = format!(
                "coverage mismatch: {} of {} items",
                covered.len(),
                all_items.len()
            );
            continue;
        }
        if let Some(i) = pg.paths.iter().position(|p| !p.is_long(g)) {
            last_detail = format!("path {i} is short");
            continue;
        }
        let (_, ratios) = quotient_and_ratios(g, &pg)?;
        ok = true;
        for v in g.vertices() {
            let d = u64::from(g.degrees(v).unwrap().deg);
            if d == 0 {
                continue;
            }
            let r = ratios.per_vertex.get(&v).copied().unwrap_or_default();
            if r.inter_count * c > r.deg {
                last_detail = format!(
                    "vertex {v}: intersection count {} over degree {} exceeds 1/{c}",
                    r.inter_count, r.deg
                );
                ok = false;
                break;
            }
            if r.deg * 2 * ell <= d {
                last_detail =
                    format!("vertex {v}: quotient degree {} at host degree {d}", r.deg);
                ok = false;
                break;
            }
        }
        if ok {
            return Ok(pg);
        }
    }
    Err(StageError::verification(
        "build_long_path_graph",
        format!("postconditions unachieved after retries: {last_detail}"),
    ))
}

// ---------------------------------------------------------------------------
// rainbow structures

/// Nested edge-disjoint spanning subgraphs with geometric degree growth,
/// each carrying an almost balanced orientation, used to route short paths
/// online without ever running out of fresh out-edges.
pub struct RainbowStructure {
    pub layers: Vec<BTreeSet<ItemId>>,
    orients: Vec<BTreeMap<ItemId, bool>>,
    used: BTreeSet<ItemId>,
    pub k: usize,
    pub m: u64,
}

fn edge_from(g: &ComplexHypergraph, id: ItemId, forward: bool) -> (VertexId, VertexId, Index, Index, u8) {
    // (from, to, index at from, index at to, first slot) for a traversal
    if let Some((a, b)) = g.ordinary(id) {
        let (lo, hi) = (a.min(b), a.max(b));
        return if forward { (lo, hi, WILDCARD, WILDCARD, 0) } else { (hi, lo, WILDCARD, WILDCARD, 0) };
    }
    let w = g.wiggly(id).unwrap();
    if forward {
        (w.ends[0].vertex, w.ends[1].vertex, w.ends[0].index, w.ends[1].index, 0)
    } else {
        (w.ends[1].vertex, w.ends[0].vertex, w.ends[1].index, w.ends[0].index, 1)
    }
}

pub fn rainbow_structure(
    g: &ComplexHypergraph,
    k: usize,
    m: u64,
    delta: (u64, u64),
    eps: (u64, u64),
) -> Result<RainbowStructure, StageError> {
    if k == 0 {
        return Err(StageError::precondition("rainbow_structure", "k must be positive"));
    }
    let ms: Vec<u32> = (1..=k as u32).rev().collect();
    let layers = fractions(g, &ms)?;
    // degree growth inequalities, with denominators cleared
    let (dn, dd) = delta;
    let (en, ed) = eps;
    let layer_deg = |i: usize, v: VertexId| -> u64 {
        layers[i]
            .iter()
            .map(|id| g.item_vertices(*id).unwrap().iter().filter(|&&x| x == v).count() as u64)
            .sum()
    };
    for v in g.vertices() {
        let d = u64::from(g.degrees(v).unwrap().deg) as u128;
        let d1 = layer_deg(0, v) as u128;
        let lhs = d1 * dd as u128 * ed as u128;
        let rhs = 2 * (dn as u128 * ed as u128 + en as u128 * dd as u128) * d
            + (2 * m as u128 + 1) * dd as u128 * ed as u128;
        if lhs < rhs {
            return Err(StageError::verification(
                "rainbow_structure",
                format!("vertex {v}: first layer degree {d1} too small"),
            ));
        }
        for i in 0..k - 1 {
            let di = layer_deg(i, v) as u128;
            let dn1 = layer_deg(i + 1, v) as u128;
            let lhs = dn1 * ed as u128;
            let rhs = 2 * en as u128 * d
                + di * ed as u128
                + (2 * (i as u128 + 1) + 2 * m as u128) * ed as u128;
            if lhs < rhs {
                return Err(StageError::verification(
                    "rainbow_structure",
                    format!("vertex {v}: layer {} degree {dn1} grows too slowly", i + 1),
                ));
            }
        }
    }
    let mut orients = Vec::new();
    for layer in &layers {
        let sub = g.restrict_items(layer);
        orients.push(almost_balanced_orientation(&sub)?);
    }
    Ok(RainbowStructure { layers, orients, used: BTreeSet::new(), k, m })
}

impl RainbowStructure {
    /// Route one path of `nedges` edges from `v`, the j-th edge drawn from
    /// layer j and directed forward in its orientation, avoiding the banned
    /// vertices in its initial segment and the banned indices at the start.
    /// Requests consume edges globally, so all routed paths are disjoint.
    pub fn next_path(
        &mut self,
        g: &ComplexHypergraph,
        v: VertexId,
        nedges: usize,
        banned_vertices: &BTreeSet<VertexId>,
        banned_indices: &BTreeSet<Index>,
    ) -> Result<ComplexPath, StageError> {
        if nedges > self.k {
            return Err(StageError::precondition(
                "rainbow_path",
                format!("requested {nedges} edges from {} layers", self.k),
            ));
        }
        let mut elems = vec![PathElem::Vertex(v)];
        let mut cur = v;
        let mut last_token: Option<Index> = None;
        let mut window: BTreeMap<VertexId, u64> = BTreeMap::from([(v, 0)]);
        let mut pos = 0u64;
        let ell = g.ell();
        for j in 0..nedges {
            let mut picked: Option<(ItemId, bool)> = None;
            let mut fallback: Option<(ItemId, bool)> = None;
            for id in g.items_at(cur) {
                if !self.layers[j].contains(&id) || self.used.contains(&id) {
                    continue;
                }
                let Some(&dir) = self.orients[j].get(&id) else { continue };
                let is_loop = g
                    .wiggly(id)
                    .map_or(false, |w| w.is_loop());
                let (from, to, i_from, _i_to, _slot) = edge_from(g, id, dir);
                if !is_loop && from != cur {
                    continue;
                }
                // index constraint at the current vertex
                if i_from != WILDCARD {
                    match last_token {
                        Some(t) => {
                            if !compatible(t, i_from) {
                                continue;
                            }
                        }
                        None => {
                            if banned_indices.contains(&i_from) {
                                continue;
                            }
                        }
                    }
                }
                let wiggly = g.wiggly(id).is_some();
                if wiggly {
                    picked = Some((id, dir));
                    break;
                }
                // ordinary: the far endpoint must avoid the banned set and
                // the recent vertex window
                let far = if is_loop { cur } else { to };
                if banned_vertices.contains(&far) {
                    continue;
                }
                if let Some(&p) = window.get(&far) {
                    if pos + 1 - p <= ell {
                        continue;
                    }
                }
                if fallback.is_none() {
                    fallback = Some((id, dir));
                }
            }
            let (id, dir) = picked.or(fallback).ok_or_else(|| {
                StageError::infeasible(
                    "rainbow_path",
                    format!("no usable edge at vertex {cur} in layer {j}"),
                )
            })?;
            self.used.insert(id);
            if let Some(w) = g.wiggly(id) {
                let is_loop = w.is_loop();
                let slot: u8 = if is_loop {
                    if dir { 0 } else { 1 }
                } else if w.ends[0].vertex == cur {
                    0
                } else {
                    1
                };
                let far = if is_loop { cur } else { w.other_end(cur) };
                elems.push(PathElem::Wiggly { id, first_slot: slot });
                elems.push(PathElem::Vertex(far));
                last_token = Some(w.ends[1 - slot as usize].index);
                pos = 0;
                window = BTreeMap::from([(far, 0)]);
                cur = far;
            } else {
                let (a, b) = g.ordinary(id).unwrap();
                let far = if a == cur { b } else { a };
                elems.push(PathElem::Ordinary(id));
                elems.push(PathElem::Vertex(far));
                pos += 1;
                window.insert(far, pos);
                cur = far;
            }
        }
        let p = ComplexPath::new(elems);
        if let Some(viol) = p.validate(g).violation {
            return Err(StageError::verification(
                "rainbow_path",
                format!("routed path invalid: {:?} {}", viol.rule, viol.detail),
            ));
        }
        Ok(p)
    }
}

// ---------------------------------------------------------------------------
// path-tree builders

fn find_root(parent: &mut BTreeMap<VertexId, VertexId>, v: VertexId) -> VertexId {
    let p = parent[&v];
    if p == v {
        v
    } else {
        let r = find_root(parent, p);
        parent.insert(v, r);
        r
    }
}

/// Build a spanning 1-path-tree on a host whose `tree` items form a complex
/// spanning tree and whose remaining edges form a unit graph sparse in tree
/// degree. Non-unit tree edges are completed to 1-paths by rainbow
/// extensions; extensions landing in their own component donate a crossing
/// unit edge instead.
pub fn one_path_tree(
    h: &ComplexHypergraph,
    tree: &BTreeSet<ItemId>,
) -> Result<PathGraph, StageError> {
    let ell = h.ell();
    let den = ((1u64 << (ell + 1)) * (ell + 2)).max(1u64 << (ell + 2));
    one_path_tree_with_sparsity(h, tree, den)
}

/// Same as `one_path_tree`, but with the required rest-degree-to-tree-degree
/// ratio supplied by the caller (the default is very conservative; small
/// instances succeed at much milder ratios, and the output is verified either
/// way).
pub fn one_path_tree_with_sparsity(
    h: &ComplexHypergraph,
    tree: &BTreeSet<ItemId>,
    den: u64,
) -> Result<PathGraph, StageError> {
    let ell = h.ell();
    if ell < 2 {
        return Err(StageError::precondition("one_path_tree", "needs ell at least 2"));
    }
    let rest: BTreeSet<ItemId> = h
        .item_ids()
        .into_iter()
        .filter(|id| !tree.contains(id))
        .collect();
    let g = h.restrict_items(&rest);
    for id in &rest {
        if h.item_len(*id) != Some(1) {
            return Err(StageError::precondition(
                "one_path_tree",
                "non-tree edges must be unit",
            ));
        }
    }
    // sparsity: tree degree at most 1/den of the remaining degree
    for v in h.vertices() {
        let dt: u64 = tree
            .iter()
            .map(|id| h.item_vertices(*id).unwrap().iter().filter(|&&x| x == v).count() as u64)
            .sum();
        let dg = u64::from(g.degrees(v).unwrap().deg);
        if dt * den > dg {
            return Err(StageError::precondition(
                "one_path_tree",
                format!("vertex {v}: tree degree {dt} too high for degree {dg}"),
            ));
        }
    }
    // The rainbow only needs its own growth inequality; keep a floor on the
    // denominator so mild desk sparsity values stay feasible.
    let rden = den.max(16);
    let mut rainbow = rainbow_structure(&g, (ell - 1) as usize, 0, (1, rden), (1, rden))?;

    // components spanned by unit tree edges; the others connect components
    let mut parent: BTreeMap<VertexId, VertexId> = h.vertices().map(|v| (v, v)).collect();
    let mut paths: Vec<ComplexPath> = Vec::new();
    let mut connectors: Vec<ItemId> = Vec::new();
    for &id in tree {
        let len = h.item_len(id).unwrap();
        let vs = h.item_vertices(id).unwrap();
        if len % ell == 1 {
            let (a, b) = (vs[0], vs[1]);
            let ra = find_root(&mut parent, a);
            let rb = find_root(&mut parent, b);
            parent.insert(ra, rb);
            let elem = match h.kind_of(id) {
                Some(crate::graph::ItemKind::Ordinary) => PathElem::Ordinary(id),
                _ => PathElem::Wiggly { id, first_slot: 0 },
            };
            paths.push(ComplexPath::new(vec![
                PathElem::Vertex(a),
                elem,
                PathElem::Vertex(b),
            ]));
        } else {
            connectors.push(id);
        }
    }

    let mut active: BTreeSet<ItemId> = connectors.into_iter().collect();
    while !active.is_empty() {
        // drop internal connectors, then pick a leaf component
        let mut incident: BTreeMap<VertexId, Vec<ItemId>> = BTreeMap::new();
        let mut internal = Vec::new();
        for &id in &active {
            let vs = h.item_vertices(id).unwrap();
            let (ra, rb) = (find_root(&mut parent, vs[0]), find_root(&mut parent, vs[1]));
            if ra == rb {
                internal.push(id);
            } else {
                incident.entry(ra).or_default().push(id);
                incident.entry(rb).or_default().push(id);
            }
        }
        for id in internal {
            active.remove(&id);
        }
        if active.is_empty() {
            break;
        }
        let (&_leaf, ids) = incident
            .iter()
            .find(|(_, ids)| ids.len() == 1)
            .ok_or_else(|| StageError::verification("one_path_tree", "no leaf component"))?;
        let e = ids[0];
        let w = h.wiggly(e).ok_or_else(|| {
            StageError::precondition("one_path_tree", "non-unit tree edge must be wiggly")
        })?;
        let leaf_root = *incident.iter().find(|(_, ids)| ids.len() == 1).unwrap().0;
        // orient e away from the leaf component
        let (x_slot, v_slot) = if find_root(&mut parent, w.ends[0].vertex) == leaf_root {
            (0usize, 1usize)
        } else {
            (1usize, 0usize)
        };
        let x = w.ends[x_slot].vertex;
        let v = w.ends[v_slot].vertex;
        let jdx = w.ends[v_slot].index;
        let need = ((1 + ell - (w.len % ell)) % ell) as usize;
        let banned: BTreeSet<Index> =
            if jdx == WILDCARD { BTreeSet::new() } else { BTreeSet::from([jdx]) };
        let q = rainbow.next_path(&g, v, need, &BTreeSet::new(), &banned)?;
        let y = match q.last_end() {
            Some(crate::path::PathEnd::Vertex(y)) => y,
            _ => unreachable!(),
        };
        let ry = find_root(&mut parent, y);
        if ry != leaf_root {
            let mut elems = vec![
                PathElem::Vertex(x),
                PathElem::Wiggly { id: e, first_slot: x_slot as u8 },
            ];
            elems.extend_from_slice(q.elems());
            let p = ComplexPath::new(elems);
            if let Some(viol) = p.validate(h).violation {
                return Err(StageError::verification(
                    "one_path_tree",
                    format!("extension path invalid: {:?} {}", viol.rule, viol.detail),
                ));
            }
            if p.residue(h) != 1 % ell {
                return Err(StageError::verification(
                    "one_path_tree",
                    format!("extension path has residue {}", p.residue(h)),
                ));
            }
            paths.push(p);
            active.remove(&e);
            parent.insert(leaf_root, ry);
        } else {
            // the extension looped back: donate one of its unit edges that
            // crosses out of the leaf component
            let mut crossing: Option<(VertexId, ItemId, VertexId)> = None;
            let es = q.elems();
            for i in (1..es.len()).step_by(2) {
                let (PathElem::Vertex(a), PathElem::Vertex(b)) = (es[i - 1], es[i + 1]) else {
                    continue;
                };
                let (ra, rb) = (find_root(&mut parent, a), find_root(&mut parent, b));
                if (ra == leaf_root) != (rb == leaf_root) {
                    let id = es[i].item_id().unwrap();
                    crossing = Some((a, id, b));
                    break;
                }
            }
            let (a, id, b) = crossing.ok_or_else(|| {
                StageError::verification("one_path_tree", "no crossing unit edge in loop extension")
            })?;
            let elem = match h.kind_of(id) {
                Some(crate::graph::ItemKind::Ordinary) => PathElem::Ordinary(id),
                _ => {
                    let w2 = h.wiggly(id).unwrap();
                    let slot = if w2.ends[0].vertex == a { 0u8 } else { 1u8 };
                    PathElem::Wiggly { id, first_slot: slot }
                }
            };
            paths.push(ComplexPath::new(vec![
                PathElem::Vertex(a),
                elem,
                PathElem::Vertex(b),
            ]));
            active.remove(&e);
            let other = if find_root(&mut parent, a) == leaf_root { b } else { a };
            let ro = find_root(&mut parent, other);
            parent.insert(leaf_root, ro);
        }
    }

    let pg = PathGraph::new(paths);
    verify_path_tree(h, &pg, &h.vertices().collect(), 1)?;
    Ok(pg)
}

/// Check that the quotient of `pg` is a tree spanning exactly `verts` and
/// that every path has the given length residue.
fn verify_path_tree(
    h: &ComplexHypergraph,
    pg: &PathGraph,
    verts: &BTreeSet<VertexId>,
    residue: u64,
) -> Result<(), StageError> {
    pg.validate(h)?;
    let ell = h.ell();
    let mut parent: BTreeMap<VertexId, VertexId> = verts.iter().map(|&v| (v, v)).collect();
    if pg.paths.len() + 1 != verts.len() {
        return Err(StageError::verification(
            "path_tree",
            format!("{} paths cannot span {} vertices", pg.paths.len(), verts.len()),
        ));
    }
    for (i, p) in pg.paths.iter().enumerate() {
        if p.residue(h) != residue % ell {
            return Err(StageError::verification(
                "path_tree",
                format!("path {i} has residue {}", p.residue(h)),
            ));
        }
        let (a, b) = p.end_vertices(h).unwrap();
        if !verts.contains(&a) || !verts.contains(&b) {
            return Err(StageError::verification(
                "path_tree",
                format!("path {i} ends outside the spanned set"),
            ));
        }
        let (ra, rb) = (find_root(&mut parent, a), find_root(&mut parent, b));
        if ra == rb {
            return Err(StageError::verification("path_tree", format!("path {i} closes a cycle")));
        }
        parent.insert(ra, rb);
    }
    Ok(())
}

/// Build edge-disjoint spanning ell-path-trees on the two sides of a
/// bipartite unit host: 1-paths of the given path-trees are extended by
/// rainbow paths of length ell-1 starting at the opposite side, merging the
/// structured tree bottom-up.
pub fn ell_path_trees(
    h: &ComplexHypergraph,
    a_side: &BTreeSet<VertexId>,
    phi: &PathGraph,
    psi: &PathGraph,
    rainbow_items: &BTreeSet<ItemId>,
) -> Result<(PathGraph, PathGraph), StageError> {
    let ell = h.ell();
    let den = ((1u64 << (ell + 1)) * (3 * ell + 2)).max(1u64 << (ell + 2));
    ell_path_trees_with_sparsity(h, a_side, phi, psi, rainbow_items, den, 2 * ell)
}

/// Same as `ell_path_trees` with a caller-supplied sparsity ratio and rainbow
/// degree margin; see `one_path_tree_with_sparsity`.
pub fn ell_path_trees_with_sparsity(
    h: &ComplexHypergraph,
    a_side: &BTreeSet<VertexId>,
    phi: &PathGraph,
    psi: &PathGraph,
    rainbow_items: &BTreeSet<ItemId>,
    den: u64,
    margin: u64,
) -> Result<(PathGraph, PathGraph), StageError> {
    let ell = h.ell();
    if ell % 2 != 0 || ell < 2 {
        return Err(StageError::precondition("ell_path_trees", "needs even ell"));
    }
    let g = h.restrict_items(rainbow_items);
    let b_side: BTreeSet<VertexId> = h.vertices().filter(|v| !a_side.contains(v)).collect();
    for id in rainbow_items {
        let vs = h.item_vertices(*id).unwrap();
        if a_side.contains(&vs[0]) == a_side.contains(&vs[1]) {
            return Err(StageError::precondition(
                "ell_path_trees",
                "rainbow host must respect the bipartition",
            ));
        }
        if h.item_len(*id) != Some(1) {
            return Err(StageError::precondition("ell_path_trees", "rainbow host must be unit"));
        }
    }
    for (name, pt) in [("first", phi), ("second", psi)] {
        verify_path_tree(h, pt, &h.vertices().collect(), 1)?;
        for v in h.vertices() {
            let dt = starts_at(pt, h, v).len() as u64;
            let dg = u64::from(g.degrees(v).unwrap().deg);
            if dt * den > dg {
                return Err(StageError::precondition(
                    "ell_path_trees",
                    format!("vertex {v}: {name} tree degree {dt} too high for degree {dg}"),
                ));
            }
        }
    }
    let rden = den.max(16);
    let mut rainbow =
        rainbow_structure(&g, (ell - 1) as usize, margin, (1, rden), (1, rden))?;
    let pa = build_side(h, &g, &mut rainbow, a_side, &b_side, phi)?;
    let pb = build_side(h, &g, &mut rainbow, &b_side, a_side, psi)?;
    Ok((pa, pb))
}

struct TreeNode {
    verts: BTreeSet<VertexId>,
    pi: Vec<ComplexPath>,
    parent: Option<(usize, usize)>,
    children: BTreeSet<usize>,
    alive: bool,
}

fn build_side(
    h: &ComplexHypergraph,
    g: &ComplexHypergraph,
    rainbow: &mut RainbowStructure,
    target: &BTreeSet<VertexId>,
    other: &BTreeSet<VertexId>,
    skeleton: &PathGraph,
) -> Result<PathGraph, StageError> {
    let ell = h.ell();
    // rooted structured tree, initially the quotient of the skeleton
    let verts: Vec<VertexId> = h.vertices().collect();
    let vid: BTreeMap<VertexId, usize> = verts.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut nodes: Vec<TreeNode> = verts
        .iter()
        .map(|&v| TreeNode {
            verts: BTreeSet::from([v]),
            pi: Vec::new(),
            parent: None,
            children: BTreeSet::new(),
            alive: true,
        })
        .collect();
    let mut adj: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for (pi, p) in skeleton.paths.iter().enumerate() {
        let (a, b) = p.end_vertices(h).unwrap();
        adj.entry(vid[&a]).or_default().push((vid[&b], pi));
        adj.entry(vid[&b]).or_default().push((vid[&a], pi));
    }
    let root = vid[target.iter().next().ok_or_else(|| {
        StageError::precondition("ell_path_trees", "empty side")
    })?];
    let mut queue = VecDeque::from([root]);
    let mut seen = vec![false; nodes.len()];
    seen[root] = true;
    while let Some(n) = queue.pop_front() {
        for &(w, pi) in adj.get(&n).into_iter().flatten() {
            if !seen[w] {
                seen[w] = true;
                nodes[w].parent = Some((n, pi));
                nodes[n].children.insert(w);
                queue.push_back(w);
            }
        }
    }

    let locate = |nodes: &[TreeNode], z: VertexId| -> Option<usize> {
        nodes.iter().position(|n| n.alive && n.verts.contains(&z))
    };
    let depth = |nodes: &[TreeNode], mut n: usize| -> usize {
        let mut d = 0;
        while let Some((p, _)) = nodes[n].parent {
            d += 1;
            n = p;
        }
        d
    };

    loop {
        // delete leaves holding vertices of the other side
        let mut deleted = true;
        while deleted {
            deleted = false;
            for i in 0..nodes.len() {
                if nodes[i].alive
                    && nodes[i].children.is_empty()
                    && i != root
                    && nodes[i].verts.iter().any(|v| other.contains(v))
                {
                    nodes[i].alive = false;
                    if let Some((p, _)) = nodes[i].parent {
                        nodes[p].children.remove(&i);
                    }
                    deleted = true;
                }
            }
        }
        let alive: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].alive).collect();
        if alive.len() == 1 {
            let n = &nodes[alive[0]];
            let pg = PathGraph::new(n.pi.clone());
            verify_path_tree(h, &pg, target, 0)?;
            return Ok(pg);
        }
        let y_node = alive
            .iter()
            .copied()
            .filter(|&i| !nodes[i].children.is_empty())
            .max_by_key(|&i| depth(&nodes, i))
            .ok_or_else(|| StageError::verification("ell_path_trees", "no internal node left"))?;
        if nodes[y_node].verts.len() != 1 {
            return Err(StageError::verification(
                "ell_path_trees",
                "deep internal node is not a singleton",
            ));
        }
        let y = *nodes[y_node].verts.iter().next().unwrap();
        if !other.contains(&y) {
            return Err(StageError::verification(
                "ell_path_trees",
                format!("deep internal vertex {y} on the wrong side"),
            ));
        }
        let single_child = nodes[y_node].children.len() == 1;
        let mut x1 = *nodes[y_node].children.iter().next().unwrap();
        let (x2, p2_idx) = if single_child {
            let (p, pe) = nodes[y_node]
                .parent
                .ok_or_else(|| StageError::verification("ell_path_trees", "internal root"))?;
            (p, pe)
        } else {
            let second = *nodes[y_node].children.iter().nth(1).unwrap();
            (second, nodes[second].parent.unwrap().1)
        };
        let mut p1_idx = nodes[x1].parent.unwrap().1;
        // both skeleton paths oriented away from y
        let from_y = |pidx: usize| -> ComplexPath {
            let p = &skeleton.paths[pidx];
            let (a, _) = p.end_vertices(h).unwrap();
            orient(p, a == y)
        };
        let q1 = from_y(p1_idx);
        let q2 = from_y(p2_idx);
        let mut banned_v: BTreeSet<VertexId> = sub_vertices(&q1, h);
        banned_v.extend(sub_vertices(&q2, h));
        banned_v.remove(&y);
        let mut banned_i: BTreeSet<Index> = BTreeSet::new();
        for ix in [q1.initial_index(h), q2.initial_index(h)] {
            if ix != WILDCARD {
                banned_i.insert(ix);
            }
        }
        let p = rainbow.next_path(g, y, (ell - 1) as usize, &banned_v, &banned_i)?;
        let z = match p.last_end() {
            Some(crate::path::PathEnd::Vertex(z)) => z,
            _ => unreachable!(),
        };
        if !target.contains(&z) {
            return Err(StageError::verification(
                "ell_path_trees",
                format!("extension ended at {z} on the wrong side"),
            ));
        }
        let z_node = locate(&nodes, z)
            .ok_or_else(|| StageError::verification("ell_path_trees", "extension left the tree"))?;
        if !single_child {
            if z_node == x1 {
                // swap the two children so the merged one differs from z's node
                let second = *nodes[y_node].children.iter().nth(1).unwrap();
                x1 = second;
                p1_idx = nodes[x1].parent.unwrap().1;
            }
            let lead = orient(&skeleton.paths[p1_idx], {
                let (_, b) = skeleton.paths[p1_idx].end_vertices(h).unwrap();
                b == y
            });
            let merged = concat_at_vertex(&lead, &p);
            check_merge(h, &merged, ell)?;
            let (xs, zs) = (x1, z_node);
            let moved: Vec<ComplexPath> = nodes[xs].pi.drain(..).collect();
            let mv: BTreeSet<VertexId> = nodes[xs].verts.iter().copied().collect();
            nodes[zs].pi.extend(moved);
            nodes[zs].pi.push(merged);
            nodes[zs].verts.extend(mv);
            nodes[xs].alive = false;
            nodes[y_node].children.remove(&xs);
        } else if z_node != x1 {
            let lead = orient(&skeleton.paths[p1_idx], {
                let (_, b) = skeleton.paths[p1_idx].end_vertices(h).unwrap();
                b == y
            });
            let merged = concat_at_vertex(&lead, &p);
            check_merge(h, &merged, ell)?;
            let moved: Vec<ComplexPath> = nodes[x1].pi.drain(..).collect();
            let mv: BTreeSet<VertexId> = nodes[x1].verts.iter().copied().collect();
            nodes[z_node].pi.extend(moved);
            nodes[z_node].pi.push(merged);
            nodes[z_node].verts.extend(mv);
            nodes[x1].alive = false;
            nodes[y_node].children.remove(&x1);
        } else {
            // the extension landed in the only child: climb to the parent
            let lead = orient(&skeleton.paths[p2_idx], {
                let (_, b) = skeleton.paths[p2_idx].end_vertices(h).unwrap();
                b == y
            });
            let merged = concat_at_vertex(&lead, &p);
            check_merge(h, &merged, ell)?;
            let moved: Vec<ComplexPath> = nodes[x1].pi.drain(..).collect();
            let mv: BTreeSet<VertexId> = nodes[x1].verts.iter().copied().collect();
            nodes[x2].pi.extend(moved);
            nodes[x2].pi.push(merged);
            nodes[x2].verts.extend(mv);
            nodes[x1].alive = false;
            // y loses its only child and its parent edge was consumed
            nodes[y_node].alive = false;
            nodes[x2].children.remove(&y_node);
        }
    }
}

fn check_merge(h: &ComplexHypergraph, p: &ComplexPath, ell: u64) -> Result<(), StageError> {
    if let Some(v) = p.validate(h).violation {
        return Err(StageError::verification(
            "ell_path_trees",
            format!("merged path invalid: {:?} {}", v.rule, v.detail),
        ));
    }
    if p.length(h) % ell != 0 {
        return Err(StageError::verification(
            "ell_path_trees",
            format!("merged path has residue {}", p.length(h) % ell),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// preliminaries used by the decomposition pipeline

/// Locally optimal max cut: no single vertex move increases the number of
/// crossing edges, so every vertex keeps at least half its degree crossing.
pub fn max_cut_bipartite(
    g: &ComplexHypergraph,
) -> Result<(BTreeSet<VertexId>, BTreeSet<VertexId>, BTreeSet<ItemId>), StageError> {
    let mut edges: Vec<(ItemId, VertexId, VertexId)> = Vec::new();
    for id in g.ordinary_ids() {
        let (u, v) = g.ordinary(id).unwrap();
        edges.push((id, u, v));
    }
    for id in g.wiggly_ids() {
        let w = g.wiggly(id).unwrap();
        if w.is_loop() {
            return Err(StageError::precondition("max_cut_bipartite", "host must be loopless"));
        }
        edges.push((id, w.ends[0].vertex, w.ends[1].vertex));
    }
    let mut side: BTreeMap<VertexId, bool> = g.vertices().map(|v| (v, false)).collect();
    if side.len() < 2 {
        return Err(StageError::precondition("max_cut_bipartite", "needs at least two vertices"));
    }
    loop {
        let mut improved = false;
        let vs: Vec<VertexId> = side.keys().copied().collect();
        for v in vs {
            let mut cross = 0i64;
            let mut total = 0i64;
            for &(_, a, b) in &edges {
                if a == v || b == v {
                    total += 1;
                    if side[&a] != side[&b] {
                        cross += 1;
                    }
                }
            }
            if 2 * cross < total {
                side.insert(v, !side[&v]);
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    let a: BTreeSet<VertexId> = side.iter().filter(|(_, &s)| !s).map(|(&v, _)| v).collect();
    let b: BTreeSet<VertexId> = side.iter().filter(|(_, &s)| s).map(|(&v, _)| v).collect();
    let crossing: BTreeSet<ItemId> = edges
        .iter()
        .filter(|&&(_, u, v)| side[&u] != side[&v])
        .map(|&(id, _, _)| id)
        .collect();
    Ok((a, b, crossing))
}

/// Subgraph of a tree whose odd-degree vertex set is exactly `odd`, found by
/// bottom-up parity propagation.
pub fn tree_odd_subgraph(
    g: &ComplexHypergraph,
    tree: &BTreeSet<ItemId>,
    odd: &BTreeSet<VertexId>,
) -> Result<BTreeSet<ItemId>, StageError> {
    if odd.len() % 2 != 0 {
        return Err(StageError::precondition("tree_odd_subgraph", "odd set must have even size"));
    }
    let mut adj: BTreeMap<VertexId, Vec<(VertexId, ItemId)>> = BTreeMap::new();
    let mut tverts: BTreeSet<VertexId> = BTreeSet::new();
    for &id in tree {
        let vs = g.item_vertices(id).ok_or_else(|| {
            StageError::precondition("tree_odd_subgraph", format!("unknown item {id}"))
        })?;
        if vs.len() != 2 || vs[0] == vs[1] {
            return Err(StageError::precondition("tree_odd_subgraph", "tree items must be non-loop edges"));
        }
        adj.entry(vs[0]).or_default().push((vs[1], id));
        adj.entry(vs[1]).or_default().push((vs[0], id));
        tverts.insert(vs[0]);
        tverts.insert(vs[1]);
    }
    if !odd.iter().all(|v| tverts.contains(v)) {
        return Err(StageError::precondition("tree_odd_subgraph", "odd vertex outside the tree"));
    }
    if tree.is_empty() {
        return Ok(BTreeSet::new());
    }
    if tree.len() + 1 != tverts.len() {
        return Err(StageError::precondition("tree_odd_subgraph", "edge set is not a tree"));
    }
    let root = *tverts.iter().next().unwrap();
    // BFS order, then resolve parities leaves-first
    let mut order = vec![root];
    let mut parent: BTreeMap<VertexId, (VertexId, ItemId)> = BTreeMap::new();
    let mut seen: BTreeSet<VertexId> = BTreeSet::from([root]);
    let mut qi = 0;
    while qi < order.len() {
        let v = order[qi];
        qi += 1;
        for &(w, id) in adj.get(&v).into_iter().flatten() {
            if seen.insert(w) {
                parent.insert(w, (v, id));
                order.push(w);
            }
        }
    }
    if seen.len() != tverts.len() {
        return Err(StageError::precondition("tree_odd_subgraph", "edge set is not connected"));
    }
    let mut kept: BTreeSet<ItemId> = BTreeSet::new();
    let mut parity: BTreeMap<VertexId, bool> = BTreeMap::new();
    for &v in order.iter().rev() {
        let want = odd.contains(&v);
        let have = parity.get(&v).copied().unwrap_or(false);
        if want != have {
            let (p, id) = parent.get(&v).copied().ok_or_else(|| {
                StageError::verification("tree_odd_subgraph", "parity mismatch at the root")
            })?;
            kept.insert(id);
            let e = parity.entry(p).or_insert(false);
            *e = !*e;
        }
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Hyperedge3;
    use rand::{Rng, SeedableRng};

    fn circulant(n: u32, jumps: &[u32], ell: u64) -> ComplexHypergraph {
        let mut g = ComplexHypergraph::new(ell);
        for v in 0..n {
            g.add_vertex(v);
        }
        for v in 0..n {
            for &j in jumps {
                let _ = g.add_ordinary(v, (v + j) % n);
            }
        }
        g
    }

    fn seg_path(g: &ComplexHypergraph, verts: &[VertexId]) -> ComplexPath {
        // path through consecutive ordinary edges between the given vertices
        let mut elems = vec![PathElem::Vertex(verts[0])];
        for w in verts.windows(2) {
            let id = g
                .ordinary_ids()
                .find(|&id| {
                    let (a, b) = g.ordinary(id).unwrap();
                    (a, b) == (w[0], w[1]) || (a, b) == (w[1], w[0])
                })
                .unwrap();
            elems.push(PathElem::Ordinary(id));
            elems.push(PathElem::Vertex(w[1]));
        }
        ComplexPath::new(elems)
    }

    #[test]
    fn single_path_quotient_and_zero_ratios() {
        let g = circulant(6, &[1], 2);
        let pg = PathGraph::new(vec![seg_path(&g, &[0, 1, 2])]);
        let (q, r) = quotient_and_ratios(&g, &pg).unwrap();
        assert_eq!(q.wiggly_count(), 1);
        let w = q.wiggly(q.wiggly_ids().next().unwrap()).unwrap();
        assert_eq!(w.len, 2);
        assert_eq!(r.per_vertex[&0].conf_count, 0);
        assert_eq!(r.per_vertex[&0].deg, 1);
        assert!(r.inequality_holds(2));
    }

    #[test]
    fn same_index_paths_raise_inc() {
        let mut g = ComplexHypergraph::new(2);
        for v in 0..3 {
            g.add_vertex(v);
        }
        let e1 = g
            .add_wiggly(WigglyEdge {
                ends: [Incidence::new(0, 4), Incidence::new(1, WILDCARD)],
                len: 2,
            })
            .unwrap();
        let e2 = g
            .add_wiggly(WigglyEdge {
                ends: [Incidence::new(0, 4), Incidence::new(2, WILDCARD)],
                len: 2,
            })
            .unwrap();
        let p1 = ComplexPath::new(vec![
            PathElem::Vertex(0),
            PathElem::Wiggly { id: e1, first_slot: 0 },
            PathElem::Vertex(1),
        ]);
        let p2 = ComplexPath::new(vec![
            PathElem::Vertex(0),
            PathElem::Wiggly { id: e2, first_slot: 0 },
            PathElem::Vertex(2),
        ]);
        let (_, r) = quotient_and_ratios(&g, &PathGraph::new(vec![p1, p2])).unwrap();
        let v0 = r.per_vertex[&0];
        assert_eq!(v0.deg, 2);
        assert_eq!(v0.inc_count, 1);
        assert_eq!(v0.conf_count, 1);
        assert!(r.inequality_holds(2));
    }

    #[test]
    fn ratio_inequality_on_random_path_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..30 {
            let n = 12 + (trial % 5) as u32;
            let mut g = circulant(n, &[1, 2, 3], 3);
            for t in 0..6 {
                g.add_wiggly(WigglyEdge {
                    ends: [
                        Incidence::new(rng.gen_range(0..n), rng.gen_range(-1..4)),
                        Incidence::new(rng.gen_range(0..n), rng.gen_range(-1..4)),
                    ],
                    len: 1 + (t % 4),
                })
                .unwrap();
            }
            // random edge-disjoint valid walks as paths
            let mut used: BTreeSet<ItemId> = BTreeSet::new();
            let mut paths = Vec::new();
            for _ in 0..10 {
                let start = rng.gen_range(0..n);
                let mut elems = vec![PathElem::Vertex(start)];
                let mut cur = start;
                for _ in 0..rng.gen_range(1..5) {
                    let cands: Vec<ItemId> = g
                        .items_at(cur)
                        .into_iter()
                        .filter(|id| !used.contains(id))
                        .collect();
                    if cands.is_empty() {
                        break;
                    }
                    let id = cands[rng.gen_range(0..cands.len())];
                    match g.kind_of(id).unwrap() {
                        crate::graph::ItemKind::Ordinary => {
                            let (a, b) = g.ordinary(id).unwrap();
                            let far = if a == cur { b } else { a };
                            elems.push(PathElem::Ordinary(id));
                            elems.push(PathElem::Vertex(far));
                            used.insert(id);
                            cur = far;
                        }
                        crate::graph::ItemKind::Wiggly => {
                            let w = g.wiggly(id).unwrap();
                            let slot = if w.ends[0].vertex == cur { 0u8 } else { 1u8 };
                            let far = if w.is_loop() { cur } else { w.other_end(cur) };
                            elems.push(PathElem::Wiggly { id, first_slot: slot });
                            elems.push(PathElem::Vertex(far));
                            used.insert(id);
                            cur = far;
                        }
                        _ => break,
                    }
                }
                if elems.len() > 1 {
                    let p = ComplexPath::new(elems);
                    if p.validate(&g).ok() {
                        paths.push(p);
                    } else {
                        for id in p.items() {
                            used.remove(&id);
                        }
                    }
                }
            }
            if paths.is_empty() {
                continue;
            }
            let (_, r) = quotient_and_ratios(&g, &PathGraph::new(paths)).unwrap();
            assert!(r.inequality_holds(3), "trial {trial}");
        }
    }

    #[test]
    fn tour_on_non_conflicting_triangle() {
        let g = circulant(9, &[1], 3);
        // three arcs of the 9-cycle: 0..3, 3..6, 6..0, each 3 ordinary edges
        let pg = PathGraph::new(vec![
            seg_path(&g, &[0, 1, 2, 3]),
            seg_path(&g, &[3, 4, 5, 6]),
            seg_path(&g, &[6, 7, 8, 0]),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = euler_tour_nc(&g, &pg, &mut rng, None).unwrap();
        assert!(t.closed);
        verify_tour(&g, &pg, &t).unwrap();
        let p = trail_to_ell_paths(&g, &pg, &t).unwrap();
        assert_eq!(p.length(&g), 9);
    }

    #[test]
    fn tour_with_universal_loop_path() {
        // a hub with five unit loops forming one universal loop-path
        let mut g = ComplexHypergraph::new(5);
        g.add_vertex(0);
        for i in 0..5i32 {
            g.add_wiggly(WigglyEdge {
                ends: [Incidence::new(0, 2 * i), Incidence::new(0, 2 * i + 1)],
                len: 1,
            })
            .unwrap();
        }
        let ids: Vec<ItemId> = g.wiggly_ids().collect();
        let mut elems = vec![PathElem::Vertex(0)];
        for &id in &ids {
            elems.push(PathElem::Wiggly { id, first_slot: 0 });
            elems.push(PathElem::Vertex(0));
        }
        let p = ComplexPath::new(elems);
        assert!(p.validate(&g).ok(), "{:?}", p.validate(&g).violation);
        assert!(p.is_universal_at_start(&g));
        let pg = PathGraph::new(vec![p]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = euler_tour_nc(&g, &pg, &mut rng, None).unwrap();
        verify_tour(&g, &pg, &t).unwrap();
        let out = trail_to_ell_paths(&g, &pg, &t).unwrap();
        assert_eq!(out.length(&g), 5);
    }

    #[test]
    fn long_path_graph_on_dense_circulant() {
        let mut g = circulant(60, &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10], 2);
        for (t, (a, b)) in [(0u32, 24u32), (5, 30), (11, 40)].iter().enumerate() {
            g.add_wiggly(WigglyEdge {
                ends: [
                    Incidence::new(*a, t as i32 + 1),
                    Incidence::new(*b, t as i32 + 2),
                ],
                len: 3,
            })
            .unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pg = build_long_path_graph(&g, 2, LongPathConfig::default(), &mut rng).unwrap();
        pg.validate(&g).unwrap();
        let mut covered: BTreeSet<ItemId> = BTreeSet::new();
        for p in &pg.paths {
            assert!(p.is_long(&g));
            covered.extend(p.items());
        }
        assert_eq!(covered.len(), g.ordinary_count() + g.wiggly_count());
        let (_, r) = quotient_and_ratios(&g, &pg).unwrap();
        for v in g.vertices() {
            let d = u64::from(g.degrees(v).unwrap().deg);
            let vr = r.per_vertex[&v];
            assert!(vr.deg * 4 > d, "vertex {v}: {} vs {d}", vr.deg);
            assert!(vr.inter_count * 2 <= vr.deg);
        }
    }

    #[test]
    fn rainbow_paths_respect_bans_and_disjointness() {
        let g = circulant(40, &(1..=16).collect::<Vec<_>>(), 2);
        let mut rs = rainbow_structure(&g, 1, 0, (1, 32), (1, 32)).unwrap();
        let banned_v: BTreeSet<VertexId> = BTreeSet::from([1, 2, 3]);
        let mut seen: BTreeSet<ItemId> = BTreeSet::new();
        // the first layer keeps about half the degree and half of that points
        // out of vertex 0, so only a handful of requests fit at one vertex
        for t in 0..10 {
            let start = 4 * t;
            let p = rs.next_path(&g, start, 1, &banned_v, &BTreeSet::new()).unwrap();
            assert_eq!(p.edge_count(), 1);
            let far = match p.last_end().unwrap() {
                crate::path::PathEnd::Vertex(v) => v,
                _ => unreachable!(),
            };
            assert!(!banned_v.contains(&far));
            for id in p.items() {
                assert!(seen.insert(id), "edge reused");
            }
        }
    }

    #[test]
    fn one_path_tree_spans_all_vertices() {
        let n = 70u32;
        let mut h = ComplexHypergraph::new(2);
        for v in 0..n {
            h.add_vertex(v);
        }
        for u in 0..n {
            for v in u + 1..n {
                h.add_ordinary(u, v).unwrap();
            }
        }
        // spanning path of wiggly tree edges, alternating unit and length 2
        let mut tree: BTreeSet<ItemId> = BTreeSet::new();
        for v in 0..n - 1 {
            let len = if v % 3 == 0 { 2 } else { 1 };
            let id = h
                .add_wiggly(WigglyEdge {
                    ends: [Incidence::new(v, WILDCARD), Incidence::new(v + 1, WILDCARD)],
                    len,
                })
                .unwrap();
            tree.insert(id);
        }
        let pg = one_path_tree(&h, &tree).unwrap();
        assert_eq!(pg.paths.len() as u32, n - 1);
        for p in &pg.paths {
            assert_eq!(p.residue(&h), 1);
        }
    }

    #[test]
    fn ell_path_trees_on_complete_bipartite() {
        let na = 130u32;
        let mut h = ComplexHypergraph::new(2);
        for v in 0..2 * na {
            h.add_vertex(v);
        }
        // A = even ids, B = odd ids
        let mut rainbow_items: BTreeSet<ItemId> = BTreeSet::new();
        for a in 0..na {
            for b in 0..na {
                let id = h.add_ordinary(2 * a, 2 * b + 1).unwrap();
                rainbow_items.insert(id);
            }
        }
        let a_side: BTreeSet<VertexId> = (0..na).map(|v| 2 * v).collect();
        // two edge-disjoint alternating spanning paths as 1-path-trees
        let mut mk_tree = |shift: u32| -> PathGraph {
            let mut paths = Vec::new();
            let seq: Vec<VertexId> = (0..2 * na)
                .map(|i| {
                    let side = i % 2;
                    let pos = i / 2;
                    if side == 0 {
                        2 * pos
                    } else {
                        2 * ((pos + shift) % na) + 1
                    }
                })
                .collect();
            for w in seq.windows(2) {
                let id = h
                    .add_wiggly(WigglyEdge {
                        ends: [
                            Incidence::new(w[0], WILDCARD),
                            Incidence::new(w[1], WILDCARD),
                        ],
                        len: 1,
                    })
                    .unwrap();
                paths.push(ComplexPath::new(vec![
                    PathElem::Vertex(w[0]),
                    PathElem::Wiggly { id, first_slot: 0 },
                    PathElem::Vertex(w[1]),
                ]));
            }
            PathGraph::new(paths)
        };
        let phi = mk_tree(0);
        let psi = mk_tree(3);
        let (pa, pb) = ell_path_trees(&h, &a_side, &phi, &psi, &rainbow_items).unwrap();
        assert_eq!(pa.paths.len() as u32, na - 1);
        assert_eq!(pb.paths.len() as u32, na - 1);
        let mut all: BTreeSet<ItemId> = BTreeSet::new();
        for p in pa.paths.iter().chain(pb.paths.iter()) {
            assert_eq!(p.length(&h) % 2, 0);
            for id in p.items() {
                assert!(all.insert(id), "paths of the two trees share an edge");
            }
        }
    }

    #[test]
    fn max_cut_on_k4() {
        let mut g = ComplexHypergraph::new(2);
        for v in 0..4 {
            g.add_vertex(v);
        }
        for u in 0..4 {
            for v in u + 1..4 {
                g.add_ordinary(u, v).unwrap();
            }
        }
        let (a, b, crossing) = max_cut_bipartite(&g).unwrap();
        assert_eq!(a.len() + b.len(), 4);
        assert_eq!(crossing.len(), 4);
        for v in g.vertices() {
            let cut_deg = crossing
                .iter()
                .filter(|&&id| {
                    let (x, y) = g.ordinary(id).unwrap();
                    x == v || y == v
                })
                .count();
            assert!(cut_deg * 2 >= 3);
        }
    }

    #[test]
    fn odd_subgraph_of_random_trees() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.gen_range(4..20u32);
            let mut g = ComplexHypergraph::new(2);
            g.add_vertex(0);
            let mut tree: BTreeSet<ItemId> = BTreeSet::new();
            for v in 1..n {
                g.add_vertex(v);
                let p = rng.gen_range(0..v);
                tree.insert(g.add_ordinary(p, v).unwrap());
            }
            let mut odd: BTreeSet<VertexId> = BTreeSet::new();
            for v in 0..n {
                if rng.gen_bool(0.5) {
                    odd.insert(v);
                }
            }
            if odd.len() % 2 == 1 {
                let v = *odd.iter().next().unwrap();
                odd.remove(&v);
            }
            let kept = tree_odd_subgraph(&g, &tree, &odd).unwrap();
            for v in 0..n {
                let d = kept
                    .iter()
                    .filter(|&&id| {
                        let (x, y) = g.ordinary(id).unwrap();
                        x == v || y == v
                    })
                    .count();
                assert_eq!(d % 2 == 1, odd.contains(&v), "vertex {v}");
            }
        }
    }

    #[test]
    fn path_with_both_ends_trivial() {
        // two long paths, lengths ell-1 and 1 at ell=2 is impossible; use 3+1
        // at ell=4 sharing vertex 3 with compatible wildcard indices
        let mut g = circulant(8, &[1], 4);
        g.add_wiggly(WigglyEdge {
            ends: [Incidence::new(3, WILDCARD), Incidence::new(6, WILDCARD)],
            len: 1,
        })
        .unwrap();
        let wid = g.wiggly_ids().next().unwrap();
        let p1 = seg_path(&g, &[0, 1, 2, 3]);
        let p2 = ComplexPath::new(vec![
            PathElem::Vertex(3),
            PathElem::Wiggly { id: wid, first_slot: 0 },
            PathElem::Vertex(6),
        ]);
        assert!(non_conflicting_at(&g, &p1.reversed(), &p2));
        let joined = concat_at_vertex(&p1, &p2);
        assert!(joined.validate(&g).ok());
        assert_eq!(joined.length(&g) % 4, 0);
    }

    #[test]
    fn hyperedges_rejected_by_long_path_builder() {
        let mut g = circulant(6, &[1], 2);
        g.add_hyper(Hyperedge3 {
            ends: [
                Incidence::new(0, 1),
                Incidence::new(1, 1),
                Incidence::new(2, 1),
            ],
            len: 2,
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(build_long_path_graph(&g, 2, LongPathConfig::default(), &mut rng).is_err());
    }
}
