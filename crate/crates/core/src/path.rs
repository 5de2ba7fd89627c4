//! Complex paths: alternating vertex/edge sequences with optional stub ends,
//! their validity rules, and per-path metrics (length, strictness,
//! universality).

use crate::graph::{
    compatible, ComplexHypergraph, Index, ItemId, VertexId, WILDCARD,
};

/// One element of a path sequence. A wiggly edge records which of its two
/// incidences is met first when reading the path left to right, which also
/// fixes the traversal order of loop indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathElem {
    Vertex(VertexId),
    Ordinary(ItemId),
    Wiggly { id: ItemId, first_slot: u8 },
    Stub(ItemId),
}

impl PathElem {
    pub fn wiggly(id: ItemId, first_slot: u8) -> Self {
        PathElem::Wiggly { id, first_slot }
    }
    pub fn is_vertex(&self) -> bool {
        matches!(self, PathElem::Vertex(_))
    }
    pub fn item_id(&self) -> Option<ItemId> {
        match *self {
            PathElem::Vertex(_) => None,
            PathElem::Ordinary(id) | PathElem::Stub(id) => Some(id),
            PathElem::Wiggly { id, .. } => Some(id),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathEnd {
    Vertex(VertexId),
    Stub(ItemId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    /// (i) ends are vertices or stubs
    Ends,
    /// (ii) stubs appear only at the ends
    StubPlacement,
    /// (iii) every edge is flanked by its endpoints
    EdgeEndpoints,
    /// (iv) vertices and non-vertices alternate
    Alternation,
    /// (v) no stub, edge or hyperedge repeats
    Repetition,
    /// (vi) repeated vertex occurrences are separated by a wiggly edge or
    /// more than ell ordinary edges
    VertexSpacing,
    /// (vii) consecutive indices of distinct items are compatible
    IndexClash,
    /// membership of every element in the host graph
    Membership,
}

#[derive(Debug, Clone)]
pub struct Violation {
    pub rule: Rule,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct PathCheck {
    pub violation: Option<Violation>,
}

impl PathCheck {
    pub fn ok(&self) -> bool {
        self.violation.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct ComplexPath {
    elems: Vec<PathElem>,
}

fn fail(rule: Rule, detail: impl Into<String>) -> PathCheck {
    PathCheck { violation: Some(Violation { rule, detail: detail.into() }) }
}

impl ComplexPath {
    pub fn new(elems: Vec<PathElem>) -> Self {
        ComplexPath { elems }
    }

    pub fn single_vertex(v: VertexId) -> Self {
        ComplexPath { elems: vec![PathElem::Vertex(v)] }
    }

    pub fn elems(&self) -> &[PathElem] {
        &self.elems
    }

    pub fn into_elems(self) -> Vec<PathElem> {
        self.elems
    }

    pub fn reversed(&self) -> ComplexPath {
        let elems = self
            .elems
            .iter()
            .rev()
            .map(|e| match *e {
                PathElem::Wiggly { id, first_slot } => {
                    PathElem::Wiggly { id, first_slot: 1 - first_slot }
                }
                other => other,
            })
            .collect();
        ComplexPath { elems }
    }

    /// Item ids of all non-vertex elements, in traversal order.
    pub fn items(&self) -> Vec<ItemId> {
        self.elems.iter().filter_map(|e| e.item_id()).collect()
    }

    /// Number of edges (ordinary + wiggly); stubs are not edges.
    pub fn edge_count(&self) -> usize {
        self.elems
            .iter()
            .filter(|e| matches!(e, PathElem::Ordinary(_) | PathElem::Wiggly { .. }))
            .count()
    }

    pub fn first_end(&self) -> Option<PathEnd> {
        match self.elems.first()? {
            PathElem::Vertex(v) => Some(PathEnd::Vertex(*v)),
            PathElem::Stub(id) => Some(PathEnd::Stub(*id)),
            _ => None,
        }
    }

    pub fn last_end(&self) -> Option<PathEnd> {
        match self.elems.last()? {
            PathElem::Vertex(v) => Some(PathEnd::Vertex(*v)),
            PathElem::Stub(id) => Some(PathEnd::Stub(*id)),
            _ => None,
        }
    }

    /// The vertices at the two ends; for a stub end, the stub's vertex.
    pub fn end_vertices(&self, g: &ComplexHypergraph) -> Option<(VertexId, VertexId)> {
        let resolve = |end: PathEnd| match end {
            PathEnd::Vertex(v) => Some(v),
            PathEnd::Stub(id) => g.stub(id).map(|s| s.end.vertex),
        };
        Some((resolve(self.first_end()?)?, resolve(self.last_end()?)?))
    }

    pub fn length(&self, g: &ComplexHypergraph) -> u64 {
        self.elems
            .iter()
            .filter_map(|e| e.item_id())
            .map(|id| g.item_len(id).unwrap_or(0))
            .sum()
    }

    pub fn residue(&self, g: &ComplexHypergraph) -> u64 {
        self.length(g) % g.ell()
    }

    pub fn is_ell_path(&self, g: &ComplexHypergraph) -> bool {
        self.residue(g) == 0
    }

    /// Long: at least one wiggly edge, or at least ell ordinary edges.
    pub fn is_long(&self, g: &ComplexHypergraph) -> bool {
        let mut ordinary = 0u64;
        for e in &self.elems {
            match e {
                PathElem::Wiggly { .. } => return true,
                PathElem::Ordinary(_) => ordinary += 1,
                _ => {}
            }
        }
        ordinary >= g.ell()
    }

    /// The sequence of indices read along the path, each tagged with the id
    /// of the item it comes from. Ordinary edges contribute nothing (and do
    /// not interrupt the sequence).
    pub fn index_tokens(&self, g: &ComplexHypergraph) -> Vec<(ItemId, Index)> {
        let mut out = Vec::new();
        for e in &self.elems {
            match *e {
                PathElem::Stub(id) => {
                    if let Some(s) = g.stub(id) {
                        out.push((id, s.end.index));
                    }
                }
                PathElem::Wiggly { id, first_slot } => {
                    if let Some(w) = g.wiggly(id) {
                        let a = first_slot as usize;
                        out.push((id, w.ends[a].index));
                        out.push((id, w.ends[1 - a].index));
                    }
                }
                _ => {}
            }
        }
        out
    }

    pub fn initial_index(&self, g: &ComplexHypergraph) -> Index {
        self.index_tokens(g).first().map(|&(_, i)| i).unwrap_or(WILDCARD)
    }

    pub fn terminal_index(&self, g: &ComplexHypergraph) -> Index {
        self.index_tokens(g).last().map(|&(_, i)| i).unwrap_or(WILDCARD)
    }

    /// Strict: no non-wildcard index value occurs more than once along the path.
    pub fn is_strict(&self, g: &ComplexHypergraph) -> bool {
        let mut seen = std::collections::BTreeSet::new();
        for (_, i) in self.index_tokens(g) {
            if i != WILDCARD && !seen.insert(i) {
                return false;
            }
        }
        true
    }

    /// Full validity check against the host graph; reports the first
    /// violated rule.
    pub fn validate(&self, g: &ComplexHypergraph) -> PathCheck {
        if self.elems.is_empty() {
            return fail(Rule::Ends, "empty sequence");
        }
        // membership first: everything below reads graph data
        for e in &self.elems {
            match *e {
                PathElem::Vertex(v) => {
                    if !g.has_vertex(v) {
                        return fail(Rule::Membership, format!("vertex {v} not in graph"));
                    }
                }
                PathElem::Ordinary(id) => {
                    if g.ordinary(id).is_none() {
                        return fail(Rule::Membership, format!("ordinary edge {id} not in graph"));
                    }
                }
                PathElem::Wiggly { id, first_slot } => {
                    if first_slot > 1 {
                        return fail(Rule::Membership, format!("bad slot on {id}"));
                    }
                    if g.wiggly(id).is_none() {
                        return fail(Rule::Membership, format!("wiggly edge {id} not in graph"));
                    }
                }
                PathElem::Stub(id) => {
                    if g.stub(id).is_none() {
                        return fail(Rule::Membership, format!("stub {id} not in graph"));
                    }
                }
            }
        }
        // (i) ends
        for e in [self.elems.first().unwrap(), self.elems.last().unwrap()] {
            if !matches!(e, PathElem::Vertex(_) | PathElem::Stub(_)) {
                return fail(Rule::Ends, "path must start and end with a vertex or stub");
            }
        }
        // (ii) stubs only at ends
        for (pos, e) in self.elems.iter().enumerate() {
            if matches!(e, PathElem::Stub(_)) && pos != 0 && pos != self.elems.len() - 1 {
                return fail(Rule::StubPlacement, format!("stub at interior position {pos}"));
            }
        }
        // (iv) alternation over the core (stubs stripped): vertex, edge, vertex, ...
        let core: Vec<&PathElem> = self
            .elems
            .iter()
            .filter(|e| !matches!(e, PathElem::Stub(_)))
            .collect();
        if core.is_empty() {
            return fail(Rule::Alternation, "path needs at least one vertex");
        }
        for (k, e) in core.iter().enumerate() {
            let want_vertex = k % 2 == 0;
            if e.is_vertex() != want_vertex {
                return fail(
                    Rule::Alternation,
                    format!("expected {} at core position {k}", if want_vertex { "vertex" } else { "edge" }),
                );
            }
        }
        if core.len() % 2 == 0 {
            return fail(Rule::Alternation, "edge without trailing vertex");
        }
        // (ii)/(iii) stubs sit at their own vertex
        if let Some(PathElem::Stub(id)) = self.elems.first() {
            let sv = g.stub(*id).unwrap().end.vertex;
            if let PathElem::Vertex(v) = core[0] {
                if *v != sv {
                    return fail(Rule::StubPlacement, format!("stub {id} attached at wrong vertex"));
                }
            }
            if self.elems.len() == 1 {
                return fail(Rule::Alternation, "stub without its vertex");
            }
        }
        if let Some(PathElem::Stub(id)) = self.elems.last() {
            if self.elems.len() > 1 {
                let sv = g.stub(*id).unwrap().end.vertex;
                if let PathElem::Vertex(v) = core[core.len() - 1] {
                    if *v != sv {
                        return fail(Rule::StubPlacement, format!("stub {id} attached at wrong vertex"));
                    }
                }
            }
        }
        // (iii) edges flanked by their endpoints, respecting the stored slot
        for k in (1..core.len()).step_by(2) {
            let prev = match core[k - 1] {
                PathElem::Vertex(v) => *v,
                _ => unreachable!(),
            };
            let next = match core[k + 1] {
                PathElem::Vertex(v) => *v,
                _ => unreachable!(),
            };
            match core[k] {
                PathElem::Ordinary(id) => {
                    let (a, b) = g.ordinary(*id).unwrap();
                    if !((prev == a && next == b) || (prev == b && next == a)) {
                        return fail(Rule::EdgeEndpoints, format!("edge {id} not between its endpoints"));
                    }
                }
                PathElem::Wiggly { id, first_slot } => {
                    let w = g.wiggly(*id).unwrap();
                    let a = *first_slot as usize;
                    if w.ends[a].vertex != prev || w.ends[1 - a].vertex != next {
                        return fail(Rule::EdgeEndpoints, format!("wiggly edge {id} not between its endpoints"));
                    }
                }
                _ => unreachable!(),
            }
        }
        // (v) no repeated items
        {
            let mut seen = std::collections::BTreeSet::new();
            for e in &self.elems {
                if let Some(id) = e.item_id() {
                    if !seen.insert(id) {
                        return fail(Rule::Repetition, format!("item {id} used twice"));
                    }
                }
            }
        }
        // (vi) spacing between repeated vertex occurrences: checking
        // consecutive occurrences suffices, separators only accumulate
        {
            let ell = g.ell();
            let mut last_seen: std::collections::BTreeMap<VertexId, usize> =
                std::collections::BTreeMap::new();
            for (k, e) in core.iter().enumerate() {
                if let PathElem::Vertex(v) = e {
                    if let Some(&prev) = last_seen.get(v) {
                        let mut wiggly = false;
                        let mut ordinary = 0u64;
                        for mid in core[prev + 1..k].iter() {
                            match mid {
                                PathElem::Wiggly { .. } => wiggly = true,
                                PathElem::Ordinary(_) => ordinary += 1,
                                _ => {}
                            }
                        }
                        if !wiggly && ordinary <= ell {
                            return fail(
                                Rule::VertexSpacing,
                                format!("vertex {v} repeats after only {ordinary} ordinary edges"),
                            );
                        }
                    }
                    last_seen.insert(*v, k);
                }
            }
        }
        // (vii) consecutive indices of distinct items must be compatible
        {
            let tokens = self.index_tokens(g);
            for pair in tokens.windows(2) {
                let (id_a, ia) = pair[0];
                let (id_b, ib) = pair[1];
                if id_a != id_b && !compatible(ia, ib) {
                    return fail(
                        Rule::IndexClash,
                        format!("index {ia} of {id_a} clashes with index {ib} of {id_b}"),
                    );
                }
            }
        }
        // (viii) is a constraint on the stored traversal order of loop
        // indices; the representation carries it, nothing to re-derive.
        PathCheck { violation: None }
    }

    /// Universality of the path at its starting vertex: at least five edges,
    /// the first three of which are loops at that vertex, and exchanging the
    /// first two loops yields another valid path with a different initial
    /// index.
    pub fn is_universal_at_start(&self, g: &ComplexHypergraph) -> bool {
        if !matches!(self.elems.first(), Some(PathElem::Vertex(_))) {
            return false;
        }
        if self.edge_count() < 5 {
            return false;
        }
        let v = match self.elems[0] {
            PathElem::Vertex(v) => v,
            _ => return false,
        };
        for k in [1usize, 3, 5] {
            match self.elems.get(k) {
                Some(PathElem::Wiggly { id, .. }) => match g.wiggly(*id) {
                    Some(w) if w.is_loop() && w.ends[0].vertex == v => {}
                    _ => return false,
                },
                _ => return false,
            }
        }
        let mut swapped = self.elems.clone();
        swapped.swap(1, 3);
        let alt = ComplexPath::new(swapped);
        alt.validate(g).ok() && alt.initial_index(g) != self.initial_index(g)
    }

    pub fn is_universal_at_end(&self, g: &ComplexHypergraph) -> bool {
        self.reversed().is_universal_at_start(g)
    }
}

/// Summary of the per-path quantities most stages branch on.
#[derive(Debug, Clone)]
pub struct PathMetrics {
    pub length: u64,
    pub residue: u64,
    pub is_ell_path: bool,
    pub is_long: bool,
    pub is_strict: bool,
    pub initial_index: Index,
    pub terminal_index: Index,
    pub universal_start: bool,
    pub universal_end: bool,
}

pub fn path_metrics(p: &ComplexPath, g: &ComplexHypergraph) -> PathMetrics {
    PathMetrics {
        length: p.length(g),
        residue: p.residue(g),
        is_ell_path: p.is_ell_path(g),
        is_long: p.is_long(g),
        is_strict: p.is_strict(g),
        initial_index: p.initial_index(g),
        terminal_index: p.terminal_index(g),
        universal_start: p.is_universal_at_start(g),
        universal_end: p.is_universal_at_end(g),
    }
}

/// Concatenate two paths meeting at a shared end vertex. The caller is
/// responsible for revalidating the result.
pub fn concat_at_vertex(p: &ComplexPath, q: &ComplexPath) -> ComplexPath {
    let mut elems = p.elems().to_vec();
    debug_assert!(matches!(elems.last(), Some(PathElem::Vertex(_))));
    debug_assert_eq!(elems.last(), q.elems().first());
    elems.extend_from_slice(&q.elems()[1..]);
    ComplexPath::new(elems)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Hyperedge3, Incidence, Stub, WigglyEdge};

    fn inc(v: VertexId, i: Index) -> Incidence {
        Incidence::new(v, i)
    }

    fn triangle(ell: u64) -> (ComplexHypergraph, [ItemId; 3]) {
        let mut g = ComplexHypergraph::new(ell);
        for v in 0..3 {
            g.add_vertex(v);
        }
        let a = g.add_ordinary(0, 1).unwrap();
        let b = g.add_ordinary(1, 2).unwrap();
        let c = g.add_ordinary(2, 0).unwrap();
        (g, [a, b, c])
    }

    #[test]
    fn simple_path_valid() {
        let (g, [a, b, _]) = triangle(3);
        let p = ComplexPath::new(vec![
            PathElem::Vertex(0),
            PathElem::Ordinary(a),
            PathElem::Vertex(1),
            PathElem::Ordinary(b),
            PathElem::Vertex(2),
        ]);
        assert!(p.validate(&g).ok());
        assert_eq!(p.length(&g), 2);
        assert!(!p.is_ell_path(&g));
    }

    #[test]
    fn closed_triangle_walk_violates_spacing() {
        // three ordinary edges back to the start: 3 <= ell, so rule (vi) fires
        let (g, [a, b, c]) = triangle(3);
        let p = ComplexPath::new(vec![
            PathElem::Vertex(0),
            PathElem::Ordinary(a),
            PathElem::Vertex(1),
            PathElem::Ordinary(b),
            PathElem::Vertex(2),
            PathElem::Ordinary(c),
            PathElem::Vertex(0),
        ]);
        let check = p.validate(&g);
        assert_eq!(check.violation.unwrap().rule, Rule::VertexSpacing);
    }

    #[test]
    fn spacing_allows_wiggly_separator() {
        let mut g = ComplexHypergraph::new(3);
        g.add_vertex(0);
        g.add_vertex(1);
        let e = g
            .add_wiggly(WigglyEdge { ends: [inc(0, -1), inc(1, -1)], len: 2 })
            .unwrap();
        let f = g
            .add_wiggly(WigglyEdge { ends: [inc(1, -1), inc(0, -1)], len: 1 })
            .unwrap();
        let p = ComplexPath::new(vec![
            PathElem::Vertex(0),
            PathElem::wiggly(e, 0),
            PathElem::Vertex(1),
            PathElem::wiggly(f, 0),
            PathElem::Vertex(0),
        ]);
        assert!(p.validate(&g).ok());
        assert_eq!(p.length(&g), 3);
        assert!(p.is_ell_path(&g));
    }

    #[test]
    fn index_clash_detected() {
        let mut g = ComplexHypergraph::new(2);
        for v in 0..3 {
            g.add_vertex(v);
        }
        let e = g
            .add_wiggly(WigglyEdge { ends: [inc(0, 1), inc(1, 4)], len: 1 })
            .unwrap();
        let f = g
            .add_wiggly(WigglyEdge { ends: [inc(1, 4), inc(2, 2)], len: 1 })
            .unwrap();
        let p = ComplexPath::new(vec![
            PathElem::Vertex(0),
            PathElem::wiggly(e, 0),
            PathElem::Vertex(1),
            PathElem::wiggly(f, 0),
            PathElem::Vertex(2),
        ]);
        assert_eq!(p.validate(&g).violation.unwrap().rule, Rule::IndexClash);
        assert!(!p.is_strict(&g));
    }

    #[test]
    fn index_clash_across_ordinary_edge() {
        // ordinary edges carry no index, so the clash survives across them
        let mut g = ComplexHypergraph::new(2);
        for v in 0..4 {
            g.add_vertex(v);
        }
        let e = g
            .add_wiggly(WigglyEdge { ends: [inc(0, -1), inc(1, 5)], len: 1 })
            .unwrap();
        let o = g.add_ordinary(1, 2).unwrap();
        let f = g
            .add_wiggly(WigglyEdge { ends: [inc(2, 5), inc(3, -1)], len: 1 })
            .unwrap();
        let p = ComplexPath::new(vec![
            PathElem::Vertex(0),
            PathElem::wiggly(e, 0),
            PathElem::Vertex(1),
            PathElem::Ordinary(o),
            PathElem::Vertex(2),
            PathElem::wiggly(f, 0),
            PathElem::Vertex(3),
        ]);
        assert_eq!(p.validate(&g).violation.unwrap().rule, Rule::IndexClash);
    }

    #[test]
    fn wildcard_never_clashes() {
        let mut g = ComplexHypergraph::new(2);
        g.add_vertex(0);
        g.add_vertex(1);
        let e = g
            .add_wiggly(WigglyEdge { ends: [inc(0, -1), inc(1, -1)], len: 1 })
            .unwrap();
        let s = g.add_stub(Stub { end: inc(1, -1), len: 1 }).unwrap();
        let p = ComplexPath::new(vec![
            PathElem::Vertex(0),
            PathElem::wiggly(e, 0),
            PathElem::Vertex(1),
            PathElem::Stub(s),
        ]);
        assert!(p.validate(&g).ok());
        assert_eq!(p.length(&g), 2);
        assert!(p.is_ell_path(&g));
    }

    #[test]
    fn stub_interior_rejected() {
        let mut g = ComplexHypergraph::new(2);
        g.add_vertex(0);
        g.add_vertex(1);
        let s = g.add_stub(Stub { end: inc(0, 1), len: 1 }).unwrap();
        let e = g
            .add_wiggly(WigglyEdge { ends: [inc(0, 2), inc(1, 3)], len: 1 })
            .unwrap();
        let p = ComplexPath::new(vec![
            PathElem::Vertex(1),
            PathElem::wiggly(e, 1),
            PathElem::Vertex(0),
            PathElem::Stub(s),
            PathElem::Vertex(0),
        ]);
        assert!(!p.validate(&g).ok());
    }

    #[test]
    fn reversal_preserves_validity_and_flips_indices() {
        let mut g = ComplexHypergraph::new(4);
        g.add_vertex(7);
        let e = g
            .add_wiggly(WigglyEdge { ends: [inc(7, 1), inc(7, 2)], len: 3 })
            .unwrap();
        let p = ComplexPath::new(vec![
            PathElem::Vertex(7),
            PathElem::wiggly(e, 0),
            PathElem::Vertex(7),
        ]);
        assert!(p.validate(&g).ok());
        assert_eq!(p.initial_index(&g), 1);
        let r = p.reversed();
        assert!(r.validate(&g).ok());
        assert_eq!(r.initial_index(&g), 2);
        assert_eq!(r.terminal_index(&g), 1);
    }

    #[test]
    fn universal_start_detected() {
        // 5 loops at v with pairwise distinct index pairs: swapping the first
        // two changes the initial index
        let mut g = ComplexHypergraph::new(2);
        g.add_vertex(0);
        let mut elems = vec![PathElem::Vertex(0)];
        for k in 0..5i32 {
            let id = g
                .add_wiggly(WigglyEdge {
                    ends: [inc(0, 2 * k + 1), inc(0, 2 * k + 2)],
                    len: 1,
                })
                .unwrap();
            elems.push(PathElem::wiggly(id, 0));
            elems.push(PathElem::Vertex(0));
        }
        let p = ComplexPath::new(elems);
        assert!(p.validate(&g).ok());
        assert!(p.is_universal_at_start(&g));
        assert!(p.is_universal_at_end(&g));
    }

    #[test]
    fn short_path_not_universal() {
        let mut g = ComplexHypergraph::new(2);
        g.add_vertex(0);
        let mut elems = vec![PathElem::Vertex(0)];
        for k in 0..3i32 {
            let id = g
                .add_wiggly(WigglyEdge {
                    ends: [inc(0, 2 * k + 1), inc(0, 2 * k + 2)],
                    len: 1,
                })
                .unwrap();
            elems.push(PathElem::wiggly(id, 0));
            elems.push(PathElem::Vertex(0));
        }
        let p = ComplexPath::new(elems);
        assert!(p.validate(&g).ok());
        assert!(!p.is_universal_at_start(&g));
    }

    #[test]
    fn hyperedge_not_traversable() {
        let mut g = ComplexHypergraph::new(2);
        for v in 0..3 {
            g.add_vertex(v);
        }
        let h = g
            .add_hyper(Hyperedge3 { ends: [inc(0, 1), inc(1, 2), inc(2, 3)], len: 1 })
            .unwrap();
        // a hyperedge id cannot appear as a path element at all; sneak it in
        // as an ordinary reference and membership must fire
        let p = ComplexPath::new(vec![
            PathElem::Vertex(0),
            PathElem::Ordinary(h),
            PathElem::Vertex(1),
        ]);
        assert_eq!(p.validate(&g).violation.unwrap().rule, Rule::Membership);
    }
}
