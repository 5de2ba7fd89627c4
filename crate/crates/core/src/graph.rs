//! The complex-hypergraph data model: vertices, ordinary edges, wiggly
//! edges, size-3 hyperedges and stubs, with degree accounting.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::GraphError;

pub type VertexId = u32;

/// Index tag on an incidence. `-1` is the wildcard, compatible with everything.
pub type Index = i32;

pub const WILDCARD: Index = -1;

/// The one predicate behind rule (vii), balanced stub-pairs and conflict
/// tests: two indices may sit next to each other iff they differ or either
/// is the wildcard.
pub fn compatible(i: Index, j: Index) -> bool {
    i == WILDCARD || j == WILDCARD || i != j
}

/// Identifier of a single edge-like item (ordinary, wiggly, hyperedge or
/// stub), unique within its owning graph across all four kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ItemId(pub u32);

impl std::fmt::Display for ItemId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Incidence {
    pub vertex: VertexId,
    pub index: Index,
}

impl Incidence {
    pub fn new(vertex: VertexId, index: Index) -> Self {
        Incidence { vertex, index }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WigglyEdge {
    pub ends: [Incidence; 2],
    pub len: u64,
}

impl WigglyEdge {
    pub fn is_loop(&self) -> bool {
        self.ends[0].vertex == self.ends[1].vertex
    }
    pub fn is_unit(&self) -> bool {
        self.len == 1
    }
    pub fn other_end(&self, v: VertexId) -> VertexId {
        if self.ends[0].vertex == v {
            self.ends[1].vertex
        } else {
            self.ends[0].vertex
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hyperedge3 {
    pub ends: [Incidence; 3],
    pub len: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stub {
    pub end: Incidence,
    pub len: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ItemKind {
    Ordinary,
    Wiggly,
    Hyper,
    Stub,
}

/// Per-vertex degree counts per the standard definitions. A loop contributes
/// two to `deg` and `ldeg`; index `-1` never enters `iota_by_index`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DegreeProfile {
    pub deg: u32,
    pub udeg: u32,
    pub sdeg: u32,
    pub edeg: u32,
    pub hdeg: u32,
    pub ldeg: u32,
    pub iota_by_index: BTreeMap<Index, u32>,
}

/// A complex hypergraph `(V, E_o, E_w, H, S)` with the modulus ell carried by
/// the graph itself so values from different moduli cannot be mixed.
#[derive(Debug, Clone)]
pub struct ComplexHypergraph {
    ell: u64,
    vertices: BTreeSet<VertexId>,
    ordinary: BTreeMap<ItemId, (VertexId, VertexId)>,
    wiggly: BTreeMap<ItemId, WigglyEdge>,
    hyper: BTreeMap<ItemId, Hyperedge3>,
    stubs: BTreeMap<ItemId, Stub>,
    next_id: u32,
}

impl ComplexHypergraph {
    pub fn new(ell: u64) -> Self {
        assert!(ell >= 1, "modulus must be positive");
        ComplexHypergraph {
            ell,
            vertices: BTreeSet::new(),
            ordinary: BTreeMap::new(),
            wiggly: BTreeMap::new(),
            hyper: BTreeMap::new(),
            stubs: BTreeMap::new(),
            next_id: 0,
        }
    }

    pub fn ell(&self) -> u64 {
        self.ell
    }

    /// Reinterprets the graph under a different modulus.  Item data is
    /// untouched; lengths and path residues are simply read mod the new ℓ.
    pub fn set_ell(&mut self, ell: u64) {
        assert!(ell >= 1, "modulus must be positive");
        self.ell = ell;
    }

    fn fresh_id(&mut self) -> ItemId {
        let id = ItemId(self.next_id);
        self.next_id += 1;
        id
    }

    pub fn add_vertex(&mut self, v: VertexId) {
        self.vertices.insert(v);
    }

    pub fn has_vertex(&self, v: VertexId) -> bool {
        self.vertices.contains(&v)
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.vertices.iter().copied()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    fn check_vertex(&self, v: VertexId) -> Result<(), GraphError> {
        if self.vertices.contains(&v) {
            Ok(())
        } else {
            Err(GraphError::UnknownVertex(v))
        }
    }

    /// Ordinary edges form a simple graph: no loops, no parallels.
    pub fn add_ordinary(&mut self, u: VertexId, v: VertexId) -> Result<ItemId, GraphError> {
        self.check_vertex(u)?;
        self.check_vertex(v)?;
        if u == v {
            return Err(GraphError::OrdinaryLoop(u));
        }
        let key = (u.min(v), u.max(v));
        if self.ordinary.values().any(|&e| e == key) {
            return Err(GraphError::ParallelOrdinary(u, v));
        }
        let id = self.fresh_id();
        self.ordinary.insert(id, key);
        Ok(id)
    }

    pub fn add_wiggly(&mut self, e: WigglyEdge) -> Result<ItemId, GraphError> {
        self.check_vertex(e.ends[0].vertex)?;
        self.check_vertex(e.ends[1].vertex)?;
        let id = self.fresh_id();
        self.wiggly.insert(id, e);
        Ok(id)
    }

    pub fn add_hyper(&mut self, h: Hyperedge3) -> Result<ItemId, GraphError> {
        for inc in &h.ends {
            self.check_vertex(inc.vertex)?;
        }
        let id = self.fresh_id();
        self.hyper.insert(id, h);
        Ok(id)
    }

    pub fn add_stub(&mut self, s: Stub) -> Result<ItemId, GraphError> {
        self.check_vertex(s.end.vertex)?;
        let id = self.fresh_id();
        self.stubs.insert(id, s);
        Ok(id)
    }

    /// Re-insert a wiggly edge under a previously used id (undoing a
    /// condensation). The id must be free.
    pub fn insert_wiggly_as(&mut self, id: ItemId, e: WigglyEdge) -> Result<(), GraphError> {
        if self.kind_of(id).is_some() {
            return Err(GraphError::WrongKind(id));
        }
        self.check_vertex(e.ends[0].vertex)?;
        self.check_vertex(e.ends[1].vertex)?;
        self.wiggly.insert(id, e);
        self.next_id = self.next_id.max(id.0 + 1);
        Ok(())
    }

    /// Re-insert an ordinary edge under a previously used id (undoing an
    /// earlier removal). The id must be free.
    pub fn insert_ordinary_as(&mut self, id: ItemId, u: VertexId, v: VertexId) -> Result<(), GraphError> {
        if self.kind_of(id).is_some() {
            return Err(GraphError::WrongKind(id));
        }
        self.check_vertex(u)?;
        self.check_vertex(v)?;
        if u == v {
            return Err(GraphError::OrdinaryLoop(u));
        }
        let key = (u.min(v), u.max(v));
        if self.ordinary.values().any(|&e| e == key) {
            return Err(GraphError::ParallelOrdinary(u, v));
        }
        self.ordinary.insert(id, key);
        self.next_id = self.next_id.max(id.0 + 1);
        Ok(())
    }

    /// Re-insert a stub under a previously used id. The id must be free.
    pub fn insert_stub_as(&mut self, id: ItemId, s: Stub) -> Result<(), GraphError> {
        if self.kind_of(id).is_some() {
            return Err(GraphError::WrongKind(id));
        }
        self.check_vertex(s.end.vertex)?;
        self.stubs.insert(id, s);
        self.next_id = self.next_id.max(id.0 + 1);
        Ok(())
    }

    /// Overwrite the length of a wiggly edge, hyperedge, or stub in place.
    pub fn set_item_len(&mut self, id: ItemId, len: u64) -> Result<(), GraphError> {
        if let Some(w) = self.wiggly.get_mut(&id) {
            w.len = len;
        } else if let Some(h) = self.hyper.get_mut(&id) {
            h.len = len;
        } else if let Some(s) = self.stubs.get_mut(&id) {
            s.len = len;
        } else {
            return Err(GraphError::WrongKind(id));
        }
        Ok(())
    }

    /// Overwrite the index carried by a stub in place.
    pub fn set_stub_index(&mut self, id: ItemId, index: Index) -> Result<(), GraphError> {
        match self.stubs.get_mut(&id) {
            Some(s) => {
                s.end.index = index;
                Ok(())
            }
            None => Err(GraphError::WrongKind(id)),
        }
    }

    pub fn remove_item(&mut self, id: ItemId) -> bool {
        self.ordinary.remove(&id).is_some()
            || self.wiggly.remove(&id).is_some()
            || self.hyper.remove(&id).is_some()
            || self.stubs.remove(&id).is_some()
    }

    pub fn kind_of(&self, id: ItemId) -> Option<ItemKind> {
        if self.ordinary.contains_key(&id) {
            Some(ItemKind::Ordinary)
        } else if self.wiggly.contains_key(&id) {
            Some(ItemKind::Wiggly)
        } else if self.hyper.contains_key(&id) {
            Some(ItemKind::Hyper)
        } else if self.stubs.contains_key(&id) {
            Some(ItemKind::Stub)
        } else {
            None
        }
    }

    pub fn ordinary(&self, id: ItemId) -> Option<(VertexId, VertexId)> {
        self.ordinary.get(&id).copied()
    }

    pub fn wiggly(&self, id: ItemId) -> Option<&WigglyEdge> {
        self.wiggly.get(&id)
    }

    pub fn hyperedge(&self, id: ItemId) -> Option<&Hyperedge3> {
        self.hyper.get(&id)
    }

    pub fn stub(&self, id: ItemId) -> Option<&Stub> {
        self.stubs.get(&id)
    }

    pub fn ordinary_ids(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.ordinary.keys().copied()
    }

    pub fn wiggly_ids(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.wiggly.keys().copied()
    }

    pub fn hyper_ids(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.hyper.keys().copied()
    }

    pub fn stub_ids(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.stubs.keys().copied()
    }

    /// Every edge-like item id, in id order.
    pub fn item_ids(&self) -> Vec<ItemId> {
        let mut ids: Vec<ItemId> = self
            .ordinary
            .keys()
            .chain(self.wiggly.keys())
            .chain(self.hyper.keys())
            .chain(self.stubs.keys())
            .copied()
            .collect();
        ids.sort();
        ids
    }

    pub fn ordinary_count(&self) -> usize {
        self.ordinary.len()
    }
    pub fn wiggly_count(&self) -> usize {
        self.wiggly.len()
    }
    pub fn hyper_count(&self) -> usize {
        self.hyper.len()
    }
    pub fn stub_count(&self) -> usize {
        self.stubs.len()
    }

    /// Length of a single item; ordinary edges count as one.
    pub fn item_len(&self, id: ItemId) -> Option<u64> {
        if self.ordinary.contains_key(&id) {
            Some(1)
        } else if let Some(w) = self.wiggly.get(&id) {
            Some(w.len)
        } else if let Some(h) = self.hyper.get(&id) {
            Some(h.len)
        } else {
            self.stubs.get(&id).map(|s| s.len)
        }
    }

    /// Total length of the graph: the sum over all stubs, edges and hyperedges.
    pub fn alpha(&self) -> u64 {
        let mut total = self.ordinary.len() as u64;
        total += self.wiggly.values().map(|e| e.len).sum::<u64>();
        total += self.hyper.values().map(|h| h.len).sum::<u64>();
        total += self.stubs.values().map(|s| s.len).sum::<u64>();
        total
    }

    pub fn is_ell_divisible(&self) -> bool {
        self.alpha() % self.ell == 0
    }

    pub fn degrees(&self, v: VertexId) -> Result<DegreeProfile, GraphError> {
        self.check_vertex(v)?;
        let mut p = DegreeProfile::default();
        for &(a, b) in self.ordinary.values() {
            if a == v || b == v {
                p.deg += 1;
                p.edeg += 1;
                p.udeg += 1;
            }
        }
        for e in self.wiggly.values() {
            let occ = e.ends.iter().filter(|i| i.vertex == v).count() as u32;
            if occ == 0 {
                continue;
            }
            p.deg += occ;
            p.edeg += occ;
            if e.is_unit() {
                p.udeg += occ;
            }
            if e.is_loop() {
                p.ldeg += 2;
            }
            for inc in &e.ends {
                if inc.vertex == v && inc.index != WILDCARD {
                    *p.iota_by_index.entry(inc.index).or_insert(0) += 1;
                }
            }
        }
        for h in self.hyper.values() {
            let occ = h.ends.iter().filter(|i| i.vertex == v).count() as u32;
            p.deg += occ;
            p.hdeg += occ;
            for inc in &h.ends {
                if inc.vertex == v && inc.index != WILDCARD {
                    *p.iota_by_index.entry(inc.index).or_insert(0) += 1;
                }
            }
        }
        for s in self.stubs.values() {
            if s.end.vertex == v {
                p.deg += 1;
                p.sdeg += 1;
                if s.end.index != WILDCARD {
                    *p.iota_by_index.entry(s.end.index).or_insert(0) += 1;
                }
            }
        }
        Ok(p)
    }

    /// Number of occurrences of the pair `(v, i)` over stubs, wiggly edges and
    /// hyperedges. Always zero for the wildcard.
    pub fn iota_at(&self, v: VertexId, i: Index) -> u32 {
        if i == WILDCARD {
            return 0;
        }
        self.degrees(v)
            .map(|p| p.iota_by_index.get(&i).copied().unwrap_or(0))
            .unwrap_or(0)
    }

    /// `iota(G)` together with the epsilon-freeness test: free iff
    /// `iota(G) <= eps * edeg v` and `edeg v > 0` for every vertex.
    pub fn iota_and_freeness(&self, eps_num: u64, eps_den: u64) -> (u32, bool) {
        let mut iota = 0u32;
        let mut free = true;
        for &v in &self.vertices {
            let p = self.degrees(v).expect("vertex listed");
            if let Some(&m) = p.iota_by_index.values().max() {
                iota = iota.max(m);
            }
            if p.edeg == 0 {
                free = false;
            }
        }
        if free {
            for &v in &self.vertices {
                let p = self.degrees(v).expect("vertex listed");
                if u64::from(iota) * eps_den > eps_num * u64::from(p.edeg) {
                    free = false;
                    break;
                }
            }
        }
        (iota, free)
    }

    pub fn iota(&self) -> u32 {
        self.iota_and_freeness(1, 1).0
    }

    /// Incidence vertices of an item, with multiplicity.
    pub fn item_vertices(&self, id: ItemId) -> Option<Vec<VertexId>> {
        if let Some(&(a, b)) = self.ordinary.get(&id) {
            Some(vec![a, b])
        } else if let Some(e) = self.wiggly.get(&id) {
            Some(e.ends.iter().map(|i| i.vertex).collect())
        } else if let Some(h) = self.hyper.get(&id) {
            Some(h.ends.iter().map(|i| i.vertex).collect())
        } else {
            self.stubs.get(&id).map(|s| vec![s.end.vertex])
        }
    }

    /// Item ids incident with `v`, in id order.
    pub fn items_at(&self, v: VertexId) -> Vec<ItemId> {
        let mut out = Vec::new();
        for (&id, &(a, b)) in &self.ordinary {
            if a == v || b == v {
                out.push(id);
            }
        }
        for (&id, e) in &self.wiggly {
            if e.ends.iter().any(|i| i.vertex == v) {
                out.push(id);
            }
        }
        for (&id, h) in &self.hyper {
            if h.ends.iter().any(|i| i.vertex == v) {
                out.push(id);
            }
        }
        for (&id, s) in &self.stubs {
            if s.end.vertex == v {
                out.push(id);
            }
        }
        out.sort();
        out
    }

    /// Copy of this graph restricted to the given item ids (all vertices kept).
    pub fn restrict_items(&self, keep: &BTreeSet<ItemId>) -> ComplexHypergraph {
        let mut g = self.clone();
        for id in self.item_ids() {
            if !keep.contains(&id) {
                g.remove_item(id);
            }
        }
        g
    }

    /// Induced subgraph on a vertex set: keeps items all of whose incidences
    /// lie inside `keep`.
    pub fn induced(&self, keep: &BTreeSet<VertexId>) -> ComplexHypergraph {
        let mut g = ComplexHypergraph::new(self.ell);
        g.next_id = self.next_id;
        g.vertices = keep.clone();
        for (&id, &e) in &self.ordinary {
            if keep.contains(&e.0) && keep.contains(&e.1) {
                g.ordinary.insert(id, e);
            }
        }
        for (&id, e) in &self.wiggly {
            if e.ends.iter().all(|i| keep.contains(&i.vertex)) {
                g.wiggly.insert(id, e.clone());
            }
        }
        for (&id, h) in &self.hyper {
            if h.ends.iter().all(|i| keep.contains(&i.vertex)) {
                g.hyper.insert(id, h.clone());
            }
        }
        for (&id, s) in &self.stubs {
            if keep.contains(&s.end.vertex) {
                g.stubs.insert(id, s.clone());
            }
        }
        g
    }

    /// Disjoint union, keeping ids from both sides. Panics on id collision.
    pub fn union_with(&mut self, other: &ComplexHypergraph) {
        assert_eq!(self.ell, other.ell, "modulus mismatch");
        for &v in &other.vertices {
            self.vertices.insert(v);
        }
        for (&id, &e) in &other.ordinary {
            assert!(self.kind_of(id).is_none(), "id collision in union: {id}");
            self.ordinary.insert(id, e);
        }
        for (&id, e) in &other.wiggly {
            assert!(self.kind_of(id).is_none(), "id collision in union: {id}");
            self.wiggly.insert(id, e.clone());
        }
        for (&id, h) in &other.hyper {
            assert!(self.kind_of(id).is_none(), "id collision in union: {id}");
            self.hyper.insert(id, h.clone());
        }
        for (&id, s) in &other.stubs {
            assert!(self.kind_of(id).is_none(), "id collision in union: {id}");
            self.stubs.insert(id, s.clone());
        }
        self.next_id = self.next_id.max(other.next_id);
    }

    /// Reserve id space above another graph so later insertions cannot collide.
    pub fn bump_ids_above(&mut self, other: &ComplexHypergraph) {
        self.next_id = self.next_id.max(other.next_id);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inc(v: VertexId, i: Index) -> Incidence {
        Incidence::new(v, i)
    }

    #[test]
    fn loop_and_stub_degrees() {
        // single vertex, loop ([(v,1),(v,2)],5), stub ([(v,3)],2)
        let mut g = ComplexHypergraph::new(3);
        g.add_vertex(0);
        g.add_wiggly(WigglyEdge { ends: [inc(0, 1), inc(0, 2)], len: 5 })
            .unwrap();
        g.add_stub(Stub { end: inc(0, 3), len: 2 }).unwrap();
        let p = g.degrees(0).unwrap();
        assert_eq!(p.deg, 3);
        assert_eq!(p.sdeg, 1);
        assert_eq!(p.edeg, 2);
        assert_eq!(p.ldeg, 2);
        assert_eq!(p.udeg, 0);
        assert_eq!(p.hdeg, 0);
        assert_eq!(p.deg, p.sdeg + p.edeg + p.hdeg);
    }

    #[test]
    fn hyperedge_occurrence_counts() {
        let mut g = ComplexHypergraph::new(3);
        g.add_vertex(0);
        g.add_vertex(1);
        g.add_hyper(Hyperedge3 { ends: [inc(0, 1), inc(1, 2), inc(1, 3)], len: 4 })
            .unwrap();
        assert_eq!(g.degrees(0).unwrap().deg, 1);
        assert_eq!(g.degrees(1).unwrap().deg, 2);
        assert_eq!(g.degrees(1).unwrap().hdeg, 2);
    }

    #[test]
    fn wildcard_excluded_from_iota() {
        let mut g = ComplexHypergraph::new(2);
        g.add_vertex(0);
        g.add_wiggly(WigglyEdge { ends: [inc(0, -1), inc(0, -1)], len: 1 })
            .unwrap();
        let p = g.degrees(0).unwrap();
        assert!(p.iota_by_index.is_empty());
        assert_eq!(p.ldeg, 2);
        assert_eq!(p.udeg, 2);
        let (iota, _) = g.iota_and_freeness(1, 4);
        assert_eq!(iota, 0);
    }

    #[test]
    fn freeness_requires_positive_edeg() {
        let mut g = ComplexHypergraph::new(2);
        g.add_vertex(0);
        g.add_vertex(1);
        g.add_ordinary(0, 1).unwrap();
        let (_, free) = g.iota_and_freeness(1, 4);
        assert!(free);
        g.add_vertex(2); // isolated: edeg 0
        let (_, free) = g.iota_and_freeness(1, 4);
        assert!(!free);
    }

    #[test]
    fn simple_graph_invariant() {
        let mut g = ComplexHypergraph::new(2);
        g.add_vertex(0);
        g.add_vertex(1);
        assert!(g.add_ordinary(0, 0).is_err());
        g.add_ordinary(0, 1).unwrap();
        assert!(g.add_ordinary(1, 0).is_err());
    }

    #[test]
    fn stubs_with_three_same_indices_raise_iota() {
        let mut g = ComplexHypergraph::new(2);
        g.add_vertex(0);
        for _ in 0..3 {
            g.add_stub(Stub { end: inc(0, 7), len: 1 }).unwrap();
        }
        assert!(g.iota() >= 3);
    }
}
