//! Ground truth at small scale: an exhaustive decomposition search, an
//! independent certificate verifier, and seeded instance generators.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::StageError;
use crate::graph::{
    ComplexHypergraph, Incidence, Index, ItemId, ItemKind, Stub, VertexId, WigglyEdge, WILDCARD,
};
use crate::path::{ComplexPath, PathElem};
use crate::pathgraph::PathGraph;

/// Outcome of the certificate verifier: either a clean pass or the list of
/// problems found.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub problems: Vec<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.problems.is_empty()
    }
}

/// Checks that `paths` is an ℓ-path decomposition of `g`: every path is valid
/// in `g` with total length ≡ 0 mod ℓ, and the paths' edges and stubs
/// partition the edges and stubs of `g`.  Collects all problems instead of
/// stopping at the first.
pub fn verify_decomposition(g: &ComplexHypergraph, paths: &[ComplexPath]) -> VerifyReport {
    let mut problems = Vec::new();
    if g.hyper_count() > 0 {
        problems.push(format!(
            "graph has {} hyperedges; paths cannot contain hyperedges",
            g.hyper_count()
        ));
    }
    let mut covered: BTreeSet<ItemId> = BTreeSet::new();
    for (i, p) in paths.iter().enumerate() {
        let check = p.validate(g);
        if !check.ok() {
            let v = check.violation.unwrap();
            problems.push(format!("path {i} invalid: rule {:?}: {}", v.rule, v.detail));
            continue;
        }
        if p.residue(g) != 0 {
            problems.push(format!(
                "path {i} has length {} ≢ 0 mod {}",
                p.length(g),
                g.ell()
            ));
        }
        for id in p.items() {
            if !covered.insert(id) {
                problems.push(format!("item {} used twice (second use in path {i})", id.0));
            }
        }
    }
    for id in g.item_ids() {
        if matches!(g.kind_of(id), Some(ItemKind::Hyper)) {
            continue;
        }
        if !covered.contains(&id) {
            problems.push(format!("item {} not covered", id.0));
        }
    }
    for id in &covered {
        if g.kind_of(*id).is_none() {
            problems.push(format!("item {} not in graph", id.0));
        }
    }
    VerifyReport { problems }
}

/// Result of the exhaustive search.
#[derive(Debug)]
pub enum BruteForce {
    Sat(Vec<ComplexPath>),
    /// The whole search space was exhausted without finding a decomposition.
    Unsat,
}

/// Default size guard for `brute_force_decompose`, counted in edge units
/// (ordinary + wiggly + stub items).
pub const BRUTE_FORCE_GUARD: usize = 16;

struct Search<'a> {
    g: &'a ComplexHypergraph,
    items: Vec<ItemId>,
}

impl<'a> Search<'a> {
    /// Finds a decomposition of the uncovered items, always routing the
    /// lowest uncovered item into the next path (canonical ordering, so an
    /// Unsat answer is a reproducible proof of exhaustion).
    fn cover(&self, covered: &mut BTreeSet<ItemId>, acc: &mut Vec<ComplexPath>) -> bool {
        let target = match self.items.iter().find(|id| !covered.contains(id)) {
            None => return true,
            Some(&t) => t,
        };
        // Enumerate starts: every stub, and every vertex incident to an
        // uncovered item.
        let mut starts: Vec<Vec<PathElem>> = Vec::new();
        for id in self.g.stub_ids() {
            if !covered.contains(&id) {
                let v = self.g.stub(id).unwrap().end.vertex;
                starts.push(vec![PathElem::Stub(id), PathElem::Vertex(v)]);
            }
        }
        let mut vs: BTreeSet<VertexId> = BTreeSet::new();
        for &id in &self.items {
            if !covered.contains(&id) {
                vs.extend(self.g.item_vertices(id).unwrap());
            }
        }
        for v in vs {
            starts.push(vec![PathElem::Vertex(v)]);
        }
        for start in starts {
            if self.extend(start, covered, acc, target) {
                return true;
            }
        }
        false
    }

    /// Extends a partial path (prefix already valid) in all ways; whenever the
    /// prefix is an ℓ-path through `target`, tries to finish the cover.
    fn extend(
        &self,
        elems: Vec<PathElem>,
        covered: &mut BTreeSet<ItemId>,
        acc: &mut Vec<ComplexPath>,
        target: ItemId,
    ) -> bool {
        let p = ComplexPath::new(elems);
        if !p.validate(self.g).ok() {
            return false;
        }
        let used: BTreeSet<ItemId> = p.items().into_iter().collect();
        if p.edge_count() > 0 && p.residue(self.g) == 0 && used.contains(&target) {
            // Prune the mirror orientation of symmetric candidates.
            if !mirror_preferred(&p) {
                for &id in &used {
                    covered.insert(id);
                }
                acc.push(p.clone());
                if self.cover(covered, acc) {
                    return true;
                }
                acc.pop();
                for &id in &used {
                    covered.remove(&id);
                }
            }
        }
        let elems = p.into_elems();
        let end = match elems.last() {
            Some(&PathElem::Vertex(v)) => v,
            _ => return false, // ends with a stub: complete, no extension
        };
        for id in self.g.items_at(end) {
            if covered.contains(&id) || used.contains(&id) {
                continue;
            }
            match self.g.kind_of(id).unwrap() {
                ItemKind::Ordinary => {
                    let (u, v) = self.g.ordinary(id).unwrap();
                    let far = if u == end { v } else { u };
                    let mut next = elems.clone();
                    next.push(PathElem::Ordinary(id));
                    next.push(PathElem::Vertex(far));
                    if self.extend(next, covered, acc, target) {
                        return true;
                    }
                }
                ItemKind::Wiggly => {
                    let w = self.g.wiggly(id).unwrap();
                    for slot in 0..2 {
                        if w.ends[slot].vertex != end {
                            continue;
                        }
                        let mut next = elems.clone();
                        next.push(PathElem::Wiggly { id, first_slot: slot as u8 });
                        next.push(PathElem::Vertex(w.ends[1 - slot].vertex));
                        if self.extend(next, covered, acc, target) {
                            return true;
                        }
                    }
                }
                ItemKind::Stub => {
                    let mut next = elems.clone();
                    next.push(PathElem::Stub(id));
                    if self.extend(next, covered, acc, target) {
                        return true;
                    }
                }
                ItemKind::Hyper => {}
            }
        }
        false
    }
}

/// True when the reversed element sequence is strictly smaller, i.e. this
/// orientation is the redundant mirror of a candidate we will see anyway.
fn mirror_preferred(p: &ComplexPath) -> bool {
    let key = |es: &[PathElem]| -> Vec<(u8, u32, u8)> {
        es.iter()
            .map(|e| match *e {
                PathElem::Vertex(v) => (0, v, 0),
                PathElem::Ordinary(id) => (1, id.0, 0),
                PathElem::Wiggly { id, first_slot } => (2, id.0, first_slot),
                PathElem::Stub(id) => (3, id.0, 0),
            })
            .collect()
    };
    key(p.reversed().elems()) < key(p.elems())
}

/// Exhaustive backtracking search for an ℓ-path decomposition.  Returns
/// `Unsat` only after exhausting the canonical search space.
pub fn brute_force_decompose(
    g: &ComplexHypergraph,
    guard: usize,
) -> Result<BruteForce, StageError> {
    let units = g.ordinary_count() + g.wiggly_count() + g.stub_count();
    if units > guard {
        return Err(StageError::budget(
            "brute_force",
            format!("{units} edge units exceed the guard {guard}"),
        ));
    }
    if g.hyper_count() > 0 || !g.is_ell_divisible() {
        return Ok(BruteForce::Unsat);
    }
    let search = Search { g, items: g.item_ids() };
    let mut covered = BTreeSet::new();
    let mut acc = Vec::new();
    if search.cover(&mut covered, &mut acc) {
        debug_assert!(verify_decomposition(g, &acc).ok());
        Ok(BruteForce::Sat(acc))
    } else {
        Ok(BruteForce::Unsat)
    }
}

/// What to generate.
#[derive(Debug, Clone)]
pub enum GenKind {
    /// Random 3-edge-connected simple graph with a minimum-degree target.
    Simple3ec { n: usize, min_degree: u32 },
    /// Random complex hypergraph (ordinary/wiggly/hyper/stub mix) for
    /// degree/ι property tests; no structural guarantees.
    Complex { n: usize, items: usize, max_index: Index },
    /// Random loopless multigraph, wiggly edges only, `3k`-edge-connected
    /// when `k > 0`.
    Hypergraph { n: usize, edges: usize, k: u64, size3: bool },
    /// Host graph together with an edge-disjoint family of valid paths.
    PathGraph { n: usize, n_paths: usize, max_len: usize },
    /// Complex graph built as a union of random ℓ-paths, returned with its
    /// decomposition certificate.
    Decomposable { n: usize, n_paths: usize, max_len: usize },
}

#[derive(Debug, Clone)]
pub struct GeneratorSpec {
    pub kind: GenKind,
    pub ell: u64,
}

/// Generator output; every variant is re-verified before being returned.
#[derive(Debug)]
pub enum Generated {
    Graph(ComplexHypergraph),
    PathGraph(ComplexHypergraph, PathGraph),
    WithCertificate(ComplexHypergraph, Vec<ComplexPath>),
}

fn gen_simple_3ec(
    n: usize,
    min_degree: u32,
    rng: &mut ChaCha8Rng,
) -> Result<ComplexHypergraph, StageError> {
    if n < 4 {
        return Err(StageError::precondition("generate", "simple-3ec needs n ≥ 4"));
    }
    let mut g = ComplexHypergraph::new(2);
    for v in 0..n as VertexId {
        g.add_vertex(v);
    }
    let mut order: Vec<VertexId> = (0..n as VertexId).collect();
    order.shuffle(rng);
    let mut present: BTreeSet<(VertexId, VertexId)> = BTreeSet::new();
    let add = |g: &mut ComplexHypergraph,
                   present: &mut BTreeSet<(VertexId, VertexId)>,
                   u: VertexId,
                   v: VertexId| {
        let key = (u.min(v), u.max(v));
        if u != v && present.insert(key) {
            g.add_ordinary(u, v).unwrap();
        }
    };
    for i in 0..n {
        add(&mut g, &mut present, order[i], order[(i + 1) % n]);
    }
    let md = min_degree.max(3) as usize;
    for _ in 0..(20 * n * md) {
        let low: Vec<VertexId> = g
            .vertices()
            .filter(|&v| (g.degrees(v).unwrap().deg as usize) < md)
            .collect();
        if low.is_empty() {
            let under = crate::connectivity::Hypergraph::from_complex(&g);
            if crate::connectivity::is_k_edge_connected(&under, 3) {
                break;
            }
        }
        let u = *low
            .choose(rng)
            .unwrap_or(&(rng.gen_range(0..n) as VertexId));
        let v = rng.gen_range(0..n) as VertexId;
        add(&mut g, &mut present, u, v);
    }
    let under = crate::connectivity::Hypergraph::from_complex(&g);
    if !crate::connectivity::is_k_edge_connected(&under, 3) {
        return Err(StageError::infeasible("generate", "could not reach 3-edge-connectivity"));
    }
    Ok(g)
}

fn gen_complex(
    ell: u64,
    n: usize,
    items: usize,
    max_index: Index,
    rng: &mut ChaCha8Rng,
) -> ComplexHypergraph {
    let mut g = ComplexHypergraph::new(ell);
    for v in 0..n as VertexId {
        g.add_vertex(v);
    }
    let rand_idx = |rng: &mut ChaCha8Rng| -> Index {
        if rng.gen_bool(0.3) {
            WILDCARD
        } else {
            rng.gen_range(1..=max_index.max(1))
        }
    };
    let rv = |rng: &mut ChaCha8Rng| rng.gen_range(0..n) as VertexId;
    for _ in 0..items {
        match rng.gen_range(0..4) {
            0 => {
                let (u, v) = (rv(rng), rv(rng));
                // parallel/loop attempts silently skipped
                if u != v {
                    let _ = g.add_ordinary(u, v);
                }
            }
            1 => {
                let (u, v) = (rv(rng), rv(rng));
                let (iu, iv) = (rand_idx(rng), rand_idx(rng));
                g.add_wiggly(WigglyEdge {
                    ends: [Incidence::new(u, iu), Incidence::new(v, iv)],
                    len: rng.gen_range(1..=2 * ell),
                })
                .unwrap();
            }
            2 => {
                let ends = [
                    Incidence::new(rv(rng), rand_idx(rng)),
                    Incidence::new(rv(rng), rand_idx(rng)),
                    Incidence::new(rv(rng), rand_idx(rng)),
                ];
                g.add_hyper(crate::graph::Hyperedge3 { ends, len: rng.gen_range(2..=2 * ell) })
                    .unwrap();
            }
            _ => {
                g.add_stub(Stub {
                    end: Incidence::new(rv(rng), rand_idx(rng)),
                    len: rng.gen_range(1..=2 * ell),
                })
                .unwrap();
            }
        }
    }
    g
}

fn gen_hypergraph(
    n: usize,
    edges: usize,
    k: u64,
    size3: bool,
    rng: &mut ChaCha8Rng,
) -> Result<crate::connectivity::Hypergraph, StageError> {
    let mut h = crate::connectivity::Hypergraph::new();
    for v in 0..n as VertexId {
        h.add_vertex(v);
    }
    let rv = |rng: &mut ChaCha8Rng| rng.gen_range(0..n) as VertexId;
    // spanning tree for base connectivity
    let mut order: Vec<VertexId> = (0..n as VertexId).collect();
    order.shuffle(rng);
    for i in 1..n {
        h.add_edge(vec![order[i - 1], order[i]]);
    }
    for _ in 0..edges.saturating_sub(n - 1) {
        if size3 && rng.gen_bool(0.4) {
            let (a, b, c) = (rv(rng), rv(rng), rv(rng));
            if a != b && b != c && a != c {
                h.add_edge(vec![a, b, c]);
            }
        } else {
            let (a, b) = (rv(rng), rv(rng));
            if a != b {
                h.add_edge(vec![a, b]);
            }
        }
    }
    if k > 0 {
        for _ in 0..(6 * k as usize * n + 100) {
            if crate::connectivity::is_k_edge_connected(&h, 3 * k) {
                break;
            }
            // reinforce a current minimum cut
            if let Some((_, a)) = crate::connectivity::min_cut_partition(&h) {
                let av: Vec<VertexId> = a.iter().copied().collect();
                let bv: Vec<VertexId> = h.vertices().filter(|v| !a.contains(v)).collect();
                if av.is_empty() || bv.is_empty() {
                    break;
                }
                h.add_edge(vec![
                    *av.choose(rng).unwrap(),
                    *bv.choose(rng).unwrap(),
                ]);
            }
        }
        if !crate::connectivity::is_k_edge_connected(&h, 3 * k) {
            return Err(StageError::infeasible("generate", "could not reach 3k-edge-connectivity"));
        }
    }
    Ok(h)
}

/// Builds one random valid path over `g`, adding fresh wiggly/ordinary items
/// as it walks, with total length ≡ 0 mod ℓ.  Used by the path-graph and
/// decomposable generators.
fn grow_random_path(
    g: &mut ComplexHypergraph,
    n: usize,
    max_len: usize,
    max_index: Index,
    rng: &mut ChaCha8Rng,
) -> Option<ComplexPath> {
    let ell = g.ell();
    let steps = rng.gen_range(1..=max_len.max(1));
    let mut at = rng.gen_range(0..n) as VertexId;
    let mut elems = vec![PathElem::Vertex(at)];
    let mut total = 0u64;
    let mut added: Vec<ItemId> = Vec::new();
    for s in 0..steps {
        let next = rng.gen_range(0..n) as VertexId;
        let last_step = s + 1 == steps;
        // pick a length; on the last step, close the residue to 0 mod ℓ
        let len = if last_step {
            let need = (ell - total % ell) % ell;
            if need == 0 {
                ell
            } else {
                need
            }
        } else {
            rng.gen_range(1..=ell)
        };
        let mk_idx = |rng: &mut ChaCha8Rng| -> Index {
            if rng.gen_bool(0.4) {
                WILDCARD
            } else {
                rng.gen_range(1..=max_index.max(1))
            }
        };
        let use_ordinary = len == 1 && next != at && rng.gen_bool(0.5);
        let cand = if use_ordinary {
            g.add_ordinary(at, next).ok().map(|id| {
                (id, vec![PathElem::Ordinary(id), PathElem::Vertex(next)])
            })
        } else {
            let e = WigglyEdge {
                ends: [Incidence::new(at, mk_idx(rng)), Incidence::new(next, mk_idx(rng))],
                len,
            };
            g.add_wiggly(e).ok().map(|id| {
                (id, vec![PathElem::Wiggly { id, first_slot: 0 }, PathElem::Vertex(next)])
            })
        };
        let Some((id, mut tail)) = cand else {
            break;
        };
        let mut trial = elems.clone();
        trial.append(&mut tail);
        let p = ComplexPath::new(trial.clone());
        if p.validate(g).ok() {
            elems = trial;
            added.push(id);
            total += len;
            at = next;
        } else {
            g.remove_item(id);
            if last_step {
                break;
            }
        }
    }
    let p = ComplexPath::new(elems);
    if p.edge_count() == 0 || p.residue(g) != 0 || !p.validate(g).ok() {
        for id in added {
            g.remove_item(id);
        }
        return None;
    }
    Some(p)
}

fn gen_pathgraph(
    ell: u64,
    n: usize,
    n_paths: usize,
    max_len: usize,
    rng: &mut ChaCha8Rng,
) -> (ComplexHypergraph, Vec<ComplexPath>) {
    let mut g = ComplexHypergraph::new(ell);
    for v in 0..n as VertexId {
        g.add_vertex(v);
    }
    let mut paths = Vec::new();
    let mut attempts = 0;
    while paths.len() < n_paths && attempts < 50 * n_paths + 100 {
        attempts += 1;
        if let Some(p) = grow_random_path(&mut g, n, max_len, 6, rng) {
            paths.push(p);
        }
    }
    (g, paths)
}

/// Generates an instance, re-verifying its declared properties.
/// Deterministic under the seed carried by `rng`.
pub fn generate(spec: &GeneratorSpec, rng: &mut ChaCha8Rng) -> Result<Generated, StageError> {
    match spec.kind {
        GenKind::Simple3ec { n, min_degree } => {
            let mut g = gen_simple_3ec(n, min_degree, rng)?;
            g.set_ell(spec.ell);
            Ok(Generated::Graph(g))
        }
        GenKind::Complex { n, items, max_index } => {
            Ok(Generated::Graph(gen_complex(spec.ell, n, items, max_index, rng)))
        }
        GenKind::Hypergraph { n, edges, k, size3 } => {
            let h = gen_hypergraph(n, edges, k, size3, rng)?;
            // re-expressed as a complex hypergraph: size-2 edges become unit
            // wiggly edges, size-3 edges become hyperedges
            let mut g = ComplexHypergraph::new(spec.ell);
            for v in h.vertices() {
                g.add_vertex(v);
            }
            for id in h.edge_ids().collect::<Vec<_>>() {
                let vs = h.edge(id).unwrap().clone();
                if vs.len() == 2 {
                    g.add_wiggly(WigglyEdge {
                        ends: [Incidence::new(vs[0], WILDCARD), Incidence::new(vs[1], WILDCARD)],
                        len: 1,
                    })
                    .unwrap();
                } else {
                    g.add_hyper(crate::graph::Hyperedge3 {
                        ends: [
                            Incidence::new(vs[0], WILDCARD),
                            Incidence::new(vs[1], WILDCARD),
                            Incidence::new(vs[2], WILDCARD),
                        ],
                        len: 2,
                    })
                    .unwrap();
                }
            }
            Ok(Generated::Graph(g))
        }
        GenKind::PathGraph { n, n_paths, max_len } => {
            let (g, paths) = gen_pathgraph(spec.ell, n, n_paths, max_len, rng);
            let pg = PathGraph::new(paths);
            pg.validate(&g)?;
            Ok(Generated::PathGraph(g, pg))
        }
        GenKind::Decomposable { n, n_paths, max_len } => {
            let (g, paths) = gen_pathgraph(spec.ell, n, n_paths, max_len, rng);
            let report = verify_decomposition(&g, &paths);
            if !report.ok() {
                return Err(StageError::verification(
                    "generate",
                    format!("decomposable instance failed its own check: {:?}", report.problems),
                ));
            }
            Ok(Generated::WithCertificate(g, paths))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn complete(n: u32, ell: u64) -> ComplexHypergraph {
        let mut g = ComplexHypergraph::new(ell);
        for v in 0..n {
            g.add_vertex(v);
        }
        for u in 0..n {
            for v in (u + 1)..n {
                g.add_ordinary(u, v).unwrap();
            }
        }
        g
    }

    #[test]
    fn triangle_has_no_three_path_decomposition() {
        let g = complete(3, 3);
        assert!(matches!(brute_force_decompose(&g, 16).unwrap(), BruteForce::Unsat));
    }

    #[test]
    fn k4_splits_into_three_paths_of_length_two() {
        let g = complete(4, 2);
        match brute_force_decompose(&g, 16).unwrap() {
            BruteForce::Sat(paths) => {
                assert_eq!(paths.len(), 3);
                assert!(verify_decomposition(&g, &paths).ok());
            }
            BruteForce::Unsat => panic!("K4 must decompose for ell=2"),
        }
    }

    #[test]
    fn non_divisible_is_unsat() {
        let mut g = complete(3, 2);
        g.set_ell(2);
        assert_eq!(g.ordinary_count() % 2, 1);
        assert!(matches!(brute_force_decompose(&g, 16).unwrap(), BruteForce::Unsat));
    }

    #[test]
    fn verifier_rejects_duplicate_and_missing_items() {
        let g = complete(4, 2);
        if let BruteForce::Sat(mut paths) = brute_force_decompose(&g, 16).unwrap() {
            assert!(verify_decomposition(&g, &paths).ok());
            let dup = paths[0].clone();
            paths.push(dup);
            let rep = verify_decomposition(&g, &paths);
            assert!(!rep.ok());
            assert!(rep.problems.iter().any(|p| p.contains("used twice")));
            paths.pop();
            paths.pop();
            let rep = verify_decomposition(&g, &paths);
            assert!(rep.problems.iter().any(|p| p.contains("not covered")));
        } else {
            panic!("K4 decomposes");
        }
    }

    #[test]
    fn size_guard_enforced() {
        let g = complete(7, 3);
        assert!(brute_force_decompose(&g, 16).is_err());
        // with a raised guard, K7 decomposes into 7 paths of length 3
        match brute_force_decompose(&g, 21).unwrap() {
            BruteForce::Sat(paths) => {
                assert_eq!(paths.len(), 7);
                assert!(verify_decomposition(&g, &paths).ok());
            }
            BruteForce::Unsat => panic!("K7 must decompose for ell=3"),
        }
    }

    #[test]
    fn decomposition_with_stubs_and_wigglies() {
        let mut g = ComplexHypergraph::new(3);
        for v in 0..3 {
            g.add_vertex(v);
        }
        g.add_ordinary(0, 1).unwrap();
        g.add_wiggly(WigglyEdge {
            ends: [Incidence::new(1, 2), Incidence::new(2, WILDCARD)],
            len: 1,
        })
        .unwrap();
        g.add_stub(Stub { end: Incidence::new(2, 5), len: 1 }).unwrap();
        match brute_force_decompose(&g, 16).unwrap() {
            BruteForce::Sat(paths) => {
                assert_eq!(paths.len(), 1);
                assert!(verify_decomposition(&g, &paths).ok());
            }
            BruteForce::Unsat => panic!("chain of total length 3 decomposes"),
        }
    }

    #[test]
    fn generators_are_seed_deterministic_and_verified() {
        let spec = GeneratorSpec {
            kind: GenKind::Simple3ec { n: 10, min_degree: 4 },
            ell: 2,
        };
        let mut r1 = ChaCha8Rng::seed_from_u64(7);
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        let (Generated::Graph(a), Generated::Graph(b)) =
            (generate(&spec, &mut r1).unwrap(), generate(&spec, &mut r2).unwrap())
        else {
            panic!("graph expected");
        };
        assert_eq!(crate::format::write_graph(&a), crate::format::write_graph(&b));
        let under = crate::connectivity::Hypergraph::from_complex(&a);
        assert!(crate::connectivity::is_k_edge_connected(&under, 3));

        let spec = GeneratorSpec {
            kind: GenKind::Decomposable { n: 8, n_paths: 6, max_len: 4 },
            ell: 3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let Generated::WithCertificate(g, cert) = generate(&spec, &mut rng).unwrap() else {
            panic!("certificate expected");
        };
        assert!(verify_decomposition(&g, &cert).ok());
        assert!(!cert.is_empty());
    }
}
