//! Structural operations on complex hypergraphs: shrinking wiggly edges and
//! hyperedges into stubs, condensing wiggly paths into single edges (and
//! lifting decompositions back), universal loop paths, the condense-to-unit
//! procedure and single-vertex loop concatenation.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::StageError;
use crate::graph::{
    compatible, ComplexHypergraph, Incidence, Index, ItemId, Stub, VertexId,
    WigglyEdge, WILDCARD,
};
use crate::path::{ComplexPath, PathElem};

fn modl(x: i64, ell: u64) -> u64 {
    x.rem_euclid(ell as i64) as u64
}

/// Replace a wiggly edge by two stubs carrying its incidences, with lengths
/// summing to the edge length mod ell. Returns the stub ids in end order.
pub fn shrink_wiggly(
    g: &mut ComplexHypergraph,
    e: ItemId,
    len1: u64,
    len2: u64,
) -> Result<[ItemId; 2], StageError> {
    let w = g
        .wiggly(e)
        .cloned()
        .ok_or_else(|| StageError::precondition("shrink_wiggly", format!("{e} is not a wiggly edge")))?;
    let ell = g.ell();
    if (len1 + len2) % ell != w.len % ell {
        return Err(StageError::precondition(
            "shrink_wiggly",
            format!("stub lengths {len1}+{len2} incongruent to edge length {} mod {ell}", w.len),
        ));
    }
    g.remove_item(e);
    let s1 = g.add_stub(Stub { end: w.ends[0], len: len1 })?;
    let s2 = g.add_stub(Stub { end: w.ends[1], len: len2 })?;
    Ok([s1, s2])
}

#[derive(Debug, Clone, Copy)]
pub enum HyperShrink {
    /// Keep the two named incidence slots as a wiggly edge, stub the third.
    WigglyAndStub { kept: [usize; 2], wiggly_len: u64, stub_len: u64 },
    ThreeStubs { lens: [u64; 3] },
}

/// Shrink a size-3 hyperedge into a wiggly edge plus a stub, or three stubs.
/// Lengths must sum to the hyperedge length mod ell; indices carry over.
/// Returns the new ids (wiggly first in the first mode; slot order otherwise).
pub fn shrink_hyper(
    g: &mut ComplexHypergraph,
    h: ItemId,
    mode: HyperShrink,
) -> Result<Vec<ItemId>, StageError> {
    let he = g
        .hyperedge(h)
        .cloned()
        .ok_or_else(|| StageError::precondition("shrink_hyper", format!("{h} is not a hyperedge")))?;
    let ell = g.ell();
    match mode {
        HyperShrink::WigglyAndStub { kept, wiggly_len, stub_len } => {
            if kept[0] > 2 || kept[1] > 2 || kept[0] == kept[1] {
                return Err(StageError::precondition("shrink_hyper", "bad incidence slots"));
            }
            if (wiggly_len + stub_len) % ell != he.len % ell {
                return Err(StageError::precondition(
                    "shrink_hyper",
                    format!("lengths {wiggly_len}+{stub_len} incongruent to {} mod {ell}", he.len),
                ));
            }
            let third = 3 - kept[0] - kept[1];
            g.remove_item(h);
            let w = g.add_wiggly(WigglyEdge {
                ends: [he.ends[kept[0]], he.ends[kept[1]]],
                len: wiggly_len,
            })?;
            let s = g.add_stub(Stub { end: he.ends[third], len: stub_len })?;
            Ok(vec![w, s])
        }
        HyperShrink::ThreeStubs { lens } => {
            if lens.iter().sum::<u64>() % ell != he.len % ell {
                return Err(StageError::precondition(
                    "shrink_hyper",
                    format!("stub lengths incongruent to {} mod {ell}", he.len),
                ));
            }
            g.remove_item(h);
            let mut out = Vec::new();
            for k in 0..3 {
                out.push(g.add_stub(Stub { end: he.ends[k], len: lens[k] })?);
            }
            Ok(out)
        }
    }
}

/// Shrink a wiggly edge while maintaining an accompanying decomposition:
/// the path through the edge splits into two paths each absorbing one stub,
/// with stub lengths chosen to keep both of them 0 mod ell.
pub fn shrink_with_decomposition(
    g: &mut ComplexHypergraph,
    decomposition: &mut Vec<ComplexPath>,
    e: ItemId,
) -> Result<[ItemId; 2], StageError> {
    let pos = decomposition
        .iter()
        .position(|p| p.items().contains(&e))
        .ok_or_else(|| {
            StageError::precondition("shrink_with_decomposition", format!("no path contains {e}"))
        })?;
    let path = decomposition[pos].clone();
    let at = path
        .elems()
        .iter()
        .position(|el| el.item_id() == Some(e) && matches!(el, PathElem::Wiggly { .. }))
        .ok_or_else(|| {
            StageError::precondition("shrink_with_decomposition", format!("{e} is not a wiggly edge of its path"))
        })?;
    let slot = match path.elems()[at] {
        PathElem::Wiggly { first_slot, .. } => first_slot,
        _ => unreachable!(),
    };
    let ell = g.ell();
    let left = ComplexPath::new(path.elems()[..at].to_vec());
    let right = ComplexPath::new(path.elems()[at + 1..].to_vec());
    let a1 = modl(-(left.length(g) as i64), ell);
    let a2 = modl(-(right.length(g) as i64), ell);
    let w = g.wiggly(e).cloned().ok_or_else(|| {
        StageError::precondition("shrink_with_decomposition", format!("{e} not in graph"))
    })?;
    debug_assert_eq!((a1 + a2) % ell, w.len % ell, "path was not 0 mod ell");
    g.remove_item(e);
    let near = slot as usize;
    let s1 = g.add_stub(Stub { end: w.ends[near], len: a1 })?;
    let s2 = g.add_stub(Stub { end: w.ends[1 - near], len: a2 })?;
    let mut p1 = left.into_elems();
    p1.push(PathElem::Stub(s1));
    let mut p2 = vec![PathElem::Stub(s2)];
    p2.extend_from_slice(right.elems());
    let p1 = ComplexPath::new(p1);
    let p2 = ComplexPath::new(p2);
    for p in [&p1, &p2] {
        let check = p.validate(g);
        if let Some(v) = check.violation {
            return Err(StageError::verification(
                "shrink_with_decomposition",
                format!("split path invalid: {:?} {}", v.rule, v.detail),
            ));
        }
        if !p.is_ell_path(g) {
            return Err(StageError::verification("shrink_with_decomposition", "split path not 0 mod ell"));
        }
    }
    decomposition.remove(pos);
    decomposition.push(p1);
    decomposition.push(p2);
    Ok([s1, s2])
}

/// Two stubs at one vertex with compatible indices and lengths summing to
/// 0 mod ell form a 0 mod ell path on their own.
pub fn is_balanced_stub_pair(g: &ComplexHypergraph, s1: ItemId, s2: ItemId) -> bool {
    match (g.stub(s1), g.stub(s2)) {
        (Some(a), Some(b)) => {
            s1 != s2
                && a.end.vertex == b.end.vertex
                && compatible(a.end.index, b.end.index)
                && (a.len + b.len) % g.ell() == 0
        }
        _ => false,
    }
}

/// The two-stub path for a balanced pair; adjoining it to a decomposition of
/// the graph minus the pair gives a decomposition of the whole graph.
pub fn stub_pair_path(
    g: &ComplexHypergraph,
    s1: ItemId,
    s2: ItemId,
) -> Result<ComplexPath, StageError> {
    if !is_balanced_stub_pair(g, s1, s2) {
        return Err(StageError::precondition("stub_pair_path", format!("{s1},{s2} not balanced")));
    }
    let v = g.stub(s1).unwrap().end.vertex;
    let p = ComplexPath::new(vec![PathElem::Stub(s1), PathElem::Vertex(v), PathElem::Stub(s2)]);
    debug_assert!(p.validate(g).ok());
    Ok(p)
}

/// One recorded condensation: which edge stands in for which path, plus the
/// removed edge data so it can be undone exactly.
#[derive(Debug, Clone)]
pub struct Condensation {
    pub edge: ItemId,
    pub path: ComplexPath,
    pub removed: Vec<(ItemId, WigglyEdge)>,
}

#[derive(Debug, Clone, Default)]
pub struct CondenseLog {
    pub steps: Vec<Condensation>,
}

fn canonical_len(total: u64, ell: u64) -> u64 {
    // representative of total mod ell in [1, ell]
    ((total + ell - 1) % ell) + 1
}

/// Condense a path of wiggly edges into a single wiggly edge whose indices
/// are the path's end indices, or the wildcard at a universal end. The
/// stored length is the representative of the path length in [1, ell];
/// every decomposability question only reads lengths mod ell, and the log
/// keeps the exact originals for lifting.
pub fn condense_path(
    g: &mut ComplexHypergraph,
    p: &ComplexPath,
    log: &mut CondenseLog,
) -> Result<ItemId, StageError> {
    let check = p.validate(g);
    if let Some(v) = check.violation {
        return Err(StageError::precondition(
            "condense_path",
            format!("path invalid: {:?} {}", v.rule, v.detail),
        ));
    }
    let mut removed = Vec::new();
    for el in p.elems() {
        match *el {
            PathElem::Vertex(_) => {}
            PathElem::Wiggly { id, .. } => {
                removed.push((id, g.wiggly(id).unwrap().clone()));
            }
            _ => {
                return Err(StageError::precondition(
                    "condense_path",
                    "only vertices and wiggly edges may be condensed",
                ));
            }
        }
    }
    if removed.is_empty() {
        return Err(StageError::precondition("condense_path", "path has no wiggly edge"));
    }
    let (u, v) = p.end_vertices(g).unwrap();
    let iu = if p.is_universal_at_start(g) { WILDCARD } else { p.initial_index(g) };
    let iv = if p.is_universal_at_end(g) { WILDCARD } else { p.terminal_index(g) };
    let len = canonical_len(p.length(g), g.ell());
    for (id, _) in &removed {
        g.remove_item(*id);
    }
    let edge = g.add_wiggly(WigglyEdge {
        ends: [Incidence::new(u, iu), Incidence::new(v, iv)],
        len,
    })?;
    log.steps.push(Condensation { edge, path: p.clone(), removed });
    Ok(edge)
}

/// Orientation/loop-swap variants of a path; used when splicing a condensed
/// path back in, where a universal end licenses exchanging its first two
/// loops to dodge an index clash.
fn splice_variants(p: &ComplexPath) -> Vec<ComplexPath> {
    let mut out = vec![p.clone()];
    let loop_swap_ok = |e: &[PathElem], a: usize, b: usize| {
        matches!(e.get(a), Some(PathElem::Wiggly { .. }))
            && matches!(e.get(b), Some(PathElem::Wiggly { .. }))
    };
    let n = p.elems().len();
    let push_swapped = |base: &ComplexPath, a: usize, b: usize, out: &mut Vec<ComplexPath>| {
        if loop_swap_ok(base.elems(), a, b) {
            let mut e = base.elems().to_vec();
            e.swap(a, b);
            out.push(ComplexPath::new(e));
        }
    };
    if n >= 4 {
        let snapshot: Vec<ComplexPath> = out.clone();
        for base in &snapshot {
            push_swapped(base, 1, 3, &mut out);
        }
        let snapshot: Vec<ComplexPath> = out.clone();
        for base in &snapshot {
            push_swapped(base, n - 2, n - 4, &mut out);
        }
    }
    out
}

/// Replace the condensed edge inside `q` by the recorded path, trying both
/// orientations and universal-end loop swaps until the splice validates.
fn splice_path(
    g: &ComplexHypergraph,
    q: &ComplexPath,
    edge: ItemId,
    replacement: &ComplexPath,
) -> Option<ComplexPath> {
    let at = q
        .elems()
        .iter()
        .position(|el| matches!(el, PathElem::Wiggly { id, .. } if *id == edge))?;
    let slot = match q.elems()[at] {
        PathElem::Wiggly { first_slot, .. } => first_slot,
        _ => return None,
    };
    let oriented = if slot == 0 { replacement.clone() } else { replacement.reversed() };
    for cand in splice_variants(&oriented) {
        let mut elems = q.elems()[..at.saturating_sub(1)].to_vec();
        if at == 0 {
            // condensed edge cannot start a path (rule i), so at >= 1
            return None;
        }
        elems.extend_from_slice(cand.elems());
        elems.extend_from_slice(&q.elems()[at + 2..]);
        let spliced = ComplexPath::new(elems);
        if spliced.validate(g).ok() {
            return Some(spliced);
        }
    }
    None
}

/// Undo every condensation in reverse order, rewriting a decomposition of
/// the condensed graph into one of the original graph. Mutates the graph
/// back to its pre-condensation state.
pub fn lift_decomposition(
    g: &mut ComplexHypergraph,
    decomposition: &mut Vec<ComplexPath>,
    log: &CondenseLog,
) -> Result<(), StageError> {
    for step in log.steps.iter().rev() {
        g.remove_item(step.edge);
        for (id, data) in &step.removed {
            g.insert_wiggly_as(*id, data.clone())?;
        }
        let pos = decomposition.iter().position(|p| p.items().contains(&step.edge));
        let pos = match pos {
            Some(pos) => pos,
            None => {
                return Err(StageError::verification(
                    "lift_decomposition",
                    format!("no path uses condensed edge {}", step.edge),
                ));
            }
        };
        let host = decomposition[pos].clone();
        match splice_path(g, &host, step.edge, &step.path) {
            Some(spliced) => decomposition[pos] = spliced,
            None => {
                return Err(StageError::verification(
                    "lift_decomposition",
                    format!("cannot splice condensed edge {} back", step.edge),
                ));
            }
        }
    }
    Ok(())
}

/// Unused unit loops at `v`, in id order.
fn unit_loops_at(g: &ComplexHypergraph, v: VertexId, used: &BTreeSet<ItemId>) -> Vec<ItemId> {
    g.items_at(v)
        .into_iter()
        .filter(|&id| {
            !used.contains(&id)
                && g.wiggly(id).map_or(false, |w| w.is_loop() && w.is_unit())
        })
        .collect()
}

fn loop_elem_with_lead(
    g: &ComplexHypergraph,
    id: ItemId,
    avoid: Index,
) -> Option<PathElem> {
    let w = g.wiggly(id)?;
    for slot in [0u8, 1] {
        if compatible(w.ends[slot as usize].index, avoid) {
            return Some(PathElem::wiggly(id, slot));
        }
    }
    None
}

/// Greedily chain `n` unused unit loops at `v` into a path whose initial
/// index is compatible with `lead_avoid`. Marks the chosen loops used.
fn greedy_unit_loop_chain(
    g: &ComplexHypergraph,
    v: VertexId,
    n: u64,
    lead_avoid: Index,
    used: &mut BTreeSet<ItemId>,
) -> Option<ComplexPath> {
    let mut elems = vec![PathElem::Vertex(v)];
    let mut taken = Vec::new();
    let mut avoid = lead_avoid;
    for _ in 0..n {
        let mut found = None;
        for id in unit_loops_at(g, v, used) {
            if taken.contains(&id) {
                continue;
            }
            if let Some(el) = loop_elem_with_lead(g, id, avoid) {
                found = Some((id, el));
                break;
            }
        }
        let (id, el) = found?;
        taken.push(id);
        let far = match el {
            PathElem::Wiggly { id, first_slot } => g.wiggly(id).unwrap().ends[1 - first_slot as usize].index,
            _ => unreachable!(),
        };
        elems.push(el);
        elems.push(PathElem::Vertex(v));
        avoid = far;
    }
    let p = ComplexPath::new(elems);
    if !p.validate(g).ok() {
        return None;
    }
    for id in taken {
        used.insert(id);
    }
    Some(p)
}

/// Build a path of unit loops at `v` of length `want` mod ell, at most
/// ell + 4 loops, whose ends are universal or carry the wildcard. Consumes
/// the loops it uses via `used`.
pub fn universal_loop_path(
    g: &ComplexHypergraph,
    v: VertexId,
    want: u64,
    used: &mut BTreeSet<ItemId>,
) -> Result<ComplexPath, StageError> {
    let ell = g.ell();
    // core of length want - 4 mod ell, at least one loop
    let mut n = modl(want as i64 - 4, ell);
    if n == 0 {
        n = ell;
    }
    let core = greedy_unit_loop_chain(g, v, n, WILDCARD, used)
        .ok_or_else(|| StageError::infeasible("universal_loop_path", format!("cannot chain {n} unit loops at {v}")))?;
    let i1 = core.initial_index(g);
    let i2 = core.terminal_index(g);
    let indices_of = |id: ItemId| {
        let w = g.wiggly(id).unwrap();
        [w.ends[0].index, w.ends[1].index]
    };
    let ok_against = |id: ItemId, banned: &[Index]| {
        indices_of(id)
            .iter()
            .all(|&i| i == WILDCARD || !banned.contains(&i))
    };
    let pick = |used: &BTreeSet<ItemId>, taken: &[ItemId], banned: &[Index]| -> Option<ItemId> {
        unit_loops_at(g, v, used)
            .into_iter()
            .find(|id| !taken.contains(id) && ok_against(*id, banned))
    };
    let mut taken: Vec<ItemId> = Vec::new();
    let e = pick(used, &taken, &[i1])
        .ok_or_else(|| StageError::infeasible("universal_loop_path", "no loop for first guard"))?;
    taken.push(e);
    let mut banned = vec![i1];
    banned.extend(indices_of(e).iter().filter(|&&i| i != WILDCARD));
    let e2 = pick(used, &taken, &banned)
        .ok_or_else(|| StageError::infeasible("universal_loop_path", "no loop for second guard"))?;
    taken.push(e2);
    let f = pick(used, &taken, &[i2])
        .ok_or_else(|| StageError::infeasible("universal_loop_path", "no loop for third guard"))?;
    taken.push(f);
    let mut banned = vec![i2];
    banned.extend(indices_of(f).iter().filter(|&&i| i != WILDCARD));
    let f2 = pick(used, &taken, &banned)
        .ok_or_else(|| StageError::infeasible("universal_loop_path", "no loop for fourth guard"))?;
    taken.push(f2);

    let mut elems = vec![
        PathElem::Vertex(v),
        PathElem::wiggly(e, 0),
        PathElem::Vertex(v),
        PathElem::wiggly(e2, 0),
    ];
    elems.extend_from_slice(core.elems());
    elems.push(PathElem::wiggly(f, 0));
    elems.push(PathElem::Vertex(v));
    elems.push(PathElem::wiggly(f2, 0));
    elems.push(PathElem::Vertex(v));
    let p = ComplexPath::new(elems);
    let check = p.validate(g);
    if let Some(viol) = check.violation {
        return Err(StageError::verification(
            "universal_loop_path",
            format!("assembled path invalid: {:?} {}", viol.rule, viol.detail),
        ));
    }
    if p.length(g) % ell != want % ell {
        return Err(StageError::verification("universal_loop_path", "length residue off"));
    }
    if !(p.initial_index(g) == WILDCARD || p.is_universal_at_start(g)) {
        return Err(StageError::verification("universal_loop_path", "start not universal"));
    }
    if !(p.terminal_index(g) == WILDCARD || p.is_universal_at_end(g)) {
        return Err(StageError::verification("universal_loop_path", "end not universal"));
    }
    for id in taken {
        used.insert(id);
    }
    Ok(p)
}

/// Result of `condense_to_unit`: the rewritten graph (loops removed), the
/// condensation log for lifting, and the loops that were deleted outright.
#[derive(Debug)]
pub struct CondenseToUnit {
    pub graph: ComplexHypergraph,
    pub log: CondenseLog,
    pub deleted_loops: Vec<(ItemId, WigglyEdge)>,
}

/// Condense loop material into the non-loop edges so that afterwards every
/// vertex either keeps three quarters of its degree unit (with unit degree
/// at least a 1/8ell share of the old one), or all its incident edges are
/// ordinary or unit with wildcard index at it. All loops are removed; the
/// degree of every vertex drops exactly by its loop degree.
pub fn condense_to_unit(
    g: &ComplexHypergraph,
    enforce_preconditions: bool,
) -> Result<CondenseToUnit, StageError> {
    let ell = g.ell();
    if g.stub_count() > 0 || g.hyper_count() > 0 {
        return Err(StageError::precondition("condense_to_unit", "graph must have no stubs or hyperedges"));
    }
    if enforce_preconditions {
        if ell < 2 {
            return Err(StageError::precondition("condense_to_unit", "needs ell >= 2"));
        }
        let iota = g.iota();
        for v in g.vertices() {
            let p = g.degrees(v).unwrap();
            // udeg >= (1 - 1/(8(ell-1))) deg  <=>  8(ell-1) udeg >= (8(ell-1)-1) deg
            let c = 8 * (ell - 1);
            if u64::from(p.udeg) * c < (c - 1) * u64::from(p.deg) {
                return Err(StageError::precondition(
                    "condense_to_unit",
                    format!("vertex {v}: unit degree too small ({} of {})", p.udeg, p.deg),
                ));
            }
            if u64::from(p.deg) < 7 * u64::from(iota) {
                return Err(StageError::precondition(
                    "condense_to_unit",
                    format!("vertex {v}: degree {} below 7 iota = {}", p.deg, 7 * iota),
                ));
            }
        }
    }

    let mut h = g.clone();
    let mut log = CondenseLog::default();
    let mut deleted = Vec::new();
    let orig: BTreeMap<VertexId, _> =
        g.vertices().map(|v| (v, g.degrees(v).unwrap())).collect();

    for v in g.vertices() {
        let dv = &orig[&v];
        let mut used: BTreeSet<ItemId> = BTreeSet::new();
        // non-loop wiggly edges currently at v, in id order
        let wiggly_nonloops = |h: &ComplexHypergraph| -> Vec<ItemId> {
            h.items_at(v)
                .into_iter()
                .filter(|&id| h.wiggly(id).map_or(false, |w| !w.is_loop()))
                .collect()
        };
        // group 2: almost everything at v is loops, make every wiggly
        // non-loop unit with wildcard index at v
        let group2 =
            u64::from(dv.deg - dv.ldeg) * 8 * ell < u64::from(dv.udeg);
        if group2 {
            for w_id in wiggly_nonloops(&h) {
                let w = h.wiggly(w_id).unwrap().clone();
                let want = modl(1 - w.len as i64, ell);
                let pw = universal_loop_path(&h, v, want, &mut used)?;
                let slot = if w.ends[0].vertex == v { 1 } else { 0 };
                let u = w.ends[slot as usize].vertex;
                let mut found = None;
                for cand in splice_variants(&pw) {
                    let mut elems = vec![
                        PathElem::Vertex(u),
                        PathElem::wiggly(w_id, slot),
                    ];
                    elems.extend_from_slice(cand.elems());
                    let q = ComplexPath::new(elems);
                    if q.validate(&h).ok() {
                        found = Some(q);
                        break;
                    }
                }
                let q = found.ok_or_else(|| {
                    StageError::verification("condense_to_unit", format!("cannot attach loop path to {w_id}"))
                })?;
                let new_edge = condense_path(&mut h, &q, &mut log)?;
                let ne = h.wiggly(new_edge).unwrap();
                if !(ne.is_unit() && ne.ends[1].vertex == v && ne.ends[1].index == WILDCARD) {
                    return Err(StageError::verification(
                        "condense_to_unit",
                        format!("condensed edge at {v} not unit/wildcard"),
                    ));
                }
                used.clear();
            }
        } else {
            // group 1: pad every non-unit non-loop up to a unit edge if the
            // loop supply allows; otherwise rely on the unit majority
            let targets: Vec<ItemId> = wiggly_nonloops(&h)
                .into_iter()
                .filter(|&id| !h.wiggly(id).unwrap().is_unit())
                .collect();
            for w_id in targets {
                let w = h.wiggly(w_id).unwrap().clone();
                let slot = if w.ends[0].vertex == v { 1 } else { 0 };
                let u = w.ends[slot as usize].vertex;
                let iv = w.ends[1 - slot as usize].index;
                let n = modl(1 - w.len as i64, ell);
                let q = if n == 0 {
                    // already 1 mod ell: condensing the edge alone
                    // canonicalizes its length to exactly one
                    ComplexPath::new(vec![
                        PathElem::Vertex(u),
                        PathElem::wiggly(w_id, slot),
                        PathElem::Vertex(v),
                    ])
                } else {
                    let mut reserved = used.clone();
                    match greedy_unit_loop_chain(&h, v, n, iv, &mut reserved) {
                        Some(pw) => {
                            used = reserved;
                            let mut elems = vec![
                                PathElem::Vertex(u),
                                PathElem::wiggly(w_id, slot),
                            ];
                            elems.extend_from_slice(pw.elems());
                            ComplexPath::new(elems)
                        }
                        None => continue, // not enough loops; unit majority wins
                    }
                };
                if !q.validate(&h).ok() {
                    continue;
                }
                condense_path(&mut h, &q, &mut log)?;
                used.clear();
            }
        }
        // delete all remaining loops at v
        for id in h.items_at(v) {
            if h.wiggly(id).map_or(false, |w| w.is_loop()) {
                deleted.push((id, h.wiggly(id).unwrap().clone()));
                h.remove_item(id);
            }
        }
    }

    // postconditions
    for v in g.vertices() {
        let before = &orig[&v];
        let after = h.degrees(v).unwrap();
        if after.deg != before.deg - before.ldeg {
            return Err(StageError::verification(
                "condense_to_unit",
                format!("vertex {v}: degree {} != {} - {}", after.deg, before.deg, before.ldeg),
            ));
        }
        let cond_a = u64::from(after.udeg) * 8 * ell >= u64::from(before.udeg)
            && 4 * after.udeg >= 3 * after.deg;
        let cond_b = h.items_at(v).into_iter().all(|id| match h.wiggly(id) {
            None => true, // ordinary
            Some(w) => {
                w.is_unit() && w.ends.iter().all(|i| i.vertex != v || i.index == WILDCARD)
            }
        });
        if enforce_preconditions && !cond_a && !cond_b {
            return Err(StageError::verification(
                "condense_to_unit",
                format!("vertex {v} satisfies neither outcome"),
            ));
        }
    }

    Ok(CondenseToUnit { graph: h, log, deleted_loops: deleted })
}

/// Concatenate all loops of a single-vertex, loop-only graph into one path.
/// Works whenever no index appears on more than half the loop incidences.
pub fn singleton_loop_concat(g: &ComplexHypergraph) -> Result<ComplexPath, StageError> {
    let vs: Vec<VertexId> = g.vertices().collect();
    if vs.len() != 1 {
        return Err(StageError::precondition("singleton_loop_concat", "graph must have one vertex"));
    }
    let v = vs[0];
    if g.stub_count() > 0 || g.hyper_count() > 0 || g.ordinary_count() > 0 {
        return Err(StageError::precondition("singleton_loop_concat", "graph must contain only loops"));
    }
    let loops: Vec<ItemId> = g.wiggly_ids().collect();
    let big_l = loops.len() as u32;
    if big_l == 0 {
        return Ok(ComplexPath::single_vertex(v));
    }
    if 2 * g.iota() > big_l {
        return Err(StageError::precondition(
            "singleton_loop_concat",
            format!("iota {} exceeds half the loop count {}", g.iota(), big_l),
        ));
    }
    // R: loops with both indices equal and not wildcard, R': the rest
    let mut r: Vec<ItemId> = Vec::new();
    let mut r_rest: Vec<ItemId> = Vec::new();
    for &id in &loops {
        let w = g.wiggly(id).unwrap();
        if w.ends[0].index == w.ends[1].index && w.ends[0].index != WILDCARD {
            r.push(id);
        } else {
            r_rest.push(id);
        }
    }
    // frequency of indices inside R, most frequent first
    let mut freq: BTreeMap<Index, usize> = BTreeMap::new();
    for &id in &r {
        *freq.entry(g.wiggly(id).unwrap().ends[0].index).or_insert(0) += 1;
    }
    let mut by_freq: Vec<(Index, usize)> = freq.into_iter().collect();
    by_freq.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut t: Vec<ItemId> = Vec::new();
    if let Some(&(i_max, cnt)) = by_freq.first() {
        if 2 * cnt > r.len() {
            let need = cnt as i64 - (r.len() - cnt) as i64 - 1;
            if need > 0 {
                for &id in &r_rest {
                    if t.len() as i64 >= need {
                        break;
                    }
                    let w = g.wiggly(id).unwrap();
                    if w.ends.iter().all(|e| e.index != i_max) {
                        t.push(id);
                    }
                }
                if (t.len() as i64) < need {
                    return Err(StageError::infeasible(
                        "singleton_loop_concat",
                        "not enough loops free of the dominant index",
                    ));
                }
            }
        }
    }
    // sequence: R by descending index frequency, then T; interleave halves
    let mut seq: Vec<ItemId> = Vec::new();
    for &(i, _) in &by_freq {
        for &id in &r {
            if g.wiggly(id).unwrap().ends[0].index == i {
                seq.push(id);
            }
        }
    }
    seq.extend(t.iter().copied());
    let n = seq.len();
    let m = (n + 1) / 2;
    let mut order: Vec<ItemId> = Vec::new();
    for i in 0..m {
        order.push(seq[i]);
        if m + i < n {
            order.push(seq[m + i]);
        }
    }
    // assemble, then greedily append everything else
    let mut elems = vec![PathElem::Vertex(v)];
    let mut terminal = WILDCARD;
    let extend = |elems: &mut Vec<PathElem>, terminal: &mut Index, id: ItemId| -> bool {
        match loop_elem_with_lead(g, id, *terminal) {
            Some(el) => {
                let far = match el {
                    PathElem::Wiggly { id, first_slot } => {
                        g.wiggly(id).unwrap().ends[1 - first_slot as usize].index
                    }
                    _ => unreachable!(),
                };
                elems.push(el);
                elems.push(PathElem::Vertex(v));
                *terminal = far;
                true
            }
            None => false,
        }
    };
    for id in &order {
        if !extend(&mut elems, &mut terminal, *id) {
            return Err(StageError::verification(
                "singleton_loop_concat",
                format!("interleaved order blocked at {id}"),
            ));
        }
    }
    let placed: BTreeSet<ItemId> = order.iter().copied().collect();
    let mut rest: Vec<ItemId> = loops.iter().copied().filter(|id| !placed.contains(id)).collect();
    // each remaining loop has two distinct indices or a wildcard, so some
    // orientation always fits; iterate until all placed
    while !rest.is_empty() {
        let before = rest.len();
        rest.retain(|&id| !extend(&mut elems, &mut terminal, id));
        if rest.len() == before {
            return Err(StageError::verification(
                "singleton_loop_concat",
                "greedy append stuck",
            ));
        }
    }
    let p = ComplexPath::new(elems);
    let check = p.validate(g);
    if let Some(viol) = check.violation {
        return Err(StageError::verification(
            "singleton_loop_concat",
            format!("assembled path invalid: {:?} {}", viol.rule, viol.detail),
        ));
    }
    if p.items().len() != loops.len() {
        return Err(StageError::verification("singleton_loop_concat", "not all loops used"));
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn inc(v: VertexId, i: Index) -> Incidence {
        Incidence::new(v, i)
    }

    #[test]
    fn shrink_wiggly_checks_lengths_and_keeps_counts() {
        let mut g = ComplexHypergraph::new(3);
        g.add_vertex(0);
        g.add_vertex(1);
        let e = g
            .add_wiggly(WigglyEdge { ends: [inc(0, 4), inc(1, 5)], len: 5 })
            .unwrap();
        assert!(shrink_wiggly(&mut g, e, 1, 2).is_err()); // 3 != 5 mod 3
        let [s1, s2] = shrink_wiggly(&mut g, e, 1, 4).unwrap();
        assert_eq!(g.wiggly_count(), 0);
        assert_eq!(g.stub_count(), 2);
        assert_eq!(g.stub(s1).unwrap().end, inc(0, 4));
        assert_eq!(g.stub(s2).unwrap().end, inc(1, 5));
        // degree and iota preserved
        assert_eq!(g.degrees(0).unwrap().deg, 1);
        assert_eq!(g.iota_at(0, 4), 1);
    }

    #[test]
    fn shrink_hyper_both_modes() {
        let mk = || {
            let mut g = ComplexHypergraph::new(4);
            for v in 0..3 {
                g.add_vertex(v);
            }
            let h = g
                .add_hyper(crate::graph::Hyperedge3 {
                    ends: [inc(0, 1), inc(1, 2), inc(2, 3)],
                    len: 6,
                })
                .unwrap();
            (g, h)
        };
        let (mut g, h) = mk();
        let ids = shrink_hyper(
            &mut g,
            h,
            HyperShrink::WigglyAndStub { kept: [0, 2], wiggly_len: 3, stub_len: 3 },
        )
        .unwrap();
        let w = g.wiggly(ids[0]).unwrap();
        assert_eq!(w.ends, [inc(0, 1), inc(2, 3)]);
        assert_eq!(g.stub(ids[1]).unwrap().end, inc(1, 2));
        let (mut g, h) = mk();
        let before: Vec<u32> = (0..3).map(|v| g.degrees(v).unwrap().deg).collect();
        let ids = shrink_hyper(&mut g, h, HyperShrink::ThreeStubs { lens: [2, 2, 2] }).unwrap();
        assert_eq!(ids.len(), 3);
        let after: Vec<u32> = (0..3).map(|v| g.degrees(v).unwrap().deg).collect();
        assert_eq!(before, after);
        assert_eq!(g.alpha() % 4, 6 % 4);
    }

    #[test]
    fn shrink_with_decomposition_splits_into_ell_paths() {
        let mut g = ComplexHypergraph::new(3);
        for v in 0..3 {
            g.add_vertex(v);
        }
        let w = g
            .add_wiggly(WigglyEdge { ends: [inc(0, -1), inc(1, -1)], len: 2 })
            .unwrap();
        let o = g.add_ordinary(1, 2).unwrap();
        let p = ComplexPath::new(vec![
            PathElem::Vertex(0),
            PathElem::wiggly(w, 0),
            PathElem::Vertex(1),
            PathElem::Ordinary(o),
            PathElem::Vertex(2),
        ]);
        assert!(p.is_ell_path(&g));
        let mut decomp = vec![p];
        let [s1, s2] = shrink_with_decomposition(&mut g, &mut decomp, w).unwrap();
        assert_eq!(decomp.len(), 2);
        for q in &decomp {
            assert!(q.validate(&g).ok());
            assert!(q.is_ell_path(&g));
        }
        assert_eq!(g.stub(s1).unwrap().len, 0);
        assert_eq!(g.stub(s2).unwrap().len, 2);
    }

    #[test]
    fn balanced_pair_and_its_path() {
        let mut g = ComplexHypergraph::new(4);
        g.add_vertex(0);
        let a = g.add_stub(Stub { end: inc(0, 1), len: 3 }).unwrap();
        let b = g.add_stub(Stub { end: inc(0, 2), len: 5 }).unwrap();
        let c = g.add_stub(Stub { end: inc(0, 1), len: 1 }).unwrap();
        assert!(is_balanced_stub_pair(&g, a, b));
        assert!(!is_balanced_stub_pair(&g, a, c)); // same index and 4 != 0 mod 4
        let p = stub_pair_path(&g, a, b).unwrap();
        assert!(p.is_ell_path(&g));
    }

    #[test]
    fn condense_then_lift_roundtrip() {
        // wiggly path 0 -2- 1 -3- 2 condenses to one edge of length 5 -> 1+4=5,
        // stored representative 5 mod 4 in [1,4] is 1
        let mut g = ComplexHypergraph::new(4);
        for v in 0..4 {
            g.add_vertex(v);
        }
        let a = g
            .add_wiggly(WigglyEdge { ends: [inc(0, 7), inc(1, 8)], len: 2 })
            .unwrap();
        let b = g
            .add_wiggly(WigglyEdge { ends: [inc(1, 9), inc(2, 6)], len: 3 })
            .unwrap();
        let tail = g
            .add_wiggly(WigglyEdge { ends: [inc(2, 4), inc(3, 5)], len: 3 })
            .unwrap();
        let p = ComplexPath::new(vec![
            PathElem::Vertex(0),
            PathElem::wiggly(a, 0),
            PathElem::Vertex(1),
            PathElem::wiggly(b, 0),
            PathElem::Vertex(2),
        ]);
        let mut log = CondenseLog::default();
        let ep = condense_path(&mut g, &p, &mut log).unwrap();
        let w = g.wiggly(ep).unwrap();
        assert_eq!(w.len, 1);
        assert_eq!(w.ends, [inc(0, 7), inc(2, 6)]);
        assert_eq!(g.wiggly_count(), 2);
        // decomposition of the condensed graph: ep then tail, length 1+3=4
        let q = ComplexPath::new(vec![
            PathElem::Vertex(0),
            PathElem::wiggly(ep, 0),
            PathElem::Vertex(2),
            PathElem::wiggly(tail, 0),
            PathElem::Vertex(3),
        ]);
        assert!(q.validate(&g).ok());
        assert!(q.is_ell_path(&g));
        let mut decomp = vec![q];
        lift_decomposition(&mut g, &mut decomp, &log).unwrap();
        assert_eq!(g.wiggly_count(), 3);
        assert!(g.wiggly(ep).is_none());
        assert_eq!(decomp.len(), 1);
        assert!(decomp[0].validate(&g).ok());
        assert!(decomp[0].is_ell_path(&g)); // 2+3+3 = 8 = 0 mod 4
        assert_eq!(decomp[0].items().len(), 3);
    }

    fn loopy_vertex(ell: u64, pairs: &[(Index, Index)]) -> (ComplexHypergraph, Vec<ItemId>) {
        let mut g = ComplexHypergraph::new(ell);
        g.add_vertex(0);
        let ids = pairs
            .iter()
            .map(|&(i, j)| {
                g.add_wiggly(WigglyEdge { ends: [inc(0, i), inc(0, j)], len: 1 }).unwrap()
            })
            .collect();
        (g, ids)
    }

    #[test]
    fn universal_loop_path_hits_residue_and_ends() {
        let pairs: Vec<(Index, Index)> = (0..12).map(|k| (2 * k + 1, 2 * k + 2)).collect();
        let (g, _) = loopy_vertex(3, &pairs);
        for want in 0..3u64 {
            let mut used = BTreeSet::new();
            let p = universal_loop_path(&g, 0, want, &mut used).unwrap();
            assert_eq!(p.length(&g) % 3, want % 3);
            assert!(p.edge_count() as u64 <= 3 + 4);
            assert!(p.initial_index(&g) == WILDCARD || p.is_universal_at_start(&g));
            assert!(p.terminal_index(&g) == WILDCARD || p.is_universal_at_end(&g));
        }
    }

    #[test]
    fn singleton_concat_uses_every_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..30 {
            let n = 6 + (trial % 10);
            let mut pairs = Vec::new();
            for _ in 0..n {
                // distinct indices or wildcard keeps iota small
                let i = rng.gen_range(1..5);
                let j = if rng.gen_bool(0.3) { -1 } else { rng.gen_range(1..5) };
                pairs.push((i, j));
            }
            let (g, _) = loopy_vertex(5, &pairs);
            if 2 * g.iota() > g.wiggly_count() as u32 {
                continue;
            }
            let p = singleton_loop_concat(&g).expect("concat");
            assert!(p.validate(&g).ok());
            assert_eq!(p.items().len(), g.wiggly_count());
        }
    }

    #[test]
    fn singleton_concat_same_index_pairs() {
        // a dominant equal-index group: exercises the interleaving with padding
        let mut pairs = vec![(1, 1), (1, 1), (1, 1)];
        for k in 0..9i32 {
            pairs.push((2 * k + 2, 2 * k + 3));
        }
        let (g, _) = loopy_vertex(4, &pairs);
        assert!(2 * g.iota() <= g.wiggly_count() as u32);
        let p = singleton_loop_concat(&g).expect("concat");
        assert_eq!(p.items().len(), pairs.len());
    }

    #[test]
    fn condense_to_unit_group2_singleton_style() {
        // one hub vertex with lots of unit loops and two long non-loops: the
        // hub lands in group 2 and both non-loops become unit with wildcard
        let mut g = ComplexHypergraph::new(3);
        for v in 0..3 {
            g.add_vertex(v);
        }
        for k in 0..40i32 {
            g.add_wiggly(WigglyEdge { ends: [inc(0, 2 * k + 10), inc(0, 2 * k + 11)], len: 1 })
                .unwrap();
        }
        let e1 = g
            .add_wiggly(WigglyEdge { ends: [inc(1, 3), inc(0, 4)], len: 5 })
            .unwrap();
        let e2 = g
            .add_wiggly(WigglyEdge { ends: [inc(2, 3), inc(0, 5)], len: 7 })
            .unwrap();
        g.add_ordinary(1, 2).unwrap();
        let out = condense_to_unit(&g, false).unwrap();
        let h = &out.graph;
        // hub: degree dropped by loop degree, every edge unit/wildcard at it
        let before = g.degrees(0).unwrap();
        let after = h.degrees(0).unwrap();
        assert_eq!(after.deg, before.deg - before.ldeg);
        for id in h.items_at(0) {
            let w = h.wiggly(id).unwrap();
            assert!(w.is_unit());
            for e in &w.ends {
                if e.vertex == 0 {
                    assert_eq!(e.index, WILDCARD);
                }
            }
        }
        // far endpoints keep their index
        for (orig, far) in [(e1, 1), (e2, 2)] {
            assert!(h.wiggly(orig).is_none());
            let p = h.degrees(far).unwrap();
            assert_eq!(p.deg, g.degrees(far).unwrap().deg);
            let _ = orig;
        }
        assert!(!out.log.steps.is_empty());
    }

    #[test]
    fn condense_to_unit_group1_pads_long_edges() {
        // vertex 0 has plenty of non-loops plus unit loops for padding
        let mut g = ComplexHypergraph::new(3);
        for v in 0..6 {
            g.add_vertex(v);
        }
        for u in 1..6 {
            g.add_ordinary(0, u).unwrap();
        }
        let long = g
            .add_wiggly(WigglyEdge { ends: [inc(1, 2), inc(0, 3)], len: 2 })
            .unwrap();
        for k in 0..6i32 {
            g.add_wiggly(WigglyEdge { ends: [inc(0, 2 * k + 10), inc(0, 2 * k + 11)], len: 1 })
                .unwrap();
        }
        let out = condense_to_unit(&g, false).unwrap();
        let h = &out.graph;
        assert!(h.wiggly(long).is_none());
        // all wiggly edges at 0 are unit now
        for id in h.items_at(0) {
            if let Some(w) = h.wiggly(id) {
                assert!(w.is_unit());
                assert!(!w.is_loop());
            }
        }
        let after = h.degrees(0).unwrap();
        let before = g.degrees(0).unwrap();
        assert_eq!(after.deg, before.deg - before.ldeg);
        assert!(4 * after.udeg >= 3 * after.deg);
    }
}
