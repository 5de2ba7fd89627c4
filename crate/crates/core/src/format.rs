//! Plain-text serialization of complex hypergraphs, paths, path-graphs and
//! decomposition certificates.
//!
//! Graph files are line-oriented: a header `complexgraph 1 ell=<l>` followed
//! by one record per line: `v <id>`, `o <u> <v>`, `w <u> <iu> <v> <iv> <alpha>`,
//! `h <u> <iu> <v> <iv> <x> <ix> <alpha>`, `s <u> <iu> <alpha>`.  Item ids are
//! implicit: records are numbered 0, 1, 2, ... in file order.  The writer
//! always emits ordinary edges first, then wiggly edges, hyperedges and stubs,
//! each group in ascending id order, so writing and re-parsing renumbers items
//! canonically.
//!
//! Path files reference those canonical ids with whitespace-separated tokens
//! mirroring the element order: `v<id>` (vertex), `o<id>` (ordinary edge),
//! `w<id>.<slot>` (wiggly edge entered through incidence `slot`), `s<id>`
//! (stub).  A path-graph file starts with `pg <n_paths>`, a certificate file
//! with `cert <n_paths>`; either is followed by one path per line.

use std::collections::BTreeMap;
use std::fmt;

use crate::graph::{
    ComplexHypergraph, Hyperedge3, Incidence, Index, ItemId, Stub, VertexId, WigglyEdge,
};
use crate::path::{ComplexPath, PathElem};

/// A parse failure, carrying the 1-based line number where it occurred.
#[derive(Debug, Clone)]
pub struct ParseError {
    pub line: usize,
    pub msg: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.msg)
    }
}

impl std::error::Error for ParseError {}

fn err(line: usize, msg: impl Into<String>) -> ParseError {
    ParseError { line, msg: msg.into() }
}

/// Maps every item id of `g` to its canonical id: the position the item takes
/// in a freshly written file (ordinary edges first, then wiggly, hyper, stub,
/// each in ascending id order).
pub fn canonical_ids(g: &ComplexHypergraph) -> BTreeMap<ItemId, ItemId> {
    let mut map = BTreeMap::new();
    let mut next = 0u32;
    for id in g
        .ordinary_ids()
        .collect::<Vec<_>>()
        .into_iter()
        .chain(g.wiggly_ids().collect::<Vec<_>>())
        .chain(g.hyper_ids().collect::<Vec<_>>())
        .chain(g.stub_ids().collect::<Vec<_>>())
    {
        map.insert(id, ItemId(next));
        next += 1;
    }
    map
}

/// Serializes `g` in the canonical record order.
pub fn write_graph(g: &ComplexHypergraph) -> String {
    let mut out = format!("complexgraph 1 ell={}\n", g.ell());
    for v in g.vertices() {
        out.push_str(&format!("v {v}\n"));
    }
    for id in g.ordinary_ids().collect::<Vec<_>>() {
        let (u, v) = g.ordinary(id).unwrap();
        out.push_str(&format!("o {u} {v}\n"));
    }
    for id in g.wiggly_ids().collect::<Vec<_>>() {
        let e = g.wiggly(id).unwrap();
        out.push_str(&format!(
            "w {} {} {} {} {}\n",
            e.ends[0].vertex, e.ends[0].index, e.ends[1].vertex, e.ends[1].index, e.len
        ));
    }
    for id in g.hyper_ids().collect::<Vec<_>>() {
        let h = g.hyperedge(id).unwrap();
        out.push_str(&format!(
            "h {} {} {} {} {} {} {}\n",
            h.ends[0].vertex,
            h.ends[0].index,
            h.ends[1].vertex,
            h.ends[1].index,
            h.ends[2].vertex,
            h.ends[2].index,
            h.len
        ));
    }
    for id in g.stub_ids().collect::<Vec<_>>() {
        let s = g.stub(id).unwrap();
        out.push_str(&format!("s {} {} {}\n", s.end.vertex, s.end.index, s.len));
    }
    out
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T, ParseError> {
    tok.parse::<T>().map_err(|_| err(line, format!("bad {what} `{tok}`")))
}

/// Parses a graph file.  Item ids come out 0, 1, 2, ... in record order, which
/// matches `canonical_ids` of the parsed graph.
pub fn parse_graph(text: &str) -> Result<ComplexHypergraph, ParseError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| err(1, "empty input"))?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 3 || toks[0] != "complexgraph" || toks[1] != "1" {
        return Err(err(1, "expected header `complexgraph 1 ell=<l>`"));
    }
    let ell: u64 = toks[2]
        .strip_prefix("ell=")
        .and_then(|s| s.parse().ok())
        .filter(|&e| e >= 1)
        .ok_or_else(|| err(1, "bad ell field in header"))?;
    let mut g = ComplexHypergraph::new(ell);
    for (i, raw) in lines {
        let ln = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let t: Vec<&str> = line.split_whitespace().collect();
        let need = |n: usize| -> Result<(), ParseError> {
            if t.len() != n + 1 {
                Err(err(ln, format!("record `{}` takes {} fields", t[0], n)))
            } else {
                Ok(())
            }
        };
        let vertex = |k: usize| -> Result<VertexId, ParseError> {
            let v: VertexId = parse_num(t[k], ln, "vertex id")?;
            if !g.has_vertex(v) {
                return Err(err(ln, format!("undeclared vertex {v}")));
            }
            Ok(v)
        };
        match t[0] {
            "v" => {
                need(1)?;
                let v: VertexId = parse_num(t[1], ln, "vertex id")?;
                if g.has_vertex(v) {
                    return Err(err(ln, format!("duplicate vertex {v}")));
                }
                g.add_vertex(v);
            }
            "o" => {
                need(2)?;
                let (u, v) = (vertex(1)?, vertex(2)?);
                g.add_ordinary(u, v).map_err(|e| err(ln, e.to_string()))?;
            }
            "w" => {
                need(5)?;
                let (u, v) = (vertex(1)?, vertex(3)?);
                let iu: Index = parse_num(t[2], ln, "index")?;
                let iv: Index = parse_num(t[4], ln, "index")?;
                let len: u64 = parse_num(t[5], ln, "length")?;
                g.add_wiggly(WigglyEdge {
                    ends: [Incidence::new(u, iu), Incidence::new(v, iv)],
                    len,
                })
                .map_err(|e| err(ln, e.to_string()))?;
            }
            "h" => {
                need(7)?;
                let (u, v, x) = (vertex(1)?, vertex(3)?, vertex(5)?);
                let iu: Index = parse_num(t[2], ln, "index")?;
                let iv: Index = parse_num(t[4], ln, "index")?;
                let ix: Index = parse_num(t[6], ln, "index")?;
                let len: u64 = parse_num(t[7], ln, "length")?;
                g.add_hyper(Hyperedge3 {
                    ends: [
                        Incidence::new(u, iu),
                        Incidence::new(v, iv),
                        Incidence::new(x, ix),
                    ],
                    len,
                })
                .map_err(|e| err(ln, e.to_string()))?;
            }
            "s" => {
                need(3)?;
                let u = vertex(1)?;
                let iu: Index = parse_num(t[2], ln, "index")?;
                let len: u64 = parse_num(t[3], ln, "length")?;
                g.add_stub(Stub { end: Incidence::new(u, iu), len })
                    .map_err(|e| err(ln, e.to_string()))?;
            }
            other => return Err(err(ln, format!("unknown record `{other}`"))),
        }
    }
    Ok(g)
}

/// Renders one path as a token sequence, translating item ids through `map`
/// (pass the identity map, or `canonical_ids` of the graph the file pairs
/// with).
pub fn write_path(p: &ComplexPath, map: &BTreeMap<ItemId, ItemId>) -> String {
    let mut toks = Vec::new();
    for e in p.elems() {
        match *e {
            PathElem::Vertex(v) => toks.push(format!("v{v}")),
            PathElem::Ordinary(id) => toks.push(format!("o{}", map[&id].0)),
            PathElem::Wiggly { id, first_slot } => {
                toks.push(format!("w{}.{}", map[&id].0, first_slot))
            }
            PathElem::Stub(id) => toks.push(format!("s{}", map[&id].0)),
        }
    }
    toks.join(" ")
}

/// Serializes a collection of paths under the given header keyword
/// (`"pg"` for path-graphs, `"cert"` for decomposition certificates), with
/// item ids canonical for `g`.
pub fn write_paths(g: &ComplexHypergraph, paths: &[ComplexPath], header: &str) -> String {
    let map = canonical_ids(g);
    let mut out = format!("{header} {}\n", paths.len());
    for p in paths {
        out.push_str(&write_path(p, &map));
        out.push('\n');
    }
    out
}

fn parse_path_line(g: &ComplexHypergraph, line: &str, ln: usize) -> Result<ComplexPath, ParseError> {
    let mut elems = Vec::new();
    for tok in line.split_whitespace() {
        let (kind, rest) = tok.split_at(1);
        match kind {
            "v" => {
                let v: VertexId = parse_num(rest, ln, "vertex id")?;
                if !g.has_vertex(v) {
                    return Err(err(ln, format!("unknown vertex {v}")));
                }
                elems.push(PathElem::Vertex(v));
            }
            "o" => {
                let id = ItemId(parse_num(rest, ln, "item id")?);
                if g.ordinary(id).is_none() {
                    return Err(err(ln, format!("no ordinary edge {}", id.0)));
                }
                elems.push(PathElem::Ordinary(id));
            }
            "w" => {
                let (a, b) = rest
                    .split_once('.')
                    .ok_or_else(|| err(ln, format!("wiggly token `{tok}` needs `.slot`")))?;
                let id = ItemId(parse_num(a, ln, "item id")?);
                let slot: u8 = parse_num(b, ln, "slot")?;
                if g.wiggly(id).is_none() || slot > 1 {
                    return Err(err(ln, format!("bad wiggly token `{tok}`")));
                }
                elems.push(PathElem::Wiggly { id, first_slot: slot });
            }
            "s" => {
                let id = ItemId(parse_num(rest, ln, "item id")?);
                if g.stub(id).is_none() {
                    return Err(err(ln, format!("no stub {}", id.0)));
                }
                elems.push(PathElem::Stub(id));
            }
            _ => return Err(err(ln, format!("unknown token `{tok}`"))),
        }
    }
    if elems.is_empty() {
        return Err(err(ln, "empty path line"));
    }
    Ok(ComplexPath::new(elems))
}

/// Parses a path file with the given header keyword against a graph whose
/// item ids are canonical (i.e. a graph from `parse_graph`).
pub fn parse_paths(
    g: &ComplexHypergraph,
    text: &str,
    header: &str,
) -> Result<Vec<ComplexPath>, ParseError> {
    let mut paths = Vec::new();
    let mut declared = None;
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if declared.is_none() {
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 2 || t[0] != header {
                return Err(err(ln, format!("expected header `{header} <n_paths>`")));
            }
            declared = Some(parse_num::<usize>(t[1], ln, "path count")?);
            continue;
        }
        paths.push(parse_path_line(g, line, ln)?);
    }
    let declared = declared.ok_or_else(|| err(1, "missing header"))?;
    if paths.len() != declared {
        return Err(err(
            text.lines().count(),
            format!("header declares {declared} paths, found {}", paths.len()),
        ));
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::WILDCARD;

    fn sample() -> ComplexHypergraph {
        let mut g = ComplexHypergraph::new(3);
        for v in 0..4 {
            g.add_vertex(v);
        }
        g.add_ordinary(0, 1).unwrap();
        g.add_ordinary(1, 2).unwrap();
        g.add_wiggly(WigglyEdge {
            ends: [Incidence::new(2, 4), Incidence::new(3, WILDCARD)],
            len: 5,
        })
        .unwrap();
        g.add_hyper(Hyperedge3 {
            ends: [Incidence::new(0, 1), Incidence::new(1, 2), Incidence::new(3, 3)],
            len: 4,
        })
        .unwrap();
        g.add_stub(Stub { end: Incidence::new(0, 7), len: 2 }).unwrap();
        g
    }

    #[test]
    fn graph_round_trip_is_byte_identical() {
        let g = sample();
        let text = write_graph(&g);
        let h = parse_graph(&text).unwrap();
        assert_eq!(write_graph(&h), text);
        assert_eq!(h.ordinary_count(), 2);
        assert_eq!(h.wiggly_count(), 1);
        assert_eq!(h.hyper_count(), 1);
        assert_eq!(h.stub_count(), 1);
        assert_eq!(h.ell(), 3);
    }

    #[test]
    fn path_round_trip() {
        let g = sample();
        let text = write_graph(&g);
        let h = parse_graph(&text).unwrap();
        let p = ComplexPath::new(vec![
            PathElem::Vertex(0),
            PathElem::Ordinary(ItemId(0)),
            PathElem::Vertex(1),
            PathElem::Ordinary(ItemId(1)),
            PathElem::Vertex(2),
            PathElem::Wiggly { id: ItemId(2), first_slot: 0 },
            PathElem::Vertex(3),
        ]);
        assert!(p.validate(&h).ok());
        let out = write_paths(&h, std::slice::from_ref(&p), "cert");
        let back = parse_paths(&h, &out, "cert").unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].elems(), p.elems());
        assert_eq!(write_paths(&h, &back, "cert"), out);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let e = parse_graph("complexgraph 1 ell=2\nv 0\no 0 9\n").unwrap_err();
        assert_eq!(e.line, 3);
        let e = parse_graph("complexgraph 2 ell=2\n").unwrap_err();
        assert_eq!(e.line, 1);
        let g = sample();
        let e = parse_paths(&g, "cert 1\nq3\n", "cert").unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn writer_renumbers_after_removal() {
        let mut g = sample();
        g.remove_item(ItemId(0));
        let text = write_graph(&g);
        let h = parse_graph(&text).unwrap();
        assert_eq!(h.ordinary_count(), 1);
        let map = canonical_ids(&g);
        assert_eq!(map[&ItemId(1)], ItemId(0));
        assert_eq!(write_graph(&h), text);
    }
}
