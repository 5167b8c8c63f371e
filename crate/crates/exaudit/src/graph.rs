//! The join graph: every attribute pair a path is allowed to traverse.
//!
//! Nodes are schema-level attributes (`Table.Attr`); undirected edges come
//! from foreign keys, declared self-joins, and admin-declared relationships.
//! Paths traverse edges in either orientation, so the universe stores each
//! edge once in canonical endpoint order and exposes an adjacency view.

use crate::schema::{SchemaCatalog, TableId};

/// A schema-level attribute node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AttrRef {
    pub table: TableId,
    pub attr: u32,
}

/// Where an edge came from. Traversal treats all kinds alike except that
/// self-join edges are the only way to open a second instance of the log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    ForeignKey,
    SelfJoin,
    Declared,
}

/// Index of an edge in the universe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeId(pub u32);

/// An undirected equality edge between two attribute nodes. For self-join
/// edges both endpoints are the same attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JoinEdge {
    pub a: AttrRef,
    pub b: AttrRef,
    pub kind: EdgeKind,
}

/// One traversal direction of an edge: enter at `from`, leave at `to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrientedEdge {
    pub edge: EdgeId,
    pub from: AttrRef,
    pub to: AttrRef,
}

/// All edges of the join graph plus a sorted adjacency index.
#[derive(Debug, Clone)]
pub struct EdgeUniverse {
    edges: Vec<JoinEdge>,
    /// For each table, for each attribute: the oriented edges leaving it,
    /// sorted for deterministic candidate enumeration.
    adjacency: Vec<Vec<Vec<OrientedEdge>>>,
}

impl EdgeUniverse {
    pub fn edges(&self) -> &[JoinEdge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> &JoinEdge {
        &self.edges[id.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Oriented edges leaving an attribute node.
    pub fn leaving(&self, node: AttrRef) -> &[OrientedEdge] {
        &self.adjacency[node.table.idx()][node.attr as usize]
    }

    /// Find the edge joining an unordered pair of attribute nodes.
    pub fn find_edge(&self, a: AttrRef, b: AttrRef) -> Option<EdgeId> {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        self.edges
            .iter()
            .position(|e| e.a == lo && e.b == hi)
            .map(|i| EdgeId(i as u32))
    }

    /// Both orientations of an edge; self-join edges have a single one.
    pub fn orientations(&self, id: EdgeId) -> Vec<OrientedEdge> {
        let e = self.edge(id);
        if e.a == e.b {
            vec![OrientedEdge { edge: id, from: e.a, to: e.b }]
        } else {
            vec![
                OrientedEdge { edge: id, from: e.a, to: e.b },
                OrientedEdge { edge: id, from: e.b, to: e.a },
            ]
        }
    }
}

/// Build the edge universe for a catalog. Duplicate declarations of the same
/// unordered attribute pair collapse to one edge (first kind wins).
pub fn build_graph(catalog: &SchemaCatalog) -> EdgeUniverse {
    let mut edges: Vec<JoinEdge> = Vec::new();
    let mut seen: Vec<(AttrRef, AttrRef)> = Vec::new();

    let mut push = |a: AttrRef, b: AttrRef, kind: EdgeKind, edges: &mut Vec<JoinEdge>| {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if seen.contains(&(lo, hi)) {
            return;
        }
        seen.push((lo, hi));
        edges.push(JoinEdge { a: lo, b: hi, kind });
    };

    for &(a, b) in &catalog.fk_pairs {
        push(a, b, EdgeKind::ForeignKey, &mut edges);
    }
    for &a in &catalog.selfjoin_attrs {
        push(a, a, EdgeKind::SelfJoin, &mut edges);
    }
    for &(a, b) in &catalog.declared_pairs {
        push(a, b, EdgeKind::Declared, &mut edges);
    }

    // Stable edge ids: sort by canonical endpoints.
    edges.sort_by_key(|e| (e.a, e.b));

    let mut adjacency: Vec<Vec<Vec<OrientedEdge>>> = catalog
        .tables
        .iter()
        .map(|t| vec![Vec::new(); t.arity()])
        .collect();
    for (i, e) in edges.iter().enumerate() {
        let id = EdgeId(i as u32);
        adjacency[e.a.table.idx()][e.a.attr as usize].push(OrientedEdge { edge: id, from: e.a, to: e.b });
        if e.a != e.b {
            adjacency[e.b.table.idx()][e.b.attr as usize].push(OrientedEdge { edge: id, from: e.b, to: e.a });
        }
    }
    for table in &mut adjacency {
        for list in table {
            list.sort_by_key(|o| (o.edge, o.to));
        }
    }

    EdgeUniverse { edges, adjacency }
}
