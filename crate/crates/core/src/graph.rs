//! Metric graph model: vertices, internal edges carrying lengths, external
//! half-line edges, and canonical point addressing.
//!
//! Edges are stored with dense indices: external edges first, in the order
//! they were declared, then internal edges. This ordering fixes the layout of
//! the trace space used by [`crate::vertex`].

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense vertex index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VertexId(pub usize);

/// Dense edge index (externals first, then internals).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeKind {
    External,
    Internal,
}

/// Which end of an edge a quantity refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum End {
    /// Coordinate 0, the initial vertex.
    Initial,
    /// Coordinate `a_i`, the final vertex of an internal edge.
    Final,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub name: String,
    pub kind: EdgeKind,
    /// Initial vertex (the only vertex of an external edge).
    pub from: VertexId,
    /// Final vertex; `None` for external edges.
    pub to: Option<VertexId>,
    /// `f64::INFINITY` for external edges.
    pub length: f64,
}

impl Edge {
    pub fn is_external(&self) -> bool {
        self.kind == EdgeKind::External
    }

    pub fn vertex_at(&self, end: End) -> Option<VertexId> {
        match end {
            End::Initial => Some(self.from),
            End::Final => self.to,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("edge `{0}` is a tadpole (initial and final vertex coincide)")]
    TadpoleEdge(String),
    #[error("graph is disconnected: vertex `{0}` is unreachable")]
    Disconnected(String),
    #[error("edge `{edge}` has non-positive or non-finite length {length}")]
    NonpositiveLength { edge: String, length: f64 },
    #[error("edge `{edge}` references unknown vertex `{vertex}`")]
    DanglingEdgeReference { edge: String, vertex: String },
    #[error("vertex `{0}` has no incident edge")]
    IsolatedVertex(String),
    #[error("duplicate identifier `{0}`")]
    DuplicateId(String),
    #[error("graph has no vertices")]
    Empty,
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("unknown edge `{0}`")]
    UnknownEdge(String),
    #[error("coordinate {x} outside edge `{edge}`")]
    PointOutOfRange { edge: String, x: f64 },
}

/// Structured description from which a [`MetricGraph`] is built.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphDescription {
    pub vertices: Vec<String>,
    /// `(id, initial vertex, final vertex, length)`
    pub internal: Vec<(String, String, String, f64)>,
    /// `(id, incident vertex)`
    pub external: Vec<(String, String)>,
}

/// A validated, immutable metric graph.
#[derive(Clone, Debug)]
pub struct MetricGraph {
    vertex_names: Vec<String>,
    edges: Vec<Edge>,
    n_external: usize,
    vertex_index: HashMap<String, VertexId>,
    edge_index: HashMap<String, EdgeId>,
    /// Incident `(edge, end)` pairs per vertex, sorted by edge index.
    incidence: Vec<Vec<(EdgeId, End)>>,
}

/// Validate a description and build the graph.
pub fn build_graph(desc: &GraphDescription) -> Result<MetricGraph, GraphError> {
    MetricGraph::new(desc)
}

impl MetricGraph {
    pub fn new(desc: &GraphDescription) -> Result<Self, GraphError> {
        if desc.vertices.is_empty() {
            return Err(GraphError::Empty);
        }
        let mut vertex_index = HashMap::new();
        for (i, name) in desc.vertices.iter().enumerate() {
            if vertex_index.insert(name.clone(), VertexId(i)).is_some() {
                return Err(GraphError::DuplicateId(name.clone()));
            }
        }
        let lookup = |edge: &str, v: &str| {
            vertex_index
                .get(v)
                .copied()
                .ok_or_else(|| GraphError::DanglingEdgeReference {
                    edge: edge.to_string(),
                    vertex: v.to_string(),
                })
        };

        let mut edges = Vec::with_capacity(desc.external.len() + desc.internal.len());
        for (name, v) in &desc.external {
            edges.push(Edge {
                name: name.clone(),
                kind: EdgeKind::External,
                from: lookup(name, v)?,
                to: None,
                length: f64::INFINITY,
            });
        }
        for (name, from, to, length) in &desc.internal {
            let from = lookup(name, from)?;
            let to = lookup(name, to)?;
            if from == to {
                return Err(GraphError::TadpoleEdge(name.clone()));
            }
            if !(length.is_finite() && *length > 0.0) {
                return Err(GraphError::NonpositiveLength {
                    edge: name.clone(),
                    length: *length,
                });
            }
            edges.push(Edge {
                name: name.clone(),
                kind: EdgeKind::Internal,
                from,
                to: Some(to),
                length: *length,
            });
        }

        let mut edge_index = HashMap::new();
        for (i, e) in edges.iter().enumerate() {
            if vertex_index.contains_key(&e.name) || edge_index.insert(e.name.clone(), EdgeId(i)).is_some() {
                return Err(GraphError::DuplicateId(e.name.clone()));
            }
        }

        let mut incidence = vec![Vec::new(); desc.vertices.len()];
        for (i, e) in edges.iter().enumerate() {
            incidence[e.from.0].push((EdgeId(i), End::Initial));
            if let Some(to) = e.to {
                incidence[to.0].push((EdgeId(i), End::Final));
            }
        }
        for (v, inc) in incidence.iter().enumerate() {
            if inc.is_empty() {
                return Err(GraphError::IsolatedVertex(desc.vertices[v].clone()));
            }
        }

        let g = MetricGraph {
            vertex_names: desc.vertices.clone(),
            n_external: desc.external.len(),
            edges,
            vertex_index,
            edge_index,
            incidence,
        };
        g.check_connected()?;
        Ok(g)
    }

    fn check_connected(&self) -> Result<(), GraphError> {
        let mut seen = vec![false; self.vertex_count()];
        let mut queue = VecDeque::from([VertexId(0)]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for w in self.neighbors(v) {
                if !seen[w.0] {
                    seen[w.0] = true;
                    queue.push_back(w);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(v) => Err(GraphError::Disconnected(self.vertex_names[v].clone())),
            None => Ok(()),
        }
    }

    fn neighbors(&self, v: VertexId) -> impl Iterator<Item = VertexId> + '_ {
        self.incidence[v.0].iter().filter_map(move |&(e, end)| {
            let edge = &self.edges[e.0];
            match end {
                End::Initial => edge.to,
                End::Final => Some(edge.from),
            }
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_names.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn external_count(&self) -> usize {
        self.n_external
    }

    pub fn internal_count(&self) -> usize {
        self.edges.len() - self.n_external
    }

    /// `E = ∅`.
    pub fn is_compact(&self) -> bool {
        self.n_external == 0
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> {
        (0..self.vertex_count()).map(VertexId)
    }

    pub fn edge_ids(&self) -> impl Iterator<Item = EdgeId> {
        (0..self.edge_count()).map(EdgeId)
    }

    pub fn external_edges(&self) -> impl Iterator<Item = EdgeId> {
        (0..self.n_external).map(EdgeId)
    }

    pub fn internal_edges(&self) -> impl Iterator<Item = EdgeId> {
        (self.n_external..self.edge_count()).map(EdgeId)
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.edges[e.0]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex_name(&self, v: VertexId) -> &str {
        &self.vertex_names[v.0]
    }

    pub fn vertex_id(&self, name: &str) -> Result<VertexId, GraphError> {
        self.vertex_index
            .get(name)
            .copied()
            .ok_or_else(|| GraphError::UnknownVertex(name.to_string()))
    }

    pub fn edge_id(&self, name: &str) -> Result<EdgeId, GraphError> {
        self.edge_index
            .get(name)
            .copied()
            .ok_or_else(|| GraphError::UnknownEdge(name.to_string()))
    }

    /// Position of an internal edge among the internal edges.
    pub fn internal_position(&self, e: EdgeId) -> Option<usize> {
        (e.0 >= self.n_external).then(|| e.0 - self.n_external)
    }

    pub fn length(&self, e: EdgeId) -> f64 {
        self.edges[e.0].length
    }

    /// Sum of internal edge lengths.
    pub fn internal_length(&self) -> f64 {
        self.internal_edges().map(|e| self.length(e)).sum()
    }

    /// `(edge, end)` pairs incident with `v`, sorted by edge index.
    pub fn incident(&self, v: VertexId) -> &[(EdgeId, End)] {
        &self.incidence[v.0]
    }

    pub fn degree(&self, v: VertexId) -> usize {
        self.incidence[v.0].len()
    }

    /// Degree by vertex name.
    pub fn degree_of(&self, name: &str) -> Result<usize, GraphError> {
        Ok(self.degree(self.vertex_id(name)?))
    }

    /// Vertices sharing an internal edge with `v`.
    pub fn star(&self, v: VertexId) -> BTreeSet<VertexId> {
        self.neighbors(v).collect()
    }

    pub fn star_of(&self, name: &str) -> Result<BTreeSet<VertexId>, GraphError> {
        Ok(self.star(self.vertex_id(name)?))
    }

    /// Tolerance used when comparing lengths and coordinates.
    pub fn slack(&self) -> f64 {
        1e-12 * self.internal_length().max(1.0)
    }

    /// Canonical point on edge `e` at coordinate `x`.
    pub fn point(&self, e: EdgeId, x: f64) -> Result<GraphPoint, GraphError> {
        let edge = self
            .edges
            .get(e.0)
            .ok_or_else(|| GraphError::UnknownEdge(format!("#{}", e.0)))?;
        let slack = self.slack();
        if !x.is_finite() || x < -slack || x > edge.length + slack {
            return Err(GraphError::PointOutOfRange {
                edge: edge.name.clone(),
                x,
            });
        }
        if x <= slack {
            return Ok(self.vertex_point(edge.from));
        }
        if let Some(to) = edge.to {
            if x >= edge.length - slack {
                return Ok(self.vertex_point(to));
            }
        }
        Ok(GraphPoint { edge: e, x })
    }

    /// Parse `EDGE:COORD`.
    pub fn parse_point(&self, s: &str) -> Result<GraphPoint, GraphError> {
        let (name, coord) = s
            .rsplit_once(':')
            .ok_or_else(|| GraphError::UnknownEdge(s.to_string()))?;
        let e = self.edge_id(name)?;
        let x: f64 = coord.trim().parse().map_err(|_| GraphError::PointOutOfRange {
            edge: name.to_string(),
            x: f64::NAN,
        })?;
        self.point(e, x)
    }

    /// Canonical representative of a vertex: its incident edge with the
    /// smallest index, at the matching endpoint coordinate.
    pub fn vertex_point(&self, v: VertexId) -> GraphPoint {
        let (e, end) = self.incidence[v.0][0];
        let x = match end {
            End::Initial => 0.0,
            End::Final => self.edges[e.0].length,
        };
        GraphPoint { edge: e, x }
    }

    /// The vertex a point sits on, if any.
    pub fn point_vertex(&self, p: GraphPoint) -> Option<VertexId> {
        let edge = &self.edges[p.edge.0];
        if p.x == 0.0 {
            Some(edge.from)
        } else if edge.to.is_some() && p.x == edge.length {
            edge.to
        } else {
            None
        }
    }

    /// Description that rebuilds this graph.
    pub fn to_description(&self) -> GraphDescription {
        GraphDescription {
            vertices: self.vertex_names.clone(),
            internal: self
                .internal_edges()
                .map(|e| {
                    let edge = self.edge(e);
                    (
                        edge.name.clone(),
                        self.vertex_names[edge.from.0].clone(),
                        self.vertex_names[edge.to.expect("internal").0].clone(),
                        edge.length,
                    )
                })
                .collect(),
            external: self
                .external_edges()
                .map(|e| {
                    let edge = self.edge(e);
                    (edge.name.clone(), self.vertex_names[edge.from.0].clone())
                })
                .collect(),
        }
    }
}

/// A point `(edge, x)` of the metric graph, always stored canonically.
///
/// Vertices are represented on their lowest-indexed incident edge, so two
/// coordinate representations of the same vertex compare equal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphPoint {
    edge: EdgeId,
    x: f64,
}

impl GraphPoint {
    pub fn edge(&self) -> EdgeId {
        self.edge
    }

    pub fn x(&self) -> f64 {
        self.x
    }
}

impl fmt::Display for GraphPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}:{}", self.edge.0, self.x)
    }
}

/// Random connected graphs for property suites.
pub mod generate {
    use super::*;
    use rand::Rng;

    /// A random connected graph with `n_vertices` vertices, `n_internal`
    /// internal edges (`n_internal >= n_vertices - 1`) and `n_external`
    /// external edges. Lengths are uniform in `lengths`.
    pub fn random_graph<R: Rng>(
        rng: &mut R,
        n_vertices: usize,
        n_internal: usize,
        n_external: usize,
        lengths: (f64, f64),
    ) -> MetricGraph {
        assert!(n_vertices >= 1);
        assert!(n_vertices == 1 || n_internal + 1 >= n_vertices);
        assert!(n_vertices > 1 || n_internal == 0);
        let vertices: Vec<String> = (0..n_vertices).map(|i| format!("v{i}")).collect();
        let mut internal = Vec::new();
        // Spanning tree first.
        for i in 1..n_vertices {
            let j = rng.gen_range(0..i);
            let (a, b) = if rng.gen_bool(0.5) { (i, j) } else { (j, i) };
            internal.push((a, b));
        }
        while internal.len() < n_internal {
            let a = rng.gen_range(0..n_vertices);
            let b = rng.gen_range(0..n_vertices);
            if a != b {
                internal.push((a, b));
            }
        }
        let desc = GraphDescription {
            internal: internal
                .into_iter()
                .enumerate()
                .map(|(k, (a, b))| {
                    (
                        format!("i{k}"),
                        vertices[a].clone(),
                        vertices[b].clone(),
                        rng.gen_range(lengths.0..lengths.1),
                    )
                })
                .collect(),
            external: (0..n_external)
                .map(|k| (format!("e{k}"), vertices[rng.gen_range(0..n_vertices)].clone()))
                .collect(),
            vertices,
        };
        let mut desc = desc;
        // A single vertex without internal edges needs at least one external edge.
        if n_vertices == 1 && desc.external.is_empty() {
            desc.external.push(("e0".into(), "v0".into()));
        }
        MetricGraph::new(&desc).expect("generator produces valid graphs")
    }
}

/// Two-loop graph: internal `i1`, `i2` from `v1` to `v2` of length `a`,
/// external `e1` at `v1` and `e2` at `v2`.
pub fn two_loop_graph(a: f64) -> MetricGraph {
    MetricGraph::new(&GraphDescription {
        vertices: vec!["v1".into(), "v2".into()],
        internal: vec![
            ("i1".into(), "v1".into(), "v2".into(), a),
            ("i2".into(), "v1".into(), "v2".into(), a),
        ],
        external: vec![("e1".into(), "v1".into()), ("e2".into(), "v2".into())],
    })
    .expect("valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn star1() -> MetricGraph {
        MetricGraph::new(&GraphDescription {
            vertices: vec!["v".into()],
            internal: vec![],
            external: vec![("e".into(), "v".into())],
        })
        .unwrap()
    }

    #[test]
    fn two_loop_degrees_and_star() {
        let g = two_loop_graph(1.0);
        assert_eq!(g.degree_of("v1").unwrap(), 3);
        assert_eq!(g.degree_of("v2").unwrap(), 3);
        let v2 = g.vertex_id("v2").unwrap();
        assert_eq!(g.star_of("v1").unwrap(), BTreeSet::from([v2]));
        // externals first in the dense layout
        assert_eq!(g.edge_id("e1").unwrap(), EdgeId(0));
        assert_eq!(g.edge_id("i1").unwrap(), EdgeId(2));
    }

    #[test]
    fn single_external_star() {
        let g = star1();
        assert_eq!(g.degree(VertexId(0)), 1);
        assert!(g.star(VertexId(0)).is_empty());
    }

    #[test]
    fn rejects_invalid() {
        let mut d = two_loop_graph(1.0).to_description();
        d.internal[0].2 = "v1".into();
        assert_eq!(build_graph(&d).unwrap_err(), GraphError::TadpoleEdge("i1".into()));

        let mut d = two_loop_graph(1.0).to_description();
        d.internal[1].3 = 0.0;
        assert!(matches!(build_graph(&d), Err(GraphError::NonpositiveLength { .. })));

        let mut d = two_loop_graph(1.0).to_description();
        d.external[0].1 = "nowhere".into();
        assert!(matches!(build_graph(&d), Err(GraphError::DanglingEdgeReference { .. })));

        let d = GraphDescription {
            vertices: vec!["a".into(), "b".into()],
            internal: vec![],
            external: vec![("e".into(), "a".into()), ("f".into(), "b".into())],
        };
        assert_eq!(build_graph(&d).unwrap_err(), GraphError::Disconnected("b".into()));

        let d = GraphDescription {
            vertices: vec!["a".into(), "b".into()],
            internal: vec![],
            external: vec![("e".into(), "a".into())],
        };
        assert_eq!(build_graph(&d).unwrap_err(), GraphError::IsolatedVertex("b".into()));
    }

    #[test]
    fn unknown_vertex() {
        let g = two_loop_graph(1.0);
        assert_eq!(g.degree_of("v9"), Err(GraphError::UnknownVertex("v9".into())));
    }

    #[test]
    fn vertex_canonicalization() {
        let g = two_loop_graph(2.0);
        let i1 = g.edge_id("i1").unwrap();
        let i2 = g.edge_id("i2").unwrap();
        let e2 = g.edge_id("e2").unwrap();
        // v2 as end of i1, end of i2, start of e2
        let a = g.point(i1, 2.0).unwrap();
        let b = g.point(i2, 2.0).unwrap();
        let c = g.point(e2, 0.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(b, c);
        assert_eq!(a.edge(), e2);
        assert_eq!(g.point(a.edge(), a.x()).unwrap(), a);
        assert!(g.point(i1, 2.5).is_err());
        assert_eq!(g.point_vertex(a), Some(g.vertex_id("v2").unwrap()));
    }

    #[test]
    fn random_graph_degree_sum_and_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let g = generate::random_graph(&mut rng, 6, 20 - 4, 4, (0.5, 2.0));
            let total: usize = g.vertices().map(|v| g.degree(v)).sum();
            assert_eq!(total, g.external_count() + 2 * g.internal_count());
            for v in g.vertices() {
                // independent recount from the edge list
                let count = g
                    .edges()
                    .iter()
                    .map(|e| (e.from == v) as usize + (e.to == Some(v)) as usize)
                    .sum::<usize>();
                assert_eq!(g.degree(v), count);
                let brute: BTreeSet<VertexId> = g
                    .edges()
                    .iter()
                    .filter_map(|e| match e.to {
                        Some(to) if e.from == v => Some(to),
                        Some(to) if to == v => Some(e.from),
                        _ => None,
                    })
                    .collect();
                assert_eq!(g.star(v), brute);
            }
        }
    }
}
