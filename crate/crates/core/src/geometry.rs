//! Shortest-path metric, balls, boundary sets and critical times.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use serde::Serialize;
use thiserror::Error;

use crate::graph::{EdgeId, GraphPoint, MetricGraph, VertexId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("negative radius {0}")]
    NegativeRadius(f64),
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Distances from a point to every vertex.
#[derive(Clone, Debug)]
pub struct DistanceField<'g> {
    graph: &'g MetricGraph,
    source: GraphPoint,
    to_vertex: Vec<f64>,
}

/// Distance from `p` to every vertex: Dijkstra seeded with the offsets to
/// the endpoints of `p`'s host edge.
pub fn vertex_distances(g: &MetricGraph, p: GraphPoint) -> DistanceField<'_> {
    let mut dist = vec![f64::INFINITY; g.vertex_count()];
    let mut heap = BinaryHeap::new();
    let edge = g.edge(p.edge());
    let seed = |v: VertexId, d: f64, dist: &mut Vec<f64>, heap: &mut BinaryHeap<HeapItem>| {
        if d < dist[v.0] {
            dist[v.0] = d;
            heap.push(HeapItem(d, v.0));
        }
    };
    seed(edge.from, p.x(), &mut dist, &mut heap);
    if let Some(to) = edge.to {
        seed(to, edge.length - p.x(), &mut dist, &mut heap);
    }
    while let Some(HeapItem(d, v)) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &(e, _) in g.incident(VertexId(v)) {
            let edge = g.edge(e);
            let Some(to) = edge.to else { continue };
            let w = if edge.from.0 == v { to } else { edge.from };
            let nd = d + edge.length;
            if nd < dist[w.0] {
                dist[w.0] = nd;
                heap.push(HeapItem(nd, w.0));
            }
        }
    }
    DistanceField {
        graph: g,
        source: p,
        to_vertex: dist,
    }
}

/// Distance as a function of position along one edge, represented as the
/// minimum of linear branches `offset + slope·y` on `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Branch {
    offset: f64,
    /// +1: distance grows with the coordinate; -1: it shrinks.
    slope: f64,
    lo: f64,
    hi: f64,
}

impl Branch {
    fn at(&self, y: f64) -> f64 {
        self.offset + self.slope * y
    }
}

impl<'g> DistanceField<'g> {
    pub fn source(&self) -> GraphPoint {
        self.source
    }

    pub fn to_vertex(&self, v: VertexId) -> f64 {
        self.to_vertex[v.0]
    }

    fn branches(&self, e: EdgeId) -> Vec<Branch> {
        let edge = self.graph.edge(e);
        let a = edge.length;
        let mut out = vec![Branch {
            offset: self.to_vertex[edge.from.0],
            slope: 1.0,
            lo: 0.0,
            hi: a,
        }];
        if let Some(to) = edge.to {
            out.push(Branch {
                offset: self.to_vertex[to.0] + a,
                slope: -1.0,
                lo: 0.0,
                hi: a,
            });
        }
        if e == self.source.edge() {
            let x = self.source.x();
            out.push(Branch {
                offset: -x,
                slope: 1.0,
                lo: x,
                hi: a,
            });
            out.push(Branch {
                offset: x,
                slope: -1.0,
                lo: 0.0,
                hi: x,
            });
        }
        out
    }

    /// Distance from the source to `(e, y)`.
    pub fn at(&self, e: EdgeId, y: f64) -> f64 {
        let mut d = f64::INFINITY;
        for b in self.branches(e) {
            if y >= b.lo && y <= b.hi {
                d = d.min(b.at(y));
            }
        }
        d
    }

    pub fn to_point(&self, q: GraphPoint) -> f64 {
        self.at(q.edge(), q.x())
    }
}

/// Shortest-path distance between two points.
pub fn distance(g: &MetricGraph, p: GraphPoint, q: GraphPoint) -> f64 {
    vertex_distances(g, p).to_point(q)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BoundaryKind {
    Regular,
    Vertex,
    Coincidence,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundaryPoint {
    pub point: GraphPoint,
    pub kind: BoundaryKind,
    pub approach_count: u8,
    /// +1 when the ball lies on the increasing-coordinate side of the
    /// point, -1 when on the decreasing side, 0 for vertices and
    /// coincidence points.
    pub inward: i8,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_degenerate(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn contains(&self, y: f64) -> bool {
        y >= self.lo && y <= self.hi
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BallDecomposition {
    pub center: GraphPoint,
    pub radius: f64,
    /// Sorted disjoint intervals; edges not touching the ball are absent.
    pub per_edge: BTreeMap<EdgeId, Vec<Interval>>,
    pub boundary: Vec<BoundaryPoint>,
    /// Vertices contained in the ball.
    pub vertices: Vec<VertexId>,
}

impl BallDecomposition {
    pub fn volume(&self) -> f64 {
        self.per_edge.values().flatten().map(Interval::len).sum()
    }

    pub fn intervals(&self, e: EdgeId) -> &[Interval] {
        self.per_edge.get(&e).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn contains(&self, e: EdgeId, y: f64) -> bool {
        self.intervals(e).iter().any(|iv| iv.contains(y))
    }
}

fn merge(mut ivs: Vec<Interval>, slack: f64) -> Vec<Interval> {
    ivs.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let mut out: Vec<Interval> = Vec::new();
    for iv in ivs {
        match out.last_mut() {
            Some(last) if iv.lo <= last.hi + slack => last.hi = last.hi.max(iv.hi),
            _ => out.push(iv),
        }
    }
    out
}

/// Closed ball `{q : d(p,q) <= t}` decomposed into per-edge intervals.
pub fn ball(g: &MetricGraph, p: GraphPoint, t: f64) -> Result<BallDecomposition, GeometryError> {
    if !(t >= 0.0) {
        return Err(GeometryError::NegativeRadius(t));
    }
    let df = vertex_distances(g, p);
    let slack = g.slack();
    let mut per_edge = BTreeMap::new();
    for e in g.edge_ids() {
        let edge = g.edge(e);
        let a = edge.length;
        let mut ivs = Vec::new();
        for b in df.branches(e) {
            // Sub-level set of a single linear branch on its domain.
            let (lo, hi) = if b.slope > 0.0 {
                (b.lo, (t - b.offset).min(b.hi))
            } else {
                ((b.offset - t).max(b.lo), b.hi)
            };
            if hi >= lo - slack {
                ivs.push(Interval {
                    lo: lo.clamp(0.0, a),
                    hi: hi.max(lo).clamp(0.0, a),
                });
            }
        }
        let mut ivs = merge(ivs, slack);
        // A degenerate interval sitting on a vertex is kept only on the
        // vertex's canonical edge.
        ivs.retain(|iv| {
            if !iv.is_degenerate() {
                return true;
            }
            match g.point(e, iv.lo) {
                Ok(q) => g.point_vertex(q).is_none() || q.edge() == e,
                Err(_) => true,
            }
        });
        if !ivs.is_empty() {
            per_edge.insert(e, ivs);
        }
    }
    let vertices = g
        .vertices()
        .filter(|&v| df.to_vertex(v) <= t + slack)
        .collect();
    let boundary = if t == 0.0 {
        vec![BoundaryPoint {
            point: p,
            kind: if g.point_vertex(p).is_some() {
                BoundaryKind::Vertex
            } else {
                BoundaryKind::Regular
            },
            approach_count: 1,
            inward: 0,
        }]
    } else {
        boundary_from(g, &df, t)
    };
    Ok(BallDecomposition {
        center: p,
        radius: t,
        per_edge,
        boundary,
        vertices,
    })
}

fn boundary_from(g: &MetricGraph, df: &DistanceField<'_>, t: f64) -> Vec<BoundaryPoint> {
    let slack = g.slack().max(1e-12 * t);
    // (point, slope of the realizing branch)
    let mut hits: Vec<(GraphPoint, f64)> = Vec::new();
    for e in g.edge_ids() {
        let a = g.length(e);
        for b in df.branches(e) {
            let y = (t - b.offset) / b.slope;
            if y < b.lo - slack || y > b.hi + slack {
                continue;
            }
            let y = y.clamp(0.0, a);
            if (df.at(e, y) - t).abs() > slack {
                continue;
            }
            if let Ok(q) = g.point(e, y) {
                hits.push((q, b.slope));
            }
        }
    }
    let mut out: Vec<(BoundaryPoint, bool, bool)> = Vec::new();
    for (q, slope) in hits {
        let found = out.iter_mut().find(|(bp, _, _)| {
            bp.point.edge() == q.edge() && (bp.point.x() - q.x()).abs() <= slack
        });
        let entry = match found {
            Some(entry) => entry,
            None => {
                out.push((
                    BoundaryPoint {
                        point: q,
                        kind: BoundaryKind::Regular,
                        approach_count: 1,
                        inward: 0,
                    },
                    false,
                    false,
                ));
                out.last_mut().unwrap()
            }
        };
        if slope > 0.0 {
            entry.1 = true;
        } else {
            entry.2 = true;
        }
    }
    let mut result: Vec<BoundaryPoint> = out
        .into_iter()
        .map(|(mut bp, inc, dec)| {
            if g.point_vertex(bp.point).is_some() {
                bp.kind = BoundaryKind::Vertex;
            } else if inc && dec {
                bp.kind = BoundaryKind::Coincidence;
                bp.approach_count = 2;
            } else {
                // Increasing distance: the ball is on the low side.
                bp.inward = if inc { -1 } else { 1 };
            }
            bp
        })
        .collect();
    result.sort_by(|a, b| {
        a.point
            .edge()
            .cmp(&b.point.edge())
            .then(a.point.x().total_cmp(&b.point.x()))
    });
    result
}

/// The exact boundary set `{q : d(p,q) = t}` for `t > 0`.
pub fn boundary_set(g: &MetricGraph, p: GraphPoint, t: f64) -> Vec<BoundaryPoint> {
    boundary_from(g, &vertex_distances(g, p), t)
}

pub fn boundary_count(g: &MetricGraph, p: GraphPoint, t: f64) -> usize {
    boundary_set(g, p, t).len()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriticalTime {
    pub t: f64,
    /// Vertices at distance `t`.
    pub vertex_hits: Vec<VertexId>,
    /// Internal edges carrying a coincidence point at radius `t`.
    pub coincidences: Vec<EdgeId>,
}

impl CriticalTime {
    pub fn is_vertex_hit(&self) -> bool {
        !self.vertex_hits.is_empty()
    }

    pub fn is_coincidence(&self) -> bool {
        !self.coincidences.is_empty()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CriticalTimeSet {
    pub center: GraphPoint,
    pub times: Vec<CriticalTime>,
}

impl CriticalTimeSet {
    pub fn values(&self) -> Vec<f64> {
        self.times.iter().map(|c| c.t).collect()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Distance from `t` to the nearest critical time.
    pub fn gap(&self, t: f64) -> f64 {
        self.times
            .iter()
            .map(|c| (c.t - t).abs())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Coincidence radii on edge `e`: interior points where an increasing and a
/// decreasing distance branch meet and realize the distance.
fn coincidences_on(g: &MetricGraph, df: &DistanceField<'_>, e: EdgeId) -> Vec<(f64, f64)> {
    let slack = g.slack();
    let branches = df.branches(e);
    let mut out = Vec::new();
    for inc in branches.iter().filter(|b| b.slope > 0.0) {
        for dec in branches.iter().filter(|b| b.slope < 0.0) {
            let y = (dec.offset - inc.offset) / 2.0;
            let t = (dec.offset + inc.offset) / 2.0;
            let lo = inc.lo.max(dec.lo);
            let hi = inc.hi.min(dec.hi);
            if t <= slack || y <= lo + slack || y >= hi - slack {
                continue;
            }
            if g.point_vertex(g.point(e, y).expect("interior")).is_some() {
                continue;
            }
            if (df.at(e, y) - t).abs() <= slack.max(1e-12 * t) {
                out.push((y, t));
            }
        }
    }
    out
}

/// Critical times `T(p)`: vertex distances and coincidence radii.
pub fn critical_times(g: &MetricGraph, p: GraphPoint) -> CriticalTimeSet {
    let df = vertex_distances(g, p);
    let slack = g.slack();
    let mut raw: Vec<(f64, Option<VertexId>, Option<EdgeId>)> = Vec::new();
    for v in g.vertices() {
        raw.push((df.to_vertex(v), Some(v), None));
    }
    for e in g.internal_edges() {
        for (_, t) in coincidences_on(g, &df, e) {
            raw.push((t, None, Some(e)));
        }
    }
    raw.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut times: Vec<CriticalTime> = Vec::new();
    for (t, v, e) in raw {
        let fresh = match times.last() {
            Some(last) => t - last.t > slack.max(1e-12 * t),
            None => true,
        };
        if fresh {
            times.push(CriticalTime {
                t,
                vertex_hits: vec![],
                coincidences: vec![],
            });
        }
        let last = times.last_mut().unwrap();
        if let Some(v) = v {
            last.vertex_hits.push(v);
        }
        if let Some(e) = e {
            if !last.coincidences.contains(&e) {
                last.coincidences.push(e);
            }
        }
    }
    CriticalTimeSet { center: p, times }
}

/// Membership of `(q, t)` in the closed cone `C(p, t0)`.
pub fn cone_contains(g: &MetricGraph, p: GraphPoint, t0: f64, q: GraphPoint, t: f64) -> bool {
    (0.0..=t0).contains(&t) && distance(g, q, p) <= t0 - t
}

/// Ball volume `μ(B(p,t))`.
pub fn volume(g: &MetricGraph, p: GraphPoint, t: f64) -> Result<f64, GeometryError> {
    Ok(ball(g, p, t)?.volume())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::two_loop_graph;

    #[test]
    fn two_loop_distance_and_boundary_cases() {
        let a = 1.0;
        let g = two_loop_graph(a);
        let i1 = g.edge_id("i1").unwrap();
        let i2 = g.edge_id("i2").unwrap();
        let p = g.point(i1, a / 2.0).unwrap();
        let q = g.point(i2, a / 2.0).unwrap();
        assert!((distance(&g, p, q) - a).abs() < 1e-15);
        assert_eq!(distance(&g, p, p), 0.0);
        assert_eq!(boundary_count(&g, p, 0.3), 2);
        assert_eq!(boundary_count(&g, p, 0.5), 2);
        assert_eq!(boundary_count(&g, p, 0.7), 4);
        let at_a = boundary_set(&g, p, a);
        assert_eq!(at_a.len(), 3);
        let coin: Vec<_> = at_a
            .iter()
            .filter(|b| b.kind == BoundaryKind::Coincidence)
            .collect();
        assert_eq!(coin.len(), 1);
        assert_eq!(coin[0].point, q);
        assert_eq!(coin[0].approach_count, 2);
        assert_eq!(boundary_count(&g, p, 1.5), 2);
    }

    #[test]
    fn two_loop_ball_on_second_loop() {
        let a = 2.0;
        let g = two_loop_graph(a);
        let i1 = g.edge_id("i1").unwrap();
        let i2 = g.edge_id("i2").unwrap();
        let p = g.point(i1, a / 2.0).unwrap();
        let t = 1.4;
        let b = ball(&g, p, t).unwrap();
        let ivs = b.intervals(i2);
        assert_eq!(ivs.len(), 2);
        assert!((ivs[0].lo - 0.0).abs() < 1e-15 && (ivs[0].hi - (t - a / 2.0)).abs() < 1e-14);
        assert!((ivs[1].lo - (a - (t - a / 2.0))).abs() < 1e-14 && ivs[1].hi == a);
    }

    #[test]
    fn two_loop_critical_times() {
        let g = two_loop_graph(1.0);
        let p = g.point(g.edge_id("i1").unwrap(), 0.5).unwrap();
        let ct = critical_times(&g, p);
        assert_eq!(ct.values(), vec![0.5, 1.0]);
        assert_eq!(ct.times[0].vertex_hits.len(), 2);
        assert!(!ct.times[0].is_coincidence());
        assert_eq!(ct.times[1].coincidences, vec![g.edge_id("i2").unwrap()]);
    }

    #[test]
    fn zero_radius_ball() {
        let g = two_loop_graph(1.0);
        let p = g.point(g.edge_id("i2").unwrap(), 0.25).unwrap();
        let b = ball(&g, p, 0.0).unwrap();
        assert_eq!(b.per_edge.len(), 1);
        assert_eq!(b.boundary.len(), 1);
        assert_eq!(b.boundary[0].point, p);
        let v = g.point(g.edge_id("i2").unwrap(), 0.0).unwrap();
        let b = ball(&g, v, 0.0).unwrap();
        assert_eq!(b.per_edge.len(), 1);
        assert_eq!(b.boundary[0].kind, BoundaryKind::Vertex);
        assert!(ball(&g, p, -1.0).is_err());
    }

    #[test]
    fn inward_signs_on_a_half_line() {
        let g = MetricGraph::new(&crate::graph::GraphDescription {
            vertices: vec!["v".into()],
            internal: vec![],
            external: vec![("k".into(), "v".into())],
        })
        .unwrap();
        let k = g.edge_id("k").unwrap();
        let p = g.point(k, 5.0).unwrap();
        let bs = boundary_set(&g, p, 2.0);
        assert_eq!(bs.len(), 2);
        assert_eq!((bs[0].point.x(), bs[0].inward), (3.0, 1));
        assert_eq!((bs[1].point.x(), bs[1].inward), (7.0, -1));
        let ct = critical_times(&g, p);
        assert_eq!(ct.values(), vec![5.0]);
    }
}
