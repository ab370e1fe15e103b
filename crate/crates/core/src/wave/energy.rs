use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::Serialize;

use super::{integrate_cell_values, Frame, Solver, WaveError};
use crate::geometry::{self, BallDecomposition, BoundaryKind, BoundaryPoint};
use crate::graph::{GraphPoint, VertexId};
use crate::linalg;
use crate::vertex::omega_restricted;

/// `E = ½(‖∂_tψ‖² + ‖ψ′‖² + ⟨[ψ], Ω[ψ]⟩)` split into its three terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct EnergySample {
    pub t: f64,
    pub total: f64,
    pub kinetic: f64,
    pub gradient: f64,
    pub vertex: f64,
}

/// Global energy at the center level of a frame.
pub fn energy_global(solver: &Solver<'_>, frame: &Frame<'_>) -> EnergySample {
    let v = frame.velocity();
    let kinetic = 0.5 * solver.l2_squared(&v);
    let gradient = 0.5 * solver.gradient_squared(frame.cur);
    let (lo, up) = solver.trace(frame.cur);
    let vertex = 0.5 * solver.quadratic(solver.omega_real(), &lo, &up);
    EnergySample {
        t: frame.t,
        total: kinetic + gradient + vertex,
        kinetic,
        gradient,
        vertex,
    }
}

/// `e(t)` on `B(p, t0 − t)` with its breakdown and ball data.
#[derive(Clone, Debug, Serialize)]
pub struct LocalEnergySample {
    pub t: f64,
    pub e: f64,
    pub kinetic: f64,
    pub gradient: f64,
    pub vertex: f64,
    pub ball_volume: f64,
    pub n_boundary: usize,
    /// Within `2Δt` of a critical instant; not used for monotonicity.
    pub excluded: bool,
}

/// Local energy evaluator for a fixed cone `C(p, t0)`.
pub struct LocalEnergy<'s, 'g> {
    solver: &'s Solver<'g>,
    pub p: GraphPoint,
    pub t0: f64,
    cache: HashMap<Vec<VertexId>, DMatrix<f64>>,
}

impl<'s, 'g> LocalEnergy<'s, 'g> {
    /// Needs a local spec with `Ω_M ⪰ 0`.
    pub fn new(solver: &'s Solver<'g>, p: GraphPoint, t0: f64) -> Result<Self, WaveError> {
        let min = solver.spec.omega_min_eigenvalue();
        if min < -1e-10 {
            return Err(WaveError::OmegaNotPsd(min));
        }
        if solver.local().is_none() {
            crate::vertex::local_decompose(solver.graph, &solver.spec)?;
        }
        Ok(LocalEnergy {
            solver,
            p,
            t0,
            cache: HashMap::new(),
        })
    }

    pub fn ball(&self, t: f64) -> Result<BallDecomposition, WaveError> {
        if t < -1e-12 || t > self.t0 + 1e-12 {
            return Err(WaveError::TimeOutOfRange { t, t0: self.t0 });
        }
        Ok(geometry::ball(self.solver.graph, self.p, (self.t0 - t).max(0.0))?)
    }

    /// `Ω_t` for the vertices of a ball.
    pub fn omega_t(&mut self, vertices: &[VertexId]) -> &DMatrix<f64> {
        let solver = self.solver;
        self.cache.entry(vertices.to_vec()).or_insert_with(|| {
            let local = solver.local().expect("local spec");
            let om = linalg::real_part(&omega_restricted(&solver.spec, local, vertices));
            (&om + om.transpose()) * 0.5
        })
    }

    /// `e` at the half step `t + Δt/2` between `cur` and `next`: kinetic
    /// term from `(u^{n+1} − u^n)/Δt`, gradient and vertex terms as the
    /// bilinear forms of `u^n`, `u^{n+1}`.
    pub fn sample(&mut self, frame: &Frame<'_>) -> Result<LocalEnergySample, WaveError> {
        let t = frame.t + 0.5 * frame.dt;
        let ball = self.ball(t)?;
        let solver = self.solver;
        let mut kinetic = 0.0;
        let mut gradient = 0.0;
        for (&e, ivs) in &ball.per_edge {
            let eg = solver.grid.edge(e);
            let (a, b) = (&frame.cur[e.0], &frame.next[e.0]);
            let w: Vec<f64> = a.iter().zip(b).map(|(x, y)| (y - x) / frame.dt).collect();
            let kin: Vec<f64> = w.windows(2).map(|p| 0.5 * (p[0] * p[0] + p[1] * p[1])).collect();
            let grad: Vec<f64> = (0..eg.cells)
                .map(|j| (a[j + 1] - a[j]) * (b[j + 1] - b[j]) / (eg.h * eg.h))
                .collect();
            for iv in ivs {
                kinetic += integrate_cell_values(eg, &kin, iv.lo, iv.hi);
                gradient += integrate_cell_values(eg, &grad, iv.lo, iv.hi);
            }
        }
        let vertex = if ball.vertices.is_empty() {
            0.0
        } else {
            let om = self.omega_t(&ball.vertices).clone();
            solver.bilinear(&om, frame.cur, frame.next)
        };
        let (kinetic, gradient, vertex) = (0.5 * kinetic, 0.5 * gradient, 0.5 * vertex);
        Ok(LocalEnergySample {
            t,
            e: kinetic + gradient + vertex,
            kinetic,
            gradient,
            vertex,
            ball_volume: ball.volume(),
            n_boundary: ball.boundary.len(),
            excluded: false,
        })
    }
}

/// Inward normal derivative `∂_nψ(q)` at a regular boundary point.
pub fn normal_derivative(
    solver: &Solver<'_>,
    u: &super::Field,
    q: &BoundaryPoint,
) -> Result<f64, WaveError> {
    match q.kind {
        BoundaryKind::Regular => {}
        BoundaryKind::Vertex => {
            let v = solver.graph.point_vertex(q.point).expect("vertex point");
            return Err(WaveError::AmbiguousAtVertex(solver.graph.vertex_name(v).to_string()));
        }
        BoundaryKind::Coincidence => return Err(WaveError::CriticalTime(q.point.x())),
    }
    let e = q.point.edge();
    let d = solver.nodal_derivative(u, e);
    Ok(q.inward as f64 * solver.interpolate(e, &d, q.point.x()))
}

/// `−½ Σ_q |∂_tψ(q) + ∂_nψ(q)|²` over the regular boundary points of a
/// ball, at the half step of a frame.
pub fn boundary_flux(solver: &Solver<'_>, frame: &Frame<'_>, ball: &BallDecomposition) -> Result<f64, WaveError> {
    let mut s = 0.0;
    for q in &ball.boundary {
        let dn = 0.5 * (normal_derivative(solver, frame.cur, q)? + normal_derivative(solver, frame.next, q)?);
        let e = q.point.edge();
        let (a, b) = (&frame.cur[e.0], &frame.next[e.0]);
        let w: Vec<f64> = a.iter().zip(b).map(|(x, y)| (y - x) / frame.dt).collect();
        let dt = solver.interpolate(e, &w, q.point.x());
        s += (dt + dn).powi(2);
    }
    Ok(-0.5 * s)
}
