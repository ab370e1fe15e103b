use serde::Serialize;

use super::{integrate_cells_product, integrate_nodal, Field, Solver, WaveError};
use crate::fields::GraphField;
use crate::geometry::{self, critical_times};
use crate::graph::{GraphPoint, MetricGraph};
use crate::quad;
use crate::vertex::{TraceLayout, ValidatedSpec};

/// Terms of the integration-by-parts identity on a ball.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GreenTerms {
    pub lhs: f64,
    pub gradient: f64,
    pub vertex: f64,
    pub boundary: f64,
    pub residual: f64,
}

/// `|⟨φ, −ψ″⟩_B − ⟨φ′, ψ′⟩_B − ⟨[φ], Ω_t[ψ]⟩ − Σ_q φ(q) ∂_nψ(q)|` on
/// `B = B(p, t0 − t)` for grid samples `phi`, `psi`.
pub fn green_identity_check(
    solver: &Solver<'_>,
    phi: &Field,
    psi: &Field,
    p: GraphPoint,
    t0: f64,
    t: f64,
) -> Result<GreenTerms, WaveError> {
    let g = solver.graph;
    let r = t0 - t;
    if r < 0.0 {
        return Err(WaveError::TimeOutOfRange { t, t0 });
    }
    let crit = critical_times(g, p);
    if crit.gap(r) <= g.slack().max(1e-12 * r) || r == 0.0 {
        return Err(WaveError::CriticalTime(r));
    }
    let local = solver
        .local()
        .ok_or_else(|| crate::vertex::local_decompose(g, &solver.spec).unwrap_err())?;
    let ball = geometry::ball(g, p, r)?;

    let mut lhs = 0.0;
    let mut gradient = 0.0;
    for (&e, ivs) in &ball.per_edge {
        let eg = solver.grid.edge(e);
        let n = eg.cells;
        let h = eg.h;
        let w = &psi[e.0];
        let lap = second_derivative(w, h);
        let prod: Vec<f64> = (0..=n).map(|j| -phi[e.0][j] * lap[j]).collect();
        for iv in ivs {
            lhs += integrate_nodal(eg, &prod, iv.lo, iv.hi);
            gradient += integrate_cells_product(eg, &phi[e.0], w, iv.lo, iv.hi);
        }
    }
    let vertex = if ball.vertices.is_empty() {
        0.0
    } else {
        let om = crate::linalg::real_part(&crate::vertex::omega_restricted(&solver.spec, local, &ball.vertices));
        let om = (&om + om.transpose()) * 0.5;
        let (pl, pu) = solver.trace(phi);
        let (ql, qu) = solver.trace(psi);
        let x: Vec<f64> = pl.iter().chain(&pu).copied().collect();
        let y: Vec<f64> = ql.iter().chain(&qu).copied().collect();
        let mut s = 0.0;
        for i in 0..x.len() {
            for j in 0..y.len() {
                s += x[i] * om[(i, j)] * y[j];
            }
        }
        s
    };
    let mut boundary = 0.0;
    for q in &ball.boundary {
        let dn = super::normal_derivative(solver, psi, q)?;
        let e = q.point.edge();
        boundary += solver.interpolate(e, &phi[e.0], q.point.x()) * dn;
    }
    Ok(GreenTerms {
        lhs,
        gradient,
        vertex,
        boundary,
        residual: (lhs - gradient - vertex - boundary).abs(),
    })
}

/// Fourth-order nodal second derivative; one-sided six-point stencils at
/// the two nodes next to each end.
fn second_derivative(w: &[f64], h: f64) -> Vec<f64> {
    let n = w.len() - 1;
    let h2 = h * h;
    if n < 5 {
        return (0..=n)
            .map(|j| {
                if j == 0 {
                    (2.0 * w[0] - 5.0 * w[1] + 4.0 * w[2] - w[3]) / h2
                } else if j == n {
                    (2.0 * w[n] - 5.0 * w[n - 1] + 4.0 * w[n - 2] - w[n - 3]) / h2
                } else {
                    (w[j + 1] - 2.0 * w[j] + w[j - 1]) / h2
                }
            })
            .collect();
    }
    let end0 = |f: &dyn Fn(usize) -> f64| {
        (45.0 * f(0) - 154.0 * f(1) + 214.0 * f(2) - 156.0 * f(3) + 61.0 * f(4) - 10.0 * f(5)) / (12.0 * h2)
    };
    let end1 = |f: &dyn Fn(usize) -> f64| {
        (10.0 * f(0) - 15.0 * f(1) - 4.0 * f(2) + 14.0 * f(3) - 6.0 * f(4) + f(5)) / (12.0 * h2)
    };
    let fwd = |k: usize| w[k];
    let bwd = |k: usize| w[n - k];
    (0..=n)
        .map(|j| match j {
            0 => end0(&fwd),
            1 => end1(&fwd),
            _ if j == n => end0(&bwd),
            _ if j == n - 1 => end1(&bwd),
            _ => (-w[j + 2] + 16.0 * w[j + 1] - 30.0 * w[j] + 16.0 * w[j - 1] - w[j - 2]) / (12.0 * h2),
        })
        .collect()
}

/// Whether `G` with all external edges joined at a point at infinity is
/// bridgeless. Then every point has two edge-disjoint rays to infinity and
/// `‖f‖∞² ≤ ½(‖f‖² + ‖f′‖²)` holds for vertex-continuous `f ∈ H¹`.
pub fn sobolev_applicable(g: &MetricGraph) -> bool {
    if g.is_compact() {
        return false;
    }
    let inf = g.vertex_count();
    let links: Vec<(usize, usize)> = g
        .edges()
        .iter()
        .map(|e| (e.from.0, e.to.map(|v| v.0).unwrap_or(inf)))
        .collect();
    let connected_without = |skip: usize| {
        let mut seen = vec![false; inf + 1];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for (k, &(a, b)) in links.iter().enumerate() {
                if k == skip {
                    continue;
                }
                for (x, y) in [(a, b), (b, a)] {
                    if x == v && !seen[y] {
                        seen[y] = true;
                        stack.push(y);
                    }
                }
            }
        }
        seen.iter().all(|&s| s)
    };
    (0..links.len()).all(connected_without)
}

/// Whether every vector of `M` has equal boundary values at each vertex.
pub fn enforces_continuity(g: &MetricGraph, spec: &ValidatedSpec) -> bool {
    let layout = TraceLayout::of(g);
    let p = spec.projector();
    for v in g.vertices() {
        let slots = layout.vertex_slots(g, v);
        for w in slots.windows(2) {
            let diff = p.row(w[0]) - p.row(w[1]);
            if diff.norm() > 1e-10 {
                return false;
            }
        }
    }
    true
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SobolevCheck {
    pub sup2: f64,
    pub l2: f64,
    pub grad2: f64,
    /// `½(‖f‖² + ‖f′‖²) − ‖f‖∞²`.
    pub slack: f64,
}

/// Discrete sup², trapezoid L² and forward-difference gradient norms of a
/// grid function.
pub fn sobolev_check(solver: &Solver<'_>, u: &Field) -> SobolevCheck {
    let sup2 = u.iter().flatten().map(|x| x * x).fold(0.0, f64::max);
    let l2 = solver.l2_squared(u);
    let grad2 = solver.gradient_squared(u);
    SobolevCheck {
        sup2,
        l2,
        grad2,
        slack: 0.5 * (l2 + grad2) - sup2,
    }
}

/// `A₁(ψ0, ψ̇0, t) = (‖ψ0‖² + ‖ψ0‖²_{M,1} + (1 + t²)‖ψ̇0‖²)^{1/2}` with
/// `‖ψ0‖²_{M,1} = ‖ψ0′‖² + ⟨[ψ0], Ω_M[ψ0]⟩`, by quadrature.
pub struct A1Bound {
    pub psi0_l2: f64,
    pub psi0_m1: f64,
    pub psi_dot0_l2: f64,
}

impl A1Bound {
    pub fn new(
        g: &MetricGraph,
        spec: &ValidatedSpec,
        psi0: &dyn GraphField,
        psi_dot0: &dyn GraphField,
        ext_extent: f64,
    ) -> Result<Self, WaveError> {
        let norm2 = |f: &dyn GraphField, order: usize| -> f64 {
            g.edge_ids()
                .map(|e| {
                    let a = g.length(e).min(ext_extent);
                    let br = f.breakpoints(e);
                    quad::integrate_with_breaks(
                        |x| f.derivative(e, x, order).unwrap_or(f64::NAN).powi(2),
                        0.0,
                        a,
                        &br,
                        0.01,
                    )
                })
                .sum()
        };
        let tr = crate::vertex::trace(g, psi0)?;
        let form = spec.vertex_form(&tr, &tr).re;
        Ok(A1Bound {
            psi0_l2: norm2(psi0, 0),
            psi0_m1: norm2(psi0, 1) + form,
            psi_dot0_l2: norm2(psi_dot0, 0),
        })
    }

    pub fn at(&self, t: f64) -> f64 {
        (self.psi0_l2 + self.psi0_m1 + (1.0 + t * t) * self.psi_dot0_l2).sqrt()
    }
}

/// Largest `‖ψ(t)‖∞ − A₁(t)` over a run.
pub fn a1_check(solver: &Solver<'_>, bound: &A1Bound, psi0: &dyn GraphField, psi_dot0: &dyn GraphField) -> f64 {
    let s = solver.start(psi0, psi_dot0);
    let mut worst = f64::NEG_INFINITY;
    solver.run(s, solver.grid.steps, |f| {
        let sup = f.cur.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max);
        worst = worst.max(sup - bound.at(f.t));
    });
    worst
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MixedDerivativeReport {
    /// Max `|D_x D_t u − D_t D_x u|` over interior stencils, relative to
    /// the largest mixed difference.
    pub interior_asymmetry: f64,
    /// Max `|[D_t u] − D_t [u]|` over the trace series, relative to its
    /// largest entry.
    pub trace_asymmetry: f64,
}

/// Commutation of the implemented difference operators along a run.
pub fn mixed_derivative_check(solver: &Solver<'_>, psi0: &dyn GraphField, psi_dot0: &dyn GraphField) -> MixedDerivativeReport {
    let s = solver.start(psi0, psi_dot0);
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    let mut tw: f64 = 0.0;
    let mut tscale: f64 = 0.0;
    solver.run(s, solver.grid.steps, |f| {
        let dt = f.dt;
        for eg in &solver.grid.edges {
            let (a, b) = (&f.cur[eg.edge.0], &f.next[eg.edge.0]);
            let h = eg.h;
            for j in 0..eg.cells {
                let dt_first: Vec<f64> = [(b[j] - a[j]) / dt, (b[j + 1] - a[j + 1]) / dt].to_vec();
                let xt = (dt_first[1] - dt_first[0]) / h;
                let dx_a = (a[j + 1] - a[j]) / h;
                let dx_b = (b[j + 1] - b[j]) / h;
                let tx = (dx_b - dx_a) / dt;
                worst = worst.max((xt - tx).abs());
                scale = scale.max(xt.abs());
            }
        }
        let v = f.velocity();
        let (vl, vu) = solver.trace(&v);
        let (pl, pu) = solver.trace(f.prev);
        let (nl, nu) = solver.trace(f.next);
        for i in 0..vl.len() {
            let dl = (nl[i] - pl[i]) / (2.0 * dt);
            let du = (nu[i] - pu[i]) / (2.0 * dt);
            tw = tw.max((dl - vl[i]).abs()).max((du - vu[i]).abs());
            tscale = tscale.max(vl[i].abs()).max(vu[i].abs());
        }
    });
    MixedDerivativeReport {
        interior_asymmetry: if scale > 0.0 { worst / scale } else { 0.0 },
        trace_asymmetry: if tscale > 0.0 { tw / tscale } else { 0.0 },
    }
}

/// Largest difference between two runs on pools of different sizes.
pub fn uniqueness_check(solver: &Solver<'_>, psi0: &dyn GraphField, psi_dot0: &dyn GraphField) -> f64 {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("pool");
        pool.install(|| solver.solve(psi0, psi_dot0))
    };
    let a = run(1);
    let b = run(4);
    a.u.iter()
        .flatten()
        .zip(b.u.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Trapezoid L² distance between grid samples and an analytic field.
pub fn l2_distance(solver: &Solver<'_>, u: &Field, f: &dyn GraphField) -> f64 {
    let exact = solver.grid.sample(f);
    let diff: Field = u
        .iter()
        .zip(&exact)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
        .collect();
    solver.l2_squared(&diff).sqrt()
}
