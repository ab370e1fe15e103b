//! Leapfrog finite-difference solver for `∂_t²ψ = ψ″` on metric graphs.
//!
//! Interior nodes use the standard three-point update. Endpoint values at a
//! vertex are recomputed after each step from `A_v ψ̲_v + B_v ψ̲′_v = 0`
//! with second-order one-sided derivatives. External edges are truncated at
//! a Dirichlet cap far enough away that it cannot influence the region of
//! interest before `t_end`.

mod checks;
mod energy;
mod fps;

pub use checks::*;
pub use energy::*;
pub use fps::*;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::fields::GraphField;
use crate::geometry::GeometryError;
use crate::graph::{EdgeId, End, MetricGraph, VertexId};
use crate::linalg;
use crate::vertex::{local_decompose, BcError, TraceLayout, TraceVector, ValidatedSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaveError {
    #[error("no stable time step: {0}")]
    CflImpossible(String),
    #[error("external edge {edge} truncated at {length}, needs at least {needed}")]
    TruncationInsufficient { edge: String, length: f64, needed: f64 },
    #[error("vertex system singular at {0}")]
    VertexSystemSingular(String),
    #[error("Ω_M is not positive semidefinite (min eigenvalue {0:e})")]
    OmegaNotPsd(f64),
    #[error("normal derivative undefined at vertex {0}")]
    AmbiguousAtVertex(String),
    #[error("radius {0} is a critical time")]
    CriticalTime(f64),
    #[error("local energy increased at t = {t}: {increase:e}")]
    MonotonicityViolated { t: f64, increase: f64 },
    #[error("local energy jumps upward at t = {t}: {jump:e}")]
    JumpSignViolated { t: f64, jump: f64 },
    #[error("cone leak {leak:e} exceeds {limit:e}")]
    ConeLeakExcessive { leak: f64, limit: f64 },
    #[error("time {t} outside [0, {t0}]")]
    TimeOutOfRange { t: f64, t0: f64 },
    #[error(transparent)]
    Bc(#[from] BcError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Discretization of one edge: nodes `x_j = j·h`, `j = 0..=cells`.
#[derive(Clone, Debug, Serialize)]
pub struct EdgeGrid {
    pub edge: EdgeId,
    pub cells: usize,
    pub h: f64,
    /// Gridded length; the truncation length for external edges.
    pub length: f64,
    pub truncated: bool,
}

impl EdgeGrid {
    pub fn nodes(&self) -> usize {
        self.cells + 1
    }

    pub fn x(&self, j: usize) -> f64 {
        if j == self.cells {
            self.length
        } else {
            j as f64 * self.h
        }
    }

    /// Cell containing `y`, clamped to the grid.
    pub fn cell_of(&self, y: f64) -> usize {
        ((y / self.h).floor().max(0.0) as usize).min(self.cells - 1)
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GridOptions {
    pub h: f64,
    /// `λ = Δt / h_min`.
    pub cfl: f64,
    pub t_end: f64,
    /// Radius of interest measured along external edges from their vertex.
    pub region: f64,
    /// Explicit truncation length for external edges.
    pub cap: Option<f64>,
}

impl GridOptions {
    pub fn new(h: f64, cfl: f64, t_end: f64, region: f64) -> Self {
        GridOptions {
            h,
            cfl,
            t_end,
            region,
            cap: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Grid {
    pub edges: Vec<EdgeGrid>,
    pub dt: f64,
    pub steps: usize,
    pub cfl: f64,
    pub t_end: f64,
    pub region: f64,
}

impl Grid {
    pub fn edge(&self, e: EdgeId) -> &EdgeGrid {
        &self.edges[e.0]
    }

    pub fn h_min(&self) -> f64 {
        self.edges.iter().map(|e| e.h).fold(f64::INFINITY, f64::min)
    }

    pub fn h_max(&self) -> f64 {
        self.edges.iter().map(|e| e.h).fold(0.0, f64::max)
    }

    pub fn node_count(&self) -> usize {
        self.edges.iter().map(EdgeGrid::nodes).sum()
    }

    pub fn zeros(&self) -> Field {
        self.edges.iter().map(|e| vec![0.0; e.nodes()]).collect()
    }

    /// Samples of an analytic field at the nodes; truncation caps are 0.
    pub fn sample(&self, f: &dyn GraphField) -> Field {
        self.edges
            .par_iter()
            .map(|eg| {
                let mut v: Vec<f64> = (0..eg.nodes()).map(|j| f.value(eg.edge, eg.x(j))).collect();
                if eg.truncated {
                    *v.last_mut().unwrap() = 0.0;
                }
                v
            })
            .collect()
    }
}

/// Per-edge node values.
pub type Field = Vec<Vec<f64>>;

/// Minimum cells on an internal edge; keeps both one-sided stencils inside
/// the edge interior.
const MIN_CELLS: usize = 3;

/// Build the grid: `h_i = a_i / round(a_i / h)` on internal edges, spacing
/// `h` on external edges truncated at `L_e ≥ region + t_end/λ + 2h`.
pub fn discretize(g: &MetricGraph, opts: &GridOptions) -> Result<Grid, WaveError> {
    if !(opts.h > 0.0) || !opts.h.is_finite() {
        return Err(WaveError::CflImpossible(format!("h = {}", opts.h)));
    }
    if !(opts.cfl > 0.0 && opts.cfl <= 1.0) {
        return Err(WaveError::CflImpossible(format!("λ = {} not in (0, 1]", opts.cfl)));
    }
    if !(opts.t_end >= 0.0) {
        return Err(WaveError::CflImpossible(format!("t_end = {}", opts.t_end)));
    }
    // The scheme moves information one cell per step, i.e. at speed 1/λ.
    let needed = opts.region.max(0.0) + opts.t_end / opts.cfl + 2.0 * opts.h;
    let mut edges = Vec::with_capacity(g.edge_count());
    for e in g.edge_ids() {
        let edge = g.edge(e);
        if edge.is_external() {
            let len = match opts.cap {
                Some(cap) if cap < needed => {
                    return Err(WaveError::TruncationInsufficient {
                        edge: edge.name.clone(),
                        length: cap,
                        needed,
                    })
                }
                Some(cap) => cap,
                None => needed,
            };
            let cells = ((len / opts.h).ceil() as usize).max(MIN_CELLS);
            edges.push(EdgeGrid {
                edge: e,
                cells,
                h: opts.h,
                length: cells as f64 * opts.h,
                truncated: true,
            });
        } else {
            let a = edge.length;
            let cells = ((a / opts.h).round() as usize).max(MIN_CELLS);
            edges.push(EdgeGrid {
                edge: e,
                cells,
                h: a / cells as f64,
                length: a,
                truncated: false,
            });
        }
    }
    let grid = Grid {
        edges,
        dt: 0.0,
        steps: 0,
        cfl: opts.cfl,
        t_end: opts.t_end,
        region: opts.region,
    };
    let (hmin, hmax) = (grid.h_min(), grid.h_max());
    if hmax > 2.0 * hmin * (1.0 + 1e-12) {
        return Err(WaveError::CflImpossible(format!(
            "edge spacings {hmin:e}..{hmax:e} differ by more than 2x; refine h"
        )));
    }
    let dt_max = opts.cfl * hmin;
    let steps = if opts.t_end > 0.0 {
        ((opts.t_end / dt_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    } else {
        0
    };
    let dt = if steps > 0 { opts.t_end / steps as f64 } else { dt_max };
    Ok(Grid { dt, steps, ..grid })
}

/// Leapfrog state: `u` at time `t`, `u_prev` at `t − Δt`.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveState {
    pub step: usize,
    pub t: f64,
    pub u: Field,
    pub u_prev: Field,
}

/// Three consecutive time levels centered at `t`.
pub struct Frame<'a> {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub prev: &'a Field,
    pub cur: &'a Field,
    pub next: &'a Field,
}

impl Frame<'_> {
    /// `∂_tψ` by centered difference.
    pub fn velocity(&self) -> Field {
        self.cur
            .iter()
            .enumerate()
            .map(|(e, c)| {
                (0..c.len())
                    .map(|j| (self.next[e][j] - self.prev[e][j]) / (2.0 * self.dt))
                    .collect()
            })
            .collect()
    }
}

/// Endpoint solve for one group of slots: `u_end = map · (4u₁ − u₂)`.
#[derive(Clone, Debug)]
struct VertexSystem {
    label: String,
    slots: Vec<usize>,
    map: DMatrix<f64>,
}

/// Nodes `(end, first inward, second inward)` of a slot.
fn slot_nodes(grid: &Grid, layout: &TraceLayout, s: usize) -> (EdgeId, [usize; 3]) {
    let (e, end) = layout.slot_owner(s);
    let n = grid.edge(e).cells;
    match end {
        End::Initial => (e, [0, 1, 2]),
        End::Final => (e, [n, n - 1, n - 2]),
    }
}

pub struct Solver<'g> {
    pub graph: &'g MetricGraph,
    pub grid: Grid,
    pub spec: ValidatedSpec,
    layout: TraceLayout,
    systems: Vec<VertexSystem>,
    omega: DMatrix<f64>,
    local: Option<crate::vertex::LocalDecomposition>,
}

impl<'g> Solver<'g> {
    /// Prepare the vertex systems. Requires a real `P_M`; a non-local spec
    /// is handled as one global system.
    pub fn new(g: &'g MetricGraph, spec: &ValidatedSpec, grid: Grid) -> Result<Self, WaveError> {
        spec.require_real()?;
        let layout = TraceLayout::of(g);
        if spec.dim() != layout.dim() {
            return Err(BcError::DimensionMismatch(spec.dim(), layout.dim()).into());
        }
        let local = local_decompose(g, spec).ok();
        let groups: Vec<(String, Vec<usize>, DMatrix<f64>, DMatrix<f64>)> = match &local {
            Some(ld) => ld
                .blocks
                .iter()
                .map(|b| {
                    (
                        g.vertex_name(b.vertex).to_string(),
                        b.slots.clone(),
                        linalg::real_part(&b.a),
                        linalg::real_part(&b.b),
                    )
                })
                .collect(),
            None => vec![(
                "global".to_string(),
                (0..layout.dim()).collect(),
                linalg::real_part(&spec.spec.a),
                linalg::real_part(&spec.spec.b),
            )],
        };
        let mut systems = Vec::with_capacity(groups.len());
        for (label, slots, a, b) in groups {
            let d = slots.len();
            let hinv = DMatrix::from_fn(d, d, |i, j| {
                if i == j {
                    let (e, _) = layout.slot_owner(slots[i]);
                    1.0 / grid.edge(e).h
                } else {
                    0.0
                }
            });
            let bh = &b * &hinv;
            let k = &a - &bh * 1.5;
            let sv = k.clone().svd(false, false).singular_values;
            let smax = sv.iter().copied().fold(0.0, f64::max);
            let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
            if !(smax > 0.0) || smin < 1e-12 * smax {
                return Err(WaveError::VertexSystemSingular(label));
            }
            let kinv = k.try_inverse().ok_or_else(|| WaveError::VertexSystemSingular(label.clone()))?;
            let map = kinv * (bh * -0.5);
            systems.push(VertexSystem { label, slots, map });
        }
        let omega = linalg::real_part(spec.omega());
        let omega = (&omega + omega.transpose()) * 0.5;
        Ok(Solver {
            graph: g,
            grid,
            spec: spec.clone(),
            layout,
            systems,
            omega,
            local,
        })
    }

    pub fn layout(&self) -> TraceLayout {
        self.layout
    }

    pub fn local(&self) -> Option<&crate::vertex::LocalDecomposition> {
        self.local.as_ref()
    }

    /// Number of independent endpoint systems (one per vertex when local).
    pub fn system_labels(&self) -> Vec<&str> {
        self.systems.iter().map(|s| s.label.as_str()).collect()
    }

    /// Impose the vertex conditions on the endpoint values of `u`.
    pub fn enforce(&self, u: &mut Field) {
        for sys in &self.systems {
            let w: Vec<f64> = sys
                .slots
                .iter()
                .map(|&s| {
                    let (e, [_, n1, n2]) = slot_nodes(&self.grid, &self.layout, s);
                    4.0 * u[e.0][n1] - u[e.0][n2]
                })
                .collect();
            for (i, &s) in sys.slots.iter().enumerate() {
                let mut v = 0.0;
                for (j, wj) in w.iter().enumerate() {
                    v += sys.map[(i, j)] * wj;
                }
                let (e, [n0, _, _]) = slot_nodes(&self.grid, &self.layout, s);
                u[e.0][n0] = v;
            }
        }
        for eg in self.grid.edges.iter().filter(|e| e.truncated) {
            u[eg.edge.0][eg.cells] = 0.0;
        }
    }

    /// Discrete trace: endpoint values and one-sided inward derivatives.
    pub fn trace(&self, u: &Field) -> (Vec<f64>, Vec<f64>) {
        let n = self.layout.dim();
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for s in 0..n {
            let (e, [n0, n1, n2]) = slot_nodes(&self.grid, &self.layout, s);
            let h = self.grid.edge(e).h;
            let v = &u[e.0];
            lower[s] = v[n0];
            upper[s] = (-3.0 * v[n0] + 4.0 * v[n1] - v[n2]) / (2.0 * h);
        }
        (lower, upper)
    }

    pub fn trace_vector(&self, u: &Field) -> TraceVector {
        let (l, d) = self.trace(u);
        TraceVector::from_real(&l, &d)
    }

    /// `‖A[u] + B[u]′‖ / ‖[u]‖` with the normalized spec.
    pub fn vertex_residual(&self, u: &Field) -> f64 {
        let tr = self.trace_vector(u);
        let nrm = tr.values.norm();
        if nrm == 0.0 {
            return 0.0;
        }
        self.spec.spec.residual(&tr).norm() / nrm
    }

    /// `⟨x, Ω x⟩` for a real trace and a real symmetric form.
    pub fn quadratic(&self, omega: &DMatrix<f64>, lower: &[f64], upper: &[f64]) -> f64 {
        let x: Vec<f64> = lower.iter().chain(upper).copied().collect();
        let mut s = 0.0;
        for i in 0..x.len() {
            if x[i] == 0.0 {
                continue;
            }
            let mut r = 0.0;
            for j in 0..x.len() {
                r += omega[(i, j)] * x[j];
            }
            s += x[i] * r;
        }
        s
    }

    /// `xᵀΩy` for the traces `x`, `y` of two grid functions.
    pub fn bilinear(&self, omega: &DMatrix<f64>, u: &Field, w: &Field) -> f64 {
        let (ul, uu) = self.trace(u);
        let (wl, wu) = self.trace(w);
        let x: Vec<f64> = ul.into_iter().chain(uu).collect();
        let y: Vec<f64> = wl.into_iter().chain(wu).collect();
        let mut s = 0.0;
        for i in 0..x.len() {
            if x[i] == 0.0 {
                continue;
            }
            for j in 0..y.len() {
                s += x[i] * omega[(i, j)] * y[j];
            }
        }
        s
    }

    pub fn omega_real(&self) -> &DMatrix<f64> {
        &self.omega
    }

    /// Taylor start `u⁻¹ = u⁰ − Δt ψ̇₀ + ½Δt² ψ₀″`, then vertex conditions.
    pub fn start(&self, psi0: &dyn GraphField, psi_dot0: &dyn GraphField) -> WaveState {
        let dt = self.grid.dt;
        let mut u = self.grid.sample(psi0);
        let v = self.grid.sample(psi_dot0);
        let mut prev: Field = self
            .grid
            .edges
            .par_iter()
            .map(|eg| {
                let e = eg.edge;
                let h = eg.h;
                let u0 = &u[e.0];
                (0..eg.nodes())
                    .map(|j| {
                        let x = eg.x(j);
                        let dd = psi0.derivative(e, x, 2).unwrap_or_else(|| {
                            let j = j.clamp(1, eg.cells - 1);
                            (u0[j + 1] - 2.0 * u0[j] + u0[j - 1]) / (h * h)
                        });
                        u0[j] - dt * v[e.0][j] + 0.5 * dt * dt * dd
                    })
                    .collect()
            })
            .collect();
        self.enforce(&mut u);
        self.enforce(&mut prev);
        WaveState {
            step: 0,
            t: 0.0,
            u,
            u_prev: prev,
        }
    }

    /// Next time level from `(u_prev, u)`.
    pub fn advance(&self, prev: &Field, cur: &Field) -> Field {
        let dt = self.grid.dt;
        let mut next: Field = self
            .grid
            .edges
            .par_iter()
            .map(|eg| {
                let r2 = (dt / eg.h).powi(2);
                let u = &cur[eg.edge.0];
                let up = &prev[eg.edge.0];
                let mut out = vec![0.0; eg.nodes()];
                for j in 1..eg.cells {
                    out[j] = 2.0 * u[j] - up[j] + r2 * (u[j + 1] - 2.0 * u[j] + u[j - 1]);
                }
                out
            })
            .collect();
        self.enforce(&mut next);
        next
    }

    pub fn step(&self, state: &WaveState) -> WaveState {
        let next = self.advance(&state.u_prev, &state.u);
        WaveState {
            step: state.step + 1,
            t: (state.step + 1) as f64 * self.grid.dt,
            u: next,
            u_prev: state.u.clone(),
        }
    }

    /// Run `steps` steps, calling `observe` with the frame centered at each
    /// level `0..=steps`. Returns the state at level `steps`.
    pub fn run<F: FnMut(&Frame<'_>)>(&self, mut state: WaveState, steps: usize, mut observe: F) -> WaveState {
        let dt = self.grid.dt;
        let mut next = self.advance(&state.u_prev, &state.u);
        for n in 0..=steps {
            observe(&Frame {
                step: state.step,
                t: state.t,
                dt,
                prev: &state.u_prev,
                cur: &state.u,
                next: &next,
            });
            if n == steps {
                break;
            }
            let after = self.advance(&state.u, &next);
            let prev = std::mem::replace(&mut state.u, next);
            state.u_prev = prev;
            state.step += 1;
            state.t = state.step as f64 * dt;
            next = after;
        }
        state
    }

    /// Run to the end of the grid horizon and return the final state.
    pub fn solve(&self, psi0: &dyn GraphField, psi_dot0: &dyn GraphField) -> WaveState {
        let s = self.start(psi0, psi_dot0);
        self.run(s, self.grid.steps, |_| {})
    }

    /// Nodal derivative `ψ′(x_j)`: centered inside, one-sided at the ends.
    pub fn nodal_derivative(&self, u: &Field, e: EdgeId) -> Vec<f64> {
        nodal_derivative(self.grid.edge(e), &u[e.0])
    }

    /// Local cubic interpolation of nodal values at `y`.
    pub fn interpolate(&self, e: EdgeId, nodal: &[f64], y: f64) -> f64 {
        let eg = self.grid.edge(e);
        let j = eg.cell_of(y);
        let base = j.saturating_sub(1).min(eg.cells - 3);
        cubic(&nodal[base..base + 4], (y - eg.x(base)) / eg.h)
    }

    /// Trapezoid L² norm squared over the whole grid.
    pub fn l2_squared(&self, u: &Field) -> f64 {
        let mut s = 0.0;
        for eg in &self.grid.edges {
            let v = &u[eg.edge.0];
            let n = eg.cells;
            let inner: f64 = v[1..n].iter().map(|x| x * x).sum();
            s += eg.h * (inner + 0.5 * (v[0] * v[0] + v[n] * v[n]));
        }
        s
    }

    /// `Σ h g_j²` with cell forward differences.
    pub fn gradient_squared(&self, u: &Field) -> f64 {
        let mut s = 0.0;
        for eg in &self.grid.edges {
            let v = &u[eg.edge.0];
            s += v.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / eg.h;
        }
        s
    }

    pub fn vertex_name(&self, v: VertexId) -> &str {
        self.graph.vertex_name(v)
    }
}

/// `∫_lo^hi f` for nodal values `f`, integrating the local cubic
/// interpolant exactly.
pub fn integrate_nodal(eg: &EdgeGrid, f: &[f64], lo: f64, hi: f64) -> f64 {
    let lo = lo.max(0.0);
    let hi = hi.min(eg.length);
    if hi <= lo {
        return 0.0;
    }
    let n = eg.cells;
    let j0 = eg.cell_of(lo);
    let j1 = eg.cell_of(hi);
    let g = 0.5 / 3f64.sqrt();
    let mut s = 0.0;
    for j in j0..=j1 {
        let a = eg.x(j).max(lo);
        let b = eg.x(j + 1).min(hi);
        if b <= a {
            continue;
        }
        let base = j.saturating_sub(1).min(n - 3);
        let x0 = eg.x(base);
        let m = 0.5 * (a + b);
        let w = b - a;
        s += 0.5 * w * (cubic(&f[base..base + 4], (m - g * w - x0) / eg.h) + cubic(&f[base..base + 4], (m + g * w - x0) / eg.h));
    }
    s
}

/// `∫_lo^hi` of a per-cell density given by its cell averages `f`. Partial
/// cells use the quadratic with matching averages on three adjacent cells.
pub fn integrate_cell_values(eg: &EdgeGrid, f: &[f64], lo: f64, hi: f64) -> f64 {
    let lo = lo.max(0.0);
    let hi = hi.min(eg.length);
    if hi <= lo {
        return 0.0;
    }
    let n = eg.cells;
    let j0 = eg.cell_of(lo);
    let j1 = eg.cell_of(hi);
    let mut s = 0.0;
    for j in j0..=j1 {
        let (x0, x1) = (eg.x(j), eg.x(j + 1));
        let a = x0.max(lo);
        let b = x1.min(hi);
        if b <= a {
            continue;
        }
        if a == x0 && b == x1 {
            s += eg.h * f[j];
            continue;
        }
        let base = j.saturating_sub(1).min(n - 3);
        let prim = [0.0, f[base], f[base] + f[base + 1], f[base] + f[base + 1] + f[base + 2]];
        let xb = eg.x(base);
        s += eg.h * (cubic(&prim, (b - xb) / eg.h) - cubic(&prim, (a - xb) / eg.h));
    }
    s
}

/// Lagrange cubic through `v` at `0, 1, 2, 3`.
fn cubic(v: &[f64], s: f64) -> f64 {
    let (a, b, c, d) = (s, s - 1.0, s - 2.0, s - 3.0);
    -v[0] * b * c * d / 6.0 + v[1] * a * c * d / 2.0 - v[2] * a * b * d / 2.0 + v[3] * a * b * c / 6.0
}

/// Nodal derivative: centered inside, one-sided second order at the ends.
fn nodal_derivative(eg: &EdgeGrid, v: &[f64]) -> Vec<f64> {
    let n = eg.cells;
    let h = eg.h;
    (0..=n)
        .map(|j| {
            if j == 0 {
                (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
            } else if j == n {
                (3.0 * v[n] - 4.0 * v[n - 1] + v[n - 2]) / (2.0 * h)
            } else {
                (v[j + 1] - v[j - 1]) / (2.0 * h)
            }
        })
        .collect()
}

/// `∫_lo^hi φ′ψ′` on one edge.
fn integrate_cells_product(eg: &EdgeGrid, phi: &[f64], psi: &[f64], lo: f64, hi: f64) -> f64 {
    let dp = nodal_derivative(eg, phi);
    let dq = nodal_derivative(eg, psi);
    let prod: Vec<f64> = dp.iter().zip(&dq).map(|(a, b)| a * b).collect();
    integrate_nodal(eg, &prod, lo, hi)
}
