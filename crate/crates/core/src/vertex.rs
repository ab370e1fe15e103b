//! Trace space, boundary conditions `(A,B)`, projectors and the vertex form.
//!
//! The trace of a function is `[ψ] = ψ̲ ⊕ ψ̲′ ∈ ℂ^{2n}` with slots ordered
//! external edges, internal initial ends, internal final ends. The ψ̲′
//! block stores inward derivatives, i.e. `−ψ′(a_i)` at final ends.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr_normal as normal;
use serde::Serialize;
use thiserror::Error;

use crate::fields::GraphField;
use crate::graph::{EdgeId, End, MetricGraph, VertexId};
use crate::linalg::{self, c, CMat, CVec};

/// Tolerance on the Hermitian defect of normalized `AB†`.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Relative singular-value threshold for ranks.
pub const RANK_TOL: f64 = 1e-10;
/// Tolerance for projector comparisons and commutators.
pub const PROJECTOR_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BcError {
    #[error("rank(A|B) = {0}, expected full rank")]
    RankDeficient(usize),
    #[error("AB† is not Hermitian: defect {0:e}")]
    NonHermitianDefect(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("AA† + BB† is singular")]
    SingularGram,
    #[error("boundary condition is not local at vertex {vertex}: commutator norm {norm:e}")]
    NotLocal { vertex: String, norm: f64 },
    #[error("missing derivative of field on edge {0:?}")]
    MissingDerivative(EdgeId),
    #[error("vertex {vertex}: expected {expected}x{expected} blocks, got {rows}x{cols}")]
    BlockShape {
        vertex: String,
        expected: usize,
        rows: usize,
        cols: usize,
    },
    #[error("boundary condition is not real: max imaginary part {0:e}")]
    NotReal(f64),
}

/// Simple Box–Muller standard normal sampler.
mod rand_distr_normal {
    use rand::Rng;

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> f64 {
        let u: f64 = 1.0 - rng.gen::<f64>();
        let v: f64 = rng.gen();
        (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
    }
}

/// Slot layout of the trace space `K = K_E ⊕ K_I⁻ ⊕ K_I⁺`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TraceLayout {
    pub n_external: usize,
    pub n_internal: usize,
}

impl TraceLayout {
    pub fn of(g: &MetricGraph) -> Self {
        TraceLayout {
            n_external: g.external_count(),
            n_internal: g.internal_count(),
        }
    }

    /// `n = |E| + 2|I|`.
    pub fn dim(&self) -> usize {
        self.n_external + 2 * self.n_internal
    }

    /// Slot of an edge end. With externals first in the dense edge order the
    /// initial slot of any edge equals its index.
    pub fn slot(&self, e: EdgeId, end: End) -> usize {
        match end {
            End::Initial => e.0,
            End::Final => {
                assert!(e.0 >= self.n_external, "external edges have no final end");
                e.0 + self.n_internal
            }
        }
    }

    /// Inverse of [`TraceLayout::slot`].
    pub fn slot_owner(&self, s: usize) -> (EdgeId, End) {
        if s < self.n_external + self.n_internal {
            (EdgeId(s), End::Initial)
        } else {
            (EdgeId(s - self.n_internal), End::Final)
        }
    }

    /// Sorted slots incident with `v` (the set `L_v`).
    pub fn vertex_slots(&self, g: &MetricGraph, v: VertexId) -> Vec<usize> {
        let mut s: Vec<usize> = g.incident(v).iter().map(|&(e, end)| self.slot(e, end)).collect();
        s.sort_unstable();
        s
    }

    /// For every slot, the vertex it belongs to.
    pub fn slot_vertices(&self, g: &MetricGraph) -> Vec<VertexId> {
        let mut out = vec![VertexId(0); self.dim()];
        for v in g.vertices() {
            for s in self.vertex_slots(g, v) {
                out[s] = v;
            }
        }
        out
    }
}

/// A vector of `^dK = K ⊕ K`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceVector {
    pub values: CVec,
}

impl TraceVector {
    pub fn zeros(n: usize) -> Self {
        TraceVector {
            values: CVec::zeros(2 * n),
        }
    }

    pub fn from_parts(lower: &[Complex64], upper: &[Complex64]) -> Self {
        assert_eq!(lower.len(), upper.len());
        let mut values = CVec::zeros(2 * lower.len());
        for (i, (&a, &b)) in lower.iter().zip(upper).enumerate() {
            values[i] = a;
            values[lower.len() + i] = b;
        }
        TraceVector { values }
    }

    pub fn from_real(lower: &[f64], upper: &[f64]) -> Self {
        let l: Vec<Complex64> = lower.iter().map(|&x| c(x)).collect();
        let u: Vec<Complex64> = upper.iter().map(|&x| c(x)).collect();
        Self::from_parts(&l, &u)
    }

    pub fn dim(&self) -> usize {
        self.values.len() / 2
    }

    /// Boundary values ψ̲.
    pub fn values_part(&self) -> CVec {
        self.values.rows(0, self.dim()).into_owned()
    }

    /// Inward derivatives ψ̲′.
    pub fn derivatives_part(&self) -> CVec {
        self.values.rows(self.dim(), self.dim()).into_owned()
    }
}

/// Trace `[ψ]` of an analytic field.
pub fn trace(g: &MetricGraph, f: &dyn GraphField) -> Result<TraceVector, BcError> {
    let layout = TraceLayout::of(g);
    let n = layout.dim();
    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for e in g.edge_ids() {
        let edge = g.edge(e);
        let d0 = f.derivative(e, 0.0, 1).ok_or(BcError::MissingDerivative(e))?;
        let s = layout.slot(e, End::Initial);
        lower[s] = f.value(e, 0.0);
        upper[s] = d0;
        if edge.to.is_some() {
            let a = edge.length;
            let da = f.derivative(e, a, 1).ok_or(BcError::MissingDerivative(e))?;
            let s = layout.slot(e, End::Final);
            lower[s] = f.value(e, a);
            upper[s] = -da;
        }
    }
    Ok(TraceVector::from_real(&lower, &upper))
}

/// `J = [[0, 1], [−1, 0]]`.
pub fn j_matrix(n: usize) -> CMat {
    let mut j = CMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = c(1.0);
        j[(n + i, i)] = c(-1.0);
    }
    j
}

/// `Ω = [[0, 1], [0, 0]]`, so that `⟨[φ], Ω[ψ]⟩ = ⟨φ̲, ψ̲′⟩`.
pub fn omega_matrix(n: usize) -> CMat {
    let mut o = CMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        o[(i, n + i)] = c(1.0);
    }
    o
}

/// Hermitian symplectic form `ω(u, w) = ⟨u, J w⟩`.
pub fn symplectic_form(u: &CVec, w: &CVec) -> Complex64 {
    let n = u.len() / 2;
    let mut s = Complex64::new(0.0, 0.0);
    for i in 0..n {
        s += u[i].conj() * w[n + i] - u[n + i].conj() * w[i];
    }
    s
}

/// Preset local vertex conditions.
#[derive(Clone, Debug, PartialEq)]
pub enum VertexCondition {
    Dirichlet,
    Neumann,
    Kirchhoff,
    /// Continuity plus `Σ ψ̲′ = γ ψ(v)`.
    Delta(f64),
    /// Raw `deg×deg` blocks in the order of the vertex's slots.
    Raw { a: CMat, b: CMat },
}

impl VertexCondition {
    /// Local `(A_v, B_v)` for a vertex of degree `d`.
    pub fn blocks(&self, d: usize) -> (CMat, CMat) {
        let mut a = CMat::zeros(d, d);
        let mut b = CMat::zeros(d, d);
        match self {
            VertexCondition::Dirichlet => a.fill_with_identity(),
            VertexCondition::Neumann => b.fill_with_identity(),
            VertexCondition::Kirchhoff | VertexCondition::Delta(_) => {
                for r in 0..d - 1 {
                    a[(r, r)] = c(1.0);
                    a[(r, r + 1)] = c(-1.0);
                }
                for col in 0..d {
                    b[(d - 1, col)] = c(1.0);
                }
                if let VertexCondition::Delta(gamma) = self {
                    a[(d - 1, 0)] = c(-gamma);
                }
            }
            VertexCondition::Raw { a: ra, b: rb } => {
                a = ra.clone();
                b = rb.clone();
            }
        }
        (a, b)
    }
}

/// A pair `(A, B)` of `n×n` matrices defining `M(A,B) = ker(A, B)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundarySpec {
    pub a: CMat,
    pub b: CMat,
}

impl BoundarySpec {
    pub fn new(a: CMat, b: CMat) -> Self {
        BoundarySpec { a, b }
    }

    pub fn from_real(a: DMatrix<f64>, b: DMatrix<f64>) -> Self {
        BoundarySpec {
            a: linalg::to_complex(&a),
            b: linalg::to_complex(&b),
        }
    }

    pub fn dirichlet(n: usize) -> Self {
        BoundarySpec::new(CMat::identity(n, n), CMat::zeros(n, n))
    }

    pub fn neumann(n: usize) -> Self {
        BoundarySpec::new(CMat::zeros(n, n), CMat::identity(n, n))
    }

    /// Block-diagonal spec from one condition per vertex.
    pub fn from_vertex_conditions(
        g: &MetricGraph,
        conds: &[VertexCondition],
    ) -> Result<Self, BcError> {
        let layout = TraceLayout::of(g);
        let n = layout.dim();
        if conds.len() != g.vertex_count() {
            return Err(BcError::DimensionMismatch(conds.len(), g.vertex_count()));
        }
        let mut a = CMat::zeros(n, n);
        let mut b = CMat::zeros(n, n);
        let mut row = 0;
        for v in g.vertices() {
            let slots = layout.vertex_slots(g, v);
            let d = slots.len();
            let (av, bv) = conds[v.0].blocks(d);
            for m in [&av, &bv] {
                if m.shape() != (d, d) {
                    return Err(BcError::BlockShape {
                        vertex: g.vertex_name(v).to_string(),
                        expected: d,
                        rows: m.nrows(),
                        cols: m.ncols(),
                    });
                }
            }
            for r in 0..d {
                for (k, &s) in slots.iter().enumerate() {
                    a[(row + r, s)] = av[(r, k)];
                    b[(row + r, s)] = bv[(r, k)];
                }
            }
            row += d;
        }
        Ok(BoundarySpec { a, b })
    }

    /// Same condition at every vertex.
    pub fn uniform(g: &MetricGraph, cond: VertexCondition) -> Self {
        let conds = vec![cond; g.vertex_count()];
        Self::from_vertex_conditions(g, &conds).expect("preset blocks have matching shape")
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// `(CA, CB)`.
    pub fn transformed(&self, cm: &CMat) -> Self {
        BoundarySpec {
            a: cm * &self.a,
            b: cm * &self.b,
        }
    }

    /// Residual `A ψ̲ + B ψ̲′` of a trace.
    pub fn residual(&self, tr: &TraceVector) -> CVec {
        &self.a * tr.values_part() + &self.b * tr.derivatives_part()
    }

    fn check_shape(&self) -> Result<(), BcError> {
        let n = self.a.nrows();
        for m in [&self.a, &self.b] {
            if m.nrows() != n || m.ncols() != n {
                return Err(BcError::DimensionMismatch(m.nrows(), m.ncols()));
            }
        }
        Ok(())
    }
}

/// Result of the independent kernel-basis check.
#[derive(Clone, Debug, Serialize)]
pub struct IsotropyOracle {
    pub kernel_dim: usize,
    /// Largest `|ω(u_i, u_j)|` over an orthonormal kernel basis.
    pub max_omega: f64,
}

impl IsotropyOracle {
    pub fn maximal_isotropic(&self, n: usize) -> bool {
        self.kernel_dim == n && self.max_omega <= PROJECTOR_TOL
    }
}

/// Kernel of `(A | B)` and the largest value of ω on it.
pub fn isotropy_oracle(spec: &BoundarySpec) -> IsotropyOracle {
    let ab = linalg::hcat(&spec.a, &spec.b);
    let k = linalg::kernel(&ab, RANK_TOL);
    let mut max_omega: f64 = 0.0;
    for i in 0..k.ncols() {
        for j in 0..k.ncols() {
            let w = symplectic_form(&k.column(i).into_owned(), &k.column(j).into_owned());
            max_omega = max_omega.max(w.norm());
        }
    }
    IsotropyOracle {
        kernel_dim: k.ncols(),
        max_omega,
    }
}

/// A validated boundary condition with its projector and vertex form.
#[derive(Clone, Debug)]
pub struct ValidatedSpec {
    /// Normalized so that the largest singular value of `(A|B)` is 1.
    pub spec: BoundarySpec,
    pub rank: usize,
    pub hermitian_defect: f64,
    pub oracle: IsotropyOracle,
    projector: CMat,
    omega: CMat,
}

impl ValidatedSpec {
    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// `P_M`.
    pub fn projector(&self) -> &CMat {
        &self.projector
    }

    /// `Ω_M = P_M Ω P_M`.
    pub fn omega(&self) -> &CMat {
        &self.omega
    }

    /// `AB†` of the normalized pair.
    pub fn ab_adjoint(&self) -> CMat {
        &self.spec.a * self.spec.b.adjoint()
    }

    pub fn omega_min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.omega)
    }

    /// `Ω_M ⪰ 0` up to `tol`.
    pub fn omega_psd(&self, tol: f64) -> bool {
        self.omega_min_eigenvalue() >= -tol
    }

    /// `P_M` has real entries (up to rounding).
    pub fn is_real(&self) -> bool {
        linalg::max_imag(&self.projector) <= 1e-12
    }

    pub fn require_real(&self) -> Result<(), BcError> {
        let im = linalg::max_imag(&self.projector);
        if im > 1e-12 {
            Err(BcError::NotReal(im))
        } else {
            Ok(())
        }
    }

    /// Quadratic vertex form `⟨[φ], Ω_M [ψ]⟩`.
    pub fn vertex_form(&self, phi: &TraceVector, psi: &TraceVector) -> Complex64 {
        phi.values.dotc(&(&self.omega * &psi.values))
    }

    /// A random vector of `M`: the projection of a Gaussian vector.
    pub fn random_trace<R: Rng>(&self, rng: &mut R) -> CVec {
        let n2 = 2 * self.dim();
        let z = CVec::from_fn(n2, |_, _| {
            Complex64::new(normal::sample(rng), normal::sample(rng))
        });
        &self.projector * z
    }

    /// A random real vector of `M`; requires a real projector.
    pub fn random_real_trace<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let n2 = 2 * self.dim();
        let z = CVec::from_fn(n2, |_, _| c(normal::sample(rng)));
        (&self.projector * z).iter().map(|w| w.re).collect()
    }
}

/// Validate `(A, B)`: full rank and Hermitian `AB†`, cross-checked against
/// the kernel-basis isotropy oracle.
pub fn validate_bc(spec: &BoundarySpec) -> Result<ValidatedSpec, BcError> {
    spec.check_shape()?;
    let n = spec.dim();
    let ab = linalg::hcat(&spec.a, &spec.b);
    let smax = linalg::op_norm(&ab);
    if smax == 0.0 {
        return Err(BcError::RankDeficient(0));
    }
    let norm = BoundarySpec {
        a: &spec.a / c(smax),
        b: &spec.b / c(smax),
    };
    let r = linalg::rank(&linalg::hcat(&norm.a, &norm.b), RANK_TOL);
    if r < n {
        return Err(BcError::RankDeficient(r));
    }
    let abd = &norm.a * norm.b.adjoint();
    let defect = linalg::op_norm(&(&abd - abd.adjoint()));
    if defect > HERMITIAN_TOL {
        return Err(BcError::NonHermitianDefect(defect));
    }
    let p = projector(&norm)?;
    let omega = &p * omega_matrix(n) * &p;
    let omega = (&omega + omega.adjoint()) * c(0.5);
    Ok(ValidatedSpec {
        oracle: isotropy_oracle(&norm),
        spec: norm,
        rank: r,
        hermitian_defect: defect,
        projector: p,
        omega,
    })
}

fn gram_inverse(spec: &BoundarySpec) -> Result<CMat, BcError> {
    let gram = &spec.a * spec.a.adjoint() + &spec.b * spec.b.adjoint();
    let scale = linalg::op_norm(&gram);
    let inv = gram.clone().try_inverse().ok_or(BcError::SingularGram)?;
    if scale == 0.0 || linalg::op_norm(&inv) * scale > 1e14 {
        return Err(BcError::SingularGram);
    }
    Ok(inv)
}

/// `X = [−B†; A†]`, whose columns span `M(A,B)`.
fn span_matrix(spec: &BoundarySpec) -> CMat {
    let n = spec.dim();
    let mut x = CMat::zeros(2 * n, n);
    x.view_mut((0, 0), (n, n)).copy_from(&(-spec.b.adjoint()));
    x.view_mut((n, 0), (n, n)).copy_from(&spec.a.adjoint());
    x
}

/// Orthogonal projector onto `M(A,B)`: `X (AA† + BB†)⁻¹ X†`.
pub fn projector(spec: &BoundarySpec) -> Result<CMat, BcError> {
    spec.check_shape()?;
    let g = gram_inverse(spec)?;
    let x = span_matrix(spec);
    let p = &x * g * x.adjoint();
    Ok((&p + p.adjoint()) * c(0.5))
}

/// Closed form `Ω_M = −X G⁻¹ A B† G⁻¹ X†`.
pub fn omega_closed_form(spec: &BoundarySpec) -> Result<CMat, BcError> {
    let g = gram_inverse(spec)?;
    let x = span_matrix(spec);
    let abd = &spec.a * spec.b.adjoint();
    Ok(-(&x * &g * abd * &g * x.adjoint()))
}

/// `Ω_M = P_M Ω P_M` of a validated spec.
pub fn omega_m(spec: &BoundarySpec) -> Result<CMat, BcError> {
    Ok(validate_bc(spec)?.omega.clone())
}

/// Same maximal isotropic subspace, compared through projectors.
pub fn equivalent_bc(s1: &BoundarySpec, s2: &BoundarySpec) -> Result<bool, BcError> {
    if s1.dim() != s2.dim() {
        return Err(BcError::DimensionMismatch(s1.dim(), s2.dim()));
    }
    let p1 = projector(s1)?;
    let p2 = projector(s2)?;
    Ok(linalg::op_norm(&(p1 - p2)) <= PROJECTOR_TOL)
}

/// Diagonal `^dQ_v` selecting the doubled slots of one vertex.
pub fn vertex_selector(n: usize, slots: &[usize]) -> CMat {
    let mut q = CMat::zeros(2 * n, 2 * n);
    for &s in slots {
        q[(s, s)] = c(1.0);
        q[(n + s, n + s)] = c(1.0);
    }
    q
}

/// Per-vertex part of a local boundary condition.
#[derive(Clone, Debug)]
pub struct VertexBlock {
    pub vertex: VertexId,
    /// Slots `L_v`, sorted.
    pub slots: Vec<usize>,
    /// Local `(A_v, B_v)` acting on `(ψ̲_v, ψ̲′_v)` in slot order.
    pub a: CMat,
    pub b: CMat,
    /// `P_v = ^dQ_v P_M`.
    pub projector: CMat,
    /// `Ω_v = P_v Ω P_v`.
    pub omega: CMat,
    pub commutator: f64,
}

#[derive(Clone, Debug)]
pub struct LocalDecomposition {
    pub blocks: Vec<VertexBlock>,
}

impl LocalDecomposition {
    pub fn block(&self, v: VertexId) -> &VertexBlock {
        &self.blocks[v.0]
    }
}

/// Rows spanning the orthogonal complement of the range of a local
/// projector, i.e. a pair `(A_v | B_v)` with kernel `M_v`.
fn complement_rows(p_loc: &CMat, d: usize, real: bool) -> (CMat, CMat) {
    let comp = CMat::identity(2 * d, 2 * d) - p_loc;
    let rows = if real {
        let re = linalg::real_part(&comp);
        let eig = re.symmetric_eigen();
        let mut idx: Vec<usize> = (0..2 * d).collect();
        idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let mut r = CMat::zeros(d, 2 * d);
        for (k, &i) in idx.iter().take(d).enumerate() {
            for m in 0..2 * d {
                r[(k, m)] = c(eig.eigenvectors[(m, i)]);
            }
        }
        r
    } else {
        let h = (&comp + comp.adjoint()) * c(0.5);
        let eig = h.symmetric_eigen();
        let mut idx: Vec<usize> = (0..2 * d).collect();
        idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let mut r = CMat::zeros(d, 2 * d);
        for (k, &i) in idx.iter().take(d).enumerate() {
            for m in 0..2 * d {
                r[(k, m)] = eig.eigenvectors[(m, i)].conj();
            }
        }
        r
    };
    (
        rows.columns(0, d).into_owned(),
        rows.columns(d, d).into_owned(),
    )
}

/// Split a spec into vertex blocks; fails unless every `^dQ_v` commutes
/// with `P_M`.
pub fn local_decompose(g: &MetricGraph, spec: &ValidatedSpec) -> Result<LocalDecomposition, BcError> {
    let layout = TraceLayout::of(g);
    let n = layout.dim();
    if spec.dim() != n {
        return Err(BcError::DimensionMismatch(spec.dim(), n));
    }
    let p = spec.projector();
    let om = omega_matrix(n);
    let real = spec.is_real();
    let mut blocks = Vec::with_capacity(g.vertex_count());
    for v in g.vertices() {
        let slots = layout.vertex_slots(g, v);
        let q = vertex_selector(n, &slots);
        let comm = linalg::op_norm(&(&q * p - p * &q));
        if comm > PROJECTOR_TOL {
            return Err(BcError::NotLocal {
                vertex: g.vertex_name(v).to_string(),
                norm: comm,
            });
        }
        let pv = &q * p;
        let omega = &pv * &om * &pv;
        let d = slots.len();
        let idx: Vec<usize> = slots.iter().copied().chain(slots.iter().map(|s| n + s)).collect();
        let p_loc = CMat::from_fn(2 * d, 2 * d, |i, j| p[(idx[i], idx[j])]);
        let (a, b) = complement_rows(&p_loc, d, real);
        blocks.push(VertexBlock {
            vertex: v,
            slots,
            a,
            b,
            projector: pv,
            omega,
            commutator: comm,
        });
    }
    Ok(LocalDecomposition { blocks })
}

/// `Ω_{M,V′} = P_{V′} Ω_M P_{V′}` with `P_{V′} = Σ_{v∈V′} P_v`.
pub fn omega_restricted(spec: &ValidatedSpec, local: &LocalDecomposition, subset: &[VertexId]) -> CMat {
    let n2 = 2 * spec.dim();
    let mut pv = CMat::zeros(n2, n2);
    for &v in subset {
        pv += &local.block(v).projector;
    }
    &pv * spec.omega() * &pv
}

/// Random boundary conditions for property suites.
pub mod random {
    use super::*;
    use nalgebra::DMatrix;

    fn gaussian<R: Rng>(rng: &mut R, n: usize, complex: bool) -> CMat {
        CMat::from_fn(n, n, |_, _| {
            Complex64::new(
                normal::sample(rng),
                if complex { normal::sample(rng) } else { 0.0 },
            )
        })
    }

    /// A random invertible matrix with condition number below 1e3.
    pub fn invertible<R: Rng>(rng: &mut R, n: usize, complex: bool) -> CMat {
        loop {
            let m = gaussian(rng, n, complex);
            let s = linalg::singular_values(&m);
            if s[s.len() - 1] * 1e3 > s[0] {
                return m;
            }
        }
    }

    /// Haar-like random unitary via QR.
    pub fn unitary<R: Rng>(rng: &mut R, n: usize) -> CMat {
        gaussian(rng, n, true).qr().q()
    }

    /// Random complex valid spec: `A = −(U−1)/2`, `B = (i/2)(U+1)`, mixed by
    /// a random invertible `C`.
    pub fn complex_spec<R: Rng>(rng: &mut R, n: usize) -> BoundarySpec {
        let u = unitary(rng, n);
        let id = CMat::identity(n, n);
        let a = (&u - &id) * c(-0.5);
        let b = (&u + &id) * Complex64::new(0.0, 0.5);
        BoundarySpec { a, b }.transformed(&invertible(rng, n, true))
    }

    /// Random real valid spec: `A = Q sin Θ Qᵀ`, `B = Q cos Θ Qᵀ`, mixed by
    /// a random invertible `C`.
    pub fn real_spec<R: Rng>(rng: &mut R, n: usize) -> BoundarySpec {
        let g = DMatrix::from_fn(n, n, |_, _| normal::sample(rng));
        let q = g.qr().q();
        let th: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::PI)).collect();
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(n, th.iter().map(|t| t.sin())));
        let co = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(n, th.iter().map(|t| t.cos())));
        let a = &q * s * q.transpose();
        let b = &q * co * q.transpose();
        BoundarySpec::from_real(a, b).transformed(&invertible(rng, n, false))
    }

    /// Random real local spec: an independent real condition per vertex.
    pub fn local_real_spec<R: Rng>(rng: &mut R, g: &MetricGraph) -> BoundarySpec {
        let layout = TraceLayout::of(g);
        let conds: Vec<VertexCondition> = g
            .vertices()
            .map(|v| {
                let d = layout.vertex_slots(g, v).len();
                let s = real_spec(rng, d);
                VertexCondition::Raw { a: s.a, b: s.b }
            })
            .collect();
        BoundarySpec::from_vertex_conditions(g, &conds).expect("shapes match")
    }

    /// Random real local spec with `Ω_M ⪰ 0`: each vertex picks a random
    /// orthogonal frame and nonnegative Robin weights or Dirichlet rows.
    pub fn local_psd_spec<R: Rng>(rng: &mut R, g: &MetricGraph) -> BoundarySpec {
        let layout = TraceLayout::of(g);
        let conds: Vec<VertexCondition> = g
            .vertices()
            .map(|v| {
                let d = layout.vertex_slots(g, v).len();
                let gm = DMatrix::from_fn(d, d, |_, _| normal::sample(rng));
                let q = gm.qr().q();
                // ψ̲′ = w ψ̲ (w ≥ 0) or ψ̲ = 0 per eigen-direction.
                let mut a = DMatrix::zeros(d, d);
                let mut b = DMatrix::zeros(d, d);
                for k in 0..d {
                    let (ak, bk) = match rng.gen_range(0..3) {
                        0 => (1.0, 0.0),
                        1 => (0.0, 1.0),
                        _ => (-rng.gen_range(0.0..3.0), 1.0),
                    };
                    a[(k, k)] = ak;
                    b[(k, k)] = bk;
                }
                let a = &q * a * q.transpose();
                let b = &q * b * q.transpose();
                VertexCondition::Raw {
                    a: linalg::to_complex(&a),
                    b: linalg::to_complex(&b),
                }
            })
            .collect();
        BoundarySpec::from_vertex_conditions(g, &conds).expect("shapes match")
    }
}
