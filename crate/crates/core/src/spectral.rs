//! Eigenpairs of `−Δ_M` on compact graphs and the spectral wave evolution.
//!
//! On each internal edge an eigenfunction is `α c_λ(x) + β s_λ(x)` with
//! `c_λ = cos(kx)`, `s_λ = sin(kx)/k`, `λ = k²`; for `λ < 0` these become
//! `cosh`, `sinh(κx)/κ`, and at `λ = 0` they are `1` and `x`. Both are
//! entire in `λ`, so the secular matrix has no spurious singularity at 0.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::fields::GraphField;
use crate::graph::{EdgeId, MetricGraph};
use crate::linalg::{self, c, CMat, CVec};
use crate::quad;
use crate::vertex::{BcError, BoundarySpec, TraceLayout, TraceVector, ValidatedSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("graph has external edges; spectral methods need a compact graph")]
    NonCompactGraph,
    #[error("root count changes under scan refinement up to k = {k_max}: {counts:?}")]
    ScanResolutionTooCoarse { k_max: f64, counts: Vec<usize> },
    #[error("expansion residual {residual:e} exceeds {limit:e}")]
    TruncationTooLarge { residual: f64, limit: f64 },
    #[error("m² = {m2} leaves negative base λ + m² = {base}")]
    NegativeBase { m2: f64, base: f64 },
    #[error("estimate {name} violated at t = {t}: slack {slack:e}")]
    EstimateViolated { name: String, t: f64, slack: f64 },
    #[error(transparent)]
    Bc(#[from] BcError),
}

/// `k` on the real axis or `k = iκ` on the imaginary axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Wavenumber {
    Real(f64),
    Imaginary(f64),
}

impl Wavenumber {
    /// Eigenvalue `λ = k²` of `−Δ_M`.
    pub fn lambda(&self) -> f64 {
        match *self {
            Wavenumber::Real(k) => k * k,
            Wavenumber::Imaginary(kappa) => -kappa * kappa,
        }
    }

    pub fn as_complex(&self) -> Complex64 {
        match *self {
            Wavenumber::Real(k) => c(k),
            Wavenumber::Imaginary(kappa) => Complex64::new(0.0, kappa),
        }
    }

    pub fn from_lambda(lambda: f64) -> Self {
        if lambda >= 0.0 {
            Wavenumber::Real(lambda.sqrt())
        } else {
            Wavenumber::Imaginary((-lambda).sqrt())
        }
    }
}

/// `(c_λ(x), s_λ(x))`.
pub fn cs(lambda: f64, x: f64) -> (f64, f64) {
    if lambda > 0.0 {
        let k = lambda.sqrt();
        ((k * x).cos(), (k * x).sin() / k)
    } else if lambda < 0.0 {
        let k = (-lambda).sqrt();
        ((k * x).cosh(), (k * x).sinh() / k)
    } else {
        (1.0, x)
    }
}

/// Derivative of order `m` of `α c_λ + β s_λ` at `x`, using `c′ = −λ s`,
/// `s′ = c`.
pub fn mode_derivative(lambda: f64, alpha: Complex64, beta: Complex64, x: f64, m: usize) -> Complex64 {
    let (cx, sx) = cs(lambda, x);
    let pow = (-lambda).powi((m / 2) as i32);
    if m % 2 == 0 {
        (alpha * cx + beta * sx) * pow
    } else {
        (-alpha * lambda * sx + beta * cx) * pow
    }
}

/// `∫₀ᵃ c², ∫₀ᵃ c s, ∫₀ᵃ s²`.
fn edge_integrals(lambda: f64, a: f64) -> (f64, f64, f64) {
    let z = lambda * a * a;
    if z.abs() < 1e-3 {
        let l = lambda;
        let cc = a - l * a.powi(3) / 3.0 + l * l * a.powi(5) / 15.0 - 2.0 * l.powi(3) * a.powi(7) / 315.0;
        let cs_ = a * a / 2.0 - l * a.powi(4) / 6.0 + l * l * a.powi(6) / 45.0 - l.powi(3) * a.powi(8) / 630.0;
        let ss = a.powi(3) / 3.0 - l * a.powi(5) / 15.0 + 2.0 * l * l * a.powi(7) / 315.0
            - l.powi(3) * a.powi(9) / 2835.0;
        (cc, cs_, ss)
    } else if lambda > 0.0 {
        let k = lambda.sqrt();
        let s2 = (2.0 * k * a).sin() / (4.0 * k);
        (a / 2.0 + s2, (k * a).sin().powi(2) / (2.0 * lambda), (a / 2.0 - s2) / lambda)
    } else {
        let k = (-lambda).sqrt();
        let s2 = (2.0 * k * a).sinh() / (4.0 * k);
        (a / 2.0 + s2, (k * a).sinh().powi(2) / (2.0 * k * k), (s2 - a / 2.0) / (k * k))
    }
}

/// Coefficients `(α_i, β_i)` per internal edge, flattened as
/// `[α_0, β_0, α_1, β_1, …]`.
fn trace_matrices(g: &MetricGraph, lambda: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let layout = TraceLayout::of(g);
    let n = layout.dim();
    let m = 2 * g.internal_count();
    let mut tl = DMatrix::zeros(n, m);
    let mut tu = DMatrix::zeros(n, m);
    for (p, e) in g.internal_edges().enumerate() {
        let a = g.length(e);
        let (ca, sa) = cs(lambda, a);
        let s0 = layout.slot(e, crate::graph::End::Initial);
        let s1 = layout.slot(e, crate::graph::End::Final);
        tl[(s0, 2 * p)] = 1.0;
        tu[(s0, 2 * p + 1)] = 1.0;
        tl[(s1, 2 * p)] = ca;
        tl[(s1, 2 * p + 1)] = sa;
        tu[(s1, 2 * p)] = lambda * sa;
        tu[(s1, 2 * p + 1)] = -ca;
    }
    (tl, tu)
}

fn require_compact(g: &MetricGraph) -> Result<(), SpectralError> {
    if g.is_compact() {
        Ok(())
    } else {
        Err(SpectralError::NonCompactGraph)
    }
}

/// `Z(k) = A T(k) + B T′(k)`; `Z(k)·coeffs = 0` iff the edge-wise ansatz is
/// an eigenfunction with eigenvalue `k²`.
pub fn secular_matrix(g: &MetricGraph, spec: &BoundarySpec, k: Wavenumber) -> Result<CMat, SpectralError> {
    require_compact(g)?;
    let (tl, tu) = trace_matrices(g, k.lambda());
    Ok(&spec.a * linalg::to_complex(&tl) + &spec.b * linalg::to_complex(&tu))
}

/// Secular matrix with unit rows, over the per-edge bases of
/// [`edge_basis`].
fn normalized_secular(g: &MetricGraph, spec: &BoundarySpec, lambda: f64) -> CMat {
    let (tl, tu) = stable_trace_matrices(g, lambda);
    let mut z = &spec.a * linalg::to_complex(&tl) + &spec.b * linalg::to_complex(&tu);
    // Row weights depend on (A, B) and |k| only, so a row that vanishes at
    // a root stays small.
    let k = lambda.abs().sqrt().max(1.0);
    for i in 0..z.nrows() {
        let w = spec.a.row(i).norm() + k * spec.b.row(i).norm();
        if w > 0.0 {
            z.row_mut(i).unscale_mut(w);
        }
    }
    z
}

fn stable_trace_matrices(g: &MetricGraph, lambda: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    if lambda < 0.0 {
        exp_trace_matrices(g, (-lambda).sqrt())
    } else {
        trace_matrices(g, lambda)
    }
}

/// Trace matrices for `λ = −κ²` in the basis `e^{−κx}`, `e^{−κ(a−x)}` on
/// edges with `κa > 1` (`c_λ`, `s_λ` otherwise).
fn exp_trace_matrices(g: &MetricGraph, kappa: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let layout = TraceLayout::of(g);
    let n = layout.dim();
    let m = 2 * g.internal_count();
    let mut tl = DMatrix::zeros(n, m);
    let mut tu = DMatrix::zeros(n, m);
    for (p, e) in g.internal_edges().enumerate() {
        let a = g.length(e);
        let s0 = layout.slot(e, crate::graph::End::Initial);
        let s1 = layout.slot(e, crate::graph::End::Final);
        let (i, j) = (2 * p, 2 * p + 1);
        if edge_basis(-kappa * kappa, a) == EdgeBasis::CosSin {
            let (ca, sa) = cs(-kappa * kappa, a);
            tl[(s0, i)] = 1.0;
            tu[(s0, j)] = 1.0;
            tl[(s1, i)] = ca;
            tl[(s1, j)] = sa;
            tu[(s1, i)] = -kappa * kappa * sa;
            tu[(s1, j)] = -ca;
            continue;
        }
        let ea = (-kappa * a).exp();
        tl[(s0, i)] = 1.0;
        tl[(s0, j)] = ea;
        tu[(s0, i)] = -kappa;
        tu[(s0, j)] = kappa * ea;
        tl[(s1, i)] = ea;
        tl[(s1, j)] = 1.0;
        tu[(s1, i)] = kappa * ea;
        tu[(s1, j)] = -kappa;
    }
    (tl, tu)
}

fn sigma_min(z: &CMat) -> f64 {
    linalg::singular_values(z).last().copied().unwrap_or(0.0)
}

/// The scan functional: real part of the phase-corrected determinant and
/// the smallest singular value.
struct Scanner<'a> {
    g: &'a MetricGraph,
    spec: &'a BoundarySpec,
    phase: Complex64,
    negative: bool,
}

impl<'a> Scanner<'a> {
    fn new(g: &'a MetricGraph, spec: &'a BoundarySpec, negative: bool, reach: f64) -> Self {
        let mut s = Scanner {
            g,
            spec,
            phase: c(1.0),
            negative,
        };
        // det Z is real up to a k-independent phase; fix it from the
        // largest sampled determinant.
        let mut best = c(0.0);
        for j in 1..=16 {
            let x = reach * j as f64 / 16.0 * 0.977;
            let d = s.eval_det(x);
            if d.norm() > best.norm() {
                best = d;
            }
        }
        if best.norm() > 0.0 {
            s.phase = best.conj() / best.norm();
        }
        s
    }

    fn lambda(&self, x: f64) -> f64 {
        if self.negative {
            -x * x
        } else {
            x * x
        }
    }

    fn eval_det(&self, x: f64) -> Complex64 {
        normalized_secular(self.g, self.spec, self.lambda(x)).determinant()
    }

    fn f(&self, x: f64) -> f64 {
        (self.phase * self.eval_det(x)).re
    }

    fn sigma(&self, x: f64) -> f64 {
        sigma_min(&normalized_secular(self.g, self.spec, self.lambda(x)))
    }

    fn multiplicity(&self, x: f64) -> usize {
        let z = normalized_secular(self.g, self.spec, self.lambda(x));
        let s = linalg::singular_values(&z);
        let smax = s.first().copied().unwrap_or(0.0);
        s.iter().filter(|&&v| v <= MULT_TOL * smax.max(1.0)).count()
    }
}

const MULT_TOL: f64 = 1e-8;
const SIGMA_ACCEPT: f64 = 1e-7;
const ZERO_CUT: f64 = 1e-7;

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        if hi - lo <= tol * (1.0 + hi.abs()) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..300 {
        if b - a <= tol * (1.0 + b.abs()) {
            break;
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
    }
    if f1 < f2 {
        x1
    } else {
        x2
    }
}

/// Roots with multiplicities in `(0, reach]` at one scan resolution.
fn scan_roots(sc: &Scanner<'_>, reach: f64, step: f64, tol: f64) -> Vec<(f64, usize)> {
    let n = (reach / step).ceil().max(1.0) as usize;
    let xs: Vec<f64> = (0..=n).map(|j| j as f64 * reach / n as f64).collect();
    let samples: Vec<(f64, f64)> = xs.par_iter().map(|&x| (sc.f(x), sc.sigma(x))).collect();
    let mut roots: Vec<f64> = Vec::new();
    for j in 0..n {
        let (f0, f1) = (samples[j].0, samples[j + 1].0);
        if j + 1 == n && f1 == 0.0 {
            roots.push(xs[j + 1]);
        } else if f0 != 0.0 && f1 != 0.0 && (f0 > 0.0) != (f1 > 0.0) {
            roots.push(bisect(|x| sc.f(x), xs[j], xs[j + 1], tol));
        } else if f1 == 0.0 {
            roots.push(xs[j + 1]);
        }
    }
    // Even-multiplicity roots do not change sign: catch them as minima of
    // the smallest singular value.
    for j in 1..n {
        let s = samples[j].1;
        if s < samples[j - 1].1 && s <= samples[j + 1].1 {
            let x = golden_min(|x| sc.sigma(x), xs[j - 1], xs[j + 1], tol);
            if sc.sigma(x) <= SIGMA_ACCEPT {
                roots.push(x);
            }
        }
    }
    if n >= 1 && samples[n].1 < samples[n - 1].1 {
        let x = golden_min(|x| sc.sigma(x), xs[n - 1], xs[n], tol);
        if sc.sigma(x) <= SIGMA_ACCEPT {
            roots.push(x);
        }
    }
    roots.sort_by(f64::total_cmp);
    let mut out: Vec<(f64, usize)> = Vec::new();
    for x in roots {
        if x < ZERO_CUT || x > reach * (1.0 + 1e-14) {
            continue;
        }
        if let Some(last) = out.last() {
            if x - last.0 <= 1e-8 * (1.0 + x) {
                continue;
            }
        }
        out.push((x, sc.multiplicity(x).max(1)));
    }
    out
}

/// Scan with refinement until two consecutive resolutions agree on the
/// root count.
fn stable_roots(
    sc: &Scanner<'_>,
    reach: f64,
    step: f64,
    tol: f64,
    max_refine: usize,
) -> Result<Vec<(f64, usize)>, SpectralError> {
    let mut counts = Vec::new();
    let mut prev: Option<Vec<(f64, usize)>> = None;
    let mut h = step;
    for _ in 0..=max_refine {
        let r = scan_roots(sc, reach, h, tol);
        let count: usize = r.iter().map(|x| x.1).sum();
        counts.push(count);
        if let Some(p) = &prev {
            let pc: usize = p.iter().map(|x| x.1).sum();
            if pc == count {
                return Ok(r);
            }
        }
        prev = Some(r);
        h /= 2.0;
    }
    Err(SpectralError::ScanResolutionTooCoarse { k_max: reach, counts })
}

/// Upper bound for `κ` over negative eigenvalues `−κ²`.
///
/// With `R` the largest ratio `−⟨ψ̲, ψ̲′⟩ / ‖ψ̲‖²` over `M`, a one-dimensional
/// trace inequality gives `κ ≤ 2 max(R, √(R / a_min))`.
pub fn negative_bound(g: &MetricGraph, spec: &ValidatedSpec) -> f64 {
    let a = &spec.spec.a;
    let b = &spec.spec.b;
    let bb = b * b.adjoint();
    let ba = b * a.adjoint();
    let ba = (&ba + ba.adjoint()) * c(0.5);
    let eig = ((&bb + bb.adjoint()) * c(0.5)).symmetric_eigen();
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let idx: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > 1e-12 * top.max(1e-300))
        .collect();
    if idx.is_empty() {
        return 0.0;
    }
    let mut w = CMat::zeros(bb.nrows(), idx.len());
    for (j, &i) in idx.iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt();
        w.set_column(j, &(eig.eigenvectors.column(i) / c(s)));
    }
    let r = linalg::hermitian_eigenvalues(&(w.adjoint() * ba * &w))
        .last()
        .copied()
        .unwrap_or(0.0)
        .max(0.0);
    if r <= 1e-12 {
        return 0.0;
    }
    let amin = g
        .internal_edges()
        .map(|e| g.length(e))
        .fold(f64::INFINITY, f64::min);
    2.0 * r.max((r / amin).sqrt())
}

/// Per-edge representation of an eigenfunction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EdgeBasis {
    /// `α c_λ(x) + β s_λ(x)`.
    CosSin,
    /// `α e^{−κx} + β e^{−κ(a−x)}` with `λ = −κ²`.
    Decaying,
}

/// Representation used on an edge of length `a` at eigenvalue `λ`.
pub fn edge_basis(lambda: f64, a: f64) -> EdgeBasis {
    if lambda < 0.0 && (-lambda).sqrt() * a > 1.0 {
        EdgeBasis::Decaying
    } else {
        EdgeBasis::CosSin
    }
}

/// One L²-normalized eigenfunction.
#[derive(Clone, Debug, Serialize)]
pub struct EigenPair {
    pub k: Wavenumber,
    /// Per internal edge `(α, β)` in the basis given by `basis`.
    pub coeffs: Vec<(Complex64, Complex64)>,
    pub basis: Vec<EdgeBasis>,
    /// Internal edge lengths.
    pub lengths: Vec<f64>,
    /// Multiplicity of the eigenvalue this function belongs to.
    pub multiplicity: usize,
    /// `‖Aψ̲ + Bψ̲′‖ / ‖coeffs‖`.
    pub residual: f64,
}

impl EigenPair {
    pub fn lambda(&self) -> f64 {
        self.k.lambda()
    }

    /// Derivative of order `m` on internal edge number `p`.
    pub fn eval_edge(&self, p: usize, x: f64, m: usize) -> Complex64 {
        let (a, b) = self.coeffs[p];
        match self.basis[p] {
            EdgeBasis::CosSin => mode_derivative(self.lambda(), a, b, x, m),
            EdgeBasis::Decaying => {
                let kappa = (-self.lambda()).sqrt();
                let len = self.lengths[p];
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                let km = kappa.powi(m as i32);
                a * (sign * km * (-kappa * x).exp()) + b * (km * (-kappa * (len - x)).exp())
            }
        }
    }

    /// Per-edge `(α, β)` for `α c_λ + β s_λ`.
    pub fn cs_coeffs(&self) -> Vec<(Complex64, Complex64)> {
        self.coeffs
            .iter()
            .zip(&self.basis)
            .zip(&self.lengths)
            .map(|((&(a, b), kind), &len)| match kind {
                EdgeBasis::CosSin => (a, b),
                EdgeBasis::Decaying => {
                    // e^{−κx} = c − κs, e^{−κ(a−x)} = e^{−κa}(c + κs).
                    let kappa = (-self.lambda()).sqrt();
                    let ea = (-kappa * len).exp();
                    (a + b * ea, (b * ea - a) * kappa)
                }
            })
            .collect()
    }

    /// Coefficients for `α cos(kx) + β sin(kx)` (or `α + βx` at `k = 0`).
    /// For large `κa` this form is ill-conditioned to evaluate.
    pub fn cos_sin_coeffs(&self) -> Vec<(Complex64, Complex64)> {
        let k = self.k.as_complex();
        self.cs_coeffs()
            .into_iter()
            .map(|(a, b)| if k.norm() == 0.0 { (a, b) } else { (a, b / k) })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralBasis {
    pub pairs: Vec<EigenPair>,
    pub k_max: f64,
    pub kappa_max: f64,
    /// `max |⟨φ_i, φ_j⟩ − δ_ij|`.
    pub gram_defect: f64,
    #[serde(skip)]
    lengths: Vec<f64>,
    #[serde(skip)]
    n_external: usize,
}

/// Options for [`eigenvalues`].
#[derive(Clone, Copy, Debug)]
pub struct ScanOptions {
    pub k_max: f64,
    /// Relative root tolerance in `k`.
    pub tol: f64,
    pub max_refinements: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            k_max: 30.0,
            tol: 1e-13,
            max_refinements: 6,
        }
    }
}

/// `∫ e^{−2κx}`, `∫ e^{−κx} e^{−κ(a−x)}`, `∫ e^{−2κ(a−x)}` over `[0, a]`.
fn decaying_integrals(lambda: f64, a: f64) -> (f64, f64, f64) {
    let kappa = (-lambda).sqrt();
    let d = -(-2.0 * kappa * a).exp_m1() / (2.0 * kappa);
    (d, a * (-kappa * a).exp(), d)
}

/// Gram matrix of coefficient vectors (as columns) at eigenvalue `λ`.
fn gram(g: &MetricGraph, lambda: f64, x: &CMat) -> CMat {
    let m = x.ncols();
    let mut gm = CMat::zeros(m, m);
    for (p, e) in g.internal_edges().enumerate() {
        let a = g.length(e);
        let (icc, ics, iss) = match edge_basis(lambda, a) {
            EdgeBasis::CosSin => edge_integrals(lambda, a),
            EdgeBasis::Decaying => decaying_integrals(lambda, a),
        };
        for i in 0..m {
            for j in 0..m {
                let (ai, bi) = (x[(2 * p, i)], x[(2 * p + 1, i)]);
                let (aj, bj) = (x[(2 * p, j)], x[(2 * p + 1, j)]);
                gm[(i, j)] += ai.conj() * aj * icc
                    + (ai.conj() * bj + bi.conj() * aj) * ics
                    + bi.conj() * bj * iss;
            }
        }
    }
    gm
}

fn eigenspace(
    g: &MetricGraph,
    spec: &BoundarySpec,
    lambda: f64,
    mult: usize,
    real: bool,
) -> Vec<EigenPair> {
    let z = normalized_secular(g, spec, lambda);
    let m = z.ncols();
    let mut x = CMat::zeros(m, mult);
    if real {
        let zr = linalg::real_part(&z);
        let rows = zr.nrows().max(m);
        let mut pad = DMatrix::<f64>::zeros(rows, m);
        pad.view_mut((0, 0), zr.shape()).copy_from(&zr);
        let svd = pad.svd(false, true);
        let vt = svd.v_t.unwrap();
        let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
        idx.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
        for (col, &i) in idx.iter().take(mult).enumerate() {
            for r in 0..m {
                x[(r, col)] = c(vt[(i, r)]);
            }
        }
    } else {
        let rows = z.nrows().max(m);
        let mut pad = CMat::zeros(rows, m);
        pad.view_mut((0, 0), z.shape()).copy_from(&z);
        let svd = pad.svd(false, true);
        let vt = svd.v_t.unwrap();
        let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
        idx.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
        for (col, &i) in idx.iter().take(mult).enumerate() {
            for r in 0..m {
                x[(r, col)] = vt[(i, r)].conj();
            }
        }
    }
    // L²-orthonormalize inside the eigenspace.
    let gm = gram(g, lambda, &x);
    let gm = (&gm + gm.adjoint()) * c(0.5);
    let l = gm.cholesky().expect("Gram matrix of independent functions").l();
    let linv_t = l.adjoint().try_inverse().expect("invertible");
    let y = &x * linv_t;
    let (tl, tu) = stable_trace_matrices(g, lambda);
    let zraw = &spec.a * linalg::to_complex(&tl) + &spec.b * linalg::to_complex(&tu);
    let lengths: Vec<f64> = g.internal_edges().map(|e| g.length(e)).collect();
    let basis: Vec<EdgeBasis> = lengths.iter().map(|&a| edge_basis(lambda, a)).collect();
    (0..mult)
        .map(|i| {
            let col = y.column(i).into_owned();
            let residual = (&zraw * &col).norm() / col.norm();
            EigenPair {
                k: Wavenumber::from_lambda(lambda),
                coeffs: (0..g.internal_count())
                    .map(|p| (col[2 * p], col[2 * p + 1]))
                    .collect(),
                basis: basis.clone(),
                lengths: lengths.clone(),
                multiplicity: mult,
                residual,
            }
        })
        .collect()
}

/// All eigenpairs with `k ∈ [0, k_max]` plus every negative eigenvalue.
pub fn eigenvalues(g: &MetricGraph, spec: &ValidatedSpec, opts: ScanOptions) -> Result<SpectralBasis, SpectralError> {
    require_compact(g)?;
    let s = &spec.spec;
    let real = spec.is_real();
    let total: f64 = g.internal_length();
    let step = std::f64::consts::PI / (8.0 * total);
    let mut found: Vec<(f64, usize)> = Vec::new();

    let kappa_max = negative_bound(g, spec);
    if kappa_max > 0.0 {
        let reach = kappa_max * 1.1 + step;
        let sc = Scanner::new(g, s, true, reach);
        for (kappa, m) in stable_roots(&sc, reach, step, opts.tol, opts.max_refinements)? {
            found.push((-kappa * kappa, m));
        }
    }
    {
        let z0 = normalized_secular(g, s, 0.0);
        let sv = linalg::singular_values(&z0);
        let smax = sv.first().copied().unwrap_or(0.0);
        let m0 = sv.iter().filter(|&&v| v <= MULT_TOL * smax.max(1.0)).count();
        if m0 > 0 {
            found.push((0.0, m0));
        }
    }
    if opts.k_max > 0.0 {
        let sc = Scanner::new(g, s, false, opts.k_max);
        for (k, m) in stable_roots(&sc, opts.k_max, step, opts.tol, opts.max_refinements)? {
            found.push((k * k, m));
        }
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0));

    let pairs: Vec<EigenPair> = found
        .par_iter()
        .map(|&(lambda, m)| eigenspace(g, s, lambda, m, real))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let mut basis = SpectralBasis {
        pairs,
        k_max: opts.k_max,
        kappa_max,
        gram_defect: 0.0,
        lengths: g.edges().iter().map(|e| e.length).collect(),
        n_external: g.external_count(),
    };
    basis.gram_defect = basis.gram_defect_quadrature(g);
    Ok(basis)
}

impl SpectralBasis {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.pairs.iter().map(EigenPair::lambda).collect()
    }

    /// Distinct eigenvalues with multiplicities.
    pub fn distinct(&self) -> Vec<(Wavenumber, usize)> {
        let mut out: Vec<(Wavenumber, usize)> = Vec::new();
        for p in &self.pairs {
            match out.last() {
                Some((k, _)) if k.lambda() == p.lambda() => {}
                _ => out.push((p.k, p.multiplicity)),
            }
        }
        out
    }

    /// `ε_M = min(inf spec, 0)`, restricted to the computed basis.
    pub fn epsilon(&self) -> f64 {
        self.pairs
            .iter()
            .map(EigenPair::lambda)
            .fold(0.0, f64::min)
    }

    /// `ρ_M(t) = cosh(t √(−ε_M))`.
    pub fn rho(&self, t: f64) -> f64 {
        (t * (-self.epsilon()).sqrt()).cosh()
    }

    /// Smallest admissible `m²`.
    pub fn default_m2(&self) -> f64 {
        (-self.epsilon()).max(0.0)
    }

    fn panel_width(&self) -> f64 {
        let kmax = self
            .pairs
            .iter()
            .map(|p| p.lambda().abs().sqrt())
            .fold(1.0, f64::max);
        (1.0 / kmax).min(0.1)
    }

    /// Value or derivative of basis function `i` on internal edge `e`.
    pub fn eval(&self, i: usize, e: EdgeId, x: f64, order: usize) -> Complex64 {
        self.pairs[i].eval_edge(e.0 - self.n_external, x, order)
    }

    fn edge_ids(&self) -> impl Iterator<Item = EdgeId> + '_ {
        (self.n_external..self.lengths.len()).map(EdgeId)
    }

    fn gram_defect_quadrature(&self, g: &MetricGraph) -> f64 {
        let n = self.len();
        let mut worst: f64 = 0.0;
        // Closed-form Gram blocks are exact for equal λ; across different λ
        // we integrate.
        for i in 0..n {
            for j in i..n {
                let v = if self.pairs[i].lambda() == self.pairs[j].lambda() {
                    let mut x = CMat::zeros(2 * g.internal_count(), 2);
                    for (p, &(a, b)) in self.pairs[i].coeffs.iter().enumerate() {
                        x[(2 * p, 0)] = a;
                        x[(2 * p + 1, 0)] = b;
                    }
                    for (p, &(a, b)) in self.pairs[j].coeffs.iter().enumerate() {
                        x[(2 * p, 1)] = a;
                        x[(2 * p + 1, 1)] = b;
                    }
                    gram(g, self.pairs[i].lambda(), &x)[(0, 1)]
                } else {
                    self.inner_basis(i, j)
                };
                let target = if i == j { 1.0 } else { 0.0 };
                let v = if i == j {
                    c(self.inner_basis(i, i).re)
                } else {
                    v
                };
                worst = worst.max((v - c(target)).norm());
            }
        }
        worst
    }

    fn inner_basis(&self, i: usize, j: usize) -> Complex64 {
        let pw = self.panel_width();
        let mut s = c(0.0);
        for e in self.edge_ids() {
            let a = self.lengths[e.0];
            let panels = (a / pw).ceil() as usize;
            let re = quad::integrate(
                |x| (self.eval(i, e, x, 0).conj() * self.eval(j, e, x, 0)).re,
                0.0,
                a,
                panels,
            );
            let im = quad::integrate(
                |x| (self.eval(i, e, x, 0).conj() * self.eval(j, e, x, 0)).im,
                0.0,
                a,
                panels,
            );
            s += Complex64::new(re, im);
        }
        s
    }

    /// Coefficients `⟨φ_n, f⟩` and the residual `(‖f‖² − Σ|c_n|²)^{1/2}`.
    pub fn expand(&self, f: &dyn GraphField) -> Expansion {
        let pw = self.panel_width().min(0.05);
        let mut coeffs = vec![c(0.0); self.len()];
        let mut norm2 = 0.0;
        for e in self.edge_ids() {
            let a = self.lengths[e.0];
            let br = f.breakpoints(e);
            norm2 += quad::integrate_with_breaks(|x| f.value(e, x).powi(2), 0.0, a, &br, pw);
            for (i, ci) in coeffs.iter_mut().enumerate() {
                let re = quad::integrate_with_breaks(|x| self.eval(i, e, x, 0).re * f.value(e, x), 0.0, a, &br, pw);
                let im = quad::integrate_with_breaks(|x| -self.eval(i, e, x, 0).im * f.value(e, x), 0.0, a, &br, pw);
                *ci += Complex64::new(re, im);
            }
        }
        let captured: f64 = coeffs.iter().map(|z| z.norm_sqr()).sum();
        Expansion {
            coeffs,
            residual: (norm2 - captured).max(0.0).sqrt(),
            norm: norm2.sqrt(),
        }
    }

    /// Expand Cauchy data, failing when either residual exceeds `limit`.
    pub fn expand_cauchy(
        &self,
        psi0: &dyn GraphField,
        psi_dot0: &dyn GraphField,
        limit: f64,
    ) -> Result<(Expansion, Expansion), SpectralError> {
        let a = self.expand(psi0);
        let b = self.expand(psi_dot0);
        for r in [a.residual, b.residual] {
            if r > limit {
                return Err(SpectralError::TruncationTooLarge { residual: r, limit });
            }
        }
        Ok((a, b))
    }

    /// A field from coefficients.
    pub fn field<'a>(&'a self, coeffs: &'a [Complex64]) -> ModalField<'a> {
        ModalField { basis: self, coeffs }
    }

    /// L² norm of the `order`-th spatial derivative of a modal field, by
    /// quadrature.
    pub fn derivative_norm(&self, coeffs: &[Complex64], order: usize) -> f64 {
        let f = self.field(coeffs);
        let pw = self.panel_width();
        let mut s = 0.0;
        for e in self.edge_ids() {
            let a = self.lengths[e.0];
            s += quad::integrate(|x| f.eval(e, x, order).norm_sqr(), 0.0, a, (a / pw).ceil() as usize);
        }
        s.sqrt()
    }

    /// Traces of a modal field.
    pub fn trace(&self, g: &MetricGraph, coeffs: &[Complex64]) -> TraceVector {
        let layout = TraceLayout::of(g);
        let n = layout.dim();
        let f = self.field(coeffs);
        let mut lower = vec![c(0.0); n];
        let mut upper = vec![c(0.0); n];
        for e in self.edge_ids() {
            let a = self.lengths[e.0];
            let s0 = layout.slot(e, crate::graph::End::Initial);
            let s1 = layout.slot(e, crate::graph::End::Final);
            lower[s0] = f.eval(e, 0.0, 0);
            upper[s0] = f.eval(e, 0.0, 1);
            lower[s1] = f.eval(e, a, 0);
            upper[s1] = -f.eval(e, a, 1);
        }
        TraceVector::from_parts(&lower, &upper)
    }
}

/// Expansion coefficients in a [`SpectralBasis`].
#[derive(Clone, Debug, Serialize)]
pub struct Expansion {
    pub coeffs: Vec<Complex64>,
    pub residual: f64,
    pub norm: f64,
}

/// `Σ c_n φ_n`.
#[derive(Clone, Copy)]
pub struct ModalField<'a> {
    basis: &'a SpectralBasis,
    coeffs: &'a [Complex64],
}

impl ModalField<'_> {
    pub fn eval(&self, e: EdgeId, x: f64, order: usize) -> Complex64 {
        let mut s = c(0.0);
        for (i, &ci) in self.coeffs.iter().enumerate() {
            if ci != c(0.0) {
                s += ci * self.basis.eval(i, e, x, order);
            }
        }
        s
    }
}

impl GraphField for ModalField<'_> {
    fn value(&self, e: EdgeId, x: f64) -> f64 {
        self.eval(e, x, 0).re
    }
    fn derivative(&self, e: EdgeId, x: f64, order: usize) -> Option<f64> {
        Some(self.eval(e, x, order).re)
    }
}

/// `(c_λ(t), s_λ(t))`: the evolution multipliers of `ψ0` and `ψ̇0`.
pub fn time_factors(lambda: f64, t: f64) -> (f64, f64) {
    cs(lambda, t)
}

/// ψ(t) = ∂_t W(t) ψ0 + W(t) ψ̇0 in coefficients, differentiated `k`
/// times in t.
pub fn evolve_coeffs(basis: &SpectralBasis, c0: &[Complex64], d0: &[Complex64], t: f64, k: usize) -> Vec<Complex64> {
    basis
        .pairs
        .iter()
        .zip(c0.iter().zip(d0))
        .map(|(p, (&a, &b))| mode_derivative(p.lambda(), a, b, t, k))
        .collect()
}

/// Spectral solution at time `t`.
pub fn evolve_spectral(basis: &SpectralBasis, psi0: &Expansion, psi_dot0: &Expansion, t: f64) -> Vec<Complex64> {
    evolve_coeffs(basis, &psi0.coeffs, &psi_dot0.coeffs, t, 0)
}

/// `(Σ (λ_n + m²)^α |c_n|²)^{1/2}`.
pub fn sobolev_norm(basis: &SpectralBasis, coeffs: &[Complex64], alpha: f64, m2: f64) -> Result<f64, SpectralError> {
    let mut s = 0.0;
    for (p, z) in basis.pairs.iter().zip(coeffs) {
        let base = p.lambda() + m2;
        if base < -1e-10 * (1.0 + p.lambda().abs()) {
            return Err(SpectralError::NegativeBase { m2, base });
        }
        let base = base.max(0.0);
        let w = if alpha == 0.0 { 1.0 } else { base.powf(alpha) };
        s += w * z.norm_sqr();
    }
    Ok(s.sqrt())
}

/// `Δ^k` applied mode-wise: multiply by `(−λ)^k`.
pub fn laplacian_power(basis: &SpectralBasis, coeffs: &[Complex64], k: u32) -> Vec<Complex64> {
    basis
        .pairs
        .iter()
        .zip(coeffs)
        .map(|(p, &z)| z * (-p.lambda()).powi(k as i32))
        .collect()
}

/// One evaluated inequality.
#[derive(Clone, Debug, Serialize)]
pub struct EstimateCheck {
    pub name: String,
    pub t1: f64,
    pub t2: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

impl EstimateCheck {
    pub fn ok(&self) -> bool {
        self.slack >= -1e-8 * self.rhs
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimateReport {
    pub m2: f64,
    pub epsilon: f64,
    pub nonnegative: bool,
    pub checks: Vec<EstimateCheck>,
}

impl EstimateReport {
    pub fn violations(&self) -> impl Iterator<Item = &EstimateCheck> {
        self.checks.iter().filter(|c| !c.ok())
    }

    pub fn min_relative_slack(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| if c.rhs > 0.0 { c.slack / c.rhs } else { c.slack })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Highest orders used by [`estimates`].
#[derive(Clone, Copy, Debug)]
pub struct Orders {
    pub k: u32,
    pub n: u32,
    pub j: u32,
}

impl Default for Orders {
    fn default() -> Self {
        Orders { k: 2, n: 2, j: 2 }
    }
}

/// Evaluate the a priori estimates on a time grid. The corollaries that
/// assume `Ω_M ⪰ 0` are included when `omega_psd` holds.
pub fn estimates(
    basis: &SpectralBasis,
    c0: &[Complex64],
    d0: &[Complex64],
    times: &[f64],
    orders: Orders,
    omega_psd: bool,
) -> EstimateReport {
    let m2 = basis.default_m2();
    let eps = basis.epsilon();
    let nonneg = eps >= -1e-10;
    let norm = |v: &[Complex64], n: u32| sobolev_norm(basis, v, n as f64, m2).expect("m² admissible");
    let lap = |v: &[Complex64], k: u32| laplacian_power(basis, v, k);
    let dt = |t: f64, k: u32| evolve_coeffs(basis, c0, d0, t, k as usize);
    let diff = |a: &[Complex64], b: &[Complex64]| -> Vec<Complex64> { a.iter().zip(b).map(|(x, y)| x - y).collect() };
    let mut checks = Vec::new();
    let mut push = |name: String, t1: f64, t2: f64, lhs: f64, rhs: f64| {
        checks.push(EstimateCheck {
            name,
            t1,
            t2,
            lhs,
            rhs,
            slack: rhs - lhs,
        });
    };
    let rho = |t: f64| basis.rho(t);
    let pairs: Vec<(f64, f64)> = times
        .iter()
        .flat_map(|&a| times.iter().map(move |&b| (a, b)))
        .collect();

    for k in 0..=orders.k {
        for n in 0..=orders.n {
            for &t in times {
                let lhs = norm(&dt(t, 2 * k), n);
                let rhs = rho(t) * (norm(&lap(c0, k), n) + t.abs() * norm(&lap(d0, k), n));
                push(format!("apriori.a k={k} n={n}"), t, t, lhs, rhs);
                let lhs = norm(&dt(t, 2 * k + 1), n);
                let rhs = rho(t) * (norm(&lap(d0, k), n) + t.abs() * norm(&lap(c0, k + 1), n));
                push(format!("apriori.b k={k} n={n}"), t, t, lhs, rhs);
            }
            for &(t1, t2) in &pairs {
                let r = rho(t1).max(rho(t2));
                let tm = t1.abs().max(t2.abs());
                let lhs = norm(&diff(&dt(t1, 2 * k), &dt(t2, 2 * k)), n);
                let rhs = (t1 - t2).abs() * r * (norm(&lap(d0, k), n) + tm * norm(&lap(c0, k + 1), n));
                push(format!("apriori2.a k={k} n={n}"), t1, t2, lhs, rhs);
                let lhs = norm(&diff(&dt(t1, 2 * k + 1), &dt(t2, 2 * k + 1)), n);
                let rhs = (t1 - t2).abs() * r * (norm(&lap(c0, k + 1), n) + tm * norm(&lap(d0, k + 1), n));
                push(format!("apriori2.b k={k} n={n}"), t1, t2, lhs, rhs);
            }
        }
    }

    if omega_psd && nonneg {
        let pos = |v: &[Complex64], n: u32| sobolev_norm(basis, v, n as f64, 0.0).expect("nonnegative");
        for &t in times {
            let lhs = pos(&dt(t, 0), 0);
            let rhs = pos(c0, 0) + t.abs() * pos(d0, 0);
            push("psidiffnorm.a0".into(), t, t, lhs, rhs);
        }
        for k in 0..=orders.k {
            for n in 0..=orders.n {
                if n + k == 0 {
                    continue;
                }
                for &t in times {
                    let lhs = pos(&dt(t, k), n);
                    let rhs = pos(c0, n + k) + pos(d0, n + k - 1);
                    push(format!("psidiffnorm.a k={k} n={n}"), t, t, lhs, rhs);
                }
            }
        }
        for l in 0..=orders.k / 2 + 1 {
            for n in 0..=orders.n {
                for &t in times {
                    if l >= 1 {
                        let lhs = pos(&dt(t, 2 * l), n);
                        let rhs = pos(c0, n + 2 * l)
                            + (t.abs() * pos(d0, n + 2 * l)).min(pos(d0, n + 2 * l - 1));
                        push(format!("psidiffnorm.b even l={l} n={n}"), t, t, lhs, rhs);
                    }
                    let lhs = pos(&dt(t, 2 * l + 1), n);
                    let rhs = pos(d0, n + 2 * l) + (t.abs() * pos(c0, n + 2 * l + 2)).min(pos(c0, n + 2 * l + 1));
                    push(format!("psidiffnorm.b odd l={l} n={n}"), t, t, lhs, rhs);
                }
            }
        }
        for k in 0..=orders.k {
            for n in 0..=orders.n {
                for &(t1, t2) in &pairs {
                    let lhs = pos(&diff(&dt(t1, k), &dt(t2, k)), n);
                    let rhs = (t1 - t2).abs() * (pos(c0, n + k + 1) + pos(d0, n + k));
                    push(format!("psidiffnormb k={k} n={n}"), t1, t2, lhs, rhs);
                }
            }
        }
        // Spatial derivatives: even orders are powers of Δ (any n); odd
        // orders are measured in L² by quadrature.
        for j in 1..=orders.j {
            for k in 0..=orders.k {
                let ns: Vec<u32> = if j % 2 == 0 { (0..=orders.n).collect() } else { vec![0] };
                for &n in &ns {
                    let spatial = |v: &[Complex64]| -> f64 {
                        if j % 2 == 0 {
                            pos(&lap(v, j / 2), n)
                        } else {
                            basis.derivative_norm(v, j as usize)
                        }
                    };
                    for &t in times {
                        let lhs = spatial(&dt(t, k));
                        let rhs = pos(c0, n + j + k) + pos(d0, n + j + k - 1);
                        push(format!("psiprimet.a j={j} k={k} n={n}"), t, t, lhs, rhs);
                    }
                    for &(t1, t2) in &pairs {
                        let lhs = spatial(&diff(&dt(t1, k), &dt(t2, k)));
                        let rhs = (t1 - t2).abs() * (pos(c0, n + j + k + 1) + pos(d0, n + j + k));
                        push(format!("psiprimet.b j={j} k={k} n={n}"), t1, t2, lhs, rhs);
                    }
                }
            }
        }
    }
    EstimateReport {
        m2,
        epsilon: eps,
        nonnegative: nonneg,
        checks,
    }
}

/// Run [`estimates`] and fail on the first violated inequality.
pub fn verify_apriori(
    basis: &SpectralBasis,
    c0: &[Complex64],
    d0: &[Complex64],
    times: &[f64],
    orders: Orders,
    omega_psd: bool,
) -> Result<EstimateReport, SpectralError> {
    let report = estimates(basis, c0, d0, times, orders, omega_psd);
    if let Some(v) = report.violations().next() {
        return Err(SpectralError::EstimateViolated {
            name: v.name.clone(),
            t: v.t1,
            slack: v.slack,
        });
    }
    Ok(report)
}

/// Sum of the mode energies `½|ċ_n|² + ½λ_n|c_n|²` at time `t`.
pub fn modal_energy(basis: &SpectralBasis, c0: &[Complex64], d0: &[Complex64], t: f64) -> f64 {
    let u = evolve_coeffs(basis, c0, d0, t, 0);
    let v = evolve_coeffs(basis, c0, d0, t, 1);
    basis
        .pairs
        .iter()
        .zip(u.iter().zip(&v))
        .map(|(p, (a, b))| 0.5 * b.norm_sqr() + 0.5 * p.lambda() * a.norm_sqr())
        .sum()
}

/// Residual of a trace against a spec, used for eigenfunction checks.
pub fn boundary_residual(spec: &BoundarySpec, tr: &TraceVector) -> f64 {
    spec.residual(tr).norm()
}

#[allow(dead_code)]
fn as_cvec(v: &[Complex64]) -> CVec {
    CVec::from_column_slice(v)
}
