//! Reference computations that share no code with the library paths they
//! check.

#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use graphwave::graph::{EdgeId, MetricGraph};
use nalgebra::DMatrix;
use num_complex::Complex64;

/// Kernel of `(A | B)` by SVD, then test `dim = n` and `ω ≡ 0` on it.
pub fn lagrangian_by_kernel(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> bool {
    let n = a.nrows();
    let mut ab = DMatrix::<Complex64>::zeros(2 * n, 2 * n);
    ab.view_mut((0, 0), (n, n)).copy_from(a);
    ab.view_mut((0, n), (n, n)).copy_from(b);
    let svd = ab.svd(false, true);
    let vt = svd.v_t.unwrap();
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let kernel: Vec<usize> = (0..2 * n)
        .filter(|&i| svd.singular_values[i] <= 1e-10 * smax)
        .collect();
    if kernel.len() != n {
        return false;
    }
    // ω(u, w) = ⟨u_lo, w_hi⟩ − ⟨u_hi, w_lo⟩.
    for &i in &kernel {
        for &j in &kernel {
            let u: Vec<Complex64> = (0..2 * n).map(|k| vt[(i, k)].conj()).collect();
            let w: Vec<Complex64> = (0..2 * n).map(|k| vt[(j, k)].conj()).collect();
            let mut s = Complex64::new(0.0, 0.0);
            for k in 0..n {
                s += u[k].conj() * w[n + k] - u[n + k].conj() * w[k];
            }
            if s.norm() > 1e-9 {
                return false;
            }
        }
    }
    true
}

/// Shortest-path distance on a fine subdivision of the graph. External
/// edges are cut at `ext_len`. Points are `(edge, coordinate)`.
pub fn subdivision_distance(g: &MetricGraph, p: (EdgeId, f64), q: (EdgeId, f64), h: f64, ext_len: f64) -> f64 {
    // Node ids: vertices first, then subdivision nodes edge by edge.
    let nv = g.vertex_count();
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nv];
    let push_edge = |adj: &mut Vec<Vec<(usize, f64)>>, a: usize, b: usize, w: f64| {
        adj[a].push((b, w));
        adj[b].push((a, w));
    };
    let mut special = [usize::MAX; 2];
    for e in g.edge_ids() {
        let edge = g.edge(e);
        let len = if edge.is_external() { ext_len } else { edge.length };
        let mut cuts: Vec<f64> = {
            let m = (len / h).ceil() as usize;
            (0..=m).map(|j| len * j as f64 / m as f64).collect()
        };
        for (k, pt) in [p, q].iter().enumerate() {
            if pt.0 == e {
                cuts.push(pt.1);
                let _ = k;
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        let mut ids = Vec::with_capacity(cuts.len());
        for (j, _) in cuts.iter().enumerate() {
            let id = if j == 0 {
                edge.from.0
            } else if j + 1 == cuts.len() && !edge.is_external() {
                edge.to.unwrap().0
            } else {
                adj.push(Vec::new());
                adj.len() - 1
            };
            ids.push(id);
        }
        for j in 1..cuts.len() {
            push_edge(&mut adj, ids[j - 1], ids[j], cuts[j] - cuts[j - 1]);
        }
        for (k, pt) in [p, q].iter().enumerate() {
            if pt.0 == e {
                let j = cuts.iter().position(|&c| (c - pt.1).abs() < 1e-15).unwrap();
                special[k] = ids[j];
            }
        }
    }
    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut heap = BinaryHeap::new();
    dist[special[0]] = 0.0;
    heap.push(Reverse((Ordered(0.0), special[0])));
    while let Some(Reverse((Ordered(d), v))) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &(w, len) in &adj[v] {
            let nd = d + len;
            if nd < dist[w] {
                dist[w] = nd;
                heap.push(Reverse((Ordered(nd), w)));
            }
        }
    }
    dist[special[1]]
}

#[derive(Clone, Copy, PartialEq, PartialOrd)]
struct Ordered(f64);
impl Eq for Ordered {}
impl Ord for Ordered {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&o.0)
    }
}

/// Finite-element eigenvalues of the Kirchhoff Laplacian on a compact
/// graph: lumped mass, linear stiffness, shared vertex nodes. The inertia
/// of `K − σM` is the inertia of the edge-interior tridiagonal blocks plus
/// that of the vertex Schur complement.
pub struct KirchhoffFd {
    nv: usize,
    /// `(from, to, cells, h)`
    chains: Vec<(usize, usize, usize, f64)>,
}

impl KirchhoffFd {
    pub fn new(g: &MetricGraph, h: f64) -> Self {
        assert!(g.is_compact());
        let chains = g
            .internal_edges()
            .map(|e| {
                let edge = g.edge(e);
                let m = ((edge.length / h).round() as usize).max(2);
                (edge.from.0, edge.to.unwrap().0, m, edge.length / m as f64)
            })
            .collect();
        KirchhoffFd { nv: g.vertex_count(), chains }
    }

    /// Number of eigenvalues below `sigma`.
    pub fn count_below(&self, sigma: f64) -> usize {
        let mut neg = 0;
        let mut schur = DMatrix::<f64>::zeros(self.nv, self.nv);
        for &(a, b, m, h) in &self.chains {
            let w = 1.0 / h;
            schur[(a, a)] += w - 0.5 * sigma * h;
            schur[(b, b)] += w - 0.5 * sigma * h;
            let k = m - 1;
            // Tridiagonal LDLᵀ of the interior block, then T⁻¹ on e_1, e_k.
            let diag = 2.0 * w - sigma * h;
            let mut d = vec![0.0; k];
            let mut l = vec![0.0; k];
            for i in 0..k {
                let mut s = diag;
                if i > 0 {
                    l[i] = -w / d[i - 1];
                    s -= l[i] * l[i] * d[i - 1];
                }
                if s == 0.0 {
                    s = -1e-300;
                }
                d[i] = s;
                if s < 0.0 {
                    neg += 1;
                }
            }
            let solve = |rhs: usize| {
                let mut y = vec![0.0; k];
                for i in 0..k {
                    y[i] = if i == rhs { 1.0 } else { 0.0 };
                    if i > 0 {
                        y[i] -= l[i] * y[i - 1];
                    }
                }
                for i in 0..k {
                    y[i] /= d[i];
                }
                for i in (0..k.saturating_sub(1)).rev() {
                    y[i] -= l[i + 1] * y[i + 1];
                }
                y
            };
            let x = solve(0);
            let y = solve(k - 1);
            let c = w * w;
            schur[(a, a)] -= c * x[0];
            schur[(b, b)] -= c * y[k - 1];
            schur[(a, b)] -= c * x[k - 1];
            schur[(b, a)] -= c * y[0];
        }
        let s = (&schur + schur.transpose()) * 0.5;
        neg + s.symmetric_eigenvalues().iter().filter(|&&x| x < 0.0).count()
    }

    /// The `m`-th eigenvalue (0-based) by bisection on `[lo, hi]`.
    pub fn eigenvalue(&self, m: usize, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.count_below(mid) > m {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo < 1e-13 * hi.max(1.0) {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}
