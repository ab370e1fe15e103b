use std::f64::consts::PI;

use graphwave::graph::{generate::random_graph, two_loop_graph, GraphDescription, MetricGraph};
use graphwave::linalg::c;
use graphwave::spectral::{
    self, boundary_residual, eigenvalues, evolve_coeffs, modal_energy, negative_bound, sobolev_norm, ScanOptions, SpectralError,
    Wavenumber,
};
use graphwave::vertex::{random as rspec, validate_bc, BoundarySpec, ValidatedSpec, VertexCondition};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn opts(k_max: f64) -> ScanOptions {
    ScanOptions {
        k_max,
        ..ScanOptions::default()
    }
}

fn interval(a: f64) -> MetricGraph {
    MetricGraph::new(&GraphDescription {
        vertices: vec!["l".into(), "r".into()],
        internal: vec![("i".into(), "l".into(), "r".into(), a)],
        external: vec![],
    })
    .unwrap()
}

/// Two edges of length `a` between the same vertices: a circle of length `2a`.
fn pumpkin(a: f64) -> MetricGraph {
    MetricGraph::new(&GraphDescription {
        vertices: vec!["v1".into(), "v2".into()],
        internal: vec![
            ("i1".into(), "v1".into(), "v2".into(), a),
            ("i2".into(), "v1".into(), "v2".into(), a),
        ],
        external: vec![],
    })
    .unwrap()
}

fn star3() -> MetricGraph {
    MetricGraph::new(&GraphDescription {
        vertices: vec!["c".into(), "l1".into(), "l2".into(), "l3".into()],
        internal: (1..=3)
            .map(|k| (format!("i{k}"), "c".to_string(), format!("l{k}"), 1.0))
            .collect(),
        external: vec![],
    })
    .unwrap()
}

fn uniform(g: &MetricGraph, cond: VertexCondition) -> ValidatedSpec {
    validate_bc(&BoundarySpec::uniform(g, cond)).unwrap()
}

fn compact(rng: &mut ChaCha8Rng) -> MetricGraph {
    let nv = rng.gen_range(2..5);
    let ni = nv - 1 + rng.gen_range(0..3);
    random_graph(rng, nv, ni, 0, (0.5, 1.5))
}

fn assert_spectrum(got: &[(Wavenumber, usize)], want: &[(f64, usize)], tol: f64) {
    assert_eq!(got.len(), want.len(), "{got:?} vs {want:?}");
    for ((k, m), (kw, mw)) in got.iter().zip(want) {
        let kv = match k {
            Wavenumber::Real(k) => *k,
            Wavenumber::Imaginary(kappa) => -kappa,
        };
        assert!((kv - kw).abs() < tol, "{kv} vs {kw}");
        assert_eq!(m, mw, "multiplicity at {kw}");
    }
}

#[test]
fn dirichlet_interval() {
    let a = 1.7;
    let g = interval(a);
    let basis = eigenvalues(&g, &uniform(&g, VertexCondition::Dirichlet), opts(12.0)).unwrap();
    let want: Vec<(f64, usize)> = (1..).map(|n| (n as f64 * PI / a, 1)).take_while(|k| k.0 <= 12.0).collect();
    assert_spectrum(&basis.distinct(), &want, 1e-10);
}

#[test]
fn neumann_interval_has_constant_mode() {
    let g = interval(1.0);
    let basis = eigenvalues(&g, &uniform(&g, VertexCondition::Neumann), opts(10.0)).unwrap();
    let want: Vec<(f64, usize)> = (0..4).map(|n| (n as f64 * PI, 1)).collect();
    assert_spectrum(&basis.distinct(), &want, 1e-10);
    // The constant mode is 1/√a.
    let v = basis.eval(0, graphwave::EdgeId(0), 0.3, 0);
    assert!((v.norm() - 1.0).abs() < 1e-10);
}

#[test]
fn circle_has_double_eigenvalues() {
    let g = pumpkin(1.0);
    let basis = eigenvalues(&g, &uniform(&g, VertexCondition::Kirchhoff), opts(13.0)).unwrap();
    let mut want = vec![(0.0, 1)];
    want.extend((1..=4).map(|n| (n as f64 * PI, 2)));
    assert_spectrum(&basis.distinct(), &want, 1e-9);
    assert!(basis.gram_defect < 1e-10);
}

#[test]
fn dirichlet_star() {
    // Kirchhoff centre, Dirichlet leaves: sin k = 0 twice, cos k = 0 once.
    let g = star3();
    let mut conds = vec![VertexCondition::Dirichlet; 4];
    conds[g.vertex_id("c").unwrap().0] = VertexCondition::Kirchhoff;
    let spec = validate_bc(&BoundarySpec::from_vertex_conditions(&g, &conds).unwrap()).unwrap();
    let basis = eigenvalues(&g, &spec, opts(11.0)).unwrap();
    let mut want: Vec<(f64, usize)> = Vec::new();
    for n in 0..4 {
        want.push(((n as f64 + 0.5) * PI, 1));
        if n < 3 {
            want.push(((n + 1) as f64 * PI, 2));
        }
    }
    want.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert_spectrum(&basis.distinct(), &want, 1e-9);
}

#[test]
fn attractive_delta_on_circle() {
    // One bound state: 2κ tanh(κL/2) = −γ on a circle of length L.
    let (a, gamma) = (1.0, -6.0);
    let g = pumpkin(a);
    let conds = vec![VertexCondition::Delta(gamma), VertexCondition::Kirchhoff];
    let spec = validate_bc(&BoundarySpec::from_vertex_conditions(&g, &conds).unwrap()).unwrap();
    let basis = eigenvalues(&g, &spec, opts(6.0)).unwrap();
    let f = |kappa: f64| 2.0 * kappa * (kappa * a).tanh() + gamma;
    let (mut lo, mut hi) = (1e-6, 20.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let kappa = 0.5 * (lo + hi);
    let negative: Vec<f64> = basis.lambdas().into_iter().filter(|&l| l < 0.0).collect();
    assert_eq!(negative.len(), 1);
    assert!((negative[0] + kappa * kappa).abs() < 1e-9 * kappa * kappa);
    assert!((basis.epsilon() + kappa * kappa).abs() < 1e-9 * kappa * kappa);
    assert!(negative_bound(&g, &spec) >= kappa);
    assert!((basis.rho(0.5) - (0.5 * kappa).cosh()).abs() < 1e-8 * basis.rho(0.5));
}

#[test]
fn very_strong_delta() {
    // Deep bound state at κ ≈ −γ/2 where tanh saturates.
    let (a, gamma) = (1.0, -60.0);
    let g = pumpkin(a);
    let conds = vec![VertexCondition::Delta(gamma), VertexCondition::Kirchhoff];
    let spec = validate_bc(&BoundarySpec::from_vertex_conditions(&g, &conds).unwrap()).unwrap();
    let basis = eigenvalues(&g, &spec, opts(4.0)).unwrap();
    let lambda = basis.lambdas()[0];
    let kappa = (-lambda).sqrt();
    assert!((2.0 * kappa * (kappa * a).tanh() + gamma).abs() < 1e-9 * gamma.abs());
    assert!(basis.pairs[0].residual < 1e-8);
}

#[test]
fn decoupled_robin_ends() {
    // ψ′ = −σψ at both ends: one state e^{−σx} per end, split by O(e^{−σa}).
    let sigma = 40.0;
    let g = interval(1.0);
    let robin = VertexCondition::Raw {
        a: graphwave::linalg::CMat::from_element(1, 1, c(sigma)),
        b: graphwave::linalg::CMat::from_element(1, 1, c(1.0)),
    };
    let spec = validate_bc(&BoundarySpec::from_vertex_conditions(&g, &[robin.clone(), robin]).unwrap()).unwrap();
    let basis = eigenvalues(&g, &spec, opts(6.0)).unwrap();
    let negative: Vec<f64> = basis.lambdas().into_iter().filter(|&l| l < 0.0).collect();
    assert_eq!(negative.len(), 2);
    for l in negative {
        assert!(((-l).sqrt() - sigma).abs() < 1e-9 * sigma);
    }
    assert!(basis.gram_defect < 1e-8);
    assert!(basis.pairs.iter().all(|p| p.residual < 1e-8));

    // Only one end attractive.
    let repulsive = VertexCondition::Raw {
        a: graphwave::linalg::CMat::from_element(1, 1, c(-5.0)),
        b: graphwave::linalg::CMat::from_element(1, 1, c(1.0)),
    };
    let attractive = VertexCondition::Raw {
        a: graphwave::linalg::CMat::from_element(1, 1, c(sigma)),
        b: graphwave::linalg::CMat::from_element(1, 1, c(1.0)),
    };
    let spec = validate_bc(&BoundarySpec::from_vertex_conditions(&g, &[attractive, repulsive]).unwrap()).unwrap();
    let basis = eigenvalues(&g, &spec, opts(6.0)).unwrap();
    assert!((basis.pairs[0].k.as_complex().im - sigma).abs() < 1e-9 * sigma);
    assert!(basis.pairs[0].residual < 1e-8);
    assert!(basis.gram_defect < 1e-8);
}

#[test]
fn noncompact_graph_is_rejected() {
    let g = two_loop_graph(1.0);
    let spec = uniform(&g, VertexCondition::Kirchhoff);
    assert!(matches!(eigenvalues(&g, &spec, opts(5.0)), Err(SpectralError::NonCompactGraph)));
}

#[test]
fn cos_sin_coefficients_reproduce_modes() {
    let g = interval(1.0);
    let basis = eigenvalues(&g, &uniform(&g, VertexCondition::Dirichlet), opts(7.0)).unwrap();
    for (i, pair) in basis.pairs.iter().enumerate() {
        let k = pair.k.as_complex();
        let (alpha, beta) = pair.cos_sin_coeffs()[0];
        for x in [0.1, 0.4, 0.9] {
            let direct = alpha * (k * x).cos() + beta * (k * x).sin();
            assert!((direct - basis.eval(i, graphwave::EdgeId(0), x, 0)).norm() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn eigenpairs_satisfy_conditions(seed in any::<u64>(), psd in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = compact(&mut rng);
        let raw = if psd { rspec::local_psd_spec(&mut rng, &g) } else { rspec::local_real_spec(&mut rng, &g) };
        let spec = validate_bc(&raw).unwrap();
        let basis = eigenvalues(&g, &spec, opts(8.0)).unwrap();
        prop_assert!(basis.gram_defect < 1e-8);
        for (i, pair) in basis.pairs.iter().enumerate() {
            prop_assert!(pair.residual <= 1e-8);
            let mut coeffs = vec![c(0.0); basis.len()];
            coeffs[i] = c(1.0);
            let tr = basis.trace(&g, &coeffs);
            let res = boundary_residual(&spec.spec, &tr);
            prop_assert!(res <= 1e-8 * (1.0 + tr.values.norm()));
        }
        if psd || spec.omega_psd(1e-12) {
            prop_assert!(basis.lambdas().iter().all(|&l| l >= -1e-8));
        }
        prop_assert!(basis.lambdas().windows(2).all(|w| w[0] <= w[1]));
        if let Some(&l0) = basis.lambdas().first() {
            if l0 < 0.0 {
                prop_assert!(negative_bound(&g, &spec) >= (-l0).sqrt());
            }
        }
    }

    #[test]
    fn parseval_and_energy(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = compact(&mut rng);
        let spec = validate_bc(&rspec::local_real_spec(&mut rng, &g)).unwrap();
        let basis = eigenvalues(&g, &spec, opts(8.0)).unwrap();
        let m = basis.len().min(6);
        let mut c0 = vec![c(0.0); basis.len()];
        let mut d0 = vec![c(0.0); basis.len()];
        for i in 0..m {
            c0[i] = c(rng.gen_range(-1.0..1.0));
            d0[i] = c(rng.gen_range(-1.0..1.0));
        }
        let f = basis.field(&c0);
        let ex = basis.expand(&f);
        let norm2: f64 = c0.iter().map(|z| z.norm_sqr()).sum();
        prop_assert!((ex.norm * ex.norm - norm2).abs() <= 1e-9 * (1.0 + norm2));
        for (a, b) in ex.coeffs.iter().zip(&c0) {
            prop_assert!((a - b).norm() <= 1e-9);
        }
        prop_assert!(ex.residual <= 1e-4 * (1.0 + ex.norm));
        let e0 = modal_energy(&basis, &c0, &d0, 0.0);
        for t in [0.3, 1.1, 2.7] {
            // Negative modes cancel in the sum; rounding scales with the
            // size of the individual terms.
            let u = evolve_coeffs(&basis, &c0, &d0, t, 0);
            let v = evolve_coeffs(&basis, &c0, &d0, t, 1);
            let scale: f64 = basis
                .pairs
                .iter()
                .zip(u.iter().zip(&v))
                .map(|(p, (a, b))| 0.5 * b.norm_sqr() + 0.5 * p.lambda().abs() * a.norm_sqr())
                .sum();
            if !scale.is_finite() {
                continue;
            }
            let e = modal_energy(&basis, &c0, &d0, t);
            prop_assert!((e - e0).abs() <= 1e-12 * (1.0 + scale), "t = {t}: {e} vs {e0}");
        }
    }

    #[test]
    fn derivative_norms_versus_laplacian(seed in any::<u64>(), kind in 0u8..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = compact(&mut rng);
        let raw = match kind {
            0 => BoundarySpec::uniform(&g, VertexCondition::Kirchhoff),
            1 => BoundarySpec::uniform(&g, VertexCondition::Dirichlet),
            2 => BoundarySpec::uniform(&g, VertexCondition::Neumann),
            _ => rspec::local_psd_spec(&mut rng, &g),
        };
        let spec = validate_bc(&raw).unwrap();
        let ab_zero = spec.ab_adjoint().norm() < 1e-12;
        let basis = eigenvalues(&g, &spec, opts(9.0)).unwrap();
        let coeffs: Vec<Complex64> = (0..basis.len()).map(|i| c(rng.gen_range(-1.0..1.0) / (1.0 + i as f64))).collect();
        let d1 = basis.derivative_norm(&coeffs, 1);
        let half = sobolev_norm(&basis, &coeffs, 1.0, 0.0).unwrap();
        prop_assert!(d1 <= half * (1.0 + 1e-9) + 1e-12);
        if ab_zero {
            prop_assert!((d1 - half).abs() <= 1e-8 * (1.0 + half));
        }
        let d2 = basis.derivative_norm(&coeffs, 2);
        let lap = sobolev_norm(&basis, &coeffs, 2.0, 0.0).unwrap();
        prop_assert!((d2 - lap).abs() <= 1e-8 * (1.0 + lap));
        let lap_coeffs = spectral::laplacian_power(&basis, &coeffs, 1);
        let l2 = sobolev_norm(&basis, &lap_coeffs, 0.0, 0.0).unwrap();
        prop_assert!((l2 - lap).abs() <= 1e-10 * (1.0 + lap));
    }
}
