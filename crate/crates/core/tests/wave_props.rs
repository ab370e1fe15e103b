use std::f64::consts::PI;

use graphwave::fields::{random::domain_field, Bump, GraphField, Shifted, Zero};
use graphwave::geometry::{self, BoundaryKind};
use graphwave::graph::{generate::random_graph, two_loop_graph, EdgeId, GraphDescription, MetricGraph};
use graphwave::vertex::{random as rspec, validate_bc, BoundarySpec, ValidatedSpec, VertexCondition};
use graphwave::wave::{
    self, discretize, energy_global, fps_verify, green_identity_check, mixed_derivative_check, normal_derivative,
    uniqueness_check, FpsOptions, GridOptions, LocalEnergy, Solver, WaveError,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn kirchhoff(g: &MetricGraph) -> ValidatedSpec {
    validate_bc(&BoundarySpec::uniform(g, VertexCondition::Kirchhoff)).unwrap()
}

fn interval(a: f64) -> MetricGraph {
    MetricGraph::new(&GraphDescription {
        vertices: vec!["l".into(), "r".into()],
        internal: vec![("i".into(), "l".into(), "r".into(), a)],
        external: vec![],
    })
    .unwrap()
}

/// The real line as two external edges glued at one vertex.
fn line() -> MetricGraph {
    MetricGraph::new(&GraphDescription {
        vertices: vec!["o".into()],
        internal: vec![],
        external: vec![("e1".into(), "o".into()), ("e2".into(), "o".into())],
    })
    .unwrap()
}

struct SinMode;

impl GraphField for SinMode {
    fn value(&self, _: EdgeId, x: f64) -> f64 {
        x.sin()
    }
    fn derivative(&self, _: EdgeId, x: f64, order: usize) -> Option<f64> {
        Some(match order % 4 {
            0 => x.sin(),
            1 => x.cos(),
            2 => -x.sin(),
            _ => -x.cos(),
        })
    }
}

/// `x` on one edge, zero elsewhere.
struct Ramp(EdgeId);

impl GraphField for Ramp {
    fn value(&self, e: EdgeId, x: f64) -> f64 {
        if e == self.0 {
            x
        } else {
            0.0
        }
    }
    fn derivative(&self, e: EdgeId, x: f64, order: usize) -> Option<f64> {
        Some(match (e == self.0, order) {
            (false, _) => 0.0,
            (true, 0) => x,
            (true, 1) => 1.0,
            _ => 0.0,
        })
    }
}

fn scaled_sin(t: f64) -> impl GraphField {
    graphwave::fields::Scaled { inner: SinMode, factor: t.cos() }
}

fn dirichlet_error(h: f64, t: f64) -> f64 {
    let g = interval(PI);
    let spec = validate_bc(&BoundarySpec::uniform(&g, VertexCondition::Dirichlet)).unwrap();
    let grid = discretize(&g, &GridOptions::new(h, 0.8, t, 0.0)).unwrap();
    let solver = Solver::new(&g, &spec, grid).unwrap();
    let end = solver.solve(&SinMode, &Zero);
    wave::l2_distance(&solver, &end.u, &scaled_sin(t))
}

#[test]
fn zero_data_stay_zero() {
    let g = two_loop_graph(1.0);
    let spec = kirchhoff(&g);
    let grid = discretize(&g, &GridOptions::new(0.02, 0.9, 2.0, 1.0)).unwrap();
    let solver = Solver::new(&g, &spec, grid).unwrap();
    let s = solver.start(&Zero, &Zero);
    let mut worst: f64 = 0.0;
    solver.run(s, solver.grid.steps, |f| {
        worst = worst.max(f.cur.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max));
        assert_eq!(energy_global(&solver, f).total, 0.0);
    });
    assert_eq!(worst, 0.0);
}

#[test]
fn dirichlet_mode_converges_at_second_order() {
    let t = 1.0;
    let e1 = dirichlet_error(PI / 50.0, t);
    let e2 = dirichlet_error(PI / 100.0, t);
    assert!(e2 < 1e-3, "{e2}");
    let order = (e1 / e2).log2();
    assert!((order - 2.0).abs() < 0.2, "order {order}");
}

#[test]
fn dirichlet_mode_energy() {
    // sin x on [0, π]: E = ½∫(sin²t sin²x + cos²t cos²x) = π/4.
    let g = interval(PI);
    let spec = validate_bc(&BoundarySpec::uniform(&g, VertexCondition::Dirichlet)).unwrap();
    let grid = discretize(&g, &GridOptions::new(PI / 200.0, 0.8, 3.0, 0.0)).unwrap();
    let solver = Solver::new(&g, &spec, grid).unwrap();
    let s = solver.start(&SinMode, &Zero);
    let mut worst: f64 = 0.0;
    solver.run(s, solver.grid.steps, |f| {
        let e = energy_global(&solver, f);
        worst = worst.max((e.total - PI / 4.0).abs());
        assert!(e.vertex.abs() < 1e-14);
    });
    assert!(worst < 1e-4 * PI / 4.0, "{worst}");
}

#[test]
fn bump_travels_through_transparent_vertex() {
    let g = line();
    let spec = kirchhoff(&g);
    let e1 = g.edge_id("e1").unwrap();
    let e2 = g.edge_id("e2").unwrap();
    let bump = Bump { edge: e1, center: 2.0, width: 0.5, amplitude: 1.0 };
    let t = 3.0;
    let grid = discretize(&g, &GridOptions::new(2e-3, 0.9, t, 6.0)).unwrap();
    let solver = Solver::new(&g, &spec, grid).unwrap();
    let end = solver.solve(&bump, &Zero);
    // d'Alembert: halves at x = 5 on e1 and at x = 1 on e2.
    let exact_e1 = Shifted { inner: Bump { amplitude: 0.5, ..bump }, shift: 3.0 };
    let exact_e2 = Bump { edge: e2, center: 1.0, width: 0.5, amplitude: 0.5 };
    let mut err: f64 = 0.0;
    for (e, f) in [(e1, &exact_e1 as &dyn GraphField), (e2, &exact_e2)] {
        let eg = solver.grid.edge(e);
        for j in 0..eg.nodes() {
            err = err.max((end.u[e.0][j] - f.value(e, eg.x(j))).abs());
        }
    }
    assert!(err < 2e-3, "{err}");
}

#[test]
fn discrete_influence_is_bounded() {
    // Nothing moves faster than one cell per step.
    let g = line();
    let spec = kirchhoff(&g);
    let e1 = g.edge_id("e1").unwrap();
    let bump = Bump { edge: e1, center: 1.0, width: 0.3, amplitude: 1.0 };
    let (h, cfl, t) = (0.01, 0.5, 1.0);
    let grid = discretize(&g, &GridOptions::new(h, cfl, t, 2.0)).unwrap();
    let solver = Solver::new(&g, &spec, grid).unwrap();
    let end = solver.solve(&bump, &Zero);
    let reach = 1.3 + t / cfl + 2.0 * h;
    let eg = solver.grid.edge(e1);
    for j in 0..eg.nodes() {
        if eg.x(j) > reach {
            assert_eq!(end.u[e1.0][j], 0.0, "x = {}", eg.x(j));
        }
    }
}

#[test]
fn runs_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = random_graph(&mut rng, 3, 4, 2, (0.5, 1.5));
    let spec = validate_bc(&rspec::local_psd_spec(&mut rng, &g)).unwrap();
    let data = domain_field(&mut rng, &g, &spec, 0.2, 3, 2.0);
    let grid = discretize(&g, &GridOptions::new(0.01, 0.9, 1.0, 1.0)).unwrap();
    let solver = Solver::new(&g, &spec, grid).unwrap();
    assert_eq!(uniqueness_check(&solver, &data, &Zero), 0.0);
    assert_eq!(solver.solve(&data, &data).u, solver.solve(&data, &data).u);
}

#[test]
fn mixed_differences_commute() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let g = two_loop_graph(1.0);
    let spec = validate_bc(&rspec::local_psd_spec(&mut rng, &g)).unwrap();
    let data = domain_field(&mut rng, &g, &spec, 0.3, 2, 2.0);
    let grid = discretize(&g, &GridOptions::new(0.02, 0.9, 1.0, 1.0)).unwrap();
    let solver = Solver::new(&g, &spec, grid).unwrap();
    let r = mixed_derivative_check(&solver, &data, &Zero);
    assert!(r.interior_asymmetry < 1e-10, "{r:?}");
    assert!(r.trace_asymmetry < 1e-10, "{r:?}");
}

#[test]
fn normal_derivative_points_into_the_ball() {
    let g = two_loop_graph(1.0);
    let spec = kirchhoff(&g);
    let i1 = g.edge_id("i1").unwrap();
    let grid = discretize(&g, &GridOptions::new(0.01, 0.9, 0.1, 0.5)).unwrap();
    let solver = Solver::new(&g, &spec, grid).unwrap();
    let u = solver.grid.sample(&Ramp(i1));
    let p = g.parse_point("i1:0.5").unwrap();
    let ball = geometry::ball(&g, p, 0.25).unwrap();
    assert_eq!(ball.boundary.len(), 2);
    for q in &ball.boundary {
        let dn = normal_derivative(&solver, &u, q).unwrap();
        // The ball is (0.25, 0.75); its inward direction is +x at 0.25.
        let expect = if q.point.x() < 0.5 { 1.0 } else { -1.0 };
        assert_eq!(q.inward as f64, expect);
        assert!((dn - expect).abs() < 1e-12, "{dn}");
    }
    for q in &geometry::ball(&g, p, 0.5).unwrap().boundary {
        assert_eq!(q.kind, BoundaryKind::Vertex);
        assert!(matches!(normal_derivative(&solver, &u, q), Err(WaveError::AmbiguousAtVertex(_))));
    }
    let coincidence = geometry::boundary_set(&g, p, 1.0);
    let q = coincidence.iter().find(|q| q.kind == BoundaryKind::Coincidence).unwrap();
    assert!(matches!(normal_derivative(&solver, &u, q), Err(WaveError::CriticalTime(_))));
}

#[test]
fn grid_errors() {
    let g = two_loop_graph(1.0);
    let cfl = discretize(&g, &GridOptions::new(0.01, 1.5, 1.0, 1.0));
    assert!(matches!(cfl, Err(WaveError::CflImpossible(_))));
    let h = discretize(&g, &GridOptions::new(0.0, 0.9, 1.0, 1.0));
    assert!(matches!(h, Err(WaveError::CflImpossible(_))));
    let short = MetricGraph::new(&GraphDescription {
        vertices: vec!["a".into(), "b".into()],
        internal: vec![
            ("long".into(), "a".into(), "b".into(), 1.0),
            ("tiny".into(), "a".into(), "b".into(), 0.05),
        ],
        external: vec![],
    })
    .unwrap();
    assert!(matches!(
        discretize(&short, &GridOptions::new(0.1, 0.9, 1.0, 0.0)),
        Err(WaveError::CflImpossible(_))
    ));
    let mut opts = GridOptions::new(0.01, 0.5, 2.0, 1.0);
    opts.cap = Some(3.0);
    assert!(matches!(discretize(&g, &opts), Err(WaveError::TruncationInsufficient { .. })));
    opts.cap = Some(5.1);
    assert!(discretize(&g, &opts).is_ok());
}

#[test]
fn spec_errors() {
    let g = two_loop_graph(1.0);
    let grid = discretize(&g, &GridOptions::new(0.02, 0.9, 1.0, 1.0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let complex = validate_bc(&rspec::complex_spec(&mut rng, 6)).unwrap();
    assert!(matches!(Solver::new(&g, &complex, grid.clone()), Err(WaveError::Bc(_))));
    let attractive = validate_bc(&BoundarySpec::uniform(&g, VertexCondition::Delta(-1.0))).unwrap();
    let solver = Solver::new(&g, &attractive, grid).unwrap();
    let p = g.parse_point("i1:0.5").unwrap();
    assert!(matches!(LocalEnergy::new(&solver, p, 1.0), Err(WaveError::OmegaNotPsd(_))));
}

#[test]
fn green_identity_rejects_critical_radii() {
    let g = two_loop_graph(1.0);
    let spec = kirchhoff(&g);
    let grid = discretize(&g, &GridOptions::new(0.02, 0.9, 1.0, 2.0)).unwrap();
    let solver = Solver::new(&g, &spec, grid).unwrap();
    let u = solver.grid.zeros();
    let p = g.parse_point("i1:0.5").unwrap();
    assert!(matches!(green_identity_check(&solver, &u, &u, p, 1.5, 1.0), Err(WaveError::CriticalTime(_))));
    assert!(matches!(green_identity_check(&solver, &u, &u, p, 1.5, 0.5), Err(WaveError::CriticalTime(_))));
    assert!(matches!(green_identity_check(&solver, &u, &u, p, 1.0, 1.5), Err(WaveError::TimeOutOfRange { .. })));
    let ok = green_identity_check(&solver, &u, &u, p, 1.5, 0.8).unwrap();
    assert_eq!(ok.residual, 0.0);
}

#[test]
fn local_energy_integral_part_is_continuous() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let g = two_loop_graph(1.0);
    let spec = kirchhoff(&g);
    let data = domain_field(&mut rng, &g, &spec, 0.4, 4, 2.5);
    let t0 = 1.5;
    let grid = discretize(&g, &GridOptions::new(2e-3, 0.9, t0, t0 + 1.0)).unwrap();
    let solver = Solver::new(&g, &spec, grid).unwrap();
    let p = g.parse_point("i1:0.5").unwrap();
    let report = fps_verify(&solver, &data, &Zero, p, &FpsOptions::new(t0)).unwrap();
    assert!(report.passed(), "{:?}", report.verdict());
    assert!(!report.jumps.is_empty());
    for j in &report.jumps {
        assert!(j.integral_jump.abs() <= 1e-2 * report.e0, "{j:?}");
    }
    assert!(report.samples.iter().all(|s| s.e >= -1e-12 * report.e0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn vertex_conditions_hold_every_step(seed in any::<u64>(), psd in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nv = rng.gen_range(1..4);
        let ni = if nv == 1 { 0 } else { nv - 1 + rng.gen_range(0..2) };
        let ne = rng.gen_range(1..3);
        let g = random_graph(&mut rng, nv, ni, ne, (0.5, 1.5));
        let raw = if psd { rspec::local_psd_spec(&mut rng, &g) } else { rspec::local_real_spec(&mut rng, &g) };
        let spec = validate_bc(&raw).unwrap();
        let data = domain_field(&mut rng, &g, &spec, 0.2, 3, 2.0);
        let grid = discretize(&g, &GridOptions::new(0.02, 0.9, 1.0, 1.0)).unwrap();
        let solver = Solver::new(&g, &spec, grid).unwrap();
        let s = solver.start(&data, &Zero);
        let mut worst: f64 = 0.0;
        solver.run(s, solver.grid.steps, |f| worst = worst.max(solver.vertex_residual(f.cur)));
        prop_assert!(worst <= 1e-8, "{}", worst);
    }

    #[test]
    fn energy_is_nearly_conserved(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, 3, 3, 0, (0.6, 1.2));
        let spec = validate_bc(&rspec::local_psd_spec(&mut rng, &g)).unwrap();
        let data = domain_field(&mut rng, &g, &spec, 0.25, 0, 1.0);
        let grid = discretize(&g, &GridOptions::new(5e-3, 0.9, 2.0, 0.0)).unwrap();
        let solver = Solver::new(&g, &spec, grid).unwrap();
        let s = solver.start(&data, &Zero);
        let mut e0 = None;
        let mut drift: f64 = 0.0;
        solver.run(s, solver.grid.steps, |f| {
            let e = energy_global(&solver, f);
            let base = *e0.get_or_insert(e.total);
            drift = drift.max((e.total - base).abs() / base.max(1e-300));
        });
        prop_assert!(drift < 2e-2, "{}", drift);
    }
}
