use graphwave::format::{self, Conditions, FormatError};
use graphwave::graph::{generate::random_graph, two_loop_graph, GraphDescription, GraphError, MetricGraph};
use graphwave::vertex::VertexCondition;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TWO_LOOP: &str = "\
# two vertices joined by two internal edges
[vertices]
v1 v2
[internal]
i1 v1 v2 1.0
i2 v1 v2 1.0
[external]
e1 v1
e2 v2
";

fn graph(desc: GraphDescription) -> Result<MetricGraph, GraphError> {
    MetricGraph::new(&desc)
}

#[test]
fn two_loop_structure() {
    let file = format::parse(TWO_LOOP).unwrap();
    let g = &file.graph;
    assert_eq!(g.vertex_count(), 2);
    assert_eq!(g.external_count(), 2);
    assert_eq!(g.internal_count(), 2);
    assert_eq!(g.degree_of("v1").unwrap(), 3);
    assert_eq!(g.degree_of("v2").unwrap(), 3);
    assert_eq!(g.star_of("v1").unwrap().into_iter().collect::<Vec<_>>(), vec![g.vertex_id("v2").unwrap()]);
    // Externals take the lowest indices.
    let ext: Vec<usize> = g.external_edges().map(|e| e.0).collect();
    assert_eq!(ext, vec![0, 1]);
    assert_eq!(file.conditions, Conditions::PerVertex(vec![VertexCondition::Kirchhoff; 2]));
}

#[test]
fn vertex_points_are_canonical() {
    let g = two_loop_graph(1.0);
    let a = g.parse_point("i1:1.0").unwrap();
    let b = g.parse_point("i2:1.0").unwrap();
    let c = g.parse_point("e2:0").unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_eq!(g.point_vertex(a), Some(g.vertex_id("v2").unwrap()));
    let mid = g.parse_point("i1:0.5").unwrap();
    assert_eq!(g.point_vertex(mid), None);
    assert!(g.parse_point("i1:1.5").is_err());
    assert!(g.parse_point("i9:0.5").is_err());
}

#[test]
fn invalid_graphs_are_rejected() {
    let v = |names: &[&str]| names.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let tadpole = GraphDescription {
        vertices: v(&["a"]),
        internal: vec![("t".into(), "a".into(), "a".into(), 1.0)],
        external: vec![],
    };
    assert!(matches!(graph(tadpole), Err(GraphError::TadpoleEdge(_))));
    let split = GraphDescription {
        vertices: v(&["a", "b", "c", "d"]),
        internal: vec![
            ("x".into(), "a".into(), "b".into(), 1.0),
            ("y".into(), "c".into(), "d".into(), 1.0),
        ],
        external: vec![],
    };
    assert!(matches!(graph(split), Err(GraphError::Disconnected(_))));
    let negative = GraphDescription {
        vertices: v(&["a", "b"]),
        internal: vec![("x".into(), "a".into(), "b".into(), -1.0)],
        external: vec![],
    };
    assert!(matches!(graph(negative), Err(GraphError::NonpositiveLength { .. })));
    let dangling = GraphDescription {
        vertices: v(&["a", "b"]),
        internal: vec![("x".into(), "a".into(), "z".into(), 1.0)],
        external: vec![],
    };
    assert!(matches!(graph(dangling), Err(GraphError::DanglingEdgeReference { .. })));
    let dup = GraphDescription {
        vertices: v(&["a", "b"]),
        internal: vec![("x".into(), "a".into(), "b".into(), 1.0)],
        external: vec![("x".into(), "a".into())],
    };
    assert!(matches!(graph(dup), Err(GraphError::DuplicateId(_))));
    assert!(matches!(graph(GraphDescription::default()), Err(GraphError::Empty)));
}

#[test]
fn grammar_errors_carry_line_numbers() {
    let bad = "[vertices]\nv1 v2\n[internal]\ni1 v1 v2 one\n";
    match format::parse(bad) {
        Err(FormatError::Syntax { line, .. }) => assert_eq!(line, 4),
        other => panic!("expected syntax error, got {other:?}"),
    }
    assert!(format::parse("[nonsense]\n").is_err());
}

#[test]
fn delta_and_raw_conditions_parse() {
    let text = format!(
        "{TWO_LOOP}[condition v1]\ndelta -0.5\n[condition v2]\nA 1 -1 0\nA 0 1 -1\nA 0 0 0\nB 0 0 0\nB 0 0 0\nB 1 1 1+0i\n"
    );
    let file = format::parse(&text).unwrap();
    let Conditions::PerVertex(c) = &file.conditions else {
        panic!("expected per-vertex conditions")
    };
    assert_eq!(c[0], VertexCondition::Delta(-0.5));
    assert!(matches!(c[1], VertexCondition::Raw { .. }));
    let kirchhoff = VertexCondition::Kirchhoff.blocks(3);
    let VertexCondition::Raw { a, b } = &c[1] else { unreachable!() };
    assert_eq!(a, &kirchhoff.0);
    assert_eq!(b, &kirchhoff.1);
}

#[test]
fn complex_entries() {
    use graphwave::format::parse_complex;
    let z = parse_complex("1.5-2i").unwrap();
    assert_eq!((z.re, z.im), (1.5, -2.0));
    let z = parse_complex("3i").unwrap();
    assert_eq!((z.re, z.im), (0.0, 3.0));
    let z = parse_complex("-0.25").unwrap();
    assert_eq!((z.re, z.im), (-0.25, 0.0));
    assert!(parse_complex("abc").is_none());
}

fn condition(k: u8, gamma: f64) -> VertexCondition {
    match k % 4 {
        0 => VertexCondition::Dirichlet,
        1 => VertexCondition::Neumann,
        2 => VertexCondition::Kirchhoff,
        _ => VertexCondition::Delta(gamma),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn handshake(seed in any::<u64>(), nv in 1usize..6, extra in 0usize..4, ne in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ni = if nv == 1 { 0 } else { nv - 1 + extra };
        let g = random_graph(&mut rng, nv, ni, ne, (0.2, 3.0));
        let total: usize = g.vertices().map(|v| g.degree(v)).sum();
        prop_assert_eq!(total, g.external_count() + 2 * g.internal_count());
    }

    #[test]
    fn serialize_roundtrip(
        seed in any::<u64>(),
        nv in 1usize..6,
        extra in 0usize..3,
        ne in 0usize..3,
        kinds in proptest::collection::vec(any::<u8>(), 6),
        gamma in -3.0f64..3.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ni = if nv == 1 { 0 } else { nv - 1 + extra };
        let g = random_graph(&mut rng, nv, ni, ne, (0.1, 5.0));
        let conds: Vec<VertexCondition> = g.vertices().map(|v| condition(kinds[v.0], gamma)).collect();
        let text = format::serialize(&g, &Conditions::PerVertex(conds.clone()));
        let back = format::parse(&text).unwrap();
        prop_assert_eq!(back.graph.to_description(), g.to_description());
        prop_assert_eq!(&back.conditions, &Conditions::PerVertex(conds));
        let again = format::serialize(&back.graph, &back.conditions);
        prop_assert_eq!(again, text);
    }

    #[test]
    fn global_roundtrip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, 3, 3, 1, (0.5, 2.0));
        let n = g.external_count() + 2 * g.internal_count();
        let spec = graphwave::vertex::random::complex_spec(&mut rng, n);
        let text = format::serialize(&g, &Conditions::Global(spec.clone()));
        let back = format::parse(&text).unwrap();
        let Conditions::Global(s) = back.conditions else {
            panic!("expected a global condition")
        };
        prop_assert!((&s.a - &spec.a).norm() < 1e-14 * spec.a.norm().max(1.0));
        prop_assert!((&s.b - &spec.b).norm() < 1e-14 * spec.b.norm().max(1.0));
    }
}
