//! Wave equation on metric graphs with self-adjoint vertex conditions.
//!
//! * [`graph`]: the metric-graph model and its text format ([`format`]).
//! * [`geometry`]: distance, balls, boundary sets, critical times.
//! * [`vertex`]: trace space, `(A,B)` validation, `P_M`, `Ω_M`, locality.
//! * [`spectral`]: eigenpairs of compact graphs, spectral evolution,
//!   Sobolev norms and the a priori estimates.
//! * [`wave`]: leapfrog solver, energies and finite-propagation-speed checks.

pub mod fields;
pub mod format;
pub mod geometry;
pub mod graph;
pub mod linalg;
pub mod quad;
pub mod spectral;
pub mod vertex;
pub mod wave;

pub use graph::{EdgeId, GraphPoint, MetricGraph, VertexId};
pub use vertex::{BoundarySpec, ValidatedSpec};

/// Worker pool sized by `GRAPHWAVE_THREADS` (defaults to rayon's choice).
pub fn thread_pool() -> rayon::ThreadPool {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var("GRAPHWAVE_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        b = b.num_threads(n);
    }
    b.build().expect("thread pool")
}
