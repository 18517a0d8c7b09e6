//! Shared fixtures for the solver benchmarks.

use spectral_rates::graph::{build_graph, default_epsilon};
use spectral_rates::{Kernel, ManifoldModel, PointCloud, WeightedGraph};

/// Uniform sample of `n` points on the flat 2-torus.
pub fn torus_cloud(n: usize, seed: u64) -> PointCloud {
    ManifoldModel::torus(2)
        .expect("the 2-torus is supported")
        .sample_uniform(n, seed)
}

/// Default ε on the 2-torus with `c_eps = 1.5`.
pub fn torus_epsilon(n: usize) -> f64 {
    default_epsilon(n, 2, 1.5)
}

/// Tent-kernel ε-graph over [`torus_cloud`].
pub fn torus_graph(n: usize, seed: u64) -> WeightedGraph {
    build_graph(&torus_cloud(n, seed), torus_epsilon(n), Kernel::tent())
        .expect("fixture parameters are valid")
}
