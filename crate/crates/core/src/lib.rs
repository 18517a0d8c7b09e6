//! Graph-Laplacian eigenpair estimation on sampled manifolds.
//!
//! The crate builds ε-proximity graphs over samples drawn from a density on
//! a flat torus or the unit sphere, extracts the low end of the rescaled graph
//! Laplacian spectrum, and measures how far those eigenpairs sit from the
//! eigenpairs of the weighted Laplace–Beltrami operator
//! `Δ_ρ f = -ρ⁻¹ div(ρ² ∇f)`.
//!
//! Modules, bottom-up:
//!
//! | module | contents |
//! |--------|----------|
//! | [`geometry`] | manifold models, samplers, distances, exact spectra |
//! | [`density`] | uniform and bump-perturbed densities, KL divergence |
//! | [`graph`] | kernels, cell-list ε-graphs, Laplacian operators |
//! | [`linalg`] | Lanczos, mean-zero conjugate residual solves |
//! | [`norms`] | discrete L², H¹, H⁻¹ and the multiscale H⁻¹ bound |
//! | [`extension`] | kernel extension of graph functions to the manifold |
//! | [`pde`] | periodic finite differences, KDE plug-in, bump separation |
//! | [`harness`] | experiment configs, drivers, CSV/JSON reports |

// `!(x > 0.0)` guards deliberately reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod density;
pub mod error;
pub mod extension;
pub mod geometry;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod norms;
pub mod pde;
mod quad;

pub use density::{DensityKind, DensityModel};
pub use error::{Error, Result};
pub use geometry::{ContinuumEigenpair, ManifoldKind, ManifoldModel, PointCloud};
pub use graph::{Kernel, KernelProfile, SparseSymMatrix, WeightedGraph};
pub use harness::{ConvergenceReport, ExperimentConfig, Study};
pub use linalg::{EigPair, SymOp};
pub use norms::ErrorRecord;

/// Version string echoed into every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
