//! Experiment harness: configuration, study drivers, rate fits and
//! CSV/JSON reports.
//!
//! CSV columns per study (`n` holds `m` for `lowerbound`):
//!
//! | study | lambda_rel_err | l2_err | h1_err | E_l | aux1 | aux2 |
//! |-------|----------------|--------|--------|-----|------|------|
//! | spectral | relative eigenvalue error | `L̲²` eigenvector error | `H̲¹` eigenvector error | `ℰ_l` | eigenvalue identity deviation | `ε√λ_l` |
//! | poisson | 0 | `L̲²` error | `H̲¹` error | 0 | relative residual | iterations |
//! | hminus1 | largest `⟨g,h⟩/(‖h‖₋₁‖g‖₁)` | exact `H̲⁻¹` | multiscale bound | spectral identity deviation | exact / multiscale | consistency `H̲⁻¹` over `ε² ln(1/ε) √λ_l` |
//! | extension | relative eigenvalue error | `L²` error | `H¹` error | graph `ℰ_l` | coverage miss fraction | gradient error |
//! | plugin | relative eigenvalue error | grid `L²` error | grid `H¹` error | `|Δλ| + H¹` error | bandwidth | gradient error |
//! | lowerbound | `|Δλ|` | `L²` separation | gradient separation | separation | KL | χ² bound |

pub mod config;
pub mod fit;
pub mod report;
pub mod studies;

pub use config::{ExperimentConfig, Study};
pub use fit::{fit_loglog, LogLogFit};
pub use report::{ConvergenceReport, CsvRow};
pub use studies::{replay, run};

/// Runs a study and writes its CSV and JSON reports under `cfg.out_dir`.
pub fn run_and_write(cfg: &ExperimentConfig) -> crate::Result<ConvergenceReport> {
    let report = run(cfg)?;
    report.write(&cfg.out_dir)?;
    Ok(report)
}
