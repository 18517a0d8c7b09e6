//! Experiment drivers. Each study expands its configuration into independent
//! units (one sample size or scale and one trial), runs them on a worker
//! pool and assembles a [`ConvergenceReport`].

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};
use std::time::Instant;

use log::{info, warn};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::config::{ExperimentConfig, Study};
use super::report::{aggregate, fit_medians, run_id, ConvergenceReport, CsvRow};
use crate::density::{chi2_bound, kl_divergence, sufficiently_different, DensityKind, DensityModel};
use crate::error::{Error, Result};
use crate::extension::extension_h1_error;
use crate::geometry::{stream, trial_seed, ContinuumEigenpair, PointCloud};
use crate::graph::{build_graph, normalized_laplacian, WeightedGraph};
use crate::linalg::{
    cg_solve_meanzero_with_stats, l2_dot, l2_norm, lanczos_smallest, project_mean_zero, EigPair,
    SymOp, SOLVE_TOL,
};
use crate::norms::{
    align_to_eigenspace, combine, error_functional, h1_disc, hminus1_exact, multiscale_hminus1,
    restrict, ErrorRecord,
};
use crate::pde::{
    align_grid, eigenpair_separation, grid_norms, level_set, plugin_estimate, GridOperator,
    PeriodicGrid,
};

/// Lanczos tolerance used by the studies; tight enough for the eigenvalue
/// identity check to hold to about `1e-8` relative.
pub const STUDY_LANCZOS_TOL: f64 = 1e-10;
/// Operator applications allowed per Lanczos call.
pub const STUDY_LANCZOS_ITER: usize = 20_000;
/// Random test functions per seed for the variational inequality check.
pub const VARIATIONAL_SAMPLES: usize = 500;
/// A study aborts when more than this fraction of its trials fail.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;

/// One independent run: sample size (or `m` for the lower-bound study),
/// scale, trial index and seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unit {
    pub n: usize,
    pub eps: f64,
    pub trial: usize,
    pub seed: u64,
}

/// Metric columns of one row.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Metrics {
    pub lambda_rel_err: f64,
    pub l2_err: f64,
    pub h1_err: f64,
    pub e_l: f64,
    pub aux1: f64,
    pub aux2: f64,
}

/// Study-wide precomputation shared by all units.
enum Context {
    None,
    Plugin { grid: PeriodicGrid, op: Box<GridOperator>, level: Vec<EigPair> },
}

fn build_context(cfg: &ExperimentConfig) -> Result<Context> {
    match cfg.study {
        Study::Plugin => {
            let density = cfg.density_model()?;
            let model = &density.model;
            if !model.is_torus() || model.intrinsic_dim > 2 {
                return Err(Error::Capability(
                    "the plug-in study runs on the torus in one or two dimensions".into(),
                ));
            }
            let grid = PeriodicGrid::new(model.intrinsic_dim, cfg.grid)?;
            let op = GridOperator::from_density(grid, &density)?;
            let level = level_set(&op, cfg.l, 1e-6)?;
            Ok(Context::Plugin { grid, op: Box::new(op), level })
        }
        _ => Ok(Context::None),
    }
}

/// Expands the configuration into units, in output order.
pub fn units(cfg: &ExperimentConfig) -> Result<Vec<Unit>> {
    let mut out = Vec::new();
    match cfg.study {
        Study::Lowerbound => {
            for &m in &cfg.m_list {
                out.push(Unit {
                    n: m,
                    eps: 0.0,
                    trial: 0,
                    seed: cfg.seed,
                });
            }
        }
        Study::Poisson if !cfg.eps_list.is_empty() => {
            for &n in &cfg.n_list {
                for &eps in &cfg.eps_list {
                    for trial in 0..cfg.trials {
                        out.push(Unit {
                            n,
                            eps,
                            trial,
                            seed: trial_seed(cfg.seed, trial),
                        });
                    }
                }
            }
        }
        Study::Plugin => {
            for &n in &cfg.n_list {
                for trial in 0..cfg.trials {
                    out.push(Unit {
                        n,
                        eps: 0.0,
                        trial,
                        seed: trial_seed(cfg.seed, trial),
                    });
                }
            }
        }
        _ => {
            for &n in &cfg.n_list {
                let eps = cfg.eps_for(n)?;
                for trial in 0..cfg.trials {
                    out.push(Unit {
                        n,
                        eps,
                        trial,
                        seed: trial_seed(cfg.seed, trial),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Errors that exclude a trial instead of aborting the study.
fn is_trial_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::Disconnected { .. } | Error::Coverage { .. } | Error::Convergence { .. }
    )
}

/// Runs every unit of the study and assembles the report.
pub fn run(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let start = Instant::now();
    let ctx = build_context(cfg)?;
    let units = units(cfg)?;
    let workers = if cfg.workers == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        cfg.workers
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<CsvRow>> =
        pool.install(|| units.par_iter().map(|u| run_row(cfg, &ctx, u)).collect());

    let attempted = results.len();
    let mut rows = Vec::with_capacity(attempted);
    let mut failures = 0;
    for (unit, res) in units.iter().zip(results) {
        match res {
            Ok(row) => rows.push(row),
            Err(e) if is_trial_failure(&e) => {
                warn!("{} n={} trial={} excluded: {e}", cfg.study, unit.n, unit.trial);
                failures += 1;
            }
            Err(e) => return Err(e),
        }
    }
    if failures as f64 > MAX_FAILURE_FRACTION * attempted as f64 {
        return Err(Error::StudyAborted {
            failures,
            attempted,
        });
    }

    let (x_label, fit_rows, metrics): (&str, Vec<CsvRow>, Vec<&str>) = match cfg.study {
        Study::Spectral => ("n", rows.clone(), vec!["lambda_rel_err", "l2_err", "h1_err", "E_l"]),
        Study::Extension => ("n", rows.clone(), vec!["l2_err", "h1_err", "aux2", "E_l"]),
        Study::Plugin => ("n", rows.clone(), vec!["lambda_rel_err", "l2_err", "h1_err", "E_l"]),
        Study::Hminus1 => ("n", rows.clone(), vec!["l2_err", "h1_err"]),
        Study::Lowerbound => ("m", rows.clone(), vec!["E_l", "aux1", "aux2", "h1_err", "l2_err"]),
        Study::Poisson => {
            let n_max = rows.iter().map(|r| r.n).max().unwrap_or(0);
            (
                "eps",
                rows.iter().filter(|r| r.n == n_max).cloned().collect(),
                vec!["h1_err", "l2_err"],
            )
        }
    };
    let aggregates = if cfg.study == Study::Poisson {
        aggregate(&fit_rows, |r| r.eps)
    } else {
        aggregate(&fit_rows, |r| r.n as f64)
    };
    let fits = fit_medians(&aggregates, &metrics);
    let summary = summarize(cfg.study, &rows);
    let report = ConvergenceReport {
        study: cfg.study,
        version: crate::VERSION.to_string(),
        config: cfg.clone(),
        x_label: x_label.to_string(),
        rows,
        aggregates,
        fits,
        attempted,
        failures,
        summary,
        wall_ms: start.elapsed().as_millis() as u64,
    };
    info!(
        "{} finished: {} rows, {} failures, {} ms",
        cfg.study,
        report.rows.len(),
        failures,
        report.wall_ms
    );
    Ok(report)
}

fn summarize(study: Study, rows: &[CsvRow]) -> BTreeMap<String, f64> {
    let max = |f: fn(&CsvRow) -> f64| rows.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    let mut s = BTreeMap::new();
    match study {
        Study::Spectral => {
            s.insert("max_identity_rel_dev".into(), max(|r| r.aux1));
        }
        Study::Poisson => {
            s.insert("max_relative_residual".into(), max(|r| r.aux1));
        }
        Study::Hminus1 => {
            s.insert("max_exact_over_multiscale".into(), max(|r| r.aux1));
            s.insert("max_spectral_identity_rel_dev".into(), max(|r| r.e_l));
            s.insert("max_variational_ratio".into(), max(|r| r.lambda_rel_err));
            s.insert("max_consistency_over_bound".into(), max(|r| r.aux2));
        }
        Study::Extension => {
            s.insert("max_miss_fraction".into(), max(|r| r.aux1));
        }
        Study::Lowerbound => {
            s.insert("max_kl_over_chi2".into(), max(|r| r.aux1 / r.aux2));
        }
        Study::Plugin => {}
    }
    s
}

fn run_row(cfg: &ExperimentConfig, ctx: &Context, unit: &Unit) -> Result<CsvRow> {
    let start = Instant::now();
    let m = run_unit(cfg, ctx, unit)?;
    Ok(CsvRow {
        run_id: run_id(cfg, unit.n, unit.eps, unit.trial, unit.seed),
        study: cfg.study,
        n: unit.n,
        eps: unit.eps,
        trial: unit.trial,
        seed: unit.seed,
        lambda_rel_err: m.lambda_rel_err,
        l2_err: m.l2_err,
        h1_err: m.h1_err,
        e_l: m.e_l,
        aux1: m.aux1,
        aux2: m.aux2,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

/// Re-runs the unit behind `row` in isolation.
pub fn replay(cfg: &ExperimentConfig, row: &CsvRow) -> Result<CsvRow> {
    if row.study != cfg.study {
        return Err(Error::Config(format!(
            "row belongs to study {} but the config runs {}",
            row.study, cfg.study
        )));
    }
    let unit = Unit {
        n: row.n,
        eps: row.eps,
        trial: row.trial,
        seed: row.seed,
    };
    if run_id(cfg, unit.n, unit.eps, unit.trial, unit.seed) != row.run_id {
        return Err(Error::Config(
            "run id does not match this configuration".into(),
        ));
    }
    let ctx = build_context(cfg)?;
    run_row(cfg, &ctx, &unit)
}

fn run_unit(cfg: &ExperimentConfig, ctx: &Context, u: &Unit) -> Result<Metrics> {
    match cfg.study {
        Study::Spectral => spectral_unit(cfg, u),
        Study::Poisson => poisson_unit(cfg, u),
        Study::Hminus1 => hminus1_unit(cfg, u),
        Study::Extension => extension_unit(cfg, u),
        Study::Plugin => match ctx {
            Context::Plugin { grid, op, level } => plugin_unit(cfg, u, *grid, op, level),
            Context::None => unreachable!("plug-in context is built before units run"),
        },
        Study::Lowerbound => lowerbound_unit(cfg, u),
    }
}

/// Result of one sample-graph-eigensolve pipeline.
pub struct SpectralTrial {
    pub cloud: PointCloud,
    pub graph: WeightedGraph,
    /// Smallest eigenpairs of `ℒ`, covering the whole target eigenspace.
    pub pairs: Vec<EigPair>,
    pub level: Vec<ContinuumEigenpair>,
    pub gamma: f64,
    pub record: ErrorRecord,
    /// `⟨φ, ℒf − λ f⟩ / ⟨φ, f⟩` for the aligned exact eigenfunction `f`.
    pub quotient: f64,
}

fn require_uniform(density: &DensityModel) -> Result<()> {
    if density.kind != DensityKind::Uniform {
        return Err(Error::Capability(
            "exact eigenpairs are known for the uniform density only".into(),
        ));
    }
    Ok(())
}

/// Samples `n` points, builds the ε-graph and computes the `l`-th eigenpair
/// of `ℒ` together with its error against the exact eigenspace.
pub fn spectral_trial(cfg: &ExperimentConfig, n: usize, eps: f64, seed: u64) -> Result<SpectralTrial> {
    let density = cfg.density_model()?;
    require_uniform(&density)?;
    let model = &density.model;
    let kernel = cfg.kernel()?;
    let (level, gamma) = model.eigenspace(cfg.l)?;
    let cloud = density.sample(n, seed);
    let graph = build_graph(&cloud, eps, kernel)?;
    if !graph.is_connected() {
        return Err(Error::Disconnected {
            components: graph.components,
        });
    }
    let op = normalized_laplacian(&graph)?;
    let k = (cfg.l + level.len() - 1).min(n);
    let pairs = lanczos_smallest(&op, k, STUDY_LANCZOS_TOL, STUDY_LANCZOS_ITER, seed)?;
    let phi = &pairs[cfg.l - 1];
    let record = error_functional(phi.value, &phi.vector, &level, gamma, &graph, &cloud)?
        .with_meta(cfg.l, &density.name());

    let restricted = restrict(&level, &cloud);
    let f = combine(&align_to_eigenspace(&phi.vector, &restricted)?, &restricted);
    let mut lf = vec![0.0; n];
    op.apply(&f, &mut lf);
    let lambda_l = level[0].lambda;
    let h: Vec<f64> = lf.iter().zip(&f).map(|(a, b)| a - lambda_l * b).collect();
    let quotient = l2_dot(&phi.vector, &h) / l2_dot(&phi.vector, &f);
    Ok(SpectralTrial {
        cloud,
        graph,
        pairs,
        level,
        gamma,
        record,
        quotient,
    })
}

fn spectral_unit(cfg: &ExperimentConfig, u: &Unit) -> Result<Metrics> {
    let t = spectral_trial(cfg, u.n, u.eps, u.seed)?;
    let r = &t.record;
    let diff = r.lambda_nl - r.lambda_l;
    Ok(Metrics {
        lambda_rel_err: r.lambda_rel_err,
        l2_err: r.l2_err,
        h1_err: r.h1_err,
        e_l: r.e_l,
        aux1: (t.quotient - diff).abs() / diff.abs().max(f64::MIN_POSITIVE),
        aux2: u.eps * r.lambda_l.sqrt(),
    })
}

fn extension_unit(cfg: &ExperimentConfig, u: &Unit) -> Result<Metrics> {
    let t = spectral_trial(cfg, u.n, u.eps, u.seed)?;
    let phi = &t.pairs[cfg.l - 1].vector;
    let ext = extension_h1_error(
        phi,
        &t.level,
        &t.cloud,
        u.eps,
        t.graph.kernel,
        cfg.mc_points,
        u.seed.wrapping_add(0x9e37_79b9_7f4a_7c15),
    )?;
    if ext.flagged() {
        return Err(Error::Coverage { radius: u.eps / 2.0 });
    }
    Ok(Metrics {
        lambda_rel_err: t.record.lambda_rel_err,
        l2_err: ext.l2_err,
        h1_err: ext.h1_err,
        e_l: t.record.e_l,
        aux1: ext.miss_fraction(),
        aux2: ext.grad_err,
    })
}

/// The mean-zero Poisson fixture `ū = √2 cos(2π x₁)`.
pub fn poisson_solution(x: &[f64]) -> f64 {
    SQRT_2 * (2.0 * PI * x[0]).cos()
}

fn poisson_unit(cfg: &ExperimentConfig, u: &Unit) -> Result<Metrics> {
    let density = cfg.density_model()?;
    require_uniform(&density)?;
    if !density.model.is_torus() {
        return Err(Error::Capability("the Poisson study runs on the torus".into()));
    }
    let cloud = density.sample(u.n, u.seed);
    let graph = build_graph(&cloud, u.eps, cfg.kernel()?)?;
    if !graph.is_connected() {
        return Err(Error::Disconnected {
            components: graph.components,
        });
    }
    let op = normalized_laplacian(&graph)?;
    let mut ubar: Vec<f64> = cloud.points().map(poisson_solution).collect();
    let f: Vec<f64> = ubar.iter().map(|v| 4.0 * PI * PI * v).collect();
    let (sol, stats) = cg_solve_meanzero_with_stats(&op, &f, SOLVE_TOL, 50 * u.n.max(100))?;
    let mut rhs = f.clone();
    project_mean_zero(&mut rhs);
    let mut lu = vec![0.0; u.n];
    op.apply(&sol, &mut lu);
    let resid: Vec<f64> = lu.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    project_mean_zero(&mut ubar);
    let diff: Vec<f64> = sol.iter().zip(&ubar).map(|(a, b)| a - b).collect();
    Ok(Metrics {
        lambda_rel_err: 0.0,
        l2_err: l2_norm(&diff),
        h1_err: h1_disc(&diff, &graph).sqrt(),
        e_l: 0.0,
        aux1: l2_norm(&resid) / l2_norm(&f).max(f64::MIN_POSITIVE),
        aux2: stats.iterations as f64,
    })
}

fn hminus1_unit(cfg: &ExperimentConfig, u: &Unit) -> Result<Metrics> {
    let density = cfg.density_model()?;
    require_uniform(&density)?;
    let model = &density.model;
    let cloud = density.sample(u.n, u.seed);
    let graph = build_graph(&cloud, u.eps, cfg.kernel()?)?;
    if !graph.is_connected() {
        return Err(Error::Disconnected {
            components: graph.components,
        });
    }
    let op = normalized_laplacian(&graph)?;
    let sigma = graph.kernel.sigma_eta(graph.dim)?;

    let mut rng = stream(u.seed.wrapping_add(0x2545_f491_4f6c_dd1d));
    let mut h: Vec<f64> = (0..u.n).map(|_| rng.sample(StandardNormal)).collect();
    project_mean_zero(&mut h);
    let exact = hminus1_exact(&h, &graph, SOLVE_TOL)?;
    let multiscale = multiscale_hminus1(&h, &cloud, u.eps)?;

    let mut worst: f64 = 0.0;
    for _ in 0..VARIATIONAL_SAMPLES {
        let g: Vec<f64> = (0..u.n).map(|_| rng.sample(StandardNormal)).collect();
        let bound = exact * h1_disc(&g, &graph).sqrt();
        worst = worst.max(l2_dot(&g, &h) / bound);
    }

    let pairs = lanczos_smallest(&op, 2, STUDY_LANCZOS_TOL, STUDY_LANCZOS_ITER, u.seed)?;
    let phi = &pairs[1];
    let predicted = l2_norm(&phi.vector) / (sigma * phi.value).sqrt();
    let identity_dev = (hminus1_exact(&phi.vector, &graph, SOLVE_TOL)? - predicted).abs() / predicted;

    let (level, _) = model.eigenspace(cfg.l)?;
    let f: Vec<f64> = cloud.points().map(|x| level[0].eval(x)).collect();
    let mut lf = vec![0.0; u.n];
    op.apply(&f, &mut lf);
    let lambda = level[0].lambda;
    let hc: Vec<f64> = lf.iter().zip(&f).map(|(a, b)| a - lambda * b).collect();
    let consistency = hminus1_exact(&hc, &graph, SOLVE_TOL)?;
    let scale = u.eps * u.eps * (1.0 / u.eps).ln() * lambda.sqrt();

    Ok(Metrics {
        lambda_rel_err: worst,
        l2_err: exact,
        h1_err: multiscale,
        e_l: identity_dev,
        aux1: exact / multiscale,
        aux2: consistency / scale,
    })
}

fn plugin_unit(
    cfg: &ExperimentConfig,
    u: &Unit,
    grid: PeriodicGrid,
    op: &GridOperator,
    level: &[EigPair],
) -> Result<Metrics> {
    let density = cfg.density_model()?;
    let cloud = density.sample(u.n, u.seed);
    let est = plugin_estimate(&cloud, cfg.l, grid, cfg.c_bw)?;
    let lambda = level[0].value;
    let aligned = align_grid(&est.f, level, op)?;
    let diff: Vec<f64> = est.f.iter().zip(&aligned).map(|(a, b)| a - b).collect();
    let (l2, grad) = grid_norms(grid, &diff);
    let lambda_err = (est.lambda - lambda).abs();
    Ok(Metrics {
        lambda_rel_err: lambda_err / lambda,
        l2_err: l2,
        h1_err: l2 + grad,
        e_l: lambda_err + l2 + grad,
        aux1: est.bandwidth,
        aux2: grad,
    })
}

fn lowerbound_unit(cfg: &ExperimentConfig, u: &Unit) -> Result<Metrics> {
    let model = cfg.manifold_model()?;
    let m = u.n;
    let cells = m.pow(model.intrinsic_dim as u32);
    let c1 = vec![1i8; cells];
    let c2: Vec<i8> = c1.iter().map(|s| -s).collect();
    if !sufficiently_different(&c1, &c2, 0.125)? {
        return Err(Error::Config("sign vectors are too close".into()));
    }
    if !cfg.grid.is_multiple_of(m) {
        warn!("grid {} is not a multiple of m = {m}; level multiplicities may split", cfg.grid);
    }
    let rho1 = DensityModel::bump(&model, m, c1)?;
    let rho2 = DensityModel::bump(&model, m, c2)?;
    let kl = kl_divergence(&rho1, &rho2, cfg.grid)?;
    let chi2 = chi2_bound(&rho1, &rho2, cfg.grid)?;
    let grid = PeriodicGrid::new(model.intrinsic_dim, cfg.grid)?;
    let sep = eigenpair_separation(&rho1, &rho2, cfg.l, grid)?;
    Ok(Metrics {
        lambda_rel_err: sep.lambda_diff,
        l2_err: sep.l2,
        h1_err: sep.grad_l2,
        e_l: sep.total(),
        aux1: kl,
        aux2: chi2,
    })
}
