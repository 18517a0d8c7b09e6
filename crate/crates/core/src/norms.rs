//! Error functionals: discrete `L̲²`, `H̲¹` and `H̲⁻¹` norms, the multiscale
//! `H⁻¹` bound on the torus, the scale-invariant eigenpair error `ℰ_l`,
//! Monte Carlo continuum errors and eigenspace alignment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{stream, ContinuumEigenpair, ManifoldModel, PointCloud, SmoothFunction};
use crate::graph::{normalized_laplacian, WeightedGraph};
use crate::linalg::{l2_dot, l2_norm, pinv_quadform, project_mean_zero, ScaledOp, SymOp};

/// Squared discrete `H̲¹` semi-norm
/// `(1/(n² ε^{d+2})) Σ_{x,y} η(|x−y|/ε) (u(x) − u(y))²`.
pub fn h1_disc(u: &[f64], graph: &WeightedGraph) -> f64 {
    let n = graph.n as f64;
    let sum: f64 = graph
        .edges()
        .map(|(i, j, w)| w * (u[i] - u[j]) * (u[i] - u[j]))
        .sum();
    2.0 * sum / (n * n * graph.epsilon.powi(graph.dim as i32 + 2))
}

/// Exact `‖h‖_{H̲⁻¹} = ⟨h̃, (σ_η ℒ)⁺ h̃⟩^{1/2}` on a connected graph.
pub fn hminus1_exact(h: &[f64], graph: &WeightedGraph, tol: f64) -> Result<f64> {
    let l = normalized_laplacian(graph)?;
    l.validate()?;
    let sigma = graph.kernel.sigma_eta(graph.dim)?;
    let op = ScaledOp { op: l, factor: sigma };
    Ok(pinv_quadform(&op, h, tol)?.sqrt())
}

/// Nested triadic partition of the torus. Level `p` (1 ≤ p ≤ m) consists of
/// the `3^{(m−p)d}` cubes of side `3^{p−m}` centred on `3^{p−m} ℤ^d`.
#[derive(Debug, Clone)]
pub struct CubeHierarchy {
    pub m: u32,
    pub dim: usize,
    /// `cells[p − 1][i]` is the level-`p` cell holding point `i`.
    pub cells: Vec<Vec<usize>>,
}

impl CubeHierarchy {
    /// Uses the smallest `m` with `3^m ≥ ⌈1/ε⌉`.
    pub fn build(cloud: &PointCloud, epsilon: f64) -> Result<Self> {
        if !cloud.model.is_torus() {
            return Err(Error::Capability(
                "the cube hierarchy is defined on the torus only".into(),
            ));
        }
        if !(epsilon > 0.0) {
            return Err(Error::Config("ε must be positive".into()));
        }
        let target = (1.0 / epsilon).ceil().max(1.0) as u64;
        let mut m = 0u32;
        while 3u64.pow(m) < target {
            m += 1;
        }
        let m = m.max(1);
        let dim = cloud.dim();
        let cells = (1..=m)
            .map(|p| {
                let per_axis = 3usize.pow(m - p);
                let side = 1.0 / per_axis as f64;
                cloud
                    .points()
                    .map(|x| {
                        x.iter().fold(0, |acc, &c| {
                            let k = ((c + 0.5 * side) / side).floor() as isize;
                            acc * per_axis + k.rem_euclid(per_axis as isize) as usize
                        })
                    })
                    .collect()
            })
            .collect();
        Ok(Self { m, dim, cells })
    }

    pub fn cells_at(&self, p: u32) -> usize {
        3usize.pow((self.m - p) * self.dim as u32)
    }

    /// Root mean square over all level-`p` cells of the cell averages of `h`;
    /// empty cells contribute zero.
    pub fn level_rms(&self, p: u32, h: &[f64]) -> f64 {
        let count = self.cells_at(p);
        let mut sums = vec![0.0; count];
        let mut sizes = vec![0usize; count];
        for (&c, &v) in self.cells[p as usize - 1].iter().zip(h) {
            sums[c] += v;
            sizes[c] += 1;
        }
        let total: f64 = sums
            .iter()
            .zip(&sizes)
            .filter(|(_, &s)| s > 0)
            .map(|(&sum, &s)| (sum / s as f64).powi(2))
            .sum();
        (total / count as f64).sqrt()
    }
}

/// Multiscale bound `ε‖h‖_{L̲²} + Σ_p 3^{p−m} (mean_υ (avg_υ h)²)^{1/2}`.
pub fn multiscale_hminus1(h: &[f64], cloud: &PointCloud, epsilon: f64) -> Result<f64> {
    let hier = CubeHierarchy::build(cloud, epsilon)?;
    Ok(multiscale_with(&hier, h, epsilon))
}

/// Multiscale bound on a prebuilt hierarchy.
pub fn multiscale_with(hier: &CubeHierarchy, h: &[f64], epsilon: f64) -> f64 {
    let mut total = epsilon * l2_norm(h);
    for p in 1..=hier.m {
        total += 3f64.powi(p as i32 - hier.m as i32) * hier.level_rms(p, h);
    }
    total
}

/// Per-run eigenpair errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub n: usize,
    pub eps: f64,
    pub seed: u64,
    pub l: usize,
    pub manifold: String,
    pub density: String,
    pub kernel: String,
    pub lambda_nl: f64,
    pub lambda_l: f64,
    pub gamma_l: f64,
    pub lambda_rel_err: f64,
    pub l2_err: f64,
    pub h1_err: f64,
    #[serde(rename = "E_l")]
    pub e_l: f64,
}

impl ErrorRecord {
    pub fn with_meta(mut self, l: usize, density: &str) -> Self {
        self.l = l;
        self.density = density.to_string();
        self
    }
}

/// Values of each continuum eigenfunction at the sample points.
pub fn restrict(level: &[ContinuumEigenpair], cloud: &PointCloud) -> Vec<Vec<f64>> {
    level
        .iter()
        .map(|f| cloud.points().map(|x| f.eval(x)).collect())
        .collect()
}

/// Coefficients of the least-squares projection of `phi` onto the span of
/// `basis` in the weighted inner product `Σ w_i u_i v_i` (uniform weights
/// when `weights` is `None`).
pub fn projection_coefficients(
    phi: &[f64],
    basis: &[Vec<f64>],
    weights: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let k = basis.len();
    if k == 0 {
        return Err(Error::DegenerateBasis);
    }
    let ip = |a: &[f64], b: &[f64]| -> f64 {
        match weights {
            Some(w) => a.iter().zip(b).zip(w).map(|((x, y), w)| x * y * w).sum(),
            None => l2_dot(a, b),
        }
    };
    let mut gram = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    for a in 0..k {
        for b in a..k {
            let g = ip(&basis[a], &basis[b]);
            gram[a * k + b] = g;
            gram[b * k + a] = g;
        }
        rhs[a] = ip(&basis[a], phi);
    }
    solve_spd(&mut gram, &mut rhs, k)?;
    Ok(rhs)
}

/// Cholesky solve in place; the solution overwrites `rhs`.
fn solve_spd(a: &mut [f64], rhs: &mut [f64], k: usize) -> Result<()> {
    let scale = (0..k).map(|i| a[i * k + i]).fold(0.0f64, f64::max);
    for j in 0..k {
        let mut d = a[j * k + j];
        for p in 0..j {
            d -= a[j * k + p] * a[j * k + p];
        }
        if d <= 1e-12 * scale || !d.is_finite() {
            return Err(Error::DegenerateBasis);
        }
        let d = d.sqrt();
        a[j * k + j] = d;
        for i in j + 1..k {
            let mut s = a[i * k + j];
            for p in 0..j {
                s -= a[i * k + p] * a[j * k + p];
            }
            a[i * k + j] = s / d;
        }
    }
    for i in 0..k {
        let mut s = rhs[i];
        for p in 0..i {
            s -= a[i * k + p] * rhs[p];
        }
        rhs[i] = s / a[i * k + i];
    }
    for i in (0..k).rev() {
        let mut s = rhs[i];
        for p in i + 1..k {
            s -= a[p * k + i] * rhs[p];
        }
        rhs[i] = s / a[i * k + i];
    }
    Ok(())
}

/// The aligned exact eigenfunction `f_l = Σ c_j f_j / |c|` where `c` are the
/// projection coefficients of `phi` onto the restricted eigenspace. Returns the
/// unit coefficients.
pub fn align_to_eigenspace(phi: &[f64], restricted: &[Vec<f64>]) -> Result<Vec<f64>> {
    let c = projection_coefficients(phi, restricted, None)?;
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 1e-12) {
        return Err(Error::DegenerateAlignment);
    }
    Ok(c.into_iter().map(|v| v / norm).collect())
}

/// `Σ c_j v_j`.
pub fn combine(coeffs: &[f64], vectors: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; vectors[0].len()];
    for (c, v) in coeffs.iter().zip(vectors) {
        for (o, x) in out.iter_mut().zip(v) {
            *o += c * x;
        }
    }
    out
}

/// `ℰ_l` and its components for the graph eigenpair `(lambda_nl, phi_nl)`
/// against the exact eigenspace `level` with spectral gap `gamma_l`.
pub fn error_functional(
    lambda_nl: f64,
    phi_nl: &[f64],
    level: &[ContinuumEigenpair],
    gamma_l: f64,
    graph: &WeightedGraph,
    cloud: &PointCloud,
) -> Result<ErrorRecord> {
    let lambda_l = level
        .first()
        .ok_or(Error::DegenerateBasis)?
        .lambda;
    if !(lambda_l > 0.0) {
        return Err(Error::Config(
            "the error functional needs a positive target eigenvalue".into(),
        ));
    }
    let restricted = restrict(level, cloud);
    let coeffs = align_to_eigenspace(phi_nl, &restricted)?;
    let f = combine(&coeffs, &restricted);
    let diff: Vec<f64> = phi_nl.iter().zip(&f).map(|(a, b)| a - b).collect();
    let lambda_rel_err = (lambda_nl - lambda_l).abs() / lambda_l;
    let l2_err = l2_norm(&diff);
    let h1_err = h1_disc(&diff, graph).sqrt();
    let e_l = lambda_rel_err + gamma_l / lambda_l * l2_err + gamma_l / lambda_l.sqrt() * h1_err;
    Ok(ErrorRecord {
        n: graph.n,
        eps: graph.epsilon,
        seed: cloud.seed,
        l: 0,
        manifold: cloud.model.name(),
        density: "uniform".to_string(),
        kernel: graph.kernel.name().to_string(),
        lambda_nl,
        lambda_l,
        gamma_l,
        lambda_rel_err,
        l2_err,
        h1_err,
        e_l,
    })
}

/// Monte Carlo estimates of `∫ (F − G)² dx` and `∫ |∇F − ∇G|² dx` (squared
/// values) with their standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McError {
    pub l2_sq: f64,
    pub h1_semi_sq: f64,
    pub l2_sq_se: f64,
    pub h1_semi_sq_se: f64,
}

pub fn mc_h1_error(
    f: &dyn SmoothFunction,
    g: &dyn SmoothFunction,
    model: &ManifoldModel,
    n_mc: usize,
    seed: u64,
) -> McError {
    let mut rng = stream(seed);
    let mut x = vec![0.0; model.ambient_dim];
    let mut l2 = Accumulator::default();
    let mut h1 = Accumulator::default();
    for _ in 0..n_mc {
        model.draw_uniform(&mut rng, &mut x);
        let dv = f.eval(&x) - g.eval(&x);
        let gf = f.grad(&x);
        let gg = g.grad(&x);
        let dg: f64 = gf.iter().zip(&gg).map(|(a, b)| (a - b) * (a - b)).sum();
        l2.push(model.volume * dv * dv);
        h1.push(model.volume * dg);
    }
    McError {
        l2_sq: l2.mean(),
        h1_semi_sq: h1.mean(),
        l2_sq_se: l2.std_error(),
        h1_semi_sq_se: h1.std_error(),
    }
}

/// Streaming mean and variance (Welford).
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, v: f64) {
        self.count += 1;
        let delta = v - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (v - self.mean);
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std_error(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        (self.m2 / (self.count - 1) as f64 / self.count as f64).sqrt()
    }
}

/// `‖φ − P φ‖_{L̲²}` where `P` projects onto the span of `basis`.
pub fn subspace_residual(phi: &[f64], basis: &[Vec<f64>]) -> Result<f64> {
    if basis.is_empty() {
        return Err(Error::DegenerateBasis);
    }
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(basis.len());
    for b in basis {
        let mut v = b.clone();
        let original = l2_norm(&v);
        for _ in 0..2 {
            for q in &ortho {
                let c = l2_dot(q, &v);
                v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let s = l2_norm(&v);
        if !(s > 1e-10 * original) {
            return Err(Error::DegenerateBasis);
        }
        v.iter_mut().for_each(|x| *x /= s);
        ortho.push(v);
    }
    let mut r = phi.to_vec();
    for _ in 0..2 {
        for q in &ortho {
            let c = l2_dot(q, &r);
            r.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
        }
    }
    Ok(l2_norm(&r))
}

/// Mean-zero copy of `h`.
pub fn mean_zero(h: &[f64]) -> Vec<f64> {
    let mut v = h.to_vec();
    project_mean_zero(&mut v);
    v
}
