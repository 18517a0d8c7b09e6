//! Periodic finite differences for `Δ_ρ f = −ρ⁻¹ div(ρ² ∇f)` on `T^d`,
//! `d ∈ {1, 2}`: reference eigenpairs under non-uniform densities, the KDE
//! plug-in estimator, and eigenpair separation for bump densities.
//!
//! The generalized problem `K f = λ M f` uses the flux-form stiffness
//! `K = Σ_faces ρ_face² h^{d−2} (e_i − e_j)(e_i − e_j)ᵀ` with
//! `ρ_face = (ρ_i + ρ_j)/2`, and the lumped mass `M = diag(ρ_i h^d)`.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::density::DensityModel;
use crate::error::{Error, Result};
use crate::geometry::{wrap_diff, PointCloud};
use crate::graph::SparseSymMatrix;
use crate::linalg::{lanczos_smallest, EigPair, SymOp};
use crate::norms::projection_coefficients;

/// Uniform periodic grid with `n` nodes per axis at `k/n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeriodicGrid {
    pub d: usize,
    pub n: usize,
}

impl PeriodicGrid {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        if !(1..=2).contains(&d) {
            return Err(Error::Capability(format!(
                "grid operators support d ∈ {{1, 2}} (got {d})"
            )));
        }
        if n < 16 {
            return Err(Error::Config(format!("grid needs at least 16 nodes per axis (got {n})")));
        }
        Ok(Self { d, n })
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Volume of one grid cell.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.d as i32)
    }

    /// Coordinates of node `idx` (row-major, last axis fastest).
    pub fn node(&self, idx: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.d];
        let mut rem = idx;
        for k in (0..self.d).rev() {
            x[k] = (rem % self.n) as f64 * self.h();
            rem /= self.n;
        }
        x
    }

    /// Index of the neighbour of `idx` one step forward along `axis`.
    pub fn forward(&self, idx: usize, axis: usize) -> usize {
        let stride = self.n.pow((self.d - 1 - axis) as u32);
        let coord = (idx / stride) % self.n;
        if coord + 1 == self.n {
            idx + stride - self.n * stride
        } else {
            idx + stride
        }
    }

    /// Samples a function at every node.
    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.len()).map(|i| f(&self.node(i))).collect()
    }
}

/// Stiffness and mass of `Δ_ρ` on a periodic grid.
#[derive(Debug, Clone)]
pub struct GridOperator {
    pub grid: PeriodicGrid,
    pub rho: Vec<f64>,
    pub stiffness: SparseSymMatrix,
    /// Diagonal of `M`.
    pub mass: Vec<f64>,
}

impl GridOperator {
    pub fn new(grid: PeriodicGrid, rho: Vec<f64>) -> Result<Self> {
        if rho.len() != grid.len() {
            return Err(Error::Config(format!(
                "density has {} values for a grid of {} nodes",
                rho.len(),
                grid.len()
            )));
        }
        if rho.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
            return Err(Error::Domain("grid density must be positive".into()));
        }
        let total = grid.len();
        let hw = grid.h().powi(grid.d as i32 - 2);
        let mut diag = vec![0.0; total];
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); total];
        for i in 0..total {
            for axis in 0..grid.d {
                let j = grid.forward(i, axis);
                let face = 0.5 * (rho[i] + rho[j]);
                let w = face * face * hw;
                diag[i] += w;
                diag[j] += w;
                let (a, b) = if i < j { (i, j) } else { (j, i) };
                rows[a].push((b, -w));
            }
        }
        let stiffness = SparseSymMatrix::from_upper_rows(diag, rows)?;
        let cell = grid.cell_volume();
        let mass = rho.iter().map(|r| r * cell).collect();
        Ok(Self {
            grid,
            rho,
            stiffness,
            mass,
        })
    }

    /// Operator for a density model evaluated at the grid nodes.
    pub fn from_density(grid: PeriodicGrid, density: &DensityModel) -> Result<Self> {
        if !density.model.is_torus() || density.model.intrinsic_dim != grid.d {
            return Err(Error::Config(
                "density must live on the torus of the grid's dimension".into(),
            ));
        }
        Self::new(grid, density.on_grid(grid.n)?)
    }

    /// `Σ_faces ρ_face² h^{d−2} (f_i − f_j)²`, i.e. `fᵀ K f`.
    pub fn energy(&self, f: &[f64]) -> f64 {
        let mut y = vec![0.0; f.len()];
        self.stiffness.matvec(f, &mut y);
        f.iter().zip(&y).map(|(a, b)| a * b).sum()
    }
}

/// Shift used in the spectral transformation `−(A + sI)⁻¹`.
const SHIFT: f64 = 1.0;
/// Lanczos tolerance for the transformed operator, whose norm is at most 1.
const GRID_TOL: f64 = 1e-12;

/// Solver for `(K + sM) y = b`.
enum ShiftedSolver {
    Cyclic(CyclicTridiagonal),
    Pcg(FftPcg),
}

/// `B = −M^{1/2} (K + sM)⁻¹ M^{1/2}`, whose most negative eigenvalues
/// `μ = −1/(λ + s)` correspond to the smallest eigenvalues of `K f = λ M f`.
struct ShiftInvert<'a> {
    op: &'a GridOperator,
    sqrt_mass: Vec<f64>,
    solver: ShiftedSolver,
}

impl SymOp for ShiftInvert<'_> {
    fn dim(&self) -> usize {
        self.sqrt_mass.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let b: Vec<f64> = x.iter().zip(&self.sqrt_mass).map(|(a, s)| a * s).collect();
        let sol = match &self.solver {
            ShiftedSolver::Cyclic(c) => c.solve(&b),
            ShiftedSolver::Pcg(p) => p.solve(self.op, &b),
        };
        for ((yi, si), s) in y.iter_mut().zip(&sol).zip(&self.sqrt_mass) {
            *yi = -si * s;
        }
    }
}

/// The `k` smallest eigenpairs of `K f = λ M f`, ascending, with eigenvectors
/// normalized so that `Σ f_i² ρ_i h^d = 1`.
pub fn grid_eigenpairs(op: &GridOperator, k: usize) -> Result<Vec<EigPair>> {
    if k == 0 || k > 30 {
        return Err(Error::Config(format!("grid eigenpairs support 1 ≤ k ≤ 30 (got {k})")));
    }
    let sqrt_mass: Vec<f64> = op.mass.iter().map(|m| m.sqrt()).collect();
    let solver = match op.grid.d {
        1 => ShiftedSolver::Cyclic(CyclicTridiagonal::new(op, SHIFT)),
        _ => ShiftedSolver::Pcg(FftPcg::new(op, SHIFT)),
    };
    let si = ShiftInvert {
        op,
        sqrt_mass,
        solver,
    };
    let pairs = lanczos_smallest(&si, k, GRID_TOL, 4000, 0x5eed)?;
    let root_n = (op.grid.len() as f64).sqrt();
    let mut out: Vec<EigPair> = pairs
        .into_iter()
        .map(|p| {
            let lambda = -1.0 / p.value - SHIFT;
            let vector: Vec<f64> = p
                .vector
                .iter()
                .zip(&si.sqrt_mass)
                .map(|(v, s)| v / root_n / s)
                .collect();
            // residual of the transformed problem mapped back to λ
            let residual = p.residual / (p.value * p.value);
            EigPair {
                value: lambda.max(0.0),
                vector,
                residual,
            }
        })
        .collect();
    out.sort_by(|a, b| a.value.total_cmp(&b.value));
    Ok(out)
}

/// Direct solver for the periodic tridiagonal `K + sM` in one dimension
/// (Thomas algorithm with a Sherman–Morrison correction for the corners).
struct CyclicTridiagonal {
    /// Modified diagonal after elimination.
    c_prime: Vec<f64>,
    denom: Vec<f64>,
    off: Vec<f64>,
    corner: f64,
    gamma: f64,
    z: Vec<f64>,
    z_factor: f64,
}

impl CyclicTridiagonal {
    fn new(op: &GridOperator, shift: f64) -> Self {
        let n = op.grid.len();
        let a = &op.stiffness;
        let diag: Vec<f64> = (0..n).map(|i| a.diag[i] + shift * op.mass[i]).collect();
        // off[i] couples i and i+1; off[n−1] couples n−1 and 0
        let off: Vec<f64> = (0..n).map(|i| a.get(i, (i + 1) % n)).collect();
        let corner = off[n - 1];
        let gamma = -diag[0];
        let mut d = diag;
        d[0] -= gamma;
        d[n - 1] -= corner * corner / gamma;
        // Thomas factorization of the modified (non-cyclic) system
        let mut c_prime = vec![0.0; n];
        let mut denom = vec![0.0; n];
        denom[0] = d[0];
        c_prime[0] = off[0] / denom[0];
        for i in 1..n {
            denom[i] = d[i] - off[i - 1] * c_prime[i - 1];
            if i + 1 < n {
                c_prime[i] = off[i] / denom[i];
            }
        }
        let mut solver = Self {
            c_prime,
            denom,
            off,
            corner,
            gamma,
            z: Vec::new(),
            z_factor: 0.0,
        };
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = corner;
        let z = solver.thomas(&u);
        solver.z_factor = 1.0 + z[0] + corner * z[n - 1] / gamma;
        solver.z = z;
        solver
    }

    fn thomas(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut y = vec![0.0; n];
        y[0] = b[0] / self.denom[0];
        for i in 1..n {
            y[i] = (b[i] - self.off[i - 1] * y[i - 1]) / self.denom[i];
        }
        for i in (0..n - 1).rev() {
            y[i] -= self.c_prime[i] * y[i + 1];
        }
        y
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut y = self.thomas(b);
        let factor = (y[0] + self.corner * y[n - 1] / self.gamma) / self.z_factor;
        for (yi, zi) in y.iter_mut().zip(&self.z) {
            *yi -= factor * zi;
        }
        y
    }
}

/// Conjugate gradients for `K + sM` preconditioned by the constant-coefficient
/// operator, inverted with FFTs.
struct FftPcg {
    n: usize,
    shift: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Preconditioner eigenvalues in row-major frequency order.
    symbol: Vec<f64>,
}

impl FftPcg {
    fn new(op: &GridOperator, shift: f64) -> Self {
        let n = op.grid.n;
        let h = op.grid.h();
        let total = op.grid.len();
        let faces = 2 * total;
        let k_mean = op.stiffness.val.iter().map(|v| -v).sum::<f64>() / faces as f64;
        let m_mean = op.mass.iter().sum::<f64>() / total as f64;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let axis: Vec<f64> = (0..n)
            .map(|k| 4.0 * (PI * k as f64 * h).sin().powi(2))
            .collect();
        let mut symbol = Vec::with_capacity(total);
        for a in &axis {
            for b in &axis {
                symbol.push(k_mean * (a + b) + shift * m_mean);
            }
        }
        Self {
            n,
            shift,
            forward,
            inverse,
            symbol,
        }
    }

    fn transform(&self, data: &mut [Complex<f64>], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        for row in data.chunks_exact_mut(n) {
            plan.process(row);
        }
        let mut column = vec![Complex::new(0.0, 0.0); n];
        for c in 0..n {
            for r in 0..n {
                column[r] = data[r * n + c];
            }
            plan.process(&mut column);
            for r in 0..n {
                data[r * n + c] = column[r];
            }
        }
    }

    fn precondition(&self, r: &[f64]) -> Vec<f64> {
        let mut data: Vec<Complex<f64>> = r.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.transform(&mut data, &self.forward);
        for (d, s) in data.iter_mut().zip(&self.symbol) {
            *d /= *s;
        }
        self.transform(&mut data, &self.inverse);
        let scale = 1.0 / (self.n * self.n) as f64;
        data.iter().map(|c| c.re * scale).collect()
    }

    fn solve(&self, op: &GridOperator, b: &[f64]) -> Vec<f64> {
        let total = b.len();
        let apply = |x: &[f64], y: &mut [f64]| {
            op.stiffness.matvec(x, y);
            for ((yi, xi), m) in y.iter_mut().zip(x).zip(&op.mass) {
                *yi += self.shift * m * xi;
            }
        };
        let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut x = vec![0.0; total];
        if bnorm == 0.0 {
            return x;
        }
        let mut r = b.to_vec();
        let mut z = self.precondition(&r);
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut ap = vec![0.0; total];
        for _ in 0..10 * total {
            apply(&p, &mut ap);
            let alpha = rz / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
            for i in 0..total {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            if r.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-14 * bnorm {
                break;
            }
            z = self.precondition(&r);
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..total {
                p[i] = z[i] + beta * p[i];
            }
        }
        x
    }
}

/// Raw wrapped-Gaussian KDE at a point:
/// `(1/n) Σ_i Σ_{s ∈ {−1,0,1}^d} (2πr²)^{−d/2} exp(−|x − x_i + s|²/(2r²))`
/// with `x − x_i` first wrapped into `[−1/2, 1/2)^d`.
pub fn kde_eval(samples: &PointCloud, r: f64, x: &[f64]) -> f64 {
    let norm = (2.0 * PI * r * r).powf(-(x.len() as f64) / 2.0);
    let total: f64 = samples
        .points()
        .map(|p| {
            x.iter()
                .zip(p)
                .map(|(a, b)| wrapped_gauss(wrap_diff(a - b), r))
                .product::<f64>()
        })
        .sum();
    norm * total / samples.len() as f64
}

/// `Σ_{s ∈ {−1,0,1}} exp(−(δ + s)²/(2r²))`.
fn wrapped_gauss(delta: f64, r: f64) -> f64 {
    let inv = 1.0 / (2.0 * r * r);
    [-1.0, 0.0, 1.0]
        .iter()
        .map(|s| (-(delta + s) * (delta + s) * inv).exp())
        .sum()
}

/// Density floor applied before renormalization.
pub const KDE_FLOOR: f64 = 1e-6;

/// Wrapped-Gaussian KDE at the grid nodes, floored at [`KDE_FLOOR`] and
/// renormalized to unit grid mass.
pub fn kde_torus(samples: &PointCloud, r: f64, grid: PeriodicGrid) -> Result<Vec<f64>> {
    if !samples.model.is_torus() || samples.model.intrinsic_dim != grid.d {
        return Err(Error::Config(
            "KDE samples must live on the torus of the grid's dimension".into(),
        ));
    }
    if !(r > 0.0 && r < 0.25) {
        return Err(Error::Config(format!("KDE bandwidth must lie in (0, 1/4) (got {r})")));
    }
    if samples.is_empty() {
        return Err(Error::Config("KDE needs at least one sample".into()));
    }
    let n = grid.n;
    let h = grid.h();
    let norm = (2.0 * PI * r * r).powf(-(grid.d as f64) / 2.0);
    let mut values = vec![0.0; grid.len()];
    // The kernel factorizes over axes; one 1D profile per sample and axis.
    let mut profiles = vec![vec![0.0; n]; grid.d];
    for p in samples.points() {
        for (axis, prof) in profiles.iter_mut().enumerate() {
            for (k, v) in prof.iter_mut().enumerate() {
                *v = wrapped_gauss(wrap_diff(k as f64 * h - p[axis]), r);
            }
        }
        match grid.d {
            1 => values.iter_mut().zip(&profiles[0]).for_each(|(v, a)| *v += a),
            _ => {
                for (i, a) in profiles[0].iter().enumerate() {
                    for (j, b) in profiles[1].iter().enumerate() {
                        values[i * n + j] += a * b;
                    }
                }
            }
        }
    }
    let scale = norm / samples.len() as f64;
    for v in values.iter_mut() {
        *v = (*v * scale).max(KDE_FLOOR);
    }
    let mass: f64 = values.iter().sum::<f64>() * grid.cell_volume();
    values.iter_mut().for_each(|v| *v /= mass);
    Ok(values)
}

/// Plug-in eigenpair estimate from samples.
#[derive(Debug, Clone)]
pub struct PluginEstimate {
    pub lambda: f64,
    /// Eigenfunction at the grid nodes, `Σ f² ρ̂ h^d = 1`.
    pub f: Vec<f64>,
    pub rho_hat: Vec<f64>,
    pub bandwidth: f64,
}

/// KDE with bandwidth `c_bw n^{−1/(d+4)}` followed by the `l`-th grid
/// eigenpair of `Δ_ρ̂`.
pub fn plugin_estimate(
    samples: &PointCloud,
    l: usize,
    grid: PeriodicGrid,
    c_bw: f64,
) -> Result<PluginEstimate> {
    if l == 0 {
        return Err(Error::Config("eigenpair index is 1-based".into()));
    }
    let n = samples.len() as f64;
    let r = c_bw * n.powf(-1.0 / (grid.d as f64 + 4.0));
    let rho_hat = kde_torus(samples, r, grid)?;
    let op = GridOperator::new(grid, rho_hat)?;
    let mut pairs = grid_eigenpairs(&op, l)?;
    let pair = pairs.swap_remove(l - 1);
    Ok(PluginEstimate {
        lambda: pair.value,
        f: pair.vector,
        rho_hat: op.rho,
        bandwidth: r,
    })
}

/// Eigenpairs of `op` whose eigenvalue matches the `l`-th one to relative
/// tolerance `rel_tol`.
pub fn level_set(op: &GridOperator, l: usize, rel_tol: f64) -> Result<Vec<EigPair>> {
    let k = (l + 4).min(30).min(op.grid.len());
    let pairs = grid_eigenpairs(op, k)?;
    let target = pairs[l - 1].value;
    let tol = rel_tol * target.abs().max(1e-12);
    Ok(pairs
        .into_iter()
        .filter(|p| (p.value - target).abs() <= tol)
        .collect())
}

/// Components of the eigenpair distance `|Δλ| + ‖Δf‖_{L²} + ‖∇Δf‖_{L²}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Separation {
    pub lambda_diff: f64,
    pub l2: f64,
    pub grad_l2: f64,
}

impl Separation {
    pub fn total(&self) -> f64 {
        self.lambda_diff + self.l2 + self.grad_l2
    }
}

/// `‖f‖_{L²}` and `‖∇_h f‖_{L²}` with plain grid quadrature.
pub fn grid_norms(grid: PeriodicGrid, f: &[f64]) -> (f64, f64) {
    let cell = grid.cell_volume();
    let h = grid.h();
    let l2 = (f.iter().map(|v| v * v).sum::<f64>() * cell).sqrt();
    let mut g = 0.0;
    for i in 0..f.len() {
        for axis in 0..grid.d {
            let d = (f[grid.forward(i, axis)] - f[i]) / h;
            g += d * d;
        }
    }
    (l2, (g * cell).sqrt())
}

/// Aligns `f` to the span of `level` in the mass inner product of `op` and
/// renormalizes to unit mass norm.
pub fn align_grid(f: &[f64], level: &[EigPair], op: &GridOperator) -> Result<Vec<f64>> {
    let basis: Vec<Vec<f64>> = level.iter().map(|p| p.vector.clone()).collect();
    let c = projection_coefficients(f, &basis, Some(&op.mass))?;
    let mut g = vec![0.0; f.len()];
    for (ci, b) in c.iter().zip(&basis) {
        for (o, v) in g.iter_mut().zip(b) {
            *o += ci * v;
        }
    }
    let norm = g
        .iter()
        .zip(&op.mass)
        .map(|(v, m)| v * v * m)
        .sum::<f64>()
        .sqrt();
    if !(norm > 1e-10) {
        return Err(Error::DegenerateAlignment);
    }
    g.iter_mut().for_each(|v| *v /= norm);
    Ok(g)
}

/// Distance between the level-`l` eigenpairs of two densities.
pub fn eigenpair_separation(
    rho1: &DensityModel,
    rho2: &DensityModel,
    l: usize,
    grid: PeriodicGrid,
) -> Result<Separation> {
    if rho1.model != rho2.model {
        return Err(Error::Config("densities live on different manifolds".into()));
    }
    if l == 0 {
        return Err(Error::Config("eigenpair index is 1-based".into()));
    }
    let op1 = GridOperator::from_density(grid, rho1)?;
    let op2 = GridOperator::from_density(grid, rho2)?;
    let p1 = grid_eigenpairs(&op1, l)?;
    let level2 = level_set(&op2, l, 1e-6)?;
    let f1 = &p1[l - 1].vector;
    let f2 = align_grid(f1, &level2, &op2)?;
    let diff: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| a - b).collect();
    let (l2, grad_l2) = grid_norms(grid, &diff);
    Ok(Separation {
        lambda_diff: (p1[l - 1].value - level2[0].value).abs(),
        l2,
        grad_l2,
    })
}
