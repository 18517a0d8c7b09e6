//! Iterative symmetric linear algebra against matrix-free operators: a Lanczos
//! eigensolver with full reorthogonalization and locking, and a mean-zero
//! conjugate residual solver for singular Laplacian systems.
//!
//! Vectors live in `R^n` with the inner product `⟨u, v⟩ = (1/n) Σ u_i v_i`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::stream;

/// A linear operator that is symmetric with respect to the Euclidean (and
/// hence the normalized) inner product.
pub trait SymOp: Sync {
    fn dim(&self) -> usize;

    /// `y = A x`; `y` is fully overwritten.
    fn apply(&self, x: &[f64], y: &mut [f64]);

    /// Structural preconditions for spectral solves.
    fn validate(&self) -> Result<()> {
        Ok(())
    }
}

impl<T: SymOp + ?Sized> SymOp for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
    fn validate(&self) -> Result<()> {
        (**self).validate()
    }
}

/// `factor · A`.
#[derive(Debug, Clone, Copy)]
pub struct ScaledOp<O> {
    pub op: O,
    pub factor: f64,
}

impl<O: SymOp> SymOp for ScaledOp<O> {
    fn dim(&self) -> usize {
        self.op.dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.op.apply(x, y);
        y.iter_mut().for_each(|v| *v *= self.factor);
    }
    fn validate(&self) -> Result<()> {
        self.op.validate()
    }
}

/// Diagonal operator.
#[derive(Debug, Clone)]
pub struct DiagonalOp(pub Vec<f64>);

impl SymOp for DiagonalOp {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for ((yi, xi), di) in y.iter_mut().zip(x).zip(&self.0) {
            *yi = di * xi;
        }
    }
}

/// Dense row-major symmetric matrix.
#[derive(Debug, Clone)]
pub struct DenseOp {
    pub n: usize,
    pub a: Vec<f64>,
}

impl SymOp for DenseOp {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.a[i * self.n..(i + 1) * self.n]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigPair {
    pub value: f64,
    /// Unit norm in the normalized inner product.
    pub vector: Vec<f64>,
    /// `‖A v − λ v‖` in the normalized inner product.
    pub residual: f64,
}

/// `(1/n) Σ u_i v_i`
pub fn l2_dot(u: &[f64], v: &[f64]) -> f64 {
    dot(u, v) / u.len() as f64
}

/// `((1/n) Σ u_i²)^{1/2}`
pub fn l2_norm(u: &[f64]) -> f64 {
    l2_dot(u, u).sqrt()
}

pub fn mean(u: &[f64]) -> f64 {
    u.iter().sum::<f64>() / u.len() as f64
}

/// Subtracts the mean in place.
pub fn project_mean_zero(u: &mut [f64]) {
    let m = mean(u);
    u.iter_mut().for_each(|v| *v -= m);
}

#[inline]
pub(crate) fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn euclid_norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// Default Lanczos tolerance relative to the operator norm estimate.
pub const LANCZOS_TOL: f64 = 1e-8;
/// Default relative tolerance for mean-zero solves.
pub const SOLVE_TOL: f64 = 1e-10;

const MAX_BASIS: usize = 300;
const CHECK_EVERY: usize = 10;

/// The `k` algebraically smallest eigenpairs of `op`, ascending.
///
/// A pair is accepted once `‖A v − θ v‖ ≤ tol · ‖A‖_est`, where the norm
/// estimate is the largest Ritz value magnitude seen. `max_iter` bounds the
/// total number of operator applications. Converged pairs are locked and later
/// runs are deflated against them; after `k` pairs are locked, further runs
/// from fresh random vectors confirm that no smaller eigenvalue was missed,
/// which recovers every copy of a repeated eigenvalue.
pub fn lanczos_smallest<O: SymOp + ?Sized>(
    op: &O,
    k: usize,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<Vec<EigPair>> {
    op.validate()?;
    let n = op.dim();
    if k == 0 || k > n {
        return Err(Error::Config(format!(
            "requested {k} eigenpairs of a {n}-dimensional operator"
        )));
    }
    let mut rng = stream(seed);
    let mut state = LanczosState {
        op,
        n,
        tol,
        norm_est: 0.0,
        matvecs: 0,
        max_iter,
        locked: Vec::new(),
        best_residuals: Vec::new(),
    };
    let mut restart: Option<Vec<f64>> = None;
    loop {
        let verifying = state.locked.len() >= k;
        if state.locked.len() >= n {
            break;
        }
        let want = if verifying { 1 } else { k - state.locked.len() };
        let start = match restart.take() {
            Some(v) => v,
            None => (0..n).map(|_| rng.sample(StandardNormal)).collect(),
        };
        let run = state.run(start, want)?;
        let threshold = if verifying {
            let mut values: Vec<f64> = state.locked.iter().map(|p| p.0).collect();
            values.sort_by(f64::total_cmp);
            values[k - 1] - tol * state.norm_est.max(f64::MIN_POSITIVE)
        } else {
            f64::INFINITY
        };
        let mut added = 0;
        for (theta, v) in run.converged {
            if theta < threshold {
                state.locked.push((theta, v));
                added += 1;
            }
        }
        if verifying && added == 0 {
            if run.restart.is_some() && state.locked.len() < n {
                // The confirming run hit its basis cap before converging.
                restart = run.restart;
                continue;
            }
            break;
        }
        if !verifying && added == 0 && run.restart.is_none() && run.exhausted {
            // Start vector lay in a small invariant subspace; draw a new one.
            continue;
        }
        restart = run.restart;
    }
    state.finish(k)
}

struct LanczosState<'a, O: ?Sized> {
    op: &'a O,
    n: usize,
    tol: f64,
    norm_est: f64,
    matvecs: usize,
    max_iter: usize,
    locked: Vec<(f64, Vec<f64>)>,
    best_residuals: Vec<f64>,
}

struct RunOutcome {
    /// Converged Ritz pairs, contiguous from the bottom of the Ritz spectrum.
    converged: Vec<(f64, Vec<f64>)>,
    /// Start vector for a continuation when the basis cap was hit.
    restart: Option<Vec<f64>>,
    exhausted: bool,
}

impl<O: SymOp + ?Sized> LanczosState<'_, O> {
    fn orthogonalize(&self, basis: &[Vec<f64>], w: &mut [f64]) {
        for _ in 0..2 {
            for (_, q) in &self.locked {
                let c = dot(q, w);
                axpy(-c, q, w);
            }
            for q in basis {
                let c = dot(q, w);
                axpy(-c, q, w);
            }
        }
    }

    fn apply(&mut self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if self.matvecs >= self.max_iter {
            return Err(Error::Convergence {
                iterations: self.matvecs,
                residuals: self.best_residuals.clone(),
            });
        }
        self.op.apply(x, y);
        self.matvecs += 1;
        Ok(())
    }

    fn run(&mut self, mut start: Vec<f64>, want: usize) -> Result<RunOutcome> {
        let n = self.n;
        let cap = MAX_BASIS.min(n - self.locked.len());
        self.orthogonalize(&[], &mut start);
        let s = euclid_norm(&start);
        if s == 0.0 {
            return Ok(RunOutcome {
                converged: Vec::new(),
                restart: None,
                exhausted: true,
            });
        }
        start.iter_mut().for_each(|v| *v /= s);
        let mut basis: Vec<Vec<f64>> = vec![start];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut w = vec![0.0; n];
        loop {
            let j = basis.len() - 1;
            self.apply(&basis[j], &mut w)?;
            if j == 0 {
                self.norm_est = self.norm_est.max(euclid_norm(&w));
            }
            let a = dot(&basis[j], &w);
            axpy(-a, &basis[j], &mut w);
            if j > 0 {
                axpy(-beta[j - 1], &basis[j - 1], &mut w);
            }
            self.orthogonalize(&basis, &mut w);
            alpha.push(a);
            let b = euclid_norm(&w);
            let exhausted = b <= 1e-13 * self.norm_est.max(a.abs()).max(f64::MIN_POSITIVE)
                || basis.len() >= n - self.locked.len();
            let full = basis.len() >= cap;
            let m = basis.len();
            if exhausted || full || m.is_multiple_of(CHECK_EVERY) || m == want {
                let (theta, z) = tridiagonal_eigen(&alpha, &beta);
                for t in &theta {
                    self.norm_est = self.norm_est.max(t.abs());
                }
                let limit = self.tol * self.norm_est.max(f64::MIN_POSITIVE);
                let resid: Vec<f64> = (0..m)
                    .map(|i| if exhausted { 0.0 } else { (b * z[(m - 1) * m + i]).abs() })
                    .collect();
                let ready = resid.iter().take_while(|&&r| r <= limit).count();
                self.record_residuals(&resid, want);
                if ready >= want.min(m) || exhausted || full {
                    let take = ready.min(want);
                    let converged = (0..take)
                        .map(|i| (theta[i], ritz_vector(&basis, &z, m, i)))
                        .collect();
                    let restart = if take < want && !exhausted {
                        let mut v = vec![0.0; n];
                        for i in take..want.min(m) {
                            axpy(1.0, &ritz_vector(&basis, &z, m, i), &mut v);
                        }
                        Some(v)
                    } else {
                        None
                    };
                    return Ok(RunOutcome {
                        converged,
                        restart,
                        exhausted,
                    });
                }
            }
            beta.push(b);
            let next: Vec<f64> = w.iter().map(|v| v / b).collect();
            basis.push(next);
        }
    }

    fn record_residuals(&mut self, resid: &[f64], want: usize) {
        let current: Vec<f64> = resid.iter().take(want).copied().collect();
        let better = self.best_residuals.is_empty()
            || current.iter().sum::<f64>() < self.best_residuals.iter().sum::<f64>();
        if better {
            self.best_residuals = current;
        }
    }

    fn finish(mut self, k: usize) -> Result<Vec<EigPair>> {
        let mut locked = std::mem::take(&mut self.locked);
        locked.sort_by(|a, b| a.0.total_cmp(&b.0));
        locked.truncate(k);
        let n = self.n;
        let root_n = (n as f64).sqrt();
        let mut out = Vec::with_capacity(k);
        let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut av = vec![0.0; n];
        for (theta, mut v) in locked {
            for q in &ortho {
                let c = dot(q, &v);
                axpy(-c, q, &mut v);
            }
            let s = euclid_norm(&v);
            v.iter_mut().for_each(|x| *x /= s);
            self.op.apply(&v, &mut av);
            let residual = av
                .iter()
                .zip(&v)
                .map(|(a, x)| (a - theta * x).powi(2))
                .sum::<f64>()
                .sqrt();
            ortho.push(v.clone());
            out.push(EigPair {
                value: theta,
                vector: v.into_iter().map(|x| x * root_n).collect(),
                residual,
            });
        }
        Ok(out)
    }
}

fn ritz_vector(basis: &[Vec<f64>], z: &[f64], m: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; basis[0].len()];
    for (row, q) in basis.iter().enumerate() {
        axpy(z[row * m + i], q, &mut v);
    }
    let s = euclid_norm(&v);
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Eigen-decomposition of the symmetric tridiagonal matrix with diagonal
/// `alpha` and off-diagonal `beta` by implicit QL iteration. Returns the
/// eigenvalues ascending and the eigenvectors as columns of a row-major
/// `m × m` matrix.
pub fn tridiagonal_eigen(alpha: &[f64], beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = alpha.len();
    let mut d = alpha.to_vec();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(&beta[..n - 1]);
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
    }
    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            loop {
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    let h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        let h = z[k * n + i + 1];
                        z[k * n + i + 1] = s * z[k * n + i] + c * h;
                        z[k * n + i] = c * z[k * n + i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let values = order.iter().map(|&i| d[i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[row * n + col] = z[row * n + src];
        }
    }
    (values, vectors)
}

/// Iteration record of a mean-zero solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Normalized residual norms, one per iteration, starting with the
    /// initial residual.
    pub residuals: Vec<f64>,
    /// `‖A u − (b − mean b)‖ / ‖b‖` recomputed from the returned solution.
    pub relative_residual: f64,
}

/// Solves `A u = b − mean(b)` for mean-zero `u` when `A` is positive
/// semidefinite with kernel spanned by constants.
///
/// Uses the conjugate residual method, whose residual norms are monotone.
/// Stops once `‖A u − (b − mean b)‖ ≤ tol · ‖b‖`.
pub fn cg_solve_meanzero<O: SymOp + ?Sized>(
    op: &O,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    cg_solve_meanzero_with_stats(op, rhs, tol, max_iter).map(|(u, _)| u)
}

pub fn cg_solve_meanzero_with_stats<O: SymOp + ?Sized>(
    op: &O,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = op.dim();
    if rhs.len() != n {
        return Err(Error::Config(format!(
            "right-hand side has length {} for a {n}-dimensional operator",
            rhs.len()
        )));
    }
    let mut b = rhs.to_vec();
    project_mean_zero(&mut b);
    let scale = l2_norm(rhs);
    let mut x = vec![0.0; n];
    let mut history = vec![l2_norm(&b)];
    if l2_norm(&b) <= tol * scale || scale == 0.0 {
        return Ok((
            x,
            SolveStats {
                iterations: 0,
                residuals: history,
                relative_residual: 0.0,
            },
        ));
    }
    let target = tol * scale;
    let mut iterations = 0;
    let mut r = b.clone();
    let mut ar = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    'restart: loop {
        op.apply(&r, &mut ar);
        let mut p = r.clone();
        ap.copy_from_slice(&ar);
        let mut rar = dot(&r, &ar);
        loop {
            if iterations >= max_iter {
                return Err(Error::Convergence {
                    iterations,
                    residuals: vec![*history.last().unwrap_or(&f64::NAN) / scale],
                });
            }
            let apap = dot(&ap, &ap);
            if apap == 0.0 || rar <= 0.0 {
                break;
            }
            let a = rar / apap;
            axpy(a, &p, &mut x);
            axpy(-a, &ap, &mut r);
            project_mean_zero(&mut x);
            project_mean_zero(&mut r);
            iterations += 1;
            let rn = l2_norm(&r);
            history.push(rn);
            if rn <= target {
                break;
            }
            op.apply(&r, &mut ar);
            let rar_new = dot(&r, &ar);
            let beta = rar_new / rar;
            rar = rar_new;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
                ap[i] = ar[i] + beta * ap[i];
            }
        }
        // Confirm with the true residual; restart from it if the recursion
        // drifted.
        op.apply(&x, &mut tmp);
        for i in 0..n {
            r[i] = b[i] - tmp[i];
        }
        project_mean_zero(&mut r);
        let true_rn = l2_norm(&r);
        if true_rn <= target {
            return Ok((
                x,
                SolveStats {
                    iterations,
                    residuals: history,
                    relative_residual: true_rn / scale,
                },
            ));
        }
        if iterations >= max_iter {
            return Err(Error::Convergence {
                iterations,
                residuals: vec![true_rn / scale],
            });
        }
        continue 'restart;
    }
}

/// `⟨h̃, A⁺ h̃⟩` with `h̃ = h − mean(h)`.
pub fn pinv_quadform<O: SymOp + ?Sized>(op: &O, h: &[f64], tol: f64) -> Result<f64> {
    let mut ht = h.to_vec();
    project_mean_zero(&mut ht);
    let w = cg_solve_meanzero(op, &ht, tol, 50 * op.dim().max(100))?;
    Ok(l2_dot(&ht, &w).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use crate::geometry::ManifoldModel;
    use crate::graph::{build_graph, normalized_laplacian, Kernel};
    use proptest::prelude::*;

    #[test]
    fn tridiagonal_eigen_on_known_matrix() {
        // Path-graph Laplacian-like tridiagonal with diagonal 2, off-diagonal −1.
        let m = 20;
        let (values, vectors) = tridiagonal_eigen(&vec![2.0; m], &vec![-1.0; m - 1]);
        for (j, v) in values.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((j + 1) as f64 * std::f64::consts::PI / (m + 1) as f64).cos();
            assert!((v - exact).abs() < 1e-12);
        }
        for a in 0..m {
            for b in 0..m {
                let d: f64 = (0..m).map(|r| vectors[r * m + a] * vectors[r * m + b]).sum();
                assert!((d - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn diagonal_operator() {
        let op = DiagonalOp(vec![3.0, 1.0, 4.0, 2.0]);
        let pairs = lanczos_smallest(&op, 2, 1e-10, 100, 1).unwrap();
        assert!((pairs[0].value - 1.0).abs() < 1e-12);
        assert!((pairs[1].value - 2.0).abs() < 1e-12);
        assert!((l2_norm(&pairs[0].vector) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn repeated_eigenvalues_are_all_found() {
        let mut diag = vec![5.0; 60];
        diag[10] = 1.0;
        diag[20] = 1.0;
        diag[30] = 1.0;
        diag[40] = 2.0;
        for (i, d) in diag.iter_mut().enumerate().skip(41) {
            *d = 3.0 + i as f64;
        }
        let op = DiagonalOp(diag);
        let pairs = lanczos_smallest(&op, 4, 1e-10, 2000, 4).unwrap();
        let values: Vec<f64> = pairs.iter().map(|p| p.value).collect();
        for (v, e) in values.iter().zip([1.0, 1.0, 1.0, 2.0]) {
            assert!((v - e).abs() < 1e-10, "{values:?}");
        }
    }

    #[test]
    fn graph_laplacian_kernel_and_determinism() {
        let cloud = ManifoldModel::torus(2).unwrap().sample_uniform(300, 2);
        let g = build_graph(&cloud, 0.2, Kernel::tent()).unwrap();
        let l = normalized_laplacian(&g).unwrap();
        let a = lanczos_smallest(&l, 3, LANCZOS_TOL, 5000, 7).unwrap();
        assert!(a[0].value.abs() < 1e-10);
        let c = a[0].vector[0];
        assert!(a[0].vector.iter().all(|v| (v - c).abs() < 1e-8));
        let b = lanczos_smallest(&l, 3, LANCZOS_TOL, 5000, 7).unwrap();
        assert_eq!(a, b);
        for p in &a {
            assert!(p.residual <= 1e-8 * a.last().unwrap().value.max(1.0) * 100.0);
        }
        for i in 0..3 {
            for j in 0..3 {
                let d = l2_dot(&a[i].vector, &a[j].vector);
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let t1 = ManifoldModel::torus(1).unwrap();
        let cloud = crate::geometry::PointCloud::from_points(t1, vec![0.0, 0.05, 0.5, 0.55]).unwrap();
        let g = build_graph(&cloud, 0.1, Kernel::tent()).unwrap();
        let l = normalized_laplacian(&g).unwrap();
        assert!(matches!(
            lanczos_smallest(&l, 1, 1e-8, 100, 0),
            Err(Error::Disconnected { .. })
        ));
    }

    #[test]
    fn convergence_error_carries_residuals() {
        let op = DiagonalOp((1..=500).map(|i| i as f64).collect());
        match lanczos_smallest(&op, 3, 1e-14, 5, 0) {
            Err(Error::Convergence { iterations, .. }) => assert_eq!(iterations, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn meanzero_solver_examples() {
        let cloud = ManifoldModel::torus(2).unwrap().sample_uniform(300, 5);
        let g = build_graph(&cloud, 0.2, Kernel::tent()).unwrap();
        let l = normalized_laplacian(&g).unwrap();
        let u = cg_solve_meanzero(&l, &vec![2.5; 300], 1e-10, 1000).unwrap();
        assert!(u.iter().all(|&v| v == 0.0));

        let mut v: Vec<f64> = cloud.points().map(|p| (6.0 * p[0]).sin() + p[1]).collect();
        project_mean_zero(&mut v);
        let mut lv = vec![0.0; 300];
        l.apply(&v, &mut lv);
        let (u, stats) = cg_solve_meanzero_with_stats(&l, &lv, 1e-12, 1000).unwrap();
        let err: f64 = u.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8);
        assert!(mean(&u).abs() < 1e-14);
        for w in stats.residuals.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        assert!(stats.relative_residual <= 1e-12);
    }

    #[test]
    fn pinv_quadform_on_eigenvector() {
        let cloud = ManifoldModel::torus(2).unwrap().sample_uniform(300, 6);
        let g = build_graph(&cloud, 0.25, Kernel::tent()).unwrap();
        let l = normalized_laplacian(&g).unwrap();
        let pairs = lanczos_smallest(&l, 2, 1e-12, 5000, 1).unwrap();
        let h: Vec<f64> = pairs[1].vector.iter().map(|x| 3.0 * x).collect();
        let q = pinv_quadform(&l, &h, 1e-12).unwrap();
        let expected = l2_dot(&h, &h) / pairs[1].value;
        assert!((q - expected).abs() <= 1e-8 * expected);
        assert_eq!(pinv_quadform(&l, &vec![1.0; 300], 1e-12).unwrap(), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn residuals_are_monotone(seed in 0u64..1000) {
            let cloud = ManifoldModel::sphere2().sample_uniform(250, seed);
            let g = build_graph(&cloud, 0.6, Kernel::smoothstep()).unwrap();
            prop_assume!(g.is_connected());
            let l = normalized_laplacian(&g).unwrap();
            let mut rng = stream(seed);
            let b: Vec<f64> = (0..250).map(|_| rng.random::<f64>()).collect();
            let (_, stats) = cg_solve_meanzero_with_stats(&l, &b, 1e-10, 2000).unwrap();
            for w in stats.residuals.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
            }
        }
    }
}
