//! Kernel extension of graph functions to the whole manifold,
//! `Λ_r u(x) = Σ_j u(x_j) k_r(x, x_j) / Σ_j k_r(x, x_j)` with
//! `k_r(x, y) = r^{−d} ψ(|x − y| / r)` and `ψ(t) = ∫_t^1 η(s) s ds`.

use crate::error::{Error, Result};
use crate::geometry::{stream, ContinuumEigenpair, PointCloud};
use crate::graph::{CellList, Kernel, KernelProfile};
use crate::norms::{align_to_eigenspace, restrict, Accumulator};

/// `ψ` for a kernel, evaluated in closed form (both profiles are
/// polynomial on `[0, 1]`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtensionKernel {
    pub kernel: Kernel,
}

impl ExtensionKernel {
    pub fn new(kernel: Kernel) -> Self {
        Self { kernel }
    }

    /// `ψ(t) = ∫_t^1 η(s) s ds`, zero for `t ≥ 1`.
    pub fn psi(&self, t: f64) -> f64 {
        if t >= 1.0 {
            return 0.0;
        }
        let t = t.max(0.0);
        let t2 = t * t;
        let v = match self.kernel.profile {
            // ∫ (1 − s) s ds
            KernelProfile::Tent => 1.0 / 6.0 - t2 / 2.0 + t2 * t / 3.0,
            // ∫ (1 − 3s² + 2s³) s ds
            KernelProfile::Smoothstep => {
                3.0 / 20.0 - t2 / 2.0 + 0.75 * t2 * t2 - 0.4 * t2 * t2 * t
            }
        };
        self.kernel.scale * v
    }

    /// `ψ'(t) = −η(t) t`.
    pub fn psi_prime(&self, t: f64) -> f64 {
        -self.kernel.eta(t) * t
    }
}

/// `ψ(t)` for `kernel`.
pub fn psi_eval(kernel: Kernel, t: f64) -> f64 {
    ExtensionKernel::new(kernel).psi(t)
}

/// Extension operator at bandwidth `r` over a fixed cloud, with a cell list
/// for neighbourhood queries.
pub struct Extension<'a> {
    cloud: &'a PointCloud,
    r: f64,
    kernel: ExtensionKernel,
    cells: CellList,
    norm: f64,
}

impl<'a> Extension<'a> {
    pub fn new(cloud: &'a PointCloud, r: f64, kernel: Kernel) -> Result<Self> {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::Config(format!("bandwidth must lie in (0, 1) (got {r})")));
        }
        Ok(Self {
            cloud,
            r,
            kernel: ExtensionKernel::new(kernel),
            cells: CellList::new(cloud, r),
            norm: r.powi(-(cloud.model.intrinsic_dim as i32)),
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.r
    }

    /// `(j, k_r(x, x_j), ∇_x k_r(x, x_j))` over samples with positive weight.
    fn neighbours(&self, x: &[f64], with_grad: bool) -> Vec<(usize, f64, Vec<f64>)> {
        let model = &self.cloud.model;
        let mut out = Vec::new();
        let gscale = self.norm / (self.r * self.r);
        self.cells.for_each_near(x, |j| {
            let y = self.cloud.point(j);
            let dist = model.ambient_distance(x, y);
            let t = dist / self.r;
            if t < 1.0 {
                let k = self.norm * self.kernel.psi(t);
                if k > 0.0 {
                    let g = if with_grad {
                        // ∇_x ψ(|x − y|/r) = η(t) (y − x) / r²
                        let disp = model.displacement(x, y);
                        let e = self.kernel.kernel.eta(t) * gscale;
                        model
                            .tangent_project(x, &disp)
                            .into_iter()
                            .map(|v| e * v)
                            .collect()
                    } else {
                        Vec::new()
                    };
                    out.push((j, k, g));
                }
            }
        });
        out
    }

    /// `Λ_r u(x)`.
    pub fn value(&self, u: &[f64], x: &[f64]) -> Result<f64> {
        let nb = self.neighbours(x, false);
        Self::average(u, &nb).ok_or(Error::Coverage { radius: self.r })
    }

    /// Weighted average computed relative to the first neighbour's value so
    /// that constants are reproduced exactly.
    fn average(u: &[f64], nb: &[(usize, f64, Vec<f64>)]) -> Option<f64> {
        let base = u[nb.first()?.0];
        let mut num = 0.0;
        let mut den = 0.0;
        for (j, k, _) in nb {
            num += (u[*j] - base) * k;
            den += k;
        }
        Some(base + num / den)
    }

    /// `(Λ_r u(x), ∇Λ_r u(x))` with the tangential gradient
    /// `Σ_j (u_j − Λ_r u(x)) ∇k_r(x, x_j) / Σ_j k_r(x, x_j)`.
    pub fn value_and_grad(&self, u: &[f64], x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let nb = self.neighbours(x, true);
        let value = Self::average(u, &nb).ok_or(Error::Coverage { radius: self.r })?;
        let mut grad = vec![0.0; x.len()];
        let mut den = 0.0;
        for (j, k, g) in &nb {
            let c = u[*j] - value;
            for (o, gi) in grad.iter_mut().zip(g) {
                *o += c * gi;
            }
            den += k;
        }
        grad.iter_mut().for_each(|v| *v /= den);
        Ok((value, grad))
    }

    pub fn grad(&self, u: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.value_and_grad(u, x)?.1)
    }
}

/// `Λ_r u(x)` for a single query.
pub fn extend(u: &[f64], cloud: &PointCloud, r: f64, kernel: Kernel, x: &[f64]) -> Result<f64> {
    Extension::new(cloud, r, kernel)?.value(u, x)
}

/// `∇Λ_r u(x)` for a single query.
pub fn extend_grad(
    u: &[f64],
    cloud: &PointCloud,
    r: f64,
    kernel: Kernel,
    x: &[f64],
) -> Result<Vec<f64>> {
    Extension::new(cloud, r, kernel)?.grad(u, x)
}

/// Continuum errors of an extended graph eigenvector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtensionError {
    /// `‖Λφ − f‖_{L²}`
    pub l2_err: f64,
    /// `‖∇Λφ − ∇f‖_{L²}`
    pub grad_err: f64,
    /// `‖Λφ − f‖_{H¹} = l2_err + grad_err`
    pub h1_err: f64,
    pub l2_se: f64,
    pub grad_se: f64,
    /// Monte Carlo points without a sample within the bandwidth.
    pub misses: usize,
    pub n_mc: usize,
}

impl ExtensionError {
    pub fn miss_fraction(&self) -> f64 {
        self.misses as f64 / self.n_mc.max(1) as f64
    }

    /// Coverage misses at or above 0.1 % flag the run.
    pub fn flagged(&self) -> bool {
        self.miss_fraction() >= 1e-3
    }
}

/// Monte Carlo `L²` and `H¹` errors of `Λ_{ε/2} φ` against the exact
/// eigenfunction aligned with `phi` within `level`.
pub fn extension_h1_error(
    phi: &[f64],
    level: &[ContinuumEigenpair],
    cloud: &PointCloud,
    epsilon: f64,
    kernel: Kernel,
    n_mc: usize,
    seed: u64,
) -> Result<ExtensionError> {
    extension_error_at(phi, level, cloud, epsilon / 2.0, kernel, n_mc, seed)
}

/// As [`extension_h1_error`] with an explicit bandwidth.
pub fn extension_error_at(
    phi: &[f64],
    level: &[ContinuumEigenpair],
    cloud: &PointCloud,
    r: f64,
    kernel: Kernel,
    n_mc: usize,
    seed: u64,
) -> Result<ExtensionError> {
    let model = &cloud.model;
    let restricted = restrict(level, cloud);
    let coeffs = align_to_eigenspace(phi, &restricted)?;
    let ext = Extension::new(cloud, r, kernel)?;
    let mut rng = stream(seed);
    let mut x = vec![0.0; model.ambient_dim];
    let mut l2 = Accumulator::default();
    let mut gr = Accumulator::default();
    let mut misses = 0;
    for _ in 0..n_mc {
        model.draw_uniform(&mut rng, &mut x);
        let (v, g) = match ext.value_and_grad(phi, &x) {
            Ok(pair) => pair,
            Err(Error::Coverage { .. }) => {
                misses += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut f = 0.0;
        let mut fg = vec![0.0; x.len()];
        for (c, pair) in coeffs.iter().zip(level) {
            f += c * pair.eval(&x);
            for (o, gi) in fg.iter_mut().zip(pair.grad(&x)) {
                *o += c * gi;
            }
        }
        l2.push(model.volume * (v - f) * (v - f));
        gr.push(
            model.volume
                * g.iter()
                    .zip(&fg)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>(),
        );
    }
    let l2_err = l2.mean().max(0.0).sqrt();
    let grad_err = gr.mean().max(0.0).sqrt();
    let se_of_root = |acc: &Accumulator, root: f64| {
        if root > 0.0 {
            acc.std_error() / (2.0 * root)
        } else {
            0.0
        }
    };
    Ok(ExtensionError {
        l2_err,
        grad_err,
        h1_err: l2_err + grad_err,
        l2_se: se_of_root(&l2, l2_err),
        grad_se: se_of_root(&gr, grad_err),
        misses,
        n_mc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ManifoldModel;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed);
        (0..n).map(|_| rng.random::<f64>() - 0.5).collect()
    }

    #[test]
    fn psi_examples() {
        let tent = ExtensionKernel::new(Kernel::tent());
        assert!((tent.psi(0.0) - 1.0 / 6.0).abs() < 1e-12);
        // ∫_{1/2}^1 (1 − s) s ds = [s²/2 − s³/3]_{1/2}^1
        let antiderivative = |s: f64| s * s / 2.0 - s * s * s / 3.0;
        let expected = antiderivative(1.0) - antiderivative(0.5);
        assert!((expected - 1.0 / 12.0).abs() < 1e-15);
        assert!((tent.psi(0.5) - expected).abs() < 1e-12);
        assert_eq!(tent.psi(1.0), 0.0);
        let smooth = ExtensionKernel::new(Kernel::smoothstep());
        assert_eq!(smooth.psi(1.0), 0.0);
        assert!((smooth.psi(1.0 - 1e-12)).abs() < 1e-12);
    }

    #[test]
    fn psi_derivative_is_minus_eta_t() {
        for k in [Kernel::tent(), Kernel::smoothstep()] {
            let e = ExtensionKernel::new(k);
            let mut prev = e.psi(0.0);
            for i in 1..100 {
                let t = i as f64 / 100.0;
                let h = 1e-6;
                let fd = (e.psi(t + h) - e.psi(t - h)) / (2.0 * h);
                assert!((fd - e.psi_prime(t)).abs() < 1e-8);
                assert!(e.psi(t) <= prev);
                prev = e.psi(t);
            }
        }
    }

    #[test]
    fn extension_examples() {
        let t1 = ManifoldModel::torus(1).unwrap();
        let cloud = PointCloud::from_points(t1.clone(), vec![0.3]).unwrap();
        assert_eq!(extend(&[2.5], &cloud, 0.1, Kernel::tent(), &[0.35]).unwrap(), 2.5);
        assert!(matches!(
            extend(&[2.5], &cloud, 0.1, Kernel::tent(), &[0.7]),
            Err(Error::Coverage { .. })
        ));

        let cloud = t1.sample_uniform(2000, 3);
        let ext = Extension::new(&cloud, 0.02, Kernel::tent()).unwrap();
        let c = vec![0.7; 2000];
        for i in 0..50 {
            let x = [i as f64 / 50.0 + 0.003];
            assert_eq!(ext.value(&c, &x).unwrap(), 0.7);
            assert!(ext.grad(&c, &x).unwrap()[0].abs() < 1e-12);
        }
        // affine data in the interior: the average stays within the
        // oscillation of f over radius r
        let u: Vec<f64> = cloud.points().map(|p| p[0]).collect();
        for i in 0..20 {
            let x = 0.3 + 0.4 * i as f64 / 20.0;
            assert!((ext.value(&u, &[x]).unwrap() - x).abs() <= 0.02);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for model in [ManifoldModel::torus(2).unwrap(), ManifoldModel::sphere2()] {
            let cloud = model.sample_uniform(800, 4);
            let u = random_vec(800, 5);
            let ext = Extension::new(&cloud, 0.3, Kernel::smoothstep()).unwrap();
            let queries = model.sample_uniform(10, 6);
            for x in queries.points() {
                let g = ext.grad(&u, x).unwrap();
                if !model.is_torus() {
                    let radial: f64 = g.iter().zip(x).map(|(a, b)| a * b).sum();
                    assert!(radial.abs() < 1e-12);
                }
                // two orthonormal tangent directions
                let seed_dir = if model.is_torus() {
                    vec![vec![1.0, 0.0], vec![0.0, 1.0]]
                } else {
                    let a = model.tangent_project(x, &[0.3, -0.5, 0.8]);
                    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let a: Vec<f64> = a.iter().map(|v| v / na).collect();
                    let b = vec![
                        x[1] * a[2] - x[2] * a[1],
                        x[2] * a[0] - x[0] * a[2],
                        x[0] * a[1] - x[1] * a[0],
                    ];
                    vec![a, b]
                };
                let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                for v in seed_dir {
                    let h = 1e-5;
                    let plus = model.exp_map(x, &v.iter().map(|c| c * h).collect::<Vec<_>>());
                    let minus = model.exp_map(x, &v.iter().map(|c| -c * h).collect::<Vec<_>>());
                    let fd = (ext.value(&u, &plus).unwrap() - ext.value(&u, &minus).unwrap())
                        / (2.0 * h);
                    let an: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
                    assert!((fd - an).abs() <= 1e-5 * gn.max(1e-3), "{fd} vs {an}");
                }
            }
        }
    }

    #[test]
    fn extension_error_examples() {
        let model = ManifoldModel::torus(2).unwrap();
        let (level, _) = model.eigenspace(2).unwrap();
        let (constant, _) = model.eigenspace(1).unwrap();
        let cloud = model.sample_uniform(3000, 8);
        let ones = vec![1.0; 3000];
        let e = extension_h1_error(&ones, &constant, &cloud, 0.2, Kernel::tent(), 2000, 1).unwrap();
        assert!(e.l2_err < 1e-12 && e.grad_err < 1e-12);
        assert_eq!(e.misses, 0);

        let phi: Vec<f64> = cloud.points().map(|x| level[0].eval(x)).collect();
        let coarse = extension_h1_error(&phi, &level, &cloud, 0.3, Kernel::tent(), 4000, 2).unwrap();
        let fine = model.sample_uniform(12_000, 9);
        let phi2: Vec<f64> = fine.points().map(|x| level[0].eval(x)).collect();
        let finer = extension_h1_error(&phi2, &level, &fine, 0.15, Kernel::tent(), 4000, 2).unwrap();
        assert!(finer.h1_err < coarse.h1_err);

        let sparse = model.sample_uniform(20, 1);
        let phi3: Vec<f64> = sparse.points().map(|x| level[0].eval(x)).collect();
        let flagged = extension_h1_error(&phi3, &level, &sparse, 0.02, Kernel::tent(), 500, 3).unwrap();
        assert!(flagged.flagged());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn extension_is_linear(seed in 0u64..10_000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let model = ManifoldModel::torus(2).unwrap();
            let cloud = model.sample_uniform(300, seed);
            let ext = Extension::new(&cloud, 0.2, Kernel::tent()).unwrap();
            let u = random_vec(300, seed + 1);
            let v = random_vec(300, seed + 2);
            let w: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
            let x = model.sample_uniform(1, seed + 3);
            let x = x.point(0);
            if let (Ok(eu), Ok(ev), Ok(ew)) = (ext.value(&u, x), ext.value(&v, x), ext.value(&w, x)) {
                prop_assert!((ew - a * eu - b * ev).abs() < 1e-12);
            }
        }
    }
}
