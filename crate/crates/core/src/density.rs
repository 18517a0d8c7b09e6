//! Densities on manifold models: the uniform density and the bump-perturbed
//! family `ρ_c = 1 + m⁻² Σ c_i a_i` on the torus used for minimax lower bounds.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{stream, wrap_diff, ManifoldModel, PointCloud, SmoothFunction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityKind {
    Uniform,
    /// `m` cubes per axis and one sign per cube, cubes ordered row-major.
    Bump { m: usize, c: Vec<i8> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityModel {
    pub model: ManifoldModel,
    pub kind: DensityKind,
    pub rho_min: f64,
    pub rho_max: f64,
}

/// Scalar mollifier `e·exp(1/(64t²−1))` on `[0, 1/8)`, zero beyond.
pub fn mollifier(t: f64) -> f64 {
    let s = 64.0 * t * t - 1.0;
    if s >= 0.0 {
        0.0
    } else {
        (1.0 + 1.0 / s).exp()
    }
}

/// `mollifier'(t) / t`, finite at `t = 0`.
fn mollifier_dt_over_t(t: f64) -> f64 {
    let s = 64.0 * t * t - 1.0;
    if s >= 0.0 {
        0.0
    } else {
        -128.0 * (1.0 + 1.0 / s).exp() / (s * s)
    }
}

/// The template `φ(y) = ϕ(|y − u₊|) − ϕ(|y − u₋|)` with `u± = ±(1/4, …, 1/4)`,
/// together with its gradient.
fn template(y: &[f64]) -> (f64, Vec<f64>) {
    let mut value = 0.0;
    let mut grad = vec![0.0; y.len()];
    for sign in [1.0, -1.0] {
        let diff: Vec<f64> = y.iter().map(|yi| yi - sign * 0.25).collect();
        let t = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
        let phi = mollifier(t);
        if phi == 0.0 {
            continue;
        }
        value += sign * phi;
        let g = mollifier_dt_over_t(t);
        for (gi, di) in grad.iter_mut().zip(&diff) {
            *gi += sign * g * di;
        }
    }
    (value, grad)
}

impl DensityModel {
    /// Constant density `1 / volume`.
    pub fn uniform(model: &ManifoldModel) -> Self {
        let rho = model.uniform_density();
        Self {
            model: model.clone(),
            kind: DensityKind::Uniform,
            rho_min: rho,
            rho_max: rho,
        }
    }

    /// Bump density on the torus `model` with `m` cubes per axis.
    pub fn bump(model: &ManifoldModel, m: usize, c: Vec<i8>) -> Result<Self> {
        if !model.is_torus() {
            return Err(Error::Capability(
                "bump densities are defined on the torus only".into(),
            ));
        }
        if m < 2 {
            return Err(Error::Config(format!("bump density needs m ≥ 2 (got {m})")));
        }
        let cells = m.pow(model.intrinsic_dim as u32);
        if c.len() != cells {
            return Err(Error::Config(format!(
                "sign vector has length {} but m^d = {cells}",
                c.len()
            )));
        }
        if c.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::Config("sign vector entries must be ±1".into()));
        }
        let amp = 1.0 / (m * m) as f64;
        Ok(Self {
            model: model.clone(),
            kind: DensityKind::Bump { m, c },
            rho_min: 1.0 - amp,
            rho_max: 1.0 + amp,
        })
    }

    pub fn name(&self) -> String {
        match &self.kind {
            DensityKind::Uniform => "uniform".to_string(),
            DensityKind::Bump { m, .. } => format!("bump{m}"),
        }
    }

    /// Cube index and rescaled local coordinate `m(x − b_i)` of `x`.
    fn locate(m: usize, x: &[f64]) -> (usize, Vec<f64>) {
        let mf = m as f64;
        let mut index = 0;
        let mut y = Vec::with_capacity(x.len());
        for &xi in x {
            let xi = xi.rem_euclid(1.0);
            let cell = ((xi * mf).floor() as usize).min(m - 1);
            index = index * m + cell;
            let center = (cell as f64 + 0.5) / mf;
            y.push(mf * wrap_diff(xi - center));
        }
        (index, y)
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        match &self.kind {
            DensityKind::Uniform => self.rho_min,
            DensityKind::Bump { m, c } => {
                let (i, y) = Self::locate(*m, x);
                1.0 + c[i] as f64 * template(&y).0 / (m * m) as f64
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            DensityKind::Uniform => vec![0.0; x.len()],
            DensityKind::Bump { m, c } => {
                let (i, y) = Self::locate(*m, x);
                let s = c[i] as f64 / *m as f64;
                template(&y).1.into_iter().map(|g| s * g).collect()
            }
        }
    }

    /// Rejection sampling with a uniform proposal; also returns the number of
    /// proposals drawn.
    pub fn sample_with_stats(&self, n: usize, seed: u64) -> (PointCloud, usize) {
        let dim = self.model.ambient_dim;
        let mut rng = stream(seed);
        let mut coords = Vec::with_capacity(n * dim);
        let mut point = vec![0.0; dim];
        let mut proposals = 0;
        let mut accepted = 0;
        let envelope = self.rho_max;
        while accepted < n {
            self.model.draw_uniform(&mut rng, &mut point);
            proposals += 1;
            if let DensityKind::Bump { .. } = self.kind {
                let u: f64 = rng.random();
                if u * envelope >= self.evaluate(&point) {
                    continue;
                }
            }
            coords.extend_from_slice(&point);
            accepted += 1;
        }
        (
            PointCloud {
                model: self.model.clone(),
                coords,
                seed,
            },
            proposals,
        )
    }

    /// `n` i.i.d. samples with law `ρ`.
    pub fn sample(&self, n: usize, seed: u64) -> PointCloud {
        self.sample_with_stats(n, seed).0
    }

    /// Values on the periodic grid with `res` nodes per axis at `k/res`,
    /// row-major.
    pub fn on_grid(&self, res: usize) -> Result<Vec<f64>> {
        if !self.model.is_torus() {
            return Err(Error::Capability("grid evaluation needs a torus".into()));
        }
        let d = self.model.intrinsic_dim;
        let total = res.pow(d as u32);
        let h = 1.0 / res as f64;
        let mut out = Vec::with_capacity(total);
        let mut x = vec![0.0; d];
        for idx in 0..total {
            let mut rem = idx;
            for k in (0..d).rev() {
                x[k] = (rem % res) as f64 * h;
                rem /= res;
            }
            out.push(self.evaluate(&x));
        }
        Ok(out)
    }
}

impl SmoothFunction for DensityModel {
    fn eval(&self, x: &[f64]) -> f64 {
        self.evaluate(x)
    }
    fn grad(&self, x: &[f64]) -> Vec<f64> {
        self.gradient(x)
    }
}

/// Grid resolution per axis used by default for KL quadrature.
pub fn default_kl_grid(d: usize) -> usize {
    match d {
        1 => 2048,
        _ => 512,
    }
}

fn paired_grid(
    rho1: &DensityModel,
    rho2: &DensityModel,
    grid: usize,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    if !rho1.model.is_torus() || !rho2.model.is_torus() {
        return Err(Error::Capability("KL quadrature needs torus densities".into()));
    }
    if rho1.model != rho2.model {
        return Err(Error::Config("densities live on different manifolds".into()));
    }
    let a = rho1.on_grid(grid)?;
    let b = rho2.on_grid(grid)?;
    let cell = (1.0 / grid as f64).powi(rho1.model.intrinsic_dim as i32);
    Ok((a, b, cell))
}

/// `KL(ρ₁ ‖ ρ₂)` by the periodic trapezoidal rule with `grid` nodes per axis.
pub fn kl_divergence(rho1: &DensityModel, rho2: &DensityModel, grid: usize) -> Result<f64> {
    let (a, b, cell) = paired_grid(rho1, rho2, grid)?;
    Ok(a.iter()
        .zip(&b)
        .map(|(p, q)| if *p > 0.0 { p * (p / q).ln() } else { 0.0 })
        .sum::<f64>()
        * cell)
}

/// The χ² upper bound `∫ (ρ₁ − ρ₂)² / ρ₂` on the KL divergence.
pub fn chi2_bound(rho1: &DensityModel, rho2: &DensityModel, grid: usize) -> Result<f64> {
    let (a, b, cell) = paired_grid(rho1, rho2, grid)?;
    Ok(a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q) / q).sum::<f64>() * cell)
}

/// True iff the sign vectors disagree on at least `fraction · len` entries.
pub fn sufficiently_different(c1: &[i8], c2: &[i8], fraction: f64) -> Result<bool> {
    if c1.len() != c2.len() {
        return Err(Error::Config(format!(
            "sign vectors differ in length ({} vs {})",
            c1.len(),
            c2.len()
        )));
    }
    let disagree = c1.iter().zip(c2).filter(|(a, b)| a != b).count();
    Ok(disagree as f64 >= fraction * c1.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t1() -> ManifoldModel {
        ManifoldModel::torus(1).unwrap()
    }
    fn t2() -> ManifoldModel {
        ManifoldModel::torus(2).unwrap()
    }

    fn alternating(len: usize) -> Vec<i8> {
        (0..len).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect()
    }

    #[test]
    fn mollifier_examples() {
        assert!((mollifier(0.0) - 1.0).abs() < 1e-15);
        assert_eq!(mollifier(0.125), 0.0);
        assert_eq!(mollifier(0.2), 0.0);
    }

    #[test]
    fn bump_density_examples() {
        let m = 4;
        let rho = DensityModel::bump(&t2(), m, vec![1; 16]).unwrap();
        let peak = rho.evaluate(&[(1.5 + 0.25) / 4.0, (2.5 + 0.25) / 4.0]);
        assert!((peak - (1.0 + 1.0 / 16.0)).abs() < 1e-14);
        // cube centre lies outside both bump supports
        assert_eq!(rho.evaluate(&[0.125, 0.125]), 1.0);
        assert!(rho.rho_min >= 1.0 - 1.0 / 16.0 && rho.rho_max <= 1.0 + 1.0 / 16.0);

        assert!(matches!(
            DensityModel::bump(&t2(), 4, vec![1; 15]),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            DensityModel::bump(&t2(), 4, vec![0; 16]),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            DensityModel::bump(&ManifoldModel::sphere2(), 4, vec![1; 16]),
            Err(Error::Capability(_))
        ));
    }

    #[test]
    fn bump_density_has_unit_mass() {
        for (model, grid) in [(t1(), 4096), (t2(), 512)] {
            let d = model.intrinsic_dim;
            let m = 4;
            let rho = DensityModel::bump(&model, m, alternating(m.pow(d as u32))).unwrap();
            let vals = rho.on_grid(grid).unwrap();
            let mass = vals.iter().sum::<f64>() / vals.len() as f64;
            assert!((mass - 1.0).abs() < 1e-6, "mass {mass}");
            assert!(vals
                .iter()
                .all(|&v| v >= rho.rho_min - 1e-15 && v <= rho.rho_max + 1e-15));
        }
    }

    #[test]
    fn single_bump_integrates_to_zero() {
        // a_i over its own cube, by midpoint rule on a fine grid
        let n = 20_000;
        let sum: f64 = (0..n)
            .map(|k| template(&[-0.5 + (k as f64 + 0.5) / n as f64]).0)
            .sum::<f64>()
            / n as f64;
        assert!(sum.abs() < 1e-8);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let rho = DensityModel::bump(&t2(), 4, alternating(16)).unwrap();
        let pts = t2().sample_uniform(400, 8);
        let h = 1e-6;
        let mut checked = 0;
        for x in pts.points() {
            let g = rho.gradient(x);
            let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gn < 1e-3 {
                continue;
            }
            for k in 0..2 {
                let mut p = x.to_vec();
                let mut q = x.to_vec();
                p[k] += h;
                q[k] -= h;
                let fd = (rho.evaluate(&p) - rho.evaluate(&q)) / (2.0 * h);
                assert!((fd - g[k]).abs() <= 1e-6 * gn.max(1.0), "{fd} vs {}", g[k]);
            }
            checked += 1;
        }
        assert!(checked > 20);
    }

    #[test]
    fn derivative_bounds_scale_with_m() {
        // max |∇ρ| · m stays bounded and the Hessian is bounded uniformly in m
        let mut scaled = Vec::new();
        for m in [4usize, 8] {
            let rho = DensityModel::bump(&t1(), m, alternating(m)).unwrap();
            let n = 1 << 16;
            let h = 1.0 / n as f64;
            let grads: Vec<f64> = (0..n).map(|k| rho.gradient(&[k as f64 * h])[0]).collect();
            let gmax = grads.iter().fold(0.0f64, |a, g| a.max(g.abs()));
            let hmax = (0..n)
                .map(|k| ((grads[(k + 1) % n] - grads[k]) / h).abs())
                .fold(0.0f64, f64::max);
            scaled.push((gmax * m as f64, hmax));
        }
        assert!((scaled[0].0 - scaled[1].0).abs() / scaled[0].0 < 0.05);
        assert!((scaled[0].1 - scaled[1].1).abs() / scaled[0].1 < 0.05);
    }

    #[test]
    fn uniform_sampler_passes_chi_square() {
        let rho = DensityModel::uniform(&t2());
        let cloud = rho.sample(10_000, 21);
        let mut bins = [0usize; 16];
        for p in cloud.points() {
            bins[(p[0] * 4.0) as usize * 4 + (p[1] * 4.0) as usize] += 1;
        }
        let expected = 10_000.0 / 16.0;
        let stat: f64 = bins
            .iter()
            .map(|&o| (o as f64 - expected).powi(2) / expected)
            .sum();
        // 0.999 quantile of χ² with 15 degrees of freedom
        assert!(stat < 37.697, "χ² = {stat}");
        assert!(rho.sample(0, 1).is_empty());
    }

    #[test]
    fn bump_sampler_matches_cube_masses() {
        let m = 2;
        let c = vec![1, -1];
        let rho = DensityModel::bump(&t1(), m, c).unwrap();
        let n = 100_000;
        let (cloud, proposals) = rho.sample_with_stats(n, 4);
        // masses of the quarter intervals that contain one half-bump each
        let grid = 1 << 16;
        let vals = rho.on_grid(grid).unwrap();
        for q in 0..4 {
            let mass: f64 =
                vals[q * grid / 4..(q + 1) * grid / 4].iter().sum::<f64>() / grid as f64;
            let count = cloud
                .points()
                .filter(|p| (p[0] * 4.0) as usize == q)
                .count() as f64;
            let se = (n as f64 * mass * (1.0 - mass)).sqrt();
            assert!((count - n as f64 * mass).abs() <= 3.0 * se);
        }
        // acceptance rate 1/ρ_max
        let p = 1.0 / rho.rho_max;
        let rate = n as f64 / proposals as f64;
        let se = (p * (1.0 - p) / proposals as f64).sqrt();
        assert!((rate - p).abs() <= 3.0 * se, "rate {rate} vs {p}");
    }

    #[test]
    fn kl_examples() {
        let m = 4;
        let a = DensityModel::bump(&t1(), m, alternating(m)).unwrap();
        let neg: Vec<i8> = alternating(m).iter().map(|s| -s).collect();
        let b = DensityModel::bump(&t1(), m, neg).unwrap();
        assert!(kl_divergence(&a, &a, 2048).unwrap().abs() < 1e-12);
        let kl = kl_divergence(&a, &b, 2048).unwrap();
        assert!(kl > 0.0);
        assert!(kl <= chi2_bound(&a, &b, 2048).unwrap());
        let half = kl_divergence(&a, &b, 1024).unwrap();
        assert!((kl - half).abs() < 1e-8);
        let s2 = ManifoldModel::sphere2();
        assert!(matches!(
            kl_divergence(&DensityModel::uniform(&s2), &DensityModel::uniform(&s2), 64),
            Err(Error::Capability(_))
        ));
    }

    #[test]
    fn sufficiently_different_examples() {
        let c1 = alternating(16);
        assert!(!sufficiently_different(&c1, &c1, 0.25).unwrap());
        let neg: Vec<i8> = c1.iter().map(|s| -s).collect();
        assert!(sufficiently_different(&c1, &neg, 0.25).unwrap());
        let mut four = c1.clone();
        for s in four.iter_mut().take(4) {
            *s = -*s;
        }
        assert!(sufficiently_different(&c1, &four, 0.25).unwrap());
        assert!(matches!(
            sufficiently_different(&c1, &c1[..3], 0.25),
            Err(Error::Config(_))
        ));
    }

    proptest! {
        #[test]
        fn bump_values_stay_within_bounds(signs in proptest::collection::vec(prop::bool::ANY, 16), seed in 0u64..1000) {
            let c: Vec<i8> = signs.iter().map(|&b| if b { 1 } else { -1 }).collect();
            let rho = DensityModel::bump(&t2(), 4, c).unwrap();
            let cloud = t2().sample_uniform(64, seed);
            for p in cloud.points() {
                let v = rho.evaluate(p);
                prop_assert!(v >= rho.rho_min && v <= rho.rho_max);
            }
        }

        #[test]
        fn kl_is_nonnegative_and_below_chi2(s1 in proptest::collection::vec(prop::bool::ANY, 8), s2 in proptest::collection::vec(prop::bool::ANY, 8)) {
            let to_c = |s: &Vec<bool>| s.iter().map(|&b| if b { 1i8 } else { -1 }).collect::<Vec<_>>();
            let a = DensityModel::bump(&t1(), 8, to_c(&s1)).unwrap();
            let b = DensityModel::bump(&t1(), 8, to_c(&s2)).unwrap();
            let kl = kl_divergence(&a, &b, 2048).unwrap();
            prop_assert!(kl >= -1e-14);
            prop_assert!(kl <= chi2_bound(&a, &b, 2048).unwrap() + 1e-14);
        }
    }
}
