//! Manifold models: flat tori `T^d` (d = 1, 2, 3) with the quotient metric and
//! the unit sphere `S²` embedded in `R³`.
//!
//! Each model knows how to sample itself uniformly, measure distances, map
//! between points and tangent vectors, and list the exact eigenpairs of `Δ_ρ`
//! for the constant density `ρ = 1 / volume`.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counter-based generator used for every random stream in the crate.
pub type Stream = ChaCha8Rng;

/// Opens the random stream for a 64-bit seed.
pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed of the `trial`-th independent repetition derived from a base seed.
pub fn trial_seed(base: u64, trial: usize) -> u64 {
    base ^ trial as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldKind {
    Torus,
    Sphere2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldModel {
    pub kind: ManifoldKind,
    pub intrinsic_dim: usize,
    pub ambient_dim: usize,
    pub volume: f64,
}

/// Builds a manifold model. `d` is ignored for the sphere.
pub fn make_manifold(kind: ManifoldKind, d: usize) -> Result<ManifoldModel> {
    match kind {
        ManifoldKind::Torus => ManifoldModel::torus(d),
        ManifoldKind::Sphere2 => Ok(ManifoldModel::sphere2()),
    }
}

impl ManifoldModel {
    pub fn torus(d: usize) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::Config(format!(
                "torus dimension must be 1, 2 or 3 (got {d})"
            )));
        }
        Ok(Self {
            kind: ManifoldKind::Torus,
            intrinsic_dim: d,
            ambient_dim: d,
            volume: 1.0,
        })
    }

    pub fn sphere2() -> Self {
        Self {
            kind: ManifoldKind::Sphere2,
            intrinsic_dim: 2,
            ambient_dim: 3,
            volume: 4.0 * PI,
        }
    }

    /// Parses `torus1`, `torus2`, `torus3` or `sphere2`.
    pub fn parse(name: &str) -> Result<Self> {
        match name.trim() {
            "sphere2" | "sphere" | "S2" => Ok(Self::sphere2()),
            s if s.starts_with("torus") => {
                let d = s["torus".len()..]
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad torus dimension in `{s}`")))?;
                Self::torus(d)
            }
            other => Err(Error::Config(format!("unknown manifold `{other}`"))),
        }
    }

    pub fn name(&self) -> String {
        match self.kind {
            ManifoldKind::Torus => format!("torus{}", self.intrinsic_dim),
            ManifoldKind::Sphere2 => "sphere2".to_string(),
        }
    }

    pub fn is_torus(&self) -> bool {
        self.kind == ManifoldKind::Torus
    }

    /// Tag recorded in reports for the metric used by the graph builder.
    pub fn metric_tag(&self) -> &'static str {
        match self.kind {
            ManifoldKind::Torus => "wrap",
            ManifoldKind::Sphere2 => "chordal",
        }
    }

    /// Constant density `1 / volume`.
    pub fn uniform_density(&self) -> f64 {
        1.0 / self.volume
    }

    /// Draws one uniform point into `out`.
    pub fn draw_uniform<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        match self.kind {
            ManifoldKind::Torus => {
                for c in out.iter_mut() {
                    *c = rng.random::<f64>();
                }
            }
            ManifoldKind::Sphere2 => loop {
                let mut norm2 = 0.0;
                for c in out.iter_mut() {
                    *c = rng.sample(StandardNormal);
                    norm2 += *c * *c;
                }
                if norm2 > 1e-20 {
                    let inv = norm2.sqrt().recip();
                    out.iter_mut().for_each(|c| *c *= inv);
                    break;
                }
            },
        }
    }

    /// `n` i.i.d. uniform samples.
    pub fn sample_uniform(&self, n: usize, seed: u64) -> PointCloud {
        let mut rng = stream(seed);
        let dim = self.ambient_dim;
        let mut coords = vec![0.0; n * dim];
        for chunk in coords.chunks_exact_mut(dim) {
            self.draw_uniform(&mut rng, chunk);
        }
        PointCloud {
            model: self.clone(),
            coords,
            seed,
        }
    }

    /// Geodesic distance.
    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.kind {
            ManifoldKind::Torus => self.ambient_distance(x, y),
            ManifoldKind::Sphere2 => dot(x, y).clamp(-1.0, 1.0).acos(),
        }
    }

    /// Distance used by the graph builder: wrap metric on the torus, chord
    /// length on the sphere.
    pub fn ambient_distance(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.kind {
            ManifoldKind::Torus => x
                .iter()
                .zip(y)
                .map(|(a, b)| {
                    let w = wrap_diff(b - a);
                    w * w
                })
                .sum::<f64>()
                .sqrt(),
            ManifoldKind::Sphere2 => x
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Displacement from `x` to `y` in ambient coordinates (wrapped on the
    /// torus).
    pub fn displacement(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        match self.kind {
            ManifoldKind::Torus => x.iter().zip(y).map(|(a, b)| wrap_diff(b - a)).collect(),
            ManifoldKind::Sphere2 => x.iter().zip(y).map(|(a, b)| b - a).collect(),
        }
    }

    /// Orthogonal projection of an ambient vector onto `T_x M`.
    pub fn tangent_project(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        match self.kind {
            ManifoldKind::Torus => v.to_vec(),
            ManifoldKind::Sphere2 => {
                let s = dot(x, v);
                v.iter().zip(x).map(|(vi, xi)| vi - s * xi).collect()
            }
        }
    }

    pub fn log_map(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        match self.kind {
            ManifoldKind::Torus => {
                let v = self.displacement(x, y);
                if v.iter().any(|c| c.abs() >= 0.5) {
                    return Err(Error::Domain(
                        "torus log map needs |Δ| < 1/2 per coordinate".into(),
                    ));
                }
                Ok(v)
            }
            ManifoldKind::Sphere2 => {
                let c = dot(x, y).clamp(-1.0, 1.0);
                let theta = c.acos();
                let w: Vec<f64> = y.iter().zip(x).map(|(yi, xi)| yi - c * xi).collect();
                let wn = norm(&w);
                if theta == 0.0 {
                    return Ok(vec![0.0; 3]);
                }
                if PI - theta < 1e-12 || wn < 1e-15 {
                    return Err(Error::Domain("sphere log map at the cut locus".into()));
                }
                Ok(w.iter().map(|wi| wi * theta / wn).collect())
            }
        }
    }

    pub fn exp_map(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        match self.kind {
            ManifoldKind::Torus => x
                .iter()
                .zip(v)
                .map(|(a, b)| (a + b).rem_euclid(1.0))
                .collect(),
            ManifoldKind::Sphere2 => {
                let t = norm(v);
                if t == 0.0 {
                    return x.to_vec();
                }
                let (s, c) = t.sin_cos();
                x.iter().zip(v).map(|(xi, vi)| c * xi + s * vi / t).collect()
            }
        }
    }

    /// First `count` eigenpairs of `Δ_ρ` for `ρ = 1/volume`, ascending.
    pub fn exact_spectrum(&self, count: usize) -> Result<Vec<ContinuumEigenpair>> {
        if count == 0 {
            return Err(Error::Config("exact_spectrum needs count ≥ 1".into()));
        }
        match self.kind {
            ManifoldKind::Torus => Ok(torus_spectrum(self.intrinsic_dim, count)),
            ManifoldKind::Sphere2 => {
                if count > 16 {
                    return Err(Error::Capability(format!(
                        "spherical harmonics are implemented through degree 3 (16 functions), {count} requested"
                    )));
                }
                Ok(sphere_spectrum().into_iter().take(count).collect())
            }
        }
    }

    /// Full eigenspace containing the `l`-th eigenvalue (1-based) and the
    /// spectral gap `γ_l` to the nearest distinct eigenvalue.
    pub fn eigenspace(&self, l: usize) -> Result<(Vec<ContinuumEigenpair>, f64)> {
        if l == 0 {
            return Err(Error::Config("eigenpair index is 1-based".into()));
        }
        match self.kind {
            ManifoldKind::Torus => {
                let d = self.intrinsic_dim;
                let mut count = l + 1;
                loop {
                    let spec = torus_spectrum(d, count);
                    let lam = spec[l - 1].lambda;
                    if let Some(next) = spec.iter().map(|p| p.lambda).find(|&v| v > lam) {
                        let level: Vec<_> =
                            spec.iter().filter(|p| p.lambda == lam).cloned().collect();
                        let prev = spec.iter().map(|p| p.lambda).rfind(|&v| v < lam);
                        let gap = match prev {
                            Some(p) => (lam - p).min(next - lam),
                            None => next - lam,
                        };
                        return Ok((level, gap));
                    }
                    count *= 2;
                }
            }
            ManifoldKind::Sphere2 => {
                let spec = self.exact_spectrum(l)?;
                let degree = match spec[l - 1].function {
                    EigenFunction::Harmonic { degree, .. } => degree,
                    _ => unreachable!("sphere spectrum holds harmonics only"),
                };
                let lam = spec[l - 1].lambda;
                let level: Vec<_> = sphere_spectrum()
                    .into_iter()
                    .filter(|p| p.lambda == lam)
                    .collect();
                let next = sphere_eigenvalue(degree + 1) - lam;
                let gap = if degree == 0 {
                    next
                } else {
                    next.min(lam - sphere_eigenvalue(degree - 1))
                };
                Ok((level, gap))
            }
        }
    }
}

/// Maps a coordinate difference into `[-1/2, 1/2)`.
#[inline]
pub fn wrap_diff(d: f64) -> f64 {
    d - (d + 0.5).floor()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Samples on a manifold, stored row-major in ambient coordinates.
#[derive(Debug, Clone)]
pub struct PointCloud {
    pub model: ManifoldModel,
    pub coords: Vec<f64>,
    /// Seed of the stream that produced the points.
    pub seed: u64,
}

impl PointCloud {
    pub fn from_points(model: ManifoldModel, coords: Vec<f64>) -> Result<Self> {
        if !coords.len().is_multiple_of(model.ambient_dim) {
            return Err(Error::Config(
                "coordinate count is not a multiple of the ambient dimension".into(),
            ));
        }
        Ok(Self {
            model,
            coords,
            seed: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.model.ambient_dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.model.ambient_dim
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.model.ambient_dim;
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.model.ambient_dim)
    }
}

/// A smooth function on the manifold with a tangential gradient.
pub trait SmoothFunction {
    fn eval(&self, x: &[f64]) -> f64;
    fn grad(&self, x: &[f64]) -> Vec<f64>;
}

/// Closed-form eigenfunctions.
#[derive(Debug, Clone, PartialEq)]
pub enum EigenFunction {
    Constant,
    /// `√2 cos(2π k·x)` on the torus.
    TorusCos(Vec<i32>),
    /// `√2 sin(2π k·x)` on the torus.
    TorusSin(Vec<i32>),
    /// Real spherical harmonic of the given degree and order, scaled to unit
    /// `L²(ρ)` norm for `ρ = 1/(4π)`.
    Harmonic { degree: usize, order: i32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuumEigenpair {
    pub lambda: f64,
    pub multiplicity: usize,
    pub function: EigenFunction,
}

impl ContinuumEigenpair {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.function.eval(x)
    }

    /// Tangential gradient.
    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        self.function.grad(x)
    }
}

impl SmoothFunction for ContinuumEigenpair {
    fn eval(&self, x: &[f64]) -> f64 {
        self.function.eval(x)
    }
    fn grad(&self, x: &[f64]) -> Vec<f64> {
        self.function.grad(x)
    }
}

impl EigenFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            EigenFunction::Constant => 1.0,
            EigenFunction::TorusCos(k) => SQRT_2 * (2.0 * PI * phase(k, x)).cos(),
            EigenFunction::TorusSin(k) => SQRT_2 * (2.0 * PI * phase(k, x)).sin(),
            EigenFunction::Harmonic { degree, order } => harmonic(*degree, *order, x).0,
        }
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        match self {
            EigenFunction::Constant => vec![0.0; x.len()],
            EigenFunction::TorusCos(k) => {
                let s = -SQRT_2 * 2.0 * PI * (2.0 * PI * phase(k, x)).sin();
                k.iter().map(|&ki| s * ki as f64).collect()
            }
            EigenFunction::TorusSin(k) => {
                let c = SQRT_2 * 2.0 * PI * (2.0 * PI * phase(k, x)).cos();
                k.iter().map(|&ki| c * ki as f64).collect()
            }
            EigenFunction::Harmonic { degree, order } => {
                let g = harmonic(*degree, *order, x).1;
                let s = dot(x, &g);
                g.iter().zip(x).map(|(gi, xi)| gi - s * xi).collect()
            }
        }
    }
}

const SQRT_2: f64 = std::f64::consts::SQRT_2;

fn phase(k: &[i32], x: &[f64]) -> f64 {
    k.iter().zip(x).map(|(&ki, xi)| ki as f64 * xi).sum()
}

fn torus_spectrum(d: usize, count: usize) -> Vec<ContinuumEigenpair> {
    let mut radius = 1i32;
    loop {
        let mut ks: Vec<Vec<i32>> = Vec::new();
        let side = 2 * radius + 1;
        let total = (side as usize).pow(d as u32);
        for idx in 0..total {
            let mut rem = idx;
            let mut k = Vec::with_capacity(d);
            for _ in 0..d {
                k.push((rem % side as usize) as i32 - radius);
                rem /= side as usize;
            }
            k.reverse();
            // keep one representative of ±k: first nonzero entry positive
            match k.iter().find(|&&c| c != 0) {
                None => ks.push(k),
                Some(&c) if c > 0 => ks.push(k),
                _ => {}
            }
        }
        let norm2 = |k: &Vec<i32>| k.iter().map(|c| (c * c) as i64).sum::<i64>();
        ks.sort_by(|a, b| norm2(a).cmp(&norm2(b)).then_with(|| a.cmp(b)));
        // All wave vectors with |k| ≤ radius are present.
        let complete = ks
            .iter()
            .take_while(|k| norm2(k) <= (radius as i64) * (radius as i64))
            .count();
        let funcs = 2 * complete - 1;
        let complete_level_bound = (radius as i64) * (radius as i64);
        if funcs >= count {
            let mut out = Vec::new();
            for k in ks.iter().take(complete) {
                let lambda = 4.0 * PI * PI * norm2(k) as f64;
                if k.iter().all(|&c| c == 0) {
                    out.push((lambda, norm2(k), EigenFunction::Constant));
                } else {
                    out.push((lambda, norm2(k), EigenFunction::TorusCos(k.clone())));
                    out.push((lambda, norm2(k), EigenFunction::TorusSin(k.clone())));
                }
            }
            let needed_level = out[count - 1].1;
            if needed_level <= complete_level_bound {
                let mult = |lvl: i64| out.iter().filter(|e| e.1 == lvl).count();
                return out
                    .iter()
                    .take(count)
                    .map(|(lambda, lvl, f)| ContinuumEigenpair {
                        lambda: *lambda,
                        multiplicity: mult(*lvl),
                        function: f.clone(),
                    })
                    .collect();
            }
        }
        radius += 1;
    }
}

fn sphere_eigenvalue(degree: usize) -> f64 {
    (degree * (degree + 1)) as f64 / (4.0 * PI)
}

fn sphere_spectrum() -> Vec<ContinuumEigenpair> {
    let mut out = Vec::with_capacity(16);
    for degree in 0..=3usize {
        for order in -(degree as i32)..=(degree as i32) {
            out.push(ContinuumEigenpair {
                lambda: sphere_eigenvalue(degree),
                multiplicity: 2 * degree + 1,
                function: EigenFunction::Harmonic { degree, order },
            });
        }
    }
    out
}

/// Value and Euclidean gradient of the polynomial extension of a real
/// spherical harmonic, normalised so that `∫ Y² dS = 4π`.
fn harmonic(degree: usize, order: i32, p: &[f64]) -> (f64, [f64; 3]) {
    let (x, y, z) = (p[0], p[1], p[2]);
    let s3 = 3f64.sqrt();
    let s15 = 15f64.sqrt();
    let s5h = 5f64.sqrt() / 2.0;
    let s105 = 105f64.sqrt();
    let c33 = 0.5 * (35.0f64 / 2.0).sqrt();
    let c31 = 0.5 * (21.0f64 / 2.0).sqrt();
    let c30 = 7f64.sqrt() / 2.0;
    match (degree, order) {
        (0, 0) => (1.0, [0.0; 3]),
        (1, -1) => (s3 * y, [0.0, s3, 0.0]),
        (1, 0) => (s3 * z, [0.0, 0.0, s3]),
        (1, 1) => (s3 * x, [s3, 0.0, 0.0]),
        (2, -2) => (s15 * x * y, [s15 * y, s15 * x, 0.0]),
        (2, -1) => (s15 * y * z, [0.0, s15 * z, s15 * y]),
        (2, 0) => (s5h * (3.0 * z * z - 1.0), [0.0, 0.0, s5h * 6.0 * z]),
        (2, 1) => (s15 * x * z, [s15 * z, 0.0, s15 * x]),
        (2, 2) => (
            0.5 * s15 * (x * x - y * y),
            [s15 * x, -s15 * y, 0.0],
        ),
        (3, -3) => (
            c33 * y * (3.0 * x * x - y * y),
            [c33 * 6.0 * x * y, c33 * (3.0 * x * x - 3.0 * y * y), 0.0],
        ),
        (3, -2) => (s105 * x * y * z, [s105 * y * z, s105 * x * z, s105 * x * y]),
        (3, -1) => (
            c31 * y * (5.0 * z * z - 1.0),
            [0.0, c31 * (5.0 * z * z - 1.0), c31 * 10.0 * y * z],
        ),
        (3, 0) => (
            c30 * (5.0 * z * z * z - 3.0 * z),
            [0.0, 0.0, c30 * (15.0 * z * z - 3.0)],
        ),
        (3, 1) => (
            c31 * x * (5.0 * z * z - 1.0),
            [c31 * (5.0 * z * z - 1.0), 0.0, c31 * 10.0 * x * z],
        ),
        (3, 2) => (
            0.5 * s105 * (x * x - y * y) * z,
            [s105 * x * z, -s105 * y * z, 0.5 * s105 * (x * x - y * y)],
        ),
        (3, 3) => (
            c33 * x * (x * x - 3.0 * y * y),
            [c33 * (3.0 * x * x - 3.0 * y * y), -c33 * 6.0 * x * y, 0.0],
        ),
        _ => unreachable!("harmonic degree {degree} order {order} is not tabulated"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mc_mean<F: Fn(&[f64]) -> f64>(cloud: &PointCloud, f: F) -> (f64, f64) {
        let vals: Vec<f64> = cloud.points().map(f).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }

    #[test]
    fn make_manifold_examples() {
        let t = make_manifold(ManifoldKind::Torus, 2).unwrap();
        assert_eq!((t.ambient_dim, t.volume), (2, 1.0));
        let s = make_manifold(ManifoldKind::Sphere2, 0).unwrap();
        assert_eq!(s.ambient_dim, 3);
        assert!((s.volume - 4.0 * PI).abs() < 1e-15);
        assert!(matches!(
            make_manifold(ManifoldKind::Torus, 7),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn sampling_is_in_range_and_deterministic() {
        let t = ManifoldModel::torus(2).unwrap();
        let c = t.sample_uniform(4, 11);
        assert_eq!(c.len(), 4);
        assert!(c.coords.iter().all(|&v| (0.0..1.0).contains(&v)));
        assert_eq!(c.coords, t.sample_uniform(4, 11).coords);

        let s = ManifoldModel::sphere2();
        let c = s.sample_uniform(1000, 5);
        for p in c.points() {
            assert!((norm(p) - 1.0).abs() < 1e-12);
        }
        let mut mean = [0.0; 3];
        for p in c.points() {
            for k in 0..3 {
                mean[k] += p[k] / 1000.0;
            }
        }
        assert!(norm(&mean) < 0.1);
    }

    #[test]
    fn distance_examples() {
        let t1 = ManifoldModel::torus(1).unwrap();
        assert!((t1.distance(&[0.1], &[0.9]) - 0.2).abs() < 1e-12);
        let s = ManifoldModel::sphere2();
        let e1 = [1.0, 0.0, 0.0];
        assert!((s.distance(&e1, &[-1.0, 0.0, 0.0]) - PI).abs() < 1e-12);
        assert!((s.ambient_distance(&e1, &[0.0, 1.0, 0.0]) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn log_map_examples() {
        let t1 = ManifoldModel::torus(1).unwrap();
        let v = t1.log_map(&[0.9], &[0.1]).unwrap();
        assert!((v[0] - 0.2).abs() < 1e-12);
        let s = ManifoldModel::sphere2();
        let c = s.sample_uniform(20, 3);
        for i in 0..19 {
            let (x, y) = (c.point(i), c.point(i + 1));
            let v = s.log_map(x, y).unwrap();
            assert!((norm(&v) - s.distance(x, y)).abs() < 1e-10);
            let back = s.exp_map(x, &v);
            assert!(s.ambient_distance(&back, y) < 1e-10);
        }
        assert!(matches!(
            s.log_map(&[1.0, 0.0, 0.0], &[-1.0, 0.0, 0.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn exact_spectrum_examples() {
        let t2 = ManifoldModel::torus(2).unwrap();
        let spec = t2.exact_spectrum(6).unwrap();
        assert_eq!(spec[0].lambda, 0.0);
        assert!((spec[1].lambda - 39.47841760435743).abs() < 1e-10);
        assert_eq!(spec[1].multiplicity, 4);
        assert_eq!(spec[5].lambda, 8.0 * PI * PI);

        let s = ManifoldModel::sphere2();
        let spec = s.exact_spectrum(4).unwrap();
        assert!((spec[1].lambda - 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert_eq!(spec[1].multiplicity, 3);
        assert!(matches!(s.exact_spectrum(17), Err(Error::Capability(_))));

        let t1 = ManifoldModel::torus(1).unwrap();
        let spec = t1.exact_spectrum(1).unwrap();
        assert_eq!(spec[0].lambda, 0.0);
        assert_eq!(spec[0].eval(&[0.3]), 1.0);
    }

    #[test]
    fn eigenspace_levels_and_gaps() {
        let t2 = ManifoldModel::torus(2).unwrap();
        let (level, gap) = t2.eigenspace(2).unwrap();
        assert_eq!(level.len(), 4);
        assert!((gap - 4.0 * PI * PI).abs() < 1e-10);
        let (level, _) = t2.eigenspace(6).unwrap();
        assert_eq!(level.len(), 4);
        assert!((level[0].lambda - 8.0 * PI * PI).abs() < 1e-10);

        let s = ManifoldModel::sphere2();
        let (level, gap) = s.eigenspace(5).unwrap();
        assert_eq!(level.len(), 5);
        assert!((gap - 4.0 / (4.0 * PI)).abs() < 1e-14);
    }

    #[test]
    fn eigenfunctions_are_orthonormal_under_monte_carlo() {
        for model in [ManifoldModel::torus(2).unwrap(), ManifoldModel::sphere2()] {
            let rho = model.uniform_density();
            let spec = model.exact_spectrum(9).unwrap();
            let cloud = model.sample_uniform(40_000, 99);
            for a in 0..spec.len() {
                for b in a..spec.len() {
                    // ∫ f_a f_b ρ dx = volume·ρ·E[f_a f_b] = E[f_a f_b]
                    let (m, se) = mc_mean(&cloud, |x| {
                        spec[a].eval(x) * spec[b].eval(x) * rho * model.volume
                    });
                    let target = if a == b { 1.0 } else { 0.0 };
                    assert!(
                        (m - target).abs() <= 4.5 * se + 1e-12,
                        "{} ({a},{b}) got {m} ± {se}",
                        model.name()
                    );
                }
                // ∫ |∇f|² ρ² dx = λ
                let (m, se) = mc_mean(&cloud, |x| {
                    let g = spec[a].grad(x);
                    dot(&g, &g) * rho * rho * model.volume
                });
                assert!((m - spec[a].lambda).abs() <= 3.0 * se + 1e-12);
            }
        }
    }

    #[test]
    fn gradients_match_tangential_finite_differences() {
        for model in [
            ManifoldModel::torus(1).unwrap(),
            ManifoldModel::torus(3).unwrap(),
            ManifoldModel::sphere2(),
        ] {
            let count = if model.is_torus() { 12 } else { 16 };
            let spec = model.exact_spectrum(count).unwrap();
            let pts = model.sample_uniform(5, 1);
            let dirs = model.sample_uniform(5, 2);
            let t = 1e-5;
            for (x, v) in pts.points().zip(dirs.points()) {
                let v = model.tangent_project(x, v);
                for f in &spec {
                    let plus = model.exp_map(x, &v.iter().map(|c| c * t).collect::<Vec<_>>());
                    let minus = model.exp_map(x, &v.iter().map(|c| -c * t).collect::<Vec<_>>());
                    let fd = (f.eval(&plus) - f.eval(&minus)) / (2.0 * t);
                    let an = dot(&f.grad(x), &v);
                    let scale = norm(&f.grad(x)) * norm(&v);
                    assert!(
                        (fd - an).abs() <= 1e-6 * scale.max(1e-3),
                        "{:?}: fd {fd} vs {an}",
                        f.function
                    );
                }
            }
        }
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(seed in 0u64..5000) {
            for model in [ManifoldModel::torus(2).unwrap(), ManifoldModel::sphere2()] {
                let c = model.sample_uniform(3, seed);
                let (x, y, z) = (c.point(0), c.point(1), c.point(2));
                let dxy = model.distance(x, y);
                prop_assert!((dxy - model.distance(y, x)).abs() < 1e-12);
                prop_assert!(dxy >= 0.0);
                prop_assert!(model.distance(x, x) < 1e-7);
                prop_assert!(dxy <= model.distance(x, z) + model.distance(z, y) + 1e-10);
                prop_assert!(model.ambient_distance(x, y) <= dxy + 1e-12);
            }
        }
    }
}
