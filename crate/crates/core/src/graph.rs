//! Kernels, ε-proximity graphs built with a cell list, and the graph
//! Laplacians `Δ_n` and `ℒ = (2/σ_η) Δ_n`.

use std::f64::consts::PI;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ManifoldKind, PointCloud};
use crate::linalg::SymOp;
use crate::quad::adaptive_simpson;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelProfile {
    /// `η(t) = 1 − t`
    Tent,
    /// `η(t) = 1 − 3t² + 2t³`
    Smoothstep,
}

/// A radial profile `η` supported on `[0, 1]`, optionally multiplied by a
/// positive constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub profile: KernelProfile,
    pub scale: f64,
}

impl Kernel {
    pub fn new(profile: KernelProfile) -> Self {
        Self {
            profile,
            scale: 1.0,
        }
    }

    pub fn tent() -> Self {
        Self::new(KernelProfile::Tent)
    }

    pub fn smoothstep() -> Self {
        Self::new(KernelProfile::Smoothstep)
    }

    /// The same profile multiplied by `factor`.
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            scale: self.scale * factor,
            ..self
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.trim() {
            "tent" => Ok(Self::tent()),
            "smoothstep" => Ok(Self::smoothstep()),
            other => Err(Error::Config(format!("unknown kernel `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.profile {
            KernelProfile::Tent => "tent",
            KernelProfile::Smoothstep => "smoothstep",
        }
    }

    #[inline]
    pub fn eta(&self, t: f64) -> f64 {
        if !(0.0..=1.0).contains(&t) {
            return 0.0;
        }
        let v = match self.profile {
            KernelProfile::Tent => 1.0 - t,
            KernelProfile::Smoothstep => 1.0 - t * t * (3.0 - 2.0 * t),
        };
        self.scale * v
    }

    /// `(∫ η(|x|) dx, ∫ x₁² η(|x|) dx)` over the unit ball of `R^d`.
    pub fn moments(&self, d: usize) -> Result<(f64, f64)> {
        let sphere_area = match d {
            1 => 2.0,
            2 => 2.0 * PI,
            3 => 4.0 * PI,
            _ => {
                return Err(Error::Config(format!(
                    "kernel moments are available for d ∈ {{1,2,3}} (got {d})"
                )))
            }
        };
        let mass = adaptive_simpson(&|r: f64| self.eta(r) * r.powi(d as i32 - 1), 0.0, 1.0, 1e-12);
        let second = adaptive_simpson(&|r: f64| self.eta(r) * r.powi(d as i32 + 1), 0.0, 1.0, 1e-12);
        Ok((sphere_area * mass, sphere_area * second / d as f64))
    }

    /// `σ_η` in dimension `d`.
    pub fn sigma_eta(&self, d: usize) -> Result<f64> {
        Ok(self.moments(d)?.1)
    }
}

/// Moments of `kernel` in dimension `d`.
pub fn kernel_moments(kernel: &Kernel, d: usize) -> Result<(f64, f64)> {
    kernel.moments(d)
}

/// `ε = c_eps (ln n / n)^{1/(d+4)}`, warning when it drops below the
/// connectivity scale `2 (ln n / n)^{1/d}`.
pub fn default_epsilon(n: usize, d: usize, c_eps: f64) -> f64 {
    let ratio = (n as f64).ln() / n as f64;
    let eps = c_eps * ratio.powf(1.0 / (d as f64 + 4.0));
    let floor = 2.0 * ratio.powf(1.0 / d as f64);
    if eps < floor {
        warn!("ε = {eps:.4} is below the connectivity scale {floor:.4} for n = {n}, d = {d}");
    }
    eps
}

/// Symmetric sparse matrix stored as its diagonal plus the strict upper
/// triangle in compressed rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    pub n: usize,
    pub diag: Vec<f64>,
    pub row_ptr: Vec<usize>,
    pub col: Vec<u32>,
    pub val: Vec<f64>,
}

impl SparseSymMatrix {
    /// Builds from strict-upper rows given as `(column, value)` lists.
    pub fn from_upper_rows(diag: Vec<f64>, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = diag.len();
        if rows.len() != n {
            return Err(Error::Config("row count does not match the diagonal".into()));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut col = Vec::with_capacity(nnz);
        let mut val = Vec::with_capacity(nnz);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|e| e.0);
            for (j, v) in row {
                if j <= i || j >= n {
                    return Err(Error::Config(format!(
                        "entry ({i},{j}) is not strictly upper triangular"
                    )));
                }
                col.push(j as u32);
                val.push(v);
            }
            row_ptr.push(col.len());
        }
        Ok(Self {
            n,
            diag,
            row_ptr,
            col,
            val,
        })
    }

    /// Number of stored off-diagonal pairs.
    pub fn upper_nnz(&self) -> usize {
        self.val.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col[a..b]
            .iter()
            .zip(&self.val[a..b])
            .map(|(&j, &v)| (j as usize, v))
    }

    /// Off-diagonal entry `(i, j)`; zero if absent.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let lo = self.row_ptr[a];
        let hi = self.row_ptr[a + 1];
        match self.col[lo..hi].binary_search(&(b as u32)) {
            Ok(k) => self.val[lo + k],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            y[i] = self.diag[i] * x[i];
        }
        for i in 0..self.n {
            let xi = x[i];
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col[k] as usize;
                let v = self.val[k];
                acc += v * x[j];
                y[j] += v * xi;
            }
            y[i] += acc;
        }
    }

    /// Dense row-major copy; intended for small fixtures.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = self.diag[i];
            for (j, v) in self.row(i) {
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
        }
        a
    }
}

impl SymOp for SparseSymMatrix {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y)
    }
}

/// ε-proximity graph with weights `η(dist/ε)`.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    pub n: usize,
    pub epsilon: f64,
    pub kernel: Kernel,
    /// Intrinsic dimension of the sampled manifold.
    pub dim: usize,
    pub metric: &'static str,
    /// Weights with zero diagonal.
    pub adjacency: SparseSymMatrix,
    pub degrees: Vec<f64>,
    pub components: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub n: usize,
    pub epsilon: f64,
    pub edges: usize,
    pub mean_degree: f64,
    pub components: usize,
    pub metric: String,
}

impl WeightedGraph {
    pub fn edge_count(&self) -> usize {
        self.adjacency.upper_nnz()
    }

    /// Iterates each undirected edge once as `(i, j, w)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.adjacency.row(i).map(move |(j, w)| (i, j, w)))
    }

    pub fn summary(&self) -> GraphSummary {
        GraphSummary {
            n: self.n,
            epsilon: self.epsilon,
            edges: self.edge_count(),
            mean_degree: 2.0 * self.edge_count() as f64 / self.n.max(1) as f64,
            components: self.components,
            metric: self.metric.to_string(),
        }
    }

    pub fn is_connected(&self) -> bool {
        self.components == 1
    }
}

/// Builds the ε-graph of `cloud` using a cell list with cell side ≥ ε.
pub fn build_graph(cloud: &PointCloud, epsilon: f64, kernel: Kernel) -> Result<WeightedGraph> {
    let model = &cloud.model;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Config(format!(
            "ε must lie in (0, 1) for {} (got {epsilon})",
            model.name()
        )));
    }
    if model.is_torus() && epsilon >= 0.25 {
        warn!("ε = {epsilon:.4} ≥ 1/4 on the torus: neighbourhoods cover a large part of the domain");
    }
    let n = cloud.len();
    let cells = CellList::new(cloud, epsilon);
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let mut scratch = Vec::new();
    for i in 0..n {
        scratch.clear();
        let x = cloud.point(i);
        cells.for_each_candidate(i, |j| {
            if j > i {
                let dist = model.ambient_distance(x, cloud.point(j));
                if dist <= epsilon {
                    let w = kernel.eta(dist / epsilon);
                    if w > 0.0 {
                        scratch.push((j, w));
                    }
                }
            }
        });
        rows.push(scratch.clone());
    }
    let adjacency = SparseSymMatrix::from_upper_rows(vec![0.0; n], rows)?;
    let mut degrees = vec![0.0; n];
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for (j, w) in adjacency.row(i) {
            degrees[i] += w;
            degrees[j] += w;
            uf.union(i, j);
        }
    }
    let components = uf.count();
    Ok(WeightedGraph {
        n,
        epsilon,
        kernel,
        dim: model.intrinsic_dim,
        metric: model.metric_tag(),
        adjacency,
        degrees,
        components,
    })
}

/// O(n²) construction used as a reference.
pub fn build_graph_brute_force(
    cloud: &PointCloud,
    epsilon: f64,
    kernel: Kernel,
) -> Result<WeightedGraph> {
    let model = &cloud.model;
    let n = cloud.len();
    let mut rows = vec![Vec::new(); n];
    for (i, row) in rows.iter_mut().enumerate() {
        for j in i + 1..n {
            let dist = model.ambient_distance(cloud.point(i), cloud.point(j));
            if dist <= epsilon {
                let w = kernel.eta(dist / epsilon);
                if w > 0.0 {
                    row.push((j, w));
                }
            }
        }
    }
    let adjacency = SparseSymMatrix::from_upper_rows(vec![0.0; n], rows)?;
    let mut degrees = vec![0.0; n];
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for (j, w) in adjacency.row(i) {
            degrees[i] += w;
            degrees[j] += w;
            uf.union(i, j);
        }
    }
    Ok(WeightedGraph {
        n,
        epsilon,
        kernel,
        dim: model.intrinsic_dim,
        metric: model.metric_tag(),
        adjacency,
        degrees,
        components: uf.count(),
    })
}

/// Uniform bucketing of a point cloud with cell side at least `radius`.
pub(crate) struct CellList {
    per_axis: usize,
    dim: usize,
    origin: f64,
    side: f64,
    wrap: bool,
    /// Cell of each point.
    point_cell: Vec<usize>,
    cell_start: Vec<usize>,
    members: Vec<usize>,
    /// No bucketing: every point is a candidate.
    all_pairs: bool,
    n: usize,
}

impl CellList {
    pub(crate) fn new(cloud: &PointCloud, radius: f64) -> Self {
        let dim = cloud.dim();
        let (origin, extent, wrap) = match cloud.model.kind {
            ManifoldKind::Torus => (0.0, 1.0, true),
            ManifoldKind::Sphere2 => (-1.0, 2.0, false),
        };
        let per_axis = ((extent / radius).floor() as usize).clamp(1, 1 << 10);
        // With fewer than three cells per axis a wrapped stencil would
        // revisit cells; fall back to scanning every point.
        let all_pairs = (wrap && per_axis < 3) || per_axis.pow(dim as u32) > 1 << 24;
        let side = extent / per_axis as f64;
        let n = cloud.len();
        let mut list = Self {
            per_axis,
            dim,
            origin,
            side,
            wrap,
            point_cell: Vec::new(),
            cell_start: Vec::new(),
            members: Vec::new(),
            all_pairs,
            n,
        };
        if all_pairs {
            return list;
        }
        let total = per_axis.pow(dim as u32);
        list.point_cell = cloud.points().map(|p| list.cell_of(p)).collect();
        let mut counts = vec![0usize; total + 1];
        for &c in &list.point_cell {
            counts[c + 1] += 1;
        }
        for c in 0..total {
            counts[c + 1] += counts[c];
        }
        let mut fill = counts.clone();
        let mut members = vec![0; n];
        for (i, &c) in list.point_cell.iter().enumerate() {
            members[fill[c]] = i;
            fill[c] += 1;
        }
        list.cell_start = counts;
        list.members = members;
        list
    }

    fn axis_index(&self, coord: f64) -> usize {
        let k = ((coord - self.origin) / self.side).floor();
        (k.max(0.0) as usize).min(self.per_axis - 1)
    }

    pub(crate) fn cell_of(&self, p: &[f64]) -> usize {
        p.iter()
            .fold(0, |acc, &c| acc * self.per_axis + self.axis_index(c))
    }

    /// Calls `f` for every point that may lie within `radius` of `p`.
    pub(crate) fn for_each_near<F: FnMut(usize)>(&self, p: &[f64], mut f: F) {
        if self.all_pairs {
            (0..self.n).for_each(f);
            return;
        }
        let base: Vec<usize> = p.iter().map(|&c| self.axis_index(c)).collect();
        let k = self.per_axis as isize;
        let stencil = 3usize.pow(self.dim as u32);
        'outer: for s in 0..stencil {
            let mut rem = s;
            let mut cell = 0usize;
            for &b in &base {
                let off = (rem % 3) as isize - 1;
                rem /= 3;
                let mut idx = b as isize + off;
                if self.wrap {
                    idx = idx.rem_euclid(k);
                } else if idx < 0 || idx >= k {
                    continue 'outer;
                }
                cell = cell * self.per_axis + idx as usize;
            }
            for &j in &self.members[self.cell_start[cell]..self.cell_start[cell + 1]] {
                f(j);
            }
        }
    }

    fn for_each_candidate<F: FnMut(usize)>(&self, i: usize, f: F) {
        if self.all_pairs {
            (i + 1..self.n).for_each(f);
            return;
        }
        // Recover the point's own cell from the stored index so that
        // boundary rounding never differs between neighbours.
        let mut base = Vec::with_capacity(self.dim);
        let mut rem = self.point_cell[i];
        for _ in 0..self.dim {
            base.push(rem % self.per_axis);
            rem /= self.per_axis;
        }
        base.reverse();
        let centre: Vec<f64> = base
            .iter()
            .map(|&b| self.origin + (b as f64 + 0.5) * self.side)
            .collect();
        self.for_each_near(&centre, f);
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }

    fn count(&mut self) -> usize {
        (0..self.parent.len()).filter(|&i| self.find(i) == i).count()
    }
}

/// Matrix-free view of `scale · Σ_j w_ij (u_i − u_j)` on a graph.
#[derive(Debug, Clone, Copy)]
pub struct GraphLaplacian<'a> {
    pub graph: &'a WeightedGraph,
    pub scale: f64,
}

impl GraphLaplacian<'_> {
    /// Explicitly assembled matrix (diagonal `scale·deg`, off-diagonal
    /// `−scale·w`).
    pub fn assemble(&self) -> SparseSymMatrix {
        let a = &self.graph.adjacency;
        SparseSymMatrix {
            n: a.n,
            diag: self.graph.degrees.iter().map(|d| d * self.scale).collect(),
            row_ptr: a.row_ptr.clone(),
            col: a.col.clone(),
            val: a.val.iter().map(|w| -w * self.scale).collect(),
        }
    }

    /// `⟨L u, u⟩` in the `(1/n)Σ` inner product, computed edge-wise.
    pub fn energy(&self, u: &[f64]) -> f64 {
        let sum: f64 = self
            .graph
            .edges()
            .map(|(i, j, w)| w * (u[i] - u[j]) * (u[i] - u[j]))
            .sum();
        self.scale * sum / self.graph.n as f64
    }
}

impl SymOp for GraphLaplacian<'_> {
    // operator size, not the manifold dimension `graph.dim`
    #[allow(clippy::misnamed_getters)]
    fn dim(&self) -> usize {
        self.graph.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        let a = &self.graph.adjacency;
        for i in 0..a.n {
            let xi = x[i];
            let mut acc = 0.0;
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                let j = a.col[k] as usize;
                let t = a.val[k] * (xi - x[j]);
                acc += t;
                y[j] -= t;
            }
            y[i] += acc;
        }
        let s = self.scale;
        y.iter_mut().for_each(|v| *v *= s);
    }

    fn validate(&self) -> Result<()> {
        if self.graph.components != 1 {
            return Err(Error::Disconnected {
                components: self.graph.components,
            });
        }
        Ok(())
    }
}

/// `(Δ_n, ℒ)` with `Δ_n u(x_i) = (1/(n ε^{d+2})) Σ_j w_ij (u_i − u_j)` and
/// `ℒ = (2/σ_η) Δ_n`.
pub fn graph_laplacian(graph: &WeightedGraph) -> Result<(GraphLaplacian<'_>, GraphLaplacian<'_>)> {
    let base = 1.0 / (graph.n as f64 * graph.epsilon.powi(graph.dim as i32 + 2));
    let sigma = graph.kernel.sigma_eta(graph.dim)?;
    Ok((
        GraphLaplacian { graph, scale: base },
        GraphLaplacian {
            graph,
            scale: 2.0 * base / sigma,
        },
    ))
}

/// `ℒ` alone.
pub fn normalized_laplacian(graph: &WeightedGraph) -> Result<GraphLaplacian<'_>> {
    Ok(graph_laplacian(graph)?.1)
}
