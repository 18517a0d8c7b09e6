//! Dense reference computations used as independent oracles.
#![allow(dead_code)]

use spectral_rates::SymOp;

/// Dense row-major matrix of a symmetric operator, built column by column.
pub fn dense_matrix<O: SymOp + ?Sized>(op: &O) -> Vec<f64> {
    let n = op.dim();
    let mut a = vec![0.0; n * n];
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply(&e, &mut col);
        e[j] = 0.0;
        for i in 0..n {
            a[i * n + j] = col[i];
        }
    }
    a
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix. Returns ascending
/// eigenvalues and the matching orthonormal eigenvectors (Euclidean norm 1).
pub fn jacobi_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut a = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        let scale: f64 = a.iter().map(|x| x * x).sum();
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&j| (0..n).map(|k| v[k * n + j]).collect())
        .collect();
    (values, vectors)
}

/// `(1/n) h̃ᵀ A⁺ h̃` with `h̃ = h − mean(h)`, from a dense eigen-decomposition.
/// Eigenvalues below `cutoff · λ_max` are treated as zero.
pub fn dense_pinv_quadform(a: &[f64], n: usize, h: &[f64], cutoff: f64) -> f64 {
    let mean = h.iter().sum::<f64>() / n as f64;
    let ht: Vec<f64> = h.iter().map(|x| x - mean).collect();
    let (values, vectors) = jacobi_eigen(a, n);
    let top = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut total = 0.0;
    for (lam, v) in values.iter().zip(&vectors) {
        if lam.abs() > cutoff * top {
            let c: f64 = v.iter().zip(&ht).map(|(x, y)| x * y).sum();
            total += c * c / lam;
        }
    }
    total / n as f64
}

/// Dense mean-zero solution of `A u = h̃`.
pub fn dense_pinv_solve(a: &[f64], n: usize, h: &[f64], cutoff: f64) -> Vec<f64> {
    let mean = h.iter().sum::<f64>() / n as f64;
    let ht: Vec<f64> = h.iter().map(|x| x - mean).collect();
    let (values, vectors) = jacobi_eigen(a, n);
    let top = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut u = vec![0.0; n];
    for (lam, v) in values.iter().zip(&vectors) {
        if lam.abs() > cutoff * top {
            let c: f64 = v.iter().zip(&ht).map(|(x, y)| x * y).sum::<f64>() / lam;
            for (ui, vi) in u.iter_mut().zip(v) {
                *ui += c * vi;
            }
        }
    }
    u
}

/// Simpson's rule with `2k` panels on `[a, b]`.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, k: usize) -> f64 {
    let m = 2 * k;
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}
