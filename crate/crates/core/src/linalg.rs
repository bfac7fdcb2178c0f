//! Dense symmetric eigensolvers.
//!
//! Two routes are provided. [`full_eigen`] wraps nalgebra's implicit QR and
//! returns every eigenpair sorted ascending. [`lowest_eigenpairs`] computes
//! only the `k` lowest eigenpairs through Householder tridiagonalization,
//! Sturm-sequence bisection and inverse iteration, which is what the
//! per-well Hartree problems need (a handful of states out of a few hundred
//! grid points).
//!
//! Both routes fix the eigenvector sign so the entry of largest magnitude is
//! positive.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug)]
pub struct Eigenpairs {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Eigenvectors as columns, in the same order as `values`.
    pub vectors: DMatrix<f64>,
}

/// Flips the sign of every column so that its largest-magnitude entry is
/// positive. Ties resolve to the lowest row index.
pub fn fix_column_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for &x in col.iter() {
            if x.abs() > best + 1e-14 * best {
                best = x.abs();
                sign = x.signum();
            }
        }
        if sign < 0.0 {
            col.neg_mut();
        }
    }
}

/// Full eigendecomposition of a symmetric matrix, sorted ascending, signs
/// fixed. Returns `None` if the matrix contains non-finite entries.
pub fn full_eigen(a: &DMatrix<f64>) -> Option<Eigenpairs> {
    if a.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let n = a.nrows();
    let eig = a.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    fix_column_signs(&mut vectors);
    Some(Eigenpairs { values, vectors })
}

/// Householder reduction of a symmetric matrix to tridiagonal form.
///
/// Works on the lower triangle of a row-major copy. The reflectors are kept
/// so that eigenvectors of the tridiagonal matrix can be mapped back.
struct Tridiagonal {
    diag: Vec<f64>,
    off: Vec<f64>,
    /// Unit Householder vectors; `reflectors[k]` acts on indices `k+1..n`.
    reflectors: Vec<Vec<f64>>,
}

impl Tridiagonal {
    fn new(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        // row-major lower triangle: a[i * n + j], j <= i
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                m[i * n + j] = a[(i, j)];
            }
        }
        let mut off = vec![0.0; n.saturating_sub(1)];
        let mut reflectors = Vec::with_capacity(n.saturating_sub(2));
        let mut p = vec![0.0; n];
        for k in 0..n.saturating_sub(2) {
            let len = n - k - 1;
            let mut v: Vec<f64> = (k + 1..n).map(|i| m[i * n + k]).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                off[k] = 0.0;
                reflectors.push(vec![0.0; len]);
                continue;
            }
            let alpha = if v[0] > 0.0 { -norm } else { norm };
            v[0] -= alpha;
            let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if vnorm == 0.0 {
                off[k] = alpha;
                reflectors.push(vec![0.0; len]);
                continue;
            }
            v.iter_mut().for_each(|x| *x /= vnorm);
            off[k] = alpha;

            // p = A22 v using the lower triangle
            let p = &mut p[..len];
            p.iter_mut().for_each(|x| *x = 0.0);
            for r in 0..len {
                let row = (k + 1 + r) * n + k + 1;
                let vr = v[r];
                let mut acc = 0.0;
                for c in 0..r {
                    let a_rc = m[row + c];
                    acc += a_rc * v[c];
                    p[c] += a_rc * vr;
                }
                p[r] += acc + m[row + r] * vr;
            }
            let vp: f64 = v.iter().zip(p.iter()).map(|(a, b)| a * b).sum();
            // w = 2p - 2(v.p)v ; A22 -= v w^T + w v^T
            let w: Vec<f64> = p
                .iter()
                .zip(v.iter())
                .map(|(pi, vi)| 2.0 * pi - 2.0 * vp * vi)
                .collect();
            for r in 0..len {
                let row = (k + 1 + r) * n + k + 1;
                let (vr, wr) = (v[r], w[r]);
                let dst = &mut m[row..row + r + 1];
                for c in 0..=r {
                    dst[c] -= vr * w[c] + wr * v[c];
                }
            }
            reflectors.push(v);
        }
        if n >= 2 {
            off[n - 2] = m[(n - 1) * n + n - 2];
        }
        let diag = (0..n).map(|i| m[i * n + i]).collect();
        Self { diag, off, reflectors }
    }

    /// Number of eigenvalues strictly below `x` (Sturm count).
    fn count_below(&self, x: f64) -> usize {
        let n = self.diag.len();
        let mut count = 0;
        let mut q = self.diag[0] - x;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..n {
            let denom = if q.abs() < f64::MIN_POSITIVE.sqrt() {
                f64::MIN_POSITIVE.sqrt().copysign(q)
            } else {
                q
            };
            q = self.diag[i] - x - self.off[i - 1] * self.off[i - 1] / denom;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.diag.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 } + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// `index`-th smallest eigenvalue by bisection.
    fn eigenvalue(&self, index: usize, lo: f64, hi: f64) -> f64 {
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if self.count_below(mid) > index {
                b = mid;
            } else {
                a = mid;
            }
        }
        0.5 * (a + b)
    }

    /// Inverse iteration on `T - shift I` with partial pivoting.
    fn inverse_iteration(&self, shift: f64, previous: &[Vec<f64>], scale: f64) -> Vec<f64> {
        let n = self.diag.len();
        // LU with partial pivoting of a tridiagonal matrix: U has two
        // superdiagonals.
        let eps = f64::EPSILON * scale;
        let mut d: Vec<f64> = self.diag.iter().map(|x| x - shift).collect();
        let mut du = self.off.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut dl = self.off.clone();
        let mut ipiv = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = eps;
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -fact;
                }
                ipiv[i] = true;
            }
        }
        if n > 0 && d[n - 1] == 0.0 {
            d[n - 1] = eps;
        }
        for x in d.iter_mut() {
            if x.abs() < eps {
                *x = eps.copysign(*x);
            }
        }
        let solve = |b: &mut Vec<f64>| {
            for i in 0..n.saturating_sub(1) {
                if ipiv[i] {
                    b.swap(i, i + 1);
                }
                b[i + 1] -= dl[i] * b[i];
            }
            for i in (0..n).rev() {
                let mut s = b[i];
                if i + 1 < n {
                    s -= du[i] * b[i + 1];
                }
                if i + 2 < n {
                    s -= du2[i] * b[i + 2];
                }
                b[i] = s / d[i];
            }
        };
        // deterministic, non-degenerate starting vector
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i as f64) * 0.754_877_666).sin()).collect();
        for _ in 0..4 {
            solve(&mut x);
            for p in previous {
                let dot: f64 = x.iter().zip(p.iter()).map(|(a, b)| a * b).sum();
                x.iter_mut().zip(p.iter()).for_each(|(a, b)| *a -= dot * b);
            }
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            x.iter_mut().for_each(|v| *v /= norm);
        }
        x
    }

    fn back_transform(&self, z: &mut [f64]) {
        for (k, v) in self.reflectors.iter().enumerate().rev() {
            let seg = &mut z[k + 1..];
            let dot: f64 = seg.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            seg.iter_mut().zip(v.iter()).for_each(|(a, b)| *a -= 2.0 * dot * b);
        }
    }
}

/// The `k` lowest eigenpairs of a dense symmetric matrix.
///
/// Eigenvectors belonging to nearly degenerate eigenvalues are
/// re-orthogonalized against each other. Returns `None` on non-finite input.
pub fn lowest_eigenpairs(a: &DMatrix<f64>, k: usize) -> Option<Eigenpairs> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    if a.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let k = k.min(n);
    if n <= 2 {
        let mut full = full_eigen(a)?;
        full.values.truncate(k);
        full.vectors = full.vectors.columns(0, k).into_owned();
        return Some(full);
    }
    let tri = Tridiagonal::new(a);
    let (lo, hi) = tri.gershgorin();
    let scale = lo.abs().max(hi.abs()).max(1.0);
    let pad = 1e-12 * scale;
    let values: Vec<f64> = (0..k).map(|i| tri.eigenvalue(i, lo - pad, hi + pad)).collect();

    let cluster_tol = 1e-7 * scale;
    let mut tri_vectors: Vec<Vec<f64>> = Vec::with_capacity(k);
    for i in 0..k {
        let cluster: Vec<Vec<f64>> = (0..i)
            .filter(|&j| (values[i] - values[j]).abs() < cluster_tol)
            .map(|j| tri_vectors[j].clone())
            .collect();
        // nudge degenerate shifts apart so the factorization differs
        let shift = values[i] + cluster.len() as f64 * 1e-3 * cluster_tol;
        tri_vectors.push(tri.inverse_iteration(shift, &cluster, scale));
    }
    let mut vectors = DMatrix::zeros(n, k);
    for (i, z) in tri_vectors.iter_mut().enumerate() {
        tri.back_transform(z);
        vectors.set_column(i, &DVector::from_column_slice(z));
    }
    fix_column_signs(&mut vectors);
    Some(Eigenpairs { values, vectors })
}
