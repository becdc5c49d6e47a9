//! Dense symmetric linear algebra: blocked Cholesky for log-determinants and
//! an eigenvalue-only symmetric solver (Householder tridiagonalization
//! followed by implicit QL with Wilkinson shifts).

use crate::error::{Error, Result};
use crate::par;

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_fn<F: Fn(usize, usize) -> f64 + Sync + Send>(n: usize, f: F) -> Self {
        let rows = par::map_indexed(n, |i| (0..n).map(|j| f(i, j)).collect::<Vec<_>>());
        Self { n, data: rows.concat() }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument("matrix rows must form a square".into()));
        }
        Ok(Self { n, data: rows.concat() })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        par::sum_indexed(self.data.len(), |k| self.data[k] * self.data[k])
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    /// `I + self`.
    pub fn shifted_identity(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            out.data[i * self.n + i] += 1.0;
        }
        out
    }

    /// Dense product `self · other`.
    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.n, other.n, "dimension mismatch");
        let n = self.n;
        let rows = par::map_indexed(n, |i| {
            let mut acc = vec![0.0; n];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a != 0.0 {
                    acc.iter_mut().zip(other.row(k)).for_each(|(c, &b)| *c += a * b);
                }
            }
            acc
        });
        DenseMatrix { n, data: rows.concat() }
    }

    /// `tr(self · other)`.
    pub fn trace_of_product(&self, other: &DenseMatrix) -> f64 {
        assert_eq!(self.n, other.n, "dimension mismatch");
        let n = self.n;
        par::sum_indexed(n, |i| (0..n).map(|k| self.get(i, k) * other.get(k, i)).sum())
    }
}

const BLOCK: usize = 64;

/// Lower Cholesky factor of a symmetric positive definite matrix, stored in
/// the lower triangle of a dense row-major buffer.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Left-looking blocked factorization; rows within a block column are
    /// independent and processed in parallel. Only the lower triangle of `a`
    /// is read.
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        let n = a.n;
        let mut l = a.data.clone();
        for jb in (0..n).step_by(BLOCK) {
            let je = (jb + BLOCK).min(n);
            let width = je - jb;
            // Block rows jb..je, left part 0..jb, copied so the update below
            // can borrow the trailing rows mutably.
            let panel: Vec<f64> = (jb..je).flat_map(|j| l[j * n..j * n + jb].to_vec()).collect();
            let trailing = &mut l[jb * n..];
            par::map_chunks_mut(trailing, n * BLOCK, |c, chunk| {
                for (r, row) in chunk.chunks_mut(n).enumerate() {
                    let i = jb + c * BLOCK + r;
                    let (left, right) = row.split_at_mut(jb);
                    for j in jb..je.min(i + 1) {
                        let pj = &panel[(j - jb) * jb..(j - jb + 1) * jb];
                        right[j - jb] -= dot(left, pj);
                    }
                }
            });
            // Diagonal block, sequential.
            for i in jb..je {
                for j in jb..=i {
                    let s = l[i * n + j] - dot(&l[i * n + jb..i * n + j], &l[j * n + jb..j * n + j]);
                    if j == i {
                        if s.is_nan() || s <= 0.0 || s.is_infinite() {
                            return Err(Error::NotPositiveDefinite { pivot: i, value: s });
                        }
                        l[i * n + i] = s.sqrt();
                    } else {
                        l[i * n + j] = s / l[j * n + j];
                    }
                }
            }
            if je == n {
                break;
            }
            let diag: Vec<f64> = (jb..je).flat_map(|j| l[j * n + jb..j * n + je].to_vec()).collect();
            let below = &mut l[je * n..];
            par::map_chunks_mut(below, n * BLOCK, |_, chunk| {
                for row in chunk.chunks_mut(n) {
                    let seg = &mut row[jb..je];
                    for j in 0..width {
                        let dj = &diag[j * width..j * width + width];
                        let s = seg[j] - dot(&seg[..j], &dj[..j]);
                        seg[j] = s / dj[j];
                    }
                }
            });
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.l[i * self.n + i]).collect()
    }

    /// `log det` of the factored matrix.
    pub fn log_det(&self) -> f64 {
        2.0 * self.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Entry `L(i, j)` (zero above the diagonal).
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.l[i * self.n + j]
        }
    }

    /// `L(i, 0..=i)`.
    pub fn lower_row(&self, i: usize) -> &[f64] {
        &self.l[i * self.n..i * self.n + i + 1]
    }

    /// `L z` for a vector of length `n`.
    pub fn lower_mul(&self, z: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| dot(self.lower_row(i), &z[..=i])).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorize.
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        for t in 0..4 {
            acc[t] += a[4 * k + t] * b[4 * k + t];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

struct Reflector {
    v: Vec<f64>,
    beta: f64,
    alpha: f64,
}

/// Householder reflector `H = I - β v vᵀ` with `H x = α e₀`.
fn reflector(x: &[f64]) -> Reflector {
    let sigma = x.iter().map(|t| t * t).sum::<f64>().sqrt();
    let mut v = x.to_vec();
    if sigma == 0.0 {
        return Reflector { v, beta: 0.0, alpha: 0.0 };
    }
    let alpha = if x[0] >= 0.0 { -sigma } else { sigma };
    v[0] -= alpha;
    let beta = 1.0 / (sigma * (sigma + x[0].abs()));
    Reflector { v, beta, alpha }
}

const TRIDIAG_ROWS: usize = 32;

/// Reduces a symmetric matrix to tridiagonal form. Returns the diagonal and
/// the off-diagonal (`e[i]` couples `i` and `i + 1`; `e[n-1] = 0`).
///
/// Works on the upper triangle. Each step applies the rank-two update to the
/// trailing block and, while each row is hot, accumulates the next step's
/// matrix-vector product, so the trailing block is streamed once per step.
pub fn tridiagonalize(a: &DenseMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = a.n;
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    if n == 0 {
        return (d, e);
    }
    let mut w = a.data.clone();
    if n == 1 {
        d[0] = w[0];
        return (d, e);
    }
    let mut h = reflector(&w[1..n]);
    let mut p = upper_symv(&w, n, 1, &h.v);
    p.iter_mut().for_each(|x| *x *= h.beta);

    for k in 0..n - 1 {
        d[k] = w[k * n + k];
        e[k] = h.alpha;
        let m = n - k - 1;
        let half_k = 0.5 * h.beta * dot(&p, &h.v);
        let wv: Vec<f64> = p.iter().zip(&h.v).map(|(pi, vi)| pi - half_k * vi).collect();
        let v = &h.v;

        // Row k+1 (local row 0) first: the next reflector comes from it.
        let base = k + 1;
        {
            let row = &mut w[base * n + base..(base + 1) * n];
            let (v0, w0) = (v[0], wv[0]);
            for (c, x) in row.iter_mut().enumerate() {
                *x -= v0 * wv[c] + w0 * v[c];
            }
        }
        if m == 1 {
            d[k + 1] = w[base * n + base];
            break;
        }
        let next = reflector(&w[base * n + base + 1..(base + 1) * n]);
        let nv = &next.v;
        let m2 = m - 1;

        // Remaining rows: update, then fold into the next product.
        let rest = &mut w[(base + 1) * n..];
        let partials = par::map_chunks_mut(rest, TRIDIAG_ROWS * n, |c, chunk| {
            let mut acc = vec![0.0; m2];
            for (rr, row) in chunk.chunks_mut(n).enumerate() {
                let r = 1 + c * TRIDIAG_ROWS + rr; // local row in this step
                let gi = base + r;
                let seg = &mut row[gi..];
                let (vr, wr) = (v[r], wv[r]);
                for (cc, x) in seg.iter_mut().enumerate() {
                    *x -= vr * wv[r + cc] + wr * v[r + cc];
                }
                let r2 = r - 1; // local row in the next step
                acc[r2] += dot(seg, &nv[r2..]);
                let nvr = nv[r2];
                if nvr != 0.0 {
                    axpy(nvr, &seg[1..], &mut acc[r2 + 1..]);
                }
            }
            acc
        });
        let mut np = vec![0.0; m2];
        for part in partials {
            np.iter_mut().zip(&part).for_each(|(a, b)| *a += b);
        }
        np.iter_mut().for_each(|x| *x *= next.beta);
        p = np;
        h = next;
    }
    (d, e)
}

/// `B v` where `B` is the trailing block starting at `start`, upper-stored.
fn upper_symv(w: &[f64], n: usize, start: usize, v: &[f64]) -> Vec<f64> {
    let m = n - start;
    let mut acc = vec![0.0; m];
    for r in 0..m {
        let gi = start + r;
        let seg = &w[gi * n + gi..(gi + 1) * n];
        acc[r] += dot(seg, &v[r..]);
        axpy(v[r], &seg[1..], &mut acc[r + 1..]);
    }
    acc
}

/// Eigenvalues of a symmetric tridiagonal matrix by implicit QL with
/// Wilkinson shifts. `e[i]` couples `i` and `i + 1`. Returns the eigenvalues
/// in ascending order.
pub fn tridiagonal_eigenvalues(mut d: Vec<f64>, mut e: Vec<f64>) -> Result<Vec<f64>> {
    let n = d.len();
    assert_eq!(e.len(), n, "off-diagonal must be padded to length n");
    if n > 0 {
        e[n - 1] = 0.0;
    }
    for l in 0..n {
        let mut iterations = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iterations += 1;
            if iterations > 60 {
                return Err(Error::ConvergenceFailure { index: l });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// All eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: &DenseMatrix) -> Result<Vec<f64>> {
    let (d, e) = tridiagonalize(a);
    tridiagonal_eigenvalues(d, e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_spd(n: usize) -> DenseMatrix {
        DenseMatrix::from_fn(n, |i, j| {
            let x = (i as f64 - j as f64).abs();
            (-0.3 * x).exp() + if i == j { 0.5 } else { 0.0 } + 0.01 * ((i % 7) * (j % 7)) as f64
        })
    }

    fn symmetrize(a: DenseMatrix) -> DenseMatrix {
        let n = a.dim();
        DenseMatrix::from_fn(n, |i, j| 0.5 * (a.get(i, j) + a.get(j, i)))
    }

    #[test]
    fn cholesky_reconstructs_the_matrix() {
        for n in [1, 2, 5, 63, 64, 65, 150] {
            let a = symmetrize(sample_spd(n));
            let ch = Cholesky::factor(&a).unwrap();
            for i in 0..n {
                for j in 0..=i {
                    let s: f64 = (0..=j).map(|k| ch.entry(i, k) * ch.entry(j, k)).sum();
                    assert!((s - a.get(i, j)).abs() < 1e-12, "n={n} ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(Cholesky::factor(&a), Err(Error::NotPositiveDefinite { pivot: 1, .. })));
    }

    #[test]
    fn eigenvalues_of_small_cases() {
        let one = DenseMatrix::from_rows(&[vec![2.5]]).unwrap();
        assert_eq!(symmetric_eigenvalues(&one).unwrap(), vec![2.5]);
        let two = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let ev = symmetric_eigenvalues(&two).unwrap();
        assert!((ev[0] - 1.0).abs() < 1e-15 && (ev[1] - 3.0).abs() < 1e-15);
        let scaled = DenseMatrix::from_fn(7, |i, j| if i == j { 3.0 } else { 0.0 });
        assert!(symmetric_eigenvalues(&scaled).unwrap().iter().all(|&x| x == 3.0));
    }

    #[test]
    fn eigenvalues_match_nalgebra() {
        for n in [3, 17, 40, 97] {
            let a = symmetrize(sample_spd(n));
            let ours = symmetric_eigenvalues(&a).unwrap();
            let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a.get(i, j));
            let mut theirs: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
            theirs.sort_by(f64::total_cmp);
            for (x, y) in ours.iter().zip(&theirs) {
                assert!((x - y).abs() < 1e-11, "n={n}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn trace_and_frobenius_are_spectral_invariants() {
        let a = symmetrize(sample_spd(33));
        let ev = symmetric_eigenvalues(&a).unwrap();
        assert!((ev.iter().sum::<f64>() - a.trace()).abs() < 1e-11);
        assert!((ev.iter().map(|x| x * x).sum::<f64>() - a.frobenius_sq()).abs() < 1e-10);
    }

    #[test]
    fn matmul_against_naive() {
        let a = sample_spd(9);
        let b = symmetrize(sample_spd(9));
        let c = a.matmul(&b);
        for i in 0..9 {
            for j in 0..9 {
                let s: f64 = (0..9).map(|k| a.get(i, k) * b.get(k, j)).sum();
                assert!((c.get(i, j) - s).abs() < 1e-13);
            }
        }
        assert!((a.trace_of_product(&b) - c.trace()).abs() < 1e-12);
    }
}
