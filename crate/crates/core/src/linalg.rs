//! Dense symmetric storage and the small amount of linear algebra built on it.

use serde::{Deserialize, Serialize};

/// Symmetric `n x n` matrix stored as its packed upper triangle (diagonal included).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * (n + 1) / 2] }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    /// Builds from a full row-major matrix; errors if it is not symmetric.
    pub fn from_dense(n: usize, full: &[f64]) -> Option<Self> {
        if full.len() != n * n {
            return None;
        }
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (full[i * n + j], full[j * n + i]);
                if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                    return None;
                }
            }
        }
        Some(Self::from_fn(n, |i, j| full[i * n + j]))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        // sum_{r<i} (n - r) + (j - i)
        i * self.n - i * i.saturating_sub(1) / 2 + (j - i)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.index(i, j);
        self.data[k] = v;
    }

    /// Entries `(i, j)` for `j >= i`.
    #[inline]
    pub fn upper_row(&self, i: usize) -> &[f64] {
        let s = self.index(i, i);
        &self.data[s..s + self.n - i]
    }

    pub fn packed(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { n: self.n, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// `y = scale * A x`.
    pub fn matvec_scaled(&self, x: &[f64], scale: f64, y: &mut [f64]) {
        let n = self.n;
        assert_eq!(x.len(), n);
        assert_eq!(y.len(), n);
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let row = self.upper_row(i);
            let xi = x[i];
            let mut acc = row[0] * xi;
            for (k, &a) in row[1..].iter().enumerate() {
                let j = i + 1 + k;
                acc += a * x[j];
                y[j] += a * xi;
            }
            y[i] += acc;
        }
        if scale != 1.0 {
            y.iter_mut().for_each(|v| *v *= scale);
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_scaled(x, 1.0, &mut y);
        y
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = self.get(i, j);
                out[i * n + j] = v;
                out[j * n + i] = v;
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Conjugate gradients for `(I - s A) x = b` with `A` symmetric.
///
/// Returns `(x, iterations, converged)`; the stopping rule is on the
/// Euclidean residual relative to `|b|`.
pub fn cg_shifted(a: &SymMatrix, s: f64, b: &[f64], tol: f64, max_iter: usize) -> (Vec<f64>, usize, bool) {
    let n = a.n();
    let apply = |v: &[f64], out: &mut [f64]| {
        a.matvec_scaled(v, s, out);
        for i in 0..n {
            out[i] = v[i] - out[i];
        }
    };
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let bnorm = norm2(b).max(f64::MIN_POSITIVE);
    let mut rr = dot(&r, &r);
    if rr.sqrt() <= tol * bnorm {
        return (x, 0, true);
    }
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return (x, it, false);
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= tol * bnorm {
            return (x, it, true);
        }
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    (x, max_iter, false)
}

/// Dense LU solve of `(I - s A) x = b`.
pub fn lu_shifted(a: &SymMatrix, s: f64, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.n();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - s * a.get(i, j));
    let rhs = nalgebra::DVector::from_column_slice(b);
    m.lu().solve(&rhs).map(|v| v.as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packed_indexing_roundtrip() {
        let n = 5;
        let m = SymMatrix::from_fn(n, |i, j| (10 * i + j) as f64);
        for i in 0..n {
            for j in i..n {
                assert_eq!(m.get(i, j), (10 * i + j) as f64);
                assert_eq!(m.get(j, i), (10 * i + j) as f64);
            }
            assert_eq!(m.upper_row(i).len(), n - i);
            assert_eq!(m.upper_row(i)[0], (11 * i) as f64);
        }
    }

    #[test]
    fn matvec_matches_dense() {
        let n = 6;
        let m = SymMatrix::from_fn(n, |i, j| 1.0 + (i * j) as f64 * 0.5 + (i + j) as f64);
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let d = m.to_dense();
        let y = m.matvec(&x);
        for i in 0..n {
            let e: f64 = (0..n).map(|j| d[i * n + j] * x[j]).sum();
            assert!((e - y[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cg_and_lu_agree() {
        let n = 30;
        let m = SymMatrix::from_fn(n, |i, j| 1.0 / (1.0 + (i as f64 - j as f64).abs()));
        let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 0.01).collect();
        let s = 0.05;
        let (x, _, ok) = cg_shifted(&m, s, &b, 1e-13, 1000);
        assert!(ok);
        let y = lu_shifted(&m, s, &b).unwrap();
        for i in 0..n {
            assert!((x[i] - y[i]).abs() < 1e-10);
        }
    }
}
