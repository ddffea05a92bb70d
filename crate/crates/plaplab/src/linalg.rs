//! Symmetric banded matrices with Cholesky factorization. The structured
//! meshes built here have small bandwidth under row-major node numbering, so
//! a dense-band factorization is both fast and robust for the Newton systems.

/// Symmetric positive-definite matrix stored as a lower band:
/// `data[i * (bw + 1) + d] = A[i, i - d]` for `0 ≤ d ≤ bw`.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> BandMatrix {
        BandMatrix {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    /// Accumulate `A[i, j] += v` (symmetric; only the lower triangle is kept).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let d = r - c;
        debug_assert!(d <= self.bw, "entry ({i},{j}) outside band {}", self.bw);
        self.data[r * (self.bw + 1) + d] += v;
    }

    #[cfg(test)]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let d = r - c;
        if d > self.bw {
            0.0
        } else {
            self.data[r * (self.bw + 1) + d]
        }
    }

    #[cfg(test)]
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let a = self.get(i, j);
                y[i] += a * x[j];
                if i != j {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// Cholesky factorization `A = L Lᵀ`; `None` if a pivot is not positive.
    pub fn cholesky(&self) -> Option<BandCholesky> {
        let bw = self.bw;
        let mut l = self.data.clone();
        let idx = |i: usize, j: usize| i * (bw + 1) + (i - j);
        for i in 0..self.n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut sum = l[idx(i, j)];
                let klo = lo.max(j.saturating_sub(bw));
                for k in klo..j {
                    sum -= l[idx(i, k)] * l[idx(j, k)];
                }
                if i == j {
                    if !(sum > 0.0) || !sum.is_finite() {
                        return None;
                    }
                    l[idx(i, j)] = sum.sqrt();
                } else {
                    l[idx(i, j)] = sum / l[idx(j, j)];
                }
            }
        }
        Some(BandCholesky {
            n: self.n,
            bw,
            data: l,
        })
    }
}

/// Lower-banded Cholesky factor.
#[derive(Clone, Debug)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandCholesky {
    /// Solve `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let bw = self.bw;
        let idx = |i: usize, j: usize| i * (bw + 1) + (i - j);
        let mut x = b.to_vec();
        // forward: L y = b
        for i in 0..self.n {
            let lo = i.saturating_sub(bw);
            let mut sum = x[i];
            for j in lo..i {
                sum -= self.data[idx(i, j)] * x[j];
            }
            x[i] = sum / self.data[idx(i, i)];
        }
        // backward: Lᵀ x = y
        for i in (0..self.n).rev() {
            let hi = (i + bw).min(self.n - 1);
            let mut sum = x[i];
            for j in (i + 1)..=hi {
                sum -= self.data[idx(j, i)] * x[j];
            }
            x[i] = sum / self.data[idx(i, i)];
        }
        x
    }

    /// `bᵀ A⁻¹ b`, nonnegative for SPD `A`.
    pub fn inverse_quadratic_form(&self, b: &[f64]) -> f64 {
        let x = self.solve(b);
        b.iter().zip(&x).map(|(u, v)| u * v).sum()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_solve() {
        // discrete 1D Laplacian, n = 5, h = 1/6: A u = b with known inverse action
        let n = 5;
        let mut a = BandMatrix::zeros(n, 1);
        for i in 0..n {
            a.add(i, i, 2.0);
            if i > 0 {
                a.add(i, i - 1, -1.0);
            }
        }
        let b = vec![1.0; n];
        let chol = a.cholesky().unwrap();
        let x = chol.solve(&b);
        let back = a.matvec(&x);
        for (u, v) in back.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
        // u_i = i(n+1-i)/2 for the unit second-difference system
        for (i, &xi) in x.iter().enumerate() {
            let expect = (i + 1) as f64 * (n - i) as f64 / 2.0;
            assert!((xi - expect).abs() < 1e-12, "x[{i}] = {xi} vs {expect}");
        }
    }

    #[test]
    fn wider_band_matches_matvec() {
        let n = 12;
        let bw = 3;
        let mut a = BandMatrix::zeros(n, bw);
        for i in 0..n {
            a.add(i, i, 4.0 + i as f64 * 0.1);
            for d in 1..=bw {
                if i >= d {
                    a.add(i, i - d, -0.3 / d as f64);
                }
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let x = a.cholesky().unwrap().solve(&b);
        let r = a.matvec(&x);
        for (u, v) in r.iter().zip(&b) {
            assert!((u - v).abs() < 1e-11);
        }
        let q = a.cholesky().unwrap().inverse_quadratic_form(&b);
        assert!(q > 0.0);
        assert!((q - dot(&b, &x)).abs() < 1e-12);
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let mut a = BandMatrix::zeros(3, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, -1.0);
        a.add(2, 2, 1.0);
        assert!(a.cholesky().is_none());
    }
}
