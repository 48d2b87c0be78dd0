//! Symmetric banded matrices and their Cholesky factorization.

use crate::error::{Error, Result};

/// Lower band of a symmetric matrix: `band[k * (bw + 1) + d] = A[k][k − d]`.
#[derive(Debug, Clone)]
pub struct SymBanded {
    n: usize,
    bw: usize,
    band: Vec<f64>,
}

impl SymBanded {
    pub fn zeros(n: usize, bw: usize) -> Self {
        SymBanded {
            n,
            bw,
            band: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Entry `A[r][c]`; zero outside the band.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (r, c) = if r >= c { (r, c) } else { (c, r) };
        let d = r - c;
        if d > self.bw {
            0.0
        } else {
            self.band[r * (self.bw + 1) + d]
        }
    }

    /// Set `A[r][c] = A[c][r] = value`; the entry must lie inside the band.
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        let (r, c) = if r >= c { (r, c) } else { (c, r) };
        let d = r - c;
        assert!(
            d <= self.bw,
            "entry ({r}, {c}) outside bandwidth {}",
            self.bw
        );
        self.band[r * (self.bw + 1) + d] = value;
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let w = self.bw + 1;
        y.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..self.n {
            let row = &self.band[r * w..(r + 1) * w];
            let mut acc = row[0] * x[r];
            let dmax = self.bw.min(r);
            for d in 1..=dmax {
                let c = r - d;
                acc += row[d] * x[c];
                y[c] += row[d] * x[r];
            }
            y[r] += acc;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    /// In-place banded Cholesky `A = L Lᵀ`.
    pub fn cholesky(&self) -> Result<BandedCholesky> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        let mut l = self.band.clone();
        for k in 0..n {
            // column-oriented: compute row k of L from previous rows
            let jmin = k.saturating_sub(bw);
            for j in jmin..k {
                // L[k][j] = (A[k][j] − Σ_{p<j} L[k][p] L[j][p]) / L[j][j]
                let pmin = jmin.max(j.saturating_sub(bw));
                let mut s = l[k * w + (k - j)];
                for p in pmin..j {
                    s -= l[k * w + (k - p)] * l[j * w + (j - p)];
                }
                l[k * w + (k - j)] = s / l[j * w];
            }
            let mut d = l[k * w];
            for p in jmin..k {
                let v = l[k * w + (k - p)];
                d -= v * v;
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::SolverFailure {
                    what: format!("banded Cholesky pivot {k} is {d:.3e}"),
                    residual: f64::NAN,
                });
            }
            l[k * w] = d.sqrt();
        }
        Ok(BandedCholesky { n, bw, l })
    }
}

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let w = self.bw + 1;
        // L y = b
        for k in 0..self.n {
            let mut s = x[k];
            for p in k.saturating_sub(self.bw)..k {
                s -= self.l[k * w + (k - p)] * x[p];
            }
            x[k] = s / self.l[k * w];
        }
        // Lᵀ x = y
        for k in (0..self.n).rev() {
            let mut s = x[k];
            let pmax = (k + self.bw).min(self.n - 1);
            for p in k + 1..=pmax {
                s -= self.l[p * w + (p - k)] * x[p];
            }
            x[k] = s / self.l[k * w];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, bw: usize, seed: u64) -> (SymBanded, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = SymBanded::zeros(n, bw);
        let mut dense = DMatrix::zeros(n, n);
        for r in 0..n {
            for d in 1..=bw.min(r) {
                let v = rng.random_range(-1.0..1.0);
                a.set(r, r - d, v);
                dense[(r, r - d)] = v;
                dense[(r - d, r)] = v;
            }
        }
        for r in 0..n {
            let v = 2.0 * bw as f64 + 1.0 + rng.random_range(0.0..1.0);
            a.set(r, r, v);
            dense[(r, r)] = v;
        }
        (a, dense)
    }

    #[test]
    fn matvec_matches_dense() {
        let (a, d) = random_spd(23, 4, 7);
        let x: Vec<f64> = (0..23).map(|i| (i as f64).sin()).collect();
        let y = a.mul(&x);
        let yd = &d * DVector::from_vec(x);
        for (p, q) in y.iter().zip(yd.iter()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_solves_system() {
        let (a, d) = random_spd(40, 6, 9);
        let b: Vec<f64> = (0..40).map(|i| (i as f64 * 0.3).cos()).collect();
        let x = a.cholesky().unwrap().solve(&b);
        let r = &d * DVector::from_vec(x) - DVector::from_vec(b);
        assert!(r.amax() < 1e-12);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let mut a = SymBanded::zeros(3, 1);
        a.set(0, 0, 1.0);
        a.set(1, 1, -1.0);
        a.set(2, 2, 1.0);
        assert!(matches!(a.cholesky(), Err(Error::SolverFailure { .. })));
    }
}
