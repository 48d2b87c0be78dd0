//! Direct Poisson solvers for the separable 5-point operators on uniform
//! grids. Each 1D second-difference matrix is diagonalized once by an
//! explicit orthogonal basis (cosines for Neumann, sines for Dirichlet, real
//! Fourier modes for periodic), so a 2D solve is four dense products.

use std::f64::consts::PI;

use nalgebra::DMatrix;

/// Boundary closure of the 1D second-difference matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Closure {
    /// Cell-centered samples with zero-flux ends.
    Neumann,
    /// Interior nodes with zero Dirichlet ends.
    Dirichlet,
    Periodic,
}

/// Solver for `(T ⊗ I + I ⊗ T) x = b` where `T` is the 1D negative second
/// difference (positive semidefinite) scaled by `1/h²`.
#[derive(Debug, Clone)]
pub struct SeparablePoisson {
    len: usize,
    basis: DMatrix<f64>,
    eig: Vec<f64>,
    closure: Closure,
}

impl SeparablePoisson {
    /// `len` unknowns per direction, spacing `h`.
    pub fn new(closure: Closure, len: usize, h: f64) -> Self {
        let mut basis = DMatrix::zeros(len, len);
        let mut eig = vec![0.0; len];
        let s = 4.0 / (h * h);
        let nf = len as f64;
        match closure {
            Closure::Neumann => {
                for k in 0..len {
                    let norm = if k == 0 {
                        (1.0 / nf).sqrt()
                    } else {
                        (2.0 / nf).sqrt()
                    };
                    for i in 0..len {
                        basis[(i, k)] = norm * (PI * k as f64 * (i as f64 + 0.5) / nf).cos();
                    }
                    eig[k] = s * (PI * k as f64 / (2.0 * nf)).sin().powi(2);
                }
            }
            Closure::Dirichlet => {
                let m = nf + 1.0;
                let norm = (2.0 / m).sqrt();
                for k in 0..len {
                    for i in 0..len {
                        basis[(i, k)] = norm * (PI * (k + 1) as f64 * (i + 1) as f64 / m).sin();
                    }
                    eig[k] = s * (PI * (k + 1) as f64 / (2.0 * m)).sin().powi(2);
                }
            }
            Closure::Periodic => {
                // columns: 1, cos, sin, ..., Nyquist
                let mut col = 0;
                for k in 0..=len / 2 {
                    let lam = s * (PI * k as f64 / nf).sin().powi(2);
                    let theta = 2.0 * PI * k as f64 / nf;
                    if k == 0 || (len.is_multiple_of(2) && k == len / 2) {
                        let norm = (1.0 / nf).sqrt();
                        for i in 0..len {
                            basis[(i, col)] = norm * (theta * i as f64).cos();
                        }
                        eig[col] = lam;
                        col += 1;
                    } else {
                        let norm = (2.0 / nf).sqrt();
                        for i in 0..len {
                            basis[(i, col)] = norm * (theta * i as f64).cos();
                            basis[(i, col + 1)] = norm * (theta * i as f64).sin();
                        }
                        eig[col] = lam;
                        eig[col + 1] = lam;
                        col += 2;
                    }
                }
                debug_assert_eq!(col, len);
            }
        }
        SeparablePoisson {
            len,
            basis,
            eig,
            closure,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Whether the operator has the constant null space.
    pub fn is_singular(&self) -> bool {
        self.closure != Closure::Dirichlet
    }

    fn to_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        // x is row-major with the first index fastest, i.e. x[j*len + i];
        // column-major DMatrix with (i, j) indexing reads it directly.
        DMatrix::from_column_slice(self.len, self.len, x)
    }

    /// Solve `L x = b` with `L` the positive 2D operator. For singular
    /// closures the mean of `b` is discarded and the zero-mean solution is
    /// returned.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.len * self.len);
        let bm = self.to_matrix(b);
        let mut hat = self.basis.transpose() * bm * &self.basis;
        for j in 0..self.len {
            for i in 0..self.len {
                let d = self.eig[i] + self.eig[j];
                hat[(i, j)] = if d.abs() < 1e-300 {
                    0.0
                } else {
                    hat[(i, j)] / d
                };
            }
        }
        let x = &self.basis * hat * self.basis.transpose();
        x.as_slice().to_vec()
    }

    /// Apply the operator `L x` in the same layout (reference for tests).
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let xm = self.to_matrix(x);
        let mut hat = self.basis.transpose() * xm * &self.basis;
        for j in 0..self.len {
            for i in 0..self.len {
                hat[(i, j)] *= self.eig[i] + self.eig[j];
            }
        }
        (&self.basis * hat * self.basis.transpose())
            .as_slice()
            .to_vec()
    }
}
