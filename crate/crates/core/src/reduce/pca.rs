use alloc::vec::Vec;

use super::{Diagnostics, Embedding, EmbeddingMethod};
use crate::error::{contract, Result};
use crate::matrix::{symmetric_eigen, Matrix};

/// A fitted principal component projection.
#[derive(Debug, Clone)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Kept components as orthonormal rows, strongest first.
    pub components: Matrix,
    /// Every covariance eigenvalue, descending (sample covariance, N-1).
    pub eigenvalues: Vec<f64>,
    pub embedding: Embedding,
}

impl PcaModel {
    /// Maps projected coordinates back into the input space.
    pub fn reconstruct(&self) -> Matrix {
        let coords = &self.embedding.coords;
        let mut out = coords.matmul(&self.components).expect("shapes agree");
        for i in 0..out.rows() {
            for (v, m) in out.row_mut(i).iter_mut().zip(&self.mean) {
                *v += m;
            }
        }
        out
    }
}

/// Projects column-centered `x` onto the top `out_dim` covariance
/// eigenvectors. Each component is sign-fixed so its largest-magnitude
/// entry is positive.
pub fn pca(x: &Matrix, out_dim: usize) -> Result<PcaModel> {
    let (n, d) = (x.rows(), x.cols());
    if n < 2 {
        return Err(contract("pca needs at least two rows"));
    }
    if out_dim > d || out_dim == 0 {
        return Err(contract("pca output dimension must be in 1..=columns"));
    }
    x.check_finite()?;
    let mut mean = alloc::vec![0.0; d];
    for row in x.iter_rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut centered = x.clone();
    for i in 0..n {
        for (v, m) in centered.row_mut(i).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let mut cov = Matrix::zeros(d, d);
    for row in centered.iter_rows() {
        for a in 0..d {
            let ra = row[a];
            if ra == 0.0 {
                continue;
            }
            for b in a..d {
                cov.set(a, b, cov.get(a, b) + ra * row[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov.get(a, b) / (n - 1) as f64;
            cov.set(a, b, v);
            cov.set(b, a, v);
        }
    }
    let eig = symmetric_eigen(&cov)?;
    let mut components = Matrix::zeros(out_dim, d);
    for c in 0..out_dim {
        let v = eig.vectors.row(c);
        let mut lead = 0;
        for k in 1..d {
            if v[k].abs() > v[lead].abs() {
                lead = k;
            }
        }
        let sign = if v[lead] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..d {
            components.set(c, k, sign * v[k]);
        }
    }
    let coords = centered.matmul(&components.transpose())?;
    let eigenvalues: Vec<f64> = eig.values.iter().map(|v| v.max(0.0)).collect();
    let embedding = Embedding {
        coords,
        method: EmbeddingMethod::Pca,
        diagnostics: Diagnostics::Pca {
            explained_variance: eigenvalues[..out_dim].to_vec(),
        },
    };
    Ok(PcaModel {
        mean,
        components,
        eigenvalues,
        embedding,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_on_diagonal_line() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [-3.0, -3.0]]).unwrap();
        let p = pca(&x, 2).unwrap();
        let h = core::f64::consts::FRAC_1_SQRT_2;
        assert!((p.components.get(0, 0) - h).abs() < 1e-12);
        assert!((p.components.get(0, 1) - h).abs() < 1e-12);
        assert!(p.eigenvalues[1].abs() < 1e-12);
    }

    #[test]
    fn full_rank_reconstruction_is_exact() {
        let x = Matrix::from_rows(&[
            [1.0, 2.0, 0.5],
            [-1.0, 0.3, 2.0],
            [4.0, -2.0, 1.0],
            [0.0, 0.0, -1.0],
        ])
        .unwrap();
        let p = pca(&x, 3).unwrap();
        let r = p.reconstruct();
        for (a, b) in r.as_slice().iter().zip(x.as_slice()) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn single_row_rejected() {
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        assert!(pca(&x, 2).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        let x = Matrix::from_rows(&[[1.0, f64::INFINITY], [0.0, 0.0]]).unwrap();
        assert!(pca(&x, 1).is_err());
    }
}
