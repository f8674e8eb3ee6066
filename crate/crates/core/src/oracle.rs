//! Dense spectral reference for small graphs. Used to verify filters and
//! scoring against `H(L) x = U diag(h(lambda)) U^T x`; never part of the
//! recommendation path.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::SimilarityGraph;

pub const DEFAULT_ORACLE_CAP: usize = 512;
const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns, matching `eigenvalues`.
    pub eigenvectors: Array2<f64>,
}

/// `I - P` for a symmetric similarity graph.
pub fn laplacian(graph: &SimilarityGraph) -> Result<Array2<f64>> {
    laplacian_of(&graph.to_dense())
}

pub fn laplacian_of(p: &Array2<f64>) -> Result<Array2<f64>> {
    check_symmetric(p)?;
    Ok(Array2::eye(p.nrows()) - p)
}

fn check_symmetric(m: &Array2<f64>) -> Result<()> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Shape(format!(
            "{}x{} matrix is not square",
            n,
            m.ncols()
        )));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (m[[i, j]], m[[j, i]]);
            if (a - b).abs() > SYMMETRY_TOL * a.abs().max(1.0) {
                return Err(Error::Domain(format!(
                    "matrix is not symmetric at ({i}, {j}): {a} vs {b}"
                )));
            }
        }
    }
    Ok(())
}

pub fn eigendecompose(l: &Array2<f64>) -> Result<SpectralDecomposition> {
    eigendecompose_capped(l, DEFAULT_ORACLE_CAP)
}

pub fn eigendecompose_capped(l: &Array2<f64>, cap: usize) -> Result<SpectralDecomposition> {
    let n = l.nrows();
    if n > cap {
        return Err(Error::Capacity(format!(
            "oracle refuses {n}x{n} input (cap {cap})"
        )));
    }
    check_symmetric(l)?;
    let m = DMatrix::from_fn(n, n, |i, j| l[[i, j]]);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&c| eig.eigenvalues[c]).collect();
    let eigenvectors = Array2::from_shape_fn((n, n), |(i, j)| eig.eigenvectors[(i, order[j])]);
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

impl SpectralDecomposition {
    /// `U diag(h(lambda)) U^T`.
    pub fn filter_matrix(&self, h: impl Fn(f64) -> f64) -> Array2<f64> {
        let u = &self.eigenvectors;
        let mut scaled = u.clone();
        for (j, &lambda) in self.eigenvalues.iter().enumerate() {
            let g = h(lambda);
            scaled.column_mut(j).mapv_inplace(|v| v * g);
        }
        scaled.dot(&u.t())
    }

    /// Graph Fourier transform `U^T x`.
    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        self.eigenvectors
            .t()
            .dot(&ndarray::ArrayView1::from(x))
            .to_vec()
    }

    /// `max |U diag(lambda) U^T - l|`.
    pub fn reconstruction_error(&self, l: &Array2<f64>) -> f64 {
        let back = self.filter_matrix(|lambda| lambda);
        (&back - l).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |U^T U - I|`.
    pub fn orthogonality_error(&self) -> f64 {
        let n = self.eigenvalues.len();
        let g = self.eigenvectors.t().dot(&self.eigenvectors) - Array2::<f64>::eye(n);
        g.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `U diag(h(lambda)) U^T x`.
pub fn spectral_filter_apply(
    d: &SpectralDecomposition,
    h: impl Fn(f64) -> f64,
    x: &[f64],
) -> Result<Vec<f64>> {
    let n = d.eigenvalues.len();
    if x.len() != n {
        return Err(Error::Shape(format!(
            "signal has {} entries, graph has {n} nodes",
            x.len()
        )));
    }
    let mut hat = d.transform(x);
    for (v, &lambda) in hat.iter_mut().zip(&d.eigenvalues) {
        *v *= h(lambda);
    }
    Ok(d.eigenvectors.dot(&ndarray::Array1::from(hat)).to_vec())
}

/// Quadratic form `x^T L x`.
pub fn smoothness(x: &[f64], l: &Array2<f64>) -> Result<f64> {
    if l.nrows() != x.len() || l.ncols() != x.len() {
        return Err(Error::Shape(format!(
            "signal has {} entries, operator is {:?}",
            x.len(),
            l.dim()
        )));
    }
    let xv = ndarray::ArrayView1::from(x);
    Ok(xv.dot(&l.dot(&xv)))
}

/// `D - A` for a nonnegative adjacency matrix.
pub fn combinatorial_laplacian(a: &Array2<f64>) -> Array2<f64> {
    let mut l = -a.clone();
    for i in 0..a.nrows() {
        l[[i, i]] += a.row(i).sum();
    }
    l
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn laplacian_examples() {
        assert_eq!(
            laplacian_of(&Array2::eye(3)).unwrap(),
            Array2::<f64>::zeros((3, 3))
        );
        assert_eq!(
            laplacian_of(&Array2::zeros((2, 2))).unwrap(),
            Array2::<f64>::eye(2)
        );
        let l = laplacian_of(&array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert_eq!(l, array![[1.0, -1.0], [-1.0, 1.0]]);
        let d = eigendecompose(&l).unwrap();
        assert!((d.eigenvalues[0] - 0.0).abs() < 1e-12);
        assert!((d.eigenvalues[1] - 2.0).abs() < 1e-12);
        assert!(matches!(
            laplacian_of(&array![[0.0, 1.0], [0.5, 0.0]]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn diagonal_input() {
        let d = eigendecompose(&array![[3.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0]]).unwrap();
        assert_eq!(d.eigenvalues, vec![1.0, 2.0, 3.0]);
        for v in d.eigenvectors.iter() {
            assert!(v.abs() == 0.0 || (v.abs() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(
            eigendecompose_capped(&Array2::eye(5), 4),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn trivial_filters() {
        let l = laplacian_of(&array![[0.5, 0.2], [0.2, 0.1]]).unwrap();
        let d = eigendecompose(&l).unwrap();
        let x = [0.3, -1.2];
        let same = spectral_filter_apply(&d, |_| 1.0, &x).unwrap();
        assert!(same.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-12));
        assert_eq!(
            spectral_filter_apply(&d, |_| 0.0, &x).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn smoothness_examples() {
        let l = array![[1.0, -1.0], [-1.0, 1.0]];
        assert_eq!(smoothness(&[1.0, -1.0], &l).unwrap(), 4.0);
        assert_eq!(smoothness(&[0.0, 0.0], &l).unwrap(), 0.0);
        let a = array![[0.0, 2.0, 1.0], [2.0, 0.0, 0.5], [1.0, 0.5, 0.0]];
        let lc = combinatorial_laplacian(&a);
        assert!(smoothness(&[4.0, 4.0, 4.0], &lc).unwrap().abs() < 1e-12);
    }
}
