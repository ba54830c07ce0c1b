use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{column_moments, AnalyzeError};
use crate::estimate::ParamMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub terms: Vec<String>,
    pub media: Vec<String>,
    pub standardized: bool,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// `terms × components`, row-major; columns are orthonormal.
    pub loadings: Vec<f64>,
    /// `media × components`, row-major.
    pub scores: Vec<f64>,
}

impl Pca {
    pub fn n_components(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn loading(&self, term: usize, component: usize) -> f64 {
        self.loadings[term * self.n_components() + component]
    }

    pub fn score(&self, row: usize, component: usize) -> f64 {
        self.scores[row * self.n_components() + component]
    }

    /// Share of the total variance carried by each component.
    pub fn explained(&self) -> Vec<f64> {
        let total: f64 = self.eigenvalues.iter().sum();
        self.eigenvalues.iter().map(|l| l / total).collect()
    }
}

/// Eigendecomposition of the correlation (`standardize`) or covariance
/// matrix of the columns. Each component's sign makes its largest loading
/// positive.
pub fn pca(matrix: &ParamMatrix, standardize: bool) -> Result<Pca, AnalyzeError> {
    let (n, p) = (matrix.n_rows(), matrix.n_cols());
    if n < 2 || p < 2 {
        return Err(AnalyzeError::TooSmall(format!("PCA needs at least 2 rows and 2 columns, got {n} × {p}")));
    }
    let (means, scales, degenerate) = column_moments(&matrix.values, n, p, standardize);
    if let Some(j) = degenerate {
        return Err(AnalyzeError::DegenerateMatrix {
            column: matrix.terms[j].clone(),
        });
    }
    let z = DMatrix::from_fn(n, p, |i, j| (matrix.values[i * p + j] - means[j]) / scales[j]);
    let cov = (z.transpose() * &z) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut loadings = vec![0.0; p * p];
    let mut eigenvalues = Vec::with_capacity(p);
    for (c, &k) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        let pivot = (0..p).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a))).unwrap();
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..p {
            loadings[j * p + c] = sign * v[j];
        }
        eigenvalues.push(eig.eigenvalues[k].max(0.0));
    }
    let l = DMatrix::from_row_slice(p, p, &loadings);
    let s = z * l;
    let scores = (0..n).flat_map(|i| (0..p).map(move |c| (i, c))).map(|(i, c)| s[(i, c)]).collect();
    Ok(Pca {
        terms: matrix.terms.clone(),
        media: matrix.media.clone(),
        standardized: standardize,
        eigenvalues,
        loadings,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[[f64; 2]]) -> ParamMatrix {
        ParamMatrix {
            media: (0..rows.len()).map(|i| format!("M{i}")).collect(),
            terms: vec!["a".into(), "b".into()],
            values: rows.iter().flatten().copied().collect(),
            z_values: vec![0.0; rows.len() * 2],
            excluded: Vec::new(),
        }
    }

    #[test]
    fn hand_computed_covariance_example() {
        let m = matrix(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 2.0], [0.0, -2.0]]);
        let r = pca(&m, false).unwrap();
        assert!((r.eigenvalues[0] - 8.0 / 3.0).abs() < 1e-12);
        assert!((r.eigenvalues[1] - 2.0 / 3.0).abs() < 1e-12);
        // first component is the b axis
        assert!((r.loading(1, 0) - 1.0).abs() < 1e-12);
        assert!(r.loading(0, 0).abs() < 1e-12);
    }

    #[test]
    fn perfectly_correlated_columns() {
        let m = matrix(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0], [5.0, 10.0]]);
        let r = pca(&m, true).unwrap();
        assert!((r.eigenvalues[0] - 2.0).abs() < 1e-12);
        assert!(r.eigenvalues[1].abs() < 1e-12);
    }

    #[test]
    fn zero_variance_column_is_reported() {
        let m = matrix(&[[1.0, 3.0], [2.0, 3.0], [4.0, 3.0]]);
        match pca(&m, true) {
            Err(AnalyzeError::DegenerateMatrix { column }) => assert_eq!(column, "b"),
            other => panic!("{other:?}"),
        }
    }
}
