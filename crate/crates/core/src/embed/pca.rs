//! Two-component principal component projection, used as a linear baseline.

use nalgebra::{DMatrix, SymmetricEigen};

use super::{EmbedMethod, Embedding};
use crate::error::{Error, Result};

/// Projects mean-centered rows onto the two leading principal directions.
///
/// Works on whichever of the covariance (`dim x dim`) or Gram (`n x n`)
/// matrix is smaller. For rank-deficient input the second direction is some
/// unit vector orthogonal to the first and its variance is zero.
pub fn pca2(features: &[f64], dim: usize) -> Result<Embedding> {
    if dim == 0 || !features.len().is_multiple_of(dim) {
        return Err(Error::Param("feature buffer does not match dim".into()));
    }
    let n = features.len() / dim;
    if n < 2 {
        return Err(Error::Param("PCA needs at least two points".into()));
    }
    let mut x = DMatrix::from_row_slice(n, dim, features);
    for mut col in x.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let denom = (n - 1) as f64;

    let (scores, variances) = if dim <= n {
        let cov = x.transpose() * &x / denom;
        let eig = SymmetricEigen::new(cov);
        let order = descending(eig.eigenvalues.as_slice());
        let mut scores = DMatrix::zeros(n, 2);
        let mut variances = [0.0; 2];
        for (c, &k) in order.iter().take(2).enumerate() {
            let mut v = eig.eigenvectors.column(k).clone_owned();
            orient(v.as_mut_slice());
            scores.set_column(c, &(&x * v));
            variances[c] = eig.eigenvalues[k].max(0.0);
        }
        (scores, variances)
    } else {
        let gram = &x * x.transpose();
        let eig = SymmetricEigen::new(gram);
        let order = descending(eig.eigenvalues.as_slice());
        let mut scores = DMatrix::zeros(n, 2);
        let mut variances = [0.0; 2];
        for (c, &k) in order.iter().take(2).enumerate() {
            let lambda = eig.eigenvalues[k].max(0.0);
            let mut u = eig.eigenvectors.column(k).clone_owned();
            // Orient by the implied loading vector so both routes agree on sign.
            let mut loading = x.transpose() * &u;
            if orient(loading.as_mut_slice()) {
                u.neg_mut();
            }
            scores.set_column(c, &(u * lambda.sqrt()));
            variances[c] = lambda / denom;
        }
        (scores, variances)
    };

    let points = (0..n).map(|i| [scores[(i, 0)], scores[(i, 1)]]).collect();
    Ok(Embedding {
        points,
        kl_trace: Vec::new(),
        config: EmbedMethod::Pca {
            explained_variance: variances,
        },
    })
}

fn descending(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    order
}

/// Flips `v` so its largest-magnitude entry is positive. Returns whether it flipped.
fn orient(v: &mut [f64]) -> bool {
    let pivot = v
        .iter()
        .copied()
        .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
        true
    } else {
        false
    }
}
