//! Classical (Torgerson) multidimensional scaling into two dimensions.

use nalgebra::{DMatrix, SymmetricEigen};

use super::PhoneticsError;

/// Embeds `k` points given their pairwise dissimilarities.
///
/// Double-centers the squared distances, keeps the two largest eigenpairs
/// and scales eigenvectors by the square root of their eigenvalues. A
/// non-positive eigenvalue yields a zero coordinate. Each axis is oriented
/// so the first non-negligible coordinate is nonnegative.
pub fn mds_embed(d: &[Vec<f64>]) -> Result<Vec<[f64; 2]>, PhoneticsError> {
    let k = d.len();
    if d.iter().any(|row| row.len() != k) {
        return Err(PhoneticsError::InvalidMatrix("matrix is not square".into()));
    }
    for i in 0..k {
        if d[i][i].abs() > 1e-12 {
            return Err(PhoneticsError::InvalidMatrix(format!("nonzero diagonal at {i}")));
        }
        for j in 0..i {
            if (d[i][j] - d[j][i]).abs() > 1e-9 || d[i][j] < 0.0 || !d[i][j].is_finite() {
                return Err(PhoneticsError::InvalidMatrix(format!("entry ({i}, {j})")));
            }
        }
    }
    if k == 0 {
        return Ok(Vec::new());
    }

    let sq = DMatrix::from_fn(k, k, |i, j| d[i][j] * d[i][j]);
    let row_mean: Vec<f64> = (0..k).map(|i| sq.row(i).sum() / k as f64).collect();
    let grand = row_mean.iter().sum::<f64>() / k as f64;
    let b = DMatrix::from_fn(k, k, |i, j| -0.5 * (sq[(i, j)] - row_mean[i] - row_mean[j] + grand));

    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]).then(x.cmp(&y)));
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);

    let mut out = vec![[0.0; 2]; k];
    for axis in 0..2 {
        let Some(&col) = order.get(axis) else { break };
        let lambda = eig.eigenvalues[col];
        if lambda <= 1e-12 * scale {
            continue;
        }
        let v = eig.eigenvectors.column(col);
        let sign = v
            .iter()
            .find(|x| x.abs() > 1e-9)
            .map_or(1.0, |x| x.signum());
        let s = lambda.sqrt() * sign;
        for i in 0..k {
            out[i][axis] = v[i] * s;
        }
    }
    Ok(out)
}

pub fn euclid(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}
