//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Relative singular-value threshold for every rank and kernel decision.
pub const RANK_RTOL: f64 = 1e-9;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

pub fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (m * DVector::from_column_slice(v)).as_slice().to_vec()
}

pub fn mat_t_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (m.transpose() * DVector::from_column_slice(v))
        .as_slice()
        .to_vec()
}

/// Singular values and the full right singular basis (columns of V).
fn full_svd(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let (r, c) = m.shape();
    if c == 0 {
        return (vec![], DMatrix::zeros(0, 0));
    }
    // Pad with zero rows so the thin SVD still yields all c right vectors.
    let padded = if r < c {
        let mut p = DMatrix::zeros(c, c);
        p.view_mut((0, 0), (r, c)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    (svd.singular_values.as_slice().to_vec(), v_t.transpose())
}

/// Rank threshold for `m`: `RANK_RTOL` times its largest singular value.
pub fn rank_threshold(m: &DMatrix<f64>) -> f64 {
    let (s, _) = full_svd(m);
    RANK_RTOL * s.iter().cloned().fold(0.0, f64::max)
}

/// Orthonormal basis of ker `m`. An empty list means the kernel is trivial.
pub fn kernel_basis(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    let (s, v) = full_svd(m);
    let tau = RANK_RTOL * s.iter().cloned().fold(0.0, f64::max);
    s.iter()
        .enumerate()
        .filter(|(_, &sv)| sv <= tau)
        .map(|(i, _)| v.column(i).iter().cloned().collect())
        .collect()
}

pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    m.ncols() - kernel_basis(m).len()
}

/// Minimum-norm least-squares solution of `m x = b`.
pub fn lstsq(m: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DVector::zeros(c);
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tau = RANK_RTOL * smax;
    svd.solve(b, tau).unwrap_or_else(|_| DVector::zeros(c))
}

/// Stack row vectors into a matrix with `cols` columns.
pub fn rows_to_matrix(rows: &[Vec<f64>], cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j])
}

/// Greedy selection of a linearly independent subset of rows, in order.
pub fn independent_rows(rows: &[Vec<f64>], cols: usize) -> Vec<usize> {
    let mut picked: Vec<usize> = Vec::new();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let scale_r = norm(r);
        if scale_r == 0.0 {
            continue;
        }
        // Gram-Schmidt against the orthonormal basis collected so far.
        let mut v = r.clone();
        for _ in 0..2 {
            for b in &basis {
                let d = dot(&v, b);
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= d * bi;
                }
            }
        }
        let nv = norm(&v);
        if nv > 1e-9 * scale_r {
            basis.push(scale(&v, 1.0 / nv));
            picked.push(i);
        }
        if basis.len() == cols {
            break;
        }
    }
    picked
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_kernel(m: &DMatrix<f64>, expect_dim: usize) {
        let k = kernel_basis(m);
        assert_eq!(k.len(), expect_dim);
        let tau = rank_threshold(m).max(1e-12);
        for (i, v) in k.iter().enumerate() {
            assert!(norm(&mat_vec(m, v)) <= tau);
            for (j, w) in k.iter().enumerate() {
                let d = dot(v, w);
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((d - e).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn kernel_of_example_one_operator() {
        let m = DMatrix::from_row_slice(1, 3, &[-1.0, 1.0, 1.0]);
        check_kernel(&m, 2);
    }

    #[test]
    fn kernel_of_identity_is_trivial() {
        check_kernel(&DMatrix::identity(3, 3), 0);
    }

    #[test]
    fn kernel_of_zero_is_everything() {
        check_kernel(&DMatrix::zeros(1, 3), 3);
    }

    #[test]
    fn kernel_of_tall_rank_deficient() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, -1.0, -2.0]);
        check_kernel(&m, 1);
        assert_eq!(rank(&m), 1);
    }

    #[test]
    fn independent_rows_skips_duplicates() {
        let rows = vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![1.0, 1.0], vec![0.0, 3.0]];
        assert_eq!(independent_rows(&rows, 2), vec![0, 2]);
    }
}
