//! Small dense helpers on top of nalgebra.

use nalgebra::DMatrix;

pub type Mat = DMatrix<f64>;

pub fn identity(d: usize) -> Mat {
    Mat::identity(d, d)
}

pub fn diag(v: &[f64]) -> Mat {
    Mat::from_diagonal(&nalgebra::DVector::from_column_slice(v))
}

/// Row-major construction, which reads naturally in tests and JSON.
pub fn from_rows(rows: &[Vec<f64>]) -> Mat {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    Mat::from_fn(n, m, |i, j| rows[i][j])
}

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn mat_vec(m: &Mat, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.nrows()];
    for (i, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for (j, vj) in v.iter().enumerate() {
            s += m[(i, j)] * vj;
        }
        *o = s;
    }
    out
}

/// `mᵀ v`
pub fn mat_t_vec(m: &Mat, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.ncols()];
    for (j, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for (i, vi) in v.iter().enumerate() {
            s += m[(i, j)] * vi;
        }
        *o = s;
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn min_singular_value(m: &Mat) -> f64 {
    m.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

pub fn operator_norm(m: &Mat) -> f64 {
    m.clone().singular_values().iter().cloned().fold(0.0, f64::max)
}
