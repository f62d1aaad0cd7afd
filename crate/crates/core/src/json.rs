//! JSON encoding of complex matrices: row-major nested arrays of `[re, im]`.

use faer::{c64, Mat, MatRef};

use crate::linalg::CMat;

pub type JsonMatrix = Vec<Vec<[f64; 2]>>;

/// Negative zeros are written as `0.0`.
pub fn to_json_matrix(m: MatRef<'_, c64>) -> JsonMatrix {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re + 0.0, m[(i, j)].im + 0.0]).collect())
        .collect()
}

/// Ragged input is padded with zeros to the widest row.
pub fn from_json_matrix(rows: &JsonMatrix) -> CMat {
    let r = rows.len();
    let c = rows.iter().map(Vec::len).max().unwrap_or(0);
    Mat::from_fn(r, c, |i, j| rows[i].get(j).map_or(c64::new(0.0, 0.0), |e| c64::new(e[0], e[1])))
}

pub fn is_rectangular(rows: &JsonMatrix) -> bool {
    rows.windows(2).all(|w| w[0].len() == w[1].len())
}
