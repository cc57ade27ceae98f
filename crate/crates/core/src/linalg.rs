//! Small dense linear-algebra helpers shared by the numeric modules.

use nalgebra::{DMatrix, DVector};

pub type Mat = DMatrix<f64>;

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_sym_eigenvalue(m: &Mat) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

pub fn max_sym_eigenvalue(m: &Mat) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(f64::NEG_INFINITY)
}

/// Largest singular value.
pub fn norm2(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

pub fn is_psd(m: &Mat, tol: f64) -> bool {
    min_sym_eigenvalue(m) >= -tol
}

/// Numerical rank from singular values with a relative cut-off.
pub fn rank(m: &Mat, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Assemble a dense matrix from a grid of optional blocks; `None` is a zero block.
pub fn block(rows: &[usize], cols: &[usize], blocks: &[Vec<Option<&Mat>>]) -> Mat {
    let nr: usize = rows.iter().sum();
    let nc: usize = cols.iter().sum();
    let mut out = Mat::zeros(nr, nc);
    let mut r0 = 0;
    for (i, &h) in rows.iter().enumerate() {
        let mut c0 = 0;
        for (j, &w) in cols.iter().enumerate() {
            if let Some(b) = blocks[i][j] {
                assert_eq!((b.nrows(), b.ncols()), (h, w), "block ({i},{j}) has wrong shape");
                out.view_mut((r0, c0), (h, w)).copy_from(b);
            }
            c0 += w;
        }
        r0 += h;
    }
    out
}

pub fn vstack(parts: &[&Mat]) -> Mat {
    let cols = parts.first().map_or(0, |p| p.ncols());
    let rows = parts.iter().map(|p| p.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r0 = 0;
    for p in parts {
        assert_eq!(p.ncols(), cols);
        out.view_mut((r0, 0), (p.nrows(), cols)).copy_from(*p);
        r0 += p.nrows();
    }
    out
}

pub fn hstack(parts: &[&Mat]) -> Mat {
    let rows = parts.first().map_or(0, |p| p.nrows());
    let cols = parts.iter().map(|p| p.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut c0 = 0;
    for p in parts {
        assert_eq!(p.nrows(), rows);
        out.view_mut((0, c0), (rows, p.ncols())).copy_from(*p);
        c0 += p.ncols();
    }
    out
}

/// Rows `idx` and columns `idx` of a square matrix.
pub fn principal_submatrix(m: &Mat, idx: &[usize]) -> Mat {
    Mat::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

/// Moore-Penrose pseudo-inverse with a relative singular-value cut-off.
pub fn pinv(m: &Mat) -> Mat {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Mat::zeros(c, r);
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = smax * 1e-12 * (r.max(c) as f64);
    svd.pseudo_inverse(eps).expect("svd computed with both factors")
}

pub fn trace(m: &Mat) -> f64 {
    m.diagonal().sum()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Mat {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    Mat::from_fn(r, c, |i, j| rows[i][j])
}

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn column(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Serde adapters for `DMatrix<f64>`.
pub mod serde_mat {
    use super::Mat;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    /// Row-major nested arrays, `[[a, b], [c, d]]`.
    pub mod rows {
        use super::*;

        pub fn serialize<S: Serializer>(m: &Mat, s: S) -> Result<S::Ok, S::Error> {
            super::super::to_rows(m).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
            let rows = Vec::<Vec<f64>>::deserialize(d)?;
            if rows.iter().any(|r| r.len() != rows[0].len()) {
                return Err(serde::de::Error::custom("ragged matrix rows"));
            }
            Ok(super::super::from_rows(&rows))
        }
    }

    /// A list of row-major nested matrices.
    pub mod rows_vec {
        use super::*;

        pub fn serialize<S: Serializer>(ms: &[Mat], s: S) -> Result<S::Ok, S::Error> {
            let v: Vec<Vec<Vec<f64>>> = ms.iter().map(super::super::to_rows).collect();
            v.serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Mat>, D::Error> {
            let v = Vec::<Vec<Vec<f64>>>::deserialize(d)?;
            Ok(v.iter().map(|r| super::super::from_rows(r)).collect())
        }
    }

    #[derive(Serialize, Deserialize)]
    struct Dims {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    }

    /// Explicit dimensions plus row-major data, `{"rows":2,"cols":2,"data":[..]}`.
    pub mod dims {
        use super::*;

        pub fn serialize<S: Serializer>(m: &Mat, s: S) -> Result<S::Ok, S::Error> {
            let data = (0..m.nrows())
                .flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)]))
                .collect();
            Dims { rows: m.nrows(), cols: m.ncols(), data }.serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
            let raw = Dims::deserialize(d)?;
            if raw.data.len() != raw.rows * raw.cols {
                return Err(serde::de::Error::custom("data length does not match rows*cols"));
            }
            Ok(Mat::from_row_slice(raw.rows, raw.cols, &raw.data))
        }
    }
}
