use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use super::{LmiBlock, SdpProblem, VarKind, VarSlice};
use crate::linalg::Mat;

/// Matrix-valued affine expression `constant + Σ x[i]·terms[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    rows: usize,
    cols: usize,
    constant: Mat,
    terms: BTreeMap<usize, Mat>,
}

impl Affine {
    pub fn constant(m: Mat) -> Self {
        Self { rows: m.nrows(), cols: m.ncols(), constant: m, terms: BTreeMap::new() }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(Mat::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(Mat::identity(n, n))
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn evaluate(&self, x: &[f64]) -> Mat {
        let mut out = self.constant.clone();
        for (i, t) in &self.terms {
            out += t * x[*i];
        }
        out
    }

    fn map(&self, rows: usize, cols: usize, f: impl Fn(&Mat) -> Mat) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(i, t)| (*i, f(t)))
            .filter(|(_, t)| t.iter().any(|v| *v != 0.0))
            .collect();
        Self { rows, cols, constant: f(&self.constant), terms }
    }

    pub fn transpose(&self) -> Self {
        self.map(self.cols, self.rows, |m| m.transpose())
    }

    /// `a · self`
    pub fn lmul(&self, a: &Mat) -> Self {
        assert_eq!(a.ncols(), self.rows, "lmul shape mismatch");
        self.map(a.nrows(), self.cols, |m| a * m)
    }

    /// `self · a`
    pub fn rmul(&self, a: &Mat) -> Self {
        assert_eq!(a.nrows(), self.cols, "rmul shape mismatch");
        self.map(self.rows, a.ncols(), |m| m * a)
    }

    /// `self · m` for a 1×1 expression `self`.
    pub fn times(&self, m: &Mat) -> Self {
        assert_eq!(self.shape(), (1, 1), "times needs a scalar expression");
        self.map(m.nrows(), m.ncols(), |t| m * t[(0, 0)])
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(self.rows, self.cols, |m| m * s)
    }

    /// Grid assembly; `None` is a zero block whose size is taken from its row/column.
    pub fn block(grid: &[Vec<Option<&Affine>>]) -> Self {
        let nr = grid.len();
        let nc = grid.first().map_or(0, Vec::len);
        let mut heights = vec![None; nr];
        let mut widths = vec![None; nc];
        for (i, row) in grid.iter().enumerate() {
            assert_eq!(row.len(), nc, "ragged block grid");
            for (j, cell) in row.iter().enumerate() {
                if let Some(a) = cell {
                    assert!(heights[i].is_none_or(|h| h == a.rows), "row {i} height mismatch");
                    assert!(widths[j].is_none_or(|w| w == a.cols), "column {j} width mismatch");
                    heights[i] = Some(a.rows);
                    widths[j] = Some(a.cols);
                }
            }
        }
        let heights: Vec<usize> = heights.into_iter().map(|h| h.expect("empty block row")).collect();
        let widths: Vec<usize> = widths.into_iter().map(|w| w.expect("empty block column")).collect();
        let rows: usize = heights.iter().sum();
        let cols: usize = widths.iter().sum();
        let mut out = Affine::zeros(rows, cols);
        let mut r0 = 0;
        for (i, row) in grid.iter().enumerate() {
            let mut c0 = 0;
            for (j, cell) in row.iter().enumerate() {
                if let Some(a) = cell {
                    out.constant.view_mut((r0, c0), (a.rows, a.cols)).copy_from(&a.constant);
                    for (k, t) in &a.terms {
                        out.terms
                            .entry(*k)
                            .or_insert_with(|| Mat::zeros(rows, cols))
                            .view_mut((r0, c0), (a.rows, a.cols))
                            .copy_from(t);
                    }
                }
                c0 += widths[j];
            }
            r0 += heights[i];
        }
        out
    }

    /// Turn a square expression into a PSD block, symmetrizing away rounding.
    pub fn into_lmi(self) -> LmiBlock {
        assert_eq!(self.rows, self.cols, "LMI block must be square");
        let sym = |m: &Mat| (m + m.transpose()) * 0.5;
        LmiBlock {
            size: self.rows,
            constant: sym(&self.constant),
            coeffs: self
                .terms
                .iter()
                .map(|(i, t)| (*i, sym(t)))
                .filter(|(_, t)| t.iter().any(|v| *v != 0.0))
                .collect(),
        }
    }
}

impl Add for &Affine {
    type Output = Affine;
    fn add(self, rhs: &Affine) -> Affine {
        assert_eq!(self.shape(), rhs.shape(), "add shape mismatch");
        let mut out = self.clone();
        out.constant += &rhs.constant;
        for (i, t) in &rhs.terms {
            *out.terms.entry(*i).or_insert_with(|| Mat::zeros(self.rows, self.cols)) += t;
        }
        out.terms.retain(|_, t| t.iter().any(|v| *v != 0.0));
        out
    }
}

impl Sub for &Affine {
    type Output = Affine;
    fn sub(self, rhs: &Affine) -> Affine {
        self + &(-rhs)
    }
}

impl Neg for &Affine {
    type Output = Affine;
    fn neg(self) -> Affine {
        self.scale(-1.0)
    }
}

impl Mul<&Affine> for &Mat {
    type Output = Affine;
    fn mul(self, rhs: &Affine) -> Affine {
        rhs.lmul(self)
    }
}

impl Mul<&Mat> for &Affine {
    type Output = Affine;
    fn mul(self, rhs: &Mat) -> Affine {
        self.rmul(rhs)
    }
}

/// Allocates named decision variables and collects them into an [`SdpProblem`].
#[derive(Debug, Default)]
pub struct VarBuilder {
    num_vars: usize,
    var_map: Vec<VarSlice>,
}

impl VarBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn alloc(&mut self, name: &str, kind: VarKind) -> usize {
        let start = self.num_vars;
        self.var_map.push(VarSlice { name: name.to_string(), start, kind });
        self.num_vars += kind.len();
        start
    }

    pub fn symmetric(&mut self, name: &str, dim: usize) -> Affine {
        let start = self.alloc(name, VarKind::Symmetric { dim });
        let mut out = Affine::zeros(dim, dim);
        let mut k = start;
        for j in 0..dim {
            for i in 0..=j {
                let mut e = Mat::zeros(dim, dim);
                e[(i, j)] = 1.0;
                e[(j, i)] = 1.0;
                out.terms.insert(k, e);
                k += 1;
            }
        }
        out
    }

    pub fn matrix(&mut self, name: &str, rows: usize, cols: usize) -> Affine {
        let start = self.alloc(name, VarKind::Matrix { rows, cols });
        let mut out = Affine::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                let mut e = Mat::zeros(rows, cols);
                e[(i, j)] = 1.0;
                out.terms.insert(start + j * rows + i, e);
            }
        }
        out
    }

    pub fn scalar(&mut self, name: &str) -> Affine {
        let start = self.alloc(name, VarKind::Scalar);
        let mut out = Affine::zeros(1, 1);
        out.terms.insert(start, Mat::identity(1, 1));
        out
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// Linear functional `Σ w·x` over the variables of `expr` (1×1 expressions).
    pub fn objective_from(&self, expr: &Affine) -> Vec<f64> {
        assert_eq!(expr.shape(), (1, 1), "objective must be scalar");
        let mut c = vec![0.0; self.num_vars];
        for (i, t) in &expr.terms {
            c[*i] = t[(0, 0)];
        }
        c
    }

    pub fn finish(self, blocks: Vec<LmiBlock>, objective: Option<Vec<f64>>) -> SdpProblem {
        SdpProblem { num_vars: self.num_vars, blocks, objective, var_map: self.var_map }
    }
}
