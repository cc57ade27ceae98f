//! Block-diagonal affine LMIs in a flat decision vector.
//!
//! Each block is `F(x) = F₀ + Σᵢ xᵢ Fᵢ ⪰ 0`. Problems are assembled with
//! [`VarBuilder`] and [`Affine`] expressions, solved through [`solve`], and
//! exported with [`sdpa`].

mod affine;
mod bisect;
mod clarabel_backend;
pub mod sdpa;

pub use affine::{Affine, VarBuilder};
pub use bisect::{bisect_gamma, BisectionResult};
pub use clarabel_backend::solve;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    /// Upper triangle, column-major: (0,0), (0,1), (1,1), (0,2), ..
    Symmetric { dim: usize },
    /// Column-major.
    Matrix { rows: usize, cols: usize },
    Scalar,
}

impl VarKind {
    pub fn len(&self) -> usize {
        match *self {
            VarKind::Symmetric { dim } => dim * (dim + 1) / 2,
            VarKind::Matrix { rows, cols } => rows * cols,
            VarKind::Scalar => 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarSlice {
    pub name: String,
    pub start: usize,
    pub kind: VarKind,
}

impl VarSlice {
    pub fn len(&self) -> usize {
        self.kind.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kind.is_empty()
    }

    /// Rebuild the named matrix (or 1×1 scalar) from a decision vector.
    pub fn extract(&self, x: &[f64]) -> Mat {
        let v = &x[self.start..self.start + self.len()];
        match self.kind {
            VarKind::Symmetric { dim } => {
                let mut out = Mat::zeros(dim, dim);
                let mut k = 0;
                for j in 0..dim {
                    for i in 0..=j {
                        out[(i, j)] = v[k];
                        out[(j, i)] = v[k];
                        k += 1;
                    }
                }
                out
            }
            VarKind::Matrix { rows, cols } => Mat::from_column_slice(rows, cols, v),
            VarKind::Scalar => Mat::from_element(1, 1, v[0]),
        }
    }
}

/// `constant + Σ x[i]·coeffs[i]`, every matrix symmetric of order `size`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiBlock {
    pub size: usize,
    pub constant: Mat,
    /// Sorted by variable index; no all-zero matrices.
    pub coeffs: Vec<(usize, Mat)>,
}

impl LmiBlock {
    pub fn evaluate(&self, x: &[f64]) -> Mat {
        let mut out = self.constant.clone();
        for (i, f) in &self.coeffs {
            out += f * x[*i];
        }
        out
    }

    /// ‖F₀‖_F + Σ|xᵢ|·‖Fᵢ‖_F, the scale against which rounding in the block is judged.
    pub fn magnitude(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().fold(self.constant.norm(), |acc, (i, f)| acc + x[*i].abs() * f.norm())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub num_vars: usize,
    pub blocks: Vec<LmiBlock>,
    /// Minimize `cᵀx`; `None` is a pure feasibility problem.
    pub objective: Option<Vec<f64>>,
    pub var_map: Vec<VarSlice>,
}

impl SdpProblem {
    pub fn validate(&self) -> Result<()> {
        for (b, block) in self.blocks.iter().enumerate() {
            if block.constant.shape() != (block.size, block.size) {
                return Err(dim_err(format!("block {b}: constant has the wrong shape")));
            }
            if !is_symmetric(&block.constant) {
                return Err(Error::InvalidArgument(format!("block {b}: constant is not symmetric")));
            }
            let mut last = None;
            for (i, f) in &block.coeffs {
                if *i >= self.num_vars || last.is_some_and(|l| l >= *i) {
                    return Err(Error::InvalidArgument(format!("block {b}: bad variable index {i}")));
                }
                last = Some(*i);
                if f.shape() != (block.size, block.size) || !is_symmetric(f) {
                    return Err(Error::InvalidArgument(format!("block {b}: coefficient {i} is not symmetric")));
                }
            }
        }
        if let Some(c) = &self.objective {
            if c.len() != self.num_vars {
                return Err(dim_err("objective length differs from num_vars"));
            }
        }
        let mut covered = vec![false; self.num_vars];
        for s in &self.var_map {
            for c in covered.iter_mut().skip(s.start).take(s.len()) {
                if *c {
                    return Err(Error::InvalidArgument(format!("variable `{}` overlaps another slice", s.name)));
                }
                *c = true;
            }
            if s.start + s.len() > self.num_vars {
                return Err(Error::InvalidArgument(format!("variable `{}` exceeds num_vars", s.name)));
            }
        }
        if self.var_map.len() > 0 && covered.iter().any(|c| !c) {
            return Err(Error::InvalidArgument("named slices do not cover every variable".into()));
        }
        Ok(())
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.size).collect()
    }

    pub fn evaluate_blocks(&self, x: &[f64]) -> Vec<Mat> {
        self.blocks.iter().map(|b| b.evaluate(x)).collect()
    }

    /// Smallest eigenvalue of every block at `x` (certificate replay).
    pub fn min_eigenvalues(&self, x: &[f64]) -> Vec<f64> {
        self.blocks.iter().map(|b| linalg::min_sym_eigenvalue(&b.evaluate(x))).collect()
    }

    /// Every block at `x` has min eigenvalue ≥ −tol·(1 + magnitude).
    pub fn replay_ok(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.num_vars
            && x.iter().all(|v| v.is_finite())
            && self
                .blocks
                .iter()
                .all(|b| linalg::min_sym_eigenvalue(&b.evaluate(x)) >= -tol * (1.0 + b.magnitude(x)))
    }

    pub fn var(&self, name: &str) -> Option<&VarSlice> {
        self.var_map.iter().find(|s| s.name == name)
    }

    pub fn extract(&self, x: &[f64], name: &str) -> Result<Mat> {
        let s = self
            .var(name)
            .ok_or_else(|| Error::InvalidArgument(format!("problem has no variable `{name}`")))?;
        if x.len() != self.num_vars {
            return Err(dim_err("decision vector length differs from num_vars"));
        }
        Ok(s.extract(x))
    }

    pub fn objective_value(&self, x: &[f64]) -> Option<f64> {
        self.objective.as_ref().map(|c| c.iter().zip(x).map(|(a, b)| a * b).sum())
    }
}

fn is_symmetric(m: &Mat) -> bool {
    let scale = 1.0 + m.amax();
    (m - m.transpose()).amax() <= 1e-12 * scale
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverContract {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: u32,
}

impl Default for SolverContract {
    fn default() -> Self {
        Self { eps_abs: 1e-8, eps_rel: 1e-8, max_iter: 100_000 }
    }
}

impl SolverContract {
    /// Defaults, with `INFORMA_SDP_TOL` overriding `eps_abs` when it parses.
    pub fn from_env() -> Self {
        let mut c = Self::default();
        if let Some(v) = std::env::var("INFORMA_SDP_TOL").ok().and_then(|s| s.trim().parse::<f64>().ok()) {
            if v > 0.0 && v.is_finite() {
                c.eps_abs = v;
            }
        }
        c
    }

    /// Relative replay threshold for a Feasible claim.
    pub fn replay_tol(&self) -> f64 {
        10.0 * self.eps_abs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Feasible,
    Infeasible,
    Inaccurate,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective_value: Option<f64>,
    /// Infeasibility claimed without a full-accuracy dual certificate.
    pub weak: bool,
    /// Replay of every block at `x`.
    pub min_eigenvalues: Vec<f64>,
    /// Raw backend status, for diagnostics.
    pub backend_status: String,
}

impl SolveOutcome {
    pub fn is_feasible(&self) -> bool {
        self.status == SolveStatus::Feasible
    }
}
