//! Trajectories, stacked data matrices, instruments and noise bounds.
//!
//! Time indexing: sample column `k` of a [`Trajectory`] holds time `t0 + k`.
//! The data window always starts at `t = 0`; samples with `t < 0` are
//! pre-samples that only feed lagged regressors and lagged instruments.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    InputOutput,
    InputState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    kind: TrajectoryKind,
    u: Mat,
    y: Mat,
    t0: i64,
}

impl Trajectory {
    /// `u` is m×T, `y_or_x` is p×T (outputs) or n×T (states).
    pub fn new(kind: TrajectoryKind, u: Mat, y_or_x: Mat, t0: i64) -> Result<Self> {
        if u.ncols() != y_or_x.ncols() {
            return Err(dim_err(format!(
                "input has {} samples, output/state has {}",
                u.ncols(),
                y_or_x.ncols()
            )));
        }
        if u.nrows() == 0 || y_or_x.nrows() == 0 {
            return Err(dim_err("input and output dimensions must be at least 1"));
        }
        if u.ncols() == 0 {
            return Err(dim_err("trajectory needs at least one sample"));
        }
        Ok(Self { kind, u, y: y_or_x, t0 })
    }

    pub fn kind(&self) -> TrajectoryKind {
        self.kind
    }

    pub fn inputs(&self) -> &Mat {
        &self.u
    }

    /// Outputs y(t) or states x(t), depending on [`Self::kind`].
    pub fn outputs(&self) -> &Mat {
        &self.y
    }

    pub fn t0(&self) -> i64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.u.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.u.ncols() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.y.nrows()
    }

    /// Number of samples with `t < 0`.
    pub fn pre_samples(&self) -> usize {
        if self.t0 < 0 {
            ((-self.t0) as usize).min(self.len())
        } else {
            0
        }
    }

    /// Column index of time `t`, if stored.
    pub fn index_of(&self, t: i64) -> Option<usize> {
        let k = t - self.t0;
        (k >= 0 && (k as usize) < self.len()).then_some(k as usize)
    }
}

/// Optional expectations checked against a parsed trajectory file.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrajectorySchema {
    pub kind: Option<TrajectoryKind>,
    pub inputs: Option<usize>,
    pub outputs: Option<usize>,
}

pub fn load_trajectory(path: impl AsRef<Path>, schema: &TrajectorySchema) -> Result<Trajectory> {
    let file = std::fs::File::open(path)?;
    parse_trajectory(file, schema)
}

/// Parse the `t,u1..um,(y1..yp | x1..xn)` CSV layout.
pub fn parse_trajectory<R: Read>(reader: R, schema: &TrajectorySchema) -> Result<Trajectory> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let names: Vec<&str> = headers.iter().collect();
    if names.first() != Some(&"t") {
        return Err(Error::Malformed("first column must be `t`".into()));
    }

    let mut m = 0usize;
    let mut p = 0usize;
    let mut out_prefix: Option<char> = None;
    for name in &names[1..] {
        let (prefix, idx) = split_column_name(name)?;
        match prefix {
            'u' => {
                if p > 0 {
                    return Err(Error::Malformed("input columns must precede output columns".into()));
                }
                m += 1;
                if idx != m {
                    return Err(Error::Malformed(format!("expected column u{m}, found {name}")));
                }
            }
            'y' | 'x' => {
                if out_prefix.is_some_and(|c| c != prefix) {
                    return Err(Error::Malformed("cannot mix y and x columns".into()));
                }
                out_prefix = Some(prefix);
                p += 1;
                if idx != p {
                    return Err(Error::Malformed(format!("expected column {prefix}{p}, found {name}")));
                }
            }
            _ => return Err(Error::Malformed(format!("unknown column `{name}`"))),
        }
    }
    if m == 0 || p == 0 {
        return Err(Error::Malformed("need at least one input and one output/state column".into()));
    }
    let kind = if out_prefix == Some('x') {
        TrajectoryKind::InputState
    } else {
        TrajectoryKind::InputOutput
    };
    if schema.kind.is_some_and(|k| k != kind) {
        return Err(dim_err(format!("file holds {kind:?} data, schema expects {:?}", schema.kind.unwrap())));
    }
    if schema.inputs.is_some_and(|e| e != m) {
        return Err(dim_err(format!("file has {m} inputs, schema expects {}", schema.inputs.unwrap())));
    }
    if schema.outputs.is_some_and(|e| e != p) {
        return Err(dim_err(format!("file has {p} outputs/states, schema expects {}", schema.outputs.unwrap())));
    }

    let mut t0 = None;
    let mut u_cols: Vec<f64> = Vec::new();
    let mut y_cols: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != names.len() {
            return Err(Error::Malformed(format!("row {} has {} fields, expected {}", line + 2, rec.len(), names.len())));
        }
        let t: i64 = rec[0]
            .parse()
            .map_err(|_| Error::Malformed(format!("row {}: bad time index `{}`", line + 2, &rec[0])))?;
        match t0 {
            None => t0 = Some(t),
            Some(s) => {
                let expected = s + count as i64;
                if t != expected {
                    return Err(Error::NonContiguous { expected, found: t });
                }
            }
        }
        for (j, field) in rec.iter().enumerate().skip(1) {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Malformed(format!("row {}: bad number `{field}`", line + 2)))?;
            if j <= m {
                u_cols.push(v);
            } else {
                y_cols.push(v);
            }
        }
        count += 1;
    }
    let t0 = t0.ok_or_else(|| Error::Malformed("no data rows".into()))?;
    // Stored sample-major; each sample is one column.
    let u = Mat::from_column_slice(m, count, &u_cols);
    let y = Mat::from_column_slice(p, count, &y_cols);
    Trajectory::new(kind, u, y, t0)
}

fn split_column_name(name: &str) -> Result<(char, usize)> {
    let mut chars = name.chars();
    let prefix = chars
        .next()
        .ok_or_else(|| Error::Malformed("empty column name".into()))?;
    let idx: usize = chars
        .as_str()
        .parse()
        .map_err(|_| Error::Malformed(format!("bad column name `{name}`")))?;
    Ok((prefix, idx))
}

pub fn write_trajectory(path: impl AsRef<Path>, traj: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let out = match traj.kind {
        TrajectoryKind::InputOutput => 'y',
        TrajectoryKind::InputState => 'x',
    };
    let mut header = vec!["t".to_string()];
    header.extend((1..=traj.input_dim()).map(|i| format!("u{i}")));
    header.extend((1..=traj.output_dim()).map(|i| format!("{out}{i}")));
    w.write_record(&header)?;
    for k in 0..traj.len() {
        let mut row = vec![(traj.t0 + k as i64).to_string()];
        row.extend(traj.u.column(k).iter().map(|v| format!("{v:e}")));
        row.extend(traj.y.column(k).iter().map(|v| format!("{v:e}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Stacked regressors of the ARX data equation `Y₋ = [Ā B̄] Z₋ + B₀ U₋ + E₋`.
#[derive(Debug, Clone, PartialEq)]
pub struct IoDataMatrices {
    /// n×N, column t is ζ(t) = col(y(t-1..t-l), u(t-1..t-l)).
    pub zm: Mat,
    pub ym: Mat,
    pub um: Mat,
    pub lag: usize,
}

impl IoDataMatrices {
    pub fn samples(&self) -> usize {
        self.zm.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.ym.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.um.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.zm.nrows()
    }
}

pub fn build_io_matrices(traj: &Trajectory, lag: usize) -> Result<IoDataMatrices> {
    if traj.kind != TrajectoryKind::InputOutput {
        return Err(Error::InvalidArgument("input-output matrices need an input-output trajectory".into()));
    }
    if lag == 0 {
        return Err(Error::InvalidArgument("lag order must be at least 1".into()));
    }
    let pre = traj.pre_samples();
    if pre < lag {
        return Err(Error::InsufficientPreSamples { needed: lag, available: pre });
    }
    let total = traj.len();
    if total <= lag || total == pre {
        return Err(Error::InvalidArgument(format!("trajectory of length {total} leaves no data after {lag} lags")));
    }
    let n_data = total - pre;
    let (m, p) = (traj.input_dim(), traj.output_dim());
    let n = (p + m) * lag;
    let mut zm = Mat::zeros(n, n_data);
    for k in 0..n_data {
        let col = pre + k;
        for i in 1..=lag {
            zm.view_mut(((i - 1) * p, k), (p, 1)).copy_from(&traj.y.column(col - i));
            zm.view_mut((p * lag + (i - 1) * m, k), (m, 1)).copy_from(&traj.u.column(col - i));
        }
    }
    Ok(IoDataMatrices {
        zm,
        ym: traj.y.columns(pre, n_data).into_owned(),
        um: traj.u.columns(pre, n_data).into_owned(),
        lag,
    })
}

/// `X₊ = A X₋ + B U₋ + E₋` windows.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDataMatrices {
    pub xm: Mat,
    pub xp: Mat,
    pub um: Mat,
}

impl StateDataMatrices {
    pub fn samples(&self) -> usize {
        self.xm.ncols()
    }

    pub fn state_dim(&self) -> usize {
        self.xm.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.um.nrows()
    }
}

pub fn build_state_matrices(traj: &Trajectory) -> Result<StateDataMatrices> {
    if traj.kind != TrajectoryKind::InputState {
        return Err(Error::InvalidArgument("state matrices need an input-state trajectory".into()));
    }
    let pre = traj.pre_samples();
    let window = traj.len() - pre;
    if window < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 samples from t=0, got {window}")));
    }
    let n_data = window - 1;
    Ok(StateDataMatrices {
        xm: traj.y.columns(pre, n_data).into_owned(),
        xp: traj.y.columns(pre + 1, n_data).into_owned(),
        um: traj.u.columns(pre, n_data).into_owned(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstrumentSpec {
    /// r_i(t) = δ(t - i + 1): R₋ = I_N.
    Identity,
    /// r(t) = col(u(t - lag) for lag in lags).
    LaggedInput { lags: Vec<usize> },
    Custom,
}

impl InstrumentSpec {
    /// `lags: 0..count`.
    pub fn lagged(count: usize) -> Self {
        InstrumentSpec::LaggedInput { lags: (0..count).collect() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instrument {
    /// M×N, column t is r(t).
    pub rm: Mat,
    pub spec: InstrumentSpec,
}

impl Instrument {
    pub fn identity(n_data: usize) -> Self {
        Self { rm: Mat::identity(n_data, n_data), spec: InstrumentSpec::Identity }
    }

    pub fn custom(rm: Mat) -> Self {
        Self { rm, spec: InstrumentSpec::Custom }
    }

    pub fn rows(&self) -> usize {
        self.rm.nrows()
    }

    pub fn samples(&self) -> usize {
        self.rm.ncols()
    }
}

/// Instrument aligned with the `n_data` data columns starting at t = 0.
pub fn build_instrument(traj: &Trajectory, spec: &InstrumentSpec, n_data: usize) -> Result<Instrument> {
    match spec {
        InstrumentSpec::Identity => Ok(Instrument::identity(n_data)),
        InstrumentSpec::Custom => Err(Error::InvalidArgument(
            "custom instruments are supplied as a matrix (see Instrument::custom / load_instrument)".into(),
        )),
        InstrumentSpec::LaggedInput { lags } => {
            if lags.is_empty() {
                return Err(Error::InvalidArgument("lagged instrument needs at least one lag".into()));
            }
            let max_lag = *lags.iter().max().unwrap();
            let pre = traj.pre_samples();
            if pre < max_lag {
                return Err(Error::InsufficientPreSamples { needed: max_lag, available: pre });
            }
            if pre + n_data > traj.len() {
                return Err(dim_err(format!("instrument window of {n_data} samples exceeds the trajectory")));
            }
            let m = traj.input_dim();
            let mut rm = Mat::zeros(m * lags.len(), n_data);
            for (b, &lag) in lags.iter().enumerate() {
                rm.view_mut((b * m, 0), (m, n_data))
                    .copy_from(&traj.u.columns(pre - lag, n_data));
            }
            Ok(Instrument { rm, spec: spec.clone() })
        }
    }
}

/// Headerless M×N CSV.
pub fn load_instrument(path: impl AsRef<Path>) -> Result<Instrument> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| Error::Malformed(format!("bad number `{f}`"))))
            .collect::<Result<Vec<_>>>()?;
        if rows.first().is_some_and(|r| r.len() != row.len()) {
            return Err(Error::Malformed("ragged instrument matrix".into()));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Malformed("empty instrument file".into()));
    }
    Ok(Instrument::custom(linalg::from_rows(&rows)))
}

/// Quadratic noise set
/// `[I; R₋E₋ᵀ]ᵀ [[Q11, Q12], [Q12ᵀ, Q22]] [I; R₋E₋ᵀ] ⪰ 0` with `Q22 ≺ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseBound {
    #[serde(with = "linalg::serde_mat::rows")]
    pub q11: Mat,
    #[serde(with = "linalg::serde_mat::rows")]
    pub q12: Mat,
    #[serde(with = "linalg::serde_mat::rows")]
    pub q22: Mat,
}

impl NoiseBound {
    pub fn new(q11: Mat, q12: Mat, q22: Mat) -> Result<Self> {
        let p = q11.nrows();
        let m = q22.nrows();
        if q11.ncols() != p || q22.ncols() != m || q12.shape() != (p, m) {
            return Err(dim_err(format!(
                "noise bound blocks {:?}, {:?}, {:?} are inconsistent",
                q11.shape(),
                q12.shape(),
                q22.shape()
            )));
        }
        let top = linalg::max_sym_eigenvalue(&q22);
        if top >= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "Q22 must be negative definite (largest eigenvalue {top:e})"
            )));
        }
        Ok(Self { q11, q12, q22 })
    }

    pub fn noise_dim(&self) -> usize {
        self.q11.nrows()
    }

    pub fn instrument_rows(&self) -> usize {
        self.q22.nrows()
    }

    /// Full (p+M)×(p+M) matrix Q.
    pub fn matrix(&self) -> Mat {
        let q21 = self.q12.transpose();
        let (p, m) = (self.noise_dim(), self.instrument_rows());
        linalg::block(
            &[p, m],
            &[p, m],
            &[vec![Some(&self.q11), Some(&self.q12)], vec![Some(&q21), Some(&self.q22)]],
        )
    }

    /// PSD tolerance used by every membership-style check against this bound.
    pub fn tol_psd(&self) -> f64 {
        1e-9 * (1.0 + linalg::norm2(&self.q11))
    }
}

/// `(1/N) E₋R₋ᵀR₋E₋ᵀ ⪯ H_u`, i.e. `Q11 = N·H_u`, `Q12 = 0`, `Q22 = -I_M`.
pub fn make_cross_cov_bound(hu: &Mat, n_data: usize, m_rows: usize) -> Result<NoiseBound> {
    if hu.nrows() != hu.ncols() {
        return Err(dim_err("H_u must be square"));
    }
    let min = linalg::min_sym_eigenvalue(hu);
    if min < -1e-12 * (1.0 + linalg::norm2(hu)) {
        return Err(Error::NotPsd { min_eig: min });
    }
    if m_rows == 0 {
        return Err(Error::InvalidArgument("instrument must have at least one row".into()));
    }
    let p = hu.nrows();
    NoiseBound::new(
        linalg::symmetrize(hu) * n_data as f64,
        Mat::zeros(p, m_rows),
        -Mat::identity(m_rows, m_rows),
    )
}

/// The p×p matrix whose positive semidefiniteness defines admissibility of `em`.
pub fn noise_bound_matrix(em: &Mat, r: &Instrument, q: &NoiseBound) -> Result<Mat> {
    if em.ncols() != r.samples() {
        return Err(dim_err(format!("noise has {} samples, instrument {}", em.ncols(), r.samples())));
    }
    if em.nrows() != q.noise_dim() || r.rows() != q.instrument_rows() {
        return Err(dim_err("noise/instrument dimensions do not match the bound"));
    }
    let w = &r.rm * em.transpose();
    let cross = &q.q12 * &w;
    let val = &q.q11 + &cross + cross.transpose() + w.transpose() * &q.q22 * &w;
    Ok(linalg::symmetrize(&val))
}

pub fn check_noise_bound(em: &Mat, r: &Instrument, q: &NoiseBound) -> Result<bool> {
    let val = noise_bound_matrix(em, r, q)?;
    Ok(linalg::is_psd(&val, q.tol_psd()))
}
