//! Monte-Carlo informativity sweeps on the benchmark system.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{
    build_instrument, build_io_matrices, build_state_matrices, check_noise_bound, make_cross_cov_bound, Instrument,
    InstrumentSpec, NoiseBound, Trajectory,
};
use crate::error::{Error, Result};
use crate::informativity::{
    build_feasible_form_io, build_feasible_form_state, decide_h2, decide_hinf, decide_stab, Decision, FeasibleSetForm,
    Objective, Verdict,
};
use crate::lifting::{arx_from_state_space, default_io_performance, lift_structure, simulate_arx, simulate_state, ArxModel, LiftingStructure};
use crate::linalg::{self, Mat};
use crate::sdp::SolverContract;

/// (A0, B0, Cz) of the benchmark; z = x₃.
pub fn benchmark_system() -> (Mat, Mat, Mat) {
    let a0 = Mat::from_row_slice(
        3,
        3,
        &[-0.2414, -0.8649, 0.6277, 0.3192, -0.0301, 1.0933, 0.3129, -0.1649, 1.1093],
    );
    let b0 = Mat::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 1.0, 1.0]);
    let cz = Mat::from_row_slice(1, 3, &[0.0, 0.0, 1.0]);
    (a0, b0, cz)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum NoiseModel {
    BallUniform { radius_sq: f64 },
    IntervalUniform { halfwidth: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BoundSpec {
    /// E₋E₋ᵀ ⪯ N·hu·I (identity instrument).
    Norm { hu: f64 },
    /// Lagged-input instrument with `lags` delays 0..lags-1 and H_u = hu·I.
    CrossCov { hu: f64, lags: usize },
}

impl BoundSpec {
    pub fn label(&self) -> &'static str {
        match self {
            BoundSpec::Norm { .. } => "norm",
            BoundSpec::CrossCov { .. } => "crosscov",
        }
    }

    fn hu(&self) -> f64 {
        match *self {
            BoundSpec::Norm { hu } | BoundSpec::CrossCov { hu, .. } => hu,
        }
    }

    fn max_lag(&self) -> usize {
        match *self {
            BoundSpec::Norm { .. } => 0,
            BoundSpec::CrossCov { lags, .. } => lags.saturating_sub(1),
        }
    }

    pub fn instrument_spec(&self) -> InstrumentSpec {
        match *self {
            BoundSpec::Norm { .. } => InstrumentSpec::Identity,
            BoundSpec::CrossCov { lags, .. } => InstrumentSpec::lagged(lags),
        }
    }
}

fn default_reps() -> usize {
    20
}

fn default_input_std() -> f64 {
    1.0
}

fn default_objective() -> Objective {
    Objective::H2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(rename = "N_grid")]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    pub noise: NoiseModel,
    pub bounds: Vec<BoundSpec>,
    /// Output rows C₀ for the input-output study; empty for input-state data.
    #[serde(default)]
    pub output_matrices: Vec<Vec<f64>>,
    #[serde(default = "default_objective")]
    pub objective: Objective,
    /// Standard deviation of the i.i.d. Gaussian input.
    #[serde(default = "default_input_std")]
    pub input_std: f64,
    #[serde(default)]
    pub solver: Option<SolverContract>,
    /// Fixed γ for H∞ sweeps; bisection when absent.
    #[serde(default)]
    pub gamma: Option<f64>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidArgument("reps must be at least 1".into()));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("N_grid must be strictly ascending".into()));
        }
        if self.n_grid.first() == Some(&0) {
            return Err(Error::InvalidArgument("N must be positive".into()));
        }
        if self.bounds.is_empty() {
            return Err(Error::InvalidArgument("at least one bound is required".into()));
        }
        if !(self.input_std > 0.0) {
            return Err(Error::InvalidArgument("input_std must be positive".into()));
        }
        for c in &self.output_matrices {
            if c.len() != 3 {
                return Err(Error::InvalidArgument("output matrices must have 3 entries".into()));
            }
        }
        Ok(())
    }

    /// Input-state sweep: norm bound (0.35) against cross-covariance bound (I, 10 lags).
    pub fn desk_state() -> Self {
        Self {
            seed: 2022,
            n_grid: vec![2, 5, 10, 15, 20, 30, 50, 100, 250],
            reps: 20,
            noise: NoiseModel::BallUniform { radius_sq: 0.35 },
            bounds: vec![BoundSpec::Norm { hu: 0.35 }, BoundSpec::CrossCov { hu: 1.0, lags: 10 }],
            output_matrices: Vec::new(),
            objective: Objective::H2,
            input_std: 1.0,
            solver: None,
            gamma: None,
        }
    }

    /// Input-output study over three output choices.
    pub fn desk_io() -> Self {
        Self {
            seed: 2022,
            n_grid: vec![2, 5, 10, 15, 20, 30, 50, 100, 250],
            reps: 20,
            noise: NoiseModel::IntervalUniform { halfwidth: 0.35 },
            bounds: vec![BoundSpec::CrossCov { hu: 0.3, lags: 10 }],
            output_matrices: vec![vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]],
            objective: Objective::H2,
            input_std: 1.0,
            solver: None,
            gamma: None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn contract(&self) -> SolverContract {
        self.solver.unwrap_or_else(SolverContract::from_env)
    }

    fn pre_samples(&self, arx_lag: usize) -> usize {
        let b = self.bounds.iter().map(|b| b.max_lag()).max().unwrap_or(0);
        b.max(arx_lag)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Cell seed derived from (master seed, N, rep).
pub fn cell_seed(seed: u64, n: usize, rep: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ n as u64) ^ rep as u64)
}

fn sample_noise(model: &NoiseModel, dim: usize, len: usize, rng: &mut ChaCha8Rng) -> Mat {
    match *model {
        NoiseModel::BallUniform { radius_sq } => {
            let r_max = radius_sq.max(0.0).sqrt();
            let mut e = Mat::zeros(dim, len);
            for t in 0..len {
                let dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                // Radius density ∝ r^{dim-1} on [0, r_max].
                let r = r_max * rng.gen::<f64>().powf(1.0 / dim as f64);
                for i in 0..dim {
                    e[(i, t)] = if norm > 0.0 { r * dir[i] / norm } else { 0.0 };
                }
            }
            e
        }
        NoiseModel::IntervalUniform { halfwidth } => {
            let h = halfwidth.abs();
            if h == 0.0 {
                return Mat::zeros(dim, len);
            }
            let d = Uniform::new_inclusive(-h, h);
            Mat::from_fn(dim, len, |_, _| d.sample(rng))
        }
    }
}

/// A generated dataset: trajectory with pre-samples and the noise that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub trajectory: Trajectory,
    /// Noise over the whole trajectory, column-aligned with it.
    pub noise: Mat,
    pub pre: usize,
    pub n_data: usize,
}

impl Dataset {
    /// Noise columns that enter the data equation (the N data samples).
    pub fn data_noise(&self) -> Mat {
        self.noise.columns(self.pre, self.n_data).into_owned()
    }
}

/// Input-state data with `pre` pre-samples and `n` data columns (X₋ has n columns).
pub fn generate_state_dataset(a0: &Mat, b0: &Mat, noise: &NoiseModel, input_std: f64, pre: usize, n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = pre + n + 1;
    let m = b0.ncols();
    let dist = Normal::new(0.0, input_std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let u = Mat::from_fn(m, total, |_, _| dist.sample(&mut rng));
    let e = sample_noise(noise, a0.nrows(), total, &mut rng);
    let traj = simulate_state(a0, b0, &u, &e, &nalgebra::DVector::zeros(a0.nrows()), -(pre as i64))?;
    Ok(Dataset { trajectory: traj, noise: e, pre, n_data: n })
}

/// Input-output data from an ARX model with `pre` pre-samples and `n` data columns.
pub fn generate_io_dataset(model: &ArxModel, noise: &NoiseModel, input_std: f64, pre: usize, n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = pre + n;
    let dist = Normal::new(0.0, input_std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let u = Mat::from_fn(model.m, total, |_, _| dist.sample(&mut rng));
    let e = sample_noise(noise, model.p, total, &mut rng);
    let traj = simulate_arx(model, &u, &e, -(pre as i64))?;
    Ok(Dataset { trajectory: traj, noise: e, pre, n_data: n })
}

/// Dataset for cell (N, rep) of a config; `output` selects the IO study row.
pub fn generate_dataset(cfg: &ExperimentConfig, n: usize, rep: usize, output: Option<&[f64]>) -> Result<Dataset> {
    let (a0, b0, _) = benchmark_system();
    let seed = cell_seed(cfg.seed, n, rep);
    match output {
        None => generate_state_dataset(&a0, &b0, &cfg.noise, cfg.input_std, cfg.pre_samples(0), n, seed),
        Some(c0) => {
            let model = arx_from_state_space(&a0, &b0, &Mat::from_row_slice(1, 3, c0))?;
            generate_io_dataset(&model, &cfg.noise, cfg.input_std, cfg.pre_samples(model.l), n, seed)
        }
    }
}

fn bound_for(spec: &BoundSpec, traj: &Trajectory, p: usize, n_data: usize) -> Result<(Instrument, NoiseBound)> {
    let r = build_instrument(traj, &spec.instrument_spec(), n_data)?;
    let q = make_cross_cov_bound(&(Mat::identity(p, p) * spec.hu()), n_data, r.rows())?;
    Ok((r, q))
}

/// The feasible set of one dataset under one bound, with the lifting for IO data.
pub fn feasible_set(ds: &Dataset, spec: &BoundSpec, lag: Option<usize>) -> Result<(FeasibleSetForm, Option<LiftingStructure>, bool)> {
    let traj = &ds.trajectory;
    match lag {
        None => {
            let d = build_state_matrices(traj)?;
            let (r, q) = bound_for(spec, traj, d.state_dim(), d.samples())?;
            let ok = check_noise_bound(&ds.data_noise(), &r, &q)?;
            Ok((build_feasible_form_state(&d, &r, &q)?, None, ok))
        }
        Some(l) => {
            let d = build_io_matrices(traj, l)?;
            let s = lift_structure(l, d.output_dim(), d.input_dim())?;
            let (r, q) = bound_for(spec, traj, d.output_dim(), d.samples())?;
            let ok = check_noise_bound(&ds.data_noise(), &r, &q)?;
            Ok((build_feasible_form_io(&d, &r, &q, &s)?, Some(s), ok))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    #[serde(rename = "N")]
    pub n: usize,
    pub rep: usize,
    pub series: String,
    pub informative: bool,
    pub gamma_sq: Option<f64>,
    pub status: String,
    pub bound_satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    #[serde(rename = "N")]
    pub n: usize,
    pub series: String,
    pub fraction: f64,
    pub median: Option<f64>,
    pub p25: Option<f64>,
    pub p75: Option<f64>,
    pub bound_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<Cell>,
    pub series: Vec<String>,
    pub n_grid: Vec<usize>,
}

fn verdict_status(v: &Verdict) -> &'static str {
    match v {
        Verdict::Informative => "informative",
        Verdict::NotInformative { .. } => "not_informative",
        Verdict::NoCertificate => "no_certificate",
        Verdict::NumericalFailure { .. } => "numerical_failure",
    }
}

/// Linear-interpolation percentile of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

impl SweepResult {
    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut groups: BTreeMap<(usize, usize), Vec<&Cell>> = BTreeMap::new();
        for c in &self.cells {
            let si = self.series.iter().position(|s| *s == c.series).unwrap_or(usize::MAX);
            groups.entry((c.n, si)).or_default().push(c);
        }
        groups
            .into_iter()
            .map(|((n, si), cells)| {
                let mut g: Vec<f64> = cells.iter().filter_map(|c| c.gamma_sq).collect();
                g.sort_by(f64::total_cmp);
                Aggregate {
                    n,
                    series: self.series.get(si).cloned().unwrap_or_default(),
                    fraction: cells.iter().filter(|c| c.informative).count() as f64 / cells.len() as f64,
                    median: percentile(&g, 0.5),
                    p25: percentile(&g, 0.25),
                    p75: percentile(&g, 0.75),
                    bound_violations: cells.iter().filter(|c| !c.bound_satisfied).count(),
                }
            })
            .collect()
    }

    pub fn fraction(&self, series: &str, n: usize) -> Option<f64> {
        self.aggregates().into_iter().find(|a| a.series == series && a.n == n).map(|a| a.fraction)
    }
}

fn evaluate_cell(cfg: &ExperimentConfig, ds: &Dataset, spec: &BoundSpec, lag: Option<usize>, contract: &SolverContract) -> Result<(Decision, bool)> {
    let (f, s, ok) = feasible_set(ds, spec, lag)?;
    let (cz, dz) = match &s {
        Some(s) => default_io_performance(s),
        None => (benchmark_system().2, Mat::zeros(1, f.m)),
    };
    let d = match cfg.objective {
        Objective::Stab => decide_stab(&f, s.as_ref(), None, contract)?,
        Objective::H2 => decide_h2(&f, s.as_ref(), &cz, &dz, None, contract)?,
        Objective::Hinf => decide_hinf(&f, s.as_ref(), &cz, &dz, cfg.gamma, None, contract)?,
    };
    Ok((d, ok))
}

fn to_cell(n: usize, rep: usize, series: String, res: Result<(Decision, bool)>) -> Cell {
    match res {
        Ok((d, ok)) => {
            let informative = d.verdict.is_informative();
            let gamma_sq = if informative { d.result.as_ref().and_then(|r| r.gamma).map(|g| g * g) } else { None };
            Cell { n, rep, series, informative, gamma_sq, status: verdict_status(&d.verdict).to_string(), bound_satisfied: ok }
        }
        Err(e) => Cell {
            n,
            rep,
            series,
            informative: false,
            gamma_sq: None,
            status: format!("error: {e}"),
            bound_satisfied: true,
        },
    }
}

/// Input-state sweep: one series per configured bound, paired datasets.
pub fn run_state_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let contract = cfg.contract();
    let jobs: Vec<(usize, usize)> = cfg.n_grid.iter().flat_map(|&n| (0..cfg.reps).map(move |r| (n, r))).collect();
    let mut cells: Vec<Cell> = jobs
        .par_iter()
        .flat_map_iter(|&(n, rep)| {
            let ds = generate_dataset(cfg, n, rep, None);
            cfg.bounds
                .iter()
                .map(|b| {
                    let res = ds.as_ref().map_err(clone_err).and_then(|ds| evaluate_cell(cfg, ds, b, None, &contract));
                    to_cell(n, rep, b.label().to_string(), res)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    cells.sort_by(|a, b| (a.n, a.rep, &a.series).cmp(&(b.n, b.rep, &b.series)));
    Ok(SweepResult {
        cells,
        series: cfg.bounds.iter().map(|b| b.label().to_string()).collect(),
        n_grid: cfg.n_grid.clone(),
    })
}

fn clone_err(e: &Error) -> Error {
    Error::InvalidArgument(e.to_string())
}

pub fn output_label(c0: &[f64]) -> String {
    let parts: Vec<String> = c0.iter().map(|v| format!("{v}")).collect();
    format!("C0=[{}]", parts.join(" "))
}

/// ARX order used for the input-output study (the benchmark order).
pub const IO_LAG: usize = 3;

/// Input-output study: one series per output row (and per bound if several).
pub fn run_io_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    if cfg.output_matrices.is_empty() {
        return Err(Error::InvalidArgument("the input-output study needs output_matrices".into()));
    }
    let contract = cfg.contract();
    let mut series = Vec::new();
    let mut jobs = Vec::new();
    for c0 in &cfg.output_matrices {
        for b in &cfg.bounds {
            let name = if cfg.bounds.len() == 1 { output_label(c0) } else { format!("{} {}", output_label(c0), b.label()) };
            series.push(name.clone());
            for &n in &cfg.n_grid {
                for rep in 0..cfg.reps {
                    jobs.push((c0.clone(), *b, name.clone(), n, rep));
                }
            }
        }
    }
    let mut cells: Vec<Cell> = jobs
        .par_iter()
        .map(|(c0, b, name, n, rep)| {
            let res = generate_dataset(cfg, *n, *rep, Some(c0)).and_then(|ds| evaluate_cell(cfg, &ds, b, Some(IO_LAG), &contract));
            to_cell(*n, *rep, name.clone(), res)
        })
        .collect();
    let order: BTreeMap<String, usize> = series.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    cells.sort_by_key(|c| (order[&c.series], c.n, c.rep));
    Ok(SweepResult { cells, series, n_grid: cfg.n_grid.clone() })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SweepResult> {
    if cfg.output_matrices.is_empty() {
        run_state_sweep(cfg)
    } else {
        run_io_sweep(cfg)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.10e}")).unwrap_or_default()
}

/// Writes `fractions.csv`, `gamma.csv` and `cells.csv` into `dir`.
pub fn emit_plot_data(r: &SweepResult, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let aggs = r.aggregates();

    let mut w = csv::Writer::from_path(dir.join("fractions.csv"))?;
    let mut header = vec!["N".to_string()];
    header.extend(r.series.iter().map(|s| format!("fraction_{s}")));
    w.write_record(&header)?;
    let present: Vec<usize> = r.n_grid.iter().copied().filter(|n| aggs.iter().any(|a| a.n == *n)).collect();
    for n in &present {
        let mut row = vec![n.to_string()];
        for s in &r.series {
            row.push(aggs.iter().find(|a| a.n == *n && a.series == *s).map(|a| format!("{}", a.fraction)).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("gamma.csv"))?;
    w.write_record(["series", "N", "median", "p25", "p75"])?;
    for a in &aggs {
        w.write_record([a.series.clone(), a.n.to_string(), fmt_opt(a.median), fmt_opt(a.p25), fmt_opt(a.p75)])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("cells.csv"))?;
    w.write_record(["N", "rep", "series", "informative", "gamma_sq", "status", "bound_satisfied"])?;
    for c in &r.cells {
        w.write_record([
            c.n.to_string(),
            c.rep.to_string(),
            c.series.clone(),
            c.informative.to_string(),
            c.gamma_sq.map(|g| format!("{g:.17e}")).unwrap_or_default(),
            c.status.clone(),
            c.bound_satisfied.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `cells.csv` back.
pub fn read_cells(path: impl AsRef<Path>) -> Result<Vec<Cell>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let parse_err = |what: &str| Error::Malformed(format!("cells.csv: bad {what}"));
        out.push(Cell {
            n: rec[0].parse().map_err(|_| parse_err("N"))?,
            rep: rec[1].parse().map_err(|_| parse_err("rep"))?,
            series: rec[2].to_string(),
            informative: rec[3].parse().map_err(|_| parse_err("informative"))?,
            gamma_sq: if rec[4].is_empty() { None } else { Some(rec[4].parse().map_err(|_| parse_err("gamma_sq"))?) },
            status: rec[5].to_string(),
            bound_satisfied: rec[6].parse().map_err(|_| parse_err("bound_satisfied"))?,
        });
    }
    Ok(out)
}

/// True [A B] (or [Ā B̄ B₀]) of the benchmark for diagnostics.
pub fn true_parameters(output: Option<&[f64]>) -> Result<Mat> {
    let (a0, b0, _) = benchmark_system();
    match output {
        None => Ok(linalg::hstack(&[&a0, &b0])),
        Some(c0) => {
            let model = arx_from_state_space(&a0, &b0, &Mat::from_row_slice(1, 3, c0))?;
            Ok(linalg::hstack(&[&model.parameter_row(), &model.b_coeffs[0]]))
        }
    }
}
