//! Feasible-set quadratic forms, informativity LMIs and controller extraction.
//!
//! Parameters are handled as the `q × (n+m)` matrix θ of unknown rows:
//! θ = [Ā B̄ B₀] (q = p) for input-output data and θ = [A B] (q = n) for
//! input-state data. The feasible set is `{θ : [I; θᵀ]ᵀ Λ_r [I; θᵀ] ⪰ 0}`
//! where `Λ_r` is the principal submatrix of Λ on the unknown rows.

use serde::{Deserialize, Serialize};

use crate::data_model::{Instrument, IoDataMatrices, NoiseBound, StateDataMatrices};
use crate::error::{dim_err, Error, Result};
use crate::lifting::LiftingStructure;
use crate::linalg::{self, Mat};
use crate::sdp::{self, Affine, SdpProblem, SolveOutcome, SolveStatus, SolverContract, VarBuilder};

pub const EPS_PD: f64 = 1e-6;
pub const EPS_STRICT: f64 = 1e-8;
/// Smallest β (with P ⪯ I) accepted as strict feasibility of the stabilization LMI.
pub const BETA_MIN: f64 = 1e-6;
/// Largest accepted condition number of P at extraction.
pub const MAX_COND_P: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    InputOutput,
    InputState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleSetForm {
    /// (2n+m)×(2n+m), symmetric.
    pub lambda: Mat,
    pub n: usize,
    pub m: usize,
    /// Number of unknown parameter rows q.
    pub param_rows: usize,
    pub kind: DataKind,
    /// Full column rank of R₋[Z₋ᵀ U₋ᵀ] (or R₋[X₋ᵀ U₋ᵀ]).
    pub rank_flag: bool,
    pub tol_psd: f64,
}

impl FeasibleSetForm {
    pub fn dim(&self) -> usize {
        2 * self.n + self.m
    }

    fn reduced_indices(&self) -> Vec<usize> {
        (0..self.param_rows).chain(self.n..self.dim()).collect()
    }

    /// Λ restricted to the unknown rows: (q+n+m)×(q+n+m).
    pub fn reduced(&self) -> Mat {
        linalg::principal_submatrix(&self.lambda, &self.reduced_indices())
    }

    pub fn blocks(&self) -> (Mat, Mat, Mat) {
        let n = self.n;
        let k = self.n + self.m;
        (
            self.lambda.view((0, 0), (n, n)).into_owned(),
            self.lambda.view((0, n), (n, k)).into_owned(),
            self.lambda.view((n, n), (k, k)).into_owned(),
        )
    }

    fn check_theta(&self, theta: &Mat) -> Result<()> {
        if theta.shape() != (self.param_rows, self.n + self.m) {
            return Err(dim_err(format!(
                "parameter matrix is {:?}, expected {}×{}",
                theta.shape(),
                self.param_rows,
                self.n + self.m
            )));
        }
        Ok(())
    }

    /// `[I; θᵀ]ᵀ Λ_r [I; θᵀ]`, q×q.
    pub fn quad_form(&self, theta: &Mat) -> Result<Mat> {
        self.check_theta(theta)?;
        let q = self.param_rows;
        let top = linalg::vstack(&[&Mat::identity(q, q), &theta.transpose()]);
        Ok(linalg::symmetrize(&(top.transpose() * self.reduced() * top)))
    }

    pub fn contains(&self, theta: &Mat) -> Result<bool> {
        Ok(linalg::min_sym_eigenvalue(&self.quad_form(theta)?) >= -self.tol_psd)
    }

    /// Maximizer of the quadratic form, `θ_c = -Λ_r12 Λ_r22⁺` (the IV estimate).
    pub fn center(&self) -> Mat {
        let r = self.reduced();
        let q = self.param_rows;
        let k = self.n + self.m;
        let r12 = r.view((0, q), (q, k)).into_owned();
        let r22 = r.view((q, q), (k, k)).into_owned();
        -(r12 * linalg::pinv(&r22))
    }

    /// Full (n+m)×n matrix Z = [Λ_eᵀ; B_eᵀ] (or [Aᵀ; Bᵀ]) for a parameter θ.
    pub fn theta_to_z(&self, theta: &Mat) -> Result<Mat> {
        self.check_theta(theta)?;
        let mut z = Mat::zeros(self.n + self.m, self.n);
        z.view_mut((0, 0), (self.n + self.m, self.param_rows)).copy_from(&theta.transpose());
        Ok(z)
    }

    /// `(A, B)` of a member: lifted with J1, J2 for input-output data.
    pub fn system_of(&self, theta: &Mat, s: Option<&LiftingStructure>) -> Result<(Mat, Mat)> {
        self.check_theta(theta)?;
        let (n, m, q) = (self.n, self.m, self.param_rows);
        match self.kind {
            DataKind::InputState => Ok((theta.columns(0, n).into_owned(), theta.columns(n, m).into_owned())),
            DataKind::InputOutput => {
                let s = s.ok_or_else(|| Error::InvalidArgument("input-output members need the lifting structure".into()))?;
                let mut a = s.j1.clone();
                let mut b = s.j2.clone();
                a.view_mut((0, 0), (q, n)).copy_from(&theta.columns(0, n));
                b.view_mut((0, 0), (q, m)).copy_from(&theta.columns(n, m));
                Ok((a, b))
            }
        }
    }
}

fn feasible_form(
    left: &Mat,
    data_rows: &Mat,
    regress: &Mat,
    um: &Mat,
    hz: &Mat,
    r: &Instrument,
    q: &NoiseBound,
    kind: DataKind,
) -> Result<FeasibleSetForm> {
    // left: Y₋ (p×N) or X₊ (n×N); regress: Z₋ or X₋ (n×N); hz: n×q.
    let n = regress.nrows();
    let m = um.nrows();
    let big_n = regress.ncols();
    if left.ncols() != big_n || um.ncols() != big_n || r.samples() != big_n {
        return Err(dim_err("data matrices and instrument must share the sample count"));
    }
    if q.noise_dim() != hz.ncols() || q.instrument_rows() != r.rows() || hz.nrows() != n {
        return Err(dim_err("noise bound does not match the data/instrument dimensions"));
    }
    let rt = r.rm.transpose();
    let mm = r.rows();
    let w01 = hz * (data_rows * &rt);
    let w11 = -(regress * &rt);
    let w21 = -(um * &rt);
    let id = Mat::identity(n, n);
    let w = linalg::block(
        &[n, n, m],
        &[n, mm],
        &[vec![Some(&id), Some(&w01)], vec![None, Some(&w11)], vec![None, Some(&w21)]],
    );
    let qe11 = hz * &q.q11 * hz.transpose();
    let qe12 = hz * &q.q12;
    let qe21 = qe12.transpose();
    let qe = linalg::block(&[n, mm], &[n, mm], &[vec![Some(&qe11), Some(&qe12)], vec![Some(&qe21), Some(&q.q22)]]);
    let lambda = linalg::symmetrize(&(&w * qe * w.transpose()));
    let phi_r = linalg::hstack(&[&(&r.rm * regress.transpose()), &(&r.rm * um.transpose())]);
    let rank_flag = phi_r.nrows() >= n + m && linalg::rank(&phi_r, 1e-10) == n + m;
    Ok(FeasibleSetForm { lambda, n, m, param_rows: hz.ncols(), kind, rank_flag, tol_psd: q.tol_psd() })
}

pub fn build_feasible_form_io(d: &IoDataMatrices, r: &Instrument, q: &NoiseBound, s: &LiftingStructure) -> Result<FeasibleSetForm> {
    if s.n != d.state_dim() || s.m != d.input_dim() || s.p != d.output_dim() {
        return Err(dim_err("lifting structure does not match the data"));
    }
    feasible_form(&d.ym, &d.ym, &d.zm, &d.um, &s.hz, r, q, DataKind::InputOutput)
}

pub fn build_feasible_form_state(d: &StateDataMatrices, r: &Instrument, q: &NoiseBound) -> Result<FeasibleSetForm> {
    let n = d.state_dim();
    feasible_form(&d.xp, &d.xp, &d.xm, &d.um, &Mat::identity(n, n), r, q, DataKind::InputState)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlaterReport {
    pub holds: bool,
    /// Z ∈ ℝ^{(n+m)×n} with [I; Z]ᵀΛ[I; Z] ≻ 0.
    #[serde(with = "opt_rows", default)]
    pub witness: Option<Mat>,
    pub witness_label: Option<String>,
    pub witness_min_eig: Option<f64>,
    /// Number of positive eigenvalues of Λ (≥ n is necessary).
    pub positive_inertia: usize,
}

mod opt_rows {
    use crate::linalg::{from_rows, to_rows, Mat};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<Mat>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Mat>, D::Error> {
        Ok(Option::<Vec<Vec<f64>>>::deserialize(d)?.map(|r| from_rows(&r)))
    }
}

/// Candidate list: IV center, optional truth, zero.
pub fn default_slater_candidates(f: &FeasibleSetForm, truth: Option<&Mat>) -> Vec<(String, Mat)> {
    let mut c = Vec::new();
    if let Ok(z) = f.theta_to_z(&f.center()) {
        c.push(("center".to_string(), z));
    }
    if let Some(t) = truth {
        if let Ok(z) = f.theta_to_z(t) {
            c.push(("truth".to_string(), z));
        }
    }
    c.push(("zero".to_string(), Mat::zeros(f.n + f.m, f.n)));
    c
}

pub fn slater_diagnostics(f: &FeasibleSetForm, candidates: &[(String, Mat)]) -> SlaterReport {
    let ev = linalg::sym_eigenvalues(&f.lambda);
    let tol = f.tol_psd;
    let positive_inertia = ev.iter().filter(|&&e| e > tol).count();
    let mut best: Option<(String, Mat, f64)> = None;
    for (label, z) in candidates {
        if z.shape() != (f.n + f.m, f.n) {
            continue;
        }
        let top = linalg::vstack(&[&Mat::identity(f.n, f.n), z]);
        let e = linalg::min_sym_eigenvalue(&(top.transpose() * &f.lambda * &top));
        if e > tol && best.as_ref().is_none_or(|b| e > b.2) {
            best = Some((label.clone(), z.clone(), e));
        }
    }
    match best {
        Some((label, z, e)) => SlaterReport {
            holds: true,
            witness: Some(z),
            witness_label: Some(label),
            witness_min_eig: Some(e),
            positive_inertia,
        },
        None => SlaterReport { holds: false, witness: None, witness_label: None, witness_min_eig: None, positive_inertia },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Stab,
    Hinf,
    H2,
}

/// An assembled LMI together with what is needed to read its solution back.
#[derive(Debug, Clone)]
pub struct LmiProblem {
    pub sdp: SdpProblem,
    pub objective: Objective,
    /// Λ was divided by this inside the LMI; α is reported multiplied back.
    pub lambda_scale: f64,
    pub gamma: Option<f64>,
}

fn scaled(scalar: &Affine, m: &Mat) -> Affine {
    scalar.times(m)
}

fn normalized_lambda(f: &FeasibleSetForm) -> (Mat, f64) {
    let s = linalg::norm2(&f.lambda);
    let s = if s > 0.0 && s.is_finite() { s } else { 1.0 };
    (&f.lambda / s, s)
}

fn structure_mats(f: &FeasibleSetForm, s: Option<&LiftingStructure>) -> Result<(Mat, Mat, Mat)> {
    match f.kind {
        DataKind::InputState => Ok((Mat::zeros(f.n, f.n), Mat::zeros(f.n, f.m), Mat::identity(f.n, f.n))),
        DataKind::InputOutput => {
            let s = s.ok_or_else(|| Error::InvalidArgument("input-output problems need the lifting structure".into()))?;
            if s.n != f.n || s.m != f.m {
                return Err(dim_err("lifting structure does not match the feasible set"));
            }
            Ok((s.j1.clone(), s.j2.clone(), s.hz.clone()))
        }
    }
}

struct Common {
    vb: VarBuilder,
    p: Affine,
    l: Affine,
    alpha: Affine,
    beta: Affine,
    g: Affine,
    lam: Mat,
    scale: f64,
}

fn common(f: &FeasibleSetForm, j1: &Mat, j2: &Mat) -> Common {
    let (n, m) = (f.n, f.m);
    let mut vb = VarBuilder::new();
    let p = vb.symmetric("P", n);
    let l = vb.matrix("L", m, n);
    let alpha = vb.scalar("alpha");
    let beta = vb.scalar("beta");
    let g = &p.lmul(j1) + &l.lmul(j2);
    let (lam, scale) = normalized_lambda(f);
    Common { vb, p, l, alpha, beta, g, lam, scale }
}

fn margin_blocks(c: &Common, n: usize, beta_margin: bool) -> Vec<sdp::LmiBlock> {
    let eps = Affine::constant(Mat::identity(n, n) * EPS_PD);
    let eps_b = Affine::constant(Mat::from_element(1, 1, EPS_STRICT));
    let mut out = vec![(&c.p - &eps).into_lmi()];
    if beta_margin {
        out.push((&c.beta - &eps_b).into_lmi());
    }
    out.push(c.alpha.clone().into_lmi());
    out
}

/// Stabilization LMI (size 3n+m) plus P ⪰ ε, β ≥ ε, α ≥ 0.
pub fn stab_problem(f: &FeasibleSetForm, s: Option<&LiftingStructure>) -> Result<LmiProblem> {
    stab_problem_inner(f, s, true)
}

fn stab_problem_inner(f: &FeasibleSetForm, s: Option<&LiftingStructure>, beta_margin: bool) -> Result<LmiProblem> {
    let (j1, j2, _) = structure_mats(f, s)?;
    let c = common(f, &j1, &j2);
    let (n, m) = (f.n, f.m);
    let beta_i = scaled(&c.beta, &Mat::identity(n, n));
    let p_b = &c.p - &beta_i;
    let gt = c.g.transpose();
    let lt = c.l.transpose();
    let neg_g = -&c.g;
    let neg_gt = -&gt;
    let neg_p = -&c.p;
    let neg_l = -&c.l;
    let neg_lt = -&lt;
    let zm = Affine::zeros(m, m);
    let pi = Affine::block(&[
        vec![Some(&p_b), Some(&neg_g), None, Some(&c.g)],
        vec![Some(&neg_gt), Some(&neg_p), Some(&neg_lt), None],
        vec![None, Some(&neg_l), Some(&zm), Some(&c.l)],
        vec![Some(&gt), None, Some(&lt), Some(&c.p)],
    ]);
    let data = padded(&c.alpha, &c.lam, n);
    let main = (&pi - &data).into_lmi();
    let mut blocks = vec![main];
    blocks.extend(margin_blocks(&c, n, beta_margin));
    let scale = c.scale;
    Ok(LmiProblem { sdp: c.vb.finish(blocks, None), objective: Objective::Stab, lambda_scale: scale, gamma: None })
}

pub fn stab_problem_io(f: &FeasibleSetForm, s: &LiftingStructure) -> Result<LmiProblem> {
    if f.kind != DataKind::InputOutput {
        return Err(Error::InvalidArgument("expected an input-output feasible set".into()));
    }
    stab_problem(f, Some(s))
}

pub fn stab_problem_state(f: &FeasibleSetForm) -> Result<LmiProblem> {
    if f.kind != DataKind::InputState {
        return Err(Error::InvalidArgument("expected an input-state feasible set".into()));
    }
    stab_problem(f, None)
}

/// Stabilization LMI with P ⪯ I and β ≤ 1, maximizing β. β is free below, so the
/// problem stays feasible and the sign of the optimum decides strict feasibility.
pub fn stab_problem_max_beta(f: &FeasibleSetForm, s: Option<&LiftingStructure>) -> Result<LmiProblem> {
    let mut prob = stab_problem_inner(f, s, false)?;
    let n = f.n;
    let pv = prob.sdp.var("P").unwrap().clone();
    let bv = prob.sdp.var("beta").unwrap().clone();
    let mut cap = sdp::LmiBlock { size: n, constant: Mat::identity(n, n), coeffs: Vec::new() };
    let mut k = pv.start;
    for j in 0..n {
        for i in 0..=j {
            let mut e = Mat::zeros(n, n);
            e[(i, j)] = -1.0;
            e[(j, i)] = -1.0;
            cap.coeffs.push((k, e));
            k += 1;
        }
    }
    let bcap = sdp::LmiBlock { size: 1, constant: Mat::identity(1, 1), coeffs: vec![(bv.start, -Mat::identity(1, 1))] };
    prob.sdp.blocks.push(cap);
    prob.sdp.blocks.push(bcap);
    let mut c = vec![0.0; prob.sdp.num_vars];
    c[bv.start] = -1.0;
    prob.sdp.objective = Some(c);
    Ok(prob)
}

/// α·diag(Λ, 0_pad) as an affine expression.
fn padded(alpha: &Affine, lam: &Mat, pad: usize) -> Affine {
    let d = lam.nrows();
    let mut big = Mat::zeros(d + pad, d + pad);
    big.view_mut((0, 0), (d, d)).copy_from(lam);
    scaled(alpha, &big)
}

/// The data border for H∞/H2 uses Y₋ (X₊ for input-state data), mirroring the
/// stabilization LMI; the printed border symbol in the source derivation is
/// not defined anywhere else, so the same Λ as for stabilization is used.
fn perf_main(c: &Common, f: &FeasibleSetForm, top_left: &Affine, corner: &Affine, cz: &Mat, dz: &Mat) -> (Affine, Affine) {
    let (n, m) = (f.n, f.m);
    let pz = cz.nrows();
    let fm = &c.p.lmul(cz) + &c.l.lmul(dz);
    let ft = fm.transpose();
    let gt = c.g.transpose();
    let lt = c.l.transpose();
    let zn = Affine::zeros(n, n);
    let zm = Affine::zeros(m, m);
    let main = Affine::block(&[
        vec![Some(top_left), None, None, Some(&c.g), None],
        vec![None, Some(&zn), None, Some(&c.p), None],
        vec![None, None, Some(&zm), Some(&c.l), None],
        vec![Some(&gt), Some(&c.p), Some(&lt), Some(&c.p), Some(&ft)],
        vec![None, None, None, Some(&fm), Some(corner)],
    ]);
    let data = padded(&c.alpha, &c.lam, n + pz);
    (&main - &data, fm)
}

pub fn hinf_problem(f: &FeasibleSetForm, s: Option<&LiftingStructure>, cz: &Mat, dz: &Mat, gamma: f64) -> Result<LmiProblem> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    check_perf(f, cz, dz)?;
    let (j1, j2, hz) = structure_mats(f, s)?;
    let c = common(f, &j1, &j2);
    let n = f.n;
    let pz = cz.nrows();
    let shift = Affine::constant(&hz * hz.transpose() / gamma);
    let top_left = &(&c.p - &shift) - &scaled(&c.beta, &Mat::identity(n, n));
    let corner = Affine::constant(Mat::identity(pz, pz) * gamma);
    let (main, fm) = perf_main(&c, f, &top_left, &corner, cz, dz);
    let ft = fm.transpose();
    let aux = &Affine::block(&[vec![Some(&c.p), Some(&ft)], vec![Some(&fm), Some(&corner)]])
        - &Affine::constant(Mat::identity(n + pz, n + pz) * EPS_PD);
    let mut blocks = vec![main.into_lmi(), aux.into_lmi()];
    blocks.extend(margin_blocks(&c, n, true));
    let scale = c.scale;
    Ok(LmiProblem { sdp: c.vb.finish(blocks, None), objective: Objective::Hinf, lambda_scale: scale, gamma: Some(gamma) })
}

fn check_perf(f: &FeasibleSetForm, cz: &Mat, dz: &Mat) -> Result<()> {
    if cz.ncols() != f.n || dz.ncols() != f.m || cz.nrows() != dz.nrows() || cz.nrows() == 0 {
        return Err(dim_err(format!(
            "performance output Cz {:?} / Dz {:?} does not match n={}, m={}",
            cz.shape(),
            dz.shape(),
            f.n,
            f.m
        )));
    }
    Ok(())
}

/// H2 LMIs minimizing trace Z; with `gamma_bound`, adds trace Z ≤ γ² and drops the objective.
pub fn h2_problem_with(f: &FeasibleSetForm, s: Option<&LiftingStructure>, cz: &Mat, dz: &Mat, gamma_bound: Option<f64>) -> Result<LmiProblem> {
    check_perf(f, cz, dz)?;
    if let Some(g) = gamma_bound {
        if !(g > 0.0) {
            return Err(Error::InvalidArgument(format!("gamma must be positive, got {g}")));
        }
    }
    let (j1, j2, hz) = structure_mats(f, s)?;
    let mut c = common(f, &j1, &j2);
    let n = f.n;
    let pz = cz.nrows();
    let q = hz.ncols();
    let z = c.vb.symmetric("Z", q);
    let top_left = &c.p - &scaled(&c.beta, &Mat::identity(n, n));
    let corner = Affine::identity(pz);
    let (main, fm) = perf_main(&c, f, &top_left, &corner, cz, dz);
    let ft = fm.transpose();
    let aux1 = &Affine::block(&[vec![Some(&c.p), Some(&ft)], vec![Some(&fm), Some(&corner)]])
        - &Affine::constant(Mat::identity(n + pz, n + pz) * EPS_PD);
    let h = Affine::constant(hz.clone());
    let ht = h.transpose();
    let aux2 = Affine::block(&[vec![Some(&z), Some(&ht)], vec![Some(&h), Some(&c.p)]]);
    let tr = (0..q).fold(Affine::zeros(1, 1), |acc, i| {
        let mut e = Mat::zeros(q, 1);
        e[(i, 0)] = 1.0;
        &acc + &z.rmul(&e).lmul(&e.transpose())
    });
    let mut blocks = vec![main.into_lmi(), aux1.into_lmi(), aux2.into_lmi()];
    blocks.extend(margin_blocks(&c, n, true));
    let objective = match gamma_bound {
        None => Some(c.vb.objective_from(&tr)),
        Some(g) => {
            blocks.push((&Affine::constant(Mat::from_element(1, 1, g * g)) - &tr).into_lmi());
            None
        }
    };
    let scale = c.scale;
    Ok(LmiProblem { sdp: c.vb.finish(blocks, objective), objective: Objective::H2, lambda_scale: scale, gamma: gamma_bound })
}

pub fn h2_problem(f: &FeasibleSetForm, s: Option<&LiftingStructure>, cz: &Mat, dz: &Mat) -> Result<LmiProblem> {
    h2_problem_with(f, s, cz, dz, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub slater: Option<SlaterReport>,
    pub residual_eigenvalues: Vec<f64>,
    pub backend_status: String,
    pub p_condition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub feasible: bool,
    pub objective: Objective,
    #[serde(rename = "K", with = "linalg::serde_mat::dims")]
    pub k: Mat,
    #[serde(rename = "P", with = "linalg::serde_mat::dims")]
    pub p: Mat,
    #[serde(rename = "L", with = "linalg::serde_mat::dims")]
    pub l: Mat,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: Option<f64>,
    pub diagnostics: Diagnostics,
}

impl SynthesisResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// K = L P⁻¹ via a linear solve with P.
pub fn gain_from(p: &Mat, l: &Mat) -> Result<(Mat, f64)> {
    let ev = linalg::sym_eigenvalues(p);
    let (lo, hi) = (ev.first().copied().unwrap_or(0.0), ev.last().copied().unwrap_or(0.0));
    if !(lo > 0.0) {
        return Err(Error::Extraction(format!("P is not positive definite (min eigenvalue {lo:e})")));
    }
    let cond = hi / lo;
    if cond > MAX_COND_P {
        return Err(Error::Extraction(format!("P is numerically singular (condition number {cond:e})")));
    }
    let chol = nalgebra::Cholesky::new(linalg::symmetrize(p))
        .ok_or_else(|| Error::Extraction("Cholesky factorization of P failed".into()))?;
    Ok((chol.solve(&l.transpose()).transpose(), cond))
}

pub fn extract_result(outcome: &SolveOutcome, problem: &LmiProblem) -> Result<SynthesisResult> {
    if outcome.status != SolveStatus::Feasible {
        return Err(Error::Precondition(format!("solver outcome is {:?}, not feasible", outcome.status)));
    }
    let sdp = &problem.sdp;
    let x = &outcome.x;
    let p = sdp.extract(x, "P")?;
    let l = sdp.extract(x, "L")?;
    let alpha = sdp.extract(x, "alpha")?[(0, 0)] / problem.lambda_scale;
    let beta = sdp.extract(x, "beta")?[(0, 0)];
    let (k, cond) = gain_from(&p, &l)?;
    let gamma = match problem.objective {
        Objective::H2 => match sdp.var("Z") {
            Some(_) => Some(linalg::trace(&sdp.extract(x, "Z")?).max(0.0).sqrt()),
            None => problem.gamma,
        },
        _ => problem.gamma,
    };
    Ok(SynthesisResult {
        feasible: true,
        objective: problem.objective,
        k,
        p,
        l,
        alpha,
        beta,
        gamma,
        diagnostics: Diagnostics {
            slater: None,
            residual_eigenvalues: outcome.min_eigenvalues.clone(),
            backend_status: outcome.backend_status.clone(),
            p_condition: cond,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Informative,
    /// Only issued for input-state data with a Slater witness, where the LMI is also necessary.
    NotInformative { slater: SlaterReport },
    /// The sufficient LMI failed but necessity is not established.
    NoCertificate,
    NumericalFailure { detail: String },
}

impl Verdict {
    pub fn exit_code(&self) -> i32 {
        match self {
            Verdict::Informative => 0,
            Verdict::NotInformative { .. } | Verdict::NoCertificate => 2,
            Verdict::NumericalFailure { .. } => 3,
        }
    }

    pub fn is_informative(&self) -> bool {
        matches!(self, Verdict::Informative)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Decision {
    #[serde(flatten)]
    pub verdict: Verdict,
    pub result: Option<SynthesisResult>,
    pub slater: SlaterReport,
    pub statuses: Vec<SolveStatus>,
}

/// Rank-deficient input-state data: the set contains the lines θ + t·w·vᵀ for
/// every v with RΦᵀv = 0. One gain stabilizes them all only if v₁ + Kᵀv₂ = 0
/// for each such v, which needs the input part V₂ of a null basis to have full
/// column rank. Returns true when that fails on a nonempty set.
pub fn unbounded_obstruction(f: &FeasibleSetForm) -> bool {
    if f.kind != DataKind::InputState || f.rank_flag || !f.contains(&f.center()).unwrap_or(false) {
        return false;
    }
    let k = f.n + f.m;
    let eig = linalg::symmetrize(&f.lambda.view((f.n, f.n), (k, k)).into_owned()).symmetric_eigen();
    let scale = eig.eigenvalues.amax();
    let null: Vec<usize> = (0..k).filter(|&i| eig.eigenvalues[i].abs() <= 1e-10 * scale).collect();
    if null.is_empty() || scale == 0.0 {
        return scale == 0.0;
    }
    let v2 = Mat::from_fn(f.m, null.len(), |r, c| eig.eigenvectors[(f.n + r, null[c])]);
    linalg::rank(&v2, 1e-8) < null.len()
}

fn negative_verdict(f: &FeasibleSetForm, slater: &SlaterReport) -> Verdict {
    if f.kind == DataKind::InputState && slater.holds {
        Verdict::NotInformative { slater: slater.clone() }
    } else {
        Verdict::NoCertificate
    }
}

/// Strict feasibility of the stabilization LMI via β-maximization.
pub fn decide_stab(f: &FeasibleSetForm, s: Option<&LiftingStructure>, truth: Option<&Mat>, contract: &SolverContract) -> Result<Decision> {
    let slater = slater_diagnostics(f, &default_slater_candidates(f, truth));
    if unbounded_obstruction(f) {
        return Ok(Decision { verdict: Verdict::NotInformative { slater: slater.clone() }, result: None, slater, statuses: Vec::new() });
    }
    let prob = stab_problem_max_beta(f, s)?;
    let out = sdp::solve(&prob.sdp, contract)?;
    let statuses = vec![out.status];
    let verdict;
    let mut result = None;
    match out.status {
        SolveStatus::Feasible => {
            let beta = prob.sdp.extract(&out.x, "beta")?[(0, 0)];
            if beta >= BETA_MIN {
                match extract_result(&out, &prob) {
                    Ok(mut r) => {
                        r.diagnostics.slater = Some(slater.clone());
                        result = Some(r);
                        verdict = Verdict::Informative;
                    }
                    Err(e) => verdict = Verdict::NumericalFailure { detail: e.to_string() },
                }
            } else {
                verdict = negative_verdict(f, &slater);
            }
        }
        SolveStatus::Infeasible => verdict = negative_verdict(f, &slater),
        other => verdict = Verdict::NumericalFailure { detail: format!("solver status {other:?} ({})", out.backend_status) },
    }
    Ok(Decision { verdict, result, slater, statuses })
}

/// H∞ at a fixed γ, or the smallest γ by bisection when `gamma` is `None`.
pub fn decide_hinf(
    f: &FeasibleSetForm,
    s: Option<&LiftingStructure>,
    cz: &Mat,
    dz: &Mat,
    gamma: Option<f64>,
    truth: Option<&Mat>,
    contract: &SolverContract,
) -> Result<Decision> {
    let slater = slater_diagnostics(f, &default_slater_candidates(f, truth));
    if unbounded_obstruction(f) {
        return Ok(Decision { verdict: Verdict::NotInformative { slater: slater.clone() }, result: None, slater, statuses: Vec::new() });
    }
    let (prob, out) = match gamma {
        Some(g) => {
            let prob = hinf_problem(f, s, cz, dz, g)?;
            let out = sdp::solve(&prob.sdp, contract)?;
            (prob, out)
        }
        None => {
            let builder = |g: f64| hinf_problem(f, s, cz, dz, g).map(|p| p.sdp);
            match sdp::bisect_gamma(builder, 1e-6, 1e6, 1e-4, contract) {
                Ok(b) => {
                    let mut prob = hinf_problem(f, s, cz, dz, b.gamma)?;
                    prob.sdp = b.problem;
                    (prob, b.outcome)
                }
                Err(Error::NotFound { .. }) => {
                    let verdict = negative_verdict(f, &slater);
                    return Ok(Decision { verdict, result: None, slater, statuses: vec![SolveStatus::Infeasible] });
                }
                Err(e) => return Err(e),
            }
        }
    };
    let statuses = vec![out.status];
    let (verdict, result) = match out.status {
        SolveStatus::Feasible => match extract_result(&out, &prob) {
            Ok(mut r) => {
                r.diagnostics.slater = Some(slater.clone());
                (Verdict::Informative, Some(r))
            }
            Err(e) => (Verdict::NumericalFailure { detail: e.to_string() }, None),
        },
        SolveStatus::Infeasible => (negative_verdict(f, &slater), None),
        other => (Verdict::NumericalFailure { detail: format!("solver status {other:?} ({})", out.backend_status) }, None),
    };
    Ok(Decision { verdict, result, slater, statuses })
}

/// H2: informative for some γ iff the stabilization LMI is strictly feasible;
/// γ² then comes from minimizing trace Z, falling back to γ-bisection when
/// the minimization does not replay.
pub fn decide_h2(
    f: &FeasibleSetForm,
    s: Option<&LiftingStructure>,
    cz: &Mat,
    dz: &Mat,
    truth: Option<&Mat>,
    contract: &SolverContract,
) -> Result<Decision> {
    let stab = decide_stab(f, s, truth, contract)?;
    if !stab.verdict.is_informative() {
        return Ok(Decision { result: None, ..stab });
    }
    let mut statuses = stab.statuses.clone();
    let prob = h2_problem(f, s, cz, dz)?;
    let out = sdp::solve(&prob.sdp, contract)?;
    statuses.push(out.status);
    if out.status == SolveStatus::Feasible {
        if let Ok(mut r) = extract_result(&out, &prob) {
            r.diagnostics.slater = Some(stab.slater.clone());
            return Ok(Decision { verdict: Verdict::Informative, result: Some(r), slater: stab.slater, statuses });
        }
    }
    let builder = |g: f64| h2_problem_with(f, s, cz, dz, Some(g)).map(|p| p.sdp);
    match sdp::bisect_gamma(builder, 1e-3, 1e4, 1e-4, contract) {
        Ok(b) => {
            statuses.push(b.outcome.status);
            let mut prob = h2_problem_with(f, s, cz, dz, Some(b.gamma))?;
            prob.sdp = b.problem;
            match extract_result(&b.outcome, &prob) {
                Ok(mut r) => {
                    r.diagnostics.slater = Some(stab.slater.clone());
                    Ok(Decision { verdict: Verdict::Informative, result: Some(r), slater: stab.slater, statuses })
                }
                Err(e) => Ok(Decision {
                    verdict: Verdict::NumericalFailure { detail: e.to_string() },
                    result: None,
                    slater: stab.slater,
                    statuses,
                }),
            }
        }
        Err(e) => Ok(Decision {
            verdict: Verdict::NumericalFailure { detail: format!("H2 level search failed: {e}") },
            result: None,
            slater: stab.slater,
            statuses,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_form(n: usize, m: usize) -> FeasibleSetForm {
        let mut lambda = -Mat::identity(2 * n + m, 2 * n + m);
        for i in 0..n {
            lambda[(i, i)] = 1.0;
        }
        FeasibleSetForm { lambda, n, m, param_rows: n, kind: DataKind::InputState, rank_flag: true, tol_psd: 1e-9 }
    }

    #[test]
    fn block_diagonal_slater_witness_is_zero() {
        let f = diag_form(2, 1);
        let rep = slater_diagnostics(&f, &[("zero".into(), Mat::zeros(3, 2))]);
        assert!(rep.holds);
        assert_eq!(rep.witness.unwrap(), Mat::zeros(3, 2));
        assert_eq!(rep.positive_inertia, 2);
    }

    #[test]
    fn stab_block_sizes() {
        let f = diag_form(3, 2);
        let p = stab_problem_state(&f).unwrap();
        assert_eq!(p.sdp.block_sizes(), vec![11, 3, 1, 1]);
        let names: Vec<&str> = p.sdp.var_map.iter().map(|v| v.name.as_str()).collect();
        assert_eq!(names, vec!["P", "L", "alpha", "beta"]);
    }

    #[test]
    fn gain_from_identity_p() {
        let l = Mat::from_row_slice(1, 2, &[0.3, -1.0]);
        let (k, cond) = gain_from(&Mat::identity(2, 2), &l).unwrap();
        assert_eq!(k, l);
        assert_eq!(cond, 1.0);
    }

    #[test]
    fn singular_p_rejected() {
        let p = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-14]);
        assert!(matches!(gain_from(&p, &Mat::zeros(1, 2)), Err(Error::Extraction(_))));
    }

    #[test]
    fn hinf_rejects_nonpositive_gamma() {
        let f = diag_form(1, 1);
        let cz = Mat::identity(1, 1);
        let dz = Mat::zeros(1, 1);
        assert!(hinf_problem(&f, None, &cz, &dz, 0.0).is_err());
        assert!(hinf_problem(&f, None, &cz, &dz, -1.0).is_err());
    }

    #[test]
    fn scaled_expression() {
        let mut vb = VarBuilder::new();
        let a = vb.scalar("a");
        let m = Mat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let e = scaled(&a, &m);
        assert_eq!(e.evaluate(&[2.0]), m * 2.0);
    }
}
