//! Independent oracles: spectral radius, Stein solves, H2/H∞ norms,
//! feasible-set membership and sampling, and certificate audits.
//!
//! Nothing here calls the SDP backend.

use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::informativity::{FeasibleSetForm, Objective, SynthesisResult};
use crate::lifting::LiftingStructure;
use crate::linalg::{self, Mat};

type CMat = DMatrix<Complex<f64>>;

pub fn spectral_radius(a: &Mat) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.complex_eigenvalues().iter().map(|c| c.norm()).fold(0.0, f64::max)
}

fn require_stable(a: &Mat) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(dim_err("matrix must be square"));
    }
    let rho = spectral_radius(a);
    if !(rho < 1.0) {
        return Err(Error::Unstable { rho });
    }
    Ok(())
}

/// Maximal runs of the quasi-triangular Schur factor linked by nonzero subdiagonals.
fn schur_blocks(t: &Mat) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut out = Vec::new();
    let mut start = 0;
    for k in 0..n {
        if k + 1 == n || t[(k + 1, k)] == 0.0 {
            out.push((start, k + 1 - start));
            start = k + 1;
        }
    }
    out
}

/// X with AᵀXA − X + Q = 0, via real Schur form and block back-substitution.
pub fn solve_stein(a: &Mat, q: &Mat) -> Result<Mat> {
    require_stable(a)?;
    let n = a.nrows();
    if q.shape() != (n, n) {
        return Err(dim_err("Q must match A"));
    }
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let (u, t) = a.clone().schur().unpack();
    let qt = u.transpose() * q * &u;
    // Tᵀ Y T − Y + Q̃ = 0 with Y = Uᵀ X U.
    let blocks = schur_blocks(&t);
    let mut y = Mat::zeros(n, n);
    for (bi, &(ri, si)) in blocks.iter().enumerate() {
        for (bj, &(rj, sj)) in blocks.iter().enumerate() {
            // rhs = Q̃_ij + Σ_{(k,l) ≤ (i,j), ≠} T_kiᵀ Y_kl T_lj
            let mut rhs = qt.view((ri, rj), (si, sj)).into_owned();
            for &(rk, sk) in &blocks[..=bi] {
                let tki = t.view((rk, ri), (sk, si));
                for &(rl, sl) in &blocks[..=bj] {
                    if rk == ri && rl == rj {
                        continue;
                    }
                    let tlj = t.view((rl, rj), (sl, sj));
                    rhs += tki.transpose() * y.view((rk, rl), (sk, sl)) * tlj;
                }
            }
            // T_iiᵀ Y_ij T_jj − Y_ij = −rhs  ⇔  (T_jjᵀ ⊗ T_iiᵀ − I) vec Y = −vec rhs
            let tii = t.view((ri, ri), (si, si)).into_owned();
            let tjj = t.view((rj, rj), (sj, sj)).into_owned();
            let kron = tjj.transpose().kronecker(&tii.transpose()) - Mat::identity(si * sj, si * sj);
            let b = -Mat::from_column_slice(si * sj, 1, rhs.as_slice());
            let sol = kron
                .lu()
                .solve(&b)
                .ok_or_else(|| Error::Unstable { rho: spectral_radius(a) })?;
            y.view_mut((ri, rj), (si, sj)).copy_from(&Mat::from_column_slice(si, sj, sol.as_slice()));
            let _ = (bi, bj);
        }
    }
    Ok(linalg::symmetrize(&(&u * y * u.transpose())))
}

/// ‖C(zI − A)⁻¹H‖_{H2} through the observability Gramian.
pub fn h2_norm(a_k: &Mat, hz: &Mat, c_k: &Mat) -> Result<f64> {
    check_system(a_k, hz, c_k)?;
    let x = solve_stein(a_k, &(c_k.transpose() * c_k))?;
    Ok(linalg::trace(&(hz.transpose() * x * hz)).max(0.0).sqrt())
}

fn check_system(a: &Mat, h: &Mat, c: &Mat) -> Result<()> {
    let n = a.nrows();
    if a.ncols() != n || h.nrows() != n || c.ncols() != n {
        return Err(dim_err("system matrices have inconsistent shapes"));
    }
    Ok(())
}

fn to_complex(m: &Mat) -> CMat {
    m.map(|v| Complex::new(v, 0.0))
}

/// σ_max(C(e^{jθ}I − A)⁻¹H).
pub fn gain_at(a: &Mat, h: &Mat, c: &Mat, theta: f64) -> f64 {
    let n = a.nrows();
    let z = Complex::new(theta.cos(), theta.sin());
    let mut m = to_complex(&(-a));
    for i in 0..n {
        m[(i, i)] += z;
    }
    let sol = match m.lu().solve(&to_complex(h)) {
        Some(s) => s,
        None => return f64::INFINITY,
    };
    let g = to_complex(c) * sol;
    if g.is_empty() {
        return 0.0;
    }
    g.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Peak gain over a uniform grid on [0, π] plus one refinement pass around the argmax.
pub fn hinf_norm_grid(a: &Mat, h: &Mat, c: &Mat, points: usize) -> Result<f64> {
    check_system(a, h, c)?;
    require_stable(a)?;
    let points = points.max(2);
    let step = std::f64::consts::PI / (points - 1) as f64;
    let (mut best, mut arg) = (0.0, 0.0);
    for k in 0..points {
        let th = k as f64 * step;
        let g = gain_at(a, h, c, th);
        if g > best {
            best = g;
            arg = th;
        }
    }
    let lo = (arg - step).max(0.0);
    let hi = (arg + step).min(std::f64::consts::PI);
    let fine = (hi - lo) / (points - 1) as f64;
    for k in 0..points {
        best = best.max(gain_at(a, h, c, lo + k as f64 * fine));
    }
    Ok(best)
}

/// Bilinear map z = (1+s)/(1−s) to a continuous-time realization with equal H∞ norm.
fn bilinear(a: &Mat, h: &Mat, c: &Mat) -> Result<(Mat, Mat, Mat, Mat)> {
    let n = a.nrows();
    let ap = a + Mat::identity(n, n);
    let inv = ap
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("A has an eigenvalue at -1".into()))?;
    let s2 = std::f64::consts::SQRT_2;
    let ac = &inv * (a - Mat::identity(n, n));
    let bc = &inv * h * s2;
    let cc = c * &inv * s2;
    let dc = -(c * &inv * h);
    Ok((ac, bc, cc, dc))
}

/// Imaginary-axis eigenvalue frequencies of the bounded-real Hamiltonian at γ.
fn hamiltonian_crossings(ac: &Mat, bc: &Mat, cc: &Mat, dc: &Mat, gamma: f64) -> Option<Vec<f64>> {
    let n = ac.nrows();
    let mi = bc.ncols();
    let po = cc.nrows();
    let r = Mat::identity(mi, mi) * (gamma * gamma) - dc.transpose() * dc;
    let rinv = r.try_inverse()?;
    let a_h = ac + bc * &rinv * dc.transpose() * cc;
    let g = bc * &rinv * bc.transpose();
    let qh = -(cc.transpose() * (Mat::identity(po, po) + dc * &rinv * dc.transpose()) * cc);
    let neg_aht = -a_h.transpose();
    let ham = linalg::block(&[n, n], &[n, n], &[vec![Some(&a_h), Some(&g)], vec![Some(&qh), Some(&neg_aht)]]);
    let scale = 1.0 + ham.amax();
    let tol = 1e-8 * scale;
    let mut w: Vec<f64> = ham
        .complex_eigenvalues()
        .iter()
        .filter(|e| e.re.abs() <= tol)
        .map(|e| e.im.abs())
        .collect();
    w.sort_by(f64::total_cmp);
    Some(w)
}

/// ‖C(zI − A)⁻¹H‖_{H∞} by bisection on the bounded-real condition, relative gap ≤ `tol`.
///
/// Lower bounds come from exact frequency evaluations at every crossing found,
/// so the bracket never loses the peak.
pub fn hinf_norm(a: &Mat, h: &Mat, c: &Mat, tol: f64) -> Result<f64> {
    check_system(a, h, c)?;
    require_stable(a)?;
    if h.norm() == 0.0 || c.norm() == 0.0 || a.nrows() == 0 {
        return Ok(0.0);
    }
    let (ac, bc, cc, dc) = bilinear(a, h, c)?;
    let d_norm = linalg::norm2(&dc);
    // θ = 2 atan ω maps continuous frequencies back to the unit circle.
    let eval = |w: f64| gain_at(a, h, c, 2.0 * w.atan());
    let mut lo = d_norm.max(eval(0.0)).max(gain_at(a, h, c, std::f64::consts::PI));
    for k in 1..64 {
        lo = lo.max(gain_at(a, h, c, std::f64::consts::PI * k as f64 / 64.0));
    }
    for e in a.complex_eigenvalues().iter() {
        lo = lo.max(gain_at(a, h, c, e.im.atan2(e.re).abs()));
    }
    if lo == 0.0 {
        return Ok(0.0);
    }
    let mut hi = lo * 2.0;
    let mut doublings = 0;
    loop {
        match hamiltonian_crossings(&ac, &bc, &cc, &dc, hi) {
            Some(w) if w.is_empty() => break,
            Some(w) => {
                for x in w {
                    lo = lo.max(eval(x));
                }
            }
            None => {}
        }
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 {
            return Err(Error::InvalidArgument("H∞ upper bound search did not terminate".into()));
        }
    }
    let mut iters = 0;
    while hi / lo - 1.0 > tol && iters < 200 {
        let mid = (lo * hi).sqrt();
        match hamiltonian_crossings(&ac, &bc, &cc, &dc, mid) {
            Some(w) if w.is_empty() => hi = mid,
            Some(w) => {
                // Crossings are real only if the gain reaches mid somewhere; near-flat
                // responses produce spurious ones. Probe between crossings as well.
                let mut best = w.iter().map(|&x| eval(x)).fold(0.0, f64::max);
                for pair in w.windows(2) {
                    best = best.max(eval(0.5 * (pair[0] + pair[1])));
                }
                if best >= mid {
                    lo = best.min(hi);
                } else {
                    hi = mid;
                }
            }
            None => lo = mid,
        }
        iters += 1;
    }
    Ok(hi)
}

/// The bounded-real matrix with X ≻ 0 (positive definite iff the certificate holds).
pub fn bounded_real_full(a_k: &Mat, hz: &Mat, c_k: &Mat, x: &Mat, gamma: f64) -> Mat {
    let n = a_k.nrows();
    let q = hz.ncols();
    let pz = c_k.nrows();
    let gq = Mat::identity(q, q) * gamma;
    let gz = Mat::identity(pz, pz) * gamma;
    let akx = a_k.transpose() * x;
    let hx = hz.transpose() * x;
    let xa = x * a_k;
    let xh = x * hz;
    let ckt = c_k.transpose();
    linalg::block(
        &[n, q, n, pz],
        &[n, q, n, pz],
        &[
            vec![Some(x), None, Some(&akx), Some(&ckt)],
            vec![None, Some(&gq), Some(&hx), None],
            vec![Some(&xa), Some(&xh), Some(x), None],
            vec![Some(c_k), None, None, Some(&gz)],
        ],
    )
}

/// Min eigenvalues of the reduced pair: P − V S Vᵀ − γ⁻¹HHᵀ and P − γ⁻¹FᵀF,
/// with P = X⁻¹, V = A_K P, F = C_K P, S = (P − γ⁻¹FᵀF)⁻¹.
pub fn bounded_real_reduced(a_k: &Mat, hz: &Mat, c_k: &Mat, x: &Mat, gamma: f64) -> Result<(f64, f64)> {
    let p = x
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("X is singular".into()))?;
    let v = a_k * &p;
    let f = c_k * &p;
    let inner = linalg::symmetrize(&(&p - f.transpose() * &f / gamma));
    let e_inner = linalg::min_sym_eigenvalue(&inner);
    let s = inner
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("P − γ⁻¹FᵀF is singular".into()))?;
    let outer = &p - &v * s * v.transpose() - hz * hz.transpose() / gamma;
    Ok((linalg::min_sym_eigenvalue(&outer), e_inner))
}

/// Membership of θ (q×(n+m) unknown rows) in the feasible set.
pub fn membership(theta: &Mat, f: &FeasibleSetForm) -> Result<bool> {
    f.contains(theta)
}

pub const SHRINK_FACTORS: [f64; 4] = [1.0 - 1e-6, 0.9, 0.5, 0.1];

fn strict_member(f: &FeasibleSetForm, theta: &Mat) -> bool {
    f.quad_form(theta).map(|q| linalg::min_sym_eigenvalue(&q) >= 0.0).unwrap_or(false)
}

/// Largest step t with base + t·dir in the set (strict test), by bisection.
fn boundary_step(f: &FeasibleSetForm, base: &Mat, dir: &Mat) -> f64 {
    if !strict_member(f, base) {
        return 0.0;
    }
    let mut hi = 1.0;
    let cap = 1e6 * (1.0 + base.norm());
    while strict_member(f, &(base + dir * hi)) {
        hi *= 2.0;
        if hi > cap {
            return hi;
        }
    }
    let mut lo = 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if strict_member(f, &(base + dir * mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + hi) {
            break;
        }
    }
    lo
}

fn sample_one(f: &FeasibleSetForm, base: &Mat, seed: u64, index: usize) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let dir = Mat::from_fn(base.nrows(), base.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = dir.norm();
    let dir = if norm > 0.0 { dir / norm } else { dir };
    let t = boundary_step(f, base, &dir);
    let shrink = SHRINK_FACTORS[index % SHRINK_FACTORS.len()];
    let cand = base + &dir * (t * shrink);
    if f.contains(&cand).unwrap_or(false) {
        cand
    } else {
        base.clone()
    }
}

/// `count` members along random directions from `base`, at the boundary scaled by
/// the shrink schedule. A set that is a single point yields only `base`.
pub fn sample_members(f: &FeasibleSetForm, base: &Mat, count: usize, seed: u64) -> Result<Vec<Mat>> {
    if !f.contains(base)? {
        return Err(Error::Precondition("sampling base is not a member of the feasible set".into()));
    }
    let samples: Vec<Mat> = (0..count).map(|i| sample_one(f, base, seed, i)).collect();
    if samples.iter().all(|s| s == base) {
        return Ok(vec![base.clone()]);
    }
    Ok(samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub index: usize,
    pub spectral_radius: f64,
    pub norm: Option<f64>,
    /// Amount by which the target was exceeded.
    pub slack: f64,
    #[serde(with = "linalg::serde_mat::rows")]
    pub theta: Mat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub samples_tested: usize,
    pub max_spectral_radius: f64,
    pub max_h2: Option<f64>,
    pub max_hinf: Option<f64>,
    pub violations: Vec<Violation>,
    pub bound_type: Objective,
    pub gamma: Option<f64>,
    pub seed: u64,
}

pub struct AuditSetup<'a> {
    pub form: &'a FeasibleSetForm,
    pub structure: Option<&'a LiftingStructure>,
    pub cz: Option<&'a Mat>,
    pub dz: Option<&'a Mat>,
    pub objective: Objective,
}

pub const NORM_RTOL: f64 = 1e-6;

/// Check the synthesized gain on sampled members around `base`.
pub fn audit(result: &SynthesisResult, setup: &AuditSetup<'_>, base: &Mat, samples: usize, seed: u64) -> Result<AuditReport> {
    if !result.feasible {
        return Err(Error::Precondition("cannot audit an infeasible synthesis result".into()));
    }
    let f = setup.form;
    let members = sample_members(f, base, samples, seed)?;
    let gamma = result.gamma;
    let needs_norm = setup.objective != Objective::Stab;
    if needs_norm && (gamma.is_none() || setup.cz.is_none() || setup.dz.is_none()) {
        return Err(Error::Precondition("norm audits need γ, Cz and Dz".into()));
    }
    let hz = match f.kind {
        crate::informativity::DataKind::InputState => Mat::identity(f.n, f.n),
        crate::informativity::DataKind::InputOutput => setup
            .structure
            .ok_or_else(|| Error::InvalidArgument("input-output audits need the lifting structure".into()))?
            .hz
            .clone(),
    };
    let evals: Vec<Result<(f64, Option<f64>)>> = members
        .par_iter()
        .map(|theta| {
            let (a, b) = f.system_of(theta, setup.structure)?;
            let a_k = &a + &b * &result.k;
            let rho = spectral_radius(&a_k);
            if !needs_norm || rho >= 1.0 {
                return Ok((rho, None));
            }
            let c_k = setup.cz.unwrap() + setup.dz.unwrap() * &result.k;
            let norm = match setup.objective {
                Objective::H2 => h2_norm(&a_k, &hz, &c_k)?,
                Objective::Hinf => hinf_norm(&a_k, &hz, &c_k, 1e-9)?,
                Objective::Stab => unreachable!(),
            };
            Ok((rho, Some(norm)))
        })
        .collect();
    let mut report = AuditReport {
        samples_tested: members.len(),
        max_spectral_radius: 0.0,
        max_h2: None,
        max_hinf: None,
        violations: Vec::new(),
        bound_type: setup.objective,
        gamma,
        seed,
    };
    for (i, (ev, theta)) in evals.into_iter().zip(members).enumerate() {
        let (rho, norm) = ev?;
        report.max_spectral_radius = report.max_spectral_radius.max(rho);
        if let Some(v) = norm {
            let slot = if setup.objective == Objective::H2 { &mut report.max_h2 } else { &mut report.max_hinf };
            *slot = Some(slot.map_or(v, |m: f64| m.max(v)));
        }
        let slack = if rho >= 1.0 {
            Some(rho - 1.0)
        } else {
            match (norm, gamma) {
                (Some(v), Some(g)) if v > g * (1.0 + NORM_RTOL) => Some(v - g),
                _ => None,
            }
        };
        if let Some(slack) = slack {
            report.violations.push(Violation { index: i, spectral_radius: rho, norm, slack, theta });
        }
    }
    Ok(report)
}
