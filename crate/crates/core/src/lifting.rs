//! Non-minimal state-space lifting of ARX models, controller realizations,
//! closed loops and simulation.
//!
//! The lifted state is ζ(t) = col(y(t-1), .., y(t-l), u(t-1), .., u(t-l)) of
//! order n = (p+m)l, so that ζ(t+1) = A_z ζ(t) + B_z u(t) + H_z e(t) with
//! A_z = Λ_e + J1 and B_z = B_e + J2, where Λ_e and B_e are nonzero only in
//! their first p rows.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data_model::{Trajectory, TrajectoryKind};
use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, Mat};

#[derive(Debug, Clone, PartialEq)]
pub struct LiftingStructure {
    pub l: usize,
    pub p: usize,
    pub m: usize,
    pub n: usize,
    pub j1: Mat,
    pub j2: Mat,
    pub hz: Mat,
}

impl LiftingStructure {
    /// Rows of Λ_e and B_e that carry unknown parameters.
    pub fn param_row_count(&self) -> usize {
        self.p
    }
}

pub fn lift_structure(l: usize, p: usize, m: usize) -> Result<LiftingStructure> {
    if l == 0 {
        return Err(Error::InvalidArgument("lag order must be at least 1".into()));
    }
    if p == 0 || m == 0 {
        return Err(Error::InvalidArgument("input and output dimensions must be at least 1".into()));
    }
    let n = (p + m) * l;
    let mut j1 = Mat::zeros(n, n);
    for i in 0..p * (l - 1) {
        j1[(p + i, i)] = 1.0;
    }
    for i in 0..m * (l - 1) {
        j1[(p * l + m + i, p * l + i)] = 1.0;
    }
    let mut j2 = Mat::zeros(n, m);
    for j in 0..m {
        j2[(p * l + j, j)] = 1.0;
    }
    let mut hz = Mat::zeros(n, p);
    for i in 0..p {
        hz[(i, i)] = 1.0;
    }
    Ok(LiftingStructure { l, p, m, n, j1, j2, hz })
}

/// A(ξ)y = B(ξ)u + e with A(ξ) = I + A₁ξ + .. + A_lξ^l, B(ξ) = B₀ + .. + B_lξ^l.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArxModel {
    pub l: usize,
    pub p: usize,
    pub m: usize,
    #[serde(rename = "A_coeffs", with = "linalg::serde_mat::rows_vec")]
    pub a_coeffs: Vec<Mat>,
    #[serde(rename = "B_coeffs", with = "linalg::serde_mat::rows_vec")]
    pub b_coeffs: Vec<Mat>,
}

impl ArxModel {
    pub fn new(a_coeffs: Vec<Mat>, b_coeffs: Vec<Mat>) -> Result<Self> {
        let l = a_coeffs.len();
        if l == 0 {
            return Err(Error::InvalidArgument("ARX model needs at least one A coefficient".into()));
        }
        if b_coeffs.len() != l + 1 {
            return Err(dim_err(format!("expected {} B coefficients, got {}", l + 1, b_coeffs.len())));
        }
        let p = a_coeffs[0].nrows();
        let m = b_coeffs[0].ncols();
        let model = Self { l, p, m, a_coeffs, b_coeffs };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.a_coeffs.len() != self.l || self.b_coeffs.len() != self.l + 1 || self.l == 0 {
            return Err(dim_err("coefficient list lengths must be l (A) and l+1 (B)"));
        }
        if self.a_coeffs.iter().any(|a| a.shape() != (self.p, self.p)) {
            return Err(dim_err("A coefficients must be p×p"));
        }
        if self.b_coeffs.iter().any(|b| b.shape() != (self.p, self.m)) {
            return Err(dim_err("B coefficients must be p×m"));
        }
        Ok(())
    }

    /// [Ā B̄] = row(-A₁, .., -A_l, B₁, .., B_l), the p×n parameter row.
    pub fn parameter_row(&self) -> Mat {
        let (p, m, l) = (self.p, self.m, self.l);
        let mut out = Mat::zeros(p, (p + m) * l);
        for i in 0..l {
            out.view_mut((0, i * p), (p, p)).copy_from(&(-&self.a_coeffs[i]));
            out.view_mut((0, p * l + i * m), (p, m)).copy_from(&self.b_coeffs[i + 1]);
        }
        out
    }

    /// A(ξ)⁻¹B(ξ) at the complex point ξ (scalar p = 1 only, returned as m values).
    pub fn transfer_at(&self, xi: nalgebra::Complex<f64>) -> Result<Vec<nalgebra::Complex<f64>>> {
        if self.p != 1 {
            return Err(Error::Unsupported("transfer evaluation is implemented for p = 1".into()));
        }
        let mut den = nalgebra::Complex::new(1.0, 0.0);
        let mut pow = nalgebra::Complex::new(1.0, 0.0);
        let mut num = vec![nalgebra::Complex::new(0.0, 0.0); self.m];
        for (k, b) in self.b_coeffs.iter().enumerate() {
            if k > 0 {
                pow *= xi;
                den += pow * self.a_coeffs[k - 1][(0, 0)];
            }
            for j in 0..self.m {
                num[j] += pow * b[(0, j)];
            }
        }
        Ok(num.into_iter().map(|v| v / den).collect())
    }
}

/// ζ(t+1) = A_z ζ(t) + B_z u(t) + H_z e(t), z(t) = C_z ζ(t) + D_z u(t).
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub az: Mat,
    pub bz: Mat,
    pub hz: Mat,
    pub cz: Mat,
    pub dz: Mat,
}

impl StateSpaceModel {
    pub fn state_dim(&self) -> usize {
        self.az.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.bz.ncols()
    }

    pub fn with_performance(mut self, cz: Mat, dz: Mat) -> Result<Self> {
        if cz.ncols() != self.state_dim() || dz.ncols() != self.input_dim() || cz.nrows() != dz.nrows() {
            return Err(dim_err("performance output does not match the state/input dimensions"));
        }
        self.cz = cz;
        self.dz = dz;
        Ok(self)
    }
}

/// z(t) = y(t-1): selects the newest output lag block.
pub fn default_io_performance(s: &LiftingStructure) -> (Mat, Mat) {
    let mut cz = Mat::zeros(s.p, s.n);
    for i in 0..s.p {
        cz[(i, i)] = 1.0;
    }
    (cz, Mat::zeros(s.p, s.m))
}

pub fn lift_arx(model: &ArxModel) -> Result<StateSpaceModel> {
    model.validate()?;
    let s = lift_structure(model.l, model.p, model.m)?;
    let mut az = s.j1.clone();
    az.view_mut((0, 0), (s.p, s.n)).copy_from(&model.parameter_row());
    let mut bz = s.j2.clone();
    bz.view_mut((0, 0), (s.p, s.m)).copy_from(&model.b_coeffs[0]);
    let (cz, dz) = default_io_performance(&s);
    Ok(StateSpaceModel { az, bz, hz: s.hz, cz, dz })
}

/// Scalar-output ARX realization of C0(qI - A0)⁻¹B0.
///
/// A(ξ) = det(I - ξA0) and B_{k+1} = C0 S_k B0 where S_k are the
/// Faddeev-LeVerrier resolvent coefficients, S_0 = I, S_k = A0 S_{k-1} + a_k I.
pub fn arx_from_state_space(a0: &Mat, b0: &Mat, c0: &Mat) -> Result<ArxModel> {
    let n0 = a0.nrows();
    if a0.ncols() != n0 || b0.nrows() != n0 || c0.ncols() != n0 || n0 == 0 {
        return Err(dim_err("A0, B0, C0 have inconsistent shapes"));
    }
    if c0.nrows() != 1 {
        return Err(Error::Unsupported("ARX conversion supports a single output only".into()));
    }
    let mut obs = Mat::zeros(n0, n0);
    let mut row = c0.clone();
    for k in 0..n0 {
        obs.row_mut(k).copy_from(&row.row(0));
        row = &row * a0;
    }
    if linalg::rank(&obs, 1e-10) < n0 {
        return Err(Error::Unobservable);
    }
    let m = b0.ncols();
    let mut a_coeffs = Vec::with_capacity(n0);
    let mut b_coeffs = vec![Mat::zeros(1, m)];
    let mut s = Mat::identity(n0, n0);
    for k in 1..=n0 {
        b_coeffs.push(c0 * &s * b0);
        let as_prev = a0 * &s;
        let ak = -linalg::trace(&as_prev) / k as f64;
        a_coeffs.push(Mat::from_element(1, 1, ak));
        s = as_prev + Mat::identity(n0, n0) * ak;
    }
    ArxModel::new(a_coeffs, b_coeffs)
}

/// C(ξ)u = D(ξ)y with C(ξ) = I + C₁ξ + .., D(ξ) = D₁ξ + ..
#[derive(Debug, Clone, PartialEq)]
pub struct ArxController {
    pub c_coeffs: Vec<Mat>,
    pub d_coeffs: Vec<Mat>,
}

impl ArxController {
    /// K = [D̄ C̄] with D̄ = row(D₁..D_l), C̄ = row(-C₁..-C_l).
    pub fn to_gain(&self) -> Mat {
        let l = self.c_coeffs.len();
        let m = self.c_coeffs.first().map_or(0, |c| c.nrows());
        let p = self.d_coeffs.first().map_or(0, |d| d.ncols());
        let mut k = Mat::zeros(m, (p + m) * l);
        for i in 0..l {
            k.view_mut((0, i * p), (m, p)).copy_from(&self.d_coeffs[i]);
            k.view_mut((0, p * l + i * m), (m, m)).copy_from(&(-&self.c_coeffs[i]));
        }
        k
    }

    /// Next controller output given past y(t-1..t-l) and u(t-1..t-l), newest first.
    pub fn output(&self, past_y: &[nalgebra::DVector<f64>], past_u: &[nalgebra::DVector<f64>]) -> nalgebra::DVector<f64> {
        let m = self.c_coeffs[0].nrows();
        let mut u = nalgebra::DVector::zeros(m);
        for (i, (c, d)) in self.c_coeffs.iter().zip(&self.d_coeffs).enumerate() {
            u += d * &past_y[i] - c * &past_u[i];
        }
        u
    }
}

pub fn controller_from_gain(k: &Mat, l: usize, p: usize, m: usize) -> Result<ArxController> {
    if l == 0 || k.shape() != (m, (p + m) * l) {
        return Err(dim_err(format!("gain is {:?}, expected {}×{}", k.shape(), m, (p + m) * l)));
    }
    let d_coeffs = (0..l).map(|i| k.view((0, i * p), (m, p)).into_owned()).collect();
    let c_coeffs = (0..l).map(|i| -k.view((0, p * l + i * m), (m, m)).into_owned()).collect();
    Ok(ArxController { c_coeffs, d_coeffs })
}

/// (A_z + B_zK, C_z + D_zK).
pub fn closed_loop(ss: &StateSpaceModel, k: &Mat) -> Result<(Mat, Mat)> {
    if k.shape() != (ss.input_dim(), ss.state_dim()) {
        return Err(dim_err(format!("gain is {:?}, expected {}×{}", k.shape(), ss.input_dim(), ss.state_dim())));
    }
    Ok((&ss.az + &ss.bz * k, &ss.cz + &ss.dz * k))
}

/// Simulates the difference equation from zero history before the first sample.
///
/// `u` is m×T, `e` is p×T; the returned trajectory starts at time `t0`.
pub fn simulate_arx(model: &ArxModel, u: &Mat, e: &Mat, t0: i64) -> Result<Trajectory> {
    model.validate()?;
    let total = u.ncols();
    if u.nrows() != model.m || e.shape() != (model.p, total) {
        return Err(dim_err("input/noise sequences do not match the model"));
    }
    let mut y = Mat::zeros(model.p, total);
    for t in 0..total {
        let mut yt = e.column(t).into_owned() + &model.b_coeffs[0] * u.column(t);
        for i in 1..=model.l.min(t) {
            yt += &model.b_coeffs[i] * u.column(t - i) - &model.a_coeffs[i - 1] * y.column(t - i);
        }
        y.set_column(t, &yt);
    }
    Trajectory::new(TrajectoryKind::InputOutput, u.clone(), y, t0)
}

/// x(k+1) = A x(k) + B u(k) + e(k) from `x0` at the first sample.
///
/// `u` is m×T and `e` is n×T (the last noise column is never used).
pub fn simulate_state(a: &Mat, b: &Mat, u: &Mat, e: &Mat, x0: &nalgebra::DVector<f64>, t0: i64) -> Result<Trajectory> {
    let n = a.nrows();
    let total = u.ncols();
    if a.ncols() != n || b.shape() != (n, u.nrows()) || e.shape() != (n, total) || x0.len() != n {
        return Err(dim_err("state simulation inputs have inconsistent shapes"));
    }
    let mut x = Mat::zeros(n, total);
    if total > 0 {
        x.set_column(0, x0);
    }
    for k in 1..total {
        let next = a * x.column(k - 1) + b * u.column(k - 1) + e.column(k - 1);
        x.set_column(k, &next);
    }
    Trajectory::new(TrajectoryKind::InputState, u.clone(), x, t0)
}

/// Lifted-state trajectory ζ(0..T) (T+1 columns) driven by `u` and `e`.
pub fn simulate_lifted(ss: &StateSpaceModel, u: &Mat, e: &Mat, zeta0: &nalgebra::DVector<f64>) -> Result<Mat> {
    let total = u.ncols();
    if e.ncols() != total || e.nrows() != ss.hz.ncols() || zeta0.len() != ss.state_dim() {
        return Err(dim_err("lifted simulation inputs have inconsistent shapes"));
    }
    let mut z = Mat::zeros(ss.state_dim(), total + 1);
    z.set_column(0, zeta0);
    for t in 0..total {
        let next = &ss.az * z.column(t) + &ss.bz * u.column(t) + &ss.hz * e.column(t);
        z.set_column(t + 1, &next);
    }
    Ok(z)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelFile {
    Arx(ArxModel),
    StateSpace {
        #[serde(rename = "A0", with = "linalg::serde_mat::rows")]
        a0: Mat,
        #[serde(rename = "B0", with = "linalg::serde_mat::rows")]
        b0: Mat,
        #[serde(rename = "C0", with = "linalg::serde_mat::rows")]
        c0: Mat,
    },
}

impl ModelFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_arx(&self) -> Result<ArxModel> {
        match self {
            ModelFile::Arx(model) => {
                model.validate()?;
                Ok(model.clone())
            }
            ModelFile::StateSpace { a0, b0, c0 } => arx_from_state_space(a0, b0, c0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Complex, DVector};

    fn scalar_arx() -> ArxModel {
        // y(t) = 0.5 y(t-1) + u(t-1)
        ArxModel::new(vec![Mat::from_element(1, 1, -0.5)], vec![Mat::zeros(1, 1), Mat::from_element(1, 1, 1.0)]).unwrap()
    }

    #[test]
    fn first_order_structure() {
        let s = lift_structure(1, 1, 1).unwrap();
        assert_eq!(s.n, 2);
        assert_eq!(s.j1, Mat::zeros(2, 2));
        assert_eq!(s.j2, Mat::from_row_slice(2, 1, &[0.0, 1.0]));
        assert_eq!(s.hz, Mat::from_row_slice(2, 1, &[1.0, 0.0]));
    }

    #[test]
    fn second_order_shift_entries() {
        let s = lift_structure(2, 1, 1).unwrap();
        let ones: Vec<(usize, usize)> = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .filter(|&(i, j)| s.j1[(i, j)] == 1.0)
            .collect();
        assert_eq!(ones, vec![(1, 0), (3, 2)]);
        assert_eq!(s.j1.sum(), 2.0);
    }

    #[test]
    fn third_order_rank() {
        let s = lift_structure(3, 1, 2).unwrap();
        assert_eq!(s.n, 9);
        for j in 0..9 {
            let c = s.j1.column(j).sum();
            assert!(c == 0.0 || c == 1.0);
        }
        assert_eq!(linalg::rank(&s.j1, 1e-12), 6);
        assert_eq!(s.j2.transpose() * &s.j1, Mat::zeros(2, 9));
        assert_eq!(s.hz.transpose() * &s.hz, Mat::identity(1, 1));
    }

    #[test]
    fn zero_lag_rejected() {
        assert!(lift_structure(0, 1, 1).is_err());
    }

    #[test]
    fn scalar_lift() {
        let ss = lift_arx(&scalar_arx()).unwrap();
        assert_eq!(ss.az, Mat::from_row_slice(2, 2, &[0.5, 1.0, 0.0, 0.0]));
        assert_eq!(ss.bz, Mat::from_row_slice(2, 1, &[0.0, 1.0]));
        let mut ev: Vec<f64> = ss.az.complex_eigenvalues().iter().map(|c| c.re).collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0]).abs() < 1e-14 && (ev[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn zero_model_lifts_to_structure() {
        let model = ArxModel::new(vec![Mat::zeros(2, 2); 2], vec![Mat::zeros(2, 1); 3]).unwrap();
        let ss = lift_arx(&model).unwrap();
        let s = lift_structure(2, 2, 1).unwrap();
        assert_eq!(ss.az, s.j1);
        assert_eq!(ss.bz, s.j2);
    }

    #[test]
    fn first_order_lag_conversion() {
        let m = arx_from_state_space(&Mat::from_element(1, 1, 0.5), &Mat::from_element(1, 1, 1.0), &Mat::from_element(1, 1, 1.0)).unwrap();
        assert_eq!(m.l, 1);
        assert!((m.a_coeffs[0][(0, 0)] + 0.5).abs() < 1e-15);
        assert_eq!(m.b_coeffs[0][(0, 0)], 0.0);
        assert_eq!(m.b_coeffs[1][(0, 0)], 1.0);
    }

    #[test]
    fn nilpotent_conversion_is_fir() {
        let a0 = Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b0 = Mat::from_row_slice(2, 1, &[0.0, 1.0]);
        let c0 = Mat::from_row_slice(1, 2, &[1.0, 0.0]);
        let m = arx_from_state_space(&a0, &b0, &c0).unwrap();
        assert!(m.a_coeffs.iter().all(|a| a[(0, 0)] == 0.0));
        // C0 B0 = 0, C0 A0 B0 = 1: pure two-step delay.
        assert_eq!(m.b_coeffs[1][(0, 0)], 0.0);
        assert_eq!(m.b_coeffs[2][(0, 0)], 1.0);
    }

    #[test]
    fn unobservable_rejected() {
        let a0 = Mat::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.3]);
        let b0 = Mat::from_row_slice(2, 1, &[1.0, 1.0]);
        let c0 = Mat::from_row_slice(1, 2, &[1.0, 0.0]);
        assert!(matches!(arx_from_state_space(&a0, &b0, &c0), Err(Error::Unobservable)));
    }

    #[test]
    fn multi_output_unsupported() {
        let a0 = Mat::identity(2, 2) * 0.5;
        assert!(matches!(
            arx_from_state_space(&a0, &Mat::identity(2, 1), &Mat::identity(2, 2)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn zero_gain_controller() {
        let c = controller_from_gain(&Mat::zeros(1, 2), 1, 1, 1).unwrap();
        assert_eq!(c.c_coeffs[0], Mat::zeros(1, 1));
        assert_eq!(c.d_coeffs[0], Mat::zeros(1, 1));
    }

    #[test]
    fn first_order_controller_coefficients() {
        let k = Mat::from_row_slice(1, 2, &[0.7, -0.2]);
        let c = controller_from_gain(&k, 1, 1, 1).unwrap();
        assert_eq!(c.d_coeffs[0][(0, 0)], 0.7);
        assert_eq!(c.c_coeffs[0][(0, 0)], 0.2);
        assert_eq!(c.to_gain(), k);
    }

    #[test]
    fn deadbeat_closed_loop() {
        let ss = lift_arx(&scalar_arx()).unwrap();
        let (acl, _) = closed_loop(&ss, &Mat::from_row_slice(1, 2, &[-0.25, -0.5])).unwrap();
        // Nilpotent 2×2: A² = 0.
        assert!((&acl * &acl).norm() < 1e-15);
        assert!(closed_loop(&ss, &Mat::zeros(1, 3)).is_err());
    }

    #[test]
    fn impulse_response_is_power_series() {
        let model = scalar_arx();
        let mut u = Mat::zeros(1, 8);
        u[(0, 0)] = 1.0;
        let traj = simulate_arx(&model, &u, &Mat::zeros(1, 8), 0).unwrap();
        // B/A = ξ/(1 - 0.5ξ) = Σ 0.5^{k-1} ξ^k
        for k in 1..8 {
            assert!((traj.outputs()[(0, k)] - 0.5f64.powi(k as i32 - 1)).abs() < 1e-15);
        }
        assert_eq!(traj.outputs()[(0, 0)], 0.0);
    }

    #[test]
    fn zero_state_simulation() {
        let traj = simulate_state(
            &Mat::identity(2, 2),
            &Mat::identity(2, 1),
            &Mat::zeros(1, 5),
            &Mat::zeros(2, 5),
            &DVector::zeros(2),
            0,
        )
        .unwrap();
        assert_eq!(traj.outputs(), &Mat::zeros(2, 5));
    }

    #[test]
    fn transfer_evaluation_matches_closed_form() {
        let model = scalar_arx();
        let xi = Complex::new(0.3, 0.4);
        let v = model.transfer_at(xi).unwrap()[0];
        let expected = xi / (Complex::new(1.0, 0.0) - xi * 0.5);
        assert!((v - expected).norm() < 1e-15);
    }

    #[test]
    fn model_file_forms() {
        let arx = r#"{"l":1,"p":1,"m":1,"A_coeffs":[[[-0.5]]],"B_coeffs":[[[0.0]],[[1.0]]]}"#;
        let model: ModelFile = serde_json::from_str(arx).unwrap();
        assert_eq!(model.to_arx().unwrap(), scalar_arx());
        let ss = r#"{"A0":[[0.5]],"B0":[[1.0]],"C0":[[1.0]]}"#;
        let model: ModelFile = serde_json::from_str(ss).unwrap();
        assert_eq!(model.to_arx().unwrap().l, 1);
    }
}
