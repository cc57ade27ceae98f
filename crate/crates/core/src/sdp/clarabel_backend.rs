use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, PSDTriangleConeT, SolverStatus, SupportedConeT,
};

use super::{SdpProblem, SolveOutcome, SolveStatus, SolverContract};
use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Upper triangle, column-major, off-diagonals scaled by √2.
fn svec(m: &Mat, out: &mut Vec<f64>) {
    let s2 = std::f64::consts::SQRT_2;
    for j in 0..m.ncols() {
        for i in 0..=j {
            out.push(if i == j { m[(i, j)] } else { s2 * m[(i, j)] });
        }
    }
}

/// Solve `min cᵀx s.t. F_b(x) ⪰ 0` and replay the result against the blocks.
pub fn solve(p: &SdpProblem, c: &SolverContract) -> Result<SolveOutcome> {
    p.validate()?;
    // Clarabel form: min qᵀx s.t. b - Ax ∈ K with b = svec(F₀), A = -[svec(Fᵢ)].
    let mut b = Vec::new();
    let mut cones = Vec::new();
    let mut col_entries: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p.num_vars];
    for block in &p.blocks {
        let offset = b.len();
        svec(&block.constant, &mut b);
        for (i, f) in &block.coeffs {
            let mut v = Vec::new();
            svec(f, &mut v);
            for (r, val) in v.into_iter().enumerate() {
                if val != 0.0 {
                    col_entries[*i].push((offset + r, -val));
                }
            }
        }
        cones.push(if block.size == 1 {
            NonnegativeConeT(1)
        } else {
            PSDTriangleConeT(block.size)
        });
    }
    let rows = b.len();
    let mut colptr = vec![0usize];
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    for col in &col_entries {
        for &(r, v) in col {
            rowval.push(r);
            nzval.push(v);
        }
        colptr.push(rowval.len());
    }
    let a = CscMatrix::new(rows, p.num_vars, colptr, rowval, nzval);
    let pmat = CscMatrix::zeros((p.num_vars, p.num_vars));
    let q = p.objective.clone().unwrap_or_else(|| vec![0.0; p.num_vars]);
    let cones = merge_cones(cones);

    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(c.max_iter)
        .tol_gap_abs(c.eps_abs)
        .tol_gap_rel(c.eps_rel)
        .tol_feas(c.eps_abs)
        .max_threads(1)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("solver settings: {e}")))?;
    let mut solver = DefaultSolver::new(&pmat, &q, &a, &b, &cones, settings)
        .map_err(|e| Error::InvalidArgument(format!("solver setup: {e:?}")))?;
    // The backend panics when LAPACK fails on a degenerate iterate; report that as an inaccurate solve.
    if std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| solver.solve())).is_err() {
        return Ok(SolveOutcome {
            status: SolveStatus::Inaccurate,
            x: vec![f64::NAN; p.num_vars],
            objective_value: None,
            weak: false,
            min_eigenvalues: vec![f64::NEG_INFINITY; p.blocks.len()],
            backend_status: "BackendPanic".to_string(),
        });
    }

    let sol = &solver.solution;
    let x = sol.x.clone();
    let finite = x.iter().all(|v| v.is_finite());
    let min_eigenvalues = if finite && x.len() == p.num_vars {
        p.min_eigenvalues(&x)
    } else {
        vec![f64::NEG_INFINITY; p.blocks.len()]
    };
    let replay_ok = finite && p.replay_ok(&x, c.replay_tol());
    let (status, weak) = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved if replay_ok => (SolveStatus::Feasible, false),
        SolverStatus::Solved | SolverStatus::AlmostSolved => (SolveStatus::Inaccurate, false),
        SolverStatus::PrimalInfeasible => (SolveStatus::Infeasible, false),
        SolverStatus::AlmostPrimalInfeasible => (SolveStatus::Infeasible, true),
        SolverStatus::MaxIterations | SolverStatus::MaxTime => (SolveStatus::IterationLimit, false),
        _ => (SolveStatus::Inaccurate, false),
    };
    let objective_value = (status == SolveStatus::Feasible)
        .then(|| p.objective_value(&x))
        .flatten();
    Ok(SolveOutcome {
        status,
        x,
        objective_value,
        weak,
        min_eigenvalues,
        backend_status: format!("{:?}", sol.status),
    })
}

/// Adjacent scalar blocks share one nonnegative cone.
fn merge_cones(cones: Vec<SupportedConeT<f64>>) -> Vec<SupportedConeT<f64>> {
    let mut out: Vec<SupportedConeT<f64>> = Vec::with_capacity(cones.len());
    for c in cones {
        if let (NonnegativeConeT(k), Some(NonnegativeConeT(prev))) = (&c, out.last_mut()) {
            *prev += *k;
            continue;
        }
        out.push(c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::{Affine, VarBuilder};

    #[test]
    fn scalar_lp_as_sdp() {
        let mut vb = VarBuilder::new();
        let x = vb.scalar("x");
        let blk = (&x - &Affine::identity(1)).into_lmi();
        let c = vb.objective_from(&x);
        let p = vb.finish(vec![blk], Some(c));
        let out = solve(&p, &SolverContract::default()).unwrap();
        assert_eq!(out.status, SolveStatus::Feasible);
        assert!((out.x[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn maximize_over_2x2_block() {
        let mut vb = VarBuilder::new();
        let x = vb.scalar("x");
        let one = Affine::identity(1);
        let blk = Affine::block(&[vec![Some(&x), None], vec![None, Some(&(&one - &x))]]).into_lmi();
        let c = vb.objective_from(&(-&x));
        let p = vb.finish(vec![blk], Some(c));
        let out = solve(&p, &SolverContract::default()).unwrap();
        assert_eq!(out.status, SolveStatus::Feasible);
        assert!((out.x[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_detected() {
        let mut vb = VarBuilder::new();
        let x = vb.scalar("x");
        let one = Affine::identity(1);
        // x ≥ 1 and x ≤ 0
        let b1 = (&x - &one).into_lmi();
        let b2 = (-&x).into_lmi();
        let p = vb.finish(vec![b1, b2], None);
        let out = solve(&p, &SolverContract::default()).unwrap();
        assert_eq!(out.status, SolveStatus::Infeasible);
    }

    #[test]
    fn psd_matrix_variable() {
        // min trace X s.t. X ⪰ [[2,1],[1,2]]
        let mut vb = VarBuilder::new();
        let xm = vb.symmetric("X", 2);
        let c0 = Affine::constant(Mat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]));
        let blk = (&xm - &c0).into_lmi();
        let mut c = vec![0.0; 3];
        c[0] = 1.0;
        c[2] = 1.0;
        let p = vb.finish(vec![blk], Some(c));
        let out = solve(&p, &SolverContract::default()).unwrap();
        assert_eq!(out.status, SolveStatus::Feasible);
        assert!((out.objective_value.unwrap() - 4.0).abs() < 1e-6);
    }
}
