use super::{solve, SdpProblem, SolveOutcome, SolverContract};
use crate::error::{Error, Result};

pub const MAX_BISECTION_STEPS: usize = 40;

#[derive(Debug, Clone)]
pub struct BisectionResult {
    /// Smallest γ found feasible.
    pub gamma: f64,
    pub outcome: SolveOutcome,
    pub problem: SdpProblem,
    /// Largest γ found infeasible (or `lo` if `lo` was never tested infeasible).
    pub lower: f64,
    pub steps: usize,
}

/// Geometric bisection on γ over a monotone family of feasibility problems.
///
/// Only replay-verified feasible outcomes move the upper end, so the returned
/// certificate always replays.
pub fn bisect_gamma<F>(builder: F, lo: f64, hi: f64, tol_rel: f64, contract: &SolverContract) -> Result<BisectionResult>
where
    F: Fn(f64) -> Result<SdpProblem>,
{
    if !(lo > 0.0) || !hi.is_finite() || lo > hi {
        return Err(Error::InvalidArgument(format!("bad bisection bracket [{lo}, {hi}]")));
    }
    if !(tol_rel > 0.0) {
        return Err(Error::InvalidArgument("bisection tolerance must be positive".into()));
    }
    let problem = builder(hi)?;
    let outcome = solve(&problem, contract)?;
    if !outcome.is_feasible() {
        return Err(Error::NotFound { hi });
    }
    let mut best = BisectionResult { gamma: hi, outcome, problem, lower: lo, steps: 0 };
    let (mut a, mut b) = (lo, hi);
    for step in 0..MAX_BISECTION_STEPS {
        if b / a - 1.0 <= tol_rel {
            break;
        }
        let mid = (a * b).sqrt();
        let problem = builder(mid)?;
        let outcome = solve(&problem, contract)?;
        best.steps = step + 1;
        if outcome.is_feasible() {
            b = mid;
            best.gamma = mid;
            best.outcome = outcome;
            best.problem = problem;
        } else {
            a = mid;
        }
    }
    best.lower = a;
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::sdp::{Affine, VarBuilder};

    fn threshold_problem(gamma: f64) -> Result<SdpProblem> {
        // Feasible iff γ ≥ 2: x ≥ 0 with γ - 2 - x ≥ 0.
        let mut vb = VarBuilder::new();
        let x = vb.scalar("x");
        let c = Affine::constant(Mat::from_element(1, 1, gamma - 2.0));
        let blocks = vec![x.clone().into_lmi(), (&c - &x).into_lmi()];
        Ok(vb.finish(blocks, None))
    }

    #[test]
    fn finds_analytic_threshold() {
        let r = bisect_gamma(threshold_problem, 1e-6, 1e6, 1e-6, &SolverContract::default()).unwrap();
        assert!((r.gamma - 2.0).abs() <= 2.0 * 1e-5, "gamma = {}", r.gamma);
        assert!(r.outcome.is_feasible());
        assert!(r.gamma >= r.lower);
    }

    #[test]
    fn inverted_bracket_rejected() {
        assert!(matches!(
            bisect_gamma(threshold_problem, 3.0, 1.0, 1e-6, &SolverContract::default()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn infeasible_upper_end() {
        assert!(matches!(
            bisect_gamma(threshold_problem, 0.1, 1.0, 1e-6, &SolverContract::default()),
            Err(Error::NotFound { .. })
        ));
    }
}
