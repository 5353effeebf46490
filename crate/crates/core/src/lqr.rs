//! Discrete Lyapunov equation, LQR cost metric and the Riccati-optimal gain.

use alloc::format;

use crate::dynamics::{is_schur_matrix, Controller, DiscreteLinearSystem};
use crate::linalg::{self, Matrix};
use crate::{Error, Result};

/// Riccati iteration stops once successive iterates differ by less than this
/// (Frobenius norm).
pub const DARE_TOLERANCE: f64 = 1e-12;
pub const DARE_MAX_ITERATIONS: usize = 100_000;

/// State and input weights of the quadratic cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    q: Matrix,
    r: Matrix,
}

impl CostWeights {
    /// Validates that both weights are symmetric (to 1e-12) and positive definite.
    pub fn new(q: Matrix, r: Matrix) -> Result<Self> {
        check_spd(&q, "Q")?;
        check_spd(&r, "R")?;
        Ok(CostWeights {
            q: linalg::symmetrize(&q),
            r: linalg::symmetrize(&r),
        })
    }

    pub fn identity(state_dim: usize, input_dim: usize) -> Self {
        CostWeights {
            q: Matrix::identity(state_dim, state_dim),
            r: Matrix::identity(input_dim, input_dim),
        }
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn r(&self) -> &Matrix {
        &self.r
    }

    fn check_plant(&self, dsys: &DiscreteLinearSystem) -> Result<()> {
        if self.q.nrows() != dsys.state_dim() || self.r.nrows() != dsys.input_dim() {
            return Err(Error::dim(format!(
                "weights are {}x{} / {}x{}, plant has {} states and {} inputs",
                self.q.nrows(),
                self.q.ncols(),
                self.r.nrows(),
                self.r.ncols(),
                dsys.state_dim(),
                dsys.input_dim()
            )));
        }
        Ok(())
    }
}

fn check_spd(m: &Matrix, name: &'static str) -> Result<()> {
    if !m.is_square() || m.is_empty() {
        return Err(Error::invalid(
            name,
            format!("must be square, got {}x{}", m.nrows(), m.ncols()),
        ));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(name, "entries must be finite"));
    }
    if linalg::max_asymmetry(m) > 1e-12 {
        return Err(Error::invalid(name, "must be symmetric"));
    }
    let (min, _) = linalg::sym_eig_range(m);
    if !(min > 0.0) {
        return Err(Error::invalid(
            name,
            format!("must be positive definite (min eigenvalue {min})"),
        ));
    }
    Ok(())
}

/// Cost of a linear feedback. `metric` is `+∞` and `p` is empty when the
/// closed loop is not Schur.
#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub p: Matrix,
    pub metric: f64,
    pub stable: bool,
}

/// Solves `A_clᵀ P A_cl − P + M = 0` through the Kronecker-vectorized system
/// and returns the symmetrized solution.
pub fn solve_discrete_lyapunov(a_cl: &Matrix, m: &Matrix) -> Result<Matrix> {
    let n = a_cl.nrows();
    if !a_cl.is_square() || m.nrows() != n || m.ncols() != n {
        return Err(Error::dim(format!(
            "closed loop is {}x{}, weight is {}x{}",
            a_cl.nrows(),
            a_cl.ncols(),
            m.nrows(),
            m.ncols()
        )));
    }
    let radius = linalg::spectral_radius(a_cl)?;
    if !is_schur_matrix(a_cl)? {
        return Err(Error::UnstableClosedLoop {
            spectral_radius: radius,
        });
    }
    // vec(Aᵀ P A) = (Aᵀ ⊗ Aᵀ) vec(P) with column-major vec.
    let at = a_cl.transpose();
    let mut sys = at.kronecker(&at);
    for i in 0..n * n {
        sys[(i, i)] -= 1.0;
    }
    let rhs = -Matrix::from_column_slice(n * n, 1, m.as_slice());
    let sol = sys.lu().solve(&rhs).ok_or(Error::Singular)?;
    let p = Matrix::from_column_slice(n, n, sol.as_slice());
    Ok(linalg::symmetrize(&p))
}

/// Frobenius norm of `A_clᵀ P A_cl − P + M`.
pub fn lyapunov_residual(a_cl: &Matrix, p: &Matrix, m: &Matrix) -> f64 {
    (a_cl.transpose() * p * a_cl - p + m).norm()
}

/// `λ_max(P(K))` with `P(K)` from the closed-loop Lyapunov equation with
/// weight `Q + KᵀRK`.
pub fn lqr_cost_metric(dsys: &DiscreteLinearSystem, ctrl: &Controller, w: &CostWeights) -> Result<CostReport> {
    w.check_plant(dsys)?;
    let a_cl = dsys.closed_loop(ctrl)?;
    let unstable = CostReport {
        p: Matrix::zeros(0, 0),
        metric: f64::INFINITY,
        stable: false,
    };
    match is_schur_matrix(&a_cl) {
        Ok(true) => {}
        Ok(false) | Err(Error::EigenNonConvergence) => return Ok(unstable),
        Err(e) => return Err(e),
    }
    let m = &w.q + ctrl.k.transpose() * &w.r * &ctrl.k;
    let p = solve_discrete_lyapunov(&a_cl, &m)?;
    let (min, max) = linalg::sym_eig_range(&p);
    if !(min > 0.0) || !max.is_finite() {
        return Ok(unstable);
    }
    Ok(CostReport {
        p,
        metric: max,
        stable: true,
    })
}

/// Riccati-optimal gain by value iteration from `P₀ = Q`.
pub fn lqr_gain(dsys: &DiscreteLinearSystem, w: &CostWeights) -> Result<Controller> {
    let (ctrl, _) = lqr_solution(dsys, w)?;
    Ok(ctrl)
}

/// Like [`lqr_gain`] but also returns the Riccati solution.
pub fn lqr_solution(dsys: &DiscreteLinearSystem, w: &CostWeights) -> Result<(Controller, Matrix)> {
    w.check_plant(dsys)?;
    let a = &dsys.a;
    let b = &dsys.b;
    let at = a.transpose();
    let bt = b.transpose();
    let mut p = w.q.clone();
    let mut converged = false;
    for _ in 0..DARE_MAX_ITERATIONS {
        let next = riccati_step(a, &at, b, &bt, &p, w)?;
        let delta = (&next - &p).norm();
        p = next;
        if !delta.is_finite() {
            break;
        }
        if delta < DARE_TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::DareDivergence {
            iterations: DARE_MAX_ITERATIONS,
        });
    }
    let k = gain_from_riccati(a, b, &p, w)?;
    let ctrl = Controller::new(k)?;
    if !is_schur_matrix(&dsys.closed_loop(&ctrl)?)? {
        return Err(Error::NotStabilizing);
    }
    Ok((ctrl, p))
}

fn riccati_step(a: &Matrix, at: &Matrix, b: &Matrix, bt: &Matrix, p: &Matrix, w: &CostWeights) -> Result<Matrix> {
    let pa = p * a;
    let pb = p * b;
    let s = &w.r + bt * &pb;
    let btpa = bt * &pa;
    let x = s.lu().solve(&btpa).ok_or(Error::Singular)?;
    let next = &w.q + at * &pa - (at * &pb) * x;
    Ok(linalg::symmetrize(&next))
}

fn gain_from_riccati(a: &Matrix, b: &Matrix, p: &Matrix, w: &CostWeights) -> Result<Matrix> {
    let bt = b.transpose();
    let s = &w.r + &bt * p * b;
    s.lu().solve(&(&bt * p * a)).ok_or(Error::Singular)
}

/// Frobenius norm of the Riccati residual
/// `Q + AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA − P`.
pub fn dare_residual(dsys: &DiscreteLinearSystem, w: &CostWeights, p: &Matrix) -> Result<f64> {
    let a = &dsys.a;
    let b = &dsys.b;
    let next = riccati_step(a, &a.transpose(), b, &b.transpose(), p, w)?;
    Ok((next - p).norm())
}
