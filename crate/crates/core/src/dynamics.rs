//! Plants, linearization, zero-order-hold discretization and closed-loop
//! simulation.
//!
//! States and inputs handed to a [`NonlinearSystem`] are absolute; the
//! linear models and controllers work in deviation coordinates around the
//! plant's equilibrium pair.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::linalg::{self, Matrix};
use crate::{Error, Result};

/// Eigenvalues of a Schur-stable closed loop must have modulus below `1 - SCHUR_MARGIN`.
pub const SCHUR_MARGIN: f64 = 1e-9;

/// RK4 substeps per sampling interval in [`simulate`].
pub const RK4_SUBSTEPS: usize = 10;

/// State norm beyond which a simulated trajectory is flagged as diverged.
pub const DIVERGENCE_NORM: f64 = 1e6;

/// Continuous-time vector field `ẋ = f(x, u)`.
pub trait VectorField: Send + Sync {
    fn eval(&self, x: &[f64], u: &[f64], dx: &mut [f64]);

    /// Analytic `(∂f/∂x, ∂f/∂u)`; `None` selects finite differences.
    fn jacobian(&self, _x: &[f64], _u: &[f64]) -> Option<(Matrix, Matrix)> {
        None
    }
}

/// Adapter for closures, mostly useful in tests.
pub struct FnField<F>(pub F);

impl<F> VectorField for FnField<F>
where
    F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync,
{
    fn eval(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        (self.0)(x, u, dx)
    }
}

#[derive(Clone)]
pub struct NonlinearSystem {
    state_dim: usize,
    input_dim: usize,
    field: Arc<dyn VectorField>,
    equilibrium_state: Vec<f64>,
    equilibrium_input: Vec<f64>,
    input_limit: Option<f64>,
}

impl fmt::Debug for NonlinearSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearSystem")
            .field("state_dim", &self.state_dim)
            .field("input_dim", &self.input_dim)
            .field("equilibrium_state", &self.equilibrium_state)
            .field("equilibrium_input", &self.equilibrium_input)
            .field("input_limit", &self.input_limit)
            .finish_non_exhaustive()
    }
}

impl NonlinearSystem {
    /// Builds a plant and checks that the equilibrium pair is genuine.
    pub fn new(
        field: Arc<dyn VectorField>,
        equilibrium_state: Vec<f64>,
        equilibrium_input: Vec<f64>,
        input_limit: Option<f64>,
    ) -> Result<Self> {
        let state_dim = equilibrium_state.len();
        let input_dim = equilibrium_input.len();
        if state_dim == 0 || input_dim == 0 {
            return Err(Error::dim("plants need at least one state and one input"));
        }
        if let Some(limit) = input_limit {
            if !(limit >= 0.0) {
                return Err(Error::invalid("input_limit", "must be non-negative"));
            }
        }
        let sys = NonlinearSystem {
            state_dim,
            input_dim,
            field,
            equilibrium_state,
            equilibrium_input,
            input_limit,
        };
        let residual = sys.equilibrium_residual();
        if !(residual < 1e-9) {
            return Err(Error::NotEquilibrium { residual });
        }
        Ok(sys)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn equilibrium_state(&self) -> &[f64] {
        &self.equilibrium_state
    }

    pub fn equilibrium_input(&self) -> &[f64] {
        &self.equilibrium_input
    }

    pub fn input_limit(&self) -> Option<f64> {
        self.input_limit
    }

    pub fn with_input_limit(mut self, limit: Option<f64>) -> Self {
        self.input_limit = limit;
        self
    }

    pub fn eval(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        self.field.eval(x, u, dx)
    }

    /// `‖f(x_eq, u_eq)‖`.
    pub fn equilibrium_residual(&self) -> f64 {
        let mut dx = vec![0.0; self.state_dim];
        self.field
            .eval(&self.equilibrium_state, &self.equilibrium_input, &mut dx);
        linalg::euclid(&dx)
    }
}

/// Continuous-time linear model `ẋ = A x + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: Matrix,
    pub b: Matrix,
}

impl LinearSystem {
    pub fn new(a: Matrix, b: Matrix) -> Result<Self> {
        if !a.is_square() || a.nrows() != b.nrows() || b.ncols() == 0 {
            return Err(Error::dim(format!(
                "A is {}x{}, B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        Ok(LinearSystem { a, b })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
}

/// Sampled model `x[r+1] = A_τ x[r] + B_τ u[r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLinearSystem {
    pub a: Matrix,
    pub b: Matrix,
    pub tau: f64,
}

impl DiscreteLinearSystem {
    pub fn new(a: Matrix, b: Matrix, tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::invalid("tau", "sampling time must be positive"));
        }
        let lin = LinearSystem::new(a, b)?;
        Ok(DiscreteLinearSystem {
            a: lin.a,
            b: lin.b,
            tau,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// `A_τ − B_τ K`.
    pub fn closed_loop(&self, ctrl: &Controller) -> Result<Matrix> {
        self.check_gain(ctrl)?;
        Ok(&self.a - &self.b * &ctrl.k)
    }

    pub(crate) fn check_gain(&self, ctrl: &Controller) -> Result<()> {
        if ctrl.k.nrows() != self.input_dim() || ctrl.k.ncols() != self.state_dim() {
            return Err(Error::dim(format!(
                "gain is {}x{}, plant expects {}x{}",
                ctrl.k.nrows(),
                ctrl.k.ncols(),
                self.input_dim(),
                self.state_dim()
            )));
        }
        Ok(())
    }
}

/// Linear state feedback `u = −K x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    pub k: Matrix,
}

impl Controller {
    pub fn new(k: Matrix) -> Result<Self> {
        if k.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("K", "gain entries must be finite"));
        }
        Ok(Controller { k })
    }

    pub fn zeros(input_dim: usize, state_dim: usize) -> Self {
        Controller {
            k: Matrix::zeros(input_dim, state_dim),
        }
    }

    /// Gain from a row-major flat vector, the layout used by the swarm.
    pub fn from_flat(input_dim: usize, state_dim: usize, flat: &[f64]) -> Result<Self> {
        if flat.len() != input_dim * state_dim {
            return Err(Error::dim(format!(
                "{} gain entries for a {}x{} gain",
                flat.len(),
                input_dim,
                state_dim
            )));
        }
        Controller::new(Matrix::from_row_slice(input_dim, state_dim, flat))
    }

    /// Row-major flattening, inverse of [`Controller::from_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.k.len());
        for i in 0..self.k.nrows() {
            for j in 0..self.k.ncols() {
                out.push(self.k[(i, j)]);
            }
        }
        out
    }

    /// `u = −K x`.
    pub fn input(&self, x: &[f64], u: &mut [f64]) {
        linalg::mat_vec(&self.k, x, u);
        for v in u.iter_mut() {
            *v = -*v;
        }
    }
}

/// Sampled closed-loop trajectory. `inputs[r]` is the input held over
/// `[times[r], times[r+1])`; the last entry is the input the controller would
/// apply at the final sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub diverged: bool,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().map(|s| s.as_slice()).unwrap_or(&[])
    }
}

/// `e^{A t}` by scaling and squaring around a truncated Taylor series.
pub fn matrix_exp(a: &Matrix, t: f64) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::dim(format!(
            "matrix exponential of a {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid("t", "must be finite and non-negative"));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("A", "entries must be finite"));
    }
    let n = a.nrows();
    let scaled = a * t;
    let norm = linalg::norm_one(&scaled);

    // Scale until the norm is at most 1/2.
    let mut squarings = 0u32;
    let mut theta = norm;
    while theta > 0.5 {
        theta *= 0.5;
        squarings += 1;
    }
    let x = scaled / libm::pow(2.0, squarings as f64);

    // Smallest order q whose remainder bound θ^{q+1}/(q+1)! · 1/(1 − θ/(q+2))
    // is below 1e-16 (well under the 1e-14 requirement).
    let mut order = 1usize;
    let mut term_bound = theta; // θ^q / q!
    loop {
        let next = term_bound * theta / (order + 1) as f64;
        let tail = next / (1.0 - theta / (order + 2) as f64);
        if tail < 1e-16 || theta == 0.0 {
            break;
        }
        term_bound = next;
        order += 1;
    }

    // Horner: I + X(I + X/2(I + X/3(...)))
    let eye = Matrix::identity(n, n);
    let mut acc = eye.clone();
    for k in (1..=order).rev() {
        acc = &eye + (&x * &acc) / k as f64;
    }
    for _ in 0..squarings {
        acc = &acc * &acc;
    }
    Ok(acc)
}

/// Jacobians of the vector field at the equilibrium pair.
pub fn linearize(sys: &NonlinearSystem) -> Result<LinearSystem> {
    let x0 = sys.equilibrium_state();
    let u0 = sys.equilibrium_input();
    if let Some((a, b)) = sys.field.jacobian(x0, u0) {
        return LinearSystem::new(a, b);
    }
    let n = sys.state_dim();
    let m = sys.input_dim();
    let mut a = Matrix::zeros(n, n);
    let mut b = Matrix::zeros(n, m);
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];

    let mut x = x0.to_vec();
    for j in 0..n {
        let h = 1e-6 * (1.0 + x0[j].abs());
        x[j] = x0[j] + h;
        sys.eval(&x, u0, &mut plus);
        x[j] = x0[j] - h;
        sys.eval(&x, u0, &mut minus);
        x[j] = x0[j];
        for i in 0..n {
            a[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    let mut u = u0.to_vec();
    for j in 0..m {
        let h = 1e-6 * (1.0 + u0[j].abs());
        u[j] = u0[j] + h;
        sys.eval(x0, &u, &mut plus);
        u[j] = u0[j] - h;
        sys.eval(x0, &u, &mut minus);
        u[j] = u0[j];
        for i in 0..n {
            b[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    LinearSystem::new(a, b)
}

/// Exact zero-order-hold discretization.
///
/// Both matrices come out of one exponential of the augmented generator
/// `τ·[[A, B], [0, 0]]`: the top-left block is `A_τ`, the top-right `B_τ`.
pub fn discretize(lin: &LinearSystem, tau: f64) -> Result<DiscreteLinearSystem> {
    if !(tau > 0.0) {
        return Err(Error::invalid("tau", "sampling time must be positive"));
    }
    let n = lin.state_dim();
    let m = lin.input_dim();
    let mut aug = Matrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&lin.a);
    aug.view_mut((0, n), (n, m)).copy_from(&lin.b);
    let e = matrix_exp(&aug, tau)?;
    DiscreteLinearSystem::new(
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
        tau,
    )
}

/// One closed-loop step `(A_τ − B_τ K) x`.
pub fn step_linear(dsys: &DiscreteLinearSystem, ctrl: &Controller, x: &[f64]) -> Result<Vec<f64>> {
    let a_cl = dsys.closed_loop(ctrl)?;
    if x.len() != dsys.state_dim() {
        return Err(Error::dim(format!(
            "state has {} entries, plant has {}",
            x.len(),
            dsys.state_dim()
        )));
    }
    let mut out = vec![0.0; x.len()];
    linalg::mat_vec(&a_cl, x, &mut out);
    Ok(out)
}

/// Schur test on an arbitrary square matrix with the strict margin.
pub fn is_schur_matrix(m: &Matrix) -> Result<bool> {
    Ok(linalg::spectral_radius(m)? < 1.0 - SCHUR_MARGIN)
}

/// True iff every eigenvalue of `A_τ − B_τ K` has modulus below `1 − 1e-9`.
pub fn is_schur(dsys: &DiscreteLinearSystem, ctrl: &Controller) -> Result<bool> {
    is_schur_matrix(&dsys.closed_loop(ctrl)?)
}

fn saturate(u: &mut [f64], limit: Option<f64>) {
    if let Some(lim) = limit {
        for v in u.iter_mut() {
            *v = v.clamp(-lim, lim);
        }
    }
}

/// Zero-order-hold input for absolute state `x`:
/// `clamp(−K (x − x_eq) + u_eq, ±u_max)`.
pub fn feedback_input(sys: &NonlinearSystem, ctrl: &Controller, x: &[f64], u: &mut [f64]) {
    let dev: Vec<f64> = x.iter().zip(sys.equilibrium_state()).map(|(a, b)| a - b).collect();
    ctrl.input(&dev, u);
    for (ui, u0) in u.iter_mut().zip(sys.equilibrium_input()) {
        *ui += u0;
    }
    saturate(u, sys.input_limit());
}

/// Integrates `ẋ = f(x, u)` over one sample with `u` held, RK4 with
/// [`RK4_SUBSTEPS`] substeps.
pub fn integrate_held(sys: &NonlinearSystem, x: &mut [f64], u: &[f64], tau: f64) {
    let n = x.len();
    let h = tau / RK4_SUBSTEPS as f64;
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    for _ in 0..RK4_SUBSTEPS {
        sys.eval(x, u, &mut k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        sys.eval(&tmp, u, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        sys.eval(&tmp, u, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        sys.eval(&tmp, u, &mut k4);
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

/// Sampled-data closed-loop simulation of the nonlinear plant.
///
/// Divergence (state norm above [`DIVERGENCE_NORM`]) stops the run early and
/// sets [`Trajectory::diverged`]; it is not an error.
pub fn simulate(sys: &NonlinearSystem, ctrl: &Controller, x0: &[f64], tau: f64, steps: usize) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::invalid("steps", "must be at least 1"));
    }
    if !(tau > 0.0) {
        return Err(Error::invalid("tau", "sampling time must be positive"));
    }
    if x0.len() != sys.state_dim() {
        return Err(Error::dim(format!(
            "initial state has {} entries, plant has {}",
            x0.len(),
            sys.state_dim()
        )));
    }
    if ctrl.k.nrows() != sys.input_dim() || ctrl.k.ncols() != sys.state_dim() {
        return Err(Error::dim("gain shape does not match the plant"));
    }
    let m = sys.input_dim();
    let mut x = x0.to_vec();
    let mut u = vec![0.0; m];
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        inputs: Vec::with_capacity(steps + 1),
        diverged: false,
    };
    for r in 0..=steps {
        feedback_input(sys, ctrl, &x, &mut u);
        traj.times.push(r as f64 * tau);
        traj.states.push(x.clone());
        traj.inputs.push(u.clone());
        let norm = linalg::euclid(&x);
        if !(norm <= DIVERGENCE_NORM) {
            traj.diverged = true;
            break;
        }
        if r == steps {
            break;
        }
        integrate_held(sys, &mut x, &u, tau);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn decay() -> NonlinearSystem {
        NonlinearSystem::new(
            Arc::new(FnField(|x: &[f64], _u: &[f64], dx: &mut [f64]| dx[0] = -x[0])),
            vec![0.0],
            vec![0.0],
            None,
        )
        .unwrap()
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let e = matrix_exp(&Matrix::zeros(2, 2), 1.0).unwrap();
        assert_eq!(e, Matrix::identity(2, 2));
    }

    #[test]
    fn exp_of_nilpotent_terminates() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = matrix_exp(&a, 0.01).unwrap();
        let want = Matrix::from_row_slice(2, 2, &[1.0, 0.01, 0.0, 1.0]);
        assert_abs_diff_eq!(e, want, epsilon = 1e-15);
    }

    #[test]
    fn exp_scalar_matches_closed_form() {
        let e = matrix_exp(&Matrix::from_element(1, 1, -1.0), 1.0).unwrap();
        assert_abs_diff_eq!(e[(0, 0)], 0.367879441, epsilon = 1e-9);
        assert!((e[(0, 0)] - libm::exp(-1.0)).abs() < 1e-15);
    }

    #[test]
    fn exp_large_norm_relative_accuracy() {
        // diag(-30, 2) over t = 1 exercises several squarings
        let a = Matrix::from_row_slice(2, 2, &[-30.0, 0.0, 0.0, 2.0]);
        let e = matrix_exp(&a, 1.0).unwrap();
        assert!((e[(0, 0)] / libm::exp(-30.0) - 1.0).abs() < 1e-12);
        assert!((e[(1, 1)] / libm::exp(2.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exp_rejects_non_square() {
        assert!(matches!(
            matrix_exp(&Matrix::zeros(2, 3), 1.0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn discretize_constant_integrand() {
        let b = Matrix::from_row_slice(2, 1, &[3.0, -2.0]);
        let d = discretize(&LinearSystem::new(Matrix::zeros(2, 2), b.clone()).unwrap(), 0.01).unwrap();
        assert_abs_diff_eq!(d.a, Matrix::identity(2, 2), epsilon = 1e-15);
        assert_abs_diff_eq!(d.b, b * 0.01, epsilon = 1e-15);
    }

    #[test]
    fn discretize_double_integrator() {
        let lin = LinearSystem::new(
            Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            Matrix::from_row_slice(2, 1, &[0.0, 1.0]),
        )
        .unwrap();
        let d = discretize(&lin, 0.01).unwrap();
        assert_abs_diff_eq!(
            d.a,
            Matrix::from_row_slice(2, 2, &[1.0, 0.01, 0.0, 1.0]),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(d.b, Matrix::from_row_slice(2, 1, &[5e-5, 0.01]), epsilon = 1e-15);
    }

    #[test]
    fn discretize_scalar_decay() {
        let lin = LinearSystem::new(Matrix::from_element(1, 1, -1.0), Matrix::from_element(1, 1, 1.0)).unwrap();
        let d = discretize(&lin, 1.0).unwrap();
        assert_abs_diff_eq!(d.a[(0, 0)], 0.3678794, epsilon = 1e-7);
        assert_abs_diff_eq!(d.b[(0, 0)], 0.6321206, epsilon = 1e-7);
        assert_abs_diff_eq!(d.b[(0, 0)], 1.0 - libm::exp(-1.0), epsilon = 1e-8);
    }

    #[test]
    fn discretize_rejects_bad_tau() {
        let lin = LinearSystem::new(Matrix::zeros(1, 1), Matrix::zeros(1, 1)).unwrap();
        assert!(discretize(&lin, 0.0).is_err());
        assert!(discretize(&lin, -1.0).is_err());
    }

    #[test]
    fn step_linear_cases() {
        let d = DiscreteLinearSystem::new(
            Matrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 0.9]),
            Matrix::from_row_slice(2, 1, &[0.0, 1.0]),
            0.1,
        )
        .unwrap();
        let x0 = [2.0, -1.0];
        let open = step_linear(&d, &Controller::zeros(1, 2), &x0).unwrap();
        assert_abs_diff_eq!(open[0], 1.9, epsilon = 1e-15);
        assert_abs_diff_eq!(open[1], -0.9, epsilon = 1e-15);
        let k = Controller::from_flat(1, 2, &[0.3, 0.4]).unwrap();
        assert_eq!(step_linear(&d, &k, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);

        let scalar =
            DiscreteLinearSystem::new(Matrix::from_element(1, 1, 1.0), Matrix::from_element(1, 1, 1.0), 1.0).unwrap();
        let golden = Controller::from_flat(1, 1, &[0.618034]).unwrap();
        assert_abs_diff_eq!(
            step_linear(&scalar, &golden, &[1.0]).unwrap()[0],
            0.381966,
            epsilon = 1e-12
        );

        assert!(step_linear(&d, &Controller::zeros(1, 3), &x0).is_err());
        assert!(step_linear(&d, &k, &[1.0]).is_err());
    }

    #[test]
    fn schur_checks() {
        assert!(is_schur_matrix(&Matrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.3])).unwrap());
        assert!(!is_schur_matrix(&Matrix::from_element(1, 1, 1.1)).unwrap());
        let s = 0.999999999;
        let rot = Matrix::from_row_slice(2, 2, &[0.0, -s, s, 0.0]);
        assert!(!is_schur_matrix(&rot).unwrap());
        let d =
            DiscreteLinearSystem::new(Matrix::from_element(1, 1, 1.2), Matrix::from_element(1, 1, 1.0), 0.1).unwrap();
        assert!(!is_schur(&d, &Controller::zeros(1, 1)).unwrap());
        assert!(is_schur(&d, &Controller::from_flat(1, 1, &[0.5]).unwrap()).unwrap());
    }

    #[test]
    fn linearize_finite_differences_on_linear_field() {
        let m = Matrix::from_row_slice(2, 2, &[0.3, -1.2, 2.0, 0.7]);
        let nmat = Matrix::from_row_slice(2, 1, &[0.5, -4.0]);
        let (mc, nc) = (m.clone(), nmat.clone());
        let sys = NonlinearSystem::new(
            Arc::new(FnField(move |x: &[f64], u: &[f64], dx: &mut [f64]| {
                for i in 0..2 {
                    dx[i] = mc[(i, 0)] * x[0] + mc[(i, 1)] * x[1] + nc[(i, 0)] * u[0];
                }
            })),
            vec![0.0, 0.0],
            vec![0.0],
            None,
        )
        .unwrap();
        let lin = linearize(&sys).unwrap();
        assert_abs_diff_eq!(lin.a, m, epsilon = 1e-6);
        assert_abs_diff_eq!(lin.b, nmat, epsilon = 1e-6);
    }

    #[test]
    fn rejects_fake_equilibrium() {
        let err = NonlinearSystem::new(
            Arc::new(FnField(|_x: &[f64], _u: &[f64], dx: &mut [f64]| dx[0] = 1.0)),
            vec![0.0],
            vec![0.0],
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NotEquilibrium { .. }));
    }

    #[test]
    fn simulate_exponential_decay() {
        let traj = simulate(&decay(), &Controller::zeros(1, 1), &[1.0], 0.01, 100).unwrap();
        assert_eq!(traj.states.len(), 101);
        assert_eq!(traj.inputs.len(), 101);
        assert!(!traj.diverged);
        assert_abs_diff_eq!(traj.final_state()[0], 0.3678794, epsilon = 1e-7);
        assert!(traj.times.windows(2).all(|w| (w[1] - w[0] - 0.01).abs() < 1e-12));
    }

    #[test]
    fn simulate_flags_divergence() {
        let grow = NonlinearSystem::new(
            Arc::new(FnField(|x: &[f64], _u: &[f64], dx: &mut [f64]| dx[0] = 50.0 * x[0])),
            vec![0.0],
            vec![0.0],
            None,
        )
        .unwrap();
        let traj = simulate(&grow, &Controller::zeros(1, 1), &[1.0], 0.1, 1000).unwrap();
        assert!(traj.diverged);
        assert!(traj.states.len() < 1001);
        assert!(simulate(&grow, &Controller::zeros(1, 1), &[1.0], 0.1, 0).is_err());
    }

    #[test]
    fn saturation_clamps_input() {
        let sys = decay().with_input_limit(Some(0.5));
        let k = Controller::from_flat(1, 1, &[10.0]).unwrap();
        let mut u = [0.0];
        feedback_input(&sys, &k, &[1.0], &mut u);
        assert_eq!(u[0], -0.5);
        feedback_input(&sys, &k, &[-0.01], &mut u);
        assert_abs_diff_eq!(u[0], 0.1, epsilon = 1e-15);
    }
}
