//! State grids and certified region-of-attraction extraction.
//!
//! Grids live in deviation coordinates, so the equilibrium is the origin.
//! A cell is certified when the Lipschitz-tightened decrease condition
//! `v(step(x)) − v(x) + L·mu < 0` holds at its center; certification walks the
//! cells in ascending `v` and stops at the first failure, which fixes the level
//! `c` of the certified sublevel set.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::dynamics::{feedback_input, integrate_held, Controller, DiscreteLinearSystem, NonlinearSystem};
use crate::linalg::{self, Matrix};
use crate::lqr::{lqr_cost_metric, CostWeights};
use crate::{Error, Result};

/// Uniform lattice of cell centers over an axis-aligned box.
///
/// Cells are indexed lexicographically with the first dimension varying
/// slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct StateGrid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    points: Vec<usize>,
    widths: Vec<f64>,
    strides: Vec<usize>,
    mu: f64,
    total: usize,
}

impl StateGrid {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn points_per_dim(&self) -> &[usize] {
        &self.points
    }

    /// Cell width per dimension.
    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    /// Covering radius: half the cell diagonal.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Writes the center of cell `index` into `out`.
    pub fn center(&self, index: usize, out: &mut [f64]) {
        debug_assert!(index < self.total);
        let mut rem = index;
        for d in 0..self.dim() {
            let i = rem / self.strides[d];
            rem %= self.strides[d];
            out[d] = if i + 1 == self.points[d] {
                self.upper[d]
            } else {
                self.lower[d] + i as f64 * self.widths[d]
            };
        }
    }

    pub fn center_vec(&self, index: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.center(index, &mut out);
        out
    }

    /// Index of the cell whose center is nearest to `x`, if `x` is in the box.
    pub fn nearest_cell(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim() {
            return None;
        }
        let mut index = 0;
        for d in 0..self.dim() {
            if !(x[d] >= self.lower[d] && x[d] <= self.upper[d]) {
                return None;
            }
            let i = libm::round((x[d] - self.lower[d]) / self.widths[d]) as usize;
            index += i.min(self.points[d] - 1) * self.strides[d];
        }
        Some(index)
    }
}

/// Builds the lattice `linspace(lower_i, upper_i, points_i)` per dimension.
pub fn build_grid(lower: &[f64], upper: &[f64], points_per_dim: &[usize]) -> Result<StateGrid> {
    let n = lower.len();
    if n == 0 || upper.len() != n || points_per_dim.len() != n {
        return Err(Error::dim(format!(
            "grid bounds have {} / {} entries and {} point counts",
            lower.len(),
            upper.len(),
            points_per_dim.len()
        )));
    }
    for d in 0..n {
        if !(lower[d].is_finite() && upper[d].is_finite() && upper[d] > lower[d]) {
            return Err(Error::invalid(
                "grid",
                format!("dimension {d}: need finite lower < upper"),
            ));
        }
        if points_per_dim[d] < 3 {
            return Err(Error::invalid(
                "points_per_dim",
                format!("dimension {d}: need at least 3 points"),
            ));
        }
        if !(lower[d] <= 0.0 && upper[d] >= 0.0) {
            return Err(Error::invalid(
                "grid",
                format!("dimension {d}: the equilibrium lies outside the box"),
            ));
        }
    }
    let widths: Vec<f64> = (0..n)
        .map(|d| (upper[d] - lower[d]) / (points_per_dim[d] - 1) as f64)
        .collect();
    let mu = 0.5 * linalg::euclid(&widths);
    let mut strides = vec![1usize; n];
    let mut total = 1usize;
    for d in (0..n).rev() {
        strides[d] = total;
        total = total
            .checked_mul(points_per_dim[d])
            .ok_or_else(|| Error::invalid("points_per_dim", "cell count overflows"))?;
    }
    Ok(StateGrid {
        lower: lower.to_vec(),
        upper: upper.to_vec(),
        points: points_per_dim.to_vec(),
        widths,
        strides,
        mu,
        total,
    })
}

/// Lipschitz data of a closed-loop state map `s` with `s(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLipschitz {
    /// Bound on the Lipschitz constant of `s`.
    pub map: f64,
    /// Bound on the Lipschitz constant of `x ↦ s(x) − x`.
    pub increment: f64,
}

/// Closed-loop state map in deviation coordinates.
pub trait StepMap: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
    fn lipschitz(&self) -> StepLipschitz;

    /// The matrix when the map is linear.
    fn linear_part(&self) -> Option<&Matrix> {
        None
    }
}

/// `x ↦ (A_τ − B_τ K) x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearStep {
    a_cl: Matrix,
    lip: StepLipschitz,
}

impl LinearStep {
    pub fn new(a_cl: Matrix) -> Result<Self> {
        if !a_cl.is_square() {
            return Err(Error::dim("closed-loop matrix must be square"));
        }
        let n = a_cl.nrows();
        let lip = StepLipschitz {
            map: linalg::spectral_norm(&a_cl),
            increment: linalg::spectral_norm(&(&a_cl - Matrix::identity(n, n))),
        };
        Ok(LinearStep { a_cl, lip })
    }

    pub fn closed_loop(dsys: &DiscreteLinearSystem, ctrl: &Controller) -> Result<Self> {
        LinearStep::new(dsys.closed_loop(ctrl)?)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a_cl
    }
}

impl StepMap for LinearStep {
    fn dim(&self) -> usize {
        self.a_cl.nrows()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        linalg::mat_vec(&self.a_cl, x, out);
    }

    fn lipschitz(&self) -> StepLipschitz {
        self.lip
    }

    fn linear_part(&self) -> Option<&Matrix> {
        Some(&self.a_cl)
    }
}

/// One sampling interval of the saturated nonlinear closed loop, integrated
/// with RK4. Meant for validation runs; fitness always uses [`LinearStep`].
///
/// `field_lipschitz` must bound the Lipschitz constant of the closed-loop
/// vector field `x ↦ f(x, sat(−Kx))` over the region of interest; the step
/// bounds follow from Grönwall's inequality.
#[derive(Debug, Clone)]
pub struct ClosedLoopStep {
    sys: NonlinearSystem,
    ctrl: Controller,
    tau: f64,
    lip: StepLipschitz,
}

impl ClosedLoopStep {
    pub fn new(sys: NonlinearSystem, ctrl: Controller, tau: f64, field_lipschitz: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::invalid("tau", "sampling time must be positive"));
        }
        if !(field_lipschitz >= 0.0) {
            return Err(Error::invalid("field_lipschitz", "must be non-negative"));
        }
        if ctrl.k.nrows() != sys.input_dim() || ctrl.k.ncols() != sys.state_dim() {
            return Err(Error::dim("gain shape does not match the plant"));
        }
        let growth = libm::expm1(field_lipschitz * tau);
        Ok(ClosedLoopStep {
            sys,
            ctrl,
            tau,
            lip: StepLipschitz {
                map: 1.0 + growth,
                increment: growth,
            },
        })
    }
}

impl StepMap for ClosedLoopStep {
    fn dim(&self) -> usize {
        self.sys.state_dim()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let eq = self.sys.equilibrium_state();
        for i in 0..x.len() {
            out[i] = x[i] + eq[i];
        }
        let mut u = vec![0.0; self.sys.input_dim()];
        feedback_input(&self.sys, &self.ctrl, out, &mut u);
        integrate_held(&self.sys, out, &u, self.tau);
        for i in 0..x.len() {
            out[i] -= eq[i];
        }
    }

    fn lipschitz(&self) -> StepLipschitz {
        self.lip
    }
}

/// Positive-definite function with a local Lipschitz bound on its decrease
/// `Δv(x) = v(step(x)) − v(x)` along the closed-loop map it was built for.
pub trait LyapunovCandidate: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    /// Bound on the Lipschitz constant of `Δv` over the ball of `radius`
    /// around `center`.
    fn local_lipschitz(&self, center: &[f64], radius: f64) -> f64;
}

/// `v(x) = xᵀ P x`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCandidate {
    p: Matrix,
    /// Slope factor `k` in the bound `k·(‖center‖ + radius)`.
    slope: f64,
}

impl QuadraticCandidate {
    /// Candidate for `step`. For a linear step the bound is
    /// `2‖A_clᵀPA_cl − P‖·ρ`; otherwise `2‖P‖·L_d(2 + L_d)·ρ` with `L_d` the
    /// increment Lipschitz constant of the step.
    pub fn for_step(p: Matrix, step: &dyn StepMap) -> Result<Self> {
        let n = step.dim();
        if p.nrows() != n || p.ncols() != n {
            return Err(Error::dim(format!(
                "P is {}x{}, step has {} states",
                p.nrows(),
                p.ncols(),
                n
            )));
        }
        if linalg::max_asymmetry(&p) > 1e-9 * (1.0 + p.amax()) {
            return Err(Error::invalid("P", "must be symmetric"));
        }
        let p = linalg::symmetrize(&p);
        let slope = match step.linear_part() {
            Some(a_cl) => 2.0 * linalg::spectral_norm(&decrease_matrix(&p, a_cl)),
            None => {
                let ld = step.lipschitz().increment;
                2.0 * linalg::spectral_norm(&p) * ld * (2.0 + ld)
            }
        };
        Ok(QuadraticCandidate { p, slope })
    }

    pub fn p(&self) -> &Matrix {
        &self.p
    }
}

impl LyapunovCandidate for QuadraticCandidate {
    fn dim(&self) -> usize {
        self.p.nrows()
    }

    fn value(&self, x: &[f64]) -> f64 {
        linalg::quad_form(&self.p, x)
    }

    fn local_lipschitz(&self, center: &[f64], radius: f64) -> f64 {
        self.slope * (linalg::euclid(center) + radius)
    }
}

/// `A_clᵀ P A_cl − P`, the matrix of the quadratic decrease.
pub fn decrease_matrix(p: &Matrix, a_cl: &Matrix) -> Matrix {
    linalg::symmetrize(&(a_cl.transpose() * p * a_cl - p))
}

/// `2‖N‖₂(‖center‖ + radius)`: Lipschitz bound of `x ↦ xᵀNx` over a ball.
pub fn quadratic_local_lipschitz(n: &Matrix, center: &[f64], radius: f64) -> f64 {
    2.0 * linalg::spectral_norm(n) * (linalg::euclid(center) + radius)
}

/// `v(step(x)) − v(x) + L·mu`; negative certifies the cell at `x`.
pub fn decrease_margin(cand: &dyn LyapunovCandidate, step: &dyn StepMap, x: &[f64], lipschitz: f64, mu: f64) -> f64 {
    let mut next = vec![0.0; x.len()];
    step.apply(x, &mut next);
    cand.value(&next) - cand.value(x) + lipschitz * mu
}

/// Radius of the ball around the equilibrium that is certified without the
/// tightened check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExemptionRadius {
    /// Multiple of the grid's covering radius.
    CoveringMultiple(f64),
    /// Fixed radius in state units, independent of the grid.
    Absolute(f64),
}

impl ExemptionRadius {
    pub fn resolve(&self, grid: &StateGrid) -> f64 {
        match *self {
            ExemptionRadius::CoveringMultiple(k) => k * grid.mu(),
            ExemptionRadius::Absolute(r) => r,
        }
    }
}

impl Default for ExemptionRadius {
    fn default() -> Self {
        ExemptionRadius::CoveringMultiple(10.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CertifyOptions {
    pub exemption: ExemptionRadius,
}

/// Fixed-size bitset of cell indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellSet {
    bits: Vec<u64>,
    universe: usize,
    count: usize,
}

impl CellSet {
    pub fn new(universe: usize) -> Self {
        CellSet {
            bits: vec![0; universe.div_ceil(64)],
            universe,
            count: 0,
        }
    }

    pub fn insert(&mut self, index: usize) {
        let (w, b) = (index / 64, index % 64);
        if self.bits[w] & (1 << b) == 0 {
            self.bits[w] |= 1 << b;
            self.count += 1;
        }
    }

    pub fn contains(&self, index: usize) -> bool {
        index < self.universe && self.bits[index / 64] & (1 << (index % 64)) != 0
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn is_subset(&self, other: &CellSet) -> bool {
        self.universe == other.universe && self.bits.iter().zip(&other.bits).all(|(a, b)| a & !b == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().flat_map(|(w, &word)| {
            let mut rest = word;
            core::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let b = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(w * 64 + b)
            })
        })
    }
}

/// Certified sublevel set on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RoaEstimate {
    pub threshold_c: f64,
    pub certified_cells: CellSet,
    pub size_cells: usize,
    pub size_fraction: f64,
    /// True when at least one cell outside the exemption ball is certified.
    pub certified: bool,
    pub exemption_cells: usize,
    pub exemption_radius: f64,
}

/// Certified cell count, the canonical ROA size.
pub fn roa_size(est: &RoaEstimate) -> usize {
    est.size_cells
}

/// Level-set certification in ascending `v` with first-failure stopping.
///
/// Ties in `v` are broken by cell index. If no cell fails, `threshold_c` is
/// the largest `v` on the grid and every cell is certified.
pub fn certify_roa(
    cand: &dyn LyapunovCandidate,
    step: &dyn StepMap,
    grid: &StateGrid,
    opts: &CertifyOptions,
) -> Result<RoaEstimate> {
    let n = grid.dim();
    if cand.dim() != n || step.dim() != n {
        return Err(Error::dim(format!(
            "grid has {} states, candidate {}, step {}",
            n,
            cand.dim(),
            step.dim()
        )));
    }
    let r0 = opts.exemption.resolve(grid);
    if !(r0 >= 0.0) {
        return Err(Error::invalid("exemption", "radius must be non-negative"));
    }
    // Centers on the exemption sphere are kept despite rounding in their
    // coordinates.
    let r0_test = r0 * (1.0 + 1e-9);
    let mu = grid.mu();
    let mut cells = CellSet::new(grid.len());
    let mut ranked: Vec<(f64, usize)> = Vec::with_capacity(grid.len());
    let mut x = vec![0.0; n];
    let mut next = vec![0.0; n];
    for idx in 0..grid.len() {
        grid.center(idx, &mut x);
        if linalg::euclid(&x) <= r0_test {
            cells.insert(idx);
        } else {
            ranked.push((cand.value(&x), idx));
        }
    }
    let exemption_cells = cells.len();
    ranked.sort_unstable_by(|a, b| match a.0.total_cmp(&b.0) {
        Ordering::Equal => a.1.cmp(&b.1),
        o => o,
    });

    let mut failed_at = None;
    for (pos, &(v, idx)) in ranked.iter().enumerate() {
        grid.center(idx, &mut x);
        step.apply(&x, &mut next);
        let margin = cand.value(&next) - v + cand.local_lipschitz(&x, mu) * mu;
        if !(margin < 0.0) {
            failed_at = Some(pos);
            break;
        }
    }
    let threshold_c = match failed_at {
        Some(pos) => {
            let c = ranked[pos].0;
            for &(v, idx) in &ranked[..pos] {
                if v < c {
                    cells.insert(idx);
                }
            }
            c
        }
        None => {
            for &(_, idx) in &ranked {
                cells.insert(idx);
            }
            ranked.last().map_or(0.0, |r| r.0)
        }
    };
    let size_cells = cells.len();
    Ok(RoaEstimate {
        threshold_c,
        size_fraction: size_cells as f64 / grid.len() as f64,
        certified: size_cells > exemption_cells,
        certified_cells: cells,
        size_cells,
        exemption_cells,
        exemption_radius: r0,
    })
}

/// Cells whose center has `v < c`.
pub fn level_set_cells(cand: &dyn LyapunovCandidate, grid: &StateGrid, c: f64) -> CellSet {
    let mut out = CellSet::new(grid.len());
    let mut x = vec![0.0; grid.dim()];
    for idx in 0..grid.len() {
        grid.center(idx, &mut x);
        if cand.value(&x) < c {
            out.insert(idx);
        }
    }
    out
}

/// Certifies `K` with the quadratic candidate `P(K)` from the LQR cost
/// Lyapunov equation. `None` when the closed loop is not Schur.
pub fn certify_quadratic(
    dsys: &DiscreteLinearSystem,
    ctrl: &Controller,
    weights: &CostWeights,
    grid: &StateGrid,
    opts: &CertifyOptions,
) -> Result<Option<RoaEstimate>> {
    let report = lqr_cost_metric(dsys, ctrl, weights)?;
    if !report.stable {
        return Ok(None);
    }
    let step = LinearStep::closed_loop(dsys, ctrl)?;
    let cand = QuadraticCandidate::for_step(report.p, &step)?;
    certify_roa(&cand, &step, grid, opts).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar_step(a: f64) -> LinearStep {
        LinearStep::new(Matrix::from_element(1, 1, a)).unwrap()
    }

    fn unit_quadratic(step: &LinearStep) -> QuadraticCandidate {
        QuadraticCandidate::for_step(Matrix::identity(step.dim(), step.dim()), step).unwrap()
    }

    #[test]
    fn grid_arithmetic() {
        let g = build_grid(&[-1.0], &[1.0], &[201]).unwrap();
        assert_abs_diff_eq!(g.widths()[0], 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(g.mu(), 0.005, epsilon = 1e-15);
        let g2 = build_grid(&[-1.0, -1.0], &[1.0, 1.0], &[201, 201]).unwrap();
        assert_abs_diff_eq!(g2.mu(), 0.00707107, epsilon = 1e-8);
        let g3 = build_grid(&[-1.0; 3], &[1.0; 3], &[250; 3]).unwrap();
        assert_eq!(g3.len(), 15_625_000);
    }

    #[test]
    fn grid_indexing_is_lexicographic() {
        let g = build_grid(&[-1.0, -2.0], &[1.0, 2.0], &[3, 5]).unwrap();
        assert_eq!(g.center_vec(0), vec![-1.0, -2.0]);
        assert_eq!(g.center_vec(1), vec![-1.0, -1.0]);
        assert_eq!(g.center_vec(5), vec![0.0, -2.0]);
        assert_eq!(g.center_vec(14), vec![1.0, 2.0]);
        for idx in 0..g.len() {
            assert_eq!(g.nearest_cell(&g.center_vec(idx)), Some(idx));
        }
        assert_eq!(g.nearest_cell(&[2.0, 0.0]), None);
    }

    #[test]
    fn grid_validation() {
        assert!(build_grid(&[0.5], &[1.0], &[11]).is_err());
        assert!(build_grid(&[-1.0], &[1.0], &[2]).is_err());
        assert!(build_grid(&[1.0], &[-1.0], &[11]).is_err());
        assert!(build_grid(&[-1.0, -1.0], &[1.0], &[11, 11]).is_err());
    }

    #[test]
    fn margin_examples() {
        let g = unit_quadratic(&scalar_step(0.5));
        let half = scalar_step(0.5);
        assert_abs_diff_eq!(decrease_margin(&g, &half, &[0.5], 2.0, 0.005), -0.1775, epsilon = 1e-15);
        let ident = scalar_step(1.0);
        assert_abs_diff_eq!(decrease_margin(&g, &ident, &[0.3], 2.0, 0.005), 0.01, epsilon = 1e-15);
        let double = scalar_step(2.0);
        assert_abs_diff_eq!(decrease_margin(&g, &double, &[0.5], 2.0, 0.005), 0.76, epsilon = 1e-15);
    }

    #[test]
    fn quadratic_lipschitz_examples() {
        let n = Matrix::from_element(1, 1, -0.75);
        assert_abs_diff_eq!(quadratic_local_lipschitz(&n, &[0.5], 0.005), 0.7575, epsilon = 1e-15);
        assert_abs_diff_eq!(
            quadratic_local_lipschitz(&n, &[0.0], 0.005),
            2.0 * 0.75 * 0.005,
            epsilon = 1e-15
        );
        assert_eq!(quadratic_local_lipschitz(&Matrix::zeros(2, 2), &[0.3, 0.1], 0.2), 0.0);
        let step = scalar_step(0.5);
        assert_abs_diff_eq!(
            unit_quadratic(&step).local_lipschitz(&[0.5], 0.005),
            0.7575,
            epsilon = 1e-15
        );
    }

    #[test]
    fn full_certification_of_contraction() {
        let grid = build_grid(&[-1.0], &[1.0], &[201]).unwrap();
        let step = scalar_step(0.5);
        let est = certify_roa(&unit_quadratic(&step), &step, &grid, &CertifyOptions::default()).unwrap();
        assert_eq!(roa_size(&est), 201);
        assert_eq!(est.size_fraction, 1.0);
        assert!(est.certified);
        assert_abs_diff_eq!(est.threshold_c, 1.0, epsilon = 1e-15);
        // Oracle: every grid state converges under repeated steps.
        for idx in 0..grid.len() {
            let mut x = grid.center_vec(idx)[0];
            for _ in 0..200 {
                x *= 0.5;
            }
            assert!(x.abs() < 1e-6);
        }
    }

    #[test]
    fn expansion_certifies_only_exemption() {
        let grid = build_grid(&[-1.0], &[1.0], &[201]).unwrap();
        let step = scalar_step(2.0);
        let est = certify_roa(&unit_quadratic(&step), &step, &grid, &CertifyOptions::default()).unwrap();
        assert!(!est.certified);
        assert_eq!(est.size_cells, est.exemption_cells);
        // r0 = 10·mu = 0.05 covers |x| ≤ 0.05 at width 0.01.
        assert_eq!(est.size_cells, 11);
    }

    #[test]
    fn absolute_exemption_radius() {
        let grid = build_grid(&[-1.0], &[1.0], &[201]).unwrap();
        let step = scalar_step(2.0);
        let opts = CertifyOptions {
            exemption: ExemptionRadius::Absolute(0.1),
        };
        let est = certify_roa(&unit_quadratic(&step), &step, &grid, &opts).unwrap();
        assert_eq!(est.size_cells, 21);
        assert_eq!(est.exemption_radius, 0.1);
    }

    #[test]
    fn first_failure_stops_the_walk() {
        // v = x², step contracts only for |x| < 0.4: the level set stops there
        // even though cells further out would pass again.
        struct Kinked;
        impl StepMap for Kinked {
            fn dim(&self) -> usize {
                1
            }
            fn apply(&self, x: &[f64], out: &mut [f64]) {
                out[0] = if x[0].abs() > 0.405 && x[0].abs() < 0.605 {
                    1.2 * x[0]
                } else {
                    0.5 * x[0]
                };
            }
            fn lipschitz(&self) -> StepLipschitz {
                StepLipschitz {
                    map: 1.2,
                    increment: 0.5,
                }
            }
        }
        struct Square;
        impl LyapunovCandidate for Square {
            fn dim(&self) -> usize {
                1
            }
            fn value(&self, x: &[f64]) -> f64 {
                x[0] * x[0]
            }
            fn local_lipschitz(&self, _c: &[f64], _r: f64) -> f64 {
                0.0
            }
        }
        let grid = build_grid(&[-1.0], &[1.0], &[201]).unwrap();
        let est = certify_roa(&Square, &Kinked, &grid, &CertifyOptions::default()).unwrap();
        // Passing cells: |x| ≤ 0.40 → 81 cells.
        assert_eq!(est.size_cells, 81);
        assert_abs_diff_eq!(est.threshold_c, 0.41 * 0.41, epsilon = 1e-12);
        let inner = level_set_cells(&Square, &grid, est.threshold_c);
        assert_eq!(inner, est.certified_cells);
    }

    #[test]
    fn cellset_ops() {
        let mut s = CellSet::new(130);
        for i in [0, 63, 64, 129, 64] {
            s.insert(i);
        }
        assert_eq!(s.len(), 4);
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![0, 63, 64, 129]);
        assert!(s.contains(129) && !s.contains(1) && !s.contains(500));
        let mut t = s.clone();
        t.insert(7);
        assert!(s.is_subset(&t) && !t.is_subset(&s));
    }

    #[test]
    fn quadratic_decrease_identity() {
        let a = Matrix::from_row_slice(2, 2, &[0.9, 0.2, -0.1, 0.8]);
        let m = Matrix::identity(2, 2);
        let p = crate::lqr::solve_discrete_lyapunov(&a, &m).unwrap();
        let step = LinearStep::new(a).unwrap();
        let cand = QuadraticCandidate::for_step(p, &step).unwrap();
        for x in [[0.3, -0.7], [1.5, 2.0], [-0.01, 0.02]] {
            let mut y = [0.0; 2];
            step.apply(&x, &mut y);
            let dv = cand.value(&y) - cand.value(&x);
            assert_abs_diff_eq!(dv, -linalg::quad_form(&m, &x), epsilon = 1e-10);
        }
    }

    #[test]
    fn closed_loop_step_matches_linear_step_on_linear_plant() {
        use crate::dynamics::{discretize, linearize, FnField};
        use alloc::sync::Arc;
        let sys = NonlinearSystem::new(
            Arc::new(FnField(|x: &[f64], u: &[f64], dx: &mut [f64]| {
                dx[0] = x[1];
                dx[1] = -0.5 * x[0] + u[0];
            })),
            vec![0.0, 0.0],
            vec![0.0],
            None,
        )
        .unwrap();
        let dsys = discretize(&linearize(&sys).unwrap(), 0.01).unwrap();
        let ctrl = Controller::from_flat(1, 2, &[1.0, 2.0]).unwrap();
        let lin = LinearStep::closed_loop(&dsys, &ctrl).unwrap();
        let nl = ClosedLoopStep::new(sys, ctrl, 0.01, 3.0).unwrap();
        let (mut a, mut b) = ([0.0; 2], [0.0; 2]);
        lin.apply(&[0.4, -0.3], &mut a);
        nl.apply(&[0.4, -0.3], &mut b);
        assert_abs_diff_eq!(a[0], b[0], epsilon = 1e-9);
        assert_abs_diff_eq!(a[1], b[1], epsilon = 1e-9);
        assert_abs_diff_eq!(nl.lipschitz().increment, libm::expm1(0.03), epsilon = 1e-15);
    }
}
