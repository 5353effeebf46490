//! Benchmark plants with their default parameters, cost weights, gain search
//! boxes and certification domains.
//!
//! Every physical coefficient below is a documented default; see the
//! parameter ledger in the repository README.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::certificate::{build_grid, CertifyOptions, ExemptionRadius};
use crate::dynamics::{discretize, linearize, NonlinearSystem, VectorField};
use crate::linalg::Matrix;
use crate::lqr::CostWeights;
use crate::pso::SynthesisProblem;
use crate::{Error, Result};

pub const GRAVITY: f64 = 9.81;

/// Default grid resolution per dimension for the planar benchmarks.
pub const PLANAR_GRID_POINTS: usize = 250;
/// Default grid resolution per dimension for the three-state benchmark.
pub const SPATIAL_GRID_POINTS: usize = 61;

/// Exemption radius as a multiple of the covering radius at the default grid.
pub const EXEMPTION_COVERING_MULTIPLE: f64 = 10.0;

pub const NAMES: [&str; 4] = ["pendulum_a", "pendulum_b", "vehicle_steering", "aircraft_pitch"];

#[derive(Debug, Clone)]
pub struct BenchmarkSpec {
    pub name: String,
    pub plant: NonlinearSystem,
    pub cost: CostWeights,
    pub gain_lower: Vec<f64>,
    pub gain_upper: Vec<f64>,
    /// Certification box in deviation coordinates.
    pub roa_lower: Vec<f64>,
    pub roa_upper: Vec<f64>,
    pub default_grid_points: Vec<usize>,
    /// Fixed in state units so that certified sizes are comparable across
    /// grid resolutions.
    pub exemption: ExemptionRadius,
    /// Physical parameters, for reporting.
    pub parameters: Vec<(&'static str, f64)>,
    pub state_names: Vec<&'static str>,
}

impl BenchmarkSpec {
    pub fn state_dim(&self) -> usize {
        self.plant.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.plant.input_dim()
    }

    /// Linearized, discretized plant with a certification grid of
    /// `points_per_dim` (or the default).
    pub fn problem(&self, tau: f64, points_per_dim: Option<&[usize]>) -> Result<SynthesisProblem> {
        let dsys = discretize(&linearize(&self.plant)?, tau)?;
        let points = points_per_dim.unwrap_or(&self.default_grid_points);
        let grid = build_grid(&self.roa_lower, &self.roa_upper, points)?;
        Ok(SynthesisProblem {
            dsys,
            weights: self.cost.clone(),
            grid,
            certify: CertifyOptions {
                exemption: self.exemption,
            },
        })
    }
}

fn exemption_at_default(lower: &[f64], upper: &[f64], points: &[usize]) -> Result<ExemptionRadius> {
    let grid = build_grid(lower, upper, points)?;
    Ok(ExemptionRadius::Absolute(EXEMPTION_COVERING_MULTIPLE * grid.mu()))
}

/// `φ̈ = (g/ℓ) sin φ − (μ/I) φ̇ + u/I` with point-mass inertia `I = mℓ²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pendulum {
    pub mass: f64,
    pub length: f64,
    pub friction: f64,
}

impl Pendulum {
    pub fn inertia(&self) -> f64 {
        self.mass * self.length * self.length
    }
}

impl VectorField for Pendulum {
    fn eval(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        let inertia = self.inertia();
        dx[0] = x[1];
        dx[1] = GRAVITY / self.length * libm::sin(x[0]) - self.friction / inertia * x[1] + u[0] / inertia;
    }

    fn jacobian(&self, x: &[f64], _u: &[f64]) -> Option<(Matrix, Matrix)> {
        let inertia = self.inertia();
        Some((
            Matrix::from_row_slice(
                2,
                2,
                &[
                    0.0,
                    1.0,
                    GRAVITY / self.length * libm::cos(x[0]),
                    -self.friction / inertia,
                ],
            ),
            Matrix::from_row_slice(2, 1, &[0.0, 1.0 / inertia]),
        ))
    }
}

fn pendulum_spec(
    name: &str,
    mass: f64,
    length: f64,
    friction: f64,
    input_limit: f64,
    gain_lower: Vec<f64>,
    gain_upper: Vec<f64>,
) -> Result<BenchmarkSpec> {
    if !(mass > 0.0) || !(length > 0.0) {
        return Err(Error::invalid("pendulum", "mass and length must be positive"));
    }
    if !(friction >= 0.0) {
        return Err(Error::invalid("pendulum", "friction must be non-negative"));
    }
    let field = Pendulum { mass, length, friction };
    let plant = NonlinearSystem::new(Arc::new(field), vec![0.0, 0.0], vec![0.0], Some(input_limit))?;
    let roa_lower = vec![-2.0 * PI / 3.0, -8.0];
    let roa_upper = vec![2.0 * PI / 3.0, 8.0];
    let default_grid_points = vec![PLANAR_GRID_POINTS; 2];
    Ok(BenchmarkSpec {
        name: name.into(),
        plant,
        cost: CostWeights::new(
            Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![10.0, 1.0])),
            Matrix::identity(1, 1),
        )?,
        gain_lower,
        gain_upper,
        exemption: exemption_at_default(&roa_lower, &roa_upper, &default_grid_points)?,
        roa_lower,
        roa_upper,
        default_grid_points,
        parameters: vec![
            ("mass_kg", mass),
            ("length_m", length),
            ("friction", friction),
            ("gravity", GRAVITY),
            ("input_limit", input_limit),
        ],
        state_names: vec!["phi", "phi_dot"],
    })
}

/// Pendulum with pendulum A's gain box and input limit and the given
/// physical parameters.
pub fn pendulum(mass: f64, length: f64, friction: f64) -> Result<BenchmarkSpec> {
    pendulum_spec(
        "pendulum",
        mass,
        length,
        friction,
        1.0,
        vec![-10.0, -5.0],
        vec![10.0, 5.0],
    )
}

/// Light, short pendulum: m = 0.15 kg, ℓ = 0.5 m, μ = 0.05, |u| ≤ 1.
pub fn pendulum_a() -> BenchmarkSpec {
    pendulum_spec("pendulum_a", 0.15, 0.5, 0.05, 1.0, vec![-10.0, -5.0], vec![10.0, 5.0]).expect("valid defaults")
}

/// Heavy, long pendulum: m = 0.5 kg, ℓ = 1 m, μ = 0.05, |u| ≤ 2.5.
pub fn pendulum_b() -> BenchmarkSpec {
    pendulum_spec("pendulum_b", 0.5, 1.0, 0.05, 2.5, vec![5.0, -2.0], vec![20.0, 12.0]).expect("valid defaults")
}

/// Kinematic bicycle, lateral offset `y` and heading `θ`, front-wheel angle
/// `δ`: `ẏ = v sin(α(δ) + θ)`, `θ̇ = (v/b) tan δ`, `α(δ) = atan((a/b) tan δ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleSteering {
    pub speed: f64,
    pub wheelbase: f64,
    /// Distance from the rear axle to the center of gravity.
    pub cg_offset: f64,
}

impl VehicleSteering {
    fn slip(&self, delta: f64) -> f64 {
        libm::atan(self.cg_offset / self.wheelbase * libm::tan(delta))
    }
}

impl VectorField for VehicleSteering {
    fn eval(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        dx[0] = self.speed * libm::sin(self.slip(u[0]) + x[1]);
        dx[1] = self.speed / self.wheelbase * libm::tan(u[0]);
    }

    fn jacobian(&self, x: &[f64], u: &[f64]) -> Option<(Matrix, Matrix)> {
        let ratio = self.cg_offset / self.wheelbase;
        let t = libm::tan(u[0]);
        let sec2 = 1.0 + t * t;
        let d_slip = ratio * sec2 / (1.0 + ratio * ratio * t * t);
        let c = libm::cos(self.slip(u[0]) + x[1]);
        Some((
            Matrix::from_row_slice(2, 2, &[0.0, self.speed * c, 0.0, 0.0]),
            Matrix::from_row_slice(2, 1, &[self.speed * c * d_slip, self.speed / self.wheelbase * sec2]),
        ))
    }
}

/// Straight-line driving at v = 5 m/s, wheelbase 2 m, center of gravity 1 m
/// ahead of the rear axle, |δ| ≤ 0.5 rad.
pub fn vehicle_steering() -> BenchmarkSpec {
    let field = VehicleSteering {
        speed: 5.0,
        wheelbase: 2.0,
        cg_offset: 1.0,
    };
    let input_limit = 0.5;
    let plant =
        NonlinearSystem::new(Arc::new(field), vec![0.0, 0.0], vec![0.0], Some(input_limit)).expect("valid defaults");
    let roa_lower = vec![-3.0, -1.0];
    let roa_upper = vec![3.0, 1.0];
    let default_grid_points = vec![PLANAR_GRID_POINTS; 2];
    BenchmarkSpec {
        name: "vehicle_steering".into(),
        plant,
        cost: CostWeights::identity(2, 1),
        gain_lower: vec![0.0, 0.0],
        gain_upper: vec![17.0, 11.0],
        exemption: exemption_at_default(&roa_lower, &roa_upper, &default_grid_points).expect("valid defaults"),
        roa_lower,
        roa_upper,
        default_grid_points,
        parameters: vec![
            ("speed_m_s", field.speed),
            ("wheelbase_m", field.wheelbase),
            ("cg_offset_m", field.cg_offset),
            ("input_limit", input_limit),
        ],
        state_names: vec!["y", "theta"],
    }
}

/// Longitudinal pitch dynamics at steady cruise, linear about trim:
/// states (angle of attack, pitch rate, pitch angle), elevator input.
#[derive(Debug, Clone, PartialEq)]
pub struct AircraftPitch {
    a: Matrix,
    b: Matrix,
}

impl AircraftPitch {
    /// Textbook cruise coefficients.
    pub fn cruise() -> Self {
        AircraftPitch {
            a: Matrix::from_row_slice(3, 3, &[-0.313, 56.7, 0.0, -0.0139, -0.426, 0.0, 0.0, 56.7, 0.0]),
            b: Matrix::from_row_slice(3, 1, &[0.232, 0.0203, 0.0]),
        }
    }
}

impl VectorField for AircraftPitch {
    fn eval(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        for i in 0..3 {
            dx[i] = (0..3).map(|j| self.a[(i, j)] * x[j]).sum::<f64>() + self.b[(i, 0)] * u[0];
        }
    }

    fn jacobian(&self, _x: &[f64], _u: &[f64]) -> Option<(Matrix, Matrix)> {
        Some((self.a.clone(), self.b.clone()))
    }
}

pub fn aircraft_pitch() -> BenchmarkSpec {
    let field = AircraftPitch::cruise();
    let parameters = vec![
        ("alpha_alpha", field.a[(0, 0)]),
        ("alpha_q", field.a[(0, 1)]),
        ("q_alpha", field.a[(1, 0)]),
        ("q_q", field.a[(1, 1)]),
        ("theta_q", field.a[(2, 1)]),
        ("alpha_elevator", field.b[(0, 0)]),
        ("q_elevator", field.b[(1, 0)]),
    ];
    let plant = NonlinearSystem::new(Arc::new(field), vec![0.0; 3], vec![0.0], None).expect("valid defaults");
    let roa_lower = vec![-0.5; 3];
    let roa_upper = vec![0.5; 3];
    let default_grid_points = vec![SPATIAL_GRID_POINTS; 3];
    BenchmarkSpec {
        name: "aircraft_pitch".into(),
        plant,
        cost: CostWeights::identity(3, 1),
        gain_lower: vec![-1.0, 10.0, 0.0],
        gain_upper: vec![5.0, 100.0, 7.0],
        exemption: exemption_at_default(&roa_lower, &roa_upper, &default_grid_points).expect("valid defaults"),
        roa_lower,
        roa_upper,
        default_grid_points,
        parameters,
        state_names: vec!["alpha", "q", "theta"],
    }
}

pub fn by_name(name: &str) -> Result<BenchmarkSpec> {
    match name {
        "pendulum_a" => Ok(pendulum_a()),
        "pendulum_b" => Ok(pendulum_b()),
        "vehicle_steering" => Ok(vehicle_steering()),
        "aircraft_pitch" => Ok(aircraft_pitch()),
        other => Err(Error::invalid(
            "benchmark",
            format!("unknown benchmark {other:?}, expected one of {NAMES:?}"),
        )),
    }
}
