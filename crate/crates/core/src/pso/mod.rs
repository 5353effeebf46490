//! Deterministic particle swarm (Trelea variant).
//!
//! Velocity update `v ← ω·v + η·(½(pbest + gbest) − x)`, position update
//! `x ← x + v` clamped to the search box. The only randomness is the seeded
//! initial swarm.

mod fitness;

pub use fitness::{
    baseline, synthesize_controller, Baseline, CandidateKind, ControllerFitness, ControllerSynthesis, FitnessSpec,
    FitnessTerms, NeuralSettings, SynthesisProblem,
};

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// The two `(ω, η)` pairs drawn with equal probability per run.
pub const TRELEA_PAIRS: [(f64, f64); 2] = [(0.7, 1.6), (0.33, 2.35)];

/// gbest changes smaller than this count as "unchanged" for stall detection.
pub const STALL_TOLERANCE: f64 = 1e-12;

/// Swarm initializations tried after the first before giving up.
pub const MAX_RESEEDS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct PsoParams {
    pub omega: f64,
    pub eta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub num_particles: usize,
    pub max_iter: usize,
    pub stall_window: usize,
    pub bounds_lower: Vec<f64>,
    pub bounds_upper: Vec<f64>,
    pub seed: u64,
}

/// Picks one of [`TRELEA_PAIRS`] from the run seed.
pub fn trelea_pair(seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5851_F42D_4C95_7F2D);
    TRELEA_PAIRS[usize::from(rng.gen_bool(0.5))]
}

impl PsoParams {
    /// Parameters with the `(ω, η)` pair chosen by [`trelea_pair`] and the
    /// default iteration limits (15000 iterations, stall window 100).
    pub fn trelea(seed: u64, num_particles: usize, bounds_lower: Vec<f64>, bounds_upper: Vec<f64>) -> Self {
        let (omega, eta) = trelea_pair(seed);
        PsoParams {
            omega,
            eta,
            gamma: 1.0,
            delta: 1.0,
            num_particles,
            max_iter: 15_000,
            stall_window: 100,
            bounds_lower,
            bounds_upper,
            seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds_lower.len()
    }

    fn validate_common(&self) -> Result<()> {
        if self.max_iter < 1 {
            return Err(Error::invalid("max_iter", "must be at least 1"));
        }
        if self.stall_window < 1 {
            return Err(Error::invalid("stall_window", "must be at least 1"));
        }
        if self.bounds_lower.is_empty() || self.bounds_lower.len() != self.bounds_upper.len() {
            return Err(Error::dim(format!(
                "bounds have {} and {} entries",
                self.bounds_lower.len(),
                self.bounds_upper.len()
            )));
        }
        for (i, (l, u)) in self.bounds_lower.iter().zip(&self.bounds_upper).enumerate() {
            if !(l < u) || !l.is_finite() || !u.is_finite() {
                return Err(Error::invalid(
                    "bounds",
                    format!("component {i}: need finite lower < upper"),
                ));
            }
        }
        for (name, v) in [
            ("omega", self.omega),
            ("eta", self.eta),
            ("gamma", self.gamma),
            ("delta", self.delta),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_particles < 2 {
            return Err(Error::invalid("num_particles", "need at least 2 particles"));
        }
        self.validate_common()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub pbest: Vec<f64>,
    pub pbest_fitness: f64,
}

/// `ω·v + η·(½(pbest + gbest) − x)`.
pub fn update_velocity(p: &Particle, gbest: &[f64], params: &PsoParams) -> Vec<f64> {
    p.velocity
        .iter()
        .zip(&p.position)
        .zip(p.pbest.iter().zip(gbest))
        .map(|((v, x), (pb, gb))| params.omega * v + params.eta * (0.5 * (pb + gb) - x))
        .collect()
}

/// `γ·x + δ·v′` clamped into the bounds; returns the new position and the
/// velocity with clamped components zeroed.
pub fn update_position(p: &Particle, new_velocity: &[f64], params: &PsoParams) -> (Vec<f64>, Vec<f64>) {
    let mut x = Vec::with_capacity(new_velocity.len());
    let mut v = new_velocity.to_vec();
    for i in 0..new_velocity.len() {
        let raw = params.gamma * p.position[i] + params.delta * new_velocity[i];
        let (lo, hi) = (params.bounds_lower[i], params.bounds_upper[i]);
        if raw < lo {
            x.push(lo);
            v[i] = 0.0;
        } else if raw > hi {
            x.push(hi);
            v[i] = 0.0;
        } else {
            x.push(raw);
        }
    }
    (x, v)
}

/// Per-evaluation terms kept in the iteration history.
pub trait HistoryTerms {
    fn cost_term(&self) -> f64 {
        f64::NAN
    }
    fn roa_term(&self) -> f64 {
        f64::NAN
    }
}

impl HistoryTerms for () {}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<D> {
    /// `+∞` marks an infeasible position.
    pub fitness: f64,
    pub detail: D,
}

/// Function minimized by the swarm.
pub trait Objective {
    type Detail: Clone + HistoryTerms;

    fn dim(&self) -> usize;

    fn evaluate(&self, x: &[f64]) -> Evaluation<Self::Detail>;

    /// Evaluates a whole swarm; results are in input order.
    fn evaluate_batch(&self, xs: &[Vec<f64>]) -> Vec<Evaluation<Self::Detail>> {
        xs.iter().map(|x| self.evaluate(x)).collect()
    }

    /// Called whenever gbest improves, before the next batch is evaluated.
    fn observe_gbest(&mut self, _x: &[f64], _detail: &Self::Detail) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    MaxIter,
    Stall,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::MaxIter => "max_iter",
            Termination::Stall => "stall",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub gbest_fitness: f64,
    pub cost_term: f64,
    pub roa_term: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult<D> {
    pub gbest: Vec<f64>,
    pub gbest_fitness: f64,
    pub gbest_detail: D,
    /// Entry 0 is the initial swarm, then one entry per iteration.
    pub history: Vec<IterationRecord>,
    pub iterations_run: usize,
    pub terminated_by: Termination,
    pub omega: f64,
    pub eta: f64,
    /// Re-sampled initial swarms before a feasible one was found.
    pub reseeds: usize,
}

/// Runs the swarm from a seeded uniform initialization.
///
/// Initial positions are uniform in the bounds and velocities uniform in
/// `±(upper − lower)/2`. A swarm with no finite fitness is re-sampled up to
/// [`MAX_RESEEDS`] times.
pub fn synthesize<O: Objective>(objective: &mut O, params: &PsoParams) -> Result<SynthesisResult<O::Detail>> {
    params.validate()?;
    check_dim(objective, params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let d = params.dim();
    for attempt in 0..=MAX_RESEEDS {
        let mut positions = Vec::with_capacity(params.num_particles);
        let mut velocities = Vec::with_capacity(params.num_particles);
        for _ in 0..params.num_particles {
            let mut x = vec![0.0; d];
            let mut v = vec![0.0; d];
            for i in 0..d {
                let (lo, hi) = (params.bounds_lower[i], params.bounds_upper[i]);
                let half = 0.5 * (hi - lo);
                x[i] = rng.gen_range(lo..=hi);
                v[i] = rng.gen_range(-half..=half);
            }
            positions.push(x);
            velocities.push(v);
        }
        let evals = objective.evaluate_batch(&positions);
        if evals.iter().any(|e| e.fitness.is_finite()) {
            let mut result = run(objective, params, positions, velocities, evals);
            result.reseeds = attempt;
            return Ok(result);
        }
    }
    Err(Error::NoStableSeed {
        attempts: MAX_RESEEDS + 1,
    })
}

/// Runs the swarm from explicit initial positions and velocities. Any swarm
/// size of at least one particle is accepted.
pub fn synthesize_from<O: Objective>(
    objective: &mut O,
    params: &PsoParams,
    positions: Vec<Vec<f64>>,
    velocities: Vec<Vec<f64>>,
) -> Result<SynthesisResult<O::Detail>> {
    params.validate_common()?;
    check_dim(objective, params)?;
    if positions.is_empty() || positions.len() != velocities.len() {
        return Err(Error::dim("need matching, non-empty position and velocity lists"));
    }
    let d = params.dim();
    if positions.iter().chain(&velocities).any(|v| v.len() != d) {
        return Err(Error::dim(format!("every particle vector must have {d} entries")));
    }
    let evals = objective.evaluate_batch(&positions);
    if !evals.iter().any(|e| e.fitness.is_finite()) {
        return Err(Error::NoStableSeed { attempts: 1 });
    }
    Ok(run(objective, params, positions, velocities, evals))
}

fn check_dim<O: Objective>(objective: &O, params: &PsoParams) -> Result<()> {
    if objective.dim() != params.dim() {
        return Err(Error::dim(format!(
            "objective has {} variables, bounds have {}",
            objective.dim(),
            params.dim()
        )));
    }
    Ok(())
}

fn record<D: HistoryTerms>(iteration: usize, fitness: f64, detail: &D) -> IterationRecord {
    IterationRecord {
        iteration,
        gbest_fitness: fitness,
        cost_term: detail.cost_term(),
        roa_term: detail.roa_term(),
    }
}

/// First index with the smallest fitness.
fn argmin(fitness: impl Iterator<Item = f64>) -> Option<(usize, f64)> {
    fitness
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, f)| match best {
            Some((_, bf)) if !(f < bf) => best,
            _ if f.is_nan() => best,
            _ => Some((i, f)),
        })
}

fn run<O: Objective>(
    objective: &mut O,
    params: &PsoParams,
    positions: Vec<Vec<f64>>,
    velocities: Vec<Vec<f64>>,
    evals: Vec<Evaluation<O::Detail>>,
) -> SynthesisResult<O::Detail> {
    let mut particles: Vec<Particle> = positions
        .into_iter()
        .zip(velocities)
        .zip(&evals)
        .map(|((x, v), e)| Particle {
            pbest: x.clone(),
            position: x,
            velocity: v,
            pbest_fitness: e.fitness,
        })
        .collect();
    let mut pbest_detail: Vec<O::Detail> = evals.into_iter().map(|e| e.detail).collect();

    let (gi, gf) = argmin(particles.iter().map(|p| p.pbest_fitness)).expect("a finite fitness exists");
    let mut gbest = particles[gi].pbest.clone();
    let mut gbest_fitness = gf;
    let mut gbest_detail = pbest_detail[gi].clone();
    objective.observe_gbest(&gbest, &gbest_detail);

    let mut history = vec![record(0, gbest_fitness, &gbest_detail)];
    let mut stall_ref = gbest_fitness;
    let mut stall_count = 0usize;
    let mut terminated_by = Termination::MaxIter;
    let mut iterations_run = 0;

    for iter in 1..=params.max_iter {
        let mut next_positions = Vec::with_capacity(particles.len());
        for p in particles.iter_mut() {
            let v = update_velocity(p, &gbest, params);
            let (x, v) = update_position(p, &v, params);
            p.velocity = v;
            next_positions.push(x);
        }
        let evals = objective.evaluate_batch(&next_positions);
        for ((p, x), (e, detail)) in particles
            .iter_mut()
            .zip(next_positions)
            .zip(evals.into_iter().zip(pbest_detail.iter_mut()))
        {
            if e.fitness < p.pbest_fitness {
                p.pbest = x.clone();
                p.pbest_fitness = e.fitness;
                *detail = e.detail;
            }
            p.position = x;
        }
        if let Some((i, f)) = argmin(particles.iter().map(|p| p.pbest_fitness)) {
            if f < gbest_fitness {
                gbest = particles[i].pbest.clone();
                gbest_fitness = f;
                gbest_detail = pbest_detail[i].clone();
                objective.observe_gbest(&gbest, &gbest_detail);
            }
        }
        history.push(record(iter, gbest_fitness, &gbest_detail));
        iterations_run = iter;

        if (gbest_fitness - stall_ref).abs() <= STALL_TOLERANCE {
            stall_count += 1;
        } else {
            stall_ref = gbest_fitness;
            stall_count = 0;
        }
        if stall_count >= params.stall_window {
            terminated_by = Termination::Stall;
            break;
        }
    }

    SynthesisResult {
        gbest,
        gbest_fitness,
        gbest_detail,
        history,
        iterations_run,
        terminated_by,
        omega: params.omega,
        eta: params.eta,
        reseeds: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    struct Sphere;
    impl Objective for Sphere {
        type Detail = ();
        fn dim(&self) -> usize {
            2
        }
        fn evaluate(&self, x: &[f64]) -> Evaluation<()> {
            Evaluation {
                fitness: x.iter().map(|v| v * v).sum(),
                detail: (),
            }
        }
    }

    fn params(omega: f64, eta: f64) -> PsoParams {
        PsoParams {
            omega,
            eta,
            gamma: 1.0,
            delta: 1.0,
            num_particles: 30,
            max_iter: 1000,
            stall_window: 100,
            bounds_lower: vec![-5.0, -5.0],
            bounds_upper: vec![5.0, 5.0],
            seed: 1,
        }
    }

    fn particle(x: f64, v: f64, pbest: f64) -> Particle {
        Particle {
            position: vec![x],
            velocity: vec![v],
            pbest: vec![pbest],
            pbest_fitness: 0.0,
        }
    }

    fn bounded(lo: f64, hi: f64) -> PsoParams {
        PsoParams {
            bounds_lower: vec![lo],
            bounds_upper: vec![hi],
            ..params(0.5, 1.0)
        }
    }

    #[test]
    fn velocity_examples() {
        let p = params(0.5, 1.0);
        assert_eq!(update_velocity(&particle(2.0, 0.0, 0.0), &[0.0], &p), vec![-2.0]);
        assert_eq!(update_velocity(&particle(1.0, 0.3, 1.0), &[1.0], &p), vec![0.15]);
        let decay = params(0.7, 0.0);
        let mut q = particle(1.0, 2.0, 1.0);
        for _ in 0..20 {
            q.velocity = update_velocity(&q, &[1.0], &decay);
        }
        assert_abs_diff_eq!(q.velocity[0], libm::pow(0.7, 20.0) * 2.0, epsilon = 1e-12);
    }

    #[test]
    fn position_examples() {
        let p = bounded(0.0, 2.0);
        assert_eq!(
            update_position(&particle(1.0, 0.0, 0.0), &[0.5], &p),
            (vec![1.5], vec![0.5])
        );
        assert_eq!(
            update_position(&particle(1.9, 0.0, 0.0), &[0.5], &p),
            (vec![2.0], vec![0.0])
        );
        assert_eq!(
            update_position(&particle(1.2, 0.0, 0.0), &[0.0], &p),
            (vec![1.2], vec![0.0])
        );
        assert_eq!(
            update_position(&particle(0.1, 0.0, 0.0), &[-0.5], &p),
            (vec![0.0], vec![0.0])
        );
    }

    #[test]
    fn sphere_converges() {
        let res = synthesize(&mut Sphere, &params(0.7, 1.6)).unwrap();
        assert!(linalg_norm(&res.gbest) < 1e-3, "{:?}", res.gbest);
        assert!(res.history.windows(2).all(|w| w[1].gbest_fitness <= w[0].gbest_fitness));
        let res2 = synthesize(&mut Sphere, &params(0.33, 2.35)).unwrap();
        assert!(linalg_norm(&res2.gbest) < 1e-3);
    }

    fn linalg_norm(x: &[f64]) -> f64 {
        crate::linalg::euclid(x)
    }

    #[test]
    fn single_particle_at_optimum_stalls() {
        let mut p = params(0.7, 1.6);
        p.stall_window = 25;
        let res = synthesize_from(&mut Sphere, &p, vec![vec![0.0, 0.0]], vec![vec![0.0, 0.0]]).unwrap();
        assert_eq!(res.terminated_by, Termination::Stall);
        assert_eq!(res.iterations_run, 25);
        assert_eq!(res.gbest, vec![0.0, 0.0]);
    }

    #[test]
    fn deterministic_for_equal_seeds() {
        let a = synthesize(&mut Sphere, &params(0.7, 1.6)).unwrap();
        let b = synthesize(&mut Sphere, &params(0.7, 1.6)).unwrap();
        assert_eq!(a.gbest, b.gbest);
        let bits = |r: &SynthesisResult<()>| r.history.iter().map(|h| h.gbest_fitness.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn infeasible_everywhere_errors() {
        struct Wall;
        impl Objective for Wall {
            type Detail = ();
            fn dim(&self) -> usize {
                2
            }
            fn evaluate(&self, _x: &[f64]) -> Evaluation<()> {
                Evaluation {
                    fitness: f64::INFINITY,
                    detail: (),
                }
            }
        }
        assert!(matches!(
            synthesize(&mut Wall, &params(0.7, 1.6)),
            Err(Error::NoStableSeed { attempts: 11 })
        ));
    }

    #[test]
    fn trelea_pair_uses_both_options() {
        let picks: Vec<_> = (0..64).map(trelea_pair).collect();
        assert!(picks.iter().all(|p| TRELEA_PAIRS.contains(p)));
        assert!(picks.contains(&TRELEA_PAIRS[0]) && picks.contains(&TRELEA_PAIRS[1]));
        assert_eq!(trelea_pair(17), trelea_pair(17));
    }

    #[test]
    fn params_validation() {
        let mut p = params(0.7, 1.6);
        p.num_particles = 1;
        assert!(p.validate().is_err());
        let mut p = params(0.7, 1.6);
        p.bounds_upper[0] = -6.0;
        assert!(p.validate().is_err());
    }
}
