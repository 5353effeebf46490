//! Experiment protocols over the benchmark plants: single synthesis, the
//! particle-count comparison, the mass and grid sweeps, and closed-loop
//! simulation.

use std::time::Instant;

use rayon::prelude::*;
use roaforge_core::bench::{self, BenchmarkSpec};
use roaforge_core::certificate::{certify_roa, ExemptionRadius, LinearStep, QuadraticCandidate, RoaEstimate};
use roaforge_core::dynamics::{simulate, Controller, Trajectory};
use roaforge_core::linalg::spectral_radius;
use roaforge_core::lqr::lqr_cost_metric;
use roaforge_core::nn::{train, LyapunovNet, NetCandidate};
use roaforge_core::pso::{
    baseline, synthesize, Baseline, CandidateKind, ControllerFitness, ControllerSynthesis, FitnessSpec, PsoParams,
    SynthesisProblem, TRELEA_PAIRS,
};
use roaforge_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::parallel::ParallelObjective;

/// Which `(ω, η)` pair the swarm uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PairChoice {
    /// Drawn from the run seed.
    #[default]
    Seeded,
    /// `ω = 0.7, η = 1.6`.
    First,
    /// `ω = 0.33, η = 2.35`.
    Second,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmSettings {
    pub particles: usize,
    pub max_iter: usize,
    pub stall_window: usize,
    pub pair: PairChoice,
}

impl SwarmSettings {
    pub fn params(&self, spec: &BenchmarkSpec, seed: u64) -> PsoParams {
        let mut params = PsoParams::trelea(seed, self.particles, spec.gain_lower.clone(), spec.gain_upper.clone());
        params.max_iter = self.max_iter;
        params.stall_window = self.stall_window;
        match self.pair {
            PairChoice::Seeded => {}
            PairChoice::First => (params.omega, params.eta) = TRELEA_PAIRS[0],
            PairChoice::Second => (params.omega, params.eta) = TRELEA_PAIRS[1],
        }
        params
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessWeights {
    pub w1: f64,
    pub w2: f64,
}

impl FitnessWeights {
    /// `K_O`: both terms.
    pub const BALANCED: FitnessWeights = FitnessWeights { w1: 1.0, w2: 1.0 };
    /// `K_max`: ROA term only.
    pub const ROA_ONLY: FitnessWeights = FitnessWeights { w1: 0.0, w2: 1.0 };
    /// Cost term only; recovers the LQR gain.
    pub const COST_ONLY: FitnessWeights = FitnessWeights { w1: 1.0, w2: 0.0 };
}

/// Cost and certified size of one gain.
#[derive(Debug, Clone)]
pub struct Assessment {
    pub cost: f64,
    pub estimate: RoaEstimate,
    pub net: Option<LyapunovNet>,
}

/// A benchmark prepared for synthesis: discretized plant, certification
/// grid, candidate kind and the LQR baseline.
#[derive(Debug, Clone)]
pub struct Study {
    pub spec: BenchmarkSpec,
    pub problem: SynthesisProblem,
    pub kind: CandidateKind,
    pub baseline: Baseline,
}

impl Study {
    pub fn new(
        spec: BenchmarkSpec,
        tau: f64,
        grid_points: Option<&[usize]>,
        exemption: Option<f64>,
        kind: CandidateKind,
    ) -> Result<Self> {
        let mut problem = spec.problem(tau, grid_points)?;
        if let Some(r) = exemption {
            problem.certify.exemption = ExemptionRadius::Absolute(r);
        }
        let baseline = baseline(&problem, &kind)?;
        Ok(Study {
            spec,
            problem,
            kind,
            baseline,
        })
    }

    pub fn fitness_spec(&self, weights: FitnessWeights) -> Result<FitnessSpec> {
        if weights.w2 > 0.0 && self.baseline.estimate.size_cells == 0 {
            return Err(Error::invalid(
                "baseline",
                "the LQR gain certifies no cells; the ROA ratio is undefined",
            ));
        }
        Ok(FitnessSpec {
            w1: weights.w1,
            w2: weights.w2,
            baseline_cost: self.baseline.cost,
            baseline_roa: (self.baseline.estimate.size_cells as f64).max(1.0),
            candidate_kind: self.kind.clone(),
        })
    }

    /// One swarm run; batches are evaluated on the rayon pool.
    pub fn synthesize(&self, weights: FitnessWeights, swarm: &SwarmSettings, seed: u64) -> Result<ControllerSynthesis> {
        let fitness = ControllerFitness::new(&self.problem, self.fitness_spec(weights)?)?
            .with_warm_start(self.baseline.net.clone());
        let mut objective = ParallelObjective(fitness);
        let result = synthesize(&mut objective, &swarm.params(&self.spec, seed))?;
        Ok(ControllerSynthesis {
            gain: self.problem.gain_from_flat(&result.gbest)?,
            result,
        })
    }

    /// Cost and certified ROA of an arbitrary gain with this study's candidate.
    pub fn assess(&self, gain: &Controller) -> Result<Assessment> {
        let report = lqr_cost_metric(&self.problem.dsys, gain, &self.problem.weights)?;
        if !report.stable {
            return Err(unstable(&self.problem, gain));
        }
        let (estimate, net) = match &self.kind {
            CandidateKind::Quadratic => (self.assess_quadratic(gain)?, None),
            CandidateKind::Neural(settings) => {
                let step = LinearStep::closed_loop(&self.problem.dsys, gain)?;
                let net = LyapunovNet::init(
                    &settings.layer_dims(self.problem.dsys.state_dim()),
                    settings.epsilon,
                    settings.activation,
                    settings.init_seed,
                )?;
                let out = train(net, &step, &self.problem.grid, &settings.train, &self.problem.certify)?;
                (out.estimate, Some(out.net))
            }
        };
        Ok(Assessment {
            cost: report.metric,
            estimate,
            net,
        })
    }

    /// Certified ROA of `gain` with an already trained net, or with the
    /// quadratic candidate when `net` is `None`.
    pub fn estimate_with(&self, gain: &Controller, net: Option<&LyapunovNet>) -> Result<RoaEstimate> {
        let Some(net) = net else {
            return self.assess_quadratic(gain);
        };
        let step = LinearStep::closed_loop(&self.problem.dsys, gain)?;
        let cand = NetCandidate::new(net, &step)?;
        certify_roa(&cand, &step, &self.problem.grid, &self.problem.certify)
    }

    fn assess_quadratic(&self, gain: &Controller) -> Result<RoaEstimate> {
        let report = lqr_cost_metric(&self.problem.dsys, gain, &self.problem.weights)?;
        if !report.stable {
            return Err(unstable(&self.problem, gain));
        }
        let step = LinearStep::closed_loop(&self.problem.dsys, gain)?;
        let cand = QuadraticCandidate::for_step(report.p, &step)?;
        certify_roa(&cand, &step, &self.problem.grid, &self.problem.certify)
    }
}

fn unstable(problem: &SynthesisProblem, gain: &Controller) -> Error {
    match problem.dsys.closed_loop(gain).and_then(|a| spectral_radius(&a)) {
        Ok(spectral_radius) => Error::UnstableClosedLoop { spectral_radius },
        Err(e) => e,
    }
}

/// Percentage change of `value` over `reference`.
pub fn pct_increase(value: f64, reference: f64) -> f64 {
    100.0 * (value / reference - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControllerLabel {
    #[serde(rename = "K_LQR")]
    Lqr,
    #[serde(rename = "K_O")]
    Balanced,
    #[serde(rename = "K_max")]
    RoaOnly,
}

impl ControllerLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ControllerLabel::Lqr => "K_LQR",
            ControllerLabel::Balanced => "K_O",
            ControllerLabel::RoaOnly => "K_max",
        }
    }
}

/// One synthesized gain inside the comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthesisRun {
    pub particles: usize,
    pub controller: ControllerLabel,
    pub seed: u64,
    pub gain: Vec<f64>,
    pub fitness: f64,
    pub cost: f64,
    pub roa_cells: usize,
    pub pct_cost_increase: f64,
    pub pct_roa_increase: f64,
    pub iterations: usize,
    pub terminated_by: &'static str,
    pub omega: f64,
    pub eta: f64,
}

/// One averaged comparison row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub particles: usize,
    pub controller: ControllerLabel,
    pub pct_cost_increase: f64,
    pub pct_roa_increase: f64,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub rows: Vec<CompareRow>,
    pub runs: Vec<SynthesisRun>,
}

/// Seed of sub-run `r`.
pub fn run_seed(seed: u64, r: usize) -> u64 {
    seed.wrapping_add(r as u64)
}

fn summarize(
    study: &Study,
    particles: usize,
    controller: ControllerLabel,
    seed: u64,
    synth: &ControllerSynthesis,
) -> SynthesisRun {
    let detail = &synth.result.gbest_detail;
    SynthesisRun {
        particles,
        controller,
        seed,
        gain: synth.gain.to_flat(),
        fitness: synth.result.gbest_fitness,
        cost: detail.cost,
        roa_cells: detail.roa_cells,
        pct_cost_increase: pct_increase(detail.cost, study.baseline.cost),
        pct_roa_increase: pct_increase(detail.roa_cells as f64, study.baseline.estimate.size_cells as f64),
        iterations: synth.result.iterations_run,
        terminated_by: synth.result.terminated_by.as_str(),
        omega: synth.result.omega,
        eta: synth.result.eta,
    }
}

/// For every swarm size, synthesizes `K_O` (with `balanced` weights) and
/// `K_max` over `run_count` seeds and averages the percentage changes
/// against `K_LQR`.
pub fn compare(
    study: &Study,
    particle_counts: &[usize],
    run_count: usize,
    swarm: &SwarmSettings,
    balanced: FitnessWeights,
    seed: u64,
) -> Result<Comparison> {
    let jobs: Vec<(usize, ControllerLabel, u64)> = particle_counts
        .iter()
        .flat_map(|&n| {
            (0..run_count).flat_map(move |r| {
                [ControllerLabel::Balanced, ControllerLabel::RoaOnly].map(|label| (n, label, run_seed(seed, r)))
            })
        })
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(n, label, s)| {
            let weights = match label {
                ControllerLabel::RoaOnly => FitnessWeights::ROA_ONLY,
                _ => balanced,
            };
            let settings = SwarmSettings {
                particles: n,
                ..swarm.clone()
            };
            let synth = study.synthesize(weights, &settings, s)?;
            Ok(summarize(study, n, label, s, &synth))
        })
        .collect::<Result<Vec<_>>>()?;

    let seeds: Vec<u64> = (0..run_count).map(|r| run_seed(seed, r)).collect();
    let mut rows = Vec::new();
    for &n in particle_counts {
        rows.push(CompareRow {
            particles: n,
            controller: ControllerLabel::Lqr,
            pct_cost_increase: 0.0,
            pct_roa_increase: 0.0,
            seeds: seeds.clone(),
        });
        for label in [ControllerLabel::Balanced, ControllerLabel::RoaOnly] {
            let sel: Vec<&SynthesisRun> = runs
                .iter()
                .filter(|r| r.particles == n && r.controller == label)
                .collect();
            let mean = |f: fn(&SynthesisRun) -> f64| sel.iter().map(|r| f(r)).sum::<f64>() / sel.len() as f64;
            rows.push(CompareRow {
                particles: n,
                controller: label,
                pct_cost_increase: mean(|r| r.pct_cost_increase),
                pct_roa_increase: mean(|r| r.pct_roa_increase),
                seeds: seeds.clone(),
            });
        }
    }
    Ok(Comparison { rows, runs })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassRun {
    pub seed: u64,
    pub gain: Vec<f64>,
    pub roa_cells: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassRow {
    pub mass_kg: f64,
    /// Mean certified cells of `K_O` over the seeds.
    pub roa_cells: f64,
    pub lqr_roa_cells: usize,
    pub runs: Vec<MassRun>,
}

/// Pendulum with pendulum A's length, friction, input limit and gain box at
/// the given mass.
pub fn pendulum_with_mass(mass: f64) -> Result<BenchmarkSpec> {
    let a = bench::pendulum_a();
    let length = parameter(&a, "length_m");
    let friction = parameter(&a, "friction");
    bench::pendulum(mass, length, friction)
}

fn parameter(spec: &BenchmarkSpec, name: &str) -> f64 {
    spec.parameters
        .iter()
        .find(|(n, _)| *n == name)
        .map(|&(_, v)| v)
        .expect("pendulum parameter present")
}

/// Synthesizes `K_O` per mass and records its certified ROA.
#[allow(clippy::too_many_arguments)]
pub fn mass_sweep(
    masses: &[f64],
    tau: f64,
    grid_points: Option<&[usize]>,
    exemption: Option<f64>,
    kind: &CandidateKind,
    swarm: &SwarmSettings,
    balanced: FitnessWeights,
    run_count: usize,
    seed: u64,
) -> Result<Vec<MassRow>> {
    masses
        .iter()
        .map(|&mass| {
            let study = Study::new(pendulum_with_mass(mass)?, tau, grid_points, exemption, kind.clone())?;
            let runs = (0..run_count)
                .into_par_iter()
                .map(|r| {
                    let s = run_seed(seed, r);
                    let synth = study.synthesize(balanced, swarm, s)?;
                    let detail = &synth.result.gbest_detail;
                    Ok(MassRun {
                        seed: s,
                        gain: synth.gain.to_flat(),
                        roa_cells: detail.roa_cells,
                        cost: detail.cost,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let mean = runs.iter().map(|r| r.roa_cells as f64).sum::<f64>() / runs.len() as f64;
            Ok(MassRow {
                mass_kg: mass,
                roa_cells: mean,
                lqr_roa_cells: study.baseline.estimate.size_cells,
                runs,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub points_per_dim: usize,
    pub roa_cells: usize,
    pub size_fraction: f64,
    /// Certified area or volume in state units.
    pub roa_measure: f64,
    #[serde(skip)]
    pub seconds: f64,
}

/// Certifies `gain` on grids of increasing resolution, timing each
/// certification. Runs sequentially so timings are not contended.
pub fn grid_sweep(
    spec: &BenchmarkSpec,
    tau: f64,
    points: &[usize],
    exemption: Option<f64>,
    gain: &Controller,
) -> Result<Vec<GridRow>> {
    let n = spec.state_dim();
    points
        .iter()
        .map(|&p| {
            let mut problem = spec.problem(tau, Some(&vec![p; n]))?;
            if let Some(r) = exemption {
                problem.certify.exemption = ExemptionRadius::Absolute(r);
            }
            let report = lqr_cost_metric(&problem.dsys, gain, &problem.weights)?;
            if !report.stable {
                return Err(unstable(&problem, gain));
            }
            let start = Instant::now();
            let step = LinearStep::closed_loop(&problem.dsys, gain)?;
            let cand = QuadraticCandidate::for_step(report.p, &step)?;
            let est = certify_roa(&cand, &step, &problem.grid, &problem.certify)?;
            let seconds = start.elapsed().as_secs_f64();
            let cell_volume: f64 = problem.grid.widths().iter().product();
            Ok(GridRow {
                points_per_dim: p,
                roa_cells: est.size_cells,
                size_fraction: est.size_fraction,
                roa_measure: est.size_cells as f64 * cell_volume,
                seconds,
            })
        })
        .collect()
}

/// Absolute tolerance on the first state component for "stabilized".
pub const SETTLE_TOLERANCE: f64 = 1e-2;

/// Initial state with `offset` in the first component, at the equilibrium
/// elsewhere.
pub fn initial_state(spec: &BenchmarkSpec, offset: f64) -> Vec<f64> {
    let mut x0 = spec.plant.equilibrium_state().to_vec();
    x0[0] += offset;
    x0
}

pub fn simulate_from(
    spec: &BenchmarkSpec,
    gain: &Controller,
    offset: f64,
    tau: f64,
    duration: f64,
) -> Result<Trajectory> {
    let steps = (duration / tau).round() as usize;
    simulate(&spec.plant, gain, &initial_state(spec, offset), tau, steps)
}

/// Whether the run ends with the first state component within
/// [`SETTLE_TOLERANCE`] of equilibrium.
pub fn stabilizes(spec: &BenchmarkSpec, traj: &Trajectory) -> bool {
    !traj.diverged && (traj.final_state()[0] - spec.plant.equilibrium_state()[0]).abs() < SETTLE_TOLERANCE
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub lower: f64,
    pub upper: f64,
    pub samples: usize,
    /// Smallest scanned offset where `K_O` stabilizes and `K_LQR` does not.
    pub separating_offset: Option<f64>,
    pub lqr_limit: Option<f64>,
    pub balanced_limit: Option<f64>,
}

/// Scans `samples` evenly spaced offsets in `[lower, upper]`.
pub fn recovery_search(
    spec: &BenchmarkSpec,
    lqr: &Controller,
    balanced: &Controller,
    range: (f64, f64),
    samples: usize,
    tau: f64,
    duration: f64,
) -> Result<RecoveryReport> {
    let (lower, upper) = range;
    let offsets: Vec<f64> = (0..samples)
        .map(|i| {
            if samples == 1 {
                lower
            } else {
                lower + (upper - lower) * i as f64 / (samples - 1) as f64
            }
        })
        .collect();
    let outcomes = offsets
        .par_iter()
        .map(|&c| {
            let l = stabilizes(spec, &simulate_from(spec, lqr, c, tau, duration)?);
            let b = stabilizes(spec, &simulate_from(spec, balanced, c, tau, duration)?);
            Ok((c, l, b))
        })
        .collect::<Result<Vec<_>>>()?;
    // Largest offset up to which every scanned start stabilizes.
    let limit = |pick: fn(&(f64, bool, bool)) -> bool| outcomes.iter().take_while(|o| pick(o)).last().map(|o| o.0);
    Ok(RecoveryReport {
        lower,
        upper,
        samples,
        separating_offset: outcomes.iter().find(|o| o.2 && !o.1).map(|o| o.0),
        lqr_limit: limit(|o| o.1),
        balanced_limit: limit(|o| o.2),
    })
}
