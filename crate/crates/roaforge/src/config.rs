//! Strict JSON run configuration.
//!
//! A config file is parsed into [`RawConfig`] (every key optional except
//! `benchmark`, unknown keys rejected) and resolved against the benchmark
//! into a fully populated [`RunConfig`]. Every default filled in during
//! resolution is reported so it can be echoed to the run log. The resolved
//! config serializes to a document that resolves back to itself.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use roaforge_core::bench::{self, BenchmarkSpec};
use roaforge_core::nn::{Activation, TrainConfig, DEFAULT_EPSILON};
use roaforge_core::pso::{CandidateKind, NeuralSettings};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::experiments::{FitnessWeights, PairChoice, SwarmSettings};

pub const DEFAULT_TAU: f64 = 0.01;
pub const DEFAULT_MAX_ITER: usize = 15_000;
pub const DEFAULT_STALL_WINDOW: usize = 100;
pub const DEFAULT_PARTICLES: usize = 20;
pub const DEFAULT_RUN_COUNT: usize = 5;
pub const DEFAULT_PARTICLE_COUNTS: [usize; 5] = [10, 15, 20, 25, 30];
pub const DEFAULT_MASSES: [f64; 7] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7];
pub const DEFAULT_GRID_SWEEP_POINTS: [usize; 4] = [200, 220, 240, 260];
pub const DEFAULT_DURATION: f64 = 50.0;
pub const DEFAULT_RECOVERY_SAMPLES: usize = 31;
pub const DEFAULT_OUTPUT_DIR: &str = "roaforge-out";
/// Mass range accepted by the mass sweep, kg.
pub const MASS_RANGE: (f64, f64) = (0.1, 0.7);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CandidateName {
    #[default]
    Quadratic,
    Neural,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ActivationName {
    #[default]
    Tanh,
    LeakyRelu,
    Linear,
}

impl From<ActivationName> for Activation {
    fn from(a: ActivationName) -> Self {
        match a {
            ActivationName::Tanh => Activation::Tanh,
            ActivationName::LeakyRelu => Activation::LeakyRelu,
            ActivationName::Linear => Activation::Linear,
        }
    }
}

/// Either one resolution for every dimension or one per dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridPoints {
    Uniform(usize),
    PerDim(Vec<usize>),
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPso {
    pub particles: Option<usize>,
    pub max_iter: Option<usize>,
    pub stall_window: Option<usize>,
    pub pair: Option<PairChoice>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawWeights {
    pub w1: Option<f64>,
    pub w2: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNeural {
    pub hidden: Option<Vec<usize>>,
    pub activation: Option<ActivationName>,
    pub epsilon: Option<f64>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub level_multiplier: Option<f64>,
    pub max_steps_per_epoch: Option<usize>,
    pub max_grad_norm: Option<f64>,
    pub warm_start: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSimulate {
    pub angles: Option<Vec<f64>>,
    pub duration: Option<f64>,
    pub recovery_range: Option<[f64; 2]>,
    pub recovery_samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub benchmark: String,
    pub tau: Option<f64>,
    pub grid_points: Option<GridPoints>,
    pub exemption_radius: Option<f64>,
    pub candidate: Option<CandidateName>,
    pub neural: Option<RawNeural>,
    pub pso: Option<RawPso>,
    pub weights: Option<RawWeights>,
    pub seed: Option<u64>,
    pub run_count: Option<usize>,
    pub particle_counts: Option<Vec<usize>>,
    pub masses: Option<Vec<f64>>,
    pub grid_sweep_points: Option<Vec<usize>>,
    pub simulate: Option<RawSimulate>,
    pub gain: Option<Vec<f64>>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsoConfig {
    pub particles: usize,
    pub max_iter: usize,
    pub stall_window: usize,
    pub pair: PairChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeuralConfig {
    pub hidden: Vec<usize>,
    pub activation: ActivationName,
    pub epsilon: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub level_multiplier: f64,
    pub max_steps_per_epoch: usize,
    pub max_grad_norm: f64,
    pub warm_start: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateConfig {
    pub angles: Vec<f64>,
    pub duration: f64,
    pub recovery_range: [f64; 2],
    pub recovery_samples: usize,
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub benchmark: String,
    pub tau: f64,
    pub grid_points: Vec<usize>,
    pub exemption_radius: f64,
    pub candidate: CandidateName,
    pub neural: NeuralConfig,
    pub pso: PsoConfig,
    pub weights: FitnessWeights,
    pub seed: u64,
    pub run_count: usize,
    pub particle_counts: Vec<usize>,
    pub masses: Vec<f64>,
    pub grid_sweep_points: Vec<usize>,
    pub simulate: SimulateConfig,
    /// Row-major gain for `roa` and `grid-sweep`; `None` means the LQR gain.
    pub gain: Option<Vec<f64>>,
    pub output_dir: PathBuf,
}

/// A resolved config plus the defaults that were filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub config: RunConfig,
    pub defaults_applied: Vec<String>,
}

struct Defaults(Vec<String>);

impl Defaults {
    fn take<T: Serialize>(&mut self, key: &str, value: Option<T>, default: impl FnOnce() -> T) -> T {
        value.unwrap_or_else(|| {
            let v = default();
            let shown = serde_json::to_string(&v).unwrap_or_else(|_| "?".into());
            self.0.push(format!("{key} = {shown}"));
            v
        })
    }
}

pub fn parse_file(path: &Path) -> CliResult<Resolved> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::ConfigRead {
        path: path.to_path_buf(),
        source,
    })?;
    parse_str(&text).map_err(|e| match e {
        CliError::ConfigParse { source, .. } => CliError::ConfigParse {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

pub fn parse_str(text: &str) -> CliResult<Resolved> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|source| CliError::ConfigParse {
        path: PathBuf::from("<input>"),
        source,
    })?;
    resolve(raw)
}

pub fn benchmark_spec(name: &str) -> CliResult<BenchmarkSpec> {
    bench::by_name(name).map_err(|_| {
        CliError::invalid(
            "benchmark",
            format!(
                "unknown benchmark `{name}`, expected one of {}",
                bench::NAMES.join(", ")
            ),
        )
    })
}

fn positive(field: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::invalid(
            field,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

fn at_least(field: &str, v: usize, min: usize) -> CliResult<()> {
    if v >= min {
        Ok(())
    } else {
        Err(CliError::invalid(field, format!("must be at least {min}, got {v}")))
    }
}

fn non_empty<T>(field: &str, v: &[T]) -> CliResult<()> {
    if v.is_empty() {
        Err(CliError::invalid(field, "must not be empty"))
    } else {
        Ok(())
    }
}

pub fn resolve(raw: RawConfig) -> CliResult<Resolved> {
    let spec = benchmark_spec(&raw.benchmark)?;
    let n = spec.state_dim();
    let mut d = Defaults(Vec::new());

    let tau = d.take("tau", raw.tau, || DEFAULT_TAU);
    positive("tau", tau)?;

    let grid_points = match d.take("grid_points", raw.grid_points, || {
        GridPoints::PerDim(spec.default_grid_points.clone())
    }) {
        GridPoints::Uniform(p) => vec![p; n],
        GridPoints::PerDim(v) => v,
    };
    if grid_points.len() != n {
        return Err(CliError::invalid(
            "grid_points",
            format!(
                "benchmark `{}` has {n} states, got {} entries",
                spec.name,
                grid_points.len()
            ),
        ));
    }
    for &p in &grid_points {
        at_least("grid_points", p, 3)?;
    }

    let default_exemption = match spec.exemption {
        roaforge_core::certificate::ExemptionRadius::Absolute(r) => r,
        roaforge_core::certificate::ExemptionRadius::CoveringMultiple(k) => {
            let grid =
                roaforge_core::certificate::build_grid(&spec.roa_lower, &spec.roa_upper, &spec.default_grid_points)
                    .map_err(|e| CliError::invalid("benchmark", e.to_string()))?;
            k * grid.mu()
        }
    };
    let exemption_radius = d.take("exemption_radius", raw.exemption_radius, || default_exemption);
    positive("exemption_radius", exemption_radius)?;

    let candidate = d.take("candidate", raw.candidate, CandidateName::default);

    let rn = raw.neural.unwrap_or_default();
    let td = TrainConfig::default();
    let nd = NeuralSettings::default();
    let neural = NeuralConfig {
        hidden: d.take("neural.hidden", rn.hidden, || nd.hidden.clone()),
        activation: d.take("neural.activation", rn.activation, ActivationName::default),
        epsilon: d.take("neural.epsilon", rn.epsilon, || DEFAULT_EPSILON),
        learning_rate: d.take("neural.learning_rate", rn.learning_rate, || td.learning_rate),
        epochs: d.take("neural.epochs", rn.epochs, || td.epochs),
        batch_size: d.take("neural.batch_size", rn.batch_size, || td.batch_size),
        level_multiplier: d.take("neural.level_multiplier", rn.level_multiplier, || td.level_multiplier),
        max_steps_per_epoch: d.take("neural.max_steps_per_epoch", rn.max_steps_per_epoch, || {
            td.max_steps_per_epoch
        }),
        max_grad_norm: d.take("neural.max_grad_norm", rn.max_grad_norm, || td.max_grad_norm),
        warm_start: d.take("neural.warm_start", rn.warm_start, || nd.warm_start),
    };
    non_empty("neural.hidden", &neural.hidden)?;
    let mut prev = n;
    for &w in &neural.hidden {
        if w < prev {
            return Err(CliError::invalid(
                "neural.hidden",
                format!("widths must be non-decreasing from the state dimension {n}"),
            ));
        }
        prev = w;
    }
    positive("neural.epsilon", neural.epsilon)?;
    positive("neural.learning_rate", neural.learning_rate)?;
    at_least("neural.batch_size", neural.batch_size, 1)?;
    at_least("neural.max_steps_per_epoch", neural.max_steps_per_epoch, 1)?;
    positive("neural.max_grad_norm", neural.max_grad_norm)?;
    if !(neural.level_multiplier >= 1.0) || !neural.level_multiplier.is_finite() {
        return Err(CliError::invalid(
            "neural.level_multiplier",
            "must be finite and at least 1",
        ));
    }

    let rp = raw.pso.unwrap_or_default();
    let pso = PsoConfig {
        particles: d.take("pso.particles", rp.particles, || DEFAULT_PARTICLES),
        max_iter: d.take("pso.max_iter", rp.max_iter, || DEFAULT_MAX_ITER),
        stall_window: d.take("pso.stall_window", rp.stall_window, || DEFAULT_STALL_WINDOW),
        pair: d.take("pso.pair", rp.pair, PairChoice::default),
    };
    at_least("pso.particles", pso.particles, 2)?;
    at_least("pso.max_iter", pso.max_iter, 1)?;
    at_least("pso.stall_window", pso.stall_window, 1)?;

    let rw = raw.weights.unwrap_or_default();
    let weights = FitnessWeights {
        w1: d.take("weights.w1", rw.w1, || 1.0),
        w2: d.take("weights.w2", rw.w2, || 1.0),
    };
    for (field, w) in [("weights.w1", weights.w1), ("weights.w2", weights.w2)] {
        if !(w >= 0.0) || !w.is_finite() {
            return Err(CliError::invalid(
                field,
                format!("must be finite and non-negative, got {w}"),
            ));
        }
    }
    if !(weights.w1 + weights.w2 > 0.0) {
        return Err(CliError::invalid("weights", "w1 + w2 must be positive"));
    }

    let seed = d.take("seed", raw.seed, || 0);
    let run_count = d.take("run_count", raw.run_count, || DEFAULT_RUN_COUNT);
    at_least("run_count", run_count, 1)?;

    let particle_counts = d.take("particle_counts", raw.particle_counts, || {
        DEFAULT_PARTICLE_COUNTS.to_vec()
    });
    non_empty("particle_counts", &particle_counts)?;
    for &c in &particle_counts {
        at_least("particle_counts", c, 2)?;
    }

    let masses = d.take("masses", raw.masses, || DEFAULT_MASSES.to_vec());
    non_empty("masses", &masses)?;
    for &m in &masses {
        if !(MASS_RANGE.0..=MASS_RANGE.1).contains(&m) {
            return Err(CliError::invalid(
                "masses",
                format!("{m} kg is outside [{}, {}] kg", MASS_RANGE.0, MASS_RANGE.1),
            ));
        }
    }

    let grid_sweep_points = d.take("grid_sweep_points", raw.grid_sweep_points, || {
        DEFAULT_GRID_SWEEP_POINTS.to_vec()
    });
    non_empty("grid_sweep_points", &grid_sweep_points)?;
    for &p in &grid_sweep_points {
        at_least("grid_sweep_points", p, 3)?;
    }

    let rs = raw.simulate.unwrap_or_default();
    let simulate = SimulateConfig {
        angles: d.take("simulate.angles", rs.angles, || vec![PI / 6.0, 5.0 * PI / 12.0]),
        duration: d.take("simulate.duration", rs.duration, || DEFAULT_DURATION),
        recovery_range: d.take("simulate.recovery_range", rs.recovery_range, || [PI / 6.0, PI / 2.0]),
        recovery_samples: d.take("simulate.recovery_samples", rs.recovery_samples, || {
            DEFAULT_RECOVERY_SAMPLES
        }),
    };
    non_empty("simulate.angles", &simulate.angles)?;
    if simulate.angles.iter().any(|a| !a.is_finite()) {
        return Err(CliError::invalid("simulate.angles", "must be finite"));
    }
    positive("simulate.duration", simulate.duration)?;
    if simulate.duration / tau > 1e8 {
        return Err(CliError::invalid("simulate.duration", "more than 1e8 sampling steps"));
    }
    let [lo, hi] = simulate.recovery_range;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(CliError::invalid(
            "simulate.recovery_range",
            "need finite lower <= upper",
        ));
    }
    at_least("simulate.recovery_samples", simulate.recovery_samples, 1)?;

    let gain = raw.gain;
    if gain.is_none() {
        d.0.push("gain = null (LQR gain)".into());
    }
    if let Some(k) = &gain {
        let expected = spec.state_dim() * spec.input_dim();
        if k.len() != expected {
            return Err(CliError::invalid(
                "gain",
                format!("need {expected} entries, got {}", k.len()),
            ));
        }
        if k.iter().any(|v| !v.is_finite()) {
            return Err(CliError::invalid("gain", "entries must be finite"));
        }
    }

    let output_dir = d.take("output_dir", raw.output_dir, || PathBuf::from(DEFAULT_OUTPUT_DIR));

    Ok(Resolved {
        config: RunConfig {
            benchmark: spec.name.clone(),
            tau,
            grid_points,
            exemption_radius,
            candidate,
            neural,
            pso,
            weights,
            seed,
            run_count,
            particle_counts,
            masses,
            grid_sweep_points,
            simulate,
            gain,
            output_dir,
        },
        defaults_applied: d.0,
    })
}

impl RunConfig {
    pub fn swarm(&self) -> SwarmSettings {
        SwarmSettings {
            particles: self.pso.particles,
            max_iter: self.pso.max_iter,
            stall_window: self.pso.stall_window,
            pair: self.pso.pair,
        }
    }

    /// Candidate settings; network initialization and training draw from
    /// the run seed.
    pub fn candidate_kind(&self) -> CandidateKind {
        match self.candidate {
            CandidateName::Quadratic => CandidateKind::Quadratic,
            CandidateName::Neural => CandidateKind::Neural(NeuralSettings {
                hidden: self.neural.hidden.clone(),
                activation: self.neural.activation.into(),
                epsilon: self.neural.epsilon,
                train: TrainConfig {
                    learning_rate: self.neural.learning_rate,
                    epochs: self.neural.epochs,
                    batch_size: self.neural.batch_size,
                    seed: self.seed,
                    level_multiplier: self.neural.level_multiplier,
                    max_steps_per_epoch: self.neural.max_steps_per_epoch,
                    max_grad_norm: self.neural.max_grad_norm,
                },
                warm_start: self.neural.warm_start,
                init_seed: self.seed,
            }),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_documented_defaults() {
        let r = parse_str(r#"{"benchmark": "pendulum_a"}"#).unwrap();
        let c = &r.config;
        assert_eq!(c.tau, 0.01);
        assert_eq!(c.grid_points, vec![250, 250]);
        assert_eq!(c.pso.max_iter, 15_000);
        assert_eq!(c.pso.stall_window, 100);
        assert_eq!(c.candidate, CandidateName::Quadratic);
        assert_eq!(c.run_count, 5);
        assert!(r.defaults_applied.iter().any(|l| l.starts_with("tau = ")));
    }

    #[test]
    fn benchmark_is_required() {
        assert!(matches!(parse_str("{}"), Err(CliError::ConfigParse { .. })));
    }

    #[test]
    fn negative_tau_names_the_field() {
        let err = parse_str(r#"{"benchmark": "pendulum_a", "tau": -1}"#).unwrap_err();
        assert!(err.to_string().contains("`tau`"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = parse_str(r#"{"benchmark": "pendulum_a", "taau": 0.01}"#).unwrap_err();
        assert!(err.to_string().contains("taau"), "{err}");
        let err = parse_str(r#"{"benchmark": "pendulum_a", "pso": {"particle": 3}}"#).unwrap_err();
        assert!(err.to_string().contains("particle"), "{err}");
    }

    #[test]
    fn wrong_type_reports_position() {
        let err = parse_str("{\"benchmark\": \"pendulum_a\",\n \"tau\": \"fast\"}").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn uniform_grid_points_expand() {
        let r = parse_str(r#"{"benchmark": "aircraft_pitch", "grid_points": 11}"#).unwrap();
        assert_eq!(r.config.grid_points, vec![11, 11, 11]);
        assert!(parse_str(r#"{"benchmark": "aircraft_pitch", "grid_points": [11, 11]}"#).is_err());
    }

    #[test]
    fn masses_outside_range_rejected() {
        assert!(parse_str(r#"{"benchmark": "pendulum_a", "masses": [0.05]}"#).is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let r = parse_str(r#"{"benchmark": "vehicle_steering", "candidate": "neural", "seed": 9, "gain": [1, 2]}"#)
            .unwrap();
        let text = serde_json::to_string(&r.config).unwrap();
        let again = parse_str(&text).unwrap();
        assert_eq!(again.config, r.config);
        assert!(again.defaults_applied.is_empty());
    }
}
