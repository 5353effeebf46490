//! Subcommand orchestration: config in, artifacts out.

use std::path::{Path, PathBuf};
use std::time::Instant;

use roaforge_core::bench::BenchmarkSpec;
use roaforge_core::certificate::{RoaEstimate, StateGrid};
use roaforge_core::dynamics::{Controller, Trajectory};
use roaforge_core::nn::{encode, LyapunovNet};
use roaforge_core::pso::{ControllerSynthesis, IterationRecord};
use serde_json::{json, Value};

use crate::config::{self, Resolved, RunConfig};
use crate::error::{CliError, CliResult};
use crate::experiments::{
    compare, grid_sweep, mass_sweep, recovery_search, simulate_from, stabilizes, ControllerLabel, FitnessWeights, Study,
};
use crate::output::{
    input_names, num, roa_cells_header, simulate_header, timestamp, Artifacts, Table, COMPARE_HEADER,
    GRID_SWEEP_HEADER, HISTORY_HEADER, LOG_FILE, MASS_SWEEP_HEADER, RESULT_FILE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    /// One synthesis run.
    Synth,
    /// Particle-count comparison of K_O and K_max against K_LQR.
    Compare,
    /// Certified ROA of K_O across pendulum masses.
    MassSweep,
    /// Certified ROA and certification time across grid resolutions.
    GridSweep,
    /// Closed-loop trajectories of K_LQR, K_O and K_max.
    Simulate,
    /// One certification.
    Roa,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Compare => "compare",
            Command::MassSweep => "mass-sweep",
            Command::GridSweep => "grid-sweep",
            Command::Simulate => "simulate",
            Command::Roa => "roa",
        }
    }
}

/// Plain-text run log.
#[derive(Debug, Default)]
pub struct RunLog(Vec<String>);

impl RunLog {
    pub fn line(&mut self, s: impl Into<String>) {
        self.0.push(s.into());
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut s = self.0.join("\n");
        s.push('\n');
        s.into_bytes()
    }
}

/// Loads the config and applies command-line overrides.
pub fn load(path: &Path, seed: Option<u64>, out: Option<PathBuf>, log: &mut RunLog) -> CliResult<RunConfig> {
    let Resolved {
        mut config,
        defaults_applied,
    } = config::parse_file(path)?;
    log.line(format!("config: {}", path.display()));
    for d in defaults_applied {
        log.line(format!("default applied: {d}"));
    }
    if let Some(s) = seed {
        log.line(format!("override: seed = {s}"));
        config.seed = s;
    }
    if let Some(o) = out {
        log.line(format!("override: output_dir = {}", o.display()));
        config.output_dir = o;
    }
    Ok(config)
}

/// Runs `command` and writes its artifacts into the configured output
/// directory. Returns that directory.
pub fn run(command: Command, config: &RunConfig, mut log: RunLog) -> CliResult<PathBuf> {
    let artifacts = execute(command, config, &mut log)?;
    let mut artifacts = artifacts;
    artifacts.add_bytes(LOG_FILE, log.to_bytes());
    artifacts.write_all(&config.output_dir)?;
    Ok(config.output_dir.clone())
}

/// Computes every artifact of `command` except the run log.
pub fn execute(command: Command, config: &RunConfig, log: &mut RunLog) -> CliResult<Artifacts> {
    log.line(format!("roaforge {} {}", env!("CARGO_PKG_VERSION"), command.as_str()));
    let spec = config::benchmark_spec(&config.benchmark)?;
    let start = Instant::now();
    let mut artifacts = Artifacts::new();
    let result = match command {
        Command::Synth => synth(&spec, config, log, &mut artifacts)?,
        Command::Compare => run_compare(&spec, config, log, &mut artifacts)?,
        Command::MassSweep => run_mass_sweep(config, log, &mut artifacts)?,
        Command::GridSweep => run_grid_sweep(&spec, config, log, &mut artifacts)?,
        Command::Simulate => run_simulate(&spec, config, log, &mut artifacts)?,
        Command::Roa => run_roa(&spec, config, log, &mut artifacts)?,
    };
    log.line(format!("elapsed: {:.3} s", start.elapsed().as_secs_f64()));
    let doc = json!({
        "roaforge_version": env!("CARGO_PKG_VERSION"),
        "command": command.as_str(),
        "generated_at": timestamp(),
        "config": config.to_json(),
        "benchmark": benchmark_json(&spec),
        "result": result,
    });
    artifacts.add_json(RESULT_FILE, &doc)?;
    Ok(artifacts)
}

fn study(spec: &BenchmarkSpec, config: &RunConfig, log: &mut RunLog) -> CliResult<Study> {
    let study = Study::new(
        spec.clone(),
        config.tau,
        Some(&config.grid_points),
        Some(config.exemption_radius),
        config.candidate_kind(),
    )?;
    let b = &study.baseline;
    log.line(format!(
        "baseline K_LQR {:?}: cost {} certified cells {} of {}",
        b.gain.to_flat(),
        b.cost,
        b.estimate.size_cells,
        study.problem.grid.len()
    ));
    Ok(study)
}

fn benchmark_json(spec: &BenchmarkSpec) -> Value {
    let params: serde_json::Map<String, Value> =
        spec.parameters.iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
    let rows = |m: &roaforge_core::linalg::Matrix| -> Vec<Vec<f64>> {
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
            .collect()
    };
    json!({
        "name": spec.name,
        "parameters": params,
        "state_names": spec.state_names,
        "input_names": input_names(spec.input_dim()),
        "gain_lower": spec.gain_lower,
        "gain_upper": spec.gain_upper,
        "roa_lower": spec.roa_lower,
        "roa_upper": spec.roa_upper,
        "cost_q": rows(spec.cost.q()),
        "cost_r": rows(spec.cost.r()),
    })
}

fn grid_json(grid: &StateGrid) -> Value {
    json!({
        "lower": grid.lower(),
        "upper": grid.upper(),
        "points_per_dim": grid.points_per_dim(),
        "widths": grid.widths(),
        "mu": grid.mu(),
        "cells": grid.len(),
    })
}

fn estimate_json(est: &RoaEstimate) -> Value {
    json!({
        "threshold_c": est.threshold_c,
        "size_cells": est.size_cells,
        "size_fraction": est.size_fraction,
        "certified": est.certified,
        "exemption_cells": est.exemption_cells,
        "exemption_radius": est.exemption_radius,
    })
}

fn baseline_json(study: &Study) -> Value {
    json!({
        "gain": study.baseline.gain.to_flat(),
        "cost": study.baseline.cost,
        "estimate": estimate_json(&study.baseline.estimate),
    })
}

fn history_table(history: &[IterationRecord]) -> Table {
    let mut t = Table::new(&HISTORY_HEADER);
    for h in history {
        t.push(vec![
            h.iteration.to_string(),
            num(h.gbest_fitness),
            num(h.cost_term),
            num(h.roa_term),
        ]);
    }
    t
}

fn push_cells(table: &mut Table, label: &str, grid: &StateGrid, est: &RoaEstimate) {
    let mut x = vec![0.0; grid.dim()];
    for idx in est.certified_cells.iter() {
        grid.center(idx, &mut x);
        let mut row = vec![label.to_string()];
        row.extend(x.iter().map(|&v| num(v)));
        table.push(row);
    }
}

fn add_net(artifacts: &mut Artifacts, name: &str, net: Option<&LyapunovNet>) {
    if let Some(net) = net {
        artifacts.add_bytes(name, encode(net));
    }
}

/// Label of a gain synthesized with `weights`.
pub fn weights_label(weights: FitnessWeights) -> &'static str {
    if weights.w1 == 0.0 {
        ControllerLabel::RoaOnly.as_str()
    } else if weights.w2 == 0.0 {
        "K_cost"
    } else {
        ControllerLabel::Balanced.as_str()
    }
}

fn synthesis_json(synth: &ControllerSynthesis, seed: u64) -> Value {
    let r = &synth.result;
    let d = &r.gbest_detail;
    json!({
        "seed": seed,
        "gain": synth.gain.to_flat(),
        "fitness": r.gbest_fitness,
        "cost": d.cost,
        "roa_cells": d.roa_cells,
        "cost_ratio": d.cost_ratio,
        "roa_ratio": d.roa_ratio,
        "iterations": r.iterations_run,
        "terminated_by": r.terminated_by.as_str(),
        "omega": r.omega,
        "eta": r.eta,
        "reseeds": r.reseeds,
        "history": r.history.iter().map(|h| json!([h.iteration, h.gbest_fitness, h.cost_term, h.roa_term])).collect::<Vec<_>>(),
    })
}

fn synth(spec: &BenchmarkSpec, config: &RunConfig, log: &mut RunLog, artifacts: &mut Artifacts) -> CliResult<Value> {
    let study = study(spec, config, log)?;
    let synth = study.synthesize(config.weights, &config.swarm(), config.seed)?;
    let label = weights_label(config.weights);
    log.line(format!(
        "{label} {:?}: fitness {} after {} iterations ({})",
        synth.gain.to_flat(),
        synth.result.gbest_fitness,
        synth.result.iterations_run,
        synth.result.terminated_by.as_str()
    ));
    artifacts.add_table("synth_history.csv", &history_table(&synth.result.history))?;

    let grid = &study.problem.grid;
    let mut cells = Table::new(&roa_cells_header(&spec.state_names));
    push_cells(
        &mut cells,
        ControllerLabel::Lqr.as_str(),
        grid,
        &study.baseline.estimate,
    );
    let net = synth.result.gbest_detail.net.as_ref();
    let estimate = study.estimate_with(&synth.gain, net)?;
    push_cells(&mut cells, label, grid, &estimate);
    artifacts.add_table("roa_cells.csv", &cells)?;
    add_net(artifacts, "baseline_net.bin", study.baseline.net.as_ref());
    add_net(artifacts, "net.bin", net);

    Ok(json!({
        "seeds": [config.seed],
        "grid": grid_json(grid),
        "baseline": baseline_json(&study),
        "label": label,
        "synthesis": synthesis_json(&synth, config.seed),
        "estimate": estimate_json(&estimate),
    }))
}

fn run_compare(
    spec: &BenchmarkSpec,
    config: &RunConfig,
    log: &mut RunLog,
    artifacts: &mut Artifacts,
) -> CliResult<Value> {
    let study = study(spec, config, log)?;
    let cmp = compare(
        &study,
        &config.particle_counts,
        config.run_count,
        &config.swarm(),
        config.weights,
        config.seed,
    )?;
    let mut table = Table::new(&COMPARE_HEADER);
    for row in &cmp.rows {
        log.line(format!(
            "particles {} {}: cost {:+.4}% roa {:+.4}%",
            row.particles,
            row.controller.as_str(),
            row.pct_cost_increase,
            row.pct_roa_increase
        ));
        table.push(vec![
            row.particles.to_string(),
            row.controller.as_str().into(),
            num(row.pct_cost_increase),
            num(row.pct_roa_increase),
        ]);
    }
    artifacts.add_table("compare.csv", &table)?;
    Ok(json!({
        "seeds": cmp.rows.first().map(|r| r.seeds.clone()).unwrap_or_default(),
        "grid": grid_json(&study.problem.grid),
        "baseline": baseline_json(&study),
        "rows": cmp.rows,
        "runs": cmp.runs,
    }))
}

fn run_mass_sweep(config: &RunConfig, log: &mut RunLog, artifacts: &mut Artifacts) -> CliResult<Value> {
    if config.benchmark != "pendulum_a" {
        return Err(CliError::invalid("benchmark", "mass-sweep runs on pendulum_a"));
    }
    let rows = mass_sweep(
        &config.masses,
        config.tau,
        Some(&config.grid_points),
        Some(config.exemption_radius),
        &config.candidate_kind(),
        &config.swarm(),
        config.weights,
        config.run_count,
        config.seed,
    )?;
    let mut table = Table::new(&MASS_SWEEP_HEADER);
    for row in &rows {
        log.line(format!(
            "mass {} kg: K_O cells {} (K_LQR {})",
            row.mass_kg, row.roa_cells, row.lqr_roa_cells
        ));
        table.push(vec![num(row.mass_kg), num(row.roa_cells)]);
    }
    artifacts.add_table("mass_sweep.csv", &table)?;
    let seeds: Vec<u64> = (0..config.run_count)
        .map(|r| crate::experiments::run_seed(config.seed, r))
        .collect();
    Ok(json!({ "seeds": seeds, "rows": rows }))
}

fn fixed_gain(study_spec: &BenchmarkSpec, config: &RunConfig) -> CliResult<(Controller, &'static str)> {
    match &config.gain {
        Some(k) => Ok((
            Controller::from_flat(study_spec.input_dim(), study_spec.state_dim(), k)?,
            "K",
        )),
        None => {
            let problem = study_spec.problem(config.tau, Some(&config.grid_points))?;
            let gain = roaforge_core::lqr::lqr_gain(&problem.dsys, &problem.weights)?;
            Ok((gain, ControllerLabel::Lqr.as_str()))
        }
    }
}

fn run_grid_sweep(
    spec: &BenchmarkSpec,
    config: &RunConfig,
    log: &mut RunLog,
    artifacts: &mut Artifacts,
) -> CliResult<Value> {
    let (gain, label) = fixed_gain(spec, config)?;
    let rows = grid_sweep(
        spec,
        config.tau,
        &config.grid_sweep_points,
        Some(config.exemption_radius),
        &gain,
    )?;
    let mut table = Table::new(&GRID_SWEEP_HEADER);
    for row in &rows {
        log.line(format!(
            "{} points/dim: {} cells in {:.6} s",
            row.points_per_dim, row.roa_cells, row.seconds
        ));
        table.push(vec![
            row.points_per_dim.to_string(),
            row.roa_cells.to_string(),
            num(row.seconds),
        ]);
    }
    artifacts.add_table("grid_sweep.csv", &table)?;
    Ok(json!({
        "seeds": [],
        "controller": label,
        "gain": gain.to_flat(),
        "rows": rows,
    }))
}

fn trajectory_rows(table: &mut Table, label: &str, traj: &Trajectory) {
    for ((t, x), u) in traj.times.iter().zip(&traj.states).zip(&traj.inputs) {
        let mut row = vec![num(*t)];
        row.extend(x.iter().map(|&v| num(v)));
        row.extend(u.iter().map(|&v| num(v)));
        row.push(label.to_string());
        table.push(row);
    }
}

fn run_simulate(
    spec: &BenchmarkSpec,
    config: &RunConfig,
    log: &mut RunLog,
    artifacts: &mut Artifacts,
) -> CliResult<Value> {
    let study = study(spec, config, log)?;
    let swarm = config.swarm();
    let balanced = study.synthesize(config.weights, &swarm, config.seed)?;
    let roa_only = study.synthesize(FitnessWeights::ROA_ONLY, &swarm, config.seed)?;
    let controllers = [
        (ControllerLabel::Lqr, study.baseline.gain.clone()),
        (ControllerLabel::Balanced, balanced.gain.clone()),
        (ControllerLabel::RoaOnly, roa_only.gain.clone()),
    ];
    for (label, gain) in &controllers {
        log.line(format!("{} {:?}", label.as_str(), gain.to_flat()));
    }
    let sim = &config.simulate;
    let mut runs = Vec::new();
    for (i, &angle) in sim.angles.iter().enumerate() {
        let mut table = Table::new(&simulate_header(&spec.state_names, spec.input_dim()));
        for (label, gain) in &controllers {
            let traj = simulate_from(spec, gain, angle, config.tau, sim.duration)?;
            let ok = stabilizes(spec, &traj);
            log.line(format!("start {angle}: {} stabilizes = {ok}", label.as_str()));
            runs.push(json!({
                "initial_offset": angle,
                "controller": label.as_str(),
                "stabilizes": ok,
                "diverged": traj.diverged,
                "final_state": traj.final_state(),
                "csv": format!("simulate_{i}.csv"),
            }));
            trajectory_rows(&mut table, label.as_str(), &traj);
        }
        artifacts.add_table(format!("simulate_{i}.csv"), &table)?;
    }
    let recovery = recovery_search(
        spec,
        &study.baseline.gain,
        &balanced.gain,
        (sim.recovery_range[0], sim.recovery_range[1]),
        sim.recovery_samples,
        config.tau,
        sim.duration,
    )?;
    log.line(format!("recovery: {:?}", recovery));
    Ok(json!({
        "seeds": [config.seed],
        "baseline": baseline_json(&study),
        "K_O": synthesis_json(&balanced, config.seed),
        "K_max": synthesis_json(&roa_only, config.seed),
        "runs": runs,
        "recovery": recovery,
    }))
}

fn run_roa(spec: &BenchmarkSpec, config: &RunConfig, log: &mut RunLog, artifacts: &mut Artifacts) -> CliResult<Value> {
    let (gain, label) = fixed_gain(spec, config)?;
    let study = study(spec, config, log)?;
    let assessment = study.assess(&gain)?;
    log.line(format!(
        "{label} {:?}: cost {} certified cells {}",
        gain.to_flat(),
        assessment.cost,
        assessment.estimate.size_cells
    ));
    let mut cells = Table::new(&roa_cells_header(&spec.state_names));
    push_cells(&mut cells, label, &study.problem.grid, &assessment.estimate);
    artifacts.add_table("roa_cells.csv", &cells)?;
    add_net(artifacts, "net.bin", assessment.net.as_ref());
    Ok(json!({
        "seeds": [config.seed],
        "grid": grid_json(&study.problem.grid),
        "controller": label,
        "gain": gain.to_flat(),
        "cost": assessment.cost,
        "estimate": estimate_json(&assessment.estimate),
    }))
}
