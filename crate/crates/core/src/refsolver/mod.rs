//! Reference transient solver: data generator, control environment and
//! fault injector.

mod record;
mod solver;
mod trajectory;

pub use record::{SimulationRecord, RECORD_MAGIC, RECORD_VERSION};
pub use solver::{solve_cyclic_tridiagonal, solve_tridiagonal, Solver, SolverConfig, SubstepBalance};
pub use trajectory::{
    experiment_rng, generate_trajectories, generate_trajectories_with, InputTrajectory,
    ManipulationStyle, PiecewiseLinear,
};

use crate::error::{PsmError, Result};
use crate::transport::{FieldState, ScenarioConfig};

impl Solver {
    /// Simulate `trajectory` from `initial`, sampling every delta_t.
    ///
    /// Inputs are held at the trajectory value at the start of each interval.
    pub fn run_experiment(&self, trajectory: &InputTrajectory, initial: &FieldState) -> Result<SimulationRecord> {
        let scenario = self.scenario();
        let dt = scenario.delta_t;
        let n_steps = (trajectory.duration() / dt + 1e-9).floor() as usize;
        let stations = &scenario.sensor_stations;
        let mut rec = SimulationRecord {
            scenario_hash: scenario.hash(),
            stations: stations.clone(),
            times: Vec::with_capacity(n_steps + 1),
            states: Vec::with_capacity(n_steps + 1),
            controls: Vec::with_capacity(n_steps + 1),
            sensors: Vec::with_capacity(n_steps + 1),
        };
        let mut state = initial.clone();
        for k in 0..=n_steps {
            let t = k as f64 * dt;
            let v = trajectory.values_at(t);
            rec.times.push(t);
            rec.sensors.push(state.sensor_readout(stations));
            rec.states.push(state.clone());
            if k < n_steps {
                state = self.step(&state, &v)?;
            }
            rec.controls.push(v);
        }
        Ok(rec)
    }

    /// Steady start at the trajectory's initial inputs, then `run_experiment`.
    pub fn run_from_steady(&self, trajectory: &InputTrajectory) -> Result<SimulationRecord> {
        let initial = self.steady_state(&trajectory.values_at(0.0))?;
        self.run_experiment(trajectory, &initial)
    }
}

/// Copy of `scenario` with segment `segment`'s friction factor multiplied.
pub fn inject_degradation(scenario: &ScenarioConfig, segment: usize, multiplier: f64) -> Result<ScenarioConfig> {
    if segment >= scenario.segments.len() {
        return Err(PsmError::Config(format!(
            "segment index {segment} out of range (0..{})",
            scenario.segments.len()
        )));
    }
    if !(multiplier > 0.0) {
        return Err(PsmError::Config(format!("friction multiplier must be positive, got {multiplier}")));
    }
    let mut out = scenario.clone();
    out.segments[segment].friction_factor *= multiplier;
    Ok(out)
}

/// Training and test records generated from one seed.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub train: Vec<SimulationRecord>,
    pub test: Vec<SimulationRecord>,
}

/// Generate `n_train + n_test` experiments; test trajectories use the
/// streams after the training ones.
pub fn generate_corpus(
    scenario: &ScenarioConfig,
    config: SolverConfig,
    seed: u64,
    n_train: usize,
    n_test: usize,
) -> Result<Corpus> {
    generate_corpus_with_workers(scenario, config, seed, n_train, n_test, 1)
}

/// As [`generate_corpus`], with experiment `i` solved on worker
/// `i % workers`. Every experiment draws from its own seed stream, so the
/// output does not depend on the worker count.
pub fn generate_corpus_with_workers(
    scenario: &ScenarioConfig,
    config: SolverConfig,
    seed: u64,
    n_train: usize,
    n_test: usize,
    workers: usize,
) -> Result<Corpus> {
    let solver = Solver::new(scenario, config)?;
    let trajectories = generate_trajectories(seed, scenario, n_train + n_test);
    let workers = workers.clamp(1, trajectories.len().max(1));
    let mut slots: Vec<Option<Result<SimulationRecord>>> = (0..trajectories.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let (solver, trajectories) = (&solver, &trajectories);
                scope.spawn(move || {
                    (w..trajectories.len())
                        .step_by(workers)
                        .map(|i| (i, solver.run_from_steady(&trajectories[i])))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, rec) in h.join().expect("corpus worker panicked") {
                slots[i] = Some(rec);
            }
        }
    });
    let mut records = slots
        .into_iter()
        .map(|r| r.expect("every experiment assigned"))
        .collect::<Result<Vec<_>>>()?;
    let test = records.split_off(n_train);
    Ok(Corpus { train: records, test })
}
