//! Seeded benchmark on the van der Pol plant: five observer settings run
//! against the same noisy plant logs and the same randomized initial
//! guesses, compared through the relative cost excess over setting 1.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{integrate_step, DynamicsError, OutputVector, StateVector, VanDerPol};
use crate::measurement::MeasurementLog;
use crate::observer::{CycleRecord, Observer, ObserverConfig, ObserverError};
use crate::rate_adapter::{RateError, RateState, TimingSpec};
use crate::solver::{BoxConstraint, SolverError, SolverOptions};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Observer(#[from] ObserverError),
    #[error("run series misaligned: {0}")]
    Alignment(String),
    #[error("worker pool: {0}")]
    Pool(String),
}

impl From<RateError> for ScenarioError {
    fn from(e: RateError) -> Self {
        ScenarioError::Config(e.to_string())
    }
}

impl From<SolverError> for ScenarioError {
    fn from(e: SolverError) -> Self {
        ScenarioError::Config(e.to_string())
    }
}

/// Every constant of the benchmark. Key names are those of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub tau: f64,
    pub tau_c: f64,
    #[serde(rename = "N")]
    pub horizon: usize,
    #[serde(rename = "N_sim")]
    pub n_sim: usize,
    #[serde(rename = "N_s")]
    pub n_scenarios: usize,
    pub noise_variance: f64,
    pub rho: f64,
    pub floor_c: f64,
    pub a_true: f64,
    pub a_observer: f64,
    pub x0_true: [f64; 3],
    pub box_lower: [f64; 3],
    pub box_upper: [f64; 3],
    pub q_min: usize,
    pub q_max: usize,
    pub delta: usize,
    pub settings_q_init: Vec<usize>,
    pub settings_adaptive: Vec<bool>,
    pub master_seed: u64,
    pub initial_step: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            tau: 0.002,
            tau_c: 0.0005,
            horizon: 200,
            n_sim: 2000,
            n_scenarios: 50,
            noise_variance: 0.03,
            rho: 0.01,
            floor_c: crate::cost::DEFAULT_FLOOR,
            a_true: 10.0,
            a_observer: 10.0,
            x0_true: [3.0, 1.0, 1.0],
            box_lower: [-10.0, -10.0, 0.1],
            box_upper: [10.0, 10.0, 40.0],
            q_min: 20,
            q_max: 1000,
            delta: 10,
            settings_q_init: vec![20, 50, 100, 300, 20],
            settings_adaptive: vec![false, false, false, false, true],
            master_seed: 2014,
            initial_step: SolverOptions::default().initial_step,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Setting {
    /// 1-based.
    pub id: usize,
    pub q_init: usize,
    pub adaptive: bool,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Config(m));
        TimingSpec::new(self.tau, self.tau_c)?;
        if self.horizon == 0 || self.n_sim <= self.horizon {
            return bad(format!(
                "need 0 < N < N_sim, got N={} N_sim={}",
                self.horizon, self.n_sim
            ));
        }
        // config files store integers as i64
        if self.master_seed > i64::MAX as u64 {
            return bad(format!("master_seed must be <= {}, got {}", i64::MAX, self.master_seed));
        }
        if self.n_scenarios == 0 {
            return bad("N_s must be positive".into());
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return bad(format!("noise_variance must be >= 0, got {}", self.noise_variance));
        }
        if !(self.rho >= 0.0) {
            return bad(format!("rho must be >= 0, got {}", self.rho));
        }
        if !(self.floor_c > 0.0) {
            return bad(format!("floor_c must be > 0, got {}", self.floor_c));
        }
        if !(self.initial_step > 0.0) {
            return bad(format!("initial_step must be > 0, got {}", self.initial_step));
        }
        self.bounds()?;
        if self.settings_q_init.is_empty() || self.settings_q_init.len() != self.settings_adaptive.len() {
            return bad("settings_q_init and settings_adaptive must be non-empty and of equal length".into());
        }
        for s in self.settings() {
            self.rate_state(&s)?;
        }
        Ok(())
    }

    pub fn settings(&self) -> Vec<Setting> {
        self.settings_q_init
            .iter()
            .zip(&self.settings_adaptive)
            .enumerate()
            .map(|(i, (&q_init, &adaptive))| Setting {
                id: i + 1,
                q_init,
                adaptive,
            })
            .collect()
    }

    pub fn bounds(&self) -> Result<BoxConstraint<3>, ScenarioError> {
        Ok(BoxConstraint::new(
            StateVector::<3>::from(self.box_lower),
            StateVector::<3>::from(self.box_upper),
        )?)
    }

    pub fn timing(&self) -> Result<TimingSpec, ScenarioError> {
        Ok(TimingSpec::new(self.tau, self.tau_c)?)
    }

    /// Fixed settings run with `delta = 0`.
    pub fn rate_state(&self, setting: &Setting) -> Result<RateState, ScenarioError> {
        let delta = if setting.adaptive { self.delta } else { 0 };
        Ok(RateState::new(setting.q_init, self.q_min, self.q_max, delta)?)
    }

    pub fn observer_config(&self) -> Result<ObserverConfig<3>, ScenarioError> {
        Ok(ObserverConfig {
            horizon: self.horizon,
            bounds: self.bounds()?,
            timing: self.timing()?,
            rho: self.rho,
            floor_c: self.floor_c,
            solver: SolverOptions {
                initial_step: self.initial_step,
                ..SolverOptions::default()
            },
        })
    }
}

const STREAM_PLANT: u64 = 1;
const STREAM_INITIAL_STATES: u64 = 2;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `(stream, index)`, independent of evaluation order.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index)
}

pub fn plant_seed(master: u64, scenario: usize) -> u64 {
    derive_seed(master, STREAM_PLANT, scenario as u64)
}

pub fn initial_states_seed(master: u64) -> u64 {
    derive_seed(master, STREAM_INITIAL_STATES, 0)
}

pub fn input_profile(t: f64) -> f64 {
    1.0 - 0.5 * (2.0 * t).cos()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantRun {
    /// True states at samples `0..=N_sim`.
    pub states: Vec<StateVector<3>>,
    pub log: MeasurementLog<1>,
}

/// True plant over samples `0..=N_sim` with `y = x1 + noise`, Gaussian noise
/// of variance `noise_variance`.
pub fn simulate_plant(config: &ScenarioConfig, seed: u64) -> Result<PlantRun, ScenarioError> {
    let model = VanDerPol::new(config.a_true);
    let noise = Normal::new(0.0, config.noise_variance.sqrt()).map_err(|e| ScenarioError::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = StateVector::<3>::from(config.x0_true);
    let mut states = Vec::with_capacity(config.n_sim + 1);
    let mut log = MeasurementLog::new(config.tau);
    for k in 0..=config.n_sim {
        let u = input_profile(k as f64 * config.tau);
        states.push(x);
        log.push(OutputVector::<1>::new(x[0] + noise.sample(&mut rng)), u);
        if k < config.n_sim {
            x = integrate_step(&model, &x, u, config.tau)?;
        }
    }
    Ok(PlantRun { states, log })
}

/// `x_hat_i = (0.2 + 1.8 r_i) x0_i`, `r_i ~ U[0, 1)`.
pub fn sample_initial_states(config: &ScenarioConfig, seed: u64) -> Vec<StateVector<3>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = StateVector::<3>::from(config.x0_true);
    (0..config.n_scenarios)
        .map(|_| StateVector::<3>::from_fn(|i, _| (0.2 + 1.8 * rng.random::<f64>()) * x0[i]))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub setting_id: usize,
    pub scenario_id: usize,
    pub x_hat0: [f64; 3],
    /// Held cost at samples `N+1 ..= N_sim`.
    pub cost_series: Vec<f64>,
    pub q_series: Vec<usize>,
    /// Estimate minus truth at samples `N+1 ..= N_sim`.
    pub error_series: Vec<[f64; 3]>,
    pub cycles: Vec<CycleRecord>,
}

pub fn run_setting(
    config: &ScenarioConfig,
    setting: &Setting,
    scenario_id: usize,
    x_hat0: &StateVector<3>,
    plant: &PlantRun,
) -> Result<RunResult, ScenarioError> {
    let mut observer = Observer::new(
        VanDerPol::new(config.a_observer),
        config.observer_config()?,
        config.rate_state(setting)?,
        *x_hat0,
        0,
    );
    let len = config.n_sim - config.horizon;
    let mut result = RunResult {
        setting_id: setting.id,
        scenario_id,
        x_hat0: [x_hat0[0], x_hat0[1], x_hat0[2]],
        cost_series: Vec::with_capacity(len),
        q_series: Vec::with_capacity(len),
        error_series: Vec::with_capacity(len),
        cycles: Vec::new(),
    };
    for j in 0..=config.n_sim {
        let out = observer.step(&plant.log, j)?;
        if let Some(c) = out.cycle {
            result.cycles.push(c);
        }
        if j > config.horizon {
            let cost = out
                .cost
                .ok_or_else(|| ScenarioError::Alignment(format!("no cost available at sample {j}")))?;
            result.cost_series.push(cost);
            result.q_series.push(out.q);
            let err = out.estimate - plant.states[j];
            result.error_series.push([err[0], err[1], err[2]]);
        }
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Indicator {
    pub setting_id: usize,
    /// Mean of `(J_s - J_1) / J_1` over samples and scenarios.
    pub m: f64,
    /// Population variance of the same quantity.
    pub sigma: f64,
}

/// Relative cost excess of every setting over setting 1. Aggregation order
/// is canonical (by scenario id, then sample), whatever the input order.
pub fn indicators(results: &[RunResult]) -> Result<Vec<Indicator>, ScenarioError> {
    let mut by_key: BTreeMap<(usize, usize), &RunResult> = BTreeMap::new();
    for r in results {
        if by_key.insert((r.setting_id, r.scenario_id), r).is_some() {
            return Err(ScenarioError::Alignment(format!(
                "duplicate run for setting {} scenario {}",
                r.setting_id, r.scenario_id
            )));
        }
    }
    let reference: Vec<&RunResult> = by_key.range((1, 0)..(2, 0)).map(|(_, r)| *r).collect();
    if reference.is_empty() {
        return Err(ScenarioError::Alignment("no runs for setting 1".into()));
    }
    let settings: Vec<usize> = {
        let mut s: Vec<usize> = by_key.keys().map(|k| k.0).collect();
        s.dedup();
        s
    };

    let mut out = Vec::with_capacity(settings.len());
    for s in settings {
        let mut ratios = Vec::new();
        for base in &reference {
            let run = by_key
                .get(&(s, base.scenario_id))
                .ok_or_else(|| ScenarioError::Alignment(format!("setting {s} lacks scenario {}", base.scenario_id)))?;
            if run.cost_series.len() != base.cost_series.len() {
                return Err(ScenarioError::Alignment(format!(
                    "setting {s} scenario {}: {} samples vs {}",
                    base.scenario_id,
                    run.cost_series.len(),
                    base.cost_series.len()
                )));
            }
            ratios.extend(
                run.cost_series
                    .iter()
                    .zip(&base.cost_series)
                    .map(|(j, j1)| (j - j1) / j1),
            );
        }
        let count = by_key.range((s, 0)..(s + 1, 0)).count();
        if count != reference.len() {
            return Err(ScenarioError::Alignment(format!(
                "setting {s} has {count} scenarios, setting 1 has {}",
                reference.len()
            )));
        }
        let n = ratios.len() as f64;
        let m = ratios.iter().sum::<f64>() / n;
        let sigma = ratios.iter().map(|r| (r - m).powi(2)).sum::<f64>() / n;
        out.push(Indicator {
            setting_id: s,
            m,
            sigma,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: ScenarioConfig,
    pub plant_seeds: Vec<u64>,
    pub initial_states_seed: u64,
    pub initial_states: Vec<StateVector<3>>,
    /// Ordered by setting, then scenario.
    pub runs: Vec<RunResult>,
    pub indicators: Vec<Indicator>,
}

/// Every (setting, scenario) pair on a pool of `workers` threads. Results do
/// not depend on the worker count.
pub fn run_experiment(config: &ScenarioConfig, workers: usize) -> Result<ExperimentResult, ScenarioError> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| ScenarioError::Pool(e.to_string()))?;

    let plant_seeds: Vec<u64> = (0..config.n_scenarios)
        .map(|n| plant_seed(config.master_seed, n))
        .collect();
    let init_seed = initial_states_seed(config.master_seed);
    let initial_states = sample_initial_states(config, init_seed);
    let settings = config.settings();

    let (plants, runs) = pool.install(|| -> Result<_, ScenarioError> {
        let plants: Vec<PlantRun> = plant_seeds
            .par_iter()
            .map(|&seed| simulate_plant(config, seed))
            .collect::<Result<_, _>>()?;
        let jobs: Vec<(Setting, usize)> = settings
            .iter()
            .flat_map(|s| (0..config.n_scenarios).map(move |n| (*s, n)))
            .collect();
        let runs: Vec<RunResult> = jobs
            .par_iter()
            .map(|(s, n)| run_setting(config, s, *n, &initial_states[*n], &plants[*n]))
            .collect::<Result<_, _>>()?;
        Ok((plants, runs))
    })?;
    drop(plants);

    let indicators = indicators(&runs)?;
    Ok(ExperimentResult {
        config: config.clone(),
        plant_seeds,
        initial_states_seed: init_seed,
        initial_states,
        runs,
        indicators,
    })
}

/// One (setting, scenario) pair, seeded exactly as in the full experiment.
pub fn run_single(config: &ScenarioConfig, setting_id: usize, scenario_id: usize) -> Result<RunResult, ScenarioError> {
    config.validate()?;
    let setting = config
        .settings()
        .into_iter()
        .find(|s| s.id == setting_id)
        .ok_or_else(|| ScenarioError::Config(format!("no setting {setting_id}")))?;
    if scenario_id >= config.n_scenarios {
        return Err(ScenarioError::Config(format!(
            "scenario {scenario_id} out of range 0..{}",
            config.n_scenarios
        )));
    }
    let x_hat0 = sample_initial_states(config, initial_states_seed(config.master_seed))[scenario_id];
    let plant = simulate_plant(config, plant_seed(config.master_seed, scenario_id))?;
    run_setting(config, &setting, scenario_id, &x_hat0, &plant)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn input_profile_examples() {
        assert!((input_profile(0.0) - 0.5).abs() < 1e-15);
        assert!((input_profile(std::f64::consts::FRAC_PI_2) - 1.5).abs() < 1e-15);
        for i in 0..1000 {
            let u = input_profile(i as f64 * 0.013);
            assert!((0.5..=1.5).contains(&u));
        }
    }

    #[test]
    fn default_config_is_valid() {
        let c = ScenarioConfig::default();
        c.validate().unwrap();
        assert_eq!(c.settings().len(), 5);
        let s5 = c.settings()[4];
        assert_eq!(c.rate_state(&s5).unwrap().delta, 10);
        assert_eq!(c.rate_state(&c.settings()[1]).unwrap().delta, 0);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let c = ScenarioConfig {
            horizon: 3000,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = ScenarioConfig {
            q_min: 1,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = ScenarioConfig {
            master_seed: u64::MAX,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::default();
        c.settings_adaptive.pop();
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::default();
        c.box_lower[2] = 50.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn noiseless_plant_outputs_first_state() {
        let c = ScenarioConfig {
            noise_variance: 0.0,
            n_sim: 300,
            ..Default::default()
        };
        let p = simulate_plant(&c, 1).unwrap();
        assert_eq!(p.states.len(), 301);
        for (x, y) in p.states.iter().zip(p.log.outputs()) {
            assert_eq!(x[0], y[0]);
        }
    }

    #[test]
    fn plant_is_deterministic_per_seed() {
        let c = ScenarioConfig {
            n_sim: 300,
            ..Default::default()
        };
        assert_eq!(simulate_plant(&c, 9).unwrap(), simulate_plant(&c, 9).unwrap());
        assert_ne!(simulate_plant(&c, 9).unwrap().log, simulate_plant(&c, 10).unwrap().log);
    }

    #[test]
    fn noise_variance_matches_configuration() {
        let c = ScenarioConfig::default();
        let p = simulate_plant(&c, 3).unwrap();
        let e: Vec<f64> = p.states.iter().zip(p.log.outputs()).map(|(x, y)| y[0] - x[0]).collect();
        let mean = e.iter().sum::<f64>() / e.len() as f64;
        let var = e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (e.len() - 1) as f64;
        assert!((var - 0.03).abs() < 0.2 * 0.03, "variance {var}");
    }

    #[test]
    fn initial_states_lie_in_range() {
        let c = ScenarioConfig::default();
        let states = sample_initial_states(&c, 77);
        assert_eq!(states.len(), 50);
        for s in &states {
            for i in 0..3 {
                let x0 = c.x0_true[i];
                assert!(s[i] >= 0.2 * x0 && s[i] <= 2.0 * x0);
            }
        }
        assert_eq!(states, sample_initial_states(&c, 77));
    }

    #[test]
    fn seeds_are_distinct_per_stream_and_index() {
        let a = plant_seed(1, 0);
        assert_ne!(a, plant_seed(1, 1));
        assert_ne!(a, plant_seed(2, 0));
        assert_ne!(a, initial_states_seed(1));
    }

    fn fake_run(setting_id: usize, scenario_id: usize, costs: Vec<f64>) -> RunResult {
        RunResult {
            setting_id,
            scenario_id,
            x_hat0: [0.0; 3],
            q_series: vec![20; costs.len()],
            error_series: vec![[0.0; 3]; costs.len()],
            cost_series: costs,
            cycles: Vec::new(),
        }
    }

    #[test]
    fn indicator_examples() {
        let base = vec![1.0, 2.0, 4.0];
        let runs = vec![
            fake_run(1, 0, base.clone()),
            fake_run(1, 1, vec![3.0, 3.0, 5.0]),
            fake_run(2, 0, base.iter().map(|v| 2.0 * v).collect()),
            fake_run(2, 1, vec![6.0, 6.0, 10.0]),
        ];
        let ind = indicators(&runs).unwrap();
        assert_eq!(
            ind[0],
            Indicator {
                setting_id: 1,
                m: 0.0,
                sigma: 0.0
            }
        );
        assert!((ind[1].m - 1.0).abs() < 1e-15);
        assert!(ind[1].sigma.abs() < 1e-15);

        let mut reversed = runs.clone();
        reversed.reverse();
        assert_eq!(indicators(&reversed).unwrap(), ind);

        let scaled: Vec<RunResult> = runs
            .iter()
            .map(|r| {
                fake_run(
                    r.setting_id,
                    r.scenario_id,
                    r.cost_series.iter().map(|v| v * 8.0).collect(),
                )
            })
            .collect();
        let s = indicators(&scaled).unwrap();
        assert!((s[1].m - ind[1].m).abs() < 1e-15);
    }

    #[test]
    fn misaligned_runs_are_rejected() {
        let runs = vec![fake_run(1, 0, vec![1.0, 2.0]), fake_run(2, 0, vec![1.0])];
        assert!(matches!(indicators(&runs), Err(ScenarioError::Alignment(_))));
        let runs = vec![
            fake_run(1, 0, vec![1.0]),
            fake_run(1, 1, vec![1.0]),
            fake_run(2, 0, vec![1.0]),
        ];
        assert!(matches!(indicators(&runs), Err(ScenarioError::Alignment(_))));
    }
}
