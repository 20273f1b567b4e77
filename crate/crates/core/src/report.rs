//! Result files: one CSV per run, a JSON summary and the plot-data CSV.
//!
//! Every file is written to a temporary sibling and renamed into place, so a
//! failed run never leaves a truncated file behind.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::scenario::{ExperimentResult, Indicator, RunResult, ScenarioConfig};

pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn run_file_name(run: &RunResult) -> String {
    format!("run_s{}_n{:03}.csv", run.setting_id, run.scenario_id)
}

/// `k,J,q,err_x1,err_x2,err_x3`, with `k = 1 ..= N_sim - N`.
pub fn run_csv(run: &RunResult) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["k", "J", "q", "err_x1", "err_x2", "err_x3"])
        .expect("in-memory write");
    for (i, ((j, q), e)) in run
        .cost_series
        .iter()
        .zip(&run.q_series)
        .zip(&run.error_series)
        .enumerate()
    {
        w.write_record(&[
            (i + 1).to_string(),
            j.to_string(),
            q.to_string(),
            e[0].to_string(),
            e[1].to_string(),
            e[2].to_string(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Circle chart data: center `m`, radius twice the variance.
pub fn plot_csv(indicators: &[Indicator]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["setting", "m", "sigma", "radius"])
        .expect("in-memory write");
    for i in indicators {
        w.write_record(&[
            i.setting_id.to_string(),
            i.m.to_string(),
            i.sigma.to_string(),
            (2.0 * i.sigma).to_string(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

#[derive(Serialize)]
struct SettingSummary {
    id: usize,
    q_init: usize,
    adaptive: bool,
    m: f64,
    sigma: f64,
    mean_final_q: f64,
}

#[derive(Serialize)]
struct Seeds<'a> {
    master_seed: u64,
    initial_states_seed: u64,
    plant_seeds: &'a [u64],
}

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a ScenarioConfig,
    seeds: Seeds<'a>,
    initial_states: Vec<[f64; 3]>,
    settings: Vec<SettingSummary>,
}

pub fn summary_json(result: &ExperimentResult) -> Vec<u8> {
    let settings = result
        .config
        .settings()
        .into_iter()
        .zip(&result.indicators)
        .map(|(s, ind)| {
            let finals: Vec<f64> = result
                .runs
                .iter()
                .filter(|r| r.setting_id == s.id)
                .filter_map(|r| r.q_series.last().map(|&q| q as f64))
                .collect();
            SettingSummary {
                id: s.id,
                q_init: s.q_init,
                adaptive: s.adaptive,
                m: ind.m,
                sigma: ind.sigma,
                mean_final_q: finals.iter().sum::<f64>() / finals.len().max(1) as f64,
            }
        })
        .collect();
    let summary = Summary {
        config: &result.config,
        seeds: Seeds {
            master_seed: result.config.master_seed,
            initial_states_seed: result.initial_states_seed,
            plant_seeds: &result.plant_seeds,
        },
        initial_states: result.initial_states.iter().map(|x| [x[0], x[1], x[2]]).collect(),
        settings,
    };
    let mut bytes = serde_json::to_vec_pretty(&summary).expect("summary is serializable");
    bytes.push(b'\n');
    bytes
}

/// Writes every run CSV plus `summary.json` and `indicators.csv` into `dir`.
pub fn write_experiment(dir: &Path, result: &ExperimentResult) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(result.runs.len() + 2);
    for run in &result.runs {
        let p = dir.join(run_file_name(run));
        write_atomic(&p, &run_csv(run))?;
        written.push(p);
    }
    let p = dir.join("summary.json");
    write_atomic(&p, &summary_json(result))?;
    written.push(p);
    let p = dir.join("indicators.csv");
    write_atomic(&p, &plot_csv(&result.indicators))?;
    written.push(p);
    Ok(written)
}

pub fn write_run(dir: &Path, run: &RunResult) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let p = dir.join(run_file_name(run));
    write_atomic(&p, &run_csv(run))?;
    Ok(p)
}
