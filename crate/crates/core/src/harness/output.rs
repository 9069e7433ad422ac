//! CSV series and JSON summaries of experiment results.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::regret_series;

use super::config::{ExperimentConfig, Scenario};
use super::runner::{ReplicateResult, RunResult};

pub const CSV_HEADER: &str = "scenario,controller,replicate,k,measure,value";

/// Measure whose final value is aggregated in the summary.
pub fn headline_measure(scenario: Scenario) -> &'static str {
    match scenario {
        Scenario::Static => "grad_norm_sq",
        Scenario::TimeVarying => "regret_avg",
    }
}

fn stride_steps(horizon: usize, stride: usize) -> impl Iterator<Item = usize> {
    (0..horizon).filter(move |k| k % stride == 0 || *k + 1 == horizon)
}

/// Per-step series of one run, keyed by measure name.
fn series(result: &RunResult, run: &ReplicateResult) -> Result<Vec<(&'static str, Vec<f64>)>> {
    let rows = run.log.rows();
    let alpha = rows.iter().map(|r| r.alpha).collect();
    let eps_h = rows.iter().map(|r| r.eps_h).collect();
    Ok(match result.scenario {
        Scenario::Static => vec![
            ("grad_norm_sq", rows.iter().map(|r| r.grad_norm_sq).collect()),
            ("alpha", alpha),
            ("eps_H", eps_h),
        ],
        Scenario::TimeVarying => {
            let comparators = result
                .comparators
                .as_ref()
                .ok_or_else(|| Error::Config("time-varying result without comparators".into()))?;
            let regret_avg = regret_series(&run.log, comparators)?
                .into_iter()
                .enumerate()
                .map(|(k, r)| r / (k + 1) as f64)
                .collect();
            let tracking = rows
                .iter()
                .map(|r| r.tracking_err.ok_or(Error::MissingLogValue { k: r.k, what: "tracking error" }))
                .collect::<Result<Vec<_>>>()?;
            vec![
                ("regret_avg", regret_avg),
                ("tracking_err", tracking),
                ("alpha", alpha),
                ("eps_H", eps_h),
            ]
        }
    })
}

/// CSV text; rows ordered by run, then step, then measure.
pub fn render_csv(result: &RunResult, stride: usize) -> Result<String> {
    if stride == 0 {
        return Err(Error::Config("CSV stride must be positive".into()));
    }
    let scenario = result.scenario.name();
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for run in &result.runs {
        let series = series(result, run)?;
        for k in stride_steps(run.log.len(), stride) {
            for (name, values) in &series {
                writeln!(out, "{scenario},{},{},{k},{name},{}", run.controller, run.replicate, values[k])
                    .expect("writing to a string");
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ControllerSummary {
    pub controller: String,
    pub measure: String,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Final value of every replicate, in replicate order.
    pub finals: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub scenario: Scenario,
    pub config: ExperimentConfig,
    pub controllers: Vec<ControllerSummary>,
}

pub fn summarize(result: &RunResult, config: &ExperimentConfig) -> Result<Summary> {
    let measure = headline_measure(result.scenario);
    let mut controllers = Vec::new();
    for spec in &config.controllers {
        let mut finals = Vec::new();
        for run in result.runs_for(&spec.label) {
            let series = series(result, run)?;
            let (_, values) = series.iter().find(|(n, _)| *n == measure).expect("headline measure present");
            finals.push(*values.last().ok_or(Error::EmptyLog)?);
        }
        if finals.is_empty() {
            continue;
        }
        let mean = finals.iter().sum::<f64>() / finals.len() as f64;
        controllers.push(ControllerSummary {
            controller: spec.label.clone(),
            measure: measure.into(),
            mean,
            min: finals.iter().copied().fold(f64::INFINITY, f64::min),
            max: finals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            finals,
        });
    }
    Ok(Summary {
        scenario: result.scenario,
        config: config.clone(),
        controllers,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `<scenario>.csv` and `<scenario>.summary.json` into `dir`; returns both paths.
pub fn write_results(result: &RunResult, config: &ExperimentConfig, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let stem = result.scenario.name();
    let csv_path = dir.join(format!("{stem}.csv"));
    let summary_path = dir.join(format!("{stem}.summary.json"));
    write_file(&csv_path, &render_csv(result, config.csv_stride)?)?;
    let summary = serde_json::to_string_pretty(&summarize(result, config)?).map_err(|e| Error::Config(e.to_string()))?;
    write_file(&summary_path, &summary)?;
    Ok((csv_path, summary_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::runner::run_static_experiment;

    #[test]
    fn stride_keeps_first_and_last() {
        let ks: Vec<_> = stride_steps(7, 3).collect();
        assert_eq!(ks, vec![0, 3, 6]);
        let ks: Vec<_> = stride_steps(8, 3).collect();
        assert_eq!(ks, vec![0, 3, 6, 7]);
    }

    #[test]
    fn summary_mean_matches_csv_finals() {
        let mut cfg = ExperimentConfig::static_benchmark();
        cfg.horizon = 50;
        cfg.replicates = 3;
        cfg.csv_stride = 7;
        let res = run_static_experiment(&cfg).unwrap();
        let csv = render_csv(&res, cfg.csv_stride).unwrap();
        assert!(csv.starts_with(CSV_HEADER));
        let summary = summarize(&res, &cfg).unwrap();
        for s in &summary.controllers {
            let finals: Vec<f64> = csv
                .lines()
                .skip(1)
                .map(|l| l.split(',').collect::<Vec<_>>())
                .filter(|f| f[1] == s.controller && f[3] == "49" && f[4] == "grad_norm_sq")
                .map(|f| f[5].parse().unwrap())
                .collect();
            assert_eq!(finals, s.finals);
            assert_eq!(finals.iter().sum::<f64>() / finals.len() as f64, s.mean);
        }
    }

    #[test]
    fn unwritable_directory_is_an_io_error() {
        let mut cfg = ExperimentConfig::static_benchmark();
        cfg.horizon = 2;
        cfg.replicates = 1;
        let res = run_static_experiment(&cfg).unwrap();
        let file = tempfile::NamedTempFile::new().unwrap();
        let err = write_results(&res, &cfg, &file.path().join("sub")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
