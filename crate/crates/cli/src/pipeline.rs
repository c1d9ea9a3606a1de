//! In-memory pipeline steps shared by the commands.

use std::collections::HashMap;

use cardiosig_core::baselines::{run_baselines, BaselineConfig, BaselineMode, PersonError};
use cardiosig_core::eval::{
    consistency_from_signatures, downstream_task, signatures, ConsistencyPerson, ConsistencyResult, DownstreamResult,
    DownstreamTask, ExperimentData,
};
use cardiosig_core::model::ModelParams;
use cardiosig_core::preprocess::{
    assign_splits, build_channels, compute_rhr, eligibility_filter, PersonMeta, RawMinuteSeries, Split,
};
use cardiosig_core::rng::derive_seed;
use cardiosig_core::synth::LatentPhysiology;
use cardiosig_core::Error;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io::Demographics;

fn index_series(series: &[RawMinuteSeries]) -> HashMap<(&str, &str), &RawMinuteSeries> {
    series
        .iter()
        .map(|s| ((s.person_id.as_str(), s.window_label.as_str()), s))
        .collect()
}

/// Eligibility, split assignment and resting heart rate.
///
/// A person needs an eligible first window to be kept; an eligible second
/// window as well makes them a validation person. Persons are returned in
/// demographics order.
pub fn preprocess(
    series: &[RawMinuteSeries],
    demographics: &[Demographics],
    windows: &[String],
    seed: u64,
) -> Result<Vec<PersonMeta>> {
    let by_key = index_series(series);
    let eligible = |id: &str, w: &str| {
        by_key
            .get(&(id, w))
            .is_some_and(|s| eligibility_filter(&s.daily_reported_minutes()))
    };
    let mut kept = Vec::new();
    for d in demographics {
        if !eligible(&d.person_id, &windows[0]) {
            continue;
        }
        let n_windows = if eligible(&d.person_id, &windows[1]) { 2 } else { 1 };
        kept.push((d, n_windows));
    }
    let ids: Vec<(String, usize)> = kept.iter().map(|(d, n)| (d.person_id.clone(), *n)).collect();
    let splits = assign_splits(&ids, seed);
    Ok(kept
        .iter()
        .zip(splits)
        .map(|((d, _), (_, split))| PersonMeta {
            person_id: d.person_id.clone(),
            age: d.age,
            bmi: d.bmi,
            rhr: compute_rhr(by_key[&(d.person_id.as_str(), windows[0].as_str())]).unwrap_or(f64::NAN),
            split,
        })
        .collect())
}

/// Model-ready channels grouped by split: first windows for training and
/// tuning, (first, second) window pairs for validation.
pub fn experiment_data(series: &[RawMinuteSeries], persons: &[PersonMeta], windows: &[String]) -> Result<ExperimentData> {
    let by_key = index_series(series);
    let channels = |id: &str, w: &str| -> Result<_> {
        let raw = by_key
            .get(&(id, w))
            .ok_or_else(|| CliError::Config(format!("person {id} has no data for window {w}")))?;
        Ok(build_channels(raw)?)
    };
    let mut data = ExperimentData::default();
    for p in persons {
        let first = channels(&p.person_id, &windows[0])?;
        match p.split {
            Split::Train => data.train.push(first),
            Split::Tune => data.tune.push(first),
            Split::Validation => data.validation.push((first, channels(&p.person_id, &windows[1])?)),
        }
    }
    if data.validation.is_empty() {
        return Err(CliError::Config(format!("no person has an eligible {} window", windows[1])));
    }
    Ok(data)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencySummary {
    pub persons: usize,
    pub median_ratio: f64,
    pub mean_own_mse: f64,
    pub mean_other_mse: f64,
    pub wilcoxon_v: f64,
    pub p_value: f64,
    pub exact: bool,
}

impl From<&ConsistencyResult> for ConsistencySummary {
    fn from(c: &ConsistencyResult) -> Self {
        let n = c.persons.len() as f64;
        Self {
            persons: c.persons.len(),
            median_ratio: c.median_ratio,
            mean_own_mse: c.mean_own_mse(),
            mean_other_mse: c.persons.iter().map(|p| p.other_mse).sum::<f64>() / n,
            wilcoxon_v: c.wilcoxon.v,
            p_value: c.wilcoxon.p_value,
            exact: c.wilcoxon.exact,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DownstreamEntry {
    pub task: DownstreamTask,
    pub seed: u64,
    pub persons: usize,
    pub signature_auc: f64,
    pub rhr_auc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedTask {
    pub task: DownstreamTask,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DownstreamReport {
    pub results: Vec<DownstreamEntry>,
    pub skipped: Vec<SkippedTask>,
}

/// Combined evaluation report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub validation_persons: usize,
    /// Window-1 error with the window-1 signature.
    pub model_window1_mse: f64,
    /// Window-2 error with the window-1 signature.
    pub model_mse: f64,
    pub mean_baseline_mse: f64,
    pub individual_gbt_mse: f64,
    pub population_gbt_mse: f64,
    pub consistency: ConsistencySummary,
    pub downstream: DownstreamReport,
}

/// Everything behind a [`Report`], kept for the CSV side files.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub report: Report,
    pub signatures: Vec<(String, String, Vec<f64>)>,
    pub model_window1: Vec<f64>,
    pub baselines: Vec<PersonError>,
    pub consistency: Vec<ConsistencyPerson>,
    pub downstream: Vec<DownstreamResult>,
}

pub struct EvalInputs<'a> {
    pub params: &'a ModelParams,
    pub data: &'a ExperimentData,
    pub persons: &'a [PersonMeta],
    /// Ground truth for the fitness task; the task is skipped without it.
    pub latent: Option<&'a [(String, LatentPhysiology)]>,
    pub baselines: &'a BaselineConfig,
    pub downstream_seeds: &'a [u64],
    pub seed: u64,
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Model and baseline errors on the validation persons, signature
/// consistency and the downstream tasks.
pub fn evaluate(inputs: &EvalInputs) -> Result<Evaluation> {
    let EvalInputs { params, data, .. } = *inputs;
    let pairs = &data.validation;
    let first = data.validation_first();
    let sigs = signatures(params, &first)?;

    let mut model_window1 = Vec::with_capacity(pairs.len());
    for ((w1, _), sig) in pairs.iter().zip(&sigs) {
        model_window1.push(cardiosig_core::model::reconstruction_mse(params, sig, w1)?);
    }
    let consistency = consistency_from_signatures(params, &sigs, pairs, derive_seed(inputs.seed, &[1]))?;

    let mut baselines = Vec::new();
    let mut baseline_mse = [0.0; 3];
    for (i, mode) in BaselineMode::ALL.into_iter().enumerate() {
        let errors = run_baselines(pairs, &data.train, mode, inputs.baselines)?;
        baseline_mse[i] = mean(errors.iter().map(|e| e.mse));
        baselines.extend(errors);
    }

    let (downstream_report, downstream) = run_downstream(inputs, &sigs)?;
    let report = Report {
        validation_persons: pairs.len(),
        model_window1_mse: mean(model_window1.iter().copied()),
        model_mse: consistency.mean_own_mse(),
        mean_baseline_mse: baseline_mse[0],
        individual_gbt_mse: baseline_mse[1],
        population_gbt_mse: baseline_mse[2],
        consistency: ConsistencySummary::from(&consistency),
        downstream: downstream_report,
    };
    Ok(Evaluation {
        report,
        signatures: first
            .iter()
            .zip(sigs)
            .map(|(s, v)| (s.person_id.clone(), s.window_label.clone(), v))
            .collect(),
        model_window1,
        baselines,
        consistency: consistency.persons,
        downstream,
    })
}

fn run_downstream(inputs: &EvalInputs, sigs: &[Vec<f64>]) -> Result<(DownstreamReport, Vec<DownstreamResult>)> {
    let meta: HashMap<&str, &PersonMeta> = inputs.persons.iter().map(|p| (p.person_id.as_str(), p)).collect();
    let latent: Option<HashMap<&str, &LatentPhysiology>> =
        inputs.latent.map(|l| l.iter().map(|(id, l)| (id.as_str(), l)).collect());

    // Persons without a resting heart rate cannot enter either feature set.
    let mut rows = Vec::new();
    for ((w1, _), sig) in inputs.data.validation.iter().zip(sigs) {
        let p = meta
            .get(w1.person_id.as_str())
            .ok_or_else(|| CliError::UnknownPerson(w1.person_id.clone()))?;
        if p.rhr.is_finite() {
            let fitness = latent.as_ref().and_then(|l| l.get(w1.person_id.as_str())).map(|l| l.fitness);
            rows.push((sig.clone(), p, fitness));
        }
    }
    let features: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
    let rhr: Vec<f64> = rows.iter().map(|r| r.1.rhr).collect();

    let mut report = DownstreamReport::default();
    let mut results = Vec::new();
    for task in DownstreamTask::ALL {
        let values: Option<Vec<f64>> = match task {
            DownstreamTask::AgeAboveMedian => Some(rows.iter().map(|r| r.1.age).collect()),
            DownstreamTask::BmiAtLeast30 => Some(rows.iter().map(|r| r.1.bmi).collect()),
            DownstreamTask::FitnessAboveMedian => rows.iter().map(|r| r.2).collect(),
        };
        let Some(values) = values else {
            report.skipped.push(SkippedTask {
                task,
                reason: "no latent ground truth".into(),
            });
            continue;
        };
        let labels = task.labels(&values);
        for &seed in inputs.downstream_seeds {
            match downstream_task(&features, &rhr, &labels, task, derive_seed(inputs.seed, &[2, seed])) {
                Ok([sig, base]) => {
                    report.results.push(DownstreamEntry {
                        task,
                        seed,
                        persons: labels.len(),
                        signature_auc: sig.auc,
                        rhr_auc: base.auc,
                    });
                    results.extend([sig, base].map(|r| DownstreamResult { seed, ..r }));
                }
                Err(e @ Error::ClassStarvation { .. }) => {
                    report.skipped.push(SkippedTask {
                        task,
                        reason: e.to_string(),
                    });
                    break;
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok((report, results))
}
