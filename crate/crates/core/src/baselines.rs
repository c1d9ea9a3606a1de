//! Reference predictors: per-state means and lag-feature boosted trees.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbt::{gbt_fit, GbtConfig, GbtModel};
use crate::preprocess::{PreprocessedSeries, SleepState};
use crate::tensor::Tensor;

pub const LAG_MINUTES: usize = 120;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanBaseline {
    pub person_id: String,
    pub awake_mean: f64,
    /// Asleep and restless minutes pooled.
    pub asleep_mean: f64,
}

/// Means of observed whitened heart rate by state. A state with no
/// observed minutes falls back to the overall mean.
pub fn fit_mean_baseline(series: &PreprocessedSeries) -> Result<MeanBaseline> {
    let mut sums = [(0.0, 0usize); 2];
    let hr = series.hr.data();
    for (t, &m) in series.loss_mask.data().iter().enumerate() {
        if m > 0.0 {
            let s = &mut sums[usize::from(series.sleep_state(t).is_sleeping())];
            s.0 += hr[t];
            s.1 += 1;
        }
    }
    let n = sums[0].1 + sums[1].1;
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    let overall = (sums[0].0 + sums[1].0) / n as f64;
    let mean = |(s, c): (f64, usize)| if c > 0 { s / c as f64 } else { overall };
    Ok(MeanBaseline {
        person_id: series.person_id.clone(),
        awake_mean: mean(sums[0]),
        asleep_mean: mean(sums[1]),
    })
}

pub fn predict_mean_baseline(model: &MeanBaseline, sleep: &[SleepState]) -> Vec<f64> {
    sleep
        .iter()
        .map(|s| if s.is_sleeping() { model.asleep_mean } else { model.awake_mean })
        .collect()
}

fn check_activity(activity: &Tensor) -> Result<(usize, usize)> {
    match *activity.shape() {
        [c, t] => Ok((c, t)),
        _ => Err(Error::ShapeMismatch {
            op: "lag features",
            expected: vec![3, 0],
            got: activity.shape().to_vec(),
        }),
    }
}

/// Writes the `lag` minutes before `t`, channel-major, into `out`.
/// Minutes before the series start read as zero.
pub fn lag_row(activity: &Tensor, t: usize, lag: usize, out: &mut [f64]) {
    let channels = activity.shape()[0];
    for c in 0..channels {
        let row = activity.row(c);
        let dst = &mut out[c * lag..(c + 1) * lag];
        let have = t.min(lag);
        dst[..lag - have].fill(0.0);
        dst[lag - have..].copy_from_slice(&row[t - have..t]);
    }
}

/// Feature matrix `[(T − lag) × channels·lag]`; row `t − lag` holds the
/// activity at minutes `t − lag .. t − 1`.
pub fn build_lag_features(activity: &Tensor, lag: usize) -> Result<Tensor> {
    let (c, t) = check_activity(activity)?;
    if t <= lag {
        return Err(Error::SeriesTooShort { len: t, window: lag + 1 });
    }
    let width = c * lag;
    let rows = t - lag;
    let mut data = vec![0.0; rows * width];
    for (r, out) in data.chunks_exact_mut(width).enumerate() {
        lag_row(activity, r + lag, lag, out);
    }
    Tensor::matrix(rows, width, data)
}

/// Training rows from observed minutes `lag..T`, every `stride`-th minute.
pub fn training_rows(series: &PreprocessedSeries, lag: usize, stride: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (c, t) = check_activity(&series.activity)?;
    if t <= lag {
        return Err(Error::SeriesTooShort { len: t, window: lag + 1 });
    }
    let width = c * lag;
    let mask = series.loss_mask.data();
    let hr = series.hr.data();
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut row = vec![0.0; width];
    for m in (lag..t).step_by(stride.max(1)) {
        if mask[m] > 0.0 {
            lag_row(&series.activity, m, lag, &mut row);
            x.extend_from_slice(&row);
            y.push(hr[m]);
        }
    }
    Ok((x, y))
}

/// Masked MSE of a lag-feature model over every observed minute.
pub fn gbt_series_mse(model: &GbtModel, series: &PreprocessedSeries, lag: usize) -> Result<f64> {
    let (c, _) = check_activity(&series.activity)?;
    if c * lag != model.n_features {
        return Err(Error::FeatureWidth {
            expected: model.n_features,
            got: c * lag,
        });
    }
    let mask = series.loss_mask.data();
    let hr = series.hr.data();
    let mut row = vec![0.0; c * lag];
    let (mut sse, mut n) = (0.0, 0usize);
    for (t, &m) in mask.iter().enumerate() {
        if m > 0.0 {
            lag_row(&series.activity, t, lag, &mut row);
            let d = model.predict_row(&row) - hr[t];
            sse += d * d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sse / n as f64)
}

fn series_mse(pred: &[f64], series: &PreprocessedSeries) -> Result<f64> {
    crate::autodiff::ops::masked_mse(
        &Tensor::from_vec(pred.to_vec()),
        &Tensor::from_vec(series.hr.data().to_vec()),
        &series.loss_mask,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    Mean,
    IndividualGbt,
    PopulationGbt,
}

impl BaselineMode {
    pub const ALL: [BaselineMode; 3] = [Self::Mean, Self::IndividualGbt, Self::PopulationGbt];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Mean => "mean",
            Self::IndividualGbt => "individual_gbt",
            Self::PopulationGbt => "population_gbt",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub gbt: GbtConfig,
    pub lag: usize,
    /// Every n-th observed minute becomes an individual-model training row.
    pub individual_stride: usize,
    /// Same for the pooled population model.
    pub population_stride: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            gbt: GbtConfig::regression(),
            lag: LAG_MINUTES,
            individual_stride: 4,
            population_stride: 60,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersonError {
    pub person_id: String,
    pub mode: BaselineMode,
    pub mse: f64,
}

/// Fits on each pair's first window and scores the second.
///
/// `population` supplies the pooled training series of the population
/// model; it is ignored by the other modes.
pub fn run_baselines(
    pairs: &[(PreprocessedSeries, PreprocessedSeries)],
    population: &[PreprocessedSeries],
    mode: BaselineMode,
    config: &BaselineConfig,
) -> Result<Vec<PersonError>> {
    let pooled = match mode {
        BaselineMode::PopulationGbt => Some(fit_population_gbt(population, config)?),
        _ => None,
    };
    pairs
        .iter()
        .map(|(w1, w2)| {
            let mse = match mode {
                BaselineMode::Mean => {
                    let m = fit_mean_baseline(w1)?;
                    let states: Vec<SleepState> = (0..w2.len()).map(|t| w2.sleep_state(t)).collect();
                    series_mse(&predict_mean_baseline(&m, &states), w2)?
                }
                BaselineMode::IndividualGbt => {
                    let m = fit_individual_gbt(w1, config)?;
                    gbt_series_mse(&m, w2, config.lag)?
                }
                BaselineMode::PopulationGbt => {
                    gbt_series_mse(pooled.as_ref().expect("fitted above"), w2, config.lag)?
                }
            };
            Ok(PersonError {
                person_id: w1.person_id.clone(),
                mode,
                mse,
            })
        })
        .collect()
}

fn fit_rows(x: Vec<f64>, y: &[f64], width: usize, config: &BaselineConfig) -> Result<GbtModel> {
    if y.is_empty() {
        return Err(Error::NoSamples);
    }
    gbt_fit(&Tensor::matrix(y.len(), width, x)?, y, &config.gbt)
}

pub fn fit_individual_gbt(series: &PreprocessedSeries, config: &BaselineConfig) -> Result<GbtModel> {
    let (x, y) = training_rows(series, config.lag, config.individual_stride)?;
    fit_rows(x, &y, series.activity.shape()[0] * config.lag, config)
}

pub fn fit_population_gbt(population: &[PreprocessedSeries], config: &BaselineConfig) -> Result<GbtModel> {
    let first = population.first().ok_or(Error::NoSamples)?;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for s in population {
        let (xs, ys) = training_rows(s, config.lag, config.population_stride)?;
        x.extend(xs);
        y.extend(ys);
    }
    fit_rows(x, &y, first.activity.shape()[0] * config.lag, config)
}
