//! Cross-window consistency, downstream prediction and the two sweeps.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbt::{gbt_fit, gbt_predict, GbtConfig};
use crate::model::{self, init_model, ModelConfig, ModelParams};
use crate::preprocess::PreprocessedSeries;
use crate::rng;
use crate::stats::{self, Wilcoxon};
use crate::tensor::Tensor;
use crate::train::{self, TrainConfig};

pub const MIN_PER_CLASS: usize = 20;
pub const DOWNSTREAM_TRAIN_FRACTION: f64 = 0.7;

/// Window-1 signature of every person.
pub fn signatures(params: &ModelParams, first: &[PreprocessedSeries]) -> Result<Vec<Vec<f64>>> {
    first
        .iter()
        .map(|s| model::encode(params, s).map(|(sig, _)| sig.values))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyPerson {
    pub person_id: String,
    pub other_id: String,
    pub own_mse: f64,
    pub other_mse: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyResult {
    pub persons: Vec<ConsistencyPerson>,
    pub median_ratio: f64,
    pub wilcoxon: Wilcoxon,
}

impl ConsistencyResult {
    pub fn mean_own_mse(&self) -> f64 {
        self.persons.iter().map(|p| p.own_mse).sum::<f64>() / self.persons.len() as f64
    }
}

/// For each person, one uniformly drawn other person (never themself).
pub fn draw_others(n: usize, seed: u64) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::TooFewPersons { needed: 2, got: n });
    }
    let mut r = rng::stream(seed, &[rng::TAG_PAIRING]);
    Ok((0..n)
        .map(|i| {
            let j = r.random_range(0..n - 1);
            if j >= i {
                j + 1
            } else {
                j
            }
        })
        .collect())
}

/// Own versus another person's window-1 signature applied to window 2.
pub fn consistency_test(
    params: &ModelParams,
    pairs: &[(PreprocessedSeries, PreprocessedSeries)],
    seed: u64,
) -> Result<ConsistencyResult> {
    if pairs.len() < 2 {
        return Err(Error::TooFewPersons { needed: 2, got: pairs.len() });
    }
    let first: Vec<PreprocessedSeries> = pairs.iter().map(|p| p.0.clone()).collect();
    let sigs = signatures(params, &first)?;
    consistency_from_signatures(params, &sigs, pairs, seed)
}

/// [`consistency_test`] with precomputed window-1 signatures.
pub fn consistency_from_signatures(
    params: &ModelParams,
    sigs: &[Vec<f64>],
    pairs: &[(PreprocessedSeries, PreprocessedSeries)],
    seed: u64,
) -> Result<ConsistencyResult> {
    let others = draw_others(pairs.len(), seed)?;
    let mut persons = Vec::with_capacity(pairs.len());
    for (i, (w1, w2)) in pairs.iter().enumerate() {
        let o = others[i];
        let own_mse = model::reconstruction_mse(params, &sigs[i], w2)?;
        let other_mse = model::reconstruction_mse(params, &sigs[o], w2)?;
        persons.push(ConsistencyPerson {
            person_id: w1.person_id.clone(),
            other_id: pairs[o].0.person_id.clone(),
            own_mse,
            other_mse,
            ratio: other_mse / own_mse,
        });
    }
    let ratios: Vec<f64> = persons.iter().map(|p| p.ratio).collect();
    let diffs: Vec<f64> = persons.iter().map(|p| p.other_mse - p.own_mse).collect();
    let wilcoxon = match stats::wilcoxon_signed_rank(&diffs) {
        Ok(w) => w,
        // Interchangeable signatures: no evidence either way.
        Err(Error::AllZeroDifferences) => Wilcoxon {
            v: 0.0,
            n: 0,
            p_value: 1.0,
            exact: true,
        },
        Err(e) => return Err(e),
    };
    Ok(ConsistencyResult {
        median_ratio: stats::median(&ratios).expect("at least two persons"),
        persons,
        wilcoxon,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DownstreamTask {
    AgeAboveMedian,
    #[serde(rename = "bmi_ge_30")]
    BmiAtLeast30,
    FitnessAboveMedian,
}

impl DownstreamTask {
    pub const ALL: [DownstreamTask; 3] = [Self::AgeAboveMedian, Self::BmiAtLeast30, Self::FitnessAboveMedian];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::AgeAboveMedian => "age_above_median",
            Self::BmiAtLeast30 => "bmi_ge_30",
            Self::FitnessAboveMedian => "fitness_above_median",
        }
    }

    /// Binary labels from the per-person value (age, BMI or fitness).
    pub fn labels(self, values: &[f64]) -> Vec<bool> {
        match self {
            Self::BmiAtLeast30 => values.iter().map(|&b| b >= 30.0).collect(),
            Self::AgeAboveMedian | Self::FitnessAboveMedian => {
                let m = stats::median(values).unwrap_or(0.0);
                values.iter().map(|&v| v > m).collect()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    Signature,
    Rhr,
}

impl FeatureSet {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Signature => "signature",
            Self::Rhr => "rhr",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DownstreamResult {
    pub task: DownstreamTask,
    pub features: FeatureSet,
    pub auc: f64,
    pub seed: u64,
}

/// Seeded, unstratified 70/30 split of `0..n` as (train, test).
pub fn split_indices(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, &[rng::TAG_DOWNSTREAM]));
    let n_train = libm::round(DOWNSTREAM_TRAIN_FRACTION * n as f64) as usize;
    let test = idx.split_off(n_train);
    (idx, test)
}

fn held_out_auc(features: &[Vec<f64>], labels: &[bool], split: &(Vec<usize>, Vec<usize>)) -> Result<f64> {
    let width = features[0].len();
    let gather = |rows: &[usize]| -> Result<Tensor> {
        let data = rows.iter().flat_map(|&i| features[i].iter().copied()).collect();
        Tensor::matrix(rows.len(), width, data)
    };
    let y: Vec<f64> = split.0.iter().map(|&i| f64::from(u8::from(labels[i]))).collect();
    let model = gbt_fit(&gather(&split.0)?, &y, &GbtConfig::classifier())?;
    let scores = gbt_predict(&model, &gather(&split.1)?)?;
    let test_labels: Vec<bool> = split.1.iter().map(|&i| labels[i]).collect();
    stats::auc(&scores, &test_labels)
}

/// Held-out AUC of a logistic boosted classifier, once on signatures and
/// once on resting heart rate alone, over the same split.
pub fn downstream_task(
    signatures: &[Vec<f64>],
    rhr: &[f64],
    labels: &[bool],
    task: DownstreamTask,
    seed: u64,
) -> Result<[DownstreamResult; 2]> {
    let n = labels.len();
    if signatures.len() != n || rhr.len() != n {
        return Err(Error::ShapeMismatch {
            op: "downstream_task",
            expected: alloc::vec![n],
            got: alloc::vec![signatures.len(), rhr.len()],
        });
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let fewest = pos.min(n - pos);
    if fewest < MIN_PER_CLASS {
        return Err(Error::ClassStarvation {
            needed: MIN_PER_CLASS,
            got: fewest,
        });
    }
    let split = split_indices(n, seed);
    let rhr_features: Vec<Vec<f64>> = rhr.iter().map(|&r| alloc::vec![r]).collect();
    let result = |features, auc| DownstreamResult {
        task,
        features,
        auc,
        seed,
    };
    Ok([
        result(FeatureSet::Signature, held_out_auc(signatures, labels, &split)?),
        result(FeatureSet::Rhr, held_out_auc(&rhr_features, labels, &split)?),
    ])
}

/// Series grouped by role.
#[derive(Clone, Debug, Default)]
pub struct ExperimentData {
    pub train: Vec<PreprocessedSeries>,
    pub tune: Vec<PreprocessedSeries>,
    /// Validation persons as (first window, second window).
    pub validation: Vec<(PreprocessedSeries, PreprocessedSeries)>,
}

impl ExperimentData {
    pub fn validation_first(&self) -> Vec<PreprocessedSeries> {
        self.validation.iter().map(|p| p.0.clone()).collect()
    }
}

/// Mean validation error on window 1 (own window-1 signature) and window 2
/// (window-1 signature applied to window 2).
pub fn validation_errors(params: &ModelParams, validation: &[(PreprocessedSeries, PreprocessedSeries)]) -> Result<(f64, f64)> {
    if validation.is_empty() {
        return Err(Error::NoSamples);
    }
    let (mut e1, mut e2) = (0.0, 0.0);
    for (w1, w2) in validation {
        let (sig, _) = model::encode(params, w1)?;
        e1 += model::reconstruction_mse(params, &sig.values, w1)?;
        e2 += model::reconstruction_mse(params, &sig.values, w2)?;
    }
    let n = validation.len() as f64;
    Ok((e1 / n, e2 / n))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    SignatureSize,
    TrainFraction,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::SignatureSize => "signature_size",
            Self::TrainFraction => "train_fraction",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "signature_size" => Some(Self::SignatureSize),
            "train_fraction" => Some(Self::TrainFraction),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub setting: f64,
    pub train_persons: usize,
    pub window1_error: f64,
    pub window2_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

fn check_increasing(settings: &[f64]) -> Result<()> {
    if settings.is_empty() || settings.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidConfig("sweep settings must be non-empty and strictly increasing".into()));
    }
    Ok(())
}

fn sweep_cell(
    data: &ExperimentData,
    train_set: &[PreprocessedSeries],
    signature_size: usize,
    config: &TrainConfig,
    model_seed: u64,
) -> Result<(f64, f64)> {
    let init = init_model(ModelConfig::new(signature_size), model_seed)?;
    let (params, _) = train::train(init, train_set, &data.tune, config)?;
    validation_errors(&params, &data.validation)
}

/// One model per signature size, all sharing the data and seeds.
pub fn sweep_signature_size(
    sizes: &[usize],
    data: &ExperimentData,
    config: &TrainConfig,
    model_seed: u64,
) -> Result<SweepTable> {
    let settings: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    check_increasing(&settings)?;
    let rows = sizes
        .iter()
        .map(|&s| {
            let (w1, w2) = sweep_cell(data, &data.train, s, config, model_seed)?;
            Ok(SweepRow {
                setting: s as f64,
                train_persons: data.train.len(),
                window1_error: w1,
                window2_error: w2,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SweepTable {
        axis: SweepAxis::SignatureSize,
        rows,
    })
}

/// Nested training subsets: one seeded order, each fraction takes a prefix
/// of `ceil(fraction · n)` persons.
pub fn nested_subsets(n: usize, fractions: &[f64], seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, &[rng::TAG_SUBSET]));
    fractions
        .iter()
        .map(|&f| {
            let k = (libm::ceil(f * n as f64 - 1e-9) as usize).min(n);
            let mut subset = order[..k].to_vec();
            subset.sort_unstable();
            subset
        })
        .collect()
}

pub fn sweep_train_fraction(
    fractions: &[f64],
    data: &ExperimentData,
    config: &TrainConfig,
    signature_size: usize,
    seed: u64,
) -> Result<SweepTable> {
    check_increasing(fractions)?;
    if fractions[0] <= 0.0 || fractions[fractions.len() - 1] > 1.0 {
        return Err(Error::InvalidConfig("fractions must lie in (0, 1]".into()));
    }
    let subsets = nested_subsets(data.train.len(), fractions, seed);
    if subsets[0].len() < config.batch_size {
        return Err(Error::TooFewPersons {
            needed: config.batch_size,
            got: subsets[0].len(),
        });
    }
    let rows = fractions
        .iter()
        .zip(&subsets)
        .map(|(&f, subset)| {
            let train_set: Vec<PreprocessedSeries> = subset.iter().map(|&i| data.train[i].clone()).collect();
            let (w1, w2) = sweep_cell(data, &train_set, signature_size, config, seed)?;
            Ok(SweepRow {
                setting: f,
                train_persons: subset.len(),
                window1_error: w1,
                window2_error: w2,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SweepTable {
        axis: SweepAxis::TrainFraction,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;

    fn series(id: &str, t: usize, seed: u64) -> PreprocessedSeries {
        let mut r = rng::stream(seed, &[3]);
        PreprocessedSeries {
            person_id: id.into(),
            window_label: "w".into(),
            activity: Tensor::matrix(3, t, (0..3 * t).map(|_| r.random_range(0.0..1.0)).collect()).unwrap(),
            hr: Tensor::matrix(1, t, (0..t).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap(),
            loss_mask: Tensor::full(&[t], 1.0),
            hr_mean: 60.0,
            hr_std: 5.0,
        }
    }

    #[test]
    fn identical_persons_give_unit_ratios() {
        let p = init_model(ModelConfig::new(4), 0).unwrap();
        let w1 = series("a", 60, 1);
        let w2 = series("a", 60, 2);
        let mut b = (w1.clone(), w2.clone());
        b.0.person_id = "b".into();
        let pairs = vec![(w1, w2), b];
        let c = consistency_test(&p, &pairs, 0).unwrap();
        assert!(c.persons.iter().all(|q| q.ratio == 1.0));
        assert_eq!(c.median_ratio, 1.0);
        assert_eq!(c.wilcoxon.p_value, 1.0);
        assert!(matches!(
            consistency_test(&p, &pairs[..1], 0),
            Err(Error::TooFewPersons { .. })
        ));
    }

    #[test]
    fn consistency_is_seeded() {
        let p = init_model(ModelConfig::new(4), 0).unwrap();
        let pairs: Vec<_> = (0..6)
            .map(|i| (series(&format!("p{i}"), 50, i), series(&format!("p{i}"), 50, 100 + i)))
            .collect();
        let a = consistency_test(&p, &pairs, 3).unwrap();
        assert_eq!(a, consistency_test(&p, &pairs, 3).unwrap());
        assert!(a.persons.iter().all(|q| q.person_id != q.other_id && q.ratio > 0.0));
        let max_v = 6.0 * 7.0 / 2.0;
        assert!((0.0..=max_v).contains(&a.wilcoxon.v));
    }

    #[test]
    fn others_are_never_self() {
        let o = draw_others(50, 1).unwrap();
        assert!(o.iter().enumerate().all(|(i, &j)| i != j && j < 50));
        assert_eq!(o, draw_others(50, 1).unwrap());
    }

    #[test]
    fn informative_coordinate_gives_perfect_auc() {
        let mut r = rng::stream(0, &[]);
        let n = 100;
        let sigs: Vec<Vec<f64>> = (0..n).map(|_| vec![r.random::<f64>(), r.random::<f64>()]).collect();
        let labels: Vec<bool> = sigs.iter().map(|s| s[0] > 0.5).collect();
        let rhr: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        let [sig, rh] = downstream_task(&sigs, &rhr, &labels, DownstreamTask::FitnessAboveMedian, 4).unwrap();
        assert_eq!(sig.auc, 1.0);
        assert_eq!(sig.features, FeatureSet::Signature);
        assert_eq!(rh.features, FeatureSet::Rhr);
        let again = downstream_task(&sigs, &rhr, &labels, DownstreamTask::FitnessAboveMedian, 4).unwrap();
        assert_eq!(again, [sig, rh]);
    }

    #[test]
    fn starved_classes_are_rejected() {
        let sigs = vec![vec![0.0]; 40];
        let labels: Vec<bool> = (0..40).map(|i| i < 10).collect();
        assert!(matches!(
            downstream_task(&sigs, &[0.0; 40], &labels, DownstreamTask::BmiAtLeast30, 0),
            Err(Error::ClassStarvation { needed: 20, got: 10 })
        ));
    }

    #[test]
    fn split_is_seventy_thirty() {
        let (a, b) = split_indices(100, 9);
        assert_eq!((a.len(), b.len()), (70, 30));
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn task_labels() {
        assert_eq!(DownstreamTask::BmiAtLeast30.labels(&[29.9, 30.0, 35.0]), [false, true, true]);
        assert_eq!(DownstreamTask::AgeAboveMedian.labels(&[20.0, 40.0, 30.0]), [false, true, false]);
    }

    #[test]
    fn subsets_are_nested() {
        let s = nested_subsets(200, &[0.01, 0.05, 0.1, 0.5, 1.0], 2);
        assert_eq!(s.iter().map(Vec::len).collect::<Vec<_>>(), [2, 10, 20, 100, 200]);
        for w in s.windows(2) {
            assert!(w[0].iter().all(|i| w[1].contains(i)));
        }
    }

    #[test]
    fn sweeps_validate_settings() {
        let data = ExperimentData::default();
        let c = TrainConfig::default();
        assert!(sweep_signature_size(&[8, 4], &data, &c, 0).is_err());
        let data = ExperimentData {
            train: (0..10).map(|i| series("t", 30, i)).collect(),
            ..ExperimentData::default()
        };
        assert!(matches!(
            sweep_train_fraction(&[0.1, 1.0], &data, &c, 4, 0),
            Err(Error::TooFewPersons { needed: 16, got: 1 })
        ));
    }

    #[test]
    fn tiny_sweep_emits_one_row_per_size() {
        let data = ExperimentData {
            train: (0..4).map(|i| series("t", 40, i)).collect(),
            tune: (0..2).map(|i| series("u", 40, 10 + i)).collect(),
            validation: (0..3).map(|i| (series("v", 40, 20 + i), series("v", 40, 30 + i))).collect(),
        };
        let c = TrainConfig {
            max_epochs: 1,
            window_length: 32,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let t = sweep_signature_size(&[4, 16], &data, &c, 0).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert!(t.rows.iter().all(|r| r.window1_error.is_finite() && r.window2_error >= 0.0));
        assert_eq!(t, sweep_signature_size(&[4, 16], &data, &c, 0).unwrap());
    }
}
