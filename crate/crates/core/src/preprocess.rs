//! Minute-level tracker data to model-ready channels.
//!
//! Activity becomes three channels (log-scaled steps, asleep bit, restless
//! bit); heart rate is whitened per person and collection window using only
//! the observed minutes, and missing minutes are filled with the person's
//! resting-awake level while being excluded from the loss through a mask.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

pub const MINUTES_PER_DAY: usize = 1440;
/// A day counts towards eligibility with at most four unreported hours.
pub const MIN_REPORTED_MINUTES_PER_DAY: u32 = 1440 - 240;
pub const MIN_ELIGIBLE_DAYS: usize = 10;
pub const MIN_RHR_MINUTES: usize = 30;
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SleepState {
    Awake,
    Asleep,
    Restless,
}

impl SleepState {
    pub fn as_str(self) -> &'static str {
        match self {
            SleepState::Awake => "awake",
            SleepState::Asleep => "asleep",
            SleepState::Restless => "restless",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "awake" => Some(SleepState::Awake),
            "asleep" => Some(SleepState::Asleep),
            "restless" => Some(SleepState::Restless),
            _ => None,
        }
    }

    pub fn is_sleeping(self) -> bool {
        !matches!(self, SleepState::Awake)
    }
}

/// One person's raw per-minute channels for one collection window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawMinuteSeries {
    pub person_id: String,
    pub window_label: String,
    pub start_minute: i64,
    pub steps: Vec<Option<u32>>,
    pub heart_rate: Vec<Option<f64>>,
    pub sleep_state: Vec<Option<SleepState>>,
}

impl RawMinuteSeries {
    pub fn new(
        person_id: String,
        window_label: String,
        start_minute: i64,
        steps: Vec<Option<u32>>,
        heart_rate: Vec<Option<f64>>,
        sleep_state: Vec<Option<SleepState>>,
    ) -> Result<Self> {
        let s = Self {
            person_id,
            window_label,
            start_minute,
            steps,
            heart_rate,
            sleep_state,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.steps.len();
        if t == 0 || self.heart_rate.len() != t || self.sleep_state.len() != t {
            return Err(Error::ShapeMismatch {
                op: "raw series",
                expected: vec![t, t, t],
                got: vec![self.steps.len(), self.heart_rate.len(), self.sleep_state.len()],
            });
        }
        if let Some(bad) = self.heart_rate.iter().flatten().find(|&&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::InvalidConfig(alloc::format!(
                "heart rate must be positive, got {bad}"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Minutes per calendar day (from the window start) with any channel reported.
    pub fn daily_reported_minutes(&self) -> Vec<u32> {
        let days = self.len().div_ceil(MINUTES_PER_DAY);
        let mut out = vec![0u32; days];
        for t in 0..self.len() {
            if self.steps[t].is_some() || self.heart_rate[t].is_some() || self.sleep_state[t].is_some() {
                out[t / MINUTES_PER_DAY] += 1;
            }
        }
        out
    }
}

/// Model-ready channels for one person and window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessedSeries {
    pub person_id: String,
    pub window_label: String,
    /// `[3 × T]`: transformed steps, asleep bit, restless bit.
    pub activity: Tensor,
    /// `[1 × T]` whitened heart rate, imputed where missing.
    pub hr: Tensor,
    /// `[T]`, 1 where heart rate was observed.
    pub loss_mask: Tensor,
    pub hr_mean: f64,
    pub hr_std: f64,
}

impl PreprocessedSeries {
    pub fn len(&self) -> usize {
        self.loss_mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loss_mask.is_empty()
    }

    pub fn observed(&self) -> usize {
        self.loss_mask.data().iter().filter(|&&m| m > 0.0).count()
    }

    /// Sleep state reconstructed from the two binary channels.
    pub fn sleep_state(&self, t: usize) -> SleepState {
        if self.activity.row(1)[t] > 0.5 {
            SleepState::Asleep
        } else if self.activity.row(2)[t] > 0.5 {
            SleepState::Restless
        } else {
            SleepState::Awake
        }
    }

    /// Contiguous minutes `start..start+len`.
    pub fn window(&self, start: usize, len: usize) -> Result<PreprocessedSeries> {
        if start + len > self.len() || len == 0 {
            return Err(Error::SeriesTooShort {
                len: self.len(),
                window: start + len,
            });
        }
        Ok(PreprocessedSeries {
            person_id: self.person_id.clone(),
            window_label: self.window_label.clone(),
            activity: self.activity.slice_cols(start, start + len),
            hr: self.hr.slice_cols(start, start + len),
            loss_mask: Tensor::from_vec(self.loss_mask.data()[start..start + len].to_vec()),
            hr_mean: self.hr_mean,
            hr_std: self.hr_std,
        })
    }

    /// Whitened value back in beats per minute.
    pub fn unwhiten(&self, z: f64) -> f64 {
        z * self.hr_std + self.hr_mean
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Tune,
    Validation,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Tune => "tune",
            Split::Validation => "validation",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "tune" => Some(Split::Tune),
            "validation" => Some(Split::Validation),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersonMeta {
    pub person_id: String,
    pub age: f64,
    pub bmi: f64,
    pub rhr: f64,
    pub split: Split,
}

/// `log(steps + 1) / 5`.
pub fn transform_steps(steps: i64) -> Result<f64> {
    if steps < 0 {
        return Err(Error::NegativeSteps(steps));
    }
    Ok(libm::log(steps as f64 + 1.0) / 5.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Whitened {
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// Standardizes with the population (divide-by-N) standard deviation.
pub fn whiten_hr(observed: &[f64]) -> Result<Whitened> {
    let (mean, std) = mean_std(observed)?;
    Ok(Whitened {
        values: observed.iter().map(|x| (x - mean) / std).collect(),
        mean,
        std,
    })
}

fn mean_std(xs: &[f64]) -> Result<(f64, f64)> {
    if xs.len() < 2 {
        return Err(Error::InsufficientObservations {
            needed: 2,
            got: xs.len(),
        });
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = libm::sqrt(var);
    if !(std > 1e-12 * mean.abs().max(1.0)) {
        return Err(Error::ZeroVariance);
    }
    Ok((mean, std))
}

/// `(asleep_bit, restless_bit)`.
pub fn encode_sleep(state: SleepState) -> (f64, f64) {
    match state {
        SleepState::Awake => (0.0, 0.0),
        SleepState::Asleep => (1.0, 0.0),
        SleepState::Restless => (0.0, 1.0),
    }
}

/// Builds the model channels for one raw series.
///
/// Missing steps count as 0 and missing sleep state as awake. Missing heart
/// rate is imputed with the mean over observed awake zero-step minutes (the
/// overall observed mean when there are none) and masked out of the loss.
pub fn build_channels(raw: &RawMinuteSeries) -> Result<PreprocessedSeries> {
    raw.validate()?;
    let t_len = raw.len();
    let observed: Vec<f64> = raw.heart_rate.iter().flatten().copied().collect();
    let (mean, std) = mean_std(&observed)?;

    let mut activity = vec![0.0; 3 * t_len];
    let mut rest_sum = 0.0;
    let mut rest_n = 0usize;
    for t in 0..t_len {
        let steps = raw.steps[t].unwrap_or(0);
        let state = raw.sleep_state[t].unwrap_or(SleepState::Awake);
        activity[t] = transform_steps(i64::from(steps))?;
        let (a, r) = encode_sleep(state);
        activity[t_len + t] = a;
        activity[2 * t_len + t] = r;
        if let Some(h) = raw.heart_rate[t] {
            if steps == 0 && state == SleepState::Awake {
                rest_sum += h;
                rest_n += 1;
            }
        }
    }
    let fill = if rest_n > 0 {
        (rest_sum / rest_n as f64 - mean) / std
    } else {
        0.0
    };

    let mut hr = Vec::with_capacity(t_len);
    let mut mask = Vec::with_capacity(t_len);
    for h in &raw.heart_rate {
        match h {
            Some(h) => {
                hr.push((h - mean) / std);
                mask.push(1.0);
            }
            None => {
                hr.push(fill);
                mask.push(0.0);
            }
        }
    }

    Ok(PreprocessedSeries {
        person_id: raw.person_id.clone(),
        window_label: raw.window_label.clone(),
        activity: Tensor::matrix(3, t_len, activity)?,
        hr: Tensor::matrix(1, t_len, hr)?,
        loss_mask: Tensor::from_vec(mask),
        hr_mean: mean,
        hr_std: std,
    })
}

/// At least ten days with no more than four unreported hours each.
pub fn eligibility_filter(reported_minutes_per_day: &[u32]) -> bool {
    reported_minutes_per_day
        .iter()
        .filter(|&&m| m >= MIN_REPORTED_MINUTES_PER_DAY)
        .count()
        >= MIN_ELIGIBLE_DAYS
}

/// Persons with two or more windows go to validation; the rest are split
/// train:tune at 0.8:0.2 by a seeded shuffle of the sorted ids.
pub fn assign_splits(persons: &[(String, usize)], seed: u64) -> Vec<(String, Split)> {
    let mut single: Vec<&str> = persons
        .iter()
        .filter(|(_, w)| *w < 2)
        .map(|(id, _)| id.as_str())
        .collect();
    single.sort_unstable();
    single.dedup();
    single.shuffle(&mut rng::stream(seed, &[rng::TAG_SPLIT]));
    let n_train = libm::round(single.len() as f64 * TRAIN_FRACTION) as usize;
    let train: alloc::collections::BTreeSet<&str> = single[..n_train].iter().copied().collect();

    persons
        .iter()
        .map(|(id, w)| {
            let split = if *w >= 2 {
                Split::Validation
            } else if train.contains(id.as_str()) {
                Split::Train
            } else {
                Split::Tune
            };
            (id.clone(), split)
        })
        .collect()
}

/// Resting heart rate: mean observed heart rate over asleep minutes.
pub fn compute_rhr(raw: &RawMinuteSeries) -> Result<f64> {
    let asleep: Vec<f64> = raw
        .heart_rate
        .iter()
        .zip(&raw.sleep_state)
        .filter_map(|(h, s)| match (h, s) {
            (Some(h), Some(SleepState::Asleep)) => Some(*h),
            _ => None,
        })
        .collect();
    if asleep.len() < MIN_RHR_MINUTES {
        return Err(Error::InsufficientSleep {
            needed: MIN_RHR_MINUTES,
            got: asleep.len(),
        });
    }
    Ok(asleep.iter().sum::<f64>() / asleep.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::string::ToString;
    use proptest::prelude::*;

    fn raw(steps: Vec<Option<u32>>, hr: Vec<Option<f64>>, sleep: Vec<Option<SleepState>>) -> RawMinuteSeries {
        RawMinuteSeries::new("p".into(), "2017-01".into(), 0, steps, hr, sleep).unwrap()
    }

    #[test]
    fn transform_steps_values() {
        assert_eq!(transform_steps(0).unwrap(), 0.0);
        assert!((transform_steps(99).unwrap() - 0.921034).abs() < 5e-7);
        assert_eq!(transform_steps(-1), Err(Error::NegativeSteps(-1)));
        assert!(transform_steps(50_000).unwrap() <= 2.17);
    }

    #[test]
    fn whiten_closed_form() {
        let w = whiten_hr(&[60.0, 70.0, 80.0]).unwrap();
        assert_eq!(w.mean, 70.0);
        assert!((w.std - 8.164966).abs() < 5e-7);
        let expected = [-1.224745, 0.0, 1.224745];
        for (a, e) in w.values.iter().zip(expected) {
            assert!((a - e).abs() < 5e-7);
        }
        assert_eq!(whiten_hr(&[72.0; 5]), Err(Error::ZeroVariance));
        assert!(matches!(whiten_hr(&[72.0]), Err(Error::InsufficientObservations { .. })));
    }

    #[test]
    fn sleep_encoding() {
        assert_eq!(encode_sleep(SleepState::Awake), (0.0, 0.0));
        assert_eq!(encode_sleep(SleepState::Asleep), (1.0, 0.0));
        assert_eq!(encode_sleep(SleepState::Restless), (0.0, 1.0));
    }

    #[test]
    fn fully_observed_series() {
        let hr: Vec<Option<f64>> = (0..50).map(|i| Some(60.0 + (i % 7) as f64)).collect();
        let r = raw(vec![Some(3); 50], hr.clone(), vec![Some(SleepState::Awake); 50]);
        let p = build_channels(&r).unwrap();
        assert!(p.loss_mask.data().iter().all(|&m| m == 1.0));
        let w = whiten_hr(&hr.iter().flatten().copied().collect::<Vec<_>>()).unwrap();
        assert_eq!(p.hr.data(), &w.values[..]);
    }

    #[test]
    fn missing_minutes_are_masked_and_imputed() {
        let mut hr: Vec<Option<f64>> = (0..100).map(|i| Some(60.0 + (i % 11) as f64)).collect();
        for i in 0..10 {
            hr[i * 9 + 3] = None;
        }
        let steps: Vec<Option<u32>> = (0..100).map(|i| Some(if i % 2 == 0 { 0 } else { 40 })).collect();
        let r = raw(steps, hr.clone(), vec![Some(SleepState::Awake); 100]);
        let p = build_channels(&r).unwrap();
        assert_eq!(p.loss_mask.data().iter().sum::<f64>(), 90.0);

        let rest: Vec<f64> = (0..100)
            .filter(|i| i % 2 == 0)
            .filter_map(|i| hr[i])
            .collect();
        let rest_mean = rest.iter().sum::<f64>() / rest.len() as f64;
        let fill = (rest_mean - p.hr_mean) / p.hr_std;
        for i in 0..10 {
            assert!((p.hr.data()[i * 9 + 3] - fill).abs() < 1e-12);
        }
    }

    #[test]
    fn imputation_falls_back_to_overall_mean() {
        // No awake zero-step minutes at all.
        let hr = vec![Some(60.0), None, Some(80.0), Some(70.0)];
        let r = raw(vec![Some(10); 4], hr, vec![Some(SleepState::Awake); 4]);
        let p = build_channels(&r).unwrap();
        assert_eq!(p.hr.data()[1], 0.0);
    }

    #[test]
    fn resting_mean_equal_to_overall_mean_imputes_zero() {
        // Awake zero-step minutes average 70, same as the overall mean.
        let hr = vec![Some(60.0), Some(80.0), None, Some(65.0), Some(75.0)];
        let steps = vec![Some(0), Some(0), Some(0), Some(50), Some(50)];
        let r = raw(steps, hr, vec![Some(SleepState::Awake); 5]);
        let p = build_channels(&r).unwrap();
        assert!(p.hr.data()[2].abs() < 1e-12);
    }

    #[test]
    fn missing_steps_and_sleep_defaults() {
        let r = raw(
            vec![None, Some(0), None],
            vec![Some(60.0), Some(70.0), Some(65.0)],
            vec![None, Some(SleepState::Restless), Some(SleepState::Asleep)],
        );
        let p = build_channels(&r).unwrap();
        assert_eq!(p.activity.row(0), &[0.0, 0.0, 0.0]);
        assert_eq!(p.activity.row(1), &[0.0, 0.0, 1.0]);
        assert_eq!(p.activity.row(2), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn eligibility_boundaries() {
        assert!(eligibility_filter(&[1440; 10]));
        assert!(!eligibility_filter(&[1440; 9]));
        assert!(!eligibility_filter(&[1199; 10]));
        assert!(eligibility_filter(&[1200; 10]));
        let mut mixed = vec![1440; 9];
        mixed.extend([1199, 1300]);
        assert!(eligibility_filter(&mixed));
    }

    #[test]
    fn splits_validation_and_ratio() {
        let mut persons: Vec<(String, usize)> = (0..10_000).map(|i| (format!("p{i:05}"), 1)).collect();
        persons.push(("both".to_string(), 2));
        let a = assign_splits(&persons, 42);
        assert_eq!(a.last().unwrap().1, Split::Validation);
        let train = a.iter().filter(|(_, s)| *s == Split::Train).count();
        let tune = a.iter().filter(|(_, s)| *s == Split::Tune).count();
        assert_eq!((train, tune), (8000, 2000));
        assert_eq!(a, assign_splits(&persons, 42));
        // Input order does not matter.
        let mut rev = persons.clone();
        rev.reverse();
        let mut b = assign_splits(&rev, 42);
        b.reverse();
        assert_eq!(a, b);
        assert_ne!(a, assign_splits(&persons, 43));
    }

    #[test]
    fn rhr_cases() {
        let n = 60;
        let sleep: Vec<Option<SleepState>> = (0..n)
            .map(|i| Some(if i < 40 { SleepState::Asleep } else { SleepState::Awake }))
            .collect();
        let hr: Vec<Option<f64>> = (0..n).map(|i| Some(if i < 40 { 55.0 } else { 90.0 })).collect();
        assert_eq!(compute_rhr(&raw(vec![Some(0); n], hr, sleep.clone())).unwrap(), 55.0);

        let awake = vec![Some(SleepState::Awake); n];
        let hr: Vec<Option<f64>> = (0..n).map(|i| Some(60.0 + i as f64)).collect();
        assert!(matches!(
            compute_rhr(&raw(vec![Some(0); n], hr.clone(), awake)),
            Err(Error::InsufficientSleep { .. })
        ));

        // Mixed: every third asleep minute missing.
        let hr: Vec<Option<f64>> = (0..n)
            .map(|i| if i % 5 == 0 { None } else { Some(50.0 + (i % 13) as f64) })
            .collect();
        let mut sum = 0.0;
        let mut cnt = 0.0;
        for i in 0..40 {
            if let Some(h) = hr[i] {
                sum += h;
                cnt += 1.0;
            }
        }
        assert!((compute_rhr(&raw(vec![Some(0); n], hr, sleep)).unwrap() - sum / cnt).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn roundtrip_and_invariants(
            hr in proptest::collection::vec(proptest::option::weighted(0.9, 40.0f64..200.0), 3..300),
            steps in proptest::collection::vec(0u32..50_000, 300),
            sleep in proptest::collection::vec(0u8..4, 300),
        ) {
            let t = hr.len();
            let observed: Vec<f64> = hr.iter().flatten().copied().collect();
            prop_assume!(observed.len() >= 2);
            prop_assume!(observed.iter().any(|&v| (v - observed[0]).abs() > 1e-6));
            let sleep: Vec<Option<SleepState>> = sleep[..t].iter().map(|&s| match s {
                0 => None,
                1 => Some(SleepState::Awake),
                2 => Some(SleepState::Asleep),
                _ => Some(SleepState::Restless),
            }).collect();
            let r = raw(steps[..t].iter().map(|&s| Some(s)).collect(), hr.clone(), sleep);
            let p = build_channels(&r).unwrap();
            prop_assert!(p.hr_std > 0.0);
            let mut zs = Vec::new();
            for i in 0..t {
                prop_assert!(p.activity.row(1)[i] + p.activity.row(2)[i] <= 1.0);
                prop_assert!(p.activity.row(0)[i] >= 0.0);
                prop_assert_eq!(p.loss_mask.data()[i] == 0.0, hr[i].is_none());
                if let Some(h) = hr[i] {
                    prop_assert!((p.unwhiten(p.hr.data()[i]) - h).abs() < 1e-9);
                    zs.push(p.hr.data()[i]);
                }
            }
            let n = zs.len() as f64;
            let m = zs.iter().sum::<f64>() / n;
            let sd = (zs.iter().map(|z| (z - m) * (z - m)).sum::<f64>() / n).sqrt();
            prop_assert!(m.abs() < 1e-10);
            prop_assert!((sd - 1.0).abs() < 1e-10);
        }

        #[test]
        fn transform_steps_monotone(a in 0i64..50_000, b in 0i64..50_000) {
            let (fa, fb) = (transform_steps(a).unwrap(), transform_steps(b).unwrap());
            prop_assert!((a < b) == (fa < fb) || a == b);
            prop_assert!((0.0..=2.17).contains(&fa));
        }
    }
}
