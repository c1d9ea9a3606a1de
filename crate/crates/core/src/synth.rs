//! Synthetic cohort with known cardiovascular parameters.
//!
//! Each person gets latent physiology drawn from an explicit population
//! model, a daily sleep/activity schedule, and a heart-rate trace from a
//! first-order response toward an activity- and sleep-dependent target with
//! separate rise and recovery time constants.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{
    assign_splits, compute_rhr, transform_steps, PersonMeta, RawMinuteSeries, SleepState,
    MINUTES_PER_DAY,
};
use crate::rng::{self, Rng};

pub const HR_MIN: f64 = 35.0;
pub const HR_MAX: f64 = 210.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentPhysiology {
    pub rhr_true: f64,
    /// bpm per unit of transformed step rate.
    pub hr_gain: f64,
    pub tau_rise: f64,
    pub tau_decay: f64,
    pub sleep_dip: f64,
    pub noise_std: f64,
    pub fitness: f64,
    pub age: f64,
    pub bmi: f64,
}

/// Coefficients of the generative population model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Population {
    pub age_min: f64,
    pub age_max: f64,
    pub bmi_mean: f64,
    pub bmi_std: f64,
    pub bmi_min: f64,
    pub bmi_max: f64,
    pub rhr_base: f64,
    pub rhr_per_fitness: f64,
    pub rhr_per_age_year: f64,
    pub rhr_per_bmi: f64,
    pub rhr_noise_std: f64,
    pub gain_base: f64,
    pub gain_fitness: f64,
    pub tau_base: f64,
    pub sleep_dip_base: f64,
    pub sleep_dip_per_fitness: f64,
    pub noise_std: f64,
}

impl Default for Population {
    fn default() -> Self {
        Self {
            age_min: 18.0,
            age_max: 70.0,
            bmi_mean: 28.0,
            bmi_std: 5.0,
            bmi_min: 16.0,
            bmi_max: 50.0,
            rhr_base: 65.0,
            rhr_per_fitness: -4.0,
            rhr_per_age_year: 0.15,
            rhr_per_bmi: 0.4,
            rhr_noise_std: 2.0,
            gain_base: 28.0,
            gain_fitness: 0.15,
            tau_base: 3.0,
            sleep_dip_base: 8.0,
            sleep_dip_per_fitness: 2.0,
            noise_std: 2.0,
        }
    }
}

/// Daily behaviour model used by [`gen_schedule`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActivityModel {
    pub sleep_mean_minutes: f64,
    pub sleep_std_minutes: f64,
    pub sleep_min_minutes: f64,
    pub sleep_max_minutes: f64,
    /// Sleep onset is uniform in `[0, onset_spread)` minutes after day start.
    pub onset_spread_minutes: u32,
    pub restless_prob: f64,
    pub walks_per_day: f64,
    pub exercise_per_day: f64,
    pub sedentary_zero_prob: f64,
}

impl Default for ActivityModel {
    fn default() -> Self {
        Self {
            sleep_mean_minutes: 420.0,
            sleep_std_minutes: 60.0,
            sleep_min_minutes: 240.0,
            sleep_max_minutes: 600.0,
            onset_spread_minutes: 120,
            restless_prob: 0.05,
            walks_per_day: 10.0,
            exercise_per_day: 0.7,
            sedentary_zero_prob: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_persons: usize,
    pub days: usize,
    pub windows: Vec<String>,
    pub missing_rate: f64,
    /// Fraction of persons observed in the first window only; these form the
    /// train/tune pool, everyone else is validation.
    pub single_window_fraction: f64,
    pub seed: u64,
    pub population: Population,
    pub activity: ActivityModel,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_persons: 200,
            days: 14,
            windows: vec!["2017-01".into(), "2018-01".into()],
            missing_rate: 0.05,
            single_window_fraction: 0.5,
            seed: 0,
            population: Population::default(),
            activity: ActivityModel::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_persons == 0 {
            return Err(Error::InvalidConfig("n_persons must be >= 1".into()));
        }
        if self.days == 0 {
            return Err(Error::InvalidConfig("days must be >= 1".into()));
        }
        if self.windows.is_empty() {
            return Err(Error::InvalidConfig("at least one window is required".into()));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::InvalidConfig("missing_rate must be in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.single_window_fraction) {
            return Err(Error::InvalidConfig(
                "single_window_fraction must be in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn minutes(&self) -> usize {
        self.days * MINUTES_PER_DAY
    }

    /// Number of persons recorded in the first window only.
    pub fn single_window_persons(&self) -> usize {
        if self.windows.len() < 2 {
            return self.n_persons;
        }
        libm::round(self.n_persons as f64 * self.single_window_fraction) as usize
    }
}

/// Independent standard draws behind one person's latent parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PersonDraws {
    pub fitness: f64,
    /// Uniform in [0, 1).
    pub age_u: f64,
    pub bmi_z: f64,
    pub rhr_z: f64,
}

impl PersonDraws {
    pub fn sample(rng: &mut Rng) -> Self {
        Self {
            fitness: rng.sample(StandardNormal),
            age_u: rng.random(),
            bmi_z: rng.sample(StandardNormal),
            rhr_z: rng.sample(StandardNormal),
        }
    }
}

impl LatentPhysiology {
    pub fn from_draws(d: &PersonDraws, pop: &Population) -> Self {
        // Keeps the gain denominator positive.
        let fitness = d.fitness.clamp(-4.0, 4.0);
        let age = pop.age_min + d.age_u * (pop.age_max - pop.age_min);
        let bmi = (pop.bmi_mean + pop.bmi_std * d.bmi_z).clamp(pop.bmi_min, pop.bmi_max);
        let rhr_true = (pop.rhr_base
            + pop.rhr_per_fitness * fitness
            + pop.rhr_per_age_year * (age - 40.0)
            + pop.rhr_per_bmi * (bmi - pop.bmi_mean)
            + pop.rhr_noise_std * d.rhr_z)
            .clamp(40.0, 100.0);
        let hr_gain = pop.gain_base / (1.0 + pop.gain_fitness * fitness);
        let tau_decay = (pop.tau_base
            * (1.0 + 0.5 * (bmi - pop.bmi_mean) / pop.bmi_std - 0.3 * fitness))
            .clamp(0.5, 120.0);
        let tau_rise = (tau_decay / 2.0).clamp(0.5, 120.0);
        let sleep_dip = (pop.sleep_dip_base + pop.sleep_dip_per_fitness * fitness).max(0.0);
        Self {
            rhr_true,
            hr_gain,
            tau_rise,
            tau_decay,
            sleep_dip,
            noise_std: pop.noise_std,
            fitness,
            age,
            bmi,
        }
    }
}

pub fn person_id(index: usize) -> String {
    format!("p{index:05}")
}

/// Latent physiology of person `index`, a pure function of `(seed, index)`.
pub fn sample_person(config: &SimConfig, index: usize) -> Result<(String, LatentPhysiology)> {
    if index >= config.n_persons {
        return Err(Error::IndexOutOfRange {
            index,
            len: config.n_persons,
        });
    }
    let mut r = rng::stream(config.seed, &[rng::TAG_PERSON, index as u64]);
    let draws = PersonDraws::sample(&mut r);
    Ok((person_id(index), LatentPhysiology::from_draws(&draws, &config.population)))
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Bout {
    Sedentary,
    Walking,
    Exercise,
}

/// Minute-level steps and sleep state for `days` days.
///
/// Each day opens with one sleep block (onset in the first hours of the day)
/// whose minutes turn restless independently; the awake remainder follows a
/// sedentary / walking / exercise bout process. Steps are zero while asleep.
pub fn gen_schedule(
    model: &ActivityModel,
    days: usize,
    rng: &mut Rng,
) -> (Vec<u32>, Vec<SleepState>) {
    let t_len = days * MINUTES_PER_DAY;
    let mut steps = vec![0u32; t_len];
    let mut sleep = vec![SleepState::Awake; t_len];
    let sleep_len = Normal::new(model.sleep_mean_minutes, model.sleep_std_minutes)
        .expect("finite sleep distribution");

    for day in 0..days {
        let base = day * MINUTES_PER_DAY;
        let onset = rng.random_range(0..model.onset_spread_minutes.max(1)) as usize;
        let dur = libm::round(
            sleep_len
                .sample(rng)
                .clamp(model.sleep_min_minutes, model.sleep_max_minutes),
        ) as usize;
        let end = (onset + dur).min(MINUTES_PER_DAY);
        for s in &mut sleep[base + onset..base + end] {
            *s = if rng.random_bool(model.restless_prob) {
                SleepState::Restless
            } else {
                SleepState::Asleep
            };
        }
    }

    let awake_per_day = (MINUTES_PER_DAY as f64 - model.sleep_mean_minutes).max(1.0);
    let p_ex = model.exercise_per_day / awake_per_day;
    let p_walk = model.walks_per_day / awake_per_day;
    let mut bout = Bout::Sedentary;
    let mut remaining = 0u32;
    for t in 0..t_len {
        if sleep[t].is_sleeping() {
            bout = Bout::Sedentary;
            remaining = 0;
            continue;
        }
        if remaining == 0 {
            bout = Bout::Sedentary;
            let u: f64 = rng.random();
            if u < p_ex {
                bout = Bout::Exercise;
                remaining = rng.random_range(10..=45);
            } else if u < p_ex + p_walk {
                bout = Bout::Walking;
                remaining = rng.random_range(5..=30);
            }
        }
        steps[t] = match bout {
            Bout::Sedentary => {
                if rng.random_bool(model.sedentary_zero_prob) {
                    0
                } else {
                    rng.random_range(1..=5)
                }
            }
            Bout::Walking => rng.random_range(60..=110),
            Bout::Exercise => rng.random_range(120..=180),
        };
        remaining = remaining.saturating_sub(1);
    }
    (steps, sleep)
}

/// First-order heart-rate response.
///
/// `target(t) = rhr + gain·steps'(t) − dip·[sleeping]`,
/// `hr(t+1) = hr(t) + (target(t) − hr(t))/τ + noise`, with the rise constant
/// when the target is above the current rate and the decay constant
/// otherwise. Time constants below one minute act as one minute (immediate
/// tracking) so the update never overshoots.
pub fn simulate_hr(
    latent: &LatentPhysiology,
    steps_transformed: &[f64],
    sleep: &[SleepState],
    rng: &mut Rng,
) -> Vec<f64> {
    let t_len = steps_transformed.len().min(sleep.len());
    let mut out = Vec::with_capacity(t_len);
    if t_len == 0 {
        return out;
    }
    let mut hr = latent.rhr_true.clamp(HR_MIN, HR_MAX);
    out.push(hr);
    for t in 0..t_len - 1 {
        let target = hr_target(latent, steps_transformed[t], sleep[t]);
        let noise: f64 = rng.sample::<f64, _>(StandardNormal) * latent.noise_std;
        hr = hr_step(latent, hr, target, noise);
        out.push(hr);
    }
    out
}

/// One minute of the response recurrence.
pub fn hr_step(latent: &LatentPhysiology, hr: f64, target: f64, noise: f64) -> f64 {
    let tau = if target > hr {
        latent.tau_rise
    } else {
        latent.tau_decay
    };
    (hr + (target - hr) / tau.max(1.0) + noise).clamp(HR_MIN, HR_MAX)
}

pub fn hr_target(latent: &LatentPhysiology, steps_transformed: f64, sleep: SleepState) -> f64 {
    let dip = if sleep.is_sleeping() {
        latent.sleep_dip
    } else {
        0.0
    };
    latent.rhr_true + latent.hr_gain * steps_transformed - dip
}

/// Generated cohort: raw series per person and window, person metadata and
/// the latent ground truth.
#[derive(Clone, Debug)]
pub struct Cohort {
    pub series: Vec<RawMinuteSeries>,
    pub persons: Vec<PersonMeta>,
    pub latent: Vec<(String, LatentPhysiology)>,
}

/// Epoch minute of the first day of a `YYYY-MM` label (0 if unparseable).
pub fn window_start_minute(label: &str) -> i64 {
    let mut parts = label.split('-');
    let (Some(y), Some(m)) = (parts.next(), parts.next()) else {
        return 0;
    };
    let (Ok(y), Ok(m)) = (y.parse::<i64>(), m.parse::<i64>()) else {
        return 0;
    };
    if !(1..=12).contains(&m) {
        return 0;
    }
    // Days from civil, proleptic Gregorian.
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let mp = (m + 9) % 12;
    let doy = (153 * mp + 2) / 5;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    (era * 146_097 + doe - 719_468) * MINUTES_PER_DAY as i64
}

/// Simulates one person in one window.
pub fn simulate_window(
    config: &SimConfig,
    index: usize,
    window: usize,
    latent: &LatentPhysiology,
) -> RawMinuteSeries {
    let tags = |tag: u64| [tag, index as u64, window as u64];
    let mut sched_rng = rng::stream(config.seed, &tags(rng::TAG_SCHEDULE));
    let (steps, sleep) = gen_schedule(&config.activity, config.days, &mut sched_rng);
    let transformed: Vec<f64> = steps
        .iter()
        .map(|&s| transform_steps(i64::from(s)).expect("non-negative"))
        .collect();
    let mut hr_rng = rng::stream(config.seed, &tags(rng::TAG_HR));
    let hr = simulate_hr(latent, &transformed, &sleep, &mut hr_rng);
    let mut miss_rng = rng::stream(config.seed, &tags(rng::TAG_MISSING));
    let heart_rate = hr
        .into_iter()
        .map(|h| {
            if config.missing_rate > 0.0 && miss_rng.random_bool(config.missing_rate) {
                None
            } else {
                Some(h)
            }
        })
        .collect();
    let label = config.windows[window].clone();
    RawMinuteSeries {
        person_id: person_id(index),
        start_minute: window_start_minute(&label),
        window_label: label,
        steps: steps.into_iter().map(Some).collect(),
        heart_rate,
        sleep_state: sleep.into_iter().map(Some).collect(),
    }
}

/// Generates the whole cohort.
///
/// The first `single_window_persons()` persons are recorded in the first
/// window only; every other person has all windows. Resting heart rate is
/// measured from the first window and splits follow [`assign_splits`].
pub fn gen_cohort(config: &SimConfig) -> Result<Cohort> {
    config.validate()?;
    let n_single = config.single_window_persons();
    let mut series = Vec::new();
    let mut latent = Vec::with_capacity(config.n_persons);
    let mut rhr = Vec::with_capacity(config.n_persons);
    let mut windows_present = Vec::with_capacity(config.n_persons);
    for index in 0..config.n_persons {
        let (id, lat) = sample_person(config, index)?;
        let n_windows = if index < n_single { 1 } else { config.windows.len() };
        for w in 0..n_windows {
            series.push(simulate_window(config, index, w, &lat));
        }
        let first = &series[series.len() - n_windows];
        rhr.push(compute_rhr(first).unwrap_or(f64::NAN));
        windows_present.push((id.clone(), n_windows));
        latent.push((id, lat));
    }
    let splits = assign_splits(&windows_present, config.seed);
    let persons = splits
        .into_iter()
        .zip(&latent)
        .zip(rhr)
        .map(|(((id, split), (_, lat)), rhr)| PersonMeta {
            person_id: id,
            age: lat.age,
            bmi: lat.bmi,
            rhr,
            split,
        })
        .collect();
    Ok(Cohort {
        series,
        persons,
        latent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{build_channels, Split};
    use proptest::prelude::*;

    fn quiet(latent: &LatentPhysiology) -> LatentPhysiology {
        LatentPhysiology {
            noise_std: 0.0,
            ..latent.clone()
        }
    }

    fn typical() -> LatentPhysiology {
        LatentPhysiology::from_draws(
            &PersonDraws {
                fitness: 0.0,
                age_u: 0.5,
                bmi_z: 0.0,
                rhr_z: 0.0,
            },
            &Population::default(),
        )
    }

    #[test]
    fn sample_person_is_deterministic() {
        let cfg = SimConfig {
            seed: 9,
            ..SimConfig::default()
        };
        assert_eq!(sample_person(&cfg, 3).unwrap(), sample_person(&cfg, 3).unwrap());
        assert_ne!(sample_person(&cfg, 3).unwrap().1, sample_person(&cfg, 4).unwrap().1);
        assert!(matches!(sample_person(&cfg, 200), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn typical_person_matches_formula() {
        let l = typical();
        assert_eq!(l.age, 44.0);
        assert_eq!(l.bmi, 28.0);
        assert!((l.rhr_true - (65.0 + 0.15 * 4.0)).abs() < 1e-12);
        assert_eq!(l.hr_gain, 28.0);
        assert_eq!(l.tau_decay, 3.0);
        assert_eq!(l.tau_rise, 1.5);
        assert_eq!(l.sleep_dip, 8.0);
    }

    #[test]
    fn fitter_person_has_lower_rhr() {
        let pop = Population::default();
        let base = PersonDraws {
            fitness: 0.0,
            age_u: 0.3,
            bmi_z: 0.2,
            rhr_z: -0.1,
        };
        let fit = LatentPhysiology::from_draws(&PersonDraws { fitness: 2.0, ..base }, &pop);
        let unfit = LatentPhysiology::from_draws(&PersonDraws { fitness: -2.0, ..base }, &pop);
        assert!(fit.rhr_true < unfit.rhr_true);
    }

    #[test]
    fn bmi_and_rhr_positively_correlated() {
        let cfg = SimConfig {
            n_persons: 10_000,
            seed: 1,
            ..SimConfig::default()
        };
        let pairs: Vec<(f64, f64)> = (0..cfg.n_persons)
            .map(|i| {
                let l = sample_person(&cfg, i).unwrap().1;
                assert!((40.0..=100.0).contains(&l.rhr_true));
                assert!((0.5..=120.0).contains(&l.tau_rise) && (0.5..=120.0).contains(&l.tau_decay));
                (l.bmi, l.rhr_true)
            })
            .collect();
        let n = pairs.len() as f64;
        let (mx, my) = pairs.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
        let cov: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        assert!(cov > 0.0);
    }

    #[test]
    fn schedule_constraints() {
        let model = ActivityModel::default();
        let mut r = rng::stream(5, &[0]);
        let (steps, sleep) = gen_schedule(&model, 7, &mut r);
        assert_eq!(steps.len(), 7 * 1440);
        for t in 0..steps.len() {
            if sleep[t].is_sleeping() {
                assert_eq!(steps[t], 0);
            }
        }
        for day in 0..7 {
            let asleep = sleep[day * 1440..(day + 1) * 1440]
                .iter()
                .filter(|s| s.is_sleeping())
                .count();
            assert!((240..=600).contains(&asleep), "day {day}: {asleep}");
        }
        let mut r2 = rng::stream(5, &[0]);
        assert_eq!(gen_schedule(&model, 7, &mut r2), (steps.clone(), sleep.clone()));
        assert!(steps.iter().any(|&s| s >= 120));
        assert!(sleep.contains(&SleepState::Restless));
    }

    #[test]
    fn resting_awake_is_fixed_point() {
        let l = quiet(&typical());
        let mut r = rng::stream(0, &[]);
        let hr = simulate_hr(&l, &[0.0; 500], &[SleepState::Awake; 500], &mut r);
        assert!(hr.iter().all(|&h| h == l.rhr_true));
    }

    #[test]
    fn constant_activity_converges_to_closed_form() {
        for tau_decay in [2.0, 8.0, 30.0] {
            let l = LatentPhysiology {
                tau_decay,
                tau_rise: tau_decay / 2.0,
                ..quiet(&typical())
            };
            let s = 0.8;
            let steady = l.rhr_true + l.hr_gain * s;
            let n = libm::ceil(10.0 * l.tau_rise) as usize + 1;
            let mut r = rng::stream(0, &[]);
            let hr = simulate_hr(&l, &vec![s; n + 1], &vec![SleepState::Awake; n + 1], &mut r);
            assert!((hr[n] - steady).abs() < 0.01 * steady);
        }
    }

    #[test]
    fn simulate_hr_is_reproducible() {
        let l = typical();
        let steps: Vec<f64> = (0..300).map(|i| ((i / 30) % 2) as f64 * 0.9).collect();
        let sleep = vec![SleepState::Awake; 300];
        let a = simulate_hr(&l, &steps, &sleep, &mut rng::stream(3, &[]));
        let b = simulate_hr(&l, &steps, &sleep, &mut rng::stream(3, &[]));
        assert_eq!(a, b);
        assert!(a.iter().all(|h| (HR_MIN..=HR_MAX).contains(h)));
    }

    #[test]
    fn exercise_raises_hr_above_rest() {
        let l = quiet(&typical());
        let mut steps = vec![0.0; 200];
        for s in &mut steps[50..90] {
            *s = transform_steps(150).unwrap();
        }
        let hr = simulate_hr(&l, &steps, &[SleepState::Awake; 200], &mut rng::stream(0, &[]));
        for t in 51..=90 {
            assert!(hr[t] > l.rhr_true, "minute {t}");
        }
    }

    #[test]
    fn different_latents_give_different_traces() {
        let model = ActivityModel::default();
        let (steps, sleep) = gen_schedule(&model, 2, &mut rng::stream(1, &[]));
        let tr: Vec<f64> = steps.iter().map(|&s| transform_steps(s.into()).unwrap()).collect();
        let a = quiet(&typical());
        let b = LatentPhysiology {
            hr_gain: 20.0,
            ..a.clone()
        };
        let ha = simulate_hr(&a, &tr, &sleep, &mut rng::stream(0, &[]));
        let hb = simulate_hr(&b, &tr, &sleep, &mut rng::stream(0, &[]));
        assert_ne!(ha, hb);
    }

    proptest! {
        #[test]
        fn noiseless_update_contracts(
            hr in 40.0f64..180.0,
            s in 0.0f64..1.2,
            sleeping in any::<bool>(),
            tau in 0.5f64..60.0,
        ) {
            let l = LatentPhysiology { tau_rise: tau, tau_decay: tau * 1.7, ..quiet(&typical()) };
            let state = if sleeping { SleepState::Asleep } else { SleepState::Awake };
            let target = hr_target(&l, s, state);
            let next = hr_step(&l, hr, target, 0.0);
            prop_assert!((next - target).abs() <= (hr - target).abs());
        }
    }

    #[test]
    fn cohort_cardinality_and_missingness() {
        let cfg = SimConfig {
            n_persons: 20,
            days: 2,
            missing_rate: 0.1,
            single_window_fraction: 0.5,
            seed: 4,
            ..SimConfig::default()
        };
        let c = gen_cohort(&cfg).unwrap();
        assert_eq!(c.latent.len(), 20);
        assert_eq!(c.series.len(), 10 + 20);
        let validation = c.persons.iter().filter(|p| p.split == Split::Validation).count();
        assert_eq!(validation, 10);
        let total: usize = c.series.iter().map(|s| s.len()).sum();
        let observed: usize = c.series.iter().map(|s| s.heart_rate.iter().flatten().count()).sum();
        let frac = observed as f64 / total as f64;
        assert!((0.88..=0.92).contains(&frac), "{frac}");
        for s in &c.series {
            s.validate().unwrap();
        }
    }

    #[test]
    fn full_cohort_has_every_window() {
        let cfg = SimConfig {
            n_persons: 200,
            days: 1,
            missing_rate: 0.0,
            single_window_fraction: 0.0,
            seed: 2,
            ..SimConfig::default()
        };
        let c = gen_cohort(&cfg).unwrap();
        assert_eq!(c.latent.len(), 200);
        assert_eq!(c.series.len(), 400);
        assert!(c.persons.iter().all(|p| p.split == Split::Validation));
        let p = build_channels(&c.series[0]).unwrap();
        assert!(p.loss_mask.data().iter().all(|&m| m == 1.0));
    }

    #[test]
    fn rejects_empty_cohort() {
        let cfg = SimConfig {
            n_persons: 0,
            ..SimConfig::default()
        };
        assert!(gen_cohort(&cfg).is_err());
    }

    #[test]
    fn window_labels_map_to_epoch_minutes() {
        assert_eq!(window_start_minute("1970-01"), 0);
        assert_eq!(window_start_minute("2017-01"), 1_483_228_800 / 60);
        assert_eq!(window_start_minute("2018-01"), 1_514_764_800 / 60);
        assert_eq!(window_start_minute("bogus"), 0);
    }
}
