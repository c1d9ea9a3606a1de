//! CSV and JSON file formats.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use cardiosig_core::baselines::PersonError;
use cardiosig_core::eval::SweepTable;
use cardiosig_core::model::{ModelConfig, ModelParams};
use cardiosig_core::preprocess::{PersonMeta, RawMinuteSeries, SleepState, Split};
use cardiosig_core::synth::LatentPhysiology;
use cardiosig_core::train::EpochRecord;
use cardiosig_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const MINUTES_FILE: &str = "minutes.csv";
pub const LATENT_FILE: &str = "latent_truth.csv";
pub const DEMOGRAPHICS_FILE: &str = "demographics.csv";
pub const PERSONS_FILE: &str = "persons.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const EPOCHS_FILE: &str = "epochs.csv";

/// Writes through a sibling temporary file so a failed write never leaves
/// a truncated output behind.
pub fn write_atomic(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::File::create(&tmp)
        .and_then(|mut file| file.write_all(&buf))
        .map_err(CliError::io(&tmp))?;
    fs::rename(&tmp, path).map_err(CliError::io(path))
}

fn write_csv<F>(path: &Path, header: &[&str], rows: F) -> Result<()>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>,
{
    write_atomic(path, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(header).and_then(|_| rows(&mut w)).map_err(CliError::csv(path))?;
        w.flush().map_err(CliError::io(path))
    })
}

fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>> {
    if !path.exists() {
        return Err(CliError::MissingInput(path.to_path_buf()));
    }
    csv::Reader::from_path(path).map_err(CliError::csv(path))
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> CliError {
    CliError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn field<'a>(path: &Path, rec: &'a csv::StringRecord, i: usize) -> Result<&'a str> {
    let line = rec.position().map_or(0, |p| p.line());
    rec.get(i).ok_or_else(|| parse_err(path, line, format!("missing column {i}")))
}

fn parse<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize) -> Result<T> {
    let s = field(path, rec, i)?;
    s.parse().map_err(|_| {
        parse_err(path, rec.position().map_or(0, |p| p.line()), format!("bad value {s:?} in column {i}"))
    })
}

/// Heart rate is stored to a thousandth of a beat per minute.
fn format_hr(hr: f64) -> String {
    format!("{hr:.3}")
}

pub fn write_minutes(path: &Path, series: &[RawMinuteSeries]) -> Result<()> {
    let header = ["person_id", "window", "minute", "steps", "heart_rate", "sleep_state"];
    write_csv(path, &header, |w| {
        for s in series {
            for t in 0..s.len() {
                let steps = s.steps[t].map(|v| v.to_string()).unwrap_or_default();
                let hr = s.heart_rate[t].map(format_hr).unwrap_or_default();
                let sleep = s.sleep_state[t].map(SleepState::as_str).unwrap_or("");
                let minute = (s.start_minute + t as i64).to_string();
                w.write_record([&s.person_id, &s.window_label, &minute, &steps, &hr, sleep])?;
            }
        }
        Ok(())
    })
}

/// Reads minute rows grouped by (person, window); rows of one series must be
/// consecutive and contiguous in time.
pub fn read_minutes(path: &Path) -> Result<Vec<RawMinuteSeries>> {
    let mut rdr = open_csv(path)?;
    let mut out: Vec<RawMinuteSeries> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(CliError::csv(path))?;
        let line = rec.position().map_or(0, |p| p.line());
        let person = field(path, &rec, 0)?;
        let window = field(path, &rec, 1)?;
        let minute: i64 = parse(path, &rec, 2)?;
        let steps = match field(path, &rec, 3)? {
            "" => None,
            _ => Some(parse::<u32>(path, &rec, 3)?),
        };
        let hr = match field(path, &rec, 4)? {
            "" => None,
            _ => Some(parse::<f64>(path, &rec, 4)?),
        };
        let sleep = match field(path, &rec, 5)? {
            "" => None,
            s => Some(SleepState::parse(s).ok_or_else(|| parse_err(path, line, format!("bad sleep state {s:?}")))?),
        };
        let same = out
            .last()
            .is_some_and(|s| s.person_id == person && s.window_label == window);
        if !same {
            out.push(RawMinuteSeries {
                person_id: person.to_string(),
                window_label: window.to_string(),
                start_minute: minute,
                steps: Vec::new(),
                heart_rate: Vec::new(),
                sleep_state: Vec::new(),
            });
        }
        let s = out.last_mut().expect("pushed above");
        if minute != s.start_minute + s.len() as i64 {
            return Err(parse_err(path, line, "minutes of a series must be consecutive"));
        }
        s.steps.push(steps);
        s.heart_rate.push(hr);
        s.sleep_state.push(sleep);
    }
    Ok(out)
}

const LATENT_HEADER: [&str; 10] = [
    "person_id", "rhr_true", "hr_gain", "tau_rise", "tau_decay", "sleep_dip", "noise_std", "fitness", "age", "bmi",
];

pub fn write_latent(path: &Path, latent: &[(String, LatentPhysiology)]) -> Result<()> {
    write_csv(path, &LATENT_HEADER, |w| {
        for (id, l) in latent {
            let values = [l.rhr_true, l.hr_gain, l.tau_rise, l.tau_decay, l.sleep_dip, l.noise_std, l.fitness, l.age, l.bmi];
            let mut rec = vec![id.clone()];
            rec.extend(values.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

pub fn read_latent(path: &Path) -> Result<Vec<(String, LatentPhysiology)>> {
    let mut rdr = open_csv(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(CliError::csv(path))?;
        let v = |i| parse::<f64>(path, &rec, i);
        out.push((
            field(path, &rec, 0)?.to_string(),
            LatentPhysiology {
                rhr_true: v(1)?,
                hr_gain: v(2)?,
                tau_rise: v(3)?,
                tau_decay: v(4)?,
                sleep_dip: v(5)?,
                noise_std: v(6)?,
                fitness: v(7)?,
                age: v(8)?,
                bmi: v(9)?,
            },
        ));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Demographics {
    pub person_id: String,
    pub age: f64,
    pub bmi: f64,
}

pub fn write_demographics(path: &Path, rows: &[Demographics]) -> Result<()> {
    write_csv(path, &["person_id", "age", "bmi"], |w| {
        for d in rows {
            w.write_record([d.person_id.clone(), d.age.to_string(), d.bmi.to_string()])?;
        }
        Ok(())
    })
}

pub fn read_demographics(path: &Path) -> Result<Vec<Demographics>> {
    let mut rdr = open_csv(path)?;
    rdr.deserialize().map(|r| r.map_err(CliError::csv(path))).collect()
}

/// Preprocessing manifest: one row per eligible person.
pub fn write_persons(path: &Path, persons: &[PersonMeta]) -> Result<()> {
    write_csv(path, &["person_id", "split", "age", "bmi", "rhr"], |w| {
        for p in persons {
            let rhr = if p.rhr.is_finite() { p.rhr.to_string() } else { String::new() };
            w.write_record([&p.person_id, p.split.as_str(), &p.age.to_string(), &p.bmi.to_string(), &rhr])?;
        }
        Ok(())
    })
}

pub fn read_persons(path: &Path) -> Result<Vec<PersonMeta>> {
    let mut rdr = open_csv(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(CliError::csv(path))?;
        let line = rec.position().map_or(0, |p| p.line());
        let split = field(path, &rec, 1)?;
        out.push(PersonMeta {
            person_id: field(path, &rec, 0)?.to_string(),
            split: Split::parse(split).ok_or_else(|| parse_err(path, line, format!("bad split {split:?}")))?,
            age: parse(path, &rec, 2)?,
            bmi: parse(path, &rec, 3)?,
            rhr: match field(path, &rec, 4)? {
                "" => f64::NAN,
                _ => parse(path, &rec, 4)?,
            },
        });
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    config: ModelConfig,
    tensors: Vec<NamedTensor>,
}

pub fn write_checkpoint(path: &Path, params: &ModelParams) -> Result<()> {
    let ck = Checkpoint {
        config: params.config.clone(),
        tensors: params
            .named()
            .map(|(name, t)| NamedTensor {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            })
            .collect(),
    };
    write_atomic(path, |buf| {
        serde_json::to_writer(&mut *buf, &ck).map_err(CliError::json(path))?;
        buf.push(b'\n');
        Ok(())
    })
}

pub fn read_checkpoint(path: &Path) -> Result<ModelParams> {
    if !path.exists() {
        return Err(CliError::MissingInput(path.to_path_buf()));
    }
    let corrupt = |message: String| CliError::Checkpoint {
        path: path.to_path_buf(),
        message,
    };
    let text = fs::read(path).map_err(CliError::io(path))?;
    let ck: Checkpoint = serde_json::from_slice(&text).map_err(|e| corrupt(e.to_string()))?;
    let expected = cardiosig_core::model::Layout::new(&ck.config);
    if ck.tensors.len() != expected.specs.len() {
        return Err(corrupt(format!(
            "{} tensors, expected {}",
            ck.tensors.len(),
            expected.specs.len()
        )));
    }
    let mut tensors = Vec::with_capacity(ck.tensors.len());
    for (t, spec) in ck.tensors.into_iter().zip(&expected.specs) {
        if t.name != spec.name {
            return Err(corrupt(format!("tensor {:?} where {:?} was expected", t.name, spec.name)));
        }
        tensors.push(Tensor::new(t.shape, t.data).map_err(|e| corrupt(e.to_string()))?);
    }
    ModelParams::from_tensors(ck.config, tensors).map_err(|e| corrupt(e.to_string()))
}

/// Training log; `seconds` is empty unless wall time is recorded.
pub fn write_epochs(path: &Path, epochs: &[EpochRecord], seconds: Option<&[f64]>) -> Result<()> {
    write_csv(path, &["epoch", "train_loss", "tune_loss", "seconds"], |w| {
        for (i, e) in epochs.iter().enumerate() {
            let secs = seconds.and_then(|s| s.get(i)).map(|s| format!("{s:.3}")).unwrap_or_default();
            w.write_record([e.epoch.to_string(), e.train_loss.to_string(), e.tune_loss.to_string(), secs])?;
        }
        Ok(())
    })
}

pub fn read_epochs(path: &Path) -> Result<Vec<EpochRecord>> {
    let mut rdr = open_csv(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(CliError::csv(path))?;
        out.push(EpochRecord {
            epoch: parse(path, &rec, 0)?,
            train_loss: parse(path, &rec, 1)?,
            tune_loss: parse(path, &rec, 2)?,
        });
    }
    Ok(out)
}

/// `(person_id, window_label, values)` rows.
pub fn write_signatures(path: &Path, rows: &[(String, String, Vec<f64>)]) -> Result<()> {
    let width = rows.first().map_or(0, |r| r.2.len());
    let mut header = vec!["person_id".to_string(), "window_label".to_string()];
    header.extend((0..width).map(|i| format!("s{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(path, &header, |w| {
        for (id, window, values) in rows {
            let mut rec = vec![id.clone(), window.clone()];
            rec.extend(values.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

pub fn write_person_errors(path: &Path, rows: &[(String, String, f64)]) -> Result<()> {
    write_csv(path, &["person_id", "mode", "mse"], |w| {
        for (id, mode, mse) in rows {
            w.write_record([id.clone(), mode.clone(), mse.to_string()])?;
        }
        Ok(())
    })
}

pub fn baseline_rows(errors: &[PersonError]) -> Vec<(String, String, f64)> {
    errors
        .iter()
        .map(|e| (e.person_id.clone(), e.mode.as_str().to_string(), e.mse))
        .collect()
}

pub fn write_sweep(path: &Path, table: &SweepTable) -> Result<()> {
    write_csv(path, &[table.axis.as_str(), "train_persons", "window1_error", "window2_error"], |w| {
        for r in &table.rows {
            w.write_record([
                r.setting.to_string(),
                r.train_persons.to_string(),
                r.window1_error.to_string(),
                r.window2_error.to_string(),
            ])?;
        }
        Ok(())
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |buf| {
        serde_json::to_writer_pretty(&mut *buf, value).map_err(CliError::json(path))?;
        buf.push(b'\n');
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use cardiosig_core::model::init_model;

    #[test]
    fn minutes_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let s = RawMinuteSeries {
            person_id: "p1".into(),
            window_label: "2017-01".into(),
            start_minute: 100,
            steps: vec![Some(0), None, Some(12)],
            heart_rate: vec![Some(61.25), Some(70.0), None],
            sleep_state: vec![Some(SleepState::Asleep), Some(SleepState::Awake), None],
        };
        write_minutes(&p, std::slice::from_ref(&s)).unwrap();
        assert_eq!(read_minutes(&p).unwrap(), vec![s]);
        assert!(!dir.path().join("m.csv.tmp").exists());
    }

    #[test]
    fn gaps_in_minutes_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(&p, "person_id,window,minute,steps,heart_rate,sleep_state\na,w,0,1,60,awake\na,w,2,1,60,awake\n").unwrap();
        assert!(matches!(read_minutes(&p), Err(CliError::Parse { line: 3, .. })));
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ck.json");
        let params = init_model(ModelConfig::new(8), 3).unwrap();
        write_checkpoint(&p, &params).unwrap();
        assert_eq!(read_checkpoint(&p).unwrap(), params);
        fs::write(&p, "{\"config\": 1}").unwrap();
        assert!(matches!(read_checkpoint(&p), Err(CliError::Checkpoint { .. })));
        assert!(matches!(
            read_checkpoint(&dir.path().join("none.json")),
            Err(CliError::MissingInput(_))
        ));
    }

    #[test]
    fn persons_round_trip_with_missing_rhr() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("persons.csv");
        let rows = vec![
            PersonMeta { person_id: "a".into(), age: 30.5, bmi: 22.0, rhr: 55.25, split: Split::Train },
            PersonMeta { person_id: "b".into(), age: 41.0, bmi: 31.0, rhr: f64::NAN, split: Split::Validation },
        ];
        write_persons(&p, &rows).unwrap();
        let back = read_persons(&p).unwrap();
        assert_eq!(back[0], rows[0]);
        assert!(back[1].rhr.is_nan());
        assert_eq!(back[1].split, Split::Validation);
    }
}
