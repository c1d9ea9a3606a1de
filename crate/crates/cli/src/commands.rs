//! The pipeline commands. Each validates the configuration before it
//! touches any output.

use std::path::{Path, PathBuf};
use std::time::Instant;

use cardiosig_core::eval::{draw_others, sweep_signature_size, sweep_train_fraction, SweepAxis, SweepTable};
use cardiosig_core::model::{encode, init_model, ModelParams};
use cardiosig_core::preprocess::{build_channels, PersonMeta, RawMinuteSeries};
use cardiosig_core::rng::derive_seed;
use cardiosig_core::synth::gen_cohort;
use cardiosig_core::train::{train_with, TrainHistory};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io::{self, Demographics};
use crate::pipeline::{self, EvalInputs, Evaluation};
use crate::plot::{plot_series, render_svg, PlotInput};

pub const REPORT_FILE: &str = "report.json";
pub const SIGNATURES_FILE: &str = "signatures.csv";
pub const ERRORS_FILE: &str = "errors.csv";
pub const CONSISTENCY_FILE: &str = "consistency.csv";
pub const DOWNSTREAM_FILE: &str = "downstream.csv";

pub fn sweep_file(axis: SweepAxis) -> String {
    format!("sweep_{}.csv", axis.as_str())
}

/// Simulates the cohort into the data directory.
pub fn cmd_simulate(config: &RunConfig) -> Result<()> {
    config.validate()?;
    let cohort = gen_cohort(&config.sim)?;
    let demographics: Vec<Demographics> = cohort
        .persons
        .iter()
        .map(|p| Demographics {
            person_id: p.person_id.clone(),
            age: p.age,
            bmi: p.bmi,
        })
        .collect();
    io::write_minutes(&config.data_path(io::MINUTES_FILE), &cohort.series)?;
    io::write_demographics(&config.data_path(io::DEMOGRAPHICS_FILE), &demographics)?;
    io::write_latent(&config.data_path(io::LATENT_FILE), &cohort.latent)
}

/// Eligibility, splits and resting heart rate into the person manifest.
pub fn cmd_preprocess(config: &RunConfig) -> Result<Vec<PersonMeta>> {
    config.validate()?;
    let series = io::read_minutes(&config.data_path(io::MINUTES_FILE))?;
    let demographics = io::read_demographics(&config.data_path(io::DEMOGRAPHICS_FILE))?;
    let persons = pipeline::preprocess(&series, &demographics, &config.sim.windows, config.seed)?;
    io::write_persons(&config.data_path(io::PERSONS_FILE), &persons)?;
    Ok(persons)
}

struct Loaded {
    series: Vec<RawMinuteSeries>,
    persons: Vec<PersonMeta>,
}

fn load(config: &RunConfig) -> Result<Loaded> {
    let persons_path = config.data_path(io::PERSONS_FILE);
    if !persons_path.exists() {
        return Err(CliError::MissingInput(persons_path));
    }
    Ok(Loaded {
        series: io::read_minutes(&config.data_path(io::MINUTES_FILE))?,
        persons: io::read_persons(&persons_path)?,
    })
}

pub fn checkpoint_path(config: &RunConfig, explicit: Option<&Path>) -> PathBuf {
    explicit.map_or_else(|| config.output_path(io::CHECKPOINT_FILE), Path::to_path_buf)
}

/// Trains from the preprocessed data; writes the checkpoint and epoch log.
pub fn cmd_train(config: &RunConfig) -> Result<(ModelParams, TrainHistory)> {
    config.validate()?;
    let loaded = load(config)?;
    let data = pipeline::experiment_data(&loaded.series, &loaded.persons, &config.sim.windows)?;
    let init = init_model(config.model_config(), config.seed)?;
    let started = Instant::now();
    let mut seconds = Vec::new();
    let (params, history) = train_with(init, &data.train, &data.tune, &config.train, |e| {
        seconds.push(started.elapsed().as_secs_f64());
        eprintln!("epoch {:>3}  train {:.5}  tune {:.5}", e.epoch, e.train_loss, e.tune_loss);
    })?;
    io::write_checkpoint(&config.output_path(io::CHECKPOINT_FILE), &params)?;
    let seconds = config.log_wall_time.then_some(seconds.as_slice());
    io::write_epochs(&config.output_path(io::EPOCHS_FILE), &history.epochs, seconds)?;
    Ok((params, history))
}

/// Full evaluation report plus CSV side files.
pub fn cmd_eval(config: &RunConfig, checkpoint: Option<&Path>) -> Result<Evaluation> {
    config.validate()?;
    let params = io::read_checkpoint(&checkpoint_path(config, checkpoint))?;
    let loaded = load(config)?;
    let data = pipeline::experiment_data(&loaded.series, &loaded.persons, &config.sim.windows)?;
    let latent_path = config.data_path(io::LATENT_FILE);
    let latent = if latent_path.exists() {
        Some(io::read_latent(&latent_path)?)
    } else {
        None
    };
    let eval = pipeline::evaluate(&EvalInputs {
        params: &params,
        data: &data,
        persons: &loaded.persons,
        latent: latent.as_deref(),
        baselines: &config.eval.baselines,
        downstream_seeds: &config.eval.downstream_seeds,
        seed: config.seed,
    })?;
    write_evaluation(config, &eval)?;
    Ok(eval)
}

fn write_evaluation(config: &RunConfig, eval: &Evaluation) -> Result<()> {
    io::write_json(&config.output_path(REPORT_FILE), &eval.report)?;
    io::write_signatures(&config.output_path(SIGNATURES_FILE), &eval.signatures)?;

    let own = eval.consistency.iter().map(|c| (c.person_id.clone(), "model".to_string(), c.own_mse));
    let window1 = eval
        .consistency
        .iter()
        .zip(&eval.model_window1)
        .map(|(c, &e)| (c.person_id.clone(), "model_window1".to_string(), e));
    let mut rows: Vec<_> = own.chain(window1).collect();
    rows.extend(io::baseline_rows(&eval.baselines));
    io::write_person_errors(&config.output_path(ERRORS_FILE), &rows)?;

    let path = config.output_path(CONSISTENCY_FILE);
    io::write_atomic(&path, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        for c in &eval.consistency {
            w.serialize(c).map_err(CliError::csv(&path))?;
        }
        w.flush().map_err(CliError::io(&path))
    })?;

    let path = config.output_path(DOWNSTREAM_FILE);
    io::write_atomic(&path, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["task", "features", "seed", "auc"]).map_err(CliError::csv(&path))?;
        for r in &eval.downstream {
            w.write_record([r.task.as_str(), r.features.as_str(), &r.seed.to_string(), &r.auc.to_string()])
                .map_err(CliError::csv(&path))?;
        }
        w.flush().map_err(CliError::io(&path))
    })
}

pub fn parse_axis(axis: &str) -> Result<SweepAxis> {
    SweepAxis::parse(axis).ok_or_else(|| CliError::UnknownAxis(axis.to_string()))
}

/// One sweep over signature size or training-set fraction.
pub fn cmd_sweep(config: &RunConfig, axis: &str) -> Result<SweepTable> {
    let axis = parse_axis(axis)?;
    config.validate()?;
    let loaded = load(config)?;
    let data = pipeline::experiment_data(&loaded.series, &loaded.persons, &config.sim.windows)?;
    let table = match axis {
        SweepAxis::SignatureSize => sweep_signature_size(&config.sweep.signature_sizes, &data, &config.train, config.seed)?,
        SweepAxis::TrainFraction => sweep_train_fraction(
            &config.sweep.train_fractions,
            &data,
            &config.train,
            config.signature_size,
            config.seed,
        )?,
    };
    io::write_sweep(&config.output_path(&sweep_file(axis)), &table)?;
    Ok(table)
}

pub struct PlotRequest<'a> {
    pub person_id: &'a str,
    /// Defaults to the person's last available window.
    pub window: Option<&'a str>,
    pub day: usize,
    pub checkpoint: Option<&'a Path>,
}

/// Reconstruction plot for one person, window and day; returns the SVG path.
pub fn cmd_plot(config: &RunConfig, request: &PlotRequest) -> Result<PathBuf> {
    config.validate()?;
    let params = io::read_checkpoint(&checkpoint_path(config, request.checkpoint))?;
    let loaded = load(config)?;
    let first_window = &config.sim.windows[0];
    let find = |id: &str, window: &str| {
        loaded
            .series
            .iter()
            .find(|s| s.person_id == id && s.window_label == window)
    };
    let index = loaded
        .persons
        .iter()
        .position(|p| p.person_id == request.person_id)
        .ok_or_else(|| CliError::UnknownPerson(request.person_id.to_string()))?;
    let window = match request.window {
        Some(w) => w.to_string(),
        None => loaded
            .series
            .iter()
            .filter(|s| s.person_id == request.person_id)
            .map(|s| s.window_label.clone())
            .next_back()
            .unwrap_or_else(|| first_window.clone()),
    };
    let target = find(request.person_id, &window)
        .ok_or_else(|| CliError::Config(format!("person {} has no {window} window", request.person_id)))?;

    let signature_of = |p: &PersonMeta| -> Result<Vec<f64>> {
        let raw = find(&p.person_id, first_window)
            .ok_or_else(|| CliError::Config(format!("person {} has no {first_window} window", p.person_id)))?;
        Ok(encode(&params, &build_channels(raw)?)?.0.values)
    };
    let other = &loaded.persons[draw_others(loaded.persons.len(), derive_seed(config.seed, &[3]))?[index]];
    let series = build_channels(target)?;
    let own_signature = signature_of(&loaded.persons[index])?;
    let other_signature = signature_of(other)?;
    let curves = plot_series(&PlotInput {
        params: &params,
        series: &series,
        own_signature: &own_signature,
        other_signature: &other_signature,
        day: request.day,
    })?;
    let title = format!(
        "{} {window} day {}: own signature vs signature of {}",
        request.person_id, request.day, other.person_id
    );
    let path = config.output_path(&format!("plot_{}_{window}_day{}.svg", request.person_id, request.day));
    let svg = render_svg(&curves, &title);
    io::write_atomic(&path, |buf| {
        buf.extend_from_slice(svg.as_bytes());
        Ok(())
    })?;
    Ok(path)
}
