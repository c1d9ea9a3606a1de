//! Two-panel SVG of one day: activity and sleep on top, observed and
//! predicted heart rate below.

use std::fmt::Write;

use cardiosig_core::model::{decode, ModelParams};
use cardiosig_core::preprocess::{PreprocessedSeries, SleepState, MINUTES_PER_DAY};

use crate::error::{CliError, Result};

const WIDTH: f64 = 960.0;
const MARGIN: f64 = 50.0;
const PANEL: f64 = 180.0;
const GAP: f64 = 40.0;

pub struct PlotInput<'a> {
    pub params: &'a ModelParams,
    pub series: &'a PreprocessedSeries,
    pub own_signature: &'a [f64],
    pub other_signature: &'a [f64],
    pub day: usize,
}

/// Curves in beats per minute over the plotted day.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotSeries {
    pub start: usize,
    pub observed: Vec<Option<f64>>,
    pub own: Vec<f64>,
    pub other: Vec<f64>,
    pub steps: Vec<f64>,
    pub sleep: Vec<SleepState>,
}

pub fn plot_series(input: &PlotInput) -> Result<PlotSeries> {
    let s = input.series;
    let start = input.day * MINUTES_PER_DAY;
    if start >= s.len() {
        return Err(CliError::Config(format!(
            "day {} is outside the {}-day window",
            input.day,
            s.len() / MINUTES_PER_DAY
        )));
    }
    let range = start..(start + MINUTES_PER_DAY).min(s.len());
    // The decoder is causal, so decoding the whole window and slicing sees
    // the same history as the full-length model input.
    let own = decode(input.params, &s.activity, input.own_signature)?;
    let other = decode(input.params, &s.activity, input.other_signature)?;
    let hr = s.hr.data();
    let mask = s.loss_mask.data();
    let steps = &s.activity.data()[..s.len()];
    Ok(PlotSeries {
        start,
        observed: range
            .clone()
            .map(|t| (mask[t] > 0.0).then(|| s.unwhiten(hr[t])))
            .collect(),
        own: own[range.clone()].iter().map(|&z| s.unwhiten(z)).collect(),
        other: other[range.clone()].iter().map(|&z| s.unwhiten(z)).collect(),
        steps: steps[range.clone()].to_vec(),
        sleep: range.map(|t| s.sleep_state(t)).collect(),
    })
}

struct Axis {
    lo: f64,
    hi: f64,
    top: f64,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, top: f64) -> Self {
        let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-9 {
            hi = lo + 1.0;
        }
        Self { lo, hi, top }
    }

    fn y(&self, v: f64) -> f64 {
        self.top + PANEL * (1.0 - (v - self.lo) / (self.hi - self.lo))
    }
}

fn x(t: usize, n: usize) -> f64 {
    MARGIN + (WIDTH - 2.0 * MARGIN) * t as f64 / (n.max(2) - 1) as f64
}

/// Polylines broken at missing values.
fn polylines(out: &mut String, class: &str, values: &[Option<f64>], axis: &Axis) {
    let n = values.len();
    let mut points = String::new();
    let mut flush = |points: &mut String| {
        if !points.is_empty() {
            let _ = writeln!(out, r#"<polyline class="{class}" points="{}"/>"#, points.trim_end());
            points.clear();
        }
    };
    for (t, v) in values.iter().enumerate() {
        match v {
            Some(v) => {
                let _ = write!(points, "{:.1},{:.1} ", x(t, n), axis.y(*v));
            }
            None => flush(&mut points),
        }
    }
    flush(&mut points);
}

pub fn render_svg(p: &PlotSeries, title: &str) -> String {
    let n = p.own.len();
    let height = 2.0 * PANEL + GAP + 2.0 * MARGIN;
    let top = Axis::new(p.steps.iter().copied(), MARGIN);
    let hr_values = p.observed.iter().flatten().chain(&p.own).chain(&p.other).copied();
    let bottom = Axis::new(hr_values, MARGIN + PANEL + GAP);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#
    );
    out.push_str(
        "<style>\
         polyline{fill:none;stroke-width:1}\
         .steps{stroke:#555}.observed{stroke:#000}.own{stroke:#d62728}.other{stroke:#1f77b4;stroke-dasharray:4 2}\
         .asleep{fill:#9ecae1;opacity:0.5}.restless{fill:#fdd0a2;opacity:0.5}\
         text{font:12px sans-serif}\
         </style>\n",
    );
    let _ = writeln!(out, r#"<text x="{MARGIN}" y="20">{}</text>"#, escape(title));

    out.push_str("<g id=\"activity\">\n");
    let mut t = 0;
    while t < n {
        let state = p.sleep[t];
        let run = p.sleep[t..].iter().take_while(|&&s| s == state).count();
        if state != SleepState::Awake {
            let _ = writeln!(
                out,
                r#"<rect class="{}" x="{:.1}" y="{MARGIN}" width="{:.1}" height="{PANEL}"/>"#,
                state.as_str(),
                x(t, n),
                x(t + run - 1, n) - x(t, n) + 1.0,
            );
        }
        t += run;
    }
    let steps: Vec<Option<f64>> = p.steps.iter().map(|&v| Some(v)).collect();
    polylines(&mut out, "steps", &steps, &top);
    let _ = writeln!(out, r#"<text x="{MARGIN}" y="{}">steps (transformed), sleep shaded</text>"#, MARGIN - 5.0);
    out.push_str("</g>\n");

    out.push_str("<g id=\"heart-rate\">\n");
    polylines(&mut out, "observed", &p.observed, &bottom);
    for (class, values) in [("own", &p.own), ("other", &p.other)] {
        let values: Vec<Option<f64>> = values.iter().map(|&v| Some(v)).collect();
        polylines(&mut out, class, &values, &bottom);
    }
    let _ = writeln!(
        out,
        r#"<text x="{MARGIN}" y="{:.1}">heart rate {:.0}-{:.0} bpm: observed (black), own signature (red), other signature (blue, dashed)</text>"#,
        bottom.top - 5.0,
        bottom.lo,
        bottom.hi,
    );
    out.push_str("</g>\n</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
