use rayon::prelude::*;
use serde::Serialize;

use super::report::EvalReport;
use crate::audio::apply_gain;
use crate::dataset::LabelledClip;
use crate::error::Result;
use crate::model::Classifier;

/// -20 dB to +20 dB in 5 dB steps.
pub const DEFAULT_GAINS_DB: [f64; 9] = [-20.0, -15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0];

/// Window scores for a set of clips, each window carrying its clip's label.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowScores {
    pub scores: Vec<Vec<f32>>,
    pub truth: Vec<usize>,
    pub windows_per_clip: Vec<usize>,
}

/// Scores every clip after a gain of `gain_db` (0 leaves the audio untouched).
pub fn score_clips(clips: &[LabelledClip], classifier: &Classifier, gain_db: f64) -> Result<WindowScores> {
    let per_clip: Vec<(usize, Vec<Vec<f32>>)> = clips
        .par_iter()
        .map(|c| {
            let mut w = c.load()?;
            if gain_db != 0.0 {
                w = apply_gain(&w, gain_db)?;
            }
            let rows = classifier.infer_clip_serial(&w)?.into_iter().map(|s| s.scores).collect();
            Ok((c.label, rows))
        })
        .collect::<Result<_>>()?;
    let mut out = WindowScores {
        scores: Vec::new(),
        truth: Vec::new(),
        windows_per_clip: Vec::with_capacity(clips.len()),
    };
    for (label, rows) in per_clip {
        out.windows_per_clip.push(rows.len());
        out.truth.extend(std::iter::repeat(label).take(rows.len()));
        out.scores.extend(rows);
    }
    Ok(out)
}

pub fn evaluate_clips(clips: &[LabelledClip], classifier: &Classifier, labels: &[String], gain_db: f64) -> Result<EvalReport> {
    let s = score_clips(clips, classifier, gain_db)?;
    EvalReport::compute(&s.scores, &s.truth, labels)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainPoint {
    pub gain_db: f64,
    pub map: f64,
    pub accuracy: f64,
}

pub fn gain_sweep_eval(
    clips: &[LabelledClip],
    classifier: &Classifier,
    labels: &[String],
    gains_db: &[f64],
) -> Result<Vec<GainPoint>> {
    gains_db
        .iter()
        .map(|&g| {
            if !g.is_finite() {
                return Err(crate::error::Error::invalid("gains_db", "gains must be finite"));
            }
            let r = evaluate_clips(clips, classifier, labels, g)?;
            tracing::info!(gain_db = g, map = r.map, accuracy = r.accuracy, "gain sweep point");
            Ok(GainPoint {
                gain_db: g,
                map: r.map,
                accuracy: r.accuracy,
            })
        })
        .collect()
}
