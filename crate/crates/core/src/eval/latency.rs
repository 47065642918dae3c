use std::path::Path;
use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::audio::{Waveform, SAMPLE_RATE_HZ};
use crate::error::{Error, Result};
use crate::model::{Classifier, ScoreVector};
use crate::seed::rng_for;

/// Anything that turns a buffered clip into window scores.
pub trait ClipClassifier {
    fn classify(&self, w: &Waveform) -> Result<Vec<ScoreVector>>;
}

impl ClipClassifier for Classifier {
    /// Single-threaded, so timings do not depend on the pool size.
    fn classify(&self, w: &Waveform) -> Result<Vec<ScoreVector>> {
        self.infer_clip_serial(w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y = slope x + intercept`, in f64.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} x values for {} y values", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::invalid("x", "need at least two points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("x", "all x values are equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - (slope * a + intercept)).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DurationTiming {
    pub seconds: f64,
    pub runs_ms: Vec<f64>,
    pub mean_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    pub timings: Vec<DurationTiming>,
    /// Mean ms against clip seconds; model load is not inside the timed span.
    pub fit: LinearFit,
    /// One-off load cost, measured separately when known.
    pub model_load_ms: Option<f64>,
    /// The fit with the load cost added to every run, for comparison with
    /// measurements that time loading too.
    pub fit_including_load: Option<LinearFit>,
}

impl LatencyReport {
    pub fn from_timings(timings: Vec<DurationTiming>, model_load_ms: Option<f64>) -> Result<Self> {
        let x: Vec<f64> = timings.iter().map(|t| t.seconds).collect();
        let y: Vec<f64> = timings.iter().map(|t| t.mean_ms).collect();
        let fit = linear_fit(&x, &y)?;
        let fit_including_load = model_load_ms
            .map(|l| linear_fit(&x, &y.iter().map(|v| v + l).collect::<Vec<_>>()))
            .transpose()?;
        Ok(Self {
            timings,
            fit,
            model_load_ms,
            fit_including_load,
        })
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["seconds", "repeat", "ms"])?;
        for t in &self.timings {
            for (i, ms) in t.runs_ms.iter().enumerate() {
                w.write_record([t.seconds.to_string(), i.to_string(), ms.to_string()])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
    }

    /// Writes `latency.csv` and `latency.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("create {}", dir.display()), e))?;
        for (name, body) in [
            ("latency.csv", self.to_csv()?),
            ("latency.json", serde_json::to_string_pretty(self)?),
        ] {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(format!("write {}", p.display()), e))?;
        }
        Ok(())
    }
}

/// Uniform noise at a modest level; content does not affect the cost.
pub fn benchmark_audio(seconds: f64, seed: u64) -> Result<Waveform> {
    let n = (seconds * SAMPLE_RATE_HZ as f64).round() as usize;
    let mut rng = rng_for(seed, &[seconds.to_bits()]);
    Waveform::new((0..n).map(|_| rng.random_range(-0.1f32..0.1)).collect(), SAMPLE_RATE_HZ)
}

/// Times `model` on synthetic clips of each duration. The clock starts once
/// the audio is in memory and stops when the scores are returned, so the
/// log-mel frontend is included. One untimed warm-up run precedes each
/// duration.
pub fn latency_benchmark(
    model: &dyn ClipClassifier,
    durations_s: &[f64],
    repeats: usize,
    model_load_ms: Option<f64>,
) -> Result<LatencyReport> {
    if repeats == 0 {
        return Err(Error::invalid("repeats", "must be at least 1"));
    }
    if durations_s.iter().any(|&d| !(d.is_finite() && d > 0.0)) {
        return Err(Error::invalid("durations", "must be positive"));
    }
    if durations_s.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::invalid("durations", "must be strictly increasing"));
    }
    let mut timings = Vec::with_capacity(durations_s.len());
    for (i, &d) in durations_s.iter().enumerate() {
        let audio = benchmark_audio(d, i as u64)?;
        model.classify(&audio)?;
        let mut runs_ms = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let t0 = Instant::now();
            let scores = model.classify(&audio)?;
            let ms = t0.elapsed().as_secs_f64() * 1e3;
            std::hint::black_box(scores);
            runs_ms.push(ms);
        }
        let mean_ms = runs_ms.iter().sum::<f64>() / repeats as f64;
        tracing::info!(seconds = d, mean_ms, "latency");
        timings.push(DurationTiming {
            seconds: d,
            runs_ms,
            mean_ms,
        });
    }
    LatencyReport::from_timings(timings, model_load_ms)
}

/// Times a loader once, for reporting alongside the per-clip fit.
pub fn time_load<T>(load: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let t0 = Instant::now();
    let v = load()?;
    Ok((v, t0.elapsed().as_secs_f64() * 1e3))
}
