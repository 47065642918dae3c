//! Standardise, pair, mix and catalogue.
//!
//! All ordering decisions (sorting, halving, speech pairing, SNR assignment,
//! clip ids, splits) are made in a sequential planning pass. Rendering then
//! runs in parallel and only produces audio, so the manifest never depends on
//! scheduling.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::sources::{BuildInputs, Corpus, SourceClip};
use super::split::split_dataset;
use super::standardise::{scale_clip, standardise_gain, PooledRms};
use super::{ClipRecord, DatasetManifest, SceneLabel, SpeechSource, DEFAULT_SPLIT_RATIOS};
use crate::audio::{mix_at_snr, write_wav, Waveform, SILENCE_RMS};
use crate::error::{Error, Result};

/// SNRs assigned to consecutive speech/environment pairs, cycling.
pub const SNR_CYCLE_DB: [f64; 5] = [-10.0, -5.0, 0.0, 5.0, 10.0];

#[derive(Debug, Clone)]
pub struct BuildConfig {
    pub seed: u64,
    pub split_ratios: [f64; 3],
    /// Cap on leftover speech clips emitted as interfering_speakers;
    /// `None` uses every leftover clip.
    pub interfering_speakers_quota: Option<usize>,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            split_ratios: DEFAULT_SPLIT_RATIOS,
            interfering_speakers_quota: None,
        }
    }
}

/// Receives every rendered clip.
pub trait ClipSink: Sync {
    fn emit(&self, record: &ClipRecord, clip: &Waveform) -> Result<()>;
}

/// Writes `<root>/<record.path>` as PCM16.
pub struct DirSink {
    root: PathBuf,
}

impl DirSink {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for label in SceneLabel::ALL {
            let dir = root.join("clips").join(label.as_str());
            std::fs::create_dir_all(&dir)
                .map_err(|e| Error::io(format!("create {}", dir.display()), e))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl ClipSink for DirSink {
    fn emit(&self, record: &ClipRecord, clip: &Waveform) -> Result<()> {
        write_wav(clip, self.root.join(&record.path)).map(|_| ())
    }
}

/// Discards audio; used when only the catalogue is wanted.
pub struct NullSink;

impl ClipSink for NullSink {
    fn emit(&self, _: &ClipRecord, _: &Waveform) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct ClipStats {
    len: usize,
    sample_rate_hz: u32,
    silent: bool,
}

struct Scanned<'a> {
    corpus: &'a Corpus,
    rms: f64,
    /// Non-silent clips sorted by (source id, offset).
    usable: Vec<(&'a SourceClip, ClipStats)>,
}

fn scan(corpus: &Corpus) -> Result<(Scanned<'_>, Vec<String>)> {
    let stats: Vec<(PooledRms, ClipStats)> = corpus
        .clips
        .par_iter()
        .map(|c| {
            let w = c.load()?;
            let mut acc = PooledRms::default();
            acc.push(&w);
            let silent = w.is_empty() || acc.value()? < SILENCE_RMS;
            Ok((
                acc,
                ClipStats {
                    len: w.len(),
                    sample_rate_hz: w.sample_rate_hz(),
                    silent,
                },
            ))
        })
        .collect::<Result<_>>()?;

    // sequential reduction keeps the float sum order fixed
    let mut pooled = PooledRms::default();
    for (acc, _) in &stats {
        pooled.merge(acc);
    }
    let rms = pooled
        .value()
        .map_err(|_| Error::Dataset(format!("corpus {} is empty", corpus.name)))?;

    let mut notes = Vec::new();
    let mut usable = Vec::new();
    for (clip, (_, st)) in corpus.clips.iter().zip(stats) {
        if st.silent {
            tracing::warn!(corpus = %corpus.name, source = %clip.source_id, "skipping silent clip");
            notes.push(format!(
                "skipped silent clip {}@{}s in corpus {}",
                clip.source_id, clip.offset_s, corpus.name
            ));
        } else {
            usable.push((clip, st));
        }
    }
    usable.sort_by(|a, b| {
        a.0.source_id
            .cmp(&b.0.source_id)
            .then(a.0.offset_s.total_cmp(&b.0.offset_s))
    });
    Ok((
        Scanned {
            corpus,
            rms,
            usable,
        },
        notes,
    ))
}

/// What to render for one output clip.
#[derive(Debug, Clone)]
struct RenderJob<'a> {
    env: Option<(&'a SourceClip, f64)>,
    speech: Option<(&'a SourceClip, f64)>,
    snr_db: Option<f64>,
}

impl RenderJob<'_> {
    fn render(&self) -> Result<Waveform> {
        let load = |(clip, gain): (&SourceClip, f64)| -> Result<Waveform> { scale_clip(&clip.load()?, gain) };
        match (self.env, self.speech, self.snr_db) {
            (Some(env), Some(speech), Some(snr)) => mix_at_snr(&load(speech)?, &load(env)?, snr),
            (Some(env), None, None) => load(env),
            (None, Some(speech), None) => load(speech),
            _ => unreachable!("inconsistent render job"),
        }
    }
}

/// Plans and renders the dataset, then assigns splits. Returns the manifest;
/// audio goes to `sink`.
pub fn build_mixed_dataset(inputs: &BuildInputs, cfg: &BuildConfig, sink: &dyn ClipSink) -> Result<DatasetManifest> {
    let (speech, mut notes) = scan(&inputs.speech)?;
    let reference_rms = speech.rms;
    if reference_rms < SILENCE_RMS {
        return Err(Error::Dataset("speech corpus is silent".into()));
    }

    let mut seen_labels = HashMap::new();
    let mut envs = Vec::new();
    for corpus in &inputs.environments {
        let label = corpus
            .label
            .ok_or_else(|| Error::Dataset(format!("corpus {} has no label", corpus.name)))?;
        if label.is_speech_mix() || label == SceneLabel::InterferingSpeakers {
            return Err(Error::Dataset(format!(
                "corpus {}: label {label} is produced by mixing, not supplied",
                corpus.name
            )));
        }
        if let Some(prev) = seen_labels.insert(label, corpus.name.clone()) {
            return Err(Error::Dataset(format!(
                "corpora {prev} and {} both claim label {label}",
                corpus.name
            )));
        }
        let (scanned, n) = scan(corpus)?;
        notes.extend(n);
        envs.push(scanned);
    }
    envs.sort_by_key(|s| s.corpus.label.map(SceneLabel::index));

    let mut per_corpus_rms = BTreeMap::new();
    per_corpus_rms.insert(speech.corpus.name.clone(), speech.rms);
    for e in &envs {
        per_corpus_rms.insert(e.corpus.name.clone(), e.rms);
    }
    let gain_for = |corpus: &Corpus| -> Result<f64> {
        let by = per_corpus_rms.get(&corpus.standardise_by).ok_or_else(|| {
            Error::Dataset(format!(
                "corpus {} standardises by unknown corpus {}",
                corpus.name, corpus.standardise_by
            ))
        })?;
        standardise_gain(*by, reference_rms)
    };

    let needed: usize = envs
        .iter()
        .filter(|e| e.corpus.label.and_then(SceneLabel::speech_mix).is_some())
        .map(|e| e.usable.len() / 2)
        .sum();
    if needed > speech.usable.len() {
        return Err(Error::Dataset(format!(
            "mixing needs {needed} speech clips but only {} are available",
            speech.usable.len()
        )));
    }

    let mut next_id: BTreeMap<SceneLabel, usize> = BTreeMap::new();
    let mut records = Vec::new();
    let mut jobs = Vec::new();
    let mut push = |label: SceneLabel, len: usize, rate: u32, snr_db, speech_src: Option<&SourceClip>, env_src: Option<&SourceClip>| {
        let n = next_id.entry(label).or_insert(0);
        let clip_id = format!("{label}_{n:05}");
        *n += 1;
        records.push(ClipRecord {
            path: format!("clips/{label}/{clip_id}.wav"),
            clip_id,
            label,
            split: None,
            duration_s: len as f64 / rate as f64,
            snr_db,
            speech_source: speech_src.map(|s| SpeechSource {
                file: s.source_id.clone(),
                offset_s: s.offset_s,
            }),
            environment_source: env_src.map(|s| s.source_id.clone()),
        });
    };

    let speech_gain = 1.0;
    let mut speech_iter = speech.usable.iter();
    for env in &envs {
        let label = env.corpus.label.expect("checked above");
        let gain = gain_for(env.corpus)?;
        let unmixed = match label.speech_mix() {
            Some(_) => env.usable.len().div_ceil(2),
            None => env.usable.len(),
        };
        for &(clip, st) in &env.usable[..unmixed] {
            push(label, st.len, st.sample_rate_hz, None, None, Some(clip));
            jobs.push(RenderJob {
                env: Some((clip, gain)),
                speech: None,
                snr_db: None,
            });
        }
        if let Some(mixed_label) = label.speech_mix() {
            for (pair, &(clip, st)) in env.usable[unmixed..].iter().enumerate() {
                let &(sp, sp_st) = speech_iter.next().expect("speech supply checked above");
                if sp_st.len != st.len || sp_st.sample_rate_hz != st.sample_rate_hz {
                    return Err(Error::Dataset(format!(
                        "cannot mix {} ({} samples) with speech {}@{}s ({} samples)",
                        clip.source_id, st.len, sp.source_id, sp.offset_s, sp_st.len
                    )));
                }
                let snr = SNR_CYCLE_DB[pair % SNR_CYCLE_DB.len()];
                push(mixed_label, st.len, st.sample_rate_hz, Some(snr), Some(sp), Some(clip));
                jobs.push(RenderJob {
                    env: Some((clip, gain)),
                    speech: Some((sp, speech_gain)),
                    snr_db: Some(snr),
                });
            }
        }
    }
    let leftover: Vec<_> = speech_iter.collect();
    let quota = cfg.interfering_speakers_quota.unwrap_or(leftover.len()).min(leftover.len());
    for &&(sp, st) in leftover.iter().take(quota) {
        push(SceneLabel::InterferingSpeakers, st.len, st.sample_rate_hz, None, Some(sp), None);
        jobs.push(RenderJob {
            env: None,
            speech: Some((sp, speech_gain)),
            snr_db: None,
        });
    }

    let manifest = DatasetManifest {
        clips: records,
        reference_rms,
        per_corpus_rms,
        seed: cfg.seed,
        split_ratios: cfg.split_ratios,
        notes,
    };
    let manifest = split_dataset(&manifest, cfg.split_ratios, cfg.seed)?;
    manifest.validate()?;

    manifest
        .clips
        .par_iter()
        .zip(jobs.par_iter())
        .try_for_each(|(record, job)| sink.emit(record, &job.render()?))?;
    Ok(manifest)
}
