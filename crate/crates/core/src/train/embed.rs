use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::dataset::{augment_clip, AugmentationConfig, LabelledClip};
use crate::error::Result;
use crate::model::Classifier;

/// Pooled embeddings of every window of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipEmbeddings {
    pub clip_id: String,
    pub label: usize,
    pub windows: Arc<Vec<Vec<f32>>>,
}

/// Embeddings keyed by (clip id, augmentation epoch). Un-augmented passes use
/// epoch 0, so they are computed once and reused.
#[derive(Debug, Default)]
pub struct EmbeddingCache {
    map: Mutex<HashMap<(String, u32), Arc<Vec<Vec<f32>>>>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl EmbeddingCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops augmented entries from epochs before `epoch`.
    pub fn evict_before(&self, epoch: u32) {
        self.map
            .lock()
            .expect("cache lock")
            .retain(|(_, e), _| *e == 0 || *e >= epoch);
    }

    fn get(&self, key: &(String, u32)) -> Option<Arc<Vec<Vec<f32>>>> {
        let hit = self.map.lock().expect("cache lock").get(key).cloned();
        match hit {
            Some(_) => self.hits.fetch_add(1, Ordering::Relaxed),
            None => self.misses.fetch_add(1, Ordering::Relaxed),
        };
        hit
    }

    fn insert(&self, key: (String, u32), v: Arc<Vec<Vec<f32>>>) {
        self.map.lock().expect("cache lock").insert(key, v);
    }
}

/// Runs the backbone up to global pooling on every window of every clip,
/// augmenting first when `augmentation` is enabled and `epoch > 0`.
pub fn extract_embeddings(
    clips: &[LabelledClip],
    classifier: &Classifier,
    augmentation: &AugmentationConfig,
    epoch: u32,
    cache: &EmbeddingCache,
) -> Result<Vec<ClipEmbeddings>> {
    let key_epoch = if augmentation.is_enabled() { epoch } else { 0 };
    clips
        .par_iter()
        .map(|c| {
            let key = (c.clip_id.clone(), key_epoch);
            let windows = match cache.get(&key) {
                Some(w) => w,
                None => {
                    let mut w = c.load()?;
                    if key_epoch > 0 {
                        w = augment_clip(&w, augmentation, &c.clip_id, epoch)?.0;
                    }
                    let e = Arc::new(classifier.embed_clip(&w)?);
                    cache.insert(key, e.clone());
                    e
                }
            };
            Ok(ClipEmbeddings {
                clip_id: c.clip_id.clone(),
                label: c.label,
                windows,
            })
        })
        .collect()
}
