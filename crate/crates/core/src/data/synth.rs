//! Seeded synthetic audio-visual event datasets.
//!
//! Each class (and background) owns one unit-norm prototype per modality;
//! prototypes within a modality are mutually orthogonal. A video picks an
//! event class `k` and an interval `[t1, t2)`. Inside the interval both
//! modalities emit `scale · prototype_k + noise`, except that with
//! probability `background_overlap` one modality (chosen by a fair coin)
//! emits the background prototype instead and the segment is labelled
//! background. Outside the interval both modalities emit background.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::data::features::{write_features, FeatureSequence};
use crate::data::manifest::{DatasetManifest, ManifestEntry, Split};
use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::model::SegmentLabels;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub categories: usize,
    pub audio_dim: usize,
    pub visual_dim: usize,
    pub segments: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub noise_sigma: f64,
    pub prototype_scale: f64,
    pub background_overlap: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            categories: 4,
            audio_dim: 16,
            visual_dim: 24,
            segments: 10,
            train: 200,
            val: 50,
            test: 50,
            noise_sigma: 0.5,
            prototype_scale: 2.0,
            background_overlap: 0.2,
            seed: 0,
        }
    }
}

const KEYS: [&str; 11] = [
    "C",
    "d_a",
    "d_v",
    "T",
    "train",
    "val",
    "test",
    "noise_sigma",
    "prototype_scale",
    "background_overlap",
    "seed",
];

impl SynthConfig {
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        kv.reject_unknown(&KEYS)?;
        let mut cfg = SynthConfig::default();
        kv.apply("C", &mut cfg.categories)?;
        kv.apply("d_a", &mut cfg.audio_dim)?;
        kv.apply("d_v", &mut cfg.visual_dim)?;
        kv.apply("T", &mut cfg.segments)?;
        kv.apply("train", &mut cfg.train)?;
        kv.apply("val", &mut cfg.val)?;
        kv.apply("test", &mut cfg.test)?;
        kv.apply("noise_sigma", &mut cfg.noise_sigma)?;
        kv.apply("prototype_scale", &mut cfg.prototype_scale)?;
        kv.apply("background_overlap", &mut cfg.background_overlap)?;
        kv.apply("seed", &mut cfg.seed)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.insert("C", self.categories);
        kv.insert("d_a", self.audio_dim);
        kv.insert("d_v", self.visual_dim);
        kv.insert("T", self.segments);
        kv.insert("train", self.train);
        kv.insert("val", self.val);
        kv.insert("test", self.test);
        kv.insert("noise_sigma", self.noise_sigma);
        kv.insert("prototype_scale", self.prototype_scale);
        kv.insert("background_overlap", self.background_overlap);
        kv.insert("seed", self.seed);
        kv
    }

    pub fn validate(&self) -> Result<()> {
        if self.categories == 0 || self.audio_dim == 0 || self.visual_dim == 0 || self.segments == 0 {
            return Err(Error::Config("C, d_a, d_v and T must be >= 1".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if !self.prototype_scale.is_finite() {
            return Err(Error::Config("prototype_scale must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.background_overlap) {
            return Err(Error::Config(format!(
                "background_overlap must be in [0, 1], got {}",
                self.background_overlap
            )));
        }
        let needed = self.categories + 1;
        if needed > self.audio_dim.min(self.visual_dim) {
            return Err(Error::Config(format!(
                "C + 1 = {needed} orthogonal prototypes do not fit in d_a={} / d_v={}",
                self.audio_dim, self.visual_dim
            )));
        }
        if self.categories > u16::MAX as usize - 1 {
            return Err(Error::DimensionOverflow(format!("C = {}", self.categories)));
        }
        Ok(())
    }
}

/// Standard normal samples via the Box–Muller transform.
pub struct Gaussian<R> {
    rng: R,
    spare: Option<f64>,
}

impl<R: Rng> Gaussian<R> {
    pub fn new(rng: R) -> Self {
        Gaussian { rng, spare: None }
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the log finite.
        let u1 = 1.0 - self.rng.random::<f64>();
        let u2: f64 = self.rng.random();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn rng(&mut self) -> &mut R {
        &mut self.rng
    }
}

/// `count` orthonormal vectors of width `dim` (Gram–Schmidt on Gaussian draws).
fn orthonormal_prototypes<R: Rng>(g: &mut Gaussian<R>, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| g.sample()).collect();
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= proj * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
}

/// Prototypes indexed by class; index `C` is background.
#[derive(Debug, Clone, PartialEq)]
pub struct Prototypes {
    pub audio: Vec<Vec<f64>>,
    pub visual: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub prototypes: Prototypes,
    pub train: Vec<FeatureSequence>,
    pub val: Vec<FeatureSequence>,
    pub test: Vec<FeatureSequence>,
}

impl SynthDataset {
    pub fn split(&self, split: Split) -> &[FeatureSequence] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn category_names(&self) -> Vec<String> {
        (0..self.config.categories).map(|k| format!("class{k}")).collect()
    }
}

fn emit<R: Rng>(g: &mut Gaussian<R>, proto: &[f64], scale: f64, sigma: f64) -> Vec<f32> {
    proto
        .iter()
        .map(|&p| (scale * p + sigma * g.sample()) as f32)
        .collect()
}

/// Generates the whole dataset in memory. A pure function of `cfg`.
pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut g = Gaussian::new(Xoshiro256PlusPlus::seed_from_u64(cfg.seed));
    let n_protos = cfg.categories + 1;
    let prototypes = Prototypes {
        audio: orthonormal_prototypes(&mut g, n_protos, cfg.audio_dim),
        visual: orthonormal_prototypes(&mut g, n_protos, cfg.visual_dim),
    };
    let bg = cfg.categories;
    let t_len = cfg.segments;

    let video = |name: String, g: &mut Gaussian<Xoshiro256PlusPlus>| -> Result<FeatureSequence> {
        let class = g.rng().random_range(0..cfg.categories);
        let len = g.rng().random_range(1..=t_len);
        let start = g.rng().random_range(0..=t_len - len);
        let mut audio = Vec::with_capacity(t_len);
        let mut visual = Vec::with_capacity(t_len);
        let mut labels = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let (ka, kv, label) = if (start..start + len).contains(&t) {
                if g.rng().random_bool(cfg.background_overlap) {
                    if g.rng().random_bool(0.5) {
                        (bg, class, bg)
                    } else {
                        (class, bg, bg)
                    }
                } else {
                    (class, class, class)
                }
            } else {
                (bg, bg, bg)
            };
            audio.push(emit(g, &prototypes.audio[ka], cfg.prototype_scale, cfg.noise_sigma));
            visual.push(emit(g, &prototypes.visual[kv], cfg.prototype_scale, cfg.noise_sigma));
            labels.push(label);
        }
        FeatureSequence::new(name, audio, visual, SegmentLabels::new(labels, cfg.categories)?)
    };

    let mut counter = 0usize;
    let mut make_split = |n: usize, g: &mut Gaussian<Xoshiro256PlusPlus>| -> Result<Vec<FeatureSequence>> {
        (0..n)
            .map(|_| {
                let name = format!("video_{counter:05}");
                counter += 1;
                video(name, g)
            })
            .collect()
    };
    let train = make_split(cfg.train, &mut g)?;
    let val = make_split(cfg.val, &mut g)?;
    let test = make_split(cfg.test, &mut g)?;
    Ok(SynthDataset {
        config: cfg.clone(),
        prototypes,
        train,
        val,
        test,
    })
}

/// Writes feature files under `out_dir/videos/` and `out_dir/manifest.txt`.
/// Returns the manifest and its path.
pub fn write_dataset(dataset: &SynthDataset, out_dir: impl AsRef<Path>) -> Result<(DatasetManifest, std::path::PathBuf)> {
    let out_dir = out_dir.as_ref();
    let videos = out_dir.join("videos");
    std::fs::create_dir_all(&videos).map_err(|e| Error::io(&videos, e))?;
    let mut entries = Vec::new();
    for split in Split::ALL {
        for seq in dataset.split(split) {
            let rel = Path::new("videos").join(format!("{}.avsd", seq.video_id));
            write_features(seq, out_dir.join(&rel))?;
            entries.push(ManifestEntry {
                video_id: seq.video_id.clone(),
                split,
                path: rel,
            });
        }
    }
    let cfg = &dataset.config;
    let manifest = DatasetManifest {
        categories: dataset.category_names(),
        audio_dim: cfg.audio_dim,
        visual_dim: cfg.visual_dim,
        segments: cfg.segments,
        entries,
    };
    let path = out_dir.join("manifest.txt");
    manifest.save(&path)?;
    Ok((manifest, path))
}

/// [`generate`] followed by [`write_dataset`].
pub fn generate_synthetic(cfg: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<(DatasetManifest, std::path::PathBuf)> {
    write_dataset(&generate(cfg)?, out_dir)
}

/// Classifies each segment by the nearest prototype in each modality; the
/// segment is an event only when both modalities agree on a non-background
/// class.
pub fn nearest_prototype_predictions(protos: &Prototypes, seq: &FeatureSequence) -> Vec<usize> {
    let nearest = |x: &[f32], set: &[Vec<f64>]| -> usize {
        let dist = |p: &Vec<f64>| -> f64 {
            p.iter().zip(x).map(|(a, &b)| (a - b as f64).powi(2)).sum()
        };
        let mut best = 0;
        for k in 1..set.len() {
            if dist(&set[k]) < dist(&set[best]) {
                best = k;
            }
        }
        best
    };
    let scale_free = |x: &[f32], set: &[Vec<f64>]| -> usize {
        // Compare against unit prototypes by direction.
        let norm = x.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt().max(1e-12);
        let unit: Vec<f32> = x.iter().map(|&v| (v as f64 / norm) as f32).collect();
        nearest(&unit, set)
    };
    let bg = protos.audio.len() - 1;
    seq.audio
        .iter()
        .zip(&seq.visual)
        .map(|(a, v)| {
            let ka = scale_free(a, &protos.audio);
            let kv = scale_free(v, &protos.visual);
            if ka == kv {
                ka
            } else {
                bg
            }
        })
        .collect()
}
