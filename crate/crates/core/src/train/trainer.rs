//! Training loops for both settings, evaluation, and checkpoint-level helpers.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

use crate::checkpoint;
use crate::data::{DatasetManifest, EvalReport, FeatureSequence, Split};
use crate::error::{Error, Result};
use crate::model::{
    backward, forward, predict_segments, supervised_loss, weak_loss, EncoderHiddenGrads, InitMode,
    ModelDims, ModelInput, ModelParams, SegmentLabels, VideoLabel,
};
use crate::params::Parameters;
use crate::tensor::{Precision, Real};
use crate::train::adam::{adam_step, Adam, AdamState};
use crate::train::config::{Setting, TrainConfig};
use crate::train::guided::{AuxHead, AuxHeads, Trainable};

/// Supervision available to the optimizer for one video.
///
/// The weak setting only ever constructs `Video`, so segment labels cannot
/// leak into its gradients.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Segments { labels: SegmentLabels, video: VideoLabel },
    Video(VideoLabel),
}

impl Target {
    fn video(&self) -> &VideoLabel {
        match self {
            Target::Segments { video, .. } | Target::Video(video) => video,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example<T> {
    pub input: ModelInput<T>,
    pub target: Target,
}

impl<T: Real> Example<T> {
    pub fn from_sequence(seq: &FeatureSequence, setting: Setting) -> Result<Self> {
        let video = seq.video_label()?;
        let target = match setting {
            Setting::Supervised => Target::Segments {
                labels: seq.labels.clone(),
                video,
            },
            Setting::Weak => Target::Video(video),
        };
        Ok(Example {
            input: seq.to_input(),
            target,
        })
    }
}

/// Loss and gradients of one video.
pub fn example_grads<T: Real>(
    params: &Trainable<T>,
    example: &Example<T>,
    aux_weight: f64,
) -> Result<(T, Trainable<T>)> {
    let trace = forward(&params.model, &example.input)?;
    let out = match &example.target {
        Target::Segments { labels, .. } => supervised_loss(&trace, labels)?,
        Target::Video(video) => weak_loss(&trace, video)?,
    };
    let mut loss = out.loss;

    let mut aux_grads = None;
    let mut extra = None;
    if let Some(heads) = &params.aux {
        let (Some(a), Some(v)) = (&trace.audio_final, &trace.visual_final) else {
            return Err(Error::Config("auxiliary heads need both encoders".into()));
        };
        let h = a.h.len();
        let k = params.model.out_b.len();
        let mut g = AuxHeads {
            audio: AuxHead::zeros(h, k),
            visual: AuxHead::zeros(h, k),
        };
        let w = T::lit(aux_weight);
        let target = example.target.video();
        let (la, dha) = heads.audio.loss_and_grad(&a.h, target, w, &mut g.audio)?;
        let (lv, dhv) = heads.visual.loss_and_grad(&v.h, target, w, &mut g.visual)?;
        loss += la + lv;
        aux_grads = Some(g);
        extra = Some(EncoderHiddenGrads {
            audio: dha,
            visual: dhv,
        });
    }

    let model = backward(&params.model, &trace, &out.logit_grads, extra.as_ref())?;
    Ok((
        loss,
        Trainable {
            model,
            aux: aux_grads,
        },
    ))
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-video training loss over the epoch.
    pub loss: f64,
    pub val_acc: f64,
}

impl std::fmt::Display for EpochLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}\t{:.6}\t{:.4}", self.epoch, self.loss, self.val_acc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<T> {
    /// Parameters from the epoch with the best validation accuracy.
    pub params: ModelParams<T>,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
}

impl<T: Real> TrainOutcome<T> {
    pub fn cast<U: Real>(&self) -> TrainOutcome<U> {
        TrainOutcome {
            params: self.params.cast(),
            log: self.log.clone(),
            best_epoch: self.best_epoch,
            best_val_acc: self.best_val_acc,
        }
    }
}

fn dims_of(seqs: &[FeatureSequence], hidden: usize) -> Result<ModelDims> {
    let first = seqs.first().ok_or(Error::Empty("training split"))?;
    let dims = ModelDims {
        audio: first.audio_dim(),
        visual: first.visual_dim(),
        hidden,
        categories: first.categories(),
    };
    check_dims(seqs, dims)?;
    Ok(dims)
}

fn check_dims(seqs: &[FeatureSequence], dims: ModelDims) -> Result<()> {
    for s in seqs {
        let got = (s.audio_dim(), s.visual_dim(), s.categories());
        if got != (dims.audio, dims.visual, dims.categories) {
            return Err(Error::Config(format!(
                "{}: (d_a, d_v, C) = {got:?}, expected ({}, {}, {})",
                s.video_id, dims.audio, dims.visual, dims.categories
            )));
        }
    }
    Ok(())
}

/// Per-segment predictions for every sequence, concatenated.
pub fn predict_all<T: Real>(params: &ModelParams<T>, inputs: &[ModelInput<T>]) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for input in inputs {
        out.extend(predict_segments(&forward(params, input)?));
    }
    Ok(out)
}

/// Frame accuracy and per-class table of `params` on `seqs`.
pub fn evaluate<T: Real>(
    params: &ModelParams<T>,
    seqs: &[FeatureSequence],
    class_names: &[String],
) -> Result<EvalReport> {
    let dims = params.dims();
    check_dims(seqs, dims)?;
    let inputs: Vec<ModelInput<T>> = seqs.iter().map(|s| s.to_input()).collect();
    let preds = predict_all(params, &inputs)?;
    let labels: Vec<usize> = seqs.iter().flat_map(|s| s.labels.classes().to_vec()).collect();
    EvalReport::new(&preds, &labels, class_names)
}

/// Class names `class0 .. class{C-1}, background`.
pub fn default_class_names(categories: usize) -> Vec<String> {
    (0..categories)
        .map(|k| format!("class{k}"))
        .chain(std::iter::once("background".to_owned()))
        .collect()
}

struct Scorer<T> {
    inputs: Vec<ModelInput<T>>,
    labels: Vec<usize>,
}

impl<T: Real> Scorer<T> {
    fn new(seqs: &[FeatureSequence]) -> Self {
        Scorer {
            inputs: seqs.iter().map(|s| s.to_input()).collect(),
            labels: seqs.iter().flat_map(|s| s.labels.classes().to_vec()).collect(),
        }
    }

    fn accuracy(&self, params: &ModelParams<T>) -> Result<f64> {
        crate::data::frame_accuracy(&predict_all(params, &self.inputs)?, &self.labels)
    }
}

/// Trains on `train`, selecting the epoch with the best accuracy on `val`.
/// With an empty `val` the training split is scored instead.
///
/// `on_epoch` sees each log line as it is produced.
pub fn train_sequences<T: Real>(
    train: &[FeatureSequence],
    val: &[FeatureSequence],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let dims = dims_of(train, cfg.hidden)?;
    check_dims(val, dims)?;

    let examples: Vec<Example<T>> = train
        .iter()
        .map(|s| Example::from_sequence(s, cfg.setting))
        .collect::<Result<_>>()?;
    let scorer = Scorer::<T>::new(if val.is_empty() { train } else { val });

    let mut rng = Xoshiro256PlusPlus::seed_from_u64(cfg.seed);
    let model = ModelParams::init(dims, cfg.init_mode, cfg.forget_bias, &mut rng);
    let aux = (cfg.init_mode == InitMode::LabelGuided).then(|| AuxHeads {
        audio: AuxHead::init(dims.hidden, dims.outputs(), &mut rng),
        visual: AuxHead::init(dims.hidden, dims.outputs(), &mut rng),
    });
    let mut params = Trainable { model, aux };
    let mut state = AdamState::new(&params);
    let adam = Adam {
        learning_rate: cfg.learning_rate,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        eps: cfg.adam_eps,
        clip_norm: cfg.clip_norm,
    };

    let pool = if cfg.threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.threads)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };

    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best = (0usize, f64::NEG_INFINITY, params.model.clone());
    let mut since_best = 0usize;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        for batch in order.chunks(cfg.batch_size) {
            let run = |&i: &usize| example_grads(&params, &examples[i], cfg.aux_weight);
            let results: Vec<Result<(T, Trainable<T>)>> = match &pool {
                Some(pool) => pool.install(|| batch.par_iter().map(run).collect()),
                None => batch.iter().map(run).collect(),
            };
            // Fixed reduction order: batch position.
            let mut total = params.zeros_like();
            for (pos, r) in results.into_iter().enumerate() {
                let (loss, g) = r?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite {
                        tensor: format!("loss of video {}", train[batch[pos]].video_id),
                    });
                }
                epoch_loss += loss.to_f64();
                total.accumulate(&g);
            }
            total.scale(T::one() / T::lit(batch.len() as f64));
            adam_step(&mut params, &mut total, &mut state, &adam)?;
        }

        let val_acc = scorer.accuracy(&params.model)?;
        let entry = EpochLog {
            epoch,
            loss: epoch_loss / examples.len() as f64,
            val_acc,
        };
        on_epoch(&entry);
        log.push(entry);

        if val_acc > best.1 {
            best = (epoch, val_acc, params.model.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }

    Ok(TrainOutcome {
        params: best.2,
        log,
        best_epoch: best.0,
        best_val_acc: best.1,
    })
}

/// [`train_sequences`] in the precision named by the config, returned in
/// 64-bit form (exact for both precisions).
pub fn train_with_precision(
    train: &[FeatureSequence],
    val: &[FeatureSequence],
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome<f64>> {
    match cfg.precision {
        Precision::Standard => Ok(train_sequences::<f32>(train, val, cfg, on_epoch)?.cast()),
        Precision::Checking => train_sequences::<f64>(train, val, cfg, on_epoch),
    }
}

/// Loads the manifest's train and val splits and trains on them.
pub fn train_manifest(
    manifest_path: impl AsRef<Path>,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<(DatasetManifest, TrainOutcome<f64>)> {
    let path = manifest_path.as_ref();
    let manifest = DatasetManifest::load(path)?;
    let train = manifest.load_split(path, Split::Train)?;
    let val = manifest.load_split(path, Split::Val)?;
    let outcome = train_with_precision(&train, &val, cfg, on_epoch)?;
    Ok((manifest, outcome))
}

pub fn class_names(manifest: &DatasetManifest) -> Vec<String> {
    manifest
        .categories
        .iter()
        .cloned()
        .chain(std::iter::once("background".to_owned()))
        .collect()
}

/// Evaluates a checkpoint on one split of a manifest.
pub fn evaluate_checkpoint(
    checkpoint_path: impl AsRef<Path>,
    manifest_path: impl AsRef<Path>,
    split: Split,
) -> Result<EvalReport> {
    let params: ModelParams<f64> = checkpoint::load(checkpoint_path)?;
    let path = manifest_path.as_ref();
    let manifest = DatasetManifest::load(path)?;
    let dims = params.dims();
    let declared = (manifest.audio_dim, manifest.visual_dim, manifest.num_categories());
    if declared != (dims.audio, dims.visual, dims.categories) {
        return Err(Error::Config(format!(
            "checkpoint expects (d_a, d_v, C) = ({}, {}, {}) but manifest declares {declared:?}",
            dims.audio, dims.visual, dims.categories
        )));
    }
    let seqs = manifest.load_split(path, split)?;
    evaluate(&params, &seqs, &class_names(&manifest))
}
