//! The full network: two modality encoders, fusion, a decoder conditioned on
//! the fused state, and a per-segment affine output layer.
//!
//! The decoder consumes `concat(a_t, v_t)` at every step and emits logits
//! `m_t = W_out · h_t + b_out` over `C + 1` classes (index `C` is background).
//! Video-level predictions average the logits over time, then apply softmax.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result, Shape};
use crate::fusion::{fuse, fuse_backward, FusedState, FusionParams, FusionTrace};
use crate::lstm::{self, encode_sequence, run_sequence, sequence_backward, EncoderTrace, LstmParams, LstmState};
use crate::params::{prefixed, Parameters};
use crate::tensor::{concat, log_softmax_at, softmax, softmax_grad, Matrix, Real, Vector};

/// Floor applied to probabilities before taking logs in the binary
/// cross-entropy.
pub const LOG_CLAMP: f64 = 1e-12;

/// How the decoder's initial state is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum InitMode {
    /// Residual fusion of both encoders.
    #[default]
    Fusion,
    /// Visual encoder's final state only.
    VisualOnly,
    /// Audio encoder's final state only.
    AudioOnly,
    /// Sum of both encoders' final states, with an auxiliary video-level
    /// classifier on each encoder's hidden state during training.
    LabelGuided,
}

impl InitMode {
    pub const ALL: [InitMode; 4] = [
        InitMode::Fusion,
        InitMode::VisualOnly,
        InitMode::AudioOnly,
        InitMode::LabelGuided,
    ];

    pub fn code(self) -> u32 {
        match self {
            InitMode::Fusion => 0,
            InitMode::VisualOnly => 1,
            InitMode::AudioOnly => 2,
            InitMode::LabelGuided => 3,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.code() == code)
    }

    fn uses_audio(self) -> bool {
        self != InitMode::VisualOnly
    }

    fn uses_visual(self) -> bool {
        self != InitMode::AudioOnly
    }
}

impl FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fusion" => Ok(InitMode::Fusion),
            "visual_only" => Ok(InitMode::VisualOnly),
            "audio_only" => Ok(InitMode::AudioOnly),
            "label_guided" => Ok(InitMode::LabelGuided),
            other => Err(Error::Config(format!("unknown init mode {other:?}"))),
        }
    }
}

impl fmt::Display for InitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitMode::Fusion => "fusion",
            InitMode::VisualOnly => "visual_only",
            InitMode::AudioOnly => "audio_only",
            InitMode::LabelGuided => "label_guided",
        })
    }
}

/// Sizes that fix the layout of a [`ModelParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub audio: usize,
    pub visual: usize,
    pub hidden: usize,
    /// Event categories `C`, not counting background.
    pub categories: usize,
}

impl ModelDims {
    pub fn outputs(&self) -> usize {
        self.categories + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.audio == 0 || self.visual == 0 || self.hidden == 0 || self.categories == 0 {
            return Err(Error::Config(format!("all model dims must be >= 1: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub init_mode: InitMode,
    pub enc_audio: LstmParams<T>,
    pub enc_visual: LstmParams<T>,
    pub fusion: FusionParams<T>,
    pub decoder: LstmParams<T>,
    pub out_w: Matrix<T>,
    pub out_b: Vector<T>,
}

impl<T: Real> ModelParams<T> {
    pub fn zeros(dims: ModelDims, init_mode: InitMode) -> Self {
        let h = dims.hidden;
        ModelParams {
            init_mode,
            enc_audio: LstmParams::zeros(dims.audio, h),
            enc_visual: LstmParams::zeros(dims.visual, h),
            fusion: FusionParams::zeros(h),
            decoder: LstmParams::zeros(dims.audio + dims.visual, h),
            out_w: Matrix::zeros(dims.outputs(), h),
            out_b: Vector::zeros(dims.outputs()),
        }
    }

    pub fn init<R: Rng + ?Sized>(
        dims: ModelDims,
        init_mode: InitMode,
        forget_bias: f64,
        rng: &mut R,
    ) -> Self {
        let h = dims.hidden;
        let mut out_w = Matrix::zeros(dims.outputs(), h);
        let enc_audio = LstmParams::init(dims.audio, h, forget_bias, rng);
        let enc_visual = LstmParams::init(dims.visual, h, forget_bias, rng);
        let fusion = FusionParams::init(h, rng);
        let decoder = LstmParams::init(dims.audio + dims.visual, h, forget_bias, rng);
        lstm::fill_xavier(&mut out_w, rng);
        ModelParams {
            init_mode,
            enc_audio,
            enc_visual,
            fusion,
            decoder,
            out_w,
            out_b: Vector::zeros(dims.outputs()),
        }
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            audio: self.enc_audio.input_size(),
            visual: self.enc_visual.input_size(),
            hidden: self.decoder.hidden_size(),
            categories: self.out_b.len().saturating_sub(1),
        }
    }

    /// Zeroed bundle with the same layout, for gradient accumulation.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dims(), self.init_mode)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.dims();
        dims.validate()?;
        self.enc_audio.validate()?;
        self.enc_visual.validate()?;
        self.fusion.validate()?;
        self.decoder.validate()?;
        let h = dims.hidden;
        let checks = [
            (Shape::Vector(h), Shape::Vector(self.enc_audio.hidden_size())),
            (Shape::Vector(h), Shape::Vector(self.enc_visual.hidden_size())),
            (Shape::Vector(h), Shape::Vector(self.fusion.width())),
            (
                Shape::Vector(dims.audio + dims.visual),
                Shape::Vector(self.decoder.input_size()),
            ),
            (Shape::Matrix(dims.outputs(), h), self.out_w.shape()),
        ];
        for (want, got) in checks {
            if want != got {
                return Err(Error::ShapeMismatch {
                    op: "model params",
                    left: want,
                    right: got,
                });
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            init_mode: self.init_mode,
            enc_audio: self.enc_audio.cast(),
            enc_visual: self.enc_visual.cast(),
            fusion: self.fusion.cast(),
            decoder: self.decoder.cast(),
            out_w: self.out_w.cast(),
            out_b: self.out_b.cast(),
        }
    }
}

impl<T: Real> Parameters<T> for ModelParams<T> {
    /// Order: audio encoder, visual encoder, fusion, decoder, output layer.
    fn tensors(&self) -> Vec<(String, &[T])> {
        lstm::named("enc_audio", &self.enc_audio)
            .chain(lstm::named("enc_visual", &self.enc_visual))
            .chain(prefixed("fusion", self.fusion.tensors()))
            .chain(lstm::named("decoder", &self.decoder))
            .chain([
                ("out_w".to_owned(), self.out_w.as_slice()),
                ("out_b".to_owned(), self.out_b.as_slice()),
            ])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [T])> {
        let ModelParams {
            enc_audio,
            enc_visual,
            fusion,
            decoder,
            out_w,
            out_b,
            ..
        } = self;
        lstm::named_mut("enc_audio", enc_audio)
            .chain(lstm::named_mut("enc_visual", enc_visual))
            .chain(prefixed("fusion", fusion.tensors_mut()))
            .chain(lstm::named_mut("decoder", decoder))
            .chain([
                ("out_w".to_owned(), out_w.as_mut_slice()),
                ("out_b".to_owned(), out_b.as_mut_slice()),
            ])
            .collect()
    }
}

/// Per-segment model inputs in the working precision.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput<T> {
    pub audio: Vec<Vector<T>>,
    pub visual: Vec<Vector<T>>,
}

impl<T: Real> ModelInput<T> {
    pub fn len(&self) -> usize {
        self.audio.len()
    }

    pub fn is_empty(&self) -> bool {
        self.audio.is_empty()
    }
}

/// Per-segment one-hot labels stored as class indices over `C + 1` classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentLabels {
    classes: Vec<usize>,
    categories: usize,
}

impl SegmentLabels {
    /// `classes[t]` in `0..=categories`; `categories` is background.
    pub fn new(classes: Vec<usize>, categories: usize) -> Result<Self> {
        if let Some((t, &k)) = classes.iter().enumerate().find(|(_, &k)| k > categories) {
            return Err(Error::InvalidLabel(format!(
                "segment {t}: class {k} exceeds background index {categories}"
            )));
        }
        Ok(SegmentLabels {
            classes,
            categories,
        })
    }

    /// Validates that every row is exactly one-hot.
    pub fn from_one_hot(rows: &[Vec<f64>]) -> Result<Self> {
        let width = rows.first().map_or(0, |r| r.len());
        if width < 2 {
            return Err(Error::InvalidLabel("one-hot width must be >= 2".into()));
        }
        let mut classes = Vec::with_capacity(rows.len());
        for (t, row) in rows.iter().enumerate() {
            let ones: Vec<usize> = (0..row.len()).filter(|&k| row[k] == 1.0).collect();
            let zeros = row.iter().filter(|&&x| x == 0.0).count();
            if row.len() != width || ones.len() != 1 || zeros != width - 1 {
                return Err(Error::InvalidLabel(format!("segment {t} is not one-hot: {row:?}")));
            }
            classes.push(ones[0]);
        }
        Self::new(classes, width - 1)
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn categories(&self) -> usize {
        self.categories
    }

    pub fn background(&self) -> usize {
        self.categories
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn one_hot<T: Real>(&self, t: usize) -> Vector<T> {
        Vector::one_hot(self.categories + 1, self.classes[t])
    }
}

/// Video-level label: the mean of the segment one-hots.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoLabel(Vec<f64>);

impl VideoLabel {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("video label"));
        }
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidLabel(format!(
                "video label entry {bad} outside [0, 1]"
            )));
        }
        Ok(VideoLabel(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `Y = (1/T) Σ_t y_t`.
pub fn video_label_from_segments(labels: &SegmentLabels) -> Result<VideoLabel> {
    if labels.is_empty() {
        return Err(Error::Empty("video_label_from_segments"));
    }
    let mut y = vec![0.0; labels.categories + 1];
    for &k in &labels.classes {
        y[k] += 1.0;
    }
    let t = labels.len() as f64;
    for v in &mut y {
        *v /= t;
    }
    VideoLabel::new(y)
}

/// Everything the forward pass computes, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTrace<T> {
    pub init_mode: InitMode,
    pub audio_final: Option<LstmState<T>>,
    pub visual_final: Option<LstmState<T>>,
    pub audio_trace: Option<EncoderTrace<T>>,
    pub visual_trace: Option<EncoderTrace<T>>,
    pub fusion_trace: Option<FusionTrace<T>>,
    pub decoder_init: LstmState<T>,
    pub decoder_trace: EncoderTrace<T>,
    /// `m_t`, one per segment.
    pub logits: Vec<Vector<T>>,
    /// `softmax(m_t)`.
    pub probs: Vec<Vector<T>>,
    /// `m̂`, the time-averaged logits.
    pub pooled: Vector<T>,
    /// `softmax(m̂)`.
    pub pooled_prob: Vector<T>,
}

impl<T: Real> PredictionTrace<T> {
    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn outputs(&self) -> usize {
        self.pooled.len()
    }
}

/// `m̂ = (1/T) Σ_t m_t`.
pub fn average_pool<T: Real>(logits: &[Vector<T>]) -> Result<Vector<T>> {
    let first = logits.first().ok_or(Error::Empty("average_pool"))?;
    let mut sum = Vector::zeros(first.len());
    for m in logits {
        if m.len() != first.len() {
            return Err(Error::ShapeMismatch {
                op: "average_pool",
                left: first.shape(),
                right: m.shape(),
            });
        }
        sum.add_assign(m);
    }
    sum.scale(T::one() / T::lit(logits.len() as f64));
    Ok(sum)
}

pub fn forward<T: Real>(params: &ModelParams<T>, input: &ModelInput<T>) -> Result<PredictionTrace<T>> {
    let len = input.audio.len();
    if len == 0 {
        return Err(Error::Empty("forward"));
    }
    if input.visual.len() != len {
        return Err(Error::LengthMismatch {
            expected: len,
            found: input.visual.len(),
        });
    }
    let dims = params.dims();
    for (x, d) in input
        .audio
        .iter()
        .map(|a| (a, dims.audio))
        .chain(input.visual.iter().map(|v| (v, dims.visual)))
    {
        if x.len() != d {
            return Err(Error::ShapeMismatch {
                op: "forward input",
                left: Shape::Vector(d),
                right: x.shape(),
            });
        }
    }

    let mode = params.init_mode;
    let (audio_final, audio_trace) = if mode.uses_audio() {
        let (s, t) = encode_sequence(&params.enc_audio, &input.audio, len)?;
        (Some(s), Some(t))
    } else {
        (None, None)
    };
    let (visual_final, visual_trace) = if mode.uses_visual() {
        let (s, t) = encode_sequence(&params.enc_visual, &input.visual, len)?;
        (Some(s), Some(t))
    } else {
        (None, None)
    };

    let mut fusion_trace = None;
    let decoder_init = match (mode, &audio_final, &visual_final) {
        (InitMode::Fusion, Some(a), Some(v)) => {
            let (fused, trace) = fuse(&params.fusion, a, v)?;
            fusion_trace = Some(trace);
            fused.into()
        }
        (InitMode::LabelGuided, Some(a), Some(v)) => LstmState {
            h: crate::tensor::add(&a.h, &v.h)?,
            c: crate::tensor::add(&a.c, &v.c)?,
        },
        (InitMode::AudioOnly, Some(a), _) => a.clone(),
        (InitMode::VisualOnly, _, Some(v)) => v.clone(),
        _ => unreachable!("encoder selection follows init mode"),
    };

    let joint: Vec<Vector<T>> = input
        .audio
        .iter()
        .zip(&input.visual)
        .map(|(a, v)| concat(a, v))
        .collect();
    let (_, decoder_trace) = run_sequence(&params.decoder, &decoder_init, &joint)?;

    let mut logits = Vec::with_capacity(len);
    let mut probs = Vec::with_capacity(len);
    for h in decoder_trace.hidden_states() {
        let mut m = crate::tensor::matvec_unchecked(&params.out_w, h);
        m.add_assign(&params.out_b);
        probs.push(softmax(&m)?);
        logits.push(m);
    }
    let pooled = average_pool(&logits)?;
    let pooled_prob = softmax(&pooled)?;

    Ok(PredictionTrace {
        init_mode: mode,
        audio_final,
        visual_final,
        audio_trace,
        visual_trace,
        fusion_trace,
        decoder_init,
        decoder_trace,
        logits,
        probs,
        pooled,
        pooled_prob,
    })
}

/// Extra upstream gradients on the encoders' final hidden states.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderHiddenGrads<T> {
    pub audio: Vector<T>,
    pub visual: Vector<T>,
}

/// Backpropagates per-segment logit gradients (and optional encoder-state
/// gradients) to every parameter.
pub fn backward<T: Real>(
    params: &ModelParams<T>,
    trace: &PredictionTrace<T>,
    logit_grads: &[Vector<T>],
    extra: Option<&EncoderHiddenGrads<T>>,
) -> Result<ModelParams<T>> {
    if logit_grads.len() != trace.len() {
        return Err(Error::LengthMismatch {
            expected: trace.len(),
            found: logit_grads.len(),
        });
    }
    if trace.init_mode != params.init_mode {
        return Err(Error::Config(format!(
            "trace built with init mode {} but params use {}",
            trace.init_mode, params.init_mode
        )));
    }
    let h = params.decoder.hidden_size();
    let mut grads = params.zeros_like();

    let mut step_dh = Vec::with_capacity(trace.len());
    for (dm, hidden) in logit_grads.iter().zip(trace.decoder_trace.hidden_states()) {
        if dm.len() != params.out_b.len() {
            return Err(Error::ShapeMismatch {
                op: "backward logits",
                left: params.out_b.shape(),
                right: dm.shape(),
            });
        }
        grads.out_w.add_outer(dm, hidden);
        grads.out_b.add_assign(dm);
        let mut dh = Vector::zeros(h);
        params.out_w.add_transpose_matvec(dm, &mut dh);
        step_dh.push(dh);
    }

    let dec = sequence_backward(
        &params.decoder,
        &trace.decoder_trace,
        Some(&step_dh),
        &LstmState::zeros(h),
    )?;
    grads.decoder = dec.params;
    let d_init = dec.initial;

    let (mut d_audio, mut d_visual) = match params.init_mode {
        InitMode::Fusion => {
            let ft = trace
                .fusion_trace
                .as_ref()
                .ok_or_else(|| Error::Config("fusion trace missing".into()))?;
            let fg = fuse_backward(ft, &params.fusion, &FusedState { h: d_init.h, c: d_init.c })?;
            grads.fusion = fg.params;
            (Some(fg.audio), Some(fg.visual))
        }
        InitMode::LabelGuided => (Some(d_init.clone()), Some(d_init)),
        InitMode::AudioOnly => (Some(d_init), None),
        InitMode::VisualOnly => (None, Some(d_init)),
    };
    if let Some(extra) = extra {
        if let Some(d) = d_audio.as_mut() {
            d.h.add_assign(&extra.audio);
        }
        if let Some(d) = d_visual.as_mut() {
            d.h.add_assign(&extra.visual);
        }
    }

    if let (Some(d), Some(t)) = (d_audio, trace.audio_trace.as_ref()) {
        grads.enc_audio = sequence_backward(&params.enc_audio, t, None, &d)?.params;
    }
    if let (Some(d), Some(t)) = (d_visual, trace.visual_trace.as_ref()) {
        grads.enc_visual = sequence_backward(&params.enc_visual, t, None, &d)?.params;
    }
    Ok(grads)
}

/// A scalar loss with its gradient on each segment's logits.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput<T> {
    pub loss: T,
    pub logit_grads: Vec<Vector<T>>,
}

/// `(1/T) Σ_t −log p_t[y_t]`.
pub fn supervised_loss<T: Real>(trace: &PredictionTrace<T>, labels: &SegmentLabels) -> Result<LossOutput<T>> {
    if labels.len() != trace.len() {
        return Err(Error::LengthMismatch {
            expected: trace.len(),
            found: labels.len(),
        });
    }
    if labels.categories + 1 != trace.outputs() {
        return Err(Error::InvalidLabel(format!(
            "labels cover {} classes but model emits {}",
            labels.categories + 1,
            trace.outputs()
        )));
    }
    let inv_t = T::one() / T::lit(trace.len() as f64);
    let mut loss = T::zero();
    let mut logit_grads = Vec::with_capacity(trace.len());
    for ((m, p), &k) in trace.logits.iter().zip(&trace.probs).zip(&labels.classes) {
        loss -= log_softmax_at(m, k)?;
        let mut g = p.clone();
        g[k] -= T::one();
        g.scale(inv_t);
        logit_grads.push(g);
    }
    Ok(LossOutput {
        loss: loss * inv_t,
        logit_grads,
    })
}

/// Class-averaged binary cross-entropy between `probs` and `target`, with
/// its gradient on `probs`. Logs are clamped below at [`LOG_CLAMP`].
pub fn binary_cross_entropy<T: Real>(probs: &Vector<T>, target: &VideoLabel) -> Result<(T, Vector<T>)> {
    if probs.len() != target.len() {
        return Err(Error::InvalidLabel(format!(
            "video label has {} classes but prediction has {}",
            target.len(),
            probs.len()
        )));
    }
    let floor = T::lit(LOG_CLAMP);
    let inv_k = T::one() / T::lit(probs.len() as f64);
    let mut loss = T::zero();
    let mut grad = Vector::zeros(probs.len());
    for (k, (&p, &y)) in probs.iter().zip(target.as_slice()).enumerate() {
        let y = T::lit(y);
        let q = T::one() - p;
        let (lp, dp) = if p > floor { (p.ln(), y / p) } else { (floor.ln(), T::zero()) };
        let (lq, dq) = if q > floor {
            (q.ln(), (T::one() - y) / q)
        } else {
            (floor.ln(), T::zero())
        };
        loss -= y * lp + (T::one() - y) * lq;
        grad[k] = -(dp - dq) * inv_k;
    }
    Ok((loss * inv_k, grad))
}

/// BCE between `softmax(logits)` and `target`, with the gradient on the logits.
pub fn bce_with_softmax<T: Real>(logits: &Vector<T>, target: &VideoLabel) -> Result<(T, Vector<T>)> {
    let p = softmax(logits)?;
    let (loss, dp) = binary_cross_entropy(&p, target)?;
    Ok((loss, softmax_grad(&p, &dp)?))
}

/// Binary cross-entropy on the pooled prediction `softmax(m̂)`.
pub fn weak_loss<T: Real>(trace: &PredictionTrace<T>, label: &VideoLabel) -> Result<LossOutput<T>> {
    let (loss, dp) = binary_cross_entropy(&trace.pooled_prob, label)?;
    let mut dpooled = softmax_grad(&trace.pooled_prob, &dp)?;
    dpooled.scale(T::one() / T::lit(trace.len() as f64));
    Ok(LossOutput {
        loss,
        logit_grads: vec![dpooled; trace.len()],
    })
}

/// Index of the largest entry of a probability vector; ties go to the lowest
/// index.
pub fn argmax_class<T: Real>(p: &Vector<T>) -> usize {
    p.argmax()
}

/// Per-segment decisions `argmax_k p_t^k`.
pub fn predict_segments<T: Real>(trace: &PredictionTrace<T>) -> Vec<usize> {
    trace.probs.iter().map(argmax_class).collect()
}
