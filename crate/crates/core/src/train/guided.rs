//! Auxiliary video-level classifiers on the encoders' final hidden states,
//! used only when training in `label_guided` mode.

use rand::Rng;

use crate::error::Result;
use crate::lstm::fill_xavier;
use crate::model::{bce_with_softmax, ModelParams, VideoLabel};
use crate::params::{prefixed, Parameters};
use crate::tensor::{matvec_unchecked, tanh_derivative, Matrix, Real, Vector};

/// `logits = W2 · tanh(W1 · h + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxHead<T> {
    pub w1: Matrix<T>,
    pub b1: Vector<T>,
    pub w2: Matrix<T>,
    pub b2: Vector<T>,
}

impl<T: Real> AuxHead<T> {
    pub fn zeros(hidden: usize, outputs: usize) -> Self {
        AuxHead {
            w1: Matrix::zeros(hidden, hidden),
            b1: Vector::zeros(hidden),
            w2: Matrix::zeros(outputs, hidden),
            b2: Vector::zeros(outputs),
        }
    }

    pub fn init<R: Rng + ?Sized>(hidden: usize, outputs: usize, rng: &mut R) -> Self {
        let mut head = Self::zeros(hidden, outputs);
        fill_xavier(&mut head.w1, rng);
        fill_xavier(&mut head.w2, rng);
        head
    }

    /// BCE of `softmax(head(h))` against `target`. Accumulates parameter
    /// gradients (scaled by `weight`) into `grads` and returns the weighted
    /// loss with the gradient on `h`.
    pub fn loss_and_grad(
        &self,
        h: &Vector<T>,
        target: &VideoLabel,
        weight: T,
        grads: &mut AuxHead<T>,
    ) -> Result<(T, Vector<T>)> {
        let mut z = matvec_unchecked(&self.w1, h);
        z.add_assign(&self.b1);
        let a = z.map(|v| v.tanh());
        let mut logits = matvec_unchecked(&self.w2, &a);
        logits.add_assign(&self.b2);
        let (loss, mut dlogits) = bce_with_softmax(&logits, target)?;
        dlogits.scale(weight);

        grads.w2.add_outer(&dlogits, &a);
        grads.b2.add_assign(&dlogits);
        let mut da = Vector::zeros(a.len());
        self.w2.add_transpose_matvec(&dlogits, &mut da);
        let dz = Vector::from_vec(
            da.iter()
                .zip(a.iter())
                .map(|(&g, &t)| g * tanh_derivative(t))
                .collect(),
        );
        grads.w1.add_outer(&dz, h);
        grads.b1.add_assign(&dz);
        let mut dh = Vector::zeros(h.len());
        self.w1.add_transpose_matvec(&dz, &mut dh);
        Ok((loss * weight, dh))
    }
}

impl<T: Real> Parameters<T> for AuxHead<T> {
    fn tensors(&self) -> Vec<(String, &[T])> {
        vec![
            ("w1".into(), self.w1.as_slice()),
            ("b1".into(), self.b1.as_slice()),
            ("w2".into(), self.w2.as_slice()),
            ("b2".into(), self.b2.as_slice()),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [T])> {
        vec![
            ("w1".into(), self.w1.as_mut_slice()),
            ("b1".into(), self.b1.as_mut_slice()),
            ("w2".into(), self.w2.as_mut_slice()),
            ("b2".into(), self.b2.as_mut_slice()),
        ]
    }
}

/// One head per modality.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxHeads<T> {
    pub audio: AuxHead<T>,
    pub visual: AuxHead<T>,
}

impl<T: Real> Parameters<T> for AuxHeads<T> {
    fn tensors(&self) -> Vec<(String, &[T])> {
        prefixed("aux_audio", self.audio.tensors())
            .chain(prefixed("aux_visual", self.visual.tensors()))
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [T])> {
        let AuxHeads { audio, visual } = self;
        prefixed("aux_audio", audio.tensors_mut())
            .chain(prefixed("aux_visual", visual.tensors_mut()))
            .collect()
    }
}

/// Everything the optimizer updates: the model plus, in `label_guided` mode,
/// the auxiliary heads. Only the model is checkpointed.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainable<T> {
    pub model: ModelParams<T>,
    pub aux: Option<AuxHeads<T>>,
}

impl<T: Real> Trainable<T> {
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill_zero();
        z
    }
}

impl<T: Real> Parameters<T> for Trainable<T> {
    fn tensors(&self) -> Vec<(String, &[T])> {
        let mut out = self.model.tensors();
        if let Some(aux) = &self.aux {
            out.extend(aux.tensors());
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [T])> {
        let Trainable { model, aux } = self;
        let mut out = model.tensors_mut();
        if let Some(aux) = aux {
            out.extend(aux.tensors_mut());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    #[test]
    fn head_gradients_match_fd() {
        let mut r = Xoshiro256PlusPlus::seed_from_u64(2);
        let mut head = AuxHead::<f64>::zeros(4, 3);
        for (_, t) in head.tensors_mut() {
            for x in t {
                *x = r.random_range(-1.0..1.0);
            }
        }
        let h = Vector::from_f64(&[0.2, -0.5, 0.7, 0.1]);
        let y = VideoLabel::new(vec![0.3, 0.0, 0.7]).unwrap();
        let w = 0.7;
        let mut grads = AuxHead::zeros(4, 3);
        let (_, dh) = head.loss_and_grad(&h, &y, w, &mut grads).unwrap();
        let loss = |hd: &AuxHead<f64>, hv: &Vector<f64>| {
            hd.loss_and_grad(hv, &y, w, &mut AuxHead::zeros(4, 3)).unwrap().0
        };
        let eps = 1e-5;
        let mut probe = head.clone();
        for ti in 0..4 {
            for e in 0..probe.tensors()[ti].1.len() {
                let orig = probe.tensors()[ti].1[e];
                probe.tensors_mut()[ti].1[e] = orig + eps;
                let up = loss(&probe, &h);
                probe.tensors_mut()[ti].1[e] = orig - eps;
                let down = loss(&probe, &h);
                probe.tensors_mut()[ti].1[e] = orig;
                let num = (up - down) / (2.0 * eps);
                let ana = grads.tensors()[ti].1[e];
                assert!((ana - num).abs() / num.abs().max(1.0) < 1e-6);
            }
        }
        for k in 0..4 {
            let mut hp = h.clone();
            hp[k] += eps;
            let mut hm = h.clone();
            hm[k] -= eps;
            let num = (loss(&head, &hp) - loss(&head, &hm)) / (2.0 * eps);
            assert!((dh[k] - num).abs() < 1e-6);
        }
    }
}
