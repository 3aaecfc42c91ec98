//! Uniform access to the named tensors of a parameter bundle.
//!
//! Gradient bundles reuse the parameter types, so the same visitor serves
//! the optimizer, checkpointing, clipping and gradient checking.

use crate::tensor::Real;

pub trait Parameters<T: Real> {
    /// Every tensor in a fixed canonical order, flattened row-major.
    fn tensors(&self) -> Vec<(String, &[T])>;

    /// Same order as [`Parameters::tensors`].
    fn tensors_mut(&mut self) -> Vec<(String, &mut [T])>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn fill_zero(&mut self) {
        for (_, t) in self.tensors_mut() {
            t.fill(T::zero());
        }
    }

    /// `self += other`. Both bundles must have identical layout.
    fn accumulate(&mut self, other: &Self)
    where
        Self: Sized,
    {
        for ((_, dst), (_, src)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            debug_assert_eq!(dst.len(), src.len());
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    fn scale(&mut self, s: T) {
        for (_, t) in self.tensors_mut() {
            for x in t {
                *x *= s;
            }
        }
    }

    fn squared_norm(&self) -> T {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .fold(T::zero(), |acc, &x| acc + x * x)
    }

    /// Name of the first tensor holding a NaN or infinity.
    fn first_non_finite(&self) -> Option<String> {
        self.tensors()
            .into_iter()
            .find(|(_, t)| t.iter().any(|x| !x.is_finite()))
            .map(|(name, _)| name)
    }
}

pub(crate) fn prefixed<'a, S>(prefix: &str, items: Vec<(String, S)>) -> impl Iterator<Item = (String, S)> + 'a
where
    S: 'a,
{
    let prefix = prefix.to_owned();
    items
        .into_iter()
        .map(move |(name, t)| (format!("{prefix}.{name}"), t))
}
