//! Adam with bias correction and optional global-norm gradient clipping.

use crate::error::{Error, Result};
use crate::params::Parameters;
use crate::tensor::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: Option<f64>,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(5.0),
        }
    }
}

/// First/second moment accumulators mirroring the parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<P> {
    pub first: P,
    pub second: P,
    pub step: u64,
}

impl<P: Clone> AdamState<P> {
    pub fn new<T: Real>(template: &P) -> Self
    where
        P: Parameters<T>,
    {
        let mut zero = template.clone();
        zero.fill_zero();
        AdamState {
            first: zero.clone(),
            second: zero,
            step: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub clipped: bool,
}

/// Scales `grads` so its global norm is at most `max_norm`. Returns the norm
/// before scaling.
pub fn clip_global_norm<T: Real, P: Parameters<T>>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = grads.squared_norm().to_f64().sqrt();
    if norm > max_norm {
        grads.scale(T::lit(max_norm / norm));
    }
    norm
}

/// One optimizer update. `grads` is clipped in place first when clipping is
/// enabled. Fails without touching `params` if any gradient is non-finite.
pub fn adam_step<T: Real, P: Parameters<T>>(
    params: &mut P,
    grads: &mut P,
    state: &mut AdamState<P>,
    cfg: &Adam,
) -> Result<StepStats> {
    if let Some(tensor) = grads.first_non_finite() {
        return Err(Error::NonFinite {
            tensor: format!("gradient {tensor}"),
        });
    }
    let (grad_norm, clipped) = match cfg.clip_norm {
        Some(max) => {
            let n = clip_global_norm(grads, max);
            (n, n > max)
        }
        None => (grads.squared_norm().to_f64().sqrt(), false),
    };

    state.step += 1;
    let t = state.step as i32;
    let b1 = T::lit(cfg.beta1);
    let b2 = T::lit(cfg.beta2);
    let one = T::one();
    let c1 = one / (one - T::lit(cfg.beta1.powi(t)));
    let c2 = one / (one - T::lit(cfg.beta2.powi(t)));
    let lr = T::lit(cfg.learning_rate);
    let eps = T::lit(cfg.eps);

    let g_all = grads.tensors();
    let m_all = state.first.tensors_mut();
    let v_all = state.second.tensors_mut();
    for ((((_, p), (_, g)), (_, m)), (_, v)) in params
        .tensors_mut()
        .into_iter()
        .zip(g_all)
        .zip(m_all)
        .zip(v_all)
    {
        for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m * c1;
            let v_hat = *v * c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(StepStats { grad_norm, clipped })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    struct Pair {
        a: Vec<f64>,
        b: Vec<f64>,
    }

    impl Parameters<f64> for Pair {
        fn tensors(&self) -> Vec<(String, &[f64])> {
            vec![("a".into(), &self.a), ("b".into(), &self.b)]
        }
        fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
            vec![("a".into(), &mut self.a), ("b".into(), &mut self.b)]
        }
    }

    fn pair(a: &[f64], b: &[f64]) -> Pair {
        Pair {
            a: a.to_vec(),
            b: b.to_vec(),
        }
    }

    #[test]
    fn zero_grads_leave_params() {
        let mut p = pair(&[1.0, -2.0], &[0.5]);
        let orig = p.clone();
        let mut st = AdamState::new(&p);
        let mut g = pair(&[0.0, 0.0], &[0.0]);
        adam_step(&mut p, &mut g, &mut st, &Adam::default()).unwrap();
        assert_eq!(p, orig);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_closed_form() {
        // m̂ = g, v̂ = g², so Δ = −lr · g / (|g| + eps).
        let cfg = Adam {
            learning_rate: 0.01,
            clip_norm: None,
            ..Adam::default()
        };
        let gs = [0.3, -2.0, 1e-4];
        let mut p = pair(&[1.0, 1.0], &[1.0]);
        let mut g = pair(&gs[..2], &gs[2..]);
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &mut g, &mut st, &cfg).unwrap();
        let got: Vec<f64> = p.a.iter().chain(&p.b).copied().collect();
        for (x, g) in got.iter().zip(gs) {
            let want = 1.0 - 0.01 * g / (g.abs() + 1e-8);
            assert!((x - want).abs() < 1e-12, "{x} vs {want}");
        }
    }

    #[test]
    fn clipping_scales_to_max_norm() {
        let mut g = pair(&[6.0, 0.0], &[8.0]);
        let norm = clip_global_norm(&mut g, 1.0);
        assert_eq!(norm, 10.0);
        assert!((g.a[0] - 0.6).abs() < 1e-15 && (g.b[0] - 0.8).abs() < 1e-15);

        let mut p = pair(&[0.0, 0.0], &[0.0]);
        let mut st = AdamState::new(&p);
        let mut g = pair(&[6.0, 0.0], &[8.0]);
        let stats = adam_step(
            &mut p,
            &mut g,
            &mut st,
            &Adam {
                clip_norm: Some(1.0),
                ..Adam::default()
            },
        )
        .unwrap();
        assert!(stats.clipped);
        assert_eq!(stats.grad_norm, 10.0);
        assert!((st.first.a[0] - 0.1 * 0.6).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_names_tensor() {
        let mut p = pair(&[1.0], &[1.0]);
        let orig = p.clone();
        let mut st = AdamState::new(&p);
        let mut g = pair(&[0.0], &[f64::NAN]);
        let err = adam_step(&mut p, &mut g, &mut st, &Adam::default()).unwrap_err();
        assert!(err.to_string().contains("gradient b"), "{err}");
        assert_eq!(p, orig);
        assert_eq!(st.step, 0);
    }
}
