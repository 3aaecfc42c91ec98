//! Residual cross-modal fusion of the two encoders' final states.
//!
//! For hidden states (cell states are fused the same way with a second MLP):
//!
//! ```text
//! m    = (g(h_a) + g(h_v)) / 2
//! h_a' = tanh(h_a + m)
//! h_v' = tanh(h_v + m)
//! h_f  = h_a' + h_v'
//! ```
//!
//! `g` is a one-hidden-layer tanh MLP shared between the two modalities.

use rand::Rng;

use crate::error::{Error, Result, Shape};
use crate::lstm::{fill_xavier, LstmState};
use crate::params::{prefixed, Parameters};
use crate::tensor::{matvec_unchecked, tanh_derivative, Matrix, Real, Vector};

/// `g(x) = W2 · tanh(W1 · x + b1) + b2`, all widths equal.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub w1: Matrix<T>,
    pub b1: Vector<T>,
    pub w2: Matrix<T>,
    pub b2: Vector<T>,
}

/// Intermediate activations of one MLP application.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpTrace<T> {
    pub x: Vector<T>,
    pub hidden: Vector<T>,
}

impl<T: Real> Mlp<T> {
    pub fn zeros(width: usize) -> Self {
        Mlp {
            w1: Matrix::zeros(width, width),
            b1: Vector::zeros(width),
            w2: Matrix::zeros(width, width),
            b2: Vector::zeros(width),
        }
    }

    pub fn init<R: Rng + ?Sized>(width: usize, rng: &mut R) -> Self {
        let mut mlp = Self::zeros(width);
        fill_xavier(&mut mlp.w1, rng);
        fill_xavier(&mut mlp.w2, rng);
        mlp
    }

    pub fn width(&self) -> usize {
        self.b1.len()
    }

    pub fn forward(&self, x: &Vector<T>) -> (Vector<T>, MlpTrace<T>) {
        let mut z = matvec_unchecked(&self.w1, x);
        z.add_assign(&self.b1);
        let hidden = z.map(|v| v.tanh());
        let mut y = matvec_unchecked(&self.w2, &hidden);
        y.add_assign(&self.b2);
        (
            y,
            MlpTrace {
                x: x.clone(),
                hidden,
            },
        )
    }

    /// Accumulates parameter gradients into `grads`, returns the input gradient.
    pub fn backward(&self, trace: &MlpTrace<T>, dy: &Vector<T>, grads: &mut Mlp<T>) -> Vector<T> {
        grads.w2.add_outer(dy, &trace.hidden);
        grads.b2.add_assign(dy);
        let mut dhidden = Vector::zeros(self.width());
        self.w2.add_transpose_matvec(dy, &mut dhidden);
        let dz = Vector::from_vec(
            dhidden
                .iter()
                .zip(trace.hidden.iter())
                .map(|(&g, &a)| g * tanh_derivative(a))
                .collect(),
        );
        grads.w1.add_outer(&dz, &trace.x);
        grads.b1.add_assign(&dz);
        let mut dx = Vector::zeros(self.w1.cols());
        self.w1.add_transpose_matvec(&dz, &mut dx);
        dx
    }

    pub fn cast<U: Real>(&self) -> Mlp<U> {
        Mlp {
            w1: self.w1.cast(),
            b1: self.b1.cast(),
            w2: self.w2.cast(),
            b2: self.b2.cast(),
        }
    }

    fn validate(&self, width: usize) -> Result<()> {
        let want = [
            Shape::Matrix(width, width),
            Shape::Vector(width),
            Shape::Matrix(width, width),
            Shape::Vector(width),
        ];
        let got = [
            self.w1.shape(),
            self.b1.shape(),
            self.w2.shape(),
            self.b2.shape(),
        ];
        for (w, g) in want.into_iter().zip(got) {
            if w != g {
                return Err(Error::ShapeMismatch {
                    op: "mlp params",
                    left: w,
                    right: g,
                });
            }
        }
        Ok(())
    }
}

impl<T: Real> Parameters<T> for Mlp<T> {
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

#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams<T> {
    /// MLP applied to hidden states.
    pub hidden: Mlp<T>,
    /// MLP applied to cell states.
    pub cell: Mlp<T>,
}

impl<T: Real> FusionParams<T> {
    pub fn zeros(width: usize) -> Self {
        FusionParams {
            hidden: Mlp::zeros(width),
            cell: Mlp::zeros(width),
        }
    }

    pub fn init<R: Rng + ?Sized>(width: usize, rng: &mut R) -> Self {
        FusionParams {
            hidden: Mlp::init(width, rng),
            cell: Mlp::init(width, rng),
        }
    }

    pub fn width(&self) -> usize {
        self.hidden.width()
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.width();
        self.hidden.validate(w)?;
        self.cell.validate(w)
    }

    pub fn cast<U: Real>(&self) -> FusionParams<U> {
        FusionParams {
            hidden: self.hidden.cast(),
            cell: self.cell.cast(),
        }
    }
}

impl<T: Real> Parameters<T> for FusionParams<T> {
    fn tensors(&self) -> Vec<(String, &[T])> {
        prefixed("g_h", self.hidden.tensors())
            .chain(prefixed("g_c", self.cell.tensors()))
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [T])> {
        let FusionParams { hidden, cell } = self;
        prefixed("g_h", hidden.tensors_mut())
            .chain(prefixed("g_c", cell.tensors_mut()))
            .collect()
    }
}

/// Decoder initial state produced by fusion.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedState<T> {
    pub h: Vector<T>,
    pub c: Vector<T>,
}

impl<T: Real> From<FusedState<T>> for LstmState<T> {
    fn from(f: FusedState<T>) -> Self {
        LstmState { h: f.h, c: f.c }
    }
}

/// Cached activations for one fused pathway (hidden or cell).
#[derive(Debug, Clone, PartialEq)]
pub struct PathTrace<T> {
    pub audio_mlp: MlpTrace<T>,
    pub visual_mlp: MlpTrace<T>,
    pub audio_out: Vector<T>,
    pub visual_out: Vector<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionTrace<T> {
    pub hidden: PathTrace<T>,
    pub cell: PathTrace<T>,
}

fn fuse_path<T: Real>(g: &Mlp<T>, a: &Vector<T>, v: &Vector<T>) -> (Vector<T>, PathTrace<T>) {
    let (ga, audio_mlp) = g.forward(a);
    let (gv, visual_mlp) = g.forward(v);
    let half = T::lit(0.5);
    let n = a.len();
    let mut audio_out = Vector::zeros(n);
    let mut visual_out = Vector::zeros(n);
    let mut fused = Vector::zeros(n);
    for k in 0..n {
        let m = half * (ga[k] + gv[k]);
        audio_out[k] = (a[k] + m).tanh();
        visual_out[k] = (v[k] + m).tanh();
        fused[k] = audio_out[k] + visual_out[k];
    }
    (
        fused,
        PathTrace {
            audio_mlp,
            visual_mlp,
            audio_out,
            visual_out,
        },
    )
}

/// Returns `(d_audio, d_visual)`; MLP gradients accumulate into `grads`.
fn fuse_path_backward<T: Real>(
    g: &Mlp<T>,
    trace: &PathTrace<T>,
    dy: &Vector<T>,
    grads: &mut Mlp<T>,
) -> (Vector<T>, Vector<T>) {
    let n = dy.len();
    let mut da = Vector::zeros(n);
    let mut dv = Vector::zeros(n);
    let mut dg = Vector::zeros(n);
    let half = T::lit(0.5);
    for k in 0..n {
        da[k] = dy[k] * tanh_derivative(trace.audio_out[k]);
        dv[k] = dy[k] * tanh_derivative(trace.visual_out[k]);
        dg[k] = half * (da[k] + dv[k]);
    }
    da.add_assign(&g.backward(&trace.audio_mlp, &dg, grads));
    dv.add_assign(&g.backward(&trace.visual_mlp, &dg, grads));
    (da, dv)
}

fn check_width(op: &'static str, width: usize, v: &Vector<impl Real>) -> Result<()> {
    if v.len() != width {
        return Err(Error::ShapeMismatch {
            op,
            left: Shape::Vector(width),
            right: v.shape(),
        });
    }
    Ok(())
}

/// Fuses the audio and visual final states into the decoder's initial state.
pub fn fuse<T: Real>(
    params: &FusionParams<T>,
    audio: &LstmState<T>,
    visual: &LstmState<T>,
) -> Result<(FusedState<T>, FusionTrace<T>)> {
    let w = params.width();
    for v in [&audio.h, &audio.c, &visual.h, &visual.c] {
        check_width("fuse", w, v)?;
    }
    let (h, hidden) = fuse_path(&params.hidden, &audio.h, &visual.h);
    let (c, cell) = fuse_path(&params.cell, &audio.c, &visual.c);
    Ok((FusedState { h, c }, FusionTrace { hidden, cell }))
}

/// Gradients of [`fuse`].
#[derive(Debug, Clone, PartialEq)]
pub struct FusionGrads<T> {
    pub params: FusionParams<T>,
    pub audio: LstmState<T>,
    pub visual: LstmState<T>,
}

pub fn fuse_backward<T: Real>(
    trace: &FusionTrace<T>,
    params: &FusionParams<T>,
    grad: &FusedState<T>,
) -> Result<FusionGrads<T>> {
    let w = params.width();
    check_width("fuse_backward", w, &grad.h)?;
    check_width("fuse_backward", w, &grad.c)?;
    check_width("fuse_backward trace", w, &trace.hidden.audio_out)?;
    let mut pg = FusionParams::zeros(w);
    let (dha, dhv) = fuse_path_backward(&params.hidden, &trace.hidden, &grad.h, &mut pg.hidden);
    let (dca, dcv) = fuse_path_backward(&params.cell, &trace.cell, &grad.c, &mut pg.cell);
    Ok(FusionGrads {
        params: pg,
        audio: LstmState { h: dha, c: dca },
        visual: LstmState { h: dhv, c: dcv },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn random_vec(n: usize, scale: f64, r: &mut Xoshiro256PlusPlus) -> Vector<f64> {
        Vector::from_vec((0..n).map(|_| r.random_range(-scale..scale)).collect())
    }

    fn random_case(w: usize, seed: u64) -> (FusionParams<f64>, LstmState<f64>, LstmState<f64>) {
        let mut r = Xoshiro256PlusPlus::seed_from_u64(seed);
        let mut p = FusionParams::zeros(w);
        for (_, t) in p.tensors_mut() {
            for x in t {
                *x = r.random_range(-1.0..1.0);
            }
        }
        let a = LstmState {
            h: random_vec(w, 1.0, &mut r),
            c: random_vec(w, 3.0, &mut r),
        };
        let v = LstmState {
            h: random_vec(w, 1.0, &mut r),
            c: random_vec(w, 3.0, &mut r),
        };
        (p, a, v)
    }

    fn objective(p: &FusionParams<f64>, a: &LstmState<f64>, v: &LstmState<f64>, wh: &Vector<f64>, wc: &Vector<f64>) -> f64 {
        let (f, _) = fuse(p, a, v).unwrap();
        f.h.dot(wh) + f.c.dot(wc)
    }

    #[test]
    fn zero_fixed_point() {
        let p = FusionParams::<f64>::zeros(3);
        let z = LstmState::zeros(3);
        let (f, _) = fuse(&p, &z, &z).unwrap();
        assert_eq!(f.h.as_slice(), &[0.0; 3]);
        assert_eq!(f.c.as_slice(), &[0.0; 3]);
    }

    #[test]
    fn residual_only_with_zero_mlp() {
        let p = FusionParams::<f64>::zeros(3);
        let s = LstmState {
            h: Vector::from_f64(&[0.3, -0.7, 0.1]),
            c: Vector::from_f64(&[2.0, -1.0, 0.0]),
        };
        let (f, _) = fuse(&p, &s, &s).unwrap();
        for k in 0..3 {
            assert_eq!(f.h[k], 2.0 * s.h[k].tanh());
            assert_eq!(f.c[k], 2.0 * s.c[k].tanh());
        }
    }

    #[test]
    fn width_mismatch() {
        let p = FusionParams::<f64>::zeros(3);
        assert!(matches!(
            fuse(&p, &LstmState::zeros(3), &LstmState::zeros(2)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let (p, a, v) = random_case(4, 1);
        let (_, tr) = fuse(&p, &a, &v).unwrap();
        let g = fuse_backward(&tr, &p, &FusedState { h: Vector::zeros(4), c: Vector::zeros(4) }).unwrap();
        assert_eq!(g.params.squared_norm(), 0.0);
        assert!(g.audio.h.iter().chain(g.visual.c.iter()).all(|&x| x == 0.0));
    }

    #[test]
    fn backward_shape_mismatch() {
        let (p, a, v) = random_case(4, 1);
        let (_, tr) = fuse(&p, &a, &v).unwrap();
        let bad = FusedState { h: Vector::zeros(3), c: Vector::zeros(4) };
        assert!(fuse_backward(&tr, &p, &bad).is_err());
    }

    #[test]
    fn backward_matches_fd() {
        for seed in 0..5 {
            let w = 4;
            let (p, a, v) = random_case(w, seed);
            let mut r = Xoshiro256PlusPlus::seed_from_u64(seed + 99);
            let wh = random_vec(w, 1.0, &mut r);
            let wc = random_vec(w, 1.0, &mut r);
            let (_, tr) = fuse(&p, &a, &v).unwrap();
            let g = fuse_backward(&tr, &p, &FusedState { h: wh.clone(), c: wc.clone() }).unwrap();
            let eps = 1e-5;
            let mut worst = 0.0f64;
            let mut probe = p.clone();
            for ti in 0..probe.tensors().len() {
                for e in 0..probe.tensors()[ti].1.len() {
                    let orig = probe.tensors()[ti].1[e];
                    probe.tensors_mut()[ti].1[e] = orig + eps;
                    let up = objective(&probe, &a, &v, &wh, &wc);
                    probe.tensors_mut()[ti].1[e] = orig - eps;
                    let down = objective(&probe, &a, &v, &wh, &wc);
                    probe.tensors_mut()[ti].1[e] = orig;
                    let num = (up - down) / (2.0 * eps);
                    worst = worst.max((g.params.tensors()[ti].1[e] - num).abs() / num.abs().max(1.0));
                }
            }
            let perturbed = |m: usize, cell: bool, k: usize, delta: f64| {
                let mut s = [a.clone(), v.clone()];
                if cell {
                    s[m].c[k] += delta;
                } else {
                    s[m].h[k] += delta;
                }
                objective(&p, &s[0], &s[1], &wh, &wc)
            };
            for (m, ana) in [&g.audio, &g.visual].into_iter().enumerate() {
                for cell in [false, true] {
                    for k in 0..w {
                        let num = (perturbed(m, cell, k, eps) - perturbed(m, cell, k, -eps)) / (2.0 * eps);
                        let a = if cell { ana.c[k] } else { ana.h[k] };
                        worst = worst.max((a - num).abs() / num.abs().max(1.0));
                    }
                }
            }
            assert!(worst < 1e-6, "seed {seed}: {worst}");
        }
    }

    proptest! {
        #[test]
        fn modality_swap_symmetry(seed in 0u64..100_000) {
            let (p, a, v) = random_case(5, seed);
            let (av, tav) = fuse(&p, &a, &v).unwrap();
            let (va, tva) = fuse(&p, &v, &a).unwrap();
            prop_assert_eq!(&av, &va);
            prop_assert!(av.h.iter().all(|&x| x.abs() < 2.0));

            let mut r = Xoshiro256PlusPlus::seed_from_u64(seed + 1);
            let up = FusedState { h: random_vec(5, 1.0, &mut r), c: random_vec(5, 1.0, &mut r) };
            let g1 = fuse_backward(&tav, &p, &up).unwrap();
            let g2 = fuse_backward(&tva, &p, &up).unwrap();
            prop_assert_eq!(&g1.audio, &g2.visual);
            prop_assert_eq!(&g1.visual, &g2.audio);
        }
    }
}
