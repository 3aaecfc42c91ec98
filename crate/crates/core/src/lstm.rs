//! Vanilla LSTM cell, its unrolled application over a sequence, and BPTT.
//!
//! Gates:
//!
//! ```text
//! f = σ(W_f x + U_f h' + b_f)      i = σ(W_i x + U_i h' + b_i)
//! o = σ(W_o x + U_o h' + b_o)      g = tanh(W_c x + U_c h' + b_c)
//! c = f ∘ c' + i ∘ g               h = o ∘ tanh(c)
//! ```
//!
//! where `h'`, `c'` are the previous state. Every `U` multiplies the previous
//! hidden state.

use rand::Rng;

use crate::error::{Error, Result, Shape};
use crate::params::{prefixed, Parameters};
use crate::tensor::{matvec_unchecked, sigmoid_scalar, tanh_derivative, Matrix, Real, Vector};

/// Input weights, recurrent weights and bias for one gate.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate<T> {
    pub w: Matrix<T>,
    pub u: Matrix<T>,
    pub b: Vector<T>,
}

impl<T: Real> Gate<T> {
    fn zeros(input: usize, hidden: usize) -> Self {
        Gate {
            w: Matrix::zeros(hidden, input),
            u: Matrix::zeros(hidden, hidden),
            b: Vector::zeros(hidden),
        }
    }

    fn xavier<R: Rng + ?Sized>(input: usize, hidden: usize, bias: f64, rng: &mut R) -> Self {
        let mut gate = Self::zeros(input, hidden);
        fill_xavier(&mut gate.w, rng);
        fill_xavier(&mut gate.u, rng);
        gate.b.as_mut_slice().fill(T::lit(bias));
        gate
    }

    /// `W x + U h + b`.
    #[inline]
    fn preactivation(&self, x: &Vector<T>, h: &Vector<T>) -> Vector<T> {
        let mut z = matvec_unchecked(&self.w, x);
        z.add_assign(&matvec_unchecked(&self.u, h));
        z.add_assign(&self.b);
        z
    }

    fn accumulate_grad(&mut self, dz: &Vector<T>, x: &Vector<T>, h_prev: &Vector<T>) {
        self.w.add_outer(dz, x);
        self.u.add_outer(dz, h_prev);
        self.b.add_assign(dz);
    }
}

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub(crate) fn fill_xavier<T: Real, R: Rng + ?Sized>(m: &mut Matrix<T>, rng: &mut R) {
    let limit = (6.0 / (m.rows() + m.cols()) as f64).sqrt();
    for x in m.as_mut_slice() {
        *x = T::lit(rng.random_range(-limit..limit));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams<T> {
    pub forget: Gate<T>,
    pub input: Gate<T>,
    pub output: Gate<T>,
    pub cell: Gate<T>,
}

impl<T: Real> LstmParams<T> {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        LstmParams {
            forget: Gate::zeros(input_size, hidden_size),
            input: Gate::zeros(input_size, hidden_size),
            output: Gate::zeros(input_size, hidden_size),
            cell: Gate::zeros(input_size, hidden_size),
        }
    }

    /// Xavier-uniform weights; the forget-gate bias starts at `forget_bias`,
    /// every other bias at zero.
    pub fn init<R: Rng + ?Sized>(
        input_size: usize,
        hidden_size: usize,
        forget_bias: f64,
        rng: &mut R,
    ) -> Self {
        LstmParams {
            forget: Gate::xavier(input_size, hidden_size, forget_bias, rng),
            input: Gate::xavier(input_size, hidden_size, 0.0, rng),
            output: Gate::xavier(input_size, hidden_size, 0.0, rng),
            cell: Gate::xavier(input_size, hidden_size, 0.0, rng),
        }
    }

    pub fn input_size(&self) -> usize {
        self.forget.w.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.forget.w.rows()
    }

    fn gates(&self) -> [&Gate<T>; 4] {
        [&self.forget, &self.input, &self.output, &self.cell]
    }

    /// Checks that all four gates share the shapes implied by gate `f`.
    pub fn validate(&self) -> Result<()> {
        let (d, h) = (self.input_size(), self.hidden_size());
        if d == 0 || h == 0 {
            return Err(Error::Config(format!("lstm dims must be >= 1, got d={d} h={h}")));
        }
        for gate in self.gates() {
            let want = [Shape::Matrix(h, d), Shape::Matrix(h, h), Shape::Vector(h)];
            let got = [gate.w.shape(), gate.u.shape(), gate.b.shape()];
            for (w, g) in want.into_iter().zip(got) {
                if w != g {
                    return Err(Error::ShapeMismatch {
                        op: "lstm params",
                        left: w,
                        right: g,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> LstmParams<U> {
        let g = |gate: &Gate<T>| Gate {
            w: gate.w.cast(),
            u: gate.u.cast(),
            b: gate.b.cast(),
        };
        LstmParams {
            forget: g(&self.forget),
            input: g(&self.input),
            output: g(&self.output),
            cell: g(&self.cell),
        }
    }
}

impl<T: Real> Parameters<T> for LstmParams<T> {
    fn tensors(&self) -> Vec<(String, &[T])> {
        let mut out = Vec::with_capacity(12);
        for (tag, gate) in ["f", "i", "o", "c"].into_iter().zip(self.gates()) {
            out.push((format!("w_{tag}"), gate.w.as_slice()));
            out.push((format!("u_{tag}"), gate.u.as_slice()));
            out.push((format!("b_{tag}"), gate.b.as_slice()));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [T])> {
        let mut out = Vec::with_capacity(12);
        let gates = [
            ("f", &mut self.forget),
            ("i", &mut self.input),
            ("o", &mut self.output),
            ("c", &mut self.cell),
        ];
        for (tag, gate) in gates {
            out.push((format!("w_{tag}"), gate.w.as_mut_slice()));
            out.push((format!("u_{tag}"), gate.u.as_mut_slice()));
            out.push((format!("b_{tag}"), gate.b.as_mut_slice()));
        }
        out
    }
}

pub(crate) fn named<'a, T: Real>(
    prefix: &str,
    p: &'a LstmParams<T>,
) -> impl Iterator<Item = (String, &'a [T])> + 'a {
    prefixed(prefix, p.tensors())
}

pub(crate) fn named_mut<'a, T: Real>(
    prefix: &str,
    p: &'a mut LstmParams<T>,
) -> impl Iterator<Item = (String, &'a mut [T])> + 'a {
    prefixed(prefix, p.tensors_mut())
}

/// Hidden and cell state.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState<T> {
    pub h: Vector<T>,
    pub c: Vector<T>,
}

impl<T: Real> LstmState<T> {
    pub fn zeros(hidden_size: usize) -> Self {
        LstmState {
            h: Vector::zeros(hidden_size),
            c: Vector::zeros(hidden_size),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.h.len()
    }
}

/// Activations cached by one forward step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace<T> {
    pub x: Vector<T>,
    pub h_prev: Vector<T>,
    pub c_prev: Vector<T>,
    pub forget: Vector<T>,
    pub input: Vector<T>,
    pub output: Vector<T>,
    pub candidate: Vector<T>,
    pub c: Vector<T>,
    pub tanh_c: Vector<T>,
    pub h: Vector<T>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EncoderTrace<T> {
    pub steps: Vec<StepTrace<T>>,
}

impl<T: Real> EncoderTrace<T> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn hidden_states(&self) -> impl Iterator<Item = &Vector<T>> {
        self.steps.iter().map(|s| &s.h)
    }
}

/// One LSTM step from `prev` on input `x`.
pub fn lstm_step<T: Real>(
    params: &LstmParams<T>,
    prev: &LstmState<T>,
    x: &Vector<T>,
) -> Result<(LstmState<T>, StepTrace<T>)> {
    let (d, h) = (params.input_size(), params.hidden_size());
    if x.len() != d {
        return Err(Error::ShapeMismatch {
            op: "lstm_step input",
            left: params.forget.w.shape(),
            right: x.shape(),
        });
    }
    if prev.h.len() != h || prev.c.len() != h {
        return Err(Error::ShapeMismatch {
            op: "lstm_step state",
            left: Shape::Vector(h),
            right: if prev.h.len() != h {
                prev.h.shape()
            } else {
                prev.c.shape()
            },
        });
    }
    Ok(step_unchecked(params, prev, x))
}

fn step_unchecked<T: Real>(
    params: &LstmParams<T>,
    prev: &LstmState<T>,
    x: &Vector<T>,
) -> (LstmState<T>, StepTrace<T>) {
    let forget = params.forget.preactivation(x, &prev.h).map(sigmoid_scalar);
    let input = params.input.preactivation(x, &prev.h).map(sigmoid_scalar);
    let output = params.output.preactivation(x, &prev.h).map(sigmoid_scalar);
    let candidate = params.cell.preactivation(x, &prev.h).map(|z| z.tanh());

    let n = params.hidden_size();
    let mut c = Vector::zeros(n);
    let mut tanh_c = Vector::zeros(n);
    let mut h = Vector::zeros(n);
    for k in 0..n {
        c[k] = forget[k] * prev.c[k] + input[k] * candidate[k];
        tanh_c[k] = c[k].tanh();
        h[k] = output[k] * tanh_c[k];
    }
    let state = LstmState {
        h: h.clone(),
        c: c.clone(),
    };
    let trace = StepTrace {
        x: x.clone(),
        h_prev: prev.h.clone(),
        c_prev: prev.c.clone(),
        forget,
        input,
        output,
        candidate,
        c,
        tanh_c,
        h,
    };
    (state, trace)
}

/// Runs the cell over `xs` starting from `init`.
pub fn run_sequence<T: Real>(
    params: &LstmParams<T>,
    init: &LstmState<T>,
    xs: &[Vector<T>],
) -> Result<(LstmState<T>, EncoderTrace<T>)> {
    if xs.is_empty() {
        return Err(Error::Empty("lstm sequence"));
    }
    let mut state = init.clone();
    let mut steps = Vec::with_capacity(xs.len());
    for (t, x) in xs.iter().enumerate() {
        let (next, trace) = if t == 0 {
            lstm_step(params, &state, x)?
        } else if x.len() != params.input_size() {
            return Err(Error::ShapeMismatch {
                op: "lstm_step input",
                left: params.forget.w.shape(),
                right: x.shape(),
            });
        } else {
            step_unchecked(params, &state, x)
        };
        state = next;
        steps.push(trace);
    }
    Ok((state, EncoderTrace { steps }))
}

/// Encodes a sequence of exactly `len` inputs from the zero state and
/// returns the final state as the global representation.
pub fn encode_sequence<T: Real>(
    params: &LstmParams<T>,
    xs: &[Vector<T>],
    len: usize,
) -> Result<(LstmState<T>, EncoderTrace<T>)> {
    if xs.is_empty() {
        return Err(Error::Empty("encode_sequence"));
    }
    if xs.len() != len {
        return Err(Error::LengthMismatch {
            expected: len,
            found: xs.len(),
        });
    }
    run_sequence(params, &LstmState::zeros(params.hidden_size()), xs)
}

/// Gradients produced by backpropagating through an unrolled sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceGrads<T> {
    pub params: LstmParams<T>,
    pub inputs: Vec<Vector<T>>,
    /// Gradient on the initial state the sequence started from.
    pub initial: LstmState<T>,
}

/// Backpropagation through time.
///
/// `step_dh[t]`, when given, is an external gradient on `h_t` (e.g. from an
/// output layer). `final_grad` is the gradient on the last `(h_T, c_T)`.
pub fn sequence_backward<T: Real>(
    params: &LstmParams<T>,
    trace: &EncoderTrace<T>,
    step_dh: Option<&[Vector<T>]>,
    final_grad: &LstmState<T>,
) -> Result<SequenceGrads<T>> {
    let (d, h) = (params.input_size(), params.hidden_size());
    if let Some(first) = trace.steps.first() {
        if first.x.len() != d || first.h.len() != h {
            return Err(Error::ShapeMismatch {
                op: "lstm backward trace",
                left: params.forget.w.shape(),
                right: Shape::Matrix(first.h.len(), first.x.len()),
            });
        }
    }
    if final_grad.h.len() != h || final_grad.c.len() != h {
        return Err(Error::ShapeMismatch {
            op: "lstm backward upstream",
            left: Shape::Vector(h),
            right: final_grad.h.shape(),
        });
    }
    if let Some(ext) = step_dh {
        if ext.len() != trace.len() {
            return Err(Error::LengthMismatch {
                expected: trace.len(),
                found: ext.len(),
            });
        }
        if let Some(bad) = ext.iter().find(|g| g.len() != h) {
            return Err(Error::ShapeMismatch {
                op: "lstm backward step gradient",
                left: Shape::Vector(h),
                right: bad.shape(),
            });
        }
    }

    let mut grads = LstmParams::zeros(d, h);
    let mut inputs = vec![Vector::zeros(d); trace.len()];
    let mut dh_next = final_grad.h.clone();
    let mut dc_next = final_grad.c.clone();

    for (t, step) in trace.steps.iter().enumerate().rev() {
        let mut dh = dh_next;
        if let Some(ext) = step_dh {
            dh.add_assign(&ext[t]);
        }

        let mut dz_f = Vector::zeros(h);
        let mut dz_i = Vector::zeros(h);
        let mut dz_o = Vector::zeros(h);
        let mut dz_c = Vector::zeros(h);
        let mut dc_prev = Vector::zeros(h);
        for k in 0..h {
            let (f, i, o, g) = (
                step.forget[k],
                step.input[k],
                step.output[k],
                step.candidate[k],
            );
            let dc = dc_next[k] + dh[k] * o * tanh_derivative(step.tanh_c[k]);
            let d_o = dh[k] * step.tanh_c[k];
            dz_f[k] = dc * step.c_prev[k] * f * (T::one() - f);
            dz_i[k] = dc * g * i * (T::one() - i);
            dz_o[k] = d_o * o * (T::one() - o);
            dz_c[k] = dc * i * tanh_derivative(g);
            dc_prev[k] = dc * f;
        }

        let mut dh_prev = Vector::zeros(h);
        let dx = &mut inputs[t];
        let pairs = [
            (&mut grads.forget, &params.forget, &dz_f),
            (&mut grads.input, &params.input, &dz_i),
            (&mut grads.output, &params.output, &dz_o),
            (&mut grads.cell, &params.cell, &dz_c),
        ];
        for (g, p, dz) in pairs {
            g.accumulate_grad(dz, &step.x, &step.h_prev);
            p.w.add_transpose_matvec(dz, dx);
            p.u.add_transpose_matvec(dz, &mut dh_prev);
        }
        dh_next = dh_prev;
        dc_next = dc_prev;
    }

    Ok(SequenceGrads {
        params: grads,
        inputs,
        initial: LstmState {
            h: dh_next,
            c: dc_next,
        },
    })
}

/// BPTT for an encoder whose only output is its final state.
pub fn encode_backward<T: Real>(
    trace: &EncoderTrace<T>,
    params: &LstmParams<T>,
    grad_final: &LstmState<T>,
) -> Result<(LstmParams<T>, Vec<Vector<T>>)> {
    let grads = sequence_backward(params, trace, None, grad_final)?;
    Ok((grads.params, grads.inputs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn rng(seed: u64) -> Xoshiro256PlusPlus {
        Xoshiro256PlusPlus::seed_from_u64(seed)
    }

    /// Random params with nonzero biases everywhere, entries in [-1, 1].
    fn random_params(d: usize, h: usize, seed: u64) -> LstmParams<f64> {
        let mut r = rng(seed);
        let mut p = LstmParams::zeros(d, h);
        for (_, t) in p.tensors_mut() {
            for x in t {
                *x = r.random_range(-1.0..1.0);
            }
        }
        p
    }

    fn random_inputs(d: usize, n: usize, seed: u64) -> Vec<Vector<f64>> {
        let mut r = rng(seed);
        (0..n)
            .map(|_| Vector::from_vec((0..d).map(|_| r.random_range(-2.0..2.0)).collect()))
            .collect()
    }

    /// Scalar-loop LSTM step written directly from the gate equations.
    fn reference_step(p: &LstmParams<f64>, h: &[f64], c: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = h.len();
        let pre = |g: &Gate<f64>, k: usize| {
            let mut z = g.b[k];
            for (j, xj) in x.iter().enumerate() {
                z += g.w.get(k, j) * xj;
            }
            for (j, hj) in h.iter().enumerate() {
                z += g.u.get(k, j) * hj;
            }
            z
        };
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        let mut h_new = vec![0.0; n];
        let mut c_new = vec![0.0; n];
        for k in 0..n {
            let f = sig(pre(&p.forget, k));
            let i = sig(pre(&p.input, k));
            let o = sig(pre(&p.output, k));
            let g = pre(&p.cell, k).tanh();
            c_new[k] = f * c[k] + i * g;
            h_new[k] = o * c_new[k].tanh();
        }
        (h_new, c_new)
    }

    /// Scalar objective `⟨w_h, h_T⟩ + ⟨w_c, c_T⟩`.
    fn objective(p: &LstmParams<f64>, xs: &[Vector<f64>], wh: &Vector<f64>, wc: &Vector<f64>) -> f64 {
        let (s, _) = encode_sequence(p, xs, xs.len()).unwrap();
        s.h.dot(wh) + s.c.dot(wc)
    }

    fn check_bptt(d: usize, h: usize, t: usize, seed: u64) {
        let p = random_params(d, h, seed);
        let xs = random_inputs(d, t, seed + 1);
        let wh = random_inputs(h, 1, seed + 2).remove(0);
        let wc = random_inputs(h, 1, seed + 3).remove(0);
        let (_, trace) = encode_sequence(&p, &xs, t).unwrap();
        let (grads, dxs) = encode_backward(
            &trace,
            &p,
            &LstmState {
                h: wh.clone(),
                c: wc.clone(),
            },
        )
        .unwrap();

        let eps = 1e-5;
        let mut worst = 0.0f64;
        let mut probe = p.clone();
        let n_tensors = probe.tensors().len();
        for ti in 0..n_tensors {
            let len = probe.tensors()[ti].1.len();
            for e in 0..len {
                let orig = probe.tensors()[ti].1[e];
                probe.tensors_mut()[ti].1[e] = orig + eps;
                let up = objective(&probe, &xs, &wh, &wc);
                probe.tensors_mut()[ti].1[e] = orig - eps;
                let down = objective(&probe, &xs, &wh, &wc);
                probe.tensors_mut()[ti].1[e] = orig;
                let num = (up - down) / (2.0 * eps);
                let ana = grads.tensors()[ti].1[e];
                worst = worst.max((ana - num).abs() / num.abs().max(1.0));
            }
        }
        for (step, dx) in dxs.iter().enumerate() {
            for j in 0..d {
                let mut xp = xs.clone();
                xp[step][j] += eps;
                let up = objective(&p, &xp, &wh, &wc);
                xp[step][j] -= 2.0 * eps;
                let down = objective(&p, &xp, &wh, &wc);
                let num = (up - down) / (2.0 * eps);
                worst = worst.max((dx[j] - num).abs() / num.abs().max(1.0));
            }
        }
        assert!(worst < 1e-6, "max rel error {worst}");
    }

    #[test]
    fn zero_params_fixed_point() {
        let p = LstmParams::<f64>::zeros(3, 2);
        let x = Vector::from_f64(&[1.0, -2.0, 0.5]);
        let (s, tr) = lstm_step(&p, &LstmState::zeros(2), &x).unwrap();
        assert_eq!(s.h.as_slice(), &[0.0, 0.0]);
        assert_eq!(s.c.as_slice(), &[0.0, 0.0]);
        assert_eq!(tr.forget.as_slice(), &[0.5, 0.5]);
        assert_eq!(tr.candidate.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn zero_params_halves_cell() {
        let p = LstmParams::<f64>::zeros(3, 2);
        let prev = LstmState {
            h: Vector::zeros(2),
            c: Vector::from_f64(&[1.2, -0.4]),
        };
        let (s, _) = lstm_step(&p, &prev, &Vector::zeros(3)).unwrap();
        for k in 0..2 {
            assert_eq!(s.c[k], 0.5 * prev.c[k]);
            assert_eq!(s.h[k], 0.5 * (0.5 * prev.c[k]).tanh());
        }
    }

    #[test]
    fn step_matches_scalar_reference() {
        for seed in 0..20 {
            let p = random_params(3, 2, seed);
            let prev = LstmState {
                h: random_inputs(2, 1, seed + 100).remove(0).map(|x| x / 2.0),
                c: random_inputs(2, 1, seed + 200).remove(0),
            };
            let x = random_inputs(3, 1, seed + 300).remove(0);
            let (s, _) = lstm_step(&p, &prev, &x).unwrap();
            let (rh, rc) = reference_step(&p, prev.h.as_slice(), prev.c.as_slice(), x.as_slice());
            for k in 0..2 {
                assert!((s.h[k] - rh[k]).abs() < 1e-12);
                assert!((s.c[k] - rc[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn encode_single_step_is_one_lstm_step() {
        let p = random_params(3, 2, 7);
        let xs = random_inputs(3, 1, 8);
        let (s, tr) = encode_sequence(&p, &xs, 1).unwrap();
        let (s1, _) = lstm_step(&p, &LstmState::zeros(2), &xs[0]).unwrap();
        assert_eq!(s, s1);
        assert_eq!(tr.len(), 1);
    }

    #[test]
    fn encode_is_iterated_composition() {
        let p = random_params(3, 4, 9);
        let xs = random_inputs(3, 4, 10);
        let (s, _) = encode_sequence(&p, &xs, 4).unwrap();
        let mut state = LstmState::zeros(4);
        for x in &xs {
            state = lstm_step(&p, &state, x).unwrap().0;
        }
        assert_eq!(s, state);
    }

    #[test]
    fn encode_zero_params_gives_zero_state() {
        let p = LstmParams::<f64>::zeros(3, 2);
        let (s, _) = encode_sequence(&p, &random_inputs(3, 6, 1), 6).unwrap();
        assert_eq!(s, LstmState::zeros(2));
    }

    #[test]
    fn encode_errors() {
        let p = LstmParams::<f64>::zeros(3, 2);
        assert!(matches!(encode_sequence(&p, &[], 0), Err(Error::Empty(_))));
        assert!(matches!(
            encode_sequence(&p, &random_inputs(3, 2, 0), 3),
            Err(Error::LengthMismatch { expected: 3, found: 2 })
        ));
        assert!(matches!(
            encode_sequence(&p, &random_inputs(4, 2, 0), 2),
            Err(Error::ShapeMismatch { .. })
        ));
        let bad_state = LstmState::zeros(3);
        assert!(lstm_step(&p, &bad_state, &Vector::zeros(3)).is_err());
    }

    #[test]
    fn validate_rejects_mixed_gate_shapes() {
        let mut p = LstmParams::<f64>::zeros(3, 2);
        assert!(p.validate().is_ok());
        p.output.u = Matrix::zeros(2, 3);
        assert!(p.validate().is_err());
        assert!(LstmParams::<f64>::zeros(0, 2).validate().is_err());
    }

    #[test]
    fn init_sets_forget_bias() {
        let p: LstmParams<f64> = LstmParams::init(5, 3, 1.0, &mut rng(0));
        assert!(p.forget.b.iter().all(|&b| b == 1.0));
        assert!(p.input.b.iter().all(|&b| b == 0.0));
        let limit = (6.0f64 / 8.0).sqrt();
        assert!(p.forget.w.as_slice().iter().all(|w| w.abs() <= limit));
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let p = random_params(3, 2, 3);
        let xs = random_inputs(3, 5, 4);
        let (_, tr) = encode_sequence(&p, &xs, 5).unwrap();
        let (g, dx) = encode_backward(&tr, &p, &LstmState::zeros(2)).unwrap();
        assert_eq!(g.squared_norm(), 0.0);
        assert!(dx.iter().all(|v| v.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn backward_shape_mismatch() {
        let p = random_params(3, 2, 3);
        let (_, tr) = encode_sequence(&p, &random_inputs(3, 2, 4), 2).unwrap();
        let other = random_params(4, 2, 3);
        assert!(encode_backward(&tr, &other, &LstmState::zeros(2)).is_err());
        assert!(encode_backward(&tr, &p, &LstmState::zeros(3)).is_err());
    }

    #[test]
    fn bptt_single_step_matches_fd() {
        check_bptt(3, 2, 1, 11);
    }

    #[test]
    fn bptt_five_steps_matches_fd() {
        check_bptt(3, 4, 5, 12);
        check_bptt(5, 3, 5, 13);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn hidden_and_gate_ranges(seed in 0u64..10_000, t in 1usize..8) {
            let p = random_params(4, 3, seed);
            let xs = random_inputs(4, t, seed ^ 0xabcd);
            let (_, tr) = encode_sequence(&p, &xs, t).unwrap();
            for s in &tr.steps {
                prop_assert!(s.h.iter().all(|&v| v > -1.0 && v < 1.0));
                for g in [&s.forget, &s.input, &s.output] {
                    prop_assert!(g.iter().all(|&v| v > 0.0 && v < 1.0));
                }
                prop_assert!(s.c.all_finite());
            }
        }

        #[test]
        fn deterministic(seed in 0u64..10_000) {
            let p = random_params(3, 3, seed);
            let xs = random_inputs(3, 4, seed + 1);
            let a = encode_sequence(&p, &xs, 4).unwrap();
            let b = encode_sequence(&p, &xs, 4).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
