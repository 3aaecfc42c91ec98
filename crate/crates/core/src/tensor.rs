//! Dense row-major vectors and matrices with paired forward/backward kernels.
//!
//! Every forward kernel here has a `*_grad` counterpart that maps an upstream
//! gradient on the output back to gradients on the inputs. Layers above compose
//! these by hand; there is no tape.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, Index, IndexMut, MulAssign, SubAssign};

use num_traits::Float;

use crate::error::{Error, Result, Shape};

/// Scalar type the network is generic over (`f32` or `f64`).
pub trait Real:
    Float + AddAssign + SubAssign + MulAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    fn lit(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

/// Numeric precision of a run. Gradient checking always uses `Checking`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    /// 32-bit reals.
    #[default]
    Standard,
    /// 64-bit reals.
    Checking,
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" | "f32" => Ok(Precision::Standard),
            "checking" | "f64" => Ok(Precision::Checking),
            other => Err(Error::Config(format!("unknown precision {other:?}"))),
        }
    }
}

impl Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Precision::Standard => "standard",
            Precision::Checking => "checking",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vector<T> {
    data: Vec<T>,
}

impl<T: Real> Vector<T> {
    pub fn zeros(len: usize) -> Self {
        Vector {
            data: vec![T::zero(); len],
        }
    }

    pub fn from_vec(data: Vec<T>) -> Self {
        Vector { data }
    }

    pub fn from_f64(data: &[f64]) -> Self {
        Vector {
            data: data.iter().map(|&x| T::lit(x)).collect(),
        }
    }

    pub fn one_hot(len: usize, index: usize) -> Self {
        let mut v = Self::zeros(len);
        v.data[index] = T::one();
        v
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    pub fn shape(&self) -> Shape {
        Shape::Vector(self.len())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Vector {
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn dot(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
    }

    /// `self += other`, lengths must already agree.
    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.len(), other.len());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: T) {
        for x in &mut self.data {
            *x *= s;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Index of the largest entry; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &x) in self.data.iter().enumerate().skip(1) {
            if x > self.data[best] {
                best = i;
            }
        }
        best
    }

    pub fn cast<U: Real>(&self) -> Vector<U> {
        Vector {
            data: self.data.iter().map(|&x| U::lit(x.to_f64())).collect(),
        }
    }
}

impl<T> Index<usize> for Vector<T> {
    type Output = T;
    #[inline]
    fn index(&self, i: usize) -> &T {
        &self.data[i]
    }
}

impl<T> IndexMut<usize> for Vector<T> {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.data[i]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                op: "matrix",
                left: Shape::Matrix(rows, cols),
                right: Shape::Vector(data.len()),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let data = rows
            .iter()
            .flat_map(|row| row.iter().map(|&x| T::lit(x)))
            .collect();
        Self::from_vec(r, c, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> Shape {
        Shape::Matrix(self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn cast<U: Real>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| U::lit(x.to_f64())).collect(),
        }
    }

    /// `self += dy ⊗ x` without allocating.
    pub fn add_outer(&mut self, dy: &Vector<T>, x: &Vector<T>) {
        debug_assert_eq!(self.rows, dy.len());
        debug_assert_eq!(self.cols, x.len());
        for (i, &g) in dy.iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (w, &xj) in row.iter_mut().zip(x.iter()) {
                *w += g * xj;
            }
        }
    }

    /// `out += selfᵀ · dy`.
    pub fn add_transpose_matvec(&self, dy: &Vector<T>, out: &mut Vector<T>) {
        debug_assert_eq!(self.rows, dy.len());
        debug_assert_eq!(self.cols, out.len());
        for (i, &g) in dy.iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            for (o, &w) in out.as_mut_slice().iter_mut().zip(self.row(i)) {
                *o += w * g;
            }
        }
    }
}

fn check_same(op: &'static str, a: &Vector<impl Real>, b: &Vector<impl Real>) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            op,
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

/// `m · x`.
pub fn matvec<T: Real>(m: &Matrix<T>, x: &Vector<T>) -> Result<Vector<T>> {
    if m.cols != x.len() {
        return Err(Error::ShapeMismatch {
            op: "matvec",
            left: m.shape(),
            right: x.shape(),
        });
    }
    Ok(matvec_unchecked(m, x))
}

#[inline]
pub(crate) fn matvec_unchecked<T: Real>(m: &Matrix<T>, x: &Vector<T>) -> Vector<T> {
    let data = (0..m.rows)
        .map(|i| {
            m.row(i)
                .iter()
                .zip(x.iter())
                .fold(T::zero(), |acc, (&w, &xj)| acc + w * xj)
        })
        .collect();
    Vector::from_vec(data)
}

/// Gradients of `y = m · x`: returns `(dy ⊗ x, mᵀ · dy)`.
pub fn matvec_grad<T: Real>(
    m: &Matrix<T>,
    x: &Vector<T>,
    dy: &Vector<T>,
) -> Result<(Matrix<T>, Vector<T>)> {
    if m.cols != x.len() {
        return Err(Error::ShapeMismatch {
            op: "matvec_grad",
            left: m.shape(),
            right: x.shape(),
        });
    }
    if m.rows != dy.len() {
        return Err(Error::ShapeMismatch {
            op: "matvec_grad",
            left: m.shape(),
            right: dy.shape(),
        });
    }
    let mut dm = Matrix::zeros(m.rows, m.cols);
    dm.add_outer(dy, x);
    let mut dx = Vector::zeros(m.cols);
    m.add_transpose_matvec(dy, &mut dx);
    Ok((dm, dx))
}

#[inline]
pub(crate) fn sigmoid_scalar<T: Real>(x: T) -> T {
    // Split on sign so exp never overflows.
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Real>(x: &Vector<T>) -> Vector<T> {
    x.map(sigmoid_scalar)
}

pub fn tanh<T: Real>(x: &Vector<T>) -> Vector<T> {
    x.map(|v| v.tanh())
}

/// Gradient of sigmoid given its cached output `y`: `dy ∘ y ∘ (1 − y)`.
pub fn sigmoid_grad<T: Real>(y: &Vector<T>, dy: &Vector<T>) -> Result<Vector<T>> {
    check_same("sigmoid_grad", y, dy)?;
    Ok(Vector::from_vec(
        y.iter()
            .zip(dy.iter())
            .map(|(&s, &g)| g * s * (T::one() - s))
            .collect(),
    ))
}

/// Gradient of tanh given its cached output `y`: `dy ∘ (1 − y²)`.
pub fn tanh_grad<T: Real>(y: &Vector<T>, dy: &Vector<T>) -> Result<Vector<T>> {
    check_same("tanh_grad", y, dy)?;
    Ok(Vector::from_vec(
        y.iter()
            .zip(dy.iter())
            .map(|(&t, &g)| g * tanh_derivative(t))
            .collect(),
    ))
}

/// `1 − t²` for a cached tanh output `t`.
#[inline]
pub(crate) fn tanh_derivative<T: Real>(t: T) -> T {
    #[cfg(test)]
    if fault::tanh_grad_broken() {
        return T::one() - t;
    }
    T::one() - t * t
}

/// Max-subtracted softmax.
pub fn softmax<T: Real>(logits: &Vector<T>) -> Result<Vector<T>> {
    if logits.is_empty() {
        return Err(Error::Empty("softmax"));
    }
    let max = logits
        .iter()
        .fold(T::neg_infinity(), |m, &x| if x > m { x } else { m });
    let exps: Vec<T> = logits.iter().map(|&x| (x - max).exp()).collect();
    let total: T = exps.iter().fold(T::zero(), |acc, &e| acc + e);
    Ok(Vector::from_vec(exps.into_iter().map(|e| e / total).collect()))
}

/// `log(softmax(logits))[index]`, computed without forming the probabilities.
pub fn log_softmax_at<T: Real>(logits: &Vector<T>, index: usize) -> Result<T> {
    if logits.is_empty() {
        return Err(Error::Empty("log_softmax"));
    }
    let max = logits
        .iter()
        .fold(T::neg_infinity(), |m, &x| if x > m { x } else { m });
    let total = logits
        .iter()
        .fold(T::zero(), |acc, &x| acc + (x - max).exp());
    Ok(logits[index] - max - total.ln())
}

/// Gradient of softmax given its cached output `p`: `p ∘ (dp − ⟨dp, p⟩)`.
pub fn softmax_grad<T: Real>(p: &Vector<T>, dp: &Vector<T>) -> Result<Vector<T>> {
    check_same("softmax_grad", p, dp)?;
    let inner = p.dot(dp);
    Ok(Vector::from_vec(
        p.iter()
            .zip(dp.iter())
            .map(|(&pi, &gi)| pi * (gi - inner))
            .collect(),
    ))
}

pub fn add<T: Real>(a: &Vector<T>, b: &Vector<T>) -> Result<Vector<T>> {
    check_same("add", a, b)?;
    Ok(Vector::from_vec(
        a.iter().zip(b.iter()).map(|(&x, &y)| x + y).collect(),
    ))
}

/// Gradient of `a + b`: the upstream gradient flows to both operands.
pub fn add_grad<T: Real>(dy: &Vector<T>) -> (Vector<T>, Vector<T>) {
    (dy.clone(), dy.clone())
}

pub fn hadamard<T: Real>(a: &Vector<T>, b: &Vector<T>) -> Result<Vector<T>> {
    check_same("hadamard", a, b)?;
    Ok(Vector::from_vec(
        a.iter().zip(b.iter()).map(|(&x, &y)| x * y).collect(),
    ))
}

/// Gradient of `a ∘ b`: `(dy ∘ b, dy ∘ a)`.
pub fn hadamard_grad<T: Real>(
    a: &Vector<T>,
    b: &Vector<T>,
    dy: &Vector<T>,
) -> Result<(Vector<T>, Vector<T>)> {
    check_same("hadamard_grad", a, b)?;
    check_same("hadamard_grad", a, dy)?;
    Ok((hadamard(dy, b)?, hadamard(dy, a)?))
}

pub fn concat<T: Real>(a: &Vector<T>, b: &Vector<T>) -> Vector<T> {
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(a.as_slice());
    data.extend_from_slice(b.as_slice());
    Vector::from_vec(data)
}

/// Gradient of `concat(a, b)` where `a` had length `split`.
pub fn concat_grad<T: Real>(dy: &Vector<T>, split: usize) -> Result<(Vector<T>, Vector<T>)> {
    if split > dy.len() {
        return Err(Error::ShapeMismatch {
            op: "concat_grad",
            left: Shape::Vector(split),
            right: dy.shape(),
        });
    }
    let (a, b) = dy.as_slice().split_at(split);
    Ok((Vector::from_vec(a.to_vec()), Vector::from_vec(b.to_vec())))
}
