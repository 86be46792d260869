//! Dense layers with explicit forward caches and backward passes.
//!
//! Every `backward` accumulates parameter gradients into a value of the same
//! type (so gradients can be summed, scaled and applied uniformly) and
//! returns the gradient with respect to the layer input.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr_lite::normal;
use serde::{Deserialize, Serialize};

pub type Mat = Array2<f64>;
pub type Vector = Array1<f64>;

const LN_EPS: f64 = 1e-6;

/// Uniform access to every parameter tensor as a flat slice.
pub trait Params {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>);
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>);

    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        self.collect("", &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::new();
        self.collect_mut("", &mut out);
        out
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl Params for Mat {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        out.push((prefix.to_string(), self.as_slice().expect("standard layout")));
    }
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        out.push((prefix.to_string(), self.as_slice_mut().expect("standard layout")));
    }
}

impl Params for Vector {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        out.push((prefix.to_string(), self.as_slice().expect("standard layout")));
    }
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        out.push((prefix.to_string(), self.as_slice_mut().expect("standard layout")));
    }
}

/// Implements [`Params`] for a struct by listing its parameter fields.
macro_rules! impl_params {
    ($ty:ty { $($field:ident),+ $(,)? }) => {
        impl $crate::encoder::nn::Params for $ty {
            fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
                $( self.$field.collect(&$crate::encoder::nn::join(prefix, stringify!($field)), out); )+
            }
            fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
                $( self.$field.collect_mut(&$crate::encoder::nn::join(prefix, stringify!($field)), out); )+
            }
        }
    };
}
pub(crate) use impl_params;

impl<T: Params> Params for Vec<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        for (i, item) in self.iter().enumerate() {
            item.collect(&join(prefix, &i.to_string()), out);
        }
    }
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        for (i, item) in self.iter_mut().enumerate() {
            item.collect_mut(&join(prefix, &i.to_string()), out);
        }
    }
}

/// `acc += scale * other`, tensor by tensor. Both must share a shape.
pub fn add_scaled<P: Params>(acc: &mut P, other: &P, scale: f64) {
    let src = other.tensors();
    for ((_, dst), (_, s)) in acc.tensors_mut().into_iter().zip(src) {
        for (d, v) in dst.iter_mut().zip(s) {
            *d += scale * v;
        }
    }
}

pub fn sq_norm<P: Params>(p: &P) -> f64 {
    p.tensors().iter().flat_map(|(_, t)| t.iter()).map(|v| v * v).sum()
}

pub fn all_finite<P: Params>(p: &P) -> bool {
    p.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
}

pub fn init_matrix<R: Rng>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Mat {
    Mat::from_shape_fn((rows, cols), |_| std * normal(rng))
}

/// `y = x W + b`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: Mat,
    pub b: Vector,
}

impl_params!(Linear { w, b });

impl Linear {
    pub fn new<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let std = (1.0 / inputs as f64).sqrt();
        Linear { w: init_matrix(inputs, outputs, std, rng), b: Vector::zeros(outputs) }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear { w: Mat::zeros((inputs, outputs)), b: Vector::zeros(outputs) }
    }

    pub fn zeros_like(&self) -> Self {
        Linear::zeros(self.w.nrows(), self.w.ncols())
    }

    pub fn forward(&self, x: &Mat) -> Mat {
        x.dot(&self.w) + &self.b
    }

    pub fn backward(&self, x: &Mat, dy: &Mat, grad: &mut Linear) -> Mat {
        grad.w += &x.t().dot(dy);
        grad.b += &dy.sum_axis(Axis(0));
        dy.dot(&self.w.t())
    }
}

/// Row-wise layer normalization with learned gain and bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gamma: Vector,
    pub beta: Vector,
}

impl_params!(LayerNorm { gamma, beta });

pub struct LayerNormCache {
    xhat: Mat,
    inv_std: Vector,
}

impl LayerNorm {
    pub fn new(width: usize) -> Self {
        LayerNorm { gamma: Vector::ones(width), beta: Vector::zeros(width) }
    }

    pub fn zeros_like(&self) -> Self {
        LayerNorm { gamma: Vector::zeros(self.gamma.len()), beta: Vector::zeros(self.beta.len()) }
    }

    pub fn forward(&self, x: &Mat) -> (Mat, LayerNormCache) {
        let n = x.ncols() as f64;
        let mut xhat = x.clone();
        let mut inv_std = Vector::zeros(x.nrows());
        for (mut row, s) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
            let mean = row.sum() / n;
            row -= mean;
            let var = row.iter().map(|v| v * v).sum::<f64>() / n;
            *s = 1.0 / (var + LN_EPS).sqrt();
            row *= *s;
        }
        let y = &xhat * &self.gamma + &self.beta;
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&self, cache: &LayerNormCache, dy: &Mat, grad: &mut LayerNorm) -> Mat {
        grad.gamma += &(dy * &cache.xhat).sum_axis(Axis(0));
        grad.beta += &dy.sum_axis(Axis(0));
        let dxhat = dy * &self.gamma;
        let n = dy.ncols() as f64;
        let mut dx = Mat::zeros(dy.raw_dim());
        for (i, mut out) in dx.rows_mut().into_iter().enumerate() {
            let g = dxhat.row(i);
            let xh = cache.xhat.row(i);
            let sum_g = g.sum();
            let sum_gx = g.dot(&xh);
            let s = cache.inv_std[i] / n;
            for j in 0..out.len() {
                out[j] = s * (n * g[j] - sum_g - xh[j] * sum_gx);
            }
        }
        dx
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Binary cross-entropy of `sigmoid(logit)` against `target`, and its
/// derivative with respect to the logit.
pub fn bce_with_logit(logit: f64, target: bool) -> (f64, f64) {
    let t = if target { 1.0 } else { 0.0 };
    (softplus(logit) - t * logit, sigmoid(logit) - t)
}

/// In-place numerically stable softmax over each row.
pub fn softmax_rows(m: &mut Mat) {
    for mut row in m.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

/// Minimal normal sampler so initialization does not depend on the
/// distribution crate's version-specific algorithms.
mod rand_distr_lite {
    use rand::Rng;

    pub fn normal<R: Rng>(rng: &mut R) -> f64 {
        // Box-Muller
        let u1: f64 = rng.random_range(f64::EPSILON..1.0);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
