//! Finite-difference checks of analytic gradients.
//!
//! The numeric side only ever evaluates the loss, so it shares no code with
//! any backward pass.

use rand::seq::index::sample;
use rand::Rng;

use crate::encoder::nn::Params;

/// Agreement between analytic and central-difference gradients on the
/// checked entries of one tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub tensor: String,
    pub entries: usize,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
    pub abs_error: f64,
    /// `|a - n| / max(|a|, |n|, NORM_FLOOR)` over the checked entries.
    pub relative_error: f64,
}

/// Smallest norm used as the denominator, so rounding noise in the
/// differences of a gradient that is exactly zero does not count as error.
pub const NORM_FLOOR: f64 = 1e-5;

fn relative(a: &[f64], n: &[f64]) -> (f64, f64, f64, f64) {
    let an = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nn = n.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff = a.iter().zip(n).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    (an, nn, diff, diff / an.max(nn).max(NORM_FLOOR))
}

/// Picks up to `budget` entries: all of a small tensor, otherwise half
/// uniformly and half among entries with a non-zero analytic gradient.
fn pick<R: Rng>(analytic: &[f64], budget: usize, rng: &mut R) -> Vec<usize> {
    let n = analytic.len();
    if n <= budget {
        return (0..n).collect();
    }
    let mut idx: Vec<usize> = sample(rng, n, budget / 2).into_vec();
    let nonzero: Vec<usize> = (0..n).filter(|&i| analytic[i] != 0.0 && !idx.contains(&i)).collect();
    let take = (budget - idx.len()).min(nonzero.len());
    idx.extend(sample(rng, nonzero.len(), take).into_iter().map(|i| nonzero[i]));
    idx.sort_unstable();
    idx
}

/// Central differences with step `h` on sampled entries of every tensor.
pub fn check_gradients<P, F, R>(params: &P, analytic: &P, loss: F, budget: usize, h: f64, rng: &mut R) -> Vec<TensorCheck>
where
    P: Params + Clone,
    F: Fn(&P) -> f64,
    R: Rng,
{
    let grads: Vec<(String, Vec<f64>)> = analytic.tensors().into_iter().map(|(n, t)| (n, t.to_vec())).collect();
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(grads.len());
    for (ti, (name, g)) in grads.iter().enumerate() {
        let entries = pick(g, budget, rng);
        let mut a = Vec::with_capacity(entries.len());
        let mut num = Vec::with_capacity(entries.len());
        for &j in &entries {
            let orig = probe.tensors()[ti].1[j];
            probe.tensors_mut()[ti].1[j] = orig + h;
            let up = loss(&probe);
            probe.tensors_mut()[ti].1[j] = orig - h;
            let down = loss(&probe);
            probe.tensors_mut()[ti].1[j] = orig;
            a.push(g[j]);
            num.push((up - down) / (2.0 * h));
        }
        let (analytic_norm, numeric_norm, abs_error, relative_error) = relative(&a, &num);
        out.push(TensorCheck {
            tensor: name.clone(),
            entries: entries.len(),
            analytic_norm,
            numeric_norm,
            abs_error,
            relative_error,
        });
    }
    out
}
