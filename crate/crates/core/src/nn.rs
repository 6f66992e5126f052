//! Dense multilayer perceptron with hand-written reverse-mode derivatives.
//!
//! Parameters live in one flat vector so optimizers and finite-difference
//! checks can treat them uniformly. Layer `l` stores its weight matrix
//! (`out x in`, row-major) followed by its bias.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu(f64),
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu(s) => {
                if x > 0.0 {
                    x
                } else {
                    s * x
                }
            }
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative given the pre-activation and the activation output.
    #[inline]
    fn derivative(self, pre: f64, post: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(s) => {
                if pre > 0.0 {
                    1.0
                } else {
                    s
                }
            }
            Activation::Tanh => 1.0 - post * post,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    dims: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
}

/// Intermediate values recorded by [`Mlp::forward_trace`].
pub struct Trace {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.post.last().expect("trace has at least the input")
    }
}

pub fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

impl Mlp {
    /// Weights drawn from `N(0, 1/fan_in)`, zero biases.
    pub fn init<R: Rng + ?Sized>(dims: Vec<usize>, activations: Vec<Activation>, rng: &mut R) -> Self {
        assert_eq!(dims.len(), activations.len() + 1, "one activation per layer");
        let mut params = Vec::with_capacity(param_count(&dims));
        for w in dims.windows(2) {
            let normal = Normal::new(0.0, (1.0 / w[0] as f64).sqrt()).expect("valid std");
            params.extend((0..w[0] * w[1]).map(|_| normal.sample(rng)));
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        Self { dims, activations, params }
    }

    pub fn from_parts(dims: Vec<usize>, activations: Vec<Activation>, params: Vec<f64>) -> Option<Self> {
        (dims.len() == activations.len() + 1
            && dims.iter().all(|&d| d > 0)
            && params.len() == param_count(&dims))
        .then_some(Self { dims, activations, params })
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("non-empty dims")
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        // (offset, fan_in, fan_out)
        self.dims.windows(2).scan(0usize, |off, w| {
            let start = *off;
            *off += (w[0] + 1) * w[1];
            Some((start, w[0], w[1]))
        })
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for ((off, fin, fout), act) in self.layers().zip(&self.activations) {
            cur = affine(&self.params[off..off + (fin + 1) * fout], fin, fout, &cur)
                .into_iter()
                .map(|v| act.apply(v))
                .collect();
        }
        cur
    }

    pub fn forward_trace(&self, x: &[f64]) -> Trace {
        let mut pre = Vec::with_capacity(self.activations.len());
        let mut post = vec![x.to_vec()];
        for ((off, fin, fout), act) in self.layers().zip(&self.activations) {
            let z = affine(&self.params[off..off + (fin + 1) * fout], fin, fout, post.last().unwrap());
            post.push(z.iter().map(|&v| act.apply(v)).collect());
            pre.push(z);
        }
        Trace { pre, post }
    }

    /// Backpropagate `cotangent` (w.r.t. the output) through a recorded
    /// trace. Parameter gradients are added into `param_grad` when given;
    /// the gradient w.r.t. the input is returned.
    pub fn backward(&self, trace: &Trace, cotangent: &[f64], mut param_grad: Option<&mut [f64]>) -> Vec<f64> {
        let layers: Vec<_> = self.layers().collect();
        let mut cot = cotangent.to_vec();
        for (l, &(off, fin, fout)) in layers.iter().enumerate().rev() {
            let act = self.activations[l];
            let delta: Vec<f64> = cot
                .iter()
                .zip(&trace.pre[l])
                .zip(&trace.post[l + 1])
                .map(|((c, &z), &a)| c * act.derivative(z, a))
                .collect();
            let input = &trace.post[l];
            let w = &self.params[off..off + fin * fout];
            if let Some(g) = param_grad.as_deref_mut() {
                let (gw, gb) = g[off..off + (fin + 1) * fout].split_at_mut(fin * fout);
                for (o, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        for (gwi, &xi) in gw[o * fin..(o + 1) * fin].iter_mut().zip(input) {
                            *gwi += d * xi;
                        }
                    }
                    gb[o] += d;
                }
            }
            let mut next = vec![0.0; fin];
            for (o, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    for (n, &wi) in next.iter_mut().zip(&w[o * fin..(o + 1) * fin]) {
                        *n += d * wi;
                    }
                }
            }
            cot = next;
        }
        cot
    }

    /// Product of the Frobenius norms of the weight matrices times the
    /// Lipschitz constants of the activations (all ≤ 1 here).
    pub fn lipschitz_bound(&self) -> f64 {
        self.layers()
            .map(|(off, fin, fout)| {
                self.params[off..off + fin * fout]
                    .iter()
                    .map(|w| w * w)
                    .sum::<f64>()
                    .sqrt()
            })
            .product()
    }
}

fn affine(layer: &[f64], fin: usize, fout: usize, x: &[f64]) -> Vec<f64> {
    let (w, b) = layer.split_at(fin * fout);
    (0..fout)
        .map(|o| crate::sum::dot(&w[o * fin..(o + 1) * fin], x) + b[o])
        .collect()
}
