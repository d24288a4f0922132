//! Dense multilayer perceptron over a flat parameter vector.
//!
//! Layer `l` stores its weights as an `in × out` row-major block followed by
//! `out` biases. Hidden layers use tanh; the output layer is linear. Inputs are
//! batches of rows, so a per-particle network processes all particles at once.

use rand::Rng as _;

use crate::rng::rng;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Activations kept from a forward pass for backpropagation.
pub struct Tape {
    /// `acts[0]` is the input; `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
    rows: usize,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn affine(w: &[f64], b: &[f64], x: &[f64], rows: usize, nin: usize, nout: usize) -> Vec<f64> {
    let mut y = Vec::with_capacity(rows * nout);
    for r in 0..rows {
        y.extend_from_slice(b);
        let yr = &mut y[r * nout..];
        for (i, &xi) in x[r * nin..(r + 1) * nin].iter().enumerate() {
            for (yj, wj) in yr.iter_mut().zip(&w[i * nout..(i + 1) * nout]) {
                *yj += xi * wj;
            }
        }
    }
    y
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
        })
    }

    /// Glorot-uniform weights, zero biases. With `zero_output` the last layer
    /// starts at zero so the network initially outputs exactly zero.
    pub fn init(sizes: &[usize], seed: u64, zero_output: bool) -> Result<Self> {
        let mut net = Mlp::zeros(sizes)?;
        let mut r = rng(seed);
        let layers = net.sizes.len() - 1;
        let mut off = 0;
        for l in 0..layers {
            let (nin, nout) = (net.sizes[l], net.sizes[l + 1]);
            let limit = (6.0 / (nin + nout) as f64).sqrt();
            for w in &mut net.params[off..off + nin * nout] {
                *w = if zero_output && l + 1 == layers {
                    0.0
                } else {
                    r.gen_range(-limit..limit)
                };
            }
            off += nin * nout + nout;
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// `(weight offset, bias offset, in, out)` per layer.
    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize, usize)> + '_ {
        let mut off = 0;
        self.sizes.windows(2).map(move |w| {
            let (nin, nout) = (w[0], w[1]);
            let l = (off, off + nin * nout, nin, nout);
            off += nin * nout + nout;
            l
        })
    }

    pub fn forward(&self, x: &[f64], rows: usize) -> Vec<f64> {
        self.forward_tape(x.to_vec(), rows).acts.pop().unwrap()
    }

    pub fn forward_tape(&self, x: Vec<f64>, rows: usize) -> Tape {
        debug_assert_eq!(x.len(), rows * self.input_size());
        let last = self.sizes.len() - 2;
        let mut acts = vec![x];
        for (l, (wo, bo, nin, nout)) in self.layers().enumerate() {
            let mut y = affine(
                &self.params[wo..bo],
                &self.params[bo..bo + nout],
                acts.last().unwrap(),
                rows,
                nin,
                nout,
            );
            if l != last {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(y);
        }
        Tape { acts, rows }
    }

    /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
    pub fn backward(&self, tape: &Tape, mut delta: Vec<f64>, grad: &mut [f64]) {
        let rows = tape.rows;
        let layers: Vec<_> = self.layers().collect();
        for (l, &(wo, bo, nin, nout)) in layers.iter().enumerate().rev() {
            let input = &tape.acts[l];
            let (gw, gb) = grad[wo..bo + nout].split_at_mut(bo - wo);
            for r in 0..rows {
                let dr = &delta[r * nout..(r + 1) * nout];
                for (g, d) in gb.iter_mut().zip(dr) {
                    *g += d;
                }
                for (i, &xi) in input[r * nin..(r + 1) * nin].iter().enumerate() {
                    for (g, d) in gw[i * nout..(i + 1) * nout].iter_mut().zip(dr) {
                        *g += xi * d;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.params[wo..bo];
            let mut next = vec![0.0; rows * nin];
            for r in 0..rows {
                let dr = &delta[r * nout..(r + 1) * nout];
                for i in 0..nin {
                    let s: f64 = w[i * nout..(i + 1) * nout]
                        .iter()
                        .zip(dr)
                        .map(|(a, b)| a * b)
                        .sum();
                    // Previous layer is hidden, so tanh' = 1 − h².
                    let h = input[r * nin + i];
                    next[r * nin + i] = s * (1.0 - h * h);
                }
            }
            delta = next;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_sized_forward() {
        // 1 → 2 → 1 with tanh hidden.
        let mut net = Mlp::zeros(&[1, 2, 1]).unwrap();
        net.params = vec![0.5, -1.0, 0.1, 0.2, 2.0, 3.0, -0.5];
        let x = 0.7;
        let h = [(0.5 * x + 0.1f64).tanh(), (0.2f64 - x).tanh()];
        let expected = 2.0 * h[0] + 3.0 * h[1] - 0.5;
        assert!((net.forward(&[x], 1)[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_output_layer_outputs_zero() {
        let net = Mlp::init(&[4, 8, 3], 1, true).unwrap();
        assert!(net
            .forward(&[0.3, -1.0, 2.0, 0.5], 1)
            .iter()
            .all(|&v| v == 0.0));
        assert!(net.params.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn invalid_sizes() {
        assert!(Mlp::zeros(&[3]).is_err());
        assert!(Mlp::zeros(&[3, 0, 2]).is_err());
    }
}
