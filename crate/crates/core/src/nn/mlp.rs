use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Elu,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    #[inline]
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
        }
    }
}

/// Fully connected network.
///
/// Parameters are one flat vector; layer `k` stores its `out x in` weights
/// row-major followed by its `out` biases. Hidden layers are activated; the
/// last layer is activated only when `activate_output` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    widths: Vec<usize>,
    activation: Activation,
    activate_output: bool,
    params: Vec<f64>,
}

/// Per-layer values recorded by [`Mlp::forward_cached`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// `inputs[k]` is the input to layer `k`; the last entry is the network output.
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.inputs.last().expect("cache holds the output")
    }
}

impl Mlp {
    /// Zero-initialised network.
    pub fn zeros(widths: &[usize], activation: Activation, activate_output: bool) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        let n = widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Self { widths: widths.to_vec(), activation, activate_output, params: vec![0.0; n] }
    }

    /// Gaussian weights with variance `gain^2 / fan_in`, zero biases. The last
    /// layer uses `output_gain`.
    pub fn random<R: Rng + ?Sized>(
        widths: &[usize],
        activation: Activation,
        activate_output: bool,
        gain: f64,
        output_gain: f64,
        rng: &mut R,
    ) -> Self {
        let mut net = Self::zeros(widths, activation, activate_output);
        let layers = net.num_layers();
        let mut offset = 0;
        for k in 0..layers {
            let (fan_in, fan_out) = (widths[k], widths[k + 1]);
            let g = if k + 1 == layers { output_gain } else { gain };
            let std = g / (fan_in as f64).sqrt();
            for w in &mut net.params[offset..offset + fan_in * fan_out] {
                let z: f64 = StandardNormal.sample(rng);
                *w = std * z;
            }
            offset += fan_in * fan_out + fan_out;
        }
        net
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// `(weight offset, bias offset)` of layer `k`.
    pub fn layer_offsets(&self, k: usize) -> (usize, usize) {
        let mut offset = 0;
        for j in 0..k {
            offset += self.widths[j] * self.widths[j + 1] + self.widths[j + 1];
        }
        (offset, offset + self.widths[k] * self.widths[k + 1])
    }

    fn check_input(&self, input: &[f64]) -> Result<(), NnError> {
        if input.len() != self.input_dim() {
            return Err(NnError::Shape { expected: self.input_dim(), got: input.len() });
        }
        Ok(())
    }

    #[inline]
    fn layer(&self, k: usize, offset: usize, x: &[f64], pre: &mut Vec<f64>, out: &mut Vec<f64>) {
        let (n_in, n_out) = (self.widths[k], self.widths[k + 1]);
        let w = &self.params[offset..offset + n_in * n_out];
        let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
        let activate = k + 1 < self.num_layers() || self.activate_output;
        pre.clear();
        out.clear();
        for (row, bias) in w.chunks_exact(n_in).zip(b) {
            let z = row.iter().zip(x).fold(*bias, |acc, (wi, xi)| acc + wi * xi);
            pre.push(z);
            out.push(if activate { self.activation.apply(z) } else { z });
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        let (mut pre, mut out) = (Vec::new(), Vec::new());
        let mut offset = 0;
        for k in 0..self.num_layers() {
            self.layer(k, offset, &x, &mut pre, &mut out);
            std::mem::swap(&mut x, &mut out);
            offset += self.widths[k] * self.widths[k + 1] + self.widths[k + 1];
        }
        Ok(x)
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<MlpCache, NnError> {
        self.check_input(input)?;
        let layers = self.num_layers();
        let mut inputs = Vec::with_capacity(layers + 1);
        let mut pres = Vec::with_capacity(layers);
        inputs.push(input.to_vec());
        let mut offset = 0;
        for k in 0..layers {
            let (mut pre, mut out) = (Vec::new(), Vec::new());
            self.layer(k, offset, &inputs[k], &mut pre, &mut out);
            pres.push(pre);
            inputs.push(out);
            offset += self.widths[k] * self.widths[k + 1] + self.widths[k + 1];
        }
        Ok(MlpCache { inputs, pre: pres })
    }

    /// Reverse-mode pass. Adds parameter gradients into `grads` (same layout as
    /// the parameters) and returns the gradient with respect to the input.
    pub fn backward(
        &self,
        cache: &MlpCache,
        output_grad: &[f64],
        grads: &mut [f64],
    ) -> Result<Vec<f64>, NnError> {
        if output_grad.len() != self.output_dim() {
            return Err(NnError::Shape { expected: self.output_dim(), got: output_grad.len() });
        }
        if grads.len() != self.params.len() {
            return Err(NnError::Shape { expected: self.params.len(), got: grads.len() });
        }
        let layers = self.num_layers();
        let mut delta = output_grad.to_vec();
        for k in (0..layers).rev() {
            let (n_in, n_out) = (self.widths[k], self.widths[k + 1]);
            let (w_off, b_off) = self.layer_offsets(k);
            let activate = k + 1 < layers || self.activate_output;
            if activate {
                for (d, (z, y)) in delta.iter_mut().zip(cache.pre[k].iter().zip(&cache.inputs[k + 1])) {
                    *d *= self.activation.derivative(*z, *y);
                }
            }
            let x = &cache.inputs[k];
            let mut input_grad = vec![0.0; n_in];
            let w = &self.params[w_off..w_off + n_in * n_out];
            let (gw, gb) = grads[w_off..b_off + n_out].split_at_mut(n_in * n_out);
            for (i, d) in delta.iter().enumerate() {
                gb[i] += d;
                let row = &w[i * n_in..(i + 1) * n_in];
                let grow = &mut gw[i * n_in..(i + 1) * n_in];
                for j in 0..n_in {
                    grow[j] += d * x[j];
                    input_grad[j] += d * row[j];
                }
            }
            delta = input_grad;
        }
        Ok(delta)
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // Straight-line evaluation written independently of `Mlp::layer`.
    fn reference_forward(net: &Mlp, input: &[f64]) -> Vec<f64> {
        let w = net.widths().to_vec();
        let p = net.params();
        let mut x = input.to_vec();
        let mut off = 0;
        for k in 0..w.len() - 1 {
            let mut y = vec![0.0; w[k + 1]];
            for i in 0..w[k + 1] {
                let mut s = p[off + w[k] * w[k + 1] + i];
                for j in 0..w[k] {
                    s += p[off + i * w[k] + j] * x[j];
                }
                let last = k == w.len() - 2;
                y[i] = if !last || net.activate_output {
                    match net.activation() {
                        Activation::Tanh => s.tanh(),
                        Activation::Elu => if s > 0.0 { s } else { s.exp() - 1.0 },
                    }
                } else {
                    s
                };
            }
            off += w[k] * w[k + 1] + w[k + 1];
            x = y;
        }
        x
    }

    #[test]
    fn zero_net_gives_zero() {
        let net = Mlp::zeros(&[3, 8, 2], Activation::Elu, false);
        assert_eq!(net.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_linear_layer() {
        let mut net = Mlp::zeros(&[3, 3], Activation::Tanh, false);
        for i in 0..3 {
            net.params_mut()[i * 3 + i] = 1.0;
        }
        let x = [0.3, -1.7, 4.0];
        assert_eq!(net.forward(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn matches_reference_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for act in [Activation::Tanh, Activation::Elu] {
            for out_act in [false, true] {
                let net = Mlp::random(&[5, 7, 6, 3], act, out_act, 1.3, 1.0, &mut rng);
                let x: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
                let a = net.forward(&x).unwrap();
                let b = reference_forward(&net, &x);
                for (u, v) in a.iter().zip(&b) {
                    assert!((u - v).abs() < 1e-14);
                }
                assert_eq!(net.forward_cached(&x).unwrap().output(), &a[..]);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let net = Mlp::zeros(&[3, 2], Activation::Tanh, false);
        assert!(matches!(net.forward(&[1.0]), Err(NnError::Shape { expected: 3, got: 1 })));
        let cache = net.forward_cached(&[1.0, 2.0, 3.0]).unwrap();
        let mut g = vec![0.0; net.num_params()];
        assert!(net.backward(&cache, &[1.0], &mut g).is_err());
    }

    #[test]
    fn linear_weight_gradient_is_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::random(&[4, 3], Activation::Tanh, false, 1.0, 1.0, &mut rng);
        let x = [0.5, -1.0, 2.0, 0.25];
        let og = [1.5, -0.5, 2.0];
        let cache = net.forward_cached(&x).unwrap();
        let mut g = vec![0.0; net.num_params()];
        let ig = net.backward(&cache, &og, &mut g).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                assert_eq!(g[i * 4 + j], x[j] * og[i]);
            }
            assert_eq!(g[12 + i], og[i]);
        }
        for j in 0..4 {
            let expect: f64 = (0..3).map(|i| net.params()[i * 4 + j] * og[i]).sum();
            assert!((ig[j] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_backward_are_bitwise_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = Mlp::random(&[4, 16, 16, 2], Activation::Elu, false, 1.0, 1.0, &mut rng);
        let x = [0.1, 0.2, -0.3, 0.4];
        let run = || {
            let c = net.forward_cached(&x).unwrap();
            let mut g = vec![0.0; net.num_params()];
            let ig = net.backward(&c, &[1.0, -1.0], &mut g).unwrap();
            (c.output().to_vec(), g, ig)
        };
        assert_eq!(run(), run());
    }
}
