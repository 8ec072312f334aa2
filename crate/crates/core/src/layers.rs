//! Learnable building blocks: affine maps, MLPs, and conv stacks.
//!
//! Weights and biases are drawn uniformly from `[−1/√fan_in, 1/√fan_in]`.

use rand::Rng;

use crate::error::Result;
use crate::tensor::{ops, Parameter, Tensor};

fn uniform(rng: &mut impl Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-bound..=bound)).collect()
}

/// `y = x · Wᵀ + b` over the trailing axis.
#[derive(Debug, Clone)]
pub struct Affine {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl Affine {
    pub fn new(name: &str, d_in: usize, d_out: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Affine {
            weight: Parameter::new(format!("{name}.weight"), &[d_out, d_in], uniform(rng, d_out * d_in, d_in))?,
            bias: Parameter::new(format!("{name}.bias"), &[d_out], uniform(rng, d_out, d_in))?,
        })
    }

    pub fn d_in(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn d_out(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        ops::linear(x, self.weight.tensor(), self.bias.tensor())
    }

    fn params(&self) -> [&Parameter; 2] {
        [&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> [&mut Parameter; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

/// Affine layers with relu between consecutive layers (none after the last).
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Affine>,
}

impl Mlp {
    /// `widths = [d_in, hidden.., d_out]`.
    pub fn new(name: &str, widths: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Affine::new(&format!("{name}.{i}"), w[0], w[1], rng))
            .collect::<Result<_>>()?;
        Ok(Mlp { layers })
    }

    pub fn d_in(&self) -> usize {
        self.layers.first().map_or(0, Affine::d_in)
    }

    pub fn d_out(&self) -> usize {
        self.layers.last().map_or(0, Affine::d_out)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                h = ops::relu(&h);
            }
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    pub fn params(&self) -> impl Iterator<Item = &Parameter> {
        self.layers.iter().flat_map(Affine::params)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.layers.iter_mut().flat_map(Affine::params_mut)
    }
}

/// A `k×k` convolution with "same" zero padding.
#[derive(Debug, Clone)]
pub struct Conv {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl Conv {
    pub fn new(name: &str, c_in: usize, c_out: usize, k: usize, rng: &mut impl Rng) -> Result<Self> {
        let fan_in = c_in * k * k;
        Ok(Conv {
            weight: Parameter::new(format!("{name}.weight"), &[c_out, c_in, k, k], uniform(rng, c_out * fan_in, fan_in))?,
            bias: Parameter::new(format!("{name}.bias"), &[c_out], uniform(rng, c_out, fan_in))?,
        })
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel_size(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        ops::conv2d(x, self.weight.tensor(), self.bias.tensor(), self.kernel_size() / 2)
    }

    fn params(&self) -> [&Parameter; 2] {
        [&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> [&mut Parameter; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

/// Convolutions with relu between consecutive layers.
#[derive(Debug, Clone)]
pub struct ConvStack {
    pub convs: Vec<Conv>,
    /// Whether a relu separates consecutive convolutions.
    pub relu_between: bool,
}

impl ConvStack {
    /// `channels = [c_in, hidden.., c_out]`, one conv per consecutive pair.
    pub fn new(name: &str, channels: &[usize], k: usize, relu_between: bool, rng: &mut impl Rng) -> Result<Self> {
        let convs = channels
            .windows(2)
            .enumerate()
            .map(|(i, c)| Conv::new(&format!("{name}.{i}"), c[0], c[1], k, rng))
            .collect::<Result<_>>()?;
        Ok(ConvStack { convs, relu_between })
    }

    pub fn c_in(&self) -> usize {
        self.convs.first().map_or(0, Conv::c_in)
    }

    pub fn c_out(&self) -> usize {
        self.convs.last().map_or(0, Conv::c_out)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for (i, conv) in self.convs.iter().enumerate() {
            if i > 0 && self.relu_between {
                h = ops::relu(&h);
            }
            h = conv.forward(&h)?;
        }
        Ok(h)
    }

    pub fn params(&self) -> impl Iterator<Item = &Parameter> {
        self.convs.iter().flat_map(Conv::params)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.convs.iter_mut().flat_map(Conv::params_mut)
    }
}
