//! Layer descriptors that own parameter indices into a [`ParamSet`].

use rand_chacha::ChaCha8Rng;

use crate::graph::{Graph, Var};
use crate::params::{fan_in_uniform, Bound, ParamSet};
use crate::{Result, Tensor};

#[derive(Clone, Debug)]
pub struct Conv2d {
    weight: usize,
    bias: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        params: &mut ParamSet,
        rng: &mut ChaCha8Rng,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let weight = params.push(
            format!("{name}.weight"),
            fan_in_uniform(rng, &[out_channels, in_channels, kernel, kernel], fan_in),
        );
        let bias = params.push(
            format!("{name}.bias"),
            fan_in_uniform(rng, &[out_channels], fan_in),
        );
        Self {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    /// 3×3, padding 1.
    pub fn same3(
        params: &mut ParamSet,
        rng: &mut ChaCha8Rng,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        stride: usize,
    ) -> Self {
        Self::new(params, rng, name, in_channels, out_channels, 3, stride, 1)
    }

    pub fn weight_index(&self) -> usize {
        self.weight
    }

    pub fn bias_index(&self) -> usize {
        self.bias
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        g.conv2d(
            x,
            p.var(self.weight),
            Some(p.var(self.bias)),
            self.stride,
            self.padding,
        )
    }
}

/// Instance normalization with a learned per-channel scale and shift.
#[derive(Clone, Debug)]
pub struct InstanceNorm {
    gamma: usize,
    beta: usize,
}

impl InstanceNorm {
    pub const EPS: f64 = 1e-5;

    pub fn new(params: &mut ParamSet, name: &str, channels: usize) -> Self {
        let gamma = params.push(format!("{name}.gamma"), Tensor::full(&[channels], 1.0));
        let beta = params.push(format!("{name}.beta"), Tensor::zeros(&[channels]));
        Self { gamma, beta }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        g.instance_norm(x, p.var(self.gamma), p.var(self.beta), Self::EPS)
    }
}
