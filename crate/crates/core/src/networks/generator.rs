use frontalize_tensor::nn::{Conv2d, InstanceNorm};
use frontalize_tensor::{Bound, Graph, ParamSet, Tensor, Var};
use serde::{Deserialize, Serialize};

use super::{check_input, stream_rng, Network, GROUP_GENERATOR};
use crate::{Error, Result};

const SLOPE: f64 = 0.2;
/// Inputs are clipped to this magnitude before `atanh`.
const INPUT_CLIP: f64 = 1.0 - 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub size: usize,
    pub channels: usize,
    pub base_channels: usize,
    pub max_channels: usize,
    pub res_blocks: usize,
}

impl GeneratorConfig {
    /// Full-resolution configuration (128 or 256).
    pub fn standard(size: usize) -> Self {
        Self {
            size,
            channels: 3,
            base_channels: 32,
            max_channels: 256,
            res_blocks: 4,
        }
    }

    /// Desk-scale configuration used with the toy corpus.
    pub fn toy(size: usize) -> Self {
        Self {
            size,
            channels: 3,
            base_channels: 16,
            max_channels: 64,
            res_blocks: 2,
        }
    }

    /// Number of stride-2 stages: the bottleneck sits at 8×8.
    pub fn downsamplings(&self) -> usize {
        (self.size / 8).trailing_zeros() as usize
    }

    fn stage_channels(&self, stage: usize) -> usize {
        (self.base_channels << stage).min(self.max_channels)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.size.is_power_of_two() || self.size < 16 {
            return Err(Error::Config(format!(
                "generator size must be a power of two >= 16, got {}",
                self.size
            )));
        }
        if !matches!(self.channels, 1 | 3) {
            return Err(Error::Config(format!(
                "channels must be 1 or 3, got {}",
                self.channels
            )));
        }
        if self.base_channels == 0 || self.max_channels < self.base_channels {
            return Err(Error::Config(
                "generator channel widths are inconsistent".into(),
            ));
        }
        Ok(())
    }

    pub fn arch_id(&self) -> String {
        format!(
            "unet-s{}-c{}-b{}-m{}-r{}",
            self.size, self.channels, self.base_channels, self.max_channels, self.res_blocks
        )
    }
}

struct ConvNorm {
    conv: Conv2d,
    norm: InstanceNorm,
}

impl ConvNorm {
    fn new(
        params: &mut ParamSet,
        rng: &mut rand_chacha::ChaCha8Rng,
        name: &str,
        cin: usize,
        cout: usize,
        stride: usize,
    ) -> Self {
        Self {
            conv: Conv2d::same3(params, rng, &format!("{name}.conv"), cin, cout, stride),
            norm: InstanceNorm::new(params, &format!("{name}.norm"), cout),
        }
    }

    fn forward(&self, g: &mut Graph, p: &Bound, x: Var, activate: bool) -> Result<Var> {
        let y = self.conv.forward(g, p, x)?;
        let y = self.norm.forward(g, p, y)?;
        Ok(if activate { g.leaky_relu(y, SLOPE) } else { y })
    }
}

/// Encoder–decoder with skip connections and a residual bottleneck.
///
/// Stem at full resolution, one stride-2 stage per halving down to 8×8,
/// residual blocks there, then nearest upsampling stages that concatenate the
/// matching encoder features. The head predicts a correction in `atanh`
/// space on top of the input, and a final `tanh` keeps outputs in `[-1, 1]`.
/// The head starts at zero, so an untrained generator returns its input.
pub struct Generator {
    config: GeneratorConfig,
    params: ParamSet,
    stem: ConvNorm,
    downs: Vec<ConvNorm>,
    res: Vec<(ConvNorm, ConvNorm)>,
    ups: Vec<ConvNorm>,
    head: Conv2d,
}

impl Generator {
    pub fn new(config: GeneratorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(seed, GROUP_GENERATOR as u64);
        let mut params = ParamSet::new();
        let n = config.downsamplings();
        let stem = ConvNorm::new(
            &mut params,
            &mut rng,
            "stem",
            config.channels,
            config.stage_channels(0),
            1,
        );
        let downs = (1..=n)
            .map(|i| {
                let (cin, cout) = (config.stage_channels(i - 1), config.stage_channels(i));
                ConvNorm::new(&mut params, &mut rng, &format!("down{i}"), cin, cout, 2)
            })
            .collect();
        let cb = config.stage_channels(n);
        let res = (0..config.res_blocks)
            .map(|i| {
                (
                    ConvNorm::new(&mut params, &mut rng, &format!("res{i}.a"), cb, cb, 1),
                    ConvNorm::new(&mut params, &mut rng, &format!("res{i}.b"), cb, cb, 1),
                )
            })
            .collect();
        let ups = (1..=n)
            .rev()
            .map(|i| {
                let cin = config.stage_channels(i) + config.stage_channels(i - 1);
                let cout = config.stage_channels(i - 1);
                ConvNorm::new(&mut params, &mut rng, &format!("up{i}"), cin, cout, 1)
            })
            .collect();
        let head = Conv2d::same3(
            &mut params,
            &mut rng,
            "head",
            config.stage_channels(0),
            config.channels,
            1,
        );
        for i in [head.weight_index(), head.bias_index()] {
            params.tensors_mut()[i].data_mut().fill(0.0);
        }
        Ok(Self {
            config,
            params,
            stem,
            downs,
            res,
            ups,
            head,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    /// `Ŷ = G(X)` on the tape.
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        check_input(
            g.value(x),
            self.config.channels,
            self.config.size,
            "generator",
        )?;
        let mut skips = Vec::with_capacity(self.downs.len() + 1);
        let mut h = self.stem.forward(g, p, x, true)?;
        for down in &self.downs {
            skips.push(h);
            h = down.forward(g, p, h, true)?;
        }
        for (a, b) in &self.res {
            let r = a.forward(g, p, h, true)?;
            let r = b.forward(g, p, r, false)?;
            h = g.add(h, r)?;
        }
        for up in &self.ups {
            let skip = skips.pop().expect("one skip per stage");
            let u = g.upsample2x(h)?;
            let u = g.concat(u, skip)?;
            h = up.forward(g, p, u, true)?;
        }
        let out = self.head.forward(g, p, h)?;
        let skip = g.clipped_atanh(x, INPUT_CLIP);
        let out = g.add(out, skip)?;
        Ok(g.tanh(out))
    }

    /// Inference on a batch with all parameters as constants.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let xv = g.constant(x.clone());
        let y = self.forward(&mut g, &p, xv)?;
        Ok(g.value(y).clone())
    }
}

impl Network for Generator {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn arch_id(&self) -> String {
        self.config.arch_id()
    }

    fn group(&self) -> u32 {
        GROUP_GENERATOR
    }
}
