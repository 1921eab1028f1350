use frontalize_tensor::nn::Conv2d;
use frontalize_tensor::{Bound, Graph, ParamSet, Tensor, Var};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_input, stream_rng, Network, GROUP_GLOBAL_D, GROUP_LOCAL_D};
use crate::{Error, Result};

const SLOPE: f64 = 0.2;
const STAGES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub size: usize,
    pub channels: usize,
    pub base_channels: usize,
}

impl DiscriminatorConfig {
    pub fn standard(size: usize) -> Self {
        Self {
            size,
            channels: 3,
            base_channels: 32,
        }
    }

    pub fn toy(size: usize) -> Self {
        Self {
            size,
            channels: 3,
            base_channels: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < 8 || self.base_channels == 0 || !matches!(self.channels, 1 | 3) {
            return Err(Error::Config(format!(
                "invalid discriminator config {self:?}"
            )));
        }
        Ok(())
    }

    fn width(&self, stage: usize) -> usize {
        self.base_channels << stage
    }
}

/// Three stride-2 convolutions with leaky ReLU.
struct Encoder {
    convs: Vec<Conv2d>,
}

impl Encoder {
    fn new(
        params: &mut ParamSet,
        rng: &mut ChaCha8Rng,
        name: &str,
        cfg: &DiscriminatorConfig,
    ) -> Self {
        let convs = (0..STAGES)
            .map(|i| {
                let cin = if i == 0 {
                    cfg.channels
                } else {
                    cfg.width(i - 1)
                };
                Conv2d::same3(
                    params,
                    rng,
                    &format!("{name}.conv{i}"),
                    cin,
                    cfg.width(i),
                    2,
                )
            })
            .collect();
        Self { convs }
    }

    fn out_channels(cfg: &DiscriminatorConfig) -> usize {
        cfg.width(STAGES - 1)
    }

    fn forward(&self, g: &mut Graph, p: &Bound, mut x: Var) -> Result<Var> {
        for conv in &self.convs {
            let y = conv.forward(g, p, x)?;
            x = g.leaky_relu(y, SLOPE);
        }
        Ok(x)
    }
}

/// Map to one channel, average spatially, squash to a probability `[N, 1]`.
fn score(g: &mut Graph, p: &Bound, head: &Conv2d, x: Var) -> Result<Var> {
    let logits = head.forward(g, p, x)?;
    let pooled = g.global_avg_pool(logits)?;
    Ok(g.sigmoid(pooled))
}

/// D1: judges whole images.
pub struct GlobalDiscriminator {
    config: DiscriminatorConfig,
    params: ParamSet,
    encoder: Encoder,
    head: Conv2d,
}

impl GlobalDiscriminator {
    pub fn new(config: DiscriminatorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(seed, GROUP_GLOBAL_D as u64);
        let mut params = ParamSet::new();
        let encoder = Encoder::new(&mut params, &mut rng, "enc", &config);
        let head = Conv2d::same3(
            &mut params,
            &mut rng,
            "head",
            Encoder::out_channels(&config),
            1,
            1,
        );
        Ok(Self {
            config,
            params,
            encoder,
            head,
        })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    /// Index of the bias added just before the sigmoid.
    pub fn final_bias_index(&self) -> usize {
        self.head.bias_index()
    }

    /// Probabilities `[N, 1]` that each image is real.
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        check_input(
            g.value(x),
            self.config.channels,
            self.config.size,
            "global discriminator",
        )?;
        let h = self.encoder.forward(g, p, x)?;
        score(g, p, &self.head, h)
    }

    pub fn infer(&self, x: &Tensor) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let xv = g.constant(x.clone());
        let y = self.forward(&mut g, &p, xv)?;
        Ok(g.value(y).data().to_vec())
    }
}

impl Network for GlobalDiscriminator {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn arch_id(&self) -> String {
        format!(
            "d1-s{}-c{}-b{}",
            self.config.size, self.config.channels, self.config.base_channels
        )
    }

    fn group(&self) -> u32 {
        GROUP_GLOBAL_D
    }
}

/// D2: separate hair, skin and facial-feature encoders whose feature maps are
/// concatenated and fused into one probability.
pub struct LocalDiscriminator {
    config: DiscriminatorConfig,
    params: ParamSet,
    hair: Encoder,
    skin: Encoder,
    face: Encoder,
    fuse: Conv2d,
    head: Conv2d,
}

impl LocalDiscriminator {
    pub fn new(config: DiscriminatorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(seed, GROUP_LOCAL_D as u64);
        let mut params = ParamSet::new();
        let hair = Encoder::new(&mut params, &mut rng, "hair", &config);
        let skin = Encoder::new(&mut params, &mut rng, "skin", &config);
        let face = Encoder::new(&mut params, &mut rng, "face", &config);
        let c = Encoder::out_channels(&config);
        let fuse = Conv2d::same3(&mut params, &mut rng, "fuse", 3 * c, c, 1);
        let head = Conv2d::same3(&mut params, &mut rng, "head", c, 1, 1);
        Ok(Self {
            config,
            params,
            hair,
            skin,
            face,
            fuse,
            head,
        })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    /// Probabilities `[N, 1]` for `(hair, skin, face)` views.
    pub fn forward(&self, g: &mut Graph, p: &Bound, views: [Var; 3]) -> Result<Var> {
        for v in views {
            check_input(
                g.value(v),
                self.config.channels,
                self.config.size,
                "local discriminator",
            )?;
        }
        if g.value(views[0]).shape() != g.value(views[1]).shape()
            || g.value(views[0]).shape() != g.value(views[2]).shape()
        {
            return Err(Error::Network("local views differ in shape".into()));
        }
        let h = self.hair.forward(g, p, views[0])?;
        let s = self.skin.forward(g, p, views[1])?;
        let f = self.face.forward(g, p, views[2])?;
        let hs = g.concat(h, s)?;
        let cat = g.concat(hs, f)?;
        let fused = self.fuse.forward(g, p, cat)?;
        let fused = g.leaky_relu(fused, SLOPE);
        score(g, p, &self.head, fused)
    }

    pub fn infer(&self, views: [&Tensor; 3]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let vars = views.map(|t| g.constant(t.clone()));
        let y = self.forward(&mut g, &p, vars)?;
        Ok(g.value(y).data().to_vec())
    }
}

impl Network for LocalDiscriminator {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn arch_id(&self) -> String {
        format!(
            "d2-s{}-c{}-b{}",
            self.config.size, self.config.channels, self.config.base_channels
        )
    }

    fn group(&self) -> u32 {
        GROUP_LOCAL_D
    }
}
