use frontalize_tensor::nn::Conv2d;
use frontalize_tensor::{Graph, ParamSet, Tensor, Var};

use super::stream_rng;
use crate::{Error, Result};

const SLOPE: f64 = 0.2;

/// Outputs of an identity extractor on a batch.
#[derive(Clone, Copy, Debug)]
pub struct Features {
    /// `φ_f`: one embedding row per sample, `[N, D]`.
    pub embedding: Var,
    /// `φ_p`: pooled spatial features, `[N, C, h, w]`.
    pub pooled: Var,
}

/// A frozen feature network. Implementations bind their weights as graph
/// constants, so nothing downstream can ever update them.
pub trait IdentityExtractor: Send + Sync {
    fn id(&self) -> String;

    fn embedding_dim(&self) -> usize;

    fn features(&self, g: &mut Graph, x: Var) -> Result<Features>;

    /// Embeddings `[N, D]` for a batch of images.
    fn embed(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let f = self.features(&mut g, xv)?;
        Ok(g.value(f.embedding).clone())
    }
}

/// Randomly initialized convolutional encoder that is never trained.
pub struct ConvExtractor {
    seed: u64,
    params: ParamSet,
    convs: Vec<Conv2d>,
}

impl ConvExtractor {
    pub const WIDTHS: [usize; 3] = [16, 32, 64];
    /// The embedding averages the last feature map over a `GRID × GRID` layout.
    pub const GRID: usize = 2;
    const STREAM: u64 = 0xE7;

    pub fn new(seed: u64, channels: usize) -> Self {
        let mut rng = stream_rng(seed, Self::STREAM);
        let mut params = ParamSet::new();
        let mut cin = channels;
        let convs = Self::WIDTHS
            .iter()
            .enumerate()
            .map(|(i, &cout)| {
                let stride = if i == 0 { 1 } else { 2 };
                let conv = Conv2d::same3(
                    &mut params,
                    &mut rng,
                    &format!("conv{i}"),
                    cin,
                    cout,
                    stride,
                );
                cin = cout;
                conv
            })
            .collect();
        Self {
            seed,
            params,
            convs,
        }
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }
}

impl IdentityExtractor for ConvExtractor {
    fn id(&self) -> String {
        format!("toy-conv-{}", self.seed)
    }

    fn embedding_dim(&self) -> usize {
        Self::GRID * Self::GRID * Self::WIDTHS[Self::WIDTHS.len() - 1]
    }

    fn features(&self, g: &mut Graph, x: Var) -> Result<Features> {
        let (_, c, _, _) = g.value(x).dims4()?;
        if c != self.convs[0].in_channels {
            return Err(Error::Network(format!(
                "extractor expects {} channels, got {c}",
                self.convs[0].in_channels
            )));
        }
        let p = self.params.bind(g, None);
        let mut h = x;
        for conv in &self.convs {
            let y = conv.forward(g, &p, h)?;
            h = g.leaky_relu(y, SLOPE);
        }
        let pooled = g.avg_pool(h, 2)?;
        let (_, _, fh, fw) = g.value(h).dims4()?;
        if fh % Self::GRID != 0 || fw % Self::GRID != 0 {
            return Err(Error::Network(format!(
                "extractor feature map {fh}x{fw} does not split into a {0}x{0} grid",
                Self::GRID
            )));
        }
        let grid = g.avg_pool(h, fh / Self::GRID)?;
        let embedding = g.flatten(grid)?;
        Ok(Features { embedding, pooled })
    }
}

/// Pixels as features: `φ_p` is the image itself and `φ_f` its per-channel mean.
#[derive(Clone, Copy, Debug)]
pub struct PixelExtractor {
    pub channels: usize,
}

impl IdentityExtractor for PixelExtractor {
    fn id(&self) -> String {
        "pixels".into()
    }

    fn embedding_dim(&self) -> usize {
        self.channels
    }

    fn features(&self, g: &mut Graph, x: Var) -> Result<Features> {
        let embedding = g.global_avg_pool(x)?;
        Ok(Features {
            embedding,
            pooled: x,
        })
    }
}
