//! Generator, global and local discriminators, and identity feature extractors.
//!
//! Every network keeps its weights in a [`ParamSet`] and builds its forward
//! pass on a caller-supplied [`Graph`], so the trainer decides which
//! parameters are trainable in a given pass.

mod checkpoint;
mod discriminator;
mod extractor;
mod generator;

pub(crate) use checkpoint::hex as hex_digest;
pub use checkpoint::{
    Checkpoint, CheckpointHeader, TensorEntry, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use discriminator::{DiscriminatorConfig, GlobalDiscriminator, LocalDiscriminator};
pub use extractor::{ConvExtractor, Features, IdentityExtractor, PixelExtractor};
pub use generator::{Generator, GeneratorConfig};

use frontalize_tensor::{Bound, Graph, ParamSet, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Parameter group ids used when binding networks to a graph.
pub const GROUP_GENERATOR: u32 = 0;
pub const GROUP_GLOBAL_D: u32 = 1;
pub const GROUP_LOCAL_D: u32 = 2;

/// Behaviour shared by all trainable networks.
pub trait Network {
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    fn arch_id(&self) -> String;
    fn group(&self) -> u32;

    /// Places the parameters on `g`, trainable when `trainable` is set.
    fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        self.params().bind(g, trainable.then(|| self.group()))
    }

    /// Swaps in a parameter set with identical names and shapes.
    fn load_params(&mut self, params: ParamSet) -> Result<()> {
        check_compatible(self.params(), &params, &self.arch_id())?;
        *self.params_mut() = params;
        Ok(())
    }
}

pub(crate) fn check_compatible(have: &ParamSet, got: &ParamSet, arch: &str) -> Result<()> {
    if have.names() != got.names() {
        return Err(Error::Network(format!(
            "parameter names do not match architecture {arch}"
        )));
    }
    for ((name, a), b) in have.names().iter().zip(have.tensors()).zip(got.tensors()) {
        if a.shape() != b.shape() {
            return Err(Error::Network(format!(
                "{arch}: parameter {name} has shape {:?}, expected {:?}",
                b.shape(),
                a.shape()
            )));
        }
    }
    Ok(())
}

/// Independent generator per network derived from one seed.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn check_input(t: &Tensor, channels: usize, size: usize, what: &str) -> Result<()> {
    let (_, c, h, w) = t.dims4()?;
    if c != channels || h != size || w != size {
        return Err(Error::Network(format!(
            "{what} expects [N, {channels}, {size}, {size}], got {:?}",
            t.shape()
        )));
    }
    Ok(())
}
