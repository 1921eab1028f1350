use std::time::Instant;

use frontalize_tensor::{Adam, Graph, Tensor, Var};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::TrainConfig;
use super::data::Batch;
use crate::losses::{
    bce_term, identity_term, pixel_term, total_generator_loss, tv_term, LossBreakdown, LossParts,
};
use crate::networks::{ConvExtractor, Generator, GlobalDiscriminator, LocalDiscriminator, Network};
use crate::toy::toy_identity_extractor;
use crate::{Error, Result};

/// Generator, both discriminators and the frozen identity extractor.
pub struct Models {
    pub generator: Generator,
    pub global_d: GlobalDiscriminator,
    pub local_d: LocalDiscriminator,
    pub extractor: ConvExtractor,
}

impl Models {
    pub fn init(config: &TrainConfig) -> Result<Self> {
        Ok(Self {
            generator: Generator::new(config.generator_config(), config.seed)?,
            global_d: GlobalDiscriminator::new(config.discriminator_config(), config.seed)?,
            local_d: LocalDiscriminator::new(config.discriminator_config(), config.seed)?,
            extractor: toy_identity_extractor(config.extractor_seed),
        })
    }

    pub fn arch_id(&self) -> String {
        format!(
            "{}+{}+{}",
            self.generator.arch_id(),
            self.global_d.arch_id(),
            self.local_d.arch_id()
        )
    }
}

/// One Adam state per trainable network.
pub struct Optimizers {
    pub generator: Adam,
    pub global_d: Adam,
    pub local_d: Adam,
}

impl Optimizers {
    pub fn new(models: &Models, config: &TrainConfig) -> Self {
        let adam = |p| Adam::new(p, config.beta1, config.beta2, config.adam_eps);
        Self {
            generator: adam(models.generator.params()),
            global_d: adam(models.global_d.params()),
            local_d: adam(models.local_d.params()),
        }
    }
}

/// One line of the trace log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub step: u64,
    pub epoch: u64,
    pub losses: LossBreakdown,
    pub d1_loss: f64,
    pub d2_loss: f64,
    pub d1_real: f64,
    pub d1_fake: f64,
    pub d2_real: f64,
    pub d2_fake: f64,
    pub lr: f64,
    /// Digests of the masks applied to real views, synthesized views in the
    /// D2 update, and synthesized views in the generator update.
    pub mask_digests: [String; 3],
    pub wall_time_s: f64,
}

impl StepTrace {
    /// The trace without its timing field, for reproducibility comparisons.
    pub fn without_timing(&self) -> StepTrace {
        StepTrace {
            wall_time_s: 0.0,
            ..self.clone()
        }
    }
}

fn digest(masks: &[Tensor; 3]) -> String {
    let mut h = Sha256::new();
    for m in masks {
        for v in m.data() {
            h.update(v.to_le_bytes());
        }
    }
    crate::networks::hex_digest(&h.finalize())
}

fn check_finite(name: &str, value: f64, step: u64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            name: name.into(),
            step,
        })
    }
}

/// The generator forward pass, kept on its graph for the generator update.
pub struct GeneratorPass {
    graph: Graph,
    y_hat: Var,
}

impl GeneratorPass {
    pub fn output(&self) -> &Tensor {
        self.graph.value(self.y_hat)
    }
}

/// Outcome of one discriminator update.
#[derive(Clone, Copy, Debug)]
pub struct DiscriminatorUpdate {
    pub loss: f64,
    pub mean_real: f64,
    pub mean_fake: f64,
}

/// Digests of the masks the local discriminator update applied.
#[derive(Clone, Debug)]
pub struct LocalUpdate {
    pub update: DiscriminatorUpdate,
    pub real_masks: String,
    pub fake_masks: String,
}

/// Stage 1: `Ŷ = G(X)` with the generator trainable.
pub fn generate(models: &Models, batch: &Batch) -> Result<GeneratorPass> {
    let mut graph = Graph::new();
    let p = models.generator.bind(&mut graph, true);
    let x = graph.constant(batch.x.clone());
    let y_hat = models.generator.forward(&mut graph, &p, x)?;
    Ok(GeneratorPass { graph, y_hat })
}

/// Real/fake discriminator objective on a fresh graph; returns the summed loss
/// node and the two mean probabilities.
fn d_objective(g: &mut Graph, real: Var, fake: Var) -> Result<(Var, f64, f64)> {
    let (lr, mr) = bce_term(g, real, true)?;
    let (lf, mf) = bce_term(g, fake, false)?;
    Ok((g.weighted_sum(&[(lr, 1.0), (lf, 1.0)])?, mr, mf))
}

/// Stage 2: one D1 step on `Y` against the detached `Ŷ`.
pub fn update_global_d(
    models: &mut Models,
    opt: &mut Adam,
    batch: &Batch,
    y_hat: &Tensor,
    lr: f64,
    step: u64,
) -> Result<DiscriminatorUpdate> {
    let d = &models.global_d;
    let mut g = Graph::new();
    let p = d.bind(&mut g, true);
    let real = g.constant(batch.y.clone());
    let fake = g.constant(y_hat.clone());
    let pr = d.forward(&mut g, &p, real)?;
    let pf = d.forward(&mut g, &p, fake)?;
    let (loss, mean_real, mean_fake) = d_objective(&mut g, pr, pf)?;
    let value = g.value(loss).item();
    check_finite("d1_loss", value, step)?;
    let grads = g.backward(loss)?;
    let pg = g.param_grads(&grads, d.group(), d.params().len());
    opt.step(models.global_d.params_mut(), &pg, lr)?;
    Ok(DiscriminatorUpdate {
        loss: value,
        mean_real,
        mean_fake,
    })
}

/// Hair, skin and face views of `image`, plus a digest of the masks applied.
fn views(g: &mut Graph, image: Var, masks: &[Tensor; 3]) -> Result<([Var; 3], String)> {
    let vars = [
        g.mul_mask(image, masks[0].clone())?,
        g.mul_mask(image, masks[1].clone())?,
        g.mul_mask(image, masks[2].clone())?,
    ];
    Ok((vars, digest(masks)))
}

/// Stage 3: one D2 step on the masked views of `Y` and the detached `Ŷ`.
pub fn update_local_d(
    models: &mut Models,
    opt: &mut Adam,
    batch: &Batch,
    y_hat: &Tensor,
    lr: f64,
    step: u64,
) -> Result<LocalUpdate> {
    let d = &models.local_d;
    let mut g = Graph::new();
    let p = d.bind(&mut g, true);
    let real = g.constant(batch.y.clone());
    let fake = g.constant(y_hat.clone());
    let (real_views, real_masks) = views(&mut g, real, &batch.masks)?;
    let (fake_views, fake_masks) = views(&mut g, fake, &batch.masks)?;
    let pr = d.forward(&mut g, &p, real_views)?;
    let pf = d.forward(&mut g, &p, fake_views)?;
    let (loss, mean_real, mean_fake) = d_objective(&mut g, pr, pf)?;
    let value = g.value(loss).item();
    check_finite("d2_loss", value, step)?;
    let grads = g.backward(loss)?;
    let pg = g.param_grads(&grads, d.group(), d.params().len());
    opt.step(models.local_d.params_mut(), &pg, lr)?;
    Ok(LocalUpdate {
        update: DiscriminatorUpdate {
            loss: value,
            mean_real,
            mean_fake,
        },
        real_masks,
        fake_masks,
    })
}

/// Stage 4: one generator step on the weighted total, with both
/// discriminators (already updated) and the extractor bound as constants.
pub fn update_generator(
    models: &mut Models,
    opt: &mut Adam,
    pass: GeneratorPass,
    batch: &Batch,
    config: &TrainConfig,
    lr: f64,
    step: u64,
) -> Result<(LossBreakdown, String)> {
    let GeneratorPass { mut graph, y_hat } = pass;
    let g = &mut graph;
    let p1 = models.global_d.bind(g, false);
    let p2 = models.local_d.bind(g, false);
    let prob1 = models.global_d.forward(g, &p1, y_hat)?;
    let (adv1, _) = bce_term(g, prob1, true)?;
    let (fake_views, mask_digest) = views(g, y_hat, &batch.masks)?;
    let prob2 = models.local_d.forward(g, &p2, fake_views)?;
    let (adv2, _) = bce_term(g, prob2, true)?;
    let pixel = pixel_term(g, y_hat, &batch.y)?;
    let id = identity_term(g, y_hat, &batch.y, &models.extractor)?;
    let tv = tv_term(g, y_hat)?;

    let parts = LossParts {
        pixel: g.value(pixel).item(),
        adv1: g.value(adv1).item(),
        adv2: g.value(adv2).item(),
        id: g.value(id).item(),
        tv: g.value(tv).item(),
    };
    for (name, v) in [
        ("l_pixel", parts.pixel),
        ("l_adv1", parts.adv1),
        ("l_adv2", parts.adv2),
        ("l_id", parts.id),
        ("l_tv", parts.tv),
    ] {
        check_finite(name, v, step)?;
    }
    let breakdown = total_generator_loss(&parts, &config.weights)?;
    let w = &config.weights;
    let total = g.weighted_sum(&[
        (pixel, w.pixel),
        (adv1, w.adv_global),
        (adv2, w.adv_local),
        (id, w.identity),
        (tv, w.tv),
    ])?;
    if g.value(total).item().to_bits() != breakdown.total.to_bits() {
        return Err(Error::Trainer(format!(
            "step {step}: weighted total disagrees with its parts"
        )));
    }
    check_finite("total", breakdown.total, step)?;
    let grads = g.backward(total)?;
    let gen = &models.generator;
    let pg = g.param_grads(&grads, gen.group(), gen.params().len());
    opt.step(models.generator.params_mut(), &pg, lr)?;
    Ok((breakdown, mask_digest))
}

/// One alternating step: generate, update D1, update D2, update G.
pub fn train_step(
    models: &mut Models,
    opt: &mut Optimizers,
    batch: &Batch,
    config: &TrainConfig,
    lr: f64,
    step: u64,
    epoch: u64,
) -> Result<StepTrace> {
    let start = Instant::now();
    let pass = generate(models, batch)?;
    let y_hat = pass.output().clone();
    let d1 = update_global_d(models, &mut opt.global_d, batch, &y_hat, lr, step)?;
    let d2 = update_local_d(models, &mut opt.local_d, batch, &y_hat, lr, step)?;
    let (losses, g_masks) =
        update_generator(models, &mut opt.generator, pass, batch, config, lr, step)?;
    Ok(StepTrace {
        step,
        epoch,
        losses,
        d1_loss: d1.loss,
        d2_loss: d2.update.loss,
        d1_real: d1.mean_real,
        d1_fake: d1.mean_fake,
        d2_real: d2.update.mean_real,
        d2_fake: d2.update.mean_fake,
        lr,
        mask_digests: [d2.real_masks, d2.fake_masks, g_masks],
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
