//! Training objectives: multi-scale pixel L1, global and local adversarial
//! terms, identity-preserving feature distance, anisotropic total variation,
//! and their weighted sum.
//!
//! All image losses take planar `C×H×W` data in `[-1, 1]`; batched variants
//! average over the leading axis.

use frontalize_tensor::graph::{avg_pool_adjoint, avg_pool_values, pooled_dims};
use frontalize_tensor::{Graph, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::image::Image;
use crate::networks::IdentityExtractor;
use crate::{Error, Result};

/// Number of pyramid levels in the pixel loss.
pub const PYRAMID_SCALES: usize = 3;

/// Probabilities are clamped to `[PROB_EPS, 1 − PROB_EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-7;

/// Trade-off weights λ1..λ5.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub pixel: f64,
    pub adv_global: f64,
    pub adv_local: f64,
    pub identity: f64,
    pub tv: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            pixel: 20.0,
            adv_global: 1.0,
            adv_local: 1.0,
            identity: 0.08,
            tv: 1e-4,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("pixel", self.pixel),
            ("adv_global", self.adv_global),
            ("adv_local", self.adv_local),
            ("identity", self.identity),
            ("tv", self.tv),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "loss weight {name} must be >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Unweighted generator-side loss values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub pixel: f64,
    pub adv1: f64,
    pub adv2: f64,
    pub id: f64,
    pub tv: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_pixel: f64,
    pub l_adv1: f64,
    pub l_adv2: f64,
    pub l_id: f64,
    pub l_tv: f64,
    pub total: f64,
}

/// `λ1·pixel + λ2·adv1 + λ3·adv2 + λ4·id + λ5·tv`, summed left to right.
pub fn weighted_total(parts: &LossParts, w: &LossWeights) -> f64 {
    let mut total = w.pixel * parts.pixel;
    total += w.adv_global * parts.adv1;
    total += w.adv_local * parts.adv2;
    total += w.identity * parts.id;
    total += w.tv * parts.tv;
    total
}

pub fn total_generator_loss(parts: &LossParts, weights: &LossWeights) -> Result<LossBreakdown> {
    for (name, v) in [
        ("l_pixel", parts.pixel),
        ("l_adv1", parts.adv1),
        ("l_adv2", parts.adv2),
        ("l_id", parts.id),
        ("l_tv", parts.tv),
    ] {
        if !v.is_finite() {
            return Err(Error::Loss(format!("{name} is not finite ({v})")));
        }
    }
    Ok(LossBreakdown {
        l_pixel: parts.pixel,
        l_adv1: parts.adv1,
        l_adv2: parts.adv2,
        l_id: parts.id,
        l_tv: parts.tv,
        total: weighted_total(parts, weights),
    })
}

/// Average-pool factors of the pyramid levels: 1, 2, 4.
fn scale_factor(level: usize) -> usize {
    1 << level
}

/// The image at full, half and quarter resolution (sides floored at 1).
pub fn pyramid(image: &Image) -> Result<Vec<Image>> {
    let (w, h, c) = image.dims();
    (0..PYRAMID_SCALES)
        .map(|level| {
            let k = scale_factor(level);
            let (oh, ow) = pooled_dims(h, w, k);
            Image::new(ow, oh, c, avg_pool_values(image.data(), c, h, w, k))
        })
        .collect()
}

fn check_same(a: &Image, b: &Image) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Loss(format!(
            "image dims differ: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Multi-scale L1 on one planar `c×h×w` pair, with its gradient w.r.t. `y_hat`.
pub fn pixel_value_grad(y_hat: &[f64], y: &[f64], c: usize, h: usize, w: usize) -> (f64, Vec<f64>) {
    let mut value = 0.0;
    let mut grad = vec![0.0; y_hat.len()];
    for level in 0..PYRAMID_SCALES {
        let k = scale_factor(level);
        let a = avg_pool_values(y_hat, c, h, w, k);
        let b = avg_pool_values(y, c, h, w, k);
        let n = a.len() as f64;
        let mut level_sum = 0.0;
        let mut up = Vec::with_capacity(a.len());
        for (p, q) in a.iter().zip(&b) {
            level_sum += (p - q).abs();
            up.push(sign(p - q) / (PYRAMID_SCALES as f64 * n));
        }
        value += level_sum / n;
        for (g, d) in grad.iter_mut().zip(avg_pool_adjoint(&up, c, h, w, k)) {
            *g += d;
        }
    }
    (value / PYRAMID_SCALES as f64, grad)
}

pub fn pixel_loss(y_hat: &Image, y: &Image) -> Result<f64> {
    pixel_loss_grad(y_hat, y).map(|(v, _)| v)
}

pub fn pixel_loss_grad(y_hat: &Image, y: &Image) -> Result<(f64, Vec<f64>)> {
    check_same(y_hat, y)?;
    let (w, h, c) = y_hat.dims();
    Ok(pixel_value_grad(y_hat.data(), y.data(), c, h, w))
}

/// Anisotropic, unnormalized total variation of one planar image, with gradient.
pub fn tv_value_grad(x: &[f64], c: usize, h: usize, w: usize) -> (f64, Vec<f64>) {
    let mut value = 0.0;
    let mut grad = vec![0.0; x.len()];
    for ch in 0..c {
        let base = ch * h * w;
        for row in 0..h {
            for col in 0..w {
                let i = base + row * w + col;
                if col + 1 < w {
                    let d = x[i + 1] - x[i];
                    value += d.abs();
                    grad[i + 1] += sign(d);
                    grad[i] -= sign(d);
                }
                if row + 1 < h {
                    let d = x[i + w] - x[i];
                    value += d.abs();
                    grad[i + w] += sign(d);
                    grad[i] -= sign(d);
                }
            }
        }
    }
    (value, grad)
}

pub fn tv_loss(y_hat: &Image) -> Result<f64> {
    tv_loss_grad(y_hat).map(|(v, _)| v)
}

pub fn tv_loss_grad(y_hat: &Image) -> Result<(f64, Vec<f64>)> {
    let (w, h, c) = y_hat.dims();
    if w < 2 || h < 2 {
        return Err(Error::Loss(format!(
            "total variation needs at least 2x2, got {w}x{h}"
        )));
    }
    Ok(tv_value_grad(y_hat.data(), c, h, w))
}

/// Which player an adversarial loss is evaluated for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// `−log D(real) − log(1 − D(fake))`.
    Discriminator,
    /// Non-saturating `−log D(fake)`.
    Generator,
}

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

pub fn adversarial_loss(d_real: f64, d_fake: f64, side: Side) -> f64 {
    let fake = clamp_prob(d_fake);
    match side {
        Side::Discriminator => -clamp_prob(d_real).ln() - (1.0 - fake).ln(),
        Side::Generator => -fake.ln(),
    }
}

/// `‖φ_f(Y) − φ_f(Ŷ)‖² + ‖φ_p(Y) − φ_p(Ŷ)‖_F²` for one pair.
pub fn identity_loss(y_hat: &Image, y: &Image, extractor: &dyn IdentityExtractor) -> Result<f64> {
    identity_loss_grad(y_hat, y, extractor).map(|(v, _)| v)
}

/// Identity loss and its gradient w.r.t. `y_hat` (planar layout).
pub fn identity_loss_grad(
    y_hat: &Image,
    y: &Image,
    extractor: &dyn IdentityExtractor,
) -> Result<(f64, Vec<f64>)> {
    check_same(y_hat, y)?;
    let mut g = Graph::new();
    let x = g.tracked_input(y_hat.to_tensor());
    let loss = identity_term(&mut g, x, &y.to_tensor(), extractor)?;
    let value = g.value(loss).item();
    let grads = g.backward(loss)?;
    let grad = grads
        .wrt(x)
        .map(|t| t.data().to_vec())
        .unwrap_or_else(|| vec![0.0; y_hat.data().len()]);
    Ok((value, grad))
}

// --- tape helpers used by the trainer -------------------------------------

/// Batch-mean multi-scale pixel loss between `y_hat` on the tape and a target batch.
pub fn pixel_term(g: &mut Graph, y_hat: Var, target: &Tensor) -> Result<Var> {
    let pred = g.value(y_hat);
    if pred.shape() != target.shape() {
        return Err(Error::Loss(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let (n, c, h, w) = pred.dims4()?;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for s in 0..n {
        let (v, gs) = pixel_value_grad(pred.sample(s), target.sample(s), c, h, w);
        value += v;
        grad.extend(gs.into_iter().map(|x| x / n as f64));
    }
    let grad = Tensor::new(pred.shape(), grad)?;
    Ok(g.scalar_fn(y_hat, value / n as f64, grad)?)
}

/// Batch-mean total variation of `y_hat`.
pub fn tv_term(g: &mut Graph, y_hat: Var) -> Result<Var> {
    let pred = g.value(y_hat);
    let (n, c, h, w) = pred.dims4()?;
    if w < 2 || h < 2 {
        return Err(Error::Loss(format!(
            "total variation needs at least 2x2, got {w}x{h}"
        )));
    }
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for s in 0..n {
        let (v, gs) = tv_value_grad(pred.sample(s), c, h, w);
        value += v;
        grad.extend(gs.into_iter().map(|x| x / n as f64));
    }
    let grad = Tensor::new(pred.shape(), grad)?;
    Ok(g.scalar_fn(y_hat, value / n as f64, grad)?)
}

/// Batch mean of `Σ (a − target)²` per sample.
fn squared_distance_term(g: &mut Graph, a: Var, target: &Tensor) -> Result<Var> {
    let pred = g.value(a);
    if pred.shape() != target.shape() {
        return Err(Error::Loss(format!(
            "feature shapes differ: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.shape()[0] as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (p, t) in pred.data().iter().zip(target.data()) {
        let d = p - t;
        value += d * d;
        grad.push(2.0 * d / n);
    }
    let grad = Tensor::new(pred.shape(), grad)?;
    Ok(g.scalar_fn(a, value / n, grad)?)
}

/// Batch-mean identity loss; the extractor's parameters enter as constants.
pub fn identity_term(
    g: &mut Graph,
    y_hat: Var,
    target: &Tensor,
    extractor: &dyn IdentityExtractor,
) -> Result<Var> {
    let reference = {
        let mut rg = Graph::new();
        let t = rg.constant(target.clone());
        let f = extractor.features(&mut rg, t)?;
        (rg.value(f.embedding).clone(), rg.value(f.pooled).clone())
    };
    let feats = extractor.features(g, y_hat)?;
    let fc = squared_distance_term(g, feats.embedding, &reference.0)?;
    let pool = squared_distance_term(g, feats.pooled, &reference.1)?;
    Ok(g.weighted_sum(&[(fc, 1.0), (pool, 1.0)])?)
}

/// Batch-mean binary cross-entropy of discriminator probabilities `[N, 1]`
/// against a constant label. Returns the term and the mean probability.
pub fn bce_term(g: &mut Graph, probs: Var, real: bool) -> Result<(Var, f64)> {
    let p = g.value(probs);
    let n = p.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(p.len());
    for &raw in p.data() {
        let q = clamp_prob(raw);
        let inside = raw > PROB_EPS && raw < 1.0 - PROB_EPS;
        if real {
            value -= q.ln();
            grad.push(if inside { -1.0 / (n * q) } else { 0.0 });
        } else {
            value -= (1.0 - q).ln();
            grad.push(if inside { 1.0 / (n * (1.0 - q)) } else { 0.0 });
        }
    }
    let mean = p.data().iter().sum::<f64>() / n;
    let grad = Tensor::new(p.shape(), grad)?;
    Ok((g.scalar_fn(probs, value / n, grad)?, mean))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: usize, h: usize, c: usize, data: Vec<f64>) -> Image {
        Image::new(w, h, c, data).unwrap()
    }

    #[test]
    fn pyramid_dims_and_values() {
        let big = Image::filled(128, 128, 3, 0.3).unwrap();
        let p = pyramid(&big).unwrap();
        let sides: Vec<_> = p.iter().map(|im| im.width()).collect();
        assert_eq!(sides, vec![128, 64, 32]);
        assert!(p
            .iter()
            .all(|im| im.data().iter().all(|&v| (v - 0.3).abs() < 1e-15)));

        let tiny = img(2, 2, 1, vec![0.0, 0.25, 0.5, 0.75]);
        let p = pyramid(&tiny).unwrap();
        assert_eq!(p[1].data(), &[0.375]);
        assert_eq!(p[2].dims(), (1, 1, 1));
    }

    #[test]
    fn pixel_loss_fixed_points() {
        let a = Image::filled(6, 5, 3, 1.0).unwrap();
        let b = Image::filled(6, 5, 3, 0.0).unwrap();
        assert_eq!(pixel_loss(&a, &a).unwrap(), 0.0);
        assert!((pixel_loss(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        assert!(pixel_loss(&a, &Image::filled(5, 5, 3, 0.0).unwrap()).is_err());
    }

    #[test]
    fn tv_fixture_and_errors() {
        // [[0,1],[2,3]] scaled into range: TV is linear in the scale
        let im = img(2, 2, 1, vec![0.0, 0.1, 0.2, 0.3]);
        assert!((tv_loss(&im).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(
            tv_loss(&Image::filled(3, 3, 3, -0.4).unwrap()).unwrap(),
            0.0
        );
        assert!(tv_loss(&Image::filled(1, 3, 1, 0.0).unwrap()).is_err());
    }

    #[test]
    fn adversarial_reference_values() {
        let d = adversarial_loss(0.5, 0.5, Side::Discriminator);
        assert!((d - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!((adversarial_loss(0.9, 0.5, Side::Generator) - 2f64.ln()).abs() < 1e-12);
        assert!(adversarial_loss(1.0, 0.0, Side::Discriminator) < 1e-6);
        assert!(adversarial_loss(0.0, 1.0, Side::Discriminator).is_finite());
        assert!(adversarial_loss(0.0, 0.0, Side::Generator).is_finite());
    }

    #[test]
    fn weighted_total_examples() {
        let w = LossWeights::default();
        let ones = LossParts {
            pixel: 1.0,
            adv1: 1.0,
            adv2: 1.0,
            id: 1.0,
            tv: 1.0,
        };
        let b = total_generator_loss(&ones, &w).unwrap();
        assert!((b.total - 22.0801).abs() < 1e-12);
        assert_eq!(
            total_generator_loss(&LossParts::default(), &w)
                .unwrap()
                .total,
            0.0
        );
        let proj = LossWeights {
            pixel: 1.0,
            adv_global: 0.0,
            adv_local: 0.0,
            identity: 0.0,
            tv: 0.0,
        };
        let parts = LossParts {
            pixel: 0.37,
            ..ones
        };
        assert_eq!(total_generator_loss(&parts, &proj).unwrap().total, 0.37);
        let bad = LossParts {
            id: f64::NAN,
            ..ones
        };
        let err = total_generator_loss(&bad, &w).unwrap_err();
        assert!(err.to_string().contains("l_id"));
    }

    #[test]
    fn weights_reject_negative() {
        let w = LossWeights {
            tv: -1.0,
            ..Default::default()
        };
        assert!(w.validate().is_err());
    }
}
