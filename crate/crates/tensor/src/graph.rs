//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends a node holding its forward value. [`Graph::backward`]
//! walks the tape in reverse and only visits nodes that depend on a trainable
//! parameter or a tracked input.

use crate::conv::{self, ConvGeometry};
use crate::{Result, Tensor, TensorError};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Identifies a trainable parameter: `group` names the model, `index` the tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamKey {
    pub group: u32,
    pub index: usize,
}

enum Op {
    Leaf,
    Param(ParamKey),
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    },
    LeakyRelu {
        input: Var,
        slope: f64,
    },
    Tanh(Var),
    ClippedAtanh {
        input: Var,
        limit: f64,
    },
    Sigmoid(Var),
    InstanceNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Upsample2x(Var),
    Concat(Var, Var),
    Add(Var, Var),
    MulMask {
        input: Var,
        mask: Tensor,
    },
    AvgPool {
        input: Var,
        kernel: usize,
    },
    GlobalAvgPool(Var),
    Flatten(Var),
    ScalarFn {
        input: Var,
        grad: Tensor,
    },
    WeightedSum(Vec<(Var, f64)>),
}

struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, var: Var) -> Option<&Tensor> {
        self.grads[var.0].as_ref()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn is_tracked(&self, var: Var) -> bool {
        self.nodes[var.0].tracked
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    /// A value that never receives gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf whose gradient is reported by [`Gradients::wrt`].
    pub fn tracked_input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn param(&mut self, value: Tensor, key: ParamKey) -> Var {
        self.push(value, Op::Param(key), true)
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let (n, c, h, w) = self.value(input).dims4()?;
        let (o, ci, k, k2) = self.value(weight).dims4()?;
        if ci != c || k != k2 {
            return Err(TensorError::Shape(format!(
                "conv weight {:?} does not fit input {:?}",
                self.value(weight).shape(),
                self.value(input).shape()
            )));
        }
        if h + 2 * padding < k || w + 2 * padding < k || stride == 0 {
            return Err(TensorError::Shape(format!(
                "kernel {k} with padding {padding} does not fit {h}x{w}"
            )));
        }
        let geo = ConvGeometry {
            in_channels: c,
            out_channels: o,
            kernel: k,
            stride,
            padding,
            in_h: h,
            in_w: w,
        };
        let out = conv::forward(
            &geo,
            n,
            self.value(input).data(),
            self.value(weight).data(),
            bias.map(|b| self.value(b).data()),
        );
        let value = Tensor::new(&[n, o, geo.out_h(), geo.out_w()], out)?;
        let tracked = self.is_tracked(input)
            || self.is_tracked(weight)
            || bias.is_some_and(|b| self.is_tracked(b));
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                padding,
            },
            tracked,
        ))
    }

    pub fn leaky_relu(&mut self, input: Var, slope: f64) -> Var {
        let value = self
            .value(input)
            .map(|v| if v > 0.0 { v } else { slope * v });
        let tracked = self.is_tracked(input);
        self.push(value, Op::LeakyRelu { input, slope }, tracked)
    }

    pub fn relu(&mut self, input: Var) -> Var {
        self.leaky_relu(input, 0.0)
    }

    pub fn tanh(&mut self, input: Var) -> Var {
        let value = self.value(input).map(f64::tanh);
        let tracked = self.is_tracked(input);
        self.push(value, Op::Tanh(input), tracked)
    }

    /// `atanh(clamp(x, -limit, limit))` for `0 < limit < 1`; zero gradient
    /// where the clamp is active.
    pub fn clipped_atanh(&mut self, input: Var, limit: f64) -> Var {
        assert!(limit > 0.0 && limit < 1.0, "limit must lie in (0, 1)");
        let value = self.value(input).map(|v| v.clamp(-limit, limit).atanh());
        let tracked = self.is_tracked(input);
        self.push(value, Op::ClippedAtanh { input, limit }, tracked)
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        let value = self.value(input).map(sigmoid);
        let tracked = self.is_tracked(input);
        self.push(value, Op::Sigmoid(input), tracked)
    }

    /// Per-sample, per-channel normalization over the spatial axes with an affine map.
    pub fn instance_norm(&mut self, input: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (n, c, h, w) = self.value(input).dims4()?;
        if self.value(gamma).len() != c || self.value(beta).len() != c {
            return Err(TensorError::Shape(format!(
                "instance norm affine params must have {c} entries"
            )));
        }
        let hw = h * w;
        let x = self.value(input).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut normalized = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; n * c];
        let mut out = vec![0.0; x.len()];
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * hw;
                let plane = &x[base..base + hw];
                let mean = plane.iter().sum::<f64>() / hw as f64;
                let var = plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / hw as f64;
                let is = 1.0 / (var + eps).sqrt();
                inv_std[s * c + ch] = is;
                for i in 0..hw {
                    let xh = (plane[i] - mean) * is;
                    normalized[base + i] = xh;
                    out[base + i] = g[ch] * xh + b[ch];
                }
            }
        }
        let value = Tensor::new(&[n, c, h, w], out)?;
        let tracked = self.is_tracked(input) || self.is_tracked(gamma) || self.is_tracked(beta);
        Ok(self.push(
            value,
            Op::InstanceNorm {
                input,
                gamma,
                beta,
                normalized,
                inv_std,
            },
            tracked,
        ))
    }

    /// Nearest-neighbour 2× upsampling.
    pub fn upsample2x(&mut self, input: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(input).dims4()?;
        let x = self.value(input).data();
        let (oh, ow) = (2 * h, 2 * w);
        let mut out = vec![0.0; n * c * oh * ow];
        for p in 0..n * c {
            let src = &x[p * h * w..(p + 1) * h * w];
            let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
            for y in 0..oh {
                for xx in 0..ow {
                    dst[y * ow + xx] = src[(y / 2) * w + xx / 2];
                }
            }
        }
        let value = Tensor::new(&[n, c, oh, ow], out)?;
        let tracked = self.is_tracked(input);
        Ok(self.push(value, Op::Upsample2x(input), tracked))
    }

    /// Concatenates along the channel axis.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, ca, h, w) = self.value(a).dims4()?;
        let (nb, cb, hb, wb) = self.value(b).dims4()?;
        if (n, h, w) != (nb, hb, wb) {
            return Err(TensorError::Shape(format!(
                "cannot concat {:?} and {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let (la, lb) = (ca * h * w, cb * h * w);
        let mut out = Vec::with_capacity(n * (la + lb));
        for s in 0..n {
            out.extend_from_slice(&self.value(a).data()[s * la..(s + 1) * la]);
            out.extend_from_slice(&self.value(b).data()[s * lb..(s + 1) * lb]);
        }
        let value = Tensor::new(&[n, ca + cb, h, w], out)?;
        let tracked = self.is_tracked(a) || self.is_tracked(b);
        Ok(self.push(value, Op::Concat(a, b), tracked))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(TensorError::Shape(format!(
                "cannot add {:?} and {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        let tracked = self.is_tracked(a) || self.is_tracked(b);
        Ok(self.push(value, Op::Add(a, b), tracked))
    }

    /// Hadamard product with a constant `[N, 1, H, W]` mask broadcast over channels.
    pub fn mul_mask(&mut self, input: Var, mask: Tensor) -> Result<Var> {
        let (n, c, h, w) = self.value(input).dims4()?;
        if mask.dims4()? != (n, 1, h, w) {
            return Err(TensorError::Shape(format!(
                "mask {:?} does not broadcast over {:?}",
                mask.shape(),
                self.value(input).shape()
            )));
        }
        let hw = h * w;
        let x = self.value(input).data();
        let m = mask.data();
        let mut out = vec![0.0; x.len()];
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * hw;
                for i in 0..hw {
                    out[base + i] = x[base + i] * m[s * hw + i];
                }
            }
        }
        let value = Tensor::new(&[n, c, h, w], out)?;
        let tracked = self.is_tracked(input);
        Ok(self.push(value, Op::MulMask { input, mask }, tracked))
    }

    /// Non-overlapping average pooling with window and stride `kernel`.
    /// Output sides are `max(1, side / kernel)`; a side shorter than the window
    /// pools over whatever is there.
    pub fn avg_pool(&mut self, input: Var, kernel: usize) -> Result<Var> {
        let t = self.value(input);
        let (n, c, h, w) = t.dims4()?;
        let out = avg_pool_values(t.data(), n * c, h, w, kernel);
        let (oh, ow) = pooled_dims(h, w, kernel);
        let value = Tensor::new(&[n, c, oh, ow], out)?;
        let tracked = self.is_tracked(input);
        Ok(self.push(value, Op::AvgPool { input, kernel }, tracked))
    }

    /// Mean over the spatial axes, producing `[N, C]`.
    pub fn global_avg_pool(&mut self, input: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(input).dims4()?;
        let hw = (h * w) as f64;
        let out = self
            .value(input)
            .data()
            .chunks(h * w)
            .map(|p| p.iter().sum::<f64>() / hw)
            .collect();
        let value = Tensor::new(&[n, c], out)?;
        let tracked = self.is_tracked(input);
        Ok(self.push(value, Op::GlobalAvgPool(input), tracked))
    }

    /// `[N, …]` to `[N, rest]`, keeping the row-major order.
    pub fn flatten(&mut self, input: Var) -> Result<Var> {
        let t = self.value(input);
        let n = *t
            .shape()
            .first()
            .ok_or_else(|| TensorError::Shape("cannot flatten a rank-0 tensor".into()))?;
        let rest = t.len().checked_div(n).unwrap_or(0);
        let value = Tensor::new(&[n, rest], t.data().to_vec())?;
        let tracked = self.is_tracked(input);
        Ok(self.push(value, Op::Flatten(input), tracked))
    }

    /// A scalar computed outside the tape whose gradient w.r.t. `input` is
    /// already known.
    pub fn scalar_fn(&mut self, input: Var, value: f64, grad: Tensor) -> Result<Var> {
        if grad.shape() != self.value(input).shape() {
            return Err(TensorError::Shape(format!(
                "gradient {:?} does not match input {:?}",
                grad.shape(),
                self.value(input).shape()
            )));
        }
        let tracked = self.is_tracked(input);
        Ok(self.push(Tensor::scalar(value), Op::ScalarFn { input, grad }, tracked))
    }

    /// `Σ w_k · s_k` over scalar nodes, accumulated left to right.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let mut total = 0.0;
        for &(v, w) in terms {
            if self.value(v).len() != 1 {
                return Err(TensorError::Shape("weighted_sum takes scalars".into()));
            }
            total += w * self.value(v).item();
        }
        let tracked = terms.iter().any(|&(v, _)| self.is_tracked(v));
        Ok(self.push(
            Tensor::scalar(total),
            Op::WeightedSum(terms.to_vec()),
            tracked,
        ))
    }

    /// Backpropagates from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(TensorError::Shape(format!(
                "backward needs a scalar, got {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.tracked {
                continue;
            }
            let Some(up) = grads[i].take() else { continue };
            self.propagate(i, &up, &mut grads)?;
            grads[i] = Some(up);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], var: Var, g: Tensor) {
        if !self.nodes[var.0].tracked {
            return;
        }
        match &mut grads[var.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, i: usize, up: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                padding,
            } => {
                let x = self.value(*input);
                let wt = self.value(*weight);
                let (n, c, h, w) = x.dims4()?;
                let (o, _, k, _) = wt.dims4()?;
                let geo = ConvGeometry {
                    in_channels: c,
                    out_channels: o,
                    kernel: k,
                    stride: *stride,
                    padding: *padding,
                    in_h: h,
                    in_w: w,
                };
                let g = conv::backward(
                    &geo,
                    n,
                    x.data(),
                    wt.data(),
                    up.data(),
                    self.is_tracked(*input),
                    self.is_tracked(*weight),
                    bias.is_some_and(|b| self.is_tracked(b)),
                );
                if let Some(gi) = g.input {
                    self.accumulate(grads, *input, Tensor::new(x.shape(), gi)?);
                }
                if let Some(gw) = g.weight {
                    self.accumulate(grads, *weight, Tensor::new(wt.shape(), gw)?);
                }
                if let (Some(b), Some(gb)) = (bias, g.bias) {
                    self.accumulate(grads, *b, Tensor::new(&[o], gb)?);
                }
            }
            Op::LeakyRelu { input, slope } => {
                let x = self.value(*input).data();
                let data = x
                    .iter()
                    .zip(up.data())
                    .map(|(&v, &g)| if v > 0.0 { g } else { slope * g })
                    .collect();
                self.accumulate(grads, *input, Tensor::new(up.shape(), data)?);
            }
            Op::Tanh(input) => {
                let data = node
                    .value
                    .data()
                    .iter()
                    .zip(up.data())
                    .map(|(&y, &g)| g * (1.0 - y * y))
                    .collect();
                self.accumulate(grads, *input, Tensor::new(up.shape(), data)?);
            }
            Op::ClippedAtanh { input, limit } => {
                let data = self
                    .value(*input)
                    .data()
                    .iter()
                    .zip(up.data())
                    .map(|(&x, &g)| {
                        if x.abs() < *limit {
                            g / (1.0 - x * x)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                self.accumulate(grads, *input, Tensor::new(up.shape(), data)?);
            }
            Op::Sigmoid(input) => {
                let data = node
                    .value
                    .data()
                    .iter()
                    .zip(up.data())
                    .map(|(&y, &g)| g * y * (1.0 - y))
                    .collect();
                self.accumulate(grads, *input, Tensor::new(up.shape(), data)?);
            }
            Op::InstanceNorm {
                input,
                gamma,
                beta,
                normalized,
                inv_std,
            } => {
                let (n, c, h, w) = node.value.dims4()?;
                let hw = h * w;
                let gm = self.value(*gamma).data();
                let mut g_gamma = vec![0.0; c];
                let mut g_beta = vec![0.0; c];
                let mut g_in = vec![0.0; n * c * hw];
                for s in 0..n {
                    for ch in 0..c {
                        let base = (s * c + ch) * hw;
                        let dy = &up.data()[base..base + hw];
                        let xh = &normalized[base..base + hw];
                        let sum_dy: f64 = dy.iter().sum();
                        let sum_dy_xh: f64 = dy.iter().zip(xh).map(|(a, b)| a * b).sum();
                        g_beta[ch] += sum_dy;
                        g_gamma[ch] += sum_dy_xh;
                        let scale = gm[ch] * inv_std[s * c + ch] / hw as f64;
                        for j in 0..hw {
                            g_in[base + j] =
                                scale * (hw as f64 * dy[j] - sum_dy - xh[j] * sum_dy_xh);
                        }
                    }
                }
                self.accumulate(grads, *input, Tensor::new(&[n, c, h, w], g_in)?);
                self.accumulate(
                    grads,
                    *gamma,
                    Tensor::new(self.value(*gamma).shape(), g_gamma)?,
                );
                self.accumulate(
                    grads,
                    *beta,
                    Tensor::new(self.value(*beta).shape(), g_beta)?,
                );
            }
            Op::Upsample2x(input) => {
                let (n, c, h, w) = self.value(*input).dims4()?;
                let (oh, ow) = (2 * h, 2 * w);
                let mut g = vec![0.0; n * c * h * w];
                for p in 0..n * c {
                    let src = &up.data()[p * oh * ow..(p + 1) * oh * ow];
                    let dst = &mut g[p * h * w..(p + 1) * h * w];
                    for y in 0..oh {
                        for x in 0..ow {
                            dst[(y / 2) * w + x / 2] += src[y * ow + x];
                        }
                    }
                }
                self.accumulate(grads, *input, Tensor::new(&[n, c, h, w], g)?);
            }
            Op::Concat(a, b) => {
                let (n, ca, h, w) = self.value(*a).dims4()?;
                let (_, cb, _, _) = self.value(*b).dims4()?;
                let (la, lb) = (ca * h * w, cb * h * w);
                let mut ga = Vec::with_capacity(n * la);
                let mut gb = Vec::with_capacity(n * lb);
                for s in 0..n {
                    let chunk = &up.data()[s * (la + lb)..(s + 1) * (la + lb)];
                    ga.extend_from_slice(&chunk[..la]);
                    gb.extend_from_slice(&chunk[la..]);
                }
                self.accumulate(grads, *a, Tensor::new(&[n, ca, h, w], ga)?);
                self.accumulate(grads, *b, Tensor::new(&[n, cb, h, w], gb)?);
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, up.clone());
                self.accumulate(grads, *b, up.clone());
            }
            Op::MulMask { input, mask } => {
                let (n, c, h, w) = up.dims4()?;
                let hw = h * w;
                let m = mask.data();
                let mut g = vec![0.0; up.len()];
                for s in 0..n {
                    for ch in 0..c {
                        let base = (s * c + ch) * hw;
                        for j in 0..hw {
                            g[base + j] = up.data()[base + j] * m[s * hw + j];
                        }
                    }
                }
                self.accumulate(grads, *input, Tensor::new(up.shape(), g)?);
            }
            Op::AvgPool { input, kernel } => {
                let (n, c, h, w) = self.value(*input).dims4()?;
                let g = avg_pool_adjoint(up.data(), n * c, h, w, *kernel);
                self.accumulate(grads, *input, Tensor::new(&[n, c, h, w], g)?);
            }
            Op::GlobalAvgPool(input) => {
                let (n, c, h, w) = self.value(*input).dims4()?;
                let hw = h * w;
                let mut g = vec![0.0; n * c * hw];
                for (p, &u) in up.data().iter().enumerate() {
                    g[p * hw..(p + 1) * hw].fill(u / hw as f64);
                }
                self.accumulate(grads, *input, Tensor::new(&[n, c, h, w], g)?);
            }
            Op::Flatten(input) => {
                let shape = self.value(*input).shape().to_vec();
                self.accumulate(grads, *input, Tensor::new(&shape, up.data().to_vec())?);
            }
            Op::ScalarFn { input, grad } => {
                let u = up.item();
                self.accumulate(grads, *input, grad.map(|g| g * u));
            }
            Op::WeightedSum(terms) => {
                let u = up.item();
                for &(v, w) in terms {
                    self.accumulate(grads, v, Tensor::scalar(w * u));
                }
            }
        }
        Ok(())
    }

    /// Sums the gradients of every node bound to `group`, one slot per parameter index.
    pub fn param_grads(&self, grads: &Gradients, group: u32, count: usize) -> Vec<Option<Tensor>> {
        let mut out: Vec<Option<Tensor>> = vec![None; count];
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(key) = node.op {
                if key.group != group {
                    continue;
                }
                if let Some(g) = &grads.grads[i] {
                    match &mut out[key.index] {
                        Some(acc) => acc.add_assign(g),
                        slot @ None => *slot = Some(g.clone()),
                    }
                }
            }
        }
        out
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn pooled_dims(h: usize, w: usize, kernel: usize) -> (usize, usize) {
    ((h / kernel).max(1), (w / kernel).max(1))
}

fn pool_window(out_index: usize, side: usize, kernel: usize) -> std::ops::Range<usize> {
    let start = out_index * kernel;
    start..(start + kernel).min(side)
}

/// Average pooling over `planes` contiguous `h×w` planes.
pub fn avg_pool_values(x: &[f64], planes: usize, h: usize, w: usize, kernel: usize) -> Vec<f64> {
    let (oh, ow) = pooled_dims(h, w, kernel);
    let mut out = vec![0.0; planes * oh * ow];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        for oy in 0..oh {
            let rows = pool_window(oy, h, kernel);
            for ox in 0..ow {
                let cols = pool_window(ox, w, kernel);
                let count = (rows.len() * cols.len()) as f64;
                let mut acc = 0.0;
                for y in rows.clone() {
                    for xx in cols.clone() {
                        acc += src[y * w + xx];
                    }
                }
                out[(p * oh + oy) * ow + ox] = acc / count;
            }
        }
    }
    out
}

/// Transpose of [`avg_pool_values`]: spreads each output gradient over its window.
pub fn avg_pool_adjoint(up: &[f64], planes: usize, h: usize, w: usize, kernel: usize) -> Vec<f64> {
    let (oh, ow) = pooled_dims(h, w, kernel);
    let mut g = vec![0.0; planes * h * w];
    for p in 0..planes {
        let dst = &mut g[p * h * w..(p + 1) * h * w];
        for oy in 0..oh {
            let rows = pool_window(oy, h, kernel);
            for ox in 0..ow {
                let cols = pool_window(ox, w, kernel);
                let share = up[(p * oh + oy) * ow + ox] / (rows.len() * cols.len()) as f64;
                for y in rows.clone() {
                    for xx in cols.clone() {
                        dst[y * w + xx] += share;
                    }
                }
            }
        }
    }
    g
}
