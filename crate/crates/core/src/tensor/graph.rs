//! Reverse-mode differentiation over an append-only operation tape.
//!
//! Nodes are recorded in execution order, which is a topological order by
//! construction, so the backward sweep is a single reverse pass that visits
//! each node exactly once. Leaves hold the gradient slots callers read back.
//!
//! A `Graph` is built fresh per forward pass; network weights enter as leaves
//! each time. This keeps the engine free of retain/release bookkeeping and
//! makes repeated-backward Jacobian assembly trivial.

use crate::error::{CoreError, Result};
use crate::filters::{block_downsample, block_downsample_adjoint, take_channels, zero_pad_channels, BlurKind};
use crate::spectral::band::{decimate, lowpass, upsample_zero};
use crate::tensor::conv::{conv2d_input_grad, conv2d_kernel_grad, conv2d_raw, Padding};
use crate::tensor::Tensor;

/// Handle to a node in a `Graph`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// Whether batch statistics or running statistics normalize the activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

/// Batch statistics computed by a train-mode normalization node; the caller
/// folds these into its running statistics.
#[derive(Debug, Clone)]
pub struct BnBatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone)]
enum BnSaved {
    Train { xhat: Tensor, invstd: Vec<f64> },
    Eval { xhat: Tensor, invstd: Vec<f64> },
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Scale { x: usize, factor: f64 },
    Relu { x: usize },
    Square { x: usize },
    Conv2d { input: usize, kernel: usize, stride: usize, padding: Padding },
    Linear { x: usize, w: usize, b: Option<usize> },
    BatchNorm { x: usize, gamma: usize, beta: usize, saved: BnSaved },
    SumSquares { x: usize },
    L2Dist { a: usize, b: usize },
    SoftmaxCe { logits: usize, labels: Vec<usize>, probs: Tensor },
    Reshape { x: usize },
    Decimate { x: usize, s: usize },
    ZeroPadChannels { x: usize, orig_c: usize },
    Lowpass { x: usize, u: usize },
    Downsample { x: usize, s: usize, kind: BlurKind },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    requires_grad: bool,
    op: Op,
}

/// Operation tape with value and gradient storage.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Graph {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> NodeId {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn requires(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].grad.as_ref()
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).add(self.value(b))?;
        let req = self.requires(a) || self.requires(b);
        Ok(self.push(value, req, Op::Add { a: a.0, b: b.0 }))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).sub(self.value(b))?;
        let req = self.requires(a) || self.requires(b);
        Ok(self.push(value, req, Op::Sub { a: a.0, b: b.0 }))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        let value = self.value(x).scaled(factor);
        let req = self.requires(x);
        self.push(value, req, Op::Scale { x: x.0, factor })
    }

    /// Elementwise square; the smooth nonlinearity used by tests that need a
    /// twice-differentiable map.
    pub fn square(&mut self, x: NodeId) -> NodeId {
        let data = self.value(x).data().iter().map(|&v| v * v).collect();
        let value = Tensor::new_unchecked(self.value(x).shape().to_vec(), data);
        let req = self.requires(x);
        self.push(value, req, Op::Square { x: x.0 })
    }

    /// Elementwise `max(x, 0)`; the backward pass multiplies by `I[x > 0]`.
    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let data = self.value(x).data().iter().map(|&v| v.max(0.0)).collect();
        let value = Tensor::new_unchecked(self.value(x).shape().to_vec(), data);
        let req = self.requires(x);
        self.push(value, req, Op::Relu { x: x.0 })
    }

    pub fn conv2d(
        &mut self,
        input: NodeId,
        kernel: NodeId,
        stride: usize,
        padding: Padding,
    ) -> Result<NodeId> {
        let value = conv2d_raw(self.value(input), self.value(kernel), stride, padding)?;
        let req = self.requires(input) || self.requires(kernel);
        Ok(self.push(
            value,
            req,
            Op::Conv2d {
                input: input.0,
                kernel: kernel.0,
                stride,
                padding,
            },
        ))
    }

    /// `x [B,D] * w [D,K] + b [K]`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        let xv = self.value(x);
        let wv = self.value(w);
        let (bsz, d) = match xv.shape()[..] {
            [bsz, d] => (bsz, d),
            _ => {
                return Err(CoreError::InvalidArgument(format!(
                    "linear expects rank-2 input, got {:?}",
                    xv.shape()
                )))
            }
        };
        let (wd, k) = match wv.shape()[..] {
            [wd, k] => (wd, k),
            _ => {
                return Err(CoreError::InvalidArgument(format!(
                    "linear expects rank-2 weight, got {:?}",
                    wv.shape()
                )))
            }
        };
        if wd != d {
            return Err(CoreError::ShapeMismatch {
                context: "linear",
                axis: "input features",
                expected: d,
                got: wd,
            });
        }
        let mut out = vec![0.0; bsz * k];
        for bi in 0..bsz {
            for kk in 0..k {
                let mut acc = 0.0;
                for di in 0..d {
                    acc += xv.data()[bi * d + di] * wv.data()[di * k + kk];
                }
                out[bi * k + kk] = acc;
            }
        }
        if let Some(bid) = b {
            let bv = self.value(bid);
            if bv.numel() != k {
                return Err(CoreError::ShapeMismatch {
                    context: "linear",
                    axis: "bias",
                    expected: k,
                    got: bv.numel(),
                });
            }
            for bi in 0..bsz {
                for kk in 0..k {
                    out[bi * k + kk] += bv.data()[kk];
                }
            }
        }
        let req = self.requires(x) || self.requires(w) || b.map(|bid| self.requires(bid)).unwrap_or(false);
        Ok(self.push(
            Tensor::new_unchecked(vec![bsz, k], out),
            req,
            Op::Linear {
                x: x.0,
                w: w.0,
                b: b.map(|n| n.0),
            },
        ))
    }

    /// Per-channel batch normalization over (batch, height, width).
    ///
    /// Train mode normalizes with batch statistics and returns them so the
    /// caller can update its running estimates; eval mode normalizes with the
    /// supplied running statistics.
    #[allow(clippy::too_many_arguments)]
    pub fn batchnorm2d(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        running_mean: &[f64],
        running_var: &[f64],
        eps: f64,
        mode: BnMode,
    ) -> Result<(NodeId, Option<BnBatchStats>)> {
        let xv = self.value(x).clone();
        let (b, c, h, w) = xv.dims4()?;
        let gv = self.value(gamma);
        let bv = self.value(beta);
        if gv.numel() != c || bv.numel() != c {
            return Err(CoreError::ShapeMismatch {
                context: "batchnorm2d",
                axis: "channels",
                expected: c,
                got: gv.numel(),
            });
        }
        let m = (b * h * w) as f64;
        let plane = h * w;

        let (mean, var): (Vec<f64>, Vec<f64>) = match mode {
            BnMode::Train => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ci in 0..c {
                    let mut acc = 0.0;
                    for bi in 0..b {
                        let base = (bi * c + ci) * plane;
                        for p in 0..plane {
                            acc += xv.data()[base + p];
                        }
                    }
                    mean[ci] = acc / m;
                    let mut vacc = 0.0;
                    for bi in 0..b {
                        let base = (bi * c + ci) * plane;
                        for p in 0..plane {
                            let d = xv.data()[base + p] - mean[ci];
                            vacc += d * d;
                        }
                    }
                    var[ci] = vacc / m;
                }
                (mean, var)
            }
            BnMode::Eval => (running_mean.to_vec(), running_var.to_vec()),
        };

        let invstd: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = Tensor::zeros(&[b, c, h, w]);
        let mut out = Tensor::zeros(&[b, c, h, w]);
        for bi in 0..b {
            for ci in 0..c {
                let base = (bi * c + ci) * plane;
                for p in 0..plane {
                    let xh = (xv.data()[base + p] - mean[ci]) * invstd[ci];
                    xhat.data_mut()[base + p] = xh;
                    out.data_mut()[base + p] = gv.data()[ci] * xh + bv.data()[ci];
                }
            }
        }

        let saved = match mode {
            BnMode::Train => BnSaved::Train {
                xhat,
                invstd: invstd.clone(),
            },
            BnMode::Eval => BnSaved::Eval {
                xhat,
                invstd: invstd.clone(),
            },
        };
        let stats = match mode {
            BnMode::Train => Some(BnBatchStats {
                mean: mean.clone(),
                var: var.clone(),
            }),
            BnMode::Eval => None,
        };
        let req = self.requires(x) || self.requires(gamma) || self.requires(beta);
        let id = self.push(
            out,
            req,
            Op::BatchNorm {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                saved,
            },
        );
        Ok((id, stats))
    }

    /// Scalar sum of squared entries.
    pub fn sum_squares(&mut self, x: NodeId) -> NodeId {
        let s: f64 = self.value(x).data().iter().map(|v| v * v).sum();
        let req = self.requires(x);
        self.push(
            Tensor::new_unchecked(vec![1], vec![s]),
            req,
            Op::SumSquares { x: x.0 },
        )
    }

    /// Scalar Euclidean distance between two same-shape nodes. At zero
    /// distance the gradient is taken to be zero; callers that need to react
    /// to that situation watch the gradient norm.
    pub fn l2_dist(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let d = self.value(a).dist(self.value(b))?;
        let req = self.requires(a) || self.requires(b);
        Ok(self.push(
            Tensor::new_unchecked(vec![1], vec![d]),
            req,
            Op::L2Dist { a: a.0, b: b.0 },
        ))
    }

    /// Mean softmax cross-entropy of `logits [B,K]` against class indices.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let lv = self.value(logits);
        let (bsz, k) = match lv.shape()[..] {
            [bsz, k] => (bsz, k),
            _ => {
                return Err(CoreError::InvalidArgument(format!(
                    "softmax_cross_entropy expects rank-2 logits, got {:?}",
                    lv.shape()
                )))
            }
        };
        if labels.len() != bsz {
            return Err(CoreError::ShapeMismatch {
                context: "softmax_cross_entropy",
                axis: "batch",
                expected: bsz,
                got: labels.len(),
            });
        }
        let mut probs = Tensor::zeros(&[bsz, k]);
        let mut loss = 0.0;
        for bi in 0..bsz {
            let row = &lv.data()[bi * k..(bi + 1) * k];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|v| (v - mx).exp()).collect();
            let z: f64 = exps.iter().sum();
            for kk in 0..k {
                probs.data_mut()[bi * k + kk] = exps[kk] / z;
            }
            let p = probs.data()[bi * k + labels[bi]].max(1e-300);
            loss -= p.ln();
        }
        loss /= bsz as f64;
        let req = self.requires(logits);
        Ok(self.push(
            Tensor::new_unchecked(vec![1], vec![loss]),
            req,
            Op::SoftmaxCe {
                logits: logits.0,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let value = self.value(x).reshaped(shape)?;
        let req = self.requires(x);
        Ok(self.push(value, req, Op::Reshape { x: x.0 }))
    }

    pub fn decimate(&mut self, x: NodeId, s: usize) -> Result<NodeId> {
        let value = decimate(self.value(x), s)?;
        let req = self.requires(x);
        Ok(self.push(value, req, Op::Decimate { x: x.0, s }))
    }

    pub fn zero_pad_channels(&mut self, x: NodeId, new_c: usize) -> Result<NodeId> {
        let orig_c = self.value(x).dims4()?.1;
        let value = zero_pad_channels(self.value(x), new_c)?;
        let req = self.requires(x);
        Ok(self.push(value, req, Op::ZeroPadChannels { x: x.0, orig_c }))
    }

    /// Ideal low-pass projection of the trailing two axes; self-adjoint, so
    /// the backward rule is the projection itself.
    pub fn lowpass(&mut self, x: NodeId, u: usize) -> Result<NodeId> {
        let value = lowpass(self.value(x), u)?;
        let req = self.requires(x);
        Ok(self.push(value, req, Op::Lowpass { x: x.0, u }))
    }

    /// Block-style anti-aliased downsampling (see `filters::block_downsample`).
    pub fn downsample(&mut self, x: NodeId, s: usize, kind: BlurKind) -> Result<NodeId> {
        let value = block_downsample(self.value(x), s, kind)?;
        let req = self.requires(x);
        Ok(self.push(value, req, Op::Downsample { x: x.0, s, kind }))
    }

    /// Populates leaf gradients of `d output / d leaf` for a scalar output.
    pub fn backward(&mut self, output: NodeId) -> Result<()> {
        if self.value(output).numel() != 1 {
            return Err(CoreError::InvalidArgument(format!(
                "backward requires a scalar output, got shape {:?}",
                self.value(output).shape()
            )));
        }
        self.backward_seeded(output, &Tensor::filled(&[1], 1.0))
    }

    /// Backward sweep from an arbitrary output with an explicit cotangent;
    /// used by Jacobian assembly.
    pub fn backward_seeded(&mut self, output: NodeId, seed: &Tensor) -> Result<()> {
        self.value(output).check_same_shape(seed, "backward_seeded")?;
        self.accumulate(output.0, seed.clone());
        for id in (0..=output.0).rev() {
            let contribs = self.node_backward(id)?;
            for (pid, t) in contribs {
                self.accumulate(pid, t);
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, id: usize, t: Tensor) {
        match &mut self.nodes[id].grad {
            Some(g) => {
                g.axpy(1.0, &t).expect("gradient shapes agree");
            }
            None => self.nodes[id].grad = Some(t),
        }
    }

    fn node_backward(&self, id: usize) -> Result<Vec<(usize, Tensor)>> {
        let node = &self.nodes[id];
        if !node.requires_grad {
            return Ok(Vec::new());
        }
        let g = match &node.grad {
            Some(g) => g,
            None => return Ok(Vec::new()),
        };
        let mut out: Vec<(usize, Tensor)> = Vec::new();
        let req = |p: usize| self.nodes[p].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::Add { a, b } => {
                if req(*a) {
                    out.push((*a, g.clone()));
                }
                if req(*b) {
                    out.push((*b, g.clone()));
                }
            }
            Op::Sub { a, b } => {
                if req(*a) {
                    out.push((*a, g.clone()));
                }
                if req(*b) {
                    out.push((*b, g.scaled(-1.0)));
                }
            }
            Op::Scale { x, factor } => {
                if req(*x) {
                    out.push((*x, g.scaled(*factor)));
                }
            }
            Op::Relu { x } => {
                if req(*x) {
                    let xv = &self.nodes[*x].value;
                    let data = xv
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&v, &gg)| if v > 0.0 { gg } else { 0.0 })
                        .collect();
                    out.push((*x, Tensor::new_unchecked(xv.shape().to_vec(), data)));
                }
            }
            Op::Square { x } => {
                if req(*x) {
                    let xv = &self.nodes[*x].value;
                    let data = xv
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&v, &gg)| 2.0 * v * gg)
                        .collect();
                    out.push((*x, Tensor::new_unchecked(xv.shape().to_vec(), data)));
                }
            }
            Op::Conv2d {
                input,
                kernel,
                stride,
                padding,
            } => {
                let kv = &self.nodes[*kernel].value;
                let iv = &self.nodes[*input].value;
                if req(*input) {
                    out.push((
                        *input,
                        conv2d_input_grad(g, kv, *stride, *padding, iv.shape())?,
                    ));
                }
                if req(*kernel) {
                    out.push((
                        *kernel,
                        conv2d_kernel_grad(g, iv, *stride, *padding, kv.shape())?,
                    ));
                }
            }
            Op::Linear { x, w, b } => {
                let xv = &self.nodes[*x].value;
                let wv = &self.nodes[*w].value;
                let (bsz, d) = (xv.shape()[0], xv.shape()[1]);
                let k = wv.shape()[1];
                if req(*x) {
                    let mut gx = vec![0.0; bsz * d];
                    for bi in 0..bsz {
                        for di in 0..d {
                            let mut acc = 0.0;
                            for kk in 0..k {
                                acc += g.data()[bi * k + kk] * wv.data()[di * k + kk];
                            }
                            gx[bi * d + di] = acc;
                        }
                    }
                    out.push((*x, Tensor::new_unchecked(vec![bsz, d], gx)));
                }
                if req(*w) {
                    let mut gw = vec![0.0; d * k];
                    for di in 0..d {
                        for kk in 0..k {
                            let mut acc = 0.0;
                            for bi in 0..bsz {
                                acc += xv.data()[bi * d + di] * g.data()[bi * k + kk];
                            }
                            gw[di * k + kk] = acc;
                        }
                    }
                    out.push((*w, Tensor::new_unchecked(vec![d, k], gw)));
                }
                if let Some(bid) = b {
                    if req(*bid) {
                        let mut gb = vec![0.0; k];
                        for bi in 0..bsz {
                            for kk in 0..k {
                                gb[kk] += g.data()[bi * k + kk];
                            }
                        }
                        out.push((*bid, Tensor::new_unchecked(vec![k], gb)));
                    }
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                saved,
            } => {
                let (xhat, invstd, train) = match saved {
                    BnSaved::Train { xhat, invstd } => (xhat, invstd, true),
                    BnSaved::Eval { xhat, invstd } => (xhat, invstd, false),
                };
                let (b_, c, h, w) = xhat.dims4()?;
                let plane = h * w;
                let m = (b_ * plane) as f64;
                let gv = &self.nodes[*gamma].value;
                if req(*gamma) {
                    let mut gg = vec![0.0; c];
                    for bi in 0..b_ {
                        for ci in 0..c {
                            let base = (bi * c + ci) * plane;
                            for p in 0..plane {
                                gg[ci] += g.data()[base + p] * xhat.data()[base + p];
                            }
                        }
                    }
                    out.push((*gamma, Tensor::new_unchecked(vec![c], gg)));
                }
                if req(*beta) {
                    let mut gb = vec![0.0; c];
                    for bi in 0..b_ {
                        for ci in 0..c {
                            let base = (bi * c + ci) * plane;
                            for p in 0..plane {
                                gb[ci] += g.data()[base + p];
                            }
                        }
                    }
                    out.push((*beta, Tensor::new_unchecked(vec![c], gb)));
                }
                if req(*x) {
                    let mut gx = Tensor::zeros(xhat.shape());
                    if train {
                        // Standard batch-statistics backward: the mean and
                        // variance both depend on x.
                        for ci in 0..c {
                            let mut sum_dy = 0.0;
                            let mut sum_dy_xhat = 0.0;
                            for bi in 0..b_ {
                                let base = (bi * c + ci) * plane;
                                for p in 0..plane {
                                    let dy = g.data()[base + p] * gv.data()[ci];
                                    sum_dy += dy;
                                    sum_dy_xhat += dy * xhat.data()[base + p];
                                }
                            }
                            for bi in 0..b_ {
                                let base = (bi * c + ci) * plane;
                                for p in 0..plane {
                                    let dy = g.data()[base + p] * gv.data()[ci];
                                    gx.data_mut()[base + p] = invstd[ci] / m
                                        * (m * dy - sum_dy - xhat.data()[base + p] * sum_dy_xhat);
                                }
                            }
                        }
                    } else {
                        for bi in 0..b_ {
                            for ci in 0..c {
                                let base = (bi * c + ci) * plane;
                                for p in 0..plane {
                                    gx.data_mut()[base + p] =
                                        g.data()[base + p] * gv.data()[ci] * invstd[ci];
                                }
                            }
                        }
                    }
                    out.push((*x, gx));
                }
            }
            Op::SumSquares { x } => {
                if req(*x) {
                    let g0 = g.data()[0];
                    out.push((*x, self.nodes[*x].value.scaled(2.0 * g0)));
                }
            }
            Op::L2Dist { a, b } => {
                let d = node.value.data()[0];
                if d > 1e-150 {
                    let g0 = g.data()[0];
                    let diff = self.nodes[*a].value.sub(&self.nodes[*b].value)?;
                    if req(*a) {
                        out.push((*a, diff.scaled(g0 / d)));
                    }
                    if req(*b) {
                        out.push((*b, diff.scaled(-g0 / d)));
                    }
                }
            }
            Op::SoftmaxCe {
                logits,
                labels,
                probs,
            } => {
                if req(*logits) {
                    let g0 = g.data()[0];
                    let (bsz, k) = (probs.shape()[0], probs.shape()[1]);
                    let mut gl = probs.scaled(g0 / bsz as f64);
                    for (bi, &lab) in labels.iter().enumerate() {
                        gl.data_mut()[bi * k + lab] -= g0 / bsz as f64;
                    }
                    out.push((*logits, gl));
                }
            }
            Op::Reshape { x } => {
                if req(*x) {
                    let shape = self.nodes[*x].value.shape().to_vec();
                    out.push((*x, g.reshaped(&shape)?));
                }
            }
            Op::Decimate { x, s } => {
                if req(*x) {
                    out.push((*x, upsample_zero(g, *s)?));
                }
            }
            Op::ZeroPadChannels { x, orig_c } => {
                if req(*x) {
                    out.push((*x, take_channels(g, *orig_c)?));
                }
            }
            Op::Lowpass { x, u } => {
                if req(*x) {
                    out.push((*x, lowpass(g, *u)?));
                }
            }
            Op::Downsample { x, s, kind } => {
                if req(*x) {
                    let shape = self.nodes[*x].value.shape().to_vec();
                    out.push((*x, block_downsample_adjoint(g, *s, *kind, &shape)?));
                }
            }
        }
        Ok(out)
    }
}

/// A map from tensors to tensors expressible on a `Graph`, so gradients and
/// Jacobians come from the same machinery as training.
pub trait DifferentiableMap {
    fn input_shape(&self) -> Vec<usize>;
    fn apply(&self, graph: &mut Graph, x: NodeId) -> Result<NodeId>;
}

/// Runs a map forward without gradient bookkeeping.
pub fn eval_map(map: &dyn DifferentiableMap, x: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let xid = g.leaf(x.clone(), false);
    let out = map.apply(&mut g, xid)?;
    Ok(g.value(out).clone())
}

/// Dense Jacobian of a map at `x`: one backward pass per output component.
/// Intended for desk-scale outputs; refuses more than 512 rows.
pub fn jacobian(map: &dyn DifferentiableMap, x: &Tensor) -> Result<Vec<Vec<f64>>> {
    Ok(jacobian_with_output(map, x)?.0)
}

/// Jacobian plus the forward value it was taken at.
pub fn jacobian_with_output(
    map: &dyn DifferentiableMap,
    x: &Tensor,
) -> Result<(Vec<Vec<f64>>, Tensor)> {
    let mut g = Graph::new();
    let xid = g.leaf(x.clone(), true);
    let out = map.apply(&mut g, xid)?;
    let m = g.value(out).numel();
    if m > 512 {
        return Err(CoreError::InvalidArgument(format!(
            "jacobian limited to 512 output components, got {m}"
        )));
    }
    let out_shape = g.value(out).shape().to_vec();
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        g.zero_grads();
        let mut seed = Tensor::zeros(&out_shape);
        seed.data_mut()[i] = 1.0;
        g.backward_seeded(out, &seed)?;
        let row = g
            .grad(xid)
            .map(|t| t.data().to_vec())
            .unwrap_or_else(|| vec![0.0; x.numel()]);
        rows.push(row);
    }
    let value = g.value(out).clone();
    Ok((rows, value))
}
