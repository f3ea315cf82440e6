//! Residual blocks and small networks built from them.
//!
//! A block computes `down(pad(x) + g(x))` where the branch
//! `g = conv(3x3) -> relu -> conv(3x3)` runs at the input resolution, `pad`
//! zero-pads channels when the block widens, and `down` is anti-aliased
//! decimation for stride-2 blocks (identity otherwise). Normalization layers
//! sit between blocks, not inside branches, so branch Lipschitz data is the
//! product of the two convolution norms.

pub mod spectral_norm;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::filters::BlurKind;
use crate::spectral::band::FrequencyBudget;
use crate::tensor::conv::{conv2d_raw, Padding};
use crate::tensor::graph::{BnBatchStats, BnMode, Graph, NodeId};
use crate::tensor::io::{load_tensor, save_tensor};
use crate::tensor::Tensor;
use spectral_norm::{apply_spectral_norm, estimate_sigma, SpectralNormState};

/// Declarative description of one residual block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualBlockSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    /// 1 or 2.
    pub stride: usize,
    /// Target operator norm per branch convolution; `None` disables
    /// normalization.
    pub coeff: Option<f64>,
}

/// Declarative description of a network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_channels: usize,
    /// Square input extent.
    pub input_extent: usize,
    pub blocks: Vec<ResidualBlockSpec>,
    /// Normalization layers between consecutive blocks.
    pub batchnorm_between: bool,
    /// Low-pass every feature map (and the input) to its frequency budget.
    pub interblock_lowpass: bool,
    pub downsample: BlurKind,
    pub padding: Padding,
}

impl NetworkSpec {
    /// Default laboratory architecture: four blocks, strides (1, 2, 1, 2),
    /// total downsampling 4.
    pub fn toy(input_channels: usize, coeff: Option<f64>) -> NetworkSpec {
        let widths = [4, 4, 8, 8];
        let strides = [1, 2, 1, 2];
        let mut blocks = Vec::new();
        let mut cin = input_channels;
        for (w, s) in widths.iter().zip(strides) {
            blocks.push(ResidualBlockSpec {
                in_channels: cin,
                out_channels: *w,
                stride: s,
                coeff,
            });
            cin = *w;
        }
        NetworkSpec {
            input_channels,
            input_extent: 16,
            blocks,
            batchnorm_between: true,
            interblock_lowpass: false,
            downsample: BlurKind::Binomial,
            padding: Padding::SameCircular,
        }
    }

    pub fn total_downsampling(&self) -> usize {
        self.blocks.iter().map(|b| b.stride).product()
    }

    /// Grid extent at each block's input.
    pub fn block_extents(&self) -> Vec<usize> {
        let mut n = self.input_extent;
        let mut out = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            out.push(n);
            n /= b.stride;
        }
        out
    }

    /// Budget at each block's input: grid extent there and the downsampling
    /// still ahead (including the block's own stride).
    pub fn block_budgets(&self) -> Result<Vec<FrequencyBudget>> {
        let extents = self.block_extents();
        let mut budgets = Vec::with_capacity(self.blocks.len());
        for (l, b) in self.blocks.iter().enumerate() {
            let d: usize = self.blocks[l..].iter().map(|x| x.stride).product();
            let _ = b;
            budgets.push(FrequencyBudget::new(extents[l], d)?);
        }
        Ok(budgets)
    }

    /// Budget at each block's output (grid after its stride, remaining
    /// downsampling excluding it).
    pub fn post_block_budgets(&self) -> Result<Vec<FrequencyBudget>> {
        let extents = self.block_extents();
        let mut budgets = Vec::with_capacity(self.blocks.len());
        for (l, b) in self.blocks.iter().enumerate() {
            let d: usize = self.blocks[l + 1..].iter().map(|x| x.stride).product();
            budgets.push(FrequencyBudget::new(extents[l] / b.stride, d)?);
        }
        Ok(budgets)
    }

    /// Budget on the input grid for the whole network.
    pub fn final_budget(&self) -> Result<FrequencyBudget> {
        FrequencyBudget::new(self.input_extent, self.total_downsampling())
    }

    /// Shape of the final feature map as (channels, extent).
    pub fn output_shape(&self) -> (usize, usize) {
        let c = self.blocks.last().map(|b| b.out_channels).unwrap_or(self.input_channels);
        (c, self.input_extent / self.total_downsampling())
    }
}

/// Per-channel normalization state kept between blocks.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> BatchNorm2d {
        BatchNorm2d {
            gamma: Tensor::filled(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn update_running(&mut self, stats: &BnBatchStats) {
        for (r, b) in self.running_mean.iter_mut().zip(&stats.mean) {
            *r = (1.0 - self.momentum) * *r + self.momentum * b;
        }
        for (r, b) in self.running_var.iter_mut().zip(&stats.var) {
            *r = (1.0 - self.momentum) * *r + self.momentum * b;
        }
    }
}

/// One residual block with owned weights and power-iteration state.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub spec: ResidualBlockSpec,
    pub conv1: Tensor,
    pub conv2: Tensor,
    sn1: SpectralNormState,
    sn2: SpectralNormState,
    padding: Padding,
}

impl ResidualBlock {
    fn new<R: Rng>(
        spec: ResidualBlockSpec,
        extent: usize,
        padding: Padding,
        init_gain: f64,
        rng: &mut R,
    ) -> ResidualBlock {
        let (cin, cout) = (spec.in_channels, spec.out_channels);
        let std1 = init_gain * (2.0 / (cin * 9) as f64).sqrt();
        let std2 = init_gain * (2.0 / (cout * 9) as f64).sqrt();
        let conv1 = Tensor::randn(&[cout, cin, 3, 3], rng).scaled(std1);
        let conv2 = Tensor::randn(&[cout, cout, 3, 3], rng).scaled(std2);
        let sn1 = SpectralNormState::new(&[1, cin, extent, extent], rng);
        let sn2 = SpectralNormState::new(&[1, cout, extent, extent], rng);
        ResidualBlock {
            spec,
            conv1,
            conv2,
            sn1,
            sn2,
            padding,
        }
    }

    /// The branch `g`: conv -> relu -> conv at input resolution, no graph.
    pub fn branch(&self, x: &Tensor) -> Result<Tensor> {
        let a = conv2d_raw(x, &self.conv1, 1, self.padding)?;
        let r = Tensor::new_unchecked(
            a.shape().to_vec(),
            a.data().iter().map(|&v| v.max(0.0)).collect(),
        );
        conv2d_raw(&r, &self.conv2, 1, self.padding)
    }

    /// Full block: `down(pad(x) + g(x))`, no graph.
    pub fn forward(&self, x: &Tensor, kind: BlurKind) -> Result<Tensor> {
        let skip = crate::filters::zero_pad_channels(x, self.spec.out_channels)?;
        let sum = skip.add(&self.branch(x)?)?;
        crate::filters::block_downsample(&sum, self.spec.stride, kind)
    }

    /// Refreshes both power-iteration estimates and applies soft
    /// normalization at the block's coefficient.
    pub fn normalize(&mut self, n_iters: usize) -> Result<()> {
        estimate_sigma(&self.conv1, &mut self.sn1, self.padding, n_iters)?;
        apply_spectral_norm(&mut self.conv1, &mut self.sn1, self.spec.coeff);
        estimate_sigma(&self.conv2, &mut self.sn2, self.padding, n_iters)?;
        apply_spectral_norm(&mut self.conv2, &mut self.sn2, self.spec.coeff);
        Ok(())
    }

    /// Refreshes estimates without rescaling (verification mode).
    pub fn estimate_only(&mut self, n_iters: usize) -> Result<()> {
        estimate_sigma(&self.conv1, &mut self.sn1, self.padding, n_iters)?;
        estimate_sigma(&self.conv2, &mut self.sn2, self.padding, n_iters)?;
        Ok(())
    }

    /// Product of the two convolution norm estimates: an upper bound on the
    /// branch Lipschitz constant (the rectifier is 1-Lipschitz).
    pub fn branch_lipschitz(&self) -> f64 {
        self.sn1.sigma_hat() * self.sn2.sigma_hat()
    }

    pub fn sigma_hats(&self) -> (f64, f64) {
        (self.sn1.sigma_hat(), self.sn2.sigma_hat())
    }

    /// Recovers `x` from `y = x + g(x)` by fixed-point iteration
    /// `x <- y - g(x)`; valid for dimension-preserving blocks with a
    /// contractive branch.
    pub fn invert(&self, y: &Tensor, max_iters: usize, tol: f64) -> Result<Tensor> {
        if self.spec.stride != 1 || self.spec.in_channels != self.spec.out_channels {
            return Err(CoreError::InvalidArgument(
                "inversion needs a dimension-preserving block".into(),
            ));
        }
        let mut x = y.clone();
        for _ in 0..max_iters {
            let next = y.sub(&self.branch(&x)?)?;
            let step = next.dist(&x)?;
            x = next;
            if step <= tol {
                break;
            }
        }
        Ok(x)
    }
}

/// Block-level tap pair recorded during a forward pass.
#[derive(Debug, Clone, Copy)]
pub struct BlockTap {
    /// Block input (after the previous inter-block layers).
    pub input: NodeId,
    /// Post-residual output, before any inter-block filter/normalization.
    pub output: NodeId,
}

/// Node handles of trainable parameters created during a training forward.
#[derive(Debug, Default)]
pub struct ParamNodes {
    /// (conv1, conv2) per block.
    pub convs: Vec<(NodeId, NodeId)>,
    /// (gamma, beta) per inter-block normalization layer.
    pub bns: Vec<(NodeId, NodeId)>,
}

/// A stack of residual blocks with optional inter-block normalization and
/// low-pass filtering.
#[derive(Debug, Clone)]
pub struct Network {
    pub spec: NetworkSpec,
    pub blocks: Vec<ResidualBlock>,
    /// One entry per gap between consecutive blocks.
    pub bns: Vec<Option<BatchNorm2d>>,
}

impl Network {
    pub fn new<R: Rng>(spec: NetworkSpec, init_gain: f64, rng: &mut R) -> Result<Network> {
        let extents = spec.block_extents();
        let mut blocks = Vec::with_capacity(spec.blocks.len());
        for (bs, extent) in spec.blocks.iter().zip(&extents) {
            if bs.stride != 1 && bs.stride != 2 {
                return Err(CoreError::InvalidArgument(format!(
                    "block stride must be 1 or 2, got {}",
                    bs.stride
                )));
            }
            blocks.push(ResidualBlock::new(
                bs.clone(),
                *extent,
                spec.padding,
                init_gain,
                rng,
            ));
        }
        let mut bns = Vec::new();
        for gap in 0..spec.blocks.len().saturating_sub(1) {
            bns.push(if spec.batchnorm_between {
                Some(BatchNorm2d::new(spec.blocks[gap].out_channels))
            } else {
                None
            });
        }
        Ok(Network { spec, blocks, bns })
    }

    /// Soft-normalizes every branch convolution.
    pub fn normalize(&mut self, n_iters: usize) -> Result<()> {
        for b in &mut self.blocks {
            b.normalize(n_iters)?;
        }
        Ok(())
    }

    /// Refreshes norm estimates without touching weights.
    pub fn refresh_estimates(&mut self, n_iters: usize) -> Result<()> {
        for b in &mut self.blocks {
            b.estimate_only(n_iters)?;
        }
        Ok(())
    }

    /// Per-block branch Lipschitz bounds from the current estimates.
    pub fn branch_lipschitz_bounds(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.branch_lipschitz()).collect()
    }

    /// `prod_l max(0, 1 - L_l)`: the network-wide lower-bound factor on
    /// low-band output distances when every branch is contractive.
    pub fn product_lower_bound(&self) -> f64 {
        self.branch_lipschitz_bounds()
            .iter()
            .map(|l| (1.0 - l).max(0.0))
            .product()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (_, c, h, w) = x.dims4()?;
        if c != self.spec.input_channels {
            return Err(CoreError::ShapeMismatch {
                context: "network input",
                axis: "channels",
                expected: self.spec.input_channels,
                got: c,
            });
        }
        if h != self.spec.input_extent || w != self.spec.input_extent {
            return Err(CoreError::ShapeMismatch {
                context: "network input",
                axis: "spatial extent",
                expected: self.spec.input_extent,
                got: h,
            });
        }
        Ok(())
    }

    fn apply_block(
        &self,
        g: &mut Graph,
        l: usize,
        x: NodeId,
        trainable: bool,
        params: Option<&mut ParamNodes>,
    ) -> Result<NodeId> {
        let block = &self.blocks[l];
        let k1 = g.leaf(block.conv1.clone(), trainable);
        let k2 = g.leaf(block.conv2.clone(), trainable);
        if let Some(p) = params {
            p.convs.push((k1, k2));
        }
        let skip = if block.spec.out_channels > block.spec.in_channels {
            g.zero_pad_channels(x, block.spec.out_channels)?
        } else {
            x
        };
        let a = g.conv2d(x, k1, 1, self.spec.padding)?;
        let r = g.relu(a);
        let branch = g.conv2d(r, k2, 1, self.spec.padding)?;
        let sum = g.add(skip, branch)?;
        if block.spec.stride > 1 {
            g.downsample(sum, block.spec.stride, self.spec.downsample)
        } else {
            Ok(sum)
        }
    }

    /// Forward pass with frozen statistics; optionally records block taps.
    pub fn forward_eval(
        &self,
        g: &mut Graph,
        x: NodeId,
        record_taps: bool,
    ) -> Result<(NodeId, Vec<BlockTap>)> {
        self.check_input(g.value(x))?;
        let budgets = self.spec.block_budgets()?;
        let post_budgets = self.spec.post_block_budgets()?;
        let mut taps = Vec::new();
        let mut cur = x;
        if self.spec.interblock_lowpass {
            cur = g.lowpass(cur, budgets[0].u)?;
        }
        for l in 0..self.blocks.len() {
            let input_tap = cur;
            let out = self.apply_block(g, l, cur, false, None)?;
            if record_taps {
                taps.push(BlockTap {
                    input: input_tap,
                    output: out,
                });
            }
            cur = out;
            if self.spec.interblock_lowpass {
                cur = g.lowpass(cur, post_budgets[l].u)?;
            }
            if l + 1 < self.blocks.len() {
                if let Some(bn) = &self.bns[l] {
                    let gamma = g.leaf(bn.gamma.clone(), false);
                    let beta = g.leaf(bn.beta.clone(), false);
                    let (out, _) = g.batchnorm2d(
                        cur,
                        gamma,
                        beta,
                        &bn.running_mean,
                        &bn.running_var,
                        bn.eps,
                        BnMode::Eval,
                    )?;
                    cur = out;
                }
            }
        }
        Ok((cur, taps))
    }

    /// Forward pass with batch statistics; updates running statistics and
    /// returns the parameter leaves for the optimizer.
    pub fn forward_train(&mut self, g: &mut Graph, x: NodeId) -> Result<(NodeId, ParamNodes)> {
        self.check_input(g.value(x))?;
        let budgets = self.spec.block_budgets()?;
        let post_budgets = self.spec.post_block_budgets()?;
        let mut params = ParamNodes::default();
        let mut cur = x;
        if self.spec.interblock_lowpass {
            cur = g.lowpass(cur, budgets[0].u)?;
        }
        for l in 0..self.blocks.len() {
            cur = self.apply_block(g, l, cur, true, Some(&mut params))?;
            if self.spec.interblock_lowpass {
                cur = g.lowpass(cur, post_budgets[l].u)?;
            }
            if l + 1 < self.blocks.len() {
                if let Some(bn) = &mut self.bns[l] {
                    let gamma = g.leaf(bn.gamma.clone(), true);
                    let beta = g.leaf(bn.beta.clone(), true);
                    params.bns.push((gamma, beta));
                    let (out, stats) = g.batchnorm2d(
                        cur,
                        gamma,
                        beta,
                        &bn.running_mean,
                        &bn.running_var,
                        bn.eps,
                        BnMode::Train,
                    )?;
                    if let Some(stats) = stats {
                        bn.update_running(&stats);
                    }
                    cur = out;
                }
            }
        }
        Ok((cur, params))
    }

    /// Convenience wrapper: final feature map for a batch, frozen statistics.
    pub fn features(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let xid = g.leaf(x.clone(), false);
        let (out, _) = self.forward_eval(&mut g, xid, false)?;
        Ok(g.value(out).clone())
    }

    /// Final feature map plus per-block (input, output) tap values.
    pub fn features_with_taps(&self, x: &Tensor) -> Result<(Tensor, Vec<(Tensor, Tensor)>)> {
        let mut g = Graph::new();
        let xid = g.leaf(x.clone(), false);
        let (out, taps) = self.forward_eval(&mut g, xid, true)?;
        let values = taps
            .iter()
            .map(|t| (g.value(t.input).clone(), g.value(t.output).clone()))
            .collect();
        Ok((g.value(out).clone(), values))
    }

    /// Returns a copy with inter-block (and input) low-pass filters enabled
    /// or disabled; weights and statistics are shared snapshots.
    pub fn with_interblock_lowpass(&self, enabled: bool) -> Network {
        let mut net = self.clone();
        net.spec.interblock_lowpass = enabled;
        net
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(
            dir.join("network.json"),
            serde_json::to_vec_pretty(&self.spec)?,
        )?;
        for (i, b) in self.blocks.iter().enumerate() {
            save_tensor(&dir.join(format!("block{i}_conv1.f64")), &b.conv1)?;
            save_tensor(&dir.join(format!("block{i}_conv2.f64")), &b.conv2)?;
        }
        for (i, bn) in self.bns.iter().enumerate() {
            if let Some(bn) = bn {
                save_tensor(&dir.join(format!("bn{i}_gamma.f64")), &bn.gamma)?;
                save_tensor(&dir.join(format!("bn{i}_beta.f64")), &bn.beta)?;
                save_tensor(
                    &dir.join(format!("bn{i}_mean.f64")),
                    &Tensor::from_vec(&[bn.running_mean.len()], bn.running_mean.clone())?,
                )?;
                save_tensor(
                    &dir.join(format!("bn{i}_var.f64")),
                    &Tensor::from_vec(&[bn.running_var.len()], bn.running_var.clone())?,
                )?;
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Network> {
        let spec: NetworkSpec = serde_json::from_slice(&std::fs::read(dir.join("network.json"))?)?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        use rand::SeedableRng;
        let mut net = Network::new(spec, 1.0, &mut rng)?;
        for (i, b) in net.blocks.iter_mut().enumerate() {
            b.conv1 = load_tensor(&dir.join(format!("block{i}_conv1.f64")))?;
            b.conv2 = load_tensor(&dir.join(format!("block{i}_conv2.f64")))?;
        }
        for (i, bn) in net.bns.iter_mut().enumerate() {
            if let Some(bn) = bn {
                bn.gamma = load_tensor(&dir.join(format!("bn{i}_gamma.f64")))?;
                bn.beta = load_tensor(&dir.join(format!("bn{i}_beta.f64")))?;
                bn.running_mean = load_tensor(&dir.join(format!("bn{i}_mean.f64")))?.into_data();
                bn.running_var = load_tensor(&dir.join(format!("bn{i}_var.f64")))?.into_data();
            }
        }
        net.refresh_estimates(200)?;
        Ok(net)
    }
}

impl crate::tensor::graph::DifferentiableMap for Network {
    fn input_shape(&self) -> Vec<usize> {
        vec![
            1,
            self.spec.input_channels,
            self.spec.input_extent,
            self.spec.input_extent,
        ]
    }

    fn apply(&self, graph: &mut Graph, x: NodeId) -> Result<NodeId> {
        let (out, _) = self.forward_eval(graph, x, false)?;
        Ok(out)
    }
}
