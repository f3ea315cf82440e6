//! Batch checks of the two conditions the block-level distance argument
//! rests on: low-band dominance of (feature-map) spectra, and low-band
//! contraction of residual branches.
//!
//! Contraction is measured on minibatch pairs: for block inputs `x_i`, the
//! branch `g` and the block budget `u`, the checked inequality is
//! `||g(H_u x_i) - g(H_u x_j)|| <= ||H_u x_i - H_u x_j||`. Two variants are
//! reported: `as_written` compares raw branch outputs; `lowpassed_output`
//! low-passes the branch outputs first (the form the lower-bound proof
//! actually controls). Ties within 1e-12 count as satisfied; zero-distance
//! pairs are excluded and reported separately.

use serde::{Deserialize, Serialize};

use crate::blocks::{Network, ResidualBlock};
use crate::error::{CoreError, Result};
use crate::spectral::band::{lowpass, FrequencyBudget};
use crate::spectral::dominance::{dominance_check, DominanceReport};
use crate::tensor::Tensor;

const TIE_TOL: f64 = 1e-12;

/// How feature-map dominance is evaluated across a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DominanceMode {
    /// Each item's own spectrum (mirrors per-layer condition tables).
    PerItem,
    /// Spectra of pairwise differences (the hypothesis the contraction
    /// argument actually uses).
    PairwiseDifference,
}

/// Dominance proportions at the input layer and at each block input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DominanceProportions {
    pub mode: DominanceMode,
    pub input: f64,
    pub per_block: Vec<f64>,
}

/// Pairwise contraction proportions for one block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockContraction {
    pub u: usize,
    pub as_written: f64,
    pub lowpassed_output: f64,
    pub counted_pairs: usize,
    pub degenerate_pairs: usize,
}

/// Everything one protocol run produces, serializable as JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub batch_size: usize,
    pub seed: u64,
    pub budgets_u: Vec<usize>,
    pub dominance: DominanceProportions,
    pub contraction: Vec<BlockContraction>,
}

fn proportion(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// Fraction of batch items (or pairs) whose spectrum is low-band dominant,
/// at the input layer and at every block input.
pub fn check_dominance_over_batch(
    net: &Network,
    batch: &Tensor,
    mode: DominanceMode,
) -> Result<DominanceProportions> {
    let (b, _, _, _) = batch.dims4()?;
    if b == 0 {
        return Err(CoreError::InvalidArgument("empty batch".into()));
    }
    let budgets = net.spec.block_budgets()?;
    let input_u = budgets[0].u;

    // Collect per-layer item tensors: layer 0 is the raw input, layer l+1 is
    // block l's input feature map.
    let mut layers: Vec<(usize, Vec<Tensor>)> = Vec::new();
    let mut input_items = Vec::with_capacity(b);
    for i in 0..b {
        input_items.push(batch.batch_item(i)?);
    }
    layers.push((input_u, input_items));
    let (_, taps) = net.features_with_taps(batch)?;
    for (l, (tap_in, _)) in taps.iter().enumerate() {
        let mut items = Vec::with_capacity(b);
        for i in 0..b {
            items.push(tap_in.batch_item(i)?);
        }
        layers.push((budgets[l].u, items));
    }

    let mut proportions = Vec::with_capacity(layers.len());
    for (u, items) in &layers {
        let mut hits = 0;
        let mut total = 0;
        match mode {
            DominanceMode::PerItem => {
                for it in items {
                    total += 1;
                    if dominance_check(it, *u)?.is_dominant {
                        hits += 1;
                    }
                }
            }
            DominanceMode::PairwiseDifference => {
                for i in 0..items.len() {
                    for j in (i + 1)..items.len() {
                        total += 1;
                        let diff = items[i].sub(&items[j])?;
                        if dominance_check(&diff, *u)?.is_dominant {
                            hits += 1;
                        }
                    }
                }
            }
        }
        proportions.push(proportion(hits, total));
    }

    Ok(DominanceProportions {
        mode,
        input: proportions[0],
        per_block: proportions[1..].to_vec(),
    })
}

/// Per-block pairwise contraction proportions over a batch.
pub fn check_contraction_over_batch(net: &Network, batch: &Tensor) -> Result<Vec<BlockContraction>> {
    let (b, _, _, _) = batch.dims4()?;
    if b < 2 {
        return Err(CoreError::InvalidArgument(
            "contraction check needs a batch of at least 2".into(),
        ));
    }
    let budgets = net.spec.block_budgets()?;
    let (_, taps) = net.features_with_taps(batch)?;

    let mut out = Vec::with_capacity(net.blocks.len());
    for (l, (tap_in, _)) in taps.iter().enumerate() {
        let u = budgets[l].u;
        let block = &net.blocks[l];
        // Low-pass the block inputs, then run the branch on the whole batch.
        let lp_in = lowpass(tap_in, u)?;
        let g_out = block.branch(&lp_in)?;
        let g_low = lowpass(&g_out, u)?;

        let mut as_written = 0usize;
        let mut lowpassed = 0usize;
        let mut counted = 0usize;
        let mut degenerate = 0usize;
        for i in 0..b {
            let xi = lp_in.batch_item(i)?;
            let gi = g_out.batch_item(i)?;
            let gli = g_low.batch_item(i)?;
            for j in (i + 1)..b {
                let din = xi.dist(&lp_in.batch_item(j)?)?;
                if din <= TIE_TOL {
                    degenerate += 1;
                    continue;
                }
                counted += 1;
                if gi.dist(&g_out.batch_item(j)?)? <= din + TIE_TOL {
                    as_written += 1;
                }
                if gli.dist(&g_low.batch_item(j)?)? <= din + TIE_TOL {
                    lowpassed += 1;
                }
            }
        }
        out.push(BlockContraction {
            u,
            as_written: proportion(as_written, counted),
            lowpassed_output: proportion(lowpassed, counted),
            counted_pairs: counted,
            degenerate_pairs: degenerate,
        });
    }
    Ok(out)
}

/// Runs both checks and bundles the report.
pub fn run_checks(
    net: &Network,
    batch: &Tensor,
    seed: u64,
    mode: DominanceMode,
) -> Result<CheckReport> {
    let budgets = net.spec.block_budgets()?;
    Ok(CheckReport {
        batch_size: batch.dims4()?.0,
        seed,
        budgets_u: budgets.iter().map(|b| b.u).collect(),
        dominance: check_dominance_over_batch(net, batch, mode)?,
        contraction: check_contraction_over_batch(net, batch)?,
    })
}

/// Outcome of checking the explicit `(1 - L)` lower bound on low-passed
/// output distances of one block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum BoundOutcome {
    /// `||H_u f(x) - H_u f(y)|| >= (1 - L) ||H_u x - H_u y||`.
    Holds { ratio: f64, bound: f64 },
    Violated { ratio: f64, bound: f64 },
    /// The difference `x - y` failed the dominance precondition.
    PreconditionUnmet { report: DominanceReport },
    /// `||H_u x - H_u y|| = 0`; the bound is vacuous.
    Degenerate,
}

/// Checks the low-band lower bound through one block for a pair of inputs
/// whose difference must be low-band dominant.
pub fn check_lowband_bound(
    block: &ResidualBlock,
    budget: FrequencyBudget,
    x: &Tensor,
    y: &Tensor,
    kind: crate::filters::BlurKind,
) -> Result<BoundOutcome> {
    let u = budget.u;
    let diff = x.sub(&y.clone())?;
    let dom = dominance_check(&diff.batch_item(0)?, u)?;
    if !dom.is_dominant {
        return Ok(BoundOutcome::PreconditionUnmet { report: dom });
    }
    let din = lowpass(x, u)?.dist(&lowpass(y, u)?)?;
    if din <= TIE_TOL {
        return Ok(BoundOutcome::Degenerate);
    }
    let l = block.branch_lipschitz();
    let bound = (1.0 - l).max(0.0);
    let fx = block.forward(x, kind)?;
    let fy = block.forward(y, kind)?;
    let dout = lowpass(&fx, u)?.dist(&lowpass(&fy, u)?)?;
    let ratio = dout / din;
    if ratio >= bound * (1.0 - 1e-9) - TIE_TOL {
        Ok(BoundOutcome::Holds { ratio, bound })
    } else {
        Ok(BoundOutcome::Violated { ratio, bound })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::{NetworkSpec, ResidualBlockSpec};
    use crate::filters::BlurKind;
    use crate::spectral::band::cosine_mode;
    use crate::tensor::conv::Padding;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_net(coeff: Option<f64>, seed: u64) -> Network {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Network::new(NetworkSpec::toy(1, coeff), 1.0, &mut rng).unwrap();
        net.normalize(200).unwrap();
        net
    }

    fn zero_branch_net(seed: u64) -> Network {
        let mut net = toy_net(None, seed);
        for b in &mut net.blocks {
            b.conv1 = Tensor::zeros(b.conv1.shape());
            b.conv2 = Tensor::zeros(b.conv2.shape());
        }
        net.refresh_estimates(10).unwrap();
        net
    }

    /// Batch whose images are mixtures of low modes; low-band dominant at u=1.
    fn low_band_batch(b: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut items = Vec::new();
        for _ in 0..b {
            let mut img = Tensor::filled(&[16, 16], rng.gen_range(1.0..2.0));
            for (ky, kx) in [(0usize, 1usize), (1, 0), (1, 1)] {
                let amp: f64 = rng.gen_range(-0.4..0.4);
                img.axpy(amp, &cosine_mode(16, ky, kx)).unwrap();
            }
            items.push(img.reshaped(&[1, 16, 16]).unwrap());
        }
        Tensor::stack_batch(&items).unwrap()
    }

    #[test]
    fn constant_batch_is_input_dominant() {
        let net = zero_branch_net(300);
        let items: Vec<Tensor> = (0..4)
            .map(|i| Tensor::filled(&[1, 16, 16], 1.0 + i as f64))
            .collect();
        let batch = Tensor::stack_batch(&items).unwrap();
        let d = check_dominance_over_batch(&net, &batch, DominanceMode::PerItem).unwrap();
        assert_eq!(d.input, 1.0);
    }

    #[test]
    fn nyquist_batch_is_never_dominant() {
        let net = zero_branch_net(301);
        // Alternating-sign images: all mass at the Nyquist corner.
        let mut img = Tensor::zeros(&[1, 16, 16]);
        for i in 0..16 {
            for j in 0..16 {
                img.data_mut()[i * 16 + j] = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            }
        }
        let batch = Tensor::stack_batch(&[img.clone(), img.scaled(2.0)]).unwrap();
        let d = check_dominance_over_batch(&net, &batch, DominanceMode::PerItem).unwrap();
        assert_eq!(d.input, 0.0);
    }

    #[test]
    fn zero_branches_contract_perfectly() {
        let net = zero_branch_net(302);
        let batch = low_band_batch(6, 303);
        let c = check_contraction_over_batch(&net, &batch).unwrap();
        for bc in &c {
            assert_eq!(bc.as_written, 1.0);
            assert_eq!(bc.lowpassed_output, 1.0);
            assert!(bc.counted_pairs > 0);
        }
    }

    #[test]
    fn normalized_net_contracts_on_low_band_batch() {
        let net = toy_net(Some(0.9), 304);
        let batch = low_band_batch(8, 305);
        let c = check_contraction_over_batch(&net, &batch).unwrap();
        for bc in &c {
            assert_eq!(bc.as_written, 1.0, "{bc:?}");
            assert_eq!(bc.lowpassed_output, 1.0, "{bc:?}");
        }
    }

    #[test]
    fn report_is_deterministic_and_order_invariant() {
        let net = toy_net(Some(0.9), 306);
        let batch = low_band_batch(6, 307);
        let r1 = run_checks(&net, &batch, 0, DominanceMode::PerItem).unwrap();
        let r2 = run_checks(&net, &batch, 0, DominanceMode::PerItem).unwrap();
        assert_eq!(
            serde_json::to_string(&r1).unwrap(),
            serde_json::to_string(&r2).unwrap()
        );

        // Shuffle the batch: proportions are over unordered pairs and items,
        // so nothing changes.
        let (b, _, _, _) = batch.dims4().unwrap();
        let perm: Vec<usize> = (0..b).rev().collect();
        let shuffled = Tensor::stack_batch(
            &perm
                .iter()
                .map(|&i| batch.batch_item(i).unwrap())
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let r3 = run_checks(&net, &shuffled, 0, DominanceMode::PerItem).unwrap();
        assert_eq!(r1.dominance.input, r3.dominance.input);
        for (a, b) in r1.contraction.iter().zip(&r3.contraction) {
            assert_eq!(a.as_written, b.as_written);
            assert_eq!(a.lowpassed_output, b.lowpassed_output);
        }
    }

    #[test]
    fn lowband_bound_zero_branch_ratio_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(308);
        let spec = ResidualBlockSpec {
            in_channels: 1,
            out_channels: 1,
            stride: 1,
            coeff: None,
        };
        let mut net = Network::new(
            NetworkSpec {
                input_channels: 1,
                input_extent: 16,
                blocks: vec![spec],
                batchnorm_between: false,
                interblock_lowpass: false,
                downsample: BlurKind::Binomial,
                padding: Padding::SameCircular,
            },
            1.0,
            &mut rng,
        )
        .unwrap();
        net.blocks[0].conv1 = Tensor::zeros(net.blocks[0].conv1.shape());
        net.blocks[0].conv2 = Tensor::zeros(net.blocks[0].conv2.shape());
        net.refresh_estimates(10).unwrap();
        let budget = FrequencyBudget::new(16, 4).unwrap();
        let x = Tensor::filled(&[1, 1, 16, 16], 1.0);
        let y = Tensor::filled(&[1, 1, 16, 16], 0.25);
        match check_lowband_bound(&net.blocks[0], budget, &x, &y, BlurKind::Binomial).unwrap() {
            BoundOutcome::Holds { ratio, bound } => {
                assert!((ratio - 1.0).abs() <= 1e-9);
                assert!((bound - 1.0).abs() <= 1e-12);
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn lowband_bound_dc_shift_holds() {
        // A pure DC difference is maximally dominant; the bound must hold for
        // any contractive branch.
        let mut rng = ChaCha8Rng::seed_from_u64(309);
        let spec = NetworkSpec {
            input_channels: 2,
            input_extent: 16,
            blocks: vec![ResidualBlockSpec {
                in_channels: 2,
                out_channels: 2,
                stride: 1,
                coeff: Some(0.9),
            }],
            batchnorm_between: false,
            interblock_lowpass: false,
            downsample: BlurKind::Binomial,
            padding: Padding::SameCircular,
        };
        let mut net = Network::new(spec, 1.5, &mut rng).unwrap();
        net.normalize(200).unwrap();
        let budget = FrequencyBudget::new(16, 4).unwrap();
        let x = Tensor::randn(&[1, 2, 16, 16], &mut rng);
        let y = x.add(&Tensor::filled(&[1, 2, 16, 16], 0.6)).unwrap();
        match check_lowband_bound(&net.blocks[0], budget, &x, &y, BlurKind::Binomial).unwrap() {
            BoundOutcome::Holds { ratio, bound } => {
                assert!(ratio >= bound - 1e-9);
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn precondition_unmet_is_reported_not_failed() {
        let mut rng = ChaCha8Rng::seed_from_u64(310);
        let spec = NetworkSpec {
            input_channels: 1,
            input_extent: 16,
            blocks: vec![ResidualBlockSpec {
                in_channels: 1,
                out_channels: 1,
                stride: 1,
                coeff: Some(0.9),
            }],
            batchnorm_between: false,
            interblock_lowpass: false,
            downsample: BlurKind::Binomial,
            padding: Padding::SameCircular,
        };
        let mut net = Network::new(spec, 1.0, &mut rng).unwrap();
        net.normalize(100).unwrap();
        let budget = FrequencyBudget::new(16, 4).unwrap();
        let x = Tensor::zeros(&[1, 1, 16, 16]);
        // Difference concentrated at the Nyquist corner: not dominant.
        let mut y = Tensor::zeros(&[1, 1, 16, 16]);
        for i in 0..16 {
            for j in 0..16 {
                y.data_mut()[i * 16 + j] = if (i + j) % 2 == 0 { 0.5 } else { -0.5 };
            }
        }
        match check_lowband_bound(&net.blocks[0], budget, &x, &y, BlurKind::Binomial).unwrap() {
            BoundOutcome::PreconditionUnmet { report } => assert!(!report.is_dominant),
            other => panic!("unexpected outcome {other:?}"),
        }
    }
}
