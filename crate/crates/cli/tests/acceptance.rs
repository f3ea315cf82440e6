//! Acceptance suite: one test per criterion, every tolerance pinned in code,
//! one `[criterion NN] PASS` line per criterion (run with `--nocapture` to
//! see them stream).

use std::time::Instant;

use lowpass_core::analysis::{check_lowband_bound, BoundOutcome};
use lowpass_core::blocks::{Network, NetworkSpec, ResidualBlockSpec};
use lowpass_core::blocks::spectral_norm::{
    apply_spectral_norm, conv_operator_matrix, estimate_sigma, SpectralNormState,
};
use lowpass_core::collapse::{level_set_walk, null_space_walk, Band, SearchConfig};
use lowpass_core::spectral::band::{
    cosine_mode, decimate, lowpass, reconstruct_through_decimation, FrequencyBudget,
};
use lowpass_core::spectral::dominance::{convolve_measures, interval_mass};
use lowpass_core::spectral::relu_freq::relu_via_frequency;
use lowpass_core::spectral::{dft2, Spectrum};
use lowpass_core::tensor::conv::conv2d_raw;
use lowpass_core::tensor::graph::{DifferentiableMap, Graph, NodeId};
use lowpass_core::{BlurKind, Padding, Result, Tensor};
use lowpass_lab::dataset::ToyDatasetConfig;
use lowpass_lab::train::{train_toy, TrainConfig};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pass(name: &str, t0: Instant, detail: &str) {
    println!("[{name}] PASS ({:.2?}): {detail}", t0.elapsed());
}

#[test]
fn criterion_01_strided_conv_equals_decimated_dense_conv() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let padding = if case % 2 == 0 { Padding::SameCircular } else { Padding::SameZero };
        let x = Tensor::randn(&[1, 2, 8, 8], &mut rng);
        let k = Tensor::randn(&[3, 2, 3, 3], &mut rng);
        let strided = conv2d_raw(&x, &k, 2, padding).unwrap();
        let dense_then_dec = decimate(&conv2d_raw(&x, &k, 1, padding).unwrap(), 2).unwrap();
        let err = strided
            .data()
            .iter()
            .zip(dense_then_dec.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        worst = worst.max(err);
        assert!(err <= 1e-12, "case {case}: max abs deviation {err}");
    }
    pass("criterion 01", t0, &format!("100 cases, worst deviation {worst:.2e} <= 1e-12"));
}

#[test]
fn criterion_02_dft_matches_brute_force_and_parseval() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let n = if case % 2 == 0 { 4 } else { 8 };
        let img = Tensor::randn(&[n, n], &mut rng);
        let spec = dft2(&img).unwrap();
        // O(N^4) quadruple-loop oracle.
        for ky in 0..n {
            for kx in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for y in 0..n {
                    for x in 0..n {
                        let ang = -2.0 * std::f64::consts::PI
                            * ((ky * y) as f64 / n as f64 + (kx * x) as f64 / n as f64);
                        acc += img.data()[y * n + x] * Complex64::new(ang.cos(), ang.sin());
                    }
                }
                let err = (spec.get(ky, kx) - acc).norm();
                worst = worst.max(err);
                assert!(err <= 1e-9, "n={n} bin ({ky},{kx}) error {err}");
            }
        }
    }
    for _ in 0..100 {
        let img = Tensor::randn(&[8, 8], &mut rng);
        let spec = dft2(&img).unwrap();
        let space: f64 = img.data().iter().map(|v| v * v).sum();
        let freq = spec.total_power() / 64.0;
        assert!((space - freq).abs() <= 1e-9 * space.max(1.0));
    }
    pass("criterion 02", t0, &format!("oracle worst {worst:.2e} <= 1e-9; parseval on 100 cases"));
}

#[test]
fn criterion_03_relu_fourier_identity() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let n = if case % 2 == 0 { 8 } else { 16 };
        let mut x = Tensor::randn(&[n, n], &mut rng);
        let mean = x.data().iter().sum::<f64>() / (n * n) as f64;
        let std = (x.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (n * n) as f64)
            .sqrt();
        for v in x.data_mut() {
            *v = (*v - mean) / std;
        }
        let freq_path = relu_via_frequency(&x).unwrap();
        let spatial: Vec<f64> = x.data().iter().map(|&v| v.max(0.0)).collect();
        let oracle = dft2(&Tensor::from_vec(&[n, n], spatial).unwrap()).unwrap();
        let denom: f64 = oracle.coeffs().iter().map(|c| c.norm()).sum::<f64>().max(1e-12);
        let err: f64 = freq_path
            .coeffs()
            .iter()
            .zip(oracle.coeffs())
            .map(|(a, b)| (a - b).norm())
            .sum::<f64>()
            / denom;
        worst = worst.max(err);
        assert!(err <= 1e-8, "case {case} (n={n}): relative error {err}");
    }
    pass("criterion 03", t0, &format!("100 images, worst relative error {worst:.2e} <= 1e-8"));
}

#[test]
fn criterion_04_convolved_measures_interval_bound() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 16;
    let mut violations = 0usize;
    for _ in 0..1000 {
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mut g: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let gsum: f64 = g.iter().sum();
        let mass: f64 = rng.gen_range(0.1..1.0);
        for v in &mut g {
            *v *= mass / gsum;
        }
        let fg = convolve_measures(&f, &g).unwrap();
        for len in 1..=n {
            let dominant = (0..n)
                .map(|s| interval_mass(&f, s, len))
                .fold(f64::NEG_INFINITY, f64::max);
            for start in 0..n {
                if interval_mass(&fg, start, len) > dominant + 1e-12 {
                    violations += 1;
                }
            }
        }
    }
    assert_eq!(violations, 0);
    pass("criterion 04", t0, "1000 measure pairs, exhaustive intervals, zero violations");
}

/// A c = 0.9 two-convolution residual block on a 16x16 grid.
fn contraction_block(seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
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
    net
}

#[test]
fn criterion_05_lowband_contraction_and_lower_bound() {
    let t0 = Instant::now();
    let net = contraction_block(5);
    let block = &net.blocks[0];
    let l = block.branch_lipschitz();
    assert!(l < 1.0, "branch bound {l}");
    let budget = FrequencyBudget::new(16, 4).unwrap();
    let u = budget.u;

    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let mut satisfied = 0usize;
    for case in 0..500 {
        let x = Tensor::randn(&[1, 2, 16, 16], &mut rng);
        // Band-limited difference: low-band dominant by construction.
        let v = lowpass(&Tensor::randn(&[1, 2, 16, 16], &mut rng), u).unwrap();
        let y = x.add(&v).unwrap();

        let hx = lowpass(&x, u).unwrap();
        let hy = lowpass(&y, u).unwrap();
        let din = hx.dist(&hy).unwrap();
        let dg = block.branch(&hx).unwrap().dist(&block.branch(&hy).unwrap()).unwrap();
        if dg <= din + 1e-12 {
            satisfied += 1;
        }

        match check_lowband_bound(block, budget, &x, &y, BlurKind::Binomial).unwrap() {
            BoundOutcome::Holds { .. } => {}
            other => panic!("case {case}: lower bound outcome {other:?}"),
        }
    }
    assert_eq!(satisfied, 500, "contraction proportion must be exactly 1.0");
    pass(
        "criterion 05",
        t0,
        &format!("500 pairs: contraction 500/500, (1-L) bound held with L = {l:.3}"),
    );
}

#[test]
fn criterion_06_residual_sandwich_and_inversion() {
    let t0 = Instant::now();
    let net = contraction_block(6);
    let block = &net.blocks[0];
    let l = block.branch_lipschitz();
    assert!(l < 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    for _ in 0..1000 {
        let x = Tensor::randn(&[1, 2, 16, 16], &mut rng);
        let y = Tensor::randn(&[1, 2, 16, 16], &mut rng);
        let d_in = x.dist(&y).unwrap();
        let d_out = block
            .forward(&x, BlurKind::Binomial)
            .unwrap()
            .dist(&block.forward(&y, BlurKind::Binomial).unwrap())
            .unwrap();
        assert!(
            d_out >= d_in / (1.0 + l) * (1.0 - 1e-9) && d_out <= d_in * (1.0 + l) * (1.0 + 1e-9),
            "ratio {} outside sandwich for L {l}",
            d_out / d_in
        );
    }
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let x = Tensor::randn(&[1, 2, 16, 16], &mut rng);
        let y = block.forward(&x, BlurKind::Binomial).unwrap();
        let rec = block.invert(&y, 100, 0.0).unwrap();
        let err = rec.dist(&x).unwrap();
        worst = worst.max(err);
        assert!(err <= 1e-6, "inversion error {err}");
    }
    pass(
        "criterion 06",
        t0,
        &format!("1000 sandwich pairs (L = {l:.3}); 50 inversions, worst error {worst:.2e} <= 1e-6"),
    );
}

#[test]
fn criterion_07_spectral_norm_matches_dense_svd() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let shape = [1usize, 2, 8, 8];
    let mut worst_rel: f64 = 0.0;
    for case in 0..20 {
        let mut k = Tensor::randn(&[2, 2, 3, 3], &mut rng);
        let mut state = SpectralNormState::new(&shape, &mut rng);
        let sigma = estimate_sigma(&k, &mut state, Padding::SameCircular, 200).unwrap();
        let dense = conv_operator_matrix(&k, &shape, Padding::SameCircular).unwrap();
        let top = dense.svd(false, false).singular_values.max();
        let rel = (sigma - top).abs() / top;
        worst_rel = worst_rel.max(rel);
        assert!(rel <= 1e-3, "case {case}: sigma {sigma} vs svd {top} (rel {rel})");

        apply_spectral_norm(&mut k, &mut state, Some(0.9));
        let mut fresh = SpectralNormState::new(&shape, &mut rng);
        let after = estimate_sigma(&k, &mut fresh, Padding::SameCircular, 200).unwrap();
        assert!(after <= 0.9 * 1.01, "case {case}: post-normalization sigma {after}");
    }
    pass("criterion 07", t0, &format!("20 kernels, worst svd mismatch {worst_rel:.2e} <= 1e-3"));
}

struct RowMap {
    w: Tensor, // [n, 1]
}

impl DifferentiableMap for RowMap {
    fn input_shape(&self) -> Vec<usize> {
        vec![1, self.w.shape()[0]]
    }
    fn apply(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let w = g.leaf(self.w.clone(), false);
        g.linear(x, w, None)
    }
}

struct IdentityMap {
    dim: usize,
}

impl DifferentiableMap for IdentityMap {
    fn input_shape(&self) -> Vec<usize> {
        vec![self.dim]
    }
    fn apply(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        Ok(g.scale(x, 1.0))
    }
}

#[test]
fn criterion_08_level_set_walk_linear_and_identity_oracles() {
    let t0 = Instant::now();
    // f(x) = <a, x> on R^2 with a known null direction. Directions are kept
    // in the half-space of that null direction so steps accumulate.
    let a = Tensor::from_vec(&[2, 1], vec![3.0, 4.0]).unwrap();
    let a_norm = 5.0;
    let map = RowMap { w: a };
    let x0 = Tensor::from_vec(&[1, 2], vec![0.2, -0.1]).unwrap();
    let null_dir = Tensor::from_vec(&[1, 2], vec![-0.8, 0.6]).unwrap();
    let mut config = SearchConfig::new(1e-3);
    config.eta = 0.01;
    config.n_steps = 1000;
    config.seed = 8;
    config.non_cancel_reference = Some(null_dir);
    let walk = level_set_walk(&map, &x0, &config).unwrap();
    let travelled = *walk.input_dist.last().unwrap();
    let drift = *walk.feat_dist.last().unwrap();
    assert!(travelled >= 1.0, "travelled only {travelled}");
    assert!(
        drift <= 0.05 * travelled * a_norm,
        "feature drift {drift} vs budget {}",
        0.05 * travelled * a_norm
    );

    // Identity-map control in the regime eps_init >> eta where the per-step
    // radial drift eta^2/(2 eps) keeps the stated budget valid.
    let mut rng = ChaCha8Rng::seed_from_u64(80);
    let xi = Tensor::randn(&[64], &mut rng);
    let eps = 1e-3 * xi.norm();
    let mut control = SearchConfig::new(eps);
    control.eta = eps / 500.0;
    control.n_steps = 1000;
    control.seed = 81;
    let idwalk = level_set_walk(&IdentityMap { dim: 64 }, &xi, &control).unwrap();
    let max_dist = idwalk.input_dist.iter().cloned().fold(0.0f64, f64::max);
    let budget = 2.0 * eps + control.n_steps as f64 * control.eta * 1e-3;
    assert!(max_dist <= budget, "identity drift {max_dist} > {budget}");
    pass(
        "criterion 08",
        t0,
        &format!(
            "linear: travelled {travelled:.2} >= 1.0, drift {drift:.2e}; identity: {max_dist:.3e} <= {budget:.3e}"
        ),
    );
}

struct TwoConvSmoothMap {
    k1: Tensor,
    k2: Tensor,
}

impl DifferentiableMap for TwoConvSmoothMap {
    fn input_shape(&self) -> Vec<usize> {
        vec![1, 1, 6, 6]
    }
    fn apply(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let k1 = g.leaf(self.k1.clone(), false);
        let k2 = g.leaf(self.k2.clone(), false);
        let c1 = g.conv2d(x, k1, 1, Padding::SameCircular)?;
        let sq = g.square(c1);
        let c2 = g.conv2d(sq, k2, 1, Padding::SameCircular)?;
        g.decimate(c2, 3)
    }
}

#[test]
fn criterion_09_null_space_walk_exactness_and_drift_scaling() {
    let t0 = Instant::now();
    // Linear map: steps stay in the exact kernel.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let w = Tensor::randn(&[8, 3], &mut rng);
    let map = RowMapWide { w };
    let x0 = Tensor::randn(&[1, 8], &mut rng);
    let mut config = SearchConfig::new(1e-3);
    config.eta = 0.05;
    config.n_steps = 100;
    config.seed = 90;
    let walk = null_space_walk(&map, &x0, &config).unwrap();
    let drift = *walk.feat_dist.last().unwrap();
    assert!(drift <= 1e-9, "linear-map output drift {drift}");
    assert!(*walk.input_dist.last().unwrap() > 0.05);

    // Smooth two-convolution net: halving eta and doubling n halves the
    // second-order drift; the seed-averaged ratio must sit in [1.5, 3].
    let mut ratios = Vec::new();
    for seed in 0..8u64 {
        let mut srng = ChaCha8Rng::seed_from_u64(900 + seed);
        let map = TwoConvSmoothMap {
            k1: Tensor::randn(&[2, 1, 3, 3], &mut srng).scaled(0.5),
            k2: Tensor::randn(&[2, 2, 3, 3], &mut srng).scaled(0.5),
        };
        let x0 = Tensor::randn(&[1, 1, 6, 6], &mut srng);
        let run = |eta: f64, n: usize, s: u64| {
            let mut sc = SearchConfig::new(1e-3);
            sc.eta = eta;
            sc.n_steps = n;
            sc.seed = s;
            null_space_walk(&map, &x0, &sc).unwrap()
        };
        let coarse = run(0.02, 150, seed);
        let fine = run(0.01, 300, seed + 100);
        ratios.push(coarse.feat_dist.last().unwrap() / fine.feat_dist.last().unwrap());
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!(
        (1.5..=3.0).contains(&mean),
        "drift ratio {mean} outside [1.5, 3] (per-seed {ratios:?})"
    );
    pass(
        "criterion 09",
        t0,
        &format!("linear drift {drift:.2e} <= 1e-9; scaling ratio {mean:.2} in [1.5, 3]"),
    );
}

struct RowMapWide {
    w: Tensor, // [n, m]
}

impl DifferentiableMap for RowMapWide {
    fn input_shape(&self) -> Vec<usize> {
        vec![1, self.w.shape()[0]]
    }
    fn apply(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let w = g.leaf(self.w.clone(), false);
        g.linear(x, w, None)
    }
}

#[test]
fn criterion_10_filtered_network_band_separation() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut spec = NetworkSpec::toy(1, Some(0.9));
    spec.downsample = BlurKind::Ideal;
    spec.batchnorm_between = false;
    spec.interblock_lowpass = true;
    let mut net = Network::new(spec, 1.5, &mut rng).unwrap();
    net.normalize(200).unwrap();
    net.refresh_estimates(200).unwrap();
    let bound_factor = net.product_lower_bound();
    assert!(bound_factor > 0.0);
    let budget = net.spec.final_budget().unwrap();

    let data = lowpass_lab::dataset::generate(&ToyDatasetConfig {
        size: 8,
        seed: 100,
        ..Default::default()
    })
    .unwrap();

    let mut worst_margin = f64::INFINITY;
    let mut worst_ratio: f64 = 0.0;
    for img in 0..3 {
        let x0 = data
            .train_images
            .batch_item(img)
            .unwrap()
            .reshaped(&[1, 1, 16, 16])
            .unwrap();
        let run = |band: Band, seed: u64| {
            let mut sc = SearchConfig::new(1e-3 * x0.norm());
            sc.eta = 0.01;
            sc.n_steps = 400;
            sc.band = band;
            sc.budget = Some(budget);
            sc.seed = seed;
            level_set_walk(&net, &x0, &sc).unwrap()
        };
        let low = run(Band::Low, 1000 + img as u64);
        let high = run(Band::High, 2000 + img as u64);

        // The product lower bound must hold at every recorded step.
        for k in 0..low.input_dist.len() {
            let lhs = low.feat_dist[k];
            let rhs = bound_factor * low.low_dist[k];
            assert!(
                lhs >= rhs * (1.0 - 1e-9),
                "image {img} step {k}: {lhs} < bound {rhs}"
            );
            if rhs > 0.0 {
                worst_margin = worst_margin.min(lhs / rhs);
            }
        }

        // Matched input distance: high-band searches collapse at least 10x
        // harder than low-band searches.
        let target = 0.9
            * low
                .input_dist
                .last()
                .unwrap()
                .min(*high.input_dist.last().unwrap());
        let at = |t: &lowpass_core::collapse::TrajectoryRecord| {
            let k = t
                .input_dist
                .iter()
                .position(|d| *d >= target)
                .unwrap_or(t.input_dist.len() - 1);
            t.feat_dist[k]
        };
        let (low_feat, high_feat) = (at(&low), at(&high));
        let ratio = high_feat / low_feat.max(1e-300);
        worst_ratio = worst_ratio.max(ratio);
        assert!(
            high_feat <= 0.1 * low_feat,
            "image {img}: high-band {high_feat} vs low-band {low_feat}"
        );
    }
    pass(
        "criterion 10",
        t0,
        &format!(
            "bound factor {bound_factor:.2e}, min margin {worst_margin:.1}x, band ratio <= {worst_ratio:.2e}"
        ),
    );
}

#[test]
fn criterion_11_training_contraction_throughout_and_trend() {
    let t0 = Instant::now();

    // Constrained models obey the contraction check at every checkpoint.
    let mut accs = Vec::new();
    for seed in 0..5u64 {
        let config = TrainConfig {
            epochs: 24,
            batch_size: 32,
            learning_rate: 0.1,
            coeff: Some(0.9),
            seed,
            init_gain: 1.0,
            check_every: 2,
            dataset: ToyDatasetConfig {
                size: 512,
                margin: 0.6,
                ..Default::default()
            },
            ..Default::default()
        };
        let out = train_toy(&config).unwrap();
        for check in &out.checks {
            for (l, c) in check.report.contraction.iter().enumerate() {
                assert_eq!(
                    c.as_written, 1.0,
                    "seed {seed} epoch {} block {}: proportion {}",
                    check.epoch, l, c.as_written
                );
                assert_eq!(c.lowpassed_output, 1.0);
            }
        }
        assert!(
            out.summary.test_accuracy >= 0.9,
            "seed {seed}: test accuracy {}",
            out.summary.test_accuracy
        );
        accs.push(out.summary.test_accuracy);
    }

    // Unregularized models start in violation and drift toward satisfying
    // the check: block-mean proportions must be non-decreasing from the
    // first post-training checkpoint to the last on a majority of blocks,
    // with at least one strict violation observed along the way.
    let blocks = 4;
    let mut first_means = vec![0.0; blocks];
    let mut last_means = vec![0.0; blocks];
    let mut any_violation = false;
    for seed in 0..5u64 {
        let config = TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.02,
            coeff: None,
            seed,
            init_gain: 2.0,
            check_every: 1,
            dataset: ToyDatasetConfig {
                size: 512,
                margin: 0.6,
                ..Default::default()
            },
            ..Default::default()
        };
        let out = train_toy(&config).unwrap();
        // checks[0] is the initialization snapshot; the trend is measured
        // from the first checkpoint produced by training.
        let first = &out.checks[1].report.contraction;
        let last = &out.checks.last().unwrap().report.contraction;
        for l in 0..blocks {
            first_means[l] += first[l].as_written / 5.0;
            last_means[l] += last[l].as_written / 5.0;
            if out
                .checks
                .iter()
                .any(|c| c.report.contraction[l].as_written < 1.0)
            {
                any_violation = true;
            }
        }
    }
    let non_decreasing = (0..blocks)
        .filter(|&l| last_means[l] >= first_means[l] - 1e-9)
        .count();
    assert!(any_violation, "expected violations in unregularized training");
    assert!(
        non_decreasing * 2 > blocks,
        "trend non-decreasing on {non_decreasing}/{blocks} blocks (first {first_means:?}, last {last_means:?})"
    );
    pass(
        "criterion 11",
        t0,
        &format!(
            "c=0.9: 5 seeds all checkpoints 1.0, accuracies {accs:?}; unregularized trend {non_decreasing}/{blocks} blocks up"
        ),
    );
}

#[test]
fn criterion_12_nyquist_reconstruction_and_alias_folds() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    for &(n, s) in &[(16usize, 2usize), (16, 4), (8, 2)] {
        let u = n / (2 * s) - 1;
        for _ in 0..10 {
            let banded = lowpass(&Tensor::randn(&[n, n], &mut rng), u).unwrap();
            let rec = reconstruct_through_decimation(&banded, s, u).unwrap();
            let err = banded
                .data()
                .iter()
                .zip(rec.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            worst = worst.max(err);
            assert!(err <= 1e-9, "n={n} s={s}: reconstruction error {err}");
        }
    }
    // Every pure mode folds to the analytically predicted alias.
    let (n, s) = (16usize, 2usize);
    for k in 0..n {
        let dec = decimate(&cosine_mode(n, 0, k), s).unwrap();
        let predicted = cosine_mode(n / s, 0, k % (n / s));
        let err = dec
            .data()
            .iter()
            .zip(predicted.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err <= 1e-10, "mode {k}: fold mismatch {err}");
    }
    let _ = Spectrum::centered_freq(0, 2);
    pass(
        "criterion 12",
        t0,
        &format!("reconstruction worst {worst:.2e} <= 1e-9; all 16 mode folds matched"),
    );
}
