//! Drivers behind the command-line interface: each returns structured
//! results (so tests can assert on them) and writes plot-ready CSV/JSON.

use std::path::Path;

use lowpass_core::analysis::{run_checks, CheckReport, DominanceMode};
use lowpass_core::blocks::{Network, NetworkSpec};
use lowpass_core::collapse::{
    level_set_walk, null_space_walk, summarize_trajectories, Band, SearchAlgorithm, SearchConfig,
    TrajectoryRecord, TrajectorySummary,
};
use lowpass_core::spectral::band::lowpass;
use lowpass_core::spectral::radial::radial_spectrum;
use lowpass_core::spectral::relu_freq::relu_via_frequency;
use lowpass_core::spectral::{dft1_real, dft2, idft2};
use lowpass_core::tensor::io::load_tensor;
use lowpass_core::{CoreError, Result, Tensor};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{generate, ToyDatasetConfig};
use crate::emit;

/// Replicate parallelism, capped by `LOWPASS_LAB_THREADS`.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("LOWPASS_LAB_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            builder = builder.num_threads(n.max(1));
        }
    }
    builder
        .build()
        .map_err(|e| CoreError::InvalidArgument(format!("thread pool: {e}")))
}

// ---------------------------------------------------------------------------
// demo-alias

#[derive(Debug, Serialize)]
pub struct AliasDemo {
    pub n: usize,
    pub mode_freq: usize,
    pub factor: usize,
    /// Centered bin the mode folds onto after plain decimation.
    pub predicted_alias_bin: usize,
    /// Peak bin of the raw-decimated spectrum.
    pub raw_peak_bin: usize,
    /// Peak bin of the filter-then-decimate spectrum (DC when annihilated).
    pub filtered_peak_bin: usize,
    pub filtered_signal_max: f64,
    pub mode_above_cutoff: bool,
}

fn spectrum_mag_1d(signal: &[f64]) -> Vec<f64> {
    dft1_real(signal).iter().map(|c| c.norm()).collect()
}

fn centered_bin_of_peak(mags: &[f64]) -> usize {
    let n = mags.len();
    let (mut best, mut arg) = (f64::NEG_INFINITY, 0usize);
    for (k, m) in mags.iter().enumerate() {
        if *m > best {
            best = *m;
            arg = k;
        }
    }
    // Fold standard index into a nonnegative centered frequency.
    let c = if arg < n.div_ceil(2) { arg } else { n - arg };
    c
}

pub fn demo_alias(n: usize, mode_freq: usize, factor: usize, out: &Path) -> Result<AliasDemo> {
    if factor == 0 || n % factor != 0 {
        return Err(CoreError::InvalidArgument(format!(
            "factor {factor} must divide signal length {n}"
        )));
    }
    let signal: Vec<f64> = (0..n)
        .map(|t| (2.0 * std::f64::consts::PI * (mode_freq * t) as f64 / n as f64).cos())
        .collect();
    let cutoff = n / (2 * factor);

    // Raw decimation.
    let decimated: Vec<f64> = signal.iter().step_by(factor).cloned().collect();

    // Ideal low-pass below the post-decimation Nyquist, then decimate.
    let mut spec = dft1_real(&signal);
    let len = spec.len();
    for (k, c) in spec.iter_mut().enumerate() {
        let centered = if k < len.div_ceil(2) { k as isize } else { k as isize - len as isize };
        if centered.unsigned_abs() >= cutoff {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    let filtered: Vec<f64> = lowpass_core::spectral::idft1(&spec).iter().map(|c| c.re).collect();
    let filtered_decimated: Vec<f64> = filtered.iter().step_by(factor).cloned().collect();

    let raw_spec = spectrum_mag_1d(&decimated);
    let filt_spec = spectrum_mag_1d(&filtered_decimated);

    let small = n / factor;
    let folded_index = mode_freq % small;
    let predicted_alias_bin = folded_index.min(small - folded_index);

    let demo = AliasDemo {
        n,
        mode_freq,
        factor,
        predicted_alias_bin,
        raw_peak_bin: centered_bin_of_peak(&raw_spec),
        filtered_peak_bin: centered_bin_of_peak(&filt_spec),
        filtered_signal_max: filtered_decimated.iter().fold(0.0f64, |a, v| a.max(v.abs())),
        mode_above_cutoff: mode_freq >= cutoff,
    };

    std::fs::create_dir_all(out)?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut push_panel = |variant: &str, panel: &str, values: &[f64]| {
        for (i, v) in values.iter().enumerate() {
            rows.push(vec![
                variant.to_string(),
                panel.to_string(),
                i.to_string(),
                format!("{v:.17e}"),
            ]);
        }
    };
    push_panel("raw", "signal", &signal);
    push_panel("raw", "spectrum", &spectrum_mag_1d(&signal));
    push_panel("raw", "decimated", &decimated);
    push_panel("raw", "decimated_spectrum", &raw_spec);
    push_panel("filtered", "signal", &filtered);
    push_panel("filtered", "spectrum", &spectrum_mag_1d(&filtered));
    push_panel("filtered", "decimated", &filtered_decimated);
    push_panel("filtered", "decimated_spectrum", &filt_spec);
    emit::write_csv(
        &out.join("alias_demo.csv"),
        emit::ALIAS_SCHEMA,
        &["variant", "panel", "index", "value"],
        &rows,
    )?;
    emit::write_json(&out.join("alias_demo.json"), &demo)?;
    Ok(demo)
}

// ---------------------------------------------------------------------------
// verify-relu-fourier

#[derive(Debug, Serialize)]
pub struct ReluFourierReport {
    pub extent: usize,
    /// Relative disagreement between the frequency-domain path and the
    /// spatial-domain spectrum.
    pub spectrum_rel_err: f64,
    /// Relative disagreement after transforming back to image space.
    pub image_rel_err: f64,
    pub pass: bool,
}

pub fn verify_relu_fourier(image: &Tensor, tol: f64) -> Result<ReluFourierReport> {
    let (h, w) = image.last2()?;
    if image.shape().len() != 2 {
        return Err(CoreError::InvalidArgument(
            "relu-fourier verification expects one-plane images".into(),
        ));
    }
    // Zero mean, unit deviation, so rectification is nontrivial.
    let n = (h * w) as f64;
    let mean = image.data().iter().sum::<f64>() / n;
    let var = image.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-12);
    let x = Tensor::from_vec(
        image.shape(),
        image.data().iter().map(|v| (v - mean) / std).collect(),
    )?;

    let rectified = Tensor::from_vec(
        x.shape(),
        x.data().iter().map(|v| v.max(0.0)).collect(),
    )?;
    let z_spatial = dft2(&rectified)?;
    let z_freq = relu_via_frequency(&x)?;

    let denom: f64 = z_spatial.coeffs().iter().map(|c| c.norm()).sum::<f64>().max(1e-12);
    let err: f64 = z_freq
        .coeffs()
        .iter()
        .zip(z_spatial.coeffs())
        .map(|(a, b)| (a - b).norm())
        .sum();
    let spectrum_rel_err = err / denom;

    let back = idft2(&z_freq);
    let image_rel_err = back.dist(&rectified)? / rectified.norm().max(1e-12);

    Ok(ReluFourierReport {
        extent: h,
        spectrum_rel_err,
        image_rel_err,
        pass: spectrum_rel_err <= tol && image_rel_err <= tol,
    })
}

// ---------------------------------------------------------------------------
// check-conditions

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckConditionsConfig {
    pub seeds: usize,
    pub batch_size: usize,
    /// Spectral-norm coefficient for synthetic networks (`null` = none).
    pub coeff: Option<f64>,
    pub channels: usize,
    pub pairwise_dominance: bool,
    pub init_gain: f64,
}

impl Default for CheckConditionsConfig {
    fn default() -> Self {
        CheckConditionsConfig {
            seeds: 5,
            batch_size: 32,
            coeff: Some(0.9),
            channels: 1,
            pairwise_dominance: false,
            init_gain: 1.0,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CellStat {
    pub mean: f64,
    pub stderr: f64,
}

fn cell(values: &[f64]) -> CellStat {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    CellStat {
        mean,
        stderr: (var / n).sqrt(),
    }
}

#[derive(Debug, Serialize)]
pub struct ConditionTable {
    pub coeff: Option<f64>,
    pub seeds: usize,
    pub dominance_input: CellStat,
    pub dominance_blocks: Vec<CellStat>,
    pub contraction_as_written: Vec<CellStat>,
    pub contraction_lowpassed: Vec<CellStat>,
    pub reports: Vec<CheckReport>,
}

/// Runs the condition checks over several seeds (fresh synthetic networks
/// and batches, or a fixed loaded network) and aggregates mean and standard
/// error per table cell.
pub fn check_conditions(
    config: &CheckConditionsConfig,
    network_dir: Option<&Path>,
    base_seed: u64,
    out: &Path,
) -> Result<ConditionTable> {
    let loaded = match network_dir {
        Some(dir) => Some(Network::load(dir)?),
        None => None,
    };
    let mode = if config.pairwise_dominance {
        DominanceMode::PairwiseDifference
    } else {
        DominanceMode::PerItem
    };

    let pool = thread_pool()?;
    let seeds: Vec<u64> = (0..config.seeds as u64).map(|s| base_seed + s).collect();
    let reports: Result<Vec<CheckReport>> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let net = match &loaded {
                    Some(net) => net.clone(),
                    None => {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        let spec = NetworkSpec::toy(config.channels, config.coeff);
                        let mut net = Network::new(spec, config.init_gain, &mut rng)?;
                        net.normalize(200)?;
                        net
                    }
                };
                let data = generate(&ToyDatasetConfig {
                    size: (config.batch_size * 2).max(8),
                    channels: config.channels,
                    seed,
                    ..Default::default()
                })?;
                let batch = Tensor::stack_batch(
                    &(0..config.batch_size.min(data.train_images.dims4()?.0))
                        .map(|i| data.train_images.batch_item(i).unwrap())
                        .collect::<Vec<_>>(),
                )?;
                run_checks(&net, &batch, seed, mode)
            })
            .collect()
    });
    let reports = reports?;

    let blocks = reports[0].contraction.len();
    let collect = |f: &dyn Fn(&CheckReport) -> f64| -> Vec<f64> { reports.iter().map(f).collect() };
    let table = ConditionTable {
        coeff: config.coeff,
        seeds: config.seeds,
        dominance_input: cell(&collect(&|r| r.dominance.input)),
        dominance_blocks: (0..blocks)
            .map(|l| cell(&collect(&move |r: &CheckReport| r.dominance.per_block[l])))
            .collect(),
        contraction_as_written: (0..blocks)
            .map(|l| cell(&collect(&move |r: &CheckReport| r.contraction[l].as_written)))
            .collect(),
        contraction_lowpassed: (0..blocks)
            .map(|l| cell(&collect(&move |r: &CheckReport| r.contraction[l].lowpassed_output)))
            .collect(),
        reports,
    };

    std::fs::create_dir_all(out)?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    let coeff_label = config
        .coeff
        .map(|c| c.to_string())
        .unwrap_or_else(|| "none".to_string());
    let mut push = |condition: &str, layer: String, s: &CellStat| {
        rows.push(vec![
            condition.to_string(),
            coeff_label.clone(),
            layer,
            format!("{:.6}", s.mean),
            format!("{:.6}", s.stderr),
        ]);
    };
    push("dominance", "x".into(), &table.dominance_input);
    for (l, s) in table.dominance_blocks.iter().enumerate() {
        push("dominance", format!("f{}", l + 1), s);
    }
    for (l, s) in table.contraction_as_written.iter().enumerate() {
        push("contraction", format!("f{}", l + 1), s);
    }
    for (l, s) in table.contraction_lowpassed.iter().enumerate() {
        push("contraction-lowpassed", format!("f{}", l + 1), s);
    }
    emit::write_csv(
        &out.join("conditions.csv"),
        emit::CONDITIONS_SCHEMA,
        &["condition", "coeff", "layer", "mean", "stderr"],
        &rows,
    )?;
    emit::write_json(&out.join("conditions.json"), &table)?;
    Ok(table)
}

// ---------------------------------------------------------------------------
// search-collapse

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchCollapseConfig {
    pub n_images: usize,
    pub eta: f64,
    pub n_steps: usize,
    /// Initial perturbation as a fraction of the anchor norm.
    pub eps_rel: f64,
    pub coeff: Option<f64>,
    pub channels: usize,
    pub algorithm: SearchAlgorithm,
    /// Also run on the variant with inter-block (and input) low-pass filters.
    pub include_filtered_variant: bool,
}

impl Default for SearchCollapseConfig {
    fn default() -> Self {
        SearchCollapseConfig {
            n_images: 3,
            eta: 0.01,
            n_steps: 400,
            eps_rel: 1e-3,
            coeff: Some(0.9),
            channels: 1,
            algorithm: SearchAlgorithm::LevelSet,
            include_filtered_variant: true,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CollapseRun {
    pub summaries: Vec<TrajectorySummary>,
    /// `prod_l max(0, 1 - L_l)` of the searched network.
    pub product_lower_bound: f64,
}

pub fn band_label(band: Band) -> &'static str {
    match band {
        Band::All => "all",
        Band::Low => "low",
        Band::High => "high",
    }
}

/// Runs the configured walk for each (variant, band, image) combination.
pub fn search_collapse(
    config: &SearchCollapseConfig,
    network_dir: Option<&Path>,
    base_seed: u64,
    out: &Path,
) -> Result<CollapseRun> {
    let mut base = match network_dir {
        Some(dir) => Network::load(dir)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
            let mut spec = NetworkSpec::toy(config.channels, config.coeff);
            spec.downsample = lowpass_core::BlurKind::Ideal;
            spec.batchnorm_between = false;
            let mut net = Network::new(spec, 1.5, &mut rng)?;
            net.normalize(200)?;
            net
        }
    };
    base.refresh_estimates(200)?;
    let budget = base.spec.final_budget()?;

    let data = generate(&ToyDatasetConfig {
        size: (config.n_images * 2).max(8),
        channels: config.channels,
        seed: base_seed,
        ..Default::default()
    })?;

    let variants: Vec<(String, Network)> = {
        let mut v = vec![("standard".to_string(), base.with_interblock_lowpass(false))];
        if config.include_filtered_variant {
            v.push(("filtered".to_string(), base.with_interblock_lowpass(true)));
        }
        v
    };

    std::fs::create_dir_all(out)?;
    let pool = thread_pool()?;
    let mut summaries = Vec::new();
    for (variant, net) in &variants {
        for band in [Band::All, Band::Low, Band::High] {
            let tasks: Vec<(usize, Tensor)> = (0..config.n_images)
                .map(|i| (i, data.train_images.batch_item(i).unwrap()))
                .collect();
            let trajectories: Result<Vec<TrajectoryRecord>> = pool.install(|| {
                tasks
                    .par_iter()
                    .map(|(i, item)| {
                        let x0 = item.reshaped(&[1, item.shape()[0], item.shape()[1], item.shape()[2]])?;
                        let mut sc = SearchConfig::new(config.eps_rel * x0.norm().max(1e-9));
                        sc.eta = config.eta;
                        sc.n_steps = config.n_steps;
                        sc.band = band;
                        sc.budget = Some(budget);
                        sc.seed = base_seed
                            .wrapping_add(*i as u64)
                            .wrapping_add(band_label(band).len() as u64 * 1000);
                        match config.algorithm {
                            SearchAlgorithm::LevelSet => level_set_walk(net, &x0, &sc),
                            SearchAlgorithm::NullSpace => null_space_walk(net, &x0, &sc),
                        }
                    })
                    .collect()
            });
            let trajectories = trajectories?;
            let label = format!("{variant}-{}", band_label(band));
            for (i, t) in trajectories.iter().enumerate() {
                emit::write_trajectory_csv(&out.join(format!("trajectory_{label}_{i}.csv")), t)?;
            }
            summaries.push(summarize_trajectories(&label, &trajectories));
        }
    }

    let run = CollapseRun {
        summaries,
        product_lower_bound: base.product_lower_bound(),
    };
    emit::write_json(&out.join("collapse_summary.json"), &run)?;
    Ok(run)
}

// ---------------------------------------------------------------------------
// spectrum

pub fn spectrum_cmd(input: &Path, out: &Path) -> Result<Vec<f64>> {
    let image = load_tensor(input)?;
    let bins = radial_spectrum(&image)?;
    std::fs::create_dir_all(out)?;
    emit::write_radial_csv(&out.join("radial_spectrum.csv"), &bins)?;
    Ok(bins)
}

// ---------------------------------------------------------------------------
// shared helpers

/// Synthetic single-plane image for verify-relu-fourier without an input file.
pub fn synthetic_image(extent: usize, seed: u64) -> Result<Tensor> {
    let data = generate(&ToyDatasetConfig {
        size: 8,
        channels: 1,
        extent,
        seed,
        ..Default::default()
    })?;
    let item = data.train_images.batch_item(0)?;
    item.reshaped(&[extent, extent])
}

/// Low-band content fraction of an image set; used by tests and docs.
pub fn low_band_fraction(batch: &Tensor, u: usize) -> Result<f64> {
    let low = lowpass(batch, u)?;
    Ok(low.norm() / batch.norm().max(1e-12))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alias_demo_below_cutoff_keeps_frequency() {
        let dir = tempfile::tempdir().unwrap();
        let d = demo_alias(64, 5, 2, dir.path()).unwrap();
        assert!(!d.mode_above_cutoff);
        assert_eq!(d.filtered_peak_bin, 5);
        assert_eq!(d.raw_peak_bin, 5);
    }

    #[test]
    fn alias_demo_above_cutoff_folds_and_filters() {
        let dir = tempfile::tempdir().unwrap();
        // Mode 23 on a 64-grid decimated by 2 folds onto |23 mod 32| -> 23
        // of 32 -> centered bin 9.
        let d = demo_alias(64, 23, 2, dir.path()).unwrap();
        assert!(d.mode_above_cutoff);
        assert_eq!(d.predicted_alias_bin, 9);
        assert_eq!(d.raw_peak_bin, 9);
        assert!(d.filtered_signal_max <= 1e-9, "{}", d.filtered_signal_max);
    }

    #[test]
    fn relu_fourier_verification_passes() {
        let img = synthetic_image(8, 3).unwrap();
        let r = verify_relu_fourier(&img, 1e-8).unwrap();
        assert!(r.pass, "{r:?}");
    }
}
