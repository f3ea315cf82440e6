//! Synthetic two-class image data: random mixtures of low-band Fourier modes
//! with a sprinkle of high-band noise.
//!
//! Labels come from a fixed linear rule on the low-mode amplitudes, and every
//! image is paired with its negation (which flips the label), so classes are
//! exactly balanced and the task is linearly solvable from content that
//! survives downsampling.

use lowpass_core::{CoreError, Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyDatasetConfig {
    /// Total image count (rounded down to even); split across train/test.
    pub size: usize,
    pub channels: usize,
    pub extent: usize,
    /// Amplitude of the high-band noise modes.
    pub high_noise: f64,
    /// Minimum label score as a fraction of the score's standard deviation;
    /// pairs closer to the decision boundary are resampled so the classes
    /// are separated by a margin.
    pub margin: f64,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for ToyDatasetConfig {
    fn default() -> Self {
        ToyDatasetConfig {
            size: 256,
            channels: 1,
            extent: 16,
            high_noise: 0.05,
            margin: 0.5,
            train_fraction: 0.75,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyDataset {
    pub train_images: Tensor,
    pub train_labels: Vec<usize>,
    pub test_images: Tensor,
    pub test_labels: Vec<usize>,
}

/// Low-mode lattice used both for synthesis and for the label rule.
fn low_modes(max_freq: isize) -> Vec<(isize, isize)> {
    let mut modes = Vec::new();
    for ky in 0..=max_freq {
        for kx in -max_freq..=max_freq {
            // One representative per +/- pair; (0, kx<0) duplicates (0, -kx).
            if ky == 0 && kx < 0 {
                continue;
            }
            modes.push((ky, kx));
        }
    }
    modes
}

fn render(
    extent: usize,
    modes: &[(isize, isize)],
    cos_amp: &[f64],
    sin_amp: &[f64],
) -> Tensor {
    let n = extent;
    let mut img = Tensor::zeros(&[n, n]);
    for (m, (ky, kx)) in modes.iter().enumerate() {
        for y in 0..n {
            for x in 0..n {
                let ang = 2.0 * std::f64::consts::PI
                    * ((*ky * y as isize + *kx * x as isize) as f64)
                    / n as f64;
                img.data_mut()[y * n + x] += cos_amp[m] * ang.cos() + sin_amp[m] * ang.sin();
            }
        }
    }
    img
}

pub fn generate(config: &ToyDatasetConfig) -> Result<ToyDataset> {
    if config.size < 8 {
        return Err(CoreError::InvalidArgument("dataset needs size >= 8".into()));
    }
    let n = config.extent;
    let pairs = config.size / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Mode lattice: everything up to |k| <= 2 plus a few high-band slots.
    let smooth = low_modes(2);
    let high: Vec<(isize, isize)> = vec![
        (0, (n / 2 - 1) as isize),
        ((n / 2 - 1) as isize, 0),
        ((n / 2 - 2) as isize, (n / 2 - 1) as isize),
    ];
    // Amplitude decay keeps the spectrum concentrated near DC.
    let weights: Vec<f64> = smooth
        .iter()
        .map(|(ky, kx)| 1.0 / (1.0 + (ky * ky + kx * kx) as f64))
        .collect();

    // Fixed linear label rule on the |k| <= 1 amplitudes, drawn once.
    let mut rule_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6c6f7770);
    let rule: Vec<(usize, f64, f64)> = smooth
        .iter()
        .enumerate()
        .filter(|(_, (ky, kx))| ky.abs() <= 1 && kx.abs() <= 1)
        .map(|(m, _)| (m, rule_rng.gen_range(-1.0..1.0), rule_rng.gen_range(-1.0..1.0)))
        .collect();

    // Analytic deviation of the label score under the amplitude law.
    let score_std = rule
        .iter()
        .map(|(m, wc, ws)| weights[*m] * weights[*m] * (wc * wc + ws * ws))
        .sum::<f64>()
        .sqrt()
        .max(1e-9);
    let threshold = config.margin * score_std;

    let mut images = Vec::with_capacity(pairs * 2);
    let mut labels = Vec::with_capacity(pairs * 2);
    let mut attempts = 0usize;
    while images.len() < pairs * 2 {
        attempts += 1;
        if attempts > pairs * 1000 {
            return Err(CoreError::InvalidArgument(
                "margin too demanding for the amplitude distribution".into(),
            ));
        }
        let mut channels = Vec::with_capacity(config.channels);
        let mut score = 0.0;
        for c in 0..config.channels {
            let cos_amp: Vec<f64> = weights
                .iter()
                .map(|w| w * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let sin_amp: Vec<f64> = weights
                .iter()
                .map(|w| w * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let mut plane = render(n, &smooth, &cos_amp, &sin_amp);
            // High-band noise.
            let hc: Vec<f64> = high.iter().map(|_| config.high_noise * rng.gen_range(-1.0f64..1.0)).collect();
            let hs: Vec<f64> = high.iter().map(|_| config.high_noise * rng.gen_range(-1.0f64..1.0)).collect();
            plane = plane.add(&render(n, &high, &hc, &hs))?;
            if c == 0 {
                for (m, wc, ws) in &rule {
                    score += wc * cos_amp[*m] + ws * sin_amp[*m];
                }
            }
            channels.push(plane.reshaped(&[1, n, n])?);
        }
        if score.abs() < threshold {
            continue; // too close to the boundary; draw a fresh pair
        }
        let img = concat_channels(&channels)?;
        let label = usize::from(score > 0.0);
        // The negated twin flips the (strictly linear) rule's sign.
        let twin = img.scaled(-1.0);
        images.push(img);
        labels.push(label);
        images.push(twin);
        labels.push(1 - label);
    }

    // Deterministic shuffle so train/test splits mix pairs.
    let mut order: Vec<usize> = (0..images.len()).collect();
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let n_train = ((images.len() as f64) * config.train_fraction).round() as usize;
    let take = |idx: &[usize]| -> Result<(Tensor, Vec<usize>)> {
        let imgs: Vec<Tensor> = idx.iter().map(|&i| images[i].clone()).collect();
        let labs: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        Ok((Tensor::stack_batch(&imgs)?, labs))
    };
    let (train_images, train_labels) = take(&order[..n_train])?;
    let (test_images, test_labels) = take(&order[n_train..])?;
    Ok(ToyDataset {
        train_images,
        train_labels,
        test_images,
        test_labels,
    })
}

fn concat_channels(planes: &[Tensor]) -> Result<Tensor> {
    let (_, h, w) = match planes[0].shape() {
        [c, h, w] => (*c, *h, *w),
        _ => return Err(CoreError::InvalidArgument("expected rank-3 planes".into())),
    };
    let mut data = Vec::new();
    for p in planes {
        data.extend_from_slice(p.data());
    }
    Tensor::from_vec(&[planes.len(), h, w], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classes_are_exactly_balanced() {
        let ds = generate(&ToyDatasetConfig::default()).unwrap();
        let mut all = ds.train_labels.clone();
        all.extend_from_slice(&ds.test_labels);
        let ones = all.iter().filter(|&&l| l == 1).count();
        let frac = ones as f64 / all.len() as f64;
        assert!((frac - 0.5).abs() <= 0.05, "class fraction {frac}");
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&ToyDatasetConfig::default()).unwrap();
        let b = generate(&ToyDatasetConfig::default()).unwrap();
        assert_eq!(a.train_labels, b.train_labels);
        for (x, y) in a.train_images.data().iter().zip(b.train_images.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn images_are_mostly_low_band() {
        let ds = generate(&ToyDatasetConfig::default()).unwrap();
        let item = ds.train_images.batch_item(0).unwrap();
        let low = lowpass_core::spectral::band::lowpass(&item, 2).unwrap();
        assert!(low.norm() >= 0.9 * item.norm(), "low-band energy too small");
    }
}
