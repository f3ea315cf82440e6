//! Toy training: the four-block laboratory network plus a linear head,
//! optimized with momentum SGD and per-step soft spectral normalization,
//! with contraction/dominance checks recorded at epoch checkpoints.

use std::path::Path;

use lowpass_core::analysis::{run_checks, CheckReport, DominanceMode};
use lowpass_core::blocks::{Network, NetworkSpec};
use lowpass_core::tensor::graph::Graph;
use lowpass_core::tensor::io::{load_tensor, save_tensor};
use lowpass_core::{CoreError, Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{generate, ToyDatasetConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Spectral-norm coefficient per branch convolution; `null` disables it.
    pub coeff: Option<f64>,
    pub seed: u64,
    /// Record condition checks every this many epochs.
    pub check_every: usize,
    /// Power-iteration refreshes folded into each optimizer step.
    pub power_iters_per_step: usize,
    pub interblock_lowpass: bool,
    /// Multiplier on the default weight-initialization scale.
    pub init_gain: f64,
    pub dataset: ToyDatasetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            learning_rate: 0.1,
            momentum: 0.9,
            coeff: Some(0.9),
            seed: 0,
            check_every: 1,
            power_iters_per_step: 10,
            interblock_lowpass: false,
            init_gain: 1.0,
            dataset: ToyDatasetConfig::default(),
        }
    }
}

/// Network plus linear classification head.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub net: Network,
    pub head_w: Tensor,
    pub head_b: Tensor,
}

impl Classifier {
    pub fn new<R: Rng>(net: Network, classes: usize, rng: &mut R) -> Classifier {
        let (c, n) = net.spec.output_shape();
        let feat = c * n * n;
        let std = (2.0 / feat as f64).sqrt();
        Classifier {
            net,
            head_w: Tensor::randn(&[feat, classes], rng).scaled(std),
            head_b: Tensor::zeros(&[classes]),
        }
    }

    /// Argmax predictions with frozen statistics.
    pub fn predict(&self, images: &Tensor) -> Result<Vec<usize>> {
        let (b, _, _, _) = images.dims4()?;
        let feats = self.net.features(images)?;
        let (c, n) = self.net.spec.output_shape();
        let feat = c * n * n;
        let mut g = Graph::new();
        let f = g.leaf(feats.reshaped(&[b, feat])?, false);
        let w = g.leaf(self.head_w.clone(), false);
        let bias = g.leaf(self.head_b.clone(), false);
        let logits = g.linear(f, w, Some(bias))?;
        let lv = g.value(logits);
        let k = self.head_b.numel();
        Ok((0..b)
            .map(|bi| {
                let row = &lv.data()[bi * k..(bi + 1) * k];
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap()
            })
            .collect())
    }

    pub fn accuracy(&self, images: &Tensor, labels: &[usize]) -> Result<f64> {
        let preds = self.predict(images)?;
        let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
        Ok(hits as f64 / labels.len() as f64)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.net.save(dir)?;
        save_tensor(&dir.join("head_w.f64"), &self.head_w)?;
        save_tensor(&dir.join("head_b.f64"), &self.head_b)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Classifier> {
        Ok(Classifier {
            net: Network::load(dir)?,
            head_w: load_tensor(&dir.join("head_w.f64"))?,
            head_b: load_tensor(&dir.join("head_b.f64"))?,
        })
    }
}

/// Momentum buffer per parameter tensor.
struct Sgd {
    lr: f64,
    momentum: f64,
    velocity: Vec<Tensor>,
}

impl Sgd {
    fn new(lr: f64, momentum: f64, shapes: &[&[usize]]) -> Sgd {
        Sgd {
            lr,
            momentum,
            velocity: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    fn step(&mut self, params: &mut [&mut Tensor], grads: &[Option<Tensor>]) {
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            if let Some(g) = g {
                for i in 0..v.numel() {
                    let vel = self.momentum * v.data()[i] + g.data()[i];
                    v.data_mut()[i] = vel;
                    p.data_mut()[i] -= self.lr * vel;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochCheck {
    pub epoch: usize,
    pub train_loss: f64,
    pub report: CheckReport,
}

#[derive(Debug, Serialize)]
pub struct TrainSummary {
    pub test_accuracy: f64,
    pub final_loss: f64,
    pub epochs: usize,
    pub coeff: Option<f64>,
    pub seed: u64,
}

pub struct TrainOutcome {
    pub classifier: Classifier,
    pub checks: Vec<EpochCheck>,
    pub summary: TrainSummary,
}

pub fn train_toy(config: &TrainConfig) -> Result<TrainOutcome> {
    let mut dataset_cfg = config.dataset.clone();
    dataset_cfg.seed = config.seed.wrapping_mul(0x9e3779b9).wrapping_add(dataset_cfg.seed);
    let data = generate(&dataset_cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut spec = NetworkSpec::toy(dataset_cfg.channels, config.coeff);
    spec.interblock_lowpass = config.interblock_lowpass;
    spec.input_extent = dataset_cfg.extent;
    let mut net = Network::new(spec, config.init_gain, &mut rng)?;
    net.normalize(200)?;
    let mut clf = Classifier::new(net, 2, &mut rng);

    let (c_out, n_out) = clf.net.spec.output_shape();
    let feat = c_out * n_out * n_out;

    // Parameter order: per block conv1/conv2, per gap gamma/beta, head w/b.
    let shapes: Vec<Vec<usize>> = {
        let mut s = Vec::new();
        for b in &clf.net.blocks {
            s.push(b.conv1.shape().to_vec());
            s.push(b.conv2.shape().to_vec());
        }
        for bn in clf.net.bns.iter().flatten() {
            s.push(bn.gamma.shape().to_vec());
            s.push(bn.beta.shape().to_vec());
        }
        s.push(clf.head_w.shape().to_vec());
        s.push(clf.head_b.shape().to_vec());
        s
    };
    let shape_refs: Vec<&[usize]> = shapes.iter().map(|s| s.as_slice()).collect();
    let mut sgd = Sgd::new(config.learning_rate, config.momentum, &shape_refs);

    let (n_train, _, _, _) = data.train_images.dims4()?;
    let check_batch_size = config.batch_size.min(n_train);
    let check_batch = Tensor::stack_batch(
        &(0..check_batch_size)
            .map(|i| data.train_images.batch_item(i).unwrap())
            .collect::<Vec<_>>(),
    )?;

    let mut checks = Vec::new();
    let mut last_loss = f64::NAN;
    let steps_per_epoch = n_train.div_ceil(config.batch_size);
    let lr_drop_epoch = (config.epochs * 2) / 3;

    // Checkpoint 0: the initialized (already normalized) model.
    if config.check_every > 0 {
        let report = run_checks(&clf.net, &check_batch, config.seed, DominanceMode::PerItem)?;
        checks.push(EpochCheck {
            epoch: 0,
            train_loss: f64::NAN,
            report,
        });
    }

    for epoch in 0..config.epochs {
        if epoch == lr_drop_epoch && epoch > 0 {
            sgd.lr = config.learning_rate / 10.0;
        }
        let mut order: Vec<usize> = (0..n_train).collect();
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        for step in 0..steps_per_epoch {
            let lo = step * config.batch_size;
            let hi = ((step + 1) * config.batch_size).min(n_train);
            if lo >= hi {
                continue;
            }
            let idx = &order[lo..hi];
            let batch = Tensor::stack_batch(
                &idx.iter()
                    .map(|&i| data.train_images.batch_item(i).unwrap())
                    .collect::<Vec<_>>(),
            )?;
            let labels: Vec<usize> = idx.iter().map(|&i| data.train_labels[i]).collect();

            let mut g = Graph::new();
            let x = g.leaf(batch, false);
            let (features, params) = clf.net.forward_train(&mut g, x)?;
            let flat = g.reshape(features, &[hi - lo, feat])?;
            let w = g.leaf(clf.head_w.clone(), true);
            let bias = g.leaf(clf.head_b.clone(), true);
            let logits = g.linear(flat, w, Some(bias))?;
            let loss = g.softmax_cross_entropy(logits, &labels)?;
            last_loss = g.value(loss).data()[0];
            if !last_loss.is_finite() {
                return Err(CoreError::InvalidArgument(format!(
                    "training diverged at epoch {epoch}: loss {last_loss}"
                )));
            }
            g.backward(loss)?;

            let mut grads: Vec<Option<Tensor>> = Vec::new();
            for (k1, k2) in &params.convs {
                grads.push(g.grad(*k1).cloned());
                grads.push(g.grad(*k2).cloned());
            }
            for (gamma, beta) in &params.bns {
                grads.push(g.grad(*gamma).cloned());
                grads.push(g.grad(*beta).cloned());
            }
            grads.push(g.grad(w).cloned());
            grads.push(g.grad(bias).cloned());

            {
                let mut refs: Vec<&mut Tensor> = Vec::new();
                for b in &mut clf.net.blocks {
                    refs.push(&mut b.conv1);
                    refs.push(&mut b.conv2);
                }
                for bn in clf.net.bns.iter_mut().flatten() {
                    refs.push(&mut bn.gamma);
                    refs.push(&mut bn.beta);
                }
                refs.push(&mut clf.head_w);
                refs.push(&mut clf.head_b);
                sgd.step(&mut refs, &grads);
            }
            clf.net.normalize(config.power_iters_per_step)?;
        }

        if config.check_every > 0
            && ((epoch + 1) % config.check_every == 0 || epoch + 1 == config.epochs)
        {
            // Converged estimates for the reported Lipschitz data.
            clf.net.refresh_estimates(200)?;
            let report = run_checks(&clf.net, &check_batch, config.seed, DominanceMode::PerItem)?;
            checks.push(EpochCheck {
                epoch: epoch + 1,
                train_loss: last_loss,
                report,
            });
        }
    }

    let test_accuracy = clf.accuracy(&data.test_images, &data.test_labels)?;
    let summary = TrainSummary {
        test_accuracy,
        final_loss: if last_loss.is_finite() { last_loss } else { -1.0 },
        epochs: config.epochs,
        coeff: config.coeff,
        seed: config.seed,
    };
    Ok(TrainOutcome {
        classifier: clf,
        checks,
        summary,
    })
}
