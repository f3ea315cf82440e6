//! Constructive search for feature collapse: pairs of inputs far apart in
//! input space whose feature representations nearly coincide.
//!
//! Two walks are provided. The level-set walk steps orthogonally to the
//! gradient of the feature-distance-to-anchor, so it needs one backward pass
//! per step and scales to any feature dimension. The null-space walk projects
//! steps into the numerical null space of the local Jacobian; it is exact for
//! linear maps but requires the dense Jacobian, so it is desk-scale only.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::spectral::band::{highpass, lowpass, FrequencyBudget};
use crate::tensor::graph::{eval_map, jacobian_with_output, DifferentiableMap, Graph};
use crate::tensor::Tensor;

/// Frequency restriction of sampled step directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Band {
    All,
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SearchAlgorithm {
    LevelSet,
    NullSpace,
}

/// Walk hyperparameters.
#[derive(Debug, Clone)]
pub struct SearchConfig {
    /// Step size in input-space units.
    pub eta: f64,
    pub n_steps: usize,
    /// Norm of the initial perturbation (level-set walk only; the null-space
    /// walk needs no kick to keep its projection well defined).
    pub eps_init: f64,
    pub band: Band,
    /// Budget defining the low band; required for `Low`/`High` directions and
    /// for band-resolved distance recording.
    pub budget: Option<FrequencyBudget>,
    pub seed: u64,
    /// Relative singular-value threshold for the numerical null space.
    pub rank_tol: f64,
    /// One gradient-descent correction of the feature distance per step.
    pub retraction: bool,
    /// Keep sampled directions in a fixed half-space so steps cannot cancel:
    /// directions with a negative inner product against the reference are
    /// resampled.
    pub non_cancel_reference: Option<Tensor>,
}

impl SearchConfig {
    pub fn new(eps_init: f64) -> SearchConfig {
        SearchConfig {
            eta: 0.01,
            n_steps: 1000,
            eps_init,
            band: Band::All,
            budget: None,
            seed: 0,
            rank_tol: 1e-8,
            retraction: false,
            non_cancel_reference: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.eta <= 0.0 || self.eps_init <= 0.0 || self.n_steps == 0 {
            return Err(CoreError::InvalidArgument(
                "search needs eta > 0, eps_init > 0, n_steps >= 1".into(),
            ));
        }
        if self.band != Band::All && self.budget.is_none() {
            return Err(CoreError::InvalidArgument(
                "band-restricted directions need a frequency budget".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SearchStatus {
    Completed,
    /// The Jacobian was numerically full rank; no collapse direction exists.
    NoNullSpace,
}

/// Per-step distance records of one walk. Entry `k` describes the iterate
/// after `k` steps (entry 0 is the starting point).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub input_dist: Vec<f64>,
    pub feat_dist: Vec<f64>,
    /// `||H_u(x - x0)||` when a budget is configured.
    pub low_dist: Vec<f64>,
    /// `||(I - H_u)(x - x0)||` when a budget is configured.
    pub high_dist: Vec<f64>,
    pub final_x: Tensor,
    /// Steps where the gradient norm fell below threshold and the raw
    /// direction was taken unprojected.
    pub zero_grad_steps: usize,
    pub status: SearchStatus,
}

/// Unit-norm direction, optionally projected into the low or high band.
pub fn sample_direction(
    shape: &[usize],
    band: Band,
    budget: Option<FrequencyBudget>,
    config_reference: Option<&Tensor>,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor> {
    for _ in 0..64 {
        let raw = Tensor::randn(shape, rng);
        let projected = match band {
            Band::All => raw,
            Band::Low => {
                let u = budget
                    .ok_or_else(|| CoreError::InvalidArgument("low band needs a budget".into()))?
                    .u;
                lowpass(&raw, u)?
            }
            Band::High => {
                let u = budget
                    .ok_or_else(|| CoreError::InvalidArgument("high band needs a budget".into()))?
                    .u;
                highpass(&raw, u)?
            }
        };
        if projected.norm() < 1e-12 {
            continue; // projection annihilated the sample; draw again
        }
        let unit = projected.normalized()?;
        match config_reference {
            Some(r) => {
                if unit.dot(r)? >= 0.0 {
                    return Ok(unit);
                }
                // keep resampling into the half-space
            }
            None => return Ok(unit),
        }
    }
    // Pathologically unlucky stream; flip the last draw instead of looping.
    let raw = Tensor::randn(shape, rng).normalized()?;
    Ok(raw.scaled(-1.0))
}

/// `v` minus its component along `g`; exact orthogonal projection.
pub fn project_orthogonal(v: &Tensor, g: &Tensor) -> Result<Tensor> {
    let gg = g.dot(g)?;
    if gg <= 0.0 {
        return Ok(v.clone());
    }
    let coef = v.dot(g)? / gg;
    let mut out = v.clone();
    out.axpy(-coef, g)?;
    Ok(out)
}

struct Recorder {
    budget_u: Option<usize>,
    input_dist: Vec<f64>,
    feat_dist: Vec<f64>,
    low_dist: Vec<f64>,
    high_dist: Vec<f64>,
}

impl Recorder {
    fn new(budget: Option<FrequencyBudget>) -> Recorder {
        Recorder {
            budget_u: budget.map(|b| b.u),
            input_dist: Vec::new(),
            feat_dist: Vec::new(),
            low_dist: Vec::new(),
            high_dist: Vec::new(),
        }
    }

    fn push(&mut self, x: &Tensor, x0: &Tensor, feat: f64) -> Result<()> {
        self.input_dist.push(x.dist(x0)?);
        self.feat_dist.push(feat);
        if let Some(u) = self.budget_u {
            let delta = x.sub(x0)?;
            self.low_dist.push(lowpass(&delta, u)?.norm());
            self.high_dist.push(highpass(&delta, u)?.norm());
        }
        Ok(())
    }

    fn finish(self, final_x: Tensor, zero_grad_steps: usize, status: SearchStatus) -> TrajectoryRecord {
        TrajectoryRecord {
            input_dist: self.input_dist,
            feat_dist: self.feat_dist,
            low_dist: self.low_dist,
            high_dist: self.high_dist,
            final_x,
            zero_grad_steps,
            status,
        }
    }
}

/// Distance-to-anchor and its input gradient in one graph pass.
fn feature_distance_and_grad(
    map: &dyn DifferentiableMap,
    x: &Tensor,
    y0: &Tensor,
) -> Result<(f64, Tensor)> {
    let mut g = Graph::new();
    let xid = g.leaf(x.clone(), true);
    let out = map.apply(&mut g, xid)?;
    let anchor = g.leaf(y0.clone(), false);
    let dist = g.l2_dist(out, anchor)?;
    let d = g.value(dist).data()[0];
    g.backward(dist)?;
    let grad = g
        .grad(xid)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(x.shape()));
    Ok((d, grad))
}

/// Level-set walk: start a small perturbation away from the anchor, then
/// repeatedly step along random directions projected orthogonally to the
/// gradient of the feature distance.
pub fn level_set_walk(
    map: &dyn DifferentiableMap,
    x0: &Tensor,
    config: &SearchConfig,
) -> Result<TrajectoryRecord> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let y0 = eval_map(map, x0)?;

    let kick = sample_direction(
        x0.shape(),
        config.band,
        config.budget,
        config.non_cancel_reference.as_ref(),
        &mut rng,
    )?;
    let mut x = x0.clone();
    x.axpy(config.eps_init, &kick)?;

    let mut recorder = Recorder::new(config.budget);
    let mut zero_grad_steps = 0usize;
    let mut target = None;

    for _ in 0..config.n_steps {
        let (d, grad) = feature_distance_and_grad(map, &x, &y0)?;
        recorder.push(&x, x0, d)?;
        if target.is_none() {
            target = Some(d);
        }
        let v = sample_direction(
            x.shape(),
            config.band,
            config.budget,
            config.non_cancel_reference.as_ref(),
            &mut rng,
        )?;
        let gnorm = grad.norm();
        let step = if gnorm < 1e-12 {
            zero_grad_steps += 1;
            v
        } else {
            project_orthogonal(&v, &grad)?
        };
        x.axpy(config.eta, &step)?;

        if config.retraction {
            let (dr, gr) = feature_distance_and_grad(map, &x, &y0)?;
            let grn = gr.norm();
            if grn > 1e-12 {
                let overshoot = dr - target.unwrap_or(dr);
                let pull = (overshoot / grn).clamp(-config.eta, config.eta);
                x.axpy(-pull, &gr.scaled(1.0 / grn))?;
            }
        }
    }
    let final_d = eval_map(map, &x)?.dist(&y0)?;
    recorder.push(&x, x0, final_d)?;
    Ok(recorder.finish(x, zero_grad_steps, SearchStatus::Completed))
}

/// Null-space walk: project each random direction onto the numerical null
/// space of the local Jacobian. Terminates with `NoNullSpace` if the Jacobian
/// is full rank.
pub fn null_space_walk(
    map: &dyn DifferentiableMap,
    x0: &Tensor,
    config: &SearchConfig,
) -> Result<TrajectoryRecord> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let y0 = eval_map(map, x0)?;
    let n = x0.numel();

    let mut x = x0.clone();
    let mut recorder = Recorder::new(config.budget);
    recorder.push(&x, x0, 0.0)?;

    for _ in 0..config.n_steps {
        let (rows, _) = jacobian_with_output(map, &x)?;
        let m = rows.len();
        let jac = DMatrix::from_fn(m, n, |i, j| rows[i][j]);
        let svd = jac.svd(false, true);
        let vt = svd
            .v_t
            .ok_or_else(|| CoreError::InvalidArgument("svd did not produce V^T".into()))?;
        let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);

        let mut row_basis: Vec<usize> = Vec::new();
        if sigma_max > 0.0 {
            for (i, s) in svd.singular_values.iter().enumerate() {
                if *s > config.rank_tol * sigma_max {
                    row_basis.push(i);
                }
            }
        }
        if row_basis.len() >= n {
            let final_d = eval_map(map, &x)?.dist(&y0)?;
            let last = recorder.feat_dist.len() - 1;
            recorder.feat_dist[last] = final_d;
            return Ok(recorder.finish(x, 0, SearchStatus::NoNullSpace));
        }

        let r = sample_direction(
            x.shape(),
            config.band,
            config.budget,
            config.non_cancel_reference.as_ref(),
            &mut rng,
        )?;
        let mut step = r.clone();
        for &i in &row_basis {
            let vi = Tensor::new_unchecked(
                x.shape().to_vec(),
                vt.row(i).iter().cloned().collect::<Vec<f64>>(),
            );
            let coef = vi.dot(&r)?;
            step.axpy(-coef, &vi)?;
        }
        x.axpy(config.eta, &step)?;
        let d = eval_map(map, &x)?.dist(&y0)?;
        recorder.push(&x, x0, d)?;
    }
    Ok(recorder.finish(x, 0, SearchStatus::Completed))
}

pub fn run_search(
    algorithm: SearchAlgorithm,
    map: &dyn DifferentiableMap,
    x0: &Tensor,
    config: &SearchConfig,
) -> Result<TrajectoryRecord> {
    match algorithm {
        SearchAlgorithm::LevelSet => level_set_walk(map, x0, config),
        SearchAlgorithm::NullSpace => null_space_walk(map, x0, config),
    }
}

/// Mean and 10/90 quantiles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub q10: f64,
    pub q90: f64,
}

impl Stats {
    pub fn from_values(values: &[f64]) -> Stats {
        if values.is_empty() {
            return Stats {
                mean: 0.0,
                q10: 0.0,
                q90: 0.0,
            };
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = |p: f64| sorted[((sorted.len() - 1) as f64 * p).round() as usize];
        Stats {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            q10: q(0.1),
            q90: q(0.9),
        }
    }
}

/// Aggregate of final distances over a group of trajectories.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub label: String,
    pub count: usize,
    pub input_dist: Stats,
    pub feat_dist: Stats,
    pub low_dist: Option<Stats>,
    pub high_dist: Option<Stats>,
}

/// Summarizes the final points of a group of trajectories under one label
/// (typically a band restriction plus a model variant).
pub fn summarize_trajectories(label: &str, trajectories: &[TrajectoryRecord]) -> TrajectorySummary {
    let finals = |f: fn(&TrajectoryRecord) -> Option<f64>| -> Vec<f64> {
        trajectories.iter().filter_map(f).collect()
    };
    let input: Vec<f64> = finals(|t| t.input_dist.last().copied());
    let feat: Vec<f64> = finals(|t| t.feat_dist.last().copied());
    let low: Vec<f64> = finals(|t| t.low_dist.last().copied());
    let high: Vec<f64> = finals(|t| t.high_dist.last().copied());
    TrajectorySummary {
        label: label.to_string(),
        count: trajectories.len(),
        input_dist: Stats::from_values(&input),
        feat_dist: Stats::from_values(&feat),
        low_dist: if low.is_empty() { None } else { Some(Stats::from_values(&low)) },
        high_dist: if high.is_empty() { None } else { Some(Stats::from_values(&high)) },
    }
}
