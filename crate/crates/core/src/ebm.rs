//! Feature encoding, the composite energy loss and the training loop.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{DatasetBundle, DatasetKind, Records};
use crate::error::{Error, Result};
use crate::geometry::Se2Pose;
use crate::inference::calibrate_threshold;
use crate::nn::{optimizer_step, MlpParams, OptimState};
use crate::scene::{GraspCandidate, GraspCandidateSet, WorldModel, Workspace};

pub const FEASIBILITY_DIM: usize = 9;
pub const SHARED_DIM: usize = 13;
/// Grasp offsets (m) are divided by this before entering the network.
pub const GRASP_POSITION_SCALE: f64 = 0.1;

/// Rows are chunked so large evaluations keep bounded memory.
const FORWARD_CHUNK: usize = 16_384;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Feasibility,
    DirectShared,
}

impl ModelKind {
    pub fn input_dim(self) -> usize {
        match self {
            ModelKind::Feasibility => FEASIBILITY_DIM,
            ModelKind::DirectShared => SHARED_DIM,
        }
    }

    pub fn dataset_kind(self) -> DatasetKind {
        match self {
            ModelKind::Feasibility => DatasetKind::Feasibility,
            ModelKind::DirectShared => DatasetKind::Shared,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Feasibility => "feasibility",
            ModelKind::DirectShared => "shared",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "feasibility" => Ok(ModelKind::Feasibility),
            "shared" | "direct_shared" => Ok(ModelKind::DirectShared),
            other => Err(Error::invalid(format!("unknown model kind '{other}'"))),
        }
    }
}

/// Maps poses and grasps to network inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Encoder {
    workspace: Workspace,
}

impl Encoder {
    pub fn new(world: &WorldModel) -> Self {
        Self {
            workspace: world.workspace,
        }
    }

    /// `[x̂, ŷ, cos θ, sin θ]` with positions mapped affinely onto [-1, 1].
    pub fn pose_features(&self, pose: &Se2Pose) -> Result<[f64; 4]> {
        if !self.workspace.contains(pose, 1e-9) {
            return Err(Error::invalid(format!(
                "pose ({}, {}) outside the workspace",
                pose.x(),
                pose.y()
            )));
        }
        let ws = &self.workspace;
        let xh = 2.0 * (pose.x() - ws.x.0) / (ws.x.1 - ws.x.0) - 1.0;
        let yh = 2.0 * (pose.y() - ws.y.0) / (ws.y.1 - ws.y.0) - 1.0;
        let (s, c) = pose.theta().sin_cos();
        Ok([xh, yh, c, s])
    }

    pub fn decode_position(&self, xh: f64, yh: f64) -> (f64, f64) {
        let ws = &self.workspace;
        (
            ws.x.0 + 0.5 * (xh + 1.0) * (ws.x.1 - ws.x.0),
            ws.y.0 + 0.5 * (yh + 1.0) * (ws.y.1 - ws.y.0),
        )
    }

    /// `[ĝx, ĝy, cos gθ, sin gθ, w_norm]`.
    pub fn grasp_features(grasp: &GraspCandidate) -> [f64; 5] {
        let (s, c) = grasp.pose.theta().sin_cos();
        [
            grasp.pose.x() / GRASP_POSITION_SCALE,
            grasp.pose.y() / GRASP_POSITION_SCALE,
            c,
            s,
            grasp.width_normalized,
        ]
    }

    /// One row per candidate at `pose`.
    pub fn pose_rows(&self, pose: &Se2Pose, candidates: &GraspCandidateSet) -> Result<Array2<f64>> {
        let p = self.pose_features(pose)?;
        let mut out = Array2::zeros((candidates.len(), FEASIBILITY_DIM));
        for (mut row, g) in out.rows_mut().into_iter().zip(candidates.candidates()) {
            let gf = Self::grasp_features(g);
            row.iter_mut()
                .zip(p.iter().chain(gf.iter()))
                .for_each(|(dst, &v)| *dst = v);
        }
        Ok(out)
    }

    /// One 13-feature row per candidate for the pose pair.
    pub fn pair_rows(
        &self,
        init: &Se2Pose,
        goal: &Se2Pose,
        candidates: &GraspCandidateSet,
    ) -> Result<Array2<f64>> {
        let a = self.pose_features(init)?;
        let b = self.pose_features(goal)?;
        let mut out = Array2::zeros((candidates.len(), SHARED_DIM));
        for (mut row, g) in out.rows_mut().into_iter().zip(candidates.candidates()) {
            let gf = Self::grasp_features(g);
            row.iter_mut()
                .zip(a.iter().chain(&b).chain(gf.iter()))
                .for_each(|(dst, &v)| *dst = v);
        }
        Ok(out)
    }
}

pub fn encode_feasibility(pose: &Se2Pose, grasp: &GraspCandidate, world: &WorldModel) -> Result<[f64; 9]> {
    let p = Encoder::new(world).pose_features(pose)?;
    let g = Encoder::grasp_features(grasp);
    Ok([p[0], p[1], p[2], p[3], g[0], g[1], g[2], g[3], g[4]])
}

pub fn encode_shared(
    pose_init: &Se2Pose,
    pose_goal: &Se2Pose,
    grasp: &GraspCandidate,
    world: &WorldModel,
) -> Result<[f64; 13]> {
    let enc = Encoder::new(world);
    let a = enc.pose_features(pose_init)?;
    let b = enc.pose_features(pose_goal)?;
    let g = Encoder::grasp_features(grasp);
    Ok([
        a[0], a[1], a[2], a[3], b[0], b[1], b[2], b[3], g[0], g[1], g[2], g[3], g[4],
    ])
}

/// Feature matrix and labels for every record of a bundle.
pub fn encode_bundle(
    bundle: &DatasetBundle,
    candidates: &GraspCandidateSet,
    world: &WorldModel,
) -> Result<(Array2<f64>, Vec<bool>)> {
    let enc = Encoder::new(world);
    let grasp_feats: Vec<[f64; 5]> = candidates.candidates().iter().map(Encoder::grasp_features).collect();
    let check = |i: usize| {
        grasp_feats.get(i).ok_or(Error::IndexOutOfRange {
            index: i,
            len: candidates.len(),
        })
    };
    match &bundle.records {
        Records::Feasibility(rs) => {
            let mut x = Array2::zeros((rs.len(), FEASIBILITY_DIM));
            let mut cached: Option<(Se2Pose, [f64; 4])> = None;
            for (mut row, r) in x.rows_mut().into_iter().zip(rs) {
                let p = match cached {
                    Some((pose, f)) if pose == r.pose => f,
                    _ => {
                        let f = enc.pose_features(&r.pose)?;
                        cached = Some((r.pose, f));
                        f
                    }
                };
                let g = check(r.grasp_index)?;
                row.iter_mut().zip(p.iter().chain(g)).for_each(|(d, &v)| *d = v);
            }
            Ok((x, rs.iter().map(|r| r.label).collect()))
        }
        Records::Shared(rs) => {
            let mut x = Array2::zeros((rs.len(), SHARED_DIM));
            for (mut row, r) in x.rows_mut().into_iter().zip(rs) {
                let a = enc.pose_features(&r.pose_init)?;
                let b = enc.pose_features(&r.pose_goal)?;
                let g = check(r.grasp_index)?;
                row.iter_mut()
                    .zip(a.iter().chain(&b).chain(g))
                    .for_each(|(d, &v)| *d = v);
            }
            Ok((x, rs.iter().map(|r| r.label).collect()))
        }
    }
}

/// Energies for many rows, evaluated in fixed-size chunks.
pub fn energies(params: &MlpParams, x: ArrayView2<f64>) -> Result<Array1<f64>> {
    if x.nrows() <= FORWARD_CHUNK {
        return params.forward(x);
    }
    let mut out = Array1::zeros(x.nrows());
    for (k, chunk) in x.axis_chunks_iter(Axis(0), FORWARD_CHUNK).enumerate() {
        let e = params.forward(chunk)?;
        out.slice_mut(ndarray::s![k * FORWARD_CHUNK..k * FORWARD_CHUNK + e.len()])
            .assign(&e);
    }
    Ok(out)
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn require_nonempty(xs: &[f64], what: &str) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::invalid(format!("{what} energy list is empty")));
    }
    Ok(())
}

fn check_temperature(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("temperature must be positive, got {t}")));
    }
    Ok(())
}

/// `mean(pos/t) + log Σ_all exp(-e/t)`.
pub fn nll_loss(pos: &[f64], all: &[f64], t: f64) -> Result<f64> {
    check_temperature(t)?;
    require_nonempty(pos, "positive")?;
    require_nonempty(all, "partition")?;
    Ok(mean(pos) / t + log_sum_exp(all.iter().map(|e| -e / t)))
}

/// `mean(pos/t) - mean(neg/t)`.
pub fn contrastive_loss(pos: &[f64], neg: &[f64], t: f64) -> Result<f64> {
    check_temperature(t)?;
    require_nonempty(pos, "positive")?;
    require_nonempty(neg, "negative")?;
    Ok(mean(pos) / t - mean(neg) / t)
}

/// `mean((pos/t)²) + mean((neg/t)²)`.
pub fn reg_loss(pos: &[f64], neg: &[f64], t: f64) -> Result<f64> {
    check_temperature(t)?;
    require_nonempty(pos, "positive")?;
    require_nonempty(neg, "negative")?;
    let sq = |xs: &[f64]| xs.iter().map(|e| (e / t).powi(2)).sum::<f64>() / xs.len() as f64;
    Ok(sq(pos) + sq(neg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct LossBreakdown {
    pub nll: f64,
    pub contrastive: f64,
    pub reg: f64,
    pub total: f64,
}

pub fn total_loss(pos: &[f64], neg: &[f64], all: &[f64], cfg: &TrainConfig) -> Result<LossBreakdown> {
    let nll = nll_loss(pos, all, cfg.temperature)?;
    let contrastive = contrastive_loss(pos, neg, cfg.temperature)?;
    let reg = reg_loss(pos, neg, cfg.temperature)?;
    Ok(LossBreakdown {
        nll,
        contrastive,
        reg,
        total: nll + contrastive + cfg.reg_weight * reg,
    })
}

/// How a row takes part in the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Positive,
    Negative,
    /// Contributes to the partition sum only.
    PartitionOnly,
}

/// Loss value and its gradient with respect to each energy.
pub fn loss_and_grad(energies: &[f64], roles: &[Role], t: f64, alpha: f64) -> Result<(LossBreakdown, Vec<f64>)> {
    check_temperature(t)?;
    if energies.len() != roles.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} roles", energies.len()),
            actual: format!("{}", roles.len()),
        });
    }
    let pos: Vec<f64> = energies.iter().zip(roles).filter(|(_, r)| **r == Role::Positive).map(|(e, _)| *e).collect();
    let neg: Vec<f64> = energies.iter().zip(roles).filter(|(_, r)| **r == Role::Negative).map(|(e, _)| *e).collect();
    let nll = nll_loss(&pos, energies, t)?;
    let contrastive = contrastive_loss(&pos, &neg, t)?;
    let reg = reg_loss(&pos, &neg, t)?;

    let np = pos.len() as f64;
    let nn = neg.len() as f64;
    let lse = log_sum_exp(energies.iter().map(|e| -e / t));
    let grad = energies
        .iter()
        .zip(roles)
        .map(|(&e, role)| {
            let softmax = (-e / t - lse).exp();
            let mut g = -softmax / t;
            match role {
                Role::Positive => {
                    // nll and contrastive terms share the positive mean
                    g += 2.0 / (np * t) + alpha * 2.0 * e / (t * t * np);
                }
                Role::Negative => {
                    g += -1.0 / (nn * t) + alpha * 2.0 * e / (t * t * nn);
                }
                Role::PartitionOnly => {}
            }
            g
        })
        .collect();
    Ok((
        LossBreakdown {
            nll,
            contrastive,
            reg,
            total: nll + contrastive + alpha * reg,
        },
        grad,
    ))
}

/// Support of the partition-function sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum PartitionMode {
    /// The current minibatch.
    #[default]
    Minibatch,
    /// The minibatch plus a fixed random pool of training rows.
    ReferencePool { size: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub temperature: f64,
    pub reg_weight: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub positive_fraction: f64,
    pub epochs: usize,
    /// Stop after this many epochs without validation improvement.
    pub patience: usize,
    pub seed: u64,
    pub hidden_layers: Vec<usize>,
    pub partition: PartitionMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            temperature: 0.5,
            reg_weight: 0.2,
            learning_rate: 1e-3,
            batch_size: 1024,
            positive_fraction: 0.5,
            epochs: 150,
            patience: 30,
            seed: 0,
            hidden_layers: vec![128, 128],
            partition: PartitionMode::Minibatch,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_temperature(self.temperature)?;
        if !(self.reg_weight >= 0.0 && self.reg_weight.is_finite()) {
            return Err(Error::invalid("reg_weight must be non-negative"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid("batch_size must be at least 2"));
        }
        if !(self.positive_fraction > 0.0 && self.positive_fraction < 1.0) {
            return Err(Error::invalid("positive_fraction must be in (0, 1)"));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::invalid("hidden layer widths must be positive"));
        }
        Ok(())
    }

    pub fn layer_sizes(&self, kind: ModelKind) -> Vec<usize> {
        let mut sizes = vec![kind.input_dim()];
        sizes.extend(&self.hidden_layers);
        sizes.push(1);
        sizes
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub nll: f64,
    pub contrastive: f64,
    pub reg: f64,
    pub total: f64,
    /// Best validation F1 over thresholds; NaN without a validation set.
    pub val_f1: f64,
    pub val_threshold: f64,
    /// Mean energies over a fixed training subsample at epoch end.
    pub mean_pos_energy: f64,
    pub mean_neg_energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: MlpParams,
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (0 = initialization).
    pub best_epoch: usize,
}

pub fn history_to_csv(history: &[EpochRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "epoch",
        "nll",
        "contrastive",
        "reg",
        "total",
        "val_f1",
        "val_threshold",
        "mean_pos_energy",
        "mean_neg_energy",
    ])?;
    for r in history {
        w.write_record([
            r.epoch.to_string(),
            r.nll.to_string(),
            r.contrastive.to_string(),
            r.reg.to_string(),
            r.total.to_string(),
            r.val_f1.to_string(),
            r.val_threshold.to_string(),
            r.mean_pos_energy.to_string(),
            r.mean_neg_energy.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

pub fn save_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    crate::scene::write_file(path, history_to_csv(history)?.as_bytes())
}

/// Cycles through a shuffled index list, reshuffling on wrap-around.
struct Cycler {
    items: Vec<usize>,
    pos: usize,
}

impl Cycler {
    fn new(mut items: Vec<usize>, rng: &mut ChaCha8Rng) -> Self {
        items.shuffle(rng);
        Self { items, pos: 0 }
    }

    fn take(&mut self, n: usize, rng: &mut ChaCha8Rng, out: &mut Vec<usize>) {
        for _ in 0..n {
            if self.pos == self.items.len() {
                self.items.shuffle(rng);
                self.pos = 0;
            }
            out.push(self.items[self.pos]);
            self.pos += 1;
        }
    }
}

const MONITOR_ROWS: usize = 4_096;

fn mean_energies(params: &MlpParams, x: &Array2<f64>, labels: &[bool], rows: &[usize]) -> Result<(f64, f64)> {
    let e = energies(params, x.select(Axis(0), rows).view())?;
    let (mut sp, mut np, mut sn, mut nn) = (0.0, 0usize, 0.0, 0usize);
    for (k, &i) in rows.iter().enumerate() {
        if labels[i] {
            sp += e[k];
            np += 1;
        } else {
            sn += e[k];
            nn += 1;
        }
    }
    Ok((sp / np.max(1) as f64, sn / nn.max(1) as f64))
}

/// Trains an energy model. Keeps the epoch with the best validation F1
/// when a validation bundle is given, otherwise the final epoch.
pub fn train(
    train_set: &DatasetBundle,
    val_set: Option<&DatasetBundle>,
    candidates: &GraspCandidateSet,
    world: &WorldModel,
    cfg: &TrainConfig,
    kind: ModelKind,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    for (bundle, what) in std::iter::once((train_set, "training")).chain(val_set.map(|v| (v, "validation"))) {
        if bundle.kind() != kind.dataset_kind() {
            return Err(Error::invalid(format!(
                "{what} bundle holds {} records but the model is {}",
                bundle.kind(),
                kind.name()
            )));
        }
        bundle.check_candidates(candidates)?;
    }
    let (x, labels) = encode_bundle(train_set, candidates, world)?;
    let pos_rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let neg_rows: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    if pos_rows.is_empty() || neg_rows.is_empty() {
        return Err(Error::DegenerateLabels(format!(
            "training set has {} positives and {} negatives",
            pos_rows.len(),
            neg_rows.len()
        )));
    }
    let val = match val_set {
        Some(v) => {
            let (vx, vl) = encode_bundle(v, candidates, world)?;
            if vl.iter().all(|&l| l) || vl.iter().all(|&l| !l) {
                return Err(Error::DegenerateLabels("validation set has a single class".into()));
            }
            Some((vx, vl))
        }
        None => None,
    };

    let mut params = MlpParams::new(&cfg.layer_sizes(kind), cfg.seed)?;
    let mut history = Vec::new();
    if cfg.epochs == 0 {
        return Ok(TrainOutcome {
            params,
            history,
            best_epoch: 0,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x7261_696e));
    let mut monitor: Vec<usize> = (0..labels.len()).collect();
    monitor.shuffle(&mut rng);
    monitor.truncate(MONITOR_ROWS);
    monitor.sort_unstable();
    let pool: Vec<usize> = match cfg.partition {
        PartitionMode::Minibatch => Vec::new(),
        PartitionMode::ReferencePool { size } => {
            let mut all: Vec<usize> = (0..labels.len()).collect();
            all.shuffle(&mut rng);
            all.truncate(size);
            all
        }
    };
    let mut pos_cycle = Cycler::new(pos_rows, &mut rng);
    let mut neg_cycle = Cycler::new(neg_rows, &mut rng);
    let n_pos = ((cfg.positive_fraction * cfg.batch_size as f64).round() as usize).clamp(1, cfg.batch_size - 1);
    let n_neg = cfg.batch_size - n_pos;
    let steps = labels.len().div_ceil(cfg.batch_size);
    let mut roles = vec![Role::Positive; n_pos];
    roles.extend(std::iter::repeat_n(Role::Negative, n_neg));
    roles.extend(std::iter::repeat_n(Role::PartitionOnly, pool.len()));

    let mut optim = OptimState::new(&params);
    let mut best = (f64::NEG_INFINITY, 0usize, params.clone());
    let mut batch = Vec::with_capacity(roles.len());
    for epoch in 1..=cfg.epochs {
        let mut acc = LossBreakdown::default();
        for _ in 0..steps {
            batch.clear();
            pos_cycle.take(n_pos, &mut rng, &mut batch);
            neg_cycle.take(n_neg, &mut rng, &mut batch);
            batch.extend_from_slice(&pool);
            let xb = x.select(Axis(0), &batch);
            let (e, cache) = params.forward_with_cache(xb.view())?;
            let (loss, grad) = loss_and_grad(e.as_slice().unwrap(), &roles, cfg.temperature, cfg.reg_weight)?;
            if !loss.total.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("training loss at epoch {epoch}"),
                });
            }
            let grads = params.backward_cached(&cache, Array1::from(grad).view())?;
            optimizer_step(&mut params, &grads, &mut optim, cfg.learning_rate)?;
            acc.nll += loss.nll;
            acc.contrastive += loss.contrastive;
            acc.reg += loss.reg;
            acc.total += loss.total;
        }
        let s = steps as f64;
        let (val_f1, val_threshold) = match &val {
            Some((vx, vl)) => {
                let ve = energies(&params, vx.view())?;
                let cal = calibrate_threshold(ve.as_slice().unwrap(), vl)?;
                (cal.f1, cal.threshold)
            }
            None => (f64::NAN, f64::NAN),
        };
        let (mp, mn) = mean_energies(&params, &x, &labels, &monitor)?;
        history.push(EpochRecord {
            epoch,
            nll: acc.nll / s,
            contrastive: acc.contrastive / s,
            reg: acc.reg / s,
            total: acc.total / s,
            val_f1,
            val_threshold,
            mean_pos_energy: mp,
            mean_neg_energy: mn,
        });
        if val.is_some() {
            if val_f1 > best.0 {
                best = (val_f1, epoch, params.clone());
            } else if epoch - best.1 >= cfg.patience {
                break;
            }
        }
    }
    if val.is_some() {
        Ok(TrainOutcome {
            params: best.2,
            history,
            best_epoch: best.1,
        })
    } else {
        let last = history.len();
        Ok(TrainOutcome {
            params,
            history,
            best_epoch: last,
        })
    }
}
