//! Threshold calibration, shared-grasp predictors and baselines.

use std::time::Instant;

use ndarray::{concatenate, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ebm::{energies, Encoder, ModelKind};
use crate::error::{Error, Result};
use crate::geometry::Se2Pose;
use crate::nn::MlpParams;
use crate::scene::{label_feasible, label_shared, GraspCandidateSet, ObjectModel, WorldModel};

/// Confusion counts and derived scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Metrics {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Harmonic mean; zero when either input is zero.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision <= 0.0 || recall <= 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

impl Metrics {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        Self {
            tp,
            fp,
            fn_,
            tn,
            precision,
            recall,
            f1: f1_score(precision, recall),
        }
    }

    pub fn from_masks(pred: &[bool], truth: &[bool]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} predictions", truth.len()),
                actual: format!("{}", pred.len()),
            });
        }
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for (&p, &t) in pred.iter().zip(truth) {
            match (p, t) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
        Ok(Self::from_counts(tp, fp, fn_, tn))
    }

    /// Pools the counts of several evaluations.
    pub fn merge(&self, other: &Metrics) -> Metrics {
        Self::from_counts(
            self.tp + other.tp,
            self.fp + other.fp,
            self.fn_ + other.fn_,
            self.tn + other.tn,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub threshold: f64,
    pub f1: f64,
    pub metrics: Metrics,
}

/// F1 of the rule "positive iff energy < threshold".
pub fn metrics_at(energies: &[f64], labels: &[bool], threshold: f64) -> Result<Metrics> {
    let pred: Vec<bool> = energies.iter().map(|&e| e < threshold).collect();
    Metrics::from_masks(&pred, labels)
}

/// Exact F1-maximizing threshold over all midpoints between consecutive
/// distinct energies, plus a sentinel below and above the range. Ties go
/// to the smallest threshold.
pub fn calibrate_threshold(energies: &[f64], labels: &[bool]) -> Result<Calibration> {
    if energies.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} labels", energies.len()),
            actual: format!("{}", labels.len()),
        });
    }
    if let Some(bad) = energies.iter().find(|e| !e.is_finite()) {
        return Err(Error::NonFinite {
            context: format!("calibration energy {bad}"),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels(format!(
            "calibration needs both classes, got {n_pos} positives and {n_neg} negatives"
        )));
    }
    let mut order: Vec<usize> = (0..energies.len()).collect();
    order.sort_by(|&a, &b| energies[a].total_cmp(&energies[b]));
    let lo = energies[order[0]];
    let hi = energies[*order.last().unwrap()];

    let mut best = Calibration {
        threshold: lo - 1.0f64.max(lo.abs()),
        f1: 0.0,
        metrics: Metrics::from_counts(0, 0, n_pos, n_neg),
    };
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut k = 0;
    while k < order.len() {
        let e = energies[order[k]];
        while k < order.len() && energies[order[k]] == e {
            if labels[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        let threshold = if k < order.len() {
            let next = energies[order[k]];
            let mid = e + 0.5 * (next - e);
            if mid > e { mid } else { next }
        } else {
            hi + 1.0f64.max(hi.abs())
        };
        let m = Metrics::from_counts(tp, fp, n_pos - tp, n_neg - fp);
        if m.f1 > best.f1 {
            best = Calibration {
                threshold,
                f1: m.f1,
                metrics: m,
            };
        }
    }
    Ok(best)
}

/// A calibrated threshold and the validation data it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedThreshold {
    pub value: f64,
    pub f1: f64,
    pub validation_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Thresholds {
    pub h_f: Option<CalibratedThreshold>,
    pub h_s: Option<CalibratedThreshold>,
    pub h_s_prime: Option<CalibratedThreshold>,
}

impl Thresholds {
    /// Uncalibrated thresholds, e.g. sentinels in tests.
    pub fn manual(h_f: f64, h_s: f64, h_s_prime: f64) -> Self {
        let mk = |v| {
            Some(CalibratedThreshold {
                value: v,
                f1: f64::NAN,
                validation_digest: "manual".into(),
            })
        };
        Self {
            h_f: mk(h_f),
            h_s: mk(h_s),
            h_s_prime: mk(h_s_prime),
        }
    }

    fn get(t: &Option<CalibratedThreshold>, name: &str) -> Result<f64> {
        t.as_ref()
            .map(|c| c.value)
            .ok_or_else(|| Error::invalid(format!("threshold {name} has not been calibrated")))
    }

    pub fn h_f(&self) -> Result<f64> {
        Self::get(&self.h_f, "h_f")
    }

    pub fn h_s(&self) -> Result<f64> {
        Self::get(&self.h_s, "h_s")
    }

    pub fn h_s_prime(&self) -> Result<f64> {
        Self::get(&self.h_s_prime, "h_s_prime")
    }

    /// Fills in whichever thresholds `other` carries.
    pub fn merge(&mut self, other: Thresholds) {
        if other.h_f.is_some() {
            self.h_f = other.h_f;
        }
        if other.h_s.is_some() {
            self.h_s = other.h_s;
        }
        if other.h_s_prime.is_some() {
            self.h_s_prime = other.h_s_prime;
        }
    }
}

/// Energies of every candidate at each pose, evaluated as one batch.
pub trait FeasibilityEnergy {
    fn check_candidates(&self, candidates: &GraspCandidateSet) -> Result<()>;
    /// Pose-major: `out[k * n + i]` is candidate `i` at `poses[k]`.
    fn pose_energies(&self, world: &WorldModel, candidates: &GraspCandidateSet, poses: &[Se2Pose]) -> Result<Vec<f64>>;
}

/// Energies of every candidate for a pose pair.
pub trait SharedEnergy {
    fn check_candidates(&self, candidates: &GraspCandidateSet) -> Result<()>;
    fn pair_energies(
        &self,
        world: &WorldModel,
        candidates: &GraspCandidateSet,
        init: &Se2Pose,
        goal: &Se2Pose,
    ) -> Result<Vec<f64>>;
}

/// Network parameters bound to the candidate set they were trained for.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedModel {
    pub params: MlpParams,
    pub kind: ModelKind,
    pub candidate_set_hash: String,
}

impl LearnedModel {
    pub fn new(params: MlpParams, kind: ModelKind, candidates: &GraspCandidateSet) -> Result<Self> {
        if params.d_in() != kind.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} inputs for a {} model", kind.input_dim(), kind.name()),
                actual: format!("{}", params.d_in()),
            });
        }
        Ok(Self {
            params,
            kind,
            candidate_set_hash: candidates.content_hash().to_string(),
        })
    }

    /// The same weights, explicitly re-targeted at another candidate set
    /// (used when evaluating on unseen grasps or objects).
    pub fn retarget(&self, candidates: &GraspCandidateSet) -> Self {
        Self {
            candidate_set_hash: candidates.content_hash().to_string(),
            ..self.clone()
        }
    }

    fn check(&self, candidates: &GraspCandidateSet, want: ModelKind) -> Result<()> {
        if self.kind != want {
            return Err(Error::invalid(format!(
                "a {} model cannot serve a {} prediction",
                self.kind.name(),
                want.name()
            )));
        }
        if self.candidate_set_hash != candidates.content_hash() {
            return Err(Error::HashMismatch {
                expected: self.candidate_set_hash.clone(),
                found: candidates.content_hash().to_string(),
            });
        }
        Ok(())
    }
}

impl FeasibilityEnergy for LearnedModel {
    fn check_candidates(&self, candidates: &GraspCandidateSet) -> Result<()> {
        self.check(candidates, ModelKind::Feasibility)
    }

    fn pose_energies(&self, world: &WorldModel, candidates: &GraspCandidateSet, poses: &[Se2Pose]) -> Result<Vec<f64>> {
        let enc = Encoder::new(world);
        let blocks = poses
            .iter()
            .map(|p| enc.pose_rows(p, candidates))
            .collect::<Result<Vec<_>>>()?;
        let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
        let x = concatenate(Axis(0), &views).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(energies(&self.params, x.view())?.to_vec())
    }
}

impl SharedEnergy for LearnedModel {
    fn check_candidates(&self, candidates: &GraspCandidateSet) -> Result<()> {
        self.check(candidates, ModelKind::DirectShared)
    }

    fn pair_energies(
        &self,
        world: &WorldModel,
        candidates: &GraspCandidateSet,
        init: &Se2Pose,
        goal: &Se2Pose,
    ) -> Result<Vec<f64>> {
        let x = Encoder::new(world).pair_rows(init, goal, candidates)?;
        Ok(energies(&self.params, x.view())?.to_vec())
    }
}

/// Stand-in model whose energy is -1 for truly feasible (or shared)
/// candidates and +1 otherwise. Used to self-test the harness.
#[derive(Debug, Clone)]
pub struct OracleModel {
    pub object: ObjectModel,
}

impl FeasibilityEnergy for OracleModel {
    fn check_candidates(&self, _: &GraspCandidateSet) -> Result<()> {
        Ok(())
    }

    fn pose_energies(&self, world: &WorldModel, candidates: &GraspCandidateSet, poses: &[Se2Pose]) -> Result<Vec<f64>> {
        Ok(poses
            .iter()
            .flat_map(|p| label_feasible(world, &self.object, candidates, p).mask)
            .map(|f| if f { -1.0 } else { 1.0 })
            .collect())
    }
}

impl SharedEnergy for OracleModel {
    fn check_candidates(&self, _: &GraspCandidateSet) -> Result<()> {
        Ok(())
    }

    fn pair_energies(
        &self,
        world: &WorldModel,
        candidates: &GraspCandidateSet,
        init: &Se2Pose,
        goal: &Se2Pose,
    ) -> Result<Vec<f64>> {
        Ok(label_shared(world, &self.object, candidates, init, goal)
            .mask
            .into_iter()
            .map(|f| if f { -1.0 } else { 1.0 })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    J,
    D,
    L,
    F,
    A,
    R,
}

impl Method {
    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_uppercase().as_str() {
            "J" => Ok(Method::J),
            "D" => Ok(Method::D),
            "L" => Ok(Method::L),
            "F" => Ok(Method::F),
            "A" => Ok(Method::A),
            "R" => Ok(Method::R),
            _ => Err(Error::invalid(format!("unknown method '{name}'"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Energies {
    None,
    /// One energy per candidate at a single pose (F).
    Single { energy: Vec<f64> },
    /// Per-pose energies and their element-wise sum (J, L).
    Joint {
        init: Vec<f64>,
        goal: Vec<f64>,
        joint: Vec<f64>,
    },
    /// Direct shared-model energies (D).
    Direct { energy: Vec<f64> },
}

impl Energies {
    /// The score a min-energy selection ranks by.
    pub fn ranking(&self) -> Option<&[f64]> {
        match self {
            Energies::None => None,
            Energies::Single { energy } | Energies::Direct { energy } => Some(energy),
            Energies::Joint { joint, .. } => Some(joint),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub method: Method,
    pub mask: Vec<bool>,
    pub energies: Energies,
    pub threshold_used: Option<f64>,
    /// Wall time of the prediction itself.
    pub elapsed_secs: f64,
}

impl PredictionResult {
    pub fn selected_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }
}

pub fn predict_feasible<M: FeasibilityEnergy + ?Sized>(
    model: &M,
    thresholds: &Thresholds,
    world: &WorldModel,
    pose: &Se2Pose,
    candidates: &GraspCandidateSet,
) -> Result<PredictionResult> {
    model.check_candidates(candidates)?;
    let h_f = thresholds.h_f()?;
    let start = Instant::now();
    let energy = model.pose_energies(world, candidates, std::slice::from_ref(pose))?;
    let mask = energy.iter().map(|&e| e < h_f).collect();
    Ok(PredictionResult {
        method: Method::F,
        mask,
        energies: Energies::Single { energy },
        threshold_used: Some(h_f),
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

/// Sums the per-pose energies from one batched evaluation of both poses
/// and thresholds the sum.
pub fn predict_shared_j<M: FeasibilityEnergy + ?Sized>(
    model: &M,
    thresholds: &Thresholds,
    world: &WorldModel,
    pose_init: &Se2Pose,
    pose_goal: &Se2Pose,
    candidates: &GraspCandidateSet,
) -> Result<PredictionResult> {
    model.check_candidates(candidates)?;
    let h_s = thresholds.h_s()?;
    let start = Instant::now();
    let n = candidates.len();
    let mut both = model.pose_energies(world, candidates, &[*pose_init, *pose_goal])?;
    let goal = both.split_off(n);
    let init = both;
    let joint: Vec<f64> = init.iter().zip(&goal).map(|(a, b)| a + b).collect();
    let mask = joint.iter().map(|&e| e < h_s).collect();
    Ok(PredictionResult {
        method: Method::J,
        mask,
        energies: Energies::Joint { init, goal, joint },
        threshold_used: Some(h_s),
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

pub fn predict_shared_d<M: SharedEnergy + ?Sized>(
    model: &M,
    thresholds: &Thresholds,
    world: &WorldModel,
    pose_init: &Se2Pose,
    pose_goal: &Se2Pose,
    candidates: &GraspCandidateSet,
) -> Result<PredictionResult> {
    model.check_candidates(candidates)?;
    let h = thresholds.h_s_prime()?;
    let start = Instant::now();
    let energy = model.pair_energies(world, candidates, pose_init, pose_goal)?;
    let mask = energy.iter().map(|&e| e < h).collect();
    Ok(PredictionResult {
        method: Method::D,
        mask,
        energies: Energies::Direct { energy },
        threshold_used: Some(h),
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

/// Feasibility thresholding at each pose, combined with AND.
pub fn predict_shared_l<M: FeasibilityEnergy + ?Sized>(
    model: &M,
    thresholds: &Thresholds,
    world: &WorldModel,
    pose_init: &Se2Pose,
    pose_goal: &Se2Pose,
    candidates: &GraspCandidateSet,
) -> Result<PredictionResult> {
    let start = Instant::now();
    let a = predict_feasible(model, thresholds, world, pose_init, candidates)?;
    let b = predict_feasible(model, thresholds, world, pose_goal, candidates)?;
    let mask = a.mask.iter().zip(&b.mask).map(|(&x, &y)| x && y).collect();
    let (Energies::Single { energy: init }, Energies::Single { energy: goal }) = (a.energies, b.energies) else {
        unreachable!("feasibility predictions carry single energies")
    };
    let joint = init.iter().zip(&goal).map(|(x, y)| x + y).collect();
    Ok(PredictionResult {
        method: Method::L,
        mask,
        energies: Energies::Joint { init, goal, joint },
        threshold_used: a.threshold_used,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

/// Exact oracle filtering at both poses.
pub fn analytical_shared(
    world: &WorldModel,
    object: &ObjectModel,
    candidates: &GraspCandidateSet,
    pose_init: &Se2Pose,
    pose_goal: &Se2Pose,
) -> PredictionResult {
    let start = Instant::now();
    let mask = label_shared(world, object, candidates, pose_init, pose_goal).mask;
    PredictionResult {
        method: Method::A,
        mask,
        energies: Energies::None,
        threshold_used: None,
        elapsed_secs: start.elapsed().as_secs_f64(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    MinEnergy,
}

/// Picks one mask-true candidate; `None` when the mask is empty.
pub fn select_grasp<R: Rng + ?Sized>(
    result: &PredictionResult,
    strategy: Strategy,
    rng: &mut R,
) -> Result<Option<usize>> {
    let chosen: Vec<usize> = result
        .mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(i, _)| i)
        .collect();
    match strategy {
        Strategy::Random => {
            if chosen.is_empty() {
                Ok(None)
            } else {
                Ok(Some(chosen[rng.random_range(0..chosen.len())]))
            }
        }
        Strategy::MinEnergy => {
            let ranking = result.energies.ranking().ok_or_else(|| {
                Error::invalid(format!("method {} provides no energies to rank", result.method))
            })?;
            Ok(chosen
                .into_iter()
                .min_by(|&a, &b| ranking[a].total_cmp(&ranking[b]).then(a.cmp(&b))))
        }
    }
}

/// Uniform draw over all candidates, ignoring feasibility.
pub fn random_baseline<R: Rng + ?Sized>(candidates: &GraspCandidateSet, rng: &mut R) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::invalid("random baseline needs a non-empty candidate set"));
    }
    Ok(rng.random_range(0..candidates.len()))
}
