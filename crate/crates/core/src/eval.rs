//! Experiment harness: pooled classification metrics, success-rate trials,
//! timing benchmarks, the data-efficiency and generalization studies, and
//! CSV/markdown report tables.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{
    concat_bundles, generate_feasibility_dataset, generate_shared_dataset, split, DatasetBundle, Records,
};
use crate::ebm::{train, EpochRecord, ModelKind, TrainConfig};
use crate::error::{Error, Result};
use crate::geometry::Se2Pose;
use crate::inference::{
    analytical_shared, calibrate_threshold, predict_feasible, predict_shared_d, predict_shared_j,
    predict_shared_l, random_baseline, select_grasp, CalibratedThreshold, Energies, FeasibilityEnergy,
    LearnedModel, Method, Metrics, OracleModel, PredictionResult, SharedEnergy, Strategy, Thresholds,
};
use crate::nn::{checkpoint_from_str, checkpoint_to_string, CheckpointMeta, MlpParams};
use crate::scene::{
    builtin_object, label_shared, sample_antipodal_grasps, sample_valid_pose, write_file, GraspCandidateSet,
    ObjectModel, WorldModel,
};

/// Named sub-stream of a seed: the first 8 bytes of `sha256(seed_le || stream)`.
pub fn sub_seed(seed: u64, stream: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stream.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Pooled confusion counts over many (prediction, truth) mask pairs.
pub fn evaluate_classification(pred_masks: &[Vec<bool>], true_masks: &[Vec<bool>]) -> Result<Metrics> {
    if pred_masks.len() != true_masks.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} prediction masks", true_masks.len()),
            actual: format!("{}", pred_masks.len()),
        });
    }
    let mut total = Metrics::from_counts(0, 0, 0, 0);
    for (p, t) in pred_masks.iter().zip(true_masks) {
        total = total.merge(&Metrics::from_masks(p, t)?);
    }
    Ok(total)
}

pub fn bundle_digest(bundle: &DatasetBundle) -> Result<String> {
    Ok(hex::encode(Sha256::digest(bundle.to_jsonl()?.as_bytes())))
}

/// A shared-grasp method bound to whatever it needs to run.
#[derive(Clone, Copy)]
pub enum Predictor<'a> {
    Analytical { object: &'a ObjectModel },
    Random,
    Joint { model: &'a dyn FeasibilityEnergy, thresholds: &'a Thresholds },
    Direct { model: &'a dyn SharedEnergy, thresholds: &'a Thresholds },
    Conjunction { model: &'a dyn FeasibilityEnergy, thresholds: &'a Thresholds },
}

impl Predictor<'_> {
    pub fn method(&self) -> Method {
        match self {
            Predictor::Analytical { .. } => Method::A,
            Predictor::Random => Method::R,
            Predictor::Joint { .. } => Method::J,
            Predictor::Direct { .. } => Method::D,
            Predictor::Conjunction { .. } => Method::L,
        }
    }

    /// R keeps every candidate; choosing among them is the selection step.
    pub fn predict_pair(
        &self,
        world: &WorldModel,
        candidates: &GraspCandidateSet,
        init: &Se2Pose,
        goal: &Se2Pose,
    ) -> Result<PredictionResult> {
        match *self {
            Predictor::Analytical { object } => Ok(analytical_shared(world, object, candidates, init, goal)),
            Predictor::Random => Ok(PredictionResult {
                method: Method::R,
                mask: vec![true; candidates.len()],
                energies: Energies::None,
                threshold_used: None,
                elapsed_secs: 0.0,
            }),
            Predictor::Joint { model, thresholds } => predict_shared_j(model, thresholds, world, init, goal, candidates),
            Predictor::Direct { model, thresholds } => predict_shared_d(model, thresholds, world, init, goal, candidates),
            Predictor::Conjunction { model, thresholds } => {
                predict_shared_l(model, thresholds, world, init, goal, candidates)
            }
        }
    }
}

/// Record-level predictions against a labeled bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metrics: Metrics,
    pub predicted: Vec<bool>,
    pub truth: Vec<bool>,
    pub secs: f64,
}

impl Evaluation {
    fn from_parts(predicted: Vec<bool>, truth: Vec<bool>, secs: f64) -> Result<Self> {
        Ok(Self {
            metrics: Metrics::from_masks(&predicted, &truth)?,
            predicted,
            truth,
            secs,
        })
    }
}

/// Runs the predictor once per pose pair of a shared bundle and scores
/// every record against its label.
pub fn evaluate_shared_bundle(
    predictor: &Predictor,
    world: &WorldModel,
    candidates: &GraspCandidateSet,
    bundle: &DatasetBundle,
) -> Result<Evaluation> {
    bundle.check_candidates(candidates)?;
    let Records::Shared(records) = &bundle.records else {
        return Err(Error::invalid("shared-grasp evaluation needs a shared bundle"));
    };
    let start = Instant::now();
    let mut predicted = vec![false; records.len()];
    for group in bundle.pose_groups() {
        let r0 = &records[group[0]];
        let res = predictor.predict_pair(world, candidates, &r0.pose_init, &r0.pose_goal)?;
        for &i in &group {
            predicted[i] = res.mask[records[i].grasp_index];
        }
    }
    Evaluation::from_parts(predicted, bundle.records.labels(), start.elapsed().as_secs_f64())
}

/// Method F: per-pose feasibility predictions scored against a feasibility bundle.
pub fn evaluate_feasibility_bundle(
    model: &dyn FeasibilityEnergy,
    thresholds: &Thresholds,
    world: &WorldModel,
    candidates: &GraspCandidateSet,
    bundle: &DatasetBundle,
) -> Result<Evaluation> {
    bundle.check_candidates(candidates)?;
    let Records::Feasibility(records) = &bundle.records else {
        return Err(Error::invalid("feasibility evaluation needs a feasibility bundle"));
    };
    let start = Instant::now();
    let mut predicted = vec![false; records.len()];
    for group in bundle.pose_groups() {
        let res = predict_feasible(model, thresholds, world, &records[group[0]].pose, candidates)?;
        for &i in &group {
            predicted[i] = res.mask[records[i].grasp_index];
        }
    }
    Evaluation::from_parts(predicted, bundle.records.labels(), start.elapsed().as_secs_f64())
}

/// Per-record energies of a feasibility model on a feasibility bundle.
pub fn feasibility_energies(
    model: &dyn FeasibilityEnergy,
    world: &WorldModel,
    candidates: &GraspCandidateSet,
    bundle: &DatasetBundle,
) -> Result<Vec<f64>> {
    model.check_candidates(candidates)?;
    bundle.check_candidates(candidates)?;
    let Records::Feasibility(records) = &bundle.records else {
        return Err(Error::invalid("expected a feasibility bundle"));
    };
    let groups = bundle.pose_groups();
    let poses: Vec<Se2Pose> = groups.iter().map(|g| records[g[0]].pose).collect();
    let e = model.pose_energies(world, candidates, &poses)?;
    let n = candidates.len();
    let mut out = vec![0.0; records.len()];
    for (k, group) in groups.iter().enumerate() {
        for &i in group {
            out[i] = e[k * n + records[i].grasp_index];
        }
    }
    Ok(out)
}

/// Per-record joint energies `E(init) + E(goal)` on a shared bundle,
/// computed pair by pair exactly as the J predictor does.
pub fn joint_energies(
    model: &dyn FeasibilityEnergy,
    world: &WorldModel,
    candidates: &GraspCandidateSet,
    bundle: &DatasetBundle,
) -> Result<Vec<f64>> {
    model.check_candidates(candidates)?;
    bundle.check_candidates(candidates)?;
    let Records::Shared(records) = &bundle.records else {
        return Err(Error::invalid("expected a shared bundle"));
    };
    let n = candidates.len();
    let mut out = vec![0.0; records.len()];
    for group in bundle.pose_groups() {
        let r0 = &records[group[0]];
        let e = model.pose_energies(world, candidates, &[r0.pose_init, r0.pose_goal])?;
        for &i in &group {
            let g = records[i].grasp_index;
            out[i] = e[g] + e[n + g];
        }
    }
    Ok(out)
}

pub fn direct_energies(
    model: &dyn SharedEnergy,
    world: &WorldModel,
    candidates: &GraspCandidateSet,
    bundle: &DatasetBundle,
) -> Result<Vec<f64>> {
    model.check_candidates(candidates)?;
    bundle.check_candidates(candidates)?;
    let Records::Shared(records) = &bundle.records else {
        return Err(Error::invalid("expected a shared bundle"));
    };
    let mut out = vec![0.0; records.len()];
    for group in bundle.pose_groups() {
        let r0 = &records[group[0]];
        let e = model.pair_energies(world, candidates, &r0.pose_init, &r0.pose_goal)?;
        for &i in &group {
            out[i] = e[records[i].grasp_index];
        }
    }
    Ok(out)
}

fn calibrated(energies: &[f64], bundle: &DatasetBundle) -> Result<CalibratedThreshold> {
    let c = calibrate_threshold(energies, &bundle.records.labels())?;
    Ok(CalibratedThreshold {
        value: c.threshold,
        f1: c.f1,
        validation_digest: bundle_digest(bundle)?,
    })
}

/// h_f from a feasibility validation bundle.
pub fn calibrate_h_f(
    model: &dyn FeasibilityEnergy,
    world: &WorldModel,
    candidates: &GraspCandidateSet,
    val: &DatasetBundle,
) -> Result<CalibratedThreshold> {
    calibrated(&feasibility_energies(model, world, candidates, val)?, val)
}

/// h_s from a shared validation bundle, on joint energies.
pub fn calibrate_h_s(
    model: &dyn FeasibilityEnergy,
    world: &WorldModel,
    candidates: &GraspCandidateSet,
    val_shared: &DatasetBundle,
) -> Result<CalibratedThreshold> {
    calibrated(&joint_energies(model, world, candidates, val_shared)?, val_shared)
}

/// h_s′ for the direct model from a shared validation bundle.
pub fn calibrate_h_s_prime(
    model: &dyn SharedEnergy,
    world: &WorldModel,
    candidates: &GraspCandidateSet,
    val_shared: &DatasetBundle,
) -> Result<CalibratedThreshold> {
    calibrated(&direct_energies(model, world, candidates, val_shared)?, val_shared)
}

// ---------------------------------------------------------------------------
// success-rate trials

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub pose_init: Se2Pose,
    pub pose_goal: Se2Pose,
    /// Pairs drawn and discarded before this one for having no shared grasp.
    pub resampled: usize,
    pub predicted: usize,
    pub truly_shared: usize,
    pub selected: Option<usize>,
    pub success: bool,
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub method: Method,
    pub strategy: Strategy,
    pub n_trials: usize,
    pub success_rate: f64,
    pub mean_secs: f64,
    pub median_secs: f64,
    /// Fraction of drawn pose pairs rejected for an empty true shared set.
    pub resample_rate: f64,
    pub records: Vec<TrialRecord>,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Pose pair with a nonempty true shared set, plus that set's mask and the
/// number of rejected draws.
pub fn sample_solvable_pair<R: rand::Rng + ?Sized>(
    world: &WorldModel,
    object: &ObjectModel,
    candidates: &GraspCandidateSet,
    rng: &mut R,
) -> (Se2Pose, Se2Pose, Vec<bool>, usize) {
    let mut rejected = 0;
    loop {
        let init = sample_valid_pose(world, object, rng);
        let goal = sample_valid_pose(world, object, rng);
        let truth = label_shared(world, object, candidates, &init, &goal).mask;
        if truth.iter().any(|&t| t) {
            return (init, goal, truth, rejected);
        }
        rejected += 1;
    }
}

/// Draws `n_trials` solvable pose pairs, runs the method, selects one grasp
/// and checks it against the oracle. Pose pairs depend only on `seed`, so
/// methods run with the same seed face identical tasks.
pub fn success_rate_trial(
    world: &WorldModel,
    object: &ObjectModel,
    candidates: &GraspCandidateSet,
    predictor: &Predictor,
    strategy: Strategy,
    n_trials: usize,
    seed: u64,
) -> Result<TrialSummary> {
    let method = predictor.method();
    if strategy == Strategy::MinEnergy && matches!(method, Method::A | Method::R) {
        return Err(Error::invalid(format!("method {method} has no energies to rank")));
    }
    let mut pose_rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, "poses"));
    let mut pick_rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, "select"));
    let mut records = Vec::with_capacity(n_trials);
    let mut rejected_total = 0;
    for trial in 0..n_trials {
        let (init, goal, truth, rejected) = sample_solvable_pair(world, object, candidates, &mut pose_rng);
        rejected_total += rejected;
        let result = predictor.predict_pair(world, candidates, &init, &goal)?;
        let selected = if method == Method::R {
            Some(random_baseline(candidates, &mut pick_rng)?)
        } else {
            select_grasp(&result, strategy, &mut pick_rng)?
        };
        records.push(TrialRecord {
            trial,
            pose_init: init,
            pose_goal: goal,
            resampled: rejected,
            predicted: result.selected_count(),
            truly_shared: truth.iter().filter(|&&t| t).count(),
            selected,
            success: selected.is_some_and(|i| truth[i]),
            elapsed_secs: result.elapsed_secs,
        });
    }
    let times: Vec<f64> = records.iter().map(|r| r.elapsed_secs).collect();
    let wins = records.iter().filter(|r| r.success).count();
    let drawn = n_trials + rejected_total;
    Ok(TrialSummary {
        method,
        strategy,
        n_trials,
        success_rate: if n_trials == 0 { f64::NAN } else { wins as f64 / n_trials as f64 },
        mean_secs: mean(&times),
        median_secs: median(&times),
        resample_rate: if drawn == 0 { 0.0 } else { rejected_total as f64 / drawn as f64 },
        records,
    })
}

// ---------------------------------------------------------------------------
// timing

pub struct BenchCase<'a> {
    pub candidates: &'a GraspCandidateSet,
    pub predictor: Predictor<'a>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub size: usize,
    pub method: Method,
    pub trials: usize,
    pub mean_secs: f64,
    pub median_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub rows: Vec<TimingRow>,
    /// Per-call wall times, row-major with `rows`.
    pub samples: Vec<Vec<f64>>,
}

impl TimingReport {
    fn method_rows(&self, method: Method) -> Vec<&TimingRow> {
        let mut rows: Vec<&TimingRow> = self.rows.iter().filter(|r| r.method == method).collect();
        rows.sort_by_key(|r| r.size);
        rows
    }

    /// Whether the method's median time strictly increases with candidate count.
    pub fn monotone(&self, method: Method) -> bool {
        self.method_rows(method).windows(2).all(|w| w[1].median_secs > w[0].median_secs)
    }

    /// Median-time ratio `base / other` per candidate count.
    pub fn speedups(&self, base: Method, other: Method) -> Vec<(usize, f64)> {
        let o = self.method_rows(other);
        self.method_rows(base)
            .into_iter()
            .filter_map(|b| {
                o.iter()
                    .find(|r| r.size == b.size)
                    .map(|r| (b.size, b.median_secs / r.median_secs))
            })
            .collect()
    }

    pub fn table(&self) -> ReportTable {
        let mut t = ReportTable::new(
            "timing",
            &["size", "method", "trials", "mean_ms", "median_ms", "speedup_vs_a"],
        );
        let a = self.speedups(Method::A, Method::J);
        for r in &self.rows {
            let speedup = match r.method {
                Method::A => "1.00".to_string(),
                Method::J => a
                    .iter()
                    .find(|(s, _)| *s == r.size)
                    .map(|(_, v)| format!("{v:.2}"))
                    .unwrap_or_default(),
                _ => String::new(),
            };
            t.rows.push(vec![
                r.size.to_string(),
                r.method.to_string(),
                r.trials.to_string(),
                format!("{:.4}", r.mean_secs * 1e3),
                format!("{:.4}", r.median_secs * 1e3),
                speedup,
            ]);
        }
        t
    }
}

/// Times the shared-set computation of every case on the same seeded pose
/// pairs. One untimed warm-up call precedes each case.
pub fn benchmark_timing(
    world: &WorldModel,
    object: &ObjectModel,
    cases: &[BenchCase],
    n_trials: usize,
    seed: u64,
) -> Result<TimingReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, "bench"));
    let pairs: Vec<(Se2Pose, Se2Pose)> = (0..n_trials)
        .map(|_| (sample_valid_pose(world, object, &mut rng), sample_valid_pose(world, object, &mut rng)))
        .collect();
    let mut rows = Vec::new();
    let mut samples = Vec::new();
    for case in cases {
        if let Some((i, g)) = pairs.first() {
            case.predictor.predict_pair(world, case.candidates, i, g)?;
        }
        let mut times = Vec::with_capacity(n_trials);
        for (i, g) in &pairs {
            times.push(case.predictor.predict_pair(world, case.candidates, i, g)?.elapsed_secs);
        }
        rows.push(TimingRow {
            size: case.candidates.len(),
            method: case.predictor.method(),
            trials: n_trials,
            mean_secs: mean(&times),
            median_secs: median(&times),
        });
        samples.push(times);
    }
    Ok(TimingReport { rows, samples })
}

// ---------------------------------------------------------------------------
// report tables

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportTable {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl ReportTable {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn cell_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn from_csv(name: &str, text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let columns = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self {
            name: name.to_string(),
            columns,
            rows,
        })
    }

    pub fn to_markdown(&self) -> String {
        let line = |cells: &[String]| format!("| {} |\n", cells.join(" | ").replace('\n', " "));
        let mut s = line(&self.columns);
        s.push_str(&line(&vec!["---".to_string(); self.columns.len()]));
        for row in &self.rows {
            s.push_str(&line(row));
        }
        s
    }
}

/// Writes each table as `<name>.csv` and/or `<name>.md` under `dir`.
pub fn emit_report(tables: &[ReportTable], dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for t in tables {
        for f in formats {
            let (ext, body) = match f {
                ReportFormat::Csv => ("csv", t.to_csv()?),
                ReportFormat::Markdown => ("md", t.to_markdown()),
            };
            let path = dir.join(format!("{}.{ext}", t.name));
            write_file(&path, body.as_bytes())?;
            out.push(path);
        }
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut s = String::new();
    for item in items {
        s.push_str(&serde_json::to_string(item)?);
        s.push('\n');
    }
    write_file(path, s.as_bytes())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::malformed(path, format!("line {}: {e}", i + 1))))
        .collect()
}

/// `<root>/<experiment>/<unix seconds>/`.
pub fn report_dir(root: &Path, experiment: &str) -> PathBuf {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    root.join(experiment).join(secs.to_string())
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

// ---------------------------------------------------------------------------
// experiment specs and model store

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    DataEfficiency,
    UnseenGrasps,
    UnseenObjects,
    Baselines,
}

/// Parameters of one study. Candidate sets are fixed per (object, count) by
/// `grasp_seed`; every seed in `seeds` regenerates data and retrains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub name: String,
    pub study: Study,
    /// Training object(s); the first is the subject of single-object studies.
    pub objects: Vec<String>,
    /// Object combinations trained on in the unseen-object study.
    pub training_sets: Vec<Vec<String>>,
    /// Objects evaluated in the unseen-object study.
    pub eval_objects: Vec<String>,
    pub candidate_counts: Vec<usize>,
    /// Size of the superset used in the unseen-grasp study.
    pub eval_candidate_count: usize,
    pub grasp_seed: u64,
    pub feasibility_records: usize,
    pub shared_records: usize,
    /// Records per evaluation bundle on the unseen-grasp superset.
    pub eval_records: usize,
    /// (train, test, val) fractions.
    pub split: (f64, f64, f64),
    pub ratios: Vec<f64>,
    pub methods: Vec<Method>,
    pub strategies: Vec<Strategy>,
    pub trials: usize,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    /// Substitute the exact oracle for every learned model.
    pub oracle_stub: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            name: "data_efficiency".into(),
            study: Study::DataEfficiency,
            objects: vec!["bottle".into()],
            training_sets: vec![vec!["bottle".into()]],
            eval_objects: vec!["bottle".into(), "bunny".into(), "mug".into(), "drill".into()],
            candidate_counts: vec![57],
            eval_candidate_count: 922,
            grasp_seed: 0,
            feasibility_records: 75_000,
            shared_records: 75_000,
            eval_records: 46_100,
            split: (2.0 / 3.0, 0.2, 2.0 / 15.0),
            ratios: vec![1.0, 0.5, 0.15, 0.05],
            methods: vec![Method::J, Method::D, Method::L, Method::F],
            strategies: vec![Strategy::Random, Strategy::MinEnergy],
            trials: 500,
            seeds: vec![0, 1, 2],
            train: TrainConfig::default(),
            oracle_stub: false,
        }
    }
}

impl ExperimentSpec {
    pub fn data_efficiency() -> Self {
        Self::default()
    }

    pub fn unseen_grasps() -> Self {
        Self {
            name: "unseen_grasps".into(),
            study: Study::UnseenGrasps,
            candidate_counts: vec![57, 83, 109, 352],
            ratios: vec![1.0],
            ..Self::default()
        }
    }

    pub fn unseen_objects() -> Self {
        Self {
            name: "unseen_objects".into(),
            study: Study::UnseenObjects,
            training_sets: vec![
                vec!["bottle".into()],
                vec!["bottle".into(), "bunny".into()],
                vec!["bottle".into(), "mug".into()],
                vec!["bottle".into(), "drill".into()],
            ],
            candidate_counts: vec![180],
            ratios: vec![1.0],
            ..Self::default()
        }
    }

    pub fn baselines() -> Self {
        Self {
            name: "baselines".into(),
            study: Study::Baselines,
            candidate_counts: vec![57, 109, 352],
            ratios: vec![1.0],
            methods: vec![Method::R, Method::A, Method::J],
            ..Self::default()
        }
    }

    /// Built-in spec by study name.
    pub fn named(name: &str) -> Result<Self> {
        match name {
            "data_efficiency" => Ok(Self::data_efficiency()),
            "unseen_grasps" => Ok(Self::unseen_grasps()),
            "unseen_objects" => Ok(Self::unseen_objects()),
            "baselines" => Ok(Self::baselines()),
            _ => Err(Error::invalid(format!(
                "unknown experiment '{name}' (expected data_efficiency, unseen_grasps, unseen_objects or baselines)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b, c) = self.split;
        if [a, b, c].iter().any(|f| !(0.0..=1.0).contains(f)) || (a + b + c - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("split fractions must lie in [0, 1] and sum to 1"));
        }
        if self.ratios.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
            return Err(Error::invalid("training-data ratios must lie in (0, 1]"));
        }
        if self.seeds.is_empty() || self.candidate_counts.is_empty() || self.objects.is_empty() {
            return Err(Error::invalid("an experiment needs seeds, objects and candidate counts"));
        }
        if self.candidate_counts.contains(&0) || self.feasibility_records == 0 || self.shared_records == 0 {
            return Err(Error::invalid("candidate counts and record counts must be positive"));
        }
        self.train.validate()
    }

    fn uses(&self, m: Method) -> bool {
        self.methods.contains(&m)
    }
}

/// A trained model with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub key: String,
    pub kind: ModelKind,
    pub candidate_set_hash: String,
    #[serde(skip)]
    pub params: Option<MlpParams>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub train_secs: f64,
}

impl TrainedModel {
    pub fn params(&self) -> &MlpParams {
        self.params.as_ref().expect("trained model carries parameters")
    }

    /// The model bound to `candidates`, which may differ from its training set.
    pub fn bind(&self, candidates: &GraspCandidateSet) -> Result<LearnedModel> {
        LearnedModel::new(self.params().clone(), self.kind, candidates)
    }
}

/// Trains on demand, keyed by a hash of everything that determines the
/// result; optionally mirrors models to a directory of checkpoints.
#[derive(Debug, Default)]
pub struct ModelStore {
    dir: Option<PathBuf>,
    models: HashMap<String, TrainedModel>,
}

impl ModelStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: Some(dir.into()),
            models: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn model_key(
        kind: ModelKind,
        cfg: &TrainConfig,
        world: &WorldModel,
        candidates: &GraspCandidateSet,
        train_set: &DatasetBundle,
        val_set: &DatasetBundle,
    ) -> Result<String> {
        let mut h = Sha256::new();
        for part in [
            kind.name().to_string(),
            cfg.digest(),
            world.digest(),
            candidates.content_hash().to_string(),
            bundle_digest(train_set)?,
            bundle_digest(val_set)?,
        ] {
            h.update(part.as_bytes());
            h.update([0]);
        }
        Ok(hex::encode(h.finalize()))
    }

    fn load(&self, key: &str) -> Result<Option<TrainedModel>> {
        let Some(dir) = &self.dir else { return Ok(None) };
        let (ckpt, meta) = (dir.join(format!("{key}.ckpt")), dir.join(format!("{key}.json")));
        if !ckpt.exists() || !meta.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&ckpt).map_err(|e| Error::io(&ckpt, e))?;
        let (params, _) = checkpoint_from_str(&text)?;
        let text = std::fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
        let mut model: TrainedModel = serde_json::from_str(&text)?;
        model.params = Some(params);
        Ok(Some(model))
    }

    fn persist(&self, model: &TrainedModel, cfg: &TrainConfig) -> Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let meta = CheckpointMeta {
            kind: model.kind.name().to_string(),
            candidate_set_hash: model.candidate_set_hash.clone(),
            train_config_digest: cfg.digest(),
        };
        let text = checkpoint_to_string(model.params(), &meta)?;
        write_file(&dir.join(format!("{}.ckpt", model.key)), text.as_bytes())?;
        write_file(
            &dir.join(format!("{}.json", model.key)),
            serde_json::to_string_pretty(model)?.as_bytes(),
        )
    }

    pub fn get_or_train(
        &mut self,
        train_set: &DatasetBundle,
        val_set: &DatasetBundle,
        candidates: &GraspCandidateSet,
        world: &WorldModel,
        cfg: &TrainConfig,
        kind: ModelKind,
    ) -> Result<TrainedModel> {
        let key = Self::model_key(kind, cfg, world, candidates, train_set, val_set)?;
        if let Some(m) = self.models.get(&key) {
            return Ok(m.clone());
        }
        if let Some(m) = self.load(&key)? {
            self.models.insert(key, m.clone());
            return Ok(m);
        }
        let start = Instant::now();
        let out = train(train_set, Some(val_set), candidates, world, cfg, kind)?;
        let model = TrainedModel {
            key: key.clone(),
            kind,
            candidate_set_hash: candidates.content_hash().to_string(),
            params: Some(out.params),
            history: out.history,
            best_epoch: out.best_epoch,
            train_secs: start.elapsed().as_secs_f64(),
        };
        self.persist(&model, cfg)?;
        self.models.insert(key, model.clone());
        Ok(model)
    }
}

// ---------------------------------------------------------------------------
// studies

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: DatasetBundle,
    pub test: DatasetBundle,
    pub val: DatasetBundle,
}

/// Feasibility and shared datasets for one (object, candidate set, seed).
#[derive(Debug, Clone, PartialEq)]
pub struct StudyData {
    pub feasibility: Splits,
    pub shared: Splits,
    pub generate_secs: f64,
}

/// Data seeds depend on the candidate set and object, not on the study,
/// so different studies sharing a configuration share data and models.
pub fn prepare_study_data(
    world: &WorldModel,
    object: &ObjectModel,
    candidates: &GraspCandidateSet,
    spec: &ExperimentSpec,
    seed: u64,
) -> Result<StudyData> {
    let start = Instant::now();
    let tag = format!("{}/{}", object.name, candidates.content_hash());
    let feas = generate_feasibility_dataset(
        world,
        object,
        candidates,
        spec.feasibility_records,
        sub_seed(seed, &format!("feasibility/{tag}")),
    )?;
    let (train, test, val) = split(&feas, spec.split, sub_seed(seed, &format!("split-f/{tag}")))?;
    let feasibility = Splits { train, test, val };
    let shared = generate_shared_dataset(
        world,
        object,
        candidates,
        spec.shared_records,
        sub_seed(seed, &format!("shared/{tag}")),
    )?;
    let (train, test, val) = split(&shared, spec.split, sub_seed(seed, &format!("split-s/{tag}")))?;
    Ok(StudyData {
        feasibility,
        shared: Splits { train, test, val },
        generate_secs: start.elapsed().as_secs_f64(),
    })
}

/// One reported number: a method's metrics in one setting for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub experiment: String,
    pub seed: u64,
    /// Ratio, candidate count or training-object combination.
    pub setting: String,
    pub eval_object: String,
    /// Evaluated object was among the training objects.
    pub seen: bool,
    pub method: Method,
    pub metrics: Metrics,
    pub threshold: f64,
    pub model_key: Option<String>,
    pub candidate_set_hash: String,
    pub test_digest: String,
    pub train_secs: f64,
    pub eval_secs: f64,
    /// Record-level predictions and labels as '0'/'1' strings.
    pub predicted: String,
    pub truth: String,
}

fn pack(mask: &[bool]) -> String {
    mask.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

fn unpack(s: &str) -> Vec<bool> {
    s.chars().map(|c| c == '1').collect()
}

impl CellResult {
    /// Metrics recomputed from the stored record-level outcomes.
    pub fn recompute(&self) -> Result<Metrics> {
        Metrics::from_masks(&unpack(&self.predicted), &unpack(&self.truth))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub spec: ExperimentSpec,
    pub cells: Vec<CellResult>,
}

impl StudyReport {
    pub fn cell(&self, seed: u64, setting: &str, eval_object: &str, method: Method) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.seed == seed && c.setting == setting && c.eval_object == eval_object && c.method == method)
    }

    pub fn f1(&self, seed: u64, setting: &str, eval_object: &str, method: Method) -> Option<f64> {
        self.cell(seed, setting, eval_object, method).map(|c| c.metrics.f1)
    }

    /// Per-seed cells and the across-seed means.
    pub fn tables(&self) -> Vec<ReportTable> {
        let cols = [
            "experiment", "seed", "setting", "object", "seen", "method", "precision", "recall", "f1", "tp", "fp",
            "fn", "tn",
        ];
        let mut per_seed = ReportTable::new(&format!("{}_per_seed", self.spec.name), &cols);
        for c in &self.cells {
            let m = &c.metrics;
            per_seed.rows.push(vec![
                c.experiment.clone(),
                c.seed.to_string(),
                c.setting.clone(),
                c.eval_object.clone(),
                c.seen.to_string(),
                c.method.to_string(),
                pct(m.precision),
                pct(m.recall),
                pct(m.f1),
                m.tp.to_string(),
                m.fp.to_string(),
                m.fn_.to_string(),
                m.tn.to_string(),
            ]);
        }
        let mut summary = ReportTable::new(
            &self.spec.name,
            &["experiment", "seeds", "setting", "object", "seen", "method", "precision", "recall", "f1"],
        );
        let mut keys: Vec<(String, String, bool, Method)> = Vec::new();
        for c in &self.cells {
            let k = (c.setting.clone(), c.eval_object.clone(), c.seen, c.method);
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        for (setting, object, seen, method) in keys {
            let group: Vec<&CellResult> = self
                .cells
                .iter()
                .filter(|c| c.setting == setting && c.eval_object == object && c.method == method)
                .collect();
            let avg = |f: fn(&Metrics) -> f64| mean(&group.iter().map(|c| f(&c.metrics)).collect::<Vec<_>>());
            let seeds: Vec<String> = group.iter().map(|c| c.seed.to_string()).collect();
            summary.rows.push(vec![
                self.spec.name.clone(),
                seeds.join(" "),
                setting,
                object,
                seen.to_string(),
                method.to_string(),
                pct(avg(|m| m.precision)),
                pct(avg(|m| m.recall)),
                pct(avg(|m| m.f1)),
            ]);
        }
        vec![summary, per_seed]
    }

    /// Tables plus `spec.json` and the raw `cells.jsonl` log under `dir`.
    pub fn save(&self, dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
        let mut files = emit_report(&self.tables(), dir, formats)?;
        let spec = dir.join("spec.json");
        write_file(&spec, serde_json::to_string_pretty(&self.spec)?.as_bytes())?;
        let raw = dir.join("cells.jsonl");
        write_jsonl(&raw, &self.cells)?;
        files.extend([spec, raw]);
        Ok(files)
    }

    /// Rebuilds a report from a directory written by [`StudyReport::save`],
    /// recomputing every metric from the stored outcomes.
    pub fn load(dir: &Path) -> Result<Self> {
        let spec_path = dir.join("spec.json");
        let text = std::fs::read_to_string(&spec_path).map_err(|e| Error::io(&spec_path, e))?;
        let spec = serde_json::from_str(&text)?;
        let mut cells: Vec<CellResult> = read_jsonl(&dir.join("cells.jsonl"))?;
        for c in &mut cells {
            c.metrics = c.recompute()?;
        }
        Ok(Self { spec, cells })
    }
}

/// Feasibility-side models, learned or oracle, for one evaluation target.
struct Bound {
    f: Option<Box<dyn FeasibilityEnergy>>,
    d: Option<Box<dyn SharedEnergy>>,
}

fn bind(
    f: Option<&TrainedModel>,
    d: Option<&TrainedModel>,
    oracle: Option<&ObjectModel>,
    candidates: &GraspCandidateSet,
) -> Result<Bound> {
    if let Some(object) = oracle {
        return Ok(Bound {
            f: Some(Box::new(OracleModel { object: object.clone() })),
            d: Some(Box::new(OracleModel { object: object.clone() })),
        });
    }
    let f: Option<Box<dyn FeasibilityEnergy>> = match f {
        Some(m) => Some(Box::new(m.bind(candidates)?)),
        None => None,
    };
    let d: Option<Box<dyn SharedEnergy>> = match d {
        Some(m) => Some(Box::new(m.bind(candidates)?)),
        None => None,
    };
    Ok(Bound { f, d })
}

/// Models for one training configuration plus thresholds calibrated on its
/// in-distribution validation bundles.
struct Fitted {
    f: Option<TrainedModel>,
    d: Option<TrainedModel>,
    thresholds: Thresholds,
}

#[allow(clippy::too_many_arguments)]
fn fit(
    spec: &ExperimentSpec,
    store: &mut ModelStore,
    world: &WorldModel,
    train_object: &ObjectModel,
    candidates: &GraspCandidateSet,
    f_train: &DatasetBundle,
    d_train: &DatasetBundle,
    f_val: &DatasetBundle,
    s_val: &DatasetBundle,
    seed: u64,
) -> Result<Fitted> {
    let cfg = TrainConfig {
        seed: sub_seed(seed, "train"),
        ..spec.train.clone()
    };
    let need_f = spec.uses(Method::J) || spec.uses(Method::L) || spec.uses(Method::F);
    let (f, d) = if spec.oracle_stub {
        (None, None)
    } else {
        let f = if need_f {
            Some(store.get_or_train(f_train, f_val, candidates, world, &cfg, ModelKind::Feasibility)?)
        } else {
            None
        };
        let d = if spec.uses(Method::D) {
            Some(store.get_or_train(d_train, s_val, candidates, world, &cfg, ModelKind::DirectShared)?)
        } else {
            None
        };
        (f, d)
    };
    let oracle = spec.oracle_stub.then_some(train_object);
    let b = bind(f.as_ref(), d.as_ref(), oracle, candidates)?;
    let mut thresholds = Thresholds::default();
    if let Some(m) = &b.f {
        if need_f {
            thresholds.h_f = Some(calibrate_h_f(m.as_ref(), world, candidates, f_val)?);
            thresholds.h_s = Some(calibrate_h_s(m.as_ref(), world, candidates, s_val)?);
        }
    }
    if let (Some(m), true) = (&b.d, spec.uses(Method::D)) {
        thresholds.h_s_prime = Some(calibrate_h_s_prime(m.as_ref(), world, candidates, s_val)?);
    }
    Ok(Fitted { f, d, thresholds })
}

struct Target<'a> {
    object: &'a ObjectModel,
    candidates: &'a GraspCandidateSet,
    feasibility_test: &'a DatasetBundle,
    shared_test: &'a DatasetBundle,
    seen: bool,
}

/// Evaluates every requested method of `fitted` on one target.
fn score(
    spec: &ExperimentSpec,
    world: &WorldModel,
    fitted: &Fitted,
    target: &Target,
    seed: u64,
    setting: &str,
) -> Result<Vec<CellResult>> {
    let oracle = spec.oracle_stub.then_some(target.object);
    let b = bind(fitted.f.as_ref(), fitted.d.as_ref(), oracle, target.candidates)?;
    let th = &fitted.thresholds;
    let mut cells = Vec::new();
    for &method in &spec.methods {
        let (eval, threshold, model) = match method {
            Method::F => {
                let m = b.f.as_deref().expect("feasibility model");
                let e = evaluate_feasibility_bundle(m, th, world, target.candidates, target.feasibility_test)?;
                (e, th.h_f()?, fitted.f.as_ref())
            }
            Method::J | Method::L => {
                let model = b.f.as_deref().expect("feasibility model");
                let (p, h) = if method == Method::J {
                    (Predictor::Joint { model, thresholds: th }, th.h_s()?)
                } else {
                    (Predictor::Conjunction { model, thresholds: th }, th.h_f()?)
                };
                (evaluate_shared_bundle(&p, world, target.candidates, target.shared_test)?, h, fitted.f.as_ref())
            }
            Method::D => {
                let model = b.d.as_deref().expect("direct model");
                let p = Predictor::Direct { model, thresholds: th };
                let e = evaluate_shared_bundle(&p, world, target.candidates, target.shared_test)?;
                (e, th.h_s_prime()?, fitted.d.as_ref())
            }
            Method::A => {
                let p = Predictor::Analytical { object: target.object };
                (evaluate_shared_bundle(&p, world, target.candidates, target.shared_test)?, f64::NAN, None)
            }
            Method::R => continue,
        };
        let test = if method == Method::F { target.feasibility_test } else { target.shared_test };
        cells.push(CellResult {
            experiment: spec.name.clone(),
            seed,
            setting: setting.to_string(),
            eval_object: target.object.name.clone(),
            seen: target.seen,
            method,
            metrics: eval.metrics,
            threshold,
            model_key: model.map(|m| m.key.clone()),
            candidate_set_hash: target.candidates.content_hash().to_string(),
            test_digest: bundle_digest(test)?,
            train_secs: model.map_or(0.0, |m| m.train_secs),
            eval_secs: eval.secs,
            predicted: pack(&eval.predicted),
            truth: pack(&eval.truth),
        });
    }
    Ok(cells)
}

fn object_named(name: &str) -> Result<ObjectModel> {
    builtin_object(name)
}

/// Candidate set for a study: `count` grasps of `object` under `grasp_seed`.
pub fn study_candidates(
    world: &WorldModel,
    object: &ObjectModel,
    count: usize,
    spec: &ExperimentSpec,
) -> Result<GraspCandidateSet> {
    sample_antipodal_grasps(object, &world.gripper, count, spec.grasp_seed)
}

/// Table 2 analogue: J, D, L and F trained on fractions of the training split
/// and scored on the fixed shared (or feasibility, for F) test split.
pub fn data_efficiency_sweep(world: &WorldModel, spec: &ExperimentSpec, store: &mut ModelStore) -> Result<StudyReport> {
    spec.validate()?;
    let object = object_named(&spec.objects[0])?;
    let candidates = study_candidates(world, &object, spec.candidate_counts[0], spec)?;
    let mut cells = Vec::new();
    for &seed in &spec.seeds {
        let data = prepare_study_data(world, &object, &candidates, spec, seed)?;
        for &ratio in &spec.ratios {
            let sub = |b: &DatasetBundle| b.subsample_poses(ratio, sub_seed(seed, &format!("ratio/{ratio}")));
            let fitted = fit(
                spec,
                store,
                world,
                &object,
                &candidates,
                &sub(&data.feasibility.train)?,
                &sub(&data.shared.train)?,
                &data.feasibility.val,
                &data.shared.val,
                seed,
            )?;
            let target = Target {
                object: &object,
                candidates: &candidates,
                feasibility_test: &data.feasibility.test,
                shared_test: &data.shared.test,
                seen: true,
            };
            cells.extend(score(spec, world, &fitted, &target, seed, &format!("{}%", ratio * 100.0))?);
        }
    }
    Ok(StudyReport {
        spec: spec.clone(),
        cells,
    })
}

/// Table 3 analogue: models trained on nested subsets of a larger candidate
/// set, all evaluated on the full set.
pub fn generalization_unseen_grasps(
    world: &WorldModel,
    spec: &ExperimentSpec,
    store: &mut ModelStore,
) -> Result<StudyReport> {
    spec.validate()?;
    let object = object_named(&spec.objects[0])?;
    let superset = study_candidates(world, &object, spec.eval_candidate_count, spec)?;
    let mut cells = Vec::new();
    for &seed in &spec.seeds {
        let tag = format!("{}/{}", object.name, superset.content_hash());
        let feasibility_test = generate_feasibility_dataset(
            world,
            &object,
            &superset,
            spec.eval_records,
            sub_seed(seed, &format!("eval-f/{tag}")),
        )?;
        let shared_test = generate_shared_dataset(
            world,
            &object,
            &superset,
            spec.eval_records,
            sub_seed(seed, &format!("eval-s/{tag}")),
        )?;
        for &count in &spec.candidate_counts {
            let candidates = study_candidates(world, &object, count, spec)?;
            if let Some(g) = candidates.candidates().iter().find(|g| !superset.candidates().contains(g)) {
                return Err(Error::invalid(format!(
                    "training candidate {g:?} is not part of the {}-candidate evaluation set",
                    superset.len()
                )));
            }
            let data = prepare_study_data(world, &object, &candidates, spec, seed)?;
            let fitted = fit(
                spec,
                store,
                world,
                &object,
                &candidates,
                &data.feasibility.train,
                &data.shared.train,
                &data.feasibility.val,
                &data.shared.val,
                seed,
            )?;
            let target = Target {
                object: &object,
                candidates: &superset,
                feasibility_test: &feasibility_test,
                shared_test: &shared_test,
                seen: true,
            };
            cells.extend(score(spec, world, &fitted, &target, seed, &candidates.len().to_string())?);
        }
    }
    Ok(StudyReport {
        spec: spec.clone(),
        cells,
    })
}

/// Table 4 analogue: models trained on object combinations (object identity
/// is not an input), evaluated on every object's test split.
pub fn generalization_unseen_objects(
    world: &WorldModel,
    spec: &ExperimentSpec,
    store: &mut ModelStore,
) -> Result<StudyReport> {
    spec.validate()?;
    let count = spec.candidate_counts[0];
    let mut names: Vec<String> = spec.eval_objects.clone();
    for set in &spec.training_sets {
        if set.is_empty() {
            return Err(Error::invalid("empty training-object combination"));
        }
        for n in set {
            if !names.contains(n) {
                names.push(n.clone());
            }
        }
    }
    let objects: Vec<ObjectModel> = names.iter().map(|n| object_named(n)).collect::<Result<_>>()?;
    let sets: Vec<GraspCandidateSet> = objects
        .iter()
        .map(|o| study_candidates(world, o, count, spec))
        .collect::<Result<_>>()?;
    let idx = |n: &str| names.iter().position(|x| x == n).expect("collected above");
    let mut cells = Vec::new();
    for &seed in &spec.seeds {
        let data: Vec<StudyData> = objects
            .iter()
            .zip(&sets)
            .map(|(o, c)| prepare_study_data(world, o, c, spec, seed))
            .collect::<Result<_>>()?;
        for combo in &spec.training_sets {
            let members: Vec<usize> = combo.iter().map(|n| idx(n)).collect();
            let fitted = if let [only] = members[..] {
                let d = &data[only];
                fit(
                    spec,
                    store,
                    world,
                    &objects[only],
                    &sets[only],
                    &d.feasibility.train,
                    &d.shared.train,
                    &d.feasibility.val,
                    &d.shared.val,
                    seed,
                )?
            } else {
                let mut cands = Vec::new();
                let mut offsets = Vec::new();
                for &m in &members {
                    offsets.push(cands.len());
                    cands.extend_from_slice(sets[m].candidates());
                }
                let union = GraspCandidateSet::new(combo.join("+"), world.gripper.clone(), spec.grasp_seed, cands);
                let cat = |pick: fn(&StudyData) -> &DatasetBundle| {
                    let parts: Vec<&DatasetBundle> = members.iter().map(|&m| pick(&data[m])).collect();
                    concat_bundles(&parts, &offsets, &union)
                };
                fit(
                    spec,
                    store,
                    world,
                    &objects[members[0]],
                    &union,
                    &cat(|d| &d.feasibility.train)?,
                    &cat(|d| &d.shared.train)?,
                    &cat(|d| &d.feasibility.val)?,
                    &cat(|d| &d.shared.val)?,
                    seed,
                )?
            };
            for name in &spec.eval_objects {
                let k = idx(name);
                let target = Target {
                    object: &objects[k],
                    candidates: &sets[k],
                    feasibility_test: &data[k].feasibility.test,
                    shared_test: &data[k].shared.test,
                    seen: members.contains(&k),
                };
                cells.extend(score(spec, world, &fitted, &target, seed, &combo.join("+"))?);
            }
        }
    }
    Ok(StudyReport {
        spec: spec.clone(),
        cells,
    })
}

/// Table 1 analogue: success rate and prediction time per candidate-set
/// size and method/strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub size: usize,
    pub seed: u64,
    pub summary: TrialSummary,
}

pub fn baseline_trials(
    world: &WorldModel,
    spec: &ExperimentSpec,
    store: &mut ModelStore,
) -> Result<(Vec<BaselineRow>, ReportTable)> {
    spec.validate()?;
    let object = object_named(&spec.objects[0])?;
    let mut rows = Vec::new();
    let seed = spec.seeds[0];
    for &count in &spec.candidate_counts {
        let candidates = study_candidates(world, &object, count, spec)?;
        let learned = spec.methods.iter().any(|m| matches!(m, Method::J | Method::L | Method::D));
        let fitted = if learned {
            let data = prepare_study_data(world, &object, &candidates, spec, seed)?;
            Some(fit(
                spec,
                store,
                world,
                &object,
                &candidates,
                &data.feasibility.train,
                &data.shared.train,
                &data.feasibility.val,
                &data.shared.val,
                seed,
            )?)
        } else {
            None
        };
        let oracle = spec.oracle_stub.then_some(&object);
        let b = match &fitted {
            Some(f) => bind(f.f.as_ref(), f.d.as_ref(), oracle, &candidates)?,
            None => Bound { f: None, d: None },
        };
        let th = fitted.as_ref().map(|f| f.thresholds.clone()).unwrap_or_default();
        for &method in &spec.methods {
            let predictor = match method {
                Method::A => Predictor::Analytical { object: &object },
                Method::R => Predictor::Random,
                Method::J => Predictor::Joint {
                    model: b.f.as_deref().expect("feasibility model"),
                    thresholds: &th,
                },
                Method::L => Predictor::Conjunction {
                    model: b.f.as_deref().expect("feasibility model"),
                    thresholds: &th,
                },
                Method::D => Predictor::Direct {
                    model: b.d.as_deref().expect("direct model"),
                    thresholds: &th,
                },
                Method::F => continue,
            };
            let strategies: &[Strategy] = if matches!(method, Method::A | Method::R) {
                &[Strategy::Random]
            } else {
                &spec.strategies
            };
            for &strategy in strategies {
                let summary = success_rate_trial(world, &object, &candidates, &predictor, strategy, spec.trials, seed)?;
                rows.push(BaselineRow {
                    size: candidates.len(),
                    seed,
                    summary,
                });
            }
        }
    }
    let mut table = ReportTable::new(
        &spec.name,
        &["seed", "size", "method", "strategy", "trials", "success_rate", "mean_ms", "median_ms", "resample_rate"],
    );
    for r in &rows {
        let s = &r.summary;
        table.rows.push(vec![
            r.seed.to_string(),
            r.size.to_string(),
            s.method.to_string(),
            format!("{:?}", s.strategy).to_lowercase(),
            s.n_trials.to_string(),
            pct(s.success_rate),
            format!("{:.4}", s.mean_secs * 1e3),
            format!("{:.4}", s.median_secs * 1e3),
            format!("{:.4}", s.resample_rate),
        ]);
    }
    Ok((rows, table))
}
