//! Labeled records, pose-level splits and the JSONL bundle format.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Se2Pose;
use crate::scene::{
    label_feasible, pose_is_valid, sample_object_pose, write_file, GraspCandidateSet,
    ObjectModel, WorldModel,
};

const FORMAT: &str = "grasp-ebm-dataset";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityRecord {
    pub pose: Se2Pose,
    #[serde(rename = "grasp")]
    pub grasp_index: usize,
    pub label: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharedRecord {
    pub pose_init: Se2Pose,
    pub pose_goal: Se2Pose,
    #[serde(rename = "grasp")]
    pub grasp_index: usize,
    pub label: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Feasibility,
    Shared,
}

impl std::fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DatasetKind::Feasibility => "feasibility",
            DatasetKind::Shared => "shared",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    /// Unsplit output of a generator.
    Full,
    Train,
    Test,
    Val,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Records {
    Feasibility(Vec<FeasibilityRecord>),
    Shared(Vec<SharedRecord>),
}

impl Records {
    pub fn kind(&self) -> DatasetKind {
        match self {
            Records::Feasibility(_) => DatasetKind::Feasibility,
            Records::Shared(_) => DatasetKind::Shared,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Records::Feasibility(r) => r.len(),
            Records::Shared(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn label(&self, i: usize) -> bool {
        match self {
            Records::Feasibility(r) => r[i].label,
            Records::Shared(r) => r[i].label,
        }
    }

    pub fn grasp_index(&self, i: usize) -> usize {
        match self {
            Records::Feasibility(r) => r[i].grasp_index,
            Records::Shared(r) => r[i].grasp_index,
        }
    }

    pub fn labels(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.label(i)).collect()
    }

    /// Bit-exact key of the pose (or pose pair) behind record `i`.
    fn pose_key(&self, i: usize) -> [u64; 6] {
        let bits = |p: &Se2Pose| [p.x().to_bits(), p.y().to_bits(), p.theta().to_bits()];
        match self {
            Records::Feasibility(r) => {
                let a = bits(&r[i].pose);
                [a[0], a[1], a[2], 0, 0, 0]
            }
            Records::Shared(r) => {
                let a = bits(&r[i].pose_init);
                let b = bits(&r[i].pose_goal);
                [a[0], a[1], a[2], b[0], b[1], b[2]]
            }
        }
    }

    fn select(&self, idx: &[usize]) -> Records {
        match self {
            Records::Feasibility(r) => Records::Feasibility(idx.iter().map(|&i| r[i]).collect()),
            Records::Shared(r) => Records::Shared(idx.iter().map(|&i| r[i]).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub candidate_set_hash: String,
    pub world_digest: String,
    pub seed: u64,
    pub split_tag: SplitTag,
    pub records: Records,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    kind: DatasetKind,
    candidate_set_hash: String,
    world_digest: String,
    seed: u64,
    split: SplitTag,
    record_count: usize,
    positive_count: usize,
}

impl DatasetBundle {
    pub fn kind(&self) -> DatasetKind {
        self.records.kind()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn positive_count(&self) -> usize {
        (0..self.len()).filter(|&i| self.records.label(i)).count()
    }

    pub fn positive_fraction(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.positive_count() as f64 / self.len() as f64
        }
    }

    /// Record index ranges grouped by pose (or pose pair), in order of first
    /// appearance. Identical poses anywhere in the bundle share a group.
    pub fn pose_groups(&self) -> Vec<Vec<usize>> {
        let mut index: HashMap<[u64; 6], usize> = HashMap::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for i in 0..self.len() {
            let key = self.records.pose_key(i);
            let g = *index.entry(key).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(i);
        }
        groups
    }

    pub fn check_candidates(&self, candidates: &GraspCandidateSet) -> Result<()> {
        if self.candidate_set_hash != candidates.content_hash() {
            return Err(Error::HashMismatch {
                expected: self.candidate_set_hash.clone(),
                found: candidates.content_hash().to_string(),
            });
        }
        for i in 0..self.len() {
            let g = self.records.grasp_index(i);
            if g >= candidates.len() {
                return Err(Error::IndexOutOfRange {
                    index: g,
                    len: candidates.len(),
                });
            }
        }
        Ok(())
    }

    fn with_records(&self, records: Records, split_tag: SplitTag) -> Self {
        Self {
            candidate_set_hash: self.candidate_set_hash.clone(),
            world_digest: self.world_digest.clone(),
            seed: self.seed,
            split_tag,
            records,
        }
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let header = Header {
            format: FORMAT.to_string(),
            version: VERSION,
            kind: self.kind(),
            candidate_set_hash: self.candidate_set_hash.clone(),
            world_digest: self.world_digest.clone(),
            seed: self.seed,
            split: self.split_tag,
            record_count: self.len(),
            positive_count: self.positive_count(),
        };
        let mut out = serde_json::to_string(&header)?;
        out.push('\n');
        match &self.records {
            Records::Feasibility(rs) => {
                for r in rs {
                    out.push_str(&serde_json::to_string(r)?);
                    out.push('\n');
                }
            }
            Records::Shared(rs) => {
                for r in rs {
                    out.push_str(&serde_json::to_string(r)?);
                    out.push('\n');
                }
            }
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines();
        let header: Header = serde_json::from_str(lines.next().ok_or("empty file")?)
            .map_err(|e| format!("bad header: {e}"))?;
        if header.format != FORMAT || header.version != VERSION {
            return Err(format!(
                "unsupported format {} v{}",
                header.format, header.version
            ));
        }
        let body: Vec<&str> = lines.filter(|l| !l.trim().is_empty()).collect();
        if body.len() != header.record_count {
            return Err(format!(
                "header declares {} records, body has {}",
                header.record_count,
                body.len()
            ));
        }
        let parse_err = |i: usize, e: serde_json::Error| format!("record {}: {e}", i + 1);
        let records = match header.kind {
            DatasetKind::Feasibility => Records::Feasibility(
                body.iter()
                    .enumerate()
                    .map(|(i, l)| serde_json::from_str(l).map_err(|e| parse_err(i, e)))
                    .collect::<std::result::Result<_, _>>()?,
            ),
            DatasetKind::Shared => Records::Shared(
                body.iter()
                    .enumerate()
                    .map(|(i, l)| serde_json::from_str(l).map_err(|e| parse_err(i, e)))
                    .collect::<std::result::Result<_, _>>()?,
            ),
        };
        let bundle = Self {
            candidate_set_hash: header.candidate_set_hash,
            world_digest: header.world_digest,
            seed: header.seed,
            split_tag: header.split,
            records,
        };
        if bundle.positive_count() != header.positive_count {
            return Err(format!(
                "header declares {} positives, body has {}",
                header.positive_count,
                bundle.positive_count()
            ));
        }
        Ok(bundle)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_jsonl()?.as_bytes())
    }

    /// Loads a bundle and checks it against `candidates`.
    pub fn load(path: &Path, candidates: &GraspCandidateSet) -> Result<Self> {
        let bundle = Self::load_unchecked(path)?;
        bundle.check_candidates(candidates)?;
        Ok(bundle)
    }

    pub fn load_unchecked(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text).map_err(|reason| Error::malformed(path, reason))
    }

    /// Keeps a seeded `ratio` of the pose groups (at least one).
    pub fn subsample_poses(&self, ratio: f64, seed: u64) -> Result<Self> {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::invalid(format!("ratio {ratio} outside (0, 1]")));
        }
        let groups = self.pose_groups();
        let keep = ((ratio * groups.len() as f64).round() as usize).clamp(1, groups.len().max(1));
        let mut order: Vec<usize> = (0..groups.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut chosen: Vec<usize> = order[..keep.min(groups.len())].to_vec();
        chosen.sort_unstable();
        let idx: Vec<usize> = chosen.iter().flat_map(|&g| groups[g].iter().copied()).collect();
        Ok(self.with_records(self.records.select(&idx), self.split_tag))
    }
}

fn check_n(n_records: usize) -> Result<()> {
    if n_records == 0 {
        return Err(Error::invalid("n_records must be at least 1"));
    }
    Ok(())
}

fn check_set(candidates: &GraspCandidateSet) -> Result<()> {
    if candidates.is_empty() {
        return Err(Error::invalid("candidate set is empty"));
    }
    Ok(())
}

/// Samples object poses and labels every candidate at each. Poses where
/// the object overlaps an obstacle are skipped; the last pose is truncated
/// so exactly `n_records` records are produced.
pub fn generate_feasibility_dataset(
    world: &WorldModel,
    object: &ObjectModel,
    candidates: &GraspCandidateSet,
    n_records: usize,
    seed: u64,
) -> Result<DatasetBundle> {
    check_n(n_records)?;
    check_set(candidates)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n_records);
    while records.len() < n_records {
        let pose = sample_object_pose(world, &mut rng);
        let labels = label_feasible(world, object, candidates, &pose);
        if !labels.pose_valid {
            continue;
        }
        for (i, &label) in labels.mask.iter().enumerate() {
            if records.len() == n_records {
                break;
            }
            records.push(FeasibilityRecord {
                pose,
                grasp_index: i,
                label,
            });
        }
    }
    Ok(DatasetBundle {
        candidate_set_hash: candidates.content_hash().to_string(),
        world_digest: world.digest(),
        seed,
        split_tag: SplitTag::Full,
        records: Records::Feasibility(records),
    })
}

/// As [`generate_feasibility_dataset`] over independent pose pairs.
pub fn generate_shared_dataset(
    world: &WorldModel,
    object: &ObjectModel,
    candidates: &GraspCandidateSet,
    n_records: usize,
    seed: u64,
) -> Result<DatasetBundle> {
    check_n(n_records)?;
    check_set(candidates)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n_records);
    while records.len() < n_records {
        let init = sample_object_pose(world, &mut rng);
        let goal = sample_object_pose(world, &mut rng);
        if !pose_is_valid(world, object, &init) || !pose_is_valid(world, object, &goal) {
            continue;
        }
        let a = label_feasible(world, object, candidates, &init);
        let b = label_feasible(world, object, candidates, &goal);
        for i in 0..candidates.len() {
            if records.len() == n_records {
                break;
            }
            records.push(SharedRecord {
                pose_init: init,
                pose_goal: goal,
                grasp_index: i,
                label: a.mask[i] && b.mask[i],
            });
        }
    }
    Ok(DatasetBundle {
        candidate_set_hash: candidates.content_hash().to_string(),
        world_digest: world.digest(),
        seed,
        split_tag: SplitTag::Full,
        records: Records::Shared(records),
    })
}

/// Pose-level split into (train, test, val) with the given fractions.
pub fn split(
    bundle: &DatasetBundle,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(DatasetBundle, DatasetBundle, DatasetBundle)> {
    let (ft, fs, fv) = fractions;
    let ok = |f: f64| f.is_finite() && (0.0..=1.0).contains(&f);
    if !(ok(ft) && ok(fs) && ok(fv)) || ((ft + fs + fv) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split fractions ({ft}, {fs}, {fv}) must be in [0, 1] and sum to 1"
        )));
    }
    let groups = bundle.pose_groups();
    let g = groups.len();
    let n_train = ((ft * g as f64).round() as usize).min(g);
    let n_test = ((fs * g as f64).round() as usize).min(g - n_train);

    let mut order: Vec<usize> = (0..g).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let part = |range: std::ops::Range<usize>, tag: SplitTag| {
        let mut chosen: Vec<usize> = order[range].to_vec();
        chosen.sort_unstable();
        let idx: Vec<usize> = chosen.iter().flat_map(|&k| groups[k].iter().copied()).collect();
        bundle.with_records(bundle.records.select(&idx), tag)
    };
    let train = part(0..n_train, SplitTag::Train);
    let test = part(n_train..n_train + n_test, SplitTag::Test);
    let val = part(n_train + n_test..g, SplitTag::Val);
    Ok((train, test, val))
}

/// Stacks bundles built over different candidate sets into one bundle over
/// their concatenation; `offsets[k]` is where part `k`'s candidates start.
pub fn concat_bundles(
    parts: &[&DatasetBundle],
    offsets: &[usize],
    union: &GraspCandidateSet,
) -> Result<DatasetBundle> {
    let (Some(first), true) = (parts.first(), parts.len() == offsets.len()) else {
        return Err(Error::invalid("need one offset per bundle and at least one bundle"));
    };
    let mut records = match first.kind() {
        DatasetKind::Feasibility => Records::Feasibility(Vec::new()),
        DatasetKind::Shared => Records::Shared(Vec::new()),
    };
    for (part, &off) in parts.iter().zip(offsets) {
        if part.world_digest != first.world_digest {
            return Err(Error::invalid("bundles come from different worlds"));
        }
        match (&mut records, &part.records) {
            (Records::Feasibility(out), Records::Feasibility(r)) => out.extend(r.iter().map(|x| FeasibilityRecord {
                grasp_index: x.grasp_index + off,
                ..*x
            })),
            (Records::Shared(out), Records::Shared(r)) => out.extend(r.iter().map(|x| SharedRecord {
                grasp_index: x.grasp_index + off,
                ..*x
            })),
            _ => return Err(Error::invalid("cannot mix feasibility and shared bundles")),
        }
    }
    let bundle = DatasetBundle {
        candidate_set_hash: union.content_hash().to_string(),
        world_digest: first.world_digest.clone(),
        seed: first.seed,
        split_tag: first.split_tag,
        records,
    };
    bundle.check_candidates(union)?;
    Ok(bundle)
}

/// One-line human summary used by the CLI.
pub fn describe(bundle: &DatasetBundle) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "{} {:?}: {} records over {} poses, positive fraction {:.4}",
        bundle.kind(),
        bundle.split_tag,
        bundle.len(),
        bundle.pose_groups().len(),
        bundle.positive_fraction()
    );
    s
}
