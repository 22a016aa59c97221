//! Objects, grasp candidates, pose sampling and ground-truth labeling.

use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{
    polygons_intersect, transform_polygon, Point2, Polygon, Se2Pose,
};
use crate::robot::{
    canonical_gripper_occupancy, check_feasible_placed, ArmGeometry, FeasibilityLabel,
    GripperGeometry,
};

pub const DEFAULT_FRICTION_HALF_ANGLE: f64 = 0.15;

/// Names of the shipped object outlines.
pub const BUILTIN_OBJECTS: [&str; 4] = ["bottle", "mug", "bunny", "drill"];

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectModel {
    pub name: String,
    outline: Polygon,
    pub friction_half_angle: f64,
}

impl ObjectModel {
    /// Builds an object, re-centering the outline on its area centroid.
    pub fn new(name: impl Into<String>, outline: Polygon, friction_half_angle: f64) -> Result<Self> {
        if !(friction_half_angle > 0.0 && friction_half_angle < std::f64::consts::FRAC_PI_2) {
            return Err(Error::invalid("friction half-angle must be in (0, π/2)"));
        }
        let c = outline.centroid();
        let outline = outline.translated(Point2::new(-c.x, -c.y));
        Ok(Self {
            name: name.into(),
            outline,
            friction_half_angle,
        })
    }

    pub fn outline(&self) -> &Polygon {
        &self.outline
    }

    pub fn from_polygon_file(name: &str, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let poly = parse_polygon_text(&text).map_err(|e| Error::malformed(path, e.to_string()))?;
        Self::new(name, poly, DEFAULT_FRICTION_HALF_ANGLE)
    }
}

/// Parses "x y" vertex lines. Blank lines and `#` comments are ignored.
pub fn parse_polygon_text(text: &str) -> Result<Polygon> {
    let mut pts = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let nums: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::invalid(format!("line {}: {e}", lineno + 1)))?;
        if nums.len() != 2 {
            return Err(Error::invalid(format!(
                "line {}: expected 'x y', got {} values",
                lineno + 1,
                nums.len()
            )));
        }
        pts.push(Point2::new(nums[0], nums[1]));
    }
    Polygon::new(pts)
}

pub fn write_polygon_text(poly: &Polygon) -> String {
    poly.vertices()
        .iter()
        .map(|p| format!("{} {}\n", p.x, p.y))
        .collect()
}

pub fn builtin_object(name: &str) -> Result<ObjectModel> {
    let text = match name {
        "bottle" => include_str!("../data/objects/bottle.txt"),
        "mug" => include_str!("../data/objects/mug.txt"),
        "bunny" => include_str!("../data/objects/bunny.txt"),
        "drill" => include_str!("../data/objects/drill.txt"),
        other => return Err(Error::UnknownObject(other.to_string())),
    };
    ObjectModel::new(name, parse_polygon_text(text)?, DEFAULT_FRICTION_HALF_ANGLE)
}

/// A gripper tool pose in the object frame plus the contact width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspCandidate {
    pub pose: Se2Pose,
    pub width: f64,
    pub width_normalized: f64,
}

impl GraspCandidate {
    pub fn new(pose: Se2Pose, width: f64, max_width: f64) -> Self {
        Self {
            pose,
            width,
            width_normalized: width / max_width,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CandidateRecord {
    x: f64,
    y: f64,
    theta: f64,
    width: f64,
}

#[derive(Serialize, Deserialize)]
struct CandidateSetFile {
    object_name: String,
    gripper: GripperGeometry,
    seed: u64,
    candidates: Vec<CandidateRecord>,
    content_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraspCandidateSet {
    pub object_name: String,
    pub gripper: GripperGeometry,
    pub seed: u64,
    candidates: Vec<GraspCandidate>,
    content_hash: String,
}

impl GraspCandidateSet {
    pub fn new(
        object_name: impl Into<String>,
        gripper: GripperGeometry,
        seed: u64,
        candidates: Vec<GraspCandidate>,
    ) -> Self {
        let content_hash = hash_candidates(&candidates);
        Self {
            object_name: object_name.into(),
            gripper,
            seed,
            candidates,
            content_hash,
        }
    }

    pub fn candidates(&self) -> &[GraspCandidate] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn get(&self, index: usize) -> Result<&GraspCandidate> {
        self.candidates.get(index).ok_or(Error::IndexOutOfRange {
            index,
            len: self.candidates.len(),
        })
    }

    pub fn content_hash(&self) -> &str {
        &self.content_hash
    }

    /// Keeps the candidates at `indices` (in the given order).
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let picked = indices
            .iter()
            .map(|&i| self.get(i).copied())
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(self.object_name.clone(), self.gripper.clone(), self.seed, picked))
    }

    pub fn to_json(&self) -> Result<String> {
        let file = CandidateSetFile {
            object_name: self.object_name.clone(),
            gripper: self.gripper.clone(),
            seed: self.seed,
            candidates: self
                .candidates
                .iter()
                .map(|c| CandidateRecord {
                    x: c.pose.x(),
                    y: c.pose.y(),
                    theta: c.pose.theta(),
                    width: c.width,
                })
                .collect(),
            content_hash: self.content_hash.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Parses a candidate-set document and verifies its content hash.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: CandidateSetFile = serde_json::from_str(text)?;
        let max_width = file.gripper.max_width;
        let candidates = file
            .candidates
            .iter()
            .map(|c| GraspCandidate::new(Se2Pose::new(c.x, c.y, c.theta), c.width, max_width))
            .collect();
        let set = Self::new(file.object_name, file.gripper, file.seed, candidates);
        if set.content_hash != file.content_hash {
            return Err(Error::HashMismatch {
                expected: file.content_hash,
                found: set.content_hash,
            });
        }
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::malformed(path, j.to_string()),
            other => other,
        })
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn hash_candidates(cands: &[GraspCandidate]) -> String {
    let mut h = Sha256::new();
    h.update((cands.len() as u64).to_le_bytes());
    for c in cands {
        for v in [c.pose.x(), c.pose.y(), c.pose.theta(), c.width] {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Axis-aligned sampling region for object positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Default for Workspace {
    fn default() -> Self {
        Self {
            x: (-0.45, 0.45),
            y: (0.1, 0.6),
        }
    }
}

impl Workspace {
    pub fn contains(&self, p: &Se2Pose, tol: f64) -> bool {
        p.x() >= self.x.0 - tol
            && p.x() <= self.x.1 + tol
            && p.y() >= self.y.0 - tol
            && p.y() <= self.y.1 + tol
    }

    pub fn center(&self) -> Point2 {
        Point2::new(0.5 * (self.x.0 + self.x.1), 0.5 * (self.y.0 + self.y.1))
    }
}

fn default_true() -> bool {
    true
}

fn default_clearance() -> f64 {
    0.01
}

fn default_pos_res() -> f64 {
    0.001
}

fn default_ang_res() -> f64 {
    0.01
}

/// Arm, gripper, static obstacles and the object-placement workspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldModel {
    pub arm: ArmGeometry,
    pub gripper: GripperGeometry,
    #[serde(with = "polygon_list")]
    pub obstacles: Vec<Polygon>,
    pub workspace: Workspace,
    /// Extra finger opening beyond the contact width during the check.
    #[serde(default = "default_clearance")]
    pub approach_clearance: f64,
    #[serde(default = "default_true")]
    pub check_arm_links: bool,
    #[serde(default = "default_pos_res")]
    pub position_resolution: f64,
    #[serde(default = "default_ang_res")]
    pub angle_resolution: f64,
}

impl Default for WorldModel {
    fn default() -> Self {
        Self {
            arm: ArmGeometry::default(),
            gripper: GripperGeometry::default(),
            obstacles: default_obstacles(),
            workspace: Workspace::default(),
            approach_clearance: default_clearance(),
            check_arm_links: true,
            position_resolution: default_pos_res(),
            angle_resolution: default_ang_res(),
        }
    }
}

/// Two rear wall segments behind the workspace and one block inside it.
pub fn default_obstacles() -> Vec<Polygon> {
    vec![
        Polygon::rect(-0.60, 0.70, -0.04, 0.74).expect("static wall"),
        Polygon::rect(0.04, 0.70, 0.60, 0.74).expect("static wall"),
        Polygon::rect(0.18, 0.20, 0.26, 0.28).expect("static block"),
    ]
}

impl WorldModel {
    pub fn validate(&self) -> Result<()> {
        self.arm.validate()?;
        self.gripper.validate()?;
        let ws = &self.workspace;
        if !(ws.x.0 < ws.x.1 && ws.y.0 < ws.y.1) {
            return Err(Error::invalid("workspace intervals must be non-empty"));
        }
        if !(self.position_resolution > 0.0 && self.angle_resolution > 0.0) {
            return Err(Error::invalid("sampling resolutions must be positive"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("world model serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// True when the object placed at `pose` overlaps a static obstacle.
    pub fn object_blocked(&self, placed: &Polygon) -> bool {
        self.obstacles.iter().any(|o| polygons_intersect(placed, o))
    }
}

mod polygon_list {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::geometry::{Point2, Polygon};

    pub fn serialize<S: Serializer>(polys: &[Polygon], s: S) -> Result<S::Ok, S::Error> {
        let raw: Vec<Vec<[f64; 2]>> = polys
            .iter()
            .map(|p| p.vertices().iter().map(|v| [v.x, v.y]).collect())
            .collect();
        raw.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Polygon>, D::Error> {
        let raw = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        raw.into_iter()
            .map(|vs| {
                Polygon::new(vs.into_iter().map(|[x, y]| Point2::new(x, y)).collect())
                    .map_err(serde::de::Error::custom)
            })
            .collect()
    }
}

/// Knobs for antipodal candidate generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspSampler {
    /// Arc-length spacing of contact samples along the shorter edge (m).
    pub contact_spacing: f64,
    /// Contact depth inside the jaws, as a fraction of finger length.
    pub depth_range: (f64, f64),
    /// Tilt the closing direction uniformly inside the friction cone.
    pub tilt_in_cone: bool,
    /// Extra opening used for the canonical collision check (m).
    pub approach_clearance: f64,
}

impl Default for GraspSampler {
    fn default() -> Self {
        Self {
            contact_spacing: 0.0001,
            depth_range: (0.5, 0.92),
            tilt_in_cone: true,
            approach_clearance: 0.01,
        }
    }
}

struct Edge {
    a: Point2,
    b: Point2,
    normal: Point2,
    len: f64,
}

fn outline_edges(poly: &Polygon) -> Vec<Edge> {
    poly.edges()
        .map(|(a, b)| {
            let d = b - a;
            let len = d.norm();
            // outward normal of a CCW edge
            let normal = Point2::new(d.y / len, -d.x / len);
            Edge { a, b, normal, len }
        })
        .collect()
}

/// Nearest forward hit of the ray `origin + t·dir` against all edges except `skip`.
fn ray_cast(edges: &[Edge], skip: usize, origin: Point2, dir: Point2) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (k, e) in edges.iter().enumerate() {
        if k == skip {
            continue;
        }
        let s = e.b - e.a;
        let denom = dir.cross(s);
        if denom.abs() < 1e-15 {
            continue;
        }
        let w = e.a - origin;
        let t = w.cross(s) / denom;
        let u = w.cross(dir) / denom;
        if t > 1e-9 && (-1e-12..=1.0 + 1e-12).contains(&u) && best.is_none_or(|(_, bt)| t < bt) {
            best = Some((k, t));
        }
    }
    best
}

impl GraspSampler {
    /// Dense pool of collision-free antipodal candidates in a stable order.
    pub fn candidate_pool(
        &self,
        object: &ObjectModel,
        gripper: &GripperGeometry,
        seed: u64,
    ) -> Vec<GraspCandidate> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let edges = outline_edges(object.outline());
        let cos_tol = object.friction_half_angle.cos();
        let canon_outline = object.outline();
        let mut pool = Vec::new();

        for i in 0..edges.len() {
            for j in (i + 1)..edges.len() {
                if edges[i].normal.dot(edges[j].normal) > -cos_tol {
                    continue;
                }
                let (s, o) = if edges[j].len < edges[i].len { (j, i) } else { (i, j) };
                let es = &edges[s];
                let eo = &edges[o];
                let dir_s = (es.b - es.a).scale(1.0 / es.len);
                let offset: f64 = rng.random();
                let n_samples = ((es.len / self.contact_spacing) - offset).floor().max(0.0) as usize;
                for k in 0..=n_samples {
                    let along = (k as f64 + offset) * self.contact_spacing;
                    if along >= es.len {
                        break;
                    }
                    let p = es.a + dir_s.scale(along);
                    let tilt = if self.tilt_in_cone {
                        rng.random_range(-object.friction_half_angle..=object.friction_half_angle)
                    } else {
                        0.0
                    };
                    let depths: [f64; 2] = [
                        rng.random_range(self.depth_range.0..=self.depth_range.1),
                        rng.random_range(self.depth_range.0..=self.depth_range.1),
                    ];
                    let close_dir = es.normal.scale(-1.0).rotate(tilt);
                    let Some((hit, t)) = ray_cast(&edges, s, p, close_dir) else {
                        continue;
                    };
                    // contact line must stay inside both friction cones
                    if hit != o || close_dir.dot(eo.normal) < cos_tol {
                        continue;
                    }
                    let width = t;
                    if !(width > 0.0 && width <= gripper.max_width) {
                        continue;
                    }
                    let q = p + close_dir.scale(t);
                    let mid = (p + q).scale(0.5);
                    let approach = close_dir.perp();
                    for (flip, depth_frac) in depths.iter().enumerate() {
                        let a = if flip == 0 { approach } else { approach.scale(-1.0) };
                        let depth = depth_frac * gripper.finger_length;
                        let origin = mid - a.scale(depth);
                        let pose = Se2Pose::new(origin.x, origin.y, a.y.atan2(a.x));
                        let opening = gripper.pre_contact_opening(width, self.approach_clearance);
                        let Ok(bodies) = canonical_gripper_occupancy(gripper, opening) else {
                            continue;
                        };
                        let clear = bodies
                            .iter()
                            .all(|b| !polygons_intersect(&transform_polygon(b, &pose), canon_outline));
                        if clear {
                            pool.push(GraspCandidate::new(pose, width, gripper.max_width));
                        }
                    }
                }
            }
        }
        pool
    }

    /// Up to `count` candidates chosen from the pool by a seeded
    /// low-discrepancy ordering. For one seed, smaller requests return
    /// subsets of larger ones.
    pub fn sample(
        &self,
        object: &ObjectModel,
        gripper: &GripperGeometry,
        count: usize,
        seed: u64,
    ) -> Result<GraspCandidateSet> {
        if count == 0 {
            return Err(Error::invalid("candidate count must be at least 1"));
        }
        let pool = self.candidate_pool(object, gripper, seed);
        let picked = stratified_prefix(pool.len(), count, seed);
        let cands = picked.into_iter().map(|i| pool[i]).collect();
        Ok(GraspCandidateSet::new(object.name.clone(), gripper.clone(), seed, cands))
    }
}

/// Base-2 radical inverse.
fn van_der_corput(mut k: u64) -> f64 {
    let mut inv = 0.5;
    let mut out = 0.0;
    while k > 0 {
        if k & 1 == 1 {
            out += inv;
        }
        inv *= 0.5;
        k >>= 1;
    }
    out
}

/// First `count` distinct pool indices visited by a shifted van der Corput
/// sequence, returned in ascending order.
pub(crate) fn stratified_prefix(pool_len: usize, count: usize, seed: u64) -> Vec<usize> {
    if pool_len <= count {
        return (0..pool_len).collect();
    }
    let shift: f64 = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed).random();
    let mut taken = vec![false; pool_len];
    let mut out = Vec::with_capacity(count);
    let mut k = 0u64;
    while out.len() < count {
        let u = (van_der_corput(k) + shift).fract();
        let idx = ((u * pool_len as f64) as usize).min(pool_len - 1);
        if !taken[idx] {
            taken[idx] = true;
            out.push(idx);
        }
        k += 1;
    }
    out.sort_unstable();
    out
}

pub fn sample_antipodal_grasps(
    object: &ObjectModel,
    gripper: &GripperGeometry,
    count: usize,
    seed: u64,
) -> Result<GraspCandidateSet> {
    GraspSampler::default().sample(object, gripper, count, seed)
}

/// Uniform pose on the workspace lattice.
pub fn sample_object_pose<R: Rng + ?Sized>(world: &WorldModel, rng: &mut R) -> Se2Pose {
    let res = world.position_resolution;
    let ws = &world.workspace;
    let lattice = |lo: f64, hi: f64| ((lo / res).ceil() as i64, (hi / res).floor() as i64);
    let (x0, x1) = lattice(ws.x.0, ws.x.1);
    let (y0, y1) = lattice(ws.y.0, ws.y.1);
    let kx = rng.random_range(x0..=x1);
    let ky = rng.random_range(y0..=y1);
    let n_theta = (TAU / world.angle_resolution).ceil() as i64;
    let mut kt = rng.random_range(0..n_theta);
    if kt as f64 * world.angle_resolution >= TAU {
        kt -= 1;
    }
    // integer-over-reciprocal keeps lattice values exact to the last ulp
    let inv = (1.0 / res).round();
    let to_len = |k: i64| if (inv * res - 1.0).abs() < 1e-12 { k as f64 / inv } else { k as f64 * res };
    Se2Pose::new(to_len(kx), to_len(ky), kt as f64 * world.angle_resolution)
}

/// Per-candidate feasibility at one pose.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoseLabels {
    pub mask: Vec<bool>,
    /// False when the object itself overlaps a static obstacle.
    pub pose_valid: bool,
}

impl PoseLabels {
    pub fn positives(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }
}

pub fn label_feasible(
    world: &WorldModel,
    object: &ObjectModel,
    candidates: &GraspCandidateSet,
    pose: &Se2Pose,
) -> PoseLabels {
    let placed = transform_polygon(object.outline(), pose);
    if world.object_blocked(&placed) {
        return PoseLabels {
            mask: vec![false; candidates.len()],
            pose_valid: false,
        };
    }
    let mask = candidates
        .candidates()
        .iter()
        .map(|g| check_feasible_placed(world, &placed, pose, g).feasible)
        .collect();
    PoseLabels {
        mask,
        pose_valid: true,
    }
}

/// Full oracle labels (with reasons) at one pose.
pub fn label_feasible_detailed(
    world: &WorldModel,
    object: &ObjectModel,
    candidates: &GraspCandidateSet,
    pose: &Se2Pose,
) -> Vec<FeasibilityLabel> {
    let placed = transform_polygon(object.outline(), pose);
    candidates
        .candidates()
        .iter()
        .map(|g| check_feasible_placed(world, &placed, pose, g))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedLabels {
    pub mask: Vec<bool>,
    pub init_valid: bool,
    pub goal_valid: bool,
}

pub fn label_shared(
    world: &WorldModel,
    object: &ObjectModel,
    candidates: &GraspCandidateSet,
    pose_init: &Se2Pose,
    pose_goal: &Se2Pose,
) -> SharedLabels {
    let a = label_feasible(world, object, candidates, pose_init);
    let b = label_feasible(world, object, candidates, pose_goal);
    SharedLabels {
        mask: a.mask.iter().zip(&b.mask).map(|(&x, &y)| x && y).collect(),
        init_valid: a.pose_valid,
        goal_valid: b.pose_valid,
    }
}

/// True when the object can rest at `pose` without touching an obstacle.
pub fn pose_is_valid(world: &WorldModel, object: &ObjectModel, pose: &Se2Pose) -> bool {
    !world.object_blocked(&transform_polygon(object.outline(), pose))
}

/// Samples lattice poses until one is free of obstacles.
pub fn sample_valid_pose<R: Rng + ?Sized>(
    world: &WorldModel,
    object: &ObjectModel,
    rng: &mut R,
) -> Se2Pose {
    loop {
        let p = sample_object_pose(world, rng);
        if pose_is_valid(world, object, &p) {
            return p;
        }
    }
}
