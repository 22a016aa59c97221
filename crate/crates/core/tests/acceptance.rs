//! Acceptance suite: one PASS/FAIL line per criterion, then a non-zero exit
//! if any criterion failed. Studies share one in-memory model store, so a
//! model needed by several criteria is trained once.

use std::f64::consts::{PI, TAU};
use std::time::Instant;

use grasp_ebm::ebm::{loss_and_grad, nll_loss, contrastive_loss, reg_loss, ModelKind, Role, TrainConfig};
use grasp_ebm::eval::{
    benchmark_timing, data_efficiency_sweep, emit_report, generalization_unseen_grasps,
    generalization_unseen_objects, sample_solvable_pair, success_rate_trial, BenchCase, ExperimentSpec, ModelStore,
    Predictor, ReportFormat, StudyReport,
};
use grasp_ebm::geometry::{polygons_intersect, Point2, Polygon, Se2Pose};
use grasp_ebm::inference::{
    calibrate_threshold, f1_score, predict_feasible, predict_shared_j, predict_shared_l, Energies, LearnedModel,
    Method, Metrics, Strategy, Thresholds,
};
use grasp_ebm::nn::MlpParams;
use grasp_ebm::robot::{forward_kinematics, inverse_kinematics, ArmConfig, ArmGeometry};
use grasp_ebm::scene::{
    builtin_object, label_feasible, label_shared, sample_antipodal_grasps, GraspCandidateSet,
    ObjectModel, WorldModel,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    id: u32,
    pass: bool,
    line: String,
}

fn report(id: u32, title: &str, pass: bool, detail: String) -> Outcome {
    let line = format!(
        "criterion {id:>2} [{}] {title}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    println!("{line}");
    Outcome { id, pass, line }
}

fn bottle_setup(count: usize) -> (WorldModel, ObjectModel, GraspCandidateSet) {
    let world = WorldModel::default();
    let object = builtin_object("bottle").unwrap();
    let set = sample_antipodal_grasps(&object, &world.gripper, count, 0).unwrap();
    (world, object, set)
}

fn random_pose(rng: &mut ChaCha8Rng) -> Se2Pose {
    Se2Pose::new(rng.random_range(-0.45..0.45), rng.random_range(0.1..0.6), rng.random_range(0.0..TAU))
}

fn untrained(set: &GraspCandidateSet, seed: u64) -> LearnedModel {
    let params = MlpParams::new(&TrainConfig::default().layer_sizes(ModelKind::Feasibility), seed).unwrap();
    LearnedModel::new(params, ModelKind::Feasibility, set).unwrap()
}

// ---------------------------------------------------------------------------
// 1. oracle integrity

fn star_polygon(rng: &mut ChaCha8Rng, c: Point2) -> Polygon {
    let n = rng.random_range(3..10);
    let mut angles: Vec<f64> = (0..n).map(|i| (i as f64 + rng.random_range(0.1..0.9)) * TAU / n as f64).collect();
    angles.sort_by(f64::total_cmp);
    let pts = angles
        .iter()
        .map(|a| {
            let r = rng.random_range(0.3..1.0);
            Point2::new(c.x + r * a.cos(), c.y + r * a.sin())
        })
        .collect();
    Polygon::new(pts).unwrap()
}

fn inside(p: Point2, poly: &[Point2]) -> bool {
    let mut c = false;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        if (a.y > p.y) != (b.y > p.y) && p.x < a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y) {
            c = !c;
        }
    }
    c
}

fn boundary_hits(a: &[Point2], b: &[Point2]) -> bool {
    const SPACING: f64 = 1e-3;
    (0..a.len()).any(|i| {
        let (p, q) = (a[i], a[(i + 1) % a.len()]);
        let k = ((q.x - p.x).hypot(q.y - p.y) / SPACING).ceil() as usize;
        (0..k).any(|j| {
            let t = (j as f64 + 0.5) / k as f64;
            inside(Point2::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)), b)
        })
    })
}

fn sampled_intersect(a: &Polygon, b: &Polygon) -> bool {
    boundary_hits(a.vertices(), b.vertices()) || boundary_hits(b.vertices(), a.vertices())
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let arm = ArmGeometry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut unsolved = 0;
    for _ in 0..1_000 {
        let q = [rng.random_range(-PI..PI), rng.random_range(-PI..PI), rng.random_range(-PI..PI)];
        let target = forward_kinematics(&arm, &ArmConfig { q });
        let sols = inverse_kinematics(&arm, &target);
        unsolved += sols.is_empty() as usize;
        for s in sols {
            let r = forward_kinematics(&arm, &s);
            let dth = (r.theta() - target.theta()).rem_euclid(TAU);
            worst = worst.max((r.x() - target.x()).hypot(r.y() - target.y())).max(dth.min(TAU - dth));
        }
    }
    let (mut agree, mut pairs, mut hits) = (0, 0, 0);
    while pairs < 1_000 {
        let a = star_polygon(&mut rng, Point2::new(0.0, 0.0));
        let c = Point2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let b = star_polygon(&mut rng, c);
        let oracle = sampled_intersect(&a, &b);
        let clear = [(0.01, 0.0), (-0.01, 0.0), (0.0, 0.01), (0.0, -0.01)]
            .iter()
            .all(|&(dx, dy)| sampled_intersect(&a, &b.translated(Point2::new(dx, dy))) == oracle);
        if !clear {
            continue;
        }
        pairs += 1;
        hits += oracle as usize;
        agree += (polygons_intersect(&a, &b) == oracle) as usize;
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = unsolved == 0 && worst < 1e-9 && agree == pairs && secs < 30.0;
    report(
        1,
        "oracle integrity",
        pass,
        format!(
            "FK/IK worst error {worst:.2e} (< 1e-9), {unsolved} unsolved targets; \
             SAT agrees with point sampling on {agree}/{pairs} pairs ({hits} intersecting); {secs:.1}s (< 30s)"
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. gradient correctness

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (temp, alpha) = (0.5, 0.2);
    let mut worst: f64 = 0.0;
    for draw in 0..100 {
        let params = MlpParams::new(&[9, 16, 16, 1], 1_000 + draw).unwrap();
        let n = rng.random_range(8..40);
        let x = Array2::from_shape_fn((n, 9), |_| rng.random_range(-1.0..1.0));
        let mut roles: Vec<Role> = (0..n)
            .map(|_| if rng.random_bool(0.5) { Role::Positive } else { Role::Negative })
            .collect();
        roles[0] = Role::Positive;
        roles[1] = Role::Negative;
        let loss = |p: &MlpParams| {
            let e = p.forward(x.view()).unwrap();
            loss_and_grad(e.as_slice().unwrap(), &roles, temp, alpha).unwrap().0.total
        };
        let (e, cache) = params.forward_with_cache(x.view()).unwrap();
        let (_, up) = loss_and_grad(e.as_slice().unwrap(), &roles, temp, alpha).unwrap();
        let analytic = params
            .backward_cached(&cache, ndarray::ArrayView1::from(&up))
            .unwrap()
            .to_flat();
        let flat = params.to_flat();
        let mut p = params.clone();
        let h = 1e-5;
        let mut fd = vec![0.0; flat.len()];
        for i in 0..flat.len() {
            let mut v = flat.clone();
            v[i] += h;
            p.set_flat(&v).unwrap();
            let up = loss(&p);
            v[i] -= 2.0 * h;
            p.set_flat(&v).unwrap();
            fd[i] = (up - loss(&p)) / (2.0 * h);
        }
        let diff: f64 = analytic.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(fd.iter().map(|a| a * a).sum::<f64>().sqrt());
        worst = worst.max(diff / norm.max(1e-12));
    }
    let secs = t.elapsed().as_secs_f64();
    report(
        2,
        "gradient correctness",
        worst < 1e-4 && secs < 60.0,
        format!("worst relative error {worst:.2e} over 100 draws (< 1e-4); {secs:.1}s (< 60s)"),
    )
}

// ---------------------------------------------------------------------------
// 3-5. loss values, F1 arithmetic, threshold optimality

fn criterion_3() -> Outcome {
    let t = 0.5;
    let single = nll_loss(&[0.7], &[0.7], t).unwrap();
    let two = nll_loss(&[1.0], &[1.0, 2.0], t).unwrap();
    // the closed form 2 + ln(e^-2 + e^-4); the commonly quoted decimal
    // 0.126826 disagrees with it in the fourth place
    let closed = 2.0 + ((-2.0f64).exp() + (-4.0f64).exp()).ln();
    let con = contrastive_loss(&[1.0], &[2.0], t).unwrap();
    let reg = reg_loss(&[1.0], &[2.0], t).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut shift_err: f64 = 0.0;
    for _ in 0..200 {
        let pos: Vec<f64> = (0..rng.random_range(1..20)).map(|_| rng.random_range(-3.0..3.0)).collect();
        let neg: Vec<f64> = (0..rng.random_range(1..20)).map(|_| rng.random_range(-3.0..3.0)).collect();
        let c: f64 = rng.random_range(-10.0..10.0);
        let f = |p: &[f64], n: &[f64]| {
            let all: Vec<f64> = p.iter().chain(n).copied().collect();
            nll_loss(p, &all, t).unwrap() + contrastive_loss(p, n, t).unwrap()
        };
        let sh = |v: &[f64]| v.iter().map(|e| e + c).collect::<Vec<_>>();
        shift_err = shift_err.max((f(&sh(&pos), &sh(&neg)) - f(&pos, &neg)).abs());
    }
    let pass = single == 0.0 && (two - closed).abs() < 1e-6 && con == -2.0 && reg == 20.0 && shift_err < 1e-10;
    report(
        3,
        "loss unit values",
        pass,
        format!(
            "single {single}; two-sample {two:.8} vs closed form {closed:.8} (quoted 0.126826 is off by {:.2e}); \
             contrastive {con}; reg {reg}; shift error {shift_err:.1e}",
            closed - 0.126826
        ),
    )
}

fn criterion_4() -> Outcome {
    let f1 = f1_score(0.940, 0.953);
    report(4, "F1 arithmetic", (f1 - 0.946).abs() < 5e-4, format!("F1(0.940, 0.953) = {f1:.5} (0.946 ± 5e-4)"))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut exact = 0;
    for set in 0..50 {
        let n = rng.random_range(2..=1_000);
        let rate = rng.random_range(0.3..0.7);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(rate)).collect();
        labels[0] = true;
        labels[1] = false;
        let coarse = set % 3 == 0;
        let energies: Vec<f64> = labels
            .iter()
            .map(|&y| {
                let e = rng.random_range(-1.0..1.0) + if y { -0.3 } else { 0.3 };
                if coarse { (e * 8.0f64).round() / 8.0 } else { e }
            })
            .collect();
        let got = calibrate_threshold(&energies, &labels).unwrap().f1;
        let pos = labels.iter().filter(|l| **l).count() as u64;
        let neg = n as u64 - pos;
        let mut best = 0.0f64;
        for &v in &energies {
            let tp = energies.iter().zip(&labels).filter(|(e, l)| **e <= v && **l).count() as u64;
            let fp = energies.iter().zip(&labels).filter(|(e, l)| **e <= v && !**l).count() as u64;
            best = best.max(Metrics::from_counts(tp, fp, pos - tp, neg - fp).f1);
        }
        exact += (got == best) as usize;
    }
    report(5, "threshold optimality", exact == 50, format!("{exact}/50 score sets match the brute-force sweep exactly"))
}

// ---------------------------------------------------------------------------
// 6-8. compositional identities and ground truth

fn criterion_6() -> Outcome {
    let (world, _, set) = bottle_setup(57);
    let model = untrained(&set, 6);
    let th = Thresholds::manual(0.0, 0.0, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut bitwise, mut symmetric) = (0, 0);
    for _ in 0..100 {
        let (a, b) = (random_pose(&mut rng), random_pose(&mut rng));
        let r = predict_shared_j(&model, &th, &world, &a, &b, &set).unwrap();
        let single = |p: &Se2Pose| match predict_feasible(&model, &th, &world, p, &set).unwrap().energies {
            Energies::Single { energy } => energy,
            other => panic!("unexpected energies {other:?}"),
        };
        let (ea, eb) = (single(&a), single(&b));
        let Energies::Joint { joint, .. } = &r.energies else {
            panic!("J reports joint energies");
        };
        bitwise += joint.iter().zip(ea.iter().zip(&eb)).all(|(j, (x, y))| j.to_bits() == (x + y).to_bits()) as usize;
        symmetric += (predict_shared_j(&model, &th, &world, &b, &a, &set).unwrap().mask == r.mask) as usize;
    }
    report(
        6,
        "compositional identity",
        bitwise == 100 && symmetric == 100,
        format!("joint = init + goal bitwise on {bitwise}/100 pairs; swap-symmetric masks on {symmetric}/100"),
    )
}

fn criterion_7() -> Outcome {
    let (world, _, set) = bottle_setup(57);
    let model = untrained(&set, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // a threshold near the median energy so both outcomes occur
    let mut e = Vec::new();
    for _ in 0..20 {
        if let Energies::Single { energy } =
            predict_feasible(&model, &Thresholds::manual(0.0, 0.0, 0.0), &world, &random_pose(&mut rng), &set)
                .unwrap()
                .energies
        {
            e.extend(energy);
        }
    }
    e.sort_by(f64::total_cmp);
    let th = Thresholds::manual(e[e.len() / 2], 0.0, 0.0);
    let (mut same, mut positives) = (0, 0);
    for _ in 0..500 {
        let (a, b) = (random_pose(&mut rng), random_pose(&mut rng));
        let l = predict_shared_l(&model, &th, &world, &a, &b, &set).unwrap().mask;
        let fa = predict_feasible(&model, &th, &world, &a, &set).unwrap().mask;
        let fb = predict_feasible(&model, &th, &world, &b, &set).unwrap().mask;
        same += (l == fa.iter().zip(&fb).map(|(x, y)| *x && *y).collect::<Vec<_>>()) as usize;
        positives += l.iter().filter(|m| **m).count();
    }
    report(
        7,
        "L-method identity",
        same == 500,
        format!("L mask = F(init) AND F(goal) on {same}/500 pairs ({positives} positive entries)"),
    )
}

fn criterion_8() -> Outcome {
    let (world, object, set) = bottle_setup(57);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut exact, mut shared, mut init, mut goal) = (0, 0, 0, 0);
    for _ in 0..500 {
        let (a, b) = (random_pose(&mut rng), random_pose(&mut rng));
        let s = label_shared(&world, &object, &set, &a, &b).mask;
        let fa = label_feasible(&world, &object, &set, &a).mask;
        let fb = label_feasible(&world, &object, &set, &b).mask;
        exact += (s == fa.iter().zip(&fb).map(|(x, y)| *x && *y).collect::<Vec<_>>()) as usize;
        let count = |m: &[bool]| m.iter().filter(|x| **x).count();
        shared += count(&s);
        init += count(&fa);
        goal += count(&fb);
    }
    let total = (500 * set.len()) as f64;
    let (rs, ri, rg) = (shared as f64 / total, init as f64 / total, goal as f64 / total);
    report(
        8,
        "ground-truth consistency",
        exact == 500 && rs <= ri && rs <= rg,
        format!("shared = AND on {exact}/500 pairs; shared rate {rs:.4} <= feasible rates {ri:.4}, {rg:.4}"),
    )
}

// ---------------------------------------------------------------------------
// 9-12. trained models

fn majority(wins: usize, of: usize) -> bool {
    2 * wins > of
}

fn criterion_9(world: &WorldModel, store: &mut ModelStore) -> Outcome {
    let spec = ExperimentSpec {
        ratios: vec![1.0],
        methods: vec![Method::J, Method::F],
        seeds: vec![0],
        ..ExperimentSpec::data_efficiency()
    };
    let t = Instant::now();
    let r = data_efficiency_sweep(world, &spec, store).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let f = r.f1(0, "100%", "bottle", Method::F).unwrap();
    let j = r.f1(0, "100%", "bottle", Method::J).unwrap();
    let train = r.cell(0, "100%", "bottle", Method::F).unwrap().train_secs;
    report(
        9,
        "trained-model quality",
        f >= 0.90 && j >= 0.85 && secs < 600.0,
        format!(
            "F F1 {f:.4} (>= 0.90), J F1 {j:.4} (>= 0.85); data + training + evaluation {secs:.0}s \
             (training {train:.0}s; < 600s)"
        ),
    )
}

fn criterion_10(world: &WorldModel, store: &mut ModelStore) -> (Outcome, StudyReport) {
    let full = ExperimentSpec {
        ratios: vec![1.0],
        methods: vec![Method::J, Method::D, Method::L, Method::F],
        ..ExperimentSpec::data_efficiency()
    };
    let half = ExperimentSpec {
        ratios: vec![0.5],
        methods: vec![Method::J, Method::L],
        ..ExperimentSpec::data_efficiency()
    };
    let mut r = data_efficiency_sweep(world, &full, store).unwrap();
    r.cells.extend(data_efficiency_sweep(world, &half, store).unwrap().cells);
    let mut wins = 0;
    let mut per_seed = Vec::new();
    for &s in &full.seeds {
        let g = |setting: &str, m| r.f1(s, setting, "bottle", m).unwrap();
        let (j50, d100, l100) = (g("50%", Method::J), g("100%", Method::D), g("100%", Method::L));
        let won = j50 >= d100.max(l100);
        wins += won as usize;
        per_seed.push(format!(
            "seed {s}: J@50% {j50:.4} vs D@100% {d100:.4}, L@100% {l100:.4} (J@100% {:.4}, L@50% {:.4})",
            g("100%", Method::J),
            g("50%", Method::L)
        ));
    }
    let out = report(
        10,
        "data-efficiency ordering",
        majority(wins, full.seeds.len()),
        format!("J@50% >= max(D@100%, L@100%) in {wins}/{} seeds; {}", full.seeds.len(), per_seed.join("; ")),
    );
    (out, r)
}

fn criterion_11(world: &WorldModel, store: &mut ModelStore) -> (Outcome, StudyReport) {
    let spec = ExperimentSpec {
        candidate_counts: vec![57, 352],
        methods: vec![Method::J, Method::F],
        ..ExperimentSpec::unseen_grasps()
    };
    let r = generalization_unseen_grasps(world, &spec, store).unwrap();
    let mut wins = 0;
    let mut per_seed = Vec::new();
    for &s in &spec.seeds {
        let a = r.f1(s, "57", "bottle", Method::J).unwrap();
        let b = r.f1(s, "352", "bottle", Method::J).unwrap();
        wins += (b > a) as usize;
        per_seed.push(format!("seed {s}: 352 -> {b:.4}, 57 -> {a:.4}"));
    }
    let out = report(
        11,
        "unseen-grasp generalization",
        majority(wins, spec.seeds.len()),
        format!(
            "J F1 on the 922-candidate set higher for the 352-trained model in {wins}/{} seeds; {}",
            spec.seeds.len(),
            per_seed.join("; ")
        ),
    );
    (out, r)
}

fn criterion_12(world: &WorldModel, store: &mut ModelStore) -> (Outcome, StudyReport) {
    let spec = ExperimentSpec {
        training_sets: vec![vec!["bottle".into()]],
        eval_objects: vec!["bottle".into(), "mug".into(), "bunny".into()],
        candidate_counts: vec![57],
        methods: vec![Method::J],
        ..ExperimentSpec::unseen_objects()
    };
    let r = generalization_unseen_objects(world, &spec, store).unwrap();
    let mut wins = 0;
    let mut per_seed = Vec::new();
    for &s in &spec.seeds {
        let mug = r.f1(s, "bottle", "mug", Method::J).unwrap();
        let bunny = r.f1(s, "bottle", "bunny", Method::J).unwrap();
        wins += (mug > bunny) as usize;
        per_seed.push(format!("seed {s}: mug {mug:.4}, bunny {bunny:.4}"));
    }
    let out = report(
        12,
        "unseen-object direction",
        majority(wins, spec.seeds.len()),
        format!("bottle-trained J scores mug > bunny in {wins}/{} seeds; {}", spec.seeds.len(), per_seed.join("; ")),
    );
    (out, r)
}

// ---------------------------------------------------------------------------
// 13-14. baselines and timing

fn criterion_13() -> Outcome {
    let (world, object, set) = bottle_setup(57);
    let a = success_rate_trial(&world, &object, &set, &Predictor::Analytical { object: &object }, Strategy::Random, 500, 13)
        .unwrap();
    let r = success_rate_trial(&world, &object, &set, &Predictor::Random, Strategy::Random, 500, 13).unwrap();
    // independent Monte Carlo estimate of the mean true-shared fraction over
    // solvable pose pairs
    let mut rng = ChaCha8Rng::seed_from_u64(1_313);
    let draws = 5_000;
    let mut frac = 0.0;
    for _ in 0..draws {
        let (_, _, truth, _) = sample_solvable_pair(&world, &object, &set, &mut rng);
        frac += truth.iter().filter(|t| **t).count() as f64 / set.len() as f64;
    }
    let mc = frac / draws as f64;
    report(
        13,
        "baseline sanity",
        a.success_rate == 1.0 && (r.success_rate - mc).abs() <= 0.03,
        format!(
            "A success {:.3} (= 1); R success {:.3} vs Monte Carlo shared fraction {mc:.3} (± 0.03)",
            a.success_rate, r.success_rate
        ),
    )
}

fn criterion_14() -> Outcome {
    let world = WorldModel::default();
    let object = builtin_object("bottle").unwrap();
    let sizes = [57, 109, 352];
    let sets: Vec<GraspCandidateSet> =
        sizes.iter().map(|&n| sample_antipodal_grasps(&object, &world.gripper, n, 0).unwrap()).collect();
    let models: Vec<LearnedModel> = sets.iter().map(|s| untrained(s, 14)).collect();
    let th = Thresholds::manual(0.0, 0.0, 0.0);
    let mut cases = Vec::new();
    for (s, m) in sets.iter().zip(&models) {
        cases.push(BenchCase {
            candidates: s,
            predictor: Predictor::Analytical { object: &object },
        });
        cases.push(BenchCase {
            candidates: s,
            predictor: Predictor::Joint { model: m, thresholds: &th },
        });
    }
    let rep = benchmark_timing(&world, &object, &cases, 200, 14).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let table = rep.table();
    let files = emit_report(std::slice::from_ref(&table), dir.path(), &[ReportFormat::Csv]).unwrap();
    let csv = std::fs::read_to_string(&files[0]).unwrap();
    let rows = csv.lines().count() - 1;
    let med = |m: Method| {
        rep.rows
            .iter()
            .filter(|r| r.method == m)
            .map(|r| format!("{}: {:.3}ms", r.size, r.median_secs * 1e3))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let speed: Vec<String> =
        rep.speedups(Method::A, Method::J).iter().map(|(n, s)| format!("{n}: {s:.2}x")).collect();
    report(
        14,
        "timing harness",
        rows == sizes.len() * 2 && rep.monotone(Method::A),
        format!(
            "{rows} CSV rows; A medians strictly increasing [{}]; J medians [{}]; A/J speedup [{}]",
            med(Method::A),
            med(Method::J),
            speed.join(", ")
        ),
    )
}

/// Min-energy selection with the trained J model: the success-rate claim
/// attached to the baseline protocol, reported for reference.
fn j_success_note(world: &WorldModel, store: &mut ModelStore) {
    let spec = ExperimentSpec {
        candidate_counts: vec![57],
        methods: vec![Method::J],
        strategies: vec![Strategy::MinEnergy],
        ..ExperimentSpec::baselines()
    };
    match grasp_ebm::eval::baseline_trials(world, &spec, store) {
        Ok((rows, _)) => {
            for r in rows {
                println!(
                    "note: J (min-energy) success rate {:.3} over {} trials with {} candidates",
                    r.summary.success_rate, r.summary.n_trials, r.size
                );
            }
        }
        Err(e) => println!("note: J success-rate trial failed: {e}"),
    }
}

fn main() {
    let start = Instant::now();
    let mut outcomes = vec![
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(),
        criterion_13(),
        criterion_14(),
    ];
    let world = WorldModel::default();
    let mut store = ModelStore::in_memory();
    outcomes.push(criterion_9(&world, &mut store));
    let (o10, de) = criterion_10(&world, &mut store);
    outcomes.push(o10);
    let (o11, ug) = criterion_11(&world, &mut store);
    outcomes.push(o11);
    let (o12, uo) = criterion_12(&world, &mut store);
    outcomes.push(o12);
    j_success_note(&world, &mut store);

    if let Ok(dir) = std::env::var("ACCEPTANCE_REPORT_DIR") {
        for r in [&de, &ug, &uo] {
            let sub = std::path::Path::new(&dir).join(&r.spec.name);
            r.save(&sub, &[ReportFormat::Csv, ReportFormat::Markdown]).unwrap();
        }
    }

    outcomes.sort_by_key(|o| o.id);
    println!("\nacceptance summary ({:.0}s, {} models trained)", start.elapsed().as_secs_f64(), store.len());
    for o in &outcomes {
        println!("{}", o.line);
    }
    let failed: Vec<u32> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    if failed.is_empty() {
        println!("all {} criteria passed", outcomes.len());
    } else {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
