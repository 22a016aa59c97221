use grasp_ebm::eval::{
    benchmark_timing, data_efficiency_sweep, emit_report, success_rate_trial, BenchCase, ExperimentSpec, ModelStore,
    Predictor, ReportFormat, ReportTable, StudyReport,
};
use grasp_ebm::inference::{Method, Strategy as Pick};
use grasp_ebm::scene::{builtin_object, sample_antipodal_grasps, WorldModel};
use proptest::prelude::*;

#[test]
fn analytical_trials_always_succeed_and_replay() {
    let world = WorldModel::default();
    for name in ["bottle", "drill"] {
        let object = builtin_object(name).unwrap();
        let set = sample_antipodal_grasps(&object, &world.gripper, 57, 1).unwrap();
        let a = Predictor::Analytical { object: &object };
        let s = success_rate_trial(&world, &object, &set, &a, Pick::Random, 100, 5).unwrap();
        assert_eq!(s.success_rate, 1.0, "{name}");
        let again = success_rate_trial(&world, &object, &set, &a, Pick::Random, 100, 5).unwrap();
        let strip = |v: &[grasp_ebm::eval::TrialRecord]| {
            v.iter()
                .map(|r| (r.pose_init, r.pose_goal, r.selected, r.success, r.truly_shared))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&s.records), strip(&again.records));
        assert!(s.records.iter().all(|r| r.predicted == r.truly_shared && r.truly_shared > 0));
        assert!(Predictor::Analytical { object: &object }.method() == Method::A);
        assert!(success_rate_trial(&world, &object, &set, &a, Pick::MinEnergy, 1, 5).is_err());
    }
}

#[test]
fn random_trials_match_their_conditional_expectation() {
    let world = WorldModel::default();
    let object = builtin_object("bottle").unwrap();
    let set = sample_antipodal_grasps(&object, &world.gripper, 57, 0).unwrap();
    let s = success_rate_trial(&world, &object, &set, &Predictor::Random, Pick::Random, 400, 9).unwrap();
    // each trial succeeds with probability |shared| / N given its poses
    let p: Vec<f64> = s.records.iter().map(|r| r.truly_shared as f64 / set.len() as f64).collect();
    let expect = p.iter().sum::<f64>() / p.len() as f64;
    let sd = (p.iter().map(|q| q * (1.0 - q)).sum::<f64>()).sqrt() / p.len() as f64;
    assert!((s.success_rate - expect).abs() < 4.0 * sd, "{} vs {expect} ± {sd}", s.success_rate);
}

#[test]
fn analytical_time_grows_with_candidate_count() {
    let world = WorldModel::default();
    let object = builtin_object("bottle").unwrap();
    let sets: Vec<_> = [40, 160, 640]
        .iter()
        .map(|&n| sample_antipodal_grasps(&object, &world.gripper, n, 0).unwrap())
        .collect();
    let cases: Vec<BenchCase> = sets
        .iter()
        .map(|s| BenchCase {
            candidates: s,
            predictor: Predictor::Analytical { object: &object },
        })
        .collect();
    let report = benchmark_timing(&world, &object, &cases, 60, 2).unwrap();
    assert!(report.monotone(Method::A), "{:?}", report.rows);
    // least-squares fit of median time on candidate count
    let xs: Vec<f64> = report.rows.iter().map(|r| r.size as f64).collect();
    let ys: Vec<f64> = report.rows.iter().map(|r| r.median_secs).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = sxy * sxy / (sxx * syy);
    assert!(sxy > 0.0 && r2 > 0.9, "slope sign {sxy}, R² {r2}");
    assert_eq!(report.table().rows.len(), 3);
}

#[test]
fn study_report_round_trips_through_raw_cells() {
    let world = WorldModel::default();
    let spec = ExperimentSpec {
        candidate_counts: vec![15],
        feasibility_records: 900,
        shared_records: 900,
        ratios: vec![1.0, 0.5],
        seeds: vec![0, 1],
        oracle_stub: true,
        ..ExperimentSpec::data_efficiency()
    };
    let report = data_efficiency_sweep(&world, &spec, &mut ModelStore::in_memory()).unwrap();
    assert_eq!(report.cells.len(), 2 * 2 * 4);
    assert!(report.cells.iter().all(|c| c.metrics.f1 == 1.0));
    let dir = tempfile::tempdir().unwrap();
    report.save(dir.path(), &[ReportFormat::Csv, ReportFormat::Markdown]).unwrap();
    let back = StudyReport::load(dir.path()).unwrap();
    assert_eq!(back.cells.len(), report.cells.len());
    for (a, b) in back.cells.iter().zip(&report.cells) {
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.recompute().unwrap(), b.metrics);
    }
    let tables = report.tables();
    let md = tables[0].to_markdown();
    assert_eq!(md.lines().count(), tables[0].rows.len() + 2);
}

fn cell() -> impl Strategy<Value = String> {
    // commas, quotes and spaces exercise CSV quoting
    "[a-z0-9 ,\"%.]{0,8}"
}

proptest! {
    #[test]
    fn csv_round_trip_is_byte_identical(rows in prop::collection::vec(prop::collection::vec(cell(), 3), 0..6)) {
        let mut t = ReportTable::new("t", &["a", "b c", "d,e"]);
        t.rows = rows;
        let csv = t.to_csv().unwrap();
        let back = ReportTable::from_csv("t", &csv).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(back.to_csv().unwrap(), csv);
        prop_assert_eq!(back.cell_count(), t.rows.len() * 3);
    }
}

#[test]
fn emitted_files_are_deterministic() {
    let mut t = ReportTable::new("x", &["k", "v"]);
    t.rows.push(vec!["1".into(), "2".into()]);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = emit_report(std::slice::from_ref(&t), a.path(), &[ReportFormat::Csv, ReportFormat::Markdown]).unwrap();
    let fb = emit_report(std::slice::from_ref(&t), b.path(), &[ReportFormat::Csv, ReportFormat::Markdown]).unwrap();
    assert_eq!(fa.len(), 2);
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
}
