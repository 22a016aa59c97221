use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use grasp_ebm::dataset::{describe, generate_feasibility_dataset, generate_shared_dataset, split, DatasetBundle};
use grasp_ebm::ebm::{save_history, train, ModelKind};
use grasp_ebm::eval::{
    baseline_trials, benchmark_timing, calibrate_h_f, calibrate_h_s, calibrate_h_s_prime, data_efficiency_sweep,
    emit_report, generalization_unseen_grasps, generalization_unseen_objects, prepare_study_data, report_dir,
    study_candidates, write_jsonl, BenchCase, ModelStore, Predictor, ReportFormat, ReportTable, Study, StudyReport,
};
use grasp_ebm::geometry::Se2Pose;
use grasp_ebm::inference::{
    predict_feasible, random_baseline, select_grasp, LearnedModel, Method, PredictionResult, Strategy, Thresholds,
};
use grasp_ebm::nn::{load_checkpoint, save_checkpoint, CheckpointMeta, MlpParams};
use grasp_ebm::scene::{parse_polygon_text, sample_antipodal_grasps, write_polygon_text, GraspCandidateSet, ObjectModel};
use grasp_ebm::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::RunConfig;
use crate::{CalibrationMode, Cli, Command, DataKind, StrategyArg};

/// An upstream artifact that has not been produced yet.
#[derive(Debug)]
pub struct Missing {
    pub path: PathBuf,
    pub stage: &'static str,
}

impl fmt::Display for Missing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "missing {} (run `grasp-ebm {}` first)", self.path.display(), self.stage)
    }
}

impl std::error::Error for Missing {}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<Missing>().is_some() {
            return 2;
        }
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err {
                Error::HashMismatch { .. }
                | Error::DigestMismatch { .. }
                | Error::Malformed { .. }
                | Error::Io { .. }
                | Error::Json(_)
                | Error::Csv(_) => 2,
                Error::NonFinite { .. } => 3,
                _ => 1,
            };
        }
    }
    1
}

/// File layout under the artifact directory.
struct Paths(PathBuf);

impl Paths {
    fn candidates(&self) -> PathBuf {
        self.0.join("candidates.json")
    }
    fn object(&self) -> PathBuf {
        self.0.join("object.txt")
    }
    fn data(&self, kind: DataKind, part: &str) -> PathBuf {
        let k = kind_name(kind);
        if part.is_empty() {
            self.0.join("data").join(format!("{k}.jsonl"))
        } else {
            self.0.join("data").join(format!("{k}.{part}.jsonl"))
        }
    }
    fn model(&self, kind: ModelKind) -> PathBuf {
        self.0.join("models").join(format!("{}.ckpt", kind.name()))
    }
    fn history(&self, kind: ModelKind) -> PathBuf {
        self.0.join("models").join(format!("{}.history.csv", kind.name()))
    }
    fn thresholds(&self) -> PathBuf {
        self.0.join("thresholds.json")
    }
    fn store(&self) -> PathBuf {
        self.0.join("store")
    }
}

fn kind_name(kind: DataKind) -> &'static str {
    match kind {
        DataKind::Feasibility => "feasibility",
        DataKind::Shared => "shared",
    }
}

fn model_kind(kind: DataKind) -> ModelKind {
    match kind {
        DataKind::Feasibility => ModelKind::Feasibility,
        DataKind::Shared => ModelKind::DirectShared,
    }
}

fn require(path: PathBuf, stage: &'static str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Missing { path, stage }.into())
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    let paths = Paths(cfg.output_dir.clone());
    match &cli.command {
        Command::GenGrasps { object, count } => cmd_gen_grasps(&cfg, &paths, object.as_deref(), *count),
        Command::GenData { kind, n } => cmd_gen_data(&cfg, &paths, *kind, *n),
        Command::Train { kind, epochs } => cmd_train(&cfg, &paths, *kind, *epochs),
        Command::Calibrate { mode } => cmd_calibrate(&cfg, &paths, *mode),
        Command::Predict {
            method,
            init,
            goal,
            strategy,
        } => cmd_predict(&cfg, &paths, method, init, goal.as_deref(), *strategy),
        Command::Eval {
            experiment,
            oracle_stub,
        } => cmd_eval(&cfg, &paths, experiment, *oracle_stub),
        Command::Bench { trials, untrained } => cmd_bench(&cfg, &paths, *trials, *untrained),
        Command::Report { dir, experiment } => cmd_report(&cfg, dir.as_deref(), experiment),
    }
}

fn grasp_seed(cfg: &RunConfig) -> u64 {
    cfg.stream("grasps/0")
}

fn cmd_gen_grasps(cfg: &RunConfig, paths: &Paths, object: Option<&str>, count: Option<usize>) -> Result<()> {
    let mut cfg = cfg.clone();
    if let Some(name) = object {
        cfg.object.name = name.to_string();
        cfg.object.path = None;
    }
    let obj = cfg.object()?;
    let count = count.unwrap_or(cfg.grasps.count);
    let set = sample_antipodal_grasps(&obj, &cfg.world.gripper, count, grasp_seed(&cfg))?;
    if set.is_empty() {
        bail!("no antipodal grasp fits the gripper on '{}'", obj.name);
    }
    set.save(&paths.candidates())?;
    std::fs::write(paths.object(), format!("# {}\n{}", obj.name, write_polygon_text(obj.outline())))
        .with_context(|| format!("cannot write {}", paths.object().display()))?;
    println!("{} candidates for {} (requested {count})", set.len(), obj.name);
    println!("hash {}", set.content_hash());
    Ok(())
}

fn load_candidates(paths: &Paths) -> Result<GraspCandidateSet> {
    Ok(GraspCandidateSet::load(&require(paths.candidates(), "gen-grasps")?)?)
}

fn load_object(paths: &Paths, set: &GraspCandidateSet) -> Result<ObjectModel> {
    let path = require(paths.object(), "gen-grasps")?;
    let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    let outline = parse_polygon_text(&text)?;
    Ok(ObjectModel::new(
        set.object_name.clone(),
        outline,
        grasp_ebm::scene::DEFAULT_FRICTION_HALF_ANGLE,
    )?)
}

fn cmd_gen_data(cfg: &RunConfig, paths: &Paths, kind: DataKind, n: Option<usize>) -> Result<()> {
    let set = load_candidates(paths)?;
    let object = load_object(paths, &set)?;
    let (n, stream) = match kind {
        DataKind::Feasibility => (n.unwrap_or(cfg.data.feasibility_records), "poses/feasibility"),
        DataKind::Shared => (n.unwrap_or(cfg.data.shared_records), "poses/shared"),
    };
    let seed = cfg.stream(stream);
    let full = match kind {
        DataKind::Feasibility => generate_feasibility_dataset(&cfg.world, &object, &set, n, seed)?,
        DataKind::Shared => generate_shared_dataset(&cfg.world, &object, &set, n, seed)?,
    };
    let (train, test, val) = split(&full, cfg.data.split, cfg.stream(&format!("split/{}", kind_name(kind))))?;
    for (part, b) in [("", &full), ("train", &train), ("test", &test), ("val", &val)] {
        b.save(&paths.data(kind, part))?;
        let label = if part.is_empty() { "full" } else { part };
        println!("{label:>5}: {}", describe(b));
    }
    println!("positive fraction {:.4}", full.positive_fraction());
    Ok(())
}

fn load_split(paths: &Paths, kind: DataKind, part: &str, set: &GraspCandidateSet) -> Result<DatasetBundle> {
    let path = require(paths.data(kind, part), "gen-data")?;
    Ok(DatasetBundle::load(&path, set)?)
}

fn cmd_train(cfg: &RunConfig, paths: &Paths, kind: DataKind, epochs: Option<usize>) -> Result<()> {
    let set = load_candidates(paths)?;
    let train_set = load_split(paths, kind, "train", &set)?;
    let val_set = load_split(paths, kind, "val", &set)?;
    let mut tc = cfg.train.clone();
    tc.seed = cfg.stream("train");
    if let Some(e) = epochs {
        tc.epochs = e;
    }
    let mk = model_kind(kind);
    let out = train(&train_set, Some(&val_set), &set, &cfg.world, &tc, mk)?;
    if !out.params.is_finite() {
        return Err(Error::NonFinite {
            context: "trained parameters".into(),
        }
        .into());
    }
    let meta = CheckpointMeta {
        kind: mk.name().to_string(),
        candidate_set_hash: set.content_hash().to_string(),
        train_config_digest: tc.digest(),
    };
    save_checkpoint(&paths.model(mk), &out.params, &meta)?;
    save_history(&paths.history(mk), &out.history)?;
    let best = out.history.iter().find(|h| h.epoch == out.best_epoch);
    println!(
        "trained {} model: {} epochs run, kept epoch {} (val F1 {})",
        mk.name(),
        out.history.len(),
        out.best_epoch,
        best.map_or("n/a".to_string(), |h| format!("{:.4}", h.val_f1))
    );
    println!("checkpoint {}", paths.model(mk).display());
    Ok(())
}

fn load_model(paths: &Paths, kind: ModelKind, set: &GraspCandidateSet) -> Result<LearnedModel> {
    let path = require(paths.model(kind), "train")?;
    let (params, meta) = load_checkpoint(&path)?;
    if meta.candidate_set_hash != set.content_hash() {
        return Err(Error::HashMismatch {
            expected: meta.candidate_set_hash,
            found: set.content_hash().to_string(),
        }
        .into());
    }
    if ModelKind::from_name(&meta.kind)? != kind {
        bail!("checkpoint {} holds a {} model", path.display(), meta.kind);
    }
    Ok(LearnedModel::new(params, kind, set)?)
}

fn load_thresholds(paths: &Paths) -> Result<Thresholds> {
    let path = paths.thresholds();
    if !path.exists() {
        return Ok(Thresholds::default());
    }
    let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Malformed {
            path: path.clone(),
            reason: e.to_string(),
        }
        .into()
    })
}

fn cmd_calibrate(cfg: &RunConfig, paths: &Paths, mode: CalibrationMode) -> Result<()> {
    let set = load_candidates(paths)?;
    let mut th = load_thresholds(paths)?;
    let (name, c) = match mode {
        CalibrationMode::HF => {
            let m = load_model(paths, ModelKind::Feasibility, &set)?;
            let val = load_split(paths, DataKind::Feasibility, "val", &set)?;
            let c = calibrate_h_f(&m, &cfg.world, &set, &val)?;
            th.h_f = Some(c.clone());
            ("h_f", c)
        }
        CalibrationMode::HS => {
            let m = load_model(paths, ModelKind::Feasibility, &set)?;
            let val = load_split(paths, DataKind::Shared, "val", &set)?;
            let c = calibrate_h_s(&m, &cfg.world, &set, &val)?;
            th.h_s = Some(c.clone());
            ("h_s", c)
        }
        CalibrationMode::HSPrime => {
            let m = load_model(paths, ModelKind::DirectShared, &set)?;
            let val = load_split(paths, DataKind::Shared, "val", &set)?;
            let c = calibrate_h_s_prime(&m, &cfg.world, &set, &val)?;
            th.h_s_prime = Some(c.clone());
            ("h_s_prime", c)
        }
    };
    if !c.value.is_finite() && c.value.is_nan() {
        return Err(Error::NonFinite { context: name.into() }.into());
    }
    std::fs::write(paths.thresholds(), serde_json::to_string_pretty(&th)?)
        .with_context(|| format!("cannot write {}", paths.thresholds().display()))?;
    println!("{name} = {} (validation F1 {:.4}, digest {})", c.value, c.f1, c.validation_digest);
    Ok(())
}

pub fn parse_pose(text: &str) -> Result<Se2Pose> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| anyhow!("malformed pose '{text}': expected \"x,y,theta\""))?;
    match nums[..] {
        [x, y, t] if nums.iter().all(|v| v.is_finite()) => Ok(Se2Pose::new(x, y, t)),
        _ => bail!("malformed pose '{text}': expected three finite numbers \"x,y,theta\""),
    }
}

fn cmd_predict(
    cfg: &RunConfig,
    paths: &Paths,
    method: &str,
    init: &str,
    goal: Option<&str>,
    strategy: Option<StrategyArg>,
) -> Result<()> {
    let method = Method::from_name(method)?;
    let init = parse_pose(init)?;
    let goal = match (goal, method) {
        (Some(g), _) => Some(parse_pose(g)?),
        (None, Method::F) => None,
        (None, _) => bail!("method {method} needs --goal"),
    };
    let strategy = match strategy {
        Some(StrategyArg::Random) => Strategy::Random,
        Some(StrategyArg::MinEnergy) => Strategy::MinEnergy,
        None if matches!(method, Method::A | Method::R) => Strategy::Random,
        None => Strategy::MinEnergy,
    };
    let set = load_candidates(paths)?;
    let th = load_thresholds(paths)?;
    let world = &cfg.world;
    let pair = |p: Predictor| -> Result<PredictionResult> {
        Ok(p.predict_pair(world, &set, &init, goal.as_ref().expect("checked above"))?)
    };
    let result = match method {
        Method::F => predict_feasible(&load_model(paths, ModelKind::Feasibility, &set)?, &th, world, &init, &set)?,
        Method::J => {
            let m = load_model(paths, ModelKind::Feasibility, &set)?;
            pair(Predictor::Joint { model: &m, thresholds: &th })?
        }
        Method::L => {
            let m = load_model(paths, ModelKind::Feasibility, &set)?;
            pair(Predictor::Conjunction { model: &m, thresholds: &th })?
        }
        Method::D => {
            let m = load_model(paths, ModelKind::DirectShared, &set)?;
            pair(Predictor::Direct { model: &m, thresholds: &th })?
        }
        Method::A => {
            let object = load_object(paths, &set)?;
            pair(Predictor::Analytical { object: &object })?
        }
        Method::R => pair(Predictor::Random)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.stream("trials"));
    let selected = if method == Method::R {
        Some(random_baseline(&set, &mut rng)?)
    } else {
        select_grasp(&result, strategy, &mut rng)?
    };
    let doc = json!({
        "method": method.to_string(),
        "pose_init": init,
        "pose_goal": goal,
        "mask": result.mask,
        "energies": result.energies,
        "selected_index": selected,
        "threshold_used": result.threshold_used,
        "elapsed_secs": result.elapsed_secs,
    });
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(())
}

const FORMATS: [ReportFormat; 2] = [ReportFormat::Csv, ReportFormat::Markdown];

fn cmd_eval(cfg: &RunConfig, paths: &Paths, experiment: &str, oracle_stub: bool) -> Result<()> {
    let mut spec = cfg.experiment(experiment)?;
    spec.oracle_stub |= oracle_stub;
    let mut store = ModelStore::on_disk(paths.store());
    let dir = report_dir(&cfg.report_dir, experiment);
    let world = &cfg.world;
    let summary = match spec.study {
        Study::Baselines => {
            let (rows, table) = baseline_trials(world, &spec, &mut store)?;
            emit_report(std::slice::from_ref(&table), &dir, &FORMATS)?;
            write_jsonl(&dir.join("trials.jsonl"), &rows)?;
            std::fs::write(dir.join("spec.json"), serde_json::to_string_pretty(&spec)?)?;
            table
        }
        study => {
            let report = match study {
                Study::DataEfficiency => data_efficiency_sweep(world, &spec, &mut store)?,
                Study::UnseenGrasps => generalization_unseen_grasps(world, &spec, &mut store)?,
                _ => generalization_unseen_objects(world, &spec, &mut store)?,
            };
            report.save(&dir, &FORMATS)?;
            report.tables().swap_remove(0)
        }
    };
    print!("{}", summary.to_markdown());
    println!("report written to {}", dir.display());
    Ok(())
}

fn cmd_bench(cfg: &RunConfig, paths: &Paths, trials: Option<usize>, untrained: bool) -> Result<()> {
    let trials = trials.unwrap_or(cfg.bench.trials);
    let object = cfg.object()?;
    let mut spec = cfg.experiment("baselines")?;
    spec.methods = vec![Method::J];
    let mut store = ModelStore::on_disk(paths.store());
    let world = &cfg.world;
    let mut sets = Vec::new();
    let mut models = Vec::new();
    let mut thresholds = Vec::new();
    for &size in &cfg.bench.sizes {
        let set = study_candidates(world, &object, size, &spec)?;
        let (model, th) = if untrained {
            let params = MlpParams::new(&cfg.train.layer_sizes(ModelKind::Feasibility), cfg.stream("bench-init"))?;
            (LearnedModel::new(params, ModelKind::Feasibility, &set)?, Thresholds::manual(0.0, 0.0, 0.0))
        } else {
            let seed = spec.seeds[0];
            let data = prepare_study_data(world, &object, &set, &spec, seed)?;
            let mut tc = spec.train.clone();
            tc.seed = grasp_ebm::eval::sub_seed(seed, "train");
            let trained = store.get_or_train(
                &data.feasibility.train,
                &data.feasibility.val,
                &set,
                world,
                &tc,
                ModelKind::Feasibility,
            )?;
            let model = trained.bind(&set)?;
            let th = Thresholds {
                h_s: Some(calibrate_h_s(&model, world, &set, &data.shared.val)?),
                ..Thresholds::default()
            };
            (model, th)
        };
        sets.push(set);
        models.push(model);
        thresholds.push(th);
    }
    let mut cases = Vec::new();
    for ((set, model), th) in sets.iter().zip(&models).zip(&thresholds) {
        cases.push(BenchCase {
            candidates: set,
            predictor: Predictor::Analytical { object: &object },
        });
        cases.push(BenchCase {
            candidates: set,
            predictor: Predictor::Joint { model, thresholds: th },
        });
    }
    let report = benchmark_timing(world, &object, &cases, trials, cfg.stream("bench"))?;
    let dir = report_dir(&cfg.report_dir, "bench");
    let table = report.table();
    emit_report(std::slice::from_ref(&table), &dir, &FORMATS)?;
    write_jsonl(&dir.join("timing.jsonl"), &report.rows)?;
    print!("{}", table.to_markdown());
    println!(
        "A median time strictly increasing: {}; J: {}",
        report.monotone(Method::A),
        report.monotone(Method::J)
    );
    println!("report written to {}", dir.display());
    Ok(())
}

fn newest_run(root: &Path) -> Result<PathBuf> {
    let entries = std::fs::read_dir(root).map_err(|_| Missing {
        path: root.to_path_buf(),
        stage: "eval",
    })?;
    entries
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().to_str().and_then(|s| s.parse::<u64>().ok()).map(|n| (n, e.path())))
        .max_by_key(|(n, _)| *n)
        .map(|(_, p)| p)
        .ok_or_else(|| {
            Missing {
                path: root.to_path_buf(),
                stage: "eval",
            }
            .into()
        })
}

fn cmd_report(cfg: &RunConfig, dir: Option<&Path>, experiment: &str) -> Result<()> {
    let dir = match dir {
        Some(d) => require(d.to_path_buf(), "eval")?,
        None => newest_run(&cfg.report_dir.join(experiment))?,
    };
    if dir.join("cells.jsonl").exists() {
        StudyReport::load(&dir)?.save(&dir, &FORMATS)?;
    }
    let mut written = Vec::new();
    let mut csvs: Vec<PathBuf> = std::fs::read_dir(&dir)
        .with_context(|| format!("cannot list {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    csvs.sort();
    for path in csvs {
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("table").to_string();
        let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
        let table = ReportTable::from_csv(&name, &text)?;
        written.extend(emit_report(&[table], &dir, &[ReportFormat::Markdown])?);
    }
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}
