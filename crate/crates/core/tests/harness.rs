//! Grid, zero-shot and report behaviour end to end on small synthetic worlds.

mod common;

use t2t_lab::codec::TaskKind;
use t2t_lab::corpus::{filter_confident, split_train_eval, SynthSpec};
use t2t_lab::harness::*;
use t2t_lab::model::ModelConfig;
use t2t_lab::trainer::{finetune, pretrain, TrainConfig};
use t2t_lab::CuratedDataset;

fn small_world() -> WorldSpec {
    let mut w = WorldSpec::default();
    w.solid.n_instances = 240;
    w.cctk.n_instances = 120;
    w.tasks[0].n_train = 30;
    w.tasks[0].n_test = 30;
    let mut token = w.tasks[0].clone();
    token.name = "TSD".into();
    token.kind = TaskKind::Token;
    token.n_test = 20;
    w.tasks.push(token);
    w
}

fn small_spec(world: WorldSpec) -> GridSpec {
    GridSpec {
        n_runs: 2,
        seeds: vec![0, 1],
        model: ModelConfig { d_model: 16, d_ff: 32, ..ModelConfig::toy(0) },
        pretrain: TrainConfig { epochs: 1, base_lr: 1e-3, ..TrainConfig::pretrain() },
        finetune: TrainConfig { epochs: 1, base_lr: 1e-3, ..TrainConfig::finetune() },
        data: DataSpec::Synthetic { seed: 7, world },
        ..GridSpec::default()
    }
}

fn csv(report: &GridReport) -> String {
    render_report(report, ReportFormat::Csv)
}

#[test]
fn one_row_one_task_two_seeds() {
    let spec = GridSpec { thresholds: vec![0.1], combos: vec![Combo::SolidOnly], tasks: vec!["AHSD".into()], ..small_spec(small_world()) };
    let corpora = GridCorpora::load(&spec.data).unwrap();
    let report = run_grid_with_workers(&spec, &corpora, 1).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.cells.len(), 1);
    assert_eq!(report.runs.len(), 2);
    assert_eq!(report.runs.iter().map(|r| r.seed).collect::<Vec<_>>(), [0, 1]);
    let summary = report.cells[0].summary.as_ref().unwrap();
    assert_eq!(summary.per_run, report.runs.iter().map(|r| r.score).collect::<Vec<_>>());
}

#[test]
fn full_grid_has_the_table_layout_and_provenance_counts() {
    let spec = GridSpec { n_runs: 1, seeds: vec![0], ..small_spec(small_world()) };
    let corpora = GridCorpora::load(&spec.data).unwrap();
    let report = run_grid_with_workers(&spec, &corpora, 2).unwrap();
    assert!(report.is_complete(), "{:?}", report.missing());
    assert_eq!(report.rows.len(), 9);
    assert_eq!(report.runs.len(), 9 * 2);

    let solid = corpora.solid.clone().unwrap();
    let cctk_len = corpora.cctk.as_ref().unwrap().len();
    for row in &report.rows {
        assert_eq!(row.instances, row.provenance.iter().map(|p| p.count).sum::<usize>());
        let solid_count = row.threshold.map_or(0, |t| filter_confident(solid.clone(), t).unwrap().len());
        let expected = solid_count + if row.combo.uses_cctk() { cctk_len } else { 0 };
        assert_eq!(row.instances, expected, "{:?} @ {:?}", row.combo, row.threshold);
    }

    let md = render_report(&report, ReportFormat::Markdown);
    let lines: Vec<&str> = md.lines().collect();
    assert_eq!(lines[0], "| Train Dataset(s) | STD | Inst. | AHSD | TSD |");
    let body: Vec<&str> = lines[2..11].to_vec();
    let labels: Vec<String> = body.iter().map(|l| l.split(" | ").take(2).collect::<Vec<_>>().join(" ")).collect();
    assert_eq!(
        labels,
        [
            "| SOLID 0.05",
            "| SOLID 0.1",
            "| SOLID 0.15",
            "| SOLID 0.2",
            "| SOLID+CCTK 0.05",
            "| SOLID+CCTK 0.1",
            "| SOLID+CCTK 0.15",
            "| SOLID+CCTK 0.2",
            "| CCTK NA",
        ]
    );
    for col in 3..5 {
        assert!(body.iter().any(|l| l.split(" | ").nth(col).unwrap().starts_with("**")), "no bold cell in column {col}");
    }
    assert!(md.contains("Released model:"));
    assert_eq!(render_table(&parse_csv(&csv(&report)).unwrap(), ReportFormat::Csv), csv(&report));
}

#[test]
fn reports_do_not_depend_on_worker_count() {
    let spec = GridSpec { thresholds: vec![0.1, 0.2], combos: vec![Combo::SolidPlusCctk], ..small_spec(small_world()) };
    let corpora = GridCorpora::load(&spec.data).unwrap();
    let a = run_grid_with_workers(&spec, &corpora, 1).unwrap();
    let b = run_grid_with_workers(&spec, &corpora, 3).unwrap();
    assert_eq!(csv(&a), csv(&b));
    let scores = |r: &GridReport| r.runs.iter().map(|x| (x.task.clone(), x.seed, x.score, x.eval_losses.clone())).collect::<Vec<_>>();
    assert_eq!(scores(&a), scores(&b));
}

#[test]
fn removing_a_task_leaves_other_cells_unchanged() {
    let both = GridSpec { thresholds: vec![0.1], combos: vec![Combo::SolidOnly], ..small_spec(small_world()) };
    let only = GridSpec { tasks: vec!["TSD".into()], ..both.clone() };
    let corpora = GridCorpora::load(&both.data).unwrap();
    let a = run_grid_with_workers(&both, &corpora, 1).unwrap();
    let b = run_grid_with_workers(&only, &corpora, 1).unwrap();
    assert_eq!(a.tasks, ["AHSD", "TSD"]);
    assert_eq!(a.cell(0, "TSD").unwrap().summary, b.cell(0, "TSD").unwrap().summary);
}

#[test]
fn a_task_without_data_is_a_gap_not_an_abort() {
    let spec = GridSpec {
        thresholds: vec![0.1],
        combos: vec![Combo::SolidOnly],
        tasks: vec!["AHSD".into(), "HateX".into()],
        n_runs: 1,
        seeds: vec![0],
        ..small_spec(small_world())
    };
    let corpora = GridCorpora::load(&spec.data).unwrap();
    let report = run_grid_with_workers(&spec, &corpora, 1).unwrap();
    assert!(report.cell(0, "AHSD").unwrap().summary.is_some());
    let gap = report.cell(0, "HateX").unwrap();
    assert!(gap.summary.is_none() && gap.error.as_deref().unwrap().contains("HateX"));
    assert!(render_report(&report, ReportFormat::Markdown).contains("| missing |"));
}

fn pretrained_solid(seed: u64) -> (t2t_lab::trainer::Checkpoint, CuratedDataset) {
    let corpora = build_world(&WorldSpec::default(), seed).unwrap();
    let data = curate_row(&corpora, Combo::SolidOnly, Some(0.1)).unwrap();
    let config = TrainConfig { seed, ..TrainConfig::pretrain() };
    (pretrain(&data, &ModelConfig::toy(0), &config).unwrap().checkpoint, data)
}

#[test]
fn zero_shot_equals_finetuning_zero_epochs() {
    let (ckpt, data) = pretrained_solid(0);
    let (_, eval) = split_train_eval(&data, 0.2, 0).unwrap();
    let olid: Vec<_> = eval.examples.iter().filter(|e| e.prefix == "OLID_A").cloned().collect();
    let eval = CuratedDataset::from_examples(olid, &Default::default());
    let (zs, _) = zero_shot(&ckpt, &eval).unwrap();
    let none = finetune(&ckpt, &eval, &TrainConfig { epochs: 0, ..TrainConfig::finetune() }).unwrap();
    let scored = evaluate(&none.checkpoint.state, &eval).unwrap();
    assert!((zs.mean - scored.score).abs() <= 1e-9);
    assert_eq!(zs.n_runs, 1);
}

#[test]
fn zero_shot_transfers_to_a_new_surface_vocabulary() {
    for seed in 0..3 {
        let (ckpt, _) = pretrained_solid(seed);
        // Disjoint fillers, shared lexicon: every filler maps to UNK.
        let spec = SynthSpec { filler_prefix: "z".into(), lexicon: WorldSpec::default().solid.lexicon, ..SynthSpec::default() };
        let (_, test) = common::lexicon_task(&spec, 100 + seed, 0, 300, "OLID_A");
        let (zs, _) = zero_shot(&ckpt, &test).unwrap();
        let gold: Vec<&str> = test.examples.iter().map(|e| e.target_text.as_str()).collect();
        let baseline = common::brute_majority_baseline(&gold);
        assert!(zs.mean > baseline, "seed {seed}: zero-shot {} vs majority {baseline}", zs.mean);
        assert!((majority_baseline(&test).unwrap() - baseline).abs() < 1e-12);
    }
}

#[test]
fn zero_shot_trails_finetuning_on_average() {
    let (ckpt, _) = pretrained_solid(1);
    let mut world = WorldSpec::default();
    world.tasks[0].prefix = Some("OLID_A".into());
    let task = build_world(&world, 1).unwrap().tasks.remove(0);
    let (zs, _) = zero_shot(&ckpt, &task.test).unwrap();
    let tuned: Vec<f64> = (0..10)
        .map(|s| {
            let out = finetune(&ckpt, &task.train, &TrainConfig::finetune().with_seed(s)).unwrap();
            evaluate(&out.checkpoint.state, &task.test).unwrap().score
        })
        .collect();
    let mean = tuned.iter().sum::<f64>() / tuned.len() as f64;
    assert!(zs.mean <= mean, "zero-shot {} vs fine-tuned mean {mean}", zs.mean);
}

#[test]
fn grid_spec_file_resolves_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.toml");
    std::fs::write(&path, "[data]\nkind = \"files\"\nsolid = \"solid.tsv\"\n").unwrap();
    let spec = GridSpec::from_file(&path).unwrap();
    match spec.data {
        DataSpec::Files { solid, .. } => assert_eq!(solid.unwrap(), dir.path().join("solid.tsv")),
        other => panic!("{other:?}"),
    }
}
