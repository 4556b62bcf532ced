use std::path::{Path, PathBuf};
use std::process::Command;

use occlusym::flow::{load_checkpoint, FlowModel};
use occlusym::io::obj::write_obj;
use occlusym::masks2d::BinaryMask;
use occlusym::mesh::TriMesh;
use occlusym::metrics::{evaluate_sets, PointCloud};
use occlusym_cli::commands::Layout;
use occlusym_cli::config::parse_override;
use occlusym_cli::report::{metric_table, summary_markdown};
use occlusym_cli::{cmd_eval, cmd_gen_dataset, cmd_gen_masks, cmd_report, cmd_train, CliError, RunConfig};
use serde_json::Value;

fn tiny(dir: &Path, extra: &[&str]) -> RunConfig {
    let mut sets = vec![
        "masks.count=10",
        "masks.width=48",
        "masks.height=40",
        "dataset.n_shapes=6",
        "dataset.n_held_out=3",
        "model.blocks=1",
        "model.width=16",
        "model.heads=2",
        "model.head_dim=8",
        "train.steps=3",
        "train.batch=2",
        "sample.n_steps=3",
        "eval.k_points=16",
    ];
    sets.extend_from_slice(extra);
    let ov: Vec<_> = sets.iter().map(|s| parse_override(s).unwrap()).collect();
    let path = dir.join("run.json");
    std::fs::write(&path, br#"{"seed": 11, "paths": {"out_dir": "out"}}"#).unwrap();
    RunConfig::load(&path, &ov).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn read_tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn two_d_masks_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path(), &[]);
    let out = cmd_gen_masks(&cfg).unwrap();
    assert_eq!(out.paths().len(), 21);
    let masks = Layout::new(&cfg).masks();
    let manifest = json(&masks.join("manifest.json"));
    assert_eq!(manifest["count"], 10);
    assert_eq!(manifest["masks"].as_array().unwrap().len(), 10);
    for i in 0..10 {
        let m = BinaryMask::from_pgm(&std::fs::read(masks.join(format!("mask_{i:04}.pgm"))).unwrap()).unwrap();
        assert_eq!((m.width(), m.height()), (48, 40));
        let side = json(&masks.join(format!("mask_{i:04}.json")));
        assert_eq!(side["ratio"].as_f64().unwrap(), m.count_ones() as f64 / (48.0 * 40.0));
    }
}

#[test]
fn three_d_masks_share_the_camera_radius() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("sphere.obj"), write_obj(&TriMesh::icosphere(2))).unwrap();
    let mesh_set = r#"paths.meshes=["sphere.obj"]"#;
    let cfg = tiny(dir.path(), &["masks.mode=3d", mesh_set]);
    cmd_gen_masks(&cfg).unwrap();
    let masks = Layout::new(&cfg).masks();
    let manifest = json(&masks.join("manifest.json"));
    assert_eq!(manifest["count"], 4);
    for v in 0..4 {
        let side = json(&masks.join(format!("mesh_000_view_{v}.json")));
        assert_eq!(side["camera"]["radius"].as_f64(), Some(2.0));
        let target = side["target_ratio"].as_f64().unwrap();
        assert!((0.4..=0.6).contains(&target));
        assert!(side["achieved_ratio"].as_f64().unwrap() >= target);
        let obj = BinaryMask::from_pgm(&std::fs::read(masks.join(format!("mesh_000_view_{v}_obj.pgm"))).unwrap()).unwrap();
        let occ = BinaryMask::from_pgm(&std::fs::read(masks.join(format!("mesh_000_view_{v}_occ.pgm"))).unwrap()).unwrap();
        assert!(obj.count_ones() > 0);
        assert!(occ.bits().iter().zip(obj.bits()).all(|(o, b)| !o || *b));
    }
}

#[test]
fn bad_meshes_are_skipped_until_none_remain() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("good.obj"), write_obj(&TriMesh::unit_cube())).unwrap();
    std::fs::write(dir.path().join("bad.obj"), b"v 0 0 0\nf 1 2 3\n").unwrap();
    let cfg = tiny(dir.path(), &["masks.mode=3d", r#"paths.meshes=["bad.obj", "good.obj"]"#]);
    cmd_gen_masks(&cfg).unwrap();
    let manifest = json(&Layout::new(&cfg).masks().join("manifest.json"));
    assert_eq!(manifest["meshes"][0]["status"], "skipped");
    assert_eq!(manifest["count"], 4);
    let cfg = tiny(dir.path(), &["masks.mode=3d", r#"paths.meshes=["bad.obj"]"#]);
    assert!(matches!(cmd_gen_masks(&cfg), Err(CliError::BadInput { .. })));
}

#[test]
fn zero_learning_rate_checkpoint_equals_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path(), &["train.lr=0"]);
    cmd_gen_dataset(&cfg).unwrap();
    cmd_train(&cfg).unwrap();
    let bytes = std::fs::read(Layout::new(&cfg).checkpoint()).unwrap();
    let (model, meta) = load_checkpoint(&bytes).unwrap();
    assert_eq!(model.params, FlowModel::new(cfg.model_config()).unwrap().params);
    assert_eq!(meta["steps"], 3);
}

#[test]
fn identical_sets_give_full_coverage_and_zero_mmd() {
    let clouds: Vec<PointCloud> = (0..4)
        .map(|i| PointCloud::new((0..8).map(|j| [i as f64, j as f64 * 0.5, 1.0]).collect()).unwrap())
        .collect();
    let m = evaluate_sets(&clouds, &clouds, 8).unwrap();
    assert_eq!((m.cov, m.mmd), (1.0, 0.0));
}

#[test]
fn pipeline_report_matches_sources_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path(), &[]);
    cmd_gen_dataset(&cfg).unwrap();
    cmd_train(&cfg).unwrap();
    cmd_eval(&cfg).unwrap();
    cmd_report(&cfg).unwrap();
    let layout = Layout::new(&cfg);
    let report: Value = json(&layout.eval_report());
    let summary = std::fs::read_to_string(layout.report().join("summary.md")).unwrap();
    let row = summary.lines().find(|l| l.starts_with("| occluded |")).unwrap();
    let cells: Vec<f64> = row.split('|').map(str::trim).filter_map(|c| c.parse().ok()).collect();
    let occ = &report["occluded"];
    let expected = [
        occ["mean_iou"].as_f64().unwrap(),
        occ["metrics"]["cov"].as_f64().unwrap(),
        occ["metrics"]["mmd"].as_f64().unwrap(),
        occ["metrics"]["cd"].as_f64().unwrap(),
    ];
    assert_eq!(cells, expected);
    let table = std::fs::read_to_string(layout.eval_table()).unwrap();
    assert_eq!(table.lines().count(), 5);
    let parsed: occlusym::dataset::EvalReport = serde_json::from_value(report).unwrap();
    assert_eq!(table, metric_table(&parsed, cfg.camera.n_views));
    assert!(summary_markdown(&[1.0], &parsed).contains("| 1 | 1 | 1 | 1 |"));

    let first = read_tree(&cfg.paths.out_dir);
    cmd_report(&cfg).unwrap();
    assert_eq!(read_tree(&cfg.paths.out_dir), first);
}

#[test]
fn report_needs_its_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path(), &[]);
    match cmd_report(&cfg) {
        Err(CliError::MissingInputs(paths)) => assert_eq!(paths.len(), 2),
        other => panic!("unexpected {other:?}"),
    }
    let layout = Layout::new(&cfg);
    std::fs::create_dir_all(layout.loss_csv().parent().unwrap()).unwrap();
    std::fs::write(layout.loss_csv(), "step,loss\n").unwrap();
    std::fs::create_dir_all(layout.eval_report().parent().unwrap()).unwrap();
    std::fs::write(layout.eval_report(), "{}").unwrap();
    let err = cmd_report(&cfg).unwrap_err();
    assert!(err.to_string().contains("loss.csv"), "{err}");
}

fn bin(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_occlusym")).current_dir(dir).args(args).output().unwrap()
}

#[test]
fn binary_exit_codes_and_error_json() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.json"), br#"{"masks": {"count": 2, "width": 32, "height": 32}}"#).unwrap();
    let ok = bin(dir.path(), &["gen-masks", "--config", "run.json"]);
    assert!(ok.status.success());
    let line: Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(line["outputs"], 5);

    let cases: [(&[&str], i32, &str); 4] = [
        (&["gen-masks"], 2, "usage"),
        (&["gen-masks", "--config", "run.json", "--set", "masks.nope=1"], 2, "config"),
        (&["gen-masks", "--config", "missing.json"], 3, "missing_inputs"),
        (&["train", "--config", "run.json"], 3, "missing_inputs"),
    ];
    for (args, code, kind) in cases {
        let out = bin(dir.path(), args);
        assert_eq!(out.status.code(), Some(code), "{args:?}");
        let err: Value = serde_json::from_slice(&out.stderr).unwrap();
        assert_eq!(err["error"]["kind"], kind, "{args:?}");
    }
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = br#"{"dataset": {"n_shapes": 4, "n_held_out": 2}, "masks": {"count": 3, "width": 40, "height": 40}}"#;
    std::fs::write(dir.path().join("run.json"), cfg).unwrap();
    let mut trees = Vec::new();
    for jobs in ["1", "3"] {
        let out_dir = format!("paths.out_dir=\"out{jobs}\"");
        for cmd in ["gen-masks", "gen-dataset"] {
            let o = bin(dir.path(), &[cmd, "--config", "run.json", "--jobs", jobs, "--set", &out_dir]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        }
        trees.push(read_tree(&dir.path().join(format!("out{jobs}"))));
    }
    assert!(!trees[0].is_empty());
    assert_eq!(trees[0], trees[1]);
}
