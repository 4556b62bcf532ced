use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use occlusym::dataset::{evaluate, grid_cloud, occluded_condition, EvalReport, ToyDataset, ToySource};
use occlusym::flow::{load_checkpoint, reconstruct, save_checkpoint, train_with, FlowModel, ViewCondition};
use occlusym::io::obj::parse_obj;
use occlusym::io::ply::write_ply;
use occlusym::io::voxel::write_grid;
use occlusym::masks2d::{gen_random_occlusion, mask_ratio};
use occlusym::mesh_occlusion::{random_walk_select, render_masks};
use occlusym::rng::{derive_seed, rng_for};
use occlusym::slat::voxel_iou;
use rand::Rng as _;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{roles, MaskMode, RunConfig};
use crate::report::{loss_csv, metric_table};
use crate::{require, to_json_bytes, CliError, CliResult, Outputs};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    GenMasks,
    GenDataset,
    Train,
    Sample,
    Eval,
    Report,
}

pub fn run_command(cmd: Command, cfg: &RunConfig) -> CliResult<Outputs> {
    match cmd {
        Command::GenMasks => cmd_gen_masks(cfg),
        Command::GenDataset => cmd_gen_dataset(cfg),
        Command::Train => cmd_train(cfg),
        Command::Sample => cmd_sample(cfg),
        Command::Eval => cmd_eval(cfg),
        Command::Report => cmd_report(cfg),
    }
}

pub struct Layout<'a>(&'a Path);

impl<'a> Layout<'a> {
    pub fn new(cfg: &'a RunConfig) -> Self {
        Self(&cfg.paths.out_dir)
    }
    pub fn masks(&self) -> PathBuf {
        self.0.join("masks")
    }
    pub fn train_set(&self) -> PathBuf {
        self.0.join("dataset").join("train")
    }
    pub fn held_out(&self) -> PathBuf {
        self.0.join("dataset").join("held_out")
    }
    pub fn loss_csv(&self) -> PathBuf {
        self.0.join("train").join("loss.csv")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.0.join("train").join("checkpoint.ocsy")
    }
    pub fn samples(&self) -> PathBuf {
        self.0.join("samples")
    }
    pub fn eval_report(&self) -> PathBuf {
        self.0.join("eval").join("report.json")
    }
    pub fn eval_table(&self) -> PathBuf {
        self.0.join("eval").join("table.txt")
    }
    pub fn report(&self) -> PathBuf {
        self.0.join("report")
    }
}

fn warn(message: &str, fields: Value) {
    eprintln!("{}", json!({ "warning": message, "detail": fields }));
}

/// 2D mode writes `count` random occluder masks; 3D mode walks each mesh
/// to a target area share and renders `(obj, occ)` pairs from the camera
/// orbit. Unreadable meshes are skipped with a warning; if every mesh fails
/// the command fails.
pub fn cmd_gen_masks(cfg: &RunConfig) -> CliResult<Outputs> {
    let dir = Layout::new(cfg).masks();
    let seed = cfg.seed_for(roles::MASKS);
    let mut out = Outputs::default();
    let manifest = match cfg.masks.mode {
        MaskMode::Image => {
            let (w, h) = (cfg.masks.width, cfg.masks.height);
            let masks = (0..cfg.masks.count)
                .into_par_iter()
                .map(|i| {
                    let s = derive_seed(seed, &format!("mask/{i}"));
                    gen_random_occlusion(w, h, &cfg.occlusion, s).map(|m| (s, m))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mut entries = Vec::new();
            for (i, (s, mask)) in masks.iter().enumerate() {
                let name = format!("mask_{i:04}");
                let ratio = mask_ratio(mask);
                let sidecar = json!({ "index": i, "seed": s, "width": w, "height": h, "ratio": ratio });
                out.emit(&dir.join(format!("{name}.pgm")), &mask.to_pgm())?;
                out.emit(&dir.join(format!("{name}.json")), &to_json_bytes(&sidecar)?)?;
                entries.push(json!({ "file": format!("{name}.pgm"), "seed": s, "ratio": ratio }));
            }
            json!({ "mode": "2d", "count": entries.len(), "seed": seed, "occlusion": cfg.occlusion, "masks": entries })
        }
        MaskMode::Mesh => {
            if cfg.paths.meshes.is_empty() {
                return Err(CliError::Config("3d mode needs paths.meshes".into()));
            }
            let missing: Vec<&Path> = cfg.paths.meshes.iter().map(PathBuf::as_path).collect();
            require(&missing)?;
            let cameras = cfg.camera.cameras()?;
            let [lo, hi] = cfg.masks.target_ratio;
            let mut meshes = Vec::new();
            let mut pairs = 0;
            for (m, path) in cfg.paths.meshes.iter().enumerate() {
                let label = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
                let mesh = match std::fs::read(path).map_err(occlusym::Error::from).and_then(|b| parse_obj(&b)) {
                    Ok(mesh) => mesh.normalized(),
                    Err(e) => {
                        warn("skipping mesh", json!({ "mesh": label, "error": e.to_string() }));
                        meshes.push(json!({ "mesh": label, "status": "skipped", "error": e.to_string() }));
                        continue;
                    }
                };
                let target = if hi > lo { rng_for(seed, &format!("mesh/{m}/target")).random_range(lo..=hi) } else { lo };
                let walk_seed = derive_seed(seed, &format!("mesh/{m}/walk"));
                let sel = random_walk_select(&mesh, target, walk_seed)?;
                let mut views = Vec::new();
                for (v, cam) in cameras.iter().enumerate() {
                    let (obj, occ) = render_masks(&mesh, &sel, cam)?;
                    let name = format!("mesh_{m:03}_view_{v}");
                    let sidecar = json!({
                        "mesh": label,
                        "view": v,
                        "camera": cam,
                        "target_ratio": target,
                        "achieved_ratio": sel.achieved_ratio,
                        "walk_seed": walk_seed,
                        "obj_pixels": obj.count_ones(),
                        "occ_pixels": occ.count_ones(),
                    });
                    out.emit(&dir.join(format!("{name}_obj.pgm")), &obj.to_pgm())?;
                    out.emit(&dir.join(format!("{name}_occ.pgm")), &occ.to_pgm())?;
                    out.emit(&dir.join(format!("{name}.json")), &to_json_bytes(&sidecar)?)?;
                    views.push(name);
                    pairs += 1;
                }
                meshes.push(json!({
                    "mesh": label,
                    "status": "ok",
                    "triangles": mesh.triangles().len(),
                    "target_ratio": target,
                    "achieved_ratio": sel.achieved_ratio,
                    "views": views,
                }));
            }
            if pairs == 0 {
                return Err(CliError::BadInput {
                    path: cfg.paths.meshes[0].clone(),
                    message: "every mesh failed to load".into(),
                });
            }
            json!({ "mode": "3d", "count": pairs, "seed": seed, "camera": cfg.camera, "meshes": meshes })
        }
    };
    out.emit(&dir.join("manifest.json"), &to_json_bytes(&manifest)?)?;
    Ok(out)
}

fn save_dataset(ds: &ToyDataset, dir: &Path, out: &mut Outputs) -> CliResult<()> {
    ds.save(dir)?;
    if ToyDataset::load(dir)? != *ds {
        return Err(CliError::Unvalidated(dir.to_path_buf()));
    }
    out.adopt(&dir.join("manifest.json"))
}

/// Training and held-out shape sets from independent sub-seeds.
pub fn cmd_gen_dataset(cfg: &RunConfig) -> CliResult<Outputs> {
    let layout = Layout::new(cfg);
    let mut out = Outputs::default();
    save_dataset(&ToyDataset::generate(&cfg.train_dataset())?, &layout.train_set(), &mut out)?;
    save_dataset(&ToyDataset::generate(&cfg.held_out_dataset())?, &layout.held_out(), &mut out)?;
    Ok(out)
}

fn load_dataset(dir: &Path) -> CliResult<ToyDataset> {
    let manifest = dir.join("manifest.json");
    require(&[&manifest])?;
    ToyDataset::load(dir).map_err(|e| CliError::BadInput { path: dir.to_path_buf(), message: e.to_string() })
}

fn load_model(path: &Path) -> CliResult<FlowModel> {
    require(&[path])?;
    let bytes = std::fs::read(path).map_err(occlusym::Error::from)?;
    load_checkpoint(&bytes)
        .map(|(m, _)| m)
        .map_err(|e| CliError::BadInput { path: path.to_path_buf(), message: e.to_string() })
}

pub fn cmd_train(cfg: &RunConfig) -> CliResult<Outputs> {
    let layout = Layout::new(cfg);
    let ds = load_dataset(&layout.train_set())?;
    let model = FlowModel::new(cfg.model_config())?;
    let source = ToySource::new(&ds, &model, cfg.occlusion.clone())?;
    let tc = cfg.train_config();
    let (model, losses) = train_with(&source, model, &tc, |_, _| {})?;
    let meta = json!({ "seed": cfg.seed, "train": tc, "steps": losses.len(), "final_loss": losses.last() });
    let mut out = Outputs::default();
    out.emit(&layout.loss_csv(), &loss_csv(&losses)?)?;
    let bytes = save_checkpoint(&model, &meta)?;
    out.emit(&layout.checkpoint(), &bytes)?;
    let (back, _) = load_checkpoint(&bytes)?;
    if back.params != model.params {
        return Err(CliError::Unvalidated(layout.checkpoint()));
    }
    Ok(out)
}

/// Reconstructs the first `sample.count` held-out shapes from their first
/// `sample.n_views` views, each under a fresh occluder.
pub fn cmd_sample(cfg: &RunConfig) -> CliResult<Outputs> {
    let layout = Layout::new(cfg);
    let ckpt = layout.checkpoint();
    require(&[&ckpt, &layout.held_out().join("manifest.json")])?;
    let model = load_model(&ckpt)?;
    let ds = load_dataset(&layout.held_out())?;
    let seed = cfg.seed_for(roles::SAMPLE);
    let n = cfg.sample.count.min(ds.shapes.len());
    let results = ds.shapes[..n]
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let views = s.views[..cfg.sample.n_views]
                .iter()
                .enumerate()
                .map(|(v, view)| {
                    occluded_condition(&model.embedder, view, &cfg.occlusion, derive_seed(seed, &format!("occlusion/{i}/{v}")))
                })
                .collect::<Result<Vec<ViewCondition>, _>>()?;
            let sc = cfg.sample_config(derive_seed(seed, &format!("noise/{i}")));
            let grid = reconstruct(&model, &views, &sc, cfg.sample.threshold)?;
            let cloud = grid_cloud(&grid, cfg.eval.k_points, derive_seed(seed, &format!("fps/{i}")))?;
            let iou = voxel_iou(&grid, &s.grid)?;
            Ok((grid, cloud, iou))
        })
        .collect::<occlusym::Result<Vec<_>>>()?;
    let dir = layout.samples();
    let mut out = Outputs::default();
    let mut entries = Vec::new();
    for (i, (grid, cloud, iou)) in results.iter().enumerate() {
        out.emit(&dir.join(format!("sample_{i:04}.vox")), &write_grid(grid))?;
        out.emit(&dir.join(format!("sample_{i:04}.ply")), &write_ply(cloud))?;
        entries.push(json!({ "index": i, "voxels": grid.count(), "iou": iou }));
    }
    let manifest = json!({ "count": n, "n_views": cfg.sample.n_views, "seed": seed, "samples": entries });
    out.emit(&dir.join("manifest.json"), &to_json_bytes(&manifest)?)?;
    Ok(out)
}

pub fn cmd_eval(cfg: &RunConfig) -> CliResult<Outputs> {
    let layout = Layout::new(cfg);
    require(&[&layout.checkpoint(), &layout.held_out().join("manifest.json")])?;
    let model = load_model(&layout.checkpoint())?;
    let ds = load_dataset(&layout.held_out())?;
    let report = evaluate(&model, &ds, &cfg.occlusion, &cfg.eval_config())?;
    let mut out = Outputs::default();
    let bytes = to_json_bytes(&report)?;
    out.emit(&layout.eval_report(), &bytes)?;
    let back: EvalReport = serde_json::from_slice(&bytes).map_err(occlusym::Error::from)?;
    if back != report {
        return Err(CliError::Unvalidated(layout.eval_report()));
    }
    out.emit(&layout.eval_table(), metric_table(&report, cfg.camera.n_views).as_bytes())?;
    Ok(out)
}

pub fn cmd_report(cfg: &RunConfig) -> CliResult<Outputs> {
    let layout = Layout::new(cfg);
    let (csv_path, json_path) = (layout.loss_csv(), layout.eval_report());
    require(&[&csv_path, &json_path])?;
    let (svg, summary) = crate::report::render(&csv_path, &json_path)?;
    let mut out = Outputs::default();
    out.emit(&layout.report().join("loss.svg"), svg.as_bytes())?;
    out.emit(&layout.report().join("summary.md"), summary.as_bytes())?;
    Ok(out)
}

/// One-line JSON listing of what a command wrote, for stdout.
pub fn summary_line(cmd: &str, out: &Outputs) -> String {
    let mut s = String::new();
    let files: Vec<String> = out.paths().iter().map(|p| p.display().to_string()).collect();
    let _ = write!(s, "{}", json!({ "command": cmd, "outputs": files.len(), "files": files }));
    s
}
