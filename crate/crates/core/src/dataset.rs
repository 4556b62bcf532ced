//! Procedural toy dataset: voxelized solids rendered from an orbit of
//! cameras, plus the occluded-view, training-source and evaluation
//! plumbing built on top of it.

use std::fs;
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, parse};
use crate::flow::{reconstruct, sample_unconditional, FlowModel, SampleConfig, TrainingPair, TrainingSource, ViewCondition};
use crate::io::pgm::GrayImage;
use crate::io::voxel::{read_grid, write_grid};
use crate::io::write_atomic;
use crate::masks2d::{gen_random_occlusion, visible_mask, BinaryMask, OcclusionParams};
use crate::mesh::TriMesh;
use crate::mesh_occlusion::{orbit_cameras, render_shaded, Camera};
use crate::metrics::{evaluate_sets, farthest_point_sampling, voxels_to_points, MetricReport, PointCloud};
use crate::patch_tokens::{Image, PatchEmbedder};
use crate::rng::{derive_seed, rng_for, Rng};
use crate::slat::{voxel_iou, ShapeFamily, ToyShape, VoxelGrid};
use crate::Result;

/// Camera orbit used for every shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViewRig {
    pub n_views: usize,
    pub radius: f64,
    pub fov_y: f64,
    pub pitch: f64,
    pub yaw_start: f64,
    pub image_size: usize,
}

impl Default for ViewRig {
    fn default() -> Self {
        Self { n_views: 4, radius: 2.0, fov_y: 40.0, pitch: 30.0, yaw_start: 0.0, image_size: 56 }
    }
}

impl ViewRig {
    pub fn cameras(&self) -> Result<Vec<Camera>> {
        orbit_cameras(self.n_views, self.radius, self.fov_y, self.pitch, self.yaw_start, self.image_size)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub n_shapes: usize,
    pub grid_n: usize,
    pub families: Vec<ShapeFamily>,
    pub rig: ViewRig,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { n_shapes: 256, grid_n: 16, families: ShapeFamily::ALL.to_vec(), rig: ViewRig::default(), seed: 0 }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_shapes == 0 || self.families.is_empty() {
            return Err(param("dataset needs at least one shape and one family"));
        }
        if self.grid_n < 8 || self.grid_n > 256 {
            return Err(param(format!("grid_n {} outside 8..=256", self.grid_n)));
        }
        self.rig.cameras().map(|_| ())
    }
}

/// One rendered view: shaded image and object silhouette.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedView {
    pub camera: Camera,
    pub image: GrayImage,
    pub obj: BinaryMask,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapeRecord {
    pub family: ShapeFamily,
    pub shape: ToyShape,
    pub grid: VoxelGrid,
    pub views: Vec<RenderedView>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyDataset {
    pub config: DatasetConfig,
    pub shapes: Vec<ShapeRecord>,
}

fn render_record(family: ShapeFamily, shape: ToyShape, n: usize, cameras: &[Camera]) -> Result<ShapeRecord> {
    let grid = shape.voxelize(n)?;
    let mesh = TriMesh::from_voxels(&grid)?;
    let views = cameras
        .iter()
        .map(|cam| {
            let (image, obj) = render_shaded(&mesh, cam)?;
            Ok(RenderedView { camera: cam.clone(), image, obj })
        })
        .collect::<Result<_>>()?;
    Ok(ShapeRecord { family, shape, grid, views })
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: DatasetConfig,
    shapes: Vec<ManifestShape>,
}

#[derive(Serialize, Deserialize)]
struct ManifestShape {
    family: ShapeFamily,
    shape: ToyShape,
    voxels: usize,
    visible_pixels: Vec<usize>,
}

impl ToyDataset {
    /// Shape `i` uses family `families[i mod len]` and parameters drawn from
    /// the sub-seed for `dataset/shape/{i}`.
    pub fn generate(config: &DatasetConfig) -> Result<Self> {
        config.validate()?;
        let cameras = config.rig.cameras()?;
        let shapes = (0..config.n_shapes)
            .into_par_iter()
            .map(|i| {
                let family = config.families[i % config.families.len()];
                let shape = ToyShape::sample(family, &mut rng_for(config.seed, &format!("dataset/shape/{i}")));
                render_record(family, shape, config.grid_n, &cameras)
            })
            .collect::<Result<_>>()?;
        Ok(Self { config: config.clone(), shapes })
    }

    /// Writes `manifest.json`, `voxels/NNNN.vox` and `views/NNNN_V.pgm`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let manifest = Manifest {
            config: self.config.clone(),
            shapes: self
                .shapes
                .iter()
                .map(|s| ManifestShape {
                    family: s.family,
                    shape: s.shape.clone(),
                    voxels: s.grid.count(),
                    visible_pixels: s.views.iter().map(|v| v.obj.count_ones()).collect(),
                })
                .collect(),
        };
        for (i, s) in self.shapes.iter().enumerate() {
            write_atomic(&dir.join("voxels").join(format!("{i:04}.vox")), &write_grid(&s.grid))?;
            for (v, view) in s.views.iter().enumerate() {
                write_atomic(&dir.join("views").join(format!("{i:04}_{v}.pgm")), &view.image.to_pgm())?;
            }
        }
        let mut json = serde_json::to_vec_pretty(&manifest)?;
        json.push(b'\n');
        write_atomic(&dir.join("manifest.json"), &json)
    }

    /// Reads a dataset written by [`ToyDataset::save`]. Silhouettes are the
    /// nonzero pixels of each shaded view.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
        manifest.config.validate()?;
        let cameras = manifest.config.rig.cameras()?;
        let mut shapes = Vec::with_capacity(manifest.shapes.len());
        for (i, m) in manifest.shapes.into_iter().enumerate() {
            let grid = read_grid(&fs::read(dir.join("voxels").join(format!("{i:04}.vox")))?)?;
            if grid.n() != manifest.config.grid_n || grid.count() != m.voxels {
                return Err(parse(format!("voxel file {i:04} disagrees with the manifest")));
            }
            let mut views = Vec::with_capacity(cameras.len());
            for (v, cam) in cameras.iter().enumerate() {
                let image = GrayImage::from_pgm(&fs::read(dir.join("views").join(format!("{i:04}_{v}.pgm")))?)?;
                let obj = BinaryMask::from_gray(&image)?;
                if image.width != cam.image_size || image.height != cam.image_size {
                    return Err(parse(format!("view {i:04}_{v} has the wrong size")));
                }
                views.push(RenderedView { camera: cam.clone(), image, obj });
            }
            shapes.push(ShapeRecord { family: m.family, shape: m.shape, grid, views });
        }
        if shapes.len() != manifest.config.n_shapes {
            return Err(parse("manifest shape count mismatch"));
        }
        Ok(Self { config: manifest.config, shapes })
    }
}

/// Number of occluder redraws before a view is left unoccluded.
pub const OCCLUSION_ATTEMPTS: u64 = 16;

/// A view with a random 2D occluder. Occluders that hide the whole object
/// are redrawn with derived seeds; after [`OCCLUSION_ATTEMPTS`] failures
/// the view is returned unoccluded. Returns `(image, visible, occluder)`.
pub fn occlude_view(view: &RenderedView, params: &OcclusionParams, seed: u64) -> Result<(Image, BinaryMask, BinaryMask)> {
    let s = view.camera.image_size;
    for attempt in 0..OCCLUSION_ATTEMPTS {
        let occ = gen_random_occlusion(s, s, params, derive_seed(seed, &format!("occlusion/{attempt}")))?;
        let vis = visible_mask(&view.obj, &occ)?;
        if vis.count_ones() > 0 {
            return Ok((Image::from_gray(&view.image), vis, occ));
        }
    }
    Ok((Image::from_gray(&view.image), view.obj.clone(), BinaryMask::new(s, s)?))
}

pub fn unoccluded_condition(embedder: &PatchEmbedder, view: &RenderedView) -> Result<ViewCondition> {
    let s = view.camera.image_size;
    ViewCondition::from_render(embedder, &Image::from_gray(&view.image), &view.obj, &BinaryMask::new(s, s)?)
}

pub fn occluded_condition(
    embedder: &PatchEmbedder,
    view: &RenderedView,
    params: &OcclusionParams,
    seed: u64,
) -> Result<ViewCondition> {
    let (image, vis, occ) = occlude_view(view, params, seed)?;
    ViewCondition::from_render(embedder, &image, &vis, &occ)
}

/// Draws a random shape and view, then a fresh occluder, for each pair.
pub struct ToySource<'a> {
    dataset: &'a ToyDataset,
    latents: Vec<crate::attention::Mat>,
    occlusion: OcclusionParams,
}

impl<'a> ToySource<'a> {
    pub fn new(dataset: &'a ToyDataset, model: &FlowModel, occlusion: OcclusionParams) -> Result<Self> {
        occlusion.validate()?;
        let latents = dataset.shapes.iter().map(|s| model.encode_grid(&s.grid)).collect::<Result<_>>()?;
        Ok(Self { dataset, latents, occlusion })
    }
}

impl TrainingSource for ToySource<'_> {
    fn draw(&self, embedder: &PatchEmbedder, rng: &mut Rng) -> Result<TrainingPair> {
        let i = rng.random_range(0..self.dataset.shapes.len());
        let shape = &self.dataset.shapes[i];
        let v = rng.random_range(0..shape.views.len());
        let view = occluded_condition(embedder, &shape.views[v], &self.occlusion, rng.random())?;
        Ok(TrainingPair { l0: self.latents[i].clone(), coords: None, view })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub sample: SampleConfig,
    pub threshold: f64,
    /// Points per cloud for COV/MMD, chosen by farthest-point sampling.
    pub k_points: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { sample: SampleConfig::default(), threshold: 0.5, k_points: 256, seed: 0 }
    }
}

/// Per-shape IoU under each conditioning regime.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeEval {
    pub index: usize,
    pub unoccluded: f64,
    pub occluded: f64,
    pub unconditional: f64,
    pub multi_view_occluded: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub mean_iou: f64,
    pub metrics: MetricReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub shapes: Vec<ShapeEval>,
    pub unoccluded: ConditionSummary,
    pub occluded: ConditionSummary,
    pub unconditional: ConditionSummary,
    pub multi_view_occluded: ConditionSummary,
}

/// Surface point cloud of a grid, thinned to `k` points. A grid with no
/// surface yields the single point at the cube center.
pub fn grid_cloud(grid: &VoxelGrid, k: usize, seed: u64) -> Result<PointCloud> {
    let Ok(pts) = voxels_to_points(grid) else {
        return PointCloud::new(vec![[0.5; 3]]);
    };
    if pts.len() <= k {
        Ok(pts)
    } else {
        farthest_point_sampling(&pts, k, seed)
    }
}

fn summarize(grids: &[VoxelGrid], truth: &[VoxelGrid], iou: &[f64], cfg: &EvalConfig) -> Result<ConditionSummary> {
    let cloud = |g: &VoxelGrid, i: usize| grid_cloud(g, cfg.k_points, derive_seed(cfg.seed, &format!("eval/fps/{i}")));
    let gen = grids.iter().enumerate().map(|(i, g)| cloud(g, i)).collect::<Result<Vec<_>>>()?;
    let refs = truth.iter().enumerate().map(|(i, g)| cloud(g, i)).collect::<Result<Vec<_>>>()?;
    Ok(ConditionSummary {
        mean_iou: iou.iter().sum::<f64>() / iou.len() as f64,
        metrics: evaluate_sets(&gen, &refs, cfg.k_points)?,
    })
}

/// Reconstructs every shape of `dataset` four ways with the same sampling
/// noise per shape: from view 0 unoccluded, from view 0 occluded, with no
/// conditioning, and from all views occluded. Occluders come from
/// `eval/occlusion/{i}/{v}` sub-seeds of `cfg.seed`.
pub fn evaluate(model: &FlowModel, dataset: &ToyDataset, occlusion: &OcclusionParams, cfg: &EvalConfig) -> Result<EvalReport> {
    if dataset.shapes.is_empty() {
        return Err(param("nothing to evaluate"));
    }
    type Row = (ShapeEval, [VoxelGrid; 4]);
    let rows: Vec<Row> = dataset
        .shapes
        .par_iter()
        .enumerate()
        .map(|(i, s)| -> Result<Row> {
            let sc = SampleConfig { seed: derive_seed(cfg.seed, &format!("eval/noise/{i}")), ..cfg.sample.clone() };
            let occluded: Vec<ViewCondition> = s
                .views
                .iter()
                .enumerate()
                .map(|(v, view)| {
                    occluded_condition(&model.embedder, view, occlusion, derive_seed(cfg.seed, &format!("eval/occlusion/{i}/{v}")))
                })
                .collect::<Result<_>>()?;
            let clean = unoccluded_condition(&model.embedder, &s.views[0])?;
            let g_clean = reconstruct(model, &[clean], &sc, cfg.threshold)?;
            let g_occ = reconstruct(model, &occluded[..1], &sc, cfg.threshold)?;
            let g_unc = model.decode_tokens(&sample_unconditional(model, &sc)?, cfg.threshold)?;
            let g_multi = reconstruct(model, &occluded, &sc, cfg.threshold)?;
            let e = ShapeEval {
                index: i,
                unoccluded: voxel_iou(&g_clean, &s.grid)?,
                occluded: voxel_iou(&g_occ, &s.grid)?,
                unconditional: voxel_iou(&g_unc, &s.grid)?,
                multi_view_occluded: voxel_iou(&g_multi, &s.grid)?,
            };
            Ok((e, [g_clean, g_occ, g_unc, g_multi]))
        })
        .collect::<Result<_>>()?;
    let truth: Vec<VoxelGrid> = dataset.shapes.iter().map(|s| s.grid.clone()).collect();
    let column = |k: usize| -> Result<ConditionSummary> {
        let grids: Vec<VoxelGrid> = rows.iter().map(|(_, g)| g[k].clone()).collect();
        let iou: Vec<f64> = rows
            .iter()
            .map(|(e, _)| [e.unoccluded, e.occluded, e.unconditional, e.multi_view_occluded][k])
            .collect();
        summarize(&grids, &truth, &iou, cfg)
    };
    Ok(EvalReport {
        unoccluded: column(0)?,
        occluded: column(1)?,
        unconditional: column(2)?,
        multi_view_occluded: column(3)?,
        shapes: rows.into_iter().map(|(e, _)| e).collect(),
    })
}
