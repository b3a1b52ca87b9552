//! The reconstruction loop. A 3D fit starts from the convex hull; each
//! iteration then remeshes, builds an atlas, splats the cloud into an XYZ
//! map, densifies it with the image prior, writes it back to the vertices
//! and refits in 3D. A final stage densifies colors into a texture.
//!
//! All work happens in the unit frame of the input cloud (centroid at the
//! origin, longest extent 1); checkpoint meshes are stored in that frame
//! and the returned mesh is mapped back to input coordinates.
//!
//! Checkpoint layout under `checkpoint_dir`:
//!
//! ```text
//! manifest.toml
//! stage_0/       mesh.obj loss.log
//! stage_<k>/     mesh.obj atlas.obj sparse_xyz.png dense_xyz.npy loss.log
//! stage_<n+1>/   atlas.obj sparse_rgb.png dense_rgb.npy texture.png loss.log
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{config_hash, Preset};
use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::io::{self, RgbImage};
use crate::metrics::{evaluate_meshes, EvalProtocol, MetricReport};
use crate::mesh::{
    bbox_extents, convex_hull, merge_partitions, partition_mesh, remesh_to_resolution, sample_surface, Frame,
    MeshProjector, PointCloud, TriangleMesh,
};
use crate::nn::derive_seed;
use crate::prior2d::{self, optimize_2d_prior_logged, Prior2DConfig};
use crate::prior3d::{self, optimize_3d_prior_logged, Prior3DConfig};
use crate::uvatlas::{
    atlas_obj_string, bake_texture, generate_atlas_with, read_atlas, sparse_samples_image, splat_points_to_uv,
    update_vertices_from_map, AtlasOptions, ChannelKind, DenseUVMap, UVAtlas,
};

const TAG_STAGE: u64 = 21;
const TAG_PART: u64 = 22;
const TAG_SYNTH_SAMPLES: u64 = 31;
const TAG_SYNTH_NOISE: u64 = 32;

pub const MANIFEST_FILE: &str = "manifest.toml";
const MATERIAL: &str = "material0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub iterations: usize,
    pub initial_vertices: usize,
    /// Faces per part above which the 3D fit is partitioned.
    pub max_part_faces: usize,
    /// Remesh target of each iteration; only the first `iterations`
    /// entries are used.
    pub refinement_vertex_schedule: Vec<usize>,
    /// Stop iterating once an iteration moves vertices by less than this
    /// RMS distance (unit frame). Zero disables the check.
    pub early_stop_rms: f64,
    /// Run the color stage; requires a colored cloud.
    pub texture: bool,
    pub atlas: AtlasOptions,
    pub prior3d: Prior3DConfig,
    pub prior2d_xyz: Prior2DConfig,
    pub prior2d_rgb: Prior2DConfig,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            iterations: 3,
            initial_vertices: 2000,
            max_part_faces: 6000,
            refinement_vertex_schedule: vec![5000, 10000, 20000],
            early_stop_rms: 1e-3,
            texture: true,
            atlas: AtlasOptions::default(),
            prior3d: Prior3DConfig::default(),
            prior2d_xyz: Prior2DConfig::default(),
            prior2d_rgb: Prior2DConfig::rgb(),
            seed: 0,
            checkpoint_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Full => PipelineConfig::default(),
            Preset::Desk => PipelineConfig::desk(),
        }
    }

    fn desk() -> Self {
        let full = PipelineConfig::default();
        let image = |base: Prior2DConfig| Prior2DConfig {
            resolution: 128,
            width: 16,
            steps: base.steps / 4,
            ..base
        };
        PipelineConfig {
            initial_vertices: 500,
            refinement_vertex_schedule: vec![1000, 1500, 2000],
            prior3d: Prior3DConfig {
                channel_plan: vec![[6, 16], [16, 32], [32, 32], [32, 32], [32, 16], [16, 6]],
                steps: full.prior3d.steps / 4,
                ..full.prior3d.clone()
            },
            prior2d_xyz: image(full.prior2d_xyz.clone()),
            prior2d_rgb: image(full.prior2d_rgb.clone()),
            ..full
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.iterations == 0 {
            return bad("iterations must be >= 1".into());
        }
        if self.initial_vertices < 4 {
            return bad("initial_vertices must be >= 4".into());
        }
        if self.max_part_faces < 100 {
            return bad("max_part_faces must be >= 100".into());
        }
        if self.refinement_vertex_schedule.len() < self.iterations {
            return bad(format!(
                "refinement_vertex_schedule has {} entries for {} iterations",
                self.refinement_vertex_schedule.len(),
                self.iterations
            ));
        }
        let mut prev = self.initial_vertices;
        for &v in &self.refinement_vertex_schedule[..self.iterations] {
            if v < prev {
                return bad("vertex schedule must be non-decreasing from initial_vertices".into());
            }
            prev = v;
        }
        if !(self.early_stop_rms >= 0.0) {
            return bad("early_stop_rms must be >= 0".into());
        }
        let seeds = [self.seed, self.prior3d.seed, self.prior2d_xyz.seed, self.prior2d_rgb.seed];
        if seeds.iter().any(|&s| s > i64::MAX as u64) {
            return bad("seeds must fit in a signed 64-bit integer".into());
        }
        self.prior3d.validate().map_err(as_config)?;
        self.prior2d_xyz.validate()?;
        self.prior2d_rgb.validate()?;
        if self.atlas.gutter < 4 {
            return bad("atlas gutter must be >= 4 pixels".into());
        }
        Ok(())
    }

    /// Hash of everything that affects results; the checkpoint location is
    /// excluded so a run can be resumed from a moved directory.
    pub fn hash(&self) -> Result<String> {
        config_hash(&PipelineConfig {
            checkpoint_dir: None,
            ..self.clone()
        })
    }

    fn stage_count(&self) -> usize {
        self.iterations + 2
    }

    fn stage_name(&self, k: usize) -> String {
        if k == 0 {
            "init".into()
        } else if k <= self.iterations {
            format!("iteration {k}")
        } else {
            "texture".into()
        }
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Parameter(m) => Error::Config(m),
        other => other,
    }
}

/// One completed stage as recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageRecord {
    pub index: usize,
    pub name: String,
    /// Hex stage seed.
    pub seed: String,
    pub seconds: f64,
    pub vertices: usize,
    pub faces: usize,
    /// RMS vertex movement over the iteration (unit frame).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub displacement_rms: Option<f64>,
    /// Iterations after this one were skipped by the early-stop rule.
    pub stopped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Manifest> {
        let path = dir.join(MANIFEST_FILE);
        toml::from_str(&io::read_text(&path)?).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            msg: e.message().to_string(),
        })
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize manifest: {e}")))?;
        io::write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    /// In the coordinates of the input cloud.
    pub mesh: TriangleMesh,
    pub atlas: UVAtlas,
    pub texture: Option<RgbImage>,
    /// Per geometry stage, when a reference mesh was supplied.
    pub per_stage_metrics: Option<Vec<(String, MetricReport)>>,
    /// Seconds per stage executed in this call.
    pub timings: Vec<(String, f64)>,
    /// Unit frame of the input cloud.
    pub frame: Frame,
    pub manifest: Manifest,
}

/// Optional behaviour of [`reconstruct_with`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Continue from the last completed stage in the checkpoint directory.
    pub resume: bool,
    /// Mesh to evaluate every geometry stage against.
    pub reference: Option<TriangleMesh>,
    pub protocol: EvalProtocol,
}

pub fn reconstruct(cloud: &PointCloud, config: &PipelineConfig) -> Result<ReconstructionResult> {
    reconstruct_with(cloud, config, &RunOptions::default())
}

/// Mesh state carried between stages.
struct Progress {
    mesh: TriangleMesh,
    stopped: bool,
}

pub fn reconstruct_with(cloud: &PointCloud, config: &PipelineConfig, opts: &RunOptions) -> Result<ReconstructionResult> {
    config.validate()?;
    if config.texture && !cloud.has_colors() {
        return Err(Error::InvalidData(
            "texture reconstruction needs a colored point cloud".into(),
        ));
    }
    let hash = config.hash()?;
    let frame = Frame::normalizing(&cloud.positions);
    let unit = cloud.transformed(&frame);
    let dir = config.checkpoint_dir.as_deref();
    if let Some(d) = dir {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }

    let mut manifest = Manifest {
        config_hash: hash.clone(),
        seed: config.seed,
        stages: Vec::new(),
    };
    let mut progress: Option<Progress> = None;
    if opts.resume {
        let d = dir.ok_or_else(|| Error::Config("resume needs a checkpoint directory".into()))?;
        let old = Manifest::read(d)?;
        if old.config_hash != hash {
            return Err(Error::Config(format!(
                "checkpoint {} was written with a different config (hash {} vs {hash})",
                d.display(),
                old.config_hash
            )));
        }
        if let Some(last) = old.stages.iter().rev().find(|r| r.index <= config.iterations) {
            let mesh = io::read_obj(&stage_dir(d, last.index).join("mesh.obj"))?.to_mesh()?;
            progress = Some(Progress {
                mesh,
                stopped: last.stopped,
            });
        }
        manifest = old;
    }

    let mut timings = Vec::new();
    let mut finished: Option<(UVAtlas, Option<RgbImage>)> = None;
    let mut metrics: Vec<(String, MetricReport)> = Vec::new();
    let evaluate_stage = |mesh: &TriangleMesh, name: &str, out: &mut Vec<(String, MetricReport)>| -> Result<()> {
        if let Some(gt) = &opts.reference {
            let report = evaluate_meshes(&mesh.inverse_transformed(&frame), gt, &opts.protocol)?;
            out.push((name.to_string(), report));
        }
        Ok(())
    };
    if progress.is_some() && opts.reference.is_some() {
        // stages finished before the resume are reported from checkpoints
        let d = dir.expect("resume has a directory");
        for rec in manifest.stages.iter().filter(|r| r.index <= config.iterations) {
            let m = io::read_obj(&stage_dir(d, rec.index).join("mesh.obj"))?.to_mesh()?;
            evaluate_stage(&m, &rec.name, &mut metrics)?;
        }
    }

    let start = manifest.stages.last().map_or(0, |r| r.index + 1);
    for k in start..config.stage_count() {
        let name = config.stage_name(k);
        let stage_seed = derive_seed(config.seed, TAG_STAGE, k as u64);
        let last_checkpoint = manifest
            .stages
            .last()
            .zip(dir)
            .map_or_else(|| "none".to_string(), |(r, d)| stage_dir(d, r.index).display().to_string());
        let wrap = |e: Error| Error::Stage {
            stage: name.clone(),
            checkpoint: last_checkpoint.clone(),
            source: Box::new(e),
        };
        let timer = Instant::now();
        let out_dir = dir.map(|d| stage_dir(d, k));
        let mut record = StageRecord {
            index: k,
            name: name.clone(),
            seed: format!("{stage_seed:016x}"),
            seconds: 0.0,
            vertices: 0,
            faces: 0,
            displacement_rms: None,
            stopped: false,
        };
        if k == 0 {
            let mesh = init_stage(&unit, config, stage_seed, out_dir.as_deref()).map_err(wrap)?;
            evaluate_stage(&mesh, &name, &mut metrics).map_err(wrap)?;
            progress = Some(Progress { mesh, stopped: false });
        } else if k <= config.iterations {
            let p = progress.as_mut().expect("init stage ran");
            if p.stopped {
                continue;
            }
            let target = config.refinement_vertex_schedule[k - 1];
            let (mesh, rms) =
                iteration_stage(&p.mesh, &unit, config, target, stage_seed, out_dir.as_deref()).map_err(wrap)?;
            evaluate_stage(&mesh, &name, &mut metrics).map_err(wrap)?;
            record.displacement_rms = Some(rms);
            p.stopped = config.early_stop_rms > 0.0 && rms < config.early_stop_rms && k < config.iterations;
            record.stopped = p.stopped;
            p.mesh = mesh;
        } else {
            let p = progress.as_ref().expect("geometry stages ran");
            finished = Some(texture_stage(&p.mesh, &unit, config, stage_seed, out_dir.as_deref()).map_err(wrap)?);
        }
        let p = progress.as_ref().expect("stage produced a mesh");
        record.vertices = p.mesh.num_vertices();
        record.faces = p.mesh.num_faces();
        record.seconds = timer.elapsed().as_secs_f64();
        timings.push((name.clone(), record.seconds));
        manifest.stages.push(record);
        if let Some(d) = dir {
            manifest.write(d).map_err(wrap)?;
        }
    }

    let mesh = progress.expect("geometry stages ran").mesh;
    let (atlas, texture) = match (finished, dir) {
        (Some(f), _) => f,
        // resumed after everything had finished
        (None, Some(d)) => load_texture_stage(&stage_dir(d, config.iterations + 1), config)?,
        (None, None) => unreachable!("without checkpoints every stage runs"),
    };
    Ok(ReconstructionResult {
        mesh: mesh.inverse_transformed(&frame),
        atlas,
        texture,
        per_stage_metrics: opts.reference.as_ref().map(|_| metrics),
        timings,
        frame,
        manifest,
    })
}

fn stage_dir(root: &Path, k: usize) -> PathBuf {
    root.join(format!("stage_{k}"))
}

fn log_section(log: &mut String, title: &str, body: &str) {
    let _ = writeln!(log, "# {title}");
    log.push_str(body);
}

/// Hull, remesh to the initial resolution, 3D fit.
fn init_stage(unit: &PointCloud, config: &PipelineConfig, seed: u64, out: Option<&Path>) -> Result<TriangleMesh> {
    let hull = convex_hull(unit)?;
    let start = remesh_to_resolution(&hull, config.initial_vertices)?;
    let mut log = String::new();
    let mesh = fit_3d(&start, &unit.positions, config, seed, &mut log)?;
    if let Some(d) = out {
        io::write_atomic(&d.join("loss.log"), log.as_bytes())?;
        io::write_obj(&d.join("mesh.obj"), &mesh)?;
    }
    Ok(mesh)
}

/// Remesh, atlas, XYZ densification, vertex update, 3D fit. Returns the
/// new mesh and the RMS movement of its vertices over the iteration.
fn iteration_stage(
    mesh: &TriangleMesh,
    unit: &PointCloud,
    config: &PipelineConfig,
    target: usize,
    seed: u64,
    out: Option<&Path>,
) -> Result<(TriangleMesh, f64)> {
    let remeshed = remesh_to_resolution(mesh, target)?;
    let cfg2d = Prior2DConfig {
        seed: derive_seed(seed, TAG_PART, u64::MAX),
        ..config.prior2d_xyz.clone()
    };
    let atlas = generate_atlas_with(&remeshed, cfg2d.resolution, &config.atlas)?;
    let samples = splat_points_to_uv(&remeshed, &atlas, unit, ChannelKind::Xyz)?;
    let dense = optimize_2d_prior_logged(&samples, &cfg2d, &[])?;
    let updated = update_vertices_from_map(&remeshed, &atlas, &dense.map)?.mesh;
    let mut log = String::new();
    log_section(&mut log, "prior2d xyz", &prior2d::format_loss_log(&dense.log));
    let fitted = fit_3d(&updated, &unit.positions, config, seed, &mut log)?;
    let rms = (remeshed
        .vertices
        .iter()
        .zip(&fitted.vertices)
        .map(|(a, b)| geom::dist2(*a, *b))
        .sum::<f64>()
        / remeshed.num_vertices().max(1) as f64)
        .sqrt();
    if let Some(d) = out {
        io::write_atomic(&d.join("atlas.obj"), atlas_obj_string(&remeshed, &atlas, None).as_bytes())?;
        io::write_png(&d.join("sparse_xyz.png"), &sparse_samples_image(&samples))?;
        write_dense(&d.join("dense_xyz.npy"), &dense.map)?;
        io::write_atomic(&d.join("loss.log"), log.as_bytes())?;
        io::write_obj(&d.join("mesh.obj"), &fitted)?;
    }
    Ok((fitted, rms))
}

/// Final atlas and, when enabled, the color densification and bake.
fn texture_stage(
    mesh: &TriangleMesh,
    unit: &PointCloud,
    config: &PipelineConfig,
    seed: u64,
    out: Option<&Path>,
) -> Result<(UVAtlas, Option<RgbImage>)> {
    let cfg2d = Prior2DConfig {
        seed: derive_seed(seed, TAG_PART, u64::MAX),
        ..config.prior2d_rgb.clone()
    };
    let atlas = generate_atlas_with(mesh, cfg2d.resolution, &config.atlas)?;
    if let Some(d) = out {
        let obj = atlas_obj_string(mesh, &atlas, Some(("mesh.mtl", MATERIAL)));
        io::write_atomic(&d.join("atlas.obj"), obj.as_bytes())?;
    }
    if !config.texture {
        if let Some(d) = out {
            io::write_atomic(&d.join("loss.log"), b"")?;
        }
        return Ok((atlas, None));
    }
    let samples = splat_points_to_uv(mesh, &atlas, unit, ChannelKind::Rgb)?;
    let dense = optimize_2d_prior_logged(&samples, &cfg2d, &[])?;
    let texture = bake_texture(&atlas, &dense.map)?;
    if let Some(d) = out {
        io::write_png(&d.join("sparse_rgb.png"), &sparse_samples_image(&samples))?;
        write_dense(&d.join("dense_rgb.npy"), &dense.map)?;
        let mut log = String::new();
        log_section(&mut log, "prior2d rgb", &prior2d::format_loss_log(&dense.log));
        io::write_atomic(&d.join("loss.log"), log.as_bytes())?;
        io::write_png(&d.join("texture.png"), &texture)?;
    }
    Ok((atlas, Some(texture)))
}

fn load_texture_stage(d: &Path, config: &PipelineConfig) -> Result<(UVAtlas, Option<RgbImage>)> {
    let (_, atlas) = read_atlas(&d.join("atlas.obj"), config.prior2d_rgb.resolution)?;
    let texture = if config.texture {
        Some(io::read_png(&d.join("texture.png"))?)
    } else {
        None
    };
    Ok((atlas, texture))
}

fn write_dense(path: &Path, map: &DenseUVMap) -> Result<()> {
    io::write_npy(path, &[map.height, map.width, 3], &map.to_flat())
}

/// 3D fit of `mesh` to `cloud`, partitioned when the mesh has more than
/// `max_part_faces` faces. Each part is fitted to the cloud points whose
/// closest surface point lies on one of its faces, and overlapping
/// vertices are averaged.
fn fit_3d(mesh: &TriangleMesh, cloud: &[Vec3], config: &PipelineConfig, seed: u64, log: &mut String) -> Result<TriangleMesh> {
    let partition = partition_mesh(mesh, config.max_part_faces)?;
    let cfg = |i: usize| Prior3DConfig {
        seed: derive_seed(seed, TAG_PART, i as u64),
        ..config.prior3d.clone()
    };
    if partition.parts.len() == 1 {
        let out = optimize_3d_prior_logged(mesh, cloud, &cfg(0))?;
        log_section(log, "prior3d", &prior3d::format_loss_log(&out.log));
        return Ok(out.mesh);
    }
    let projector = MeshProjector::new(mesh);
    let mut face_parts: Vec<Vec<usize>> = vec![Vec::new(); mesh.num_faces()];
    for (i, part) in partition.parts.iter().enumerate() {
        for &f in &part.face_map {
            face_parts[f].push(i);
        }
    }
    let mut part_clouds: Vec<Vec<Vec3>> = vec![Vec::new(); partition.parts.len()];
    for &q in cloud {
        let (sp, _) = projector.project(q);
        for &i in &face_parts[sp.face_id] {
            part_clouds[i].push(q);
        }
    }
    let mut per_part = Vec::with_capacity(partition.parts.len());
    for (i, (part, pc)) in partition.parts.iter().zip(&part_clouds).enumerate() {
        if pc.is_empty() {
            per_part.push(part.mesh.vertices.clone());
            continue;
        }
        let out = optimize_3d_prior_logged(&part.mesh, pc, &cfg(i))?;
        log_section(log, &format!("prior3d part {i}"), &prior3d::format_loss_log(&out.log));
        per_part.push(out.mesh.vertices);
    }
    let vertices = merge_partitions(&partition, &per_part)?;
    TriangleMesh::new(vertices, mesh.faces.clone())
}

/// Writes `mesh.obj` (with UVs), `mesh.mtl` and `texture.png` when a
/// texture exists, otherwise a plain `mesh.obj`.
pub fn write_result(dir: &Path, result: &ReconstructionResult) -> Result<()> {
    match &result.texture {
        Some(tex) => {
            let obj = atlas_obj_string(&result.mesh, &result.atlas, Some(("mesh.mtl", MATERIAL)));
            io::write_atomic(&dir.join("mesh.obj"), obj.as_bytes())?;
            io::write_atomic(&dir.join("mesh.mtl"), io::mtl_string(MATERIAL, "texture.png").as_bytes())?;
            io::write_png(&dir.join("texture.png"), tex)
        }
        None => io::write_obj(&dir.join("mesh.obj"), &result.mesh),
    }
}

/// Metric report of a reconstruction against a reference mesh.
pub fn evaluate(result: &TriangleMesh, gt: &TriangleMesh, protocol: &EvalProtocol) -> Result<MetricReport> {
    let problems = gt.validate();
    if !problems.is_empty() {
        return Err(Error::InvalidData(format!("reference mesh: {}", problems.join("; "))));
    }
    evaluate_meshes(result, gt, protocol)
}

/// Per-face texture coordinates and the image they index.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceTexture {
    pub corner_uv: Vec<[[f64; 2]; 3]>,
    pub image: RgbImage,
}

impl SurfaceTexture {
    /// Bilinear color in `[0, 1]` at a barycentric point of `face`.
    pub fn color_at(&self, face: usize, barycentric: [f64; 3]) -> [f64; 3] {
        let t = self.corner_uv[face];
        let uv = [0, 1].map(|k| (0..3).map(|c| barycentric[c] * t[c][k]).sum::<f64>());
        let (w, h) = (self.image.width, self.image.height);
        let x = (uv[0] * w as f64 - 0.5).clamp(0.0, (w - 1) as f64);
        let y = ((1.0 - uv[1]) * h as f64 - 0.5).clamp(0.0, (h - 1) as f64);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let px = |r: usize, c: usize| self.image.get(r, c).map(|v| v as f64 / 255.0);
        let (a, b, c, d) = (px(y0, x0), px(y0, x1), px(y1, x0), px(y1, x1));
        [0, 1, 2].map(|k| {
            (1.0 - fy) * ((1.0 - fx) * a[k] + fx * b[k]) + fy * ((1.0 - fx) * c[k] + fx * d[k])
        })
    }
}

/// Reference surface with an optional diffuse texture.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub mesh: TriangleMesh,
    pub texture: Option<SurfaceTexture>,
}

/// Reads a reference mesh. An OBJ whose faces all carry texture
/// coordinates and whose first material library names a `map_Kd` image
/// yields a textured reference.
pub fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    let is_obj = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("obj"));
    if !is_obj {
        return Ok(GroundTruth {
            mesh: io::read_mesh(path)?,
            texture: None,
        });
    }
    let obj = io::read_obj(path)?;
    let mesh = obj.to_mesh()?;
    let base = path.parent().unwrap_or(Path::new("."));
    let image = match obj.material_libs.first() {
        Some(lib) => {
            let mtl = io::read_text(&base.join(lib))?;
            mtl.lines()
                .filter_map(|l| l.trim().strip_prefix("map_Kd"))
                .map(|f| base.join(f.trim()))
                .next()
        }
        None => None,
    };
    let corner_uv: Option<Vec<[[f64; 2]; 3]>> = obj
        .face_texcoords
        .iter()
        .map(|t| t.map(|t| t.map(|i| obj.texcoords[i])))
        .collect();
    let texture = match (image, corner_uv) {
        (Some(img), Some(corner_uv)) => Some(SurfaceTexture {
            corner_uv,
            image: io::read_png(&img)?,
        }),
        _ => None,
    };
    Ok(GroundTruth { mesh, texture })
}

/// Area-uniform samples of the reference with optional texture colors and
/// Gaussian position noise of per-axis standard deviation
/// `noise_std_fraction` times that axis's extent.
pub fn synthesize_input(
    gt: &GroundTruth,
    n_points: usize,
    noise_std_fraction: f64,
    seed: u64,
    with_colors: bool,
) -> Result<PointCloud> {
    if n_points < 4 {
        return Err(Error::Parameter(format!("need at least 4 points, got {n_points}")));
    }
    if !(noise_std_fraction >= 0.0 && noise_std_fraction.is_finite()) {
        return Err(Error::Parameter(format!("noise fraction must be >= 0, got {noise_std_fraction}")));
    }
    let texture = match (with_colors, &gt.texture) {
        (true, None) => {
            return Err(Error::InvalidData("colors requested but the reference mesh has no texture".into()));
        }
        (true, Some(t)) => Some(t),
        (false, _) => None,
    };
    let samples = sample_surface(&gt.mesh, n_points, derive_seed(seed, TAG_SYNTH_SAMPLES, 0));
    let extents = bbox_extents(&gt.mesh.vertices);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, TAG_SYNTH_NOISE, 0));
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let positions: Vec<Vec3> = samples
        .iter()
        .map(|s| {
            let mut p = s.position;
            if noise_std_fraction > 0.0 {
                for k in 0..3 {
                    p[k] += noise_std_fraction * extents[k] * unit.sample(&mut rng);
                }
            }
            p
        })
        .collect();
    let colors = texture.map(|t| samples.iter().map(|s| t.color_at(s.face_id, s.barycentric)).collect());
    PointCloud::new(positions, colors)
}
