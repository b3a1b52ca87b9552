//! UV atlases of triangle meshes: generation, validation, splatting of
//! point values into UV space, write-back of dense maps to vertices and
//! texture baking.
//!
//! Conventions follow OBJ: `u` runs along image columns and `v` points up,
//! so image row 0 holds `v` near 1. Pixel `(row, col)` has its centre at
//! `u = (col + 0.5) / W`, `v = 1 - (row + 0.5) / H`. Sample sites are
//! `[row, col]` in sub-pixel units. Rasterization works in `[x, y]` pixel
//! coordinates with `y = v * H - 0.5` pointing up, where front-facing
//! charts are counter-clockwise.

mod chart;
mod obj;
mod pack;

use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom;
use crate::io::RgbImage;
use crate::mesh::{MeshProjector, PointCloud, TriangleMesh};

pub use obj::{atlas_obj_string, import_atlas, read_atlas};

pub const DEFAULT_RESOLUTION: usize = 1024;
/// Per-face singular-value ratio above which a face counts as an outlier.
pub const MAX_DISTORTION: f64 = 10.0;
/// Minimum separation of chart bounding boxes, in pixels.
pub const MIN_GUTTER: f64 = 2.0;

const NO_CHART: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Xyz,
    Rgb,
}

/// Knobs of the built-in parameterizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AtlasOptions {
    /// Half-angle of the normal cone admitted into one chart.
    pub cone_angle_deg: f64,
    /// Pixels between the contents of neighbouring charts.
    pub gutter: usize,
    /// Rounds of splitting charts that fail the injectivity check.
    pub refinement_rounds: usize,
    /// Charts with fewer faces are merged into a neighbour after
    /// segmentation; noisy surfaces otherwise shatter into slivers.
    pub min_chart_faces: usize,
}

impl Default for AtlasOptions {
    fn default() -> Self {
        AtlasOptions {
            cone_angle_deg: 60.0,
            gutter: 4,
            refinement_rounds: 6,
            min_chart_faces: 8,
        }
    }
}

/// Source of atlases for the pipeline.
pub trait AtlasGenerator {
    fn generate(&self, mesh: &TriangleMesh, resolution: usize) -> Result<UVAtlas>;
}

/// Normal-cone segmentation, conformal flattening and skyline packing.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinAtlas {
    pub options: AtlasOptions,
}

impl AtlasGenerator for BuiltinAtlas {
    fn generate(&self, mesh: &TriangleMesh, resolution: usize) -> Result<UVAtlas> {
        generate_atlas_with(mesh, resolution, &self.options)
    }
}

/// Atlas of a mesh at a square raster resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct UVAtlas {
    pub resolution: usize,
    /// UV of each face corner, in face-vertex order.
    pub corner_uv: Vec<[[f64; 2]; 3]>,
    pub chart_id: Vec<usize>,
    pub num_charts: usize,
    /// Per vertex, one `(chart, uv)` entry per chart it appears in, sorted
    /// by chart.
    pub vertex_uv: Vec<Vec<(usize, [f64; 2])>>,
    /// Row-major; pixels whose 2-pixel box meets a chart triangle.
    pub valid_mask: Vec<bool>,
    /// Chart owning each valid pixel, `u32::MAX` elsewhere.
    pub pixel_chart: Vec<u32>,
    /// Faces whose conformal distortion exceeds [`MAX_DISTORTION`].
    pub distortion_outliers: usize,
}

/// Bilinear interpolation stencil: four flat pixel indices and weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    pub pixels: [usize; 4],
    pub weights: [f64; 4],
}

/// Stencil of `site = [row, col]` in an `h x w` grid, or `None` when the
/// site lies outside `[0, h-1] x [0, w-1]`. At the last row or column the
/// stencil shifts inward so weights stay in `[0, 1]`.
pub fn bilinear_footprint(site: [f64; 2], h: usize, w: usize) -> Option<Footprint> {
    let (y, x) = (site[0], site[1]);
    if !(y >= 0.0 && x >= 0.0 && y <= (h as f64 - 1.0) && x <= (w as f64 - 1.0)) {
        return None;
    }
    let axis = |t: f64, n: usize| -> (usize, usize, f64) {
        if n == 1 {
            return (0, 0, 0.0);
        }
        let i0 = (t.floor() as usize).min(n - 2);
        (i0, i0 + 1, t - i0 as f64)
    };
    let (i0, i1, fy) = axis(y, h);
    let (j0, j1, fx) = axis(x, w);
    Some(Footprint {
        pixels: [i0 * w + j0, i0 * w + j1, i1 * w + j0, i1 * w + j1],
        weights: [(1.0 - fy) * (1.0 - fx), (1.0 - fy) * fx, fy * (1.0 - fx), fy * fx],
    })
}

/// Problems found while assembling an atlas, and the charts whose
/// triangles overlap in the raster.
#[derive(Debug, Default)]
struct Diagnostics {
    problems: Vec<String>,
    overlapping: BTreeSet<usize>,
}

impl UVAtlas {
    pub fn width(&self) -> usize {
        self.resolution
    }

    pub fn height(&self) -> usize {
        self.resolution
    }

    /// Sub-pixel site `[row, col]` of a UV coordinate.
    pub fn uv_to_site(&self, uv: [f64; 2]) -> [f64; 2] {
        let r = self.resolution as f64;
        [(1.0 - uv[1]) * r - 0.5, uv[0] * r - 0.5]
    }

    /// Flat (row-major) index of the pixel at `[x, y]` with `y` pointing up.
    pub fn pixel_index(&self, x: usize, y: usize) -> usize {
        (self.resolution - 1 - y) * self.resolution + x
    }

    /// Pixel-space `[x, y]` corners of a face, `y` pointing up.
    pub fn face_pixels(&self, f: usize) -> [[f64; 2]; 3] {
        let r = self.resolution as f64;
        self.corner_uv[f].map(|uv| [uv[0] * r - 0.5, uv[1] * r - 0.5])
    }

    pub fn valid_count(&self) -> usize {
        self.valid_mask.iter().filter(|&&v| v).count()
    }

    /// Chart of the site's bilinear stencil when all four pixels are valid
    /// and belong to one chart.
    pub fn site_chart(&self, site: [f64; 2]) -> Option<usize> {
        let fp = bilinear_footprint(site, self.resolution, self.resolution)?;
        let c = self.pixel_chart[fp.pixels[0]];
        let ok = fp
            .pixels
            .iter()
            .all(|&p| self.valid_mask[p] && self.pixel_chart[p] == c);
        ok.then_some(c as usize)
    }

    /// Number of chart triangles covering each pixel centre.
    pub fn coverage_multiplicity(&self) -> Vec<u8> {
        let n = self.resolution;
        let mut count = vec![0u8; n * n];
        for f in 0..self.corner_uv.len() {
            let tri = self.face_pixels(f);
            if let Some((xs, ys)) = pack::pixel_range(&tri, 0.0, n, n) {
                for y in ys[0]..=ys[1] {
                    for x in xs[0]..=xs[1] {
                        if pack::covers(&tri, [x as f64, y as f64]) {
                            let p = self.pixel_index(x, y);
                            count[p] = count[p].saturating_add(1);
                        }
                    }
                }
            }
        }
        count
    }

    /// Pixel-space bounding box `(min, max)` of each chart's triangles.
    pub fn chart_bounds(&self) -> Vec<([f64; 2], [f64; 2])> {
        let mut b = vec![([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]); self.num_charts];
        for f in 0..self.corner_uv.len() {
            let c = self.chart_id[f];
            for p in self.face_pixels(f) {
                for k in 0..2 {
                    b[c].0[k] = b[c].0[k].min(p[k]);
                    b[c].1[k] = b[c].1[k].max(p[k]);
                }
            }
        }
        b
    }

    /// Conformal distortion of every face.
    pub fn distortion_ratios(&self, mesh: &TriangleMesh) -> Vec<f64> {
        (0..mesh.num_faces())
            .map(|f| chart::distortion_ratio(mesh.face_points(f), self.corner_uv[f]))
            .collect()
    }

    /// Builds an atlas from per-corner UVs and chart labels, listing every
    /// violated invariant.
    pub fn from_corner_uvs(
        mesh: &TriangleMesh,
        corner_uv: Vec<[[f64; 2]; 3]>,
        chart_id: Vec<usize>,
        resolution: usize,
    ) -> Result<(UVAtlas, Vec<String>)> {
        let (atlas, diag) = assemble(mesh, corner_uv, chart_id, resolution)?;
        Ok((atlas, diag.problems))
    }

    /// Re-checks all invariants against `mesh`.
    pub fn check(&self, mesh: &TriangleMesh) -> Vec<String> {
        match assemble(mesh, self.corner_uv.clone(), self.chart_id.clone(), self.resolution) {
            Ok((_, diag)) => diag.problems,
            Err(e) => vec![e.to_string()],
        }
    }
}

fn assemble(
    mesh: &TriangleMesh,
    corner_uv: Vec<[[f64; 2]; 3]>,
    chart_id: Vec<usize>,
    resolution: usize,
) -> Result<(UVAtlas, Diagnostics)> {
    if resolution < 2 {
        return Err(Error::Parameter(format!("atlas resolution {resolution} is below 2")));
    }
    if corner_uv.len() != mesh.num_faces() || chart_id.len() != mesh.num_faces() {
        return Err(Error::Parameter("atlas and mesh face counts differ".into()));
    }
    let mut diag = Diagnostics::default();
    let num_charts = chart_id.iter().map(|&c| c + 1).max().unwrap_or(0);

    let mut out_of_range = 0;
    for uv in corner_uv.iter().flatten() {
        if !uv.iter().all(|t| (0.0..=1.0).contains(t)) {
            out_of_range += 1;
        }
    }
    if out_of_range > 0 {
        diag.problems
            .push(format!("{out_of_range} corner UVs outside [0, 1]"));
    }

    // one uv per (vertex, chart)
    let mut table: HashMap<(usize, usize), [f64; 2]> = HashMap::new();
    let mut discontinuities = 0;
    for (f, face) in mesh.faces.iter().enumerate() {
        for k in 0..3 {
            let uv = corner_uv[f][k];
            match table.entry((face[k], chart_id[f])) {
                std::collections::hash_map::Entry::Occupied(e) => {
                    let o = e.get();
                    if (o[0] - uv[0]).abs() > 1e-6 || (o[1] - uv[1]).abs() > 1e-6 {
                        discontinuities += 1;
                    }
                }
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(uv);
                }
            }
        }
    }
    if discontinuities > 0 {
        diag.problems
            .push(format!("{discontinuities} corners disagree with their vertex UV within a chart"));
    }
    let mut vertex_uv = vec![Vec::new(); mesh.num_vertices()];
    for ((v, c), uv) in table {
        vertex_uv[v].push((c, uv));
    }
    vertex_uv
        .iter_mut()
        .for_each(|e: &mut Vec<(usize, [f64; 2])>| e.sort_by_key(|x| x.0));

    let mut atlas = UVAtlas {
        resolution,
        corner_uv,
        chart_id,
        num_charts,
        vertex_uv,
        valid_mask: vec![false; resolution * resolution],
        pixel_chart: vec![NO_CHART; resolution * resolution],
        distortion_outliers: 0,
    };

    let mut flipped = 0;
    for f in 0..mesh.num_faces() {
        let t = atlas.face_pixels(f);
        if geom::orient2d(t[0], t[1], t[2]) <= 0.0 && !chart::is_degenerate(mesh, f) {
            flipped += 1;
        }
    }
    if flipped > 0 {
        diag.problems.push(format!("{flipped} faces are flipped or collapsed in UV space"));
    }

    // valid mask and chart ownership
    let n = resolution;
    let mut conflicts = 0;
    for f in 0..mesh.num_faces() {
        let tri = atlas.face_pixels(f);
        let c = atlas.chart_id[f] as u32;
        let Some((xs, ys)) = pack::pixel_range(&tri, 1.0, n, n) else { continue };
        for y in ys[0]..=ys[1] {
            for x in xs[0]..=xs[1] {
                if !pack::box_meets_triangle([x as f64, y as f64], 1.0, &tri) {
                    continue;
                }
                let p = atlas.pixel_index(x, y);
                atlas.valid_mask[p] = true;
                if atlas.pixel_chart[p] == NO_CHART {
                    atlas.pixel_chart[p] = c;
                } else if atlas.pixel_chart[p] != c {
                    conflicts += 1;
                }
            }
        }
    }
    if conflicts > 0 {
        diag.problems.push(format!("{conflicts} pixels are claimed by more than one chart"));
    }

    // injectivity: each pixel centre is covered at most once
    let mut first = vec![NO_CHART; n * n];
    let mut overlaps = 0;
    for f in 0..mesh.num_faces() {
        let tri = atlas.face_pixels(f);
        let c = atlas.chart_id[f] as u32;
        let Some((xs, ys)) = pack::pixel_range(&tri, 0.0, n, n) else { continue };
        for y in ys[0]..=ys[1] {
            for x in xs[0]..=xs[1] {
                if !pack::covers(&tri, [x as f64, y as f64]) {
                    continue;
                }
                let p = atlas.pixel_index(x, y);
                if first[p] == NO_CHART {
                    first[p] = c;
                } else {
                    overlaps += 1;
                    diag.overlapping.insert(first[p] as usize);
                    diag.overlapping.insert(c as usize);
                }
            }
        }
    }
    if overlaps > 0 {
        diag.problems
            .push(format!("injectivity violated: {overlaps} pixel centres covered more than once"));
    }

    let bounds = atlas.chart_bounds();
    let mut close = 0;
    for a in 0..bounds.len() {
        for b in 0..a {
            let gap = |k: usize| (bounds[b].0[k] - bounds[a].1[k]).max(bounds[a].0[k] - bounds[b].1[k]);
            if gap(0).max(gap(1)) < MIN_GUTTER - 1e-9 {
                close += 1;
            }
        }
    }
    if close > 0 {
        diag.problems
            .push(format!("{close} chart pairs are closer than {MIN_GUTTER} pixels"));
    }

    atlas.distortion_outliers = atlas
        .distortion_ratios(mesh)
        .iter()
        .filter(|&&r| r > MAX_DISTORTION)
        .count();
    Ok((atlas, diag))
}

/// Builds an atlas with the default parameterizer options.
pub fn generate_atlas(mesh: &TriangleMesh, resolution: usize) -> Result<UVAtlas> {
    generate_atlas_with(mesh, resolution, &AtlasOptions::default())
}

/// Segments, flattens and packs charts; charts whose triangles overlap in
/// the raster are split and the atlas is re-packed.
pub fn generate_atlas_with(mesh: &TriangleMesh, resolution: usize, opts: &AtlasOptions) -> Result<UVAtlas> {
    let problems = mesh.validate();
    if !problems.is_empty() {
        return Err(Error::InvalidData(problems.join("; ")));
    }
    if mesh.num_faces() == 0 {
        return Err(Error::Degenerate("mesh has no faces".into()));
    }
    if resolution < 8 {
        return Err(Error::Parameter(format!("atlas resolution {resolution} is below 8")));
    }
    if !(opts.cone_angle_deg > 0.0 && opts.cone_angle_deg < 180.0) || opts.gutter < 4 {
        return Err(Error::Parameter(
            "cone angle must lie in (0, 180) degrees and gutter must be at least 4 pixels".into(),
        ));
    }
    let adjacency = chart::face_adjacency(mesh);
    let cone_cos = opts.cone_angle_deg.to_radians().cos();
    let mut flat = Vec::new();
    let charts = chart::absorb_small(chart::segment(mesh, &adjacency, cone_cos), &adjacency, opts.min_chart_faces);
    for faces in charts {
        chart::flatten_or_split(mesh, &adjacency, &faces, &mut flat)?;
    }
    for _ in 0..=opts.refinement_rounds {
        flat.sort_by_key(|c| c.faces.iter().copied().min());
        let packed = pack::pack_charts(&flat, resolution, opts.gutter)?;
        let r = resolution as f64;
        let mut corner_uv = vec![[[0.0; 2]; 3]; mesh.num_faces()];
        let mut chart_id = vec![0; mesh.num_faces()];
        for (c, (chart, corners)) in flat.iter().zip(&packed).enumerate() {
            for (&f, px) in chart.faces.iter().zip(corners) {
                corner_uv[f] = px.map(|p| [(p[0] + 0.5) / r, (p[1] + 0.5) / r]);
                chart_id[f] = c;
            }
        }
        let (atlas, diag) = assemble(mesh, corner_uv, chart_id, resolution)?;
        if diag.overlapping.is_empty() {
            if !diag.problems.is_empty() {
                return Err(Error::AtlasQuality(diag.problems.join("; ")));
            }
            return Ok(atlas);
        }
        let mut next = Vec::new();
        for (c, chart) in flat.into_iter().enumerate() {
            if !diag.overlapping.contains(&c) {
                next.push(chart);
                continue;
            }
            if chart.faces.len() == 1 {
                return Err(Error::AtlasQuality(format!(
                    "single-face chart of face {} overlaps another chart",
                    chart.faces[0]
                )));
            }
            let (a, b) = chart::split(mesh, &adjacency, &chart.faces);
            chart::flatten_or_split(mesh, &adjacency, &a, &mut next)?;
            chart::flatten_or_split(mesh, &adjacency, &b, &mut next)?;
        }
        flat = next;
    }
    Err(Error::AtlasQuality(format!(
        "charts still overlap after {} refinement rounds",
        opts.refinement_rounds
    )))
}

/// Point values at sub-pixel UV sites.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseUVSamples {
    pub resolution: usize,
    /// `[row, col]` per sample.
    pub sites: Vec<[f64; 2]>,
    pub values: Vec<[f64; 3]>,
    pub kind: ChannelKind,
    /// Input points rejected by the valid-site test.
    pub dropped: usize,
}

impl SparseUVSamples {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}

/// Projects every cloud point onto `mesh` and records its value at the UV
/// site of the projection. Sites whose bilinear stencil leaves a chart's
/// valid pixels are dropped.
pub fn splat_points_to_uv(
    mesh: &TriangleMesh,
    atlas: &UVAtlas,
    cloud: &PointCloud,
    kind: ChannelKind,
) -> Result<SparseUVSamples> {
    if atlas.corner_uv.len() != mesh.num_faces() {
        return Err(Error::Parameter("atlas was not built from this mesh".into()));
    }
    if cloud.is_empty() {
        return Err(Error::InvalidData("point cloud is empty".into()));
    }
    let colors = match kind {
        ChannelKind::Rgb => Some(
            cloud
                .colors
                .as_ref()
                .ok_or_else(|| Error::InvalidData("point cloud has no colors".into()))?,
        ),
        ChannelKind::Xyz => None,
    };
    let projector = MeshProjector::new(mesh);
    let mut out = SparseUVSamples {
        resolution: atlas.resolution,
        sites: Vec::new(),
        values: Vec::new(),
        kind,
        dropped: 0,
    };
    for (i, &q) in cloud.positions.iter().enumerate() {
        let (sp, _) = projector.project(q);
        let c = atlas.corner_uv[sp.face_id];
        let w = sp.barycentric;
        let uv = [0, 1].map(|k| w[0] * c[0][k] + w[1] * c[1][k] + w[2] * c[2][k]);
        let site = atlas.uv_to_site(uv);
        if atlas.site_chart(site).is_none() {
            out.dropped += 1;
            continue;
        }
        out.sites.push(site);
        out.values.push(match colors {
            Some(col) => col[i],
            None => q,
        });
    }
    if 2 * out.dropped > cloud.len() {
        return Err(Error::AtlasQuality(format!(
            "{} of {} points fell outside the valid atlas region",
            out.dropped,
            cloud.len()
        )));
    }
    Ok(out)
}

/// Dense `H x W x 3` map over the atlas raster.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseUVMap {
    pub height: usize,
    pub width: usize,
    /// Row-major pixel values.
    pub values: Vec<[f64; 3]>,
    pub kind: ChannelKind,
}

impl DenseUVMap {
    pub fn filled(height: usize, width: usize, value: [f64; 3], kind: ChannelKind) -> Self {
        DenseUVMap {
            height,
            width,
            values: vec![value; height * width],
            kind,
        }
    }

    pub fn get(&self, row: usize, col: usize) -> [f64; 3] {
        self.values[row * self.width + col]
    }

    /// Bilinear value at `site`, `None` outside the grid.
    pub fn sample(&self, site: [f64; 2]) -> Option<[f64; 3]> {
        let fp = bilinear_footprint(site, self.height, self.width)?;
        let mut out = [0.0; 3];
        for (&p, &w) in fp.pixels.iter().zip(&fp.weights) {
            for k in 0..3 {
                out[k] += w * self.values[p][k];
            }
        }
        Some(out)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().flatten().all(|v| v.is_finite())
    }

    /// Flattened `H x W x 3` values.
    pub fn to_flat(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }

    pub fn from_flat(height: usize, width: usize, data: &[f64], kind: ChannelKind) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(Error::InvalidData(format!(
                "{} values do not form a {height}x{width}x3 map",
                data.len()
            )));
        }
        Ok(DenseUVMap {
            height,
            width,
            values: data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
            kind,
        })
    }
}

/// Mesh with vertices read back from a dense map.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexUpdate {
    pub mesh: TriangleMesh,
    /// Vertices with no valid chart entry, left in place.
    pub fallback: usize,
}

/// Moves each vertex to the bilinear map value at its UV, averaging over
/// the vertex's chart entries whose stencil is valid.
pub fn update_vertices_from_map(mesh: &TriangleMesh, atlas: &UVAtlas, map: &DenseUVMap) -> Result<VertexUpdate> {
    if map.kind != ChannelKind::Xyz {
        return Err(Error::Parameter("vertex update needs an XYZ map".into()));
    }
    if map.height != atlas.resolution || map.width != atlas.resolution {
        return Err(Error::Parameter("map and atlas resolutions differ".into()));
    }
    if atlas.vertex_uv.len() != mesh.num_vertices() {
        return Err(Error::Parameter("atlas was not built from this mesh".into()));
    }
    let mut out = mesh.clone();
    let mut fallback = 0;
    for (v, entries) in atlas.vertex_uv.iter().enumerate() {
        let mut sum = [0.0; 3];
        let mut count = 0usize;
        for &(_, uv) in entries {
            let site = atlas.uv_to_site(uv);
            if atlas.site_chart(site).is_none() {
                continue;
            }
            let value = map.sample(site).expect("valid sites lie inside the grid");
            sum = geom::add(sum, value);
            count += 1;
        }
        if count == 0 {
            fallback += 1;
            continue;
        }
        let p = geom::scale(sum, 1.0 / count as f64);
        if !p.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidData(format!("map value at vertex {v} is not finite")));
        }
        out.vertices[v] = p;
    }
    Ok(VertexUpdate { mesh: out, fallback })
}

/// Dense map whose valid pixels hold the per-vertex `values` interpolated
/// at the closest point of the nearest triangle of the pixel's chart.
/// Invalid pixels are zero.
pub fn rasterize_vertex_values(
    mesh: &TriangleMesh,
    atlas: &UVAtlas,
    values: &[[f64; 3]],
    kind: ChannelKind,
) -> DenseUVMap {
    let n = atlas.resolution;
    let mut map = DenseUVMap::filled(n, n, [0.0; 3], kind);
    let mut best = vec![f64::INFINITY; n * n];
    for (f, face) in mesh.faces.iter().enumerate() {
        let tri = atlas.face_pixels(f);
        let chart = atlas.chart_id[f] as u32;
        let Some((xs, ys)) = pack::pixel_range(&tri, 1.0, n, n) else { continue };
        for y in ys[0]..=ys[1] {
            for x in xs[0]..=xs[1] {
                let p = atlas.pixel_index(x, y);
                if !atlas.valid_mask[p] || atlas.pixel_chart[p] != chart {
                    continue;
                }
                let c = [x as f64, y as f64];
                let w = pack::closest_barycentric(&tri, c);
                let q = [0, 1].map(|k| w[0] * tri[0][k] + w[1] * tri[1][k] + w[2] * tri[2][k]);
                let d = (q[0] - c[0]).powi(2) + (q[1] - c[1]).powi(2);
                if d < best[p] {
                    best[p] = d;
                    map.values[p] = geom::lerp3(values[face[0]], values[face[1]], values[face[2]], w);
                }
            }
        }
    }
    map
}

/// XYZ map rasterized from the mesh's own vertex positions.
pub fn rasterize_positions(mesh: &TriangleMesh, atlas: &UVAtlas) -> DenseUVMap {
    rasterize_vertex_values(mesh, atlas, &mesh.vertices, ChannelKind::Xyz)
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Fills every invalid pixel with the color of a nearest valid pixel
/// (multi-source breadth-first search, 4-connected).
fn dilate(img: &mut RgbImage, valid: &[bool]) {
    let (w, h) = (img.width, img.height);
    let mut done = valid.to_vec();
    let mut queue: VecDeque<usize> = (0..w * h).filter(|&p| valid[p]).collect();
    while let Some(p) = queue.pop_front() {
        let (y, x) = (p / w, p % w);
        let rgb = img.get(y, x);
        let mut visit = |q: usize| {
            if !done[q] {
                done[q] = true;
                img.put(q / w, q % w, rgb);
                queue.push_back(q);
            }
        };
        if x > 0 {
            visit(p - 1);
        }
        if x + 1 < w {
            visit(p + 1);
        }
        if y > 0 {
            visit(p - w);
        }
        if y + 1 < h {
            visit(p + w);
        }
    }
}

/// 8-bit texture from an RGB map: valid pixels are clamped and rounded,
/// the rest are filled by dilation.
pub fn bake_texture(atlas: &UVAtlas, map: &DenseUVMap) -> Result<RgbImage> {
    if map.kind != ChannelKind::Rgb {
        return Err(Error::Parameter("texture baking needs an RGB map".into()));
    }
    if map.height != atlas.resolution || map.width != atlas.resolution {
        return Err(Error::Parameter("map and atlas resolutions differ".into()));
    }
    let mut img = RgbImage::new(map.width, map.height);
    for (p, v) in map.values.iter().enumerate() {
        if atlas.valid_mask[p] {
            img.put(p / map.width, p % map.width, v.map(quantize));
        }
    }
    dilate(&mut img, &atlas.valid_mask);
    Ok(img)
}

/// Per-channel affine map of `values` onto `[0, 1]`.
fn normalizer(values: impl Iterator<Item = [f64; 3]>) -> impl Fn([f64; 3]) -> [f64; 3] {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for v in values {
        for k in 0..3 {
            lo[k] = lo[k].min(v[k]);
            hi[k] = hi[k].max(v[k]);
        }
    }
    move |v: [f64; 3]| {
        [0, 1, 2].map(|k| {
            let span = hi[k] - lo[k];
            if span > 0.0 {
                (v[k] - lo[k]) / span
            } else {
                0.5
            }
        })
    }
}

/// Debug view of sparse samples: each site drawn as its 2x2 pixel stencil
/// on black. XYZ values are normalized per channel.
pub fn sparse_samples_image(samples: &SparseUVSamples) -> RgbImage {
    let n = samples.resolution;
    let mut img = RgbImage::new(n, n);
    let norm = normalizer(samples.values.iter().copied());
    for (site, v) in samples.sites.iter().zip(&samples.values) {
        let rgb = match samples.kind {
            ChannelKind::Rgb => v.map(quantize),
            ChannelKind::Xyz => norm(*v).map(quantize),
        };
        if let Some(fp) = bilinear_footprint(*site, n, n) {
            for p in fp.pixels {
                img.put(p / n, p % n, rgb);
            }
        }
    }
    img
}

/// Debug view of a dense map; XYZ maps are normalized over valid pixels
/// and invalid pixels are black.
pub fn dense_map_image(atlas: &UVAtlas, map: &DenseUVMap) -> RgbImage {
    let mut img = RgbImage::new(map.width, map.height);
    let norm = normalizer(
        map.values
            .iter()
            .zip(&atlas.valid_mask)
            .filter(|(_, &ok)| ok)
            .map(|(v, _)| *v),
    );
    for (p, v) in map.values.iter().enumerate() {
        if atlas.valid_mask.get(p) == Some(&true) {
            let rgb = match map.kind {
                ChannelKind::Rgb => v.map(quantize),
                ChannelKind::Xyz => norm(*v).map(quantize),
            };
            img.put(p / map.width, p % map.width, rgb);
        }
    }
    img
}
