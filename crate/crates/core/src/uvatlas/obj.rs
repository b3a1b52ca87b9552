//! Atlas exchange through OBJ `vt` records.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::UVAtlas;
use crate::error::{Error, Result};
use crate::io;
use crate::mesh::TriangleMesh;

/// OBJ text of `mesh` with one `vt` per (vertex, chart) entry. With a
/// material, `mtllib` and `usemtl` lines are added.
pub fn atlas_obj_string(mesh: &TriangleMesh, atlas: &UVAtlas, material: Option<(&str, &str)>) -> String {
    let mut s = String::new();
    if let Some((lib, name)) = material {
        let _ = writeln!(s, "mtllib {lib}");
        let _ = writeln!(s, "usemtl {name}");
    }
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", v[0], v[1], v[2]);
    }
    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    for (v, entries) in atlas.vertex_uv.iter().enumerate() {
        for &(chart, uv) in entries {
            index.insert((v, chart), index.len());
            let _ = writeln!(s, "vt {} {}", uv[0], uv[1]);
        }
    }
    for (f, face) in mesh.faces.iter().enumerate() {
        let c = atlas.chart_id[f];
        let t = face.map(|v| index[&(v, c)] + 1);
        let _ = writeln!(
            s,
            "f {}/{} {}/{} {}/{}",
            face[0] + 1,
            t[0],
            face[1] + 1,
            t[1],
            face[2] + 1,
            t[2]
        );
    }
    s
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Reads a mesh and its atlas from OBJ text. Charts are the components of
/// faces joined across edges whose endpoint UVs agree. Every violated
/// atlas invariant is reported in one validation error.
pub fn import_atlas(text: &str, source: &str, resolution: usize) -> Result<(TriangleMesh, UVAtlas)> {
    let obj = io::parse_obj(text, source)?;
    let mut problems = Vec::new();
    let mut corner_uv = Vec::with_capacity(obj.faces.len());
    for (f, t) in obj.face_texcoords.iter().enumerate() {
        match t {
            Some(t) => corner_uv.push(t.map(|i| obj.texcoords[i])),
            None => {
                problems.push(format!("face {f} has no texture coordinates"));
                corner_uv.push([[0.0; 2]; 3]);
            }
        }
    }
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    let mesh = obj.to_mesh()?;

    let mut parent: Vec<usize> = (0..mesh.num_faces()).collect();
    let mut by_edge: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (f, face) in mesh.faces.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (face[k], face[(k + 1) % 3]);
            by_edge.entry((a.min(b), a.max(b))).or_default().push(f);
        }
    }
    let uv_of = |f: usize, v: usize| {
        let k = mesh.faces[f].iter().position(|&x| x == v).unwrap();
        corner_uv[f][k]
    };
    let same = |p: [f64; 2], q: [f64; 2]| (p[0] - q[0]).abs() <= 1e-9 && (p[1] - q[1]).abs() <= 1e-9;
    let mut edges: Vec<_> = by_edge.into_iter().collect();
    edges.sort_unstable_by_key(|e| e.0);
    for ((a, b), faces) in edges {
        for i in 0..faces.len() {
            for j in 0..i {
                let (f, g) = (faces[i], faces[j]);
                if same(uv_of(f, a), uv_of(g, a)) && same(uv_of(f, b), uv_of(g, b)) {
                    let (rf, rg) = (find(&mut parent, f), find(&mut parent, g));
                    parent[rf.max(rg)] = rf.min(rg);
                }
            }
        }
    }
    // number components by their lowest face
    let mut label: HashMap<usize, usize> = HashMap::new();
    let chart_id: Vec<usize> = (0..mesh.num_faces())
        .map(|f| {
            let r = find(&mut parent, f);
            let next = label.len();
            *label.entry(r).or_insert(next)
        })
        .collect();
    let (atlas, problems) = UVAtlas::from_corner_uvs(&mesh, corner_uv, chart_id, resolution)?;
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    Ok((mesh, atlas))
}

pub fn read_atlas(path: &Path, resolution: usize) -> Result<(TriangleMesh, UVAtlas)> {
    import_atlas(&io::read_text(path)?, &path.display().to_string(), resolution)
}
