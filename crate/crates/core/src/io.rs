//! File formats: PLY point clouds and meshes, OBJ/MTL meshes with texture
//! coordinates, PNG images and `.npy` float grids. All writers go through a
//! temporary file and a rename so readers never see partial files.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::mesh::{PointCloud, TriangleMesh};

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &str, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        msg: msg.into(),
    }
}

// ---------------------------------------------------------------- OBJ

/// Triangulated contents of an OBJ file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObjData {
    pub vertices: Vec<Vec3>,
    pub texcoords: Vec<[f64; 2]>,
    pub faces: Vec<[usize; 3]>,
    /// Texture-coordinate indices per face, when every corner has one.
    pub face_texcoords: Vec<Option<[usize; 3]>>,
    pub material_libs: Vec<String>,
}

impl ObjData {
    pub fn to_mesh(&self) -> Result<TriangleMesh> {
        TriangleMesh::new(self.vertices.clone(), self.faces.clone())
    }
}

/// Parses `v`, `vt` and `f` records; polygons are fan-triangulated and
/// negative (relative) indices are resolved. `source` names the input in
/// error messages.
pub fn parse_obj(text: &str, source: &str) -> Result<ObjData> {
    let mut obj = ObjData::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tok = line.split_whitespace();
        let Some(tag) = tok.next() else { continue };
        let at = |msg: String| parse_err(source, format!("line {}: {msg}", lineno + 1));
        let floats = |tok: std::str::SplitWhitespace<'_>, n: usize| -> Result<Vec<f64>> {
            let vals: Vec<f64> = tok
                .take(n)
                .map(|t| t.parse::<f64>().map_err(|_| at(format!("bad number `{t}`"))))
                .collect::<Result<_>>()?;
            if vals.len() < n {
                return Err(at(format!("expected {n} numbers")));
            }
            Ok(vals)
        };
        match tag {
            "v" => {
                let v = floats(tok, 3)?;
                obj.vertices.push([v[0], v[1], v[2]]);
            }
            "vt" => {
                let v = floats(tok, 2)?;
                obj.texcoords.push([v[0], v[1]]);
            }
            "f" => {
                let mut corners = Vec::new();
                for t in tok {
                    let mut parts = t.split('/');
                    let v = resolve_index(parts.next().unwrap_or(""), obj.vertices.len())
                        .ok_or_else(|| at(format!("bad vertex index `{t}`")))?;
                    let vt = match parts.next() {
                        Some(s) if !s.is_empty() => Some(
                            resolve_index(s, obj.texcoords.len())
                                .ok_or_else(|| at(format!("bad texture index `{t}`")))?,
                        ),
                        _ => None,
                    };
                    corners.push((v, vt));
                }
                if corners.len() < 3 {
                    return Err(at("face with fewer than 3 corners".into()));
                }
                for k in 1..corners.len() - 1 {
                    let tri = [corners[0], corners[k], corners[k + 1]];
                    obj.faces.push(tri.map(|c| c.0));
                    obj.face_texcoords.push(match tri.map(|c| c.1) {
                        [Some(a), Some(b), Some(c)] => Some([a, b, c]),
                        _ => None,
                    });
                }
            }
            "mtllib" => obj.material_libs.extend(tok.map(str::to_string)),
            _ => {}
        }
    }
    Ok(obj)
}

fn resolve_index(s: &str, count: usize) -> Option<usize> {
    let i: i64 = s.parse().ok()?;
    let idx = if i > 0 { i - 1 } else { count as i64 + i };
    (idx >= 0 && (idx as usize) < count).then_some(idx as usize)
}

pub fn read_obj(path: &Path) -> Result<ObjData> {
    parse_obj(&read_text(path)?, &path.display().to_string())
}

/// `v` and `f` records of a mesh.
pub fn obj_string(mesh: &TriangleMesh) -> String {
    let mut s = String::with_capacity(mesh.num_vertices() * 40 + mesh.num_faces() * 20);
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", v[0], v[1], v[2]);
    }
    for f in &mesh.faces {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

pub fn write_obj(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    write_atomic(path, obj_string(mesh).as_bytes())
}

/// Material file with a single diffuse texture.
pub fn mtl_string(material: &str, texture_file: &str) -> String {
    format!(
        "newmtl {material}\nKa 1 1 1\nKd 1 1 1\nKs 0 0 0\nd 1\nillum 1\nmap_Kd {texture_file}\n"
    )
}

// ---------------------------------------------------------------- PLY

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Ascii,
    Little,
    Big,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Scalar> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, Scalar::F32 | Scalar::F64)
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// Contents of a PLY file: vertices with optional colors in `[0, 1]` and
/// optional triangle faces.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlyData {
    pub positions: Vec<Vec3>,
    pub colors: Option<Vec<[f64; 3]>>,
    pub faces: Vec<[usize; 3]>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    enc: Encoding,
    tokens: std::vec::IntoIter<&'a str>,
}

impl<'a> Cursor<'a> {
    fn read(&mut self, t: Scalar) -> Option<f64> {
        if self.enc == Encoding::Ascii {
            return self.tokens.next()?.parse().ok();
        }
        let n = t.size();
        let raw = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        let mut buf = [0u8; 8];
        buf[..n].copy_from_slice(raw);
        if self.enc == Encoding::Big {
            buf[..n].reverse();
        }
        Some(match t {
            Scalar::I8 => buf[0] as i8 as f64,
            Scalar::U8 => buf[0] as f64,
            Scalar::I16 => i16::from_le_bytes([buf[0], buf[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([buf[0], buf[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(buf),
        })
    }
}

/// Parses ASCII and binary PLY. 8-bit integer colors are scaled to
/// `[0, 1]`; float colors pass through.
pub fn parse_ply(bytes: &[u8], source: &str) -> Result<PlyData> {
    let err = |m: &str| parse_err(source, m);
    let header_end = find_subslice(bytes, b"end_header")
        .ok_or_else(|| err("missing end_header"))?;
    let mut body = header_end + b"end_header".len();
    if bytes.get(body) == Some(&b'\r') {
        body += 1;
    }
    if bytes.get(body) == Some(&b'\n') {
        body += 1;
    }
    let header = std::str::from_utf8(&bytes[..header_end]).map_err(|_| err("header is not UTF-8"))?;
    let mut lines = header.lines().map(str::trim);
    if lines.next() != Some("ply") {
        return Err(err("missing `ply` magic"));
    }
    let mut enc = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let t: Vec<&str> = line.split_whitespace().collect();
        match t.as_slice() {
            ["format", f, _] => {
                enc = Some(match *f {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::Little,
                    "binary_big_endian" => Encoding::Big,
                    other => return Err(err(&format!("unknown format `{other}`"))),
                })
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| err("bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", ct, it, name] => {
                let (ct, it) = (Scalar::parse(ct), Scalar::parse(it));
                let el = elements.last_mut().ok_or_else(|| err("property before element"))?;
                match (ct, it) {
                    (Some(c), Some(i)) => el.props.push(Property::List(name.to_string(), c, i)),
                    _ => return Err(err("bad list property type")),
                }
            }
            ["property", ty, name] => {
                let ty = Scalar::parse(ty).ok_or_else(|| err(&format!("unknown type `{ty}`")))?;
                let el = elements.last_mut().ok_or_else(|| err("property before element"))?;
                el.props.push(Property::Scalar(name.to_string(), ty));
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            _ => return Err(err(&format!("unrecognised header line `{line}`"))),
        }
    }
    let enc = enc.ok_or_else(|| err("missing format line"))?;
    let tokens: Vec<&str> = if enc == Encoding::Ascii {
        std::str::from_utf8(&bytes[body..])
            .map_err(|_| err("ASCII body is not UTF-8"))?
            .split_whitespace()
            .collect()
    } else {
        Vec::new()
    };
    let mut cur = Cursor {
        bytes,
        pos: body,
        enc,
        tokens: tokens.into_iter(),
    };
    let truncated = || err("file is truncated");

    let mut out = PlyData::default();
    for el in &elements {
        let is_vertex = el.name == "vertex";
        let is_face = el.name == "face";
        let prop_index = |n: &str| {
            el.props
                .iter()
                .position(|p| matches!(p, Property::Scalar(name, _) if name == n))
        };
        let xyz = [prop_index("x"), prop_index("y"), prop_index("z")];
        let rgb = [
            prop_index("red").or(prop_index("r")),
            prop_index("green").or(prop_index("g")),
            prop_index("blue").or(prop_index("b")),
        ];
        if is_vertex && xyz.iter().any(Option::is_none) {
            return Err(err("vertex element lacks x, y or z"));
        }
        let has_color = is_vertex && rgb.iter().all(Option::is_some);
        let mut colors = Vec::new();
        for _ in 0..el.count {
            let mut scalars = vec![0.0; el.props.len()];
            let mut list: Vec<usize> = Vec::new();
            for (pi, p) in el.props.iter().enumerate() {
                match p {
                    Property::Scalar(_, t) => scalars[pi] = cur.read(*t).ok_or_else(truncated)?,
                    Property::List(name, ct, it) => {
                        let n = cur.read(*ct).ok_or_else(truncated)? as usize;
                        let mut vals = Vec::with_capacity(n);
                        for _ in 0..n {
                            vals.push(cur.read(*it).ok_or_else(truncated)?);
                        }
                        if is_face && (name == "vertex_indices" || name == "vertex_index") {
                            list = vals.iter().map(|&v| v as usize).collect();
                        }
                    }
                }
            }
            if is_vertex {
                out.positions.push(xyz.map(|i| scalars[i.unwrap()]));
                if has_color {
                    colors.push(rgb.map(|i| {
                        let i = i.unwrap();
                        let integer = matches!(el.props[i], Property::Scalar(_, t) if t.is_integer());
                        if integer {
                            scalars[i] / 255.0
                        } else {
                            scalars[i]
                        }
                    }));
                }
            }
            if is_face {
                if list.len() < 3 {
                    return Err(err("face with fewer than 3 vertices"));
                }
                for k in 1..list.len() - 1 {
                    out.faces.push([list[0], list[k], list[k + 1]]);
                }
            }
        }
        if has_color {
            out.colors = Some(colors);
        }
    }
    Ok(out)
}

fn find_subslice(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}

pub fn read_ply(path: &Path) -> Result<PlyData> {
    parse_ply(&read_bytes(path)?, &path.display().to_string())
}

/// PLY with double-precision positions and 8-bit colors.
pub fn ply_bytes(positions: &[Vec3], colors: Option<&[[f64; 3]]>, faces: &[[usize; 3]], format: PlyFormat) -> Vec<u8> {
    let mut header = String::from("ply\n");
    header += match format {
        PlyFormat::Ascii => "format ascii 1.0\n",
        PlyFormat::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    };
    let _ = writeln!(header, "element vertex {}", positions.len());
    header += "property double x\nproperty double y\nproperty double z\n";
    if colors.is_some() {
        header += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    }
    if !faces.is_empty() {
        let _ = writeln!(header, "element face {}", faces.len());
        header += "property list uchar int vertex_indices\n";
    }
    header += "end_header\n";
    let mut out = header.into_bytes();
    let quant = |c: f64| (c.clamp(0.0, 1.0) * 255.0).round() as u8;
    for (i, p) in positions.iter().enumerate() {
        let rgb = colors.map(|c| c[i].map(quant));
        match format {
            PlyFormat::Ascii => {
                let mut line = format!("{} {} {}", p[0], p[1], p[2]);
                if let Some([r, g, b]) = rgb {
                    let _ = write!(line, " {r} {g} {b}");
                }
                line.push('\n');
                out.extend_from_slice(line.as_bytes());
            }
            PlyFormat::BinaryLittleEndian => {
                for c in p {
                    out.extend_from_slice(&c.to_le_bytes());
                }
                if let Some(rgb) = rgb {
                    out.extend_from_slice(&rgb);
                }
            }
        }
    }
    for f in faces {
        match format {
            PlyFormat::Ascii => out.extend_from_slice(format!("3 {} {} {}\n", f[0], f[1], f[2]).as_bytes()),
            PlyFormat::BinaryLittleEndian => {
                out.push(3);
                for &v in f {
                    out.extend_from_slice(&(v as i32).to_le_bytes());
                }
            }
        }
    }
    out
}

pub fn write_point_cloud(path: &Path, cloud: &PointCloud, format: PlyFormat) -> Result<()> {
    write_atomic(path, &ply_bytes(&cloud.positions, cloud.colors.as_deref(), &[], format))
}

pub fn read_point_cloud(path: &Path) -> Result<PointCloud> {
    let ply = read_ply(path)?;
    PointCloud::new(ply.positions, ply.colors)
}

/// Reads a triangle mesh from `.obj` or `.ply`.
pub fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    match extension(path).as_str() {
        "obj" => read_obj(path)?.to_mesh(),
        "ply" => {
            let ply = read_ply(path)?;
            if ply.faces.is_empty() {
                return Err(parse_err(&path.display().to_string(), "PLY has no faces"));
            }
            TriangleMesh::new(ply.positions, ply.faces)
        }
        other => Err(parse_err(
            &path.display().to_string(),
            format!("unsupported mesh extension `{other}`"),
        )),
    }
}

pub fn write_mesh(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    match extension(path).as_str() {
        "ply" => write_atomic(path, &ply_bytes(&mesh.vertices, None, &mesh.faces, PlyFormat::BinaryLittleEndian)),
        _ => write_obj(path, mesh),
    }
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

// ---------------------------------------------------------------- images

/// 8-bit RGB image, row-major with row 0 at the top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        RgbImage {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> [u8; 3] {
        let i = 3 * (row * self.width + col);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn put(&mut self, row: usize, col: usize, rgb: [u8; 3]) {
        let i = 3 * (row * self.width + col);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

pub fn png_bytes(img: &RgbImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc
            .write_header()
            .map_err(|e| Error::InvalidData(format!("PNG encode: {e}")))?;
        w.write_image_data(&img.data)
            .map_err(|e| Error::InvalidData(format!("PNG encode: {e}")))?;
    }
    Ok(out)
}

pub fn write_png(path: &Path, img: &RgbImage) -> Result<()> {
    write_atomic(path, &png_bytes(img)?)
}

/// Decodes 8-bit gray, gray-alpha, RGB or RGBA PNG into RGB.
pub fn decode_png(bytes: &[u8], source: &str) -> Result<RgbImage> {
    let err = |m: String| parse_err(source, m);
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| err(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| err("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| err(e.to_string()))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(err(format!("unsupported bit depth {:?}", info.bit_depth)));
    }
    let channels = info.color_type.samples();
    let (w, h) = (info.width as usize, info.height as usize);
    let mut img = RgbImage::new(w, h);
    for p in 0..w * h {
        let px = &buf[p * channels..(p + 1) * channels];
        let rgb = match channels {
            1 | 2 => [px[0]; 3],
            _ => [px[0], px[1], px[2]],
        };
        img.data[3 * p..3 * p + 3].copy_from_slice(&rgb);
    }
    Ok(img)
}

pub fn read_png(path: &Path) -> Result<RgbImage> {
    decode_png(&read_bytes(path)?, &path.display().to_string())
}

// ---------------------------------------------------------------- npy

/// Little-endian `f64` array in NumPy `.npy` version 1.0 layout.
pub fn npy_bytes(shape: &[usize], data: &[f64]) -> Result<Vec<u8>> {
    if shape.iter().product::<usize>() != data.len() {
        return Err(Error::Parameter(format!("shape {shape:?} does not match {} values", data.len())));
    }
    let dims: String = shape.iter().map(|d| format!("{d}, ")).collect();
    let dims = if shape.len() == 1 { dims } else { dims.trim_end_matches(", ").to_string() };
    let mut header = format!("{{'descr': '<f8', 'fortran_order': False, 'shape': ({dims}), }}");
    // magic + version + u16 length + header + newline is a multiple of 64
    let unpadded = 10 + header.len() + 1;
    header.push_str(&" ".repeat((64 - unpadded % 64) % 64));
    header.push('\n');
    let mut out = Vec::with_capacity(10 + header.len() + data.len() * 8);
    out.extend_from_slice(b"\x93NUMPY\x01\x00");
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn write_npy(path: &Path, shape: &[usize], data: &[f64]) -> Result<()> {
    write_atomic(path, &npy_bytes(shape, data)?)
}

/// Reads arrays written by [`npy_bytes`].
pub fn parse_npy(bytes: &[u8], source: &str) -> Result<(Vec<usize>, Vec<f64>)> {
    let err = |m: &str| parse_err(source, m);
    if bytes.len() < 10 || &bytes[..8] != b"\x93NUMPY\x01\x00" {
        return Err(err("not a version 1.0 .npy file"));
    }
    let hlen = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let header = std::str::from_utf8(bytes.get(10..10 + hlen).ok_or_else(|| err("truncated header"))?)
        .map_err(|_| err("header is not UTF-8"))?;
    if !header.contains("'<f8'") || header.contains("'fortran_order': True") {
        return Err(err("only C-ordered little-endian f8 arrays are supported"));
    }
    let open = header.find("'shape': (").ok_or_else(|| err("missing shape"))? + "'shape': (".len();
    let close = open + header[open..].find(')').ok_or_else(|| err("bad shape"))?;
    let shape: Vec<usize> = header[open..close]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| err("bad shape entry")))
        .collect::<Result<_>>()?;
    let n: usize = shape.iter().product();
    let body = &bytes[10 + hlen..];
    if body.len() != n * 8 {
        return Err(err("data length does not match shape"));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((shape, data))
}

pub fn read_npy(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    parse_npy(&read_bytes(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obj_polygons_and_negative_indices() {
        let text = "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\nf -4/1 -3/2 -2/3 -1/4\n";
        let obj = parse_obj(text, "quad").unwrap();
        assert_eq!(obj.faces, vec![[0, 1, 2], [0, 2, 3]]);
        assert_eq!(obj.face_texcoords, vec![Some([0, 1, 2]), Some([0, 2, 3])]);
        assert!(parse_obj("f 1 2 3\n", "bad").is_err());
        assert!(matches!(parse_obj("v 1 x 2\n", "bad"), Err(Error::Parse { .. })));
    }

    #[test]
    fn ply_round_trips_both_formats() {
        let pos = vec![[0.1, -2.5, 3.25], [1e-7, 5.0, -0.333333333333], [7.0, 8.0, 9.0]];
        let col = vec![[0.0, 0.5, 1.0], [0.2, 0.4, 0.6], [1.0, 1.0, 1.0]];
        for fmt in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
            let bytes = ply_bytes(&pos, Some(&col), &[[0, 1, 2]], fmt);
            let ply = parse_ply(&bytes, "mem").unwrap();
            for (a, b) in ply.positions.iter().zip(&pos) {
                for k in 0..3 {
                    assert!((a[k] - b[k]).abs() < 1e-6);
                }
            }
            for (a, b) in ply.colors.as_ref().unwrap().iter().zip(&col) {
                for k in 0..3 {
                    assert!((a[k] - b[k]).abs() <= 1.0 / 255.0);
                }
            }
            assert_eq!(ply.faces, vec![[0, 1, 2]]);
        }
    }

    #[test]
    fn ply_float_colors_pass_through_and_big_endian() {
        let mut bytes = b"ply\nformat binary_big_endian 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nproperty float red\nproperty float green\nproperty float blue\nend_header\n".to_vec();
        for v in [1.0f32, 2.0, 3.0, 0.25, 0.5, 0.75] {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        let ply = parse_ply(&bytes, "be").unwrap();
        assert_eq!(ply.positions, vec![[1.0, 2.0, 3.0]]);
        assert_eq!(ply.colors, Some(vec![[0.25, 0.5, 0.75]]));
        assert!(parse_ply(&bytes[..bytes.len() - 2], "short").is_err());
    }

    #[test]
    fn png_and_npy_round_trip() {
        let mut img = RgbImage::new(3, 2);
        img.put(1, 2, [10, 20, 30]);
        assert_eq!(decode_png(&png_bytes(&img).unwrap(), "mem").unwrap(), img);
        let data: Vec<f64> = (0..12).map(|i| i as f64 * 0.5 - 1.0).collect();
        let bytes = npy_bytes(&[2, 2, 3], &data).unwrap();
        assert_eq!((bytes.len() - 12 * 8) % 64, 0);
        assert_eq!(parse_npy(&bytes, "mem").unwrap(), (vec![2, 2, 3], data));
    }

    #[test]
    fn atomic_write_creates_dirs() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b/c.txt");
        write_atomic(&p, b"hello").unwrap();
        assert_eq!(read_text(&p).unwrap(), "hello");
        assert!(!dir.path().join("a/b/c.txt.tmp").exists());
    }
}
