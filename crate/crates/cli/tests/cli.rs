use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use selfprior::io::{self, RgbImage};
use selfprior::mesh::convex_hull;
use selfprior::{PointCloud, TriangleMesh};

const TINY: &str = r#"
preset = "desk"

[pipeline]
iterations = 2
initial_vertices = 40
refinement_vertex_schedule = [60, 80]
early_stop_rms = 0.0

[pipeline.prior3d]
channel_plan = [[6, 4], [4, 4], [4, 4], [4, 4], [4, 4], [4, 6]]
steps = 3

[pipeline.prior2d_xyz]
resolution = 64
width = 8
input_channels = 8
down_blocks = 3
up_blocks = 3
skip_blocks = 3
steps = 60

[pipeline.prior2d_rgb]
resolution = 64
width = 8
input_channels = 8
down_blocks = 3
up_blocks = 3
skip_blocks = 3
steps = 20

[evaluation]
samples = 2000
emd_points = 200
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_selfprior"));
    c.env_remove("SELFPRIOR__PIPELINE__ITERATIONS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Convex hull of a Fibonacci sphere.
fn sphere(n: usize) -> TriangleMesh {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let pts = (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let t = golden * i as f64;
            [r * t.cos(), y, r * t.sin()]
        })
        .collect();
    convex_hull(&PointCloud::new(pts, None).unwrap()).unwrap()
}

/// Sphere OBJ with planar-projected UVs, a material and a two-tone texture.
fn write_textured_sphere(dir: &Path) -> PathBuf {
    let mesh = sphere(200);
    let mut obj = String::from("mtllib gt.mtl\nusemtl m\n");
    for v in &mesh.vertices {
        obj.push_str(&format!("v {} {} {}\n", v[0], v[1], v[2]));
        obj.push_str(&format!("vt {} {}\n", 0.5 + 0.45 * v[0], 0.5 + 0.45 * v[1]));
    }
    for f in &mesh.faces {
        obj.push_str(&format!("f {0}/{0} {1}/{1} {2}/{2}\n", f[0] + 1, f[1] + 1, f[2] + 1));
    }
    std::fs::write(dir.join("gt.obj"), obj).unwrap();
    std::fs::write(dir.join("gt.mtl"), io::mtl_string("m", "gt.png")).unwrap();
    let mut img = RgbImage::new(16, 16);
    for r in 0..16 {
        for c in 0..16 {
            img.put(r, c, if c < 8 { [255, 0, 0] } else { [0, 0, 255] });
        }
    }
    io::write_png(&dir.join("gt.png"), &img).unwrap();
    dir.join("gt.obj")
}

#[test]
fn synth_writes_cloud_and_record_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let gt = write_textured_sphere(dir.path());
    let out = dir.path().join("cloud.ply");
    let o = run(&["synth", "--gt", s(&gt), "--points", "500", "--noise", "0.02", "--seed", "3", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cloud = io::read_point_cloud(&out).unwrap();
    assert_eq!(cloud.len(), 500);
    let colors = cloud.colors.as_ref().unwrap();
    assert!(colors.iter().any(|c| c[0] > 0.9) && colors.iter().any(|c| c[2] > 0.9));
    let record = std::fs::read_to_string(dir.path().join("cloud.ply.provenance.toml")).unwrap();
    for needle in ["seed = 3", "n_points = 500", "noise_std_fraction = 0.02", "colors = true"] {
        assert!(record.contains(needle), "{record}");
    }
    let again = dir.path().join("again.ply");
    let o = run(&["synth", "--gt", s(&gt), "--points", "500", "--noise", "0.02", "--seed", "3", "--out", s(&again)]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn synth_without_texture_needs_no_color() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("plain.obj");
    io::write_obj(&gt, &sphere(60)).unwrap();
    let out = dir.path().join("c.ply");
    let o = run(&["synth", "--gt", s(&gt), "--points", "100", "--out", s(&out)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--no-color"), "{}", stderr(&o));
    let o = run(&["synth", "--gt", s(&gt), "--points", "100", "--no-color", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(io::read_point_cloud(&out).unwrap().len(), 100);
}

#[test]
fn missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.ply");
    let o = run(&["reconstruct", "--input", s(&missing), "--out", s(&dir.path().join("o")), "--preset", "desk"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("nope.ply"), "{}", stderr(&o));
}

#[test]
fn invalid_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[pipeline]\nsteps = 3\n").unwrap();
    let o = run(&["reconstruct", "--input", "x.ply", "--out", "o", "--config", s(&cfg)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("config error"), "{}", stderr(&o));
}

#[test]
fn reconstruct_writes_outputs_and_resume_reproduces_them() {
    let dir = tempfile::tempdir().unwrap();
    let gt = write_textured_sphere(dir.path());
    let cloud = dir.path().join("cloud.ply");
    assert!(run(&["synth", "--gt", s(&gt), "--points", "600", "--out", s(&cloud)]).status.success());
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();

    let a = dir.path().join("a");
    let o = run(&["reconstruct", "--input", s(&cloud), "--out", s(&a), "--config", s(&cfg), "--seed", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["mesh.obj", "mesh.mtl", "texture.png", "manifest.toml", "config.toml"] {
        assert!(a.join(f).exists(), "{f}");
    }
    let used = std::fs::read_to_string(a.join("config.toml")).unwrap();
    assert!(used.contains("seed = 4"));
    let manifest = std::fs::read_to_string(a.join("manifest.toml")).unwrap();
    assert!(manifest.contains("config_hash") && manifest.contains("pipeline_hash"));
    let (mesh, atlas) = selfprior::uvatlas::read_atlas(&a.join("mesh.obj"), 64).unwrap();
    assert!(mesh.is_watertight());
    assert_eq!(atlas.resolution, 64);

    // interrupted run: drop everything after the first iteration, resume
    let b = dir.path().join("b");
    let o = run(&["reconstruct", "--input", s(&cloud), "--out", s(&b), "--config", s(&cfg), "--seed", "4"]);
    assert!(o.status.success());
    let ck = b.join("checkpoints");
    let text = std::fs::read_to_string(ck.join("manifest.toml")).unwrap();
    let cut = text.find("[[stages]]\nindex = 2").expect("third stage recorded");
    std::fs::write(ck.join("manifest.toml"), &text[..cut]).unwrap();
    std::fs::remove_dir_all(ck.join("stage_2")).unwrap();
    std::fs::remove_dir_all(ck.join("stage_3")).unwrap();
    let c = dir.path().join("c");
    let o = run(&[
        "reconstruct", "--input", s(&cloud), "--out", s(&c), "--config", s(&cfg), "--seed", "4", "--resume", s(&ck),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["mesh.obj", "texture.png"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(c.join(f)).unwrap(), "{f}");
    }

    // environment overrides mirror config keys
    let d = dir.path().join("d");
    let o = bin()
        .args(["reconstruct", "--input", s(&cloud), "--out", s(&d), "--config", s(&cfg)])
        .env("SELFPRIOR__PIPELINE__ITERATIONS", "1")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let used = std::fs::read_to_string(d.join("config.toml")).unwrap();
    assert!(used.contains("iterations = 1"), "{used}");
}

#[test]
fn evaluate_prints_rows_mean_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.obj");
    let b = dir.path().join("b.obj");
    io::write_obj(&a, &sphere(80)).unwrap();
    let mut shifted = sphere(80);
    for v in &mut shifted.vertices {
        v[0] += 0.4;
    }
    io::write_obj(&b, &shifted).unwrap();
    let csv = dir.path().join("t.csv");
    let o = run(&[
        "evaluate", "--pred", s(&a), "--gt", s(&a), "--pred", s(&b), "--gt", s(&a), "--samples", "3000", "--out", s(&csv),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("samples=3000"), "{text}");
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 4, "{text}");
    let first: Vec<f64> = rows[1].split_whitespace().skip(1).map(|v| v.parse().unwrap()).collect();
    assert_eq!(first[0], 100.0);
    assert_eq!(first[1], 0.0);
    assert_eq!(first[3], 1.0);
    let second: Vec<f64> = rows[2].split_whitespace().skip(1).map(|v| v.parse().unwrap()).collect();
    assert_eq!(second[0], 0.0);

    let table = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<Vec<&str>> = table.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[2][0], "mean");
    for col in 1..5 {
        let v: Vec<f64> = lines.iter().map(|l| l[col].parse().unwrap()).collect();
        assert!((v[2] - (v[0] + v[1]) / 2.0).abs() <= 1e-12 * v[2].abs().max(1.0));
    }
    assert!(lines.iter().all(|l| l[5] == "3000"));

    let o = run(&["evaluate", "--pred", s(&a), "--gt", s(&a), "--pred", s(&b)]);
    assert!(!o.status.success());
}
