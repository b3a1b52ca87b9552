//! Skyline packing of chart rectangles and the pixel-level predicates used
//! to rasterize charts. Pixel coordinates are `[x, y]` with pixel centres
//! on integers.

use crate::error::{Error, Result};
use crate::geom::orient2d;

use super::chart::FlatChart;

/// Bottom-left skyline packing of `sizes` (`[w, h]`) into `limit`; returns
/// the lower corner of each rectangle, or `None` when they do not fit.
/// Rectangles are placed tallest first.
pub(crate) fn skyline_pack(sizes: &[[usize; 2]], limit: [usize; 2]) -> Option<Vec<[usize; 2]>> {
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[b][1].cmp(&sizes[a][1]).then(sizes[b][0].cmp(&sizes[a][0])).then(a.cmp(&b)));
    // (x, width, height) segments ordered by x
    let mut sky: Vec<(usize, usize, usize)> = vec![(0, limit[0], 0)];
    let mut out = vec![[0, 0]; sizes.len()];
    for &r in &order {
        let [w, h] = sizes[r];
        if w > limit[0] || h > limit[1] {
            return None;
        }
        let mut best: Option<(usize, usize, usize)> = None;
        for i in 0..sky.len() {
            let x = sky[i].0;
            if x + w > limit[0] {
                break;
            }
            let mut y = 0;
            let mut covered = 0;
            let mut j = i;
            while covered < w {
                y = y.max(sky[j].2);
                covered += sky[j].1;
                j += 1;
            }
            if y + h <= limit[1] && best.is_none_or(|(by, bx, _)| (y, x) < (by, bx)) {
                best = Some((y, x, i));
            }
        }
        let (y, x, _) = best?;
        out[r] = [x, y];
        if w == 0 {
            continue;
        }
        let mut next = Vec::with_capacity(sky.len() + 2);
        for &(sx, sw, sh) in &sky {
            let end = sx + sw;
            if end <= x || sx >= x + w {
                next.push((sx, sw, sh));
                continue;
            }
            if sx < x {
                next.push((sx, x - sx, sh));
            }
            if sx <= x {
                next.push((x, w, y + h));
            }
            if end > x + w {
                next.push((x + w, end - x - w, sh));
            }
        }
        if !next.iter().any(|s| s.0 == x && s.2 == y + h) {
            // placement started inside a later segment boundary
            let pos = next.iter().position(|s| s.0 > x).unwrap_or(next.len());
            next.insert(pos, (x, w, y + h));
        }
        let mut merged: Vec<(usize, usize, usize)> = Vec::with_capacity(next.len());
        for s in next {
            match merged.last_mut() {
                Some(last) if last.2 == s.2 && last.0 + last.1 == s.0 => last.1 += s.1,
                _ => merged.push(s),
            }
        }
        sky = merged;
    }
    Some(out)
}

/// Scales all charts uniformly and packs them into a `resolution`-square
/// image so that chart contents stay `gutter` pixels apart and `gutter / 2`
/// pixels inside the image. Returns pixel-space corners per chart.
pub(crate) fn pack_charts(charts: &[FlatChart], resolution: usize, gutter: usize) -> Result<Vec<Vec<[[f64; 2]; 3]>>> {
    let pad = gutter.div_ceil(2);
    let limit = resolution.saturating_sub(1);
    let bounds: Vec<([f64; 2], [f64; 2])> = charts.iter().map(FlatChart::bounds).collect();
    let extents: Vec<[f64; 2]> = bounds.iter().map(|(lo, hi)| [hi[0] - lo[0], hi[1] - lo[1]]).collect();
    let sizes = |s: f64| -> Vec<[usize; 2]> {
        extents
            .iter()
            .map(|e| e.map(|d| (d * s).ceil() as usize + 2 * pad))
            .collect()
    };
    let fits = |s: f64| skyline_pack(&sizes(s), [limit, limit]);
    let area: f64 = extents.iter().map(|e| e[0].max(1e-12) * e[1].max(1e-12)).sum();
    let mut s = (0.5 * (limit as f64).powi(2) / area).sqrt();
    let (mut lo, mut hi);
    if fits(s).is_some() {
        lo = s;
        loop {
            s *= 1.5;
            if fits(s).is_none() {
                hi = s;
                break;
            }
            lo = s;
        }
    } else {
        hi = s;
        loop {
            s /= 1.5;
            if fits(s).is_some() {
                lo = s;
                break;
            }
            hi = s;
            if s < 1e-300 || sizes(s).iter().all(|r| r[0] <= 2 * pad + 1 && r[1] <= 2 * pad + 1) {
                return Err(Error::AtlasQuality(format!(
                    "{} charts do not fit in a {resolution}x{resolution} atlas",
                    charts.len()
                )));
            }
        }
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if fits(mid).is_some() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let scale = lo;
    let origins = fits(scale).expect("lower bracket fits");
    Ok(charts
        .iter()
        .zip(&bounds)
        .zip(&origins)
        .map(|((chart, (min, _)), o)| {
            chart
                .corners
                .iter()
                .map(|tri| {
                    tri.map(|c| {
                        [
                            (c[0] - min[0]) * scale + (o[0] + pad) as f64,
                            (c[1] - min[1]) * scale + (o[1] + pad) as f64,
                        ]
                    })
                })
                .collect()
        })
        .collect())
}

/// Pixel index ranges (inclusive) whose centres lie within `margin` of the
/// triangle's bounding box, clipped to the image.
pub(crate) fn pixel_range(tri: &[[f64; 2]; 3], margin: f64, w: usize, h: usize) -> Option<([usize; 2], [usize; 2])> {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for c in tri {
        for k in 0..2 {
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k]);
        }
    }
    let dims = [w, h];
    let mut r0 = [0; 2];
    let mut r1 = [0; 2];
    for k in 0..2 {
        let a = (lo[k] - margin).ceil().max(0.0);
        let b = (hi[k] + margin).floor().min(dims[k] as f64 - 1.0);
        if !(a <= b) {
            return None;
        }
        r0[k] = a as usize;
        r1[k] = b as usize;
    }
    Some(([r0[0], r1[0]], [r0[1], r1[1]]))
}

/// Whether the axis-aligned square of half-width `half` centred at `c`
/// meets the triangle (touching counts). Separating-axis test.
pub(crate) fn box_meets_triangle(c: [f64; 2], half: f64, tri: &[[f64; 2]; 3]) -> bool {
    for k in 0..2 {
        let lo = tri.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min);
        let hi = tri.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max);
        if lo > c[k] + half || hi < c[k] - half {
            return false;
        }
    }
    for e in 0..3 {
        let a = tri[e];
        let b = tri[(e + 1) % 3];
        let n = [-(b[1] - a[1]), b[0] - a[0]];
        let proj = |p: [f64; 2]| n[0] * p[0] + n[1] * p[1];
        let t: Vec<f64> = tri.iter().map(|&p| proj(p)).collect();
        let (tlo, thi) = (t.iter().copied().fold(f64::INFINITY, f64::min), t.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        let bc = proj(c);
        let br = half * (n[0].abs() + n[1].abs());
        if tlo > bc + br || thi < bc - br {
            return false;
        }
    }
    true
}

/// Edge ownership for points exactly on an edge: of the two directions an
/// interior edge is traversed in, exactly one is owned.
fn owns_edge(a: [f64; 2], b: [f64; 2]) -> bool {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    dy > 0.0 || (dy == 0.0 && dx < 0.0)
}

/// `orient2d` evaluated with the endpoints in a fixed order, so the two
/// faces sharing an edge see exactly opposite signs.
fn edge_function(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    if (a[0], a[1]) <= (b[0], b[1]) {
        orient2d(a, b, p)
    } else {
        -orient2d(b, a, p)
    }
}

/// Whether `p` is covered by the counter-clockwise triangle under the
/// top-left fill rule; clockwise and collapsed triangles cover nothing.
pub(crate) fn covers(tri: &[[f64; 2]; 3], p: [f64; 2]) -> bool {
    if orient2d(tri[0], tri[1], tri[2]) <= 0.0 {
        return false;
    }
    (0..3).all(|e| {
        let a = tri[e];
        let b = tri[(e + 1) % 3];
        let w = edge_function(a, b, p);
        w > 0.0 || (w == 0.0 && owns_edge(a, b))
    })
}

/// Barycentric weights of the point of the triangle closest to `p`.
pub(crate) fn closest_barycentric(tri: &[[f64; 2]; 3], p: [f64; 2]) -> [f64; 3] {
    let lift = |q: [f64; 2]| [q[0], q[1], 0.0];
    crate::geom::closest_point_on_triangle(lift(p), lift(tri[0]), lift(tri[1]), lift(tri[2]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn overlaps(a: ([usize; 2], [usize; 2]), b: ([usize; 2], [usize; 2])) -> bool {
        let (pa, sa) = a;
        let (pb, sb) = b;
        pa[0] < pb[0] + sb[0] && pb[0] < pa[0] + sa[0] && pa[1] < pb[1] + sb[1] && pb[1] < pa[1] + sa[1]
    }

    #[test]
    fn skyline_places_disjoint_rectangles() {
        let sizes: Vec<[usize; 2]> = (0..40).map(|i| [3 + (i * 7) % 11, 2 + (i * 5) % 9]).collect();
        let pos = skyline_pack(&sizes, [64, 64]).unwrap();
        for i in 0..sizes.len() {
            assert!(pos[i][0] + sizes[i][0] <= 64 && pos[i][1] + sizes[i][1] <= 64);
            for j in 0..i {
                assert!(!overlaps((pos[i], sizes[i]), (pos[j], sizes[j])), "{i} {j}");
            }
        }
        assert!(skyline_pack(&[[10, 10]; 5], [10, 40]).is_none());
        assert!(skyline_pack(&[[10, 10]; 4], [20, 20]).is_some());
    }

    #[test]
    fn shared_edge_covered_once() {
        let t1 = [[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]];
        let t2 = [[4.0, 0.0], [4.0, 4.0], [0.0, 4.0]];
        for y in 0..=4 {
            for x in 0..=4 {
                let p = [x as f64, y as f64];
                let n = covers(&t1, p) as u8 + covers(&t2, p) as u8;
                let inside_square = x < 4 || y < 4 || (x == 4 && y == 4);
                assert!(n <= 1, "{p:?}");
                if x > 0 && y > 0 && x < 4 && y < 4 {
                    assert_eq!(n, 1, "{p:?}");
                }
                let _ = inside_square;
            }
        }
        // clockwise triangles cover nothing
        assert!(!covers(&[[0.0, 0.0], [0.0, 4.0], [4.0, 0.0]], [1.0, 1.0]));
    }

    #[test]
    fn box_test_matches_dense_sampling() {
        let tri = [[1.3, 2.1], [6.7, 3.9], [2.2, 7.4]];
        for y in 0..10 {
            for x in 0..10 {
                let c = [x as f64, y as f64];
                let mut hit = false;
                for i in 1..40 {
                    for j in 1..40 {
                        let p = [c[0] - 1.0 + i as f64 / 20.0, c[1] - 1.0 + j as f64 / 20.0];
                        hit |= covers(&tri, p);
                    }
                }
                if hit {
                    assert!(box_meets_triangle(c, 1.0, &tri), "{c:?}");
                }
            }
        }
        assert!(!box_meets_triangle([9.0, 0.0], 1.0, &tri));
    }
}
