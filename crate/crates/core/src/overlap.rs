//! Region overlap (Jaccard index) used for failure detection.
//!
//! Convex operands are intersected exactly with Sutherland–Hodgman clipping.
//! When either operand is non-convex the overlap is estimated by sampling a
//! 1000×1000 grid of cell centres over the union bounding box.

use crate::region::{Point, Region};
use std::cmp::Ordering;

/// Grid resolution of the non-convex fallback.
pub const RASTER_RESOLUTION: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Overlap {
    pub value: f64,
    /// Set when one operand has zero area; `value` is then 0.
    pub degenerate: bool,
}

/// Jaccard overlap of two regions in `[0, 1]`. Special regions overlap
/// nothing.
pub fn region_overlap(a: &Region, b: &Region) -> f64 {
    overlap_detailed(a, b).value
}

pub fn overlap_detailed(a: &Region, b: &Region) -> Overlap {
    let none = Overlap {
        value: 0.0,
        degenerate: false,
    };
    if let (
        Region::Rectangle { x, y, w, h },
        Region::Rectangle {
            x: bx,
            y: by,
            w: bw,
            h: bh,
        },
    ) = (a, b)
    {
        return rect_overlap([*x, *y, *w, *h], [*bx, *by, *bw, *bh]);
    }
    let (Some(pa), Some(pb)) = (a.vertices(), b.vertices()) else {
        return none;
    };
    // Canonical operand order keeps the result bit-for-bit symmetric.
    let (pa, pb) = if compare_vertices(&pa, &pb) == Ordering::Greater {
        (pb, pa)
    } else {
        (pa, pb)
    };

    let area_a = polygon_area(&pa);
    let area_b = polygon_area(&pb);
    if area_a <= 0.0 || area_b <= 0.0 {
        return Overlap {
            value: 0.0,
            degenerate: true,
        };
    }

    let value = if is_convex(&pa) && is_convex(&pb) {
        let inter = polygon_area(&clip_convex(&pa, &pb));
        inter / (area_a + area_b - inter)
    } else {
        raster_overlap(&pa, &pb, RASTER_RESOLUTION)
    };
    Overlap {
        value: if value.is_finite() { value.clamp(0.0, 1.0) } else { 0.0 },
        degenerate: false,
    }
}

fn rect_overlap(a: [f64; 4], b: [f64; 4]) -> Overlap {
    let ix = (a[0] + a[2]).min(b[0] + b[2]) - a[0].max(b[0]);
    let iy = (a[1] + a[3]).min(b[1] + b[3]) - a[1].max(b[1]);
    let inter = if ix > 0.0 && iy > 0.0 { ix * iy } else { 0.0 };
    let union = a[2] * a[3] + b[2] * b[3] - inter;
    Overlap {
        value: if union > 0.0 {
            (inter / union).clamp(0.0, 1.0)
        } else {
            0.0
        },
        degenerate: union <= 0.0,
    }
}

fn compare_vertices(a: &[Point], b: &[Point]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(p, q)| p.x.total_cmp(&q.x).then(p.y.total_cmp(&q.y)))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn signed_area(points: &[Point]) -> f64 {
    let n = points.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let p = points[i];
            let q = points[(i + 1) % n];
            p.x * q.y - q.x * p.y
        })
        .sum();
    twice / 2.0
}

pub fn polygon_area(points: &[Point]) -> f64 {
    if points.len() < 3 {
        return 0.0;
    }
    signed_area(points).abs()
}

/// Convex and simple: every turn goes the same way and the boundary winds
/// exactly once.
pub fn is_convex(points: &[Point]) -> bool {
    let n = points.len();
    if n < 3 {
        return false;
    }
    let mut sign = 0.0f64;
    let mut turning = 0.0f64;
    for i in 0..n {
        let a = points[i];
        let b = points[(i + 1) % n];
        let c = points[(i + 2) % n];
        let z = cross(a, b, c);
        if z != 0.0 {
            if sign != 0.0 && z.signum() != sign {
                return false;
            }
            sign = z.signum();
        }
        let (ux, uy) = (b.x - a.x, b.y - a.y);
        let (vx, vy) = (c.x - b.x, c.y - b.y);
        turning += (ux * vy - uy * vx).atan2(ux * vx + uy * vy);
    }
    sign != 0.0 && (turning.abs() - std::f64::consts::TAU).abs() < 1e-6
}

fn counter_clockwise(points: &[Point]) -> Vec<Point> {
    let mut out = points.to_vec();
    if signed_area(&out) < 0.0 {
        out.reverse();
    }
    out
}

/// Intersection of two convex polygons.
pub fn clip_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let clip = counter_clockwise(clip);
    let mut output = counter_clockwise(subject);
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let edge_start = clip[i];
        let edge_end = clip[(i + 1) % n];
        let inside = |p: Point| cross(edge_start, edge_end, p) >= 0.0;
        let input = std::mem::take(&mut output);
        let mut prev = *input.last().expect("non-empty");
        for &cur in &input {
            match (inside(prev), inside(cur)) {
                (true, true) => output.push(cur),
                (true, false) => output.push(line_intersection(prev, cur, edge_start, edge_end)),
                (false, true) => {
                    output.push(line_intersection(prev, cur, edge_start, edge_end));
                    output.push(cur);
                }
                (false, false) => {}
            }
            prev = cur;
        }
    }
    output
}

/// Point where segment `s→e` meets the infinite line through `a→b`.
fn line_intersection(s: Point, e: Point, a: Point, b: Point) -> Point {
    let (nx, ny) = (b.x - a.x, b.y - a.y);
    let (dx, dy) = (e.x - s.x, e.y - s.y);
    let denom = nx * dy - ny * dx;
    if denom == 0.0 {
        return e;
    }
    let t = (nx * (a.y - s.y) - ny * (a.x - s.x)) / denom;
    Point::new(s.x + t * dx, s.y + t * dy)
}

/// Even-odd spans of `poly` on the horizontal line at `y`.
fn spans(poly: &[Point], y: f64, out: &mut Vec<(f64, f64)>) {
    let mut xs = Vec::new();
    let n = poly.len();
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        if (p.y > y) != (q.y > y) {
            xs.push(p.x + (y - p.y) * (q.x - p.x) / (q.y - p.y));
        }
    }
    xs.sort_by(f64::total_cmp);
    out.clear();
    out.extend(xs.chunks_exact(2).map(|c| (c[0], c[1])));
}

/// Number of cell centres `x0 + (j + 0.5) * cell` with `j < cols` inside
/// `[lo, hi)`.
fn centres_in(lo: f64, hi: f64, x0: f64, cell: f64, cols: usize) -> usize {
    let first = ((lo - x0) / cell - 0.5).ceil().max(0.0);
    let end = ((hi - x0) / cell - 0.5).ceil().min(cols as f64);
    if end > first {
        (end - first) as usize
    } else {
        0
    }
}

fn raster_overlap(a: &[Point], b: &[Point], resolution: usize) -> f64 {
    let (mut min_x, mut max_x, mut min_y, mut max_y) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in a.iter().chain(b) {
        min_x = min_x.min(p.x);
        max_x = max_x.max(p.x);
        min_y = min_y.min(p.y);
        max_y = max_y.max(p.y);
    }
    let cell_w = (max_x - min_x) / resolution as f64;
    let cell_h = (max_y - min_y) / resolution as f64;
    if !(cell_w > 0.0 && cell_h > 0.0) {
        return 0.0;
    }

    let (mut sa, mut sb) = (Vec::new(), Vec::new());
    let (mut count_a, mut count_b, mut count_ab) = (0usize, 0usize, 0usize);
    for row in 0..resolution {
        let y = min_y + (row as f64 + 0.5) * cell_h;
        spans(a, y, &mut sa);
        spans(b, y, &mut sb);
        for &(l, r) in &sa {
            count_a += centres_in(l, r, min_x, cell_w, resolution);
        }
        for &(l, r) in &sb {
            count_b += centres_in(l, r, min_x, cell_w, resolution);
        }
        for &(la, ra) in &sa {
            for &(lb, rb) in &sb {
                count_ab += centres_in(la.max(lb), ra.min(rb), min_x, cell_w, resolution);
            }
        }
    }
    let union = count_a + count_b - count_ab;
    if union == 0 {
        0.0
    } else {
        count_ab as f64 / union as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(x: f64, y: f64, w: f64, h: f64) -> Region {
        Region::rectangle(x, y, w, h).unwrap()
    }

    fn poly(pts: &[(f64, f64)]) -> Region {
        Region::polygon(pts.iter().map(|&(x, y)| Point::new(x, y)).collect()).unwrap()
    }

    #[test]
    fn identical_rectangles() {
        assert_eq!(region_overlap(&rect(0., 0., 2., 2.), &rect(0., 0., 2., 2.)), 1.0);
    }

    #[test]
    fn disjoint_rectangles() {
        assert_eq!(region_overlap(&rect(0., 0., 1., 1.), &rect(5., 5., 1., 1.)), 0.0);
    }

    #[test]
    fn half_shifted_rectangles() {
        let v = region_overlap(&rect(0., 0., 2., 2.), &rect(1., 0., 2., 2.));
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn touching_edges_is_zero() {
        assert_eq!(region_overlap(&rect(0., 0., 1., 1.), &rect(1., 0., 1., 1.)), 0.0);
    }

    #[test]
    fn polygon_route_matches_rectangle_route() {
        let a = rect(0., 0., 2., 2.);
        let b = rect(1., 0., 2., 2.);
        let pa = a.convert(crate::region::RegionKind::Polygon).unwrap();
        let pb = b.convert(crate::region::RegionKind::Polygon).unwrap();
        let v = region_overlap(&pa, &pb);
        assert!((v - 1.0 / 3.0).abs() < 1e-12, "{v}");
        // reversed winding
        let rev = poly(&[(1., 0.), (1., 2.), (3., 2.), (3., 0.)]);
        assert!((region_overlap(&pa, &rev) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn triangle_inside_square() {
        let sq = rect(0., 0., 4., 4.);
        let tri = poly(&[(0., 0.), (4., 0.), (0., 4.)]);
        assert!((region_overlap(&sq, &tri) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn special_overlaps_nothing() {
        let r = rect(0., 0., 2., 2.);
        assert_eq!(region_overlap(&Region::Special(0), &r), 0.0);
        assert_eq!(region_overlap(&r, &Region::Special(1)), 0.0);
    }

    #[test]
    fn degenerate_polygon_flagged() {
        let line = poly(&[(0., 0.), (1., 1.), (2., 2.)]);
        let o = overlap_detailed(&line, &rect(0., 0., 2., 2.));
        assert_eq!(o.value, 0.0);
        assert!(o.degenerate);
    }

    #[test]
    fn convexity() {
        let sq = rect(0., 0., 1., 1.).vertices().unwrap();
        assert!(is_convex(&sq));
        let l_shape = [(0., 0.), (2., 0.), (2., 1.), (1., 1.), (1., 2.), (0., 2.)]
            .map(|(x, y)| Point::new(x, y));
        assert!(!is_convex(&l_shape));
        let star: Vec<Point> = (0..5)
            .map(|i| {
                let t = (i * 2) as f64 * std::f64::consts::TAU / 5.0;
                Point::new(t.cos(), t.sin())
            })
            .collect();
        assert!(!is_convex(&star));
    }

    #[test]
    fn non_convex_uses_raster_estimate() {
        // L-shape of area 3 against the unit square in its corner: 1/3.
        let l_shape = poly(&[(0., 0.), (2., 0.), (2., 1.), (1., 1.), (1., 2.), (0., 2.)]);
        let v = region_overlap(&l_shape, &rect(0., 0., 1., 1.));
        assert!((v - 1.0 / 3.0).abs() < 2e-3, "{v}");
        let w = region_overlap(&rect(0., 0., 1., 1.), &l_shape);
        assert_eq!(v, w);
    }
}
