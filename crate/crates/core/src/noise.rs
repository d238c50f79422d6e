//! Mask corruption: boundary tracing, vertex reduction and re-rasterization.
//!
//! A clean mask is corrupted by tracing the boundary of its largest
//! 4-connected foreground component, reducing the contour to a small
//! number of vertices, and rasterizing either the straight-edge polygon
//! or a smooth closed curve through the remaining vertices.
//!
//! Rasterization labels a pixel foreground when its center lies in the
//! closed region bounded by the polygon: strictly inside by the even-odd
//! rule, or on the boundary itself (within [`ON_EDGE_EPS`]). The closed
//! rule matters because traced contours place vertices exactly on pixel
//! centers.

use crate::error::{Error, Result};
use crate::geometry::{triangle_area, Point, Polygon};
use crate::grid::BinaryMask;

/// Distance below which a pixel center counts as lying on a polygon edge.
pub const ON_EDGE_EPS: f64 = 1e-9;

/// How a clean mask gets corrupted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    /// Connect the reduced vertices by straight segments.
    Polygon,
    /// Fit a closed smooth curve through the reduced vertices.
    Smooth,
}

/// Corruption settings: target vertex count and, for the smooth kind,
/// curve sampling density.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseSpec {
    kind: NoiseKind,
    vertex_count: usize,
    samples_per_segment: usize,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, vertex_count: usize, samples_per_segment: usize) -> Result<Self> {
        if vertex_count < 3 {
            return Err(Error::Parameter(format!(
                "vertex_count must be >= 3, got {vertex_count}"
            )));
        }
        if samples_per_segment < 2 {
            return Err(Error::Parameter(format!(
                "samples_per_segment must be >= 2, got {samples_per_segment}"
            )));
        }
        Ok(Self {
            kind,
            vertex_count,
            samples_per_segment,
        })
    }

    pub fn polygon(vertex_count: usize) -> Result<Self> {
        Self::new(NoiseKind::Polygon, vertex_count, 2)
    }

    pub fn smooth(vertex_count: usize, samples_per_segment: usize) -> Result<Self> {
        Self::new(NoiseKind::Smooth, vertex_count, samples_per_segment)
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn samples_per_segment(&self) -> usize {
        self.samples_per_segment
    }
}

// ---------------------------------------------------------------------------
// Boundary tracing
// ---------------------------------------------------------------------------

// Moore neighborhood in clockwise screen order starting at W, as
// (row, col) offsets.
const MOORE: [(i64, i64); 8] = [
    (0, -1),  // W
    (-1, -1), // NW
    (-1, 0),  // N
    (-1, 1),  // NE
    (0, 1),   // E
    (1, 1),   // SE
    (1, 0),   // S
    (1, -1),  // SW
];

/// Labels 4-connected foreground components; returns (labels, sizes).
/// Label 0 is background; components are numbered from 1 in scan order.
fn label_components(mask: &BinaryMask) -> (Vec<u32>, Vec<usize>) {
    let (h, w) = (mask.height(), mask.width());
    let mut labels = vec![0u32; h * w];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..h * w {
        if mask.data()[start] == 0 || labels[start] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        let mut size = 0usize;
        stack.push(start);
        labels[start] = id;
        while let Some(idx) = stack.pop() {
            size += 1;
            let (r, c) = (idx / w, idx % w);
            let mut visit = |nr: i64, nc: i64| {
                if nr >= 0 && nr < h as i64 && nc >= 0 && nc < w as i64 {
                    let nidx = nr as usize * w + nc as usize;
                    if mask.data()[nidx] == 1 && labels[nidx] == 0 {
                        labels[nidx] = id;
                        stack.push(nidx);
                    }
                }
            };
            visit(r as i64 - 1, c as i64);
            visit(r as i64 + 1, c as i64);
            visit(r as i64, c as i64 - 1);
            visit(r as i64, c as i64 + 1);
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Traces the closed boundary of the largest 4-connected foreground
/// component using Moore neighbor tracing, one vertex per boundary pixel
/// (vertices at pixel centers), ordered counterclockwise.
///
/// Components whose trace yields fewer than 3 distinct pixels (1- and
/// 2-pixel components) degenerate to the rectangle outlining their
/// pixels, which is the exact boundary in those cases.
pub fn trace_boundary(mask: &BinaryMask) -> Result<Polygon> {
    let (labels, sizes) = label_components(mask);
    let target = sizes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i as u32 + 1)
        .ok_or(Error::NoForeground)?;

    let (h, w) = (mask.height(), mask.width());
    let is_fg = |r: i64, c: i64| -> bool {
        r >= 0
            && r < h as i64
            && c >= 0
            && c < w as i64
            && labels[r as usize * w + c as usize] == target
    };

    let start_idx = labels.iter().position(|&l| l == target).unwrap();
    let start = ((start_idx / w) as i64, (start_idx % w) as i64);

    // The start pixel is the topmost-leftmost of its component, so its W
    // neighbor is guaranteed outside the component.
    let mut ring: Vec<(i64, i64)> = vec![start];
    let mut cur = start;
    let mut backtrack_dir = 0usize; // W
    let limit = 8 * h * w + 8;
    loop {
        let mut advanced = false;
        for i in 1..=8 {
            let dir = (backtrack_dir + i) % 8;
            let q = (cur.0 + MOORE[dir].0, cur.1 + MOORE[dir].1);
            if is_fg(q.0, q.1) {
                // backtrack for q = the last empty cell examined, seen from q
                let prev_dir = (backtrack_dir + i - 1) % 8;
                let b = (cur.0 + MOORE[prev_dir].0, cur.1 + MOORE[prev_dir].1);
                cur = q;
                backtrack_dir = MOORE
                    .iter()
                    .position(|&(dr, dc)| (q.0 + dr, q.1 + dc) == b)
                    .expect("ring-consecutive cells are Moore-adjacent");
                advanced = true;
                break;
            }
        }
        if !advanced {
            // isolated pixel
            break;
        }
        if cur == start && backtrack_dir == 0 {
            // closed the cycle in the same state it started from
            break;
        }
        ring.push(cur);
        if ring.len() > limit {
            return Err(Error::InvalidPolygon("boundary trace did not close".into()));
        }
    }

    if ring.len() < 3 {
        return Ok(component_outline(&labels, w, h, target));
    }

    let vertices = ring
        .iter()
        .map(|&(r, c)| Point::new(c as f64 + 0.5, r as f64 + 0.5))
        .collect();
    Ok(Polygon::new(vertices)?.into_counterclockwise())
}

/// Axis-aligned outline of a component's pixel set, counterclockwise.
fn component_outline(labels: &[u32], w: usize, h: usize, target: u32) -> Polygon {
    let (mut r0, mut r1, mut c0, mut c1) = (h, 0usize, w, 0usize);
    for r in 0..h {
        for c in 0..w {
            if labels[r * w + c] == target {
                r0 = r0.min(r);
                r1 = r1.max(r);
                c0 = c0.min(c);
                c1 = c1.max(c);
            }
        }
    }
    Polygon::new(vec![
        Point::new(c0 as f64, r0 as f64),
        Point::new(c1 as f64 + 1.0, r0 as f64),
        Point::new(c1 as f64 + 1.0, r1 as f64 + 1.0),
        Point::new(c0 as f64, r1 as f64 + 1.0),
    ])
    .expect("outline rectangle is a valid polygon")
}

// ---------------------------------------------------------------------------
// Vertex reduction
// ---------------------------------------------------------------------------

/// Reduces a closed polygon to exactly `k` vertices by iteratively
/// removing the vertex with the smallest effective triangle area
/// (Visvalingam-Whyatt on a ring). Ties break toward the lowest vertex
/// index. The surviving vertices are a subset of the input, in order.
pub fn simplify_polygon(poly: &Polygon, k: usize) -> Result<Polygon> {
    let n = poly.len();
    if k < 3 {
        return Err(Error::Parameter(format!("k must be >= 3, got {k}")));
    }
    if k > n {
        return Err(Error::Parameter(format!(
            "k = {k} exceeds vertex count {n}"
        )));
    }
    if k == n {
        return Ok(poly.clone());
    }

    let verts = poly.vertices();
    let mut prev: Vec<usize> = (0..n).map(|i| (i + n - 1) % n).collect();
    let mut next: Vec<usize> = (0..n).map(|i| (i + 1) % n).collect();
    let mut alive = vec![true; n];
    let mut count = n;

    while count > k {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            let (p, q) = (verts[prev[i]], verts[next[i]]);
            // removing i must not leave coincident neighbors behind
            // (possible only when the traced ring revisits a pixel)
            if p == q {
                continue;
            }
            let area = triangle_area(p, verts[i], q);
            if best.is_none_or(|(a, _)| area < a) {
                best = Some((area, i));
            }
        }
        let (_, i) =
            best.ok_or_else(|| Error::InvalidPolygon("cannot reduce without degenerating".into()))?;
        alive[i] = false;
        next[prev[i]] = next[i];
        prev[next[i]] = prev[i];
        count -= 1;
    }

    let kept: Vec<Point> = (0..n).filter(|&i| alive[i]).map(|i| verts[i]).collect();
    Polygon::new(kept)
}

// ---------------------------------------------------------------------------
// Rasterization
// ---------------------------------------------------------------------------

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.distance(&a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.distance(&Point::new(a.x + t * dx, a.y + t * dy))
}

/// Marks pixels whose centers lie within `ON_EDGE_EPS` of segment (a, b).
fn mark_on_edge(a: Point, b: Point, height: usize, width: usize, data: &mut [u8]) {
    let (ymin, ymax) = (a.y.min(b.y), a.y.max(b.y));
    let r_lo = ((ymin - ON_EDGE_EPS - 0.5).floor().max(0.0)) as usize;
    let r_hi = (ymax - ON_EDGE_EPS - 0.5).ceil().max(0.0) as usize + 1;
    let dy = b.y - a.y;
    for r in r_lo..=r_hi.min(height.saturating_sub(1)) {
        let y = r as f64 + 0.5;
        if y < ymin - ON_EDGE_EPS || y > ymax + ON_EDGE_EPS {
            continue;
        }
        // x-range of segment points whose y lies within EPS of this scanline
        let (xlo, xhi) = if dy.abs() <= 2.0 * ON_EDGE_EPS {
            (a.x.min(b.x), a.x.max(b.x))
        } else {
            let t0 = (((y - ON_EDGE_EPS) - a.y) / dy).clamp(0.0, 1.0);
            let t1 = (((y + ON_EDGE_EPS) - a.y) / dy).clamp(0.0, 1.0);
            let x0 = a.x + t0 * (b.x - a.x);
            let x1 = a.x + t1 * (b.x - a.x);
            (x0.min(x1), x0.max(x1))
        };
        let c_lo = ((xlo - ON_EDGE_EPS - 0.5).floor().max(0.0)) as usize;
        let c_hi = (xhi + ON_EDGE_EPS - 0.5).ceil().max(0.0) as usize;
        for c in c_lo..=c_hi.min(width.saturating_sub(1)) {
            let center = Point::new(c as f64 + 0.5, y);
            if point_segment_distance(center, a, b) <= ON_EDGE_EPS {
                data[r * width + c] = 1;
            }
        }
    }
}

/// Scanline even-odd rasterization of the closed polygon; a pixel is
/// labeled 1 when its center is strictly inside or on the boundary.
pub fn polygon_to_mask(poly: &Polygon, height: usize, width: usize) -> Result<BinaryMask> {
    if height == 0 || width == 0 {
        return Err(Error::Parameter(format!(
            "target dims must be >= 1, got {height}x{width}"
        )));
    }
    let verts = poly.vertices();
    let n = verts.len();
    let mut data = vec![0u8; height * width];
    let mut crossings: Vec<f64> = Vec::new();

    for r in 0..height {
        let y = r as f64 + 0.5;
        crossings.clear();
        for i in 0..n {
            let (a, b) = (verts[i], verts[(i + 1) % n]);
            if a.y == b.y {
                continue;
            }
            // half-open rule so a vertex on the scanline counts once
            let (ymin, ymax) = (a.y.min(b.y), a.y.max(b.y));
            if y >= ymin && y < ymax {
                let t = (y - a.y) / (b.y - a.y);
                crossings.push(a.x + t * (b.x - a.x));
            }
        }
        crossings.sort_by(|p, q| p.partial_cmp(q).unwrap());
        for pair in crossings.chunks_exact(2) {
            let (x0, x1) = (pair[0], pair[1]);
            // centers strictly between the crossings
            let c_from = (x0 - 0.5).floor() as i64 + 1;
            let c_to = (x1 - 0.5).ceil() as i64 - 1;
            for c in c_from.max(0)..=c_to.min(width as i64 - 1) {
                let x = c as f64 + 0.5;
                if x > x0 && x < x1 {
                    data[r * width + c as usize] = 1;
                }
            }
        }
    }

    for i in 0..n {
        mark_on_edge(verts[i], verts[(i + 1) % n], height, width, &mut data);
    }

    BinaryMask::new(height, width, data)
}

// ---------------------------------------------------------------------------
// Smooth closed curve
// ---------------------------------------------------------------------------

/// Thomas algorithm for a strictly diagonally dominant tridiagonal
/// system; `sub[i]`, `diag[i]`, `sup[i]` are the row-i coefficients.
fn solve_tridiag(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - sub[i] * c[i - 1];
        c[i] = sup[i] / m;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        let next = d[i + 1];
        d[i] -= c[i] * next;
    }
    d
}

/// Cyclic tridiagonal solve via Sherman-Morrison: row i couples
/// x[i-1], x[i], x[i+1] with wraparound corners sub[0] and sup[n-1].
fn solve_cyclic_tridiag(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let alpha = sub[0]; // A[0][n-1]
    let beta = sup[n - 1]; // A[n-1][0]
    let gamma = -diag[0];

    let mut diag_mod = diag.to_vec();
    diag_mod[0] -= gamma;
    diag_mod[n - 1] -= alpha * beta / gamma;

    let y = solve_tridiag(sub, &diag_mod, sup, rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = beta;
    let z = solve_tridiag(sub, &diag_mod, sup, &u);

    let vy = y[0] + alpha / gamma * y[n - 1];
    let vz = z[0] + alpha / gamma * z[n - 1];
    let factor = vy / (1.0 + vz);
    y.iter().zip(&z).map(|(yi, zi)| yi - factor * zi).collect()
}

/// Samples a closed C2 cubic spline through the vertices, chord-length
/// parametrized, `samples_per_segment` points per segment (segment end
/// points are contributed by the following segment).
fn sample_closed_spline(verts: &[Point], samples_per_segment: usize) -> Vec<Point> {
    let n = verts.len();
    let h: Vec<f64> = (0..n)
        .map(|i| verts[i].distance(&verts[(i + 1) % n]).max(1e-12))
        .collect();

    // periodic second-derivative system, one solve per coordinate
    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];
    let mut rhs_x = vec![0.0; n];
    let mut rhs_y = vec![0.0; n];
    for i in 0..n {
        let prev = (i + n - 1) % n;
        let next = (i + 1) % n;
        sub[i] = h[prev] / 6.0;
        diag[i] = (h[prev] + h[i]) / 3.0;
        sup[i] = h[i] / 6.0;
        rhs_x[i] = (verts[next].x - verts[i].x) / h[i] - (verts[i].x - verts[prev].x) / h[prev];
        rhs_y[i] = (verts[next].y - verts[i].y) / h[i] - (verts[i].y - verts[prev].y) / h[prev];
    }
    let mx = solve_cyclic_tridiag(&sub, &diag, &sup, &rhs_x);
    let my = solve_cyclic_tridiag(&sub, &diag, &sup, &rhs_y);

    let eval = |i: usize, frac: f64| -> Point {
        let next = (i + 1) % n;
        let hi = h[i];
        let a = 1.0 - frac;
        let cubic = |p0: f64, p1: f64, m0: f64, m1: f64| {
            m0 * (a * a * a - a) * hi * hi / 6.0
                + m1 * (frac * frac * frac - frac) * hi * hi / 6.0
                + p0 * a
                + p1 * frac
        };
        Point::new(
            cubic(verts[i].x, verts[next].x, mx[i], mx[next]),
            cubic(verts[i].y, verts[next].y, my[i], my[next]),
        )
    };

    let mut out = Vec::with_capacity(n * samples_per_segment);
    for i in 0..n {
        for s in 0..samples_per_segment {
            out.push(eval(i, s as f64 / samples_per_segment as f64));
        }
    }
    out
}

/// Rasterizes the closed smooth curve through the polygon's vertices.
pub fn smooth_curve_to_mask(
    poly: &Polygon,
    samples_per_segment: usize,
    height: usize,
    width: usize,
) -> Result<BinaryMask> {
    if samples_per_segment < 2 {
        return Err(Error::Parameter(format!(
            "samples_per_segment must be >= 2, got {samples_per_segment}"
        )));
    }
    let mut pts = sample_closed_spline(poly.vertices(), samples_per_segment);
    pts.dedup_by(|a, b| a.distance(b) < 1e-12);
    while pts.len() > 1 && pts[0].distance(pts.last().unwrap()) < 1e-12 {
        pts.pop();
    }
    if pts.len() < 3 {
        // curve collapsed; rasterize the control polygon instead
        return polygon_to_mask(poly, height, width);
    }
    let curve = Polygon::new(pts)?;
    polygon_to_mask(&curve, height, width)
}

// ---------------------------------------------------------------------------
// Corruption
// ---------------------------------------------------------------------------

/// Corrupts a clean mask: trace the largest component's boundary, reduce
/// it to `spec.vertex_count()` vertices, rasterize per the noise kind.
/// Output dims always equal input dims.
pub fn corrupt(mask: &BinaryMask, spec: &NoiseSpec) -> Result<BinaryMask> {
    let traced = trace_boundary(mask)?;
    let reduced = if traced.len() == spec.vertex_count() {
        traced
    } else {
        simplify_polygon(&traced, spec.vertex_count())?
    };
    match spec.kind() {
        NoiseKind::Polygon => polygon_to_mask(&reduced, mask.height(), mask.width()),
        NoiseKind::Smooth => smooth_curve_to_mask(
            &reduced,
            spec.samples_per_segment(),
            mask.height(),
            mask.width(),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::dice;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mask_from_str(rows: &[&str]) -> BinaryMask {
        let h = rows.len();
        let w = rows[0].len();
        let data = rows
            .iter()
            .flat_map(|r| r.bytes().map(|b| u8::from(b == b'1')))
            .collect();
        BinaryMask::new(h, w, data).unwrap()
    }

    fn ellipse_mask(h: usize, w: usize, cx: f64, cy: f64, rx: f64, ry: f64) -> BinaryMask {
        BinaryMask::from_fn(h, w, |r, c| {
            let x = (c as f64 + 0.5 - cx) / rx;
            let y = (r as f64 + 0.5 - cy) / ry;
            x * x + y * y <= 1.0
        })
    }

    // Independent oracle: even-odd crossing test plus on-edge check.
    fn point_in_polygon_oracle(p: Point, poly: &Polygon) -> bool {
        let verts = poly.vertices();
        let n = verts.len();
        let mut inside = false;
        for i in 0..n {
            let (a, b) = (verts[i], verts[(i + 1) % n]);
            if point_segment_distance(p, a, b) <= ON_EDGE_EPS {
                return true;
            }
            if (a.y <= p.y && p.y < b.y) || (b.y <= p.y && p.y < a.y) {
                let x_int = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if x_int > p.x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    #[test]
    fn trace_filled_3x3_square() {
        let m = mask_from_str(&["00000", "01110", "01110", "01110", "00000"]);
        let poly = trace_boundary(&m).unwrap();
        assert_eq!(poly.len(), 8, "one vertex per boundary pixel");
        assert!(poly.signed_area() > 0.0, "counterclockwise");
        // every vertex is the center of a boundary pixel of the square
        for v in poly.vertices() {
            let (c, r) = (v.x - 0.5, v.y - 0.5);
            assert_eq!(c, c.round());
            assert_eq!(r, r.round());
            let (c, r) = (c as usize, r as usize);
            assert_eq!(m.get(r, c), 1);
            assert!(!(r == 2 && c == 2), "center pixel is not on the boundary");
        }
    }

    #[test]
    fn trace_single_pixel_gives_pixel_outline() {
        let mut data = vec![0u8; 25];
        data[2 * 5 + 2] = 1;
        let m = BinaryMask::new(5, 5, data).unwrap();
        let poly = trace_boundary(&m).unwrap();
        assert_eq!(poly.len(), 4);
        let xs: Vec<(f64, f64)> = poly.vertices().iter().map(|p| (p.x, p.y)).collect();
        assert_eq!(xs, vec![(2.0, 2.0), (3.0, 2.0), (3.0, 3.0), (2.0, 3.0)]);
        // rasterizing the outline recovers the pixel
        let back = polygon_to_mask(&poly, 5, 5).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn trace_empty_mask_errors() {
        let m = BinaryMask::zeros(4, 4);
        assert!(matches!(trace_boundary(&m), Err(Error::NoForeground)));
    }

    #[test]
    fn trace_picks_largest_component() {
        let m = mask_from_str(&["10000", "00111", "00111", "00000"]);
        let poly = trace_boundary(&m).unwrap();
        // largest component is the 2x3 block; its 6 pixels are all boundary
        assert_eq!(poly.len(), 6);
        assert!(poly.vertices().iter().all(|v| v.x >= 2.0));
    }

    #[test]
    fn simplify_square_keeps_corners() {
        // 8-vertex square: corners dominate, midpoints are collinear
        let square = Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(2.0, 1.0),
            Point::new(2.0, 2.0),
            Point::new(1.0, 2.0),
            Point::new(0.0, 2.0),
            Point::new(0.0, 1.0),
        ])
        .unwrap();
        let out = simplify_polygon(&square, 4).unwrap();
        let got: Vec<(f64, f64)> = out.vertices().iter().map(|p| (p.x, p.y)).collect();
        assert_eq!(got, vec![(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)]);
    }

    #[test]
    fn simplify_identity_when_k_equals_n() {
        let tri = Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(4.0, 0.0),
            Point::new(0.0, 4.0),
        ])
        .unwrap();
        assert_eq!(simplify_polygon(&tri, 3).unwrap(), tri);
    }

    #[test]
    fn simplify_to_triangle_is_subset() {
        let m = ellipse_mask(24, 24, 12.0, 12.0, 9.0, 7.0);
        let poly = trace_boundary(&m).unwrap();
        let tri = simplify_polygon(&poly, 3).unwrap();
        assert_eq!(tri.len(), 3);
        for v in tri.vertices() {
            assert!(
                poly.vertices().iter().any(|u| u == v),
                "vertex {v:?} not on the original contour"
            );
        }
    }

    #[test]
    fn simplify_keeps_subset_for_any_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..10 {
            let rx = rng.gen_range(6.0..11.0);
            let ry = rng.gen_range(6.0..11.0);
            let poly = trace_boundary(&ellipse_mask(28, 28, 14.0, 14.0, rx, ry)).unwrap();
            let k = rng.gen_range(3..=poly.len());
            let out = simplify_polygon(&poly, k).unwrap();
            assert_eq!(out.len(), k);
            // surviving vertices appear in the original contour, in order
            let mut cursor = 0;
            for v in out.vertices() {
                let pos = poly.vertices()[cursor..]
                    .iter()
                    .position(|u| u == v)
                    .unwrap_or_else(|| panic!("vertex {v:?} missing or out of order"));
                cursor += pos + 1;
            }
        }
    }

    #[test]
    fn simplify_rejects_bad_k() {
        let tri = Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(4.0, 0.0),
            Point::new(0.0, 4.0),
        ])
        .unwrap();
        assert!(simplify_polygon(&tri, 2).is_err());
        assert!(simplify_polygon(&tri, 4).is_err());
    }

    #[test]
    fn rasterize_right_triangle() {
        let tri = Polygon::new(vec![
            Point::new(0.5, 0.5),
            Point::new(6.5, 0.5),
            Point::new(0.5, 6.5),
        ])
        .unwrap();
        let m = polygon_to_mask(&tri, 8, 8).unwrap();
        for r in 0..8 {
            for c in 0..8 {
                let expect = u8::from(r + c <= 6);
                assert_eq!(m.get(r, c), expect, "pixel ({r},{c})");
                let oracle =
                    point_in_polygon_oracle(Point::new(c as f64 + 0.5, r as f64 + 0.5), &tri);
                assert_eq!(m.get(r, c) == 1, oracle, "oracle disagrees at ({r},{c})");
            }
        }
    }

    #[test]
    fn rasterize_matches_oracle_on_random_polygons() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..40 {
            let n = rng.gen_range(3..=12);
            let verts: Vec<Point> = (0..n)
                .map(|_| Point::new(rng.gen_range(0.0..32.0), rng.gen_range(0.0..32.0)))
                .collect();
            let Ok(poly) = Polygon::new(verts) else {
                continue;
            };
            let m = polygon_to_mask(&poly, 32, 32).unwrap();
            for r in 0..32 {
                for c in 0..32 {
                    let p = Point::new(c as f64 + 0.5, r as f64 + 0.5);
                    assert_eq!(
                        m.get(r, c) == 1,
                        point_in_polygon_oracle(p, &poly),
                        "disagreement at ({r},{c})"
                    );
                }
            }
        }
    }

    #[test]
    fn rasterize_degenerate_polygon_is_tiny() {
        let poly = Polygon::new(vec![
            Point::new(0.7, 1.3),
            Point::new(6.1, 1.3000001),
            Point::new(3.0, 1.30000005),
        ])
        .unwrap();
        let m = polygon_to_mask(&poly, 8, 8).unwrap();
        assert!(
            m.count_ones() <= 8,
            "near-collinear polygon covers a sliver"
        );
    }

    #[test]
    fn retrace_convex_mask_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let rx = rng.gen_range(5.0..11.0);
            let ry = rng.gen_range(5.0..11.0);
            let m = ellipse_mask(32, 32, 16.0, 16.0, rx, ry);
            let poly = trace_boundary(&m).unwrap();
            let back = polygon_to_mask(&poly, 32, 32).unwrap();
            let d = dice(&m, &back).unwrap();
            assert!(d >= 0.99, "dice {d} below 0.99 for rx={rx} ry={ry}");
        }
    }

    #[test]
    fn smooth_circle_area_close_to_disk() {
        // 4 points on a circle of radius 10
        let (cx, cy, rad) = (16.0, 16.0, 10.0);
        let verts: Vec<Point> = (0..4)
            .map(|i| {
                let a = std::f64::consts::FRAC_PI_2 * i as f64;
                Point::new(cx + rad * a.cos(), cy + rad * a.sin())
            })
            .collect();
        let poly = Polygon::new(verts).unwrap();
        let m = smooth_curve_to_mask(&poly, 32, 32, 32).unwrap();
        let area = m.count_ones() as f64;
        let disk = std::f64::consts::PI * rad * rad;
        assert!(
            (area - disk).abs() / disk <= 0.10,
            "area {area} vs disk {disk}"
        );
    }

    #[test]
    fn smooth_minimal_sampling_close_to_polygon() {
        let m = ellipse_mask(32, 32, 16.0, 16.0, 10.0, 8.0);
        let poly = simplify_polygon(&trace_boundary(&m).unwrap(), 6).unwrap();
        let from_segments = polygon_to_mask(&poly, 32, 32).unwrap();
        let from_curve = smooth_curve_to_mask(&poly, 2, 32, 32).unwrap();
        let d = dice(&from_segments, &from_curve).unwrap();
        assert!(
            d > 0.8,
            "sparse spline should stay near the polygon, dice {d}"
        );
    }

    #[test]
    fn smooth_collinear_control_points() {
        let poly = Polygon::new(vec![
            Point::new(2.0, 2.0),
            Point::new(8.0, 2.0),
            Point::new(14.0, 2.0),
            Point::new(14.0, 3.0),
            Point::new(2.0, 3.0),
        ])
        .unwrap();
        let m = smooth_curve_to_mask(&poly, 8, 16, 16).unwrap();
        assert_eq!(m.height(), 16);
        assert!(m.count_ones() > 0);
    }

    #[test]
    fn corrupt_triangle_bounds_on_ellipses() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let spec = NoiseSpec::polygon(3).unwrap();
        for _ in 0..25 {
            let rx = rng.gen_range(6.0..12.0);
            let ry = rng.gen_range(6.0..12.0);
            let m = ellipse_mask(32, 32, 16.0, 16.0, rx, ry);
            let noisy = corrupt(&m, &spec).unwrap();
            assert_eq!(noisy.height(), m.height());
            assert_eq!(noisy.width(), m.width());
            let d = dice(&noisy, &m).unwrap();
            assert!(d > 0.3 && d < 0.95, "dice {d} out of (0.3, 0.95)");
        }
    }

    #[test]
    fn corrupt_identity_when_boundary_has_k_vertices() {
        let m = mask_from_str(&["00000", "01110", "01110", "01110", "00000"]);
        // boundary has exactly 8 vertices
        let spec = NoiseSpec::polygon(8).unwrap();
        let noisy = corrupt(&m, &spec).unwrap();
        let d = dice(&noisy, &m).unwrap();
        assert!(d >= 0.99, "dice {d}");
    }

    #[test]
    fn corrupt_empty_mask_errors() {
        let spec = NoiseSpec::polygon(3).unwrap();
        assert!(corrupt(&BinaryMask::zeros(8, 8), &spec).is_err());
    }

    #[test]
    fn corrupt_severity_ordering_sanity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec3 = NoiseSpec::polygon(3).unwrap();
        let spec7 = NoiseSpec::polygon(7).unwrap();
        let (mut sum3, mut sum7) = (0.0, 0.0);
        let trials = 20;
        for _ in 0..trials {
            let rx = rng.gen_range(6.0..12.0);
            let ry = rng.gen_range(6.0..12.0);
            let m = ellipse_mask(32, 32, 16.0, 16.0, rx, ry);
            sum3 += dice(&corrupt(&m, &spec3).unwrap(), &m).unwrap();
            sum7 += dice(&corrupt(&m, &spec7).unwrap(), &m).unwrap();
        }
        assert!(
            sum7 / trials as f64 >= sum3 / trials as f64,
            "7-vertex masks should be closer to clean"
        );
    }

    #[test]
    fn noise_spec_validation() {
        assert!(NoiseSpec::polygon(2).is_err());
        assert!(NoiseSpec::smooth(3, 1).is_err());
        assert!(NoiseSpec::smooth(3, 2).is_ok());
    }
}
