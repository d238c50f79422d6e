//! Planar geometry primitives used by the boundary pipeline.
//!
//! Coordinates follow the grid convention: `x` runs along columns,
//! `y` along rows, origin at the top-left. Pixel (row r, col c) has its
//! center at (c + 0.5, r + 0.5).

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// A closed polygon; the edge from the last vertex back to the first is
/// implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    /// Requires at least 3 vertices with no consecutive duplicates
    /// (including the implicit closing pair last/first).
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidPolygon(format!(
                "need >= 3 vertices, got {}",
                vertices.len()
            )));
        }
        let n = vertices.len();
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            if !a.x.is_finite() || !a.y.is_finite() {
                return Err(Error::InvalidPolygon(format!(
                    "vertex {i} has non-finite coordinates"
                )));
            }
            if a == b {
                return Err(Error::InvalidPolygon(format!(
                    "consecutive vertices {i} and {} coincide",
                    (i + 1) % n
                )));
            }
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Shoelace signed area; positive when the vertices run
    /// counterclockwise in the (x, y) plane.
    pub fn signed_area(&self) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        let mut acc = 0.0;
        for i in 0..n {
            let a = v[i];
            let b = v[(i + 1) % n];
            acc += a.x * b.y - b.x * a.y;
        }
        acc / 2.0
    }

    /// Reverses orientation in place if the winding is clockwise, so the
    /// result is always counterclockwise.
    pub fn into_counterclockwise(mut self) -> Self {
        if self.signed_area() < 0.0 {
            self.vertices.reverse();
        }
        self
    }
}

/// Area of the triangle (a, b, c).
pub fn triangle_area(a: Point, b: Point, c: Point) -> f64 {
    ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y)).abs() / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Polygon {
        Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(2.0, 2.0),
            Point::new(0.0, 2.0),
        ])
        .unwrap()
    }

    #[test]
    fn rejects_degenerate() {
        assert!(Polygon::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)]).is_err());
        assert!(Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0)
        ])
        .is_err());
        // closing pair duplicate
        assert!(Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 0.0)
        ])
        .is_err());
    }

    #[test]
    fn signed_area_and_orientation() {
        let sq = square();
        assert_eq!(sq.signed_area(), 4.0);
        let cw = Polygon::new(sq.vertices().iter().rev().copied().collect()).unwrap();
        assert_eq!(cw.signed_area(), -4.0);
        assert_eq!(cw.into_counterclockwise().signed_area(), 4.0);
    }

    #[test]
    fn triangle_area_matches_half_base_height() {
        let a = triangle_area(
            Point::new(0.0, 0.0),
            Point::new(4.0, 0.0),
            Point::new(0.0, 3.0),
        );
        assert_eq!(a, 6.0);
    }
}
