//! Room geometry: triangle meshes, bounding boxes and bounce-point sampling.

mod obj;
mod poisson;

pub use obj::{load_obj, parse_obj, write_obj};
pub use poisson::{poisson_disk_sample, sample_surface, BouncePointSet, CANDIDATE_FACTOR};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point or vector in meters.
pub type Point3 = [f64; 3];

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("malformed mesh: {0}")]
    MalformedMesh(String),
    #[error("mesh has no faces")]
    EmptyMesh,
    #[error("cannot draw {requested} points from {available} candidates")]
    InfeasibleSampleCount { requested: usize, available: usize },
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),
    #[error("bounce point file: {0}")]
    BadPointFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn distance(a: Point3, b: Point3) -> f64 {
    let d = sub(a, b);
    dot(d, d).sqrt()
}

/// Axis-aligned box, closed on all sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: Point3,
    pub max: Point3,
}

impl BoundingBox {
    pub fn new(min: Point3, max: Point3) -> Result<Self, GeometryError> {
        if min.iter().chain(&max).any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidBox("non-finite corner".into()));
        }
        if (0..3).any(|i| min[i] > max[i]) {
            return Err(GeometryError::InvalidBox(format!(
                "min {min:?} exceeds max {max:?}"
            )));
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, p: Point3) -> bool {
        (0..3).all(|i| self.min[i] <= p[i] && p[i] <= self.max[i])
    }

    pub fn extent(&self) -> Point3 {
        sub(self.max, self.min)
    }

    pub fn center(&self) -> Point3 {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        ]
    }

    /// Maps the box onto `[-1, 1]^3`. Flat axes map to 0.
    pub fn normalize(&self, p: Point3) -> Point3 {
        let c = self.center();
        let e = self.extent();
        let mut out = [0.0; 3];
        for i in 0..3 {
            if e[i] > 0.0 {
                out[i] = 2.0 * (p[i] - c[i]) / e[i];
            }
        }
        out
    }
}

pub fn contains(bbox: &BoundingBox, p: Point3) -> bool {
    bbox.contains(p)
}

/// Triangle soup with shared vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3>,
    triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>) -> Result<Self, GeometryError> {
        if triangles.is_empty() {
            return Err(GeometryError::EmptyMesh);
        }
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GeometryError::MalformedMesh("non-finite vertex".into()));
        }
        if let Some(t) = triangles
            .iter()
            .find(|t| t.iter().any(|&i| i >= vertices.len()))
        {
            return Err(GeometryError::MalformedMesh(format!(
                "triangle {t:?} indexes past {} vertices",
                vertices.len()
            )));
        }
        let mesh = Self {
            vertices,
            triangles,
        };
        if !(mesh.surface_area() > 0.0) {
            return Err(GeometryError::MalformedMesh("zero surface area".into()));
        }
        Ok(mesh)
    }

    /// The closed 12-triangle surface of a box.
    pub fn from_box(bbox: &BoundingBox) -> Result<Self, GeometryError> {
        let (a, b) = (bbox.min, bbox.max);
        let vertices = (0..8)
            .map(|i| {
                [
                    if i & 1 == 0 { a[0] } else { b[0] },
                    if i & 2 == 0 { a[1] } else { b[1] },
                    if i & 4 == 0 { a[2] } else { b[2] },
                ]
            })
            .collect();
        let triangles = vec![
            [0, 2, 1],
            [1, 2, 3],
            [4, 5, 6],
            [5, 7, 6],
            [0, 1, 4],
            [1, 5, 4],
            [2, 6, 3],
            [3, 6, 7],
            [0, 4, 2],
            [2, 4, 6],
            [1, 3, 5],
            [3, 7, 5],
        ];
        Self::new(vertices, triangles)
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, i: usize) -> [Point3; 3] {
        let t = self.triangles[i];
        [
            self.vertices[t[0]],
            self.vertices[t[1]],
            self.vertices[t[2]],
        ]
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangle(i);
        let n = cross(sub(b, a), sub(c, a));
        0.5 * dot(n, n).sqrt()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|i| self.triangle_area(i))
            .sum()
    }

    pub fn bounding_box(&self) -> BoundingBox {
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        for v in self.triangles.iter().flatten().map(|&i| self.vertices[i]) {
            for k in 0..3 {
                min[k] = min[k].min(v[k]);
                max[k] = max[k].max(v[k]);
            }
        }
        BoundingBox { min, max }
    }

    pub fn map_vertices(&self, f: impl Fn(Point3) -> Point3) -> Self {
        Self {
            vertices: self.vertices.iter().map(|&v| f(v)).collect(),
            triangles: self.triangles.clone(),
        }
    }
}

pub fn bounding_box(mesh: &TriangleMesh) -> BoundingBox {
    mesh.bounding_box()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_box() -> BoundingBox {
        BoundingBox::new([0.0; 3], [1.0; 3]).unwrap()
    }

    #[test]
    fn box_mesh_area_and_bounds() {
        let m = TriangleMesh::from_box(&unit_box()).unwrap();
        assert_eq!(m.triangles().len(), 12);
        assert!((m.surface_area() - 6.0).abs() < 1e-12);
        assert_eq!(m.bounding_box(), unit_box());
    }

    #[test]
    fn box_mesh_faces_point_outward() {
        let b = BoundingBox::new([0.0; 3], [2.0, 3.0, 4.0]).unwrap();
        let m = TriangleMesh::from_box(&b).unwrap();
        let c = b.center();
        for i in 0..12 {
            let [p, q, r] = m.triangle(i);
            let n = cross(sub(q, p), sub(r, p));
            assert!(dot(n, sub(p, c)) > 0.0, "triangle {i} faces inward");
        }
    }

    #[test]
    fn bbox_examples() {
        let tri = TriangleMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 3.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert_eq!(tri.bounding_box().min, [0.0; 3]);
        assert_eq!(tri.bounding_box().max, [1.0, 2.0, 3.0]);
        let moved = TriangleMesh::from_box(&unit_box())
            .unwrap()
            .map_vertices(|v| [v[0] + 5.0, v[1] + 5.0, v[2] + 5.0]);
        assert_eq!(moved.bounding_box().min, [5.0; 3]);
        assert_eq!(moved.bounding_box().max, [6.0; 3]);
    }

    #[test]
    fn containment_is_closed() {
        let b = unit_box();
        assert!(contains(&b, [0.5, 0.5, 0.5]));
        assert!(contains(&b, [1.0, 1.0, 1.0]));
        assert!(!contains(&b, [1.0001, 0.0, 0.0]));
    }

    #[test]
    fn invalid_meshes() {
        assert!(matches!(
            TriangleMesh::new(vec![[0.0; 3]], vec![]),
            Err(GeometryError::EmptyMesh)
        ));
        assert!(matches!(
            TriangleMesh::new(vec![[0.0; 3]], vec![[0, 0, 1]]),
            Err(GeometryError::MalformedMesh(_))
        ));
        assert!(BoundingBox::new([1.0, 0.0, 0.0], [0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn normalize_maps_to_unit_cube() {
        let b = BoundingBox::new([0.0, 0.0, 0.0], [4.0, 2.0, 1.0]).unwrap();
        assert_eq!(b.normalize([0.0, 0.0, 0.0]), [-1.0, -1.0, -1.0]);
        assert_eq!(b.normalize([4.0, 2.0, 1.0]), [1.0, 1.0, 1.0]);
        assert_eq!(b.normalize([2.0, 1.0, 0.5]), [0.0, 0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn bbox_affine_equivariance(
            scale in 0.1f64..10.0,
            shift in proptest::array::uniform3(-50.0f64..50.0),
            pts in proptest::collection::vec(proptest::array::uniform3(-5.0f64..5.0), 3..20),
        ) {
            let n = pts.len();
            let tris: Vec<[usize; 3]> = (0..n - 2).map(|i| [i, i + 1, i + 2]).collect();
            let Ok(mesh) = TriangleMesh::new(pts, tris) else { return Ok(()); };
            let b = mesh.bounding_box();
            let t = |v: Point3| [v[0] * scale + shift[0], v[1] * scale + shift[1], v[2] * scale + shift[2]];
            let bt = mesh.map_vertices(t).bounding_box();
            for k in 0..3 {
                prop_assert!((bt.min[k] - t(b.min)[k]).abs() < 1e-9);
                prop_assert!((bt.max[k] - t(b.max)[k]).abs() < 1e-9);
            }
        }
    }
}
