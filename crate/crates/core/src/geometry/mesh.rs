use nalgebra::{Point3, Vector3};

use crate::{Error, Result};

/// Faces with area at or below this (in the units of the mesh) are dropped.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn new(min: Point3<f64>, max: Point3<f64>) -> Self {
        Self { min, max }
    }

    /// Cube `[-half, half]³`.
    pub fn centered_cube(half: f64) -> Self {
        Self::new(
            Point3::new(-half, -half, -half),
            Point3::new(half, half, half),
        )
    }

    pub fn empty() -> Self {
        Self {
            min: Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point3<f64>>) -> Self {
        let mut b = Self::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Point3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&self, other: &Aabb) -> Aabb {
        Aabb::new(self.min.inf(&other.min), self.max.sup(&other.max))
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x || self.min.y > self.max.y || self.min.z > self.max.z
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn center(&self) -> Point3<f64> {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        self.contains(&other.min) && self.contains(&other.max)
    }

    /// Squared distance from `p` to the box (zero inside).
    pub fn distance_squared(&self, p: &Point3<f64>) -> f64 {
        let mut d2 = 0.0;
        for i in 0..3 {
            let d = if p[i] < self.min[i] {
                self.min[i] - p[i]
            } else if p[i] > self.max[i] {
                p[i] - self.max[i]
            } else {
                0.0
            };
            d2 += d * d;
        }
        d2
    }
}

/// Indexed triangle mesh.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[u32; 3]>,
    pub face_normals: Option<Vec<Vector3<f64>>>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[u32; 3]>) -> Self {
        Self {
            vertices,
            triangles,
            face_normals: None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Corner positions of triangle `t`.
    #[inline]
    pub fn triangle(&self, t: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle(t);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Unit normal of triangle `t`, or the zero vector for a degenerate face.
    pub fn triangle_normal(&self, t: usize) -> Vector3<f64> {
        if let Some(normals) = &self.face_normals {
            return normals[t];
        }
        let [a, b, c] = self.triangle(t);
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            Vector3::zeros()
        }
    }

    /// Fills `face_normals` from the vertex winding.
    pub fn compute_face_normals(&mut self) {
        self.face_normals = None;
        let normals = (0..self.triangles.len())
            .map(|t| self.triangle_normal(t))
            .collect();
        self.face_normals = Some(normals);
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| self.triangle_area(t))
            .sum()
    }

    /// Checks index bounds.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i as usize >= n) {
                return Err(Error::InvalidInput(format!(
                    "triangle {t} references a vertex outside 0..{n}"
                )));
            }
        }
        Ok(())
    }

    /// Removes faces whose area is at or below [`DEGENERATE_AREA`]; returns how many were dropped.
    pub fn drop_degenerate(&mut self) -> usize {
        let before = self.triangles.len();
        let keep: Vec<bool> = (0..before)
            .map(|t| self.triangle_area(t) > DEGENERATE_AREA)
            .collect();
        let mut idx = 0;
        self.triangles.retain(|_| {
            let k = keep[idx];
            idx += 1;
            k
        });
        if let Some(normals) = &mut self.face_normals {
            let mut idx = 0;
            normals.retain(|_| {
                let k = keep[idx];
                idx += 1;
                k
            });
        }
        before - self.triangles.len()
    }

    /// Applies `p ↦ transform(p)` to every vertex.
    pub fn map_vertices(&self, f: impl Fn(&Point3<f64>) -> Point3<f64>) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(f).collect(),
            triangles: self.triangles.clone(),
            face_normals: None,
        }
    }

    /// Number of connected components, where triangles sharing a vertex index are connected.
    pub fn connected_components(&self) -> usize {
        if self.triangles.is_empty() {
            return 0;
        }
        let mut parent: Vec<usize> = (0..self.vertices.len()).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for tri in &self.triangles {
            let a = find(&mut parent, tri[0] as usize);
            for &v in &tri[1..] {
                let b = find(&mut parent, v as usize);
                if a != b {
                    parent[b] = a;
                }
            }
        }
        let mut used = vec![false; self.vertices.len()];
        for tri in &self.triangles {
            for &v in tri {
                used[v as usize] = true;
            }
        }
        let mut roots = std::collections::BTreeSet::new();
        for v in 0..self.vertices.len() {
            if used[v] {
                roots.insert(find(&mut parent, v));
            }
        }
        roots.len()
    }

    /// V − E + F over referenced vertices and undirected edges.
    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = std::collections::HashSet::new();
        let mut used = std::collections::HashSet::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let a = tri[k];
                let b = tri[(k + 1) % 3];
                edges.insert((a.min(b), a.max(b)));
                used.insert(a);
            }
        }
        used.len() as i64 - edges.len() as i64 + self.triangles.len() as i64
    }

    /// Number of undirected edges used by exactly one triangle.
    pub fn boundary_edge_count(&self) -> usize {
        let mut counts = std::collections::HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let a = tri[k];
                let b = tri[(k + 1) % 3];
                *counts.entry((a.min(b), a.max(b))).or_insert(0usize) += 1;
            }
        }
        counts.values().filter(|&&c| c == 1).count()
    }
}

/// Maps mesh coordinates into the normalized unit box: `p' = (p + translation) · scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizeTransform {
    pub scale: f64,
    pub translation: Vector3<f64>,
}

impl Default for NormalizeTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl NormalizeTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        (p + self.translation) * self.scale
    }

    pub fn invert(&self, p: &Point3<f64>) -> Point3<f64> {
        p / self.scale - self.translation
    }
}

/// Centers the bounding box at the origin and scales the longest side to 1.
pub fn normalize_mesh(mesh: &TriangleMesh) -> Result<(TriangleMesh, NormalizeTransform)> {
    if mesh.vertices.is_empty() || mesh.triangles.is_empty() {
        return Err(Error::InvalidInput("cannot normalize an empty mesh".into()));
    }
    let bounds = mesh.bounds();
    let longest = bounds.extent().max();
    if !(longest > 0.0) || !longest.is_finite() {
        return Err(Error::InvalidInput(format!(
            "mesh has zero or non-finite extent ({longest})"
        )));
    }
    let transform = NormalizeTransform {
        scale: 1.0 / longest,
        translation: -bounds.center().coords,
    };
    let mut out = mesh.map_vertices(|p| transform.apply(p));
    out.face_normals = mesh.face_normals.clone();
    Ok((out, transform))
}
