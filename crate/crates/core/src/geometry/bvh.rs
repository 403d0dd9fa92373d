//! Bounding-volume hierarchy for exact nearest-point queries on triangle meshes.

use nalgebra::Point3;

use super::mesh::{Aabb, TriangleMesh};

const MAX_LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
pub struct ClosestPointResult {
    pub point: Point3<f64>,
    pub distance: f64,
    pub triangle_id: usize,
}

#[derive(Debug, Clone)]
pub(crate) enum NodeKind {
    Leaf { start: usize, end: usize },
    Inner { left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub(crate) bounds: Aabb,
    pub(crate) kind: NodeKind,
}

/// Binary BVH over the triangles of one mesh. Leaves reference contiguous ranges of
/// `order`, a permutation of triangle indices.
#[derive(Debug, Clone)]
pub struct Bvh {
    pub(crate) nodes: Vec<Node>,
    pub(crate) order: Vec<usize>,
}

impl Bvh {
    pub fn build(mesh: &TriangleMesh) -> Self {
        let n = mesh.triangles.len();
        let mut order: Vec<usize> = (0..n).collect();
        let boxes: Vec<Aabb> = (0..n)
            .map(|t| Aabb::from_points(mesh.triangle(t).iter()))
            .collect();
        let centroids: Vec<Point3<f64>> = boxes.iter().map(|b| b.center()).collect();
        let mut nodes = Vec::with_capacity(2 * n / MAX_LEAF_SIZE + 1);
        if n > 0 {
            build_recursive(&mut nodes, &mut order, 0, n, &boxes, &centroids);
        }
        Bvh { nodes, order }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Exact nearest surface point. Ties in distance go to the lowest triangle index.
    ///
    /// Panics if the mesh has no triangles.
    pub fn closest_point(&self, mesh: &TriangleMesh, q: &Point3<f64>) -> ClosestPointResult {
        assert!(
            !self.nodes.is_empty(),
            "closest-point query on an empty mesh"
        );
        let mut best_d2 = f64::INFINITY;
        let mut best_point = *q;
        let mut best_tri = usize::MAX;
        let mut stack: Vec<(usize, f64)> = Vec::with_capacity(64);
        stack.push((0, self.nodes[0].bounds.distance_squared(q)));
        while let Some((idx, box_d2)) = stack.pop() {
            if box_d2 > best_d2 {
                continue;
            }
            match self.nodes[idx].kind {
                NodeKind::Leaf { start, end } => {
                    for &t in &self.order[start..end] {
                        let [a, b, c] = mesh.triangle(t);
                        let p = closest_point_on_triangle(q, &a, &b, &c);
                        let d2 = (q - p).norm_squared();
                        if d2 < best_d2 || (d2 == best_d2 && t < best_tri) {
                            best_d2 = d2;
                            best_point = p;
                            best_tri = t;
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    let dl = self.nodes[left].bounds.distance_squared(q);
                    let dr = self.nodes[right].bounds.distance_squared(q);
                    // Push the farther child first so the nearer one is visited first.
                    if dl <= dr {
                        stack.push((right, dr));
                        stack.push((left, dl));
                    } else {
                        stack.push((left, dl));
                        stack.push((right, dr));
                    }
                }
            }
        }
        ClosestPointResult {
            point: best_point,
            distance: (q - best_point).norm(),
            triangle_id: best_tri,
        }
    }

    /// Triangles referenced by each leaf, in leaf order.
    pub fn leaf_triangles(&self) -> Vec<&[usize]> {
        self.nodes
            .iter()
            .filter_map(|n| match n.kind {
                NodeKind::Leaf { start, end } => Some(&self.order[start..end]),
                NodeKind::Inner { .. } => None,
            })
            .collect()
    }

    /// Checks that every node box contains its children's boxes (or its triangles).
    pub fn check_nesting(&self, mesh: &TriangleMesh) -> bool {
        self.nodes.iter().all(|n| match n.kind {
            NodeKind::Leaf { start, end } => self.order[start..end]
                .iter()
                .all(|&t| mesh.triangle(t).iter().all(|p| n.bounds.contains(p))),
            NodeKind::Inner { left, right } => {
                n.bounds.contains_box(&self.nodes[left].bounds)
                    && n.bounds.contains_box(&self.nodes[right].bounds)
            }
        })
    }
}

fn build_recursive(
    nodes: &mut Vec<Node>,
    order: &mut [usize],
    start: usize,
    end: usize,
    boxes: &[Aabb],
    centroids: &[Point3<f64>],
) -> usize {
    let bounds = order[start..end]
        .iter()
        .fold(Aabb::empty(), |acc, &t| acc.merge(&boxes[t]));
    let idx = nodes.len();
    nodes.push(Node {
        bounds,
        kind: NodeKind::Leaf { start, end },
    });
    if end - start <= MAX_LEAF_SIZE {
        return idx;
    }
    let cbounds = Aabb::from_points(order[start..end].iter().map(|&t| &centroids[t]));
    let extent = cbounds.extent();
    let axis = extent.imax();
    if extent[axis] <= 0.0 {
        return idx;
    }
    let mid = start + (end - start) / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        centroids[a][axis]
            .total_cmp(&centroids[b][axis])
            .then(a.cmp(&b))
    });
    let left = build_recursive(nodes, order, start, mid, boxes, centroids);
    let right = build_recursive(nodes, order, mid, end, boxes, centroids);
    nodes[idx].kind = NodeKind::Inner { left, right };
    idx
}

/// Closest point to `p` on segment `[a, b]`.
pub fn closest_point_on_segment(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>) -> Point3<f64> {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return *a;
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

/// Closest point to `p` on triangle `abc` (interior, edge and vertex regions).
pub fn closest_point_on_triangle(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> Point3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = va + vb + vc;
    if !(denom.abs() > 0.0) || !denom.is_finite() {
        return closest_on_edges(p, a, b, c);
    }
    let v = vb / denom;
    let w = vc / denom;
    let q = a + ab * v + ac * w;
    if q.coords.iter().all(|x| x.is_finite()) {
        q
    } else {
        closest_on_edges(p, a, b, c)
    }
}

fn closest_on_edges(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> Point3<f64> {
    let cands = [
        closest_point_on_segment(p, a, b),
        closest_point_on_segment(p, b, c),
        closest_point_on_segment(p, c, a),
    ];
    let mut best = cands[0];
    for q in &cands[1..] {
        if (p - q).norm_squared() < (p - best).norm_squared() {
            best = *q;
        }
    }
    best
}
