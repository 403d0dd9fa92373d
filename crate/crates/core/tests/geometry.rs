use gdf_core::geometry::{
    closest_point_on_triangle, load_mesh, normalize_mesh, save_mesh, seeded_rng, shapes, Bvh,
    TriangleMesh,
};
use nalgebra::Point3;
use proptest::prelude::*;
use rand::Rng;

fn random_soup(n: usize, seed: u64) -> TriangleMesh {
    let mut rng = seeded_rng(seed);
    let mut vertices = Vec::with_capacity(3 * n);
    for _ in 0..n {
        let c = Point3::new(
            rng.random::<f64>(),
            rng.random::<f64>(),
            rng.random::<f64>(),
        );
        for _ in 0..3 {
            vertices.push(
                c + (Point3::new(rng.random(), rng.random(), rng.random()) - Point3::origin())
                    * 0.2,
            );
        }
    }
    let triangles = (0..n as u32)
        .map(|t| [3 * t, 3 * t + 1, 3 * t + 2])
        .collect();
    TriangleMesh::new(vertices, triangles)
}

fn brute_force(mesh: &TriangleMesh, q: &Point3<f64>) -> f64 {
    (0..mesh.num_triangles())
        .map(|t| {
            let [a, b, c] = mesh.triangle(t);
            (closest_point_on_triangle(q, &a, &b, &c) - q).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bvh_agrees_with_exhaustive_search(seed in any::<u64>(), n in 1usize..300) {
        let mesh = random_soup(n, seed);
        let bvh = Bvh::build(&mesh);
        let mut rng = seeded_rng(seed ^ 1);
        for _ in 0..50 {
            let q = Point3::new(rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5));
            let hit = bvh.closest_point(&mesh, &q);
            let exact = brute_force(&mesh, &q);
            prop_assert!((hit.distance - exact).abs() <= 1e-9 * exact.max(1e-12));
            prop_assert!(((hit.point - q).norm() - hit.distance).abs() < 1e-12);
        }
    }

    #[test]
    fn distance_is_one_lipschitz(seed in any::<u64>()) {
        let mesh = shapes::hemisphere_patch(6, 0.4);
        let bvh = Bvh::build(&mesh);
        let mut rng = seeded_rng(seed);
        for _ in 0..50 {
            let a = Point3::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6));
            let b = Point3::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6));
            let da = bvh.closest_point(&mesh, &a).distance;
            let db = bvh.closest_point(&mesh, &b).distance;
            prop_assert!((da - db).abs() <= (a - b).norm() + 1e-12);
        }
    }
}

#[test]
fn obj_and_ply_round_trip_preserve_geometry() {
    let mesh = shapes::cylinder_patch(5, 0.3, 0.2);
    let dir = tempfile::tempdir().unwrap();
    for name in ["c.obj", "c.ply"] {
        let path = dir.path().join(name);
        save_mesh(&mesh, &path).unwrap();
        let (back, report) = load_mesh(&path).unwrap();
        assert_eq!(report.degenerate_dropped, 0);
        assert_eq!(back.triangles, mesh.triangles);
        for (a, b) in back.vertices.iter().zip(&mesh.vertices) {
            assert!((a - b).norm() < 1e-6, "{name}");
        }
    }
}

#[test]
fn normalization_fits_the_unit_box() {
    let mesh = shapes::plane_patch(3, 2.0, 7.0)
        .map_vertices(|p| Point3::new(p.x * 3.0 + 1.0, p.y - 4.0, p.z));
    let (norm, t) = normalize_mesh(&mesh).unwrap();
    let b = norm.bounds();
    assert!((b.extent().max() - 1.0).abs() < 1e-12);
    assert!(b.center().coords.norm() < 1e-12);
    for (p, q) in mesh.vertices.iter().zip(&norm.vertices) {
        assert!((t.invert(q) - p).norm() < 1e-12);
    }
}
