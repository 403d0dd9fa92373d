use gdf_core::field::{
    build_training_set, read_sample_cache, write_sample_cache, DistanceQuery, MeshField,
};
use gdf_core::geometry::{normalize_mesh, shapes, Bvh, SamplingConfig};

#[test]
fn default_sampling_yields_the_full_training_set() {
    let (mesh, _) = normalize_mesh(&shapes::cylinder_patch(8, 0.3, 0.3)).unwrap();
    let set = build_training_set(&mesh, &SamplingConfig::default()).unwrap();
    assert_eq!(set.len(), 420_000);
}

#[test]
fn field_vectors_end_on_the_surface() {
    let mesh = shapes::hemisphere_patch(10, 0.4);
    let set = build_training_set(&mesh, &SamplingConfig::with_counts(2000, 200)).unwrap();
    let bvh = Bvh::build(&mesh);
    for s in &set.samples {
        let foot = s.closest_point();
        assert!(bvh.closest_point(&mesh, &foot).distance < 1e-12);
        // Nothing on the surface is closer than the foot point.
        assert!((bvh.closest_point(&mesh, &s.x).distance - s.v.norm()).abs() < 1e-12);
    }
}

#[test]
fn mesh_field_matches_training_vectors() {
    let mesh = shapes::plane_patch(4, 0.4, 0.1);
    let set = build_training_set(&mesh, &SamplingConfig::with_counts(500, 50)).unwrap();
    let points: Vec<_> = set.samples.iter().map(|s| s.x).collect();
    let field = MeshField::new(&mesh).query(&points).unwrap();
    for (d, s) in field.iter().zip(&set.samples) {
        assert!((d.recompose() - s.v).norm() < 1e-12);
    }
}

#[test]
fn cache_survives_a_file_round_trip() {
    let mesh = shapes::cylinder_patch(6, 0.3, 0.2);
    let set = build_training_set(&mesh, &SamplingConfig::with_counts(300, 30)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.gdfs");
    write_sample_cache(&set, &path).unwrap();
    let back = read_sample_cache(&path, 4).unwrap();
    assert_eq!(back.len(), set.len());
    assert_eq!(back.shape_id, 4);
    for (a, b) in back.samples.iter().zip(&set.samples) {
        assert!((a.x - b.x).norm() < 1e-6 && (a.v - b.v).norm() < 1e-6);
    }
}
