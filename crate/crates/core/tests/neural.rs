use std::sync::OnceLock;

use rand::Rng;

use gdf_core::field::{build_training_set, Representation};
use gdf_core::geometry::{seeded_rng, shapes, Aabb, SamplingConfig, TriangleMesh};
use gdf_core::metrics::near_surface_field_error;
use gdf_core::neural::{
    train_autodecoder, train_single, AdamConfig, Checkpoint, MlpConfig, NeuralField, NeuralQuery,
    RegressionData, TrainConfig, TrainReport,
};

const HALF: f64 = 0.3;
const HEIGHT: f64 = 0.0123;
const ITERS: usize = 3000;
/// Long enough for the field directions, not just distances, to settle.
const LONG_ITERS: usize = 10_000;

fn patch() -> TriangleMesh {
    shapes::plane_patch(8, HALF, HEIGHT)
}

fn data(seed: u64, near: usize, uniform: usize) -> RegressionData {
    let mut cfg = SamplingConfig::with_counts(near, uniform);
    cfg.seed = seed;
    RegressionData::from(&build_training_set(&patch(), &cfg).unwrap())
}

fn desk_config(seed: u64) -> TrainConfig {
    TrainConfig {
        iterations: ITERS,
        batch_size: 2048,
        seed,
        optimizer: AdamConfig::with_learning_rate(1e-3),
        ..TrainConfig::default()
    }
}

fn desk_net(latent_len: usize) -> MlpConfig {
    MlpConfig::new(4, 128, 3, latent_len, 3)
}

/// Desk-scale GDF fits of the planar patch, shared between tests.
fn fitted() -> &'static (NeuralField, TrainReport) {
    static FIT: OnceLock<(NeuralField, TrainReport)> = OnceLock::new();
    FIT.get_or_init(|| {
        train_single(
            &data(1, 40_000, 2_000),
            desk_net(0),
            Representation::Gdf,
            &desk_config(0),
        )
        .unwrap()
    })
}

fn fitted_long() -> &'static NeuralField {
    static FIT: OnceLock<NeuralField> = OnceLock::new();
    FIT.get_or_init(|| {
        let cfg = TrainConfig {
            iterations: LONG_ITERS,
            ..desk_config(0)
        };
        train_single(
            &data(1, 40_000, 2_000),
            desk_net(0),
            Representation::Gdf,
            &cfg,
        )
        .unwrap()
        .0
    })
}

/// Mean `|u_pred − u_true|` on fresh near-surface points.
fn held_out_error(field: &NeuralField, code: Option<&[f32]>) -> f64 {
    let test = data(77, 5000, 0);
    let values = field.evaluate(&test.points, code).unwrap();
    let n = test.len();
    (0..n)
        .map(|i| {
            let v = test.vector(i);
            let u = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            (values.u[i] - u).abs()
        })
        .sum::<f64>()
        / n as f64
}

#[test]
fn planar_patch_fit_is_accurate_off_sample() {
    let err = held_out_error(&fitted().0, None);
    assert!(err < 5e-3, "held-out distance error {err}");
}

#[test]
fn planar_patch_field_error_on_the_lattice() {
    let err = near_surface_field_error(
        &NeuralQuery::new(fitted_long(), None),
        &patch(),
        64,
        Aabb::centered_cube(0.5),
        1.0,
    )
    .unwrap();
    assert!(err.grad_err < 0.1, "grad_err {}", err.grad_err);
}

#[test]
fn loss_decreases_over_the_run() {
    let report = &fitted().1;
    assert!(report.moving_average(ITERS - 1, 100) < report.moving_average(99, 100));
}

#[test]
fn predicted_direction_matches_distance_slope() {
    let field = fitted_long();
    let sigma = SamplingConfig::default().sigma_near[0] * patch().bounds().diagonal();
    // Near-surface queries over the sheet interior, clear of the non-differentiable
    // band around the sheet itself.
    let mut rng = seeded_rng(5);
    let points: Vec<[f64; 3]> = (0..2000)
        .map(|_| {
            let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let lim = HALF - 2.0 * sigma;
            [
                rng.random_range(-lim..lim),
                rng.random_range(-lim..lim),
                HEIGHT + side * rng.random_range(2.0 * sigma..6.0 * sigma),
            ]
        })
        .collect();
    let norm_at = |p: [f64; 3]| {
        let out = field.forward(&p, None).unwrap();
        out.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt()
    };
    let flat: Vec<f64> = points.iter().flatten().copied().collect();
    let values = field.evaluate(&flat, None).unwrap();
    let h = 1e-3;
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let slope: Vec<f64> = (0..3)
            .map(|k| {
                let (mut a, mut b) = (*p, *p);
                a[k] += h;
                b[k] -= h;
                (norm_at(a) - norm_at(b)) / (2.0 * h)
            })
            .collect();
        let s = slope.iter().map(|x| x * x).sum::<f64>().sqrt();
        let g = values.gradient(i);
        // The field vector points downhill in distance.
        let cos = -(0..3).map(|k| g[k] * slope[k]).sum::<f64>() / s;
        total += cos.clamp(-1.0, 1.0).acos().to_degrees();
    }
    let mean = total / points.len() as f64;
    assert!(mean < 15.0, "mean angular error {mean}°");
}

#[test]
fn training_is_deterministic() {
    let d = data(3, 3000, 100);
    let cfg = TrainConfig {
        iterations: 50,
        batch_size: 256,
        seed: 9,
        ..desk_config(9)
    };
    let net = MlpConfig::new(2, 32, 3, 0, 3);
    let (a, ra) = train_single(&d, net, Representation::Gdf, &cfg).unwrap();
    let (b, rb) = train_single(&d, net, Representation::Gdf, &cfg).unwrap();
    assert_eq!(ra.losses, rb.losses);
    assert_eq!(Checkpoint::new(a).to_bytes(), Checkpoint::new(b).to_bytes());
}

#[test]
fn zero_iterations_keep_the_initial_weights() {
    let d = data(3, 500, 0);
    let cfg = TrainConfig {
        iterations: 0,
        ..desk_config(4)
    };
    let net = MlpConfig::new(2, 16, 3, 0, 1);
    let (a, report) = train_single(&d, net, Representation::Udf, &cfg).unwrap();
    assert!(report.losses.is_empty());
    let (b, _) = train_single(&d, net, Representation::Udf, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a
        .evaluate(&d.points, None)
        .unwrap()
        .u
        .iter()
        .all(|u| u.is_finite()));
}

#[test]
fn single_shape_autodecoder_matches_plain_fit() {
    let train = data(1, 40_000, 2_000);
    let (field, codes, _) =
        train_autodecoder(&[train], desk_net(8), Representation::Gdf, &desk_config(0)).unwrap();
    let ad = held_out_error(&field, Some(&codes.codes[0]));
    let single = held_out_error(&fitted().0, None);
    assert!(ad <= 1.1 * single, "auto-decoder {ad} vs single {single}");
}
