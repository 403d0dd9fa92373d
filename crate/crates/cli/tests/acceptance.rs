//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line with its measurements
//! before asserting. Criteria run one at a time so the reported runtimes are their own.

use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use gdf_core::demo2d::{run_demo, Contour2D, Demo2dConfig};
use gdf_core::field::{build_training_set, decompose, FnField, Representation};
use gdf_core::geometry::{
    closest_point_on_triangle, normalize_mesh, seeded_rng, shapes, Aabb, Bvh, SamplingConfig,
    SurfaceSampler, TriangleMesh,
};
use gdf_core::meshing::{
    evaluate_grid, evaluate_neural_grid, extract_mesh, hole_metric, ExtractionConfig,
};
use gdf_core::metrics::{chamfer_l2, hausdorff_to_surface, near_surface_field_error, FieldError};
use gdf_core::neural::{
    fit_latent, mean_loss, parameter_gradients, train_autodecoder, train_single, AdamConfig,
    LatentFitConfig, Loss, LossWeights, Mlp, MlpConfig, NeuralField, NeuralQuery, RegressionData,
    TrainConfig,
};
use nalgebra::{Point3, Vector3};
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

static SERIAL: Mutex<()> = Mutex::new(());

fn report(id: u32, name: &str, pass: bool, elapsed: Duration, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!(
        "criterion {id:>2} [{status}] {name} ({:.1}s): {detail}",
        elapsed.as_secs_f64()
    );
}

/// Runs `body` under the serial lock, prints the verdict line and asserts it.
fn criterion(id: u32, name: &str, budget: Option<Duration>, body: impl FnOnce() -> (bool, String)) {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let (ok, mut detail) = body();
    let elapsed = start.elapsed();
    let in_time = budget.is_none_or(|b| elapsed < b);
    if !in_time {
        detail.push_str(&format!(
            "; over the {:.0}s budget",
            budget.unwrap().as_secs_f64()
        ));
    }
    report(id, name, ok && in_time, elapsed, &detail);
    assert!(ok && in_time, "criterion {id} failed: {detail}");
}

fn desk_train(seed: u64, loss: Loss) -> TrainConfig {
    TrainConfig {
        iterations: 3000,
        batch_size: 2048,
        seed,
        loss,
        optimizer: AdamConfig::with_learning_rate(1e-3),
        ..TrainConfig::default()
    }
}

#[test]
fn c01_geometry_oracle() {
    criterion(
        1,
        "BVH nearest point equals brute force",
        Some(Duration::from_secs(5)),
        || {
            let mesh = shapes::hemisphere_patch(7, 0.4);
            assert!(mesh.num_triangles() <= 500);
            let bvh = Bvh::build(&mesh);
            let mut rng = seeded_rng(1);
            let mut worst = 0.0f64;
            for _ in 0..1000 {
                let q = Point3::new(
                    rng.random_range(-0.6..0.6),
                    rng.random_range(-0.6..0.6),
                    rng.random_range(-0.3..0.7),
                );
                let exact = (0..mesh.num_triangles())
                    .map(|t| {
                        let [a, b, c] = mesh.triangle(t);
                        (closest_point_on_triangle(&q, &a, &b, &c) - q).norm()
                    })
                    .fold(f64::INFINITY, f64::min);
                let got = bvh.closest_point(&mesh, &q).distance;
                worst = worst.max((got - exact).abs() / exact.max(f64::MIN_POSITIVE));
            }
            (
                worst <= 1e-9,
                format!(
                    "{} triangles, 1000 queries, max relative error {worst:.2e}",
                    mesh.num_triangles()
                ),
            )
        },
    );
}

#[test]
fn c02_field_algebra() {
    criterion(2, "decompose/recompose and null gradient", None, || {
        let mut rng = seeded_rng(2);
        let mut worst = 0.0f64;
        for _ in 0..10_000 {
            let scale = 10f64.powf(rng.random_range(-6.0..1.0));
            let v: Vector3<f64> = Vector3::from_fn(|_, _| StandardNormal.sample(&mut rng)) * scale;
            let d = decompose(&v);
            worst = worst.max((d.u * d.g - v).norm());
        }
        let zero = decompose(&Vector3::zeros());
        let null_ok = zero.u == 0.0 && zero.g == Vector3::zeros();
        (
            worst <= 1e-12 && null_ok,
            format!("max |u·g − v| = {worst:.2e} over 10k vectors; u = 0 gives g = 0: {null_ok}"),
        )
    });
}

/// Smallest |pre-activation| of any hidden unit, for staying clear of rectifier kinks.
fn min_hidden_preactivation(mlp: &Mlp<f64>, x: &Array2<f64>) -> f64 {
    let mut a = x.clone();
    let mut least = f64::INFINITY;
    for layer in &mlp.layers[..mlp.layers.len() - 1] {
        let z = a.dot(&layer.weight.t()) + &layer.bias;
        least = least.min(z.iter().fold(f64::INFINITY, |m, v| m.min(v.abs())));
        a = z.mapv(|v| v.max(0.0));
    }
    least
}

#[test]
fn c03_autodiff_oracle() {
    criterion(
        3,
        "parameter gradients match central differences",
        Some(Duration::from_secs(10)),
        || {
            let h = 1e-5;
            let margin = 1e-3;
            let cases = [
                ("gdf l1", Representation::Gdf, Loss::L1),
                ("udf l1", Representation::Udf, Loss::L1),
                ("csp l1", Representation::Csp, Loss::L1),
                (
                    "gdf composite",
                    Representation::Gdf,
                    Loss::Composite(LossWeights::REFERENCE),
                ),
            ];
            let mut rng = seeded_rng(3);
            let mut worst = 0.0f64;
            let mut checked = 0;
            for (_, repr, loss) in &cases {
                let config = MlpConfig::new(2, 8, 3, 0, repr.output_dim(3));
                let mut mlp = Mlp::<f64>::init(config, &mut rng).unwrap();
                let mut points = 0;
                while points < 100 {
                    let x = Array2::from_shape_fn((1, 3), |_| rng.random_range(-0.5..0.5));
                    let target: Vec<f64> = (0..config.output_dim)
                        .map(|_| rng.random_range(-0.5..0.5))
                        .collect();
                    let out = mlp.forward(x.view()).unwrap();
                    let kink_free = out.iter().zip(&target).all(|(p, t)| (p - t).abs() > margin)
                        && min_hidden_preactivation(&mlp, &x) > margin;
                    if !kink_free {
                        continue;
                    }
                    let (_, grads) = parameter_gradients(&mlp, &x, &target, loss).unwrap();
                    let mut num = Vec::new();
                    let mut ana = Vec::new();
                    for l in 0..mlp.layers.len() {
                        for idx in 0..mlp.layers[l].weight.len() {
                            let (r, c) = (
                                idx / mlp.layers[l].weight.ncols(),
                                idx % mlp.layers[l].weight.ncols(),
                            );
                            let w0 = mlp.layers[l].weight[[r, c]];
                            mlp.layers[l].weight[[r, c]] = w0 + h;
                            let up = mean_loss(&mlp, &x, &target, loss).unwrap();
                            mlp.layers[l].weight[[r, c]] = w0 - h;
                            let down = mean_loss(&mlp, &x, &target, loss).unwrap();
                            mlp.layers[l].weight[[r, c]] = w0;
                            num.push((up - down) / (2.0 * h));
                            ana.push(grads[l].weight[[r, c]]);
                        }
                        for k in 0..mlp.layers[l].bias.len() {
                            let b0 = mlp.layers[l].bias[k];
                            mlp.layers[l].bias[k] = b0 + h;
                            let up = mean_loss(&mlp, &x, &target, loss).unwrap();
                            mlp.layers[l].bias[k] = b0 - h;
                            let down = mean_loss(&mlp, &x, &target, loss).unwrap();
                            mlp.layers[l].bias[k] = b0;
                            num.push((up - down) / (2.0 * h));
                            ana.push(grads[l].bias[k]);
                        }
                    }
                    let scale = ana.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
                    let err = num
                        .iter()
                        .zip(&ana)
                        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
                        / scale;
                    worst = worst.max(err);
                    points += 1;
                    checked += 1;
                }
            }
            let names: Vec<&str> = cases.iter().map(|c| c.0).collect();
            (
                worst < 1e-4,
                format!(
                    "{checked} points over [{}], max relative error {worst:.2e}",
                    names.join(", ")
                ),
            )
        },
    );
}

#[test]
fn c04_contour_demo() {
    criterion(
        4,
        "2D contour: GDF covers the open contour",
        Some(Duration::from_secs(300)),
        || {
            let config = Demo2dConfig {
                depth: 4,
                width: 128,
                iterations: 3000,
                batch_size: 2048,
                learning_rate: 1e-3,
                ..Demo2dConfig::default()
            };
            let r = run_demo(&Contour2D::bunny(), &config).unwrap();
            let gdf = r.get(Representation::Gdf).unwrap();
            let udf = r.get(Representation::Udf).unwrap();
            let ok = gdf.coverage >= 0.99 && gdf.coverage >= udf.coverage && gdf.flip_product < 0.0;
            (
            ok,
            format!(
                "coverage gdf {:.4} udf {:.4} ({} contour pixels); gdf x-gradient flip product {:.3}",
                gdf.coverage, udf.coverage, r.contour_pixels, gdf.flip_product
            ),
        )
        },
    );
}

fn cylinder_data() -> (TriangleMesh, RegressionData) {
    let mesh = shapes::cylinder_patch(16, 0.3, 0.3);
    let mut cfg = SamplingConfig::with_counts(40_000, 2_000);
    cfg.seed = 1;
    let data = RegressionData::from(&build_training_set(&mesh, &cfg).unwrap());
    (mesh, data)
}

fn fit_error(
    mesh: &TriangleMesh,
    data: &RegressionData,
    repr: Representation,
    cfg: &TrainConfig,
) -> FieldError {
    let net = MlpConfig::new(4, 128, 3, 0, repr.output_dim(3));
    let (field, _) = train_single(data, net, repr, cfg).unwrap();
    near_surface_field_error(
        &NeuralQuery::new(&field, None),
        mesh,
        64,
        Aabb::centered_cube(0.5),
        1.0,
    )
    .unwrap()
}

#[test]
fn c05_convergence_trend() {
    criterion(
        5,
        "GDF distance error at most UDF's",
        Some(Duration::from_secs(600)),
        || {
            let (mesh, data) = cylinder_data();
            let mut rows = Vec::new();
            let mut wins = 0;
            for seed in 0..3 {
                let gdf = fit_error(
                    &mesh,
                    &data,
                    Representation::Gdf,
                    &desk_train(seed, Loss::L1),
                )
                .dist_err;
                let udf = fit_error(
                    &mesh,
                    &data,
                    Representation::Udf,
                    &desk_train(seed, Loss::L1),
                )
                .dist_err;
                wins += usize::from(gdf <= udf);
                rows.push(format!("seed {seed}: gdf {gdf:.3e} udf {udf:.3e}"));
            }
            (wins == 3, format!("{wins}/3 seeds; {}", rows.join("; ")))
        },
    );
}

#[test]
fn c06_composite_loss_trend() {
    criterion(
        6,
        "composite loss lowers gradient error",
        Some(Duration::from_secs(900)),
        || {
            let (mesh, data) = cylinder_data();
            let mut rows = Vec::new();
            let mut wins = 0;
            for seed in 0..3 {
                let composite = Loss::Composite(LossWeights::REFERENCE);
                let with = fit_error(
                    &mesh,
                    &data,
                    Representation::Gdf,
                    &desk_train(seed, composite),
                )
                .grad_err;
                let plain = fit_error(
                    &mesh,
                    &data,
                    Representation::Gdf,
                    &desk_train(seed, Loss::L1),
                )
                .grad_err;
                wins += usize::from(with < plain);
                rows.push(format!("seed {seed}: composite {with:.4} plain {plain:.4}"));
            }
            (wins >= 2, format!("{wins}/3 seeds; {}", rows.join("; ")))
        },
    );
}

const SPHERE_RADIUS: f64 = 0.3;
const PATCH_HALF: f64 = 0.3;
const PATCH_HEIGHT: f64 = 0.0123;

fn sphere_field(p: &Point3<f64>) -> Vector3<f64> {
    let n = p.coords.norm();
    if n == 0.0 {
        Vector3::new(SPHERE_RADIUS, 0.0, 0.0)
    } else {
        p.coords * ((SPHERE_RADIUS - n) / n)
    }
}

fn patch_field(p: &Point3<f64>) -> Vector3<f64> {
    Point3::new(
        p.x.clamp(-PATCH_HALF, PATCH_HALF),
        p.y.clamp(-PATCH_HALF, PATCH_HALF),
        PATCH_HEIGHT,
    ) - p
}

fn sphere_points(n: usize) -> Vec<Point3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Point3::new(r * phi.cos(), r * phi.sin(), z) * SPHERE_RADIUS
        })
        .collect()
}

fn patch_points(n: usize) -> Vec<Point3<f64>> {
    let gt = shapes::plane_patch(8, PATCH_HALF, PATCH_HEIGHT);
    let sampler = SurfaceSampler::new(&gt).unwrap();
    sampler
        .sample_n(n, &mut seeded_rng(1))
        .into_iter()
        .map(|s| s.0)
        .collect()
}

fn mesh_field(field: impl Fn(&Point3<f64>) -> Vector3<f64> + Sync, res: usize) -> TriangleMesh {
    let grid = evaluate_grid(&FnField(field), [res; 3], Aabb::centered_cube(0.5)).unwrap();
    extract_mesh(&grid, &ExtractionConfig::default()).unwrap()
}

fn sphere_hausdorff(mesh: &TriangleMesh) -> f64 {
    hausdorff_to_surface(
        mesh,
        &sphere_points(20_000),
        |p| (p.coords.norm() - SPHERE_RADIUS).abs(),
        20_000,
        0,
    )
    .unwrap()
}

fn patch_hausdorff(mesh: &TriangleMesh) -> f64 {
    hausdorff_to_surface(
        mesh,
        &patch_points(20_000),
        |p| patch_field(p).norm(),
        20_000,
        0,
    )
    .unwrap()
}

#[test]
fn c07_meshing_oracle() {
    criterion(
        7,
        "analytic sphere and open patch meshing",
        Some(Duration::from_secs(60)),
        || {
            let res = 64;
            let cell = 1.0 / res as f64;
            let sphere = mesh_field(sphere_field, res);
            let h = sphere_hausdorff(&sphere);
            let closed = sphere.euler_characteristic() == 2 && sphere.boundary_edge_count() == 0;
            let patch = mesh_field(patch_field, res);
            let coverage = hole_metric(&patch, &patch_points(20_000), cell);
            let sheets = patch.connected_components();
            (
            closed && h < 2.0 * cell && sheets == 1 && coverage >= 0.99,
            format!(
                "sphere: chi {} boundary edges {} hausdorff {:.2} cells; patch: {sheets} sheet(s), coverage {coverage:.4}",
                sphere.euler_characteristic(),
                sphere.boundary_edge_count(),
                h / cell
            ),
        )
        },
    );
}

#[test]
fn c08_refinement_monotonicity() {
    criterion(
        8,
        "Hausdorff error non-increasing with resolution",
        None,
        || {
            let resolutions = [32usize, 64, 128];
            let sphere: Vec<f64> = resolutions
                .iter()
                .map(|&r| sphere_hausdorff(&mesh_field(sphere_field, r)))
                .collect();
            let patch: Vec<f64> = resolutions
                .iter()
                .map(|&r| patch_hausdorff(&mesh_field(patch_field, r)))
                .collect();
            let monotone = |v: &[f64]| v.windows(2).all(|w| w[1] <= w[0]);
            let fmt = |v: &[f64]| {
                v.iter()
                    .map(|x| format!("{x:.2e}"))
                    .collect::<Vec<_>>()
                    .join(" > ")
            };
            (
                monotone(&sphere) && monotone(&patch),
                format!("32/64/128: sphere {}; patch {}", fmt(&sphere), fmt(&patch)),
            )
        },
    );
}

fn mesh_code(field: &NeuralField, code: &[f32]) -> TriangleMesh {
    let grid = evaluate_neural_grid(field, Some(code), [64; 3], Aabb::centered_cube(0.55)).unwrap();
    extract_mesh(&grid, &ExtractionConfig::default()).unwrap()
}

fn cd_x1e4(pred: &TriangleMesh, gt: &TriangleMesh) -> f64 {
    if pred.is_empty() {
        return f64::INFINITY;
    }
    chamfer_l2(pred, gt, 30_000, 0).unwrap() * 1e4
}

#[test]
fn c09_latent_fit_trend() {
    criterion(
        9,
        "latent fit: 10K points no worse than 3K; code swap",
        Some(Duration::from_secs(1200)),
        || {
            let meshes: Vec<TriangleMesh> = [
                shapes::plane_patch(16, 0.5, 0.0),
                shapes::hemisphere_patch(12, 0.5),
                shapes::cylinder_patch(16, 0.4, 0.5),
            ]
            .iter()
            .map(|m| normalize_mesh(m).unwrap().0)
            .collect();
            let data: Vec<RegressionData> = meshes
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    let mut cfg = SamplingConfig::with_counts(30_000, 1_500);
                    cfg.seed = 10 + i as u64;
                    RegressionData::from(&build_training_set(m, &cfg).unwrap())
                })
                .collect();
            let net = MlpConfig::new(4, 128, 3, 32, 3);
            let (field, codes, _) =
                train_autodecoder(&data, net, Representation::Gdf, &desk_train(0, Loss::L1))
                    .unwrap();

            let mut swap_ok = true;
            let mut trend_ok = true;
            let mut rows = Vec::new();
            for (i, gt) in meshes.iter().enumerate() {
                let cds: Vec<f64> = codes
                    .codes
                    .iter()
                    .map(|c| cd_x1e4(&mesh_code(&field, c), gt))
                    .collect();
                swap_ok &= (0..cds.len()).all(|j| j == i || cds[i] < cds[j]);

                let sampler = SurfaceSampler::new(gt).unwrap();
                let mut mean_cd = [0.0; 2];
                for (slot, n) in [3000usize, 10_000].into_iter().enumerate() {
                    let cloud: Vec<Point3<f64>> = sampler
                        .sample_n(n, &mut seeded_rng(99))
                        .into_iter()
                        .map(|s| s.0)
                        .collect();
                    for fit_seed in 0..3 {
                        let cfg = LatentFitConfig {
                            batch_size: 2048,
                            n_queries: 20_000,
                            seed: fit_seed,
                            ..LatentFitConfig::default()
                        };
                        let fit = fit_latent(&cloud, &field, &cfg).unwrap();
                        mean_cd[slot] += cd_x1e4(&mesh_code(&field, &fit.code), gt) / 3.0;
                    }
                }
                trend_ok &= mean_cd[1] <= mean_cd[0];
                rows.push(format!(
                    "shape {i}: own/other codes CD [{}], fit CD 3K {:.4} 10K {:.4}",
                    cds.iter()
                        .map(|c| format!("{c:.2}"))
                        .collect::<Vec<_>>()
                        .join(", "),
                    mean_cd[0],
                    mean_cd[1]
                ));
            }
            (
                swap_ok && trend_ok,
                format!("code swap {swap_ok}, trend {trend_ok}; {}", rows.join("; ")),
            )
        },
    );
}

fn run_cli(args: &[&str]) -> i32 {
    gdf_cli::main_with_args(std::iter::once("gdf").chain(args.iter().copied()))
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn c10_determinism() {
    criterion(
        10,
        "fit checkpoints and eval rows are reproducible",
        None,
        || {
            let dir = tempfile::tempdir().unwrap();
            let p = |name: &str| dir.path().join(name);
            gdf_core::geometry::save_mesh(&shapes::hemisphere_patch(8, 0.4), p("gt.obj")).unwrap();
            gdf_core::geometry::save_mesh(&shapes::uv_sphere(8, 0.38), p("pred.obj")).unwrap();
            let mut codes = vec![run_cli(&[
                "sample",
                path_str(&p("gt.obj")),
                "-o",
                path_str(&p("s.gdfs")),
                "--near",
                "5000",
                "--uniform",
                "250",
                "--seed",
                "4",
            ])];
            for out in ["a.gdfn", "b.gdfn"] {
                codes.push(run_cli(&[
                    "fit",
                    path_str(&p("s.gdfs")),
                    "-o",
                    path_str(&p(out)),
                    "--depth",
                    "3",
                    "--width",
                    "64",
                    "--iters",
                    "200",
                    "--batch",
                    "512",
                    "--lr",
                    "0.001",
                    "--seed",
                    "7",
                ]));
            }
            for out in ["a.csv", "b.csv"] {
                codes.push(run_cli(&[
                    "eval",
                    path_str(&p("pred.obj")),
                    "--gt",
                    path_str(&p("gt.obj")),
                    "-o",
                    path_str(&p(out)),
                    "--samples",
                    "5000",
                    "--seed",
                    "3",
                ]));
            }
            let read = |n: &str| std::fs::read(p(n)).unwrap_or_default();
            let same_ckpt = !read("a.gdfn").is_empty() && read("a.gdfn") == read("b.gdfn");
            let same_rows = !read("a.csv").is_empty() && read("a.csv") == read("b.csv");
            (
            codes.iter().all(|&c| c == 0) && same_ckpt && same_rows,
            format!(
                "exit codes {codes:?}; checkpoints identical: {same_ckpt} ({} bytes); CSV rows identical: {same_rows}",
                read("a.gdfn").len()
            ),
        )
        },
    );
}
