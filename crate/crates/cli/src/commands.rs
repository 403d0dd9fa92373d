use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gdf_core::demo2d::{run_demo, Contour2D, Demo2dConfig};
use gdf_core::field::{build_training_set, read_sample_cache, write_sample_cache, Representation};
use gdf_core::geometry::{
    load_mesh, load_raw, normalize_mesh, save_mesh, seeded_rng, Aabb, NormalizeTransform,
    SamplingConfig, SurfaceSampler, TriangleMesh,
};
use gdf_core::meshing::{evaluate_grid, extract_mesh, ExtractionConfig, FieldGrid};
use gdf_core::metrics::{near_surface_field_error, EvalReport};
use gdf_core::neural::{
    fit_latent, train_autodecoder, train_single, AdamConfig, Checkpoint, LatentFitConfig,
    LatentTable, Loss, LossWeights, MlpConfig, NeuralQuery, RegressionData, TrainConfig,
};
use nalgebra::{Point3, Vector3};
use rand::seq::SliceRandom;
use serde_json::{json, Value};

use crate::manifest::{manifest_path, sha256_file, RunManifest};
use crate::settings::Settings;
use crate::{
    CliError, Command, Demo2dArgs, EvalArgs, FitArgs, FitLatentArgs, GlobalArgs, MeshArgs, NetArgs,
    SampleArgs, TrainAutodecoderArgs,
};

pub(crate) fn dispatch(
    command: &Command,
    global: &GlobalArgs,
    settings: &mut Settings,
) -> Result<(), CliError> {
    match command {
        Command::Sample(a) => cmd_sample(a, global, settings),
        Command::Fit(a) => cmd_fit(a, global, settings),
        Command::TrainAutodecoder(a) => cmd_train_autodecoder(a, global, settings),
        Command::FitLatent(a) => cmd_fit_latent(a, global, settings),
        Command::Mesh(a) => cmd_mesh(a, global, settings),
        Command::Eval(a) => cmd_eval(a, global, settings),
        Command::Demo2d(a) => cmd_demo2d(a, global, settings),
    }
    .map(drop)
}

/// Collects what a command read and wrote, then writes the manifest.
struct Run {
    command: &'static str,
    start: Instant,
    seed: u64,
    inputs: Vec<(PathBuf, String)>,
    extra: BTreeMap<String, Value>,
}

impl Run {
    fn start(
        command: &'static str,
        global: &GlobalArgs,
        settings: &mut Settings,
    ) -> Result<Self, CliError> {
        let seed = settings.get("seed", global.seed, 0u64)?;
        Ok(Self {
            command,
            start: Instant::now(),
            seed,
            inputs: Vec::new(),
            extra: BTreeMap::new(),
        })
    }

    fn input(&mut self, path: &Path) -> Result<(), CliError> {
        if !path.exists() {
            return Err(CliError::Usage(format!(
                "input not found: {}",
                path.display()
            )));
        }
        let hash = sha256_file(path)?;
        self.inputs.push((path.to_path_buf(), hash));
        Ok(())
    }

    fn finish(self, settings: &Settings, outputs: Vec<PathBuf>) -> Result<RunManifest, CliError> {
        let manifest = RunManifest {
            command: self.command.to_string(),
            config: settings.resolved().clone(),
            seed: self.seed,
            inputs: self.inputs,
            outputs: outputs.clone(),
            wall_time: self.start.elapsed(),
            extra: self.extra,
        };
        manifest.write(&manifest_path(&outputs[0]))?;
        Ok(manifest)
    }
}

fn transform_json(t: &NormalizeTransform) -> Value {
    json!({ "scale": t.scale, "translation": [t.translation.x, t.translation.y, t.translation.z] })
}

/// Normalization recorded by `sample` in the cache's manifest; identity when absent.
fn sample_transform(samples: &Path) -> Result<NormalizeTransform, CliError> {
    let path = manifest_path(samples);
    let Ok(text) = std::fs::read_to_string(&path) else {
        return Ok(NormalizeTransform::identity());
    };
    let bad = || CliError::Usage(format!("malformed transform in {}", path.display()));
    let v: Value = serde_json::from_str(&text).map_err(|_| bad())?;
    let Some(t) = v.get("transform") else {
        return Ok(NormalizeTransform::identity());
    };
    let scale = t["scale"].as_f64().ok_or_else(bad)?;
    let tr: Vec<f64> = t["translation"]
        .as_array()
        .ok_or_else(bad)?
        .iter()
        .map(|x| x.as_f64().ok_or_else(bad))
        .collect::<Result<_, _>>()?;
    if tr.len() != 3 {
        return Err(bad());
    }
    Ok(NormalizeTransform {
        scale,
        translation: Vector3::new(tr[0], tr[1], tr[2]),
    })
}

pub fn cmd_sample(
    args: &SampleArgs,
    global: &GlobalArgs,
    settings: &mut Settings,
) -> Result<RunManifest, CliError> {
    let mut run = Run::start("sample", global, settings)?;
    run.input(&args.mesh)?;
    let defaults = SamplingConfig::default();
    let config = SamplingConfig {
        n_near_surface: settings.get("near", args.near, defaults.n_near_surface)?,
        n_uniform: settings.get("uniform", args.uniform, defaults.n_uniform)?,
        uniform_half_extent: settings.get("extent", args.extent, defaults.uniform_half_extent)?,
        seed: run.seed,
        ..defaults
    };
    let (mesh, report) = load_mesh(&args.mesh)?;
    let (normalized, transform) = normalize_mesh(&mesh)?;
    let set = build_training_set(&normalized, &config)?;
    write_sample_cache(&set, &args.out)?;
    run.extra
        .insert("transform".into(), transform_json(&transform));
    run.extra.insert("records".into(), json!(set.len()));
    run.extra.insert(
        "degenerate_dropped".into(),
        json!(report.degenerate_dropped),
    );
    println!("{} records -> {}", set.len(), args.out.display());
    run.finish(settings, vec![args.out.clone()])
}

fn parse_repr(s: &str) -> Result<Representation, CliError> {
    s.parse()
        .map_err(|e: gdf_core::Error| CliError::Usage(e.to_string()))
}

struct Recipe {
    mlp: MlpConfig,
    representation: Representation,
    train: TrainConfig,
}

fn net_recipe(
    net: &NetArgs,
    latent_len: usize,
    seed: u64,
    settings: &mut Settings,
) -> Result<Recipe, CliError> {
    let train_defaults = TrainConfig::default();
    let representation = parse_repr(&settings.get("repr", net.repr.clone(), "gdf".to_string())?)?;
    let depth = settings.get("depth", net.depth, 8)?;
    let width = settings.get("width", net.width, 512)?;
    let iterations = settings.get("iters", net.iters, train_defaults.iterations)?;
    let batch_size = settings.get("batch", net.batch, train_defaults.batch_size)?;
    let lr = settings.get("lr", net.lr, AdamConfig::default().learning_rate)?;
    let loss = match settings
        .get("loss", net.loss.clone(), "l1".to_string())?
        .as_str()
    {
        "l1" => Loss::L1,
        "composite" => {
            let w = LossWeights::REFERENCE;
            Loss::Composite(LossWeights::new(
                settings.get("lambda-adf", net.lambda_adf, w.lambda_adf)?,
                settings.get("lambda-grad", net.lambda_grad, w.lambda_grad)?,
                settings.get("lambda-udf", net.lambda_udf, w.lambda_udf)?,
            )?)
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown loss '{other}' (expected l1 or composite)"
            )))
        }
    };
    Ok(Recipe {
        mlp: MlpConfig::new(depth, width, 3, latent_len, representation.output_dim(3)),
        representation,
        train: TrainConfig {
            iterations,
            batch_size,
            seed,
            loss,
            optimizer: AdamConfig::with_learning_rate(lr),
            ..train_defaults
        },
    })
}

pub fn cmd_fit(
    args: &FitArgs,
    global: &GlobalArgs,
    settings: &mut Settings,
) -> Result<RunManifest, CliError> {
    let mut run = Run::start("fit", global, settings)?;
    run.input(&args.samples)?;
    let recipe = net_recipe(&args.net, 0, run.seed, settings)?;
    let set = read_sample_cache(&args.samples, 0)?;
    let data = RegressionData::from(&set);
    let (field, report) = train_single(&data, recipe.mlp, recipe.representation, &recipe.train)?;
    let mut checkpoint = Checkpoint::new(field);
    checkpoint.transform = sample_transform(&args.samples)?;
    checkpoint.save(&args.out)?;
    if let Some(loss) = report.final_loss() {
        println!("final loss {loss:.6e}");
        run.extra.insert("final_loss".into(), json!(loss));
    }
    run.finish(settings, vec![args.out.clone()])
}

pub fn cmd_train_autodecoder(
    args: &TrainAutodecoderArgs,
    global: &GlobalArgs,
    settings: &mut Settings,
) -> Result<RunManifest, CliError> {
    let mut run = Run::start("train-autodecoder", global, settings)?;
    let entries = std::fs::read_dir(&args.samples)
        .map_err(|e| CliError::Usage(format!("cannot list {}: {e}", args.samples.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "gdfs"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Usage(format!(
            "no .gdfs files in {}",
            args.samples.display()
        )));
    }
    let latent = settings.get("latent", args.latent, 256)?;
    let mut recipe = net_recipe(&args.net, latent, run.seed, settings)?;
    recipe.train.latent_regularization = settings.get("code-reg", args.code_reg, 0.0)?;
    let mut shapes = Vec::with_capacity(files.len());
    for (i, f) in files.iter().enumerate() {
        run.input(f)?;
        shapes.push(RegressionData::from(&read_sample_cache(f, i as u32)?));
    }
    let (field, latents, report) =
        train_autodecoder(&shapes, recipe.mlp, recipe.representation, &recipe.train)?;
    let mut checkpoint = Checkpoint::new(field);
    checkpoint.latents = latents;
    checkpoint.save(&args.out)?;
    let names: Vec<String> = files.iter().map(|p| p.display().to_string()).collect();
    run.extra.insert("shapes".into(), json!(names));
    if let Some(loss) = report.final_loss() {
        println!("{} shapes, final loss {loss:.6e}", files.len());
        run.extra.insert("final_loss".into(), json!(loss));
    }
    run.finish(settings, vec![args.out.clone()])
}

/// Loads a cloud (vertices of a face-less file, or surface samples of a mesh) of at
/// most `n` points.
fn load_cloud(path: &Path, n: usize, seed: u64) -> Result<Vec<Point3<f64>>, CliError> {
    let raw = load_raw(path)?;
    let mut rng = seeded_rng(seed);
    if !raw.triangles.is_empty() {
        let (mesh, _) = load_mesh(path)?;
        let sampler = SurfaceSampler::new(&mesh)?;
        return Ok(sampler
            .sample_n(n, &mut rng)
            .into_iter()
            .map(|(p, _)| p)
            .collect());
    }
    let mut points = raw.vertices;
    if points.len() > n {
        points.shuffle(&mut rng);
        points.truncate(n);
    }
    Ok(points)
}

/// Same normalization as meshes get: box centred, longest side 1.
fn normalize_points(points: &[Point3<f64>]) -> Result<NormalizeTransform, CliError> {
    let bounds = Aabb::from_points(points.iter());
    let longest = bounds.extent().max();
    if bounds.is_empty() || !(longest > 0.0) || !longest.is_finite() {
        return Err(CliError::Usage(
            "point cloud has zero or non-finite extent".into(),
        ));
    }
    Ok(NormalizeTransform {
        scale: 1.0 / longest,
        translation: -bounds.center().coords,
    })
}

fn append_csv(path: &Path, row: &str) -> Result<(), CliError> {
    let fresh = !path.exists();
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
    let text = if fresh {
        format!("{}\n{row}\n", EvalReport::CSV_HEADER)
    } else {
        format!("{row}\n")
    };
    f.write_all(text.as_bytes()).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn file_stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Meshes a checkpoint in its training space and maps the result back.
fn mesh_checkpoint(
    checkpoint: &Checkpoint,
    code: Option<&[f32]>,
    resolution: usize,
    extent: f64,
    extraction: &ExtractionConfig,
) -> Result<(TriangleMesh, FieldGrid), CliError> {
    let query = NeuralQuery::new(&checkpoint.field, code);
    let grid = evaluate_grid(&query, [resolution; 3], Aabb::centered_cube(extent))?;
    let mesh = extract_mesh(&grid, extraction)?;
    let t = checkpoint.transform;
    Ok((mesh.map_vertices(|p| t.invert(p)), grid))
}

fn select_code(checkpoint: &Checkpoint, index: usize) -> Result<Option<&[f32]>, CliError> {
    if checkpoint.field.config().latent_len == 0 {
        return Ok(None);
    }
    checkpoint.latents.get(index).map(Some).ok_or_else(|| {
        CliError::Usage(format!(
            "latent index {index} out of range ({} codes)",
            checkpoint.latents.len()
        ))
    })
}

pub fn cmd_fit_latent(
    args: &FitLatentArgs,
    global: &GlobalArgs,
    settings: &mut Settings,
) -> Result<RunManifest, CliError> {
    let mut run = Run::start("fit-latent", global, settings)?;
    run.input(&args.checkpoint)?;
    run.input(&args.cloud)?;
    let defaults = LatentFitConfig::default();
    let n_points = settings.get("points", args.points, 10_000)?;
    let config = LatentFitConfig {
        iterations: settings.get("iters", args.iters, defaults.iterations)?,
        batch_size: settings.get("batch", args.batch, defaults.batch_size)?,
        n_queries: settings.get("queries", args.queries, defaults.n_queries)?,
        optimizer: AdamConfig::with_learning_rate(settings.get(
            "lr",
            args.lr,
            defaults.optimizer.learning_rate,
        )?),
        uniform_half_extent: args.uniform_extent,
        seed: run.seed,
        ..defaults
    };
    if let Some(h) = args.uniform_extent {
        settings.get("uniform-extent", Some(h), h)?;
    }
    let trained = Checkpoint::load(&args.checkpoint)?;
    let cloud = load_cloud(&args.cloud, n_points, run.seed)?;
    let transform = normalize_points(&cloud)?;
    let normalized: Vec<Point3<f64>> = cloud.iter().map(|p| transform.apply(p)).collect();
    let fit = fit_latent(&normalized, &trained.field, &config)?;

    let checkpoint = Checkpoint {
        field: trained.field,
        latents: LatentTable {
            codes: vec![fit.code.clone()],
        },
        transform,
    };
    checkpoint.save(&args.out)?;
    let mut outputs = vec![args.out.clone()];
    run.extra.insert("cloud_points".into(), json!(cloud.len()));
    if let Some(loss) = fit.losses.last() {
        run.extra.insert("final_loss".into(), json!(loss));
    }
    if let Some(gt_path) = &args.gt {
        run.input(gt_path)?;
        let resolution = settings.get("res", args.res, 128)?;
        let (gt, _) = load_mesh(gt_path)?;
        let (mesh, _) = mesh_checkpoint(
            &checkpoint,
            Some(&fit.code),
            resolution,
            0.55,
            &ExtractionConfig::default(),
        )?;
        let method = format!("{}-latent", checkpoint.field.representation);
        let shape = format!("{}@{}", file_stem(gt_path), cloud.len());
        let report =
            EvalReport::compare_meshes(&method, &shape, &mesh, &gt, 30_000, run.seed, true)?;
        println!("{report}");
        if let Some(csv) = &args.report {
            append_csv(csv, &report.csv_row())?;
            outputs.push(csv.clone());
        }
    }
    run.finish(settings, outputs)
}

pub fn cmd_mesh(
    args: &MeshArgs,
    global: &GlobalArgs,
    settings: &mut Settings,
) -> Result<RunManifest, CliError> {
    let mut run = Run::start("mesh", global, settings)?;
    run.input(&args.input)?;
    let extraction = ExtractionConfig {
        far_cutoff: settings.get(
            "far-cutoff",
            args.far_cutoff,
            ExtractionConfig::default().far_cutoff,
        )?,
        ..ExtractionConfig::default()
    };
    let is_grid = args.input.extension().is_some_and(|e| e == "gdfg");
    let (mesh, grid) = if is_grid {
        let grid = FieldGrid::load(&args.input)?;
        (extract_mesh(&grid, &extraction)?, None)
    } else {
        let resolution = settings.get("res", args.res, 128)?;
        let extent = settings.get("extent", args.extent, 0.55)?;
        let index = settings.get("code", args.code, 0)?;
        let checkpoint = Checkpoint::load(&args.input)?;
        let code = select_code(&checkpoint, index)?;
        let (mesh, grid) = mesh_checkpoint(&checkpoint, code, resolution, extent, &extraction)?;
        (mesh, Some(grid))
    };
    if mesh.is_empty() {
        eprintln!("warning: extracted mesh is empty");
    }
    save_mesh(&mesh, &args.out)?;
    let mut outputs = vec![args.out.clone()];
    if let (Some(path), Some(grid)) = (&args.save_grid, &grid) {
        grid.save(path)?;
        outputs.push(path.clone());
    }
    run.extra
        .insert("triangles".into(), json!(mesh.num_triangles()));
    println!(
        "{} vertices, {} triangles -> {}",
        mesh.vertices.len(),
        mesh.num_triangles(),
        args.out.display()
    );
    run.finish(settings, outputs)
}

pub fn cmd_eval(
    args: &EvalArgs,
    global: &GlobalArgs,
    settings: &mut Settings,
) -> Result<RunManifest, CliError> {
    let mut run = Run::start("eval", global, settings)?;
    run.input(&args.pred)?;
    run.input(&args.gt)?;
    let n_samples = settings.get("samples", args.samples, gdf_core::metrics::DEFAULT_SAMPLES)?;
    let squared = !settings.get("linear", args.linear.then_some(true), false)?;
    let shape = settings.get("shape", args.shape.clone(), file_stem(&args.gt))?;
    let (gt, _) = load_mesh(&args.gt)?;

    let is_checkpoint = args.pred.extension().is_some_and(|e| e == "gdfn");
    let report = if is_checkpoint {
        let checkpoint = Checkpoint::load(&args.pred)?;
        let method = settings.get(
            "method",
            args.method.clone(),
            checkpoint.field.representation.to_string(),
        )?;
        let resolution = settings.get("res", args.res, 128)?;
        let field_res = settings.get("field-res", args.field_res, 64)?;
        let band = settings.get("band", args.band, 1.0)?;
        let code = select_code(&checkpoint, settings.get("code", args.code, 0)?)?;
        let (mesh, _) = mesh_checkpoint(
            &checkpoint,
            code,
            resolution,
            0.55,
            &ExtractionConfig::default(),
        )?;
        let t = checkpoint.transform;
        let gt_normalized = gt.map_vertices(|p| t.apply(p));
        let query = NeuralQuery::new(&checkpoint.field, code);
        let err = near_surface_field_error(
            &query,
            &gt_normalized,
            field_res,
            Aabb::centered_cube(0.55),
            band,
        )?;
        EvalReport::compare_meshes(&method, &shape, &mesh, &gt, n_samples, run.seed, squared)?
            .with_field_error(&err)
    } else {
        let method = settings.get("method", args.method.clone(), file_stem(&args.pred))?;
        let (pred, _) = load_mesh(&args.pred)?;
        EvalReport::compare_meshes(&method, &shape, &pred, &gt, n_samples, run.seed, squared)?
    };
    println!("{report}");
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.pred.with_extension("eval.csv"));
    append_csv(&out, &report.csv_row())?;
    run.extra.insert("row".into(), json!(report.csv_row()));
    run.finish(settings, vec![out])
}

pub fn cmd_demo2d(
    args: &Demo2dArgs,
    global: &GlobalArgs,
    settings: &mut Settings,
) -> Result<RunManifest, CliError> {
    let mut run = Run::start("demo2d", global, settings)?;
    let contour = match &args.contour {
        Some(p) => {
            run.input(p)?;
            Contour2D::load(p)?
        }
        None => Contour2D::bunny(),
    };
    let d = Demo2dConfig::default();
    let config = Demo2dConfig {
        image_size: settings.get("image", args.image, d.image_size)?,
        depth: settings.get("depth", args.depth, d.depth)?,
        width: settings.get("width", args.width, d.width)?,
        iterations: settings.get("iters", args.iters, d.iterations)?,
        batch_size: settings.get("batch", args.batch, d.batch_size)?,
        n_samples: settings.get("samples", args.samples, d.n_samples)?,
        learning_rate: settings.get("lr", args.lr, d.learning_rate)?,
        seed: run.seed,
        ..d
    };
    let report = run_demo(&contour, &config)?;
    report.write(&args.out)?;
    print!("{}", report.csv());
    run.finish(settings, vec![args.out.clone()])
}
