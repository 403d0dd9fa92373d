//! Planar comparison of unsigned-distance and gradient-distance regression on an open
//! contour.
//!
//! Both networks see the same samples and settings. Their distance predictions are
//! rasterized, and coverage counts the true contour pixels at which the predicted
//! distance falls below two pixels.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Point2, Vector2};
use rand::Rng;

use crate::field::Representation;
use crate::geometry::seeded_rng;
use crate::neural::{
    train_single, AdamConfig, FieldValues, MlpConfig, NeuralField, RegressionData, TrainConfig,
};
use crate::{Error, Result};

/// The contour shipped with the crate: an open rabbit silhouette.
pub const BUNNY_CONTOUR: &str = include_str!("../data/bunny_contour.csv");

/// Open or closed polylines in the plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour2D {
    pub segments: Vec<[Point2<f64>; 2]>,
}

impl Contour2D {
    /// Builds segments from polylines, skipping repeated consecutive vertices.
    pub fn from_polylines(polylines: &[Vec<Point2<f64>>]) -> Result<Self> {
        let mut segments = Vec::new();
        for line in polylines {
            for w in line.windows(2) {
                if (w[1] - w[0]).norm() > 0.0 {
                    segments.push([w[0], w[1]]);
                }
            }
        }
        if segments.is_empty() {
            return Err(Error::InvalidInput("contour has no segments".into()));
        }
        Ok(Self { segments })
    }

    /// Parses `x,y` rows; blank lines end a polyline and `#` starts a comment.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut polylines = vec![Vec::new()];
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                if !raw.trim_start().starts_with('#') && !polylines.last().unwrap().is_empty() {
                    polylines.push(Vec::new());
                }
                continue;
            }
            let mut it = line.split(',').map(str::trim);
            let mut coord = || -> Result<f64> {
                it.next()
                    .and_then(|s| s.parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::format(path, n + 1, format!("expected `x,y`, found `{line}`"))
                    })
            };
            let (x, y) = (coord()?, coord()?);
            polylines.last_mut().unwrap().push(Point2::new(x, y));
        }
        Self::from_polylines(&polylines)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn bunny() -> Self {
        Self::parse(BUNNY_CONTOUR, Path::new("bunny_contour.csv"))
            .expect("bundled contour is valid")
    }

    pub fn length(&self) -> f64 {
        self.segments.iter().map(|[a, b]| (b - a).norm()).sum()
    }

    pub fn bounds(&self) -> (Point2<f64>, Point2<f64>) {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in self.segments.iter().flatten() {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    /// Copy centred at the origin with its longest side equal to `size`.
    pub fn normalized(&self, size: f64) -> Self {
        let (lo, hi) = self.bounds();
        let c = nalgebra::center(&lo, &hi);
        let extent = (hi - lo).max();
        let s = if extent > 0.0 { size / extent } else { 1.0 };
        let map = |p: &Point2<f64>| Point2::from((p - c) * s);
        Self {
            segments: self
                .segments
                .iter()
                .map(|[a, b]| [map(a), map(b)])
                .collect(),
        }
    }

    /// Nearest contour point; ties go to the lowest segment index.
    pub fn closest_point(&self, x: &Point2<f64>) -> Point2<f64> {
        let mut best = (f64::INFINITY, *x);
        for [a, b] in &self.segments {
            let ab = b - a;
            let t = ((x - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            let p = a + ab * t;
            let d = (p - x).norm_squared();
            if d < best.0 {
                best = (d, p);
            }
        }
        best.1
    }

    /// Uniform point along the contour by arc length.
    fn sample(&self, cdf: &[f64], rng: &mut impl Rng) -> Point2<f64> {
        let r: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
        let i = cdf.partition_point(|&c| c <= r).min(cdf.len() - 1);
        let [a, b] = self.segments[i];
        a + (b - a) * rng.random::<f64>()
    }
}

/// Vector from `x` to its nearest point on the contour.
pub fn gdf2d_ground_truth(contour: &Contour2D, x: &Point2<f64>) -> Vector2<f64> {
    contour.closest_point(x) - x
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demo2dConfig {
    /// Raster width and height in pixels; the raster covers `[-0.5, 0.5]²`.
    pub image_size: usize,
    /// Longest side of the contour after normalization.
    pub contour_extent: f64,
    pub depth: usize,
    pub width: usize,
    pub iterations: usize,
    pub batch_size: usize,
    pub n_samples: usize,
    /// Share of the samples drawn uniformly over the raster.
    pub uniform_fraction: f64,
    /// Offset scales as fractions of the contour's bounding-box diagonal.
    pub sigma_near: [f64; 2],
    pub learning_rate: f64,
    /// Coverage radius, in pixels.
    pub coverage_px: f64,
    pub seed: u64,
}

impl Default for Demo2dConfig {
    fn default() -> Self {
        Self {
            image_size: 256,
            contour_extent: 0.9,
            depth: 8,
            width: 256,
            iterations: 10_000,
            batch_size: 4096,
            n_samples: 20_000,
            uniform_fraction: 0.05,
            sigma_near: [0.005, 0.0005],
            learning_rate: 1e-4,
            coverage_px: 2.0,
            seed: 0,
        }
    }
}

/// Results for one representation.
#[derive(Debug, Clone, PartialEq)]
pub struct Demo2dResult {
    pub representation: Representation,
    /// Share of true contour pixels whose predicted distance is below `coverage_px`.
    pub coverage: f64,
    /// Mean product of the predicted x-gradients at paired points on opposite sides
    /// of the contour; negative when the field flips across it.
    pub flip_product: f64,
    /// Smallest predicted distance along the probe lines, in pixels.
    pub probe_min_px: f64,
    pub final_loss: f64,
    /// Predicted distance per pixel, row-major from the top row.
    pub distance: Vec<f64>,
    /// Predicted x-component of the unit gradient per pixel.
    pub gradient_x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demo2dReport {
    pub image_size: usize,
    pub contour_pixels: usize,
    pub results: Vec<Demo2dResult>,
}

impl Demo2dReport {
    pub const CSV_HEADER: &'static str =
        "method,coverage,contour_pixels,flip_product,probe_min_px,final_loss";

    pub fn get(&self, representation: Representation) -> Option<&Demo2dResult> {
        self.results
            .iter()
            .find(|r| r.representation == representation)
    }

    pub fn csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.results {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.representation,
                r.coverage,
                self.contour_pixels,
                r.flip_product,
                r.probe_min_px,
                r.final_loss
            );
        }
        out
    }

    /// Writes `report.csv` and, per representation, `<repr>_distance.pgm` and
    /// `<repr>_gradient_x.pgm` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("report.csv");
        fs::write(&path, self.csv()).map_err(|e| Error::io(&path, e))?;
        for r in &self.results {
            let max = r
                .distance
                .iter()
                .cloned()
                .fold(0.0, f64::max)
                .max(f64::MIN_POSITIVE);
            let dist: Vec<u8> = r.distance.iter().map(|d| to_byte(d / max)).collect();
            let gx: Vec<u8> = r
                .gradient_x
                .iter()
                .map(|g| to_byte(0.5 * (g + 1.0)))
                .collect();
            write_pgm(
                &dir.join(format!("{}_distance.pgm", r.representation)),
                self.image_size,
                &dist,
            )?;
            write_pgm(
                &dir.join(format!("{}_gradient_x.pgm", r.representation)),
                self.image_size,
                &gx,
            )?;
        }
        Ok(())
    }
}

fn to_byte(x: f64) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Binary 8-bit greyscale PGM.
pub fn write_pgm(path: &Path, size: usize, pixels: &[u8]) -> Result<()> {
    let mut out = format!("P5\n{size} {size}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Training pairs: arc-length samples offset by two Gaussian scales, plus a uniform share.
pub fn training_data(contour: &Contour2D, config: &Demo2dConfig) -> Result<RegressionData> {
    let mut rng = seeded_rng(config.seed);
    let mut cdf = Vec::with_capacity(contour.segments.len());
    let mut acc = 0.0;
    for [a, b] in &contour.segments {
        acc += (b - a).norm();
        cdf.push(acc);
    }
    let (lo, hi) = contour.bounds();
    let diag = (hi - lo).norm();
    let n_uniform = (config.n_samples as f64 * config.uniform_fraction).round() as usize;
    let n_near = config.n_samples.saturating_sub(n_uniform);
    let normal = rand_distr::StandardNormal;
    let mut points = Vec::with_capacity(2 * config.n_samples);
    let mut vectors = Vec::with_capacity(2 * config.n_samples);
    for i in 0..config.n_samples {
        let x = if i < n_near {
            let sigma = if i < n_near - n_near / 2 {
                config.sigma_near[0]
            } else {
                config.sigma_near[1]
            } * diag;
            let p = contour.sample(&cdf, &mut rng);
            let dx: f64 = rng.sample(normal);
            let dy: f64 = rng.sample(normal);
            p + Vector2::new(dx, dy) * sigma
        } else {
            Point2::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5))
        };
        let v = gdf2d_ground_truth(contour, &x);
        points.extend([x.x, x.y]);
        vectors.extend([v.x, v.y]);
    }
    RegressionData::new(2, points, vectors)
}

/// Pixel centre of column `i`, row `j` (row 0 at the top).
fn pixel_center(size: usize, i: usize, j: usize) -> Point2<f64> {
    let px = 1.0 / size as f64;
    Point2::new(-0.5 + (i as f64 + 0.5) * px, 0.5 - (j as f64 + 0.5) * px)
}

/// Indices of the pixels whose centre lies within half a pixel of the contour.
pub fn contour_pixels(contour: &Contour2D, size: usize) -> Vec<usize> {
    let half = 0.5 / size as f64;
    (0..size * size)
        .filter(|&k| {
            gdf2d_ground_truth(contour, &pixel_center(size, k % size, k / size)).norm() < half
        })
        .collect()
}

/// Share of `pixels` whose entry in `distance` is below `threshold`.
pub fn coverage(distance: &[f64], pixels: &[usize], threshold: f64) -> f64 {
    if pixels.is_empty() {
        return 0.0;
    }
    pixels.iter().filter(|&&k| distance[k] < threshold).count() as f64 / pixels.len() as f64
}

/// Contour points with unit normals, at the midpoints of segments at least
/// `min_len` long.
fn probe_sites(contour: &Contour2D, min_len: f64) -> Vec<(Point2<f64>, Vector2<f64>)> {
    contour
        .segments
        .iter()
        .filter(|[a, b]| (b - a).norm() >= min_len)
        .map(|[a, b]| {
            let d = (b - a).normalize();
            (nalgebra::center(a, b), Vector2::new(-d.y, d.x))
        })
        .collect()
}

fn evaluate_points(field: &NeuralField, points: &[Point2<f64>]) -> Result<FieldValues> {
    let flat: Vec<f64> = points.iter().flat_map(|p| [p.x, p.y]).collect();
    field.evaluate(&flat, None)
}

/// Trains one network per representation and measures how well each recovers the contour.
pub fn run_demo(contour: &Contour2D, config: &Demo2dConfig) -> Result<Demo2dReport> {
    if config.image_size < 2 {
        return Err(Error::InvalidInput("image size must be at least 2".into()));
    }
    let contour = contour.normalized(config.contour_extent);
    let data = training_data(&contour, config)?;
    let size = config.image_size;
    let px = 1.0 / size as f64;
    let pixels: Vec<Point2<f64>> = (0..size * size)
        .map(|k| pixel_center(size, k % size, k / size))
        .collect();
    let targets = contour_pixels(&contour, size);
    let sites = probe_sites(&contour, 2.0 * px);
    let offset = 2.0 * px;
    let above: Vec<Point2<f64>> = sites.iter().map(|(p, n)| p + n * offset).collect();
    let below: Vec<Point2<f64>> = sites.iter().map(|(p, n)| p - n * offset).collect();
    let probe_steps: Vec<f64> = (-8..=8).map(|k| k as f64 * 0.25 * px).collect();
    let probe: Vec<Point2<f64>> = sites
        .iter()
        .flat_map(|(p, n)| probe_steps.iter().map(move |t| p + n * *t))
        .collect();

    let mut results = Vec::new();
    for representation in [Representation::Udf, Representation::Gdf] {
        let mlp = MlpConfig::new(
            config.depth,
            config.width,
            2,
            0,
            representation.output_dim(2),
        );
        let train = TrainConfig {
            iterations: config.iterations,
            batch_size: config.batch_size,
            seed: config.seed,
            optimizer: AdamConfig::with_learning_rate(config.learning_rate),
            ..TrainConfig::default()
        };
        let (field, report) = train_single(&data, mlp, representation, &train)?;
        let values = evaluate_points(&field, &pixels)?;
        let cov = coverage(&values.u, &targets, config.coverage_px * px);
        let va = evaluate_points(&field, &above)?;
        let vb = evaluate_points(&field, &below)?;
        let flip_product = if sites.is_empty() {
            0.0
        } else {
            (0..sites.len())
                .map(|i| va.gradient(i)[0] * vb.gradient(i)[0])
                .sum::<f64>()
                / sites.len() as f64
        };
        let vp = evaluate_points(&field, &probe)?;
        let probe_min_px = vp.u.iter().cloned().fold(f64::INFINITY, f64::min) / px;
        results.push(Demo2dResult {
            representation,
            coverage: cov,
            flip_product,
            probe_min_px,
            final_loss: report.final_loss().unwrap_or(f64::NAN),
            gradient_x: (0..pixels.len()).map(|i| values.gradient(i)[0]).collect(),
            distance: values.u,
        });
    }
    Ok(Demo2dReport {
        image_size: size,
        contour_pixels: targets.len(),
        results,
    })
}
