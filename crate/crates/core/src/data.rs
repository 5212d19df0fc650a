//! Desk-scale data sources and the on-disk formats they travel in.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{substream, Rng};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataMode {
    Points2d,
    Images { height: usize, width: usize },
}

impl DataMode {
    pub fn dim(self) -> usize {
        match self {
            DataMode::Points2d => 2,
            DataMode::Images { height, width } => height * width,
        }
    }
}

/// Samples stored as the rows of an `n × dim` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub mode: DataMode,
    pub samples: Tensor,
    /// Human-readable description of where the samples came from.
    pub metadata: String,
}

impl Dataset {
    pub fn new(mode: DataMode, samples: Tensor, metadata: impl Into<String>) -> Result<Self> {
        let (_, cols) = samples.dims2()?;
        if cols != mode.dim() {
            return Err(Error::Format(format!(
                "samples have {cols} columns, mode needs {}",
                mode.dim()
            )));
        }
        if matches!(mode, DataMode::Images { .. }) && samples.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Format("image values must lie in [0, 1]".into()));
        }
        Ok(Dataset {
            mode,
            samples,
            metadata: metadata.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.mode.dim()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        self.samples.row(i)
    }

    /// Plain-text description: count, shape and provenance.
    pub fn manifest(&self) -> String {
        let shape = match self.mode {
            DataMode::Points2d => "points2d".to_string(),
            DataMode::Images { height, width } => format!("image {height}x{width}"),
        };
        format!("count = {}\nshape = {shape}\nspec = {}\n", self.len(), self.metadata)
    }
}

/// Isotropic 2-D Gaussian mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureSpec {
    pub modes: Vec<([f64; 2], f64)>,
    pub weights: Vec<f64>,
}

impl MixtureSpec {
    /// `k` equally weighted modes evenly spaced on a circle.
    pub fn ring(k: usize, radius: f64, sigma: f64) -> Self {
        let modes = (0..k)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
                ([radius * a.cos(), radius * a.sin()], sigma)
            })
            .collect();
        MixtureSpec {
            modes,
            weights: vec![1.0 / k as f64; k],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() || self.modes.len() != self.weights.len() {
            return Err(Error::Config("mixture needs one weight per mode".into()));
        }
        if self
            .modes
            .iter()
            .any(|(m, s)| !(*s > 0.0) || !m.iter().all(|v| v.is_finite()))
        {
            return Err(Error::Config("mixture sigmas must be positive".into()));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("mixture weights must be nonnegative".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        format!(
            "gaussian mixture, {} modes, sigma {}",
            self.modes.len(),
            self.modes.first().map(|m| m.1).unwrap_or(0.0)
        )
    }
}

pub fn sample_gaussian_mixture(spec: &MixtureSpec, n: usize, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Config("sample count must be positive".into()));
    }
    let mut rng = substream(seed, "data.mixture");
    let mut data = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = spec.modes.len() - 1;
        for (i, w) in spec.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        let ([mx, my], s) = spec.modes[k];
        let dx: f64 = StandardNormal.sample(&mut rng);
        let dy: f64 = StandardNormal.sample(&mut rng);
        data.push(mx + s * dx);
        data.push(my + s * dy);
    }
    Dataset::new(
        DataMode::Points2d,
        Tensor::matrix(n, 2, data)?,
        format!("{}, seed {seed}", spec.describe()),
    )
}

/// Smallest image side the SSIM window accepts.
pub const MIN_IMAGE_SIZE: usize = 12;

/// Grayscale `size × size` images, each a plain background with one
/// anti-aliased ellipse or rectangle of a contrasting intensity.
pub fn gen_procedural_images(n: usize, size: usize, seed: u64) -> Result<Dataset> {
    if size < MIN_IMAGE_SIZE {
        return Err(Error::Config(format!(
            "image size {size} is below the minimum of {MIN_IMAGE_SIZE}"
        )));
    }
    if n == 0 {
        return Err(Error::Config("image count must be positive".into()));
    }
    let mut rng = substream(seed, "data.procedural");
    let mut data = Vec::with_capacity(n * size * size);
    for _ in 0..n {
        data.extend(procedural_image(&mut rng, size));
    }
    Dataset::new(
        DataMode::Images {
            height: size,
            width: size,
        },
        Tensor::matrix(n, size * size, data)?,
        format!("procedural shapes {size}x{size}, seed {seed}"),
    )
}

fn procedural_image(rng: &mut Rng, size: usize) -> Vec<f64> {
    const SUPERSAMPLE: usize = 4;
    let s = size as f64;
    let bg: f64 = rng.random_range(0.05..0.95);
    let fg = loop {
        let v: f64 = rng.random_range(0.0..1.0);
        if (v - bg).abs() >= 0.3 {
            break v;
        }
    };
    let cx = rng.random_range(0.3..0.7) * s;
    let cy = rng.random_range(0.3..0.7) * s;
    let rx = rng.random_range(0.15..0.35) * s;
    let ry = rng.random_range(0.15..0.35) * s;
    let ellipse = rng.random_bool(0.5);
    let angle: f64 = if ellipse {
        rng.random_range(0.0..std::f64::consts::PI)
    } else {
        0.0
    };
    let (sin, cos) = angle.sin_cos();

    let inside = |x: f64, y: f64| {
        let (dx, dy) = (x - cx, y - cy);
        if ellipse {
            let u = cos * dx + sin * dy;
            let v = -sin * dx + cos * dy;
            (u / rx).powi(2) + (v / ry).powi(2) <= 1.0
        } else {
            dx.abs() <= rx && dy.abs() <= ry
        }
    };

    let mut img = Vec::with_capacity(size * size);
    for row in 0..size {
        for col in 0..size {
            let mut hits = 0;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let x = col as f64 + (sx as f64 + 0.5) / SUPERSAMPLE as f64;
                    let y = row as f64 + (sy as f64 + 0.5) / SUPERSAMPLE as f64;
                    if inside(x, y) {
                        hits += 1;
                    }
                }
            }
            let cover = hits as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64;
            img.push(bg + (fg - bg) * cover);
        }
    }
    img
}

/// Writes a binary 16-bit PGM (P5, maxval 65535, big-endian samples).
pub fn write_pgm(path: &Path, height: usize, width: usize, pixels: &[f64]) -> Result<()> {
    if pixels.len() != height * width {
        return Err(Error::Usage(format!(
            "{} pixels for a {height}x{width} image",
            pixels.len()
        )));
    }
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for &v in pixels {
        let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// A decoded grayscale image with values rescaled to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PgmImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
}

pub fn read_pgm(path: &Path) -> Result<PgmImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes, path)
}

fn parse_pgm(bytes: &[u8], path: &Path) -> Result<PgmImage> {
    let err = |offset: usize, msg: &str| Error::Parse {
        file: path.to_path_buf(),
        offset: offset as u64,
        msg: msg.to_string(),
    };
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(err(0, "missing P5 magic number"));
    }
    let mut pos = 2;
    let mut header = [0usize; 3];
    for field in header.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(err(pos, "expected a decimal header field"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(start, "header field out of range"))?;
    }
    let [width, height, maxval] = header;
    if width == 0 || height == 0 {
        return Err(err(pos, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(err(pos, "maxval must be in 1..=65535"));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(err(pos, "expected whitespace after maxval"));
    }
    pos += 1;
    let bps = if maxval < 256 { 1 } else { 2 };
    let need = width * height * bps;
    if bytes.len() - pos < need {
        return Err(err(bytes.len(), &format!("pixel data truncated: need {need} bytes")));
    }
    let body = &bytes[pos..pos + need];
    let mut pixels = Vec::with_capacity(width * height);
    for (i, chunk) in body.chunks_exact(bps).enumerate() {
        let v = if bps == 1 {
            chunk[0] as usize
        } else {
            u16::from_be_bytes([chunk[0], chunk[1]]) as usize
        };
        if v > maxval {
            return Err(err(pos + i * bps, "sample exceeds maxval"));
        }
        pixels.push(v as f64 / maxval as f64);
    }
    Ok(PgmImage { height, width, pixels })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LoadMode {
    Points,
    Images,
}

/// Points: a headerless CSV of `x,y` rows. Images: a directory of PGM files
/// of one common size, read in file-name order.
pub fn load_dataset(path: &Path, mode: LoadMode) -> Result<Dataset> {
    match mode {
        LoadMode::Points => load_points(path),
        LoadMode::Images => load_images(path),
    }
}

fn load_points(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(fs::File::open(path).map_err(|e| Error::io(path, e))?);
    let mut data = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let offset = reader.position().byte();
        let more = reader.read_record(&mut record).map_err(|e| Error::Parse {
            file: path.to_path_buf(),
            offset: e.position().map(|p| p.byte()).unwrap_or(offset),
            msg: e.to_string(),
        })?;
        if !more {
            break;
        }
        if record.len() != 2 {
            return Err(Error::Parse {
                file: path.to_path_buf(),
                offset,
                msg: format!("expected 2 fields, found {}", record.len()),
            });
        }
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                file: path.to_path_buf(),
                offset,
                msg: format!("non-numeric token {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    file: path.to_path_buf(),
                    offset,
                    msg: format!("non-finite value {field:?}"),
                });
            }
            data.push(v);
        }
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset(path.display().to_string()));
    }
    let n = data.len() / 2;
    Dataset::new(
        DataMode::Points2d,
        Tensor::matrix(n, 2, data)?,
        format!("points from {}", path.display()),
    )
}

fn load_images(dir: &Path) -> Result<Dataset> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::EmptyDataset(format!("no .pgm files in {}", dir.display())));
    }
    let mut shape = None;
    let mut data = Vec::new();
    for f in &files {
        let img = read_pgm(f)?;
        match shape {
            None => shape = Some((img.height, img.width)),
            Some(s) if s != (img.height, img.width) => {
                return Err(Error::Format(format!(
                    "{} is {}x{}, expected {}x{}",
                    f.display(),
                    img.height,
                    img.width,
                    s.0,
                    s.1
                )))
            }
            _ => {}
        }
        data.extend(img.pixels);
    }
    let (height, width) = shape.expect("at least one file");
    Dataset::new(
        DataMode::Images { height, width },
        Tensor::matrix(files.len(), height * width, data)?,
        format!("pgm directory {}", dir.display()),
    )
}

/// Deterministic shuffled split into `(train, test)`; the train part gets
/// `round(n · train_fraction)` samples.
pub fn split_dataset(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let n = ds.len();
    let n_train = (n as f64 * train_fraction).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::Config(format!(
            "splitting {n} samples at {train_fraction} leaves an empty side"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut substream(seed, "data.split"));
    let part = |ids: &[usize], tag: &str| -> Result<Dataset> {
        Dataset::new(
            ds.mode,
            ds.samples.select_rows(ids)?,
            format!("{} [{tag} split, seed {seed}]", ds.metadata),
        )
    };
    Ok((part(&idx[..n_train], "train")?, part(&idx[n_train..], "test")?))
}
