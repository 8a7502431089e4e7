//! Corpus loaders and a seeded synthetic texture generator.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::gaussian::quantize;
use crate::pixelgrid::{decode_pgm, encode_pgm, GrayImage, MIN_DIM};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub id: String,
    pub category: String,
    pub image: GrayImage,
}

/// How a file's category is derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Labeling {
    /// the directory holding the file, relative to the root
    Folder,
    /// file stem up to the first `_` (the whole stem if there is none)
    Prefix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub root: PathBuf,
    pub labeling: Labeling,
    /// cut each image into non-overlapping `tile x tile` squares
    pub tile: Option<usize>,
}

impl CorpusSpec {
    pub fn new(root: impl Into<PathBuf>, labeling: Labeling) -> Self {
        CorpusSpec {
            root: root.into(),
            labeling,
            tile: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedCorpus {
    pub images: Vec<LabeledImage>,
    /// files that could not be used, with the reason
    pub skipped: Vec<Error>,
}

fn is_pgm(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("pnm"))
}

fn category_of(rel: &Path, labeling: Labeling) -> Option<String> {
    match labeling {
        Labeling::Folder => {
            let parent = rel.parent()?;
            let parts: Vec<String> = parent.iter().map(|c| c.to_string_lossy().into_owned()).collect();
            (!parts.is_empty()).then(|| parts.join("/"))
        }
        Labeling::Prefix => {
            let stem = rel.file_stem()?.to_string_lossy();
            let cat = stem.split('_').next().unwrap_or("");
            (!cat.is_empty()).then(|| cat.to_string())
        }
    }
}

/// Loads every `.pgm`/`.pnm` under the root in lexicographic path order.
///
/// Undecodable files are collected in [`LoadedCorpus::skipped`]; the call
/// fails only when nothing usable remains.
pub fn load_corpus(spec: &CorpusSpec) -> Result<LoadedCorpus> {
    if !spec.root.is_dir() {
        return Err(Error::InvalidCorpus(format!("{} is not a directory", spec.root.display())));
    }
    if let Some(t) = spec.tile {
        if t < MIN_DIM {
            return Err(Error::InvalidCorpus(format!("tile size {t} below {MIN_DIM}")));
        }
    }
    let mut files: Vec<(String, PathBuf)> = Vec::new();
    for entry in WalkDir::new(&spec.root).follow_links(true) {
        let entry = entry.map_err(|e| Error::InvalidCorpus(e.to_string()))?;
        if entry.file_type().is_file() && is_pgm(entry.path()) {
            let rel = entry
                .path()
                .strip_prefix(&spec.root)
                .expect("walkdir yields paths under the root");
            let id = rel.iter().map(|c| c.to_string_lossy()).collect::<Vec<_>>().join("/");
            files.push((id, entry.path().to_path_buf()));
        }
    }
    files.sort();

    let decoded: Vec<std::result::Result<Vec<LabeledImage>, Error>> = files
        .par_iter()
        .map(|(id, path)| {
            let undecodable = |reason: String| Error::UndecodableFile {
                path: path.clone(),
                reason,
            };
            let category = category_of(Path::new(id), spec.labeling)
                .ok_or_else(|| undecodable("no category for this path under the labeling mode".into()))?;
            let bytes = std::fs::read(path).map_err(|e| undecodable(e.to_string()))?;
            let image = decode_pgm(&bytes).map_err(|e| undecodable(e.to_string()))?;
            match spec.tile {
                None => Ok(vec![LabeledImage {
                    id: id.clone(),
                    category,
                    image,
                }]),
                Some(t) => {
                    let tiles = tile_image(&image, t);
                    if tiles.is_empty() {
                        return Err(undecodable(format!(
                            "{}x{} image is smaller than one {t}x{t} tile",
                            image.width(),
                            image.height()
                        )));
                    }
                    Ok(tiles
                        .into_iter()
                        .enumerate()
                        .map(|(k, image)| LabeledImage {
                            id: format!("{id}#{k}"),
                            category: category.clone(),
                            image,
                        })
                        .collect())
                }
            }
        })
        .collect();

    let mut images = Vec::new();
    let mut skipped = Vec::new();
    for r in decoded {
        match r {
            Ok(v) => images.extend(v),
            Err(e) => skipped.push(e),
        }
    }
    if images.is_empty() {
        return Err(Error::EmptyCorpus(spec.root.clone()));
    }
    Ok(LoadedCorpus { images, skipped })
}

/// Non-overlapping `t x t` tiles in row-major order; partial edges dropped.
pub fn tile_image(image: &GrayImage, t: usize) -> Vec<GrayImage> {
    let mut out = Vec::new();
    for ty in 0..image.height() / t {
        for tx in 0..image.width() / t {
            out.push(image.crop(tx * t, ty * t, t, t).expect("tile inside image"));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub class_count: usize,
    pub samples_per_class: usize,
    pub image_size: usize,
    /// standard deviation of the additive pixel noise, in gray levels
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            class_count: 10,
            samples_per_class: 20,
            image_size: 64,
            noise_sigma: 20.0,
            seed: 42,
        }
    }
}

/// Class `c` is a sinusoidal grating at angle `c * pi / class_count` with
/// `2 + c mod 5` cycles per image; each sample adds clamped Gaussian noise.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Vec<LabeledImage>> {
    if spec.class_count < 2 || spec.samples_per_class < 2 || spec.image_size < 16 {
        return Err(Error::InvalidCorpus(format!(
            "need >= 2 classes, >= 2 samples per class and size >= 16, got {spec:?}"
        )));
    }
    if !(spec.noise_sigma.is_finite() && spec.noise_sigma >= 0.0) {
        return Err(Error::InvalidCorpus(format!("noise sigma {}", spec.noise_sigma)));
    }
    let n = spec.image_size;
    let noise = Normal::new(0.0, spec.noise_sigma).expect("sigma checked");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.class_count * spec.samples_per_class);
    for c in 0..spec.class_count {
        let theta = c as f64 * std::f64::consts::PI / spec.class_count as f64;
        let freq = (2 + c % 5) as f64;
        let (cos, sin) = (theta.cos(), theta.sin());
        let base: Vec<f64> = (0..n * n)
            .map(|i| {
                let (x, y) = ((i % n) as f64, (i / n) as f64);
                let phase = 2.0 * std::f64::consts::PI * freq * (x * cos + y * sin) / n as f64;
                f64::from(quantize(127.5 + 127.5 * phase.sin()))
            })
            .collect();
        for s in 0..spec.samples_per_class {
            let pixels = base
                .iter()
                .map(|&b| {
                    if spec.noise_sigma == 0.0 {
                        b as u8
                    } else {
                        quantize(b + noise.sample(&mut rng))
                    }
                })
                .collect();
            out.push(LabeledImage {
                id: format!("synth_{c}_{s}"),
                category: format!("class_{c}"),
                image: GrayImage::new(n, n, pixels)?,
            });
        }
    }
    Ok(out)
}

/// Writes `dir/<category>/<id>.pgm` for every image.
pub fn write_corpus(images: &[LabeledImage], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    for li in images {
        let sub = dir.join(&li.category);
        std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        let path = sub.join(format!("{}.pgm", li.id));
        std::fs::write(&path, encode_pgm(&li.image)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
