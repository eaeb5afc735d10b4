//! Labelled image datasets: the Netpbm codec, class-per-directory loading,
//! resizing, and the synthetic generator.

mod netpbm;
mod synth;

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{DType, Fill, Tensor};

pub use netpbm::{decode, encode, read_image, write_image, Image};
pub use synth::{synth_dataset, synth_images, SYNTH_CLASS_NAMES, SYNTH_NOISE};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `[H, W, C]`, double precision, values in [0, 1].
    pub image: Tensor,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, class_names: Vec<String>) -> Result<Self> {
        let classes = class_names.len();
        if let Some(s) = samples.iter().find(|s| s.label >= classes) {
            return Err(Error::LabelOutOfRange { label: s.label, classes });
        }
        if let Some(first) = samples.first() {
            if first.image.rank() != 3 {
                return Err(Error::shape(format!("images must be [H, W, C], got {}", first.image.shape())));
            }
            if let Some(s) = samples.iter().find(|s| s.image.dims() != first.image.dims()) {
                return Err(Error::shape(format!(
                    "image {} differs from {}",
                    s.image.shape(),
                    first.image.shape()
                )));
            }
        }
        Ok(Dataset { samples, class_names })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// `(H, W, C)` shared by every image, if there are any.
    pub fn image_shape(&self) -> Option<(usize, usize, usize)> {
        self.samples.first().map(|s| {
            let d = s.image.dims();
            (d[0], d[1], d[2])
        })
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            class_names: self.class_names.clone(),
        }
    }

    /// Stacks the selected images into `[n, H, W, C]` of `dtype`.
    pub fn batch(&self, indices: &[usize], dtype: DType) -> Result<(Tensor, Vec<usize>)> {
        let (h, w, c) = self.image_shape().ok_or(Error::EmptyDataset)?;
        let mut values = Vec::with_capacity(indices.len() * h * w * c);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            values.extend(self.samples[i].image.to_f64_vec());
            labels.push(self.samples[i].label);
        }
        let t = Tensor::create(&[indices.len(), h, w, c], Fill::Values(&values), dtype)?;
        Ok((t, labels))
    }
}

/// Nearest-neighbour resampling; source index is `floor((d + 0.5)·src/dst)`.
pub fn resize_nearest(img: &Image, out_h: usize, out_w: usize) -> Image {
    let src = |d: usize, src: usize, dst: usize| (2 * d + 1) * src / (2 * dst);
    let c = img.channels;
    let mut pixels = Vec::with_capacity(out_h * out_w * c);
    for y in 0..out_h {
        let sy = src(y, img.height, out_h);
        for x in 0..out_w {
            let sx = src(x, img.width, out_w);
            let at = (sy * img.width + sx) * c;
            pixels.extend_from_slice(&img.pixels[at..at + c]);
        }
    }
    Image {
        width: out_w,
        height: out_h,
        channels: c,
        pixels,
    }
}

/// `[H, W, channels]` tensor in [0, 1]. Grayscale is replicated to three
/// channels; RGB is averaged down to one.
pub fn image_tensor(img: &Image, channels: usize) -> Result<Tensor> {
    let v = img.normalized();
    let values: Vec<f64> = match (img.channels, channels) {
        (a, b) if a == b => v,
        (1, 3) => v.iter().flat_map(|&g| [g, g, g]).collect(),
        (3, 1) => v.chunks_exact(3).map(|p| (p[0] + p[1] + p[2]) / 3.0).collect(),
        (a, b) => return Err(Error::shape(format!("cannot adapt {a} channels to {b}"))),
    };
    Tensor::create(&[img.height, img.width, channels], Fill::Values(&values), DType::Double)
}

fn is_image(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("ppm"))
}

fn sorted_entries(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let io = |source| Error::Io {
        path: dir.into(),
        source,
    };
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io)? {
        out.push(entry.map_err(io)?.path());
    }
    out.sort();
    Ok(out)
}

/// Loads `<root>/<class>/<file>.pgm|.ppm`. Classes and files are taken in
/// sorted order; every image is resized and channel-adapted to `target`.
pub fn load_dataset(root: impl AsRef<Path>, target: (usize, usize, usize)) -> Result<Dataset> {
    let root = root.as_ref();
    let (h, w, c) = target;
    if h == 0 || w == 0 || !(c == 1 || c == 3) {
        return Err(Error::BadSize(format!("target shape ({h}, {w}, {c})")));
    }
    let dirs: Vec<_> = sorted_entries(root)?.into_iter().filter(|p| p.is_dir()).collect();
    if dirs.len() < 2 {
        return Err(Error::NoClasses(root.into()));
    }
    let mut samples = Vec::new();
    let mut class_names = Vec::new();
    for (label, dir) in dirs.iter().enumerate() {
        let files: Vec<_> = sorted_entries(dir)?.into_iter().filter(|p| is_image(p)).collect();
        if files.is_empty() {
            return Err(Error::EmptyClass(dir.clone()));
        }
        for file in files {
            let img = resize_nearest(&read_image(&file)?, h, w);
            let image = image_tensor(&img, c).map_err(|e| e.at(&file))?;
            samples.push(Sample { image, label });
        }
        class_names.push(dir.file_name().expect("directory entry").to_string_lossy().into_owned());
    }
    Dataset::new(samples, class_names)
}

/// Shape of the first image (in sorted order) under `root`, for callers
/// that want to load at native resolution.
pub fn probe_shape(root: impl AsRef<Path>) -> Result<(usize, usize, usize)> {
    let root = root.as_ref();
    for dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        if let Some(file) = sorted_entries(&dir)?.into_iter().find(|p| is_image(p)) {
            let img = read_image(&file)?;
            return Ok((img.height, img.width, img.channels));
        }
    }
    Err(Error::NoClasses(root.into()))
}

/// Writes `dataset`-style images as a class-per-directory tree of PGM/PPM
/// files named `<index>.pgm` with zero-padded indices.
pub fn write_tree(root: impl AsRef<Path>, class_names: &[String], images: &[(Image, usize)]) -> Result<()> {
    let root = root.as_ref();
    let mkdir = |p: &Path| {
        fs::create_dir_all(p).map_err(|source| Error::IoWrite {
            path: p.into(),
            source,
        })
    };
    mkdir(root)?;
    let mut counts = vec![0usize; class_names.len()];
    for name in class_names {
        mkdir(&root.join(name))?;
    }
    for (img, label) in images {
        let ext = if img.channels == 1 { "pgm" } else { "ppm" };
        let path = root.join(&class_names[*label]).join(format!("{:05}.{ext}", counts[*label]));
        counts[*label] += 1;
        write_image(&path, img)?;
    }
    Ok(())
}
