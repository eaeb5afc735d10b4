//! A four-class geometric dataset that a small CNN separates easily.

use rand::Rng as _;

use crate::data::{image_tensor, Dataset, Image, Sample};
use crate::error::{Error, Result};
use crate::rng::{self, streams};

pub const SYNTH_CLASS_NAMES: [&str; 4] = ["0_horizontal", "1_vertical", "2_disc", "3_diagonal"];

/// Half-width of the uniform pixel noise.
pub const SYNTH_NOISE: f64 = 0.1;

const BACKGROUND: f64 = 0.2;
const FOREGROUND: f64 = 0.8;

/// Whether pixel `(y, x)` belongs to the shape of `class`.
fn inside(class: usize, side: usize, y: usize, x: usize) -> bool {
    let w = side.div_ceil(4);
    let start = (side - w) / 2;
    let band = |v: usize| (start..start + w).contains(&v);
    match class {
        0 => band(y),
        1 => band(x),
        2 => {
            // centre at ((side-1)/2, (side-1)/2), compared in doubled units
            let (dy, dx) = (2 * y as i64 - (side as i64 - 1), 2 * x as i64 - (side as i64 - 1));
            dy * dy + dx * dx <= 4 * (w * w) as i64
        }
        _ => {
            let d = x as i64 - y as i64 + (w / 2) as i64;
            (0..w as i64).contains(&d)
        }
    }
}

/// `n_per_class` grayscale `side`×`side` images per class, class-major,
/// with uniform noise of half-width `noise` before 8-bit quantization.
pub fn synth_images(n_per_class: usize, side: usize, seed: u64, noise: f64) -> Result<Vec<(Image, usize)>> {
    if side < 8 {
        return Err(Error::BadSize(format!("side {side} is below the minimum of 8")));
    }
    if n_per_class == 0 {
        return Err(Error::BadSize("n_per_class must be at least 1".into()));
    }
    let mut rng = rng::stream(seed, streams::SYNTH);
    let mut out = Vec::with_capacity(4 * n_per_class);
    for class in 0..SYNTH_CLASS_NAMES.len() {
        for _ in 0..n_per_class {
            let mut pixels = Vec::with_capacity(side * side);
            for y in 0..side {
                for x in 0..side {
                    let base = if inside(class, side, y, x) { FOREGROUND } else { BACKGROUND };
                    let v = base + noise * (2.0 * rng.random::<f64>() - 1.0);
                    pixels.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
                }
            }
            out.push((Image::new(side, side, 1, pixels)?, class));
        }
    }
    Ok(out)
}

pub fn synth_dataset(n_per_class: usize, side: usize, seed: u64) -> Result<Dataset> {
    let samples = synth_images(n_per_class, side, seed, SYNTH_NOISE)?
        .iter()
        .map(|(img, label)| {
            Ok(Sample {
                image: image_tensor(img, 1)?,
                label: *label,
            })
        })
        .collect::<Result<_>>()?;
    Dataset::new(samples, SYNTH_CLASS_NAMES.iter().map(|s| s.to_string()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_shape() {
        let d = synth_dataset(5, 32, 7).unwrap();
        assert_eq!(d.len(), 20);
        assert_eq!(d.n_classes(), 4);
        assert_eq!(d.image_shape(), Some((32, 32, 1)));
        assert!(d.samples.iter().all(|s| s.image.to_f64_vec().iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn deterministic() {
        assert_eq!(synth_dataset(3, 16, 1).unwrap(), synth_dataset(3, 16, 1).unwrap());
        assert_ne!(synth_dataset(3, 16, 1).unwrap(), synth_dataset(3, 16, 2).unwrap());
    }

    #[test]
    fn bands_differ_on_more_than_a_quarter() {
        let imgs = synth_images(1, 32, 0, 0.0).unwrap();
        let diff = imgs[0].0.pixels.iter().zip(&imgs[1].0.pixels).filter(|(a, b)| a != b).count();
        // w = 8: 2·8·32 − 2·8² = 384 of 1024 pixels lie in exactly one band
        assert_eq!(diff, 384);
        assert!(diff as f64 / 1024.0 > 0.25);
    }

    #[test]
    fn classes_are_pairwise_distinct() {
        let imgs = synth_images(1, 8, 0, 0.0).unwrap();
        for i in 0..4 {
            for j in i + 1..4 {
                assert_ne!(imgs[i].0.pixels, imgs[j].0.pixels, "{i} vs {j}");
            }
        }
    }

    #[test]
    fn too_small() {
        assert!(matches!(synth_images(1, 7, 0, 0.1), Err(Error::BadSize(_))));
        assert!(matches!(synth_images(0, 8, 0, 0.1), Err(Error::BadSize(_))));
    }
}
