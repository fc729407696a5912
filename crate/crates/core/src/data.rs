//! Dataset ingestion and construction: IDX-format reading/writing, exact
//! and bilinear image transforms, the 180°/mirror toy tasks, rotated-MNIST
//! generation, and a procedural chevron dataset so everything runs without
//! external downloads.
//!
//! Image coordinate frame: a pixel `(row, col)` maps to the plane point
//! `(row - (H-1)/2, col - (W-1)/2)`. The mirror generator `(0, -1)` negates
//! the second coordinate, i.e. flips columns: a horizontal flip. Rotations
//! about the pixel-center `( (H-1)/2, (W-1)/2 )` make the 180° rotation an
//! exact index reversal on even-sized grids.

use crate::group::{act_on_plane, inverse, FiberElement};
use crate::rng::Rng;
use crate::tensor::TensorData;
use flate2::read::GzDecoder;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;
use thiserror::Error;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("not an IDX file: magic 0x{0:08x}")]
    NotIdx(u32),
    #[error("unexpected EOF in IDX payload")]
    UnexpectedEof,
    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("dataset contains no images of digit {0}")]
    NoSourceDigit(usize),
    #[error("dataset too small: need at least {need}, got {got}")]
    TooSmall { need: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Labeled images: `(N, 1, H, W)` floats in `[0, 1]`.
#[derive(Clone)]
pub struct LabeledImageSet {
    pub images: TensorData,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl LabeledImageSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_dims(&self) -> (usize, usize) {
        (self.images.shape[2], self.images.shape[3])
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let hw = self.images.shape[2] * self.images.shape[3];
        &self.images.data[i * hw..(i + 1) * hw]
    }

    pub fn select(&self, indices: &[usize]) -> LabeledImageSet {
        let (h, w) = self.image_dims();
        let mut data = Vec::with_capacity(indices.len() * h * w);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        LabeledImageSet {
            images: TensorData::new(vec![indices.len(), 1, h, w], data),
            labels,
            classes: self.classes,
        }
    }
}

fn open_maybe_gz(path: &Path) -> Result<Box<dyn Read>, DataError> {
    let file = File::open(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(GzDecoder::new(BufReader::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

fn read_u32_be(r: &mut dyn Read) -> Result<u32, DataError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|_| DataError::UnexpectedEof)?;
    Ok(u32::from_be_bytes(buf))
}

/// Reads an IDX image file (magic 0x00000803): `(N, 1, rows, cols)` scaled
/// to `[0, 1]`. `.gz` paths are decompressed transparently.
pub fn read_idx_images(path: &Path) -> Result<TensorData, DataError> {
    let mut r = open_maybe_gz(path)?;
    let magic = read_u32_be(&mut r)?;
    if magic != IMAGE_MAGIC {
        return Err(DataError::NotIdx(magic));
    }
    let n = read_u32_be(&mut r)? as usize;
    let rows = read_u32_be(&mut r)? as usize;
    let cols = read_u32_be(&mut r)? as usize;
    let mut bytes = vec![0u8; n * rows * cols];
    r.read_exact(&mut bytes).map_err(|_| DataError::UnexpectedEof)?;
    let data: Vec<f32> = bytes.iter().map(|&b| b as f32 / 255.0).collect();
    Ok(TensorData::new(vec![n, 1, rows, cols], data))
}

/// Reads an IDX label file (magic 0x00000801).
pub fn read_idx_labels(path: &Path) -> Result<Vec<usize>, DataError> {
    let mut r = open_maybe_gz(path)?;
    let magic = read_u32_be(&mut r)?;
    if magic != LABEL_MAGIC {
        return Err(DataError::NotIdx(magic));
    }
    let n = read_u32_be(&mut r)? as usize;
    let mut bytes = vec![0u8; n];
    r.read_exact(&mut bytes).map_err(|_| DataError::UnexpectedEof)?;
    Ok(bytes.iter().map(|&b| b as usize).collect())
}

/// Reads a matched image/label pair into a [`LabeledImageSet`].
pub fn read_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledImageSet, DataError> {
    let images = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    if images.shape[0] != labels.len() {
        return Err(DataError::CountMismatch {
            images: images.shape[0],
            labels: labels.len(),
        });
    }
    let classes = labels.iter().copied().max().unwrap_or(0) + 1;
    Ok(LabeledImageSet {
        images,
        labels,
        classes,
    })
}

/// Writes images back to IDX bytes; exact inverse of [`read_idx_images`].
pub fn write_idx_images(path: &Path, images: &TensorData) -> Result<(), DataError> {
    assert_eq!(images.shape.len(), 4, "write_idx_images: need (N,1,H,W)");
    let mut f = File::create(path)?;
    f.write_all(&IMAGE_MAGIC.to_be_bytes())?;
    f.write_all(&(images.shape[0] as u32).to_be_bytes())?;
    f.write_all(&(images.shape[2] as u32).to_be_bytes())?;
    f.write_all(&(images.shape[3] as u32).to_be_bytes())?;
    let bytes: Vec<u8> = images
        .data
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    f.write_all(&bytes)?;
    Ok(())
}

pub fn write_idx_labels(path: &Path, labels: &[usize]) -> Result<(), DataError> {
    let mut f = File::create(path)?;
    f.write_all(&LABEL_MAGIC.to_be_bytes())?;
    f.write_all(&(labels.len() as u32).to_be_bytes())?;
    let bytes: Vec<u8> = labels.iter().map(|&l| l as u8).collect();
    f.write_all(&bytes)?;
    Ok(())
}

/// Applies a grid-exact group element (quarter-turn multiples, with or
/// without mirror) to an image by index permutation.
///
/// Panics if the element does not map the pixel grid onto itself.
pub fn exact_transform_image(g: FiberElement, img: &[f32], h: usize, w: usize) -> Vec<f32> {
    let gi = inverse(g);
    let (cr, cc) = ((h as f32 - 1.0) / 2.0, (w as f32 - 1.0) / 2.0);
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let p = act_on_plane(gi, [r as f32 - cr, c as f32 - cc]);
            let sr = p[0] + cr;
            let sc = p[1] + cc;
            let (ri, ci) = (sr.round(), sc.round());
            assert!(
                (sr - ri).abs() < 1e-3 && (sc - ci).abs() < 1e-3,
                "element (θ={}, m={}) is not grid-exact",
                g.theta,
                g.mirror
            );
            assert!(
                ri >= 0.0 && ri < h as f32 && ci >= 0.0 && ci < w as f32,
                "exact transform left the grid; image must be square for rotations"
            );
            out[r * w + c] = img[ri as usize * w + ci as usize];
        }
    }
    out
}

/// Exact 180° rotation: double index reversal.
pub fn rot180_exact(img: &[f32], h: usize, w: usize) -> Vec<f32> {
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = img[(h - 1 - r) * w + (w - 1 - c)];
        }
    }
    out
}

/// Exact horizontal mirror: column reversal (the group element `(0, -1)`).
pub fn mirror_exact(img: &[f32], h: usize, w: usize) -> Vec<f32> {
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = img[r * w + (w - 1 - c)];
        }
    }
    out
}

/// Rotates about the pixel center `((H-1)/2, (W-1)/2)` with bilinear
/// interpolation, zero fill outside. At multiples of π the source indices
/// are integral, so the result matches the exact index flip.
pub fn rotate_bilinear(img: &[f32], h: usize, w: usize, angle: f32) -> Vec<f32> {
    let gi = inverse(FiberElement::rotation(angle));
    let (cr, cc) = ((h as f32 - 1.0) / 2.0, (w as f32 - 1.0) / 2.0);
    let mut out = vec![0.0; h * w];
    let sample = |r: isize, c: isize| -> f32 {
        if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
            0.0
        } else {
            img[r as usize * w + c as usize]
        }
    };
    for r in 0..h {
        for c in 0..w {
            let p = act_on_plane(gi, [r as f32 - cr, c as f32 - cc]);
            let mut sr = p[0] + cr;
            let mut sc = p[1] + cc;
            // snap to the grid when the rotation is grid-exact up to
            // floating-point residue, so multiples of π/2 stay exact
            if (sr - sr.round()).abs() < 1e-4 && (sc - sc.round()).abs() < 1e-4 {
                sr = sr.round();
                sc = sc.round();
            }
            let r0 = sr.floor();
            let c0 = sc.floor();
            let fr = sr - r0;
            let fc = sc - c0;
            let (r0, c0) = (r0 as isize, c0 as isize);
            out[r * w + c] = (1.0 - fr) * (1.0 - fc) * sample(r0, c0)
                + (1.0 - fr) * fc * sample(r0, c0 + 1)
                + fr * (1.0 - fc) * sample(r0 + 1, c0)
                + fr * fc * sample(r0 + 1, c0 + 1);
        }
    }
    out
}

/// Which transform separates the toy-task classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyTransform {
    Rotate180,
    Mirror,
}

/// Toy-task construction: original vs transformed copies of one digit.
#[derive(Debug, Clone, Copy)]
pub struct ToyTaskSpec {
    pub transform: ToyTransform,
    pub source_digit: usize,
}

impl ToyTaskSpec {
    pub fn rotate180() -> Self {
        ToyTaskSpec {
            transform: ToyTransform::Rotate180,
            source_digit: 6,
        }
    }

    pub fn mirror() -> Self {
        ToyTaskSpec {
            transform: ToyTransform::Mirror,
            source_digit: 6,
        }
    }
}

fn apply_toy_transform(t: ToyTransform, img: &[f32], h: usize, w: usize) -> Vec<f32> {
    match t {
        ToyTransform::Rotate180 => rot180_exact(img, h, w),
        ToyTransform::Mirror => mirror_exact(img, h, w),
    }
}

/// Builds the two-class toy task from a source set: filters the source
/// digit, transforms a random half (label 1, originals label 0), and
/// returns a stratified 90/10 train/test split. Deterministic given the
/// generator state.
pub fn make_toy_task(
    source: &LabeledImageSet,
    spec: &ToyTaskSpec,
    rng: &mut Rng,
) -> Result<(LabeledImageSet, LabeledImageSet), DataError> {
    let digit_idx: Vec<usize> = source
        .labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == spec.source_digit)
        .map(|(i, _)| i)
        .collect();
    if digit_idx.is_empty() {
        return Err(DataError::NoSourceDigit(spec.source_digit));
    }
    if digit_idx.len() < 2 {
        return Err(DataError::TooSmall {
            need: 2,
            got: digit_idx.len(),
        });
    }
    let (h, w) = source.image_dims();
    let mut order = digit_idx;
    rng.shuffle(&mut order);
    let half = order.len() / 2;

    let mut images = Vec::with_capacity(order.len() * h * w);
    let mut labels = Vec::with_capacity(order.len());
    for (pos, &i) in order.iter().enumerate() {
        let img = source.image(i);
        if pos < half {
            images.extend_from_slice(img);
            labels.push(0);
        } else {
            images.extend(apply_toy_transform(spec.transform, img, h, w));
            labels.push(1);
        }
    }
    let all = LabeledImageSet {
        images: TensorData::new(vec![order.len(), 1, h, w], images),
        labels,
        classes: 2,
    };
    Ok(stratified_split(&all, 0.9, rng))
}

/// Stratified split into `(train, test)`: per class, the first `frac` of a
/// shuffled index list goes to train. Splits are disjoint and cover the set.
pub fn stratified_split(
    set: &LabeledImageSet,
    frac: f32,
    rng: &mut Rng,
) -> (LabeledImageSet, LabeledImageSet) {
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for class in 0..set.classes {
        let mut idx: Vec<usize> = (0..set.len()).filter(|&i| set.labels[i] == class).collect();
        rng.shuffle(&mut idx);
        let cut = (idx.len() as f32 * frac).round() as usize;
        train_idx.extend_from_slice(&idx[..cut]);
        test_idx.extend_from_slice(&idx[cut..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    (set.select(&train_idx), set.select(&test_idx))
}

/// Rotates every image by an independent angle `U[0, 2π)` with bilinear
/// interpolation; labels unchanged.
pub fn make_rotmnist(set: &LabeledImageSet, rng: &mut Rng) -> LabeledImageSet {
    let (h, w) = set.image_dims();
    let mut images = Vec::with_capacity(set.images.data.len());
    for i in 0..set.len() {
        let angle = rng.uniform_in(0.0, 2.0 * std::f32::consts::PI);
        images.extend(rotate_bilinear(set.image(i), h, w, angle));
    }
    LabeledImageSet {
        images: TensorData::new(set.images.shape.clone(), images),
        labels: set.labels.clone(),
        classes: set.classes,
    }
}

const IMG: usize = 28;

fn dist_to_segment(p: [f32; 2], a: [f32; 2], b: [f32; 2]) -> f32 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0);
    let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

/// One chevron glyph: two arms of unequal length meeting at an apex. The
/// unequal arms give the glyph a handedness, so both the 180°-rotated and
/// the mirrored copy are distinguishable from the original (the same
/// pose-sensitivity that separates 6 from 9).
fn draw_chevron(rng: &mut Rng) -> Vec<f32> {
    let apex = [
        14.0 + rng.uniform_in(-2.5, 2.5),
        14.0 + rng.uniform_in(-2.5, 2.5),
    ];
    let base = rng.uniform_in(-0.6, 0.6); // pose jitter, well under ±π/2
    let spread = rng.uniform_in(0.5, 0.7);
    let len_long = rng.uniform_in(9.0, 11.5);
    let len_short = rng.uniform_in(5.5, 7.0);
    let width = rng.uniform_in(1.3, 1.9);
    // arms point "up" (negative row direction) at ±spread around the pose
    let dir = |ang: f32| [-ang.cos(), ang.sin()];
    let a1 = dir(base - spread);
    let a2 = dir(base + spread);
    let e1 = [apex[0] + len_long * a1[0], apex[1] + len_long * a1[1]];
    let e2 = [apex[0] + len_short * a2[0], apex[1] + len_short * a2[1]];
    let mut img = vec![0.0f32; IMG * IMG];
    for r in 0..IMG {
        for c in 0..IMG {
            let p = [r as f32, c as f32];
            let d = dist_to_segment(p, apex, e1).min(dist_to_segment(p, apex, e2));
            let v = (0.5 + (width / 2.0 - d)).clamp(0.0, 1.0);
            img[r * IMG + c] = v;
        }
    }
    img
}

/// Procedural stand-in for the digit-6 pool: `n` chevron glyphs, all
/// labeled with the source digit so [`make_toy_task`] applies unchanged.
pub fn procedural_base(n: usize, rng: &mut Rng) -> LabeledImageSet {
    let mut images = Vec::with_capacity(n * IMG * IMG);
    for _ in 0..n {
        images.extend(draw_chevron(rng));
    }
    LabeledImageSet {
        images: TensorData::new(vec![n, 1, IMG, IMG], images),
        labels: vec![6; n],
        classes: 10,
    }
}

/// Self-contained two-class pose dataset: chevrons, half of them exactly
/// 180°-rotated (label 1). Runs the toy-task pipeline end to end without
/// any external files.
pub fn procedural_fallback(n: usize, rng: &mut Rng) -> Result<LabeledImageSet, DataError> {
    if n < 2 {
        return Err(DataError::TooSmall { need: 2, got: n });
    }
    let base = procedural_base(n, rng);
    let (h, w) = base.image_dims();
    let mut images = Vec::with_capacity(n * h * w);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        if i % 2 == 0 {
            images.extend_from_slice(base.image(i));
            labels.push(0);
        } else {
            images.extend(rot180_exact(base.image(i), h, w));
            labels.push(1);
        }
    }
    Ok(LabeledImageSet {
        images: TensorData::new(vec![n, 1, h, w], images),
        labels,
        classes: 2,
    })
}

/// Ten-class shape glyphs (disks, rings, polygons, crosses, dot rows)
/// whose class is rotation-invariant; rotating them with [`make_rotmnist`]
/// yields a desk-scale stand-in for rotated MNIST.
pub fn procedural_shapes(n: usize, rng: &mut Rng) -> LabeledImageSet {
    let mut images = Vec::with_capacity(n * IMG * IMG);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 10;
        images.extend(draw_shape(class, rng));
        labels.push(class);
    }
    LabeledImageSet {
        images: TensorData::new(vec![n, 1, IMG, IMG], images),
        labels,
        classes: 10,
    }
}

fn draw_shape(class: usize, rng: &mut Rng) -> Vec<f32> {
    let cx = 13.5 + rng.uniform_in(-1.5, 1.5);
    let cy = 13.5 + rng.uniform_in(-1.5, 1.5);
    let scale = rng.uniform_in(0.85, 1.15);
    let base = rng.uniform_in(0.0, std::f32::consts::TAU);
    let mut img = vec![0.0f32; IMG * IMG];
    let aa = |d: f32| (0.5 - d).clamp(0.0, 1.0);
    for r in 0..IMG {
        for c in 0..IMG {
            let p = [r as f32 - cx, c as f32 - cy];
            let rad = (p[0] * p[0] + p[1] * p[1]).sqrt();
            let d = match class {
                // disk
                0 => rad - 6.0 * scale,
                // ring
                1 => (rad - 6.5 * scale).abs() - 1.8 * scale,
                // two dots
                2 => {
                    let off = 5.0 * scale;
                    let a = [p[0] - off * base.cos(), p[1] - off * base.sin()];
                    let b = [p[0] + off * base.cos(), p[1] + off * base.sin()];
                    let da = (a[0] * a[0] + a[1] * a[1]).sqrt();
                    let db = (b[0] * b[0] + b[1] * b[1]).sqrt();
                    da.min(db) - 3.0 * scale
                }
                // regular polygons: 3..=6 sides
                3 | 4 | 5 | 6 => polygon_sdf(p, class, 8.0 * scale, base),
                // cross of two bars
                7 => {
                    let (s, co) = base.sin_cos();
                    let u = (p[0] * co + p[1] * s).abs();
                    let v = (-p[0] * s + p[1] * co).abs();
                    let bar1 = u.max(v - 8.5 * scale) - 1.6 * scale;
                    let bar2 = v.max(u - 8.5 * scale) - 1.6 * scale;
                    bar1.min(bar2)
                }
                // three dots in a row
                8 => {
                    let (s, co) = base.sin_cos();
                    let mut best = f32::INFINITY;
                    for k in [-1.0f32, 0.0, 1.0] {
                        let q = [p[0] - 6.0 * scale * k * co, p[1] - 6.0 * scale * k * s];
                        best = best.min((q[0] * q[0] + q[1] * q[1]).sqrt());
                    }
                    best - 2.4 * scale
                }
                // ring with a center dot
                _ => ((rad - 7.0 * scale).abs() - 1.4 * scale).min(rad - 2.2 * scale),
            };
            img[r * IMG + c] = aa(d);
        }
    }
    img
}

fn polygon_sdf(p: [f32; 2], sides: usize, circumradius: f32, base: f32) -> f32 {
    let apothem = circumradius * (std::f32::consts::PI / sides as f32).cos();
    let mut d = f32::NEG_INFINITY;
    for k in 0..sides {
        let ang = base + std::f32::consts::TAU * k as f32 / sides as f32;
        let n = [ang.cos(), ang.sin()];
        d = d.max(p[0] * n[0] + p[1] * n[1] - apothem);
    }
    d
}
