//! Datasets: IDX digit images, windowed monthly price series, the affine
//! normalization applied to both, and deterministic synthetic stand-ins.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Side length of preprocessed images.
pub const IMAGE_SIDE: usize = 14;
pub const N_DIGIT_CLASSES: usize = 10;

pub const INPUT_RANGE: (f64, f64) = (-1.0, 1.0);
pub const OUTPUT_RANGE: (f64, f64) = (0.01, 0.99);

/// Paired input/output samples, optionally labelled, with the normalization
/// that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
    labels: Option<Vec<usize>>,
    normalization: Option<Normalization>,
}

fn uniform_width(rows: &[Vec<f64>], what: &'static str) -> Result<usize> {
    let width = rows.first().map_or(0, Vec::len);
    for row in rows {
        if row.len() != width {
            return Err(Error::DimensionMismatch {
                what,
                expected: width,
                actual: row.len(),
            });
        }
    }
    Ok(width)
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, outputs: Vec<Vec<f64>>) -> Result<Self> {
        if inputs.len() != outputs.len() {
            return Err(Error::DimensionMismatch {
                what: "output rows",
                expected: inputs.len(),
                actual: outputs.len(),
            });
        }
        uniform_width(&inputs, "input row length")?;
        uniform_width(&outputs, "output row length")?;
        Ok(Dataset {
            inputs,
            outputs,
            labels: None,
            normalization: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::DimensionMismatch {
                what: "labels",
                expected: self.len(),
                actual: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.first().map_or(0, Vec::len)
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.outputs
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    pub fn sample(&self, n: usize) -> (&[f64], &[f64]) {
        (&self.inputs[n], &self.outputs[n])
    }

    pub fn samples(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.inputs
            .iter()
            .zip(&self.outputs)
            .map(|(x, y)| (x.as_slice(), y.as_slice()))
    }

    /// Fits per-element min/max on this data and maps inputs and outputs to
    /// the given ranges.
    pub fn normalize(mut self, input_range: (f64, f64), output_range: (f64, f64)) -> Self {
        let inputs = AffineNormalizer::fit(&self.inputs, input_range);
        let outputs = AffineNormalizer::fit(&self.outputs, output_range);
        self.inputs = self.inputs.iter().map(|r| inputs.apply(r)).collect();
        self.outputs = self.outputs.iter().map(|r| outputs.apply(r)).collect();
        self.normalization = Some(Normalization { inputs, outputs });
        self
    }

    /// Keeps the samples at the given indices, in order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Dataset {
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            outputs: indices.iter().map(|&i| self.outputs[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            normalization: self.normalization.clone(),
        }
    }

    /// Writes `inputs.csv`, `outputs.csv`, optional `labels.csv` and
    /// `normalization.json` into `dir`.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_matrix_csv(&dir.join("inputs.csv"), "in", &self.inputs, self.n_inputs())?;
        write_matrix_csv(&dir.join("outputs.csv"), "out", &self.outputs, self.n_outputs())?;
        if let Some(labels) = &self.labels {
            let mut w = csv::Writer::from_path(dir.join("labels.csv"))?;
            w.write_record(["label"])?;
            for l in labels {
                w.write_record([l.to_string()])?;
            }
            w.flush().map_err(|e| Error::io(dir.join("labels.csv"), e))?;
        }
        if let Some(norm) = &self.normalization {
            let path = dir.join("normalization.json");
            let json = serde_json::to_string_pretty(norm)?;
            fs::write(&path, json).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let inputs = read_matrix_csv(&dir.join("inputs.csv"))?;
        let outputs = read_matrix_csv(&dir.join("outputs.csv"))?;
        let mut data = Dataset::new(inputs, outputs)?;
        let labels_path = dir.join("labels.csv");
        if labels_path.exists() {
            let mut r = csv::Reader::from_path(&labels_path)?;
            let labels = r
                .records()
                .map(|rec| {
                    let rec = rec?;
                    rec[0]
                        .trim()
                        .parse::<usize>()
                        .map_err(|e| Error::Format(format!("bad label {:?}: {e}", &rec[0])))
                })
                .collect::<Result<Vec<_>>>()?;
            data = data.with_labels(labels)?;
        }
        let norm_path = dir.join("normalization.json");
        if norm_path.exists() {
            let text = fs::read_to_string(&norm_path).map_err(|e| Error::io(&norm_path, e))?;
            data.normalization = Some(serde_json::from_str(&text)?);
        }
        Ok(data)
    }
}

fn write_matrix_csv(path: &Path, prefix: &str, rows: &[Vec<f64>], width: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((1..=width).map(|i| format!("{prefix}_{i}")))?;
    for row in rows {
        w.write_record(row.iter().map(f64::to_string))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn read_matrix_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path)?;
    r.records()
        .map(|rec| {
            rec?.iter()
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Format(format!("{}: bad number {v:?}: {e}", path.display())))
                })
                .collect()
        })
        .collect()
}

/// Per-element affine map from the observed `[min, max]` onto a target range.
///
/// Elements whose observed range is degenerate map to the midpoint of the
/// target range and are reported by [`AffineNormalizer::degenerate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineNormalizer {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub range: (f64, f64),
}

impl AffineNormalizer {
    pub fn fit(rows: &[Vec<f64>], range: (f64, f64)) -> Self {
        let width = rows.first().map_or(0, Vec::len);
        let mut min = vec![f64::INFINITY; width];
        let mut max = vec![f64::NEG_INFINITY; width];
        for row in rows {
            for (i, &v) in row.iter().enumerate() {
                min[i] = min[i].min(v);
                max[i] = max[i].max(v);
            }
        }
        AffineNormalizer { min, max, range }
    }

    pub fn degenerate(&self) -> Vec<bool> {
        self.min.iter().zip(&self.max).map(|(a, b)| a >= b).collect()
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        let (lo, hi) = self.range;
        row.iter()
            .enumerate()
            .map(|(i, &v)| {
                let (a, b) = (self.min[i], self.max[i]);
                if a >= b {
                    0.5 * (lo + hi)
                } else {
                    lo + (v - a) * (hi - lo) / (b - a)
                }
            })
            .collect()
    }

    /// Maps normalized values back to raw units; degenerate elements return
    /// their constant raw value.
    pub fn invert(&self, row: &[f64]) -> Vec<f64> {
        let (lo, hi) = self.range;
        row.iter()
            .enumerate()
            .map(|(i, &v)| {
                let (a, b) = (self.min[i], self.max[i]);
                if a >= b {
                    a
                } else {
                    a + (v - lo) * (b - a) / (hi - lo)
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub inputs: AffineNormalizer,
    pub outputs: AffineNormalizer,
}

/// Grayscale images (row-major bytes) with digit labels.
#[derive(Clone, Debug, PartialEq)]
pub struct RawImageSet {
    pub rows: usize,
    pub cols: usize,
    pub images: Vec<Vec<u8>>,
    pub labels: Vec<u8>,
}

impl RawImageSet {
    pub fn new(rows: usize, cols: usize, images: Vec<Vec<u8>>, labels: Vec<u8>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if images.len() != labels.len() {
            return Err(Error::Format(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(img) = images.iter().find(|img| img.len() != rows * cols) {
            return Err(Error::DimensionMismatch {
                what: "image pixels",
                expected: rows * cols,
                actual: img.len(),
            });
        }
        if let Some(&l) = labels.iter().find(|&&l| l as usize >= N_DIGIT_CLASSES) {
            return Err(Error::Format(format!("label {l} out of range 0..=9")));
        }
        Ok(RawImageSet {
            rows,
            cols,
            images,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| {
            Error::Format(format!(
                "truncated IDX data: need {n} bytes at offset {}, have {}",
                self.pos,
                self.bytes.len() - self.pos
            ))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32_be(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Parses an IDX3 unsigned-byte image file into `(rows, cols, images)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, Vec<Vec<u8>>)> {
    let mut cur = ByteCursor { bytes, pos: 0 };
    let magic = cur.u32_be()?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!("bad IDX image magic {magic:#010x}")));
    }
    let n = cur.u32_be()? as usize;
    let rows = cur.u32_be()? as usize;
    let cols = cur.u32_be()? as usize;
    let images = (0..n)
        .map(|_| cur.take(rows * cols).map(<[u8]>::to_vec))
        .collect::<Result<_>>()?;
    Ok((rows, cols, images))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut cur = ByteCursor { bytes, pos: 0 };
    let magic = cur.u32_be()?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!("bad IDX label magic {magic:#010x}")));
    }
    let n = cur.u32_be()? as usize;
    Ok(cur.take(n)?.to_vec())
}

pub fn encode_idx_images(rows: usize, cols: usize, images: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for v in [IDX_IMAGES_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        out.extend_from_slice(img);
    }
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<RawImageSet> {
    let (rows, cols, images) = parse_idx_images(&read_file(images_path)?)?;
    let labels = parse_idx_labels(&read_file(labels_path)?)?;
    RawImageSet::new(rows, cols, images, labels)
}

pub fn save_idx(set: &RawImageSet, images_path: &Path, labels_path: &Path) -> Result<()> {
    let write = |path: &Path, bytes: Vec<u8>| {
        fs::File::create(path)
            .and_then(|mut f| f.write_all(&bytes))
            .map_err(|e| Error::io(path, e))
    };
    write(images_path, encode_idx_images(set.rows, set.cols, &set.images))?;
    write(labels_path, encode_idx_labels(&set.labels))
}

/// Tight bounding box `(top, left, height, width)` of pixels above zero, or
/// `None` for a blank image.
pub fn content_bounds(pixels: &[u8], rows: usize, cols: usize) -> Option<(usize, usize, usize, usize)> {
    let (mut top, mut left, mut bottom, mut right) = (usize::MAX, usize::MAX, 0, 0);
    for r in 0..rows {
        for c in 0..cols {
            if pixels[r * cols + c] > 0 {
                top = top.min(r);
                bottom = bottom.max(r);
                left = left.min(c);
                right = right.max(c);
            }
        }
    }
    (top != usize::MAX).then(|| (top, left, bottom - top + 1, right - left + 1))
}

/// Bilinear resampling with pixel-centre alignment and edge clamping.
pub fn resize_bilinear(src: &[f64], rows: usize, cols: usize, out_rows: usize, out_cols: usize) -> Vec<f64> {
    let coord = |dst: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        let s = ((dst as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, s - i0 as f64)
    };
    let mut out = Vec::with_capacity(out_rows * out_cols);
    for r in 0..out_rows {
        let (r0, r1, fr) = coord(r, rows, out_rows);
        for c in 0..out_cols {
            let (c0, c1, fc) = coord(c, cols, out_cols);
            let top = src[r0 * cols + c0] * (1.0 - fc) + src[r0 * cols + c1] * fc;
            let bot = src[r1 * cols + c0] * (1.0 - fc) + src[r1 * cols + c1] * fc;
            out.push(top * (1.0 - fr) + bot * fr);
        }
    }
    out
}

/// Crops one image to its content and resamples it to 14×14 raw intensities.
/// Blank images are resampled whole.
pub fn crop_and_resize(pixels: &[u8], rows: usize, cols: usize) -> Vec<f64> {
    let (top, left, h, w) = content_bounds(pixels, rows, cols).unwrap_or((0, 0, rows, cols));
    let crop: Vec<f64> = (top..top + h)
        .flat_map(|r| (left..left + w).map(move |c| (r, c)))
        .map(|(r, c)| pixels[r * cols + c] as f64)
        .collect();
    resize_bilinear(&crop, h, w, IMAGE_SIDE, IMAGE_SIDE)
}

/// Crop, resize to 14×14, one-hot encode the labels and normalize inputs to
/// [−1, 1] and outputs to [0.01, 0.99] per element.
pub fn preprocess_images(set: &RawImageSet) -> Result<Dataset> {
    if set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let inputs = set
        .images
        .iter()
        .map(|img| crop_and_resize(img, set.rows, set.cols))
        .collect();
    let outputs = set
        .labels
        .iter()
        .map(|&l| {
            let mut y = vec![0.0; N_DIGIT_CLASSES];
            y[l as usize] = 1.0;
            y
        })
        .collect();
    let labels = set.labels.iter().map(|&l| l as usize).collect();
    Ok(Dataset::new(inputs, outputs)?
        .with_labels(labels)?
        .normalize(INPUT_RANGE, OUTPUT_RANGE))
}

// Seven-segment layout: a (top), b (top right), c (bottom right), d (bottom),
// e (bottom left), f (top left), g (middle).
const SEGMENTS: [[bool; 7]; 10] = [
    [true, true, true, true, true, true, false],
    [false, true, true, false, false, false, false],
    [true, true, false, true, true, false, true],
    [true, true, true, true, false, false, true],
    [false, true, true, false, false, true, true],
    [true, false, true, true, false, true, true],
    [true, false, true, true, true, true, true],
    [true, true, true, false, false, false, false],
    [true, true, true, true, true, true, true],
    [true, true, true, true, false, true, true],
];

/// Deterministic 28×28 seven-segment digit images, `per_class` of each digit,
/// interleaved by class. Position, size, stroke width, slant and ink level vary
/// per image.
pub fn synth_digits(seed: u64, per_class: usize) -> RawImageSet {
    const SIDE: usize = 28;
    let mut rng = rng::seeded(seed);
    let mut images = Vec::with_capacity(per_class * N_DIGIT_CLASSES);
    let mut labels = Vec::with_capacity(per_class * N_DIGIT_CLASSES);
    for _ in 0..per_class {
        for digit in 0..N_DIGIT_CLASSES {
            let w: f64 = rng.random_range(8.0..13.0);
            let h: f64 = rng.random_range(14.0..20.0);
            let x0: f64 = rng.random_range(2.0..(SIDE as f64 - w - 2.0));
            let y0: f64 = rng.random_range(2.0..(SIDE as f64 - h - 2.0));
            let stroke: f64 = rng.random_range(1.2..2.4);
            let slant: f64 = rng.random_range(-0.25..0.25);
            let ink: f64 = rng.random_range(180.0..255.0);
            let mid = y0 + h / 2.0;
            // (x_a, y_a, x_b, y_b) per segment before slant
            let segs = [
                (x0, y0, x0 + w, y0),
                (x0 + w, y0, x0 + w, mid),
                (x0 + w, mid, x0 + w, y0 + h),
                (x0, y0 + h, x0 + w, y0 + h),
                (x0, mid, x0, y0 + h),
                (x0, y0, x0, mid),
                (x0, mid, x0 + w, mid),
            ];
            let mut img = vec![0u8; SIDE * SIDE];
            for r in 0..SIDE {
                for c in 0..SIDE {
                    let (py, px) = (r as f64 + 0.5, c as f64 + 0.5);
                    // undo the slant around the glyph's vertical centre
                    let px = px + slant * (py - mid);
                    let dist = segs
                        .iter()
                        .zip(SEGMENTS[digit])
                        .filter(|(_, on)| *on)
                        .map(|(&(ax, ay, bx, by), _)| segment_distance(px, py, ax, ay, bx, by))
                        .fold(f64::INFINITY, f64::min);
                    let v = (1.0 - (dist - stroke / 2.0)).clamp(0.0, 1.0);
                    img[r * SIDE + c] = (v * ink).round() as u8;
                }
            }
            images.push(img);
            labels.push(digit as u8);
        }
    }
    RawImageSet {
        rows: SIDE,
        cols: SIDE,
        images,
        labels,
    }
}

fn segment_distance(px: f64, py: f64, ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (ax + t * dx, ay + t * dy);
    ((px - qx).powi(2) + (py - qy).powi(2)).sqrt()
}

/// Monthly values for named items.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesTable {
    months: Vec<i64>,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl TimeSeriesTable {
    pub fn new(months: Vec<i64>, names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::DimensionMismatch {
                what: "series columns",
                expected: names.len(),
                actual: columns.len(),
            });
        }
        if let Some(col) = columns.iter().find(|c| c.len() != months.len()) {
            return Err(Error::DimensionMismatch {
                what: "series length",
                expected: months.len(),
                actual: col.len(),
            });
        }
        if months.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Format("months must be strictly increasing".into()));
        }
        Ok(TimeSeriesTable {
            months,
            names,
            columns,
        })
    }

    pub fn months(&self) -> &[i64] {
        &self.months
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.months.len()
    }

    pub fn is_empty(&self) -> bool {
        self.months.is_empty()
    }

    /// Reads a CSV whose first column is the month index and whose remaining
    /// columns are items.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.len() < 2 {
            return Err(Error::Format("expected a month column and at least one item".into()));
        }
        let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut months = Vec::new();
        let mut columns = vec![Vec::new(); names.len()];
        for rec in r.records() {
            let rec = rec?;
            months.push(
                rec[0]
                    .trim()
                    .parse()
                    .map_err(|e| Error::Format(format!("bad month {:?}: {e}", &rec[0])))?,
            );
            for (col, v) in columns.iter_mut().zip(rec.iter().skip(1)) {
                col.push(
                    v.trim()
                        .parse()
                        .map_err(|e| Error::Format(format!("bad value {v:?}: {e}")))?,
                );
            }
        }
        TimeSeriesTable::new(months, names, columns)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(std::iter::once("month").chain(self.names.iter().map(String::as_str)))?;
        for (t, month) in self.months.iter().enumerate() {
            w.write_record(
                std::iter::once(month.to_string()).chain(self.columns.iter().map(|c| c[t].to_string())),
            )?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Sliding windows without normalization.
///
/// Sample `n` uses months `[n, n + window)` of every item as input, laid out
/// item by item with the oldest month first, and predicts every item at month
/// `n + window + horizon − 1`.
pub fn window_raw(table: &TimeSeriesTable, window: usize, horizon: usize) -> Result<Dataset> {
    if window == 0 || horizon == 0 {
        return Err(Error::param("window and horizon must be at least 1"));
    }
    let len = table.len();
    if len < window + horizon {
        return Err(Error::param(format!(
            "series of {len} months is too short for window {window} + horizon {horizon}"
        )));
    }
    let count = len - window - horizon + 1;
    let inputs = (0..count)
        .map(|n| {
            table
                .columns
                .iter()
                .flat_map(|col| col[n..n + window].iter().copied())
                .collect()
        })
        .collect();
    let outputs = (0..count)
        .map(|n| table.columns.iter().map(|col| col[n + window + horizon - 1]).collect())
        .collect();
    Dataset::new(inputs, outputs)
}

/// Sliding windows normalized to the standard input and output ranges.
pub fn window_timeseries(table: &TimeSeriesTable, window: usize, horizon: usize) -> Result<Dataset> {
    Ok(window_raw(table, window, horizon)?.normalize(INPUT_RANGE, OUTPUT_RANGE))
}

pub const CPI_ITEM_NAMES: [&str; 3] = ["taro", "radish", "carrot"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthCpiParams {
    pub base: f64,
    /// Per-item trend is drawn uniformly from this range (index points per month).
    pub trend: (f64, f64),
    /// Per-item seasonal amplitude range.
    pub amplitude: (f64, f64),
    /// Standard deviation of the AR(1) noise innovations.
    pub noise: f64,
    pub noise_persistence: f64,
}

impl Default for SynthCpiParams {
    fn default() -> Self {
        SynthCpiParams {
            base: 100.0,
            trend: (0.02, 0.1),
            amplitude: (6.0, 15.0),
            noise: 1.5,
            noise_persistence: 0.5,
        }
    }
}

/// Synthetic monthly price indices: linear trend plus a period-12 seasonal
/// profile (two harmonics) plus AR(1) noise, per item.
pub fn synth_cpi(seed: u64, months: usize, items: usize) -> Result<TimeSeriesTable> {
    synth_cpi_with(seed, months, items, &SynthCpiParams::default())
}

pub fn synth_cpi_with(
    seed: u64,
    months: usize,
    items: usize,
    params: &SynthCpiParams,
) -> Result<TimeSeriesTable> {
    if months < 48 {
        return Err(Error::param(format!("need at least 48 months, got {months}")));
    }
    if items == 0 {
        return Err(Error::param("need at least one item"));
    }
    let mut rng = rng::seeded(seed);
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let tau = std::f64::consts::TAU;
    let mut columns = Vec::with_capacity(items);
    for _ in 0..items {
        let trend = rng.random_range(params.trend.0..=params.trend.1);
        let amp = rng.random_range(params.amplitude.0..=params.amplitude.1);
        let phase = rng.random_range(0.0..tau);
        let second = rng.random_range(0.2..0.5);
        let mut noise = 0.0;
        let col = (0..months)
            .map(|t| {
                let angle = tau * t as f64 / 12.0 + phase;
                noise = params.noise_persistence * noise + params.noise * normal.sample(&mut rng);
                params.base + trend * t as f64 + amp * (angle.sin() + second * (2.0 * angle).cos()) + noise
            })
            .collect();
        columns.push(col);
    }
    let names = (0..items)
        .map(|i| {
            CPI_ITEM_NAMES
                .get(i)
                .map_or_else(|| format!("item_{}", i + 1), |s| s.to_string())
        })
        .collect();
    TimeSeriesTable::new((0..months as i64).collect(), names, columns)
}
