//! Anomaly scores, their normalization and evaluation tables.

use std::fmt;
use std::str::FromStr;

use crate::data::Geometry;
use crate::error::{OledError, Result};
use crate::mask::{apply_mask, MaskModule};
use crate::metrics::{auc, eer};
use crate::model::Model;
use crate::tensor::Tensor;
use crate::training::sample_errors;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScoreType {
    Rec,
    Mask,
    Cont,
    Avg,
}

impl ScoreType {
    pub const ALL: [ScoreType; 4] = [ScoreType::Rec, ScoreType::Mask, ScoreType::Cont, ScoreType::Avg];

    pub fn name(self) -> &'static str {
        match self {
            ScoreType::Rec => "rec",
            ScoreType::Mask => "mask",
            ScoreType::Cont => "cont",
            ScoreType::Avg => "avg",
        }
    }
}

impl FromStr for ScoreType {
    type Err = OledError;

    fn from_str(s: &str) -> Result<Self> {
        ScoreType::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| OledError::Config(format!("unknown score type '{s}'")))
    }
}

impl fmt::Display for ScoreType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-sample raw errors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawScores {
    pub e_rec: Vec<f64>,
    pub e_mask: Vec<f64>,
    pub e_cont: Vec<f64>,
}

impl RawScores {
    pub fn len(&self) -> usize {
        self.e_rec.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e_rec.is_empty()
    }

    fn extend(&mut self, other: RawScores) {
        self.e_rec.extend(other.e_rec);
        self.e_mask.extend(other.e_mask);
        self.e_cont.extend(other.e_cont);
    }

    /// Collapses samples sharing a group id to the per-group maximum of each
    /// error; groups are numbered densely from zero.
    pub fn group_max(&self, groups: &[usize]) -> Result<RawScores> {
        if groups.len() != self.len() {
            return Err(OledError::shape("group ids", &[self.len()], &[groups.len()]));
        }
        let n = groups.iter().max().map_or(0, |&g| g + 1);
        let mut out = RawScores {
            e_rec: vec![f64::NEG_INFINITY; n],
            e_mask: vec![f64::NEG_INFINITY; n],
            e_cont: vec![f64::NEG_INFINITY; n],
        };
        for (i, &g) in groups.iter().enumerate() {
            out.e_rec[g] = out.e_rec[g].max(self.e_rec[i]);
            out.e_mask[g] = out.e_mask[g].max(self.e_mask[i]);
            out.e_cont[g] = out.e_cont[g].max(self.e_cont[i]);
        }
        if out.e_rec.iter().any(|v| !v.is_finite()) {
            return Err(OledError::Dataset("group ids are not dense".into()));
        }
        Ok(out)
    }
}

/// Group labels: a group is an outlier if any member is.
pub fn group_labels(labels: &[bool], groups: &[usize]) -> Vec<bool> {
    let n = groups.iter().max().map_or(0, |&g| g + 1);
    let mut out = vec![false; n];
    for (&l, &g) in labels.iter().zip(groups) {
        out[g] |= l;
    }
    out
}

/// Fixed evaluation chunk; results do not depend on the thread count.
const CHUNK: usize = 64;

fn score_chunk(model: &Model, x: &Tensor, ids: &[u64]) -> Result<RawScores> {
    let masks = model.masks(x, ids)?;
    let r = &model.reconstructor.net;
    let xm = apply_mask(x, &masks)?;
    let ym = r.infer(&xm)?;
    let y = r.infer(x)?;
    let mut out = RawScores::default();
    for i in 0..x.batch() {
        let (m, c, e) = sample_errors(x.sample(i), ym.sample(i), y.sample(i), masks.masks.sample(i));
        out.e_mask.push(m);
        out.e_cont.push(c);
        out.e_rec.push(e);
    }
    Ok(out)
}

/// Worker count from `OLED_THREADS` (default 1).
pub fn thread_count() -> usize {
    std::env::var("OLED_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

/// Raw errors for every sample of `x`, in inference mode. Sample `i` has id
/// `first_id + i` (used by the random-square masker).
pub fn score_samples(model: &Model, x: &Tensor, first_id: u64) -> Result<RawScores> {
    let n = x.batch();
    let chunks: Vec<(Tensor, Vec<u64>)> = (0..n)
        .step_by(CHUNK)
        .map(|s| {
            let idx: Vec<usize> = (s..(s + CHUNK).min(n)).collect();
            let ids = idx.iter().map(|&i| first_id + i as u64).collect();
            (x.select(&idx), ids)
        })
        .collect();
    let threads = thread_count().min(chunks.len().max(1));
    let mut out = RawScores::default();
    if threads <= 1 {
        for (c, ids) in &chunks {
            out.extend(score_chunk(model, c, ids)?);
        }
        return Ok(out);
    }
    let results: Vec<Result<RawScores>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let chunks = &chunks;
                s.spawn(move || {
                    chunks
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| i % threads == t)
                        .map(|(_, (c, ids))| score_chunk(model, c, ids))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        let per_thread: Vec<Vec<Result<RawScores>>> = handles.into_iter().map(|h| h.join().expect("scoring worker panicked")).collect();
        let mut iters: Vec<_> = per_thread.into_iter().map(|v| v.into_iter()).collect();
        (0..chunks.len()).map(|i| iters[i % threads].next().expect("one result per chunk")).collect()
    });
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// `(v − min)/(max − min)`; a constant vector maps to zeros.
pub fn minmax_scale(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(OledError::Metric("min-max scaling of an empty vector".into()));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(OledError::NonFinite("raw score".into()));
    }
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Ok(vec![0.0; raw.len()]);
    }
    Ok(raw.iter().map(|v| (v - lo) / (hi - lo)).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreSet {
    pub raw: RawScores,
    pub labels: Vec<bool>,
    pub s_rec: Vec<f64>,
    pub s_mask: Vec<f64>,
    pub s_cont: Vec<f64>,
    pub s_avg: Vec<f64>,
}

impl ScoreSet {
    pub fn scores(&self, t: ScoreType) -> &[f64] {
        match t {
            ScoreType::Rec => &self.s_rec,
            ScoreType::Mask => &self.s_mask,
            ScoreType::Cont => &self.s_cont,
            ScoreType::Avg => &self.s_avg,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,label,e_rec,e_mask,e_cont,s_rec,s_mask,s_cont,s_avg\n");
        for i in 0..self.labels.len() {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                i,
                self.labels[i] as u8,
                self.raw.e_rec[i],
                self.raw.e_mask[i],
                self.raw.e_cont[i],
                self.s_rec[i],
                self.s_mask[i],
                self.s_cont[i],
                self.s_avg[i]
            ));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub score_type: ScoreType,
    pub auc: f64,
    pub eer: f64,
    pub n_inlier: usize,
    pub n_outlier: usize,
}

pub const METRICS_CSV_HEADER: &str = "score_type,auc,eer,n_inlier,n_outlier";

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut s = String::from(METRICS_CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!("{},{},{},{},{}\n", r.score_type, r.auc, r.eer, r.n_inlier, r.n_outlier));
    }
    s
}

/// Normalizes every raw column over the whole set, adds `s_avg`, and
/// computes AUC and EER for the four score types.
pub fn aggregate_scores(raw: &RawScores, labels: &[bool]) -> Result<(ScoreSet, Vec<MetricRow>)> {
    if labels.len() != raw.len() {
        return Err(OledError::shape("score labels", &[raw.len()], &[labels.len()]));
    }
    let s_rec = minmax_scale(&raw.e_rec)?;
    let s_mask = minmax_scale(&raw.e_mask)?;
    let s_cont = minmax_scale(&raw.e_cont)?;
    let s_avg = (0..raw.len()).map(|i| (s_rec[i] + s_mask[i] + s_cont[i]) / 3.0).collect();
    let set = ScoreSet {
        raw: raw.clone(),
        labels: labels.to_vec(),
        s_rec,
        s_mask,
        s_cont,
        s_avg,
    };
    let n_outlier = labels.iter().filter(|&&o| o).count();
    let rows = ScoreType::ALL
        .iter()
        .map(|&t| {
            Ok(MetricRow {
                score_type: t,
                auc: auc(set.scores(t), labels)?,
                eer: eer(set.scores(t), labels)?,
                n_inlier: labels.len() - n_outlier,
                n_outlier,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((set, rows))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentationReport {
    pub inlier_mean_auc: f64,
    pub outlier_mean_auc: f64,
    pub inlier_images: usize,
    pub outlier_images: usize,
    /// Images whose ground truth is all background or all foreground.
    pub skipped: usize,
}

/// Pixelwise AUC of the activation map against the foreground
/// (`intensity ≠ 0`) of each original image, averaged per group. Maps are
/// cropped back to the original image area before comparison.
pub fn segmentation_eval(mm: &MaskModule, images: &Tensor, raw: &[u8], geometry: &Geometry, labels: &[bool]) -> Result<SegmentationReport> {
    let g = geometry;
    if g.channels != 1 {
        return Err(OledError::Config("segmentation evaluation needs single-channel images".into()));
    }
    let n = images.batch();
    let img_len = g.height * g.width;
    if raw.len() != n * img_len || labels.len() != n {
        return Err(OledError::shape("segmentation inputs", &[n * img_len, n], &[raw.len(), labels.len()]));
    }
    let (oy, ox) = g.offset();
    let (mut sums, mut counts, mut skipped) = ([0.0f64; 2], [0usize; 2], 0usize);
    for start in (0..n).step_by(CHUNK) {
        let idx: Vec<usize> = (start..(start + CHUNK).min(n)).collect();
        let a = mm.generator.infer(&images.select(&idx))?;
        for (j, &i) in idx.iter().enumerate() {
            let truth: Vec<bool> = raw[i * img_len..(i + 1) * img_len].iter().map(|&v| v != 0).collect();
            if truth.iter().all(|&t| t) || truth.iter().all(|&t| !t) {
                skipped += 1;
                continue;
            }
            let map = a.sample(j);
            let scores: Vec<f64> = (0..img_len)
                .map(|p| map[(p / g.width + oy) * g.canvas_w + p % g.width + ox] as f64)
                .collect();
            let k = labels[i] as usize;
            sums[k] += auc(&scores, &truth)?;
            counts[k] += 1;
        }
    }
    let mean = |k: usize| if counts[k] == 0 { f64::NAN } else { sums[k] / counts[k] as f64 };
    Ok(SegmentationReport {
        inlier_mean_auc: mean(0),
        outlier_mean_auc: mean(1),
        inlier_images: counts[0],
        outlier_images: counts[1],
        skipped,
    })
}
