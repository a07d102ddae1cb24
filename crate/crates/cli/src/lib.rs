//! Run orchestration behind the `oled` binary: dataset loading from a run
//! config, run directories, evaluation tables and previews.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use oled::config::{DatasetKind, Method, RunConfig};
use oled::data::checkpoint::Checkpoint;
use oled::data::pgm::{self, Frame};
use oled::data::protocol::{build_cifar_protocol, build_mnist_protocol, build_ucsd_protocol};
use oled::data::{cifar, idx, DatasetSplit, RawDataset};
use oled::mask::apply_mask;
use oled::model::Model;
use oled::scoring::{
    aggregate_scores, group_labels, metrics_csv, score_samples, segmentation_eval, MetricRow, ScoreSet, ScoreType,
    SegmentationReport,
};
use oled::training::{self, epochs_csv, CheckpointSink, TrainOutcome, BEST_CHECKPOINT};
use oled::Tensor;

pub const CONFIG_FILE: &str = "config.txt";
pub const EPOCHS_FILE: &str = "epochs.csv";
pub const SPLIT_FILE: &str = "split.txt";
pub const LOG_FILE: &str = "train.log";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SCORES_FILE: &str = "scores.csv";

pub fn read_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    RunConfig::parse(&text).with_context(|| format!("parsing config {}", path.display()))
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref().with_context(|| format!("config key '{key}' is not set"))
}

fn existing(p: &Path) -> Result<&Path> {
    if !p.exists() {
        bail!("dataset path {} does not exist", p.display());
    }
    Ok(p)
}

fn pgm_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).with_context(|| format!("listing {}", d.display()))? {
            let p = e?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "pgm") {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Test frames listed in `labels.txt` as `<relative path> <0|1>` lines.
fn labelled_frames(dir: &Path) -> Result<Vec<(Frame, bool)>> {
    let list = dir.join("labels.txt");
    let text = fs::read_to_string(&list).with_context(|| format!("reading {}", list.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, label) = line
            .rsplit_once(char::is_whitespace)
            .with_context(|| format!("{}:{}: expected '<file> <0|1>'", list.display(), i + 1))?;
        let outlier = match label {
            "0" => false,
            "1" => true,
            other => bail!("{}:{}: label '{other}' is not 0 or 1", list.display(), i + 1),
        };
        out.push((pgm::read(&dir.join(name.trim()))?, outlier));
    }
    Ok(out)
}

/// Builds the evaluation split described by the config.
pub fn load_split(cfg: &RunConfig) -> Result<DatasetSplit> {
    let mut split = match cfg.dataset {
        DatasetKind::Mnist => {
            let raw = match &cfg.mnist_dir {
                Some(dir) => {
                    let dir = existing(dir)?;
                    let part = |prefix: &str| {
                        let images = dir.join(format!("{prefix}-images-idx3-ubyte"));
                        let labels = dir.join(format!("{prefix}-labels-idx1-ubyte"));
                        idx::read_mnist(existing(&images)?, existing(&labels)?).map_err(anyhow::Error::from)
                    };
                    RawDataset::concat(vec![part("train")?, part("t10k")?])?
                }
                None => {
                    let images = existing(required(&cfg.mnist_images, "mnist_images")?)?;
                    let labels = existing(required(&cfg.mnist_labels, "mnist_labels")?)?;
                    idx::read_mnist(images, labels)?
                }
            };
            build_mnist_protocol(&raw, cfg.inlier_class, cfg.seed, cfg.val_fraction, cfg.canvas)?
        }
        DatasetKind::Cifar => {
            let dir = existing(required(&cfg.cifar_dir, "cifar_dir")?)?;
            let (train, test) = cifar::read_dir(dir)?;
            build_cifar_protocol(&train, &test, cfg.inlier_class, cfg.seed, cfg.val_fraction, cfg.canvas)?
        }
        DatasetKind::Ucsd => {
            let train_dir = existing(required(&cfg.ucsd_train_dir, "ucsd_train_dir")?)?;
            let test_dir = existing(required(&cfg.ucsd_test_dir, "ucsd_test_dir")?)?;
            let train = pgm_files(train_dir)?
                .iter()
                .map(|p| pgm::read(p))
                .collect::<oled::Result<Vec<_>>>()?;
            let test = labelled_frames(test_dir)?;
            build_ucsd_protocol(&train, &test, cfg.patch_size, cfg.canvas, cfg.seed, cfg.val_fraction)?
        }
    };
    if cfg.train_limit > 0 && split.train.batch() > cfg.train_limit {
        let keep: Vec<usize> = (0..cfg.train_limit).collect();
        split.train = split.train.select(&keep);
        split.meta.train = cfg.train_limit;
    }
    Ok(split)
}

/// `<output_dir>/<dataset>-<method>[-c<class>]-s<seed>`.
pub fn default_run_dir(cfg: &RunConfig) -> PathBuf {
    let class = match cfg.dataset {
        DatasetKind::Ucsd => String::new(),
        _ => format!("-c{}", cfg.inlier_class),
    };
    cfg.output_dir.join(format!("{}-{}{}-s{}", cfg.dataset, cfg.method, class, cfg.seed))
}

/// Append-only run log; the only place timestamps appear.
pub struct RunLog {
    file: fs::File,
    echo: bool,
}

impl RunLog {
    pub fn open(dir: &Path, echo: bool) -> Result<Self> {
        let path = dir.join(LOG_FILE);
        let file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .with_context(|| format!("opening {}", path.display()))?;
        Ok(RunLog { file, echo })
    }

    pub fn line(&mut self, msg: &str) -> Result<()> {
        let t = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        writeln!(self.file, "[{t}] {msg}")?;
        if self.echo {
            eprintln!("{msg}");
        }
        Ok(())
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Trains a model into `dir`: resolved config, split metadata, per-epoch
/// checkpoints, `best.ckpt`, the epoch CSV and a log.
pub fn train_run(cfg: &RunConfig, dir: &Path, echo: bool) -> Result<TrainOutcome> {
    let split = load_split(cfg)?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let text = cfg.to_text();
    write(&dir.join(CONFIG_FILE), &text)?;
    write(&dir.join(SPLIT_FILE), &split.meta.to_text())?;
    let mut log = RunLog::open(dir, echo)?;
    log.line(&format!(
        "{} {} class {} seed {}: {} train / {} val / {} test",
        cfg.dataset,
        cfg.method,
        cfg.inlier_class,
        cfg.seed,
        split.train.batch(),
        split.val.batch(),
        split.test.batch()
    ))?;
    let sink = CheckpointSink {
        dir,
        config_text: &text,
    };
    let spec = cfg.model_spec();
    let tcfg = cfg.train_config();
    let mut log_err = Ok(());
    let on_epoch = |r: &training::EpochRecord| {
        let auc = r.val_auc[1].map_or("n/a".to_string(), |a| format!("{a:.4}"));
        let msg = format!(
            "epoch {}: L_mask {:.4} L_cont {:.4} L_rec {:.4} val s_mask AUC {auc}",
            r.epoch, r.losses.l_mask, r.losses.l_cont, r.losses.l_rec
        );
        if log_err.is_ok() {
            log_err = log.line(&msg);
        }
    };
    let outcome = match cfg.method {
        Method::Oled => training::train(&split, &spec, &tcfg, Some(&sink), on_epoch)?,
        Method::Cae => training::train_cae_baseline(&split, &spec, &tcfg, Some(&sink), on_epoch)?,
    };
    log_err?;
    write(&dir.join(EPOCHS_FILE), &epochs_csv(&outcome.records))?;
    log.line(&format!("best epoch {}", outcome.best_epoch))?;
    Ok(outcome)
}

/// Config and best model of a finished run.
pub fn load_run(dir: &Path) -> Result<(RunConfig, Model)> {
    let cfg = read_config(&dir.join(CONFIG_FILE))?;
    let ckpt_path = dir.join(BEST_CHECKPOINT);
    if !ckpt_path.exists() {
        bail!("run {} has no {BEST_CHECKPOINT}", dir.display());
    }
    let ckpt = Checkpoint::load(&ckpt_path)?;
    let mut model = Model::new(&cfg.model_spec())?;
    model
        .load_state(&ckpt)
        .with_context(|| format!("restoring {}", ckpt_path.display()))?;
    Ok((cfg, model))
}

/// Scores the test split; patch protocols are reduced to one score per frame.
pub fn score_test(model: &Model, split: &DatasetSplit) -> Result<(ScoreSet, Vec<MetricRow>)> {
    let raw = score_samples(model, &split.test, 0)?;
    let (raw, labels) = match &split.test_groups {
        Some(g) => (raw.group_max(g)?, group_labels(&split.test_labels, g)),
        None => (raw, split.test_labels.clone()),
    };
    Ok(aggregate_scores(&raw, &labels)?)
}

/// Writes `metrics.csv` (filtered to `only` if given) and `scores.csv`.
pub fn eval_run(dir: &Path, only: Option<ScoreType>) -> Result<Vec<MetricRow>> {
    let (cfg, model) = load_run(dir)?;
    let split = load_split(&cfg)?;
    let (set, rows) = score_test(&model, &split)?;
    let rows: Vec<MetricRow> = rows.into_iter().filter(|r| only.is_none_or(|t| r.score_type == t)).collect();
    write(&dir.join(METRICS_FILE), &metrics_csv(&rows))?;
    write(&dir.join(SCORES_FILE), &set.to_csv())?;
    Ok(rows)
}

pub fn segment_run(dir: &Path) -> Result<SegmentationReport> {
    let (cfg, model) = load_run(dir)?;
    let Some(mm) = model.mask_module() else {
        bail!("run {} has no mask module", dir.display());
    };
    let split = load_split(&cfg)?;
    Ok(segmentation_eval(mm, &split.test, &split.test_raw, &split.geometry, &split.test_labels)?)
}

fn to_gray(v: f32) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

/// One row per sample of (original, masked, reconstruction) panels. Masked
/// pixels hold 0, which renders as mid-gray. Colour inputs are averaged to
/// gray.
pub fn mask_preview(dir: &Path, n: usize) -> Result<Frame> {
    let (cfg, model) = load_run(dir)?;
    let split = load_split(&cfg)?;
    let n = n.min(split.test.batch());
    if n == 0 {
        bail!("mask preview needs at least one sample");
    }
    let x = split.test.select(&(0..n).collect::<Vec<_>>());
    let masks = model.masks(&x, &(0..n as u64).collect::<Vec<_>>())?;
    let xm = apply_mask(&x, &masks)?;
    let y = model.reconstructor.net.infer(&xm)?;
    let s = x.shape();
    let (c, h, w) = (s[1], s[2], s[3]);
    let mut pixels = vec![0u8; n * h * 3 * w];
    for (panel, t) in [&x, &xm, &y].into_iter().enumerate() {
        for i in 0..n {
            let img = t.sample(i);
            for yy in 0..h {
                for xx in 0..w {
                    let v = (0..c).map(|ch| img[(ch * h + yy) * w + xx]).sum::<f32>() / c as f32;
                    pixels[(i * h + yy) * 3 * w + panel * w + xx] = to_gray(v);
                }
            }
        }
    }
    Ok(Frame::new(n * h, 3 * w, pixels)?)
}

/// Parses `a..b` (exclusive), `a..=b` or a comma list of class ids.
pub fn parse_classes(s: &str) -> Result<Vec<u8>> {
    let classes: Vec<u8> = if let Some((a, b)) = s.split_once("..=") {
        (a.trim().parse()?..=b.trim().parse()?).collect()
    } else if let Some((a, b)) = s.split_once("..") {
        (a.trim().parse()?..b.trim().parse()?).collect()
    } else {
        s.split(',').map(|p| p.trim().parse()).collect::<Result<_, _>>()?
    };
    if classes.is_empty() || classes.iter().any(|&c| c > 9) {
        bail!("class list '{s}' must name classes in 0..=9");
    }
    Ok(classes)
}

/// Per-class AUC table with score types as rows and an average column.
pub fn suite_table(results: &[(u8, Vec<MetricRow>)]) -> String {
    let classes: Vec<String> = results.iter().map(|(c, _)| c.to_string()).collect();
    let mut s = format!("# average over classes {}\n", classes.join(","));
    s.push_str("score_type,");
    for c in &classes {
        s.push_str(&format!("class_{c},"));
    }
    s.push_str("average\n");
    for t in ScoreType::ALL {
        s.push_str(t.name());
        let mut sum = 0.0;
        for (_, rows) in results {
            let auc = rows.iter().find(|r| r.score_type == t).map_or(f64::NAN, |r| r.auc);
            sum += auc;
            s.push_str(&format!(",{auc}"));
        }
        s.push_str(&format!(",{}\n", sum / results.len() as f64));
    }
    s
}

/// Tensor of the first `n` test images, for quick checks.
pub fn test_head(split: &DatasetSplit, n: usize) -> Tensor {
    split.test.select(&(0..n.min(split.test.batch())).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_lists() {
        assert_eq!(parse_classes("0..10").unwrap(), (0..10).collect::<Vec<u8>>());
        assert_eq!(parse_classes("0..9").unwrap().len(), 9);
        assert_eq!(parse_classes("0..=9").unwrap().len(), 10);
        assert_eq!(parse_classes("1,8").unwrap(), vec![1, 8]);
        assert!(parse_classes("3,12").is_err());
        assert!(parse_classes("x").is_err());
    }

    #[test]
    fn suite_table_averages_listed_classes() {
        let row = |t, auc| MetricRow {
            score_type: t,
            auc,
            eer: 0.0,
            n_inlier: 1,
            n_outlier: 1,
        };
        let rows = |a| ScoreType::ALL.iter().map(|&t| row(t, a)).collect::<Vec<_>>();
        let table = suite_table(&[(1, rows(0.5)), (8, rows(1.0))]);
        assert!(table.starts_with("# average over classes 1,8\n"));
        assert!(table.contains("mask,0.5,1,0.75\n"), "{table}");
        assert_eq!(table.lines().count(), 6);
    }

    #[test]
    fn missing_dataset_path_is_named() {
        let mut cfg = RunConfig::default();
        cfg.mnist_images = Some("/nonexistent/images".into());
        cfg.mnist_labels = Some("/nonexistent/labels".into());
        let err = load_split(&cfg).unwrap_err().to_string();
        assert!(err.contains("/nonexistent/images"), "{err}");
    }
}
