use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use oled::config::{Method, RunConfig};
use oled::data::pgm;
use oled::scoring::{metrics_csv, ScoreType};
use oled_cli::{
    default_run_dir, eval_run, mask_preview, parse_classes, read_config, segment_run, suite_table, train_run,
};

#[derive(Parser)]
#[command(name = "oled", version, about = "Adversarially masked one-class novelty detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a run directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Inlier class (overrides the config).
        #[arg(long)]
        class: Option<u8>,
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory (default: <output_dir>/<dataset>-<method>-c<class>-s<seed>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score the test split with a run's best checkpoint.
    Eval {
        #[arg(long)]
        run: PathBuf,
        /// rec, mask, cont, avg or all.
        #[arg(long, default_value = "all")]
        score_type: String,
    },
    /// Train and evaluate several inlier classes and tabulate AUC.
    MnistSuite {
        #[arg(long)]
        config: PathBuf,
        /// `0..10`, `0..=9` or a comma list.
        #[arg(long, default_value = "0..10")]
        classes: String,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train OLED and the context-autoencoder baseline on the same split.
    AblateCae {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        class: Option<u8>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Pixelwise AUC of a run's mask generator against digit foregrounds.
    SegmentEval {
        #[arg(long)]
        run: PathBuf,
    },
    /// Write a PGM grid of (original, masked, reconstruction) triplets.
    MaskPreview {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 8)]
        n: usize,
        /// Output file (default: <run>/mask-preview.pgm).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(config: &PathBuf, class: Option<u8>, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = read_config(config)?;
    if let Some(c) = class {
        cfg.inlier_class = c;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_rows(title: &str, rows: &[oled::scoring::MetricRow]) {
    println!("{title}");
    print!("{}", metrics_csv(rows));
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train {
            config,
            class,
            seed,
            out,
        } => {
            let cfg = load(&config, class, seed)?;
            let dir = out.unwrap_or_else(|| default_run_dir(&cfg));
            let outcome = train_run(&cfg, &dir, true)?;
            println!("{} (best epoch {})", dir.display(), outcome.best_epoch);
        }
        Command::Eval { run, score_type } => {
            let only = match score_type.as_str() {
                "all" => None,
                s => Some(s.parse::<ScoreType>()?),
            };
            let rows = eval_run(&run, only)?;
            print_rows(&run.display().to_string(), &rows);
        }
        Command::MnistSuite { config, classes, seed } => {
            let base = load(&config, None, seed)?;
            let mut results = Vec::new();
            for class in parse_classes(&classes)? {
                let mut cfg = base.clone();
                cfg.inlier_class = class;
                let dir = default_run_dir(&cfg);
                train_run(&cfg, &dir, true)?;
                results.push((class, eval_run(&dir, None)?));
            }
            let table = suite_table(&results);
            fs::create_dir_all(&base.output_dir)?;
            let path = base.output_dir.join("suite.csv");
            fs::write(&path, &table).with_context(|| format!("writing {}", path.display()))?;
            print!("{table}");
        }
        Command::AblateCae { config, class, seed } => {
            let base = load(&config, class, seed)?;
            let mut table = String::from("method,seed,score_type,auc,eer\n");
            for method in [Method::Oled, Method::Cae] {
                let cfg = RunConfig { method, ..base.clone() };
                let dir = default_run_dir(&cfg);
                train_run(&cfg, &dir, true)?;
                for r in eval_run(&dir, None)? {
                    table.push_str(&format!("{method},{},{},{},{}\n", cfg.seed, r.score_type, r.auc, r.eer));
                }
            }
            fs::create_dir_all(&base.output_dir)?;
            let path = base.output_dir.join(format!("ablation-c{}-s{}.csv", base.inlier_class, base.seed));
            fs::write(&path, &table).with_context(|| format!("writing {}", path.display()))?;
            print!("{table}");
        }
        Command::SegmentEval { run } => {
            let r = segment_run(&run)?;
            let table = format!(
                "group,mean_auc,images\ninlier,{},{}\noutlier,{},{}\n# skipped {} single-class images\n",
                r.inlier_mean_auc, r.inlier_images, r.outlier_mean_auc, r.outlier_images, r.skipped
            );
            fs::write(run.join("segmentation.csv"), &table)?;
            print!("{table}");
        }
        Command::MaskPreview { run, n, out } => {
            let grid = mask_preview(&run, n)?;
            let path = out.unwrap_or_else(|| run.join("mask-preview.pgm"));
            pgm::write(&path, &grid)?;
            println!("{} ({}×{})", path.display(), grid.width, grid.height);
        }
    }
    Ok(())
}
