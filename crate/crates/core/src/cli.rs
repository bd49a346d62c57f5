//! `boxkit` command-line front-end.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::anchors::{generate_anchors, Anchor};
use crate::assignment::{assign, label_histogram, LabelHistogram, Thresholds};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{evaluate, ImageRecord, Subset};
use crate::geometry::BBox;
use crate::io;
use crate::losses::gradcheck::grad_check;
use crate::losses::{LossConfig, RegressionLoss};
use crate::nms::{postprocess, NmsVariant};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const THREADS_ENV: &str = "BOXKIT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "boxkit", version, about = "Anchor, loss, NMS and miss-rate tooling for pedestrian detectors")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file (default stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Emit the anchor pyramid for an image size.
    Anchors {
        #[arg(long)]
        width: u32,
        #[arg(long)]
        height: u32,
    },
    /// Assign soft labels and regression targets to anchors.
    Assign {
        #[arg(long)]
        anchors: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[command(flatten)]
        thresholds: ThresholdArgs,
    },
    /// Label histogram as CSV; totals go to stderr.
    Stats(StatsArgs),
    /// Evaluate a regression loss on one box pair.
    Loss {
        /// smoothl1, iou, giou, diou, centeriou or all.
        #[arg(long)]
        kind: String,
        /// x1,y1,x2,y2
        #[arg(long, allow_hyphen_values = true)]
        pred: String,
        #[arg(long, allow_hyphen_values = true)]
        gt: String,
        /// Reference box for offset normalization (default: gt).
        #[arg(long = "ref", allow_hyphen_values = true)]
        reference: Option<String>,
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Finite-difference check of the Center-IoU gradient.
    GradCheck {
        #[arg(long, default_value_t = 500)]
        trials: usize,
        /// Comma-separated sigma values.
        #[arg(long, default_value = "0.1,0.5,0.9")]
        sigmas: String,
    },
    /// Rescore or suppress detections.
    Nms {
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        nt: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        /// Input file (default stdin).
        #[arg(long = "in")]
        input: Option<PathBuf>,
        /// Apply the confidence filter and top-k limits around NMS.
        #[arg(long)]
        postprocess: bool,
    },
    /// Log-average miss rate of detections against annotations.
    Eval {
        #[arg(long)]
        dets: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        iou: Option<f64>,
        #[arg(long)]
        subset: Option<String>,
        /// Write the curve as CSV here.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct ThresholdArgs {
    #[arg(long)]
    tneg: Option<f64>,
    #[arg(long)]
    tpos: Option<f64>,
    #[arg(long)]
    tvis: Option<f64>,
}

impl ThresholdArgs {
    fn resolve(&self, cfg: &RunConfig) -> Result<Thresholds<f64>> {
        let base = cfg.thresholds();
        Thresholds::new(
            self.tneg.unwrap_or(base.t_neg),
            self.tpos.unwrap_or(base.t_pos),
            self.tvis.unwrap_or(base.t_vis),
        )
    }
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Samples written by `assign`.
    #[arg(long, conflicts_with_all = ["anchors", "annotations"])]
    samples: Option<PathBuf>,
    #[arg(long)]
    anchors: Option<PathBuf>,
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Generate anchors for this image size instead of reading `--anchors`.
    #[arg(long, requires = "height")]
    width: Option<u32>,
    #[arg(long, requires = "width")]
    height: Option<u32>,
    #[arg(long)]
    bins: Option<usize>,
    #[command(flatten)]
    thresholds: ThresholdArgs,
}

/// Parse `argv` (including the program name), run, and return the exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_VALIDATION
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        // a pool may already exist when run() is called more than once in-process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let out = cli.out.as_deref();
    match cli.command {
        Command::Anchors { width, height } => {
            let anchors = generate_anchors(width, height, &cfg.anchors)?;
            with_output(out, |w| io::write_anchors(w, &anchors))
        }
        Command::Assign {
            anchors,
            annotations,
            thresholds,
        } => {
            let t = thresholds.resolve(&cfg)?;
            let anchors = io::parse_anchors(open(&anchors)?)?;
            let images = io::parse_annotations(open(&annotations)?)?;
            let assigned = images
                .par_iter()
                .map(|(name, gts)| assign(&anchors, gts, &t).map(|s| (name, s)))
                .collect::<Result<Vec<_>>>()?;
            with_output(out, |w| {
                for (name, samples) in &assigned {
                    io::write_samples(&mut *w, name, samples)?;
                }
                Ok(())
            })
        }
        Command::Stats(args) => stats(&cfg, &args, out),
        Command::Loss {
            kind,
            pred,
            gt,
            reference,
            sigma,
        } => {
            let pred = parse_box(&pred)?;
            let gt = parse_box(&gt)?;
            let reference = reference.as_deref().map(parse_box).transpose()?.unwrap_or(gt);
            let mut loss_cfg: LossConfig<f64> = cfg.loss;
            if let Some(s) = sigma {
                loss_cfg.sigma = s;
            }
            loss_cfg.validate()?;
            let kinds: Vec<RegressionLoss> = if kind == "all" {
                RegressionLoss::ALL.to_vec()
            } else {
                vec![RegressionLoss::from_str(&kind)?]
            };
            let values = kinds
                .iter()
                .map(|k| k.eval(&pred, &gt, &reference, &loss_cfg).map(|v| (k.name(), v)))
                .collect::<Result<Vec<_>>>()?;
            with_output(out, |w| {
                if values.len() == 1 {
                    writeln!(w, "{}", io::fmt_num(values[0].1))?;
                } else {
                    for (name, v) in &values {
                        writeln!(w, "{name}\t{}", io::fmt_num(*v))?;
                    }
                }
                Ok(())
            })
        }
        Command::GradCheck { trials, sigmas } => {
            let sigmas = parse_list(&sigmas)?;
            let report = grad_check(trials, cli.seed, &sigmas)?;
            let verdict = if report.passed() { "PASS" } else { "FAIL" };
            with_output(out, |w| {
                writeln!(w, "max relative error: {:.3e}", report.max_relative_error)?;
                writeln!(
                    w,
                    "checked {} of {} (skipped {})",
                    report.checked, report.trials, report.skipped
                )?;
                writeln!(w, "{verdict}")?;
                Ok(())
            })?;
            if report.passed() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "gradient check failed: max relative error {:.3e}, skipped {:.2}%",
                    report.max_relative_error,
                    100.0 * report.skipped_fraction()
                )))
            }
        }
        Command::Nms {
            variant,
            nt,
            sigma,
            input,
            postprocess: full,
        } => {
            let mut nms_cfg = cfg.nms.clone();
            if let Some(v) = variant {
                nms_cfg.variant = v;
            }
            if let Some(nt) = nt {
                nms_cfg.nt = nt;
            }
            if let Some(s) = sigma {
                nms_cfg.sigma = s;
            }
            let pp = nms_cfg.postprocess()?;
            let variant: NmsVariant<f64> = pp.variant;
            let images = match input.as_deref() {
                Some(p) => io::parse_flat_detections(open(p)?)?,
                None => io::parse_flat_detections(std::io::stdin().lock())?,
            };
            let results = images
                .par_iter()
                .map(|(name, dets)| {
                    let r = if full { postprocess(dets, &pp) } else { variant.apply(dets) };
                    r.map(|d| (name.clone(), d))
                })
                .collect::<Result<Vec<_>>>()?;
            with_output(out, |w| io::write_flat_detections(w, &results))
        }
        Command::Eval {
            dets,
            annotations,
            iou,
            subset,
            curve,
        } => {
            let mut eval_cfg = cfg.eval;
            if let Some(t) = iou {
                eval_cfg.iou_thresh = t;
            }
            if let Some(s) = subset {
                eval_cfg.subset = Subset::from_str(&s)?;
            }
            let ann = io::parse_annotations(open(&annotations)?)?;
            let det = io::parse_detections(open(&dets)?)?;
            let records = join_images(ann, det);
            let report = evaluate(&records, &eval_cfg)?;
            if let Some(p) = curve {
                let w = BufWriter::new(File::create(p)?);
                io::write_curve_csv(w, &report.curve)?;
            }
            with_output(out, |w| {
                writeln!(w, "MR-2: {:.2}%", 100.0 * report.log_average_miss_rate)?;
                Ok(())
            })?;
            eprintln!(
                "images {} | ground truth {} | matched {} | recall {:.4}",
                report.n_images,
                report.n_gt,
                report.n_matched,
                report.recall()
            );
            Ok(())
        }
    }
}

fn stats(cfg: &RunConfig, args: &StatsArgs, out: Option<&Path>) -> Result<()> {
    let bins = args.bins.unwrap_or(cfg.assignment.histogram_bins);
    let hist = if let Some(path) = &args.samples {
        let samples = io::parse_samples(open(path)?)?;
        label_histogram(&samples, bins)?
    } else {
        let ann_path = args
            .annotations
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("stats needs --samples or --annotations".into()))?;
        let anchors: Vec<Anchor<f64>> = match (&args.anchors, args.width, args.height) {
            (Some(p), _, _) => io::parse_anchors(open(p)?)?,
            (None, Some(w), Some(h)) => generate_anchors(w, h, &cfg.anchors)?,
            _ => {
                return Err(Error::InvalidArgument(
                    "stats needs --anchors or --width/--height".into(),
                ))
            }
        };
        let t = args.thresholds.resolve(cfg)?;
        let images = io::parse_annotations(open(ann_path)?)?;
        let parts = images
            .par_iter()
            .map(|(_, gts)| assign(&anchors, gts, &t).and_then(|s| label_histogram(&s, bins)))
            .collect::<Result<Vec<_>>>()?;
        let mut total = LabelHistogram::empty(bins)?;
        for p in &parts {
            total.merge(p);
        }
        total
    };
    with_output(out, |w| io::write_histogram_csv(w, &hist))?;
    eprintln!(
        "positive {} | semi-positive {} | negative {} | excluded {}",
        hist.positive, hist.semi_positive, hist.negative, hist.excluded
    );
    Ok(())
}

/// Pair annotations and detections by image; images missing from either
/// side get an empty list.
fn join_images(ann: Vec<io::ImageAnnotations>, det: Vec<io::ImageDetections>) -> Vec<ImageRecord<f64>> {
    let mut map: std::collections::BTreeMap<String, ImageRecord<f64>> = std::collections::BTreeMap::new();
    for (name, gts) in ann {
        map.entry(name).or_insert_with(empty_record).annotations = gts;
    }
    for (name, dets) in det {
        map.entry(name).or_insert_with(empty_record).detections = dets;
    }
    map.into_values().collect()
}

fn empty_record() -> ImageRecord<f64> {
    ImageRecord {
        detections: Vec::new(),
        annotations: Vec::new(),
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("not a number: '{t}'")))
        })
        .collect()
}

fn parse_box(s: &str) -> Result<BBox<f64>> {
    let v = parse_list(s)?;
    let c: [f64; 4] = v
        .try_into()
        .map_err(|_| Error::InvalidArgument(format!("expected x1,y1,x2,y2, got '{s}'")))?;
    BBox::from_array(c)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

fn with_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            f(&mut w)?;
            w.flush()?;
        }
        None => {
            let mut w = BufWriter::new(std::io::stdout().lock());
            f(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}
