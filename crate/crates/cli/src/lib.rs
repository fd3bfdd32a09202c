//! Command implementations behind the `leafsev` binary. Every command
//! writes JSON to the given sink and returns a process exit code.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use leafsev_core::deteval::{evaluate, parse_detections_jsonl, parse_voc_xml, EvalReport, Interpolation};
use leafsev_core::grabcut::Rect;
use leafsev_core::raster::{decode_image, encode_png};
use leafsev_core::severity::{quantify_detailed, ColorMode, QuantConfig, SeverityReport};
use leafsev_core::stats::{compare_treatments, parse_treatments_csv, Comparison, KsOptions, DEFAULT_ALPHA};
use leafsev_core::synth::SynthSpec;
use leafsev_core::{Error, ErrorInfo};
use rayon::prelude::*;
use serde::Serialize;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Caps the worker threads used by batch commands.
pub const THREADS_ENV: &str = "LEAFSEV_THREADS";

#[derive(Debug, Parser)]
#[command(name = "leafsev", version, about = "Leaf disease severity quantification and method comparison")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment each leaf photo and report its disease severity.
    Quantify(QuantifyArgs),
    /// Score detections against Pascal VOC annotations.
    Eval(EvalArgs),
    /// Compare quantification treatments (ANOVA, intervals, Tukey, KS).
    Stats(StatsArgs),
    /// Render a synthetic leaf with known severity.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct QuantifyArgs {
    #[arg(required = true)]
    pub images: Vec<PathBuf>,
    #[arg(long, default_value = "value")]
    pub mode: ColorMode,
    /// Cluster count; 3 suits severities between about 25% and 50%.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// GrabCut iterations.
    #[arg(long, default_value_t = 5)]
    pub iters: usize,
    /// Leaf rectangle `x,y,w,h` in image pixels (default: 2% inset).
    #[arg(long)]
    pub rect: Option<Rect>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write `<stem>.json` reports here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write `<stem>.annotated.png` (disease tinted red) to the --out directory.
    #[arg(long, requires = "out")]
    pub annotate: bool,
    /// Print a table instead of JSON lines.
    #[arg(long)]
    pub pretty: bool,
}

impl QuantifyArgs {
    pub fn config(&self) -> QuantConfig {
        QuantConfig {
            mode: self.mode,
            k: self.k,
            iterations: self.iters,
            rect: self.rect,
            seed: self.seed,
            ..QuantConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of Pascal VOC `.xml` annotations.
    #[arg(long)]
    pub gt: PathBuf,
    /// JSON-lines detections.
    #[arg(long)]
    pub det: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    /// `all` (all-point) or `11pt`.
    #[arg(long, default_value = "all")]
    pub interp: Interpolation,
    #[arg(long)]
    pub pretty: bool,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// One column per treatment, header row of treatment names.
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Lilliefors p-values for the normality checks.
    #[arg(long)]
    pub lilliefors: bool,
    #[arg(long)]
    pub pretty: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON leaf specification.
    #[arg(long, required_unless_present = "target_ds", conflicts_with = "target_ds")]
    pub spec: Option<PathBuf>,
    /// Generate a random leaf with this severity (percent) instead.
    #[arg(long)]
    pub target_ds: Option<f64>,
    #[arg(long, default_value_t = 1280)]
    pub width: u32,
    #[arg(long, default_value_t = 720)]
    pub height: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output PNG.
    #[arg(long)]
    pub out: PathBuf,
    /// Ground truth `{leaf_px, disease_px, ds_true}`; printed to stdout when omitted.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Save the specification actually rendered.
    #[arg(long)]
    pub spec_out: Option<PathBuf>,
}

/// Dispatches a parsed command line.
pub fn run(cli: Cli, out: &mut dyn Write) -> i32 {
    let result = match cli.command {
        Command::Quantify(a) => return cmd_quantify(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Stats(a) => cmd_stats(&a, out),
        Command::Synth(a) => cmd_synth(&a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Argument(_) => EXIT_USAGE,
                _ => EXIT_FAILURE,
            }
        }
    }
}

fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> io::Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")
}

fn thread_count() -> Option<usize> {
    let raw = std::env::var(THREADS_ENV).ok()?;
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => Some(n),
        _ => {
            eprintln!("warning: ignoring {THREADS_ENV}={raw:?} (expected a positive integer)");
            None
        }
    }
}

/// Failed image in a quantify batch.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct FileError {
    pub image: String,
    pub error: ErrorInfo,
}

/// Reads, decodes and quantifies one file; writes outputs when asked.
pub fn quantify_file(path: &Path, cfg: &QuantConfig, out_dir: Option<&Path>, annotate: bool) -> Result<SeverityReport, Error> {
    let bytes = fs::read(path)?;
    let img = decode_image(&bytes)?;
    let q = quantify_detailed(&img, cfg)?;
    let mut report = q.report.clone();
    report.image = path.display().to_string();
    if let Some(dir) = out_dir {
        let stem = path.file_stem().map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned());
        let json = serde_json::to_vec_pretty(&report).map_err(|e| Error::Io(e.into()))?;
        fs::write(dir.join(format!("{stem}.json")), json)?;
        if annotate {
            fs::write(dir.join(format!("{stem}.annotated.png")), encode_png(&q.annotated()))?;
        }
    }
    Ok(report)
}

fn cmd_quantify(a: &QuantifyArgs, out: &mut dyn Write) -> i32 {
    let cfg = a.config();
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    if let Some(dir) = &a.out {
        if let Err(e) = fs::create_dir_all(dir) {
            eprintln!("error: cannot create {}: {e}", dir.display());
            return EXIT_FAILURE;
        }
    }
    let work = || -> Vec<Result<SeverityReport, FileError>> {
        a.images
            .par_iter()
            .map(|p| {
                quantify_file(p, &cfg, a.out.as_deref(), a.annotate).map_err(|e| FileError {
                    image: p.display().to_string(),
                    error: ErrorInfo::from(&e),
                })
            })
            .collect()
    };
    let results = match thread_count() {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(work),
            Err(e) => {
                eprintln!("error: cannot start worker pool: {e}");
                return EXIT_FAILURE;
            }
        },
        None => work(),
    };

    let failed = results.iter().filter(|r| r.is_err()).count();
    let written = if a.pretty {
        write_quantify_table(out, &results)
    } else {
        results.iter().try_for_each(|r| match r {
            Ok(rep) => write_json(out, rep),
            Err(fe) => write_json(out, fe),
        })
    };
    for fe in results.iter().filter_map(|r| r.as_ref().err()) {
        eprintln!("{}: {}", fe.image, fe.error.message);
    }
    if let Err(e) = written {
        eprintln!("error: {e}");
        return EXIT_FAILURE;
    }
    if failed > 0 {
        EXIT_FAILURE
    } else {
        EXIT_OK
    }
}

fn write_quantify_table(out: &mut dyn Write, results: &[Result<SeverityReport, FileError>]) -> io::Result<()> {
    writeln!(out, "{:<40} {:>6} {:>2} {:>9} {:>9} {:>8}", "image", "mode", "k", "d", "lad", "ds %")?;
    for r in results {
        match r {
            Ok(rep) => writeln!(
                out,
                "{:<40} {:>6} {:>2} {:>9} {:>9} {:>8.3}",
                rep.image, rep.mode, rep.k, rep.d, rep.lad, rep.ds
            )?,
            Err(fe) => writeln!(out, "{:<40} error: {}", fe.image, fe.error.message)?,
        }
    }
    Ok(())
}

/// Loads every `.xml` file in `dir` (sorted by name) as ground truth.
pub fn load_ground_truth(dir: &Path) -> Result<Vec<leafsev_core::deteval::GroundTruth>, Error> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("xml")))
        .collect();
    files.sort();
    let mut gts = Vec::new();
    for f in files {
        let ann = parse_voc_xml(&fs::read(&f)?).map_err(|e| match e {
            Error::Parse { line, message } => Error::Parse {
                line,
                message: format!("{}: {message}", f.display()),
            },
            other => other,
        })?;
        gts.extend(ann.objects);
    }
    Ok(gts)
}

pub fn eval_files(a: &EvalArgs) -> Result<EvalReport, Error> {
    let gts = load_ground_truth(&a.gt)?;
    let dets = parse_detections_jsonl(&fs::read_to_string(&a.det)?)?;
    evaluate(&dets, &gts, a.iou, a.interp)
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<(), Error> {
    let report = eval_files(a)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if a.pretty {
        writeln!(out, "{:<16} {:>8} {:>5} {:>5} {:>5}", "class", "AP", "TP", "FP", "FN")?;
        for (class, c) in &report.classes {
            writeln!(out, "{class:<16} {:>8.4} {:>5} {:>5} {:>5}", c.ap, c.tp, c.fp, c.fn_)?;
        }
        writeln!(out, "mAP@{} ({:?}) = {:.4}", report.iou_threshold, report.interpolation, report.map)?;
    } else {
        write_json(out, &report)?;
    }
    Ok(())
}

pub fn stats_file(a: &StatsArgs) -> Result<Comparison, Error> {
    let text = fs::read_to_string(&a.csv)?;
    let t = parse_treatments_csv(&text)?;
    compare_treatments(&t, a.alpha, KsOptions { lilliefors: a.lilliefors })
}

fn cmd_stats(a: &StatsArgs, out: &mut dyn Write) -> Result<(), Error> {
    let c = stats_file(a)?;
    if !a.pretty {
        write_json(out, &c)?;
        return Ok(());
    }
    let t = &c.anova;
    writeln!(out, "ANOVA  F({}, {}) = {:.4}  p = {:.4}", t.df_between, t.df_within, t.f, t.p)?;
    writeln!(out, "{:<16} {:>10} {:>10} {:>10}", "treatment", "mean", "lower", "upper")?;
    for i in &c.intervals {
        writeln!(out, "{:<16} {:>10.4} {:>10.4} {:>10.4}", i.treatment, i.mean, i.interval.lower, i.interval.upper)?;
    }
    for r in &c.tukey {
        if let Some((x, y)) = &r.pair {
            let mark = if r.significant == Some(true) { "*" } else { "" };
            writeln!(out, "Tukey {x} vs {y}: q = {:.4}  p = {:.4}{mark}", r.statistic, r.p)?;
        }
    }
    for n in &c.normality {
        writeln!(out, "KS {}: D = {:.4}  p = {:.4}", n.treatment, n.result.statistic, n.result.p)?;
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> Result<(), Error> {
    let spec: SynthSpec = match (&a.spec, a.target_ds) {
        (Some(path), _) => serde_json::from_str(&fs::read_to_string(path)?)
            .map_err(|e| Error::Parse { line: Some(e.line()), message: format!("{}: {e}", path.display()) })?,
        (None, Some(target)) => SynthSpec::with_target_severity(a.width, a.height, target, a.seed)?,
        (None, None) => return Err(Error::Argument("either --spec or --target-ds is required".into())),
    };
    let leaf = spec.render()?;
    fs::write(&a.out, encode_png(&leaf.image))?;
    if let Some(p) = &a.spec_out {
        fs::write(p, serde_json::to_vec_pretty(&spec).map_err(|e| Error::Io(e.into()))?)?;
    }
    match &a.truth {
        Some(p) => fs::write(p, serde_json::to_vec_pretty(&leaf.truth).map_err(|e| Error::Io(e.into()))?)?,
        None => write_json(out, &leaf.truth)?,
    }
    Ok(())
}
