use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use cxrtasks::codec::{encode_box, MaskTokens};
use cxrtasks::dataset::{
    build_tasks, records_file_name, split_images, Split, SplitAssignment, TaskRecord,
};
use cxrtasks::harness::{
    predict_all, run_pipeline, synthetic_manifest, OracleConfig, OracleMode, PipelineRun,
    SynthConfig,
};
use cxrtasks::io;
use cxrtasks::metrics::{evaluate, Prediction};
use cxrtasks::mixture::{build_schedule, compute_weights};
use cxrtasks::model::{validate_manifest, BBox, DiagnosisLabel, ImageInfo, Manifest};
use cxrtasks::parser::{parse_output, Payload};
use cxrtasks::TaskKind;

#[derive(Parser)]
#[command(
    name = "cxrtasks",
    version,
    about = "Chest X-ray multi-task dataset builder and evaluator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a manifest and list every violation.
    Validate { manifest: PathBuf },
    /// Assign images to train/validation/test.
    Split {
        manifest: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write `{task}_{split}.jsonl` record files.
    Build {
        manifest: PathBuf,
        #[arg(long)]
        split_file: PathBuf,
        /// `all` or one task name.
        #[arg(long, default_value = "all")]
        task: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit a mixture schedule as JSONL.
    Schedule {
        /// Task sizes such as `diagnosis=600,detection=400`.
        #[arg(long, conflicts_with = "records", required_unless_present = "records")]
        sizes: Option<String>,
        /// Directory of record files; training split sizes are counted.
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        batches: u64,
        #[arg(long, default_value_t = 8)]
        batch_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the location tokens for a pixel box.
    EncodeBox {
        /// Image size as `WIDTHxHEIGHT`.
        #[arg(long)]
        image: String,
        /// `y_min,x_min,y_max,x_max` in pixels.
        #[arg(long = "box", allow_hyphen_values = true)]
        bbox: String,
    },
    /// Parse one generated line and print the result as JSON.
    Decode {
        #[arg(long)]
        task: TaskKind,
        #[arg(long, allow_hyphen_values = true)]
        line: String,
        #[arg(long, default_value = "1000x1000")]
        image: String,
    },
    /// Produce oracle predictions for a record file.
    Oracle {
        records: PathBuf,
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predictions against records.
    Eval {
        /// Gold record files (repeatable).
        #[arg(long, required = true, num_args = 1..)]
        records: Vec<PathBuf>,
        #[arg(long)]
        predictions: PathBuf,
        /// Needed for detection and segmentation gold geometry.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split, build, schedule, predict and evaluate in one go.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 30)]
        batches: u64,
        #[arg(long, default_value_t = 8)]
        batch_size: usize,
        #[command(flatten)]
        oracle: OracleArgs,
    },
    /// Write a synthetic manifest with rectangular annotations.
    Synth {
        #[arg(long, default_value_t = 100)]
        images: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long = "oracle-mode", alias = "mode", default_value = "perfect")]
    mode: OracleMode,
    #[arg(long = "oracle-seed", default_value_t = 0)]
    oracle_seed: u64,
    #[arg(long, default_value_t = 0.0)]
    drop_prob: f64,
    #[arg(long, default_value_t = 0)]
    jitter_bins: u16,
    #[arg(long, default_value_t = 0.0)]
    garble_prob: f64,
    #[arg(long, default_value_t = 0.0)]
    answer_flip_prob: f64,
}

impl OracleArgs {
    fn config(&self) -> Result<OracleConfig> {
        let c = OracleConfig {
            mode: self.mode,
            drop_prob: self.drop_prob,
            jitter_bins: self.jitter_bins,
            garble_prob: self.garble_prob,
            answer_flip_prob: self.answer_flip_prob,
            seed: self.oracle_seed,
        };
        c.validate()?;
        Ok(c)
    }
}

fn parse_image(spec: &str) -> Result<ImageInfo> {
    let (w, h) = spec
        .split_once(['x', 'X'])
        .ok_or_else(|| anyhow!("image size {spec:?} is not WIDTHxHEIGHT"))?;
    let w: u32 = w
        .trim()
        .parse()
        .with_context(|| format!("width in {spec:?}"))?;
    let h: u32 = h
        .trim()
        .parse()
        .with_context(|| format!("height in {spec:?}"))?;
    if w == 0 || h == 0 {
        bail!("image size {spec:?} has a zero side");
    }
    Ok(ImageInfo::new("cli", w, h, DiagnosisLabel::Normal))
}

fn parse_box(spec: &str) -> Result<BBox> {
    let v: Vec<f64> = spec
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("box {spec:?}"))?;
    let [y0, x0, y1, x1] = v[..] else {
        bail!("box {spec:?} needs four comma-separated numbers");
    };
    Ok(BBox::new(y0, x0, y1, x1)?)
}

fn parse_sizes(spec: &str) -> Result<BTreeMap<TaskKind, u64>> {
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| anyhow!("size entry {kv:?} is not task=count"))?;
            let task: TaskKind = k.trim().parse()?;
            let n: u64 = v
                .trim()
                .parse()
                .with_context(|| format!("count in {kv:?}"))?;
            Ok((task, n))
        })
        .collect()
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => io::write_text(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn jsonl<T: serde::Serialize>(items: &[T]) -> Result<String> {
    let mut s = String::new();
    for item in items {
        s.push_str(&serde_json::to_string(item)?);
        s.push('\n');
    }
    Ok(s)
}

fn validate(manifest: &Path) -> Result<()> {
    let m = Manifest::load(manifest)?;
    let violations = validate_manifest(&m);
    for v in &violations {
        println!("{v}");
    }
    if !violations.is_empty() {
        bail!("{} violation(s)", violations.len());
    }
    println!(
        "ok: {} images, {} annotations",
        m.images.len(),
        m.annotations.len()
    );
    Ok(())
}

fn build(manifest: &Path, split_file: &Path, task: &str, out: &Path) -> Result<()> {
    let m = Manifest::load(manifest)?;
    let split: SplitAssignment = io::read_json(split_file)?;
    let tasks = if task == "all" {
        TaskKind::ALL.to_vec()
    } else {
        vec![task.parse()?]
    };
    let datasets = build_tasks(&m, &split, &tasks, split.seed)?;
    for path in datasets.write(out)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn train_sizes(dir: &Path) -> Result<BTreeMap<TaskKind, u64>> {
    let mut sizes = BTreeMap::new();
    for task in TaskKind::ALL {
        let path = dir.join(records_file_name(task, Split::Train));
        if path.exists() {
            let records: Vec<TaskRecord> = io::read_jsonl(&path)?;
            if !records.is_empty() {
                sizes.insert(task, records.len() as u64);
            }
        }
    }
    if sizes.is_empty() {
        bail!("no training records under {}", dir.display());
    }
    Ok(sizes)
}

fn decode(task: TaskKind, line: &str, image: &str) -> Result<()> {
    let img = parse_image(image)?;
    let parsed = parse_output(task, line, &img);
    let bbox = |b: &BBox| json!([b.y_min, b.x_min, b.y_max, b.x_max]);
    let payload = match &parsed.payload {
        Payload::Diagnosis(label) => json!({ "label": label.map(|l| l.as_str()) }),
        Payload::Report(text) => json!({ "text": text }),
        Payload::Answer(text) => json!({ "answer": text }),
        Payload::Detections(items) => json!(items
            .iter()
            .map(|d| json!({
                "label": d.instance.label,
                "loc": d.instance.loc.indices(),
                "box": bbox(&d.bbox),
            }))
            .collect::<Vec<_>>()),
        Payload::Segments(items) => json!(items
            .iter()
            .map(|s| {
                let MaskTokens { loc, seg } = s.instance.tokens;
                json!({
                    "label": s.instance.label,
                    "loc": loc.indices(),
                    "seg": seg.map(|t| t.index()),
                    "box": bbox(&s.bbox),
                    "area": s.mask.count_ones(),
                    "rle": s.mask.to_rle(),
                })
            })
            .collect::<Vec<_>>()),
    };
    let out = json!({
        "task": task,
        "result": payload,
        "diagnostics": parsed.diagnostics,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn eval(
    records: &[PathBuf],
    predictions: &Path,
    manifest: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let mut gold: Vec<TaskRecord> = Vec::new();
    for path in records {
        gold.extend(io::read_jsonl::<TaskRecord>(path)?);
    }
    let preds: Vec<Prediction> = io::read_jsonl(predictions)?;
    let manifest = manifest.map(Manifest::load).transpose()?;
    let report = evaluate(&gold, &preds, manifest.as_ref())?;
    emit(out, &report.to_json())
}

fn split(manifest: &Path, seed: u64, out: Option<&Path>) -> Result<()> {
    let m = Manifest::load(manifest)?;
    let split = split_images(&m, seed)?;
    let mut text = serde_json::to_string_pretty(&split)?;
    text.push('\n');
    emit(out, &text)
}

fn schedule(
    sizes: Option<&str>,
    records: Option<&Path>,
    batches: u64,
    batch_size: usize,
    seed: u64,
    out: Option<&Path>,
) -> Result<()> {
    let sizes = match (sizes, records) {
        (Some(s), _) => parse_sizes(s)?,
        (None, Some(dir)) => train_sizes(dir)?,
        (None, None) => bail!("pass --sizes or --records"),
    };
    let weights = compute_weights(&sizes)?;
    eprintln!("weights {weights}");
    let schedule = build_schedule(&weights, &sizes, batch_size, batches, seed)?;
    emit(out, &jsonl(&schedule.entries)?)
}

fn encode(image: &str, bbox: &str) -> Result<()> {
    let img = parse_image(image)?;
    println!("{}", encode_box(&parse_box(bbox)?, &img));
    Ok(())
}

fn oracle(records: &Path, args: &OracleArgs, out: Option<&Path>) -> Result<()> {
    let config = args.config()?;
    let recs: Vec<TaskRecord> = io::read_jsonl(records)?;
    emit(out, &jsonl(&predict_all(&recs, &config))?)
}

fn run(
    manifest: PathBuf,
    out_dir: PathBuf,
    seed: u64,
    batches: u64,
    batch_size: usize,
    args: &OracleArgs,
) -> Result<()> {
    let mut run = PipelineRun::new(manifest, out_dir, seed, args.config()?);
    run.epoch_batches = batches;
    run.batch_size = batch_size;
    let report = run_pipeline(&run)?;
    print!("{}", report.to_json());
    Ok(())
}

fn synth(images: usize, seed: u64, out: &Path) -> Result<()> {
    let m = synthetic_manifest(&SynthConfig {
        images,
        seed,
        ..Default::default()
    });
    io::write_text(out, &(m.to_json() + "\n"))?;
    Ok(())
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Validate { manifest } => validate(&manifest).context("validate"),
        Command::Split {
            manifest,
            seed,
            out,
        } => split(&manifest, seed, out.as_deref()).context("split"),
        Command::Build {
            manifest,
            split_file,
            task,
            out,
        } => build(&manifest, &split_file, &task, &out).context("build"),
        Command::Schedule {
            sizes,
            records,
            batches,
            batch_size,
            seed,
            out,
        } => schedule(
            sizes.as_deref(),
            records.as_deref(),
            batches,
            batch_size,
            seed,
            out.as_deref(),
        )
        .context("schedule"),
        Command::EncodeBox { image, bbox } => encode(&image, &bbox).context("encode-box"),
        Command::Decode { task, line, image } => decode(task, &line, &image).context("decode"),
        Command::Oracle {
            records,
            oracle: args,
            out,
        } => oracle(&records, &args, out.as_deref()).context("oracle"),
        Command::Eval {
            records,
            predictions,
            manifest,
            out,
        } => eval(&records, &predictions, manifest.as_deref(), out.as_deref()).context("eval"),
        Command::Run {
            manifest,
            out_dir,
            seed,
            batches,
            batch_size,
            oracle: args,
        } => run(manifest, out_dir, seed, batches, batch_size, &args).context("run"),
        Command::Synth { images, seed, out } => synth(images, seed, &out).context("synth"),
    }
}

/// Join the error chain, skipping causes already spelled out by their parent.
fn chain_message(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let s = cause.to_string();
        if msg.ends_with(&s) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&s);
    }
    msg
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", chain_message(&e));
            ExitCode::FAILURE
        }
    }
}
