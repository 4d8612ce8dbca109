//! Acceptance gate: runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any fails.

mod support;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use cxrtasks::codec::{
    bin_center, bin_index, check_encodable, decode_box, decode_mask, encode_box, encode_mask,
    render_suffix,
};
use cxrtasks::dataset::{build_all, split_image_sets, split_images, QuestionCategory, Split};
use cxrtasks::harness::{run_pipeline, synthetic_manifest, OracleConfig, PipelineRun, SynthConfig};
use cxrtasks::metrics::{
    bleu4, classification_metrics, map_at_50, meteor_lite, rouge_l, sequence_nll, ImageInstances,
    Labeled, LossMask,
};
use cxrtasks::mixture::{build_schedule, compute_weights, MixtureWeights};
use cxrtasks::model::{
    box_iou, mask_iou, mask_to_bbox, BBox, BinaryMask, DiagnosisLabel, ImageInfo, Manifest,
};
use cxrtasks::parser::{parse_detection, parse_output, parse_segmentation};
use cxrtasks::TaskKind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn paper_sizes() -> BTreeMap<TaskKind, u64> {
    [
        (TaskKind::Diagnosis, 600),
        (TaskKind::Detection, 400),
        (TaskKind::Report, 600),
        (TaskKind::Vqa, 3600),
        (TaskKind::Segmentation, 450),
    ]
    .into_iter()
    .collect()
}

fn ratio_reproduction() -> Outcome {
    let sizes = paper_sizes();
    let start = Instant::now();
    let w = compute_weights(&sizes).map_err(|e| e.to_string())?;
    let took = start.elapsed();
    let ratio = w.integer_ratio().ok_or("weights are not integral")?;
    ensure(ratio == [6, 9, 6, 1, 8], || format!("got {w}"))?;
    ensure(took < Duration::from_millis(1), || format!("took {took:?}"))?;
    Ok(format!("{w} in {took:?}"))
}

fn split_apportionment() -> Outcome {
    let manifest = Manifest {
        images: (0..1149)
            .map(|i| ImageInfo::new(format!("img{i:05}"), 512, 512, DiagnosisLabel::Normal))
            .collect(),
        ..Default::default()
    };
    let first = split_images(&manifest, 42).map_err(|e| e.to_string())?;
    ensure(first.sizes() == [919, 115, 115], || {
        format!("sizes {:?}", first.sizes())
    })?;
    for _ in 0..4 {
        let again = split_images(&manifest, 42).map_err(|e| e.to_string())?;
        ensure(again == first, || "rerun differs".into())?;
    }
    Ok("919/115/115, 5 identical runs".into())
}

fn codec_round_trip() -> Outcome {
    let mut r = rng(3);
    let mut worst = 0.0f64;
    let mut min_iou = f64::INFINITY;
    let mut checked = 0;
    for _ in 0..10_000 {
        let (w, h) = (r.gen_range(10..=4000u32), r.gen_range(10..=4000u32));
        let img = ImageInfo::new("i", w, h, DiagnosisLabel::Normal);
        let (fw, fh) = (f64::from(w), f64::from(h));
        let big = r.gen_bool(0.5);
        let side = |r: &mut ChaCha8Rng, dim: f64| {
            if big {
                r.gen_range(0.02 * dim..=dim)
            } else {
                r.gen_range(0.0..=0.05 * dim)
            }
        };
        let (bh, bw) = (side(&mut r, fh), side(&mut r, fw));
        let y0 = r.gen_range(0.0..=fh - bh);
        let x0 = r.gen_range(0.0..=fw - bw);
        let coords = [(y0, h), (x0, w), (y0 + bh, h), (x0 + bw, w)];
        for (c, dim) in coords {
            let err = (bin_center(bin_index(c, dim), dim) - c).abs();
            let bound = f64::from(dim) / 1000.0;
            worst = worst.max(err / bound);
            ensure(err <= bound, || format!("coord {c} on {dim}: error {err}"))?;
        }
        if bh >= 0.02 * fh && bw >= 0.02 * fw {
            let b = BBox::new(y0, x0, y0 + bh, x0 + bw).map_err(|e| e.to_string())?;
            let back = decode_box(&encode_box(&b, &img), &img).map_err(|e| e.to_string())?;
            let iou = box_iou(&b, &back);
            min_iou = min_iou.min(iou);
            ensure(iou >= 0.8, || format!("IoU {iou} for {b:?} on {w}x{h}"))?;
            checked += 1;
        }
    }
    Ok(format!(
        "max error {worst:.3} of bound; min IoU {min_iou:.4} over {checked} boxes"
    ))
}

fn segmentation_idempotence() -> Outcome {
    let mut r = rng(4);
    let (mut done, mut skipped) = (0, 0);
    while done < 1000 {
        let (w, h) = (r.gen_range(4..=400u32), r.gen_range(4..=400u32));
        let img = ImageInfo::new("i", w, h, DiagnosisLabel::Normal);
        let mask = support::random_mask(&mut r, w, h);
        let Ok(b) = mask_to_bbox(&mask) else {
            skipped += 1;
            continue;
        };
        if check_encodable(&mask, &b, &img).is_err() {
            skipped += 1;
            continue;
        }
        let t1 = encode_mask(&mask, &b, &img).map_err(|e| e.to_string())?;
        let (b2, m2) = decode_mask(&t1, &img).map_err(|e| e.to_string())?;
        let t2 = encode_mask(&m2, &b2, &img).map_err(|e| e.to_string())?;
        ensure(t1 == t2, || format!("{w}x{h}: {t1} vs {t2}"))?;
        done += 1;
    }
    for _ in 0..1000 {
        let (w, h) = (r.gen_range(2..1000u32), r.gen_range(2..1000u32));
        let img = ImageInfo::new("i", w, h, DiagnosisLabel::Normal);
        let (r0, c0) = (r.gen_range(0..h - 1), r.gen_range(0..w - 1));
        let (r1, c1) = (r.gen_range(r0 + 1..=h), r.gen_range(c0 + 1..=w));
        let rect = BinaryMask::from_rect(w, h, r0, c0, r1, c1);
        let b = mask_to_bbox(&rect).map_err(|e| e.to_string())?;
        let t = encode_mask(&rect, &b, &img).map_err(|e| e.to_string())?;
        let (_, back) = decode_mask(&t, &img).map_err(|e| e.to_string())?;
        let iou = mask_iou(&rect, &back).map_err(|e| e.to_string())?;
        ensure(iou == 1.0, || format!("rect IoU {iou} on {w}x{h}"))?;
    }
    Ok(format!(
        "1000 masks idempotent ({skipped} unencodable skipped); 1000 rectangles IoU 1"
    ))
}

fn random_bytes(r: &mut ChaCha8Rng) -> String {
    const PIECES: [&str; 12] = [
        "<loc0123>",
        "<loc9999>",
        "<seg045>",
        "<seg127>",
        "<seg128>",
        ";",
        " ; ",
        "cavity",
        "<loc",
        ">",
        "  ",
        "\n",
    ];
    if r.gen_bool(0.5) {
        let bytes: Vec<u8> = (0..r.gen_range(0..64)).map(|_| r.gen()).collect();
        String::from_utf8_lossy(&bytes).into_owned()
    } else {
        (0..r.gen_range(0..24))
            .map(|_| PIECES[r.gen_range(0..PIECES.len())])
            .collect()
    }
}

fn grammar_round_trip() -> Outcome {
    let mut r = rng(5);
    let img = ImageInfo::new("i", 1000, 1000, DiagnosisLabel::Normal);
    for case in 0..1000 {
        let n = r.gen_range(1..=5);
        if case % 2 == 0 {
            let dets: Vec<_> = (0..n).map(|_| support::random_detection(&mut r)).collect();
            let text = render_suffix(&dets).map_err(|e| e.to_string())?;
            let parsed = parse_detection(&text, &img);
            let back: Vec<_> = parsed.items.into_iter().map(|d| d.instance).collect();
            ensure(back == dets && parsed.diagnostics.is_empty(), || {
                format!("detection {text:?}")
            })?;
        } else {
            let mut segs = Vec::new();
            while segs.len() < n {
                let s = support::random_segmentation(&mut r);
                if decode_mask(&s.tokens, &img).is_ok_and(|(_, m)| !m.is_empty()) {
                    segs.push(s);
                }
            }
            let text = render_suffix(&segs).map_err(|e| e.to_string())?;
            let parsed = parse_segmentation(&text, &img);
            let back: Vec<_> = parsed.items.into_iter().map(|s| s.instance).collect();
            ensure(back == segs && parsed.diagnostics.is_empty(), || {
                format!("segmentation {text:?}")
            })?;
        }
    }
    let small = ImageInfo::new("s", 7, 3, DiagnosisLabel::Normal);
    for i in 0..100_000 {
        let raw = random_bytes(&mut r);
        let task = TaskKind::ALL[i % 5];
        let image = if i % 2 == 0 { &img } else { &small };
        let _ = parse_output(task, &raw, image);
    }
    Ok("1000 lists round trip; 100000 fuzz inputs parsed".into())
}

fn map_equivalence() -> Outcome {
    let mut r = rng(6);
    let grid = 12;
    let classes = 2;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let images: Vec<_> = (0..r.gen_range(1..=3))
            .map(|_| support::random_grid_image(&mut r, grid, classes))
            .collect();
        let greedy = map_at_50(&support::to_instances(&images)).map;
        let brute = support::brute_force_map(&images, grid, classes);
        worst = worst.max((greedy - brute).abs());
        ensure((greedy - brute).abs() <= 1e-9, || {
            format!("greedy {greedy} vs brute {brute}: {images:?}")
        })?;
    }
    let b = |y0: f64, x0: f64, y1: f64, x1: f64| BBox::new(y0, x0, y1, x1).unwrap();
    let g = b(0.0, 0.0, 10.0, 10.0);
    let one = |gold: Vec<BBox>, pred: Vec<BBox>| {
        map_at_50(&[ImageInstances {
            gold: gold.into_iter().map(|x| Labeled::new("a", x)).collect(),
            predicted: pred.into_iter().map(|x| Labeled::new("a", x)).collect(),
        }])
        .map
    };
    let two = one(vec![g], vec![b(50.0, 50.0, 60.0, 60.0), g]);
    ensure(two == 0.5, || format!("two-prediction AP {two}"))?;
    let third = one(vec![g], vec![b(0.0, 5.0, 10.0, 15.0)]);
    ensure(
        box_iou(&g, &b(0.0, 5.0, 10.0, 15.0)) == 1.0 / 3.0 && third == 0.0,
        || format!("IoU 1/3 case AP {third}"),
    )?;
    Ok(format!(
        "1000 random cases, max |diff| {worst:e}; fixtures 0.5 and 0"
    ))
}

fn metric_fixtures() -> Outcome {
    let bleu = bleu4(&["a b c d e"], &["a b c d"]).map_err(|e| e.to_string())?;
    ensure((bleu - (-0.25f64).exp()).abs() <= 1e-9, || {
        format!("BLEU {bleu}")
    })?;
    let rouge = rouge_l(&["the cat sat"], &["the cat"]).map_err(|e| e.to_string())?;
    ensure((rouge - 0.8).abs() <= 1e-9, || format!("ROUGE-L {rouge}"))?;
    let meteor = meteor_lite(&["a b c"], &["a b c"]).map_err(|e| e.to_string())?;
    ensure((meteor - (1.0 - 0.5 / 27.0)).abs() <= 1e-9, || {
        format!("METEOR {meteor}")
    })?;
    let c = classification_metrics(&[("A", "A"), ("A", "B"), ("B", "B")], &["A", "B"])
        .map_err(|e| e.to_string())?;
    ensure(
        c.accuracy == 2.0 / 3.0 && c.macro_recall == 0.75 && c.macro_precision == 0.75,
        || {
            format!(
                "classification {} {} {}",
                c.accuracy, c.macro_recall, c.macro_precision
            )
        },
    )?;
    Ok(format!(
        "BLEU {bleu:.9}, ROUGE-L {rouge:.9}, METEOR {meteor:.9}, acc 2/3 macro 3/4 3/4"
    ))
}

fn loss_fixtures() -> Outcome {
    let e = |x: f64| x.exp();
    let nll = |p: &[f64], m: LossMask| sequence_nll(p, &m).map_err(|e| e.to_string());
    let a = nll(&[1.0, 1.0, 1.0], LossMask::response(1, 2))?;
    let b = nll(&[e(-2.0)], LossMask::response(0, 1))?;
    let c = nll(&[e(-1.0); 3], LossMask::new(vec![false, true, true]))?;
    ensure(a == 0.0 && b == 2.0 && c == 2.0, || {
        format!("fixtures {a} {b} {c}")
    })?;
    let mut r = rng(8);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = r.gen_range(0..=200);
        let probs: Vec<f64> = (0..n).map(|_| r.gen_range(1e-6..=1.0)).collect();
        let mask = LossMask::new((0..n).map(|_| r.gen_bool(0.6)).collect());
        let k = r.gen_range(0..=n);
        let left = LossMask::new(mask.weights()[..k].to_vec());
        let right = LossMask::new(mask.weights()[k..].to_vec());
        let whole = nll(&probs, mask)?;
        let parts = nll(&probs[..k], left.clone())? + nll(&probs[k..], right.clone())?;
        ensure(left.concat(&right).weights().len() == n, || {
            "concat length".into()
        })?;
        worst = worst.max((whole - parts).abs());
        ensure((whole - parts).abs() <= 1e-12, || {
            format!("additivity {whole} vs {parts}")
        })?;
    }
    Ok(format!(
        "fixtures 0, 2, 2 exact; additivity max |diff| {worst:e}"
    ))
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let manifest = synthetic_manifest(&SynthConfig {
        images: 100,
        seed: 9,
        ..Default::default()
    });
    let path = dir.path().join("manifest.json");
    std::fs::write(&path, manifest.to_json()).map_err(|e| e.to_string())?;
    let run = PipelineRun::new(&path, dir.path().join("out"), 9, OracleConfig::perfect());
    let report = run_pipeline(&run).map_err(|e| e.to_string())?;
    let get = |task, path: &[&str]| {
        report
            .get(task, path)
            .ok_or_else(|| format!("missing {task} {path:?}"))
    };
    let mut checks = vec![
        (
            "diagnosis accuracy",
            get(TaskKind::Diagnosis, &["accuracy"])?,
        ),
        (
            "closed VQA accuracy",
            get(TaskKind::Vqa, &["closed_accuracy"])?,
        ),
        ("report BLEU-4", get(TaskKind::Report, &["bleu4"])?),
        ("detection mAP", get(TaskKind::Detection, &["map"])?),
        ("segmentation mAP", get(TaskKind::Segmentation, &["map"])?),
    ];
    for cat in [QuestionCategory::Presence, QuestionCategory::Counting] {
        checks.push((
            cat.as_str(),
            get(TaskKind::Vqa, &["per_category", cat.as_str(), "accuracy"])?,
        ));
    }
    for (name, v) in &checks {
        ensure(*v == 1.0, || format!("{name} = {v}"))?;
    }
    let det_images = get(TaskKind::Detection, &["images"])?;
    Ok(format!(
        "all {} metrics 1.0 ({det_images} detection images)",
        checks.len()
    ))
}

fn leakage_audit() -> Outcome {
    let manifest = synthetic_manifest(&SynthConfig {
        images: 300,
        seed: 10,
        ..Default::default()
    });
    let split = split_images(&manifest, 10).map_err(|e| e.to_string())?;
    let datasets = build_all(&manifest, &split, 10).map_err(|e| e.to_string())?;
    let sets = split_image_sets(&datasets);
    let empty = BTreeSet::new();
    let get = |s| sets.get(&s).unwrap_or(&empty);
    for (a, b) in [
        (Split::Train, Split::Validation),
        (Split::Train, Split::Test),
        (Split::Validation, Split::Test),
    ] {
        let shared: Vec<_> = get(a).intersection(get(b)).collect();
        ensure(shared.is_empty(), || format!("{a}/{b} share {shared:?}"))?;
    }
    for s in Split::ALL {
        let assigned: BTreeSet<String> = split.ids(s).into_iter().map(String::from).collect();
        ensure(get(s).is_subset(&assigned), || {
            format!("{s} records outside its split")
        })?;
    }
    Ok(format!(
        "disjoint across 5 tasks: {}/{}/{} images",
        get(Split::Train).len(),
        get(Split::Validation).len(),
        get(Split::Test).len()
    ))
}

fn schedule_proportions() -> Outcome {
    let sizes = paper_sizes();
    let w = compute_weights(&sizes).map_err(|e| e.to_string())?;
    let s = build_schedule(&w, &sizes, 4, 30, 0).map_err(|e| e.to_string())?;
    let counts: Vec<usize> = s.counts().values().copied().collect();
    ensure(counts == [6, 9, 6, 1, 8], || {
        format!("L=30 counts {counts:?}")
    })?;

    let mut r = rng(11);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let k = r.gen_range(1..=5);
        let tasks = &TaskKind::ALL[..k];
        let ints: Vec<(TaskKind, u128)> = tasks.iter().map(|t| (*t, r.gen_range(1..=50))).collect();
        let weights = MixtureWeights::from_integers(&ints).map_err(|e| e.to_string())?;
        let sizes: BTreeMap<TaskKind, u64> =
            tasks.iter().map(|t| (*t, r.gen_range(1..=500))).collect();
        let l = r.gen_range(k as u64..=10_000);
        let batch = r.gen_range(1..=4);
        let sched =
            build_schedule(&weights, &sizes, batch, l, r.gen()).map_err(|e| e.to_string())?;
        ensure(sched.len() as u64 == l, || {
            format!("{} batches, want {l}", sched.len())
        })?;
        let total: u128 = ints.iter().map(|x| x.1).sum();
        let counts = sched.counts();
        for (t, wt) in &ints {
            let ideal = l as f64 * *wt as f64 / total as f64;
            let got = counts.get(t).copied().unwrap_or(0) as f64;
            worst = worst.max((got - ideal).abs());
            ensure((got - ideal).abs() <= 1.0, || {
                format!("{t}: {got} vs ideal {ideal}")
            })?;
        }
        for e in &sched.entries {
            ensure(
                e.record_ids.len() == batch && e.record_ids.iter().all(|&id| id < sizes[&e.task]),
                || format!("batch {} mixes records", e.step),
            )?;
        }
    }
    Ok(format!(
        "L=30 gives 6:9:6:1:8; 100 random mixtures, max deviation {worst:.3}"
    ))
}

fn main() {
    let criteria: [Criterion; 11] = [
        (
            "ratio reproduction",
            Duration::from_secs(1),
            ratio_reproduction,
        ),
        (
            "split apportionment",
            Duration::from_secs(1),
            split_apportionment,
        ),
        ("codec round trip", Duration::from_secs(5), codec_round_trip),
        (
            "segmentation codec idempotence",
            Duration::from_secs(10),
            segmentation_idempotence,
        ),
        (
            "grammar round trip and fuzz",
            Duration::from_secs(30),
            grammar_round_trip,
        ),
        (
            "mAP oracle equivalence",
            Duration::from_secs(30),
            map_equivalence,
        ),
        ("metric fixtures", Duration::from_secs(5), metric_fixtures),
        ("sequence loss", Duration::from_secs(5), loss_fixtures),
        (
            "end-to-end perfect oracle",
            Duration::from_secs(60),
            end_to_end,
        ),
        ("leakage audit", Duration::from_secs(30), leakage_audit),
        (
            "schedule proportions",
            Duration::from_secs(10),
            schedule_proportions,
        ),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".into()))
            .and_then(|detail| {
                let took = start.elapsed();
                if took > limit {
                    Err(format!("took {took:?}, limit {limit:?}"))
                } else {
                    Ok(detail)
                }
            });
        let took = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS  {:>2}. {name} ({took:.2?}): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL  {:>2}. {name} ({took:.2?}): {why}", i + 1);
            }
        }
    }
    println!("acceptance: {}/11 passed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
