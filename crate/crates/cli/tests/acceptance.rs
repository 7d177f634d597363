//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if
//! any fails. Runs without the harness so the lines always show.

use std::collections::VecDeque;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use plantsam_core::analytics::{coverage, crop_to_content, heatmap, write_coverage, Alignment, CropOptions};
use plantsam_core::dataset::{build_detection_dataset, split, write_dataset, DatasetConfig, PAPER_RATIOS};
use plantsam_core::evaluation::{aggregate, dice, iou, read_baseline, write_report, EvaluationRecord};
use plantsam_core::imagecore::connected_components;
use plantsam_core::prompting::{ratio_summary, strategy_boxes, DetectorConfig, MaskOracleDetector, Polarity};
use plantsam_core::synthetic::{herbarium_sheet, single_blob_sheet, two_blob, SheetOptions};
use plantsam_core::tiling::{make_plan, select_patch_size, split as split_tiles, stitch_masks, PatchPlan};
use plantsam_core::{segment_image, BinaryMask, Connectivity, PipelineConfig, Raster, RasterImage, ReferenceSegmenter, Score, Strategy};
use plantsam_service::{Backends, PointPrompt, Seed, Service, ServiceConfig};

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn random_mask(rng: &mut ChaCha8Rng, w: u32, h: u32, density: f64) -> BinaryMask {
    BinaryMask::from_fn(w, h, |_, _| rng.random_bool(density))
}

fn patch_size_selection() -> Outcome {
    let start = Instant::now();
    let got = [4000, 2000, 600, 3072].map(select_patch_size);
    let elapsed = start.elapsed();
    ensure!(got == [1024, 512, 256, 512], "widths 4000/2000/600/3072 gave {got:?}");
    ensure!(elapsed < Duration::from_millis(1), "took {elapsed:?}");
    Ok(format!("{got:?} in {elapsed:?}"))
}

fn split_stitch_round_trip() -> Outcome {
    let start = Instant::now();
    let failures: Vec<String> = (0..200u64)
        .into_par_iter()
        .flat_map_iter(|case| {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ case);
            let (w, h) = (rng.random_range(1..=3000), rng.random_range(1..=3000));
            let density = rng.random_range(0.05..0.95);
            let mask = random_mask(&mut rng, w, h, density);
            [256, 512, 1024].into_iter().filter_map(move |size| {
                let plan = make_plan(w, h, size).ok()?;
                let tiles: Vec<BinaryMask> = split_tiles(&mask, &plan).ok()?.into_iter().map(|p| p.pixels).collect();
                let back = stitch_masks(&tiles, &plan).ok();
                (back.as_ref() != Some(&mask)).then(|| format!("{w}x{h}@{size}"))
            })
        })
        .collect();
    let elapsed = start.elapsed();
    ensure!(failures.is_empty(), "mismatch on {failures:?}");
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!("200 masks x 3 patch sizes bit-exact in {:.1?}", elapsed))
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut worst = 0.0f64;
    for case in 0..1000 {
        let (w, h) = (rng.random_range(1..=64), rng.random_range(1..=64));
        let (da, db) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let a = random_mask(&mut rng, w, h, da);
        let b = random_mask(&mut rng, w, h, db);
        let (mut inter, mut union, mut na, mut nb) = (0u64, 0u64, 0u64, 0u64);
        for (&x, &y) in a.bits().iter().zip(b.bits()) {
            inter += (x && y) as u64;
            union += (x || y) as u64;
            na += x as u64;
            nb += y as u64;
        }
        // both empty: perfect agreement
        let want_iou = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
        let want_dice = if na + nb == 0 { 1.0 } else { 2.0 * inter as f64 / (na + nb) as f64 };
        let got_iou: f64 = iou(&a, &b).map_err(|e| e.to_string())?;
        let got_dice: f64 = dice(&a, &b).map_err(|e| e.to_string())?;
        let identity = (got_dice - 2.0 * got_iou / (1.0 + got_iou)).abs();
        let err = (got_iou - want_iou).abs().max((got_dice - want_dice).abs()).max(identity);
        ensure!(
            err <= 1e-12,
            "case {case}: iou {got_iou} vs {want_iou}, dice {got_dice} vs {want_dice}"
        );
        worst = worst.max(err);
    }
    Ok(format!("1000 pairs, max deviation {worst:.1e}"))
}

/// Exhaustive breadth-first flood fill; boxes in raster order of the
/// first pixel.
fn flood_boxes(mask: &BinaryMask, eight: bool) -> Vec<(u64, [u32; 4])> {
    let (w, h) = mask.dimensions();
    let mut seen = vec![false; (w * h) as usize];
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) || seen[(y * w + x) as usize] {
                continue;
            }
            seen[(y * w + x) as usize] = true;
            let mut queue = VecDeque::from([(x, y)]);
            let (mut n, mut b) = (0u64, [x, y, x, y]);
            while let Some((cx, cy)) = queue.pop_front() {
                n += 1;
                b = [b[0].min(cx), b[1].min(cy), b[2].max(cx), b[3].max(cy)];
                for (dx, dy) in [(-1i64, -1i64), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)] {
                    if !eight && dx != 0 && dy != 0 {
                        continue;
                    }
                    let (nx, ny) = (cx as i64 + dx, cy as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let (nx, ny) = (nx as u32, ny as u32);
                    if mask.get(nx, ny) && !seen[(ny * w + nx) as usize] {
                        seen[(ny * w + nx) as usize] = true;
                        queue.push_back((nx, ny));
                    }
                }
            }
            out.push((n, b));
        }
    }
    out
}

fn tight_box_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let mut components = 0;
    for case in 0..500 {
        let (w, h) = (rng.random_range(1..=96), rng.random_range(1..=96));
        let density = rng.random_range(0.05..0.7);
        let mask = random_mask(&mut rng, w, h, density);
        for (conn, eight) in [(Connectivity::Four, false), (Connectivity::Eight, true)] {
            let got: Vec<(u64, [u32; 4])> = connected_components(&mask, conn)
                .iter()
                .map(|c| (c.pixel_count, [c.bbox.x_min, c.bbox.y_min, c.bbox.x_max, c.bbox.y_max]))
                .collect();
            let want = flood_boxes(&mask, eight);
            ensure!(got == want, "case {case} ({w}x{h}, {conn:?}) differs");
            components += got.len();
        }
    }
    Ok(format!("500 masks, both connectivities, {components} components exact"))
}

fn standard_plan(m: &BinaryMask) -> plantsam_core::Result<PatchPlan> {
    PatchPlan::for_dimensions(m.width(), m.height())
}

fn multi_region_beats_single_box() -> Outcome {
    let config = DetectorConfig::default();
    let mut sheets = Vec::new();
    for seed in 0..50u64 {
        let options = SheetOptions {
            plants: 2 + (seed % 3) as u32,
            ..SheetOptions::default()
        };
        let s = herbarium_sheet(seed, options);
        let parts = connected_components(&s.stencil, Connectivity::Eight).len();
        ensure!(parts >= 2, "sheet {seed} has {parts} component(s)");
        sheets.push(s.stencil);
    }
    let single = ratio_summary::<Score>(&sheets, Strategy::SingleBox, &config, standard_plan).map_err(|e| e.to_string())?;
    let multi = ratio_summary::<Score>(&sheets, Strategy::MultiRegion, &config, standard_plan).map_err(|e| e.to_string())?;
    let (s, m) = (single.per_image_mean.unwrap_or(0.0), multi.per_image_mean.unwrap_or(0.0));
    let (sp, mp) = (single.pooled_mean.unwrap_or(0.0), multi.pooled_mean.unwrap_or(0.0));
    ensure!(m > s, "per-image mean: multi {m:.4} <= single {s:.4}");
    ensure!(mp > sp, "pooled mean: multi {mp:.4} <= single {sp:.4}");

    // one convex blob: each patch holds at most one piece, so both
    // strategies produce the same boxes
    let filterless = DetectorConfig {
        min_component_pixels: 1,
        ..DetectorConfig::default()
    };
    let mut blobs = 0;
    for seed in 0..50u64 {
        let s = single_blob_sheet(seed, 600 + 20 * seed as u32, 800);
        let plan = standard_plan(&s.stencil).map_err(|e| e.to_string())?;
        let a = strategy_boxes(&s.stencil, &plan, Strategy::SingleBox, &filterless).map_err(|e| e.to_string())?;
        let b = strategy_boxes(&s.stencil, &plan, Strategy::MultiRegion, &filterless).map_err(|e| e.to_string())?;
        ensure!(!a.is_empty() && a == b, "single-blob sheet {seed}: strategies differ");
        let one = [s.stencil];
        let ra = ratio_summary::<Score>(&one, Strategy::SingleBox, &filterless, standard_plan).map_err(|e| e.to_string())?;
        let rb = ratio_summary::<Score>(&one, Strategy::MultiRegion, &filterless, standard_plan).map_err(|e| e.to_string())?;
        ensure!(ra == rb, "single-blob sheet {seed}: ratios differ");
        blobs += 1;
    }
    Ok(format!(
        "50 sheets: multi {:.2}% > single {:.2}% (pooled {:.2}% > {:.2}%); {blobs} single-blob sheets coincide",
        m * 100.0,
        s * 100.0,
        mp * 100.0,
        sp * 100.0
    ))
}

fn end_to_end_oracle() -> Outcome {
    let start = Instant::now();
    let seg = ReferenceSegmenter::default();
    let config = PipelineConfig::default();
    let scores: Vec<Result<(u64, f64), String>> = (0..25u64)
        .into_par_iter()
        .map(|seed| {
            let s = herbarium_sheet(
                1000 + seed,
                SheetOptions {
                    plants: 1 + (seed % 3) as u32,
                    ..SheetOptions::default()
                },
            );
            let detector = MaskOracleDetector::new(s.stencil.clone(), config.detector);
            let out = segment_image(&s.image, &detector, &seg, &config).map_err(|e| e.to_string())?;
            Ok((seed, iou::<f64>(&out.mask, &s.stencil).map_err(|e| e.to_string())?))
        })
        .collect();
    let elapsed = start.elapsed();
    let mut worst = 1.0f64;
    for r in scores {
        let (seed, v) = r?;
        ensure!(v >= 0.95, "fixture {seed}: IoU {v:.4}");
        worst = worst.min(v);
    }
    ensure!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    Ok(format!("25 fixtures, min IoU {worst:.4}, {:.1?}", elapsed))
}

/// Taxon, UNet, PlantSAM1, delta, PlantSAM2, delta.
const TABLE_3: [(&str, f64, f64, &str, f64, &str); 11] = [
    ("Amborella", 0.9005, 0.9387, "+3.82", 0.9432, "+4.27"),
    ("Castanea", 0.9325, 0.9394, "+0.69", 0.9425, "+1.00"),
    ("Convolvulaceae", 0.8222, 0.8698, "+4.76", 0.8789, "+5.67"),
    ("Desmodium", 0.8337, 0.9007, "+6.70", 0.9018, "+6.81"),
    ("Eugenia", 0.9078, 0.9275, "+1.97", 0.9324, "+2.46"),
    ("Laurus", 0.9420, 0.9558, "+1.38", 0.9569, "+1.49"),
    ("Litsea", 0.9343, 0.9299, "-0.44", 0.9357, "+0.14"),
    ("Magnolia", 0.9497, 0.9625, "+1.28", 0.9656, "+1.59"),
    ("Monimiaceae", 0.9356, 0.9506, "+1.50", 0.9531, "+1.75"),
    ("Rubus", 0.9185, 0.9485, "+3.00", 0.9504, "+3.19"),
    ("Ulmus", 0.8995, 0.9360, "+3.65", 0.9386, "+3.91"),
];

fn report_deltas(model: impl Fn(usize) -> f64) -> Result<Vec<(String, String)>, String> {
    let mut baseline_csv = String::from("taxon,n,mean_iou,mean_dice,delta_iou,delta_dice\n");
    let mut records = Vec::new();
    for (i, row) in TABLE_3.iter().enumerate() {
        baseline_csv.push_str(&format!("{},1,{:.4},{:.4},,\n", row.0, row.1, row.1));
        records.push(EvaluationRecord::<Score> {
            image_id: format!("img{i}"),
            taxon: row.0.to_string(),
            iou: model(i),
            dice: model(i),
            predicted_foreground: 1,
            truth_foreground: 1,
        });
    }
    let baseline = read_baseline(baseline_csv.as_bytes()).map_err(|e| e.to_string())?;
    let report = aggregate(&records, Some(&baseline)).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    write_report(&report, &mut out).map_err(|e| e.to_string())?;
    let text = String::from_utf8(out).map_err(|e| e.to_string())?;
    Ok(text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[4].to_string())
        })
        .collect())
}

fn table_format_golden() -> Outcome {
    for (model, column) in [(2usize, "PlantSAM1"), (4, "PlantSAM2")] {
        let rows = report_deltas(|i| if model == 2 { TABLE_3[i].2 } else { TABLE_3[i].4 })?;
        for row in &TABLE_3 {
            let want = if model == 2 { row.3 } else { row.5 };
            let got = rows.iter().find(|(t, _)| t == row.0).map(|(_, d)| d.as_str());
            ensure!(got == Some(want), "{column} {}: printed {got:?}, table says {want}", row.0);
        }
    }
    let magnolia = report_deltas(|i| TABLE_3[i].4)?
        .into_iter()
        .find(|(t, _)| t == "Magnolia")
        .unwrap()
        .1;
    Ok(format!("22 deltas reproduced, Magnolia 0.9497 -> 0.9656 prints {magnolia}"))
}

fn analytics_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mask = random_mask(&mut rng, 37, 23, 0.4);
    let map = heatmap::<f64>(&vec![mask.clone(); 9], None, Alignment::Center).map_err(|e| e.to_string())?;
    let expected: Vec<f64> = mask.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    ensure!(map.values == expected, "heatmap of identical masks differs from the mask");

    let half = BinaryMask::from_fn(64, 48, |x, _| x < 32);
    let stats = coverage::<Score>(&[("half".to_string(), vec![half])]).map_err(|e| e.to_string())?;
    let mut csv = Vec::new();
    write_coverage(&stats, &mut csv).map_err(|e| e.to_string())?;
    let csv = String::from_utf8(csv).unwrap();
    ensure!(
        csv.lines().nth(1) == Some("half,1,50.00,50.00"),
        "coverage row {:?}",
        csv.lines().nth(1)
    );

    let mut checked = 0;
    while checked < 200 {
        let (w, h) = (rng.random_range(1..=80), rng.random_range(1..=80));
        let density = rng.random_range(0.001..0.3);
        let m = random_mask(&mut rng, w, h, density);
        if m.count() == 0 {
            continue;
        }
        let img = RasterImage::from_fn(w, h, 3, |x, y| [(x * 3) as u8, (y * 5) as u8, 200]);
        let (ci, cm, bbox) = crop_to_content(&img, &m, CropOptions::default()).map_err(|e| e.to_string())?;
        let full = cm.dimensions();
        let touches = cm.foreground_bbox() == Some(plantsam_core::BoundingBox::new(0, 0, full.0 - 1, full.1 - 1));
        ensure!(touches && cm.count() == m.count(), "crop of {w}x{h} mask is not tight");
        ensure!(Some(bbox) == m.foreground_bbox() && ci.dimensions() == full, "crop box mismatch");
        let outside_black = (0..full.1).all(|y| (0..full.0).all(|x| cm.get(x, y) || ci.pixel(x, y) == [0, 0, 0]));
        ensure!(outside_black, "background not zeroed");
        checked += 1;
    }
    Ok("heatmap exact, coverage 50.00/50.00, 200 crops tight".into())
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn dataset_determinism() -> Outcome {
    let images: Vec<(String, RasterImage)> = (0..6u64)
        .map(|seed| {
            let s = herbarium_sheet(
                seed,
                SheetOptions {
                    width: 640,
                    height: 820,
                    plants: 2,
                },
            );
            (format!("sheet_{seed}"), s.segmented())
        })
        .collect();
    let tmp = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let build = |name: &str, seed: u64| -> Result<Vec<(String, Vec<u8>)>, String> {
        let root = tmp.path().join(name);
        let dataset = build_detection_dataset(&images, &DatasetConfig::default()).map_err(|e| e.to_string())?;
        let manifest = split(&dataset.patch_ids(), PAPER_RATIOS, seed).map_err(|e| e.to_string())?;
        write_dataset(&root, &dataset, &manifest).map_err(|e| e.to_string())?;
        Ok(tree(&root))
    };
    let (a, b) = (build("a", 0)?, build("b", 0)?);
    ensure!(a == b, "two builds at seed 0 differ");
    ensure!(a.iter().any(|(p, _)| p == "splits.json"), "no split manifest");
    let other = build("c", 1)?;
    let manifest = |t: &[(String, Vec<u8>)]| t.iter().find(|(p, _)| p == "splits.json").map(|(_, b)| b.clone());
    ensure!(manifest(&other) != manifest(&a), "seed has no effect on the split");
    Ok(format!("{} files byte-identical across builds", a.len()))
}

fn service_replay() -> Outcome {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?;
    runtime.block_on(async {
        let tmp = tempfile::TempDir::new().map_err(|e| e.to_string())?;
        let root = tmp.path();
        std::fs::create_dir_all(root.join("images")).unwrap();
        std::fs::create_dir_all(root.join("masks")).unwrap();
        let (blob, shape, artifact) = two_blob();
        plantsam_core::imagecore::io::save_image(&blob, &root.join("images/blob.png")).map_err(|e| e.to_string())?;
        for i in 0..2u64 {
            let s = herbarium_sheet(
                40 + i,
                SheetOptions {
                    width: 520,
                    height: 600,
                    plants: 2,
                },
            );
            plantsam_core::imagecore::io::save_image(&s.image, &root.join(format!("images/sheet{i}.png"))).unwrap();
            plantsam_core::imagecore::io::save_mask(&s.stencil, &root.join(format!("masks/sheet{i}.png"))).unwrap();
        }
        let service = Service::open(ServiceConfig::new(root), Backends::standard()).map_err(|e| e.to_string())?;

        let mut sessions = vec![("blob".to_string(), Seed::Empty)];
        for i in 0..2 {
            let job = service
                .submit_job(plantsam_service::JobRequest {
                    image_id: format!("sheet{i}"),
                    strategy: "multi_region".into(),
                    detector: "oracle".into(),
                    segmenter: "reference".into(),
                })
                .map_err(|e| e.to_string())?;
            service
                .wait_for_job(&job, Duration::from_secs(60))
                .await
                .map_err(|e| e.to_string())?;
            sessions.push((format!("sheet{i}"), Seed::Job(job)));
            sessions.push((format!("sheet{i}"), Seed::Empty));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut steps = 0;
        for (image, seed) in sessions {
            let view = service.open_session(&image, seed, None).await.map_err(|e| e.to_string())?;
            let id = view.session_id;
            for _ in 0..16 {
                let before = service.session_mask(&id, None).await.map_err(|e| e.to_string())?;
                match rng.random_range(0..10) {
                    0 => drop(service.undo(&id).await),
                    1 => drop(service.redo(&id).await),
                    _ => {
                        let polarity = if rng.random_bool(0.6) {
                            Polarity::Positive
                        } else {
                            Polarity::Negative
                        };
                        let prompt = PointPrompt {
                            x: rng.random_range(0..view.width),
                            y: rng.random_range(0..view.height),
                            polarity,
                        };
                        service.apply_point(&id, prompt).await.map_err(|e| e.to_string())?;
                        let after = service.session_mask(&id, None).await.map_err(|e| e.to_string())?;
                        let monotone = match polarity {
                            Polarity::Positive => before.is_subset_of(&after),
                            Polarity::Negative => after.is_subset_of(&before),
                        };
                        ensure!(monotone, "{image}: {polarity:?} point broke monotonicity");
                    }
                }
                let current = service.session_mask(&id, None).await.map_err(|e| e.to_string())?;
                let replayed = service.replay_session(&id).await.map_err(|e| e.to_string())?;
                ensure!(replayed == current, "{image}: replay differs after step {steps}");
                steps += 1;
            }
        }

        // two-blob: grow over both blobs, then carve the artifact away
        let id = service
            .open_session("blob", Seed::Empty, None)
            .await
            .map_err(|e| e.to_string())?
            .session_id;
        let click = |x, y, polarity| PointPrompt { x, y, polarity };
        service
            .apply_point(&id, click(50, 30, Polarity::Positive))
            .await
            .map_err(|e| e.to_string())?;
        let grown = service.session_mask(&id, None).await.map_err(|e| e.to_string())?;
        service
            .apply_point(&id, click(55, 30, Polarity::Negative))
            .await
            .map_err(|e| e.to_string())?;
        let carved = service.session_mask(&id, None).await.map_err(|e| e.to_string())?;
        ensure!(
            artifact.is_subset_of(&grown) && shape.intersection(&grown).unwrap().count() > 0,
            "positive point did not grow"
        );
        ensure!(
            carved.is_subset_of(&grown) && carved.intersection(&artifact).unwrap().count() == 0,
            "negative point did not shrink"
        );
        ensure!(
            service.replay_session(&id).await.map_err(|e| e.to_string())? == carved,
            "two-blob replay differs"
        );
        Ok(format!(
            "{steps} random steps over 5 sessions replay bit-exactly; two-blob grow/shrink monotone"
        ))
    })
}

fn main() {
    let criteria: [Check; 10] = [
        ("patch size selection", patch_size_selection),
        ("split/stitch round trip", split_stitch_round_trip),
        ("metric oracle equivalence", metric_oracle),
        ("tight-box oracle", tight_box_oracle),
        ("multi-region vs single-box ratio", multi_region_beats_single_box),
        ("end-to-end with oracle backends", end_to_end_oracle),
        ("table-format golden", table_format_golden),
        ("analytics", analytics_checks),
        ("dataset determinism", dataset_determinism),
        ("service replay", service_replay),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
