use plantsam_core::evaluation::iou;
use plantsam_core::prompting::{HeuristicDetector, MaskOracleDetector};
use plantsam_core::synthetic::{herbarium_sheet, SheetOptions};
use plantsam_core::{segment_image, PipelineConfig, Raster, ReferenceSegmenter, Strategy};

fn sheet(seed: u64) -> plantsam_core::synthetic::SyntheticSheet {
    herbarium_sheet(
        seed,
        SheetOptions {
            width: 700,
            height: 900,
            plants: 3,
        },
    )
}

#[test]
fn worker_count_does_not_change_the_mask() {
    let s = sheet(3);
    let detector = MaskOracleDetector::new(s.stencil.clone(), Default::default());
    let seg = ReferenceSegmenter::default();
    let masks: Vec<_> = [Some(1), Some(3), None]
        .into_iter()
        .map(|workers| {
            let config = PipelineConfig {
                workers,
                ..PipelineConfig::default()
            };
            segment_image(&s.image, &detector, &seg, &config).unwrap().mask
        })
        .collect();
    assert_eq!(masks[0], masks[1]);
    assert_eq!(masks[0], masks[2]);
}

#[test]
fn output_geometry_follows_the_input() {
    let s = sheet(4);
    let detector = MaskOracleDetector::new(s.stencil.clone(), Default::default());
    let out = segment_image(&s.image, &detector, &ReferenceSegmenter::default(), &PipelineConfig::default()).unwrap();
    assert_eq!(out.mask.dimensions(), s.image.dimensions());
    assert_eq!(out.plan.patch_size, 256);
    assert_eq!(out.prompts.len(), out.plan.patch_count());
    // the oracle finds nothing in patches without plant
    for (i, p) in out.prompts.iter().enumerate() {
        let (r, c) = (i as u32 / out.plan.cols, i as u32 % out.plan.cols);
        let (x, y) = out.plan.origin(r, c);
        let has_plant = s.stencil.window(x, y, 256, 256).count() > 0;
        assert_eq!(p.is_some(), has_plant, "patch ({r},{c})");
    }
}

#[test]
fn both_strategies_and_detectors_find_the_plants() {
    let s = sheet(5);
    let seg = ReferenceSegmenter::default();
    let oracle = MaskOracleDetector::new(s.stencil.clone(), Default::default());
    let heuristic = HeuristicDetector::default();
    for strategy in [Strategy::SingleBox, Strategy::MultiRegion] {
        let config = PipelineConfig {
            strategy,
            ..PipelineConfig::default()
        };
        let by_oracle: f64 = iou(&segment_image(&s.image, &oracle, &seg, &config).unwrap().mask, &s.stencil).unwrap();
        let by_heuristic: f64 = iou(&segment_image(&s.image, &heuristic, &seg, &config).unwrap().mask, &s.stencil).unwrap();
        assert!(by_oracle >= 0.95, "{strategy}: oracle {by_oracle}");
        assert!(by_heuristic >= 0.85, "{strategy}: heuristic {by_heuristic}");
    }
}
