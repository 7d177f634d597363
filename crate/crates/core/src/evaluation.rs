//! IoU / Dice metrics, per-taxon aggregation and baseline deltas.
//!
//! Convention: two empty masks agree perfectly (IoU = Dice = 1); an empty
//! mask against a non-empty one scores 0.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{BinaryMask, Raster};
use crate::scalar::{mean, Scalar};

/// Label of the all-images row in reports.
pub const ALL_TAXA: &str = "ALL";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Overlap {
    pub intersection: u64,
    pub union: u64,
    pub predicted: u64,
    pub truth: u64,
}

pub fn overlap(pred: &BinaryMask, truth: &BinaryMask) -> Result<Overlap> {
    truth.ensure_dimensions((pred.width(), pred.height()))?;
    let (mut inter, mut uni, mut p, mut t) = (0u64, 0u64, 0u64, 0u64);
    for (&a, &b) in pred.bits().iter().zip(truth.bits()) {
        inter += (a && b) as u64;
        uni += (a || b) as u64;
        p += a as u64;
        t += b as u64;
    }
    Ok(Overlap {
        intersection: inter,
        union: uni,
        predicted: p,
        truth: t,
    })
}

impl Overlap {
    pub fn iou<T: Scalar>(&self) -> T {
        if self.union == 0 {
            T::one()
        } else {
            T::from_ratio(self.intersection, self.union)
        }
    }

    pub fn dice<T: Scalar>(&self) -> T {
        let total = self.predicted + self.truth;
        if total == 0 {
            T::one()
        } else {
            T::from_ratio(2 * self.intersection, total)
        }
    }
}

/// |pred ∩ truth| / |pred ∪ truth|.
pub fn iou<T: Scalar>(pred: &BinaryMask, truth: &BinaryMask) -> Result<T> {
    Ok(overlap(pred, truth)?.iou())
}

/// 2 |pred ∩ truth| / (|pred| + |truth|).
pub fn dice<T: Scalar>(pred: &BinaryMask, truth: &BinaryMask) -> Result<T> {
    Ok(overlap(pred, truth)?.dice())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord<T> {
    pub image_id: String,
    pub taxon: String,
    pub iou: T,
    pub dice: T,
    pub predicted_foreground: u64,
    pub truth_foreground: u64,
}

pub fn evaluate_pair<T: Scalar>(image_id: &str, taxon: &str, pred: &BinaryMask, truth: &BinaryMask) -> Result<EvaluationRecord<T>> {
    let o = overlap(pred, truth)?;
    Ok(EvaluationRecord {
        image_id: image_id.to_string(),
        taxon: taxon.to_string(),
        iou: o.iou(),
        dice: o.dice(),
        predicted_foreground: o.predicted,
        truth_foreground: o.truth,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPair<T> {
    pub iou: T,
    pub dice: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonReport<T> {
    pub taxon: String,
    pub mean_iou: T,
    pub mean_dice: T,
    pub image_count: usize,
    /// Difference to the baseline in percentage points.
    pub delta_vs_baseline: Option<MetricPair<T>>,
}

/// Baseline means keyed by taxon (may include [`ALL_TAXA`]).
pub type Baseline<T> = BTreeMap<String, MetricPair<T>>;

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport<T> {
    /// Per-taxon rows sorted by taxon name.
    pub taxa: Vec<TaxonReport<T>>,
    pub overall: TaxonReport<T>,
    /// Baseline taxa that had no matching evaluation rows.
    pub ignored_baseline_taxa: Vec<String>,
}

/// `(current - baseline) * 100`.
pub fn delta_points<T: Scalar>(current: T, baseline: T) -> T {
    (current - baseline) * T::hundred()
}

fn report_row<T: Scalar>(taxon: &str, records: &[&EvaluationRecord<T>], baseline: Option<&Baseline<T>>) -> TaxonReport<T> {
    let mean_iou = mean(records.iter().map(|r| r.iou)).expect("non-empty group");
    let mean_dice = mean(records.iter().map(|r| r.dice)).expect("non-empty group");
    let delta_vs_baseline = baseline.and_then(|b| b.get(taxon)).map(|b| MetricPair {
        iou: delta_points(mean_iou, b.iou),
        dice: delta_points(mean_dice, b.dice),
    });
    TaxonReport {
        taxon: taxon.to_string(),
        mean_iou,
        mean_dice,
        image_count: records.len(),
        delta_vs_baseline,
    }
}

/// Groups records by taxon and computes means and deltas.
pub fn aggregate<T: Scalar>(records: &[EvaluationRecord<T>], baseline: Option<&Baseline<T>>) -> Result<EvaluationReport<T>> {
    if records.is_empty() {
        return Err(Error::EmptyInput("evaluation needs at least one record"));
    }
    let mut groups: BTreeMap<&str, Vec<&EvaluationRecord<T>>> = BTreeMap::new();
    for r in records {
        groups.entry(r.taxon.as_str()).or_default().push(r);
    }
    let taxa: Vec<_> = groups.iter().map(|(taxon, group)| report_row(taxon, group, baseline)).collect();
    let all: Vec<_> = records.iter().collect();
    let overall = report_row(ALL_TAXA, &all, baseline);

    let ignored_baseline_taxa: Vec<String> = baseline
        .map(|b| {
            b.keys()
                .filter(|k| k.as_str() != ALL_TAXA && !groups.contains_key(k.as_str()))
                .cloned()
                .collect()
        })
        .unwrap_or_default();
    for taxon in &ignored_baseline_taxa {
        tracing::warn!(%taxon, "baseline taxon has no evaluated images; ignored");
    }
    Ok(EvaluationReport {
        taxa,
        overall,
        ignored_baseline_taxa,
    })
}

/// One evaluation input: predicted and ground-truth masks of an image.
#[derive(Debug, Clone)]
pub struct EvalPair {
    pub image_id: String,
    pub taxon: String,
    pub predicted: BinaryMask,
    pub truth: BinaryMask,
}

pub fn evaluate_set<T: Scalar>(
    pairs: &[EvalPair],
    baseline: Option<&Baseline<T>>,
) -> Result<(Vec<EvaluationRecord<T>>, EvaluationReport<T>)> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("evaluation needs at least one pair"));
    }
    let records = pairs
        .par_iter()
        .map(|p| evaluate_pair(&p.image_id, &p.taxon, &p.predicted, &p.truth))
        .collect::<Result<Vec<_>>>()?;
    let report = aggregate(&records, baseline)?;
    Ok((records, report))
}

/// Signed percentage-point delta with two decimals, e.g. `+1.59`.
/// Zero prints as `+0.00`.
pub fn format_delta(points: f64) -> String {
    let hundredths = (points * 100.0).round() as i64;
    let sign = if hundredths < 0 { '-' } else { '+' };
    let abs = hundredths.unsigned_abs();
    format!("{sign}{}.{:02}", abs / 100, abs % 100)
}

pub fn format_mean(value: f64) -> String {
    format!("{value:.4}")
}

pub const REPORT_HEADER: [&str; 6] = ["taxon", "n", "mean_iou", "mean_dice", "delta_iou", "delta_dice"];

fn report_record<T: Scalar>(row: &TaxonReport<T>) -> [String; 6] {
    let (di, dd) = match &row.delta_vs_baseline {
        Some(d) => (format_delta(d.iou.to_f64()), format_delta(d.dice.to_f64())),
        None => (String::new(), String::new()),
    };
    [
        row.taxon.clone(),
        row.image_count.to_string(),
        format_mean(row.mean_iou.to_f64()),
        format_mean(row.mean_dice.to_f64()),
        di,
        dd,
    ]
}

/// Writes `taxon,n,mean_iou,mean_dice,delta_iou,delta_dice` with a
/// trailing `ALL` row.
pub fn write_report<T: Scalar, W: Write>(report: &EvaluationReport<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for row in report.taxa.iter().chain(std::iter::once(&report.overall)) {
        w.write_record(report_record(row))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct ReportRow {
    taxon: String,
    mean_iou: f64,
    mean_dice: f64,
}

/// Reads the means of a previously written report as a baseline.
pub fn read_baseline<R: Read>(input: R) -> Result<Baseline<f64>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Baseline::new();
    for row in rdr.deserialize::<ReportRow>() {
        let row = row?;
        out.insert(
            row.taxon,
            MetricPair {
                iou: row.mean_iou,
                dice: row.mean_dice,
            },
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub taxon: String,
    pub pred_path: PathBuf,
    pub truth_path: PathBuf,
}

/// Reads an `image_id,taxon,pred_path,truth_path` manifest. Relative
/// paths are resolved against `base`.
pub fn read_manifest<R: Read>(input: R, base: &Path) -> Result<Vec<ManifestEntry>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in rdr.deserialize::<ManifestEntry>() {
        let mut e = row?;
        e.pred_path = base.join(&e.pred_path);
        e.truth_path = base.join(&e.truth_path);
        out.push(e);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn strip(x0: u32, x1: u32) -> BinaryMask {
        BinaryMask::from_fn(20, 10, |x, _| (x0..x1).contains(&x))
    }

    #[test]
    fn identical_and_disjoint() {
        let a = strip(0, 10);
        assert_eq!(iou::<f64>(&a, &a).unwrap(), 1.0);
        assert_eq!(dice::<f64>(&a, &a).unwrap(), 1.0);
        assert_eq!(iou::<f64>(&a, &strip(10, 20)).unwrap(), 0.0);
        assert_eq!(dice::<f64>(&a, &strip(10, 20)).unwrap(), 0.0);
    }

    #[test]
    fn half_overlap() {
        // |pred| = |truth| = 100, overlap 50
        let (p, t) = (strip(0, 10), strip(5, 15));
        assert_eq!(iou::<Rational>(&p, &t).unwrap(), Rational::new(1, 3));
        assert_eq!(dice::<Rational>(&p, &t).unwrap(), Rational::new(1, 2));
        assert!((iou::<f64>(&p, &t).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_conventions() {
        let e = BinaryMask::new(20, 10);
        assert_eq!(iou::<f64>(&e, &e).unwrap(), 1.0);
        assert_eq!(dice::<f64>(&e, &e).unwrap(), 1.0);
        assert_eq!(iou::<f64>(&e, &strip(0, 1)).unwrap(), 0.0);
        assert_eq!(dice::<f64>(&strip(0, 1), &e).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            iou::<f64>(&BinaryMask::new(3, 3), &BinaryMask::new(3, 4)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn delta_formatting() {
        assert_eq!(format_delta(1.59), "+1.59");
        assert_eq!(format_delta(-0.44), "-0.44");
        assert_eq!(format_delta(0.0), "+0.00");
        assert_eq!(format_delta(-0.0001), "+0.00");
        assert_eq!(format_delta(12.345678), "+12.35");
        assert_eq!(format_delta(delta_points(0.9656, 0.9497)), "+1.59");
    }

    #[test]
    fn two_taxa_spreadsheet() {
        let rec = |id: &str, taxon: &str, iou: Rational, dice: Rational| EvaluationRecord {
            image_id: id.into(),
            taxon: taxon.into(),
            iou,
            dice,
            predicted_foreground: 0,
            truth_foreground: 0,
        };
        let r = |n, d| Rational::new(n, d);
        let records = vec![
            rec("a", "Rubus", r(1, 2), r(2, 3)),
            rec("b", "Rubus", r(1, 4), r(2, 5)),
            rec("c", "Laurus", r(1, 1), r(1, 1)),
        ];
        let mut baseline = Baseline::new();
        baseline.insert(
            "Rubus".into(),
            MetricPair {
                iou: r(1, 4),
                dice: r(1, 2),
            },
        );
        baseline.insert(
            "Ulmus".into(),
            MetricPair {
                iou: r(1, 2),
                dice: r(1, 2),
            },
        );
        let report = aggregate(&records, Some(&baseline)).unwrap();
        assert_eq!(report.taxa[0].taxon, "Laurus");
        let rubus = &report.taxa[1];
        assert_eq!(rubus.mean_iou, r(3, 8));
        assert_eq!(rubus.mean_dice, r(8, 15));
        assert_eq!(rubus.delta_vs_baseline.unwrap().iou, r(25, 2));
        assert_eq!(report.overall.mean_iou, r(7, 12));
        assert_eq!(report.overall.image_count, 3);
        assert!(report.taxa[0].delta_vs_baseline.is_none());
        assert_eq!(report.ignored_baseline_taxa, vec!["Ulmus".to_string()]);
    }

    #[test]
    fn report_csv_round_trip() {
        let pairs = vec![
            EvalPair {
                image_id: "x".into(),
                taxon: "Magnolia".into(),
                predicted: strip(0, 10),
                truth: strip(5, 15),
            },
            EvalPair {
                image_id: "y".into(),
                taxon: "Magnolia".into(),
                predicted: strip(0, 10),
                truth: strip(0, 10),
            },
        ];
        let (_, report) = evaluate_set::<f64>(&pairs, None).unwrap();
        let mut buf = Vec::new();
        write_report(&report, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "taxon,n,mean_iou,mean_dice,delta_iou,delta_dice\nMagnolia,2,0.6667,0.7500,,\nALL,2,0.6667,0.7500,,\n"
        );
        let baseline = read_baseline(buf.as_slice()).unwrap();
        assert!((baseline["ALL"].dice - 0.75).abs() < 1e-12);
    }

    #[test]
    fn manifest_paths_resolved() {
        let csv = "image_id,taxon,pred_path,truth_path\ns1,Rubus,pred/s1.png,/abs/s1.png\n";
        let m = read_manifest(csv.as_bytes(), Path::new("/data")).unwrap();
        assert_eq!(m[0].pred_path, PathBuf::from("/data/pred/s1.png"));
        assert_eq!(m[0].truth_path, PathBuf::from("/abs/s1.png"));
    }
}
