//! First-break picking metrics.
//!
//! APR counts picks over every presented trace. Hit rates and error
//! statistics use only the intersection: traces picked both automatically
//! and manually. Errors are in samples.

use std::fmt::Write as _;

use crate::error::{invalid, Result};
use crate::gather::UNPICKED;
use crate::pipeline::PickResult;

/// Tolerances of the reported hit rates, samples.
pub const HR_DELTAS: [u32; 5] = [1, 3, 5, 7, 9];

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub apr: f64,
    pub n_traces: usize,
    pub n_intersection: usize,
    /// `HR@δ` for each entry of [`HR_DELTAS`]; NaN when undefined.
    pub hr: [f64; 5],
    /// NaN when undefined.
    pub mae: f64,
    pub mbe: f64,
    pub rmse: f64,
}

impl MetricsReport {
    /// Hit and error metrics exist only with a non-empty intersection.
    pub fn is_defined(&self) -> bool {
        self.n_intersection > 0
    }

    pub fn hr_at(&self, delta: u32) -> Option<f64> {
        HR_DELTAS.iter().position(|&d| d == delta).map(|i| self.hr[i])
    }

    /// Canonical `key=value` summary, fixed order.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "apr={}", fmt_num(self.apr));
        let _ = writeln!(s, "n_traces={}", self.n_traces);
        let _ = writeln!(s, "n_intersection={}", self.n_intersection);
        for (d, v) in HR_DELTAS.iter().zip(&self.hr) {
            let _ = writeln!(s, "hr@{d}px={}", fmt_num(*v));
        }
        let _ = writeln!(s, "mae={}", fmt_num(self.mae));
        let _ = writeln!(s, "mbe={}", fmt_num(self.mbe));
        let _ = writeln!(s, "rmse={}", fmt_num(self.rmse));
        s
    }

    /// Tab-separated values in [`TSV_COLUMNS`] order.
    pub fn tsv_fields(&self) -> String {
        let mut f = vec![fmt_num(self.apr), self.n_traces.to_string(), self.n_intersection.to_string()];
        f.extend(self.hr.iter().map(|&v| fmt_num(v)));
        f.extend([fmt_num(self.mae), fmt_num(self.mbe), fmt_num(self.rmse)]);
        f.join("\t")
    }
}

/// Column names matching [`MetricsReport::tsv_fields`].
pub const TSV_COLUMNS: &str = "apr\tn_traces\tn_intersection\thr1\thr3\thr5\thr7\thr9\tmae\tmbe\trmse";

/// Fixed-precision rendering; NaN prints as `undefined`.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "undefined".into()
    } else {
        format!("{v:.6}")
    }
}

pub fn compute_apr(auto: &[i32]) -> Result<f64> {
    if auto.is_empty() {
        return invalid("APR of an empty pick set");
    }
    Ok(auto.iter().filter(|&&p| p != UNPICKED).count() as f64 / auto.len() as f64)
}

pub fn compute_metrics(auto: &[i32], manual: &[i32]) -> Result<MetricsReport> {
    if auto.len() != manual.len() {
        return invalid(format!("{} automatic vs {} manual picks", auto.len(), manual.len()));
    }
    let apr = compute_apr(auto)?;
    let errors: Vec<f64> = auto
        .iter()
        .zip(manual)
        .filter(|&(&a, &m)| a != UNPICKED && m != UNPICKED)
        .map(|(&a, &m)| f64::from(a) - f64::from(m))
        .collect();
    let n = errors.len();
    let mut report = MetricsReport {
        apr,
        n_traces: auto.len(),
        n_intersection: n,
        hr: [f64::NAN; 5],
        mae: f64::NAN,
        mbe: f64::NAN,
        rmse: f64::NAN,
    };
    if n == 0 {
        return Ok(report);
    }
    let nf = n as f64;
    for (slot, &d) in report.hr.iter_mut().zip(&HR_DELTAS) {
        *slot = errors.iter().filter(|e| e.abs() < f64::from(d)).count() as f64 / nf;
    }
    report.mae = errors.iter().map(|e| e.abs()).sum::<f64>() / nf;
    report.mbe = errors.iter().sum::<f64>() / nf;
    report.rmse = (errors.iter().map(|e| e * e).sum::<f64>() / nf).sqrt();
    Ok(report)
}

/// One threshold of an APR sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub threshold: f64,
    pub report: MetricsReport,
}

/// Metrics over all traces of several gathers for each threshold.
///
/// `results` carry per-trace candidates and confidences; `manual` holds the
/// reference picks of the same traces.
pub fn apr_sweep(results: &[PickResult], manual: &[Vec<i32>], thresholds: &[f64]) -> Result<Vec<SweepRow>> {
    if results.len() != manual.len() {
        return invalid("one manual pick set per result is required");
    }
    if thresholds.windows(2).any(|w| !(w[0] <= w[1])) {
        return invalid("sweep thresholds must be sorted ascending");
    }
    let manual_all: Vec<i32> = manual.iter().flatten().copied().collect();
    thresholds
        .iter()
        .map(|&t| {
            let auto: Vec<i32> = results.iter().flat_map(|r| r.with_threshold(t).picks).collect();
            Ok(SweepRow {
                threshold: t,
                report: compute_metrics(&auto, &manual_all)?,
            })
        })
        .collect()
}

pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut s = format!("threshold\t{TSV_COLUMNS}\n");
    for r in rows {
        let _ = writeln!(s, "{}\t{}", fmt_num(r.threshold), r.report.tsv_fields());
    }
    s
}

/// Mean and sample standard deviation of a metric across runs, ignoring
/// undefined values.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    let v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Some((m, sd))
}
