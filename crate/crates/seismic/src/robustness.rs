//! Picking quality versus injected noise level at a fixed picking rate.

use std::fmt::Write as _;

use crate::gather::Gather;
use crate::metrics::{compute_metrics, fmt_num, MetricsReport, TSV_COLUMNS};
use crate::noise::inject_noise;
use crate::pipeline::{calibrate_threshold, LmoParams, PickResult};

/// Default noise levels, dB.
pub const SNR_LIST: [f64; 6] = [-1.0, 1.0, 3.0, 5.0, 10.0, 20.0];
/// Allowed gap between the achieved and the requested APR.
pub const APR_TOLERANCE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct RobustnessRow {
    pub snr_db: f64,
    pub threshold: Option<f64>,
    pub report: Option<MetricsReport>,
    /// Calibration failure, or an achieved APR off target by more than
    /// [`APR_TOLERANCE`].
    pub flag: Option<String>,
}

/// Noise seed of one gather at one level.
fn noise_seed(seed: u64, level: usize, gather: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((level as u64) << 32 | gather as u64)
}

/// For every SNR: add noise to each test gather, pick with `infer` (which
/// must return per-trace candidates and confidences), calibrate one
/// threshold over all traces to `target_apr`, and score against the
/// gathers' own picks.
pub fn robustness_run<E>(
    test: &[(Gather, LmoParams)],
    snr_list: &[f64],
    target_apr: f64,
    seed: u64,
    mut infer: impl FnMut(&Gather, &LmoParams) -> Result<PickResult, E>,
) -> Result<Vec<RobustnessRow>, E> {
    let mut rows = Vec::with_capacity(snr_list.len());
    for (li, &snr) in snr_list.iter().enumerate() {
        let mut results = Vec::with_capacity(test.len());
        for (gi, (g, lmo)) in test.iter().enumerate() {
            let noisy = inject_noise(g, snr, noise_seed(seed, li, gi));
            results.push(infer(&noisy, lmo)?);
        }
        rows.push(score(snr, &results, test, target_apr));
    }
    Ok(rows)
}

/// Calibrates and scores one level's results.
pub fn score(snr_db: f64, results: &[PickResult], test: &[(Gather, LmoParams)], target_apr: f64) -> RobustnessRow {
    let conf: Vec<f64> = results.iter().flat_map(|r| r.confidence.iter().copied()).collect();
    let manual: Vec<i32> = test.iter().flat_map(|(g, _)| g.picks.iter().copied()).collect();
    match calibrate_threshold(&conf, target_apr) {
        Err(e) => RobustnessRow {
            snr_db,
            threshold: None,
            report: None,
            flag: Some(e.to_string()),
        },
        Ok(cal) => {
            let auto: Vec<i32> = results
                .iter()
                .flat_map(|r| r.with_threshold(cal.threshold).picks)
                .collect();
            match compute_metrics(&auto, &manual) {
                Ok(report) => {
                    let flag = ((report.apr - target_apr).abs() > APR_TOLERANCE).then(|| {
                        format!("achieved APR {:.4} differs from target {target_apr}", report.apr)
                    });
                    RobustnessRow {
                        snr_db,
                        threshold: Some(cal.threshold),
                        report: Some(report),
                        flag,
                    }
                }
                Err(e) => RobustnessRow {
                    snr_db,
                    threshold: Some(cal.threshold),
                    report: None,
                    flag: Some(e.to_string()),
                },
            }
        }
    }
}

pub fn robustness_table(rows: &[RobustnessRow]) -> String {
    let mut s = format!("snr_db\tthreshold\t{TSV_COLUMNS}\tflag\n");
    let blank = vec!["undefined"; TSV_COLUMNS.split('\t').count()].join("\t");
    for r in rows {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}",
            fmt_num(r.snr_db),
            r.threshold.map_or("undefined".into(), fmt_num),
            r.report.as_ref().map_or(blank.clone(), MetricsReport::tsv_fields),
            r.flag.as_deref().unwrap_or("ok")
        );
    }
    s
}
