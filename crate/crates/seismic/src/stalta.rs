//! Short-term over long-term average energy ratio picker.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gather::{Gather, UNPICKED};
use crate::pipeline::PickResult;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StaLtaConfig {
    /// Samples.
    pub long_window: usize,
    /// Samples.
    pub short_window: usize,
    pub trigger_threshold: f64,
}

impl Default for StaLtaConfig {
    fn default() -> Self {
        Self {
            long_window: 30,
            short_window: 3,
            trigger_threshold: 4.0,
        }
    }
}

impl StaLtaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.short_window == 0 || self.short_window >= self.long_window {
            return invalid(format!(
                "need 1 <= short window < long window, got {} and {}",
                self.short_window, self.long_window
            ));
        }
        Ok(())
    }
}

/// Relative floor on the long-term average, against silent prefixes.
pub const LTA_FLOOR: f64 = 1e-12;

/// `ratio[t] = mean(x^2 over the short window ending at t) /
/// mean(x^2 over the long window ending at t)`, zero for `t < long`.
///
/// The trace is scaled to unit peak first, so the ratios do not depend on
/// the amplitude scale. The long-term mean is floored at `LTA_FLOOR` times
/// the mean energy of the trace.
pub fn sta_lta_series(trace: &[f64], config: &StaLtaConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let (s, l) = (config.short_window, config.long_window);
    if trace.len() <= l {
        return invalid(format!(
            "trace of {} samples is not longer than the long window {l}",
            trace.len()
        ));
    }
    let peak = trace.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut ratio = vec![0.0; trace.len()];
    if peak == 0.0 {
        return Ok(ratio);
    }
    let energy: Vec<f64> = trace.iter().map(|&v| (v / peak).powi(2)).collect();
    let floor = LTA_FLOOR * energy.iter().sum::<f64>() / energy.len() as f64;
    for t in l..trace.len() {
        let sta = energy[t + 1 - s..=t].iter().sum::<f64>() / s as f64;
        let lta = energy[t + 1 - l..=t].iter().sum::<f64>() / l as f64;
        ratio[t] = sta / lta.max(floor);
    }
    Ok(ratio)
}

/// First sample whose ratio reaches the trigger, or -1.
pub fn first_trigger(ratio: &[f64], threshold: f64) -> i32 {
    ratio
        .iter()
        .position(|&r| r >= threshold && r > 0.0)
        .map_or(UNPICKED, |t| t as i32)
}

pub fn sta_lta_pick(trace: &[f64], config: &StaLtaConfig) -> Result<i32> {
    let ratio = sta_lta_series(trace, config)?;
    Ok(first_trigger(&ratio, config.trigger_threshold))
}

/// Per-trace STA/LTA picks of a gather in the form the network produces.
///
/// The confidence of a trace is its peak ratio times `short / long`, which
/// lies in `[0, 1]` because a short-window mean of energy can exceed the
/// enclosing long-window mean by at most `long / short`. The candidate is
/// the first trigger, or the first peak-ratio sample for traces that never
/// trigger. At the returned threshold the kept picks match
/// [`sta_lta_pick`] (barring rounding exactly at the trigger ratio), so
/// calibrating that threshold calibrates the trigger ratio.
pub fn sta_lta_result(g: &Gather, config: &StaLtaConfig) -> Result<PickResult> {
    let scale = config.short_window as f64 / config.long_window as f64;
    let threshold = (config.trigger_threshold * scale).clamp(0.0, 1.0);
    let mut candidates = Vec::with_capacity(g.n_traces());
    let mut confidence = Vec::with_capacity(g.n_traces());
    for tr in g.traces() {
        let x: Vec<f64> = tr.iter().map(|&v| f64::from(v)).collect();
        let ratio = sta_lta_series(&x, config)?;
        let (peak_at, peak) = ratio
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, &r)| if r > best.1 { (i, r) } else { best });
        let trig = first_trigger(&ratio, config.trigger_threshold);
        candidates.push(if trig == UNPICKED { peak_at as i32 } else { trig });
        confidence.push((peak * scale).min(1.0));
    }
    Ok(PickResult {
        picks: candidates.clone(),
        confidence,
        threshold: 0.0,
        candidates,
    }
    .with_threshold(threshold))
}
