//! Preprocessing around the segmentation network and post-processing of its
//! probability maps.
//!
//! A gather is cut into a band of [`CROP_HEIGHT`] samples that follows the
//! linear moveout `t0 + x / v`, traces are normalized to unit peak, and the
//! band is split into panels of [`PANEL_WIDTH`] traces. Each column of a
//! returned probability map yields one pick at its argmax.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gather::{Gather, UNPICKED};
use crate::image::Image;

pub const CROP_HEIGHT: usize = 128;
pub const PANEL_WIDTH: usize = 256;
/// Bound of the uniform window shift used for augmentation, samples.
pub const MAX_AUGMENT_SHIFT: f64 = 32.0;

/// Linear-moveout reference line and the spread used for augmentation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmoParams {
    /// m/s
    pub v: f64,
    /// s
    pub t0: f64,
    #[serde(default)]
    pub sigma_v: f64,
    #[serde(default)]
    pub sigma_t0: f64,
}

impl LmoParams {
    pub fn new(v: f64, t0: f64) -> Self {
        Self {
            v,
            t0,
            sigma_v: 0.0,
            sigma_t0: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v > 0.0 && self.v.is_finite()) || !self.t0.is_finite() {
            return invalid(format!("LMO line needs v > 0 and finite t0, got v={} t0={}", self.v, self.t0));
        }
        if !(self.sigma_v >= 0.0 && self.sigma_t0 >= 0.0) {
            return invalid("LMO spreads must be non-negative");
        }
        Ok(())
    }

    /// Reference time at `offset`, s.
    pub fn reference_time(&self, offset: f64) -> f64 {
        self.t0 + offset / self.v
    }
}

/// Least-squares `t = a + b x`.
fn fit_line(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::Estimation(format!("need at least 2 picks, got {}", points.len())));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mt = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxt: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - mt)).sum();
    if sxx <= f64::EPSILON * mx.abs().max(1.0).powi(2) * n {
        return Err(Error::Estimation("all picks share one offset".into()));
    }
    let b = sxt / sxx;
    Ok((mt - b * mx, b))
}

fn line_to_lmo(a: f64, b: f64) -> Result<LmoParams> {
    if !(b > 0.0) {
        return Err(Error::Estimation(format!(
            "fitted slowness {b} is not positive, no moveout velocity"
        )));
    }
    Ok(LmoParams::new(1.0 / b, a))
}

/// Reference line through sparse `(offset m, time s)` picks; spreads are 0.
pub fn estimate_lmo(points: &[(f64, f64)]) -> Result<LmoParams> {
    let (a, b) = fit_line(points)?;
    line_to_lmo(a, b)
}

/// Pooled line over several gathers' sparse picks, with `sigma_v` and
/// `sigma_t0` the sample standard deviations of the per-gather fits
/// (zero when fewer than two gathers are given).
pub fn estimate_lmo_gathers(per_gather: &[Vec<(f64, f64)>]) -> Result<LmoParams> {
    let pooled: Vec<(f64, f64)> = per_gather.iter().flatten().copied().collect();
    let mut lmo = estimate_lmo(&pooled)?;
    if per_gather.len() >= 2 {
        let fits = per_gather
            .iter()
            .map(|pts| estimate_lmo(pts))
            .collect::<Result<Vec<_>>>()?;
        let sd = |xs: Vec<f64>| {
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
        };
        lmo.sigma_v = sd(fits.iter().map(|f| f.v).collect());
        lmo.sigma_t0 = sd(fits.iter().map(|f| f.t0).collect());
    }
    Ok(lmo)
}

/// Where each cropped column came from.
#[derive(Clone, Debug, PartialEq)]
pub struct CropWindow {
    pub survey_id: String,
    pub height: usize,
    /// Source trace index per column.
    pub traces: Vec<usize>,
    /// First gather sample per column.
    pub starts: Vec<usize>,
}

impl CropWindow {
    pub fn width(&self) -> usize {
        self.traces.len()
    }
}

/// Window start for a center sample: `round(center) - height / 2`, shifted
/// inward so the window fits in `[0, n_samples)`.
pub fn window_start(center_sample: f64, n_samples: usize, height: usize) -> usize {
    let want = center_sample.round() as i64 - (height / 2) as i64;
    want.clamp(0, (n_samples - height) as i64) as usize
}

fn window_from_centers(g: &Gather, centers: impl Iterator<Item = f64>) -> Result<CropWindow> {
    if g.n_samples() < CROP_HEIGHT {
        return invalid(format!(
            "gather has {} samples, crops need {CROP_HEIGHT}",
            g.n_samples()
        ));
    }
    Ok(CropWindow {
        survey_id: g.survey_id.clone(),
        height: CROP_HEIGHT,
        traces: (0..g.n_traces()).collect(),
        starts: centers.map(|c| window_start(c, g.n_samples(), CROP_HEIGHT)).collect(),
    })
}

/// Window centered on the LMO reference time of every trace.
pub fn lmo_window(g: &Gather, lmo: &LmoParams) -> Result<CropWindow> {
    lmo.validate()?;
    window_from_centers(g, g.offsets.iter().map(|&x| lmo.reference_time(f64::from(x)) / g.dt))
}

/// One random draw of the augmented reference line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentDraw {
    pub t0: f64,
    pub v: f64,
    /// Whole-window shift, samples.
    pub shift: f64,
}

impl AugmentDraw {
    pub fn identity(lmo: &LmoParams) -> Self {
        Self {
            t0: lmo.t0,
            v: lmo.v,
            shift: 0.0,
        }
    }
}

/// `t0 ~ N(t0, sigma_t0)`, `v ~ N(v, sigma_v)` redrawn until positive,
/// `shift ~ U(-32, 32)`.
pub fn draw_augmentation(lmo: &LmoParams, rng: &mut impl Rng) -> Result<AugmentDraw> {
    lmo.validate()?;
    let t0 = Normal::new(lmo.t0, lmo.sigma_t0).expect("validated spread").sample(rng);
    let vd = Normal::new(lmo.v, lmo.sigma_v).expect("validated spread");
    let v = (0..1000)
        .map(|_| vd.sample(rng))
        .find(|&v| v > 0.0)
        .ok_or_else(|| Error::Validation("velocity spread too wide to draw a positive velocity".into()))?;
    let shift = rng.random_range(-MAX_AUGMENT_SHIFT..MAX_AUGMENT_SHIFT);
    Ok(AugmentDraw { t0, v, shift })
}

/// Window centered on `t0 + x / v + shift * dt` of a drawn line.
pub fn augmented_window(g: &Gather, draw: &AugmentDraw) -> Result<CropWindow> {
    if !(draw.v > 0.0) {
        return invalid(format!("augmented velocity {} is not positive", draw.v));
    }
    window_from_centers(
        g,
        g.offsets
            .iter()
            .map(|&x| (draw.t0 + f64::from(x) / draw.v) / g.dt + draw.shift),
    )
}

/// Randomly perturbed crop window, deterministic in `seed`.
pub fn augment_crop(g: &Gather, lmo: &LmoParams, seed: u64) -> Result<CropWindow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    augmented_window(g, &draw_augmentation(lmo, &mut rng)?)
}

/// Cropped band of a gather with picks re-based to window rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Crop {
    pub image: Image,
    pub window: CropWindow,
    /// Pick row inside the window, or -1 when unpicked or outside.
    pub picks: Vec<i32>,
}

impl Crop {
    /// Keeps only columns with a pick inside the window.
    pub fn picked_only(&self) -> Crop {
        let keep: Vec<usize> = (0..self.window.width()).filter(|&c| self.picks[c] != UNPICKED).collect();
        let w = keep.len();
        let mut data = Vec::with_capacity(self.image.height * w);
        for r in 0..self.image.height {
            data.extend(keep.iter().map(|&c| self.image.get(r, c)));
        }
        Crop {
            image: Image {
                height: self.image.height,
                width: w,
                data,
            },
            window: CropWindow {
                survey_id: self.window.survey_id.clone(),
                height: self.window.height,
                traces: keep.iter().map(|&c| self.window.traces[c]).collect(),
                starts: keep.iter().map(|&c| self.window.starts[c]).collect(),
            },
            picks: keep.iter().map(|&c| self.picks[c]).collect(),
        }
    }
}

pub fn crop_with_window(g: &Gather, window: &CropWindow) -> Result<Crop> {
    let (h, w) = (window.height, window.width());
    if w == 0 || window.starts.len() != w {
        return invalid("crop window has no columns or mismatched starts");
    }
    let mut image = Image::zeros(h, w);
    let mut picks = Vec::with_capacity(w);
    for (col, (&tr, &start)) in window.traces.iter().zip(&window.starts).enumerate() {
        if tr >= g.n_traces() || start + h > g.n_samples() {
            return invalid(format!("window column {col} reaches outside the gather"));
        }
        for (r, &v) in g.trace(tr)[start..start + h].iter().enumerate() {
            image.set(r, col, f64::from(v));
        }
        let p = g.picks[tr];
        let rel = i64::from(p) - start as i64;
        picks.push(if p != UNPICKED && (0..h as i64).contains(&rel) {
            rel as i32
        } else {
            UNPICKED
        });
    }
    Ok(Crop {
        image,
        window: window.clone(),
        picks,
    })
}

pub fn lmo_crop(g: &Gather, lmo: &LmoParams) -> Result<Crop> {
    crop_with_window(g, &lmo_window(g, lmo)?)
}

/// Divides every column by its peak absolute value; all-zero columns stay
/// zero.
pub fn normalize_traces(image: &mut Image) {
    let w = image.width;
    let mut peak = vec![0.0f64; w];
    for row in image.data.chunks_exact(w) {
        for (p, &v) in peak.iter_mut().zip(row) {
            *p = p.max(v.abs());
        }
    }
    for row in image.data.chunks_exact_mut(w) {
        for (v, &p) in row.iter_mut().zip(&peak) {
            if p > 0.0 {
                *v /= p;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TileMode {
    /// Full panels only; a short tail is dropped.
    Training,
    /// Every trace is covered; the last panel is padded by reflection.
    Inference,
}

/// A fixed-width slice of a crop.
#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    pub image: Image,
    pub window: CropWindow,
    pub picks: Vec<i32>,
    /// Leading columns that are real traces; the rest is padding.
    pub valid: usize,
}

/// Mirror index into `[0, n)` without repeating the edge column.
fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i % period;
    if m < n {
        m
    } else {
        period - m
    }
}

pub fn tile_width(crop: &Crop, width: usize, mode: TileMode) -> Result<Vec<Panel>> {
    let n = crop.window.width();
    if n == 0 || width == 0 {
        return invalid("tiling needs at least one trace and a positive panel width");
    }
    let panels = match mode {
        TileMode::Training => n / width,
        TileMode::Inference => n.div_ceil(width),
    };
    let h = crop.image.height;
    Ok((0..panels)
        .map(|k| {
            let lo = k * width;
            let valid = width.min(n - lo);
            let cols: Vec<usize> = (0..width)
                .map(|j| if j < valid { lo + j } else { lo + reflect(j, valid) })
                .collect();
            let mut data = Vec::with_capacity(h * width);
            for r in 0..h {
                data.extend(cols.iter().map(|&c| crop.image.get(r, c)));
            }
            Panel {
                image: Image {
                    height: h,
                    width,
                    data,
                },
                window: CropWindow {
                    survey_id: crop.window.survey_id.clone(),
                    height: crop.window.height,
                    traces: cols.iter().map(|&c| crop.window.traces[c]).collect(),
                    starts: cols.iter().map(|&c| crop.window.starts[c]).collect(),
                },
                picks: cols.iter().map(|&c| crop.picks[c]).collect(),
                valid,
            }
        })
        .collect())
}

/// Picks with their confidences.
#[derive(Clone, Debug, PartialEq)]
pub struct PickResult {
    /// Sample in the gather time base, or -1.
    pub picks: Vec<i32>,
    /// Column maximum of the probability map.
    pub confidence: Vec<f64>,
    pub threshold: f64,
    /// Argmax sample regardless of the threshold.
    pub candidates: Vec<i32>,
}

/// A pick is kept when its confidence reaches the threshold and is positive;
/// a column that is zero everywhere never yields a pick.
#[inline]
pub fn keeps(confidence: f64, threshold: f64) -> bool {
    confidence >= threshold && confidence > 0.0
}

impl PickResult {
    pub fn with_threshold(&self, threshold: f64) -> PickResult {
        PickResult {
            picks: self
                .candidates
                .iter()
                .zip(&self.confidence)
                .map(|(&p, &c)| if keeps(c, threshold) { p } else { UNPICKED })
                .collect(),
            confidence: self.confidence.clone(),
            threshold,
            candidates: self.candidates.clone(),
        }
    }

    /// Fraction of traces with a pick.
    pub fn apr(&self) -> f64 {
        self.picks.iter().filter(|&&p| p != UNPICKED).count() as f64 / self.picks.len().max(1) as f64
    }
}

pub fn check_threshold(threshold: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&threshold) {
        return invalid(format!("threshold {threshold} outside [0, 1]"));
    }
    Ok(())
}

/// Per-column argmax of a probability map, mapped back to gather samples.
pub fn extract_picks(map: &Image, window: &CropWindow, threshold: f64) -> Result<PickResult> {
    check_threshold(threshold)?;
    if map.height != window.height || map.width != window.width() {
        return invalid(format!(
            "map {}x{} does not match window {}x{}",
            map.height,
            map.width,
            window.height,
            window.width()
        ));
    }
    let best = map.column_max();
    let candidates: Vec<i32> = best
        .iter()
        .zip(&window.starts)
        .map(|(&(row, _), &s)| (s + row) as i32)
        .collect();
    let confidence: Vec<f64> = best.iter().map(|b| b.1).collect();
    Ok(PickResult {
        picks: candidates.clone(),
        confidence,
        threshold: 0.0,
        candidates,
    }
    .with_threshold(threshold))
}

/// Gathers panel results back into one result per trace of an
/// `n_traces` gather; padding columns are ignored.
pub fn merge_panels<'a>(
    n_traces: usize,
    threshold: f64,
    parts: impl IntoIterator<Item = (&'a Panel, &'a PickResult)>,
) -> PickResult {
    let mut candidates = vec![UNPICKED; n_traces];
    let mut confidence = vec![0.0; n_traces];
    for (panel, res) in parts {
        for col in 0..panel.valid {
            let tr = panel.window.traces[col];
            candidates[tr] = res.candidates[col];
            confidence[tr] = res.confidence[col];
        }
    }
    PickResult {
        picks: candidates.clone(),
        confidence,
        threshold: 0.0,
        candidates,
    }
    .with_threshold(threshold)
}

/// Full pick of one gather: crop, normalize, tile, segment, extract, merge.
///
/// `segment` maps a batch of normalized panels to probability maps of the
/// same size.
pub fn pick_gather<E>(
    g: &Gather,
    lmo: &LmoParams,
    threshold: f64,
    mut segment: impl FnMut(&[Image]) -> Result<Vec<Image>, E>,
) -> Result<PickResult, E>
where
    E: From<Error>,
{
    check_threshold(threshold)?;
    let mut crop = lmo_crop(g, lmo)?;
    normalize_traces(&mut crop.image);
    let panels = tile_width(&crop, PANEL_WIDTH, TileMode::Inference)?;
    let images: Vec<Image> = panels.iter().map(|p| p.image.clone()).collect();
    let maps = segment(&images)?;
    if maps.len() != panels.len() {
        return Err(Error::Validation(format!("{} maps for {} panels", maps.len(), panels.len())).into());
    }
    let results = panels
        .iter()
        .zip(&maps)
        .map(|(p, m)| extract_picks(m, &p.window, 0.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(merge_panels(g.n_traces(), threshold, panels.iter().zip(&results)))
}

/// Threshold found by [`calibrate_threshold`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Calibration {
    pub threshold: f64,
    /// APR reached at that threshold.
    pub apr: f64,
}

/// APR of a set of confidences at a threshold.
pub fn apr_at(confidences: &[f64], threshold: f64) -> f64 {
    confidences.iter().filter(|&&c| keeps(c, threshold)).count() as f64 / confidences.len().max(1) as f64
}

/// Largest threshold whose APR is at least `target_apr`.
///
/// APR is a non-increasing step function of the threshold that only changes
/// at confidence values, so the answer is the `k`-th largest confidence with
/// `k` the smallest count satisfying `k / N >= target`.
pub fn calibrate_threshold(confidences: &[f64], target_apr: f64) -> Result<Calibration> {
    if !(target_apr > 0.0 && target_apr <= 1.0) {
        return invalid(format!("target APR {target_apr} outside (0, 1]"));
    }
    if confidences.is_empty() {
        return invalid("no confidences to calibrate on");
    }
    if confidences.iter().any(|c| c.is_nan()) {
        return invalid("confidence is NaN");
    }
    let n = confidences.len();
    let mut sorted = confidences.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut k = ((target_apr * n as f64).ceil() as usize).clamp(1, n);
    while k > 1 && (k - 1) as f64 / n as f64 >= target_apr {
        k -= 1;
    }
    while k < n && (k as f64 / n as f64) < target_apr {
        k += 1;
    }
    let threshold = sorted[k - 1];
    if !(threshold > 0.0) {
        return Err(Error::Calibration {
            target: target_apr,
            max_achievable: apr_at(confidences, 0.0),
        });
    }
    Ok(Calibration {
        threshold,
        apr: apr_at(confidences, threshold),
    })
}
