//! Synthetic shot gathers with known first breaks.
//!
//! Each trace is silent up to its first-break sample, where a Ricker wavelet
//! starts at its leading trough; a few weaker hyperbolic reflections follow.
//! Amplitudes before the pick are exactly zero, so the label is the onset
//! sample.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::gather::Gather;

/// Piecewise first-break jumps: `count` breakpoints at random traces, each
/// shifting every later trace by a further nonzero integer step in
/// `[-max_samples, max_samples]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpSpec {
    pub count: usize,
    pub max_samples: i32,
}

impl JumpSpec {
    pub const NONE: JumpSpec = JumpSpec {
        count: 0,
        max_samples: 0,
    };
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub survey_id: String,
    pub n_traces: usize,
    pub n_samples: usize,
    /// Seconds.
    pub dt: f64,
    /// Refractor velocity, m/s.
    pub velocity: f64,
    /// Intercept time, s.
    pub t0: f64,
    /// Offset of trace 0 and spacing between traces, m.
    pub first_offset: f64,
    pub offset_spacing: f64,
    /// Ricker peak frequency, Hz.
    pub frequency: f64,
    pub jumps: JumpSpec,
    /// Number of coda reflections.
    pub reflections: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            survey_id: "synthetic".into(),
            n_traces: 256,
            n_samples: 400,
            dt: 0.001,
            velocity: 5200.0,
            t0: 0.02,
            first_offset: 20.0,
            offset_spacing: 5.0,
            frequency: 30.0,
            jumps: JumpSpec::NONE,
            reflections: 3,
            seed: 0,
        }
    }
}

/// Ricker wavelet with peak frequency `f` at time `tau` from its peak.
pub fn ricker(tau: f64, f: f64) -> f64 {
    let a = (PI * f * tau).powi(2);
    (1.0 - 2.0 * a) * (-a).exp()
}

/// Time from the leading trough of a Ricker wavelet to its peak.
pub fn trough_lead(f: f64) -> f64 {
    1.5f64.sqrt() / (PI * f)
}

/// Adds a Ricker wavelet cut to start at its leading trough on sample
/// `start`, so the onset is a jump to about -0.45 of the peak.
fn add_wavelet(trace: &mut [f64], start: usize, amplitude: f64, f: f64, dt: f64) {
    let delay = trough_lead(f);
    // 2.5/f past the peak the wavelet is below 1e-26
    let len = (((delay + 2.5 / f) / dt).ceil() as usize).max(1);
    for (n, v) in trace.iter_mut().enumerate().skip(start).take(len) {
        *v += amplitude * ricker((n - start) as f64 * dt - delay, f);
    }
}

/// Moveout pick `round((t0 + x / v) / dt + shift)`.
pub fn moveout_sample(offset: f64, velocity: f64, t0: f64, dt: f64, shift: i32) -> i64 {
    ((t0 + offset / velocity) / dt).round() as i64 + i64::from(shift)
}

pub fn synth_gather(spec: &SynthSpec) -> Result<Gather> {
    if !(spec.velocity > 0.0) {
        return invalid(format!("velocity must be positive, got {}", spec.velocity));
    }
    if !(spec.dt > 0.0) || !(spec.frequency > 0.0) || spec.n_traces == 0 || spec.n_samples == 0 {
        return invalid("synthetic gather needs positive dt, frequency, trace and sample counts");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_traces;
    let offsets: Vec<f32> = (0..n)
        .map(|i| (spec.first_offset + i as f64 * spec.offset_spacing) as f32)
        .collect();

    let mut shift = vec![0i32; n];
    if spec.jumps.count > 0 && spec.jumps.max_samples > 0 && n > 1 {
        for _ in 0..spec.jumps.count {
            let at = rng.random_range(1..n);
            let mut step = 0;
            while step == 0 {
                step = rng.random_range(-spec.jumps.max_samples..=spec.jumps.max_samples);
            }
            for s in &mut shift[at..] {
                *s += step;
            }
        }
    }

    let mut picks = Vec::with_capacity(n);
    for (i, &x) in offsets.iter().enumerate() {
        let p = moveout_sample(f64::from(x), spec.velocity, spec.t0, spec.dt, shift[i]);
        if p < 0 || p >= spec.n_samples as i64 {
            return invalid(format!(
                "first break of trace {i} at sample {p} lies outside [0, {})",
                spec.n_samples
            ));
        }
        picks.push(p as i32);
    }

    let horizon = spec.n_samples as f64 * spec.dt;
    let events: Vec<(f64, f64, f64)> = (0..spec.reflections)
        .map(|_| {
            let t = rng.random_range(spec.t0 + 0.03..horizon.max(spec.t0 + 0.031));
            let v = rng.random_range(1.5..2.5) * spec.velocity;
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            (t, v, sign * rng.random_range(0.15..0.5))
        })
        .collect();

    let mut amplitudes = Vec::with_capacity(n * spec.n_samples);
    let mut trace = vec![0.0f64; spec.n_samples];
    for (i, &x) in offsets.iter().enumerate() {
        let x = f64::from(x);
        trace.fill(0.0);
        let p = picks[i] as usize;
        let gain = 1.0 / (1.0 + x.abs() / 2000.0);
        add_wavelet(&mut trace, p, gain, spec.frequency, spec.dt);
        for &(t, v, a) in &events {
            let arrival = (t * t + (x / v).powi(2)).sqrt();
            let q = (arrival / spec.dt).round() as usize;
            if q > p + 4 && q < spec.n_samples {
                add_wavelet(&mut trace, q, gain * a, spec.frequency, spec.dt);
            }
        }
        amplitudes.extend(trace.iter().map(|&v| v as f32));
    }
    Gather::new(spec.survey_id.clone(), spec.dt, spec.n_samples, offsets, picks, amplitudes)
}
