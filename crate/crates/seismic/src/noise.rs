//! Gaussian noise at a target signal-to-noise ratio.
//!
//! `SNR = 10 log10(var_signal / var_noise)`, with the signal variance taken
//! over every sample of the clean gather.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::gather::Gather;

/// Population variance of all amplitudes.
pub fn signal_variance(g: &Gather) -> f64 {
    variance(g.amplitudes.iter().map(|&v| f64::from(v)))
}

fn variance(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        return 0.0;
    }
    let mean = sum / n as f64;
    values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64
}

/// Noise variance for a target SNR in dB.
pub fn noise_variance(signal_variance: f64, snr_db: f64) -> f64 {
    signal_variance / 10f64.powf(snr_db / 10.0)
}

/// Copy of `g` with white Gaussian noise added; picks are unchanged.
/// `snr_db = +inf` returns the gather untouched.
pub fn inject_noise(g: &Gather, snr_db: f64, seed: u64) -> Gather {
    let sigma = noise_variance(signal_variance(g), snr_db).sqrt();
    let mut out = g.clone();
    if sigma == 0.0 || !sigma.is_finite() {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in &mut out.amplitudes {
        let e: f64 = StandardNormal.sample(&mut rng);
        *v = (f64::from(*v) + sigma * e) as f32;
    }
    out
}

/// Measured SNR of `noisy` against `clean`, dB.
pub fn measured_snr(clean: &Gather, noisy: &Gather) -> f64 {
    let noise = clean
        .amplitudes
        .iter()
        .zip(&noisy.amplitudes)
        .map(|(&c, &n)| f64::from(n) - f64::from(c));
    10.0 * (signal_variance(clean) / variance(noise)).log10()
}
