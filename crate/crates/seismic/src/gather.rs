use crate::error::{invalid, Result};

/// Pick sentinel for traces without a first break.
pub const UNPICKED: i32 = -1;

/// One shot record.
///
/// Amplitudes are stored trace-major: trace `i` occupies
/// `amplitudes[i * n_samples..(i + 1) * n_samples]`. Values are kept in the
/// single precision of the on-disk format so that file round trips are exact.
#[derive(Clone, Debug, PartialEq)]
pub struct Gather {
    pub survey_id: String,
    /// Sampling interval in seconds.
    pub dt: f64,
    /// Source-receiver distance per trace, meters.
    pub offsets: Vec<f32>,
    /// First-break sample per trace, or [`UNPICKED`].
    pub picks: Vec<i32>,
    pub amplitudes: Vec<f32>,
    n_samples: usize,
}

impl Gather {
    pub fn new(
        survey_id: impl Into<String>,
        dt: f64,
        n_samples: usize,
        offsets: Vec<f32>,
        picks: Vec<i32>,
        amplitudes: Vec<f32>,
    ) -> Result<Self> {
        let g = Self {
            survey_id: survey_id.into(),
            dt,
            offsets,
            picks,
            amplitudes,
            n_samples,
        };
        g.validate()?;
        Ok(g)
    }

    /// All-zero gather with every trace unpicked.
    pub fn zeros(survey_id: impl Into<String>, dt: f64, offsets: Vec<f32>, n_samples: usize) -> Result<Self> {
        let n = offsets.len();
        Self::new(survey_id, dt, n_samples, offsets, vec![UNPICKED; n], vec![0.0; n * n_samples])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return invalid(format!("sampling interval must be positive, got {}", self.dt));
        }
        if self.n_samples == 0 || self.offsets.is_empty() {
            return invalid("gather needs at least one trace and one sample");
        }
        if self.picks.len() != self.offsets.len() {
            return invalid(format!(
                "{} picks for {} traces",
                self.picks.len(),
                self.offsets.len()
            ));
        }
        if self.amplitudes.len() != self.offsets.len() * self.n_samples {
            return invalid(format!(
                "{} amplitudes for {} traces of {} samples",
                self.amplitudes.len(),
                self.offsets.len(),
                self.n_samples
            ));
        }
        if let Some((i, &p)) = self
            .picks
            .iter()
            .enumerate()
            .find(|&(_, &p)| p != UNPICKED && !(0..self.n_samples as i64).contains(&(p as i64)))
        {
            return invalid(format!("pick {p} of trace {i} outside [0, {})", self.n_samples));
        }
        Ok(())
    }

    pub fn n_traces(&self) -> usize {
        self.offsets.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn trace(&self, i: usize) -> &[f32] {
        &self.amplitudes[i * self.n_samples..(i + 1) * self.n_samples]
    }

    pub fn trace_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.amplitudes[i * self.n_samples..(i + 1) * self.n_samples]
    }

    pub fn traces(&self) -> impl Iterator<Item = &[f32]> {
        self.amplitudes.chunks_exact(self.n_samples)
    }

    /// Sparse `(offset m, time s)` pairs from the picked traces.
    pub fn pick_times(&self) -> Vec<(f64, f64)> {
        self.offsets
            .iter()
            .zip(&self.picks)
            .filter(|&(_, &p)| p != UNPICKED)
            .map(|(&x, &p)| (f64::from(x), f64::from(p) * self.dt))
            .collect()
    }
}
