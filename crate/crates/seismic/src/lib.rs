//! Seismic side of the first-break picker: gathers and their file format,
//! synthetic data and noise, the crop/normalize/tile pipeline around the
//! segmentation network, the STA/LTA baseline, metrics and the noise
//! robustness harness.
//!
//! Amplitudes are single precision as stored on disk; every computation on
//! them runs in `f64`.

// `!(x > 0.0)` also rejects NaN, which is the point
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;
pub mod format;
mod gather;
mod image;
pub mod metrics;
pub mod noise;
pub mod pipeline;
pub mod robustness;
pub mod stalta;
pub mod synth;

pub use error::{Error, Result};
pub use format::{read_gather, write_gather};
pub use gather::{Gather, UNPICKED};
pub use image::{make_label_map, Image};
pub use metrics::{compute_apr, compute_metrics, MetricsReport};
pub use noise::inject_noise;
pub use pipeline::{
    calibrate_threshold, extract_picks, lmo_crop, normalize_traces, tile_width, Calibration, Crop, CropWindow,
    LmoParams, Panel, PickResult, TileMode,
};
pub use stalta::{sta_lta_pick, sta_lta_result, sta_lta_series, StaLtaConfig};
pub use synth::{synth_gather, JumpSpec, SynthSpec};
