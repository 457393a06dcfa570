//! Checkpoint loading and gather picking.

use std::fmt::Write as _;
use std::path::Path;

use fbpick_core::{Checkpoint, DsuNet, ParamStore, Scalar, Session};
use fbpick_seismic::pipeline::{pick_gather, CROP_HEIGHT, PANEL_WIDTH};
use fbpick_seismic::{Gather, Image, LmoParams, PickResult, UNPICKED};

use crate::config::Precision;
use crate::error::{CliError, Result};
use crate::train::stack;

pub struct Model<T: Scalar> {
    pub net: DsuNet,
    pub store: ParamStore<T>,
}

impl<T: Scalar> Model<T> {
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let (net, store) = DsuNet::from_checkpoint::<T>(ck)?;
        let c = &net.config;
        if (c.height, c.width, c.in_channels) != (CROP_HEIGHT, PANEL_WIDTH, 1) {
            return Err(CliError::Data(format!(
                "checkpoint expects {}x{}x{} input, the picker feeds 1x{CROP_HEIGHT}x{PANEL_WIDTH}",
                c.in_channels, c.height, c.width
            )));
        }
        Ok(Self { net, store })
    }

    /// Probability maps of a batch of normalized panels.
    pub fn segment(&self, images: &[Image]) -> Result<Vec<Image>> {
        let x = stack::<T>(images)?;
        let mut sess = Session::inference(&self.store);
        let xv = sess.tape.constant(x);
        let y = self.net.forward(&mut sess, xv)?;
        let out = sess.tape.value(y);
        let (n, _, h, w) = out.dims4()?;
        (0..n)
            .map(|i| {
                let plane = out.plane(i, 0);
                if plane.iter().any(|v| !v.is_finite()) {
                    return Err(CliError::Numeric("network output is not finite".into()));
                }
                Ok(Image::new(h, w, plane.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect())?)
            })
            .collect()
    }
}

/// A model at either precision.
pub enum AnyModel {
    F32(Model<f32>),
    F64(Model<f64>),
}

impl AnyModel {
    pub fn load(path: &Path, precision: Precision) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| {
            CliError::data(format!("checkpoint {}", path.display()), e)
        })?;
        let ck = Checkpoint::from_bytes(&bytes).map_err(|e| CliError::data(path.display(), e))?;
        Ok(match precision {
            Precision::F32 => AnyModel::F32(Model::from_checkpoint(&ck)?),
            Precision::F64 => AnyModel::F64(Model::from_checkpoint(&ck)?),
        })
    }

    pub fn pick(&self, g: &Gather, lmo: &LmoParams, threshold: f64) -> Result<PickResult> {
        match self {
            AnyModel::F32(m) => pick_gather(g, lmo, threshold, |imgs| m.segment(imgs)),
            AnyModel::F64(m) => pick_gather(g, lmo, threshold, |imgs| m.segment(imgs)),
        }
    }
}

/// One line per trace: index, sample (-1 when unpicked), time in seconds
/// (`nan` when unpicked) and confidence.
pub fn picks_text(result: &PickResult, dt: f64) -> String {
    let mut s = String::new();
    for (i, (&p, &c)) in result.picks.iter().zip(&result.confidence).enumerate() {
        if p == UNPICKED {
            let _ = writeln!(s, "{i}\t-1\tnan\t{c:.6}");
        } else {
            let _ = writeln!(s, "{i}\t{p}\t{:.6}\t{c:.6}", f64::from(p) * dt);
        }
    }
    s
}
