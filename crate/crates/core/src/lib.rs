//! Dense tensor engine with reverse-mode differentiation, dynamic snake
//! convolution and the DSU-Net first-break segmentation network.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`). The
//! aliases at the bottom of this file fix the precision for callers that do
//! not care: `*64` types are used for gradient checks and checkpoints, `*32`
//! types are the faster choice for training.
//!
//! ```
//! use fbpick_core::{DsuNet, ModelConfig, Session, Tensor};
//!
//! let config = ModelConfig { height: 16, width: 32, decoder_blocks: [16, 8, 4, 2], ..Default::default() };
//! let net = DsuNet::new(config).unwrap();
//! let params = net.init_parameters::<f64>(7).unwrap();
//! let mut sess = Session::inference(&params);
//! let x = sess.tape.constant(Tensor::zeros(&[1, 1, 16, 32]).unwrap());
//! let y = net.forward(&mut sess, x).unwrap();
//! assert_eq!(sess.tape.shape(y), &[1, 1, 16, 32]);
//! ```

#![allow(clippy::needless_range_loop)]

pub mod checkpoint;
pub mod dsconv;
pub mod dsunet;
mod error;
pub mod gradcheck;
pub mod layers;
pub mod ops;
pub mod optim;
mod params;
mod scalar;
mod tape;
mod tensor;

pub use checkpoint::Checkpoint;
pub use dsconv::{BranchSet, Direction, DsConvModule, SnakeConv, SnakeConvSpec};
pub use dsunet::{init_parameters, DsuNet, ForwardTrace, ModelConfig, TraConv, UpSampling};
pub use error::{Error, Result};
pub use optim::{AdamConfig, AdamState};
pub use params::{Gradients, Mode, Param, ParamKind, ParamStore, Session};
pub use scalar::Scalar;
pub use tape::{Tape, Var};
pub use tensor::Tensor;

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Tape64 = Tape<f64>;
pub type Tape32 = Tape<f32>;
pub type ParamStore64 = ParamStore<f64>;
pub type ParamStore32 = ParamStore<f32>;
pub type AdamState64 = AdamState<f64>;
pub type AdamState32 = AdamState<f32>;
