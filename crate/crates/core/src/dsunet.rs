//! The DSU-Net segmentation network.
//!
//! ```text
//! enc1  DSConv x2        1 -> 32     128 x 256
//! enc2  TraConv x2      32 -> 64      64 x 128
//! enc3  TraConv x2      64 -> 128     32 x 64
//! enc4  TraConv x2     128 -> 256     16 x 32   (bottleneck)
//! dec1  up 256 -> 128, concat enc3, TraConv x2 -> 128
//! dec2  up 128 -> 64,  concat enc2, TraConv x2 -> 64
//! dec3  up 64 -> 32,   concat enc1, TraConv x2 -> 32
//! head  1x1 conv -> 1, sigmoid
//! ```
//! Stages are joined by 2x2 max pooling on the way down.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::dsconv::{BranchSet, Direction, DsConvModule, SnakeConvSpec};
use crate::error::{dim_err, Error, Result};
use crate::layers::{BatchNorm2d, Conv2d, ConvTranspose2x2, BN_EPS};
use crate::params::{ParamStore, Session};
use crate::scalar::Scalar;
use crate::tape::Var;

/// Descriptor format tag; bumped whenever the layout of parameters changes.
pub const DESCRIPTOR_FORMAT: &str = "dsunet-1";

/// Conventional 3x3 convolution, batch norm and ELU.
#[derive(Clone, Debug)]
pub struct TraConv {
    pub name: String,
    conv: Conv2d,
    bn: BatchNorm2d,
}

impl TraConv {
    pub fn new(name: impl Into<String>, in_channels: usize, out_channels: usize) -> Self {
        let name = name.into();
        Self {
            conv: Conv2d::new(format!("{name}.conv"), in_channels, out_channels, 3, 3).expect("odd kernel"),
            bn: BatchNorm2d::new(format!("{name}.bn"), out_channels),
            name,
        }
    }

    pub fn register<T: Scalar>(&self, store: &mut ParamStore<T>, rng: &mut ChaCha8Rng) -> Result<()> {
        self.conv.register(store, rng)?;
        self.bn.register(store)
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let h = self.conv.forward(sess, x)?;
        let h = self.bn.forward(sess, h)?;
        Ok(sess.tape.elu(h))
    }
}

/// 2x2 transposed convolution halving the channel count, then ELU.
#[derive(Clone, Debug)]
pub struct UpSampling {
    pub name: String,
    tconv: ConvTranspose2x2,
}

impl UpSampling {
    pub fn new(name: impl Into<String>, channels: usize) -> Result<Self> {
        if !channels.is_multiple_of(2) {
            return dim_err(format!("up-sampling needs an even channel count, got {channels}"));
        }
        let name = name.into();
        Ok(Self {
            tconv: ConvTranspose2x2 {
                name: format!("{name}.tconv"),
                c_in: channels,
                c_out: channels / 2,
            },
            name,
        })
    }

    pub fn register<T: Scalar>(&self, store: &mut ParamStore<T>, rng: &mut ChaCha8Rng) -> Result<()> {
        self.tconv.register(store, rng)
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let c = sess.tape.shape(x).get(1).copied().unwrap_or(0);
        if c != self.tconv.c_in {
            return dim_err(format!("{}: expected {} channels, got {c}", self.name, self.tconv.c_in));
        }
        let h = self.tconv.forward(sess, x)?;
        Ok(sess.tape.elu(h))
    }
}

/// Architecture and ablation knobs.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub height: usize,
    pub width: usize,
    pub in_channels: usize,
    /// Decoder widths from the bottleneck up; the encoder mirrors them.
    pub decoder_blocks: [usize; 4],
    pub snake_kernel_length: usize,
    pub extension_scope: f64,
    pub branches: BranchSet,
    /// Kernel of the local (conventional) branch inside DSConv modules.
    pub local_kernel: usize,
    /// Number of leading encoder stages built from DSConv modules (1 or 2).
    pub dsconv_stages: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            height: 128,
            width: 256,
            in_channels: 1,
            decoder_blocks: [256, 128, 64, 32],
            snake_kernel_length: SnakeConvSpec::DEFAULT_KERNEL_LENGTH,
            extension_scope: SnakeConvSpec::DEFAULT_EXTENSION_SCOPE,
            branches: BranchSet::ALL,
            local_kernel: 3,
            dsconv_stages: 1,
        }
    }
}

impl ModelConfig {
    /// Encoder widths, shallowest first.
    pub fn encoder_widths(&self) -> [usize; 4] {
        let d = self.decoder_blocks;
        [d[3], d[2], d[1], d[0]]
    }

    pub fn snake_spec(&self) -> SnakeConvSpec {
        SnakeConvSpec {
            kernel_length: self.snake_kernel_length,
            extension_scope: self.extension_scope,
            ..SnakeConvSpec::new(Direction::X, 1, 1)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || !self.height.is_multiple_of(8) || !self.width.is_multiple_of(8) {
            return dim_err(format!(
                "input size {}x{} must be a positive multiple of 8",
                self.height, self.width
            ));
        }
        if self.in_channels == 0 {
            return dim_err("input needs at least one channel");
        }
        if self.decoder_blocks.iter().any(|&c| c == 0 || c % 2 != 0) {
            return dim_err(format!(
                "decoder widths must be even and positive, got {:?}",
                self.decoder_blocks
            ));
        }
        if self.local_kernel.is_multiple_of(2) {
            return dim_err(format!("local kernel must be odd, got {}", self.local_kernel));
        }
        if !(1..=2).contains(&self.dsconv_stages) {
            return Err(Error::Usage(format!(
                "dsconv_stages must be 1 or 2, got {}",
                self.dsconv_stages
            )));
        }
        if self.branches.count() == 0 {
            return Err(Error::Usage("at least one DSConv branch is required".into()));
        }
        self.snake_spec().validate()
    }

    /// Canonical `key=value` text, one line per field in fixed order.
    pub fn to_descriptor(&self) -> String {
        let d = self.decoder_blocks;
        let mut s = String::new();
        let _ = writeln!(s, "format={DESCRIPTOR_FORMAT}");
        let _ = writeln!(s, "height={}", self.height);
        let _ = writeln!(s, "width={}", self.width);
        let _ = writeln!(s, "in_channels={}", self.in_channels);
        let _ = writeln!(s, "decoder_blocks={},{},{},{}", d[0], d[1], d[2], d[3]);
        let _ = writeln!(s, "snake_kernel_length={}", self.snake_kernel_length);
        let _ = writeln!(s, "extension_scope={:?}", self.extension_scope);
        let _ = writeln!(s, "branches={}", self.branches);
        let _ = writeln!(s, "local_kernel={}", self.local_kernel);
        let _ = writeln!(s, "dsconv_stages={}", self.dsconv_stages);
        let _ = writeln!(s, "bn_eps={BN_EPS:?}");
        s
    }

    pub fn from_descriptor(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Version(format!("model descriptor: {msg}"));
        let mut fields = std::collections::HashMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("malformed line {line:?}")))?;
            if fields.insert(k.trim(), v.trim()).is_some() {
                return Err(bad(format!("duplicate key {k:?}")));
            }
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| bad(format!("missing key {k:?}")));
        fn num<V: std::str::FromStr>(k: &str, v: &str) -> Result<V> {
            v.parse()
                .map_err(|_| Error::Version(format!("model descriptor: bad value {v:?} for {k}")))
        }
        if get("format")? != DESCRIPTOR_FORMAT {
            return Err(bad(format!("unsupported format {:?}", get("format")?)));
        }
        let eps: f64 = num("bn_eps", get("bn_eps")?)?;
        if eps != BN_EPS {
            return Err(bad(format!("batch-norm epsilon {eps} differs from {BN_EPS}")));
        }
        let widths: Vec<usize> = get("decoder_blocks")?
            .split(',')
            .map(|v| num("decoder_blocks", v.trim()))
            .collect::<Result<_>>()?;
        let decoder_blocks: [usize; 4] = widths
            .try_into()
            .map_err(|_| bad("decoder_blocks needs four widths".into()))?;
        let config = Self {
            height: num("height", get("height")?)?,
            width: num("width", get("width")?)?,
            in_channels: num("in_channels", get("in_channels")?)?,
            decoder_blocks,
            snake_kernel_length: num("snake_kernel_length", get("snake_kernel_length")?)?,
            extension_scope: num("extension_scope", get("extension_scope")?)?,
            branches: get("branches")?
                .parse()
                .map_err(|e: Error| bad(e.to_string()))?,
            local_kernel: num("local_kernel", get("local_kernel")?)?,
            dsconv_stages: num("dsconv_stages", get("dsconv_stages")?)?,
        };
        config.validate().map_err(|e| bad(e.to_string()))?;
        Ok(config)
    }
}

#[derive(Clone, Debug)]
enum Block {
    Ds(DsConvModule),
    Tra(TraConv),
}

impl Block {
    fn register<T: Scalar>(&self, store: &mut ParamStore<T>, rng: &mut ChaCha8Rng) -> Result<()> {
        match self {
            Block::Ds(m) => m.register(store, rng),
            Block::Tra(m) => m.register(store, rng),
        }
    }

    fn forward<T: Scalar>(&self, sess: &mut Session<'_, T>, x: Var) -> Result<Var> {
        match self {
            Block::Ds(m) => m.forward(sess, x),
            Block::Tra(m) => m.forward(sess, x),
        }
    }
}

/// Intermediate handles of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// Encoder stage outputs, shallowest first (the skip tensors).
    pub encoder: Vec<Var>,
    /// Decoder inputs `[skip, upsampled]` after concatenation, deepest first.
    pub concats: Vec<Var>,
    /// Decoder stage outputs, deepest first.
    pub decoder: Vec<Var>,
    /// Pre-sigmoid head output.
    pub logits: Var,
    /// Probability map `[N, 1, H, W]`.
    pub output: Var,
}

#[derive(Clone, Debug)]
pub struct DsuNet {
    pub config: ModelConfig,
    encoder: Vec<[Block; 2]>,
    ups: Vec<UpSampling>,
    decoder: Vec<[TraConv; 2]>,
    head: Conv2d,
}

impl DsuNet {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let widths = config.encoder_widths();
        let snake = config.snake_spec();
        let mut encoder = Vec::with_capacity(4);
        let mut c_in = config.in_channels;
        for (i, &w) in widths.iter().enumerate() {
            let name = |j: usize| format!("enc{}.{j}", i + 1);
            let block = |j: usize, from: usize| -> Result<Block> {
                Ok(if i < config.dsconv_stages {
                    Block::Ds(DsConvModule::new(
                        &name(j),
                        from,
                        w,
                        snake,
                        config.branches,
                        config.local_kernel,
                    )?)
                } else {
                    Block::Tra(TraConv::new(name(j), from, w))
                })
            };
            encoder.push([block(0, c_in)?, block(1, w)?]);
            c_in = w;
        }
        let mut ups = Vec::with_capacity(3);
        let mut decoder = Vec::with_capacity(3);
        for i in 0..3 {
            let deep = config.decoder_blocks[i];
            let target = config.decoder_blocks[i + 1];
            let skip = widths[2 - i];
            ups.push(UpSampling::new(format!("up{}", i + 1), deep)?);
            let cat = skip + deep / 2;
            decoder.push([
                TraConv::new(format!("dec{}.0", i + 1), cat, target),
                TraConv::new(format!("dec{}.1", i + 1), target, target),
            ]);
        }
        let head = Conv2d::new("head", config.decoder_blocks[3], 1, 1, 1)?;
        Ok(Self {
            config,
            encoder,
            ups,
            decoder,
            head,
        })
    }

    /// Fresh parameters, deterministic in `seed`.
    pub fn init_parameters<T: Scalar>(&self, seed: u64) -> Result<ParamStore<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        for stage in &self.encoder {
            for block in stage {
                block.register(&mut store, &mut rng)?;
            }
        }
        for (up, stage) in self.ups.iter().zip(&self.decoder) {
            up.register(&mut store, &mut rng)?;
            for block in stage {
                block.register(&mut store, &mut rng)?;
            }
        }
        self.head.register(&mut store, &mut rng)?;
        Ok(store)
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<'_, T>, input: Var) -> Result<Var> {
        Ok(self.forward_traced(sess, input)?.output)
    }

    pub fn forward_traced<T: Scalar>(&self, sess: &mut Session<'_, T>, input: Var) -> Result<ForwardTrace> {
        let c = &self.config;
        match *sess.tape.shape(input) {
            [_, ch, h, w] if ch == c.in_channels && h == c.height && w == c.width => {}
            ref s => {
                return dim_err(format!(
                    "network input {s:?} does not match [N, {}, {}, {}]",
                    c.in_channels, c.height, c.width
                ))
            }
        }
        let mut encoder = Vec::with_capacity(4);
        let mut x = input;
        for (i, stage) in self.encoder.iter().enumerate() {
            if i > 0 {
                x = sess.tape.max_pool2(x)?;
            }
            for block in stage {
                x = block.forward(sess, x)?;
            }
            encoder.push(x);
        }
        let mut concats = Vec::with_capacity(3);
        let mut decoder = Vec::with_capacity(3);
        for (i, (up, stage)) in self.ups.iter().zip(&self.decoder).enumerate() {
            let u = up.forward(sess, x)?;
            let cat = sess.tape.concat_channels(&[encoder[2 - i], u])?;
            concats.push(cat);
            x = cat;
            for block in stage {
                x = block.forward(sess, x)?;
            }
            decoder.push(x);
        }
        let logits = self.head.forward(sess, x)?;
        let output = sess.tape.sigmoid(logits);
        Ok(ForwardTrace {
            encoder,
            concats,
            decoder,
            logits,
            output,
        })
    }

    pub fn to_checkpoint<T: Scalar>(&self, store: &ParamStore<T>) -> Checkpoint {
        Checkpoint::from_store(&self.config.to_descriptor(), store)
    }

    /// Rebuilds the network and parameters stored in a checkpoint.
    pub fn from_checkpoint<T: Scalar>(ck: &Checkpoint) -> Result<(Self, ParamStore<T>)> {
        let config = ModelConfig::from_descriptor(&ck.descriptor)?;
        let net = Self::new(config)?;
        let mut store = net.init_parameters::<T>(0)?;
        store.load_from(&ck.tensors)?;
        Ok((net, store))
    }
}

/// Convenience wrapper for [`DsuNet::init_parameters`].
pub fn init_parameters<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<ParamStore<T>> {
    DsuNet::new(config.clone())?.init_parameters(seed)
}
