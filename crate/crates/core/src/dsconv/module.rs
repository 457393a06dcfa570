use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;

use super::{Direction, SnakeConv, SnakeConvSpec};
use crate::dsunet::TraConv;
use crate::error::{Error, Result};
use crate::layers::{BatchNorm2d, Conv2d};
use crate::params::{ParamStore, Session};
use crate::scalar::Scalar;
use crate::tape::Var;

/// Which feature branches a DSConv module runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BranchSet {
    pub x: bool,
    pub y: bool,
    pub local: bool,
}

impl BranchSet {
    pub const ALL: BranchSet = BranchSet {
        x: true,
        y: true,
        local: true,
    };

    pub fn count(self) -> usize {
        usize::from(self.x) + usize::from(self.y) + usize::from(self.local)
    }

    /// The ablation variants: every subset with at least one snake branch,
    /// the full module last.
    pub fn ablation_variants() -> [BranchSet; 6] {
        let b = |x, y, local| BranchSet { x, y, local };
        [
            b(true, false, false),
            b(false, true, false),
            b(true, false, true),
            b(false, true, true),
            b(true, true, false),
            b(true, true, true),
        ]
    }
}

impl Default for BranchSet {
    fn default() -> Self {
        Self::ALL
    }
}

impl fmt::Display for BranchSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = [(self.x, "x"), (self.y, "y"), (self.local, "local")]
            .into_iter()
            .filter_map(|(on, tag)| on.then_some(tag))
            .collect();
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for BranchSet {
    type Err = Error;

    /// Parses `+`-joined branch tags such as `x+y+local`.
    fn from_str(s: &str) -> Result<Self> {
        let mut set = BranchSet {
            x: false,
            y: false,
            local: false,
        };
        for tag in s.split('+').map(str::trim) {
            let slot = match tag {
                "x" => &mut set.x,
                "y" => &mut set.y,
                "local" => &mut set.local,
                _ => return Err(Error::Usage(format!("unknown branch {tag:?} in {s:?}"))),
            };
            if *slot {
                return Err(Error::Usage(format!("branch {tag:?} repeated in {s:?}")));
            }
            *slot = true;
        }
        Ok(set)
    }
}

/// x-snake, y-snake and local branches, each followed by batch norm and
/// ELU, concatenated and fused back to `out_channels` by a TraConv.
#[derive(Clone, Debug)]
pub struct DsConvModule {
    pub name: String,
    pub branches: BranchSet,
    pub out_channels: usize,
    snakes: Vec<(SnakeConv, BatchNorm2d)>,
    local: Option<(Conv2d, BatchNorm2d)>,
    fuse: TraConv,
}

impl DsConvModule {
    /// `snake` supplies kernel length and extension scope; its direction and
    /// channel counts are overridden per branch.
    pub fn new(
        prefix: &str,
        in_channels: usize,
        out_channels: usize,
        snake: SnakeConvSpec,
        branches: BranchSet,
        local_kernel: usize,
    ) -> Result<Self> {
        if branches.count() == 0 {
            return Err(Error::Usage("DSConv module needs at least one branch".into()));
        }
        let name = format!("{prefix}.dsconv");
        let mut snakes = Vec::new();
        for (on, direction) in [(branches.x, Direction::X), (branches.y, Direction::Y)] {
            if on {
                let spec = SnakeConvSpec {
                    direction,
                    in_channels,
                    out_channels,
                    ..snake
                };
                let branch = format!("{name}.{}", direction.tag());
                snakes.push((
                    SnakeConv::new(branch.clone(), spec)?,
                    BatchNorm2d::new(format!("{branch}.bn"), out_channels),
                ));
            }
        }
        let local = if branches.local {
            Some((
                Conv2d::new(format!("{name}.local.conv"), in_channels, out_channels, local_kernel, local_kernel)?,
                BatchNorm2d::new(format!("{name}.local.bn"), out_channels),
            ))
        } else {
            None
        };
        let fuse = TraConv::new(format!("{name}.fuse"), branches.count() * out_channels, out_channels);
        Ok(Self {
            name,
            branches,
            out_channels,
            snakes,
            local,
            fuse,
        })
    }

    pub fn register<T: Scalar>(&self, store: &mut ParamStore<T>, rng: &mut ChaCha8Rng) -> Result<()> {
        for (snake, bn) in &self.snakes {
            snake.register(store, rng)?;
            bn.register(store)?;
        }
        if let Some((conv, bn)) = &self.local {
            conv.register(store, rng)?;
            bn.register(store)?;
        }
        self.fuse.register(store, rng)
    }

    /// Branch outputs before concatenation, in x, y, local order.
    pub fn branch_outputs<T: Scalar>(&self, sess: &mut Session<'_, T>, x: Var) -> Result<Vec<Var>> {
        let mut outs = Vec::with_capacity(self.branches.count());
        for (snake, bn) in &self.snakes {
            let h = snake.forward(sess, x)?;
            let h = bn.forward(sess, h)?;
            outs.push(sess.tape.elu(h));
        }
        if let Some((conv, bn)) = &self.local {
            let h = conv.forward(sess, x)?;
            let h = bn.forward(sess, h)?;
            outs.push(sess.tape.elu(h));
        }
        Ok(outs)
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let outs = self.branch_outputs(sess, x)?;
        let cat = sess.tape.concat_channels(&outs)?;
        self.fuse.forward(sess, cat)
    }
}
