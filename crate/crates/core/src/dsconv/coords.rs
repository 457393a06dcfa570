use super::{Direction, SnakeConvSpec};
use crate::error::{dim_err, Result};
use crate::scalar::Scalar;
use crate::tape::{Backward, Tape, Var};
use crate::tensor::Tensor;

/// Sampling positions of a snake kernel, stored as `[N, 2, K, H, W]`:
/// channel 0 holds x (column) and channel 1 holds y (row), in input pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordinateMap<T> {
    pub tensor: Tensor<T>,
}

impl<T: Scalar> CoordinateMap<T> {
    /// `(x, y)` of chain position `k` for output pixel `(row, col)`.
    pub fn get(&self, n: usize, k: usize, row: usize, col: usize) -> (T, T) {
        (
            self.tensor.at(&[n, 0, k, row, col]),
            self.tensor.at(&[n, 1, k, row, col]),
        )
    }

    pub fn kernel_length(&self) -> usize {
        self.tensor.shape()[2]
    }
}

fn dims<T: Scalar>(offsets: &Tensor<T>, spec: &SnakeConvSpec) -> Result<(usize, usize, usize, usize)> {
    spec.validate()?;
    let (n, k, h, w) = offsets.dims4()?;
    if k != spec.kernel_length {
        return dim_err(format!(
            "offsets carry {k} channels, snake kernel length is {}",
            spec.kernel_length
        ));
    }
    Ok((n, k, h, w))
}

/// Positions from per-step offsets `[N, K, H, W]`.
///
/// The center position (index `K / 2`) sits on the output pixel and ignores
/// its own offset channel. Moving outward, position `m + c` is displaced by
/// `scope * (d[m+1] + ... + d[m+c])` and position `m - c` by
/// `scope * (d[m-1] + ... + d[m-c])`, perpendicular to the rigid axis.
pub fn build_coordinate_map<T: Scalar>(offsets: &Tensor<T>, spec: &SnakeConvSpec) -> Result<CoordinateMap<T>> {
    let (n, k, h, w) = dims(offsets, spec)?;
    let m = spec.center();
    let scope = T::lit(spec.extension_scope);
    let plane = h * w;
    let off = offsets.data();
    let mut out = vec![T::zero(); n * 2 * k * plane];
    let (rigid, free) = match spec.direction {
        Direction::X => (0, 1),
        Direction::Y => (1, 0),
    };
    let mut disp = vec![T::zero(); k];
    for b in 0..n {
        for row in 0..h {
            for col in 0..w {
                let p = row * w + col;
                disp[m] = T::zero();
                for j in m + 1..k {
                    disp[j] = disp[j - 1] + off[(b * k + j) * plane + p];
                }
                for j in (0..m).rev() {
                    disp[j] = disp[j + 1] + off[(b * k + j) * plane + p];
                }
                let (rigid_base, free_base) = match spec.direction {
                    Direction::X => (col, row),
                    Direction::Y => (row, col),
                };
                for j in 0..k {
                    let step = T::from_isize(rigid_base as isize + j as isize - m as isize).unwrap();
                    let free_pos = T::from_usize(free_base).unwrap() + scope * disp[j];
                    out[((b * 2 + rigid) * k + j) * plane + p] = step;
                    out[((b * 2 + free) * k + j) * plane + p] = free_pos;
                }
            }
        }
    }
    Ok(CoordinateMap {
        tensor: Tensor::new(&[n, 2, k, h, w], out)?,
    })
}

struct Coordinates {
    spec: SnakeConvSpec,
}

impl<T: Scalar> Backward<T> for Coordinates {
    fn backward(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let (n, k, h, w) = inputs[0].dims4().expect("rank 4");
        let plane = h * w;
        let m = self.spec.center();
        let scope = T::lit(self.spec.extension_scope);
        let free = match self.spec.direction {
            Direction::X => 1,
            Direction::Y => 0,
        };
        let mut d = vec![T::zero(); inputs[0].numel()];
        for b in 0..n {
            let g = |j: usize, p: usize| grad[((b * 2 + free) * k + j) * plane + p];
            for p in 0..plane {
                // offset j feeds every position at or beyond it on its side
                let mut acc = T::zero();
                for j in (m + 1..k).rev() {
                    acc += g(j, p);
                    d[(b * k + j) * plane + p] = scope * acc;
                }
                acc = T::zero();
                for j in 0..m {
                    acc += g(j, p);
                    d[(b * k + j) * plane + p] = scope * acc;
                }
            }
        }
        vec![Some(d)]
    }
}

impl<T: Scalar> Tape<T> {
    /// Differentiable [`build_coordinate_map`]; output `[N, 2, K, H, W]`.
    pub fn snake_coordinates(&mut self, offsets: Var, spec: &SnakeConvSpec) -> Result<Var> {
        let map = build_coordinate_map(self.value(offsets), spec)?;
        Ok(self.push(map.tensor, &[offsets], Coordinates { spec: *spec }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(direction: Direction, scope: f64) -> SnakeConvSpec {
        SnakeConvSpec {
            extension_scope: scope,
            ..SnakeConvSpec::new(direction, 1, 1)
        }
    }

    #[test]
    fn zero_offsets_give_straight_horizontal_chain() {
        let offsets = Tensor::<f64>::zeros(&[1, 9, 21, 21]).unwrap();
        let map = build_coordinate_map(&offsets, &spec(Direction::X, 4.0)).unwrap();
        let pts: Vec<(f64, f64)> = (0..9).map(|k| map.get(0, k, 10, 10)).collect();
        let want: Vec<(f64, f64)> = (6..=14).map(|x| (x as f64, 10.0)).collect();
        assert_eq!(pts, want);
    }

    #[test]
    fn zero_offsets_give_straight_vertical_chain() {
        let offsets = Tensor::<f64>::zeros(&[1, 9, 21, 21]).unwrap();
        let map = build_coordinate_map(&offsets, &spec(Direction::Y, 4.0)).unwrap();
        let pts: Vec<(f64, f64)> = (0..9).map(|k| map.get(0, k, 10, 3)).collect();
        let want: Vec<(f64, f64)> = (6..=14).map(|y| (3.0, y as f64)).collect();
        assert_eq!(pts, want);
    }

    #[test]
    fn constant_offsets_accumulate_outward() {
        // d = 0.5, scope 2: position +c sits 2 * 0.5 * c away from the center row
        let offsets = Tensor::<f64>::full(&[1, 9, 12, 12], 0.5).unwrap();
        let map = build_coordinate_map(&offsets, &spec(Direction::X, 2.0)).unwrap();
        let (x, y) = map.get(0, 4 + 2, 5, 5);
        assert_eq!((x, y), (7.0, 5.0 + 2.0));
        let (x, y) = map.get(0, 4 - 3, 5, 5);
        assert_eq!((x, y), (2.0, 5.0 + 3.0));
        assert_eq!(map.get(0, 4, 5, 5), (5.0, 5.0));
    }

    #[test]
    fn first_step_uses_its_own_offset_only() {
        let mut offsets = Tensor::<f64>::zeros(&[1, 5, 3, 3]).unwrap();
        let s = spec(Direction::Y, 1.5);
        let s = SnakeConvSpec { kernel_length: 5, ..s };
        for (j, v) in [(0, 0.1), (1, 0.2), (2, 0.9), (3, -0.3), (4, 0.4)] {
            let o = offsets.offset(&[0, j, 1, 1]);
            offsets.data_mut()[o] = v;
        }
        let map = build_coordinate_map(&offsets, &s).unwrap();
        let xs: Vec<f64> = (0..5).map(|k| map.get(0, k, 1, 1).0).collect();
        let want = [1.0 + 1.5 * 0.3, 1.0 + 1.5 * 0.2, 1.0, 1.0 - 1.5 * 0.3, 1.0 + 1.5 * 0.1];
        for (a, b) in xs.iter().zip(want) {
            assert!((a - b).abs() < 1e-15, "{xs:?}");
        }
    }

    #[test]
    fn kernel_length_mismatch_rejected() {
        let offsets = Tensor::<f64>::zeros(&[1, 7, 3, 3]).unwrap();
        assert!(build_coordinate_map(&offsets, &spec(Direction::X, 1.0)).is_err());
    }
}
