use crate::error::{invalid, Result};
use crate::gather::UNPICKED;

/// Row-major 2-D array; rows are time samples and columns are traces.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return invalid(format!(
                "image {height}x{width} cannot hold {} values",
                data.len()
            ));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.width + col] = v;
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.height).map(move |r| self.get(r, col))
    }

    /// Per-column `(argmax row, max value)`; the first row wins ties.
    pub fn column_max(&self) -> Vec<(usize, f64)> {
        let mut best: Vec<(usize, f64)> = (0..self.width).map(|c| (0, self.get(0, c))).collect();
        for r in 1..self.height {
            let row = &self.data[r * self.width..(r + 1) * self.width];
            for (b, &v) in best.iter_mut().zip(row) {
                if v > b.1 {
                    *b = (r, v);
                }
            }
        }
        best
    }
}

/// Binary first-break target: 1 at `(pick, column)` for picked columns.
pub fn make_label_map(picks: &[i32], height: usize) -> Result<Image> {
    if picks.is_empty() {
        return invalid("label map needs at least one column");
    }
    let mut map = Image::zeros(height, picks.len());
    for (col, &p) in picks.iter().enumerate() {
        match p {
            UNPICKED => {}
            p if p >= 0 && (p as usize) < height => map.set(p as usize, col, 1.0),
            p => return invalid(format!("pick {p} in column {col} outside [0, {height}) or -1")),
        }
    }
    Ok(map)
}
