use serde::{Deserialize, Serialize};

/// Dense elevation grid (ground plus building roofs). Node `(col, row)` sits at
/// world `(col * cell_size, row * cell_size)`; rows run northward.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Heightfield {
    cols: usize,
    rows: usize,
    cell_size: f64,
    data: Vec<f32>,
}

impl Heightfield {
    pub fn new(cols: usize, rows: usize, cell_size: f64, data: Vec<f32>) -> Option<Self> {
        if cols < 2 || rows < 2 || !(cell_size > 0.0) || data.len() != cols * rows {
            return None;
        }
        Some(Self {
            cols,
            rows,
            cell_size,
            data,
        })
    }

    pub fn flat(cols: usize, rows: usize, cell_size: f64, h: f32) -> Self {
        Self::new(cols, rows, cell_size, vec![h; cols * rows]).expect("valid flat grid")
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// World extent `(width, height)` covered by the nodes.
    pub fn extent(&self) -> (f64, f64) {
        (
            (self.cols - 1) as f64 * self.cell_size,
            (self.rows - 1) as f64 * self.cell_size,
        )
    }

    #[inline]
    pub fn node(&self, col: usize, row: usize) -> f64 {
        self.data[row * self.cols + col] as f64
    }

    pub fn set_node(&mut self, col: usize, row: usize, h: f32) {
        self.data[row * self.cols + col] = h;
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v as f64), hi.max(v as f64))
        })
    }

    /// Bilinear interpolation; `None` outside the grid.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        let (w, h) = self.extent();
        if !(x >= 0.0 && y >= 0.0 && x <= w && y <= h) {
            return None;
        }
        Some(self.sample_clamped(x, y))
    }

    /// Bilinear interpolation with coordinates clamped onto the grid.
    #[inline]
    pub fn sample_clamped(&self, x: f64, y: f64) -> f64 {
        let fx = (x / self.cell_size).clamp(0.0, (self.cols - 1) as f64);
        let fy = (y / self.cell_size).clamp(0.0, (self.rows - 1) as f64);
        let c0 = (fx.floor() as usize).min(self.cols - 2);
        let r0 = (fy.floor() as usize).min(self.rows - 2);
        let tx = fx - c0 as f64;
        let ty = fy - r0 as f64;
        let h00 = self.node(c0, r0);
        let h10 = self.node(c0 + 1, r0);
        let h01 = self.node(c0, r0 + 1);
        let h11 = self.node(c0 + 1, r0 + 1);
        // exact at nodes: weights of 0 and 1 leave stored values untouched
        if tx == 0.0 && ty == 0.0 {
            return h00;
        }
        let south = h00 + (h10 - h00) * tx;
        let north = h01 + (h11 - h01) * tx;
        south + (north - south) * ty
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_values_are_fixed_points() {
        let hf = Heightfield::new(3, 3, 2.0, vec![0., 1., 2., 3., 4., 5., 6., 7., 8.]).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                assert_eq!(hf.sample(c as f64 * 2.0, r as f64 * 2.0).unwrap(), hf.node(c, r));
            }
        }
    }

    #[test]
    fn flat_cell_center() {
        let hf = Heightfield::flat(4, 4, 2.0, 7.5);
        assert_eq!(hf.sample(3.0, 3.0).unwrap(), 7.5);
    }

    #[test]
    fn midpoint_along_x() {
        // corners 0,0 on the west edge and 10,10 on the east edge
        let hf = Heightfield::new(2, 2, 2.0, vec![0., 10., 0., 10.]).unwrap();
        assert_eq!(hf.sample(1.0, 0.0).unwrap(), 5.0);
        assert_eq!(hf.sample(1.0, 1.0).unwrap(), 5.0);
        assert!(hf.sample(-0.1, 0.0).is_none());
        assert!(hf.sample(2.1, 0.0).is_none());
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Heightfield::new(1, 3, 2.0, vec![0.; 3]).is_none());
        assert!(Heightfield::new(2, 2, 0.0, vec![0.; 4]).is_none());
        assert!(Heightfield::new(2, 2, 1.0, vec![0.; 3]).is_none());
    }
}
