use super::ScenarioConfig;
use crate::error::{PsmError, Result};

/// Staggered finite-volume grid: scalars at cell centers, mass fluxes at faces.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    /// Cell-center positions (m).
    pub centers: Vec<f64>,
    /// Face positions (m); `faces.len() == centers.len() + 1`.
    pub faces: Vec<f64>,
    /// Cell widths (m).
    pub widths: Vec<f64>,
    /// Owning segment of each cell.
    pub segment_of_cell: Vec<usize>,
}

impl Grid {
    pub fn n_cells(&self) -> usize {
        self.centers.len()
    }

    pub fn length(&self) -> f64 {
        *self.faces.last().expect("grid has faces")
    }

    pub fn min_width(&self) -> f64 {
        self.widths.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Concatenate uniform per-segment grids.
pub fn build_grid(config: &ScenarioConfig) -> Result<Grid> {
    let n: usize = config.segments.iter().map(|s| s.n_elements).sum();
    let mut centers = Vec::with_capacity(n);
    let mut faces = Vec::with_capacity(n + 1);
    let mut widths = Vec::with_capacity(n);
    let mut segment_of_cell = Vec::with_capacity(n);

    faces.push(0.0);
    let mut start = 0.0;
    for (index, seg) in config.segments.iter().enumerate() {
        if !(seg.length > 0.0) {
            return Err(PsmError::Config(format!(
                "segment {index} (`{}`) has non-positive length {}",
                seg.name, seg.length
            )));
        }
        if seg.n_elements == 0 {
            return Err(PsmError::Config(format!(
                "segment {index} (`{}`) has no elements",
                seg.name
            )));
        }
        let end = start + seg.length;
        let dz = seg.length / seg.n_elements as f64;
        for j in 0..seg.n_elements {
            let left = *faces.last().unwrap();
            let right = if j + 1 == seg.n_elements {
                end
            } else {
                start + seg.length * (j + 1) as f64 / seg.n_elements as f64
            };
            centers.push(0.5 * (left + right));
            widths.push(right - left);
            faces.push(right);
            segment_of_cell.push(index);
            debug_assert!((right - left - dz).abs() < 1e-9);
        }
        start = end;
    }
    Ok(Grid {
        centers,
        faces,
        widths,
        segment_of_cell,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::presets;

    #[test]
    fn heated_channel_grid() {
        let grid = build_grid(&presets::heated_channel()).unwrap();
        assert_eq!(grid.n_cells(), 30);
        assert_eq!(grid.faces.len(), 31);
        assert_eq!(grid.faces[0], 0.0);
        assert!((grid.length() - 2.8).abs() < 1e-12 * 2.8);
        assert!((grid.centers[0] - 0.05).abs() < 1e-12);
        // heated segment uses 8 cm cells
        assert!((grid.widths[15] - 0.08).abs() < 1e-12);
        assert_eq!(grid.segment_of_cell[15], 1);
    }

    #[test]
    fn single_element_pipe_is_one_center() {
        let mut cfg = presets::heated_channel();
        cfg.segments.truncate(1);
        cfg.segments[0].n_elements = 1;
        let grid = build_grid(&cfg).unwrap();
        assert_eq!(grid.centers, vec![0.5]);
        assert_eq!(grid.faces, vec![0.0, 1.0]);
    }

    #[test]
    fn loop_grid_has_80_cells() {
        let cfg = presets::cooling_loop();
        let grid = build_grid(&cfg).unwrap();
        assert_eq!(grid.n_cells(), 80);
        assert!((grid.length() - 8.0).abs() < 1e-12 * 8.0);
        assert!(grid.widths.iter().all(|w| (w - 0.1).abs() < 1e-12));
    }

    #[test]
    fn rejects_zero_length_segment() {
        let mut cfg = presets::heated_channel();
        cfg.segments[1].length = 0.0;
        assert!(matches!(build_grid(&cfg), Err(PsmError::Config(_))));
    }

    #[test]
    fn span_matches_sum_of_lengths() {
        let mut cfg = presets::cooling_loop();
        cfg.segments[2].length = 0.37;
        cfg.segments[2].n_elements = 7;
        let grid = build_grid(&cfg).unwrap();
        let total = cfg.total_length();
        assert!((grid.length() - total).abs() <= 1e-12 * total);
        assert!(grid.faces.windows(2).all(|w| w[1] > w[0]));
    }
}
