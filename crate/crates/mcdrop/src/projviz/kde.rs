//! 2-D Gaussian kernel density estimation on a regular grid, plus
//! marching-squares isodensity contours.

use rayon::prelude::*;

use super::VizError;

/// Densities evaluated at the centers of a g x g grid over the data
/// bounding box expanded by a 10% margin.
#[derive(Debug, Clone)]
pub struct DensityGrid {
    pub g: usize,
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub bandwidth: f64,
    /// Row-major, index = iy * g + ix.
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn cell_width(&self) -> f64 {
        (self.x1 - self.x0) / self.g as f64
    }

    pub fn cell_height(&self) -> f64 {
        (self.y1 - self.y0) / self.g as f64
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            self.x0 + (ix as f64 + 0.5) * self.cell_width(),
            self.y0 + (iy as f64 + 0.5) * self.cell_height(),
        )
    }

    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.g + ix]
    }

    /// Riemann-sum mass: cell sum times cell area.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_width() * self.cell_height()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Pooled-variance Scott bandwidth: n^(-1/6) times the pooled per-axis
/// standard deviation.
pub fn scott_bandwidth(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return 1.0;
    }
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let var_x = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum::<f64>() / n;
    let var_y = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum::<f64>() / n;
    let pooled = ((var_x + var_y) / 2.0).sqrt();
    if pooled > 0.0 {
        n.powf(-1.0 / 6.0) * pooled
    } else {
        1e-3
    }
}

/// Mixture-of-Gaussians density f(u) = (1/n) sum_i N(u; p_i, h^2 I),
/// evaluated at every cell center of a g x g grid over the bounding box
/// plus a 10% margin per side. A degenerate box (single point or collinear
/// duplicates) is expanded to 3h around its center so the peak cell sits
/// exactly on the point when g is odd.
pub fn kde2d(points: &[(f64, f64)], bandwidth: f64, g: usize) -> Result<DensityGrid, VizError> {
    if points.is_empty() {
        return Err(VizError::EmptyPoints);
    }
    if bandwidth <= 0.0 {
        return Err(VizError::BadBandwidth(bandwidth));
    }
    if g < 2 {
        return Err(VizError::GridTooSmall(g));
    }
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        min_x = min_x.min(x);
        max_x = max_x.max(x);
        min_y = min_y.min(y);
        max_y = max_y.max(y);
    }
    let expand = |lo: f64, hi: f64| -> (f64, f64) {
        let span = hi - lo;
        if span > 0.0 {
            (lo - 0.1 * span, hi + 0.1 * span)
        } else {
            let c = 0.5 * (lo + hi);
            (c - 3.0 * bandwidth, c + 3.0 * bandwidth)
        }
    };
    let (x0, x1) = expand(min_x, max_x);
    let (y0, y1) = expand(min_y, max_y);

    let n = points.len() as f64;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * bandwidth * bandwidth);
    let inv_2h2 = 1.0 / (2.0 * bandwidth * bandwidth);
    let cw = (x1 - x0) / g as f64;
    let ch = (y1 - y0) / g as f64;

    let values: Vec<f64> = (0..g * g)
        .into_par_iter()
        .map(|idx| {
            let ix = idx % g;
            let iy = idx / g;
            let ux = x0 + (ix as f64 + 0.5) * cw;
            let uy = y0 + (iy as f64 + 0.5) * ch;
            let mut acc = 0.0;
            for &(px, py) in points {
                let r2 = (ux - px) * (ux - px) + (uy - py) * (uy - py);
                acc += (-r2 * inv_2h2).exp();
            }
            acc * norm / n
        })
        .collect();

    Ok(DensityGrid {
        g,
        x0,
        y0,
        x1,
        y1,
        bandwidth,
        values,
    })
}

/// Marching squares: line segments of the level set `level` over the grid's
/// cell centers. Crossing points are linearly interpolated.
pub fn contour_segments(grid: &DensityGrid, level: f64) -> Vec<[(f64, f64); 2]> {
    let g = grid.g;
    let mut segments = Vec::new();
    for iy in 0..g.saturating_sub(1) {
        for ix in 0..g.saturating_sub(1) {
            // Corner values and positions, counterclockwise from bottom-left.
            let corners = [(ix, iy), (ix + 1, iy), (ix + 1, iy + 1), (ix, iy + 1)];
            let v: Vec<f64> = corners.iter().map(|&(x, y)| grid.value(x, y)).collect();
            let p: Vec<(f64, f64)> = corners
                .iter()
                .map(|&(x, y)| grid.cell_center(x, y))
                .collect();
            let mut case = 0usize;
            for (bit, &val) in v.iter().enumerate() {
                if val >= level {
                    case |= 1 << bit;
                }
            }
            if case == 0 || case == 0b1111 {
                continue;
            }
            // Edge index -> interpolated crossing on that edge.
            let interp = |a: usize, b: usize| -> (f64, f64) {
                let t = if (v[b] - v[a]).abs() < 1e-300 {
                    0.5
                } else {
                    (level - v[a]) / (v[b] - v[a])
                };
                (
                    p[a].0 + t * (p[b].0 - p[a].0),
                    p[a].1 + t * (p[b].1 - p[a].1),
                )
            };
            let edge = |e: usize| match e {
                0 => interp(0, 1),
                1 => interp(1, 2),
                2 => interp(2, 3),
                _ => interp(3, 0),
            };
            // Segment table for the 16 cases; ambiguous saddles split into
            // two segments.
            let segs: &[[usize; 2]] = match case {
                0b0001 | 0b1110 => &[[3, 0]],
                0b0010 | 0b1101 => &[[0, 1]],
                0b0100 | 0b1011 => &[[1, 2]],
                0b1000 | 0b0111 => &[[2, 3]],
                0b0011 | 0b1100 => &[[3, 1]],
                0b0110 | 0b1001 => &[[0, 2]],
                0b0101 => &[[3, 0], [1, 2]],
                0b1010 => &[[0, 1], [2, 3]],
                _ => &[],
            };
            for s in segs {
                segments.push([edge(s[0]), edge(s[1])]);
            }
        }
    }
    segments
}

/// Five contour levels, equally spaced between 10% and 90% of the maximum
/// density.
pub fn contour_levels(grid: &DensityGrid) -> Vec<f64> {
    let max = grid.max_value();
    (0..5).map(|i| max * (0.1 + 0.8 * i as f64 / 4.0)).collect()
}
