//! Pixel grids, images, and ellipse phantoms.
//!
//! Images live on the square `[-h, h]²` sampled by `n × n` pixels. Row `i`
//! indexes the vertical (`y`) axis and increases with `y`; column `j` indexes
//! `x`. Values are stored row-major.

use crate::error::{Error, Result};

/// Square pixel grid on `[-half_width, half_width]²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageGrid {
    n: usize,
    half_width: f64,
}

impl ImageGrid {
    pub fn new(n: usize, half_width: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::param("n", format!("need n >= 2, got {n}")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::param(
                "half_width",
                format!("must be positive and finite, got {half_width}"),
            ));
        }
        Ok(Self { n, half_width })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    #[inline]
    pub fn pixel_size(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Physical `(x, y)` of the center of pixel `(i, j)`.
    #[inline]
    pub fn pixel_center(&self, i: usize, j: usize) -> (f64, f64) {
        let p = self.pixel_size();
        (
            -self.half_width + (j as f64 + 0.5) * p,
            -self.half_width + (i as f64 + 0.5) * p,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    grid: ImageGrid,
    values: Vec<f64>,
}

impl Image {
    pub fn zeros(grid: ImageGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_values(grid: ImageGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::mismatch("image values", grid.len(), values.len()));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(
                "values",
                format!("non-finite entry at index {k}"),
            ));
        }
        Ok(Self { grid, values })
    }

    #[inline]
    pub fn grid(&self) -> ImageGrid {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.n + j]
    }
}

/// Filled, rotated ellipse with an additive amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseSpec {
    pub center: (f64, f64),
    pub semi_axes: (f64, f64),
    /// Counter-clockwise rotation of the first semi-axis, radians.
    pub angle: f64,
    pub amplitude: f64,
}

impl EllipseSpec {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.semi_axes;
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "ellipse semi-axes must be positive, got ({a}, {b})"
            )));
        }
        Ok(())
    }

    /// Pixel-center membership test.
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let (s, c) = self.angle.sin_cos();
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        let (a, b) = self.semi_axes;
        (u / a).powi(2) + (v / b).powi(2) <= 1.0
    }
}

/// Adds `spec.amplitude` to every pixel of `target` whose center lies inside
/// the ellipse.
pub fn rasterize_ellipse(target: &mut Image, spec: &EllipseSpec) -> Result<()> {
    spec.validate()?;
    let grid = target.grid;
    let n = grid.n;
    for i in 0..n {
        for j in 0..n {
            let (x, y) = grid.pixel_center(i, j);
            if spec.contains(x, y) {
                target.values[i * n + j] += spec.amplitude;
            }
        }
    }
    Ok(())
}

pub const PHANTOM_MIN_N: usize = 32;

/// Ellipses making up the reference phantom, in units of the half width.
///
/// A thin elliptical ring near the boundary, an "A" made of two legs and a
/// crossbar in the upper half, and a faint ellipse in the lower half.
fn phantom_ellipses() -> Vec<EllipseSpec> {
    // Ring thickness is 3 pixels at n = 128 on the unit half width.
    const RING: f64 = 3.0 * 2.0 / 128.0;
    let leg = |foot_x: f64| {
        let (apex, foot) = ((0.0, 0.62), (foot_x, 0.08));
        let (dx, dy) = (foot.0 - apex.0, foot.1 - apex.1);
        EllipseSpec {
            center: ((apex.0 + foot.0) / 2.0, (apex.1 + foot.1) / 2.0),
            semi_axes: (0.5 * dx.hypot(dy), 0.035),
            angle: dy.atan2(dx),
            amplitude: 1.0,
        }
    };
    vec![
        EllipseSpec {
            center: (0.0, 0.0),
            semi_axes: (0.9, 0.8),
            angle: 0.0,
            amplitude: 1.0,
        },
        EllipseSpec {
            center: (0.0, 0.0),
            semi_axes: (0.9 - RING, 0.8 - RING),
            angle: 0.0,
            amplitude: -1.0,
        },
        leg(-0.26),
        leg(0.26),
        EllipseSpec {
            center: (0.0, 0.3),
            semi_axes: (0.14, 0.03),
            angle: 0.0,
            amplitude: 1.0,
        },
        EllipseSpec {
            center: (0.12, -0.42),
            semi_axes: (0.16, 0.1),
            angle: 0.35,
            amplitude: 0.5,
        },
    ]
}

/// Deterministic composite phantom with values in `[0, 1]`.
pub fn make_paper_phantom(grid: ImageGrid) -> Result<Image> {
    if grid.n < PHANTOM_MIN_N {
        return Err(Error::GridTooCoarse {
            n: grid.n,
            min: PHANTOM_MIN_N,
        });
    }
    let h = grid.half_width;
    let mut img = Image::zeros(grid);
    for e in phantom_ellipses() {
        let scaled = EllipseSpec {
            center: (e.center.0 * h, e.center.1 * h),
            semi_axes: (e.semi_axes.0 * h, e.semi_axes.1 * h),
            ..e
        };
        rasterize_ellipse(&mut img, &scaled)?;
    }
    for v in img.values.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(img)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub mean_abs: f64,
}

pub fn image_stats(x: &Image) -> ImageStats {
    slice_stats(x.values())
}

pub(crate) fn slice_stats(v: &[f64]) -> ImageStats {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let (mut sum, mut sum_abs) = (0.0, 0.0);
    for &x in v {
        min = min.min(x);
        max = max.max(x);
        sum += x;
        sum_abs += x.abs();
    }
    let len = v.len() as f64;
    ImageStats {
        min,
        max,
        mean: sum / len,
        mean_abs: sum_abs / len,
    }
}
