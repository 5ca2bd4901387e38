//! Discrete 2D photoacoustic forward model.
//!
//! `A = D ∘ M` where `M` integrates the image over circles centered at each
//! detector (radius `c·t_k`) and `D` differentiates every detector trace in
//! time. `M` is evaluated by arc quadrature with bilinear interpolation; its
//! weights are tabulated once (row-major for `M`, column-major for `Mᵀ`) so
//! that forward and adjoint use the very same numbers.

use std::f64::consts::{SQRT_2, TAU};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{Image, ImageGrid};
use crate::operator::{check_len, LinearOperator};

/// Ring of equispaced detectors around the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorGeometry {
    count: usize,
    radius: f64,
}

impl DetectorGeometry {
    pub fn new(count: usize, radius: f64) -> Result<Self> {
        if count == 0 {
            return Err(Error::param("detectors.count", "must be positive"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::param(
                "detectors.radius",
                format!("must be positive, got {radius}"),
            ));
        }
        Ok(Self { count, radius })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn angle(&self, m: usize) -> f64 {
        TAU * m as f64 / self.count as f64
    }

    pub fn position(&self, m: usize) -> (f64, f64) {
        let (s, c) = self.angle(m).sin_cos();
        (self.radius * c, self.radius * s)
    }

    /// Detectors must sit strictly outside the image square.
    pub fn check_encloses(&self, grid: &ImageGrid) -> Result<()> {
        if self.radius > grid.half_width() * SQRT_2 {
            Ok(())
        } else {
            Err(Error::param(
                "detectors.radius",
                format!(
                    "{} does not enclose the image square (need > {})",
                    self.radius,
                    grid.half_width() * SQRT_2
                ),
            ))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    samples: usize,
    dt: f64,
    speed: f64,
}

impl TimeGrid {
    pub fn new(samples: usize, dt: f64, speed: f64) -> Result<Self> {
        if samples == 0 {
            return Err(Error::param("time.samples", "must be positive"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", format!("must be positive, got {dt}")));
        }
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(Error::param("speed_c", format!("must be positive, got {speed}")));
        }
        Ok(Self { samples, dt, speed })
    }

    /// Time grid whose last sample reaches exactly the image corner farthest
    /// from any detector: `dt = (R + h√2) / (c·(T − 1))`.
    pub fn covering(
        samples: usize,
        grid: &ImageGrid,
        geometry: &DetectorGeometry,
        speed: f64,
    ) -> Result<Self> {
        if samples < 2 {
            return Err(Error::param("time.samples", format!("need >= 2, got {samples}")));
        }
        let reach = geometry.radius() + grid.half_width() * SQRT_2;
        Self::new(samples, reach / (speed * (samples - 1) as f64), speed)
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn radius(&self, k: usize) -> f64 {
        self.speed * self.time(k)
    }

    pub fn check_covers(&self, grid: &ImageGrid, geometry: &DetectorGeometry) -> Result<()> {
        let reach = geometry.radius() + grid.half_width() * SQRT_2;
        let last = self.radius(self.samples - 1);
        if last >= reach * (1.0 - 1e-12) {
            Ok(())
        } else {
            Err(Error::param(
                "time",
                format!("last wavefront radius {last} does not reach {reach}"),
            ))
        }
    }
}

/// Detector × time data, detector-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    geometry: DetectorGeometry,
    time: TimeGrid,
    values: Vec<f64>,
}

impl Sinogram {
    pub fn zeros(geometry: DetectorGeometry, time: TimeGrid) -> Self {
        Self {
            geometry,
            time,
            values: vec![0.0; geometry.count() * time.samples()],
        }
    }

    pub fn from_values(geometry: DetectorGeometry, time: TimeGrid, values: Vec<f64>) -> Result<Self> {
        let expected = geometry.count() * time.samples();
        check_len("sinogram values", expected, values.len())?;
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::param("values", format!("non-finite entry at index {k}")));
        }
        Ok(Self {
            geometry,
            time,
            values,
        })
    }

    pub fn geometry(&self) -> DetectorGeometry {
        self.geometry
    }

    pub fn time(&self) -> TimeGrid {
        self.time
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, m: usize) -> &[f64] {
        let t = self.time.samples();
        &self.values[m * t..(m + 1) * t]
    }

    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            geometry: self.geometry,
            time: self.time,
            values,
        }
    }
}

/// Number of quadrature nodes on a full circle of radius `r`: spacing at most
/// half a pixel, never fewer than 16.
pub fn arc_sample_count(r: f64, pixel_size: f64) -> usize {
    let n = (TAU * r / (0.5 * pixel_size)).ceil();
    (n as usize).max(16)
}

/// Visits every `(pixel, weight)` contribution of the arc-length quadrature of
/// the circle `(center, r)`. Weights combine the arc element `r·Δθ` with the
/// bilinear interpolation weights; neighbors outside the grid are dropped.
pub fn for_each_arc_weight(
    grid: &ImageGrid,
    center: (f64, f64),
    r: f64,
    mut visit: impl FnMut(usize, f64),
) {
    if r <= 0.0 {
        return;
    }
    let n = grid.n();
    let h = grid.half_width();
    let p = grid.pixel_size();

    // Bilinear support is the pixel-center box grown by one pixel.
    let lo = -h - 0.5 * p;
    let hi = h + 0.5 * p;
    let nearest = |c: f64| c.clamp(lo, hi) - c;
    let farthest = |c: f64| if (c - lo).abs() > (c - hi).abs() { lo - c } else { hi - c };
    let dmin = nearest(center.0).hypot(nearest(center.1));
    let dmax = farthest(center.0).hypot(farthest(center.1));
    if r < dmin || r > dmax {
        return;
    }

    let count = arc_sample_count(r, p);
    let dtheta = TAU / count as f64;
    let element = r * dtheta;
    let last = n as isize - 1;
    for s in 0..count {
        let (sin, cos) = (s as f64 * dtheta).sin_cos();
        let fj = (center.0 + r * cos + h) / p - 0.5;
        let fi = (center.1 + r * sin + h) / p - 0.5;
        if !(fj > -1.0 && fi > -1.0 && fj < n as f64 && fi < n as f64) {
            continue;
        }
        let (j0, i0) = (fj.floor(), fi.floor());
        let (wj, wi) = (fj - j0, fi - i0);
        let (j0, i0) = (j0 as isize, i0 as isize);
        let corners = [
            (i0, j0, (1.0 - wi) * (1.0 - wj)),
            (i0, j0 + 1, (1.0 - wi) * wj),
            (i0 + 1, j0, wi * (1.0 - wj)),
            (i0 + 1, j0 + 1, wi * wj),
        ];
        for (i, j, w) in corners {
            if i < 0 || j < 0 || i > last || j > last || w == 0.0 {
                continue;
            }
            visit(i as usize * n + j as usize, element * w);
        }
    }
}

/// Arc-length integral of `x` over the circle `(center, r)`, evaluated on the
/// fly with the same quadrature as the tabulated operator.
pub fn arc_integral(x: &Image, center: (f64, f64), r: f64) -> f64 {
    let mut acc = 0.0;
    let v = x.values();
    for_each_arc_weight(&x.grid(), center, r, |k, w| acc += w * v[k]);
    acc
}

/// Circular-mean sinogram `(Mx)[m, k]`, computed directly without a weight
/// table.
pub fn circular_mean_integral(
    x: &Image,
    geometry: &DetectorGeometry,
    time: &TimeGrid,
) -> Sinogram {
    let t = time.samples();
    let mut values = vec![0.0; geometry.count() * t];
    values
        .par_chunks_mut(t)
        .enumerate()
        .for_each(|(m, row)| {
            let d = geometry.position(m);
            for (k, out) in row.iter_mut().enumerate() {
                *out = arc_integral(x, d, time.radius(k));
            }
        });
    Sinogram {
        geometry: *geometry,
        time: *time,
        values,
    }
}

/// Central differences inside, one-sided at both ends.
pub(crate) fn derivative_row(src: &[f64], dst: &mut [f64], dt: f64) {
    let t = src.len();
    debug_assert!(t >= 3);
    dst[0] = (src[1] - src[0]) / dt;
    for k in 1..t - 1 {
        dst[k] = (src[k + 1] - src[k - 1]) / (2.0 * dt);
    }
    dst[t - 1] = (src[t - 1] - src[t - 2]) / dt;
}

/// Exact transpose of [`derivative_row`].
pub(crate) fn derivative_row_transpose(src: &[f64], dst: &mut [f64], dt: f64) {
    let t = src.len();
    debug_assert!(t >= 3);
    dst.fill(0.0);
    dst[0] -= src[0] / dt;
    dst[1] += src[0] / dt;
    for k in 1..t - 1 {
        let c = src[k] / (2.0 * dt);
        dst[k - 1] -= c;
        dst[k + 1] += c;
    }
    dst[t - 2] -= src[t - 1] / dt;
    dst[t - 1] += src[t - 1] / dt;
}

pub fn time_derivative(s: &Sinogram) -> Result<Sinogram> {
    let t = s.time.samples();
    if t < 3 {
        return Err(Error::TooFewSamples(t));
    }
    let dt = s.time.dt();
    let mut out = vec![0.0; s.values.len()];
    out.par_chunks_mut(t)
        .zip(s.values.par_chunks(t))
        .for_each(|(d, r)| derivative_row(r, d, dt));
    Ok(s.with_values(out))
}

/// Compressed sparse rows with `u32` column indices.
#[derive(Debug, Clone, Default)]
struct Csr {
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl Csr {
    fn nnz(&self) -> usize {
        self.vals.len()
    }

    fn rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    fn mul_into(&self, x: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(r, o)| {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            *o = self.cols[span.clone()]
                .iter()
                .zip(&self.vals[span])
                .map(|(&c, &w)| w * x[c as usize])
                .sum();
        });
    }

    /// Transpose with entries of each output row sorted by source row.
    fn transpose(&self, cols: usize) -> Csr {
        let mut counts = vec![0usize; cols + 1];
        for &c in &self.cols {
            counts[c as usize + 1] += 1;
        }
        for k in 0..cols {
            counts[k + 1] += counts[k];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut t_cols = vec![0u32; self.nnz()];
        let mut t_vals = vec![0.0; self.nnz()];
        for r in 0..self.rows() {
            for e in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[e] as usize;
                t_cols[next[c]] = r as u32;
                t_vals[next[c]] = self.vals[e];
                next[c] += 1;
            }
        }
        Csr {
            row_ptr,
            cols: t_cols,
            vals: t_vals,
        }
    }
}

/// Merged weights of one `(detector, time)` row, sorted by pixel.
fn arc_row(grid: &ImageGrid, center: (f64, f64), r: f64, scratch: &mut Vec<(u32, f64)>) {
    scratch.clear();
    for_each_arc_weight(grid, center, r, |k, w| scratch.push((k as u32, w)));
    scratch.sort_by_key(|e| e.0);
    let mut write = 0;
    for read in 0..scratch.len() {
        if write > 0 && scratch[write - 1].0 == scratch[read].0 {
            scratch[write - 1].1 += scratch[read].1;
        } else {
            scratch[write] = scratch[read];
            write += 1;
        }
    }
    scratch.truncate(write);
}

/// Tabulated PAT forward operator `A = D ∘ M` and its transpose.
pub struct PatForward {
    grid: ImageGrid,
    geometry: DetectorGeometry,
    time: TimeGrid,
    means: Csr,
    means_t: Csr,
}

impl std::fmt::Debug for PatForward {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PatForward")
            .field("grid", &self.grid)
            .field("geometry", &self.geometry)
            .field("time", &self.time)
            .field("nnz", &self.means.nnz())
            .finish()
    }
}

impl PatForward {
    pub fn new(grid: ImageGrid, geometry: DetectorGeometry, time: TimeGrid) -> Result<Self> {
        if time.samples() < 3 {
            return Err(Error::TooFewSamples(time.samples()));
        }
        geometry.check_encloses(&grid)?;
        time.check_covers(&grid, &geometry)?;
        let t = time.samples();

        let per_detector: Vec<Csr> = (0..geometry.count())
            .into_par_iter()
            .map(|m| {
                let d = geometry.position(m);
                let mut scratch = Vec::new();
                let mut block = Csr {
                    row_ptr: vec![0],
                    ..Csr::default()
                };
                for k in 0..t {
                    arc_row(&grid, d, time.radius(k), &mut scratch);
                    block.cols.extend(scratch.iter().map(|e| e.0));
                    block.vals.extend(scratch.iter().map(|e| e.1));
                    block.row_ptr.push(block.cols.len());
                }
                block
            })
            .collect();

        let nnz = per_detector.iter().map(Csr::nnz).sum();
        let mut means = Csr {
            row_ptr: Vec::with_capacity(geometry.count() * t + 1),
            cols: Vec::with_capacity(nnz),
            vals: Vec::with_capacity(nnz),
        };
        means.row_ptr.push(0);
        for block in per_detector {
            let base = means.cols.len();
            means.row_ptr.extend(block.row_ptr[1..].iter().map(|p| p + base));
            means.cols.extend(block.cols);
            means.vals.extend(block.vals);
        }
        let means_t = means.transpose(grid.len());
        Ok(Self {
            grid,
            geometry,
            time,
            means,
            means_t,
        })
    }

    pub fn grid(&self) -> ImageGrid {
        self.grid
    }

    pub fn geometry(&self) -> DetectorGeometry {
        self.geometry
    }

    pub fn time(&self) -> TimeGrid {
        self.time
    }

    /// Stored quadrature weights.
    pub fn nnz(&self) -> usize {
        self.means.nnz()
    }

    fn check_image(&self, x: &Image) -> Result<()> {
        if x.grid() != self.grid {
            return Err(Error::mismatch("image grid", self.grid.n(), x.grid().n()));
        }
        Ok(())
    }

    fn check_sinogram(&self, s: &Sinogram) -> Result<()> {
        if s.geometry != self.geometry {
            return Err(Error::mismatch(
                "sinogram detectors",
                self.geometry.count(),
                s.geometry.count(),
            ));
        }
        if s.time != self.time {
            return Err(Error::mismatch(
                "sinogram time grid",
                self.time.samples(),
                s.time.samples(),
            ));
        }
        Ok(())
    }

    /// `M x` from the weight table.
    pub fn circular_means(&self, x: &Image) -> Result<Sinogram> {
        self.check_image(x)?;
        let mut values = vec![0.0; self.range_len()];
        self.means.mul_into(x.values(), &mut values);
        Ok(Sinogram {
            geometry: self.geometry,
            time: self.time,
            values,
        })
    }

    pub fn forward(&self, x: &Image) -> Result<Sinogram> {
        self.check_image(x)?;
        let mut values = vec![0.0; self.range_len()];
        self.apply_into(x.values(), &mut values);
        Ok(Sinogram {
            geometry: self.geometry,
            time: self.time,
            values,
        })
    }

    pub fn adjoint_image(&self, u: &Sinogram) -> Result<Image> {
        self.check_sinogram(u)?;
        let mut out = vec![0.0; self.grid.len()];
        self.adjoint_into(u.values(), &mut out);
        Image::from_values(self.grid, out)
    }

    pub fn zero_sinogram(&self) -> Sinogram {
        Sinogram::zeros(self.geometry, self.time)
    }
}

impl LinearOperator for PatForward {
    fn domain_len(&self) -> usize {
        self.grid.len()
    }

    fn range_len(&self) -> usize {
        self.geometry.count() * self.time.samples()
    }

    fn describe(&self) -> String {
        format!(
            "pat(n={}, detectors={}, samples={})",
            self.grid.n(),
            self.geometry.count(),
            self.time.samples()
        )
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let t = self.time.samples();
        let dt = self.time.dt();
        let mut means = vec![0.0; out.len()];
        self.means.mul_into(x, &mut means);
        out.par_chunks_mut(t)
            .zip(means.par_chunks(t))
            .for_each(|(d, r)| derivative_row(r, d, dt));
    }

    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        let t = self.time.samples();
        let dt = self.time.dt();
        let mut back = vec![0.0; y.len()];
        back.par_chunks_mut(t)
            .zip(y.par_chunks(t))
            .for_each(|(d, r)| derivative_row_transpose(r, d, dt));
        self.means_t.mul_into(&back, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PatForward {
        let grid = ImageGrid::new(8, 1.0).unwrap();
        let geom = DetectorGeometry::new(4, 1.5).unwrap();
        let time = TimeGrid::covering(16, &grid, &geom, 1.0).unwrap();
        PatForward::new(grid, geom, time).unwrap()
    }

    #[test]
    fn sample_count_floor() {
        assert_eq!(arc_sample_count(1e-6, 0.1), 16);
        assert_eq!(arc_sample_count(1.0, 0.1), (TAU / 0.05).ceil() as usize);
    }

    #[test]
    fn geometry_validation() {
        let grid = ImageGrid::new(8, 1.0).unwrap();
        let inside = DetectorGeometry::new(4, 1.4).unwrap();
        assert!(inside.check_encloses(&grid).is_err());
        let time = TimeGrid::new(16, 0.01, 1.0).unwrap();
        let geom = DetectorGeometry::new(4, 1.5).unwrap();
        assert!(PatForward::new(grid, geom, time).is_err());
        let few = TimeGrid::covering(2, &grid, &geom, 1.0).unwrap();
        assert!(matches!(
            PatForward::new(grid, geom, few),
            Err(Error::TooFewSamples(2))
        ));
    }

    #[test]
    fn angles_increase() {
        let g = DetectorGeometry::new(64, 1.5).unwrap();
        for m in 1..64 {
            assert!(g.angle(m) > g.angle(m - 1));
        }
        assert!(g.angle(63) < TAU);
    }

    #[test]
    fn table_matches_direct_quadrature() {
        let a = small();
        let vals: Vec<f64> = (0..64).map(|k| ((k * 7 % 11) as f64).cos()).collect();
        let x = Image::from_values(a.grid(), vals).unwrap();
        let table = a.circular_means(&x).unwrap();
        let direct = circular_mean_integral(&x, &a.geometry(), &a.time());
        for (p, q) in table.values().iter().zip(direct.values()) {
            assert!((p - q).abs() <= 1e-13 * (1.0 + q.abs()));
        }
    }

    #[test]
    fn zero_radius_row_is_zero() {
        let a = small();
        let x = Image::from_values(a.grid(), vec![1.0; 64]).unwrap();
        let s = a.circular_means(&x).unwrap();
        for m in 0..4 {
            assert_eq!(s.row(m)[0], 0.0);
        }
    }

    #[test]
    fn derivative_transpose_matches_dense() {
        let t = 6;
        let dt = 0.3;
        let dense: Vec<Vec<f64>> = (0..t)
            .map(|j| {
                let mut e = vec![0.0; t];
                e[j] = 1.0;
                let mut col = vec![0.0; t];
                derivative_row(&e, &mut col, dt);
                col
            })
            .collect();
        for i in 0..t {
            let mut e = vec![0.0; t];
            e[i] = 1.0;
            let mut row = vec![0.0; t];
            derivative_row_transpose(&e, &mut row, dt);
            for j in 0..t {
                assert_eq!(row[j], dense[j][i]);
            }
        }
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let a = small();
        let other = ImageGrid::new(9, 1.0).unwrap();
        assert!(a.forward(&Image::zeros(other)).is_err());
        assert!(a.apply(&[0.0; 3]).is_err());
        assert!(a.adjoint(&[0.0; 3]).is_err());
    }
}
