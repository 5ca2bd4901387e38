//! Discrete gradient, isotropic total variation and the proximal maps used by
//! the primal-dual solver.
//!
//! Forward differences with unit (pixel-index) spacing and Neumann boundary:
//! the last column of `dx` and the last row of `dy` are zero.

use crate::error::{Error, Result};
use crate::image::{Image, ImageGrid};
use crate::operator::{check_len, LinearOperator};

#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    grid: ImageGrid,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
}

impl GradientField {
    pub fn zeros(grid: ImageGrid) -> Self {
        Self {
            grid,
            dx: vec![0.0; grid.len()],
            dy: vec![0.0; grid.len()],
        }
    }

    pub fn from_parts(grid: ImageGrid, dx: Vec<f64>, dy: Vec<f64>) -> Result<Self> {
        check_len("gradient dx", grid.len(), dx.len())?;
        check_len("gradient dy", grid.len(), dy.len())?;
        Ok(Self { grid, dx, dy })
    }

    pub fn grid(&self) -> ImageGrid {
        self.grid
    }
}

pub(crate) fn gradient_into(x: &[f64], n: usize, dx: &mut [f64], dy: &mut [f64]) {
    for i in 0..n {
        let row = i * n;
        for j in 0..n {
            let k = row + j;
            dx[k] = if j + 1 < n { x[k + 1] - x[k] } else { 0.0 };
            dy[k] = if i + 1 < n { x[k + n] - x[k] } else { 0.0 };
        }
    }
}

/// `−∇ᵀ (dx, dy)`.
pub(crate) fn divergence_into(dx: &[f64], dy: &[f64], n: usize, out: &mut [f64]) {
    for i in 0..n {
        let row = i * n;
        for j in 0..n {
            let k = row + j;
            let mut d = 0.0;
            if j + 1 < n {
                d += dx[k];
            }
            if j > 0 {
                d -= dx[k - 1];
            }
            if i + 1 < n {
                d += dy[k];
            }
            if i > 0 {
                d -= dy[k - n];
            }
            out[k] = d;
        }
    }
}

pub fn gradient(x: &Image) -> GradientField {
    let grid = x.grid();
    let mut g = GradientField::zeros(grid);
    gradient_into(x.values(), grid.n(), &mut g.dx, &mut g.dy);
    g
}

/// Negative adjoint of [`gradient`]: `⟨∇x, g⟩ = −⟨x, div g⟩`.
pub fn divergence(g: &GradientField) -> Image {
    let grid = g.grid;
    let mut out = Image::zeros(grid);
    divergence_into(&g.dx, &g.dy, grid.n(), out.values_mut());
    out
}

pub(crate) fn tv_of(x: &[f64], n: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            let gx = if j + 1 < n { x[k + 1] - x[k] } else { 0.0 };
            let gy = if i + 1 < n { x[k + n] - x[k] } else { 0.0 };
            total += gx.hypot(gy);
        }
    }
    total
}

/// Isotropic TV, `Σ √(dx² + dy²)`.
pub fn tv_value(x: &Image) -> f64 {
    tv_of(x.values(), x.grid().n())
}

/// Pointwise projection of `(dx, dy)` onto the ball of radius `alpha`.
pub(crate) fn project_ball(dx: &mut [f64], dy: &mut [f64], alpha: f64) {
    if alpha == 0.0 {
        dx.fill(0.0);
        dy.fill(0.0);
        return;
    }
    for (a, b) in dx.iter_mut().zip(dy.iter_mut()) {
        let mag = a.hypot(*b);
        if mag > alpha {
            let s = alpha / mag;
            *a *= s;
            *b *= s;
        }
    }
}

/// Prox of the conjugate of `alpha·‖·‖₂,₁`, i.e. projection onto the dual ball.
pub fn prox_tv_dual(g: &GradientField, alpha: f64) -> Result<GradientField> {
    if !(alpha >= 0.0) {
        return Err(Error::param("alpha", format!("must be >= 0, got {alpha}")));
    }
    let mut out = g.clone();
    project_ball(&mut out.dx, &mut out.dy, alpha);
    Ok(out)
}

pub fn prox_nonneg(x: &Image) -> Image {
    let mut out = x.clone();
    for v in out.values_mut() {
        *v = v.max(0.0);
    }
    out
}

/// Prox of `σ f*` for `f(v) = ‖v − b‖²` (no ½):
/// `q = (p − σ b) / (1 + σ/2)`.
pub fn prox_fidelity_conjugate(p: &[f64], sigma: f64, b: &[f64]) -> Result<Vec<f64>> {
    check_len("fidelity prox data", p.len(), b.len())?;
    if !(sigma > 0.0) {
        return Err(Error::param("sigma", format!("must be > 0, got {sigma}")));
    }
    let mut out = p.to_vec();
    prox_fidelity_conjugate_in_place(&mut out, sigma, b);
    Ok(out)
}

pub(crate) fn prox_fidelity_conjugate_in_place(p: &mut [f64], sigma: f64, b: &[f64]) {
    let scale = 1.0 / (1.0 + 0.5 * sigma);
    for (q, &bi) in p.iter_mut().zip(b) {
        *q = (*q - sigma * bi) * scale;
    }
}

/// `∇` as a linear operator; the range is `dx` followed by `dy`.
#[derive(Debug, Clone, Copy)]
pub struct GradientOperator {
    pub n: usize,
}

impl LinearOperator for GradientOperator {
    fn domain_len(&self) -> usize {
        self.n * self.n
    }

    fn range_len(&self) -> usize {
        2 * self.n * self.n
    }

    fn describe(&self) -> String {
        format!("gradient({}x{})", self.n, self.n)
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let (dx, dy) = out.split_at_mut(self.n * self.n);
        gradient_into(x, self.n, dx, dy);
    }

    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        let (dx, dy) = y.split_at(self.n * self.n);
        divergence_into(dx, dy, self.n, out);
        for v in out.iter_mut() {
            *v = -*v;
        }
    }
}
