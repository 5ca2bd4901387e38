//! Chambolle-Pock primal-dual minimization of
//!
//! ```text
//!   ‖K₁x − b‖² + α·TV(x) + I_{≥0}(x)
//! ```
//!
//! with the stacked operator `K = (K₁; ∇)`. The fidelity and TV terms are
//! dualized (closed-form conjugate proxes), nonnegativity is the primal prox.
//! `K₁ = Φ∘A` and `b = Φ y` give the filtered fidelity; `K₁ = A`, `b = y` the
//! plain ℓ² one.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::filter::{build_filter, compose_filtered_forward, FilterSpec};
use crate::forward::Sinogram;
use crate::image::{Image, ImageGrid};
use crate::operator::{check_len, norm, operator_norm, LinearOperator, Stacked};
use crate::regularization::{
    divergence_into, gradient_into, project_ball, prox_fidelity_conjugate_in_place, tv_of,
    GradientOperator,
};

/// Relative safety margin applied to the estimated `‖K‖`.
pub const NORM_MARGIN: f64 = 1.01;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub iterations: usize,
    pub alpha: f64,
    pub theta: f64,
    pub norm_power_iters: usize,
    pub norm_tol: f64,
    pub norm_seed: u64,
    pub trace_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            alpha: 6e-6,
            theta: 1.0,
            norm_power_iters: 100,
            norm_tol: 1e-6,
            norm_seed: 0,
            trace_every: 10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::param("solver.iterations", "must be >= 1"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::param(
                "solver.alpha",
                format!("must be finite and >= 0, got {}", self.alpha),
            ));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::param(
                "solver.theta",
                format!("must lie in [0, 1], got {}", self.theta),
            ));
        }
        if self.norm_power_iters == 0 {
            return Err(Error::param("solver.norm_power_iters", "must be >= 1"));
        }
        if !(self.norm_tol >= 0.0) {
            return Err(Error::param("solver.norm_tol", "must be >= 0"));
        }
        if self.trace_every == 0 {
            return Err(Error::param("solver.trace_every", "must be >= 1"));
        }
        Ok(())
    }
}

/// Per-iteration diagnostics, recorded every `trace_every` iterations and at
/// the last one.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveTrace {
    pub iterations: Vec<usize>,
    pub objective: Vec<f64>,
    pub fidelity: Vec<f64>,
    pub tv: Vec<f64>,
    pub step_norm: Vec<f64>,
    /// Estimated `‖(K₁; ∇)‖` before the safety margin.
    pub operator_norm: f64,
    pub sigma: f64,
    pub tau: f64,
}

impl SolveTrace {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    /// CSV with header `iter,objective,fidelity,tv,step_norm`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,objective,fidelity,tv,step_norm\n");
        for k in 0..self.len() {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                self.iterations[k],
                crate::io::fmt_f64(self.objective[k]),
                crate::io::fmt_f64(self.fidelity[k]),
                crate::io::fmt_f64(self.tv[k]),
                crate::io::fmt_f64(self.step_norm[k]),
            ));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    /// `+∞` when `x` has a negative entry.
    pub total: f64,
    pub fidelity: f64,
    pub tv: f64,
    pub feasible: bool,
}

fn objective_parts(
    x: &[f64],
    n: usize,
    k1: &dyn LinearOperator,
    b: &[f64],
    alpha: f64,
    kx: &mut [f64],
) -> Objective {
    k1.apply_into(x, kx);
    let fidelity: f64 = kx.iter().zip(b).map(|(a, c)| (a - c) * (a - c)).sum();
    let tv = tv_of(x, n);
    let feasible = x.iter().all(|&v| v >= 0.0);
    let total = if feasible {
        fidelity + alpha * tv
    } else {
        f64::INFINITY
    };
    Objective {
        total,
        fidelity,
        tv,
        feasible,
    }
}

pub fn objective(x: &Image, k1: &dyn LinearOperator, b: &[f64], alpha: f64) -> Result<Objective> {
    check_len("objective image", k1.domain_len(), x.values().len())?;
    check_len("objective data", k1.range_len(), b.len())?;
    let mut kx = vec![0.0; b.len()];
    Ok(objective_parts(
        x.values(),
        x.grid().n(),
        k1,
        b,
        alpha,
        &mut kx,
    ))
}

/// Runs `config.iterations` Chambolle-Pock steps from `x_init` (zero when
/// `None`). The returned image is exactly nonnegative.
pub fn solve(
    k1: &dyn LinearOperator,
    b: &[f64],
    grid: ImageGrid,
    config: &SolverConfig,
    x_init: Option<&Image>,
) -> Result<(Image, SolveTrace)> {
    config.validate()?;
    let n = grid.n();
    let npix = grid.len();
    check_len("solver image", npix, k1.domain_len())?;
    check_len("solver data", k1.range_len(), b.len())?;

    let grad_op = GradientOperator { n };
    let stacked = Stacked::new(k1, &grad_op)?;
    let op_norm = operator_norm(
        &stacked,
        config.norm_power_iters,
        config.norm_tol,
        config.norm_seed,
    );
    if !(op_norm > 0.0 && op_norm.is_finite()) {
        return Err(Error::param(
            "operator",
            format!("estimated norm {op_norm} is not usable for step sizes"),
        ));
    }
    let step = 1.0 / (op_norm * NORM_MARGIN);
    let (sigma, tau) = (step, step);

    let mut x = match x_init {
        Some(img) => {
            if img.grid() != grid {
                return Err(Error::mismatch("initial image", npix, img.values().len()));
            }
            img.values().iter().map(|v| v.max(0.0)).collect()
        }
        None => vec![0.0; npix],
    };
    let mut x_bar = x.clone();
    let mut x_new = vec![0.0; npix];
    let mut p = vec![0.0; b.len()];
    let (mut qx, mut qy) = (vec![0.0; npix], vec![0.0; npix]);
    let mut kbuf = vec![0.0; b.len()];
    let (mut gx, mut gy) = (vec![0.0; npix], vec![0.0; npix]);
    let mut ktp = vec![0.0; npix];
    let mut divq = vec![0.0; npix];

    let mut trace = SolveTrace {
        operator_norm: op_norm,
        sigma,
        tau,
        ..SolveTrace::default()
    };

    for it in 1..=config.iterations {
        // Dual ascent on the fidelity block.
        k1.apply_into(&x_bar, &mut kbuf);
        for (pi, ki) in p.iter_mut().zip(&kbuf) {
            *pi += sigma * ki;
        }
        prox_fidelity_conjugate_in_place(&mut p, sigma, b);

        // Dual ascent on the TV block.
        gradient_into(&x_bar, n, &mut gx, &mut gy);
        for k in 0..npix {
            qx[k] += sigma * gx[k];
            qy[k] += sigma * gy[k];
        }
        project_ball(&mut qx, &mut qy, config.alpha);

        // Primal descent and projection onto x >= 0.
        k1.adjoint_into(&p, &mut ktp);
        divergence_into(&qx, &qy, n, &mut divq);
        for k in 0..npix {
            x_new[k] = (x[k] - tau * (ktp[k] - divq[k])).max(0.0);
        }

        let record = it % config.trace_every == 0 || it == config.iterations;
        let step_norm = if record {
            x_new
                .iter()
                .zip(&x)
                .map(|(a, c)| (a - c) * (a - c))
                .sum::<f64>()
                .sqrt()
        } else {
            0.0
        };

        for k in 0..npix {
            x_bar[k] = x_new[k] + config.theta * (x_new[k] - x[k]);
        }
        std::mem::swap(&mut x, &mut x_new);

        if record {
            let obj = objective_parts(&x, n, k1, b, config.alpha, &mut kbuf);
            let finite = obj.total.is_finite()
                && step_norm.is_finite()
                && p.iter().all(|v| v.is_finite());
            if !finite {
                return Err(Error::Divergence { iteration: it });
            }
            trace.iterations.push(it);
            trace.objective.push(obj.total);
            trace.fidelity.push(obj.fidelity);
            trace.tv.push(obj.tv);
            trace.step_norm.push(step_norm);
        }
    }

    Ok((Image::from_values(grid, x)?, trace))
}

/// Which data term to minimize.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fidelity {
    /// `‖A x − y‖²`.
    L2,
    /// `‖φ ∗ₜ (A x − y)‖²`.
    Filtered(FilterSpec),
}

impl Fidelity {
    pub fn label(&self) -> &'static str {
        match self {
            Fidelity::L2 => "l2",
            Fidelity::Filtered(spec) => spec.name(),
        }
    }
}

/// Operator/data pair `(K₁, b)` with `‖K₁x − b‖² = dist(A x, y)`.
pub fn make_fidelity_chain(
    fidelity: &Fidelity,
    forward: Arc<dyn LinearOperator>,
    data: &Sinogram,
) -> Result<(Arc<dyn LinearOperator>, Vec<f64>)> {
    check_len("fidelity data", forward.range_len(), data.values().len())?;
    match fidelity {
        Fidelity::L2 => Ok((forward, data.values().to_vec())),
        Fidelity::Filtered(spec) => {
            let time = data.time();
            let filter = build_filter(*spec, time.samples(), time.dt())?;
            let b = filter.apply(data)?.into_values();
            let op = compose_filtered_forward(filter, forward)?;
            Ok((Arc::new(op), b))
        }
    }
}

/// Root of the squared residual norm, for reporting.
pub fn residual_norm(k1: &dyn LinearOperator, x: &Image, b: &[f64]) -> Result<f64> {
    let kx = k1.apply(x.values())?;
    let r: Vec<f64> = kx.iter().zip(b).map(|(a, c)| a - c).collect();
    Ok(norm(&r))
}
