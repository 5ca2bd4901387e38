//! Linear operators on flat `f64` vectors with exact adjoints.
//!
//! Every map used by the solver (the PAT forward model, its filtered
//! variants, the discrete gradient) implements [`LinearOperator`]. The
//! solver and the norm estimator only ever see this trait.

use rand_core::Rng;
use rand_pcg::Pcg32;

use crate::error::{Error, Result};

pub trait LinearOperator: Send + Sync {
    fn domain_len(&self) -> usize;

    fn range_len(&self) -> usize;

    /// Human-readable composition, e.g. `"filter(bandpass) ∘ pat"`.
    fn describe(&self) -> String;

    /// Writes `K x` into `out`. Lengths are checked by [`LinearOperator::apply`].
    fn apply_into(&self, x: &[f64], out: &mut [f64]);

    /// Writes `Kᵀ y` into `out`.
    fn adjoint_into(&self, y: &[f64], out: &mut [f64]);

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("operator input", self.domain_len(), x.len())?;
        let mut out = vec![0.0; self.range_len()];
        self.apply_into(x, &mut out);
        Ok(out)
    }

    fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len("adjoint input", self.range_len(), y.len())?;
        let mut out = vec![0.0; self.domain_len()];
        self.adjoint_into(y, &mut out);
        Ok(out)
    }
}

#[inline]
pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::mismatch(what, expected, got))
    }
}

/// Sequential dot product. Summation order is fixed so results do not depend
/// on the thread count.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Reinterprets the input vector as output data.
#[derive(Debug, Clone, Copy)]
pub struct Identity {
    pub len: usize,
}

impl LinearOperator for Identity {
    fn domain_len(&self) -> usize {
        self.len
    }
    fn range_len(&self) -> usize {
        self.len
    }
    fn describe(&self) -> String {
        "identity".into()
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }
    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(y);
    }
}

/// `scale · I`.
#[derive(Debug, Clone, Copy)]
pub struct Scaled {
    pub len: usize,
    pub scale: f64,
}

impl LinearOperator for Scaled {
    fn domain_len(&self) -> usize {
        self.len
    }
    fn range_len(&self) -> usize {
        self.len
    }
    fn describe(&self) -> String {
        format!("{} · identity", self.scale)
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = self.scale * v;
        }
    }
    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        self.apply_into(y, out)
    }
}

/// Vertical stack `(top; bottom)` sharing one domain.
pub struct Stacked<'a> {
    pub top: &'a dyn LinearOperator,
    pub bottom: &'a dyn LinearOperator,
}

impl<'a> Stacked<'a> {
    pub fn new(top: &'a dyn LinearOperator, bottom: &'a dyn LinearOperator) -> Result<Self> {
        check_len("stacked domains", top.domain_len(), bottom.domain_len())?;
        Ok(Self { top, bottom })
    }
}

impl LinearOperator for Stacked<'_> {
    fn domain_len(&self) -> usize {
        self.top.domain_len()
    }
    fn range_len(&self) -> usize {
        self.top.range_len() + self.bottom.range_len()
    }
    fn describe(&self) -> String {
        format!("({}; {})", self.top.describe(), self.bottom.describe())
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let (a, b) = out.split_at_mut(self.top.range_len());
        self.top.apply_into(x, a);
        self.bottom.apply_into(x, b);
    }
    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        let (a, b) = y.split_at(self.top.range_len());
        let mut tmp = vec![0.0; out.len()];
        self.top.adjoint_into(a, out);
        self.bottom.adjoint_into(b, &mut tmp);
        for (o, t) in out.iter_mut().zip(&tmp) {
            *o += t;
        }
    }
}

/// Standard normal samples from a PCG32 stream, Box-Muller, consumed in
/// index order.
///
/// Uniforms are built from two consecutive 32-bit outputs as
/// `((a >> 5) · 2²⁶ + (b >> 6) + 1) / 2⁵³`, which lies in `(0, 1]`. Each pair
/// `(u1, u2)` yields `r·cos(2πu2)` then `r·sin(2πu2)` with `r = √(−2 ln u1)`.
pub struct NormalStream {
    rng: Pcg32,
    spare: Option<f64>,
}

/// Stream selector passed to PCG32 alongside the seed.
pub const PCG_STREAM: u64 = 0x0a02_bdbf_7bb3_c0a7;

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: Pcg32::new(seed, PCG_STREAM),
            spare: None,
        }
    }

    pub fn next_uniform(&mut self) -> f64 {
        let a = (self.rng.next_u32() >> 5) as u64;
        let b = (self.rng.next_u32() >> 6) as u64;
        ((a << 26) + b + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }
}

/// Largest singular value of `op` by power iteration on `opᵀ op`.
///
/// Starts from a seeded Gaussian vector; stops after `iterations` or once two
/// successive estimates differ by less than `tol` (relative). A zero operator
/// yields 0.
pub fn operator_norm(op: &dyn LinearOperator, iterations: usize, tol: f64, seed: u64) -> f64 {
    let iterations = iterations.max(1);
    let mut normals = NormalStream::new(seed);
    let mut v: Vec<f64> = (0..op.domain_len()).map(|_| normals.next_normal()).collect();
    let nv = norm(&v);
    if nv == 0.0 {
        return 0.0;
    }
    v.iter_mut().for_each(|x| *x /= nv);

    let mut fwd = vec![0.0; op.range_len()];
    let mut back = vec![0.0; op.domain_len()];
    let mut estimate = 0.0;
    for _ in 0..iterations {
        op.apply_into(&v, &mut fwd);
        op.adjoint_into(&fwd, &mut back);
        // ‖Kᵀ K v‖ → σ_max², with v unit-norm.
        let nb = norm(&back);
        if nb == 0.0 {
            return 0.0;
        }
        let next = nb.sqrt();
        v.iter_mut().zip(&back).for_each(|(x, b)| *x = b / nb);
        let converged = (next - estimate).abs() <= tol * next;
        estimate = next;
        if converged {
            break;
        }
    }
    estimate
}

/// Relative adjoint-test residual `|⟨Kx, u⟩ − ⟨x, Kᵀu⟩| / (‖Kx‖·‖u‖)`, worst over
/// `pairs` seeded random `(x, u)`.
pub fn adjoint_residual(op: &dyn LinearOperator, pairs: usize, seed: u64) -> f64 {
    let mut normals = NormalStream::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let x: Vec<f64> = (0..op.domain_len()).map(|_| normals.next_normal()).collect();
        let u: Vec<f64> = (0..op.range_len()).map(|_| normals.next_normal()).collect();
        let mut kx = vec![0.0; op.range_len()];
        let mut ktu = vec![0.0; op.domain_len()];
        op.apply_into(&x, &mut kx);
        op.adjoint_into(&u, &mut ktu);
        let scale = norm(&kx) * norm(&u);
        let diff = (dot(&kx, &u) - dot(&x, &ktu)).abs();
        let rel = if scale == 0.0 { diff } else { diff / scale };
        worst = worst.max(rel);
    }
    worst
}
