//! Zero-phase temporal filters applied along the time axis of sinograms.
//!
//! Each detector trace of length `T` is zero-padded to `2T`, transformed,
//! multiplied by a real nonnegative magnitude response, transformed back and
//! truncated to its first `T` samples. Frequencies are expressed as
//! fractions of the Nyquist frequency `1/(2·dt)`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::Sinogram;
use crate::operator::{check_len, LinearOperator};

/// Inclusive band-edge slack, in bins.
const EDGE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FilterSpec {
    Delta,
    Gauss { f_center: f64, f_sigma: f64 },
    Bandpass { f_lo: f64, f_hi: f64 },
}

impl FilterSpec {
    pub fn name(&self) -> &'static str {
        match self {
            FilterSpec::Delta => "delta",
            FilterSpec::Gauss { .. } => "gauss",
            FilterSpec::Bandpass { .. } => "bandpass",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        match *self {
            FilterSpec::Delta => Ok(()),
            FilterSpec::Gauss { f_center, f_sigma } => {
                if !(0.0..=1.0).contains(&f_center) {
                    return bad(format!("gauss f_center {f_center} outside [0, 1]"));
                }
                if !(f_sigma > 0.0 && f_sigma.is_finite()) {
                    return bad(format!("gauss f_sigma {f_sigma} must be positive"));
                }
                Ok(())
            }
            FilterSpec::Bandpass { f_lo, f_hi } => {
                if !(0.0 <= f_lo && f_lo < f_hi && f_hi <= 1.0) {
                    return bad(format!(
                        "bandpass needs 0 <= f_lo < f_hi <= 1, got [{f_lo}, {f_hi}]"
                    ));
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for FilterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterSpec::Delta => write!(f, "delta"),
            FilterSpec::Gauss { f_center, f_sigma } => {
                write!(f, "gauss(center={f_center}, sigma={f_sigma})")
            }
            FilterSpec::Bandpass { f_lo, f_hi } => write!(f, "bandpass([{f_lo}, {f_hi}])"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse {
    pub freqs: Vec<f64>,
    pub magnitude: Vec<f64>,
}

/// A filter bound to a time grid, with FFT plans for the padded length.
#[derive(Clone)]
pub struct TemporalFilter {
    spec: FilterSpec,
    samples: usize,
    dt: f64,
    /// Magnitude at bins `j = 0..=T` of the length-`2T` transform.
    response: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for TemporalFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TemporalFilter")
            .field("spec", &self.spec)
            .field("samples", &self.samples)
            .field("dt", &self.dt)
            .finish()
    }
}

/// Bin index nearest to a Nyquist fraction on a `2T`-point transform.
pub fn nearest_bin(fraction: f64, samples: usize) -> usize {
    (fraction * samples as f64).round() as usize
}

/// Magnitude of `spec` at bin `j` (Nyquist fraction `j / T`).
///
/// The Gaussian center is snapped to the nearest bin so the peak value is
/// exactly one.
fn magnitude_at(spec: &FilterSpec, j: usize, samples: usize) -> f64 {
    let t = samples as f64;
    match *spec {
        FilterSpec::Delta => 1.0,
        FilterSpec::Gauss { f_center, f_sigma } => {
            let offset = (j as f64 - nearest_bin(f_center, samples) as f64) / t;
            (-(offset * offset) / (2.0 * f_sigma * f_sigma)).exp()
        }
        FilterSpec::Bandpass { f_lo, f_hi } => {
            let j = j as f64;
            if j >= f_lo * t - EDGE_SLACK && j <= f_hi * t + EDGE_SLACK {
                1.0
            } else {
                0.0
            }
        }
    }
}

pub fn build_filter(spec: FilterSpec, samples: usize, dt: f64) -> Result<TemporalFilter> {
    spec.validate()?;
    if samples < 2 {
        return Err(Error::param("samples", format!("need >= 2, got {samples}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", format!("must be positive, got {dt}")));
    }
    let response = (0..=samples)
        .map(|j| magnitude_at(&spec, j, samples))
        .collect();
    let mut planner = FftPlanner::new();
    Ok(TemporalFilter {
        spec,
        samples,
        dt,
        response,
        fft: planner.plan_fft_forward(2 * samples),
        ifft: planner.plan_fft_inverse(2 * samples),
    })
}

impl TemporalFilter {
    pub fn spec(&self) -> FilterSpec {
        self.spec
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn nyquist(&self) -> f64 {
        0.5 / self.dt
    }

    pub fn frequency_response(&self) -> FrequencyResponse {
        let df = 1.0 / (2.0 * self.samples as f64 * self.dt);
        FrequencyResponse {
            freqs: (0..=self.samples).map(|j| j as f64 * df).collect(),
            magnitude: self.response.clone(),
        }
    }

    /// Filters one trace. `buf` is scratch of length `2T`.
    fn filter_row(&self, src: &[f64], dst: &mut [f64], buf: &mut [Complex<f64>]) {
        let t = self.samples;
        let len = 2 * t;
        for (b, &v) in buf.iter_mut().zip(src) {
            *b = Complex::new(v, 0.0);
        }
        buf[t..].fill(Complex::new(0.0, 0.0));
        self.fft.process(buf);
        for (j, b) in buf.iter_mut().enumerate() {
            *b *= self.response[j.min(len - j)];
        }
        self.ifft.process(buf);
        let scale = 1.0 / len as f64;
        for (d, b) in dst.iter_mut().zip(buf.iter()) {
            *d = b.re * scale;
        }
    }

    /// Filters every length-`T` row of `data` into `out`.
    pub fn apply_rows(&self, data: &[f64], out: &mut [f64]) {
        let t = self.samples;
        debug_assert_eq!(data.len() % t, 0);
        // All-pass: skip the FFT round trip so the result is exact.
        if self.spec == FilterSpec::Delta {
            out.copy_from_slice(data);
            return;
        }
        out.par_chunks_mut(t).zip(data.par_chunks(t)).for_each_init(
            || vec![Complex::new(0.0, 0.0); 2 * t],
            |buf, (dst, src)| self.filter_row(src, dst, buf),
        );
    }

    /// Transpose of [`TemporalFilter::apply_rows`].
    ///
    /// The padded circulant has a real, even kernel (real even spectrum), so
    /// it is symmetric; zero-padding and truncation are each other's
    /// transposes. The truncated operator is therefore its own transpose.
    pub fn apply_rows_transpose(&self, data: &[f64], out: &mut [f64]) {
        self.apply_rows(data, out)
    }

    fn check(&self, s: &Sinogram) -> Result<()> {
        check_len("filter samples", self.samples, s.time().samples())?;
        if s.time().dt() != self.dt {
            return Err(Error::param(
                "dt",
                format!("filter dt {} differs from sinogram dt {}", self.dt, s.time().dt()),
            ));
        }
        Ok(())
    }

    pub fn apply(&self, s: &Sinogram) -> Result<Sinogram> {
        self.check(s)?;
        let mut out = vec![0.0; s.values().len()];
        self.apply_rows(s.values(), &mut out);
        Ok(s.with_values(out))
    }

    pub fn apply_adjoint(&self, s: &Sinogram) -> Result<Sinogram> {
        self.check(s)?;
        let mut out = vec![0.0; s.values().len()];
        self.apply_rows_transpose(s.values(), &mut out);
        Ok(s.with_values(out))
    }
}

pub fn apply_filter(f: &TemporalFilter, s: &Sinogram) -> Result<Sinogram> {
    f.apply(s)
}

pub fn frequency_response(f: &TemporalFilter) -> FrequencyResponse {
    f.frequency_response()
}

/// `Φ ∘ inner`, filtering every output row of `inner` in time.
pub struct FilteredOperator {
    filter: TemporalFilter,
    inner: Arc<dyn LinearOperator>,
}

impl FilteredOperator {
    pub fn filter(&self) -> &TemporalFilter {
        &self.filter
    }
}

pub fn compose_filtered_forward(
    filter: TemporalFilter,
    inner: Arc<dyn LinearOperator>,
) -> Result<FilteredOperator> {
    if inner.range_len() % filter.samples() != 0 {
        return Err(Error::mismatch(
            "filtered operator rows",
            filter.samples(),
            inner.range_len(),
        ));
    }
    Ok(FilteredOperator { filter, inner })
}

impl LinearOperator for FilteredOperator {
    fn domain_len(&self) -> usize {
        self.inner.domain_len()
    }

    fn range_len(&self) -> usize {
        self.inner.range_len()
    }

    fn describe(&self) -> String {
        format!("filter({}) ∘ {}", self.filter.spec, self.inner.describe())
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; out.len()];
        self.inner.apply_into(x, &mut tmp);
        self.filter.apply_rows(&tmp, out);
    }

    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; y.len()];
        self.filter.apply_rows_transpose(y, &mut tmp);
        self.inner.adjoint_into(&tmp, out);
    }
}
