//! Brute-force reference implementations shared by the integration tests.
//! Everything here is written from the operator definitions, not from the
//! library code.

#![allow(dead_code)]

use std::f64::consts::PI;

use relaxed_pat::filter::FilterSpec;
use relaxed_pat::operator::NormalStream;

pub fn random_vec(len: usize, seed: u64) -> Vec<f64> {
    let mut s = NormalStream::new(seed);
    (0..len).map(|_| s.next_normal()).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// Row-major dense matrix.
#[derive(Clone, Debug)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub a: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            a: vec![0.0; rows * cols],
        }
    }

    pub fn at(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.a[r * self.cols + c]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.a[r * self.cols + c]
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.get(r, c) * x[c]).sum())
            .collect()
    }

    pub fn mul_t(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c] += self.get(r, c) * y[r];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Dense) -> Dense {
        assert_eq!(self.cols, other.rows);
        let mut out = Dense::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let v = self.get(r, k);
                if v == 0.0 {
                    continue;
                }
                for c in 0..other.cols {
                    *out.at(r, c) += v * other.get(k, c);
                }
            }
        }
        out
    }
}

/// Arc quadrature of one circle as a dense row over the `n×n` grid on
/// `[-h, h]²`. `refine` multiplies the number of angular samples.
pub fn arc_row(n: usize, h: f64, center: (f64, f64), r: f64, refine: usize) -> Vec<f64> {
    let mut row = vec![0.0; n * n];
    if r == 0.0 {
        return row;
    }
    let p = 2.0 * h / n as f64;
    let base = ((2.0 * PI * r) / (p / 2.0)).ceil().max(16.0) as usize;
    let count = base * refine;
    let dtheta = 2.0 * PI / count as f64;
    for s in 0..count {
        let theta = s as f64 * dtheta;
        let px = center.0 + r * theta.cos();
        let py = center.1 + r * theta.sin();
        // Continuous pixel coordinates: pixel k has its center at k.
        let cj = (px + h) / p - 0.5;
        let ci = (py + h) / p - 0.5;
        let j0 = cj.floor();
        let i0 = ci.floor();
        let (fj, fi) = (cj - j0, ci - i0);
        for (di, wi) in [(0i64, 1.0 - fi), (1, fi)] {
            for (dj, wj) in [(0i64, 1.0 - fj), (1, fj)] {
                let i = i0 as i64 + di;
                let j = j0 as i64 + dj;
                if i < 0 || j < 0 || i >= n as i64 || j >= n as i64 {
                    continue;
                }
                row[i as usize * n + j as usize] += r * dtheta * wi * wj;
            }
        }
    }
    row
}

pub struct Setup {
    pub n: usize,
    pub h: f64,
    pub detectors: usize,
    pub radius: f64,
    pub samples: usize,
    pub dt: f64,
    pub c: f64,
}

impl Setup {
    pub fn covering(n: usize, h: f64, detectors: usize, radius: f64, samples: usize) -> Self {
        Self {
            n,
            h,
            detectors,
            radius,
            samples,
            dt: (radius + h * 2f64.sqrt()) / (samples - 1) as f64,
            c: 1.0,
        }
    }

    pub fn detector(&self, m: usize) -> (f64, f64) {
        let a = 2.0 * PI * m as f64 / self.detectors as f64;
        (self.radius * a.cos(), self.radius * a.sin())
    }

    /// Dense circular-integral matrix, rows ordered detector-major.
    pub fn dense_means(&self, refine: usize) -> Dense {
        let mut m = Dense::zeros(self.detectors * self.samples, self.n * self.n);
        for d in 0..self.detectors {
            for k in 0..self.samples {
                let row = arc_row(self.n, self.h, self.detector(d), self.c * k as f64 * self.dt, refine);
                let r = d * self.samples + k;
                m.a[r * m.cols..(r + 1) * m.cols].copy_from_slice(&row);
            }
        }
        m
    }

    /// Block-diagonal time-derivative matrix.
    pub fn dense_derivative(&self) -> Dense {
        let t = self.samples;
        let rows = self.detectors * t;
        let mut d = Dense::zeros(rows, rows);
        for m in 0..self.detectors {
            let blk = derivative_matrix(t, self.dt);
            for i in 0..t {
                for j in 0..t {
                    *d.at(m * t + i, m * t + j) = blk.get(i, j);
                }
            }
        }
        d
    }

    pub fn dense_forward(&self) -> Dense {
        self.dense_derivative().matmul(&self.dense_means(1))
    }
}

pub fn derivative_matrix(t: usize, dt: f64) -> Dense {
    let mut d = Dense::zeros(t, t);
    *d.at(0, 0) = -1.0 / dt;
    *d.at(0, 1) = 1.0 / dt;
    for k in 1..t - 1 {
        *d.at(k, k - 1) = -0.5 / dt;
        *d.at(k, k + 1) = 0.5 / dt;
    }
    *d.at(t - 1, t - 2) = -1.0 / dt;
    *d.at(t - 1, t - 1) = 1.0 / dt;
    d
}

/// Magnitude at bin `j` of a `2T`-point transform (Nyquist fraction `j/T`).
pub fn response_formula(spec: &FilterSpec, j: usize, t: usize) -> f64 {
    let f = j as f64 / t as f64;
    match *spec {
        FilterSpec::Delta => 1.0,
        FilterSpec::Gauss { f_center, f_sigma } => {
            let c = (f_center * t as f64).round() / t as f64;
            (-(f - c).powi(2) / (2.0 * f_sigma * f_sigma)).exp()
        }
        FilterSpec::Bandpass { f_lo, f_hi } => {
            // Edges inclusive, compared in bin units.
            let jf = j as f64;
            if jf >= f_lo * t as f64 - 1e-9 && jf <= f_hi * t as f64 + 1e-9 {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Real even kernel of the `2T` circulant, by a direct inverse DFT.
pub fn circulant_kernel(spec: &FilterSpec, t: usize) -> Vec<f64> {
    let len = 2 * t;
    let full: Vec<f64> = (0..len).map(|j| response_formula(spec, j.min(len - j), t)).collect();
    (0..len)
        .map(|m| {
            full.iter()
                .enumerate()
                .map(|(j, hj)| hj * (2.0 * PI * (j * m) as f64 / len as f64).cos())
                .sum::<f64>()
                / len as f64
        })
        .collect()
}

/// Zero-pad to `2T`, circular convolution, keep the first `T` samples.
pub fn dense_filter(spec: &FilterSpec, t: usize) -> Dense {
    let c = circulant_kernel(spec, t);
    let len = 2 * t;
    let mut d = Dense::zeros(t, t);
    for k in 0..t {
        for l in 0..t {
            *d.at(k, l) = c[(k + len - l) % len];
        }
    }
    d
}

/// `dense_filter` applied to every block of `detectors` rows.
pub fn dense_filter_blocks(spec: &FilterSpec, t: usize, detectors: usize) -> Dense {
    let blk = dense_filter(spec, t);
    let mut d = Dense::zeros(detectors * t, detectors * t);
    for m in 0..detectors {
        for i in 0..t {
            for j in 0..t {
                *d.at(m * t + i, m * t + j) = blk.get(i, j);
            }
        }
    }
    d
}
