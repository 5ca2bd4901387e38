mod common;

use std::sync::Arc;

use common::*;
use relaxed_pat::filter::{build_filter, FilterSpec};
use relaxed_pat::forward::{DetectorGeometry, PatForward, Sinogram, TimeGrid};
use relaxed_pat::image::{Image, ImageGrid};
use relaxed_pat::operator::{Identity, LinearOperator};
use relaxed_pat::solver::{make_fidelity_chain, objective, solve, Fidelity, SolverConfig, NORM_MARGIN};
use relaxed_pat::Error;

struct DenseOp(Dense);

impl LinearOperator for DenseOp {
    fn domain_len(&self) -> usize {
        self.0.cols
    }
    fn range_len(&self) -> usize {
        self.0.rows
    }
    fn describe(&self) -> String {
        "dense".into()
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.0.mul(x));
    }
    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.0.mul_t(y));
    }
}

const B: [f64; 4] = [-1.0, 2.0, 0.5, -0.3];

fn tiny(iterations: usize) -> (Image, relaxed_pat::solver::SolveTrace) {
    let cfg = SolverConfig {
        iterations,
        alpha: 0.0,
        ..SolverConfig::default()
    };
    solve(&Identity { len: 4 }, &B, ImageGrid::new(2, 1.0).unwrap(), &cfg, None).unwrap()
}

fn dist_to_minimizer(x: &Image) -> f64 {
    let m: Vec<f64> = B.iter().map(|b| b.max(0.0)).collect();
    norm(&x.values().iter().zip(&m).map(|(a, b)| a - b).collect::<Vec<_>>())
}

#[test]
fn identity_closed_form() {
    let (x, trace) = tiny(2000);
    for (xi, bi) in x.values().iter().zip(&B) {
        assert!((xi - bi.max(0.0)).abs() < 1e-6, "{xi} vs {bi}");
    }
    assert!(dist_to_minimizer(&tiny(10).0) >= 10.0 * dist_to_minimizer(&x));
    // σ·τ·L² ≤ 1 with the 1% margin.
    let l = trace.operator_norm;
    assert!(trace.sigma * trace.tau * l * l <= 1.0);
    assert!((trace.sigma - 1.0 / (l * NORM_MARGIN)).abs() < 1e-15);
    assert_eq!(trace.len(), 200);
    assert_eq!(*trace.iterations.last().unwrap(), 2000);
}

fn small_forward() -> Arc<PatForward> {
    let grid = ImageGrid::new(16, 1.0).unwrap();
    let geom = DetectorGeometry::new(16, 1.5).unwrap();
    let time = TimeGrid::covering(48, &grid, &geom, 1.0).unwrap();
    Arc::new(PatForward::new(grid, geom, time).unwrap())
}

fn blob(grid: ImageGrid) -> Image {
    let n = grid.n();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let (x, y) = grid.pixel_center(i, j);
            v[i * n + j] = (-((x - 0.2).powi(2) + (y + 0.1).powi(2)) / 0.08).exp()
                + 0.5 * (-((x + 0.3).powi(2) + (y - 0.3).powi(2)) / 0.02).exp();
        }
    }
    Image::from_values(grid, v).unwrap()
}

#[test]
fn consistent_data_fit() {
    let a = small_forward();
    let x0 = blob(a.grid());
    let b = a.apply(x0.values()).unwrap();
    let cfg = SolverConfig {
        iterations: 3000,
        alpha: 1e-12,
        trace_every: 100,
        ..SolverConfig::default()
    };
    let (x, trace) = solve(a.as_ref(), &b, a.grid(), &cfg, None).unwrap();
    let fid = objective(&x, a.as_ref(), &b, cfg.alpha).unwrap().fidelity;
    assert!(fid < 1e-8 * dot(&b, &b), "fidelity {fid}, |b|² {}", dot(&b, &b));
    assert!(x.values().iter().all(|&v| v >= 0.0));
    let start = objective(&Image::zeros(a.grid()), a.as_ref(), &b, cfg.alpha).unwrap();
    assert!(trace.objective.last().unwrap() <= &start.total);
}

#[test]
fn delta_chain_tracks_l2() {
    let a = small_forward();
    let x0 = blob(a.grid());
    let clean = a.forward(&x0).unwrap();
    let noisy: Vec<f64> = clean
        .values()
        .iter()
        .zip(random_vec(clean.values().len(), 3))
        .map(|(c, z)| c + 0.5 * z)
        .collect();
    let y = Sinogram::from_values(a.geometry(), a.time(), noisy).unwrap();
    let (k_l2, b_l2) = make_fidelity_chain(&Fidelity::L2, a.clone(), &y).unwrap();
    let (k_d, b_d) = make_fidelity_chain(&Fidelity::Filtered(FilterSpec::Delta), a.clone(), &y).unwrap();
    assert_eq!(b_l2, y.values());
    assert!(max_abs_diff(&b_l2, &b_d) < 1e-15 * max_abs(&b_l2));

    let cfg = SolverConfig {
        iterations: 300,
        alpha: 1e-2,
        trace_every: 1,
        ..SolverConfig::default()
    };
    let (x1, t1) = solve(k_l2.as_ref(), &b_l2, a.grid(), &cfg, None).unwrap();
    let (x2, t2) = solve(k_d.as_ref(), &b_d, a.grid(), &cfg, None).unwrap();
    assert_eq!(t1.iterations, t2.iterations);
    for k in 0..t1.len() {
        assert!((t1.objective[k] - t2.objective[k]).abs() < 1e-12 * t1.objective[k].abs());
        assert!((t1.tv[k] - t2.tv[k]).abs() < 1e-12 * t1.tv[k].abs().max(1.0));
    }
    assert!(max_abs_diff(x1.values(), x2.values()) < 1e-12 * max_abs(x1.values()));
}

#[test]
fn filtered_chain_matches_definition() {
    let a = small_forward();
    let y = Sinogram::from_values(
        a.geometry(),
        a.time(),
        random_vec(a.range_len(), 12),
    )
    .unwrap();
    let spec = FilterSpec::Bandpass {
        f_lo: 0.08,
        f_hi: 0.35,
    };
    let (k1, b) = make_fidelity_chain(&Fidelity::Filtered(spec), a.clone(), &y).unwrap();
    let f = build_filter(spec, a.time().samples(), a.time().dt()).unwrap();
    for seed in 0..3 {
        let x = random_vec(a.domain_len(), 40 + seed);
        let r: Vec<f64> = a
            .apply(&x)
            .unwrap()
            .iter()
            .zip(y.values())
            .map(|(p, q)| p - q)
            .collect();
        let mut fr = vec![0.0; r.len()];
        f.apply_rows(&r, &mut fr);
        let want = dot(&fr, &fr);
        let img = Image::from_values(a.grid(), x).unwrap();
        let got = objective(&img, k1.as_ref(), &b, 0.0).unwrap().fidelity;
        assert!((got - want).abs() < 1e-12 * want);
    }
}

#[test]
fn objective_dense_oracle() {
    let grid = ImageGrid::new(8, 1.0).unwrap();
    let mut d = Dense::zeros(30, 64);
    d.a = random_vec(30 * 64, 5);
    let op = DenseOp(d.clone());
    let x: Vec<f64> = random_vec(64, 6).iter().map(|v| v.abs()).collect();
    let b = random_vec(30, 7);
    let alpha = 0.37;

    let r: Vec<f64> = d.mul(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
    let fid = dot(&r, &r);
    let mut tv = 0.0;
    for i in 0..8 {
        for j in 0..8 {
            let gx = if j < 7 { x[i * 8 + j + 1] - x[i * 8 + j] } else { 0.0 };
            let gy = if i < 7 { x[(i + 1) * 8 + j] - x[i * 8 + j] } else { 0.0 };
            tv += gx.hypot(gy);
        }
    }
    let img = Image::from_values(grid, x.clone()).unwrap();
    let o = objective(&img, &op, &b, alpha).unwrap();
    assert!((o.fidelity - fid).abs() < 1e-12 * fid);
    assert!((o.tv - tv).abs() < 1e-12 * tv);
    assert!((o.total - (fid + alpha * tv)).abs() < 1e-12 * o.total);
    assert!(o.feasible);

    let o0 = objective(&img, &op, &b, 0.0).unwrap();
    assert_eq!(o0.total, o0.fidelity);

    let mut neg = x;
    neg[3] = -1e-9;
    let o = objective(&Image::from_values(grid, neg).unwrap(), &op, &b, alpha).unwrap();
    assert!(!o.feasible && o.total == f64::INFINITY);

    // Exact fit with a constant image: both terms vanish.
    let c = Image::from_values(grid, vec![0.25; 64]).unwrap();
    let bc = d.mul(c.values());
    assert_eq!(objective(&c, &op, &bc, alpha).unwrap().total, 0.0);
}

#[test]
fn trace_csv_layout() {
    let (_, trace) = tiny(25);
    let csv = trace.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "iter,objective,fidelity,tv,step_norm");
    assert_eq!(lines.len(), 1 + 3);
    assert!(lines[3].starts_with("25,"));
    for line in &lines[1..] {
        for field in line.split(',').skip(1) {
            assert!(field.parse::<f64>().unwrap().is_finite());
        }
    }
}

#[test]
fn divergence_is_reported() {
    let cfg = SolverConfig {
        iterations: 10,
        alpha: 0.0,
        trace_every: 1,
        ..SolverConfig::default()
    };
    let huge = [1e300; 4];
    let r = solve(&Identity { len: 4 }, &huge, ImageGrid::new(2, 1.0).unwrap(), &cfg, None);
    assert!(matches!(r, Err(Error::Divergence { iteration: 1 })), "{r:?}");
}

#[test]
fn config_validation() {
    let grid = ImageGrid::new(2, 1.0).unwrap();
    let id = Identity { len: 4 };
    for cfg in [
        SolverConfig {
            iterations: 0,
            ..SolverConfig::default()
        },
        SolverConfig {
            alpha: -1.0,
            ..SolverConfig::default()
        },
        SolverConfig {
            theta: 1.5,
            ..SolverConfig::default()
        },
    ] {
        assert!(solve(&id, &B, grid, &cfg, None).is_err());
    }
    assert!(solve(&id, &B[..3], grid, &SolverConfig::default(), None).is_err());
}

#[test]
fn warm_start_is_projected() {
    let grid = ImageGrid::new(2, 1.0).unwrap();
    let init = Image::from_values(grid, vec![-5.0, 1.0, 1.0, 1.0]).unwrap();
    let cfg = SolverConfig {
        iterations: 1,
        alpha: 0.0,
        ..SolverConfig::default()
    };
    let (x, _) = solve(&Identity { len: 4 }, &B, grid, &cfg, Some(&init)).unwrap();
    assert!(x.values().iter().all(|&v| v >= 0.0));
}
