//! Simulation and fidelity comparison.
//!
//! One band-limited noisy dataset is simulated from the phantom and then
//! reconstructed with each configured data term, all sharing the same data,
//! regularization weight and iteration budget.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde_json::json;

use crate::config::{FidelityName, MeanMode, RunConfig};
use crate::error::{Error, Result, StageExt};
use crate::filter::{build_filter, TemporalFilter};
use crate::forward::{PatForward, Sinogram};
use crate::image::{image_stats, make_paper_phantom, slice_stats, Image};
use crate::io::{self, fmt_f64, RtkdArray};
use crate::operator::{adjoint_residual, norm, NormalStream};
use crate::solver::{make_fidelity_chain, objective, solve, Fidelity, SolveTrace, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub factor: f64,
    pub seed: u64,
    pub mean_mode: MeanMode,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            factor: 0.0,
            seed: 0,
            mean_mode: MeanMode::Abs,
        }
    }
}

/// `len` i.i.d. `N(0, std²)` samples from the seeded stream.
pub fn gaussian_noise(len: usize, std: f64, seed: u64) -> Result<Vec<f64>> {
    if !(std >= 0.0 && std.is_finite()) {
        return Err(Error::param("std", format!("must be finite and >= 0, got {std}")));
    }
    if std == 0.0 {
        return Ok(vec![0.0; len]);
    }
    let mut stream = NormalStream::new(seed);
    Ok((0..len).map(|_| std * stream.next_normal()).collect())
}

#[derive(Debug, Clone)]
pub struct SimulatedData {
    /// `φ_B ∗ₜ A x₀`.
    pub clean: Sinogram,
    /// `clean` plus noise.
    pub data: Sinogram,
    pub noise_std: f64,
}

pub fn noise_level(clean: &Sinogram, noise: &NoiseSpec) -> f64 {
    let stats = slice_stats(clean.values());
    let mean = match noise.mean_mode {
        MeanMode::Abs => stats.mean_abs,
        MeanMode::Raw => stats.mean.abs(),
    };
    noise.factor * mean
}

pub fn simulate_data(
    x0: &Image,
    psf: &TemporalFilter,
    noise: &NoiseSpec,
    forward: &PatForward,
) -> Result<SimulatedData> {
    if !(noise.factor >= 0.0) {
        return Err(Error::param("noise.factor", "must be >= 0"));
    }
    let clean = psf.apply(&forward.forward(x0)?)?;
    let std = noise_level(&clean, noise);
    let z = gaussian_noise(clean.values().len(), std, noise.seed)?;
    let noisy: Vec<f64> = clean.values().iter().zip(&z).map(|(a, b)| a + b).collect();
    Ok(SimulatedData {
        data: clean.with_values(noisy),
        clean,
        noise_std: std,
    })
}

/// `10·log10(peak² / MSE)` with `peak = max(reference)`; `+∞` for identical
/// images.
pub fn psnr(x: &Image, reference: &Image) -> Result<f64> {
    if x.grid() != reference.grid() {
        return Err(Error::mismatch(
            "psnr images",
            reference.values().len(),
            x.values().len(),
        ));
    }
    let peak = image_stats(reference).max;
    if !(peak > 0.0) {
        return Err(Error::InvalidReference(format!(
            "reference peak must be positive, got {peak}"
        )));
    }
    let mse = x
        .values()
        .iter()
        .zip(reference.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / x.values().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

pub fn rel_l2_error(x: &Image, reference: &Image) -> Result<f64> {
    if x.grid() != reference.grid() {
        return Err(Error::mismatch(
            "relative error images",
            reference.values().len(),
            x.values().len(),
        ));
    }
    let r = norm(reference.values());
    if r == 0.0 {
        return Err(Error::InvalidReference("reference has zero norm".into()));
    }
    let d: Vec<f64> = x
        .values()
        .iter()
        .zip(reference.values())
        .map(|(a, b)| a - b)
        .collect();
    Ok(norm(&d) / r)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub psnr: f64,
    pub rel_l2_error: f64,
    /// The run's own data term at the final iterate.
    pub fidelity_residual: f64,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub image: Image,
    pub trace: SolveTrace,
    pub fidelity_residual: f64,
    pub metrics: Option<Metrics>,
}

/// Builds the data term, runs the solver and scores against `truth` when
/// given.
pub fn reconstruct(
    forward: Arc<PatForward>,
    data: &Sinogram,
    fidelity: &Fidelity,
    config: &SolverConfig,
    truth: Option<&Image>,
) -> Result<Reconstruction> {
    let grid = forward.grid();
    let (k1, b) = make_fidelity_chain(fidelity, forward, data)?;
    let (image, trace) = solve(k1.as_ref(), &b, grid, config, None)?;
    let fidelity_residual = objective(&image, k1.as_ref(), &b, config.alpha)?.fidelity;
    let metrics = truth
        .map(|t| -> Result<Metrics> {
            Ok(Metrics {
                psnr: psnr(&image, t)?,
                rel_l2_error: rel_l2_error(&image, t)?,
                fidelity_residual,
            })
        })
        .transpose()?;
    Ok(Reconstruction {
        image,
        trace,
        fidelity_residual,
        metrics,
    })
}

pub fn build_forward(config: &RunConfig) -> Result<PatForward> {
    PatForward::new(config.image_grid()?, config.geometry()?, config.time_grid()?)
}

#[derive(Debug, Clone)]
pub struct FidelityRun {
    pub name: FidelityName,
    pub image: Image,
    pub trace: SolveTrace,
    pub metrics: Metrics,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub phantom: Image,
    pub simulated: SimulatedData,
    pub runs: Vec<FidelityRun>,
    pub forward_adjoint_residual: f64,
}

impl ComparisonReport {
    pub fn run(&self, name: FidelityName) -> Option<&FidelityRun> {
        self.runs.iter().find(|r| r.name == name)
    }

    /// Header `fidelity,psnr,rel_l2_error,fidelity_residual,wall_seconds`.
    pub fn metrics_csv(&self) -> String {
        let mut s = String::from("fidelity,psnr,rel_l2_error,fidelity_residual,wall_seconds\n");
        for r in &self.runs {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.name.as_str(),
                fmt_f64(r.metrics.psnr),
                fmt_f64(r.metrics.rel_l2_error),
                fmt_f64(r.metrics.fidelity_residual),
                fmt_f64(r.wall_seconds),
            ));
        }
        s
    }
}

pub const ADJOINT_TEST_PAIRS: usize = 5;

/// Simulation and all reconstructions, without touching the filesystem.
pub fn compare(config: &RunConfig) -> Result<ComparisonReport> {
    config.validate()?;
    let timer = |start: Instant| {
        if config.record_timing {
            start.elapsed().as_secs_f64()
        } else {
            0.0
        }
    };

    let grid = config.image_grid().stage("setup")?;
    let forward = Arc::new(build_forward(config).stage("setup")?);
    let phantom = make_paper_phantom(grid).stage("phantom")?;
    let time = forward.time();
    let psf = build_filter(config.filters.system, time.samples(), time.dt()).stage("simulate")?;
    let noise = NoiseSpec {
        factor: config.noise.factor,
        seed: config.noise.seed,
        mean_mode: config.noise.mean_mode,
    };
    let simulated = simulate_data(&phantom, &psf, &noise, &forward).stage("simulate")?;
    let forward_adjoint_residual =
        adjoint_residual(forward.as_ref(), ADJOINT_TEST_PAIRS, config.noise.seed);

    let solver = config.solver_config();
    let mut runs = Vec::with_capacity(config.fidelities.len());
    for &name in &config.fidelities {
        let start = Instant::now();
        let rec = reconstruct(
            forward.clone(),
            &simulated.data,
            &config.fidelity(name),
            &solver,
            Some(&phantom),
        )
        .stage("reconstruct")?;
        runs.push(FidelityRun {
            name,
            image: rec.image,
            trace: rec.trace,
            metrics: rec.metrics.expect("truth supplied"),
            wall_seconds: timer(start),
        });
    }
    Ok(ComparisonReport {
        phantom,
        simulated,
        runs,
        forward_adjoint_residual,
    })
}

fn image_array(x: &Image) -> RtkdArray {
    let n = x.grid().n();
    RtkdArray {
        dims: vec![n, n],
        values: x.values().to_vec(),
    }
}

fn sinogram_array(s: &Sinogram) -> RtkdArray {
    RtkdArray {
        dims: vec![s.geometry().count(), s.time().samples()],
        values: s.values().to_vec(),
    }
}

/// Records written files so a failed run can remove them.
struct OutputSet {
    dir: PathBuf,
    created_dir: bool,
    written: Vec<PathBuf>,
}

impl OutputSet {
    fn new(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created_dir,
            written: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    fn discard(self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

pub fn write_simulation(
    out: &mut impl FnMut(&str) -> PathBuf,
    phantom: &Image,
    data: &Sinogram,
) -> Result<()> {
    io::write_array(&out("phantom.rtkd"), &image_array(phantom))?;
    io::export_pgm(phantom, &out("phantom.pgm"))?;
    io::write_array(&out("sinogram.rtkd"), &sinogram_array(data))?;
    Ok(())
}

fn write_report(
    files: &mut OutputSet,
    config: &RunConfig,
    report: &ComparisonReport,
) -> Result<()> {
    write_simulation(&mut |name| files.path(name), &report.phantom, &report.simulated.data)?;
    for run in &report.runs {
        let tag = run.name.as_str();
        io::write_array(&files.path(&format!("recon_{tag}.rtkd")), &image_array(&run.image))?;
        io::export_pgm(&run.image, &files.path(&format!("recon_{tag}.pgm")))?;
        io::write_text(&files.path(&format!("trace_{tag}.csv")), &run.trace.to_csv())?;
    }
    io::write_text(&files.path("metrics.csv"), &report.metrics_csv())?;

    let runs: Vec<_> = report
        .runs
        .iter()
        .map(|r| {
            json!({
                "fidelity": r.name.as_str(),
                "operator_norm": r.trace.operator_norm,
                "sigma": r.trace.sigma,
                "tau": r.trace.tau,
                "wall_seconds": r.wall_seconds,
            })
        })
        .collect();
    let meta = json!({
        "format_version": "1",
        "config": config.to_json(),
        "noise_std": report.simulated.noise_std,
        "adjoint_test": {
            "operator": "pat",
            "pairs": ADJOINT_TEST_PAIRS,
            "max_relative_residual": report.forward_adjoint_residual,
        },
        "runs": runs,
    });
    let text = serde_json::to_string_pretty(&meta).expect("meta is serializable");
    io::write_text(&files.path("meta.json"), &(text + "\n"))?;
    Ok(())
}

/// Runs [`compare`] and writes every artifact into `out_dir`. On failure the
/// files written so far are removed.
pub fn run_comparison(config: &RunConfig, out_dir: &Path) -> Result<ComparisonReport> {
    let report = compare(config)?;
    let mut files = OutputSet::new(out_dir).stage("write")?;
    match write_report(&mut files, config, &report).stage("write") {
        Ok(()) => Ok(report),
        Err(e) => {
            files.discard();
            Err(e)
        }
    }
}
