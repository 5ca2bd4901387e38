//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 configuration error, 3 runtime or
//! numerical error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{FidelityName, RunConfig};
use crate::error::{Error, Result};
use crate::experiment::{
    build_forward, psnr, reconstruct, rel_l2_error, run_comparison,
    simulate_data, write_simulation, NoiseSpec,
};
use crate::filter::{build_filter, compose_filtered_forward, FilterSpec};
use crate::forward::{DetectorGeometry, PatForward, Sinogram, TimeGrid};
use crate::image::{make_paper_phantom, Image, ImageGrid};
use crate::io::{self, fmt_f64, RtkdArray};
use crate::operator::{adjoint_residual, Identity, LinearOperator};
use crate::regularization::{prox_fidelity_conjugate, GradientOperator};
use crate::solver::{solve, SolverConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "relaxed-pat",
    version,
    about = "Photoacoustic reconstruction with filtered data fidelity"
)]
struct Cli {
    /// Overrides the configured noise (and power-iteration) seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FidelityArg {
    L2,
    Delta,
    Gauss,
    Bandpass,
}

impl From<FidelityArg> for FidelityName {
    fn from(f: FidelityArg) -> Self {
        match f {
            FidelityArg::L2 => FidelityName::L2,
            FidelityArg::Delta => FidelityName::Delta,
            FidelityArg::Gauss => FidelityName::Gauss,
            FidelityArg::Bandpass => FidelityName::Bandpass,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum WhichFilter {
    System,
    Gauss,
    Bandpass,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate band-limited noisy data from the phantom.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct an image from an RTKD sinogram.
    Reconstruct {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        fidelity: FidelityArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a reconstruction against a reference image.
    Evaluate {
        #[arg(long)]
        recon: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export a filter's magnitude response as CSV.
    FilterResponse {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        which: WhichFilter,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate once and reconstruct with every configured fidelity.
    RunExperiment {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Adjoint tests, proximal-map oracles and a tiny solve.
    Selftest,
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.noise.seed = s;
    }
    Ok(cfg)
}

fn exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::Config { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    EXIT_OK
                }
                _ => {
                    eprintln!("{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    let stdout = std::io::stdout();
    match dispatch(cli, &mut stdout.lock()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cli: Cli, out: &mut impl Write) -> Result<i32> {
    let seed = cli.seed;
    match cli.command {
        Command::Simulate { config, out: dir } => {
            let cfg = load_config(config.as_deref(), seed)?;
            let forward = build_forward(&cfg)?;
            let phantom = make_paper_phantom(cfg.image_grid()?)?;
            let time = forward.time();
            let psf = build_filter(cfg.filters.system, time.samples(), time.dt())?;
            let noise = NoiseSpec {
                factor: cfg.noise.factor,
                seed: cfg.noise.seed,
                mean_mode: cfg.noise.mean_mode,
            };
            let sim = simulate_data(&phantom, &psf, &noise, &forward)?;
            std::fs::create_dir_all(&dir)?;
            write_simulation(&mut |name| dir.join(name), &phantom, &sim.data)?;
            writeln!(out, "noise std {}", fmt_f64(sim.noise_std))?;
        }
        Command::Reconstruct {
            config,
            data,
            fidelity,
            out: path,
        } => {
            let cfg = load_config(config.as_deref(), seed)?;
            let forward = Arc::new(build_forward(&cfg)?);
            let arr = io::read_array(&data)?;
            let expected = vec![forward.geometry().count(), forward.time().samples()];
            if arr.dims != expected {
                return Err(Error::DimensionMismatch {
                    what: "sinogram file",
                    expected: expected.iter().product(),
                    got: arr.values.len(),
                });
            }
            let sino = Sinogram::from_values(forward.geometry(), forward.time(), arr.values)?;
            let fid = cfg.fidelity(fidelity.into());
            let rec = reconstruct(forward.clone(), &sino, &fid, &cfg.solver_config(), None)?;
            let n = rec.image.grid().n();
            io::write_array(&path, &RtkdArray::new(vec![n, n], rec.image.into_values())?)?;
            writeln!(
                out,
                "fidelity residual {}",
                fmt_f64(rec.fidelity_residual)
            )?;
        }
        Command::Evaluate {
            recon,
            reference,
            out: path,
        } => {
            let x = read_image(&recon)?;
            let r = read_image(&reference)?;
            let csv = format!(
                "psnr,rel_l2_error\n{},{}\n",
                fmt_f64(psnr(&x, &r)?),
                fmt_f64(rel_l2_error(&x, &r)?)
            );
            std::fs::write(&path, &csv)?;
            write!(out, "{csv}")?;
        }
        Command::FilterResponse {
            config,
            which,
            out: path,
        } => {
            let cfg = load_config(config.as_deref(), seed)?;
            let time = cfg.time_grid()?;
            let spec = match which {
                WhichFilter::System => cfg.filters.system,
                WhichFilter::Gauss => cfg.filters.gauss,
                WhichFilter::Bandpass => cfg.filters.bandpass,
            };
            let f = build_filter(spec, time.samples(), time.dt())?;
            std::fs::write(&path, io::frequency_response_csv(&f.frequency_response()))?;
        }
        Command::RunExperiment { config, out: dir } => {
            let cfg = load_config(config.as_deref(), seed)?;
            let report = run_comparison(&cfg, &dir)?;
            write!(out, "{}", report.metrics_csv())?;
        }
        Command::Selftest => {
            return Ok(if selftest(out)? { EXIT_OK } else { EXIT_RUNTIME });
        }
    }
    Ok(EXIT_OK)
}

fn read_image(path: &Path) -> Result<Image> {
    let arr = io::read_array(path)?;
    match arr.dims[..] {
        [a, b] if a == b => Image::from_values(ImageGrid::new(a, 1.0)?, arr.values),
        _ => Err(Error::CorruptFile {
            path: path.to_path_buf(),
            reason: format!("expected a square 2D image, got dims {:?}", arr.dims),
        }),
    }
}

pub const SELFTEST_ADJOINT_TOL: f64 = 1e-10;

/// Quick end-to-end consistency checks. Returns whether all passed.
pub fn selftest(out: &mut impl Write) -> Result<bool> {
    let grid = ImageGrid::new(32, 1.0)?;
    let geometry = DetectorGeometry::new(16, 1.5)?;
    let time = TimeGrid::covering(64, &grid, &geometry, 1.0)?;
    let forward = Arc::new(PatForward::new(grid, geometry, time)?);
    let defaults = RunConfig::default().filters;
    let mut ok = true;
    let mut report = |out: &mut dyn Write, name: &str, value: f64, pass: bool| -> Result<()> {
        ok &= pass;
        writeln!(
            out,
            "{} {name}: {}",
            if pass { "PASS" } else { "FAIL" },
            fmt_f64(value)
        )?;
        Ok(())
    };

    let mut ops: Vec<(String, Arc<dyn LinearOperator>)> = vec![
        ("adjoint pat".into(), forward.clone()),
        ("adjoint gradient".into(), Arc::new(GradientOperator { n: 32 })),
    ];
    for spec in [FilterSpec::Delta, defaults.system, defaults.gauss, defaults.bandpass] {
        let f = build_filter(spec, time.samples(), time.dt())?;
        let op = compose_filtered_forward(f, forward.clone())?;
        ops.push((format!("adjoint filter({}) ∘ pat", spec.name()), Arc::new(op)));
    }
    for (seed, (name, op)) in ops.iter().enumerate() {
        let r = adjoint_residual(op.as_ref(), 5, seed as u64);
        report(out, name, r, r < SELFTEST_ADJOINT_TOL)?;
    }

    // Conjugate fidelity prox: first-order condition (q−p)/σ + b + q/2 = 0.
    let p = [0.3, -1.2, 4.0];
    let b = [1.0, 0.5, -2.0];
    let sigma = 0.7;
    let q = prox_fidelity_conjugate(&p, sigma, &b)?;
    let resid = q
        .iter()
        .zip(p.iter().zip(&b))
        .map(|(qi, (pi, bi))| ((qi - pi) / sigma + bi + qi / 2.0).abs())
        .fold(0.0, f64::max);
    report(out, "fidelity prox optimality", resid, resid < 1e-12)?;

    // min ‖x − b‖² over x >= 0 is max(b, 0).
    let tiny = ImageGrid::new(2, 1.0)?;
    let b = [-1.0, 2.0, 0.5, -0.3];
    let cfg = SolverConfig {
        iterations: 2000,
        alpha: 0.0,
        ..SolverConfig::default()
    };
    let (x, _) = solve(&Identity { len: 4 }, &b, tiny, &cfg, None)?;
    let err = x
        .values()
        .iter()
        .zip(&b)
        .map(|(xi, bi)| (xi - bi.max(0.0)).abs())
        .fold(0.0, f64::max);
    report(out, "tiny nonnegative solve", err, err < 1e-6)?;
    Ok(ok)
}
