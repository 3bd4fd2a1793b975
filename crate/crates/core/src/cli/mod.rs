//! Command-line front end: argument parsing, configuration loading and the
//! mapping of outcomes to exit codes.

pub mod commands;
pub mod config;
pub mod raster;
pub mod verify;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::Error;
use crate::recon::StrainMode;
use commands::{ReconInputs, SinogramFlags};
use config::RunConfig;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "PARALLAX_DXT_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "parallax-dxt",
    version,
    about = "Parallax simulation and mean-strain reconstruction for diffraction tomography"
)]
pub struct Cli {
    /// Configuration file (`[section]` headers, `key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the intensity, strain-offset and mask rasters of the phantom.
    Phantom,
    /// Write the per-voxel parallax offset at one rotation angle.
    ParallaxMap {
        /// Rotation angle in degrees.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        phi: f64,
    },
    /// Project the phantom into intensity and first-moment sinograms.
    Sinogram {
        /// Include the parallax contribution.
        #[arg(long)]
        parallax: bool,
        /// Include the strain contribution.
        #[arg(long)]
        strain: bool,
        /// Also run the curve-resolved simulation and compare.
        #[arg(long)]
        oracle: bool,
    },
    /// Reconstruct the mean strain offset from sinogram rasters.
    Reconstruct {
        /// Intensity sinogram (default: `<out>/sino_m0.f32`).
        m0: Option<PathBuf>,
        /// Normalized first-moment sinogram (default: `<out>/sino_m1.f32`).
        m1: Option<PathBuf>,
        /// Overrides `[recon] mode`.
        #[arg(long)]
        mode: Option<StrainMode>,
        /// Ground-truth raster to score against.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Run the acceptance checks and print a PASS/FAIL table.
    Verify,
}

fn load(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let outcome = match cli.command {
        Command::Phantom => commands::cmd_phantom(&cfg),
        Command::ParallaxMap { phi } => commands::cmd_parallax_map(&cfg, phi),
        Command::Sinogram {
            parallax,
            strain,
            oracle,
        } => commands::cmd_sinogram(
            &cfg,
            SinogramFlags {
                parallax,
                strain,
                oracle,
            },
        ),
        Command::Reconstruct { m0, m1, mode, truth } => {
            let mut cfg = cfg;
            if let Some(mode) = mode {
                cfg.recon.mode = mode;
            }
            commands::cmd_reconstruct(&cfg, &ReconInputs { m0, m1, truth })
        }
        Command::Verify => commands::cmd_verify(&cfg),
    };
    match outcome {
        Ok(o) => {
            print!("{}", o.report);
            if o.passed {
                EXIT_OK
            } else {
                EXIT_CHECK_FAILED
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

/// Worker count from [`THREADS_ENV`], if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}
