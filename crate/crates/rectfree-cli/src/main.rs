//! Command-line front end for the rectangular free probability toolkit.
//!
//! Subcommands: `transform` tabulates the rectangular R-transform and the
//! moment diffeomorphism on a z-grid, `integral` the spherical-integral limit
//! on a theta-grid (quadrature and closed form, or Monte Carlo with `--mc`),
//! `convolve` the squared-moment table of a rectangular free convolution,
//! `cumulant` the rectangular cumulant sequence, and `verify` the acceptance
//! suite. Exit codes: 0 success, 1 verification failure, 2 config or IO
//! error. Out-of-domain grid cells are reported as nulls with a warning, not
//! as failures.

mod commands;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use table::Format;

/// Inclusive uniform grid given on the command line as `start:stop:count`.
#[derive(Clone, Copy, Debug)]
pub struct Grid {
    start: f64,
    stop: f64,
    count: usize,
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                if i + 1 == self.count {
                    self.stop
                } else {
                    self.start + step * i as f64
                }
            })
            .collect()
    }
}

fn parse_grid(text: &str) -> Result<Grid, String> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("expected START:STOP:COUNT, got {text:?}"));
    }
    let start: f64 = parts[0].parse().map_err(|_| format!("bad grid start {:?}", parts[0]))?;
    let stop: f64 = parts[1].parse().map_err(|_| format!("bad grid stop {:?}", parts[1]))?;
    let count: usize = parts[2].parse().map_err(|_| format!("bad grid count {:?}", parts[2]))?;
    if !start.is_finite() || !stop.is_finite() {
        return Err("grid endpoints must be finite".into());
    }
    if count == 0 {
        return Err("grid needs at least one point".into());
    }
    Ok(Grid { start, stop, count })
}

#[derive(Parser)]
#[command(name = "rectfree", version, about = "Rectangular free probability toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutputArgs {
    /// Write the table to this file instead of stdout
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
    /// Output format
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
pub struct TransformArgs {
    /// Measure file (JSON)
    #[arg(long, value_name = "PATH")]
    measure: PathBuf,
    /// Aspect ratio in [0, 1]
    #[arg(long)]
    lambda: f64,
    /// Field parameter: 1 real, 2 complex
    #[arg(long, default_value_t = 1)]
    beta: u8,
    /// Evaluation grid START:STOP:COUNT, inclusive endpoints
    #[arg(long, value_name = "A:B:N", value_parser = parse_grid, allow_hyphen_values = true)]
    z_grid: Grid,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
pub struct IntegralArgs {
    /// Measure file (JSON)
    #[arg(long, value_name = "PATH")]
    measure: PathBuf,
    /// Aspect ratio in [0, 1]
    #[arg(long)]
    lambda: f64,
    /// Field parameter: 1 real, 2 complex
    #[arg(long, default_value_t = 1)]
    beta: u8,
    /// Evaluation grid START:STOP:COUNT, strictly inside (-beta/K, beta/K)
    #[arg(long, value_name = "A:B:N", value_parser = parse_grid, allow_hyphen_values = true)]
    theta_grid: Grid,
    /// Estimate by Monte Carlo instead of quadrature and closed form
    #[arg(long)]
    mc: bool,
    /// Matrix rows (Monte Carlo)
    #[arg(long, default_value_t = 64)]
    n: usize,
    /// Matrix columns (Monte Carlo)
    #[arg(long, default_value_t = 128)]
    m: usize,
    /// Monte Carlo sample count
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Monte Carlo seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
pub struct ConvolveArgs {
    /// Measure file (JSON); pass exactly twice
    #[arg(long, value_name = "PATH")]
    measure: Vec<PathBuf>,
    /// Aspect ratio in [0, 1]
    #[arg(long)]
    lambda: f64,
    /// Number of squared moments to report
    #[arg(long, default_value_t = 12)]
    order: usize,
    /// Append empirical moments from the rotated-sum matrix model
    #[arg(long)]
    mc_check: bool,
    /// Field parameter for the matrix model: 1 real, 2 complex
    #[arg(long, default_value_t = 1)]
    beta: u8,
    /// Matrix rows (with --mc-check)
    #[arg(long, default_value_t = 300)]
    n: usize,
    /// Matrix columns (with --mc-check)
    #[arg(long, default_value_t = 600)]
    m: usize,
    /// Matrix realizations to average (with --mc-check)
    #[arg(long, default_value_t = 20)]
    samples: usize,
    /// Seed for the matrix realizations
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
pub struct CumulantArgs {
    /// Measure file (JSON)
    #[arg(long, value_name = "PATH")]
    measure: PathBuf,
    /// Aspect ratio in [0, 1]
    #[arg(long)]
    lambda: f64,
    /// Number of cumulants to report
    #[arg(long, default_value_t = 12)]
    order: usize,
    /// Also estimate c_2 from the matrix model (fills extra columns on k = 1)
    #[arg(long)]
    mc: bool,
    /// Field parameter for the matrix model: 1 real, 2 complex
    #[arg(long, default_value_t = 1)]
    beta: u8,
    /// Matrix rows (with --mc)
    #[arg(long, default_value_t = 64)]
    n: usize,
    /// Matrix columns (with --mc)
    #[arg(long, default_value_t = 128)]
    m: usize,
    /// Monte Carlo sample count (with --mc)
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Monte Carlo seed (with --mc)
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
pub struct VerifyArgs {
    /// Comma-separated criterion ids to run (default: all ten)
    #[arg(long, value_delimiter = ',', value_name = "IDS")]
    criteria: Vec<usize>,
    /// Development hook: multiply every tolerance by this factor
    #[arg(long, default_value_t = 1.0)]
    tolerance_scale: f64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate C, H and H^-1 on a z-grid
    ///
    /// Columns: z, C, H, H_inv and, for lambda 0 or 1 only, R, the classical
    /// R-transform side of the matching corollary (equal to C wherever both
    /// are defined). Cells outside a transform's domain are null.
    Transform(TransformArgs),
    /// Limit of the normalized spherical integral on a theta-grid
    ///
    /// Columns: theta, I_quadrature, I_closed_form, discrepancy; with --mc
    /// instead: theta, I_hat, std_error, n, m, samples. The grid must lie
    /// strictly inside (-beta/K, beta/K) for support bound K.
    Integral(IntegralArgs),
    /// Squared moments of the rectangular free convolution of two measures
    ///
    /// Columns: k, moment; with --mc-check also moment_mc and rel_error
    /// (absolute error when the predicted moment is zero).
    Convolve(ConvolveArgs),
    /// Rectangular cumulants of one measure
    ///
    /// Columns: k, c_2k; with --mc also c2_estimate and std_error, filled on
    /// the k = 1 row only.
    Cumulant(CumulantArgs),
    /// Run the acceptance suite and report per-criterion results
    ///
    /// Prints one line per criterion; --format json emits the full report as
    /// JSON instead. Exits 1 if any requested criterion fails.
    Verify(VerifyArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Transform(args) => commands::transform(&args),
        Command::Integral(args) => commands::integral(&args),
        Command::Convolve(args) => commands::convolve(&args),
        Command::Cumulant(args) => commands::cumulant(&args),
        Command::Verify(args) => commands::verify(&args),
    };
    match result {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints_are_inclusive_and_exact() {
        let g = parse_grid("0:2:5").unwrap();
        assert_eq!(g.points(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        let g = parse_grid("0.1:0.30000000000000004:3").unwrap();
        let pts = g.points();
        assert_eq!(pts[0], 0.1);
        assert_eq!(*pts.last().unwrap(), 0.30000000000000004);
    }

    #[test]
    fn single_point_grid() {
        assert_eq!(parse_grid("1.5:9:1").unwrap().points(), vec![1.5]);
    }

    #[test]
    fn descending_grid() {
        assert_eq!(parse_grid("1:-1:3").unwrap().points(), vec![1.0, 0.0, -1.0]);
    }

    #[test]
    fn malformed_grids_are_rejected() {
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("0:1:0").is_err());
        assert!(parse_grid("a:1:3").is_err());
        assert!(parse_grid("0:inf:3").is_err());
    }
}
