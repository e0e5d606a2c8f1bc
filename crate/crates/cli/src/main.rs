use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use credregion::statespace::Sampler;
use credregion_cli::error::{CliError, EXIT_CONFIG, EXIT_NUMERICAL};
use credregion_cli::pipeline::{self, RunOptions};
use credregion_cli::{Config, RegionReport};

#[derive(Debug, Parser)]
#[command(name = "credregion", version, about = "Credible-region size and credibility for ML estimators")]
struct Cli {
    /// Caps the number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Uses rounded expected counts instead of sampled ones.
    #[arg(long, global = true)]
    deterministic_counts: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SamplerArg {
    BoundingBox,
    MinorDisk,
}

impl From<SamplerArg> for Sampler {
    fn from(s: SamplerArg) -> Self {
        match s {
            SamplerArg::BoundingBox => Sampler::BoundingBox,
            SamplerArg::MinorDisk => Sampler::MinorDisk,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// ML estimate, region case and analytic size/credibility curves.
    Certify {
        config: PathBuf,
        /// Directory for report.json and curve.csv; JSON goes to stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certify, then estimate the same curves by Monte Carlo or quadrature.
    Validate {
        config: PathBuf,
        #[arg(long)]
        n_samples: Option<usize>,
        /// Seed of the validation sampler.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Uniform samples from a state space as CSV.
    Sample {
        space: String,
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = SamplerArg::BoundingBox)]
        sampler: SamplerArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact and sampled volume of a state space.
    Volume {
        space: String,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = SamplerArg::BoundingBox)]
        sampler: SamplerArg,
    },
    /// Checks special-function identities over fixed grids.
    SpecfunSelftest,
}

fn write_or_print(report: &RegionReport, out: Option<PathBuf>) -> Result<(), CliError> {
    match out {
        Some(dir) => report.write_to(&dir),
        None => {
            println!("{}", report.to_json());
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let opts = RunOptions {
        deterministic_counts: cli.deterministic_counts,
    };
    match cli.command {
        Command::Certify { config, out } => {
            let config = Config::from_path(&config)?;
            let report = pipeline::certify(&config, opts)?;
            write_or_print(&report, out)?;
        }
        Command::Validate {
            config,
            n_samples,
            seed,
            out,
        } => {
            let mut config = Config::from_path(&config)?;
            if let Some(n) = n_samples {
                config.n_samples = n;
            }
            if let Some(s) = seed {
                config.mc_seed = s;
            }
            let report = pipeline::validate(&config, opts)?;
            if let Some(d) = &report.discrepancy {
                eprintln!(
                    "window [{:e}, {:e}]: max|Δc| = {:.3e} (z {:.2}), max|Δs| = {:.3e} (z {:.2}), λ_crit {:.4e} vs {:.4e}",
                    d.lambda_lo,
                    d.lambda_hi,
                    d.max_abs_c,
                    d.max_z_c,
                    d.max_abs_s,
                    d.max_z_s,
                    d.lambda_crit_analytic,
                    d.lambda_crit_estimate
                );
                if d.exhausted_points > 0 {
                    eprintln!("resolution exhausted at {} points", d.exhausted_points);
                }
            }
            write_or_print(&report, out)?;
        }
        Command::Sample {
            space,
            count,
            seed,
            sampler,
            out,
        } => {
            let (set, csv) = pipeline::sample(&space, count, seed, sampler.into())?;
            eprintln!(
                "{} accepted of {} attempts, yield {:.6e}",
                set.accepted(),
                set.attempts,
                set.yield_fraction()
            );
            match out {
                Some(path) => std::fs::write(&path, csv).map_err(|e| CliError::io(path.display().to_string(), e))?,
                None => print!("{csv}"),
            }
        }
        Command::Volume {
            space,
            samples,
            seed,
            sampler,
        } => {
            let report = pipeline::volume(&space, samples, seed, sampler.into())?;
            println!("{}", serde_json::to_string_pretty(&report).expect("volume report serializes"));
        }
        Command::SpecfunSelftest => {
            let checks = pipeline::specfun_selftest();
            let mut ok = true;
            for c in &checks {
                let verdict = if c.passed() { "PASS" } else { "FAIL" };
                println!(
                    "{verdict} {:<22} cases={:<6} max_error={:.3e} tolerance={:.0e}",
                    c.name, c.cases, c.max_error, c.tolerance
                );
                ok &= c.passed();
            }
            if !ok {
                return Ok(EXIT_NUMERICAL);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
