use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pie_core::combiner::{consensus_combine, pie_combine, quantile_table, uniform_grid};
use pie_core::metrics::{quantile_gap, rate_fit, w2_from_tables};
use pie_core::{combine_multidim, Family, QuantileTable};
use pie_harness::config::{ExperimentConfig, Mode, Overrides, SamplerKind};
use pie_harness::data::{read_draws, simulate_linear, simulate_univariate, write_csv};
use pie_harness::experiment::GAP_RANGE;
use pie_harness::report::{check_writable, emit_report, read_intervals, EmitOptions};
use pie_harness::{run_experiment_with_workers, HarnessError, Result};
use serde_json::json;

#[derive(Parser)]
#[command(name = "pie", version, about = "Posterior interval estimation over data shards")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a data set and write it as CSV.
    Simulate {
        #[arg(long)]
        family: Family,
        #[arg(long)]
        n: usize,
        /// True parameter for univariate families.
        #[arg(long)]
        theta0: Option<f64>,
        /// Covariates for the linear model.
        #[arg(long)]
        p: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment from a TOML config and write its report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        sampler: Option<SamplerKind>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        t_total: Option<usize>,
        #[arg(long)]
        grid_size: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// CSV data file instead of simulated data.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output directory (default: config, then $PIE_OUT_DIR, then ./pie-out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for shard sampling (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        overwrite: bool,
        /// Also write timings.json.
        #[arg(long)]
        timings: bool,
    },
    /// Combine per-shard draw files into one quantile table.
    Combine {
        /// One CSV file of draws per shard.
        #[arg(long, num_args = 1.., required = true)]
        draws: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Method::Pie)]
        method: Method,
        /// Parameter column to report.
        #[arg(long, default_value_t = 0)]
        column: usize,
        #[arg(long, default_value_t = pie_core::combiner::DEFAULT_GRID_SIZE)]
        grid_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two quantile tables, or fit a rate to (n, W2) pairs.
    Metrics {
        /// Two quantile table CSV files (columns u,value).
        #[arg(long, num_args = 2)]
        tables: Option<Vec<PathBuf>>,
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        w2: Option<Vec<f64>>,
    },
    /// Print the intervals of a report directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Pie,
    Consensus,
    Multidim,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            family,
            n,
            theta0,
            p,
            seed,
            out,
        } => {
            let data = match (family, theta0, p) {
                (Family::NormalLinearNig, _, Some(p)) => simulate_linear(n, p, seed)?,
                (Family::NormalLinearNig, _, None) => {
                    return Err(HarnessError::Config("linear simulation needs --p".into()))
                }
                (_, Some(theta0), _) => simulate_univariate(family, theta0, n, seed)?,
                (_, None, _) => return Err(HarnessError::Config("univariate simulation needs --theta0".into())),
            };
            let file = std::fs::File::create(&out).map_err(|e| HarnessError::io(&out, e))?;
            write_csv(&data, std::io::BufWriter::new(file)).map_err(|e| HarnessError::io(&out, e))
        }
        Command::Run {
            config,
            mode,
            sampler,
            n,
            k,
            t_total,
            grid_size,
            seeds,
            data,
            out,
            workers,
            overwrite,
            timings,
        } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            cfg.apply(&Overrides {
                mode,
                sampler,
                n,
                k,
                t_total,
                grid_size,
                seeds,
                data_path: data,
                out_dir: out,
                overwrite,
                timings,
            });
            let workers = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let dir = cfg.out_dir();
            let opts = EmitOptions {
                overwrite: cfg.output.overwrite,
                timings: cfg.output.timings,
            };
            check_writable(&dir, opts)?;
            let report = run_experiment_with_workers(&cfg, workers)?;
            let written = emit_report(&report, &dir, opts)?;
            for path in written {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Combine {
            draws,
            method,
            column,
            grid_size,
            seed,
            out,
        } => {
            let shards = draws.iter().map(|p| read_draws(p)).collect::<Result<Vec<_>>>()?;
            if let Some(d) = shards.iter().map(|s| s.d()).find(|d| column >= *d) {
                return Err(HarnessError::Config(format!("column {column} out of range for {d} parameters")));
            }
            let grid = uniform_grid(grid_size);
            let table = match method {
                Method::Pie => {
                    let columns: Vec<Vec<f64>> = shards.iter().map(|s| s.column(column)).collect();
                    pie_combine(&columns, &grid)?.combined
                }
                Method::Consensus => quantile_table(&consensus_combine(&shards)?.column(column), &grid)?,
                Method::Multidim => {
                    let t = shards[0].t();
                    quantile_table(&combine_multidim(&shards, &grid, t, seed)?.column(column), &grid)?
                }
            };
            write_table(&table, out.as_deref())
        }
        Command::Metrics { tables, sizes, w2 } => {
            let value = match (tables, sizes, w2) {
                (Some(paths), None, None) => {
                    let a = read_table(&paths[0])?;
                    let b = read_table(&paths[1])?;
                    let gap = quantile_gap(&a, &b, GAP_RANGE.0, GAP_RANGE.1)
                        .or_else(|_| quantile_gap(&a, &b, 0.0, 1.0))?;
                    json!({ "w2": w2_from_tables(&a, &b)?, "quantile_gap": gap })
                }
                (None, Some(sizes), Some(w2)) => {
                    let fit = rate_fit(&sizes, &w2)?;
                    json!({ "rate_slope": fit.slope, "intercept": fit.intercept })
                }
                _ => {
                    return Err(HarnessError::Config(
                        "give either --tables A B or both --sizes and --w2".into(),
                    ))
                }
            };
            println!("{}", serde_json::to_string_pretty(&value).expect("json"));
            Ok(())
        }
        Command::Report { dir } => {
            let rows = read_intervals(&dir)?;
            println!("{:>6}  {:<16} {:>6}  {:>14}  {:>14}  source", "seed", "functional", "alpha", "lower", "upper");
            for r in rows {
                println!(
                    "{:>6}  {:<16} {:>6}  {:>14.6}  {:>14.6}  {}",
                    r.seed, r.functional, r.alpha, r.lower, r.upper, r.source
                );
            }
            Ok(())
        }
    }
}

fn read_table(path: &Path) -> Result<QuantileTable> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    QuantileTable::read_csv(std::io::BufReader::new(file))
        .map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))
}

fn write_table(table: &QuantileTable, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
            table
                .write_csv(std::io::BufWriter::new(file))
                .map_err(|e| HarnessError::io(path, e))
        }
        None => table
            .write_csv(std::io::stdout().lock())
            .map_err(|e| HarnessError::io("<stdout>", e)),
    }
}
