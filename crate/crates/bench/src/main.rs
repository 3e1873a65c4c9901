use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use procrustes_core::geodata::{diffusion_operator, median_bandwidth, PointCloud};
use procrustes_core::learn::WeightParams;
use procrustes_core::metrics::{gles_distance, les_distance};
use procrustes_core::spectral::{top_k_spectrum, SpectrumMethod};

use procrustes_bench::config::{BenchmarkConfig, Method};
use procrustes_bench::runner::{run_convergence_suite, run_learned_benchmark, run_tori_benchmark, trial_clouds};
use procrustes_bench::{output, BenchError};

#[derive(Parser)]
#[command(name = "procrustes", version, about = "Procrustes distances on tori diffusion spectra")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Args)]
struct Common {
    /// TOML file with benchmark settings; defaults are used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory. Results go to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

impl Common {
    fn load(&self) -> Result<BenchmarkConfig, BenchError> {
        let mut cfg = match &self.config {
            Some(path) => BenchmarkConfig::load(path)?,
            None => BenchmarkConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(method) = self.method {
            cfg.method = method;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn emit(&self, name: &str, contents: &str) -> Result<(), BenchError> {
        let Format::Csv = self.format;
        match &self.out {
            Some(dir) => output::write_file(dir, name, contents),
            None => {
                print!("{contents}");
                Ok(())
            }
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the four clouds of one trial for every scale in `c_grid`.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Distance between the diffusion spectra of two point-cloud files.
    Distance {
        #[command(flatten)]
        common: Common,
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 100.0)]
        rho: f64,
        /// `learned_weights.csv` from `learn`; unit weights when absent.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Sweep `c_grid` and `rho_grid` over all trials.
    Bench {
        #[command(flatten)]
        common: Common,
    },
    /// `d(C + P/n, C)` for GBW and BW over a grid of `n`.
    Converge {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        dim: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,10,100,1000")]
        n_grid: Vec<u64>,
    },
    /// Learn GLES weights on even trials and evaluate them on odd trials.
    Learn {
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<(), BenchError> {
    match command {
        Command::Generate { common, trial } => {
            let cfg = common.load()?;
            let dir = common
                .out
                .as_deref()
                .ok_or_else(|| BenchError::Config("generate needs --out".into()))?;
            for scale in 0..cfg.c_grid.len() {
                let clouds = trial_clouds(&cfg, trial, scale)?;
                for (label, cloud) in ["t2", "t2sc", "t3", "t3sc"].iter().zip(&clouds) {
                    output::write_file(dir, &format!("trial{trial}_c{}_{label}.txt", cfg.c_grid[scale]), &cloud.to_text())?;
                }
            }
            Ok(())
        }
        Command::Distance { common, a, b, rho, weights } => {
            let cfg = common.load()?;
            let spectra = [spectrum(&cfg, &a)?, spectrum(&cfg, &b)?];
            let value = match cfg.method {
                Method::Les => les_distance(&spectra[0], &spectra[1], cfg.k)?.value,
                Method::Gles | Method::GlesLearned => {
                    let w = match weights {
                        Some(path) => read_weights(&path)?,
                        None => WeightParams::from_omega(&vec![1.0; cfg.k])?,
                    };
                    if w.len() != cfg.k {
                        return Err(BenchError::Config(format!("{} weights for K = {}", w.len(), cfg.k)));
                    }
                    gles_distance(&spectra[0], cfg.delta, &spectra[1], cfg.gamma, &w.metric_weight(rho)?, cfg.k)?.value
                }
            };
            println!("{value}");
            Ok(())
        }
        Command::Bench { common } => {
            let cfg = common.load()?;
            if cfg.method == Method::GlesLearned {
                return learn(&common, &cfg);
            }
            let report = run_tori_benchmark(&cfg)?;
            for f in &report.failures {
                eprintln!("trial {} failed: {}", f.trial, f.error);
            }
            common.emit("results.csv", &output::results_csv(&report.rows))?;
            report.check_failures()
        }
        Command::Converge { common, dim, n_grid } => {
            let cfg = common.load()?;
            let rows = run_convergence_suite(dim, &n_grid, cfg.seed)?;
            common.emit("convergence.csv", &output::convergence_csv(&rows))
        }
        Command::Learn { common } => {
            let mut cfg = common.load()?;
            cfg.method = Method::GlesLearned;
            learn(&common, &cfg)
        }
    }
}

fn learn(common: &Common, cfg: &BenchmarkConfig) -> Result<(), BenchError> {
    let learn = cfg.learn_config();
    let report = run_learned_benchmark(cfg, &learn)?;
    for f in &report.learned.failures {
        eprintln!("trial {} failed: {}", f.trial, f.error);
    }
    common.emit("results.csv", &output::results_csv(&report.learned.rows))?;
    if common.out.is_some() {
        let mut baseline = report.initial.rows.clone();
        for row in &mut baseline {
            row.method = Method::Gles;
        }
        common.emit("baseline.csv", &output::results_csv(&baseline))?;
        common.emit("learned_weights.csv", &output::weights_csv(&report.outcome.weights, learn.rho))?;
        common.emit("loss_trace.csv", &output::loss_trace_csv(&report.outcome.loss_trace))?;
    }
    report.learned.check_failures()
}

fn spectrum(cfg: &BenchmarkConfig, path: &Path) -> Result<Vec<f64>, BenchError> {
    let text = std::fs::read_to_string(path)?;
    let cloud: PointCloud = text.parse()?;
    if cloud.len() < cfg.k {
        return Err(BenchError::Config(format!("{} has {} points, fewer than K = {}", path.display(), cloud.len(), cfg.k)));
    }
    let epsilon = match cfg.bandwidth {
        Some(b) => b,
        None => median_bandwidth(&cloud)?,
    };
    let op = diffusion_operator(&cloud, epsilon, cfg.k_affinity)?;
    Ok(top_k_spectrum(op.matrix(), cfg.k, &SpectrumMethod::Exact)?)
}

fn read_weights(path: &Path) -> Result<WeightParams, BenchError> {
    output::parse_weights(&std::fs::read_to_string(path)?)
}
