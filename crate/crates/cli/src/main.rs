use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use dreamr::experiment::{
    linear_fit, report, run_batch, run_cell_episode, timing_benchmark, write_batch, write_csv, AggregateRow, ExperimentConfig, Planner,
    PolicyStore, TimingParams, EPISODES_CSV, TIMING_CSV,
};
use dreamr::planner::ValueWeights;
use dreamr::Result;

#[derive(Parser)]
#[command(name = "dreamr", version, about = "Multimodal routing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve and save the flight policies for every configured alpha.
    BuildPolicies(Common),
    /// Run a batch of paired episodes and write the result tables.
    Run {
        #[command(flatten)]
        common: Common,
        /// Also write the epoch-by-epoch trace of these episode indices.
        #[arg(long, value_delimiter = ',')]
        trace: Vec<u32>,
    },
    /// Time graph setup and search against the vertex count.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Vertex counts to benchmark.
        #[arg(long, value_delimiter = ',', default_value = "1000,2000,5000")]
        vertices: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        runs: u32,
        /// Use value-function weights from the policies of the first alpha.
        #[arg(long)]
        value_weights: bool,
    },
    /// Recompute the summary tables from an existing per-episode table.
    Report {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; omitted fields keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    planner: Vec<Planner>,
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    beta: Vec<f64>,
    #[arg(long)]
    episodes: Option<u32>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    policy_dir: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.out_dir = out.clone();
        }
        if !self.planner.is_empty() {
            config.planners = self.planner.clone();
        }
        if !self.alpha.is_empty() {
            config.alphas = self.alpha.clone();
        }
        if !self.beta.is_empty() {
            config.betas = self.beta.clone();
        }
        if let Some(episodes) = self.episodes {
            config.episodes = episodes;
        }
        if let Some(jobs) = self.jobs {
            config.jobs = jobs;
        }
        if let Some(dir) = &self.policy_dir {
            config.policy_dir = dir.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

fn print_aggregates(rows: &[AggregateRow]) {
    println!(
        "{:<7} {:>5} {:>5} {:>5} {:>16} {:>16} {:>7} {:>7} {:>7}",
        "planner", "alpha", "beta", "n", "energy", "time (s)", "success", "hops", "boarded"
    );
    for a in rows {
        let beta = a.beta.map_or("-".to_string(), |b| format!("{b}"));
        println!(
            "{:<7} {:>5} {:>5} {:>5} {:>9.3} ±{:<6.3} {:>9.1} ±{:<6.1} {:>7.2} {:>7.2} {:>7.2}",
            a.planner.name(),
            a.alpha,
            beta,
            a.episodes,
            a.mean_energy,
            a.se_energy,
            a.mean_time,
            a.se_time,
            a.success_rate,
            a.mean_hop_attempts,
            a.mean_hop_successes
        );
    }
}

fn build(config: &ExperimentConfig) -> Result<()> {
    let mut store = PolicyStore::new(&config.policy_dir);
    for &alpha in &config.alphas {
        let started = Instant::now();
        let path = store.path(config, alpha);
        store.load_or_build(config, alpha, true)?;
        eprintln!("alpha {alpha}: {} ({:.1} s)", path.display(), started.elapsed().as_secs_f64());
    }
    Ok(())
}

fn run(config: &ExperimentConfig, traces: &[u32]) -> Result<()> {
    let mut store = PolicyStore::new(&config.policy_dir);
    store.prepare(config)?;
    let started = Instant::now();
    let batch = run_batch(config, &store)?;
    write_batch(&config.out_dir, &batch)?;
    eprintln!(
        "{} episodes in {:.1} s, tables in {}",
        batch.rows.len(),
        started.elapsed().as_secs_f64(),
        config.out_dir.display()
    );
    print_aggregates(&batch.aggregates);
    for &i in traces {
        for cell in config.cells() {
            let (_, trace) = run_cell_episode(config, cell, config.episode_seed(i), &store, true)?;
            let beta = cell.beta.map_or(String::new(), |b| format!("-beta{b}"));
            let name = format!("trace-{}-alpha{}{beta}-ep{i}.txt", cell.planner.name().to_lowercase(), cell.alpha);
            fs::write(config.out_dir.join(name), trace.to_text())?;
        }
    }
    Ok(())
}

fn bench(config: &ExperimentConfig, vertices: &[usize], runs: u32, value_weights: bool) -> Result<()> {
    let params = TimingParams {
        runs,
        seed: config.seed,
        ..TimingParams::default()
    };
    let mut store = PolicyStore::new(&config.policy_dir);
    let rows = if value_weights {
        let bundle = store.load_or_build(config, config.alphas[0], config.build_policies)?;
        let weights = ValueWeights {
            policies: bundle,
            beta: config.betas[0],
        };
        timing_benchmark(config, vertices, params, Some(&weights))?
    } else {
        timing_benchmark(config, vertices, params, None)?
    };
    write_csv(&config.out_dir.join(TIMING_CSV), &rows)?;
    println!(
        "{:>7} {:>10} {:>12} {:>12} {:>18}",
        "|V|", "setup ms", "first ms", "median ms", "first 25% ms"
    );
    for r in &rows {
        println!(
            "{:>7} {:>10.3} {:>12.3} {:>12.3} {:>8.3} - {:<8.3}",
            r.vertices, r.setup_ms, r.first_search_ms, r.first_search_median_ms, r.early_min_ms, r.early_max_ms
        );
    }
    if rows.len() >= 2 {
        let xs: Vec<f64> = rows.iter().map(|r| r.vertices as f64).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.setup_ms).collect();
        let (slope, _, r2) = linear_fit(&xs, &ys);
        println!("setup fit: {:.3} us per vertex, R^2 = {r2:.4}", slope * 1e3);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::BuildPolicies(common) => common.resolve().and_then(|c| build(&c)),
        Command::Run { common, trace } => common.resolve().and_then(|c| run(&c, trace)),
        Command::Bench {
            common,
            vertices,
            runs,
            value_weights,
        } => common.resolve().and_then(|c| bench(&c, vertices, *runs, *value_weights)),
        Command::Report { out } => report(out).map(|rows| {
            eprintln!("recomputed from {}", out.join(EPISODES_CSV).display());
            print_aggregates(&rows);
        }),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
