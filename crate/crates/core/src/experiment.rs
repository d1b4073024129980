//! Batch experiments: configuration, paired episode runs, aggregation,
//! plot data and the graph-search timing benchmark.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{AgentState, DynamicsLimits, RewardParams};
use crate::error::{Error, Result};
use crate::executor::{run_episode, DirectController, EpisodeConfig, EpisodeMetrics, EpisodeTrace, HhpController};
use crate::planner::{EdgeWeights, EtaBook, RideFanout, TransitGraph};
use crate::policy::{build_policies, read_bundle, write_bundle, PolicyBundle, PolicyConfig};
use crate::rhc::{run_episode_rhc, NominalWeights, RhcParams};
use crate::transit::{advance_epoch, generate_route, BoardThresholds, DreamrState, Fleet, LiveScenario, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Planner {
    Hhp,
    Rhc,
    Direct,
}

impl Planner {
    pub fn name(self) -> &'static str {
        match self {
            Planner::Hhp => "HHP",
            Planner::Rhc => "RHC",
            Planner::Direct => "DIRECT",
        }
    }

    /// Only the hierarchical planner has an abort threshold.
    pub fn uses_beta(self) -> bool {
        self == Planner::Hhp
    }

    pub fn needs_policies(self) -> bool {
        self != Planner::Rhc
    }
}

impl fmt::Display for Planner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Planner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hhp" => Ok(Planner::Hhp),
            "rhc" => Ok(Planner::Rhc),
            "direct" => Ok(Planner::Direct),
            _ => Err(Error::InvalidConfig(format!("unknown planner {s:?}"))),
        }
    }
}

/// Everything a batch needs. Every field has a default, so a config file
/// only lists what it overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub planners: Vec<Planner>,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// Episodes per (planner, alpha, beta) cell.
    pub episodes: u32,
    /// Epochs between periodic replans.
    pub replan_interval: u32,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub out_dir: PathBuf,
    pub policy_dir: PathBuf,
    /// Solve missing policies instead of failing.
    pub build_policies: bool,
    pub ride_fanout: RideFanout,
    pub cf_max_distance: f64,
    pub cf_max_gap: f64,
    pub scenario: ScenarioConfig,
    pub limits: DynamicsLimits,
    pub reward: RewardParams,
    pub thresholds: BoardThresholds,
    pub policy: PolicyConfig,
    pub rhc: RhcParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let policy = PolicyConfig::default();
        Self {
            seed: 1,
            planners: vec![Planner::Hhp, Planner::Rhc, Planner::Direct],
            alphas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            betas: vec![0.75],
            episodes: 100,
            replan_interval: 3,
            jobs: 0,
            out_dir: PathBuf::from("out"),
            policy_dir: PathBuf::from("policies"),
            build_policies: true,
            ride_fanout: RideFanout::All,
            cf_max_distance: policy.cf_position_limit,
            cf_max_gap: policy.horizons as f64 * policy.horizon_dt,
            scenario: ScenarioConfig {
                initial_cars: [50, 200],
                ..ScenarioConfig::default()
            },
            limits: DynamicsLimits::default(),
            reward: RewardParams::default(),
            thresholds: BoardThresholds::default(),
            policy,
            rhc: RhcParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.planners.is_empty() || self.alphas.is_empty() || self.betas.is_empty() {
            return fail("planners, alphas and betas must be non-empty");
        }
        if self.alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return fail("alpha values must lie in [0, 1]");
        }
        if self.betas.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return fail("beta values must lie in [0, 1]");
        }
        if self.episodes < 1 {
            return fail("episodes must be at least 1");
        }
        if self.replan_interval < 1 {
            return fail("the replan interval must be at least 1 epoch");
        }
        self.limits.validate()?;
        self.reward.validate()?;
        self.scenario.validate(&self.limits)?;
        self.policy.validate()?;
        self.rhc.validate()
    }

    pub fn episode_config(&self, alpha: f64) -> EpisodeConfig {
        EpisodeConfig {
            scenario: self.scenario,
            limits: self.limits,
            reward: self.reward.with_alpha(alpha),
            thresholds: self.thresholds,
            noise_sigma: self.policy.sigma(&self.limits),
            replan_interval: self.replan_interval,
            ride_fanout: self.ride_fanout,
            cf_max_distance: self.cf_max_distance,
            cf_max_gap: self.cf_max_gap,
        }
    }

    /// Seed of episode `i`; shared by every cell so planners are paired.
    pub fn episode_seed(&self, i: u32) -> u64 {
        self.seed.wrapping_add(i as u64)
    }

    /// Cells in output order: planner, then alpha, then beta. Planners
    /// without an abort threshold get a single cell per alpha.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &planner in &self.planners {
            for &alpha in &self.alphas {
                if planner.uses_beta() {
                    cells.extend(self.betas.iter().map(|&b| Cell {
                        planner,
                        alpha,
                        beta: Some(b),
                    }));
                } else {
                    cells.push(Cell {
                        planner,
                        alpha,
                        beta: None,
                    });
                }
            }
        }
        cells
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub planner: Planner,
    pub alpha: f64,
    pub beta: Option<f64>,
}

/// Offline policies keyed by alpha, stored under a directory.
pub struct PolicyStore {
    dir: PathBuf,
    bundles: BTreeMap<u64, PolicyBundle>,
}

impl PolicyStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            bundles: BTreeMap::new(),
        }
    }

    /// File holding the policies for `alpha`. The name carries a digest of
    /// every setting the solve depends on.
    pub fn path(&self, config: &ExperimentConfig, alpha: f64) -> PathBuf {
        let key = format!(
            "{:?}|{:?}|{:?}|{:?}",
            config.policy,
            config.reward.with_alpha(alpha),
            config.limits,
            config.thresholds
        );
        let digest = Sha256::digest(key.as_bytes());
        let tag: String = digest[..6].iter().map(|b| format!("{b:02x}")).collect();
        self.dir.join(format!("policies-alpha{alpha:.4}-{tag}.bin"))
    }

    pub fn get(&self, alpha: f64) -> Option<&PolicyBundle> {
        self.bundles.get(&alpha.to_bits())
    }

    pub fn insert(&mut self, bundle: PolicyBundle) {
        self.bundles.insert(bundle.alpha.to_bits(), bundle);
    }

    /// Loads the policies for `alpha`, solving and saving them first when
    /// allowed.
    pub fn load_or_build(&mut self, config: &ExperimentConfig, alpha: f64, allow_build: bool) -> Result<&PolicyBundle> {
        if !self.bundles.contains_key(&alpha.to_bits()) {
            let path = self.path(config, alpha);
            let bundle = if path.exists() {
                read_bundle(&mut BufReader::new(fs::File::open(&path)?))?
            } else if allow_build {
                let bundle = build_bundle(config, alpha)?;
                save_bundle(&path, &bundle)?;
                bundle
            } else {
                return Err(Error::MissingPolicy(path));
            };
            self.insert(bundle);
        }
        Ok(&self.bundles[&alpha.to_bits()])
    }

    /// Loads every policy the batch needs.
    pub fn prepare(&mut self, config: &ExperimentConfig) -> Result<()> {
        if config.planners.iter().any(|p| p.needs_policies()) {
            for &alpha in &config.alphas {
                self.load_or_build(config, alpha, config.build_policies)?;
            }
        }
        Ok(())
    }
}

pub fn build_bundle(config: &ExperimentConfig, alpha: f64) -> Result<PolicyBundle> {
    build_policies(&config.policy, &config.reward.with_alpha(alpha), &config.limits, &config.thresholds)
}

/// Writes through a temporary file so readers never see a partial bundle.
pub fn save_bundle(path: &Path, bundle: &PolicyBundle) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        write_bundle(&mut w, bundle)?;
        std::io::Write::flush(&mut w)?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

/// Runs one episode of `cell` with the given seed.
pub fn run_cell_episode(
    config: &ExperimentConfig,
    cell: Cell,
    seed: u64,
    policies: &PolicyStore,
    record_trace: bool,
) -> Result<(EpisodeMetrics, EpisodeTrace)> {
    let episode = config.episode_config(cell.alpha);
    let (mut source, state, goal) = LiveScenario::new(config.scenario, seed)?;
    let bundle = || {
        policies
            .get(cell.alpha)
            .ok_or_else(|| Error::InvalidConfig(format!("no policies loaded for alpha {}", cell.alpha)))
    };
    match cell.planner {
        Planner::Hhp => {
            let mut c = HhpController::new(bundle()?, cell.beta.unwrap_or(1.0))?;
            run_episode(&mut source, state, goal, &mut c, &episode, seed, record_trace)
        }
        Planner::Direct => {
            let mut c = DirectController { policies: bundle()? };
            run_episode(&mut source, state, goal, &mut c, &episode, seed, record_trace)
        }
        Planner::Rhc => run_episode_rhc(&mut source, state, goal, &episode, config.rhc, seed, record_trace),
    }
}

/// One line of the per-episode table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub planner: Planner,
    pub alpha: f64,
    pub beta: Option<f64>,
    pub episode: u32,
    pub seed: u64,
    pub success: bool,
    pub energy: f64,
    pub time_to_goal: f64,
    pub hop_attempts: u32,
    pub hop_successes: u32,
    pub aborts: u32,
    pub replans: u32,
    pub flight_distance: f64,
    pub ride_epochs: u32,
    pub total_reward: f64,
    pub scenario_hash: String,
}

impl EpisodeRow {
    pub fn new(cell: Cell, episode: u32, seed: u64, m: &EpisodeMetrics) -> Self {
        Self {
            planner: cell.planner,
            alpha: cell.alpha,
            beta: cell.beta,
            episode,
            seed,
            success: m.success,
            energy: m.energy,
            time_to_goal: m.time_to_goal,
            hop_attempts: m.hop_attempts,
            hop_successes: m.hop_successes,
            aborts: m.aborts,
            replans: m.replans,
            flight_distance: m.flight_distance,
            ride_epochs: m.ride_epochs,
            total_reward: m.total_reward,
            scenario_hash: m.scenario_hash.clone(),
        }
    }
}

/// Per-cell means with standard errors of the mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub planner: Planner,
    pub alpha: f64,
    pub beta: Option<f64>,
    pub episodes: u32,
    pub mean_energy: f64,
    pub se_energy: f64,
    pub mean_time: f64,
    pub se_time: f64,
    pub success_rate: f64,
    pub mean_hop_attempts: f64,
    pub se_hop_attempts: f64,
    pub mean_hop_successes: f64,
    pub se_hop_successes: f64,
    /// Successful boardings over attempts, empty when nothing was attempted.
    pub hop_success_rate: Option<f64>,
    pub mean_aborts: f64,
    pub mean_flight_distance: f64,
}

/// Sample mean and `stddev / sqrt(n)`; the error is 0 for a single sample.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Groups rows by cell in first-seen order and summarizes each group.
pub fn aggregate(rows: &[EpisodeRow]) -> Vec<AggregateRow> {
    let mut groups: Vec<(Planner, f64, Option<f64>, Vec<&EpisodeRow>)> = Vec::new();
    for r in rows {
        let key = (r.planner, r.alpha.to_bits(), r.beta.map(f64::to_bits));
        match groups
            .iter_mut()
            .find(|g| (g.0, g.1.to_bits(), g.2.map(f64::to_bits)) == key)
        {
            Some(g) => g.3.push(r),
            None => groups.push((r.planner, r.alpha, r.beta, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|(planner, alpha, beta, rs)| {
            let col = |f: fn(&EpisodeRow) -> f64| rs.iter().map(|r| f(r)).collect::<Vec<_>>();
            let (mean_energy, se_energy) = mean_se(&col(|r| r.energy));
            let (mean_time, se_time) = mean_se(&col(|r| r.time_to_goal));
            let (mean_hop_attempts, se_hop_attempts) = mean_se(&col(|r| r.hop_attempts as f64));
            let (mean_hop_successes, se_hop_successes) = mean_se(&col(|r| r.hop_successes as f64));
            let attempts: u32 = rs.iter().map(|r| r.hop_attempts).sum();
            let successes: u32 = rs.iter().map(|r| r.hop_successes).sum();
            AggregateRow {
                planner,
                alpha,
                beta,
                episodes: rs.len() as u32,
                mean_energy,
                se_energy,
                mean_time,
                se_time,
                success_rate: mean_se(&col(|r| if r.success { 1.0 } else { 0.0 })).0,
                mean_hop_attempts,
                se_hop_attempts,
                mean_hop_successes,
                se_hop_successes,
                hop_success_rate: (attempts > 0).then(|| successes as f64 / attempts as f64),
                mean_aborts: mean_se(&col(|r| r.aborts as f64)).0,
                mean_flight_distance: mean_se(&col(|r| r.flight_distance)).0,
            }
        })
        .collect()
}

/// Energy against time for one planner (and beta) across alpha.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub curve: String,
    pub alpha: f64,
    pub time: f64,
    pub time_se: f64,
    pub energy: f64,
    pub energy_se: f64,
}

/// Hop statistics against beta for one planner and alpha.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopPoint {
    pub curve: String,
    pub beta: f64,
    pub attempts: f64,
    pub attempts_se: f64,
    pub successes: f64,
    pub successes_se: f64,
    pub success_rate: Option<f64>,
}

fn curve_name(planner: Planner, key: &str, value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{planner} {key}={v}"),
        None => planner.to_string(),
    }
}

pub fn tradeoff_points(aggregates: &[AggregateRow]) -> Vec<TradeoffPoint> {
    aggregates
        .iter()
        .map(|a| TradeoffPoint {
            curve: curve_name(a.planner, "beta", a.beta),
            alpha: a.alpha,
            time: a.mean_time,
            time_se: a.se_time,
            energy: a.mean_energy,
            energy_se: a.se_energy,
        })
        .collect()
}

pub fn hop_points(aggregates: &[AggregateRow]) -> Vec<HopPoint> {
    aggregates
        .iter()
        .filter_map(|a| {
            Some(HopPoint {
                curve: curve_name(a.planner, "alpha", Some(a.alpha)),
                beta: a.beta?,
                attempts: a.mean_hop_attempts,
                attempts_se: a.se_hop_attempts,
                successes: a.mean_hop_successes,
                successes_se: a.se_hop_successes,
                success_rate: a.hop_success_rate,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub rows: Vec<EpisodeRow>,
    pub aggregates: Vec<AggregateRow>,
    /// Graph search wall time per row, in row order.
    pub search_times: Vec<Duration>,
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

/// Runs every cell of `config`. Policies must already be in `policies`.
pub fn run_batch(config: &ExperimentConfig, policies: &PolicyStore) -> Result<BatchResult> {
    config.validate()?;
    let tasks: Vec<(Cell, u32)> = config
        .cells()
        .into_iter()
        .flat_map(|c| (0..config.episodes).map(move |i| (c, i)))
        .collect();
    let results: Vec<Result<(EpisodeRow, Duration)>> = thread_pool(config.jobs)?.install(|| {
        tasks
            .par_iter()
            .map(|&(cell, i)| {
                let seed = config.episode_seed(i);
                let (m, _) = run_cell_episode(config, cell, seed, policies, false)?;
                Ok((EpisodeRow::new(cell, i, seed, &m), m.search_time))
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(results.len());
    let mut search_times = Vec::with_capacity(results.len());
    for r in results {
        let (row, t) = r?;
        rows.push(row);
        search_times.push(t);
    }
    let aggregates = aggregate(&rows);
    Ok(BatchResult {
        rows,
        aggregates,
        search_times,
    })
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub const EPISODES_CSV: &str = "episodes.csv";
pub const AGGREGATE_CSV: &str = "aggregate.csv";
pub const TRADEOFF_CSV: &str = "tradeoff.csv";
pub const HOPS_CSV: &str = "hops.csv";
pub const TIMING_CSV: &str = "timing.csv";

/// Writes the aggregate table and both plot-data files for `aggregates`.
pub fn write_summaries(out: &Path, aggregates: &[AggregateRow]) -> Result<()> {
    write_csv(&out.join(AGGREGATE_CSV), aggregates)?;
    write_csv(&out.join(TRADEOFF_CSV), &tradeoff_points(aggregates))?;
    write_csv(&out.join(HOPS_CSV), &hop_points(aggregates))
}

pub fn write_batch(out: &Path, batch: &BatchResult) -> Result<()> {
    write_csv(&out.join(EPISODES_CSV), &batch.rows)?;
    write_summaries(out, &batch.aggregates)
}

/// Recomputes the summaries of a finished batch from its per-episode table.
pub fn report(out: &Path) -> Result<Vec<AggregateRow>> {
    let rows: Vec<EpisodeRow> = read_csv(&out.join(EPISODES_CSV))?;
    let aggregates = aggregate(&rows);
    write_summaries(out, &aggregates)?;
    Ok(aggregates)
}

/// One row of the search timing table, averaged over runs. Times are in
/// milliseconds. Setup covers building the vertex table and the spatial
/// index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub vertices: usize,
    pub cars: u32,
    pub waypoints_per_car: u32,
    pub runs: u32,
    pub setup_ms: f64,
    pub first_search_ms: f64,
    pub first_search_median_ms: f64,
    pub early_min_ms: f64,
    pub early_max_ms: f64,
    pub first_expansions: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingParams {
    pub waypoints_per_car: u32,
    pub runs: u32,
    /// Searches per run; the early range covers the first quarter.
    pub searches: u32,
    pub seed: u64,
}

impl Default for TimingParams {
    fn default() -> Self {
        Self {
            waypoints_per_car: 10,
            runs: 10,
            searches: 20,
            seed: 1,
        }
    }
}

/// A world of exactly `cars` vehicles with `per_car` waypoints each.
fn fixed_fleet(config: &ScenarioConfig, cars: u32, per_car: u32, rng: &mut ChaCha8Rng) -> Result<DreamrState> {
    let fixed = ScenarioConfig {
        waypoints_per_route: [per_car, per_car],
        ..*config
    };
    let routes = (0..cars)
        .map(|id| generate_route(&fixed, rng, 0.0, id).map(|r| (id, r)))
        .collect::<Result<_>>()?;
    let side = config.workspace_side;
    Ok(DreamrState {
        agent: AgentState::at_rest([side / 2.0, side / 2.0]),
        routes,
        riding_on: None,
        epoch: 0,
        time: 0.0,
        // no spawning keeps the vertex count fixed apart from retirements
        fleet: Fleet {
            initial_count: 0,
            next_id: cars,
        },
    })
}

/// Times graph setup and search at each vertex count. Each run builds a
/// fresh world, then searches once per epoch as the ETAs drift.
pub fn timing_benchmark(
    config: &ExperimentConfig,
    vertex_counts: &[usize],
    params: TimingParams,
    weights: Option<&dyn EdgeWeights>,
) -> Result<Vec<TimingRow>> {
    let episode = config.episode_config(config.reward.alpha);
    let nominal = NominalWeights {
        alpha: episode.reward.alpha,
        lambda_d: episode.reward.lambda_d,
        v_max: episode.limits.v_max,
        epoch_dt: episode.scenario.epoch_dt,
    };
    let weights = weights.unwrap_or(&nominal);
    let goal = [config.scenario.workspace_side * 0.9; 2];
    let early = (params.searches as usize).div_ceil(4).max(1);
    let ms = |d: Duration| d.as_secs_f64() * 1e3;
    let mut rows = Vec::new();
    for &target in vertex_counts {
        let cars = (target as u32).div_ceil(params.waypoints_per_car).max(1);
        let (mut setup, mut lo, mut hi) = (0.0, 0.0, 0.0);
        let mut firsts = Vec::with_capacity(params.runs as usize);
        let mut vertices = 0;
        let mut first_expansions = 0;
        for run in 0..params.runs {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(run as u64));
            let mut state = fixed_fleet(&config.scenario, cars, params.waypoints_per_car, &mut rng)?;
            let etas = EtaBook::new();
            let mut early_times = Vec::with_capacity(early);
            for s in 0..params.searches.max(1) {
                let started = Instant::now();
                let graph = TransitGraph::build(&state, goal, &etas, episode.planner_config());
                let built = started.elapsed();
                let searched = Instant::now();
                let (_, stats) = graph.search(weights)?;
                let search = searched.elapsed();
                if s == 0 {
                    setup += ms(built);
                    firsts.push(ms(search));
                    vertices = graph.vertex_count();
                    first_expansions = stats.expanded;
                }
                if (s as usize) < early {
                    early_times.push(ms(search));
                }
                advance_epoch(&mut state, &config.scenario, &mut rng)?;
            }
            lo += early_times.iter().copied().fold(f64::INFINITY, f64::min);
            hi += early_times.iter().copied().fold(0.0, f64::max);
        }
        let n = params.runs.max(1) as f64;
        rows.push(TimingRow {
            vertices,
            cars,
            waypoints_per_car: params.waypoints_per_car,
            runs: params.runs,
            setup_ms: setup / n,
            first_search_ms: firsts.iter().sum::<f64>() / n,
            first_search_median_ms: median(&mut firsts),
            early_min_ms: lo / n,
            early_max_ms: hi / n,
            first_expansions,
        });
    }
    Ok(rows)
}

fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        0.5 * (xs[mid - 1] + xs[mid])
    }
}

/// Least-squares line through `(x, y)`: slope, intercept and R^2.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}
