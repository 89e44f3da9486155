//! Experiment orchestration: enumerate configurations, fan replicated runs out
//! over a worker pool, and fold the results into per-edge-count statistics.
//!
//! Every run's seed is a pure function of `(master_seed, config_id,
//! population, replication)`, so the result set does not depend on the worker
//! count or on scheduling.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::economy::{self, EconomyError, EconomyParams, EndowmentPolicy, Money};
use crate::network::{ConfigId, ConfigSpace, Directedness, NetworkError};

/// Configuration spaces larger than this are refused unless the plan samples
/// them or explicitly asks for exhaustion.
pub const EXHAUSTIVE_CONFIG_LIMIT: u128 = 65_535;

/// Configurations handed to the pool at once; results are emitted in order
/// after each batch.
const BATCH_CONFIGS: usize = 64;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Economy(#[from] EconomyError),
    #[error("invalid sweep plan: {0}")]
    InvalidPlan(String),
    #[error("plan line {line}: {message}")]
    PlanParse { line: usize, message: String },
    #[error("results mix node counts {0} and {1}")]
    MixedNodeCounts(usize, usize),
    #[error("failed to build worker pool: {0}")]
    Pool(String),
    #[error("output error: {0}")]
    Output(#[from] std::io::Error),
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one run.
///
/// SplitMix64 is applied to the master seed and then re-applied after XOR-ing
/// in each of `config_id`, `population` and `replication` in turn. Every
/// round is a bijection on `u64`, so tuples that differ only in their last
/// component always get different seeds.
pub fn derive_seed(master_seed: u64, config_id: ConfigId, population: usize, replication: usize) -> u64 {
    let mut h = splitmix64(master_seed);
    h = splitmix64(h ^ config_id.0);
    h = splitmix64(h ^ population as u64);
    splitmix64(h ^ replication as u64)
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// A half-open `[start, end)` range of config masks, written `A..B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConfigRange {
    pub start: u64,
    pub end: u64,
}

impl FromStr for ConfigRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once("..")
            .ok_or_else(|| format!("config range `{s}` must look like A..B"))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<u64>()
                .map_err(|_| format!("bad config range bound `{t}`"))
        };
        let (start, end) = (parse(a)?, parse(b)?);
        if start > end {
            return Err(format!("config range `{s}` is reversed"));
        }
        Ok(Self { start, end })
    }
}

impl fmt::Display for ConfigRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepPlan {
    pub n: usize,
    pub directedness: Directedness,
    pub populations: Vec<usize>,
    pub replications: usize,
    /// `population` here is ignored; each run uses one of `populations`.
    pub economy: EconomyParams,
    pub master_seed: u64,
    pub config_range: Option<ConfigRange>,
    /// Run only this many configurations, drawn uniformly without
    /// replacement.
    pub sample: Option<usize>,
    /// Allow exhausting spaces above [`EXHAUSTIVE_CONFIG_LIMIT`].
    pub exhaustive: bool,
}

impl Default for SweepPlan {
    fn default() -> Self {
        Self {
            n: 4,
            directedness: Directedness::Directed,
            populations: vec![25, 50],
            replications: 20,
            economy: EconomyParams::default(),
            master_seed: 1,
            config_range: None,
            sample: None,
            exhaustive: false,
        }
    }
}

impl SweepPlan {
    pub fn space(&self) -> Result<ConfigSpace, SweepError> {
        Ok(ConfigSpace::new(self.n, self.directedness)?)
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        let fail = |m: &str| Err(SweepError::InvalidPlan(m.into()));
        if self.replications == 0 {
            return fail("replications must be at least 1");
        }
        if self.populations.is_empty() {
            return fail("populations must not be empty");
        }
        for &population in &self.populations {
            EconomyParams {
                population,
                ..self.economy.clone()
            }
            .validate()?;
        }
        let space = self.space()?;
        space.mask_end()?;
        let count = space.config_count()?;
        if count > EXHAUSTIVE_CONFIG_LIMIT
            && self.sample.is_none()
            && self.config_range.is_none()
            && !self.exhaustive
        {
            return Err(SweepError::InvalidPlan(format!(
                "{count} configurations; pass a sample size, a config range, or request exhaustive mode"
            )));
        }
        Ok(())
    }

    /// Configurations this plan runs, ascending.
    pub fn configs(&self) -> Result<Vec<ConfigId>, SweepError> {
        let space = self.space()?;
        let (start, end) = match self.config_range {
            Some(r) => (r.start.max(1), r.end.min(space.mask_end()?)),
            None => (1, space.mask_end()?),
        };
        let Some(k) = self.sample else {
            return Ok(space.configs_in(start, end)?.collect());
        };
        let len = end.saturating_sub(start);
        if k as u64 >= len {
            return Ok(space.configs_in(start, end)?.collect());
        }
        let len = usize::try_from(len)
            .map_err(|_| SweepError::InvalidPlan("config range too large to sample".into()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.master_seed, ConfigId(u64::MAX), 0, 0));
        let mut picked: Vec<ConfigId> = rand::seq::index::sample(&mut rng, len, k)
            .into_iter()
            .map(|offset| ConfigId(start + offset as u64))
            .collect();
        picked.sort_unstable();
        Ok(picked)
    }

    /// Total number of runs the plan executes.
    pub fn run_count(&self) -> Result<usize, SweepError> {
        Ok(self.configs()?.len() * self.populations.len() * self.replications)
    }

    /// Parses the flat `key = value` plan format. Unknown keys are errors;
    /// missing keys keep their defaults.
    pub fn from_kv(text: &str) -> Result<Self, SweepError> {
        let mut plan = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| SweepError::PlanParse {
                line: idx + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            plan.set(key.trim(), value.trim()).map_err(err)?;
        }
        Ok(plan)
    }

    /// Sets one plan key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
            value
                .parse()
                .map_err(|_| format!("`{value}` is not a valid value for {key}"))
        }
        match key {
            "n" => self.n = num(key, value)?,
            "directed" => self.directedness = Directedness::from_directed_flag(num(key, value)?),
            "populations" => {
                self.populations = value
                    .split(',')
                    .map(|p| num(key, p.trim()))
                    .collect::<Result<_, _>>()?
            }
            "replications" => self.replications = num(key, value)?,
            "steps" => self.economy.steps = num(key, value)?,
            "burn_in" => self.economy.burn_in = num(key, value)?,
            "price" => self.economy.price = num(key, value)?,
            "initial_wealth" => self.economy.initial_wealth = num(key, value)?,
            "endowment" => {
                self.economy.endowment = value.parse::<EndowmentPolicy>().map_err(|e| e.to_string())?
            }
            "seller_attempts" => self.economy.seller_attempts = num(key, value)?,
            "master_seed" => self.master_seed = num(key, value)?,
            "config_range" => {
                self.config_range = match value {
                    "" | "all" => None,
                    v => Some(v.parse()?),
                }
            }
            "sample" => {
                self.sample = match value {
                    "" | "none" => None,
                    v => Some(num(key, v)?),
                }
            }
            "exhaustive" => self.exhaustive = num(key, value)?,
            other => return Err(format!("unknown plan key `{other}`")),
        }
        Ok(())
    }

    /// Canonical rendering; [`SweepPlan::from_kv`] reads it back unchanged.
    pub fn to_kv(&self) -> String {
        let populations: Vec<String> = self.populations.iter().map(|p| p.to_string()).collect();
        let e = &self.economy;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        put("n", self.n.to_string());
        put("directed", self.directedness.is_directed().to_string());
        put("populations", populations.join(","));
        put("replications", self.replications.to_string());
        put("steps", e.steps.to_string());
        put("burn_in", e.burn_in.to_string());
        put("price", e.price.to_string());
        put("initial_wealth", e.initial_wealth.to_string());
        put("endowment", e.endowment.to_string());
        put("seller_attempts", e.seller_attempts.to_string());
        put("master_seed", self.master_seed.to_string());
        put(
            "config_range",
            self.config_range.map_or("all".into(), |r| r.to_string()),
        );
        put("sample", self.sample.map_or("none".into(), |k| k.to_string()));
        put("exhaustive", self.exhaustive.to_string());
        out
    }

    /// 64-bit FNV-1a of the canonical rendering without `config_range`, so
    /// shards of one sweep share a hash.
    pub fn plan_hash(&self) -> u64 {
        let unsharded = SweepPlan {
            config_range: None,
            ..self.clone()
        };
        fnv1a64(unsharded.to_kv().as_bytes())
    }
}

/// One replicated run, as written to the results CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config_id: ConfigId,
    pub n: usize,
    pub edge_count: usize,
    pub density: f64,
    pub population: usize,
    pub replication: usize,
    pub seed: u64,
    pub mean_step_gdp: f64,
    pub total_gdp: Money,
}

impl RunRecord {
    pub fn sort_key(&self) -> (u64, usize, usize) {
        (self.config_id.0, self.population, self.replication)
    }
}

fn run_config(
    plan: &SweepPlan,
    space: &ConfigSpace,
    config_id: ConfigId,
    population: usize,
) -> Result<Vec<RunRecord>, SweepError> {
    let net = space.to_network(config_id)?;
    let params = EconomyParams {
        population,
        ..plan.economy.clone()
    };
    (0..plan.replications)
        .map(|replication| {
            let seed = derive_seed(plan.master_seed, config_id, population, replication);
            let result = economy::run(&net, &params, seed)?;
            Ok(RunRecord {
                config_id,
                n: plan.n,
                edge_count: net.edge_count(),
                density: net.density(),
                population,
                replication,
                seed,
                mean_step_gdp: result.mean_step_gdp,
                total_gdp: result.total_gdp,
            })
        })
        .collect()
}

/// Executes the plan on `workers` threads, feeding records to `sink` in
/// `(config_id, population, replication)` order. The sink runs on the calling
/// thread only; an error from it aborts the sweep.
pub fn execute_sweep<F>(plan: &SweepPlan, workers: usize, mut sink: F) -> Result<usize, SweepError>
where
    F: FnMut(&RunRecord) -> std::io::Result<()>,
{
    plan.validate()?;
    let space = plan.space()?;
    let configs = plan.configs()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| SweepError::Pool(e.to_string()))?;
    let mut emitted = 0;
    for batch in configs.chunks(BATCH_CONFIGS) {
        let tasks: Vec<(ConfigId, usize)> = batch
            .iter()
            .flat_map(|&c| plan.populations.iter().map(move |&p| (c, p)))
            .collect();
        let mut records: Vec<RunRecord> = pool.install(|| {
            tasks
                .par_iter()
                .map(|&(config, population)| run_config(plan, &space, config, population))
                .collect::<Result<Vec<_>, _>>()
        })?
        .into_iter()
        .flatten()
        .collect();
        records.sort_by_key(RunRecord::sort_key);
        for record in &records {
            sink(record)?;
            emitted += 1;
        }
        log::debug!("swept {emitted} runs");
    }
    Ok(emitted)
}

/// [`execute_sweep`] collected into memory.
pub fn run_sweep(plan: &SweepPlan, workers: usize) -> Result<Vec<RunRecord>, SweepError> {
    let mut out = Vec::with_capacity(plan.run_count().unwrap_or(0));
    execute_sweep(plan, workers, |r| {
        out.push(r.clone());
        Ok(())
    })?;
    Ok(out)
}

/// Mean GDP of one configuration at one population, over its replications.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSummary {
    pub config_id: ConfigId,
    pub edge_count: usize,
    pub population: usize,
    pub replications: usize,
    pub mean_gdp: f64,
}

fn node_count_of(results: &[RunRecord]) -> Result<Option<usize>, SweepError> {
    let mut n = None;
    for r in results {
        match n {
            None => n = Some(r.n),
            Some(m) if m != r.n => return Err(SweepError::MixedNodeCounts(m, r.n)),
            _ => {}
        }
    }
    Ok(n)
}

/// Per-configuration means, keyed by `(population, config_id)`. Independent
/// of input order: replications are summed in replication order.
pub fn config_means(results: &[RunRecord]) -> BTreeMap<(usize, ConfigId), ConfigSummary> {
    let mut by_config: BTreeMap<(usize, ConfigId), (usize, Vec<(usize, u64)>)> = BTreeMap::new();
    for r in results {
        let entry = by_config
            .entry((r.population, r.config_id))
            .or_insert_with(|| (r.edge_count, Vec::new()));
        entry.1.push((r.replication, r.mean_step_gdp.to_bits()));
    }
    by_config
        .into_iter()
        .map(|((population, config_id), (edge_count, mut reps))| {
            reps.sort_unstable();
            let sum: f64 = reps.iter().map(|&(_, bits)| f64::from_bits(bits)).sum();
            let summary = ConfigSummary {
                config_id,
                edge_count,
                population,
                replications: reps.len(),
                mean_gdp: sum / reps.len() as f64,
            };
            ((population, config_id), summary)
        })
        .collect()
}

/// Statistics of one edge-count group at one population.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub edge_count: usize,
    pub density: f64,
    /// `0` marks a group pooled across populations.
    pub population: usize,
    pub mean_of_means: f64,
    pub min_gdp: f64,
    pub max_gdp: f64,
    /// Normal approximation, `1.96 * s / sqrt(k)` over the `k` per-config
    /// means; zero when `k == 1`.
    pub ci95_half_width: f64,
    pub config_count: usize,
}

fn group_stats(edge_count: usize, n: usize, population: usize, means: &[f64]) -> GroupStats {
    let k = means.len() as f64;
    let mean = means.iter().sum::<f64>() / k;
    let min = means.iter().copied().fold(f64::INFINITY, f64::min);
    let max = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ci = if means.len() > 1 {
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (k - 1.0);
        1.96 * var.sqrt() / k.sqrt()
    } else {
        0.0
    };
    GroupStats {
        edge_count,
        density: edge_count as f64 / (n * (n - 1)) as f64,
        population,
        // Guard the ordering invariant against summation rounding.
        mean_of_means: mean.clamp(min, max),
        min_gdp: min,
        max_gdp: max,
        ci95_half_width: ci,
        config_count: means.len(),
    }
}

/// Groups per-config means by `(edge_count, population)`. Any permutation of
/// `results` yields identical output, ordered by edge count then population.
pub fn aggregate(results: &[RunRecord]) -> Result<Vec<GroupStats>, SweepError> {
    let Some(n) = node_count_of(results)? else {
        return Ok(Vec::new());
    };
    let mut groups: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for summary in config_means(results).values() {
        groups
            .entry((summary.edge_count, summary.population))
            .or_default()
            .push(summary.mean_gdp);
    }
    Ok(groups
        .into_iter()
        .map(|((edges, population), means)| group_stats(edges, n, population, &means))
        .collect())
}

/// Like [`aggregate`], but each configuration's value is first averaged over
/// the populations it was run at. Reported with `population == 0`.
pub fn aggregate_pooled(results: &[RunRecord]) -> Result<Vec<GroupStats>, SweepError> {
    let Some(n) = node_count_of(results)? else {
        return Ok(Vec::new());
    };
    let mut per_config: BTreeMap<ConfigId, (usize, Vec<f64>)> = BTreeMap::new();
    for summary in config_means(results).values() {
        per_config
            .entry(summary.config_id)
            .or_insert_with(|| (summary.edge_count, Vec::new()))
            .1
            .push(summary.mean_gdp);
    }
    let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (edges, means) in per_config.into_values() {
        let pooled = means.iter().sum::<f64>() / means.len() as f64;
        groups.entry(edges).or_default().push(pooled);
    }
    Ok(groups
        .into_iter()
        .map(|(edges, means)| group_stats(edges, n, 0, &means))
        .collect())
}

/// Edge-count groups the plan should produce but `stats` lacks, each logged
/// as a warning.
pub fn missing_groups(plan: &SweepPlan, stats: &[GroupStats]) -> Result<Vec<(usize, usize)>, SweepError> {
    let space = plan.space()?;
    let step = if plan.directedness.is_directed() { 1 } else { 2 };
    let max_edges = plan.n * (plan.n - 1);
    let mut missing = Vec::new();
    for edges in (step..=max_edges).step_by(step) {
        for &population in &plan.populations {
            let present = stats
                .iter()
                .any(|g| g.edge_count == edges && g.population == population);
            if !present {
                log::warn!(
                    "no results for edge count {edges} at population {population} ({} slots); group omitted",
                    space.slot_count()
                );
                missing.push((edges, population));
            }
        }
    }
    Ok(missing)
}
