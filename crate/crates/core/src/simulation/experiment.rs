use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::network::{Network, RecoveryOptions};
use super::population::{generate_population, mark_inactive, PopulationSpec};
use super::SimulationError;
use crate::crypto::{digest_parts, BackendKind, CryptoBackend, ProductionBackend, TestBackend};
use crate::protocol::DistributionConfig;
use crate::sharing::split_rates;

/// PBKDF2 iterations inside Monte-Carlo trials. The derived keys never
/// affect reconstruction, and the default count would dominate run time.
pub const SIM_KDF_ITERATIONS: u32 = 1;

// Independent ChaCha streams of one trial seed.
const POPULATION_STREAM: u64 = 1;
const CRYPTO_STREAM: u64 = 2;
const ACTIVITY_STREAM: u64 = 3;

#[derive(Clone, PartialEq, Debug)]
pub struct ScenarioConfig {
    pub parts: usize,
    pub q: usize,
    pub t_target: f64,
    pub unique_peers: bool,
    pub ts_enabled: bool,
    pub inactive_rate: f64,
    pub trials: usize,
    pub master_seed: u64,
    pub population: PopulationSpec,
    pub crypto: BackendKind,
}

impl ScenarioConfig {
    /// `q = p`, `t_target = 0.7`, non-unique peers, TS on, 70% inactive.
    pub fn new(parts: usize) -> Self {
        ScenarioConfig {
            parts,
            q: parts,
            t_target: 0.7,
            unique_peers: false,
            ts_enabled: true,
            inactive_rate: 0.7,
            trials: 10_000,
            master_seed: 0,
            population: PopulationSpec::default(),
            crypto: BackendKind::Test,
        }
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        if self.parts == 0 || self.q == 0 || self.q > self.parts {
            return Err(SimulationError::InvalidInput(format!(
                "need 1 <= q <= parts, got parts={}, q={}",
                self.parts, self.q
            )));
        }
        if self.trials == 0 {
            return Err(SimulationError::InvalidInput("trials must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.inactive_rate) {
            return Err(SimulationError::InvalidInput(format!("inactive rate {} outside [0, 1]", self.inactive_rate)));
        }
        split_rates(self.t_target, self.parts, self.q)?;
        let mut pop = self.population.clone();
        pop.inactive_rate = 0.0;
        pop.validate()
    }
}

#[derive(Clone, Copy, PartialEq, Debug)]
pub struct TrialOutcome {
    pub full: bool,
    /// Recovered parts over `p`; 1 when `full`.
    pub parts_fraction: f64,
    /// Distribution or recovery aborted on a protocol error.
    pub aborted: bool,
}

#[derive(Clone, Copy, PartialEq, Debug, Default)]
pub struct RateReport {
    pub r: f64,
    pub r75: f64,
    pub r50: f64,
    pub r25: f64,
    pub ra: f64,
    pub trials: usize,
    pub aborted: usize,
}

/// Full recoveries count as `r`. Partial ones fall in `r75` for
/// `0.5 < f < 1`, `r50` for `0.25 < f <= 0.5` and `r25` for `0 < f <= 0.25`.
pub fn bucketize(outcomes: &[TrialOutcome]) -> Result<RateReport, SimulationError> {
    if outcomes.is_empty() {
        return Err(SimulationError::InvalidInput("no outcomes".into()));
    }
    let (mut full, mut c75, mut c50, mut c25, mut aborted) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for o in outcomes {
        aborted += o.aborted as usize;
        let f = o.parts_fraction;
        if o.full {
            full += 1;
        } else if f > 0.5 {
            c75 += 1;
        } else if f > 0.25 {
            c50 += 1;
        } else if f > 0.0 {
            c25 += 1;
        }
    }
    let n = outcomes.len() as f64;
    let (r, r75, r50, r25) = (full as f64 / n, c75 as f64 / n, c50 as f64 / n, c25 as f64 / n);
    Ok(RateReport { r, r75, r50, r25, ra: r + r75 + r50 + r25, trials: outcomes.len(), aborted })
}

/// `SHA-256(master_seed || trial_index)` as a ChaCha8 seed.
pub fn trial_seed(master_seed: u64, trial_index: u64) -> [u8; 32] {
    digest_parts(&[b"trial", &master_seed.to_be_bytes(), &trial_index.to_be_bytes()])
}

fn trial_rng(seed: [u8; 32], stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng
}

/// The backend used by trials of `kind`.
pub fn simulation_backend(kind: BackendKind) -> Arc<dyn CryptoBackend> {
    match kind {
        BackendKind::Test => Arc::new(TestBackend::with_iterations(SIM_KDF_ITERATIONS)),
        BackendKind::Production => Arc::new(ProductionBackend::with_iterations(SIM_KDF_ITERATIONS)),
    }
}

/// One Monte-Carlo trial. Population, key material and peer activity come
/// from separate streams, so configurations differing only in protocol
/// parameters see the same population and the same active peers.
pub fn run_trial(config: &ScenarioConfig, trial_index: u64, backend: &Arc<dyn CryptoBackend>) -> TrialOutcome {
    let seed = trial_seed(config.master_seed, trial_index);
    let mut pop_rng = trial_rng(seed, POPULATION_STREAM);
    let mut crypto_rng = trial_rng(seed, CRYPTO_STREAM);
    let mut activity_rng = trial_rng(seed, ACTIVITY_STREAM);

    let aborted = TrialOutcome { full: false, parts_fraction: 0.0, aborted: true };
    let population = match generate_population(&config.population, &mut pop_rng) {
        Ok(p) => p,
        Err(_) => return aborted,
    };
    let active = mark_inactive(&population.peers, config.inactive_rate, &mut activity_rng);

    let result = (|| -> Result<TrialOutcome, SimulationError> {
        let dist = DistributionConfig {
            rates: split_rates(config.t_target, config.parts, config.q)?,
            unique_peers: config.unique_peers,
            ts_enabled: config.ts_enabled,
        };
        let mut net = Network::build(backend.clone(), &population, config.parts, false, &mut crypto_rng)?;
        net.distribute(&dist, &mut crypto_rng)?;
        let run = net.recover(&RecoveryOptions { active, confirm: true }, &mut crypto_rng)?;
        let full = run.session.storage().is_some();
        Ok(TrialOutcome { full, parts_fraction: run.session.parts_fraction(config.parts), aborted: false })
    })();
    match result {
        Ok(o) => o,
        Err(e) => {
            log::debug!("trial {trial_index} aborted: {e}");
            aborted
        }
    }
}

/// Runs every trial of `config` on `jobs` threads. The result does not
/// depend on `jobs`.
pub fn run_scenario(config: &ScenarioConfig, jobs: usize) -> Result<RateReport, SimulationError> {
    config.validate()?;
    let backend = simulation_backend(config.crypto);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| SimulationError::InvalidInput(e.to_string()))?;
    let outcomes: Vec<TrialOutcome> =
        pool.install(|| (0..config.trials as u64).into_par_iter().map(|i| run_trial(config, i, &backend)).collect());
    bucketize(&outcomes)
}

/// One report per configuration, in input order.
pub fn run_experiment(configs: &[ScenarioConfig], jobs: usize) -> Result<Vec<RateReport>, SimulationError> {
    configs.iter().map(|c| run_scenario(c, jobs)).collect()
}

pub const CSV_HEADER: [&str; 13] = [
    "parts",
    "q",
    "t_target",
    "unique_peers",
    "ts_enabled",
    "inactive_rate",
    "trials",
    "seed",
    "r",
    "r75",
    "r50",
    "r25",
    "ra",
];

pub fn write_csv<W: Write>(out: W, rows: &[(ScenarioConfig, RateReport)]) -> Result<(), SimulationError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for (c, r) in rows {
        w.write_record([
            c.parts.to_string(),
            c.q.to_string(),
            c.t_target.to_string(),
            c.unique_peers.to_string(),
            c.ts_enabled.to_string(),
            c.inactive_rate.to_string(),
            c.trials.to_string(),
            c.master_seed.to_string(),
            format!("{:.5}", r.r),
            format!("{:.5}", r.r75),
            format!("{:.5}", r.r50),
            format!("{:.5}", r.r25),
            format!("{:.5}", r.ra),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parameter sweeps of the four published figures, with `trials` and
/// `seed` applied to every row.
pub fn figure_preset(figure: u8, trials: usize, seed: u64) -> Result<Vec<ScenarioConfig>, SimulationError> {
    let base = |p: usize| ScenarioConfig { trials, master_seed: seed, ..ScenarioConfig::new(p) };
    let rows = match figure {
        3 => (1..=8)
            .flat_map(|p| {
                [true, false].map(|unique_peers| ScenarioConfig { unique_peers, ts_enabled: false, ..base(p) })
            })
            .collect(),
        4 => [1, 2, 4, 8, 12, 16, 20]
            .into_iter()
            .flat_map(|p| [false, true].map(|ts_enabled| ScenarioConfig { ts_enabled, ..base(p) }))
            .collect(),
        5 => [8, 12, 16].into_iter().flat_map(|p| [p, p - 1, p - 2].map(|q| ScenarioConfig { q, ..base(p) })).collect(),
        6 => [0.9, 0.7]
            .into_iter()
            .flat_map(|t_target| [1, 2, 4, 8, 12].map(|p| ScenarioConfig { t_target, ..base(p) }))
            .collect(),
        other => return Err(SimulationError::InvalidInput(format!("unknown figure {other} (expected 3, 4, 5 or 6)"))),
    };
    Ok(rows)
}
