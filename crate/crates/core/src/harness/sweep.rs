//! Parameter sweeps with seed replication.
//!
//! Replication `r` of every sweep point runs seed `run.seed + r`, so all
//! points of a sweep share their RSU layouts, demands and fading draws and
//! differ only in the swept parameter.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::association::NetworkMetrics;
use crate::error::{Error, Result};
use crate::harness::config::ScenarioConfig;
use crate::harness::scenario::run_scenario;
use crate::ledger::{Address, EntityKind, EntityRecord, LedgerChain};
use crate::seed;

/// Entities queued before mining one block in a gas-limit sweep.
pub const GAS_SWEEP_QUEUE: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepParam {
    Bandwidth,
    DroneCount,
    Backhaul,
    MaxLinks,
    Density,
    BlockGasLimit,
}

impl SweepParam {
    pub const ALL: [SweepParam; 6] = [
        SweepParam::Bandwidth,
        SweepParam::DroneCount,
        SweepParam::Backhaul,
        SweepParam::MaxLinks,
        SweepParam::Density,
        SweepParam::BlockGasLimit,
    ];

    /// Config key the parameter overrides.
    pub fn key(self) -> &'static str {
        match self {
            SweepParam::Bandwidth => "constraints.bandwidth_per_drone_hz",
            SweepParam::DroneCount => "geometry.drone_count",
            SweepParam::Backhaul => "constraints.backhaul_rate_bps",
            SweepParam::MaxLinks => "constraints.max_links_per_drone",
            SweepParam::Density => "geometry.rsu_density_per_m2",
            SweepParam::BlockGasLimit => "ledger.block_gas_limit",
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            SweepParam::Bandwidth => "bandwidth",
            SweepParam::DroneCount => "drones",
            SweepParam::Backhaul => "backhaul",
            SweepParam::MaxLinks => "tau",
            SweepParam::Density => "density",
            SweepParam::BlockGasLimit => "gas_limit",
        }
    }

    fn is_integer(self) -> bool {
        matches!(
            self,
            SweepParam::DroneCount | SweepParam::MaxLinks | SweepParam::BlockGasLimit
        )
    }

    /// Copy of `config` with the parameter set to `value`.
    pub fn apply(self, config: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let literal = if self.is_integer() {
            if !(value >= 0.0 && value.fract() == 0.0 && value < 2f64.powi(63)) {
                return Err(Error::invalid(format!("{} needs a whole number, got {value}", self.short_name())));
            }
            format!("{}", value as u64)
        } else if value.is_infinite() {
            if value > 0.0 { "inf" } else { "-inf" }.to_string()
        } else {
            format!("{value:?}")
        };
        config.with_override(self.key(), &literal)
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepParam::ALL
            .into_iter()
            .find(|p| p.short_name() == s || p.key() == s)
            .ok_or_else(|| {
                let names: Vec<_> = SweepParam::ALL.iter().map(|p| p.short_name()).collect();
                Error::invalid(format!("unknown sweep parameter {s:?}, expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub replications: usize,
}

impl SweepSpec {
    pub fn new(param: SweepParam, values: Vec<f64>, replications: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("sweep needs at least one value"));
        }
        if replications == 0 {
            return Err(Error::invalid("sweep needs at least one replication"));
        }
        Ok(SweepSpec {
            param,
            values,
            replications,
        })
    }
}

/// Block packing at one gas limit, averaged over entity kinds' queues.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LedgerSample {
    pub tx_per_block_drone: f64,
    pub tx_per_block_rsu: f64,
    pub tx_per_block_sv: f64,
    pub gas_per_tx_drone: f64,
    pub gas_per_tx_rsu: f64,
    pub gas_per_tx_sv: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sample {
    Network(NetworkMetrics),
    Ledger(LedgerSample),
}

impl Sample {
    pub fn fields(&self) -> Vec<(&'static str, f64)> {
        match self {
            Sample::Network(m) => vec![
                ("sum_rate_bps", m.sum_rate_bps),
                ("served_frac", m.served_fraction),
                ("avg_bw_hz", m.avg_bandwidth_consumed_hz),
                ("ee_bps_per_w", m.energy_efficiency_bps_per_w),
            ],
            Sample::Ledger(l) => vec![
                ("tx_per_block_drone", l.tx_per_block_drone),
                ("tx_per_block_rsu", l.tx_per_block_rsu),
                ("tx_per_block_sv", l.tx_per_block_sv),
                ("gas_per_tx_drone", l.gas_per_tx_drone),
                ("gas_per_tx_rsu", l.gas_per_tx_rsu),
                ("gas_per_tx_sv", l.gas_per_tx_sv),
            ],
        }
    }
}

/// Aggregate over the replications of one sweep value.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub value: f64,
    /// Per-seed samples, sorted by seed.
    pub samples: Vec<(u64, Sample)>,
    pub mean: Vec<(&'static str, f64)>,
    /// Standard error of each mean.
    pub stderr: Vec<(&'static str, f64)>,
}

impl ResultRow {
    fn from_samples(value: f64, mut samples: Vec<(u64, Sample)>) -> Self {
        samples.sort_by_key(|(seed, _)| *seed);
        let names: Vec<&'static str> = samples[0].1.fields().iter().map(|(n, _)| *n).collect();
        let n = samples.len() as f64;
        let mut mean = Vec::new();
        let mut stderr = Vec::new();
        for (k, name) in names.iter().enumerate() {
            let xs: Vec<f64> = samples.iter().map(|(_, s)| s.fields()[k].1).collect();
            let m = xs.iter().sum::<f64>() / n;
            let se = if xs.len() > 1 {
                let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            } else {
                0.0
            };
            mean.push((*name, m));
            stderr.push((*name, se));
        }
        ResultRow {
            value,
            samples,
            mean,
            stderr,
        }
    }

    pub fn mean_of(&self, name: &str) -> f64 {
        lookup(&self.mean, name)
    }

    pub fn stderr_of(&self, name: &str) -> f64 {
        lookup(&self.stderr, name)
    }
}

fn lookup(fields: &[(&'static str, f64)], name: &str) -> f64 {
    fields
        .iter()
        .find(|(n, _)| *n == name)
        .unwrap_or_else(|| panic!("no field {name}"))
        .1
}

/// Seeds used by `replications` replications of `config`.
pub fn replication_seeds(config: &ScenarioConfig, replications: usize) -> Vec<u64> {
    (0..replications as u64).map(|r| config.run.seed.wrapping_add(r)).collect()
}

/// Runs every (value, seed) pair in parallel and aggregates per value.
/// Rows follow the order of `spec.values`.
pub fn run_sweep(config: &ScenarioConfig, spec: &SweepSpec) -> Result<Vec<ResultRow>> {
    let configs = spec
        .values
        .iter()
        .map(|&v| spec.param.apply(config, v))
        .collect::<Result<Vec<_>>>()?;
    let seeds = replication_seeds(config, spec.replications);
    let jobs: Vec<(usize, u64)> = (0..configs.len())
        .flat_map(|k| seeds.iter().map(move |&s| (k, s)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(k, s)| {
            let sample = if spec.param == SweepParam::BlockGasLimit {
                Sample::Ledger(gas_limit_sample(&configs[k], s))
            } else {
                Sample::Network(run_scenario(&configs[k], s)?.metrics)
            };
            Ok((k, s, sample))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut grouped: Vec<Vec<(u64, Sample)>> = vec![Vec::new(); configs.len()];
    for (k, s, sample) in results {
        grouped[k].push((s, sample));
    }
    Ok(spec
        .values
        .iter()
        .zip(grouped)
        .map(|(&v, samples)| ResultRow::from_samples(v, samples))
        .collect())
}

/// Queues [`GAS_SWEEP_QUEUE`] registrations of each kind, with string
/// lengths drawn from `seed`, and mines one block per kind at the
/// configured gas limit.
pub fn gas_limit_sample(config: &ScenarioConfig, seed: u64) -> LedgerSample {
    let mut rng = seed::rng(seed::derive(seed, seed::stage::IDENTITIES));
    let cc = Address::derive(seed);
    let limit = config.ledger.block_gas_limit;
    let mut packed = [0.0; 3];
    let mut gas = [0.0; 3];
    for (k, kind) in EntityKind::ALL.into_iter().enumerate() {
        let mut chain = LedgerChain::new(cc, config.gas_schedule());
        for n in 0..GAS_SWEEP_QUEUE {
            let address = Address::derive(seed::derive(seed, (k * GAS_SWEEP_QUEUE + n) as u64 + 1));
            let id_len = rng.random_range(1..=5);
            let area_len = rng.random_range(1..=4);
            let record = match kind {
                EntityKind::Drone => EntityRecord::drone(address, "D".repeat(id_len), "A".repeat(area_len)),
                EntityKind::Rsu => EntityRecord::rsu(address, "A".repeat(area_len)),
                EntityKind::Sv => EntityRecord::sv(address),
            };
            chain.register_entity(cc, record).expect("fresh C&C registration");
        }
        gas[k] = chain.pending().iter().map(|t| t.gas_used as f64).sum::<f64>() / GAS_SWEEP_QUEUE as f64;
        packed[k] = chain.mine_block(limit).tx_count as f64;
    }
    LedgerSample {
        tx_per_block_drone: packed[0],
        tx_per_block_rsu: packed[1],
        tx_per_block_sv: packed[2],
        gas_per_tx_drone: gas[0],
        gas_per_tx_rsu: gas[1],
        gas_per_tx_sv: gas[2],
    }
}
