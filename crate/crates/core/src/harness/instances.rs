//! Random small association problems for oracle comparisons.

use rand::Rng;

use crate::association::{brute_force_optimal, check_feasibility, greedy_associate, sum_rate, Constraints, DemandProfile};
use crate::channel::{compute_channel, ChannelRealization, Environment, FadingMode, TransmitPolicy};
use crate::error::Result;
use crate::geometry::{DroneSite, RsuSite};
use crate::seed;

pub const SMALL_MAX_RSUS: usize = 8;
pub const SMALL_MAX_DRONES: usize = 2;

#[derive(Debug, Clone)]
pub struct SmallInstance {
    pub rsus: Vec<RsuSite>,
    pub drones: Vec<DroneSite>,
    pub demands: DemandProfile,
    pub constraints: Constraints,
    pub policy: TransmitPolicy,
    pub channel: ChannelRealization,
}

/// Up to eight RSUs and two drones on a 1 km square with sampled fading.
/// Bandwidth, link count and backhaul limits are drawn tight enough to
/// bind regularly.
pub fn random_small_instance(seed: u64) -> Result<SmallInstance> {
    let mut rng = seed::rng(seed);
    let u = rng.random_range(1..=SMALL_MAX_RSUS);
    let v = rng.random_range(1..=SMALL_MAX_DRONES);
    let rsus: Vec<RsuSite> = (0..u)
        .map(|i| RsuSite {
            id: i + 1,
            x: rng.random_range(0.0..1_000.0),
            y: rng.random_range(0.0..1_000.0),
        })
        .collect();
    let drones: Vec<DroneSite> = (0..v)
        .map(|j| DroneSite {
            id: j + 1,
            x: rng.random_range(0.0..1_000.0),
            y: rng.random_range(0.0..1_000.0),
            altitude: 200.0,
        })
        .collect();
    let demands = DemandProfile::draw(u, &[5e6, 10e6, 15e6, 20e6, 25e6], seed::derive(seed, seed::stage::DEMANDS))?;
    let constraints = Constraints {
        bandwidth_per_drone_hz: rng.random_range(2e6..60e6),
        max_links_per_drone: rng.random_range(1..=5),
        sinr_min_linear: [0.1, 1.0, 3.0][rng.random_range(0..3)],
        backhaul_rate_bps: if rng.random_bool(0.3) {
            f64::INFINITY
        } else {
            rng.random_range(5e6..80e6)
        },
        ..Constraints::default()
    };
    let policy = TransmitPolicy::uniform(constraints.max_power_w);
    let env = Environment {
        fading_mode: FadingMode::Sampled,
        ..Environment::default()
    };
    let channel = compute_channel(
        &rsus,
        &drones,
        &env,
        &policy,
        &demands,
        seed::derive(seed, seed::stage::FADING),
    )?;
    Ok(SmallInstance {
        rsus,
        drones,
        demands,
        constraints,
        policy,
        channel,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleComparison {
    pub seed: u64,
    pub greedy_bps: f64,
    pub optimal_bps: f64,
    pub greedy_violations: usize,
}

pub fn compare_with_oracle(seed: u64) -> Result<OracleComparison> {
    let inst = random_small_instance(seed)?;
    let greedy = greedy_associate(&inst.channel, &inst.demands, &inst.constraints)?;
    let violations = check_feasibility(&greedy, &inst.channel, &inst.demands, &inst.constraints, &inst.policy);
    let (_, optimal_bps) = brute_force_optimal(&inst.channel, &inst.demands, &inst.constraints)?;
    Ok(OracleComparison {
        seed,
        greedy_bps: sum_rate(&greedy, &inst.demands),
        optimal_bps,
        greedy_violations: violations.len(),
    })
}
