//! RSU-to-drone association under bandwidth, link-count, SINR and backhaul
//! limits.
//!
//! [`greedy_associate`] runs in three phases:
//!
//! 1. every RSU nominates the drone it hears with the highest SINR;
//! 2. every drone walks its nominees from highest to lowest spectral
//!    efficiency, admitting them while its link count and bandwidth budget
//!    allow, and stops at the first nominee whose bandwidth no longer fits;
//! 3. while the admitted sum-rate exceeds the backhaul limit, the most
//!    loaded drone drops its lowest-rate RSU ([`backhaul_enforce`]).
//!
//! All ties resolve to the lowest index. [`brute_force_optimal`] solves the
//! same problem exactly on small instances.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{spectral_efficiency, ChannelRealization, TransmitPolicy};
use crate::error::{Error, Result};
use crate::seed;

/// Largest `U * V` accepted by [`brute_force_optimal`].
pub const BRUTE_FORCE_MAX_LINKS: usize = 20;

/// Relative slack used when re-checking sums that the greedy accumulated in
/// a different order.
const SUM_SLACK: f64 = 1e-9;

/// Requested rate of every RSU in bits/s; the same rate applies towards
/// every drone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandProfile {
    rates: Vec<f64>,
}

impl DemandProfile {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if let Some(r) = rates.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return Err(Error::invalid(format!("rate requests must be positive and finite, got {r}")));
        }
        Ok(DemandProfile { rates })
    }

    /// Assigns each of `rsu_count` RSUs a rate drawn uniformly from `choices`.
    pub fn draw(rsu_count: usize, choices: &[f64], seed: u64) -> Result<Self> {
        if choices.is_empty() {
            return Err(Error::invalid("demand vector is empty"));
        }
        let mut rng = seed::rng(seed);
        let rates = (0..rsu_count)
            .map(|_| choices[rng.random_range(0..choices.len())])
            .collect();
        DemandProfile::new(rates)
    }

    pub fn rate(&self, rsu: usize) -> f64 {
        self.rates[rsu]
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// Keeps only the RSUs at the given (0-based) indices, in order.
    pub fn select(&self, keep: &[usize]) -> DemandProfile {
        DemandProfile {
            rates: keep.iter().map(|&i| self.rates[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    /// Bandwidth each drone can hand out, Hz.
    pub bandwidth_per_drone_hz: f64,
    pub max_links_per_drone: usize,
    pub max_power_w: f64,
    pub sinr_min_linear: f64,
    /// Highest received power allowed on an active link, W.
    pub interference_threshold_w: f64,
    /// Parent-drone backhaul limit, bits/s. May be infinite.
    pub backhaul_rate_bps: f64,
}

impl Default for Constraints {
    fn default() -> Self {
        Constraints {
            bandwidth_per_drone_hz: 400e6,
            max_links_per_drone: 20,
            max_power_w: 1.5,
            sinr_min_linear: 0.1,
            interference_threshold_w: 1e-3,
            backhaul_rate_bps: 1.40e9,
        }
    }
}

impl Constraints {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("bandwidth_per_drone_hz", self.bandwidth_per_drone_hz),
            ("max_power_w", self.max_power_w),
            ("sinr_min_linear", self.sinr_min_linear),
            ("interference_threshold_w", self.interference_threshold_w),
            ("backhaul_rate_bps", self.backhaul_rate_bps),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_links_per_drone == 0 {
            return Err(Error::invalid("max_links_per_drone must be positive"));
        }
        Ok(())
    }
}

/// Binary U x V association matrix. Row `i` is RSU `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssociationMatrix {
    entries: Array2<bool>,
}

impl AssociationMatrix {
    pub fn empty(rsus: usize, drones: usize) -> Self {
        AssociationMatrix {
            entries: Array2::from_elem((rsus, drones), false),
        }
    }

    pub fn rsu_count(&self) -> usize {
        self.entries.nrows()
    }

    pub fn drone_count(&self) -> usize {
        self.entries.ncols()
    }

    pub fn get(&self, rsu: usize, drone: usize) -> bool {
        self.entries[[rsu, drone]]
    }

    pub fn set(&mut self, rsu: usize, drone: usize, on: bool) {
        self.entries[[rsu, drone]] = on;
    }

    /// Active `(rsu, drone)` pairs in row-major order.
    pub fn links(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.entries
            .indexed_iter()
            .filter(|(_, on)| **on)
            .map(|(ix, _)| ix)
    }

    pub fn drone_of(&self, rsu: usize) -> Option<usize> {
        self.entries.row(rsu).iter().position(|on| *on)
    }

    pub fn load(&self, drone: usize) -> usize {
        self.entries.column(drone).iter().filter(|on| **on).count()
    }

    pub fn row_sum(&self, rsu: usize) -> usize {
        self.entries.row(rsu).iter().filter(|on| **on).count()
    }

    /// Number of RSUs with at least one link.
    pub fn served_count(&self) -> usize {
        (0..self.rsu_count()).filter(|&i| self.row_sum(i) > 0).count()
    }

    pub fn link_count(&self) -> usize {
        self.entries.iter().filter(|on| **on).count()
    }

    /// Writes `rsu_id,drone_id,rate_bps,bw_hz` for every active link.
    pub fn write_csv<W: std::io::Write>(
        &self,
        channel: &ChannelRealization,
        demands: &DemandProfile,
        out: W,
    ) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rsu_id", "drone_id", "rate_bps", "bw_hz"])?;
        for (i, j) in self.links() {
            w.write_record([
                (i + 1).to_string(),
                (j + 1).to_string(),
                demands.rate(i).to_string(),
                channel.required_bandwidth_hz[[i, j]].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel {
    /// Inverse power-amplifier efficiency.
    pub pa_inefficiency: f64,
    pub circuit_power_per_link_w: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel {
            pa_inefficiency: 0.20,
            circuit_power_per_link_w: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NetworkMetrics {
    pub sum_rate_bps: f64,
    pub served_fraction: f64,
    /// Bandwidth handed out, averaged over all drones.
    pub avg_bandwidth_consumed_hz: f64,
    pub energy_efficiency_bps_per_w: f64,
    pub served_count: usize,
}

fn check_dims(channel: &ChannelRealization, demands: &DemandProfile) -> Result<()> {
    if channel.rsu_count() != demands.len() {
        return Err(Error::invalid(format!(
            "channel has {} RSUs but demand profile has {}",
            channel.rsu_count(),
            demands.len()
        )));
    }
    Ok(())
}

fn link_admissible(channel: &ChannelRealization, constraints: &Constraints, i: usize, j: usize) -> bool {
    channel.sinr_linear[[i, j]] >= constraints.sinr_min_linear
        && channel.received_power_w[[i, j]] <= constraints.interference_threshold_w
}

/// Phase 1: the drone each RSU hears best (lowest index on ties).
pub fn nominate(channel: &ChannelRealization) -> Vec<Option<usize>> {
    channel
        .sinr_linear
        .rows()
        .into_iter()
        .map(|row| {
            row.iter().enumerate().fold(None, |best: Option<(usize, f64)>, (j, &s)| match best {
                Some((_, b)) if b >= s => best,
                _ => Some((j, s)),
            })
        })
        .map(|best| best.map(|(j, _)| j))
        .collect()
}

/// Greedy association followed by backhaul enforcement.
pub fn greedy_associate(
    channel: &ChannelRealization,
    demands: &DemandProfile,
    constraints: &Constraints,
) -> Result<AssociationMatrix> {
    let assoc = greedy_admit(channel, demands, constraints)?;
    Ok(backhaul_enforce(assoc, demands, constraints))
}

/// Phases 1 and 2 of the greedy association, without the backhaul check.
pub fn greedy_admit(
    channel: &ChannelRealization,
    demands: &DemandProfile,
    constraints: &Constraints,
) -> Result<AssociationMatrix> {
    check_dims(channel, demands)?;
    let (u, v) = (channel.rsu_count(), channel.drone_count());
    let nominations = nominate(channel);
    let mut assoc = AssociationMatrix::empty(u, v);

    for j in 0..v {
        let mut nominees: Vec<usize> = (0..u).filter(|&i| nominations[i] == Some(j)).collect();
        // Stable sort keeps ascending RSU index among equal efficiencies.
        nominees.sort_by(|&a, &b| {
            spectral_efficiency(channel.sinr_linear[[b, j]]).total_cmp(&spectral_efficiency(channel.sinr_linear[[a, j]]))
        });

        let mut links = 0usize;
        let mut used = 0.0f64;
        for i in nominees {
            if links >= constraints.max_links_per_drone || used >= constraints.bandwidth_per_drone_hz {
                break;
            }
            if channel.sinr_linear[[i, j]] < constraints.sinr_min_linear {
                // Nominees are sorted by SINR, so the rest fall short too.
                break;
            }
            if !link_admissible(channel, constraints, i, j) {
                continue;
            }
            let w = channel.required_bandwidth_hz[[i, j]];
            if used + w <= constraints.bandwidth_per_drone_hz {
                assoc.set(i, j, true);
                links += 1;
                used += w;
            } else {
                break;
            }
        }
    }
    Ok(assoc)
}

/// Removes links until the sum-rate fits the backhaul, returning the removed
/// `(rsu, drone)` pairs in removal order.
pub fn backhaul_removals(
    assoc: &mut AssociationMatrix,
    demands: &DemandProfile,
    constraints: &Constraints,
) -> Vec<(usize, usize)> {
    let mut removed = Vec::new();
    let mut total = sum_rate(assoc, demands);
    while total > constraints.backhaul_rate_bps {
        let drone = (0..assoc.drone_count())
            .fold(None, |best: Option<(usize, usize)>, j| {
                let load = assoc.load(j);
                match best {
                    Some((_, b)) if b >= load => best,
                    _ => Some((j, load)),
                }
            })
            .map(|(j, _)| j)
            .expect("positive sum-rate implies at least one drone");
        let rsu = (0..assoc.rsu_count())
            .filter(|&i| assoc.get(i, drone))
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if demands.rate(b) <= demands.rate(i) => best,
                _ => Some(i),
            })
            .expect("most loaded drone has a link");
        assoc.set(rsu, drone, false);
        total -= demands.rate(rsu);
        removed.push((rsu, drone));
    }
    removed
}

/// Enforces the backhaul limit on an association that already satisfies
/// the per-drone constraints.
pub fn backhaul_enforce(
    mut assoc: AssociationMatrix,
    demands: &DemandProfile,
    constraints: &Constraints,
) -> AssociationMatrix {
    backhaul_removals(&mut assoc, demands, constraints);
    assoc
}

pub fn sum_rate(assoc: &AssociationMatrix, demands: &DemandProfile) -> f64 {
    assoc.links().map(|(i, _)| demands.rate(i)).sum()
}

/// Sum-rate per Watt of amplifier-scaled transmit power plus per-link
/// circuit power. An association with no links has zero efficiency.
pub fn energy_efficiency(
    assoc: &AssociationMatrix,
    policy: &TransmitPolicy,
    model: &EnergyModel,
    demands: &DemandProfile,
) -> f64 {
    let tx_power: f64 = assoc.links().map(|(_, j)| policy.power_for(j)).sum();
    let served = assoc.served_count() as f64;
    let denominator = model.pa_inefficiency * tx_power + served * model.circuit_power_per_link_w;
    if denominator > 0.0 {
        sum_rate(assoc, demands) / denominator
    } else {
        0.0
    }
}

pub fn compute_metrics(
    assoc: &AssociationMatrix,
    channel: &ChannelRealization,
    demands: &DemandProfile,
    policy: &TransmitPolicy,
    model: &EnergyModel,
) -> NetworkMetrics {
    let u = assoc.rsu_count();
    let v = assoc.drone_count();
    let served = assoc.served_count();
    let bandwidth: f64 = assoc.links().map(|(i, j)| channel.required_bandwidth_hz[[i, j]]).sum();
    NetworkMetrics {
        sum_rate_bps: sum_rate(assoc, demands),
        served_fraction: if u > 0 { served as f64 / u as f64 } else { 0.0 },
        avg_bandwidth_consumed_hz: if v > 0 { bandwidth / v as f64 } else { 0.0 },
        energy_efficiency_bps_per_w: energy_efficiency(assoc, policy, model, demands),
        served_count: served,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Drone hands out more bandwidth than it has.
    Bandwidth { drone: usize, used_hz: f64, limit_hz: f64 },
    /// Drone serves too many RSUs.
    LinkCount { drone: usize, links: usize, limit: usize },
    /// Transmit power above the cap on an active link.
    Power { rsu: usize, drone: usize, power_w: f64, limit_w: f64 },
    /// Received power above the interference threshold on an active link.
    Interference { rsu: usize, drone: usize, received_w: f64, limit_w: f64 },
    /// Active link below the SINR floor.
    SinrFloor { rsu: usize, drone: usize, sinr: f64, floor: f64 },
    /// RSU attached to more than one drone.
    MultipleAssociation { rsu: usize, drones: Vec<usize> },
    /// Sum-rate above the backhaul limit.
    Backhaul { sum_rate_bps: f64, limit_bps: f64 },
    /// Association, channel and demands disagree on U or V.
    Dimensions { detail: String },
}

/// Lists every constraint the association breaks. Indices are 0-based.
pub fn check_feasibility(
    assoc: &AssociationMatrix,
    channel: &ChannelRealization,
    demands: &DemandProfile,
    constraints: &Constraints,
    policy: &TransmitPolicy,
) -> Vec<Violation> {
    let (u, v) = (assoc.rsu_count(), assoc.drone_count());
    if channel.rsu_count() != u || channel.drone_count() != v || demands.len() != u {
        return vec![Violation::Dimensions {
            detail: format!(
                "association {u}x{v}, channel {}x{}, demands {}",
                channel.rsu_count(),
                channel.drone_count(),
                demands.len()
            ),
        }];
    }

    let mut out = Vec::new();
    for j in 0..v {
        let used: f64 = (0..u)
            .filter(|&i| assoc.get(i, j))
            .map(|i| channel.required_bandwidth_hz[[i, j]])
            .sum();
        let limit = constraints.bandwidth_per_drone_hz;
        if used > limit * (1.0 + SUM_SLACK) {
            out.push(Violation::Bandwidth {
                drone: j,
                used_hz: used,
                limit_hz: limit,
            });
        }
        let links = assoc.load(j);
        if links > constraints.max_links_per_drone {
            out.push(Violation::LinkCount {
                drone: j,
                links,
                limit: constraints.max_links_per_drone,
            });
        }
    }
    for (i, j) in assoc.links() {
        let power = policy.power_for(j);
        if power > constraints.max_power_w {
            out.push(Violation::Power {
                rsu: i,
                drone: j,
                power_w: power,
                limit_w: constraints.max_power_w,
            });
        }
        let received = channel.received_power_w[[i, j]];
        if received > constraints.interference_threshold_w {
            out.push(Violation::Interference {
                rsu: i,
                drone: j,
                received_w: received,
                limit_w: constraints.interference_threshold_w,
            });
        }
        let sinr = channel.sinr_linear[[i, j]];
        if sinr < constraints.sinr_min_linear {
            out.push(Violation::SinrFloor {
                rsu: i,
                drone: j,
                sinr,
                floor: constraints.sinr_min_linear,
            });
        }
    }
    for i in 0..u {
        if assoc.row_sum(i) > 1 {
            out.push(Violation::MultipleAssociation {
                rsu: i,
                drones: (0..v).filter(|&j| assoc.get(i, j)).collect(),
            });
        }
    }
    let total = sum_rate(assoc, demands);
    if total > constraints.backhaul_rate_bps {
        out.push(Violation::Backhaul {
            sum_rate_bps: total,
            limit_bps: constraints.backhaul_rate_bps,
        });
    }
    out
}

struct Search<'a> {
    channel: &'a ChannelRealization,
    demands: &'a DemandProfile,
    constraints: &'a Constraints,
    /// Sum of rates of RSUs `i..`, for pruning.
    tail: Vec<f64>,
    used_hz: Vec<f64>,
    links: Vec<usize>,
    choice: Vec<Option<usize>>,
    best_rate: f64,
    best: Vec<Option<usize>>,
}

impl Search<'_> {
    fn run(&mut self, i: usize, rate: f64) {
        if i == self.choice.len() {
            if rate > self.best_rate {
                self.best_rate = rate;
                self.best.clone_from(&self.choice);
            }
            return;
        }
        if rate + self.tail[i] <= self.best_rate {
            return;
        }
        let r = self.demands.rate(i);
        for j in 0..self.channel.drone_count() {
            let w = self.channel.required_bandwidth_hz[[i, j]];
            if link_admissible(self.channel, self.constraints, i, j)
                && self.links[j] < self.constraints.max_links_per_drone
                && self.used_hz[j] + w <= self.constraints.bandwidth_per_drone_hz
                && rate + r <= self.constraints.backhaul_rate_bps
            {
                self.links[j] += 1;
                self.used_hz[j] += w;
                self.choice[i] = Some(j);
                self.run(i + 1, rate + r);
                self.choice[i] = None;
                self.used_hz[j] -= w;
                self.links[j] -= 1;
            }
        }
        self.run(i + 1, rate);
    }
}

/// Exact sum-rate maximizer by exhaustive search over every association in
/// which each RSU is unserved or served by one drone. Limited to
/// `U * V <= BRUTE_FORCE_MAX_LINKS`.
pub fn brute_force_optimal(
    channel: &ChannelRealization,
    demands: &DemandProfile,
    constraints: &Constraints,
) -> Result<(AssociationMatrix, f64)> {
    check_dims(channel, demands)?;
    let (u, v) = (channel.rsu_count(), channel.drone_count());
    if u * v > BRUTE_FORCE_MAX_LINKS {
        return Err(Error::invalid(format!(
            "exhaustive search limited to U*V <= {BRUTE_FORCE_MAX_LINKS}, got {u}x{v}"
        )));
    }
    let mut tail = vec![0.0; u + 1];
    for i in (0..u).rev() {
        tail[i] = tail[i + 1] + demands.rate(i);
    }
    let mut search = Search {
        channel,
        demands,
        constraints,
        tail,
        used_hz: vec![0.0; v],
        links: vec![0; v],
        choice: vec![None; u],
        best_rate: 0.0,
        best: vec![None; u],
    };
    search.run(0, 0.0);

    let mut assoc = AssociationMatrix::empty(u, v);
    for (i, j) in search.best.iter().enumerate() {
        if let Some(j) = j {
            assoc.set(i, *j, true);
        }
    }
    Ok((assoc, search.best_rate))
}
