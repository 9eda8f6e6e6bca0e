//! One end-to-end replication: ledger gate, placement, channel,
//! association and metrics.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::association::{
    backhaul_removals, compute_metrics, greedy_admit, AssociationMatrix, DemandProfile, NetworkMetrics,
};
use crate::channel::{compute_channel, ChannelRealization};
use crate::error::{Error, Result};
use crate::geometry::{
    kmeans_place_drones, sample_matern_type1, sample_sequential_inhibition, write_sites_csv, ClusteringResult,
    DroneSite, RsuSite,
};
use crate::harness::config::{RsuProcess, ScenarioConfig};
use crate::ledger::{Address, EntityKind, EntityRecord, LedgerChain};
use crate::seed::{self, stage};

/// Header of every metrics CSV.
pub const METRICS_HEADER: &str = "seed,sum_rate_bps,served_frac,avg_bw_hz,ee_bps_per_w";

const ROGUE_SALT: u64 = 0x0bad;
const CC_SALT: u64 = 0x00cc;
const DRONE_SALT: u64 = 1 << 32;
const SV_SALT: u64 = 2 << 32;

/// One line of the stage log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageRecord {
    pub stage: &'static str,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub seed: u64,
    pub metrics: NetworkMetrics,
    /// Every sampled RSU, including excluded ones.
    pub sampled_rsus: Vec<RsuSite>,
    /// RSUs that passed authentication, in sampled order.
    pub rsus: Vec<RsuSite>,
    pub excluded_rsus: Vec<usize>,
    pub excluded_drones: Vec<usize>,
    pub drones: Vec<DroneSite>,
    pub clustering: Option<ClusteringResult>,
    pub demands: DemandProfile,
    pub channel: Option<ChannelRealization>,
    pub association: AssociationMatrix,
    /// `(rsu, drone)` links dropped by the backhaul step, 0-based.
    pub backhaul_removed: Vec<(usize, usize)>,
    pub ledger: LedgerChain,
    pub stages: Vec<StageRecord>,
}

impl ScenarioOutcome {
    pub fn stage_log(&self) -> String {
        let mut out = String::new();
        for (k, s) in self.stages.iter().enumerate() {
            let _ = writeln!(out, "{k} {} {}", s.stage, s.detail);
        }
        out
    }

    /// Writes `rsus.csv`, `drones.csv`, `channel.csv`, `association.csv`,
    /// `metrics.csv`, `stages.log` and `ledger.txt` into `dir`.
    pub fn write_artifacts(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

        let mut buf = Vec::new();
        write_sites_csv(&self.sampled_rsus, &mut buf)?;
        write_file(&dir.join("rsus.csv"), &buf)?;

        let mut drones = String::from("id,x_m,y_m,altitude_m\n");
        for d in &self.drones {
            let _ = writeln!(drones, "{},{},{},{}", d.id, d.x, d.y, d.altitude);
        }
        write_file(&dir.join("drones.csv"), drones.as_bytes())?;

        let mut buf = Vec::new();
        if let Some(channel) = &self.channel {
            channel.write_csv(&mut buf)?;
            write_file(&dir.join("channel.csv"), &buf)?;
            let mut buf = Vec::new();
            self.association.write_csv(channel, &self.demands, &mut buf)?;
            write_file(&dir.join("association.csv"), &buf)?;
        } else {
            write_file(
                &dir.join("channel.csv"),
                b"rsu_id,drone_id,s_m,d_m,theta_deg,plos,pathloss_db,sinr_db,bw_req_hz\n",
            )?;
            write_file(&dir.join("association.csv"), b"rsu_id,drone_id,rate_bps,bw_hz\n")?;
        }

        let metrics = format!("{METRICS_HEADER}\n{}\n", metrics_line(self.seed, &self.metrics));
        write_file(&dir.join("metrics.csv"), metrics.as_bytes())?;
        write_file(&dir.join("stages.log"), self.stage_log().as_bytes())?;
        write_file(&dir.join("ledger.txt"), self.ledger.export().as_bytes())?;
        Ok(())
    }
}

pub fn metrics_line(seed: u64, m: &NetworkMetrics) -> String {
    format!(
        "{seed},{},{},{},{}",
        m.sum_rate_bps, m.served_fraction, m.avg_bandwidth_consumed_hz, m.energy_efficiency_bps_per_w
    )
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Identity addresses of the scenario's entities for one seed.
#[derive(Debug, Clone, Copy)]
pub struct Identities {
    base: u64,
    cc: Address,
}

impl Identities {
    pub fn new(config: &ScenarioConfig, seed: u64) -> Self {
        let base = seed::derive(seed, stage::IDENTITIES);
        let cc = if config.ledger.cc_address.is_empty() {
            Address::derive(seed::derive(base, CC_SALT))
        } else {
            Address::from_hex(&config.ledger.cc_address).expect("validated")
        };
        Identities { base, cc }
    }

    pub fn cc(&self) -> Address {
        self.cc
    }

    pub fn rogue(&self) -> Address {
        Address::derive(seed::derive(self.base, ROGUE_SALT))
    }

    /// Drone `id` is 1-based.
    pub fn drone(&self, id: usize) -> Address {
        Address::derive(seed::derive(self.base, DRONE_SALT + id as u64))
    }

    pub fn rsu(&self, id: usize) -> Address {
        Address::derive(seed::derive(self.base, id as u64))
    }

    pub fn sv(&self, id: usize) -> Address {
        Address::derive(seed::derive(self.base, SV_SALT + id as u64))
    }
}

/// Four-character area code of the 1 km cell holding a point.
fn area_code(x: f64, y: f64) -> String {
    let col = (x / 1_000.0).floor() as i64;
    let row = (y / 1_000.0).floor() as i64;
    format!("{:02}{:02}", col.rem_euclid(100), row.rem_euclid(100))
}

/// Runs one replication. Stages run in this order:
///
/// 1. sample RSU sites (entity identities depend on the sample),
/// 2. register drones, RSUs and SVs via the ledger; entities listed as
///    unregistered are submitted by a non-C&C sender and turned down,
/// 3. authenticate every drone and RSU, excluding failures,
/// 4. place the authenticated drones by K-means over the authenticated RSUs,
/// 5. draw demands and compute the channel,
/// 6. greedy association and backhaul enforcement,
/// 7. metrics.
///
/// When fewer RSUs than drones survive, one drone hovers over each RSU and
/// the rest stay grounded.
pub fn run_scenario(config: &ScenarioConfig, seed: u64) -> Result<ScenarioOutcome> {
    config.validate()?;
    let mut stages = Vec::new();
    let mut log = |stage: &'static str, detail: String| stages.push(StageRecord { stage, detail });

    let region = config.region();
    let params = config.point_process();
    let site_seed = seed::derive(seed, stage::RSU_SITES);
    let sampled = match config.geometry.rsu_process {
        RsuProcess::SequentialInhibition => sample_sequential_inhibition(&region, &params, site_seed)?,
        RsuProcess::MaternType1 => sample_matern_type1(&region, &params, site_seed)?,
    };
    log("sample_rsus", format!("count={}", sampled.len()));

    let ids = Identities::new(config, seed);
    let mut ledger = LedgerChain::new(ids.cc(), config.gas_schedule());
    let l = &config.ledger;
    let mut rejected = 0usize;
    let mut submit = |ledger: &mut LedgerChain, unregistered: bool, record: EntityRecord| {
        let sender = if unregistered { ids.rogue() } else { ids.cc() };
        if ledger.register_entity(sender, record).is_err() {
            rejected += 1;
        }
    };
    let v = config.geometry.drone_count;
    for d in 1..=v {
        let record = EntityRecord::drone(ids.drone(d), format!("D{:04}", d % 10_000), "0000");
        submit(&mut ledger, l.unregistered_drones.contains(&d), record);
    }
    for r in &sampled {
        let record = EntityRecord::rsu(ids.rsu(r.id), area_code(r.x, r.y));
        submit(&mut ledger, l.unregistered_rsus.contains(&r.id), record);
    }
    for s in 1..=l.sv_count {
        submit(&mut ledger, false, EntityRecord::sv(ids.sv(s)));
    }
    let mut blocks = 0usize;
    while !ledger.pending().is_empty() {
        let report = ledger.mine_block(l.block_gas_limit);
        rejected += report.dropped.len();
        blocks += 1;
    }
    log(
        "register",
        format!(
            "drones={} rsus={} svs={} rejected={rejected} blocks={blocks}",
            ledger.registered_count(EntityKind::Drone),
            ledger.registered_count(EntityKind::Rsu),
            ledger.registered_count(EntityKind::Sv),
        ),
    );

    let mut comparisons = 0usize;
    let mut authed_drones = Vec::new();
    let mut excluded_drones = Vec::new();
    for d in 1..=v {
        let auth = ledger.authenticate(EntityKind::Drone, &ids.drone(d));
        comparisons += auth.comparisons;
        if auth.authenticated {
            authed_drones.push(d);
        } else {
            excluded_drones.push(d);
        }
    }
    let mut rsus = Vec::new();
    let mut excluded_rsus = Vec::new();
    for r in &sampled {
        let auth = ledger.authenticate(EntityKind::Rsu, &ids.rsu(r.id));
        comparisons += auth.comparisons;
        if auth.authenticated {
            rsus.push(*r);
        } else {
            excluded_rsus.push(r.id);
        }
    }
    log(
        "authenticate",
        format!(
            "drones={} rsus={} excluded_drones={excluded_drones:?} excluded_rsus={excluded_rsus:?} comparisons={comparisons}",
            authed_drones.len(),
            rsus.len()
        ),
    );

    let altitude = config.geometry.drone_altitude_m;
    let k = authed_drones.len().min(rsus.len());
    let (drones, clustering) = if k == 0 {
        (Vec::new(), None)
    } else if k == rsus.len() {
        let drones = rsus
            .iter()
            .zip(&authed_drones)
            .map(|(r, &id)| DroneSite {
                id,
                x: r.x,
                y: r.y,
                altitude,
            })
            .collect();
        (drones, None)
    } else {
        let (mut drones, clustering) = kmeans_place_drones(
            &rsus,
            k,
            altitude,
            seed::derive(seed, stage::KMEANS),
            config.geometry.kmeans_max_iters,
            config.geometry.kmeans_tol_m2,
        )?;
        for (d, &id) in drones.iter_mut().zip(&authed_drones) {
            d.id = id;
        }
        (drones, Some(clustering))
    };
    log(
        "place_drones",
        format!(
            "placed={} iterations={}",
            drones.len(),
            clustering.as_ref().map_or(0, |c| c.iterations)
        ),
    );

    let demands = DemandProfile::draw(
        rsus.len(),
        &config.demand.rate_choices_bps,
        seed::derive(seed, stage::DEMANDS),
    )?;
    log("demands", format!("total_bps={}", demands.rates().iter().sum::<f64>()));

    let u = rsus.len();
    if drones.is_empty() {
        let association = AssociationMatrix::empty(u, 0);
        log("channel", "skipped=no_links".to_string());
        log("associate", "links=0 removed=0".to_string());
        log("metrics", metrics_line(seed, &NetworkMetrics::default()));
        return Ok(ScenarioOutcome {
            seed,
            metrics: NetworkMetrics::default(),
            sampled_rsus: sampled,
            rsus,
            excluded_rsus,
            excluded_drones,
            drones,
            clustering,
            demands,
            channel: None,
            association,
            backhaul_removed: Vec::new(),
            ledger,
            stages,
        });
    }

    let env = config.environment();
    let policy = config.transmit_policy();
    let channel = compute_channel(&rsus, &drones, &env, &policy, &demands, seed::derive(seed, stage::FADING))?;
    log("channel", format!("rsus={} drones={}", channel.rsu_count(), channel.drone_count()));

    let constraints = config.constraints();
    let mut association = greedy_admit(&channel, &demands, &constraints)?;
    let admitted = association.link_count();
    let backhaul_removed = backhaul_removals(&mut association, &demands, &constraints);
    log(
        "associate",
        format!("admitted={admitted} removed={} links={}", backhaul_removed.len(), association.link_count()),
    );

    let metrics = compute_metrics(&association, &channel, &demands, &policy, &config.energy_model());
    log("metrics", metrics_line(seed, &metrics));

    Ok(ScenarioOutcome {
        seed,
        metrics,
        sampled_rsus: sampled,
        rsus,
        excluded_rsus,
        excluded_drones,
        drones,
        clustering,
        demands,
        channel: Some(channel),
        association,
        backhaul_removed,
        ledger,
        stages,
    })
}
