//! Scenario configuration and its flat dotted-key file format.
//!
//! A config file is TOML restricted to one `section.key = value` line per
//! field, so golden configs diff line by line:
//!
//! ```text
//! geometry.rsu_density_per_m2 = 5e-6
//! channel.carrier_wavelength_m = 0.15
//! constraints.backhaul_rate_bps = 1400000000.0
//! ```
//!
//! Missing keys take their default value; unknown keys are
//! rejected. Infinite limits are written `inf`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::association::{Constraints, EnergyModel};
use crate::channel::{Environment, FadingMode, TransmitPolicy};
use crate::error::{Error, FieldError, Result};
use crate::geometry::{PointProcessParams, Region};
use crate::ledger::{Address, GasSchedule};

/// How RSU sites are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RsuProcess {
    /// Hard-core pattern whose retained intensity is close to the density.
    SequentialInhibition,
    /// Poisson parents at the density, close pairs deleted.
    MaternType1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegionSection {
    pub width_m: f64,
    pub height_m: f64,
}

impl Default for RegionSection {
    fn default() -> Self {
        RegionSection {
            width_m: 5_000.0,
            height_m: 5_000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    pub rsu_process: RsuProcess,
    pub rsu_density_per_m2: f64,
    pub rsu_min_distance_m: f64,
    pub drone_count: usize,
    pub drone_altitude_m: f64,
    pub kmeans_max_iters: usize,
    pub kmeans_tol_m2: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        GeometrySection {
            rsu_process: RsuProcess::SequentialInhibition,
            rsu_density_per_m2: 5e-6,
            rsu_min_distance_m: 200.0,
            drone_count: 6,
            drone_altitude_m: 200.0,
            kmeans_max_iters: 100,
            kmeans_tol_m2: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub los_alpha: f64,
    pub los_beta_per_deg: f64,
    pub excess_los_db: f64,
    pub excess_nlos_db: f64,
    pub carrier_wavelength_m: f64,
    pub noise_power_dbw: f64,
    pub nakagami_shape: f64,
    pub fading_floor_db: f64,
    pub fading_mode: FadingMode,
    pub transmit_power_w: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        let env = Environment::default();
        ChannelSection {
            los_alpha: env.alpha,
            los_beta_per_deg: env.beta,
            excess_los_db: env.excess_los_db,
            excess_nlos_db: env.excess_nlos_db,
            carrier_wavelength_m: env.carrier_wavelength_m,
            noise_power_dbw: env.noise_power_db,
            nakagami_shape: env.nakagami_shape,
            fading_floor_db: env.fading_floor_db,
            fading_mode: env.fading_mode,
            transmit_power_w: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemandSection {
    pub rate_choices_bps: Vec<f64>,
}

impl Default for DemandSection {
    fn default() -> Self {
        DemandSection {
            rate_choices_bps: vec![5e6, 10e6, 15e6, 20e6, 25e6],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstraintsSection {
    pub bandwidth_per_drone_hz: f64,
    pub max_links_per_drone: usize,
    pub max_power_w: f64,
    pub sinr_min_linear: f64,
    pub interference_threshold_w: f64,
    pub backhaul_rate_bps: f64,
}

impl Default for ConstraintsSection {
    fn default() -> Self {
        let c = Constraints::default();
        ConstraintsSection {
            bandwidth_per_drone_hz: c.bandwidth_per_drone_hz,
            max_links_per_drone: c.max_links_per_drone,
            max_power_w: c.max_power_w,
            sinr_min_linear: c.sinr_min_linear,
            interference_threshold_w: c.interference_threshold_w,
            backhaul_rate_bps: c.backhaul_rate_bps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergySection {
    pub pa_inefficiency: f64,
    pub circuit_power_per_link_w: f64,
}

impl Default for EnergySection {
    fn default() -> Self {
        let e = EnergyModel::default();
        EnergySection {
            pa_inefficiency: e.pa_inefficiency,
            circuit_power_per_link_w: e.circuit_power_per_link_w,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LedgerSection {
    /// Hex C&C address; empty derives one from the run seed.
    pub cc_address: String,
    pub base_tx_gas: u64,
    pub per_byte_gas: u64,
    pub drone_overhead_gas: u64,
    pub rsu_overhead_gas: u64,
    pub sv_overhead_gas: u64,
    pub block_gas_limit: u64,
    pub sv_count: usize,
    /// 1-based drone ids whose registration is attempted by a non-C&C sender.
    pub unregistered_drones: Vec<usize>,
    /// 1-based RSU ids (after sampling) registered by a non-C&C sender.
    pub unregistered_rsus: Vec<usize>,
}

impl Default for LedgerSection {
    fn default() -> Self {
        let g = GasSchedule::default();
        LedgerSection {
            cc_address: String::new(),
            base_tx_gas: g.base_tx_gas,
            per_byte_gas: g.per_byte_gas,
            drone_overhead_gas: g.drone_overhead_gas,
            rsu_overhead_gas: g.rsu_overhead_gas,
            sv_overhead_gas: g.sv_overhead_gas,
            block_gas_limit: 6_000_000,
            sv_count: 10,
            unregistered_drones: Vec::new(),
            unregistered_rsus: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    pub replications: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 1,
            replications: 100,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub region: RegionSection,
    pub geometry: GeometrySection,
    pub channel: ChannelSection,
    pub demand: DemandSection,
    pub constraints: ConstraintsSection,
    pub energy: EnergySection,
    pub ledger: LedgerSection,
    pub run: RunSection,
}

struct Checker(Vec<FieldError>);

impl Checker {
    fn check(&mut self, ok: bool, field: &str, reason: impl Into<String>) {
        if !ok {
            self.0.push(FieldError {
                field: field.to_string(),
                reason: reason.into(),
            });
        }
    }

    fn positive(&mut self, field: &str, v: f64) {
        self.check(v > 0.0 && v.is_finite(), field, format!("must be positive and finite, got {v}"));
    }

    fn positive_or_inf(&mut self, field: &str, v: f64) {
        self.check(v > 0.0, field, format!("must be positive, got {v}"));
    }

    fn finite(&mut self, field: &str, v: f64) {
        self.check(v.is_finite(), field, format!("must be finite, got {v}"));
    }
}

impl ScenarioConfig {
    /// Every invalid field, by dotted key.
    pub fn field_errors(&self) -> Vec<FieldError> {
        let mut c = Checker(Vec::new());
        let g = &self.geometry;
        let ch = &self.channel;
        let k = &self.constraints;

        c.positive("region.width_m", self.region.width_m);
        c.positive("region.height_m", self.region.height_m);
        c.check(
            g.rsu_density_per_m2 >= 0.0 && g.rsu_density_per_m2.is_finite(),
            "geometry.rsu_density_per_m2",
            "must be non-negative and finite",
        );
        c.check(
            g.rsu_min_distance_m >= 0.0 && g.rsu_min_distance_m.is_finite(),
            "geometry.rsu_min_distance_m",
            "must be non-negative and finite",
        );
        c.check(g.drone_count >= 1, "geometry.drone_count", "must be at least 1");
        c.positive("geometry.drone_altitude_m", g.drone_altitude_m);
        c.check(g.kmeans_max_iters >= 1, "geometry.kmeans_max_iters", "must be at least 1");
        c.check(g.kmeans_tol_m2 >= 0.0, "geometry.kmeans_tol_m2", "must be non-negative");

        c.positive("channel.los_alpha", ch.los_alpha);
        c.positive("channel.los_beta_per_deg", ch.los_beta_per_deg);
        c.finite("channel.excess_los_db", ch.excess_los_db);
        c.finite("channel.excess_nlos_db", ch.excess_nlos_db);
        c.positive("channel.carrier_wavelength_m", ch.carrier_wavelength_m);
        c.finite("channel.noise_power_dbw", ch.noise_power_dbw);
        c.check(
            ch.nakagami_shape >= 0.5 && ch.nakagami_shape.is_finite(),
            "channel.nakagami_shape",
            "must be at least 0.5",
        );
        c.finite("channel.fading_floor_db", ch.fading_floor_db);
        c.positive("channel.transmit_power_w", ch.transmit_power_w);

        c.check(
            !self.demand.rate_choices_bps.is_empty(),
            "demand.rate_choices_bps",
            "must not be empty",
        );
        for r in &self.demand.rate_choices_bps {
            c.positive("demand.rate_choices_bps", *r);
        }

        c.positive_or_inf("constraints.bandwidth_per_drone_hz", k.bandwidth_per_drone_hz);
        c.check(k.max_links_per_drone >= 1, "constraints.max_links_per_drone", "must be at least 1");
        c.positive("constraints.max_power_w", k.max_power_w);
        c.check(
            ch.transmit_power_w <= k.max_power_w,
            "channel.transmit_power_w",
            format!("exceeds constraints.max_power_w ({})", k.max_power_w),
        );
        c.positive("constraints.sinr_min_linear", k.sinr_min_linear);
        c.positive_or_inf("constraints.interference_threshold_w", k.interference_threshold_w);
        c.positive_or_inf("constraints.backhaul_rate_bps", k.backhaul_rate_bps);

        c.check(
            self.energy.pa_inefficiency >= 0.0 && self.energy.pa_inefficiency.is_finite(),
            "energy.pa_inefficiency",
            "must be non-negative and finite",
        );
        c.check(
            self.energy.circuit_power_per_link_w >= 0.0 && self.energy.circuit_power_per_link_w.is_finite(),
            "energy.circuit_power_per_link_w",
            "must be non-negative and finite",
        );

        let l = &self.ledger;
        if !l.cc_address.is_empty() {
            c.check(
                Address::from_hex(&l.cc_address).is_ok(),
                "ledger.cc_address",
                "must be 40 hex characters",
            );
        }
        c.check(l.base_tx_gas > 0, "ledger.base_tx_gas", "must be positive");
        c.check(l.block_gas_limit > 0, "ledger.block_gas_limit", "must be positive");
        c.check(
            l.unregistered_drones.iter().all(|&d| (1..=g.drone_count).contains(&d)),
            "ledger.unregistered_drones",
            format!("ids must lie in 1..={}", g.drone_count),
        );
        c.check(
            l.unregistered_rsus.iter().all(|&r| r >= 1),
            "ledger.unregistered_rsus",
            "ids are 1-based",
        );

        c.check(self.run.replications >= 1, "run.replications", "must be at least 1");
        c.0
    }

    pub fn validate(&self) -> Result<()> {
        let errors = self.field_errors();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }

    pub fn region(&self) -> Region {
        Region {
            width: self.region.width_m,
            height: self.region.height_m,
        }
    }

    pub fn point_process(&self) -> PointProcessParams {
        PointProcessParams {
            density: self.geometry.rsu_density_per_m2,
            min_distance: self.geometry.rsu_min_distance_m,
        }
    }

    pub fn environment(&self) -> Environment {
        let ch = &self.channel;
        Environment {
            alpha: ch.los_alpha,
            beta: ch.los_beta_per_deg,
            excess_los_db: ch.excess_los_db,
            excess_nlos_db: ch.excess_nlos_db,
            carrier_wavelength_m: ch.carrier_wavelength_m,
            noise_power_db: ch.noise_power_dbw,
            nakagami_shape: ch.nakagami_shape,
            fading_floor_db: ch.fading_floor_db,
            fading_mode: ch.fading_mode,
        }
    }

    pub fn transmit_policy(&self) -> TransmitPolicy {
        TransmitPolicy {
            per_drone_power_w: self.channel.transmit_power_w,
            max_power_w: self.constraints.max_power_w,
        }
    }

    pub fn constraints(&self) -> Constraints {
        let k = &self.constraints;
        Constraints {
            bandwidth_per_drone_hz: k.bandwidth_per_drone_hz,
            max_links_per_drone: k.max_links_per_drone,
            max_power_w: k.max_power_w,
            sinr_min_linear: k.sinr_min_linear,
            interference_threshold_w: k.interference_threshold_w,
            backhaul_rate_bps: k.backhaul_rate_bps,
        }
    }

    pub fn energy_model(&self) -> EnergyModel {
        EnergyModel {
            pa_inefficiency: self.energy.pa_inefficiency,
            circuit_power_per_link_w: self.energy.circuit_power_per_link_w,
        }
    }

    pub fn gas_schedule(&self) -> GasSchedule {
        let l = &self.ledger;
        GasSchedule {
            base_tx_gas: l.base_tx_gas,
            per_byte_gas: l.per_byte_gas,
            drone_overhead_gas: l.drone_overhead_gas,
            rsu_overhead_gas: l.rsu_overhead_gas,
            sv_overhead_gas: l.sv_overhead_gas,
        }
    }

    /// Parses the flat dotted format, fills defaults and validates.
    pub fn parse(text: &str) -> Result<Self> {
        let config: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Parse(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// One `section.key = value` line per field, sorted by key.
    pub fn to_flat_string(&self) -> String {
        let value = toml::Value::try_from(self).expect("config is representable as TOML");
        let mut out = String::new();
        let toml::Value::Table(sections) = value else {
            unreachable!("config serializes to a table")
        };
        for (section, body) in &sections {
            let toml::Value::Table(fields) = body else {
                unreachable!("every section is a table")
            };
            for (key, v) in fields {
                out.push_str(&format!("{section}.{key} = {}\n", render(v)));
            }
        }
        out
    }

    /// Sets one dotted key from its TOML literal, e.g. `("geometry.drone_count", "4")`.
    pub fn with_override(&self, key: &str, literal: &str) -> Result<Self> {
        let mut text = self.to_flat_string();
        let prefix = format!("{key} = ");
        let before = text.len();
        text = text
            .lines()
            .filter(|l| !l.starts_with(&prefix))
            .map(|l| format!("{l}\n"))
            .collect();
        if text.len() == before {
            return Err(Error::invalid(format!("unknown config key {key:?}")));
        }
        text.push_str(&format!("{prefix}{literal}\n"));
        Self::parse(&text)
    }
}

fn render(v: &toml::Value) -> String {
    match v {
        // Display of f64 is the shortest string that parses back exactly.
        toml::Value::Float(f) if f.is_infinite() => if *f > 0.0 { "inf" } else { "-inf" }.to_string(),
        toml::Value::Float(f) if f.is_nan() => "nan".to_string(),
        toml::Value::Float(f) => {
            let s = f.to_string();
            if s.contains(['.', 'e']) {
                s
            } else {
                s + ".0"
            }
        }
        toml::Value::Array(items) => {
            let parts: Vec<String> = items.iter().map(render).collect();
            format!("[{}]", parts.join(", "))
        }
        other => other.to_string(),
    }
}
