//! Air-to-ground channel: LoS probability, path loss with Nakagami shadow
//! fading, received power, SINR under inter-drone interference and the
//! bandwidth an RSU needs to reach its requested rate.
//!
//! Powers are in Watts, losses in dB, angles in degrees. Every drone
//! transmits simultaneously, so the interference seen on link `(i, j)` is
//! the power RSU `i` receives from all other drones.

use ndarray::Array2;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::association::DemandProfile;
use crate::error::{Error, Result};
use crate::geometry::{link_geometry, DroneSite, LinkGeometry, RsuSite};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadingMode {
    /// No fading: `psi = 0 dB` on every link.
    DeterministicZero,
    /// Nakagami-m envelopes drawn per link.
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub alpha: f64,
    /// Per degree.
    pub beta: f64,
    pub excess_los_db: f64,
    pub excess_nlos_db: f64,
    pub carrier_wavelength_m: f64,
    /// Noise power in dBW.
    pub noise_power_db: f64,
    pub nakagami_shape: f64,
    pub fading_floor_db: f64,
    pub fading_mode: FadingMode,
}

impl Default for Environment {
    fn default() -> Self {
        Environment {
            alpha: 9.61,
            beta: 0.16,
            excess_los_db: 1.0,
            excess_nlos_db: 20.0,
            carrier_wavelength_m: 0.15,
            noise_power_db: -125.0,
            nakagami_shape: 4.0,
            fading_floor_db: -10.0,
            fading_mode: FadingMode::DeterministicZero,
        }
    }
}

impl Environment {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::invalid(format!("{what} out of range: {v}")));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha", self.alpha);
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta", self.beta);
        }
        if !(self.carrier_wavelength_m > 0.0 && self.carrier_wavelength_m.is_finite()) {
            return bad("carrier wavelength", self.carrier_wavelength_m);
        }
        if !(self.nakagami_shape >= 0.5 && self.nakagami_shape.is_finite()) {
            return bad("nakagami shape", self.nakagami_shape);
        }
        for (what, v) in [
            ("LoS excess loss", self.excess_los_db),
            ("NLoS excess loss", self.excess_nlos_db),
            ("noise power", self.noise_power_db),
            ("fading floor", self.fading_floor_db),
        ] {
            if !v.is_finite() {
                return bad(what, v);
            }
        }
        Ok(())
    }

    pub fn noise_power_w(&self) -> f64 {
        db_to_linear(self.noise_power_db)
    }
}

/// Transmit power assignment. Every drone currently uses the same power;
/// [`TransmitPolicy::power_for`] is the hook for per-drone allocations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmitPolicy {
    pub per_drone_power_w: f64,
    pub max_power_w: f64,
}

impl TransmitPolicy {
    pub fn uniform(power_w: f64) -> Self {
        TransmitPolicy {
            per_drone_power_w: power_w,
            max_power_w: power_w,
        }
    }

    pub fn power_for(&self, _drone: usize) -> f64 {
        self.per_drone_power_w
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.per_drone_power_w > 0.0 && self.per_drone_power_w <= self.max_power_w && self.max_power_w.is_finite()) {
            return Err(Error::invalid(format!(
                "transmit power must satisfy 0 < p <= P_max, got p={} P_max={}",
                self.per_drone_power_w, self.max_power_w
            )));
        }
        Ok(())
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Sigmoid LoS probability for an elevation angle in `(0, 90]` degrees.
pub fn los_probability(theta_deg: f64, env: &Environment) -> Result<f64> {
    if !(theta_deg > 0.0 && theta_deg <= 90.0) {
        return Err(Error::invalid(format!(
            "elevation angle must lie in (0, 90] degrees, got {theta_deg}"
        )));
    }
    Ok(1.0 / (1.0 + env.alpha * (-env.beta * (theta_deg - env.alpha)).exp()))
}

pub fn free_space_path_loss_db(distance_m: f64, wavelength_m: f64) -> Result<f64> {
    if !(distance_m > 0.0 && wavelength_m > 0.0) {
        return Err(Error::invalid(format!(
            "free-space loss needs positive distance and wavelength, got d={distance_m} lambda={wavelength_m}"
        )));
    }
    Ok(20.0 * (4.0 * std::f64::consts::PI * distance_m / wavelength_m).log10())
}

/// Draws the shadow-fading term for a link with LoS probability `rho_los`.
///
/// Two independent Nakagami(m, 1) envelopes are converted to dB and mixed by
/// the LoS/NLoS probabilities; the result is clamped from below at the
/// environment's fading floor.
pub fn sample_fading_db(rho_los: f64, env: &Environment, seed: u64) -> f64 {
    match env.fading_mode {
        FadingMode::DeterministicZero => 0.0,
        FadingMode::Sampled => {
            let mut rng = seed::rng(seed);
            let m = env.nakagami_shape;
            // Envelope power of Nakagami(m, omega = 1) is Gamma(m, 1/m).
            let power = Gamma::new(m, 1.0 / m).expect("validated nakagami shape");
            let los_db = linear_to_db(power.sample(&mut rng));
            let nlos_db = linear_to_db(power.sample(&mut rng));
            let psi = rho_los * los_db + (1.0 - rho_los) * nlos_db;
            psi.max(env.fading_floor_db)
        }
    }
}

/// ATG path loss in dB. `psi_db` is subtracted, so positive fading lowers the
/// loss.
pub fn path_loss_db(geom: &LinkGeometry, env: &Environment, psi_db: f64) -> Result<f64> {
    let rho_los = los_probability(geom.elevation_deg, env)?;
    let fspl = free_space_path_loss_db(geom.slant, env.carrier_wavelength_m)?;
    Ok(fspl + rho_los * env.excess_los_db + (1.0 - rho_los) * env.excess_nlos_db - psi_db)
}

pub fn spectral_efficiency(sinr_linear: f64) -> f64 {
    (1.0 + sinr_linear).log2()
}

/// Bandwidth needed to carry `rate_bps` at the given SINR. A link with zero
/// SINR and positive demand needs infinite bandwidth.
pub fn required_bandwidth_hz(rate_bps: f64, sinr_linear: f64) -> f64 {
    let se = spectral_efficiency(sinr_linear);
    if se > 0.0 {
        rate_bps / se
    } else if rate_bps > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Per-link channel state for all U x V RSU-drone pairs. Row `i` is RSU
/// `i + 1`, column `j` is drone `j + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub horizontal_m: Array2<f64>,
    pub slant_m: Array2<f64>,
    pub elevation_deg: Array2<f64>,
    pub los_probability: Array2<f64>,
    pub fading_db: Array2<f64>,
    pub path_loss_db: Array2<f64>,
    /// `10^(-path_loss / 10)`.
    pub link_gain: Array2<f64>,
    pub received_power_w: Array2<f64>,
    pub interference_w: Array2<f64>,
    pub sinr_linear: Array2<f64>,
    pub required_bandwidth_hz: Array2<f64>,
    pub noise_power_w: f64,
}

impl ChannelRealization {
    pub fn rsu_count(&self) -> usize {
        self.sinr_linear.nrows()
    }

    pub fn drone_count(&self) -> usize {
        self.sinr_linear.ncols()
    }

    /// Builds a realization directly from an SINR matrix, with unit noise
    /// power, no interference and unit transmit power. Used to pose
    /// association problems without geometry.
    pub fn from_sinr(sinr: Array2<f64>, demands: &DemandProfile) -> Result<Self> {
        let (u, v) = sinr.dim();
        if demands.len() != u {
            return Err(Error::invalid(format!(
                "demand profile covers {} RSUs, SINR matrix has {u} rows",
                demands.len()
            )));
        }
        if sinr.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::invalid("SINR entries must be non-negative"));
        }
        let required = Array2::from_shape_fn((u, v), |(i, j)| required_bandwidth_hz(demands.rate(i), sinr[[i, j]]));
        let path_loss = sinr.mapv(|g| -linear_to_db(g));
        Ok(ChannelRealization {
            horizontal_m: Array2::zeros((u, v)),
            slant_m: Array2::zeros((u, v)),
            elevation_deg: Array2::from_elem((u, v), 90.0),
            los_probability: Array2::ones((u, v)),
            fading_db: Array2::zeros((u, v)),
            path_loss_db: path_loss,
            link_gain: sinr.clone(),
            received_power_w: sinr.clone(),
            interference_w: Array2::zeros((u, v)),
            sinr_linear: sinr,
            required_bandwidth_hz: required,
            noise_power_w: 1.0,
        })
    }

    /// Writes `rsu_id,drone_id,s_m,d_m,theta_deg,plos,pathloss_db,sinr_db,bw_req_hz`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "rsu_id",
            "drone_id",
            "s_m",
            "d_m",
            "theta_deg",
            "plos",
            "pathloss_db",
            "sinr_db",
            "bw_req_hz",
        ])?;
        for ((i, j), sinr) in self.sinr_linear.indexed_iter() {
            w.write_record([
                (i + 1).to_string(),
                (j + 1).to_string(),
                self.horizontal_m[[i, j]].to_string(),
                self.slant_m[[i, j]].to_string(),
                self.elevation_deg[[i, j]].to_string(),
                self.los_probability[[i, j]].to_string(),
                self.path_loss_db[[i, j]].to_string(),
                linear_to_db(*sinr).to_string(),
                self.required_bandwidth_hz[[i, j]].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Evaluates the channel between every RSU and every drone.
///
/// Fading draws use a per-link seed derived from `(seed, i, j)`, so the
/// result does not depend on evaluation order.
pub fn compute_channel(
    rsus: &[RsuSite],
    drones: &[DroneSite],
    env: &Environment,
    policy: &TransmitPolicy,
    demands: &DemandProfile,
    seed: u64,
) -> Result<ChannelRealization> {
    let (u, v) = (rsus.len(), drones.len());
    if u == 0 || v == 0 {
        return Err(Error::invalid(format!("channel needs U >= 1 and V >= 1, got U={u}, V={v}")));
    }
    if demands.len() != u {
        return Err(Error::invalid(format!(
            "demand profile covers {} RSUs, scenario has {u}",
            demands.len()
        )));
    }
    env.validate()?;
    policy.validate()?;
    if let Some(d) = drones.iter().find(|d| !(d.altitude > 0.0)) {
        return Err(Error::invalid(format!("drone {} has non-positive altitude", d.id)));
    }

    let mut horizontal = Array2::zeros((u, v));
    let mut slant = Array2::zeros((u, v));
    let mut elevation = Array2::zeros((u, v));
    let mut plos = Array2::zeros((u, v));
    let mut fading = Array2::zeros((u, v));
    let mut loss = Array2::zeros((u, v));
    let mut gain = Array2::zeros((u, v));
    let mut received = Array2::zeros((u, v));

    for (i, rsu) in rsus.iter().enumerate() {
        for (j, drone) in drones.iter().enumerate() {
            let geom = link_geometry(rsu, drone);
            let rho = los_probability(geom.elevation_deg, env)?;
            let psi = sample_fading_db(rho, env, seed::derive_link(seed, i, j));
            let pl = path_loss_db(&geom, env, psi)?;
            let g = db_to_linear(-pl);
            horizontal[[i, j]] = geom.horizontal;
            slant[[i, j]] = geom.slant;
            elevation[[i, j]] = geom.elevation_deg;
            plos[[i, j]] = rho;
            fading[[i, j]] = psi;
            loss[[i, j]] = pl;
            gain[[i, j]] = g;
            received[[i, j]] = policy.power_for(j) * g;
        }
    }

    let noise = env.noise_power_w();
    let mut interference = Array2::zeros((u, v));
    let mut sinr = Array2::zeros((u, v));
    let mut required = Array2::zeros((u, v));
    for i in 0..u {
        for j in 0..v {
            let others: f64 = (0..v).filter(|&k| k != j).map(|k| received[[i, k]]).sum();
            interference[[i, j]] = others;
            sinr[[i, j]] = received[[i, j]] / (noise + others);
            required[[i, j]] = required_bandwidth_hz(demands.rate(i), sinr[[i, j]]);
        }
    }

    Ok(ChannelRealization {
        horizontal_m: horizontal,
        slant_m: slant,
        elevation_deg: elevation,
        los_probability: plos,
        fading_db: fading,
        path_loss_db: loss,
        link_gain: gain,
        received_power_w: received,
        interference_w: interference,
        sinr_linear: sinr,
        required_bandwidth_hz: required,
        noise_power_w: noise,
    })
}
