//! Scenario configuration.
//!
//! Physical constants are stored in the units people write them in (dBm,
//! bytes, Hz) and converted to linear SI once, in [`ScenarioConfig::physics`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::EnvError;

/// Orientation of the per-user computing speed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RcOrientation {
    /// `RC = C / cycles_per_bit`, in bits per second.
    #[default]
    FreqOverCycles,
    /// `RC = cycles_per_bit / C`, kept for comparison.
    CyclesOverFreq,
}

/// Direction of the transmission-queue update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TqUpdate {
    /// `V <- max(V + (RC - RT) dt, 0)`: compute output feeds the queue, radio drains it.
    #[default]
    ComputeMinusRadio,
    /// `V <- max(V + (RT - RC) dt, 0)`, kept for comparison.
    RadioMinusCompute,
}

/// How backlog features are squashed before they reach a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureTransform {
    /// `x / backlog_scale_bits`.
    #[default]
    Linear,
    /// `ln(1 + x / backlog_scale_bits)`.
    Log1p,
}

/// The three service classes a slice can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Service {
    Embb,
    Mmtc,
    Urllc,
}

impl Service {
    pub const ALL: [Service; 3] = [Service::Embb, Service::Mmtc, Service::Urllc];

    pub fn name(self) -> &'static str {
        match self {
            Service::Embb => "embb",
            Service::Mmtc => "mmtc",
            Service::Urllc => "urllc",
        }
    }
}

/// Per-service constants. Ranges are `[lo, hi]` and sampled uniformly per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceProfile {
    /// Target minimum number of users per slice of this service.
    pub min_users: usize,
    /// SLA latency bound in seconds.
    pub latency_req_s: f64,
    /// Per-slot task arrival probability range.
    pub arrival_prob: [f64; 2],
    /// Pareto shape range.
    pub pareto_shape: [f64; 2],
    /// Pareto threshold (scale) range in bytes.
    pub threshold_bytes: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Services {
    pub embb: ServiceProfile,
    pub mmtc: ServiceProfile,
    pub urllc: ServiceProfile,
}

impl Services {
    pub fn get(&self, service: Service) -> &ServiceProfile {
        match service {
            Service::Embb => &self.embb,
            Service::Mmtc => &self.mmtc,
            Service::Urllc => &self.urllc,
        }
    }
}

impl Default for Services {
    fn default() -> Self {
        Services {
            embb: ServiceProfile {
                min_users: 3,
                latency_req_s: 0.05,
                arrival_prob: [0.6, 0.8],
                pareto_shape: [5.0, 10.0],
                threshold_bytes: [0.1e6, 0.3e6],
            },
            mmtc: ServiceProfile {
                min_users: 50,
                latency_req_s: 0.02,
                arrival_prob: [0.4, 0.6],
                pareto_shape: [5.0, 10.0],
                threshold_bytes: [125.0, 125.0],
            },
            urllc: ServiceProfile {
                min_users: 10,
                latency_req_s: 0.001,
                arrival_prob: [0.8, 1.0],
                pareto_shape: [5.0, 10.0],
                threshold_bytes: [10.0, 300.0],
            },
        }
    }
}

/// Placement geometry, all in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    /// Side `d0` of the square the edge nodes are dropped in.
    pub area_side_m: f64,
    /// Coverage radius `d_r` of each edge node.
    pub coverage_radius_m: f64,
    /// Inner radius of the user ring.
    pub user_ring_min_m: f64,
    /// Outer radius of the user ring.
    pub user_ring_max_m: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry {
            area_side_m: 200.0,
            coverage_radius_m: 100.0,
            user_ring_min_m: 10.0,
            user_ring_max_m: 100.0,
        }
    }
}

/// Every physical and service constant of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Number of edge nodes `N`.
    pub nodes: usize,
    /// Total number of users `U`, split evenly across nodes.
    pub users: usize,
    /// Inclusive range the per-node slice count is drawn from.
    pub slices_per_node: [usize; 2],
    pub geometry: Geometry,
    pub services: Services,
    /// MEC server frequency `C_B` per node, Hz.
    pub compute_hz: f64,
    /// Resource blocks `Z_B` per node.
    pub rb_count: f64,
    /// Transmit power per RB, dBm.
    pub rb_power_dbm: f64,
    /// Bandwidth per RB, Hz.
    pub rb_bandwidth_hz: f64,
    /// Noise power spectral density, dBm/Hz.
    pub noise_dbm_per_hz: f64,
    /// CPU cycles needed per bit.
    pub cycles_per_bit: f64,
    /// Slot duration, seconds.
    pub slot_seconds: f64,
    /// Bookkeeping horizon `T` of the per-user queue sets, slots.
    pub window: usize,
    /// Path-loss exponent.
    pub pathloss_exponent: f64,
    /// `A_max`: neighbors each node links to before symmetrization.
    pub max_neighbors: usize,
    /// Cooperation penalty factor, in (0, 1].
    pub coop_penalty: f64,
    pub rc_orientation: RcOrientation,
    pub tq_update: TqUpdate,
    /// Divisor applied to backlog features.
    pub backlog_scale_bits: f64,
    pub feature_transform: FeatureTransform,
    /// Number of recent task sizes carried per user in the observation.
    pub obs_window: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            nodes: 4,
            users: 40,
            slices_per_node: [3, 6],
            geometry: Geometry::default(),
            services: Services::default(),
            compute_hz: 10e9,
            rb_count: 10.0,
            rb_power_dbm: 11.0,
            rb_bandwidth_hz: 0.18e6,
            noise_dbm_per_hz: -204.0,
            cycles_per_bit: 15.0,
            slot_seconds: 1.0,
            window: 100,
            pathloss_exponent: 2.0,
            max_neighbors: 3,
            coop_penalty: 0.9,
            rc_orientation: RcOrientation::FreqOverCycles,
            tq_update: TqUpdate::ComputeMinusRadio,
            backlog_scale_bits: 1e6,
            feature_transform: FeatureTransform::Linear,
            obs_window: 0,
        }
    }
}

/// Linear-scale constants derived from a [`ScenarioConfig`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Physics {
    pub compute_hz: f64,
    pub rb_count: f64,
    pub rb_power_w: f64,
    pub rb_bandwidth_hz: f64,
    pub noise_w_per_hz: f64,
    pub cycles_per_bit: f64,
    pub slot_seconds: f64,
    pub pathloss_exponent: f64,
    pub rc_orientation: RcOrientation,
    pub tq_update: TqUpdate,
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> EnvError {
    EnvError::Config {
        field: field.into(),
        reason: reason.into(),
    }
}

fn check_range(field: &str, range: [f64; 2], lo_ok: impl Fn(f64) -> bool, what: &str) -> Result<(), EnvError> {
    if !range.iter().all(|v| v.is_finite() && lo_ok(*v)) {
        return Err(invalid(field, format!("values must be {what}, got {range:?}")));
    }
    if range[0] > range[1] {
        return Err(invalid(field, format!("lower bound exceeds upper bound: {range:?}")));
    }
    Ok(())
}

fn check_positive(field: &str, v: f64) -> Result<(), EnvError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive and finite, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, EnvError> {
        toml::from_str(text).map_err(|e| EnvError::Parse(e.to_string()))
    }

    pub fn from_json_str(text: &str) -> Result<Self, EnvError> {
        serde_json::from_str(text).map_err(|e| EnvError::Parse(e.to_string()))
    }

    /// Reads TOML or JSON, chosen by file extension, and validates.
    pub fn load(path: &Path) -> Result<Self, EnvError> {
        let text = std::fs::read_to_string(path).map_err(|e| EnvError::Parse(format!("{}: {e}", path.display())))?;
        let config = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text)?,
            _ => Self::from_toml_str(&text)?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn users_per_node(&self) -> Vec<usize> {
        let base = self.users / self.nodes.max(1);
        let extra = self.users % self.nodes.max(1);
        (0..self.nodes).map(|n| base + usize::from(n < extra)).collect()
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.nodes == 0 {
            return Err(invalid("nodes", "at least one edge node is required"));
        }
        let [s_lo, s_hi] = self.slices_per_node;
        if s_lo < Service::ALL.len() || s_hi < s_lo {
            return Err(invalid(
                "slices_per_node",
                format!("need 3 <= lo <= hi (one slice per service type), got {:?}", self.slices_per_node),
            ));
        }
        if self.users < self.nodes * s_hi {
            return Err(invalid(
                "users",
                format!("{} users cannot fill {} nodes with up to {} non-empty slices each", self.users, self.nodes, s_hi),
            ));
        }

        let g = &self.geometry;
        check_positive("geometry.area_side_m", g.area_side_m)?;
        check_positive("geometry.coverage_radius_m", g.coverage_radius_m)?;
        if !(g.user_ring_min_m >= 0.0 && g.user_ring_min_m < g.user_ring_max_m && g.user_ring_max_m <= g.coverage_radius_m) {
            return Err(invalid(
                "geometry.user_ring_min_m",
                format!(
                    "need 0 <= min < max <= coverage radius, got [{}, {}] with radius {}",
                    g.user_ring_min_m, g.user_ring_max_m, g.coverage_radius_m
                ),
            ));
        }

        for service in Service::ALL {
            let p = self.services.get(service);
            let prefix = format!("services.{}", service.name());
            check_positive(&format!("{prefix}.latency_req_s"), p.latency_req_s)?;
            check_range(&format!("{prefix}.arrival_prob"), p.arrival_prob, |v| v > 0.0 && v <= 1.0, "in (0, 1]")?;
            check_range(&format!("{prefix}.pareto_shape"), p.pareto_shape, |v| v > 1.0, "greater than 1")?;
            check_range(&format!("{prefix}.threshold_bytes"), p.threshold_bytes, |v| v > 0.0, "positive")?;
        }

        check_positive("compute_hz", self.compute_hz)?;
        check_positive("rb_count", self.rb_count)?;
        check_positive("rb_bandwidth_hz", self.rb_bandwidth_hz)?;
        check_positive("cycles_per_bit", self.cycles_per_bit)?;
        check_positive("slot_seconds", self.slot_seconds)?;
        check_positive("backlog_scale_bits", self.backlog_scale_bits)?;
        if !self.rb_power_dbm.is_finite() {
            return Err(invalid("rb_power_dbm", "must be finite"));
        }
        if !self.noise_dbm_per_hz.is_finite() {
            return Err(invalid("noise_dbm_per_hz", "must be finite"));
        }
        if !(self.pathloss_exponent.is_finite() && self.pathloss_exponent >= 0.0) {
            return Err(invalid("pathloss_exponent", "must be non-negative"));
        }
        if self.window == 0 {
            return Err(invalid("window", "must be at least one slot"));
        }
        if self.max_neighbors > self.nodes {
            return Err(invalid(
                "max_neighbors",
                format!("must not exceed the node count {}, got {}", self.nodes, self.max_neighbors),
            ));
        }
        if !(self.coop_penalty > 0.0 && self.coop_penalty <= 1.0) {
            return Err(invalid("coop_penalty", format!("must lie in (0, 1], got {}", self.coop_penalty)));
        }
        Ok(())
    }

    pub fn physics(&self) -> Physics {
        Physics {
            compute_hz: self.compute_hz,
            rb_count: self.rb_count,
            rb_power_w: dbm_to_watts(self.rb_power_dbm),
            rb_bandwidth_hz: self.rb_bandwidth_hz,
            noise_w_per_hz: dbm_to_watts(self.noise_dbm_per_hz),
            cycles_per_bit: self.cycles_per_bit,
            slot_seconds: self.slot_seconds,
            pathloss_exponent: self.pathloss_exponent,
            rc_orientation: self.rc_orientation,
            tq_update: self.tq_update,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ScenarioConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_zero_nodes() {
        let cfg = ScenarioConfig { nodes: 0, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(EnvError::Config { field, .. }) if field == "nodes"));
    }

    #[test]
    fn rejects_bad_arrival_probability_by_field() {
        let mut cfg = ScenarioConfig::default();
        cfg.services.embb.arrival_prob = [0.6, 1.5];
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("services.embb.arrival_prob"), "{err}");
    }

    #[test]
    fn rejects_inverted_user_ring() {
        let mut cfg = ScenarioConfig::default();
        cfg.geometry.user_ring_min_m = 100.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn dbm_conversion() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-15);
        assert!((dbm_to_watts(0.0) - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn users_split_evenly() {
        let cfg = ScenarioConfig { nodes: 3, users: 20, ..Default::default() };
        assert_eq!(cfg.users_per_node(), vec![7, 7, 6]);
    }

    #[test]
    fn partial_toml_falls_back_to_defaults() {
        let cfg = ScenarioConfig::from_toml_str("nodes = 2\nusers = 20\n").unwrap();
        assert_eq!(cfg.nodes, 2);
        assert_eq!(cfg.compute_hz, 10e9);
    }
}
