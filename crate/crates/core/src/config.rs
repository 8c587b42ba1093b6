//! Run configuration: a TOML document whose unset fields fall back to the
//! reference simulation parameters. Log-scale quantities are written in
//! dB/dBm and converted to linear units on resolution.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{GridSpec, DEFAULT_GRID_BUDGET};
use crate::channel::ChannelConfig;
use crate::ddpg::AgentConfig;
use crate::error::{Error, Result};
use crate::phy::SystemConfig;
use crate::units::{db_to_linear, dbm_to_watts};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub p_max_dbm: f64,
    /// bps/Hz.
    pub r_min: f64,
    pub noise_dbm: f64,
    pub bandwidth_hz: f64,
    pub amp_efficiency: f64,
    pub circuit_power_dbm: f64,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            p_max_dbm: 20.0,
            r_min: 0.1,
            noise_dbm: -80.0,
            bandwidth_hz: 180e3,
            amp_efficiency: 0.35,
            circuit_power_dbm: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub antennas: usize,
    pub elements: usize,
    pub users_t: usize,
    pub users_r: usize,
    pub bs_ris_distance: f64,
    pub user_distance: [f64; 2],
    pub ref_path_loss_db: f64,
    pub exponent_bs_ris: f64,
    pub exponent_ris_user: f64,
    /// Linear power ratio.
    pub rician_bs_ris: f64,
    pub rician_ris_user: f64,
    /// Draw one realization from the seed and keep it for every episode.
    pub fixed: bool,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            antennas: 10,
            elements: 30,
            users_t: 2,
            users_r: 2,
            bs_ris_distance: 50.0,
            user_distance: [5.0, 10.0],
            ref_path_loss_db: -30.0,
            exponent_bs_ris: 2.2,
            exponent_ris_user: 2.5,
            rician_bs_ris: 10.0,
            rician_ris_user: 10.0,
            fixed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Fresh channel realizations to average over.
    pub realizations: usize,
    /// Greedy steps per realization.
    pub steps: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            realizations: 20,
            steps: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub grid: GridSpec,
    pub budget: u64,
    /// Also write one CSV row per grid point.
    pub table: bool,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            grid: GridSpec {
                phase_levels: 8,
                split_levels: 5,
                power_levels: 5,
                directions: 16,
                direction_seed: 0,
            },
            budget: DEFAULT_GRID_BUDGET,
            table: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    PMaxDbm,
    Elements,
    Antennas,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::PMaxDbm => "p_max_dbm",
            SweepAxis::Elements => "elements",
            SweepAxis::Antennas => "antennas",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            axis: SweepAxis::PMaxDbm,
            values: vec![10.0, 20.0, 30.0, 40.0],
            seeds: vec![1, 2, 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub episodes: usize,
    pub steps: usize,
    /// Also checkpoint every this many episodes; 0 writes only the final one.
    pub checkpoint_every: usize,
    pub checkpoint: Option<PathBuf>,
    pub system: SystemSection,
    pub channel: ChannelSection,
    pub agent: AgentConfig,
    pub eval: EvalSection,
    pub oracle: OracleSection,
    pub sweep: SweepSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out: None,
            episodes: 300,
            steps: 100,
            checkpoint_every: 0,
            checkpoint: None,
            system: SystemSection::default(),
            channel: ChannelSection::default(),
            agent: AgentConfig::default(),
            eval: EvalSection::default(),
            oracle: OracleSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

fn field_error(path: &str, e: Error) -> Error {
    let message = match e {
        Error::InvalidArgument(m) => m,
        other => other.to_string(),
    };
    Error::Config {
        path: path.to_string(),
        message,
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::Config {
            path: String::new(),
            message: e.to_string(),
        })?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Linear-unit physical parameters.
    pub fn system(&self) -> SystemConfig {
        let s = &self.system;
        let c = &self.channel;
        SystemConfig {
            p_max: dbm_to_watts(s.p_max_dbm),
            r_min: s.r_min,
            noise_power: dbm_to_watts(s.noise_dbm),
            bandwidth: s.bandwidth_hz,
            amp_efficiency: s.amp_efficiency,
            circuit_power: dbm_to_watts(s.circuit_power_dbm),
            channel: ChannelConfig {
                antennas: c.antennas,
                elements: c.elements,
                users_t: c.users_t,
                users_r: c.users_r,
                bs_ris_distance: c.bs_ris_distance,
                user_distance: (c.user_distance[0], c.user_distance[1]),
                ref_path_loss: db_to_linear(c.ref_path_loss_db),
                exponent_bs_ris: c.exponent_bs_ris,
                exponent_ris_user: c.exponent_ris_user,
                rician_bs_ris: c.rician_bs_ris,
                rician_ris_user: c.rician_ris_user,
            },
        }
    }

    /// Invariant checks, reported against the offending section.
    pub fn validate(&self) -> Result<()> {
        let sys = self.system();
        sys.channel.validate().map_err(|e| field_error("channel", e))?;
        sys.validate().map_err(|e| field_error("system", e))?;
        self.agent.validate().map_err(|e| field_error("agent", e))?;
        self.oracle.grid.validate().map_err(|e| field_error("oracle.grid", e))?;
        if self.episodes == 0 || self.steps == 0 {
            return Err(field_error("episodes", Error::InvalidArgument("episodes and steps must be at least 1".into())));
        }
        if self.eval.realizations == 0 || self.eval.steps == 0 {
            return Err(field_error("eval", Error::InvalidArgument("realizations and steps must be at least 1".into())));
        }
        if self.sweep.values.is_empty() || self.sweep.seeds.is_empty() {
            return Err(field_error("sweep", Error::InvalidArgument("sweep needs at least one value and one seed".into())));
        }
        if self.sweep.axis != SweepAxis::PMaxDbm
            && self.sweep.values.iter().any(|v| !(*v >= 1.0) || v.fract() != 0.0)
        {
            return Err(field_error(
                "sweep.values",
                Error::InvalidArgument("count axes need positive integer values".into()),
            ));
        }
        Ok(())
    }

    /// Copy with one sweep coordinate applied.
    pub fn with_axis(&self, axis: SweepAxis, value: f64) -> Self {
        let mut c = self.clone();
        match axis {
            SweepAxis::PMaxDbm => c.system.p_max_dbm = value,
            SweepAxis::Elements => c.channel.elements = value as usize,
            SweepAxis::Antennas => c.channel.antennas = value as usize,
        }
        c
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.display().to_string()),
        _ => e.into(),
    })?;
    RunConfig::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_reference_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        let sys = cfg.system();
        assert_eq!(sys.channel, ChannelConfig::default());
        assert_eq!((sys.channel.antennas, sys.channel.elements), (10, 30));
        assert_eq!((sys.channel.users_t, sys.channel.users_r), (2, 2));
        assert_eq!(sys.r_min, 0.1);
        assert_eq!(sys.amp_efficiency, 0.35);
        assert_eq!(sys.bandwidth, 180e3);
        assert!((sys.p_max - 0.1).abs() < 1e-15);
        assert!((sys.noise_power - 1e-11).abs() < 1e-25);
        assert!((sys.circuit_power - 10.0).abs() < 1e-12);
        assert!((sys.channel.ref_path_loss - 1e-3).abs() < 1e-18);
        assert_eq!(sys.channel.bs_ris_distance, 50.0);
        assert_eq!((sys.channel.exponent_bs_ris, sys.channel.exponent_ris_user), (2.2, 2.5));
        assert_eq!((sys.channel.rician_bs_ris, sys.channel.rician_ris_user), (10.0, 10.0));
        assert_eq!((cfg.agent.buffer_capacity, cfg.agent.batch_size), (10_000, 32));
        assert_eq!((cfg.agent.actor_lr, cfg.agent.critic_lr), (1e-3, 2e-3));
    }

    #[test]
    fn dbm_fields_convert() {
        let cfg = RunConfig::parse("[system]\np_max_dbm = 30\n").unwrap();
        assert!((cfg.system().p_max - 1.0).abs() < 1e-15);
        let cfg = RunConfig::parse("[system]\np_max_dbm = 20.0\n").unwrap();
        assert!((cfg.system().p_max - 0.1).abs() < 1e-15);
    }

    #[test]
    fn errors_name_the_field() {
        let e = RunConfig::parse("[agent]\ntau = \"fast\"\n").unwrap_err();
        match e {
            Error::Config { path, .. } => assert_eq!(path, "agent.tau"),
            other => panic!("{other}"),
        }
        let e = RunConfig::parse("[channel]\nantenas = 4\n").unwrap_err();
        assert!(matches!(e, Error::Config { ref path, .. } if path.starts_with("channel")), "{e}");
        let e = RunConfig::parse("[agent]\ndiscount = 1.5\n").unwrap_err();
        assert!(matches!(e, Error::Config { ref path, .. } if path == "agent"), "{e}");
        assert!(RunConfig::parse("seed = [").is_err());
        assert!(matches!(load_config(Path::new("/nonexistent/run.toml")), Err(Error::NotFound(_))));
    }

    #[test]
    fn sweep_axis_application() {
        let cfg = RunConfig::parse("[sweep]\naxis = \"elements\"\nvalues = [10, 20]\n").unwrap();
        assert_eq!(cfg.sweep.axis, SweepAxis::Elements);
        assert_eq!(cfg.with_axis(SweepAxis::Elements, 20.0).channel.elements, 20);
        assert!((cfg.with_axis(SweepAxis::PMaxDbm, 40.0).system().p_max - 10.0).abs() < 1e-12);
        assert!(RunConfig::parse("[sweep]\naxis = \"elements\"\nvalues = [2.5]\n").is_err());
    }
}
