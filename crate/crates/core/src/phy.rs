//! Energy-splitting STAR-RIS coefficients, NOMA/SIC achievable rates,
//! transmit power, energy efficiency and constraint checks.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{cascade_diagonal, ChannelConfig, ChannelRealization, Zone};
use crate::error::{invalid, Result};
use crate::numerics::ComplexMatrix;

/// Tolerance on `β_T + β_R = 1` and on the power budget.
pub const CONSTRAINT_TOL: f64 = 1e-9;

/// Per-element amplitude fractions and phase shifts for both zones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarCoefficients {
    pub beta_t: Vec<f64>,
    pub beta_r: Vec<f64>,
    pub theta_t: Vec<f64>,
    pub theta_r: Vec<f64>,
}

impl StarCoefficients {
    pub fn new(beta_t: Vec<f64>, beta_r: Vec<f64>, theta_t: Vec<f64>, theta_r: Vec<f64>) -> Result<Self> {
        let c = Self {
            beta_t,
            beta_r,
            theta_t,
            theta_r,
        };
        c.validate()?;
        Ok(c)
    }

    /// Even split, zero phase on every element.
    pub fn even(elements: usize) -> Self {
        Self {
            beta_t: vec![0.5; elements],
            beta_r: vec![0.5; elements],
            theta_t: vec![0.0; elements],
            theta_r: vec![0.0; elements],
        }
    }

    pub fn elements(&self) -> usize {
        self.beta_t.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.beta_t.len();
        if self.beta_r.len() != n || self.theta_t.len() != n || self.theta_r.len() != n {
            return invalid("coefficient vectors differ in length");
        }
        for k in 0..n {
            let (bt, br) = (self.beta_t[k], self.beta_r[k]);
            if !(0.0..=1.0).contains(&bt) || !(0.0..=1.0).contains(&br) {
                return invalid(format!("amplitude fraction out of [0,1] at element {k}"));
            }
            if (bt + br - 1.0).abs() > CONSTRAINT_TOL {
                return invalid(format!("amplitude fractions do not sum to one at element {k}"));
            }
            for th in [self.theta_t[k], self.theta_r[k]] {
                if !(0.0..TAU).contains(&th) {
                    return invalid(format!("phase out of [0, 2π) at element {k}"));
                }
            }
        }
        Ok(())
    }

    /// Diagonal entries `√β_n e^{jθ_n}` for one zone.
    pub fn diagonal(&self, zone: Zone) -> Vec<Complex64> {
        let (beta, theta) = match zone {
            Zone::Transmission => (&self.beta_t, &self.theta_t),
            Zone::Reflection => (&self.beta_r, &self.theta_r),
        };
        beta.iter()
            .zip(theta)
            .map(|(&b, &t)| Complex64::from_polar(b.sqrt(), t))
            .collect()
    }
}

/// `Φ^τ = diag(√β^τ_n e^{jθ^τ_n})`.
pub fn build_coefficient_matrix(c: &StarCoefficients, zone: Zone) -> ComplexMatrix {
    ComplexMatrix::diagonal(&c.diagonal(zone))
}

/// One `M`-dimensional complex beamformer per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamformingSet {
    pub beams: Vec<Vec<Complex64>>,
}

impl BeamformingSet {
    pub fn new(beams: Vec<Vec<Complex64>>) -> Result<Self> {
        let m = beams.first().map_or(0, Vec::len);
        if beams.iter().any(|b| b.len() != m) {
            return invalid("beamformers differ in length");
        }
        if beams.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return invalid("non-finite beamformer entry");
        }
        Ok(Self { beams })
    }

    pub fn zeros(users: usize, antennas: usize) -> Self {
        Self {
            beams: vec![vec![Complex64::new(0.0, 0.0); antennas]; users],
        }
    }

    pub fn users(&self) -> usize {
        self.beams.len()
    }

    pub fn antennas(&self) -> usize {
        self.beams.first().map_or(0, Vec::len)
    }

    /// `‖ω_ε‖²`.
    pub fn power(&self, user: usize) -> f64 {
        self.beams[user].iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Link budget and circuit parameters. Everything linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Watts.
    pub p_max: f64,
    /// bps/Hz.
    pub r_min: f64,
    /// Watts.
    pub noise_power: f64,
    /// Hz.
    pub bandwidth: f64,
    /// Power-amplifier efficiency in (0, 1].
    pub amp_efficiency: f64,
    /// Static circuit power in watts.
    pub circuit_power: f64,
    pub channel: ChannelConfig,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            p_max: 0.1,
            r_min: 0.1,
            noise_power: 1e-11,
            bandwidth: 180e3,
            amp_efficiency: 0.35,
            circuit_power: 10.0,
            channel: ChannelConfig::default(),
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_max > 0.0) {
            return invalid("maximum transmit power must be positive");
        }
        if !(self.noise_power > 0.0) {
            return invalid("noise power must be positive");
        }
        if !(self.amp_efficiency > 0.0 && self.amp_efficiency <= 1.0) {
            return invalid("amplifier efficiency must lie in (0, 1]");
        }
        if !(self.bandwidth > 0.0) || !(self.circuit_power > 0.0) {
            return invalid("bandwidth and circuit power must be positive");
        }
        if !(self.r_min >= 0.0) {
            return invalid("minimum rate must be non-negative");
        }
        self.channel.validate()
    }
}

/// Rate at which `at` decodes the signal intended for `decoded`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairRate {
    pub decoded: usize,
    pub at: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// Achievable rate per user index, bps/Hz.
    pub rates: Vec<f64>,
    /// Decoding order, first decoded first.
    pub order: Vec<usize>,
    pub pairs: Vec<PairRate>,
}

impl RateReport {
    pub fn sum(&self) -> f64 {
        self.rates.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.rates.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn pair(&self, decoded: usize, at: usize) -> Option<f64> {
        self.pairs
            .iter()
            .find(|p| p.decoded == decoded && p.at == at)
            .map(|p| p.rate)
    }
}

/// Cascaded row vectors `hᴴ_ε Φ^{k(ε)} G` for every user.
pub fn effective_channels(
    cfg: &ChannelConfig,
    ch: &ChannelRealization,
    c: &StarCoefficients,
) -> Vec<Vec<Complex64>> {
    let phi_t = c.diagonal(Zone::Transmission);
    let phi_r = c.diagonal(Zone::Reflection);
    (0..ch.users())
        .map(|u| {
            let phi = match cfg.zone(u) {
                Zone::Transmission => &phi_t,
                Zone::Reflection => &phi_r,
            };
            cascade_diagonal(&ch.h[u], phi, &ch.g)
        })
        .collect()
}

/// Users sorted by ascending `‖g_ε‖²`, ties broken by index.
pub fn order_by_gain(gains: &[Vec<Complex64>]) -> Vec<usize> {
    let power: Vec<f64> = gains
        .iter()
        .map(|g| g.iter().map(|z| z.norm_sqr()).sum())
        .collect();
    let mut order: Vec<usize> = (0..gains.len()).collect();
    order.sort_by(|&a, &b| power[a].total_cmp(&power[b]).then(a.cmp(&b)));
    order
}

/// SIC decoding order: weakest effective channel first.
pub fn decoding_order(cfg: &ChannelConfig, ch: &ChannelRealization, c: &StarCoefficients) -> Vec<usize> {
    order_by_gain(&effective_channels(cfg, ch, c))
}

/// `|g · ω|²` with `g` a row and `ω` a column.
fn projected_power(g: &[Complex64], w: &[Complex64]) -> f64 {
    g.iter()
        .zip(w)
        .fold(Complex64::new(0.0, 0.0), |acc, (a, b)| acc + a * b)
        .norm_sqr()
}

/// SIC rates from precomputed cascaded channels.
pub fn rates_from_channels(
    gains: &[Vec<Complex64>],
    w: &BeamformingSet,
    noise_power: f64,
    order: &[usize],
) -> Result<RateReport> {
    if !(noise_power > 0.0) {
        return invalid("noise power must be positive");
    }
    let users = gains.len();
    if w.users() != users || gains.iter().any(|g| g.len() != w.antennas()) {
        return invalid("beamformers do not match the channel dimensions");
    }
    let mut seen = vec![false; users];
    if order.len() != users || order.iter().any(|&u| u >= users || std::mem::replace(&mut seen[u], true)) {
        return invalid("decoding order must be a permutation of the users");
    }
    // received[j][i] = |g_j ω_i|²
    let received: Vec<Vec<f64>> = gains
        .iter()
        .map(|g| w.beams.iter().map(|b| projected_power(g, b)).collect())
        .collect();
    let mut rates = vec![0.0; users];
    let mut pairs = Vec::with_capacity(users * (users + 1) / 2);
    for p in 0..users {
        let i = order[p];
        let mut best = f64::INFINITY;
        for &j in &order[p..] {
            let mut interference = 0.0;
            for &z in &order[p + 1..] {
                interference += received[j][z];
            }
            let rate = (1.0 + received[j][i] / (interference + noise_power)).log2();
            pairs.push(PairRate {
                decoded: i,
                at: j,
                rate,
            });
            best = best.min(rate);
        }
        rates[i] = best;
    }
    Ok(RateReport {
        rates,
        order: order.to_vec(),
        pairs,
    })
}

/// Achievable NOMA rates where each user's rate is the minimum over every
/// user that decodes its signal (itself and all users decoded later).
pub fn achievable_rates(
    cfg: &ChannelConfig,
    ch: &ChannelRealization,
    c: &StarCoefficients,
    w: &BeamformingSet,
    noise_power: f64,
    order: &[usize],
) -> Result<RateReport> {
    ch.check_dims(cfg)?;
    if c.elements() != cfg.elements {
        return invalid("coefficient count does not match the surface");
    }
    rates_from_channels(&effective_channels(cfg, ch, c), w, noise_power, order)
}

/// `Σ_ε ‖ω_ε‖²`.
pub fn transmit_power(w: &BeamformingSet) -> f64 {
    (0..w.users()).map(|u| w.power(u)).sum()
}

/// `B_w Σ R_ε / (P_T/γ + P_C)` in bits per joule.
pub fn energy_efficiency(rates: &RateReport, transmit_power: f64, cfg: &SystemConfig) -> f64 {
    cfg.bandwidth * rates.sum() / (transmit_power / cfg.amp_efficiency + cfg.circuit_power)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub pass: bool,
    pub margin: f64,
}

/// Margins: power is `P_max − P_T`; energy splitting is the worst
/// `|β_T + β_R − 1|`; phase is the worst distance outside `[0, 2π)`;
/// rates are `R_ε − R_min` per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub power: ConstraintCheck,
    pub energy_splitting: ConstraintCheck,
    pub phase_range: ConstraintCheck,
    pub min_rate: Vec<ConstraintCheck>,
}

impl ConstraintReport {
    /// Power, energy-splitting and phase constraints.
    pub fn physical_pass(&self) -> bool {
        self.power.pass && self.energy_splitting.pass && self.phase_range.pass
    }

    pub fn rates_pass(&self) -> bool {
        self.min_rate.iter().all(|c| c.pass)
    }

    pub fn all_pass(&self) -> bool {
        self.physical_pass() && self.rates_pass()
    }

    pub fn violations(&self) -> usize {
        [self.power, self.energy_splitting, self.phase_range]
            .iter()
            .chain(&self.min_rate)
            .filter(|c| !c.pass)
            .count()
    }
}

pub fn check_constraints(
    w: &BeamformingSet,
    c: &StarCoefficients,
    rates: &RateReport,
    cfg: &SystemConfig,
) -> ConstraintReport {
    let power_margin = cfg.p_max - transmit_power(w);
    let split = c
        .beta_t
        .iter()
        .zip(&c.beta_r)
        .map(|(t, r)| (t + r - 1.0).abs())
        .fold(0.0, f64::max);
    let phase_excess = c
        .theta_t
        .iter()
        .chain(&c.theta_r)
        .map(|&t| {
            if t < 0.0 {
                -t
            } else if t >= TAU {
                t - TAU
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    let phase_ok = c.theta_t.iter().chain(&c.theta_r).all(|t| (0.0..TAU).contains(t));
    ConstraintReport {
        power: ConstraintCheck {
            pass: power_margin >= -CONSTRAINT_TOL,
            margin: power_margin,
        },
        energy_splitting: ConstraintCheck {
            pass: split <= CONSTRAINT_TOL,
            margin: split,
        },
        phase_range: ConstraintCheck {
            pass: phase_ok,
            margin: phase_excess,
        },
        min_rate: rates
            .rates
            .iter()
            .map(|&r| ConstraintCheck {
                pass: r >= cfg.r_min,
                margin: r - cfg.r_min,
            })
            .collect(),
    }
}
