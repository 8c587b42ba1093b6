//! Reinforcement-learning environment around the STAR-RIS downlink.
//!
//! Actions are flat vectors in `(-1, 1)` laid out as
//! `[Re ω (per user) | Im ω (per user) | Re Φ^T | Im Φ^T | Re Φ^R | Im Φ^R]`.
//! They are projected onto the feasible set (power budget, energy splitting,
//! phase range) before evaluation, so every emitted configuration is
//! physically valid. Only the minimum-rate requirement can be violated, and
//! that is signalled through a negative reward.
//!
//! States hold, per user, the achievable rate, the beamformer power and the
//! `M` squared magnitudes of the cascaded channel row.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::{sample_channels, ChannelConfig, ChannelRealization};
use crate::error::{invalid, Error, Result};
use crate::phy::{
    check_constraints, effective_channels, energy_efficiency, order_by_gain, rates_from_channels,
    transmit_power, BeamformingSet, ConstraintReport, RateReport, StarCoefficients, SystemConfig,
};

pub const DEFAULT_REWARD_SCALE: f64 = 1e-5;

pub fn action_dim(cfg: &ChannelConfig) -> usize {
    2 * cfg.antennas * cfg.users() + 4 * cfg.elements
}

pub fn state_dim(cfg: &ChannelConfig) -> usize {
    cfg.users() * (2 + cfg.antennas)
}

/// Un-normalized configuration read straight from an action vector.
#[derive(Debug, Clone, PartialEq)]
pub struct RawAction {
    pub beams: BeamformingSet,
    pub phi_t: Vec<Complex64>,
    pub phi_r: Vec<Complex64>,
}

pub fn decode_action(action: &[f64], cfg: &ChannelConfig) -> Result<RawAction> {
    if action.len() != action_dim(cfg) {
        return invalid(format!(
            "action has length {}, expected {}",
            action.len(),
            action_dim(cfg)
        ));
    }
    let (m, u, n) = (cfg.antennas, cfg.users(), cfg.elements);
    let (re_w, rest) = action.split_at(m * u);
    let (im_w, rest) = rest.split_at(m * u);
    let (re_t, rest) = rest.split_at(n);
    let (im_t, rest) = rest.split_at(n);
    let (re_r, im_r) = rest.split_at(n);
    let beams = (0..u)
        .map(|k| {
            (0..m)
                .map(|a| Complex64::new(re_w[k * m + a], im_w[k * m + a]))
                .collect()
        })
        .collect();
    let zip = |re: &[f64], im: &[f64]| re.iter().zip(im).map(|(&r, &i)| Complex64::new(r, i)).collect();
    Ok(RawAction {
        beams: BeamformingSet::new(beams)?,
        phi_t: zip(re_t, im_t),
        phi_r: zip(re_r, im_r),
    })
}

/// Inverse of [`decode_action`].
pub fn encode_action(raw: &RawAction) -> Vec<f64> {
    let mut out = Vec::new();
    out.extend(raw.beams.beams.iter().flatten().map(|z| z.re));
    out.extend(raw.beams.beams.iter().flatten().map(|z| z.im));
    out.extend(raw.phi_t.iter().map(|z| z.re));
    out.extend(raw.phi_t.iter().map(|z| z.im));
    out.extend(raw.phi_r.iter().map(|z| z.re));
    out.extend(raw.phi_r.iter().map(|z| z.im));
    out
}

/// Rescales each raw beamformer by `√λ_ε`, `λ_ε = P̂_ε / P_ε` with
/// `P̂_ε = ‖ω_ε‖² P_max / (U ‖ω_tanh^max‖²)` and `‖ω_tanh^max‖² = 2M`.
/// The total power therefore never exceeds `P_max`, with equality only at the
/// tanh boundary. A zero beamformer stays zero.
pub fn normalize_beamforming(raw: &BeamformingSet, p_max: f64) -> BeamformingSet {
    let users = raw.users() as f64;
    let max_norm_sq = 2.0 * raw.antennas() as f64;
    let beams = raw
        .beams
        .iter()
        .map(|w| {
            let power: f64 = w.iter().map(|z| z.norm_sqr()).sum();
            if power == 0.0 {
                return w.clone();
            }
            let target = power / (users * max_norm_sq) * p_max;
            let scale = (target / power).sqrt();
            w.iter().map(|z| z * scale).collect()
        })
        .collect();
    BeamformingSet { beams }
}

/// Four-quadrant angle folded into `[0, 2π)`.
pub fn wrapped_angle(z: Complex64) -> f64 {
    let mut t = z.im.atan2(z.re);
    if t < 0.0 {
        t += TAU;
    }
    if t >= TAU {
        t = 0.0;
    }
    t
}

/// Coefficients keep the angle of each raw diagonal entry and split energy
/// in proportion to the squared moduli, so `β_T + β_R = 1` by construction.
/// Elements where both raw entries are zero fall back to an even split with
/// zero phase; their indices are returned alongside.
pub fn normalize_coefficients(phi_t: &[Complex64], phi_r: &[Complex64]) -> Result<(StarCoefficients, Vec<usize>)> {
    if phi_t.len() != phi_r.len() {
        return invalid("zone diagonals differ in length");
    }
    let n = phi_t.len();
    let mut c = StarCoefficients::even(n);
    let mut degenerate = Vec::new();
    for k in 0..n {
        let (pt, pr) = (phi_t[k].norm_sqr(), phi_r[k].norm_sqr());
        let total = pt + pr;
        if total == 0.0 || !total.is_finite() {
            degenerate.push(k);
            continue;
        }
        c.beta_t[k] = pt / total;
        c.beta_r[k] = 1.0 - c.beta_t[k];
        c.theta_t[k] = wrapped_angle(phi_t[k]);
        c.theta_r[k] = wrapped_angle(phi_r[k]);
    }
    Ok((c, degenerate))
}

/// `[R_ε, ‖ω_ε‖², |g_ε,1|², …, |g_ε,M|²]` for every user in index order.
pub fn build_state(rates: &RateReport, beams: &BeamformingSet, gains: &[Vec<Complex64>]) -> Vec<f64> {
    let mut s = Vec::with_capacity(gains.len() * (2 + beams.antennas()));
    for (u, g) in gains.iter().enumerate() {
        s.push(rates.rates[u]);
        s.push(beams.power(u));
        s.extend(g.iter().map(|z| z.norm_sqr()));
    }
    s
}

/// EE when every user meets `r_min`, otherwise `−|min_ε R_ε − r_min| · EE`.
pub fn reward(rates: &RateReport, ee: f64, r_min: f64) -> f64 {
    let worst = rates.min();
    if worst >= r_min {
        ee
    } else {
        -(worst - r_min).abs() * ee
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub state: Vec<f64>,
    /// Punished reward in bits per joule.
    pub reward: f64,
    /// `reward × reward_scale`, the learning signal.
    pub scaled_reward: f64,
    pub energy_efficiency: f64,
    pub min_rate: f64,
    pub transmit_power: f64,
    pub constraints: ConstraintReport,
    pub rates: RateReport,
    pub beams: BeamformingSet,
    pub coefficients: StarCoefficients,
}

/// Episodic environment. Channels are drawn on [`reset`](Self::reset) unless a
/// fixed realization was supplied, and stay constant within the episode.
#[derive(Debug, Clone)]
pub struct StarRisEnv {
    cfg: SystemConfig,
    reward_scale: f64,
    fixed: Option<ChannelRealization>,
    channel: Option<ChannelRealization>,
    state: Option<Vec<f64>>,
}

impl StarRisEnv {
    pub fn new(cfg: SystemConfig, reward_scale: f64) -> Result<Self> {
        cfg.validate()?;
        if !(reward_scale > 0.0) {
            return invalid("reward scale must be positive");
        }
        Ok(Self {
            cfg,
            reward_scale,
            fixed: None,
            channel: None,
            state: None,
        })
    }

    /// Every reset reuses `channel` instead of drawing a new one.
    pub fn with_fixed_channel(cfg: SystemConfig, reward_scale: f64, channel: ChannelRealization) -> Result<Self> {
        channel.check_dims(&cfg.channel)?;
        let mut env = Self::new(cfg, reward_scale)?;
        env.fixed = Some(channel);
        Ok(env)
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn reward_scale(&self) -> f64 {
        self.reward_scale
    }

    pub fn action_dim(&self) -> usize {
        action_dim(&self.cfg.channel)
    }

    pub fn state_dim(&self) -> usize {
        state_dim(&self.cfg.channel)
    }

    pub fn channel(&self) -> Option<&ChannelRealization> {
        self.channel.as_ref()
    }

    pub fn state(&self) -> Option<&[f64]> {
        self.state.as_deref()
    }

    /// Starts an episode: new channels, even amplitude split, uniform random
    /// phases and random beam directions at `P_max / U` per user.
    pub fn reset(&mut self, rng: &mut impl Rng) -> Result<Vec<f64>> {
        let ch = match &self.fixed {
            Some(ch) => ch.clone(),
            None => sample_channels(&self.cfg.channel, rng)?,
        };
        let cc = &self.cfg.channel;
        let mut coeffs = StarCoefficients::even(cc.elements);
        for k in 0..cc.elements {
            coeffs.theta_t[k] = rng.random_range(0.0..TAU);
            coeffs.theta_r[k] = rng.random_range(0.0..TAU);
        }
        let beams = random_beams(cc.users(), cc.antennas, self.cfg.p_max / cc.users() as f64, rng);
        self.channel = Some(ch);
        let result = self.evaluate(&coeffs, &beams)?;
        self.state = Some(result.state.clone());
        Ok(result.state)
    }

    /// Decodes, normalizes and evaluates one action on the current channels.
    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.channel.is_none() {
            return Err(Error::InvalidState("step called before reset".into()));
        }
        let raw = decode_action(action, &self.cfg.channel)?;
        let beams = normalize_beamforming(&raw.beams, self.cfg.p_max);
        let (coeffs, _) = normalize_coefficients(&raw.phi_t, &raw.phi_r)?;
        let result = self.evaluate(&coeffs, &beams)?;
        self.state = Some(result.state.clone());
        Ok(result)
    }

    /// Scores an explicit configuration on the current channels without
    /// touching the episode state.
    pub fn evaluate(&self, coeffs: &StarCoefficients, beams: &BeamformingSet) -> Result<StepResult> {
        let ch = self
            .channel
            .as_ref()
            .ok_or_else(|| Error::InvalidState("no channel realization; call reset first".into()))?;
        let cc = &self.cfg.channel;
        if coeffs.elements() != cc.elements || beams.users() != cc.users() || beams.antennas() != cc.antennas {
            return invalid("configuration does not match the system dimensions");
        }
        let gains = effective_channels(cc, ch, coeffs);
        let order = order_by_gain(&gains);
        let rates = rates_from_channels(&gains, beams, self.cfg.noise_power, &order)?;
        let power = transmit_power(beams);
        let ee = energy_efficiency(&rates, power, &self.cfg);
        let r = reward(&rates, ee, self.cfg.r_min);
        Ok(StepResult {
            state: build_state(&rates, beams, &gains),
            reward: r,
            scaled_reward: r * self.reward_scale,
            energy_efficiency: ee,
            min_rate: rates.min(),
            transmit_power: power,
            constraints: check_constraints(beams, coeffs, &rates, &self.cfg),
            rates,
            beams: beams.clone(),
            coefficients: coeffs.clone(),
        })
    }
}

/// Isotropic random directions, each scaled to `power`.
pub fn random_beams(users: usize, antennas: usize, power: f64, rng: &mut impl Rng) -> BeamformingSet {
    let beams = (0..users)
        .map(|_| {
            let v: Vec<Complex64> = (0..antennas)
                .map(|_| {
                    let re: f64 = StandardNormal.sample(rng);
                    let im: f64 = StandardNormal.sample(rng);
                    Complex64::new(re, im)
                })
                .collect();
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let scale = power.sqrt() / norm;
            v.into_iter().map(|z| z * scale).collect()
        })
        .collect();
    BeamformingSet { beams }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn small() -> SystemConfig {
        SystemConfig {
            channel: ChannelConfig {
                antennas: 2,
                elements: 3,
                users_t: 1,
                users_r: 2,
                ..ChannelConfig::default()
            },
            ..SystemConfig::default()
        }
    }

    #[test]
    fn action_layout() {
        let cfg = ChannelConfig {
            antennas: 1,
            elements: 1,
            users_t: 1,
            users_r: 0,
            ..ChannelConfig::default()
        };
        let raw = decode_action(&[0.5, -0.5, 0.1, 0.2, 0.3, 0.4], &cfg).unwrap();
        assert_eq!(raw.beams.beams[0][0], c(0.5, -0.5));
        assert_eq!(raw.phi_t[0], c(0.1, 0.2));
        assert_eq!(raw.phi_r[0], c(0.3, 0.4));

        let zero = decode_action(&vec![0.0; 6], &cfg).unwrap();
        assert_eq!(transmit_power(&zero.beams), 0.0);
        assert!(zero.phi_t.iter().chain(&zero.phi_r).all(|z| z.norm() == 0.0));
        assert!(decode_action(&[0.0; 5], &cfg).is_err());
    }

    proptest! {
        #[test]
        fn layout_round_trip(values in prop::collection::vec(-1.0f64..1.0, 2 * 2 * 3 + 4 * 3)) {
            let cfg = small().channel;
            let raw = decode_action(&values, &cfg).unwrap();
            prop_assert_eq!(encode_action(&raw), values);
        }

        #[test]
        fn normalization_invariants(values in prop::collection::vec(-0.999_999f64..0.999_999, 2 * 2 * 3 + 4 * 3)) {
            let cfg = small();
            let raw = decode_action(&values, &cfg.channel).unwrap();
            let w = normalize_beamforming(&raw.beams, cfg.p_max);
            prop_assert!(transmit_power(&w) <= cfg.p_max + 1e-9);
            for (a, b) in raw.beams.beams.iter().zip(&w.beams) {
                // collinear with a non-negative real factor
                let p: f64 = a.iter().map(|z| z.norm_sqr()).sum();
                if p > 0.0 {
                    let k = (b.iter().map(|z| z.norm_sqr()).sum::<f64>() / p).sqrt();
                    for (x, y) in a.iter().zip(b) {
                        prop_assert!((x * k - y).norm() < 1e-15);
                    }
                }
            }
            let (coeffs, _) = normalize_coefficients(&raw.phi_t, &raw.phi_r).unwrap();
            coeffs.validate().unwrap();
            for k in 0..3 {
                prop_assert!((coeffs.beta_t[k] + coeffs.beta_r[k] - 1.0).abs() <= 1e-12);
                for (z, th) in [(raw.phi_t[k], coeffs.theta_t[k]), (raw.phi_r[k], coeffs.theta_r[k])] {
                    if z.norm() > 0.0 {
                        let unit = Complex64::from_polar(1.0, th);
                        prop_assert!((unit - z / z.norm()).norm() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn beamforming_examples() {
        let raw = BeamformingSet::new(vec![vec![c(1.0, 1.0), c(1.0, 1.0)]]).unwrap();
        let w = normalize_beamforming(&raw, 0.1);
        assert_relative_eq!(transmit_power(&w), 0.1, epsilon = 1e-16);
        let zero = normalize_beamforming(&BeamformingSet::zeros(2, 3), 0.1);
        assert_eq!(transmit_power(&zero), 0.0);
        let boundary = BeamformingSet::new(vec![vec![c(1.0, -1.0), c(-1.0, 1.0)]; 4]).unwrap();
        assert_relative_eq!(transmit_power(&normalize_beamforming(&boundary, 2.0)), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn coefficient_examples() {
        let (cs, deg) = normalize_coefficients(&[c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0)], &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert!(deg.is_empty());
        assert_eq!((cs.beta_t[0], cs.beta_r[0]), (0.5, 0.5));
        assert_eq!((cs.theta_t[0], cs.theta_r[0]), (0.0, 0.0));
        assert_relative_eq!(cs.theta_t[1], PI / 2.0, epsilon = 1e-15);
        // plain arctan(im/re) would give 0 here
        assert_relative_eq!(cs.theta_t[2], PI, epsilon = 1e-15);
        assert_relative_eq!(wrapped_angle(c(0.0, -1.0)), 1.5 * PI, epsilon = 1e-15);
        assert_eq!(wrapped_angle(c(1.0, -1e-300)), 0.0);

        let (cs, deg) = normalize_coefficients(&[c(0.0, 0.0)], &[c(0.0, 0.0)]).unwrap();
        assert_eq!(deg, vec![0]);
        assert_eq!(cs, StarCoefficients::even(1));
    }

    #[test]
    fn reward_branches() {
        let rep = |rates: Vec<f64>| RateReport {
            order: (0..rates.len()).collect(),
            rates,
            pairs: vec![],
        };
        assert_eq!(reward(&rep(vec![0.4854, 2.8074]), 46_100.0, 0.1), 46_100.0);
        assert_relative_eq!(reward(&rep(vec![0.05, 2.0]), 1000.0, 0.1), -50.0, epsilon = 1e-9);
        assert_eq!(reward(&rep(vec![0.1, 2.0]), 7.0, 0.1), 7.0);
    }

    #[test]
    fn state_layout() {
        let rates = RateReport {
            rates: vec![1.5],
            order: vec![0],
            pairs: vec![],
        };
        let w = BeamformingSet::new(vec![vec![c(0.3, 0.4)]]).unwrap();
        let s = build_state(&rates, &w, &[vec![c(0.0, 2.0)]]);
        assert_eq!(s.len(), 3);
        assert_eq!(s[0], 1.5);
        assert_relative_eq!(s[1], 0.25, epsilon = 1e-16);
        assert_eq!(s[2], 4.0);
    }

    #[test]
    fn reset_and_step_contract() {
        let cfg = small();
        let mut env = StarRisEnv::new(cfg.clone(), DEFAULT_REWARD_SCALE).unwrap();
        assert!(matches!(env.step(&vec![0.0; env.action_dim()]), Err(Error::InvalidState(_))));

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let s0 = env.reset(&mut rng).unwrap();
        assert_eq!(s0.len(), env.state_dim());
        let again = StarRisEnv::new(cfg.clone(), DEFAULT_REWARD_SCALE)
            .unwrap()
            .reset(&mut ChaCha8Rng::seed_from_u64(12))
            .unwrap();
        assert_eq!(s0, again);
        let power: f64 = (0..3).map(|u| s0[u * 4 + 1]).sum();
        assert_relative_eq!(power, cfg.p_max, epsilon = 1e-9);

        let action: Vec<f64> = (0..env.action_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = env.step(&action).unwrap();
        let b = env.step(&action).unwrap();
        assert_eq!(a, b);
        assert!(a.constraints.physical_pass());
        let recomputed = energy_efficiency(&a.rates, a.transmit_power, &cfg);
        assert_eq!(a.energy_efficiency, recomputed);
        assert_eq!(a.scaled_reward, a.reward * DEFAULT_REWARD_SCALE);
        assert!(env.step(&action[1..]).is_err());
    }

    #[test]
    fn channel_features_match_triple_sum() {
        let cfg = small();
        let mut env = StarRisEnv::new(cfg.clone(), DEFAULT_REWARD_SCALE).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        env.reset(&mut rng).unwrap();
        let action: Vec<f64> = (0..env.action_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out = env.step(&action).unwrap();
        let ch = env.channel().unwrap();
        let co = &out.coefficients;
        for u in 0..3 {
            let (beta, theta) = match cfg.channel.zone(u) {
                crate::channel::Zone::Transmission => (&co.beta_t, &co.theta_t),
                crate::channel::Zone::Reflection => (&co.beta_r, &co.theta_r),
            };
            for m in 0..2 {
                let mut acc = Complex64::new(0.0, 0.0);
                for n in 0..3 {
                    let phi = Complex64::from_polar(beta[n].sqrt(), theta[n]);
                    acc += ch.h[u].get(n, 0).conj() * phi * ch.g.get(n, m);
                }
                let got = out.state[u * 4 + 2 + m];
                assert!((got - acc.norm_sqr()).abs() <= 1e-12 * acc.norm_sqr().max(1e-30), "{got} vs {}", acc.norm_sqr());
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn reset_spends_full_budget(seed in any::<u64>()) {
            let cfg = small();
            let mut env = StarRisEnv::new(cfg.clone(), DEFAULT_REWARD_SCALE).unwrap();
            let s = env.reset(&mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let power: f64 = (0..3).map(|u| s[u * 4 + 1]).sum();
            prop_assert!((power - cfg.p_max).abs() <= 1e-9);
            prop_assert!(s.iter().all(|x| x.is_finite() && *x >= 0.0));
        }
    }

    #[test]
    fn zero_beams_keep_channel_features() {
        let cfg = small();
        let mut env = StarRisEnv::new(cfg, DEFAULT_REWARD_SCALE).unwrap();
        env.reset(&mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let coeffs = StarCoefficients::even(3);
        let on = env.evaluate(&coeffs, &random_beams(3, 2, 0.01, &mut ChaCha8Rng::seed_from_u64(1))).unwrap();
        let off = env.evaluate(&coeffs, &BeamformingSet::zeros(3, 2)).unwrap();
        for u in 0..3 {
            assert_eq!(off.state[u * 4], 0.0);
            assert_eq!(off.state[u * 4 + 1], 0.0);
            assert_eq!(off.state[u * 4 + 2..u * 4 + 4], on.state[u * 4 + 2..u * 4 + 4]);
        }
        assert_eq!(off.energy_efficiency, 0.0);
        assert!(off.reward <= 0.0);
    }
}
