//! Reference policies: random surface coefficients, and an exhaustive grid
//! oracle for tiny instances.
//!
//! The oracle evaluates rates and energy efficiency with its own code path
//! over plain `(re, im)` pairs, and shares nothing with [`crate::phy`]
//! except the channel realization. It performs floating-point operations in the
//! same order as `phy`, so on any grid point the two agree to the last bit
//! unless one of them has a logic error.
//!
//! Grid layout, for `L` phase levels, `S` split levels, `P` power levels and
//! `D` beam directions:
//! * phases: per zone, `L` linear-progressive profiles
//!   `θ_n = 2π ((k·n) mod L) / L`, `k = 0..L` (DFT codebook). For `N = 2`
//!   this covers every per-element combination up to a common zone phase,
//!   which does not change any rate.
//! * split: one transmission fraction `β^T = (s+1)/(S+1)` shared by all
//!   elements.
//! * power: per user `p = (l+1)/P · P_max/U`.
//! * direction: per user one of `D` seeded isotropic unit vectors; a larger
//!   `D` extends the same sequence.
//!
//! Refining `L`, `S+1` or `P` by an integer factor, or increasing `D`, yields
//! a superset of grid points, so the maximum never drops.

use std::f64::consts::TAU;
use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelRealization, Zone};
use crate::ddpg::train::EpisodeAccumulator;
use crate::ddpg::EpisodeMetrics;
use crate::env::{random_beams, StarRisEnv};
use crate::error::{invalid, Error, Result};
use crate::phy::{BeamformingSet, StarCoefficients, SystemConfig};

pub const DEFAULT_GRID_BUDGET: u64 = 10_000_000;

/// Per-episode aggregates for uniformly random surface coefficients and
/// random beam directions at `P_max / U` per user. Channels come from
/// `env_rng`, coefficients from `policy_rng`.
pub fn random_coefficients_policy(
    env: &mut StarRisEnv,
    episodes: usize,
    steps: usize,
    env_rng: &mut impl Rng,
    policy_rng: &mut impl Rng,
) -> Result<Vec<EpisodeMetrics>> {
    let cc = env.config().channel.clone();
    let per_user = env.config().p_max / cc.users() as f64;
    let mut log = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        env.reset(env_rng)?;
        let mut acc = EpisodeAccumulator::default();
        for _ in 0..steps {
            let c = random_coefficients(cc.elements, policy_rng);
            let w = random_beams(cc.users(), cc.antennas, per_user, policy_rng);
            acc.push(&env.evaluate(&c, &w)?);
        }
        log.push(acc.finish(episode));
    }
    Ok(log)
}

/// `θ` uniform on `[0, 2π)`, `β^T` uniform on `[0, 1]`, `β^R = 1 − β^T`.
pub fn random_coefficients(elements: usize, rng: &mut impl Rng) -> StarCoefficients {
    let mut c = StarCoefficients::even(elements);
    for k in 0..elements {
        c.theta_t[k] = rng.random_range(0.0..TAU);
        c.theta_r[k] = rng.random_range(0.0..TAU);
        c.beta_t[k] = rng.random_range(0.0..=1.0);
        c.beta_r[k] = 1.0 - c.beta_t[k];
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub phase_levels: usize,
    pub split_levels: usize,
    pub power_levels: usize,
    pub directions: usize,
    #[serde(default)]
    pub direction_seed: u64,
}

/// Coordinates of one grid point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridIndex {
    pub phase_t: usize,
    pub phase_r: usize,
    pub split: usize,
    pub power: Vec<usize>,
    pub direction: Vec<usize>,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.phase_levels == 0 || self.split_levels == 0 || self.power_levels == 0 || self.directions == 0 {
            return invalid("every grid count must be at least 1");
        }
        Ok(())
    }

    /// `L² · S · (P·D)^U` points.
    pub fn size(&self, users: usize) -> u128 {
        let per_user = (self.power_levels * self.directions) as u128;
        (self.phase_levels as u128).pow(2) * self.split_levels as u128 * per_user.pow(users as u32)
    }

    pub fn phase(&self, profile: usize, element: usize) -> f64 {
        let l = self.phase_levels;
        TAU * (((profile * element) % l) as f64 / l as f64)
    }

    pub fn split(&self, s: usize) -> f64 {
        (s + 1) as f64 / (self.split_levels + 1) as f64
    }

    pub fn power(&self, level: usize, p_max: f64, users: usize) -> f64 {
        ((level + 1) as f64 / self.power_levels as f64) * (p_max / users as f64)
    }

    /// Seeded unit-norm directions; the first `D` of one fixed sequence.
    pub fn direction_set(&self, antennas: usize) -> Vec<Vec<Complex64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.direction_seed);
        (0..self.directions)
            .map(|_| {
                let v: Vec<Complex64> = (0..antennas)
                    .map(|_| {
                        let re: f64 = StandardNormal.sample(&mut rng);
                        let im: f64 = StandardNormal.sample(&mut rng);
                        Complex64::new(re, im)
                    })
                    .collect();
                let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                v.into_iter().map(|z| z / norm).collect()
            })
            .collect()
    }

    /// Mixed-radix decode; phases are the most significant digits, user 0's
    /// direction the least significant after all power digits.
    pub fn index(&self, mut flat: u128, users: usize) -> GridIndex {
        let mut direction = vec![0; users];
        for d in direction.iter_mut().rev() {
            *d = (flat % self.directions as u128) as usize;
            flat /= self.directions as u128;
        }
        let mut power = vec![0; users];
        for p in power.iter_mut().rev() {
            *p = (flat % self.power_levels as u128) as usize;
            flat /= self.power_levels as u128;
        }
        let split = (flat % self.split_levels as u128) as usize;
        flat /= self.split_levels as u128;
        let phase_r = (flat % self.phase_levels as u128) as usize;
        flat /= self.phase_levels as u128;
        GridIndex {
            phase_t: flat as usize,
            phase_r,
            split,
            power,
            direction,
        }
    }

    /// The grid point as `phy` types, for cross-checking.
    pub fn configuration(&self, at: &GridIndex, cfg: &SystemConfig) -> (StarCoefficients, BeamformingSet) {
        let n = cfg.channel.elements;
        let users = cfg.channel.users();
        let bt = self.split(at.split);
        let coeffs = StarCoefficients {
            beta_t: vec![bt; n],
            beta_r: vec![1.0 - bt; n],
            theta_t: (0..n).map(|k| self.phase(at.phase_t, k)).collect(),
            theta_r: (0..n).map(|k| self.phase(at.phase_r, k)).collect(),
        };
        let dirs = self.direction_set(cfg.channel.antennas);
        let beams = (0..users)
            .map(|u| {
                let s = self.power(at.power[u], cfg.p_max, users).sqrt();
                dirs[at.direction[u]].iter().map(|z| z * s).collect()
            })
            .collect();
        (coeffs, BeamformingSet { beams })
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OraclePoint {
    pub flat: u128,
    pub index: GridIndex,
    pub rates: Vec<f64>,
    pub transmit_power: f64,
    pub energy_efficiency: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub points: u128,
    /// Highest-EE point meeting every rate requirement; lowest index on ties.
    pub best_feasible: Option<OraclePoint>,
    /// Highest-EE point regardless of feasibility.
    pub best_any: OraclePoint,
    pub feasible_points: u128,
}

impl OracleResult {
    pub fn best_feasible_ee(&self) -> f64 {
        self.best_feasible.as_ref().map_or(0.0, |p| p.energy_efficiency)
    }
}

type C = (f64, f64);

fn cmul(a: C, b: C) -> C {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

fn cadd(a: C, b: C) -> C {
    (a.0 + b.0, a.1 + b.1)
}

fn abs2(a: C) -> f64 {
    a.0 * a.0 + a.1 * a.1
}

/// Exhaustive enumeration in flat-index order. `visit` sees every point.
pub fn grid_oracle_visit(
    ch: &ChannelRealization,
    cfg: &SystemConfig,
    grid: &GridSpec,
    budget: u64,
    mut visit: impl FnMut(&OraclePoint) -> Result<()>,
) -> Result<OracleResult> {
    grid.validate()?;
    ch.check_dims(&cfg.channel)?;
    let cc = &cfg.channel;
    let (m, n, users) = (cc.antennas, cc.elements, cc.users());
    let size = grid.size(users);
    if size > budget as u128 {
        return Err(Error::BudgetExceeded { size, budget });
    }

    let g: Vec<Vec<C>> = (0..n)
        .map(|k| (0..m).map(|a| {
            let z = ch.g.get(k, a);
            (z.re, z.im)
        }).collect())
        .collect();
    let h: Vec<Vec<C>> = ch
        .h
        .iter()
        .map(|hu| (0..n).map(|k| {
            let z = hu.get(k, 0);
            (z.re, -z.im)
        }).collect())
        .collect();

    // candidate beams: (power level, direction) scaled entries and their norms
    let dirs = grid.direction_set(m);
    let per_user = grid.power_levels * grid.directions;
    let mut beams: Vec<Vec<C>> = Vec::with_capacity(per_user);
    let mut beam_power: Vec<f64> = Vec::with_capacity(per_user);
    for l in 0..grid.power_levels {
        let s = grid.power(l, cfg.p_max, users).sqrt();
        for d in &dirs {
            let b: Vec<C> = d.iter().map(|z| (z.re * s, z.im * s)).collect();
            beam_power.push(b.iter().fold(0.0, |acc, &z| acc + abs2(z)));
            beams.push(b);
        }
    }

    let mut best_feasible: Option<OraclePoint> = None;
    let mut best_any: Option<OraclePoint> = None;
    let mut feasible_points = 0u128;
    let mut flat = 0u128;
    let mut choice = vec![0usize; users];
    let mut received = vec![vec![0.0; per_user]; users];

    for pt in 0..grid.phase_levels {
        for pr in 0..grid.phase_levels {
            for s in 0..grid.split_levels {
                let bt = grid.split(s);
                let br = 1.0 - bt;
                // cascaded rows per user
                let cascaded: Vec<Vec<C>> = (0..users)
                    .map(|u| {
                        let (amp, profile) = match cc.zone(u) {
                            Zone::Transmission => (bt.sqrt(), pt),
                            Zone::Reflection => (br.sqrt(), pr),
                        };
                        let mut row = vec![(0.0, 0.0); m];
                        for k in 0..n {
                            let th = grid.phase(profile, k);
                            let phi = (amp * th.cos(), amp * th.sin());
                            let w = cmul(h[u][k], phi);
                            for a in 0..m {
                                row[a] = cadd(row[a], cmul(w, g[k][a]));
                            }
                        }
                        row
                    })
                    .collect();
                let strength: Vec<f64> = cascaded
                    .iter()
                    .map(|row| row.iter().fold(0.0, |acc, &z| acc + abs2(z)))
                    .collect();
                let mut order: Vec<usize> = (0..users).collect();
                order.sort_by(|&a, &b| strength[a].total_cmp(&strength[b]).then(a.cmp(&b)));
                for j in 0..users {
                    for (c, b) in beams.iter().enumerate() {
                        let mut acc = (0.0, 0.0);
                        for a in 0..m {
                            acc = cadd(acc, cmul(cascaded[j][a], b[a]));
                        }
                        received[j][c] = abs2(acc);
                    }
                }

                let combos = (per_user as u128).pow(users as u32);
                for _ in 0..combos {
                    let mut rates = vec![0.0; users];
                    for p in 0..users {
                        let i = order[p];
                        let mut worst = f64::INFINITY;
                        for &j in &order[p..] {
                            let mut interference = 0.0;
                            for &z in &order[p + 1..] {
                                interference += received[j][choice[z]];
                            }
                            let r = (1.0 + received[j][choice[i]] / (interference + cfg.noise_power)).log2();
                            worst = worst.min(r);
                        }
                        rates[i] = worst;
                    }
                    let power = choice.iter().fold(0.0, |acc, &c| acc + beam_power[c]);
                    let total = rates.iter().fold(0.0, |acc, r| acc + r);
                    let ee = cfg.bandwidth * total / (power / cfg.amp_efficiency + cfg.circuit_power);
                    let feasible = rates.iter().all(|&r| r >= cfg.r_min);

                    let point = OraclePoint {
                        flat,
                        index: GridIndex {
                            phase_t: pt,
                            phase_r: pr,
                            split: s,
                            power: choice.iter().map(|c| c / grid.directions).collect(),
                            direction: choice.iter().map(|c| c % grid.directions).collect(),
                        },
                        rates,
                        transmit_power: power,
                        energy_efficiency: ee,
                        feasible,
                    };
                    visit(&point)?;
                    if feasible {
                        feasible_points += 1;
                        if best_feasible.as_ref().is_none_or(|b| ee > b.energy_efficiency) {
                            best_feasible = Some(point.clone());
                        }
                    }
                    if best_any.as_ref().is_none_or(|b| ee > b.energy_efficiency) {
                        best_any = Some(point);
                    }

                    flat += 1;
                    // odometer over users' (power, direction) choices, last user fastest
                    advance(&mut choice, grid);
                }
            }
        }
    }
    Ok(OracleResult {
        points: size,
        best_feasible,
        best_any: best_any.expect("grid is non-empty"),
        feasible_points,
    })
}

/// Steps the per-user choice digits so that flat order matches
/// [`GridSpec::index`]: all power digits are more significant than all
/// direction digits.
fn advance(choice: &mut [usize], grid: &GridSpec) {
    let users = choice.len();
    let (pl, dl) = (grid.power_levels, grid.directions);
    let mut digits: Vec<usize> = choice.iter().map(|c| c / dl).chain(choice.iter().map(|c| c % dl)).collect();
    for pos in (0..2 * users).rev() {
        let radix = if pos < users { pl } else { dl };
        digits[pos] += 1;
        if digits[pos] < radix {
            break;
        }
        digits[pos] = 0;
    }
    for u in 0..users {
        choice[u] = digits[u] * dl + digits[users + u];
    }
}

pub fn grid_oracle(ch: &ChannelRealization, cfg: &SystemConfig, grid: &GridSpec, budget: u64) -> Result<OracleResult> {
    grid_oracle_visit(ch, cfg, grid, budget, |_| Ok(()))
}

/// Enumerates the grid and streams one CSV row per point to `out`.
pub fn grid_oracle_table<W: Write>(
    ch: &ChannelRealization,
    cfg: &SystemConfig,
    grid: &GridSpec,
    budget: u64,
    out: W,
) -> Result<OracleResult> {
    let users = cfg.channel.users();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["index".to_string(), "phase_t".into(), "phase_r".into(), "split".into()];
    header.extend((0..users).map(|u| format!("power_{u}")));
    header.extend((0..users).map(|u| format!("direction_{u}")));
    header.extend((0..users).map(|u| format!("rate_{u}")));
    header.extend(["transmit_power".into(), "ee".into(), "feasible".into()]);
    w.write_record(&header)?;
    let result = grid_oracle_visit(ch, cfg, grid, budget, |p| {
        let mut row = vec![
            p.flat.to_string(),
            p.index.phase_t.to_string(),
            p.index.phase_r.to_string(),
            p.index.split.to_string(),
        ];
        row.extend(p.index.power.iter().map(|v| v.to_string()));
        row.extend(p.index.direction.iter().map(|v| v.to_string()));
        row.extend(p.rates.iter().map(|v| v.to_string()));
        row.push(p.transmit_power.to_string());
        row.push(p.energy_efficiency.to_string());
        row.push(u8::from(p.feasible).to_string());
        w.write_record(&row)?;
        Ok(())
    })?;
    w.flush()?;
    Ok(result)
}
