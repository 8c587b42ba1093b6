//! Rician fading channels between the base station, the STAR-RIS and the users.
//!
//! Users `0..A` sit in the transmission zone behind the surface, users
//! `A..A+B` in the reflection zone in front of it. Direct BS–user links are
//! assumed blocked.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numerics::ComplexMatrix;

/// Which side of the surface a user is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Zone {
    /// Behind the surface, served by the transmitted signal.
    Transmission,
    /// In front of the surface, served by the reflected signal.
    Reflection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// BS antennas `M`.
    pub antennas: usize,
    /// STAR-RIS elements `N`.
    pub elements: usize,
    /// Users in the transmission zone `A`.
    pub users_t: usize,
    /// Users in the reflection zone `B`.
    pub users_r: usize,
    /// BS to surface distance in meters.
    pub bs_ris_distance: f64,
    /// Surface to user distance interval in meters, sampled uniformly per episode.
    pub user_distance: (f64, f64),
    /// Path loss at one meter, linear.
    pub ref_path_loss: f64,
    pub exponent_bs_ris: f64,
    pub exponent_ris_user: f64,
    /// Rician factors, linear.
    pub rician_bs_ris: f64,
    pub rician_ris_user: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            antennas: 10,
            elements: 30,
            users_t: 2,
            users_r: 2,
            bs_ris_distance: 50.0,
            user_distance: (5.0, 10.0),
            ref_path_loss: 1e-3,
            exponent_bs_ris: 2.2,
            exponent_ris_user: 2.5,
            rician_bs_ris: 10.0,
            rician_ris_user: 10.0,
        }
    }
}

impl ChannelConfig {
    pub fn users(&self) -> usize {
        self.users_t + self.users_r
    }

    pub fn zone(&self, user: usize) -> Zone {
        if user < self.users_t {
            Zone::Transmission
        } else {
            Zone::Reflection
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.antennas == 0 || self.elements == 0 {
            return invalid("antenna and element counts must be positive");
        }
        if self.users() == 0 {
            return invalid("at least one user is required");
        }
        let (lo, hi) = self.user_distance;
        if !(self.bs_ris_distance > 0.0) || !(lo > 0.0) || !(hi >= lo) {
            return invalid("distances must be positive with min <= max");
        }
        if !(self.ref_path_loss > 0.0) {
            return invalid("reference path loss must be positive");
        }
        if !(self.exponent_bs_ris > 0.0) || !(self.exponent_ris_user > 0.0) {
            return invalid("path-loss exponents must be positive");
        }
        if !(self.rician_bs_ris >= 0.0) || !(self.rician_ris_user >= 0.0) {
            return invalid("Rician factors must be non-negative");
        }
        Ok(())
    }
}

/// One block-static channel draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    /// Surface ← BS channel, `N × M`.
    pub g: ComplexMatrix,
    /// Surface → user channels, `N × 1` each.
    pub h: Vec<ComplexMatrix>,
    pub user_distances: Vec<f64>,
}

impl ChannelRealization {
    pub fn antennas(&self) -> usize {
        self.g.cols()
    }

    pub fn elements(&self) -> usize {
        self.g.rows()
    }

    pub fn users(&self) -> usize {
        self.h.len()
    }

    pub fn check_dims(&self, cfg: &ChannelConfig) -> Result<()> {
        if self.g.rows() != cfg.elements
            || self.g.cols() != cfg.antennas
            || self.h.len() != cfg.users()
            || self.h.iter().any(|h| h.rows() != cfg.elements || h.cols() != 1)
        {
            return invalid("channel realization does not match the configuration");
        }
        Ok(())
    }
}

/// Large-scale amplitude `√(ρ0 / d^α)`.
pub fn path_loss_amplitude(distance: f64, exponent: f64, ref_path_loss: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return invalid(format!("distance must be positive, got {distance}"));
    }
    Ok((ref_path_loss / distance.powf(exponent)).sqrt())
}

/// Circularly-symmetric complex Gaussian with unit variance.
fn complex_gaussian(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Rician mixture of an all-ones line-of-sight component and a Rayleigh part.
fn rician_matrix(
    rows: usize,
    cols: usize,
    amplitude: f64,
    rician: f64,
    rng: &mut impl Rng,
) -> ComplexMatrix {
    let los = (rician / (1.0 + rician)).sqrt();
    let nlos = (1.0 / (1.0 + rician)).sqrt();
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        (Complex64::new(los, 0.0) + complex_gaussian(rng) * nlos) * amplitude
    })
}

/// Draws user distances, then `G`, then each `h_ε`.
pub fn sample_channels(cfg: &ChannelConfig, rng: &mut impl Rng) -> Result<ChannelRealization> {
    cfg.validate()?;
    let (lo, hi) = cfg.user_distance;
    let user_distances: Vec<f64> = (0..cfg.users())
        .map(|_| if hi > lo { rng.random_range(lo..hi) } else { lo })
        .collect();
    let g_amp = path_loss_amplitude(cfg.bs_ris_distance, cfg.exponent_bs_ris, cfg.ref_path_loss)?;
    let g = rician_matrix(cfg.elements, cfg.antennas, g_amp, cfg.rician_bs_ris, rng);
    let mut h = Vec::with_capacity(cfg.users());
    for &d in &user_distances {
        let amp = path_loss_amplitude(d, cfg.exponent_ris_user, cfg.ref_path_loss)?;
        h.push(rician_matrix(cfg.elements, 1, amp, cfg.rician_ris_user, rng));
    }
    Ok(ChannelRealization {
        g,
        h,
        user_distances,
    })
}

/// `hᴴ Φ G` as a `1 × M` matrix.
pub fn cascade(h: &ComplexMatrix, phi: &ComplexMatrix, g: &ComplexMatrix) -> Result<ComplexMatrix> {
    if h.cols() != 1 || phi.rows() != h.rows() || phi.cols() != g.rows() {
        return invalid("cascade dimensions do not line up");
    }
    h.adjoint().matmul(phi)?.matmul(g)
}

/// `hᴴ diag(φ) G` without materializing the diagonal matrix.
pub fn cascade_diagonal(h: &ComplexMatrix, phi: &[Complex64], g: &ComplexMatrix) -> Vec<Complex64> {
    let (n, m) = (g.rows(), g.cols());
    let mut out = vec![Complex64::new(0.0, 0.0); m];
    for k in 0..n {
        let w = h.get(k, 0).conj() * phi[k];
        let row = &g.data()[k * m..(k + 1) * m];
        for (o, gv) in out.iter_mut().zip(row) {
            *o += w * gv;
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MatrixDump {
    rows: usize,
    cols: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl MatrixDump {
    fn from(m: &ComplexMatrix) -> Self {
        Self {
            rows: m.rows(),
            cols: m.cols(),
            re: m.data().iter().map(|z| z.re).collect(),
            im: m.data().iter().map(|z| z.im).collect(),
        }
    }

    fn into_matrix(self) -> Result<ComplexMatrix> {
        if self.re.len() != self.im.len() {
            return invalid("real and imaginary parts differ in length");
        }
        let data = self
            .re
            .into_iter()
            .zip(self.im)
            .map(|(r, i)| Complex64::new(r, i))
            .collect();
        ComplexMatrix::from_vec(self.rows, self.cols, data)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ChannelDump {
    g: MatrixDump,
    h: Vec<MatrixDump>,
    user_distances: Vec<f64>,
}

impl ChannelRealization {
    /// JSON document with separate real and imaginary arrays.
    pub fn to_json(&self) -> Result<String> {
        let dump = ChannelDump {
            g: MatrixDump::from(&self.g),
            h: self.h.iter().map(MatrixDump::from).collect(),
            user_distances: self.user_distances.clone(),
        };
        Ok(serde_json::to_string_pretty(&dump)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let dump: ChannelDump = serde_json::from_str(text)?;
        let g = dump.g.into_matrix()?;
        let h = dump
            .h
            .into_iter()
            .map(MatrixDump::into_matrix)
            .collect::<Result<Vec<_>>>()?;
        if h.iter().any(|hv| hv.rows() != g.rows() || hv.cols() != 1) {
            return invalid("user channel shape does not match G");
        }
        Ok(Self {
            g,
            h,
            user_distances: dump.user_distances,
        })
    }
}
