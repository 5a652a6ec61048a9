//! Closed-form channel statistics.
//!
//! For one user `k` and one hover point `l` the second moment of the composite
//! channel `g = g_r^H diag(phi) g_t + g_d` is
//!
//! ```text
//! D(phi) = phi^H A phi + 2 Re{a^H phi} + beta_d
//! A      = c1 psi psi^H + c2 I
//! a      = ca psi
//! ```
//!
//! where `psi` is the unit-modulus cascade phase profile. `LinkStats` keeps the
//! structured form (`c1`, `c2`, `ca`, `psi`) so that nothing in the hot paths
//! needs a dense `M x M` matrix.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::scenario::{link_distances, LinkGeometry, Point, RicianFactors, Scenario};

/// `beta_0 / dist^tau`.
pub fn pathloss(beta0: f64, dist: f64, tau: f64) -> f64 {
    beta0 / dist.powf(tau)
}

/// Unit-modulus vector `[e^{-j psi_1}, .., e^{-j psi_M}]` with
/// `psi_m = 2 pi (d_d + d_r - d_t + (m-1) d (cos w_r - cos w_t)) / lambda`.
pub fn cascade_phase_profile(sc: &Scenario, g: &LinkGeometry) -> Vec<Complex64> {
    let base = 2.0 * PI * (g.d_direct + g.d_ris_user - g.d_uav_ris) / sc.wavelength;
    let step = 2.0 * PI * sc.element_spacing * (g.cos_departure - g.cos_arrival) / sc.wavelength;
    (0..sc.num_elements)
        .map(|m| Complex64::from_polar(1.0, -(base + m as f64 * step)))
        .collect()
}

/// Scalar coefficients of `A = c1 psi psi^H + c2 I` and `a = ca psi`, given the
/// three large-scale gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentCoefficients {
    pub rank_one: f64,
    pub identity: f64,
    pub cross: f64,
}

impl MomentCoefficients {
    pub fn new(mu: RicianFactors, beta_d: f64, beta_t: f64, beta_r: f64) -> Self {
        let (ud, ut, ur) = (mu.direct, mu.uav_ris, mu.ris_user);
        let den = (ur + 1.0) * (ut + 1.0);
        Self {
            rank_one: ur * ut * beta_r * beta_t / den,
            identity: (ur + ut + 1.0) * beta_r * beta_t / den,
            cross: (ud * ur * ut * beta_d * beta_r * beta_t / ((ud + 1.0) * den)).sqrt(),
        }
    }
}

/// Derived statistics of one (user, hover point) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkStats {
    pub geometry: LinkGeometry,
    pub beta_d: f64,
    pub beta_t: f64,
    pub beta_r: f64,
    pub psi: Vec<Complex64>,
    pub coef: MomentCoefficients,
}

impl LinkStats {
    pub fn new(sc: &Scenario, q: Point, k: usize) -> Self {
        let geometry = link_distances(sc, q, k);
        let b0 = sc.reference_gain;
        let beta_d = pathloss(b0, geometry.d_direct, sc.pathloss.direct);
        let beta_t = pathloss(b0, geometry.d_uav_ris, sc.pathloss.uav_ris);
        let beta_r = pathloss(b0, geometry.d_ris_user, sc.pathloss.ris_user);
        Self {
            geometry,
            beta_d,
            beta_t,
            beta_r,
            psi: cascade_phase_profile(sc, &geometry),
            coef: MomentCoefficients::new(sc.rician, beta_d, beta_t, beta_r),
        }
    }

    /// `psi^H phi`.
    pub fn psi_inner(&self, phi: &[Complex64]) -> Complex64 {
        self.psi.iter().zip(phi).map(|(p, f)| p.conj() * f).sum()
    }

    pub fn second_moment(&self, phi: &[Complex64]) -> f64 {
        let s = self.psi_inner(phi);
        let c = self.coef;
        c.rank_one * s.norm_sqr() + c.identity * norm_sqr(phi) + 2.0 * c.cross * s.re + self.beta_d
    }

    /// `A phi`.
    pub fn apply_a(&self, phi: &[Complex64]) -> Vec<Complex64> {
        let s = self.psi_inner(phi) * self.coef.rank_one;
        self.psi
            .iter()
            .zip(phi)
            .map(|(p, f)| p * s + f * self.coef.identity)
            .collect()
    }

    pub fn a_vector(&self) -> Vec<Complex64> {
        self.psi.iter().map(|p| p * self.coef.cross).collect()
    }

    pub fn dense_a(&self) -> DMatrix<Complex64> {
        let m = self.psi.len();
        let psi = DVector::from_column_slice(&self.psi);
        let mut a = &psi * psi.adjoint() * Complex64::from(self.coef.rank_one);
        for i in 0..m {
            a[(i, i)] += self.coef.identity;
        }
        a
    }
}

/// Dense `(A, a, beta_d)` for user `k` at hover position `q`.
pub fn second_moment_components(
    sc: &Scenario,
    k: usize,
    q: Point,
) -> (DMatrix<Complex64>, DVector<Complex64>, f64) {
    let s = LinkStats::new(sc, q, k);
    (s.dense_a(), DVector::from_vec(s.a_vector()), s.beta_d)
}

/// `phi^H A phi + 2 Re{a^H phi} + beta_d` from dense data.
pub fn channel_second_moment(
    a_mat: &DMatrix<Complex64>,
    a_vec: &DVector<Complex64>,
    beta_d: f64,
    phi: &[Complex64],
) -> f64 {
    let phi = DVector::from_column_slice(phi);
    let quad = (phi.adjoint() * a_mat * &phi)[(0, 0)].re;
    let lin = (a_vec.adjoint() * &phi)[(0, 0)].re;
    quad + 2.0 * lin + beta_d
}

pub fn norm_sqr(phi: &[Complex64]) -> f64 {
    phi.iter().map(|c| c.norm_sqr()).sum()
}

/// Amplified RIS noise reaching user `k`: `beta_r delta_RIS^2 ||phi||^2`.
/// A passive surface contributes nothing.
pub fn ris_reflected_noise_power(sc: &Scenario, beta_r: f64, phi: &[Complex64]) -> f64 {
    beta_r * sc.effective_ris_noise() * norm_sqr(phi)
}

/// Expected RIS output power `(sum_k p_k beta_t + delta_RIS^2) ||phi||^2`.
pub fn ris_output_power(sc: &Scenario, beta_t: f64, phi: &[Complex64]) -> f64 {
    (sc.total_tx_power() * beta_t + sc.effective_ris_noise()) * norm_sqr(phi)
}

/// SINR of user `k` at a hover point with link statistics `link`.
pub fn sinr(sc: &Scenario, link: &LinkStats, phi: &[Complex64], k: usize) -> f64 {
    let d = link.second_moment(phi);
    let eta = sc.split_ratio;
    let num = eta * sc.tx_power[k] * d;
    let den = eta * sc.interference_power(k) * d
        + ris_reflected_noise_power(sc, link.beta_r, phi)
        + sc.noise_user;
    num / den
}

/// `(1 - eta) p_k D`.
pub fn harvested_power(sc: &Scenario, d: f64, k: usize) -> f64 {
    (1.0 - sc.split_ratio) * sc.tx_power[k] * d
}

/// Link statistics for every hover point and user, indexed `[l][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub links: Vec<Vec<LinkStats>>,
}

impl ChannelStats {
    pub fn at_points(sc: &Scenario, points: &[Point]) -> Self {
        let links = points
            .iter()
            .map(|&q| (0..sc.num_users()).map(|k| LinkStats::new(sc, q, k)).collect())
            .collect();
        Self { links }
    }

    pub fn link(&self, k: usize, l: usize) -> &LinkStats {
        &self.links[l][k]
    }

    pub fn num_hover(&self) -> usize {
        self.links.len()
    }

    /// `beta_t` at hover point `l` (identical across users).
    pub fn beta_t(&self, l: usize) -> f64 {
        self.links[l][0].beta_t
    }
}
