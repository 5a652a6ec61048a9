//! Sampling oracles for the closed-form statistics and a brute-force search
//! over tiny reflection designs.
//!
//! Every estimator draws from ChaCha8 streams keyed by
//! `(quantity, user, hover point, chunk)`, so results are bit-identical for a
//! given seed regardless of how rayon schedules the chunks.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::channel::{sinr, ChannelStats, LinkStats};
use crate::error::{Error, Result};
use crate::scenario::{FlightPlan, Point, ReflectionPlan, RisMode, Scenario};

const CHUNK: usize = 8192;
pub const MIN_SAMPLES: usize = 1000;
pub const MAX_GRID_POINTS: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Quantity {
    SecondMoment = 1,
    Rate = 2,
    RisNoise = 3,
    RisOutput = 4,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`.
    pub se: f64,
    pub n: usize,
    pub seed: u64,
}

impl McEstimate {
    /// `(value - mean) / se`.
    pub fn z_score(&self, value: f64) -> f64 {
        if self.se > 0.0 {
            (value - self.mean) / self.se
        } else if value == self.mean {
            0.0
        } else {
            f64::INFINITY
        }
    }

    pub fn within(&self, value: f64, num_se: f64) -> bool {
        self.z_score(value).abs() <= num_se
    }
}

fn stream_id(q: Quantity, k: usize, l: usize, chunk: usize) -> u64 {
    ((q as u64) << 56) ^ ((k as u64) << 40) ^ ((l as u64) << 24) ^ chunk as u64
}

/// Averages `f` over `n` draws split into independently seeded chunks.
fn estimate<F>(q: Quantity, k: usize, l: usize, n: usize, seed: u64, f: F) -> McEstimate
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream_id(q, k, l, c));
            let len = CHUNK.min(n - c * CHUNK);
            let mut s = 0.0;
            let mut s2 = 0.0;
            for _ in 0..len {
                let v = f(&mut rng);
                s += v;
                s2 += v * v;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let nf = n as f64;
    let mean = s / nf;
    let var = ((s2 - nf * mean * mean) / (nf - 1.0).max(1.0)).max(0.0);
    McEstimate {
        mean,
        se: (var / nf).sqrt(),
        n,
        seed,
    }
}

/// `CN(0, 1)` draw.
fn cn(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Line-of-sight components and gains of the three links.
struct LinkSampler {
    beta_d: f64,
    beta_t: f64,
    beta_r: f64,
    mu_d: f64,
    mu_t: f64,
    mu_r: f64,
    los_d: Complex64,
    los_t: Vec<Complex64>,
    los_r: Vec<Complex64>,
}

struct Draw {
    g_d: Complex64,
    g_t: Vec<Complex64>,
    g_r: Vec<Complex64>,
}

impl LinkSampler {
    fn new(sc: &Scenario, link: &LinkStats) -> Self {
        let g = &link.geometry;
        let lam = sc.wavelength;
        let d = sc.element_spacing;
        let steer = |dist: f64, cos: f64| -> Vec<Complex64> {
            (0..sc.num_elements)
                .map(|m| Complex64::from_polar(1.0, -2.0 * PI * (dist + m as f64 * d * cos) / lam))
                .collect()
        };
        Self {
            beta_d: link.beta_d,
            beta_t: link.beta_t,
            beta_r: link.beta_r,
            mu_d: sc.rician.direct,
            mu_t: sc.rician.uav_ris,
            mu_r: sc.rician.ris_user,
            los_d: Complex64::from_polar(1.0, -2.0 * PI * g.d_direct / lam),
            los_t: steer(g.d_uav_ris, g.cos_arrival),
            los_r: steer(g.d_ris_user, g.cos_departure),
        }
    }

    fn rician(beta: f64, mu: f64, los: Complex64, rng: &mut ChaCha8Rng) -> Complex64 {
        (los * (mu / (mu + 1.0)).sqrt() + cn(rng) * (1.0 / (mu + 1.0)).sqrt()) * beta.sqrt()
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Draw {
        Draw {
            g_d: Self::rician(self.beta_d, self.mu_d, self.los_d, rng),
            g_t: self.los_t.iter().map(|&c| Self::rician(self.beta_t, self.mu_t, c, rng)).collect(),
            g_r: self.los_r.iter().map(|&c| Self::rician(self.beta_r, self.mu_r, c, rng)).collect(),
        }
    }
}

impl Draw {
    /// `g_r^H diag(phi) g_t + g_d`.
    fn composite(&self, phi: &[Complex64]) -> Complex64 {
        self.g_r
            .iter()
            .zip(phi)
            .zip(&self.g_t)
            .map(|((r, p), t)| r.conj() * p * t)
            .sum::<Complex64>()
            + self.g_d
    }

    /// `||g_r^H diag(phi)||^2`.
    fn reflected_gain(&self, phi: &[Complex64]) -> f64 {
        self.g_r.iter().zip(phi).map(|(r, p)| (r * p).norm_sqr()).sum()
    }
}

/// `E|g_kl|^2` at hover position `q`.
pub fn mc_second_moment(
    sc: &Scenario,
    q: Point,
    k: usize,
    l: usize,
    phi: &[Complex64],
    n: usize,
    seed: u64,
) -> McEstimate {
    let s = LinkSampler::new(sc, &LinkStats::new(sc, q, k));
    estimate(Quantity::SecondMoment, k, l, n, seed, |rng| s.draw(rng).composite(phi).norm_sqr())
}

/// `E{delta_RIS^2 ||g_r^H Theta||^2}`, the amplified RIS noise at user `k`.
pub fn mc_ris_noise_power(
    sc: &Scenario,
    q: Point,
    k: usize,
    l: usize,
    phi: &[Complex64],
    n: usize,
    seed: u64,
) -> McEstimate {
    let s = LinkSampler::new(sc, &LinkStats::new(sc, q, k));
    let d2 = sc.effective_ris_noise();
    estimate(Quantity::RisNoise, k, l, n, seed, |rng| d2 * s.draw(rng).reflected_gain(phi))
}

/// `E||Theta (g_t x + n_RIS)||^2` with `x = sum_k sqrt(p_k) s_k`.
pub fn mc_ris_output_power(sc: &Scenario, q: Point, l: usize, phi: &[Complex64], n: usize, seed: u64) -> McEstimate {
    let s = LinkSampler::new(sc, &LinkStats::new(sc, q, 0));
    let d = sc.effective_ris_noise().sqrt();
    let powers = sc.tx_power.clone();
    estimate(Quantity::RisOutput, 0, l, n, seed, |rng| {
        let g = s.draw(rng);
        let x: Complex64 = powers.iter().map(|p| cn(rng) * p.sqrt()).sum();
        g.g_t
            .iter()
            .zip(phi)
            .map(|(t, p)| (p * (t * x + cn(rng) * d)).norm_sqr())
            .sum()
    })
}

/// Ergodic rate `E log2(1 + SINR)` with the instantaneous SINR.
pub fn mc_ergodic_rate(
    sc: &Scenario,
    q: Point,
    k: usize,
    l: usize,
    phi: &[Complex64],
    n: usize,
    seed: u64,
) -> McEstimate {
    let s = LinkSampler::new(sc, &LinkStats::new(sc, q, k));
    let eta = sc.split_ratio;
    let (pk, pi) = (sc.tx_power[k], sc.interference_power(k));
    let d2 = sc.effective_ris_noise();
    estimate(Quantity::Rate, k, l, n, seed, |rng| {
        let g = s.draw(rng);
        let h = g.composite(phi).norm_sqr();
        let snr = eta * pk * h / (eta * pi * h + d2 * g.reflected_gain(phi) + sc.noise_user);
        (1.0 + snr).log2()
    })
}

/// Rate approximation `log2(1 + SINR)` with expectations inside.
pub fn rate_approximation(sc: &Scenario, q: Point, k: usize, phi: &[Complex64]) -> f64 {
    (1.0 + sinr(sc, &LinkStats::new(sc, q, k), phi, k)).log2()
}

/// Per-coefficient grid for the exhaustive search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseGrid {
    pub phases: usize,
    pub amplitudes: usize,
}

impl PhaseGrid {
    /// Default resolution for `n` coefficients.
    pub fn for_coefficients(n: usize) -> Self {
        if n <= 1 {
            Self { phases: 720, amplitudes: 200 }
        } else {
            Self { phases: 72, amplitudes: 40 }
        }
    }
}

/// Largest admissible reflection amplitude of a single element at hover `l`:
/// `sqrt(E / (t (sum p beta_t + delta^2)))` for an active surface, 1 otherwise.
pub fn amplitude_bound(sc: &Scenario, stats: &ChannelStats, plan: &FlightPlan, l: usize) -> f64 {
    match sc.ris_mode {
        RisMode::Passive => 1.0,
        RisMode::Active => {
            let t = plan.hover_times[l];
            let p = sc.total_tx_power() * stats.beta_t(l) + sc.effective_ris_noise();
            if t > 0.0 {
                (sc.ris_energy_budget / (t * p)).sqrt()
            } else {
                f64::INFINITY
            }
        }
    }
}

/// Exhaustive max-min over a grid of reflection coefficients. Only for
/// `(L - 1) M <= 2`. Grid points that violate the RIS budget or any SINR
/// constraint are skipped.
pub fn brute_force_phase_oracle(sc: &Scenario, plan: &FlightPlan, grid: PhaseGrid) -> Result<(ReflectionPlan, f64)> {
    let (nh, m) = (plan.num_hover(), sc.num_elements);
    let dims = nh * m;
    if dims == 0 || dims > 2 {
        return Err(Error::Validation(format!("brute force needs (L-1) M <= 2, got {dims}")));
    }
    let per = grid.phases as u128 * grid.amplitudes as u128;
    let total = per.pow(dims as u32);
    if total > MAX_GRID_POINTS {
        return Err(Error::GridTooLarge(total));
    }
    let stats = ChannelStats::at_points(sc, plan.hover_points());
    let bounds: Vec<f64> = (0..nh).map(|l| amplitude_bound(sc, &stats, plan, l)).collect();
    if bounds.iter().any(|b| !b.is_finite()) {
        return Err(Error::Validation("brute force needs positive hover times".into()));
    }
    let coeff = |idx: usize, slot: usize| -> Complex64 {
        let (a, p) = (idx / grid.phases, idx % grid.phases);
        let amp = bounds[slot / m] * a as f64 / (grid.amplitudes - 1).max(1) as f64;
        Complex64::from_polar(amp, 2.0 * PI * p as f64 / grid.phases as f64 - PI)
    };
    let build = |i: usize| -> ReflectionPlan {
        let mut phi = ReflectionPlan::zeros(nh, m);
        let mut rest = i;
        for slot in 0..dims {
            phi.phi[slot / m][slot % m] = coeff(rest % per as usize, slot);
            rest /= per as usize;
        }
        phi
    };
    let feasible = |phi: &ReflectionPlan| -> bool {
        let budget_ok = match sc.ris_mode {
            RisMode::Passive => true,
            RisMode::Active => (0..nh).all(|l| {
                crate::channel::ris_output_power(sc, stats.beta_t(l), &phi.phi[l]) * plan.hover_times[l]
                    <= sc.ris_energy_budget * (1.0 + 1e-12)
            }),
        };
        budget_ok && crate::sca_phase::sinr_slack(sc, &stats, phi) >= 0.0
    };
    let best = (0..total as usize)
        .into_par_iter()
        .filter_map(|i| {
            let phi = build(i);
            feasible(&phi).then(|| (crate::sca_phase::min_harvest(sc, &stats, plan, &phi), i))
        })
        .reduce_with(|a, b| {
            if a.0 > b.0 || (a.0 == b.0 && a.1 < b.1) {
                a
            } else {
                b
            }
        });
    match best {
        Some((v, i)) => Ok((build(i), v)),
        None => Err(Error::Infeasible("no grid point satisfies the constraints".into())),
    }
}
