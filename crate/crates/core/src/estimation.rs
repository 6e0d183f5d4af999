//! Fourier-series Bayesian phase estimation on the two modular parameters.
//!
//! A posterior over the phase φ = l·ε (period 2π) is stored as coefficients
//! a_{−j..j} of p(φ) = (1/2π) Σ_k a_k e^{ikφ}, kept normalized to a_0 = 1.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::circuit::{self, Family, OutcomeRecord, RoundOp, RoundPlan, SignalPair};
use crate::error::{Error, Result};
use crate::fock::{HybridState, StateVector};
use crate::linalg::ZERO;
use crate::states::VisibilitySet;

/// Angles scanned by the adaptive controller before refinement.
pub const THETA_GRID: usize = 256;
const GOLDEN_ITERATIONS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    coeffs: Vec<Complex64>,
    /// Modular length l: the phase is φ = l ε.
    pub l: f64,
}

impl Posterior {
    pub fn uniform(l: f64) -> Self {
        Self {
            coeffs: vec![Complex64::new(1.0, 0.0)],
            l,
        }
    }

    /// Highest harmonic j.
    pub fn order(&self) -> usize {
        self.coeffs.len() / 2
    }

    /// a_k, zero outside the stored range.
    pub fn coeff(&self, k: i64) -> Complex64 {
        let idx = k + self.order() as i64;
        if idx < 0 || idx as usize >= self.coeffs.len() {
            ZERO
        } else {
            self.coeffs[idx as usize]
        }
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Bayes update with P(m | φ) = ½(1 + (−1)^m η cos(θ + φ)).
    pub fn update(&mut self, bit: u8, theta: f64, eta: f64) -> Result<()> {
        check_eta(eta)?;
        let s = if bit == 0 { 1.0 } else { -1.0 };
        let plus = Complex64::from_polar(0.25 * s * eta, theta);
        let minus = plus.conj();
        let j = self.order() as i64;
        let mut next = Vec::with_capacity(self.coeffs.len() + 2);
        for k in -(j + 1)..=(j + 1) {
            next.push(self.coeff(k) * 0.5 + plus * self.coeff(k - 1) + minus * self.coeff(k + 1));
        }
        let mass = next[(j + 1) as usize].re;
        if !(mass > 0.0) {
            return Err(Error::Numerical(format!("posterior mass {mass:.3e} after update")));
        }
        for c in &mut next {
            *c /= mass;
        }
        self.coeffs = next;
        Ok(())
    }

    /// Density in φ per unit φ.
    pub fn density(&self, phi: f64) -> f64 {
        let j = self.order() as i64;
        let mut total = 1.0;
        for k in 1..=j {
            total += 2.0 * (self.coeff(k) * Complex64::from_polar(1.0, k as f64 * phi)).re;
        }
        total / (2.0 * PI)
    }

    /// Largest |a_{−k} − a_k*|.
    pub fn hermitian_defect(&self) -> f64 {
        let j = self.order() as i64;
        (1..=j)
            .map(|k| (self.coeff(-k) - self.coeff(k).conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Circular-mean estimate ε̃ = arg(a_{−1})/l in (−π/l, π/l].
    pub fn point_estimate(&self) -> Result<f64> {
        let a = self.coeff(-1);
        if a.norm() <= 1e-12 {
            return Err(Error::NoInformation);
        }
        let mut phi = a.arg();
        if phi <= -PI {
            phi += 2.0 * PI;
        }
        Ok(phi / self.l)
    }

    /// |a_{−1}| of the normalized posterior.
    pub fn concentration(&self) -> f64 {
        self.coeff(-1).norm()
    }

    /// Expected posterior sharpness after one more measurement at θ:
    /// Σ_m |a′_{−1}(m)| of the unnormalized updates.
    pub fn sharpness(&self, theta: f64, eta: f64) -> f64 {
        let (a0, a1, a2) = (self.coeff(0), self.coeff(-1), self.coeff(-2));
        let e = Complex64::from_polar(1.0, theta);
        [1.0, -1.0]
            .iter()
            .map(|s| (a1 * 0.5 + (e * a2 + e.conj() * a0) * (0.25 * s * eta)).norm())
            .sum()
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::invalid(format!("visibility must lie in [0, 1], got {eta}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlMode {
    NonAdaptive,
    Adaptive,
}

/// Ancilla angle for repetition `iteration` of `m_total`.
///
/// Adaptive mode maximizes the sharpness over [0, π) on a 256-point grid
/// followed by golden-section refinement; a flat objective gives 0.
pub fn choose_theta(post: &Posterior, mode: ControlMode, iteration: usize, m_total: usize, eta: f64) -> f64 {
    match mode {
        ControlMode::NonAdaptive => iteration as f64 * PI / m_total as f64,
        ControlMode::Adaptive => {
            let h = PI / THETA_GRID as f64;
            let values: Vec<f64> = (0..THETA_GRID).map(|i| post.sharpness(i as f64 * h, eta)).collect();
            let (best, hi) =
                values.iter().enumerate().fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
                );
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            if hi - lo < 1e-12 {
                return 0.0;
            }
            let theta = golden_max(
                |t| post.sharpness(t, eta),
                (best as f64 - 1.0) * h,
                (best as f64 + 1.0) * h,
            );
            modulo(theta, PI)
        }
    }
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_ITERATIONS {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Visibility decay over sequential rounds: η_{a,n} = η_a e^{−2nζ},
/// η_{b,n} = η_b e^{−(2n+1)ζ}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayModel {
    pub eta0_a: f64,
    pub eta0_b: f64,
    pub zeta: f64,
}

impl DecayModel {
    pub fn new(eta0: f64, zeta: f64) -> Self {
        Self {
            eta0_a: eta0,
            eta0_b: eta0,
            zeta,
        }
    }

    pub fn from_visibilities(vis: &VisibilitySet, zeta: f64) -> Self {
        Self {
            eta0_a: vis.eta_a,
            eta0_b: vis.eta_b,
            zeta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_eta(self.eta0_a)?;
        check_eta(self.eta0_b)?;
        if !(self.zeta >= 0.0) {
            return Err(Error::invalid(format!("zeta must be non-negative, got {}", self.zeta)));
        }
        Ok(())
    }

    pub fn eta_a(&self, round: usize) -> f64 {
        self.eta0_a * (-2.0 * round as f64 * self.zeta).exp()
    }

    pub fn eta_b(&self, round: usize) -> f64 {
        self.eta0_b * (-(2.0 * round as f64 + 1.0) * self.zeta).exp()
    }
}

/// Backaction reindexing s for bit j of a sequence (a-bit of round n: n mod
/// 2, b-bit: (n+1) mod 2).
pub fn reindex_shift(j: usize) -> u8 {
    let n = j / 2;
    (if j.is_multiple_of(2) { n % 2 } else { (n + 1) % 2 }) as u8
}

/// Holevo variance |⟨e^{il(ε̃−ε)}⟩|^{−2} − 1; +∞ when the resultant vanishes.
pub fn holevo_variance(estimates: &[f64], truth: f64, l: f64) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::invalid("holevo_variance needs at least one estimate"));
    }
    let mean = estimates
        .iter()
        .map(|e| Complex64::from_polar(1.0, l * (e - truth)))
        .sum::<Complex64>()
        / estimates.len() as f64;
    let r = mean.norm();
    if r < 1e-12 {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / (r * r) - 1.0)
}

/// Holevo variance of paired errors measured against per-trial truths.
pub fn holevo_variance_paired(estimates: &[f64], truths: &[f64], l: f64) -> Result<f64> {
    if estimates.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            expected: truths.len(),
            found: estimates.len(),
        });
    }
    let errors: Vec<f64> = estimates.iter().zip(truths).map(|(e, t)| e - t).collect();
    holevo_variance(&errors, 0.0, l)
}

/// Where the outcome bits come from.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum BitSource {
    /// Sample the closed-form model with the decay-model visibilities.
    Model { family: Family },
    /// Run the state-vector circuit on `state` (signal applied per repetition).
    Circuit {
        family: Family,
        state: StateVector,
        ops: (RoundOp, RoundOp),
    },
}

impl BitSource {
    pub fn family(&self) -> Family {
        match self {
            BitSource::Model { family } | BitSource::Circuit { family, .. } => *family,
        }
    }
}

/// Offset added to ε_b inside the cosine (λ for NP states).
fn offset_b(family: Family) -> f64 {
    match family {
        Family::Grid => 0.0,
        Family::Np { offset, .. } => offset as f64,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationRun {
    pub est_a: f64,
    pub est_b: f64,
    pub record: OutcomeRecord,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationConfig {
    pub repetitions: usize,
    pub n_rounds: usize,
    pub mode: ControlMode,
    pub decay: DecayModel,
}

impl EstimationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::invalid("repetitions M must be at least 1"));
        }
        RoundPlan {
            n_rounds: self.n_rounds,
            theta_a: 0.0,
            theta_b: 0.0,
        }
        .validate()?;
        self.decay.validate()
    }
}

/// Non-negative remainder (`f64::rem_euclid` needs std).
fn modulo(x: f64, period: f64) -> f64 {
    let r = x % period;
    if r < 0.0 {
        r + period
    } else {
        r
    }
}

/// Wrap into (−p/2, p/2].
fn wrap(x: f64, period: f64) -> f64 {
    let mut y = modulo(x, period);
    if y > period / 2.0 {
        y -= period;
    }
    y
}

/// Point estimate, or 0 when the posterior carries no information.
fn estimate_or_zero(post: &Posterior) -> f64 {
    post.point_estimate().unwrap_or(0.0)
}

/// M repetitions of N_S sequential a-then-b rounds with Bayesian updates of
/// both posteriors.
pub fn run_estimation<R: Rng + ?Sized>(
    source: &BitSource,
    signal: &SignalPair,
    config: &EstimationConfig,
    rng: &mut R,
) -> Result<EstimationRun> {
    config.validate()?;
    let family = source.family();
    let (la, lb) = family.lengths();
    let lambda = offset_b(family);
    let mut post_a = Posterior::uniform(la);
    let mut post_b = Posterior::uniform(lb);
    let mut record = OutcomeRecord::default();
    let prepared = match source {
        BitSource::Circuit { state, .. } => {
            Some(circuit::apply_signal(&HybridState::product(0, state), signal)?.branch(0))
        }
        BitSource::Model { .. } => None,
    };
    let decay = &config.decay;
    for j in 0..config.repetitions {
        let theta_a = choose_theta(&post_a, config.mode, j, config.repetitions, decay.eta_a(0));
        let theta_b = choose_theta(&post_b, config.mode, j, config.repetitions, decay.eta_b(0));
        let plan = RoundPlan {
            n_rounds: config.n_rounds,
            theta_a,
            theta_b,
        };
        let bits = match (source, &prepared) {
            (BitSource::Circuit { ops, .. }, Some(psi)) => circuit::sample_outcomes(psi, (&ops.0, &ops.1), &plan, rng)?,
            _ => sample_model(family, signal, &plan, decay, rng),
        };
        for (idx, &bit) in bits.bits.iter().enumerate() {
            let n = idx / 2;
            let corrected = bit ^ reindex_shift(idx);
            if idx % 2 == 0 {
                post_a.update(corrected, theta_a, decay.eta_a(n))?;
            } else {
                post_b.update(corrected, theta_b, decay.eta_b(n))?;
            }
        }
        record.bits.extend_from_slice(&bits.bits);
        record.is_b.extend_from_slice(&bits.is_b);
        record.thetas.extend_from_slice(&bits.thetas);
    }
    let est_a = estimate_or_zero(&post_a);
    let est_b = wrap(estimate_or_zero(&post_b) - lambda, 2.0 * PI / lb);
    Ok(EstimationRun { est_a, est_b, record })
}

/// One repetition drawn from the product-form model with reindexing.
fn sample_model<R: Rng + ?Sized>(
    family: Family,
    signal: &SignalPair,
    plan: &RoundPlan,
    decay: &DecayModel,
    rng: &mut R,
) -> OutcomeRecord {
    let (la, lb) = family.lengths();
    let phase_a = plan.theta_a + la * signal.a();
    let phase_b = plan.theta_b + lb * (signal.b() + offset_b(family));
    let mut record = OutcomeRecord::default();
    for n in 0..plan.n_rounds {
        let bit = circuit::sample_bit(circuit::prob_zero(decay.eta_a(n), phase_a), rng);
        record.push(bit ^ reindex_shift(2 * n), false, plan.theta_a);
        let bit = circuit::sample_bit(circuit::prob_zero(decay.eta_b(n), phase_b), rng);
        record.push(bit ^ reindex_shift(2 * n + 1), true, plan.theta_b);
    }
    record
}

/// Resample synthetic outcome sequences, one bit drawn uniformly from each
/// iteration's pool.
pub fn bootstrap_resample<R: Rng + ?Sized>(pools: &[Vec<u8>], n_samples: usize, rng: &mut R) -> Result<Vec<Vec<u8>>> {
    if let Some(i) = pools.iter().position(|p| p.is_empty()) {
        return Err(Error::invalid(format!("bootstrap pool {i} is empty")));
    }
    Ok((0..n_samples)
        .map(|_| pools.iter().map(|p| p[rng.gen_range(0..p.len())]).collect())
        .collect())
}

/// Keep every (M/M′)-th pool.
pub fn subsample_pools(pools: &[Vec<u8>], m_prime: usize) -> Result<Vec<Vec<u8>>> {
    if m_prime == 0 || m_prime > pools.len() || !pools.len().is_multiple_of(m_prime) {
        return Err(Error::invalid(format!(
            "cannot sub-sample {} pools to {m_prime}",
            pools.len()
        )));
    }
    let step = pools.len() / m_prime;
    Ok(pools.iter().step_by(step).cloned().collect())
}

/// Posterior estimate from a fixed outcome sequence with known angles.
pub fn estimate_from_bits(bits: &[u8], thetas: &[f64], etas: &[f64], l: f64) -> Result<f64> {
    if bits.len() != thetas.len() || bits.len() != etas.len() {
        return Err(Error::DimensionMismatch {
            expected: bits.len(),
            found: thetas.len().min(etas.len()),
        });
    }
    let mut post = Posterior::uniform(l);
    for ((&b, &t), &e) in bits.iter().zip(thetas).zip(etas) {
        post.update(b, t, e)?;
    }
    post.point_estimate()
}
