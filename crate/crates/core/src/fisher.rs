//! Classical Fisher information from outcome-probability grids, variance
//! bounds, SQL baselines and the force-sensitivity chain.

use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::circuit::{self, Family};
use crate::error::{Error, Result};
use crate::states::{self, GridSpec, VisibilitySet};
use crate::SQRT_PI;

/// Probabilities are clamped to [CLAMP, 1 − CLAMP] in FIM denominators.
pub const PROBABILITY_CLAMP: f64 = 1e-6;
/// Cells with det F below this are not inverted.
pub const DET_THRESHOLD: f64 = 1e-12;

pub const HBAR: f64 = 1.054_571_817e-34;
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Outcome-0 probabilities of both observables on a rectangular (ε_a, ε_b)
/// lattice, stored row-major with ε_b fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbGrid {
    pub eps_a: Vec<f64>,
    pub eps_b: Vec<f64>,
    pub p_a0: Vec<f64>,
    pub p_b0: Vec<f64>,
    /// Shots per cell; 0 for exact probabilities.
    pub n_shots: u64,
}

/// Evenly spaced points over [lo, hi].
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return alloc::vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

impl ProbGrid {
    /// Closed-form single-round probabilities; ε_b is real-valued for NP.
    pub fn analytic(family: Family, vis: &VisibilitySet, thetas: (f64, f64), eps_a: Vec<f64>, eps_b: Vec<f64>) -> Self {
        let (la, lb) = family.lengths();
        let offset = match family {
            Family::Grid => 0.0,
            Family::Np { offset, .. } => offset as f64,
        };
        let mut p_a0 = Vec::with_capacity(eps_a.len() * eps_b.len());
        let mut p_b0 = Vec::with_capacity(eps_a.len() * eps_b.len());
        for &a in &eps_a {
            for &b in &eps_b {
                p_a0.push(circuit::prob_zero(vis.eta_a, thetas.0 + la * a));
                p_b0.push(circuit::prob_zero(vis.eta_b, thetas.1 + lb * (b + offset)));
            }
        }
        Self {
            eps_a,
            eps_b,
            p_a0,
            p_b0,
            n_shots: 0,
        }
    }

    /// Replace each probability by a binomial frequency over `n_shots`.
    pub fn sampled<R: Rng + ?Sized>(&self, n_shots: u64, rng: &mut R) -> Result<Self> {
        if n_shots == 0 {
            return Err(Error::invalid("n_shots must be positive for a sampled grid"));
        }
        let mut draw = |p: f64| -> Result<f64> {
            let b = Binomial::new(n_shots, p.clamp(0.0, 1.0)).map_err(|e| Error::invalid(format!("{e}")))?;
            Ok(b.sample(rng) as f64 / n_shots as f64)
        };
        let p_a0 = self.p_a0.iter().map(|&p| draw(p)).collect::<Result<Vec<_>>>()?;
        let p_b0 = self.p_b0.iter().map(|&p| draw(p)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            p_a0,
            p_b0,
            n_shots,
            ..self.clone()
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.eps_a.len(), self.eps_b.len())
    }

    pub fn validate(&self) -> Result<()> {
        let (na, nb) = self.shape();
        if na < 3 || nb < 3 {
            return Err(Error::invalid(format!(
                "need at least 3 points per axis, got {na}x{nb}"
            )));
        }
        if self.p_a0.len() != na * nb || self.p_b0.len() != na * nb {
            return Err(Error::DimensionMismatch {
                expected: na * nb,
                found: self.p_a0.len().min(self.p_b0.len()),
            });
        }
        for (name, axis) in [("eps_a", &self.eps_a), ("eps_b", &self.eps_b)] {
            let h = axis[1] - axis[0];
            if !(h > 0.0)
                || axis
                    .windows(2)
                    .any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs().max(1.0))
            {
                return Err(Error::invalid(format!("{name} must be uniformly increasing")));
            }
        }
        if let Some(p) = self.p_a0.iter().chain(&self.p_b0).find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
        }
        Ok(())
    }
}

/// Fisher information at one lattice cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellFim {
    pub f: [[f64; 2]; 2],
    /// F⁻¹ when the cell is usable.
    pub sigma: Option<[[f64; 2]; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FimResult {
    pub cells: Vec<CellFim>,
    pub trace_min: f64,
    pub argmin: (f64, f64),
    /// Projection-noise standard deviation of `trace_min` (0 for exact grids).
    pub uncertainty: f64,
    /// Cells skipped for clamped probabilities or det F below threshold.
    pub excluded: usize,
}

/// One-sided differences at the ends, central inside.
fn gradient(values: &[f64], h: f64, i: usize) -> f64 {
    let n = values.len();
    if i == 0 {
        (values[1] - values[0]) / h
    } else if i == n - 1 {
        (values[n - 1] - values[n - 2]) / h
    } else {
        (values[i + 1] - values[i - 1]) / (2.0 * h)
    }
}

fn is_clamped(p: f64) -> bool {
    !(PROBABILITY_CLAMP..=1.0 - PROBABILITY_CLAMP).contains(&p)
}

fn invert(f: &[[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    let det = f[0][0] * f[1][1] - f[0][1] * f[1][0];
    if !(det > DET_THRESHOLD) {
        return None;
    }
    Some([[f[1][1] / det, -f[0][1] / det], [-f[1][0] / det, f[0][0] / det]])
}

struct Lattice<'a> {
    grid: &'a ProbGrid,
    ha: f64,
    hb: f64,
}

impl Lattice<'_> {
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.grid.eps_b.len() + j
    }

    /// F at (i, j) from probability arrays (pa, pb).
    fn cell(&self, pa: &[f64], pb: &[f64], i: usize, j: usize) -> ([[f64; 2]; 2], bool) {
        let (na, nb) = self.grid.shape();
        let col = |p: &[f64]| (0..na).map(|k| p[self.idx(k, j)]).collect::<Vec<f64>>();
        let row = |p: &[f64]| (0..nb).map(|k| p[self.idx(i, k)]).collect::<Vec<f64>>();
        let mut f = [[0.0; 2]; 2];
        let mut clamped = false;
        for p in [pa, pb] {
            let here = p[self.idx(i, j)];
            clamped |= is_clamped(here);
            let q = here.clamp(PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP);
            let d = [gradient(&col(p), self.ha, i), gradient(&row(p), self.hb, j)];
            let w = 1.0 / (q * (1.0 - q));
            for r in 0..2 {
                for c in 0..2 {
                    f[r][c] += w * d[r] * d[c];
                }
            }
        }
        (f, clamped)
    }

    fn trace_at(&self, pa: &[f64], pb: &[f64], i: usize, j: usize) -> Option<f64> {
        let (f, clamped) = self.cell(pa, pb, i, j);
        if clamped {
            return None;
        }
        invert(&f).map(|s| s[0][0] + s[1][1])
    }
}

/// Per-cell FIM with F = Σ_obs (∇P)(∇P)ᵀ / (P(1−P)) and min Tr F⁻¹.
pub fn fim_from_grid(grid: &ProbGrid) -> Result<FimResult> {
    grid.validate()?;
    let (na, nb) = grid.shape();
    let lat = Lattice {
        grid,
        ha: grid.eps_a[1] - grid.eps_a[0],
        hb: grid.eps_b[1] - grid.eps_b[0],
    };
    let mut cells = Vec::with_capacity(na * nb);
    let mut excluded = 0;
    let mut best: Option<(f64, usize, usize)> = None;
    for i in 0..na {
        for j in 0..nb {
            let (f, clamped) = lat.cell(&grid.p_a0, &grid.p_b0, i, j);
            let sigma = if clamped { None } else { invert(&f) };
            match sigma {
                Some(s) => {
                    let tr = s[0][0] + s[1][1];
                    if best.is_none_or(|b| tr < b.0) {
                        best = Some((tr, i, j));
                    }
                }
                None => excluded += 1,
            }
            cells.push(CellFim { f, sigma });
        }
    }
    let (trace_min, bi, bj) =
        best.ok_or_else(|| Error::Numerical(format!("Fisher matrix singular or clamped in all {} cells", na * nb)))?;
    let uncertainty = if grid.n_shots > 0 {
        propagate_noise(&lat, bi, bj, trace_min)
    } else {
        0.0
    };
    if excluded > 0 {
        log::info!("fim_from_grid: {excluded} cells excluded");
    }
    Ok(FimResult {
        cells,
        trace_min,
        argmin: (grid.eps_a[bi], grid.eps_b[bj]),
        uncertainty,
        excluded,
    })
}

/// First-order propagation of binomial σ = √(P(1−P)/n) of every probability
/// entering the cell's trace.
fn propagate_noise(lat: &Lattice, i: usize, j: usize, trace: f64) -> f64 {
    let (na, nb) = lat.grid.shape();
    let n = lat.grid.n_shots as f64;
    let mut inputs = Vec::new();
    for k in i.saturating_sub(1)..(i + 2).min(na) {
        inputs.push(lat.idx(k, j));
    }
    for k in j.saturating_sub(1)..(j + 2).min(nb) {
        if k != j {
            inputs.push(lat.idx(i, k));
        }
    }
    let mut var = 0.0;
    for which in 0..2 {
        for &idx in &inputs {
            let mut pa = lat.grid.p_a0.clone();
            let mut pb = lat.grid.p_b0.clone();
            let p = if which == 0 { &mut pa } else { &mut pb };
            let q = p[idx].clamp(PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP);
            let sigma = (q * (1.0 - q) / n).sqrt();
            // Step inward so the perturbed value stays a probability.
            let step = if p[idx] + sigma <= 1.0 { sigma } else { -sigma };
            p[idx] += step;
            if let Some(t) = lat.trace_at(&pa, &pb, i, j) {
                var += (t - trace).powi(2);
            }
        }
    }
    var.sqrt()
}

/// 1/(l_a η_a)² + 1/(l_b η_b)².
pub fn theoretical_variance_bound(family: Family, vis: &VisibilitySet) -> Result<f64> {
    if !(vis.eta_a > 0.0 && vis.eta_b > 0.0) {
        return Err(Error::ZeroVisibility(format!(
            "visibilities ({}, {}) must be positive",
            vis.eta_a, vis.eta_b
        )));
    }
    let (la, lb) = family.lengths();
    Ok(1.0 / (la * vis.eta_a).powi(2) + 1.0 / (lb * vis.eta_b).powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqlBaselines {
    /// Simultaneous SQL of the combined (rescaled for NP) variance.
    pub sql_star: f64,
    /// Quantum Fisher bound 1/(2⟨n⟩+1).
    pub lower_bound: f64,
    /// Grid only: heterodyne with a squeezed state, 2(1+⟨n⟩).
    pub squeezed_het: Option<f64>,
    /// NP only: (SQL_n, SQL_φ).
    pub number_phase: Option<(f64, f64)>,
}

pub fn sql_baselines(family: Family, mean_n: f64) -> Result<SqlBaselines> {
    if !(mean_n >= 0.0) {
        return Err(Error::invalid(format!("mean_n must be non-negative, got {mean_n}")));
    }
    let lower_bound = 1.0 / (2.0 * mean_n + 1.0);
    match family {
        Family::Grid => Ok(SqlBaselines {
            sql_star: 2.0,
            lower_bound,
            squeezed_het: Some(2.0 * (1.0 + mean_n)),
            number_phase: None,
        }),
        Family::Np { .. } => {
            if mean_n == 0.0 {
                return Err(Error::invalid("phase SQL is undefined at mean_n = 0"));
            }
            Ok(SqlBaselines {
                sql_star: 2.0 + 5.0 / (4.0 * mean_n),
                lower_bound,
                squeezed_het: None,
                number_phase: Some((2.0 * mean_n + 1.0, 1.0 / (2.0 * mean_n) + 3.0 / (8.0 * mean_n * mean_n))),
            })
        }
    }
}

/// Σ′ = diag(2⟨n⟩, 1/(2⟨n⟩)) Σ for (φ, n) ordering; returns Tr Σ′.
pub fn rescaled_np_trace(sigma: &[[f64; 2]; 2], mean_n: f64) -> f64 {
    2.0 * mean_n * sigma[0][0] + sigma[1][1] / (2.0 * mean_n)
}

/// 10 log₁₀(baseline / variance).
pub fn gain_db(variance: f64, baseline: f64) -> f64 {
    10.0 * (baseline / variance).log10()
}

/// Combined variance after N_S sequential rounds with decaying visibility:
/// (1/(lη₀)²)(1/Σ_n e^{−2nζ} + 1/Σ_n e^{−(2n+1)ζ}).
pub fn sequential_gain_model(eta0: f64, zeta: f64, n_rounds: usize, l: f64) -> Result<f64> {
    if n_rounds == 0 {
        return Err(Error::invalid("n_rounds must be at least 1"));
    }
    if !(eta0 > 0.0) {
        return Err(Error::ZeroVisibility(format!("eta0 = {eta0}")));
    }
    let sa: f64 = (0..n_rounds).map(|n| (-2.0 * n as f64 * zeta).exp()).sum();
    let sb: f64 = (0..n_rounds).map(|n| (-(2.0 * n as f64 + 1.0) * zeta).exp()).sum();
    Ok((1.0 / sa + 1.0 / sb) / (l * eta0).powi(2))
}

/// Peak Fisher information (k l η_k)² of a k-th power stabilizer.
pub fn powers_fisher_model(eta_k: f64, k: usize, l: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("power k must be at least 1"));
    }
    Ok((k as f64 * l * eta_k).powi(2))
}

/// η_k = Re χ(k i√π) of a grid state.
pub fn grid_power_visibility(spec: &GridSpec, k: usize) -> Result<f64> {
    Ok(states::char_function_grid_analytic(spec, Complex64::new(0.0, k as f64 * SQRT_PI))?.re)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceContext {
    /// Ground-state extent z₀ (m).
    pub z0: f64,
    /// Force duration t_f (s).
    pub t_f: f64,
    /// Duration of one experiment (s).
    pub t_exp: f64,
    pub repetitions: usize,
    /// Charge q (C).
    pub charge: f64,
}

impl Default for ForceContext {
    fn default() -> Self {
        Self {
            z0: 4.7e-9,
            t_f: 122e-6,
            t_exp: 14.8e-3,
            repetitions: 128,
            charge: ELEMENTARY_CHARGE,
        }
    }
}

impl ForceContext {
    pub fn validate(&self) -> Result<()> {
        if !(self.z0 > 0.0 && self.t_f > 0.0 && self.t_exp > 0.0 && self.charge > 0.0 && self.repetitions > 0) {
            return Err(Error::invalid("force context values must all be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceSensitivity {
    /// σ_γ (1/√Hz).
    pub sigma_gamma: f64,
    /// Δz (m).
    pub delta_z: f64,
    /// σ_z (m/√Hz).
    pub sigma_z: f64,
    /// σ_f (N/√Hz).
    pub sigma_f: f64,
    /// σ_E (V/m/√Hz).
    pub sigma_e: f64,
}

/// Convert a displacement-amplitude uncertainty Δγ into sensitivities with
/// τ = M t_exp, σ_γ = Δγ√τ.
pub fn force_chain(ctx: &ForceContext, delta_gamma: f64) -> Result<ForceSensitivity> {
    ctx.validate()?;
    let tau = ctx.repetitions as f64 * ctx.t_exp;
    let sigma_gamma = delta_gamma * tau.sqrt();
    let sigma_f = 2.0 * HBAR / (ctx.z0 * ctx.t_f) * sigma_gamma;
    Ok(ForceSensitivity {
        sigma_gamma,
        delta_z: 2.0 * ctx.z0 * delta_gamma,
        sigma_z: 2.0 * ctx.z0 * sigma_gamma,
        sigma_f,
        sigma_e: sigma_f / ctx.charge,
    })
}
