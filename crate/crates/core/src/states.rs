//! Sensing-state constructors: finite-energy grid states and number–phase
//! (sine / airy) states, with their quality metrics.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::fock::{self, StateVector, MAX_CUTOFF, TAIL_TOLERANCE, TAIL_WINDOW};
use crate::linalg::CVector;
use crate::special::{self, Scaled, AIRY_FIRST_ZERO};
use crate::{GRID_LENGTH, SQRT_PI};

/// Parameters of the grid state Σ_k e^{−πΔ²k²} D(k√π) S(−ln Δ)|0⟩.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub delta: f64,
    /// Half-width of the superposition sum.
    pub k_range: usize,
    /// Initial cutoff; construction grows it by 25% steps until the tail fits.
    pub cutoff: usize,
    /// Allowed weight in the top `TAIL_WINDOW` levels.
    pub tolerance: f64,
}

impl GridSpec {
    /// Default k-range ⌈4/(√π Δ)⌉ and a starting cutoff of 20/Δ².
    pub fn new(delta: f64) -> Self {
        let k_range = if delta > 0.0 {
            (4.0 / (SQRT_PI * delta)).ceil() as usize
        } else {
            0
        };
        let cutoff = if delta > 0.0 {
            ((20.0 / (delta * delta)).ceil() as usize).clamp(40, MAX_CUTOFF)
        } else {
            40
        };
        Self {
            delta,
            k_range,
            cutoff,
            tolerance: TAIL_TOLERANCE,
        }
    }

    pub fn with_cutoff(mut self, cutoff: usize) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    /// Modular length √(2π).
    pub fn l_s(&self) -> f64 {
        GRID_LENGTH
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::invalid(format!("delta must lie in (0, 1], got {}", self.delta)));
        }
        let min_k = (3.0 / (SQRT_PI * self.delta)).ceil() as usize;
        if self.k_range < min_k {
            return Err(Error::invalid(format!(
                "k_range {} below minimum {min_k} for delta {}",
                self.k_range, self.delta
            )));
        }
        if self.cutoff < 2 || self.cutoff > MAX_CUTOFF {
            return Err(Error::invalid(format!(
                "cutoff {} outside [2, {MAX_CUTOFF}]",
                self.cutoff
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("tail tolerance must be positive"));
        }
        Ok(())
    }
}

/// Stabilizer visibilities of a sensing state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibilitySet {
    pub eta_a: f64,
    pub eta_b: f64,
    /// Joint visibility of the sequential pair; carries a sign for grid states.
    pub eta_joint: f64,
}

impl VisibilitySet {
    pub const IDEAL: VisibilitySet = VisibilitySet {
        eta_a: 1.0,
        eta_b: 1.0,
        eta_joint: 1.0,
    };

    /// Same visibility for both observables and η_joint = η².
    pub fn symmetric(eta: f64) -> Self {
        Self {
            eta_a: eta,
            eta_b: eta,
            eta_joint: eta * eta,
        }
    }
}

fn grid_raw(delta: f64, beta: Complex64) -> Scaled {
    let d2 = delta * delta;
    let d4 = d2 * d2;
    let (br, bi) = (beta.re, beta.im);
    let z1 = Complex64::new(0.0, -br / (SQRT_PI * d2));
    let t1 = 2.0 * (1.0 + d4) / d2;
    let z2 = Complex64::new(0.0, bi / (2.0 * SQRT_PI * d2));
    let t2 = 1.0 / (2.0 * d2);
    let envelope = Scaled {
        log_scale: -(br * br + (1.0 + d4) * bi * bi) / (2.0 * d2),
        mantissa: Complex64::new(1.0, 0.0),
    };
    let even = special::theta_char(0.0, 0.0, z1, t1).times(special::theta_char(0.0, 0.0, z2, t2));
    let odd = special::theta_char(0.5, 0.0, z1, t1).times(special::theta_char(0.0, 0.5, z2, t2));
    envelope.times(even.plus(odd))
}

/// Closed-form χ(β) of the grid state in terms of Jacobi theta functions with
/// characteristics, normalized so χ(0) = 1.
pub fn char_function_grid_analytic(spec: &GridSpec, beta: Complex64) -> Result<Complex64> {
    if !(spec.delta > 0.0) {
        return Err(Error::invalid("delta must be positive"));
    }
    let value = grid_raw(spec.delta, beta).ratio(grid_raw(spec.delta, Complex64::new(0.0, 0.0)));
    if !value.is_finite() {
        return Err(Error::Numerical(format!("theta series overflow at beta = {beta}")));
    }
    Ok(value)
}

/// Build the grid state, growing the cutoff until the tail fits.
///
/// The superposition is assembled in a working space one growth step larger
/// than the cutoff, so the check sees weight that would spill past the edge.
pub fn make_grid_state(spec: &GridSpec) -> Result<StateVector> {
    spec.validate()?;
    let delta = spec.delta;
    let r = -delta.ln();
    let mut cutoff = spec.cutoff;
    loop {
        let work = (cutoff + cutoff.div_ceil(4)).min(MAX_CUTOFF + MAX_CUTOFF / 4);
        let squeezed = fock::squeezed_vacuum(r, work);
        let lost = (1.0 - squeezed.norm_sqr()).max(0.0);
        let mut amps = CVector::zeros(work);
        let k = spec.k_range as i64;
        for j in -k..=k {
            let weight = (-PI * delta * delta * (j * j) as f64).exp();
            if weight < 1e-300 {
                continue;
            }
            let d = fock::displacement_matrix(Complex64::new(j as f64 * SQRT_PI, 0.0), work);
            amps += (&d * &squeezed.amps) * Complex64::new(weight, 0.0);
        }
        let norm = crate::linalg::norm_sqr(&amps);
        let edge: f64 = amps
            .rows(
                cutoff - TAIL_WINDOW.min(cutoff),
                work - cutoff + TAIL_WINDOW.min(cutoff),
            )
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            / norm
            + lost;
        if edge <= spec.tolerance {
            let state = StateVector::new(amps.rows(0, cutoff).into_owned());
            return state.normalized();
        }
        if cutoff >= MAX_CUTOFF {
            return Err(Error::Truncation {
                cutoff,
                tail_mass: edge,
                tolerance: spec.tolerance,
            });
        }
        log::debug!("grid state delta={delta}: tail {edge:.2e} at cutoff {cutoff}, growing");
        cutoff = (cutoff + cutoff.div_ceil(4)).min(MAX_CUTOFF);
    }
}

/// Effective squeezing (Δ_x, Δ_p) from |⟨S_x⟩| = |χ(i√π)| and |⟨S_p⟩| = |χ(−√π)|.
pub fn effective_squeezing(state: &StateVector) -> Result<(f64, f64)> {
    let sx = fock::displacement_expectation(state, Complex64::new(0.0, -SQRT_PI))?;
    let sp = fock::displacement_expectation(state, Complex64::new(SQRT_PI, 0.0))?;
    let to_delta = |v: Complex64, name: &str| {
        let m2 = v.norm_sqr();
        if !(m2 > 1e-300) {
            return Err(Error::ZeroVisibility(format!("<S_{name}> = 0, squeezing undefined")));
        }
        Ok(((1.0 / m2).ln() / PI).max(0.0).sqrt())
    };
    Ok((to_delta(sx, "x")?, to_delta(sp, "p")?))
}

/// Grid visibilities from a state: η_x = Re χ(i√π), η_p = Re χ(√π) and the
/// sequential joint value η_{x,p} = −Re χ(√π(1 − i)).
pub fn grid_visibility(state: &StateVector) -> Result<VisibilitySet> {
    let chi = |beta: Complex64| fock::displacement_expectation(state, -beta);
    Ok(VisibilitySet {
        eta_a: chi(Complex64::new(0.0, SQRT_PI))?.re,
        eta_b: chi(Complex64::new(SQRT_PI, 0.0))?.re,
        eta_joint: -chi(Complex64::new(SQRT_PI, -SQRT_PI))?.re,
    })
}

/// Grid visibilities from the closed-form characteristic function.
pub fn grid_visibility_analytic(spec: &GridSpec) -> Result<VisibilitySet> {
    let chi = |beta: Complex64| char_function_grid_analytic(spec, beta);
    Ok(VisibilitySet {
        eta_a: chi(Complex64::new(0.0, SQRT_PI))?.re,
        eta_b: chi(Complex64::new(SQRT_PI, 0.0))?.re,
        eta_joint: -chi(Complex64::new(SQRT_PI, -SQRT_PI))?.re,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    Position,
    Momentum,
}

fn grid_norm(spec: &GridSpec) -> f64 {
    let d2 = spec.delta * spec.delta;
    let k = spec.k_range as i64;
    let mut total = 0.0;
    for a in -k..=k {
        for b in -k..=k {
            let (af, bf) = (a as f64, b as f64);
            total += (-PI * d2 * (af * af + bf * bf) - PI * (af - bf).powi(2) / (2.0 * d2)).exp();
        }
    }
    total
}

/// Position or momentum wavefunction of the grid state at `s`.
///
/// Position peaks sit on the √(2π) grid; momentum peaks, peak widths and the
/// envelope are all scaled by 1/(1 + Δ⁴).
pub fn grid_wavefunction(spec: &GridSpec, s: f64, basis: Basis) -> Complex64 {
    let d2 = spec.delta * spec.delta;
    let d4 = d2 * d2;
    let prefactor = 1.0 / (grid_norm(spec) * (PI * d2).sqrt()).sqrt();
    let k = spec.k_range as i64;
    let mut sum = 0.0;
    for j in -k..=k {
        let jf = j as f64;
        sum += match basis {
            Basis::Position => (-PI * d2 * jf * jf).exp() * (-(s - jf * GRID_LENGTH).powi(2) / (2.0 * d2)).exp(),
            Basis::Momentum => {
                let scale = 1.0 + d4;
                (-PI * d2 * jf * jf / scale).exp()
                    * (-scale / (2.0 * d2) * (s - jf * GRID_LENGTH / scale).powi(2)).exp()
            }
        };
    }
    Complex64::new(prefactor * sum, 0.0)
}

/// Fock-space envelope of a number–phase state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Envelope {
    /// Sine envelope with Fock cutoff F ≥ N.
    Sine { fock_cutoff: usize },
    /// Airy envelope with shape parameter μ > 0.
    Airy { mu: f64 },
    /// Equal weights on k = 0..=kmax.
    IdealFlat { kmax: usize },
}

/// Parameters of a number–phase state Σ_k c_k |kN + λ⟩.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NpSpec {
    pub spacing: usize,
    pub offset: usize,
    pub envelope: Envelope,
    pub cutoff: usize,
}

impl NpSpec {
    /// Rotation modular length 2π/N.
    pub fn l_n(&self) -> f64 {
        2.0 * PI / self.spacing as f64
    }

    /// Phonon-shift modular length N.
    pub fn l_phi(&self) -> usize {
        self.spacing
    }

    pub fn validate(&self) -> Result<()> {
        if self.spacing < 2 {
            return Err(Error::invalid(format!(
                "spacing N must be at least 2, got {}",
                self.spacing
            )));
        }
        if self.offset >= self.spacing {
            return Err(Error::invalid(format!(
                "offset {} must lie in [0, {}]",
                self.offset,
                self.spacing - 1
            )));
        }
        match self.envelope {
            Envelope::Sine { fock_cutoff } if fock_cutoff < self.spacing => Err(Error::invalid(format!(
                "sine Fock cutoff F = {fock_cutoff} below spacing {}",
                self.spacing
            ))),
            Envelope::Airy { mu } if !(mu > 0.0) => Err(Error::invalid(format!("airy mu must be positive, got {mu}"))),
            _ => Ok(()),
        }
    }
}

/// Envelope amplitudes c_k (unnormalized for airy and flat envelopes).
fn np_coefficients(spec: &NpSpec) -> Vec<f64> {
    let n = spec.spacing;
    match spec.envelope {
        Envelope::Sine { fock_cutoff: f } => {
            let kmax = f / n;
            let denom = (f + 2 * n - f % n) as f64;
            let norm = 1.0 / (kmax as f64 / 2.0 + 1.0).sqrt();
            (0..=kmax)
                .map(|k| norm * (PI * (n * (k + 1)) as f64 / denom).sin())
                .collect()
        }
        Envelope::Airy { mu } => {
            let step = (mu / (n * n) as f64).cbrt() * n as f64;
            let mut coeffs = Vec::new();
            let mut peak: f64 = 0.0;
            for k in 0.. {
                let c = special::airy_ai(step * (k + 1) as f64 - AIRY_FIRST_ZERO);
                peak = peak.max(c);
                // Past the maximum the envelope only decays.
                if c < 1e-8 * peak && step * (k + 1) as f64 > AIRY_FIRST_ZERO {
                    break;
                }
                coeffs.push(c);
                if coeffs.len() > 4 * MAX_CUTOFF {
                    break;
                }
            }
            coeffs
        }
        Envelope::IdealFlat { kmax } => alloc::vec![1.0; kmax + 1],
    }
}

/// Build the number–phase state; support only on levels ≡ λ (mod N).
pub fn make_np_state(spec: &NpSpec) -> Result<StateVector> {
    spec.validate()?;
    let coeffs = np_coefficients(spec);
    let top = (coeffs.len() - 1) * spec.spacing + spec.offset;
    if top >= spec.cutoff {
        let total: f64 = coeffs.iter().map(|c| c * c).sum();
        let outside: f64 = coeffs
            .iter()
            .enumerate()
            .filter(|(k, _)| k * spec.spacing + spec.offset >= spec.cutoff)
            .map(|(_, c)| c * c)
            .sum();
        return Err(Error::Truncation {
            cutoff: spec.cutoff,
            tail_mass: outside / total,
            tolerance: TAIL_TOLERANCE,
        });
    }
    let mut amps = alloc::vec![0.0; spec.cutoff];
    for (k, c) in coeffs.iter().enumerate() {
        amps[k * spec.spacing + spec.offset] = *c;
    }
    StateVector::from_real(&amps).normalized()
}

/// ⟨E⁻_N⟩ = Σ_n ψ*_n ψ_{n+N}.
pub fn shift_expectation(state: &StateVector, n: usize) -> Complex64 {
    let c = state.cutoff();
    (0..c.saturating_sub(n))
        .map(|k| state.amps[k].conj() * state.amps[k + n])
        .sum()
}

/// η_φ = Re⟨E⁻_N⟩ and η_n = |⟨S_n⟩|, which is exactly 1 when the support
/// sits on a single residue class mod N.
pub fn np_visibility(state: &StateVector, spec: &NpSpec) -> VisibilitySet {
    let n = spec.spacing;
    let eta_phi = shift_expectation(state, n).re;
    let on_lattice = state
        .amps
        .iter()
        .enumerate()
        .all(|(k, z)| k % n == spec.offset || *z == Complex64::new(0.0, 0.0));
    let eta_n = if on_lattice {
        1.0
    } else {
        let l_n = spec.l_n();
        state
            .amps
            .iter()
            .enumerate()
            .map(|(k, z)| Complex64::from_polar(z.norm_sqr(), -l_n * k as f64))
            .sum::<Complex64>()
            .norm()
    };
    VisibilitySet {
        eta_a: eta_phi,
        eta_b: eta_n,
        eta_joint: eta_phi * eta_n,
    }
}

/// Modular Holevo phase variance 1/|⟨E⁻_N⟩|² − 1; +∞ when the visibility vanishes.
pub fn modular_phase_variance(state: &StateVector, n: usize) -> f64 {
    let m2 = shift_expectation(state, n).norm_sqr();
    if m2 < 1e-300 {
        return f64::INFINITY;
    }
    1.0 / m2 - 1.0
}

/// Solve for the airy μ giving mean phonon number `target` by bisection on
/// [1e−4, 10] (⟨n⟩ decreases in μ), to 1e−3 in ⟨n⟩.
pub fn solve_airy_mu(spacing: usize, offset: usize, target: f64) -> Result<f64> {
    let mean_for = |mu: f64| -> Result<f64> {
        let spec = NpSpec {
            spacing,
            offset,
            envelope: Envelope::Airy { mu },
            cutoff: 4 * MAX_CUTOFF,
        };
        Ok(make_np_state(&spec)?.mean_n())
    };
    let (mut lo, mut hi) = (1e-4, 10.0);
    let (n_lo, n_hi) = (mean_for(lo)?, mean_for(hi)?);
    if !(target <= n_lo && target >= n_hi) {
        return Err(Error::invalid(format!(
            "target mean {target} outside reachable range [{n_hi:.3}, {n_lo:.3}]"
        )));
    }
    for _ in 0..200 {
        // Bisect in log μ; the mean spans orders of magnitude over the bracket.
        let mid = (lo * hi).sqrt();
        let n_mid = mean_for(mid)?;
        if (n_mid - target).abs() < 1e-3 {
            return Ok(mid);
        }
        if n_mid > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NotConverged(format!("airy mu for mean {target}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{char_function_numeric, shift_ladder, Direction};

    #[test]
    fn grid_mean_phonon_numbers() {
        for (delta, want, tol) in [(0.37, 3.22, 0.05), (0.74, 0.21, 0.03)] {
            let psi = make_grid_state(&GridSpec::new(delta)).unwrap();
            assert!((psi.mean_n() - want).abs() < tol, "delta {delta}: {}", psi.mean_n());
            assert!(psi.tail_mass() < TAIL_TOLERANCE);
        }
    }

    #[test]
    fn grid_char_function_is_real() {
        let psi = make_grid_state(&GridSpec::new(0.5)).unwrap();
        for m in -2..=2 {
            for n in -2..=2 {
                let beta = Complex64::new(m as f64 * 0.7, n as f64 * SQRT_PI);
                assert!(char_function_numeric(&psi, beta).unwrap().im.abs() < 1e-8);
            }
        }
    }

    #[test]
    fn effective_squeezing_values() {
        let (dx, dp) = effective_squeezing(&make_grid_state(&GridSpec::new(0.37)).unwrap()).unwrap();
        assert!((dx - 0.37).abs() < 0.01 && (dp - 0.37).abs() < 0.01);
        let (dx, dp) = effective_squeezing(&make_grid_state(&GridSpec::new(0.74)).unwrap()).unwrap();
        assert!((dx - 0.77).abs() < 0.02 && (dp - 0.78).abs() < 0.02, "{dx} {dp}");
        let (dx, dp) = effective_squeezing(&StateVector::vacuum(40)).unwrap();
        assert!((dx - 1.0).abs() < 1e-6 && (dp - 1.0).abs() < 1e-6);
    }

    #[test]
    fn analytic_char_function() {
        let spec = GridSpec::new(0.37);
        assert!((char_function_grid_analytic(&spec, Complex64::new(0.0, 0.0)).unwrap() - 1.0).norm() < 1e-15);
        let psi = make_grid_state(&spec).unwrap();
        let beta = Complex64::new(0.0, SQRT_PI);
        let analytic = char_function_grid_analytic(&spec, beta).unwrap();
        let numeric = char_function_numeric(&psi, beta).unwrap();
        assert!((analytic - numeric).norm() < 1e-4);
        let mirrored = char_function_grid_analytic(&spec, -beta).unwrap();
        assert!((analytic.re - mirrored.re).abs() < 1e-14);
    }

    #[test]
    fn wavefunction_shapes() {
        let spec = GridSpec::new(0.3);
        let dens = |s: f64| grid_wavefunction(&spec, s, Basis::Position).norm_sqr();
        for k in -2..=2 {
            let s = k as f64 * GRID_LENGTH;
            assert!(dens(s) > dens(s - 1e-3) && dens(s) > dens(s + 1e-3));
        }
        let spec = GridSpec::new(0.5);
        let mom = |s: f64| grid_wavefunction(&spec, s, Basis::Momentum).norm_sqr();
        // Golden-section search for the peak near √(2π).
        let (mut a, mut b) = (GRID_LENGTH - 0.5, GRID_LENGTH + 0.5);
        for _ in 0..80 {
            let m1 = b - (b - a) / 1.618_033_988_75;
            let m2 = a + (b - a) / 1.618_033_988_75;
            if mom(m1) < mom(m2) {
                a = m1;
            } else {
                b = m2;
            }
        }
        let want = GRID_LENGTH / (1.0 + 0.5f64.powi(4));
        assert!((0.5 * (a + b) - want).abs() < 1e-3, "{}", 0.5 * (a + b));
        for basis in [Basis::Position, Basis::Momentum] {
            let h = 1e-3;
            let lim = 6.0 * GRID_LENGTH;
            let steps = (2.0 * lim / h) as usize;
            let total: f64 = (0..=steps)
                .map(|i| grid_wavefunction(&spec, -lim + i as f64 * h, basis).norm_sqr() * h)
                .sum();
            assert!((total - 1.0).abs() < 1e-6, "{basis:?}: {total}");
        }
    }

    fn sine18() -> NpSpec {
        NpSpec {
            spacing: 4,
            offset: 2,
            envelope: Envelope::Sine { fock_cutoff: 18 },
            cutoff: 40,
        }
    }

    #[test]
    fn sine_state_values() {
        let spec = sine18();
        let psi = make_np_state(&spec).unwrap();
        assert!((psi.mean_n() - 10.0).abs() < 1e-12);
        for k in 0..5 {
            let want = (PI * (k + 1) as f64 / 6.0).sin() / 3f64.sqrt();
            assert!((psi.amps[4 * k + 2].re - want).abs() < 1e-14);
        }
        let vis = np_visibility(&psi, &spec);
        assert!((vis.eta_a - 0.866_025_403_784_438_6).abs() < 1e-6);
        assert_eq!(vis.eta_b, 1.0);
        let down = shift_ladder(Direction::Down, 4, 40).unwrap();
        let e = fock::expectation(&psi, &down).unwrap();
        assert!((e.re - 0.866_025).abs() < 1e-6);
        assert!((modular_phase_variance(&psi, 4) - 1.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn zero_n_state() {
        let spec = NpSpec {
            spacing: 4,
            offset: 0,
            envelope: Envelope::Sine { fock_cutoff: 4 },
            cutoff: 10,
        };
        let psi = make_np_state(&spec).unwrap();
        assert!((np_visibility(&psi, &spec).eta_a - 0.5).abs() < 1e-14);
        assert!((modular_phase_variance(&psi, 4) - 3.0).abs() < 1e-12);
        let flat = make_np_state(&NpSpec {
            envelope: Envelope::IdealFlat { kmax: 0 },
            ..spec
        })
        .unwrap();
        assert!(modular_phase_variance(&flat, 4).is_infinite());
    }

    #[test]
    fn airy_state_mean() {
        let spec = NpSpec {
            spacing: 4,
            offset: 2,
            envelope: Envelope::Airy { mu: 0.119 },
            cutoff: 200,
        };
        let psi = make_np_state(&spec).unwrap();
        assert!((psi.mean_n() - 6.0).abs() < 0.1, "{}", psi.mean_n());
        let mu = solve_airy_mu(4, 2, 6.0).unwrap();
        assert!((mu - 0.119).abs() < 0.005, "{mu}");
    }

    #[test]
    fn np_validation() {
        let bad = NpSpec { offset: 4, ..sine18() };
        assert!(make_np_state(&bad).unwrap_err().is_validation());
        let small = NpSpec { cutoff: 12, ..sine18() };
        assert!(matches!(make_np_state(&small).unwrap_err(), Error::Truncation { .. }));
    }
}
