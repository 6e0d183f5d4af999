//! Conditional number operator from a detuned blue sideband: Magnus terms,
//! numerical propagation, and the Pauli-table check. Also the idealized
//! sideband/carrier sequence for the conditional phase operator.
//!
//! Hybrid index q·cutoff + n with q = 0 for ↓. σ⁺ = |↑⟩⟨↓|.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::fock::{DenseOperator, HybridState};
use crate::linalg::{self, CMatrix, I, ONE};

/// Integration steps per sideband period.
pub const STEPS_PER_PERIOD: usize = 256;
/// Step-halving stops here.
pub const MAX_STEPS_PER_PERIOD: usize = 16384;
/// Largest allowed change of the propagator when the step is halved.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-8;
/// Fock levels kept above n_max in the Pauli check.
pub const PAULI_GUARD: usize = 6;
/// Warn when δ_b/Ω_b falls below this.
const MIN_DETUNING_RATIO: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSpec {
    /// Ω_b (rad/s, or any unit with time in its inverse).
    pub omega_b: f64,
    /// Number of sideband periods K.
    pub k: usize,
    /// Target conditional phase φ_t.
    pub phi_target: f64,
    /// Second-order sideband amplitude ratio ζ₂.
    pub zeta2: f64,
    pub cutoff: usize,
}

impl PulseSpec {
    pub fn new(omega_b: f64, k: usize, phi_target: f64, cutoff: usize) -> Self {
        Self {
            omega_b,
            k,
            phi_target,
            zeta2: 0.0,
            cutoff,
        }
    }

    pub fn with_zeta2(mut self, zeta2: f64) -> Self {
        self.zeta2 = zeta2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("K must be a positive integer"));
        }
        if !(self.phi_target > 0.0) {
            return Err(Error::invalid(format!(
                "phi_target must be positive, got {}",
                self.phi_target
            )));
        }
        if !(self.omega_b >= 0.0) {
            return Err(Error::invalid(format!(
                "omega_b must be non-negative, got {}",
                self.omega_b
            )));
        }
        if !(0.0..=0.5).contains(&self.zeta2) {
            return Err(Error::invalid(format!(
                "zeta2 must lie in [0, 0.5], got {}",
                self.zeta2
            )));
        }
        if self.cutoff < 3 {
            return Err(Error::invalid(format!(
                "cutoff must be at least 3, got {}",
                self.cutoff
            )));
        }
        Ok(())
    }

    /// δ_b = Ω_b √(Kπ/φ_t).
    pub fn detuning(&self) -> f64 {
        self.omega_b * (self.k as f64 * PI / self.phi_target).sqrt()
    }

    /// One sideband period 2π/δ_b.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.detuning()
    }

    /// t = K·2π/δ_b.
    pub fn duration(&self) -> f64 {
        self.k as f64 * self.period()
    }

    /// Φ = Ω_b² t / (2δ_b); equals φ_t by construction.
    pub fn phase(&self) -> f64 {
        self.omega_b.powi(2) * self.duration() / (2.0 * self.detuning())
    }

    /// Rate coefficient of Y3, Ω_b φ_t/(4πK).
    pub fn y3_strength(&self) -> f64 {
        self.omega_b * self.phi_target / (4.0 * PI * self.k as f64)
    }

    /// Rate coefficient of Y4, (3Ω_b/16)(φ_t/(πK))^{3/2}.
    pub fn y4_strength(&self) -> f64 {
        3.0 * self.omega_b / 16.0 * (self.phi_target / (PI * self.k as f64)).powf(1.5)
    }
}

/// Magnus terms over the full pulse (Y1 vanishes for integer K).
#[derive(Debug, Clone, PartialEq)]
pub struct MagnusTerms {
    pub y2: CMatrix,
    pub y3: CMatrix,
    pub y4: CMatrix,
    pub y2_prime: CMatrix,
}

fn block_diag(c: usize, down: impl Fn(f64) -> f64, up: impl Fn(f64) -> f64, scale: Complex64) -> CMatrix {
    let mut m = CMatrix::zeros(2 * c, 2 * c);
    for n in 0..c {
        m[(n, n)] = scale * down(n as f64);
        m[(c + n, c + n)] = scale * up(n as f64);
    }
    m
}

pub fn magnus_terms(spec: &PulseSpec) -> Result<MagnusTerms> {
    spec.validate()?;
    let c = spec.cutoff;
    let (om, dl, t) = (spec.omega_b, spec.detuning(), spec.duration());
    if om > 0.0 && dl / om < MIN_DETUNING_RATIO {
        log::warn!("detuning ratio {:.2} is small for the Magnus expansion", dl / om);
    }
    // a a† on ↓ is n+1; a† a on ↑ is n.
    let y2 = block_diag(c, |n| n + 1.0, |n| -n, -I * (t * om * om / (4.0 * dl)));
    let y4 = block_diag(
        c,
        |n| (n + 1.0).powi(2),
        |n| -n * n,
        I * (3.0 * t * om.powi(4) / (16.0 * dl.powi(3))),
    );
    // |↓⟩⟨↑| a a† a + |↑⟩⟨↓| a† a a†: couples |↑,n⟩ and |↓,n−1⟩ with n^{3/2}.
    let mut y3 = CMatrix::zeros(2 * c, 2 * c);
    let s3 = -I * (t * om.powi(3) / (4.0 * dl * dl));
    for n in 1..c {
        let v = s3 * (n as f64).powf(1.5);
        y3[(n - 1, c + n)] = v;
        y3[(c + n, n - 1)] = v;
    }
    let z = -I * (t * spec.zeta2.powi(2) * om * om / (16.0 * dl));
    let y2_prime = &y2 + block_diag(c, |n| n + 1.0, |n| -n, z) + block_diag(c, |n| (n + 1.0).powi(2), |n| -n * n, z);
    Ok(MagnusTerms { y2, y3, y4, y2_prime })
}

/// e^{Y2}: exp(−iΦσ_z n/2) exp(−iΦσ_z/4) e^{−iΦ/4}, diagonal.
pub fn magnus_prediction(spec: &PulseSpec) -> CMatrix {
    let c = spec.cutoff;
    let phi = spec.phase();
    let mut m = CMatrix::zeros(2 * c, 2 * c);
    for n in 0..c {
        m[(n, n)] = Complex64::from_polar(1.0, -phi * (n as f64 + 1.0) / 2.0);
        m[(c + n, c + n)] = Complex64::from_polar(1.0, phi * n as f64 / 2.0);
    }
    m
}

/// σ⁺-type couplings (row, col, amplitude) with their rotation rate in
/// units of δ_b. The Hermitian partner is implied.
struct Sideband {
    couplings: Vec<(usize, usize, f64, f64)>,
    dim: usize,
    detuning: f64,
}

impl Sideband {
    fn new(spec: &PulseSpec, include_second_order: bool) -> Self {
        let c = spec.cutoff;
        let half = spec.omega_b / 2.0;
        let mut couplings: Vec<_> = (0..c - 1)
            .map(|n| (c + n + 1, n, half * ((n + 1) as f64).sqrt(), 1.0))
            .collect();
        if include_second_order && spec.zeta2 > 0.0 {
            couplings.extend((0..c - 2).map(|n| {
                (
                    c + n + 2,
                    n,
                    spec.zeta2 * half * (((n + 1) * (n + 2)) as f64).sqrt(),
                    4.0,
                )
            }));
        }
        Self {
            couplings,
            dim: 2 * c,
            detuning: spec.detuning(),
        }
    }

    /// Sparse entries of −i(w₁H(t₁) + w₂H(t₂)).
    fn generator(&self, (t1, w1): (f64, f64), (t2, w2): (f64, f64)) -> Vec<(usize, usize, Complex64)> {
        let mut entries = Vec::with_capacity(2 * self.couplings.len());
        for &(r, c, amp, rate) in &self.couplings {
            let lower = Complex64::from_polar(w1 * amp, -rate * self.detuning * t1)
                + Complex64::from_polar(w2 * amp, -rate * self.detuning * t2);
            entries.push((r, c, -I * lower));
            entries.push((c, r, -I * lower.conj()));
        }
        entries
    }
}

/// u ← e^{G} u by a Taylor series with sparse G, split into 2^s pieces when
/// the entry-sum bound b exceeds ½. Terms stop once b^k/k! < 1e−17.
fn apply_sparse_exp(gen: &[(usize, usize, Complex64)], u: &mut CMatrix) {
    let bound = gen.iter().map(|e| e.2.norm()).sum::<f64>();
    let pieces = if bound > 0.5 {
        (bound / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scale = 0.5f64.powi(pieces as i32);
    let b = bound * scale;
    let mut order = 0;
    let mut tail = 1.0;
    while tail >= 1e-17 && order < 40 {
        order += 1;
        tail *= b / order as f64;
    }
    let rows = u.nrows();
    let mut term = u.clone();
    let mut next = CMatrix::zeros(rows, u.ncols());
    for _ in 0..1u64 << pieces {
        term.copy_from(u);
        for k in 1..=order {
            next.fill(linalg::ZERO);
            let f = scale / k as f64;
            for (src, dst) in term.as_slice().chunks(rows).zip(next.as_mut_slice().chunks_mut(rows)) {
                for &(r, c, v) in gen {
                    dst[r] += v * f * src[c];
                }
            }
            *u += &next;
            core::mem::swap(&mut term, &mut next);
        }
    }
}

/// One period with the fourth-order commutator-free Gauss scheme.
fn one_period(sb: &Sideband, period: f64, steps: usize) -> CMatrix {
    let h = period / steps as f64;
    let g = 3f64.sqrt() / 6.0;
    let (a1, a2) = ((0.25 + g) * h, (0.25 - g) * h);
    let mut u = CMatrix::identity(sb.dim, sb.dim);
    for i in 0..steps {
        let t0 = i as f64 * h;
        let (t1, t2) = (t0 + (0.5 - g) * h, t0 + (0.5 + g) * h);
        apply_sparse_exp(&sb.generator((t1, a1), (t2, a2)), &mut u);
        apply_sparse_exp(&sb.generator((t1, a2), (t2, a1)), &mut u);
    }
    u
}

fn matrix_power(base: &CMatrix, mut k: usize) -> CMatrix {
    let dim = base.nrows();
    let mut result = CMatrix::identity(dim, dim);
    let mut sq = base.clone();
    while k > 0 {
        if k & 1 == 1 {
            result = &sq * &result;
        }
        k >>= 1;
        if k > 0 {
            sq = &sq * &sq;
        }
    }
    result
}

/// Propagator over the full pulse with `steps` integration steps per period.
/// The Hamiltonian is periodic in 2π/δ_b, so one period is raised to K.
pub fn propagate_bsb_with_steps(spec: &PulseSpec, include_second_order: bool, steps: usize) -> Result<CMatrix> {
    spec.validate()?;
    if steps < 64 {
        return Err(Error::invalid(format!(
            "need at least 64 steps per period, got {steps}"
        )));
    }
    let dim = 2 * spec.cutoff;
    if spec.omega_b == 0.0 {
        return Ok(CMatrix::identity(dim, dim));
    }
    let sb = Sideband::new(spec, include_second_order);
    Ok(matrix_power(&one_period(&sb, spec.period(), steps), spec.k))
}

/// Converged propagator: the step is halved from `STEPS_PER_PERIOD` until
/// two successive propagators agree to 1e−8.
pub fn propagate_bsb(spec: &PulseSpec, include_second_order: bool) -> Result<DenseOperator> {
    let mut steps = STEPS_PER_PERIOD;
    let mut coarse = propagate_bsb_with_steps(spec, include_second_order, steps)?;
    loop {
        let fine = propagate_bsb_with_steps(spec, include_second_order, 2 * steps)?;
        let change = linalg::max_abs(&(&fine - &coarse));
        if change <= CONVERGENCE_TOLERANCE {
            return Ok(DenseOperator::new_unitary(fine, format!("BSB(K={})", spec.k), 2));
        }
        steps *= 2;
        if steps >= MAX_STEPS_PER_PERIOD {
            return Err(Error::NotConverged(format!(
                "propagator changed by {change:.2e} at {steps} steps per period"
            )));
        }
        coarse = fine;
    }
}

fn low_block(c: usize, n_max: usize) -> Vec<usize> {
    (0..2 * c).filter(|i| i % c <= n_max).collect()
}

/// Frobenius distance between the numeric propagator and e^{Y2} on the
/// levels n ≤ n_max of both ancilla sectors.
pub fn magnus_distance(spec: &PulseSpec, propagator: &CMatrix, n_max: usize) -> f64 {
    let diff = propagator - magnus_prediction(spec);
    let idx = low_block(spec.cutoff, n_max);
    idx.iter()
        .flat_map(|&r| idx.iter().map(move |&c| (r, c)))
        .map(|(r, c)| diff[(r, c)].norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Ancilla Pauli expectations (σ_x, σ_y, σ_z).
pub fn ancilla_paulis(state: &HybridState) -> [f64; 3] {
    let rho = state.ancilla_density();
    [2.0 * rho[0][1].re, 2.0 * rho[1][0].im, rho[0][0].re - rho[1][1].re]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauliRow {
    pub n: usize,
    pub ideal: [f64; 3],
    pub numeric: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct PauliTable {
    pub rows: Vec<PauliRow>,
    /// Mean squared difference over all rows and the three Paulis.
    pub mse: f64,
}

/// Prepare (|↓⟩ − i|↑⟩)|n⟩/√2, apply the propagator with the residual
/// exp(−iΦσ_z/4) undone, and compare Paulis with the ideal
/// exp(−iφ_t σ_z n/2).
pub fn verify_conditional_number(spec: &PulseSpec, propagator: &CMatrix, n_max: usize) -> Result<PauliTable> {
    let c = spec.cutoff;
    if n_max + PAULI_GUARD >= c {
        return Err(Error::invalid(format!(
            "n_max {n_max} needs cutoff above {}",
            n_max + PAULI_GUARD
        )));
    }
    if propagator.nrows() != 2 * c {
        return Err(Error::DimensionMismatch {
            expected: 2 * c,
            found: propagator.nrows(),
        });
    }
    let undo = Complex64::from_polar(1.0, spec.phase() / 4.0);
    let phi = spec.phi_target;
    let mut rows = Vec::with_capacity(n_max + 1);
    let mut sq = 0.0;
    for n in 0..=n_max {
        let mut psi = HybridState {
            amps: linalg::CVector::zeros(2 * c),
            cutoff: c,
        };
        psi.amps[n] = Complex64::new(FRAC_1_SQRT_2, 0.0);
        psi.amps[c + n] = Complex64::new(0.0, -FRAC_1_SQRT_2);
        let mut out = psi.apply(propagator)?;
        for k in 0..c {
            out.amps[k] *= undo;
            out.amps[c + k] *= undo.conj();
        }
        let numeric = ancilla_paulis(&out);
        let nf = n as f64;
        let ideal = [(phi * nf).sin(), -(phi * nf).cos(), 0.0];
        sq += (0..3).map(|i| (numeric[i] - ideal[i]).powi(2)).sum::<f64>();
        rows.push(PauliRow { n, ideal, numeric });
    }
    Ok(PauliTable {
        rows,
        mse: sq / (3.0 * (n_max + 1) as f64),
    })
}

/// Scan ζ₂ over [0, 0.3] and return (best ζ₂, its Pauli table).
pub fn tune_zeta2(spec: &PulseSpec, n_max: usize, points: usize) -> Result<(f64, PauliTable)> {
    let points = points.max(2);
    let mut best: Option<(f64, PauliTable)> = None;
    for i in 0..points {
        let z = 0.3 * i as f64 / (points - 1) as f64;
        let s = spec.with_zeta2(z);
        let u = propagate_bsb(&s, true)?;
        let table = verify_conditional_number(&s, &u.matrix, n_max)?;
        if best.as_ref().is_none_or(|b| table.mse < b.1.mse) {
            best = Some((z, table));
        }
    }
    Ok(best.expect("at least two scan points"))
}

/// Ideal sideband exchange U_b (n-independent) on the truncated space.
/// The edge level |↓, cutoff−1⟩ has no partner and is left fixed.
pub fn sideband_exchange(cutoff: usize) -> CMatrix {
    let c = cutoff;
    let mut m = CMatrix::zeros(2 * c, 2 * c);
    m[(c, c)] = ONE;
    for n in 0..c - 1 {
        m[(c + n + 1, n)] = ONE;
        m[(n, c + n + 1)] = ONE;
    }
    m[(c - 1, c - 1)] = ONE;
    m
}

/// Carrier π pulse |↑⟩⟨↓| + |↓⟩⟨↑|.
pub fn carrier_flip(cutoff: usize) -> CMatrix {
    let c = cutoff;
    let mut m = CMatrix::zeros(2 * c, 2 * c);
    for n in 0..c {
        m[(c + n, n)] = ONE;
        m[(n, c + n)] = ONE;
    }
    m
}

/// (U_c U_b)^{l_φ/2}: |↓⟩⟨↓| ⊗ E⁺_{l_φ/2} + |↑⟩⟨↑| ⊗ E⁻_{l_φ/2} away from
/// the vacuum and the truncation edge.
pub fn conditional_phase_sequence(l_phi: usize, cutoff: usize) -> Result<DenseOperator> {
    if l_phi == 0 || !l_phi.is_multiple_of(2) {
        return Err(Error::invalid(format!("l_phi must be even and positive, got {l_phi}")));
    }
    if cutoff <= l_phi {
        return Err(Error::invalid(format!("cutoff {cutoff} too small for l_phi {l_phi}")));
    }
    let step = carrier_flip(cutoff) * sideband_exchange(cutoff);
    let m = matrix_power(&step, l_phi / 2);
    Ok(DenseOperator::new_unitary(m, format!("CS_phi({l_phi})"), l_phi / 2))
}

/// Weight of a hybrid state below n = l_φ/2, where the sequence rotates
/// the ancilla instead of shifting.
pub fn vacuum_term_weight(state: &HybridState, l_phi: usize) -> f64 {
    let c = state.cutoff;
    (0..(l_phi / 2).min(c))
        .map(|n| state.amps[n].norm_sqr() + state.amps[c + n].norm_sqr())
        .sum()
}

/// Apply the sequence, warning when the state touches the vacuum term.
pub fn apply_conditional_phase_sequence(state: &HybridState, l_phi: usize) -> Result<HybridState> {
    let w = vacuum_term_weight(state, l_phi);
    if w > 1e-12 {
        log::warn!(
            "conditional phase sequence acts on weight {w:.2e} below n = {}",
            l_phi / 2
        );
    }
    state.apply(&conditional_phase_sequence(l_phi, state.cutoff)?.matrix)
}
