//! Phase-estimation rounds on ancilla ⊗ oscillator, and the closed-form
//! outcome models they are checked against.
//!
//! Ancilla level 0 is ↓ (σ_z = +1), level 1 is ↑. Outcome bit m = 0 means the
//! ancilla was found in ↓.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fock::{self, Direction, HybridState, StateVector, TAIL_TOLERANCE};
use crate::linalg::{CMatrix, CVector, I, ONE, ZERO};
use crate::states::{self, GridSpec, VisibilitySet};
use crate::{GRID_LENGTH, SQRT_PI};

/// Largest number of sequential rounds supported by the exact models.
pub const MAX_ROUNDS: usize = 8;

/// Smallest branch probability that may be sampled and renormalized.
const MIN_BRANCH_PROBABILITY: f64 = 1e-15;

/// Stabilizer measured in one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StabilizerKind {
    /// S_x = e^{−i l_s x} = D(−i√π).
    Sx,
    /// S_p = e^{−i l_s p} = D(√π).
    Sp,
    /// S_n = e^{−i l_n n̂}.
    Sn { l_n: f64 },
    /// S_φ = E⁻_{l_φ}, half-operator E⁺_{l_φ/2}; l_φ must be even.
    Sphi { l_phi: usize },
}

/// Ancilla basis in which a conditional operator is block diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AncillaBasis {
    /// Blocks on |↓⟩, |↑⟩.
    Z,
    /// Blocks on |+⟩, |−⟩ with |±⟩ = (|↓⟩ ± |↑⟩)/√2.
    X,
}

/// |0⟩⟨0| ⊗ a + |1⟩⟨1| ⊗ b in the stated ancilla basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalOp {
    pub kind: StabilizerKind,
    pub basis: AncillaBasis,
    /// Half-stabilizer S^{1/2}.
    pub a: CMatrix,
    /// (S†)^{1/2}.
    pub b: CMatrix,
    pub guard_band: usize,
}

impl ConditionalOp {
    pub fn cutoff(&self) -> usize {
        self.a.nrows()
    }

    /// Dense hybrid matrix (index q·cutoff + n).
    pub fn matrix(&self) -> CMatrix {
        let c = self.cutoff();
        let mut m = CMatrix::zeros(2 * c, 2 * c);
        match self.basis {
            AncillaBasis::Z => {
                m.view_mut((0, 0), (c, c)).copy_from(&self.a);
                m.view_mut((c, c), (c, c)).copy_from(&self.b);
            }
            AncillaBasis::X => {
                let sum = (&self.a + &self.b) * Complex64::new(0.5, 0.0);
                let diff = (&self.a - &self.b) * Complex64::new(0.5, 0.0);
                m.view_mut((0, 0), (c, c)).copy_from(&sum);
                m.view_mut((c, c), (c, c)).copy_from(&sum);
                m.view_mut((0, c), (c, c)).copy_from(&diff);
                m.view_mut((c, 0), (c, c)).copy_from(&diff);
            }
        }
        m
    }

    pub fn as_dense(&self) -> fock::DenseOperator {
        fock::DenseOperator::new_unitary(self.matrix(), format!("C{:?}", self.kind), self.guard_band)
    }

    fn apply(&self, state: &HybridState) -> Result<HybridState> {
        let c = self.cutoff();
        if state.cutoff != c {
            return Err(Error::DimensionMismatch {
                expected: c,
                found: state.cutoff,
            });
        }
        let rotated = match self.basis {
            AncillaBasis::Z => state.clone(),
            AncillaBasis::X => apply_ancilla(state, &hadamard()),
        };
        let mut amps = CVector::zeros(2 * c);
        amps.rows_mut(0, c).copy_from(&(&self.a * rotated.amps.rows(0, c)));
        amps.rows_mut(c, c).copy_from(&(&self.b * rotated.amps.rows(c, c)));
        let out = HybridState { amps, cutoff: c };
        Ok(match self.basis {
            AncillaBasis::Z => out,
            AncillaBasis::X => apply_ancilla(&out, &hadamard()),
        })
    }
}

/// The conditional stabilizer |↓⟩⟨↓| ⊗ S^{1/2} + |↑⟩⟨↑| ⊗ (S†)^{1/2}.
///
/// Sx and Sp are returned in the σ_x basis, so the circuit needs no
/// Hadamards around them; Sn and Sphi are σ_z-diagonal and get Hadamards
/// from the round.
pub fn conditional_stabilizer(kind: StabilizerKind, cutoff: usize) -> Result<ConditionalOp> {
    let half = SQRT_PI / 2.0;
    let (basis, a, b, guard) = match kind {
        StabilizerKind::Sx => {
            let d = fock::displacement(Complex64::new(0.0, -half), cutoff)?;
            let guard = d.guard_band;
            (AncillaBasis::X, d.matrix.clone(), d.matrix.adjoint(), guard)
        }
        StabilizerKind::Sp => {
            let d = fock::displacement(Complex64::new(half, 0.0), cutoff)?;
            let guard = d.guard_band;
            (AncillaBasis::X, d.matrix.clone(), d.matrix.adjoint(), guard)
        }
        StabilizerKind::Sn { l_n } => {
            let r = fock::rotation(l_n / 2.0, cutoff).matrix;
            (AncillaBasis::Z, r.clone(), r.adjoint(), 0)
        }
        StabilizerKind::Sphi { l_phi } => {
            if l_phi == 0 || l_phi % 2 != 0 {
                return Err(Error::invalid(format!("l_phi must be even and positive, got {l_phi}")));
            }
            let h = l_phi / 2;
            let up = fock::shift_ladder(Direction::Up, h, cutoff)?.matrix;
            let down = fock::shift_ladder(Direction::Down, h, cutoff)?.matrix;
            (AncillaBasis::Z, up, down, h)
        }
    };
    Ok(ConditionalOp {
        kind,
        basis,
        a,
        b,
        guard_band: guard,
    })
}

type Gate = [[Complex64; 2]; 2];

fn hadamard() -> Gate {
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    [[h, h], [h, -h]]
}

/// Z(θ) = diag(e^{−iθ/2}, e^{iθ/2}).
fn z_rotation(theta: f64) -> Gate {
    [
        [Complex64::from_polar(1.0, -theta / 2.0), ZERO],
        [ZERO, Complex64::from_polar(1.0, theta / 2.0)],
    ]
}

/// R_x(θ) = e^{−iθσ_x/2}.
fn x_rotation(theta: f64) -> Gate {
    let c = Complex64::new((theta / 2.0).cos(), 0.0);
    let s = -I * (theta / 2.0).sin();
    [[c, s], [s, c]]
}

fn apply_ancilla(state: &HybridState, g: &Gate) -> HybridState {
    let c = state.cutoff;
    let d = state.amps.rows(0, c);
    let u = state.amps.rows(c, c);
    let mut amps = CVector::zeros(2 * c);
    amps.rows_mut(0, c).copy_from(&(d * g[0][0] + u * g[0][1]));
    amps.rows_mut(c, c).copy_from(&(d * g[1][0] + u * g[1][1]));
    HybridState { amps, cutoff: c }
}

/// The unknown signal of each sensing family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignalPair {
    /// Displacement e^{iε_p x} e^{−iε_x p}.
    Grid { eps_x: f64, eps_p: f64 },
    /// Rotation and phonon shift R_{−ε_φ} E⁺_{ε_n}.
    Np { eps_phi: f64, eps_n: usize },
}

impl SignalPair {
    pub fn a(&self) -> f64 {
        match *self {
            SignalPair::Grid { eps_x, .. } => eps_x,
            SignalPair::Np { eps_phi, .. } => eps_phi,
        }
    }

    pub fn b(&self) -> f64 {
        match *self {
            SignalPair::Grid { eps_p, .. } => eps_p,
            SignalPair::Np { eps_n, .. } => eps_n as f64,
        }
    }
}

/// Apply the signal to the oscillator; the ancilla is untouched.
pub fn apply_signal(state: &HybridState, signal: &SignalPair) -> Result<HybridState> {
    let c = state.cutoff;
    let before = state.norm_sqr();
    let out = match *signal {
        SignalPair::Grid { eps_x, eps_p } => {
            if eps_x == 0.0 && eps_p == 0.0 {
                return Ok(state.clone());
            }
            if eps_x.abs() >= GRID_LENGTH || eps_p.abs() >= GRID_LENGTH {
                log::warn!("grid signal ({eps_x}, {eps_p}) outside the unambiguous range");
            }
            let dx = fock::displacement_matrix(Complex64::new(eps_x * FRAC_1_SQRT_2, 0.0), c);
            let dp = fock::displacement_matrix(Complex64::new(0.0, eps_p * FRAC_1_SQRT_2), c);
            state.apply_oscillator(&(dp * dx))?
        }
        SignalPair::Np { eps_phi, eps_n } => {
            let shifted = if eps_n > 0 {
                state.apply_oscillator(&fock::shift_ladder(Direction::Up, eps_n, c)?.matrix)?
            } else {
                state.clone()
            };
            shifted.apply_oscillator(&fock::rotation(-eps_phi, c).matrix)?
        }
    };
    let lost = before - out.norm_sqr();
    if lost > 100.0 * TAIL_TOLERANCE {
        return Err(Error::Truncation {
            cutoff: c,
            tail_mass: lost,
            tolerance: 100.0 * TAIL_TOLERANCE,
        });
    }
    Ok(out)
}

/// The unitary measured in a round: a stabilizer, or any other controlled
/// unitary followed by R_x(θ) like Sx/Sp (used for BsB operators).
#[derive(Debug, Clone, PartialEq)]
pub enum RoundOp {
    Stabilizer(ConditionalOp),
    Hybrid(fock::DenseOperator),
}

impl From<ConditionalOp> for RoundOp {
    fn from(op: ConditionalOp) -> Self {
        RoundOp::Stabilizer(op)
    }
}

/// Pre-measurement hybrid state of one round started from |↓⟩ ⊗ ψ.
fn round_unitary(state: &HybridState, op: &RoundOp, theta: f64) -> Result<HybridState> {
    match op {
        RoundOp::Stabilizer(cs) => match cs.basis {
            AncillaBasis::X => Ok(apply_ancilla(&cs.apply(state)?, &x_rotation(theta))),
            AncillaBasis::Z => {
                if let StabilizerKind::Sphi { l_phi } = cs.kind {
                    let low: f64 = (0..(l_phi / 2).min(state.cutoff))
                        .map(|n| state.amps[n].norm_sqr() + state.amps[state.cutoff + n].norm_sqr())
                        .sum();
                    if low > 1e-12 {
                        log::warn!("conditional phase shift applied to support below n = {}", l_phi / 2);
                    }
                }
                let s = apply_ancilla(state, &hadamard());
                let s = cs.apply(&s)?;
                let s = apply_ancilla(&s, &z_rotation(theta));
                Ok(apply_ancilla(&s, &hadamard()))
            }
        },
        RoundOp::Hybrid(u) => Ok(apply_ancilla(&state.apply(&u.matrix)?, &x_rotation(theta))),
    }
}

/// Outcome probabilities and collapsed oscillator states of one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundBranches {
    pub probability: [f64; 2],
    /// Normalized post-measurement oscillator states; `None` for a branch
    /// with probability below 1e−15.
    pub states: [Option<StateVector>; 2],
}

fn require_reset(state: &HybridState) -> Result<()> {
    let up = state.branch(1).norm_sqr();
    if up > 1e-12 {
        return Err(Error::invalid(format!(
            "round must start with the ancilla in |down>, |up> weight {up:.2e}"
        )));
    }
    Ok(())
}

/// Evolve one round and split on the ancilla outcome.
pub fn round_branches(state: &HybridState, op: &RoundOp, theta: f64) -> Result<RoundBranches> {
    require_reset(state)?;
    let out = round_unitary(state, op, theta)?;
    let mut probability = [0.0; 2];
    let mut states = [None, None];
    for q in 0..2 {
        let branch = out.branch(q);
        let p = branch.norm_sqr();
        probability[q] = p;
        if p > MIN_BRANCH_PROBABILITY {
            states[q] = Some(branch.normalized()?);
        }
    }
    let total = probability[0] + probability[1];
    probability[0] /= total;
    probability[1] /= total;
    Ok(RoundBranches { probability, states })
}

/// One measured round: returns the sampled bit and the collapsed state with
/// the ancilla reset to |↓⟩ (backaction kept).
pub fn run_qpe_round<R: Rng + ?Sized>(
    state: &HybridState,
    op: &RoundOp,
    theta: f64,
    rng: &mut R,
) -> Result<(u8, HybridState)> {
    let branches = round_branches(state, op, theta)?;
    let bit = sample_bit(branches.probability[0], rng);
    match &branches.states[bit as usize] {
        Some(osc) => Ok((bit, HybridState::product(0, osc))),
        None => Err(Error::Numerical(format!(
            "sampled outcome {bit} with probability {:.1e}",
            branches.probability[bit as usize]
        ))),
    }
}

/// Draw a bit with P(0) = `p0`.
pub fn sample_bit<R: Rng + ?Sized>(p0: f64, rng: &mut R) -> u8 {
    if rng.gen::<f64>() < p0 {
        0
    } else {
        1
    }
}

/// Sequential-round plan: `n_rounds` rounds of a-then-b measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundPlan {
    pub n_rounds: usize,
    pub theta_a: f64,
    pub theta_b: f64,
}

impl RoundPlan {
    pub fn validate(&self) -> Result<()> {
        if self.n_rounds == 0 || self.n_rounds > MAX_ROUNDS {
            return Err(Error::invalid(format!(
                "n_rounds must lie in [1, {MAX_ROUNDS}], got {}",
                self.n_rounds
            )));
        }
        Ok(())
    }

    pub fn n_bits(&self) -> usize {
        2 * self.n_rounds
    }
}

/// Outcome bits of one shot with the a/b tag and angle of each bit.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutcomeRecord {
    pub bits: Vec<u8>,
    /// `false` for an a-measurement, `true` for b.
    pub is_b: Vec<bool>,
    pub thetas: Vec<f64>,
}

impl OutcomeRecord {
    pub fn push(&mut self, bit: u8, is_b: bool, theta: f64) {
        self.bits.push(bit);
        self.is_b.push(is_b);
        self.thetas.push(theta);
    }
}

/// Full outcome distribution of a plan by tree expansion over both branches
/// of every round. Index of a bitstring is Σ_j m_j 2^j, bit 0 first.
pub fn enumerate_outcomes(osc: &StateVector, ops: (&RoundOp, &RoundOp), plan: &RoundPlan) -> Result<Vec<f64>> {
    plan.validate()?;
    let n_bits = plan.n_bits();
    let mut probs = vec![0.0; 1 << n_bits];
    let mut stack = vec![(0usize, 0usize, 1.0f64, osc.clone())];
    while let Some((depth, index, weight, psi)) = stack.pop() {
        if depth == n_bits {
            probs[index] += weight;
            continue;
        }
        let (op, theta) = if depth % 2 == 0 {
            (ops.0, plan.theta_a)
        } else {
            (ops.1, plan.theta_b)
        };
        let branches = round_branches(&HybridState::product(0, &psi), op, theta)?;
        for bit in 0..2 {
            if let Some(next) = &branches.states[bit] {
                stack.push((
                    depth + 1,
                    index | (bit << depth),
                    weight * branches.probability[bit],
                    next.clone(),
                ));
            }
        }
    }
    Ok(probs)
}

/// Sample one shot of a plan on a prepared state.
pub fn sample_outcomes<R: Rng + ?Sized>(
    osc: &StateVector,
    ops: (&RoundOp, &RoundOp),
    plan: &RoundPlan,
    rng: &mut R,
) -> Result<OutcomeRecord> {
    plan.validate()?;
    let mut record = OutcomeRecord::default();
    let mut state = HybridState::product(0, osc);
    for _ in 0..plan.n_rounds {
        let (bit, next) = run_qpe_round(&state, ops.0, plan.theta_a, rng)?;
        record.push(bit, false, plan.theta_a);
        let (bit, after) = run_qpe_round(&next, ops.1, plan.theta_b, rng)?;
        record.push(bit, true, plan.theta_b);
        state = after;
    }
    Ok(record)
}

/// Sensing family for the closed-form models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Grid,
    Np { spacing: usize, offset: usize },
}

impl Family {
    /// Cosine arguments θ_a + l_a ε_a and θ_b + l_b ε_b.
    fn phases(&self, signal: &SignalPair, theta_a: f64, theta_b: f64) -> (f64, f64) {
        match *self {
            Family::Grid => (theta_a + GRID_LENGTH * signal.a(), theta_b + GRID_LENGTH * signal.b()),
            Family::Np { spacing, offset } => {
                let l_n = 2.0 * PI / spacing as f64;
                (
                    theta_a + spacing as f64 * signal.a(),
                    theta_b + l_n * (signal.b() + offset as f64),
                )
            }
        }
    }

    /// Modular lengths (l_a, l_b).
    pub fn lengths(&self) -> (f64, f64) {
        match *self {
            Family::Grid => (GRID_LENGTH, GRID_LENGTH),
            Family::Np { spacing, .. } => (spacing as f64, 2.0 * PI / spacing as f64),
        }
    }
}

/// P(m = 0) = ½(1 + η cos φ).
pub fn prob_zero(eta: f64, phase: f64) -> f64 {
    0.5 * (1.0 + eta * phase.cos())
}

/// Independent single-round outcome probabilities (P_a(0), P_b(0)).
pub fn prob_independent(
    family: Family,
    vis: &VisibilitySet,
    signal: &SignalPair,
    theta_a: f64,
    theta_b: f64,
) -> (f64, f64) {
    let (pa, pb) = family.phases(signal, theta_a, theta_b);
    (prob_zero(vis.eta_a, pa), prob_zero(vis.eta_b, pb))
}

fn clamp_and_normalize(p: &mut [f64]) {
    for v in p.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let total: f64 = p.iter().sum();
    if total > 0.0 {
        for v in p.iter_mut() {
            *v /= total;
        }
    }
}

/// Joint distribution of one a-then-b round, indexed m_a + 2 m_b. The b
/// outcome carries the backaction flip of the preceding a measurement.
pub fn prob_joint_sequential(
    family: Family,
    vis: &VisibilitySet,
    signal: &SignalPair,
    theta_a: f64,
    theta_b: f64,
) -> [f64; 4] {
    let (pa, pb) = family.phases(signal, theta_a, theta_b);
    let (ca, cb) = (pa.cos(), pb.cos());
    let mut p = [0.0; 4];
    for (idx, v) in p.iter_mut().enumerate() {
        let sa = if idx & 1 == 0 { 1.0 } else { -1.0 };
        let sb = if idx & 2 == 0 { -1.0 } else { 1.0 };
        *v = 0.25 * (1.0 + sa * vis.eta_a * ca + sb * vis.eta_b * cb + sa * sb * vis.eta_joint * ca * cb);
    }
    clamp_and_normalize(&mut p);
    p
}

/// Exact and product-form distributions over 2^{2N_S} bitstrings.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedDistribution {
    pub exact: Vec<f64>,
    pub approx: Vec<f64>,
}

impl GeneralizedDistribution {
    /// max_m |exact − approx|.
    pub fn max_error(&self) -> f64 {
        self.exact
            .iter()
            .zip(&self.approx)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Sign flip applied to bit j of the sequence: outcome reindexing by
/// s(n) = n mod 2 for the a-bit of round n and s(n+1) for its b-bit.
fn reindex(j: usize) -> usize {
    let n = j / 2;
    if j.is_multiple_of(2) {
        n % 2
    } else {
        (n + 1) % 2
    }
}

/// Multiply out Π (1 + s O) for the given signs into coefficients of O^a.
fn sign_polynomial(signs: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut poly = vec![1.0];
    for s in signs {
        let mut next = vec![0.0; poly.len() + 1];
        for (a, c) in poly.iter().enumerate() {
            next[a] += c;
            next[a + 1] += s * c;
        }
        poly = next;
    }
    poly
}

/// Generalized sequential distribution from characteristic-function values
/// on the √π lattice.
///
/// With U_x = e^{i l_s x}, U_p = e^{i l_s p} (commuting) and
/// O = ½(e^{iθ}U + e^{−iθ}U†), P(m) = 2^{−2N_S} ⟨Π_j (1 + (−1)^{m_j + s_j} O_j)⟩
/// where ⟨U_x^a U_p^b⟩_ε = (−1)^{ab} e^{i l_s(aε_x + bε_p)} χ(√π(b − ia)).
/// The product form replaces the lattice values by η_x, η_p.
pub fn generalized_from_chi(
    chi: impl Fn(Complex64) -> Result<Complex64>,
    plan: &RoundPlan,
    eps_x: f64,
    eps_p: f64,
) -> Result<GeneralizedDistribution> {
    plan.validate()?;
    let ns = plan.n_rounds;
    let n_bits = plan.n_bits();
    let l = GRID_LENGTH;
    // Lattice values ⟨U_x^A U_p^B⟩ for |A|, |B| ≤ N_S.
    let span = 2 * ns + 1;
    let mut lattice = vec![ZERO; span * span];
    for ai in 0..span {
        for bi in 0..span {
            let (a, b) = (ai as i64 - ns as i64, bi as i64 - ns as i64);
            let sign = if (a * b).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            let phase = Complex64::from_polar(1.0, l * (a as f64 * eps_x + b as f64 * eps_p));
            let value = chi(Complex64::new(SQRT_PI * b as f64, -SQRT_PI * a as f64))?;
            lattice[ai * span + bi] = value * phase * sign;
        }
    }
    // Moments ⟨O_x^a O_p^b⟩.
    let mut moments = vec![0.0; (ns + 1) * (ns + 1)];
    for a in 0..=ns {
        for b in 0..=ns {
            let mut acc = ZERO;
            for j in 0..=a {
                for k in 0..=b {
                    let pa = a as i64 - 2 * j as i64;
                    let pb = b as i64 - 2 * k as i64;
                    let weight = binomial(a, j) * binomial(b, k);
                    let rot = Complex64::from_polar(1.0, pa as f64 * plan.theta_a + pb as f64 * plan.theta_b);
                    let ai = (pa + ns as i64) as usize;
                    let bi = (pb + ns as i64) as usize;
                    acc += rot * lattice[ai * span + bi] * weight;
                }
            }
            moments[a * (ns + 1) + b] = acc.re / 2f64.powi((a + b) as i32);
        }
    }
    let eta_x = chi(Complex64::new(0.0, SQRT_PI))?.re;
    let eta_p = chi(Complex64::new(SQRT_PI, 0.0))?.re;
    let pa0 = prob_zero(eta_x, plan.theta_a + l * eps_x);
    let pb0 = prob_zero(eta_p, plan.theta_b + l * eps_p);
    let scale = 0.25f64.powi(ns as i32);
    let mut exact = vec![0.0; 1 << n_bits];
    let mut approx = vec![0.0; 1 << n_bits];
    for index in 0..(1usize << n_bits) {
        let sign = |j: usize| {
            let m = (index >> j) & 1;
            if (m + reindex(j)).is_multiple_of(2) {
                1.0
            } else {
                -1.0
            }
        };
        let px = sign_polynomial((0..ns).map(|n| sign(2 * n)));
        let pp = sign_polynomial((0..ns).map(|n| sign(2 * n + 1)));
        let mut total = 0.0;
        for (a, ca) in px.iter().enumerate() {
            for (b, cb) in pp.iter().enumerate() {
                total += ca * cb * moments[a * (ns + 1) + b];
            }
        }
        exact[index] = scale * total;
        approx[index] = (0..n_bits)
            .map(|j| {
                let p0 = if j % 2 == 0 { pa0 } else { pb0 };
                if sign(j) > 0.0 {
                    p0
                } else {
                    1.0 - p0
                }
            })
            .product();
    }
    clamp_and_normalize(&mut exact);
    Ok(GeneralizedDistribution { exact, approx })
}

/// Generalized N_S-round distribution of the grid state described by `spec`,
/// from its closed-form characteristic function.
pub fn prob_joint_generalized(
    spec: &GridSpec,
    plan: &RoundPlan,
    eps_x: f64,
    eps_p: f64,
) -> Result<GeneralizedDistribution> {
    generalized_from_chi(
        |beta| states::char_function_grid_analytic(spec, beta),
        plan,
        eps_x,
        eps_p,
    )
}

/// max |U†U − I| over hybrid levels with n below `cutoff − guard` in both
/// ancilla sectors.
pub fn hybrid_unitarity_error(u: &CMatrix, cutoff: usize, guard: usize) -> f64 {
    let keep = cutoff.saturating_sub(guard);
    let gram = u.adjoint() * u;
    let mut worst: f64 = 0.0;
    for q in 0..2 {
        for r in 0..2 {
            for i in 0..keep {
                for j in 0..keep {
                    let target = if q == r && i == j { 1.0 } else { 0.0 };
                    worst = worst.max((gram[(q * cutoff + i, r * cutoff + j)] - target).norm());
                }
            }
        }
    }
    worst
}

/// Pauli axis of a conditional exponential.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    X,
    Y,
}

/// exp(−i c σ q) = |+⟩⟨+| ⊗ e^{−icq} + |−⟩⟨−| ⊗ e^{icq} for σ ∈ {σ_x, σ_y},
/// with e^{−icq} given as `plus`.
fn conditional_exp(axis: Axis, plus: &CMatrix) -> CMatrix {
    let c = plus.nrows();
    let minus = plus.adjoint();
    // |±⟩ = (|↓⟩ ± w|↑⟩)/√2 with w = 1 (σ_x) or i (σ_y).
    let w = match axis {
        Axis::X => ONE,
        Axis::Y => I,
    };
    let proj = |sign: f64| -> Gate {
        let ws = w * sign;
        [
            [Complex64::new(0.5, 0.0), ws.conj() * 0.5],
            [ws * 0.5, Complex64::new(0.5, 0.0)],
        ]
    };
    let (pp, pm) = (proj(1.0), proj(-1.0));
    let mut m = CMatrix::zeros(2 * c, 2 * c);
    for q in 0..2 {
        for r in 0..2 {
            let block = plus * pp[q][r] + &minus * pm[q][r];
            m.view_mut((q * c, r * c), (c, c)).copy_from(&block);
        }
    }
    m
}

/// e^{−i k x} = D(−ik/√2).
fn exp_position(k: f64, cutoff: usize) -> CMatrix {
    fock::displacement_matrix(Complex64::new(0.0, -k * FRAC_1_SQRT_2), cutoff)
}

/// e^{−i k p} = D(k/√2).
fn exp_momentum(k: f64, cutoff: usize) -> CMatrix {
    fock::displacement_matrix(Complex64::new(k * FRAC_1_SQRT_2, 0.0), cutoff)
}

/// Quadrature measured by a BsB stabilizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature {
    X,
    P,
}

/// Big-small-Big finite-energy conditional stabilizer, c_Δ = cosh Δ²:
/// x: e^{−(i/2) l c σ_x x} e^{−i l Δ² σ_y p} e^{−(i/2) l c σ_x x};
/// p: e^{(i/2) l c σ_x p} e^{i l Δ² σ_y x} e^{(i/2) l c σ_x p}.
pub fn bsb_stabilizer(kind: Quadrature, delta: f64, cutoff: usize) -> Result<fock::DenseOperator> {
    if !(delta > 0.0) {
        return Err(Error::invalid(format!("BsB delta must be positive, got {delta}")));
    }
    let l = GRID_LENGTH;
    let c_delta = (delta * delta).cosh();
    let big_k = 0.5 * l * c_delta;
    let small_k = l * delta * delta;
    let (big, small) = match kind {
        Quadrature::X => (
            conditional_exp(Axis::X, &exp_position(big_k, cutoff)),
            conditional_exp(Axis::Y, &exp_momentum(small_k, cutoff)),
        ),
        Quadrature::P => (
            conditional_exp(Axis::X, &exp_momentum(-big_k, cutoff)),
            conditional_exp(Axis::Y, &exp_position(-small_k, cutoff)),
        ),
    };
    let matrix = &big * &small * &big;
    let guard = fock::guard_band(big_k * FRAC_1_SQRT_2 * 2.0 + small_k * FRAC_1_SQRT_2, cutoff);
    Ok(fock::DenseOperator::new_unitary(
        matrix,
        format!("BsB_{kind:?}({delta})"),
        guard,
    ))
}

/// One dephasing trajectory: e^{−iφn̂} with φ ~ Normal(0, σ²).
pub fn apply_dephasing<R: Rng + ?Sized>(state: &HybridState, sigma: f64, rng: &mut R) -> Result<HybridState> {
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!(
            "dephasing sigma must be non-negative, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(state.clone());
    }
    let phi = Normal::new(0.0, sigma)
        .map_err(|e| Error::invalid(format!("{e}")))?
        .sample(rng);
    let c = state.cutoff;
    let mut out = state.clone();
    for q in 0..2 {
        for n in 0..c {
            out.amps[q * c + n] *= Complex64::from_polar(1.0, -phi * n as f64);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use crate::rng::trial_stream;
    use crate::states::{make_grid_state, make_np_state, Envelope, NpSpec};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn stabilizer_blocks() {
        let cutoff = 60;
        let cs = conditional_stabilizer(StabilizerKind::Sx, cutoff).unwrap();
        let sq = &cs.a * &cs.a;
        let want = fock::displacement(c(0.0, -SQRT_PI), cutoff).unwrap();
        let keep = cutoff - want.guard_band;
        let diff = (sq - &want.matrix).view((0, 0), (keep, keep)).into_owned();
        assert!(max_abs(&diff) < 1e-9);
        assert!(hybrid_unitarity_error(&cs.matrix(), cutoff, cs.guard_band) < 1e-9);

        let sn = conditional_stabilizer(StabilizerKind::Sn { l_n: PI / 2.0 }, 10).unwrap();
        let out = sn
            .apply(&HybridState::product(0, &StateVector::fock(3, 10).unwrap()))
            .unwrap();
        assert!((out.amps[3] - Complex64::from_polar(1.0, -3.0 * PI / 4.0)).norm() < 1e-14);

        let sphi = conditional_stabilizer(StabilizerKind::Sphi { l_phi: 4 }, 12).unwrap();
        let out = sphi
            .apply(&HybridState::product(0, &StateVector::fock(6, 12).unwrap()))
            .unwrap();
        assert_eq!(out.amps[8], ONE);
        assert!(conditional_stabilizer(StabilizerKind::Sphi { l_phi: 3 }, 12).is_err());
    }

    #[test]
    fn grid_signal_is_a_displacement() {
        let cutoff = 80;
        let psi = make_grid_state(&GridSpec::new(0.5).with_cutoff(cutoff))
            .unwrap()
            .resized(cutoff);
        let (ex, ep) = (0.31, -0.47);
        let h = apply_signal(
            &HybridState::product(0, &psi),
            &SignalPair::Grid { eps_x: ex, eps_p: ep },
        )
        .unwrap();
        let d = fock::displacement_matrix(c(ex * FRAC_1_SQRT_2, ep * FRAC_1_SQRT_2), cutoff);
        let direct = StateVector::new(&d * &psi.amps);
        let overlap = direct.inner(&h.branch(0)).unwrap();
        assert!((overlap.norm() - 1.0).abs() < 1e-9);
        let same = apply_signal(
            &HybridState::product(0, &psi),
            &SignalPair::Grid { eps_x: 0.0, eps_p: 0.0 },
        )
        .unwrap();
        assert_eq!(same.branch(0), psi);
    }

    #[test]
    fn np_signal_advances_number_phase() {
        let spec = NpSpec {
            spacing: 4,
            offset: 2,
            envelope: Envelope::Sine { fock_cutoff: 18 },
            cutoff: 40,
        };
        let psi = make_np_state(&spec).unwrap();
        let sn = fock::rotation(spec.l_n(), 40);
        let before = fock::expectation(&psi, &sn).unwrap();
        let h = apply_signal(
            &HybridState::product(0, &psi),
            &SignalPair::Np { eps_phi: 0.0, eps_n: 1 },
        )
        .unwrap();
        let after = fock::expectation(&h.branch(0), &sn).unwrap();
        let advance = (after / before).arg();
        assert!((advance + spec.l_n()).abs() < 1e-12);
        let tight = StateVector::fock(9, 10).unwrap();
        assert!(apply_signal(
            &HybridState::product(0, &tight),
            &SignalPair::Np { eps_phi: 0.0, eps_n: 1 }
        )
        .is_err());
    }

    #[test]
    fn round_matches_closed_form() {
        let spec = GridSpec::new(0.41);
        let psi = make_grid_state(&spec).unwrap();
        let vis = states::grid_visibility(&psi).unwrap();
        let cutoff = psi.cutoff();
        let op: RoundOp = conditional_stabilizer(StabilizerKind::Sx, cutoff).unwrap().into();
        for (eps, theta) in [(0.0, 0.0), (0.3, 0.7), (-0.2, 2.0)] {
            let signal = SignalPair::Grid { eps_x: eps, eps_p: 0.1 };
            let h = apply_signal(&HybridState::product(0, &psi), &signal).unwrap();
            let br = round_branches(&h, &op, theta).unwrap();
            let (pa, _) = prob_independent(Family::Grid, &vis, &signal, theta, 0.0);
            assert!((br.probability[0] - pa).abs() < 1e-9, "{} vs {pa}", br.probability[0]);
        }
    }

    #[test]
    fn sequential_closed_form_matches_enumeration() {
        let spec = GridSpec::new(0.41);
        let psi = make_grid_state(&spec).unwrap();
        let cutoff = psi.cutoff();
        let vis = states::grid_visibility(&psi).unwrap();
        let sx: RoundOp = conditional_stabilizer(StabilizerKind::Sx, cutoff).unwrap().into();
        let sp: RoundOp = conditional_stabilizer(StabilizerKind::Sp, cutoff).unwrap().into();
        let plan = RoundPlan {
            n_rounds: 1,
            theta_a: 0.4,
            theta_b: 1.1,
        };
        let brute = enumerate_outcomes(&psi, (&sx, &sp), &plan).unwrap();
        let closed = prob_joint_sequential(
            Family::Grid,
            &vis,
            &SignalPair::Grid { eps_x: 0.0, eps_p: 0.0 },
            0.4,
            1.1,
        );
        for i in 0..4 {
            assert!((brute[i] - closed[i]).abs() < 1e-6);
        }
        assert!((vis.eta_joint - vis.eta_a * vis.eta_b).abs() < 1e-4);
    }

    #[test]
    fn ideal_joint_is_deterministic() {
        let p = prob_joint_sequential(
            Family::Grid,
            &VisibilitySet::IDEAL,
            &SignalPair::Grid { eps_x: 0.0, eps_p: 0.0 },
            0.0,
            0.0,
        );
        assert_eq!(p, [0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn independent_examples() {
        let (p, _) = prob_independent(
            Family::Grid,
            &VisibilitySet::symmetric(0.72),
            &SignalPair::Grid { eps_x: 0.0, eps_p: 0.0 },
            0.0,
            0.0,
        );
        assert!((p - 0.86).abs() < 1e-12);
        let (p, _) = prob_independent(
            Family::Grid,
            &VisibilitySet::IDEAL,
            &SignalPair::Grid {
                eps_x: PI / 2.0 / GRID_LENGTH,
                eps_p: 0.0,
            },
            0.0,
            0.0,
        );
        assert!((p - 0.5).abs() < 1e-12);
        let (_, p) = prob_independent(
            Family::Np { spacing: 4, offset: 2 },
            &VisibilitySet::IDEAL,
            &SignalPair::Np { eps_phi: 0.0, eps_n: 2 },
            0.0,
            0.0,
        );
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn generalized_single_round_matches_sequential_form() {
        let spec = GridSpec::new(0.41);
        let plan = RoundPlan {
            n_rounds: 1,
            theta_a: 0.3,
            theta_b: 0.9,
        };
        let g = prob_joint_generalized(&spec, &plan, 0.1, -0.2).unwrap();
        let vis = states::grid_visibility_analytic(&spec).unwrap();
        let seq = prob_joint_sequential(
            Family::Grid,
            &vis,
            &SignalPair::Grid {
                eps_x: 0.1,
                eps_p: -0.2,
            },
            0.3,
            0.9,
        );
        for (e, s) in g.exact.iter().zip(&seq) {
            assert!((e - s).abs() < 1e-12);
        }
        assert!(g.max_error() < 5e-3);
        assert!((g.exact.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn np_round_matches_closed_form() {
        let spec = NpSpec {
            spacing: 4,
            offset: 2,
            envelope: Envelope::Sine { fock_cutoff: 18 },
            cutoff: 40,
        };
        let psi = make_np_state(&spec).unwrap();
        let vis = states::np_visibility(&psi, &spec);
        let family = Family::Np { spacing: 4, offset: 2 };
        let sphi: RoundOp = conditional_stabilizer(StabilizerKind::Sphi { l_phi: 4 }, 40)
            .unwrap()
            .into();
        let sn: RoundOp = conditional_stabilizer(StabilizerKind::Sn { l_n: spec.l_n() }, 40)
            .unwrap()
            .into();
        for (eps_phi, eps_n, ta, tb) in [(0.0, 0, 0.0, 0.0), (0.2, 1, 0.5, 1.3), (-0.3, 3, 2.0, 0.2)] {
            let signal = SignalPair::Np { eps_phi, eps_n };
            let h = apply_signal(&HybridState::product(0, &psi), &signal).unwrap();
            let (pa, pb) = prob_independent(family, &vis, &signal, ta, tb);
            let a = round_branches(&h, &sphi, ta).unwrap();
            let b = round_branches(&h, &sn, tb).unwrap();
            assert!((a.probability[0] - pa).abs() < 1e-12);
            assert!((b.probability[0] - pb).abs() < 1e-12);
            let plan = RoundPlan {
                n_rounds: 1,
                theta_a: ta,
                theta_b: tb,
            };
            let brute = enumerate_outcomes(&h.branch(0), (&sphi, &sn), &plan).unwrap();
            let closed = prob_joint_sequential(family, &vis, &signal, ta, tb);
            for i in 0..4 {
                assert!(
                    (brute[i] - closed[i]).abs() < 1e-12,
                    "{i}: {} vs {}",
                    brute[i],
                    closed[i]
                );
            }
        }
    }

    #[test]
    fn sampled_round_collapses_and_resets() {
        let psi = make_grid_state(&GridSpec::new(0.5)).unwrap();
        let op: RoundOp = conditional_stabilizer(StabilizerKind::Sp, psi.cutoff()).unwrap().into();
        let mut rng = trial_stream(3, 0);
        let (_, after) = run_qpe_round(&HybridState::product(0, &psi), &op, 0.4, &mut rng).unwrap();
        assert!(after.branch(1).norm_sqr() == 0.0);
        assert!((after.norm_sqr() - 1.0).abs() < 1e-12);
        let entangled = HybridState::from_qubit(c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0), &psi);
        assert!(run_qpe_round(&entangled, &op, 0.0, &mut rng)
            .unwrap_err()
            .is_validation());
    }

    #[test]
    fn bsb_reduces_to_squared_stabilizer() {
        let cutoff = 90;
        let delta = 1e-4;
        let cs = conditional_stabilizer(StabilizerKind::Sx, cutoff).unwrap().matrix();
        let bsb = bsb_stabilizer(Quadrature::X, delta, cutoff).unwrap();
        let keep = cutoff - bsb.guard_band;
        let want = &cs * &cs;
        let mut worst: f64 = 0.0;
        for q in 0..2 {
            for r in 0..2 {
                let d = (bsb.matrix.view((q * cutoff, r * cutoff), (keep, keep)).into_owned())
                    - want.view((q * cutoff, r * cutoff), (keep, keep)).into_owned();
                worst = worst.max(max_abs(&d));
            }
        }
        assert!(worst < 1e-6, "{worst}");
        let csp = conditional_stabilizer(StabilizerKind::Sp, cutoff)
            .unwrap()
            .matrix()
            .adjoint();
        let bsb_p = bsb_stabilizer(Quadrature::P, delta, cutoff).unwrap();
        let want = &csp * &csp;
        for q in 0..2 {
            for r in 0..2 {
                let d = (bsb_p.matrix.view((q * cutoff, r * cutoff), (keep, keep)).into_owned())
                    - want.view((q * cutoff, r * cutoff), (keep, keep)).into_owned();
                assert!(max_abs(&d) < 1e-6);
            }
        }
        assert!(hybrid_unitarity_error(&bsb.matrix, cutoff, bsb.guard_band) < 1e-9);
    }

    #[test]
    fn generalized_two_rounds_matches_enumeration() {
        let spec = GridSpec::new(0.45);
        let psi = make_grid_state(&spec).unwrap();
        let cutoff = psi.cutoff();
        let (ex, ep) = (0.12, -0.08);
        let shifted = apply_signal(
            &HybridState::product(0, &psi),
            &SignalPair::Grid { eps_x: ex, eps_p: ep },
        )
        .unwrap()
        .branch(0);
        let sx: RoundOp = conditional_stabilizer(StabilizerKind::Sx, cutoff).unwrap().into();
        let sp: RoundOp = conditional_stabilizer(StabilizerKind::Sp, cutoff).unwrap().into();
        let plan = RoundPlan {
            n_rounds: 2,
            theta_a: 0.5,
            theta_b: 1.2,
        };
        let brute = enumerate_outcomes(&shifted, (&sx, &sp), &plan).unwrap();
        let g = prob_joint_generalized(&spec, &plan, ex, ep).unwrap();
        for (i, (b, e)) in brute.iter().zip(&g.exact).enumerate() {
            assert!((b - e).abs() < 1e-6, "{i}: {b} vs {e}");
        }
    }

    #[test]
    fn dephasing_zero_is_identity() {
        let psi = make_grid_state(&GridSpec::new(0.6)).unwrap();
        let h = HybridState::product(0, &psi);
        let mut rng = trial_stream(1, 1);
        assert_eq!(apply_dephasing(&h, 0.0, &mut rng).unwrap(), h);
        assert!(apply_dephasing(&h, -1.0, &mut rng).is_err());
    }
}
