//! Truncated Fock-space kernel: pure states, dense operators and the usual
//! bosonic operators.
//!
//! Conventions: x = (a† + a)/√2, p = i(a† − a)/√2, D(α) = exp(α a† − α* a),
//! S(r) = exp[r(a² − a†²)/2] (squeezes x by e^{−r}), χ(β) = ⟨D(−β)⟩.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, I, ONE};

/// Default bound on the probability weight allowed near the truncation edge.
pub const TAIL_TOLERANCE: f64 = 1e-10;
/// Hard cap for automatically grown cutoffs.
pub const MAX_CUTOFF: usize = 1024;
/// Minimum number of edge rows excluded from unitarity checks.
pub const MIN_GUARD_BAND: usize = 8;
/// Number of top Fock levels whose weight counts as tail mass.
pub const TAIL_WINDOW: usize = 4;

/// Largest |α|² for which the displacement recurrence starts above f64 underflow.
const MAX_DISPLACEMENT_SQR: f64 = 1400.0;

/// Column leak below which a column of D(α) or S(r) counts as inside the
/// space; the guard band grows to cover the columns above it.
const COLUMN_LEAK: f64 = 1e-11;

/// Edge rows excluded from unitarity checks for D(α): max(8, ⌈4|α|√cutoff⌉),
/// capped so at least one row stays checked.
pub fn guard_band(alpha_abs: f64, cutoff: usize) -> usize {
    let heuristic = (4.0 * alpha_abs * (cutoff as f64).sqrt()).ceil() as usize;
    heuristic.max(MIN_GUARD_BAND).min(cutoff.saturating_sub(1))
}

/// A pure oscillator state over Fock levels 0..cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub amps: CVector,
}

impl StateVector {
    pub fn new(amps: CVector) -> Self {
        Self { amps }
    }

    pub fn from_real(amps: &[f64]) -> Self {
        Self::new(CVector::from_iterator(
            amps.len(),
            amps.iter().map(|&a| Complex64::new(a, 0.0)),
        ))
    }

    /// |n⟩ in a space of dimension `cutoff`.
    pub fn fock(n: usize, cutoff: usize) -> Result<Self> {
        if n >= cutoff {
            return Err(Error::invalid(format!("Fock level {n} outside cutoff {cutoff}")));
        }
        let mut amps = CVector::zeros(cutoff);
        amps[n] = ONE;
        Ok(Self::new(amps))
    }

    pub fn vacuum(cutoff: usize) -> Self {
        Self::fock(0, cutoff.max(1)).expect("level 0 always fits")
    }

    pub fn cutoff(&self) -> usize {
        self.amps.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        linalg::norm_sqr(&self.amps)
    }

    /// Rescale to unit norm. Fails on a zero vector.
    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm_sqr().sqrt();
        if !(n > 1e-300) {
            return Err(Error::Numerical("cannot normalize a zero state".into()));
        }
        self.amps /= Complex64::new(n, 0.0);
        Ok(())
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    /// Weight in the top `TAIL_WINDOW` levels.
    pub fn tail_mass(&self) -> f64 {
        let c = self.cutoff();
        self.amps
            .rows(c.saturating_sub(TAIL_WINDOW), c.min(TAIL_WINDOW))
            .iter()
            .map(|z| z.norm_sqr())
            .sum()
    }

    /// Fail with a truncation error if the tail mass exceeds `tolerance`.
    pub fn check_tail(&self, tolerance: f64) -> Result<()> {
        let tail = self.tail_mass();
        if tail > tolerance {
            return Err(Error::Truncation {
                cutoff: self.cutoff(),
                tail_mass: tail,
                tolerance,
            });
        }
        Ok(())
    }

    pub fn mean_n(&self) -> f64 {
        self.amps.iter().enumerate().map(|(n, z)| n as f64 * z.norm_sqr()).sum()
    }

    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        check_dim(self.cutoff(), other.cutoff())?;
        Ok(self.amps.dotc(&other.amps))
    }

    /// Zero-pad or truncate to `cutoff` levels.
    pub fn resized(&self, cutoff: usize) -> Self {
        let mut amps = CVector::zeros(cutoff);
        let keep = cutoff.min(self.cutoff());
        amps.rows_mut(0, keep).copy_from(&self.amps.rows(0, keep));
        Self::new(amps)
    }
}

/// A dense operator on the truncated space.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    pub matrix: CMatrix,
    pub label: String,
    /// Set for operators that are unitary away from the truncation edge.
    pub unitary: bool,
    /// Edge rows excluded from unitarity checks.
    pub guard_band: usize,
}

impl DenseOperator {
    pub fn new(matrix: CMatrix, label: impl Into<String>) -> Self {
        Self {
            matrix,
            label: label.into(),
            unitary: false,
            guard_band: 0,
        }
    }

    pub fn new_unitary(matrix: CMatrix, label: impl Into<String>, guard_band: usize) -> Self {
        Self {
            matrix,
            label: label.into(),
            unitary: true,
            guard_band,
        }
    }

    pub fn identity(cutoff: usize) -> Self {
        Self::new_unitary(CMatrix::identity(cutoff, cutoff), "I", 0)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        check_dim(self.dim(), state.cutoff())?;
        Ok(StateVector::new(&self.matrix * &state.amps))
    }

    /// `self · other`; unitary if both are, with the wider guard band.
    pub fn compose(&self, other: &DenseOperator) -> Result<DenseOperator> {
        check_dim(self.dim(), other.dim())?;
        Ok(DenseOperator {
            matrix: &self.matrix * &other.matrix,
            label: format!("{}·{}", self.label, other.label),
            unitary: self.unitary && other.unitary,
            guard_band: self.guard_band.max(other.guard_band),
        })
    }

    pub fn adjoint(&self) -> DenseOperator {
        DenseOperator {
            matrix: self.matrix.adjoint(),
            label: format!("{}†", self.label),
            unitary: self.unitary,
            guard_band: self.guard_band,
        }
    }

    /// max |U†U − I| on levels below `dim − guard_band`.
    pub fn unitarity_error(&self) -> f64 {
        linalg::unitarity_error(&self.matrix, self.dim().saturating_sub(self.guard_band))
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

fn check_cutoff(cutoff: usize) -> Result<()> {
    if cutoff < 2 {
        return Err(Error::invalid(format!("cutoff must be at least 2, got {cutoff}")));
    }
    Ok(())
}

/// Exact matrix elements of D(α) on levels 0..cutoff, with no truncation check.
///
/// Each diagonal k = m − n is a normalized associated-Laguerre sequence
/// f_n = √(n!/(n+k)!) x^{k/2} e^{−x/2} L_n^{(k)}(x), x = |α|², generated by the
/// three-term recurrence in n. The naive two-index recurrence loses all
/// precision once |α| ≳ 5.
pub fn displacement_matrix(alpha: Complex64, cutoff: usize) -> CMatrix {
    let x = alpha.norm_sqr();
    let theta = alpha.arg();
    let mut d = CMatrix::zeros(cutoff, cutoff);
    if x == 0.0 {
        d.fill_with_identity();
        return d;
    }
    let mut f = Vec::with_capacity(cutoff);
    for k in 0..cutoff {
        let kf = k as f64;
        let len = cutoff - k;
        f.clear();
        f.push((0.5 * kf * x.ln() - 0.5 * x - 0.5 * libm::lgamma(kf + 1.0)).exp());
        if len > 1 {
            f.push((1.0 + kf - x) * f[0] / (1.0 + kf).sqrt());
        }
        for n in 1..len.saturating_sub(1) {
            let nf = n as f64;
            let next = ((2.0 * nf + 1.0 + kf - x) * f[n] - (nf * (nf + kf)).sqrt() * f[n - 1])
                / ((nf + 1.0) * (nf + 1.0 + kf)).sqrt();
            f.push(next);
        }
        let lower = Complex64::from_polar(1.0, kf * theta);
        // (−e^{−iθ})^k
        let upper = Complex64::from_polar(1.0, kf * (core::f64::consts::PI - theta));
        for (n, &fn_) in f.iter().enumerate() {
            d[(n + k, n)] = lower * fn_;
            if k > 0 {
                d[(n, n + k)] = upper * fn_;
            }
        }
    }
    d
}

/// D(α) = exp(α a† − α* a).
///
/// The guard band is the larger of [`guard_band`] and the leaking columns.
/// Fails when D|0⟩ leaks more than `TAIL_TOLERANCE` out of the space.
pub fn displacement(alpha: Complex64, cutoff: usize) -> Result<DenseOperator> {
    check_cutoff(cutoff)?;
    let x = alpha.norm_sqr();
    if x > MAX_DISPLACEMENT_SQR {
        return Err(Error::invalid(format!("|alpha|^2 = {x:.1} beyond supported range")));
    }
    if x > 0.25 * cutoff as f64 {
        log::warn!("displacement |alpha|^2 = {x:.2} is not small against cutoff {cutoff}");
    }
    let m = displacement_matrix(alpha, cutoff);
    let leaked = 1.0 - m.column(0).iter().map(|z| z.norm_sqr()).sum::<f64>();
    if leaked > TAIL_TOLERANCE {
        return Err(Error::Truncation {
            cutoff,
            tail_mass: leaked,
            tolerance: TAIL_TOLERANCE,
        });
    }
    let extent = (0..cutoff)
        .position(|n| 1.0 - m.column(n).iter().map(|z| z.norm_sqr()).sum::<f64>() > COLUMN_LEAK)
        .unwrap_or(cutoff);
    let guard = guard_band(alpha.norm(), cutoff).max(cutoff - extent).min(cutoff - 1);
    Ok(DenseOperator::new_unitary(m, format!("D({alpha})"), guard))
}

/// S(r) on levels 0..cutoff together with the number of leading columns
/// whose image stays inside the space (leaked weight < `COLUMN_LEAK`).
///
/// The textbook recurrence for ⟨m|S|n⟩ is unstable beyond a few dozen levels,
/// so the exponential is taken on an enlarged space instead. Within one parity
/// sector the generator r(a² − a†²)/2 is a real antisymmetric tridiagonal T;
/// with P = diag(i^j), P⁻¹TP = iJ for the real symmetric tridiagonal J with the
/// same off-diagonal, hence e^T = P e^{iJ} P⁻¹ from one symmetric eigensolve.
fn squeeze_with_extent(r: f64, cutoff: usize) -> (CMatrix, usize) {
    let mut s = CMatrix::zeros(cutoff, cutoff);
    if r == 0.0 {
        s.fill_with_identity();
        return (s, cutoff);
    }
    // Squeezing stretches |n⟩ out to roughly n·e^{2|r|}; columns that hit the
    // edge of the work space come out inaccurate but also fail the leak test.
    let stretch = 1.5 * cutoff as f64 * (2.0 * r.abs()).exp();
    let work = (stretch as usize + 64).min(MAX_CUTOFF).max(2 * cutoff);
    let mut leak = alloc::vec![0.0; cutoff];
    for parity in 0..2 {
        let levels: Vec<usize> = (parity..work).step_by(2).collect();
        let len = levels.len();
        let inside = levels.iter().filter(|&&n| n < cutoff).count();
        if inside == 0 {
            continue;
        }
        let mut j = nalgebra::DMatrix::<f64>::zeros(len, len);
        for (k, &n) in levels.iter().enumerate().take(len - 1) {
            let b = 0.5 * r * (((n + 1) * (n + 2)) as f64).sqrt();
            j[(k, k + 1)] = b;
            j[(k + 1, k)] = b;
        }
        let eig = nalgebra::SymmetricEigen::new(j);
        let q = eig.eigenvectors;
        // e^{iJ} restricted to the inside columns, as cos and sin parts.
        let q_in = q.rows(0, inside).transpose();
        let mut qc = q.clone();
        let mut qs = q.clone();
        for (l, &lam) in eig.eigenvalues.iter().enumerate() {
            qc.column_mut(l).scale_mut(lam.cos());
            qs.column_mut(l).scale_mut(lam.sin());
        }
        let re = &qc * &q_in;
        let im = &qs * &q_in;
        for b in 0..inside {
            for a in 0..len {
                // i^{a−b} (re + i im), which is real.
                let value = match (a + 4 - b % 4) % 4 {
                    0 => re[(a, b)],
                    1 => -im[(a, b)],
                    2 => -re[(a, b)],
                    _ => im[(a, b)],
                };
                let (m, n) = (levels[a], levels[b]);
                if m < cutoff {
                    s[(m, n)] = Complex64::new(value, 0.0);
                } else {
                    leak[n] += value * value;
                }
            }
        }
    }
    let extent = leak.iter().position(|&l| l > COLUMN_LEAK).unwrap_or(cutoff);
    (s, extent)
}

/// Matrix elements of S(r) on levels 0..cutoff.
pub fn squeeze_matrix(r: f64, cutoff: usize) -> CMatrix {
    squeeze_with_extent(r, cutoff).0
}

/// S(r) = exp[r(a² − a†²)/2] for |r| ≤ 3.
///
/// The guard band covers every column whose image leaks out of the space.
pub fn squeeze(r: f64, cutoff: usize) -> Result<DenseOperator> {
    check_cutoff(cutoff)?;
    if !(r.abs() <= 3.0) {
        return Err(Error::invalid(format!("squeeze |r| = {r} exceeds 3")));
    }
    let leaked = 1.0 - squeezed_vacuum(r, cutoff).norm_sqr();
    if leaked > TAIL_TOLERANCE {
        return Err(Error::Truncation {
            cutoff,
            tail_mass: leaked,
            tolerance: TAIL_TOLERANCE,
        });
    }
    let (m, extent) = squeeze_with_extent(r, cutoff);
    let guard = (cutoff - extent).max(MIN_GUARD_BAND).min(cutoff - 1);
    Ok(DenseOperator::new_unitary(m, format!("S({r})"), guard))
}

/// Squeezed vacuum S(r)|0⟩ on levels 0..cutoff, unnormalized after truncation.
pub fn squeezed_vacuum(r: f64, cutoff: usize) -> StateVector {
    let t = r.tanh();
    let mut v = alloc::vec![0.0; cutoff];
    if cutoff > 0 {
        v[0] = 1.0 / r.cosh().sqrt();
    }
    for n in (2..cutoff).step_by(2) {
        let nf = n as f64;
        v[n] = v[n - 2] * (-t) * ((nf - 1.0) / nf).sqrt();
    }
    StateVector::from_real(&v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
}

/// E⁺_N = Σ|n+N⟩⟨n| (`Up`) or E⁻_N = Σ|n⟩⟨n+N| (`Down`), truncated.
pub fn shift_ladder(direction: Direction, steps: usize, cutoff: usize) -> Result<DenseOperator> {
    if steps == 0 {
        return Err(Error::invalid("shift steps must be at least 1"));
    }
    let mut m = CMatrix::zeros(cutoff, cutoff);
    for n in 0..cutoff.saturating_sub(steps) {
        match direction {
            Direction::Up => m[(n + steps, n)] = ONE,
            Direction::Down => m[(n, n + steps)] = ONE,
        }
    }
    let label = match direction {
        Direction::Up => format!("E+_{steps}"),
        Direction::Down => format!("E-_{steps}"),
    };
    Ok(DenseOperator::new(m, label))
}

/// R_θ = e^{−iθ n̂}.
pub fn rotation(theta: f64, cutoff: usize) -> DenseOperator {
    let diag = CVector::from_iterator(
        cutoff,
        (0..cutoff).map(|n| Complex64::from_polar(1.0, -theta * n as f64)),
    );
    DenseOperator::new_unitary(CMatrix::from_diagonal(&diag), format!("R({theta})"), 0)
}

pub fn number(cutoff: usize) -> DenseOperator {
    let diag = CVector::from_iterator(cutoff, (0..cutoff).map(|n| Complex64::new(n as f64, 0.0)));
    DenseOperator::new(CMatrix::from_diagonal(&diag), "n")
}

pub fn annihilation(cutoff: usize) -> DenseOperator {
    let mut m = CMatrix::zeros(cutoff, cutoff);
    for n in 1..cutoff {
        m[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    DenseOperator::new(m, "a")
}

pub fn creation(cutoff: usize) -> DenseOperator {
    let mut op = annihilation(cutoff).adjoint();
    op.label = "a†".into();
    op
}

pub fn position(cutoff: usize) -> DenseOperator {
    let a = annihilation(cutoff).matrix;
    let m = (&a + a.adjoint()) * Complex64::new(FRAC_1_SQRT_2, 0.0);
    DenseOperator::new(m, "x")
}

pub fn momentum(cutoff: usize) -> DenseOperator {
    let a = annihilation(cutoff).matrix;
    let m = (a.adjoint() - &a) * (I * FRAC_1_SQRT_2);
    DenseOperator::new(m, "p")
}

/// ⟨ψ|O|ψ⟩.
pub fn expectation(state: &StateVector, op: &DenseOperator) -> Result<Complex64> {
    check_dim(op.dim(), state.cutoff())?;
    Ok(state.amps.dotc(&(&op.matrix * &state.amps)))
}

/// ⟨ψ|D(α)|ψ⟩ without building a DenseOperator. Exact for any ψ supported on
/// the truncated space, since the matrix elements are exact.
pub fn displacement_expectation(state: &StateVector, alpha: Complex64) -> Result<Complex64> {
    if alpha.norm_sqr() > MAX_DISPLACEMENT_SQR {
        return Err(Error::invalid(format!(
            "|alpha| = {} beyond supported range",
            alpha.norm()
        )));
    }
    let d = displacement_matrix(alpha, state.cutoff());
    Ok(state.amps.dotc(&(&d * &state.amps)))
}

/// χ(β) = ⟨D(−β)⟩.
///
/// The state is zero-padded by a guard band first so that a state with weight
/// near its own edge still gets a well-resolved result; with exact matrix
/// elements the padding changes nothing for properly truncated states.
pub fn char_function_numeric(state: &StateVector, beta: Complex64) -> Result<Complex64> {
    state.check_tail(TAIL_TOLERANCE)?;
    if beta.norm_sqr() > 0.5 * state.cutoff() as f64 {
        log::warn!(
            "characteristic function at |beta|^2 = {:.2} with cutoff {}",
            beta.norm_sqr(),
            state.cutoff()
        );
    }
    displacement_expectation(state, -beta)
}

/// Tensor |q⟩⟨q'| ⊗ block embeddings live here so circuit and pulses share
/// one layout: index = q·cutoff + n, q = 0 for ↓ and 1 for ↑.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridState {
    pub amps: CVector,
    pub cutoff: usize,
}

impl HybridState {
    /// |q⟩ ⊗ ψ with q = 0 (↓) or 1 (↑).
    pub fn product(q: usize, osc: &StateVector) -> Self {
        let c = osc.cutoff();
        let mut amps = CVector::zeros(2 * c);
        amps.rows_mut(q * c, c).copy_from(&osc.amps);
        Self { amps, cutoff: c }
    }

    /// (c_down |↓⟩ + c_up |↑⟩) ⊗ ψ.
    pub fn from_qubit(c_down: Complex64, c_up: Complex64, osc: &StateVector) -> Self {
        let c = osc.cutoff();
        let mut amps = CVector::zeros(2 * c);
        amps.rows_mut(0, c).copy_from(&(&osc.amps * c_down));
        amps.rows_mut(c, c).copy_from(&(&osc.amps * c_up));
        Self { amps, cutoff: c }
    }

    /// Oscillator amplitudes conditioned on ancilla level q (unnormalized).
    pub fn branch(&self, q: usize) -> StateVector {
        StateVector::new(self.amps.rows(q * self.cutoff, self.cutoff).into_owned())
    }

    pub fn norm_sqr(&self) -> f64 {
        linalg::norm_sqr(&self.amps)
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm_sqr().sqrt();
        if !(n > 1e-300) {
            return Err(Error::Numerical("cannot normalize a zero hybrid state".into()));
        }
        self.amps /= Complex64::new(n, 0.0);
        Ok(())
    }

    /// Reduced ancilla density matrix [[ρ00, ρ01], [ρ10, ρ11]].
    pub fn ancilla_density(&self) -> [[Complex64; 2]; 2] {
        let c = self.cutoff;
        let d = self.amps.rows(0, c);
        let u = self.amps.rows(c, c);
        [[d.dotc(&d), u.dotc(&d)], [d.dotc(&u), u.dotc(&u)]]
    }

    pub fn apply(&self, op: &CMatrix) -> Result<Self> {
        check_dim(op.nrows(), self.amps.len())?;
        Ok(Self {
            amps: op * &self.amps,
            cutoff: self.cutoff,
        })
    }

    /// Apply an oscillator operator to both ancilla branches.
    pub fn apply_oscillator(&self, op: &CMatrix) -> Result<Self> {
        let c = self.cutoff;
        check_dim(op.nrows(), c)?;
        let mut amps = CVector::zeros(2 * c);
        for q in 0..2 {
            let part = op * self.amps.rows(q * c, c);
            amps.rows_mut(q * c, c).copy_from(&part);
        }
        Ok(Self { amps, cutoff: c })
    }
}
