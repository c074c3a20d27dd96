//! Dense density-matrix engine over a small labeled register of qubits.
//!
//! Index convention: label `k` of an `n`-label register is the `k`-th tensor
//! factor, so it occupies bit `n - 1 - k` of a basis index (label 0 is the most
//! significant bit). For the default register `[A, B, A1, B1]` the basis index
//! of `|x_A x_B x_A1 x_B1>` is the binary number `x_A x_B x_A1 x_B1`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Tolerance for construction-time checks (normalization, unitarity, Hermiticity).
pub const CONSTRUCTION_TOL: f64 = 1e-12;
/// Tolerance for drift accumulated over operation sequences.
pub const DRIFT_TOL: f64 = 1e-10;
/// Branch probabilities at or below this are treated as zero.
pub const ZERO_PROBABILITY: f64 = 1e-15;

pub const LABEL_A: &str = "A";
pub const LABEL_B: &str = "B";
pub const LABEL_A1: &str = "A1";
pub const LABEL_B1: &str = "B1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QStateError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("state is not normalized (norm² = {norm_sqr})")]
    NotNormalized { norm_sqr: f64 },
    #[error("matrix is not unitary (max deviation {deviation:e})")]
    NotUnitary { deviation: f64 },
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("empty label selection")]
    EmptySelection,
    #[error("outcome must be 0 or 1, got {0}")]
    InvalidOutcome(u8),
    #[error("measurement branch has probability {probability:e}")]
    ZeroProbabilityBranch { probability: f64 },
    #[error("invalid Kraus channel: {0}")]
    InvalidChannel(String),
    #[error("registers differ")]
    RegisterMismatch,
}

pub type Result<T, E = QStateError> = std::result::Result<T, E>;

/// Ordered labels of two-level subsystems.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Register {
    labels: Vec<String>,
}

impl Register {
    pub fn new<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        if labels.is_empty() {
            return Err(QStateError::EmptySelection);
        }
        let mut out: Vec<String> = Vec::with_capacity(labels.len());
        for l in labels {
            let l = l.as_ref();
            if out.iter().any(|x| x == l) {
                return Err(QStateError::DuplicateLabel(l.to_string()));
            }
            out.push(l.to_string());
        }
        Ok(Self { labels: out })
    }

    /// The protocol register `[A, B, A1, B1]`.
    pub fn network() -> Self {
        Self::new(&[LABEL_A, LABEL_B, LABEL_A1, LABEL_B1]).expect("static labels are unique")
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        1 << self.labels.len()
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| QStateError::UnknownLabel(label.to_string()))
    }

    /// Bit offset of a label inside a basis index.
    pub fn bit_of(&self, label: &str) -> Result<usize> {
        Ok(self.len() - 1 - self.position(label)?)
    }

    /// Basis index for a bit assignment given in label order.
    pub fn basis_index(&self, bits: &[u8]) -> Result<usize> {
        if bits.len() != self.len() {
            return Err(QStateError::DimensionMismatch {
                expected: self.len(),
                found: bits.len(),
            });
        }
        bits.iter().try_fold(0usize, |acc, &b| match b {
            0 | 1 => Ok((acc << 1) | b as usize),
            other => Err(QStateError::InvalidOutcome(other)),
        })
    }

    fn bits_of(&self, targets: &[&str]) -> Result<Vec<usize>> {
        if targets.is_empty() {
            return Err(QStateError::EmptySelection);
        }
        let mut bits = Vec::with_capacity(targets.len());
        for t in targets {
            let b = self.bit_of(t)?;
            if bits.contains(&b) {
                return Err(QStateError::DuplicateLabel(t.to_string()));
            }
            bits.push(b);
        }
        Ok(bits)
    }
}

/// Index bookkeeping for a local operator acting on a subset of labels.
///
/// For every full basis index `i`, `sub[i]` is the local index formed by the
/// target bits (first target most significant) and `rows[i * local + s]` is the
/// full index obtained by replacing those bits with local index `s`.
struct Embedding {
    local: usize,
    sub: Vec<usize>,
    rows: Vec<usize>,
}

impl Embedding {
    fn new(dim: usize, bits: &[usize]) -> Self {
        let k = bits.len();
        let local = 1 << k;
        let mask: usize = bits.iter().map(|b| 1 << b).sum();
        let mut sub = Vec::with_capacity(dim);
        let mut rows = Vec::with_capacity(dim * local);
        for i in 0..dim {
            let s = bits
                .iter()
                .fold(0usize, |acc, &b| (acc << 1) | ((i >> b) & 1));
            sub.push(s);
            let base = i & !mask;
            for s2 in 0..local {
                let mut idx = base;
                for (j, &b) in bits.iter().enumerate() {
                    if (s2 >> (k - 1 - j)) & 1 == 1 {
                        idx |= 1 << b;
                    }
                }
                rows.push(idx);
            }
        }
        Self { local, sub, rows }
    }
}

/// Normalized pure state on a register.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    register: Register,
    amplitudes: CVector,
}

impl PureState {
    pub fn new(register: Register, amplitudes: CVector) -> Result<Self> {
        if amplitudes.len() != register.dim() {
            return Err(QStateError::DimensionMismatch {
                expected: register.dim(),
                found: amplitudes.len(),
            });
        }
        let norm_sqr = amplitudes.norm_squared();
        if (norm_sqr - 1.0).abs() > CONSTRUCTION_TOL {
            return Err(QStateError::NotNormalized { norm_sqr });
        }
        Ok(Self {
            register,
            amplitudes,
        })
    }

    pub fn from_slice(register: Register, amplitudes: &[C64]) -> Result<Self> {
        Self::new(register, CVector::from_column_slice(amplitudes))
    }

    pub fn register(&self) -> &Register {
        &self.register
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn amplitude(&self, index: usize) -> C64 {
        self.amplitudes[index]
    }
}

/// Density operator on a labeled register. Trace may drop below one after a
/// non-trace-preserving map until the caller renormalizes.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    register: Register,
    rho: CMatrix,
}

impl DensityMatrix {
    /// `|psi><psi|` from a raw amplitude vector.
    pub fn pure_state(register: Register, amplitudes: &[C64]) -> Result<Self> {
        Ok(Self::from_pure(&PureState::from_slice(
            register, amplitudes,
        )?))
    }

    pub fn from_pure(psi: &PureState) -> Self {
        let v = &psi.amplitudes;
        Self {
            register: psi.register.clone(),
            rho: v * v.adjoint(),
        }
    }

    /// Wraps a raw matrix without checking positivity.
    pub fn from_matrix(register: Register, rho: CMatrix) -> Result<Self> {
        let d = register.dim();
        if rho.nrows() != d || rho.ncols() != d {
            return Err(QStateError::DimensionMismatch {
                expected: d,
                found: rho.nrows(),
            });
        }
        Ok(Self { register, rho })
    }

    pub fn maximally_mixed(register: Register) -> Self {
        let d = register.dim();
        let rho = CMatrix::identity(d, d) * C64::new(1.0 / d as f64, 0.0);
        Self { register, rho }
    }

    pub fn register(&self) -> &Register {
        &self.register
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.rho
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.rho[(row, col)]
    }

    pub fn trace(&self) -> f64 {
        self.rho.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn purity(&self) -> f64 {
        // tr(rho^2) = sum |rho_ij|^2 for Hermitian rho
        self.rho.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Largest `|rho_ij - conj(rho_ji)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.rho[(i, j)] - self.rho[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.rho + self.rho.adjoint()) * C64::new(0.5, 0.0);
        herm.symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Divides by the trace. Fails on a (numerically) zero trace.
    pub fn renormalized(&self) -> Result<Self> {
        let t = self.trace();
        if t <= ZERO_PROBABILITY {
            return Err(QStateError::ZeroProbabilityBranch { probability: t });
        }
        Ok(Self {
            register: self.register.clone(),
            rho: &self.rho * C64::new(1.0 / t, 0.0),
        })
    }

    /// `rho -> U rho U†` for a unitary on `targets`.
    pub fn apply_unitary(&self, unitary: &CMatrix, targets: &[&str]) -> Result<Self> {
        let mut out = self.clone();
        out.apply_unitary_mut(unitary, targets)?;
        Ok(out)
    }

    pub fn apply_unitary_mut(&mut self, unitary: &CMatrix, targets: &[&str]) -> Result<()> {
        let bits = self.register.bits_of(targets)?;
        check_square(unitary, 1 << bits.len())?;
        let deviation = unitarity_defect(unitary);
        if deviation > CONSTRUCTION_TOL {
            return Err(QStateError::NotUnitary { deviation });
        }
        let emb = Embedding::new(self.dim(), &bits);
        self.rho = conjugate(&self.rho, unitary, &emb);
        Ok(())
    }

    /// `rho -> sum_k K rho K†`; the result is not renormalized and the returned
    /// survival probability is its trace.
    pub fn apply_kraus(&self, channel: &KrausChannel, targets: &[&str]) -> Result<(Self, f64)> {
        let bits = self.register.bits_of(targets)?;
        if channel.arity() != bits.len() {
            return Err(QStateError::DimensionMismatch {
                expected: 1 << bits.len(),
                found: 1 << channel.arity(),
            });
        }
        let emb = Embedding::new(self.dim(), &bits);
        let d = self.dim();
        let mut acc = CMatrix::zeros(d, d);
        for k in channel.operators() {
            acc += conjugate(&self.rho, k, &emb);
        }
        let out = Self {
            register: self.register.clone(),
            rho: acc,
        };
        let survival = out.trace();
        Ok((out, survival))
    }

    /// Projects `label` onto `outcome` and renormalizes.
    pub fn project(&self, label: &str, outcome: u8) -> Result<(f64, Self)> {
        let (p, branch) = self.project_unnormalized(label, outcome)?;
        if p <= ZERO_PROBABILITY {
            return Err(QStateError::ZeroProbabilityBranch { probability: p });
        }
        Ok((p, branch.scaled(1.0 / p)))
    }

    /// `P rho P` without renormalization, with its trace.
    pub fn project_unnormalized(&self, label: &str, outcome: u8) -> Result<(f64, Self)> {
        if outcome > 1 {
            return Err(QStateError::InvalidOutcome(outcome));
        }
        let bit = self.register.bit_of(label)?;
        let d = self.dim();
        let keep = |i: usize| ((i >> bit) & 1) as u8 == outcome;
        let mut rho = self.rho.clone();
        for j in 0..d {
            for i in 0..d {
                if !(keep(i) && keep(j)) {
                    rho[(i, j)] = C64::new(0.0, 0.0);
                }
            }
        }
        let out = Self {
            register: self.register.clone(),
            rho,
        };
        Ok((out.trace(), out))
    }

    /// Non-selective measurement of `label`: removes all coherence between its
    /// two values. Equivalent to losing the subsystem to the environment.
    pub fn dephase(&self, label: &str) -> Result<Self> {
        let (_, p0) = self.project_unnormalized(label, 0)?;
        let (_, p1) = self.project_unnormalized(label, 1)?;
        Ok(Self {
            register: self.register.clone(),
            rho: p0.rho + p1.rho,
        })
    }

    /// `<psi| rho |psi>`.
    pub fn fidelity(&self, reference: &PureState) -> Result<f64> {
        if reference.register != self.register {
            return Err(QStateError::RegisterMismatch);
        }
        let v = &reference.amplitudes;
        Ok((v.adjoint() * &self.rho * v)[(0, 0)].re)
    }

    /// Reduced state on `kept` (in the given order).
    pub fn partial_trace(&self, kept: &[&str]) -> Result<Self> {
        let kept_bits = self.register.bits_of(kept)?;
        let n = self.register.len();
        let traced_bits: Vec<usize> = (0..n).filter(|b| !kept_bits.contains(b)).collect();
        let k = kept_bits.len();
        let dk = 1 << k;
        let dt = 1 << traced_bits.len();
        let compose = |kept_idx: usize, traced_idx: usize| -> usize {
            let mut idx = 0usize;
            for (j, &b) in kept_bits.iter().enumerate() {
                if (kept_idx >> (k - 1 - j)) & 1 == 1 {
                    idx |= 1 << b;
                }
            }
            for (j, &b) in traced_bits.iter().enumerate() {
                if (traced_idx >> j) & 1 == 1 {
                    idx |= 1 << b;
                }
            }
            idx
        };
        let mut out = CMatrix::zeros(dk, dk);
        for r in 0..dk {
            for c in 0..dk {
                let mut s = C64::new(0.0, 0.0);
                for t in 0..dt {
                    s += self.rho[(compose(r, t), compose(c, t))];
                }
                out[(r, c)] = s;
            }
        }
        Ok(Self {
            register: Register::new(kept)?,
            rho: out,
        })
    }

    pub fn frobenius_distance(&self, other: &Self) -> f64 {
        (&self.rho - &other.rho).norm()
    }

    fn scaled(mut self, factor: f64) -> Self {
        self.rho *= C64::new(factor, 0.0);
        self
    }
}

/// `op * rho * op†` for an operator embedded on the target bits.
fn conjugate(rho: &CMatrix, op: &CMatrix, emb: &Embedding) -> CMatrix {
    let d = rho.nrows();
    let l = emb.local;
    // left: (op ⊗ I) rho
    let mut left = CMatrix::zeros(d, d);
    for c in 0..d {
        for i in 0..d {
            let si = emb.sub[i];
            let mut acc = C64::new(0.0, 0.0);
            for s in 0..l {
                let u = op[(si, s)];
                if u.re != 0.0 || u.im != 0.0 {
                    acc += u * rho[(emb.rows[i * l + s], c)];
                }
            }
            left[(i, c)] = acc;
        }
    }
    // right: left (op ⊗ I)†
    let mut out = CMatrix::zeros(d, d);
    for j in 0..d {
        let sj = emb.sub[j];
        for s in 0..l {
            let u = op[(sj, s)].conj();
            if u.re == 0.0 && u.im == 0.0 {
                continue;
            }
            let col = emb.rows[j * l + s];
            for i in 0..d {
                out[(i, j)] += left[(i, col)] * u;
            }
        }
    }
    out
}

fn check_square(m: &CMatrix, dim: usize) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(QStateError::DimensionMismatch {
            expected: dim,
            found: m.nrows().max(m.ncols()),
        });
    }
    Ok(())
}

/// Max-entry deviation of `U†U` from the identity.
pub fn unitarity_defect(m: &CMatrix) -> f64 {
    let d = m.nrows();
    let prod = m.adjoint() * m;
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((prod[(i, j)] - C64::new(target, 0.0)).norm());
        }
    }
    worst
}

/// Kraus operators acting on `arity` qubits, possibly sub-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausChannel {
    arity: usize,
    operators: Vec<CMatrix>,
}

impl KrausChannel {
    pub fn new(arity: usize, operators: Vec<CMatrix>) -> Result<Self> {
        let d = 1 << arity;
        for k in &operators {
            check_square(k, d)?;
        }
        let ch = Self { arity, operators };
        // sum K†K <= I
        let slack = CMatrix::identity(d, d) - ch.effect();
        let lowest = slack
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if lowest < -CONSTRUCTION_TOL {
            return Err(QStateError::InvalidChannel(format!(
                "sum of K†K exceeds identity by {:e}",
                -lowest
            )));
        }
        Ok(ch)
    }

    pub fn identity(arity: usize) -> Self {
        let d = 1 << arity;
        Self {
            arity,
            operators: vec![CMatrix::identity(d, d)],
        }
    }

    pub fn unitary(u: CMatrix) -> Result<Self> {
        let d = u.nrows();
        if !d.is_power_of_two() {
            return Err(QStateError::DimensionMismatch {
                expected: d.next_power_of_two(),
                found: d,
            });
        }
        let deviation = unitarity_defect(&u);
        if deviation > CONSTRUCTION_TOL {
            return Err(QStateError::NotUnitary { deviation });
        }
        Self::new(d.trailing_zeros() as usize, vec![u])
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn operators(&self) -> &[CMatrix] {
        &self.operators
    }

    /// `sum_k K†K`.
    pub fn effect(&self) -> CMatrix {
        let d = 1 << self.arity;
        self.operators
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, k| acc + k.adjoint() * k)
    }

    /// Spectral norm of `I - sum K†K`.
    pub fn completeness_defect(&self) -> f64 {
        let d = 1 << self.arity;
        let slack = CMatrix::identity(d, d) - self.effect();
        slack
            .symmetric_eigenvalues()
            .iter()
            .fold(0.0f64, |m, e| m.max(e.abs()))
    }

    /// Channel whose operator list is the union of both.
    pub fn merged(&self, other: &Self) -> Result<Self> {
        if self.arity != other.arity {
            return Err(QStateError::DimensionMismatch {
                expected: 1 << self.arity,
                found: 1 << other.arity,
            });
        }
        let mut ops = self.operators.clone();
        ops.extend(other.operators.iter().cloned());
        Self::new(self.arity, ops)
    }
}

/// Standard gate matrices. Multi-qubit gates use the first target as the most
/// significant local bit.
pub mod gates {
    use super::{CMatrix, C64};
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    pub fn identity() -> CMatrix {
        CMatrix::identity(2, 2)
    }

    pub fn pauli_x() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)])
    }

    pub fn pauli_z() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)])
    }

    pub fn hadamard() -> CMatrix {
        let h = FRAC_1_SQRT_2;
        CMatrix::from_row_slice(2, 2, &[c(h), c(h), c(h), c(-h)])
    }

    /// Control is the first target.
    pub fn cnot() -> CMatrix {
        let mut m = CMatrix::zeros(4, 4);
        m[(0, 0)] = c(1.0);
        m[(1, 1)] = c(1.0);
        m[(2, 3)] = c(1.0);
        m[(3, 2)] = c(1.0);
        m
    }

    /// `exp(-i pi |1><1| ⊗ |1><1|)` = diag(1, 1, 1, -1).
    pub fn cpf() -> CMatrix {
        CMatrix::from_diagonal(&super::CVector::from_column_slice(&[
            c(1.0),
            c(1.0),
            c(1.0),
            c(-1.0),
        ]))
    }

    pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
        a.kronecker(b)
    }
}
