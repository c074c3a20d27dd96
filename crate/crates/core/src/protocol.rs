//! Nonlocal CNOT between node A (control) and node B (target) using one shared
//! polarization-entangled photon pair `(|h v> + |v h>)/√2` on `(A1, B1)`.
//!
//! Polarization encoding: `|h> = |1>`, `|v> = |0>`; detector `D_v` reports bit
//! 0 and `D_h` bit 1.
//!
//! - Step A: H on A1, CPF(A, A1), H on A1, then A1 is detected (`r_a`).
//! - Step B: H on B, CPF(B, B1), H on B (a CNOT with B1 as control), then H on
//!   B1 and detection (`r_b`).
//! - Step C: Pauli corrections on A and B chosen from `(r_a, r_b)`.

use std::fmt;
use std::sync::OnceLock;

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::cavity::{self, CavityError, CpfChannel, CpfMode};
use crate::noise::{self, NoiseError, NoiseParams, SideOutcome};
use crate::qstate::{
    gates, CMatrix, DensityMatrix, KrausChannel, PureState, QStateError, Register, C64, LABEL_A,
    LABEL_A1, LABEL_B, LABEL_B1,
};

/// Fidelity threshold for accepting a correction candidate.
const CORRECTION_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("node input not normalized (|x|² + |y|² = {norm_sqr})")]
    NotNormalized { norm_sqr: f64 },
    #[error("no Pauli correction restores branch {0}")]
    NoValidCorrection(MeasurementRecord),
    #[error("{count} Pauli corrections restore branch {branch}")]
    AmbiguousCorrection {
        branch: MeasurementRecord,
        count: usize,
    },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    State(#[from] QStateError),
    #[error(transparent)]
    Cavity(#[from] CavityError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
}

pub type Result<T, E = ProtocolError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarization {
    V,
    H,
}

impl Polarization {
    pub const ALL: [Polarization; 2] = [Polarization::V, Polarization::H];

    pub fn bit(self) -> u8 {
        match self {
            Self::V => 0,
            Self::H => 1,
        }
    }

    pub fn from_bit(bit: u8) -> Self {
        if bit == 0 {
            Self::V
        } else {
            Self::H
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::V => "v",
            Self::H => "h",
        })
    }
}

/// Amplitudes `(x, y)` of `x|0> + y|1>` for one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeInput {
    x: C64,
    y: C64,
}

impl NodeInput {
    pub fn new(x: C64, y: C64) -> Result<Self> {
        let norm_sqr = x.norm_sqr() + y.norm_sqr();
        if (norm_sqr - 1.0).abs() > 1e-12 {
            return Err(ProtocolError::NotNormalized { norm_sqr });
        }
        Ok(Self { x, y })
    }

    pub fn real(x: f64, y: f64) -> Result<Self> {
        Self::new(C64::new(x, 0.0), C64::new(y, 0.0))
    }

    pub fn zero() -> Self {
        Self {
            x: C64::new(1.0, 0.0),
            y: C64::new(0.0, 0.0),
        }
    }

    pub fn one() -> Self {
        Self {
            x: C64::new(0.0, 0.0),
            y: C64::new(1.0, 0.0),
        }
    }

    /// `(|0> + |1>)/√2`.
    pub fn balanced() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            x: C64::new(h, 0.0),
            y: C64::new(h, 0.0),
        }
    }

    /// `(|0> + i|1>)/√2`.
    pub fn balanced_imag() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            x: C64::new(h, 0.0),
            y: C64::new(0.0, h),
        }
    }

    /// Haar-random qubit state.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        // normalized complex Gaussian vector via Box–Muller
        let mut gauss = || {
            let u1: f64 = 1.0 - rng.gen::<f64>();
            let u2: f64 = rng.gen::<f64>();
            let r = (-2.0 * u1.ln()).sqrt();
            let t = 2.0 * std::f64::consts::PI * u2;
            C64::new(r * t.cos(), r * t.sin())
        };
        let x = gauss();
        let y = gauss();
        let n = (x.norm_sqr() + y.norm_sqr()).sqrt();
        Self { x: x / n, y: y / n }
    }

    pub fn x(&self) -> C64 {
        self.x
    }

    pub fn y(&self) -> C64 {
        self.y
    }

    fn amp(&self, bit: usize) -> C64 {
        if bit == 0 {
            self.x
        } else {
            self.y
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MeasurementRecord {
    pub r_a: Polarization,
    pub r_b: Polarization,
}

impl MeasurementRecord {
    pub fn new(r_a: Polarization, r_b: Polarization) -> Self {
        Self { r_a, r_b }
    }

    pub fn all() -> [MeasurementRecord; 4] {
        let mut out = [Self::new(Polarization::V, Polarization::V); 4];
        for (i, rec) in out.iter_mut().enumerate() {
            *rec = Self::from_index(i);
        }
        out
    }

    fn index(&self) -> usize {
        (self.r_a.bit() as usize) << 1 | self.r_b.bit() as usize
    }

    fn from_index(i: usize) -> Self {
        Self::new(
            Polarization::from_bit((i >> 1) as u8 & 1),
            Polarization::from_bit(i as u8 & 1),
        )
    }
}

impl fmt::Display for MeasurementRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(r_a={}, r_b={})", self.r_a, self.r_b)
    }
}

/// Single-qubit correction. `ZX` applies X first, then Z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Z,
    ZX,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Z, Pauli::ZX];

    pub fn matrix(self) -> CMatrix {
        match self {
            Self::I => gates::identity(),
            Self::X => gates::pauli_x(),
            Self::Z => gates::pauli_z(),
            Self::ZX => gates::pauli_z() * gates::pauli_x(),
        }
    }
}

impl fmt::Display for Pauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::I => "I",
            Self::X => "X",
            Self::Z => "Z",
            Self::ZX => "ZX",
        })
    }
}

/// Corrections `(on A, on B)` for each measurement branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorrectionTable {
    entries: [(Pauli, Pauli); 4],
}

impl CorrectionTable {
    pub fn get(&self, record: MeasurementRecord) -> (Pauli, Pauli) {
        self.entries[record.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (MeasurementRecord, (Pauli, Pauli))> + '_ {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| (MeasurementRecord::from_index(i), *e))
    }

    /// Applies the corrections for `record` to nodes A and B.
    pub fn apply(&self, state: &mut DensityMatrix, record: MeasurementRecord) -> Result<()> {
        let (pa, pb) = self.get(record);
        apply_correction(state, pa, pb)
    }
}

fn apply_correction(state: &mut DensityMatrix, pa: Pauli, pb: Pauli) -> Result<()> {
    if pa != Pauli::I {
        state.apply_unitary_mut(&pa.matrix(), &[LABEL_A])?;
    }
    if pb != Pauli::I {
        state.apply_unitary_mut(&pb.matrix(), &[LABEL_B])?;
    }
    Ok(())
}

/// `CNOT_{A→B} (|φ_A> ⊗ |φ_B>)` on the register `[A, B]`.
pub fn reference_cnot(node_a: &NodeInput, node_b: &NodeInput) -> PureState {
    let (al, be, a, b) = (node_a.x, node_a.y, node_b.x, node_b.y);
    PureState::from_slice(node_register(), &[al * a, al * b, be * b, be * a])
        .expect("product of normalized inputs is normalized")
}

pub fn node_register() -> Register {
    Register::new(&[LABEL_A, LABEL_B]).expect("static labels are unique")
}

/// Node inputs times the ebit on `(A1, B1)`, on the full register.
pub fn build_initial_state(node_a: &NodeInput, node_b: &NodeInput) -> DensityMatrix {
    DensityMatrix::from_pure(&initial_pure_state(node_a, node_b))
}

pub fn initial_pure_state(node_a: &NodeInput, node_b: &NodeInput) -> PureState {
    let reg = Register::network();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut amps = vec![C64::new(0.0, 0.0); reg.dim()];
    for xa in 0..2usize {
        for xb in 0..2usize {
            let node = node_a.amp(xa) * node_b.amp(xb);
            // |h>_A1 |v>_B1 + |v>_A1 |h>_B1
            for (a1, b1) in [(1u8, 0u8), (0, 1)] {
                let idx = reg
                    .basis_index(&[xa as u8, xb as u8, a1, b1])
                    .expect("valid bits");
                amps[idx] = node * h;
            }
        }
    }
    PureState::from_slice(reg, &amps).expect("normalized by construction")
}

fn hadamard(state: &mut DensityMatrix, label: &str) -> Result<()> {
    state.apply_unitary_mut(&gates::hadamard(), &[label])?;
    Ok(())
}

fn apply_channel(
    state: &DensityMatrix,
    channel: &KrausChannel,
    photon: &str,
    atom: &str,
) -> Result<DensityMatrix> {
    Ok(state.apply_kraus(channel, &[photon, atom])?.0)
}

/// Step A: `H_A1 · CPF(A, A1) · H_A1`. The channel acts on `(photon, atom)`;
/// the result is not renormalized.
pub fn step_a(state: &DensityMatrix, cpf: &KrausChannel) -> Result<DensityMatrix> {
    let mut s = state.clone();
    hadamard(&mut s, LABEL_A1)?;
    let mut s = apply_channel(&s, cpf, LABEL_A1, LABEL_A)?;
    hadamard(&mut s, LABEL_A1)?;
    Ok(s)
}

/// Step B: `H_B · CPF(B, B1) · H_B`, then `H_B1`. Expects A1 to have been
/// measured (or projected) already.
pub fn step_b(state: &DensityMatrix, cpf: &KrausChannel) -> Result<DensityMatrix> {
    let mut s = state.clone();
    hadamard(&mut s, LABEL_B)?;
    let mut s = apply_channel(&s, cpf, LABEL_B1, LABEL_B)?;
    hadamard(&mut s, LABEL_B)?;
    hadamard(&mut s, LABEL_B1)?;
    Ok(s)
}

fn ideal_channel() -> KrausChannel {
    KrausChannel::unitary(gates::cpf()).expect("CPF is unitary")
}

/// Unnormalized ideal branch state before corrections, and its probability.
fn ideal_branch(
    node_a: &NodeInput,
    node_b: &NodeInput,
    record: MeasurementRecord,
) -> Result<(f64, DensityMatrix)> {
    let cpf = ideal_channel();
    let s = step_a(&build_initial_state(node_a, node_b), &cpf)?;
    let (_, s) = s.project_unnormalized(LABEL_A1, record.r_a.bit())?;
    let s = step_b(&s, &cpf)?;
    let (p, s) = s.project_unnormalized(LABEL_B1, record.r_b.bit())?;
    Ok((p, s))
}

fn corrected_fidelity(
    branch: &DensityMatrix,
    pa: Pauli,
    pb: Pauli,
    reference: &PureState,
) -> Result<f64> {
    let mut s = branch.renormalized()?;
    apply_correction(&mut s, pa, pb)?;
    Ok(s.partial_trace(&[LABEL_A, LABEL_B])?.fidelity(reference)?)
}

/// Probe inputs whose CNOT images are not simultaneous eigenstates of any
/// nontrivial Pauli pair.
fn probe_inputs() -> Vec<(NodeInput, NodeInput)> {
    use NodeInput as N;
    vec![
        (N::zero(), N::zero()),
        (N::one(), N::one()),
        (N::balanced(), N::zero()),
        (N::balanced_imag(), N::balanced()),
        (N::zero(), N::balanced_imag()),
        (N::balanced(), N::balanced_imag()),
    ]
}

/// Searches `{I, X, Z, ZX}²` for the unique correction of each branch.
pub fn derive_correction_table() -> Result<CorrectionTable> {
    let probes = probe_inputs();
    let mut branches = Vec::with_capacity(probes.len());
    for (a, b) in &probes {
        let mut per_record = Vec::with_capacity(4);
        for rec in MeasurementRecord::all() {
            per_record.push(ideal_branch(a, b, rec)?.1);
        }
        branches.push((reference_cnot(a, b), per_record));
    }
    let mut entries = [(Pauli::I, Pauli::I); 4];
    for rec in MeasurementRecord::all() {
        let mut found = Vec::new();
        for pa in Pauli::ALL {
            for pb in Pauli::ALL {
                let mut ok = true;
                for (reference, per_record) in &branches {
                    let f = corrected_fidelity(&per_record[rec.index()], pa, pb, reference)?;
                    if f < 1.0 - CORRECTION_TOL {
                        ok = false;
                        break;
                    }
                }
                if ok {
                    found.push((pa, pb));
                }
            }
        }
        entries[rec.index()] = match found.as_slice() {
            [] => return Err(ProtocolError::NoValidCorrection(rec)),
            [single] => *single,
            _ => {
                return Err(ProtocolError::AmbiguousCorrection {
                    branch: rec,
                    count: found.len(),
                })
            }
        };
    }
    Ok(CorrectionTable { entries })
}

/// Table derived once per process.
pub fn correction_table() -> &'static CorrectionTable {
    static TABLE: OnceLock<CorrectionTable> = OnceLock::new();
    TABLE.get_or_init(|| derive_correction_table().expect("ideal protocol has a Pauli frame"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolResult {
    pub record: MeasurementRecord,
    pub probability: f64,
    /// Corrected, normalized state of `(A, B)`.
    pub state: DensityMatrix,
    pub fidelity: f64,
}

/// Enumerates all four measurement branches of the ideal protocol.
pub fn run_ideal(node_a: &NodeInput, node_b: &NodeInput) -> Result<Vec<ProtocolResult>> {
    let table = correction_table();
    let reference = reference_cnot(node_a, node_b);
    let mut out = Vec::with_capacity(4);
    for rec in MeasurementRecord::all() {
        let (probability, branch) = ideal_branch(node_a, node_b, rec)?;
        let mut s = branch.renormalized()?;
        table.apply(&mut s, rec)?;
        let state = s.partial_trace(&[LABEL_A, LABEL_B])?;
        let fidelity = state.fidelity(&reference)?;
        out.push(ProtocolResult {
            record: rec,
            probability,
            state,
            fidelity,
        });
    }
    Ok(out)
}

/// Branch-averaged, corrected output on `(A, B)` of the ideal protocol.
pub fn ideal_output(node_a: &NodeInput, node_b: &NodeInput) -> Result<DensityMatrix> {
    let results = run_ideal(node_a, node_b)?;
    let mut acc = CMatrix::zeros(4, 4);
    for r in &results {
        acc += r.state.matrix() * C64::new(r.probability, 0.0);
    }
    Ok(DensityMatrix::from_matrix(node_register(), acc)?)
}

/// Product inputs `{|0>, |1>, |+>, |+i>}²`, which span the two-qubit
/// operator space.
pub fn tomography_inputs() -> Vec<(NodeInput, NodeInput)> {
    let singles = [
        NodeInput::zero(),
        NodeInput::one(),
        NodeInput::balanced(),
        NodeInput::balanced_imag(),
    ];
    let mut out = Vec::with_capacity(16);
    for a in singles {
        for b in singles {
            out.push((a, b));
        }
    }
    out
}

fn vectorize(m: &CMatrix) -> nalgebra::DVector<C64> {
    nalgebra::DVector::from_column_slice(m.as_slice())
}

/// Process fidelity of the ideal end-to-end protocol with the CNOT, from
/// linear-inversion tomography over [`tomography_inputs`].
pub fn ideal_process_fidelity() -> Result<f64> {
    let inputs = tomography_inputs();
    let n = inputs.len();
    let mut rho_in = CMatrix::zeros(n, n);
    let mut rho_out = CMatrix::zeros(n, n);
    for (k, (a, b)) in inputs.iter().enumerate() {
        let psi = PureState::from_slice(
            node_register(),
            &[a.x * b.x, a.x * b.y, a.y * b.x, a.y * b.y],
        )?;
        let input = DensityMatrix::from_pure(&psi);
        rho_in.set_column(k, &vectorize(input.matrix()));
        rho_out.set_column(k, &vectorize(ideal_output(a, b)?.matrix()));
    }
    let inverse = rho_in
        .try_inverse()
        .ok_or_else(|| ProtocolError::InvalidParams("tomography inputs are singular".into()))?;
    let superop = rho_out * inverse;
    let u = gates::cnot();
    // vec(U ρ U†) = (conj(U) ⊗ U) vec(ρ) in column-major order
    let target = gates::kron(&u.map(|z| z.conj()), &u);
    let overlap = (target.adjoint() * superop).trace();
    // tr(S_U† S_U) = d² = n for a unitary U
    Ok(overlap.norm() / n as f64)
}

/// What happens to photon energy taken out of the reflected mode by the atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScatterPolicy {
    /// The detector still fires; the scattered branch only dephases the atom,
    /// leaving populations unchanged. Trace preserving.
    #[default]
    Retained,
    /// The photon is lost: no true click on that side.
    Heralded,
}

impl std::str::FromStr for ScatterPolicy {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "retained" | "detected" => Ok(Self::Retained),
            "heralded" | "post-selected" | "lost" => Ok(Self::Heralded),
            _ => Err(ProtocolError::InvalidParams(format!(
                "scatter policy `{s}` (expected `retained` or `heralded`)"
            ))),
        }
    }
}

impl fmt::Display for ScatterPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Retained => "retained",
            Self::Heralded => "heralded",
        })
    }
}

/// Cooperativity and coupled-atom count of one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeCavity {
    pub big_g: f64,
    pub pz: f64,
}

impl NodeCavity {
    pub fn new(big_g: f64, pz: f64) -> Result<Self> {
        if !(big_g.is_finite() && big_g >= 0.0) {
            return Err(ProtocolError::InvalidParams(format!(
                "G must be >= 0, got {big_g}"
            )));
        }
        if !(pz.is_finite() && pz >= 0.0) {
            return Err(ProtocolError::InvalidParams(format!(
                "Pz must be >= 0, got {pz}"
            )));
        }
        Ok(Self { big_g, pz })
    }

    pub fn from_params(params: &cavity::CavityParams, pz: f64) -> Result<Self> {
        Self::new(params.cooperativity(), pz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialStatus {
    Accepted,
    Discarded,
}

/// Per-trial record. Side arrays are indexed `[A, B]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub status: TrialStatus,
    pub sides: [SideOutcome; 2],
    pub record: Option<MeasurementRecord>,
    /// Accepted, with at least one side's click coming from a dark count.
    pub false_positive: bool,
    pub mismatched: [bool; 2],
    pub scattered: [bool; 2],
    /// Fidelity of the corrected `(A, B)` state; accepted trials only.
    pub fidelity: Option<f64>,
}

impl TrialOutcome {
    pub fn accepted(&self) -> bool {
        self.status == TrialStatus::Accepted
    }
}

/// Everything about a trial that does not depend on the random stream.
#[derive(Debug, Clone)]
pub struct TrialSetup {
    pub node_a: NodeInput,
    pub node_b: NodeInput,
    pub noise: NoiseParams,
    pub scatter: ScatterPolicy,
    channels: [CpfChannel; 2],
    merged: [KrausChannel; 2],
    mismatch: CpfChannel,
    initial: DensityMatrix,
    reference: PureState,
    table: CorrectionTable,
}

impl TrialSetup {
    pub fn new(
        node_a: NodeInput,
        node_b: NodeInput,
        cavity_a: NodeCavity,
        cavity_b: NodeCavity,
        noise: NoiseParams,
        mode: CpfMode,
        scatter: ScatterPolicy,
    ) -> Result<Self> {
        noise.validate()?;
        let channels = [
            cavity::cpf_channel(cavity_a.big_g, cavity_a.pz, mode)?,
            cavity::cpf_channel(cavity_b.big_g, cavity_b.pz, mode)?,
        ];
        let merged = [channels[0].full(), channels[1].full()];
        Ok(Self {
            node_a,
            node_b,
            noise,
            scatter,
            channels,
            merged,
            mismatch: cavity::mismatch_channel(),
            initial: build_initial_state(&node_a, &node_b),
            reference: reference_cnot(&node_a, &node_b),
            table: *correction_table(),
        })
    }

    /// Same cavities and noise, different node inputs.
    pub fn with_inputs(&self, node_a: NodeInput, node_b: NodeInput) -> Self {
        Self {
            node_a,
            node_b,
            initial: build_initial_state(&node_a, &node_b),
            reference: reference_cnot(&node_a, &node_b),
            ..self.clone()
        }
    }

    pub fn reference(&self) -> &PureState {
        &self.reference
    }

    /// One attempt of the protocol. Draws six uniforms per side, in order:
    /// mismatch, scattering, loss, dark v, dark h, photon polarization.
    pub fn run_trial<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<TrialOutcome> {
        let mut state = self.initial.clone();
        let mut sides = [SideOutcome::Discarded(noise::DiscardReason::NoClick); 2];
        let mut mismatched = [false; 2];
        let mut scattered = [false; 2];
        let nodes = [(LABEL_A1, LABEL_A), (LABEL_B1, LABEL_B)];
        for (side, &(photon, atom)) in nodes.iter().enumerate() {
            mismatched[side] = rng.gen::<f64>() < self.noise.f;
            let scatter_draw = rng.gen::<f64>();
            let (channel, merged) = if mismatched[side] {
                (&self.mismatch, self.mismatch.reflected())
            } else {
                (&self.channels[side], &self.merged[side])
            };
            if side == 0 {
                hadamard(&mut state, photon)?;
            } else {
                hadamard(&mut state, atom)?;
            }
            state = match self.scatter {
                ScatterPolicy::Retained => apply_channel(&state, merged, photon, atom)?,
                ScatterPolicy::Heralded => {
                    let (kept, survival) =
                        state.apply_kraus(channel.reflected(), &[photon, atom])?;
                    if scatter_draw >= survival {
                        scattered[side] = true;
                        apply_channel(&state, channel.scattered(), photon, atom)?.renormalized()?
                    } else {
                        kept.renormalized()?
                    }
                }
            };
            if side == 0 {
                hadamard(&mut state, photon)?;
            } else {
                hadamard(&mut state, atom)?;
                hadamard(&mut state, photon)?;
            }

            let detectors =
                noise::sample_detectors(rng, self.noise.p_l, self.noise.p_dc, scattered[side]);
            let born_draw = rng.gen::<f64>();
            let clicks = if detectors.arrived {
                let (p_h, _) = state.project_unnormalized(photon, 1)?;
                let pol = if born_draw < p_h {
                    Polarization::H
                } else {
                    Polarization::V
                };
                state = state.project(photon, pol.bit())?.1;
                detectors.clicks(pol)
            } else {
                state = state.dephase(photon)?;
                detectors.clicks(Polarization::V)
            };
            sides[side] = clicks.outcome();
        }

        let (status, record, fidelity) = match (sides[0].recorded(), sides[1].recorded()) {
            (Some(r_a), Some(r_b)) => {
                let record = MeasurementRecord::new(r_a, r_b);
                self.table.apply(&mut state, record)?;
                let reduced = state.partial_trace(&[LABEL_A, LABEL_B])?.renormalized()?;
                let f = reduced.fidelity(&self.reference)?;
                (TrialStatus::Accepted, Some(record), Some(f))
            }
            _ => (TrialStatus::Discarded, None, None),
        };
        Ok(TrialOutcome {
            status,
            sides,
            record,
            false_positive: status == TrialStatus::Accepted
                && (sides[0].is_false_positive() || sides[1].is_false_positive()),
            mismatched,
            scattered,
            fidelity,
        })
    }
}

/// Exact accepted-trial fidelity with perfect detectors and no mode mismatch,
/// by enumerating the four measurement branches of the trace-preserving
/// channels. This is what [`TrialSetup::run_trial`] converges to under
/// [`ScatterPolicy::Retained`] and noiseless detection.
pub fn enumerated_fidelity(
    node_a: &NodeInput,
    node_b: &NodeInput,
    cavity_a: NodeCavity,
    cavity_b: NodeCavity,
    mode: CpfMode,
) -> Result<f64> {
    let ch_a = cavity::cpf_channel(cavity_a.big_g, cavity_a.pz, mode)?.full();
    let ch_b = cavity::cpf_channel(cavity_b.big_g, cavity_b.pz, mode)?.full();
    let table = correction_table();
    let reference = reference_cnot(node_a, node_b);
    let after_a = step_a(&build_initial_state(node_a, node_b), &ch_a)?;
    let mut fidelity = 0.0;
    for r_a in Polarization::ALL {
        let (_, s) = after_a.project_unnormalized(LABEL_A1, r_a.bit())?;
        let s = step_b(&s, &ch_b)?;
        for r_b in Polarization::ALL {
            let (p, branch) = s.project_unnormalized(LABEL_B1, r_b.bit())?;
            if p <= crate::qstate::ZERO_PROBABILITY {
                continue;
            }
            let mut branch = branch.renormalized()?;
            table.apply(&mut branch, MeasurementRecord::new(r_a, r_b))?;
            fidelity += p * branch
                .partial_trace(&[LABEL_A, LABEL_B])?
                .fidelity(&reference)?;
        }
    }
    Ok(fidelity)
}

/// Builds a [`TrialSetup`] and runs a single trial.
#[allow(clippy::too_many_arguments)]
pub fn run_trial<R: Rng + ?Sized>(
    node_a: NodeInput,
    node_b: NodeInput,
    cavity_a: NodeCavity,
    cavity_b: NodeCavity,
    noise: NoiseParams,
    mode: CpfMode,
    scatter: ScatterPolicy,
    rng: &mut R,
) -> Result<TrialOutcome> {
    TrialSetup::new(node_a, node_b, cavity_a, cavity_b, noise, mode, scatter)?.run_trial(rng)
}

/// Amplitudes of a pure-state density matrix, fixed so that `index` is real
/// and positive. Test helper for comparing with hand-written kets.
pub fn amplitudes_up_to_phase(state: &DensityMatrix, index: usize) -> Vec<Complex64> {
    let d = state.dim();
    let pivot = state.entry(index, index).re.max(0.0).sqrt();
    (0..d)
        .map(|i| {
            if pivot == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                state.entry(i, index) / pivot
            }
        })
        .collect()
}
