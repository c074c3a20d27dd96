//! Input–output response of a single network node: a Λ atom in a one-sided
//! cavity, driven on resonance (detuning fixed at zero).
//!
//! Frequencies are offsets from the cavity/pulse carrier and share the units of
//! `g`, `gamma` and `gamma_s`. `pz` is the value of the projector onto
//! `{|0>, |e>}` before the pulse arrives, i.e. the number of coupled atoms.
//!
//! The scalar closed forms are generic over [`Field`] so the algebraic
//! identities between them can be checked in exact rational arithmetic.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Neg;
use std::str::FromStr;

use num_complex::Complex64;
use num_traits::Num;
use thiserror::Error;

use crate::noise;
use crate::qstate::{CMatrix, CVector, KrausChannel, QStateError, C64};
use crate::quad;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CavityError {
    #[error("invalid cavity parameters: {0}")]
    InvalidParams(String),
    #[error("invalid pulse spectrum: {0}")]
    InvalidSpectrum(String),
    #[error("quadrature did not reach the requested accuracy (error estimate {error:e})")]
    QuadratureFailure { error: f64 },
    #[error("invalid CPF mode `{0}` (expected `ideal` or `imperfect`)")]
    InvalidMode(String),
    #[error(transparent)]
    State(#[from] QStateError),
}

/// Scalar field the closed-form expressions are evaluated in.
pub trait Field: Clone + Num + Neg<Output = Self> {}
impl<T: Clone + Num + Neg<Output = T>> Field for T {}

fn small<T: Field>(n: u8) -> T {
    (0..n).fold(T::zero(), |acc, _| acc + T::one())
}

/// Coupling, cavity decay and spontaneous decay rates of one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityParams {
    g: f64,
    gamma: f64,
    gamma_s: f64,
}

impl CavityParams {
    pub fn new(g: f64, gamma: f64, gamma_s: f64) -> Result<Self, CavityError> {
        if !(g.is_finite() && g >= 0.0) {
            return Err(CavityError::InvalidParams(format!(
                "g must be >= 0, got {g}"
            )));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(CavityError::InvalidParams(format!(
                "gamma must be > 0, got {gamma}"
            )));
        }
        if !(gamma_s.is_finite() && gamma_s > 0.0) {
            return Err(CavityError::InvalidParams(format!(
                "gamma_s must be > 0, got {gamma_s}"
            )));
        }
        Ok(Self { g, gamma, gamma_s })
    }

    /// Parameters with unit decay rates and the coupling chosen to give `G`.
    pub fn from_cooperativity(big_g: f64) -> Result<Self, CavityError> {
        if !(big_g.is_finite() && big_g >= 0.0) {
            return Err(CavityError::InvalidParams(format!(
                "G must be >= 0, got {big_g}"
            )));
        }
        Self::new(big_g.sqrt(), 1.0, 1.0)
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn gamma_s(&self) -> f64 {
        self.gamma_s
    }

    /// `G = g² / (gamma gamma_s)`.
    pub fn cooperativity(&self) -> f64 {
        self.g * self.g / (self.gamma * self.gamma_s)
    }
}

/// Frequency-resolved reflection of an h-polarized photon off the node.
///
/// `r(w) = [w - i gamma/2 - S(w)] / [w + i gamma/2 - S(w)]` with the atomic
/// self-energy `S(w) = i gamma_s g² pz / ((w + i gamma_s)(w + i gamma_s/2))`.
///
/// At `w = 0` this reduces exactly to [`ideal_reflection`]. Away from resonance
/// the expression is not passive: `|r| > 1` once `|w| > gamma_s / sqrt 2` and
/// `pz > 0`. See [`reflection_coefficient_textbook`] for the passive
/// single-excitation form with the same resonant value.
pub fn reflection_coefficient(omega: f64, pz: f64, params: &CavityParams) -> Complex64 {
    let i = Complex64::i();
    let w = Complex64::new(omega, 0.0);
    let gs = params.gamma_s;
    let half_gamma = 0.5 * params.gamma;
    let self_energy = i * gs * params.g * params.g * pz / ((w + i * gs) * (w + i * (0.5 * gs)));
    (w - i * half_gamma - self_energy) / (w + i * half_gamma - self_energy)
}

/// Passive single-excitation reflection,
/// `S(w) = g² pz / (w + i gamma_s/2)`. Agrees with
/// [`reflection_coefficient`] at `w = 0`.
pub fn reflection_coefficient_textbook(omega: f64, pz: f64, params: &CavityParams) -> Complex64 {
    let i = Complex64::i();
    let w = Complex64::new(omega, 0.0);
    let self_energy = params.g * params.g * pz / (w + i * (0.5 * params.gamma_s));
    let half_gamma = 0.5 * params.gamma;
    (w - i * half_gamma - self_energy) / (w + i * half_gamma - self_energy)
}

/// Narrowband reflection amplitude `(4 G pz - 1) / (4 G pz + 1)`.
pub fn ideal_reflection(pz: f64, big_g: f64) -> f64 {
    ideal_reflection_in(pz, big_g)
}

pub fn ideal_reflection_in<T: Field>(pz: T, big_g: T) -> T {
    let x = small::<T>(4) * big_g * pz;
    (x.clone() - T::one()) / (x + T::one())
}

/// Narrowband factor multiplying the atomic ground-state coherence after one
/// photon, `1 - 8G / (1 + 4 G pz)²`.
pub fn coherence_survival(big_g: f64, pz: f64) -> f64 {
    coherence_survival_in(big_g, pz)
}

pub fn coherence_survival_in<T: Field>(big_g: T, pz: T) -> T {
    T::one() - noise::delta_in(big_g, pz)
}

/// Resonant intensity reflection `((1 - 4 G pz) / (1 + 4 G pz))²`.
pub fn resonant_r(big_g: f64, pz: f64) -> f64 {
    resonant_r_in(big_g, pz)
}

pub fn resonant_r_in<T: Field>(big_g: T, pz: T) -> T {
    let r = ideal_reflection_in(pz, big_g);
    r.clone() * r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumShape {
    /// Gaussian intensity profile with standard deviation `bandwidth`.
    Gaussian,
    /// Uniform intensity on `center ± bandwidth`.
    FlatTop,
}

/// Normalized intensity spectrum `|f(w)|²` of the input pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSpectrum {
    shape: SpectrumShape,
    center: f64,
    bandwidth: f64,
}

const GAUSSIAN_CUTOFF: f64 = 8.0;
const QUAD_REL_TOL: f64 = 1e-10;
const QUAD_MAX_INTERVALS: usize = 2000;

impl PulseSpectrum {
    pub fn new(shape: SpectrumShape, center: f64, bandwidth: f64) -> Result<Self, CavityError> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(CavityError::InvalidSpectrum(format!(
                "bandwidth must be > 0, got {bandwidth}"
            )));
        }
        if !center.is_finite() {
            return Err(CavityError::InvalidSpectrum("center must be finite".into()));
        }
        Ok(Self {
            shape,
            center,
            bandwidth,
        })
    }

    pub fn gaussian(center: f64, bandwidth: f64) -> Result<Self, CavityError> {
        Self::new(SpectrumShape::Gaussian, center, bandwidth)
    }

    pub fn flat_top(center: f64, bandwidth: f64) -> Result<Self, CavityError> {
        Self::new(SpectrumShape::FlatTop, center, bandwidth)
    }

    pub fn shape(&self) -> SpectrumShape {
        self.shape
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn intensity(&self, omega: f64) -> f64 {
        let x = omega - self.center;
        match self.shape {
            SpectrumShape::Gaussian => {
                let s = self.bandwidth;
                (-0.5 * (x / s).powi(2)).exp() / (s * (2.0 * PI).sqrt())
            }
            SpectrumShape::FlatTop => {
                if x.abs() <= self.bandwidth {
                    0.5 / self.bandwidth
                } else {
                    0.0
                }
            }
        }
    }

    /// Integration window outside which the intensity is negligible (or zero).
    pub fn support(&self) -> (f64, f64) {
        let half = match self.shape {
            SpectrumShape::Gaussian => GAUSSIAN_CUTOFF * self.bandwidth,
            SpectrumShape::FlatTop => self.bandwidth,
        };
        (self.center - half, self.center + half)
    }

    /// `∫ |f(w)|² dw` under the module's quadrature.
    pub fn norm(&self) -> Result<f64, CavityError> {
        let (a, b) = self.support();
        let r = quad::integrate(
            |w| Complex64::new(self.intensity(w), 0.0),
            a,
            b,
            1e-14,
            QUAD_REL_TOL,
            QUAD_MAX_INTERVALS,
        )
        .map_err(|r| CavityError::QuadratureFailure { error: r.error })?;
        Ok(r.value.re)
    }
}

/// Spectrum-weighted reflection `∫ |f(w)|² r(w) dw`.
pub fn pulse_averaged_reflection(
    spectrum: &PulseSpectrum,
    pz: f64,
    params: &CavityParams,
) -> Result<Complex64, CavityError> {
    let (a, b) = spectrum.support();
    let r = quad::integrate(
        |w| reflection_coefficient(w, pz, params) * spectrum.intensity(w),
        a,
        b,
        1e-15,
        QUAD_REL_TOL,
        QUAD_MAX_INTERVALS,
    )
    .map_err(|r| CavityError::QuadratureFailure { error: r.error })?;
    Ok(r.value)
}

/// How the atom–photon phase gate is modelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpfMode {
    /// Exact `exp(-i pi |1><1| ⊗ |h><h|)`.
    Ideal,
    /// Narrowband reflection amplitudes: `r1` on the coupled `|0 h>` branch,
    /// `-1` on `|1 h>`, `+1` for v photons.
    Imperfect,
}

impl FromStr for CpfMode {
    type Err = CavityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ideal" => Ok(Self::Ideal),
            "imperfect" | "narrowband-imperfect" | "narrowband" => Ok(Self::Imperfect),
            _ => Err(CavityError::InvalidMode(s.to_string())),
        }
    }
}

impl fmt::Display for CpfMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ideal => "ideal",
            Self::Imperfect => "imperfect",
        })
    }
}

/// Atom–photon phase gate as a Kraus map split into the branch that leaves the
/// photon in the reflected mode and the branch where it is scattered away by
/// the atom.
///
/// Operators act on `(photon, atom)` with the photon as the most significant
/// local bit, i.e. on the basis `{|0v>, |1v>, |0h>, |1h>}` written
/// `|atom, photon>`; pass targets as `[photon_label, atom_label]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CpfChannel {
    mode: CpfMode,
    reflection: f64,
    reflected: KrausChannel,
    scattered: KrausChannel,
}

impl CpfChannel {
    pub fn mode(&self) -> CpfMode {
        self.mode
    }

    /// Coupled-branch reflection amplitude `r1` (1 in ideal mode).
    pub fn reflection(&self) -> f64 {
        self.reflection
    }

    /// `K0`, the photon stays in the reflected mode.
    pub fn reflected(&self) -> &KrausChannel {
        &self.reflected
    }

    /// `K_loss = sqrt(1 - r1²) |0h><0h|`, the photon leaves the mode.
    pub fn scattered(&self) -> &KrausChannel {
        &self.scattered
    }

    /// Trace-preserving union of both branches.
    pub fn full(&self) -> KrausChannel {
        self.reflected
            .merged(&self.scattered)
            .expect("branches share arity and are complete together")
    }
}

/// Builds the CPF channel for cooperativity `big_g` and coupled-atom count `pz`.
pub fn cpf_channel(big_g: f64, pz: f64, mode: CpfMode) -> Result<CpfChannel, CavityError> {
    if !(big_g.is_finite() && big_g >= 0.0 && pz.is_finite() && pz >= 0.0) {
        return Err(CavityError::InvalidParams(format!(
            "G and Pz must be >= 0, got G={big_g}, Pz={pz}"
        )));
    }
    let c = |x: f64| C64::new(x, 0.0);
    let diag = |d: [f64; 4]| CMatrix::from_diagonal(&CVector::from_iterator(4, d.map(c)));
    let (reflection, k0, k_loss) = match mode {
        CpfMode::Ideal => (1.0, diag([1.0, 1.0, 1.0, -1.0]), None),
        CpfMode::Imperfect => {
            let r1 = ideal_reflection(pz, big_g);
            let leak = (1.0 - r1 * r1).max(0.0).sqrt();
            (
                r1,
                diag([1.0, 1.0, r1, -1.0]),
                (leak > 0.0).then(|| diag([0.0, 0.0, leak, 0.0])),
            )
        }
    };
    Ok(CpfChannel {
        mode,
        reflection,
        reflected: KrausChannel::new(2, vec![k0])?,
        scattered: KrausChannel::new(2, k_loss.into_iter().collect())?,
    })
}

/// Photon reflects off the input mirror without entering the cavity.
pub fn mismatch_channel() -> CpfChannel {
    CpfChannel {
        mode: CpfMode::Ideal,
        reflection: 1.0,
        reflected: KrausChannel::identity(2),
        scattered: KrausChannel::new(2, vec![]).expect("empty channel is valid"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{DensityMatrix, Register};
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn params(g: f64, gamma: f64, gamma_s: f64) -> CavityParams {
        CavityParams::new(g, gamma, gamma_s).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(CavityParams::new(-1.0, 1.0, 1.0).is_err());
        assert!(CavityParams::new(1.0, 0.0, 1.0).is_err());
        assert!(CavityParams::new(1.0, 1.0, -2.0).is_err());
        let p = params(20.0, 2.0, 2.0);
        assert!((p.cooperativity() - 100.0).abs() < 1e-12);
        let p = CavityParams::from_cooperativity(100.0).unwrap();
        assert!((p.cooperativity() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn uncoupled_reflection_is_all_pass() {
        let p = params(3.0, 1.7, 0.4);
        for &w in &[-10.0, -0.3, 0.0, 0.25, 4.0] {
            let r = reflection_coefficient(w, 0.0, &p);
            let expect = Complex64::new(w, -0.85) / Complex64::new(w, 0.85);
            assert!((r - expect).norm() < 1e-15);
            assert!((r.norm() - 1.0).abs() < 1e-15);
        }
        let r0 = reflection_coefficient(0.0, 0.0, &p);
        assert_eq!(r0, Complex64::new(-1.0, 0.0));
    }

    #[test]
    fn resonance_reduces_to_cooperativity_form() {
        let mut rng = 0x2545_f491_4f6c_dd1du64;
        let mut next = || {
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            (rng >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..10 {
            let p = params(0.1 + 20.0 * next(), 0.1 + 5.0 * next(), 0.1 + 5.0 * next());
            let big_g = p.cooperativity();
            let r = reflection_coefficient(0.0, 1.0, &p);
            let expect = (4.0 * big_g - 1.0) / (4.0 * big_g + 1.0);
            assert!((r.re - expect).abs() < 1e-12, "{r} vs {expect}");
            assert!(r.im.abs() < 1e-12);
        }
    }

    #[test]
    fn far_detuned_photon_is_reflected_unchanged() {
        let p = params(5.0, 1.0, 1.0);
        let r = reflection_coefficient(1e9, 1.0, &p);
        assert!((r - Complex64::new(1.0, 0.0)).norm() < 1e-8);
    }

    #[test]
    fn adiabatic_form_is_not_passive_off_resonance() {
        let p = params(1.0, 1.0, 1.0);
        assert!(reflection_coefficient(0.5, 1.0, &p).norm() <= 1.0 + 1e-12);
        assert!(reflection_coefficient(2.0, 1.0, &p).norm() > 1.04);
    }

    #[test]
    fn ideal_reflection_examples() {
        assert_eq!(ideal_reflection(0.0, 100.0), -1.0);
        assert!((ideal_reflection(1.0, 100.0) - 399.0 / 401.0).abs() < 1e-15);
        assert!((ideal_reflection(1.0, 100.0) - 0.995_012_5).abs() < 1e-7);
        assert!((ideal_reflection(2.0, 0.25) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn coherence_survival_examples() {
        assert_eq!(coherence_survival(0.0, 1.0), 1.0);
        let v = coherence_survival(100.0, 1.0);
        assert!((v - (1.0 - 800.0 / 160_801.0)).abs() < 1e-15);
        assert!((v - 0.995_024_9).abs() < 1e-7);
        for &g in &[0.1, 1.0, 10.0, 100.0, 1000.0] {
            let gap = ideal_reflection(1.0, g) - coherence_survival(g, 1.0);
            let expect = -2.0 / (1.0 + 4.0 * g).powi(2);
            // f64 evaluation; the exact identity is checked in rationals elsewhere
            assert!((gap - expect).abs() < 4e-16, "G={g}: {gap} vs {expect}");
        }
    }

    #[test]
    fn resonant_r_examples() {
        assert_eq!(resonant_r(50.0, 0.0), 1.0);
        assert!((resonant_r(100.0, 1.0) - (399.0f64 / 401.0).powi(2)).abs() < 1e-15);
        assert!((resonant_r(100.0, 1.0) - 159_201.0 / 160_801.0).abs() < 1e-15);
        assert_eq!(resonant_r(0.25, 1.0), 0.0);
    }

    #[test]
    fn both_models_approach_one_minus_half_inverse_g() {
        for &g in &[100.0, 1000.0, 10_000.0] {
            let lead = 1.0 - 1.0 / (2.0 * g);
            assert!((ideal_reflection(1.0, g) - lead).abs() < 1.0 / (g * g));
            assert!((coherence_survival(g, 1.0) - lead).abs() < 1.0 / (g * g));
        }
    }

    #[test]
    fn spectrum_normalization() {
        for s in [
            PulseSpectrum::gaussian(0.0, 0.1).unwrap(),
            PulseSpectrum::gaussian(0.7, 1e-6).unwrap(),
            PulseSpectrum::flat_top(-0.2, 0.05).unwrap(),
        ] {
            assert!((s.norm().unwrap() - 1.0).abs() < 1e-9);
        }
        assert!(PulseSpectrum::gaussian(0.0, 0.0).is_err());
    }

    #[test]
    fn narrowband_pulse_matches_resonant_value() {
        let p = params(10.0, 1.0, 1.0);
        let s = PulseSpectrum::gaussian(0.0, 1e-6).unwrap();
        let avg = pulse_averaged_reflection(&s, 1.0, &p).unwrap();
        let r0 = reflection_coefficient(0.0, 1.0, &p);
        assert!((avg - r0).norm() < 1e-6);
    }

    #[test]
    fn finite_bandwidth_dephases_uncoupled_reflection() {
        let p = params(10.0, 1.0, 1.0);
        let s = PulseSpectrum::gaussian(0.0, 0.1).unwrap();
        let avg = pulse_averaged_reflection(&s, 0.0, &p).unwrap();
        // Re = E[(w² - 1/4)/(w² + 1/4)]; frozen from an independent
        // scipy quad / trapezoid (±10σ, 2·10⁵ panels) evaluation.
        assert!(avg.norm() < 1.0);
        assert!(avg.im.abs() < 1e-12);
        assert!((avg.re - (-0.928_081_047_153_157_9)).abs() < 1e-8, "{avg}");
    }

    #[test]
    fn bandwidth_error_scales_quadratically() {
        let p = params(10.0, 1.0, 1.0);
        for pz in [0.0, 1.0] {
            let r0 = reflection_coefficient(0.0, pz, &p);
            let dev = |sigma: f64| {
                let s = PulseSpectrum::gaussian(0.0, sigma).unwrap();
                (pulse_averaged_reflection(&s, pz, &p).unwrap() - r0).norm()
            };
            let ratio = dev(0.1) / dev(0.05);
            assert!((ratio / 4.0 - 1.0).abs() < 0.2, "pz={pz}: ratio {ratio}");
        }
    }

    #[test]
    fn ideal_cpf_channel() {
        let ch = cpf_channel(100.0, 1.0, CpfMode::Ideal).unwrap();
        let k = &ch.reflected().operators()[0];
        let expect = [1.0, 1.0, 1.0, -1.0];
        for (i, e) in expect.iter().enumerate() {
            assert_eq!(k[(i, i)], C64::new(*e, 0.0));
        }
        assert!(ch.scattered().operators().is_empty());
        assert!(ch.full().completeness_defect() < 1e-12);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("ideal".parse::<CpfMode>().unwrap(), CpfMode::Ideal);
        assert_eq!("imperfect".parse::<CpfMode>().unwrap(), CpfMode::Imperfect);
        assert!(matches!(
            "perfect".parse::<CpfMode>(),
            Err(CavityError::InvalidMode(_))
        ));
    }

    fn atom_photon() -> Register {
        Register::new(&["atom", "photon"]).unwrap()
    }

    #[test]
    fn imperfect_cpf_multiplies_coherence_by_minus_r1() {
        let h = FRAC_1_SQRT_2;
        let reg = atom_photon();
        let mut amps = vec![C64::new(0.0, 0.0); 4];
        amps[reg.basis_index(&[0, 1]).unwrap()] = C64::new(h, 0.0);
        amps[reg.basis_index(&[1, 1]).unwrap()] = C64::new(h, 0.0);
        let rho = DensityMatrix::pure_state(reg, &amps).unwrap();
        let ch = cpf_channel(100.0, 1.0, CpfMode::Imperfect).unwrap();
        assert!(ch.full().completeness_defect() < 1e-12);

        let (out, survival) = rho.apply_kraus(&ch.full(), &["photon", "atom"]).unwrap();
        assert!((survival - 1.0).abs() < 1e-12);
        let atom = out.partial_trace(&["atom"]).unwrap();
        let r1 = 399.0 / 401.0;
        assert!((atom.entry(0, 1).re - (-r1 * 0.5)).abs() < 1e-15);
        assert!((atom.entry(0, 0).re - 0.5).abs() < 1e-15);

        // scattered branch dropped: survival r1² on the coupled half
        let (_, kept) = rho
            .apply_kraus(ch.reflected(), &["photon", "atom"])
            .unwrap();
        assert!((kept - (0.5 * r1 * r1 + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn ideal_cpf_on_basis_states() {
        let reg = atom_photon();
        let ch = cpf_channel(100.0, 1.0, CpfMode::Ideal).unwrap();
        let k = &ch.reflected().operators()[0];
        let h = FRAC_1_SQRT_2;
        // (|0 v> + |1 h>)/sqrt2: 1h picks up -1, 0v untouched
        let mut amps = vec![C64::new(0.0, 0.0); 4];
        amps[reg.basis_index(&[0, 0]).unwrap()] = C64::new(h, 0.0);
        amps[reg.basis_index(&[1, 1]).unwrap()] = C64::new(h, 0.0);
        let rho = DensityMatrix::pure_state(reg.clone(), &amps).unwrap();
        let out = rho.apply_unitary(k, &["photon", "atom"]).unwrap();
        let i0v = reg.basis_index(&[0, 0]).unwrap();
        let i1h = reg.basis_index(&[1, 1]).unwrap();
        assert!((out.entry(i1h, i0v).re + 0.5).abs() < 1e-15);
        assert!((out.entry(i0v, i0v).re - 0.5).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn resonance_limit_is_exact(
            g in 0.0f64..50.0, gamma in 0.05f64..20.0, gamma_s in 0.05f64..20.0, pz in 0.0f64..4.0
        ) {
            let p = params(g, gamma, gamma_s);
            let r = reflection_coefficient(0.0, pz, &p);
            let expect = ideal_reflection(pz, p.cooperativity());
            prop_assert!((r.re - expect).abs() < 1e-12);
            prop_assert!(r.im.abs() < 1e-12);
        }

        #[test]
        fn textbook_form_is_passive(
            w in -100.0f64..100.0, g in 0.0f64..50.0, gamma in 0.05f64..20.0,
            gamma_s in 0.05f64..20.0, pz in 0.0f64..4.0
        ) {
            let p = params(g, gamma, gamma_s);
            prop_assert!(reflection_coefficient_textbook(w, pz, &p).norm() <= 1.0 + 1e-12);
        }

        #[test]
        fn adiabatic_form_is_passive_near_resonance(
            x in -1.0f64..1.0, g in 0.0f64..50.0, gamma in 0.05f64..20.0,
            gamma_s in 0.05f64..20.0, pz in 0.0f64..4.0
        ) {
            let p = params(g, gamma, gamma_s);
            let w = x * gamma_s * FRAC_1_SQRT_2;
            prop_assert!(reflection_coefficient(w, pz, &p).norm() <= 1.0 + 1e-12);
        }

        #[test]
        fn resonant_r_is_square_of_amplitude(g in 0.0f64..1e4, pz in 0.0f64..4.0) {
            let r = ideal_reflection(pz, g);
            prop_assert_eq!(resonant_r(g, pz), r * r);
        }
    }
}
