//! Closed-form gate quality estimates and the single-photon detector model.
//!
//! The aggregate factors (shrinking, success probability) are first order in
//! the dark-count probability. [`SideStatistics`] enumerates the per-side
//! click algebra exactly and is what Monte Carlo runs are compared against.

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::cavity::{self, Field};
use crate::protocol::Polarization;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("{name} must lie in [0, 1], got {value}")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("gate count N must be >= 1")]
    ZeroGates,
    #[error("amplitudes not normalized (|x|² + |y|² = {norm_sqr})")]
    NotNormalized { norm_sqr: f64 },
    #[error("mismatch factor undefined: f + (1 - f) R = 0")]
    DegenerateDenominator,
    #[error("success probability undefined: 1 - p_l - 2 p_dc = {value} < 0")]
    InvalidRegime { value: f64 },
}

fn unit_interval(name: &'static str, value: f64) -> Result<f64, NoiseError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(NoiseError::OutOfRange { name, value })
    }
}

fn gate_count(n: u32) -> Result<i32, NoiseError> {
    if n == 0 {
        Err(NoiseError::ZeroGates)
    } else {
        Ok(n as i32)
    }
}

/// Photon loss, dark count and mode-mismatch probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseParams {
    pub p_l: f64,
    pub p_dc: f64,
    pub f: f64,
}

impl NoiseParams {
    pub fn new(p_l: f64, p_dc: f64, f: f64) -> Result<Self, NoiseError> {
        Ok(Self {
            p_l: unit_interval("p_l", p_l)?,
            p_dc: unit_interval("p_dc", p_dc)?,
            f: unit_interval("f", f)?,
        })
    }

    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        Self::new(self.p_l, self.p_dc, self.f).map(|_| ())
    }
}

/// Number of nonlocal gates and the per-node cavity figures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateBudget {
    pub n: u32,
    pub g_a: f64,
    pub g_b: f64,
    pub pz_a: f64,
    pub pz_b: f64,
}

impl GateBudget {
    pub fn symmetric(n: u32, big_g: f64, pz: f64) -> Result<Self, NoiseError> {
        gate_count(n)?;
        Ok(Self {
            n,
            g_a: big_g,
            g_b: big_g,
            pz_a: pz,
            pz_b: pz,
        })
    }
}

/// Coherence loss per photon, `8G / (1 + 4 G pz)²`.
pub fn delta(big_g: f64, pz: f64) -> f64 {
    delta_in(big_g, pz)
}

pub fn delta_in<T: Field>(big_g: T, pz: T) -> T {
    let one = T::one();
    let four = one.clone() + one.clone() + one.clone() + one.clone();
    let eight = four.clone() + four.clone();
    let den = one + four * big_g.clone() * pz;
    eight * big_g / (den.clone() * den)
}

/// A formula value forced into `[0, 1]`, keeping the raw value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clamped {
    pub value: f64,
    pub raw: f64,
    pub clamped: bool,
}

impl Clamped {
    pub fn new(raw: f64) -> Self {
        let value = raw.clamp(0.0, 1.0);
        Self {
            value,
            raw,
            clamped: value != raw,
        }
    }
}

fn check_pair(x: Complex64, y: Complex64) -> Result<(), NoiseError> {
    let norm_sqr = x.norm_sqr() + y.norm_sqr();
    if (norm_sqr - 1.0).abs() > 1e-12 {
        return Err(NoiseError::NotNormalized { norm_sqr });
    }
    Ok(())
}

/// Approximate nonlocal gate fidelity `1 - 2(|ab|² Δ_B + |αβ|² Δ_A)`.
#[allow(clippy::too_many_arguments)]
pub fn analytic_fidelity(
    alpha: Complex64,
    beta: Complex64,
    a: Complex64,
    b: Complex64,
    g_a: f64,
    g_b: f64,
    pz_a: f64,
    pz_b: f64,
) -> Result<Clamped, NoiseError> {
    check_pair(alpha, beta)?;
    check_pair(a, b)?;
    let ab = (a * b).norm_sqr();
    let alpha_beta = (alpha * beta).norm_sqr();
    Ok(Clamped::new(
        1.0 - 2.0 * (ab * delta(g_b, pz_b) + alpha_beta * delta(g_a, pz_a)),
    ))
}

/// Dark-count shrinking factor for `n` gates, linear form `1 - 2 n p_l p_dc`.
pub fn shrinking_factor(p_l: f64, p_dc: f64, n: u32) -> f64 {
    1.0 - 2.0 * n as f64 * p_l * p_dc
}

/// Compounded alternative `(1 - 2 p_l p_dc)^n`, kept as a diagnostic.
pub fn shrinking_factor_compound(p_l: f64, p_dc: f64, n: u32) -> f64 {
    (1.0 - 2.0 * p_l * p_dc).powi(n as i32)
}

/// One node's share `(1-f) R / (f + (1-f) R)`.
pub fn mismatch_side_factor(f: f64, r: f64) -> Result<f64, NoiseError> {
    unit_interval("f", f)?;
    let den = f + (1.0 - f) * r;
    if den == 0.0 {
        return Err(NoiseError::DegenerateDenominator);
    }
    Ok((1.0 - f) * r / den)
}

/// `[(1-f) R / (f + (1-f) R)]^(2N)` with `R` the resonant intensity reflection.
pub fn mismatch_factor(f: f64, big_g: f64, pz: f64, n: u32) -> Result<f64, NoiseError> {
    let n = gate_count(n)?;
    let side = mismatch_side_factor(f, cavity::resonant_r(big_g, pz))?;
    Ok(side.powi(2 * n))
}

/// Two-node form for unequal reflectivities; equals [`mismatch_factor`] when
/// `r_a == r_b`.
pub fn mismatch_factor_pair(f: f64, r_a: f64, r_b: f64, n: u32) -> Result<f64, NoiseError> {
    let n = gate_count(n)?;
    Ok((mismatch_side_factor(f, r_a)? * mismatch_side_factor(f, r_b)?).powi(n))
}

/// First-order success probability `(1-p_l)^N (1-p_l-2p_dc)^N`.
pub fn success_probability(p_l: f64, p_dc: f64, n: u32) -> Result<f64, NoiseError> {
    let n = gate_count(n)?;
    unit_interval("p_l", p_l)?;
    unit_interval("p_dc", p_dc)?;
    let second = 1.0 - p_l - 2.0 * p_dc;
    if second < 0.0 {
        return Err(NoiseError::InvalidRegime { value: second });
    }
    Ok((1.0 - p_l).powi(n) * second.powi(n))
}

/// Shrinking factor times mismatch factor.
pub fn total_fidelity_factor(
    noise: &NoiseParams,
    big_g: f64,
    pz: f64,
    n: u32,
) -> Result<f64, NoiseError> {
    noise.validate()?;
    Ok(shrinking_factor(noise.p_l, noise.p_dc, n) * mismatch_factor(noise.f, big_g, pz, n)?)
}

/// Exact per-side detector statistics for a photon that reaches the detectors
/// with probability `1 - p_loss`, with independent dark counts on both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SideStatistics {
    /// Exactly one click and the photon was detected.
    pub true_accept: f64,
    /// Exactly one click, caused by a dark count after a loss.
    pub false_positive: f64,
    pub no_click: f64,
    pub double_click: f64,
}

impl SideStatistics {
    pub fn exact(p_loss: f64, p_dc: f64) -> Self {
        let arrive = 1.0 - p_loss;
        let quiet = 1.0 - p_dc;
        Self {
            // a dark count on the detector that fired is indistinguishable
            true_accept: arrive * quiet,
            false_positive: p_loss * 2.0 * p_dc * quiet,
            no_click: p_loss * quiet * quiet,
            double_click: arrive * p_dc + p_loss * p_dc * p_dc,
        }
    }

    pub fn accept(&self) -> f64 {
        self.true_accept + self.false_positive
    }

    pub fn discard(&self) -> f64 {
        self.no_click + self.double_click
    }
}

/// Exact probability that both sides accept, per gate, raised to `n`.
pub fn exact_success_probability(p_l: f64, p_dc: f64, n: u32) -> f64 {
    let side = SideStatistics::exact(p_l, p_dc).accept();
    (side * side).powi(n as i32)
}

/// Raw detector draws for one side: whether the photon arrived and which
/// detectors saw a dark count. Detector index 0 is `D_v`, 1 is `D_h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectorSample {
    pub arrived: bool,
    pub dark: [bool; 2],
}

/// Always consumes three uniforms (loss, dark v, dark h).
pub fn sample_detectors<R: Rng + ?Sized>(
    rng: &mut R,
    p_l: f64,
    p_dc: f64,
    photon_lost: bool,
) -> DetectorSample {
    let lost_in_transit = rng.gen::<f64>() < p_l;
    let dark = [rng.gen::<f64>() < p_dc, rng.gen::<f64>() < p_dc];
    DetectorSample {
        arrived: !(photon_lost || lost_in_transit),
        dark,
    }
}

impl DetectorSample {
    /// Click pattern given the polarization the photon would register with;
    /// `polarization` is ignored if the photon did not arrive.
    pub fn clicks(&self, polarization: Polarization) -> SideClicks {
        let mut clicks = self.dark;
        let true_click = self.arrived.then(|| {
            clicks[polarization.bit() as usize] = true;
            polarization
        });
        SideClicks { clicks, true_click }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SideClicks {
    pub clicks: [bool; 2],
    pub true_click: Option<Polarization>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscardReason {
    NoClick,
    DoubleClick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SideOutcome {
    Accepted {
        recorded: Polarization,
        false_positive: bool,
    },
    Discarded(DiscardReason),
}

impl SideOutcome {
    pub fn recorded(&self) -> Option<Polarization> {
        match self {
            Self::Accepted { recorded, .. } => Some(*recorded),
            Self::Discarded(_) => None,
        }
    }

    pub fn is_false_positive(&self) -> bool {
        matches!(
            self,
            Self::Accepted {
                false_positive: true,
                ..
            }
        )
    }
}

impl SideClicks {
    pub fn count(&self) -> usize {
        self.clicks.iter().filter(|c| **c).count()
    }

    pub fn outcome(&self) -> SideOutcome {
        match self.clicks {
            [false, false] => SideOutcome::Discarded(DiscardReason::NoClick),
            [true, true] => SideOutcome::Discarded(DiscardReason::DoubleClick),
            [v, _] => SideOutcome::Accepted {
                recorded: if v { Polarization::V } else { Polarization::H },
                false_positive: self.true_click.is_none(),
            },
        }
    }
}

/// Samples one side's detectors for a photon of known polarization.
pub fn detection_events<R: Rng + ?Sized>(
    rng: &mut R,
    p_l: f64,
    p_dc: f64,
    photon_lost: bool,
    polarization: Polarization,
) -> SideClicks {
    sample_detectors(rng, p_l, p_dc, photon_lost).clicks(polarization)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavity::coherence_survival;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn delta_examples() {
        assert_eq!(delta(0.0, 1.0), 0.0);
        assert!((delta(100.0, 1.0) - 800.0 / 160_801.0).abs() < 1e-18);
        assert!((delta(100.0, 1.0) - 4.9751e-3).abs() < 1e-7);
        assert!((delta(1.0, 1.0) - 0.32).abs() < 1e-15);
    }

    #[test]
    fn delta_monotone_in_pz_and_peaks_at_quarter() {
        for &g in &[0.1, 1.0, 30.0] {
            assert_eq!(delta(g, 0.0), 8.0 * g);
            let mut prev = delta(g, 0.0);
            for k in 1..50 {
                let d = delta(g, k as f64 * 0.1);
                assert!(d < prev);
                prev = d;
            }
        }
        // stationary point in G at pz = 1 by central differences
        let h = 1e-6;
        let slope = (delta(0.25 + h, 1.0) - delta(0.25 - h, 1.0)) / (2.0 * h);
        assert!(slope.abs() < 1e-8);
        assert!((delta(0.25, 1.0) - 0.5).abs() < 1e-15);
        for &g in &[0.2, 0.24, 0.26, 0.3, 1.0] {
            assert!(delta(g, 1.0) < 0.5);
        }
    }

    #[test]
    fn coherence_consistency() {
        for &g in &[0.0, 0.3, 7.0, 1e3] {
            for &pz in &[0.0, 1.0, 2.5] {
                assert_eq!(1.0 - delta(g, pz), coherence_survival(g, pz));
            }
        }
    }

    #[test]
    fn analytic_fidelity_examples() {
        let h = FRAC_1_SQRT_2;
        let f = analytic_fidelity(c(1.0), c(0.0), c(0.0), c(1.0), 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(f.value, 1.0);
        let f = analytic_fidelity(c(h), c(h), c(h), c(h), 100.0, 100.0, 1.0, 1.0).unwrap();
        assert!((f.value - (1.0 - 800.0 / 160_801.0)).abs() < 1e-15);
        assert!((f.value - 0.995_024_9).abs() < 1e-7);
        assert!(f.value >= 0.99 && !f.clamped);
        let f = analytic_fidelity(c(h), c(h), c(h), c(h), 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((f.value - 0.68).abs() < 1e-15);
        assert!(matches!(
            analytic_fidelity(c(1.0), c(1.0), c(1.0), c(0.0), 1.0, 1.0, 1.0, 1.0),
            Err(NoiseError::NotNormalized { .. })
        ));
    }

    #[test]
    fn analytic_fidelity_reports_clamping() {
        let h = FRAC_1_SQRT_2;
        // Δ(0.25, 0) = 2, so F = 1 - 2(0.25·2 + 0.25·2) = -1
        let f = analytic_fidelity(c(h), c(h), c(h), c(h), 0.25, 0.25, 0.0, 0.0).unwrap();
        assert!(f.clamped);
        assert_eq!(f.value, 0.0);
        assert!((f.raw + 1.0).abs() < 1e-15);
    }

    #[test]
    fn shrinking_examples() {
        assert_eq!(shrinking_factor(0.0, 0.3, 7), 1.0);
        assert!((shrinking_factor(0.1, 0.01, 1) - 0.998).abs() < 1e-15);
        assert!((shrinking_factor(0.1, 0.01, 5) - 0.99).abs() < 1e-15);
        assert!((shrinking_factor_compound(0.1, 0.01, 5) - 0.998f64.powi(5)).abs() < 1e-15);
    }

    #[test]
    fn mismatch_examples() {
        assert_eq!(mismatch_factor(0.0, 100.0, 1.0, 3).unwrap(), 1.0);
        let r = (399.0f64 / 401.0).powi(2);
        let side = 0.95 * r / (0.05 + 0.95 * r);
        let m1 = mismatch_factor(0.05, 100.0, 1.0, 1).unwrap();
        assert!((m1 - side * side).abs() < 1e-15);
        assert!((m1 - 0.9016).abs() < 5e-4);
        let m2 = mismatch_factor(0.05, 100.0, 1.0, 2).unwrap();
        assert!((m2 - m1 * m1).abs() < 1e-15);
        assert_eq!(
            mismatch_factor(0.0, 0.25, 1.0, 1),
            Err(NoiseError::DegenerateDenominator)
        );
        assert_eq!(
            mismatch_factor(0.05, 100.0, 1.0, 0),
            Err(NoiseError::ZeroGates)
        );
        let pair = mismatch_factor_pair(0.05, r, r, 1).unwrap();
        assert!((pair - m1).abs() < 1e-15);
    }

    #[test]
    fn success_examples() {
        assert_eq!(success_probability(0.0, 0.0, 4).unwrap(), 1.0);
        assert!((success_probability(0.1, 0.01, 1).unwrap() - 0.792).abs() < 1e-15);
        assert!((success_probability(0.1, 0.01, 2).unwrap() - 0.627_264).abs() < 1e-15);
        assert!(matches!(
            success_probability(0.5, 0.3, 1),
            Err(NoiseError::InvalidRegime { .. })
        ));
    }

    #[test]
    fn total_factor_examples() {
        assert_eq!(
            total_fidelity_factor(&NoiseParams::noiseless(), 100.0, 1.0, 1).unwrap(),
            1.0
        );
        let noise = NoiseParams::new(0.1, 0.01, 0.05).unwrap();
        let t1 = total_fidelity_factor(&noise, 100.0, 1.0, 1).unwrap();
        let m1 = mismatch_factor(0.05, 100.0, 1.0, 1).unwrap();
        assert!((t1 - 0.998 * m1).abs() < 1e-15);
        assert!((t1 - 0.8998).abs() < 5e-4);
        let t3 = total_fidelity_factor(&noise, 100.0, 1.0, 3).unwrap();
        assert!((t3 - 0.994 * m1.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn noise_params_validation() {
        assert!(NoiseParams::new(1.1, 0.0, 0.0).is_err());
        assert!(NoiseParams::new(0.0, -0.1, 0.0).is_err());
        assert!(NoiseParams::new(0.0, 0.0, 1.0).is_ok());
    }

    #[test]
    fn exact_statistics_sum_to_one_and_match_first_order() {
        for &(pl, pdc) in &[(0.0, 0.0), (0.1, 0.01), (0.3, 0.2), (1.0, 0.5)] {
            let s = SideStatistics::exact(pl, pdc);
            assert!((s.accept() + s.discard() - 1.0).abs() < 1e-15);
        }
        let s = SideStatistics::exact(0.1, 0.01);
        // exact = 2 p_l p_dc (1 - p_dc)
        assert!((s.false_positive - 2.0 * 0.1 * 0.01 * 0.99).abs() < 1e-17);
        let exact = exact_success_probability(0.1, 0.01, 1);
        let first = success_probability(0.1, 0.01, 1).unwrap();
        // agree to first order in (p_l, p_dc)
        assert!((exact - first).abs() < 0.01);
    }

    #[test]
    fn photon_present_without_dark_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for pol in [Polarization::V, Polarization::H] {
            let clicks = detection_events(&mut rng, 0.0, 0.0, false, pol);
            assert_eq!(clicks.count(), 1);
            assert_eq!(clicks.true_click, Some(pol));
            assert_eq!(
                clicks.outcome(),
                SideOutcome::Accepted {
                    recorded: pol,
                    false_positive: false
                }
            );
        }
    }

    #[test]
    fn lost_photon_without_dark_counts_is_discarded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let clicks = detection_events(&mut rng, 0.0, 0.0, true, Polarization::H);
        assert_eq!(clicks.count(), 0);
        assert_eq!(
            clicks.outcome(),
            SideOutcome::Discarded(DiscardReason::NoClick)
        );
        let clicks = detection_events(&mut rng, 1.0, 0.0, false, Polarization::H);
        assert_eq!(
            clicks.outcome(),
            SideOutcome::Discarded(DiscardReason::NoClick)
        );
    }

    #[test]
    fn classification_table() {
        let s = |clicks, true_click| SideClicks { clicks, true_click };
        assert_eq!(
            s([true, true], Some(Polarization::V)).outcome(),
            SideOutcome::Discarded(DiscardReason::DoubleClick)
        );
        assert_eq!(
            s([false, true], None).outcome(),
            SideOutcome::Accepted {
                recorded: Polarization::H,
                false_positive: true
            }
        );
    }

    #[test]
    fn false_positive_rate_matches_bernoulli_algebra() {
        let (pl, pdc) = (0.1, 0.01);
        let n = 1_000_000u32;
        let mut rng = ChaCha8Rng::seed_from_u64(20_240_607);
        let mut fp = 0u32;
        for _ in 0..n {
            if detection_events(&mut rng, pl, pdc, false, Polarization::V)
                .outcome()
                .is_false_positive()
            {
                fp += 1;
            }
        }
        let p = SideStatistics::exact(pl, pdc).false_positive;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        let est = fp as f64 / n as f64;
        assert!((est - p).abs() < 3.0 * sigma, "{est} vs {p} ± {sigma}");
        let first_order = 2.0 * pl * pdc;
        assert!((est - first_order).abs() < 3.0 * sigma + (p - first_order).abs());
    }

    proptest! {
        #[test]
        fn analytic_fidelity_symmetric_under_node_swap(
            t1 in 0.0f64..std::f64::consts::FRAC_PI_2, t2 in 0.0f64..std::f64::consts::FRAC_PI_2, ph in 0.0f64..std::f64::consts::TAU,
            ga in 0.0f64..500.0, gb in 0.0f64..500.0, pa in 0.0f64..3.0, pb in 0.0f64..3.0
        ) {
            let alpha = c(t1.cos());
            let beta = Complex64::from_polar(t1.sin(), ph);
            let a = c(t2.cos());
            let b = Complex64::from_polar(t2.sin(), -ph);
            let f1 = analytic_fidelity(alpha, beta, a, b, ga, gb, pa, pb).unwrap();
            let f2 = analytic_fidelity(a, b, alpha, beta, gb, ga, pb, pa).unwrap();
            prop_assert!((f1.raw - f2.raw).abs() < 1e-14);
        }

        #[test]
        fn exact_side_statistics_are_a_distribution(pl in 0.0f64..=1.0, pdc in 0.0f64..=1.0) {
            let s = SideStatistics::exact(pl, pdc);
            prop_assert!((s.accept() + s.discard() - 1.0).abs() < 1e-14);
            prop_assert!(s.false_positive >= 0.0 && s.true_accept >= 0.0);
        }
    }
}
