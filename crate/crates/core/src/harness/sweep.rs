//! Monte Carlo sweeps over the configured grid.
//!
//! Trial `i` at every grid point draws from stream `i` of the master seed, so
//! neighbouring grid points are compared under common random numbers. Trials
//! run in parallel; all reductions are sequential in trial order.

use rayon::prelude::*;

use super::config::{InputSpec, SweepConfig};
use super::rng::{RngStream, INPUT_STREAM};
use crate::cavity;
use crate::noise::{self, NoiseParams};
use crate::protocol::{NodeCavity, NodeInput, ProtocolError, TrialSetup};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    /// `None` for a single sample.
    pub stderr: Option<f64>,
}

/// Sample mean and standard error of the mean. `None` for an empty sample.
pub fn estimate_mean(samples: &[f64]) -> Option<Estimate> {
    let n = samples.len();
    if n == 0 {
        return None;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let stderr = (n > 1).then(|| {
        let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
        (ss / (n - 1) as f64 / n as f64).sqrt()
    });
    Some(Estimate { mean, stderr })
}

/// Binomial rate and its standard error `sqrt(p(1-p)/n)`.
pub fn estimate_rate(successes: u64, trials: u64) -> Estimate {
    if trials == 0 {
        return Estimate {
            mean: 0.0,
            stderr: None,
        };
    }
    let p = successes as f64 / trials as f64;
    Estimate {
        mean: p,
        stderr: Some((p * (1.0 - p) / trials as f64).sqrt()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub g_a: f64,
    pub g_b: f64,
    pub pz_a: f64,
    pub pz_b: f64,
    pub noise: NoiseParams,
}

impl SweepConfig {
    /// Grid points in output order: G, Pz, p_l, p_dc, f (last varies fastest).
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut out = Vec::with_capacity(self.grid_size());
        for (g_a, g_b) in self.big_g.pairs() {
            for (pz_a, pz_b) in self.pz.pairs() {
                for &p_l in &self.p_l {
                    for &p_dc in &self.p_dc {
                        for &f in &self.f {
                            out.push(GridPoint {
                                g_a,
                                g_b,
                                pz_a,
                                pz_b,
                                noise: NoiseParams { p_l, p_dc, f },
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// Node input pairs used by the trials, cycled by trial index.
    pub fn input_pairs(&self) -> Vec<(NodeInput, NodeInput)> {
        match self.inputs {
            InputSpec::Balanced => vec![(NodeInput::balanced(), NodeInput::balanced())],
            InputSpec::Explicit(a, b) => vec![(a, b)],
            InputSpec::Random { count } => {
                let mut rng = RngStream::new(self.seed, INPUT_STREAM);
                (0..count)
                    .map(|_| (NodeInput::random(&mut rng), NodeInput::random(&mut rng)))
                    .collect()
            }
        }
    }
}

/// One output line. Optional fields are absent when undefined (no accepted
/// trials, or a formula outside its domain).
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub g_a: f64,
    pub g_b: f64,
    pub pz_a: f64,
    pub pz_b: f64,
    pub p_l: f64,
    pub p_dc: f64,
    pub f: f64,
    pub n: u32,
    pub trials: u64,
    pub accepted: u64,
    pub discarded: u64,
    pub false_positive: u64,
    pub acceptance_rate: f64,
    pub acceptance_stderr: Option<f64>,
    pub mean_fidelity: Option<f64>,
    pub fidelity_stderr: Option<f64>,
    pub analytic_f: f64,
    pub analytic_success: Option<f64>,
    pub analytic_total_factor: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
struct TrialSummary {
    fidelity: Option<f64>,
    false_positive: bool,
}

/// `n` consecutive gates on one stream; accepted only if every gate is, with
/// the gate fidelities multiplied.
fn run_gates(
    setup: &TrialSetup,
    n: u32,
    rng: &mut RngStream,
) -> Result<TrialSummary, ProtocolError> {
    let mut fidelity = 1.0;
    let mut false_positive = false;
    for _ in 0..n {
        let t = setup.run_trial(rng)?;
        match t.fidelity {
            Some(f) => fidelity *= f,
            None => {
                return Ok(TrialSummary {
                    fidelity: None,
                    false_positive: false,
                })
            }
        }
        false_positive |= t.false_positive;
    }
    Ok(TrialSummary {
        fidelity: Some(fidelity),
        false_positive,
    })
}

fn analytic_columns(
    config: &SweepConfig,
    point: &GridPoint,
    pairs: &[(NodeInput, NodeInput)],
) -> Result<(f64, Option<f64>, Option<f64>), ProtocolError> {
    let mut total = 0.0;
    for (na, nb) in pairs {
        let f = noise::analytic_fidelity(
            na.x(),
            na.y(),
            nb.x(),
            nb.y(),
            point.g_a,
            point.g_b,
            point.pz_a,
            point.pz_b,
        )?;
        total += f.value.powi(config.n as i32);
    }
    let analytic_f = total / pairs.len() as f64;
    let nz = point.noise;
    let success = noise::success_probability(nz.p_l, nz.p_dc, config.n).ok();
    let mismatch = noise::mismatch_factor_pair(
        nz.f,
        cavity::resonant_r(point.g_a, point.pz_a),
        cavity::resonant_r(point.g_b, point.pz_b),
        config.n,
    )
    .ok();
    let total_factor = mismatch.map(|m| noise::shrinking_factor(nz.p_l, nz.p_dc, config.n) * m);
    Ok((analytic_f, success, total_factor))
}

fn run_point(
    config: &SweepConfig,
    point: &GridPoint,
    pairs: &[(NodeInput, NodeInput)],
) -> Result<ResultRow, ProtocolError> {
    let base = TrialSetup::new(
        pairs[0].0,
        pairs[0].1,
        NodeCavity::new(point.g_a, point.pz_a)?,
        NodeCavity::new(point.g_b, point.pz_b)?,
        point.noise,
        config.mode,
        config.scatter,
    )?;
    let setups: Vec<TrialSetup> = pairs
        .iter()
        .map(|(a, b)| base.with_inputs(*a, *b))
        .collect();

    let summaries = (0..config.trials)
        .into_par_iter()
        .map(|i| {
            let setup = &setups[(i % setups.len() as u64) as usize];
            let mut rng = RngStream::new(config.seed, i);
            run_gates(setup, config.n, &mut rng)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let fidelities: Vec<f64> = summaries.iter().filter_map(|s| s.fidelity).collect();
    let accepted = fidelities.len() as u64;
    let false_positive = summaries.iter().filter(|s| s.false_positive).count() as u64;
    let rate = estimate_rate(accepted, config.trials);
    let fid = estimate_mean(&fidelities);
    let (analytic_f, analytic_success, analytic_total_factor) =
        analytic_columns(config, point, pairs)?;
    Ok(ResultRow {
        g_a: point.g_a,
        g_b: point.g_b,
        pz_a: point.pz_a,
        pz_b: point.pz_b,
        p_l: point.noise.p_l,
        p_dc: point.noise.p_dc,
        f: point.noise.f,
        n: config.n,
        trials: config.trials,
        accepted,
        discarded: config.trials - accepted,
        false_positive,
        acceptance_rate: rate.mean,
        acceptance_stderr: rate.stderr,
        mean_fidelity: fid.map(|e| e.mean),
        fidelity_stderr: fid.and_then(|e| e.stderr),
        analytic_f,
        analytic_success,
        analytic_total_factor,
        seed: config.seed,
    })
}

/// Runs every grid point. Uses `config.workers` threads if set, otherwise the
/// global rayon pool.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<ResultRow>, ProtocolError> {
    let pairs = config.input_pairs();
    let body = || {
        config
            .grid()
            .iter()
            .map(|p| run_point(config, p, &pairs))
            .collect::<Result<Vec<_>, _>>()
    };
    match config.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| ProtocolError::InvalidParams(format!("thread pool: {e}")))?
            .install(body),
        None => body(),
    }
}
