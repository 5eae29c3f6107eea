//! Deterministic parallel ensemble averaging.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::trajectory::{clock_coherence, propagate, sensing_coherence, Scenario, Trajectory};
use crate::error::{Error, Result};
use crate::noise::NoiseChannelSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_realizations: usize,
    pub base_seed: u64,
    /// Worker threads; 0 uses all available cores.
    #[serde(default)]
    pub workers: usize,
}

impl EnsembleConfig {
    pub fn new(n_realizations: usize, base_seed: u64, workers: usize) -> Self {
        EnsembleConfig { n_realizations, base_seed, workers }
    }
}

/// Per-sample ensemble statistics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    pub mean_p_plus: Vec<f64>,
    pub stderr_p_plus: Vec<f64>,
    pub mean_p_zero: Vec<f64>,
    pub mean_p_minus: Vec<f64>,
    /// ⟨a b*⟩ for the |+1⟩, |−1⟩ amplitudes a, b.
    pub coherence_re: Vec<f64>,
    pub coherence_im: Vec<f64>,
    /// |⟨⟨+|ψ⟩⟨ψ|0⟩⟩|
    pub clock_coherence: Vec<f64>,
    /// ⟨(|a|² + |b|²)/2⟩ + |⟨a b*⟩|: P₊ after removing a common phase.
    pub envelope: Vec<f64>,
    pub n_realizations: usize,
    pub base_seed: u64,
}

impl EnsembleResult {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Run `cfg.n_realizations` trajectories; trajectory i draws its noise from
/// (base_seed, i) only, so the output does not depend on `workers`.
pub fn collect_trajectories(sc: &Scenario, cfg: &EnsembleConfig) -> Result<Vec<Trajectory>> {
    if cfg.n_realizations == 0 {
        return Err(Error::InvalidParameter("need at least one realization".into()));
    }
    sc.validate()?;
    let job = |i: usize| -> Result<Trajectory> {
        let mut noise = NoiseChannelSet::new(&sc.noise, cfg.base_seed, i as u64)?;
        propagate(sc, &mut noise, i as u64)
    };
    if cfg.workers == 1 {
        return (0..cfg.n_realizations).map(job).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| (0..cfg.n_realizations).into_par_iter().map(job).collect())
}

/// Sequential reduction in trajectory order.
pub fn average(trajectories: &[Trajectory], base_seed: u64) -> Result<EnsembleResult> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::InvalidParameter("cannot average an empty ensemble".into()))?;
    let m = first.times.len();
    if trajectories.iter().any(|t| t.times != first.times) {
        return Err(Error::InvalidParameter("trajectories have different sample times".into()));
    }
    let n = trajectories.len() as f64;
    let mut sum_p = vec![[0.0f64; 3]; m];
    let mut coh = vec![Complex64::new(0.0, 0.0); m];
    let mut clock = vec![Complex64::new(0.0, 0.0); m];
    for tr in trajectories {
        for (k, s) in tr.states.iter().enumerate() {
            let p = s.dressed_populations();
            for j in 0..3 {
                sum_p[k][j] += p[j];
            }
            coh[k] += sensing_coherence(s);
            clock[k] += clock_coherence(s);
        }
    }
    let mut out = EnsembleResult {
        times: first.times.clone(),
        mean_p_plus: Vec::with_capacity(m),
        stderr_p_plus: Vec::with_capacity(m),
        mean_p_zero: Vec::with_capacity(m),
        mean_p_minus: Vec::with_capacity(m),
        coherence_re: Vec::with_capacity(m),
        coherence_im: Vec::with_capacity(m),
        clock_coherence: Vec::with_capacity(m),
        envelope: Vec::with_capacity(m),
        n_realizations: trajectories.len(),
        base_seed,
    };
    for k in 0..m {
        let mean = sum_p[k][0] / n;
        let var = if trajectories.len() > 1 {
            let ss: f64 = trajectories.iter().map(|t| (t.populations(k)[0] - mean).powi(2)).sum();
            ss / (n - 1.0)
        } else {
            0.0
        };
        // Unitary evolution keeps populations in [0, 1] up to rounding.
        out.mean_p_plus.push(mean.clamp(0.0, 1.0));
        out.stderr_p_plus.push((var / n).sqrt());
        out.mean_p_zero.push((sum_p[k][1] / n).clamp(0.0, 1.0));
        out.mean_p_minus.push((sum_p[k][2] / n).clamp(0.0, 1.0));
        let c = coh[k] / n;
        out.coherence_re.push(c.re);
        out.coherence_im.push(c.im);
        out.clock_coherence.push((clock[k] / n).norm());
        out.envelope.push(0.5 * (sum_p[k][0] + sum_p[k][2]) / n + c.norm());
    }
    Ok(out)
}

pub fn run_ensemble(sc: &Scenario, cfg: &EnsembleConfig) -> Result<EnsembleResult> {
    let trajectories = collect_trajectories(sc, cfg)?;
    average(&trajectories, cfg.base_seed)
}
