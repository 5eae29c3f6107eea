//! AC-field spectra: readout contrast against signal detuning.

use std::io::Write;

use serde::Serialize;

use crate::engine::{run_ensemble, EnsembleConfig, SampleSchedule, Scenario};
use crate::error::{Error, Result};
use crate::hamiltonian::SignalConfig;
use crate::sequence::accumulated_phase;

/// Contrast 1 − 2⟨P₊⟩ at the end of a fixed sequence, per detuning.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumScan {
    pub detunings: Vec<f64>,
    pub contrast: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Sequence length at which the contrast is read.
    pub readout_time: f64,
    pub coupling: f64,
    pub n_realizations: usize,
    pub base_seed: u64,
}

impl SpectrumScan {
    /// Index of the largest contrast (first one on ties).
    pub fn peak_index(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (k, &c) in self.contrast.iter().enumerate() {
            if best.is_none_or(|b| c > self.contrast[b]) {
                best = Some(k);
            }
        }
        best
    }

    pub fn peak_detuning(&self) -> Option<f64> {
        self.peak_index().map(|k| self.detunings[k])
    }

    /// Full width at half maximum of contrast above the off-resonant floor
    /// of −1, interpolated linearly. `None` if either edge is outside the scan.
    pub fn linewidth(&self) -> Option<f64> {
        let k0 = self.peak_index()?;
        let lift: Vec<f64> = self.contrast.iter().map(|c| c + 1.0).collect();
        let half = 0.5 * lift[k0];
        if !(half > 0.0) {
            return None;
        }
        let cross = |a: usize, b: usize| {
            let (x0, x1, y0, y1) = (self.detunings[a], self.detunings[b], lift[a], lift[b]);
            x0 + (half - y0) / (y1 - y0) * (x1 - x0)
        };
        let left = (1..=k0).rev().find(|&k| lift[k - 1] < half).map(|k| cross(k - 1, k))?;
        let right = (k0..lift.len() - 1).find(|&k| lift[k + 1] < half).map(|k| cross(k, k + 1))?;
        Some(right - left)
    }
}

/// Number of sequence cycles (2τ each) whose on-resonance phase is closest to π/2.
pub fn quarter_phase_pulses(coupling: f64, detuning: f64, tau: f64, block: usize) -> Result<usize> {
    if !(coupling > 0.0 && detuning > 0.0 && tau > 0.0) || block == 0 {
        return Err(Error::InvalidParameter("coupling, detuning and tau must be > 0".into()));
    }
    let block_time = 2.0 * tau * block as f64;
    let target = std::f64::consts::FRAC_PI_2;
    let mut best = (f64::INFINITY, 1);
    for m in 1..=100_000 {
        let eta = accumulated_phase(coupling, detuning, m as f64 * block_time);
        if (eta - target).abs() < best.0 {
            best = ((eta - target).abs(), m);
        }
        if eta > target {
            break;
        }
    }
    Ok(best.1 * block)
}

/// Run `base` with the signal moved to every detuning in `detunings`.
/// The sequence in `base` is kept fixed; only the end time is sampled.
pub fn spectrum_scan(base: &Scenario, coupling: f64, detunings: &[f64], ens: &EnsembleConfig) -> Result<SpectrumScan> {
    if detunings.is_empty() {
        return Err(Error::InvalidParameter("empty detuning grid".into()));
    }
    let readout = base.sequence.total_duration();
    let mut out = SpectrumScan {
        detunings: detunings.to_vec(),
        contrast: Vec::with_capacity(detunings.len()),
        stderr: Vec::with_capacity(detunings.len()),
        readout_time: readout,
        coupling,
        n_realizations: ens.n_realizations,
        base_seed: ens.base_seed,
    };
    for &dw in detunings {
        let mut sc = base.clone();
        sc.signal = SignalConfig::at_detuning(&sc.sensor, coupling, dw);
        sc.sampling = SampleSchedule::Times(vec![readout]);
        let res = run_ensemble(&sc, ens)?;
        let p = *res.mean_p_plus.last().unwrap();
        out.contrast.push((1.0 - 2.0 * p).clamp(-1.0, 1.0));
        out.stderr.push(2.0 * res.stderr_p_plus.last().unwrap());
        log::debug!("scan dw = {dw:e}: contrast {:.4}", out.contrast.last().unwrap());
    }
    Ok(out)
}

pub const SPECTRUM_CSV_COLUMNS: &str = "detuning_mhz,contrast,stderr";

pub fn write_spectrum_csv<W: Write>(mut w: W, scan: &SpectrumScan, header: &[(&str, String)]) -> Result<()> {
    for (k, v) in header {
        writeln!(w, "# {k}: {v}")?;
    }
    writeln!(w, "{SPECTRUM_CSV_COLUMNS}")?;
    for k in 0..scan.detunings.len() {
        writeln!(
            w,
            "{:.9e},{:.9e},{:.9e}",
            crate::units::to_mhz(scan.detunings[k]),
            scan.contrast[k],
            scan.stderr[k]
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{khz, mhz};

    fn scan(d: Vec<f64>, c: Vec<f64>) -> SpectrumScan {
        let n = d.len();
        SpectrumScan {
            detunings: d,
            contrast: c,
            stderr: vec![0.0; n],
            readout_time: 1.0,
            coupling: 1.0,
            n_realizations: 1,
            base_seed: 0,
        }
    }

    #[test]
    fn peak_and_width_of_triangle() {
        let s = scan(vec![0.0, 1.0, 2.0, 3.0, 4.0], vec![-1.0, -0.5, 0.0, -0.5, -1.0]);
        assert_eq!(s.peak_index(), Some(2));
        assert!((s.linewidth().unwrap() - 2.0).abs() < 1e-12);
        let open = scan(vec![0.0, 1.0, 2.0], vec![0.0, -0.5, -1.0]);
        assert!(open.linewidth().is_none());
    }

    #[test]
    fn quarter_phase_length() {
        let dw = mhz(0.1);
        let tau = crate::sequence::resonance_tau(dw).unwrap();
        let n = quarter_phase_pulses(khz(5.0), dw, tau, 8).unwrap();
        let eta = accumulated_phase(khz(5.0), dw, 2.0 * tau * n as f64);
        // One 8-pulse block adds about 0.2 rad here.
        assert!((eta - std::f64::consts::FRAC_PI_2).abs() < 0.11, "{eta}");
        assert_eq!(n % 8, 0);
    }
}
