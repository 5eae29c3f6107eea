//! Coherence-time extraction, the coherence-time grid, spectra and the
//! sensitivity figure of merit.

mod fit;
mod spectrum;
mod table1;

pub use fit::{
    fit_decay, fit_t2, threshold_crossing, DecayObservable, FitMethod, T2Fit, FALLBACK_RESIDUAL, MAX_STRETCH,
    MIN_DECAY_FRACTION, MIN_STRETCH, MIXED_OFFSET,
};
pub use spectrum::{quarter_phase_pulses, spectrum_scan, write_spectrum_csv, SpectrumScan, SPECTRUM_CSV_COLUMNS};
pub use table1::{
    format_table1, ordering_violations, reproduce_table1, table1_grid, table1_reference, write_table1_csv, CellFilter,
    CellSpec, Control, OrderingViolation, Table1Cell, Table1Settings, TABLE1_CSV_COLUMNS, TABLE1_RF_MHZ,
    TABLE1_T2STAR_US,
};

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Enhancement {
    /// g·√T₂* / (E_x·√T₂)
    pub factor: f64,
    pub reciprocal: f64,
}

/// Sensitivity gain of the dressed clock sensor relative to a bare one.
/// Angular frequencies and times in any consistent units.
pub fn sensitivity_enhancement(coupling: f64, ex: f64, t2star: f64, t2: f64) -> Result<Enhancement> {
    for (name, v) in [("coupling", coupling), ("E_x", ex), ("t2star", t2star), ("t2", t2)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
        }
    }
    let factor = coupling * t2star.sqrt() / (ex * t2.sqrt());
    Ok(Enhancement { factor, reciprocal: 1.0 / factor })
}
