//! Coherence-time grid over RF Rabi frequency, dephasing time and pulse control.

use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::fit::{fit_t2, threshold_crossing, DecayObservable, FitMethod, T2Fit, MIXED_OFFSET};
use crate::engine::{
    run_ensemble, EnsembleConfig, EnsembleResult, IntegratorConfig, PulseModel, SampleSchedule, Scenario,
};
use crate::engine::{Frame, InitialState};
use crate::error::{Error, Result};
use crate::hamiltonian::{DriveConfig, SignalConfig};
use crate::noise::{splitmix64, InitMode, NoiseConfig};
use crate::sequence::{build_sequence, resonance_tau, LDD8B_PRESET};
use crate::spin::StaticSensor;
use crate::units::{mhz, to_us, us};

pub const TABLE1_RF_MHZ: [f64; 3] = [2.0, 4.0, 6.0];
pub const TABLE1_T2STAR_US: [f64; 4] = [0.9, 1.8, 5.4, 10.0];

/// Reference T₂ in μs, indexed [RF][control][T₂*].
const REFERENCE_US: [[[f64; 4]; 3]; 3] = [
    [[15.1, 40.3, 83.3, 169.3], [26.9, 138.0, 2628.0, 4297.0], [28.6, 138.0, 5150.0, 11540.0]],
    [[24.9, 40.1, 47.1, 44.8], [48.0, 280.0, 380.0, 525.0], [48.0, 585.0, 5012.0, 7015.0]],
    [[27.3, 34.5, 33.5, 36.6], [61.0, 106.0, 178.0, 172.0], [98.0, 1050.0, 2553.0, 3229.0]],
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Control {
    None,
    Dd,
    Ldd,
}

impl Control {
    pub const ALL: [Control; 3] = [Control::None, Control::Dd, Control::Ldd];

    pub fn family(&self) -> &'static str {
        match self {
            Control::None => "none",
            Control::Dd => "cpmg",
            Control::Ldd => "ldd8b",
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Control::None => "None",
            Control::Dd => "DD",
            Control::Ldd => "LDD",
        }
    }
}

impl FromStr for Control {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(Control::None),
            "dd" | "cpmg" => Ok(Control::Dd),
            "ldd" | "ldd8b" => Ok(Control::Ldd),
            other => Err(Error::Config(format!("unknown pulse control {other:?} (none, dd, ldd)"))),
        }
    }
}

/// One grid point; frequencies in (2π)·MHz, times in μs as in the reference table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub rf_mhz: f64,
    pub control: Control,
    pub t2star_us: f64,
}

impl CellSpec {
    pub fn new(rf_mhz: f64, control: Control, t2star_us: f64) -> Self {
        CellSpec { rf_mhz, control, t2star_us }
    }

    pub fn reference_us(&self) -> Option<f64> {
        table1_reference(self.rf_mhz, self.control, self.t2star_us)
    }

    fn key(&self) -> u64 {
        splitmix64(splitmix64(self.rf_mhz.to_bits()) ^ self.t2star_us.to_bits()) ^ self.control as u64
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

pub fn table1_reference(rf_mhz: f64, control: Control, t2star_us: f64) -> Option<f64> {
    let i = TABLE1_RF_MHZ.iter().position(|&r| close(r, rf_mhz))?;
    let k = TABLE1_T2STAR_US.iter().position(|&t| close(t, t2star_us))?;
    Some(REFERENCE_US[i][control as usize][k])
}

/// All 36 cells, row-major over (RF, control, T₂*).
pub fn table1_grid() -> Vec<CellSpec> {
    let mut out = Vec::with_capacity(36);
    for rf in TABLE1_RF_MHZ {
        for control in Control::ALL {
            for t2s in TABLE1_T2STAR_US {
                out.push(CellSpec::new(rf, control, t2s));
            }
        }
    }
    out
}

/// Subset selector such as `rf=4,control=ldd` or `t2star=1.8`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CellFilter {
    pub rf_mhz: Option<f64>,
    pub control: Option<Control>,
    pub t2star_us: Option<f64>,
}

impl CellFilter {
    pub fn matches(&self, c: &CellSpec) -> bool {
        self.rf_mhz.is_none_or(|r| close(r, c.rf_mhz))
            && self.control.is_none_or(|k| k == c.control)
            && self.t2star_us.is_none_or(|t| close(t, c.t2star_us))
    }

    pub fn apply(&self, cells: &[CellSpec]) -> Vec<CellSpec> {
        cells.iter().copied().filter(|c| self.matches(c)).collect()
    }
}

impl FromStr for CellFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut f = CellFilter::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("cell filter term {part:?} is not key=value")))?;
            let num = || {
                v.trim().parse::<f64>().map_err(|_| Error::Config(format!("cell filter value {v:?} is not a number")))
            };
            match k.trim().to_lowercase().as_str() {
                "rf" | "rf_mhz" | "ω_rf" | "omega_rf" => f.rf_mhz = Some(num()?),
                "control" | "pulse" => f.control = Some(v.parse()?),
                "t2star" | "t2star_us" | "t2*" | "t₂*" => f.t2star_us = Some(num()?),
                other => return Err(Error::Config(format!("unknown cell filter key {other:?}"))),
            }
        }
        Ok(f)
    }
}

/// Fixed physics and run-size settings shared by every cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Table1Settings {
    pub d_mhz: f64,
    pub ex_mhz: f64,
    pub mw_rabi_mhz: f64,
    pub detuning_mhz: f64,
    pub tau_c: f64,
    /// Relative RF and MW amplitude error (std).
    pub drive_error: f64,
    pub drive_error_tau: f64,
    pub drive_init: InitMode,
    pub ldd_phases: Vec<f64>,
    pub pulse_model: PulseModel,
    pub observable: DecayObservable,
    pub n_realizations: usize,
    pub base_seed: u64,
    /// Excluded from serialization: results do not depend on it.
    #[serde(skip_serializing)]
    pub workers: usize,
    /// Realizations used while searching for the decay window.
    pub pilot_realizations: usize,
    /// First pilot window; `None` picks max(40 μs, 30·T₂*).
    pub initial_window: Option<f64>,
    pub max_window: f64,
    /// Final window reaches (W/T₂)^p = this, from the pilot fit.
    pub window_decay: f64,
    /// Approximate number of samples per decay curve.
    pub samples: usize,
}

impl Default for Table1Settings {
    fn default() -> Self {
        Table1Settings {
            d_mhz: 2870.0,
            ex_mhz: 20.0,
            mw_rabi_mhz: 40.0,
            detuning_mhz: 0.1,
            tau_c: 20e-6,
            drive_error: 0.005,
            drive_error_tau: 500e-6,
            drive_init: InitMode::Zero,
            ldd_phases: LDD8B_PRESET.to_vec(),
            pulse_model: PulseModel::Finite,
            observable: DecayObservable::Envelope,
            n_realizations: 200,
            base_seed: 1,
            workers: 0,
            pilot_realizations: 16,
            initial_window: None,
            max_window: 40e-3,
            window_decay: 4.0,
            samples: 120,
        }
    }
}

const MAX_STEP: f64 = 50e-9;
const FULL_DECAY: f64 = 0.85;

impl Table1Settings {
    pub fn validate(&self) -> Result<()> {
        if self.n_realizations == 0 || self.pilot_realizations == 0 {
            return Err(Error::Config("realization counts must be >= 1".into()));
        }
        if !(self.max_window > 0.0 && self.window_decay > 1.0) || self.samples < 10 {
            return Err(Error::Config("window settings must be positive and samples >= 10".into()));
        }
        if self.ldd_phases.is_empty() {
            return Err(Error::Config("ldd_phases must not be empty".into()));
        }
        Ok(())
    }

    fn pattern_len(&self, control: Control) -> usize {
        match control {
            Control::Ldd => self.ldd_phases.len(),
            _ => 8,
        }
    }

    /// The scenario for `cell` covering at least `window` seconds.
    pub fn cell_scenario(&self, cell: &CellSpec, window: f64) -> Result<Scenario> {
        let sensor = StaticSensor::from_mhz(self.d_mhz, self.ex_mhz, 0.0, 0.0)?;
        let drive = DriveConfig::resonant(&sensor, mhz(cell.rf_mhz), mhz(self.mw_rabi_mhz));
        let tau = resonance_tau(mhz(self.detuning_mhz))?;
        let block = self.pattern_len(cell.control);
        let n = ((window / (2.0 * tau)).ceil() as usize).div_ceil(block).max(1) * block;
        let phases = if cell.control == Control::Ldd { self.ldd_phases.clone() } else { Vec::new() };
        let tp = match self.pulse_model {
            PulseModel::Finite => drive.pulse_duration(),
            PulseModel::Ideal => 0.0,
        };
        let sequence = build_sequence(cell.control.family(), n, tau, tp, &phases)?;
        // Both echo and 4τ sampling give n/2 points.
        let stride = (n / 2).div_ceil(self.samples).max(1);
        let noise = NoiseConfig {
            t2star: Some(us(cell.t2star_us)),
            tau_c: self.tau_c,
            eta_r: self.drive_error,
            tau_r: self.drive_error_tau,
            eta_m: self.drive_error,
            tau_m: self.drive_error_tau,
            drive_init: self.drive_init,
            ..Default::default()
        };
        let mut sc = Scenario {
            sensor,
            drive,
            signal: SignalConfig::none(),
            sequence,
            noise,
            integrator: IntegratorConfig { pulse_model: self.pulse_model, frame: Frame::Effective, ..Default::default() },
            sampling: SampleSchedule::Echo { stride },
            initial: InitialState::Plus,
        };
        let step = (0.95 * 0.2 / sc.max_diagonal_frequency()).min(self.tau_c / 10.0).min(MAX_STEP);
        sc.integrator.noise_dt = step;
        sc.integrator.free_step_max = step;
        Ok(sc)
    }

    fn seed_for(&self, cell: &CellSpec) -> u64 {
        splitmix64(self.base_seed ^ cell.key())
    }

    fn ensemble(&self, cell: &CellSpec, window: f64, n: usize) -> Result<EnsembleResult> {
        let sc = self.cell_scenario(cell, window)?;
        run_ensemble(&sc, &EnsembleConfig::new(n, self.seed_for(cell), self.workers))
    }

    /// Grow the window by 4× until the pilot ensemble crosses its 1/e level,
    /// then size the final window so that (W/T₂)^p ≈ `window_decay`.
    pub fn pilot_window(&self, cell: &CellSpec) -> Result<f64> {
        let mut w = self
            .initial_window
            .unwrap_or_else(|| (40e-6f64).max(30.0 * us(cell.t2star_us)))
            .min(self.max_window);
        loop {
            let ens = self.ensemble(cell, w, self.pilot_realizations)?;
            let fit = fit_t2(&ens, self.observable)?;
            let series = self.observable.series(&ens);
            let crossed = threshold_crossing(&ens.times, series, MIXED_OFFSET, series[0] - MIXED_OFFSET).is_some();
            log::debug!("pilot {cell:?}: window {:.1} us, fit {:?}", to_us(w), fit);
            if crossed && !fit.is_lower_bound() {
                let p = if fit.stretch_exponent.is_finite() { fit.stretch_exponent } else { 1.0 };
                let factor = self.window_decay.powf(1.0 / p).max(2.0);
                return Ok((factor * fit.t2).clamp(w / 8.0, self.max_window));
            }
            if w >= self.max_window {
                return Ok(self.max_window);
            }
            w = (4.0 * w).min(self.max_window);
        }
    }

    pub fn run_cell(&self, cell: &CellSpec) -> Table1Cell {
        let mut out = Table1Cell {
            rf_mhz: cell.rf_mhz,
            control: cell.control,
            t2star_us: cell.t2star_us,
            t2_us: None,
            t2_stderr_us: None,
            t2_reference_us: cell.reference_us(),
            ratio: None,
            fit: None,
            window_us: 0.0,
            n_realizations: self.n_realizations,
            error: None,
        };
        let run = || -> Result<(f64, T2Fit)> {
            let mut w = self.pilot_window(cell)?;
            loop {
                let ens = self.ensemble(cell, w, self.n_realizations)?;
                let fit = fit_t2(&ens, self.observable)?;
                // The pilot can undershoot slow tails; widen until the decay is nearly complete.
                if fit.decay_fraction >= FULL_DECAY || w >= self.max_window {
                    return Ok((w, fit));
                }
                w = (2.0 * w).min(self.max_window);
            }
        };
        match run() {
            Ok((w, fit)) => {
                out.window_us = to_us(w);
                out.t2_us = Some(to_us(fit.t2));
                out.t2_stderr_us = fit.t2_stderr.map(to_us);
                out.ratio = out.t2_reference_us.map(|p| to_us(fit.t2) / p);
                out.fit = Some(fit);
            }
            Err(e) => out.error = Some(e.to_string()),
        }
        out
    }
}

/// Measured vs reference T₂ for one grid point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table1Cell {
    pub rf_mhz: f64,
    pub control: Control,
    pub t2star_us: f64,
    pub t2_us: Option<f64>,
    pub t2_stderr_us: Option<f64>,
    pub t2_reference_us: Option<f64>,
    /// measured / reference
    pub ratio: Option<f64>,
    pub fit: Option<T2Fit>,
    pub window_us: f64,
    pub n_realizations: usize,
    pub error: Option<String>,
}

impl Table1Cell {
    pub fn spec(&self) -> CellSpec {
        CellSpec::new(self.rf_mhz, self.control, self.t2star_us)
    }

    pub fn is_lower_bound(&self) -> bool {
        self.fit.as_ref().is_some_and(T2Fit::is_lower_bound)
    }

    /// Uncertainty used for ordering checks: the fit error, floored at 5%.
    fn sigma_us(&self) -> f64 {
        let t = self.t2_us.unwrap_or(0.0);
        self.t2_stderr_us.unwrap_or(0.0).max(0.05 * t)
    }
}

/// Run every cell in order; a failing cell records its error and the grid continues.
pub fn reproduce_table1(settings: &Table1Settings, cells: &[CellSpec]) -> Result<Vec<Table1Cell>> {
    settings.validate()?;
    Ok(cells
        .iter()
        .map(|c| {
            let cell = settings.run_cell(c);
            log::info!(
                "cell rf={} {} T2*={}: T2 = {:?} us (reference {:?})",
                c.rf_mhz,
                c.control.label(),
                c.t2star_us,
                cell.t2_us,
                cell.t2_reference_us
            );
            cell
        })
        .collect())
}

/// A pair of cells in the same row whose measured T₂ breaks LDD ≥ DD ≥ None.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderingViolation {
    pub rf_mhz: f64,
    pub t2star_us: f64,
    pub better: Control,
    pub worse: Control,
    pub better_t2_us: f64,
    pub worse_t2_us: f64,
}

/// Check LDD ≥ DD ≥ None within two combined standard errors in every
/// (RF, T₂*) row where both cells completed. A lower bound on the stronger
/// control never counts as a violation.
pub fn ordering_violations(cells: &[Table1Cell]) -> Vec<OrderingViolation> {
    let find = |rf: f64, t2s: f64, k: Control| {
        cells.iter().find(|c| close(c.rf_mhz, rf) && close(c.t2star_us, t2s) && c.control == k && c.t2_us.is_some())
    };
    let mut rows: Vec<(f64, f64)> = Vec::new();
    for c in cells {
        if !rows.iter().any(|&(r, t)| close(r, c.rf_mhz) && close(t, c.t2star_us)) {
            rows.push((c.rf_mhz, c.t2star_us));
        }
    }
    let mut out = Vec::new();
    for (rf, t2s) in rows {
        for (better, worse) in [(Control::Ldd, Control::Dd), (Control::Dd, Control::None)] {
            let (Some(b), Some(w)) = (find(rf, t2s, better), find(rf, t2s, worse)) else { continue };
            let (tb, tw) = (b.t2_us.unwrap(), w.t2_us.unwrap());
            let tol = 2.0 * b.sigma_us().hypot(w.sigma_us());
            if tb + tol < tw && !(b.is_lower_bound()) {
                out.push(OrderingViolation {
                    rf_mhz: rf,
                    t2star_us: t2s,
                    better,
                    worse,
                    better_t2_us: tb,
                    worse_t2_us: tw,
                });
            }
        }
    }
    out
}

pub const TABLE1_CSV_COLUMNS: &str =
    "rf_mhz,control,t2star_us,t2_us,t2_stderr_us,t2_reference_us,ratio,method,stretch_exponent,window_us,n_realizations,error";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_default()
}

fn method_name(fit: Option<&T2Fit>) -> &'static str {
    match fit.map(|f| f.method) {
        Some(FitMethod::EnvelopeFit) => "envelope_fit",
        Some(FitMethod::Threshold) => "threshold",
        Some(FitMethod::LowerBound) => "lower_bound",
        None => "",
    }
}

pub fn write_table1_csv<W: Write>(mut w: W, cells: &[Table1Cell], header: &[(&str, String)]) -> Result<()> {
    for (k, v) in header {
        writeln!(w, "# {k}: {v}")?;
    }
    writeln!(w, "{TABLE1_CSV_COLUMNS}")?;
    for c in cells {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{:.6e},{},{}",
            c.rf_mhz,
            c.control.label(),
            c.t2star_us,
            opt(c.t2_us),
            opt(c.t2_stderr_us),
            c.t2_reference_us.map(|p| p.to_string()).unwrap_or_default(),
            opt(c.ratio),
            method_name(c.fit.as_ref()),
            opt(c.fit.as_ref().map(|f| f.stretch_exponent).filter(|p| p.is_finite())),
            c.window_us,
            c.n_realizations,
            c.error.as_deref().unwrap_or("").replace(',', ";"),
        )?;
    }
    Ok(())
}

/// Aligned plain-text comparison table.
pub fn format_table1(cells: &[Table1Cell]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:>6} {:>5} {:>7} {:>12} {:>10} {:>7}  note", "RF", "ctrl", "T2*", "T2 (us)", "ref", "ratio");
    for c in cells {
        let measured = match (c.t2_us, c.is_lower_bound()) {
            (Some(t), true) => format!(">{t:.1}"),
            (Some(t), false) => format!("{t:.1}"),
            (None, _) => "-".into(),
        };
        let _ = writeln!(
            s,
            "{:>6} {:>5} {:>7} {:>12} {:>10} {:>7}  {}",
            c.rf_mhz,
            c.control.label(),
            c.t2star_us,
            measured,
            c.t2_reference_us.map(|p| p.to_string()).unwrap_or("-".into()),
            c.ratio.map(|r| format!("{r:.2}")).unwrap_or("-".into()),
            c.error.as_deref().or(c.fit.as_ref().map(|f| method_name(Some(f)))).unwrap_or(""),
        );
    }
    s
}
