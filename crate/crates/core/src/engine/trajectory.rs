//! Single-realization propagation through a pulse sequence.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::propagator::{ideal_pulse, qubit_free_coeffs, step_propagator};
use crate::error::{Error, Result};
use crate::hamiltonian::{
    effective_unchecked, frame_propagator, lab_frame_hamiltonian, DriveConfig, FrameSnapshot, SignalConfig,
};
use crate::noise::{NoiseChannelSet, NoiseConfig, NoiseValues};
use crate::sequence::{PulseSequence, SegmentKind};
use crate::spin::{SpinMatrix, SpinState, StaticSensor, MINUS_ONE, PLUS_ONE};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    #[default]
    Effective,
    LabFrame,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseModel {
    /// Integrate the driven Hamiltonian over the pulse.
    #[default]
    Finite,
    /// Perfect instantaneous 2π rotation at the pulse centre.
    Ideal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    /// Noise is held constant on a global grid of this spacing.
    pub noise_dt: f64,
    pub pulse_substeps: usize,
    pub free_step_max: f64,
    pub frame: Frame,
    pub pulse_model: PulseModel,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            noise_dt: 10e-9,
            pulse_substeps: 20,
            free_step_max: 10e-9,
            frame: Frame::Effective,
            pulse_model: PulseModel::Finite,
        }
    }
}

const MAX_PHASE_PER_STEP: f64 = 0.2;
const MIN_PULSE_SUBSTEPS: usize = 20;

/// When populations are recorded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSchedule {
    /// Refocusing points of the sequence (see [`PulseSequence::echo_times`]).
    Echo { stride: usize },
    /// t = 0, Δ, 2Δ, … up to the sequence end.
    Uniform { interval: f64 },
    Times(Vec<f64>),
}

impl Default for SampleSchedule {
    fn default() -> Self {
        SampleSchedule::Echo { stride: 1 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// |+⟩, as prepared by an ideal initialization pulse.
    #[default]
    Plus,
    /// Amplitudes (re, im) in (|+1⟩, |0⟩, |−1⟩); normalized on use.
    Amplitudes([[f64; 2]; 3]),
}

impl InitialState {
    pub fn state(&self) -> Result<SpinState> {
        match self {
            InitialState::Plus => Ok(SpinState::plus()),
            InitialState::Amplitudes(a) => {
                let s = SpinState::new(
                    Complex64::new(a[0][0], a[0][1]),
                    Complex64::new(a[1][0], a[1][1]),
                    Complex64::new(a[2][0], a[2][1]),
                );
                let n = s.norm();
                if !(n > 0.0 && n.is_finite()) {
                    return Err(Error::InvalidParameter("initial state has zero or non-finite norm".into()));
                }
                Ok(s.normalized())
            }
        }
    }
}

/// Everything needed to propagate one realization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub sensor: StaticSensor,
    pub drive: DriveConfig,
    pub signal: SignalConfig,
    pub sequence: PulseSequence,
    pub noise: NoiseConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub sampling: SampleSchedule,
    #[serde(default)]
    pub initial: InitialState,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.sensor.validate()?;
        self.drive.validate()?;
        self.signal.validate()?;
        self.noise.validate()?;
        let ic = &self.integrator;
        if !(ic.noise_dt > 0.0 && ic.free_step_max > 0.0) {
            return Err(Error::Integrator("noise_dt and free_step_max must be positive".into()));
        }
        if let Some(tau) = self.noise.shortest_active_tau() {
            if ic.noise_dt > tau / 10.0 * (1.0 + 1e-12) {
                return Err(Error::Integrator(format!(
                    "noise_dt = {:e} s exceeds a tenth of the correlation time {:e} s",
                    ic.noise_dt, tau
                )));
            }
        }
        let max_diag = self.max_diagonal_frequency();
        if ic.free_step_max * max_diag > MAX_PHASE_PER_STEP * (1.0 + 1e-12) {
            return Err(Error::Integrator(format!(
                "free_step_max = {:e} s gives {:.3} rad per step (limit {MAX_PHASE_PER_STEP}); use <= {:e} s",
                ic.free_step_max,
                ic.free_step_max * max_diag,
                MAX_PHASE_PER_STEP / max_diag
            )));
        }
        if self.sequence.n_pulses > 0 && ic.pulse_model == PulseModel::Finite {
            if ic.pulse_substeps < MIN_PULSE_SUBSTEPS {
                return Err(Error::Integrator(format!(
                    "pulse_substeps = {} is below {MIN_PULSE_SUBSTEPS}",
                    ic.pulse_substeps
                )));
            }
            if self.drive.mw_rabi <= 0.0 {
                return Err(Error::InvalidParameter("finite pulses need a positive MW Rabi frequency".into()));
            }
        }
        if ic.frame == Frame::Effective && !self.drive.is_resonant(&self.sensor) {
            return Err(Error::Precondition(
                "the effective frame needs omega_rf = 2 E_x and omega = D + E_x".into(),
            ));
        }
        self.initial.state()?;
        self.sample_times()?;
        Ok(())
    }

    /// Largest diagonal angular frequency the free integrator must resolve.
    pub fn max_diagonal_frequency(&self) -> f64 {
        let g = self.signal.coupling.abs();
        match self.integrator.frame {
            Frame::Effective => 0.5 * (self.drive.rf_rabi + g),
            Frame::LabFrame => {
                self.sensor.d + self.sensor.e_perp() + self.sensor.delta_bz.abs() + self.drive.rf_rabi + g
            }
        }
    }

    /// Sorted sample times, checked against the pulse windows.
    pub fn sample_times(&self) -> Result<Vec<f64>> {
        let total = self.sequence.total_duration();
        let mut times = match &self.sampling {
            SampleSchedule::Echo { stride } => self.sequence.echo_times(*stride),
            SampleSchedule::Uniform { interval } => {
                if !(*interval > 0.0) {
                    return Err(Error::InvalidParameter("sampling interval must be > 0".into()));
                }
                let n = (total / interval * (1.0 + 1e-12)).floor() as usize;
                (0..=n).map(|k| k as f64 * interval).collect()
            }
            SampleSchedule::Times(t) => t.clone(),
        };
        if times.iter().any(|t| !t.is_finite() || *t < 0.0 || *t > total * (1.0 + 1e-12)) {
            return Err(Error::InvalidParameter(format!("sample times must lie in [0, {total:e}]")));
        }
        times.sort_by(f64::total_cmp);
        times.dedup();
        for &t in &times {
            for (a, b, _) in self.sequence.pulse_windows() {
                if t > a && t < b {
                    return Err(Error::InvalidParameter(format!(
                        "sample time {t:e} falls inside the pulse [{a:e}, {b:e}]"
                    )));
                }
            }
        }
        Ok(times)
    }
}

/// Rotating-frame state recorded at each sample time.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Rotating-frame states.
    pub states: Vec<SpinState>,
    pub seed_index: u64,
}

impl Trajectory {
    /// (P₊, P₀, P₋) at sample `k`.
    pub fn populations(&self, k: usize) -> [f64; 3] {
        self.states[k].dressed_populations()
    }

    pub fn p_plus(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.dressed_populations()[0]).collect()
    }
}

/// a·b* of the |+1⟩ and |−1⟩ amplitudes.
pub fn sensing_coherence(s: &SpinState) -> Complex64 {
    s.0[PLUS_ONE] * s.0[MINUS_ONE].conj()
}

/// ⟨+|ψ⟩·⟨0|ψ⟩*
pub fn clock_coherence(s: &SpinState) -> Complex64 {
    let d = s.to_dressed();
    d.0[0] * d.0[1].conj()
}

/// Noise values on the global grid, updated lazily.
struct NoiseClock<'a> {
    set: &'a mut NoiseChannelSet,
    dt: f64,
    index: u64,
    values: NoiseValues,
}

impl<'a> NoiseClock<'a> {
    fn new(set: &'a mut NoiseChannelSet, dt: f64) -> Self {
        let values = set.values();
        NoiseClock { set, dt, index: 0, values }
    }

    /// Bring the noise to the grid cell containing `t` with one exact step.
    fn sync(&mut self, t: f64) -> Result<NoiseValues> {
        let k = (t / self.dt * (1.0 + 1e-12)).floor() as u64;
        if k > self.index {
            self.values = self.set.step((k - self.index) as f64 * self.dt)?;
            self.index = k;
        }
        Ok(self.values)
    }

    fn next_boundary(&self) -> f64 {
        (self.index + 1) as f64 * self.dt
    }
}

struct Propagator<'a> {
    sc: &'a Scenario,
    detuning: f64,
    psi: SpinState,
    t: f64,
    samples: &'a [f64],
    next_sample: usize,
    out: Vec<SpinState>,
}

impl<'a> Propagator<'a> {
    fn record_due(&mut self) -> Result<()> {
        while self.next_sample < self.samples.len() && self.samples[self.next_sample] <= self.t + 1e-15 {
            if !self.psi.is_finite() {
                return Err(Error::Numerical { time: self.t, message: "state became non-finite".into() });
            }
            let norm = self.psi.norm();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::Numerical { time: self.t, message: format!("norm drifted to {norm}") });
            }
            let rotating = match self.sc.integrator.frame {
                Frame::Effective => self.psi,
                Frame::LabFrame => frame_propagator(&self.sc.sensor, self.t).adjoint() * self.psi,
            };
            self.out.push(rotating);
            self.next_sample += 1;
        }
        Ok(())
    }

    fn next_sample_time(&self) -> f64 {
        self.samples.get(self.next_sample).copied().unwrap_or(f64::INFINITY)
    }

    fn free(&mut self, duration: f64, noise: &mut NoiseClock) -> Result<()> {
        let end = self.t + duration;
        let ic = &self.sc.integrator;
        while self.t < end - 1e-18 {
            let values = noise.sync(self.t)?;
            let stop = end.min(noise.next_boundary()).min(self.next_sample_time()).min(self.t + ic.free_step_max);
            let dt = stop - self.t;
            if dt <= 0.0 {
                self.record_due()?;
                continue;
            }
            let mid = self.t + 0.5 * dt;
            match ic.frame {
                Frame::Effective => {
                    let h = 0.5
                        * (self.sc.drive.rf_rabi * (1.0 + values.eta_r)
                            + self.sc.signal.coupling * (self.detuning * mid).cos());
                    let (d0, d1, off) = qubit_free_coeffs(h, values.delta_e, dt);
                    let a = self.psi.0[PLUS_ONE];
                    let b = self.psi.0[MINUS_ONE];
                    self.psi.0[PLUS_ONE] = d0 * a + off * b;
                    self.psi.0[MINUS_ONE] = off * a + d1 * b;
                }
                Frame::LabFrame => {
                    let snap = FrameSnapshot::free(mid, values);
                    let h = lab_frame_hamiltonian(&self.sc.sensor, &self.sc.drive, &self.sc.signal, &snap);
                    self.psi = step_propagator(&h, dt) * self.psi;
                }
            }
            self.t = stop;
            self.record_due()?;
        }
        self.t = self.t.max(end);
        self.record_due()
    }

    fn pulse(&mut self, duration: f64, phase: f64, noise: &mut NoiseClock) -> Result<()> {
        let values = noise.sync(self.t)?;
        let ic = &self.sc.integrator;
        match (ic.pulse_model, ic.frame) {
            (PulseModel::Ideal, _) => {
                self.free(0.5 * duration, noise)?;
                let flip = match ic.frame {
                    Frame::Effective => ideal_pulse(),
                    Frame::LabFrame => {
                        let u0 = frame_propagator(&self.sc.sensor, self.t);
                        u0 * ideal_pulse() * u0.adjoint()
                    }
                };
                self.psi = flip * self.psi;
                return self.free(0.5 * duration, noise);
            }
            (PulseModel::Finite, Frame::Effective) => {
                let g = self.sc.signal.coupling;
                let u = if g == 0.0 {
                    let snap = FrameSnapshot::pulse(self.t, values, phase);
                    step_propagator(&effective_unchecked(&self.sc.drive, 0.0, 0.0, &snap), duration)
                } else {
                    super::propagator::pulse_propagator_with_signal(
                        &self.sc.drive,
                        g,
                        self.detuning,
                        &values,
                        phase,
                        self.t,
                        duration,
                        ic.pulse_substeps,
                    )
                };
                self.psi = u * self.psi;
            }
            (PulseModel::Finite, Frame::LabFrame) => {
                let n = ic.pulse_substeps.max((duration / ic.free_step_max).ceil() as usize);
                let dt = duration / n as f64;
                let mut u = SpinMatrix::identity();
                for k in 0..n {
                    let snap = FrameSnapshot::pulse(self.t + (k as f64 + 0.5) * dt, values, phase);
                    let h = lab_frame_hamiltonian(&self.sc.sensor, &self.sc.drive, &self.sc.signal, &snap);
                    u = step_propagator(&h, dt) * u;
                }
                self.psi = u * self.psi;
            }
        }
        self.t += duration;
        self.record_due()
    }
}

/// Propagate one realization. `noise` must be fresh for this trajectory.
pub fn run_trajectory(sc: &Scenario, noise: &mut NoiseChannelSet, seed_index: u64) -> Result<Trajectory> {
    sc.validate()?;
    propagate(sc, noise, seed_index)
}

/// [`run_trajectory`] without re-validating; used by the ensemble runner.
pub(crate) fn propagate(sc: &Scenario, noise: &mut NoiseChannelSet, seed_index: u64) -> Result<Trajectory> {
    let samples = sc.sample_times()?;
    let mut clock = NoiseClock::new(noise, sc.integrator.noise_dt);
    let mut p = Propagator {
        sc,
        detuning: sc.signal.detuning(&sc.sensor),
        psi: sc.initial.state()?,
        t: 0.0,
        samples: &samples,
        next_sample: 0,
        out: Vec::with_capacity(samples.len()),
    };
    p.record_due()?;
    for seg in &sc.sequence.segments {
        match seg.kind {
            SegmentKind::Free => p.free(seg.duration, &mut clock)?,
            SegmentKind::Pulse => p.pulse(seg.duration, seg.phase, &mut clock)?,
        }
    }
    if p.out.len() != samples.len() {
        return Err(Error::Numerical {
            time: p.t,
            message: format!("recorded {} of {} samples", p.out.len(), samples.len()),
        });
    }
    let states = p.out;
    Ok(Trajectory { times: samples, states, seed_index })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::{accumulated_phase, build_sequence, build_sequence_with_layout, resonance_tau, Layout};
    use crate::units::{khz, mhz, us};

    fn base(rf: f64, family: &str, n: usize, layout: Layout, model: PulseModel) -> Scenario {
        let sensor = StaticSensor::from_mhz(2870.0, 20.0, 0.0, 0.0).unwrap();
        let drive = DriveConfig::resonant(&sensor, mhz(rf), mhz(40.0));
        let tau = resonance_tau(mhz(0.1)).unwrap();
        let tp = if model == PulseModel::Ideal { 0.0 } else { drive.pulse_duration() };
        Scenario {
            sensor,
            drive,
            signal: SignalConfig::none(),
            sequence: build_sequence_with_layout(family, n, tau, tp, &[], layout).unwrap(),
            noise: NoiseConfig::quiet(),
            integrator: IntegratorConfig { pulse_model: model, ..Default::default() },
            sampling: SampleSchedule::Echo { stride: 1 },
            initial: InitialState::Plus,
        }
    }

    fn run(sc: &Scenario, seed: u64) -> Trajectory {
        let mut set = NoiseChannelSet::new(&sc.noise, seed, 0).unwrap();
        run_trajectory(sc, &mut set, 0).unwrap()
    }

    #[test]
    fn echo_identity_with_ideal_pulses() {
        for n in [2, 8, 32] {
            let sc = base(4.0, "cpmg", n, Layout::Additive, PulseModel::Ideal);
            let tr = run(&sc, 1);
            let last = tr.populations(tr.times.len() - 1);
            assert!((last[0] - 1.0).abs() < 1e-6, "n = {n}: {}", last[0]);
        }
    }

    #[test]
    fn populations_sum_to_one() {
        let mut sc = base(6.0, "ldd8b", 16, Layout::Additive, PulseModel::Finite);
        sc.noise = NoiseConfig { t2star: Some(1.8e-6), ..Default::default() };
        let tr = run(&sc, 3);
        for k in 0..tr.times.len() {
            let p = tr.populations(k);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_rerun() {
        let mut sc = base(4.0, "cpmg", 8, Layout::Additive, PulseModel::Finite);
        sc.noise = NoiseConfig { t2star: Some(1.8e-6), ..Default::default() };
        assert_eq!(run(&sc, 5), run(&sc, 5));
        assert_ne!(run(&sc, 5), run(&sc, 6));
    }

    #[test]
    fn signal_follows_accumulated_phase() {
        // Small Ω_rf/Ω so finite-pulse leakage stays below the tolerance.
        let mut sc = base(0.4, "cpmg", 64, Layout::Centered, PulseModel::Finite);
        let g = khz(5.0);
        let dw = mhz(0.1);
        sc.signal = SignalConfig::at_detuning(&sc.sensor, g, dw);
        let tr = run(&sc, 1);
        for (k, &t) in tr.times.iter().enumerate() {
            let expect = 0.5 * (1.0 + accumulated_phase(g, dw, t).cos());
            assert!((tr.populations(k)[0] - expect).abs() < 0.02, "t = {t:e}");
        }
    }

    #[test]
    fn rejects_coarse_integrator() {
        let mut sc = base(6.0, "cpmg", 2, Layout::Additive, PulseModel::Finite);
        sc.integrator.free_step_max = 1e-7;
        assert!(matches!(sc.validate(), Err(Error::Integrator(_))));
        let mut sc = base(6.0, "cpmg", 2, Layout::Additive, PulseModel::Finite);
        sc.integrator.pulse_substeps = 5;
        assert!(matches!(sc.validate(), Err(Error::Integrator(_))));
        let mut sc = base(6.0, "cpmg", 2, Layout::Additive, PulseModel::Finite);
        sc.noise = NoiseConfig { t2star: Some(1e-6), tau_c: 5e-8, ..Default::default() };
        assert!(matches!(sc.validate(), Err(Error::Integrator(_))));
    }

    #[test]
    fn sample_inside_pulse_is_rejected() {
        let mut sc = base(4.0, "cpmg", 2, Layout::Additive, PulseModel::Finite);
        let (a, b, _) = sc.sequence.pulse_windows()[0];
        sc.sampling = SampleSchedule::Times(vec![0.5 * (a + b)]);
        assert!(sc.validate().is_err());
    }

    #[test]
    fn none_family_samples_uniform_grid() {
        let sc = base(2.0, "none", 4, Layout::Additive, PulseModel::Finite);
        let tr = run(&sc, 1);
        assert_eq!(tr.times.len(), 3);
        // Ω_rf·4τ is a multiple of 2π at these settings: |+⟩ returns.
        assert!((tr.populations(2)[0] - 1.0).abs() < 1e-9);
        let _ = build_sequence("none", 1, us(1.0), 0.0, &[]).unwrap();
    }

    #[test]
    fn free_step_refinement_is_converged() {
        let mut sc = base(4.0, "cpmg", 16, Layout::Centered, PulseModel::Finite);
        sc.signal = SignalConfig::at_detuning(&sc.sensor, khz(5.0), mhz(0.1));
        let coarse = run(&sc, 1);
        sc.integrator.free_step_max /= 2.0;
        sc.integrator.noise_dt /= 2.0;
        sc.integrator.pulse_substeps *= 2;
        let fine = run(&sc, 1);
        let (a, b) = (coarse.p_plus(), fine.p_plus());
        assert!((a.last().unwrap() - b.last().unwrap()).abs() < 1e-4);
    }
}
