//! Pulse sequences, resonance scheduling and the toggling response function.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Free,
    Pulse,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub duration: f64,
    /// MW phase; zero for free segments.
    pub phase: f64,
}

impl Segment {
    pub fn free(duration: f64) -> Self {
        Segment { kind: SegmentKind::Free, duration, phase: 0.0 }
    }

    pub fn pulse(duration: f64, phase: f64) -> Self {
        Segment { kind: SegmentKind::Pulse, duration, phase }
    }
}

/// Where pulses sit relative to the τ grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// τ — (P — 2τ)^(n−1) — P — τ; free time 2nτ, total 2nτ + nT_p.
    #[default]
    Additive,
    /// Free segments shortened by T_p so pulse k is centred on (2k+1)τ and
    /// the total is exactly 2nτ.
    Centered,
}

/// Robust eight-pulse phase pattern shipped as the "ldd8b" preset.
pub const LDD8B_PRESET: [f64; 8] = [0.0, PI, FRAC_PI_2, FRAC_PI_2, PI, 0.0, 3.0 * FRAC_PI_2, 3.0 * FRAC_PI_2];

/// Built-in phase pattern for a family name, if any.
pub fn preset_phases(family: &str) -> Option<Vec<f64>> {
    match family {
        "cpmg" | "dd" => Some(vec![0.0]),
        "ldd8b" => Some(LDD8B_PRESET.to_vec()),
        "none" => Some(Vec::new()),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub label: String,
    pub segments: Vec<Segment>,
    pub n_pulses: usize,
    pub tau: f64,
    pub pulse_duration: f64,
    /// The repeating phase pattern.
    pub phases: Vec<f64>,
    pub layout: Layout,
}

impl PulseSequence {
    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn free_duration(&self) -> f64 {
        self.segments.iter().filter(|s| s.kind == SegmentKind::Free).map(|s| s.duration).sum()
    }

    /// (start, end, phase) of every pulse.
    pub fn pulse_windows(&self) -> Vec<(f64, f64, f64)> {
        let mut t = 0.0;
        let mut out = Vec::with_capacity(self.n_pulses);
        for s in &self.segments {
            if s.kind == SegmentKind::Pulse {
                out.push((t, t + s.duration, s.phase));
            }
            t += s.duration;
        }
        out
    }

    pub fn pulse_centres(&self) -> Vec<f64> {
        self.pulse_windows().iter().map(|(a, b, _)| 0.5 * (a + b)).collect()
    }

    /// Refocusing points: the middle of the free segment after every even
    /// pulse (the end of the sequence for the last one). Every `stride`-th
    /// point is kept, and t = 0 is always first. A pulse-free sequence is
    /// sampled every 4τ·stride instead.
    pub fn echo_times(&self, stride: usize) -> Vec<f64> {
        let stride = stride.max(1);
        let mut out = vec![0.0];
        if self.n_pulses == 0 {
            let step = 4.0 * self.tau * stride as f64;
            let total = self.total_duration();
            let mut k = 1;
            while k as f64 * step <= total * (1.0 + 1e-12) {
                out.push(k as f64 * step);
                k += 1;
            }
            return out;
        }
        let mut t = 0.0;
        let mut pulses = 0;
        let mut echo = 0;
        for (i, s) in self.segments.iter().enumerate() {
            let start = t;
            t += s.duration;
            match s.kind {
                SegmentKind::Pulse => pulses += 1,
                SegmentKind::Free if pulses > 0 && pulses % 2 == 0 => {
                    let last = i + 1 == self.segments.len();
                    let prev_was_pulse = i > 0 && self.segments[i - 1].kind == SegmentKind::Pulse;
                    if prev_was_pulse {
                        echo += 1;
                        if echo % stride == 0 {
                            out.push(if last { t } else { start + 0.5 * s.duration });
                        }
                    }
                }
                _ => {}
            }
        }
        out
    }

    pub fn spec(&self) -> SequenceSpec {
        SequenceSpec {
            family: self.label.clone(),
            n_pulses: self.n_pulses,
            tau: self.tau,
            pulse_duration: self.pulse_duration,
            phases: Some(self.phases.clone()),
            layout: self.layout,
        }
    }
}

/// Canonical additive layout.
pub fn build_sequence(
    family: &str,
    n_pulses: usize,
    tau: f64,
    pulse_duration: f64,
    phases: &[f64],
) -> Result<PulseSequence> {
    build_sequence_with_layout(family, n_pulses, tau, pulse_duration, phases, Layout::Additive)
}

pub fn build_sequence_with_layout(
    family: &str,
    n_pulses: usize,
    tau: f64,
    pulse_duration: f64,
    phases: &[f64],
    layout: Layout,
) -> Result<PulseSequence> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau must be > 0, got {tau}")));
    }
    if !(pulse_duration >= 0.0 && pulse_duration.is_finite()) {
        return Err(Error::InvalidParameter(format!("pulse duration must be >= 0, got {pulse_duration}")));
    }
    if n_pulses == 0 {
        return Err(Error::InvalidParameter("need at least one pulse (or cycle for \"none\")".into()));
    }
    if family == "none" {
        return Ok(PulseSequence {
            label: family.to_string(),
            segments: vec![Segment::free(2.0 * n_pulses as f64 * tau)],
            n_pulses: 0,
            tau,
            pulse_duration: 0.0,
            phases: Vec::new(),
            layout,
        });
    }
    let pattern: Vec<f64> = if phases.is_empty() {
        preset_phases(family)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown sequence family {family:?} and no phases given")))?
    } else {
        phases.to_vec()
    };
    if n_pulses % pattern.len() != 0 {
        return Err(Error::InvalidParameter(format!(
            "phase pattern of length {} does not divide {n_pulses} pulses",
            pattern.len()
        )));
    }
    let (edge, inner) = match layout {
        Layout::Additive => (tau, 2.0 * tau),
        Layout::Centered => (tau - 0.5 * pulse_duration, 2.0 * tau - pulse_duration),
    };
    if edge < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "pulse duration {pulse_duration:e} does not fit inside 2 tau = {:e}",
            2.0 * tau
        )));
    }
    let mut segments = Vec::with_capacity(2 * n_pulses + 1);
    segments.push(Segment::free(edge));
    for k in 0..n_pulses {
        segments.push(Segment::pulse(pulse_duration, pattern[k % pattern.len()]));
        segments.push(Segment::free(if k + 1 == n_pulses { edge } else { inner }));
    }
    Ok(PulseSequence {
        label: family.to_string(),
        segments,
        n_pulses,
        tau,
        pulse_duration,
        phases: pattern,
        layout,
    })
}

/// Serializable description of a sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub family: String,
    pub n_pulses: usize,
    pub tau: f64,
    pub pulse_duration: f64,
    #[serde(default)]
    pub phases: Option<Vec<f64>>,
    #[serde(default)]
    pub layout: Layout,
}

impl SequenceSpec {
    pub fn build(&self) -> Result<PulseSequence> {
        let phases = self.phases.clone().unwrap_or_default();
        build_sequence_with_layout(&self.family, self.n_pulses, self.tau, self.pulse_duration, &phases, self.layout)
    }

    /// `key = value` text block.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "family = {}", self.family);
        let _ = writeln!(s, "n_pulses = {}", self.n_pulses);
        let _ = writeln!(s, "tau = {:e}", self.tau);
        let _ = writeln!(s, "pulse_duration = {:e}", self.pulse_duration);
        let layout = match self.layout {
            Layout::Additive => "additive",
            Layout::Centered => "centered",
        };
        let _ = writeln!(s, "layout = {layout}");
        if let Some(p) = &self.phases {
            let list: Vec<String> = p.iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(s, "phases = {}", list.join(", "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut family = None;
        let mut n_pulses = None;
        let mut tau = None;
        let mut pulse_duration = None;
        let mut phases = None;
        let mut layout = Layout::Additive;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| Error::Config(format!("sequence line {}: {msg}: {raw:?}", lineno + 1));
            let (key, value) = line.split_once('=').ok_or_else(|| bad("expected key = value"))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| v.parse::<f64>().map_err(|_| bad("not a number"));
            match key {
                "family" => family = Some(value.to_string()),
                "n_pulses" => n_pulses = Some(value.parse::<usize>().map_err(|_| bad("not an integer"))?),
                "tau" => tau = Some(num(value)?),
                "pulse_duration" => pulse_duration = Some(num(value)?),
                "layout" => {
                    layout = match value {
                        "additive" => Layout::Additive,
                        "centered" => Layout::Centered,
                        _ => return Err(bad("layout must be additive or centered")),
                    }
                }
                "phases" => {
                    let list = if value.is_empty() {
                        Vec::new()
                    } else {
                        value.split(',').map(|v| num(v.trim())).collect::<Result<Vec<_>>>()?
                    };
                    phases = Some(list);
                }
                _ => return Err(bad("unknown key")),
            }
        }
        let missing = |k: &str| Error::Config(format!("sequence block is missing {k}"));
        Ok(SequenceSpec {
            family: family.ok_or_else(|| missing("family"))?,
            n_pulses: n_pulses.ok_or_else(|| missing("n_pulses"))?,
            tau: tau.ok_or_else(|| missing("tau"))?,
            pulse_duration: pulse_duration.ok_or_else(|| missing("pulse_duration"))?,
            phases,
            layout,
        })
    }
}

/// τ = π/(2Δω)
pub fn resonance_tau(detuning: f64) -> Result<f64> {
    if !(detuning > 0.0 && detuning.is_finite()) {
        return Err(Error::InvalidParameter(format!("resonance needs a positive detuning, got {detuning}")));
    }
    Ok(PI / (2.0 * detuning))
}

/// Piecewise ±1 toggling sign of a pulse train, flipping at pulse centres.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResponseFunction {
    pub switch_times: Vec<f64>,
    pub duration: f64,
}

impl ResponseFunction {
    pub fn value_at(&self, t: f64) -> f64 {
        let flips = self.switch_times.partition_point(|&s| s <= t);
        if flips % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// (t_start, t_end, sign) pieces covering [0, duration].
    pub fn pieces(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(self.switch_times.len() + 1);
        let mut start = 0.0;
        let mut sign = 1.0;
        for &s in &self.switch_times {
            out.push((start, s, sign));
            start = s;
            sign = -sign;
        }
        out.push((start, self.duration, sign));
        out
    }

    /// (2/T)∫₀ᵀ f(t) cos(2πnt/T) dt, integrated exactly piece by piece.
    pub fn cosine_coefficient(&self, n: usize, period: f64) -> f64 {
        let k = std::f64::consts::TAU * n as f64 / period;
        let mut acc = 0.0;
        for (a, b, sign) in self.pieces() {
            let (a, b) = (a.min(period), b.min(period));
            if b > a {
                acc += sign * ((k * b).sin() - (k * a).sin()) / k;
            }
        }
        2.0 * acc / period
    }

    /// |∫₀ᵀ f(t) e^{iωt} dt|²
    pub fn filter_function(&self, omega: f64) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (a, b, sign) in self.pieces() {
            if omega == 0.0 {
                re += sign * (b - a);
            } else {
                re += sign * ((omega * b).sin() - (omega * a).sin()) / omega;
                im += sign * ((omega * a).cos() - (omega * b).cos()) / omega;
            }
        }
        re * re + im * im
    }
}

pub fn response_function(seq: &PulseSequence) -> ResponseFunction {
    ResponseFunction { switch_times: seq.pulse_centres(), duration: seq.total_duration() }
}

/// Cosine-series coefficient of the ideal square wave (+1 on (0,τ),
/// −1 on (τ,3τ), +1 on (3τ,4τ)): a_n = 4 sin(nπ/2)/(nπ).
pub fn fourier_coefficient(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("Fourier index starts at 1".into()));
    }
    let x = n as f64 * FRAC_PI_2;
    // sin(nπ/2) is exactly 0, ±1
    let s = match n % 4 {
        1 => 1.0,
        3 => -1.0,
        _ => 0.0,
    };
    Ok(4.0 * s / (2.0 * x))
}

/// η(t) = ∫₀ᵗ g|cos(Δω s)| ds
pub fn accumulated_phase(coupling: f64, detuning: f64, t: f64) -> f64 {
    if detuning == 0.0 {
        return coupling * t;
    }
    let u = (detuning * t).abs();
    let half = (u / PI).floor();
    let r = u - half * PI;
    let partial = if r <= FRAC_PI_2 { r.sin() } else { 2.0 - r.sin() };
    coupling * (2.0 * half + partial) / detuning.abs() * t.signum()
}
