//! Stretched-exponential decay fits.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::engine::EnsembleResult;
use crate::error::{Error, Result};

pub const MIN_STRETCH: f64 = 0.5;
pub const MAX_STRETCH: f64 = 3.0;
/// Mixed-state limit of the decay observables.
pub const MIXED_OFFSET: f64 = 0.5;
/// RMS residual above which the fit is replaced by a 1/e crossing.
pub const FALLBACK_RESIDUAL: f64 = 0.05;
/// Below this fraction of the full decay the window only bounds T₂.
pub const MIN_DECAY_FRACTION: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    EnvelopeFit,
    Threshold,
    /// No usable decay: `t2` is the window length and only a lower bound.
    LowerBound,
}

/// Which ensemble column a decay is read from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayObservable {
    /// ⟨(P₊ + P₋)/2⟩ + |⟨a b*⟩|, insensitive to the deterministic RF phase.
    #[default]
    Envelope,
    PPlus,
}

impl DecayObservable {
    pub fn series<'a>(&self, ens: &'a EnsembleResult) -> &'a [f64] {
        match self {
            DecayObservable::Envelope => &ens.envelope,
            DecayObservable::PPlus => &ens.mean_p_plus,
        }
    }
}

/// offset + amplitude·exp[−(t/t2)^stretch_exponent]
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct T2Fit {
    pub t2: f64,
    pub stretch_exponent: f64,
    pub amplitude: f64,
    pub offset: f64,
    /// RMS of data minus model.
    pub residual: f64,
    pub method: FitMethod,
    /// One-sigma uncertainty of `t2` from the fit covariance, when available.
    pub t2_stderr: Option<f64>,
    /// Fraction of the way from the initial value to the mixed state reached in the window.
    pub decay_fraction: f64,
}

impl T2Fit {
    pub fn is_lower_bound(&self) -> bool {
        self.method == FitMethod::LowerBound
    }

    pub fn model(&self, t: f64) -> f64 {
        stretched(t, self.t2, self.stretch_exponent, self.amplitude, self.offset)
    }
}

fn stretched(t: f64, t2: f64, p: f64, a: f64, off: f64) -> f64 {
    off + a * (-(t / t2).powf(p)).exp()
}

pub fn fit_t2(ens: &EnsembleResult, observable: DecayObservable) -> Result<T2Fit> {
    fit_decay(&ens.times, observable.series(ens))
}

/// Fit a decay curve sampled at `times` (first sample at the start of the decay).
pub fn fit_decay(times: &[f64], values: &[f64]) -> Result<T2Fit> {
    if times.len() != values.len() {
        return Err(Error::InvalidParameter("times and values differ in length".into()));
    }
    if times.len() < 5 {
        return Err(Error::InvalidParameter(format!("need at least 5 samples to fit, got {}", times.len())));
    }
    if values.iter().chain(times).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite sample in decay curve".into()));
    }
    let window = *times.last().unwrap();
    let y0 = values[0];
    let tail_len = (values.len() / 10).max(2);
    let tail = values[values.len() - tail_len..].iter().sum::<f64>() / tail_len as f64;
    let span = y0 - MIXED_OFFSET;
    let decay_fraction = if span > 0.0 { ((y0 - tail) / span).clamp(0.0, 1.0) } else { 0.0 };

    if decay_fraction < MIN_DECAY_FRACTION {
        return Ok(T2Fit {
            t2: window,
            stretch_exponent: f64::NAN,
            amplitude: span,
            offset: MIXED_OFFSET,
            residual: rms(values.iter().map(|v| v - y0)),
            method: FitMethod::LowerBound,
            t2_stderr: None,
            decay_fraction,
        });
    }

    let t_guess = threshold_crossing(times, values, MIXED_OFFSET, span).unwrap_or(window);
    let mut best: Option<Lm> = None;
    for p0 in [1.0, 2.0] {
        let start = [t_guess.ln(), p0, span, MIXED_OFFSET];
        let fit = levenberg_marquardt(times, values, start);
        if best.as_ref().is_none_or(|b| fit.sse < b.sse) {
            best = Some(fit);
        }
    }
    let lm = best.unwrap();
    let [ln_t2, p, a, off] = lm.theta;
    let residual = (lm.sse / values.len() as f64).sqrt();
    if residual <= FALLBACK_RESIDUAL && a > 0.0 && ln_t2.is_finite() {
        return Ok(T2Fit {
            t2: ln_t2.exp(),
            stretch_exponent: p,
            amplitude: a,
            offset: off,
            residual,
            method: FitMethod::EnvelopeFit,
            t2_stderr: lm.ln_t2_var.map(|v| ln_t2.exp() * v.sqrt()),
            decay_fraction,
        });
    }
    match threshold_crossing(times, values, MIXED_OFFSET, span) {
        Some(t2) => Ok(T2Fit {
            t2,
            stretch_exponent: 1.0,
            amplitude: span,
            offset: MIXED_OFFSET,
            residual: rms(times.iter().zip(values).map(|(&t, &v)| v - stretched(t, t2, 1.0, span, MIXED_OFFSET))),
            method: FitMethod::Threshold,
            t2_stderr: None,
            decay_fraction,
        }),
        None => Ok(T2Fit {
            t2: window,
            stretch_exponent: f64::NAN,
            amplitude: span,
            offset: MIXED_OFFSET,
            residual,
            method: FitMethod::LowerBound,
            t2_stderr: None,
            decay_fraction,
        }),
    }
}

fn rms(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), r| (s + r * r, n + 1));
    (s / n.max(1) as f64).sqrt()
}

/// First time the curve drops below offset + span/e, linearly interpolated.
pub fn threshold_crossing(times: &[f64], values: &[f64], offset: f64, span: f64) -> Option<f64> {
    let level = offset + span * (-1.0f64).exp();
    for k in 1..values.len() {
        if values[k] <= level {
            let (t0, t1, v0, v1) = (times[k - 1], times[k], values[k - 1], values[k]);
            if v0 == v1 {
                return Some(t1);
            }
            return Some(t0 + (v0 - level) / (v0 - v1) * (t1 - t0));
        }
    }
    None
}

struct Lm {
    theta: [f64; 4],
    sse: f64,
    ln_t2_var: Option<f64>,
}

/// θ = (ln T₂, p, A, offset) with the offset held at its start value.
/// Leakage out of the sensing pair drags slow tails below the mixed-state
/// level, so a free asymptote trades off against T₂.
fn levenberg_marquardt(t: &[f64], y: &[f64], start: [f64; 4]) -> Lm {
    let n_par = 3;
    let sse_of = |th: &[f64; 4]| -> f64 {
        t.iter()
            .zip(y)
            .map(|(&ti, &yi)| {
                let r = yi - stretched(ti, th[0].exp(), th[1], th[2], th[3]);
                r * r
            })
            .sum()
    };
    let normal = |th: &[f64; 4]| -> (Matrix4<f64>, Vector4<f64>) {
        let t2 = th[0].exp();
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for (&ti, &yi) in t.iter().zip(y) {
            let x = ti / t2;
            let u = if x > 0.0 { x.powf(th[1]) } else { 0.0 };
            let e = (-u).exp();
            let r = yi - (th[3] + th[2] * e);
            let lnx = if x > 0.0 { x.ln() } else { 0.0 };
            let j = Vector4::new(th[2] * e * u * th[1], -th[2] * e * u * lnx, e, 0.0);
            jtj += j * j.transpose();
            jtr += j * r;
        }
        jtj[(3, 3)] = 1.0;
        (jtj, jtr)
    };

    let mut th = start;
    let mut sse = sse_of(&th);
    let mut lambda = 1e-3;
    for _ in 0..500 {
        let (jtj, jtr) = normal(&th);
        let mut a = jtj;
        for i in 0..4 {
            a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
        }
        let Some(delta) = a.lu().solve(&jtr) else { break };
        let mut trial = th;
        for i in 0..n_par {
            trial[i] += delta[i];
        }
        trial[1] = trial[1].clamp(MIN_STRETCH, MAX_STRETCH);
        trial[2] = trial[2].clamp(0.0, 1.5);
        let trial_sse = sse_of(&trial);
        if trial_sse.is_finite() && trial_sse < sse {
            let rel = (sse - trial_sse) / sse.max(1e-300);
            th = trial;
            sse = trial_sse;
            lambda = (lambda * 0.3).max(1e-12);
            if rel < 1e-12 {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }

    let dof = t.len().saturating_sub(n_par).max(1) as f64;
    let (jtj, _) = normal(&th);
    let ln_t2_var = jtj.try_inverse().map(|c| c[(0, 0)] * sse / dof).filter(|v| v.is_finite() && *v >= 0.0);
    Lm { theta: th, sse, ln_t2_var }
}
