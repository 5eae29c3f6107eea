use zfmag::engine::{
    run_ensemble, EnsembleConfig, InitialState, IntegratorConfig, SampleSchedule, Scenario,
};
use zfmag::hamiltonian::{DriveConfig, SignalConfig};
use zfmag::noise::NoiseConfig;
use zfmag::sequence::{build_sequence, resonance_tau};
use zfmag::spin::StaticSensor;
use zfmag::units::mhz;

fn noisy() -> Scenario {
    let sensor = StaticSensor::from_mhz(2870.0, 20.0, 0.0, 0.0).unwrap();
    let drive = DriveConfig::resonant(&sensor, mhz(4.0), mhz(40.0));
    let tau = resonance_tau(mhz(0.1)).unwrap();
    Scenario {
        sensor,
        drive,
        signal: SignalConfig::none(),
        sequence: build_sequence("ldd8b", 16, tau, drive.pulse_duration(), &[]).unwrap(),
        noise: NoiseConfig { t2star: Some(1.8e-6), ..Default::default() },
        integrator: IntegratorConfig::default(),
        sampling: SampleSchedule::Echo { stride: 4 },
        initial: InitialState::Plus,
    }
}

#[test]
fn stderr_shrinks_as_inverse_root_n() {
    let sc = noisy();
    let small = run_ensemble(&sc, &EnsembleConfig::new(64, 3, 0)).unwrap();
    let large = run_ensemble(&sc, &EnsembleConfig::new(256, 3, 0)).unwrap();
    // Averaged over the decayed samples to beat the noise in the estimate itself.
    let mean = |v: &[f64]| v[1..].iter().sum::<f64>() / (v.len() - 1) as f64;
    let ratio = mean(&small.stderr_p_plus) / mean(&large.stderr_p_plus);
    assert!((ratio - 2.0).abs() < 0.3, "ratio {ratio}");
}

#[test]
fn ensemble_mean_is_within_bounds() {
    let res = run_ensemble(&noisy(), &EnsembleConfig::new(32, 9, 0)).unwrap();
    for k in 0..res.len() {
        let total = res.mean_p_plus[k] + res.mean_p_zero[k] + res.mean_p_minus[k];
        assert!((total - 1.0).abs() < 1e-9);
        assert!((0.0..=1.0).contains(&res.mean_p_plus[k]));
        assert!(res.envelope[k] >= res.mean_p_plus[k] - 1e-12);
    }
}
