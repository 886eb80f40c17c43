mod common;

use std::sync::OnceLock;

use isoslow::manifold::{build_manifold, FamilyConfig, TraceConfig};
use isoslow::models::InputSignal;
use isoslow::numerics::linalg::c64;
use isoslow::numerics::ode::{linspace, IntegratorConfig, Sampled};
use isoslow::rom::{build_rom, simulate_rom, steady_state_maxima, ForcedConfig, ReducedModel, ResponseModel, RomConfig};

use common::setup;

const CHANNEL: [f64; 3] = [1.0, 0.0, 0.0];

fn goodwin_rom() -> &'static ReducedModel {
    static ROM: OnceLock<ReducedModel> = OnceLock::new();
    ROM.get_or_init(|| {
        let (m, s) = setup("goodwin");
        let fc = FamilyConfig {
            rays: 16,
            seed_radius: 0.01,
            min_success: 0.0,
            trace: TraceConfig {
                t_max: 250.0,
                dt_correct: 0.25,
                stop_on_abort: true,
                ..TraceConfig::default()
            },
            ..FamilyConfig::default()
        };
        let man = build_manifold(m.as_ref(), &s, None, &fc).unwrap();
        build_rom(&man, &CHANNEL, &RomConfig::default()).unwrap()
    })
}

fn integrator() -> IntegratorConfig {
    IntegratorConfig::dopri5(1e-10, 1e-10)
}

/// Largest deviation of output 0 from the reference over the sampled window.
fn max_deviation(reference: &Sampled, other: &Sampled) -> f64 {
    reference
        .x
        .iter()
        .zip(&other.x)
        .map(|(a, b)| (a[0] - b[0]).abs())
        .fold(0.0, f64::max)
}

#[test]
fn goodwin_gain_at_the_fixed_point_is_the_left_eigenvector_component() {
    let (_, s) = setup("goodwin");
    let rom = goodwin_rom();
    let p = rom.eval(c64(0.0, 0.0)).unwrap();
    assert!((p.gain - s.w(0)[0]).norm() <= 1e-12);
    assert!(p.x.iter().zip(&s.x0).all(|(a, b)| (a - b).abs() <= 1e-12));
}

#[test]
fn goodwin_forced_response_beats_the_linearization() {
    let (m, s) = setup("goodwin");
    let signal = InputSignal::Sine { a: 0.010, period: 24.0 };
    let t_end = 24.0 * 21.0;
    let grid = linspace(24.0 * 20.0, t_end, 97);
    let full = ResponseModel::full(m.clone(), &s, &CHANNEL).unwrap().respond(&signal, t_end, &grid, &integrator()).unwrap();
    let linear = ResponseModel::linearized(&s, &CHANNEL).unwrap().respond(&signal, t_end, &grid, &integrator()).unwrap();
    let reduced = ResponseModel::Reduced(goodwin_rom().clone())
        .respond(&signal, t_end, &grid, &integrator())
        .unwrap();
    let (e_rom, e_lin) = (max_deviation(&full, &reduced), max_deviation(&full, &linear));
    assert!(e_rom <= e_lin, "reduced {e_rom:e} vs linear {e_lin:e}");
}

#[test]
fn unforced_reduced_output_decays_at_the_slow_rate() {
    let rom = goodwin_rom();
    let lambda = rom.lambda();
    let t_end = 250.0;
    let grid = linspace(0.0, t_end, 2501);
    let traj = simulate_rom(rom, &InputSignal::Zero, c64(0.2, 0.0), t_end, &grid, &integrator()).unwrap();
    for (t, psi) in traj.t.iter().zip(&traj.psi) {
        let exact = c64(0.2, 0.0) * (lambda * t).exp();
        assert!((psi - exact).norm() <= 1e-8, "t = {t}");
    }
    let logs: Vec<(f64, f64)> = traj
        .t
        .iter()
        .zip(&traj.x)
        .map(|(t, x)| (*t, x.iter().zip(&rom.x0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()))
        .filter(|(_, d)| *d > 0.0)
        .map(|(t, d)| (t, d.ln()))
        .collect();
    let n = logs.len() as f64;
    let tm = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let lm = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = logs.iter().map(|(t, l)| (t - tm) * (l - lm)).sum();
    let den: f64 = logs.iter().map(|(t, _)| (t - tm) * (t - tm)).sum();
    let slope = num / den;
    assert!(((slope - lambda.re) / lambda.re).abs() <= 0.02, "slope {slope} vs {}", lambda.re);
}

#[test]
fn full_goodwin_doubles_its_period_at_strong_forcing() {
    let (m, s) = setup("goodwin");
    let full = ResponseModel::full(m, &s, &CHANNEL).unwrap();
    let maxima = steady_state_maxima(&full, &InputSignal::Sine { a: 0.027, period: 24.0 }, &ForcedConfig::default()).unwrap();
    assert_eq!(maxima.len(), 2);
    assert!((maxima[0] - maxima[1]).abs() > ForcedConfig::default().gap, "{maxima:?}");
}
