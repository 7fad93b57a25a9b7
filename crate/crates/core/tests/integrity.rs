//! Integrator invariants over randomized physical settings.

use nvraman_core::dynamics::mhz_to_angular;
use nvraman_core::propagate::{default_time_step, piecewise_constant_oracle, propagate};
use nvraman_core::pulses::{make_rabi_pair, make_stirap_pair};
use nvraman_core::{DensityMatrix, Envelope, EnvelopeShape, FieldSample, LambdaParams, PulseSequence};
use proptest::prelude::*;

fn ramped(omega_mhz: f64, t_rise: f64, delay: f64, sin2: bool) -> PulseSequence {
    let shape = if sin2 { EnvelopeShape::Sin2Ramp } else { EnvelopeShape::Trapezoid };
    make_stirap_pair(mhz_to_angular(omega_mhz), 1.5, t_rise, delay, shape).unwrap()
}

fn samples(span: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| if k == n { span } else { span * k as f64 / n as f64 }).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn state_stays_physical_on_ramps(
        delta in 300.0f64..1500.0,
        delta2 in -2.0f64..2.0,
        omega in 10.0f64..60.0,
        t_rise in 0.0f64..1.5,
        delay in 0.5f64..2.5,
        sin2 in any::<bool>(),
    ) {
        let params = LambdaParams::nv_defaults(delta, delta2);
        let seq = ramped(omega, t_rise, delay, sin2);
        let dt = default_time_step(&params, &seq);
        let traj = propagate(&DensityMatrix::basis(0), &seq, &params, &samples(seq.span, 20), dt).unwrap();
        for (t, rho) in &traj {
            if *t > 0.0 {
                prop_assert!((rho.trace().re - 1.0).abs() <= 1e-9 * t);
            }
            prop_assert!(rho.hermiticity_error() <= 1e-12);
            prop_assert!(rho.min_eigenvalue() >= -1e-9);
        }
    }

    #[test]
    fn constant_fields_match_exponential(
        delta in 200.0f64..1500.0,
        delta2 in -3.0f64..3.0,
        op in 0.0f64..80.0,
        om in 0.0f64..80.0,
        t in 0.01f64..0.1,
    ) {
        let params = LambdaParams::nv_defaults(delta, delta2);
        let fields = FieldSample::new(mhz_to_angular(op), mhz_to_angular(om));
        let seq = PulseSequence::new(
            vec![Envelope::square(fields.omega_plus, 0.0, t).unwrap()],
            vec![Envelope::square(fields.omega_minus, 0.0, t).unwrap()],
            t,
        )
        .unwrap();
        let rho0 = DensityMatrix::basis(0);
        let rk = propagate(&rho0, &seq, &params, &[t], default_time_step(&params, &seq)).unwrap()[0].1;
        let exact = piecewise_constant_oracle(&rho0, &fields, &params, t);
        prop_assert!(rk.max_abs_diff(&exact) <= 1e-8, "diff {}", rk.max_abs_diff(&exact));
    }
}

#[test]
fn halving_step_changes_little() {
    let rho0 = DensityMatrix::basis(0);
    let cases = [
        (LambdaParams::nv_defaults(900.0, 0.0), ramped(48.0, 1.2, 2.1, false)),
        (LambdaParams::nv_defaults(900.0, 0.5), ramped(48.0, 0.6, 1.2, true)),
        (LambdaParams::nv_defaults(1500.0, 0.0), make_rabi_pair(mhz_to_angular(46.0), 2.0).unwrap()),
    ];
    for (params, seq) in cases {
        let dt = default_time_step(&params, &seq);
        let times = samples(seq.span, 10);
        let a = propagate(&rho0, &seq, &params, &times, dt).unwrap();
        let b = propagate(&rho0, &seq, &params, &times, dt / 2.0).unwrap();
        for ((_, x), (_, y)) in a.iter().zip(&b) {
            for k in 0..3 {
                assert!((x.population(k) - y.population(k)).abs() < 1e-7);
            }
        }
    }
}

#[test]
fn leak_only_loses_population() {
    let mut params = LambdaParams::nv_defaults(900.0, 0.0);
    params.leak_rate = mhz_to_angular(1.0);
    let seq = ramped(48.0, 0.3, 1.5, false);
    let traj = propagate(&DensityMatrix::basis(0), &seq, &params, &samples(seq.span, 10), default_time_step(&params, &seq)).unwrap();
    let mut last = 1.0;
    for (_, rho) in &traj {
        let tr = rho.trace().re;
        assert!(tr <= last + 1e-12);
        last = tr;
    }
    assert!(last < 1.0);
}
