use nvraman_bench::{rabi_sequence, stirap_sequence, two_photon_members};
use nvraman_core::propagate::{default_time_step, propagate, propagate_batch};
use nvraman_core::DensityMatrix;

#[test]
fn fixtures_are_valid_inputs() {
    let seq = stirap_sequence(0.3, 2.0);
    assert_eq!(seq.span, 2.0);
    assert_eq!(rabi_sequence(0.5).span, 0.5);
    let members = two_photon_members(900.0, 8);
    assert_eq!(members.len(), 8);
    for m in &members {
        m.validate().unwrap();
        assert!(m.delta_two_photon.abs() <= std::f64::consts::PI);
    }
}

#[test]
fn batch_fixture_agrees_with_single_runs() {
    let seq = stirap_sequence(1.2, 1.8);
    let members = two_photon_members(900.0, 3);
    let dt = default_time_step(&members[0], &seq);
    let rho = DensityMatrix::basis(0);
    let batch = propagate_batch(&rho, &seq, &members, &[1.0, 1.8], dt).unwrap();
    for (m, traj) in members.iter().zip(&batch) {
        assert_eq!(&propagate(&rho, &seq, m, &[1.0, 1.8], dt).unwrap(), traj);
    }
}
