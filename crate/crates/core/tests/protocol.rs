mod common;

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use common::*;
use num_bigint::BigInt;
use ppls_core::oracle::gd_fixedpoint_with;
use ppls_core::protocol::{
    leakage_count, ExactRational, InspectEvent, Party, PadMode, TestHooks,
};
use ppls_core::transport::MsgType;
use ppls_core::Error;

fn toy() -> Instance {
    let mut rng = seeded(7);
    let data = random_data(&mut rng, 2, 20, 0.1, 30);
    Instance { data, m1: 12, config: config("0.1", 30, 4, TEST_KEYBITS, bounds("1", "5", "10")) }
}

#[test]
fn encrypted_run_matches_fixed_point_oracle() {
    let inst = toy();
    let report = inst.run(1).unwrap();
    let expected = inst.oracle();
    assert_eq!(report.bob.theta, expected);
    assert_eq!(report.alice.theta, expected);
    assert!(report.audit.is_clean(), "{:?}", report.audit.violations);
    assert_eq!(report.bob.params, inst.params());
}

#[test]
fn different_seeds_same_theta() {
    let inst = toy();
    let a = inst.run(2).unwrap();
    let b = inst.run(3).unwrap();
    assert_eq!(a.bob.theta, b.bob.theta);
    assert_ne!(a.bob.transcript, Default::default());
}

#[test]
fn zero_iterations_reveal_theta0() {
    let mut inst = toy();
    inst.config.iterations = 0;
    inst.config.theta0 = ppls_core::protocol::Theta0::Values(vec![rational("0.5"), rational("-1.25")]);
    let report = inst.run(4).unwrap();
    let m: Vec<BigInt> = mantissas(&report.alice.theta);
    assert_eq!(m, vec![BigInt::from(5000), BigInt::from(-12500)]);
    assert_eq!(report.bob.theta, report.alice.theta);
    assert!(report.bob.round_counts.is_empty());
}

/// In zero-pad mode the masked θ Alice sees is θ itself, so the trace can
/// be compared iteration by iteration with the oracle. Bob's base plus
/// Alice's accumulator must equal θ exactly at every step.
#[test]
fn per_iteration_invariants() {
    let inst = toy();
    let trace = Arc::new(Mutex::new(Vec::new()));
    let hooks = TestHooks { pad_mode: PadMode::Zero, inspector: Some(trace.clone()), ..Default::default() };
    let report = inst.run_with(5, hooks.clone(), hooks).unwrap();
    assert_eq!(report.bob.theta, inst.oracle());

    let mut oracle = Vec::new();
    gd_fixedpoint_with(&inst.data, &inst.params(), |_, t| oracle.push(t.to_vec())).unwrap();

    let events = trace.lock().unwrap();
    let bases: Vec<_> = events
        .iter()
        .filter_map(|e| match e {
            InspectEvent::Bob { iteration, base, .. } => Some((*iteration, base.clone())),
            _ => None,
        })
        .collect();
    let alices: Vec<_> = events
        .iter()
        .filter_map(|e| match e {
            InspectEvent::Alice { iteration, accumulator, masked_theta, .. } => {
                Some((*iteration, accumulator.clone(), masked_theta.clone()))
            }
            _ => None,
        })
        .collect();
    assert_eq!(bases.len(), 30);
    assert_eq!(alices.len(), 30);
    for ((i, base), (j, acc, masked)) in bases.iter().zip(&alices) {
        assert_eq!(i, j);
        let i = *i as usize;
        assert_eq!(masked, &oracle[i], "masked theta at iteration {i}");
        for k in 0..masked.len() {
            let sum = &base[k] + &acc[k];
            assert_eq!(sum, ExactRational::from_integer(oracle[i][k].clone()), "base + accumulator at {i}");
        }
    }
}

#[test]
fn injected_pads_are_used_as_given() {
    let inst = toy();
    // Bob's first pads: sub-protocol pad, then θ pad.
    let pads = VecDeque::from(vec![vec![BigInt::from(11), BigInt::from(13)], vec![BigInt::from(17), BigInt::from(19)]]);
    let trace = Arc::new(Mutex::new(Vec::new()));
    let bob = TestHooks { pad_mode: PadMode::Injected(pads), inspector: Some(trace.clone()), ..Default::default() };
    let report = inst.run_with(6, bob, TestHooks::default()).unwrap();
    assert_eq!(report.bob.theta, inst.oracle());
    let events = trace.lock().unwrap();
    let InspectEvent::Bob { theta_pad, .. } = &events[0] else { panic!("no Bob event") };
    assert_eq!(theta_pad, &vec![BigInt::from(17), BigInt::from(19)]);
}

#[test]
fn five_messages_per_iteration() {
    let inst = toy();
    let report = inst.run(8).unwrap();
    for i in 1..=30 {
        assert_eq!(report.meter.by_iteration(i).messages, 5, "iteration {i}");
    }
    let per_iter = report.meter.by_iteration(1).bytes;
    assert!((2..=30).all(|i| report.meter.by_iteration(i).bytes == per_iter));
    for t in [MsgType::MaskedGrad, MsgType::GramA, MsgType::SubEncProd, MsgType::SubPlainProd, MsgType::MaskedTheta] {
        assert_eq!(report.meter.by_type(t).messages, 30);
    }
    assert_eq!(report.meter.by_type(MsgType::RevealPad).messages, 2);
}

#[test]
fn negotiation_failure_reported() {
    let inst = toy();
    let (bob, mut alice) = inst.setups(9, TestHooks::default(), TestHooks::default());
    alice.config.alpha = rational("0.05");
    let err = ppls_core::protocol::run_local(bob, alice, TIMEOUT).unwrap_err();
    assert!(matches!(err, Error::NegotiationFailure(_)), "{err:?}");
}

#[test]
fn pad_reuse_is_an_exposure_violation() {
    let inst = toy();
    let alice = TestHooks { reuse_gradient_pad_at: Some(3), ..Default::default() };
    let err = inst.run_with(10, TestHooks::default(), alice).unwrap_err();
    assert!(matches!(err, Error::ExposureViolation(_)), "{err:?}");
}

#[test]
fn raw_leak_is_an_exposure_violation() {
    let inst = toy();
    let bob = TestHooks { leak_raw_row_at: Some(2), ..Default::default() };
    let err = inst.run_with(11, bob, TestHooks::default()).unwrap_err();
    assert!(matches!(err, Error::ExposureViolation(_)), "{err:?}");
}

#[test]
fn out_of_bounds_data_rejected_at_setup() {
    let mut inst = toy();
    inst.config.bounds = bounds("0.5", "5", "10");
    let err = inst.run(12).unwrap_err();
    assert!(matches!(err, Error::CapacityOverflow(_)), "{err:?}");
}

#[test]
fn theta_leaving_its_bound_aborts_mid_run() {
    let mut inst = toy();
    inst.config.bounds = bounds("1", "5", "0.01");
    let err = inst.run(13).unwrap_err();
    assert!(matches!(err, Error::CapacityOverflow(_)), "{err:?}");
}

#[test]
fn tiny_key_rejected() {
    let mut inst = toy();
    inst.config.keybits = 64;
    inst.config.scale_plan = ppls_core::fixedpoint::ScalePlan::new(8, 8);
    let err = inst.run(14).unwrap_err();
    assert!(matches!(err, Error::KeyTooSmall(_)), "{err:?}");
}

#[test]
fn leakage_schema() {
    let inst = toy();
    let report = inst.run(15).unwrap();
    let t = report.transcript();
    let alice = leakage_count(&t, Party::Alice);
    assert_eq!(alice.equations, 2);
    assert_eq!(alice.unknowns, 2 * 2 + 2 * 2);
}
