#![allow(dead_code)]

use proptest::prelude::*;
use randcert::bell::{Behavior, Scenario};
use randcert::quantum::two_qubit_behavior;
use std::f64::consts::{FRAC_PI_4, PI};

/// Planar two-qubit statistics mixed with white noise.
pub fn noisy_quantum(theta: f64, angles: [f64; 4], visibility: f64) -> Behavior {
    let q = two_qubit_behavior(theta, &angles[..2], &angles[2..]).unwrap();
    q.mix(&Behavior::uniform(Scenario::chsh()), visibility).unwrap()
}

pub fn quantum_behavior() -> impl Strategy<Value = Behavior> {
    (0.05..FRAC_PI_4, prop::array::uniform4(-PI..PI), 0.7..1.0f64)
        .prop_map(|(theta, angles, vis)| noisy_quantum(theta, angles, vis))
}
