//! Analytic gradients against central finite differences, in 64-bit.

mod common;

use common::oracles;

#[test]
fn focal_loss_gradient_matches_finite_differences() {
    oracles::focal_gradient().unwrap();
}

#[test]
fn l1_loss_gradients_match_finite_differences() {
    oracles::l1_gradients().unwrap();
}

#[test]
fn network_gradient_matches_finite_differences() {
    oracles::network_gradient().unwrap();
}

#[test]
fn kink_free_coordinates_agree_at_two_steps() {
    // A smaller step must not change the verdict on smooth coordinates.
    let check = oracles::check_network_gradient(8, 1e-4, 1e-2);
    assert_eq!(check.checked.len(), 8);
    for (idx, a, n, e) in check.checked {
        assert!(e < 1e-2, "param {idx}: analytic {a} numeric {n} rel {e}");
    }
}
