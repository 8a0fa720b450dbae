//! Interpolation baselines against brute-force oracles.

mod support;

use support::oracles;

#[test]
fn idw_matches_brute_force() {
    oracles::idw_matches_brute_force();
}

#[test]
fn nearest_matches_brute_force() {
    oracles::nearest_matches_brute_force();
}
