//! Committed defaults produced by a calibration run.

use serde::Deserialize;

#[derive(Clone, Debug, Deserialize)]
struct Defaults {
    rounds: usize,
}

const DEFAULTS_JSON: &str = include_str!("../data/defaults.json");

fn load() -> Defaults {
    serde_json::from_str(DEFAULTS_JSON).expect("bundled defaults are valid")
}

/// Hammer rounds per circuit: the smallest count for which the calibrated
/// model's X-basis hammered flip rate is saturated.
pub fn rounds() -> usize {
    load().rounds
}

/// Shots per circuit used by the sweep and the hammer experiments.
pub const SHOTS: u64 = 20_000;

/// Cycles in the default sweep.
pub const N_CYCLES: usize = 40;
