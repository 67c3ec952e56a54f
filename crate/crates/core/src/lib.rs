//! Simulation laboratory for crosstalk fault injection ("quantum rowhammer")
//! on heavy-hex superconducting devices.
//!
//! The pieces fit together as follows:
//!
//! * [`topology`] builds the coupling graph and hammer neighbourhoods.
//! * [`circuit`] holds layered Clifford circuits.
//! * [`noise`] turns CNOT activity into spectator Pauli errors and fits the
//!   model to measured statistics.
//! * [`sim`] runs shots with a stabilizer tableau and bit-sliced Pauli frames.
//! * [`attack`] builds hammer, benign and sweep circuits.
//! * [`analysis`] reduces shots to flip tables, statistics and exports.
//! * [`covert`] runs the prime-and-probe channel.
//!
//! ```
//! use qrowhammer::attack::{build_hammer_circuit, Basis, HammerSpec};
//! use qrowhammer::noise::NoiseModel;
//! use qrowhammer::sim::run_shots;
//! use qrowhammer::topology::{generate_heavy_hex_127, QubitId};
//!
//! let map = generate_heavy_hex_127();
//! let spec = HammerSpec { center: QubitId(54), initial_state: 0, basis: Basis::X, rounds: 20, shots: 2000 };
//! let circuit = build_hammer_circuit(&map, &spec).unwrap();
//! let batch = run_shots(&circuit, &map, &NoiseModel::default_calibrated(), spec.shots, 7).unwrap();
//! assert!(batch.flip_rate(0) > 0.3);
//! ```

pub mod analysis;
pub mod attack;
pub mod circuit;
pub mod covert;
pub mod defaults;
pub mod error;
pub mod noise;
pub mod rng;
pub mod sim;
pub mod topology;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/topology.md")]
    pub struct Topology;
    #[doc = include_str!("../../../book/src/circuits.md")]
    pub struct Circuits;
    #[doc = include_str!("../../../book/src/noise.md")]
    pub struct Noise;
    #[doc = include_str!("../../../book/src/simulation.md")]
    pub struct Simulation;
    #[doc = include_str!("../../../book/src/attack.md")]
    pub struct Attack;
    #[doc = include_str!("../../../book/src/analysis.md")]
    pub struct Analysis;
    #[doc = include_str!("../../../book/src/covert.md")]
    pub struct Covert;
}
