//! Noisy execution of Clifford circuits.
//!
//! A single tableau run fixes the ideal outcome of every measurement. Shots
//! then only track how sampled Pauli errors move through the circuit: a
//! measurement flips when the frame carries an `X` component on the measured
//! qubit. Frames are bit-sliced, 64 shots per word, and each shot draws from
//! its own counter-addressed random stream, so results do not depend on how
//! shots are scheduled across threads.

pub mod frame;
pub mod statevector;
pub mod tableau;

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{CliffordCircuit, Gate};
use crate::error::Result;
use crate::noise::{ErrorEvent, NoiseModel, NoiseProgram, ReadoutChannel};
use crate::rng::{self, Domain};
use crate::topology::{CouplingMap, QubitId};

pub use frame::{frame_propagate, PauliFrame};
pub use statevector::statevector_oracle;
pub use tableau::Tableau;

use frame::FrameBatch;

/// Outcome of the noiseless tableau run.
#[derive(Clone, Debug, PartialEq)]
pub struct Reference {
    /// Ideal bit per classical bit (unwritten bits read 0).
    pub ideal: Vec<bool>,
    /// Whether each measurement outcome was determined by the state.
    pub deterministic: Vec<bool>,
    /// Measured qubit per classical bit.
    pub qubit: Vec<Option<QubitId>>,
    /// Fraction of pre-measurement layers the qubit spent in a Z eigenstate.
    pub exposure: Vec<f64>,
    /// Layer index of each classical bit's measurement.
    pub measured_at: Vec<usize>,
    /// Per layer, which qubits are in a Z eigenstate after its gates.
    pub z_eigen: Vec<Vec<bool>>,
}

impl Reference {
    pub fn all_deterministic(&self) -> bool {
        self.deterministic.iter().all(|&d| d)
    }
}

fn reference_with_coin<R: Rng + ?Sized>(circuit: &CliffordCircuit, rng: &mut R) -> Reference {
    let n = circuit.n_qubits();
    let nc = circuit.n_clbits();
    let mut t = Tableau::new(n);
    let mut ideal = vec![false; nc];
    let mut deterministic = vec![true; nc];
    let mut qubit = vec![None; nc];
    let mut exposure = vec![1.0; nc];
    let mut z_layers = vec![0usize; n];
    let mut measured_at = vec![0; nc];
    let mut z_eigen = Vec::with_capacity(circuit.depth());
    for (li, layer) in circuit.layers().iter().enumerate() {
        for g in layer.gates() {
            if let Gate::Measure { qubit: q, clbit } = *g {
                let (b, det) = t.measure(q.0, rng);
                ideal[clbit] = b;
                deterministic[clbit] = det;
                qubit[clbit] = Some(q);
                measured_at[clbit] = li;
                if li > 0 {
                    exposure[clbit] = z_layers[q.0] as f64 / li as f64;
                }
            } else {
                t.apply(g);
            }
        }
        let mask = t.z_deterministic_mask();
        for (q, &det) in mask.iter().enumerate() {
            z_layers[q] += det as usize;
        }
        z_eigen.push(mask);
    }
    Reference {
        ideal,
        deterministic,
        qubit,
        exposure,
        measured_at,
        z_eigen,
    }
}

/// Noiseless tableau run. Random outcomes use a fixed fair coin and are flagged.
pub fn reference_run(circuit: &CliffordCircuit) -> Reference {
    let mut coin = rng::stream(0, Domain::Reference, 0);
    reference_with_coin(circuit, &mut coin)
}

/// Exact outcome distribution of `circuit` with `injected` Paulis, indexed
/// like [`statevector_oracle`], computed on the tableau and frame path: every
/// branch of the random measurement outcomes is enumerated and the frame's
/// `X` component flips the measured bit.
pub fn exact_distribution(circuit: &CliffordCircuit, injected: &[ErrorEvent]) -> Result<Vec<f64>> {
    let nc = circuit.n_clbits();
    if nc > 20 {
        return Err(crate::error::Error::TooManyQubits { n: nc, max: 20 });
    }
    let n = circuit.n_qubits();
    let mut frame = PauliFrame::new(n);
    let mut flips = 0usize;
    for (li, layer) in circuit.layers().iter().enumerate() {
        for g in layer.gates() {
            if let Gate::Measure { qubit, clbit } = *g {
                flips |= (frame.x[qubit.0] as usize) << clbit;
            } else {
                frame = frame_propagate(frame, g);
            }
        }
        for e in injected.iter().filter(|e| e.layer == li) {
            frame.inject(e.qubit.0, e.pauli);
        }
    }
    let mut dist = vec![0.0; 1 << nc];
    // Depth-first over forced coin sequences.
    let mut stack: Vec<Vec<bool>> = vec![Vec::new()];
    while let Some(coins) = stack.pop() {
        let mut t = Tableau::new(n);
        let mut used = 0;
        let mut key = 0usize;
        let mut branched = false;
        'run: for layer in circuit.layers() {
            for g in layer.gates() {
                if let Gate::Measure { qubit, clbit } = *g {
                    let forced = coins.get(used).copied();
                    let (b, det) = t.measure_forced(qubit.0, forced.unwrap_or(false));
                    if !det {
                        if forced.is_none() {
                            for c in [false, true] {
                                let mut next = coins.clone();
                                next.push(c);
                                stack.push(next);
                            }
                            branched = true;
                            break 'run;
                        }
                        used += 1;
                    }
                    key |= (b as usize) << clbit;
                } else {
                    t.apply(g);
                }
            }
        }
        if !branched {
            dist[key ^ flips] += 0.5f64.powi(used as i32);
        }
    }
    Ok(dist)
}

/// Counts for one classical bit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClbitCounts {
    pub shots: u64,
    pub flips: u64,
    pub ones: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotBatch {
    pub n_shots: u64,
    pub master_seed: u64,
    pub depth: usize,
    pub counts: Vec<ClbitCounts>,
    /// Ideal bit per classical bit from the reference run.
    pub ideal: Vec<bool>,
    pub qubit: Vec<Option<QubitId>>,
}

impl ShotBatch {
    pub fn flip_rate(&self, clbit: usize) -> f64 {
        let c = self.counts[clbit];
        c.flips as f64 / c.shots.max(1) as f64
    }

    /// `{clbit: {shots, flips, ones}}`.
    pub fn to_json(&self) -> String {
        let map: BTreeMap<String, ClbitCounts> = self
            .counts
            .iter()
            .enumerate()
            .map(|(i, c)| (i.to_string(), *c))
            .collect();
        serde_json::to_string_pretty(&map).expect("counts serialise")
    }
}

fn merge(mut a: Vec<ClbitCounts>, b: Vec<ClbitCounts>) -> Vec<ClbitCounts> {
    for (x, y) in a.iter_mut().zip(b) {
        x.shots += y.shots;
        x.flips += y.flips;
        x.ones += y.ones;
    }
    a
}

struct Prepared<'a> {
    circuit: &'a CliffordCircuit,
    program: NoiseProgram,
    reference: Reference,
    channels: Vec<ReadoutChannel>,
    measured: Vec<usize>,
}

impl Prepared<'_> {
    fn record(&self, counts: &mut [ClbitCounts], clbit: usize, bit: bool) {
        let c = &mut counts[clbit];
        c.shots += 1;
        c.ones += bit as u64;
        c.flips += (bit != self.reference.ideal[clbit]) as u64;
    }

    fn chunk_fast(&self, master_seed: u64, first: u64, len: usize) -> Vec<ClbitCounts> {
        let n = self.circuit.n_qubits();
        let mut counts = vec![ClbitCounts::default(); self.circuit.n_clbits()];
        let mut rngs: Vec<_> = (0..len)
            .map(|s| rng::stream(master_seed, Domain::Shot, first + s as u64))
            .collect();
        let mut by_layer: Vec<Vec<(ErrorEvent, u64)>> = vec![Vec::new(); self.program.depth()];
        for (s, r) in rngs.iter_mut().enumerate() {
            for e in self.program.sample(r) {
                by_layer[e.layer].push((e, 1u64 << s));
            }
        }
        let mut frames = FrameBatch::new(n);
        let mut flip_words = vec![0u64; self.circuit.n_clbits()];
        for (li, layer) in self.circuit.layers().iter().enumerate() {
            for g in layer.gates() {
                if let Gate::Measure { qubit, clbit } = *g {
                    flip_words[clbit] = frames.x[qubit.0];
                } else {
                    frames.apply(g);
                }
            }
            for (e, mask) in &by_layer[li] {
                frames.inject(e.qubit.0, e.pauli, *mask);
            }
        }
        for (s, r) in rngs.iter_mut().enumerate() {
            for &c in &self.measured {
                let frame_flip = flip_words[c] >> s & 1 == 1;
                let bit = self.channels[c].apply(self.reference.ideal[c] ^ frame_flip, r);
                self.record(&mut counts, c, bit);
            }
        }
        counts
    }

    fn shot_slow(&self, master_seed: u64, shot: u64, counts: &mut [ClbitCounts]) {
        let mut r = rng::stream(master_seed, Domain::Shot, shot);
        let events = self.program.sample(&mut r);
        let mut t = Tableau::new(self.circuit.n_qubits());
        let mut raw = vec![false; self.circuit.n_clbits()];
        for (li, layer) in self.circuit.layers().iter().enumerate() {
            for g in layer.gates() {
                if let Gate::Measure { qubit, clbit } = *g {
                    raw[clbit] = t.measure(qubit.0, &mut r).0;
                } else {
                    t.apply(g);
                }
            }
            for e in events.iter().filter(|e| e.layer == li) {
                t.apply_pauli(e.qubit.0, e.pauli);
            }
        }
        for &c in &self.measured {
            let bit = self.channels[c].apply(raw[c], &mut r);
            self.record(counts, c, bit);
        }
    }
}

const CHUNK: usize = 64;

/// Per classical bit, the CNOTs before its measurement that had an endpoint
/// one hop from the measured qubit (itself not an endpoint) while the qubit
/// was in a Z eigenstate.
fn drive_counts(circuit: &CliffordCircuit, map: &CouplingMap, reference: &Reference) -> Vec<usize> {
    let n = circuit.n_qubits();
    let mut before = Vec::with_capacity(circuit.depth() + 1);
    let mut acc = vec![0usize; n];
    before.push(acc.clone());
    for (layer, mask) in circuit.layers().iter().zip(&reference.z_eigen) {
        for g in layer.gates() {
            if let Gate::Cnot { control, target } = *g {
                let mut hit = map.neighbors(control).to_vec();
                hit.extend_from_slice(map.neighbors(target));
                hit.sort_unstable();
                hit.dedup();
                for q in hit {
                    if q != control.0 && q != target.0 && q < n && mask[q] {
                        acc[q] += 1;
                    }
                }
            }
        }
        before.push(acc.clone());
    }
    (0..circuit.n_clbits())
        .map(|c| match reference.qubit[c] {
            Some(q) => before[reference.measured_at[c]][q.0],
            None => 0,
        })
        .collect()
}

/// Runs `n_shots` noisy shots and aggregates per-clbit counts.
///
/// Bit-identical for fixed inputs regardless of the thread count. Circuits
/// with random reference outcomes fall back to a full tableau per shot.
pub fn run_shots(
    circuit: &CliffordCircuit,
    map: &CouplingMap,
    model: &NoiseModel,
    n_shots: u64,
    master_seed: u64,
) -> Result<ShotBatch> {
    let program = NoiseProgram::compile(circuit, map, model)?;
    let reference = reference_run(circuit);
    let jitter = model.jitter();
    let driven = drive_counts(circuit, map, &reference);
    let channels: Vec<ReadoutChannel> = (0..circuit.n_clbits())
        .map(|c| match reference.qubit[c] {
            Some(q) => model.readout_channel(q, jitter[q.0], reference.exposure[c], driven[c]),
            None => ReadoutChannel::default(),
        })
        .collect();
    let measured = (0..circuit.n_clbits())
        .filter(|&c| reference.qubit[c].is_some())
        .collect();
    let prep = Prepared {
        circuit,
        program,
        reference,
        channels,
        measured,
    };
    let empty = vec![ClbitCounts::default(); circuit.n_clbits()];
    let counts = if prep.reference.all_deterministic() {
        let chunks = n_shots.div_ceil(CHUNK as u64);
        (0..chunks)
            .into_par_iter()
            .map(|k| {
                let first = k * CHUNK as u64;
                let len = (n_shots - first).min(CHUNK as u64) as usize;
                prep.chunk_fast(master_seed, first, len)
            })
            .reduce(|| empty.clone(), merge)
    } else {
        (0..n_shots)
            .into_par_iter()
            .fold(
                || empty.clone(),
                |mut acc, s| {
                    prep.shot_slow(master_seed, s, &mut acc);
                    acc
                },
            )
            .reduce(|| empty.clone(), merge)
    };
    Ok(ShotBatch {
        n_shots,
        master_seed,
        depth: circuit.depth(),
        counts,
        ideal: prep.reference.ideal,
        qubit: prep.reference.qubit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseParams;

    fn line(n: usize) -> CouplingMap {
        CouplingMap::new(n, (0..n - 1).map(|i| (i, i + 1))).unwrap()
    }

    #[test]
    fn reference_x_measure() {
        let c = CliffordCircuit::new(1, 1)
            .append_layer([Gate::x(0)])
            .unwrap()
            .append_layer([Gate::measure(0, 0)])
            .unwrap();
        let r = reference_run(&c);
        assert_eq!(r.ideal, vec![true]);
        assert_eq!(r.deterministic, vec![true]);
    }

    #[test]
    fn reference_h_measure_flagged() {
        let c = CliffordCircuit::new(1, 1)
            .append_layer([Gate::h(0)])
            .unwrap()
            .append_layer([Gate::measure(0, 0)])
            .unwrap();
        let r = reference_run(&c);
        assert_eq!(r.deterministic, vec![false]);
        assert_eq!(r.exposure, vec![0.0]);
    }

    #[test]
    fn zero_noise_no_flips() {
        let map = line(3);
        let mut c = CliffordCircuit::new(3, 3);
        c.push_layer([Gate::x(0), Gate::h(2)]).unwrap();
        c.push_layer([Gate::cnot(0, 1), Gate::h(2)]).unwrap();
        c.push_layer((0..3).map(|q| Gate::measure(q, q))).unwrap();
        let b = run_shots(&c, &map, &NoiseModel::zero(3), 1000, 1).unwrap();
        assert!(b.counts.iter().all(|c| c.flips == 0 && c.shots == 1000));
        assert_eq!(b.counts[1].ones, 1000);
    }

    /// Qubit 0 in `|1⟩`, qubit 3 in `|+⟩`, `k` layers of CNOT(1, 2).
    fn driven_line(k: usize) -> CliffordCircuit {
        let mut c = CliffordCircuit::new(4, 2);
        c.push_layer([Gate::x(0), Gate::h(3)]).unwrap();
        for _ in 0..k {
            c.push_layer([Gate::cnot(1, 2)]).unwrap();
        }
        c.push_layer([Gate::h(3)]).unwrap();
        c.push_layer([Gate::measure(0, 0), Gate::measure(3, 1)]).unwrap();
        c
    }

    #[test]
    fn drive_counts_only_z_eigenstate_spectators() {
        let c = driven_line(7);
        assert_eq!(drive_counts(&c, &line(4), &reference_run(&c)), vec![7, 0]);
    }

    #[test]
    fn drive_relaxation_law() {
        let (d, k, shots) = (0.02, 12, 100_000);
        let model = NoiseModel::from_params(
            4,
            &NoiseParams {
                drive_relax: d,
                ..NoiseParams::zero()
            },
        );
        let b = run_shots(&driven_line(k), &line(4), &model, shots, 5).unwrap();
        let expect = 1.0 - (1.0 - d).powi(k as i32);
        let sigma = (expect * (1.0 - expect) / shots as f64).sqrt();
        assert!((b.flip_rate(0) - expect).abs() < 5.0 * sigma);
        assert_eq!(b.counts[1].flips, 0);
        let idle = run_shots(&driven_line(0), &line(4), &model, 1000, 5).unwrap();
        assert_eq!(idle.counts[0].flips, 0);
    }

    fn idle_circuit(n_layers: usize, x_basis: bool) -> CliffordCircuit {
        let mut c = CliffordCircuit::new(2, 1);
        if x_basis {
            c.push_layer([Gate::h(0)]).unwrap();
        }
        for _ in 0..n_layers {
            c.push_layer([Gate::idle(0)]).unwrap();
        }
        if x_basis {
            c.push_layer([Gate::h(0)]).unwrap();
        }
        c.push_layer([Gate::measure(0, 0)]).unwrap();
        c
    }

    #[test]
    fn dephasing_invisible_in_z_basis() {
        let map = line(2);
        let model = NoiseModel::from_params(
            2,
            &NoiseParams {
                idle_dephasing: 0.2,
                ..NoiseParams::zero()
            },
        );
        let b = run_shots(&idle_circuit(10, false), &map, &model, 5000, 3).unwrap();
        assert_eq!(b.counts[0].flips, 0);
    }

    #[test]
    fn dephasing_law_x_basis() {
        let map = line(2);
        let p = 0.05;
        let n = 10;
        let model = NoiseModel::from_params(
            2,
            &NoiseParams {
                idle_dephasing: p,
                ..NoiseParams::zero()
            },
        );
        let shots = 100_000;
        let b = run_shots(&idle_circuit(n, true), &map, &model, shots, 3).unwrap();
        let expect = (1.0 - (1.0 - 2.0 * p).powi(n as i32)) / 2.0;
        let sigma = (expect * (1.0 - expect) / shots as f64).sqrt();
        assert!((b.flip_rate(0) - expect).abs() < 5.0 * sigma);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let map = line(4);
        let model = NoiseModel::from_params(
            4,
            &NoiseParams {
                crosstalk_z: [0.2, 0.1],
                crosstalk_xy: [0.1, 0.05],
                idle_dephasing: 0.01,
                readout: 0.02,
                p_excite: 0.01,
                p_relax: 0.05,
                ..NoiseParams::zero()
            },
        );
        let mut c = CliffordCircuit::new(4, 4);
        c.push_layer([Gate::x(1), Gate::h(3)]).unwrap();
        for _ in 0..5 {
            c.push_layer([Gate::cnot(1, 2), Gate::idle(0)]).unwrap();
        }
        c.push_layer([Gate::h(3)]).unwrap();
        c.push_layer((0..4).map(|q| Gate::measure(q, q))).unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| run_shots(&c, &map, &model, 3000, 42).unwrap());
        let b = four.install(|| run_shots(&c, &map, &model, 3000, 42).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn slow_path_handles_random_outcomes() {
        let map = line(2);
        let c = CliffordCircuit::new(2, 1)
            .append_layer([Gate::h(0)])
            .unwrap()
            .append_layer([Gate::measure(0, 0)])
            .unwrap();
        let b = run_shots(&c, &map, &NoiseModel::zero(2), 4000, 9).unwrap();
        let ones = b.counts[0].ones as f64 / 4000.0;
        assert!((ones - 0.5).abs() < 0.05);
    }

    #[test]
    fn shot_batch_json_shape() {
        let map = line(2);
        let c = idle_circuit(1, false);
        let b = run_shots(&c, &map, &NoiseModel::zero(2), 10, 0).unwrap();
        let v: serde_json::Value = serde_json::from_str(&b.to_json()).unwrap();
        assert_eq!(v["0"]["shots"], 10);
        assert_eq!(v["0"]["flips"], 0);
    }
}
