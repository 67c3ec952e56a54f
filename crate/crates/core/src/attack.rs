//! Hammer, benign and sweep circuit builders, plus dynamical decoupling.
//!
//! A hammer circuit leaves one connector qubit (the *center*) idle while the
//! six qubits around it are excited and then driven by alternating rounds of
//! CNOTs. Each round is one layer holding three parallel CNOTs:
//!
//! * odd rounds: `flank[i][0] → direct[i]` for both sides, plus
//!   `flank[0][1] → flank[1][1]`;
//! * even rounds: `direct[i] → flank[i][1]` for both sides, plus
//!   `flank[0][0] → flank[1][0]`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::circuit::{CliffordCircuit, Gate};
use crate::error::{Error, Result};
use crate::topology::{hammer_neighborhood, CouplingMap, Neighborhood, QubitId};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    #[default]
    Z,
    X,
}

impl std::str::FromStr for Basis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Z" | "z" => Ok(Basis::Z),
            "X" | "x" => Ok(Basis::X),
            other => Err(Error::InvalidSpec(format!("unknown basis {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HammerSpec {
    pub center: QubitId,
    /// 0 or 1. In the X basis 0 means `|+⟩` and 1 means `|−⟩`.
    pub initial_state: u8,
    #[serde(default)]
    pub basis: Basis,
    pub rounds: usize,
    pub shots: u64,
}

impl HammerSpec {
    fn check(&self) -> Result<()> {
        if self.initial_state > 1 {
            return Err(Error::InvalidSpec(format!(
                "initial_state must be 0 or 1, got {}",
                self.initial_state
            )));
        }
        if self.rounds < 1 {
            return Err(Error::InvalidSpec("rounds must be at least 1".into()));
        }
        Ok(())
    }
}

fn default_cycles() -> usize {
    40
}

fn default_center_state() -> u8 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Centers hammered together in one cycle; groups are used round-robin.
    /// Empty means every cycle is benign.
    pub center_groups: Vec<Vec<QubitId>>,
    #[serde(default = "default_cycles")]
    pub n_cycles: usize,
    pub rounds: usize,
    pub shots: u64,
    /// Computational state the centers are prepared in on hammer cycles.
    #[serde(default = "default_center_state")]
    pub center_state: u8,
}

impl SweepSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep spec serialises")
    }

    /// Whether `cycle` hammers. Even cycles do, odd cycles are benign.
    pub fn is_hammer_cycle(cycle: usize) -> bool {
        cycle % 2 == 0
    }

    /// Centers hammered in `cycle`, empty for benign cycles.
    pub fn centers_in(&self, cycle: usize) -> &[QubitId] {
        if !Self::is_hammer_cycle(cycle) || self.center_groups.is_empty() {
            return &[];
        }
        &self.center_groups[(cycle / 2) % self.center_groups.len()]
    }
}

/// One cycle of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepCycle {
    pub cycle: usize,
    pub hammered: Vec<QubitId>,
    pub circuit: CliffordCircuit,
}

/// The noiseless state of the six driven neighbors repeats every
/// `DRIVE_PERIOD` rounds.
pub const DRIVE_PERIOD: usize = 8;

/// Round counts congruent to this (mod [`DRIVE_PERIOD`]) leave one direct
/// neighbor and one flank in `|1⟩`, the rest in `|0⟩`. Relaxation then
/// lifts driven qubits evenly instead of favouring one distance.
pub const DRIVE_PHASE: usize = 6;

/// Layers between state preparation and readout: the X burst then `rounds`
/// CNOT layers. Centers get IDLE in every one of them.
pub(crate) fn drive_layers(nbs: &[Neighborhood], rounds: usize) -> Vec<Vec<Gate>> {
    let mut layers = Vec::with_capacity(rounds + 1);
    let mut burst = Vec::new();
    for nb in nbs {
        burst.push(Gate::Idle(nb.center));
        burst.extend(nb.driven().into_iter().map(Gate::X));
    }
    layers.push(burst);
    for r in 1..=rounds {
        let mut layer = Vec::new();
        for nb in nbs {
            layer.push(Gate::Idle(nb.center));
            layer.extend(round_cnots(nb, r));
        }
        layers.push(layer);
    }
    layers
}

/// The three CNOTs of round `r` (1-based).
pub(crate) fn round_cnots(nb: &Neighborhood, r: usize) -> [Gate; 3] {
    let [d0, d1] = nb.direct;
    let f = &nb.flanks;
    let cnot = |c: QubitId, t: QubitId| Gate::Cnot {
        control: c,
        target: t,
    };
    if r % 2 == 1 {
        [cnot(f[0][0], d0), cnot(f[1][0], d1), cnot(f[0][1], f[1][1])]
    } else {
        [cnot(d0, f[0][1]), cnot(d1, f[1][1]), cnot(f[0][0], f[1][0])]
    }
}

fn prep_gates(q: QubitId, state: u8, basis: Basis) -> (Gate, Option<Gate>) {
    let first = if state == 1 { Gate::X(q) } else { Gate::Idle(q) };
    let second = (basis == Basis::X).then_some(Gate::H(q));
    (first, second)
}

/// Single-target hammer circuit measuring the center into clbit 0.
///
/// Layout: preparation (X or IDLE), optional H, X burst, `rounds` CNOT
/// layers, optional H, MEASURE. Width is the whole device.
pub fn build_hammer_circuit(map: &CouplingMap, spec: &HammerSpec) -> Result<CliffordCircuit> {
    spec.check()?;
    let nb = hammer_neighborhood(map, spec.center)?;
    let mut c = CliffordCircuit::new(map.n(), 1);
    let (prep, rotate) = prep_gates(spec.center, spec.initial_state, spec.basis);
    c.push_layer([prep])?;
    if let Some(h) = rotate {
        c.push_layer([h])?;
    }
    for layer in drive_layers(std::slice::from_ref(&nb), spec.rounds) {
        c.push_layer(layer)?;
    }
    if let Some(h) = rotate {
        c.push_layer([h])?;
    }
    c.push_layer([Gate::Measure {
        qubit: spec.center,
        clbit: 0,
    }])?;
    Ok(c)
}

/// Baseline for [`build_hammer_circuit`]: same preparation, basis changes
/// and depth, with the neighbourhood left alone.
pub fn build_baseline_circuit(map: &CouplingMap, spec: &HammerSpec) -> Result<CliffordCircuit> {
    spec.check()?;
    map.check_qubit(spec.center)?;
    let mut c = CliffordCircuit::new(map.n(), 1);
    let (prep, rotate) = prep_gates(spec.center, spec.initial_state, spec.basis);
    c.push_layer([prep])?;
    if let Some(h) = rotate {
        c.push_layer([h])?;
    }
    for _ in 0..=spec.rounds {
        c.push_layer([Gate::Idle(spec.center)])?;
    }
    if let Some(h) = rotate {
        c.push_layer([h])?;
    }
    c.push_layer([Gate::Measure {
        qubit: spec.center,
        clbit: 0,
    }])?;
    Ok(c)
}

/// All-idle circuit of the given total depth (including the final MEASURE
/// layer). With `measure_all` every qubit is read into the clbit of the same
/// index; otherwise only `center` is read, into clbit 0.
pub fn build_benign_circuit(
    map: &CouplingMap,
    depth: usize,
    measure_all: bool,
    center: QubitId,
) -> Result<CliffordCircuit> {
    if depth < 1 {
        return Err(Error::InvalidSpec("depth must be at least 1".into()));
    }
    let n = map.n();
    let targets: Vec<QubitId> = if measure_all {
        (0..n).map(QubitId).collect()
    } else {
        map.check_qubit(center)?;
        vec![center]
    };
    let mut c = CliffordCircuit::new(n, targets.len());
    for _ in 1..depth {
        c.push_layer(targets.iter().map(|&q| Gate::Idle(q)))?;
    }
    c.push_layer(targets.iter().enumerate().map(|(i, &q)| Gate::Measure {
        qubit: q,
        clbit: if measure_all { q.0 } else { i },
    }))?;
    Ok(c)
}

/// Checks that neighbourhoods share no qubit.
pub fn check_disjoint(nbs: &[Neighborhood]) -> Result<()> {
    for (i, a) in nbs.iter().enumerate() {
        let am: BTreeSet<QubitId> = a.members().into_iter().collect();
        for b in &nbs[i + 1..] {
            let shared: Vec<QubitId> = b.members().into_iter().filter(|q| am.contains(q)).collect();
            if !shared.is_empty() {
                return Err(Error::OverlappingNeighborhoods {
                    a: a.center,
                    b: b.center,
                    shared,
                });
            }
        }
    }
    Ok(())
}

/// Circuits for every cycle of a sweep. Every cycle measures every qubit into
/// the clbit of the same index and has the same depth.
pub fn build_sweep(map: &CouplingMap, spec: &SweepSpec) -> Result<Vec<SweepCycle>> {
    if spec.rounds < 1 {
        return Err(Error::InvalidSpec("rounds must be at least 1".into()));
    }
    if spec.center_state > 1 {
        return Err(Error::InvalidSpec("center_state must be 0 or 1".into()));
    }
    // No groups at all is a benign-only sweep.
    if spec.center_groups.iter().any(|g| g.is_empty()) {
        return Err(Error::InvalidSpec("center groups must be non-empty".into()));
    }
    let mut group_nbs = Vec::with_capacity(spec.center_groups.len());
    for g in &spec.center_groups {
        let nbs = g
            .iter()
            .map(|&c| hammer_neighborhood(map, c))
            .collect::<Result<Vec<_>>>()?;
        check_disjoint(&nbs)?;
        group_nbs.push(nbs);
    }
    let n = map.n();
    let depth = spec.rounds + 3;
    let measure_all: Vec<Gate> = (0..n).map(|q| Gate::measure(q, q)).collect();
    let mut out = Vec::with_capacity(spec.n_cycles);
    for cycle in 0..spec.n_cycles {
        let hammered = spec.centers_in(cycle).to_vec();
        let circuit = if hammered.is_empty() {
            build_benign_circuit(map, depth, true, QubitId(0))?
        } else {
            let nbs = &group_nbs[(cycle / 2) % group_nbs.len()];
            let mut c = CliffordCircuit::new(n, n);
            c.push_layer(
                hammered
                    .iter()
                    .map(|&q| prep_gates(q, spec.center_state, Basis::Z).0),
            )?;
            for layer in drive_layers(nbs, spec.rounds) {
                c.push_layer(layer)?;
            }
            c.push_layer(measure_all.iter().copied())?;
            c
        };
        out.push(SweepCycle {
            cycle,
            hammered,
            circuit,
        });
    }
    Ok(out)
}

/// Replaces consecutive IDLE slots of each protected qubit with `X`, `X`
/// pairs. An odd leftover slot stays IDLE, so the logical action is unchanged.
pub fn insert_dd(circuit: &CliffordCircuit, protected: &[QubitId]) -> Result<CliffordCircuit> {
    let n = circuit.n_qubits();
    let layers = circuit.layers();
    let mut gates: Vec<Vec<Gate>> = layers.iter().map(|l| l.gates().to_vec()).collect();
    for &q in protected {
        if q.0 >= n {
            return Err(Error::QubitOutOfRange { qubit: q.0, n });
        }
        let idle: Vec<bool> = layers
            .iter()
            .map(|l| matches!(l.gate_on(q), Some(Gate::Idle(_))))
            .collect();
        if !idle.iter().any(|&b| b) {
            let layer = layers
                .iter()
                .position(|l| l.gate_on(q).is_some())
                .unwrap_or(0);
            return Err(Error::NotIdle { qubit: q, layer });
        }
        let mut li = 0;
        while li < idle.len() {
            if idle[li] && li + 1 < idle.len() && idle[li + 1] {
                for k in [li, li + 1] {
                    for g in gates[k].iter_mut() {
                        if *g == Gate::Idle(q) {
                            *g = Gate::X(q);
                        }
                    }
                }
                li += 2;
            } else {
                li += 1;
            }
        }
    }
    let mut out = CliffordCircuit::new(n, circuit.n_clbits());
    for g in gates {
        out.push_layer(g)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::GateKind;
    use crate::sim::reference_run;
    use crate::topology::generate_heavy_hex_127;

    fn spec(center: usize, state: u8, basis: Basis, rounds: usize) -> HammerSpec {
        HammerSpec {
            center: QubitId(center),
            initial_state: state,
            basis,
            rounds,
            shots: 100,
        }
    }

    #[test]
    fn one_round_layout() {
        let map = generate_heavy_hex_127();
        let c = build_hammer_circuit(&map, &spec(54, 0, Basis::Z, 1)).unwrap();
        let s = c.stats();
        assert_eq!(s.depth, 4);
        assert_eq!(s.count(GateKind::X), 6);
        assert_eq!(s.count(GateKind::Cnot), 3);
        assert_eq!(s.count(GateKind::Measure), 1);
    }

    #[test]
    fn x_basis_adds_two_h_layers() {
        let map = generate_heavy_hex_127();
        for rounds in [1, 2, 7] {
            let z = build_hammer_circuit(&map, &spec(54, 0, Basis::Z, rounds)).unwrap();
            let x = build_hammer_circuit(&map, &spec(54, 0, Basis::X, rounds)).unwrap();
            assert_eq!(x.depth(), z.depth() + 2);
            assert_eq!(x.stats().count(GateKind::H), 2);
            assert_eq!(z.stats().count(GateKind::Cnot), 3 * rounds);
        }
    }

    #[test]
    fn center_only_idles() {
        let map = generate_heavy_hex_127();
        let c = build_hammer_circuit(&map, &spec(54, 1, Basis::Z, 10)).unwrap();
        let center = QubitId(54);
        for l in &c.layers()[1..c.depth() - 1] {
            assert_eq!(l.gate_on(center), Some(&Gate::Idle(center)));
        }
        assert!(reference_run(&c).ideal[0]);
    }

    #[test]
    fn cnots_stay_inside_neighbourhood() {
        let map = generate_heavy_hex_127();
        let nb = hammer_neighborhood(&map, QubitId(54)).unwrap();
        let members: BTreeSet<_> = nb.members().into_iter().collect();
        let c = build_hammer_circuit(&map, &spec(54, 0, Basis::Z, 4)).unwrap();
        for l in c.layers() {
            for g in l.gates() {
                if let Gate::Cnot { control, target } = *g {
                    assert!(members.contains(&control) && members.contains(&target));
                    assert_ne!(control, QubitId(54));
                    assert_ne!(target, QubitId(54));
                }
            }
        }
    }

    #[test]
    fn ideal_outcome_is_prepared_state() {
        let map = generate_heavy_hex_127();
        for basis in [Basis::Z, Basis::X] {
            for state in [0, 1] {
                let c = build_hammer_circuit(&map, &spec(54, state, basis, 5)).unwrap();
                let r = reference_run(&c);
                assert!(r.all_deterministic());
                assert_eq!(r.ideal[0], state == 1);
            }
        }
    }

    #[test]
    fn baseline_matches_depth() {
        let map = generate_heavy_hex_127();
        for basis in [Basis::Z, Basis::X] {
            let s = spec(54, 1, basis, 9);
            let h = build_hammer_circuit(&map, &s).unwrap();
            let b = build_baseline_circuit(&map, &s).unwrap();
            assert_eq!(h.depth(), b.depth());
            assert_eq!(b.stats().two_qubit, 0);
        }
    }

    #[test]
    fn bad_specs() {
        let map = generate_heavy_hex_127();
        assert!(matches!(
            build_hammer_circuit(&map, &spec(54, 0, Basis::Z, 0)),
            Err(Error::InvalidSpec(_))
        ));
        assert!(matches!(
            build_hammer_circuit(&map, &spec(54, 2, Basis::Z, 1)),
            Err(Error::InvalidSpec(_))
        ));
        assert!(matches!(
            build_hammer_circuit(&map, &spec(14, 0, Basis::Z, 1)),
            Err(Error::Boundary { .. })
        ));
    }

    #[test]
    fn sweep_alternates_and_keeps_depth() {
        let map = generate_heavy_hex_127();
        let s = SweepSpec {
            center_groups: vec![vec![QubitId(54)], vec![QubitId(109)]],
            n_cycles: 6,
            rounds: 3,
            shots: 10,
            center_state: 1,
        };
        let cycles = build_sweep(&map, &s).unwrap();
        assert_eq!(cycles.len(), 6);
        let d = cycles[0].circuit.depth();
        for c in &cycles {
            assert_eq!(c.circuit.depth(), d);
            assert_eq!(c.circuit.stats().count(GateKind::Measure), 127);
            assert_eq!(c.hammered.is_empty(), c.cycle % 2 == 1);
        }
        assert_eq!(cycles[0].hammered, vec![QubitId(54)]);
        assert_eq!(cycles[2].hammered, vec![QubitId(109)]);
        assert_eq!(cycles[4].hammered, vec![QubitId(54)]);
    }

    #[test]
    fn overlapping_group_rejected() {
        let map = generate_heavy_hex_127();
        let s = SweepSpec {
            center_groups: vec![vec![QubitId(54), QubitId(56)]],
            n_cycles: 2,
            rounds: 1,
            shots: 1,
            center_state: 1,
        };
        let nb54 = hammer_neighborhood(&map, QubitId(54)).unwrap();
        let nb56 = hammer_neighborhood(&map, QubitId(56));
        match (nb56, build_sweep(&map, &s)) {
            (Ok(nb56), Err(Error::OverlappingNeighborhoods { shared, .. })) => {
                for q in &shared {
                    assert!(nb54.members().contains(q) && nb56.members().contains(q));
                }
            }
            (Err(_), Err(_)) => {}
            (_, other) => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sweep_json_roundtrip() {
        let s = SweepSpec {
            center_groups: vec![vec![QubitId(54)]],
            n_cycles: 40,
            rounds: 2,
            shots: 5,
            center_state: 1,
        };
        assert_eq!(SweepSpec::from_json(&s.to_json()).unwrap(), s);
        let minimal = r#"{"center_groups": [[54]], "rounds": 3, "shots": 10}"#;
        let m = SweepSpec::from_json(minimal).unwrap();
        assert_eq!(m.n_cycles, 40);
        assert_eq!(m.center_state, 1);
    }

    #[test]
    fn dd_pairs_and_leftover() {
        let map = generate_heavy_hex_127();
        let c = build_hammer_circuit(&map, &spec(54, 0, Basis::X, 4)).unwrap();
        // center idles in burst + 4 rounds = 5 slots: two pairs and one IDLE
        let dd = insert_dd(&c, &[QubitId(54)]).unwrap();
        let s = dd.stats();
        assert_eq!(s.count(GateKind::X), c.stats().count(GateKind::X) + 4);
        assert_eq!(s.count(GateKind::Idle), c.stats().count(GateKind::Idle) - 4);
        assert_eq!(dd.depth(), c.depth());
        assert_eq!(reference_run(&dd).ideal, reference_run(&c).ideal);
    }

    #[test]
    fn dd_rejects_busy_qubit() {
        let map = generate_heavy_hex_127();
        let c = build_hammer_circuit(&map, &spec(54, 0, Basis::Z, 2)).unwrap();
        assert!(matches!(
            insert_dd(&c, &[QubitId(45)]),
            Err(Error::NotIdle { .. })
        ));
    }
}
