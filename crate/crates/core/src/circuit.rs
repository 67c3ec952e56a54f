//! Layered Clifford circuits.
//!
//! A layer is a set of gates acting on pairwise-disjoint qubits and is the
//! unit of time for the noise model. Measurements are terminal: once a qubit
//! is measured no later layer may touch it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::QubitId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GateKind {
    X,
    Z,
    H,
    S,
    Cnot,
    Measure,
    Idle,
}

impl GateKind {
    pub const ALL: [GateKind; 7] = [
        GateKind::X,
        GateKind::Z,
        GateKind::H,
        GateKind::S,
        GateKind::Cnot,
        GateKind::Measure,
        GateKind::Idle,
    ];

    fn mnemonic(self) -> &'static str {
        match self {
            GateKind::X => "X",
            GateKind::Z => "Z",
            GateKind::H => "H",
            GateKind::S => "S",
            GateKind::Cnot => "CNOT",
            GateKind::Measure => "M",
            GateKind::Idle => "IDLE",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gate {
    X(QubitId),
    Z(QubitId),
    H(QubitId),
    S(QubitId),
    Cnot { control: QubitId, target: QubitId },
    Measure { qubit: QubitId, clbit: usize },
    Idle(QubitId),
}

impl Gate {
    pub fn x(q: usize) -> Self {
        Gate::X(QubitId(q))
    }
    pub fn z(q: usize) -> Self {
        Gate::Z(QubitId(q))
    }
    pub fn h(q: usize) -> Self {
        Gate::H(QubitId(q))
    }
    pub fn s(q: usize) -> Self {
        Gate::S(QubitId(q))
    }
    pub fn cnot(control: usize, target: usize) -> Self {
        Gate::Cnot {
            control: QubitId(control),
            target: QubitId(target),
        }
    }
    pub fn measure(q: usize, clbit: usize) -> Self {
        Gate::Measure {
            qubit: QubitId(q),
            clbit,
        }
    }
    pub fn idle(q: usize) -> Self {
        Gate::Idle(QubitId(q))
    }

    pub fn kind(&self) -> GateKind {
        match self {
            Gate::X(_) => GateKind::X,
            Gate::Z(_) => GateKind::Z,
            Gate::H(_) => GateKind::H,
            Gate::S(_) => GateKind::S,
            Gate::Cnot { .. } => GateKind::Cnot,
            Gate::Measure { .. } => GateKind::Measure,
            Gate::Idle(_) => GateKind::Idle,
        }
    }

    pub fn qubits(&self) -> impl Iterator<Item = QubitId> {
        let (a, b) = match *self {
            Gate::X(q) | Gate::Z(q) | Gate::H(q) | Gate::S(q) | Gate::Idle(q) => (q, None),
            Gate::Measure { qubit, .. } => (qubit, None),
            Gate::Cnot { control, target } => (control, Some(target)),
        };
        std::iter::once(a).chain(b)
    }

    /// True for gates that change the state (everything but IDLE and MEASURE).
    pub fn is_unitary_action(&self) -> bool {
        !matches!(self, Gate::Idle(_) | Gate::Measure { .. })
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Gate::Cnot { control, target } => write!(f, "CNOT {control} {target}"),
            Gate::Measure { qubit, clbit } => write!(f, "M {qubit} c{clbit}"),
            ref g => write!(
                f,
                "{} {}",
                g.kind().mnemonic(),
                g.qubits().next().expect("single-qubit gate")
            ),
        }
    }
}

fn parse_index(tok: &str, prefix: char) -> Result<usize> {
    tok.strip_prefix(prefix)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::InvalidSpec(format!("bad operand `{tok}`")))
}

impl FromStr for Gate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let toks: Vec<&str> = s.split_whitespace().collect();
        let q = |i: usize| -> Result<usize> {
            toks.get(i)
                .ok_or_else(|| Error::InvalidSpec(format!("missing operand in `{s}`")))
                .and_then(|t| parse_index(t, 'q'))
        };
        let gate = match toks.first().copied() {
            Some("X") => Gate::x(q(1)?),
            Some("Z") => Gate::z(q(1)?),
            Some("H") => Gate::h(q(1)?),
            Some("S") => Gate::s(q(1)?),
            Some("IDLE") => Gate::idle(q(1)?),
            Some("CNOT") => Gate::cnot(q(1)?, q(2)?),
            Some("M") => {
                let c = toks
                    .get(2)
                    .ok_or_else(|| Error::InvalidSpec(format!("missing clbit in `{s}`")))?;
                Gate::measure(q(1)?, parse_index(c, 'c')?)
            }
            _ => return Err(Error::InvalidSpec(format!("unknown gate `{s}`"))),
        };
        Ok(gate)
    }
}

/// Gates acting on pairwise-disjoint qubits.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layer {
    gates: Vec<Gate>,
}

impl Layer {
    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// The gate touching `q` in this layer, if any.
    pub fn gate_on(&self, q: QubitId) -> Option<&Gate> {
        self.gates.iter().find(|g| g.qubits().any(|x| x == q))
    }
}

/// Gate counts and depth.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CircuitStats {
    pub depth: usize,
    pub counts: BTreeMap<GateKind, usize>,
    pub two_qubit: usize,
}

impl CircuitStats {
    pub fn count(&self, kind: GateKind) -> usize {
        self.counts.get(&kind).copied().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CliffordCircuit {
    n_qubits: usize,
    n_clbits: usize,
    layers: Vec<Layer>,
}

impl CliffordCircuit {
    pub fn new(n_qubits: usize, n_clbits: usize) -> Self {
        Self {
            n_qubits,
            n_clbits,
            layers: Vec::new(),
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_clbits(&self) -> usize {
        self.n_clbits
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    fn measured_qubits(&self) -> BTreeSet<QubitId> {
        self.measurements().map(|(_, q, _)| q).collect()
    }

    fn used_clbits(&self) -> BTreeSet<usize> {
        self.measurements().map(|(_, _, c)| c).collect()
    }

    /// `(layer, qubit, clbit)` for every measurement, in layer order.
    pub fn measurements(&self) -> impl Iterator<Item = (usize, QubitId, usize)> + '_ {
        self.layers.iter().enumerate().flat_map(|(i, l)| {
            l.gates.iter().filter_map(move |g| match *g {
                Gate::Measure { qubit, clbit } => Some((i, qubit, clbit)),
                _ => None,
            })
        })
    }

    fn validate_layer(
        &self,
        gates: &[Gate],
        measured: &BTreeSet<QubitId>,
        clbits: &mut BTreeSet<usize>,
    ) -> Result<()> {
        let mut touched = BTreeSet::new();
        for g in gates {
            if let Gate::Cnot { control, target } = *g {
                if control == target {
                    return Err(Error::CnotSelf(control));
                }
            }
            for q in g.qubits() {
                if q.0 >= self.n_qubits {
                    return Err(Error::QubitOutOfRange {
                        qubit: q.0,
                        n: self.n_qubits,
                    });
                }
                if !touched.insert(q) {
                    return Err(Error::LayerCollision(q));
                }
                if measured.contains(&q) {
                    return Err(Error::MidCircuitMeasurement(q));
                }
            }
            if let Gate::Measure { clbit, .. } = *g {
                if clbit >= self.n_clbits {
                    return Err(Error::ClbitOutOfRange {
                        clbit,
                        n_clbits: self.n_clbits,
                    });
                }
                if !clbits.insert(clbit) {
                    return Err(Error::DuplicateClbit(clbit));
                }
            }
        }
        Ok(())
    }

    /// Appends a layer in place after validating it.
    pub fn push_layer(&mut self, gates: impl IntoIterator<Item = Gate>) -> Result<()> {
        let gates: Vec<Gate> = gates.into_iter().collect();
        let measured = self.measured_qubits();
        let mut clbits = self.used_clbits();
        self.validate_layer(&gates, &measured, &mut clbits)?;
        self.layers.push(Layer { gates });
        Ok(())
    }

    /// Returns a new circuit with one more layer; `self` is unchanged.
    pub fn append_layer(&self, gates: impl IntoIterator<Item = Gate>) -> Result<Self> {
        let mut next = self.clone();
        next.push_layer(gates)?;
        Ok(next)
    }

    /// Layers of `self` followed by layers of `other`.
    pub fn compose(&self, other: &CliffordCircuit) -> Result<Self> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::WidthMismatch(self.n_qubits, other.n_qubits));
        }
        let mut out = self.clone();
        out.n_clbits = self.n_clbits.max(other.n_clbits);
        for layer in &other.layers {
            out.push_layer(layer.gates.iter().copied())?;
        }
        Ok(out)
    }

    pub fn stats(&self) -> CircuitStats {
        let mut counts: BTreeMap<GateKind, usize> =
            GateKind::ALL.iter().map(|&k| (k, 0)).collect();
        for g in self.layers.iter().flat_map(|l| &l.gates) {
            *counts.entry(g.kind()).or_default() += 1;
        }
        CircuitStats {
            depth: self.depth(),
            two_qubit: counts[&GateKind::Cnot],
            counts,
        }
    }

    /// Text dump, one layer per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("qubits {} clbits {}\n", self.n_qubits, self.n_clbits);
        for layer in &self.layers {
            let line: Vec<String> = layer.gates.iter().map(Gate::to_string).collect();
            out.push_str(&line.join(", "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidSpec("empty circuit text".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        let (n_qubits, n_clbits) = match h.as_slice() {
            ["qubits", q, "clbits", c] => (
                q.parse().map_err(|_| Error::InvalidSpec(header.into()))?,
                c.parse().map_err(|_| Error::InvalidSpec(header.into()))?,
            ),
            _ => return Err(Error::InvalidSpec(format!("bad header `{header}`"))),
        };
        let mut circuit = CliffordCircuit::new(n_qubits, n_clbits);
        for line in lines {
            let gates = line
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::parse)
                .collect::<Result<Vec<Gate>>>()?;
            circuit.push_layer(gates)?;
        }
        Ok(circuit)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn separate_layers_for_repeated_qubit() {
        let c = CliffordCircuit::new(3, 0)
            .append_layer([Gate::x(0)])
            .unwrap()
            .append_layer([Gate::x(0)])
            .unwrap();
        assert_eq!(c.depth(), 2);
    }

    #[test]
    fn parallel_gates_share_a_layer() {
        let c = CliffordCircuit::new(3, 0)
            .append_layer([Gate::x(0), Gate::x(1)])
            .unwrap();
        assert_eq!(c.depth(), 1);
    }

    #[test]
    fn collision_rejected() {
        let err = CliffordCircuit::new(3, 0)
            .append_layer([Gate::x(0), Gate::cnot(0, 2)])
            .unwrap_err();
        assert!(matches!(err, Error::LayerCollision(QubitId(0))));
    }

    #[test]
    fn append_is_value_semantics() {
        let a = CliffordCircuit::new(2, 0);
        let b = a.append_layer([Gate::h(0)]).unwrap();
        assert_eq!(a.depth(), 0);
        assert_eq!(b.depth(), 1);
    }

    #[test]
    fn range_and_clbit_errors() {
        let c = CliffordCircuit::new(2, 1);
        assert!(matches!(
            c.append_layer([Gate::x(2)]),
            Err(Error::QubitOutOfRange { qubit: 2, .. })
        ));
        assert!(matches!(
            c.append_layer([Gate::measure(0, 1)]),
            Err(Error::ClbitOutOfRange { clbit: 1, .. })
        ));
        assert!(matches!(
            c.append_layer([Gate::cnot(1, 1)]),
            Err(Error::CnotSelf(_))
        ));
        let c = CliffordCircuit::new(2, 2)
            .append_layer([Gate::measure(0, 0)])
            .unwrap();
        assert!(matches!(
            c.append_layer([Gate::measure(1, 0)]),
            Err(Error::DuplicateClbit(0))
        ));
    }

    #[test]
    fn compose_identity_and_depth() {
        let c = CliffordCircuit::new(2, 1)
            .append_layer([Gate::h(0)])
            .unwrap()
            .append_layer([Gate::measure(0, 0)])
            .unwrap();
        let empty = CliffordCircuit::new(2, 0);
        assert_eq!(empty.compose(&c).unwrap(), c);
        let d = CliffordCircuit::new(2, 0)
            .append_layer([Gate::x(1)])
            .unwrap();
        assert_eq!(d.compose(&c).unwrap().depth(), d.depth() + c.depth());
    }

    #[test]
    fn compose_after_measurement_rejected() {
        let measured = CliffordCircuit::new(2, 1)
            .append_layer([Gate::measure(0, 0)])
            .unwrap();
        let touch = CliffordCircuit::new(2, 0)
            .append_layer([Gate::x(0)])
            .unwrap();
        assert!(matches!(
            measured.compose(&touch),
            Err(Error::MidCircuitMeasurement(QubitId(0)))
        ));
        let other = CliffordCircuit::new(2, 0)
            .append_layer([Gate::x(1)])
            .unwrap();
        assert!(measured.compose(&other).is_ok());
    }

    #[test]
    fn stats_counts() {
        assert_eq!(CliffordCircuit::new(4, 0).stats().depth, 0);
        assert!(CliffordCircuit::new(4, 0)
            .stats()
            .counts
            .values()
            .all(|&c| c == 0));
        let mut c = CliffordCircuit::new(2, 0);
        for _ in 0..3 {
            c.push_layer([Gate::cnot(0, 1)]).unwrap();
        }
        let s = c.stats();
        assert_eq!(s.two_qubit, 3);
        assert_eq!(s.count(GateKind::Cnot), 3);
        assert_eq!(s.depth, 3);
    }

    #[test]
    fn text_dump_format() {
        let c = CliffordCircuit::new(6, 1)
            .append_layer([Gate::x(3), Gate::cnot(4, 5)])
            .unwrap()
            .append_layer([Gate::measure(3, 0), Gate::idle(4)])
            .unwrap();
        let text = c.to_text();
        assert_eq!(text, "qubits 6 clbits 1\nX q3, CNOT q4 q5\nM q3 c0, IDLE q4\n");
        assert_eq!(CliffordCircuit::from_text(&text).unwrap(), c);
    }

    fn arb_gate(n: usize) -> impl Strategy<Value = Gate> {
        (0..6u8, 0..n, 0..n).prop_map(|(k, a, b)| match k {
            0 => Gate::x(a),
            1 => Gate::z(a),
            2 => Gate::h(a),
            3 => Gate::s(a),
            4 => Gate::idle(a),
            _ => Gate::cnot(a, b),
        })
    }

    fn layer_ok(layer: &Layer) -> bool {
        let mut seen = BTreeSet::new();
        layer.gates().iter().flat_map(Gate::qubits).all(|q| seen.insert(q))
    }

    proptest! {
        #[test]
        fn layers_stay_disjoint(batches in prop::collection::vec(prop::collection::vec(arb_gate(5), 0..4), 0..12)) {
            let mut c = CliffordCircuit::new(5, 0);
            for batch in batches {
                let _ = c.push_layer(batch);
                prop_assert!(c.layers().iter().all(layer_ok));
            }
        }

        #[test]
        fn compose_associative(a in prop::collection::vec(arb_gate(4), 0..6),
                               b in prop::collection::vec(arb_gate(4), 0..6),
                               c in prop::collection::vec(arb_gate(4), 0..6)) {
            let single = |gs: Vec<Gate>| {
                let mut circ = CliffordCircuit::new(4, 0);
                for g in gs { let _ = circ.push_layer([g]); }
                circ
            };
            let (a, b, c) = (single(a), single(b), single(c));
            let left = a.compose(&b).unwrap().compose(&c).unwrap();
            let right = a.compose(&b.compose(&c).unwrap()).unwrap();
            prop_assert_eq!(left, right);
        }
    }
}
