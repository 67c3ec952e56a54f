//! Dense state-vector simulation for cross-checking the stabilizer path.

use num_complex::Complex64;

use crate::circuit::{CliffordCircuit, Gate};
use crate::error::{Error, Result};
use crate::noise::{ErrorEvent, Pauli};

pub const MAX_ORACLE_QUBITS: usize = 10;

struct State {
    amps: Vec<Complex64>,
}

impl State {
    fn new(n: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[0] = Complex64::new(1.0, 0.0);
        Self { amps }
    }

    fn x(&mut self, q: usize) {
        let m = 1 << q;
        for i in 0..self.amps.len() {
            if i & m == 0 {
                self.amps.swap(i, i | m);
            }
        }
    }

    fn phase(&mut self, q: usize, ph: Complex64) {
        let m = 1 << q;
        for (i, a) in self.amps.iter_mut().enumerate() {
            if i & m != 0 {
                *a *= ph;
            }
        }
    }

    fn h(&mut self, q: usize) {
        let m = 1 << q;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for i in 0..self.amps.len() {
            if i & m == 0 {
                let (a, b) = (self.amps[i], self.amps[i | m]);
                self.amps[i] = (a + b) * s;
                self.amps[i | m] = (a - b) * s;
            }
        }
    }

    fn cnot(&mut self, c: usize, t: usize) {
        let (mc, mt) = (1 << c, 1 << t);
        for i in 0..self.amps.len() {
            if i & mc != 0 && i & mt == 0 {
                self.amps.swap(i, i | mt);
            }
        }
    }

    fn pauli(&mut self, q: usize, p: Pauli) {
        let (px, pz) = p.bits();
        if pz {
            self.phase(q, Complex64::new(-1.0, 0.0));
        }
        if px {
            self.x(q);
        }
    }
}

/// Exact distribution over classical registers, indexed by `Σ bit_c << c`,
/// with `injected` Paulis applied after the gates of their layer. Errors on a
/// qubit at or after its measurement layer have no effect.
pub fn statevector_oracle(circuit: &CliffordCircuit, injected: &[ErrorEvent]) -> Result<Vec<f64>> {
    let n = circuit.n_qubits();
    if n > MAX_ORACLE_QUBITS {
        return Err(Error::TooManyQubits {
            n,
            max: MAX_ORACLE_QUBITS,
        });
    }
    let mut st = State::new(n);
    let mut readout: Vec<(usize, usize)> = Vec::new();
    let mut measured = vec![false; n];
    for (li, layer) in circuit.layers().iter().enumerate() {
        for g in layer.gates() {
            match *g {
                Gate::X(q) => st.x(q.0),
                Gate::Z(q) => st.phase(q.0, Complex64::new(-1.0, 0.0)),
                Gate::H(q) => st.h(q.0),
                Gate::S(q) => st.phase(q.0, Complex64::new(0.0, 1.0)),
                Gate::Cnot { control, target } => st.cnot(control.0, target.0),
                // measured qubits are never touched again, so deferring is exact
                Gate::Measure { qubit, clbit } => {
                    readout.push((qubit.0, clbit));
                    measured[qubit.0] = true;
                }
                Gate::Idle(_) => {}
            }
        }
        // an error landing after the readout cannot change it
        for e in injected.iter().filter(|e| e.layer == li && !measured[e.qubit.0]) {
            st.pauli(e.qubit.0, e.pauli);
        }
    }
    let mut dist = vec![0.0; 1 << circuit.n_clbits()];
    for (i, a) in st.amps.iter().enumerate() {
        let p = a.norm_sqr();
        if p == 0.0 {
            continue;
        }
        let key = readout
            .iter()
            .fold(0usize, |k, &(q, c)| k | ((i >> q & 1) << c));
        dist[key] += p;
    }
    Ok(dist)
}
