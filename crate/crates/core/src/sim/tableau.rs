//! Stabilizer tableau (destabilizers + stabilizers with sign bits).

use rand::Rng;

use crate::circuit::Gate;
use crate::noise::Pauli;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tableau {
    n: usize,
    words: usize,
    // 2n rows plus one scratch row, `words` u64s each
    x: Vec<u64>,
    z: Vec<u64>,
    r: Vec<bool>,
}

#[inline]
fn bit(row: &[u64], q: usize) -> bool {
    row[q / 64] >> (q % 64) & 1 == 1
}

impl Tableau {
    /// `|0…0⟩`.
    pub fn new(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        let rows = 2 * n + 1;
        let mut t = Self {
            n,
            words,
            x: vec![0; rows * words],
            z: vec![0; rows * words],
            r: vec![false; rows],
        };
        for q in 0..n {
            t.x[q * words + q / 64] |= 1 << (q % 64);
            t.z[(n + q) * words + q / 64] |= 1 << (q % 64);
        }
        t
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn get(&self, v: &[u64], row: usize, q: usize) -> bool {
        bit(&v[row * self.words..(row + 1) * self.words], q)
    }

    #[inline]
    fn flip(v: &mut [u64], words: usize, row: usize, q: usize) {
        v[row * words + q / 64] ^= 1 << (q % 64);
    }

    fn rows(&self) -> usize {
        2 * self.n
    }

    pub fn h(&mut self, q: usize) {
        for row in 0..self.rows() {
            let (xb, zb) = (self.get(&self.x, row, q), self.get(&self.z, row, q));
            self.r[row] ^= xb & zb;
            if xb != zb {
                Self::flip(&mut self.x, self.words, row, q);
                Self::flip(&mut self.z, self.words, row, q);
            }
        }
    }

    pub fn s(&mut self, q: usize) {
        for row in 0..self.rows() {
            let (xb, zb) = (self.get(&self.x, row, q), self.get(&self.z, row, q));
            self.r[row] ^= xb & zb;
            if xb {
                Self::flip(&mut self.z, self.words, row, q);
            }
        }
    }

    pub fn cnot(&mut self, c: usize, t: usize) {
        for row in 0..self.rows() {
            let xc = self.get(&self.x, row, c);
            let zc = self.get(&self.z, row, c);
            let xt = self.get(&self.x, row, t);
            let zt = self.get(&self.z, row, t);
            self.r[row] ^= xc & zt & !(xt ^ zc);
            if xc {
                Self::flip(&mut self.x, self.words, row, t);
            }
            if zt {
                Self::flip(&mut self.z, self.words, row, c);
            }
        }
    }

    /// Conjugates by a Pauli: only signs change.
    pub fn apply_pauli(&mut self, q: usize, p: Pauli) {
        let (px, pz) = p.bits();
        for row in 0..self.rows() {
            let anti = (px & self.get(&self.z, row, q)) ^ (pz & self.get(&self.x, row, q));
            self.r[row] ^= anti;
        }
    }

    /// Applies a unitary gate; IDLE and MEASURE are no-ops here.
    pub fn apply(&mut self, gate: &Gate) {
        match *gate {
            Gate::X(q) => self.apply_pauli(q.0, Pauli::X),
            Gate::Z(q) => self.apply_pauli(q.0, Pauli::Z),
            Gate::H(q) => self.h(q.0),
            Gate::S(q) => self.s(q.0),
            Gate::Cnot { control, target } => self.cnot(control.0, target.0),
            Gate::Measure { .. } | Gate::Idle(_) => {}
        }
    }

    fn rowsum(&mut self, h: usize, i: usize) {
        let mut phase: i32 = 2 * (self.r[h] as i32) + 2 * (self.r[i] as i32);
        for q in 0..self.n {
            let x1 = self.get(&self.x, i, q) as i32;
            let z1 = self.get(&self.z, i, q) as i32;
            let x2 = self.get(&self.x, h, q) as i32;
            let z2 = self.get(&self.z, h, q) as i32;
            phase += match (x1, z1) {
                (0, 0) => 0,
                (1, 1) => z2 - x2,
                (1, 0) => z2 * (2 * x2 - 1),
                _ => x2 * (1 - 2 * z2),
            };
        }
        self.r[h] = phase.rem_euclid(4) == 2;
        let w = self.words;
        for k in 0..w {
            self.x[h * w + k] ^= self.x[i * w + k];
            self.z[h * w + k] ^= self.z[i * w + k];
        }
    }

    fn copy_row(&mut self, dst: usize, src: usize) {
        let w = self.words;
        self.x.copy_within(src * w..(src + 1) * w, dst * w);
        self.z.copy_within(src * w..(src + 1) * w, dst * w);
        self.r[dst] = self.r[src];
    }

    /// True when a Z measurement of `q` has a determined outcome.
    pub fn is_z_deterministic(&self, q: usize) -> bool {
        (self.n..2 * self.n).all(|row| !self.get(&self.x, row, q))
    }

    /// Per-qubit Z-determinism for the whole register.
    pub fn z_deterministic_mask(&self) -> Vec<bool> {
        let w = self.words;
        let mut any = vec![0u64; w];
        for row in self.n..2 * self.n {
            for k in 0..w {
                any[k] |= self.x[row * w + k];
            }
        }
        (0..self.n).map(|q| !bit(&any, q)).collect()
    }

    /// Measures `q` in the Z basis. Returns `(outcome, deterministic)`; random
    /// outcomes draw a fair coin from `rng`.
    pub fn measure<R: Rng + ?Sized>(&mut self, q: usize, rng: &mut R) -> (bool, bool) {
        self.measure_with(q, || rng.gen())
    }

    /// Like [`measure`](Self::measure), but a random outcome is `forced`.
    pub fn measure_forced(&mut self, q: usize, forced: bool) -> (bool, bool) {
        self.measure_with(q, || forced)
    }

    fn measure_with(&mut self, q: usize, coin: impl FnOnce() -> bool) -> (bool, bool) {
        let n = self.n;
        let p = (n..2 * n).find(|&row| self.get(&self.x, row, q));
        match p {
            Some(p) => {
                for i in 0..2 * n {
                    if i != p && self.get(&self.x, i, q) {
                        self.rowsum(i, p);
                    }
                }
                self.copy_row(p - n, p);
                let w = self.words;
                for k in 0..w {
                    self.x[p * w + k] = 0;
                    self.z[p * w + k] = 0;
                }
                Self::flip(&mut self.z, w, p, q);
                let outcome = coin();
                self.r[p] = outcome;
                (outcome, false)
            }
            None => {
                let scratch = 2 * n;
                let w = self.words;
                for k in 0..w {
                    self.x[scratch * w + k] = 0;
                    self.z[scratch * w + k] = 0;
                }
                self.r[scratch] = false;
                for i in 0..n {
                    if self.get(&self.x, i, q) {
                        self.rowsum(scratch, i + n);
                    }
                }
                (self.r[scratch], true)
            }
        }
    }

    /// Checks the symplectic commutation relations of the generator rows.
    pub fn is_valid(&self) -> bool {
        let n = self.n;
        let anticommute = |a: usize, b: usize| {
            (0..n).fold(false, |acc, q| {
                acc ^ (self.get(&self.x, a, q) & self.get(&self.z, b, q))
                    ^ (self.get(&self.z, a, q) & self.get(&self.x, b, q))
            })
        };
        for i in 0..2 * n {
            for j in i + 1..2 * n {
                let expect = j == i + n;
                if anticommute(i, j) != expect {
                    return false;
                }
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};

    #[test]
    fn x_then_measure_is_one() {
        let mut t = Tableau::new(1);
        t.apply(&Gate::x(0));
        let mut r = stream(0, Domain::Reference, 0);
        assert_eq!(t.measure(0, &mut r), (true, true));
    }

    #[test]
    fn h_makes_random() {
        let mut t = Tableau::new(1);
        t.h(0);
        assert!(!t.is_z_deterministic(0));
        let mut r = stream(0, Domain::Reference, 0);
        let (_, det) = t.measure(0, &mut r);
        assert!(!det);
        assert!(t.is_valid());
    }

    #[test]
    fn bell_pair_correlated() {
        for seed in 0..20 {
            let mut t = Tableau::new(2);
            t.h(0);
            t.cnot(0, 1);
            let mut r = stream(seed, Domain::Reference, 0);
            let (a, da) = t.measure(0, &mut r);
            let (b, db) = t.measure(1, &mut r);
            assert!(!da && db);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn hzh_is_x() {
        let mut t = Tableau::new(1);
        t.h(0);
        t.s(0);
        t.s(0);
        t.h(0);
        let mut r = stream(0, Domain::Reference, 0);
        assert_eq!(t.measure(0, &mut r), (true, true));
    }

    #[test]
    fn stays_valid_under_gates() {
        let mut t = Tableau::new(4);
        for (i, g) in [
            Gate::h(0),
            Gate::cnot(0, 1),
            Gate::s(1),
            Gate::cnot(1, 3),
            Gate::h(2),
            Gate::cnot(2, 0),
            Gate::x(3),
        ]
        .iter()
        .enumerate()
        {
            t.apply(g);
            assert!(t.is_valid(), "invalid after gate {i}");
        }
    }
}
