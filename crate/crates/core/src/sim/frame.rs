//! Pauli frames, single-shot and 64-shot bit-sliced.

use crate::circuit::Gate;
use crate::noise::Pauli;

/// Accumulated Pauli error on each qubit, phases dropped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PauliFrame {
    pub x: Vec<bool>,
    pub z: Vec<bool>,
}

impl PauliFrame {
    pub fn new(n: usize) -> Self {
        Self {
            x: vec![false; n],
            z: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn inject(&mut self, q: usize, p: Pauli) {
        let (px, pz) = p.bits();
        self.x[q] ^= px;
        self.z[q] ^= pz;
    }
}

/// Conjugates `frame` through `gate`. MEASURE and IDLE leave it unchanged.
pub fn frame_propagate(mut frame: PauliFrame, gate: &Gate) -> PauliFrame {
    match *gate {
        Gate::H(q) => {
            let q = q.0;
            std::mem::swap(&mut frame.x[q], &mut frame.z[q]);
        }
        Gate::S(q) => {
            let q = q.0;
            frame.z[q] ^= frame.x[q];
        }
        Gate::Cnot { control, target } => {
            let (c, t) = (control.0, target.0);
            frame.x[t] ^= frame.x[c];
            frame.z[c] ^= frame.z[t];
        }
        Gate::X(_) | Gate::Z(_) | Gate::Measure { .. } | Gate::Idle(_) => {}
    }
    frame
}

/// 64 frames at once: bit `s` of each word belongs to shot `s`.
#[derive(Clone, Debug)]
pub(crate) struct FrameBatch {
    pub x: Vec<u64>,
    pub z: Vec<u64>,
}

impl FrameBatch {
    pub fn new(n: usize) -> Self {
        Self {
            x: vec![0; n],
            z: vec![0; n],
        }
    }

    #[inline]
    pub fn apply(&mut self, gate: &Gate) {
        match *gate {
            Gate::H(q) => {
                let q = q.0;
                std::mem::swap(&mut self.x[q], &mut self.z[q]);
            }
            Gate::S(q) => self.z[q.0] ^= self.x[q.0],
            Gate::Cnot { control, target } => {
                let (c, t) = (control.0, target.0);
                self.x[t] ^= self.x[c];
                self.z[c] ^= self.z[t];
            }
            Gate::X(_) | Gate::Z(_) | Gate::Measure { .. } | Gate::Idle(_) => {}
        }
    }

    #[inline]
    pub fn inject(&mut self, q: usize, p: Pauli, mask: u64) {
        let (px, pz) = p.bits();
        if px {
            self.x[q] ^= mask;
        }
        if pz {
            self.z[q] ^= mask;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z_on_target_spreads_to_control() {
        let mut f = PauliFrame::new(2);
        f.z[1] = true;
        let f = frame_propagate(f, &Gate::cnot(0, 1));
        assert_eq!((f.z[0], f.z[1]), (true, true));
        assert_eq!((f.x[0], f.x[1]), (false, false));
    }

    #[test]
    fn z_on_control_stays() {
        let mut f = PauliFrame::new(2);
        f.z[0] = true;
        let f = frame_propagate(f, &Gate::cnot(0, 1));
        assert_eq!((f.z[0], f.z[1]), (true, false));
    }

    #[test]
    fn x_through_h_is_z() {
        let mut f = PauliFrame::new(1);
        f.x[0] = true;
        let f = frame_propagate(f, &Gate::h(0));
        assert_eq!((f.x[0], f.z[0]), (false, true));
    }

    #[test]
    fn s_maps_x_to_y() {
        let mut f = PauliFrame::new(1);
        f.x[0] = true;
        let f = frame_propagate(f, &Gate::s(0));
        assert_eq!((f.x[0], f.z[0]), (true, true));
    }

    #[test]
    fn batch_agrees_with_single() {
        let gates = [
            Gate::h(0),
            Gate::cnot(0, 1),
            Gate::s(1),
            Gate::cnot(2, 0),
            Gate::h(2),
        ];
        for pattern in 0..64u32 {
            let mut f = PauliFrame::new(3);
            let mut b = FrameBatch::new(3);
            for q in 0..3 {
                f.x[q] = pattern >> q & 1 == 1;
                f.z[q] = pattern >> (q + 3) & 1 == 1;
                b.x[q] = f.x[q] as u64;
                b.z[q] = f.z[q] as u64;
            }
            for g in &gates {
                f = frame_propagate(f, g);
                b.apply(g);
            }
            for q in 0..3 {
                assert_eq!(f.x[q], b.x[q] & 1 == 1);
                assert_eq!(f.z[q], b.z[q] & 1 == 1);
            }
        }
    }
}
