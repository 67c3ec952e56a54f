//! Crosstalk-dominated error model.
//!
//! Every CNOT executed in a layer disturbs the spectator qubits within
//! `hop_radius` hops of either of its endpoints. The disturbance is a Pauli
//! channel whose strength depends on the hop distance: mostly `Z` (residual
//! ZZ coupling), with a smaller `X`/`Y` component. A spectator that receives
//! an `X` pulse in the same layer refocuses most of the `Z` part; only
//! `dd_residual` of it survives. Idle qubits dephase.
//! Each qubit carries a fixed log-normal jitter factor that scales its
//! crosstalk response, excitation (residual heating) and assignment error.
//! This spreads per-qubit flip rates without moving the dephased ones away
//! from one half. Relaxation is the same on every qubit.
//!
//! Readout is classical: relaxation (`1 → 0`) and excitation (`0 → 1`) act on
//! the bit a noiseless measurement of the frame-flipped state would give,
//! followed by symmetric-in-form assignment error. Relaxation is weighted by
//! the fraction of the circuit the qubit spent in a computational-basis state
//! (its *exposure*); a qubit held in `|±⟩` does not see the asymmetry.
//! Driving a neighbour speeds decay up: every CNOT with an endpoint one hop
//! away adds `drive_relax` (jittered) while the qubit is in a
//! computational-basis state, so an idle baseline stays low while a hammered
//! `|1⟩` decays.

pub mod calibrate;

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::circuit::{CliffordCircuit, Gate};
use crate::error::{Error, Result};
use crate::rng::{self, Domain};
use crate::topology::{CouplingMap, QubitId};

pub use calibrate::{calibrate, CalibrationOutcome, CalibrationTargets, ProtocolParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    /// `(x, z)` symplectic bits.
    pub fn bits(self) -> (bool, bool) {
        match self {
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }

    fn from_index(i: usize) -> Option<Pauli> {
        match i {
            1 => Some(Pauli::X),
            2 => Some(Pauli::Z),
            3 => Some(Pauli::Y),
            _ => None,
        }
    }
}

/// A Pauli error applied right after the gates of `layer`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ErrorEvent {
    pub layer: usize,
    pub qubit: QubitId,
    pub pauli: Pauli,
}

/// Scalar knobs from which a full per-qubit [`NoiseModel`] is expanded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub crosstalk_z: [f64; 2],
    pub crosstalk_xy: [f64; 2],
    pub hop_radius: usize,
    pub idle_dephasing: f64,
    pub readout: f64,
    pub p_excite: f64,
    pub p_relax: f64,
    pub sigma_jitter: f64,
    pub jitter_seed: u64,
    #[serde(default = "one")]
    pub dd_residual: f64,
    #[serde(default)]
    pub drive_relax: f64,
}

fn one() -> f64 {
    1.0
}

impl NoiseParams {
    pub fn zero() -> Self {
        Self {
            crosstalk_z: [0.0; 2],
            crosstalk_xy: [0.0; 2],
            hop_radius: 2,
            idle_dephasing: 0.0,
            readout: 0.0,
            p_excite: 0.0,
            p_relax: 0.0,
            sigma_jitter: 0.0,
            jitter_seed: 0,
            dd_residual: 1.0,
            drive_relax: 0.0,
        }
    }
}

/// Per-device error model. See the module docs for the structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Z-error probability for a spectator at hop distance 1 and 2.
    pub crosstalk_z: [f64; 2],
    /// Bit-flip component (split evenly between X and Y) at distance 1 and 2.
    pub crosstalk_xy: [f64; 2],
    pub hop_radius: usize,
    pub idle_dephasing: Vec<f64>,
    /// Per-qubit `[p01, p10]` assignment errors.
    pub readout: Vec<[f64; 2]>,
    pub p_excite: f64,
    pub p_relax: f64,
    pub sigma_jitter: f64,
    pub jitter_seed: u64,
    /// Fraction of Z crosstalk that survives on a spectator receiving an
    /// `X` refocusing pulse in the same layer.
    #[serde(default = "one")]
    pub dd_residual: f64,
    /// Extra `1 → 0` decay per CNOT with an endpoint one hop away, counted
    /// while the qubit sits in a computational-basis state. Jittered.
    #[serde(default)]
    pub drive_relax: f64,
}

const DEFAULT_MODEL_JSON: &str = include_str!("../../data/default_model.json");

fn check_prob(name: &str, value: f64) -> Result<()> {
    if (0.0..=0.5).contains(&value) {
        Ok(())
    } else {
        Err(Error::BadProbability {
            name: name.to_string(),
            value,
        })
    }
}

impl NoiseModel {
    /// Noiseless model for an `n`-qubit device.
    pub fn zero(n: usize) -> Self {
        Self::from_params(n, &NoiseParams::zero())
    }

    pub fn from_params(n: usize, p: &NoiseParams) -> Self {
        Self {
            crosstalk_z: p.crosstalk_z,
            crosstalk_xy: p.crosstalk_xy,
            hop_radius: p.hop_radius,
            idle_dephasing: vec![p.idle_dephasing; n],
            readout: vec![[p.readout, p.readout]; n],
            p_excite: p.p_excite,
            p_relax: p.p_relax,
            sigma_jitter: p.sigma_jitter,
            jitter_seed: p.jitter_seed,
            dd_residual: p.dd_residual,
            drive_relax: p.drive_relax,
        }
    }

    /// The committed calibrated model for the built-in 127-qubit device.
    pub fn default_calibrated() -> Self {
        Self::from_json(DEFAULT_MODEL_JSON).expect("bundled model is valid")
    }

    /// The committed calibrated knobs, expanded to any device size.
    pub fn default_params() -> NoiseParams {
        Self::default_calibrated().params()
    }

    /// Scalar knobs of this model; per-qubit arrays contribute their first
    /// entry.
    pub fn params(&self) -> NoiseParams {
        NoiseParams {
            crosstalk_z: self.crosstalk_z,
            crosstalk_xy: self.crosstalk_xy,
            hop_radius: self.hop_radius,
            idle_dephasing: self.idle_dephasing.first().copied().unwrap_or(0.0),
            readout: self.readout.first().map_or(0.0, |r| r[0]),
            p_excite: self.p_excite,
            p_relax: self.p_relax,
            sigma_jitter: self.sigma_jitter,
            jitter_seed: self.jitter_seed,
            dd_residual: self.dd_residual,
            drive_relax: self.drive_relax,
        }
    }

    pub fn n(&self) -> usize {
        self.idle_dephasing.len()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, &p) in self.crosstalk_z.iter().enumerate() {
            check_prob(&format!("crosstalk_z[{}]", i + 1), p)?;
        }
        for (i, &p) in self.crosstalk_xy.iter().enumerate() {
            check_prob(&format!("crosstalk_xy[{}]", i + 1), p)?;
        }
        if !(1..=2).contains(&self.hop_radius) {
            return Err(Error::BadNoiseModel(format!(
                "hop_radius must be 1 or 2, got {}",
                self.hop_radius
            )));
        }
        if self.readout.len() != self.idle_dephasing.len() {
            return Err(Error::LengthMismatch {
                expected: self.idle_dephasing.len(),
                got: self.readout.len(),
            });
        }
        for (q, &p) in self.idle_dephasing.iter().enumerate() {
            check_prob(&format!("idle_dephasing[{q}]"), p)?;
        }
        for (q, r) in self.readout.iter().enumerate() {
            check_prob(&format!("readout[{q}].p01"), r[0])?;
            check_prob(&format!("readout[{q}].p10"), r[1])?;
        }
        check_prob("p_excite", self.p_excite)?;
        check_prob("p_relax", self.p_relax)?;
        check_prob("drive_relax", self.drive_relax)?;
        if self.p_relax < self.p_excite {
            return Err(Error::BadNoiseModel(
                "p_relax must be at least p_excite".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.dd_residual) {
            return Err(Error::BadNoiseModel("dd_residual must be in [0, 1]".into()));
        }
        if !(self.sigma_jitter >= 0.0 && self.sigma_jitter.is_finite()) {
            return Err(Error::BadNoiseModel("sigma_jitter must be >= 0".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("noise model serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: NoiseModel = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Per-qubit multiplicative susceptibility, `exp(sigma * z_q)`.
    pub fn jitter(&self) -> Vec<f64> {
        let n = self.n();
        if self.sigma_jitter == 0.0 {
            return vec![1.0; n];
        }
        let mut rng = rng::stream(self.jitter_seed, Domain::Jitter, 0);
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (self.sigma_jitter * z).exp()
            })
            .collect()
    }

    /// Readout channel for one measured qubit that saw `driven` nearby
    /// CNOTs while in a computational-basis state.
    pub fn readout_channel(&self, q: QubitId, jitter: f64, exposure: f64, driven: usize) -> ReadoutChannel {
        let [p01, p10] = self.readout[q.0];
        let kept = (1.0 - (self.drive_relax * jitter).min(0.5)).powi(driven as i32);
        ReadoutChannel {
            p_excite: (self.p_excite * jitter).min(0.5) * exposure,
            p_relax: 1.0 - (1.0 - self.p_relax * exposure) * kept,
            p01: (p01 * jitter).min(0.5),
            p10: (p10 * jitter).min(0.5),
        }
    }
}

/// Classical channel applied to one measured bit.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ReadoutChannel {
    pub p_excite: f64,
    pub p_relax: f64,
    pub p01: f64,
    pub p10: f64,
}

impl ReadoutChannel {
    /// Relaxation then assignment error on the frame-flipped bit.
    pub fn apply<R: Rng + ?Sized>(&self, bit: bool, rng: &mut R) -> bool {
        let mut b = bit;
        let p = if b { self.p_relax } else { self.p_excite };
        if p > 0.0 && rng.gen::<f64>() < p {
            b = !b;
        }
        let p = if b { self.p10 } else { self.p01 };
        if p > 0.0 && rng.gen::<f64>() < p {
            b = !b;
        }
        b
    }

    /// Probability the output differs from `bit`, in closed form.
    pub fn flip_probability(&self, bit: bool) -> f64 {
        let (a, after_flip, after_keep) = if bit {
            (self.p_relax, self.p01, self.p10)
        } else {
            (self.p_excite, self.p10, self.p01)
        };
        a * (1.0 - after_flip) + (1.0 - a) * after_keep
    }
}

/// Per-bit readout: `ideal ^ frame`, then the channel.
pub fn apply_readout_and_relaxation<R: Rng + ?Sized>(
    ideal_bits: &[bool],
    flip_frames: &[bool],
    channels: &[ReadoutChannel],
    rng: &mut R,
) -> Result<Vec<bool>> {
    if ideal_bits.len() != flip_frames.len() || ideal_bits.len() != channels.len() {
        return Err(Error::LengthMismatch {
            expected: ideal_bits.len(),
            got: flip_frames.len().min(channels.len()),
        });
    }
    Ok(ideal_bits
        .iter()
        .zip(flip_frames)
        .zip(channels)
        .map(|((&i, &f), ch)| ch.apply(i ^ f, rng))
        .collect())
}

/// Distribution over `{I, X, Z, Y}` indexed by `x | z << 1`.
type PauliDist = [f64; 4];

fn compose(a: PauliDist, b: PauliDist) -> PauliDist {
    let mut out = [0.0; 4];
    for (i, &pa) in a.iter().enumerate() {
        for (j, &pb) in b.iter().enumerate() {
            out[i ^ j] += pa * pb;
        }
    }
    out
}

fn single(p: f64, index: usize) -> PauliDist {
    let mut d = [1.0 - p, 0.0, 0.0, 0.0];
    d[index] += p;
    d
}

#[derive(Clone, Debug)]
struct SiteClass {
    /// Probability that a site of this class produces a non-identity Pauli.
    p_event: f64,
    /// Cumulative conditional probabilities of X, Z (Y is the remainder).
    cond: [f64; 2],
    sites: Vec<(u32, u32)>,
}

/// Error sites of a circuit under a model, grouped by identical channels so
/// that sampling costs O(events) rather than O(sites).
#[derive(Clone, Debug)]
pub struct NoiseProgram {
    classes: Vec<SiteClass>,
    depth: usize,
}

impl NoiseProgram {
    pub fn compile(circuit: &CliffordCircuit, map: &CouplingMap, model: &NoiseModel) -> Result<Self> {
        let n = circuit.n_qubits();
        if n != map.n() {
            return Err(Error::DimensionMismatch {
                circuit: n,
                device: map.n(),
            });
        }
        if model.n() != n {
            return Err(Error::DimensionMismatch {
                circuit: n,
                device: model.n(),
            });
        }
        model.validate()?;
        let jitter = model.jitter();
        let radius = model.hop_radius;
        let mut measured = vec![false; n];
        let mut by_dist: BTreeMap<[u64; 4], Vec<(u32, u32)>> = BTreeMap::new();
        let mut site: Vec<PauliDist> = vec![[1.0, 0.0, 0.0, 0.0]; n];
        let mut touched: Vec<usize> = Vec::new();

        for (li, layer) in circuit.layers().iter().enumerate() {
            let mut busy = vec![false; n];
            let mut pulsed = vec![false; n];
            for g in layer.gates() {
                if let Gate::X(q) = g {
                    pulsed[q.0] = true;
                }
                if let Gate::Measure { qubit, .. } = g {
                    measured[qubit.0] = true;
                }
                if g.is_unitary_action() || matches!(g, Gate::Measure { .. }) {
                    for q in g.qubits() {
                        busy[q.0] = true;
                    }
                }
            }
            for g in layer.gates() {
                let Gate::Cnot { control, target } = *g else {
                    continue;
                };
                let mut near: BTreeMap<usize, usize> = BTreeMap::new();
                for end in [control, target] {
                    for (q, d) in map.ball(end, radius) {
                        let e = near.entry(q.0).or_insert(d);
                        *e = (*e).min(d);
                    }
                }
                for (q, d) in near {
                    if q == control.0 || q == target.0 || measured[q] {
                        continue;
                    }
                    let j = jitter[q];
                    let echo = if pulsed[q] { model.dd_residual } else { 1.0 };
                    let pz = (model.crosstalk_z[d - 1] * j * echo).min(0.5);
                    let pxy = (model.crosstalk_xy[d - 1] * j).min(0.5);
                    let mut dist = site[q];
                    dist = compose(dist, single(pz, 2));
                    dist = compose(dist, single(pxy / 2.0, 1));
                    dist = compose(dist, single(pxy / 2.0, 3));
                    if site[q][0] == 1.0 {
                        touched.push(q);
                    }
                    site[q] = dist;
                }
            }
            for q in 0..n {
                if !busy[q] && !measured[q] && model.idle_dephasing[q] > 0.0 {
                    if site[q][0] == 1.0 {
                        touched.push(q);
                    }
                    site[q] = compose(site[q], single(model.idle_dephasing[q], 2));
                }
            }
            for q in touched.drain(..) {
                let d = std::mem::replace(&mut site[q], [1.0, 0.0, 0.0, 0.0]);
                if d[0] < 1.0 {
                    by_dist
                        .entry(d.map(f64::to_bits))
                        .or_default()
                        .push((li as u32, q as u32));
                }
            }
        }

        let classes = by_dist
            .into_iter()
            .map(|(bits, sites)| {
                let d = bits.map(f64::from_bits);
                let p_event = (1.0 - d[0]).clamp(0.0, 1.0);
                let cond = if p_event > 0.0 {
                    [d[1] / p_event, (d[1] + d[2]) / p_event]
                } else {
                    [0.0, 0.0]
                };
                SiteClass {
                    p_event,
                    cond,
                    sites,
                }
            })
            .filter(|c| c.p_event > 0.0)
            .collect();
        Ok(Self {
            classes,
            depth: circuit.depth(),
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Number of distinct (layer, qubit) error sites.
    pub fn site_count(&self) -> usize {
        self.classes.iter().map(|c| c.sites.len()).sum()
    }

    /// Draws one shot's error events, sorted by `(layer, qubit)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<ErrorEvent> {
        let mut events = Vec::new();
        for class in &self.classes {
            let n = class.sites.len();
            if class.p_event >= 1.0 {
                for &s in &class.sites {
                    events.push(Self::draw(class, s, rng));
                }
                continue;
            }
            let log_q = (1.0 - class.p_event).ln();
            let mut i = 0usize;
            loop {
                let u: f64 = 1.0 - rng.gen::<f64>();
                let skip = (u.ln() / log_q).floor();
                if skip >= (n - i) as f64 {
                    break;
                }
                i += skip as usize;
                events.push(Self::draw(class, class.sites[i], rng));
                i += 1;
                if i >= n {
                    break;
                }
            }
        }
        events.sort_unstable();
        events
    }

    fn draw<R: Rng + ?Sized>(class: &SiteClass, (layer, q): (u32, u32), rng: &mut R) -> ErrorEvent {
        let u: f64 = rng.gen();
        let idx = if u < class.cond[0] {
            1
        } else if u < class.cond[1] {
            2
        } else {
            3
        };
        ErrorEvent {
            layer: layer as usize,
            qubit: QubitId(q as usize),
            pauli: Pauli::from_index(idx).expect("non-identity"),
        }
    }
}

/// Error events for one shot, a deterministic function of `shot_seed`.
pub fn sample_errors(
    circuit: &CliffordCircuit,
    map: &CouplingMap,
    model: &NoiseModel,
    shot_seed: u64,
) -> Result<Vec<ErrorEvent>> {
    let program = NoiseProgram::compile(circuit, map, model)?;
    let mut rng = rng::stream(shot_seed, Domain::Shot, 0);
    Ok(program.sample(&mut rng))
}
