//! Deterministic coordinate-descent fit of [`NoiseParams`] to hammer statistics.

use serde::{Deserialize, Serialize};

use std::collections::BTreeMap;

use crate::analysis::{flip_probability, locality_report, FlipTable};
use crate::attack::{
    build_baseline_circuit, build_benign_circuit, build_hammer_circuit, build_sweep, Basis, HammerSpec, SweepSpec, DRIVE_PERIOD, DRIVE_PHASE,
};
use crate::error::{Error, Result};
use crate::noise::{NoiseModel, NoiseParams};
use crate::rng::{derive_seed, Domain};
use crate::sim::run_shots;
use crate::topology::{CouplingMap, QubitId};

/// Statistics the fitted model should reproduce, with stopping tolerances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTargets {
    /// Mean hammered flip rate, Z basis, center in `|0⟩`.
    pub z0_mean: f64,
    /// Mean hammered flip rate, Z basis, center in `|1⟩`.
    pub z1_mean: f64,
    /// Hammered flip rate in the X basis, per center.
    pub x_mean: f64,
    /// Allowed range for the largest per-qubit flip rate of an idle cycle.
    pub benign_max: [f64; 2],
    /// Upper bound for the mean flip rate of qubits three or more hops from
    /// the center during a measure-all hammer cycle.
    pub floor: f64,
    /// Upper bound for the X-basis flip rate of an unhammered center.
    pub control_max: f64,
    /// Upper bound for the Z-basis flip rate of an unhammered center in
    /// `|1⟩`, per center.
    #[serde(default = "default_baseline_max")]
    pub baseline_max: f64,
    /// Allowed range for the mean, over measure-all hammer cycles, of the
    /// largest per-qubit flip rate.
    #[serde(default = "default_hammer_max_mean")]
    pub hammer_max_mean: [f64; 2],
    pub tol_z: f64,
    pub tol_x: f64,
    /// X-basis flip-rate window every center must reach for a round count
    /// to be accepted by [`select_rounds`].
    #[serde(default = "default_rounds_window")]
    pub rounds_window: [f64; 2],
}

fn default_rounds_window() -> [f64; 2] {
    [0.47, 0.53]
}

fn default_hammer_max_mean() -> [f64; 2] {
    [0.574, 0.774]
}

// Hardware baselines stayed below 0.15.
fn default_baseline_max() -> f64 {
    0.15
}

impl Default for CalibrationTargets {
    fn default() -> Self {
        Self {
            z0_mean: 0.455,
            z1_mean: 0.592,
            x_mean: 0.498,
            benign_max: [0.204, 0.261],
            floor: 0.045,
            control_max: 0.045,
            baseline_max: default_baseline_max(),
            hammer_max_mean: default_hammer_max_mean(),
            // With X/Y crosstalk capped at one half the model always has
            // z0 + z1 <= 1, while the targets sum to 1.047.
            tol_z: 0.035,
            tol_x: 0.03,
            rounds_window: default_rounds_window(),
        }
    }
}

impl CalibrationTargets {
    pub fn from_json(text: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(text)?;
        let probs = [
            t.z0_mean,
            t.z1_mean,
            t.x_mean,
            t.benign_max[0],
            t.benign_max[1],
            t.floor,
            t.control_max,
            t.baseline_max,
            t.hammer_max_mean[0],
            t.hammer_max_mean[1],
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p))
            || t.benign_max[0] > t.benign_max[1]
            || t.hammer_max_mean[0] > t.hammer_max_mean[1]
        {
            return Err(Error::InvalidSpec("calibration targets out of range".into()));
        }
        Ok(t)
    }

    fn benign_mid(&self) -> f64 {
        0.5 * (self.benign_max[0] + self.benign_max[1])
    }

    /// Whether `s` is within the stopping tolerances.
    pub fn met_by(&self, s: &ProtocolStats) -> bool {
        (s.z0_mean - self.z0_mean).abs() <= self.tol_z
            && (s.z1_mean - self.z1_mean).abs() <= self.tol_z
            && s.x.iter().all(|x| (x - self.x_mean).abs() <= self.tol_x)
            && (self.benign_max[0]..=self.benign_max[1]).contains(&s.benign_max)
            && s.background <= self.floor
            && s.x_control.iter().all(|&c| c <= self.control_max)
            && s.z1_baseline.iter().all(|&b| b <= self.baseline_max)
            && (self.hammer_max_mean[0]..=self.hammer_max_mean[1]).contains(&s.hammer_max_mean)
    }

    fn loss(&self, s: &ProtocolStats) -> f64 {
        let sq = |a: f64, b: f64| (a - b) * (a - b);
        let x_spread = s.x.iter().map(|&x| sq(x, self.x_mean)).sum::<f64>() / s.x.len().max(1) as f64;
        let floor_excess = (s.background - self.floor).max(0.0);
        let control_excess = s
            .x_control
            .iter()
            .map(|&c| (c - self.control_max).max(0.0))
            .fold(0.0, f64::max);
        let baseline_excess = s
            .z1_baseline
            .iter()
            .map(|&b| (b - self.baseline_max).max(0.0))
            .fold(0.0, f64::max);
        let [lo, hi] = self.hammer_max_mean;
        let hammer_miss = (lo - s.hammer_max_mean).max(s.hammer_max_mean - hi).max(0.0);
        sq(s.z0_mean, self.z0_mean)
            + sq(s.z1_mean, self.z1_mean)
            + sq(s.x_mean(), self.x_mean)
            + x_spread
            + sq(s.benign_max, self.benign_mid())
            + floor_excess * floor_excess
            + control_excess * control_excess
            + baseline_excess * baseline_excess
            + hammer_miss * hammer_miss
    }
}

/// How the statistics are measured.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub centers: Vec<QubitId>,
    pub rounds: usize,
    pub shots: u64,
    /// Upper bound on descent passes.
    pub max_iterations: usize,
    /// Re-pick the round count after fitting (see [`select_rounds`]).
    pub select_rounds: bool,
}

impl ProtocolParams {
    /// All interior connectors of `map`.
    pub fn for_map(map: &CouplingMap, rounds: usize, shots: u64) -> Self {
        Self {
            centers: map.interior_connectors(),
            rounds,
            shots,
            max_iterations: 40,
            select_rounds: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolStats {
    pub z0_mean: f64,
    pub z1_mean: f64,
    /// X-basis hammered flip rate per center.
    pub x: Vec<f64>,
    /// X-basis flip rate per center with no hammering.
    pub x_control: Vec<f64>,
    /// Z-basis flip rate per center in `|1⟩` with no hammering.
    pub z1_baseline: Vec<f64>,
    pub benign_max: f64,
    pub benign_mean: f64,
    /// Mean flip rate of qubits at least three hops from the center in
    /// measure-all hammer cycles (center in `|1⟩`).
    pub background: f64,
    /// Mean flip rate by hop distance 0, 1, 2, 3+ in the same cycles.
    pub locality: [f64; 4],
    /// Mean over the same cycles of the largest per-qubit flip rate.
    pub hammer_max_mean: f64,
}

impl ProtocolStats {
    pub fn x_mean(&self) -> f64 {
        self.x.iter().sum::<f64>() / self.x.len().max(1) as f64
    }
}

fn rate(map: &CouplingMap, model: &NoiseModel, c: &crate::circuit::CliffordCircuit, shots: u64, seed: u64) -> Result<f64> {
    Ok(run_shots(c, map, model, shots, seed)?.flip_rate(0))
}

/// Measures the calibration statistics of `model` under `protocol`.
pub fn protocol_stats(
    map: &CouplingMap,
    model: &NoiseModel,
    protocol: &ProtocolParams,
    seed: u64,
) -> Result<ProtocolStats> {
    if protocol.centers.is_empty() {
        return Err(Error::InvalidSpec("calibration needs at least one center".into()));
    }
    let spec = |center, state, basis| HammerSpec {
        center,
        initial_state: state,
        basis,
        rounds: protocol.rounds,
        shots: protocol.shots,
    };
    let s = |k: u64| derive_seed(seed, Domain::Calibration, k);
    let mut z0 = 0.0;
    let mut z1 = 0.0;
    let mut x = Vec::new();
    let mut x_control = Vec::new();
    let mut z1_baseline = Vec::new();
    for (i, &c) in protocol.centers.iter().enumerate() {
        let k = 4 * i as u64;
        z0 += rate(map, model, &build_hammer_circuit(map, &spec(c, 0, Basis::Z))?, protocol.shots, s(k))?;
        z1 += rate(map, model, &build_hammer_circuit(map, &spec(c, 1, Basis::Z))?, protocol.shots, s(k + 1))?;
        x.push(rate(map, model, &build_hammer_circuit(map, &spec(c, 0, Basis::X))?, protocol.shots, s(k + 2))?);
        x_control.push(rate(
            map,
            model,
            &build_baseline_circuit(map, &spec(c, 0, Basis::X))?,
            protocol.shots,
            s(k + 3),
        )?);
        z1_baseline.push(rate(
            map,
            model,
            &build_baseline_circuit(map, &spec(c, 1, Basis::Z))?,
            protocol.shots,
            s(3 << 32 | i as u64),
        )?);
    }
    let m = protocol.centers.len() as f64;
    let depth = protocol.rounds + 3;
    let benign = run_shots(
        &build_benign_circuit(map, depth, true, QubitId(0))?,
        map,
        model,
        protocol.shots,
        s(u64::MAX),
    )?;
    let rates: Vec<f64> = (0..map.n()).map(|q| benign.flip_rate(q)).collect();
    let mut table = FlipTable::default();
    let mut centers = BTreeMap::new();
    for (i, &c) in protocol.centers.iter().enumerate() {
        let sweep = SweepSpec {
            center_groups: vec![vec![c]],
            n_cycles: 1,
            rounds: protocol.rounds,
            shots: protocol.shots,
            center_state: 1,
        };
        let cycle = build_sweep(map, &sweep)?.remove(0);
        let batch = run_shots(&cycle.circuit, map, model, protocol.shots, s(1 << 32 | i as u64))?;
        table.extend(flip_probability(&batch, i)?);
        centers.insert(i, vec![c]);
    }
    let maxima = table.cycle_maxima();
    let hammer_max_mean = maxima.values().sum::<f64>() / maxima.len().max(1) as f64;
    let loc = locality_report(&table, map, &centers);
    let locality = loc.mean.map(|m| m.unwrap_or(0.0));
    Ok(ProtocolStats {
        z0_mean: z0 / m,
        z1_mean: z1 / m,
        x,
        x_control,
        z1_baseline,
        benign_max: rates.iter().copied().fold(0.0, f64::max),
        benign_mean: rates.iter().sum::<f64>() / rates.len() as f64,
        background: locality[3],
        locality,
        hammer_max_mean,
    })
}

/// Smallest round count `R <= max_rounds` with `R % DRIVE_PERIOD ==
/// DRIVE_PHASE` for which every center's X-basis hammered flip rate lies in
/// `window`.
pub fn select_rounds(
    map: &CouplingMap,
    model: &NoiseModel,
    centers: &[QubitId],
    shots: u64,
    window: [f64; 2],
    max_rounds: usize,
    seed: u64,
) -> Result<Option<usize>> {
    let inside = |rounds: usize| -> Result<bool> {
        for (i, &c) in centers.iter().enumerate() {
            let spec = HammerSpec {
                center: c,
                initial_state: 0,
                basis: Basis::X,
                rounds,
                shots,
            };
            let p = rate(
                map,
                model,
                &build_hammer_circuit(map, &spec)?,
                shots,
                derive_seed(seed, Domain::Calibration, 2 << 32 | i as u64),
            )?;
            if !(window[0]..=window[1]).contains(&p) {
                return Ok(false);
            }
        }
        Ok(true)
    };
    // Linear scan: shot noise makes the predicate slightly non-monotone
    // near the window edge, which would mislead a bisection.
    let mut r = DRIVE_PHASE;
    while r <= max_rounds {
        if inside(r)? {
            return Ok(Some(r));
        }
        r += DRIVE_PERIOD;
    }
    Ok(None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOutcome {
    pub params: NoiseParams,
    pub rounds: usize,
    pub achieved: ProtocolStats,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
}

impl CalibrationOutcome {
    pub fn model(&self, n: usize) -> NoiseModel {
        NoiseModel::from_params(n, &self.params)
    }

    /// Achieved against target, one line per statistic.
    pub fn report(&self, targets: &CalibrationTargets) -> String {
        let a = &self.achieved;
        let xs = a.x.iter().copied();
        let (xmin, xmax) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        format!(
            "statistic          achieved   target\n\
             z0 mean            {:.4}     {:.4} +- {:.3}\n\
             z1 mean            {:.4}     {:.4} +- {:.3}\n\
             x per center       {:.4}..{:.4}  {:.4} +- {:.3}\n\
             x control max      {:.4}     <= {:.3}\n\
             z1 baseline max    {:.4}     <= {:.3}\n\
             benign max         {:.4}     [{:.3}, {:.3}]\n\
             benign mean        {:.4}\n\
             hammer max mean    {:.4}     [{:.3}, {:.3}]\n\
             background (3+)    {:.4}     <= {:.3}\n\
             locality 0/1/2/3+  {:.4} {:.4} {:.4} {:.4}\n\
             rounds             {}\n\
             converged          {} after {} iterations ({} evaluations)\n",
            a.z0_mean,
            targets.z0_mean,
            targets.tol_z,
            a.z1_mean,
            targets.z1_mean,
            targets.tol_z,
            xmin,
            xmax,
            targets.x_mean,
            targets.tol_x,
            a.x_control.iter().copied().fold(0.0, f64::max),
            targets.control_max,
            a.z1_baseline.iter().copied().fold(0.0, f64::max),
            targets.baseline_max,
            a.benign_max,
            targets.benign_max[0],
            targets.benign_max[1],
            a.benign_mean,
            a.hammer_max_mean,
            targets.hammer_max_mean[0],
            targets.hammer_max_mean[1],
            a.background,
            targets.floor,
            a.locality[0],
            a.locality[1],
            a.locality[2],
            a.locality[3],
            self.rounds,
            self.converged,
            self.iterations,
            self.evaluations,
        )
    }
}

struct Coord {
    get: fn(&NoiseParams) -> f64,
    set: fn(&mut NoiseParams, f64),
    max: f64,
    step: f64,
}

fn coords() -> Vec<Coord> {
    vec![
        Coord {
            get: |p| p.crosstalk_z[0],
            set: |p, v| p.crosstalk_z[0] = v,
            max: 0.5,
            step: 0.02,
        },
        Coord {
            get: |p| p.crosstalk_z[1],
            set: |p, v| p.crosstalk_z[1] = v,
            max: 0.5,
            step: 0.01,
        },
        Coord {
            get: |p| p.crosstalk_xy[0],
            set: |p, v| p.crosstalk_xy[0] = v,
            max: 0.5,
            step: 0.01,
        },
        Coord {
            get: |p| p.crosstalk_xy[1],
            set: |p, v| p.crosstalk_xy[1] = v,
            max: 0.5,
            step: 0.005,
        },
        Coord {
            get: |p| p.p_relax,
            set: |p, v| p.p_relax = v,
            max: 0.5,
            step: 0.02,
        },
        Coord {
            get: |p| p.drive_relax,
            set: |p, v| p.drive_relax = v,
            max: 0.5,
            step: 0.001,
        },
        Coord {
            get: |p| p.p_excite,
            set: |p, v| p.p_excite = v,
            max: 0.5,
            step: 0.002,
        },
        Coord {
            get: |p| p.readout,
            set: |p, v| p.readout = v,
            max: 0.5,
            step: 0.002,
        },
        Coord {
            get: |p| p.idle_dephasing,
            set: |p, v| p.idle_dephasing = v,
            max: 0.5,
            step: 0.0005,
        },
        Coord {
            get: |p| p.sigma_jitter,
            set: |p, v| p.sigma_jitter = v,
            max: 3.0,
            step: 0.2,
        },
    ]
}

fn valid(p: &NoiseParams) -> bool {
    p.p_relax >= p.p_excite
}

/// Fits `initial` to `targets`. Every evaluation reuses the same seeds, so
/// the search is deterministic. An `initial` that already meets the
/// tolerances is returned unchanged after one evaluation; otherwise the
/// all-zero model is tried before descending.
pub fn calibrate(
    map: &CouplingMap,
    targets: &CalibrationTargets,
    protocol: &ProtocolParams,
    initial: &NoiseParams,
    seed: u64,
) -> Result<CalibrationOutcome> {
    let mut protocol = protocol.clone();
    let mut params = initial.clone();
    let mut evaluations = 0usize;
    let mut iterations = 0usize;
    let mut eval = |p: &NoiseParams, proto: &ProtocolParams| -> Result<ProtocolStats> {
        evaluations += 1;
        protocol_stats(map, &NoiseModel::from_params(map.n(), p), proto, seed)
    };
    let mut stats = eval(&params, &protocol)?;
    if !targets.met_by(&stats) {
        // The noiseless corner is cheap to rule out and is the exact answer
        // for all-zero targets.
        let mut zero = NoiseParams::zero();
        zero.hop_radius = params.hop_radius;
        let s = eval(&zero, &protocol)?;
        if targets.met_by(&s) {
            params = zero;
            stats = s;
        }
    }
    for _outer in 0..4 {
        let mut loss = targets.loss(&stats);
        let mut cs = coords();
        while iterations < protocol.max_iterations && !targets.met_by(&stats) {
            iterations += 1;
            let mut improved = false;
            for c in &cs {
                let x = (c.get)(&params);
                let mut candidates = vec![(x + c.step).min(c.max), (x - c.step).max(0.0)];
                if x != 0.0 {
                    candidates.push(0.0);
                }
                for v in candidates {
                    if v == x {
                        continue;
                    }
                    let mut trial = params.clone();
                    (c.set)(&mut trial, v);
                    if !valid(&trial) {
                        continue;
                    }
                    let s = eval(&trial, &protocol)?;
                    let l = targets.loss(&s);
                    if l < loss {
                        params = trial;
                        stats = s;
                        loss = l;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                for c in cs.iter_mut() {
                    c.step /= 2.0;
                }
                if cs[0].step < 1e-4 {
                    break;
                }
            }
        }
        if !protocol.select_rounds || !targets.met_by(&stats) {
            break;
        }
        let window = targets.rounds_window;
        let model = NoiseModel::from_params(map.n(), &params);
        match select_rounds(map, &model, &protocol.centers, protocol.shots, window, 200, seed)? {
            Some(r) if r != protocol.rounds => {
                protocol.rounds = r;
                stats = eval(&params, &protocol)?;
            }
            _ => break,
        }
    }
    Ok(CalibrationOutcome {
        converged: targets.met_by(&stats),
        params,
        rounds: protocol.rounds,
        achieved: stats,
        iterations,
        evaluations,
    })
}
