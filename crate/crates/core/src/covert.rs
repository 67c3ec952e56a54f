//! Prime-and-probe covert channel.
//!
//! A sender hammers one of `m` disjoint neighbourhoods per round; the
//! receiver holds each neighbourhood's center in `|+⟩` and reads it back in
//! the X basis. A hammered center dephases, so its flip rate jumps towards
//! one half while the others stay at the readout floor.
//!
//! `paper_combined` adds a strength level on top of the index: the sender
//! hammers during either all of the receiver's probe shots or only a
//! fraction of them. Each neighbourhood reacts with its own susceptibility,
//! so the fraction and the level threshold are learned per neighbourhood by
//! [`train`] before transmission.

use serde::{Deserialize, Serialize};

use crate::attack::{check_disjoint, round_cnots};
use crate::circuit::{CliffordCircuit, Gate};
use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::rng::{derive_seed, Domain};
use crate::sim::run_shots;
use crate::topology::{hammer_neighborhood, CouplingMap, Neighborhood, QubitId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modulation {
    Ook,
    Index,
    PaperCombined,
}

impl std::str::FromStr for Modulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ook" => Ok(Self::Ook),
            "index" => Ok(Self::Index),
            "paper_combined" => Ok(Self::PaperCombined),
            other => Err(Error::Channel(format!("unknown modulation {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeMode {
    /// Probe qubits idle through the hammer window in the same circuit.
    SameCycle,
    /// Hammer circuit first, then a separate probe-only circuit.
    NextCycle,
}

impl std::str::FromStr for ProbeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "same_cycle" => Ok(Self::SameCycle),
            "next_cycle" => Ok(Self::NextCycle),
            other => Err(Error::Channel(format!("unknown probe mode {other:?}"))),
        }
    }
}

fn default_threshold() -> f64 {
    0.30
}

fn default_probe_mode() -> ProbeMode {
    ProbeMode::SameCycle
}

fn default_low_target() -> f64 {
    0.40
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// Centers of the `m` neighbourhoods, in index order.
    pub centers: Vec<QubitId>,
    pub modulation: Modulation,
    #[serde(default = "default_threshold")]
    pub decode_threshold: f64,
    pub probe_shots: u64,
    /// Seconds per round, used only for throughput.
    pub round_time_s: f64,
    /// Hammer rounds of a full-strength symbol.
    pub rounds_high: usize,
    /// Bits per mixed-radix block when the alphabet is not a power of two.
    #[serde(default)]
    pub block_bits: Option<usize>,
    #[serde(default = "default_probe_mode")]
    pub probe_mode: ProbeMode,
    /// Probe flip rate the low level aims for during training.
    #[serde(default = "default_low_target")]
    pub low_target: f64,
    /// Per-neighbourhood fraction of probe shots hammered at the low
    /// level, filled by [`train`].
    #[serde(default)]
    pub low_duty: Vec<f64>,
    /// Per-neighbourhood level threshold, filled by [`train`].
    #[serde(default)]
    pub level_threshold: Vec<f64>,
}

impl ChannelConfig {
    pub fn m(&self) -> usize {
        self.centers.len()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("channel config serialises")
    }

    /// Looks up the neighbourhoods and checks they are disjoint and more
    /// than `2 * hop_radius` hops apart.
    pub fn neighborhoods(&self, map: &CouplingMap, hop_radius: usize) -> Result<Vec<Neighborhood>> {
        if self.centers.is_empty() {
            return Err(Error::Channel("need at least one neighbourhood".into()));
        }
        if !(self.decode_threshold > 0.0 && self.decode_threshold < 1.0) {
            return Err(Error::Channel("decode_threshold must be in (0, 1)".into()));
        }
        if self.rounds_high < 1 || self.probe_shots < 1 {
            return Err(Error::Channel("rounds_high and probe_shots must be positive".into()));
        }
        let nbs = self
            .centers
            .iter()
            .map(|&c| hammer_neighborhood(map, c))
            .collect::<Result<Vec<_>>>()?;
        check_disjoint(&nbs)?;
        for (i, a) in nbs.iter().enumerate() {
            for b in &nbs[i + 1..] {
                let d = separation(map, a, b);
                if d <= 2 * hop_radius {
                    return Err(Error::Channel(format!(
                        "neighbourhoods of {} and {} are {d} hops apart, need more than {}",
                        a.center,
                        b.center,
                        2 * hop_radius
                    )));
                }
            }
        }
        Ok(nbs)
    }

    fn check_trained(&self) -> Result<()> {
        if self.modulation == Modulation::PaperCombined
            && (self.low_duty.len() != self.m() || self.level_threshold.len() != self.m())
        {
            return Err(Error::Channel(
                "paper_combined needs low_duty and level_threshold per neighbourhood; run training".into(),
            ));
        }
        Ok(())
    }
}

/// Smallest hop distance between members of two neighbourhoods.
pub fn separation(map: &CouplingMap, a: &Neighborhood, b: &Neighborhood) -> usize {
    let bm = b.members();
    a.members()
        .into_iter()
        .flat_map(|x| bm.iter().map(move |&y| (x, y)))
        .map(|(x, y)| map.hop_distance(x, y))
        .min()
        .unwrap_or(usize::MAX)
}

/// Greedy lowest-index choice of `m` interior connectors whose
/// neighbourhoods are pairwise more than `2 * hop_radius` apart.
pub fn select_channel_centers(map: &CouplingMap, m: usize, hop_radius: usize) -> Result<Vec<QubitId>> {
    let mut picked: Vec<Neighborhood> = Vec::new();
    for c in map.interior_connectors() {
        if picked.len() == m {
            break;
        }
        let nb = hammer_neighborhood(map, c)?;
        if picked.iter().all(|p| separation(map, p, &nb) > 2 * hop_radius) {
            picked.push(nb);
        }
    }
    if picked.len() < m {
        return Err(Error::Channel(format!(
            "only {} separated neighbourhoods fit on a {}-qubit device, need {m}",
            picked.len(),
            map.n()
        )));
    }
    Ok(picked.into_iter().map(|n| n.center).collect())
}

/// Bits per round: `1` for OOK, `log2 m` for index, `1 + log2 m` combined.
pub fn capacity(m: usize, modulation: Modulation) -> Result<f64> {
    if m < 1 {
        return Err(Error::Channel("m must be at least 1".into()));
    }
    // index is derived from combined so their difference is exactly one
    let combined = 1.0 + (m as f64).log2();
    Ok(match modulation {
        Modulation::Ook => 1.0,
        Modulation::Index => combined - 1.0,
        Modulation::PaperCombined => combined,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Low,
    High,
}

/// What the sender does in one round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hammer {
    pub index: usize,
    pub level: Level,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub rounds: Vec<Option<Hammer>>,
    pub payload_bits: usize,
}

/// Symbol alphabet and block layout of a configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Framing {
    alphabet: u128,
    bits: usize,
    symbols: usize,
}

fn framing(config: &ChannelConfig) -> Result<Framing> {
    let m = config.m();
    if m < 1 {
        return Err(Error::Channel("m must be at least 1".into()));
    }
    let alphabet: u128 = match config.modulation {
        Modulation::Ook => 2,
        Modulation::Index => m as u128,
        Modulation::PaperCombined => 2 * m as u128,
    };
    if alphabet < 2 {
        return Err(Error::Channel("index modulation needs m >= 2".into()));
    }
    if alphabet.is_power_of_two() && config.block_bits.is_none() {
        return Ok(Framing {
            alphabet,
            bits: alphabet.trailing_zeros() as usize,
            symbols: 1,
        });
    }
    let Some(bits) = config.block_bits else {
        return Err(Error::Channel(format!(
            "m = {m} is not a power of two; set block_bits to use mixed-radix blocks"
        )));
    };
    if !(1..=120).contains(&bits) {
        return Err(Error::Channel("block_bits must be in 1..=120".into()));
    }
    let mut symbols = 0;
    let mut span: u128 = 1;
    while span < 1u128 << bits {
        span = span.saturating_mul(alphabet);
        symbols += 1;
    }
    Ok(Framing {
        alphabet,
        bits,
        symbols,
    })
}

fn symbol_to_hammer(s: u128, config: &ChannelConfig) -> Option<Hammer> {
    let m = config.m() as u128;
    match config.modulation {
        Modulation::Ook => (s == 1).then_some(Hammer {
            index: 0,
            level: Level::High,
        }),
        Modulation::Index => Some(Hammer {
            index: s as usize,
            level: Level::High,
        }),
        Modulation::PaperCombined => Some(Hammer {
            index: (s % m) as usize,
            level: if s >= m { Level::High } else { Level::Low },
        }),
    }
}

fn hammer_to_symbol(h: Option<Hammer>, config: &ChannelConfig) -> u128 {
    let m = config.m() as u128;
    match (config.modulation, h) {
        (Modulation::Ook, h) => h.is_some() as u128,
        (_, None) => 0,
        (Modulation::Index, Some(h)) => h.index as u128,
        (Modulation::PaperCombined, Some(h)) => h.index as u128 + if h.level == Level::High { m } else { 0 },
    }
}

/// Maps payload bits to per-round hammer choices, most significant first.
pub fn encode(payload: &[bool], config: &ChannelConfig) -> Result<Schedule> {
    let f = framing(config)?;
    if payload.len() % f.bits != 0 {
        return Err(Error::Channel(format!(
            "payload of {} bits is not a multiple of {} bits per block",
            payload.len(),
            f.bits
        )));
    }
    let mut rounds = Vec::with_capacity(payload.len() / f.bits * f.symbols);
    for block in payload.chunks(f.bits) {
        let mut v = block.iter().fold(0u128, |acc, &b| acc << 1 | b as u128);
        let mut digits = vec![0u128; f.symbols];
        for d in digits.iter_mut().rev() {
            *d = v % f.alphabet;
            v /= f.alphabet;
        }
        rounds.extend(digits.into_iter().map(|s| symbol_to_hammer(s, config)));
    }
    Ok(Schedule {
        rounds,
        payload_bits: payload.len(),
    })
}

/// Decoder output; bits of blocks containing an erased round are flagged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decoded {
    pub bits: Vec<bool>,
    pub erased: Vec<bool>,
    pub erased_rounds: usize,
}

/// Reads one round. `None` marks an erasure.
fn read_round(obs: &[f64], config: &ChannelConfig) -> Option<Option<Hammer>> {
    let (idx, &best) = obs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))?;
    let hot = best > config.decode_threshold;
    match config.modulation {
        Modulation::Ook => Some(hot.then_some(Hammer {
            index: 0,
            level: Level::High,
        })),
        _ if !hot => None,
        Modulation::Index => Some(Some(Hammer {
            index: idx,
            level: Level::High,
        })),
        Modulation::PaperCombined => {
            let level = if best > config.level_threshold[idx] {
                Level::High
            } else {
                Level::Low
            };
            Some(Some(Hammer { index: idx, level }))
        }
    }
}

/// Threshold decoding of per-round, per-neighbourhood probe flip rates.
pub fn decode(observations: &[Vec<f64>], payload_bits: usize, config: &ChannelConfig) -> Result<Decoded> {
    config.check_trained()?;
    let f = framing(config)?;
    if payload_bits % f.bits != 0 || observations.len() != payload_bits / f.bits * f.symbols {
        return Err(Error::LengthMismatch {
            expected: payload_bits / f.bits * f.symbols,
            got: observations.len(),
        });
    }
    if let Some(o) = observations.iter().find(|o| o.len() != config.m()) {
        return Err(Error::LengthMismatch {
            expected: config.m(),
            got: o.len(),
        });
    }
    let mut bits = Vec::with_capacity(payload_bits);
    let mut erased = Vec::with_capacity(payload_bits);
    let mut erased_rounds = 0;
    for block in observations.chunks(f.symbols) {
        let mut v: u128 = 0;
        let mut lost = false;
        for obs in block {
            match read_round(obs, config) {
                Some(h) => v = v * f.alphabet + hammer_to_symbol(h, config),
                None => {
                    erased_rounds += 1;
                    lost = true;
                    v *= f.alphabet;
                }
            }
        }
        if v >> f.bits != 0 {
            lost = true;
        }
        for i in (0..f.bits).rev() {
            bits.push(!lost && v >> i & 1 == 1);
            erased.push(lost);
        }
    }
    Ok(Decoded {
        bits,
        erased,
        erased_rounds,
    })
}

/// One probe circuit: every center in `|+⟩`, the hammered neighbourhood
/// driven for `window` rounds, then X-basis readout of every center into
/// the clbit of its index.
fn round_circuit(
    map: &CouplingMap,
    nbs: &[Neighborhood],
    hammer: Option<usize>,
    window: usize,
    probe: bool,
) -> Result<CliffordCircuit> {
    let m = nbs.len();
    let mut c = CliffordCircuit::new(map.n(), if probe { m } else { 0 });
    let centers: Vec<QubitId> = nbs.iter().map(|n| n.center).collect();
    let idle_centers = || centers.iter().map(|&q| Gate::Idle(q));
    if probe {
        c.push_layer(centers.iter().map(|&q| Gate::H(q)))?;
    }
    let mut burst: Vec<Gate> = if probe { idle_centers().collect() } else { Vec::new() };
    if let Some(i) = hammer {
        burst.extend(nbs[i].driven().into_iter().map(Gate::X));
    }
    c.push_layer(burst)?;
    for r in 1..=window {
        let mut layer: Vec<Gate> = if probe { idle_centers().collect() } else { Vec::new() };
        if let Some(i) = hammer {
            layer.extend(round_cnots(&nbs[i], r));
        }
        c.push_layer(layer)?;
    }
    if probe {
        c.push_layer(centers.iter().map(|&q| Gate::H(q)))?;
        c.push_layer(
            centers
                .iter()
                .enumerate()
                .map(|(i, &q)| Gate::Measure { qubit: q, clbit: i }),
        )?;
    }
    Ok(c)
}

/// Probe flip rates of one round. The hammer is `(index, duty)`: the
/// sender drives neighbourhood `index` during that fraction of the probe
/// shots and stays quiet for the rest.
fn probe_round(
    map: &CouplingMap,
    model: &NoiseModel,
    nbs: &[Neighborhood],
    hammer: Option<(usize, f64)>,
    config: &ChannelConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let window = config.rounds_high;
    let shots = config.probe_shots;
    let (hammer, hot_shots) = match hammer {
        Some((i, duty)) => (Some(i), ((duty.clamp(0.0, 1.0) * shots as f64).round() as u64)),
        None => (None, 0),
    };
    let probe = |hammer: Option<usize>, n: u64, seed: u64| -> Result<Vec<u64>> {
        if n == 0 {
            return Ok(vec![0; nbs.len()]);
        }
        let c = match config.probe_mode {
            ProbeMode::SameCycle => round_circuit(map, nbs, hammer, window, true)?,
            ProbeMode::NextCycle => {
                let prime = round_circuit(map, nbs, hammer, window, false)?;
                run_shots(&prime, map, model, n, derive_seed(seed, Domain::Round, 1))?;
                round_circuit(map, nbs, None, window, true)?
            }
        };
        let batch = run_shots(&c, map, model, n, seed)?;
        Ok(batch.counts.iter().map(|c| c.flips).collect())
    };
    let hot = probe(hammer, hot_shots, seed)?;
    let quiet = probe(None, shots - hot_shots, derive_seed(seed, Domain::Round, 2))?;
    Ok(hot
        .iter()
        .zip(&quiet)
        .map(|(a, b)| (a + b) as f64 / shots as f64)
        .collect())
}

/// Learns, per neighbourhood, the quiet and full-strength probe flip
/// rates, the duty that puts the low level at `low_target`, and a level
/// threshold halfway between the low and high rates. Only needed for
/// `paper_combined`.
///
/// Hammer windows are not used as the low level because a single round
/// already saturates the X-basis probe on most neighbourhoods.
pub fn train(config: &mut ChannelConfig, map: &CouplingMap, model: &NoiseModel, seed: u64) -> Result<()> {
    let nbs = config.neighborhoods(map, model.hop_radius)?;
    let mut duties = Vec::with_capacity(nbs.len());
    let mut thresholds = Vec::with_capacity(nbs.len());
    for i in 0..nbs.len() {
        let s = |k: u64| derive_seed(seed, Domain::Round, 1 << 40 | (3 * i as u64 + k));
        let quiet = probe_round(map, model, &nbs, None, config, s(0))?[i];
        let high = probe_round(map, model, &nbs, Some((i, 1.0)), config, s(1))?[i];
        if high - quiet < 1e-9 {
            return Err(Error::Channel(format!("hammering {} does not raise its probe rate", nbs[i].center)));
        }
        let duty = ((config.low_target - quiet) / (high - quiet)).clamp(0.0, 1.0);
        let low = probe_round(map, model, &nbs, Some((i, duty)), config, s(2))?[i];
        duties.push(duty);
        thresholds.push(0.5 * (low + high));
    }
    config.low_duty = duties;
    config.level_threshold = thresholds;
    Ok(())
}

/// Probe observations of a whole schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transmission {
    pub observations: Vec<Vec<f64>>,
    /// Rounds in which a neighbourhood other than the hammered one was hot.
    pub disjointness_violations: usize,
}

/// Runs every round of `schedule` through the simulator. Rounds are
/// independent and seeded by their index.
pub fn transmit(
    schedule: &Schedule,
    config: &ChannelConfig,
    map: &CouplingMap,
    model: &NoiseModel,
    seed: u64,
) -> Result<Transmission> {
    config.check_trained()?;
    let nbs = config.neighborhoods(map, model.hop_radius)?;
    let mut observations = Vec::with_capacity(schedule.rounds.len());
    let mut violations = 0;
    for (r, h) in schedule.rounds.iter().enumerate() {
        let hammer = match h {
            Some(h) if h.index >= nbs.len() => {
                return Err(Error::Channel(format!("round {r} hammers unknown neighbourhood {}", h.index)))
            }
            Some(h) => Some((
                h.index,
                match h.level {
                    Level::High => 1.0,
                    Level::Low => config.low_duty.get(h.index).copied().unwrap_or(1.0),
                },
            )),
            None => None,
        };
        let obs = probe_round(map, model, &nbs, hammer, config, derive_seed(seed, Domain::Round, r as u64))?;
        let target = hammer.map(|(i, _)| i);
        if obs
            .iter()
            .enumerate()
            .any(|(i, &p)| Some(i) != target && p > config.decode_threshold)
        {
            violations += 1;
        }
        observations.push(obs);
    }
    Ok(Transmission {
        observations,
        disjointness_violations: violations,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelReport {
    pub bits_sent: usize,
    pub bit_errors: usize,
    pub ber: f64,
    pub bits_per_round: f64,
    pub throughput_bps: f64,
    pub rounds: usize,
    pub erased_rounds: usize,
}

/// Compares sent and received bits; erased bits always count as errors.
pub fn report(sent: &[bool], received: &Decoded, rounds: usize, config: &ChannelConfig) -> Result<ChannelReport> {
    if sent.len() != received.bits.len() {
        return Err(Error::LengthMismatch {
            expected: sent.len(),
            got: received.bits.len(),
        });
    }
    let bit_errors = sent
        .iter()
        .zip(&received.bits)
        .zip(&received.erased)
        .filter(|((s, r), &e)| e || s != r)
        .count();
    let bits_per_round = capacity(config.m(), config.modulation)?;
    Ok(ChannelReport {
        bits_sent: sent.len(),
        bit_errors,
        ber: if sent.is_empty() { 0.0 } else { bit_errors as f64 / sent.len() as f64 },
        bits_per_round,
        throughput_bps: bits_per_round / config.round_time_s,
        rounds,
        erased_rounds: received.erased_rounds,
    })
}

/// Payload bits from a hex string, most significant bit of each nibble first.
pub fn bits_from_hex(hex: &str) -> Result<Vec<bool>> {
    let mut out = Vec::with_capacity(hex.len() * 4);
    for c in hex.trim().chars() {
        let v = c
            .to_digit(16)
            .ok_or_else(|| Error::Channel(format!("not a hex digit: {c:?}")))?;
        out.extend((0..4).rev().map(|i| v >> i & 1 == 1));
    }
    Ok(out)
}

/// Payload bits from raw bytes, most significant bit first.
pub fn bits_from_bytes(bytes: &[u8]) -> Vec<bool> {
    bytes
        .iter()
        .flat_map(|b| (0..8).rev().map(move |i| b >> i & 1 == 1))
        .collect()
}
