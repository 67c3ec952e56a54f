//! Flip tables, cycle statistics, locality buckets and exports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::attack::{build_sweep, SweepSpec};
use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::rng::{self, Domain};
use crate::sim::{run_shots, ShotBatch};
use crate::topology::{CouplingMap, QubitId};

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

pub const DEFAULT_THRESHOLD: f64 = 0.30;

/// 95% Wilson score interval for `flips` out of `shots`.
pub fn wilson_interval(flips: u64, shots: u64) -> Result<(f64, f64)> {
    if shots == 0 {
        return Err(Error::ZeroShots(0));
    }
    let n = shots as f64;
    let p = flips as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // the score interval always contains p; clamp away rounding
    Ok(((center - half).max(0.0).min(p), (center + half).min(1.0).max(p)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlipRow {
    pub cycle: usize,
    pub qubit: QubitId,
    pub p_flip: f64,
    pub shots: u64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl FlipRow {
    pub fn new(cycle: usize, qubit: QubitId, flips: u64, shots: u64) -> Result<Self> {
        let (ci_low, ci_high) = wilson_interval(flips, shots)?;
        Ok(Self {
            cycle,
            qubit,
            p_flip: flips as f64 / shots as f64,
            shots,
            ci_low,
            ci_high,
        })
    }
}

/// Rows sorted by `(cycle, qubit)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FlipTable {
    rows: Vec<FlipRow>,
}

const CSV_HEADER: &str = "cycle,qubit,p_flip,shots,ci_low,ci_high";

impl FlipTable {
    pub fn new(mut rows: Vec<FlipRow>) -> Self {
        rows.sort_by_key(|r| (r.cycle, r.qubit));
        Self { rows }
    }

    pub fn rows(&self) -> &[FlipRow] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = FlipRow>) {
        self.rows.extend(rows);
        self.rows.sort_by_key(|r| (r.cycle, r.qubit));
    }

    pub fn cycles(&self) -> BTreeSet<usize> {
        self.rows.iter().map(|r| r.cycle).collect()
    }

    pub fn cycle(&self, cycle: usize) -> impl Iterator<Item = &FlipRow> {
        self.rows.iter().filter(move |r| r.cycle == cycle)
    }

    /// Largest `p_flip` per cycle.
    pub fn cycle_maxima(&self) -> BTreeMap<usize, f64> {
        let mut out = BTreeMap::new();
        for r in &self.rows {
            let e = out.entry(r.cycle).or_insert(0.0f64);
            *e = e.max(r.p_flip);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(48 * (self.rows.len() + 1));
        s.push_str(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:.6},{},{:.6},{:.6}",
                r.cycle, r.qubit.0, r.p_flip, r.shots, r.ci_low, r.ci_high
            );
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == CSV_HEADER => {}
            other => {
                return Err(Error::MalformedTable(format!(
                    "expected header {CSV_HEADER:?}, got {other:?}"
                )))
            }
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| Error::MalformedTable(format!("line {}: {what}", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad("expected 6 fields"));
            }
            let int = |s: &str| s.trim().parse::<u64>().map_err(|_| bad("bad integer"));
            let real = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("bad number"));
            rows.push(FlipRow {
                cycle: int(f[0])? as usize,
                qubit: QubitId(int(f[1])? as usize),
                p_flip: real(f[2])?,
                shots: int(f[3])?,
                ci_low: real(f[4])?,
                ci_high: real(f[5])?,
            });
        }
        Ok(Self::new(rows))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.rows).expect("table serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(Self::new(serde_json::from_str(text)?))
    }

    /// Qubit × cycle heatmap: one `<rect class="cell">` per row.
    pub fn to_svg(&self) -> String {
        const CELL: usize = 8;
        const MARGIN: usize = 40;
        let n_cycles = self.rows.iter().map(|r| r.cycle + 1).max().unwrap_or(0);
        let n_qubits = self.rows.iter().map(|r| r.qubit.0 + 1).max().unwrap_or(0);
        let w = 2 * MARGIN + n_cycles * CELL;
        let h = 2 * MARGIN + n_qubits * CELL;
        let mut s = String::with_capacity(96 * (self.rows.len() + 8));
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
        );
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" font-family="sans-serif" text-anchor="middle">cycle</text>"#,
            MARGIN + n_cycles * CELL / 2,
            MARGIN - 12
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" font-family="sans-serif" text-anchor="middle" transform="rotate(-90 {} {})">qubit</text>"#,
            MARGIN - 12,
            MARGIN + n_qubits * CELL / 2,
            MARGIN - 12,
            MARGIN + n_qubits * CELL / 2
        );
        for r in &self.rows {
            let [red, green, blue] = heat(r.p_flip);
            let _ = writeln!(
                s,
                r#"<rect class="cell" x="{}" y="{}" width="{CELL}" height="{CELL}" fill="rgb({red},{green},{blue})"><title>cycle {} {} p={:.3}</title></rect>"#,
                MARGIN + r.cycle * CELL,
                MARGIN + r.qubit.0 * CELL,
                r.cycle,
                r.qubit,
                r.p_flip
            );
        }
        s.push_str("</svg>\n");
        s
    }

    pub fn write(&self, path: impl AsRef<Path>, format: ExportFormat) -> Result<()> {
        let body = match format {
            ExportFormat::Csv => self.to_csv(),
            ExportFormat::Json => self.to_json(),
            ExportFormat::Svg => self.to_svg(),
        };
        std::fs::write(path, body)?;
        Ok(())
    }
}

/// Linear black → bright yellow-white over `[0, 1]`.
fn heat(p: f64) -> [u8; 3] {
    let t = p.clamp(0.0, 1.0);
    [(255.0 * t).round() as u8, (235.0 * t).round() as u8, (120.0 * t).round() as u8]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Json,
    Svg,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "svg" | "svg-heatmap" => Ok(Self::Svg),
            other => Err(Error::InvalidSpec(format!("unknown export format {other:?}"))),
        }
    }
}

/// One row per measured classical bit of `batch`, tagged with `cycle`.
/// Rows are keyed by the measured qubit.
pub fn flip_probability(batch: &ShotBatch, cycle: usize) -> Result<Vec<FlipRow>> {
    let mut rows = Vec::new();
    for (clbit, (c, q)) in batch.counts.iter().zip(&batch.qubit).enumerate() {
        let Some(q) = q else { continue };
        if c.shots == 0 {
            return Err(Error::ZeroShots(clbit));
        }
        rows.push(FlipRow::new(cycle, *q, c.flips, c.shots)?);
    }
    rows.sort_by_key(|r| r.qubit);
    Ok(rows)
}

/// Result of running every cycle of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub table: FlipTable,
    /// Whether each cycle hammered.
    pub hammered: Vec<bool>,
    /// Centers hammered per cycle (hammer cycles only).
    pub centers: BTreeMap<usize, Vec<QubitId>>,
}

/// Builds and runs a sweep; cycle `c` is seeded from `(seed, c)`.
pub fn run_sweep(map: &CouplingMap, model: &NoiseModel, spec: &SweepSpec, seed: u64) -> Result<SweepResult> {
    let mut table = FlipTable::default();
    let mut hammered = Vec::with_capacity(spec.n_cycles);
    let mut centers = BTreeMap::new();
    for cycle in build_sweep(map, spec)? {
        let batch = run_shots(
            &cycle.circuit,
            map,
            model,
            spec.shots,
            rng::derive_seed(seed, Domain::Cycle, cycle.cycle as u64),
        )?;
        table.extend(flip_probability(&batch, cycle.cycle)?);
        hammered.push(!cycle.hammered.is_empty());
        if !cycle.hammered.is_empty() {
            centers.insert(cycle.cycle, cycle.hammered);
        }
    }
    Ok(SweepResult {
        table,
        hammered,
        centers,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CycleLabel {
    Hammered,
    Benign,
}

/// Strictly above `threshold` is hammered; ties are benign.
pub fn classify_cycle(cycle_max: f64, threshold: f64) -> CycleLabel {
    if cycle_max > threshold {
        CycleLabel::Hammered
    } else {
        CycleLabel::Benign
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionStats {
    pub cycles: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl ConditionStats {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        Some(Self {
            cycles: values.len(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: values.iter().sum::<f64>() / values.len() as f64,
        })
    }
}

/// Min, max and mean of the per-cycle maximum `p_flip`, per condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleStats {
    pub hammered: Option<ConditionStats>,
    pub benign: Option<ConditionStats>,
}

/// `hammered[c]` says whether cycle `c` was a hammer cycle; every cycle in
/// `0..hammered.len()` must be present in the table.
pub fn cycle_stats(table: &FlipTable, hammered: &[bool]) -> Result<CycleStats> {
    let maxima = table.cycle_maxima();
    let mut h = Vec::new();
    let mut b = Vec::new();
    for (c, &is_h) in hammered.iter().enumerate() {
        let m = *maxima.get(&c).ok_or(Error::MissingCycle(c))?;
        if is_h {
            h.push(m);
        } else {
            b.push(m);
        }
    }
    Ok(CycleStats {
        hammered: ConditionStats::of(&h),
        benign: ConditionStats::of(&b),
    })
}

/// Mean `p_flip` by hop distance to the nearest center hammered in the same
/// cycle, in buckets `0, 1, 2, 3+`. Cycles without centers are skipped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalityReport {
    pub mean: [Option<f64>; 4],
    pub count: [usize; 4],
}

impl LocalityReport {
    /// True when the present bucket means never increase with distance.
    pub fn is_non_increasing(&self) -> bool {
        let present: Vec<f64> = self.mean.iter().flatten().copied().collect();
        present.windows(2).all(|w| w[0] >= w[1])
    }
}

pub fn locality_report(
    table: &FlipTable,
    map: &CouplingMap,
    centers: &BTreeMap<usize, Vec<QubitId>>,
) -> LocalityReport {
    let mut sum = [0.0; 4];
    let mut count = [0usize; 4];
    for r in table.rows() {
        let Some(cs) = centers.get(&r.cycle).filter(|c| !c.is_empty()) else {
            continue;
        };
        if r.qubit.0 >= map.n() {
            continue;
        }
        let d = cs
            .iter()
            .map(|&c| map.hop_distance(c, r.qubit))
            .min()
            .unwrap_or(usize::MAX);
        let b = d.min(3);
        sum[b] += r.p_flip;
        count[b] += 1;
    }
    LocalityReport {
        mean: std::array::from_fn(|i| (count[i] > 0).then(|| sum[i] / count[i] as f64)),
        count,
    }
}

/// Two-sided permutation test on the difference of means of `a` and `b`.
/// Returns the p-value with the usual `(k + 1) / (n + 1)` correction.
pub fn permutation_test(a: &[f64], b: &[f64], permutations: usize, seed: u64) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 1.0;
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let observed = (mean(a) - mean(b)).abs();
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut rng = rng::stream(seed, Domain::Payload, u64::MAX);
    let mut extreme = 0usize;
    for _ in 0..permutations {
        pooled.shuffle(&mut rng);
        let (x, y) = pooled.split_at(a.len());
        if (mean(x) - mean(y)).abs() >= observed - 1e-15 {
            extreme += 1;
        }
    }
    (extreme + 1) as f64 / (permutations + 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::generate_heavy_hex_127;
    use proptest::prelude::*;

    #[test]
    fn wilson_edges() {
        let (lo, hi) = wilson_interval(0, 100).unwrap();
        assert_eq!(lo, 0.0);
        assert!(hi > 0.03 && hi < 0.04);
        let r = FlipRow::new(0, QubitId(0), 50, 100).unwrap();
        assert_eq!(r.p_flip, 0.5);
        assert!((r.ci_low + r.ci_high - 1.0).abs() < 1e-12);
        assert!(matches!(wilson_interval(0, 0), Err(Error::ZeroShots(_))));
    }

    proptest! {
        #[test]
        fn wilson_brackets_p(shots in 1u64..100_000, frac in 0.0f64..=1.0) {
            let flips = ((shots as f64) * frac).floor() as u64;
            let r = FlipRow::new(0, QubitId(0), flips, shots).unwrap();
            prop_assert!(0.0 <= r.ci_low && r.ci_low <= r.p_flip);
            prop_assert!(r.p_flip <= r.ci_high && r.ci_high <= 1.0);
        }
    }

    #[test]
    fn classify_ties_benign() {
        assert_eq!(classify_cycle(0.674, DEFAULT_THRESHOLD), CycleLabel::Hammered);
        assert_eq!(classify_cycle(0.237, DEFAULT_THRESHOLD), CycleLabel::Benign);
        assert_eq!(classify_cycle(0.30, DEFAULT_THRESHOLD), CycleLabel::Benign);
    }

    fn constant(cycles: usize, qubits: usize, flips: u64) -> FlipTable {
        FlipTable::new(
            (0..cycles)
                .flat_map(|c| (0..qubits).map(move |q| FlipRow::new(c, QubitId(q), flips, 1000).unwrap()))
                .collect(),
        )
    }

    #[test]
    fn constant_table_stats() {
        let t = constant(4, 5, 100);
        let s = cycle_stats(&t, &[true, false, true, false]).unwrap();
        for c in [s.hammered.unwrap(), s.benign.unwrap()] {
            assert_eq!((c.min, c.max, c.mean), (0.1, 0.1, 0.1));
        }
    }

    #[test]
    fn single_cycle_stats() {
        let t = FlipTable::new(vec![
            FlipRow::new(0, QubitId(0), 10, 100).unwrap(),
            FlipRow::new(0, QubitId(1), 70, 100).unwrap(),
        ]);
        let s = cycle_stats(&t, &[true]).unwrap();
        let h = s.hammered.unwrap();
        assert_eq!((h.min, h.max, h.mean), (0.7, 0.7, 0.7));
        assert!(s.benign.is_none());
        assert!(matches!(cycle_stats(&t, &[true, false]), Err(Error::MissingCycle(1))));
    }

    #[test]
    fn csv_empty_and_roundtrip() {
        assert_eq!(FlipTable::default().to_csv(), format!("{CSV_HEADER}\n"));
        let t = FlipTable::new(vec![
            FlipRow::new(1, QubitId(3), 7, 30).unwrap(),
            FlipRow::new(0, QubitId(9), 1, 3).unwrap(),
        ]);
        let csv = t.to_csv();
        assert!(csv.lines().nth(1).unwrap().starts_with("0,9,0.333333,3,"));
        let back = FlipTable::from_csv(&csv).unwrap();
        assert_eq!(back.to_csv(), csv);
        assert_eq!(FlipTable::from_csv(&back.to_csv()).unwrap(), back);
        assert!(FlipTable::from_csv("a,b\n").is_err());
    }

    #[test]
    fn json_roundtrip() {
        let t = constant(2, 3, 5);
        assert_eq!(FlipTable::from_json(&t.to_json()).unwrap(), t);
    }

    #[test]
    fn svg_cell_count() {
        let t = constant(40, 127, 10);
        let svg = t.to_svg();
        assert_eq!(svg.matches(r#"class="cell""#).count(), 5080);
        assert!(svg.contains("rgb(0,0,0)") || svg.contains("rgb(3,2,1)"));
    }

    #[test]
    fn locality_buckets() {
        let map = generate_heavy_hex_127();
        let rows = (0..127)
            .map(|q| {
                let d = map.hop_distance(QubitId(54), QubitId(q)).min(3) as u64;
                FlipRow::new(0, QubitId(q), 100 * (3 - d), 1000).unwrap()
            })
            .collect();
        let t = FlipTable::new(rows);
        let centers = BTreeMap::from([(0, vec![QubitId(54)])]);
        let rep = locality_report(&t, &map, &centers);
        assert_eq!(rep.count, [1, 2, 4, 120]);
        assert_eq!(rep.mean, [Some(0.3), Some(0.2), Some(0.1), Some(0.0)]);
        assert!(rep.is_non_increasing());
    }

    #[test]
    fn permutation_detects_shift() {
        let a: Vec<f64> = (0..50).map(|i| 0.01 * (i % 5) as f64).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 0.3).collect();
        assert!(permutation_test(&a, &b, 999, 1) < 0.01);
        assert!(permutation_test(&a, &a, 999, 1) > 0.5);
    }
}
