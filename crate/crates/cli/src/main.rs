//! `qrh`: run hammer experiments, sweeps, the covert channel and calibration
//! against the simulated device.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use qrowhammer::analysis::{
    classify_cycle, cycle_stats, locality_report, wilson_interval, CycleLabel, CycleStats, ExportFormat, FlipTable,
    LocalityReport, DEFAULT_THRESHOLD,
};
use qrowhammer::attack::{build_baseline_circuit, build_hammer_circuit, insert_dd, Basis, HammerSpec, SweepSpec};
use qrowhammer::covert::{self, ChannelConfig, Modulation, ProbeMode};
use qrowhammer::noise::calibrate::{calibrate, CalibrationTargets, ProtocolParams};
use qrowhammer::noise::NoiseModel;
use qrowhammer::rng::{derive_seed, stream, Domain};
use qrowhammer::sim::run_shots;
use qrowhammer::topology::{generate_heavy_hex, CouplingMap, HeavyHexLayout, QubitId};
use qrowhammer::{defaults, Error};

#[derive(Parser, Debug)]
#[command(name = "qrh", version, about = "Quantum rowhammer laboratory on a simulated heavy-hex device")]
struct Cli {
    /// Master seed; every artifact is a pure function of it.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Noise model JSON. Defaults to the committed calibrated model.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Coupling map: `eagle`, `osprey` or a JSON file.
    #[arg(long, global = true, default_value = "eagle")]
    map: String,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true, env = "QRH_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the coupling map as JSON.
    GenMap {
        /// Destination file, default `<out>/coupling_map.json`.
        path: Option<PathBuf>,
    },
    /// Hammer one connector and compare with an unhammered baseline.
    Hammer(HammerArgs),
    /// Alternate hammer and benign cycles and classify them.
    Sweep(SweepArgs),
    /// Loopback transmission over the covert channel.
    Covert(CovertArgs),
    /// Fit the noise model to target statistics.
    Calibrate(CalibrateArgs),
    /// Summarise a flip table written by `sweep`.
    Stats(StatsArgs),
}

#[derive(Args, Debug)]
struct HammerArgs {
    #[arg(long, default_value_t = 54)]
    center: usize,
    #[arg(long, default_value_t = 1)]
    state: u8,
    #[arg(long, default_value = "z")]
    basis: Basis,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long, default_value_t = defaults::SHOTS)]
    shots: u64,
    /// Also run the hammered circuit with dynamical decoupling on the center.
    #[arg(long)]
    dd: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// SweepSpec JSON; flags below override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    cycles: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long)]
    center_state: Option<u8>,
    /// Hammer nothing; every cycle is benign.
    #[arg(long)]
    benign_only: bool,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
}

#[derive(Args, Debug)]
struct CovertArgs {
    /// ChannelConfig JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Payload as hex. Default: random bits drawn from the seed.
    #[arg(long)]
    payload: Option<String>,
    /// Number of random payload bits when no payload is given.
    #[arg(long, default_value_t = 1000)]
    bits: usize,
    /// Neighbourhoods to pick automatically when no config is given.
    #[arg(long, default_value_t = 12)]
    m: usize,
    #[arg(long)]
    modulation: Option<Modulation>,
    #[arg(long)]
    probe_mode: Option<ProbeMode>,
    #[arg(long)]
    round_time: Option<f64>,
    #[arg(long)]
    probe_shots: Option<u64>,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// CalibrationTargets JSON. Default: the built-in hardware statistics.
    #[arg(long)]
    targets: Option<PathBuf>,
    /// Maximum descent passes.
    #[arg(long, default_value_t = 40)]
    budget: usize,
    #[arg(long, default_value_t = 2000)]
    shots: u64,
    /// Starting round count. Default: the committed one.
    #[arg(long)]
    rounds: Option<usize>,
    /// Where to write the model, default `<out>/noise_model.json`.
    path: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    /// Flip table CSV.
    table: PathBuf,
    /// SweepSpec used to produce the table, for the locality report.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Also render the table as an SVG heatmap.
    #[arg(long)]
    svg: Option<PathBuf>,
}

enum CliError {
    Config(String),
    Io(String),
    NotConverged,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Io(m) => f.write_str(m),
            CliError::NotConverged => f.write_str("calibration did not converge; best model written"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) => CliError::Io(e.to_string()),
            e => CliError::Config(e.to_string()),
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::NotConverged => 2,
            CliError::Io(_) => 3,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serialises");
    s.push('\n');
    s
}

struct Ctx {
    seed: u64,
    map: CouplingMap,
    model: NoiseModel,
    out: PathBuf,
}

fn load_map(spec: &str) -> CliResult<CouplingMap> {
    let layout = match spec {
        "eagle" => Some(HeavyHexLayout::EAGLE),
        "osprey" => Some(HeavyHexLayout::OSPREY),
        _ => None,
    };
    match layout {
        Some(l) => Ok(generate_heavy_hex(l)?),
        None => Ok(CouplingMap::from_json(&read(Path::new(spec))?)?),
    }
}

fn load_model(path: Option<&Path>, map: &CouplingMap) -> CliResult<NoiseModel> {
    let model = match path {
        Some(p) => NoiseModel::from_json(&read(p)?)?,
        None if map.n() == 127 => NoiseModel::default_calibrated(),
        None => NoiseModel::from_params(map.n(), &NoiseModel::default_params()),
    };
    if model.n() != map.n() {
        return Err(CliError::Config(format!(
            "noise model covers {} qubits but the map has {}",
            model.n(),
            map.n()
        )));
    }
    Ok(model)
}

#[derive(Serialize)]
struct FlipEstimate {
    p_flip: f64,
    flips: u64,
    shots: u64,
    ci_low: f64,
    ci_high: f64,
}

impl FlipEstimate {
    fn from_batch(batch: &qrowhammer::sim::ShotBatch) -> CliResult<Self> {
        let c = batch.counts[0];
        let (lo, hi) = wilson_interval(c.flips, c.shots)?;
        Ok(Self {
            p_flip: batch.flip_rate(0),
            flips: c.flips,
            shots: c.shots,
            ci_low: lo,
            ci_high: hi,
        })
    }
}

#[derive(Serialize)]
struct HammerReport {
    spec: HammerSpec,
    seed: u64,
    hammered: FlipEstimate,
    baseline: FlipEstimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    hammered_dd: Option<FlipEstimate>,
}

fn cmd_hammer(ctx: &Ctx, a: &HammerArgs) -> CliResult<()> {
    let spec = HammerSpec {
        center: QubitId(a.center),
        initial_state: a.state,
        basis: a.basis,
        rounds: a.rounds.unwrap_or_else(defaults::rounds),
        shots: a.shots,
    };
    let run = |c, k| -> CliResult<FlipEstimate> {
        let batch = run_shots(c, &ctx.map, &ctx.model, spec.shots, derive_seed(ctx.seed, Domain::Shot, k))?;
        FlipEstimate::from_batch(&batch)
    };
    let circuit = build_hammer_circuit(&ctx.map, &spec)?;
    let hammered = run(&circuit, 0)?;
    let baseline_circuit = build_baseline_circuit(&ctx.map, &spec)?;
    let baseline = run(&baseline_circuit, 1)?;
    let hammered_dd = if a.dd {
        let dd = insert_dd(&circuit, &[spec.center])?;
        Some(run(&dd, 2)?)
    } else {
        None
    };
    println!(
        "center {} state {} basis {:?} rounds {} shots {}",
        a.center, spec.initial_state, spec.basis, spec.rounds, spec.shots
    );
    let line = |name: &str, e: &FlipEstimate| {
        println!("{name:<12} p_flip {:.4}  95% CI [{:.4}, {:.4}]", e.p_flip, e.ci_low, e.ci_high)
    };
    line("hammered", &hammered);
    line("baseline", &baseline);
    if let Some(e) = &hammered_dd {
        line("hammered+dd", e);
    }
    let report = HammerReport {
        spec,
        seed: ctx.seed,
        hammered,
        baseline,
        hammered_dd,
    };
    write(&ctx.out.join("hammer.json"), &json(&report))
}

#[derive(Serialize)]
struct SweepSummary {
    spec: SweepSpec,
    seed: u64,
    threshold: f64,
    stats: CycleStats,
    /// Cycles whose threshold label matches whether they hammered.
    correct: usize,
    cycles: usize,
    locality: Option<LocalityReport>,
}

fn summarise(
    table: &FlipTable,
    hammered: &[bool],
    centers: Option<(&CouplingMap, &std::collections::BTreeMap<usize, Vec<QubitId>>)>,
    threshold: f64,
) -> CliResult<(CycleStats, usize, Option<LocalityReport>)> {
    let stats = cycle_stats(table, hammered)?;
    let maxima = table.cycle_maxima();
    let correct = maxima
        .iter()
        .filter(|(c, &m)| (classify_cycle(m, threshold) == CycleLabel::Hammered) == hammered[**c])
        .count();
    let locality = centers
        .filter(|(_, c)| !c.is_empty())
        .map(|(map, c)| locality_report(table, map, c));
    Ok((stats, correct, locality))
}

fn print_summary(stats: &CycleStats, correct: usize, cycles: usize, locality: Option<&LocalityReport>) {
    for (name, s) in [("hammered", &stats.hammered), ("benign", &stats.benign)] {
        if let Some(s) = s {
            println!(
                "{name:<9} cycles {:>3}  max p_flip min {:.3} max {:.3} mean {:.3}",
                s.cycles, s.min, s.max, s.mean
            );
        }
    }
    println!("classifier {correct}/{cycles}");
    if let Some(l) = locality {
        let fmt = |m: Option<f64>| m.map_or("-".to_string(), |v| format!("{v:.4}"));
        println!(
            "locality  d=0 {}  d=1 {}  d=2 {}  d>=3 {}",
            fmt(l.mean[0]),
            fmt(l.mean[1]),
            fmt(l.mean[2]),
            fmt(l.mean[3])
        );
    }
}

fn cmd_sweep(ctx: &Ctx, a: &SweepArgs) -> CliResult<()> {
    let mut spec = match &a.spec {
        Some(p) => SweepSpec::from_json(&read(p)?)?,
        None => SweepSpec {
            center_groups: ctx.map.interior_connectors().into_iter().map(|c| vec![c]).collect(),
            n_cycles: defaults::N_CYCLES,
            rounds: defaults::rounds(),
            shots: defaults::SHOTS,
            center_state: 1,
        },
    };
    if let Some(v) = a.cycles {
        spec.n_cycles = v;
    }
    if let Some(v) = a.rounds {
        spec.rounds = v;
    }
    if let Some(v) = a.shots {
        spec.shots = v;
    }
    if let Some(v) = a.center_state {
        spec.center_state = v;
    }
    if a.benign_only {
        spec.center_groups.clear();
    }
    let result = qrowhammer::analysis::run_sweep(&ctx.map, &ctx.model, &spec, ctx.seed)?;
    let (stats, correct, locality) =
        summarise(&result.table, &result.hammered, Some((&ctx.map, &result.centers)), a.threshold)?;
    print_summary(&stats, correct, spec.n_cycles, locality.as_ref());
    result.table.write(ctx.out.join("sweep.csv"), ExportFormat::Csv)?;
    result.table.write(ctx.out.join("sweep.svg"), ExportFormat::Svg)?;
    let summary = SweepSummary {
        cycles: spec.n_cycles,
        spec,
        seed: ctx.seed,
        threshold: a.threshold,
        stats,
        correct,
        locality,
    };
    write(&ctx.out.join("cycle_stats.json"), &json(&summary))
}

#[derive(Serialize)]
struct CovertOutput {
    config: ChannelConfig,
    seed: u64,
    report: covert::ChannelReport,
    disjointness_violations: usize,
}

fn cmd_covert(ctx: &Ctx, a: &CovertArgs) -> CliResult<()> {
    let mut config = match &a.config {
        Some(p) => ChannelConfig::from_json(&read(p)?)?,
        None => {
            let centers = covert::select_channel_centers(&ctx.map, a.m, ctx.model.hop_radius)?;
            let modulation = if centers.len() == 1 {
                Modulation::Ook
            } else {
                Modulation::PaperCombined
            };
            let block_bits = (modulation == Modulation::PaperCombined && !(2 * centers.len()).is_power_of_two())
                .then_some(50);
            ChannelConfig {
                centers,
                modulation,
                decode_threshold: DEFAULT_THRESHOLD,
                probe_shots: 2000,
                round_time_s: 0.01,
                rounds_high: defaults::rounds(),
                block_bits,
                probe_mode: ProbeMode::SameCycle,
                low_target: 0.40,
                low_duty: Vec::new(),
                level_threshold: Vec::new(),
            }
        }
    };
    if let Some(v) = a.modulation {
        config.modulation = v;
    }
    if let Some(v) = a.probe_mode {
        config.probe_mode = v;
    }
    if let Some(v) = a.round_time {
        config.round_time_s = v;
    }
    if let Some(v) = a.probe_shots {
        config.probe_shots = v;
    }
    if config.modulation == Modulation::PaperCombined && config.low_duty.len() != config.m() {
        covert::train(&mut config, &ctx.map, &ctx.model, derive_seed(ctx.seed, Domain::Calibration, 0))?;
    }
    let payload = match &a.payload {
        Some(hex) => covert::bits_from_hex(hex)?,
        None => {
            use rand::Rng;
            let mut rng = stream(ctx.seed, Domain::Payload, 0);
            (0..a.bits).map(|_| rng.gen::<bool>()).collect()
        }
    };
    let schedule = covert::encode(&payload, &config)?;
    let tx = covert::transmit(&schedule, &config, &ctx.map, &ctx.model, ctx.seed)?;
    let decoded = covert::decode(&tx.observations, payload.len(), &config)?;
    let report = covert::report(&payload, &decoded, schedule.rounds.len(), &config)?;
    println!(
        "m {} {:?}: {} bits in {} rounds, {} errors (BER {:.4}), {:.3} bits/round, {:.1} bps",
        config.m(),
        config.modulation,
        report.bits_sent,
        report.rounds,
        report.bit_errors,
        report.ber,
        report.bits_per_round,
        report.throughput_bps
    );
    let out = CovertOutput {
        config,
        seed: ctx.seed,
        report,
        disjointness_violations: tx.disjointness_violations,
    };
    write(&ctx.out.join("covert_report.json"), &json(&out))
}

fn cmd_calibrate(ctx: &Ctx, a: &CalibrateArgs) -> CliResult<()> {
    let targets = match &a.targets {
        Some(p) => CalibrationTargets::from_json(&read(p)?)?,
        None => CalibrationTargets::default(),
    };
    let mut protocol = ProtocolParams::for_map(&ctx.map, a.rounds.unwrap_or_else(defaults::rounds), a.shots);
    protocol.max_iterations = a.budget;
    let initial = ctx.model.params();
    let outcome = calibrate(&ctx.map, &targets, &protocol, &initial, ctx.seed)?;
    print!("{}", outcome.report(&targets));
    let path = a.path.clone().unwrap_or_else(|| ctx.out.join("noise_model.json"));
    write(&path, &outcome.model(ctx.map.n()).to_json())?;
    write(&ctx.out.join("calibration.json"), &json(&outcome))?;
    if outcome.converged {
        Ok(())
    } else {
        Err(CliError::NotConverged)
    }
}

fn cmd_stats(ctx: &Ctx, a: &StatsArgs) -> CliResult<()> {
    let table = FlipTable::from_csv(&read(&a.table)?)?;
    let cycles: Vec<usize> = table.cycles().into_iter().collect();
    let n = cycles.last().map_or(0, |c| c + 1);
    let spec = a.spec.as_deref().map(|p| read(p).and_then(|t| Ok(SweepSpec::from_json(&t)?))).transpose()?;
    let hammered: Vec<bool> = (0..n)
        .map(|c| spec.as_ref().map_or(SweepSpec::is_hammer_cycle(c), |s| !s.centers_in(c).is_empty()))
        .collect();
    let centers = spec.as_ref().map(|s| {
        (0..n)
            .filter(|&c| !s.centers_in(c).is_empty())
            .map(|c| (c, s.centers_in(c).to_vec()))
            .collect::<std::collections::BTreeMap<_, _>>()
    });
    let (stats, correct, locality) =
        summarise(&table, &hammered, centers.as_ref().map(|c| (&ctx.map, c)), a.threshold)?;
    print_summary(&stats, correct, cycles.len(), locality.as_ref());
    if let Some(p) = &a.svg {
        write(p, &table.to_svg())?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let map = load_map(&cli.map)?;
    if let Command::GenMap { path } = &cli.command {
        let path = path.clone().unwrap_or_else(|| cli.out.join("coupling_map.json"));
        return write(&path, &map.to_json());
    }
    let model = load_model(cli.model.as_deref(), &map)?;
    let ctx = Ctx {
        seed: cli.seed,
        map,
        model,
        out: cli.out,
    };
    match &cli.command {
        Command::GenMap { .. } => unreachable!(),
        Command::Hammer(a) => cmd_hammer(&ctx, a),
        Command::Sweep(a) => cmd_sweep(&ctx, a),
        Command::Covert(a) => cmd_covert(&ctx, a),
        Command::Calibrate(a) => cmd_calibrate(&ctx, a),
        Command::Stats(a) => cmd_stats(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
