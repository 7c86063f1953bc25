//! The `falcon` command line. Every subcommand reads a [`RunConfig`] with
//! `--config`, applies `--set key=value` overrides and writes its artifacts
//! under `--out`. Exit status is 0 on success, 1 for argument errors and 2
//! for data or format errors.

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{error::ErrorKind, Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::RunConfig;
use crate::data::{gen_synthetic, Dataset, Split};
use crate::error::{Error, Result};
use crate::features::FeatureKind;
use crate::metrics::{ops_from_traces, training_cost, write_csv, write_json, write_series, BenefitRow, Measured};
use crate::nn::argmax;
use crate::select::{
    group_classes, read_assignment_csv, select_feature_per_class, train_probe_models, write_assignment_csv,
};
use crate::sim::{
    calibrate_cost_table, energy_sweep, exec_share, simulate_inference, simulate_tree, simulate_tree_traced,
    EventCounters, SimSummary,
};
use crate::tree::{
    build_tree, evaluate, extend_tree, load_tree, plan_extension, save_tree, sweep_delta, train_baseline, FalconTree,
    SweepRow,
};

#[derive(Debug, Parser)]
#[command(name = "falcon", about = "Feature-driven classifier trees and an accelerator simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Override a configuration value, e.g. `tree.delta=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic dataset described by `data.synthetic`.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Extract feature vectors for every item.
    Features {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated kinds, e.g. `red,tex90`; all twelve by default.
        #[arg(long)]
        kinds: Option<String>,
    },
    /// Train probes and assign a feature to each class.
    Select {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Train the baseline and a tree.
    Build {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Use an existing assignment instead of running selection.
        #[arg(long)]
        assignment: Option<PathBuf>,
    },
    /// Accuracy and OPS of a tree on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        tree: PathBuf,
        /// Also write plot series for the benefit and the configured thresholds.
        #[arg(long)]
        emit_plot: bool,
    },
    /// Accuracy, OPS and simulated energy per divergence threshold.
    SweepDelta {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        tree: PathBuf,
        /// Comma-separated thresholds; `0,0.2,...,1.0` expands the step.
        #[arg(long)]
        deltas: Option<String>,
        /// Also write whitespace-separated plot series.
        #[arg(long)]
        emit_plot: bool,
    },
    /// Simulate the tree on the engine for each test image.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        tree: PathBuf,
        /// Dump the event log of the first image.
        #[arg(long)]
        trace: bool,
        /// Simulate at most this many images.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Add the classes of another dataset to a tree.
    Extend {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        tree: PathBuf,
        /// Dataset holding only the new classes.
        #[arg(long)]
        new: PathBuf,
    },
    /// Fit SRAM costs to the target execution share.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        tree: PathBuf,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::GenData { common }
            | Command::Features { common, .. }
            | Command::Select { common, .. }
            | Command::Build { common, .. }
            | Command::Eval { common, .. }
            | Command::SweepDelta { common, .. }
            | Command::Simulate { common, .. }
            | Command::Extend { common, .. }
            | Command::Calibrate { common, .. } => common,
        }
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_data_error() {
                2
            } else {
                1
            }
        }
    }
}

fn execute(cmd: Command) -> Result<()> {
    let common = cmd.common();
    let cfg = RunConfig::load(&common.config)?.with_overrides(&common.set)?;
    cfg.validate()?;
    let out = common.out.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    match &cmd {
        Command::GenData { .. } => gen_data(&cfg, &out),
        Command::Features { data, kinds, .. } => features(&cfg, &out, data, kinds.as_deref()),
        Command::Select { data, .. } => select(&cfg, &out, data),
        Command::Build { data, assignment, .. } => build(&cfg, &out, data, assignment.as_deref()),
        Command::Eval { data, tree, emit_plot, .. } => eval(&cfg, &out, data, tree, *emit_plot),
        Command::SweepDelta { data, tree, deltas, emit_plot, .. } => {
            sweep(&cfg, &out, data, tree, deltas.as_deref(), *emit_plot)
        }
        Command::Simulate { data, tree, trace, limit, .. } => simulate(&cfg, &out, data, tree, *trace, *limit),
        Command::Extend { data, tree, new, .. } => extend(&cfg, &out, data, tree, new),
        Command::Calibrate { data, tree, .. } => calibrate(&cfg, &out, data, tree),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn json_file<T: Serialize + ?Sized>(out: &Path, name: &str, value: &T) -> Result<()> {
    write_json(value, create(&out.join(name))?)
}

fn csv_file<T: Serialize>(out: &Path, name: &str, rows: &[T]) -> Result<()> {
    write_csv(rows, create(&out.join(name))?)
}

fn load_data(cfg: &RunConfig, dir: &Path) -> Result<Dataset> {
    let ds = Dataset::load_dir(dir)?;
    match cfg.data.resize {
        Some((w, h)) if ds.image_dims()? != (w, h) => ds.resized(w, h),
        _ => Ok(ds),
    }
}

/// Expands `a,b,...,z` into `a, b, b+(b-a), ...` up to `z`.
pub fn parse_deltas(text: &str) -> Result<Vec<f64>> {
    let bad = |t: &str| Error::argument(format!("bad threshold list '{text}' at '{t}'"));
    let tokens: Vec<&str> = text.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
    let mut out: Vec<f64> = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if tokens[i] == "..." {
            let n = out.len();
            let end: f64 = tokens.get(i + 1).ok_or_else(|| bad("..."))?.parse().map_err(|_| bad(tokens[i + 1]))?;
            if n < 2 {
                return Err(bad("..."));
            }
            let (a, step) = (out[n - 2], out[n - 1] - out[n - 2]);
            if !(step > 0.0) {
                return Err(bad("..."));
            }
            let mut k = 2.0;
            loop {
                let v = ((a + k * step) * 1e12).round() / 1e12;
                if v >= end - 1e-12 {
                    break;
                }
                out.push(v);
                k += 1.0;
            }
            out.push(end);
            i += 2;
        } else {
            out.push(tokens[i].parse().map_err(|_| bad(tokens[i]))?);
            i += 1;
        }
    }
    if out.is_empty() {
        return Err(Error::argument("empty threshold list"));
    }
    Ok(out)
}

fn gen_data(cfg: &RunConfig, out: &Path) -> Result<()> {
    let mut ds = gen_synthetic(&cfg.data.synthetic)?;
    if let Some((w, h)) = cfg.data.resize {
        ds = ds.resized(w, h)?;
    }
    ds.save_dir(out)?;
    log::info!("wrote {} images over {} classes to {}", ds.len(), ds.num_classes(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct FeatureRow {
    item: usize,
    class: String,
    kind: String,
    ops: u64,
    values: String,
}

fn features(cfg: &RunConfig, out: &Path, data: &Path, kinds: Option<&str>) -> Result<()> {
    let ds = load_data(cfg, data)?;
    let kinds: Vec<FeatureKind> = match kinds {
        Some(list) => list.split(',').map(str::parse).collect::<Result<_>>()?,
        None => FeatureKind::ALL.to_vec(),
    };
    let dims = ds.image_dims()?;
    let mut rows = Vec::new();
    for (i, it) in ds.items().iter().enumerate() {
        for &kind in &kinds {
            let f = cfg.features.extract(&it.image, kind)?;
            rows.push(FeatureRow {
                item: i,
                class: ds.class_names()[it.class].clone(),
                kind: kind.to_string(),
                ops: cfg.features.extraction_ops(kind, dims),
                values: f.values.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(" "),
            });
        }
    }
    csv_file(out, "features.csv", &rows)
}

#[derive(Serialize)]
struct ConfidenceRow<'a> {
    class: &'a str,
    kind: String,
    confidence: f64,
}

fn select(cfg: &RunConfig, out: &Path, data: &Path) -> Result<()> {
    let ds = load_data(cfg, data)?;
    let probes = train_probe_models(&ds, &FeatureKind::ALL, &cfg.select, &cfg.features)?;
    let table = crate::select::confidence_table(&probes, &ds, &cfg.select, &cfg.features)?;
    let mut rows = Vec::new();
    for (c, row) in table.values.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            rows.push(ConfidenceRow { class: &table.class_names[c], kind: table.kinds[k].to_string(), confidence: v });
        }
    }
    csv_file(out, "confidences.csv", &rows)?;
    let assignment = crate::select::assign_from_confidences(&table, cfg.select.delta)?;
    write_assignment_csv(&assignment, create(&out.join("assignment.csv"))?)?;
    json_file(out, "grouping.json", &group_classes(&assignment)?)?;
    json_file(out, "probe_cost.json", &serde_json::json!({ "probeUpdateMacs": probes.total_update_macs() }))
}

fn build(cfg: &RunConfig, out: &Path, data: &Path, assignment: Option<&Path>) -> Result<()> {
    let ds = load_data(cfg, data)?;
    let tree_cfg = cfg.tree_config();
    let (assignment, probe_macs) = match assignment {
        Some(p) => (read_assignment_csv(File::open(p).map_err(|e| Error::io(p, e))?, &p.display().to_string())?, 0),
        None => {
            let probes = train_probe_models(&ds, &FeatureKind::ALL, &cfg.select, &cfg.features)?;
            (select_feature_per_class(&probes, &ds, &cfg.select, &cfg.features)?, probes.total_update_macs())
        }
    };
    write_assignment_csv(&assignment, create(&out.join("assignment.csv"))?)?;
    let grouping = group_classes(&assignment)?;
    json_file(out, "grouping.json", &grouping)?;
    let (baseline, base_stats) =
        train_baseline(&ds, &cfg.baseline.hidden, &cfg.baseline.train, &tree_cfg.deploy_activation)?;
    let (tree, mut record) = build_tree(&ds, &grouping, &tree_cfg, Some(baseline))?;
    record.probe_update_macs = probe_macs;
    save_tree(&tree, &out.join("tree"))?;
    json_file(out, "build_record.json", &record)?;
    json_file(out, "training_cost.json", &training_cost(&record, Some(base_stats.weight_update_macs)))?;
    log::info!("built a tree of {} nodes over {} classes", tree.nodes.len(), ds.num_classes());
    Ok(())
}

/// Standalone baseline accuracy and per-input OPS on the test split.
fn baseline_alone(tree: &FalconTree, ds: &Dataset) -> Result<Option<Measured>> {
    let Some(b) = tree.baseline else {
        return Ok(None);
    };
    let node = &tree.nodes[b];
    let (mut n, mut correct) = (0usize, 0usize);
    for it in ds.split(Split::Test) {
        let out = node.model.forward(&it.image.normalized())?;
        n += 1;
        if node.labels[argmax(&out)] == ds.class_names()[it.class] {
            correct += 1;
        }
    }
    if n == 0 {
        return Err(Error::argument("test split is empty"));
    }
    Ok(Some(Measured { avg_ops: node.count_mac() as f64, accuracy: correct as f64 / n as f64, avg_energy: None }))
}

fn eval(cfg: &RunConfig, out: &Path, data: &Path, tree_path: &Path, plot: bool) -> Result<()> {
    let ds = load_data(cfg, data)?;
    let tree = load_tree(tree_path)?;
    let (report, traces) = evaluate(&tree, ds.split(Split::Test), ds.class_names())?;
    json_file(out, "eval.json", &report)?;
    json_file(out, "ops.json", &ops_from_traces(&traces)?)?;
    if let Some(base) = baseline_alone(&tree, &ds)? {
        let falcon = Measured { avg_ops: report.avg_ops, accuracy: report.accuracy, avg_energy: None };
        csv_file(out, "benefit.csv", &[BenefitRow::new(format!("delta={}", tree.delta), &falcon, &base)?])?;
        if plot {
            // bar 0 is the tree, bar 1 the baseline alone
            write_series(&[(0.0, report.avg_ops), (1.0, base.avg_ops)], create(&out.join("benefit_ops.dat"))?)?;
            write_series(&[(0.0, report.accuracy), (1.0, base.accuracy)], create(&out.join("benefit_accuracy.dat"))?)?;
            let rows = sweep_delta(&tree, &ds, Split::Test, &cfg.sweep.deltas)?;
            let series = |f: fn(&SweepRow) -> f64| rows.iter().map(|r| (r.delta, f(r))).collect::<Vec<_>>();
            write_series(&series(|r| r.accuracy), create(&out.join("sweep_accuracy.dat"))?)?;
            write_series(&series(|r| r.avg_ops), create(&out.join("sweep_ops.dat"))?)?;
            write_series(&series(|r| r.baseline_rate), create(&out.join("sweep_baseline_rate.dat"))?)?;
        }
    } else if plot {
        write_series(&[(0.0, report.avg_ops)], create(&out.join("benefit_ops.dat"))?)?;
        write_series(&[(0.0, report.accuracy)], create(&out.join("benefit_accuracy.dat"))?)?;
    }
    println!("accuracy {:.4}  avg ops {:.1}", report.accuracy, report.avg_ops);
    Ok(())
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SweepCsvRow {
    delta: f64,
    accuracy: f64,
    avg_ops: f64,
    baseline_rate: f64,
    avg_energy: f64,
}

fn sweep(cfg: &RunConfig, out: &Path, data: &Path, tree_path: &Path, deltas: Option<&str>, plot: bool) -> Result<()> {
    let ds = load_data(cfg, data)?;
    let tree = load_tree(tree_path)?;
    let deltas = match deltas {
        Some(d) => parse_deltas(d)?,
        None => cfg.sweep.deltas.clone(),
    };
    let ops = sweep_delta(&tree, &ds, Split::Test, &deltas)?;
    let energy = energy_sweep(&cfg.neue, &tree, &ds, Split::Test, &deltas, &tree.features)?;
    let rows: Vec<SweepCsvRow> = ops
        .iter()
        .zip(&energy)
        .map(|(o, e)| SweepCsvRow {
            delta: o.delta,
            accuracy: o.accuracy,
            avg_ops: o.avg_ops,
            baseline_rate: o.baseline_rate,
            avg_energy: e.avg_energy,
        })
        .collect();
    csv_file(out, "sweep.csv", &rows)?;
    if plot {
        let series = |f: fn(&SweepCsvRow) -> f64| rows.iter().map(|r| (r.delta, f(r))).collect::<Vec<_>>();
        write_series(&series(|r| r.accuracy), create(&out.join("sweep_accuracy.dat"))?)?;
        write_series(&series(|r| r.avg_energy), create(&out.join("sweep_energy.dat"))?)?;
        write_series(&series(|r| r.baseline_rate), create(&out.join("sweep_baseline_rate.dat"))?)?;
    }
    Ok(())
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SimRow {
    item: usize,
    truth: String,
    label: String,
    cycles: u64,
    energy_exec: f64,
    energy_memory: f64,
    activated: String,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SimReport {
    instances: usize,
    accuracy: f64,
    avg_cycles: f64,
    avg_energy_exec: f64,
    avg_energy_memory: f64,
    avg_energy: f64,
    exec_share: f64,
    counters: EventCounters,
    baseline_avg_energy: Option<f64>,
    normalized_energy: Option<f64>,
}

fn simulate(
    cfg: &RunConfig,
    out: &Path,
    data: &Path,
    tree_path: &Path,
    trace: bool,
    limit: Option<usize>,
) -> Result<()> {
    let ds = load_data(cfg, data)?;
    let tree = load_tree(tree_path)?;
    let items: Vec<usize> = ds.splits().get(Split::Test).iter().copied().take(limit.unwrap_or(usize::MAX)).collect();
    if items.is_empty() {
        return Err(Error::argument("nothing to simulate: the test split is empty"));
    }
    let mut rows = Vec::with_capacity(items.len());
    let mut totals = EventCounters::default();
    let mut base_energy = 0.0;
    let (mut exec, mut mem, mut cycles, mut correct) = (0.0, 0.0, 0u64, 0usize);
    for (n, &i) in items.iter().enumerate() {
        let it = &ds.items()[i];
        let r = if trace && n == 0 {
            let (r, log) = simulate_tree_traced(&cfg.neue, &tree, &it.image, &tree.features)?;
            let mut w = create(&out.join("trace.csv"))?;
            for e in &log {
                std::io::Write::write_fmt(&mut w, format_args!("{e}\n")).map_err(|e| Error::io("trace.csv", e))?;
            }
            json_file(out, "trace_summary.json", &SimSummary::new(&r, &cfg.neue))?;
            r
        } else {
            simulate_tree(&cfg.neue, &tree, &it.image, &tree.features)?
        };
        let truth = ds.class_names()[it.class].clone();
        let label = r.label.clone().unwrap_or_else(|| "not-found".into());
        if label == truth {
            correct += 1;
        }
        if let Some(b) = tree.baseline {
            base_energy += simulate_inference(&cfg.neue, &tree.nodes[b].model, &it.image.normalized())?.energy_total();
        }
        exec += r.energy_exec;
        mem += r.energy_memory;
        cycles += r.cycles;
        totals.add(&r.counters);
        rows.push(SimRow {
            item: i,
            truth,
            label,
            cycles: r.cycles,
            energy_exec: r.energy_exec,
            energy_memory: r.energy_memory,
            activated: r.activated_node_ids.iter().map(|id| id.to_string()).collect::<Vec<_>>().join(" "),
        });
    }
    let n = items.len() as f64;
    let baseline_avg = tree.baseline.map(|_| base_energy / n);
    let report = SimReport {
        instances: items.len(),
        accuracy: correct as f64 / n,
        avg_cycles: cycles as f64 / n,
        avg_energy_exec: exec / n,
        avg_energy_memory: mem / n,
        avg_energy: (exec + mem) / n,
        exec_share: exec_share(&totals, &cfg.neue.cost_table),
        counters: totals,
        baseline_avg_energy: baseline_avg,
        normalized_energy: baseline_avg.map(|b| b / ((exec + mem) / n)),
    };
    csv_file(out, "simulate.csv", &rows)?;
    json_file(out, "simulate.json", &report)
}

fn extend(cfg: &RunConfig, out: &Path, data: &Path, tree_path: &Path, new: &Path) -> Result<()> {
    let old = load_data(cfg, data)?;
    let new = load_data(cfg, new)?;
    let tree = load_tree(tree_path)?;
    let plan = plan_extension(&tree, cfg.extend.kind, new.num_classes(), &cfg.extend.width_rule)?;
    json_file(out, "plan.json", &plan)?;
    let (extended, record) = extend_tree(&tree, &old, &new, &cfg.extend)?;
    save_tree(&extended, &out.join("tree"))?;
    json_file(out, "build_record.json", &record)?;
    json_file(out, "training_cost.json", &training_cost(&record, None))
}

fn calibrate(cfg: &RunConfig, out: &Path, data: &Path, tree_path: &Path) -> Result<()> {
    let ds = load_data(cfg, data)?;
    let tree = load_tree(tree_path)?;
    let node = tree.baseline.unwrap_or(tree.initial[0]);
    let model = &tree.nodes[node].model;
    let inputs: Vec<Vec<f64>> =
        ds.split(Split::Test).take(cfg.calibration.inputs).map(|it| it.image.normalized()).collect();
    let c = &cfg.calibration;
    let calibrated = calibrate_cost_table(&cfg.neue, model, &inputs, c.target, c.tolerance)?;
    let mut totals = EventCounters::default();
    for x in &inputs {
        totals.add(&simulate_inference(&calibrated, model, x)?.counters);
    }
    json_file(out, "neue_calibrated.json", &calibrated)?;
    json_file(
        out,
        "calibration.json",
        &serde_json::json!({
            "node": node,
            "inputs": inputs.len(),
            "target": c.target,
            "execShare": exec_share(&totals, &calibrated.cost_table),
            "sramScale": calibrated.cost_table.sram_read / cfg.neue.cost_table.sram_read,
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_lists_expand() {
        assert_eq!(parse_deltas("0,0.5,1.01").unwrap(), vec![0.0, 0.5, 1.01]);
        assert_eq!(parse_deltas("0,0.2,...,1.0").unwrap(), vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
        assert_eq!(parse_deltas("0, 0.25, ..., 0.6").unwrap(), vec![0.0, 0.25, 0.5, 0.6]);
        assert!(parse_deltas("0,...,1").is_err());
        assert!(parse_deltas("a").is_err());
        assert!(parse_deltas("").is_err());
    }

    #[test]
    fn missing_config_is_a_usage_error() {
        assert_eq!(run(["falcon", "gen-data", "--out", "/tmp/x"]), 1);
        assert_eq!(run(["falcon", "gen-data", "--bogus"]), 1);
        assert_eq!(run(["falcon", "--help"]), 0);
    }
}
