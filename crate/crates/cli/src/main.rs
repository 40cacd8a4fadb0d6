//! `qreadout`: simulate readout datasets, evaluate classifiers, diagnose T1
//! events, sweep the measurement time and collect the results.
//!
//! Exit codes: 0 success, 2 usage, 3 data error, 4 numerical failure.

mod bundle;
mod config;
mod failure;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use qreadout::cluster::replace_t1_events;
use qreadout::features::vectorize;
use qreadout::io::{read_dataset, read_json, write_dataset};
use qreadout::pipeline::{diagnose, evaluate, split_half, time_sweep, Method};
use qreadout::sim::{generate_dataset, Dataset};

use bundle::*;
use config::RunConfig;
use failure::{cell_text, is_numerical, Failure};

#[derive(Parser)]
#[command(name = "qreadout", version, about = "Single-shot qubit readout classification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (JSON); defaults are used for anything it omits.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct Input {
    /// Dataset sidecar to read instead of simulating.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Shot count when simulating.
    #[arg(long)]
    shots: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        shots: Option<usize>,
    },
    /// Train on the first half of each class and score the second half.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: Input,
        /// Comma-separated method names.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        /// Also evaluate every method on PCA-reduced features.
        #[arg(long)]
        pca: bool,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        shuffle_split: bool,
    },
    /// Cluster the preparation classes and optionally replace T1 events.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        ground_k: Option<usize>,
        /// Re-evaluate the methods after replacing T1-flagged shots.
        #[arg(long)]
        replace: bool,
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        #[arg(long)]
        pca: bool,
    },
    /// Retrain one method on truncated records.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        method: Option<Method>,
        /// Comma-separated truncation times in microseconds.
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
    },
    /// Collect the bundles in a directory into one report.
    Report {
        /// Directory holding results.json, diagnosis.json and sweep.json.
        #[arg(long)]
        from: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    match run(cli.command) {
        Ok(out) => {
            let run = serde_json::json!({
                "finished_unix_s": SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
                "elapsed_s": started.elapsed().as_secs_f64(),
            });
            if let Err(e) = write_json(&out, "run.json", &run) {
                eprintln!("qreadout: {e}");
                return e.exit_code();
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("qreadout: {e}");
            e.exit_code()
        }
    }
}

/// Loads the config, applies flag overrides and writes the resolved config.
fn prepare(common: &Common, name: &str, edit: impl FnOnce(&mut RunConfig)) -> Result<(RunConfig, Provenance), Failure> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    edit(&mut cfg);
    cfg.validate()?;
    std::fs::create_dir_all(&common.out)
        .map_err(|e| Failure::Data(format!("cannot create {}: {e}", common.out.display())))?;
    write_json(&common.out, "config.resolved.json", &cfg)?;
    let provenance = Provenance {
        command: name.into(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        code_version: env!("CARGO_PKG_VERSION").into(),
        dataset: cfg.dataset.as_ref().map(|p| p.display().to_string()),
    };
    Ok((cfg, provenance))
}

fn apply_input(cfg: &mut RunConfig, input: &Input) {
    if let Some(d) = &input.dataset {
        cfg.dataset = Some(d.clone());
    }
    if let Some(s) = input.shots {
        cfg.simulation.shots = s;
    }
}

/// The configured dataset, or a simulated one for repetition `r`.
fn obtain(cfg: &RunConfig, r: usize) -> Result<Dataset, Failure> {
    match &cfg.dataset {
        Some(p) => read_dataset(p).map_err(|e| Failure::Data(format!("{}: {e}", p.display()))),
        None => Ok(generate_dataset(&cfg.simulation, cfg.seed.wrapping_add(r as u64))?),
    }
}

fn run(command: Command) -> Result<PathBuf, Failure> {
    match command {
        Command::Simulate { common, shots } => {
            let (cfg, prov) = prepare(&common, "simulate", |c| {
                c.dataset = None;
                if let Some(s) = shots {
                    c.simulation.shots = s;
                }
            })?;
            simulate(&cfg, prov, &common.out)?;
            Ok(common.out)
        }
        Command::Evaluate { common, input, methods, pca, repeats, shuffle_split } => {
            let (cfg, prov) = prepare(&common, "evaluate", |c| {
                apply_input(c, &input);
                if let Some(m) = methods {
                    c.evaluate.methods = m;
                }
                c.evaluate.pca |= pca;
                c.evaluate.shuffle_split |= shuffle_split;
                if let Some(r) = repeats {
                    c.evaluate.repeats = r;
                }
            })?;
            if cfg.dataset.is_some() && cfg.evaluate.repeats > 1 && !cfg.evaluate.shuffle_split {
                return Err(Failure::Usage("--repeats on a fixed dataset needs --shuffle-split".into()));
            }
            let table = evaluate_table(&cfg, prov, |r| obtain(&cfg, r))?;
            write_table(&common.out, "results", &table)?;
            print_table(&table);
            Ok(common.out)
        }
        Command::Diagnose { common, input, k, ground_k, replace, methods, pca } => {
            let (cfg, prov) = prepare(&common, "diagnose", |c| {
                apply_input(c, &input);
                if let Some(k) = k {
                    c.diagnose.k = k;
                }
                if ground_k.is_some() {
                    c.diagnose.ground_k = ground_k;
                }
                c.diagnose.replace |= replace;
                if let Some(m) = methods {
                    c.evaluate.methods = m;
                }
                c.evaluate.pca |= pca;
            })?;
            run_diagnose(&cfg, prov, &common.out)?;
            Ok(common.out)
        }
        Command::Sweep { common, input, method, times } => {
            let (cfg, prov) = prepare(&common, "sweep", |c| {
                apply_input(c, &input);
                if let Some(m) = method {
                    c.sweep.method = m;
                }
                if let Some(t) = times {
                    c.sweep.times_us = t;
                }
            })?;
            let dataset = obtain(&cfg, 0)?;
            let recipe = cfg.evaluate.recipe(cfg.sweep.method, cfg.sweep.pca, cfg.seed);
            let times: Vec<f64> = cfg.sweep.times_us.iter().map(|t| t * 1e-6).collect();
            let points = time_sweep(&dataset, &recipe, &times)?;
            write_bytes(&common.out, "sweep.csv", &sweep_csv(&points)?)?;
            let bundle = SweepBundle { provenance: prov, method: cfg.sweep.method, points };
            write_json(&common.out, "sweep.json", &bundle)?;
            for p in &bundle.points {
                println!("{:.3} us  F = {:.5} ± {:.5}", p.time * 1e6, p.report.fidelity, p.report.stderr);
            }
            Ok(common.out)
        }
        Command::Report { from, out } => {
            report(&from, &out)?;
            Ok(out)
        }
    }
}

fn simulate(cfg: &RunConfig, provenance: Provenance, out: &Path) -> Result<(), Failure> {
    let ds = generate_dataset(&cfg.simulation, cfg.seed)?;
    let sidecar = write_dataset(&ds, out, "dataset").map_err(|e| Failure::Data(format!("cannot write dataset: {e}")))?;
    let mut counts = [0usize; 2];
    let mut flips = [0usize; 2];
    let mut jumps = [0usize; 2];
    for t in &ds.trajectories {
        let c = t.prep_label as usize;
        counts[c] += 1;
        flips[c] += usize::from(t.initial_state != t.prep_label);
        jumps[c] += usize::from(t.jumped());
    }
    let frac = |a: [usize; 2]| [a[0] as f64 / counts[0] as f64, a[1] as f64 / counts[1] as f64];
    let summary = SimulationSummary {
        provenance,
        shots: ds.len(),
        shots_per_class: counts,
        n_points: ds.grid.n_points,
        total_time_us: ds.grid.total_time * 1e6,
        prep_flip_fraction: frac(flips),
        jump_fraction: frac(jumps),
        data_file: sidecar.display().to_string(),
    };
    write_json(out, "summary.json", &summary)?;
    println!(
        "{} shots ({} per class), jump fraction {:.4} (ground) {:.4} (excited) -> {}",
        summary.shots,
        counts[0],
        summary.jump_fraction[0],
        summary.jump_fraction[1],
        sidecar.display()
    );
    Ok(())
}

/// Evaluates every configured (method, preprocessing) cell over the repetitions.
fn evaluate_table(
    cfg: &RunConfig,
    provenance: Provenance,
    dataset_for: impl Fn(usize) -> Result<Dataset, Failure>,
) -> Result<Table, Failure> {
    let ev = &cfg.evaluate;
    let mut cells: Vec<Cell> = Vec::new();
    for &m in &ev.methods {
        cells.push(Cell::new(m, false));
        if ev.pca && m != Method::MatchedFilter {
            cells.push(Cell::new(m, true));
        }
    }
    for r in 0..ev.repeats {
        let ds = dataset_for(r)?;
        let fm = vectorize(&ds)?;
        let shuffle = ev.shuffle_split.then(|| cfg.seed.wrapping_add(r as u64));
        let (tr, te) = split_half(fm.labels(), shuffle);
        let (train, test) = (fm.subset(&tr), fm.subset(&te));
        for cell in cells.iter_mut().filter(|c| c.error.is_none()) {
            let recipe = ev.recipe(cell.method, cell.preprocessing == "pca", cfg.seed);
            match evaluate(&train, &test, &recipe, ds.grid.dt()) {
                Ok(o) => {
                    cell.pca_dim = o.pca_dim;
                    if r == 0 {
                        cell.notes = o.notes;
                    }
                    cell.reports.push(o.report);
                }
                Err(e) if is_numerical(&e) => cell.error = Some(cell_text(&e)),
                Err(e) => return Err(e.into()),
            }
        }
    }
    cells.iter_mut().for_each(Cell::finish);
    Ok(Table { provenance, repeats: ev.repeats, cells })
}

fn write_table(out: &Path, stem: &str, table: &Table) -> Result<(), Failure> {
    write_bytes(out, &format!("{stem}.csv"), &table_csv(table)?)?;
    write_json(out, &format!("{stem}.json"), table)
}

fn print_table(table: &Table) {
    for c in &table.cells {
        let value = match (&c.error, c.mean_fidelity) {
            (Some(e), _) => e.clone(),
            (None, Some(f)) => format!("{f:.5}"),
            (None, None) => "-".into(),
        };
        println!("{:<15} {:<4} {value}", c.method.name(), c.preprocessing);
    }
}

fn run_diagnose(cfg: &RunConfig, provenance: Provenance, out: &Path) -> Result<(), Failure> {
    let ds = obtain(cfg, 0)?;
    let fm = vectorize(&ds)?;
    let d = diagnose(&fm, &cfg.diagnose.settings(cfg.seed))?;
    let excited_shots = fm.class_indices(1).len();
    let replaced = if cfg.diagnose.replace {
        if d.t1_rows.is_empty() {
            return Err(Failure::Data("no T1 cluster was flagged; replacement refused".into()));
        }
        let fixed = replace_t1_events(&ds, &d.t1_rows, cfg.seed)?;
        let table = evaluate_table(cfg, provenance.clone(), |_| Ok(fixed.clone()))?;
        write_table(out, "replaced", &table)?;
        print_table(&table);
        Some(table)
    } else {
        None
    };
    let summarize = |class: u8, c: &qreadout::cluster::Clustering, report: &qreadout::cluster::SubclassReport| {
        ClassClustering {
            class,
            k: c.k,
            sizes: c.sizes(),
            objective: c.objective,
            flagged: if class == 1 { report.t1_clusters() } else { report.heating_clusters() },
            report: report.clone(),
        }
    };
    let bundle = DiagnosisBundle {
        provenance,
        excited: summarize(1, &d.excited, &d.excited_report),
        ground: d.ground.as_ref().map(|(c, r)| summarize(0, c, r)),
        excited_shots,
        t1_flagged: d.t1_rows.len(),
        t1_fraction: d.t1_rows.len() as f64 / excited_shots as f64,
        heating_flagged: d.heating_rows.len(),
        replaced,
    };
    write_json(out, "diagnosis.json", &bundle)?;
    println!(
        "excited clusters {:?}, T1-flagged {:?}: {} shots ({:.2}%)",
        bundle.excited.sizes,
        bundle.excited.flagged,
        bundle.t1_flagged,
        100.0 * bundle.t1_fraction
    );
    if let Some(g) = &bundle.ground {
        println!("ground clusters {:?}, heating-flagged {:?}: {} shots", g.sizes, g.flagged, bundle.heating_flagged);
    }
    Ok(())
}

fn report(from: &Path, out: &Path) -> Result<(), Failure> {
    fn load<T: for<'de> serde::Deserialize<'de>>(p: PathBuf) -> Result<Option<T>, Failure> {
        if !p.exists() {
            return Ok(None);
        }
        read_json(&p).map(Some).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))
    }
    let results: Option<Table> = load(from.join("results.json"))?;
    let diagnosis: Option<DiagnosisBundle> = load(from.join("diagnosis.json"))?;
    let sweep: Option<SweepBundle> = load(from.join("sweep.json"))?;
    if results.is_none() && diagnosis.is_none() && sweep.is_none() {
        return Err(Failure::Data(format!("{} holds no results.json, diagnosis.json or sweep.json", from.display())));
    }
    std::fs::create_dir_all(out).map_err(|e| Failure::Data(format!("cannot create {}: {e}", out.display())))?;

    let mut tables = Vec::new();
    if let Some(t) = &results {
        tables.push(("evaluate", t));
    }
    if let Some(t) = diagnosis.as_ref().and_then(|d| d.replaced.as_ref()) {
        tables.push(("replaced", t));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Failure::Data(e.to_string());
    w.write_record(["table", "method", "preprocessing", "fidelity", "fidelity_variance", "status", "config_hash"])
        .map_err(err)?;
    for (name, t) in &tables {
        for c in &t.cells {
            w.write_record([
                name.to_string(),
                c.method.name().into(),
                c.preprocessing.clone(),
                c.mean_fidelity.map(|f| f.to_string()).unwrap_or_default(),
                c.fidelity_variance.map(|f| f.to_string()).unwrap_or_default(),
                c.error.clone().unwrap_or_else(|| "ok".into()),
                t.provenance.config_hash.clone(),
            ])
            .map_err(err)?;
        }
    }
    write_bytes(out, "report.csv", &w.into_inner().map_err(|e| Failure::Data(e.to_string()))?)?;
    let combined = serde_json::json!({ "results": results, "diagnosis": diagnosis, "sweep": sweep });
    write_json(out, "report.json", &combined)?;
    println!("{} tables, diagnosis: {}, sweep: {}", tables.len(), diagnosis.is_some(), sweep.is_some());
    Ok(())
}
