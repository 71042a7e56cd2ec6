use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use richards_ms::harness::report::{
    read_timing_samples, write_error_table, write_history, write_steady_report, write_time_report,
    write_timing_report, write_timing_samples,
};
use richards_ms::harness::{
    configure_threads, eval_basis, gen_datasets, run_steady, run_time_dependent, train_network, DatasetFile,
    DatasetMode, Experiment, Network, RunConfig, TimingLog,
};
use richards_ms::surrogate::{read_checkpoint, write_checkpoint};
use richards_ms::Result;

#[derive(Parser)]
#[command(name = "richards-ms", version, about = "Multiscale Richards solver with a neural online-basis surrogate")]
struct Cli {
    /// JSON run configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated offline basis counts (overrides the config).
    #[arg(long, global = true, value_delimiter = ',')]
    nb: Option<Vec<usize>>,
    /// Worker threads for sample-level parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate sample-pair datasets.
    GenData {
        /// Time-dependent datasets, one per enrichment step.
        #[arg(long)]
        time: bool,
    },
    /// Train networks on existing or freshly generated datasets.
    Train {
        #[arg(long)]
        time: bool,
    },
    /// Basis error of trained networks on the test split.
    EvalBasis {
        #[arg(long)]
        time: bool,
    },
    /// Steady experiment: error tables and timing.
    RunSteady,
    /// Time-dependent experiment: last-step, Bochner and per-event tables.
    RunTime,
    /// Summarize recorded timing samples into timing.csv.
    Report,
}

struct Paths {
    out: PathBuf,
}

impl Paths {
    fn data(&self, nb: usize, mode: DatasetMode) -> PathBuf {
        self.out.join("data").join(format!("{}.msrd", mode.stem(nb)))
    }

    fn model(&self, nb: usize, mode: DatasetMode) -> PathBuf {
        self.out.join("models").join(format!("{}.msrm", mode.stem(nb)))
    }

    fn history(&self, nb: usize, mode: DatasetMode) -> PathBuf {
        self.out.join("training").join(format!("{}_history.csv", mode.stem(nb)))
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn modes(exp: &Experiment, time: bool) -> Result<Vec<DatasetMode>> {
    if time {
        Ok(exp.schedule()?.into_iter().map(DatasetMode::Time).collect())
    } else {
        Ok(vec![DatasetMode::Steady])
    }
}

fn save_dataset(paths: &Paths, d: &DatasetFile) -> Result<()> {
    let path = paths.data(d.header.nb, d.header.mode);
    create_parent(&path)?;
    d.write(BufWriter::new(File::create(&path)?))?;
    log::info!("wrote {} ({} records)", path.display(), d.records.len());
    Ok(())
}

fn load_dataset(path: &Path) -> Result<DatasetFile> {
    DatasetFile::read(BufReader::new(File::open(path)?))
}

/// Datasets for all `modes` of one `Nb`, read from disk when every file exists.
fn ensure_datasets(exp: &Experiment, paths: &Paths, nb: usize, modes: &[DatasetMode]) -> Result<Vec<DatasetFile>> {
    if modes.iter().all(|&m| paths.data(nb, m).exists()) {
        return modes.iter().map(|&m| load_dataset(&paths.data(nb, m))).collect();
    }
    let ds = gen_datasets(exp, nb, modes)?;
    for d in &ds {
        save_dataset(paths, d)?;
    }
    Ok(ds)
}

fn train_and_save(exp: &Experiment, paths: &Paths, data: &DatasetFile) -> Result<Network> {
    let (nb, mode) = (data.header.nb, data.header.mode);
    let outcome = train_network(exp, data)?;
    log::info!(
        "{}: loss {:.4e} -> {:.4e}",
        mode.stem(nb),
        outcome.initial_loss,
        outcome.final_loss()
    );
    let hist = paths.history(nb, mode);
    create_parent(&hist)?;
    write_history(&hist, &outcome.history)?;
    let net = Network::from(outcome);
    let path = paths.model(nb, mode);
    create_parent(&path)?;
    write_checkpoint(BufWriter::new(File::create(&path)?), &net.model, &net.bounds)?;
    Ok(net)
}

fn load_network(path: &Path) -> Result<Network> {
    let (model, bounds) = read_checkpoint(BufReader::new(File::open(path)?))?;
    Ok(Network { model, bounds })
}

/// Networks for all `modes` of one `Nb`, trained in-run when missing.
fn ensure_networks(exp: &Experiment, paths: &Paths, nb: usize, modes: &[DatasetMode]) -> Result<Vec<Network>> {
    if modes.iter().all(|&m| paths.model(nb, m).exists()) {
        return modes.iter().map(|&m| load_network(&paths.model(nb, m))).collect();
    }
    ensure_datasets(exp, paths, nb, modes)?
        .iter()
        .map(|d| train_and_save(exp, paths, d))
        .collect()
}

fn append_timing(out: &Path, name: &str, log: &TimingLog) -> Result<()> {
    write_timing_samples(&out.join(format!("timing_samples_{name}.csv")), log)?;
    summarize_timing(out)
}

fn summarize_timing(out: &Path) -> Result<()> {
    let mut log = TimingLog::default();
    for name in ["steady", "time"] {
        let p = out.join(format!("timing_samples_{name}.csv"));
        if p.exists() {
            log.extend(read_timing_samples(&p)?);
        }
    }
    if log.samples.is_empty() {
        log::warn!("no timing samples under {}", out.display());
        return Ok(());
    }
    for r in write_timing_report(out, &log)? {
        println!("{:<40} n={:<4} mean={:.4e} s", r.quantity, r.count, r.mean);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(nb) = cli.nb {
        cfg.nb = nb;
    }
    if let Some(n) = cli.threads {
        configure_threads(n)?;
    }
    let paths = Paths { out: cfg.out.clone() };
    std::fs::create_dir_all(&paths.out)?;
    if let Command::Report = cli.command {
        return summarize_timing(&paths.out);
    }
    let exp = Experiment::new(cfg)?;
    std::fs::write(paths.out.join("config.json"), exp.cfg.to_json()?)?;
    let nbs = exp.cfg.nb.clone();
    match cli.command {
        Command::GenData { time } => {
            let modes = modes(&exp, time)?;
            for &nb in &nbs {
                for d in gen_datasets(&exp, nb, &modes)? {
                    save_dataset(&paths, &d)?;
                }
            }
        }
        Command::Train { time } => {
            let modes = modes(&exp, time)?;
            for &nb in &nbs {
                for d in ensure_datasets(&exp, &paths, nb, &modes)? {
                    train_and_save(&exp, &paths, &d)?;
                }
            }
        }
        Command::EvalBasis { time } => {
            let modes = modes(&exp, time)?;
            let mut steady_rows = Vec::new();
            for &nb in &nbs {
                let mut series = Vec::new();
                for &m in &modes {
                    let data = load_dataset(&paths.data(nb, m))?;
                    let net = load_network(&paths.model(nb, m))?;
                    let rep = eval_basis(&net, &data)?;
                    println!("{}: mean basis error {:.4e}", m.stem(nb), rep.mean);
                    match m {
                        DatasetMode::Steady => steady_rows.push((nb, rep)),
                        DatasetMode::Time(s) => series.push((s, rep)),
                    }
                }
                if !series.is_empty() {
                    let p = paths.out.join(format!("basis_error_time_nb{nb}.csv"));
                    write_error_table(&p, "step", series.iter().map(|(s, r)| (*s, r)))?;
                }
            }
            if !steady_rows.is_empty() {
                let p = paths.out.join("basis_error_steady.csv");
                write_error_table(&p, "nb", steady_rows.iter().map(|(n, r)| (*n, r)))?;
            }
        }
        Command::RunSteady => {
            let mut nets = Vec::new();
            for &nb in &nbs {
                let net = ensure_networks(&exp, &paths, nb, &[DatasetMode::Steady])?.remove(0);
                nets.push((nb, net));
            }
            let report = run_steady(&exp, &nets)?;
            write_steady_report(&paths.out, &report)?;
            for r in &report.rows {
                println!(
                    "Nb={:<3} basis {:.4e}  L2 {:.4e}  H1 {:.4e} (mean relative errors)",
                    r.nb, r.basis.mean, r.l2.mean, r.h1.mean
                );
            }
            append_timing(&paths.out, "steady", &report.timing)?;
        }
        Command::RunTime => {
            let modes = modes(&exp, true)?;
            let mut nets = Vec::new();
            for &nb in &nbs {
                let per_step = ensure_networks(&exp, &paths, nb, &modes)?;
                let steps = modes.iter().map(|m| match m {
                    DatasetMode::Time(s) => *s,
                    DatasetMode::Steady => unreachable!("time modes only"),
                });
                nets.push((nb, steps.zip(per_step).collect()));
            }
            let report = run_time_dependent(&exp, &nets)?;
            write_time_report(&paths.out, &report)?;
            for r in &report.rows {
                println!(
                    "Nb={:<3} last L2 {:.4e}  Bochner L2 {:.4e}  last H1 {:.4e}  Bochner H1 {:.4e}",
                    r.nb, r.last_l2.mean, r.bochner_l2.mean, r.last_h1.mean, r.bochner_h1.mean
                );
            }
            append_timing(&paths.out, "time", &report.timing)?;
        }
        Command::Report => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
