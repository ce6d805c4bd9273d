use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ringvqe::experiment::{
    emit_plotdata, find_record, read_records, replay, summarize, write_summary_csv, BackendChoice, ExperimentConfig,
    ExperimentRecord, RECORDS_FILE,
};
use ringvqe::hubbard::{find_transition, HubbardModel, HubbardParams, Irrep, Sector};
use ringvqe::vqe::OptimizerKind;
use ringvqe::{Error, Result};

/// Default parent directory for results when neither the command line nor
/// the config names one.
const OUTPUT_ENV: &str = "RINGVQE_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "ringvqe", version, about = "VQE sector sweeps for small Hubbard rings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every grid point and sector of a TOML config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Like `run`, with command-line overrides on top of a config or the defaults.
    Sweep(SweepArgs),
    /// Write plot tables for one or more result directories.
    Plotdata {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Defaults to `plotdata/` inside the first directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute one stored record and compare it with the original.
    Replay {
        record_id: String,
        /// Result directory; searched below the default output directory when omitted.
        #[arg(long)]
        dir: Option<PathBuf>,
        /// Replace the stored cell seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Exact diagonalization per sector at one parameter point.
    Ed {
        #[arg(long = "tprime")]
        t_prime_over_t: f64,
        #[arg(long)]
        u: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 4)]
        sites: usize,
        /// Levels printed per sector.
        #[arg(long, default_value_t = 3)]
        levels: usize,
        /// Also bisect the crossing of two sectors within `lo,hi`.
        #[arg(long, value_delimiter = ',')]
        bracket: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', default_value = "B1,A1")]
        pair: Vec<Irrep>,
    },
}

#[derive(Args)]
struct OutputArgs {
    /// Result directory; overrides the config and the environment default.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Base config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "tprime", value_delimiter = ',')]
    t_prime_over_t: Option<Vec<f64>>,
    #[arg(long = "sector", value_delimiter = ',')]
    sectors: Option<Vec<Irrep>>,
    #[arg(long)]
    u: Option<f64>,
    #[arg(long)]
    sites: Option<usize>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_backend)]
    backend: Option<BackendChoice>,
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
    #[arg(long)]
    n_cz: Option<usize>,
    #[arg(long)]
    n_c: Option<usize>,
    #[arg(long)]
    n_init: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long)]
    repeats: Option<usize>,
    #[command(flatten)]
    out: OutputArgs,
}

fn parse_backend(s: &str) -> std::result::Result<BackendChoice, String> {
    match s {
        "exact" => Ok(BackendChoice::Exact),
        "sampled" => Ok(BackendChoice::Sampled),
        _ => Err(format!("unknown backend `{s}`, use exact or sampled")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. }
        | Error::Parse(_)
        | Error::VersionMismatch { .. }
        | Error::RecordNotFound(_)
        | Error::Io(_)
        | Error::Json(_) => 2,
        _ => 3,
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            execute(&cfg, &out)
        }
        Command::Sweep(args) => {
            let cfg = sweep_config(&args)?;
            execute(&cfg, &args.out)
        }
        Command::Plotdata { dirs, out } => {
            let out = out.unwrap_or_else(|| dirs[0].join("plotdata"));
            for f in emit_plotdata(&dirs, &out)? {
                println!("{}", f.display());
            }
            Ok(())
        }
        Command::Replay { record_id, dir, seed } => {
            let dir = match dir {
                Some(d) => d,
                None => locate_record(&default_parent(), &record_id)?,
            };
            let original = find_record(&dir, &record_id)?;
            let again = replay(&original, seed)?;
            report_replay(&original, &again, seed.is_some());
            println!("{}", serde_json::to_string(&again)?);
            Ok(())
        }
        Command::Ed {
            t_prime_over_t,
            u,
            t,
            sites,
            levels,
            bracket,
            pair,
        } => ed(sites, t, u, t_prime_over_t, levels, bracket, &pair),
    }
}

fn default_parent() -> PathBuf {
    std::env::var_os(OUTPUT_ENV).map_or_else(|| PathBuf::from("results"), PathBuf::from)
}

fn output_dir(cfg: &ExperimentConfig, out: &OutputArgs) -> PathBuf {
    out.out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| default_parent().join(&cfg.name))
}

fn execute(cfg: &ExperimentConfig, out: &OutputArgs) -> Result<()> {
    let dir = output_dir(cfg, out);
    let quiet = out.quiet;
    let records = ringvqe::experiment::run_experiment(cfg, &dir, |i, n, x, irrep| {
        if !quiet {
            eprintln!("[{}/{n}] t'/t = {x}, {irrep}", i + 1);
        }
    })?;
    let rows = summarize(cfg, &records)?;
    write_summary_csv(std::io::stdout().lock(), cfg, &rows)?;
    if !quiet {
        eprintln!("{} records in {}", records.len(), dir.display());
    }
    Ok(())
}

fn sweep_config(a: &SweepArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::new("sweep", a.sites.unwrap_or(4), a.u.unwrap_or(0.5)),
    };
    if let Some(v) = &a.t_prime_over_t {
        cfg.model.t_prime_over_t = v.clone();
    }
    if let Some(v) = &a.sectors {
        cfg.model.sectors = v.clone();
    }
    if let Some(v) = a.u {
        cfg.model.u = v;
    }
    if let Some(v) = a.sites {
        if v != cfg.model.n_sites && a.sectors.is_none() {
            cfg.model.sectors.clear();
        }
        cfg.model.n_sites = v;
    }
    if let Some(v) = &a.name {
        cfg.name = v.clone();
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.backend {
        cfg.backend = v;
    }
    if let Some(v) = a.optimizer {
        cfg.vqe.optimizer = v;
    }
    let vqe = &mut cfg.vqe;
    for (dst, src) in [
        (&mut vqe.n_cz, a.n_cz),
        (&mut vqe.n_c, a.n_c),
        (&mut vqe.n_init, a.n_init),
        (&mut vqe.max_iters, a.iters),
        (&mut vqe.repeats, a.repeats),
    ] {
        if let Some(v) = src {
            *dst = v;
        }
    }
    if let Some(v) = a.shots {
        vqe.shots = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// First directory at or one level below `parent` holding the record.
fn locate_record(parent: &Path, id: &str) -> Result<PathBuf> {
    let mut candidates = vec![parent.to_path_buf()];
    if let Ok(entries) = std::fs::read_dir(parent) {
        let mut subs: Vec<PathBuf> = entries.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.is_dir()).collect();
        subs.sort();
        candidates.extend(subs);
    }
    for dir in candidates {
        if !dir.join(RECORDS_FILE).is_file() {
            continue;
        }
        if read_records(&dir)?.iter().any(|r| r.id == id) {
            return Ok(dir);
        }
    }
    Err(Error::RecordNotFound(id.into()))
}

fn report_replay(a: &ExperimentRecord, b: &ExperimentRecord, perturbed: bool) {
    let same_traces = a.restarts.iter().zip(&b.restarts).all(|(x, y)| x.trace == y.trace);
    eprintln!(
        "E_opt {} -> {}, E_L {} -> {}, traces {}{}",
        a.e_opt.value,
        b.e_opt.value,
        a.e_l.value,
        b.e_l.value,
        if same_traces { "identical" } else { "differ" },
        if a == b { ", record identical" } else if perturbed { "" } else { ", RECORD DIFFERS" },
    );
}

fn ed(
    sites: usize,
    t: f64,
    u: f64,
    x: f64,
    levels: usize,
    bracket: Option<Vec<f64>>,
    pair: &[Irrep],
) -> Result<()> {
    let model = HubbardModel::new(HubbardParams::new(sites, t, x * t, u)?)?;
    let irreps: &[Irrep] = if sites == 6 {
        &[Irrep::A1, Irrep::A2, Irrep::B1, Irrep::B2, Irrep::E1, Irrep::E2]
    } else {
        &[Irrep::A1, Irrep::A2, Irrep::B1, Irrep::B2, Irrep::E]
    };
    // Tapered sectors fix only C2 and the mirror, so several irreps share one.
    let mut groups: Vec<(Sector, Vec<Irrep>)> = Vec::new();
    for &irrep in irreps {
        let sector = Sector::half_filling(sites, irrep)?;
        match groups.iter_mut().find(|(s, _)| *s == sector) {
            Some((_, v)) => v.push(irrep),
            None => groups.push((sector, vec![irrep])),
        }
    }
    println!("sector,level,energy,irrep");
    let mut ground: Option<(String, f64)> = None;
    for (sector, members) in &groups {
        let label = members.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("/");
        let spectrum = model.spectrum(Some(sector), Some(model.half_filling()))?;
        for (k, e) in spectrum.energies.iter().take(levels).enumerate() {
            let irrep = model
                .classify(&spectrum.state(k))
                .map_or_else(|_| "mixed".to_string(), |l| l.irrep.to_string());
            println!("{label},{k},{e:.12},{irrep}");
        }
        if let Some(&e) = spectrum.energies.first() {
            if ground.as_ref().is_none_or(|(_, g)| e < *g) {
                ground = Some((label, e));
            }
        }
    }
    if let Some((label, e)) = ground {
        println!("# ground sector {label} at {e:.12}");
    }
    if let Some(b) = bracket {
        if b.len() != 2 || b[0] >= b[1] {
            return Err(Error::Parse("--bracket needs `lo,hi` with lo < hi".into()));
        }
        if pair.len() != 2 {
            return Err(Error::Parse("--pair needs exactly two sectors".into()));
        }
        let a = Sector::half_filling(sites, pair[0])?;
        let c = Sector::half_filling(sites, pair[1])?;
        let x = find_transition(sites, t, u, &a, &c, (b[0], b[1]), 1e-6)?;
        println!("# {}/{} crossing at t'/t = {x:.6}", pair[0], pair[1]);
    }
    Ok(())
}
