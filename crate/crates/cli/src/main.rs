//! `geodet` command-line front end.
//!
//! Settings come from a JSON config file (`--config`); command-line flags
//! override config fields. The seed is taken from `--seed`, then the config,
//! then the `GEODET_SEED` environment variable. Relative paths inside a
//! config file are resolved against the file's directory.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage, config or schema error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use geodet::io;
use geodet::model::Region;
use geodet::pipeline::{AnalysisConfig, InputPaths};
use geodet::report;
use geodet::stratify::StrataStrategy;
use geodet::synthetic::{generate_seasonal, write_workspace, SeasonalSpec};
use geodet::workspace::{self, Workspace};

const SEED_ENV: &str = "GEODET_SEED";

#[derive(Parser, Debug)]
#[command(name = "geodet", version, about = "Geographical detector analysis of monthly positive rates against weather")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// JSON analysis config
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed for permutation tests and synthetic data
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Default stratification, e.g. quantile:6, equal:5, jenks:4, manual:0,10,20
    #[arg(long, global = true)]
    strata: Option<StrataStrategy>,
    /// IDW distance power
    #[arg(long, global = true)]
    power: Option<f64>,
    /// IDW neighbour count
    #[arg(long, global = true)]
    neighbors: Option<usize>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct InputArgs {
    #[arg(long)]
    stations: Option<PathBuf>,
    #[arg(long)]
    cases: Option<PathBuf>,
    #[arg(long)]
    cities: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate the station, case and city files and print a summary
    Ingest(InputArgs),
    /// Aggregate daily station records to station-months
    Aggregate(InputArgs),
    /// Interpolate station-months to every city
    Interpolate(InputArgs),
    /// Build monthly positive-rate series from case counts
    Rates(InputArgs),
    /// Run every factor and interaction detector and write the report
    Run(InputArgs),
    /// Write a synthetic workspace with a known planted factor
    Synth {
        /// JSON spec; defaults apply to absent fields
        spec: Option<PathBuf>,
    },
    /// Re-render report tables and figures from a saved q_table.json
    Report {
        /// Saved bundle
        bundle: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let usage = err
                .chain()
                .find_map(|e| e.downcast_ref::<geodet::Error>())
                .is_some_and(geodet::Error::is_usage);
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.global.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("setting up worker threads")?;
    }
    let (config, base) = load_config(&cli.global)?;
    let g = &cli.global;
    match cli.command {
        Command::Ingest(a) => ingest(&inputs(&a, &config)?),
        Command::Aggregate(a) => {
            let paths = inputs(&a, &config)?;
            let days = io::read_stations(&need(&paths.stations, "--stations")?)?.strict()?;
            let out = out_dir(g, &config, &base)?;
            let path = out.join("station_months.csv");
            io::write_station_months(&path, &geodet::pipeline::station_months(&days)?)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Interpolate(a) => {
            let paths = inputs(&a, &config)?;
            let ws = load_workspace(&paths, &config)?;
            let out = out_dir(g, &config, &base)?;
            let path = out.join("city_months.csv");
            io::write_city_months(&path, &ws.city_panels(&config)?)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Rates(a) => {
            let paths = inputs(&a, &config)?;
            let cities = io::read_cities(&need(&paths.cities, "--cities")?)?.strict()?;
            let cases = io::read_cases(&need(&paths.cases, "--cases")?, Some(&cities))?.strict()?;
            let out = out_dir(g, &config, &base)?;
            let path = out.join("outcomes.csv");
            io::write_outcomes(&path, &geodet::pipeline::build_outcomes(&cases, &cities)?)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Run(a) => {
            let mut config = config;
            config.inputs = Some(inputs(&a, &config)?);
            let out = out_dir(g, &config, &base)?;
            let (bundle, written) = workspace::run_files(&config, &out)?;
            for w in &bundle.warnings {
                eprintln!("warning: {w}");
            }
            for g in &bundle.groups {
                if let Some((f, q)) = g.top_factor() {
                    log::info!("{}: top factor {} (q = {q:.3})", g.key, f.label());
                }
            }
            println!("{} groups analysed, {} files written to {}", bundle.groups.len(), written.len(), out.display());
            Ok(())
        }
        Command::Synth { spec } => synth(g, spec.as_deref(), &config, &base),
        Command::Report { bundle } => {
            let b = report::read_bundle(&bundle)?;
            let out = out_dir(g, &config, &base)?;
            let written = report::write_tables(&out, &b)?;
            println!("{} files written to {}", written.len(), out.display());
            Ok(())
        }
    }
}

/// Config from `--config` (or defaults) with flag overrides applied, plus the
/// directory relative paths are resolved against.
fn load_config(g: &Global) -> anyhow::Result<(AnalysisConfig, PathBuf)> {
    let (mut config, base) = match &g.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            let config = AnalysisConfig::from_json(&text).with_context(|| format!("in config {}", path.display()))?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (config, base)
        }
        None => (AnalysisConfig::default(), PathBuf::new()),
    };
    if let Some(inputs) = &mut config.inputs {
        for p in [&mut inputs.stations, &mut inputs.cases, &mut inputs.cities] {
            *p = base.join(&*p);
        }
    }
    config.seed = match (g.seed, config.seed) {
        (Some(s), _) | (None, Some(s)) => Some(s),
        (None, None) => env_seed()?,
    };
    if let Some(s) = &g.strata {
        config.strata.default = s.clone();
    }
    if let Some(p) = g.power {
        config.idw.power = p;
    }
    if let Some(k) = g.neighbors {
        config.idw.neighbors = k;
    }
    Ok((config, base))
}

fn env_seed() -> anyhow::Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| geodet::Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")).into()),
        Err(_) => Ok(None),
    }
}

fn out_dir(g: &Global, config: &AnalysisConfig, base: &Path) -> anyhow::Result<PathBuf> {
    let dir = match &g.out {
        Some(o) => o.clone(),
        None => base.join(&config.output_dir),
    };
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

/// Input paths from flags, falling back to the config. Missing entries stay
/// empty and are reported by the command that needs them.
fn inputs(a: &InputArgs, config: &AnalysisConfig) -> anyhow::Result<InputPaths> {
    let from_cfg = config.inputs.clone();
    let pick = |flag: &Option<PathBuf>, cfg: Option<&PathBuf>| flag.clone().or_else(|| cfg.cloned()).unwrap_or_default();
    Ok(InputPaths {
        stations: pick(&a.stations, from_cfg.as_ref().map(|i| &i.stations)),
        cases: pick(&a.cases, from_cfg.as_ref().map(|i| &i.cases)),
        cities: pick(&a.cities, from_cfg.as_ref().map(|i| &i.cities)),
    })
}

fn need(path: &Path, flag: &str) -> anyhow::Result<PathBuf> {
    if path.as_os_str().is_empty() {
        return Err(anyhow!(geodet::Error::Config(format!("no input file: pass {flag} or set it in the config"))));
    }
    Ok(path.to_path_buf())
}

fn load_workspace(paths: &InputPaths, config: &AnalysisConfig) -> anyhow::Result<Workspace> {
    for (p, flag) in [(&paths.stations, "--stations"), (&paths.cases, "--cases"), (&paths.cities, "--cities")] {
        need(p, flag)?;
    }
    let mut ws = Workspace::load_strict(paths)?;
    ws.apply_region_overrides(config)?;
    Ok(ws)
}

fn ingest(paths: &InputPaths) -> anyhow::Result<()> {
    for (p, flag) in [(&paths.stations, "--stations"), (&paths.cases, "--cases"), (&paths.cities, "--cities")] {
        need(p, flag)?;
    }
    let (ws, load) = Workspace::load(paths)?;
    let Some(ws) = ws else {
        for issue in &load.issues {
            eprintln!("{issue}");
        }
        let n = load.issues.len();
        let first = load.issues.into_iter().next().expect("issues present");
        return Err(anyhow!(first.into_error()).context(format!("{n} schema error(s)")));
    };
    let s = io::summarize_stations(&ws.days);
    println!(
        "stations: {} rows, {} stations, {}",
        s.rows,
        s.stations,
        range(s.first_date, s.last_date)
    );
    let missing: Vec<String> = s
        .missing_rate
        .iter()
        .map(|(f, r)| format!("{} {:.1}%", f.code(), 100.0 * r))
        .collect();
    println!("missing: {}", missing.join(", "));
    let north = ws.cities.iter().filter(|c| c.region == Region::North).count();
    println!("cities: {} rows ({north} north, {} south)", ws.cities.len(), ws.cities.len() - north);
    let first = ws.cases.iter().map(|c| c.month).min();
    let last = ws.cases.iter().map(|c| c.month).max();
    println!("cases: {} rows, {}", ws.cases.len(), range(first, last));
    Ok(())
}

fn range<T: std::fmt::Display>(a: Option<T>, b: Option<T>) -> String {
    match (a, b) {
        (Some(a), Some(b)) => format!("{a} to {b}"),
        _ => "empty".to_string(),
    }
}

fn synth(g: &Global, spec: Option<&Path>, config: &AnalysisConfig, base: &Path) -> anyhow::Result<()> {
    let mut spec = match spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading spec {}", p.display()))?;
            SeasonalSpec::from_json(&text)?
        }
        None => SeasonalSpec::default(),
    };
    if let Some(s) = g.seed.or(env_seed()?) {
        spec.seed = s;
    }
    let data = generate_seasonal(&spec)?;
    let out = match &g.out {
        Some(o) => o.clone(),
        None if g.config.is_some() => base.join(&config.output_dir),
        None => PathBuf::from("synth"),
    };
    let files = write_workspace(&out, &data)?;

    // a ready-to-run config next to the data
    let run_config = AnalysisConfig {
        seed: Some(spec.seed),
        inputs: Some(InputPaths {
            stations: "stations.csv".into(),
            cases: "cases.csv".into(),
            cities: "cities.csv".into(),
        }),
        output_dir: "report".into(),
        ..config.clone()
    };
    let write_json = |name: &str, text: String| -> anyhow::Result<()> {
        let path = out.join(name);
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    };
    write_json("config.json", serde_json::to_string_pretty(&run_config)?)?;
    write_json("synth_spec.json", serde_json::to_string_pretty(&spec)?)?;
    println!(
        "wrote {}, {}, {} and config.json",
        files.stations.display(),
        files.cases.display(),
        files.cities.display()
    );
    Ok(())
}
