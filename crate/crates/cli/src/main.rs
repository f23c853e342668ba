use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use ls_shadows::dense::{prepare_state, Ensemble, EnsembleSpec};
use ls_shadows::entanglement::{estimate_ef, pauli_operator_ef, OutcomeMode};
use ls_shadows::estimators::shadow::{map_records, OverlapEstimator, PauliEstimator};
use ls_shadows::estimators::{estimate_fidelity, estimate_pauli, sample_complexity_bound, shadow_norm, FidelityMode};
use ls_shadows::frame::{frame_gap, PairMode};
use ls_shadows::harness::experiments::{solve_recon, target_state};
use ls_shadows::harness::output::{write_atomic, write_json_atomic};
use ls_shadows::harness::{read_snapshots, run_experiment, save_snapshots, ExperimentConfig, ExperimentId};
use ls_shadows::lattice::{read_csv, write_csv};
use ls_shadows::reconstruction::{solve_recon_closed_form, solve_recon_dense, ReconSource};
use ls_shadows::rng::{stream_rng, Stream};
use ls_shadows::stabilizer::PauliString;
use ls_shadows::{LatticeVec, ReconVector};

#[derive(Parser)]
#[command(name = "ls-shadows", version, about = "Classical shadow tomography with locally scrambled ensembles")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; flags below override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (or directory for `experiment run`); stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Snapshots, prior samples or member pairs, depending on the command.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Register size when no ensemble is configured.
    #[arg(long, global = true)]
    sites: Option<usize>,
    /// Brick-wall depth when no ensemble is configured.
    #[arg(long, global = true, default_value_t = 1)]
    depth: usize,
    /// Ensemble as inline JSON, e.g. '{"n_sites":4,"kind":"global-haar"}'.
    #[arg(long, global = true)]
    ensemble: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Entanglement features.
    Ef {
        #[command(subcommand)]
        action: EfAction,
    },
    /// Reconstruction coefficients.
    Recon {
        #[command(subcommand)]
        action: ReconAction,
    },
    /// Snapshot collection.
    Shadow {
        #[command(subcommand)]
        action: ShadowAction,
    },
    /// Estimates from stored snapshots.
    Estimate {
        #[command(subcommand)]
        action: EstimateAction,
    },
    /// Shadow norm of a Pauli observable and the implied sample count.
    Shadownorm {
        #[arg(long)]
        ef: PathBuf,
        #[arg(long)]
        recon: Option<PathBuf>,
        #[arg(long)]
        observable: String,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
    },
    /// Frame potential gap of the configured ensemble.
    Framegap {
        /// Prior samples for the locally scrambled bound.
        #[arg(long, default_value_t = 2000)]
        ef_samples: usize,
        #[arg(long, value_parser = kebab::<PairMode>)]
        pairs: Option<PairMode>,
    },
    /// Experiment suite.
    Experiment {
        #[command(subcommand)]
        action: ExperimentAction,
    },
}

#[derive(Subcommand)]
enum EfAction {
    /// Monte Carlo estimate of the entanglement feature, as `mask,value,stderr` CSV.
    Estimate {
        #[arg(long, value_parser = kebab::<OutcomeMode>)]
        mode: Option<OutcomeMode>,
    },
}

#[derive(Subcommand)]
enum ReconAction {
    /// Solve for `r` from an entanglement-feature CSV.
    Solve {
        #[arg(long)]
        ef: PathBuf,
        /// `dense`, `closed-form`, or `auto`.
        #[arg(long, default_value = "auto")]
        method: String,
    },
}

#[derive(Subcommand)]
enum ShadowAction {
    /// Measure the configured state and store the records.
    Collect,
}

#[derive(Subcommand)]
enum EstimateAction {
    /// Overlap with the configured target state.
    Fidelity {
        #[arg(long)]
        snapshots: PathBuf,
        #[command(flatten)]
        recon: ReconSourceArgs,
        #[arg(long, value_parser = kebab::<FidelityMode>)]
        mode: Option<FidelityMode>,
    },
    /// Expectation of a Pauli string, e.g. `+ZZIIII`.
    Pauli {
        #[arg(long)]
        snapshots: PathBuf,
        #[command(flatten)]
        recon: ReconSourceArgs,
        #[arg(long)]
        observable: String,
    },
}

#[derive(Args)]
struct ReconSourceArgs {
    /// `r` CSV from `recon solve`.
    #[arg(long, conflicts_with = "ef")]
    recon: Option<PathBuf>,
    /// Entanglement-feature CSV to solve on the fly.
    #[arg(long)]
    ef: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ExperimentAction {
    /// Run the configured experiment (or `--id`) and write `<out>/<id>.csv` and `.json`.
    Run {
        #[arg(long)]
        id: Option<ExperimentId>,
    },
}

fn kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(w) = cli.common.workers {
        rayon::ThreadPoolBuilder::new().num_threads(w).build_global().context("worker pool")?;
    }
    match dispatch(&cli.common, &cli.command) {
        // a closed pipe (e.g. `| head`) is not a failure
        Err(e) if e.chain().any(|c| c.downcast_ref::<io::Error>().is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)) => Ok(()),
        r => r,
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    writeln!(io::stdout().lock(), "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

impl Common {
    /// The config file with flag overrides applied.
    fn config(&self, default: ExperimentId) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => ExperimentConfig::new(default, self.seed.unwrap_or(0)),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = self.samples {
            cfg.samples = m;
        }
        if let Some(n) = self.sites {
            cfg.n_sites = n;
        }
        if let Some(e) = &self.ensemble {
            cfg.ensemble = Some(serde_json::from_str(e).context("parsing --ensemble")?);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn ensemble(&self) -> Result<(ExperimentConfig, Ensemble)> {
        let cfg = self.config(ExperimentId::GhzFidelityVsDepth)?;
        let spec = match &cfg.ensemble {
            Some(s) => s.clone(),
            None => EnsembleSpec::brickwall(cfg.n_sites, self.depth),
        };
        if self.seed.is_none() && self.config.is_none() {
            log::warn!("no --seed given; using 0");
        }
        let e = Ensemble::new(spec, cfg.seed)?;
        Ok((cfg, e))
    }

    fn write(&self, f: impl FnOnce(&mut dyn Write) -> ls_shadows::Result<()>) -> Result<()> {
        match &self.out {
            Some(p) => write_atomic(p, f)?,
            None => f(&mut io::stdout().lock())?,
        }
        Ok(())
    }

    fn emit<T: Serialize>(&self, value: &T) -> Result<()> {
        match &self.out {
            Some(p) => write_json_atomic(p, value)?,
            None => print_json(value)?,
        }
        Ok(())
    }
}

fn read_lattice(path: &Path) -> Result<LatticeVec> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_csv(BufReader::new(f))?.0)
}

fn load_recon(args: &ReconSourceArgs) -> Result<ReconVector> {
    match (&args.recon, &args.ef) {
        (Some(p), _) => Ok(ReconVector { r: read_lattice(p)?, d: 2, source: ReconSource::External, residual: None, condition: None }),
        (None, Some(p)) => Ok(solve_recon(&read_lattice(p)?)?),
        (None, None) => bail!("pass --recon or --ef"),
    }
}

fn open_snapshots(path: &Path) -> Result<(Ensemble, String, Vec<ls_shadows::estimators::ShadowRecord>)> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let (header, records) = read_snapshots(BufReader::new(f))?;
    let e = Ensemble::new(header.ensemble.clone(), header.master_seed)?;
    Ok((e, header.hash, records))
}

fn dispatch(common: &Common, command: &Command) -> Result<()> {
    match command {
        Command::Ef { action: EfAction::Estimate { mode } } => {
            let (cfg, e) = common.ensemble()?;
            let n_samples = common.samples.unwrap_or(cfg.ef_samples);
            let est = estimate_ef(&e, n_samples, mode.unwrap_or(cfg.ef_mode))?;
            common.write(|w| write_csv(w, &est.w, Some(&est.stderr)))
        }
        Command::Recon { action: ReconAction::Solve { ef, method } } => {
            let w = read_lattice(ef)?;
            let r = match method.as_str() {
                "auto" => solve_recon(&w)?,
                "dense" => solve_recon_dense(&w, 2)?,
                "closed-form" => solve_recon_closed_form(&w)?,
                other => bail!("unknown method {other:?} (dense, closed-form, auto)"),
            };
            if let (Some(res), Some(cond)) = (r.residual, r.condition) {
                log::info!("residual {res:.2e}, condition {cond:.2e}");
            }
            common.write(|w| write_csv(w, &r.r, None))
        }
        Command::Shadow { action: ShadowAction::Collect } => {
            let (cfg, e) = common.ensemble()?;
            let state = prepare_state(&cfg.state, e.n_sites())?;
            let records = ls_shadows::estimators::collect_shadows(&e, &state, cfg.samples)?;
            match &common.out {
                Some(p) => save_snapshots(p, &e, &records)?,
                None => ls_shadows::harness::write_snapshots(io::stdout().lock(), &e, &records)?,
            }
            Ok(())
        }
        Command::Estimate { action } => {
            let cfg = common.config(ExperimentId::GhzFidelityVsDepth)?;
            let (snapshots, recon) = match action {
                EstimateAction::Fidelity { snapshots, recon, .. } | EstimateAction::Pauli { snapshots, recon, .. } => (snapshots, recon),
            };
            let (e, hash, records) = open_snapshots(snapshots)?;
            let r = load_recon(recon)?;
            let mut rng = stream_rng(cfg.seed, Stream::Bootstrap, 0);
            let mut report = match action {
                EstimateAction::Fidelity { mode, .. } => {
                    let est = OverlapEstimator::new(&target_state(&cfg.state, e.n_sites())?, &r)?;
                    let values = map_records(&e, &records, |s| est.single_shot(s))?;
                    estimate_fidelity(&values, mode.unwrap_or(cfg.fidelity_mode), cfg.uncertainty, &mut rng)?
                }
                EstimateAction::Pauli { observable, .. } => {
                    let p: PauliString = observable.parse()?;
                    let est = PauliEstimator::new(&p, &r)?;
                    let values = map_records(&e, &records, |s| est.single_shot(s))?;
                    estimate_pauli(&values, cfg.uncertainty, &mut rng)?
                }
            };
            report.snapshot_hash = Some(hash);
            common.emit(&report)
        }
        Command::Shadownorm { ef, recon, observable, eps, delta } => {
            let w = read_lattice(ef)?;
            let r = load_recon(&ReconSourceArgs { recon: recon.clone(), ef: recon.is_none().then(|| ef.clone()) })?;
            let p: PauliString = observable.parse()?;
            let w_o = pauli_operator_ef::<f64>(&p, 2)?;
            let norm2 = shadow_norm(&r, &w, &w_o)?;
            let samples = sample_complexity_bound(norm2, *eps, *delta)?;
            common.emit(&serde_json::json!({ "observable": observable, "shadow_norm2": norm2, "eps": eps, "delta": delta, "samples": samples }))
        }
        Command::Framegap { ef_samples, pairs } => {
            let (cfg, e) = common.ensemble()?;
            let n_pairs = common.samples.unwrap_or(cfg.frame_pairs);
            let g = frame_gap(&e, n_pairs, *ef_samples, pairs.unwrap_or(cfg.pair_mode), cfg.ef_mode)?;
            common.emit(&g)
        }
        Command::Experiment { action: ExperimentAction::Run { id } } => {
            if common.config.is_none() && id.is_none() {
                bail!("pass --config or --id");
            }
            let mut cfg = common.config(id.unwrap_or(ExperimentId::GhzFidelityVsDepth))?;
            if let Some(id) = id {
                cfg.experiment = *id;
            }
            if let Some(dir) = &common.out {
                cfg.out_dir = dir.clone();
            }
            let result = run_experiment(&cfg)?;
            print_json(&result.summary)?;
            Ok(())
        }
    }
}
