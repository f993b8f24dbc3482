//! `kolmo`: command line front end. Exit status 1 means a stage failed,
//! 2 means the command line or the config file could not be parsed.
mod artifact;
mod config;
mod stages;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{Optim, RunConfig};
use crate::stages::StageCall;

#[derive(Parser)]
#[command(name = "kolmo", version, about = "Kolmogorov flow data, reduced models and their statistics")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

/// Options every stage accepts. Values from `--config` are overridden by
/// explicit flags.
#[derive(Args, Clone, Default)]
struct Common {
    /// Run config whose matching section supplies defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, alias = "seed-base", global = true)]
    seed: Option<u64>,
}

#[derive(Args, Clone, Default)]
struct OptimArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_drop_fraction: Option<f64>,
    #[arg(long)]
    lr_drop_factor: Option<f64>,
    /// Ensemble size; the member with the lowest test MSE is kept.
    #[arg(long)]
    n_models: Option<usize>,
    #[arg(long)]
    test_fraction: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate from a seeded random state and save snapshots.
    Simulate {
        #[arg(long)]
        re: Option<f64>,
        #[arg(long)]
        n: Option<u32>,
        #[arg(long)]
        nx: Option<usize>,
        #[arg(long)]
        ny: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        t_total: Option<f64>,
        #[arg(long)]
        save_every: Option<f64>,
        /// Transient integrated and dropped before the first snapshot.
        #[arg(long)]
        discard: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Phase-align and collapse the discrete symmetries.
    Reduce {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also collapse the shift-reflect copies.
        #[arg(long)]
        shift_reflect: bool,
        /// Also collapse rotation against a template (implies --shift-reflect).
        #[arg(long)]
        rotation: bool,
    },
    /// Principal components and the rank-k test MSE curve.
    Pca {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        max_rank: Option<usize>,
        #[arg(long)]
        test_fraction: Option<f64>,
    },
    /// Train an autoencoder ensemble and write the best model bundle.
    TrainAe {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "dh")]
        d_h: Option<usize>,
        #[arg(long)]
        alpha_l: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        enc_hidden: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        dec_hidden: Option<Vec<usize>>,
        #[command(flatten)]
        optim: OptimArgs,
    },
    /// Autoencoder and PCA test MSE for several latent dimensions.
    SweepAe {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "dh", value_delimiter = ',')]
        d_h: Option<Vec<usize>>,
        #[command(flatten)]
        optim: OptimArgs,
    },
    /// Latent trajectory of a reduced series.
    Encode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the latent time map.
    TrainMap {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        hidden: Option<Vec<usize>>,
        #[command(flatten)]
        optim: OptimArgs,
    },
    /// Train the phase-increment map.
    TrainPhase {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        hidden: Option<Vec<usize>>,
        #[command(flatten)]
        optim: OptimArgs,
    },
    /// Iterate the learned maps from one latent state.
    Rollout {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        maps: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        /// Reduced series supplying grid and flow parameters for decoding.
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the decoded snapshots here.
        #[arg(long)]
        decoded: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        start: Option<usize>,
        #[arg(long)]
        no_phase: bool,
    },
    /// Quiescent/bursting labels of a snapshot series.
    Label {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        label: LabelArgs,
    },
    /// Statistics comparing model and truth.
    Stats {
        #[command(subcommand)]
        cmd: StatsCmd,
    },
    /// Burst prediction accuracy against the prediction horizon.
    PredictBurst {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        indicators: Option<Vec<String>>,
        /// Horizons in time units.
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<f64>>,
        #[arg(long)]
        c: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        max_train: Option<usize>,
        #[command(flatten)]
        label: LabelArgs,
    },
    /// Run the stage list of a config inside its work directory.
    Run {
        #[arg(long)]
        workdir: Option<PathBuf>,
        /// Check the config and print the stage calls without running them.
        #[arg(long)]
        dry_run: bool,
    },
    /// Redo the stage recorded in a manifest and compare output hashes.
    Replay { manifest: PathBuf },
    /// Print the default run config.
    Config,
}

#[derive(Args, Clone, Default)]
struct LabelArgs {
    #[arg(long)]
    norm_threshold: Option<f64>,
    #[arg(long)]
    diff_threshold: Option<f64>,
    #[arg(long)]
    past: Option<usize>,
    #[arg(long)]
    future: Option<usize>,
}

#[derive(Subcommand)]
enum StatsCmd {
    /// Joint I-D histogram of a series, optionally with a prediction on a
    /// shared range.
    Pdf {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        pred_out: Option<PathBuf>,
        #[arg(long)]
        bins: Option<usize>,
    },
    /// KL divergence of predicted from true I-D statistics.
    Kl {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        bins: Option<usize>,
    },
    /// Quiescent and bursting interval lengths from a label CSV.
    Durations {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Sampling interval of the labels.
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Mean squared displacement of the phase in a latent CSV.
    Msd {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        max_lag: Option<usize>,
    },
    /// Ensemble tracking error of the model against the truth.
    Ensemble {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        maps: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ics: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
        #[command(flatten)]
        label: LabelArgs,
    },
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn apply_optim(o: &mut Optim, a: OptimArgs) {
    set(&mut o.epochs, a.epochs);
    set(&mut o.batch_size, a.batch_size);
    set(&mut o.lr, a.lr);
    set(&mut o.lr_drop_fraction, a.lr_drop_fraction);
    set(&mut o.lr_drop_factor, a.lr_drop_factor);
    set(&mut o.n_models, a.n_models);
    set(&mut o.test_fraction, a.test_fraction);
}

fn apply_label(l: &mut kolmo_core::labeling::LabelParams, a: LabelArgs) {
    set(&mut l.norm_threshold, a.norm_threshold);
    set(&mut l.diff_threshold, a.diff_threshold);
    set(&mut l.past, a.past);
    set(&mut l.future, a.future);
}

enum Failure {
    Usage(String),
    Stage(&'static str, anyhow::Error),
}

/// Build the call for a single-stage subcommand.
fn single_call(cmd: Cmd, mut cfg: RunConfig, seed: u64) -> StageCall {
    match cmd {
        Cmd::Simulate {
            re,
            n,
            nx,
            ny,
            dt,
            t_total,
            save_every,
            discard,
            out,
        } => {
            let p = &mut cfg.simulate;
            set(&mut p.re, re);
            set(&mut p.n, n);
            set(&mut p.nx, nx);
            set(&mut p.ny, ny);
            set(&mut p.dt, dt);
            set(&mut p.t_total, t_total);
            set(&mut p.save_every, save_every);
            set(&mut p.discard, discard);
            StageCall::Simulate {
                params: cfg.simulate,
                seed,
                out,
            }
        }
        Cmd::Reduce {
            input,
            out,
            shift_reflect,
            rotation,
        } => {
            cfg.reduce.shift_reflect |= shift_reflect || rotation;
            cfg.reduce.rotation |= rotation;
            StageCall::Reduce {
                params: cfg.reduce,
                input,
                out,
            }
        }
        Cmd::Pca {
            input,
            out,
            max_rank,
            test_fraction,
        } => {
            set(&mut cfg.pca.max_rank, max_rank);
            set(&mut cfg.pca.test_fraction, test_fraction);
            StageCall::Pca {
                params: cfg.pca,
                input,
                out,
            }
        }
        Cmd::TrainAe {
            input,
            out,
            d_h,
            alpha_l,
            enc_hidden,
            dec_hidden,
            optim,
        } => {
            let p = &mut cfg.train_ae;
            set(&mut p.d_h, d_h);
            set(&mut p.alpha_l, alpha_l);
            set(&mut p.enc_hidden, enc_hidden);
            set(&mut p.dec_hidden, dec_hidden);
            apply_optim(&mut p.optim, optim);
            StageCall::TrainAe {
                params: cfg.train_ae,
                seed,
                input,
                out,
            }
        }
        Cmd::SweepAe { input, out, d_h, optim } => {
            set(&mut cfg.sweep_ae.d_h, d_h);
            apply_optim(&mut cfg.train_ae.optim, optim);
            StageCall::SweepAe {
                params: cfg.sweep_ae,
                ae: cfg.train_ae,
                seed,
                input,
                out,
            }
        }
        Cmd::Encode { model, input, out } => StageCall::Encode { model, input, out },
        Cmd::TrainMap {
            input,
            out,
            hidden,
            optim,
        } => {
            set(&mut cfg.train_map.hidden, hidden);
            apply_optim(&mut cfg.train_map.optim, optim);
            StageCall::TrainMap {
                params: cfg.train_map,
                phase: false,
                seed,
                input,
                out,
            }
        }
        Cmd::TrainPhase {
            input,
            out,
            hidden,
            optim,
        } => {
            set(&mut cfg.train_phase.hidden, hidden);
            apply_optim(&mut cfg.train_phase.optim, optim);
            StageCall::TrainMap {
                params: cfg.train_phase,
                phase: true,
                seed,
                input,
                out,
            }
        }
        Cmd::Rollout {
            model,
            maps,
            input,
            reference,
            out,
            decoded,
            steps,
            start,
            no_phase,
        } => {
            set(&mut cfg.rollout.steps, steps);
            set(&mut cfg.rollout.start, start);
            cfg.rollout.phase &= !no_phase;
            StageCall::Rollout {
                params: cfg.rollout,
                model,
                maps,
                input,
                reference,
                out,
                decoded,
            }
        }
        Cmd::Label { input, out, label } => {
            apply_label(&mut cfg.label, label);
            StageCall::Label {
                params: cfg.label,
                input,
                out,
            }
        }
        Cmd::Stats { cmd } => match cmd {
            StatsCmd::Pdf {
                truth,
                pred,
                out,
                pred_out,
                bins,
            } => StageCall::StatsPdf {
                bins: bins.unwrap_or(cfg.stats.bins),
                truth,
                pred,
                out,
                pred_out,
            },
            StatsCmd::Kl { truth, pred, out, bins } => StageCall::StatsKl {
                bins: bins.unwrap_or(cfg.stats.bins),
                truth,
                pred,
                out,
            },
            StatsCmd::Durations { input, out, tau } => StageCall::StatsDurations {
                tau: tau.unwrap_or(cfg.simulate.save_every),
                input,
                out,
            },
            StatsCmd::Msd { input, out, max_lag } => StageCall::StatsMsd {
                max_lag: max_lag.unwrap_or(cfg.stats.max_lag),
                input,
                out,
            },
            StatsCmd::Ensemble {
                model,
                maps,
                input,
                out,
                ics,
                horizon,
                label,
            } => {
                set(&mut cfg.stats.ensemble_ics, ics);
                set(&mut cfg.stats.ensemble_horizon, horizon);
                apply_label(&mut cfg.label, label);
                StageCall::StatsEnsemble {
                    params: cfg.stats,
                    label: cfg.label,
                    seed,
                    model,
                    maps,
                    input,
                    out,
                }
            }
        },
        Cmd::PredictBurst {
            input,
            model,
            out,
            indicators,
            horizons,
            c,
            gamma,
            max_train,
            label,
        } => {
            let p = &mut cfg.predict_burst;
            set(&mut p.indicators, indicators);
            set(&mut p.horizons, horizons);
            set(&mut p.c, c);
            set(&mut p.gamma, gamma);
            set(&mut p.max_train, max_train);
            apply_label(&mut cfg.label, label);
            StageCall::PredictBurst {
                params: cfg.predict_burst,
                label: cfg.label,
                seed,
                model,
                input,
                out,
            }
        }
        Cmd::Run { .. } | Cmd::Replay { .. } | Cmd::Config => unreachable!("handled before"),
    }
}

/// The call a named stage of `run` makes inside the work directory.
fn run_call(name: &str, cfg: &RunConfig) -> Option<StageCall> {
    let w = |f: &str| cfg.workdir.join(f);
    let seed = cfg.seed;
    Some(match name {
        "simulate" => StageCall::Simulate {
            params: cfg.simulate.clone(),
            seed,
            out: w("data.kf"),
        },
        "reduce" => StageCall::Reduce {
            params: cfg.reduce.clone(),
            input: w("data.kf"),
            out: w("aligned.kf"),
        },
        "pca" => StageCall::Pca {
            params: cfg.pca.clone(),
            input: w("aligned.kf"),
            out: w("pca.bin"),
        },
        "sweep-ae" => StageCall::SweepAe {
            params: cfg.sweep_ae.clone(),
            ae: cfg.train_ae.clone(),
            seed,
            input: w("aligned.kf"),
            out: w("sweep_ae.csv"),
        },
        "train-ae" => StageCall::TrainAe {
            params: cfg.train_ae.clone(),
            seed,
            input: w("aligned.kf"),
            out: w("ae"),
        },
        "encode" => StageCall::Encode {
            model: w("ae"),
            input: w("aligned.kf"),
            out: w("latent.csv"),
        },
        "train-map" | "train-phase" => {
            let phase = name == "train-phase";
            StageCall::TrainMap {
                params: if phase { cfg.train_phase.clone() } else { cfg.train_map.clone() },
                phase,
                seed,
                input: w("latent.csv"),
                out: w("maps"),
            }
        }
        "rollout" => StageCall::Rollout {
            params: cfg.rollout.clone(),
            model: w("ae"),
            maps: w("maps"),
            input: w("latent.csv"),
            reference: w("aligned.kf"),
            out: w("rollout.csv"),
            decoded: Some(w("rollout.kf")),
        },
        "label" => StageCall::Label {
            params: cfg.label.clone(),
            input: w("aligned.kf"),
            out: w("labels.csv"),
        },
        "label-rollout" => StageCall::Label {
            params: cfg.label.clone(),
            input: w("rollout.kf"),
            out: w("rollout_labels.csv"),
        },
        "stats-pdf" => StageCall::StatsPdf {
            bins: cfg.stats.bins,
            truth: w("aligned.kf"),
            pred: Some(w("rollout.kf")),
            out: w("pdf_truth.csv"),
            pred_out: Some(w("pdf_rollout.csv")),
        },
        "stats-kl" => StageCall::StatsKl {
            bins: cfg.stats.bins,
            truth: w("aligned.kf"),
            pred: w("rollout.kf"),
            out: w("kl.json"),
        },
        "stats-durations" => StageCall::StatsDurations {
            tau: cfg.simulate.save_every,
            input: w("labels.csv"),
            out: w("durations.csv"),
        },
        "stats-durations-rollout" => StageCall::StatsDurations {
            tau: cfg.simulate.save_every,
            input: w("rollout_labels.csv"),
            out: w("rollout_durations.csv"),
        },
        "stats-msd" => StageCall::StatsMsd {
            max_lag: cfg.stats.max_lag,
            input: w("latent.csv"),
            out: w("msd.csv"),
        },
        "stats-msd-rollout" => StageCall::StatsMsd {
            max_lag: cfg.stats.max_lag,
            input: w("rollout.csv"),
            out: w("rollout_msd.csv"),
        },
        "stats-ensemble" => StageCall::StatsEnsemble {
            params: cfg.stats.clone(),
            label: cfg.label.clone(),
            seed,
            model: w("ae"),
            maps: w("maps"),
            input: w("aligned.kf"),
            out: w("ensemble.csv"),
        },
        "predict-burst" => StageCall::PredictBurst {
            params: cfg.predict_burst.clone(),
            label: cfg.label.clone(),
            seed,
            model: Some(w("ae")),
            input: w("aligned.kf"),
            out: w("burst.csv"),
        },
        _ => return None,
    })
}

fn execute(call: &StageCall) -> Result<(), Failure> {
    let fail = |e: anyhow::Error| Failure::Stage(call.name(), e);
    for input in call.inputs() {
        if !input.exists() {
            return Err(fail(anyhow::anyhow!("input {} does not exist", input.display())));
        }
    }
    let inputs = artifact::input_hashes(call).map_err(fail)?;
    call.execute().map_err(fail)?;
    artifact::write_manifests(call, inputs).map_err(fail)?;
    Ok(())
}

fn replay(path: &Path) -> Result<(), Failure> {
    let m = artifact::read_manifest(path).map_err(|e| Failure::Usage(format!("{e:#}")))?;
    let fail = |e: anyhow::Error| Failure::Stage(m.call.name(), e);
    artifact::verify_inputs(&m).map_err(fail)?;
    m.call.execute().map_err(fail)?;
    for out in &m.outputs {
        let now = artifact::hash_path(&out.path).map_err(fail)?;
        if now != out.sha256 {
            return Err(fail(anyhow::anyhow!("{} differs from the recorded output", out.path.display())));
        }
    }
    eprintln!("replay: {} outputs reproduced", m.outputs.len());
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    match path {
        Some(p) => RunConfig::load(p).map_err(|e| Failure::Usage(format!("config {}: {e:#}", p.display()))),
        None => Ok(RunConfig::default()),
    }
}

fn dispatch(cli: Cli, common: Common) -> Result<(), Failure> {
    let mut cfg = load_config(common.config.as_deref())?;
    set(&mut cfg.seed, common.seed);
    match cli.cmd {
        Cmd::Config => {
            print!("{}", RunConfig::default().to_toml());
            Ok(())
        }
        Cmd::Replay { manifest } => replay(&manifest),
        Cmd::Run { workdir, dry_run } => {
            if common.config.is_none() {
                return Err(Failure::Usage("run needs --config".into()));
            }
            set(&mut cfg.workdir, workdir);
            let calls = cfg
                .stages
                .iter()
                .map(|s| run_call(s, &cfg).ok_or_else(|| Failure::Usage(format!("unknown stage {s:?} in config"))))
                .collect::<Result<Vec<_>, _>>()?;
            if dry_run {
                for call in &calls {
                    println!("{}", serde_json::to_string(call).expect("calls serialize"));
                }
                return Ok(());
            }
            std::fs::create_dir_all(&cfg.workdir).map_err(|e| Failure::Stage("run", e.into()))?;
            for call in &calls {
                eprintln!("== {}", call.name());
                execute(call)?;
            }
            Ok(())
        }
        cmd => {
            let seed = cfg.seed;
            execute(&single_call(cmd, cfg, seed))
        }
    }
}

fn init_threads() -> Result<(), Failure> {
    if let Ok(v) = std::env::var("KOLMO_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Failure::Usage(format!("KOLMO_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let mut cli = Cli::parse();
    let common = std::mem::take(&mut cli.common);
    match init_threads().and_then(|_| dispatch(cli, common)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("kolmo: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Stage(stage, e)) => {
            eprintln!("kolmo: stage `{stage}` failed: {e:#}");
            ExitCode::from(1)
        }
    }
}
