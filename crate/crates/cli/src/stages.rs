//! One serializable call per pipeline stage. A call names every file it
//! reads and writes, so the same value drives the command line, `run` and
//! `replay`.
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use kolmo_core::burst::{self, Indicator, IndicatorInputs, SvmConfig};
use kolmo_core::labeling::{self, LabelParams};
use kolmo_core::latent::{self, LatentSeries};
use kolmo_core::pipeline::{generate, reduce, unwrap_phase, ReduceConfig};
use kolmo_core::reduction::{self, AeTrainOptions, Autoencoder};
use kolmo_core::series::write_atomic;
use kolmo_core::stats;
use kolmo_core::SnapshotSeries;
use serde::{Deserialize, Serialize};

use crate::artifact::write_dir_atomic;
use crate::config::{BurstParams, MapParams, PcaParams, RolloutParams, SimulateParams, StatsParams, SweepParams, TrainAeParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "kebab-case")]
pub enum StageCall {
    Simulate {
        params: SimulateParams,
        seed: u64,
        out: PathBuf,
    },
    /// Writes the reduced series, `<out stem>.phases.csv` and, when the
    /// rotation is collapsed, `<out stem>.template.kf`.
    Reduce {
        params: ReduceConfig,
        input: PathBuf,
        out: PathBuf,
    },
    /// Writes `pca.bin` and `<out stem>.curve.csv`.
    Pca {
        params: PcaParams,
        input: PathBuf,
        out: PathBuf,
    },
    TrainAe {
        params: TrainAeParams,
        seed: u64,
        input: PathBuf,
        out: PathBuf,
    },
    SweepAe {
        params: SweepParams,
        ae: TrainAeParams,
        seed: u64,
        input: PathBuf,
        out: PathBuf,
    },
    Encode {
        model: PathBuf,
        input: PathBuf,
        out: PathBuf,
    },
    /// `phase` selects the phase map `G` instead of the time map `F`.
    TrainMap {
        params: MapParams,
        phase: bool,
        seed: u64,
        input: PathBuf,
        out: PathBuf,
    },
    /// `reference` supplies the grid and flow parameters for decoding.
    Rollout {
        params: RolloutParams,
        model: PathBuf,
        maps: PathBuf,
        input: PathBuf,
        reference: PathBuf,
        out: PathBuf,
        decoded: Option<PathBuf>,
    },
    Label {
        params: LabelParams,
        input: PathBuf,
        out: PathBuf,
    },
    StatsPdf {
        bins: usize,
        truth: PathBuf,
        pred: Option<PathBuf>,
        out: PathBuf,
        pred_out: Option<PathBuf>,
    },
    StatsKl {
        bins: usize,
        truth: PathBuf,
        pred: PathBuf,
        out: PathBuf,
    },
    StatsDurations {
        tau: f64,
        input: PathBuf,
        out: PathBuf,
    },
    StatsMsd {
        max_lag: usize,
        input: PathBuf,
        out: PathBuf,
    },
    StatsEnsemble {
        params: StatsParams,
        label: LabelParams,
        seed: u64,
        model: PathBuf,
        maps: PathBuf,
        input: PathBuf,
        out: PathBuf,
    },
    PredictBurst {
        params: BurstParams,
        label: LabelParams,
        seed: u64,
        model: Option<PathBuf>,
        input: PathBuf,
        out: PathBuf,
    },
}

/// `dir/stem.ext` becomes `dir/stem.suffix`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn map_stem(phase: bool) -> &'static str {
    if phase {
        "G"
    } else {
        "F"
    }
}

impl StageCall {
    pub fn name(&self) -> &'static str {
        match self {
            StageCall::Simulate { .. } => "simulate",
            StageCall::Reduce { .. } => "reduce",
            StageCall::Pca { .. } => "pca",
            StageCall::TrainAe { .. } => "train-ae",
            StageCall::SweepAe { .. } => "sweep-ae",
            StageCall::Encode { .. } => "encode",
            StageCall::TrainMap { phase: false, .. } => "train-map",
            StageCall::TrainMap { phase: true, .. } => "train-phase",
            StageCall::Rollout { .. } => "rollout",
            StageCall::Label { .. } => "label",
            StageCall::StatsPdf { .. } => "stats pdf",
            StageCall::StatsKl { .. } => "stats kl",
            StageCall::StatsDurations { .. } => "stats durations",
            StageCall::StatsMsd { .. } => "stats msd",
            StageCall::StatsEnsemble { .. } => "stats ensemble",
            StageCall::PredictBurst { .. } => "predict-burst",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            StageCall::Simulate { seed, .. }
            | StageCall::TrainAe { seed, .. }
            | StageCall::SweepAe { seed, .. }
            | StageCall::TrainMap { seed, .. }
            | StageCall::StatsEnsemble { seed, .. }
            | StageCall::PredictBurst { seed, .. } => Some(*seed),
            _ => None,
        }
    }

    pub fn inputs(&self) -> Vec<PathBuf> {
        match self {
            StageCall::Simulate { .. } => vec![],
            StageCall::Reduce { input, .. }
            | StageCall::Pca { input, .. }
            | StageCall::TrainAe { input, .. }
            | StageCall::SweepAe { input, .. }
            | StageCall::TrainMap { input, .. }
            | StageCall::Label { input, .. }
            | StageCall::StatsDurations { input, .. }
            | StageCall::StatsMsd { input, .. } => vec![input.clone()],
            StageCall::Encode { model, input, .. } => vec![model.clone(), input.clone(), sibling(input, "phases.csv")],
            StageCall::Rollout {
                model,
                maps,
                input,
                reference,
                ..
            } => vec![model.clone(), maps.clone(), input.clone(), reference.clone()],
            StageCall::StatsPdf { truth, pred, .. } => std::iter::once(truth.clone()).chain(pred.clone()).collect(),
            StageCall::StatsKl { truth, pred, .. } => vec![truth.clone(), pred.clone()],
            StageCall::StatsEnsemble { model, maps, input, .. } => vec![model.clone(), maps.clone(), input.clone()],
            StageCall::PredictBurst { model, input, .. } => model
                .iter()
                .cloned()
                .chain([input.clone(), sibling(input, "phases.csv")])
                .collect(),
        }
    }

    pub fn outputs(&self) -> Vec<PathBuf> {
        match self {
            StageCall::Reduce { params, out, .. } => {
                let mut v = vec![out.clone(), sibling(out, "phases.csv")];
                if params.rotation {
                    v.push(sibling(out, "template.kf"));
                }
                v
            }
            StageCall::Pca { out, .. } => vec![out.clone(), sibling(out, "curve.csv")],
            StageCall::TrainMap { phase, out, .. } => {
                let stem = map_stem(*phase);
                ["knet1", "json", "history.csv"]
                    .iter()
                    .map(|ext| out.join(format!("{stem}.{ext}")))
                    .collect()
            }
            StageCall::Rollout { out, decoded, .. } => std::iter::once(out.clone()).chain(decoded.clone()).collect(),
            StageCall::StatsPdf { out, pred_out, .. } => std::iter::once(out.clone()).chain(pred_out.clone()).collect(),
            StageCall::Simulate { out, .. }
            | StageCall::TrainAe { out, .. }
            | StageCall::SweepAe { out, .. }
            | StageCall::Encode { out, .. }
            | StageCall::Label { out, .. }
            | StageCall::StatsKl { out, .. }
            | StageCall::StatsDurations { out, .. }
            | StageCall::StatsMsd { out, .. }
            | StageCall::StatsEnsemble { out, .. }
            | StageCall::PredictBurst { out, .. } => vec![out.clone()],
        }
    }

    pub fn execute(&self) -> anyhow::Result<()> {
        match self {
            StageCall::Simulate { params, seed, out } => {
                let series = generate(&params.to_core(*seed))?;
                series.write_to(out)?;
                eprintln!("simulate: {} snapshots -> {}", series.len(), out.display());
            }
            StageCall::Reduce { params, input, out } => {
                let series = read_series(input)?;
                let (red, template) = reduce(&series, params, None)?;
                red.series.write_to(out)?;
                write_atomic(&sibling(out, "phases.csv"), red.sidecar_csv().as_bytes())?;
                if let Some(t) = template {
                    SnapshotSeries::new(series.grid, series.params, series.save_every, 1, t)?
                        .write_to(&sibling(out, "template.kf"))?;
                }
            }
            StageCall::Pca { params, input, out } => pca(params, input, out)?,
            StageCall::TrainAe {
                params,
                seed,
                input,
                out,
            } => train_ae(params, *seed, input, out)?,
            StageCall::SweepAe {
                params,
                ae,
                seed,
                input,
                out,
            } => sweep_ae(params, ae, *seed, input, out)?,
            StageCall::Encode { model, input, out } => {
                let latent = encode(model, input)?;
                write_atomic(out, latent.to_csv().as_bytes())?;
            }
            StageCall::TrainMap {
                params,
                phase,
                seed,
                input,
                out,
            } => train_map(params, *phase, *seed, input, out)?,
            StageCall::Rollout {
                params,
                model,
                maps,
                input,
                reference,
                out,
                decoded,
            } => rollout(params, model, maps, input, reference, out, decoded.as_deref())?,
            StageCall::Label { params, input, out } => {
                let labels = labeling::label(&read_series(input)?, params)?;
                write_atomic(out, labels.to_csv().as_bytes())?;
                eprintln!("label: bursting fraction {:.3}", labels.bursting_fraction());
            }
            StageCall::StatsPdf {
                bins,
                truth,
                pred,
                out,
                pred_out,
            } => stats_pdf(*bins, truth, pred.as_deref(), out, pred_out.as_deref())?,
            StageCall::StatsKl { bins, truth, pred, out } => stats_kl(*bins, truth, pred, out)?,
            StageCall::StatsDurations { tau, input, out } => stats_durations(*tau, input, out)?,
            StageCall::StatsMsd { max_lag, input, out } => {
                let latent = read_latent(input)?;
                let curve = stats::msd(&latent.phi_x, *max_lag, latent.tau)?;
                write_atomic(out, curve.to_csv().as_bytes())?;
            }
            StageCall::StatsEnsemble {
                params,
                label,
                seed,
                model,
                maps,
                input,
                out,
            } => stats_ensemble(params, label, *seed, model, maps, input, out)?,
            StageCall::PredictBurst {
                params,
                label,
                seed,
                model,
                input,
                out,
            } => predict_burst(params, label, *seed, model.as_deref(), input, out)?,
        }
        Ok(())
    }
}

fn read_series(path: &Path) -> anyhow::Result<SnapshotSeries> {
    SnapshotSeries::read_from(path).with_context(|| format!("reading {}", path.display()))
}

fn read_latent(path: &Path) -> anyhow::Result<LatentSeries> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(LatentSeries::from_csv(&text)?)
}

fn read_model(dir: &Path) -> anyhow::Result<Autoencoder> {
    Ok(Autoencoder::read_bundle(dir)
        .with_context(|| format!("reading model bundle {}", dir.display()))?
        .0)
}

/// Unwrapped `phi_x` column of a reduction sidecar.
fn read_phases(aligned: &Path) -> anyhow::Result<Vec<f64>> {
    let path = sibling(aligned, "phases.csv");
    let mut reader = csv::Reader::from_path(&path).with_context(|| format!("reading {}", path.display()))?;
    let col = reader
        .headers()?
        .iter()
        .position(|h| h == "phi_x")
        .context("phase sidecar has no phi_x column")?;
    let mut phi = Vec::new();
    for rec in reader.records() {
        phi.push(rec?[col].trim().parse::<f64>()?);
    }
    Ok(unwrap_phase(&phi))
}

fn pca(params: &PcaParams, input: &Path, out: &Path) -> anyhow::Result<()> {
    let series = read_series(input)?;
    let (train, test) = reduction::split_rows(&series.data, 1.0 - params.test_fraction);
    let basis = reduction::fit_pca(train.view(), params.center)?;
    let scale = train.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    write_atomic(out, &reduction::pca_to_bytes(&basis, scale))?;
    let total: f64 = basis.singular_values.iter().map(|s| s * s).sum();
    let mut csv = String::from("rank,sigma,energy_fraction,test_mse\n");
    let mut acc = 0.0;
    for k in 1..=params.max_rank.min(basis.dim()) {
        let s = basis.singular_values[k - 1];
        acc += s * s;
        let mse = if test.nrows() > 0 { basis.mse(test.view(), k) } else { f64::NAN };
        writeln!(csv, "{k},{s:e},{:e},{mse:e}", acc / total)?;
    }
    write_atomic(&sibling(out, "curve.csv"), csv.as_bytes())?;
    Ok(())
}

fn ae_options(p: &TrainAeParams, d_h: usize, seed: u64) -> AeTrainOptions {
    AeTrainOptions {
        d_h,
        arch: p.arch(),
        train: p.optim.train_config(seed),
        n_models: p.optim.n_models,
        center: p.center,
        alpha_l: p.alpha_l,
    }
}

fn train_ae(params: &TrainAeParams, seed: u64, input: &Path, out: &Path) -> anyhow::Result<()> {
    let series = read_series(input)?;
    let (train, test) = reduction::split_rows(&series.data, params.optim.train_fraction());
    let fit = reduction::train_autoencoder(train.view(), test.view(), &ae_options(params, params.d_h, seed))?;
    let mut meta = fit.meta();
    let template = sibling(input, "template.kf");
    if template.exists() {
        meta.template = Some(read_series(&template)?.snapshot(0).to_vec());
    }
    eprintln!(
        "train-ae: d_h {} test mse {:e} (pca {:e})",
        params.d_h, fit.test_mse[fit.best_index], fit.pca_test_mse
    );
    write_dir_atomic(out, |dir| {
        fit.best.write_bundle(dir, &meta)?;
        write_atomic(&dir.join("history.csv"), fit.histories[fit.best_index].to_csv().as_bytes())?;
        Ok(())
    })
}

fn sweep_ae(params: &SweepParams, ae: &TrainAeParams, seed: u64, input: &Path, out: &Path) -> anyhow::Result<()> {
    let series = read_series(input)?;
    let (train, test) = reduction::split_rows(&series.data, ae.optim.train_fraction());
    let basis = reduction::fit_pca(train.view(), ae.center)?;
    let mut csv = String::from("d_h,ae_test_mse,pca_test_mse\n");
    for &d_h in &params.d_h {
        let fit =
            reduction::train_autoencoder_with_basis(basis.clone(), train.view(), test.view(), &ae_options(ae, d_h, seed))?;
        let mse = fit.test_mse[fit.best_index];
        eprintln!("sweep-ae: d_h {d_h} ae {mse:e} pca {:e}", fit.pca_test_mse);
        writeln!(csv, "{d_h},{mse:e},{:e}", fit.pca_test_mse)?;
    }
    write_atomic(out, csv.as_bytes())?;
    Ok(())
}

fn encode(model: &Path, input: &Path) -> anyhow::Result<LatentSeries> {
    let ae = read_model(model)?;
    let series = read_series(input)?;
    let phi = read_phases(input)?;
    if phi.len() != series.len() {
        bail!("{} has {} phases for {} snapshots", sibling(input, "phases.csv").display(), phi.len(), series.len());
    }
    let h = reduction::encode_series(&ae, series.data.view())?;
    Ok(LatentSeries::new(h, phi, series.save_every)?)
}

fn train_map(params: &MapParams, phase: bool, seed: u64, input: &Path, out: &Path) -> anyhow::Result<()> {
    let latent = read_latent(input)?;
    let (train, test) = latent.split(params.optim.train_fraction());
    let hidden = params.hidden_for(phase);
    let cfg = params.optim.train_config(seed);
    let fit = if phase {
        latent::train_phase_map(&train, &test, &hidden, &cfg, params.optim.n_models)?
    } else {
        latent::train_map(&train, &test, &hidden, &cfg, params.optim.n_models)?
    };
    let stem = map_stem(phase);
    eprintln!("train-map: {stem} test mse {:e}", fit.test_mse[fit.best_index]);
    fit.write(out, stem, latent.tau)?;
    write_atomic(
        &out.join(format!("{stem}.history.csv")),
        fit.histories[fit.best_index].to_csv().as_bytes(),
    )?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn rollout(
    params: &RolloutParams,
    model: &Path,
    maps: &Path,
    input: &Path,
    reference: &Path,
    out: &Path,
    decoded: Option<&Path>,
) -> anyhow::Result<()> {
    let latent = read_latent(input)?;
    if params.start >= latent.len() {
        bail!("start row {} is outside a latent series of length {}", params.start, latent.len());
    }
    let (f, _) = latent::read_map(maps, "F")?;
    let g = if params.phase && maps.join("G.knet1").exists() {
        Some(latent::read_map(maps, "G")?.0)
    } else {
        None
    };
    let h0 = latent.h.row(params.start).to_vec();
    let roll = latent::rollout(&f, g.as_ref(), &h0, latent.phi_x[params.start], params.steps, latent.tau)?;
    write_atomic(out, roll.to_csv().as_bytes())?;
    if let Some(path) = decoded {
        let ae = read_model(model)?;
        let reference = read_series(reference)?;
        let snaps = latent::decode_rollout(&ae, &roll, reference.grid, reference.params, false)?;
        snaps.write_to(path)?;
    }
    Ok(())
}

fn i_d(series: &SnapshotSeries) -> (Vec<f64>, Vec<f64>) {
    series.diagnostics().iter().map(|d| (d.i, d.d)).unzip()
}

fn stats_pdf(bins: usize, truth: &Path, pred: Option<&Path>, out: &Path, pred_out: Option<&Path>) -> anyhow::Result<()> {
    let (ti, td) = i_d(&read_series(truth)?);
    let pred = pred.map(read_series).transpose()?.map(|s| i_d(&s));
    let mut sets: Vec<(&[f64], &[f64])> = vec![(&ti, &td)];
    if let Some((pi, pd)) = &pred {
        sets.push((pi, pd));
    }
    let range = stats::pooled_range(&sets)?;
    write_atomic(out, stats::joint_pdf(&ti, &td, (bins, bins), range)?.to_csv().as_bytes())?;
    match (pred, pred_out) {
        (Some((pi, pd)), Some(path)) => {
            write_atomic(path, stats::joint_pdf(&pi, &pd, (bins, bins), range)?.to_csv().as_bytes())?;
        }
        (None, None) => {}
        _ => bail!("a predicted series and its output path go together"),
    }
    Ok(())
}

#[derive(Serialize)]
struct KlReport {
    bins: usize,
    kl: f64,
    split_half_baseline: f64,
    ratio: f64,
}

fn stats_kl(bins: usize, truth: &Path, pred: &Path, out: &Path) -> anyhow::Result<()> {
    let (ti, td) = i_d(&read_series(truth)?);
    let (pi, pd) = i_d(&read_series(pred)?);
    let range = stats::pooled_range(&[(&ti, &td), (&pi, &pd)])?;
    let t = stats::joint_pdf(&ti, &td, (bins, bins), range)?;
    let p = stats::joint_pdf(&pi, &pd, (bins, bins), range)?;
    let kl = stats::kl_divergence(&p, &t)?;
    let base = stats::split_half_kl(&ti, &td, (bins, bins), range)?;
    let report = KlReport {
        bins,
        kl,
        split_half_baseline: base,
        ratio: kl / base,
    };
    println!("kl {:e} split-half baseline {base:e}", kl + 0.0);
    write_atomic(out, serde_json::to_string_pretty(&report)?.as_bytes())?;
    Ok(())
}

fn stats_durations(tau: f64, input: &Path, out: &Path) -> anyhow::Result<()> {
    let mut reader = csv::Reader::from_path(input).with_context(|| format!("reading {}", input.display()))?;
    let col = reader
        .headers()?
        .iter()
        .position(|h| h == "label")
        .context("label CSV has no label column")?;
    let mut labels = Vec::new();
    for rec in reader.records() {
        labels.push(rec?[col].trim().parse::<u8>()?);
    }
    let (q, b) = labeling::durations(&labels, tau);
    println!(
        "mean quiescent {:.3} ({} runs), mean bursting {:.3} ({} runs)",
        labeling::mean(&q),
        q.len(),
        labeling::mean(&b),
        b.len()
    );
    let mut csv = String::from("kind,duration\n");
    for t in q {
        writeln!(csv, "quiescent,{t}")?;
    }
    for t in b {
        writeln!(csv, "bursting,{t}")?;
    }
    write_atomic(out, csv.as_bytes())?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn stats_ensemble(
    params: &StatsParams,
    label: &LabelParams,
    seed: u64,
    model: &Path,
    maps: &Path,
    input: &Path,
    out: &Path,
) -> anyhow::Result<()> {
    let series = read_series(input)?;
    let ae = read_model(model)?;
    let (f, _) = latent::read_map(maps, "F")?;
    let labels = labeling::label(&series, label)?;
    let first = ((series.len() as f64) * params.ensemble_from).round() as usize;
    let pool = series.len().saturating_sub(first).max(1);
    let ics: Vec<usize> = stats::sample_ics(pool, params.ensemble_ics, seed)
        .into_iter()
        .map(|i| i + first)
        .collect();
    let err = stats::ensemble_error(
        series.data.view(),
        &labels,
        &ae,
        &f,
        &ics,
        params.ensemble_horizon,
        series.save_every,
    )?;
    write_atomic(out, err.to_csv().as_bytes())?;
    Ok(())
}

fn predict_burst(
    params: &BurstParams,
    label: &LabelParams,
    seed: u64,
    model: Option<&Path>,
    input: &Path,
    out: &Path,
) -> anyhow::Result<()> {
    let series = read_series(input)?;
    let phi = read_phases(input)?;
    let ae = model.map(read_model).transpose()?;
    let labels = labeling::label(&series, label)?;
    let d_h = match (params.pca_modes, &ae) {
        (0, Some(ae)) => ae.d_h,
        (0, None) => 1,
        (k, _) => k,
    };
    let src = IndicatorInputs {
        snapshots: series.data.view(),
        grid: series.grid,
        phi_x: &phi,
        autoencoder: ae.as_ref(),
        pca: ae.as_ref().map(|a| &a.pca),
        d_h,
    };
    let sets = params
        .indicators
        .iter()
        .map(|name| Ok(burst::indicator_set(Indicator::parse(name)?, &src)?))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let tau = series.save_every;
    let horizons: Vec<usize> = params.horizons.iter().map(|h| (h / tau).round() as usize).collect();
    let cfg = SvmConfig {
        c: params.c,
        gamma: (params.gamma > 0.0).then_some(params.gamma),
        max_train: params.max_train,
        seed,
        ..SvmConfig::default()
    };
    let rows = burst::evaluate_horizon_sweep(&sets, &labels, &horizons, tau, &cfg)?;
    write_atomic(out, burst::horizon_csv(&rows).as_bytes())?;
    Ok(())
}
