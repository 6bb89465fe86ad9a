// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;

use swinvib::config::RunConfig;
use swinvib::features::{
    build_training_sets, draw_training_contexts, generate_synthetic, read_feature_file, ContextMix,
    FeatureFile, FeatureSource, Manifest, SyntheticFeatureSource, SyntheticSpec,
    DEFAULT_FEATURE_DIM,
};
use swinvib::filter::{filter_context, FilterConfig, LayerEnsemble, PrecomputedSource};
use swinvib::metrics::{compute_report, read_answer_records, roc_auc, MetricsReport};
use swinvib::sim::{
    generate_eval_corpus, psi_tre_coupling, write_sweep_csv, AnswerSimConfig, EvalCorpusSpec,
    EvalSample, SweepGrid,
};
use swinvib::theory::{linear_grid, mix_ratio_uncertainty, psi_vs_delta_i_curve, MixRatioScenario};
use swinvib::vib::{checkpoint_bytes, dataset, train_layers, TrainOutcome};
use swinvib::windowing::{read_corpus, Source, TokenSequence};
use swinvib::{sha256_hex, write_atomic};

use crate::{Context, RunFlags};

/// Marker for a report that was written but holds undefined metrics.
#[derive(Debug)]
pub struct UndefinedMetrics;

impl std::fmt::Display for UndefinedMetrics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("report contains undefined metrics")
    }
}

impl std::error::Error for UndefinedMetrics {}

/// Flags of the synthetic attention stand-in used when no extracted
/// features are supplied.
#[derive(Debug, Clone, Args)]
pub struct SynthFlags {
    #[arg(long, default_value_t = 4)]
    layers: usize,
    #[arg(long, default_value_t = DEFAULT_FEATURE_DIM)]
    dim: usize,
    #[arg(long, default_value_t = 6.0)]
    separation: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    /// Seed of the synthetic feature model.
    #[arg(long, default_value_t = 7)]
    synth_seed: u64,
}

impl SynthFlags {
    fn spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            n_layers: self.layers,
            feature_dim: self.dim,
            cluster_separation: self.separation,
            noise_scale: self.noise,
            seed: self.synth_seed,
            ..SyntheticSpec::default()
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes).with_context(|| format!("writing {}", path.display()))
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => Ok(io::stdout().write_all(bytes)?),
    }
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| swinvib::Error::Validation(format!("--{flag} is required")).into())
}

// ---------------------------------------------------------------- gen-synth

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    #[arg(long, default_value_t = 4)]
    layers: usize,
    #[arg(long, default_value_t = DEFAULT_FEATURE_DIM)]
    dim: usize,
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    #[arg(long, default_value_t = 1000)]
    held_out: usize,
    #[arg(long, default_value_t = 6.0)]
    separation: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 0.5)]
    mixed_fraction: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value = "synthetic")]
    model_name: String,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct GenSynthReport {
    manifest: PathBuf,
    manifest_sha256: String,
    per_label_counts: BTreeMap<u8, usize>,
}

pub fn gen_synth(_: &Context, a: &GenSynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        n_layers: a.layers,
        feature_dim: a.dim,
        n_samples: a.samples,
        held_out_samples: a.held_out,
        cluster_separation: a.separation,
        noise_scale: a.noise,
        mixed_fraction: a.mixed_fraction,
        seed: a.seed,
    };
    let output = generate_synthetic(&spec)?;
    let (_, hash) = output.write(&a.out, &a.model_name)?;
    let mut counts = BTreeMap::from([(0u8, 0usize), (1, 0)]);
    for l in output.training[0].labels() {
        *counts.entry(l).or_default() += 1;
    }
    let report = GenSynthReport {
        manifest: a.out.join("manifest.json"),
        manifest_sha256: hash,
        per_label_counts: counts,
    };
    write_json(&a.out.join("build_report.json"), &report)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

// ------------------------------------------------------------------ prepare

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[command(flatten)]
    run: RunFlags,
    #[command(flatten)]
    synth: SynthFlags,
    /// Share of samples that draw the interleaved context.
    #[arg(long, default_value_t = 0.5)]
    mixed_fraction: f64,
    /// Source whose block opens an interleaved context.
    #[arg(long, value_enum, default_value_t = FirstSource::Supplementary)]
    first: FirstSource,
    #[arg(long, default_value = "synthetic")]
    model_name: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FirstSource {
    Supplementary,
    Conflicting,
}

pub fn prepare(ctx: &Context, a: &PrepareArgs) -> Result<()> {
    let cfg = a.run.resolve(ctx.config.as_deref())?;
    let corpus_path = required(&cfg.corpus, "corpus")?;
    let out = required(&cfg.out, "out")?;
    let file =
        File::open(corpus_path).with_context(|| format!("opening {}", corpus_path.display()))?;
    let records = read_corpus(BufReader::new(file))?;
    let first = match a.first {
        FirstSource::Supplementary => Source::Supplementary,
        FirstSource::Conflicting => Source::Conflicting,
    };
    let samples = draw_training_contexts(
        &records,
        ContextMix::with_mixed_fraction(a.mixed_fraction)?,
        cfg.block,
        first,
        cfg.seed,
    )?;
    let source = SyntheticFeatureSource::new(&a.synth.spec())?;
    let (files, report) = build_training_sets(&samples, &source, cfg.window_len, cfg.seed)?;

    fs::create_dir_all(out)?;
    let mut names = Vec::new();
    let mut hashes = Vec::new();
    for (n, f) in files.iter().enumerate() {
        let name = format!("layer_{n}.svf");
        let bytes = f.to_bytes()?;
        hashes.push(sha256_hex(&bytes));
        write_atomic(&out.join(&name), &bytes)?;
        names.push(name);
    }
    let manifest = Manifest {
        model_name: a.model_name.clone(),
        n_layers: source.n_layers(),
        feature_dim: source.feature_dim(),
        window_len: cfg.window_len,
        files: names,
        held_out_files: Vec::new(),
        ground_truth: None,
        file_hashes: hashes,
    };
    let hash = manifest.save(&out.join("manifest.json"))?;
    write_json(&out.join("build_report.json"), &report)?;
    log::info!(
        "{} samples processed, {} skipped; manifest sha256 {hash}",
        report.processed,
        report.skipped
    );
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

// -------------------------------------------------------------------- train

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    run: RunFlags,
    /// Manifest of the training files; defaults to <features>/manifest.json.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Deploy the best fold model instead of refitting on all records.
    #[arg(long)]
    no_refit: bool,
    #[arg(long)]
    weight_decay: Option<f64>,
}

#[derive(Serialize)]
struct LayerReport {
    layer: usize,
    fold_aucs: Vec<f64>,
    mean_fold_auc: f64,
    selected_fold: usize,
    refit_epochs: Option<usize>,
    held_out_auc: Option<f64>,
    checkpoint_sha256: String,
}

#[derive(Serialize)]
struct TrainReport {
    beta: f64,
    epochs: usize,
    seed: u64,
    layers: Vec<LayerReport>,
}

fn load_files(paths: &[PathBuf]) -> Result<Vec<FeatureFile>> {
    paths
        .iter()
        .map(|p| read_feature_file(p).with_context(|| format!("reading {}", p.display())))
        .collect()
}

fn held_out_auc(outcome: &TrainOutcome, file: &FeatureFile) -> Result<Option<f64>> {
    let (x, y) = dataset(file)?;
    let p = outcome.model.predict_batch(x.view())?;
    Ok(roc_auc(&p.to_vec(), &y))
}

/// Trains an ensemble from a manifest; returns it with the per-layer report.
fn train_manifest(
    ctx: &Context,
    cfg: &RunConfig,
    manifest_path: &Path,
    refit: bool,
    weight_decay: Option<f64>,
) -> Result<(LayerEnsemble, Vec<TrainOutcome>, Vec<Option<f64>>)> {
    let manifest = Manifest::load(manifest_path)?;
    let files = load_files(&manifest.training_paths(manifest_path))?;
    let held_out = load_files(&manifest.held_out_paths(manifest_path))?;
    let mut train_cfg = cfg.train_config();
    train_cfg.refit = refit;
    if let Some(wd) = weight_decay {
        train_cfg.weight_decay = wd;
    }
    let outcomes = train_layers(&files, &train_cfg, ctx.threads != 1)?;
    let aucs = if held_out.is_empty() {
        vec![None; outcomes.len()]
    } else {
        outcomes
            .iter()
            .zip(&held_out)
            .map(|(o, f)| held_out_auc(o, f))
            .collect::<Result<_>>()?
    };
    let ensemble = LayerEnsemble::new(outcomes.iter().map(|o| o.model.clone()).collect(), cfg.xi)?;
    Ok((ensemble, outcomes, aucs))
}

fn manifest_path(explicit: &Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    match (explicit, &cfg.features) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(dir)) => Ok(dir.join("manifest.json")),
        (None, None) => bail!(swinvib::Error::Validation(
            "--manifest or --features is required".into()
        )),
    }
}

pub fn train(ctx: &Context, a: &TrainArgs) -> Result<()> {
    let cfg = a.run.resolve(ctx.config.as_deref())?;
    let manifest = manifest_path(&a.manifest, &cfg)?;
    let out = cfg
        .models
        .clone()
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| swinvib::Error::Validation("--models or --out is required".into()))?;
    let (ensemble, outcomes, aucs) =
        train_manifest(ctx, &cfg, &manifest, !a.no_refit, a.weight_decay)?;
    ensemble.save(&out)?;

    let mut layers = Vec::new();
    for (n, (o, auc)) in outcomes.iter().zip(aucs).enumerate() {
        write_atomic(
            &out.join(format!("loss_layer_{n}.csv")),
            &csv_bytes(&o.trace)?,
        )?;
        layers.push(LayerReport {
            layer: n,
            fold_aucs: o.fold_aucs.clone(),
            mean_fold_auc: o.mean_auc(),
            selected_fold: o.selected_fold,
            refit_epochs: o.refit_epochs,
            held_out_auc: auc,
            checkpoint_sha256: sha256_hex(&checkpoint_bytes(&o.model)),
        });
        log::info!(
            "layer {n}: fold AUCs {:?}, held-out AUC {}",
            o.fold_aucs,
            auc.map_or("n/a".to_string(), |v| format!("{v:.4}"))
        );
    }
    let report = TrainReport {
        beta: cfg.beta,
        epochs: cfg.epochs,
        seed: cfg.seed,
        layers,
    };
    write_json(&out.join("train_report.json"), &report)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

// ------------------------------------------------------------------- filter

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[command(flatten)]
    run: RunFlags,
    #[command(flatten)]
    synth: SynthFlags,
    #[arg(long)]
    query: Option<String>,
    /// Plain-text context, whitespace-tokenized.
    #[arg(long, conflicts_with = "sample")]
    context: Option<String>,
    /// JSON sample with `query` and a tagged `context` (one line of a
    /// `gen-eval` file); the first line is used unless --id is given.
    #[arg(long)]
    sample: Option<PathBuf>,
    #[arg(long, requires = "sample")]
    id: Option<String>,
    /// Per-layer SVQ1 files in layer order, keyed by window index.
    #[arg(long, num_args = 1..)]
    svq: Vec<PathBuf>,
    /// Where to write the per-window decisions (JSON lines).
    #[arg(long)]
    decisions: Option<PathBuf>,
}

fn load_sample(path: &Path, id: Option<&str>) -> Result<EvalSample> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    for (lineno, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let sample: EvalSample =
            serde_json::from_str(line).map_err(|e| swinvib::Error::Format {
                field: "sample",
                message: format!("line {}: {e}", lineno + 1),
            })?;
        if id.is_none_or(|id| id == sample.id) {
            return Ok(sample);
        }
    }
    bail!(swinvib::Error::Validation(format!(
        "no sample {id:?} in {}",
        path.display()
    )))
}

pub fn filter(ctx: &Context, a: &FilterArgs) -> Result<()> {
    let cfg = a.run.resolve(ctx.config.as_deref())?;
    let models = required(&cfg.models, "models")?;
    let mut ensemble = LayerEnsemble::load(models)?;
    ensemble.set_xi(cfg.xi)?;

    let (query, context) = match (&a.sample, &a.context) {
        (Some(p), _) => {
            let s = load_sample(p, a.id.as_deref())?;
            (a.query.clone().unwrap_or(s.query), s.context)
        }
        (None, Some(text)) => (
            a.query.clone().unwrap_or_default(),
            TokenSequence::from_text(text, Source::Supplementary),
        ),
        (None, None) => bail!(swinvib::Error::Validation(
            "--context or --sample is required".into()
        )),
    };

    let source: Box<dyn FeatureSource> = if a.svq.is_empty() {
        let spec = SyntheticSpec {
            n_layers: ensemble.n_layers(),
            feature_dim: ensemble.feature_dim(),
            ..a.synth.spec()
        };
        Box::new(SyntheticFeatureSource::new(&spec)?)
    } else {
        Box::new(PrecomputedSource::new(&load_files(&a.svq)?)?)
    };
    let filter_cfg = FilterConfig {
        window_len: cfg.window_len,
        stride: cfg.stride(),
        fallback: cfg.fallback,
        separator: cfg.separator.clone(),
    };
    let result = filter_context(&ensemble, &query, &context, source.as_ref(), &filter_cfg)?;

    let mut lines = Vec::new();
    for d in &result.decisions {
        lines.extend_from_slice(d.to_json_line()?.as_bytes());
        lines.push(b'\n');
    }
    let decisions_path = a
        .decisions
        .clone()
        .or_else(|| cfg.out.as_ref().map(|o| o.join("decisions.jsonl")));
    match decisions_path {
        Some(p) => write_atomic(&p, &lines)?,
        None => io::stderr().write_all(&lines)?,
    }
    let accepted = result.decisions.iter().filter(|d| d.accepted).count();
    log::info!(
        "{accepted}/{} windows accepted at xi = {}{}",
        result.decisions.len(),
        ensemble.xi(),
        if result.fallback_used {
            " (fallback applied)"
        } else {
            ""
        }
    );
    println!("{}", result.prompt);
    Ok(())
}

// ------------------------------------------------------------------ eval-mc

#[derive(Debug, Args)]
pub struct EvalMcArgs {
    /// JSON-lines answer records.
    answers: PathBuf,
    /// Also write the report as a CSV row.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn eval_mc(_: &Context, a: &EvalMcArgs) -> Result<()> {
    let file =
        File::open(&a.answers).with_context(|| format!("opening {}", a.answers.display()))?;
    let records = read_answer_records(BufReader::new(file))?;
    let report = compute_report(&records)?;
    let mut json = serde_json::to_vec_pretty(&report)?;
    json.push(b'\n');
    emit(a.out.as_deref(), &json)?;
    if let Some(p) = &a.csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(MetricsReport::CSV_HEADER)?;
        w.write_record(report.csv_row())?;
        write_atomic(p, &w.into_inner().map_err(|e| e.into_error())?)?;
    }
    // Exit 4 covers an undefined CR or RR; an undefined Mean-psi is not an error.
    if report.cr.is_undefined() || report.rr.is_undefined() {
        return Err(UndefinedMetrics.into());
    }
    Ok(())
}

// ----------------------------------------------------------------- gen-eval

#[derive(Debug, Args)]
pub struct GenEvalArgs {
    #[arg(long, default_value_t = 200)]
    contexts: usize,
    #[arg(long, default_value_t = 16)]
    segments: usize,
    #[arg(long, default_value_t = 7)]
    segment_len: usize,
    #[arg(long, default_value_t = 0.5)]
    mixed_fraction: f64,
    #[arg(long, default_value_t = 11)]
    seed: u64,
    /// Output JSON-lines file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl GenEvalArgs {
    fn spec(&self) -> EvalCorpusSpec {
        EvalCorpusSpec {
            n_contexts: self.contexts,
            segments_per_context: self.segments,
            segment_len: self.segment_len,
            mixed_fraction: self.mixed_fraction,
            seed: self.seed,
            ..EvalCorpusSpec::default()
        }
    }
}

fn eval_lines(corpus: &[EvalSample]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for s in corpus {
        serde_json::to_writer(&mut out, s)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn gen_eval(_: &Context, a: &GenEvalArgs) -> Result<()> {
    let corpus = generate_eval_corpus(&a.spec())?;
    emit(a.out.as_deref(), &eval_lines(&corpus)?)
}

// -------------------------------------------------------------------- sweep

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    run: RunFlags,
    #[command(flatten)]
    synth: SynthFlags,
    /// Axis spec, repeatable: `xi=0.1:0.9:0.1`, `beta=1e-5,1e-1`, `window_len=1,3,5`.
    #[arg(long)]
    grid: Vec<String>,
    /// Training manifest; an ensemble is trained per β value.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Evaluation corpus from `gen-eval`; generated with defaults when omitted.
    #[arg(long)]
    eval: Option<PathBuf>,
}

pub fn sweep(ctx: &Context, a: &SweepArgs) -> Result<()> {
    let cfg = a.run.resolve(ctx.config.as_deref())?;
    let mut grid = SweepGrid::single(cfg.xi, cfg.beta, cfg.window_len);
    for spec in &a.grid {
        grid.apply(spec)?;
    }
    let corpus = match &a.eval {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            text.lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| serde_json::from_str(l).map_err(swinvib::Error::from))
                .collect::<swinvib::Result<Vec<EvalSample>>>()?
        }
        None => generate_eval_corpus(&EvalCorpusSpec::default())?,
    };

    let manifest = a
        .manifest
        .clone()
        .or_else(|| cfg.features.as_ref().map(|d| d.join("manifest.json")));
    let single_beta = grid.beta.len() == 1;
    let ensemble_for = |beta: f64| -> swinvib::Result<(LayerEnsemble, f64)> {
        if let (Some(dir), true) = (&cfg.models, single_beta) {
            let e = LayerEnsemble::load(dir)?;
            return Ok((e, f64::NAN));
        }
        let path = manifest.as_deref().ok_or_else(|| {
            swinvib::Error::Validation("--manifest is required to sweep beta".into())
        })?;
        let run = RunConfig {
            beta,
            ..cfg.clone()
        };
        let (e, outcomes, aucs) = train_manifest(ctx, &run, path, true, None)
            .map_err(|e| swinvib::Error::Validation(format!("training at beta {beta}: {e:#}")))?;
        let auc = if aucs.iter().all(Option::is_some) {
            aucs.iter().flatten().sum::<f64>() / aucs.len() as f64
        } else {
            outcomes.iter().map(TrainOutcome::mean_auc).sum::<f64>() / outcomes.len() as f64
        };
        log::info!("beta {beta}: mean AUC {auc:.4}");
        Ok((e, auc))
    };

    // The synthetic source must match the ensemble shape.
    let (layers, dim) = match (&cfg.models, single_beta, manifest.as_deref()) {
        (Some(dir), true, _) => {
            let e = LayerEnsemble::load(dir)?;
            (e.n_layers(), e.feature_dim())
        }
        (_, _, Some(path)) => {
            let m = Manifest::load(path)?;
            (m.n_layers, m.feature_dim)
        }
        _ => bail!(swinvib::Error::Validation(
            "--manifest or --models is required".into()
        )),
    };
    let spec = SyntheticSpec {
        n_layers: layers,
        feature_dim: dim,
        ..a.synth.spec()
    };
    let source = SyntheticFeatureSource::new(&spec)?;
    let filter_cfg = FilterConfig {
        window_len: cfg.window_len,
        stride: cfg.stride(),
        fallback: cfg.fallback,
        separator: cfg.separator.clone(),
    };
    let rows = swinvib::sim::sweep(
        &grid,
        &corpus,
        &source,
        &filter_cfg,
        &AnswerSimConfig::default(),
        ensemble_for,
    )?;
    let mut bytes = Vec::new();
    write_sweep_csv(&rows, &mut bytes)?;
    emit(cfg.out.as_deref(), &bytes)?;
    if rows.len() >= 3 {
        log::info!("Mean-psi/TRE Pearson r = {}", psi_tre_coupling(&rows)?);
    }
    Ok(())
}

// ------------------------------------------------------------------- theory

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Curve {
    PsiVsDelta,
    MixRatio,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    #[arg(long, value_enum)]
    curve: Curve,
    /// Tilt strength of the binary model.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Grid points over [-max_delta, max_delta].
    #[arg(long, default_value_t = 41)]
    points: usize,
    #[arg(long, default_value_t = 10.0)]
    max_delta: f64,
    /// Score shift contributed by each context in the mix-ratio curve.
    #[arg(long, default_value_t = 1.0)]
    strength: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn theory(_: &Context, a: &TheoryArgs) -> Result<()> {
    let bytes = match a.curve {
        Curve::PsiVsDelta => {
            let grid = linear_grid(-a.max_delta, a.max_delta, a.points);
            csv_bytes(psi_vs_delta_i_curve(&grid, a.alpha)?)?
        }
        Curve::MixRatio => csv_bytes(mix_ratio_uncertainty(
            &MixRatioScenario::four_context_sweep(),
            a.strength,
        )?)?,
    };
    emit(a.out.as_deref(), &bytes)
}
