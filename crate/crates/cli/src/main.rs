use std::collections::HashMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use glore_core::classify::{fit_linear_probe_with, probe_predict, zero_shot_scores, PromptSet};
use glore_core::datapipe::{
    build_single_disease_subset, filter_frontal, load_manifest, make_splits, manifest_dir, save_manifest,
    synth_mixed_manifest, synth_paired_dataset, Labeler, LabelValue, LabelVector, Lexicon, Pathology, SplitRequest,
    StudyRecord, UncertainPolicy,
};
use glore_core::encoders::write_glre;
use glore_core::experiment::{encode_record_images, encode_record_texts, global_matrix, ExperimentConfig};
use glore_core::metrics::ScoreTable;
use glore_core::report::{per_class_auc, per_class_roc};
use glore_core::trainer::{write_train_log, Trainer, TrainingSet};
use glore_core::{Checkpoint, RunReport, Tensor};

#[derive(Parser)]
#[command(name = "glore", version, about = "Global-local image/report representation learning toolkit")]
struct Cli {
    /// Experiment config (JSON); explicit flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every random choice of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for outputs and the run report.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Exclude,
    Pos,
    Neg,
}

impl From<Policy> for UncertainPolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::Exclude => UncertainPolicy::Exclude,
            Policy::Pos => UncertainPolicy::Positive,
            Policy::Neg => UncertainPolicy::Negative,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    /// Paired image/report studies with PGM images (train.jsonl, test.jsonl).
    Paired,
    /// Report-only manifest with mixed views and hedged/negated findings.
    Mixed,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbeddingSource {
    Image,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Label report text with the rule-based labeler.
    Label {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded train/test (or other) splits of the frontal studies.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        /// `name=N` or `name=rest`, in dealing order.
        #[arg(long = "split", required = true)]
        splits: Vec<String>,
        /// Keep lateral and unknown views.
        #[arg(long)]
        all_views: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-pathology single-disease subsets.
    Subset {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 87)]
        cap: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate synthetic data.
    Synth {
        #[arg(long, value_enum, default_value_t = SynthKind::Paired)]
        kind: SynthKind,
        #[arg(long, default_value_t = 3996)]
        total: usize,
        #[arg(long, default_value_t = 3279)]
        frontal: usize,
    },
    /// Train the encoders; without a manifest, trains on synthetic data from the config.
    Train {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Continue from this checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    /// Fit a linear probe on frozen global image features.
    Probe {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Training studies.
        #[arg(long)]
        manifest: PathBuf,
        /// Studies to score; defaults to the training studies.
        #[arg(long)]
        eval_manifest: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        probe_learning_rate: Option<f64>,
        #[arg(long, value_enum)]
        uncertain_policy: Option<Policy>,
    },
    /// Score studies against class prompts.
    Zeroshot {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        prompts: Option<PathBuf>,
        #[arg(long, value_enum)]
        uncertain_policy: Option<Policy>,
    },
    /// Per-pathology AUC of a scores CSV against manifest labels.
    Eval {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, value_enum, default_value_t = Policy::Exclude)]
        uncertain_policy: Policy,
    },
    /// Write encoder features in the GLRE1 format.
    ExportEmbeddings {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = EmbeddingSource::Image)]
        modality: EmbeddingSource,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write one ROC curve CSV per pathology.
    ExportRoc {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, value_enum, default_value_t = Policy::Exclude)]
        uncertain_policy: Policy,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Label { .. } => "label",
            Command::Split { .. } => "split",
            Command::Subset { .. } => "subset",
            Command::Synth { .. } => "synth",
            Command::Train { .. } => "train",
            Command::Probe { .. } => "probe",
            Command::Zeroshot { .. } => "zeroshot",
            Command::Eval { .. } => "eval",
            Command::ExportEmbeddings { .. } => "export-embeddings",
            Command::ExportRoc { .. } => "export-roc",
        }
    }
}

struct Ctx {
    config: ExperimentConfig,
    seed: u64,
    out_dir: PathBuf,
    report: RunReport,
}

impl Ctx {
    fn output(&mut self, name: &str) -> PathBuf {
        let path = self.out_dir.join(name);
        self.report.outputs.push(path.display().to_string());
        path
    }

    fn record(&mut self, path: &Path) {
        self.report.outputs.push(path.display().to_string());
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for I/O and file-format failures, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<glore_core::Error>() {
            return if e.is_io_or_format() { 2 } else { 1 };
        }
        if cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return 2;
        }
    }
    1
}

fn run(cli: Cli) -> Result<()> {
    let start = Instant::now();
    let mut config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out_dir = cli.out_dir.clone().unwrap_or_else(|| default_out_dir(&cli.command));
    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let name = cli.command.name();
    let mut ctx = Ctx {
        seed: config.seed,
        config,
        out_dir,
        report: RunReport::new(name),
    };

    match cli.command {
        Command::Label { manifest, lexicon, out } => label(&mut ctx, &manifest, lexicon.as_deref(), &out)?,
        Command::Split {
            manifest,
            splits,
            all_views,
            out,
        } => split(&mut ctx, &manifest, &splits, all_views, out)?,
        Command::Subset { manifest, cap, out } => subset(&mut ctx, &manifest, cap, out)?,
        Command::Synth { kind, total, frontal } => synth(&mut ctx, kind, total, frontal)?,
        Command::Train {
            manifest,
            checkpoint,
            steps,
            batch_size,
            learning_rate,
        } => {
            let t = &mut ctx.config.train;
            if let Some(s) = steps {
                t.steps = s;
            }
            if let Some(b) = batch_size {
                t.batch_size = b;
            }
            if let Some(lr) = learning_rate {
                t.learning_rate = lr;
            }
            train(&mut ctx, manifest.as_deref(), checkpoint.as_deref())?
        }
        Command::Probe {
            checkpoint,
            manifest,
            eval_manifest,
            epochs,
            probe_learning_rate,
            uncertain_policy,
        } => {
            let p = &mut ctx.config.probe;
            if let Some(e) = epochs {
                p.epochs = e;
            }
            if let Some(lr) = probe_learning_rate {
                p.learning_rate = lr;
            }
            if let Some(u) = uncertain_policy {
                p.uncertain_policy = u.into();
            }
            probe(&mut ctx, &checkpoint, &manifest, eval_manifest.as_deref())?
        }
        Command::Zeroshot {
            checkpoint,
            manifest,
            prompts,
            uncertain_policy,
        } => {
            let policy = uncertain_policy.map_or(ctx.config.probe.uncertain_policy, Into::into);
            zeroshot(&mut ctx, &checkpoint, &manifest, prompts.as_deref(), policy)?
        }
        Command::Eval {
            scores,
            labels,
            uncertain_policy,
        } => eval(&mut ctx, &scores, &labels, uncertain_policy.into())?,
        Command::ExportEmbeddings {
            checkpoint,
            manifest,
            modality,
            out,
        } => export_embeddings(&mut ctx, &checkpoint, &manifest, modality, out)?,
        Command::ExportRoc {
            scores,
            labels,
            uncertain_policy,
        } => export_roc(&mut ctx, &scores, &labels, uncertain_policy.into())?,
    }

    ctx.report.wall_clock_seconds = start.elapsed().as_secs_f64();
    let report_path = ctx.out_dir.join(format!("{name}_report.json"));
    ctx.report.save(&report_path)?;
    log::info!("wrote {}", report_path.display());
    Ok(())
}

/// Next to the `--out` file when there is one, else the working directory.
fn default_out_dir(cmd: &Command) -> PathBuf {
    let out = match cmd {
        Command::Label { out, .. } => Some(out),
        Command::Split { out, .. } | Command::Subset { out, .. } | Command::ExportEmbeddings { out, .. } => out.as_ref(),
        _ => None,
    };
    out.and_then(|p| p.parent())
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn load(path: &Path) -> Result<Vec<StudyRecord>> {
    load_manifest(path).with_context(|| format!("reading manifest {}", path.display()))
}

fn load_ckpt(ctx: &mut Ctx, path: &Path) -> Result<Checkpoint> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    ctx.report.config_hash = Some(ckpt.config_hash.clone());
    ctx.report.seed = Some(ckpt.config.seed);
    Ok(ckpt)
}

fn value_name(v: LabelValue) -> &'static str {
    match v {
        LabelValue::Positive => "positive",
        LabelValue::Negative => "negative",
        LabelValue::Uncertain => "uncertain",
        LabelValue::Blank => "blank",
    }
}

fn label(ctx: &mut Ctx, manifest: &Path, lexicon: Option<&Path>, out: &Path) -> Result<()> {
    let lexicon = match lexicon {
        Some(p) => Lexicon::load(p).with_context(|| format!("reading lexicon {}", p.display()))?,
        None => Lexicon::default(),
    };
    let labeler = Labeler::new(&lexicon)?;
    let mut records = load(manifest)?;
    for rec in &mut records {
        rec.labels = labeler.label(&rec.report);
        for p in Pathology::ALL {
            *ctx
                .report
                .metrics
                .entry(format!("{}.{}", p.key(), value_name(rec.labels.get(p))))
                .or_default() += 1.0;
        }
    }
    ctx.report.metrics.insert("records".into(), records.len() as f64);
    save_manifest(&records, out)?;
    ctx.record(out);
    Ok(())
}

fn parse_split(arg: &str) -> Result<SplitRequest> {
    let (name, size) = arg
        .split_once('=')
        .ok_or_else(|| anyhow!("split {arg:?} must look like name=N or name=rest"))?;
    if name.is_empty() {
        bail!("split {arg:?} has an empty name");
    }
    if size == "rest" {
        return Ok(SplitRequest::rest(name));
    }
    let n = size.parse().with_context(|| format!("split size {size:?} is not a count"))?;
    Ok(SplitRequest::exact(name, n))
}

fn split(ctx: &mut Ctx, manifest: &Path, specs: &[String], all_views: bool, out: Option<PathBuf>) -> Result<()> {
    let requests = specs.iter().map(|s| parse_split(s)).collect::<Result<Vec<_>>>()?;
    let mut records = load(manifest)?;
    ctx.report.metrics.insert("source_records".into(), records.len() as f64);
    if !all_views {
        records = filter_frontal(records);
    }
    let m = make_splits(&records, &requests, ctx.seed)?;
    for s in &m.splits {
        ctx.report.metrics.insert(format!("split.{}", s.name), s.study_ids.len() as f64);
    }
    ctx.report.seed = Some(ctx.seed);
    let path = match out {
        Some(p) => {
            ctx.record(&p);
            p
        }
        None => ctx.output("splits.json"),
    };
    fs::write(&path, m.to_json()?)?;
    Ok(())
}

fn subset(ctx: &mut Ctx, manifest: &Path, cap: usize, out: Option<PathBuf>) -> Result<()> {
    let records = filter_frontal(load(manifest)?);
    let m = build_single_disease_subset(&records, cap, ctx.seed);
    for c in &m.classes {
        ctx.report.metrics.insert(format!("{}.candidates", c.pathology.key()), c.candidates as f64);
        ctx.report.metrics.insert(format!("{}.selected", c.pathology.key()), c.count() as f64);
    }
    ctx.report.seed = Some(ctx.seed);
    let path = match out {
        Some(p) => {
            ctx.record(&p);
            p
        }
        None => ctx.output("subset.json"),
    };
    let mut text = serde_json::to_string_pretty(&m)?;
    text.push('\n');
    fs::write(&path, text)?;
    Ok(())
}

/// Moves inline images to PGM files under `images/` next to the manifest.
fn externalize_images(records: &mut [StudyRecord], dir: &Path) -> Result<()> {
    let images = dir.join("images");
    fs::create_dir_all(&images)?;
    for rec in records {
        let img = rec.image.take().ok_or_else(|| anyhow!("study {} has no image", rec.study_id))?;
        let rel = format!("images/{}.pgm", rec.study_id);
        fs::write(dir.join(&rel), img.to_pgm())?;
        rec.image_path = Some(rel);
    }
    Ok(())
}

fn synth(ctx: &mut Ctx, kind: SynthKind, total: usize, frontal: usize) -> Result<()> {
    ctx.report.seed = Some(ctx.seed);
    match kind {
        SynthKind::Paired => {
            let (mut train, mut test) = synth_paired_dataset(&ctx.config.synth, ctx.seed)?;
            externalize_images(&mut train, &ctx.out_dir)?;
            externalize_images(&mut test, &ctx.out_dir)?;
            let p = ctx.output("train.jsonl");
            save_manifest(&train, &p)?;
            let p = ctx.output("test.jsonl");
            save_manifest(&test, &p)?;
            ctx.report.metrics.insert("train".into(), train.len() as f64);
            ctx.report.metrics.insert("test".into(), test.len() as f64);
        }
        SynthKind::Mixed => {
            let records = synth_mixed_manifest(total, frontal, ctx.seed)?;
            let p = ctx.output("manifest.jsonl");
            save_manifest(&records, &p)?;
            ctx.report.metrics.insert("records".into(), records.len() as f64);
        }
    }
    Ok(())
}

fn train(ctx: &mut Ctx, manifest: Option<&Path>, resume_from: Option<&Path>) -> Result<()> {
    let (records, base) = match manifest {
        Some(p) => (load(p)?, manifest_dir(p)),
        None => (synth_paired_dataset(&ctx.config.synth, ctx.seed)?.0, PathBuf::from(".")),
    };
    let (mut trainer, data) = match resume_from {
        Some(path) => {
            let ckpt = load_ckpt(ctx, path)?;
            let data = TrainingSet::from_records(&records, &base, &ckpt.config.encoder, Some(ckpt.vocab.clone()))?;
            let steps = ctx.config.train.steps;
            let mut t = Trainer::from_checkpoint(ckpt, &data)?;
            t.extend_to(steps);
            (t, data)
        }
        None => {
            let cfg = ctx.config.train_config();
            let data = TrainingSet::from_records(&records, &base, &cfg.encoder, None)?;
            (Trainer::new(cfg, &data)?, data)
        }
    };
    log::info!("training on {} studies to step {}", data.len(), trainer.config().steps);

    let mut log = Vec::new();
    trainer.run(&data, |e| {
        if e.step % 50 == 0 {
            log::info!("step {} loss {:.4}", e.step, e.loss.total);
        }
        log.push(*e);
        Ok(())
    })?;
    let ckpt = trainer.checkpoint();
    let path = ctx.output("checkpoint.glck");
    ckpt.save(&path)?;
    let path = ctx.output("train_log.jsonl");
    write_train_log(&log, BufWriter::new(File::create(&path)?))?;

    ctx.report.config_hash = Some(ckpt.config_hash.clone());
    ctx.report.seed = Some(ckpt.config.seed);
    ctx.report.metrics.insert("steps".into(), ckpt.step as f64);
    if let (Some(first), Some(last)) = (log.first(), log.last()) {
        ctx.report.metrics.insert("initial_loss".into(), first.loss.total);
        ctx.report.metrics.insert("final_loss".into(), last.loss.total);
    }
    Ok(())
}

fn labels_of(records: &[StudyRecord]) -> Vec<LabelVector> {
    records.iter().map(|r| r.labels).collect()
}

fn score_table(records: &[StudyRecord], scores: &Tensor) -> ScoreTable {
    let mut table = ScoreTable::default();
    for (i, rec) in records.iter().enumerate() {
        let row = scores.row(i);
        table.push(rec.study_id.clone(), [row[0], row[1], row[2], row[3], row[4]]);
    }
    table
}

fn write_scores(ctx: &mut Ctx, name: &str, table: &ScoreTable) -> Result<()> {
    let path = ctx.output(name);
    table.write_csv(BufWriter::new(File::create(&path)?))?;
    Ok(())
}

fn probe(ctx: &mut Ctx, checkpoint: &Path, manifest: &Path, eval_manifest: Option<&Path>) -> Result<()> {
    let ckpt = load_ckpt(ctx, checkpoint)?;
    let train_recs = load(manifest)?;
    let train_x = global_matrix(&encode_record_images(&train_recs, &manifest_dir(manifest), &ckpt.params)?)?;
    let mut last = f64::NAN;
    let model = fit_linear_probe_with(&train_x, &labels_of(&train_recs), &ctx.config.probe, |_, l| last = l)?;
    ctx.report.metrics.insert("final_probe_loss".into(), last);
    for p in &model.skipped {
        log::warn!("probe skipped {p}");
    }
    let path = ctx.output("probe.json");
    fs::write(&path, serde_json::to_string_pretty(&model)? + "\n")?;

    let (eval_recs, eval_dir) = match eval_manifest {
        Some(p) => (load(p)?, manifest_dir(p)),
        None => (train_recs, manifest_dir(manifest)),
    };
    let eval_x = global_matrix(&encode_record_images(&eval_recs, &eval_dir, &ckpt.params)?)?;
    let probs = probe_predict(&model, &eval_x)?;
    write_scores(ctx, "probe_scores.csv", &score_table(&eval_recs, &probs))?;
    ctx.report
        .set_aucs(&per_class_auc(&probs, &labels_of(&eval_recs), ctx.config.probe.uncertain_policy)?);
    Ok(())
}

fn zeroshot(
    ctx: &mut Ctx,
    checkpoint: &Path,
    manifest: &Path,
    prompts: Option<&Path>,
    policy: UncertainPolicy,
) -> Result<()> {
    let ckpt = load_ckpt(ctx, checkpoint)?;
    let prompts = match prompts {
        Some(p) => PromptSet::load(p).with_context(|| format!("reading prompts {}", p.display()))?,
        None => PromptSet::default_templates(),
    };
    let records = load(manifest)?;
    let images = encode_record_images(&records, &manifest_dir(manifest), &ckpt.params)?;
    let scores = zero_shot_scores(&images, &prompts, &ckpt.params, &ckpt.vocab, &ctx.config.zero_shot)?;
    write_scores(ctx, "zeroshot_scores.csv", &score_table(&records, &scores))?;
    ctx.report.set_aucs(&per_class_auc(&scores, &labels_of(&records), policy)?);
    Ok(())
}

/// Scores aligned to the labeled manifest's order, matched by study id.
fn aligned_scores(scores: &Path, labels: &Path) -> Result<(Tensor, Vec<LabelVector>)> {
    let table = ScoreTable::read_csv(File::open(scores).with_context(|| format!("opening {}", scores.display()))?)
        .with_context(|| format!("reading scores {}", scores.display()))?;
    let records = load(labels)?;
    let by_id: HashMap<&str, usize> = table.study_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut rows = Vec::with_capacity(records.len());
    for rec in &records {
        let i = by_id.get(rec.study_id.as_str()).ok_or_else(|| {
            glore_core::Error::Consistency(format!("no score for study {}", rec.study_id))
        })?;
        rows.push(table.scores[*i].to_vec());
    }
    if rows.is_empty() {
        return Err(glore_core::Error::Empty("labeled studies").into());
    }
    Ok((Tensor::from_rows(&rows)?, labels_of(&records)))
}

fn eval(ctx: &mut Ctx, scores: &Path, labels: &Path, policy: UncertainPolicy) -> Result<()> {
    let (s, y) = aligned_scores(scores, labels)?;
    ctx.report.set_aucs(&per_class_auc(&s, &y, policy)?);
    ctx.report.metrics.insert("studies".into(), y.len() as f64);
    Ok(())
}

fn export_roc(ctx: &mut Ctx, scores: &Path, labels: &Path, policy: UncertainPolicy) -> Result<()> {
    let (s, y) = aligned_scores(scores, labels)?;
    let curves = per_class_roc(&s, &y, policy)?;
    let mut aucs = [None; 5];
    for (p, curve) in Pathology::ALL.iter().zip(curves) {
        match curve {
            Some(c) => {
                let path = ctx.output(&format!("roc_{}.csv", p.key()));
                c.write_csv(BufWriter::new(File::create(&path)?))?;
                aucs[p.index()] = Some(c.auc);
            }
            None => log::warn!("no ROC curve for {p}: a single label class"),
        }
    }
    ctx.report.set_aucs(&aucs);
    Ok(())
}

fn export_embeddings(
    ctx: &mut Ctx,
    checkpoint: &Path,
    manifest: &Path,
    source: EmbeddingSource,
    out: Option<PathBuf>,
) -> Result<()> {
    let ckpt = load_ckpt(ctx, checkpoint)?;
    let records = load(manifest)?;
    let (feats, default_name) = match source {
        EmbeddingSource::Image => (
            encode_record_images(&records, &manifest_dir(manifest), &ckpt.params)?,
            "embeddings_image.glre",
        ),
        EmbeddingSource::Text => (encode_record_texts(&records, &ckpt.params, &ckpt.vocab)?, "embeddings_text.glre"),
    };
    let out_records: Vec<_> = records.iter().map(|r| r.study_id.clone()).zip(feats).collect();
    let path = match out {
        Some(p) => {
            ctx.record(&p);
            p
        }
        None => ctx.output(default_name),
    };
    fs::write(&path, write_glre(&out_records)?)?;
    ctx.report.metrics.insert("records".into(), out_records.len() as f64);
    Ok(())
}
