//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use latefit_core::backbone::{Backbone, StubBackbone};
use latefit_core::cache::{
    cache_read, cache_write, content_hash, meta_read, meta_write, CacheMeta, EmbeddingCache,
};
use latefit_core::checkpoint::{load_checkpoint, save_checkpoint};
use latefit_core::dataset::{
    import_teacher_scores, read_interactions_jsonl, write_interactions_jsonl, Dataset,
};
use latefit_core::document::{default_vocab, read_documents_jsonl, DocKind};
use latefit_core::encoder::{encode_input, DocInput};
use latefit_core::loss::LossKind;
use latefit_core::metrics::{
    compute_report, export_plot_data, ood_evaluate, sliced_evaluate, NdcgGains, ReportFile,
    ScoredPair,
};
use latefit_core::model::{init_params, ModelConfig, ModelParams};
use latefit_core::scorer::{interaction_forward, score_batch, ScoreMode};
use latefit_core::synthetic::{build_dataset, gen_world, DatasetConfig};
use latefit_core::trainer::{train, StepLog, TrainConfig};
use latefit_core::SCHEMA_VERSION;

use crate::config::{pick, resolve_seed};

fn log_resolved<T: Serialize>(command: &str, resolved: &T) {
    if let Ok(json) = serde_json::to_string(resolved) {
        eprintln!("[latefit] {command} config: {json}");
    }
}

// ---------------------------------------------------------------- gen-data

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenDataOpts {
    /// Output directory for the dataset files.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub train_projects: Option<usize>,
    #[arg(long)]
    pub test_projects: Option<usize>,
    #[arg(long)]
    pub categories: Option<usize>,
    #[arg(long)]
    pub skills_per_category: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Probability of flipping a teacher score to an adjacent rubric level.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Extra average-match candidates per train project.
    #[arg(long)]
    pub avg_extra: Option<usize>,
    /// Out-of-distribution average rows per test project.
    #[arg(long)]
    pub ood_average: Option<usize>,
    /// Out-of-distribution unsuitable rows per test project.
    #[arg(long)]
    pub ood_unsuitable: Option<usize>,
}

#[derive(Serialize)]
struct GenDataResolved {
    out: PathBuf,
    train_projects: usize,
    test_projects: usize,
    categories: usize,
    skills_per_category: usize,
    seed: u64,
    noise: f64,
    avg_extra: usize,
    ood_average: usize,
    ood_unsuitable: usize,
}

#[derive(Serialize)]
struct DatasetManifest {
    schema_version: u32,
    seed: u64,
    documents: usize,
    train_interactions: usize,
    test_interactions: usize,
}

pub fn cmd_gen_data(flags: GenDataOpts, file: Option<GenDataOpts>) -> Result<()> {
    let file = file.unwrap_or_default();
    let defaults = DatasetConfig::default();
    let resolved = GenDataResolved {
        out: pick(flags.out, file.out).unwrap_or_else(|| PathBuf::from("data")),
        train_projects: pick(flags.train_projects, file.train_projects).unwrap_or(200),
        test_projects: pick(flags.test_projects, file.test_projects).unwrap_or(50),
        categories: pick(flags.categories, file.categories).unwrap_or(defaults.categories),
        skills_per_category: pick(flags.skills_per_category, file.skills_per_category)
            .unwrap_or(defaults.skills_per_category),
        seed: resolve_seed(pick(flags.seed, file.seed)),
        noise: pick(flags.noise, file.noise).unwrap_or(defaults.noise_prob),
        avg_extra: pick(flags.avg_extra, file.avg_extra).unwrap_or(defaults.avg_extra_per_project),
        ood_average: pick(flags.ood_average, file.ood_average)
            .unwrap_or(defaults.ood_average_per_test_project),
        ood_unsuitable: pick(flags.ood_unsuitable, file.ood_unsuitable)
            .unwrap_or(defaults.ood_unsuitable_per_test_project),
    };
    log_resolved("gen-data", &resolved);

    std::fs::create_dir_all(&resolved.out)
        .with_context(|| format!("creating {}", resolved.out.display()))?;
    let world = gen_world(resolved.categories, resolved.skills_per_category, resolved.seed);
    let config = DatasetConfig {
        n_train_projects: resolved.train_projects,
        n_test_projects: resolved.test_projects,
        categories: resolved.categories,
        skills_per_category: resolved.skills_per_category,
        seed: resolved.seed,
        noise_prob: resolved.noise,
        avg_extra_per_project: resolved.avg_extra,
        ood_average_per_test_project: resolved.ood_average,
        ood_unsuitable_per_test_project: resolved.ood_unsuitable,
        max_tries: DatasetConfig::default().max_tries,
    };
    let dataset = build_dataset(&world, &config)?;

    let brief_vocab = default_vocab(DocKind::Brief);
    let profile_vocab = default_vocab(DocKind::Profile);
    world.save(&resolved.out.join("world.json"))?;
    latefit_core::document::write_documents_jsonl(
        &resolved.out.join("documents.jsonl"),
        &dataset.documents,
        &brief_vocab,
        &profile_vocab,
    )?;
    write_interactions_jsonl(&resolved.out.join("interactions.jsonl"), &dataset.train)?;
    write_interactions_jsonl(&resolved.out.join("test_interactions.jsonl"), &dataset.test)?;
    let manifest = DatasetManifest {
        schema_version: SCHEMA_VERSION,
        seed: resolved.seed,
        documents: dataset.documents.len(),
        train_interactions: dataset.train.len(),
        test_interactions: dataset.test.len(),
    };
    let f = BufWriter::new(File::create(resolved.out.join("manifest.json"))?);
    serde_json::to_writer_pretty(f, &manifest)?;
    println!(
        "wrote {} documents, {} train and {} test interactions to {}",
        manifest.documents,
        manifest.train_interactions,
        manifest.test_interactions,
        resolved.out.display()
    );
    Ok(())
}

// ------------------------------------------------------------------- embed

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedOpts {
    #[arg(long)]
    pub docs: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Serialize)]
struct EmbedResolved {
    docs: PathBuf,
    out: PathBuf,
    dim: u32,
    seed: u64,
}

pub fn cmd_embed(flags: EmbedOpts, file: Option<EmbedOpts>) -> Result<()> {
    let file = file.unwrap_or_default();
    let resolved = EmbedResolved {
        docs: pick(flags.docs, file.docs).ok_or_else(|| anyhow!("--docs is required"))?,
        out: pick(flags.out, file.out).unwrap_or_else(|| PathBuf::from("embeddings.bin")),
        dim: pick(flags.dim, file.dim).unwrap_or(384),
        seed: resolve_seed(pick(flags.seed, file.seed)),
    };
    log_resolved("embed", &resolved);

    let brief_vocab = default_vocab(DocKind::Brief);
    let profile_vocab = default_vocab(DocKind::Profile);
    let docs = read_documents_jsonl(&resolved.docs, &brief_vocab, &profile_vocab)?;
    let backend = StubBackbone::new(resolved.dim as usize, resolved.seed);

    // reuse entries whose content hash matches the sidecar; a corrupted or
    // mismatched cache is regenerated with a warning
    let (mut cache, mut meta, valid) = match (cache_read(&resolved.out), meta_read(&resolved.out)) {
        (Ok(c), Ok(m)) if c.dim == resolved.dim && m.backend == backend.name() => (c, m, true),
        (Ok(_), _) | (_, Ok(_)) => {
            eprintln!("[latefit] existing cache unusable (stale or mismatched), regenerating");
            (EmbeddingCache::new(resolved.dim), CacheMeta::default(), false)
        }
        (Err(e), _) if resolved.out.exists() => {
            eprintln!("[latefit] existing cache unreadable ({e}), regenerating");
            (EmbeddingCache::new(resolved.dim), CacheMeta::default(), false)
        }
        _ => (EmbeddingCache::new(resolved.dim), CacheMeta::default(), false),
    };
    if !valid {
        cache = EmbeddingCache::new(resolved.dim);
        meta = CacheMeta::default();
    }

    let mut hits = 0usize;
    let mut computed = 0usize;
    let mut fresh_meta = CacheMeta {
        schema_version: SCHEMA_VERSION,
        backend: backend.name().to_string(),
        dim: resolved.dim,
        hashes: BTreeMap::new(),
    };
    let mut fresh = EmbeddingCache::new(resolved.dim);
    for doc in &docs {
        let hash = format!("{:016x}", content_hash(doc));
        let reusable = valid
            && meta.hashes.get(&doc.id) == Some(&hash)
            && cache.entries.contains_key(&doc.id);
        if reusable {
            let entry = cache.entries.remove(&doc.id).expect("checked above");
            fresh.entries.insert(doc.id.clone(), entry);
            hits += 1;
        } else {
            fresh.encode_and_insert(doc, &backend)?;
            computed += 1;
        }
        fresh_meta.hashes.insert(doc.id.clone(), hash);
    }
    cache_write(&resolved.out, &fresh)?;
    meta_write(&resolved.out, &fresh_meta)?;
    println!(
        "cache {}: {} documents ({} reused, {} encoded), dim {}",
        resolved.out.display(),
        fresh.entries.len(),
        hits,
        computed,
        resolved.dim
    );
    Ok(())
}

// ------------------------------------------------------------------- train

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOpts {
    #[arg(long)]
    pub docs: Option<PathBuf>,
    #[arg(long)]
    pub interactions: Option<PathBuf>,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// mse | margin_mse_labeled | margin_mse_relaxed | cmmd | clid_mse
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_projects: Option<usize>,
    #[arg(long)]
    pub lr0: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Resume from a checkpoint that carries training state.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub backbone_dim: Option<usize>,
}

#[derive(Serialize)]
struct TrainResolved {
    docs: PathBuf,
    interactions: PathBuf,
    cache: PathBuf,
    out: PathBuf,
    loss: String,
    epochs: usize,
    batch_projects: usize,
    lr0: f64,
    seed: u64,
    log: Option<PathBuf>,
    resume: Option<PathBuf>,
    backbone_dim: usize,
}

pub fn cmd_train(flags: TrainOpts, file: Option<TrainOpts>) -> Result<()> {
    let file = file.unwrap_or_default();
    let defaults = TrainConfig::default();
    let resolved = TrainResolved {
        docs: pick(flags.docs, file.docs).ok_or_else(|| anyhow!("--docs is required"))?,
        interactions: pick(flags.interactions, file.interactions)
            .ok_or_else(|| anyhow!("--interactions is required"))?,
        cache: pick(flags.cache, file.cache).ok_or_else(|| anyhow!("--cache is required"))?,
        out: pick(flags.out, file.out).unwrap_or_else(|| PathBuf::from("model.ckpt")),
        loss: pick(flags.loss, file.loss).unwrap_or_else(|| defaults.loss.name().to_string()),
        epochs: pick(flags.epochs, file.epochs).unwrap_or(defaults.epochs),
        batch_projects: pick(flags.batch_projects, file.batch_projects)
            .unwrap_or(defaults.projects_per_batch),
        lr0: pick(flags.lr0, file.lr0).unwrap_or(defaults.lr0),
        seed: resolve_seed(pick(flags.seed, file.seed)),
        log: pick(flags.log, file.log),
        resume: pick(flags.resume, file.resume),
        backbone_dim: pick(flags.backbone_dim, file.backbone_dim).unwrap_or(384),
    };
    log_resolved("train", &resolved);

    let loss: LossKind = resolved.loss.parse().map_err(|e: String| anyhow!(e))?;
    let dataset = Dataset::load(&resolved.docs, &resolved.interactions)?;
    let cache = cache_read(&resolved.cache)?;
    if cache.dim as usize != resolved.backbone_dim {
        bail!(latefit_core::Error::DimMismatch {
            file: cache.dim,
            expected: resolved.backbone_dim as u32
        });
    }

    let (model, resume_state) = match &resolved.resume {
        Some(path) => {
            let (model, state) = load_checkpoint::<f32>(path)?;
            let state =
                state.ok_or_else(|| anyhow!("checkpoint has no training state to resume"))?;
            (model, Some(state))
        }
        None => {
            let config = ModelConfig {
                backbone: format!("stub-{}", resolved.backbone_dim),
                backbone_dim: resolved.backbone_dim,
                ..Default::default()
            };
            (init_params::<f32>(&config, resolved.seed), None)
        }
    };

    let cfg = TrainConfig {
        loss,
        epochs: resolved.epochs,
        projects_per_batch: resolved.batch_projects,
        lr0: resolved.lr0,
        seed: resolved.seed,
        unsuitable_per_project: defaults.unsuitable_per_project,
    };

    let mut log_writer = match &resolved.log {
        Some(path) => Some(BufWriter::new(File::create(path)?)),
        None => None,
    };
    let mut write_step = |entry: &StepLog| {
        if let Some(w) = log_writer.as_mut() {
            if let Ok(json) = serde_json::to_string(entry) {
                let _ = writeln!(w, "{json}");
            }
        }
    };

    let outcome = match train(&dataset, &cache, model, resume_state, &cfg, &mut write_step) {
        Ok(o) => o,
        Err(e @ latefit_core::Error::NonFiniteLoss { .. }) => {
            // diagnostic dump next to the checkpoint
            let diag = resolved.out.with_extension("diag.json");
            let _ = std::fs::write(
                &diag,
                serde_json::to_string_pretty(&serde_json::json!({
                    "error": e.to_string(),
                    "loss_kind": resolved.loss,
                    "seed": resolved.seed,
                }))
                .unwrap_or_default(),
            );
            eprintln!("[latefit] aborted: {e}; diagnostics at {}", diag.display());
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(w) = log_writer.as_mut() {
        w.flush()?;
    }
    save_checkpoint(&resolved.out, &outcome.model, Some(&outcome.state))?;
    let last = outcome.log.last();
    println!(
        "trained {} steps ({} epochs, loss {}), final loss {:.6}, checkpoint {}",
        outcome.state.meta.step,
        resolved.epochs,
        resolved.loss,
        last.map_or(f64::NAN, |l| l.loss),
        resolved.out.display()
    );
    Ok(())
}

// ------------------------------------------------------------------- score

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreOpts {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub docs: Option<PathBuf>,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub interactions: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ScoreResolved {
    checkpoint: PathBuf,
    docs: PathBuf,
    cache: PathBuf,
    interactions: PathBuf,
    out: PathBuf,
}

/// Score every interaction pair with the checkpointed model; emits scored
/// pairs JSONL for downstream analysis.
pub fn cmd_score(flags: ScoreOpts, file: Option<ScoreOpts>) -> Result<()> {
    let file = file.unwrap_or_default();
    let resolved = ScoreResolved {
        checkpoint: pick(flags.checkpoint, file.checkpoint)
            .ok_or_else(|| anyhow!("--checkpoint is required"))?,
        docs: pick(flags.docs, file.docs).ok_or_else(|| anyhow!("--docs is required"))?,
        cache: pick(flags.cache, file.cache).ok_or_else(|| anyhow!("--cache is required"))?,
        interactions: pick(flags.interactions, file.interactions)
            .ok_or_else(|| anyhow!("--interactions is required"))?,
        out: pick(flags.out, file.out).unwrap_or_else(|| PathBuf::from("scored.jsonl")),
    };
    log_resolved("score", &resolved);

    let pairs = score_pairs(
        &resolved.checkpoint,
        &resolved.docs,
        &resolved.cache,
        &resolved.interactions,
    )?;
    let mut w = BufWriter::new(File::create(&resolved.out)?);
    for p in &pairs {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    println!("scored {} pairs to {}", pairs.len(), resolved.out.display());
    Ok(())
}

/// Shared scoring path: model + cache + interactions -> scored pairs.
pub fn score_pairs(
    checkpoint: &Path,
    docs: &Path,
    cache_path: &Path,
    interactions: &Path,
) -> Result<Vec<ScoredPair>> {
    let (model, _) = load_checkpoint::<f32>(checkpoint)?;
    let dataset = Dataset::load(docs, interactions)?;
    let cache = cache_read(cache_path)?;
    score_dataset(&model, &dataset, &cache)
}

pub fn score_dataset(
    model: &ModelParams<f32>,
    dataset: &Dataset,
    cache: &EmbeddingCache,
) -> Result<Vec<ScoredPair>> {
    // profile encodings are reused across projects; briefs encoded once each
    let mut briefs: BTreeMap<&str, latefit_core::linalg::Mat<f32>> = BTreeMap::new();
    let mut profiles: BTreeMap<&str, latefit_core::linalg::Mat<f32>> = BTreeMap::new();
    let mut pairs = Vec::with_capacity(dataset.interactions.len());
    for rec in &dataset.interactions {
        if !briefs.contains_key(rec.project_id.as_str()) {
            let input = DocInput::<f32>::from_cache_entry(
                &rec.project_id,
                cache.get(&rec.project_id)?,
            );
            briefs.insert(
                rec.project_id.as_str(),
                encode_input(&input, &model.set.brief_branch)?.vectors,
            );
        }
        if !profiles.contains_key(rec.profile_id.as_str()) {
            let input = DocInput::<f32>::from_cache_entry(
                &rec.profile_id,
                cache.get(&rec.profile_id)?,
            );
            profiles.insert(
                rec.profile_id.as_str(),
                encode_input(&input, &model.set.profile_branch)?.vectors,
            );
        }
        let ep = &briefs[rec.project_id.as_str()];
        let ef = &profiles[rec.profile_id.as_str()];
        let (score, _) = interaction_forward(ep, ef, &model.set, &mut ScoreMode::Infer)?;
        pairs.push(ScoredPair {
            project_id: rec.project_id.clone(),
            profile_id: rec.profile_id.clone(),
            teacher: rec.teacher_score,
            student: f64::from(score),
            metadata: rec.metadata.clone(),
        });
    }
    Ok(pairs)
}

// -------------------------------------------------------------------- rank

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankOpts {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub docs: Option<PathBuf>,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Brief (project) id to rank profiles for.
    #[arg(long)]
    pub brief: Option<String>,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Emit JSON instead of a table.
    #[arg(long)]
    #[serde(default)]
    pub json: bool,
}

#[derive(Serialize)]
struct RankResolved {
    checkpoint: PathBuf,
    docs: PathBuf,
    cache: PathBuf,
    brief: String,
    top_k: Option<usize>,
    json: bool,
}

pub fn cmd_rank(flags: RankOpts, file: Option<RankOpts>) -> Result<()> {
    let file = file.unwrap_or_default();
    let resolved = RankResolved {
        checkpoint: pick(flags.checkpoint, file.checkpoint)
            .ok_or_else(|| anyhow!("--checkpoint is required"))?,
        docs: pick(flags.docs, file.docs).ok_or_else(|| anyhow!("--docs is required"))?,
        cache: pick(flags.cache, file.cache).ok_or_else(|| anyhow!("--cache is required"))?,
        brief: pick(flags.brief, file.brief).ok_or_else(|| anyhow!("--brief is required"))?,
        top_k: pick(flags.top_k, file.top_k),
        json: flags.json || file.json,
    };
    log_resolved("rank", &resolved);

    let (model, _) = load_checkpoint::<f32>(&resolved.checkpoint)?;
    let brief_vocab = default_vocab(DocKind::Brief);
    let profile_vocab = default_vocab(DocKind::Profile);
    let docs = read_documents_jsonl(&resolved.docs, &brief_vocab, &profile_vocab)?;
    if !docs.iter().any(|d| d.id == resolved.brief && d.kind == DocKind::Brief) {
        bail!(latefit_core::Error::CacheMiss(resolved.brief.clone()));
    }
    let profile_ids: Vec<String> = docs
        .iter()
        .filter(|d| d.kind == DocKind::Profile)
        .map(|d| d.id.clone())
        .collect();
    let cache = cache_read(&resolved.cache)?;
    let mut ranked = score_batch(&resolved.brief, &profile_ids, &cache, &model)?;
    if let Some(k) = resolved.top_k {
        ranked.truncate(k);
    }
    if resolved.json {
        let rows: Vec<serde_json::Value> = ranked
            .iter()
            .map(|(id, s)| serde_json::json!({"profile_id": id, "score": s}))
            .collect();
        println!("{}", serde_json::to_string_pretty(&rows)?);
    } else {
        println!("rank\tprofile_id\tscore");
        for (i, (id, score)) in ranked.iter().enumerate() {
            println!("{}\t{}\t{:.6}", i + 1, id, score);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- evaluate

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateOpts {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub docs: Option<PathBuf>,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub interactions: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Metadata key(s) to slice the evaluation by.
    #[arg(long)]
    pub slice: Option<Vec<String>>,
    /// Add the out-of-distribution comparison block.
    #[arg(long)]
    #[serde(default)]
    pub ood: bool,
    #[arg(long)]
    pub export_plot_data: Option<PathBuf>,
    /// Use binary instead of graded NDCG gains.
    #[arg(long)]
    #[serde(default)]
    pub binary_gains: bool,
}

#[derive(Serialize)]
struct EvaluateResolved {
    checkpoint: PathBuf,
    docs: PathBuf,
    cache: PathBuf,
    interactions: PathBuf,
    out: PathBuf,
    slice: Vec<String>,
    ood: bool,
    export_plot_data: Option<PathBuf>,
    binary_gains: bool,
}

pub fn cmd_evaluate(flags: EvaluateOpts, file: Option<EvaluateOpts>) -> Result<()> {
    let file = file.unwrap_or_default();
    let resolved = EvaluateResolved {
        checkpoint: pick(flags.checkpoint, file.checkpoint)
            .ok_or_else(|| anyhow!("--checkpoint is required"))?,
        docs: pick(flags.docs, file.docs).ok_or_else(|| anyhow!("--docs is required"))?,
        cache: pick(flags.cache, file.cache).ok_or_else(|| anyhow!("--cache is required"))?,
        interactions: pick(flags.interactions, file.interactions)
            .ok_or_else(|| anyhow!("--interactions is required"))?,
        out: pick(flags.out, file.out).unwrap_or_else(|| PathBuf::from("report.json")),
        slice: pick(flags.slice, file.slice).unwrap_or_default(),
        ood: flags.ood || file.ood,
        export_plot_data: pick(flags.export_plot_data, file.export_plot_data),
        binary_gains: flags.binary_gains || file.binary_gains,
    };
    log_resolved("evaluate", &resolved);

    let gains = if resolved.binary_gains { NdcgGains::Binary } else { NdcgGains::Graded };
    let pairs = score_pairs(
        &resolved.checkpoint,
        &resolved.docs,
        &resolved.cache,
        &resolved.interactions,
    )?;
    // OOD rows stay out of the headline numbers unless requested
    let base_pairs: Vec<ScoredPair> = pairs
        .iter()
        .filter(|p| !p.metadata.contains_key(latefit_core::metrics::OOD_KEY))
        .cloned()
        .collect();
    let mut report = ReportFile::new(compute_report(&base_pairs, gains)?);
    for key in &resolved.slice {
        report.slices.insert(key.clone(), sliced_evaluate(&base_pairs, key, gains)?);
    }
    if resolved.ood {
        report.ood = Some(ood_evaluate(&pairs, gains)?);
    }
    let f = BufWriter::new(File::create(&resolved.out)?);
    serde_json::to_writer_pretty(f, &report)?;
    if let Some(plot) = &resolved.export_plot_data {
        export_plot_data(plot, &base_pairs)?;
    }
    println!(
        "evaluated {} pairs ({} projects): ndcg {:.4}, mae {:.4}, report {}",
        report.overall.support.pairs,
        report.overall.support.projects,
        report.overall.ndcg,
        report.overall.mae,
        resolved.out.display()
    );
    Ok(())
}

// ------------------------------------------------------------------- bench

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchOpts {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub docs: Option<PathBuf>,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Brief id to score against; defaults to the first brief in the corpus.
    #[arg(long)]
    pub brief: Option<String>,
    #[arg(long)]
    pub pairs: Option<usize>,
}

#[derive(Serialize)]
struct BenchResolved {
    checkpoint: PathBuf,
    docs: PathBuf,
    cache: PathBuf,
    brief: Option<String>,
    pairs: usize,
}

pub struct BenchOutcome {
    pub pairs: usize,
    pub elapsed_ms: f64,
    pub pairs_per_second: f64,
}

pub fn cmd_bench(flags: BenchOpts, file: Option<BenchOpts>) -> Result<()> {
    let file = file.unwrap_or_default();
    let resolved = BenchResolved {
        checkpoint: pick(flags.checkpoint, file.checkpoint)
            .ok_or_else(|| anyhow!("--checkpoint is required"))?,
        docs: pick(flags.docs, file.docs).ok_or_else(|| anyhow!("--docs is required"))?,
        cache: pick(flags.cache, file.cache).ok_or_else(|| anyhow!("--cache is required"))?,
        brief: pick(flags.brief, file.brief),
        pairs: pick(flags.pairs, file.pairs).unwrap_or(1000),
    };
    log_resolved("bench", &resolved);
    let outcome = run_bench(
        &resolved.checkpoint,
        &resolved.docs,
        &resolved.cache,
        resolved.brief.as_deref(),
        resolved.pairs,
    )?;
    println!(
        "scored {} cached-profile pairs in {:.1} ms ({:.0} pairs/s, single-threaded)",
        outcome.pairs, outcome.elapsed_ms, outcome.pairs_per_second
    );
    Ok(())
}

/// Time cached-profile scoring for `n_pairs` pairs against one brief.
/// Refuses to run without a warm cache covering the documents involved.
pub fn run_bench(
    checkpoint: &Path,
    docs: &Path,
    cache_path: &Path,
    brief: Option<&str>,
    n_pairs: usize,
) -> Result<BenchOutcome> {
    let (model, _) = load_checkpoint::<f32>(checkpoint)?;
    let brief_vocab = default_vocab(DocKind::Brief);
    let profile_vocab = default_vocab(DocKind::Profile);
    let documents = read_documents_jsonl(docs, &brief_vocab, &profile_vocab)?;
    if !cache_path.exists() {
        bail!(latefit_core::Error::CacheMiss(format!(
            "no cache at {} (run embed first)",
            cache_path.display()
        )));
    }
    let cache = cache_read(cache_path)?;
    let brief_id = match brief {
        Some(id) => id.to_string(),
        None => documents
            .iter()
            .find(|d| d.kind == DocKind::Brief)
            .map(|d| d.id.clone())
            .ok_or_else(|| anyhow!("corpus has no briefs"))?,
    };
    let profile_ids: Vec<String> = documents
        .iter()
        .filter(|d| d.kind == DocKind::Profile)
        .map(|d| d.id.clone())
        .collect();
    if profile_ids.is_empty() {
        bail!("corpus has no profiles");
    }
    // warm-cache precondition
    cache.get(&brief_id)?;
    for pid in &profile_ids {
        cache.get(pid)?;
    }
    let batch: Vec<String> =
        (0..n_pairs).map(|i| profile_ids[i % profile_ids.len()].clone()).collect();

    let start = Instant::now();
    let ranked = score_batch(&brief_id, &batch, &cache, &model)?;
    let elapsed = start.elapsed();
    assert_eq!(ranked.len(), n_pairs);
    let elapsed_ms = elapsed.as_secs_f64() * 1000.0;
    Ok(BenchOutcome {
        pairs: n_pairs,
        elapsed_ms,
        pairs_per_second: n_pairs as f64 / elapsed.as_secs_f64(),
    })
}

// ---------------------------------------------------------- import-teacher

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportTeacherOpts {
    /// JSONL file of externally produced teacher scores.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Existing interactions file to merge into.
    #[arg(long)]
    pub into: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ImportTeacherResolved {
    input: PathBuf,
    into: Option<PathBuf>,
    out: PathBuf,
}

pub fn cmd_import_teacher(flags: ImportTeacherOpts, file: Option<ImportTeacherOpts>) -> Result<()> {
    let file = file.unwrap_or_default();
    let resolved = ImportTeacherResolved {
        input: pick(flags.input, file.input).ok_or_else(|| anyhow!("--input is required"))?,
        into: pick(flags.into, file.into),
        out: pick(flags.out, file.out).unwrap_or_else(|| PathBuf::from("interactions.jsonl")),
    };
    log_resolved("import-teacher", &resolved);

    let existing = match &resolved.into {
        Some(path) => read_interactions_jsonl(path)?,
        None => Vec::new(),
    };
    let (merged, warnings) = import_teacher_scores(&resolved.input, existing)?;
    write_interactions_jsonl(&resolved.out, &merged)?;
    if warnings > 0 {
        eprintln!("[latefit] {warnings} duplicate pair(s) overwritten (last write wins)");
    }
    println!("{} records written to {}", merged.len(), resolved.out.display());
    Ok(())
}
