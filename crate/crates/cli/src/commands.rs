use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context};
use relext_core::evaluation::{agreement_matrix, model_ids, parse_benchmark, render_scores, score_models};
use relext_core::mock::{MockKind, MockScript, MockServer};
use relext_core::pipeline::{DocumentIndex, ExtractionContext};
use relext_core::thesaurus::load_thesaurus;
use relext_core::{
    build_matcher, enumerate_candidates, preprocess_html_bytes, render_report, run_extraction,
    CandidatePair, ChatEndpoint, EmbeddingEndpoint, ExemplarSet, MatcherAutomaton, PipelineError,
    WebDocument,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{api_key, Config, CHAT_KEY_VAR, EMBED_KEY_VAR};
use crate::io::{read_jsonl, write_json, write_jsonl, write_text};
use crate::Global;

pub const EXIT_OK: u8 = 0;
pub const EXIT_PARTIAL: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;

pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

type CmdResult = Result<u8, Failure>;

trait Classify<T> {
    fn config_err(self) -> Result<T, Failure>;
    fn failed(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config_err(self) -> Result<T, Failure> {
        self.map_err(|e| Failure { code: EXIT_CONFIG, error: e.into() })
    }

    fn failed(self) -> Result<T, Failure> {
        self.map_err(|e| Failure { code: EXIT_PARTIAL, error: e.into() })
    }
}

const DEFAULT_CONFIG: &str = "relext.toml";

fn load_config(g: &Global, required: bool) -> Result<Option<Config>, Failure> {
    let path = match &g.config {
        Some(p) => p.clone(),
        None if Path::new(DEFAULT_CONFIG).exists() => PathBuf::from(DEFAULT_CONFIG),
        None if required => {
            return Err(anyhow!("no configuration: pass --config or create {DEFAULT_CONFIG}")).config_err()
        }
        None => return Ok(None),
    };
    Config::load(&path).map(Some).config_err()
}

fn require_config(g: &Global) -> Result<Config, Failure> {
    Ok(load_config(g, true)?.expect("required config is loaded"))
}

fn workdir(g: &Global, cfg: Option<&Config>) -> Result<PathBuf, Failure> {
    let dir = match (&g.workdir, cfg) {
        (Some(d), _) => d.clone(),
        (None, Some(c)) => c.resolve(c.paths.workdir.as_deref().unwrap_or(Path::new("work"))),
        (None, None) => PathBuf::from("work"),
    };
    std::fs::create_dir_all(&dir).with_context(|| format!("creating workdir {}", dir.display())).config_err()?;
    Ok(dir)
}

/// A stage input produced by an earlier subcommand.
fn stage_input(dir: &Path, name: &str, producer: &str) -> Result<PathBuf, Failure> {
    let p = dir.join(name);
    if !p.exists() {
        return Err(anyhow!("{} not found; run `relext {producer}` first", p.display())).config_err();
    }
    Ok(p)
}

fn timestamp() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    site_id: String,
    url: String,
    path: PathBuf,
    #[serde(default)]
    subpage: Option<String>,
}

pub fn preprocess(g: &Global) -> CmdResult {
    let cfg = require_config(g)?;
    let manifest = cfg.existing("manifest", &cfg.paths.manifest).config_err()?;
    let dir = workdir(g, Some(&cfg))?;
    let entries: Vec<ManifestEntry> = read_jsonl(&manifest).config_err()?;
    let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let out_path = dir.join("documents.jsonl");
    if entries.is_empty() {
        log::warn!("manifest {} lists no pages", manifest.display());
        eprintln!("warning: manifest is empty");
    }

    let mut docs: Vec<WebDocument> = Vec::new();
    let mut errors: Vec<String> = Vec::new();
    let mut skipped = 0;
    for e in entries {
        let file = if e.path.is_absolute() { e.path.clone() } else { base.join(&e.path) };
        let Some(profile) = cfg.site(&e.site_id) else {
            errors.push(format!("{}: site `{}` is not configured", file.display(), e.site_id));
            continue;
        };
        if !profile.keeps_subpage(e.subpage.as_deref()) {
            skipped += 1;
            continue;
        }
        let bytes = match std::fs::read(&file) {
            Ok(b) => b,
            Err(err) => {
                errors.push(format!("{}: {err}", file.display()));
                continue;
            }
        };
        match preprocess_html_bytes(&bytes, profile, &e.url) {
            Ok(d) => docs.push(d),
            Err(err) => errors.push(format!("{}: {err}", file.display())),
        }
    }
    write_jsonl(&out_path, &docs).failed()?;
    println!(
        "preprocessed {} documents ({skipped} skipped, {} failed) -> {}",
        docs.len(),
        errors.len(),
        out_path.display()
    );
    for e in &errors {
        eprintln!("error: {e}");
    }
    Ok(if errors.is_empty() { EXIT_OK } else { EXIT_PARTIAL })
}

fn load_matcher(cfg: &Config) -> Result<MatcherAutomaton, Failure> {
    let thesaurus_path = cfg.existing("thesaurus", &cfg.paths.thesaurus).config_err()?;
    let cache = cfg.paths.automaton_cache.as_ref().map(|p| cfg.resolve(p));
    if let Some(cache) = &cache {
        let fresh = match (std::fs::metadata(cache), std::fs::metadata(&thesaurus_path)) {
            (Ok(c), Ok(t)) => matches!((c.modified(), t.modified()), (Ok(c), Ok(t)) if c >= t),
            _ => false,
        };
        if fresh {
            match File::open(cache).map_err(anyhow::Error::from).and_then(|f| {
                MatcherAutomaton::read_cache(BufReader::new(f)).map_err(anyhow::Error::from)
            }) {
                Ok(m) => return Ok(m),
                Err(e) => log::warn!("rebuilding automaton: {e:#}"),
            }
        }
    }
    let thesaurus = load_thesaurus(&thesaurus_path).failed()?;
    let stats = thesaurus.stats();
    if stats.skipped_malformed + stats.skipped_empty + stats.skipped_short > 0 {
        eprintln!(
            "warning: thesaurus rows skipped: {} malformed, {} empty, {} too short",
            stats.skipped_malformed, stats.skipped_empty, stats.skipped_short
        );
    }
    let matcher = build_matcher(&thesaurus).failed()?;
    if let Some(cache) = &cache {
        let written = File::create(cache)
            .map_err(anyhow::Error::from)
            .and_then(|f| matcher.write_cache(std::io::BufWriter::new(f)).map_err(anyhow::Error::from));
        if let Err(e) = written {
            log::warn!("cannot write automaton cache {}: {e:#}", cache.display());
        }
    }
    Ok(matcher)
}

pub fn match_terms(g: &Global) -> CmdResult {
    let cfg = require_config(g)?;
    let dir = workdir(g, Some(&cfg))?;
    let docs: Vec<WebDocument> = read_jsonl(&stage_input(&dir, "documents.jsonl", "preprocess")?).failed()?;
    let matcher = load_matcher(&cfg)?;
    let relations = cfg.relations();
    let candidates = enumerate_candidates(&docs, &matcher, &relations);
    let out_path = dir.join("candidates.jsonl");
    write_jsonl(&out_path, &candidates).failed()?;

    let mut counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for c in &candidates {
        *counts.entry((c.site_id.as_str(), c.relation.as_str())).or_default() += 1;
    }
    println!("{} candidates from {} documents -> {}", candidates.len(), docs.len(), out_path.display());
    for ((site, rel), n) in counts {
        println!("  {site}\t{rel}\t{n}");
    }
    Ok(EXIT_OK)
}

fn watch_signals(stop: Arc<AtomicBool>) {
    tokio::spawn(async move {
        #[cfg(unix)]
        {
            use tokio::signal::unix::{signal, SignalKind};
            let Ok(mut term) = signal(SignalKind::terminate()) else { return };
            tokio::select! {
                _ = tokio::signal::ctrl_c() => {}
                _ = term.recv() => {}
            }
        }
        #[cfg(not(unix))]
        {
            let _ = tokio::signal::ctrl_c().await;
        }
        eprintln!("stopping: waiting for in-flight requests");
        stop.store(true, Ordering::SeqCst);
    });
}

#[derive(Serialize)]
struct Summary<'a> {
    candidates: usize,
    classified: usize,
    resumed: usize,
    triplets: usize,
    duplicates: usize,
    malformed: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_unix: Option<u64>,
    report: &'a serde_json::Value,
}

pub async fn extract(g: &Global) -> CmdResult {
    let cfg = require_config(g)?;
    let dir = workdir(g, Some(&cfg))?;
    let mut candidates: Vec<CandidatePair> =
        read_jsonl(&stage_input(&dir, "candidates.jsonl", "match")?).failed()?;
    if let Some(limit) = g.limit {
        candidates.truncate(limit);
    }
    let docs: Vec<WebDocument> = read_jsonl(&stage_input(&dir, "documents.jsonl", "preprocess")?).failed()?;
    let relations = cfg.relations();
    let exemplars = match &cfg.exemplars.path {
        Some(p) => ExemplarSet::load(cfg.resolve(p)).config_err()?,
        None => ExemplarSet::builtin(),
    };
    exemplars.check_covers(&relations).config_err()?;

    let ctx = ExtractionContext {
        chat: ChatEndpoint::new(cfg.chat.clone(), api_key(CHAT_KEY_VAR)),
        embed: EmbeddingEndpoint::new(cfg.embedding.clone(), api_key(EMBED_KEY_VAR)),
        exemplars,
        relations,
        retrieval: cfg.retrieval,
        concurrency: cfg.extraction.concurrency,
        site_priority: cfg.site_priority(),
        deterministic: g.deterministic,
    };
    let journal = dir.join("journal.jsonl");
    let stop = Arc::new(AtomicBool::new(false));
    watch_signals(stop.clone());

    let index = DocumentIndex::new(docs);
    let out = match run_extraction(&candidates, &index, &ctx, &journal, &stop).await {
        Ok(out) => out,
        Err(PipelineError::Interrupted { completed }) => {
            eprintln!(
                "interrupted after {completed} of {} candidates; rerun to resume from {}",
                candidates.len(),
                journal.display()
            );
            return Ok(EXIT_PARTIAL);
        }
        Err(e) => {
            return Err(anyhow!(e).context(format!("extraction aborted; progress kept in {}", journal.display())))
                .failed();
        }
    };

    let rendered = render_report(&out.report);
    write_jsonl(&dir.join("triplets.jsonl"), &out.triplets).failed()?;
    write_jsonl(&dir.join("malformed.jsonl"), &out.malformed).failed()?;
    write_text(&dir.join("report.txt"), &rendered.table).failed()?;
    let summary = Summary {
        candidates: candidates.len(),
        classified: out.classified,
        resumed: out.resumed,
        triplets: out.triplets.len(),
        duplicates: out.duplicates,
        malformed: out.malformed.len(),
        generated_unix: (!g.deterministic).then(timestamp),
        report: &rendered.json,
    };
    write_json(&dir.join("report.json"), &json!(summary)).failed()?;
    print!("{}", rendered.table);
    println!(
        "{} triplets ({} duplicates merged), {} malformed; {} classified, {} from journal",
        out.triplets.len(),
        out.duplicates,
        out.malformed.len(),
        out.classified,
        out.resumed
    );
    Ok(EXIT_OK)
}

pub fn eval(g: &Global, benchmark: Option<PathBuf>) -> CmdResult {
    let cfg = load_config(g, false)?;
    let path = match (benchmark, &cfg) {
        (Some(p), _) => p,
        (None, Some(c)) => c.existing("benchmark", &c.paths.benchmark).config_err()?,
        (None, None) => return Err(anyhow!("no benchmark: pass --benchmark or set paths.benchmark")).config_err(),
    };
    let file = File::open(&path).with_context(|| format!("opening {}", path.display())).config_err()?;
    let samples = parse_benchmark(BufReader::new(file))
        .map_err(|e| anyhow!("{}: {e}", path.display()))
        .failed()?;
    if samples.is_empty() {
        return Err(anyhow!("{} contains no samples", path.display())).failed();
    }
    let dir = workdir(g, cfg.as_ref())?;
    let scores = score_models(&samples).failed()?;
    let (table, metrics_json) = render_scores(&scores);

    let models = model_ids(&samples);
    let reference = g
        .reference
        .clone()
        .or_else(|| cfg.as_ref().and_then(|c| c.evaluation.reference_model.clone()))
        .or_else(|| models.first().cloned())
        .ok_or_else(|| anyhow!("benchmark has no predictions"))
        .failed()?;
    if !models.contains(&reference) {
        return Err(anyhow!("reference model `{reference}` has no predictions in {}", path.display())).config_err();
    }
    let agreement = agreement_matrix(&samples, &reference).failed()?;

    let stamp = |mut v: serde_json::Value| {
        if !g.deterministic {
            v["generated_unix"] = json!(timestamp());
        }
        v
    };
    write_text(&dir.join("metrics.txt"), &table).failed()?;
    write_json(&dir.join("metrics.json"), &stamp(json!({"samples": samples.len(), "models": metrics_json})))
        .failed()?;
    write_json(&dir.join("agreement.json"), &stamp(agreement.to_json())).failed()?;

    print!("{table}");
    println!("\nCohen's kappa (reference for malformed outputs: {reference})");
    let width = models.iter().map(String::len).max().unwrap_or(0);
    for (i, m) in agreement.model_ids.iter().enumerate() {
        let row: Vec<String> = agreement.kappa[i].iter().map(|k| format!("{k:>6.3}")).collect();
        println!("{m:<width$}  {}", row.join(" "));
    }
    Ok(EXIT_OK)
}

pub async fn mock_serve(kind: MockKind, script: Option<PathBuf>, bind: SocketAddr, log: Option<PathBuf>) -> CmdResult {
    let script = match script {
        Some(p) => MockScript::load(&p).with_context(|| format!("loading script {}", p.display())).config_err()?,
        None => MockScript::default(),
    };
    let server = MockServer::start(kind, script, bind, log)
        .await
        .with_context(|| format!("binding {bind}"))
        .config_err()?;
    println!("listening on {}", server.base_url());
    use std::io::Write;
    let _ = std::io::stdout().flush();

    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate()).failed()?;
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
    let served = server.request_count();
    server.shutdown().await;
    eprintln!("served {served} requests");
    Ok(EXIT_OK)
}
