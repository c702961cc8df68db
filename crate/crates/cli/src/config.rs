//! TOML configuration. Relative paths resolve against the config file's
//! directory; API keys come only from the environment.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use relext_core::{ChatSettings, EmbeddingSettings, RelationSet, RetrievalConfig, SiteProfile};
use serde::Deserialize;

pub const CHAT_KEY_VAR: &str = "CHAT_API_KEY";
pub const EMBED_KEY_VAR: &str = "EMBED_API_KEY";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub thesaurus: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub workdir: Option<PathBuf>,
    pub benchmark: Option<PathBuf>,
    /// Serialized automaton; rebuilt from the thesaurus when absent or stale.
    pub automaton_cache: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExemplarConfig {
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    pub concurrency: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig { concurrency: 8 }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DedupConfig {
    /// Defaults to the order sites are listed in.
    pub site_priority: Vec<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub reference_model: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub paths: Paths,
    pub sites: Vec<SiteProfile>,
    pub relations: Option<RelationSet>,
    pub retrieval: RetrievalConfig,
    pub chat: ChatSettings,
    pub embedding: EmbeddingSettings,
    pub exemplars: ExemplarConfig,
    pub extraction: ExtractionConfig,
    pub dedup: DedupConfig,
    pub evaluation: EvaluationConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Keys of `[section]` that `T` does not have. The endpoint sections use
/// flattened structs, which would otherwise drop unknown keys silently.
fn unknown_flattened_keys<T: serde::Serialize>(table: &toml::Table, section: &str, default: &T) -> Vec<String> {
    let known = serde_json::to_value(default).expect("settings serialize");
    let Some(toml::Value::Table(given)) = table.get(section) else { return Vec::new() };
    given.keys().filter(|k| known.get(k.as_str()).is_none()).map(|k| format!("{section}.{k}")).collect()
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let parsing = || format!("parsing config {}", path.display());
        let mut unknown = Vec::new();
        let de = toml::Deserializer::parse(&text).with_context(parsing)?;
        let mut cfg: Config =
            serde_ignored::deserialize(de, |key| unknown.push(key.to_string())).with_context(parsing)?;
        let table: toml::Table = text.parse().with_context(parsing)?;
        unknown.extend(unknown_flattened_keys(&table, "chat", &ChatSettings::default()));
        unknown.extend(unknown_flattened_keys(&table, "embedding", &EmbeddingSettings::default()));
        if !unknown.is_empty() {
            bail!("{}: unknown key(s) {}", parsing(), unknown.join(", "));
        }
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        self.retrieval.validate()?;
        let mut ids = std::collections::HashSet::new();
        for s in &self.sites {
            if !ids.insert(&s.site_id) {
                bail!("site `{}` is configured twice", s.site_id);
            }
        }
        if self.extraction.concurrency == 0 {
            bail!("extraction.concurrency must be at least 1");
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn relations(&self) -> RelationSet {
        self.relations.clone().unwrap_or_else(RelationSet::standard)
    }

    pub fn site(&self, id: &str) -> Option<&SiteProfile> {
        self.sites.iter().find(|s| s.site_id == id)
    }

    pub fn site_priority(&self) -> Vec<String> {
        if self.dedup.site_priority.is_empty() {
            self.sites.iter().map(|s| s.site_id.clone()).collect()
        } else {
            self.dedup.site_priority.clone()
        }
    }

    /// A configured path that must exist.
    pub fn existing(&self, name: &str, p: &Option<PathBuf>) -> Result<PathBuf> {
        let Some(p) = p else { bail!("paths.{name} is not set") };
        let p = self.resolve(p);
        if !p.exists() {
            bail!("paths.{name}: {} does not exist", p.display());
        }
        Ok(p)
    }
}

pub fn api_key(var: &str) -> Option<String> {
    std::env::var(var).ok().filter(|k| !k.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_config_parses() {
        let cfg: Config = toml::from_str(
            r#"
            [paths]
            thesaurus = "thesaurus.tsv"
            manifest = "manifest.jsonl"

            [[sites]]
            site_id = "medlineplus"
            list_marker_style = "plain"

            [[sites]]
            site_id = "msd"
            list_marker_style = "numbered"
            subpage_kinds = ["professional"]

            [chat]
            base_url = "http://127.0.0.1:9000/v1"
            model = "gpt-4"
            max_retries = 2
            seed = 7

            [embedding]
            base_url = "http://127.0.0.1:9001/v1"
            batch_limit = 64

            [retrieval]
            top_k = 5

            [dedup]
            site_priority = ["msd"]
            "#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.chat.endpoint.model, "gpt-4");
        assert_eq!(cfg.chat.seed, Some(7));
        assert_eq!(cfg.chat.max_tokens, 512);
        assert_eq!(cfg.embedding.batch_limit, 64);
        assert_eq!(cfg.retrieval.top_k, 5);
        assert_eq!(cfg.retrieval.anchor_min_words, 512);
        assert_eq!(cfg.relations().len(), 3);
        assert_eq!(cfg.site_priority(), vec!["msd"]);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(toml::from_str::<Config>("[paths]\nthesaurs = 'x'").is_err());
        let dup = toml::from_str::<Config>(
            "[[relations]]\nid='a'\nphrase='p'\nallowed_semantic_types=['T']\n[[relations]]\nid='a'\nphrase='q'\nallowed_semantic_types=['T']",
        );
        assert!(dup.is_err());
        let cfg: Config = toml::from_str("[retrieval]\noverlap_words = 200").unwrap();
        assert!(cfg.validate().is_err());
    }
}
