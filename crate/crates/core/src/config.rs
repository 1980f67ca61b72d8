//! Runtime configuration: every hyperparameter with its default, provider
//! settings, and the resolution chain defaults < config file < `TUNES_*`
//! environment < CLI flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{HttpChatProvider, LlmGateway, MockChatProvider, PromptSet};
use crate::llm::http::HttpProviderConfig;
use crate::retrieval::{CotConfig, Engine, RunFlags, SearchConfig};
use crate::vector::{EmbeddingProvider, HashedBagProvider, HttpEmbeddingProvider};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config error: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    /// Prompt window: first h rows and h columns.
    pub window: usize,
    /// Subgraph depth for entity embeddings.
    pub depth: usize,
    /// Top-K entities kept from fusion.
    pub k: usize,
    pub w_fulltext: f64,
    pub w_semantic: f64,
    /// Cosine threshold for merging synonymous attribute nodes.
    pub merge_threshold: f64,
    pub bm25_k1: f64,
    pub bm25_b: f64,
}

impl Default for SearchSection {
    fn default() -> Self {
        SearchSection {
            window: 5,
            depth: 2,
            k: 50,
            w_fulltext: 1.0,
            w_semantic: 1.0,
            merge_threshold: 0.95,
            bm25_k1: crate::lexical::DEFAULT_K1,
            bm25_b: crate::lexical::DEFAULT_B,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    /// "mock" or "http".
    pub provider: String,
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    /// Mock rule file; empty uses the built-in rules.
    pub mock_rules: String,
    pub cypher_temperature: f64,
    pub answer_temperature: f64,
    pub identify_temperature: f64,
    /// JSONL transcript path; empty disables transcripts.
    pub transcript: String,
}

impl Default for LlmSection {
    fn default() -> Self {
        LlmSection {
            provider: String::new(),
            endpoint: String::new(),
            model: String::new(),
            api_key_env: "TUNES_API_KEY".to_string(),
            mock_rules: String::new(),
            cypher_temperature: 0.4,
            answer_temperature: 0.0,
            identify_temperature: 0.0,
            transcript: String::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    /// "hashed" or "http".
    pub provider: String,
    pub endpoint: String,
    pub dim: usize,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        EmbeddingSection {
            provider: "hashed".to_string(),
            endpoint: String::new(),
            dim: 256,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CotSection {
    pub max_iterations: u32,
    pub confidence_threshold: f64,
}

impl Default for CotSection {
    fn default() -> Self {
        CotSection {
            max_iterations: 3,
            confidence_threshold: 0.7,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// Directory with prompt template files; empty uses the built-ins.
    pub prompts_dir: String,
    pub pk_examples: String,
    pub relation_examples: String,
    pub cypher_examples: String,
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection {
            prompts_dir: String::new(),
            pk_examples: String::new(),
            relation_examples: String::new(),
            cypher_examples: String::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub parallelism: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection { parallelism: 1 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub search: SearchSection,
    pub llm: LlmSection,
    pub embedding: EmbeddingSection,
    pub cot: CotSection,
    pub paths: PathsSection,
    pub bench: BenchSection,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Applies `TUNES_*` environment overrides.
    pub fn apply_env(&mut self) -> Result<(), ConfigError> {
        self.apply_env_from(|name| std::env::var(name).ok())
    }

    pub fn apply_env_from(
        &mut self,
        get: impl Fn(&str) -> Option<String>,
    ) -> Result<(), ConfigError> {
        fn set<T: std::str::FromStr>(
            slot: &mut T,
            name: &str,
            get: &impl Fn(&str) -> Option<String>,
        ) -> Result<(), ConfigError> {
            if let Some(raw) = get(name) {
                *slot = raw
                    .parse()
                    .map_err(|_| ConfigError::Invalid(format!("bad value for {name}: '{raw}'")))?;
            }
            Ok(())
        }
        set(&mut self.search.window, "TUNES_WINDOW", &get)?;
        set(&mut self.search.depth, "TUNES_DEPTH", &get)?;
        set(&mut self.search.k, "TUNES_K", &get)?;
        set(&mut self.search.w_fulltext, "TUNES_W_FULLTEXT", &get)?;
        set(&mut self.search.w_semantic, "TUNES_W_SEMANTIC", &get)?;
        set(&mut self.search.merge_threshold, "TUNES_MERGE_THRESHOLD", &get)?;
        set(&mut self.search.bm25_k1, "TUNES_BM25_K1", &get)?;
        set(&mut self.search.bm25_b, "TUNES_BM25_B", &get)?;
        set(&mut self.llm.provider, "TUNES_LLM_PROVIDER", &get)?;
        set(&mut self.llm.endpoint, "TUNES_LLM_ENDPOINT", &get)?;
        set(&mut self.llm.model, "TUNES_LLM_MODEL", &get)?;
        set(&mut self.llm.api_key_env, "TUNES_LLM_API_KEY_ENV", &get)?;
        set(&mut self.llm.mock_rules, "TUNES_MOCK_RULES", &get)?;
        set(&mut self.llm.cypher_temperature, "TUNES_CYPHER_TEMPERATURE", &get)?;
        set(&mut self.llm.answer_temperature, "TUNES_ANSWER_TEMPERATURE", &get)?;
        set(&mut self.llm.transcript, "TUNES_TRANSCRIPT", &get)?;
        set(&mut self.embedding.provider, "TUNES_EMBEDDING_PROVIDER", &get)?;
        set(&mut self.embedding.endpoint, "TUNES_EMBEDDING_ENDPOINT", &get)?;
        set(&mut self.embedding.dim, "TUNES_EMBEDDING_DIM", &get)?;
        set(&mut self.cot.max_iterations, "TUNES_MAX_ITERATIONS", &get)?;
        set(&mut self.cot.confidence_threshold, "TUNES_CONFIDENCE_THRESHOLD", &get)?;
        set(&mut self.bench.parallelism, "TUNES_PARALLELISM", &get)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.search_config()
            .validate()
            .map_err(ConfigError::Invalid)?;
        if !(1..=3).contains(&self.cot.max_iterations) {
            return Err(ConfigError::Invalid(
                "cot.max_iterations must be between 1 and 3".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.cot.confidence_threshold) {
            return Err(ConfigError::Invalid(
                "cot.confidence_threshold must be in [0, 1]".into(),
            ));
        }
        if self.embedding.dim == 0 {
            return Err(ConfigError::Invalid("embedding.dim must be positive".into()));
        }
        Ok(())
    }

    pub fn search_config(&self) -> SearchConfig {
        SearchConfig {
            w_fulltext: self.search.w_fulltext,
            w_semantic: self.search.w_semantic,
            k: self.search.k,
            merge_threshold: self.search.merge_threshold,
            depth: self.search.depth,
            window: self.search.window,
            bm25_k1: self.search.bm25_k1,
            bm25_b: self.search.bm25_b,
        }
    }

    /// Assembles the runtime. `force_mock` is the CLI `--mock` switch; it
    /// wins over the configured provider.
    pub fn build_engine(&self, force_mock: bool, flags: RunFlags) -> Result<Engine, ConfigError> {
        self.validate()?;
        let provider_kind = if force_mock {
            "mock"
        } else {
            self.llm.provider.as_str()
        };
        let provider: Box<dyn crate::llm::ChatProvider> = match provider_kind {
            "mock" => {
                let mock = if self.llm.mock_rules.is_empty() {
                    MockChatProvider::builtin()
                } else {
                    MockChatProvider::from_file(&PathBuf::from(&self.llm.mock_rules))
                        .map_err(|e| ConfigError::Invalid(e.to_string()))?
                };
                Box::new(mock)
            }
            "http" => {
                if self.llm.endpoint.is_empty() {
                    return Err(ConfigError::Invalid(
                        "llm.provider is 'http' but llm.endpoint is empty".into(),
                    ));
                }
                let mut http = HttpProviderConfig::new(&self.llm.endpoint, &self.llm.model);
                http.api_key = std::env::var(&self.llm.api_key_env).ok();
                Box::new(
                    HttpChatProvider::new(http)
                        .map_err(|e| ConfigError::Invalid(e.to_string()))?,
                )
            }
            "" => {
                return Err(ConfigError::Invalid(
                    "no LLM provider configured; set llm.provider to \"http\" (with llm.endpoint \
                     and llm.model) or pass --mock"
                        .into(),
                ))
            }
            other => {
                return Err(ConfigError::Invalid(format!(
                    "unknown llm.provider '{other}' (expected \"mock\" or \"http\")"
                )))
            }
        };
        let mut gateway = LlmGateway::new(provider);
        if !self.llm.transcript.is_empty() {
            gateway = gateway.with_transcript(Path::new(&self.llm.transcript))?;
        }

        let embedder: Box<dyn EmbeddingProvider> = match self.embedding.provider.as_str() {
            "hashed" | "" => Box::new(HashedBagProvider::new(self.embedding.dim)),
            "http" => {
                if self.embedding.endpoint.is_empty() {
                    return Err(ConfigError::Invalid(
                        "embedding.provider is 'http' but embedding.endpoint is empty".into(),
                    ));
                }
                Box::new(
                    HttpEmbeddingProvider::new(&self.embedding.endpoint, self.embedding.dim)
                        .map_err(|e| ConfigError::Invalid(e.to_string()))?,
                )
            }
            other => {
                return Err(ConfigError::Invalid(format!(
                    "unknown embedding.provider '{other}' (expected \"hashed\" or \"http\")"
                )))
            }
        };

        let prompts = if self.paths.prompts_dir.is_empty() {
            PromptSet::builtin()
        } else {
            PromptSet::from_dir(Path::new(&self.paths.prompts_dir))
                .map_err(|e| ConfigError::Invalid(e.to_string()))?
        };
        let read_or = |path: &str, builtin: &str| -> Result<String, ConfigError> {
            if path.is_empty() {
                Ok(builtin.to_string())
            } else {
                Ok(std::fs::read_to_string(path)?)
            }
        };

        let mut temperatures = BTreeMap::new();
        temperatures.insert("text_to_cypher".to_string(), self.llm.cypher_temperature);
        temperatures.insert("answer".to_string(), self.llm.answer_temperature);
        temperatures.insert("primary_key".to_string(), self.llm.identify_temperature);
        temperatures.insert("relations".to_string(), self.llm.identify_temperature);

        Ok(Engine {
            gateway,
            embedder,
            prompts,
            pk_examples: read_or(
                &self.paths.pk_examples,
                include_str!("../fixtures/primary_key_examples.txt"),
            )?,
            relation_examples: read_or(
                &self.paths.relation_examples,
                include_str!("../fixtures/relations_examples.txt"),
            )?,
            cypher_examples: read_or(
                &self.paths.cypher_examples,
                include_str!("../fixtures/cypher_examples.txt"),
            )?,
            search: self.search_config(),
            cot: CotConfig {
                max_iterations: self.cot.max_iterations,
                confidence_threshold: self.cot.confidence_threshold,
            },
            flags,
            temperatures,
        })
    }
}
