use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;
use visjudge_core::backend::{
    Backend, BackendId, Client, GenParams, HttpBackend, ImageResolver, ResponseCache, RetryPolicy, StubBackend,
    StubScript,
};
use visjudge_core::prompt_kit::Templates;

/// Prefix that names an ad-hoc stub backend instead of a configured one,
/// e.g. `stub:builtin:judge` or `stub:path/to/script.json`.
pub const STUB_PREFIX: &str = "stub:";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Parent of the timestamped run directories.
    pub run_root: Option<PathBuf>,
    pub parallelism: Option<usize>,
    pub seed: Option<u64>,
    pub templates_dir: Option<PathBuf>,
    /// On-disk response cache; in-memory when unset.
    pub cache_dir: Option<PathBuf>,
    pub request_timeout_secs: Option<u64>,
    #[serde(default)]
    pub retry: RetryConfig,
    #[serde(default)]
    pub backends: BTreeMap<String, BackendConfig>,
    #[serde(default)]
    pub synth: SynthSection,
    #[serde(default)]
    pub judge: JudgeSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryConfig {
    pub max_attempts: Option<u32>,
    pub base_ms: Option<u64>,
    pub factor: Option<f64>,
    pub cap_ms: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    Stub {
        script: String,
        #[serde(default)]
        latency_ms: u64,
    },
    Openai {
        endpoint: String,
        model: String,
        /// Defaults to `<NAME>_API_KEY`.
        api_key_env: Option<String>,
    },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampling {
    pub temperature: Option<f64>,
    pub top_p: Option<f64>,
    pub max_tokens: Option<u32>,
}

impl Sampling {
    pub fn params(&self) -> GenParams {
        let d = GenParams::default();
        GenParams {
            temperature: self.temperature.unwrap_or(d.temperature),
            top_p: self.top_p.unwrap_or(d.top_p),
            max_tokens: self.max_tokens.unwrap_or(d.max_tokens),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub images_dir: Option<PathBuf>,
    pub seeds_general: Option<PathBuf>,
    pub seeds_domain: Option<PathBuf>,
    pub backend: Option<String>,
    pub per_image: Option<usize>,
    pub per_rubric: Option<usize>,
    pub max_align_iters: Option<u32>,
    pub retries: Option<u32>,
    #[serde(flatten)]
    pub sampling: Sampling,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeSection {
    pub benchmark: Option<PathBuf>,
    pub responses: Option<PathBuf>,
    pub responder: Option<String>,
    pub judge: Option<String>,
    pub repeats: Option<u32>,
    pub parse_retries: Option<u32>,
    #[serde(flatten)]
    pub sampling: Sampling,
}

pub fn default_key_env(name: &str) -> String {
    let mut s: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_uppercase()
            } else {
                '_'
            }
        })
        .collect();
    s.push_str("_API_KEY");
    s
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig {
                base_dir: PathBuf::from("."),
                ..Default::default()
            });
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        if cfg.base_dir.as_os_str().is_empty() {
            cfg.base_dir = PathBuf::from(".");
        }
        for (name, b) in &cfg.backends {
            if name.starts_with(STUB_PREFIX) {
                bail!("backend name '{name}' may not start with '{STUB_PREFIX}'");
            }
            if let BackendConfig::Openai { endpoint, model, .. } = b {
                BackendId::new(name, endpoint, model)
                    .validate()
                    .map_err(|e| anyhow!(e))?;
            }
        }
        Ok(cfg)
    }

    /// Paths in the config file are relative to the file itself.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn templates(&self) -> Result<Templates> {
        match &self.templates_dir {
            Some(d) => Ok(Templates::from_dir(self.resolve(d))?),
            None => Ok(Templates::from_env()?),
        }
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        let d = RetryPolicy::default();
        RetryPolicy {
            max_attempts: self.retry.max_attempts.unwrap_or(d.max_attempts),
            base_ms: self.retry.base_ms.unwrap_or(d.base_ms),
            factor: self.retry.factor.unwrap_or(d.factor),
            cap_ms: self.retry.cap_ms.unwrap_or(d.cap_ms),
        }
    }

    /// Builds a client for a configured backend or a `stub:` spec. Missing
    /// credentials are reported here, before any request, unless `offline`.
    pub fn client(&self, name: &str, seed: u64, image_base: Option<PathBuf>, offline: bool) -> Result<Client> {
        let (id, backend): (BackendId, Arc<dyn Backend>) = if let Some(spec) = name.strip_prefix(STUB_PREFIX) {
            let script = StubScript::load(spec, Some(&self.base_dir)).map_err(|e| anyhow!(e))?;
            (
                stub_id(name),
                Arc::new(StubBackend::new(script).map_err(|e| anyhow!(e))?),
            )
        } else {
            match self.backends.get(name) {
                None => bail!(
                    "unknown backend '{name}'; configured: [{}]",
                    self.backends.keys().cloned().collect::<Vec<_>>().join(", ")
                ),
                Some(BackendConfig::Stub { script, latency_ms }) => {
                    let script = StubScript::load(script, Some(&self.base_dir))
                        .map_err(|e| anyhow!(e))?
                        .with_latency(*latency_ms);
                    (
                        stub_id(name),
                        Arc::new(StubBackend::new(script).map_err(|e| anyhow!(e))?),
                    )
                }
                Some(BackendConfig::Openai {
                    endpoint,
                    model,
                    api_key_env,
                }) => {
                    let var = api_key_env.clone().unwrap_or_else(|| default_key_env(name));
                    if !offline && std::env::var_os(&var).is_none() {
                        bail!("backend '{name}' needs an API key in ${var}");
                    }
                    let mut id = BackendId::new(name, endpoint, model);
                    id.auth_env = Some(var);
                    let timeout = Duration::from_secs(self.request_timeout_secs.unwrap_or(120));
                    let http = HttpBackend::new(id.clone(), timeout).map_err(|e| anyhow!(e))?;
                    (id, Arc::new(http))
                }
            }
        };
        let cache = match &self.cache_dir {
            Some(d) => {
                let d = self.resolve(d);
                ResponseCache::on_disk(&d).with_context(|| format!("cache dir {}", d.display()))?
            }
            None => ResponseCache::in_memory(),
        };
        Ok(Client::new(id, backend)
            .with_cache(Arc::new(cache))
            .with_retry(self.retry_policy())
            .with_seed(seed)
            .with_images(ImageResolver::new(image_base)))
    }
}

fn stub_id(name: &str) -> BackendId {
    BackendId::new(name, "http://stub.invalid/v1", "stub")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(
            &p,
            r#"
run_root = "runs"
seed = 7
[backends.gpt4v]
kind = "openai"
endpoint = "https://api.example.com/v1"
model = "gpt-4-vision-preview"
[backends.offline]
kind = "stub"
script = "builtin:judge"
[synth]
images_dir = "images"
per_image = 3
temperature = 1.0
[judge]
repeats = 3
"#,
        )
        .unwrap();
        let cfg = RunConfig::load(Some(&p)).unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.resolve(Path::new("images")), dir.path().join("images"));
        assert_eq!(cfg.synth.sampling.params().temperature, 1.0);
        assert!(cfg.client("offline", 0, None, false).is_ok());
        assert!(cfg.client("nope", 0, None, false).is_err());
        std::env::remove_var("GPT4V_API_KEY");
        let err = cfg.client("gpt4v", 0, None, false).err().unwrap().to_string();
        assert!(err.contains("GPT4V_API_KEY"), "{err}");
        assert!(cfg.client("gpt4v", 0, None, true).is_ok());
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.toml");
        std::fs::write(&p, "paralelism = 3\n").unwrap();
        assert!(RunConfig::load(Some(&p)).is_err());
    }

    #[test]
    fn key_env_names() {
        assert_eq!(default_key_env("gpt-4v"), "GPT_4V_API_KEY");
        assert_eq!(default_key_env("openai"), "OPENAI_API_KEY");
    }
}
