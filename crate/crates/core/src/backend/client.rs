use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    cache_key, run_bounded, AttemptLog, Backend, BackendError, BackendId, CachedResponse, ChatRequest,
    CompletionResult, GenParams, ResponseCache, RetryPolicy, Usage,
};
use crate::datastore::{ImageBytes, ImageRef};
use crate::prompt_kit::PromptBundle;

/// How the client waits between retries. Tests swap in a recorder.
pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

/// Turns [`ImageRef`]s into bytes: local paths (optionally relative to a
/// base directory), inline payloads, and remote URLs.
#[derive(Clone, Default)]
pub struct ImageResolver {
    pub base_dir: Option<PathBuf>,
    http: Option<reqwest::blocking::Client>,
}

impl ImageResolver {
    pub fn new(base_dir: Option<PathBuf>) -> Self {
        ImageResolver { base_dir, http: None }
    }

    pub fn resolve(&self, image: &ImageRef) -> Result<ImageBytes, String> {
        let image = match &self.base_dir {
            Some(base) => image.rebased(base),
            None => image.clone(),
        };
        match &image {
            ImageRef::Url(url) => self.fetch(url),
            local => local.load_local(),
        }
    }

    fn fetch(&self, url: &str) -> Result<ImageBytes, String> {
        let client = match &self.http {
            Some(c) => c.clone(),
            None => reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(60))
                .build()
                .map_err(|e| e.to_string())?,
        };
        let resp = client
            .get(url)
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| format!("fetching {url}: {e}"))?;
        let media_type = resp
            .headers()
            .get(reqwest::header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .map(|v| v.split(';').next().unwrap_or("").trim().to_string())
            .unwrap_or_default();
        let bytes = resp.bytes().map_err(|e| format!("fetching {url}: {e}"))?.to_vec();
        ImageRef::Inline {
            media_type,
            data: bytes,
        }
        .load_local()
        .map_err(|e| format!("{url}: {e}"))
    }
}

/// A backend plus caching, retries and image resolution.
pub struct Client {
    id: BackendId,
    backend: Arc<dyn Backend>,
    cache: Option<Arc<ResponseCache>>,
    retry: RetryPolicy,
    rng: Mutex<ChaCha8Rng>,
    sleeper: Sleeper,
    images: ImageResolver,
    usage: Mutex<Usage>,
    wire_calls: std::sync::atomic::AtomicU64,
}

impl Client {
    pub fn new(id: BackendId, backend: Arc<dyn Backend>) -> Self {
        Client {
            id,
            backend,
            cache: None,
            retry: RetryPolicy::default(),
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(0)),
            sleeper: Arc::new(std::thread::sleep),
            images: ImageResolver::default(),
            usage: Mutex::new(Usage::default()),
            wire_calls: Default::default(),
        }
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Seeds the jitter generator.
    pub fn with_seed(self, seed: u64) -> Self {
        *self.rng.lock().unwrap() = ChaCha8Rng::seed_from_u64(seed);
        self
    }

    pub fn with_sleeper(mut self, sleeper: Sleeper) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn with_images(mut self, images: ImageResolver) -> Self {
        self.images = images;
        self
    }

    pub fn id(&self) -> &BackendId {
        &self.id
    }

    /// Token usage summed over every network call made so far.
    pub fn usage(&self) -> Usage {
        *self.usage.lock().unwrap()
    }

    /// Number of wire attempts made so far.
    pub fn wire_calls(&self) -> u64 {
        self.wire_calls.load(std::sync::atomic::Ordering::SeqCst)
    }

    pub fn build_request(&self, bundle: &PromptBundle, params: &GenParams) -> Result<ChatRequest, BackendError> {
        params.validate().map_err(BackendError::Params)?;
        let images = bundle
            .images
            .iter()
            .map(|i| self.images.resolve(i))
            .collect::<Result<Vec<_>, _>>()
            .map_err(BackendError::Image)?;
        Ok(ChatRequest {
            model: self.id.model.clone(),
            system_text: bundle.system_text.clone(),
            user_text: bundle.user_text.clone(),
            images,
            params: *params,
        })
    }

    pub fn cache_key(&self, bundle: &PromptBundle, params: &GenParams) -> Result<String, BackendError> {
        Ok(cache_key(&self.id.endpoint, &self.build_request(bundle, params)?))
    }

    /// One completion. Cache lookups happen only for reproducible calls
    /// (temperature 0 or an explicit seed).
    pub fn complete(&self, bundle: &PromptBundle, params: &GenParams) -> Result<CompletionResult, BackendError> {
        self.complete_inner(bundle, params, false)
    }

    /// Like [`Client::complete`] but never reads the cache; used for
    /// re-generation after an unparseable output.
    pub fn complete_fresh(&self, bundle: &PromptBundle, params: &GenParams) -> Result<CompletionResult, BackendError> {
        self.complete_inner(bundle, params, true)
    }

    fn complete_inner(
        &self,
        bundle: &PromptBundle,
        params: &GenParams,
        fresh: bool,
    ) -> Result<CompletionResult, BackendError> {
        let start = Instant::now();
        let request = self.build_request(bundle, params)?;
        let key = cache_key(&self.id.endpoint, &request);

        if let Some(cache) = &self.cache {
            if !fresh && params.is_cacheable() {
                if let Some(hit) = cache.get(&key) {
                    return Ok(CompletionResult {
                        text: hit.text,
                        usage: hit.usage,
                        latency: start.elapsed(),
                        cache_hit: true,
                        attempts: 0,
                    });
                }
            }
        }

        let mut log: Vec<AttemptLog> = Vec::new();
        let max = self.retry.max_attempts.max(1);
        for attempt in 0..max {
            self.wire_calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            match self.backend.send(&request) {
                Ok(raw) => {
                    self.usage.lock().unwrap().add(raw.usage);
                    if let Some(cache) = &self.cache {
                        let entry = CachedResponse {
                            key: key.clone(),
                            model: self.id.model.clone(),
                            text: raw.text.clone(),
                            usage: raw.usage,
                        };
                        if let Err(e) = cache.put(entry) {
                            log::warn!("cache write for {key} failed: {e}");
                        }
                    }
                    return Ok(CompletionResult {
                        text: raw.text,
                        usage: raw.usage,
                        latency: start.elapsed(),
                        cache_hit: false,
                        attempts: attempt + 1,
                    });
                }
                Err(err) if !err.transient => {
                    return Err(match err.status {
                        Some(status) => BackendError::Rejected {
                            status,
                            body: err.message,
                        },
                        None => BackendError::Failed(err.message),
                    });
                }
                Err(err) => {
                    let wait = if attempt + 1 < max {
                        self.retry.delay(attempt, &mut *self.rng.lock().unwrap())
                    } else {
                        Duration::ZERO
                    };
                    log::debug!(
                        "{}: attempt {} failed ({}), waiting {:?}",
                        self.id.name,
                        attempt + 1,
                        err.message,
                        wait
                    );
                    log.push(AttemptLog {
                        attempt: attempt + 1,
                        status: err.status,
                        message: err.message,
                        waited_ms: wait.as_millis() as u64,
                    });
                    if !wait.is_zero() {
                        (self.sleeper)(wait);
                    }
                }
            }
        }
        Err(BackendError::Exhausted { attempts: log })
    }

    /// Runs independent jobs with bounded parallelism; slot `i` of the output
    /// belongs to job `i`, and one failure never affects another slot.
    pub fn complete_batch(
        &self,
        jobs: Vec<(PromptBundle, GenParams)>,
        parallelism: usize,
    ) -> Vec<Result<CompletionResult, BackendError>> {
        run_bounded(
            jobs,
            parallelism,
            |_, (bundle, params)| self.complete(&bundle, &params),
            |_, _| true,
        )
        .into_iter()
        .map(|r| r.expect("batch runs every job"))
        .collect()
    }
}
