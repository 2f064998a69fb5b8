//! Content-addressed response cache.
//!
//! Layout on disk: `<dir>/<first two hex chars>/<key>.json`, each file a
//! [`CachedResponse`]. Writes go to a temporary file that is renamed into
//! place, so readers never observe partial entries.

use std::collections::HashMap;
use std::fs;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatRequest, Usage};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CachedResponse {
    pub key: String,
    pub model: String,
    pub text: String,
    pub usage: Usage,
}

/// Digest over the model, every prompt byte, every image byte and every
/// sampling parameter. Repeat indices are deliberately absent.
pub fn cache_key(endpoint: &str, request: &ChatRequest) -> String {
    fn field(h: &mut Sha256, bytes: &[u8]) {
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    let mut h = Sha256::new();
    field(&mut h, b"visjudge-cache-v1");
    field(&mut h, endpoint.as_bytes());
    field(&mut h, request.model.as_bytes());
    match &request.system_text {
        Some(s) => {
            field(&mut h, b"system");
            field(&mut h, s.as_bytes());
        }
        None => field(&mut h, b"no-system"),
    }
    field(&mut h, request.user_text.as_bytes());
    h.update((request.images.len() as u64).to_le_bytes());
    for img in &request.images {
        field(&mut h, img.media_type.as_bytes());
        field(&mut h, &img.bytes);
    }
    let p = &request.params;
    h.update(p.temperature.to_bits().to_le_bytes());
    h.update(p.top_p.to_bits().to_le_bytes());
    h.update(p.max_tokens.to_le_bytes());
    match p.seed {
        Some(s) => {
            h.update([1]);
            h.update(s.to_le_bytes());
        }
        None => h.update([0]),
    }
    hex::encode(h.finalize())
}

const STRIPES: usize = 16;

/// In-memory map in front of an optional directory.
#[derive(Debug)]
pub struct ResponseCache {
    dir: Option<PathBuf>,
    mem: RwLock<HashMap<String, CachedResponse>>,
    writers: [Mutex<()>; STRIPES],
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache {
            dir: None,
            mem: RwLock::new(HashMap::new()),
            writers: Default::default(),
        }
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ResponseCache {
            dir: Some(dir),
            ..ResponseCache::in_memory()
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn path_for(&self, key: &str) -> Option<PathBuf> {
        let dir = self.dir.as_ref()?;
        let shard = key.get(..2).unwrap_or("xx");
        Some(dir.join(shard).join(format!("{key}.json")))
    }

    pub fn get(&self, key: &str) -> Option<CachedResponse> {
        if let Some(hit) = self.mem.read().unwrap().get(key) {
            return Some(hit.clone());
        }
        let path = self.path_for(key)?;
        let text = fs::read_to_string(path).ok()?;
        let entry: CachedResponse = serde_json::from_str(&text).ok()?;
        if entry.key != key {
            return None;
        }
        self.mem.write().unwrap().insert(key.to_string(), entry.clone());
        Some(entry)
    }

    pub fn put(&self, entry: CachedResponse) -> std::io::Result<()> {
        let stripe = {
            let mut h = std::collections::hash_map::DefaultHasher::new();
            entry.key.hash(&mut h);
            (h.finish() as usize) % STRIPES
        };
        let _guard = self.writers[stripe].lock().unwrap();
        if let Some(path) = self.path_for(&entry.key) {
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            let tmp = path.with_extension(format!("tmp{}", std::process::id()));
            fs::write(&tmp, serde_json::to_vec(&entry)?)?;
            fs::rename(&tmp, &path)?;
        }
        self.mem.write().unwrap().insert(entry.key.clone(), entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.mem.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::GenParams;
    use crate::datastore::ImageBytes;

    fn request() -> ChatRequest {
        ChatRequest {
            model: "m".into(),
            system_text: None,
            user_text: "describe".into(),
            images: vec![ImageBytes {
                media_type: "image/png".into(),
                bytes: vec![1, 2, 3, 4],
            }],
            params: GenParams::default(),
        }
    }

    #[test]
    fn key_is_stable_and_sensitive() {
        let base = cache_key("e", &request());
        assert_eq!(base, cache_key("e", &request()));
        assert_eq!(base.len(), 64);

        let mut r = request();
        r.images[0].bytes[2] ^= 1;
        assert_ne!(base, cache_key("e", &r));
        let mut r = request();
        r.params.top_p = 0.95;
        assert_ne!(base, cache_key("e", &r));
        let mut r = request();
        r.params.seed = Some(0);
        assert_ne!(base, cache_key("e", &r));
        let mut r = request();
        r.model = "m2".into();
        assert_ne!(base, cache_key("e", &r));
        let mut r = request();
        r.system_text = Some(String::new());
        assert_ne!(base, cache_key("e", &r));
        let mut r = request();
        r.user_text.push(' ');
        assert_ne!(base, cache_key("e", &r));
    }

    #[test]
    fn disk_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let entry = CachedResponse {
            key: "ab12".into(),
            model: "m".into(),
            text: "héllo\n".into(),
            usage: Usage::default(),
        };
        ResponseCache::on_disk(dir.path()).unwrap().put(entry.clone()).unwrap();
        assert!(dir.path().join("ab").join("ab12.json").exists());
        let fresh = ResponseCache::on_disk(dir.path()).unwrap();
        assert_eq!(fresh.get("ab12"), Some(entry));
        assert_eq!(fresh.get("missing"), None);
    }
}
