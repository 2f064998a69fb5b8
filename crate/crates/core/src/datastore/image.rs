use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

pub const ALLOWED_MEDIA_TYPES: [&str; 4] = ["image/png", "image/jpeg", "image/webp", "image/gif"];

/// Where an image lives. Datasets store references; bytes are only
/// materialized when a request is built.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageRef {
    Path(PathBuf),
    Url(String),
    Inline {
        media_type: String,
        #[serde(with = "b64")]
        data: Vec<u8>,
    },
}

/// Raw image payload ready to be put on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBytes {
    pub media_type: String,
    pub bytes: Vec<u8>,
}

impl ImageBytes {
    pub fn data_url(&self) -> String {
        format!("data:{};base64,{}", self.media_type, STANDARD.encode(&self.bytes))
    }
}

pub fn media_type_for_path(path: &Path) -> Option<&'static str> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    match ext.as_str() {
        "png" => Some("image/png"),
        "jpg" | "jpeg" => Some("image/jpeg"),
        "webp" => Some("image/webp"),
        "gif" => Some("image/gif"),
        _ => None,
    }
}

impl ImageRef {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            ImageRef::Path(p) if p.as_os_str().is_empty() => Err("image path is empty".into()),
            ImageRef::Path(p) => media_type_for_path(p)
                .map(|_| ())
                .ok_or_else(|| format!("image {}: unsupported extension", p.display())),
            ImageRef::Url(u) if u.trim().is_empty() => Err("image url is empty".into()),
            ImageRef::Url(_) => Ok(()),
            ImageRef::Inline { media_type, data } => {
                if !ALLOWED_MEDIA_TYPES.contains(&media_type.as_str()) {
                    Err(format!("inline image media type '{media_type}' not allowed"))
                } else if data.is_empty() {
                    Err("inline image payload is empty".into())
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Short human-readable label used in logs and stable ids.
    pub fn label(&self) -> String {
        match self {
            ImageRef::Path(p) => p.display().to_string(),
            ImageRef::Url(u) => u.clone(),
            ImageRef::Inline { media_type, data } => format!("inline:{media_type}:{}B", data.len()),
        }
    }

    /// Rebases a relative path onto `base`; other variants are unchanged.
    pub fn rebased(&self, base: &Path) -> ImageRef {
        match self {
            ImageRef::Path(p) if p.is_relative() => ImageRef::Path(base.join(p)),
            other => other.clone(),
        }
    }

    /// Loads path and inline images. Remote URLs need a fetcher and are
    /// handled by the backend layer.
    pub fn load_local(&self) -> Result<ImageBytes, String> {
        self.validate()?;
        let image = match self {
            ImageRef::Path(p) => {
                let bytes = std::fs::read(p).map_err(|e| format!("image {}: {e}", p.display()))?;
                let media_type = media_type_for_path(p).unwrap_or("image/png").to_string();
                ImageBytes { media_type, bytes }
            }
            ImageRef::Inline { media_type, data } => ImageBytes {
                media_type: media_type.clone(),
                bytes: data.clone(),
            },
            ImageRef::Url(u) => return Err(format!("image {u} must be fetched remotely")),
        };
        if image.bytes.is_empty() {
            return Err(format!("image {} resolved to zero bytes", self.label()));
        }
        Ok(image)
    }
}

mod b64 {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(data: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(data))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        STANDARD.decode(text.as_bytes()).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_shapes() {
        let p = ImageRef::Path("img/a.png".into());
        assert_eq!(serde_json::to_string(&p).unwrap(), r#"{"path":"img/a.png"}"#);
        let i = ImageRef::Inline {
            media_type: "image/png".into(),
            data: vec![1, 2, 3],
        };
        let s = serde_json::to_string(&i).unwrap();
        assert_eq!(s, r#"{"inline":{"media_type":"image/png","data":"AQID"}}"#);
        assert_eq!(serde_json::from_str::<ImageRef>(&s).unwrap(), i);
    }

    #[test]
    fn inline_media_type_allowlist() {
        let bad = ImageRef::Inline {
            media_type: "image/tiff".into(),
            data: vec![1],
        };
        assert!(bad.validate().is_err());
        let empty = ImageRef::Inline {
            media_type: "image/gif".into(),
            data: vec![],
        };
        assert!(empty.load_local().is_err());
    }

    #[test]
    fn loads_file_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jpg");
        std::fs::write(&path, b"\xff\xd8jpeg").unwrap();
        let img = ImageRef::Path(path).load_local().unwrap();
        assert_eq!(img.media_type, "image/jpeg");
        assert!(img.data_url().starts_with("data:image/jpeg;base64,"));
    }

    #[test]
    fn rebase_only_touches_relative_paths() {
        let base = Path::new("/data");
        assert_eq!(
            ImageRef::Path("a.png".into()).rebased(base),
            ImageRef::Path("/data/a.png".into())
        );
        assert_eq!(
            ImageRef::Path("/abs/a.png".into()).rebased(base),
            ImageRef::Path("/abs/a.png".into())
        );
    }
}
