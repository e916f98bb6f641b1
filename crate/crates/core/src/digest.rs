//! Content digests and content-addressed image references.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Hex-encoded SHA-256 of `bytes`.
pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

/// Stable digest of a serializable value.
///
/// `serde_json` maps are ordered by key, so the encoding is canonical for any
/// value built from structs and `serde_json::Value`.
pub fn digest_json<T: Serialize + ?Sized>(value: &T) -> String {
    let encoded = serde_json::to_vec(value).expect("value serializes to JSON");
    sha256_hex(encoded)
}

/// Content-addressed reference to binary image data (`sha256:<hex>`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImageRef(String);

impl ImageRef {
    pub fn for_bytes(bytes: impl AsRef<[u8]>) -> Self {
        Self(format!("sha256:{}", sha256_hex(bytes)))
    }

    /// Reference used when an illustration could not be produced.
    pub fn placeholder(section: &str) -> Self {
        Self(format!("placeholder:{section}"))
    }

    pub fn parse(raw: &str) -> Option<Self> {
        let (scheme, rest) = raw.split_once(':')?;
        match scheme {
            "sha256" if rest.len() == 64 && rest.bytes().all(|b| b.is_ascii_hexdigit()) => {
                Some(Self(raw.to_ascii_lowercase()))
            }
            "placeholder" if !rest.is_empty() => Some(Self(raw.to_string())),
            _ => None,
        }
    }

    pub fn is_placeholder(&self) -> bool {
        self.0.starts_with("placeholder:")
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ImageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_ref_is_content_addressed() {
        let a = ImageRef::for_bytes(b"png");
        assert_eq!(a, ImageRef::for_bytes(b"png"));
        assert_ne!(a, ImageRef::for_bytes(b"jpg"));
        assert_eq!(ImageRef::parse(a.as_str()), Some(a));
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(ImageRef::parse("sha256:xyz").is_none());
        assert!(ImageRef::parse("nope").is_none());
        assert!(ImageRef::parse("placeholder:cover").unwrap().is_placeholder());
    }

    #[test]
    fn json_digest_ignores_insertion_order() {
        let a = serde_json::json!({"b": 1, "a": 2});
        let b = serde_json::json!({"a": 2, "b": 1});
        assert_eq!(digest_json(&a), digest_json(&b));
    }
}
