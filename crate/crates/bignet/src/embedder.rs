//! Text embedding contract for family / family-symbol names, with a
//! deterministic hashing default and a file-backed lookup for externally
//! precomputed tables.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{BignetError, Result};

pub const EMBED_DIM: usize = 64;

/// Deterministic mapping from a name string to a 64-d unit vector (or the
/// zero vector for the empty string).
pub trait TextEmbedder {
    fn embed(&self, text: &str) -> [f64; EMBED_DIM];

    fn dim(&self) -> usize {
        EMBED_DIM
    }
}

/// Character-trigram signed feature hashing into 64 buckets, L2-normalized.
#[derive(Debug, Default, Clone)]
pub struct HashEmbedder;

// FNV-1a, fixed here so vectors are stable across platforms and releases.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl TextEmbedder for HashEmbedder {
    fn embed(&self, text: &str) -> [f64; EMBED_DIM] {
        let mut v = [0.0; EMBED_DIM];
        if text.is_empty() {
            return v;
        }
        let chars: Vec<char> = text.chars().collect();
        let mut add_gram = |gram: &[char]| {
            let s: String = gram.iter().collect();
            let h = fnv1a(s.as_bytes());
            let bucket = (h % EMBED_DIM as u64) as usize;
            let sign = if (h >> 63) & 1 == 1 { -1.0 } else { 1.0 };
            v[bucket] += sign;
        };
        if chars.len() < 3 {
            add_gram(&chars);
        } else {
            for w in chars.windows(3) {
                add_gram(w);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in v.iter_mut() {
                *x /= norm;
            }
        }
        v
    }
}

/// Lookup embedder backed by a JSON map `string -> 64 floats`, for users who
/// run a real text model externally. Unknown strings fall back to hashing.
#[derive(Debug, Clone)]
pub struct TableEmbedder {
    table: HashMap<String, [f64; EMBED_DIM]>,
    fallback: HashEmbedder,
}

impl TableEmbedder {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        let parsed: HashMap<String, Vec<f64>> = serde_json::from_str(&raw)?;
        let mut table = HashMap::with_capacity(parsed.len());
        for (k, vals) in parsed {
            if vals.len() != EMBED_DIM {
                return Err(BignetError::Format(format!(
                    "embedding table entry {k:?} has {} values, expected {EMBED_DIM}",
                    vals.len()
                )));
            }
            let mut arr = [0.0; EMBED_DIM];
            arr.copy_from_slice(&vals);
            // Normalize so the contract holds regardless of the table source.
            let norm = arr.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for x in arr.iter_mut() {
                    *x /= norm;
                }
            }
            table.insert(k, arr);
        }
        Ok(TableEmbedder { table, fallback: HashEmbedder })
    }
}

impl TextEmbedder for TableEmbedder {
    fn embed(&self, text: &str) -> [f64; EMBED_DIM] {
        if text.is_empty() {
            return [0.0; EMBED_DIM];
        }
        match self.table.get(text) {
            Some(v) => *v,
            None => self.fallback.embed(text),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn empty_string_is_zero_vector() {
        let v = HashEmbedder.embed("");
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn embedding_is_deterministic() {
        let a = HashEmbedder.embed("Fixed Window");
        let b = HashEmbedder.embed("Fixed Window");
        assert_eq!(a, b);
    }

    #[test]
    fn nonempty_strings_have_unit_norm() {
        for s in ["a", "ab", "Fixed Window", "Exhaust Duct_Galvanized Steel", "墙体_200"] {
            let v = HashEmbedder.embed(s);
            // Recompute the norm independently of the normalization path.
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn distinct_strings_usually_differ() {
        assert_ne!(HashEmbedder.embed("Door"), HashEmbedder.embed("Basic Wall"));
    }

    #[test]
    fn table_embedder_lookup_and_fallback() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.json");
        let mut vec = vec![0.0; EMBED_DIM];
        vec[0] = 2.0;
        let table = serde_json::json!({ "Door": vec });
        std::fs::write(&path, table.to_string()).unwrap();
        let e = TableEmbedder::load(&path).unwrap();
        let v = e.embed("Door");
        assert_abs_diff_eq!(v[0], 1.0, epsilon = 1e-12);
        // Unknown string falls back to the hashing embedder.
        assert_eq!(e.embed("Window"), HashEmbedder.embed("Window"));
    }
}
