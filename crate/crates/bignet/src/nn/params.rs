//! Named parameter tensors: seeded initialization, gradient collection, and
//! a small archive format for checkpoints.

use std::io::{Read as _, Write as _};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use indexmap::IndexMap;
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{BignetError, Result};
use crate::nn::tape::{Gradients, Tape, Var};

pub const PARAMS_VERSION: u32 = 1;

/// All learnable tensors of a model, keyed by hierarchical name. Insertion
/// order is preserved so serialization and optimizer traversal are stable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: IndexMap<String, Array2<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: &str, value: Array2<f64>) {
        assert!(
            self.params.insert(name.to_string(), value).is_none(),
            "duplicate parameter {name}"
        );
    }

    pub fn get(&self, name: &str) -> &Array2<f64> {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Array2<f64> {
        self.params
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Array2<f64>)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Array2<f64>)> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> Vec<String> {
        self.params.keys().cloned().collect()
    }

    /// Glorot/Xavier uniform init: U(-b, b) with b = sqrt(6 / (fan_in + fan_out)).
    pub fn init_xavier(&mut self, name: &str, rows: usize, cols: usize, rng: &mut ChaCha8Rng) {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let value = Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound));
        self.insert(name, value);
    }

    pub fn init_zeros(&mut self, name: &str, rows: usize, cols: usize) {
        self.insert(name, Array2::zeros((rows, cols)));
    }

    pub fn init_const(&mut self, name: &str, rows: usize, cols: usize, v: f64) {
        self.insert(name, Array2::from_elem((rows, cols), v));
    }

    pub fn total_values(&self) -> usize {
        self.params.values().map(|a| a.len()).sum()
    }

    /// Archive bytes: one JSON header line, then f64 little-endian payload.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut payload = Vec::with_capacity(self.total_values() * 8);
        let mut entries = Vec::with_capacity(self.params.len());
        for (name, value) in &self.params {
            entries.push(ArchiveEntry {
                name: name.clone(),
                rows: value.nrows(),
                cols: value.ncols(),
            });
            for &v in value.iter() {
                payload.write_f64::<LittleEndian>(v)?;
            }
        }
        let header = ArchiveHeader {
            version: PARAMS_VERSION,
            entries,
            payload_sha256: hex_digest(&payload),
        };
        let mut out = serde_json::to_vec(&header)?;
        out.push(b'\n');
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read(path)?;
        Self::from_bytes(&raw)
    }

    pub fn from_bytes(raw: &[u8]) -> Result<Self> {
        let newline = raw
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| BignetError::Format("parameter archive missing header line".into()))?;
        let header: ArchiveHeader = serde_json::from_slice(&raw[..newline])?;
        if header.version != PARAMS_VERSION {
            return Err(BignetError::Format(format!(
                "unsupported parameter archive version {}",
                header.version
            )));
        }
        let payload = &raw[newline + 1..];
        if hex_digest(payload) != header.payload_sha256 {
            return Err(BignetError::Format(
                "parameter archive checksum mismatch".into(),
            ));
        }
        let mut cursor = std::io::Cursor::new(payload);
        let mut store = ParamStore::new();
        for e in header.entries {
            let mut data = vec![0.0; e.rows * e.cols];
            for v in data.iter_mut() {
                *v = cursor.read_f64::<LittleEndian>()?;
            }
            let arr = Array2::from_shape_vec((e.rows, e.cols), data)
                .map_err(|err| BignetError::Format(format!("bad archive shape: {err}")))?;
            store.insert(&e.name, arr);
        }
        let mut rest = Vec::new();
        cursor.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(BignetError::Format(
                "parameter archive has trailing payload bytes".into(),
            ));
        }
        Ok(store)
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct ArchiveHeader {
    version: u32,
    entries: Vec<ArchiveEntry>,
    payload_sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArchiveEntry {
    name: String,
    rows: usize,
    cols: usize,
}

/// Tracks which tape variable each parameter was bound to in one forward
/// pass, so gradients can be read back by name after `backward`.
#[derive(Debug, Default)]
pub struct Binder {
    vars: IndexMap<String, Var>,
}

impl Binder {
    pub fn new() -> Self {
        Binder::default()
    }

    /// Bind a parameter as a tape leaf (once per pass; later calls reuse it).
    pub fn bind(&mut self, tape: &mut Tape, store: &ParamStore, name: &str) -> Var {
        if let Some(&v) = self.vars.get(name) {
            return v;
        }
        let v = tape.leaf(store.get(name).clone());
        self.vars.insert(name.to_string(), v);
        v
    }

    /// Gradient of the loss with respect to every bound parameter.
    pub fn collect(&self, grads: &Gradients) -> IndexMap<String, Array2<f64>> {
        self.vars
            .iter()
            .map(|(name, &v)| (name.clone(), grads.of(v).clone()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn archive_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::new();
        store.init_xavier("enc.l0.w", 5, 3, &mut rng);
        store.init_const("enc.alpha", 1, 1, 0.25);
        store.init_zeros("head.b", 1, 4);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.params");
        store.save(&path).unwrap();
        let loaded = ParamStore::load(&path).unwrap();
        assert_eq!(store, loaded);
        assert_eq!(loaded.names(), vec!["enc.l0.w", "enc.alpha", "head.b"]);
    }

    #[test]
    fn archive_rejects_corruption() {
        let mut store = ParamStore::new();
        store.init_const("w", 2, 2, 1.5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.params");
        store.save(&path).unwrap();
        let mut raw = std::fs::read(&path).unwrap();
        let last = raw.len() - 1;
        raw[last] ^= 0xff;
        std::fs::write(&path, raw).unwrap();
        assert!(ParamStore::load(&path).is_err());
    }

    #[test]
    fn xavier_bound_matches_fan() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        store.init_xavier("w", 100, 50, &mut rng);
        let bound = (6.0 / 150.0_f64).sqrt();
        assert!(store.get("w").iter().all(|&v| v.abs() < bound));
        // Values should actually spread over the interval.
        assert!(store.get("w").iter().any(|&v| v > 0.8 * bound));
        assert!(store.get("w").iter().any(|&v| v < -0.8 * bound));
    }
}
