//! JSON checkpoints of a [`ParamStore`].
//!
//! Files are written to a sibling temp file and renamed into place, so a
//! reader never sees a half-written checkpoint.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::params::ParamStore;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorFile {
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    config_hash: String,
    params: BTreeMap<String, TensorFile>,
}

/// Parameters read back from disk together with the hash they were saved under.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config_hash: String,
    pub params: ParamStore,
}

/// Writes `bytes` to `path` via a temp file in the same directory.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let file_name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{file_name}.tmp{}", std::process::id()));
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn save_checkpoint(params: &ParamStore, config_hash: &str, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BTreeMap::new();
    for (name, m) in params.iter() {
        if !m.is_finite() {
            return Err(Error::NonFinite {
                context: format!("parameter `{name}`"),
            });
        }
        out.insert(
            name.to_string(),
            TensorFile {
                shape: [m.rows(), m.cols()],
                data: m.data().to_vec(),
            },
        );
    }
    let file = CheckpointFile {
        format_version: FORMAT_VERSION,
        config_hash: config_hash.to_string(),
        params: out,
    };
    write_atomic(path.as_ref(), &serde_json::to_vec(&file)?)
}

/// Reads a checkpoint. Tensors come back in name order.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let file: CheckpointFile = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {} is not supported (expected {FORMAT_VERSION})",
            file.format_version
        )));
    }
    let mut params = ParamStore::new();
    for (name, t) in file.params {
        let m = Matrix::from_vec(t.shape[0], t.shape[1], t.data)
            .map_err(|_| Error::Checkpoint(format!("tensor `{name}` data does not match its shape")))?;
        params.insert(name, m)?;
    }
    Ok(Checkpoint {
        config_hash: file.config_hash,
        params,
    })
}

/// Loads a checkpoint into an existing store. Shapes are checked tensor by
/// tensor before the hash, so a config change names the tensor it broke.
pub fn load_into(store: &mut ParamStore, path: impl AsRef<Path>, expected_hash: Option<&str>) -> Result<()> {
    let ckpt = load_checkpoint(path)?;
    let mut staged = store.clone();
    staged.copy_values_from(&ckpt.params)?;
    if let Some(h) = expected_hash {
        if h != ckpt.config_hash {
            return Err(Error::HashMismatch {
                checkpoint: ckpt.config_hash,
                config: h.to_string(),
            });
        }
    }
    *store = staged;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::Rng;
    use rand::SeedableRng;

    fn store(out: usize) -> ParamStore {
        let mut rng = Rng::seed_from_u64(3);
        let mut s = ParamStore::new();
        s.insert_glorot("layer.w", 5, 7, &mut rng).unwrap();
        s.insert_glorot("head.w", 7, out, &mut rng).unwrap();
        s
    }

    #[test]
    fn round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        let s = store(14);
        save_checkpoint(&s, "abc", &path).unwrap();
        let mut t = store(14);
        t.value_mut(t.id("layer.w").unwrap()).fill(0.0);
        load_into(&mut t, &path, Some("abc")).unwrap();
        for (name, m) in s.iter() {
            let other = t.value(t.id(name).unwrap());
            let bits = |m: &Matrix| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(m), bits(other));
        }
        assert_eq!(load_checkpoint(&path).unwrap().config_hash, "abc");
    }

    #[test]
    fn wrong_shape_names_tensor() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        save_checkpoint(&store(14), "abc", &path).unwrap();
        let mut t = store(12);
        let before = t.clone();
        let err = load_into(&mut t, &path, Some("def")).unwrap_err();
        assert!(err.to_string().contains("head.w"), "{err}");
        assert_eq!(t, before);
    }

    #[test]
    fn hash_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        save_checkpoint(&store(14), "abc", &path).unwrap();
        let mut t = store(14);
        assert!(matches!(load_into(&mut t, &path, Some("zzz")), Err(Error::HashMismatch { .. })));
    }

    #[test]
    fn truncated_and_versioned_files_fail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        save_checkpoint(&store(14), "abc", &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        let mut t = store(14);
        let before = t.clone();
        assert!(matches!(load_into(&mut t, &path, None), Err(Error::Checkpoint(_))));
        assert_eq!(t, before);

        let text = String::from_utf8(bytes).unwrap().replace("\"format_version\":1", "\"format_version\":2");
        std::fs::write(&path, text).unwrap();
        assert!(load_checkpoint(&path).unwrap_err().to_string().contains("version"));
    }
}
