//! Named parameter collections and their on-disk checkpoint format.
//!
//! A `ParamSet` keeps tensors in insertion order (so optimizer sweeps and
//! serialization are deterministic) and distinguishes trainable weights
//! from buffers such as running normalization statistics.
//!
//! Checkpoint layout: the magic string "SPFORM01", a little-endian u64
//! manifest length, a UTF-8 JSON manifest listing name/shape/offset per
//! entry, then the raw little-endian f64 payloads. Round-trips are
//! bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::tape::{Tape, Var};
use crate::numerics::tensor::Tensor;

const MAGIC: &[u8; 8] = b"SPFORM01";

#[derive(Clone, Debug)]
pub struct ParamEntry {
    pub tensor: Tensor,
    pub trainable: bool,
}

#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    entries: IndexMap<String, ParamEntry>,
}

impl ParamSet {
    pub fn new() -> ParamSet {
        ParamSet::default()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) {
        self.entries.insert(
            name.to_string(),
            ParamEntry {
                tensor,
                trainable: true,
            },
        );
    }

    /// A non-trainable tensor carried alongside the weights, e.g. running
    /// statistics. Saved and loaded like any other entry but skipped by
    /// the optimizer.
    pub fn insert_buffer(&mut self, name: &str, tensor: Tensor) {
        self.entries.insert(
            name.to_string(),
            ParamEntry {
                tensor,
                trainable: false,
            },
        );
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .map(|e| &e.tensor)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name:?}")))
    }

    pub fn tensor_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.entries
            .get_mut(name)
            .map(|e| &mut e.tensor)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name:?}")))
    }

    pub fn set(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        *self.tensor_mut(name)? = tensor;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn trainable_names(&self) -> Vec<String> {
        self.entries
            .iter()
            .filter(|(_, e)| e.trainable)
            .map(|(k, _)| k.clone())
            .collect()
    }

    /// Total number of scalar values across trainable entries.
    pub fn num_trainable_scalars(&self) -> usize {
        self.entries
            .values()
            .filter(|e| e.trainable)
            .map(|e| e.tensor.len())
            .sum()
    }

    /// Register every entry on a tape: trainable entries as gradient-tracked
    /// params, buffers as plain leaves.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        let mut vars = IndexMap::new();
        for (name, entry) in &self.entries {
            let var = if entry.trainable {
                tape.param(entry.tensor.clone())
            } else {
                tape.leaf(entry.tensor.clone())
            };
            vars.insert(name.clone(), var);
        }
        Bound { vars }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut entries = Vec::new();
        let mut offset = 0u64;
        for (name, entry) in &self.entries {
            entries.push(ManifestEntry {
                name: name.clone(),
                shape: entry.tensor.shape().to_vec(),
                offset,
                trainable: entry.trainable,
            });
            offset += (entry.tensor.len() * 8) as u64;
        }
        let manifest = serde_json::to_vec(&Manifest { entries })?;
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&(manifest.len() as u64).to_le_bytes())?;
        w.write_all(&manifest)?;
        for entry in self.entries.values() {
            for v in entry.tensor.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ParamSet> {
        let format_err = |offset: u64, message: String| Error::Format {
            path: path.display().to_string(),
            offset,
            message,
        };
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| format_err(0, "file shorter than magic string".into()))?;
        if &magic != MAGIC {
            return Err(format_err(0, format!("bad magic {magic:?}")));
        }
        let mut len_bytes = [0u8; 8];
        r.read_exact(&mut len_bytes)
            .map_err(|_| format_err(8, "truncated manifest length".into()))?;
        let manifest_len = u64::from_le_bytes(len_bytes) as usize;
        let mut manifest_bytes = vec![0u8; manifest_len];
        r.read_exact(&mut manifest_bytes)
            .map_err(|_| format_err(16, "truncated manifest".into()))?;
        let manifest: Manifest = serde_json::from_slice(&manifest_bytes)?;

        let payload_start = 16 + manifest_len as u64;
        let mut set = ParamSet::new();
        let mut expected_offset = 0u64;
        for entry in manifest.entries {
            if entry.offset != expected_offset {
                return Err(format_err(
                    payload_start + entry.offset,
                    format!("entry {:?} offset out of order", entry.name),
                ));
            }
            let count: usize = entry.shape.iter().product();
            let mut data = vec![0.0f64; count];
            let mut buf = [0u8; 8];
            for (i, d) in data.iter_mut().enumerate() {
                r.read_exact(&mut buf).map_err(|_| {
                    format_err(
                        payload_start + entry.offset + (i * 8) as u64,
                        format!("truncated payload for {:?}", entry.name),
                    )
                })?;
                *d = f64::from_le_bytes(buf);
            }
            expected_offset += (count * 8) as u64;
            let tensor = Tensor::from_vec(&entry.shape, data)?;
            if entry.trainable {
                set.insert(&entry.name, tensor);
            } else {
                set.insert_buffer(&entry.name, tensor);
            }
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(format_err(
                payload_start + expected_offset,
                "trailing bytes after payload".into(),
            ));
        }
        Ok(set)
    }
}

/// Tape vars for one forward pass of a `ParamSet`.
pub struct Bound {
    vars: IndexMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name:?} not bound"))
    }

    /// Collect gradients for every bound var that received one, keyed by
    /// parameter name, in binding order.
    pub fn grads(&self, tape: &Tape) -> IndexMap<String, Tensor> {
        let mut out = IndexMap::new();
        for (name, &var) in &self.vars {
            if let Some(g) = tape.grad(var) {
                out.insert(name.clone(), g.clone());
            }
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    entries: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    trainable: bool,
}

/// Elementwise accumulate `delta` grads into `acc` (used for batch averaging).
pub fn accumulate_grads(
    acc: &mut IndexMap<String, Tensor>,
    delta: &IndexMap<String, Tensor>,
) -> Result<()> {
    for (name, g) in delta {
        match acc.get_mut(name) {
            Some(existing) => *existing = existing.add(g)?,
            None => {
                acc.insert(name.clone(), g.clone());
            }
        }
    }
    Ok(())
}

pub fn scale_grads(grads: &mut IndexMap<String, Tensor>, k: f64) {
    for g in grads.values_mut() {
        *g = g.scale(k);
    }
}
