//! Named parameter tensors, deterministic initialization, and the MOSW file
//! format.
//!
//! MOSW layout, all integers little-endian `u32`:
//!
//! ```text
//! "MOSW" | version | entry count
//! per entry: name length | name bytes (UTF-8) | rank | dims... | f32 payload (LE)
//! ```

use std::collections::btree_map::{self, BTreeMap};
use std::fs;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, Op};

pub const MAGIC: &[u8; 4] = b"MOSW";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct WeightEntry {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl WeightEntry {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if len != data.len() {
            return Err(Error::Weights(format!("dims {dims:?} need {len} values, got {}", data.len())));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }
}

/// Parameter tensors keyed by `"<node name>:<slot>"`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightStore {
    entries: BTreeMap<String, WeightEntry>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an entry; names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, entry: WeightEntry) -> Result<()> {
        match self.entries.entry(name.into()) {
            btree_map::Entry::Occupied(o) => Err(Error::Weights(format!("duplicate entry '{}'", o.key()))),
            btree_map::Entry::Vacant(v) => {
                v.insert(entry);
                Ok(())
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&WeightEntry> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut WeightEntry> {
        self.entries.get_mut(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &WeightEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut WeightEntry)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Checks that every parameter slot of `graph` has an entry of the right
    /// shape and that no entry is left over.
    pub fn validate_for(&self, graph: &Graph) -> Result<()> {
        let mut used = 0;
        for node in graph.nodes() {
            for (key, dims) in node.param_slots() {
                let entry = self
                    .entries
                    .get(&key)
                    .ok_or_else(|| Error::Weights(format!("missing weight entry '{key}' for node '{}'", node.name)))?;
                if entry.dims != dims {
                    return Err(Error::Weights(format!(
                        "weight entry '{key}' has dims {:?}, node '{}' needs {dims:?}",
                        entry.dims, node.name
                    )));
                }
                used += 1;
            }
        }
        if used != self.entries.len() {
            let orphan = self
                .entries
                .keys()
                .find(|k| {
                    let node = k.rsplit_once(':').map_or(k.as_str(), |(n, _)| n);
                    graph.find(node).is_none()
                })
                .cloned()
                .unwrap_or_default();
            return Err(Error::Weights(format!(
                "{} orphan weight entries (e.g. '{orphan}')",
                self.entries.len() - used
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, entry) in &self.entries {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(entry.dims.len() as u32).to_le_bytes());
            for &d in &entry.dims {
                buf.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &entry.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::format(0, format!("bad magic {magic:?}, expected \"MOSW\"")));
        }
        let version = r.u32("format version")?;
        if version != FORMAT_VERSION {
            return Err(Error::format(4, format!("unsupported format version {version}")));
        }
        let count = r.u32("entry count")?;
        let mut store = WeightStore::new();
        for _ in 0..count {
            let entry_start = r.pos;
            let name_len = r.u32("name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "name")?)
                .map_err(|_| Error::format(entry_start as u64 + 4, "entry name is not UTF-8"))?
                .to_string();
            let rank = r.u32("rank")? as usize;
            let mut dims = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                dims.push(r.u32("dimension")? as usize);
            }
            let len = dims
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| Error::format(r.pos as u64, format!("entry '{name}' is too large")))?;
            let payload = r.take(len, "payload")?;
            let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            if store.entries.contains_key(&name) {
                return Err(Error::Weights(format!("duplicate entry '{name}' at byte {entry_start}")));
            }
            store.entries.insert(name, WeightEntry { dims, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::format(r.pos as u64, "trailing bytes after last entry"));
        }
        Ok(store)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::format(
                self.pos as u64,
                format!("truncated: {what} needs {n} bytes, {} left", self.bytes.len() - self.pos),
            )
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn save_weights(store: &WeightStore, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, store.to_bytes())?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightStore> {
    WeightStore::from_bytes(&fs::read(path)?)
}

/// 64-bit FNV-1a hash, used to give every entry its own generator stream.
fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Generator for one weight entry.
///
/// ChaCha8 (rand_chacha 0.3) keyed with the seed's 8 little-endian bytes
/// followed by 24 zero bytes, on stream `fnv1a(entry name)`. Every entry
/// therefore has a stream of its own that does not depend on the other
/// entries in the store.
pub fn entry_rng(seed: u64, name: &str) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(fnv1a(name));
    rng
}

/// Uniform sample in `[0, 1)` from the top 24 bits of one `u32` draw.
pub fn unit_uniform(rng: &mut impl RngCore) -> f32 {
    (rng.next_u32() >> 8) as f32 * (1.0 / (1u32 << 24) as f32)
}

/// Seeds every parameter slot of `graph`.
///
/// Convolution kernels are drawn uniformly from `[-a, a)` with
/// `a = sqrt(3 / fan_in)`, which has zero mean and variance `1 / fan_in`;
/// `fan_in = kernel_h * kernel_w * in_c / groups`. Affine scales are 1 and
/// all biases are 0.
pub fn init_weights(graph: &Graph, seed: u64) -> WeightStore {
    let mut store = WeightStore::new();
    for node in graph.nodes() {
        let fan_in = match &node.op {
            Op::Conv { params, .. } | Op::DepthwiseConv { params } => {
                params.kernel_h * params.kernel_w * params.in_per_group()
            }
            _ => 0,
        };
        for (key, dims) in node.param_slots() {
            let len: usize = dims.iter().product();
            let data = if key.ends_with(":kernel") {
                let bound = (3.0 / fan_in as f64).sqrt() as f32;
                let mut rng = entry_rng(seed, &key);
                (0..len).map(|_| (2.0 * unit_uniform(&mut rng) - 1.0) * bound).collect()
            } else if key.ends_with(":scale") {
                vec![1.0; len]
            } else {
                vec![0.0; len]
            };
            store.insert(key, WeightEntry { dims, data }).expect("slot names are unique within a graph");
        }
    }
    store
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::ConvParams;

    fn small_graph() -> Graph {
        let mut g = Graph::new();
        let x = g.add_input("in", 3).unwrap();
        let c = g.add_node("conv", Op::Conv { params: ConvParams::standard(3, 1, 3, 8), bias: false }, &[x]).unwrap();
        let a = g.add_node("bn", Op::Affine { channels: 8 }, &[c]).unwrap();
        let d = g.add_node("head", Op::Conv { params: ConvParams::pointwise(8, 4), bias: true }, &[a]).unwrap();
        g.add_output(d).unwrap();
        g
    }

    #[test]
    fn init_is_deterministic_and_seed_dependent() {
        let g = small_graph();
        assert_eq!(init_weights(&g, 42), init_weights(&g, 42));
        assert_ne!(init_weights(&g, 1), init_weights(&g, 2));
        let w = init_weights(&g, 0);
        assert_eq!(w.len(), 5);
        assert!(w.get("bn:scale").unwrap().data().iter().all(|&v| v == 1.0));
        assert!(w.get("head:bias").unwrap().data().iter().all(|&v| v == 0.0));
        w.validate_for(&g).unwrap();
    }

    #[test]
    fn entry_streams_are_independent_of_store_contents() {
        let mut a = entry_rng(5, "x:kernel");
        let mut b = entry_rng(5, "x:kernel");
        let mut c = entry_rng(5, "y:kernel");
        let va: Vec<u32> = (0..4).map(|_| a.next_u32()).collect();
        let vb: Vec<u32> = (0..4).map(|_| b.next_u32()).collect();
        let vc: Vec<u32> = (0..4).map(|_| c.next_u32()).collect();
        assert_eq!(va, vb);
        assert_ne!(va, vc);
    }

    #[test]
    fn validation_reports_missing_mismatched_and_orphans() {
        let g = small_graph();
        let mut w = init_weights(&g, 0);
        w.entries.remove("conv:kernel");
        assert!(w.validate_for(&g).unwrap_err().to_string().contains("conv:kernel"));

        let mut w = init_weights(&g, 0);
        w.entries.insert("bn:scale".into(), WeightEntry::new(vec![4], vec![1.0; 4]).unwrap());
        assert!(w.validate_for(&g).is_err());

        let mut w = init_weights(&g, 0);
        w.insert("ghost:kernel", WeightEntry::new(vec![1], vec![0.0]).unwrap()).unwrap();
        assert!(w.validate_for(&g).unwrap_err().to_string().contains("orphan"));
    }

    #[test]
    fn bytes_round_trip() {
        let w = init_weights(&small_graph(), 9);
        assert_eq!(WeightStore::from_bytes(&w.to_bytes()).unwrap(), w);
    }

    #[test]
    fn bad_magic_and_version() {
        let mut b = init_weights(&small_graph(), 9).to_bytes();
        b[0] = b'X';
        assert!(matches!(WeightStore::from_bytes(&b), Err(Error::Format { offset: 0, .. })));
        let mut b = init_weights(&small_graph(), 9).to_bytes();
        b[4] = 7;
        assert!(matches!(WeightStore::from_bytes(&b), Err(Error::Format { offset: 4, .. })));
    }

    #[test]
    fn truncation_reports_offset() {
        let b = init_weights(&small_graph(), 9).to_bytes();
        for cut in [0, 3, 10, 13, b.len() / 2, b.len() - 1] {
            match WeightStore::from_bytes(&b[..cut]) {
                Err(Error::Format { offset, .. }) => assert!(offset as usize <= cut),
                other => panic!("cut at {cut}: expected format error, got {other:?}"),
            }
        }
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = WeightStore::new();
        s.insert("a", WeightEntry::new(vec![1], vec![1.0]).unwrap()).unwrap();
        assert!(s.insert("a", WeightEntry::new(vec![1], vec![2.0]).unwrap()).is_err());

        let mut b = s.to_bytes();
        let entry = b[12..].to_vec();
        b.extend_from_slice(&entry);
        b[8..12].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(WeightStore::from_bytes(&b), Err(Error::Weights(_))));
    }
}
