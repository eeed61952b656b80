//! Binary checkpoint layout (all integers and floats little-endian):
//!
//! ```text
//! "HULKGNN\0"  u32 version
//! u32 node_feature_dim  u32 edge_dim  u32 hidden_dim
//! u32 gcn_layers  u32 out_dim × gcn_layers  u64 seed
//! u32 vocab_len  (u32 byte_len, utf-8 bytes) × vocab_len
//! f64 max_compute  f64 max_memory_gb  f64 max_latency
//! f64 × param_count   (edge embed W, b, edge pool W, b, each gcn W, b)
//! ```

use super::{Dense, GnnModel};
use crate::error::{Error, Result};
use crate::graph::FeatureConfig;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HULKGNN\0";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_model(model: &GnnModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 8 * model.param_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for d in [
        model.node_feature_dim(),
        model.edge_dim(),
        model.hidden_dim(),
        model.gcn.len(),
    ] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for layer in &model.gcn {
        out.extend_from_slice(&(layer.out_dim() as u32).to_le_bytes());
    }
    out.extend_from_slice(&model.seed.to_le_bytes());
    out.extend_from_slice(&(model.features.vocab.len() as u32).to_le_bytes());
    for region in &model.features.vocab {
        out.extend_from_slice(&(region.len() as u32).to_le_bytes());
        out.extend_from_slice(region.as_bytes());
    }
    for v in [
        model.features.max_compute,
        model.features.max_memory_gb,
        model.features.max_latency,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for slice in model.param_slices() {
        for w in slice {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated payload".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn dim(&mut self) -> Result<usize> {
        let d = self.u32()? as usize;
        if d == 0 || d > 1 << 20 {
            return Err(Error::Checkpoint(format!("implausible dimension {d}")));
        }
        Ok(d)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn load_model(bytes: &[u8]) -> Result<GnnModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8).map_err(|_| Error::Checkpoint("missing header".into()))? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let f = r.dim()?;
    let edge_dim = r.dim()?;
    let hidden = r.dim()?;
    let layers = r.dim()?;
    if layers > 64 {
        return Err(Error::Checkpoint(format!("implausible layer count {layers}")));
    }
    let outs = (0..layers).map(|_| r.dim()).collect::<Result<Vec<_>>>()?;
    let seed = r.u64()?;
    let vocab_len = r.u32()? as usize;
    let mut vocab = Vec::new();
    for _ in 0..vocab_len {
        let len = r.u32()? as usize;
        let s = std::str::from_utf8(r.take(len)?).map_err(|_| Error::Checkpoint("vocab is not utf-8".into()))?;
        vocab.push(s.to_string());
    }
    let features = FeatureConfig {
        vocab,
        max_compute: r.f64()?,
        max_memory_gb: r.f64()?,
        max_latency: r.f64()?,
    };
    if features.dim() != f {
        return Err(Error::Checkpoint(format!(
            "feature width {f} does not match vocabulary of {}",
            vocab_len
        )));
    }

    let mut model = GnnModel {
        features,
        seed,
        edge_embed: Dense::zeros(edge_dim, 1 + 2 * f),
        edge_pool: Dense::zeros(hidden, 2 * f + edge_dim),
        gcn: Vec::with_capacity(layers),
    };
    let mut width = hidden;
    for out in outs {
        model.gcn.push(Dense::zeros(out, width));
        width = out;
    }
    let total = model.param_count();
    let payload = r.take(8 * total)?;
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    for slice in model.param_slices_mut() {
        for w in slice.iter_mut() {
            *w = values.next().expect("sized above");
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(model)
}
