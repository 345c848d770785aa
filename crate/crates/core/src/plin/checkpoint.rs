//! Single-blob checkpoint codec for [`SmallCnn`].
//!
//! Layout (little-endian): magic, format version, backbone descriptor
//! (kind, input size, pretrained flag, description), conv widths, optimizer
//! settings, init seed, step counter, source checkpoint id, parameters as
//! `f32`, and a trailing CRC-32 of everything before it.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{Backbone, BackboneKind, OptimizerConfig, OptimizerKind, SmallCnn, SmallCnnConfig};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"IOPLNCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub fn encode_checkpoint(model: &SmallCnn) -> Vec<u8> {
    let spec = model.spec();
    let cfg = &model.config;
    let mut out = Vec::with_capacity(128 + model.params.len() * 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(match spec.kind {
        BackboneKind::BuiltinSmallCnn => 0,
        BackboneKind::ExternalAdapter => 1,
    });
    out.extend_from_slice(&(spec.input_size as u32).to_le_bytes());
    out.push(u8::from(spec.pretrained));
    put_str(&mut out, &spec.description);
    out.extend_from_slice(&(cfg.widths.len() as u32).to_le_bytes());
    for &w in &cfg.widths {
        out.extend_from_slice(&(w as u32).to_le_bytes());
    }
    let opt = cfg.optimizer;
    out.push(match opt.kind {
        OptimizerKind::Adam => 0,
        OptimizerKind::SgdMomentum => 1,
    });
    for v in [opt.momentum, opt.beta2, opt.eps, opt.max_grad_norm] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&cfg.init_seed.to_le_bytes());
    out.extend_from_slice(&model.step.to_le_bytes());
    put_str(&mut out, model.source_checkpoint.as_deref().unwrap_or(""));
    out.extend_from_slice(&(model.params.len() as u64).to_le_bytes());
    for p in &model.params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::Checkpoint("string field is not UTF-8".into()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<SmallCnn> {
    if bytes.len() < CHECKPOINT_MAGIC.len() + 8 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(Error::Checkpoint("checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, pos: 8 };
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    if r.u8()? != 0 {
        return Err(Error::Checkpoint("checkpoint is not for the built-in backbone".into()));
    }
    let input_size = r.u32()? as usize;
    let _pretrained = r.u8()?;
    let _description = r.string()?;
    let n_widths = r.u32()? as usize;
    if n_widths > 64 {
        return Err(Error::Checkpoint(format!("implausible layer count {n_widths}")));
    }
    let widths = (0..n_widths).map(|_| r.u32().map(|w| w as usize)).collect::<Result<Vec<_>>>()?;
    let kind = match r.u8()? {
        0 => OptimizerKind::Adam,
        1 => OptimizerKind::SgdMomentum,
        k => return Err(Error::Checkpoint(format!("unknown optimizer kind {k}"))),
    };
    let optimizer = OptimizerConfig { kind, momentum: r.f64()?, beta2: r.f64()?, eps: r.f64()?, max_grad_norm: r.f64()? };
    let init_seed = r.u64()?;
    let step = r.u64()?;
    let source = r.string()?;
    let count = r.u64()? as usize;
    let raw = r.take(count.checked_mul(4).ok_or_else(|| Error::Checkpoint("parameter count overflow".into()))?)?;
    if r.pos != body.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    let params = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    let config = SmallCnnConfig { input_size, widths, optimizer, init_seed };
    let source = if source.is_empty() { None } else { Some(source) };
    SmallCnn::from_parameters(config, params, step, source).map_err(|e| Error::Checkpoint(format!("{e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plin::PatchScorer;
    use crate::Raster;

    fn model() -> SmallCnn {
        let mut m = SmallCnn::new(SmallCnnConfig { input_size: 16, widths: alloc::vec![4, 8], ..Default::default() }).unwrap();
        m.set_source_checkpoint("ckpt_3");
        m
    }

    #[test]
    fn round_trip_preserves_scores() {
        let m = model();
        let bytes = encode_checkpoint(&m);
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back.parameters(), m.parameters());
        assert_eq!(back.source_checkpoint(), Some("ckpt_3"));
        let probe: Vec<Raster> = (0..4).map(|i| Raster::from_fn(16, 16, |x, y| (x * 11 + y * 5 + i * 40) as u8)).collect();
        let a = m.score_patches(&probe).unwrap();
        let b = back.score_patches(&probe).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-7);
        }
        assert_eq!(encode_checkpoint(&back), bytes);
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = encode_checkpoint(&model());
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::Checkpoint(_))));
        assert!(decode_checkpoint(b"nonsense").is_err());
        let good = encode_checkpoint(&model());
        assert!(decode_checkpoint(&good[..good.len() - 9]).is_err());
    }
}
