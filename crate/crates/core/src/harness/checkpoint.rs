//! Binary checkpoint format shared by the recognizer and the refiner.
//!
//! ```text
//! "LFCK" | version u32 | kind: u8 len + ascii | config echo: u32 len + utf8
//! | epoch u32 | dev metric f64 | seed u64 | tensor count u32
//! | per tensor: name u16 len + utf8, rank u8, dims u32 each, f32 values
//! ```
//! All integers and floats are little-endian.

use std::fmt;
use std::path::Path;

use crate::asr::{AsrModel, EncoderConfig};
use crate::binio::Reader;
use crate::error::{Error, Result};
use crate::kv::{KvDoc, KvWriter};
use crate::numerics::{ParamSet, Tensor};
use crate::refiner::{Refiner, RefinerConfig};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LFCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Asr,
    Refiner,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Asr => "asr",
            ModelKind::Refiner => "refiner",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainMeta {
    pub epoch: u32,
    pub dev_metric: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub config_echo: String,
    pub meta: TrainMeta,
    pub params: ParamSet<f32>,
}

impl Checkpoint {
    pub fn from_asr(model: &AsrModel<f32>, meta: TrainMeta) -> Self {
        let mut w = KvWriter::new();
        model.config.write_kv(&mut w, "encoder.");
        Self { kind: ModelKind::Asr, config_echo: w.finish(), meta, params: model.params.clone() }
    }

    pub fn from_refiner(model: &Refiner<f32>, meta: TrainMeta) -> Self {
        let mut w = KvWriter::new();
        model.config.write_kv(&mut w, "refiner.");
        Self { kind: ModelKind::Refiner, config_echo: w.finish(), meta, params: model.params.clone() }
    }

    fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::KindMismatch { expected: kind.to_string(), found: self.kind.to_string() });
        }
        Ok(())
    }

    pub fn into_asr(self) -> Result<AsrModel<f32>> {
        self.expect_kind(ModelKind::Asr)?;
        let doc = KvDoc::parse(&self.config_echo)?;
        let mut config = EncoderConfig::default();
        config.read_kv(&doc, "encoder.")?;
        doc.finish()?;
        let fresh = AsrModel::<f32>::init(config.clone(), 0)?;
        fresh.params.check_layout(&self.params)?;
        Ok(AsrModel { config, params: self.params })
    }

    pub fn into_refiner(self) -> Result<Refiner<f32>> {
        self.expect_kind(ModelKind::Refiner)?;
        let doc = KvDoc::parse(&self.config_echo)?;
        let mut config = RefinerConfig::default();
        config.read_kv(&doc, "refiner.")?;
        doc.finish()?;
        let fresh = Refiner::<f32>::init(config.clone(), 0)?;
        fresh.params.check_layout(&self.params)?;
        Ok(Refiner { config, params: self.params })
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let kind = self.kind.to_string();
        out.push(kind.len() as u8);
        out.extend_from_slice(kind.as_bytes());
        out.extend_from_slice(&(self.config_echo.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config_echo.as_bytes());
        out.extend_from_slice(&self.meta.epoch.to_le_bytes());
        out.extend_from_slice(&self.meta.dev_metric.to_le_bytes());
        out.extend_from_slice(&self.meta.seed.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in self.params.iter() {
            if name.len() > u16::MAX as usize || t.rank() > u8::MAX as usize {
                return Err(Error::InvalidArgument(format!("parameter {name} cannot be encoded")));
            }
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.rank() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "checkpoint");
        let bad_magic = |found: &[u8]| Error::BadMagic {
            what: "checkpoint",
            expected: String::from_utf8_lossy(CHECKPOINT_MAGIC).into_owned(),
            found: String::from_utf8_lossy(found).into_owned(),
        };
        let magic = r.take(4).map_err(|_| bad_magic(bytes))?;
        if magic != CHECKPOINT_MAGIC {
            return Err(bad_magic(magic));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version { what: "checkpoint", expected: CHECKPOINT_VERSION, found: version });
        }
        let kind_len = r.u8()? as usize;
        let kind = match r.utf8(kind_len)? {
            "asr" => ModelKind::Asr,
            "refiner" => ModelKind::Refiner,
            other => return Err(r.malformed(&format!("unknown model kind {other:?}"))),
        };
        let echo_len = r.u32()? as usize;
        let config_echo = r.utf8(echo_len)?.to_string();
        let meta = TrainMeta { epoch: r.u32()?, dev_metric: r.f64()?, seed: r.u64()? };
        let count = r.u32()? as usize;
        let mut params = ParamSet::new();
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = r.utf8(name_len)?.to_string();
            let rank = r.u8()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| r.malformed("tensor too large"))?;
            let data = r.f32s(n)?;
            if params.get(&name).is_some() {
                return Err(r.malformed(&format!("duplicate tensor {name}")));
            }
            params.insert(name, Tensor::new(shape, data)?);
        }
        r.expect_end()?;
        Ok(Self { kind, config_echo, meta, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> TrainMeta {
        TrainMeta { epoch: 7, dev_metric: 0.125, seed: 42 }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let asr = AsrModel::<f32>::init(EncoderConfig::default(), 1).unwrap();
        let ck = Checkpoint::from_asr(&asr, meta());
        let bytes = ck.encode().unwrap();
        let back = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.encode().unwrap(), bytes);
        assert_eq!(back.into_asr().unwrap(), asr);

        let r = Refiner::<f32>::init(RefinerConfig::default(), 2).unwrap();
        let back = Checkpoint::decode(&Checkpoint::from_refiner(&r, meta()).encode().unwrap()).unwrap();
        assert_eq!(back.meta, meta());
        assert_eq!(back.into_refiner().unwrap(), r);
    }

    #[test]
    fn corruption_is_diagnosed() {
        let asr = AsrModel::<f32>::init(EncoderConfig::default(), 1).unwrap();
        let bytes = Checkpoint::from_asr(&asr, meta()).encode().unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        let err = Checkpoint::decode(&bad).unwrap_err();
        assert!(matches!(err, Error::BadMagic { .. }));
        assert!(err.to_string().contains("LFCK"), "{err}");

        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(Checkpoint::decode(&bad), Err(Error::Version { found: 9, .. })));

        assert!(matches!(Checkpoint::decode(&bytes[..bytes.len() - 3]), Err(Error::Malformed { .. })));
        assert!(matches!(Checkpoint::decode(&bytes[..2]), Err(Error::BadMagic { .. })));

        let ck = Checkpoint::decode(&bytes).unwrap();
        assert!(matches!(ck.into_refiner(), Err(Error::KindMismatch { .. })));
    }
}
