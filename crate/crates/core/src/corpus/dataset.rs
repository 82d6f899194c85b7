//! Split generation and the LFDS on-disk dataset format.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "LFDS" | version u32 | echo_len u32 | echo (UTF-8 key=value text)
//! record_count u32 | records...
//! record: id u32 | n_labels u16 | labels u16*n | T u32 | F u32 | snr_db f32
//!         | clean f32*T*F | noisy f32*T*F            (row-major)
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng as _;

use crate::corpus::noise::{mix_at_snr, noise_field};
use crate::corpus::render::{render_features, sample_transcript, Prototypes};
use crate::corpus::{CorpusSpec, Utterance};
use crate::binio::Reader;
use crate::error::{Error, Result};
use crate::exec::par_map;
use crate::kv::{KvDoc, KvWriter};
use crate::numerics::Tensor;
use crate::rng::stream;

pub const DATASET_MAGIC: &[u8; 4] = b"LFDS";
pub const DATASET_VERSION: u32 = 1;

/// Largest accepted gap between declared and re-measured SNR.
pub const SNR_TOLERANCE_DB: f64 = 1e-6;

const TRANSCRIPT_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const SNR_STREAM: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    /// Utterance ids owned by this split; ranges never overlap.
    pub fn ids(self, spec: &CorpusSpec) -> std::ops::Range<u32> {
        let (tr, dv, te) = (spec.train_count as u32, spec.dev_count as u32, spec.test_count as u32);
        match self {
            Split::Train => 0..tr,
            Split::Dev => tr..tr + dv,
            Split::Test => tr + dv..tr + dv + te,
        }
    }

    pub fn file_name(self) -> String {
        format!("{self}.lfds")
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            o => Err(Error::Config(format!("unknown split {o:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub spec: CorpusSpec,
    pub split: Split,
    pub utterances: Vec<Utterance>,
}

impl Dataset {
    /// Distinct SNR conditions in first-seen order.
    pub fn snr_conditions(&self) -> Vec<f32> {
        let mut out: Vec<f32> = Vec::new();
        for u in &self.utterances {
            if !out.contains(&u.snr_db) {
                out.push(u.snr_db);
            }
        }
        out
    }
}

/// Records for one utterance id. Train and dev draw one SNR uniformly over
/// the grid's range; test emits one record per grid SNR sharing the same
/// clean rendering and noise realization.
fn generate_utterance(spec: &CorpusSpec, protos: &Prototypes, split: Split, id: u32) -> Result<Vec<Utterance>> {
    let mut rng = stream(spec.seed, &[id as u64, TRANSCRIPT_STREAM]);
    let labels = sample_transcript(spec, &mut rng);
    let clean = render_features(&labels, spec, protos, &mut rng);
    let kind = spec.noise_kind_for(id);
    let noise = noise_field(kind, clean.shape()[0], spec, protos, &mut stream(spec.seed, &[id as u64, NOISE_STREAM]));
    let targets: Vec<f64> = match split {
        Split::Test => spec.snr_grid.clone(),
        Split::Train | Split::Dev => {
            let (lo, hi) = spec.snr_range();
            let mut r = stream(spec.seed, &[id as u64, SNR_STREAM]);
            vec![if hi > lo { r.random_range(lo..=hi) } else { lo }]
        }
    };
    targets
        .into_iter()
        .map(|snr| {
            let declared = snr as f32;
            let (noisy, realized) = mix_at_snr(&clean, &noise, declared as f64)?;
            if (realized - declared as f64).abs() > SNR_TOLERANCE_DB {
                return Err(Error::InvalidArgument(format!(
                    "utterance {id}: realized SNR {realized} dB misses declared {declared} dB"
                )));
            }
            Ok(Utterance {
                id,
                labels: labels.clone(),
                clean: clean.clone(),
                noisy,
                snr_db: declared,
                noise_kind: kind,
            })
        })
        .collect()
}

pub fn generate_split(spec: &CorpusSpec, split: Split) -> Result<Dataset> {
    spec.validate()?;
    let protos = Prototypes::build(spec);
    let ids: Vec<u32> = split.ids(spec).collect();
    let per_id = par_map(&ids, |&id| generate_utterance(spec, &protos, split, id));
    let mut utterances = Vec::new();
    for recs in per_id {
        utterances.extend(recs?);
    }
    Ok(Dataset { spec: spec.clone(), split, utterances })
}

fn echo_text(spec: &CorpusSpec, split: Split) -> String {
    let mut w = KvWriter::new();
    w.put("split", split);
    spec.write_kv(&mut w, "corpus.");
    w.finish()
}

pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    let echo = echo_text(&ds.spec, ds.split);
    out.extend_from_slice(&(echo.len() as u32).to_le_bytes());
    out.extend_from_slice(echo.as_bytes());
    out.extend_from_slice(&(ds.utterances.len() as u32).to_le_bytes());
    for u in &ds.utterances {
        let (t, f) = u.clean.dims2()?;
        u.clean.expect_same_shape(&u.noisy, "dataset record")?;
        if u.labels.len() > u16::MAX as usize {
            return Err(Error::InvalidArgument(format!("utterance {} has too many labels", u.id)));
        }
        out.extend_from_slice(&u.id.to_le_bytes());
        out.extend_from_slice(&(u.labels.len() as u16).to_le_bytes());
        for l in &u.labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
        out.extend_from_slice(&(t as u32).to_le_bytes());
        out.extend_from_slice(&(f as u32).to_le_bytes());
        out.extend_from_slice(&u.snr_db.to_le_bytes());
        for v in u.clean.data().iter().chain(u.noisy.data()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader::new(bytes, "dataset");
    let magic = r.take(4).map_err(|_| Error::BadMagic {
        what: "dataset",
        expected: "LFDS".into(),
        found: String::from_utf8_lossy(bytes).into_owned(),
    })?;
    if magic != DATASET_MAGIC {
        return Err(Error::BadMagic {
            what: "dataset",
            expected: "LFDS".into(),
            found: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return Err(Error::Version { what: "dataset", expected: DATASET_VERSION, found: version });
    }
    let echo_len = r.u32()? as usize;
    let doc = KvDoc::parse(r.utf8(echo_len)?)?;
    let split: Split = doc.get("split")?.ok_or_else(|| r.malformed("spec echo lacks split"))?;
    let mut spec = CorpusSpec::default();
    spec.read_kv(&doc, "corpus.")?;
    doc.finish()?;
    spec.validate()?;

    let count = r.u32()? as usize;
    let mut utterances = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let id = r.u32()?;
        let n = r.u16()? as usize;
        let labels = (0..n).map(|_| r.u16()).collect::<Result<Vec<_>>>()?;
        let t = r.u32()? as usize;
        let f = r.u32()? as usize;
        if t == 0 || f == 0 {
            return Err(r.malformed(&format!("record {id} has empty feature matrix")));
        }
        let snr_db = r.f32()?;
        let clean = Tensor::new(vec![t, f], r.f32s(t * f)?)?;
        let noisy = Tensor::new(vec![t, f], r.f32s(t * f)?)?;
        utterances.push(Utterance { id, labels, clean, noisy, snr_db, noise_kind: spec.noise_kind_for(id) });
    }
    r.expect_end()?;
    Ok(Dataset { spec, split, utterances })
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let bytes = encode_dataset(ds)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(&bytes)
}

/// Writes `train.lfds`, `dev.lfds` and `test.lfds` under `out_dir`.
pub fn build_corpus(spec: &CorpusSpec, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for split in Split::ALL {
        let ds = generate_split(spec, split)?;
        write_dataset(&out_dir.join(split.file_name()), &ds)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::noise::measure_snr_db;

    fn small() -> CorpusSpec {
        CorpusSpec { train_count: 10, dev_count: 5, test_count: 5, ..CorpusSpec::default() }
    }

    #[test]
    fn test_split_covers_grid() {
        let spec = small();
        let ds = generate_split(&spec, Split::Test).unwrap();
        assert_eq!(ds.utterances.len(), 30);
        assert_eq!(ds.snr_conditions().len(), 6);
        for (i, u) in ds.utterances.iter().enumerate() {
            assert_eq!(u.snr_db as f64, spec.snr_grid[i % 6]);
        }
    }

    #[test]
    fn stored_snr_round_trips() {
        let spec = small();
        for split in Split::ALL {
            let ds = decode_dataset(&encode_dataset(&generate_split(&spec, split).unwrap()).unwrap()).unwrap();
            let (lo, hi) = spec.snr_range();
            for u in &ds.utterances {
                assert_eq!(u.clean.shape(), u.noisy.shape());
                let m = measure_snr_db(&u.clean, &u.noisy).unwrap();
                assert!((m - u.snr_db as f64).abs() <= SNR_TOLERANCE_DB, "{m} vs {}", u.snr_db);
                assert!(u.snr_db as f64 >= lo - 1e-5 && u.snr_db as f64 <= hi + 1e-5);
            }
        }
    }

    #[test]
    fn splits_have_disjoint_ids() {
        let spec = small();
        let mut seen = std::collections::HashSet::new();
        for split in Split::ALL {
            let ds = generate_split(&spec, split).unwrap();
            let ids: std::collections::HashSet<u32> = ds.utterances.iter().map(|u| u.id).collect();
            assert_eq!(ids.len(), split.ids(&spec).len());
            for id in ids {
                assert!(seen.insert(id), "id {id} reused");
            }
        }
    }

    #[test]
    fn encoding_round_trips_and_is_deterministic() {
        let spec = small();
        let a = encode_dataset(&generate_split(&spec, Split::Dev).unwrap()).unwrap();
        let b = encode_dataset(&generate_split(&spec, Split::Dev).unwrap()).unwrap();
        assert_eq!(a, b);
        let back = decode_dataset(&a).unwrap();
        assert_eq!(encode_dataset(&back).unwrap(), a);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let spec = small();
        let good = encode_dataset(&generate_split(&spec, Split::Dev).unwrap()).unwrap();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_dataset(&bad), Err(Error::BadMagic { .. })));
        let mut bad = good.clone();
        bad[4] = 9;
        assert!(matches!(decode_dataset(&bad), Err(Error::Version { .. })));
        assert!(matches!(decode_dataset(&good[..good.len() - 3]), Err(Error::Malformed { .. })));
    }
}
