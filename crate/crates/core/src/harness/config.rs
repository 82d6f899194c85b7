//! Experiment configuration: one `key=value` file with section prefixes.

use std::path::{Path, PathBuf};

use crate::asr::{AsrTrainConfig, EncoderConfig};
use crate::corpus::{CorpusSpec, SurrogateSe};
use crate::error::{Error, Result};
use crate::flow::FlowConfig;
use crate::kv::{KvDoc, KvWriter};
use crate::refiner::{RefinerConfig, RefinerTrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub corpus: CorpusSpec,
    pub encoder: EncoderConfig,
    pub asr_train: AsrTrainConfig,
    pub refiner: RefinerConfig,
    pub refiner_train: RefinerTrainConfig,
    pub flow: FlowConfig,
    /// `(strength, artifact)` front-end profiles; the first one is the
    /// reported "SE" condition.
    pub se_profiles: Vec<(f64, f64)>,
    pub se_seed: u64,
    pub data_dir: PathBuf,
    pub run_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let corpus = CorpusSpec::default();
        let encoder = EncoderConfig::desk_scale(corpus.feature_dim, corpus.vocab_size);
        Self {
            refiner: RefinerConfig::desk_scale(encoder.hidden),
            corpus,
            encoder,
            asr_train: AsrTrainConfig { lr: 3e-3, patience: 3, ..AsrTrainConfig::default() },
            refiner_train: RefinerTrainConfig::default(),
            flow: FlowConfig::default(),
            se_profiles: vec![(0.7, 0.1)],
            se_seed: 3,
            data_dir: PathBuf::from("data"),
            run_dir: PathBuf::from("run"),
        }
    }
}

fn parse_profile(s: &str) -> Result<(f64, f64)> {
    let bad = || Error::Config(format!("se.profiles entry {s:?} is not strength:artifact"));
    let (a, g) = s.split_once(':').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, g.trim().parse().map_err(|_| bad())?))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let doc = KvDoc::parse(text)?;
        let mut c = Self::default();
        c.corpus.read_kv(&doc, "corpus.")?;
        c.encoder.read_kv(&doc, "encoder.")?;
        c.asr_train.read_kv(&doc, "asr_train.")?;
        c.refiner.read_kv(&doc, "refiner.")?;
        c.refiner_train.read_kv(&doc, "refiner_train.")?;
        c.flow.read_kv(&doc, "flow.")?;
        let mut profiles: Vec<String> = Vec::new();
        doc.read_list("se.profiles", &mut profiles)?;
        if doc.contains("se.profiles") {
            c.se_profiles = profiles.iter().map(|p| parse_profile(p)).collect::<Result<_>>()?;
        }
        doc.read("se.seed", &mut c.se_seed)?;
        let mut data = String::new();
        let mut run = String::new();
        doc.read("paths.data_dir", &mut data)?;
        doc.read("paths.run_dir", &mut run)?;
        if !data.is_empty() {
            c.data_dir = data.into();
        }
        if !run.is_empty() {
            c.run_dir = run.into();
        }
        doc.finish()?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn se(&self) -> Result<Vec<SurrogateSe>> {
        self.se_profiles
            .iter()
            .map(|&(a, g)| SurrogateSe::new(a, g, self.se_seed).map_err(|e| Error::Config(e.to_string())))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.encoder.validate()?;
        self.asr_train.validate()?;
        self.refiner.validate()?;
        self.refiner_train.validate()?;
        self.flow.validate()?;
        self.se()?;
        if self.encoder.feature_dim != self.corpus.feature_dim || self.encoder.vocab_size != self.corpus.vocab_size {
            return Err(Error::Config(format!(
                "encoder expects {} features / {} symbols but the corpus has {} / {}",
                self.encoder.feature_dim, self.encoder.vocab_size, self.corpus.feature_dim, self.corpus.vocab_size
            )));
        }
        if self.refiner.latent_dim != self.encoder.hidden {
            return Err(Error::Config(format!(
                "refiner.latent_dim {} must equal encoder.hidden {}",
                self.refiner.latent_dim, self.encoder.hidden
            )));
        }
        Ok(())
    }

    /// Fully resolved configuration, parseable by [`ExperimentConfig::parse`].
    pub fn to_kv(&self) -> String {
        let mut w = KvWriter::new();
        self.corpus.write_kv(&mut w, "corpus.");
        self.encoder.write_kv(&mut w, "encoder.");
        self.asr_train.write_kv(&mut w, "asr_train.");
        self.refiner.write_kv(&mut w, "refiner.");
        self.refiner_train.write_kv(&mut w, "refiner_train.");
        self.flow.write_kv(&mut w, "flow.");
        let profiles: Vec<String> = self.se_profiles.iter().map(|(a, g)| format!("{a}:{g}")).collect();
        w.put_list("se.profiles", &profiles);
        w.put("se.seed", self.se_seed);
        w.put("paths.data_dir", self.data_dir.display());
        w.put("paths.run_dir", self.run_dir.display());
        w.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolved_config_round_trips() {
        let mut c = ExperimentConfig::default();
        c.se_profiles = vec![(0.7, 0.1), (0.5, 0.0)];
        c.flow.steps = 5;
        let back = ExperimentConfig::parse(&c.to_kv()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn shipped_configs_parse() {
        let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let desk = ExperimentConfig::from_file(&root.join("desk.cfg")).unwrap();
        assert_eq!(desk, ExperimentConfig::default());
        let large = ExperimentConfig::from_file(&root.join("large.cfg")).unwrap();
        assert_eq!((large.encoder.layers, large.refiner.depth), (12, 4));
    }

    #[test]
    fn overrides_and_errors() {
        let c = ExperimentConfig::parse("encoder.layers=3\nse.profiles=0.5:0.2\n").unwrap();
        assert_eq!(c.encoder.layers, 3);
        assert_eq!(c.se_profiles, vec![(0.5, 0.2)]);
        for bad in [
            "encoder.layer=3\n",
            "se.profiles=0.5\n",
            "se.profiles=1.5:0.0\n",
            "encoder.hidden=30\n",
            "corpus.feature_dim=16\n",
            "flow.steps=0\n",
        ] {
            assert!(matches!(ExperimentConfig::parse(bad), Err(Error::Config(_))), "{bad}");
        }
    }
}
