//! Checkpoint container: a JSON header (configs, normalization statistics,
//! filter-bank metadata, config fingerprint, tensor directory) followed by a
//! raw little-endian f64 blob. Reloading reproduces forward outputs
//! bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::asr::{AsrConfig, AsrModel};
use crate::corpus::Condition;
use crate::dsp::mel::NormStats;
use crate::embedding::CspBank;
use crate::error::{Error, Result};
use crate::model::{Discriminator, DiscriminatorConfig, Generator, GeneratorConfig};
use crate::nn::{load_param_values, param_values, Module};
use crate::train::{Stage, TrainedModel};

const MAGIC: &[u8; 4] = b"ESPK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    len: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BankMeta {
    class_order: Vec<String>,
    trained_on: Condition,
    filters_per_class: usize,
    segments: usize,
    variance_floor: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Header {
    kind: String,
    fingerprint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    epoch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    val_rmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    val_cer: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gen_cfg: Option<GeneratorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    disc_cfg: Option<DiscriminatorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    asr_cfg: Option<AsrConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mel_stats: Option<NormStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bank: Option<BankMeta>,
    tensors: Vec<TensorEntry>,
}

struct Writer {
    header: Header,
    data: Vec<f64>,
}

impl Writer {
    fn new(kind: &str, fingerprint: &str) -> Self {
        Writer {
            header: Header {
                kind: kind.to_string(),
                fingerprint: fingerprint.to_string(),
                ..Header::default()
            },
            data: Vec::new(),
        }
    }

    fn push_tensor(&mut self, name: &str, shape: &[usize], values: impl Iterator<Item = f64>) {
        let offset = self.data.len() as u64;
        self.data.extend(values);
        self.header.tensors.push(TensorEntry {
            name: name.to_string(),
            shape: shape.to_vec(),
            offset,
            len: self.data.len() as u64 - offset,
        });
    }

    fn push_module(&mut self, prefix: &str, module: &mut impl Module) {
        for (name, v) in param_values(module) {
            let shape = v.shape().to_vec();
            self.push_tensor(&format!("{prefix}/{name}"), &shape, v.into_iter());
        }
    }

    fn write(self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let header = serde_json::to_vec(&self.header)?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Reader {
    header: Header,
    data: Vec<f64>,
}

impl Reader {
    fn open(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint(format!(
                "{}: not a checkpoint file",
                path.display()
            )));
        }
        let mut v4 = [0u8; 4];
        r.read_exact(&mut v4)?;
        let version = u32::from_le_bytes(v4);
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let mut l8 = [0u8; 8];
        r.read_exact(&mut l8)?;
        let hlen = u64::from_le_bytes(l8) as usize;
        let mut hbytes = vec![0u8; hlen];
        r.read_exact(&mut hbytes)?;
        let header: Header = serde_json::from_slice(&hbytes)?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if rest.len() % 8 != 0 {
            return Err(Error::Checkpoint("truncated tensor blob".into()));
        }
        let data = rest
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Reader { header, data })
    }

    fn tensor(&self, name: &str) -> Result<ArrayD<f64>> {
        let e = self
            .header
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor '{name}'")))?;
        let slice = &self.data[e.offset as usize..(e.offset + e.len) as usize];
        ArrayD::from_shape_vec(IxDyn(&e.shape), slice.to_vec())
            .map_err(|err| Error::Checkpoint(format!("tensor '{name}': {err}")))
    }

    fn module_values(&self, prefix: &str) -> Vec<(String, ArrayD<f64>)> {
        let pre = format!("{prefix}/");
        self.header
            .tensors
            .iter()
            .filter(|t| t.name.starts_with(&pre))
            .map(|t| {
                let slice = &self.data[t.offset as usize..(t.offset + t.len) as usize];
                (
                    t.name[pre.len()..].to_string(),
                    ArrayD::from_shape_vec(IxDyn(&t.shape), slice.to_vec())
                        .expect("header shape matches blob"),
                )
            })
            .collect()
    }
}

fn bank_into(writer: &mut Writer, bank: &CspBank) {
    writer.header.bank = Some(BankMeta {
        class_order: bank.class_order.clone(),
        trained_on: bank.trained_on,
        filters_per_class: bank.filters_per_class,
        segments: bank.segments,
        variance_floor: bank.variance_floor,
    });
    let (r, c) = bank.filters.dim();
    writer.push_tensor("bank/filters", &[r, c], bank.filters.iter().cloned());
    writer.push_tensor(
        "bank/feature_mean",
        &[bank.feature_mean.len()],
        bank.feature_mean.iter().cloned(),
    );
    writer.push_tensor(
        "bank/feature_std",
        &[bank.feature_std.len()],
        bank.feature_std.iter().cloned(),
    );
}

fn bank_from(reader: &Reader) -> Result<CspBank> {
    let meta = reader
        .header
        .bank
        .clone()
        .ok_or_else(|| Error::Checkpoint("checkpoint carries no filter bank".into()))?;
    let filters = reader.tensor("bank/filters")?;
    let shape = (filters.shape()[0], filters.shape()[1]);
    Ok(CspBank {
        filters: Array2::from_shape_vec(shape, filters.into_iter().collect())
            .expect("filters shape"),
        class_order: meta.class_order,
        trained_on: meta.trained_on,
        feature_mean: Array1::from_vec(reader.tensor("bank/feature_mean")?.into_iter().collect()),
        feature_std: Array1::from_vec(reader.tensor("bank/feature_std")?.into_iter().collect()),
        filters_per_class: meta.filters_per_class,
        segments: meta.segments,
        variance_floor: meta.variance_floor,
    })
}

/// Saved alongside every trained generator/discriminator pair.
pub struct ModelCheckpoint {
    pub model: TrainedModel,
    pub bank: CspBank,
    pub stats: NormStats,
    pub fingerprint: String,
    pub stage: String,
    pub epoch: usize,
    pub val_rmse: f64,
    pub val_cer: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn save_model(
    path: &Path,
    fingerprint: &str,
    stage: Stage,
    epoch: usize,
    val_rmse: f64,
    val_cer: f64,
    model: &mut TrainedModel,
    bank: &CspBank,
    stats: NormStats,
) -> Result<()> {
    let mut w = Writer::new("model", fingerprint);
    w.header.stage = Some(stage.as_str().to_string());
    w.header.epoch = Some(epoch);
    w.header.val_rmse = Some(val_rmse);
    w.header.val_cer = Some(val_cer);
    w.header.gen_cfg = Some(model.gen.cfg.clone());
    w.header.disc_cfg = Some(model.disc.cfg.clone());
    w.header.mel_stats = Some(stats);
    bank_into(&mut w, bank);
    w.push_module("gen", &mut model.gen);
    w.push_module("disc", &mut model.disc);
    w.write(path)
}

pub fn load_model(path: &Path) -> Result<ModelCheckpoint> {
    let r = Reader::open(path)?;
    if r.header.kind != "model" {
        return Err(Error::Checkpoint(format!(
            "expected a model checkpoint, found '{}'",
            r.header.kind
        )));
    }
    let gen_cfg = r
        .header
        .gen_cfg
        .clone()
        .ok_or_else(|| Error::Checkpoint("missing generator config".into()))?;
    let disc_cfg = r
        .header
        .disc_cfg
        .clone()
        .ok_or_else(|| Error::Checkpoint("missing discriminator config".into()))?;
    let stats = r
        .header
        .mel_stats
        .ok_or_else(|| Error::Checkpoint("missing mel normalization stats".into()))?;
    let mut gen = Generator::new(&gen_cfg, 0)?;
    load_param_values(&mut gen, &r.module_values("gen"))?;
    let mut disc = Discriminator::new(&disc_cfg, 0)?;
    load_param_values(&mut disc, &r.module_values("disc"))?;
    Ok(ModelCheckpoint {
        model: TrainedModel { gen, disc },
        bank: bank_from(&r)?,
        stats,
        fingerprint: r.header.fingerprint.clone(),
        stage: r.header.stage.clone().unwrap_or_default(),
        epoch: r.header.epoch.unwrap_or(0),
        val_rmse: r.header.val_rmse.unwrap_or(f64::NAN),
        val_cer: r.header.val_cer.unwrap_or(f64::NAN),
    })
}

pub fn save_asr(
    path: &Path,
    fingerprint: &str,
    asr: &mut AsrModel,
    stats: NormStats,
    val_cer: f64,
) -> Result<()> {
    let mut w = Writer::new("asr", fingerprint);
    w.header.asr_cfg = Some(asr.cfg.clone());
    w.header.mel_stats = Some(stats);
    w.header.val_cer = Some(val_cer);
    w.push_module("asr", asr);
    w.write(path)
}

pub fn load_asr(path: &Path) -> Result<(AsrModel, NormStats, String)> {
    let r = Reader::open(path)?;
    if r.header.kind != "asr" {
        return Err(Error::Checkpoint(format!(
            "expected an asr checkpoint, found '{}'",
            r.header.kind
        )));
    }
    let cfg = r
        .header
        .asr_cfg
        .clone()
        .ok_or_else(|| Error::Checkpoint("missing asr config".into()))?;
    let stats = r
        .header
        .mel_stats
        .ok_or_else(|| Error::Checkpoint("missing mel normalization stats".into()))?;
    let mut asr = AsrModel::new(&cfg, 0);
    load_param_values(&mut asr, &r.module_values("asr"))?;
    Ok((asr, stats, r.header.fingerprint.clone()))
}

pub fn save_bank(path: &Path, fingerprint: &str, bank: &CspBank) -> Result<()> {
    let mut w = Writer::new("csp", fingerprint);
    bank_into(&mut w, bank);
    w.write(path)
}

pub fn load_bank(path: &Path) -> Result<(CspBank, String)> {
    let r = Reader::open(path)?;
    if r.header.kind != "csp" {
        return Err(Error::Checkpoint(format!(
            "expected a csp checkpoint, found '{}'",
            r.header.kind
        )));
    }
    Ok((bank_from(&r)?, r.header.fingerprint.clone()))
}

/// Fingerprint recorded in any checkpoint file.
pub fn read_fingerprint(path: &Path) -> Result<String> {
    Ok(Reader::open(path)?.header.fingerprint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DiscriminatorConfig, GeneratorConfig};
    use crate::nn::gradcheck;
    use crate::rng::rng_for;

    fn tmpdir() -> std::path::PathBuf {
        let d = std::env::temp_dir().join(format!(
            "eegspeak-ckpt-{}-{:?}",
            std::process::id(),
            std::thread::current().id()
        ));
        std::fs::create_dir_all(&d).unwrap();
        d
    }

    fn tiny_bank() -> CspBank {
        CspBank {
            filters: Array2::from_shape_fn((4, 2), |(i, j)| (i * 2 + j) as f64 * 0.31),
            class_order: vec!["a".into(), "b".into()],
            trained_on: Condition::Imagined,
            feature_mean: Array1::from_vec(vec![0.1, 0.2, 0.3, 0.4]),
            feature_std: Array1::from_vec(vec![1.0, 1.1, 1.2, 1.3]),
            filters_per_class: 2,
            segments: 16,
            variance_floor: 1e-12,
        }
    }

    #[test]
    fn model_checkpoint_round_trips_bit_exactly() {
        let dir = tmpdir();
        let gen_cfg = GeneratorConfig {
            initial_channels: 32,
            mrf_kernels: vec![3],
            mrf_dilations: vec![1, 2],
            ..GeneratorConfig::default()
        };
        let disc_cfg = DiscriminatorConfig {
            final_channels: 8,
            mrf_kernels: vec![3],
            mrf_dilations: vec![1],
            ..DiscriminatorConfig::default()
        };
        let mut model = TrainedModel {
            gen: Generator::new(&gen_cfg, 42).unwrap(),
            disc: Discriminator::new(&disc_cfg, 43).unwrap(),
        };
        let stats = NormStats {
            log_min: -11.5,
            log_max: 1.7,
        };
        let path = dir.join("m.ckpt");
        save_model(
            &path,
            "fp123",
            Stage::Spoken,
            7,
            0.123,
            45.6,
            &mut model,
            &tiny_bank(),
            stats,
        )
        .unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded.fingerprint, "fp123");
        assert_eq!(loaded.epoch, 7);
        // Forward outputs reproduce exactly.
        let mut rng = rng_for(1, &[]);
        let e = gradcheck::rand_array2(&mut rng, 104, 16);
        let a = model.gen.forward(&e, false).unwrap();
        let mut lg = loaded.model.gen;
        let b = lg.forward(&e, false).unwrap();
        assert_eq!(a, b);
        let bank2 = loaded.bank;
        assert_eq!(bank2.digest(), tiny_bank().digest());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn asr_checkpoint_round_trips() {
        let dir = tmpdir();
        let cfg = AsrConfig {
            in_bands: 8,
            conv_channels: 6,
            gru_hidden: 4,
            alphabet_len: 5,
        };
        let mut asr = AsrModel::new(&cfg, 11);
        let stats = NormStats {
            log_min: -3.0,
            log_max: 3.0,
        };
        let path = dir.join("a.ckpt");
        save_asr(&path, "fpA", &mut asr, stats, 3.3).unwrap();
        let (mut loaded, stats2, fp) = load_asr(&path).unwrap();
        assert_eq!(fp, "fpA");
        assert_eq!(stats2, stats);
        let mut rng = rng_for(2, &[]);
        let mel = gradcheck::rand_array2(&mut rng, 8, 20);
        assert_eq!(
            asr.forward(&mel, false).unwrap(),
            loaded.forward(&mel, false).unwrap()
        );
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let dir = tmpdir();
        let path = dir.join("b.ckpt");
        save_bank(&path, "fpB", &tiny_bank()).unwrap();
        assert!(load_model(&path).is_err());
        let (bank, fp) = load_bank(&path).unwrap();
        assert_eq!(fp, "fpB");
        assert_eq!(bank.digest(), tiny_bank().digest());
        std::fs::remove_dir_all(&dir).ok();
    }
}
