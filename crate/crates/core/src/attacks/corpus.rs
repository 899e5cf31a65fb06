//! Attack corpora: generation over a dataset and the on-disk format.
//!
//! File layout: magic `ADVMAPAE`, u32 version, u32 manifest length, JSON
//! manifest, then per record the original and adversarial images as
//! little-endian f32, then a CRC32 of everything before it.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    cw_l2_batch, ead_l1_batch, l0_greedy_batch, pgd_batch, rubbish_batch, AdversarialRecord, AttackConfig,
    AttackError, AttackKind, Norms, RubbishInit,
};
use crate::data::{LabeledImages, PixelDistribution};
use crate::nn::{predict, Model};
use crate::seed::item_seed;

const MAGIC: &[u8; 8] = b"ADVMAPAE";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("not a corpus file")]
    BadMagic,
    #[error("unsupported corpus version {0}")]
    Version(u32),
    #[error("corpus file truncated")]
    Truncated,
    #[error("corpus checksum mismatch")]
    Checksum,
    #[error("corpus manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Attack(#[from] AttackError),
}

/// Everything about a record except its two images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub index: usize,
    pub original_class: Option<u8>,
    pub target: Option<u8>,
    pub predicted_class: u8,
    pub confidence: f32,
    pub success: bool,
    pub epsilon: Option<f32>,
    pub norms: Norms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub network: String,
    pub attack: AttackKind,
    pub config: AttackConfig,
    pub seed: u64,
    pub image_shape: Vec<usize>,
    /// `counts[C_o][C_p]` over successful records with a known `C_o`.
    pub counts: Vec<Vec<u32>>,
    pub records: Vec<RecordMeta>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub manifest: CorpusManifest,
    pub records: Vec<AdversarialRecord>,
}

impl Corpus {
    pub fn successful(&self) -> impl Iterator<Item = &AdversarialRecord> {
        self.records.iter().filter(|r| r.success)
    }
}

pub fn confusion_counts(records: &[AdversarialRecord], classes: usize) -> Vec<Vec<u32>> {
    let mut counts = vec![vec![0u32; classes]; classes];
    for r in records.iter().filter(|r| r.success) {
        if let Some(c) = r.original_class {
            counts[c as usize][r.predicted_class as usize] += 1;
        }
    }
    counts
}

/// What to attack.
#[derive(Debug, Clone, Copy)]
pub struct CorpusRequest<'a> {
    pub network: &'a str,
    pub kind: AttackKind,
    /// Candidate inputs for norm attacks; only correctly classified ones are attacked.
    pub inputs: &'a LabeledImages,
    /// Maximum number of attacked inputs, or of rubbish examples.
    pub limit: usize,
    /// Required for `rc-distrib`.
    pub pixels: Option<&'a PixelDistribution>,
}

/// Runs one attack over a dataset. Records are ordered by input index
/// (ordinal for rubbish) regardless of the thread count.
pub fn generate_corpus(model: &Model, req: CorpusRequest, cfg: &AttackConfig) -> Result<Corpus, CorpusError> {
    cfg.validate()?;
    let classes = model.classes();
    let batch = cfg.effective_batch();
    let kind = req.kind;
    let records: Vec<AdversarialRecord> = if kind.is_rubbish() {
        let init = match (kind, req.pixels) {
            (AttackKind::RcRnd, _) => RubbishInit::Uniform,
            (_, Some(d)) => RubbishInit::PixelDistribution(d),
            (_, None) => {
                return Err(AttackError::InvalidConfig("rc-distrib needs a pixel distribution".into()).into());
            }
        };
        let ordinals: Vec<usize> = (0..req.limit).collect();
        let chunks: Vec<Result<Vec<AdversarialRecord>, AttackError>> = ordinals
            .par_chunks(batch)
            .map(|chunk| {
                let imgs: Vec<Vec<f32>> = chunk
                    .iter()
                    .map(|&o| init.sample(model.input_shape(), item_seed(cfg.seed, o as u64)))
                    .collect();
                let jobs: Vec<(usize, &[f32], u8)> = chunk
                    .iter()
                    .zip(&imgs)
                    .map(|(&o, x)| (o, x.as_slice(), (o % classes) as u8))
                    .collect();
                rubbish_batch(model, kind, &jobs, &cfg.rubbish)
            })
            .collect();
        flatten(chunks)?
    } else {
        let data = req.inputs;
        if data.image_len() != model.input_len() && !data.is_empty() {
            return Err(AttackError::ShapeMismatch {
                left: data.image_len(),
                right: model.input_len(),
            }
            .into());
        }
        let preds = if data.is_empty() {
            Vec::new()
        } else {
            predict(model, data).map_err(AttackError::from)?
        };
        let chosen: Vec<usize> = (0..data.len())
            .filter(|&i| preds[i] == data.labels()[i])
            .take(req.limit)
            .collect();
        let positions: Vec<usize> = (0..chosen.len()).collect();
        let chunks: Vec<Result<Vec<AdversarialRecord>, AttackError>> = positions
            .par_chunks(batch)
            .map(|chunk| {
                let jobs: Vec<(usize, &[f32], u8)> = chunk
                    .iter()
                    .map(|&k| {
                        let i = chosen[k];
                        (i, data.image(i), data.labels()[i])
                    })
                    .collect();
                match kind {
                    AttackKind::Pgd => {
                        let grid = &cfg.pgd.epsilons;
                        let eps: Vec<f32> = chunk.iter().map(|&k| grid[k % grid.len()]).collect();
                        pgd_batch(model, &jobs, &eps, cfg.pgd.steps, cfg.pgd.step_fraction)
                    }
                    AttackKind::CwL2 => cw_l2_batch(model, &jobs, &cfg.cw),
                    AttackKind::EadL1 => ead_l1_batch(model, &jobs, &cfg.ead),
                    AttackKind::GreedyL0 => l0_greedy_batch(model, &jobs, &cfg.l0),
                    AttackKind::RcRnd | AttackKind::RcDistrib => unreachable!("handled above"),
                }
            })
            .collect();
        flatten(chunks)?
    };
    let manifest = CorpusManifest {
        network: req.network.to_string(),
        attack: kind,
        config: cfg.clone(),
        seed: cfg.seed,
        image_shape: model.input_shape().to_vec(),
        counts: confusion_counts(&records, classes),
        records: records.iter().map(meta_of).collect(),
    };
    Ok(Corpus { manifest, records })
}

fn flatten(chunks: Vec<Result<Vec<AdversarialRecord>, AttackError>>) -> Result<Vec<AdversarialRecord>, AttackError> {
    let mut out = Vec::new();
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

fn meta_of(r: &AdversarialRecord) -> RecordMeta {
    RecordMeta {
        index: r.index,
        original_class: r.original_class,
        target: r.target,
        predicted_class: r.predicted_class,
        confidence: r.confidence,
        success: r.success,
        epsilon: r.epsilon,
        norms: r.norms,
    }
}

pub fn encode_corpus(corpus: &Corpus) -> Vec<u8> {
    let manifest = serde_json::to_vec_pretty(&corpus.manifest).expect("manifest serialises");
    let n: usize = corpus.manifest.image_shape.iter().product();
    let mut buf = Vec::with_capacity(16 + manifest.len() + corpus.records.len() * n * 8 + 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
    buf.extend_from_slice(&manifest);
    for r in &corpus.records {
        for v in r.original.iter().chain(&r.adversarial) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

pub fn decode_corpus(bytes: &[u8]) -> Result<Corpus, CorpusError> {
    if bytes.len() < 20 {
        return Err(if bytes.len() >= 8 && &bytes[..8] != MAGIC {
            CorpusError::BadMagic
        } else {
            CorpusError::Truncated
        });
    }
    if &bytes[..8] != MAGIC {
        return Err(CorpusError::BadMagic);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(CorpusError::Version(version));
    }
    if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().expect("4 bytes")) {
        return Err(CorpusError::Checksum);
    }
    let mlen = u32::from_le_bytes(body[12..16].try_into().expect("4 bytes")) as usize;
    let rest = &body[16..];
    if rest.len() < mlen {
        return Err(CorpusError::Truncated);
    }
    let manifest: CorpusManifest =
        serde_json::from_slice(&rest[..mlen]).map_err(|e| CorpusError::Manifest(e.to_string()))?;
    let n: usize = manifest.image_shape.iter().product();
    let blob = &rest[mlen..];
    if blob.len() != manifest.records.len() * n * 8 {
        return Err(CorpusError::Truncated);
    }
    let floats: Vec<f32> = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let records = manifest
        .records
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let base = i * 2 * n;
            AdversarialRecord {
                index: m.index,
                kind: manifest.attack,
                original: floats[base..base + n].to_vec(),
                adversarial: floats[base + n..base + 2 * n].to_vec(),
                original_class: m.original_class,
                target: m.target,
                predicted_class: m.predicted_class,
                confidence: m.confidence,
                success: m.success,
                epsilon: m.epsilon,
                norms: m.norms,
            }
        })
        .collect();
    Ok(Corpus { manifest, records })
}

/// Writes atomically via a sibling temporary file.
pub fn write_corpus(path: &Path, corpus: &Corpus) -> Result<(), CorpusError> {
    let io = |e: std::io::Error| CorpusError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(&encode_corpus(corpus)).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn read_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let bytes = fs::read(path).map_err(|e| CorpusError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    decode_corpus(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::test_models::linear;
    use crate::data::Split;

    fn setup() -> (Model, LabeledImages) {
        let model = linear(&[vec![2.0, -1.0, 0.0, 0.5], vec![-2.0, 1.0, 0.5, 0.0]], &[0.0, 0.0]);
        let imgs: Vec<f32> = (0..40).map(|i| ((i * 7) % 11) as f32 / 10.0).collect();
        let labels: Vec<u8> = (0..10).map(|i| (i % 2) as u8).collect();
        let data = LabeledImages::new(imgs, labels, vec![4], Split::Test).unwrap();
        (model, data)
    }

    fn request<'a>(data: &'a LabeledImages, kind: AttackKind) -> CorpusRequest<'a> {
        CorpusRequest {
            network: "toy",
            kind,
            inputs: data,
            limit: 100,
            pixels: None,
        }
    }

    #[test]
    fn empty_input_set_gives_empty_corpus() {
        let (model, data) = setup();
        let empty = data.head(0);
        let c = generate_corpus(&model, request(&empty, AttackKind::Pgd), &AttackConfig::default()).unwrap();
        assert!(c.records.is_empty());
        assert!(c.manifest.counts.iter().flatten().all(|&v| v == 0));
    }

    #[test]
    fn only_correct_inputs_are_attacked_in_index_order() {
        let (model, data) = setup();
        let cfg = AttackConfig {
            batch_size: 3,
            ..AttackConfig::default()
        };
        let c = generate_corpus(&model, request(&data, AttackKind::Pgd), &cfg).unwrap();
        let preds = predict(&model, &data).unwrap();
        let expected: Vec<usize> = (0..data.len()).filter(|&i| preds[i] == data.labels()[i]).collect();
        let got: Vec<usize> = c.records.iter().map(|r| r.index).collect();
        assert_eq!(got, expected);
        for r in &c.records {
            assert!(r.norms.linf <= r.epsilon.unwrap() as f64 + 1e-6);
        }
        for k in 0..2 {
            assert_eq!(c.manifest.counts[k][k], 0);
        }
    }

    #[test]
    fn batch_size_does_not_change_output() {
        let (model, data) = setup();
        let a = AttackConfig {
            batch_size: 1,
            ..AttackConfig::default()
        };
        let b = AttackConfig {
            batch_size: 4,
            ..AttackConfig::default()
        };
        let ca = generate_corpus(&model, request(&data, AttackKind::GreedyL0), &a).unwrap();
        let cb = generate_corpus(&model, request(&data, AttackKind::GreedyL0), &b).unwrap();
        assert_eq!(ca.records, cb.records);
    }

    #[test]
    fn round_trip_and_corruption() {
        let (model, data) = setup();
        let mut cfg = AttackConfig::default();
        cfg.rubbish.epsilon = 0.5;
        cfg.rubbish.step_size = 0.05;
        let mut req = request(&data, AttackKind::RcRnd);
        req.limit = 6;
        let c = generate_corpus(&model, req, &cfg).unwrap();
        assert_eq!(c.records.len(), 6);
        assert_eq!(c.records.iter().map(|r| r.target.unwrap()).collect::<Vec<_>>(), vec![0, 1, 0, 1, 0, 1]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        write_corpus(&path, &c).unwrap();
        assert_eq!(read_corpus(&path).unwrap(), c);
        let mut bytes = encode_corpus(&c);
        let mid = bytes.len() - 10;
        bytes[mid] ^= 0x40;
        assert!(matches!(decode_corpus(&bytes), Err(CorpusError::Checksum)));
        assert!(matches!(decode_corpus(b"NOTACORPUSFILE......"), Err(CorpusError::BadMagic)));
        assert!(matches!(decode_corpus(&encode_corpus(&c)[..10]), Err(CorpusError::Truncated)));
    }

    #[test]
    fn distrib_requires_pixel_distribution() {
        let (model, data) = setup();
        let err = generate_corpus(&model, request(&data, AttackKind::RcDistrib), &AttackConfig::default());
        assert!(err.is_err());
    }
}
