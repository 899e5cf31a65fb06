//! The five pipeline stages, their content hashes, and the resume ledger.
//!
//! Output layout under `out`:
//! `model.bin`, `train/`, `corpora/<attack>.advc`, `analysis/`, `embed/`,
//! `report/`, and `stage.json` mapping each completed stage to its hash.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use advmap_core::atlas::{capture_dataset, LayerIndex};
use advmap_core::attacks::{
    generate_corpus, read_corpus, write_corpus, AdversarialRecord, AttackKind, Corpus, CorpusManifest, CorpusRequest,
};
use advmap_core::data::{build_pixel_distribution, load_cifar_batches, load_idx_pair, LabeledImages, Split};
use advmap_core::geometry::{
    class_distance_profile, entanglement, format_value, knn_ratio, layerwise_manifold_distance, make_triples,
    read_series_csv, select_confused_pairs, write_series_csv, AnalysisSeries,
};
use advmap_core::nn::{deserialize_model, evaluate, serialize_model_tagged, train, Model};
use advmap_core::report::{embed_pca, emit_tables, import_embedding_csv, scatter_svg, Embedding2D};
use advmap_core::seed::stage_seed;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{DataFormat, EmbedMethod, RunConfig};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Train,
    Attack,
    Analyze,
    Embed,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Train, Stage::Attack, Stage::Analyze, Stage::Embed, Stage::Report];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Train => "train",
            Stage::Attack => "attack",
            Stage::Analyze => "analyze",
            Stage::Embed => "embed",
            Stage::Report => "report",
        }
    }
}

/// What a run did with each requested stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Ran,
    Skipped,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn hash_of(value: &impl Serialize) -> String {
    let json = serde_json::to_vec(value).expect("config serialises");
    hex(&Sha256::digest(&json))
}

/// Hash of each stage's own configuration chained with its upstream hashes.
pub fn stage_hashes(cfg: &RunConfig) -> BTreeMap<Stage, String> {
    let train = hash_of(&(
        "train",
        cfg.seed,
        cfg.network,
        &cfg.data,
        &cfg.train,
    ));
    let attack = hash_of(&("attack", &train, &cfg.corpus, &cfg.attacks));
    let analyze = hash_of(&("analyze", &attack, &cfg.analysis));
    let embed = hash_of(&("embed", &attack, &cfg.embed));
    let report = hash_of(&("report", &analyze, &attack));
    BTreeMap::from([
        (Stage::Train, train),
        (Stage::Attack, attack),
        (Stage::Analyze, analyze),
        (Stage::Embed, embed),
        (Stage::Report, report),
    ])
}

pub struct Runner {
    cfg: RunConfig,
    out: PathBuf,
    hashes: BTreeMap<Stage, String>,
    ledger: BTreeMap<String, String>,
    data: Option<(LabeledImages, LabeledImages)>,
    log: bool,
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::runtime(format!("{}: {e}", path.display()))
}

fn rt<E: ToString>(e: E) -> CliError {
    CliError::runtime(e)
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io(parent))?;
    }
    std::fs::write(path, bytes).map_err(io(path))
}

/// Inserts a `config_hash` comment after the XML declaration.
fn stamp_svg(svg: &str, hash: &str) -> String {
    match svg.split_once('\n') {
        Some((decl, rest)) => format!("{decl}\n<!-- config_hash={hash} -->\n{rest}"),
        None => svg.to_string(),
    }
}

impl Runner {
    pub fn new(cfg: RunConfig) -> Result<Self, CliError> {
        let out = cfg.out.clone();
        let hashes = stage_hashes(&cfg);
        let ledger_path = out.join("stage.json");
        let ledger = match std::fs::read(&ledger_path) {
            Ok(bytes) => serde_json::from_slice(&bytes).unwrap_or_default(),
            Err(_) => BTreeMap::new(),
        };
        Ok(Self {
            cfg,
            out,
            hashes,
            ledger,
            data: None,
            log: true,
        })
    }

    pub fn quiet(mut self) -> Self {
        self.log = false;
        self
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    pub fn hash(&self, stage: Stage) -> &str {
        &self.hashes[&stage]
    }

    fn note(&self, msg: impl AsRef<str>) {
        if self.log {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn preamble(&self, stage: Stage) -> Vec<String> {
        vec![
            format!("config_hash={}", self.hash(stage)),
            format!("network={}", self.cfg.network.id()),
            format!("seed={}", self.cfg.seed),
        ]
    }

    fn corpus_path(&self, kind: AttackKind) -> PathBuf {
        self.out.join("corpora").join(format!("{kind}.advc"))
    }

    fn outputs(&self, stage: Stage) -> Vec<PathBuf> {
        let o = &self.out;
        match stage {
            Stage::Train => vec![
                o.join("model.bin"),
                o.join("train/metrics.csv"),
                o.join("train/accuracy.csv"),
                o.join("train/timing.json"),
            ],
            Stage::Attack => self.cfg.corpus.kinds.iter().map(|&k| self.corpus_path(k)).collect(),
            Stage::Analyze => ["profile", "knn-ratio", "manifold", "snn", "pairs"]
                .iter()
                .map(|n| o.join("analysis").join(format!("{n}.csv")))
                .collect(),
            Stage::Embed => vec![o.join("embed/layer0.csv")],
            Stage::Report => vec![o.join("report/norms.csv")],
        }
    }

    fn is_current(&self, stage: Stage) -> bool {
        self.ledger.get(stage.name()) == Some(&self.hashes[&stage]) && self.outputs(stage).iter().all(|p| p.exists())
    }

    /// Fails with a missing-input error unless `stage` completed under the current configuration.
    fn require(&self, stage: Stage) -> Result<(), CliError> {
        if self.is_current(stage) {
            return Ok(());
        }
        let path = self.outputs(stage).into_iter().next().unwrap_or_else(|| self.out.clone());
        Err(CliError::missing(
            &path,
            format!("outputs of stage `{}` are absent or stale; run it first", stage.name()),
        ))
    }

    fn record(&mut self, stage: Stage, done: bool) -> Result<(), CliError> {
        if done {
            self.ledger.insert(stage.name().into(), self.hashes[&stage].clone());
        } else {
            self.ledger.remove(stage.name());
        }
        let json = serde_json::to_string_pretty(&self.ledger).expect("ledger serialises");
        write_file(&self.out.join("stage.json"), json + "\n")
    }

    /// Runs `stage`; with `resume`, a stage whose hash and outputs are current is skipped.
    pub fn run(&mut self, stage: Stage, resume: bool) -> Result<Outcome, CliError> {
        if resume && self.is_current(stage) {
            self.note(format!("{}: up to date", stage.name()));
            return Ok(Outcome::Skipped);
        }
        let start = Instant::now();
        self.record(stage, false)?;
        match stage {
            Stage::Train => self.train()?,
            Stage::Attack => self.attack()?,
            Stage::Analyze => self.analyze()?,
            Stage::Embed => self.embed()?,
            Stage::Report => self.report()?,
        }
        self.record(stage, true)?;
        self.note(format!("{}: done in {:.1}s", stage.name(), start.elapsed().as_secs_f64()));
        Ok(Outcome::Ran)
    }

    pub fn pipeline(&mut self) -> Result<Vec<(Stage, Outcome)>, CliError> {
        Stage::ALL.iter().map(|&s| self.run(s, true).map(|o| (s, o))).collect()
    }

    fn data(&mut self) -> Result<&(LabeledImages, LabeledImages), CliError> {
        if self.data.is_none() {
            let dir = &self.cfg.data.dir;
            let load_err = |e: advmap_core::data::DataError| match e {
                advmap_core::data::DataError::Io { path, message } => CliError::missing(Path::new(&path), message),
                other => CliError::runtime(other),
            };
            let (train_set, test) = match self.cfg.data.format {
                DataFormat::Mnist => (
                    load_idx_pair(
                        &dir.join("train-images-idx3-ubyte"),
                        &dir.join("train-labels-idx1-ubyte"),
                        Split::Train,
                    )
                    .map_err(load_err)?,
                    load_idx_pair(&dir.join("t10k-images-idx3-ubyte"), &dir.join("t10k-labels-idx1-ubyte"), Split::Test)
                        .map_err(load_err)?,
                ),
                DataFormat::Cifar => {
                    let batches: Vec<PathBuf> = (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect();
                    (
                        load_cifar_batches(&batches, Split::Train).map_err(load_err)?,
                        load_cifar_batches(&[dir.join("test_batch.bin")], Split::Test).map_err(load_err)?,
                    )
                }
            };
            let train_set = match self.cfg.data.train_limit {
                0 => train_set,
                n => train_set.head(n),
            };
            self.data = Some((train_set, test));
        }
        Ok(self.data.as_ref().expect("loaded above"))
    }

    fn model(&self) -> Result<Model, CliError> {
        self.require(Stage::Train)?;
        let path = self.out.join("model.bin");
        let bytes = std::fs::read(&path).map_err(|e| CliError::missing(&path, e))?;
        deserialize_model(&bytes).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
    }

    fn corpus(&self, kind: AttackKind) -> Result<Corpus, CliError> {
        let path = self.corpus_path(kind);
        read_corpus(&path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
    }

    fn train(&mut self) -> Result<(), CliError> {
        let mut tc = self.cfg.train.clone();
        tc.seed = stage_seed(self.cfg.seed, "train");
        let layers = self.cfg.network.layers();
        let (train_set, test) = self.data()?;
        let start = Instant::now();
        let (model, metrics) = train(&layers, train_set, &tc).map_err(CliError::runtime)?;
        let seconds = start.elapsed().as_secs_f64();
        let accuracy = evaluate(&model, test).map_err(CliError::runtime)?;
        let test_count = test.len();
        let hash = self.hash(Stage::Train).to_string();
        write_file(&self.out.join("model.bin"), serialize_model_tagged(&model, &format!("config_hash={hash}")))?;
        let mut text: String = self.preamble(Stage::Train).iter().map(|l| format!("# {l}\n")).collect();
        let mut acc_text = text.clone();
        text.push_str("epoch,loss,train_accuracy\n");
        for m in &metrics {
            text.push_str(&format!(
                "{},{},{}\n",
                m.epoch,
                format_value(m.loss),
                format_value(m.train_accuracy)
            ));
        }
        write_file(&self.out.join("train/metrics.csv"), text)?;
        acc_text.push_str(&format!(
            "network,test_accuracy,test_count\n{},{},{test_count}\n",
            self.cfg.network.id(),
            format_value(accuracy)
        ));
        write_file(&self.out.join("train/accuracy.csv"), acc_text)?;
        // wall time is not reproducible, so it stays out of the CSV outputs
        write_file(&self.out.join("train/timing.json"), format!("{{\"seconds\":{seconds:.3}}}\n"))?;
        self.note(format!("train: test accuracy {:.4}", accuracy));
        Ok(())
    }

    fn attack(&mut self) -> Result<(), CliError> {
        let model = self.model()?;
        let mut acfg = self.cfg.attacks.clone();
        acfg.seed = stage_seed(self.cfg.seed, "attack");
        let kinds = self.cfg.corpus.kinds.clone();
        let (inputs, rubbish) = (self.cfg.corpus.inputs, self.cfg.corpus.rubbish);
        let network = self.cfg.network.id();
        let needs_pixels = kinds.contains(&AttackKind::RcDistrib);
        let dir = self.out.join("corpora");
        std::fs::create_dir_all(&dir).map_err(io(&dir))?;
        let (train_set, test) = self.data()?;
        let pixels = if needs_pixels { build_pixel_distribution(train_set) } else { None };
        let mut paths = Vec::new();
        for &kind in &kinds {
            let start = Instant::now();
            let req = CorpusRequest {
                network,
                kind,
                inputs: test,
                limit: if kind.is_rubbish() { rubbish } else { inputs },
                pixels: pixels.as_ref(),
            };
            let corpus = generate_corpus(&model, req, &acfg).map_err(CliError::runtime)?;
            let ok = corpus.successful().count();
            let path = dir.join(format!("{kind}.advc"));
            write_corpus(&path, &corpus).map_err(CliError::runtime)?;
            paths.push((kind, ok, corpus.records.len(), start.elapsed()));
        }
        for (kind, ok, total, t) in paths {
            self.note(format!("attack: {kind} {ok}/{total} successful ({:.1}s)", t.as_secs_f64()));
        }
        Ok(())
    }

    fn analyze(&mut self) -> Result<(), CliError> {
        self.require(Stage::Attack)?;
        let model = self.model()?;
        let a = self.cfg.analysis.clone();
        let seed = self.cfg.seed;
        let network = self.cfg.network.id().to_string();
        let kinds = self.cfg.corpus.kinds.clone();
        let (train_set, test) = self.data()?;
        let reference = train_set.head(a.reference_limit.min(train_set.len()));
        let clean_set = test.head(a.clean_limit.min(test.len()));
        let dims = model.trace_dims();
        let labels = reference.labels().to_vec();

        let train_layers = capture_dataset(&model, reference.images(), reference.len()).map_err(rt)?;
        let indices: Vec<LayerIndex> = train_layers
            .into_iter()
            .enumerate()
            .map(|(l, rows)| LayerIndex::new(l, dims[l], Arc::new(rows), labels.clone()))
            .collect::<Result<_, _>>()
            .map_err(rt)?;
        let image_index = LayerIndex::new(
            usize::MAX,
            reference.image_len(),
            Arc::new(reference.images().to_vec()),
            labels,
        )
        .map_err(rt)?;
        let clean = capture_dataset(&model, clean_set.images(), clean_set.len()).map_err(rt)?;

        let mut profile = Vec::new();
        let mut ratios = Vec::new();
        let mut manifold = Vec::new();
        let mut snn = Vec::new();
        let mut pair_rows = String::from("attack,C_o,C_p,count,queries\n");
        let series = |analysis: &str, kind: AttackKind, pair: Option<(u8, u8)>, values: Vec<f64>, counts: Vec<usize>| {
            AnalysisSeries {
                network: network.clone(),
                analysis: analysis.into(),
                attack: kind.to_string(),
                original: pair.map(|p| p.0),
                predicted: pair.map(|p| p.1),
                values,
                counts,
            }
        };
        let layers = dims.len();
        for &kind in &kinds {
            let corpus = self.corpus(kind)?;
            let ok: Vec<&AdversarialRecord> = corpus.successful().collect();
            if ok.is_empty() {
                self.note(format!("analyze: {kind} has no successful records"));
                continue;
            }
            if !kind.is_rubbish() {
                let pairs = select_confused_pairs(&corpus.manifest, a.min_pair_count);
                for pair in pairs.into_iter().take(a.max_pairs) {
                    let (c_o, c_p) = (pair.original, pair.predicted);
                    let recs: Vec<AdversarialRecord> = ok
                        .iter()
                        .filter(|r| r.original_class == Some(c_o) && r.predicted_class == c_p)
                        .take(a.queries_per_pair)
                        .map(|r| (*r).clone())
                        .collect();
                    let n = recs.len();
                    pair_rows.push_str(&format!("{kind},{c_o},{c_p},{},{n}\n", pair.count));
                    let adv = traces(&model, recs.iter().map(|r| r.adversarial.as_slice()), &dims)?;
                    let queries = rows_by_layer(&adv, &dims, n);
                    let p = Some((c_o, c_p));
                    let r = knn_ratio(&queries, &indices, c_o, c_p, a.knn_k).map_err(rt)?;
                    ratios.push(series("knn-ratio", kind, p, r, vec![n; layers]));
                    let m = layerwise_manifold_distance(&queries, &indices, &image_index, c_o, c_p, a.hull_k)
                        .map_err(rt)?;
                    let queries_used = vec![n; layers];
                    manifold.push(series("manifold-original", kind, p, m.to_original, m.counts.clone()));
                    manifold.push(series("manifold-predicted", kind, p, m.to_predicted, m.counts));
                    let skipped = m.skipped.iter().map(|&s| s as f64).collect();
                    manifold.push(series("manifold-skipped", kind, p, skipped, queries_used));

                    let triples = make_triples(&recs, stage_seed(seed, "triples"));
                    let t = triples.len();
                    for (member, images) in [
                        ("o", triples.iter().map(|t| t.original.as_slice()).collect::<Vec<_>>()),
                        ("a", triples.iter().map(|t| t.adversarial.as_slice()).collect()),
                        ("r", triples.iter().map(|t| t.noise.as_slice()).collect()),
                    ] {
                        let tr = traces(&model, images.into_iter(), &dims)?;
                        let q = rows_by_layer(&tr, &dims, t);
                        let prof = class_distance_profile(&q, &indices, c_o, c_p).map_err(rt)?;
                        for (g, group) in ["co", "cp", "rest"].iter().enumerate() {
                            let values = prof.iter().map(|v| v[g]).collect();
                            profile.push(series(&format!("profile-{member}-{group}"), kind, p, values, vec![t; layers]));
                        }
                    }
                }
            }
            let mal = traces(&model, ok.iter().map(|r| r.adversarial.as_slice()), &dims)?;
            let mal_refs: Vec<&[f32]> = mal.iter().map(Vec::as_slice).collect();
            let clean_refs: Vec<&[f32]> = clean.iter().map(Vec::as_slice).collect();
            match entanglement(&mal_refs, &clean_refs, &dims, &a.snn, stage_seed(seed, "snn")) {
                Ok(per_layer) => {
                    let (values, counts) = per_layer.into_iter().unzip();
                    snn.push(series("snn", kind, None, values, counts));
                }
                Err(e) => self.note(format!("analyze: snn for {kind} skipped: {e}")),
            }
        }
        let dir = self.out.join("analysis");
        std::fs::create_dir_all(&dir).map_err(io(&dir))?;
        let pre = self.preamble(Stage::Analyze);
        for (name, s) in [("profile", &profile), ("knn-ratio", &ratios), ("manifold", &manifold), ("snn", &snn)] {
            write_series_csv(&dir.join(format!("{name}.csv")), &pre, s).map_err(rt)?;
        }
        let head: String = pre.iter().map(|l| format!("# {l}\n")).collect();
        write_file(&dir.join("pairs.csv"), head + &pair_rows)
    }

    fn embed(&mut self) -> Result<(), CliError> {
        self.require(Stage::Attack)?;
        let model = self.model()?;
        let e = self.cfg.embed.clone();
        let kinds = self.cfg.corpus.kinds.clone();
        let dims = model.trace_dims();
        let mut ids = Vec::new();
        let mut tags = Vec::new();
        let mut images: Vec<f32> = Vec::new();
        {
            let (_, test) = self.data()?;
            let n = e.per_source.min(test.len());
            images.extend_from_slice(&test.images()[..n * test.image_len()]);
            ids.extend((0..n).map(|i| format!("test:{i}")));
            tags.extend(std::iter::repeat_n("test".to_string(), n));
        }
        for &kind in &kinds {
            let corpus = self.corpus(kind)?;
            for r in corpus.successful().take(e.per_source) {
                images.extend_from_slice(&r.adversarial);
                ids.push(format!("{kind}:{}", r.index));
                tags.push(kind.to_string());
            }
        }
        let n = ids.len();
        let layers = capture_dataset(&model, &images, n).map_err(CliError::runtime)?;
        let dir = self.out.join("embed");
        let hash = self.hash(Stage::Embed).to_string();
        let pre: String = self.preamble(Stage::Embed).iter().map(|l| format!("# {l}\n")).collect();
        for (l, rows) in layers.iter().enumerate() {
            let emb: Embedding2D = match e.method {
                EmbedMethod::Pca => {
                    let vectors: Vec<&[f32]> = rows.chunks(dims[l]).collect();
                    embed_pca(l, &vectors, &tags).map_err(|err| CliError::runtime(format!("layer {l}: {err}")))?
                }
                EmbedMethod::Import => {
                    let path = e.import_dir.as_ref().expect("validated").join(format!("layer{l}.csv"));
                    if !path.exists() {
                        return Err(CliError::missing(&path, "no imported coordinates for this layer"));
                    }
                    import_embedding_csv(&path, l, &ids, &tags).map_err(CliError::runtime)?
                }
            };
            if emb.degenerate {
                self.note(format!("embed: layer {l} has rank-zero activations"));
            }
            let mut text = pre.clone();
            text.push_str(&format!("# method={}\nid,tag,x,y\n", emb.method));
            for ((id, tag), p) in ids.iter().zip(&emb.tags).zip(&emb.points) {
                text.push_str(&format!("{id},{tag},{},{}\n", format_value(p[0]), format_value(p[1])));
            }
            write_file(&dir.join(format!("layer{l}.csv")), text)?;
            let title = format!("{} layer {l} ({})", self.cfg.network.id(), emb.method);
            write_file(&dir.join(format!("layer{l}.svg")), stamp_svg(&scatter_svg(&emb, &title), &hash))?;
        }
        Ok(())
    }

    fn report(&mut self) -> Result<(), CliError> {
        self.require(Stage::Attack)?;
        self.require(Stage::Analyze)?;
        let corpora: Vec<Corpus> = self
            .cfg
            .corpus
            .kinds
            .iter()
            .map(|&k| self.corpus(k))
            .collect::<Result<_, _>>()?;
        let manifests: Vec<&CorpusManifest> = corpora.iter().map(|c| &c.manifest).collect();
        let mut series = Vec::new();
        for name in ["profile", "knn-ratio", "manifold", "snn"] {
            let path = self.out.join("analysis").join(format!("{name}.csv"));
            series.extend(read_series_csv(&path).map_err(CliError::runtime)?);
        }
        let dir = self.out.join("report");
        let pre = self.preamble(Stage::Report);
        let written = emit_tables(&dir, &pre, &manifests, &series).map_err(CliError::runtime)?;
        let hash = self.hash(Stage::Report).to_string();
        for name in written.iter().filter(|n| n.ends_with(".svg")) {
            let path = dir.join(name);
            let svg = std::fs::read_to_string(&path).map_err(io(&path))?;
            write_file(&path, stamp_svg(&svg, &hash))?;
        }
        if self.log {
            let table = std::fs::read_to_string(dir.join("norms.csv")).map_err(io(&dir))?;
            for line in table.lines().filter(|l| !l.starts_with('#')) {
                println!("{line}");
            }
        }
        Ok(())
    }
}

/// Captured activations of `images`, one row-major matrix per layer.
fn traces<'a>(model: &Model, images: impl Iterator<Item = &'a [f32]>, dims: &[usize]) -> Result<Vec<Vec<f32>>, CliError> {
    let mut flat = Vec::new();
    let mut n = 0;
    for x in images {
        flat.extend_from_slice(x);
        n += 1;
    }
    if n == 0 {
        return Ok(dims.iter().map(|_| Vec::new()).collect());
    }
    capture_dataset(model, &flat, n).map_err(CliError::runtime)
}

fn rows_by_layer<'a>(layers: &'a [Vec<f32>], dims: &[usize], n: usize) -> Vec<Vec<&'a [f32]>> {
    layers
        .iter()
        .zip(dims)
        .map(|(m, &d)| (0..n).map(|i| &m[i * d..(i + 1) * d]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashes_chain_downstream_only() {
        let base = RunConfig::default();
        let h0 = stage_hashes(&base);
        let mut c = base.clone();
        c.embed.per_source = 7;
        let h1 = stage_hashes(&c);
        assert_eq!(h0[&Stage::Train], h1[&Stage::Train]);
        assert_eq!(h0[&Stage::Analyze], h1[&Stage::Analyze]);
        assert_ne!(h0[&Stage::Embed], h1[&Stage::Embed]);
        c.train.epochs = 1;
        let h2 = stage_hashes(&c);
        assert!(Stage::ALL.iter().all(|s| h2[s] != h0[s]));
        let mut moved = base.clone();
        moved.out = PathBuf::from("elsewhere");
        assert_eq!(stage_hashes(&moved), h0);
    }

    #[test]
    fn svg_stamp_follows_declaration() {
        let s = stamp_svg("<?xml version=\"1.0\"?>\n<svg></svg>\n", "ab");
        assert_eq!(s, "<?xml version=\"1.0\"?>\n<!-- config_hash=ab -->\n<svg></svg>\n");
    }
}
