use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use vaps_core::corpus::{load_corpus, write_events_jsonl, write_items_jsonl, Corpus};
use vaps_core::datagen::{generate, write_oracle_jsonl};
use vaps_core::eval::{evaluate, format_table, Bm25, MetricReport, RandomScorer, Split};
use vaps_core::index::{build_index, InvertedIndex};
use vaps_core::linkage::{build_linkage, LinkageTable};
use vaps_core::value::{assess_corpus, fit_buckets, summary_histogram, write_values_jsonl, ValueContext, ValueReport};
use vaps_model::{
    build_inputs, recent_selections, selections_from_reports, train, EpochLog, Lookup, ModelConfig, ModelMeta,
    ModelScorer, Selections, ValidSet, Vaps, Vocabulary,
};
use vaps_tensor::{load_checkpoint, save_checkpoint};

use crate::{sha256_file, sha256_hex, Manifest, PipelineError, RunConfig, ScorerKind, Selection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Datagen,
    Ingest,
    Index,
    Link,
    Assess,
    Train,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Datagen,
        Stage::Ingest,
        Stage::Index,
        Stage::Link,
        Stage::Assess,
        Stage::Train,
        Stage::Eval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Datagen => "datagen",
            Stage::Ingest => "ingest",
            Stage::Index => "index",
            Stage::Link => "link",
            Stage::Assess => "assess",
            Stage::Train => "train",
            Stage::Eval => "eval",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

/// Resolved artifact locations.
#[derive(Debug, Clone)]
pub struct Paths {
    pub out: PathBuf,
    pub items: PathBuf,
    pub events: PathBuf,
    pub oracle: PathBuf,
    pub corpus_items: PathBuf,
    pub corpus_events: PathBuf,
    pub index: PathBuf,
    pub linkage: PathBuf,
    pub values: PathBuf,
    pub values_summary: PathBuf,
    pub checkpoint: PathBuf,
    pub model_meta: PathBuf,
    pub train_log: PathBuf,
    pub metrics: PathBuf,
    pub metrics_table: PathBuf,
    pub manifests: PathBuf,
}

impl Paths {
    pub fn new(cfg: &RunConfig, out: &Path) -> Self {
        let at = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { out.join(p) };
        let items = at(&cfg.items_path);
        let corpus = at(&cfg.corpus_dir);
        let model = at(&cfg.model_dir);
        let reports = at(&cfg.reports_dir);
        Self {
            out: out.to_path_buf(),
            oracle: items.with_file_name("oracle.jsonl"),
            items,
            events: at(&cfg.events_path),
            corpus_items: corpus.join("items.jsonl"),
            corpus_events: corpus.join("events.jsonl"),
            index: at(&cfg.index_path),
            linkage: at(&cfg.linkage_path),
            values_summary: at(&cfg.values_path).with_extension("summary.txt"),
            values: at(&cfg.values_path),
            checkpoint: model.join("model.ckpt"),
            model_meta: model.join("model_config.json"),
            train_log: model.join("train_log.csv"),
            metrics: reports.join("metrics.json"),
            metrics_table: reports.join("metrics.txt"),
            manifests: out.join("manifests"),
        }
    }
}

/// What a stage produced, for printing.
#[derive(Debug, Clone)]
pub struct StageOutput {
    pub manifest: Manifest,
    pub summary: String,
}

fn io_err(path: &Path, e: impl fmt::Display) -> PipelineError {
    PipelineError::Io(format!("{}: {e}", path.display()))
}

fn require(path: &Path, stage: &'static str) -> Result<(), PipelineError> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::Missing {
            path: path.to_path_buf(),
            stage,
        })
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn write_with(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), PipelineError> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>, PipelineError> {
    File::open(path).map(BufReader::new).map_err(|e| io_err(path, e))
}

fn load_ingested(p: &Paths) -> Result<Corpus, PipelineError> {
    require(&p.corpus_items, "ingest")?;
    require(&p.corpus_events, "ingest")?;
    load_corpus(&p.corpus_items, &p.corpus_events).map_err(|e| PipelineError::Data(e.to_string()))
}

fn load_linkage(p: &Paths) -> Result<LinkageTable, PipelineError> {
    require(&p.linkage, "link")?;
    LinkageTable::read_jsonl(open(&p.linkage)?).map_err(|e| PipelineError::Data(e.to_string()))
}

fn load_values(p: &Paths) -> Result<Vec<ValueReport>, PipelineError> {
    require(&p.values, "assess")?;
    let text = fs::read_to_string(&p.values).map_err(|e| io_err(&p.values, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| PipelineError::Data(format!("{}:{}: {e}", p.values.display(), i + 1)))
        })
        .collect()
}

fn selections(cfg: &RunConfig, p: &Paths, corpus: &Corpus) -> Result<Selections, PipelineError> {
    Ok(match cfg.selection {
        Selection::Value => selections_from_reports(&load_values(p)?, cfg.l_seq),
        Selection::Recent => recent_selections(corpus, cfg.l_seq),
    })
}

fn data<E: fmt::Display>(e: E) -> PipelineError {
    PipelineError::Data(e.to_string())
}

/// Runs one stage against `out` and writes its manifest.
pub fn run_stage(stage: Stage, cfg: &RunConfig, out: &Path) -> Result<StageOutput, PipelineError> {
    cfg.validate()?;
    let start = Instant::now();
    let p = Paths::new(cfg, out);
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let (inputs, outputs, summary): (Vec<&Path>, Vec<&Path>, String) = match stage {
        Stage::Datagen => {
            let g = generate(&cfg.gen_spec()).map_err(|e| PipelineError::Config(vec![e.to_string()]))?;
            write_with(&p.items, |w| write_items_jsonl(&g.corpus, w))?;
            write_with(&p.events, |w| write_events_jsonl(&g.corpus, w))?;
            write_with(&p.oracle, |w| write_oracle_jsonl(&g.oracle, w))?;
            let summary = format!(
                "{} items, {} users, {} oracle labels",
                g.corpus.items.len(),
                g.corpus.users.len(),
                g.oracle.len()
            );
            (vec![], vec![&p.items, &p.events, &p.oracle], summary)
        }
        Stage::Ingest => {
            require(&p.items, "datagen")?;
            require(&p.events, "datagen")?;
            let corpus = load_corpus(&p.items, &p.events).map_err(data)?;
            write_with(&p.corpus_items, |w| write_items_jsonl(&corpus, w))?;
            write_with(&p.corpus_events, |w| write_events_jsonl(&corpus, w))?;
            let searches: usize = corpus.users.values().map(|h| h.searches.len()).sum();
            let summary = format!("{} items, {} users, {searches} searches", corpus.items.len(), corpus.users.len());
            (vec![&p.items, &p.events], vec![&p.corpus_items, &p.corpus_events], summary)
        }
        Stage::Index => {
            let corpus = load_ingested(&p)?;
            let index = build_index(&corpus);
            write_with(&p.index, |w| index.write_jsonl(w))?;
            (
                vec![&p.corpus_items, &p.corpus_events],
                vec![&p.index],
                format!("{} terms", index.len()),
            )
        }
        Stage::Link => {
            let corpus = load_ingested(&p)?;
            let table = build_linkage(&corpus, cfg.linkage_params()).map_err(data)?;
            write_with(&p.linkage, |w| table.write_jsonl(w))?;
            let summary = format!(
                "{} linked consultations, {} links",
                table.consultation_count(),
                table.link_count()
            );
            (vec![&p.corpus_items, &p.corpus_events], vec![&p.linkage], summary)
        }
        Stage::Assess => {
            let corpus = load_ingested(&p)?;
            require(&p.index, "index")?;
            let linkage = load_linkage(&p)?;
            let index = InvertedIndex::read_jsonl(open(&p.index)?).map_err(PipelineError::Data)?;
            let buckets = fit_buckets(&linkage);
            let ctx = ValueContext {
                index: &index,
                linkage: &linkage,
                buckets: &buckets,
                scope: cfg.scope_params(),
                params: cfg.value_params(),
            };
            let reports = assess_corpus(&corpus, &ctx).map_err(data)?;
            write_with(&p.values, |w| write_values_jsonl(&reports, w))?;
            let hist = summary_histogram(&reports);
            write_with(&p.values_summary, |w| w.write_all(hist.as_bytes()))?;
            (
                vec![&p.corpus_items, &p.corpus_events, &p.index, &p.linkage],
                vec![&p.values, &p.values_summary],
                hist,
            )
        }
        Stage::Train => {
            let corpus = load_ingested(&p)?;
            let linkage = load_linkage(&p)?;
            let sel = selections(cfg, &p, &corpus)?;
            let vocab = Vocabulary::build(&corpus);
            let lookup = Lookup::build(&corpus);
            let mconf = ModelConfig {
                vocab_size: vocab.len(),
                n_items: lookup.items().len(),
                n_users: lookup.users().len(),
                ..cfg.model_config()
            };
            let model = Vaps::init(mconf).map_err(|e| PipelineError::Config(vec![e.to_string()]))?;
            let train_set =
                build_inputs(&corpus, Split::Train, &sel, Some(&linkage), &vocab, &lookup, &model).map_err(data)?;
            let valid = ValidSet::build(&corpus, &sel, &vocab, &lookup, &model, cfg.valid_n_neg, cfg.seed).map_err(data)?;
            let mut log = create(&p.train_log)?;
            writeln!(log, "{}", EpochLog::CSV_HEADER).map_err(|e| io_err(&p.train_log, e))?;
            let mut write_err = None;
            let outcome = train(model, &train_set, &valid, &cfg.train_config(), |e| {
                if let Err(err) = writeln!(log, "{}", e.csv_row()) {
                    write_err.get_or_insert(err);
                }
            })
            .map_err(data)?;
            if let Some(e) = write_err {
                return Err(io_err(&p.train_log, e));
            }
            log.flush().map_err(|e| io_err(&p.train_log, e))?;
            save_checkpoint(&outcome.model.store, &p.checkpoint).map_err(|e| io_err(&p.checkpoint, e))?;
            ModelMeta::new(outcome.model.config.clone(), &vocab, &lookup)
                .save(&p.model_meta)
                .map_err(|e| io_err(&p.model_meta, e))?;
            let summary = format!(
                "{} training sessions, {} epochs, best epoch {}",
                train_set.len(),
                outcome.log.len(),
                outcome.best_epoch
            );
            let mut inputs: Vec<&Path> = vec![&p.corpus_items, &p.corpus_events, &p.linkage];
            if cfg.selection == Selection::Value {
                inputs.push(&p.values);
            }
            (inputs, vec![&p.checkpoint, &p.model_meta, &p.train_log], summary)
        }
        Stage::Eval => {
            let corpus = load_ingested(&p)?;
            let protocol = cfg.protocol();
            let mut inputs: Vec<&Path> = vec![&p.corpus_items, &p.corpus_events];
            let report: MetricReport = match cfg.eval_scorer {
                ScorerKind::Bm25 => evaluate(&Bm25::new(&corpus), &corpus, cfg.eval_split, protocol, cfg.seed),
                ScorerKind::Random => evaluate(&RandomScorer { seed: cfg.seed }, &corpus, cfg.eval_split, protocol, cfg.seed),
                ScorerKind::Model => {
                    require(&p.checkpoint, "train")?;
                    require(&p.model_meta, "train")?;
                    let sel = selections(cfg, &p, &corpus)?;
                    let meta = ModelMeta::load(&p.model_meta).map_err(data)?;
                    let store = load_checkpoint(&p.checkpoint).map_err(data)?;
                    let model = Vaps::from_store(meta.config.clone(), store).map_err(data)?;
                    let (vocab, lookup) = (meta.vocabulary(), meta.lookup());
                    let scorer = ModelScorer {
                        model: &model,
                        vocab: &vocab,
                        lookup: &lookup,
                        selections: &sel,
                    };
                    inputs.extend([p.checkpoint.as_path(), p.model_meta.as_path()]);
                    if cfg.selection == Selection::Value {
                        inputs.push(&p.values);
                    }
                    evaluate(&scorer, &corpus, cfg.eval_split, protocol, cfg.seed)
                }
            }
            .map_err(data)?;
            let json = serde_json::to_string_pretty(&report).map_err(data)?;
            write_with(&p.metrics, |w| writeln!(w, "{json}"))?;
            let label = match cfg.eval_scorer {
                ScorerKind::Model => "model",
                ScorerKind::Bm25 => "bm25",
                ScorerKind::Random => "random",
            };
            let table = format_table(&[(label.to_string(), &report)]);
            write_with(&p.metrics_table, |w| w.write_all(table.as_bytes()))?;
            (inputs, vec![&p.metrics, &p.metrics_table], table)
        }
    };

    let hashes = |paths: &[&Path]| -> Result<BTreeMap<String, String>, PipelineError> {
        paths
            .iter()
            .map(|path| Ok((path.display().to_string(), sha256_file(path)?)))
            .collect()
    };
    let manifest = Manifest {
        stage: stage.name().to_string(),
        seed: cfg.seed,
        config_sha256: sha256_hex(cfg.to_toml().as_bytes()),
        inputs: hashes(&inputs)?,
        outputs: hashes(&outputs)?,
        elapsed_secs: start.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(data)?;
    write_with(&p.manifests.join(format!("{}.json", stage.name())), |w| writeln!(w, "{json}"))?;
    Ok(StageOutput { manifest, summary })
}
