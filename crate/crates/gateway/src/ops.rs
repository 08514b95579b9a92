//! Pipeline operations shared by the CLI and the HTTP service.

use std::io::BufReader;
use std::path::{Path, PathBuf};

use notebar_core::eval::plot::write_sensitivity_svgs;
use notebar_core::eval::split::stratified_split;
use notebar_core::eval::{
    evaluate_provider, run_native_sweep, run_split_eval, MetricsReport, SplitEvalOutcome, SplitSpec, SweepGrid,
    SweepResult,
};
use notebar_core::forge::corpus::labeled_notes;
use notebar_core::forge::generate::{generate_corpus, GenerationConfig, GenerationMode};
use notebar_core::forge::ingest::{ingest_dataset, ingest_str, load_mapping, FieldMapping, IngestError};
use notebar_core::forge::profile::default_profiles;
use notebar_core::forge::qa::{qa_corpus, OutcomeCounts, QaConfig};
use notebar_core::forge::{corpus_stats, Corpus, CorpusStats, StubClient, TextClient};
use notebar_core::note::{parse_note, NoteId};
use notebar_core::router::backbone::{BackboneProvider, ExternalProbabilities, NativeBackbone};
use notebar_core::router::features::FeatureSpec;
use notebar_core::router::model::{load_model, RouterModel};
use notebar_core::router::train::HyperParams;
use notebar_core::{KindScores, LabelSet, Note, Persona};
use serde::{Deserialize, Serialize};

/// A failure with a stable machine-readable code.
#[derive(Debug, Clone, PartialEq, Serialize, thiserror::Error)]
#[error("{code}: {message}")]
pub struct OpError {
    pub code: &'static str,
    pub message: String,
    /// Structured error from the failing module, when it has one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

impl OpError {
    pub fn new(code: &'static str, message: impl std::fmt::Display) -> Self {
        OpError {
            code,
            message: message.to_string(),
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: impl Serialize) -> Self {
        self.detail = serde_json::to_value(detail).ok();
        self
    }
}

pub type OpResult<T> = Result<T, OpError>;

pub fn mapping_or_default(path: Option<&Path>) -> OpResult<FieldMapping> {
    match path {
        Some(p) => load_mapping(p).map_err(|e| OpError::new("mapping", e)),
        None => Ok(FieldMapping::default()),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Loaded {
    #[serde(skip)]
    pub corpus: Corpus,
    pub records: usize,
    pub errors: Vec<IngestError>,
}

/// Read a corpus file through the field mapping; with the default mapping
/// this also reads the crate's own corpus format.
pub fn load_dataset(path: &Path, mapping: Option<&Path>) -> OpResult<Loaded> {
    let mapping = mapping_or_default(mapping)?;
    let out = ingest_dataset(path, &mapping).map_err(|e| OpError::new("ingest", e))?;
    Ok(Loaded {
        records: out.corpus.len(),
        corpus: out.corpus,
        errors: out.errors,
    })
}

pub fn load_dataset_str(text: &str, mapping: &FieldMapping) -> OpResult<Loaded> {
    let out = ingest_str(text, mapping).map_err(|e| OpError::new("ingest", e))?;
    Ok(Loaded {
        records: out.corpus.len(),
        corpus: out.corpus,
        errors: out.errors,
    })
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateRequest {
    pub seed: u64,
    /// Inclusive notes-per-persona range; the generator default when absent.
    pub notes_per_persona: Option<(usize, usize)>,
    pub personas: Option<Vec<Persona>>,
    pub inconsistency_rate: Option<f64>,
    /// Route through the configured text client instead of templates.
    pub use_client: bool,
    /// Leave concepts pending instead of running both QA stages.
    pub skip_qa: bool,
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub corpus: Corpus,
    pub qa: Option<QaSummary>,
}

/// Generate a corpus and, unless skipped, run QA on it with `client` or the
/// seeded stub.
pub fn generate(req: &GenerateRequest, client: Option<&dyn TextClient>) -> OpResult<Generated> {
    let mut cfg = GenerationConfig {
        seed: req.seed,
        ..GenerationConfig::default()
    };
    if let Some(n) = req.notes_per_persona {
        cfg.notes_per_persona = n;
    }
    if let Some(p) = &req.personas {
        cfg.personas = p.clone();
    }
    if let Some(r) = req.inconsistency_rate {
        cfg.inconsistency_rate = r;
    }
    if req.use_client {
        cfg.mode = GenerationMode::Client;
    }
    let mut corpus =
        generate_corpus(&default_profiles(req.seed), &cfg, client).map_err(|e| OpError::new("generate", e))?;
    if req.skip_qa {
        return Ok(Generated { corpus, qa: None });
    }
    let stub = StubClient::new(req.seed);
    let qa = run_qa(&mut corpus, Some(client.unwrap_or(&stub)), &QaConfig::default())?;
    Ok(Generated { corpus, qa: Some(qa) })
}

#[derive(Debug, Clone, Serialize)]
pub struct QaSummary {
    pub counts: OutcomeCounts,
    pub review_queue: usize,
    pub stats: CorpusStats,
}

pub fn run_qa(corpus: &mut Corpus, client: Option<&dyn TextClient>, cfg: &QaConfig) -> OpResult<QaSummary> {
    cfg.validate().map_err(|e| OpError::new("qa_config", e))?;
    let report = qa_corpus(corpus, client, cfg);
    Ok(QaSummary {
        counts: report.counts,
        review_queue: report.review_queue().count(),
        stats: corpus_stats(corpus),
    })
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainRequest {
    pub hyperparams: HyperParams,
    pub split: SplitSpec,
    pub features: FeatureSpec,
}

pub fn train_and_evaluate(corpus: &Corpus, req: &TrainRequest) -> OpResult<SplitEvalOutcome> {
    let data = labeled_notes(corpus);
    run_split_eval(&data, &req.split, &req.hyperparams, &req.features).map_err(|e| OpError::new("train", e))
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub split: &'static str,
    pub samples: usize,
    pub metrics: MetricsReport,
}

/// Score the test split of `corpus` with `model`, or with external
/// probabilities when given (thresholded by the model's thresholds, or 0.5
/// without a model).
pub fn evaluate(
    corpus: &Corpus,
    split: &SplitSpec,
    model: Option<&RouterModel>,
    external: Option<&ExternalProbabilities>,
) -> OpResult<EvalSummary> {
    let data = labeled_notes(corpus);
    let labels: Vec<LabelSet> = data.iter().map(|(_, l)| *l).collect();
    let s = stratified_split(&labels, split).map_err(|e| OpError::new("split", e))?;
    let zeros = RouterModel::zeros(FeatureSpec::default());
    let model_ref = model.unwrap_or(&zeros);
    let native = NativeBackbone { model: model_ref };
    let provider: &dyn BackboneProvider = match (external, model) {
        (Some(e), _) => e,
        (None, Some(_)) => &native,
        (None, None) => return Err(OpError::new("usage", "eval needs a model or a probability file")),
    };
    let test: Vec<(Note, LabelSet)> = s.test.iter().map(|i| data[*i].clone()).collect();
    let metrics = evaluate_provider(provider, model_ref, &test).map_err(|e| OpError::new("backbone", e))?;
    Ok(EvalSummary {
        split: "test",
        samples: test.len(),
        metrics,
    })
}

pub fn read_probabilities(path: &Path) -> OpResult<ExternalProbabilities> {
    let f = std::fs::File::open(path).map_err(|e| OpError::new("io", format!("{}: {e}", path.display())))?;
    ExternalProbabilities::read(BufReader::new(f)).map_err(|e| OpError::new("backbone", e))
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(untagged)]
pub enum GridChoice {
    Named(String),
    Custom(SweepGrid),
}

impl Default for GridChoice {
    fn default() -> Self {
        GridChoice::Named("default".into())
    }
}

/// `default` and `native` name the grid sized for the native router;
/// `transformer` names the transformer fine-tuning grid.
pub fn resolve_grid(choice: &GridChoice) -> OpResult<SweepGrid> {
    match choice {
        GridChoice::Named(n) if n == "default" || n == "native" => Ok(SweepGrid::native()),
        GridChoice::Named(n) if n == "transformer" => Ok(SweepGrid::transformer()),
        GridChoice::Named(n) => Err(OpError::new(
            "usage",
            format!("unknown grid {n:?}; use default, native or transformer"),
        )),
        GridChoice::Custom(g) => Ok(g.clone()),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub result: SweepResult,
    pub best: HyperParams,
    pub files: Vec<PathBuf>,
}

/// Train on the train split per configuration, select on validation, and
/// write `sweep.csv`, `sweep.json` and the sensitivity SVGs into `out_dir`.
pub fn sweep(
    corpus: &Corpus,
    grid: &SweepGrid,
    base: &HyperParams,
    split: &SplitSpec,
    features: &FeatureSpec,
    out_dir: Option<&Path>,
) -> OpResult<SweepSummary> {
    let data = labeled_notes(corpus);
    let labels: Vec<LabelSet> = data.iter().map(|(_, l)| *l).collect();
    let s = stratified_split(&labels, split).map_err(|e| OpError::new("split", e))?;
    let train: Vec<_> = s.train.iter().map(|i| data[*i].clone()).collect();
    let val: Vec<_> = s.val.iter().map(|i| data[*i].clone()).collect();
    let result = run_native_sweep(&train, &val, grid, base, features).map_err(|e| OpError::new("sweep", e))?;
    let mut files = Vec::new();
    if let Some(dir) = out_dir {
        files = write_sweep_outputs(&result, dir)?;
    }
    Ok(SweepSummary {
        best: result.best_point().hp.clone(),
        result,
        files,
    })
}

pub fn write_sweep_outputs(result: &SweepResult, dir: &Path) -> OpResult<Vec<PathBuf>> {
    let io = |e: std::io::Error| OpError::new("io", e);
    std::fs::create_dir_all(dir).map_err(io)?;
    let csv = dir.join("sweep.csv");
    std::fs::write(&csv, result.to_csv()).map_err(io)?;
    let json = dir.join("sweep.json");
    std::fs::write(
        &json,
        serde_json::to_vec_pretty(result).expect("sweep result serializes"),
    )
    .map_err(io)?;
    let mut files = vec![csv, json];
    files.extend(write_sensitivity_svgs(result, dir).map_err(|e| OpError::new("plot", e))?);
    Ok(files)
}

pub fn plot_from_json(results: &Path, dir: &Path) -> OpResult<Vec<PathBuf>> {
    let text =
        std::fs::read_to_string(results).map_err(|e| OpError::new("io", format!("{}: {e}", results.display())))?;
    let result: SweepResult = serde_json::from_str(&text).map_err(|e| OpError::new("parse", e))?;
    write_sensitivity_svgs(&result, dir).map_err(|e| OpError::new("plot", e))
}

#[derive(Debug, Clone, Serialize)]
pub struct RouteOutput {
    pub note: Note,
    pub labels: LabelSet,
    pub probabilities: KindScores,
    pub model_version: u64,
}

pub fn route(model: &RouterModel, text: &str, persona: Persona, id: Option<NoteId>) -> OpResult<RouteOutput> {
    let mut note = parse_note(text.trim_end_matches(['\n', '\r']), persona)
        .map_err(|e| OpError::new("parse", &e).with_detail(&e))?;
    if let Some(id) = id {
        note.id = id;
    }
    let probabilities = model.predict_proba(&note);
    Ok(RouteOutput {
        labels: probabilities.threshold(&model.thresholds),
        probabilities,
        model_version: model.version,
        note,
    })
}

pub fn read_model(path: &Path) -> OpResult<RouterModel> {
    let bytes = std::fs::read(path).map_err(|e| OpError::new("io", format!("{}: {e}", path.display())))?;
    load_model(&bytes).map_err(|e| OpError::new("model_format", e))
}
