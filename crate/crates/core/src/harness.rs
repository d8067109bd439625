//! Config-driven runs: input validation, scoring, evaluation, regression,
//! probing and report bundles with plot-data tables.
//!
//! Every table starts with a `# plauskit config_sha256=… seed=…` line and
//! every command writes `manifest.json` with the hash of each file it wrote.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{
    content_words, load_dataset, load_ratings, mean_pair_difference, normalize, pair_differences, Dataset,
    DatasetId, HumanRatings, ItemType, MinimalPairItem, NormMode, Plausibility, Role, ScoreMap, Sentence,
    SentenceId,
};
use crate::counts::{log_frequency, read_triple_file, role_term, score_sentence_ppmi, FrequencyTable, RoleRelations};
use crate::error::{Error, Result};
use crate::probe::{
    fold_table, generalization_matrix, multiclass_probe, pair_group, pair_preserving_folds, read_embeddings,
    summary_table, Condition, ProbeReport,
};
use crate::scoring::{
    aggregate_sentence_score, binary_accuracy, decide_pairs, last_word_score, read_sentence_scores,
    read_token_records, verb_score, write_sentence_scores, Aggregation, Metric, Scheme, SentenceScore,
};
use crate::stats::{
    bh_fdr, binom_test, dependent_nonoverlapping_correlation_test, equal_proportions_test, error_profile,
    fit_lmm, layer_group_trend, paired_correlation, pearson_r, term_label, CovarianceStructure, Covariate,
    LayerAccuracy, LmmObservation, LmmOptions, Pairing, RegressionSpec,
};
use crate::vectors::{sdm_score, thematic_fit_score, EventGraph, PrototypeConfig, SdmConfig, VectorSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Validate,
    Score,
    Evaluate,
    Regress,
    Probe,
    Report,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Score => "score",
            Command::Evaluate => "evaluate",
            Command::Regress => "regress",
            Command::Probe => "probe",
            Command::Report => "report",
        }
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "validate" => Command::Validate,
            "score" => Command::Score,
            "evaluate" => Command::Evaluate,
            "regress" => Command::Regress,
            "probe" => Command::Probe,
            "report" => Command::Report,
            o => return Err(Error::Config(format!("unknown command `{o}`"))),
        })
    }
}

/// FDR correction is applied within each category separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Human,
    #[default]
    Llm,
    Baseline,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Human => "human",
            Category::Llm => "llm",
            Category::Baseline => "baseline",
        }
    }
}

fn one() -> u64 {
    1
}

fn default_metric() -> Metric {
    Metric::SentenceLl
}

fn default_max_fillers() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScorerSource {
    /// Token log-prob JSONL aggregated under `metric`.
    TokenLogprobs {
        path: PathBuf,
        #[serde(default = "default_metric")]
        metric: Metric,
        /// Only records with this `scorer_id`.
        #[serde(default)]
        record_scorer: Option<String>,
        #[serde(default)]
        scheme: Option<Scheme>,
    },
    /// Precomputed sentence-score JSONL.
    SentenceScores {
        path: PathBuf,
        #[serde(default)]
        metric: Option<Metric>,
        #[serde(default)]
        record_scorer: Option<String>,
    },
    Ppmi {
        triples: PathBuf,
        #[serde(default = "one")]
        min_freq: u64,
        #[serde(default = "one")]
        laplace: u64,
        #[serde(default)]
        relations: RoleRelations,
    },
    ThematicFit {
        triples: PathBuf,
        vectors: PathBuf,
        #[serde(default = "one")]
        min_freq: u64,
        #[serde(default)]
        prototype: PrototypeConfig,
    },
    Sdm {
        vectors: PathBuf,
        /// Stored event graph; built from `triples` when absent.
        #[serde(default)]
        deg: Option<PathBuf>,
        #[serde(default)]
        triples: Option<PathBuf>,
        #[serde(default = "one")]
        min_freq: u64,
        #[serde(default = "default_max_fillers")]
        max_fillers: usize,
        #[serde(default)]
        sdm: SdmConfig,
    },
}

impl ScorerSource {
    fn paths(&self) -> Vec<&Path> {
        match self {
            ScorerSource::TokenLogprobs { path, .. } | ScorerSource::SentenceScores { path, .. } => vec![path],
            ScorerSource::Ppmi { triples, .. } => vec![triples],
            ScorerSource::ThematicFit { triples, vectors, .. } => vec![triples, vectors],
            ScorerSource::Sdm { vectors, deg, triples, .. } => {
                let mut v = vec![vectors.as_path()];
                v.extend(deg.as_deref());
                v.extend(triples.as_deref());
                v
            }
        }
    }

    fn paths_mut(&mut self) -> Vec<&mut PathBuf> {
        match self {
            ScorerSource::TokenLogprobs { path, .. } | ScorerSource::SentenceScores { path, .. } => vec![path],
            ScorerSource::Ppmi { triples, .. } => vec![triples],
            ScorerSource::ThematicFit { triples, vectors, .. } => vec![triples, vectors],
            ScorerSource::Sdm { vectors, deg, triples, .. } => {
                let mut v = vec![vectors];
                v.extend(deg.as_mut());
                v.extend(triples.as_mut());
                v
            }
        }
    }

    fn is_native(&self) -> bool {
        matches!(
            self,
            ScorerSource::Ppmi { .. } | ScorerSource::ThematicFit { .. } | ScorerSource::Sdm { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerConfig {
    pub id: String,
    #[serde(default)]
    pub category: Category,
    #[serde(flatten)]
    pub source: ScorerSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub accuracy: bool,
    pub distributions: bool,
    pub correlations: bool,
    pub regression: bool,
    pub error_profile: bool,
    pub probing: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            accuracy: true,
            distributions: true,
            correlations: true,
            regression: true,
            error_profile: true,
            probing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionConfig {
    pub covariance: CovarianceStructure,
    pub ols_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbingConfig {
    pub dataset: DatasetId,
    pub embeddings: Vec<PathBuf>,
    pub folds: usize,
    /// `[train, test]` condition pairs such as `["AI/active", "AA/all"]`.
    pub cells: Vec<[String; 2]>,
    pub multiclass: bool,
}

impl Default for ProbingConfig {
    fn default() -> Self {
        let cell = |a: &str, b: &str| [a.to_string(), b.to_string()];
        ProbingConfig {
            dataset: DatasetId::D1,
            embeddings: Vec::new(),
            folds: 10,
            cells: vec![
                cell("all/all", "all/all"),
                cell("AI/all", "AI/all"),
                cell("AA/all", "AA/all"),
                cell("AI/all", "AA/all"),
                cell("AA/all", "AI/all"),
                cell("all/active", "all/passive"),
                cell("all/passive", "all/active"),
            ],
            multiclass: true,
        }
    }
}

fn default_seed() -> u64 {
    0
}

fn default_out() -> PathBuf {
    PathBuf::from("plauskit-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub normalization: NormMode,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub datasets: BTreeMap<DatasetId, PathBuf>,
    #[serde(default)]
    pub ratings: BTreeMap<DatasetId, PathBuf>,
    /// Word and phrase counts for the regression frequency covariates.
    #[serde(default)]
    pub frequencies: Option<PathBuf>,
    #[serde(default)]
    pub scorers: Vec<ScorerConfig>,
    #[serde(default)]
    pub analyses: AnalysisConfig,
    #[serde(default)]
    pub regression: RegressionConfig,
    #[serde(default)]
    pub probing: ProbingConfig,
}

impl RunConfig {
    fn paths(&self) -> Vec<&Path> {
        let mut v: Vec<&Path> = self.datasets.values().map(PathBuf::as_path).collect();
        v.extend(self.ratings.values().map(PathBuf::as_path));
        v.extend(self.frequencies.as_deref());
        for s in &self.scorers {
            v.extend(s.source.paths());
        }
        v.extend(self.probing.embeddings.iter().map(PathBuf::as_path));
        v
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.datasets.values_mut().for_each(fix);
        self.ratings.values_mut().for_each(fix);
        if let Some(p) = self.frequencies.as_mut() {
            fix(p);
        }
        for s in &mut self.scorers {
            s.source.paths_mut().into_iter().for_each(fix);
        }
        self.probing.embeddings.iter_mut().for_each(fix);
        fix(&mut self.out);
    }
}

/// A parsed config together with its identity.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// sha256 of the canonical config text, `out` excluded.
    pub hash: String,
}

fn parse_override_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `a.b.c=value`; numeric segments index arrays.
pub fn apply_override(root: &mut toml::Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let segments: Vec<&str> = key.trim().split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let mut node = root;
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        node = match node {
            toml::Value::Table(t) => {
                if last {
                    t.insert(seg.to_string(), parse_override_value(raw.trim()));
                    return Ok(());
                }
                t.entry(seg.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            }
            toml::Value::Array(a) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| Error::Config(format!("`{seg}` in `{key}` must index an array")))?;
                let len = a.len();
                let slot = a
                    .get_mut(idx)
                    .ok_or_else(|| Error::Config(format!("index {idx} out of range ({len}) in `{key}`")))?;
                if last {
                    *slot = parse_override_value(raw.trim());
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::Config(format!("`{key}` descends into a scalar"))),
        };
    }
    unreachable!("loop returns on the last segment")
}

/// Loads a TOML config, applies overrides and resolves relative paths
/// against the config's directory.
pub fn load_config(path: &Path, overrides: &[String], seed: Option<u64>, out: Option<&Path>) -> Result<LoadedConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")), overrides, seed, out)
}

pub fn parse_config(
    text: &str,
    base: &Path,
    overrides: &[String],
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<LoadedConfig> {
    let mut value: toml::Value = toml::from_str::<toml::Table>(text)
        .map(toml::Value::Table)
        .map_err(|e| Error::Config(e.to_string().replace('\n', " ")))?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    if let (Some(s), toml::Value::Table(t)) = (seed, &mut value) {
        let s = i64::try_from(s).map_err(|_| Error::Config(format!("seed {s} exceeds the TOML integer range")))?;
        t.insert("seed".into(), toml::Value::Integer(s));
    }
    if let (Some(o), toml::Value::Table(t)) = (out, &mut value) {
        t.insert("out".into(), toml::Value::String(o.to_string_lossy().into_owned()));
    }
    let mut hashed = value.clone();
    if let toml::Value::Table(t) = &mut hashed {
        t.remove("out");
    }
    let canonical = toml::to_string(&hashed).map_err(|e| Error::Config(e.to_string()))?;
    let hash = hex::encode(Sha256::digest(canonical.as_bytes()));
    let mut config: RunConfig = value
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string().replace('\n', " ")))?;
    if config.datasets.is_empty() {
        return Err(Error::Config("no datasets configured".into()));
    }
    let mut ids = BTreeSet::new();
    for s in &config.scorers {
        if s.id == "human" || !ids.insert(s.id.as_str()) {
            return Err(Error::Config(format!("duplicate or reserved scorer id `{}`", s.id)));
        }
    }
    config.resolve(base);
    Ok(LoadedConfig { config, hash })
}

/// Loaded datasets, ratings and frequency table.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub datasets: BTreeMap<DatasetId, Dataset>,
    pub ratings: BTreeMap<DatasetId, HumanRatings>,
    pub frequencies: Option<FrequencyTable>,
}

impl Inputs {
    fn sentence_index(&self) -> HashMap<&SentenceId, &Sentence> {
        self.datasets
            .values()
            .flat_map(|d| d.sentences().map(|(_, _, s)| (&s.id, s)))
            .collect()
    }
}

/// Checks that every referenced file exists, then parses datasets and ratings.
pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    if let Some(p) = cfg.paths().into_iter().find(|p| !p.exists()) {
        return Err(Error::Config(format!("referenced file does not exist: {}", p.display())));
    }
    let mut datasets = BTreeMap::new();
    for (&id, path) in &cfg.datasets {
        datasets.insert(id, load_dataset(path, id)?);
    }
    let mut ratings = BTreeMap::new();
    for (&id, path) in &cfg.ratings {
        let r = load_ratings(path)?;
        let ds = datasets
            .get(&id)
            .ok_or_else(|| Error::Config(format!("ratings given for {id}, which has no dataset")))?;
        r.check_coverage(ds)
            .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
        ratings.insert(id, r);
    }
    let frequencies = cfg.frequencies.as_deref().map(FrequencyTable::load).transpose()?;
    Ok(Inputs {
        datasets,
        ratings,
        frequencies,
    })
}

/// One scorer's sentence scores over every configured dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerScores {
    pub id: String,
    pub category: Category,
    pub metric: Option<Metric>,
    pub scores: ScoreMap,
    /// Token counts, for scorers built from token records.
    pub lengths: HashMap<SentenceId, usize>,
    /// Sentences the scorer could not score, with the first reason.
    pub failures: usize,
    pub first_failure: Option<String>,
}

impl ScorerScores {
    fn new(id: &str, category: Category, metric: Option<Metric>) -> Self {
        ScorerScores {
            id: id.into(),
            category,
            metric,
            scores: ScoreMap::new(),
            lengths: HashMap::new(),
            failures: 0,
            first_failure: None,
        }
    }

    fn fail(&mut self, e: Error) {
        self.failures += 1;
        self.first_failure.get_or_insert_with(|| e.to_string());
    }

    fn record(&mut self, id: &SentenceId, r: Result<f64>) {
        match r {
            Ok(v) => {
                self.scores.insert(id.clone(), v);
            }
            Err(e) => self.fail(e),
        }
    }

    fn sentence_scores(&self) -> Vec<SentenceScore> {
        let mut ids: Vec<&SentenceId> = self.scores.keys().collect();
        ids.sort();
        ids.into_iter()
            .map(|id| SentenceScore {
                sentence_id: id.clone(),
                scorer_id: self.id.clone(),
                metric: self.metric.unwrap_or(Metric::SentenceLl),
                value: self.scores[id],
            })
            .collect()
    }
}

fn score_source(sc: &ScorerConfig, inputs: &Inputs) -> Result<ScorerScores> {
    let index = inputs.sentence_index();
    let mut sentences: Vec<&Sentence> = index.values().copied().collect();
    sentences.sort_by(|a, b| a.id.cmp(&b.id));
    match &sc.source {
        ScorerSource::TokenLogprobs {
            path,
            metric,
            record_scorer,
            scheme,
        } => {
            let mut out = ScorerScores::new(&sc.id, sc.category, Some(*metric));
            for rec in read_token_records(path)? {
                if record_scorer.as_ref().is_some_and(|r| *r != rec.scorer_id)
                    || scheme.is_some_and(|s| s != rec.scheme)
                {
                    continue;
                }
                let Some(sentence) = index.get(&rec.sentence_id) else {
                    continue;
                };
                if out.lengths.insert(rec.sentence_id.clone(), rec.tokens.len()).is_some() {
                    return Err(Error::Validation(format!(
                        "{}: sentence {} has several matching records; set record_scorer or scheme",
                        path.display(),
                        rec.sentence_id
                    )));
                }
                let value = match metric {
                    Metric::SentenceLl => aggregate_sentence_score(&rec, Aggregation::Sum).map(|s| s.value),
                    Metric::SurprisalNeg => aggregate_sentence_score(&rec, Aggregation::Mean).map(|s| s.value),
                    Metric::LastWord => last_word_score(&rec).map(|s| s.value),
                    Metric::Verb => match sentence.roles.verb {
                        Some(span) => verb_score(&rec, span).map(|s| s.value),
                        None => Err(Error::InvalidInput(format!("sentence {} has no verb span", rec.sentence_id))),
                    },
                    other => Err(Error::Config(format!("metric {other} is not defined on token records"))),
                };
                if let Err(e @ Error::Config(_)) = value {
                    return Err(e);
                }
                out.record(&rec.sentence_id, value);
            }
            Ok(out)
        }
        ScorerSource::SentenceScores {
            path,
            metric,
            record_scorer,
        } => {
            let mut out = ScorerScores::new(&sc.id, sc.category, *metric);
            for s in read_sentence_scores(path)? {
                if record_scorer.as_ref().is_some_and(|r| *r != s.scorer_id) || metric.is_some_and(|m| m != s.metric) {
                    continue;
                }
                if !index.contains_key(&s.sentence_id) {
                    continue;
                }
                out.metric.get_or_insert(s.metric);
                if out.scores.insert(s.sentence_id.clone(), s.value).is_some() {
                    return Err(Error::Validation(format!(
                        "{}: sentence {} scored more than once",
                        path.display(),
                        s.sentence_id
                    )));
                }
            }
            Ok(out)
        }
        ScorerSource::Ppmi {
            triples,
            min_freq,
            laplace,
            relations,
        } => {
            let tc = read_triple_file(triples)?.build(*min_freq);
            let mut out = ScorerScores::new(&sc.id, sc.category, Some(Metric::Ppmi));
            for s in sentences {
                out.record(&s.id, score_sentence_ppmi(s, &tc, relations, *laplace));
            }
            Ok(out)
        }
        ScorerSource::ThematicFit {
            triples,
            vectors,
            min_freq,
            prototype,
        } => {
            let tc = read_triple_file(triples)?.build(*min_freq);
            let vs = VectorSpace::load_text(vectors)?;
            let mut out = ScorerScores::new(&sc.id, sc.category, Some(Metric::ThematicFit));
            for s in sentences {
                out.record(&s.id, thematic_fit_score(s, &tc, &vs, prototype));
            }
            Ok(out)
        }
        ScorerSource::Sdm {
            vectors,
            deg,
            triples,
            min_freq,
            max_fillers,
            sdm,
        } => {
            let graph = match (deg, triples) {
                (Some(d), _) => EventGraph::load(d)?,
                (None, Some(t)) => EventGraph::from_counts(&read_triple_file(t)?.build(*min_freq), *max_fillers),
                (None, None) => return Err(Error::Config(format!("scorer {}: sdm needs `deg` or `triples`", sc.id))),
            };
            let vs = VectorSpace::load_text(vectors)?;
            let mut out = ScorerScores::new(&sc.id, sc.category, Some(Metric::Sdm));
            for s in sentences {
                out.record(&s.id, sdm_score(s, &graph, &vs, sdm).map(|r| r.value));
            }
            Ok(out)
        }
    }
}

/// Human ratings (as scorer `human`) followed by every configured scorer.
pub fn load_scorers(cfg: &RunConfig, inputs: &Inputs) -> Result<Vec<ScorerScores>> {
    let mut out = Vec::with_capacity(cfg.scorers.len() + 1);
    if !inputs.ratings.is_empty() {
        let mut human = ScorerScores::new("human", Category::Human, None);
        for r in inputs.ratings.values() {
            human.scores.extend(r.scores());
        }
        out.push(human);
    }
    for sc in &cfg.scorers {
        out.push(score_source(sc, inputs)?);
    }
    Ok(out)
}

/// One line of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub analysis: String,
    pub scorer: String,
    pub category: Category,
    pub statistic: String,
    pub value: f64,
    pub p: Option<f64>,
    pub p_fdr: Option<f64>,
    pub n: usize,
    pub notes: String,
}

impl ResultRow {
    fn new(analysis: &str, scorer: &ScorerScores, statistic: &str, value: f64, p: Option<f64>, n: usize) -> Self {
        ResultRow {
            analysis: analysis.into(),
            scorer: scorer.id.clone(),
            category: scorer.category,
            statistic: statistic.into(),
            value,
            p,
            p_fdr: None,
            n,
            notes: String::new(),
        }
    }

    fn note(mut self, note: impl AsRef<str>) -> Self {
        if !self.notes.is_empty() {
            self.notes.push(';');
        }
        self.notes.push_str(note.as_ref());
        self
    }
}

pub const RESULT_COLUMNS: [&str; 8] = ["analysis", "scorer", "statistic", "value", "p", "p_fdr", "n", "notes"];

/// BH within each (analysis, statistic, category) group.
pub fn apply_fdr(rows: &mut [ResultRow]) -> Result<()> {
    let mut groups: BTreeMap<(String, String, Category), Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        if r.p.is_some_and(f64::is_finite) {
            groups
                .entry((r.analysis.clone(), r.statistic.clone(), r.category))
                .or_default()
                .push(i);
        }
    }
    for idx in groups.values() {
        let ps: Vec<f64> = idx.iter().map(|&i| rows[i].p.expect("filtered")).collect();
        for (&i, q) in idx.iter().zip(bh_fdr(&ps)?) {
            rows[i].p_fdr = Some(q);
        }
    }
    Ok(())
}

fn num(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else if v.is_infinite() {
        if v > 0.0 { "Inf" } else { "-Inf" }.into()
    } else {
        format!("{v:.6}")
    }
}

fn pval(p: Option<f64>) -> String {
    match p {
        Some(p) if p.is_finite() => format!("{p:.6e}"),
        _ => "NA".into(),
    }
}

fn sanitize(s: &str) -> String {
    s.replace(['\t', '\n'], " ")
}

pub fn results_table(rows: &[ResultRow]) -> String {
    let mut out = RESULT_COLUMNS.join("\t");
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.analysis,
            r.scorer,
            r.statistic,
            num(r.value),
            pval(r.p),
            pval(r.p_fdr),
            r.n,
            sanitize(&r.notes)
        );
    }
    out
}

/// Accumulates artifacts of one command under the output directory.
pub struct RunWriter {
    out: PathBuf,
    hash: String,
    seed: u64,
    command: Command,
    files: BTreeMap<String, String>,
}

impl RunWriter {
    pub fn new(out: &Path, hash: &str, seed: u64, command: Command) -> Result<Self> {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        Ok(RunWriter {
            out: out.to_path_buf(),
            hash: hash.into(),
            seed,
            command,
            files: BTreeMap::new(),
        })
    }

    fn stamp(&self) -> String {
        format!("# plauskit config_sha256={} seed={}\n", self.hash, self.seed)
    }

    /// Writes a table with the run stamp prepended.
    pub fn table(&mut self, name: &str, body: &str) -> Result<PathBuf> {
        let text = format!("{}{body}", self.stamp());
        self.raw(name, text.as_bytes())
    }

    pub fn raw(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.out.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.files.insert(name.into(), hex::encode(Sha256::digest(bytes)));
        Ok(path)
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        let manifest = serde_json::json!({
            "tool": "plauskit",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command.as_str(),
            "config_sha256": self.hash,
            "seed": self.seed,
            "files": self.files,
        });
        let text = serde_json::to_string_pretty(&manifest).expect("serializable") + "\n";
        let path = self.out.join("manifest.json");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        self.files.clear();
        Ok(path)
    }
}

/// Item subsets evaluated separately within a dataset.
fn subsets(ds: &Dataset) -> Vec<(String, Vec<&MinimalPairItem>)> {
    if ds.id == DatasetId::D1 {
        [ItemType::Ai, ItemType::Aa]
            .into_iter()
            .map(|t| (t.as_str().to_string(), ds.filter(move |i| i.item_type == t).collect::<Vec<_>>()))
            .filter(|(_, v)| !v.is_empty())
            .collect()
    } else {
        vec![("all".into(), ds.filter(|i| i.is_contrastive()).collect())]
    }
}

/// Per-dataset normalized scores over the sentences the scorer covers.
fn normalized(scorer: &ScorerScores, ds: &Dataset, mode: NormMode) -> Result<Option<(ScoreMap, usize)>> {
    let mut ids: Vec<&SentenceId> = ds.sentences().map(|(_, _, s)| &s.id).collect();
    ids.sort();
    ids.dedup();
    let total = ids.len();
    let present: Vec<(&SentenceId, f64)> = ids
        .into_iter()
        .filter_map(|id| scorer.scores.get(id).map(|v| (id, *v)))
        .collect();
    if present.len() < 2 {
        return Ok(None);
    }
    let values: Vec<f64> = present.iter().map(|(_, v)| *v).collect();
    let norm = normalize(&values, mode)?;
    let map = present.iter().zip(norm).map(|((id, _), v)| ((*id).clone(), v)).collect();
    Ok(Some((map, total - present.len())))
}

fn covered<'a>(items: &[&'a MinimalPairItem], scores: &ScoreMap) -> Vec<&'a MinimalPairItem> {
    items
        .iter()
        .copied()
        .filter(|i| scores.contains_key(&i.plausible.id) && scores.contains_key(&i.implausible.id))
        .collect()
}

/// Shared state of an analysis run.
pub struct Session {
    pub loaded: LoadedConfig,
    pub inputs: Inputs,
    pub scorers: Vec<ScorerScores>,
    /// `(scorer index, dataset) → normalized scores`.
    norm: BTreeMap<(usize, DatasetId), ScoreMap>,
}

impl Session {
    pub fn open(loaded: LoadedConfig) -> Result<Self> {
        let inputs = load_inputs(&loaded.config)?;
        let scorers = load_scorers(&loaded.config, &inputs)?;
        let mut norm = BTreeMap::new();
        for (i, s) in scorers.iter().enumerate() {
            for (&id, ds) in &inputs.datasets {
                if let Some((map, _)) = normalized(s, ds, loaded.config.normalization)? {
                    norm.insert((i, id), map);
                }
            }
        }
        Ok(Session {
            loaded,
            inputs,
            scorers,
            norm,
        })
    }

    fn config(&self) -> &RunConfig {
        &self.loaded.config
    }

    fn human(&self) -> Option<usize> {
        self.scorers.iter().position(|s| s.category == Category::Human)
    }

    fn scored(&self, ds: DatasetId) -> impl Iterator<Item = (&ScorerScores, &ScoreMap)> + '_ {
        self.scorers
            .iter()
            .enumerate()
            .filter_map(move |(i, s)| self.norm.get(&(i, ds)).map(|m| (s, m)))
    }

    fn writer(&self, command: Command) -> Result<RunWriter> {
        RunWriter::new(&self.config().out, &self.loaded.hash, self.config().seed, command)
    }

    /// Accuracy, distribution, correlation and error-profile rows.
    pub fn evaluate(&self) -> Result<(Vec<ResultRow>, Vec<AccuracyBar>, String)> {
        let a = &self.config().analyses;
        let mut rows = Vec::new();
        let mut bars = Vec::new();
        let mut profile = String::from("dataset\titem_type\tpair\tn_correct\tn_scorers\thuman_difference\n");
        for (&id, ds) in &self.inputs.datasets {
            let subs = subsets(ds);
            for (scorer, scores) in self.scored(id) {
                let mut accs = BTreeMap::new();
                for (label, items) in &subs {
                    let items = covered(items, scores);
                    let missing = subs.iter().find(|(l, _)| l == label).map_or(0, |(_, v)| v.len()) - items.len();
                    if items.is_empty() {
                        continue;
                    }
                    if a.accuracy {
                        let dec = decide_pairs(&scorer.id, scores, items.iter().copied())?;
                        let acc = binary_accuracy(&dec)?;
                        let test = binom_test(acc.k as u64, acc.n as u64, 0.5)?;
                        let mut row = ResultRow::new(
                            &format!("accuracy:{id}:{label}"),
                            scorer,
                            "accuracy",
                            acc.accuracy,
                            Some(test.p_value),
                            acc.n,
                        )
                        .note(format!("k={};se={:.6};ties={}", acc.k, acc.se, acc.ties));
                        if missing > 0 {
                            row = row.note(format!("unscored_pairs={missing}"));
                        }
                        rows.push(row);
                        bars.push((id, label.clone(), scorer.id.clone(), acc.accuracy, acc.se, rows.len() - 1));
                        accs.insert(label.clone(), acc);
                    }
                    if a.distributions {
                        let (mean, sd) = mean_pair_difference(scores, items.iter().copied())?;
                        rows.push(
                            ResultRow::new(&format!("pair_difference:{id}:{label}"), scorer, "mean", mean, None, items.len())
                                .note(format!("sd={sd:.6}")),
                        );
                    }
                }
                if let (Some(ai), Some(aa)) = (accs.get("AI"), accs.get("AA")) {
                    let t = equal_proportions_test(ai.k as u64, ai.n as u64, aa.k as u64, aa.n as u64, true)?;
                    rows.push(
                        ResultRow::new(&format!("gap:{id}:AI-AA"), scorer, "chi2", t.statistic, Some(t.p_value), ai.n + aa.n)
                            .note(format!("difference={:.6}", ai.accuracy - aa.accuracy)),
                    );
                }
            }
            if a.correlations {
                rows.extend(self.correlations(ds)?);
            }
            if a.error_profile {
                self.error_profile_rows(ds, &mut rows, &mut profile)?;
            }
        }
        apply_fdr(&mut rows)?;
        let bars = bars
            .into_iter()
            .map(|(dataset, item_type, scorer, accuracy, se, i)| AccuracyBar {
                dataset,
                item_type,
                scorer,
                accuracy,
                se,
                p: rows[i].p.unwrap_or(f64::NAN),
                p_fdr: rows[i].p_fdr.unwrap_or(f64::NAN),
            })
            .collect();
        Ok((rows, bars, profile))
    }

    fn correlations(&self, ds: &Dataset) -> Result<Vec<ResultRow>> {
        let mut rows = Vec::new();
        let mut selections: Vec<(String, Pairing, Vec<MinimalPairItem>)> = Vec::new();
        let contrastive: Vec<MinimalPairItem> = ds.filter(|i| i.is_contrastive()).cloned().collect();
        if contrastive.iter().any(|i| i.voice == crate::corpus::Voice::Passive) {
            selections.push(("active_passive".into(), Pairing::ActiveVsPassive, contrastive.clone()));
        }
        if contrastive.iter().any(|i| i.synonym_variant == crate::corpus::SynonymVariant::Two) {
            selections.push(("synonym".into(), Pairing::Synonym, contrastive.clone()));
        }
        for (label, items) in subsets(ds) {
            selections.push((format!("plaus_implaus:{label}"), Pairing::PlausVsImplaus, items.into_iter().cloned().collect()));
        }
        let human = self.human().and_then(|h| self.norm.get(&(h, ds.id)));
        for (label, pairing, items) in &selections {
            let analysis = format!("paired_r:{}:{label}", ds.id);
            for (scorer, scores) in self.scored(ds.id) {
                let usable: Vec<MinimalPairItem> = items
                    .iter()
                    .filter(|i| scores.contains_key(&i.plausible.id) && scores.contains_key(&i.implausible.id))
                    .cloned()
                    .collect();
                match paired_correlation(scores, &usable, *pairing) {
                    Ok(r) => rows.push(ResultRow::new(&analysis, scorer, "r", r.statistic, Some(r.p_value), r.n)),
                    Err(e) => rows.push(ResultRow::new(&analysis, scorer, "r", f64::NAN, None, 0).note(e.to_string())),
                }
                if let (Some(h), false) = (human, scorer.category == Category::Human) {
                    if *pairing != Pairing::PlausVsImplaus {
                        if let Some(row) = compare_with_human(&analysis, scorer, scores, h, &usable, *pairing) {
                            rows.push(row);
                        }
                    }
                }
            }
        }
        Ok(rows)
    }

    fn error_profile_rows(&self, ds: &Dataset, rows: &mut Vec<ResultRow>, table: &mut String) -> Result<()> {
        let Some(h) = self.human() else {
            return Ok(());
        };
        let Some(human) = self.norm.get(&(h, ds.id)) else {
            return Ok(());
        };
        let llms: Vec<(&ScorerScores, &ScoreMap)> = self.scored(ds.id).filter(|(s, _)| s.category == Category::Llm).collect();
        if llms.len() < 2 {
            return Ok(());
        }
        let items: Vec<MinimalPairItem> = ds
            .filter(|i| {
                i.is_contrastive()
                    && llms
                        .iter()
                        .chain([&(&self.scorers[h], human)])
                        .all(|(_, m)| m.contains_key(&i.plausible.id) && m.contains_key(&i.implausible.id))
            })
            .cloned()
            .collect();
        if items.is_empty() {
            return Ok(());
        }
        let mut decisions = Vec::new();
        for (s, m) in &llms {
            decisions.extend(decide_pairs(&s.id, m, &items)?);
        }
        let diffs = pair_differences(human, &items)?;
        let prof = error_profile(&decisions, &diffs, &items)?;
        for r in &prof.rows {
            let _ = writeln!(
                table,
                "{}\t{}\t{}\t{}\t{}\t{:.6}",
                ds.id, r.item_type, r.pair, r.n_correct, r.n_scorers, r.human_difference
            );
        }
        let pseudo = ScorerScores::new("llm_count", Category::Llm, None);
        for (t, c) in &prof.correlations {
            let analysis = format!("error_profile:{}:{t}", ds.id);
            rows.push(match c {
                Ok(r) => ResultRow::new(&analysis, &pseudo, "r", r.statistic, Some(r.p_value), r.n),
                Err(e) => ResultRow::new(&analysis, &pseudo, "r", f64::NAN, None, 0).note(e),
            });
        }
        Ok(())
    }

    /// Linear mixed model per dataset and scorer.
    pub fn regress(&self) -> Result<Vec<ResultRow>> {
        let mut rows = Vec::new();
        for (&id, ds) in &self.inputs.datasets {
            let mut spec = if id == DatasetId::D1 {
                RegressionSpec::full()
            } else {
                RegressionSpec::simplified()
            };
            spec.options = LmmOptions {
                covariance: self.config().regression.covariance,
                ols_fallback: self.config().regression.ols_fallback,
                ..LmmOptions::default()
            };
            if self.inputs.frequencies.is_none() {
                spec.covariates = vec![Covariate::SentenceLength];
            }
            let analysis = format!("lmm:{id}");
            for (scorer, scores) in self.scored(id) {
                let obs = self.observations(ds, scorer, scores, &spec.covariates);
                let mut spec = spec.clone();
                let dropped = drop_constant_covariates(&mut spec, &obs);
                match fit_lmm(&spec, &obs) {
                    Ok(fit) => {
                        for c in &fit.coefficients {
                            let mut row =
                                ResultRow::new(&analysis, scorer, &c.name, c.estimate, Some(c.p_value), obs.len())
                                    .note(format!("se={:.6}", c.se));
                            if let Some(l) = term_label(&c.name) {
                                row = row.note(format!("label={l}"));
                            }
                            rows.push(row);
                        }
                        for (name, v) in &fit.variances.random {
                            rows.push(ResultRow::new(&analysis, scorer, &format!("var:{name}"), *v, None, obs.len()));
                        }
                        if let Some(c) = fit.variances.covariance {
                            rows.push(ResultRow::new(&analysis, scorer, "cov:(Intercept):implausible", c, None, obs.len()));
                        }
                        rows.push(ResultRow::new(&analysis, scorer, "var:residual", fit.variances.residual, None, obs.len()));
                        let mut ll = ResultRow::new(&analysis, scorer, "log_likelihood", fit.log_likelihood, None, obs.len())
                            .note(format!("converged={};singular={}", fit.converged, fit.singular));
                        if fit.used_ols_fallback {
                            ll = ll.note("ols_fallback");
                        }
                        for w in &fit.warnings {
                            ll = ll.note(format!("warning={w}"));
                        }
                        for d in &dropped {
                            ll = ll.note(format!("dropped_constant={d}"));
                        }
                        rows.push(ll);
                    }
                    Err(e) => rows.push(ResultRow::new(&analysis, scorer, "error", f64::NAN, None, obs.len()).note(e.to_string())),
                }
            }
        }
        apply_fdr(&mut rows)?;
        Ok(rows)
    }

    fn observations(&self, ds: &Dataset, scorer: &ScorerScores, scores: &ScoreMap, covs: &[Covariate]) -> Vec<LmmObservation> {
        let freq = self.inputs.frequencies.as_ref();
        let mut out = Vec::new();
        for it in ds.items.iter() {
            for (p, s) in it.sentences() {
                let Some(&y) = scores.get(&s.id) else {
                    continue;
                };
                let mut covariates = BTreeMap::new();
                for &c in covs {
                    let role_freq = |r: Role| -> Option<f64> {
                        let term = role_term(s, r).ok()?;
                        Some(log_frequency(&term, freq?))
                    };
                    let v = match c {
                        Covariate::AgentFrequency => role_freq(Role::Agent),
                        Covariate::PatientFrequency => role_freq(Role::Patient),
                        Covariate::VerbFrequency => role_freq(Role::Verb),
                        Covariate::AverageFrequency => freq.map(|f| {
                            let words = content_words(&s.text);
                            let words: Vec<String> = words.iter().map(|w| w.to_lowercase()).collect();
                            words.iter().map(|w| log_frequency(w, f)).sum::<f64>() / words.len().max(1) as f64
                        }),
                        Covariate::SentenceLength => Some(
                            scorer
                                .lengths
                                .get(&s.id)
                                .copied()
                                .unwrap_or_else(|| s.word_count()) as f64,
                        ),
                    };
                    if let Some(v) = v {
                        covariates.insert(c, v);
                    }
                }
                out.push(LmmObservation {
                    item: format!("{}:{}", it.dataset, it.pair_id),
                    plausibility: p,
                    item_type: it.item_type,
                    voice: it.voice,
                    covariates,
                    response: y,
                });
            }
        }
        out
    }

    /// Probe reports per embedding model plus layer-trend rows.
    pub fn probe(&self) -> Result<(Vec<(String, Vec<ProbeReport>)>, Vec<ResultRow>)> {
        let pc = &self.config().probing;
        let ds = self
            .inputs
            .datasets
            .get(&pc.dataset)
            .ok_or_else(|| Error::Config(format!("probing dataset {} is not configured", pc.dataset)))?;
        let ratings = self.inputs.ratings.get(&pc.dataset);
        let cells = pc
            .cells
            .iter()
            .map(|[a, b]| Ok((parse_condition(a)?, parse_condition(b)?)))
            .collect::<Result<Vec<_>>>()?;
        let mut all = Vec::new();
        let mut rows = Vec::new();
        for path in &pc.embeddings {
            for (model, set) in read_embeddings(path)? {
                let reports = generalization_matrix(&ds.items, &set, &cells, ratings, pc.folds, self.config().seed)?;
                let pseudo = ScorerScores::new(&model, Category::Llm, None);
                for &(train, test) in &cells {
                    let cell: Vec<&ProbeReport> = reports
                        .iter()
                        .filter(|r| r.train == train.to_string() && r.test == test.to_string())
                        .collect();
                    let Some(ceiling) = cell.first().and_then(|r| r.ceiling) else {
                        continue;
                    };
                    let analysis = format!("probe:{}:{train}->{test}", pc.dataset);
                    rows.push(ResultRow::new(&analysis, &pseudo, "ceiling", ceiling, None, cell.len()));
                    if cell.len() >= 3 {
                        let layers: Vec<LayerAccuracy> = cell
                            .iter()
                            .map(|r| LayerAccuracy {
                                layer: r.layer.unwrap_or(0),
                                accuracies: r.fold_accuracies.clone(),
                            })
                            .collect();
                        for g in layer_group_trend(&layers, ceiling)? {
                            let span = format!(
                                "layers={}-{}",
                                g.layers.first().copied().unwrap_or(0),
                                g.layers.last().copied().unwrap_or(0)
                            );
                            rows.push(
                                ResultRow::new(&analysis, &pseudo, &format!("{}_vs_ceiling", g.group.as_str()), g.vs_ceiling.statistic, Some(g.vs_ceiling.p_value), g.vs_ceiling.n)
                                    .note(&span),
                            );
                            rows.push(
                                ResultRow::new(&analysis, &pseudo, &format!("{}_slope", g.group.as_str()), g.trend.statistic, Some(g.trend.p_value), g.trend.n)
                                    .note(&span),
                            );
                        }
                    }
                }
                let mut reports = reports;
                if pc.multiclass {
                    if let Some(r) = ratings {
                        reports.extend(self.multiclass(ds, &set, r)?);
                    }
                }
                all.push((model, reports));
            }
        }
        apply_fdr(&mut rows)?;
        Ok((all, rows))
    }

    fn multiclass(&self, ds: &Dataset, set: &crate::probe::EmbeddingSet, ratings: &HumanRatings) -> Result<Vec<ProbeReport>> {
        let mut ids = Vec::new();
        let mut groups = Vec::new();
        let mut values = Vec::new();
        for it in &ds.items {
            for (_, s) in it.sentences() {
                if let Some(r) = ratings.get(&s.id) {
                    ids.push(s.id.clone());
                    groups.push(pair_group(it));
                    values.push(r.mean_rating);
                }
            }
        }
        let folds = pair_preserving_folds(&groups, self.config().probing.folds, self.config().seed)?;
        let mut out = Vec::new();
        for (&layer, vectors) in &set.layers {
            let x = ids
                .iter()
                .map(|id| vectors.get(id).cloned().ok_or_else(|| Error::MissingVector(id.to_string())))
                .collect::<Result<Vec<_>>>()?;
            let mut rep = multiclass_probe(&x, &values, &groups, &folds)?;
            rep.layer = Some(layer);
            out.push(rep);
        }
        Ok(out)
    }
}

/// Model–human comparison of a paired correlation on the same sentences.
fn compare_with_human(
    analysis: &str,
    scorer: &ScorerScores,
    scores: &ScoreMap,
    human: &ScoreMap,
    items: &[MinimalPairItem],
    pairing: Pairing,
) -> Option<ResultRow> {
    let items: Vec<MinimalPairItem> = items
        .iter()
        .filter(|i| human.contains_key(&i.plausible.id) && human.contains_key(&i.implausible.id))
        .cloned()
        .collect();
    let (h1, h2) = aligned(human, &items, pairing);
    let (m1, m2) = aligned(scores, &items, pairing);
    if h1.len() < 4 {
        return None;
    }
    let r = |a: &[f64], b: &[f64]| pearson_r(a, b).ok();
    let res = dependent_nonoverlapping_correlation_test(
        r(&h1, &h2)?,
        r(&m1, &m2)?,
        r(&h1, &m1)?,
        r(&h1, &m2)?,
        r(&h2, &m1)?,
        r(&h2, &m2)?,
        h1.len(),
    )
    .ok()?;
    let row = ResultRow::new(analysis, scorer, "z_vs_human", res.statistic, Some(res.p_value), res.n);
    Some(if res.statistic.is_finite() {
        row
    } else {
        ResultRow { p: None, ..row }.note("degenerate correlation matrix")
    })
}

/// The two aligned score columns a pairing correlates.
fn aligned(scores: &ScoreMap, items: &[MinimalPairItem], pairing: Pairing) -> (Vec<f64>, Vec<f64>) {
    use crate::corpus::{SynonymVariant, Voice};
    let partner = |i: &MinimalPairItem| {
        let mut k = i.key();
        match pairing {
            Pairing::ActiveVsPassive => k.voice = Voice::Na,
            _ => k.synonym_variant = SynonymVariant::Na,
        }
        k
    };
    let is_first = |i: &MinimalPairItem| match pairing {
        Pairing::ActiveVsPassive => i.voice == Voice::Active,
        _ => i.synonym_variant == SynonymVariant::One,
    };
    let seconds: HashMap<_, &MinimalPairItem> = items.iter().filter(|i| !is_first(i)).map(|i| (partner(i), i)).collect();
    let mut firsts: Vec<&MinimalPairItem> = items.iter().filter(|i| is_first(i)).collect();
    firsts.sort_by_key(|i| i.key());
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for f in firsts {
        if let Some(s) = seconds.get(&partner(f)) {
            for p in [Plausibility::Plausible, Plausibility::Implausible] {
                if let (Some(x), Some(y)) = (scores.get(&f.sentence(p).id), scores.get(&s.sentence(p).id)) {
                    a.push(*x);
                    b.push(*y);
                }
            }
        }
    }
    (a, b)
}

fn drop_constant_covariates(spec: &mut RegressionSpec, obs: &[LmmObservation]) -> Vec<&'static str> {
    let mut dropped = Vec::new();
    spec.covariates.retain(|c| {
        let vals: Vec<f64> = obs.iter().filter_map(|o| o.covariates.get(c).copied()).collect();
        let constant = vals.windows(2).all(|w| w[0] == w[1]);
        if constant {
            dropped.push(c.term());
        }
        !constant
    });
    dropped
}

/// `type/voice` with `AI`, `AA` or `all` and `active`, `passive` or `all`.
pub fn parse_condition(s: &str) -> Result<Condition> {
    let (t, v) = s
        .split_once('/')
        .ok_or_else(|| Error::Config(format!("condition `{s}` is not type/voice")))?;
    let item_type = match t {
        "all" => None,
        "AI" => Some(ItemType::Ai),
        "AA" => Some(ItemType::Aa),
        o => return Err(Error::Config(format!("unknown item type `{o}` in condition `{s}`"))),
    };
    let voice = match v {
        "all" => None,
        "active" => Some(crate::corpus::Voice::Active),
        "passive" => Some(crate::corpus::Voice::Passive),
        o => return Err(Error::Config(format!("unknown voice `{o}` in condition `{s}`"))),
    };
    Ok(Condition::new(item_type, voice))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyBar {
    pub dataset: DatasetId,
    pub item_type: String,
    pub scorer: String,
    pub accuracy: f64,
    pub se: f64,
    pub p: f64,
    pub p_fdr: f64,
}

pub fn accuracy_bars_csv(bars: &[AccuracyBar]) -> String {
    let mut out = String::from("dataset,item_type,scorer,accuracy,se,p,p_fdr\n");
    for b in bars {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            b.dataset,
            b.item_type,
            b.scorer,
            num(b.accuracy),
            num(b.se),
            pval(Some(b.p)),
            pval(Some(b.p_fdr))
        );
    }
    out
}

/// Gaussian kernel density with Silverman's bandwidth on `grid`.
pub fn kde(values: &[f64], grid: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let bw = silverman_bandwidth(values);
    let norm = 1.0 / (n * bw * (2.0 * std::f64::consts::PI).sqrt());
    grid.iter()
        .map(|&x| values.iter().map(|v| (-0.5 * ((x - v) / bw).powi(2)).exp()).sum::<f64>() * norm)
        .collect()
}

pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = (sorted.len() - 1) as f64 * p;
        let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    };
    let iqr = q(0.75) - q(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let bw = 0.9 * spread * n.powf(-0.2);
    if bw > 0.0 {
        bw
    } else {
        1e-3
    }
}

pub const DENSITY_GRID: usize = 101;

fn plot_tables(session: &Session) -> Result<(String, String)> {
    let mut scatter = String::from("dataset,item_type,voice,synonym_variant,pair_id,scorer,plausible,implausible\n");
    let mut density = String::from("dataset,item_type,scorer,plausibility,x,density\n");
    for (&id, ds) in &session.inputs.datasets {
        let subs = subsets(ds);
        for (scorer, scores) in session.scored(id) {
            for (label, items) in &subs {
                let items = covered(items, scores);
                for it in &items {
                    let _ = writeln!(
                        scatter,
                        "{id},{},{},{},{},{},{},{}",
                        it.item_type,
                        it.voice,
                        it.synonym_variant,
                        it.pair_id,
                        scorer.id,
                        num(scores[&it.plausible.id]),
                        num(scores[&it.implausible.id])
                    );
                }
                if items.len() < 2 {
                    continue;
                }
                for p in [Plausibility::Plausible, Plausibility::Implausible] {
                    let vals: Vec<f64> = items.iter().map(|i| scores[&i.sentence(p).id]).collect();
                    let (lo, hi) = match session.config().normalization {
                        NormMode::Minmax => (0.0, 1.0),
                        NormMode::Zscore => {
                            let bw = silverman_bandwidth(&vals);
                            let (mn, mx) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
                            (mn - 3.0 * bw, mx + 3.0 * bw)
                        }
                    };
                    let grid: Vec<f64> = (0..DENSITY_GRID)
                        .map(|i| lo + (hi - lo) * i as f64 / (DENSITY_GRID - 1) as f64)
                        .collect();
                    for (x, d) in grid.iter().zip(kde(&vals, &grid)) {
                        let _ = writeln!(density, "{id},{label},{},{p},{},{}", scorer.id, num(*x), num(d));
                    }
                }
            }
        }
    }
    Ok((scatter, density))
}

fn probe_curves_csv(models: &[(String, Vec<ProbeReport>)]) -> String {
    let mut out = String::from("train,test,layer,mean_acc,ceiling,model\n");
    for (model, reports) in models {
        for r in reports {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{model}",
                r.train,
                r.test,
                r.layer.map_or_else(|| "NA".into(), |l| l.to_string()),
                num(r.mean_accuracy),
                r.ceiling.map_or_else(|| "NA".into(), num)
            );
        }
    }
    out
}

fn write_probe(w: &mut RunWriter, models: &[(String, Vec<ProbeReport>)], rows: &[ResultRow]) -> Result<()> {
    let mut folds = String::new();
    let mut summary = String::new();
    for (i, (model, reports)) in models.iter().enumerate() {
        let f = fold_table(reports);
        let s = summary_table(reports);
        let prefix = |t: &str, head: bool| -> String {
            t.lines()
                .enumerate()
                .filter(|(j, _)| head || *j > 0)
                .map(|(j, l)| if j == 0 { format!("model\t{l}\n") } else { format!("{model}\t{l}\n") })
                .collect()
        };
        folds.push_str(&prefix(&f, i == 0));
        summary.push_str(&prefix(&s, i == 0));
    }
    w.table("probe_folds.tsv", &folds)?;
    w.table("probe_summary.tsv", &summary)?;
    w.table("probe_trends.tsv", &results_table(rows))?;
    Ok(())
}

/// Runs one command; returns a short summary for standard output.
pub fn run(command: Command, loaded: LoadedConfig) -> Result<String> {
    if command == Command::Validate {
        let inputs = load_inputs(&loaded.config)?;
        let mut msg = String::new();
        for (id, ds) in &inputs.datasets {
            let counts: Vec<String> = ds.item_counts().iter().map(|(t, n)| format!("{t}={n}")).collect();
            let _ = writeln!(msg, "{id}: {} items, {} pairs ({})", ds.items.len(), ds.item_count(), counts.join(", "));
        }
        for (id, r) in &inputs.ratings {
            let _ = writeln!(msg, "{id} ratings: {} sentences", r.len());
        }
        let _ = write!(msg, "config_sha256={}", loaded.hash);
        return Ok(msg);
    }

    if command == Command::Score {
        let inputs = load_inputs(&loaded.config)?;
        let mut w = RunWriter::new(&loaded.config.out, &loaded.hash, loaded.config.seed, command)?;
        let mut msg = String::new();
        for sc in loaded.config.scorers.iter().filter(|s| s.source.is_native()) {
            let scores = score_source(sc, &inputs)?;
            let path = w.out.join("scores").join(format!("{}.jsonl", sc.id));
            if let Some(d) = path.parent() {
                fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
            }
            write_sentence_scores(&path, &scores.sentence_scores())?;
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            w.files.insert(format!("scores/{}.jsonl", sc.id), hex::encode(Sha256::digest(&bytes)));
            let _ = writeln!(msg, "{}: {} scored, {} failed", sc.id, scores.scores.len(), scores.failures);
        }
        w.finish()?;
        return Ok(msg.trim_end().to_string());
    }

    let session = Session::open(loaded)?;
    let mut w = session.writer(command)?;
    let a = session.config().analyses.clone();
    let mut all_rows = Vec::new();
    let mut bars = Vec::new();
    if matches!(command, Command::Evaluate | Command::Report) {
        let (rows, b, profile) = session.evaluate()?;
        w.table("evaluation.tsv", &results_table(&rows))?;
        if a.error_profile {
            w.table("error_profile.tsv", &profile)?;
        }
        all_rows.extend(rows);
        bars = b;
    }
    if command == Command::Regress || (command == Command::Report && a.regression) {
        let rows = session.regress()?;
        w.table("regression.tsv", &results_table(&rows))?;
        all_rows.extend(rows);
    }
    let mut models = Vec::new();
    let probing = !session.config().probing.embeddings.is_empty();
    if command == Command::Probe || (command == Command::Report && a.probing && probing) {
        let (m, rows) = session.probe()?;
        write_probe(&mut w, &m, &rows)?;
        all_rows.extend(rows);
        models = m;
    }
    if command == Command::Report {
        w.table("results.tsv", &results_table(&all_rows))?;
        w.table("accuracy_bars.csv", &accuracy_bars_csv(&bars))?;
        let (scatter, density) = plot_tables(&session)?;
        w.table("scatter_pairs.csv", &scatter)?;
        w.table("density_curves.csv", &density)?;
        w.table("probe_curves.csv", &probe_curves_csv(&models))?;
    }
    let n_files = w.files.len();
    let manifest = w.finish()?;
    Ok(format!(
        "{}: {} result rows, {n_files} files, manifest {}",
        command.as_str(),
        all_rows.len(),
        manifest.display()
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 7
[datasets]
D1 = "d1.tsv"
"#;

    #[test]
    fn overrides_and_hash() {
        let base = parse_config(MINIMAL, Path::new("/data"), &[], None, None).unwrap();
        assert_eq!(base.config.seed, 7);
        assert_eq!(base.config.datasets[&DatasetId::D1], PathBuf::from("/data/d1.tsv"));
        let o = parse_config(MINIMAL, Path::new("/data"), &["normalization=zscore".into(), "probing.folds=5".into()], None, None)
            .unwrap();
        assert_eq!(o.config.normalization, NormMode::Zscore);
        assert_eq!(o.config.probing.folds, 5);
        assert_ne!(o.hash, base.hash);
        let moved = parse_config(MINIMAL, Path::new("/data"), &[], None, Some(Path::new("/elsewhere"))).unwrap();
        assert_eq!(moved.hash, base.hash);
        let seeded = parse_config(MINIMAL, Path::new("/data"), &[], Some(9), None).unwrap();
        assert_eq!(seeded.config.seed, 9);
        assert_ne!(seeded.hash, base.hash);
    }

    #[test]
    fn scorer_sources() {
        let text = r#"
[datasets]
D1 = "d1.tsv"
[[scorers]]
id = "ppmi"
kind = "ppmi"
category = "baseline"
triples = "t.tsv"
[[scorers]]
id = "lm"
kind = "token_logprobs"
path = "lm.jsonl"
metric = "last_word"
"#;
        let c = parse_config(text, Path::new("."), &["scorers.1.metric=\"verb\"".into()], None, None)
            .unwrap()
            .config;
        assert_eq!(c.scorers[0].category, Category::Baseline);
        assert!(matches!(c.scorers[0].source, ScorerSource::Ppmi { laplace: 1, min_freq: 1, .. }));
        assert!(matches!(c.scorers[1].source, ScorerSource::TokenLogprobs { metric: Metric::Verb, .. }));
    }

    #[test]
    fn bad_configs() {
        assert!(parse_config("seed = 1", Path::new("."), &[], None, None).is_err());
        assert!(parse_config(&format!("{MINIMAL}\nbogus = 1"), Path::new("."), &[], None, None).is_err());
        assert!(parse_config(MINIMAL, Path::new("."), &["seed".into()], None, None).is_err());
        let dup = format!("{MINIMAL}\n[[scorers]]\nid = \"human\"\nkind = \"ppmi\"\ntriples = \"t\"\n");
        assert!(parse_config(&dup, Path::new("."), &[], None, None).is_err());
    }

    #[test]
    fn conditions() {
        assert_eq!(parse_condition("AI/passive").unwrap().to_string(), "AI/passive");
        assert_eq!(parse_condition("all/all").unwrap(), Condition::ALL);
        assert!(parse_condition("AA_control/all").is_err());
    }

    #[test]
    fn fdr_groups_by_category() {
        let s = ScorerScores::new("a", Category::Llm, None);
        let b = ScorerScores::new("b", Category::Baseline, None);
        let mut rows = vec![
            ResultRow::new("x", &s, "accuracy", 0.9, Some(0.01), 10),
            ResultRow::new("x", &s, "accuracy", 0.9, Some(0.04), 10),
            ResultRow::new("x", &b, "accuracy", 0.9, Some(0.04), 10),
        ];
        apply_fdr(&mut rows).unwrap();
        assert!((rows[0].p_fdr.unwrap() - 0.02).abs() < 1e-15);
        assert_eq!(rows[2].p_fdr, Some(0.04));
        assert_eq!(rows[1].p_fdr, Some(0.04));
    }

    #[test]
    fn kde_integrates_to_one() {
        let vals = [0.2, 0.25, 0.3, 0.6, 0.61];
        let grid: Vec<f64> = (0..2001).map(|i| -1.0 + 3.0 * i as f64 / 2000.0).collect();
        let d = kde(&vals, &grid);
        let area: f64 = d.iter().sum::<f64>() * 3.0 / 2000.0;
        assert!((area - 1.0).abs() < 1e-3, "{area}");
    }
}
