//! Sentence-set schema, loaders, human ratings and score normalization.
//!
//! A dataset file holds one sentence per row. Rows sharing
//! `(dataset, pair_id, voice, synonym_variant)` form one minimal pair and
//! must contain exactly one `plausible` and one `implausible` row. For
//! `AA_control` items both sentences describe plausible events; the
//! `plausibility` column then only records the order in which they are listed.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DATASET_COLUMNS: [&str; 10] = [
    "dataset",
    "pair_id",
    "item_type",
    "voice",
    "synonym_variant",
    "plausibility",
    "sentence",
    "agent_span",
    "verb_span",
    "patient_span",
];

pub const RATINGS_COLUMNS: [&str; 4] = ["sentence_id", "mean_rating", "n_ratings", "raw_ratings"];

/// Minimum number of ratings per Dataset 1 sentence.
pub const D1_MIN_RATINGS: u32 = 18;

macro_rules! text_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!(
                        "unknown {} value `{}` (expected one of: {})",
                        stringify!($name),
                        other,
                        [$($text),+].join(", ")
                    )),
                }
            }
        }
    };
}

text_enum!(DatasetId { D1 => "D1", D2 => "D2", D3 => "D3" });
text_enum!(
    /// Animacy configuration of a Dataset 1 item.
    ItemType { Ai => "AI", Aa => "AA", AaControl => "AA_control", Na => "NA" }
);
text_enum!(Voice { Active => "active", Passive => "passive", Na => "NA" });
text_enum!(SynonymVariant { One => "1", Two => "2", Na => "NA" });
text_enum!(Plausibility { Plausible => "plausible", Implausible => "implausible" });
text_enum!(Role { Agent => "agent", Verb => "verb", Patient => "patient" });

/// Stable join key for a sentence across score, rating and embedding files.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SentenceId(pub String);

impl SentenceId {
    /// Hash of `(dataset, pair_id, plausibility, voice, synonym_variant)`,
    /// truncated to 16 hex digits.
    pub fn derive(
        dataset: DatasetId,
        pair_id: &str,
        plausibility: Plausibility,
        voice: Voice,
        synonym: SynonymVariant,
    ) -> Self {
        let key = format!("{dataset}\t{pair_id}\t{plausibility}\t{voice}\t{synonym}");
        let digest = Sha256::digest(key.as_bytes());
        SentenceId(hex::encode(&digest[..8]))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SentenceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SentenceId {
    fn from(s: &str) -> Self {
        SentenceId(s.to_string())
    }
}

/// Half-open word-index range `[start, end)` over the whitespace words of a sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, index: usize) -> bool {
        index >= self.start && index < self.end
    }

    fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.start, self.end)
    }
}

fn parse_span(field: &str) -> std::result::Result<Option<Span>, String> {
    if field == "-" {
        return Ok(None);
    }
    let (a, b) = field
        .split_once(':')
        .ok_or_else(|| format!("span `{field}` is not `start:end` or `-`"))?;
    let start: usize = a.parse().map_err(|_| format!("bad span start in `{field}`"))?;
    let end: usize = b.parse().map_err(|_| format!("bad span end in `{field}`"))?;
    if end <= start {
        return Err(format!("empty span `{field}`"));
    }
    Ok(Some(Span { start, end }))
}

fn fmt_span(span: Option<Span>) -> String {
    span.map_or_else(|| "-".to_string(), |s| s.to_string())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleSpans {
    pub agent: Option<Span>,
    pub verb: Option<Span>,
    pub patient: Option<Span>,
}

impl RoleSpans {
    pub fn get(&self, role: Role) -> Option<Span> {
        match role {
            Role::Agent => self.agent,
            Role::Verb => self.verb,
            Role::Patient => self.patient,
        }
    }

    fn present(&self) -> impl Iterator<Item = (Role, Span)> + '_ {
        Role::ALL.iter().filter_map(|&r| self.get(r).map(|s| (r, s)))
    }
}

/// Whitespace words with surrounding punctuation removed.
pub fn content_words(text: &str) -> Vec<String> {
    text.split_whitespace().map(strip_punct).collect()
}

fn strip_punct(word: &str) -> String {
    word.trim_matches(|c: char| matches!(c, '.' | ',' | ';' | ':' | '!' | '?' | '"'))
        .to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: SentenceId,
    pub text: String,
    pub roles: RoleSpans,
}

impl Sentence {
    pub fn words(&self) -> Vec<&str> {
        self.text.split_whitespace().collect()
    }

    pub fn word_count(&self) -> usize {
        self.text.split_whitespace().count()
    }

    /// Words covered by a role span, punctuation stripped.
    pub fn role_words(&self, role: Role) -> Option<Vec<String>> {
        let span = self.roles.get(role)?;
        let words = content_words(&self.text);
        Some(words[span.start..span.end].to_vec())
    }

    pub fn role_text(&self, role: Role) -> Option<String> {
        self.role_words(role).map(|w| w.join(" "))
    }
}

/// One plausible/implausible sentence pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimalPairItem {
    pub dataset: DatasetId,
    pub pair_id: String,
    pub item_type: ItemType,
    pub voice: Voice,
    pub synonym_variant: SynonymVariant,
    pub plausible: Sentence,
    pub implausible: Sentence,
}

/// Identity of one minimal pair within a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairKey {
    pub dataset: DatasetId,
    pub pair_id: String,
    pub voice: Voice,
    pub synonym_variant: SynonymVariant,
}

impl fmt::Display for PairKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}",
            self.dataset, self.pair_id, self.voice, self.synonym_variant
        )
    }
}

impl MinimalPairItem {
    pub fn key(&self) -> PairKey {
        PairKey {
            dataset: self.dataset,
            pair_id: self.pair_id.clone(),
            voice: self.voice,
            synonym_variant: self.synonym_variant,
        }
    }

    pub fn sentence(&self, plausibility: Plausibility) -> &Sentence {
        match plausibility {
            Plausibility::Plausible => &self.plausible,
            Plausibility::Implausible => &self.implausible,
        }
    }

    /// Both sentences in listed order, tagged with their plausibility slot.
    pub fn sentences(&self) -> [(Plausibility, &Sentence); 2] {
        [
            (Plausibility::Plausible, &self.plausible),
            (Plausibility::Implausible, &self.implausible),
        ]
    }

    /// Whether the pair carries a real plausibility contrast (false for controls).
    pub fn is_contrastive(&self) -> bool {
        self.item_type != ItemType::AaControl
    }

    fn validate(&self) -> std::result::Result<(), String> {
        for (_, s) in self.sentences() {
            let n = s.word_count();
            let spans: Vec<_> = s.roles.present().collect();
            for (role, span) in &spans {
                if span.end > n {
                    return Err(format!(
                        "{role} span {span} outside sentence of {n} words: `{}`",
                        s.text
                    ));
                }
            }
            for (i, (ra, a)) in spans.iter().enumerate() {
                for (rb, b) in &spans[i + 1..] {
                    if a.overlaps(b) {
                        return Err(format!("{ra} span {a} overlaps {rb} span {b}: `{}`", s.text));
                    }
                }
            }
        }

        if self.is_contrastive() && self.plausible.text == self.implausible.text {
            return Err("plausible and implausible sentences are identical".into());
        }

        match self.dataset {
            DatasetId::D1 | DatasetId::D3 => {
                let mut a = lower_words(&self.plausible.text);
                let mut b = lower_words(&self.implausible.text);
                a.sort();
                b.sort();
                if a != b {
                    return Err(format!(
                        "word content differs beyond an NP swap: `{}` vs `{}`",
                        self.plausible.text, self.implausible.text
                    ));
                }
            }
            DatasetId::D2 => {
                let a = lower_words(&self.plausible.text);
                let b = lower_words(&self.implausible.text);
                let (pa, pb) = match (self.plausible.roles.patient, self.implausible.roles.patient) {
                    (Some(pa), Some(pb)) => (pa, pb),
                    _ => return Err("D2 pair without patient spans".into()),
                };
                let same_prefix = a[..pa.start] == b[..pb.start];
                let same_suffix = a[pa.end..] == b[pb.end..];
                if !(same_prefix && same_suffix) {
                    return Err(format!(
                        "D2 sentences differ outside the patient NP: `{}` vs `{}`",
                        self.plausible.text, self.implausible.text
                    ));
                }
            }
        }
        Ok(())
    }
}

fn lower_words(text: &str) -> Vec<String> {
    content_words(text).into_iter().map(|w| w.to_lowercase()).collect()
}

/// A validated sentence set. Immutable after loading.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub id: DatasetId,
    pub items: Vec<MinimalPairItem>,
}

impl Dataset {
    pub fn from_items(id: DatasetId, items: Vec<MinimalPairItem>) -> Result<Self> {
        for item in &items {
            if item.dataset != id {
                return Err(Error::Validation(format!(
                    "pair {} belongs to {} not {id}",
                    item.pair_id, item.dataset
                )));
            }
            item.validate()
                .map_err(|m| Error::Validation(format!("pair {}: {m}", item.key())))?;
        }
        Ok(Dataset { id, items })
    }

    /// Number of distinct items (`pair_id`s) per item type.
    pub fn item_counts(&self) -> BTreeMap<ItemType, usize> {
        let mut seen: BTreeMap<ItemType, std::collections::BTreeSet<&str>> = BTreeMap::new();
        for item in &self.items {
            seen.entry(item.item_type).or_default().insert(&item.pair_id);
        }
        seen.into_iter().map(|(k, v)| (k, v.len())).collect()
    }

    pub fn item_count(&self) -> usize {
        self.item_counts().values().sum()
    }

    pub fn sentences(&self) -> impl Iterator<Item = (&MinimalPairItem, Plausibility, &Sentence)> {
        self.items
            .iter()
            .flat_map(|it| it.sentences().into_iter().map(move |(p, s)| (it, p, s)))
    }

    pub fn filter<'a>(
        &'a self,
        pred: impl Fn(&MinimalPairItem) -> bool + 'a,
    ) -> impl Iterator<Item = &'a MinimalPairItem> + 'a {
        self.items.iter().filter(move |it| pred(it))
    }

    /// Serializes in the dataset TSV format; rows ordered as stored.
    pub fn to_tsv(&self) -> String {
        let mut out = DATASET_COLUMNS.join("\t");
        out.push('\n');
        for item in &self.items {
            for (p, s) in item.sentences() {
                let row = [
                    item.dataset.to_string(),
                    item.pair_id.clone(),
                    item.item_type.to_string(),
                    item.voice.to_string(),
                    item.synonym_variant.to_string(),
                    p.to_string(),
                    s.text.clone(),
                    fmt_span(s.roles.agent),
                    fmt_span(s.roles.verb),
                    fmt_span(s.roles.patient),
                ];
                out.push_str(&row.join("\t"));
                out.push('\n');
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

struct PendingRow {
    line: usize,
    item_type: ItemType,
    sentence: Sentence,
}

type PairSlots = (Option<PendingRow>, Option<PendingRow>);

/// Parses dataset TSV text; `origin` only labels error messages.
pub fn parse_dataset(text: &str, dataset: DatasetId, origin: &Path) -> Result<Dataset> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(origin, 1, "empty dataset file"))?;
    let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
    if cols != DATASET_COLUMNS {
        return Err(Error::parse(
            origin,
            1,
            format!("expected columns `{}`, found `{}`", DATASET_COLUMNS.join(" "), cols.join(" ")),
        ));
    }

    let mut order: Vec<PairKey> = Vec::new();
    let mut groups: HashMap<PairKey, PairSlots> = HashMap::new();

    for (idx, line) in lines {
        let lineno = idx + 1;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != DATASET_COLUMNS.len() {
            return Err(Error::parse(
                origin,
                lineno,
                format!("expected {} fields, found {}", DATASET_COLUMNS.len(), f.len()),
            ));
        }
        let bad = |m: String| Error::parse(origin, lineno, m);
        let ds: DatasetId = f[0].parse().map_err(bad)?;
        if ds != dataset {
            return Err(bad(format!("row belongs to {ds}, expected {dataset}")));
        }
        let pair_id = f[1].trim().to_string();
        if pair_id.is_empty() {
            return Err(bad("empty pair_id".into()));
        }
        let item_type: ItemType = f[2].parse().map_err(bad)?;
        let voice: Voice = f[3].parse().map_err(bad)?;
        let synonym: SynonymVariant = f[4].parse().map_err(bad)?;
        let plaus: Plausibility = f[5].parse().map_err(bad)?;
        let text = f[6].trim().to_string();
        if text.is_empty() {
            return Err(bad("empty sentence".into()));
        }
        let roles = RoleSpans {
            agent: parse_span(f[7]).map_err(bad)?,
            verb: parse_span(f[8]).map_err(bad)?,
            patient: parse_span(f[9]).map_err(bad)?,
        };
        let key = PairKey {
            dataset: ds,
            pair_id: pair_id.clone(),
            voice,
            synonym_variant: synonym,
        };
        let sentence = Sentence {
            id: SentenceId::derive(ds, &pair_id, plaus, voice, synonym),
            text,
            roles,
        };
        let slots = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            (None, None)
        });
        let slot = match plaus {
            Plausibility::Plausible => &mut slots.0,
            Plausibility::Implausible => &mut slots.1,
        };
        if slot.is_some() {
            return Err(bad(format!("duplicate {plaus} row for pair {key}")));
        }
        *slot = Some(PendingRow {
            line: lineno,
            item_type,
            sentence,
        });
    }

    if order.is_empty() {
        return Err(Error::parse(origin, 1, "dataset file has no rows"));
    }

    let mut orphans = Vec::new();
    let mut items = Vec::with_capacity(order.len());
    for key in order {
        match groups.remove(&key).expect("grouped key") {
            (Some(p), Some(i)) => {
                if p.item_type != i.item_type {
                    return Err(Error::parse(
                        origin,
                        i.line,
                        format!("item_type mismatch within pair {key}"),
                    ));
                }
                items.push(MinimalPairItem {
                    dataset: key.dataset,
                    pair_id: key.pair_id,
                    item_type: p.item_type,
                    voice: key.voice,
                    synonym_variant: key.synonym_variant,
                    plausible: p.sentence,
                    implausible: i.sentence,
                });
            }
            (Some(row), None) | (None, Some(row)) => {
                orphans.push(format!("{} (line {})", key.pair_id, row.line));
            }
            (None, None) => unreachable!(),
        }
    }
    if !orphans.is_empty() {
        return Err(Error::Validation(format!(
            "orphan pair members without a partner: {}",
            orphans.join(", ")
        )));
    }
    Dataset::from_items(dataset, items)
}

pub fn load_dataset(path: &Path, dataset: DatasetId) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, dataset, path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub mean_rating: f64,
    pub n_ratings: u32,
    pub raw_ratings: Option<Vec<f64>>,
}

/// Mean human plausibility ratings on the 1–7 scale.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HumanRatings {
    pub ratings: BTreeMap<SentenceId, Rating>,
}

impl HumanRatings {
    pub fn get(&self, id: &SentenceId) -> Option<&Rating> {
        self.ratings.get(id)
    }

    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }

    pub fn scores(&self) -> ScoreMap {
        self.ratings
            .iter()
            .map(|(k, r)| (k.clone(), r.mean_rating))
            .collect()
    }

    /// Checks coverage of every sentence in `dataset` and the D1 rating floor.
    pub fn check_coverage(&self, dataset: &Dataset) -> Result<()> {
        let mut missing = Vec::new();
        for (item, _, s) in dataset.sentences() {
            match self.ratings.get(&s.id) {
                None => missing.push(format!("{}:{}", item.pair_id, s.id)),
                Some(r) if dataset.id == DatasetId::D1 && r.n_ratings < D1_MIN_RATINGS => {
                    return Err(Error::Validation(format!(
                        "sentence {} has {} ratings, fewer than {D1_MIN_RATINGS}",
                        s.id, r.n_ratings
                    )));
                }
                Some(_) => {}
            }
        }
        if !missing.is_empty() {
            let shown: Vec<_> = missing.iter().take(5).cloned().collect();
            return Err(Error::Validation(format!(
                "{} sentences lack ratings, e.g. {}",
                missing.len(),
                shown.join(", ")
            )));
        }
        Ok(())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = RATINGS_COLUMNS.join("\t");
        out.push('\n');
        for (id, r) in &self.ratings {
            let raw = match &r.raw_ratings {
                Some(v) => v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
                None => "-".into(),
            };
            out.push_str(&format!("{id}\t{}\t{}\t{raw}\n", r.mean_rating, r.n_ratings));
        }
        out
    }
}

pub fn parse_ratings(text: &str, origin: &Path) -> Result<HumanRatings> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(origin, 1, "empty ratings file"))?;
    let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
    if cols != RATINGS_COLUMNS {
        return Err(Error::parse(
            origin,
            1,
            format!("expected columns `{}`", RATINGS_COLUMNS.join(" ")),
        ));
    }
    let mut ratings = BTreeMap::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let bad = |m: String| Error::parse(origin, lineno, m);
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", f.len())));
        }
        let in_scale = |x: f64| (1.0..=7.0).contains(&x);
        let mean: f64 = f[1].trim().parse().map_err(|_| bad(format!("bad mean `{}`", f[1])))?;
        if !in_scale(mean) {
            return Err(bad(format!("mean rating {mean} outside [1, 7]")));
        }
        let n: u32 = f[2].trim().parse().map_err(|_| bad(format!("bad count `{}`", f[2])))?;
        if n == 0 {
            return Err(bad("n_ratings must be at least 1".into()));
        }
        let raw = match f[3].trim() {
            "-" => None,
            s => {
                let v = s
                    .split(',')
                    .map(|x| x.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| bad(format!("bad raw ratings `{s}`")))?;
                if v.iter().any(|&x| !in_scale(x)) {
                    return Err(bad("raw rating outside [1, 7]".into()));
                }
                if v.len() != n as usize {
                    return Err(bad(format!("{} raw ratings but n_ratings = {n}", v.len())));
                }
                let m = v.iter().sum::<f64>() / v.len() as f64;
                if (m - mean).abs() > 1e-6 * mean.abs().max(1.0) + 5e-4 {
                    return Err(bad(format!("mean_rating {mean} != mean of raw ratings {m}")));
                }
                Some(v)
            }
        };
        let id = SentenceId(f[0].trim().to_string());
        if ratings
            .insert(
                id.clone(),
                Rating {
                    mean_rating: mean,
                    n_ratings: n,
                    raw_ratings: raw,
                },
            )
            .is_some()
        {
            return Err(bad(format!("duplicate sentence_id {id}")));
        }
    }
    Ok(HumanRatings { ratings })
}

pub fn load_ratings(path: &Path) -> Result<HumanRatings> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ratings(&text, path)
}

/// One scorer's value per sentence.
pub type ScoreMap = HashMap<SentenceId, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NormMode {
    #[default]
    Minmax,
    Zscore,
}

impl FromStr for NormMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "minmax" => Ok(NormMode::Minmax),
            "zscore" => Ok(NormMode::Zscore),
            o => Err(format!("unknown normalization mode `{o}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedScore {
    pub sentence_id: SentenceId,
    pub scorer_id: String,
    pub value: f64,
}

/// Min-max or z-score (population sd) normalization of raw values.
pub fn normalize(values: &[f64], mode: NormMode) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::InvalidInput(
            "normalization needs at least 2 values".into(),
        ));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite score".into()));
    }
    match mode {
        NormMode::Minmax => {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let range = hi - lo;
            if range <= 0.0 {
                return Err(Error::ZeroVariance("min-max normalization over a zero range".into()));
            }
            Ok(values.iter().map(|v| (v - lo) / range).collect())
        }
        NormMode::Zscore => {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            if var <= 0.0 {
                return Err(Error::ZeroVariance("z-score of constant values".into()));
            }
            let sd = var.sqrt();
            Ok(values.iter().map(|v| (v - mean) / sd).collect())
        }
    }
}

pub fn normalize_scores(
    scorer_id: &str,
    scores: &[(SentenceId, f64)],
    mode: NormMode,
) -> Result<Vec<NormalizedScore>> {
    let raw: Vec<f64> = scores.iter().map(|(_, v)| *v).collect();
    let norm = normalize(&raw, mode)?;
    Ok(scores
        .iter()
        .zip(norm)
        .map(|((id, _), value)| NormalizedScore {
            sentence_id: id.clone(),
            scorer_id: scorer_id.to_string(),
            value,
        })
        .collect())
}

/// Normalizes a score map over the sentences of `dataset` only.
pub fn normalize_over_dataset(scores: &ScoreMap, dataset: &Dataset, mode: NormMode) -> Result<ScoreMap> {
    let mut ids: Vec<&SentenceId> = dataset.sentences().map(|(_, _, s)| &s.id).collect();
    ids.sort();
    ids.dedup();
    let mut pairs = Vec::with_capacity(ids.len());
    for id in ids {
        let v = scores
            .get(id)
            .ok_or_else(|| Error::Validation(format!("no score for sentence {id}")))?;
        pairs.push((id.clone(), *v));
    }
    Ok(normalize_scores("", &pairs, mode)?
        .into_iter()
        .map(|n| (n.sentence_id, n.value))
        .collect())
}

/// Per-pair (plausible − implausible) difference for each selected item.
pub fn pair_differences<'a>(
    scores: &ScoreMap,
    items: impl IntoIterator<Item = &'a MinimalPairItem>,
) -> Result<Vec<(PairKey, f64)>> {
    items
        .into_iter()
        .map(|it| {
            let get = |s: &Sentence| {
                scores.get(&s.id).copied().ok_or_else(|| {
                    Error::Validation(format!("pair {}: no score for sentence {}", it.key(), s.id))
                })
            };
            Ok((it.key(), get(&it.plausible)? - get(&it.implausible)?))
        })
        .collect()
}

/// Mean and sample sd of the per-pair normalized score difference.
pub fn mean_pair_difference<'a>(
    scores: &ScoreMap,
    items: impl IntoIterator<Item = &'a MinimalPairItem>,
) -> Result<(f64, f64)> {
    let diffs: Vec<f64> = pair_differences(scores, items)?
        .into_iter()
        .map(|(_, d)| d)
        .collect();
    if diffs.is_empty() {
        return Err(Error::InvalidInput("empty pair selection".into()));
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let sd = if diffs.len() > 1 {
        (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok((mean, sd))
}
