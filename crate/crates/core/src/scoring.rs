//! Sentence scores from token log-probabilities, minimal-pair decisions and
//! binary accuracy.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{MinimalPairItem, PairKey, ScoreMap, SentenceId, Span};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Causal,
    PllWordL2r,
    PllOriginal,
    L2rMasked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogProb {
    pub surface: String,
    pub word_index: usize,
    pub logprob: f64,
}

/// Per-token conditional log-probabilities (natural log) for one sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogProbRecord {
    pub sentence_id: SentenceId,
    pub scorer_id: String,
    pub scheme: Scheme,
    pub tokens: Vec<TokenLogProb>,
}

impl TokenLogProbRecord {
    pub fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::InvalidInput(format!(
                "record for {} has no tokens",
                self.sentence_id
            )));
        }
        let mut last = 0;
        for (i, t) in self.tokens.iter().enumerate() {
            if !(t.logprob <= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "token {i} of {} has logprob {} > 0",
                    self.sentence_id, t.logprob
                )));
            }
            if t.word_index < last {
                return Err(Error::InvalidInput(format!(
                    "word_index decreases at token {i} of {}",
                    self.sentence_id
                )));
            }
            last = t.word_index;
        }
        Ok(())
    }

    fn logprobs(&self) -> impl Iterator<Item = f64> + '_ {
        self.tokens.iter().map(|t| t.logprob)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    SentenceLl,
    LastWord,
    Verb,
    SurprisalNeg,
    Ppmi,
    ThematicFit,
    Sdm,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::SentenceLl => "sentence_ll",
            Metric::LastWord => "last_word",
            Metric::Verb => "verb",
            Metric::SurprisalNeg => "surprisal_neg",
            Metric::Ppmi => "ppmi",
            Metric::ThematicFit => "thematic_fit",
            Metric::Sdm => "sdm",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "sentence_ll" => Ok(Metric::SentenceLl),
            "last_word" => Ok(Metric::LastWord),
            "verb" => Ok(Metric::Verb),
            "surprisal_neg" => Ok(Metric::SurprisalNeg),
            "ppmi" => Ok(Metric::Ppmi),
            "thematic_fit" => Ok(Metric::ThematicFit),
            "sdm" => Ok(Metric::Sdm),
            o => Err(format!("unknown metric `{o}`")),
        }
    }
}

/// Sentence-level score; higher always means more plausible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceScore {
    pub sentence_id: SentenceId,
    pub scorer_id: String,
    pub metric: Metric,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    Sum,
    Mean,
}

/// `Sum` gives the sentence log-likelihood; `Mean` gives negated mean surprisal.
pub fn aggregate_sentence_score(rec: &TokenLogProbRecord, agg: Aggregation) -> Result<SentenceScore> {
    rec.validate()?;
    let total: f64 = rec.logprobs().sum();
    let (metric, value) = match agg {
        Aggregation::Sum => (Metric::SentenceLl, total),
        Aggregation::Mean => (Metric::SurprisalNeg, total / rec.tokens.len() as f64),
    };
    Ok(SentenceScore {
        sentence_id: rec.sentence_id.clone(),
        scorer_id: rec.scorer_id.clone(),
        metric,
        value,
    })
}

fn mean_where(rec: &TokenLogProbRecord, pred: impl Fn(usize) -> bool) -> Option<f64> {
    let (sum, n) = rec
        .tokens
        .iter()
        .filter(|t| pred(t.word_index))
        .fold((0.0, 0usize), |(s, n), t| (s + t.logprob, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Mean log-probability of the subtokens of the last word.
pub fn last_word_score(rec: &TokenLogProbRecord) -> Result<SentenceScore> {
    rec.validate()?;
    let last = rec.tokens.iter().map(|t| t.word_index).max().expect("non-empty");
    let value = mean_where(rec, |w| w == last).expect("last word has tokens");
    Ok(SentenceScore {
        sentence_id: rec.sentence_id.clone(),
        scorer_id: rec.scorer_id.clone(),
        metric: Metric::LastWord,
        value,
    })
}

/// Mean log-probability of the tokens inside `verb_span`.
pub fn verb_score(rec: &TokenLogProbRecord, verb_span: Span) -> Result<SentenceScore> {
    rec.validate()?;
    let max_word = rec.tokens.iter().map(|t| t.word_index).max().expect("non-empty");
    if verb_span.is_empty() || verb_span.end > max_word + 1 {
        return Err(Error::InvalidInput(format!(
            "verb span {verb_span} outside record {} with {} words",
            rec.sentence_id,
            max_word + 1
        )));
    }
    let value = mean_where(rec, |w| verb_span.contains(w)).ok_or_else(|| {
        Error::InvalidInput(format!(
            "no tokens aligned to verb span {verb_span} in {}",
            rec.sentence_id
        ))
    })?;
    Ok(SentenceScore {
        sentence_id: rec.sentence_id.clone(),
        scorer_id: rec.scorer_id.clone(),
        metric: Metric::Verb,
        value,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDecision {
    pub pair: PairKey,
    pub scorer_id: String,
    /// 1 iff the plausible sentence scored strictly higher.
    pub correct: u8,
    pub tie: bool,
}

impl PairDecision {
    pub fn is_correct(&self) -> bool {
        self.correct == 1
    }
}

pub fn pair_decision(pair: PairKey, plaus: &SentenceScore, implaus: &SentenceScore) -> Result<PairDecision> {
    if plaus.scorer_id != implaus.scorer_id || plaus.metric != implaus.metric {
        return Err(Error::InvalidInput(format!(
            "pair {pair}: cannot compare {}/{} with {}/{}",
            plaus.scorer_id, plaus.metric, implaus.scorer_id, implaus.metric
        )));
    }
    Ok(decide(pair, &plaus.scorer_id, plaus.value, implaus.value))
}

fn decide(pair: PairKey, scorer: &str, plaus: f64, implaus: f64) -> PairDecision {
    PairDecision {
        pair,
        scorer_id: scorer.to_string(),
        correct: u8::from(plaus > implaus),
        tie: plaus == implaus,
    }
}

/// Decisions for every item from one scorer's score map.
pub fn decide_pairs<'a>(
    scorer_id: &str,
    scores: &ScoreMap,
    items: impl IntoIterator<Item = &'a MinimalPairItem>,
) -> Result<Vec<PairDecision>> {
    items
        .into_iter()
        .map(|it| {
            let get = |id: &SentenceId| {
                scores.get(id).copied().ok_or_else(|| {
                    Error::Validation(format!("{scorer_id}: no score for sentence {id} of pair {}", it.key()))
                })
            };
            Ok(decide(it.key(), scorer_id, get(&it.plausible.id)?, get(&it.implausible.id)?))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub accuracy: f64,
    pub se: f64,
    pub k: usize,
    pub n: usize,
    pub ties: usize,
}

pub fn binary_accuracy(decisions: &[PairDecision]) -> Result<Accuracy> {
    if decisions.is_empty() {
        return Err(Error::InvalidInput("no pair decisions".into()));
    }
    let n = decisions.len();
    let k = decisions.iter().filter(|d| d.is_correct()).count();
    let ties = decisions.iter().filter(|d| d.tie).count();
    let acc = k as f64 / n as f64;
    Ok(Accuracy {
        accuracy: acc,
        se: (acc * (1.0 - acc) / n as f64).sqrt(),
        k,
        n,
        ties,
    })
}

pub fn read_token_records(path: &Path) -> Result<Vec<TokenLogProbRecord>> {
    read_jsonl(path, |r: &TokenLogProbRecord| r.validate())
}

pub fn read_sentence_scores(path: &Path) -> Result<Vec<SentenceScore>> {
    read_jsonl(path, |_: &SentenceScore| Ok(()))
}

pub fn write_sentence_scores(path: &Path, scores: &[SentenceScore]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for s in scores {
        let line = serde_json::to_string(s).expect("serializable");
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub(crate) fn read_jsonl<T: for<'de> Deserialize<'de>>(
    path: &Path,
    check: impl Fn(&T) -> Result<()>,
) -> Result<Vec<T>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: T = serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        check(&rec).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DatasetId, SynonymVariant, Voice};
    use proptest::prelude::*;

    fn record(lps: &[(usize, f64)]) -> TokenLogProbRecord {
        TokenLogProbRecord {
            sentence_id: "s".into(),
            scorer_id: "m".into(),
            scheme: Scheme::Causal,
            tokens: lps
                .iter()
                .map(|&(w, lp)| TokenLogProb {
                    surface: format!("t{w}"),
                    word_index: w,
                    logprob: lp,
                })
                .collect(),
        }
    }

    fn key() -> PairKey {
        PairKey {
            dataset: DatasetId::D1,
            pair_id: "1".into(),
            voice: Voice::Active,
            synonym_variant: SynonymVariant::One,
        }
    }

    fn score(v: f64) -> SentenceScore {
        SentenceScore {
            sentence_id: "s".into(),
            scorer_id: "m".into(),
            metric: Metric::SentenceLl,
            value: v,
        }
    }

    #[test]
    fn sum_and_mean() {
        let r = record(&[(0, -1.0), (1, -2.0), (2, -3.0)]);
        assert_eq!(aggregate_sentence_score(&r, Aggregation::Sum).unwrap().value, -6.0);
        let m = aggregate_sentence_score(&r, Aggregation::Mean).unwrap();
        assert_eq!(m.value, -2.0);
        assert_eq!(m.metric, Metric::SurprisalNeg);
        let one = record(&[(0, -0.7)]);
        assert_eq!(aggregate_sentence_score(&one, Aggregation::Sum).unwrap().value, -0.7);
        assert_eq!(aggregate_sentence_score(&one, Aggregation::Mean).unwrap().value, -0.7);
        assert!(aggregate_sentence_score(&record(&[]), Aggregation::Sum).is_err());
    }

    #[test]
    fn rejects_positive_logprob_and_decreasing_words() {
        assert!(record(&[(0, 0.1)]).validate().is_err());
        assert!(record(&[(1, -1.0), (0, -1.0)]).validate().is_err());
    }

    #[test]
    fn last_word_means_subtokens() {
        assert_eq!(last_word_score(&record(&[(0, -1.0), (1, -2.0), (1, -4.0)])).unwrap().value, -3.0);
        assert_eq!(last_word_score(&record(&[(0, -9.0), (1, -1.5)])).unwrap().value, -1.5);
    }

    #[test]
    fn last_word_hand_traced_fixture() {
        // "The craftsman taught the trainee." with "craftsman" and "trainee." split.
        let r = record(&[
            (0, -2.1),
            (1, -7.3),
            (1, -0.4),
            (2, -5.2),
            (3, -0.9),
            (4, -6.6),
            (4, -1.8),
            (4, -0.05),
        ]);
        let by_hand = (-6.6 + -1.8 + -0.05) / 3.0;
        assert!((last_word_score(&r).unwrap().value - by_hand).abs() < 1e-12);
        let verb = verb_score(&r, Span::new(2, 3)).unwrap().value;
        assert_eq!(verb, -5.2);
        let np = verb_score(&r, Span::new(0, 2)).unwrap().value;
        assert!((np - (-2.1 - 7.3 - 0.4) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn verb_examples() {
        assert_eq!(verb_score(&record(&[(0, -1.0), (1, -3.0), (2, -1.0)]), Span::new(1, 2)).unwrap().value, -3.0);
        let r = record(&[(0, -1.0), (1, -2.0), (1, -2.0), (1, -2.0), (2, -5.0)]);
        assert_eq!(verb_score(&r, Span::new(1, 2)).unwrap().value, -2.0);
        assert!(verb_score(&r, Span::new(3, 4)).is_err());
    }

    #[test]
    fn decision_rule() {
        assert_eq!(pair_decision(key(), &score(-41.2), &score(-44.5)).unwrap().correct, 1);
        let tie = pair_decision(key(), &score(-41.2), &score(-41.2)).unwrap();
        assert_eq!((tie.correct, tie.tie), (0, true));
        assert_eq!(pair_decision(key(), &score(-44.5), &score(-41.2)).unwrap().correct, 0);
        let mut other = score(-1.0);
        other.metric = Metric::Verb;
        assert!(pair_decision(key(), &score(-2.0), &other).is_err());
    }

    #[test]
    fn accuracy_and_se() {
        let ds: Vec<_> = [1.0, 1.0, 1.0, -1.0]
            .iter()
            .map(|&d| pair_decision(key(), &score(d), &score(0.0)).unwrap())
            .collect();
        let a = binary_accuracy(&ds).unwrap();
        assert_eq!((a.k, a.n), (3, 4));
        assert!((a.se - (0.75f64 * 0.25 / 4.0).sqrt()).abs() < 1e-15);
        let ties: Vec<_> = (0..5).map(|_| pair_decision(key(), &score(0.0), &score(0.0)).unwrap()).collect();
        let t = binary_accuracy(&ties).unwrap();
        assert_eq!((t.accuracy, t.ties), (0.0, 5));
        assert!(binary_accuracy(&[]).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        let scores = vec![score(-1.5), score(-2.5)];
        write_sentence_scores(&p, &scores).unwrap();
        assert_eq!(read_sentence_scores(&p).unwrap(), scores);
    }

    #[test]
    fn parses_token_record_line() {
        let line = r#"{"sentence_id":"ab","scorer_id":"gpt2","scheme":"pll_word_l2r","tokens":[{"surface":"The","word_index":0,"logprob":-3.2}]}"#;
        let r: TokenLogProbRecord = serde_json::from_str(line).unwrap();
        assert_eq!(r.scheme, Scheme::PllWordL2r);
        assert!(r.validate().is_ok());
    }

    fn arb_logprobs() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-20.0f64..0.0, 1..12)
    }

    proptest! {
        #[test]
        fn shift_never_flips_equal_length_pairs(a in arb_logprobs(), c in -5.0f64..0.0, seed in 0u64..1000) {
            let b: Vec<f64> = a.iter().enumerate().map(|(i, x)| (x + ((i as u64 * 7 + seed) % 5) as f64 * -0.3).max(-30.0)).collect();
            let rec = |v: &[f64]| record(&v.iter().enumerate().map(|(i, &x)| (i, x)).collect::<Vec<_>>());
            let shift = |v: &[f64]| v.iter().map(|x| x + c).collect::<Vec<_>>();
            for agg in [Aggregation::Sum, Aggregation::Mean] {
                let before = pair_decision(key(), &aggregate_sentence_score(&rec(&a), agg).unwrap(), &aggregate_sentence_score(&rec(&b), agg).unwrap()).unwrap();
                let sa = aggregate_sentence_score(&rec(&shift(&a)), agg).unwrap();
                let sb = aggregate_sentence_score(&rec(&shift(&b)), agg).unwrap();
                let after = pair_decision(key(), &sa, &sb).unwrap();
                let sum_a: f64 = a.iter().sum();
                let sum_b: f64 = b.iter().sum();
                // Only compare when float rounding cannot change the order.
                if (sum_a - sum_b).abs() > 1e-9 {
                    prop_assert_eq!(before.correct, after.correct);
                }
            }
        }

        #[test]
        fn sum_and_mean_agree_on_equal_lengths(a in prop::collection::vec(-20.0f64..0.0, 6), b in prop::collection::vec(-20.0f64..0.0, 6)) {
            let rec = |v: &[f64]| record(&v.iter().enumerate().map(|(i, &x)| (i, x)).collect::<Vec<_>>());
            let d = |agg| pair_decision(key(), &aggregate_sentence_score(&rec(&a), agg).unwrap(), &aggregate_sentence_score(&rec(&b), agg).unwrap()).unwrap().correct;
            let gap: f64 = a.iter().sum::<f64>() - b.iter().sum::<f64>();
            prop_assume!(gap.abs() > 1e-9);
            prop_assert_eq!(d(Aggregation::Sum), d(Aggregation::Mean));
        }

        #[test]
        fn last_word_within_token_bounds(v in prop::collection::vec((0usize..3, -20.0f64..0.0), 1..15)) {
            let mut toks = v.clone();
            toks.sort_by_key(|t| t.0);
            let r = record(&toks);
            let lw = last_word_score(&r).unwrap().value;
            let lo = toks.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
            let hi = toks.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lw >= lo - 1e-12 && lw <= hi + 1e-12);
        }

        #[test]
        fn accuracy_is_permutation_invariant(bits in prop::collection::vec(any::<bool>(), 1..50), rot in 0usize..50) {
            let ds: Vec<_> = bits.iter().map(|&b| decide(key(), "m", if b { 1.0 } else { -1.0 }, 0.0)).collect();
            let mut rotated = ds.clone();
            let len = rotated.len();
            rotated.rotate_left(rot % len);
            rotated.reverse();
            prop_assert_eq!(binary_accuracy(&ds).unwrap(), binary_accuracy(&rotated).unwrap());
        }
    }
}
