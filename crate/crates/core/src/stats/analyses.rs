use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::hypothesis::{pearson_test, t_two_sided};
use super::StatResult;
use crate::corpus::{ItemType, MinimalPairItem, PairKey, Plausibility, ScoreMap, SynonymVariant, Voice};
use crate::error::{Error, Result};
use crate::scoring::PairDecision;

/// Which two versions of a sentence are correlated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Plausible against implausible member of each pair.
    PlausVsImplaus,
    /// Active against passive version of the same sentence.
    ActiveVsPassive,
    /// First against second synonym variant of the same sentence.
    Synonym,
}

fn score(scores: &ScoreMap, item: &MinimalPairItem, p: Plausibility) -> Result<f64> {
    let s = item.sentence(p);
    scores
        .get(&s.id)
        .copied()
        .ok_or_else(|| Error::Validation(format!("pair {}: no score for sentence {}", item.key(), s.id)))
}

/// Pearson test over aligned score pairs of the selected items.
pub fn paired_correlation(scores: &ScoreMap, items: &[MinimalPairItem], pairing: Pairing) -> Result<StatResult> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    match pairing {
        Pairing::PlausVsImplaus => {
            for it in items {
                x.push(score(scores, it, Plausibility::Plausible)?);
                y.push(score(scores, it, Plausibility::Implausible)?);
            }
        }
        Pairing::ActiveVsPassive | Pairing::Synonym => {
            let (first, second): (fn(&MinimalPairItem) -> bool, fn(&MinimalPairItem) -> bool) =
                if pairing == Pairing::ActiveVsPassive {
                    (|i| i.voice == Voice::Active, |i| i.voice == Voice::Passive)
                } else {
                    (
                        |i| i.synonym_variant == SynonymVariant::One,
                        |i| i.synonym_variant == SynonymVariant::Two,
                    )
                };
            let partner_key = |it: &MinimalPairItem| {
                let mut k = it.key();
                if pairing == Pairing::ActiveVsPassive {
                    k.voice = Voice::Na;
                } else {
                    k.synonym_variant = SynonymVariant::Na;
                }
                k
            };
            let seconds: HashMap<PairKey, &MinimalPairItem> =
                items.iter().filter(|i| second(i)).map(|i| (partner_key(i), i)).collect();
            let mut firsts: Vec<&MinimalPairItem> = items.iter().filter(|i| first(i)).collect();
            firsts.sort_by_key(|i| i.key());
            for a in firsts {
                let Some(b) = seconds.get(&partner_key(a)) else {
                    continue;
                };
                for p in [Plausibility::Plausible, Plausibility::Implausible] {
                    x.push(score(scores, a, p)?);
                    y.push(score(scores, b, p)?);
                }
            }
        }
    }
    if x.is_empty() {
        return Err(Error::InvalidInput(format!("no {pairing:?} pairings among the selected items")));
    }
    let mut res = pearson_test(&x, &y)?;
    res.name = "paired_r".into();
    Ok(res)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorProfileRow {
    pub pair: PairKey,
    pub item_type: ItemType,
    pub n_correct: usize,
    pub n_scorers: usize,
    pub human_difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorProfile {
    /// Sorted by human difference, largest first.
    pub rows: Vec<ErrorProfileRow>,
    /// Correlation of correct-count with human difference per item type;
    /// `Err` holds the reason when it is undefined.
    pub correlations: BTreeMap<ItemType, std::result::Result<StatResult, String>>,
}

/// Relates how many scorers got each pair right to the human score gap.
pub fn error_profile(
    decisions: &[PairDecision],
    human_differences: &[(PairKey, f64)],
    items: &[MinimalPairItem],
) -> Result<ErrorProfile> {
    let scorers: BTreeSet<&str> = decisions.iter().map(|d| d.scorer_id.as_str()).collect();
    if scorers.len() < 2 {
        return Err(Error::InvalidInput(format!("error profile needs ≥ 2 scorers, got {}", scorers.len())));
    }
    let human: HashMap<&PairKey, f64> = human_differences.iter().map(|(k, d)| (k, *d)).collect();
    let types: HashMap<PairKey, ItemType> = items.iter().map(|i| (i.key(), i.item_type)).collect();

    let mut correct: BTreeMap<&PairKey, BTreeMap<&str, bool>> = BTreeMap::new();
    for d in decisions {
        if !human.contains_key(&d.pair) {
            return Err(Error::Validation(format!("pair {} has decisions but no human difference", d.pair)));
        }
        correct.entry(&d.pair).or_default().insert(&d.scorer_id, d.is_correct());
    }
    if let Some((k, _)) = human.iter().find(|(k, _)| !correct.contains_key(*k)) {
        return Err(Error::Validation(format!("pair {k} has a human difference but no decisions")));
    }
    let mut rows = Vec::with_capacity(correct.len());
    for (pair, by) in &correct {
        if by.len() != scorers.len() {
            let missing: Vec<&str> = scorers.iter().filter(|s| !by.contains_key(*s)).copied().collect();
            return Err(Error::Validation(format!("pair {pair}: no decision from {}", missing.join(", "))));
        }
        let item_type = *types
            .get(*pair)
            .ok_or_else(|| Error::Validation(format!("pair {pair} is not among the items")))?;
        rows.push(ErrorProfileRow {
            pair: (*pair).clone(),
            item_type,
            n_correct: by.values().filter(|c| **c).count(),
            n_scorers: by.len(),
            human_difference: human[*pair],
        });
    }
    rows.sort_by(|a, b| b.human_difference.total_cmp(&a.human_difference).then_with(|| a.pair.cmp(&b.pair)));

    let mut correlations = BTreeMap::new();
    let present: BTreeSet<ItemType> = rows.iter().map(|r| r.item_type).collect();
    for t in present {
        let (x, y): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|r| r.item_type == t)
            .map(|r| (r.n_correct as f64, r.human_difference))
            .unzip();
        correlations.insert(t, pearson_test(&x, &y).map_err(|e| e.to_string()));
    }
    Ok(ErrorProfile { rows, correlations })
}

/// Accuracy values observed at one layer (one per fold, or a single mean).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerAccuracy {
    pub layer: usize,
    pub accuracies: Vec<f64>,
}

impl LayerAccuracy {
    pub fn mean(&self) -> f64 {
        self.accuracies.iter().sum::<f64>() / self.accuracies.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerGroup {
    Early,
    Middle,
    Late,
}

impl LayerGroup {
    pub const ALL: [LayerGroup; 3] = [LayerGroup::Early, LayerGroup::Middle, LayerGroup::Late];

    pub fn as_str(self) -> &'static str {
        match self {
            LayerGroup::Early => "early",
            LayerGroup::Middle => "middle",
            LayerGroup::Late => "late",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerGroupResult {
    pub group: LayerGroup,
    pub layers: Vec<usize>,
    pub mean_accuracy: f64,
    /// statistic = mean − ceiling; `t` in extra.
    pub vs_ceiling: StatResult,
    /// statistic = OLS slope of accuracy on layer index.
    pub trend: StatResult,
}

/// Sizes of the three contiguous groups; earlier groups take the remainder.
pub fn layer_groups(n_layers: usize) -> Result<[usize; 3]> {
    if n_layers < 3 {
        return Err(Error::InvalidInput(format!("{n_layers} layers; at least 3 are required")));
    }
    let base = n_layers / 3;
    let extra = n_layers % 3;
    Ok([0, 1, 2].map(|g| base + usize::from(g < extra)))
}

fn one_sample_vs(values: &[f64], target: f64) -> StatResult {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let diff = mean - target;
    let mut res = StatResult::new("mean_minus_ceiling", diff, 1.0, n);
    if n < 2 {
        return res;
    }
    let df = (n - 1) as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / df).sqrt();
    let t = if sd > 0.0 {
        diff / (sd / (n as f64).sqrt())
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    };
    res.p_value = t_two_sided(t, df);
    res.df = Some(df);
    res.set("t", t);
    res
}

fn slope_test(x: &[f64], y: &[f64]) -> StatResult {
    let n = x.len();
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let mut res = StatResult::new("slope", 0.0, 1.0, n);
    if sxx <= 0.0 {
        return res;
    }
    let slope = sxy / sxx;
    res.statistic = slope;
    if n < 3 {
        return res;
    }
    let df = (n - 2) as f64;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - my - slope * (a - mx)).powi(2))
        .sum();
    let se = (rss / df / sxx).sqrt();
    // Residuals below rounding noise count as an exact fit.
    let scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    let t = if se > 1e-12 * scale {
        slope / se
    } else if slope.abs() <= 1e-15 * scale {
        0.0
    } else {
        f64::INFINITY.copysign(slope)
    };
    res.p_value = t_two_sided(t, df);
    res.df = Some(df);
    res.set("t", t);
    res.set("se", se);
    res
}

/// Early / middle / late comparison with the ceiling and within-group trend.
pub fn layer_group_trend(layers: &[LayerAccuracy], ceiling: f64) -> Result<Vec<LayerGroupResult>> {
    let sizes = layer_groups(layers.len())?;
    if let Some(l) = layers.iter().find(|l| l.accuracies.is_empty() || l.accuracies.iter().any(|a| !a.is_finite())) {
        return Err(Error::InvalidInput(format!("layer {} has no usable accuracies", l.layer)));
    }
    let mut sorted: Vec<&LayerAccuracy> = layers.iter().collect();
    sorted.sort_by_key(|l| l.layer);
    if sorted.windows(2).any(|w| w[0].layer == w[1].layer) {
        return Err(Error::InvalidInput("duplicate layer index".into()));
    }
    let mut out = Vec::with_capacity(3);
    let mut start = 0;
    for (group, size) in LayerGroup::ALL.into_iter().zip(sizes) {
        let members = &sorted[start..start + size];
        start += size;
        let means: Vec<f64> = members.iter().map(|l| l.mean()).collect();
        let idx: Vec<f64> = members.iter().map(|l| l.layer as f64).collect();
        // With a single layer the per-fold values are the only replicates.
        let samples: Vec<f64> = if members.len() > 1 {
            means.clone()
        } else {
            members[0].accuracies.clone()
        };
        out.push(LayerGroupResult {
            group,
            layers: members.iter().map(|l| l.layer).collect(),
            mean_accuracy: means.iter().sum::<f64>() / means.len() as f64,
            vs_ceiling: one_sample_vs(&samples, ceiling),
            trend: slope_test(&idx, &means),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DatasetId, RoleSpans, Sentence, SentenceId};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn sentence(tag: &str) -> Sentence {
        Sentence {
            id: SentenceId(tag.into()),
            text: tag.into(),
            roles: RoleSpans::default(),
        }
    }

    fn item(pair: &str, t: ItemType, v: Voice, syn: SynonymVariant) -> MinimalPairItem {
        let tag = format!("{pair}-{v}-{syn}");
        MinimalPairItem {
            dataset: DatasetId::D1,
            pair_id: pair.into(),
            item_type: t,
            voice: v,
            synonym_variant: syn,
            plausible: sentence(&format!("{tag}-p")),
            implausible: sentence(&format!("{tag}-i")),
        }
    }

    #[test]
    fn active_passive_alignment() {
        let mut items = Vec::new();
        let mut scores = ScoreMap::new();
        for (k, base) in [0.9, 0.5, 0.7, 0.2].into_iter().enumerate() {
            let pair = k.to_string();
            for v in [Voice::Active, Voice::Passive] {
                let it = item(&pair, ItemType::Ai, v, SynonymVariant::One);
                let shift = if v == Voice::Passive { 0.01 } else { 0.0 };
                scores.insert(it.plausible.id.clone(), base + shift);
                scores.insert(it.implausible.id.clone(), base / 3.0 - shift);
                items.push(it);
            }
        }
        let r = paired_correlation(&scores, &items, Pairing::ActiveVsPassive).unwrap();
        assert_eq!(r.n, 8);
        assert!(r.statistic > 0.99);
        assert!(paired_correlation(&scores, &items, Pairing::Synonym).is_err());
        let pi = paired_correlation(&scores, &items, Pairing::PlausVsImplaus).unwrap();
        assert_eq!(pi.n, 8);
    }

    #[test]
    fn missing_score_is_an_error() {
        let items = vec![item("1", ItemType::Aa, Voice::Active, SynonymVariant::One)];
        assert!(paired_correlation(&ScoreMap::new(), &items, Pairing::PlausVsImplaus).is_err());
    }

    fn decisions(pairs: &[PairKey], scorer: &str, correct: impl Fn(usize) -> bool) -> Vec<PairDecision> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, p)| PairDecision {
                pair: p.clone(),
                scorer_id: scorer.into(),
                correct: u8::from(correct(i)),
                tie: false,
            })
            .collect()
    }

    #[test]
    fn all_correct_is_undefined() {
        let items: Vec<_> = (0..6)
            .map(|i| item(&i.to_string(), ItemType::Ai, Voice::Active, SynonymVariant::One))
            .collect();
        let keys: Vec<PairKey> = items.iter().map(|i| i.key()).collect();
        let human: Vec<(PairKey, f64)> = keys.iter().cloned().zip([0.5, 0.1, 0.9, 0.3, 0.7, 0.2]).collect();
        let mut d = decisions(&keys, "a", |_| true);
        d.extend(decisions(&keys, "b", |_| true));
        let prof = error_profile(&d, &human, &items).unwrap();
        let c = &prof.correlations[&ItemType::Ai];
        assert!(c.as_ref().unwrap_err().contains("undefined (zero variance)"));
        let diffs: Vec<f64> = prof.rows.iter().map(|r| r.human_difference).collect();
        assert_eq!(diffs, [0.9, 0.7, 0.5, 0.3, 0.2, 0.1]);
    }

    #[test]
    fn misaligned_pairs_rejected() {
        let items: Vec<_> = (0..4)
            .map(|i| item(&i.to_string(), ItemType::Aa, Voice::Active, SynonymVariant::One))
            .collect();
        let keys: Vec<PairKey> = items.iter().map(|i| i.key()).collect();
        let human: Vec<(PairKey, f64)> = keys[..3].iter().cloned().map(|k| (k, 0.1)).collect();
        let mut d = decisions(&keys, "a", |_| true);
        d.extend(decisions(&keys, "b", |i| i % 2 == 0));
        assert!(error_profile(&d, &human, &items).is_err());
        assert!(error_profile(&d[..4], &human, &items).is_err());
    }

    #[test]
    fn recovers_engineered_correlation() {
        let n = 4000;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let std = Normal::new(0.0, 1.0).unwrap();
        let items: Vec<_> = (0..n)
            .map(|i| item(&i.to_string(), ItemType::Ai, Voice::Active, SynonymVariant::One))
            .collect();
        let keys: Vec<PairKey> = items.iter().map(|i| i.key()).collect();
        let counts: Vec<usize> = (0..n).map(|i| (i * 7919) % 6).collect();
        let mc = counts.iter().sum::<usize>() as f64 / n as f64;
        let sc = (counts.iter().map(|&c| (c as f64 - mc).powi(2)).sum::<f64>() / n as f64).sqrt();
        let human: Vec<(PairKey, f64)> = keys
            .iter()
            .zip(&counts)
            .map(|(k, &c)| (k.clone(), 0.5 * (c as f64 - mc) / sc + 0.75f64.sqrt() * std.sample(&mut rng)))
            .collect();
        let mut d = Vec::new();
        for s in 0..5 {
            d.extend(decisions(&keys, &format!("m{s}"), |i| s < counts[i]));
        }
        let prof = error_profile(&d, &human, &items).unwrap();
        let r = prof.correlations[&ItemType::Ai].as_ref().unwrap().statistic;
        assert!((r - 0.5).abs() < 0.05, "r = {r}");
    }

    fn layers(values: &[f64]) -> Vec<LayerAccuracy> {
        values
            .iter()
            .enumerate()
            .map(|(i, &a)| LayerAccuracy {
                layer: i,
                accuracies: vec![a],
            })
            .collect()
    }

    #[test]
    fn group_sizes() {
        assert_eq!(layer_groups(12).unwrap(), [4, 4, 4]);
        assert_eq!(layer_groups(13).unwrap(), [5, 4, 4]);
        assert_eq!(layer_groups(14).unwrap(), [5, 5, 4]);
        assert!(layer_groups(2).is_err());
    }

    #[test]
    fn constant_accuracies() {
        let res = layer_group_trend(&layers(&[0.7; 12]), 0.9).unwrap();
        for g in &res {
            assert_eq!(g.trend.statistic, 0.0);
            assert_eq!(g.trend.p_value, 1.0);
            assert!((g.vs_ceiling.statistic + 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn increasing_accuracies() {
        let acc: Vec<f64> = (0..12).map(|i| 0.5 + 0.4 * i as f64 / 11.0).collect();
        let res = layer_group_trend(&layers(&acc), 0.95).unwrap();
        assert_eq!(res[0].layers, [0, 1, 2, 3]);
        assert!(res.iter().all(|g| g.trend.statistic > 0.0));
    }

    #[test]
    fn recovers_slope() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noise = Normal::new(0.0, 0.002).unwrap();
        let data: Vec<LayerAccuracy> = (0..24)
            .map(|l| LayerAccuracy {
                layer: l,
                accuracies: (0..10).map(|_| 0.55 + 0.01 * l as f64 + noise.sample(&mut rng)).collect(),
            })
            .collect();
        for g in layer_group_trend(&data, 0.92).unwrap() {
            assert!((g.trend.statistic - 0.01).abs() < 0.002, "{:?}", g.trend);
            assert!(g.trend.p_value < 0.01);
        }
    }
}
