//! Linear plausibility probes on sentence embeddings.
//!
//! Classifiers minimise ½‖w‖² + C·Σ loss with the intercept appended as a
//! constant feature (and therefore penalized), optimised with L-BFGS.
//! Cross-validation folds partition pair groups, never sentences.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{HumanRatings, ItemType, MinimalPairItem, Plausibility, SentenceId, Voice};
use crate::error::{Error, Result};
use crate::scoring::read_jsonl;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SummaryToken {
    Cls,
    Final,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub sentence_id: SentenceId,
    pub scorer_id: String,
    /// 0 is the static embedding layer.
    pub layer: usize,
    pub summary_token: SummaryToken,
    pub vector: Vec<f64>,
}

/// All layers of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub scorer_id: String,
    pub summary_token: SummaryToken,
    pub layers: BTreeMap<usize, HashMap<SentenceId, Vec<f64>>>,
}

impl EmbeddingSet {
    pub fn layer(&self, layer: usize) -> Result<&HashMap<SentenceId, Vec<f64>>> {
        self.layers
            .get(&layer)
            .ok_or_else(|| Error::InvalidInput(format!("{} has no layer {layer}", self.scorer_id)))
    }
}

/// Groups records by scorer, checking dimension and summary-token consistency.
pub fn group_embeddings(records: Vec<EmbeddingRecord>) -> Result<BTreeMap<String, EmbeddingSet>> {
    let mut out: BTreeMap<String, EmbeddingSet> = BTreeMap::new();
    let mut dims: HashMap<(String, usize), usize> = HashMap::new();
    for r in records {
        if r.vector.is_empty() || r.vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "{} layer {} sentence {}: empty or non-finite vector",
                r.scorer_id, r.layer, r.sentence_id
            )));
        }
        let dim = *dims.entry((r.scorer_id.clone(), r.layer)).or_insert(r.vector.len());
        if dim != r.vector.len() {
            return Err(Error::Validation(format!(
                "{} layer {}: dimension {} after {dim}",
                r.scorer_id,
                r.layer,
                r.vector.len()
            )));
        }
        let set = out.entry(r.scorer_id.clone()).or_insert_with(|| EmbeddingSet {
            scorer_id: r.scorer_id.clone(),
            summary_token: r.summary_token,
            layers: BTreeMap::new(),
        });
        if set.summary_token != r.summary_token {
            return Err(Error::Validation(format!("{}: mixed summary tokens", r.scorer_id)));
        }
        let layer = set.layers.entry(r.layer).or_default();
        if layer.insert(r.sentence_id.clone(), r.vector).is_some() {
            return Err(Error::Validation(format!(
                "{} layer {}: duplicate sentence {}",
                r.scorer_id, r.layer, r.sentence_id
            )));
        }
    }
    Ok(out)
}

pub fn read_embeddings(path: &Path) -> Result<BTreeMap<String, EmbeddingSet>> {
    group_embeddings(read_jsonl(path, |_: &EmbeddingRecord| Ok(()))?)
}

/// Fold assignment of pair groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Folds {
    k: usize,
    fold_of: BTreeMap<String, usize>,
}

impl Folds {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fold(&self, group: &str) -> Option<usize> {
        self.fold_of.get(group).copied()
    }

    pub fn members(&self, fold: usize) -> Vec<&str> {
        self.fold_of
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(g, _)| g.as_str())
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in self.fold_of.values() {
            s[f] += 1;
        }
        s
    }
}

/// Shuffles the distinct groups with a seeded RNG and deals them round-robin.
pub fn pair_preserving_folds<S: AsRef<str>>(groups: &[S], k: usize, seed: u64) -> Result<Folds> {
    let mut distinct: Vec<&str> = groups
        .iter()
        .map(|g| g.as_ref())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if k < 2 || k > distinct.len() {
        return Err(Error::InvalidInput(format!("{k} folds over {} pairs", distinct.len())));
    }
    distinct.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let fold_of = distinct
        .into_iter()
        .enumerate()
        .map(|(i, g)| (g.to_string(), i % k))
        .collect();
    Ok(Folds { k, fold_of })
}

/// Rows for one probe: features, class labels and pair group.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProbeData {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub groups: Vec<String>,
}

impl ProbeData {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn push(&mut self, features: Vec<f64>, label: usize, group: impl Into<String>) {
        self.features.push(features);
        self.labels.push(label);
        self.groups.push(group.into());
    }

    fn validate(&self) -> Result<usize> {
        if self.features.len() != self.labels.len() || self.groups.len() != self.labels.len() {
            return Err(Error::InvalidInput("features, labels and groups differ in length".into()));
        }
        let dim = self.features.first().map_or(0, Vec::len);
        if dim == 0 || self.features.iter().any(|f| f.len() != dim) {
            return Err(Error::InvalidInput("probe features must share one nonzero dimension".into()));
        }
        Ok(dim)
    }

    fn subset(&self, keep: impl Fn(usize) -> bool) -> ProbeData {
        let mut out = ProbeData::default();
        for i in (0..self.len()).filter(|&i| keep(i)) {
            out.push(self.features[i].clone(), self.labels[i], self.groups[i].clone());
        }
        out
    }
}

/// Differentiable objective over a flat parameter vector.
trait Objective {
    fn dim(&self) -> usize;
    fn eval(&self, w: &[f64], grad: &mut [f64]) -> f64;
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// L-BFGS with Armijo backtracking. Stops once ½‖∇f‖² ≤ 1e-8·f, which for
/// these 1-strongly-convex objectives bounds the relative loss gap by 1e-8.
fn lbfgs(obj: &dyn Objective, max_iter: usize) -> (Vec<f64>, f64, bool) {
    const MEMORY: usize = 10;
    let n = obj.dim();
    let mut w = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut f = obj.eval(&w, &mut g);
    let mut hist: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    let mut g_new = vec![0.0; n];
    for _ in 0..max_iter {
        let gg = dot(&g, &g);
        if 0.5 * gg <= 1e-8 * f.max(f64::MIN_POSITIVE) || gg == 0.0 {
            return (w, f, true);
        }
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alpha = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &d);
            for (di, yi) in d.iter_mut().zip(y) {
                *di -= a * yi;
            }
            alpha.push(a);
        }
        if let Some((s, y, _)) = hist.last() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in hist.iter().zip(alpha.into_iter().rev()) {
            let b = rho * dot(y, &d);
            for (di, si) in d.iter_mut().zip(s) {
                *di += (a - b) * si;
            }
        }
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            hist.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -gg;
        }
        let mut step = if hist.is_empty() { 1.0 / gg.sqrt().max(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = w.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let ft = obj.eval(&trial, &mut g_new);
            if ft <= f + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((w_new, f_new)) = accepted else {
            return (w, f, false);
        };
        let s: Vec<f64> = w_new.iter().zip(&w).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if hist.len() == MEMORY {
                hist.remove(0);
            }
            hist.push((s, y, 1.0 / sy));
        }
        w = w_new;
        f = f_new;
        g.copy_from_slice(&g_new);
    }
    (w, f, false)
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

struct BinaryLoss<'a> {
    x: &'a [Vec<f64>],
    y: Vec<f64>,
    c: f64,
}

impl Objective for BinaryLoss<'_> {
    fn dim(&self) -> usize {
        self.x[0].len() + 1
    }

    fn eval(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        let d = w.len() - 1;
        grad.copy_from_slice(w);
        let mut f = 0.5 * dot(w, w);
        for (xi, &yi) in self.x.iter().zip(&self.y) {
            let z = dot(&w[..d], xi) + w[d];
            f += self.c * softplus(-yi * z);
            let coef = -self.c * yi * sigmoid(-yi * z);
            for (gj, xj) in grad[..d].iter_mut().zip(xi) {
                *gj += coef * xj;
            }
            grad[d] += coef;
        }
        f
    }
}

struct SoftmaxLoss<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    weights: Vec<f64>,
    classes: usize,
    c: f64,
}

impl Objective for SoftmaxLoss<'_> {
    fn dim(&self) -> usize {
        self.classes * (self.x[0].len() + 1)
    }

    fn eval(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        let stride = self.x[0].len() + 1;
        grad.copy_from_slice(w);
        let mut f = 0.5 * dot(w, w);
        let mut z = vec![0.0; self.classes];
        for (xi, &yi) in self.x.iter().zip(self.y) {
            for (k, zk) in z.iter_mut().enumerate() {
                let wk = &w[k * stride..(k + 1) * stride];
                *zk = dot(&wk[..stride - 1], xi) + wk[stride - 1];
            }
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            let s = self.c * self.weights[yi];
            f += s * (lse - z[yi]);
            for k in 0..self.classes {
                let coef = s * ((z[k] - lse).exp() - f64::from(u8::from(k == yi)));
                let gk = &mut grad[k * stride..(k + 1) * stride];
                for (gj, xj) in gk[..stride - 1].iter_mut().zip(xi) {
                    *gj += coef * xj;
                }
                gk[stride - 1] += coef;
            }
        }
        f
    }
}

/// Penalized linear classifier; the last entry of each weight row is the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub weights: Vec<Vec<f64>>,
    pub loss: f64,
    pub converged: bool,
}

impl LinearClassifier {
    fn score(w: &[f64], x: &[f64]) -> f64 {
        dot(&w[..w.len() - 1], x) + w[w.len() - 1]
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        if self.weights.len() == 1 {
            usize::from(Self::score(&self.weights[0], x) > 0.0)
        } else {
            let mut best = 0;
            let mut best_score = f64::NEG_INFINITY;
            for (k, w) in self.weights.iter().enumerate() {
                let s = Self::score(w, x);
                if s > best_score {
                    best = k;
                    best_score = s;
                }
            }
            best
        }
    }

    pub fn accuracy(&self, x: &[Vec<f64>], y: &[usize]) -> f64 {
        let hits = x.iter().zip(y).filter(|(xi, &yi)| self.predict(xi) == yi).count();
        hits as f64 / y.len() as f64
    }
}

const MAX_ITER: usize = 2000;

/// Binary logistic regression on labels {0, 1}.
pub fn fit_logistic(x: &[Vec<f64>], y: &[usize], c: f64) -> Result<LinearClassifier> {
    let present: BTreeSet<usize> = y.iter().copied().collect();
    if present.len() < 2 {
        return Err(Error::SingleClass(format!("only label(s) {present:?} present")));
    }
    if present.iter().any(|&l| l > 1) {
        return Err(Error::InvalidInput("binary labels must be 0 or 1".into()));
    }
    let obj = BinaryLoss {
        x,
        y: y.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect(),
        c,
    };
    let (w, loss, converged) = lbfgs(&obj, MAX_ITER);
    Ok(LinearClassifier {
        weights: vec![w],
        loss,
        converged,
    })
}

/// Multinomial logistic regression with inverse-frequency class weights.
pub fn fit_multinomial(x: &[Vec<f64>], y: &[usize], classes: &[&str], c: f64) -> Result<LinearClassifier> {
    let k = classes.len();
    let mut counts = vec![0usize; k];
    for &l in y {
        *counts
            .get_mut(l)
            .ok_or_else(|| Error::InvalidInput(format!("label {l} outside {k} classes")))? += 1;
    }
    if let Some(empty) = counts.iter().position(|&n| n == 0) {
        return Err(Error::SingleClass(format!("class `{}` is absent from the training split", classes[empty])));
    }
    let n = y.len() as f64;
    let obj = SoftmaxLoss {
        x,
        y,
        weights: counts.iter().map(|&m| n / (k as f64 * m as f64)).collect(),
        classes: k,
        c,
    };
    let (w, loss, converged) = lbfgs(&obj, MAX_ITER);
    let stride = x[0].len() + 1;
    Ok(LinearClassifier {
        weights: w.chunks(stride).map(<[f64]>::to_vec).collect(),
        loss,
        converged,
    })
}

/// Cross-validated accuracy for one (train, test, layer) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub train: String,
    pub test: String,
    pub layer: Option<usize>,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    pub ceiling: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Task {
    Binary,
    Multiclass,
}

pub const MULTICLASS_LABELS: [&str; 3] = ["impossible", "unlikely", "plausible"];

/// Regularization strength C.
pub const PROBE_C: f64 = 1.0;

fn cross_validate(train: &ProbeData, test: &ProbeData, folds: &Folds, task: Task) -> Result<Vec<f64>> {
    let dim = train.validate()?;
    if test.validate()? != dim {
        return Err(Error::InvalidInput("train and test features differ in dimension".into()));
    }
    let fold_of = |d: &ProbeData| -> Result<Vec<usize>> {
        d.groups
            .iter()
            .map(|g| folds.fold(g).ok_or_else(|| Error::InvalidInput(format!("pair `{g}` has no fold"))))
            .collect()
    };
    let train_folds = fold_of(train)?;
    let test_folds = fold_of(test)?;
    let mut accs = Vec::with_capacity(folds.k());
    for fold in 0..folds.k() {
        let te = test.subset(|i| test_folds[i] == fold);
        if te.is_empty() {
            continue;
        }
        let tr = train.subset(|i| train_folds[i] != fold);
        if tr.is_empty() {
            return Err(Error::InvalidInput(format!("fold {fold}: empty training split")));
        }
        let model = match task {
            Task::Binary => fit_logistic(&tr.features, &tr.labels, PROBE_C),
            Task::Multiclass => fit_multinomial(&tr.features, &tr.labels, &MULTICLASS_LABELS, PROBE_C),
        }
        .map_err(|e| match e {
            Error::SingleClass(m) => Error::SingleClass(format!("fold {fold}: {m}")),
            other => other,
        })?;
        accs.push(model.accuracy(&te.features, &te.labels));
    }
    if accs.is_empty() {
        return Err(Error::InvalidInput("no fold contains test rows".into()));
    }
    Ok(accs)
}

fn report(train: &str, test: &str, layer: Option<usize>, accs: Vec<f64>) -> ProbeReport {
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    ProbeReport {
        train: train.into(),
        test: test.into(),
        layer,
        fold_accuracies: accs,
        mean_accuracy: mean,
        ceiling: None,
    }
}

/// Binary probe; labels 1 = plausible, 0 = implausible.
pub fn train_probe(data: &ProbeData, folds: &Folds) -> Result<ProbeReport> {
    let accs = cross_validate(data, data, folds, Task::Binary)?;
    Ok(report("all", "all", None, accs))
}

/// The binary pipeline on a single feature: mean human rating.
pub fn ceiling_probe(ratings: &[f64], labels: &[usize], groups: &[String], folds: &Folds) -> Result<ProbeReport> {
    let data = ProbeData {
        features: ratings.iter().map(|&r| vec![r]).collect(),
        labels: labels.to_vec(),
        groups: groups.to_vec(),
    };
    let mut rep = train_probe(&data, folds)?;
    rep.train = "ceiling".into();
    rep.test = "ceiling".into();
    rep.ceiling = Some(rep.mean_accuracy);
    Ok(rep)
}

/// Three-way class of a mean rating on the 1–7 scale (rounded half up).
pub fn rating_class(mean_rating: f64) -> usize {
    match mean_rating.round() as i64 {
        i64::MIN..=2 => 0,
        3..=5 => 1,
        _ => 2,
    }
}

pub fn multiclass_probe(features: &[Vec<f64>], ratings: &[f64], groups: &[String], folds: &Folds) -> Result<ProbeReport> {
    let data = ProbeData {
        features: features.to_vec(),
        labels: ratings.iter().map(|&r| rating_class(r)).collect(),
        groups: groups.to_vec(),
    };
    let accs = cross_validate(&data, &data, folds, Task::Multiclass)?;
    Ok(report("multiclass", "multiclass", None, accs))
}

/// Subset of items by item type and voice; `None` means all. "All" item
/// types exclude `AA_control`, whose sentences carry no plausibility contrast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Condition {
    pub item_type: Option<ItemType>,
    pub voice: Option<Voice>,
}

impl Condition {
    pub const ALL: Condition = Condition {
        item_type: None,
        voice: None,
    };

    pub fn new(item_type: Option<ItemType>, voice: Option<Voice>) -> Self {
        Condition { item_type, voice }
    }

    pub fn matches(&self, item: &MinimalPairItem) -> bool {
        let type_ok = match self.item_type {
            Some(t) => item.item_type == t,
            None => item.is_contrastive(),
        };
        type_ok && self.voice.is_none_or(|v| item.voice == v)
    }

    /// The nine combinations of {AI, AA, all} × {active, passive, all}.
    pub fn grid() -> Vec<Condition> {
        let types = [Some(ItemType::Ai), Some(ItemType::Aa), None];
        let voices = [Some(Voice::Active), Some(Voice::Passive), None];
        types
            .iter()
            .flat_map(|&t| voices.iter().map(move |&v| Condition::new(t, v)))
            .collect()
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = self.item_type.map_or("all", |t| t.as_str());
        let v = self.voice.map_or("all", |v| v.as_str());
        write!(f, "{t}/{v}")
    }
}

/// Fold group of an item: dataset and pair id, so every version of a pair
/// (both plausibilities, voices and synonym variants) stays together.
pub fn pair_group(item: &MinimalPairItem) -> String {
    format!("{}:{}", item.dataset, item.pair_id)
}

/// Binary probe rows for the items of one condition.
pub fn condition_rows(
    items: &[MinimalPairItem],
    cond: Condition,
    feature: impl Fn(&SentenceId) -> Result<Vec<f64>>,
) -> Result<ProbeData> {
    let mut data = ProbeData::default();
    for it in items.iter().filter(|i| cond.matches(i)) {
        for (p, s) in it.sentences() {
            data.push(feature(&s.id)?, usize::from(p == Plausibility::Plausible), pair_group(it));
        }
    }
    if data.is_empty() {
        return Err(Error::InvalidInput(format!("condition {cond} selects no items")));
    }
    Ok(data)
}

fn embedding_lookup(layer: &HashMap<SentenceId, Vec<f64>>) -> impl Fn(&SentenceId) -> Result<Vec<f64>> + '_ {
    |id| layer.get(id).cloned().ok_or_else(|| Error::MissingVector(id.to_string()))
}

/// Folds over every pair group of either condition.
pub fn union_folds(items: &[MinimalPairItem], train: Condition, test: Condition, k: usize, seed: u64) -> Result<Folds> {
    let groups: Vec<String> = items
        .iter()
        .filter(|i| train.matches(i) || test.matches(i))
        .map(pair_group)
        .collect();
    pair_preserving_folds(&groups, k, seed)
}

/// Train on one condition outside each fold, test on another inside it,
/// for every layer. With `ratings`, each report also carries the ceiling
/// probe on the same split.
pub fn generalization_matrix(
    items: &[MinimalPairItem],
    embeddings: &EmbeddingSet,
    cells: &[(Condition, Condition)],
    ratings: Option<&HumanRatings>,
    k: usize,
    seed: u64,
) -> Result<Vec<ProbeReport>> {
    let mut out = Vec::new();
    for &(train, test) in cells {
        let folds = union_folds(items, train, test, k, seed)?;
        let ceiling = match ratings {
            Some(r) => {
                let rating = |id: &SentenceId| {
                    r.get(id)
                        .map(|x| vec![x.mean_rating])
                        .ok_or_else(|| Error::Validation(format!("no rating for sentence {id}")))
                };
                let tr = condition_rows(items, train, rating)?;
                let te = condition_rows(items, test, rating)?;
                let accs = cross_validate(&tr, &te, &folds, Task::Binary)?;
                Some(accs.iter().sum::<f64>() / accs.len() as f64)
            }
            None => None,
        };
        for (&layer, vectors) in &embeddings.layers {
            let tr = condition_rows(items, train, embedding_lookup(vectors))?;
            let te = condition_rows(items, test, embedding_lookup(vectors))?;
            let accs = cross_validate(&tr, &te, &folds, Task::Binary)?;
            let mut rep = report(&train.to_string(), &test.to_string(), Some(layer), accs);
            rep.ceiling = ceiling;
            out.push(rep);
        }
    }
    Ok(out)
}

fn layer_text(l: Option<usize>) -> String {
    l.map_or_else(|| "-".into(), |l| l.to_string())
}

/// `train test layer fold accuracy`, one row per fold.
pub fn fold_table(reports: &[ProbeReport]) -> String {
    let mut out = String::from("train\ttest\tlayer\tfold\taccuracy\n");
    for r in reports {
        for (i, a) in r.fold_accuracies.iter().enumerate() {
            out.push_str(&format!("{}\t{}\t{}\t{i}\t{a:.6}\n", r.train, r.test, layer_text(r.layer)));
        }
    }
    out
}

/// `train test layer mean_acc ceiling`, one row per report.
pub fn summary_table(reports: &[ProbeReport]) -> String {
    let mut out = String::from("train\ttest\tlayer\tmean_acc\tceiling\n");
    for r in reports {
        let ceiling = r.ceiling.map_or_else(|| "NA".into(), |c| format!("{c:.6}"));
        out.push_str(&format!(
            "{}\t{}\t{}\t{:.6}\t{ceiling}\n",
            r.train,
            r.test,
            layer_text(r.layer),
            r.mean_accuracy
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn groups(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn fold_sizes() {
        let f = pair_preserving_folds(&groups(20), 10, 1).unwrap();
        assert_eq!(f.sizes(), vec![2; 10]);
        let f = pair_preserving_folds(&groups(391), 10, 1).unwrap();
        let mut s = f.sizes();
        s.sort();
        assert_eq!(s, [vec![39; 9], vec![40]].concat());
        assert_eq!(f, pair_preserving_folds(&groups(391), 10, 1).unwrap());
        assert_ne!(f, pair_preserving_folds(&groups(391), 10, 2).unwrap());
        assert!(pair_preserving_folds(&groups(5), 10, 1).is_err());
    }

    fn clusters(n: usize, seed: u64, sep: f64) -> ProbeData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let mut d = ProbeData::default();
        for i in 0..n {
            for label in [0usize, 1] {
                let c = if label == 1 { sep } else { -sep };
                d.push(vec![c + noise.sample(&mut rng), noise.sample(&mut rng)], label, format!("p{i}"));
            }
        }
        d
    }

    #[test]
    fn separable_clusters() {
        let d = clusters(100, 3, 2.0);
        let folds = pair_preserving_folds(&d.groups, 10, 0).unwrap();
        let r = train_probe(&d, &folds).unwrap();
        assert!(r.mean_accuracy >= 0.99, "{r:?}");
        assert_eq!(r.fold_accuracies.len(), 10);
    }

    #[test]
    fn single_class_rejected() {
        let mut d = clusters(20, 3, 2.0);
        d.labels.iter_mut().for_each(|l| *l = 1);
        let folds = pair_preserving_folds(&d.groups, 10, 0).unwrap();
        assert!(matches!(train_probe(&d, &folds), Err(Error::SingleClass(_))));
    }

    /// Newton's method on the same objective as an independent optimum.
    fn newton_binary(x: &[Vec<f64>], y: &[usize]) -> f64 {
        use nalgebra::{DMatrix, DVector};
        let d = x[0].len() + 1;
        let mut w = DVector::zeros(d);
        let aug = |xi: &Vec<f64>| DVector::from_iterator(d, xi.iter().copied().chain([1.0]));
        let loss = |w: &DVector<f64>| {
            0.5 * w.norm_squared()
                + x.iter()
                    .zip(y)
                    .map(|(xi, &yi)| softplus(-(2.0 * yi as f64 - 1.0) * w.dot(&aug(xi))))
                    .sum::<f64>()
        };
        for _ in 0..50 {
            let mut g = w.clone();
            let mut h = DMatrix::identity(d, d);
            for (xi, &yi) in x.iter().zip(y) {
                let a = aug(xi);
                let p = sigmoid(w.dot(&a));
                g += &a * (p - yi as f64);
                h += &a * a.transpose() * (p * (1.0 - p));
            }
            w -= h.cholesky().unwrap().solve(&g);
        }
        loss(&w)
    }

    #[test]
    fn reaches_convex_optimum() {
        let d = clusters(60, 8, 0.4);
        let m = fit_logistic(&d.features, &d.labels, 1.0).unwrap();
        let best = newton_binary(&d.features, &d.labels);
        assert!(m.converged);
        assert!((m.loss - best) / best < 1e-6, "{} vs {best}", m.loss);
    }

    #[test]
    fn random_labels_near_chance() {
        let mut total = 0.0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let mut d = clusters(50, seed, 0.0);
            d.labels.iter_mut().for_each(|l| *l = rng.gen_range(0..2));
            let folds = pair_preserving_folds(&d.groups, 10, seed).unwrap();
            if let Ok(r) = train_probe(&d, &folds) {
                total += r.mean_accuracy;
            }
        }
        let mean = total / 20.0;
        assert!((mean - 0.5).abs() < 0.1, "{mean}");
    }

    #[test]
    fn ceiling_on_separated_ratings() {
        let g = groups(30);
        let mut ratings = Vec::new();
        let mut labels = Vec::new();
        let mut gs = Vec::new();
        for p in &g {
            ratings.extend([7.0, 1.0]);
            labels.extend([1, 0]);
            gs.extend([p.clone(), p.clone()]);
        }
        let folds = pair_preserving_folds(&gs, 10, 4).unwrap();
        let r = ceiling_probe(&ratings, &labels, &gs, &folds).unwrap();
        assert_eq!(r.mean_accuracy, 1.0);
        assert_eq!(r.ceiling, Some(1.0));
    }

    #[test]
    fn rating_classes() {
        assert_eq!(MULTICLASS_LABELS[rating_class(1.6)], "impossible");
        assert_eq!(rating_class(1.6), 0);
        assert_eq!(rating_class(5.4), 1);
        assert_eq!(rating_class(6.5), 2);
        assert_eq!(rating_class(2.4), 0);
        assert_eq!(rating_class(2.5), 1);
    }

    #[test]
    fn multiclass_clusters_and_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let centers = [([-3.0, 0.0], 1.0), ([0.0, 3.0], 4.0), ([3.0, 0.0], 7.0)];
        let mut x = Vec::new();
        let mut r = Vec::new();
        let mut g = Vec::new();
        for i in 0..150 {
            let (c, rating) = centers[i % 3];
            x.push(vec![c[0] + noise.sample(&mut rng), c[1] + noise.sample(&mut rng)]);
            r.push(rating);
            g.push(format!("p{}", i / 2));
        }
        let folds = pair_preserving_folds(&g, 10, 1).unwrap();
        let rep = multiclass_probe(&x, &r, &g, &folds).unwrap();
        assert!(rep.mean_accuracy >= 0.95, "{rep:?}");

        let uniform: Vec<Vec<f64>> = (0..x.len()).map(|_| vec![rng.gen(), rng.gen()]).collect();
        let rep = multiclass_probe(&uniform, &r, &g, &folds).unwrap();
        assert!((rep.mean_accuracy - 1.0 / 3.0).abs() < 0.1, "{rep:?}");
    }

    #[test]
    fn multiclass_names_missing_class() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let r: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 1.0 } else { 7.0 }).collect();
        let g: Vec<String> = (0..20).map(|i| format!("p{}", i / 2)).collect();
        let folds = pair_preserving_folds(&g, 5, 1).unwrap();
        let err = multiclass_probe(&x, &r, &g, &folds).unwrap_err();
        assert!(err.to_string().contains("unlikely"), "{err}");
    }

    #[test]
    fn embedding_consistency() {
        let rec = |id: &str, layer, dim: usize, tok| EmbeddingRecord {
            sentence_id: SentenceId(id.into()),
            scorer_id: "m".into(),
            layer,
            summary_token: tok,
            vector: vec![0.5; dim],
        };
        let ok = group_embeddings(vec![rec("a", 0, 3, SummaryToken::Cls), rec("b", 0, 3, SummaryToken::Cls), rec("a", 1, 4, SummaryToken::Cls)]).unwrap();
        assert_eq!(ok["m"].layers.len(), 2);
        assert!(group_embeddings(vec![rec("a", 0, 3, SummaryToken::Cls), rec("b", 0, 2, SummaryToken::Cls)]).is_err());
        assert!(group_embeddings(vec![rec("a", 0, 3, SummaryToken::Cls), rec("b", 1, 3, SummaryToken::Final)]).is_err());
        assert!(group_embeddings(vec![rec("a", 0, 3, SummaryToken::Cls), rec("a", 0, 3, SummaryToken::Cls)]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn folds_never_split_pairs(n in 10usize..80, k in 2usize..10, seed in any::<u64>()) {
            let mut gs = Vec::new();
            for p in groups(n) {
                gs.push(p.clone());
                gs.push(p);
            }
            let f = pair_preserving_folds(&gs, k, seed).unwrap();
            let sizes = f.sizes();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        }

        #[test]
        fn rotation_invariant(seed in 0u64..1000, angle in 0.0f64..std::f64::consts::TAU) {
            let d = clusters(40, seed, 0.5);
            let folds = pair_preserving_folds(&d.groups, 5, seed).unwrap();
            let (s, c) = angle.sin_cos();
            let mut rot = d.clone();
            for f in &mut rot.features {
                *f = vec![c * f[0] - s * f[1], s * f[0] + c * f[1]];
            }
            let a = train_probe(&d, &folds).unwrap();
            let b = train_probe(&rot, &folds).unwrap();
            prop_assert_eq!(a.fold_accuracies, b.fold_accuracies);
        }
    }
}
