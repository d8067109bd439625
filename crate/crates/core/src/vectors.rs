//! Static word vectors and the two vector-based baselines: prototype
//! thematic fit and the structured distributional model (SDM).

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Role, Sentence};
use crate::counts::{role_term, TripleCounts};
use crate::error::{Error, Result};

/// Word → dense vector table with a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSpace {
    dim: usize,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

impl VectorSpace {
    pub fn new(dim: usize) -> Self {
        VectorSpace {
            dim,
            index: HashMap::new(),
            data: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn insert(&mut self, word: &str, vector: &[f64]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "vector for `{word}` has dimension {}, expected {}",
                vector.len(),
                self.dim
            )));
        }
        match self.index.get(word) {
            Some(&i) => self.data[i * self.dim..(i + 1) * self.dim].copy_from_slice(vector),
            None => {
                self.index.insert(word.to_string(), self.index.len());
                self.data.extend_from_slice(vector);
            }
        }
        Ok(())
    }

    /// Exact lookup, then lowercase.
    pub fn get(&self, word: &str) -> Option<&[f64]> {
        let i = self
            .index
            .get(word)
            .or_else(|| self.index.get(&word.to_lowercase()))?;
        Some(&self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn require(&self, word: &str) -> Result<&[f64]> {
        self.get(word).ok_or_else(|| Error::MissingVector(word.to_string()))
    }

    /// Vector for a possibly multi-word term: the phrase itself (space- or
    /// underscore-joined), else the mean of its word vectors.
    pub fn term_vector(&self, term: &str) -> Result<Vec<f64>> {
        if let Some(v) = self.get(term).or_else(|| self.get(&term.replace(' ', "_"))) {
            return Ok(v.to_vec());
        }
        let words: Vec<&str> = term.split_whitespace().collect();
        if words.len() < 2 {
            return Err(Error::MissingVector(term.to_string()));
        }
        let vs = words
            .iter()
            .map(|w| self.require(w))
            .collect::<Result<Vec<_>>>()
            .map_err(|_| Error::MissingVector(term.to_string()))?;
        Ok(centroid(&vs))
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }

    /// Applies `f` to every stored vector.
    pub fn map_vectors(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<VectorSpace> {
        let mut words: Vec<(&String, &usize)> = self.index.iter().collect();
        words.sort_by_key(|(_, &i)| i);
        let first = words.first().map(|(_, &i)| f(&self.data[i * self.dim..(i + 1) * self.dim]));
        let mut out = VectorSpace::new(first.as_ref().map_or(self.dim, Vec::len));
        for (w, &i) in words {
            out.insert(w, &f(&self.data[i * self.dim..(i + 1) * self.dim]))?;
        }
        Ok(out)
    }

    /// Text embedding format: `count dim` header, then `word v1 … vd`.
    pub fn load_text(path: &Path) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(f).lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| Error::io(path, e))?
            .ok_or_else(|| Error::parse(path, 1, "empty vector file"))?;
        let mut h = header.split_whitespace().map(str::parse::<usize>);
        let (count, dim) = match (h.next(), h.next(), h.next()) {
            (Some(Ok(c)), Some(Ok(d)), None) if d > 0 => (c, d),
            _ => return Err(Error::parse(path, 1, "header must be `count dim`")),
        };
        let mut vs = VectorSpace::new(dim);
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() < dim + 1 {
                return Err(Error::parse(path, i + 2, format!("expected a word and {dim} values")));
            }
            let split = fields.len() - dim;
            let word = fields[..split].join(" ");
            let vector = fields[split..]
                .iter()
                .map(|x| x.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::parse(path, i + 2, "non-numeric vector component"))?;
            vs.insert(&word, &vector)?;
        }
        if vs.len() != count {
            return Err(Error::parse(
                path,
                1,
                format!("header declares {count} vectors, file has {}", vs.len()),
            ));
        }
        Ok(vs)
    }
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::InvalidInput(format!(
            "cosine of vectors with dimensions {} and {}",
            u.len(),
            v.len()
        )));
    }
    let nu = dot(u, u).sqrt();
    let nv = dot(v, v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::InvalidInput("cosine with a zero vector".into()));
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

pub fn centroid(vectors: &[&[f64]]) -> Vec<f64> {
    let mut out = vec![0.0; vectors.first().map_or(0, |v| v.len())];
    for v in vectors {
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += x;
        }
    }
    let n = vectors.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// Local mutual information f·ln(f·N / (f(a,*,r)·f(*,b,r))); 0 when unseen.
pub fn lmi(tc: &TripleCounts, a: &str, b: &str, role: &str) -> f64 {
    let f = tc.count(a, b, role);
    if f == 0 {
        return 0.0;
    }
    let f = f as f64;
    let fa = tc.head_marginal(a, role) as f64;
    let fb = tc.dep_marginal(b, role) as f64;
    f * (f * tc.total() as f64 / (fa * fb)).ln()
}

fn by_weight_then_name(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.0.cmp(&b.0))
}

/// The `k` dependents of `(head, role)` with the highest positive LMI.
pub fn top_associates(tc: &TripleCounts, head: &str, role: &str, k: usize) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = tc
        .dependents(head, role)
        .iter()
        .map(|(d, _)| (d.clone(), lmi(tc, head, d, role)))
        .filter(|(_, w)| *w > 0.0)
        .collect();
    out.sort_by(by_weight_then_name);
    out.truncate(k);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrototypeConfig {
    /// Associates retrieved per cue word.
    pub k_retrieve: usize,
    /// Entities averaged into the prototype.
    pub k_top: usize,
    /// Relation linking the verb to its objects.
    pub verb_object_relation: String,
    /// Relation linking a subject noun to the objects it co-occurs with.
    pub subject_object_relation: String,
}

impl Default for PrototypeConfig {
    fn default() -> Self {
        PrototypeConfig {
            k_retrieve: 200,
            k_top: 20,
            verb_object_relation: "obj".into(),
            subject_object_relation: "subj_obj".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeVector {
    pub role: Role,
    pub vector: Vec<f64>,
    /// Entities whose vectors were averaged, in rank order.
    pub support: Vec<String>,
    /// True when the verb and subject lists had no common entity.
    pub verb_only: bool,
}

pub fn patient_prototype(
    verb: &str,
    subject: &str,
    tc: &TripleCounts,
    vs: &VectorSpace,
    cfg: &PrototypeConfig,
) -> Result<PrototypeVector> {
    if !tc.has_head(verb) {
        return Err(Error::InvalidInput(format!("verb `{verb}` not in triple counts")));
    }
    let verb_list = top_associates(tc, verb, &cfg.verb_object_relation, cfg.k_retrieve);
    let subj_list: HashMap<String, f64> =
        top_associates(tc, subject, &cfg.subject_object_relation, cfg.k_retrieve)
            .into_iter()
            .collect();

    let mut ranked: Vec<(String, f64)> = verb_list
        .iter()
        .filter_map(|(e, w)| subj_list.get(e).map(|s| (e.clone(), w * s)))
        .collect();
    let verb_only = ranked.is_empty();
    if verb_only {
        ranked = verb_list;
    }
    ranked.sort_by(by_weight_then_name);
    ranked.truncate(cfg.k_top);

    let (support, vectors): (Vec<String>, Vec<&[f64]>) = ranked
        .into_iter()
        .filter_map(|(e, _)| vs.get(&e).map(|v| (e, v)))
        .unzip();
    if vectors.is_empty() {
        return Err(Error::MissingVector(format!(
            "no prototype entity for `{verb}`/`{subject}` has a vector"
        )));
    }
    Ok(PrototypeVector {
        role: Role::Patient,
        vector: centroid(&vectors),
        support,
        verb_only,
    })
}

/// cos(patient, prototype(verb, agent)).
pub fn thematic_fit_score(
    sentence: &Sentence,
    tc: &TripleCounts,
    vs: &VectorSpace,
    cfg: &PrototypeConfig,
) -> Result<f64> {
    let verb = role_term(sentence, Role::Verb)?;
    let agent = role_term(sentence, Role::Agent)?;
    let patient = role_term(sentence, Role::Patient)?;
    let patient_vec = vs.term_vector(&patient)?;
    let proto = patient_prototype(&verb, &agent, tc, vs, cfg)?;
    cosine(&patient_vec, &proto.vector)
}

/// Association store `(context item, role) → fillers`, ranked by weight
/// descending with ties in lexicographic order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventGraph {
    edges: BTreeMap<(String, String), Vec<(String, f64)>>,
}

pub const DEG_COLUMNS: [&str; 5] = ["context_item", "role", "filler", "weight", "rank"];

impl EventGraph {
    /// LMI-weighted edges from every `(head, role)` to its dependents,
    /// keeping at most `max_fillers` positive-weight fillers per key.
    pub fn from_counts(tc: &TripleCounts, max_fillers: usize) -> Self {
        let mut edges = BTreeMap::new();
        let mut keys: Vec<(&str, &str)> = tc
            .iter()
            .map(|(t, _)| (t.head.as_str(), t.role.as_str()))
            .collect();
        keys.sort();
        keys.dedup();
        for (h, r) in keys {
            let list = top_associates(tc, h, r, max_fillers);
            if !list.is_empty() {
                edges.insert((h.to_string(), r.to_string()), list);
            }
        }
        EventGraph { edges }
    }

    pub fn insert(&mut self, context: &str, role: &str, filler: &str, weight: f64) -> Result<()> {
        if !weight.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite DEG weight for {context}/{role}/{filler}")));
        }
        let list = self
            .edges
            .entry((context.to_lowercase(), role.to_lowercase()))
            .or_default();
        list.retain(|(f, _)| f != filler);
        list.push((filler.to_lowercase(), weight));
        list.sort_by(by_weight_then_name);
        Ok(())
    }

    pub fn fillers(&self, context: &str, role: &str) -> &[(String, f64)] {
        self.edges
            .get(&(context.to_lowercase(), role.to_lowercase()))
            .map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.edges.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Fillers for `role` given all `context` items; weights are summed over
    /// the context items that list the filler.
    pub fn query(&self, context: &[String], role: &str) -> Vec<(String, f64)> {
        let mut acc: BTreeMap<&str, f64> = BTreeMap::new();
        for c in context {
            for (f, w) in self.fillers(c, role) {
                *acc.entry(f.as_str()).or_insert(0.0) += w;
            }
        }
        let mut out: Vec<(String, f64)> = acc.into_iter().map(|(f, w)| (f.to_string(), w)).collect();
        out.sort_by(by_weight_then_name);
        out
    }

    pub fn to_tsv(&self) -> String {
        let mut out = DEG_COLUMNS.join("\t");
        out.push('\n');
        for ((c, r), list) in &self.edges {
            for (rank, (f, w)) in list.iter().enumerate() {
                out.push_str(&format!("{c}\t{r}\t{f}\t{w}\t{}\n", rank + 1));
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.split('\t').map(str::trim).eq(DEG_COLUMNS) => {}
            _ => return Err(Error::parse(path, 1, format!("expected columns `{}`", DEG_COLUMNS.join(" ")))),
        }
        let mut g = EventGraph::default();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(Error::parse(path, i + 1, "expected 5 fields"));
            }
            let w: f64 = f[3]
                .parse()
                .map_err(|_| Error::parse(path, i + 1, format!("bad weight `{}`", f[3])))?;
            g.insert(f[0], f[1], f[2], w)
                .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SdmConfig {
    /// Top DEG fillers averaged into the context-dependent prototype.
    pub ac_top: usize,
    pub agent_relation: String,
    pub patient_relation: String,
}

impl Default for SdmConfig {
    fn default() -> Self {
        SdmConfig {
            ac_top: 20,
            agent_relation: "subj".into(),
            patient_relation: "obj".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdmScore {
    pub value: f64,
    /// Roles for which the DEG returned no usable filler; their term is the
    /// LC cosine alone.
    pub ac_missing: Vec<Role>,
}

/// Σ over agent and patient of [cos(filler, LC) + cos(filler, AC)] / 2.
///
/// The context of a role is every other lexical item of the sentence (the
/// verb and the other argument). LC sums their vectors; AC is the centroid
/// of the top DEG fillers for the role given those items.
pub fn sdm_score(sentence: &Sentence, deg: &EventGraph, vs: &VectorSpace, cfg: &SdmConfig) -> Result<SdmScore> {
    let verb = role_term(sentence, Role::Verb)?;
    let agent = role_term(sentence, Role::Agent)?;
    let patient = role_term(sentence, Role::Patient)?;
    let verb_vec = vs.term_vector(&verb)?;
    let agent_vec = vs.term_vector(&agent)?;
    let patient_vec = vs.term_vector(&patient)?;

    let mut total = 0.0;
    let mut ac_missing = Vec::new();
    let roles = [
        (Role::Agent, &agent_vec, &patient, &patient_vec, &cfg.agent_relation),
        (Role::Patient, &patient_vec, &agent, &agent_vec, &cfg.patient_relation),
    ];
    for (role, filler, other, other_vec, relation) in roles {
        let lc: Vec<f64> = verb_vec.iter().zip(other_vec.iter()).map(|(a, b)| a + b).collect();
        let lc_cos = cosine(filler, &lc)?;

        let context = [verb.clone(), other.clone()];
        let ac_vectors: Vec<&[f64]> = deg
            .query(&context, relation)
            .iter()
            .filter_map(|(f, _)| vs.get(f))
            .take(cfg.ac_top)
            .collect();
        if ac_vectors.is_empty() {
            ac_missing.push(role);
            total += lc_cos;
        } else {
            let ac = centroid(&ac_vectors);
            total += (lc_cos + cosine(filler, &ac)?) / 2.0;
        }
    }
    Ok(SdmScore { value: total, ac_missing })
}
