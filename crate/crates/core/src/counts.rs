//! Dependency-triple counts, PPMI-syntax scoring and log word frequencies.
//!
//! All words and relation names are lowercased on ingestion and lookup.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Role, Sentence};
use crate::error::{Error, Result};

pub const SNAPSHOT_HEADER: &str = "#plauskit-triples\tv1";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: String,
    pub dependent: String,
    pub role: String,
}

impl Triple {
    pub fn new(head: &str, dependent: &str, role: &str) -> Self {
        Triple {
            head: head.to_lowercase(),
            dependent: dependent.to_lowercase(),
            role: role.to_lowercase(),
        }
    }
}

/// Unfiltered triple accumulator. Shards merge associatively; thresholds
/// apply only in [`TripleCounter::build`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TripleCounter {
    counts: HashMap<Triple, u64>,
}

impl TripleCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, triple: Triple, count: u64) {
        *self.counts.entry(triple).or_insert(0) += count;
    }

    pub fn merge(&mut self, other: TripleCounter) {
        for (t, c) in other.counts {
            self.add(t, c);
        }
    }

    pub fn build(self, min_freq: u64) -> TripleCounts {
        TripleCounts::from_counts(
            self.counts.into_iter().filter(|&(_, c)| c >= min_freq).collect(),
            min_freq,
        )
    }
}

/// Filtered triple table with its role-marked marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleCounts {
    counts: HashMap<Triple, u64>,
    head_role: HashMap<(String, String), u64>,
    dep_role: HashMap<(String, String), u64>,
    by_head_role: HashMap<(String, String), Vec<(String, u64)>>,
    total: u64,
    min_freq: u64,
}

impl TripleCounts {
    fn from_counts(counts: HashMap<Triple, u64>, min_freq: u64) -> Self {
        let mut head_role = HashMap::new();
        let mut dep_role = HashMap::new();
        let mut by_head_role: HashMap<(String, String), Vec<(String, u64)>> = HashMap::new();
        let mut total = 0;
        for (t, &c) in &counts {
            *head_role.entry((t.head.clone(), t.role.clone())).or_insert(0) += c;
            *dep_role.entry((t.dependent.clone(), t.role.clone())).or_insert(0) += c;
            by_head_role
                .entry((t.head.clone(), t.role.clone()))
                .or_default()
                .push((t.dependent.clone(), c));
            total += c;
        }
        for v in by_head_role.values_mut() {
            v.sort();
        }
        TripleCounts {
            counts,
            head_role,
            dep_role,
            by_head_role,
            total,
            min_freq,
        }
    }

    pub fn count(&self, head: &str, dependent: &str, role: &str) -> u64 {
        self.counts
            .get(&Triple::new(head, dependent, role))
            .copied()
            .unwrap_or(0)
    }

    /// f(head, *, role)
    pub fn head_marginal(&self, head: &str, role: &str) -> u64 {
        self.head_role
            .get(&(head.to_lowercase(), role.to_lowercase()))
            .copied()
            .unwrap_or(0)
    }

    /// f(*, dependent, role)
    pub fn dep_marginal(&self, dependent: &str, role: &str) -> u64 {
        self.dep_role
            .get(&(dependent.to_lowercase(), role.to_lowercase()))
            .copied()
            .unwrap_or(0)
    }

    /// N, the total frequency of all retained triples.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of distinct retained triples.
    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn min_freq(&self) -> u64 {
        self.min_freq
    }

    pub fn has_head(&self, head: &str) -> bool {
        let head = head.to_lowercase();
        self.head_role.keys().any(|(h, _)| *h == head)
    }

    /// Dependents attested with `(head, role)`, sorted by dependent.
    pub fn dependents(&self, head: &str, role: &str) -> &[(String, u64)] {
        self.by_head_role
            .get(&(head.to_lowercase(), role.to_lowercase()))
            .map_or(&[], Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Triple, u64)> {
        self.counts.iter().map(|(t, &c)| (t, c))
    }

    /// Versioned TSV snapshot, rows sorted for byte-stable output.
    pub fn to_snapshot(&self) -> String {
        let sorted: BTreeMap<&Triple, u64> = self.iter().collect();
        let mut out = format!("{SNAPSHOT_HEADER}\tmin_freq={}\n", self.min_freq);
        for (t, c) in sorted {
            out.push_str(&format!("{}\t{}\t{}\t{c}\n", t.head, t.dependent, t.role));
        }
        out
    }

    pub fn save_snapshot(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_snapshot()).map_err(|e| Error::io(path, e))
    }

    pub fn load_snapshot(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_snapshot(&text, path)
    }

    pub fn parse_snapshot(text: &str, origin: &Path) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let min_freq = header
            .strip_prefix(SNAPSHOT_HEADER)
            .and_then(|rest| rest.trim().strip_prefix("min_freq="))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::parse(origin, 1, "missing or unsupported snapshot header"))?;
        let mut counts = HashMap::new();
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let (t, c) = parse_triple_line(line).map_err(|m| Error::parse(origin, i + 2, m))?;
            if counts.insert(t, c).is_some() {
                return Err(Error::parse(origin, i + 2, "duplicate triple"));
            }
        }
        Ok(Self::from_counts(counts, min_freq))
    }
}

fn parse_triple_line(line: &str) -> std::result::Result<(Triple, u64), String> {
    let f: Vec<&str> = line.split('\t').collect();
    let count = match f.len() {
        3 => 1,
        4 => f[3]
            .trim()
            .parse()
            .map_err(|_| format!("bad count `{}`", f[3]))?,
        n => return Err(format!("expected 3 or 4 fields, found {n}")),
    };
    Ok((Triple::new(f[0].trim(), f[1].trim(), f[2].trim()), count))
}

pub fn count_triples(stream: impl IntoIterator<Item = Triple>, min_freq: u64) -> TripleCounts {
    let mut counter = TripleCounter::new();
    for t in stream {
        counter.add(t, 1);
    }
    counter.build(min_freq)
}

/// Reads a `head dependent role [count]` TSV into an unfiltered counter.
pub fn read_triple_file(path: &Path) -> Result<TripleCounter> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut counter = TripleCounter::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (t, c) = parse_triple_line(&line).map_err(|m| Error::parse(path, i + 1, m))?;
        counter.add(t, c);
    }
    Ok(counter)
}

/// Positive PMI with add-`laplace` smoothing of the joint count and both
/// marginals; the total becomes N + laplace·V (V distinct retained triples).
pub fn ppmi(tc: &TripleCounts, head: &str, dependent: &str, role: &str, laplace: u64) -> f64 {
    let a = laplace as f64;
    let joint = tc.count(head, dependent, role) as f64 + a;
    let fh = tc.head_marginal(head, role) as f64 + a;
    let fd = tc.dep_marginal(dependent, role) as f64 + a;
    let n = tc.total() as f64 + a * tc.distinct() as f64;
    if joint <= 0.0 || fh <= 0.0 || fd <= 0.0 || n <= 0.0 {
        return 0.0;
    }
    ((joint * n) / (fh * fd)).ln().max(0.0)
}

/// Relation names used for logical subjects and objects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoleRelations {
    pub subject: String,
    pub object: String,
}

impl Default for RoleRelations {
    fn default() -> Self {
        RoleRelations {
            subject: "subj".into(),
            object: "obj".into(),
        }
    }
}

pub(crate) fn role_term(sentence: &Sentence, role: Role) -> Result<String> {
    sentence
        .role_text(role)
        .map(|s| s.to_lowercase())
        .ok_or_else(|| Error::InvalidInput(format!("sentence `{}` has no {role} span", sentence.text)))
}

/// PPMI(verb, agent, subject) + PPMI(verb, patient, object). Roles are
/// logical, so passive sentences look up their by-phrase agent as subject.
pub fn score_sentence_ppmi(
    sentence: &Sentence,
    tc: &TripleCounts,
    relations: &RoleRelations,
    laplace: u64,
) -> Result<f64> {
    let verb = role_term(sentence, Role::Verb)?;
    let agent = role_term(sentence, Role::Agent)?;
    let patient = role_term(sentence, Role::Patient)?;
    Ok(ppmi(tc, &verb, &agent, &relations.subject, laplace)
        + ppmi(tc, &verb, &patient, &relations.object, laplace))
}

/// Word or phrase occurrence counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrequencyTable {
    pub counts: HashMap<String, u64>,
    pub source: String,
}

impl FrequencyTable {
    pub fn new(source: impl Into<String>) -> Self {
        FrequencyTable {
            counts: HashMap::new(),
            source: source.into(),
        }
    }

    pub fn insert(&mut self, term: &str, count: u64) {
        *self.counts.entry(term.to_lowercase()).or_insert(0) += count;
    }

    pub fn get(&self, term: &str) -> Option<u64> {
        self.counts.get(&term.to_lowercase()).copied()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut ft = FrequencyTable::new(path.display().to_string());
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (term, count) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::parse(path, i + 1, "expected `term<TAB>count`"))?;
            let count: u64 = count
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, i + 1, format!("bad count `{count}`")))?;
            ft.insert(term.trim(), count);
        }
        Ok(ft)
    }
}

/// `ln(count + 1)`; a phrase absent from the table falls back to the mean
/// of its words' log frequencies.
pub fn log_frequency(term: &str, ft: &FrequencyTable) -> f64 {
    if let Some(c) = ft.get(term) {
        return (c as f64 + 1.0).ln();
    }
    let words: Vec<&str> = term.split_whitespace().collect();
    if words.len() <= 1 {
        return 0.0;
    }
    words
        .iter()
        .map(|w| (ft.get(w).unwrap_or(0) as f64 + 1.0).ln())
        .sum::<f64>()
        / words.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(h: &str, d: &str, r: &str) -> Triple {
        Triple::new(h, d, r)
    }

    fn repeat(triple: Triple, n: usize) -> impl Iterator<Item = Triple> {
        std::iter::repeat_n(triple, n)
    }

    #[test]
    fn min_freq_filters_before_marginals() {
        let stream = repeat(t("eat", "pizza", "obj"), 4).chain(repeat(t("eat", "shoe", "obj"), 1));
        let tc = count_triples(stream, 2);
        assert_eq!(tc.count("eat", "pizza", "obj"), 4);
        assert_eq!(tc.count("eat", "shoe", "obj"), 0);
        assert_eq!(tc.total(), 4);
        assert_eq!(tc.head_marginal("eat", "obj"), 4);
        assert_eq!(tc.distinct(), 1);
    }

    #[test]
    fn empty_and_unfiltered() {
        assert_eq!(count_triples(std::iter::empty(), 2).total(), 0);
        let stream: Vec<_> = vec![t("a", "b", "obj"), t("a", "c", "obj"), t("d", "b", "subj")];
        assert_eq!(count_triples(stream.clone(), 1).total(), stream.len() as u64);
    }

    #[test]
    fn independence_gives_zero() {
        // f(h,d,r)·N = f(h,*,r)·f(*,d,r): 2·8 = 4·4.
        let mut c = TripleCounter::new();
        c.add(t("v", "x", "obj"), 2);
        c.add(t("v", "y", "obj"), 2);
        c.add(t("w", "x", "obj"), 2);
        c.add(t("w", "y", "obj"), 2);
        let tc = c.build(1);
        assert_eq!(ppmi(&tc, "v", "x", "obj", 0), 0.0);
    }

    #[test]
    fn anti_association_clips() {
        let mut c = TripleCounter::new();
        c.add(t("v", "x", "obj"), 1);
        c.add(t("v", "y", "obj"), 50);
        c.add(t("w", "x", "obj"), 50);
        c.add(t("w", "y", "obj"), 1);
        let tc = c.build(1);
        assert_eq!(ppmi(&tc, "v", "x", "obj", 1), 0.0);
        assert!(ppmi(&tc, "v", "y", "obj", 1) > 0.0);
    }

    /// Independent recount over the raw list of (triple, count) entries.
    fn brute_ppmi(table: &[(&str, &str, &str, u64)], h: &str, d: &str, r: &str, a: f64) -> f64 {
        let joint: u64 = table.iter().filter(|e| e.0 == h && e.1 == d && e.2 == r).map(|e| e.3).sum();
        let fh: u64 = table.iter().filter(|e| e.0 == h && e.2 == r).map(|e| e.3).sum();
        let fd: u64 = table.iter().filter(|e| e.1 == d && e.2 == r).map(|e| e.3).sum();
        let n: u64 = table.iter().map(|e| e.3).sum();
        let v = table.len() as f64;
        let val = ((joint as f64 + a) * (n as f64 + a * v) / ((fh as f64 + a) * (fd as f64 + a))).ln();
        val.max(0.0)
    }

    const TOY: [(&str, &str, &str, u64); 6] = [
        ("arrest", "cop", "subj", 9),
        ("arrest", "criminal", "obj", 7),
        ("arrest", "criminal", "subj", 2),
        ("buy", "teacher", "subj", 3),
        ("buy", "laptop", "obj", 5),
        ("teach", "teacher", "subj", 6),
    ];

    #[test]
    fn ppmi_matches_brute_force_on_toy_corpus() {
        let mut c = TripleCounter::new();
        for &(h, d, r, n) in &TOY {
            c.add(t(h, d, r), n);
        }
        let tc = c.build(1);
        let words = ["arrest", "buy", "teach", "cop", "criminal", "teacher", "laptop"];
        for h in ["arrest", "buy", "teach"] {
            for d in words {
                for r in ["subj", "obj"] {
                    for a in [0u64, 1] {
                        let got = ppmi(&tc, h, d, r, a);
                        let want = if a == 0 && tc.count(h, d, r) == 0 { 0.0 } else { brute_ppmi(&TOY, h, d, r, a as f64) };
                        assert!((got - want).abs() < 1e-12, "{h} {d} {r} {a}: {got} vs {want}");
                    }
                }
            }
        }
    }

    fn sentence(text: &str, agent: (usize, usize), verb: (usize, usize), patient: (usize, usize)) -> Sentence {
        use crate::corpus::{RoleSpans, SentenceId, Span};
        Sentence {
            id: SentenceId::from("x"),
            text: text.into(),
            roles: RoleSpans {
                agent: Some(Span::new(agent.0, agent.1)),
                verb: Some(Span::new(verb.0, verb.1)),
                patient: Some(Span::new(patient.0, patient.1)),
            },
        }
    }

    #[test]
    fn attested_order_scores_higher() {
        let mut c = TripleCounter::new();
        for &(h, d, r, n) in &TOY {
            c.add(t(h, d, r), n);
        }
        c.add(t("see", "cop", "obj"), 6);
        c.add(t("see", "criminal", "subj"), 6);
        let tc = c.build(1);
        let rel = RoleRelations::default();
        let plaus = sentence("The cop arrested the criminal.", (1, 2), (2, 3), (4, 5));
        let implaus = sentence("The criminal arrested the cop.", (1, 2), (2, 3), (4, 5));
        // verb forms are looked up verbatim
        let plaus = Sentence { text: plaus.text.replace("arrested", "arrest"), ..plaus };
        let implaus = Sentence { text: implaus.text.replace("arrested", "arrest"), ..implaus };
        let p = score_sentence_ppmi(&plaus, &tc, &rel, 1).unwrap();
        let i = score_sentence_ppmi(&implaus, &tc, &rel, 1).unwrap();
        let want_p = brute_ppmi(&[TOY.as_slice(), &[("see", "cop", "obj", 6), ("see", "criminal", "subj", 6)]].concat(), "arrest", "cop", "subj", 1.0)
            + brute_ppmi(&[TOY.as_slice(), &[("see", "cop", "obj", 6), ("see", "criminal", "subj", 6)]].concat(), "arrest", "criminal", "obj", 1.0);
        assert!((p - want_p).abs() < 1e-12);
        assert!(p > i, "{p} <= {i}");
    }

    #[test]
    fn unseen_sentence_hits_smoothing_floor() {
        let tc = count_triples(repeat(t("eat", "pizza", "obj"), 3), 1);
        let s = sentence("The ogre mesmerized the pixie.", (1, 2), (2, 3), (4, 5));
        let v = score_sentence_ppmi(&s, &tc, &RoleRelations::default(), 1).unwrap();
        // (0+1)(N+V)/((0+1)(0+1)) = 4 > 1, so the floor is 2·ln 4 here.
        assert!((v - 2.0 * 4f64.ln()).abs() < 1e-12);
        let mut missing = s.clone();
        missing.roles.patient = None;
        assert!(score_sentence_ppmi(&missing, &tc, &RoleRelations::default(), 1).is_err());
    }

    #[test]
    fn log_frequency_rules() {
        let mut ft = FrequencyTable::new("test");
        ft.insert("cat", 99);
        ft.insert("worker", 99);
        assert_eq!(log_frequency("unseen", &ft), 0.0);
        assert!((log_frequency("cat", &ft) - 100f64.ln()).abs() < 1e-15);
        let want = (0.0 + 100f64.ln() + 100f64.ln()) / 3.0;
        assert!((log_frequency("social cat worker", &ft) - want).abs() < 1e-15);
        ft.insert("social worker", 9);
        assert!((log_frequency("social worker", &ft) - 10f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn snapshot_round_trip_is_exact() {
        let mut c = TripleCounter::new();
        for &(h, d, r, n) in &TOY {
            c.add(t(h, d, r), n);
        }
        let tc = c.build(3);
        let snap = tc.to_snapshot();
        let back = TripleCounts::parse_snapshot(&snap, Path::new("s")).unwrap();
        assert_eq!(tc, back);
        assert_eq!(back.to_snapshot(), snap);
        assert!(TripleCounts::parse_snapshot("garbage\n", Path::new("s")).is_err());
    }

    #[test]
    fn reads_triple_file_with_optional_counts() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.tsv");
        fs::write(&p, "eat\tpizza\tobj\t3\neat\tpizza\tobj\nEat\tShoe\tOBJ\t1\n").unwrap();
        let tc = read_triple_file(&p).unwrap().build(2);
        assert_eq!(tc.count("eat", "pizza", "obj"), 4);
        assert_eq!(tc.total(), 4);
    }

    fn arb_stream() -> impl Strategy<Value = Vec<(u8, u8, u8)>> {
        prop::collection::vec((0u8..4, 0u8..4, 0u8..2), 0..60)
    }

    fn to_triples(v: &[(u8, u8, u8)]) -> Vec<Triple> {
        v.iter()
            .map(|&(h, d, r)| t(&format!("h{h}"), &format!("d{d}"), if r == 0 { "subj" } else { "obj" }))
            .collect()
    }

    proptest! {
        #[test]
        fn shard_merge_is_exact(a in arb_stream(), b in arb_stream(), min_freq in 1u64..4) {
            let mut left = TripleCounter::new();
            to_triples(&a).into_iter().for_each(|t| left.add(t, 1));
            let mut right = TripleCounter::new();
            to_triples(&b).into_iter().for_each(|t| right.add(t, 1));
            left.merge(right);
            let merged = left.build(min_freq);
            let whole = count_triples(to_triples(&[a, b].concat()), min_freq);
            prop_assert_eq!(merged, whole);
        }

        #[test]
        fn marginals_and_ppmi_invariants(a in arb_stream(), min_freq in 1u64..3) {
            let tc = count_triples(to_triples(&a), min_freq);
            let mut total = 0;
            for (_, c) in tc.iter() {
                prop_assert!(c >= min_freq);
                total += c;
            }
            prop_assert_eq!(total, tc.total());
            for h in 0..4 {
                for r in ["subj", "obj"] {
                    let h = format!("h{h}");
                    let sum: u64 = (0..4).map(|d| tc.count(&h, &format!("d{d}"), r)).sum();
                    prop_assert_eq!(sum, tc.head_marginal(&h, r));
                    for d in 0..4 {
                        let dep = format!("d{d}");
                        prop_assert!(ppmi(&tc, &h, &dep, r, 1) >= 0.0);
                    }
                }
            }
        }

        #[test]
        fn ppmi_monotone_in_joint_count(extra in 0u64..50, base in 1u64..20) {
            // Raise f(h,d,r) while moving mass out of the other cells that
            // share its marginals, keeping f(h,*,r), f(*,d,r) and N fixed.
            let build = |k: u64| {
                let mut c = TripleCounter::new();
                c.add(t("v", "x", "obj"), base + k);
                c.add(t("v", "y", "obj"), 60 - k);
                c.add(t("w", "x", "obj"), 60 - k);
                c.add(t("w", "y", "obj"), base + k);
                c.build(1)
            };
            let lo = ppmi(&build(extra.min(49)), "v", "x", "obj", 1);
            let hi = ppmi(&build((extra + 1).min(50)), "v", "x", "obj", 1);
            prop_assert!(hi >= lo);
        }
    }
}
