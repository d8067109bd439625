//! Small deterministic demo workspace in every input format the harness
//! reads. Scores and embeddings carry a planted plausibility signal.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{
    DatasetId, ItemType, Plausibility, SentenceId, SynonymVariant, Voice, DATASET_COLUMNS, RATINGS_COLUMNS,
};
use crate::error::{Error, Result};

const AI_EVENTS: [(&str, &str, &str); 12] = [
    ("teacher", "bought", "laptop"),
    ("chef", "cooked", "soup"),
    ("child", "kicked", "ball"),
    ("farmer", "planted", "seed"),
    ("pilot", "flew", "plane"),
    ("writer", "wrote", "novel"),
    ("painter", "painted", "fence"),
    ("baker", "baked", "bread"),
    ("student", "read", "book"),
    ("driver", "parked", "car"),
    ("girl", "ate", "apple"),
    ("boy", "threw", "stone"),
];

const AA_EVENTS: [(&str, &str, &str); 12] = [
    ("cop", "arrested", "criminal"),
    ("doctor", "treated", "patient"),
    ("lawyer", "advised", "client"),
    ("coach", "trained", "athlete"),
    ("judge", "sentenced", "thief"),
    ("waiter", "served", "customer"),
    ("mother", "fed", "baby"),
    ("guard", "searched", "visitor"),
    ("boss", "hired", "worker"),
    ("hunter", "shot", "deer"),
    ("nurse", "bathed", "infant"),
    ("barber", "shaved", "sailor"),
];

const CONTROL_EVENTS: [(&str, &str, &str); 4] = [
    ("man", "greeted", "woman"),
    ("uncle", "hugged", "nephew"),
    ("neighbor", "called", "friend"),
    ("sister", "visited", "brother"),
];

/// `(agent, verb, patient, unlikely patient)`.
const D2_EVENTS: [(&str, &str, &str, &str); 10] = [
    ("mechanic", "repaired", "engine", "cloud"),
    ("tailor", "stitched", "coat", "river"),
    ("poet", "recited", "verse", "fridge"),
    ("gardener", "watered", "rose", "ladder"),
    ("plumber", "fixed", "pipe", "sunset"),
    ("author", "signed", "contract", "ocean"),
    ("miner", "dug", "tunnel", "melody"),
    ("sculptor", "carved", "statue", "rumor"),
    ("clerk", "filed", "report", "volcano"),
    ("fisher", "caught", "trout", "tuesday"),
];

/// `(agent, synonym, verb, patient)`.
const D3_EVENTS: [(&str, &str, &str, &str); 8] = [
    ("officer", "policeman", "arrested", "burglar"),
    ("physician", "medic", "examined", "patient"),
    ("attorney", "counsel", "questioned", "witness"),
    ("instructor", "tutor", "taught", "pupil"),
    ("cook", "chef", "seasoned", "stew"),
    ("vendor", "seller", "sold", "ticket"),
    ("soldier", "trooper", "guarded", "gate"),
    ("nanny", "sitter", "dressed", "toddler"),
];

/// Files of a demo workspace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemoWorkspace {
    pub root: PathBuf,
    pub config: PathBuf,
}

struct Row {
    dataset: DatasetId,
    pair_id: String,
    item_type: ItemType,
    voice: Voice,
    synonym: SynonymVariant,
    plaus: Plausibility,
    agent: String,
    verb: String,
    patient: String,
    /// Noun preceded by an adjective.
    modified: Option<String>,
}

impl Row {
    fn np(&self, noun: &str) -> Vec<String> {
        let mut np = vec!["the".to_string()];
        if self.modified.as_deref() == Some(noun) {
            np.push("old".into());
        }
        np.push(noun.into());
        np
    }

    /// Words and the agent, verb and patient word indices.
    fn words(&self) -> (Vec<String>, [usize; 3]) {
        match self.voice {
            Voice::Passive => {
                let mut w = self.np(&self.patient);
                let p = w.len() - 1;
                w.extend(["was".to_string(), self.verb.clone(), "by".to_string()]);
                let v = p + 2;
                w.extend(self.np(&self.agent));
                let a = w.len() - 1;
                (w, [a, v, p])
            }
            _ => {
                let mut w = self.np(&self.agent);
                let a = w.len() - 1;
                w.push(self.verb.clone());
                w.extend(self.np(&self.patient));
                (w.clone(), [a, a + 1, w.len() - 1])
            }
        }
    }

    fn id(&self) -> SentenceId {
        SentenceId::derive(self.dataset, &self.pair_id, self.plaus, self.voice, self.synonym)
    }

    fn tsv(&self) -> String {
        let (words, [a, v, p]) = self.words();
        let span = |i: usize| format!("{i}:{}", i + 1);
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            self.dataset,
            self.pair_id,
            self.item_type,
            self.voice,
            self.synonym,
            self.plaus,
            words.join(" "),
            span(a),
            span(v),
            span(p)
        )
    }
}

fn push_pair(rows: &mut Vec<Row>, ds: DatasetId, id: String, t: ItemType, v: Voice, s: SynonymVariant, e: (&str, &str, &str)) {
    for (plaus, agent, patient) in [(Plausibility::Plausible, e.0, e.2), (Plausibility::Implausible, e.2, e.0)] {
        rows.push(Row {
            dataset: ds,
            pair_id: id.clone(),
            item_type: t,
            voice: v,
            synonym: s,
            plaus,
            agent: agent.into(),
            verb: e.1.into(),
            patient: patient.into(),
            modified: id.ends_with(['1', '4', '7']).then(|| e.0.to_string()),
        });
    }
}

fn rows() -> Vec<Row> {
    let mut rows = Vec::new();
    let d1 = AI_EVENTS
        .iter()
        .map(|e| (ItemType::Ai, e))
        .chain(AA_EVENTS.iter().map(|e| (ItemType::Aa, e)))
        .chain(CONTROL_EVENTS.iter().map(|e| (ItemType::AaControl, e)));
    for (i, (t, e)) in d1.enumerate() {
        for v in [Voice::Active, Voice::Passive] {
            push_pair(&mut rows, DatasetId::D1, format!("p{i:02}"), t, v, SynonymVariant::Na, *e);
        }
    }
    for (i, &(a, v, p, bad)) in D2_EVENTS.iter().enumerate() {
        for (plaus, patient) in [(Plausibility::Plausible, p), (Plausibility::Implausible, bad)] {
            rows.push(Row {
                dataset: DatasetId::D2,
                pair_id: format!("q{i:02}"),
                item_type: ItemType::Na,
                voice: Voice::Na,
                synonym: SynonymVariant::Na,
                plaus,
                agent: a.into(),
                verb: v.into(),
                patient: patient.into(),
                modified: (i % 3 == 0).then(|| a.to_string()),
            });
        }
    }
    for (i, (a, syn, v, p)) in D3_EVENTS.iter().enumerate() {
        for (s, agent) in [(SynonymVariant::One, a), (SynonymVariant::Two, syn)] {
            push_pair(&mut rows, DatasetId::D3, format!("r{i:02}"), ItemType::Na, Voice::Na, s, (agent, v, p));
        }
    }
    rows
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Planted implausibility penalty for a sentence.
fn penalty(r: &Row) -> f64 {
    match (r.plaus, r.item_type) {
        (Plausibility::Plausible, _) | (_, ItemType::AaControl) => 0.0,
        (_, ItemType::Aa) => 0.6,
        _ => 1.0,
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the demo workspace under `root` and returns its config path.
pub fn write_demo_workspace(root: &Path, seed: u64) -> Result<DemoWorkspace> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = rows();

    for &ds in DatasetId::ALL.iter() {
        let mut text = DATASET_COLUMNS.join("\t") + "\n";
        rows.iter().filter(|r| r.dataset == ds).for_each(|r| text.push_str(&r.tsv()));
        write(&root.join(format!("{}.tsv", ds.as_str().to_lowercase())), &text)?;
    }

    let mut ratings = RATINGS_COLUMNS.join("\t") + "\n";
    for r in rows.iter().filter(|r| r.dataset == DatasetId::D1) {
        let centre = match (r.plaus, r.item_type) {
            (Plausibility::Plausible, _) | (_, ItemType::AaControl) => 6.3,
            (_, ItemType::Aa) => 3.6,
            _ => 1.4,
        };
        let mean = (centre + 0.3 * normal(&mut rng)).clamp(1.0, 7.0);
        let _ = writeln!(ratings, "{}\t{mean:.4}\t20\t-", r.id());
    }
    write(&root.join("d1_ratings.tsv"), &ratings)?;

    let mut tokens = String::new();
    for (lm, scheme, strength) in [("lm_small", "causal", 0.5), ("lm_large", "pll_word_l2r", 1.2)] {
        for r in &rows {
            let (words, [_, v, p]) = r.words();
            let pen = penalty(r) * strength;
            let toks: Vec<serde_json::Value> = words
                .iter()
                .enumerate()
                .map(|(i, w)| {
                    let base = -1.5 - 0.25 * w.len() as f64 + 0.5 * normal(&mut rng);
                    let lp = if i == v || i == p { base - pen } else { base };
                    serde_json::json!({"surface": w, "word_index": i, "logprob": lp})
                })
                .collect();
            let rec = serde_json::json!({"sentence_id": r.id(), "scorer_id": lm, "scheme": scheme, "tokens": toks});
            tokens.push_str(&rec.to_string());
            tokens.push('\n');
        }
    }
    write(&root.join("token_logprobs.jsonl"), &tokens)?;

    let mut triples = String::from("# head\tdependent\trole\tcount\n");
    let mut events: Vec<(&str, &str, &str)> = AI_EVENTS
        .iter()
        .chain(&AA_EVENTS)
        .chain(&CONTROL_EVENTS)
        .copied()
        .chain(D2_EVENTS.iter().map(|&(a, v, p, _)| (a, v, p)))
        .collect();
    for (a, s, v, p) in D3_EVENTS {
        events.push((a, v, p));
        events.push((s, v, p));
    }
    for &(a, v, p) in &events {
        let c: u64 = rng.gen_range(20..60);
        let _ = writeln!(triples, "{v}\t{a}\tsubj\t{c}");
        let _ = writeln!(triples, "{v}\t{p}\tobj\t{c}");
        let _ = writeln!(triples, "{a}\t{p}\tsubj_obj\t{c}");
    }
    let unlikely = D2_EVENTS.iter().map(|e| e.3);
    let nouns: Vec<&str> = events.iter().flat_map(|&(a, _, p)| [a, p]).chain(unlikely).collect();
    for noun in nouns {
        {
            for role in ["subj", "obj"] {
                let other = events[rng.gen_range(0..events.len())].1;
                let _ = writeln!(triples, "{other}\t{noun}\t{role}\t{}", rng.gen_range(10..30));
            }
        }
    }
    write(&root.join("triples.tsv"), &triples)?;

    const DIM: usize = 12;
    let mut vocab: Vec<String> = Vec::new();
    let mut vectors: Vec<Vec<f64>> = Vec::new();
    let add = |w: &str, v: Vec<f64>, vocab: &mut Vec<String>, vectors: &mut Vec<Vec<f64>>| {
        if !vocab.iter().any(|x| x == w) {
            vocab.push(w.into());
            vectors.push(v);
        }
    };
    let agent_dir: Vec<f64> = (0..DIM).map(|_| normal(&mut rng)).collect();
    for &(a, v, p) in &events {
        let verb: Vec<f64> = (0..DIM).map(|_| normal(&mut rng)).collect();
        let patient: Vec<f64> = verb.iter().map(|x| 0.8 * x + 0.4 * normal(&mut rng)).collect();
        let agent: Vec<f64> = agent_dir.iter().zip(&verb).map(|(d, x)| d + 0.3 * x + 0.4 * normal(&mut rng)).collect();
        add(v, verb, &mut vocab, &mut vectors);
        add(p, patient, &mut vocab, &mut vectors);
        add(a, agent, &mut vocab, &mut vectors);
    }
    for &(_, _, _, bad) in &D2_EVENTS {
        add(bad, (0..DIM).map(|_| normal(&mut rng)).collect(), &mut vocab, &mut vectors);
    }
    let mut vtext = format!("{} {DIM}\n", vocab.len());
    for (w, v) in vocab.iter().zip(&vectors) {
        let comps: Vec<String> = v.iter().map(|x| format!("{x:.5}")).collect();
        let _ = writeln!(vtext, "{w} {}", comps.join(" "));
    }
    write(&root.join("vectors.txt"), &vtext)?;

    let mut freq = String::new();
    for w in vocab.iter().map(String::as_str).chain(["the", "was", "by", "old"]) {
        let _ = writeln!(freq, "{w}\t{}", rng.gen_range(50..50_000));
    }
    write(&root.join("frequencies.tsv"), &freq)?;

    const EMB_DIM: usize = 6;
    const LAYERS: usize = 7;
    let direction: Vec<f64> = (0..EMB_DIM).map(|_| normal(&mut rng)).collect();
    let mut emb = String::new();
    for r in rows.iter().filter(|r| r.dataset == DatasetId::D1) {
        let label = if penalty(r) > 0.0 { -1.0 } else { 1.0 };
        for layer in 0..LAYERS {
            let s = 0.35 * layer as f64;
            let v: Vec<f64> = direction.iter().map(|d| s * label * d + normal(&mut rng)).collect();
            let rec = serde_json::json!({
                "sentence_id": r.id(), "scorer_id": "lm_small", "layer": layer,
                "summary_token": "final", "vector": v,
            });
            emb.push_str(&rec.to_string());
            emb.push('\n');
        }
    }
    write(&root.join("embeddings.jsonl"), &emb)?;

    let config = root.join("plauskit.toml");
    write(&config, DEMO_CONFIG)?;
    Ok(DemoWorkspace {
        root: root.to_path_buf(),
        config,
    })
}

const DEMO_CONFIG: &str = r#"seed = 7
normalization = "minmax"
out = "out"
frequencies = "frequencies.tsv"

[datasets]
D1 = "d1.tsv"
D2 = "d2.tsv"
D3 = "d3.tsv"

[ratings]
D1 = "d1_ratings.tsv"

[[scorers]]
id = "lm_small"
kind = "token_logprobs"
path = "token_logprobs.jsonl"
record_scorer = "lm_small"

[[scorers]]
id = "lm_large"
kind = "token_logprobs"
path = "token_logprobs.jsonl"
record_scorer = "lm_large"

[[scorers]]
id = "ppmi"
kind = "ppmi"
category = "baseline"
triples = "triples.tsv"

[[scorers]]
id = "thematic_fit"
kind = "thematic_fit"
category = "baseline"
triples = "triples.tsv"
vectors = "vectors.txt"

[[scorers]]
id = "sdm"
kind = "sdm"
category = "baseline"
triples = "triples.tsv"
vectors = "vectors.txt"

[probing]
embeddings = ["embeddings.jsonl"]
folds = 5
"#;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::load_dataset;

    #[test]
    fn workspace_parses() {
        let dir = tempfile::tempdir().unwrap();
        let ws = write_demo_workspace(dir.path(), 1).unwrap();
        let d1 = load_dataset(&ws.root.join("d1.tsv"), DatasetId::D1).unwrap();
        assert_eq!(d1.items.len(), 56);
        let d3 = load_dataset(&ws.root.join("d3.tsv"), DatasetId::D3).unwrap();
        assert_eq!(d3.items.len(), 16);
        let again = tempfile::tempdir().unwrap();
        write_demo_workspace(again.path(), 1).unwrap();
        for f in ["d1_ratings.tsv", "token_logprobs.jsonl", "embeddings.jsonl"] {
            assert_eq!(fs::read(dir.path().join(f)).unwrap(), fs::read(again.path().join(f)).unwrap());
        }
    }
}
