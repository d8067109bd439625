//! Sentence log-likelihood accuracy on minimal pairs, per item type.

use std::collections::HashMap;

use plauskit::corpus::{load_dataset, normalize_over_dataset, DatasetId, ItemType, NormMode};
use plauskit::scoring::{aggregate_sentence_score, binary_accuracy, decide_pairs, read_token_records, Aggregation};
use plauskit::stats::binom_test;
use plauskit::synth::write_demo_workspace;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("plauskit-accuracy-example");
    let ws = write_demo_workspace(&dir, 3)?;
    let d1 = load_dataset(&ws.root.join("d1.tsv"), DatasetId::D1)?;

    let mut by_model: HashMap<String, plauskit::corpus::ScoreMap> = HashMap::new();
    for rec in read_token_records(&ws.root.join("token_logprobs.jsonl"))? {
        let s = aggregate_sentence_score(&rec, Aggregation::Sum)?;
        by_model.entry(rec.scorer_id.clone()).or_default().insert(s.sentence_id, s.value);
    }

    let mut models: Vec<_> = by_model.keys().cloned().collect();
    models.sort();
    for model in models {
        let scores: HashMap<_, _> = by_model[&model]
            .iter()
            .filter(|(id, _)| d1.sentences().any(|(_, _, s)| &s.id == *id))
            .map(|(k, v)| (k.clone(), *v))
            .collect();
        let norm = normalize_over_dataset(&scores, &d1, NormMode::Minmax)?;
        for t in [ItemType::Ai, ItemType::Aa] {
            let decisions = decide_pairs(&model, &norm, d1.filter(|i| i.item_type == t))?;
            let acc = binary_accuracy(&decisions)?;
            let p = binom_test(acc.k as u64, acc.n as u64, 0.5)?.p_value;
            println!("{model} {t}: {}/{} = {:.3} (se {:.3}, p {p:.2e})", acc.k, acc.n, acc.accuracy, acc.se);
        }
    }
    Ok(())
}

