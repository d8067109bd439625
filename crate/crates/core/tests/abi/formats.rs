use std::path::PathBuf;

use plauskit::corpus::{load_dataset, DatasetId, Plausibility, SentenceId};
use plauskit::probe::{read_embeddings, SummaryToken};
use plauskit::scoring::{
    aggregate_sentence_score, last_word_score, read_sentence_scores, read_token_records, verb_score,
    write_sentence_scores, Aggregation, Scheme,
};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn sentence_ids_match_fixture_records() {
    let ds = load_dataset(&fixture("d1_pair.tsv"), DatasetId::D1).unwrap();
    let item = &ds.items[0];
    assert_eq!(item.plausible.id, SentenceId::from("ca493218485aafbe"));
    assert_eq!(item.implausible.id, SentenceId::from("1a95e0aa88a3fc4c"));
}

#[test]
fn token_records_aggregate() {
    let ds = load_dataset(&fixture("d1_pair.tsv"), DatasetId::D1).unwrap();
    let item = &ds.items[0];
    let recs = read_token_records(&fixture("token_logprobs.jsonl")).unwrap();
    assert_eq!(recs.len(), 2);
    assert!(recs.iter().all(|r| r.scheme == Scheme::Causal && r.scorer_id == "tiny-causal"));
    // (sum, mean, last word, verb) by hand from the fixture.
    let expected = [(-16.5, -16.5 / 7.0, -2.0, -4.0), (-23.5, -23.5 / 7.0, -3.25, -7.0)];
    for (p, (sum, mean, last, verb)) in [Plausibility::Plausible, Plausibility::Implausible].into_iter().zip(expected) {
        let s = item.sentence(p);
        let rec = recs.iter().find(|r| r.sentence_id == s.id).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(close(aggregate_sentence_score(rec, Aggregation::Sum).unwrap().value, sum));
        assert!(close(aggregate_sentence_score(rec, Aggregation::Mean).unwrap().value, mean));
        assert!(close(last_word_score(rec).unwrap().value, last));
        assert!(close(verb_score(rec, s.roles.verb.unwrap()).unwrap().value, verb));
    }
}

#[test]
fn sentence_scores_round_trip() {
    let recs = read_token_records(&fixture("token_logprobs.jsonl")).unwrap();
    let scores: Vec<_> = recs.iter().map(|r| last_word_score(r).unwrap()).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.jsonl");
    write_sentence_scores(&path, &scores).unwrap();
    assert_eq!(read_sentence_scores(&path).unwrap(), scores);
    let line = std::fs::read_to_string(&path).unwrap();
    let first: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    assert_eq!(first["metric"], "last_word");
}

#[test]
fn embedding_records_group_by_layer() {
    let sets = read_embeddings(&fixture("embeddings.jsonl")).unwrap();
    let set = &sets["tiny-causal"];
    assert_eq!(set.summary_token, SummaryToken::Final);
    assert_eq!(set.layers.keys().copied().collect::<Vec<_>>(), vec![0, 1]);
    assert_eq!(set.layers[&1][&SentenceId::from("1a95e0aa88a3fc4c")], vec![1.0, 0.5, -1.0]);
}

#[test]
fn malformed_records_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bad = [
        r#"{"sentence_id":"a","scorer_id":"m","scheme":"causal","tokens":[]}"#,
        r#"{"sentence_id":"a","scorer_id":"m","scheme":"causal","tokens":[{"surface":"x","word_index":0,"logprob":0.5}]}"#,
        r#"{"sentence_id":"a","scorer_id":"m","scheme":"causal","tokens":[{"surface":"x","word_index":1,"logprob":-1},{"surface":"y","word_index":0,"logprob":-1}]}"#,
        r#"{"sentence_id":"a","scorer_id":"m","scheme":"bogus","tokens":[{"surface":"x","word_index":0,"logprob":-1}]}"#,
    ];
    for (i, line) in bad.iter().enumerate() {
        let p = dir.path().join(format!("{i}.jsonl"));
        std::fs::write(&p, format!("{line}\n")).unwrap();
        assert!(read_token_records(&p).is_err(), "{line}");
    }
    let p = dir.path().join("emb.jsonl");
    std::fs::write(
        &p,
        concat!(
            r#"{"sentence_id":"a","scorer_id":"m","layer":0,"summary_token":"cls","vector":[1.0,2.0]}"#,
            "\n",
            r#"{"sentence_id":"b","scorer_id":"m","layer":0,"summary_token":"cls","vector":[1.0]}"#,
            "\n"
        ),
    )
    .unwrap();
    assert!(read_embeddings(&p).is_err());
}
