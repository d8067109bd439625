//! Layer-wise linear probes with a human-rating ceiling and cross-condition
//! generalization.

use plauskit::corpus::{load_dataset, load_ratings, DatasetId};
use plauskit::harness::parse_condition;
use plauskit::probe::{generalization_matrix, read_embeddings, summary_table};
use plauskit::synth::write_demo_workspace;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("plauskit-probe-example");
    let ws = write_demo_workspace(&dir, 9)?;
    let d1 = load_dataset(&ws.root.join("d1.tsv"), DatasetId::D1)?;
    let ratings = load_ratings(&ws.root.join("d1_ratings.tsv"))?;
    let sets = read_embeddings(&ws.root.join("embeddings.jsonl"))?;
    let cells = [("all/all", "all/all"), ("AI/all", "AA/all"), ("all/active", "all/passive")]
        .map(|(a, b)| Ok::<_, plauskit::Error>((parse_condition(a)?, parse_condition(b)?)))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    for (model, set) in &sets {
        let reports = generalization_matrix(&d1.items, set, &cells, Some(&ratings), 5, 42)?;
        println!("{model}");
        print!("{}", summary_table(&reports));
    }
    Ok(())
}
