//! Thematic-fit prototypes and the structured distributional model on the
//! demo triples and vectors.

use plauskit::corpus::{load_dataset, DatasetId, Plausibility};
use plauskit::counts::read_triple_file;
use plauskit::vectors::{patient_prototype, sdm_score, thematic_fit_score, EventGraph, PrototypeConfig, SdmConfig, VectorSpace};
use plauskit::synth::write_demo_workspace;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("plauskit-event-example");
    let ws = write_demo_workspace(&dir, 5)?;
    let tc = read_triple_file(&ws.root.join("triples.tsv"))?.build(1);
    let vs = VectorSpace::load_text(&ws.root.join("vectors.txt"))?;
    let deg = EventGraph::from_counts(&tc, 200);
    let d1 = load_dataset(&ws.root.join("d1.tsv"), DatasetId::D1)?;

    let proto = patient_prototype("arrested", "cop", &tc, &vs, &PrototypeConfig::default())?;
    println!("patient prototype of (cop, arrested): {:?} verb_only={}", proto.support, proto.verb_only);

    let (tf_cfg, sdm_cfg) = (PrototypeConfig::default(), SdmConfig::default());
    let (mut tf_wins, mut sdm_wins, mut n) = (0, 0, 0);
    for item in d1.filter(|i| i.is_contrastive()) {
        let [p, i] = [Plausibility::Plausible, Plausibility::Implausible].map(|k| item.sentence(k));
        let tf = (thematic_fit_score(p, &tc, &vs, &tf_cfg)?, thematic_fit_score(i, &tc, &vs, &tf_cfg)?);
        let sdm = (sdm_score(p, &deg, &vs, &sdm_cfg)?.value, sdm_score(i, &deg, &vs, &sdm_cfg)?.value);
        tf_wins += usize::from(tf.0 > tf.1);
        sdm_wins += usize::from(sdm.0 > sdm.1);
        n += 1;
    }
    println!("thematic fit: {tf_wins}/{n} pairs correct");
    println!("sdm:          {sdm_wins}/{n} pairs correct");
    Ok(())
}
