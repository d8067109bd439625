//! Smoothed PPMI over dependency triples and sentence scores from it.

use plauskit::corpus::{RoleSpans, Sentence, SentenceId, Span};
use plauskit::counts::{ppmi, score_sentence_ppmi, RoleRelations, Triple, TripleCounter};

fn sentence(text: &str, agent: usize, verb: usize, patient: usize) -> Sentence {
    let one = |i: usize| Some(Span::new(i, i + 1));
    Sentence {
        id: SentenceId::from(text),
        text: text.into(),
        roles: RoleSpans {
            agent: one(agent),
            verb: one(verb),
            patient: one(patient),
        },
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut counter = TripleCounter::new();
    for (h, d, r, c) in [
        ("arrested", "cop", "subj", 40),
        ("arrested", "criminal", "obj", 35),
        ("chased", "cop", "subj", 10),
        ("chased", "criminal", "obj", 8),
        ("robbed", "criminal", "subj", 25),
        ("fined", "cop", "obj", 2),
    ] {
        counter.add(Triple::new(h, d, r), c);
    }
    let tc = counter.build(1);
    for laplace in [0, 1] {
        println!(
            "laplace={laplace}: ppmi(arrested, cop, subj) = {:.4}, ppmi(arrested, criminal, subj) = {:.4}",
            ppmi(&tc, "arrested", "cop", "subj", laplace),
            ppmi(&tc, "arrested", "criminal", "subj", laplace)
        );
    }
    let rel = RoleRelations::default();
    let plausible = sentence("the cop arrested the criminal", 1, 2, 4);
    let implausible = sentence("the criminal arrested the cop", 1, 2, 4);
    let passive = sentence("the criminal was arrested by the cop", 6, 3, 1);
    for s in [&plausible, &implausible, &passive] {
        println!("{:<38} {:.4}", s.text, score_sentence_ppmi(s, &tc, &rel, 1)?);
    }
    Ok(())
}
