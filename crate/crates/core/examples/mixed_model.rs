//! Random intercepts and slopes by item, fitted by maximum likelihood.

use std::collections::BTreeMap;

use plauskit::corpus::{ItemType, Plausibility, Voice};
use plauskit::stats::{fit_lmm, term_label, Covariate, LmmObservation, RegressionSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut gauss = move || -> f64 {
        let (u, v): (f64, f64) = (rng.gen_range(1e-12..1.0), rng.gen());
        (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
    };
    let mut data = Vec::new();
    for item in 0..60 {
        let item_type = if item % 2 == 0 { ItemType::Ai } else { ItemType::Aa };
        let (b0, b1) = (0.3 * gauss(), 0.2 * gauss());
        for voice in [Voice::Active, Voice::Passive] {
            for p in [Plausibility::Plausible, Plausibility::Implausible] {
                let imp = f64::from(u8::from(p == Plausibility::Implausible));
                let ai = f64::from(u8::from(item_type == ItemType::Ai));
                let length = 5.0 + 2.0 * f64::from(u8::from(voice == Voice::Passive)) + gauss().abs();
                let y = 1.0 + b0 + (-0.8 + b1 - 0.5 * ai) * imp + 0.05 * length + 0.3 * gauss();
                data.push(LmmObservation {
                    item: format!("i{item}"),
                    plausibility: p,
                    item_type,
                    voice,
                    covariates: BTreeMap::from([(Covariate::SentenceLength, length)]),
                    response: y,
                });
            }
        }
    }
    let mut spec = RegressionSpec::full();
    spec.covariates = vec![Covariate::SentenceLength];
    let fit = fit_lmm(&spec, &data)?;
    for c in &fit.coefficients {
        let label = term_label(&c.name).unwrap_or("");
        println!("{:<24} {:>8.4} (se {:.4}, p {:.2e}) {label}", c.name, c.estimate, c.se, c.p_value);
    }
    println!("variances: {:?} residual {:.4}", fit.variances.random, fit.variances.residual);
    println!("log-likelihood {:.3}, converged {}, singular {}", fit.log_likelihood, fit.converged, fit.singular);
    Ok(())
}
