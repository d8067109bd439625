//! Significance tests used across the analyses.

use plauskit::stats::{
    bh_fdr, binom_test, dependent_nonoverlapping_correlation_test, equal_proportions_test, pearson_test,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let b = binom_test(21, 24, 0.5)?;
    println!("binomial 21/24 vs 0.5: p = {:.3e}", b.p_value);

    let g = equal_proportions_test(128, 129, 122, 129, true)?;
    println!("equal proportions 128/129 vs 122/129: chi2 = {:.4}, p = {:.4}", g.statistic, g.p_value);

    let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let y = [1.2, 1.9, 3.4, 3.9, 5.3, 5.8];
    let r = pearson_test(&x, &y)?;
    println!("pearson r = {:.4}, p = {:.3e}", r.statistic, r.p_value);

    let z = dependent_nonoverlapping_correlation_test(0.8, 0.4, 0.5, 0.3, 0.35, 0.45, 100)?;
    println!("dependent non-overlapping correlations: z = {:.4}, p = {:.4}", z.statistic, z.p_value);

    let q = bh_fdr(&[0.001, 0.01, 0.03, 0.04, 0.5])?;
    println!("BH adjusted: {q:.4?}");
    Ok(())
}
