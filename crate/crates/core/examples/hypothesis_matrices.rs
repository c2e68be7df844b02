//! Builds hypothesis matrices for a two-between, two-within layout and lists
//! every effect of the multivariate and the marginal analysis with its df.

use manova_boot::design::{all_effects, build_hypothesis, Analysis, Factor, FactorialLayout};

fn main() -> manova_boot::Result<()> {
    let layout = FactorialLayout::new(
        vec![
            Factor::between("sex", &["M", "F"]),
            Factor::between("diagnosis", &["AD", "MCI", "SCC"]),
            Factor::within("feature", &["brain rate", "complexity"]),
            Factor::within("region", &["temporal", "frontal", "central"]),
        ],
        None,
    )?;
    println!("d = {} cells, p = {} responses", layout.d(), layout.p());
    for analysis in [Analysis::Multivariate, Analysis::Marginal] {
        println!("\n{analysis} analysis");
        for spec in all_effects(&layout, analysis) {
            let h = build_hypothesis(&layout, &spec)?;
            println!("  {:<32} df {:>2}   T is {}x{}", h.label, h.df, h.t.rows(), h.t.cols());
        }
    }
    Ok(())
}
