//! Closed testing of all pairwise comparisons among four groups, first with
//! fixed intersection p-values, then with parametric bootstrap tests on data.

use manova_boot::design::{Analysis, Factor, FactorialLayout};
use manova_boot::distributions::RngStream;
use manova_boot::inference::{BootstrapSettings, GroupedDataset, Method};
use manova_boot::multiplicity::{closure, pairwise_comparisons, HypothesisFamily};

fn main() -> manova_boot::Result<()> {
    let names: Vec<String> = ["A", "B", "C", "D"].iter().map(|s| s.to_string()).collect();
    let family = HypothesisFamily::pairwise(names, 0.05)?;
    // a made-up tester: only "A = B" on its own is compatible with the data
    let decision = closure(family, |part| Ok(if part.blocks() == [vec![0, 1]] { 0.4 } else { 0.01 }))?;
    println!("{} intersection hypotheses", decision.intersections.len());
    for e in &decision.elementary {
        println!("  {:<8} raw {:.4}  adjusted {:.4}  {}", e.label, e.raw_p, e.adjusted_p, if e.rejected { "reject" } else { "retain" });
    }

    let layout = FactorialLayout::new(vec![Factor::between("group", &["A", "B", "C", "D"])], Some(2))?;
    let mut rng = RngStream::new(11, 0);
    let shifts = [0.0, 0.0, 1.0, 1.2];
    let groups: Vec<Vec<Vec<f64>>> = shifts
        .iter()
        .map(|&s| (0..25).map(|_| vec![s + rng.standard_normal(), rng.standard_normal()]).collect())
        .collect();
    let data = GroupedDataset::from_rows(&groups)?;
    let report = pairwise_comparisons(
        &data,
        &layout,
        "group",
        Analysis::Multivariate,
        &[Method::Chi2, Method::Pbs],
        &BootstrapSettings::new(999, 3, 0.05),
    )?;
    for d in &report.decisions {
        println!("\n{}: rejected {:?}", d.method.heading(), d.decision.rejected());
    }
    Ok(())
}
