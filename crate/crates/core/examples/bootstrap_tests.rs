//! Parametric and nonparametric bootstrap p-values for a heteroscedastic
//! one-way design with three bivariate groups of unequal size.

use manova_boot::design::{build_hypothesis, Analysis, Factor, FactorialLayout, HypothesisSpec};
use manova_boot::distributions::{draw_mvn, RngStream};
use manova_boot::inference::{test_hypotheses, BootstrapSettings, GroupedDataset, Method};
use manova_boot::linalg::Matrix;

fn main() -> manova_boot::Result<()> {
    let mut rng = RngStream::new(2024, 0);
    let spec = [(8, 1.0, [0.0, 0.0]), (15, 2.0, [0.3, 0.0]), (30, 4.0, [0.8, 0.5])];
    let groups = spec
        .iter()
        .map(|&(n, sd, mean)| {
            let root = Matrix::from_rows(&[&[sd, 0.0], &[0.5 * sd, sd]]);
            (0..n).map(|_| draw_mvn(&mean, &root, &mut rng)).collect::<manova_boot::Result<Vec<_>>>()
        })
        .collect::<manova_boot::Result<Vec<_>>>()?;
    let data = GroupedDataset::from_rows(&groups)?;
    let layout = FactorialLayout::new(vec![Factor::between("group", &["g1", "g2", "g3"])], Some(2))?;
    let h = build_hypothesis(&layout, &HypothesisSpec::new(&["group"], Analysis::Multivariate))?;

    let settings = BootstrapSettings::new(5000, 7, 0.05);
    let r = &test_hypotheses(&data, &[&h], &Method::ALL, &settings)?[0];
    println!("Q_N = {:.3} on {} df", r.statistic, r.df);
    println!("  chi-square p = {:.4}", r.p_chi2);
    println!("  PBS p        = {:.4} (critical value {:.3})", r.p_pbs.unwrap(), r.critical_pbs.unwrap());
    println!("  NPBS p       = {:.4} (critical value {:.3})", r.p_npbs.unwrap(), r.critical_npbs.unwrap());
    Ok(())
}
