//! A short type-I error simulation of the built-in sex x diagnosis scenario
//! under double exponential errors.

use manova_boot::distributions::ErrorDistribution;
use manova_boot::inference::Method;
use manova_boot::simulation::{run_scenario, two_way_scenario};

fn main() -> manova_boot::Result<()> {
    let mut s = two_way_scenario(ErrorDistribution::Laplace);
    s.nsim = 200;
    s.replicates = 199;
    let report = run_scenario(&s)?;
    println!("{} replications, B = {}, alpha = {}", report.nsim, report.replicates, report.alpha);
    println!("{:<16} {:>6} {:>6} {:>6}", "effect", "WTS", "NPBS", "PBS");
    for e in report.effects() {
        let rate = |m| report.rate(e, m).unwrap_or(f64::NAN);
        println!("{e:<16} {:>6.3} {:>6.3} {:>6.3}", rate(Method::Chi2), rate(Method::Npbs), rate(Method::Pbs));
    }
    Ok(())
}
