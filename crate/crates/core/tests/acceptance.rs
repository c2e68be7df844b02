//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with
//! a failure status if any criterion fails.
//!
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test --test acceptance -- 5 8`.

#![allow(clippy::needless_range_loop, clippy::type_complexity)]

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use manova_boot::design::{all_effects, build_hypothesis, Analysis, Factor, FactorialLayout, HypothesisSpec};
use manova_boot::distributions::{chi_square_sf, ErrorDistribution};
use manova_boot::inference::{
    estimate_moments, test_hypotheses, wald_statistic, BootstrapSettings, GroupedDataset, Method, WaldKernel,
};
use manova_boot::io::ResultDocument;
use manova_boot::linalg::{pseudo_inverse, sym_sqrt, Matrix};
use manova_boot::multiplicity::{closure, ClosurePlan, HypothesisFamily, Partition};
use manova_boot::simulation::{run_scenario, three_way_scenario, two_way_scenario, SimulationScenario};

use common::{cohort_config, run_cli, write_cohort, write_file, Responses, AGE, DIAGNOSIS, SEX};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// 1. chi-square calibration

fn criterion_1() -> Outcome {
    let cases = [(15.54, 6, 0.0164), (18.69, 6, 0.0047), (12.60, 6, 0.0498), (17.24, 6, 0.0084), (21.65, 6, 0.0014)];
    let mut worst = 0.0_f64;
    for (x, df, p) in cases {
        let got = chi_square_sf(x, df).map_err(|e| e.to_string())?;
        worst = worst.max((got - p).abs());
        ensure((got - p).abs() <= 5e-4, || format!("sf({x}, {df}) = {got:.6}, table {p}"))?;
    }
    // every other reported WTS p-value is reproduced up to the rounding of
    // the printed statistic
    let rows = [
        (5.52, 6, 0.4792), (9.79, 12, 0.6344), (49.44, 12, 0.0), (4.84, 6, 0.5647), (9.18, 12, 0.6876),
        (9.97, 1, 0.0016), (0.09, 1, 0.7687), (0.07, 2, 0.9658), (3.78, 2, 0.1513), (2.17, 1, 0.1410),
        (0.88, 2, 0.6454), (5.32, 2, 0.0701), (6.12, 4, 0.1903), (0.65, 2, 0.7216), (1.74, 2, 0.4199),
        (1.53, 4, 0.8210), (0.42, 2, 0.8095), (7.14, 4, 0.1286), (2.27, 4, 0.6855),
        (10.81, 6, 0.0944), (14.70, 6, 0.0227), (5.73, 12, 0.9292), (14.73, 6, 0.0225), (11.97, 12, 0.4478),
        (0.01, 1, 0.9246), (0.91, 2, 0.6333), (14.16, 5, 0.0146), (18.31, 10, 0.0500), (5.37, 10, 0.8651),
    ];
    let mut checked = 0;
    for (x, df, p) in rows {
        if p == 0.0 {
            continue;
        }
        let hi = chi_square_sf(x - 0.005, df).map_err(|e| e.to_string())? + 5e-5;
        let lo = chi_square_sf(x + 0.005, df).map_err(|e| e.to_string())? - 5e-5;
        ensure(lo <= p && p <= hi, || format!("table row ({x}, {df}) p = {p} outside [{lo:.5}, {hi:.5}]"))?;
        checked += 1;
    }
    Ok(format!("5 calibration points, max error {worst:.1e}; {checked} further table rows consistent"))
}

// 2. degrees of freedom

fn layout(between: &[(&str, &[&str])], within: &[(&str, &[&str])], p: Option<usize>) -> FactorialLayout {
    let mut factors: Vec<Factor> = between.iter().map(|(n, l)| Factor::between(*n, l)).collect();
    factors.extend(within.iter().map(|(n, l)| Factor::within(*n, l)));
    FactorialLayout::new(factors, p).expect("valid layout")
}

const FEATURE: (&str, &[&str]) = ("feature", &["br", "cx"]);
const REGION3: (&str, &[&str]) = ("region", &["frontal", "central", "temporal"]);
const REGION6: (&str, &[&str]) = ("region", &["mtl", "ltl", "ptl", "acg", "ptc", "tp"]);

fn criterion_2() -> Outcome {
    let mv = |a, b| layout(&[a, b], &[], Some(6));
    let tables: Vec<(&str, FactorialLayout, Analysis, Vec<(&str, usize)>)> = vec![
        ("multivariate sex x age", mv(SEX, AGE), Analysis::Multivariate, vec![("sex", 6), ("age", 6), ("sex*age", 6)]),
        (
            "multivariate sex x diagnosis",
            mv(SEX, DIAGNOSIS),
            Analysis::Multivariate,
            vec![("sex", 6), ("diagnosis", 12), ("sex*diagnosis", 12)],
        ),
        (
            "multivariate diagnosis x age",
            mv(DIAGNOSIS, AGE),
            Analysis::Multivariate,
            vec![("diagnosis", 12), ("age", 6), ("diagnosis*age", 12)],
        ),
        (
            "marginal sex x diagnosis x feature x region",
            layout(&[SEX, DIAGNOSIS], &[FEATURE, REGION3], None),
            Analysis::Marginal,
            vec![
                ("sex", 1), ("diagnosis", 2), ("feature", 1), ("region", 2), ("sex*diagnosis", 2),
                ("sex*feature", 1), ("sex*region", 2), ("diagnosis*feature", 2), ("diagnosis*region", 4),
                ("feature*region", 2), ("sex*diagnosis*feature", 2), ("sex*diagnosis*region", 4),
                ("sex*feature*region", 2), ("diagnosis*feature*region", 4), ("sex*diagnosis*feature*region", 4),
            ],
        ),
        (
            "marginal diagnosis x age x feature x region",
            layout(&[DIAGNOSIS, AGE], &[FEATURE, REGION3], None),
            Analysis::Marginal,
            vec![
                ("diagnosis", 2), ("age", 1), ("feature", 1), ("region", 2), ("diagnosis*age", 2),
                ("diagnosis*feature", 2), ("diagnosis*region", 4), ("age*feature", 1), ("age*region", 2),
                ("feature*region", 2), ("diagnosis*age*feature", 2), ("diagnosis*age*region", 4),
                ("diagnosis*feature*region", 4), ("age*feature*region", 2), ("diagnosis*age*feature*region", 4),
            ],
        ),
        (
            "marginal sex x age x feature x region",
            layout(&[SEX, AGE], &[FEATURE, REGION3], None),
            Analysis::Marginal,
            vec![
                ("sex", 1), ("age", 1), ("feature", 1), ("region", 2), ("sex*age", 1), ("sex*feature", 1),
                ("sex*region", 2), ("age*feature", 1), ("age*region", 2), ("feature*region", 2),
                ("sex*age*feature", 1), ("sex*age*region", 2), ("sex*feature*region", 2),
                ("age*feature*region", 2), ("sex*age*feature*region", 2),
            ],
        ),
        (
            "marginal sex x diagnosis x region",
            layout(&[SEX, DIAGNOSIS], &[REGION6], None),
            Analysis::Marginal,
            vec![
                ("sex", 1), ("diagnosis", 2), ("region", 5), ("sex*diagnosis", 2), ("sex*region", 5),
                ("diagnosis*region", 10), ("sex*diagnosis*region", 10),
            ],
        ),
        (
            "marginal sex x age x region",
            layout(&[SEX, AGE], &[REGION6], None),
            Analysis::Marginal,
            vec![
                ("sex", 1), ("age", 1), ("region", 5), ("sex*age", 1), ("sex*region", 5), ("age*region", 5),
                ("sex*age*region", 5),
            ],
        ),
        (
            "marginal diagnosis x age x region",
            layout(&[DIAGNOSIS, AGE], &[REGION6], None),
            Analysis::Marginal,
            vec![
                ("diagnosis", 2), ("age", 1), ("region", 5), ("diagnosis*age", 2), ("diagnosis*region", 10),
                ("age*region", 5), ("diagnosis*age*region", 10),
            ],
        ),
    ];
    let mut entries = 0;
    for (name, layout, analysis, expected) in &tables {
        let effects = all_effects(layout, *analysis);
        let labels: Vec<String> = effects.iter().map(HypothesisSpec::label).collect();
        let want: Vec<&str> = expected.iter().map(|(e, _)| *e).collect();
        ensure(labels == want, || format!("{name}: effects {labels:?}, expected {want:?}"))?;
        for (spec, (label, df)) in effects.iter().zip(expected) {
            let h = build_hypothesis(layout, spec).map_err(|e| format!("{name} {label}: {e}"))?;
            // T is a projection, so its trace is its rank
            let trace = h.t.trace();
            ensure(h.df == *df && (trace - *df as f64).abs() < 1e-9, || {
                format!("{name} {label}: df {} (trace {trace:.6}), table {df}", h.df)
            })?;
            entries += 1;
        }
    }
    Ok(format!("{entries} df entries across {} layouts match exactly", tables.len()))
}

// 3 and 4. type-I error simulations

fn print_rates(reports: &[manova_boot::simulation::SimulationReport]) {
    for r in reports {
        for e in r.effects() {
            println!(
                "    {:<8} {:<20} WTS {:.4}  NPBS {:.4}  PBS {:.4}",
                r.dist.name(),
                e,
                r.rate(e, Method::Chi2).unwrap_or(f64::NAN),
                r.rate(e, Method::Npbs).unwrap_or(f64::NAN),
                r.rate(e, Method::Pbs).unwrap_or(f64::NAN),
            );
        }
    }
}

fn run_all(scenarios: Vec<SimulationScenario>) -> Result<Vec<manova_boot::simulation::SimulationReport>, String> {
    scenarios.iter().map(|s| run_scenario(s).map_err(|e| e.to_string())).collect()
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let scenarios = ErrorDistribution::ALL
        .iter()
        .map(|&d| {
            let mut s = two_way_scenario(d);
            s.nsim = 5000;
            s.replicates = 1000;
            s.alpha = 0.05;
            s
        })
        .collect();
    let reports = run_all(scenarios)?;
    print_rates(&reports);
    let mut failures = Vec::new();
    for r in &reports {
        let effects = r.effects();
        let rate = |e: &str, m| r.rate(e, m).expect("rate");
        for &e in &effects {
            let pbs = rate(e, Method::Pbs);
            if !(0.038..=0.068).contains(&pbs) {
                failures.push(format!("{} {e}: PBS {pbs:.4} outside [0.038, 0.068]", r.dist.name()));
            }
        }
        let liberal = effects.iter().filter(|&&e| rate(e, Method::Chi2) > 0.09).count();
        if liberal < 2 {
            failures.push(format!("{}: WTS > 0.09 for only {liberal} of 3 effects", r.dist.name()));
        }
        let mean = |m| effects.iter().map(|&e| rate(e, m)).sum::<f64>() / effects.len() as f64;
        let (wts, npbs, pbs) = (mean(Method::Chi2), mean(Method::Npbs), mean(Method::Pbs));
        if !(pbs < npbs && npbs < wts) {
            failures.push(format!(
                "{}: mean NPBS {npbs:.4} not strictly between PBS {pbs:.4} and WTS {wts:.4}",
                r.dist.name()
            ));
        }
    }
    ensure(failures.is_empty(), || failures.join("; "))?;
    Ok(format!("5 distributions x 3 effects within bands ({:.0} s)", start.elapsed().as_secs_f64()))
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut s = three_way_scenario(ErrorDistribution::Normal);
    s.nsim = 2000;
    s.replicates = 500;
    let reports = run_all(vec![s])?;
    print_rates(&reports);
    let r = &reports[0];
    let mut failures = Vec::new();
    for e in r.effects() {
        let pbs = r.rate(e, Method::Pbs).expect("rate");
        let wts = r.rate(e, Method::Chi2).expect("rate");
        if !(0.032..=0.072).contains(&pbs) {
            failures.push(format!("{e}: PBS {pbs:.4} outside [0.032, 0.072]"));
        }
        if wts < pbs {
            failures.push(format!("{e}: WTS {wts:.4} below PBS {pbs:.4}"));
        }
    }
    ensure(failures.is_empty(), || failures.join("; "))?;
    Ok(format!("7 effects within bands ({:.0} s)", start.elapsed().as_secs_f64()))
}

// 5. closed-form oracles

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let two = layout(&[("g", &["a", "b"])], &[], Some(1));
    let h = build_hypothesis(&two, &HypothesisSpec::new(&["g"], Analysis::Multivariate)).map_err(|e| e.to_string())?;
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let n1 = rng.random_range(2..40);
        let n2 = rng.random_range(2..40);
        let (m2, s2) = (rng.random_range(-2.0..2.0), rng.random_range(0.1..5.0));
        let x: Vec<f64> = (0..n1).map(|_| normal(&mut rng)).collect();
        let y: Vec<f64> = (0..n2).map(|_| m2 + s2 * normal(&mut rng)).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let var = |v: &[f64]| {
            let m = mean(v);
            v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
        };
        let t = (mean(&x) - mean(&y)) / (var(&x) / n1 as f64 + var(&y) / n2 as f64).sqrt();
        let data = GroupedDataset::from_rows(&[
            x.iter().map(|&v| vec![v]).collect(),
            y.iter().map(|&v| vec![v]).collect(),
        ])
        .map_err(|e| e.to_string())?;
        let est = estimate_moments(&data).map_err(|e| e.to_string())?;
        let q = wald_statistic(&est, &h.t).map_err(|e| e.to_string())?.statistic;
        let rel = (q - t * t).abs() / (t * t).max(1.0);
        worst = worst.max(rel);
        ensure(rel <= 1e-10, || format!("Welch: Q {q} vs t^2 {}", t * t))?;
    }
    let mut worst_one = 0.0_f64;
    for _ in 0..1000 {
        let n = rng.random_range(2..60);
        let shift = rng.random_range(-1.0..1.0);
        let x: Vec<f64> = (0..n).map(|_| shift + normal(&mut rng)).collect();
        let m = x.iter().sum::<f64>() / n as f64;
        let s2 = x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        let expected = n as f64 * m * m / s2;
        let data = GroupedDataset::from_rows(&[x.iter().map(|&v| vec![v]).collect()]).map_err(|e| e.to_string())?;
        let est = estimate_moments(&data).map_err(|e| e.to_string())?;
        let q = wald_statistic(&est, &Matrix::identity(1)).map_err(|e| e.to_string())?.statistic;
        let rel = (q - expected).abs() / expected.max(1.0);
        worst_one = worst_one.max(rel);
        ensure(rel <= 1e-12, || format!("one sample: Q {q} vs {expected}"))?;
    }
    Ok(format!("Welch max rel. error {worst:.1e} on 1000 datasets; one-sample {worst_one:.1e}"))
}

// 6. invariances

struct RandomDesign {
    layout: FactorialLayout,
    spec: HypothesisSpec,
    data: GroupedDataset,
}

fn random_design(rng: &mut ChaCha8Rng) -> RandomDesign {
    const BETWEEN: [&[usize]; 8] = [&[2], &[3], &[4], &[5], &[6], &[2, 2], &[2, 3], &[3, 2]];
    const WITHIN: [&[usize]; 6] = [&[], &[2], &[3], &[6], &[2, 2], &[2, 3]];
    let names = ["a", "b", "c", "d"];
    let labels = ["l1", "l2", "l3", "l4", "l5", "l6"];
    let between = BETWEEN[rng.random_range(0..BETWEEN.len())];
    let within = WITHIN[rng.random_range(0..WITHIN.len())];
    let mut factors: Vec<Factor> = between
        .iter()
        .enumerate()
        .map(|(i, &k)| Factor::between(names[i], &labels[..k]))
        .collect();
    factors.extend(within.iter().enumerate().map(|(i, &k)| Factor::within(names[2 + i], &labels[..k])));
    let p = if within.is_empty() { Some(rng.random_range(1..=6)) } else { None };
    let layout = FactorialLayout::new(factors, p).expect("valid layout");
    let analysis = if within.is_empty() || rng.random_bool(0.3) { Analysis::Multivariate } else { Analysis::Marginal };
    let effects = all_effects(&layout, analysis);
    let spec = effects[rng.random_range(0..effects.len())].clone();
    let p = layout.p();
    let groups: Vec<Vec<Vec<f64>>> = (0..layout.d())
        .map(|_| {
            let n = rng.random_range(p + 2..p + 16);
            let a = Matrix::from_fn(p, p, |r, c| (if r == c { 1.0 } else { 0.0 }) + 0.5 * normal(rng));
            let mean: Vec<f64> = (0..p).map(|_| rng.random_range(-3.0..3.0)).collect();
            (0..n)
                .map(|_| {
                    let z: Vec<f64> = (0..p).map(|_| normal(rng)).collect();
                    a.matvec(&z).expect("p").iter().zip(&mean).map(|(x, m)| x + m).collect()
                })
                .collect()
        })
        .collect();
    let data = GroupedDataset::from_rows(&groups).expect("rectangular groups");
    RandomDesign { layout, spec, data }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut counts = [0usize; 2];
    for design in 0..200 {
        let RandomDesign { layout, spec, data } = random_design(&mut rng);
        let tag = |what: &str| format!("design {design} ({}, d = {}, p = {}): {what}", spec.label(), layout.d(), layout.p());
        let h = build_hypothesis(&layout, &spec).map_err(|e| tag(&e.to_string()))?;
        let est = estimate_moments(&data).map_err(|e| tag(&e.to_string()))?;
        let q = wald_statistic(&est, &h.t).map_err(|e| tag(&e.to_string()))?.statistic;

        // a non-projection T with the same row space, and its projection
        let c = h.basis().expect("nondegenerate").clone();
        let k = Matrix::from_fn(h.df, h.df, |r, s| (if r == s { 3.0 } else { 0.0 }) + normal(&mut rng));
        let t1 = k.matmul(&c).map_err(|e| e.to_string())?;
        let (g, _) = pseudo_inverse(&t1.matmul(&t1.transpose()).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let m = t1.transpose().matmul(&g).and_then(|x| x.matmul(&t1)).map_err(|e| e.to_string())?;
        ensure(m.max_abs_diff(&h.t) < 1e-8, || tag("projection of T differs from the built matrix"))?;
        let q1 = wald_statistic(&est, &t1).map_err(|e| e.to_string())?.statistic;
        let qm = wald_statistic(&est, &m).map_err(|e| e.to_string())?.statistic;
        ensure(close(q, q1, 1e-8) && close(q, qm, 1e-8), || tag(&format!("projection: {q} vs {q1} vs {qm}")))?;
        let qk = WaldKernel::new(&h).and_then(|k| k.statistic(&est)).map_err(|e| e.to_string())?;
        ensure(close(q, qk, 1e-8), || tag(&format!("reduced kernel {qk} vs {q}")))?;

        // location: arbitrary shifts for effects involving a between factor,
        // constant shifts otherwise
        let has_between = spec.effect.iter().any(|e| layout.between().any(|f| &f.name == e));
        let p = layout.p();
        let shift: Vec<f64> = if has_between {
            (0..p).map(|_| rng.random_range(-50.0..50.0)).collect()
        } else {
            vec![rng.random_range(-50.0..50.0); p]
        };
        let shifted = shift_dataset(&data, &shift);
        let ql = wald_statistic(&estimate_moments(&shifted).map_err(|e| e.to_string())?, &h.t)
            .map_err(|e| e.to_string())?
            .statistic;
        ensure(close(q, ql, 1e-8), || tag(&format!("location: {q} vs {ql}")))?;

        let s = rng.random_range(0.01..100.0);
        let scaled = data.map_values(|v| s * v).map_err(|e| e.to_string())?;
        let qs = wald_statistic(&estimate_moments(&scaled).map_err(|e| e.to_string())?, &h.t)
            .map_err(|e| e.to_string())?
            .statistic;
        ensure(close(q, qs, 1e-8), || tag(&format!("scale {s}: {q} vs {qs}")))?;
        counts[usize::from(spec.analysis == Analysis::Marginal)] += 1;
    }
    Ok(format!(
        "200 random designs ({} multivariate, {} marginal): projection, location and scale invariance hold",
        counts[0], counts[1]
    ))
}

fn shift_dataset(data: &GroupedDataset, shift: &[f64]) -> GroupedDataset {
    let groups: Vec<Vec<Vec<f64>>> = data
        .groups()
        .iter()
        .map(|g| {
            (0..g.n())
                .map(|r| g.data.row(r).iter().zip(shift).map(|(x, c)| x + c).collect())
                .collect()
        })
        .collect();
    GroupedDataset::from_rows(&groups).expect("same shape")
}

// 7. asymptotic calibration

fn ks_distance(mut sample: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let lay = layout(&[("g", &["a", "b", "c"])], &[], Some(2));
    let spec = HypothesisSpec::new(&["g"], Analysis::Multivariate);
    let h = build_hypothesis(&lay, &spec).map_err(|e| e.to_string())?;
    ensure(h.df == 4, || format!("df {}", h.df))?;
    let scenario = SimulationScenario {
        name: "calibration".into(),
        layout: lay.clone(),
        cell_sizes: vec![200; 3],
        covariances: vec![Matrix::identity(2); 3],
        dist: ErrorDistribution::Normal,
        effects: vec![spec],
        methods: vec![Method::Chi2, Method::Pbs],
        nsim: 2000,
        replicates: 999,
        alpha: 0.05,
        seed: 7,
    };
    let roots: Vec<Matrix> = scenario.covariances.iter().map(|s| sym_sqrt(s).expect("identity")).collect();
    let mut qs = Vec::with_capacity(scenario.nsim);
    let mut ps = Vec::with_capacity(scenario.nsim);
    for r in 0..scenario.nsim {
        let data = scenario.generate(&roots, 7_000 + r as u64).map_err(|e| e.to_string())?;
        let settings = BootstrapSettings::new(scenario.replicates, 70_000 + r as u64, 0.05);
        let res = test_hypotheses(&data, &[&h], &scenario.methods, &settings).map_err(|e| e.to_string())?;
        qs.push(res[0].statistic);
        ps.push(res[0].p_pbs.expect("pbs requested"));
    }
    // chi-square with 4 degrees of freedom in closed form
    let ks_q = ks_distance(qs, |x| 1.0 - (-x / 2.0).exp() * (1.0 + x / 2.0));
    let ks_p = ks_distance(ps, |u| u.clamp(0.0, 1.0));
    ensure(ks_q < 0.04 && ks_p < 0.04, || format!("KS(Q, chi2_4) = {ks_q:.4}, KS(p_PBS, U) = {ks_p:.4}"))?;
    Ok(format!(
        "KS(Q, chi2_4) = {ks_q:.4}, KS(p_PBS, U) = {ks_p:.4} ({:.0} s)",
        start.elapsed().as_secs_f64()
    ))
}

// 8. closed testing

/// Equivalence relation generated by `subsets`, as a k × k bit matrix.
fn relation(k: usize, subsets: &[&[usize]]) -> u64 {
    let mut r = vec![vec![false; k]; k];
    for (i, row) in r.iter_mut().enumerate() {
        row[i] = true;
    }
    for s in subsets {
        for &a in s.iter() {
            for &b in s.iter() {
                r[a][b] = true;
            }
        }
    }
    for m in 0..k {
        for i in 0..k {
            for j in 0..k {
                if r[i][m] && r[m][j] {
                    r[i][j] = true;
                }
            }
        }
    }
    let mut bits = 0u64;
    for i in 0..k {
        for j in 0..k {
            if r[i][j] {
                bits |= 1 << (i * k + j);
            }
        }
    }
    bits
}

fn partition_relation(k: usize, p: &Partition) -> u64 {
    let blocks: Vec<&[usize]> = p.blocks().iter().map(Vec::as_slice).collect();
    relation(k, &blocks)
}

/// Brute-force closure: for each elementary hypothesis, the list of
/// partition indices of every intersection containing it.
struct BruteForce {
    implying: Vec<Vec<usize>>,
}

impl BruteForce {
    fn new(plan: &ClosurePlan) -> Result<Self, String> {
        let family = plan.family();
        let k = family.groups().len();
        let m = family.elementary().len();
        let rels: Vec<u64> = plan.partitions().iter().map(|p| partition_relation(k, p)).collect();
        let mut implying = vec![Vec::new(); m];
        for mask in 1usize..(1 << m) {
            let members: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
            let subsets: Vec<&[usize]> = members.iter().map(|&i| family.elementary()[i].as_slice()).collect();
            let rel = relation(k, &subsets);
            let id = rels
                .iter()
                .position(|&r| r == rel)
                .ok_or_else(|| format!("intersection {members:?} has no matching partition"))?;
            for &i in &members {
                implying[i].push(id);
            }
        }
        // repeated partitions contribute the same p-value to the max
        for ids in &mut implying {
            ids.sort_unstable();
            ids.dedup();
        }
        Ok(Self { implying })
    }

    fn adjusted(&self, p: &[f64]) -> Vec<f64> {
        self.implying
            .iter()
            .map(|ids| ids.iter().map(|&j| p[j]).fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }

    fn rejected(&self, p: &[f64], alpha: f64) -> Vec<bool> {
        self.implying.iter().map(|ids| ids.iter().all(|&j| p[j] <= alpha)).collect()
    }
}

fn group_names(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("G{}", i + 1)).collect()
}

/// All families of subsets (size >= 2) of `k` groups, or a selection when
/// there are too many.
fn families(k: usize) -> Vec<Vec<Vec<usize>>> {
    let subsets: Vec<Vec<usize>> = (1usize..(1 << k))
        .map(|m| (0..k).filter(|i| m >> i & 1 == 1).collect::<Vec<_>>())
        .filter(|s| s.len() >= 2)
        .collect();
    if k <= 3 {
        return (1usize..(1 << subsets.len()))
            .map(|m| (0..subsets.len()).filter(|i| m >> i & 1 == 1).map(|i| subsets[i].clone()).collect())
            .collect();
    }
    let pairs: Vec<Vec<usize>> = subsets.iter().filter(|s| s.len() == 2).cloned().collect();
    vec![
        pairs,
        subsets.clone(),
        vec![vec![0, 1], vec![0, 2], vec![0, 3]],
        vec![vec![0, 1], vec![1, 2], vec![2, 3]],
        vec![vec![0, 1], vec![2, 3], vec![0, 1, 2, 3]],
        vec![vec![0, 1, 2], vec![1, 2, 3], vec![0, 3]],
    ]
}

/// Calls `f` on every point of `values^n`.
fn for_each_grid_point(values: &[f64], n: usize, mut f: impl FnMut(&[f64]) -> Result<(), String>) -> Result<u64, String> {
    let mut idx = vec![0usize; n];
    let mut point: Vec<f64> = vec![values[0]; n];
    let mut count = 0u64;
    loop {
        f(&point)?;
        count += 1;
        let mut pos = 0;
        loop {
            if pos == n {
                return Ok(count);
            }
            idx[pos] += 1;
            if idx[pos] < values.len() {
                point[pos] = values[idx[pos]];
                break;
            }
            idx[pos] = 0;
            point[pos] = values[0];
            pos += 1;
        }
    }
}

fn check_point(plan: &ClosurePlan, brute: &BruteForce, p: &[f64], alpha: f64) -> Result<(), String> {
    let got = plan.adjusted_p_values(p).map_err(|e| e.to_string())?;
    let want = brute.adjusted(p);
    let rejected = brute.rejected(p, alpha);
    for i in 0..got.len() {
        if got[i] != want[i] || (got[i] <= alpha) != rejected[i] {
            return Err(format!(
                "family {:?}, p {p:?}: elementary {i} adjusted {} vs brute force {}",
                plan.family().elementary(),
                got[i],
                want[i]
            ));
        }
    }
    Ok(())
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let alpha = 0.05;
    let fine: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
    let mut points = 0u64;
    let mut n_families = 0;

    // two and three groups: every family, exhaustive 0.01 grid
    for k in 2..=3 {
        for fam in families(k) {
            let family = HypothesisFamily::new(group_names(k), fam, alpha).map_err(|e| e.to_string())?;
            let plan = ClosurePlan::new(family);
            let brute = BruteForce::new(&plan)?;
            points += for_each_grid_point(&fine, plan.partitions().len(), |p| check_point(&plan, &brute, p, alpha))?;
            n_families += 1;
        }
    }

    // three-group shortcut: H_ij is rejected iff both its own and the
    // global p-value are at most alpha
    let plan = ClosurePlan::new(HypothesisFamily::pairwise(group_names(3), alpha).map_err(|e| e.to_string())?);
    let global = plan
        .partitions()
        .iter()
        .position(|p| p.blocks().len() == 1 && p.blocks()[0].len() == 3)
        .ok_or("no global intersection")?;
    let own: Vec<usize> = plan
        .family()
        .elementary()
        .iter()
        .map(|e| plan.partitions().iter().position(|p| p.blocks() == [e.clone()]).expect("elementary"))
        .collect();
    for_each_grid_point(&fine, plan.partitions().len(), |p| {
        let adjusted = plan.adjusted_p_values(p).map_err(|e| e.to_string())?;
        for (i, &j) in own.iter().enumerate() {
            let shortcut = p[j] <= alpha && p[global] <= alpha;
            if (adjusted[i] <= alpha) != shortcut || adjusted[i] != p[j].max(p[global]) {
                return Err(format!("shortcut disagrees at {p:?}"));
            }
        }
        Ok(())
    })?;

    // four groups: decisions depend only on which p-values are <= alpha, so
    // a grid straddling alpha is exhaustive for them; random 0.01 grid
    // points check the adjusted p-values
    let edge = [alpha - 0.01, alpha, alpha + 0.01];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for fam in families(4) {
        let family = HypothesisFamily::new(group_names(4), fam, alpha).map_err(|e| e.to_string())?;
        let plan = ClosurePlan::new(family.clone());
        let brute = BruteForce::new(&plan)?;
        let n = plan.partitions().len();
        points += for_each_grid_point(&edge, n, |p| check_point(&plan, &brute, p, alpha))?;
        for _ in 0..100_000 {
            let p: Vec<f64> = (0..n).map(|_| rng.random_range(0..=100) as f64 / 100.0).collect();
            check_point(&plan, &brute, &p, alpha)?;
            points += 1;
        }
        // the public entry point agrees with the plan
        for _ in 0..20 {
            let p: Vec<f64> = (0..n).map(|_| rng.random_range(0..=100) as f64 / 100.0).collect();
            let parts = plan.partitions().to_vec();
            let decision = closure(family.clone(), |part| Ok(p[parts.iter().position(|q| q == part).expect("known")]))
                .map_err(|e| e.to_string())?;
            let want = brute.adjusted(&p);
            for (e, w) in decision.elementary.iter().zip(&want) {
                ensure(e.adjusted_p == *w && e.rejected == (*w <= alpha), || format!("closure() at {p:?}"))?;
            }
        }
        n_families += 1;
    }
    Ok(format!(
        "{n_families} families, {points} p-value configurations agree with brute force; 3-group shortcut exact ({:.0} s)",
        start.elapsed().as_secs_f64()
    ))
}

// 9. determinism across worker counts

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = write_cohort(dir.path(), 9);
    let mv = write_file(
        dir.path(),
        "mv.toml",
        &cohort_config(&[SEX, DIAGNOSIS], Responses::Eeg, "bootstrap = 199\nseed = 9"),
    );
    let marg = write_file(
        dir.path(),
        "marg.toml",
        &cohort_config(&[SEX, DIAGNOSIS], Responses::EegFactorial, "bootstrap = 199\nseed = 9"),
    );
    let (data, mv, marg) = (data.to_str().unwrap(), mv.to_str().unwrap(), marg.to_str().unwrap());
    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("analyze multivariate", vec!["analyze", "--data", data, "--config", mv, "--format", "json"]),
        ("analyze marginal", vec!["analyze", "--data", data, "--config", marg]),
        ("pairwise", vec!["pairwise", "--data", data, "--config", mv, "--factor", "diagnosis", "--B", "99"]),
        (
            "simulate",
            vec!["simulate", "--scenario", "two-way", "--dist", "all", "--nsim", "12", "--B", "49", "--format", "json"],
        ),
        (
            "simulate three-way",
            vec!["simulate", "--scenario", "three-way", "--dist", "laplace", "--nsim", "8", "--B", "29", "--format", "csv"],
        ),
    ];
    for (name, args) in &runs {
        let mut outputs = Vec::new();
        for threads in ["1", "2", "8"] {
            let mut a = vec!["--threads", threads];
            a.extend(args.iter().copied());
            let (code, out, err) = run_cli(&a);
            ensure(code == 0, || format!("{name} with {threads} threads exited {code}: {err}"))?;
            outputs.push(out);
        }
        ensure(outputs[0] == outputs[1] && outputs[0] == outputs[2], || {
            format!("{name}: output differs between 1, 2 and 8 threads")
        })?;
    }
    Ok(format!("{} commands byte-identical for 1, 2 and 8 threads", runs.len()))
}

// 10. end-to-end cohort

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = write_cohort(dir.path(), 10);
    let text = std::fs::read_to_string(&data).map_err(|e| e.to_string())?;
    ensure(text.lines().count() == 161, || "cohort is not 160 rows".into())?;
    let extra = "bootstrap = 499\nseed = 10";
    let configs: Vec<(&str, String, Vec<usize>)> = vec![
        ("sex x age", cohort_config(&[SEX, AGE], Responses::Eeg, extra), vec![6, 6, 6]),
        ("sex x diagnosis", cohort_config(&[SEX, DIAGNOSIS], Responses::Eeg, extra), vec![6, 12, 12]),
        ("diagnosis x age", cohort_config(&[DIAGNOSIS, AGE], Responses::Eeg, extra), vec![12, 6, 12]),
        (
            "four-way marginal",
            cohort_config(&[SEX, DIAGNOSIS], Responses::EegFactorial, extra),
            vec![1, 2, 1, 2, 2, 1, 2, 2, 4, 2, 2, 4, 2, 4, 4],
        ),
    ];
    let mut rows = Vec::new();
    for (i, (name, cfg, dfs)) in configs.iter().enumerate() {
        let path = write_file(dir.path(), &format!("cfg{i}.toml"), cfg);
        let (code, out, err) = run_cli(&[
            "analyze",
            "--data",
            data.to_str().unwrap(),
            "--config",
            path.to_str().unwrap(),
            "--format",
            "json",
        ]);
        ensure(code == 0, || format!("{name}: exit {code}: {err}"))?;
        let doc = ResultDocument::from_json(&out).map_err(|e| format!("{name}: {e}"))?;
        let got: Vec<usize> = doc.results.iter().map(|r| r.df).collect();
        ensure(&got == dfs, || format!("{name}: df {got:?}, expected {dfs:?}"))?;
        for r in &doc.results {
            ensure(r.statistic.is_finite() && r.statistic >= 0.0, || format!("{name} {}: statistic", r.effect))?;
            for m in Method::ALL {
                let p = r.p_value(m).ok_or_else(|| format!("{name} {}: no {} p-value", r.effect, m.name()))?;
                ensure((0.0..=1.0).contains(&p), || format!("{name} {}: p {p}", r.effect))?;
            }
        }
        rows.push(doc.results.len());
    }
    let multivariate: usize = rows[..3].iter().sum();
    ensure(multivariate == 9 && rows[3] == 15, || format!("row counts {rows:?}"))?;
    Ok(format!("160-row cohort: {multivariate} rows from three two-way analyses, {} from the four-way marginal", rows[3]))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "chi-square calibration", criterion_1),
        (2, "degrees of freedom", criterion_2),
        (3, "type-I error, two-way", criterion_3),
        (4, "type-I error, three-way", criterion_4),
        (5, "closed-form oracles", criterion_5),
        (6, "invariances", criterion_6),
        (7, "asymptotic calibration", criterion_7),
        (8, "closed testing", criterion_8),
        (9, "thread determinism", criterion_9),
        (10, "end-to-end cohort", criterion_10),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {n} ({name}): PASS: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
