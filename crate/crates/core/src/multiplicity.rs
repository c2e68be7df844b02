//! Closed testing over families of group-equality hypotheses.
//!
//! An elementary hypothesis states that the means of a subset of groups
//! coincide. Intersecting several of them links their subsets, so every
//! member of the closure is a partition of the groups into blocks of equal
//! means (the connected components of the union of the subsets). Distinct
//! intersections that imply the same partition are the same hypothesis and
//! are tested once.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{equality_hypothesis, Analysis, Factor, FactorialLayout, HypothesisSpec, Role};
use crate::distributions::derive_seed;
use crate::error::{Error, Result};
use crate::inference::{
    test_hypotheses, BootstrapSettings, Group, GroupedDataset, Method, TestResult,
};
use crate::linalg::Matrix;

/// Largest number of groups accepted by [`closure`].
pub const MAX_GROUPS: usize = 6;

/// Largest family size; the closure enumerates all `2^m − 1` intersections.
pub const MAX_ELEMENTARY: usize = 20;

/// Groups split into blocks whose means are declared equal. Only blocks with
/// at least two groups are stored; each block is sorted and the blocks are
/// ordered by their first element.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    /// Connected components of the union of `subsets` over `k` groups.
    pub fn from_subsets<'a>(k: usize, subsets: impl IntoIterator<Item = &'a [usize]>) -> Self {
        let mut parent: Vec<usize> = (0..k).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for s in subsets {
            for w in s.windows(2) {
                let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for g in 0..k {
            let r = find(&mut parent, g);
            by_root.entry(r).or_default().push(g);
        }
        let mut blocks: Vec<Vec<usize>> = by_root.into_values().filter(|b| b.len() > 1).collect();
        blocks.sort();
        Self { blocks }
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// Number of independent equality constraints (`Σ (|block| − 1)`).
    pub fn constraints(&self) -> usize {
        self.blocks.iter().map(|b| b.len() - 1).sum()
    }

    /// `true` when every group of `subset` lies in one block.
    pub fn implies(&self, subset: &[usize]) -> bool {
        match subset.first() {
            None => true,
            Some(first) => self
                .blocks
                .iter()
                .any(|b| b.contains(first) && subset.iter().all(|g| b.contains(g))),
        }
    }

    /// Human readable form such as `AD=MCI=SCC` or `A=B, C=D`.
    pub fn label(&self, names: &[String]) -> String {
        self.blocks
            .iter()
            .map(|b| b.iter().map(|&g| names[g].as_str()).collect::<Vec<_>>().join("="))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

/// A family of elementary equality hypotheses over named groups.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisFamily {
    groups: Vec<String>,
    elementary: Vec<Vec<usize>>,
    alpha: f64,
}

impl HypothesisFamily {
    pub fn new(groups: Vec<String>, elementary: Vec<Vec<usize>>, alpha: f64) -> Result<Self> {
        if groups.len() > MAX_GROUPS {
            return Err(Error::spec(format!(
                "closed testing supports at most {MAX_GROUPS} groups, got {}; the closure grows \
                 exponentially, so compare a subset of the levels instead",
                groups.len()
            )));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::spec(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if elementary.is_empty() {
            return Err(Error::spec("hypothesis family is empty"));
        }
        if elementary.len() > MAX_ELEMENTARY {
            return Err(Error::spec(format!(
                "closed testing supports at most {MAX_ELEMENTARY} elementary hypotheses, got {}",
                elementary.len()
            )));
        }
        let mut normalized: Vec<Vec<usize>> = Vec::with_capacity(elementary.len());
        for h in elementary {
            let mut h = h;
            h.sort_unstable();
            h.dedup();
            if h.len() < 2 {
                return Err(Error::spec("each elementary hypothesis must involve at least two groups"));
            }
            if let Some(&g) = h.iter().find(|&&g| g >= groups.len()) {
                return Err(Error::spec(format!("group index {g} out of range")));
            }
            if normalized.contains(&h) {
                return Err(Error::spec("elementary hypotheses must be distinct"));
            }
            normalized.push(h);
        }
        Ok(Self {
            groups,
            elementary: normalized,
            alpha,
        })
    }

    /// All pairwise comparisons `μ_a = μ_b`, `a < b`.
    pub fn pairwise(groups: Vec<String>, alpha: f64) -> Result<Self> {
        let k = groups.len();
        if k < 2 {
            return Err(Error::spec("pairwise comparisons need at least two groups"));
        }
        let pairs = (0..k)
            .flat_map(|a| (a + 1..k).map(move |b| vec![a, b]))
            .collect();
        Self::new(groups, pairs, alpha)
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn elementary(&self) -> &[Vec<usize>] {
        &self.elementary
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn elementary_label(&self, i: usize) -> String {
        self.elementary[i]
            .iter()
            .map(|&g| self.groups[g].as_str())
            .collect::<Vec<_>>()
            .join(" vs ")
    }
}

/// The distinct intersection hypotheses of a family and, for each elementary
/// hypothesis, the intersections that imply it.
#[derive(Clone, Debug)]
pub struct ClosurePlan {
    family: HypothesisFamily,
    partitions: Vec<Partition>,
    elementary_partition: Vec<usize>,
    implying: Vec<Vec<usize>>,
}

impl ClosurePlan {
    pub fn new(family: HypothesisFamily) -> Self {
        let k = family.groups.len();
        let m = family.elementary.len();
        let mut index: BTreeMap<Partition, usize> = BTreeMap::new();
        let mut implying: Vec<Vec<usize>> = vec![Vec::new(); m];
        // every nonempty subset of the family is an intersection
        for mask in 1u64..(1u64 << m) {
            let members = (0..m).filter(|&i| mask & (1 << i) != 0);
            let part = Partition::from_subsets(
                k,
                members.clone().map(|i| family.elementary[i].as_slice()),
            );
            let next = index.len();
            let id = *index.entry(part).or_insert(next);
            for i in members {
                implying[i].push(id);
            }
        }
        for v in &mut implying {
            v.sort_unstable();
            v.dedup();
        }
        let mut partitions = vec![Partition { blocks: Vec::new() }; index.len()];
        for (p, id) in index {
            partitions[id] = p;
        }
        let elementary_partition = family
            .elementary
            .iter()
            .map(|h| {
                let p = Partition::from_subsets(k, [h.as_slice()]);
                partitions.iter().position(|q| *q == p).expect("singleton intersection")
            })
            .collect();
        Self {
            family,
            partitions,
            elementary_partition,
            implying,
        }
    }

    pub fn family(&self) -> &HypothesisFamily {
        &self.family
    }

    /// Distinct intersection hypotheses, in first-encounter order.
    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    /// Adjusted p-value of every elementary hypothesis: the largest p-value
    /// over the intersections implying it. `p_values` holds one entry per
    /// [`partitions`](Self::partitions).
    pub fn adjusted_p_values(&self, p_values: &[f64]) -> Result<Vec<f64>> {
        if p_values.len() != self.partitions.len() {
            return Err(Error::dim(format!(
                "expected {} intersection p-values, got {}",
                self.partitions.len(),
                p_values.len()
            )));
        }
        Ok(self
            .implying
            .iter()
            .map(|ids| ids.iter().map(|&j| p_values[j]).fold(0.0_f64, f64::max))
            .collect())
    }

    /// Combines one p-value per entry of [`partitions`](Self::partitions)
    /// into decisions.
    pub fn decide(&self, p_values: &[f64]) -> Result<ClosureDecision> {
        let adjusted = self.adjusted_p_values(p_values)?;
        let alpha = self.family.alpha;
        let elementary = adjusted
            .into_iter()
            .enumerate()
            .map(|(i, adjusted)| {
                ElementaryDecision {
                    label: self.family.elementary_label(i),
                    groups: self.family.elementary[i].clone(),
                    raw_p: p_values[self.elementary_partition[i]],
                    adjusted_p: adjusted,
                    rejected: adjusted <= alpha,
                }
            })
            .collect();
        let intersections = self
            .partitions
            .iter()
            .zip(p_values)
            .map(|(p, &pv)| IntersectionRecord {
                label: p.label(&self.family.groups),
                partition: p.clone(),
                p_value: pv,
            })
            .collect();
        Ok(ClosureDecision {
            alpha,
            elementary,
            intersections,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementaryDecision {
    pub label: String,
    pub groups: Vec<usize>,
    pub raw_p: f64,
    /// Largest p-value over the intersections implying this hypothesis.
    pub adjusted_p: f64,
    pub rejected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntersectionRecord {
    pub label: String,
    pub partition: Partition,
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosureDecision {
    pub alpha: f64,
    pub elementary: Vec<ElementaryDecision>,
    pub intersections: Vec<IntersectionRecord>,
}

impl ClosureDecision {
    pub fn rejected(&self) -> Vec<&str> {
        self.elementary
            .iter()
            .filter(|e| e.rejected)
            .map(|e| e.label.as_str())
            .collect()
    }
}

/// Runs the closed testing procedure, calling `tester` once per distinct
/// intersection (concurrently).
pub fn closure<F>(family: HypothesisFamily, tester: F) -> Result<ClosureDecision>
where
    F: Fn(&Partition) -> Result<f64> + Sync,
{
    let plan = ClosurePlan::new(family);
    let names = plan.family.groups.clone();
    let p: Vec<f64> = plan
        .partitions
        .par_iter()
        .map(|part| {
            let pv = tester(part).map_err(|e| e.context(format!("intersection {}", part.label(&names))))?;
            if !(0.0..=1.0).contains(&pv) {
                return Err(Error::Domain(format!(
                    "intersection {}: p-value {pv} outside [0, 1]",
                    part.label(&names)
                )));
            }
            Ok(pv)
        })
        .collect::<Result<_>>()?;
    plan.decide(&p)
}

/// Stable 64-bit key of a partition, used to derive its bootstrap seed so
/// that results do not depend on the order intersections are visited.
pub fn partition_key(p: &Partition) -> u64 {
    // FNV-1a over the block structure
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in &p.blocks {
        for &g in b {
            h = (h ^ (g as u64 + 1)).wrapping_mul(0x0100_0000_01b3);
        }
        h = (h ^ 0xff).wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Pools the cells of `layout` by the levels of one between-subjects factor.
pub fn collapse_to_factor(
    data: &GroupedDataset,
    layout: &FactorialLayout,
    factor: &str,
) -> Result<(GroupedDataset, FactorialLayout)> {
    let f = layout
        .factor(factor)
        .ok_or_else(|| Error::spec(format!("unknown factor '{factor}'")))?;
    if f.role != Role::Between {
        return Err(Error::spec(format!(
            "pairwise comparisons need a between-subjects factor; '{factor}' is within-subjects"
        )));
    }
    let pos = layout.between().position(|g| g.name == factor).expect("between factor");
    let p = data.p();
    let mut pooled: Vec<Vec<f64>> = vec![Vec::new(); f.level_count()];
    for (i, g) in data.groups().iter().enumerate() {
        let level = &layout.cell_labels(i)[pos];
        let idx = f.level_index(level).expect("level of layout");
        pooled[idx].extend_from_slice(g.data.as_slice());
    }
    let groups = pooled
        .into_iter()
        .zip(&f.levels)
        .map(|(rows, label)| {
            let n = rows.len() / p;
            if n < 2 {
                return Err(Error::InsufficientData { cell: label.clone(), n });
            }
            Ok(Group::new(label.clone(), Matrix::new(n, p, rows)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let levels: Vec<&str> = f.levels.iter().map(String::as_str).collect();
    let mut factors = vec![Factor::between(f.name.clone(), &levels)];
    factors.extend(layout.within().cloned());
    let p_arg = (!layout.has_within_structure()).then_some(layout.p());
    Ok((GroupedDataset::new(groups)?, FactorialLayout::new(factors, p_arg)?))
}

/// Closed testing of all pairwise comparisons, one closure per method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseReport {
    pub factor: String,
    pub levels: Vec<String>,
    pub analysis: Analysis,
    pub alpha: f64,
    /// Every distinct intersection hypothesis with its test results.
    pub tests: Vec<IntersectionTest>,
    pub decisions: Vec<MethodDecision>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntersectionTest {
    pub label: String,
    pub partition: Partition,
    /// `true` for the elementary (pairwise) hypotheses.
    pub elementary: bool,
    pub result: TestResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodDecision {
    pub method: Method,
    pub decision: ClosureDecision,
}

/// Runs pairwise comparisons of the levels of `factor` with closed testing.
///
/// Cells are pooled over the other between-subjects factors. Each
/// intersection is tested once; its bootstrap seed is derived from
/// `settings.seed` and the partition.
pub fn pairwise_comparisons(
    data: &GroupedDataset,
    layout: &FactorialLayout,
    factor: &str,
    analysis: Analysis,
    methods: &[Method],
    settings: &BootstrapSettings,
) -> Result<PairwiseReport> {
    let f = layout
        .factor(factor)
        .ok_or_else(|| Error::spec(format!("unknown factor '{factor}'")))?;
    let family = HypothesisFamily::pairwise(f.levels.clone(), settings.alpha)?;
    let (pooled, one_way) = collapse_to_factor(data, layout, factor)?;
    let plan = ClosurePlan::new(family.clone());
    let k = f.level_count();
    let spec = HypothesisSpec::new(&[factor], analysis);
    let tests: Vec<IntersectionTest> = plan
        .partitions()
        .par_iter()
        .map(|part| {
            let label = part.label(&family.groups);
            let h = equality_hypothesis(k, part.blocks(), &one_way, spec.clone(), label.clone())?;
            let s = BootstrapSettings {
                seed: derive_seed(settings.seed, partition_key(part)),
                ..*settings
            };
            let result = test_hypotheses(&pooled, &[&h], methods, &s)
                .map_err(|e| e.context(format!("intersection {label}")))?
                .remove(0);
            Ok(IntersectionTest {
                label,
                partition: part.clone(),
                elementary: part.blocks().len() == 1 && part.blocks()[0].len() == 2,
                result,
            })
        })
        .collect::<Result<_>>()?;
    let decisions = methods
        .iter()
        .map(|&m| {
            let p: Vec<f64> = tests
                .iter()
                .map(|t| t.result.p_value(m).expect("method was run"))
                .collect();
            Ok(MethodDecision {
                method: m,
                decision: plan.decide(&p)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(PairwiseReport {
        factor: factor.to_string(),
        levels: f.levels.clone(),
        analysis,
        alpha: settings.alpha,
        tests,
        decisions,
    })
}
