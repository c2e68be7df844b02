//! Factorial layouts and projection hypothesis matrices.
//!
//! A [`FactorialLayout`] declares crossed factors. Between-subjects factors
//! split the sample into `d` independent cells; within-subjects factors
//! structure the `p` coordinates of each response vector. Cells and response
//! coordinates are both ordered lexicographically by declaration order, the
//! first declared factor varying slowest.
//!
//! For an effect (a set of factor names) the hypothesis matrix is the
//! Kronecker product, over the between factors and then the response
//! structure, of `P_n` for factors in the effect and `J_n / n` for the rest.
//! A multivariate effect ends in `I_p`; a marginal effect replaces `I_p` by
//! the blocks of the within factors (or by `J_p / p` when the responses carry
//! no within structure).

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{averaging_matrix, centering_matrix, kronecker, kronecker_chain, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Between,
    Within,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    pub name: String,
    pub role: Role,
    pub levels: Vec<String>,
}

impl Factor {
    pub fn new(name: impl Into<String>, role: Role, levels: &[&str]) -> Self {
        Self {
            name: name.into(),
            role,
            levels: levels.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn between(name: impl Into<String>, levels: &[&str]) -> Self {
        Self::new(name, Role::Between, levels)
    }

    pub fn within(name: impl Into<String>, levels: &[&str]) -> Self {
        Self::new(name, Role::Within, levels)
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn level_index(&self, label: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == label)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FactorialLayout {
    factors: Vec<Factor>,
    p: usize,
}

impl FactorialLayout {
    /// Validates a layout.
    ///
    /// `p` may be omitted when within factors are declared (it is then the
    /// product of their level counts); otherwise it is required.
    pub fn new(factors: Vec<Factor>, p: Option<usize>) -> Result<Self> {
        let mut names = HashSet::new();
        for f in &factors {
            if f.name.is_empty() || f.name.contains('*') {
                return Err(Error::spec(format!("invalid factor name '{}'", f.name)));
            }
            if !names.insert(f.name.as_str()) {
                return Err(Error::spec(format!("factor '{}' declared twice", f.name)));
            }
            if f.levels.is_empty() {
                return Err(Error::spec(format!("factor '{}' has no levels", f.name)));
            }
            let mut seen = HashSet::new();
            for l in &f.levels {
                if !seen.insert(l.as_str()) {
                    return Err(Error::spec(format!(
                        "level '{l}' appears twice in factor '{}'",
                        f.name
                    )));
                }
            }
        }
        let within_product: Option<usize> = factors
            .iter()
            .filter(|f| f.role == Role::Within)
            .map(Factor::level_count)
            .reduce(|a, b| a * b);
        let p = match (within_product, p) {
            (Some(w), Some(p)) if w != p => {
                return Err(Error::spec(format!(
                    "response dimension {p} does not match the {w} within-factor level combinations"
                )))
            }
            (Some(w), _) => w,
            (None, Some(p)) if p >= 1 => p,
            (None, _) => {
                return Err(Error::spec(
                    "response dimension p must be given when no within factors are declared",
                ))
            }
        };
        Ok(Self { factors, p })
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn between(&self) -> impl Iterator<Item = &Factor> {
        self.factors.iter().filter(|f| f.role == Role::Between)
    }

    pub fn within(&self) -> impl Iterator<Item = &Factor> {
        self.factors.iter().filter(|f| f.role == Role::Within)
    }

    pub fn factor(&self, name: &str) -> Option<&Factor> {
        self.factors.iter().find(|f| f.name == name)
    }

    /// Number of cells (product of between-factor level counts; 1 without
    /// between factors).
    pub fn d(&self) -> usize {
        self.between().map(Factor::level_count).product()
    }

    /// Response dimension.
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn has_within_structure(&self) -> bool {
        self.within().next().is_some()
    }

    /// 0-based lexicographic cell index for one level label per between factor.
    pub fn cell_index(&self, levels: &[&str]) -> Result<usize> {
        let between: Vec<&Factor> = self.between().collect();
        if levels.len() != between.len() {
            return Err(Error::spec(format!(
                "expected {} between-factor levels, got {}",
                between.len(),
                levels.len()
            )));
        }
        between.iter().zip(levels).try_fold(0, |idx, (f, &label)| {
            let k = f.level_index(label).ok_or_else(|| {
                Error::spec(format!("unknown level '{label}' for factor '{}'", f.name))
            })?;
            Ok(idx * f.level_count() + k)
        })
    }

    /// Level labels of a cell, inverse of [`cell_index`](Self::cell_index).
    pub fn cell_labels(&self, mut index: usize) -> Vec<String> {
        let between: Vec<&Factor> = self.between().collect();
        let mut out = vec![String::new(); between.len()];
        for (slot, f) in out.iter_mut().zip(&between).rev() {
            *slot = f.levels[index % f.level_count()].clone();
            index /= f.level_count();
        }
        out
    }

    /// Human-readable cell name such as `M/AD`.
    pub fn cell_name(&self, index: usize) -> String {
        let labels = self.cell_labels(index);
        if labels.is_empty() {
            "all".to_string()
        } else {
            labels.join("/")
        }
    }

    /// Lexicographic response index for one level label per within factor.
    pub fn response_index(&self, levels: &[&str]) -> Result<usize> {
        let within: Vec<&Factor> = self.within().collect();
        if levels.len() != within.len() {
            return Err(Error::spec(format!(
                "expected {} within-factor levels, got {}",
                within.len(),
                levels.len()
            )));
        }
        within.iter().zip(levels).try_fold(0, |idx, (f, &label)| {
            let k = f.level_index(label).ok_or_else(|| {
                Error::spec(format!("unknown level '{label}' for factor '{}'", f.name))
            })?;
            Ok(idx * f.level_count() + k)
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Analysis {
    /// Every response coordinate is constrained (`… ⊗ I_p`).
    #[default]
    Multivariate,
    /// Responses are averaged or contrasted through the within factors.
    Marginal,
}

impl fmt::Display for Analysis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Analysis::Multivariate => "multivariate",
            Analysis::Marginal => "marginal",
        })
    }
}

impl FromStr for Analysis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multivariate" => Ok(Analysis::Multivariate),
            "marginal" => Ok(Analysis::Marginal),
            other => Err(Error::spec(format!(
                "unknown analysis '{other}' (expected multivariate or marginal)"
            ))),
        }
    }
}

/// An effect to test: main effect (one factor) or interaction (several).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisSpec {
    pub effect: Vec<String>,
    pub analysis: Analysis,
}

impl HypothesisSpec {
    pub fn new<S: AsRef<str>>(effect: &[S], analysis: Analysis) -> Self {
        Self {
            effect: effect.iter().map(|s| s.as_ref().to_string()).collect(),
            analysis,
        }
    }

    /// Parses `a*b*c` notation.
    pub fn parse(effect: &str, analysis: Analysis) -> Result<Self> {
        let names: Vec<&str> = effect.split('*').map(str::trim).collect();
        if names.iter().any(|n| n.is_empty()) {
            return Err(Error::spec(format!("malformed effect '{effect}'")));
        }
        Ok(Self::new(&names, analysis))
    }

    pub fn label(&self) -> String {
        self.effect.join("*")
    }

    fn contains(&self, name: &str) -> bool {
        self.effect.iter().any(|e| e == name)
    }
}

/// Realized hypothesis matrix `T` with its rank and an orthonormal basis
/// `C` of its row space (`C'C = T`).
#[derive(Clone, Debug)]
pub struct HypothesisMatrix {
    pub spec: HypothesisSpec,
    pub label: String,
    pub t: Matrix,
    pub df: usize,
    basis: Option<Matrix>,
    // basis = between_basis ⊗ response_basis
    between_basis: Option<Matrix>,
    response_basis: Option<Matrix>,
    d: usize,
    p: usize,
}

impl HypothesisMatrix {
    /// `df × (d·p)` matrix with orthonormal rows spanning the row space of
    /// `T`; `None` for a rank-zero hypothesis.
    pub fn basis(&self) -> Option<&Matrix> {
        self.basis.as_ref()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn is_degenerate(&self) -> bool {
        self.df == 0
    }

    /// The two Kronecker factors of [`basis`](Self::basis): an orthonormal
    /// basis over the `d` cells and one over the `p` response coordinates.
    pub fn basis_factors(&self) -> Option<(&Matrix, &Matrix)> {
        Some((self.between_basis.as_ref()?, self.response_basis.as_ref()?))
    }

    fn from_blocks(
        spec: HypothesisSpec,
        label: String,
        between: (Vec<Matrix>, Vec<Option<Matrix>>),
        tail: (Vec<Matrix>, Vec<Option<Matrix>>),
        d: usize,
        p: usize,
    ) -> Result<Self> {
        let chain = |bases: Vec<Option<Matrix>>| -> Result<Option<Matrix>> {
            match bases.into_iter().collect::<Option<Vec<_>>>() {
                Some(b) if b.is_empty() => Ok(Some(Matrix::identity(1))),
                Some(b) => kronecker_chain(&b).map(Some),
                None => Ok(None),
            }
        };
        let mut projections = between.0;
        projections.extend(tail.0);
        let t = kronecker_chain(&projections)?;
        let between_basis = chain(between.1)?;
        let response_basis = chain(tail.1)?;
        let basis = match (&between_basis, &response_basis) {
            (Some(b), Some(r)) => Some(kronecker(b, r)?),
            _ => None,
        };
        let df = basis.as_ref().map_or(0, Matrix::rows);
        Ok(Self {
            spec,
            label,
            t,
            df,
            basis,
            between_basis,
            response_basis,
            d,
            p,
        })
    }
}

/// Orthonormal rows spanning the row space of `P_n` (Helmert contrasts).
fn helmert_basis(n: usize) -> Option<Matrix> {
    if n < 2 {
        return None;
    }
    Some(Matrix::from_fn(n - 1, n, |r, j| {
        let k = r + 1;
        let norm = ((k * (k + 1)) as f64).sqrt();
        match j.cmp(&k) {
            std::cmp::Ordering::Less => 1.0 / norm,
            std::cmp::Ordering::Equal => -(k as f64) / norm,
            std::cmp::Ordering::Greater => 0.0,
        }
    }))
}

fn mean_basis(n: usize) -> Matrix {
    Matrix::from_fn(1, n, |_, _| 1.0 / (n as f64).sqrt())
}

fn factor_block(n: usize, in_effect: bool) -> Result<(Matrix, Option<Matrix>)> {
    if in_effect {
        Ok((centering_matrix(n)?, helmert_basis(n)))
    } else {
        Ok((averaging_matrix(n)?, Some(mean_basis(n))))
    }
}

fn response_tail(
    layout: &FactorialLayout,
    spec_contains: impl Fn(&str) -> bool,
    analysis: Analysis,
) -> Result<(Vec<Matrix>, Vec<Option<Matrix>>)> {
    let p = layout.p();
    let mut projections = Vec::new();
    let mut bases = Vec::new();
    match analysis {
        Analysis::Multivariate => {
            projections.push(Matrix::identity(p));
            bases.push(Some(Matrix::identity(p)));
        }
        Analysis::Marginal if layout.has_within_structure() => {
            for f in layout.within() {
                let (t, b) = factor_block(f.level_count(), spec_contains(&f.name))?;
                projections.push(t);
                bases.push(b);
            }
        }
        Analysis::Marginal => {
            projections.push(averaging_matrix(p)?);
            bases.push(Some(mean_basis(p)));
        }
    }
    Ok((projections, bases))
}

/// Builds the projection hypothesis matrix for an effect.
pub fn build_hypothesis(layout: &FactorialLayout, spec: &HypothesisSpec) -> Result<HypothesisMatrix> {
    if spec.effect.is_empty() {
        return Err(Error::spec("effect must name at least one factor"));
    }
    let mut seen = HashSet::new();
    for name in &spec.effect {
        if !seen.insert(name.as_str()) {
            return Err(Error::spec(format!("factor '{name}' repeated in effect")));
        }
        let f = layout
            .factor(name)
            .ok_or_else(|| Error::spec(format!("unknown factor '{name}' in effect '{}'", spec.label())))?;
        if spec.analysis == Analysis::Multivariate && f.role == Role::Within {
            return Err(Error::spec(format!(
                "effect '{}' uses within-subjects factor '{name}'; multivariate hypotheses may only \
                 involve between-subjects factors (use a marginal analysis)",
                spec.label()
            )));
        }
    }

    let mut projections = Vec::new();
    let mut bases = Vec::new();
    for f in layout.between() {
        let (t, b) = factor_block(f.level_count(), spec.contains(&f.name))?;
        projections.push(t);
        bases.push(b);
    }
    let tail = response_tail(layout, |n| spec.contains(n), spec.analysis)?;
    HypothesisMatrix::from_blocks(
        spec.clone(),
        spec.label(),
        (projections, bases),
        tail,
        layout.d(),
        layout.p(),
    )
}

/// Hypothesis that, within each block, the means of the listed cells of a
/// one-way layout with `levels` cells coincide. Blocks must be disjoint and
/// reference valid cells.
pub fn equality_hypothesis(
    levels: usize,
    blocks: &[Vec<usize>],
    layout: &FactorialLayout,
    spec: HypothesisSpec,
    label: String,
) -> Result<HypothesisMatrix> {
    let mut used = vec![false; levels];
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for block in blocks {
        for &g in block {
            if g >= levels || used[g] {
                return Err(Error::spec(format!("invalid or overlapping group {g} in equality blocks")));
            }
            used[g] = true;
        }
        if let Some(h) = helmert_basis(block.len()) {
            for r in 0..h.rows() {
                let mut row = vec![0.0; levels];
                for (k, &g) in block.iter().enumerate() {
                    row[g] = h[(r, k)];
                }
                rows.push(row);
            }
        }
    }
    let between_basis = if rows.is_empty() {
        None
    } else {
        Some(Matrix::new(rows.len(), levels, rows.concat())?)
    };
    let between_t = match &between_basis {
        Some(b) => b.transpose().matmul(b)?,
        None => Matrix::zeros(levels, levels),
    };
    let tail = response_tail(layout, |n| spec.contains(n), spec.analysis)?;
    HypothesisMatrix::from_blocks(
        spec,
        label,
        (vec![between_t], vec![between_basis]),
        tail,
        levels,
        layout.p(),
    )
}

/// All main effects and interactions available to an analysis, ordered by
/// interaction order and then by factor declaration order.
pub fn all_effects(layout: &FactorialLayout, analysis: Analysis) -> Vec<HypothesisSpec> {
    let eligible: Vec<&str> = layout
        .factors()
        .iter()
        .filter(|f| analysis == Analysis::Marginal || f.role == Role::Between)
        .map(|f| f.name.as_str())
        .collect();
    let k = eligible.len();
    let mut subsets: Vec<Vec<usize>> = (1u32..(1 << k))
        .map(|mask| (0..k).filter(|&i| mask & (1 << i) != 0).collect())
        .collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    subsets
        .into_iter()
        .map(|s| {
            let names: Vec<&str> = s.iter().map(|&i| eligible[i]).collect();
            HypothesisSpec::new(&names, analysis)
        })
        .collect()
}
