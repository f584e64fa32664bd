//! PLS path-model estimation.
//!
//! Composites are weighted sums of standardized indicators. The fixed point
//! alternates three steps until the outer weights stop moving:
//!
//! 1. outer approximation: `score_j = standardize(X_j · w_j)`
//! 2. inner approximation (centroid): `z_j = standardize(Σ_k sgn(r_jk) · score_k)`
//!    over the structural neighbours `k` of `j`
//! 3. weight update: `w_j ∝ corr(X_j, z_j)` (correlation mode) or the
//!    regression coefficients of `z_j` on `X_j` (regression mode), rescaled
//!    to unit Euclidean norm.
//!
//! Hierarchies are estimated in two stages. Stage one estimates every
//! first-order construct. Second-order constructs are left out of that pass;
//! each one instead links the first-order constructs beneath it as mutual
//! neighbours.
//! Stage two estimates each second-order construct with the stage-one
//! scores of its first-order sources (plus any external indicators) as its
//! block, holding the first-order scores fixed.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Level, MeasurementMode, Taxonomy, ValidatedDataset};
use crate::numerics::{self, ols, pearson};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorConfig {
    /// Stop once no weight moves by this much between iterations.
    pub epsilon: f64,
    pub max_iter: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-7,
            max_iter: 300,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outer weights, one unit-norm vector per construct.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    pub construct_ids: Vec<String>,
    pub weights: Vec<Vec<f64>>,
}

impl WeightSet {
    pub fn get(&self, construct: &str) -> Option<&[f64]> {
        self.construct_ids
            .iter()
            .position(|c| c == construct)
            .map(|k| self.weights[k].as_slice())
    }

    /// Largest absolute elementwise difference. Shapes must agree.
    pub fn max_abs_change(&self, other: &WeightSet) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

/// Standardized composite scores, one column per construct.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentScores {
    pub construct_ids: Vec<String>,
    pub values: DMatrix<f64>,
}

impl LatentScores {
    pub fn column(&self, k: usize) -> &[f64] {
        let n = self.values.nrows();
        &self.values.as_slice()[k * n..(k + 1) * n]
    }

    pub fn get(&self, construct: &str) -> Option<&[f64]> {
        self.construct_ids
            .iter()
            .position(|c| c == construct)
            .map(|k| self.column(k))
    }
}

/// The observed columns measuring each construct in one estimation pass.
#[derive(Debug, Clone)]
pub struct Blocks {
    pub construct_ids: Vec<String>,
    pub indicator_ids: Vec<Vec<String>>,
    pub modes: Vec<MeasurementMode>,
    pub columns: Vec<DMatrix<f64>>,
    /// Fixed blocks keep their initial weights.
    pub fixed: Vec<bool>,
}

impl Blocks {
    /// Stage-one blocks: every first-order construct with its task and
    /// external indicators.
    pub fn first_order(data: &ValidatedDataset) -> Result<Self> {
        let t = data.taxonomy();
        let mut b = Blocks::empty();
        for (k, c) in t.constructs().iter().enumerate() {
            if c.level != Level::First {
                continue;
            }
            let ids = t.observed_block(k);
            b.columns.push(data.block(&ids)?);
            b.construct_ids.push(c.id.clone());
            b.indicator_ids.push(ids);
            b.modes.push(c.mode);
            b.fixed.push(false);
        }
        Ok(b)
    }

    fn empty() -> Self {
        Blocks {
            construct_ids: Vec::new(),
            indicator_ids: Vec::new(),
            modes: Vec::new(),
            columns: Vec::new(),
            fixed: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.construct_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.construct_ids.is_empty()
    }
}

/// Per-indicator result of the measurement model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterEstimate {
    pub construct: String,
    pub indicator: String,
    pub weight: f64,
    pub loading: f64,
    /// Observed column declared as an external indicator.
    pub external: bool,
    /// The "indicator" is a first-order construct score (second-order block).
    pub construct_score: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathEstimate {
    pub source: String,
    pub target: String,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub model_ids: Vec<String>,
    pub weights: WeightSet,
    pub outer: Vec<OuterEstimate>,
    pub scores: LatentScores,
    pub paths: Vec<PathEstimate>,
    /// (construct, R²) for every construct with at least one predecessor.
    pub r_squared: Vec<(String, f64)>,
    pub iterations: usize,
    pub converged: bool,
}

impl FittedModel {
    pub fn loading(&self, indicator: &str) -> Option<f64> {
        self.outer.iter().find(|o| o.indicator == indicator).map(|o| o.loading)
    }

    /// Outer estimates of one construct, block order.
    pub fn block(&self, construct: &str) -> Vec<&OuterEstimate> {
        self.outer.iter().filter(|o| o.construct == construct).collect()
    }

    pub fn path(&self, source: &str, target: &str) -> Option<f64> {
        self.paths
            .iter()
            .find(|p| p.source == source && p.target == target)
            .map(|p| p.coefficient)
    }

    pub fn r_squared_of(&self, construct: &str) -> Option<f64> {
        self.r_squared.iter().find(|(c, _)| c == construct).map(|(_, r)| *r)
    }
}

/// Equal unit-norm starting weights for every construct in the taxonomy.
pub fn initialize_weights(taxonomy: &Taxonomy) -> WeightSet {
    let weights = taxonomy
        .constructs()
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let p = match c.level {
                Level::First => taxonomy.observed_block(k).len(),
                Level::Second => {
                    taxonomy.first_order_sources(k).len() + taxonomy.externals_of(k).len()
                }
            };
            vec![1.0 / (p as f64).sqrt(); p]
        })
        .collect();
    WeightSet {
        construct_ids: taxonomy.constructs().iter().map(|c| c.id.clone()).collect(),
        weights,
    }
}

fn uniform_weights(blocks: &Blocks) -> WeightSet {
    WeightSet {
        construct_ids: blocks.construct_ids.clone(),
        weights: blocks
            .columns
            .iter()
            .map(|m| vec![1.0 / (m.ncols() as f64).sqrt(); m.ncols()])
            .collect(),
    }
}

/// Standardized weighted composites `X_j · w_j`.
pub fn latent_scores(weights: &WeightSet, blocks: &Blocks) -> Result<LatentScores> {
    let n = blocks.columns.first().map_or(0, |m| m.nrows());
    let mut values = DMatrix::zeros(n, blocks.len());
    for k in 0..blocks.len() {
        let w = &weights.weights[k];
        let x = &blocks.columns[k];
        if w.len() != x.ncols() {
            return Err(Error::LengthMismatch(w.len(), x.ncols()));
        }
        let raw: Vec<f64> = (0..n)
            .map(|i| (0..x.ncols()).map(|c| x[(i, c)] * w[c]).sum())
            .collect();
        let z = numerics::standardize(&raw)
            .ok_or_else(|| Error::DegenerateConstruct(blocks.construct_ids[k].clone()))?;
        values.column_mut(k).copy_from_slice(&z);
    }
    Ok(LatentScores {
        construct_ids: blocks.construct_ids.clone(),
        values,
    })
}

/// Neighbour lists for the constructs present in `present` (taxonomy
/// indices, in score-column order). Constructs absent from the pass that
/// are adjacent to two present constructs link those two.
fn neighbour_sets(taxonomy: &Taxonomy, present: &[usize]) -> Vec<Vec<usize>> {
    let pos = |k: usize| present.iter().position(|&p| p == k);
    present
        .iter()
        .map(|&j| {
            let mut out = Vec::new();
            for k in taxonomy.neighbors(j) {
                match pos(k) {
                    Some(c) => out.push(c),
                    None => {
                        for s in taxonomy.neighbors(k) {
                            if s != j {
                                if let Some(c) = pos(s) {
                                    out.push(c);
                                }
                            }
                        }
                    }
                }
            }
            out.sort_unstable();
            out.dedup();
            out
        })
        .collect()
}

/// Centroid inner proxies: for each construct, the standardized sum of its
/// neighbours' scores, each signed by its correlation with the construct.
pub fn inner_proxies(scores: &LatentScores, taxonomy: &Taxonomy) -> Result<DMatrix<f64>> {
    let present = scores
        .construct_ids
        .iter()
        .map(|id| {
            taxonomy
                .construct_index(id)
                .ok_or_else(|| Error::UnknownConstruct(id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let neighbours = neighbour_sets(taxonomy, &present);
    let n = scores.values.nrows();
    let mut z = DMatrix::zeros(n, present.len());
    for (j, neigh) in neighbours.iter().enumerate() {
        let id = &scores.construct_ids[j];
        if neigh.is_empty() {
            return Err(Error::StructureError(id.clone()));
        }
        let own = scores.column(j);
        let mut acc = vec![0.0; n];
        for &k in neigh {
            let other = scores.column(k);
            let sign = if pearson(own, other)? < 0.0 { -1.0 } else { 1.0 };
            for (a, v) in acc.iter_mut().zip(other) {
                *a += sign * v;
            }
        }
        let s = numerics::standardize(&acc).ok_or_else(|| Error::DegenerateConstruct(id.clone()))?;
        z.column_mut(j).copy_from_slice(&s);
    }
    Ok(z)
}

fn normalize(mut w: Vec<f64>, construct: &str) -> Result<Vec<f64>> {
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 1e-12) || !norm.is_finite() {
        return Err(Error::DegenerateConstruct(construct.to_string()));
    }
    w.iter_mut().for_each(|v| *v /= norm);
    Ok(w)
}

/// Raw (pre-normalization) weight update for one block against its proxy.
pub fn raw_block_weights(
    block: &DMatrix<f64>,
    proxy: &[f64],
    mode: MeasurementMode,
) -> Result<Vec<f64>> {
    let p = block.ncols();
    if p == 1 {
        return Ok(vec![1.0]);
    }
    match mode {
        MeasurementMode::Correlation => (0..p)
            .map(|c| {
                let col: Vec<f64> = block.column(c).iter().copied().collect();
                pearson(&col, proxy)
            })
            .collect(),
        MeasurementMode::Regression => Ok(ols(block, proxy)?.coefficients),
    }
}

/// Outer weight update for every non-fixed block; fixed blocks keep
/// `previous`.
pub fn update_weights(
    blocks: &Blocks,
    proxies: &DMatrix<f64>,
    previous: &WeightSet,
) -> Result<WeightSet> {
    let n = proxies.nrows();
    let updated: Vec<Result<Vec<f64>>> = par::map_indices(blocks.len(), |k| {
        if blocks.fixed[k] {
            return Ok(previous.weights[k].clone());
        }
        let id = &blocks.construct_ids[k];
        let proxy = &proxies.as_slice()[k * n..(k + 1) * n];
        let raw = raw_block_weights(&blocks.columns[k], proxy, blocks.modes[k]).map_err(|e| match e {
            Error::SingularDesign | Error::DegenerateCorrelation => Error::DegenerateConstruct(id.clone()),
            other => other,
        })?;
        normalize(raw, id)
    });
    Ok(WeightSet {
        construct_ids: blocks.construct_ids.clone(),
        weights: updated.into_iter().collect::<Result<_>>()?,
    })
}

struct PassResult {
    weights: WeightSet,
    scores: LatentScores,
    iterations: usize,
    converged: bool,
}

fn run_pass(
    blocks: &Blocks,
    taxonomy: &Taxonomy,
    start: WeightSet,
    config: &EstimatorConfig,
) -> Result<PassResult> {
    let mut weights = start;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iter {
        iterations += 1;
        let scores = latent_scores(&weights, blocks)?;
        let z = inner_proxies(&scores, taxonomy)?;
        let next = update_weights(blocks, &z, &weights)?;
        let change = next.max_abs_change(&weights);
        weights = next;
        if change < config.epsilon {
            converged = true;
            break;
        }
    }
    let scores = latent_scores(&weights, blocks)?;
    Ok(PassResult {
        weights,
        scores,
        iterations,
        converged,
    })
}

fn block_loadings(block: &DMatrix<f64>, score: &[f64]) -> Result<Vec<f64>> {
    // a one-column composite is the column itself
    if block.ncols() == 1 {
        return Ok(vec![1.0]);
    }
    (0..block.ncols())
        .map(|c| {
            let col: Vec<f64> = block.column(c).iter().copied().collect();
            pearson(&col, score)
        })
        .collect()
}

/// Flip a block so its loadings sum to a nonnegative value (ties: first
/// loading nonnegative).
fn apply_sign_convention(weights: &mut [f64], score: &mut [f64], loadings: &mut [f64]) {
    let sum: f64 = loadings.iter().sum();
    let flip = sum < 0.0 || (sum == 0.0 && loadings.first().is_some_and(|l| *l < 0.0));
    if flip {
        for v in weights.iter_mut().chain(score.iter_mut()).chain(loadings.iter_mut()) {
            *v = -*v;
        }
    }
}

/// Run the full estimation: stage one over first-order constructs, stage
/// two over second-order constructs, then loadings, paths and R².
/// Non-convergence is reported through `converged`, not as an error.
pub fn fit(data: &ValidatedDataset, config: &EstimatorConfig) -> Result<FittedModel> {
    config.validate()?;
    let taxonomy = data.taxonomy();
    let n = data.n_rows();
    if n < 3 {
        return Err(Error::TooFewRows(n));
    }
    let k_total = taxonomy.n_constructs();

    let blocks1 = Blocks::first_order(data)?;
    if blocks1.is_empty() {
        return Err(Error::InvalidTaxonomy("no first-order constructs".into()));
    }
    let stage1 = run_pass(&blocks1, taxonomy, uniform_weights(&blocks1), config)?;

    // per taxonomy construct: weights, score column, loadings
    let mut weights: Vec<Vec<f64>> = vec![Vec::new(); k_total];
    let mut scores = DMatrix::zeros(n, k_total);
    let mut loadings: Vec<Vec<f64>> = vec![Vec::new(); k_total];
    let mut block_ids: Vec<Vec<String>> = vec![Vec::new(); k_total];
    let mut external_flags: Vec<Vec<bool>> = vec![Vec::new(); k_total];
    let mut score_flags: Vec<Vec<bool>> = vec![Vec::new(); k_total];

    for (b, id) in blocks1.construct_ids.iter().enumerate() {
        let k = taxonomy.construct_index(id).expect("block from taxonomy");
        let mut w = stage1.weights.weights[b].clone();
        let mut s = stage1.scores.column(b).to_vec();
        let mut l = block_loadings(&blocks1.columns[b], &s)?;
        apply_sign_convention(&mut w, &mut s, &mut l);
        weights[k] = w;
        scores.column_mut(k).copy_from_slice(&s);
        loadings[k] = l;
        external_flags[k] = blocks1.indicator_ids[b].iter().map(|i| taxonomy.is_external(i)).collect();
        score_flags[k] = vec![false; blocks1.indicator_ids[b].len()];
        block_ids[k] = blocks1.indicator_ids[b].clone();
    }

    let mut iterations = stage1.iterations;
    let mut converged = stage1.converged;

    let second: Vec<usize> = (0..k_total)
        .filter(|&k| taxonomy.constructs()[k].level == Level::Second)
        .collect();
    if !second.is_empty() {
        let mut blocks2 = Blocks::empty();
        let mut start = Vec::new();
        for (k, c) in taxonomy.constructs().iter().enumerate() {
            blocks2.construct_ids.push(c.id.clone());
            blocks2.modes.push(c.mode);
            match c.level {
                Level::First => {
                    blocks2.columns.push(DMatrix::from_column_slice(n, 1, &scores.column(k).iter().copied().collect::<Vec<_>>()));
                    blocks2.indicator_ids.push(vec![c.id.clone()]);
                    blocks2.fixed.push(true);
                    start.push(vec![1.0]);
                }
                Level::Second => {
                    let sources = taxonomy.first_order_sources(k);
                    let externals: Vec<String> =
                        taxonomy.externals_of(k).into_iter().map(str::to_string).collect();
                    let mut m = DMatrix::zeros(n, sources.len() + externals.len());
                    let mut ids = Vec::new();
                    for (c_idx, &s) in sources.iter().enumerate() {
                        m.column_mut(c_idx).copy_from(&scores.column(s));
                        ids.push(taxonomy.constructs()[s].id.clone());
                    }
                    let ext_block = data.block(&externals)?;
                    for e in 0..externals.len() {
                        m.column_mut(sources.len() + e).copy_from(&ext_block.column(e));
                    }
                    ids.extend(externals);
                    let p = ids.len();
                    start.push(vec![1.0 / (p as f64).sqrt(); p]);
                    blocks2.columns.push(m);
                    blocks2.indicator_ids.push(ids);
                    blocks2.fixed.push(false);
                }
            }
        }
        let start = WeightSet {
            construct_ids: blocks2.construct_ids.clone(),
            weights: start,
        };
        let stage2 = run_pass(&blocks2, taxonomy, start, config)?;
        for &k in &second {
            let mut w = stage2.weights.weights[k].clone();
            let mut s = stage2.scores.column(k).to_vec();
            let mut l = block_loadings(&blocks2.columns[k], &s)?;
            apply_sign_convention(&mut w, &mut s, &mut l);
            weights[k] = w;
            scores.column_mut(k).copy_from_slice(&s);
            loadings[k] = l;
            let n_sources = taxonomy.first_order_sources(k).len();
            external_flags[k] = (0..blocks2.indicator_ids[k].len()).map(|i| i >= n_sources).collect();
            score_flags[k] = (0..blocks2.indicator_ids[k].len()).map(|i| i < n_sources).collect();
            block_ids[k] = blocks2.indicator_ids[k].clone();
        }
        iterations = iterations.max(stage2.iterations);
        converged = converged && stage2.converged;
    }

    let construct_ids: Vec<String> = taxonomy.constructs().iter().map(|c| c.id.clone()).collect();
    let mut outer = Vec::new();
    for k in 0..k_total {
        for (i, ind) in block_ids[k].iter().enumerate() {
            outer.push(OuterEstimate {
                construct: construct_ids[k].clone(),
                indicator: ind.clone(),
                weight: weights[k][i],
                loading: loadings[k][i],
                external: external_flags[k][i],
                construct_score: score_flags[k][i],
            });
        }
    }

    let latent = LatentScores {
        construct_ids: construct_ids.clone(),
        values: scores,
    };
    let mut paths = Vec::new();
    let mut r_squared = Vec::new();
    for k in taxonomy.topological_order()? {
        let preds = taxonomy.predecessors(k);
        if preds.is_empty() {
            continue;
        }
        let mut x = DMatrix::zeros(n, preds.len());
        for (c, &p) in preds.iter().enumerate() {
            x.column_mut(c).copy_from_slice(latent.column(p));
        }
        let fit = ols(&x, latent.column(k)).map_err(|e| match e {
            Error::SingularDesign => Error::DegenerateConstruct(construct_ids[k].clone()),
            other => other,
        })?;
        for (c, &p) in preds.iter().enumerate() {
            paths.push(PathEstimate {
                source: construct_ids[p].clone(),
                target: construct_ids[k].clone(),
                coefficient: fit.coefficients[c],
            });
        }
        r_squared.push((construct_ids[k].clone(), fit.r_squared));
    }
    // report paths in declaration order
    paths.sort_by_key(|p| {
        taxonomy
            .paths()
            .iter()
            .position(|(s, d)| *s == p.source && *d == p.target)
    });

    Ok(FittedModel {
        model_ids: data.model_ids().to_vec(),
        weights: WeightSet {
            construct_ids,
            weights,
        },
        outer,
        scores: latent,
        paths,
        r_squared,
        iterations,
        converged,
    })
}
