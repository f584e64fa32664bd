//! Per-model composite scores and ranking-stability comparisons between an
//! original leaderboard aggregate, a refined (model-based) score, and a
//! human reference score.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::FittedModel;
use crate::model::{Level, ScoreMatrix, ValidatedDataset};
use crate::numerics::{self, pearson, spearman};

/// Model id → scalar score.
pub type ModelScores = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositeScores {
    pub model_ids: Vec<String>,
    pub values: Vec<f64>,
    /// Construct whose score was used, or `None` for the weighted
    /// first-order average.
    pub construct: Option<String>,
    pub converged: bool,
}

impl CompositeScores {
    pub fn to_map(&self) -> ModelScores {
        self.model_ids.iter().cloned().zip(self.values.iter().copied()).collect()
    }
}

/// Each model's overall score: the latent score of the unique top-level
/// construct (no successors), or, when several constructs sit at the top,
/// the indicator-count-weighted average of first-order scores,
/// restandardized.
pub fn composite_score(fitted: &FittedModel, data: &ValidatedDataset) -> Result<CompositeScores> {
    let t = data.taxonomy();
    let sinks: Vec<usize> = (0..t.n_constructs()).filter(|&k| t.successors(k).is_empty()).collect();
    let (values, construct) = if let [top] = sinks[..] {
        let id = &t.constructs()[top].id;
        let s = fitted
            .scores
            .get(id)
            .ok_or_else(|| Error::UnknownConstruct(id.clone()))?;
        (s.to_vec(), Some(id.clone()))
    } else {
        let n = data.n_rows();
        let mut acc = vec![0.0; n];
        for (k, c) in t.constructs().iter().enumerate() {
            if c.level != Level::First {
                continue;
            }
            let w = t.observed_block(k).len() as f64;
            let s = fitted.scores.get(&c.id).ok_or_else(|| Error::UnknownConstruct(c.id.clone()))?;
            for (a, v) in acc.iter_mut().zip(s) {
                *a += w * v;
            }
        }
        let z = numerics::standardize(&acc)
            .ok_or_else(|| Error::UndefinedMetric("composite score has zero variance".into()))?;
        (z, None)
    };
    Ok(CompositeScores {
        model_ids: fitted.model_ids.clone(),
        values,
        construct,
        converged: fitted.converged,
    })
}

/// Unweighted mean of a model's raw task scores (missing cells skipped).
/// A single-column table is taken as-is.
pub fn leaderboard_scores(matrix: &ScoreMatrix) -> ModelScores {
    matrix
        .model_ids()
        .iter()
        .zip(matrix.row_means())
        .filter_map(|(id, m)| m.map(|v| (id.clone(), v)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetKey {
    Human,
    Original,
    Refined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetSide {
    Top,
    Bottom,
}

/// A slice of models chosen by rank on one of the three scores.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsetDef {
    pub name: String,
    pub key: SubsetKey,
    pub side: SubsetSide,
    pub size: usize,
}

impl SubsetDef {
    pub fn top(size: usize, key: SubsetKey) -> Self {
        Self {
            name: format!("top_{size}"),
            key,
            side: SubsetSide::Top,
            size,
        }
    }

    pub fn bottom(size: usize, key: SubsetKey) -> Self {
        Self {
            name: format!("bottom_{size}"),
            key,
            side: SubsetSide::Bottom,
            size,
        }
    }

    /// Top-50 and bottom-50 by human score.
    pub fn defaults() -> Vec<Self> {
        vec![Self::top(50, SubsetKey::Human), Self::bottom(50, SubsetKey::Human)]
    }
}

/// A correlation that may be undefined for its input.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub value: Option<f64>,
    pub n: usize,
    pub reason: Option<String>,
}

impl Cell {
    fn from(n: usize, r: Result<f64>) -> Self {
        match r {
            Ok(v) => Cell { value: Some(v), n, reason: None },
            Err(e) => Cell {
                value: None,
                n,
                reason: Some(match e {
                    Error::InsufficientObservations { .. } => {
                        format!("fewer than 3 models ({n}) after the join")
                    }
                    Error::DegenerateCorrelation => "all scores tied".to_string(),
                    other => other.to_string(),
                }),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankCells {
    pub spearman_origin_vs_refined: Cell,
    pub spearman_origin_vs_human: Cell,
    pub spearman_refined_vs_human: Cell,
    pub pearson_refined_vs_human: Cell,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankReport {
    pub n_models: usize,
    /// Ids missing from at least one of the three inputs.
    pub dropped_ids: Vec<String>,
    pub overall: RankCells,
    pub subsets: Vec<(SubsetDef, RankCells)>,
}

fn cells(o: &[f64], r: &[f64], h: &[f64]) -> RankCells {
    let n = o.len();
    RankCells {
        spearman_origin_vs_refined: Cell::from(n, spearman(o, r)),
        spearman_origin_vs_human: Cell::from(n, spearman(o, h)),
        spearman_refined_vs_human: Cell::from(n, spearman(r, h)),
        pearson_refined_vs_human: Cell::from(n, pearson(r, h)),
    }
}

/// Spearman correlations between the three score vectors (and Pearson for
/// refined vs human), over the inner join of model ids and over each
/// requested subset.
pub fn rank_report(
    original: &ModelScores,
    refined: &ModelScores,
    human: &ModelScores,
    subset_defs: &[SubsetDef],
) -> RankReport {
    let joined: Vec<&String> = original
        .keys()
        .filter(|id| refined.contains_key(*id) && human.contains_key(*id))
        .collect();
    let mut dropped: Vec<String> = original
        .keys()
        .chain(refined.keys())
        .chain(human.keys())
        .filter(|id| !(original.contains_key(*id) && refined.contains_key(*id) && human.contains_key(*id)))
        .cloned()
        .collect();
    dropped.sort();
    dropped.dedup();

    let o: Vec<f64> = joined.iter().map(|id| original[*id]).collect();
    let r: Vec<f64> = joined.iter().map(|id| refined[*id]).collect();
    let h: Vec<f64> = joined.iter().map(|id| human[*id]).collect();

    let subsets = subset_defs
        .iter()
        .map(|def| {
            let key = match def.key {
                SubsetKey::Human => &h,
                SubsetKey::Original => &o,
                SubsetKey::Refined => &r,
            };
            let mut idx: Vec<usize> = (0..joined.len()).collect();
            // descending by score; ties by model id (joined is id-sorted)
            idx.sort_by(|&a, &b| key[b].total_cmp(&key[a]).then(a.cmp(&b)));
            let take = def.size.min(idx.len());
            let chosen: Vec<usize> = match def.side {
                SubsetSide::Top => idx[..take].to_vec(),
                SubsetSide::Bottom => idx[idx.len() - take..].to_vec(),
            };
            let pick = |v: &[f64]| chosen.iter().map(|&i| v[i]).collect::<Vec<f64>>();
            (def.clone(), cells(&pick(&o), &pick(&r), &pick(&h)))
        })
        .collect();

    RankReport {
        n_models: joined.len(),
        dropped_ids: dropped,
        overall: cells(&o, &r, &h),
        subsets,
    }
}
