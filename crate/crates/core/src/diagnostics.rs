//! Measurement-quality diagnostics for a fitted benchmark model.
//!
//! Indicator level: outer loadings and within-block VIF. Construct level:
//! Cronbach's α, composite reliability, AVE and R². Between constructs: the
//! heterotrait–monotrait ratio (HTMT). Model fit: SRMR. Benchmark level:
//!
//! * `d_div   = 1 / (2 · max_{i≠j} HTMT_ij)`
//! * `tc      = mean |loading|` over task indicators
//! * `d_valid = (Π VIF)^(−1/n)` over task indicators
//! * `overall = d_div + tc + d_valid`

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::FittedModel;
use crate::model::{Level, ValidatedDataset};
use crate::numerics::{self, geometric_mean, ols, pearson};
use crate::par;
use crate::rank_analysis::{composite_score, ModelScores};

/// R² at or above `1 − COLLINEAR_TOLERANCE` is treated as perfect collinearity.
pub const COLLINEAR_TOLERANCE: f64 = 1e-12;

/// VIF of every column of `block` against the other columns. Perfect
/// collinearity yields `f64::INFINITY`.
pub fn block_vifs(block: &DMatrix<f64>) -> Vec<f64> {
    let p = block.ncols();
    par::map_indices(p, |j| {
        let others = block.clone().remove_column(j);
        let y: Vec<f64> = block.column(j).iter().copied().collect();
        match ols(&others, &y) {
            Ok(fit) if fit.r_squared < 1.0 - COLLINEAR_TOLERANCE => 1.0 / (1.0 - fit.r_squared),
            Ok(_) | Err(Error::SingularDesign) => f64::INFINITY,
            // too few rows to regress: no evidence of redundancy
            Err(_) => f64::NAN,
        }
    })
}

/// Per-indicator VIF within one construct's task indicators.
pub fn vif(data: &ValidatedDataset, construct: &str) -> Result<Vec<(String, f64)>> {
    let spec = data
        .taxonomy()
        .construct(construct)
        .ok_or_else(|| Error::UnknownConstruct(construct.to_string()))?;
    if spec.indicators.len() < 2 {
        return Err(Error::UndefinedMetric(format!(
            "VIF of {construct:?} needs at least two task indicators"
        )));
    }
    let block = data.block(&spec.indicators)?;
    Ok(spec.indicators.iter().cloned().zip(block_vifs(&block)).collect())
}

fn mean_offdiag(corr: &DMatrix<f64>, idx: &[usize]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (a, &p) in idx.iter().enumerate() {
        for &q in &idx[a + 1..] {
            sum += corr[(p, q)];
            count += 1;
        }
    }
    sum / count as f64
}

/// HTMT from a precomputed indicator correlation matrix. Arguments are
/// canonicalised so `(i, j)` and `(j, i)` run the same arithmetic.
fn htmt_from_correlations(
    corr: &DMatrix<f64>,
    (id_i, idx_i): (&str, &[usize]),
    (id_j, idx_j): (&str, &[usize]),
) -> Result<f64> {
    let ((id_i, idx_i), (id_j, idx_j)) = if (id_i, idx_i) <= (id_j, idx_j) {
        ((id_i, idx_i), (id_j, idx_j))
    } else {
        ((id_j, idx_j), (id_i, idx_i))
    };
    let undefined = |why: String| Error::UndefinedHtmt(id_i.to_string(), id_j.to_string(), why);
    for (id, idx) in [(id_i, idx_i), (id_j, idx_j)] {
        if idx.len() < 2 {
            return Err(undefined(format!("{id:?} has fewer than two indicators")));
        }
    }
    let mut between = 0.0;
    for &p in idx_i {
        for &q in idx_j {
            between += corr[(p, q)];
        }
    }
    between /= (idx_i.len() * idx_j.len()) as f64;
    let mono_i = mean_offdiag(corr, idx_i);
    let mono_j = mean_offdiag(corr, idx_j);
    for (id, m) in [(id_i, mono_i), (id_j, mono_j)] {
        if !(m > 0.0) {
            return Err(undefined(format!(
                "mean within-construct correlation of {id:?} is {m:.6}, not positive"
            )));
        }
    }
    Ok(between / (mono_i * mono_j).sqrt())
}

/// Heterotrait–monotrait ratio between two constructs: mean cross-block
/// indicator correlation over the geometric mean of the two mean
/// within-block correlations.
pub fn htmt(data: &ValidatedDataset, i: &str, j: &str) -> Result<f64> {
    let t = data.taxonomy();
    let a = t.construct(i).ok_or_else(|| Error::UnknownConstruct(i.to_string()))?;
    let b = t.construct(j).ok_or_else(|| Error::UnknownConstruct(j.to_string()))?;
    let ids: Vec<String> = a.indicators.iter().chain(&b.indicators).cloned().collect();
    let corr = numerics::correlation_matrix(&data.block(&ids)?)?;
    let ia: Vec<usize> = (0..a.indicators.len()).collect();
    let ib: Vec<usize> = (a.indicators.len()..ids.len()).collect();
    if i == j {
        return Ok(1.0);
    }
    htmt_from_correlations(&corr, (i, &ia), (j, &ib))
}

/// Symmetric HTMT table over the first-order constructs. Undefined cells
/// are `None` with a reason.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HtmtMatrix {
    pub construct_ids: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
    pub undefined: Vec<(String, String, String)>,
}

impl HtmtMatrix {
    pub fn get(&self, i: &str, j: &str) -> Option<f64> {
        let a = self.construct_ids.iter().position(|c| c == i)?;
        let b = self.construct_ids.iter().position(|c| c == j)?;
        self.values[a][b]
    }

    /// Largest defined off-diagonal value.
    pub fn max_offdiag(&self) -> Option<f64> {
        let k = self.construct_ids.len();
        (0..k)
            .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
            .filter_map(|(i, j)| self.values[i][j])
            .reduce(f64::max)
    }

    /// Matrix built directly from values (diagonal forced to 1).
    pub fn from_values(construct_ids: Vec<String>, mut values: Vec<Vec<Option<f64>>>) -> Self {
        for (i, row) in values.iter_mut().enumerate() {
            row[i] = Some(1.0);
        }
        Self {
            construct_ids,
            values,
            undefined: Vec::new(),
        }
    }
}

pub fn htmt_matrix(data: &ValidatedDataset) -> Result<HtmtMatrix> {
    let t = data.taxonomy();
    let constructs: Vec<&crate::model::ConstructSpec> =
        t.constructs().iter().filter(|c| c.level == Level::First).collect();
    let ids: Vec<String> = constructs.iter().flat_map(|c| c.indicators.iter().cloned()).collect();
    let corr = numerics::correlation_matrix(&data.block(&ids)?)?;
    let mut offsets = Vec::new();
    let mut at = 0;
    for c in &constructs {
        offsets.push((at..at + c.indicators.len()).collect::<Vec<usize>>());
        at += c.indicators.len();
    }
    let k = constructs.len();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
    let results = par::map_slice(&pairs, |&(i, j)| {
        htmt_from_correlations(
            &corr,
            (&constructs[i].id, &offsets[i]),
            (&constructs[j].id, &offsets[j]),
        )
    });
    let mut values = vec![vec![None; k]; k];
    let mut undefined = Vec::new();
    for (i, row) in values.iter_mut().enumerate() {
        row[i] = Some(1.0);
    }
    for (&(i, j), r) in pairs.iter().zip(results) {
        match r {
            Ok(v) => {
                values[i][j] = Some(v);
                values[j][i] = Some(v);
            }
            Err(Error::UndefinedHtmt(a, b, why)) => undefined.push((a, b, why)),
            Err(e) => return Err(e),
        }
    }
    Ok(HtmtMatrix {
        construct_ids: constructs.iter().map(|c| c.id.clone()).collect(),
        values,
        undefined,
    })
}

/// Cronbach's α on the construct's standardized task indicators.
pub fn cronbach_alpha(data: &ValidatedDataset, construct: &str) -> Result<f64> {
    let spec = data
        .taxonomy()
        .construct(construct)
        .ok_or_else(|| Error::UnknownConstruct(construct.to_string()))?;
    let k = spec.indicators.len();
    if k < 2 {
        return Err(Error::UndefinedMetric(format!(
            "Cronbach's alpha of {construct:?} needs at least two indicators"
        )));
    }
    let block = data.block(&spec.indicators)?;
    let item_var: f64 = (0..k)
        .map(|c| numerics::variance(&block.column(c).iter().copied().collect::<Vec<_>>()))
        .sum();
    let totals: Vec<f64> = block.row_iter().map(|r| r.sum()).collect();
    let total_var = numerics::variance(&totals);
    if !(total_var > 0.0) {
        return Err(Error::DegenerateConstruct(construct.to_string()));
    }
    let k = k as f64;
    Ok(k / (k - 1.0) * (1.0 - item_var / total_var))
}

/// `(Σλ)² / ((Σλ)² + Σ(1 − λ²))`; 0 for an empty vector.
pub fn composite_reliability(loadings: &[f64]) -> f64 {
    let s: f64 = loadings.iter().sum();
    let err: f64 = loadings.iter().map(|l| 1.0 - l * l).sum();
    let denom = s * s + err;
    if denom > 0.0 {
        s * s / denom
    } else {
        0.0
    }
}

/// Mean squared loading; 0 for an empty vector.
pub fn ave(loadings: &[f64]) -> f64 {
    if loadings.is_empty() {
        return 0.0;
    }
    loadings.iter().map(|l| l * l).sum::<f64>() / loadings.len() as f64
}

/// Root mean square of the residual correlations (strict lower triangle)
/// between the observed indicators and the correlations the fitted
/// measurement model implies.
pub fn srmr(fitted: &FittedModel, data: &ValidatedDataset) -> Result<f64> {
    let items: Vec<_> = fitted.outer.iter().filter(|o| !o.construct_score).collect();
    if items.len() < 2 {
        return Ok(0.0);
    }
    let ids: Vec<String> = items.iter().map(|o| o.indicator.clone()).collect();
    let observed = numerics::correlation_matrix(&data.block(&ids)?)?;
    let construct_corr = |a: &str, b: &str| -> Result<f64> {
        if a == b {
            return Ok(1.0);
        }
        let sa = fitted.scores.get(a).ok_or_else(|| Error::UnknownConstruct(a.to_string()))?;
        let sb = fitted.scores.get(b).ok_or_else(|| Error::UnknownConstruct(b.to_string()))?;
        pearson(sa, sb)
    };
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 1..items.len() {
        for k in 0..i {
            let implied = items[i].loading
                * construct_corr(&items[i].construct, &items[k].construct)?
                * items[k].loading;
            let d = observed[(i, k)] - implied;
            sum += d * d;
            count += 1;
        }
    }
    Ok((sum / count as f64).sqrt())
}

/// `1 / (2 · max off-diagonal HTMT)`, unclamped.
pub fn dimensional_diversity(htmt: &HtmtMatrix) -> Result<f64> {
    let max = htmt
        .max_offdiag()
        .ok_or_else(|| Error::UndefinedMetric("no defined HTMT between distinct constructs".into()))?;
    if !(max > 0.0) {
        return Err(Error::UndefinedMetric(format!("maximum HTMT {max} is not positive")));
    }
    Ok(1.0 / (2.0 * max))
}

/// Mean absolute loading.
pub fn task_contribution(loadings: &[f64]) -> Result<f64> {
    if loadings.is_empty() {
        return Err(Error::UndefinedMetric("task contribution of zero indicators".into()));
    }
    Ok(loadings.iter().map(|l| l.abs()).sum::<f64>() / loadings.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IndicatorValidity {
    pub value: f64,
    /// Some indicator is perfectly collinear with its block (infinite VIF).
    pub collinear: bool,
}

/// Inverse geometric mean of the VIFs. Any infinite VIF gives 0, flagged.
pub fn indicator_validity(vifs: &[f64]) -> Result<IndicatorValidity> {
    if vifs.iter().any(|v| v.is_infinite()) {
        return Ok(IndicatorValidity { value: 0.0, collinear: true });
    }
    let g = geometric_mean(vifs)?;
    Ok(IndicatorValidity { value: 1.0 / g, collinear: false })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndicatorDiagnostics {
    pub indicator: String,
    pub loading: f64,
    pub weight: f64,
    /// `None` when undefined (single-indicator block, external indicator);
    /// `Some(inf)` for perfect collinearity.
    pub vif: Option<f64>,
    pub external: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstructDiagnostics {
    pub construct: String,
    pub level: Level,
    pub indicators: Vec<IndicatorDiagnostics>,
    pub cronbach_alpha: Option<f64>,
    pub composite_reliability: f64,
    pub ave: f64,
    pub r_squared: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub per_construct: Vec<ConstructDiagnostics>,
    pub htmt: HtmtMatrix,
    pub paths: Vec<crate::estimator::PathEstimate>,
    pub srmr: f64,
    pub d_div: Option<f64>,
    pub tc: Option<f64>,
    pub d_valid: Option<f64>,
    pub collinear: bool,
    pub overall: Option<f64>,
    pub human_alignment_pearson: Option<f64>,
    pub human_alignment_n: usize,
    pub converged: bool,
    pub iterations: usize,
    pub n_models: usize,
    /// (metric, reason) for every metric reported as undefined.
    pub undefined: Vec<(String, String)>,
    pub notes: Vec<String>,
}

impl DiagnosticsReport {
    pub fn construct(&self, id: &str) -> Option<&ConstructDiagnostics> {
        self.per_construct.iter().find(|c| c.construct == id)
    }

    pub fn indicator(&self, id: &str) -> Option<&IndicatorDiagnostics> {
        self.per_construct
            .iter()
            .flat_map(|c| &c.indicators)
            .find(|i| i.indicator == id)
    }
}

/// Assemble every metric for a fitted model. Undefined metrics are
/// recorded, never fatal.
pub fn benchmark_report(
    fitted: &FittedModel,
    data: &ValidatedDataset,
    human_scores: Option<&ModelScores>,
) -> Result<DiagnosticsReport> {
    let t = data.taxonomy();
    let mut undefined = Vec::new();
    let mut notes = vec!["overall = d_div + tc + d_valid".to_string()];
    if !fitted.converged {
        notes.push(format!(
            "estimation did not converge within {} iterations; metrics are provisional",
            fitted.iterations
        ));
    }
    if !data.dropped_models().is_empty() {
        notes.push(format!(
            "{} models dropped for missing scores",
            data.dropped_models().len()
        ));
    }

    let per_construct: Vec<ConstructDiagnostics> = t
        .constructs()
        .iter()
        .map(|c| -> Result<ConstructDiagnostics> {
            let block = fitted.block(&c.id);
            let vifs: Vec<(String, f64)> = if c.indicators.len() >= 2 {
                vif(data, &c.id)?
            } else {
                Vec::new()
            };
            let indicators: Vec<IndicatorDiagnostics> = block
                .iter()
                .map(|o| IndicatorDiagnostics {
                    indicator: o.indicator.clone(),
                    loading: o.loading,
                    weight: o.weight,
                    vif: vifs.iter().find(|(i, _)| *i == o.indicator).map(|(_, v)| *v).filter(|v| !v.is_nan()),
                    external: o.external,
                })
                .collect();
            let alpha = if c.level == Level::First {
                match cronbach_alpha(data, &c.id) {
                    Ok(a) => Some(a),
                    Err(e) => {
                        undefined.push((format!("cronbach_alpha[{}]", c.id), e.to_string()));
                        None
                    }
                }
            } else {
                None
            };
            let loadings: Vec<f64> = block.iter().map(|o| o.loading).collect();
            Ok(ConstructDiagnostics {
                construct: c.id.clone(),
                level: c.level,
                indicators,
                cronbach_alpha: alpha,
                composite_reliability: composite_reliability(&loadings),
                ave: ave(&loadings),
                r_squared: fitted.r_squared_of(&c.id),
            })
        })
        .collect::<Result<_>>()?;

    let htmt = htmt_matrix(data)?;
    for (a, b, why) in &htmt.undefined {
        undefined.push((format!("htmt[{a},{b}]"), why.clone()));
    }
    let srmr = srmr(fitted, data)?;

    let d_div = match dimensional_diversity(&htmt) {
        Ok(v) => Some(v),
        Err(e) => {
            undefined.push(("d_div".into(), e.to_string()));
            None
        }
    };

    let task_loadings: Vec<f64> = t
        .task_indicators()
        .iter()
        .filter_map(|i| fitted.loading(i))
        .collect();
    let tc = match task_contribution(&task_loadings) {
        Ok(v) => Some(v),
        Err(e) => {
            undefined.push(("tc".into(), e.to_string()));
            None
        }
    };

    let task_vifs: Vec<f64> = per_construct
        .iter()
        .flat_map(|c| c.indicators.iter())
        .filter(|i| !i.external)
        .filter_map(|i| i.vif)
        .collect();
    let excluded = task_loadings.len() - task_vifs.len();
    if excluded > 0 {
        notes.push(format!(
            "{excluded} task indicators without a defined VIF are excluded from d_valid"
        ));
    }
    let (d_valid, collinear) = match indicator_validity(&task_vifs) {
        Ok(v) => {
            if v.collinear {
                undefined.push((
                    "vif".into(),
                    "perfectly collinear indicator (infinite VIF); d_valid set to 0".into(),
                ));
            }
            (Some(v.value), v.collinear)
        }
        Err(e) => {
            undefined.push(("d_valid".into(), e.to_string()));
            (None, false)
        }
    };
    let overall = match (d_div, tc, d_valid) {
        (Some(a), Some(b), Some(c)) => Some(a + b + c),
        _ => {
            undefined.push(("overall".into(), "a component metric is undefined".into()));
            None
        }
    };

    let (human_alignment_pearson, human_alignment_n) = match human_scores {
        None => (None, 0),
        Some(h) => {
            let composite = composite_score(fitted, data)?;
            let (a, b): (Vec<f64>, Vec<f64>) = composite
                .model_ids
                .iter()
                .zip(&composite.values)
                .filter_map(|(id, v)| h.get(id).map(|hv| (*v, *hv)))
                .unzip();
            match pearson(&a, &b) {
                Ok(r) => (Some(r), a.len()),
                Err(e) => {
                    undefined.push(("human_alignment_pearson".into(), e.to_string()));
                    (None, a.len())
                }
            }
        }
    };

    Ok(DiagnosticsReport {
        per_construct,
        htmt,
        paths: fitted.paths.clone(),
        srmr,
        d_div,
        tc,
        d_valid,
        collinear,
        overall,
        human_alignment_pearson,
        human_alignment_n,
        converged: fitted.converged,
        iterations: fitted.iterations,
        n_models: data.n_rows(),
        undefined,
        notes,
    })
}
