//! Domain types for the two inputs (a model × task score table and a
//! construct taxonomy), their parsers, and the validation step that turns
//! them into a complete, column-standardized dataset.

use std::collections::{BTreeMap, HashMap, HashSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics;

/// Raw score table: rows are evaluated models, columns are task
/// indicators. `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    model_ids: Vec<String>,
    indicator_ids: Vec<String>,
    cells: Vec<Option<f64>>,
}

impl ScoreMatrix {
    /// `cells` is row-major, `model_ids.len() * indicator_ids.len()` long.
    pub fn new(
        model_ids: Vec<String>,
        indicator_ids: Vec<String>,
        cells: Vec<Option<f64>>,
    ) -> Result<Self> {
        check_unique(&model_ids, Error::DuplicateModel)?;
        check_unique(&indicator_ids, Error::DuplicateIndicator)?;
        if cells.len() != model_ids.len() * indicator_ids.len() {
            return Err(Error::LengthMismatch(
                cells.len(),
                model_ids.len() * indicator_ids.len(),
            ));
        }
        for (k, c) in cells.iter().enumerate() {
            if let Some(v) = c {
                if !v.is_finite() {
                    let p = indicator_ids.len();
                    return Err(Error::NonNumericCell {
                        row: k / p + 2,
                        col: k % p + 2,
                        value: v.to_string(),
                    });
                }
            }
        }
        Ok(Self {
            model_ids,
            indicator_ids,
            cells,
        })
    }

    /// Complete matrix (no missing cells), rows = models.
    pub fn from_dense(
        model_ids: Vec<String>,
        indicator_ids: Vec<String>,
        values: &DMatrix<f64>,
    ) -> Result<Self> {
        let (n, p) = values.shape();
        if n != model_ids.len() || p != indicator_ids.len() {
            return Err(Error::LengthMismatch(n * p, model_ids.len() * indicator_ids.len()));
        }
        let mut cells = Vec::with_capacity(n * p);
        for i in 0..n {
            for j in 0..p {
                cells.push(Some(values[(i, j)]));
            }
        }
        Self::new(model_ids, indicator_ids, cells)
    }

    pub fn model_ids(&self) -> &[String] {
        &self.model_ids
    }

    pub fn indicator_ids(&self) -> &[String] {
        &self.indicator_ids
    }

    pub fn n_models(&self) -> usize {
        self.model_ids.len()
    }

    pub fn n_indicators(&self) -> usize {
        self.indicator_ids.len()
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.cells[row * self.indicator_ids.len() + col]
    }

    pub fn indicator_index(&self, id: &str) -> Option<usize> {
        self.indicator_ids.iter().position(|x| x == id)
    }

    pub fn column(&self, col: usize) -> Vec<Option<f64>> {
        (0..self.n_models()).map(|r| self.get(r, col)).collect()
    }

    pub fn missing_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_none()).count()
    }

    /// Replace one column; `values` must have one entry per model.
    pub fn set_column(&mut self, col: usize, values: &[f64]) -> Result<()> {
        if values.len() != self.n_models() {
            return Err(Error::LengthMismatch(values.len(), self.n_models()));
        }
        let p = self.indicator_ids.len();
        for (r, v) in values.iter().enumerate() {
            self.cells[r * p + col] = Some(*v);
        }
        Ok(())
    }

    /// Row-wise mean over present cells; `None` for an all-missing row.
    pub fn row_means(&self) -> Vec<Option<f64>> {
        (0..self.n_models())
            .map(|r| {
                let present: Vec<f64> = (0..self.n_indicators()).filter_map(|c| self.get(r, c)).collect();
                (!present.is_empty()).then(|| numerics::mean(&present))
            })
            .collect()
    }

    /// CSV rendering with shortest round-trip number formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model_id");
        for id in &self.indicator_ids {
            out.push(',');
            out.push_str(&csv_field(id));
        }
        out.push('\n');
        for (r, model) in self.model_ids.iter().enumerate() {
            out.push_str(&csv_field(model));
            for c in 0..self.n_indicators() {
                out.push(',');
                if let Some(v) = self.get(r, c) {
                    out.push_str(&format!("{v:?}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn check_unique(ids: &[String], err: fn(String) -> Error) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(err(id.clone()));
        }
    }
    Ok(())
}

/// Parse a score table. The header row names the indicators (its first
/// cell labels the id column); each following row is a model id and its
/// scores. Empty cells are missing. Error positions are 1-based file
/// line and column numbers.
pub fn parse_scores(text: &str) -> Result<ScoreMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(rec) => rec.map_err(|e| Error::Csv(e.to_string()))?,
        None => return Err(Error::EmptyTable),
    };
    let indicator_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if indicator_ids.is_empty() {
        return Err(Error::EmptyTable);
    }
    check_unique(&indicator_ids, Error::DuplicateIndicator)?;
    let width = indicator_ids.len() + 1;

    let mut model_ids = Vec::new();
    let mut cells = Vec::new();
    for (k, rec) in records.enumerate() {
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        let line = k + 2;
        if rec.len() != width {
            return Err(Error::RaggedRow {
                row: line,
                found: rec.len(),
                expected: width,
            });
        }
        model_ids.push(rec[0].to_string());
        for (c, field) in rec.iter().enumerate().skip(1) {
            if field.is_empty() {
                cells.push(None);
                continue;
            }
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => cells.push(Some(v)),
                _ => {
                    return Err(Error::NonNumericCell {
                        row: line,
                        col: c + 1,
                        value: field.to_string(),
                    })
                }
            }
        }
    }
    if model_ids.is_empty() {
        return Err(Error::EmptyTable);
    }
    ScoreMatrix::new(model_ids, indicator_ids, cells)
}

/// How an outer weight vector is updated from a construct's inner proxy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasurementMode {
    /// Weights are the indicator/proxy correlations.
    #[default]
    #[serde(rename = "correlation")]
    Correlation,
    /// Weights are multiple-regression coefficients of the proxy on the block.
    #[serde(rename = "regression")]
    Regression,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Level {
    #[default]
    #[serde(rename = "first")]
    First,
    #[serde(rename = "second")]
    Second,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstructSpec {
    pub id: String,
    #[serde(default)]
    pub indicators: Vec<String>,
    #[serde(default)]
    pub mode: MeasurementMode,
    #[serde(default)]
    pub level: Level,
    /// Allows a measurement block of exactly one indicator.
    #[serde(default, skip_serializing_if = "is_false")]
    pub single_indicator: bool,
}

impl ConstructSpec {
    pub fn first_order(id: &str, indicators: &[&str]) -> Self {
        Self {
            id: id.to_string(),
            indicators: indicators.iter().map(|s| s.to_string()).collect(),
            mode: MeasurementMode::Correlation,
            level: Level::First,
            single_indicator: indicators.len() == 1,
        }
    }

    pub fn second_order(id: &str) -> Self {
        Self {
            id: id.to_string(),
            indicators: Vec::new(),
            mode: MeasurementMode::Correlation,
            level: Level::Second,
            single_indicator: false,
        }
    }
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct TaxonomyDoc {
    constructs: Vec<ConstructSpec>,
    #[serde(default)]
    paths: Vec<(String, String)>,
    #[serde(default)]
    external_indicators: Vec<(String, String)>,
}

/// Construct hierarchy: measurement blocks, structural paths (a DAG) and
/// external indicators attached to constructs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    constructs: Vec<ConstructSpec>,
    paths: Vec<(String, String)>,
    external_indicators: Vec<(String, String)>,
    index: HashMap<String, usize>,
}

impl Taxonomy {
    pub fn new(
        constructs: Vec<ConstructSpec>,
        paths: Vec<(String, String)>,
        external_indicators: Vec<(String, String)>,
    ) -> Result<Self> {
        let mut index = HashMap::new();
        for (k, c) in constructs.iter().enumerate() {
            if index.insert(c.id.clone(), k).is_some() {
                return Err(Error::DuplicateConstruct(c.id.clone()));
            }
        }
        let mut assigned = HashSet::new();
        for c in &constructs {
            if c.level == Level::Second && !c.indicators.is_empty() {
                return Err(Error::InvalidTaxonomy(format!(
                    "second-order construct {:?} lists task indicators; it is measured through its paths",
                    c.id
                )));
            }
            for ind in &c.indicators {
                if !assigned.insert(ind.clone()) {
                    return Err(Error::DoubleAssignment(ind.clone()));
                }
            }
        }
        for (ind, target) in &external_indicators {
            if !index.contains_key(target) {
                return Err(Error::UnknownConstruct(target.clone()));
            }
            if !assigned.insert(ind.clone()) {
                return Err(Error::DoubleAssignment(ind.clone()));
            }
        }
        let mut seen_paths = HashSet::new();
        for (src, dst) in &paths {
            for id in [src, dst] {
                if !index.contains_key(id) {
                    return Err(Error::UnknownConstruct(id.clone()));
                }
            }
            if src == dst {
                return Err(Error::CyclicStructure(src.clone()));
            }
            if !seen_paths.insert((src.clone(), dst.clone())) {
                return Err(Error::InvalidTaxonomy(format!("duplicate path {src} -> {dst}")));
            }
        }
        let taxonomy = Self {
            constructs,
            paths,
            external_indicators,
            index,
        };
        taxonomy.topological_order()?;
        for (k, c) in taxonomy.constructs.iter().enumerate() {
            let size = taxonomy.block_size(k);
            if size == 0 {
                return Err(Error::InvalidTaxonomy(format!(
                    "construct {:?} has no indicators",
                    c.id
                )));
            }
            if size == 1 && !c.single_indicator {
                return Err(Error::InvalidTaxonomy(format!(
                    "construct {:?} has a single indicator; set \"single_indicator\": true to allow it",
                    c.id
                )));
            }
        }
        Ok(taxonomy)
    }

    pub fn constructs(&self) -> &[ConstructSpec] {
        &self.constructs
    }

    pub fn paths(&self) -> &[(String, String)] {
        &self.paths
    }

    pub fn external_indicators(&self) -> &[(String, String)] {
        &self.external_indicators
    }

    pub fn n_constructs(&self) -> usize {
        self.constructs.len()
    }

    pub fn construct_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn construct(&self, id: &str) -> Option<&ConstructSpec> {
        self.construct_index(id).map(|k| &self.constructs[k])
    }

    /// External indicators attached to construct `k`.
    pub fn externals_of(&self, k: usize) -> Vec<&str> {
        let id = &self.constructs[k].id;
        self.external_indicators
            .iter()
            .filter(|(_, t)| t == id)
            .map(|(i, _)| i.as_str())
            .collect()
    }

    pub fn is_external(&self, indicator: &str) -> bool {
        self.external_indicators.iter().any(|(i, _)| i == indicator)
    }

    /// Construct owning an indicator (task or external).
    pub fn owner_of(&self, indicator: &str) -> Option<usize> {
        self.constructs
            .iter()
            .position(|c| c.indicators.iter().any(|i| i == indicator))
            .or_else(|| {
                self.external_indicators
                    .iter()
                    .find(|(i, _)| i == indicator)
                    .and_then(|(_, t)| self.construct_index(t))
            })
    }

    /// Every observed column the taxonomy needs: task indicators in
    /// construct order, then external indicators.
    pub fn observed_indicators(&self) -> Vec<String> {
        self.constructs
            .iter()
            .flat_map(|c| c.indicators.iter().cloned())
            .chain(self.external_indicators.iter().map(|(i, _)| i.clone()))
            .collect()
    }

    /// Task indicators only (externals excluded).
    pub fn task_indicators(&self) -> Vec<String> {
        self.constructs
            .iter()
            .flat_map(|c| c.indicators.iter().cloned())
            .collect()
    }

    pub fn predecessors(&self, k: usize) -> Vec<usize> {
        let id = &self.constructs[k].id;
        self.paths
            .iter()
            .filter(|(_, d)| d == id)
            .map(|(s, _)| self.index[s])
            .collect()
    }

    pub fn successors(&self, k: usize) -> Vec<usize> {
        let id = &self.constructs[k].id;
        self.paths
            .iter()
            .filter(|(s, _)| s == id)
            .map(|(_, d)| self.index[d])
            .collect()
    }

    /// Structural neighbours (predecessors and successors), ascending.
    pub fn neighbors(&self, k: usize) -> Vec<usize> {
        let mut n: Vec<usize> = self.predecessors(k);
        n.extend(self.successors(k));
        n.sort_unstable();
        n.dedup();
        n
    }

    /// Observed columns (task + external) measuring a first-order construct.
    /// Empty for second-order constructs apart from their externals.
    pub fn observed_block(&self, k: usize) -> Vec<String> {
        self.constructs[k]
            .indicators
            .iter()
            .cloned()
            .chain(self.externals_of(k).into_iter().map(str::to_string))
            .collect()
    }

    /// First-order constructs feeding a second-order construct.
    pub fn first_order_sources(&self, k: usize) -> Vec<usize> {
        self.predecessors(k)
            .into_iter()
            .filter(|&s| self.constructs[s].level == Level::First)
            .collect()
    }

    fn block_size(&self, k: usize) -> usize {
        match self.constructs[k].level {
            Level::First => self.observed_block(k).len(),
            Level::Second => self.first_order_sources(k).len() + self.externals_of(k).len(),
        }
    }

    /// Kahn's algorithm; ties resolved by declaration order.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let n = self.constructs.len();
        let mut indegree = vec![0usize; n];
        for (_, d) in &self.paths {
            indegree[self.index[d]] += 1;
        }
        let mut order = Vec::with_capacity(n);
        let mut done = vec![false; n];
        while order.len() < n {
            let next = (0..n).find(|&k| !done[k] && indegree[k] == 0);
            match next {
                Some(k) => {
                    done[k] = true;
                    order.push(k);
                    for s in self.successors(k) {
                        indegree[s] -= 1;
                    }
                }
                None => {
                    let stuck = (0..n).find(|&k| !done[k]).unwrap_or(0);
                    return Err(Error::CyclicStructure(self.constructs[stuck].id.clone()));
                }
            }
        }
        Ok(order)
    }

    /// Same taxonomy without one task indicator.
    pub fn without_indicator(&self, indicator: &str) -> Result<Taxonomy> {
        let mut constructs = self.constructs.clone();
        let owner = constructs
            .iter_mut()
            .find(|c| c.indicators.iter().any(|i| i == indicator))
            .ok_or_else(|| Error::UnknownId(indicator.to_string()))?;
        owner.indicators.retain(|i| i != indicator);
        Taxonomy::new(constructs, self.paths.clone(), self.external_indicators.clone())
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(TaxonomyDoc {
            constructs: self.constructs.clone(),
            paths: self.paths.clone(),
            external_indicators: self.external_indicators.clone(),
        })
        .expect("taxonomy serializes")
    }
}

/// Parse a taxonomy document and resolve all cross-references.
pub fn parse_taxonomy(text: &str) -> Result<Taxonomy> {
    let doc: TaxonomyDoc = serde_json::from_str(text).map_err(|e| Error::Json(e.to_string()))?;
    Taxonomy::new(doc.constructs, doc.paths, doc.external_indicators)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum MissingPolicy {
    /// Drop every model row with a missing cell in a used column.
    #[default]
    Listwise,
    /// Fail on any missing cell in a used column.
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ColumnScale {
    pub mean: f64,
    pub sd: f64,
}

/// Complete, standardized observations for every indicator the taxonomy
/// uses, with the taxonomy they were validated against.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedDataset {
    model_ids: Vec<String>,
    indicator_ids: Vec<String>,
    values: DMatrix<f64>,
    taxonomy: Taxonomy,
    standardization: Vec<ColumnScale>,
    dropped_models: Vec<String>,
    unused_indicators: Vec<String>,
    column_index: BTreeMap<String, usize>,
}

impl ValidatedDataset {
    pub fn model_ids(&self) -> &[String] {
        &self.model_ids
    }

    pub fn indicator_ids(&self) -> &[String] {
        &self.indicator_ids
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn standardization(&self) -> &[ColumnScale] {
        &self.standardization
    }

    pub fn dropped_models(&self) -> &[String] {
        &self.dropped_models
    }

    pub fn unused_indicators(&self) -> &[String] {
        &self.unused_indicators
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn column_index(&self, indicator: &str) -> Option<usize> {
        self.column_index.get(indicator).copied()
    }

    /// Standardized column for an indicator.
    pub fn column(&self, indicator: &str) -> Option<&[f64]> {
        let j = self.column_index(indicator)?;
        Some(self.column_at(j))
    }

    pub fn column_at(&self, j: usize) -> &[f64] {
        let n = self.n_rows();
        &self.values.as_slice()[j * n..(j + 1) * n]
    }

    /// Columns for `indicators`, in the given order.
    pub fn block(&self, indicators: &[String]) -> Result<DMatrix<f64>> {
        let n = self.n_rows();
        let mut m = DMatrix::zeros(n, indicators.len());
        for (c, id) in indicators.iter().enumerate() {
            let col = self.column(id).ok_or_else(|| Error::UnknownId(id.clone()))?;
            m.column_mut(c).copy_from_slice(col);
        }
        Ok(m)
    }

    /// The dataset with one task indicator removed from both the taxonomy
    /// and the observations. Rows are unchanged.
    pub fn without_indicator(&self, indicator: &str) -> Result<ValidatedDataset> {
        let taxonomy = self.taxonomy.without_indicator(indicator)?;
        let j = self
            .column_index(indicator)
            .ok_or_else(|| Error::UnknownId(indicator.to_string()))?;
        let mut indicator_ids = self.indicator_ids.clone();
        indicator_ids.remove(j);
        let mut standardization = self.standardization.clone();
        standardization.remove(j);
        let values = self.values.clone().remove_column(j);
        let column_index = indicator_ids
            .iter()
            .enumerate()
            .map(|(k, id)| (id.clone(), k))
            .collect();
        let mut unused = self.unused_indicators.clone();
        unused.push(indicator.to_string());
        Ok(ValidatedDataset {
            model_ids: self.model_ids.clone(),
            indicator_ids,
            values,
            taxonomy,
            standardization,
            dropped_models: self.dropped_models.clone(),
            unused_indicators: unused,
            column_index,
        })
    }

    /// The standardized observations as a plain score table.
    pub fn to_score_matrix(&self) -> ScoreMatrix {
        ScoreMatrix::from_dense(self.model_ids.clone(), self.indicator_ids.clone(), &self.values)
            .expect("validated ids are unique")
    }
}

/// Check the score table against the taxonomy, resolve missing cells and
/// z-score every used column (sample standard deviation).
pub fn validate(
    scores: &ScoreMatrix,
    taxonomy: &Taxonomy,
    policy: MissingPolicy,
) -> Result<ValidatedDataset> {
    let indicator_ids = taxonomy.observed_indicators();
    let mut source_cols = Vec::with_capacity(indicator_ids.len());
    for id in &indicator_ids {
        let c = scores
            .indicator_index(id)
            .ok_or_else(|| Error::MissingIndicator(id.clone()))?;
        source_cols.push(c);
    }
    let unused_indicators: Vec<String> = scores
        .indicator_ids()
        .iter()
        .filter(|id| !indicator_ids.contains(id))
        .cloned()
        .collect();

    let mut keep = Vec::new();
    let mut dropped_models = Vec::new();
    let mut missing = 0;
    for r in 0..scores.n_models() {
        let row_missing = source_cols.iter().filter(|&&c| scores.get(r, c).is_none()).count();
        missing += row_missing;
        if row_missing == 0 {
            keep.push(r);
        } else {
            dropped_models.push(scores.model_ids()[r].clone());
        }
    }
    if policy == MissingPolicy::Reject && missing > 0 {
        return Err(Error::MissingCells(missing));
    }
    if keep.len() < 3 {
        return Err(Error::TooFewRows(keep.len()));
    }

    let n = keep.len();
    let mut values = DMatrix::zeros(n, indicator_ids.len());
    let mut standardization = Vec::with_capacity(indicator_ids.len());
    for (j, &c) in source_cols.iter().enumerate() {
        let raw: Vec<f64> = keep.iter().map(|&r| scores.get(r, c).expect("complete row")).collect();
        let z = numerics::standardize(&raw).ok_or_else(|| Error::ZeroVariance(indicator_ids[j].clone()))?;
        standardization.push(ColumnScale {
            mean: numerics::mean(&raw),
            sd: numerics::variance(&raw).sqrt(),
        });
        values.column_mut(j).copy_from_slice(&z);
    }
    let column_index = indicator_ids
        .iter()
        .enumerate()
        .map(|(k, id)| (id.clone(), k))
        .collect();
    Ok(ValidatedDataset {
        model_ids: keep.iter().map(|&r| scores.model_ids()[r].clone()).collect(),
        indicator_ids,
        values,
        taxonomy: taxonomy.clone(),
        standardization,
        dropped_models,
        unused_indicators,
        column_index,
    })
}
