//! Layer-wise cross-validated ridge encoding.
//!
//! For every layer the sentence embeddings are regressed onto an ROI
//! response with closed-form ridge regression. The ridge penalty is chosen
//! by an inner cross-validation over the outer-training rows, and the layer
//! score is the mean held-out Pearson correlation over the outer folds.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::roi::RoiResponse;
use crate::special::t_quantile;
use crate::tensorio::TensorFile;

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_INNER_K: usize = 5;
pub const DEFAULT_ALPHA_GRID: [f64; 5] = [1e-3, 1e-2, 1e-1, 1.0, 10.0];

/// Standard deviations at or below this are treated as zero.
const SD_EPS: f64 = 1e-12;

/// Sentence x layer x dimension model representations.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTensor {
    pub model_id: String,
    pub n: usize,
    pub l: usize,
    pub d: usize,
    /// Row-major N x L x D.
    pub values: Vec<f64>,
}

impl EmbeddingTensor {
    pub fn new(model_id: impl Into<String>, n: usize, l: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * l * d {
            return Err(Error::Mismatch(format!(
                "{} values for an {n}x{l}x{d} embedding tensor",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite embedding value at flat index {i}"
            )));
        }
        Ok(EmbeddingTensor {
            model_id: model_id.into(),
            n,
            l,
            d,
            values,
        })
    }

    pub fn from_tensor(model_id: impl Into<String>, t: &TensorFile) -> Result<Self> {
        match t.shape.as_slice() {
            &[n, l, d] => Self::new(model_id, n, l, d, t.data.clone()),
            other => Err(Error::Mismatch(format!(
                "embedding tensor must be N x L x D, got shape {other:?}"
            ))),
        }
    }

    pub fn to_tensor(&self) -> TensorFile {
        TensorFile {
            dtype: crate::tensorio::Dtype::F64,
            shape: vec![self.n, self.l, self.d],
            data: self.values.clone(),
        }
    }

    #[inline]
    pub fn get(&self, i: usize, layer: usize, j: usize) -> f64 {
        self.values[(i * self.l + layer) * self.d + j]
    }

    /// N x D matrix for one layer.
    pub fn layer_matrix(&self, layer: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.d, |i, j| self.get(i, layer, j))
    }
}

// ---------------------------------------------------------------------------
// z-scoring

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population-SD z-score. Constant input is an error, never silent zeros.
pub fn zscore(v: &[f64]) -> Result<Vec<f64>> {
    if v.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "z-score needs at least 2 values, got {}",
            v.len()
        )));
    }
    let m = mean(v);
    let ss: f64 = v.iter().map(|x| (x - m).powi(2)).sum();
    let sample_sd = (ss / (v.len() - 1) as f64).sqrt();
    if !(sample_sd > SD_EPS) {
        return Err(Error::DegenerateVariance(
            "cannot z-score a constant vector".into(),
        ));
    }
    let sd = (ss / v.len() as f64).sqrt();
    Ok(v.iter().map(|x| (x - m) / sd).collect())
}

/// Column-wise affine map fitted on a set of rows.
#[derive(Debug, Clone)]
struct Standardizer {
    mean: Vec<f64>,
    /// Zero marks a constant column, which is mapped to 0.
    inv_sd: Vec<f64>,
}

impl Standardizer {
    fn fit(x: &DMatrix<f64>, rows: &[usize]) -> Self {
        let n = rows.len() as f64;
        let (mut means, mut inv) = (Vec::with_capacity(x.ncols()), Vec::with_capacity(x.ncols()));
        for j in 0..x.ncols() {
            let m = rows.iter().map(|&r| x[(r, j)]).sum::<f64>() / n;
            let var = rows.iter().map(|&r| (x[(r, j)] - m).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            means.push(m);
            inv.push(if sd > SD_EPS { 1.0 / sd } else { 0.0 });
        }
        Standardizer {
            mean: means,
            inv_sd: inv,
        }
    }

    fn apply(&self, x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), x.ncols(), |i, j| {
            (x[(rows[i], j)] - self.mean[j]) * self.inv_sd[j]
        })
    }
}

fn fit_target(y: &[f64], rows: &[usize]) -> Result<(f64, f64)> {
    let vals: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
    let m = mean(&vals);
    let ss: f64 = vals.iter().map(|v| (v - m).powi(2)).sum();
    let sd = (ss / vals.len() as f64).sqrt();
    if vals.len() < 2 || !(sd > SD_EPS) {
        return Err(Error::DegenerateVariance(
            "response is constant within a training fold".into(),
        ));
    }
    Ok((m, sd))
}

// ---------------------------------------------------------------------------
// folds

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub k: usize,
    /// Fold id per sample.
    pub assignment: Vec<usize>,
    pub seed: u64,
}

impl FoldSplit {
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Seeded shuffle of `0..n` chunked into `k` contiguous, near-equal folds.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldSplit> {
    if k < 2 || k > n {
        return Err(Error::InvalidArgument(format!(
            "fold count {k} must lie in [2, {n}]"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![0; n];
    let (base, extra) = (n / k, n % k);
    let mut pos = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for &i in &order[pos..pos + size] {
            assignment[i] = fold;
        }
        pos += size;
    }
    Ok(FoldSplit { k, assignment, seed })
}

fn inner_seed(seed: u64, fold: usize) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(fold as u64 + 1)
}

// ---------------------------------------------------------------------------
// ridge

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeSolution {
    pub beta: DVector<f64>,
    pub alpha: f64,
}

/// (X'X + alpha I)^-1 X'y by Cholesky.
pub fn ridge_fit(x: &DMatrix<f64>, y: &[f64], alpha: f64) -> Result<RidgeSolution> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "ridge alpha must be >= 0, got {alpha}"
        )));
    }
    if x.nrows() == 0 || x.nrows() != y.len() {
        return Err(Error::Mismatch(format!(
            "ridge design has {} rows, target has {}",
            x.nrows(),
            y.len()
        )));
    }
    let gram = x.transpose() * x;
    let xty = x.transpose() * DVector::from_column_slice(y);
    solve_ridge(&gram, &xty, alpha)
}

fn solve_ridge(gram: &DMatrix<f64>, xty: &DVector<f64>, alpha: f64) -> Result<RidgeSolution> {
    let mut a = gram.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += alpha;
    }
    let beta = a
        .cholesky()
        .map(|c| c.solve(xty))
        .ok_or_else(|| Error::SingularDesign(format!("ridge system singular at alpha = {alpha}")))?;
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::SingularDesign(format!(
            "ridge solution not finite at alpha = {alpha}"
        )));
    }
    Ok(RidgeSolution { beta, alpha })
}

/// Pearson correlation; a constant argument yields 0 with a warning.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let denom = (saa * sbb).sqrt();
    if !(denom > 0.0) {
        log::warn!("correlation with a constant vector set to 0");
        return 0.0;
    }
    (sab / denom).clamp(-1.0, 1.0)
}

// ---------------------------------------------------------------------------
// layer-wise encoding

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZScoreMode {
    /// Statistics from training rows only, applied to the held-out rows.
    #[default]
    TrainFold,
    /// Every column z-scored once over all rows before splitting.
    Global,
}

impl FromStr for ZScoreMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" | "train-fold" => Ok(ZScoreMode::TrainFold),
            "global" => Ok(ZScoreMode::Global),
            other => Err(Error::Config(format!("unknown z-score mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodeOptions {
    pub k: usize,
    pub inner_k: usize,
    pub alpha_grid: Vec<f64>,
    pub seed: u64,
    pub zscore: ZScoreMode,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        EncodeOptions {
            k: DEFAULT_K,
            inner_k: DEFAULT_INNER_K,
            alpha_grid: DEFAULT_ALPHA_GRID.to_vec(),
            seed: 0,
            zscore: ZScoreMode::TrainFold,
        }
    }
}

impl EncodeOptions {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("K = {} must be at least 2", self.k)));
        }
        if self.inner_k < 2 {
            return Err(Error::Config(format!(
                "inner K = {} must be at least 2",
                self.inner_k
            )));
        }
        if self.alpha_grid.is_empty() {
            return Err(Error::Config("alpha grid is empty".into()));
        }
        if let Some(a) = self.alpha_grid.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
            return Err(Error::Config(format!("alpha {a} must be finite and >= 0")));
        }
        Ok(())
    }
}

/// Score of one layer for one response vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerScore {
    pub layer: usize,
    /// Mean held-out correlation over the outer folds.
    pub rho: f64,
    pub fold_rhos: Vec<f64>,
    pub fold_alphas: Vec<f64>,
}

impl LayerScore {
    /// Most frequently chosen alpha; ties go to the larger value.
    pub fn modal_alpha(&self) -> f64 {
        let mut counts: Vec<(f64, usize)> = Vec::new();
        for &a in &self.fold_alphas {
            match counts.iter_mut().find(|(v, _)| *v == a) {
                Some((_, c)) => *c += 1,
                None => counts.push((a, 1)),
            }
        }
        counts
            .into_iter()
            .max_by(|x, y| x.1.cmp(&y.1).then(x.0.total_cmp(&y.0)))
            .map(|(a, _)| a)
            .unwrap_or(f64::NAN)
    }
}

/// Everything a single layer's fit needs, prepared once per response.
struct Prepared<'a> {
    y: Vec<f64>,
    folds: FoldSplit,
    inner: Vec<FoldSplit>,
    opts: &'a EncodeOptions,
}

fn prepare<'a>(n: usize, y: &[f64], opts: &'a EncodeOptions) -> Result<Prepared<'a>> {
    opts.validate()?;
    if y.len() != n {
        return Err(Error::Mismatch(format!(
            "response has {} values but embeddings have {n} sentences",
            y.len()
        )));
    }
    if n < 2 * opts.k {
        return Err(Error::InvalidArgument(format!(
            "{n} sentences is fewer than 2K = {}",
            2 * opts.k
        )));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("non-finite response at index {i}")));
    }
    let y = match opts.zscore {
        ZScoreMode::Global => zscore(y)?,
        ZScoreMode::TrainFold => y.to_vec(),
    };
    let folds = make_folds(n, opts.k, opts.seed)?;
    let inner = (0..opts.k)
        .map(|f| {
            let n_train = n - folds.test_rows(f).len();
            make_folds(n_train, opts.inner_k.min(n_train), inner_seed(opts.seed, f))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Prepared {
        y,
        folds,
        inner,
        opts,
    })
}

/// Standardized train design, train target, test design, test target.
type FoldData = (DMatrix<f64>, Vec<f64>, DMatrix<f64>, Vec<f64>);

/// Standardizes train/test rows, returning (X_train, y_train, X_test, y_test).
fn split(x: &DMatrix<f64>, y: &[f64], train: &[usize], test: &[usize], mode: ZScoreMode) -> Result<FoldData> {
    let (ym, ysd) = fit_target(y, train)?;
    let ys = |rows: &[usize]| -> Vec<f64> { rows.iter().map(|&r| (y[r] - ym) / ysd).collect() };
    match mode {
        ZScoreMode::TrainFold => {
            let s = Standardizer::fit(x, train);
            Ok((s.apply(x, train), ys(train), s.apply(x, test), ys(test)))
        }
        ZScoreMode::Global => {
            let pick = |rows: &[usize]| DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)]);
            let yv = |rows: &[usize]| -> Vec<f64> { rows.iter().map(|&r| y[r]).collect() };
            Ok((pick(train), yv(train), pick(test), yv(test)))
        }
    }
}

fn predict(x: &DMatrix<f64>, beta: &DVector<f64>) -> Vec<f64> {
    (x * beta).iter().copied().collect()
}

/// Mean inner-CV correlation for every alpha in the grid.
fn inner_scores(x: &DMatrix<f64>, y: &[f64], inner: &FoldSplit, p: &Prepared) -> Result<Vec<f64>> {
    let mut sums = vec![0.0; p.opts.alpha_grid.len()];
    for f in 0..inner.k {
        let (tr, te) = (inner.train_rows(f), inner.test_rows(f));
        let (xtr, ytr, xte, yte) = split(x, y, &tr, &te, p.opts.zscore)?;
        let gram = xtr.transpose() * &xtr;
        let xty = xtr.transpose() * DVector::from_vec(ytr);
        for (s, &alpha) in sums.iter_mut().zip(&p.opts.alpha_grid) {
            let sol = solve_ridge(&gram, &xty, alpha)?;
            *s += correlation(&yte, &predict(&xte, &sol.beta));
        }
    }
    Ok(sums.into_iter().map(|s| s / inner.k as f64).collect())
}

/// Best alpha by score; equal scores resolve to the larger alpha.
fn choose_alpha(grid: &[f64], scores: &[f64]) -> f64 {
    let mut best = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (&a, &s) in grid.iter().zip(scores) {
        if s > best.1 || (s == best.1 && a > best.0) {
            best = (a, s);
        }
    }
    best.0
}

fn encode_prepared(x: &DMatrix<f64>, layer: usize, p: &Prepared) -> Result<LayerScore> {
    let global;
    let x = match p.opts.zscore {
        ZScoreMode::TrainFold => x,
        ZScoreMode::Global => {
            let all: Vec<usize> = (0..x.nrows()).collect();
            global = Standardizer::fit(x, &all).apply(x, &all);
            &global
        }
    };
    let mut fold_rhos = Vec::with_capacity(p.folds.k);
    let mut fold_alphas = Vec::with_capacity(p.folds.k);
    for f in 0..p.folds.k {
        let (train, test) = (p.folds.train_rows(f), p.folds.test_rows(f));
        let alpha = if p.opts.alpha_grid.len() == 1 {
            p.opts.alpha_grid[0]
        } else {
            // inner folds index into the outer-training rows
            let xtrain = DMatrix::from_fn(train.len(), x.ncols(), |i, j| x[(train[i], j)]);
            let ytrain: Vec<f64> = train.iter().map(|&r| p.y[r]).collect();
            let scores = inner_scores(&xtrain, &ytrain, &p.inner[f], p)?;
            choose_alpha(&p.opts.alpha_grid, &scores)
        };
        let (xtr, ytr, xte, yte) = split(x, &p.y, &train, &test, p.opts.zscore)?;
        let sol = ridge_fit(&xtr, &ytr, alpha)?;
        fold_rhos.push(correlation(&yte, &predict(&xte, &sol.beta)));
        fold_alphas.push(alpha);
    }
    let rho = fold_rhos.iter().sum::<f64>() / fold_rhos.len() as f64;
    Ok(LayerScore {
        layer,
        rho,
        fold_rhos,
        fold_alphas,
    })
}

/// Scores a single layer.
pub fn encode_layer(
    x: &EmbeddingTensor,
    y: &[f64],
    layer: usize,
    opts: &EncodeOptions,
) -> Result<LayerScore> {
    if layer >= x.l {
        return Err(Error::InvalidArgument(format!("layer {layer} >= L = {}", x.l)));
    }
    let p = prepare(x.n, y, opts)?;
    encode_prepared(&x.layer_matrix(layer), layer, &p)
}

/// Scores every layer of `x` against `y`, in layer order.
pub fn layerwise_encode(x: &EmbeddingTensor, y: &[f64], opts: &EncodeOptions) -> Result<Vec<LayerScore>> {
    let p = prepare(x.n, y, opts)?;
    (0..x.l)
        .map(|l| encode_prepared(&x.layer_matrix(l), l, &p))
        .collect()
}

// ---------------------------------------------------------------------------
// results across subjects / ROIs / models

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub model: String,
    pub subject: String,
    pub roi: String,
    pub layer: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EncodingResult {
    pub cells: BTreeMap<CellKey, LayerScore>,
}

impl EncodingResult {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn insert(&mut self, key: CellKey, score: LayerScore) {
        self.cells.insert(key, score);
    }

    pub fn models(&self) -> Vec<String> {
        self.cells
            .keys()
            .map(|k| k.model.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn subjects(&self, model: &str) -> Vec<String> {
        self.cells
            .keys()
            .filter(|k| k.model == model)
            .map(|k| k.subject.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn rois(&self, model: &str) -> Vec<String> {
        self.cells
            .keys()
            .filter(|k| k.model == model)
            .map(|k| k.roi.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// rho by layer for one (model, subject, roi); layers must be contiguous from 0.
    pub fn curve(&self, model: &str, subject: &str, roi: &str) -> Option<Vec<f64>> {
        let pts: Vec<(usize, f64)> = self
            .cells
            .iter()
            .filter(|(k, _)| k.model == model && k.subject == subject && k.roi == roi)
            .map(|(k, v)| (k.layer, v.rho))
            .collect();
        if pts.is_empty() || pts.iter().enumerate().any(|(i, (l, _))| i != *l) {
            return None;
        }
        Some(pts.into_iter().map(|(_, r)| r).collect())
    }

    /// Subject-averaged rho by layer for one (model, roi).
    pub fn mean_curve(&self, model: &str, roi: &str) -> Option<Vec<f64>> {
        let curves: Vec<Vec<f64>> = self
            .subjects(model)
            .iter()
            .filter_map(|s| self.curve(model, s, roi))
            .collect();
        let first = curves.first()?;
        if curves.iter().any(|c| c.len() != first.len()) {
            return None;
        }
        let n = curves.len() as f64;
        Some(
            (0..first.len())
                .map(|l| curves.iter().map(|c| c[l]).sum::<f64>() / n)
                .collect(),
        )
    }
}

/// One unit of parallel work: a response vector against one model's layer.
#[derive(Debug, Clone, Copy)]
pub struct CellTask<'a> {
    pub embeddings: &'a EmbeddingTensor,
    pub response: &'a RoiResponse,
    pub layer: usize,
}

/// Runs every (model, subject, ROI, layer) cell. Results are keyed and
/// sorted, so the output does not depend on how rayon schedules the cells.
pub fn encode_all(
    embeddings: &[EmbeddingTensor],
    responses: &[RoiResponse],
    opts: &EncodeOptions,
) -> Result<EncodingResult> {
    opts.validate()?;
    for e in embeddings {
        for r in responses {
            if r.values.len() != e.n {
                return Err(Error::Mismatch(format!(
                    "response {} has {} values but model {} has {} sentences",
                    r.file_name(),
                    r.values.len(),
                    e.model_id,
                    e.n
                )));
            }
        }
    }
    let tasks: Vec<CellTask> = embeddings
        .iter()
        .flat_map(|e| {
            responses.iter().flat_map(move |r| {
                (0..e.l).map(move |layer| CellTask {
                    embeddings: e,
                    response: r,
                    layer,
                })
            })
        })
        .collect();
    let scored: Vec<Result<(CellKey, LayerScore)>> = tasks
        .par_iter()
        .map(|t| {
            let score = encode_layer(t.embeddings, &t.response.values, t.layer, opts)?;
            Ok((
                CellKey {
                    model: t.embeddings.model_id.clone(),
                    subject: t.response.subject_id.clone(),
                    roi: t.response.roi_name.clone(),
                    layer: t.layer,
                },
                score,
            ))
        })
        .collect();
    let mut result = EncodingResult::default();
    for r in scored {
        let (k, v) = r?;
        result.insert(k, v);
    }
    Ok(result)
}

// ---------------------------------------------------------------------------
// best layer and layer curves

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestLayer {
    pub layer: usize,
    pub rho: f64,
    /// Another layer reached the same maximum.
    pub tied: bool,
}

/// argmax over layers; ties go to the lower layer and are flagged.
pub fn best_layer(rhos: &[f64]) -> Result<BestLayer> {
    let (first, rest) = rhos
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("best layer of an empty curve".into()))?;
    let mut best = BestLayer {
        layer: 0,
        rho: *first,
        tied: false,
    };
    for (i, &r) in rest.iter().enumerate() {
        if r > best.rho {
            best = BestLayer {
                layer: i + 1,
                rho: r,
                tied: false,
            };
        } else if r == best.rho {
            best.tied = true;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveSummary {
    pub n: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl CurveSummary {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_high - self.ci_low)
    }
}

/// Mean and t-based 95% confidence interval of per-subject values.
pub fn summarize_values(values: &[f64]) -> Result<CurveSummary> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "confidence interval needs at least 2 subjects, got {n}"
        )));
    }
    if values.iter().all(|&v| v == values[0]) {
        return Ok(CurveSummary {
            n,
            mean: values[0],
            ci_low: values[0],
            ci_high: values[0],
        });
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let h = t_quantile(0.975, (n - 1) as f64) * se;
    Ok(CurveSummary {
        n,
        mean: m,
        ci_low: m - h,
        ci_high: m + h,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub model: String,
    pub roi: String,
    pub layer: usize,
    pub summary: CurveSummary,
}

/// Per (model, roi, layer) subject mean and 95% CI, in sorted key order.
pub fn layer_curve_summary(result: &EncodingResult) -> Result<Vec<CurveRow>> {
    let mut groups: BTreeMap<(String, String, usize), Vec<f64>> = BTreeMap::new();
    for (k, v) in &result.cells {
        groups
            .entry((k.model.clone(), k.roi.clone(), k.layer))
            .or_default()
            .push(v.rho);
    }
    groups
        .into_iter()
        .map(|((model, roi, layer), vals)| {
            let summary = summarize_values(&vals).map_err(|_| {
                Error::InvalidArgument(format!(
                    "{model}/{roi} layer {layer}: need at least 2 subjects for a CI, got {}",
                    vals.len()
                ))
            })?;
            Ok(CurveRow {
                model,
                roi,
                layer,
                summary,
            })
        })
        .collect()
}
