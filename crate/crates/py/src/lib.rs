//! Python bindings. Matrices cross the boundary as lists of rows.

use nalgebra::DMatrix;
use neuroalign::csaa::{self, OptionSet, N_OPTIONS};
use neuroalign::encoding::{self, EmbeddingTensor, EncodeOptions};
use neuroalign::hrf_glm;
use neuroalign::stats::{self, Sidedness, TestResult};
use neuroalign::synth::{self, SynthSpec};
use neuroalign::tensorio::{self, Event, EventTable, TensorFile};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(neuroalign_py, NeuroalignError, PyException);

fn err(e: neuroalign::Error) -> PyErr {
    NeuroalignError::new_err(e.to_string())
}

fn to_matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(NeuroalignError::new_err("rows have unequal lengths"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

type Nested3 = Vec<Vec<Vec<f64>>>;

fn sidedness(two_sided: bool) -> Sidedness {
    if two_sided {
        Sidedness::Two
    } else {
        Sidedness::One
    }
}

fn test_tuple(r: TestResult) -> (f64, f64) {
    (r.statistic, r.p_value)
}

/// Returns (shape, flat row-major data).
#[pyfunction]
fn read_tensor(path: &str) -> PyResult<(Vec<usize>, Vec<f64>)> {
    let t = tensorio::read_tensor(path).map_err(err)?;
    Ok((t.shape, t.data))
}

#[pyfunction]
fn write_tensor(path: &str, shape: Vec<usize>, data: Vec<f64>) -> PyResult<()> {
    let t = TensorFile::new(shape, data).map_err(err)?;
    tensorio::write_tensor(path, &t).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (dt=hrf_glm::FINE_DT))]
fn canonical_hrf(dt: f64) -> PyResult<Vec<f64>> {
    Ok(hrf_glm::canonical_hrf(dt).map_err(err)?.samples)
}

/// Betas (P x V) of an ordinary least-squares fit.
#[pyfunction]
fn ols_fit(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let fit = hrf_glm::ols_fit_matrix(&to_matrix(&x)?, &to_matrix(&y)?).map_err(err)?;
    Ok(to_rows(&fit.betas))
}

/// `events` holds (onset, duration, trial_id, condition) tuples; returns (trial_ids, betas).
#[pyfunction]
#[pyo3(signature = (events, y, tr, drift_order=1))]
fn lss_betas(
    events: Vec<(f64, f64, String, String)>,
    y: Vec<Vec<f64>>,
    tr: f64,
    drift_order: usize,
) -> PyResult<(Vec<String>, Vec<Vec<f64>>)> {
    let table = EventTable::new(
        events
            .into_iter()
            .map(|(onset, duration, trial_id, condition)| Event {
                onset,
                duration,
                trial_id,
                condition,
            })
            .collect(),
    )
    .map_err(err)?;
    let y = to_matrix(&y)?;
    let nuisance = hrf_glm::polynomial_drift(y.nrows(), drift_order);
    let b = hrf_glm::lss_betas(&table, &y, tr, &nuisance).map_err(err)?;
    Ok((b.trial_ids, to_rows(&b.values)))
}

#[pyfunction]
fn ridge_fit(x: Vec<Vec<f64>>, y: Vec<f64>, alpha: f64) -> PyResult<Vec<f64>> {
    let sol = encoding::ridge_fit(&to_matrix(&x)?, &y, alpha).map_err(err)?;
    Ok(sol.beta.iter().copied().collect())
}

/// Cross-validated correlation per layer for an N x L x D embedding given as nested lists.
#[pyfunction]
#[pyo3(signature = (embeddings, y, k=encoding::DEFAULT_K, seed=0))]
fn layerwise_encode(embeddings: Vec<Vec<Vec<f64>>>, y: Vec<f64>, k: usize, seed: u64) -> PyResult<Vec<f64>> {
    let n = embeddings.len();
    let l = embeddings.first().map_or(0, Vec::len);
    let d = embeddings.first().and_then(|s| s.first()).map_or(0, Vec::len);
    let flat: Vec<f64> = embeddings.into_iter().flatten().flatten().collect();
    let x = EmbeddingTensor::new("python", n, l, d, flat).map_err(err)?;
    let opts = EncodeOptions {
        k,
        seed,
        ..Default::default()
    };
    let scores = encoding::layerwise_encode(&x, &y, &opts).map_err(err)?;
    Ok(scores.into_iter().map(|s| s.rho).collect())
}

/// Returns (layer, rho, tied).
#[pyfunction]
fn best_layer(rhos: Vec<f64>) -> PyResult<(usize, f64, bool)> {
    let b = encoding::best_layer(&rhos).map_err(err)?;
    Ok((b.layer, b.rho, b.tied))
}

/// Planted layer-recovery task: returns (embeddings N x L x D, response).
#[pyfunction]
#[pyo3(signature = (n=200, l=6, d=20, true_layer=3, snr=4.0, seed=0))]
fn synthetic_task(
    n: usize,
    l: usize,
    d: usize,
    true_layer: usize,
    snr: f64,
    seed: u64,
) -> PyResult<(Nested3, Vec<f64>)> {
    let spec = SynthSpec {
        n,
        l,
        d,
        true_layer,
        snr,
        seed,
        ..SynthSpec::default()
    };
    let x = synth::gen_embeddings(&spec).map_err(err)?;
    let (y, _) = synth::gen_roi_response(&spec, &x, "sub01", "LH_IFG").map_err(err)?;
    let nested = (0..n)
        .map(|i| {
            (0..l)
                .map(|layer| (0..d).map(|j| x.get(i, layer, j)).collect())
                .collect()
        })
        .collect();
    Ok((nested, y.values))
}

#[pyfunction]
fn cosine_similarity(u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
    csaa::cosine_similarity(&u, &v).map_err(err)
}

/// `items` holds (source, options) pairs with the correct option first; returns (csaa, deltas).
#[pyfunction]
fn csaa_score(items: Vec<(Vec<f64>, Vec<Vec<f64>>)>) -> PyResult<(f64, Vec<u32>)> {
    let sets = items
        .into_iter()
        .enumerate()
        .map(|(i, (source, options))| {
            let options: [Vec<f64>; N_OPTIONS] = options.try_into().map_err(|o: Vec<Vec<f64>>| {
                NeuroalignError::new_err(format!("item {i} has {} options, expected {N_OPTIONS}", o.len()))
            })?;
            OptionSet::new(format!("item{i}"), source, options).map_err(err)
        })
        .collect::<PyResult<Vec<_>>>()?;
    let r = csaa::csaa(&sets).map_err(err)?;
    Ok((r.csaa, r.delta.into_iter().map(u32::from).collect()))
}

/// Returns (r, p).
#[pyfunction]
fn pearson(x: Vec<f64>, y: Vec<f64>) -> PyResult<(f64, f64)> {
    stats::pearson(&x, &y).map(test_tuple).map_err(err)
}

/// Returns (t, p), two-sided.
#[pyfunction]
#[pyo3(signature = (d, mu0=0.0))]
fn one_sample_ttest(d: Vec<f64>, mu0: f64) -> PyResult<(f64, f64)> {
    stats::one_sample_ttest(&d, mu0).map(test_tuple).map_err(err)
}

/// Returns (mean difference, p).
#[pyfunction]
#[pyo3(signature = (d, two_sided=false, seed=0))]
fn sign_flip_test(d: Vec<f64>, two_sided: bool, seed: u64) -> PyResult<(f64, f64)> {
    stats::sign_flip_permutation_test(&d, sidedness(two_sided), seed)
        .map(test_tuple)
        .map_err(err)
}

#[pymodule]
fn neuroalign_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NeuroalignError", m.py().get_type::<NeuroalignError>())?;
    m.add_function(wrap_pyfunction!(read_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(write_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(canonical_hrf, m)?)?;
    m.add_function(wrap_pyfunction!(ols_fit, m)?)?;
    m.add_function(wrap_pyfunction!(lss_betas, m)?)?;
    m.add_function(wrap_pyfunction!(ridge_fit, m)?)?;
    m.add_function(wrap_pyfunction!(layerwise_encode, m)?)?;
    m.add_function(wrap_pyfunction!(best_layer, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_task, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(csaa_score, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(one_sample_ttest, m)?)?;
    m.add_function(wrap_pyfunction!(sign_flip_test, m)?)?;
    Ok(())
}
