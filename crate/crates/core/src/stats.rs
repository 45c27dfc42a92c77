//! Inferential statistics for model comparison and hemispheric asymmetry.
//!
//! p-values come from the Student-t distribution via the continued-fraction
//! incomplete beta in [`crate::special`]; the paired model comparison uses an
//! exact sign-flip permutation test.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoding::{best_layer, EncodingResult};
use crate::error::{Error, Result};
use crate::special::{t_sf, t_two_sided_p};

/// Exact enumeration is used up to this many paired differences.
pub const EXACT_MAX_N: usize = 20;
pub const MONTE_CARLO_FLIPS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sidedness {
    /// H1: statistic greater than the null value.
    One,
    Two,
}

impl Sidedness {
    pub fn as_str(self) -> &'static str {
        match self {
            Sidedness::One => "one",
            Sidedness::Two => "two",
        }
    }
}

impl fmt::Display for Sidedness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Sidedness {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one" | "greater" => Ok(Sidedness::One),
            "two" => Ok(Sidedness::Two),
            other => Err(Error::Config(format!("unknown sidedness {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Pearson,
    OneSampleT,
    SignFlipExact,
    SignFlipMonteCarlo,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Pearson => "pearson",
            Method::OneSampleT => "one_sample_t",
            Method::SignFlipExact => "sign_flip_exact",
            Method::SignFlipMonteCarlo => "sign_flip_monte_carlo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub method: Method,
    pub sidedness: Sidedness,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

/// Pearson r with a two-sided p-value from t = r sqrt((n-2)/(1-r^2)).
pub fn pearson(x: &[f64], y: &[f64]) -> Result<TestResult> {
    let n = x.len();
    if y.len() != n {
        return Err(Error::Mismatch(format!("pearson of lengths {n} and {}", y.len())));
    }
    if n < 3 {
        return Err(Error::InvalidArgument(format!("pearson needs n >= 3, got {n}")));
    }
    if is_constant(x) || is_constant(y) {
        return Err(Error::DegenerateVariance("pearson with a constant input".into()));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return Err(Error::DegenerateVariance("pearson with a constant input".into()));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        t_two_sided_p(r * (df / (1.0 - r * r)).sqrt(), df)
    };
    Ok(TestResult {
        statistic: r,
        p_value: p,
        n,
        method: Method::Pearson,
        sidedness: Sidedness::Two,
    })
}

/// Two-sided one-sample t-test of mean(d) against `mu0`.
pub fn one_sample_ttest(d: &[f64], mu0: f64) -> Result<TestResult> {
    let n = d.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("t-test needs n >= 2, got {n}")));
    }
    if is_constant(d) {
        return Err(Error::DegenerateVariance("t-test on zero-variance data".into()));
    }
    let m = mean(d);
    let sd = (d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let t = (m - mu0) / (sd / (n as f64).sqrt());
    Ok(TestResult {
        statistic: t,
        p_value: t_two_sided_p(t, (n - 1) as f64),
        n,
        method: Method::OneSampleT,
        sidedness: Sidedness::Two,
    })
}

/// One-sided upper-tail variant of [`one_sample_ttest`].
pub fn one_sample_ttest_greater(d: &[f64], mu0: f64) -> Result<TestResult> {
    let two = one_sample_ttest(d, mu0)?;
    Ok(TestResult {
        p_value: t_sf(two.statistic, (two.n - 1) as f64),
        sidedness: Sidedness::One,
        ..two
    })
}

/// Sign-flip permutation test on paired differences, statistic mean(d).
///
/// Up to [`EXACT_MAX_N`] values every one of the 2^n sign assignments is
/// enumerated; beyond that [`MONTE_CARLO_FLIPS`] seeded random assignments
/// are drawn and the observed assignment is added to the count. One-sided
/// tests count assignments whose mean is at least the observed mean.
pub fn sign_flip_permutation_test(d: &[f64], sidedness: Sidedness, seed: u64) -> Result<TestResult> {
    let n = d.len();
    if n == 0 {
        return Err(Error::InvalidArgument(
            "permutation test of no differences".into(),
        ));
    }
    if let Some(i) = d.iter().position(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("non-finite difference at index {i}")));
    }
    let observed: f64 = d.iter().sum();
    // sums that differ only by rounding count as ties
    let tol = 1e-12 * d.iter().map(|v| v.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    let extreme = |s: f64| match sidedness {
        Sidedness::One => s >= observed - tol,
        Sidedness::Two => s.abs() >= observed.abs() - tol,
    };
    let (count, total, method) = if n <= EXACT_MAX_N {
        let mut count = 0u64;
        for mask in 0u64..(1u64 << n) {
            let s: f64 = d
                .iter()
                .enumerate()
                .map(|(i, &v)| if mask >> i & 1 == 1 { -v } else { v })
                .sum();
            if extreme(s) {
                count += 1;
            }
        }
        (count, 1u64 << n, Method::SignFlipExact)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut count = 1u64;
        for _ in 0..MONTE_CARLO_FLIPS {
            let s: f64 = d.iter().map(|&v| if rng.random::<bool>() { -v } else { v }).sum();
            if extreme(s) {
                count += 1;
            }
        }
        (count, MONTE_CARLO_FLIPS as u64 + 1, Method::SignFlipMonteCarlo)
    };
    Ok(TestResult {
        statistic: observed / n as f64,
        p_value: count as f64 / total as f64,
        n,
        method,
        sidedness,
    })
}

/// Paired values per unit, e.g. instruction-tuned (`a`) and base (`b`) models.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub labels: Vec<String>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl PairedSample {
    pub fn new(labels: Vec<String>, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() || labels.len() != a.len() {
            return Err(Error::Mismatch(format!(
                "paired sample with {} labels, {} and {} values",
                labels.len(),
                a.len(),
                b.len()
            )));
        }
        if a.len() < 2 {
            return Err(Error::InvalidArgument(
                "paired sample needs at least 2 pairs".into(),
            ));
        }
        let mut seen = HashSet::new();
        if let Some(l) = labels.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(Error::Validation(format!("duplicate pair label {l:?}")));
        }
        Ok(PairedSample { labels, a, b })
    }

    pub fn differences(&self) -> Vec<f64> {
        self.a.iter().zip(&self.b).map(|(x, y)| x - y).collect()
    }
}

/// One-sided sign-flip test of `a > b`.
pub fn paired_permutation_test(sample: &PairedSample, seed: u64) -> Result<TestResult> {
    sign_flip_permutation_test(&sample.differences(), Sidedness::One, seed)
}

// ---------------------------------------------------------------------------
// hemispheric asymmetry

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitAxis {
    /// One difference per model, from subject-averaged layer curves.
    Model,
    /// One difference per (model, subject).
    Subject,
}

impl UnitAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            UnitAxis::Model => "model",
            UnitAxis::Subject => "subject",
        }
    }
}

impl FromStr for UnitAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "model" => Ok(UnitAxis::Model),
            "subject" => Ok(UnitAxis::Subject),
            other => Err(Error::Config(format!("unknown unit axis {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RoiPair {
    pub lh: String,
    pub rh: String,
}

impl RoiPair {
    pub fn new(lh: impl Into<String>, rh: impl Into<String>) -> Self {
        RoiPair {
            lh: lh.into(),
            rh: rh.into(),
        }
    }

    /// Region name when both sides share it (`LH_IFG`/`RH_IFG` -> `IFG`).
    pub fn label(&self) -> String {
        match (self.lh.split_once('_'), self.rh.split_once('_')) {
            (Some((_, a)), Some((_, b))) if a == b => a.to_string(),
            _ => format!("{}-{}", self.lh, self.rh),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymmetryVector {
    pub units: Vec<String>,
    /// best-layer rho(LH) - best-layer rho(RH), aligned with `units`.
    pub diffs: Vec<f64>,
}

/// Left-minus-right best-layer encoding scores per unit, ordered by unit label.
pub fn lh_rh_asymmetry(
    results: &EncodingResult,
    pairs: &[RoiPair],
    per: UnitAxis,
) -> Result<BTreeMap<RoiPair, AsymmetryVector>> {
    let mut out = BTreeMap::new();
    for pair in pairs {
        let mut rows: Vec<(String, f64)> = Vec::new();
        for model in results.models() {
            match per {
                UnitAxis::Model => {
                    let curve = |roi: &str| {
                        results.mean_curve(&model, roi).ok_or_else(|| {
                            Error::Validation(format!("model {model}: no cells for ROI {roi}"))
                        })
                    };
                    let lh = best_layer(&curve(&pair.lh)?)?.rho;
                    let rh = best_layer(&curve(&pair.rh)?)?.rho;
                    rows.push((model.clone(), lh - rh));
                }
                UnitAxis::Subject => {
                    for subject in results.subjects(&model) {
                        let curve = |roi: &str| {
                            results.curve(&model, &subject, roi).ok_or_else(|| {
                                Error::Validation(format!(
                                    "model {model}, subject {subject}: no cells for ROI {roi}"
                                ))
                            })
                        };
                        let lh = best_layer(&curve(&pair.lh)?)?.rho;
                        let rh = best_layer(&curve(&pair.rh)?)?.rho;
                        rows.push((format!("{model}/{subject}"), lh - rh));
                    }
                }
            }
        }
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        out.insert(
            pair.clone(),
            AsymmetryVector {
                units: rows.iter().map(|r| r.0.clone()).collect(),
                diffs: rows.iter().map(|r| r.1).collect(),
            },
        );
    }
    Ok(out)
}

/// Pearson correlation of each pair's asymmetry with per-unit performance.
pub fn asymmetry_performance_association(
    diffs: &BTreeMap<RoiPair, AsymmetryVector>,
    performance: &BTreeMap<String, f64>,
) -> Result<BTreeMap<RoiPair, TestResult>> {
    let mut out = BTreeMap::new();
    for (pair, asym) in diffs {
        let perf = asym
            .units
            .iter()
            .map(|u| {
                performance
                    .get(u)
                    .copied()
                    .ok_or_else(|| Error::Validation(format!("no performance score for unit {u:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if performance.len() != asym.units.len() {
            let extra: Vec<&String> = performance.keys().filter(|k| !asym.units.contains(k)).collect();
            return Err(Error::Validation(format!(
                "performance units {extra:?} have no asymmetry values"
            )));
        }
        out.insert(pair.clone(), pearson(&asym.diffs, &perf)?);
    }
    Ok(out)
}
