//! Canonical HRF, design matrices, mass-univariate OLS, contrast t-maps and
//! least-squares-separate (LS-S) single-trial betas.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, RANK_TOL};
use crate::special::gamma_pdf;
use crate::tensorio::{Event, EventTable};

/// Double-gamma parameters (SPM defaults), all in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HrfParams {
    pub peak_delay: f64,
    pub undershoot_delay: f64,
    pub peak_dispersion: f64,
    pub undershoot_dispersion: f64,
    /// Peak-to-undershoot amplitude ratio.
    pub ratio: f64,
    pub length: f64,
}

pub const SPM_HRF: HrfParams = HrfParams {
    peak_delay: 6.0,
    undershoot_delay: 16.0,
    peak_dispersion: 1.0,
    undershoot_dispersion: 1.0,
    ratio: 6.0,
    length: 32.0,
};

/// Grid on which event boxcars are convolved before resampling at the TR.
pub const FINE_DT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct HrfKernel {
    pub dt: f64,
    /// h(0), h(dt), ..., h(length); peak-normalized to 1.
    pub samples: Vec<f64>,
}

impl HrfKernel {
    pub fn peak_time(&self) -> f64 {
        let (i, _) = self
            .samples
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
            );
        i as f64 * self.dt
    }

    fn at(&self, i: isize) -> f64 {
        if i < 0 {
            0.0
        } else {
            self.samples.get(i as usize).copied().unwrap_or(0.0)
        }
    }
}

/// Unnormalized double-gamma response at time `t` seconds.
pub fn double_gamma(t: f64, p: &HrfParams) -> f64 {
    let a1 = p.peak_delay / p.peak_dispersion;
    let a2 = p.undershoot_delay / p.undershoot_dispersion;
    gamma_pdf(t, a1, p.peak_dispersion) - gamma_pdf(t, a2, p.undershoot_dispersion) / p.ratio
}

pub fn canonical_hrf(dt: f64) -> Result<HrfKernel> {
    if !(dt > 0.0 && dt <= 2.0) {
        return Err(Error::InvalidArgument(format!(
            "HRF sampling interval {dt} outside (0, 2] s"
        )));
    }
    let p = SPM_HRF;
    let n = (p.length / dt + 1e-9).floor() as usize + 1;
    let mut samples: Vec<f64> = (0..n).map(|i| double_gamma(i as f64 * dt, &p)).collect();
    let peak = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for s in &mut samples {
        *s /= peak;
    }
    Ok(HrfKernel { dt, samples })
}

/// Regressor for a single event: a unit-height boxcar on the fine grid
/// (one sample for instantaneous events) convolved with `kernel`, then
/// linearly interpolated at scan times `0, tr, 2 tr, ...`.
pub fn event_regressor(event: &Event, n_scans: usize, tr: f64, kernel: &HrfKernel) -> Vec<f64> {
    let dt = kernel.dt;
    let start = (event.onset / dt).round() as isize;
    let width = ((event.duration / dt).round() as isize).max(1);
    let fine = |j: isize| -> f64 {
        let lo = (j - start - width + 1).max(0);
        let hi = j - start;
        if hi < 0 {
            return 0.0;
        }
        // samples s in [start, start + width) contribute kernel[j - s]
        (lo..=hi).map(|k| kernel.at(k)).sum()
    };
    let support_end = (start + width) as f64 * dt + kernel.samples.len() as f64 * dt;
    (0..n_scans)
        .map(|t| {
            let time = t as f64 * tr;
            if time + tr < event.onset || time > support_end + tr {
                return 0.0;
            }
            let pos = time / dt;
            let snapped = pos.round();
            if (pos - snapped).abs() < 1e-9 {
                fine(snapped as isize)
            } else {
                let j0 = pos.floor();
                let w = pos - j0;
                (1.0 - w) * fine(j0 as isize) + w * fine(j0 as isize + 1)
            }
        })
        .collect()
}

/// Legendre polynomials of degree 1..=order on an evenly spaced [-1, 1] grid.
pub fn polynomial_drift(n_scans: usize, order: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n_scans, order);
    for t in 0..n_scans {
        let x = if n_scans > 1 {
            -1.0 + 2.0 * t as f64 / (n_scans - 1) as f64
        } else {
            0.0
        };
        let (mut p_prev, mut p) = (1.0, x);
        for k in 1..=order {
            m[(t, k - 1)] = p;
            let kf = k as f64;
            let next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
            p_prev = p;
            p = next;
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    /// T x P.
    pub values: DMatrix<f64>,
    pub column_labels: Vec<String>,
    /// Leading condition columns; nuisance columns and the intercept follow.
    pub n_conditions: usize,
}

impl DesignMatrix {
    pub fn n_scans(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_columns(&self) -> usize {
        self.values.ncols()
    }

    fn from_columns(
        n_scans: usize,
        conditions: Vec<(String, Vec<f64>)>,
        nuisance: &DMatrix<f64>,
    ) -> Result<Self> {
        let n_conditions = conditions.len();
        let p = n_conditions + nuisance.ncols() + 1;
        let mut values = DMatrix::zeros(n_scans, p);
        let mut labels = Vec::with_capacity(p);
        for (j, (label, col)) in conditions.into_iter().enumerate() {
            values.set_column(j, &DVector::from_vec(col));
            labels.push(label);
        }
        for m in 0..nuisance.ncols() {
            values.set_column(n_conditions + m, &nuisance.column(m));
            labels.push(format!("nuisance_{m}"));
        }
        values.column_mut(p - 1).fill(1.0);
        labels.push("intercept".to_string());
        for (j, label) in labels.iter().enumerate() {
            if values.column(j).iter().all(|&v| v == 0.0) {
                return Err(Error::Validation(format!("design column {label:?} is all zeros")));
            }
        }
        Ok(DesignMatrix {
            values,
            column_labels: labels,
            n_conditions,
        })
    }
}

fn check_scan_inputs(events: &EventTable, n_scans: usize, tr: f64, nuisance: &DMatrix<f64>) -> Result<()> {
    if !(tr > 0.0 && tr.is_finite()) {
        return Err(Error::InvalidArgument(format!("TR must be positive, got {tr}")));
    }
    if nuisance.nrows() != n_scans {
        return Err(Error::Mismatch(format!(
            "nuisance has {} rows but the run has {n_scans} scans",
            nuisance.nrows()
        )));
    }
    let scan_end = n_scans as f64 * tr;
    for ev in &events.events {
        if ev.onset >= scan_end {
            return Err(Error::Validation(format!(
                "trial {:?} onset {} s is beyond the scan ({} s)",
                ev.trial_id, ev.onset, scan_end
            )));
        }
    }
    Ok(())
}

/// One HRF-convolved column per condition (in order of first appearance),
/// then the nuisance columns, then an intercept.
pub fn build_design_matrix(
    events: &EventTable,
    n_scans: usize,
    tr: f64,
    nuisance: &DMatrix<f64>,
) -> Result<DesignMatrix> {
    events.validate()?;
    check_scan_inputs(events, n_scans, tr, nuisance)?;
    if events.is_empty() && nuisance.ncols() == 0 {
        return Err(Error::Validation(
            "no events and no nuisance regressors: design is intercept-only".into(),
        ));
    }
    let kernel = canonical_hrf(FINE_DT)?;
    let conditions = events
        .conditions()
        .into_iter()
        .map(|cond| {
            let mut col = vec![0.0; n_scans];
            for ev in events.events.iter().filter(|e| e.condition == cond) {
                for (c, r) in col.iter_mut().zip(event_regressor(ev, n_scans, tr, &kernel)) {
                    *c += r;
                }
            }
            (cond, col)
        })
        .collect();
    DesignMatrix::from_columns(n_scans, conditions, nuisance)
}

/// Relative residual norm below which a voxel is treated as fit exactly.
pub const EXACT_FIT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    /// P x V.
    pub betas: DMatrix<f64>,
    /// Residual variance per voxel.
    pub sigma2: Vec<f64>,
    /// T - rank(X).
    pub dof: usize,
}

pub fn ols_fit(x: &DesignMatrix, y: &DMatrix<f64>) -> Result<GlmFit> {
    ols_fit_matrix(&x.values, y)
}

pub fn ols_fit_matrix(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<GlmFit> {
    let (t, p) = x.shape();
    if y.nrows() != t {
        return Err(Error::Mismatch(format!(
            "design has {t} rows but data has {}",
            y.nrows()
        )));
    }
    if t < p {
        return Err(Error::SingularDesign(format!("{t} scans for {p} regressors")));
    }
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > RANK_TOL * smax)
        .count();
    if rank < p {
        return Err(Error::SingularDesign(format!("design rank {rank} < {p} columns")));
    }
    let dof = t - rank;
    if dof == 0 {
        return Err(Error::SingularDesign("no residual degrees of freedom".into()));
    }
    let betas = svd
        .solve(y, RANK_TOL * smax)
        .map_err(|e| Error::SingularDesign(e.to_string()))?;
    let resid = y - x * &betas;
    // residuals at rounding level relative to the data count as an exact fit
    let sigma2 = resid
        .column_iter()
        .zip(y.column_iter())
        .map(|(r, yv)| {
            let rss = r.norm_squared();
            if rss <= EXACT_FIT_TOL * EXACT_FIT_TOL * yv.norm_squared() {
                0.0
            } else {
                rss / dof as f64
            }
        })
        .collect();
    Ok(GlmFit { betas, sigma2, dof })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastVector {
    pub weights: Vec<f64>,
}

impl ContrastVector {
    pub fn new(weights: Vec<f64>) -> Self {
        ContrastVector { weights }
    }

    /// Unit weight on column `j` of a `p`-column design.
    pub fn unit(p: usize, j: usize) -> Self {
        let mut w = vec![0.0; p];
        w[j] = 1.0;
        ContrastVector { weights: w }
    }
}

/// t_v = c'b_v / sqrt(s2_v c'(X'X)^-1 c).
pub fn t_statistics(fit: &GlmFit, x: &DesignMatrix, c: &ContrastVector) -> Result<Vec<f64>> {
    let p = x.n_columns();
    if c.weights.len() != p || fit.betas.nrows() != p {
        return Err(Error::Mismatch(format!(
            "contrast length {} vs {p} design columns",
            c.weights.len()
        )));
    }
    if let Some(v) = fit.sigma2.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::DegenerateVariance(format!(
            "voxel {v} has zero residual variance"
        )));
    }
    if c.weights.iter().all(|&w| w == 0.0) {
        return Ok(vec![0.0; fit.sigma2.len()]);
    }
    let cv = DVector::from_column_slice(&c.weights);
    let xtx = x.values.transpose() * &x.values;
    let solved = linalg::spd_solve_vec(xtx, &cv)
        .ok_or_else(|| Error::SingularDesign("X'X is not positive definite".into()))?;
    let q = cv.dot(&solved);
    if !(q > 0.0) {
        return Err(Error::DegenerateVariance(
            "contrast variance c'(X'X)^-1 c is zero".into(),
        ));
    }
    let effects = fit.betas.transpose() * &cv;
    Ok(effects
        .iter()
        .zip(&fit.sigma2)
        .map(|(&e, &s2)| e / (s2 * q).sqrt())
        .collect())
}

/// Trials x voxels single-trial estimates, rows in event-table order.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaMap {
    pub trial_ids: Vec<String>,
    pub values: DMatrix<f64>,
}

impl BetaMap {
    pub fn n_trials(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_voxels(&self) -> usize {
        self.values.ncols()
    }
}

/// Least-squares-separate estimation: for every trial a design holding that
/// trial alone, all remaining trials merged into a second regressor, the
/// nuisance columns and an intercept. Row i of the result is the first
/// regressor's beta from trial i's fit.
pub fn lss_betas(events: &EventTable, y: &DMatrix<f64>, tr: f64, nuisance: &DMatrix<f64>) -> Result<BetaMap> {
    events.validate()?;
    let n_scans = y.nrows();
    check_scan_inputs(events, n_scans, tr, nuisance)?;
    if events.is_empty() {
        return Err(Error::Validation("LS-S needs at least one trial".into()));
    }
    let kernel = canonical_hrf(FINE_DT)?;
    let regressors: Vec<Vec<f64>> = events
        .events
        .iter()
        .map(|ev| event_regressor(ev, n_scans, tr, &kernel))
        .collect();
    let mut total = vec![0.0; n_scans];
    for r in &regressors {
        for (t, v) in total.iter_mut().zip(r) {
            *t += v;
        }
    }
    let single = events.len() == 1;
    let rows: Vec<Result<Vec<f64>>> = events
        .events
        .par_iter()
        .zip(regressors.par_iter())
        .map(|(ev, target)| {
            let mut cols = vec![(ev.trial_id.clone(), target.clone())];
            if !single {
                let others = total
                    .iter()
                    .zip(target)
                    .map(|(&tot, &r)| if r == 0.0 { tot } else { tot - r })
                    .collect();
                cols.push(("others".to_string(), others));
            }
            let design = DesignMatrix::from_columns(n_scans, cols, nuisance)
                .map_err(|e| Error::SingularDesign(format!("trial {:?}: {e}", ev.trial_id)))?;
            let fit = ols_fit(&design, y).map_err(|e| match e {
                Error::SingularDesign(msg) => {
                    Error::SingularDesign(format!("trial {:?}: {msg}", ev.trial_id))
                }
                other => other,
            })?;
            Ok(fit.betas.row(0).iter().copied().collect())
        })
        .collect();
    let n_vox = y.ncols();
    let mut values = DMatrix::zeros(events.len(), n_vox);
    for (i, row) in rows.into_iter().enumerate() {
        let row = row?;
        for (v, b) in row.into_iter().enumerate() {
            values[(i, v)] = b;
        }
    }
    Ok(BetaMap {
        trial_ids: events.events.iter().map(|e| e.trial_id.clone()).collect(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ev(id: &str, onset: f64, cond: &str) -> Event {
        Event {
            trial_id: id.into(),
            onset,
            duration: 0.0,
            condition: cond.into(),
        }
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn hrf_basic_shape() {
        let k = canonical_hrf(0.1).unwrap();
        assert_eq!(k.samples.len(), 321);
        assert_eq!(k.samples[0], 0.0);
        let max = k.samples.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(max, 1.0);
        let peak = k.peak_time();
        assert!((4.8..=5.2).contains(&peak), "peak at {peak}");
        // undershoot
        assert!(k.samples.iter().any(|&v| v < 0.0));
    }

    #[test]
    fn hrf_rejects_bad_dt() {
        for dt in [0.0, -0.1, 2.5, f64::NAN] {
            assert!(canonical_hrf(dt).is_err());
        }
        assert!(canonical_hrf(2.0).is_ok());
    }

    #[test]
    fn design_column_counts() {
        let events = EventTable::new(vec![ev("a", 0.0, "x"), ev("b", 10.0, "y")]).unwrap();
        let nuis = polynomial_drift(40, 2);
        let d = build_design_matrix(&events, 40, 2.0, &nuis).unwrap();
        assert_eq!(d.n_columns(), 5);
        assert_eq!(d.n_conditions, 2);
        assert_eq!(d.column_labels[4], "intercept");
    }

    #[test]
    fn design_without_events() {
        let empty = EventTable::default();
        let d = build_design_matrix(&empty, 20, 2.0, &polynomial_drift(20, 1)).unwrap();
        assert_eq!(d.n_columns(), 2);
        assert_eq!(d.n_conditions, 0);
        assert!(build_design_matrix(&empty, 20, 2.0, &DMatrix::zeros(20, 0)).is_err());
    }

    #[test]
    fn design_rejects_late_onset() {
        let events = EventTable::new(vec![ev("a", 40.0, "x")]).unwrap();
        assert!(build_design_matrix(&events, 20, 2.0, &DMatrix::zeros(20, 0)).is_err());
    }

    #[test]
    fn impulse_column_is_sampled_kernel() {
        let events = EventTable::new(vec![ev("a", 0.0, "x")]).unwrap();
        let d = build_design_matrix(&events, 16, 2.0, &DMatrix::zeros(16, 0)).unwrap();
        // oracle: evaluate the double gamma directly at 0, 2, ..., 30 s and
        // normalize by its maximum on the 0.1 s grid
        let peak = (0..=320)
            .map(|i| double_gamma(i as f64 / 10.0, &SPM_HRF))
            .fold(f64::MIN, f64::max);
        for t in 0..16 {
            let expected = double_gamma(2.0 * t as f64, &SPM_HRF) / peak;
            assert!((d.values[(t, 0)] - expected).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn boxcar_is_sum_of_shifted_kernels() {
        let k = canonical_hrf(FINE_DT).unwrap();
        let e = Event {
            trial_id: "a".into(),
            onset: 1.0,
            duration: 0.3,
            condition: "c".into(),
        };
        let col = event_regressor(&e, 20, 1.0, &k);
        let shifted = |s: f64| {
            event_regressor(
                &Event {
                    onset: s,
                    duration: 0.0,
                    ..e.clone()
                },
                20,
                1.0,
                &k,
            )
        };
        let parts: Vec<Vec<f64>> = [1.0, 1.1, 1.2].iter().map(|&s| shifted(s)).collect();
        for t in 0..20 {
            let s: f64 = parts.iter().map(|p| p[t]).sum();
            assert!((col[t] - s).abs() < 1e-12);
        }
    }

    #[test]
    fn intercept_only_fit() {
        let x = DMatrix::from_element(6, 1, 1.0);
        let y = DMatrix::from_element(6, 1, 2.0);
        let fit = ols_fit_matrix(&x, &y).unwrap();
        assert!((fit.betas[(0, 0)] - 2.0).abs() < 1e-14);
        assert_eq!(fit.sigma2[0], 0.0);
        assert_eq!(fit.dof, 5);
    }

    #[test]
    fn exact_model_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_matrix(&mut rng, 30, 4);
        let b = DMatrix::from_row_slice(4, 2, &[1.0, -2.0, 0.5, 3.0, -1.5, 0.25, 2.0, 7.0]);
        let y = &x * &b;
        let fit = ols_fit_matrix(&x, &y).unwrap();
        for (est, truth) in fit.betas.iter().zip(b.iter()) {
            assert!((est - truth).abs() <= 1e-8 * truth.abs());
        }
    }

    #[test]
    fn ols_matches_explicit_3x3_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_matrix(&mut rng, 20, 3);
        let y = random_matrix(&mut rng, 20, 2);
        let fit = ols_fit_matrix(&x, &y).unwrap();
        // normal equations with the adjugate inverse of the 3x3 Gram matrix
        let g = |i: usize, j: usize| (0..20).map(|t| x[(t, i)] * x[(t, j)]).sum::<f64>();
        let a = [
            [g(0, 0), g(0, 1), g(0, 2)],
            [g(1, 0), g(1, 1), g(1, 2)],
            [g(2, 0), g(2, 1), g(2, 2)],
        ];
        let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
        let cof = |r: usize, c: usize| {
            let rows: Vec<usize> = (0..3).filter(|&i| i != r).collect();
            let cols: Vec<usize> = (0..3).filter(|&i| i != c).collect();
            let m = a[rows[0]][cols[0]] * a[rows[1]][cols[1]] - a[rows[0]][cols[1]] * a[rows[1]][cols[0]];
            if (r + c).is_multiple_of(2) {
                m
            } else {
                -m
            }
        };
        for v in 0..2 {
            let xty: Vec<f64> = (0..3)
                .map(|i| (0..20).map(|t| x[(t, i)] * y[(t, v)]).sum())
                .collect();
            for i in 0..3 {
                let b: f64 = (0..3).map(|j| cof(j, i) / det * xty[j]).sum();
                assert!((fit.betas[(i, v)] - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn rank_deficient_design_rejected() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let y = DMatrix::from_element(4, 1, 1.0);
        assert!(matches!(ols_fit_matrix(&x, &y), Err(Error::SingularDesign(_))));
    }

    #[test]
    fn t_zero_contrast_and_zero_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let values = random_matrix(&mut rng, 10, 2);
        let d = DesignMatrix {
            values: values.clone(),
            column_labels: vec!["a".into(), "b".into()],
            n_conditions: 2,
        };
        let y = random_matrix(&mut rng, 10, 3);
        let fit = ols_fit(&d, &y).unwrap();
        let t = t_statistics(&fit, &d, &ContrastVector::new(vec![0.0, 0.0])).unwrap();
        assert_eq!(t, vec![0.0; 3]);

        let exact = ols_fit(&d, &(&values * DMatrix::from_row_slice(2, 1, &[1.0, 2.0]))).unwrap();
        assert!(matches!(
            t_statistics(&exact, &d, &ContrastVector::unit(2, 0)),
            Err(Error::DegenerateVariance(_))
        ));
    }

    #[test]
    fn t_matches_first_principles_10x2() {
        let x = DMatrix::from_row_slice(
            10,
            2,
            &[
                1.0, 0.5, 1.0, -1.2, 1.0, 0.3, 1.0, 2.2, 1.0, -0.7, 1.0, 1.1, 1.0, 0.0, 1.0, -1.9, 1.0, 0.8,
                1.0, 1.6,
            ],
        );
        let y = DMatrix::from_column_slice(10, 1, &[1.3, -0.2, 0.9, 2.8, 0.1, 1.7, 0.6, -1.1, 1.4, 2.0]);
        let d = DesignMatrix {
            values: x.clone(),
            column_labels: vec!["intercept".into(), "slope".into()],
            n_conditions: 1,
        };
        let fit = ols_fit(&d, &y).unwrap();
        let t = t_statistics(&fit, &d, &ContrastVector::new(vec![0.0, 1.0])).unwrap();
        // simple regression by hand: slope / (s / sqrt(Sxx))
        let xs: Vec<f64> = (0..10).map(|i| x[(i, 1)]).collect();
        let ys: Vec<f64> = y.iter().copied().collect();
        let mx = xs.iter().sum::<f64>() / 10.0;
        let my = ys.iter().sum::<f64>() / 10.0;
        let sxx: f64 = xs.iter().map(|v| (v - mx).powi(2)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(a, b)| (a - mx) * (b - my)).sum();
        let slope = sxy / sxx;
        let icpt = my - slope * mx;
        let sse: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(a, b)| (b - icpt - slope * a).powi(2))
            .sum();
        let s2 = sse / 8.0;
        let expected = slope / (s2 / sxx).sqrt();
        assert!((t[0] - expected).abs() < 1e-9, "{} vs {expected}", t[0]);
    }

    #[test]
    fn t_invariant_to_contrast_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let values = random_matrix(&mut rng, 25, 3);
        let d = DesignMatrix {
            values,
            column_labels: vec!["a".into(), "b".into(), "c".into()],
            n_conditions: 3,
        };
        let y = random_matrix(&mut rng, 25, 4);
        let fit = ols_fit(&d, &y).unwrap();
        let c = ContrastVector::new(vec![1.0, -0.5, 0.25]);
        let base = t_statistics(&fit, &d, &c).unwrap();
        for k in [0.01, 3.0, 250.0] {
            let scaled = ContrastVector::new(c.weights.iter().map(|w| w * k).collect());
            let t = t_statistics(&fit, &d, &scaled).unwrap();
            for (a, b) in t.iter().zip(&base) {
                assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn lss_single_trial_equals_ols() {
        let events = EventTable::new(vec![ev("a", 4.0, "sentence")]).unwrap();
        let nuis = polynomial_drift(30, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = random_matrix(&mut rng, 30, 3);
        let lss = lss_betas(&events, &y, 2.0, &nuis).unwrap();
        let d = build_design_matrix(&events, 30, 2.0, &nuis).unwrap();
        let fit = ols_fit(&d, &y).unwrap();
        for v in 0..3 {
            assert!((lss.values[(0, v)] - fit.betas[(0, v)]).abs() < 1e-12);
        }
    }

    #[test]
    fn lss_reports_trial_for_empty_regressor() {
        // onset at the last scan: h(0) = 0, so the regressor vanishes
        let events =
            EventTable::new(vec![ev("a", 0.0, "s"), ev("b", 10.0, "s"), ev("late", 38.0, "s")]).unwrap();
        let y = DMatrix::from_element(20, 1, 1.0);
        match lss_betas(&events, &y, 2.0, &DMatrix::zeros(20, 0)) {
            Err(Error::SingularDesign(msg)) => assert!(msg.contains("late"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn drift_columns_are_legendre() {
        let d = polynomial_drift(5, 3);
        let x = [-1.0, -0.5, 0.0, 0.5, 1.0];
        for (t, &xv) in x.iter().enumerate() {
            assert!((d[(t, 0)] - xv).abs() < 1e-15);
            assert!((d[(t, 1)] - 0.5 * (3.0 * xv * xv - 1.0)).abs() < 1e-15);
            assert!((d[(t, 2)] - 0.5 * (5.0 * xv.powi(3) - 3.0 * xv)).abs() < 1e-14);
        }
    }
}
