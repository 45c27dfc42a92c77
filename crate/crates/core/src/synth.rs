//! Seeded ground-truth generators for every pipeline stage.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::encoding::EmbeddingTensor;
use crate::error::{Error, Result};
use crate::hrf_glm::{canonical_hrf, event_regressor, FINE_DT};
use crate::roi::RoiResponse;
use crate::tensorio::{known_roi_hemisphere, Event, EventTable, Hemisphere};

// independent ChaCha streams per generator
const STREAM_EMBED: u64 = 1;
const STREAM_WEIGHTS: u64 = 2;
const STREAM_RESPONSE_NOISE: u64 = 3;
const STREAM_BOLD_NOISE: u64 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub l: usize,
    pub d: usize,
    pub true_layer: usize,
    pub weight_scale: f64,
    /// sd(signal) / sd(noise) of the planted response.
    pub snr: f64,
    pub seed: u64,
    pub n_scans: usize,
    pub tr: f64,
    /// Seconds between consecutive trial onsets.
    pub trial_spacing: f64,
    pub first_onset: f64,
    /// White-noise sd added to generated BOLD.
    pub noise_sd: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let mut s = SynthSpec {
            n: 200,
            l: 6,
            d: 20,
            true_layer: 3,
            weight_scale: 1.0,
            snr: 4.0,
            seed: 0,
            n_scans: 0,
            tr: 2.0,
            trial_spacing: 12.0,
            first_onset: 4.0,
            noise_sd: 0.0,
        };
        s.n_scans = s.scans_to_cover_trials();
        s
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.snr > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "snr must be > 0, got {}",
                self.snr
            )));
        }
        if self.true_layer >= self.l {
            return Err(Error::InvalidArgument(format!(
                "true layer {} outside 0..{}",
                self.true_layer, self.l
            )));
        }
        if self.n == 0 || self.d == 0 {
            return Err(Error::InvalidArgument("N and D must be positive".into()));
        }
        if !(self.tr > 0.0) || !(self.noise_sd >= 0.0) {
            return Err(Error::InvalidArgument("TR must be > 0 and noise sd >= 0".into()));
        }
        Ok(())
    }

    /// Scans needed so the last trial's full HRF fits in the run.
    pub fn scans_to_cover_trials(&self) -> usize {
        let last = self.first_onset + self.trial_spacing * self.n.saturating_sub(1) as f64;
        ((last + 32.0) / self.tr).ceil() as usize + 1
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// i.i.d. standard-normal N x L x D embeddings.
pub fn gen_embeddings(spec: &SynthSpec) -> Result<EmbeddingTensor> {
    spec.validate()?;
    let mut rng = spec.rng(STREAM_EMBED);
    let values = (0..spec.n * spec.l * spec.d)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    EmbeddingTensor::new(format!("synthetic-{}", spec.seed), spec.n, spec.l, spec.d, values)
}

/// Planted readout of the hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub true_layer: usize,
    pub weights: Vec<f64>,
}

/// y = X[l*] w + e with e rescaled so that sd(X[l*] w) / sd(e) = snr.
pub fn gen_roi_response(
    spec: &SynthSpec,
    x: &EmbeddingTensor,
    subject_id: &str,
    roi_name: &str,
) -> Result<(RoiResponse, Truth)> {
    spec.validate()?;
    if (x.n, x.l, x.d) != (spec.n, spec.l, spec.d) {
        return Err(Error::Mismatch(format!(
            "embeddings are {}x{}x{}, spec asks for {}x{}x{}",
            x.n, x.l, x.d, spec.n, spec.l, spec.d
        )));
    }
    let hemisphere = known_roi_hemisphere(roi_name).unwrap_or(Hemisphere::LH);
    let mut wrng = spec.rng(STREAM_WEIGHTS);
    let weights: Vec<f64> = (0..spec.d)
        .map(|_| spec.weight_scale * wrng.sample::<f64, _>(StandardNormal))
        .collect();
    let signal: Vec<f64> = (0..spec.n)
        .map(|i| {
            (0..spec.d)
                .map(|j| x.get(i, spec.true_layer, j) * weights[j])
                .sum()
        })
        .collect();
    let mut nrng = spec.rng(STREAM_RESPONSE_NOISE);
    let noise: Vec<f64> = (0..spec.n).map(|_| nrng.sample(StandardNormal)).collect();
    let (ss, sn) = (sample_sd(&signal), sample_sd(&noise));
    let scale = if sn > 0.0 { ss / (spec.snr * sn) } else { 0.0 };
    let values = signal.iter().zip(&noise).map(|(s, e)| s + scale * e).collect();
    Ok((
        RoiResponse {
            subject_id: subject_id.to_string(),
            roi_name: roi_name.to_string(),
            hemisphere,
            values,
        },
        Truth {
            true_layer: spec.true_layer,
            weights,
        },
    ))
}

fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Evenly spaced instantaneous trials `s0001, s0002, ...`.
pub fn gen_events(spec: &SynthSpec) -> EventTable {
    EventTable {
        events: (0..spec.n)
            .map(|i| Event {
                trial_id: format!("s{:04}", i + 1),
                onset: spec.first_onset + spec.trial_spacing * i as f64,
                duration: 0.0,
                condition: "sentence".to_string(),
            })
            .collect(),
    }
}

/// T x V time series with its repetition time.
#[derive(Debug, Clone, PartialEq)]
pub struct BoldSeries {
    pub tr: f64,
    pub values: DMatrix<f64>,
}

/// Sum over trials of amplitude x HRF regressor, plus white noise.
pub fn gen_bold(events: &EventTable, amplitudes: &DMatrix<f64>, spec: &SynthSpec) -> Result<BoldSeries> {
    spec.validate()?;
    events.validate()?;
    if amplitudes.nrows() != events.len() {
        return Err(Error::Mismatch(format!(
            "{} amplitude rows for {} trials",
            amplitudes.nrows(),
            events.len()
        )));
    }
    let scan_end = spec.n_scans as f64 * spec.tr;
    if let Some(ev) = events.events.iter().find(|e| e.onset >= scan_end) {
        return Err(Error::Validation(format!(
            "trial {:?} onset {} s is beyond the scan ({scan_end} s)",
            ev.trial_id, ev.onset
        )));
    }
    let kernel = canonical_hrf(FINE_DT)?;
    let v = amplitudes.ncols();
    let mut y = DMatrix::zeros(spec.n_scans, v);
    for (i, ev) in events.events.iter().enumerate() {
        let reg = event_regressor(ev, spec.n_scans, spec.tr, &kernel);
        for (t, &r) in reg.iter().enumerate() {
            if r != 0.0 {
                for c in 0..v {
                    y[(t, c)] += amplitudes[(i, c)] * r;
                }
            }
        }
    }
    if spec.noise_sd > 0.0 {
        let mut rng = spec.rng(STREAM_BOLD_NOISE);
        // column-major fill: voxel by voxel
        for c in 0..v {
            for t in 0..spec.n_scans {
                y[(t, c)] += spec.noise_sd * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    Ok(BoldSeries {
        tr: spec.tr,
        values: y,
    })
}

/// Noise sd giving `snr` relative to the sample sd of a noise-free signal.
pub fn noise_sd_for_snr(signal: &DMatrix<f64>, snr: f64) -> f64 {
    let v: Vec<f64> = signal.iter().copied().collect();
    sample_sd(&v) / snr
}
