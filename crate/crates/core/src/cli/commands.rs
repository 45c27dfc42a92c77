use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::DMatrix;

use super::config::Config;
use crate::csaa::{csaa, OptionSet, CORRECT_INDEX};
use crate::encoding::{
    best_layer, encode_all, layer_curve_summary, CellKey, EmbeddingTensor, EncodingResult, LayerScore,
};
use crate::error::{Error, Result};
use crate::hrf_glm::{lss_betas, polynomial_drift, BetaMap};
use crate::linalg::{matrix_from_tensor, matrix_to_tensor};
use crate::report::{bar_chart_svg, layer_curve_svg};
use crate::roi::{extract_roi_responses, parse_response_stem, RoiResponse};
use crate::stats::{
    asymmetry_performance_association, lh_rh_asymmetry, one_sample_ttest, paired_permutation_test, pearson,
    PairedSample, RoiPair, TestResult, UnitAxis,
};
use crate::synth::{gen_bold, gen_embeddings, gen_events, gen_roi_response, SynthSpec};
use crate::tensorio::{
    is_known_roi, known_roi_hemisphere, read_events, read_masks, read_options, read_tensor, write_events,
    write_masks, write_tensor, RoiMask, RoiMaskSet, TensorFile, OPTION_LABELS, ROI_REGIONS,
};

/// Resolved configuration plus the output root.
pub struct Ctx {
    pub cfg: Config,
    pub out: PathBuf,
}

impl Ctx {
    pub fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out.join(p)
        }
    }
}

fn require_dir(p: &Path, what: &str) -> Result<()> {
    if p.is_dir() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{what} directory {} does not exist",
            p.display()
        )))
    }
}

fn require_file(p: &Path, what: &str) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{what} file {} does not exist",
            p.display()
        )))
    }
}

fn list_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_file() && p.extension().is_some_and(|x| x == ext) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn list_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_dir() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_nat(path: &Path, t: &TensorFile) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_tensor(path, t)
}

fn check_id(id: &str, what: &str) -> Result<()> {
    if id.is_empty() || id.contains(['\t', '\n', '/', '\\']) {
        return Err(Error::Config(format!(
            "{what} id {id:?} is not usable as a file name"
        )));
    }
    Ok(())
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent seed for one generator call.
fn derive_seed(seed: u64, tag: u64, index: usize) -> u64 {
    splitmix(splitmix(seed ^ tag.rotate_left(48)) ^ index as u64)
}

pub fn subject_id(index: usize) -> String {
    format!("sub{:02}", index + 1)
}

// ---------------------------------------------------------------------------
// simulate

pub fn cmd_simulate(ctx: &Ctx) -> Result<()> {
    let s = &ctx.cfg.simulate;
    let seed = ctx.cfg.seed;
    if s.subjects == 0 || s.voxels_per_roi == 0 || s.rois.is_empty() || s.models.is_empty() {
        return Err(Error::Config(
            "simulate needs at least one subject, model, ROI and voxel per ROI".into(),
        ));
    }
    let mut seen = BTreeSet::new();
    for roi in &s.rois {
        if !is_known_roi(roi) {
            return Err(Error::Config(format!("unknown ROI {roi:?}")));
        }
        if !seen.insert(roi) {
            return Err(Error::Config(format!("ROI {roi:?} listed twice")));
        }
    }
    let mut seen = BTreeSet::new();
    for m in &s.models {
        check_id(m, "model")?;
        if !seen.insert(m) {
            return Err(Error::Config(format!("model {m:?} listed twice")));
        }
    }
    let mut base = SynthSpec {
        n: s.n,
        l: s.l,
        d: s.d,
        true_layer: s.true_layer,
        weight_scale: 1.0,
        snr: s.snr,
        seed,
        n_scans: 0,
        tr: s.tr,
        trial_spacing: s.trial_spacing,
        first_onset: s.first_onset,
        noise_sd: s.noise_sd,
    };
    base.n_scans = base.scans_to_cover_trials();
    base.validate().map_err(|e| Error::Config(e.to_string()))?;

    let embeddings = s
        .models
        .iter()
        .enumerate()
        .map(|(mi, m)| {
            let spec = SynthSpec {
                seed: derive_seed(seed, 1, mi),
                ..base.clone()
            };
            let mut e = gen_embeddings(&spec)?;
            e.model_id = m.clone();
            Ok(e)
        })
        .collect::<Result<Vec<_>>>()?;
    let events = gen_events(&base);
    let vpr = s.voxels_per_roi;
    let n_voxels = vpr * s.rois.len();
    let masks = RoiMaskSet::new(
        s.rois
            .iter()
            .enumerate()
            .map(|(ri, roi)| RoiMask {
                name: roi.clone(),
                hemisphere: known_roi_hemisphere(roi).expect("checked above"),
                voxel_indices: (ri * vpr..(ri + 1) * vpr).collect(),
            })
            .collect(),
    )?;
    // symmetric voxel gains average to one, so the ROI mean is the planted response
    let gains: Vec<f64> = (0..vpr)
        .map(|k| 1.0 + 0.1 * (k as f64 - (vpr - 1) as f64 / 2.0))
        .collect();

    struct SubjectData {
        id: String,
        bold: DMatrix<f64>,
        amplitudes: DMatrix<f64>,
        responses: Vec<(RoiResponse, Vec<f64>, u64)>,
    }
    let mut subjects = Vec::with_capacity(s.subjects);
    for si in 0..s.subjects {
        let id = subject_id(si);
        let mut amplitudes = DMatrix::zeros(s.n, n_voxels);
        let mut responses = Vec::new();
        for (ri, roi) in s.rois.iter().enumerate() {
            let rseed = derive_seed(seed, 2, si * s.rois.len() + ri);
            let spec = SynthSpec {
                seed: rseed,
                ..base.clone()
            };
            let (resp, truth) = gen_roi_response(&spec, &embeddings[0], &id, roi)?;
            for i in 0..s.n {
                for (k, g) in gains.iter().enumerate() {
                    amplitudes[(i, ri * vpr + k)] = resp.values[i] * g;
                }
            }
            responses.push((resp, truth.weights, rseed));
        }
        let bspec = SynthSpec {
            seed: derive_seed(seed, 3, si),
            ..base.clone()
        };
        let bold = gen_bold(&events, &amplitudes, &bspec)?.values;
        subjects.push(SubjectData {
            id,
            bold,
            amplitudes,
            responses,
        });
    }

    let p = &ctx.cfg.paths;
    let masks_path = ctx.path(&p.masks);
    if let Some(parent) = masks_path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_masks(&masks_path, &masks)?;
    for e in &embeddings {
        write_nat(
            &ctx.path(&p.embeddings).join(format!("{}.nat", e.model_id)),
            &e.to_tensor(),
        )?;
    }
    let truth_dir = ctx.path(&p.truth);
    let mut truth_tsv = String::from("model\tsubject\troi\ttrue_layer\tsnr\tseed\n");
    for sub in &subjects {
        let dir = ctx.path(&p.subjects).join(&sub.id);
        write_nat(&dir.join("bold.nat"), &matrix_to_tensor(&sub.bold))?;
        write_events(dir.join("events.tsv"), &events)?;
        write_nat(
            &truth_dir.join("amplitudes").join(format!("{}.nat", sub.id)),
            &matrix_to_tensor(&sub.amplitudes),
        )?;
        for (resp, weights, rseed) in &sub.responses {
            write_nat(
                &truth_dir.join("responses").join(resp.file_name()),
                &TensorFile::vector(resp.values.clone()),
            )?;
            write_nat(
                &truth_dir.join("weights").join(resp.file_name()),
                &TensorFile::vector(weights.clone()),
            )?;
            let _ = writeln!(
                truth_tsv,
                "{}\t{}\t{}\t{}\t{}\t{}",
                embeddings[0].model_id, sub.id, resp.roi_name, s.true_layer, s.snr, rseed
            );
        }
    }
    write_text(&truth_dir.join("truth.tsv"), &truth_tsv)?;
    info!(
        "simulated {} subject(s), {} ROI(s), {} model(s), N={} L={} D={}",
        s.subjects,
        s.rois.len(),
        s.models.len(),
        s.n,
        s.l,
        s.d
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// glm

pub fn cmd_glm(ctx: &Ctx) -> Result<()> {
    let p = &ctx.cfg.paths;
    let subjects_dir = ctx.path(&p.subjects);
    require_dir(&subjects_dir, "subjects")?;
    let dirs = list_dirs(&subjects_dir)?;
    if dirs.is_empty() {
        return Err(Error::Validation(format!(
            "no subject directories in {}",
            subjects_dir.display()
        )));
    }
    let tr = ctx.cfg.glm.tr;
    let mut fits: Vec<(String, BetaMap)> = Vec::new();
    for dir in &dirs {
        let id = file_name(dir);
        if id.contains('_') {
            return Err(Error::Validation(format!(
                "subject id {id:?} must not contain '_'"
            )));
        }
        let y = matrix_from_tensor(&read_tensor(dir.join("bold.nat"))?)?;
        let events = read_events(dir.join("events.tsv"))?;
        let nuisance = polynomial_drift(y.nrows(), ctx.cfg.glm.drift_order);
        let betas =
            lss_betas(&events, &y, tr, &nuisance).map_err(|e| annotate(e, &format!("subject {id}")))?;
        info!("{id}: {} trials x {} voxels", betas.n_trials(), betas.n_voxels());
        fits.push((id, betas));
    }
    let out = ctx.path(&p.betas);
    for (id, b) in &fits {
        write_nat(&out.join(format!("{id}.nat")), &matrix_to_tensor(&b.values))?;
        let mut ids = String::from("trial_id\n");
        for t in &b.trial_ids {
            ids.push_str(t);
            ids.push('\n');
        }
        write_text(&out.join(format!("{id}.trials.tsv")), &ids)?;
    }
    Ok(())
}

fn annotate(e: Error, ctx: &str) -> Error {
    match e {
        Error::SingularDesign(m) => Error::SingularDesign(format!("{ctx}: {m}")),
        Error::DegenerateVariance(m) => Error::DegenerateVariance(format!("{ctx}: {m}")),
        Error::Validation(m) => Error::Validation(format!("{ctx}: {m}")),
        Error::Mismatch(m) => Error::Mismatch(format!("{ctx}: {m}")),
        other => other,
    }
}

// ---------------------------------------------------------------------------
// extract-roi

pub fn cmd_extract_roi(ctx: &Ctx) -> Result<()> {
    let p = &ctx.cfg.paths;
    let aggregator = ctx.cfg.aggregator()?;
    let masks_path = ctx.path(&p.masks);
    require_file(&masks_path, "masks")?;
    let betas_dir = ctx.path(&p.betas);
    require_dir(&betas_dir, "betas")?;
    let masks = read_masks(&masks_path)?;
    let files = list_files(&betas_dir, "nat")?;
    if files.is_empty() {
        return Err(Error::Validation(format!(
            "no beta maps in {}",
            betas_dir.display()
        )));
    }
    let mut all = Vec::new();
    for f in &files {
        let id = stem(f);
        if id.contains('_') {
            return Err(Error::Validation(format!(
                "subject id {id:?} must not contain '_'"
            )));
        }
        let values = matrix_from_tensor(&read_tensor(f)?)?;
        let trial_ids = (0..values.nrows()).map(|i| i.to_string()).collect();
        let betas = BetaMap { trial_ids, values };
        let responses = extract_roi_responses(&betas, &masks, aggregator, &id)
            .map_err(|e| annotate(e, &format!("subject {id}")))?;
        all.extend(responses);
    }
    let out = ctx.path(&p.responses);
    for r in &all {
        write_nat(&out.join(r.file_name()), &TensorFile::vector(r.values.clone()))?;
    }
    info!(
        "wrote {} ROI response vectors ({})",
        all.len(),
        aggregator.as_str()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// encode

pub fn load_embeddings(dir: &Path) -> Result<Vec<EmbeddingTensor>> {
    let files = list_files(dir, "nat")?;
    if files.is_empty() {
        return Err(Error::Validation(format!(
            "no embedding tensors in {}",
            dir.display()
        )));
    }
    files
        .iter()
        .map(|f| EmbeddingTensor::from_tensor(stem(f), &read_tensor(f)?))
        .collect()
}

pub fn load_responses(dir: &Path) -> Result<Vec<RoiResponse>> {
    let files = list_files(dir, "nat")?;
    if files.is_empty() {
        return Err(Error::Validation(format!(
            "no response vectors in {}",
            dir.display()
        )));
    }
    files
        .iter()
        .map(|f| {
            let s = stem(f);
            let (subject, roi) = parse_response_stem(&s).ok_or_else(|| {
                Error::Validation(format!("{} is not named <subject>_<roi>.nat", f.display()))
            })?;
            let hemisphere = known_roi_hemisphere(roi)
                .ok_or_else(|| Error::Validation(format!("{}: unknown ROI {roi:?}", f.display())))?;
            let t = read_tensor(f)?;
            if t.ndim() != 1 {
                return Err(Error::Validation(format!(
                    "{}: response must be a vector, got shape {:?}",
                    f.display(),
                    t.shape
                )));
            }
            Ok(RoiResponse {
                subject_id: subject.to_string(),
                roi_name: roi.to_string(),
                hemisphere,
                values: t.data,
            })
        })
        .collect()
}

pub fn cmd_encode(ctx: &Ctx) -> Result<()> {
    let p = &ctx.cfg.paths;
    let opts = ctx.cfg.encode_options()?;
    let emb_dir = ctx.path(&p.embeddings);
    let resp_dir = ctx.path(&p.responses);
    require_dir(&emb_dir, "embeddings")?;
    require_dir(&resp_dir, "responses")?;
    let embeddings = load_embeddings(&emb_dir)?;
    let responses = load_responses(&resp_dir)?;
    for e in &embeddings {
        if let Some(r) = responses.iter().find(|r| r.values.len() != e.n) {
            return Err(Error::Mismatch(format!(
                "{} has {} values but {} has {} sentences",
                resp_dir.join(r.file_name()).display(),
                r.values.len(),
                emb_dir.join(format!("{}.nat", e.model_id)).display(),
                e.n
            )));
        }
    }
    let result = encode_all(&embeddings, &responses, &opts)?;
    info!("encoded {} cells", result.len());

    let out = ctx.path(&p.encode);
    let mut results = String::from("model\tsubject\troi\tlayer\trho\talpha\n");
    let mut folds = String::from("model\tsubject\troi\tlayer\tfold\trho\talpha\n");
    for (k, v) in &result.cells {
        let _ = writeln!(
            results,
            "{}\t{}\t{}\t{}\t{}\t{}",
            k.model,
            k.subject,
            k.roi,
            k.layer,
            v.rho,
            v.modal_alpha()
        );
        for (f, (r, a)) in v.fold_rhos.iter().zip(&v.fold_alphas).enumerate() {
            let _ = writeln!(
                folds,
                "{}\t{}\t{}\t{}\t{f}\t{r}\t{a}",
                k.model, k.subject, k.roi, k.layer
            );
        }
    }
    let grid: Vec<String> = opts.alpha_grid.iter().map(|a| a.to_string()).collect();
    let meta = format!(
        "key\tvalue\nk\t{}\ninner_k\t{}\nalpha_grid\t{}\nfold_seed\t{}\nzscore\t{}\npooling\t{}\n",
        opts.k,
        opts.inner_k,
        grid.join(","),
        opts.seed,
        ctx.cfg.encode.zscore,
        ctx.cfg.encode.pooling
    );
    write_text(&out.join("results.tsv"), &results)?;
    write_text(&out.join("folds.tsv"), &folds)?;
    write_text(&out.join("meta.tsv"), &meta)?;
    for model in result.models() {
        let subjects = result.subjects(&model);
        let rois = result.rois(&model);
        let layers = embeddings
            .iter()
            .find(|e| e.model_id == model)
            .map(|e| e.l)
            .unwrap_or(0);
        let mut data = Vec::with_capacity(subjects.len() * rois.len() * layers);
        for s in &subjects {
            for r in &rois {
                let curve = result
                    .curve(&model, s, r)
                    .ok_or_else(|| Error::Validation(format!("model {model}: missing cells for {s}/{r}")))?;
                data.extend(curve);
            }
        }
        let t = TensorFile::new(vec![subjects.len(), rois.len(), layers], data)?;
        write_nat(&out.join("rho").join(format!("{model}.nat")), &t)?;
        let mut axes = String::from("axis\tindex\tlabel\n");
        for (i, s) in subjects.iter().enumerate() {
            let _ = writeln!(axes, "subject\t{i}\t{s}");
        }
        for (i, r) in rois.iter().enumerate() {
            let _ = writeln!(axes, "roi\t{i}\t{r}");
        }
        write_text(&out.join("rho").join(format!("{model}.axes.tsv")), &axes)?;
    }
    Ok(())
}

fn parse_f64(s: &str, path: &Path, line: usize) -> Result<f64> {
    s.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("bad number {s:?}"),
    })
}

fn parse_usize(s: &str, path: &Path, line: usize) -> Result<usize> {
    s.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("bad integer {s:?}"),
    })
}

fn read_table(path: &Path, columns: &[&str]) -> Result<Vec<(usize, Vec<String>)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let header: Vec<&str> = match lines.next() {
        Some((_, h)) => h.split('\t').collect(),
        None => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: "empty file".into(),
            })
        }
    };
    let idx = columns
        .iter()
        .map(|c| {
            header.iter().position(|h| h == c).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: format!("missing column {c:?}"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != header.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("expected {} fields, got {}", header.len(), fields.len()),
            });
        }
        rows.push((i + 1, idx.iter().map(|&j| fields[j].to_string()).collect()));
    }
    Ok(rows)
}

/// Reads results.tsv and folds.tsv back into an [`EncodingResult`].
pub fn load_results(dir: &Path) -> Result<EncodingResult> {
    let results_path = dir.join("results.tsv");
    let folds_path = dir.join("folds.tsv");
    require_file(&results_path, "encoding results")?;
    let mut folds: BTreeMap<CellKey, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    if folds_path.is_file() {
        for (line, r) in read_table(&folds_path, &["model", "subject", "roi", "layer", "rho", "alpha"])? {
            let key = CellKey {
                model: r[0].clone(),
                subject: r[1].clone(),
                roi: r[2].clone(),
                layer: parse_usize(&r[3], &folds_path, line)?,
            };
            let e = folds.entry(key).or_default();
            e.0.push(parse_f64(&r[4], &folds_path, line)?);
            e.1.push(parse_f64(&r[5], &folds_path, line)?);
        }
    }
    let mut result = EncodingResult::default();
    for (line, r) in read_table(
        &results_path,
        &["model", "subject", "roi", "layer", "rho", "alpha"],
    )? {
        let key = CellKey {
            model: r[0].clone(),
            subject: r[1].clone(),
            roi: r[2].clone(),
            layer: parse_usize(&r[3], &results_path, line)?,
        };
        if result.cells.contains_key(&key) {
            return Err(Error::Parse {
                path: results_path.clone(),
                line,
                msg: "duplicate cell".into(),
            });
        }
        let rho = parse_f64(&r[4], &results_path, line)?;
        let alpha = parse_f64(&r[5], &results_path, line)?;
        let (fold_rhos, fold_alphas) = folds.remove(&key).unwrap_or((Vec::new(), vec![alpha]));
        result.insert(
            key.clone(),
            LayerScore {
                layer: key.layer,
                rho,
                fold_rhos,
                fold_alphas,
            },
        );
    }
    if result.is_empty() {
        return Err(Error::Validation(format!(
            "{} has no rows",
            results_path.display()
        )));
    }
    Ok(result)
}

// ---------------------------------------------------------------------------
// csaa

/// Per-row embeddings from an N x D matrix or one layer of an N x L x D tensor.
fn embedding_rows(t: &TensorFile, layer: usize, path: &Path) -> Result<Vec<Vec<f64>>> {
    match t.shape.as_slice() {
        [n, d] => Ok((0..*n).map(|i| t.data[i * d..(i + 1) * d].to_vec()).collect()),
        [n, l, d] => {
            if layer >= *l {
                return Err(Error::Config(format!(
                    "csaa.layer = {layer} but {} has {l} layers",
                    path.display()
                )));
            }
            Ok((0..*n)
                .map(|i| {
                    let start = (i * l + layer) * d;
                    t.data[start..start + d].to_vec()
                })
                .collect())
        }
        other => Err(Error::Validation(format!(
            "{}: expected N x D or N x L x D, got shape {other:?}",
            path.display()
        ))),
    }
}

pub fn cmd_csaa(ctx: &Ctx) -> Result<()> {
    let c = &ctx.cfg.csaa;
    let options_path = ctx.path(
        c.options
            .as_deref()
            .ok_or_else(|| Error::Config("csaa.options is not set".into()))?,
    );
    let emb_dir = ctx.path(
        c.embeddings
            .as_deref()
            .ok_or_else(|| Error::Config("csaa.embeddings is not set".into()))?,
    );
    let layer = c
        .layer
        .ok_or_else(|| Error::Config("csaa.layer must be chosen explicitly".into()))?;
    let pooling = c
        .pooling
        .clone()
        .ok_or_else(|| Error::Config("csaa.pooling must be chosen explicitly".into()))?;
    require_file(&options_path, "options")?;
    require_dir(&emb_dir, "csaa embeddings")?;
    let rows = read_options(&options_path)?;
    let mut items: Vec<String> = Vec::new();
    let mut by_item: BTreeMap<String, BTreeMap<char, usize>> = BTreeMap::new();
    for (r, row) in rows.iter().enumerate() {
        let labels = by_item.entry(row.item_id.clone()).or_insert_with(|| {
            items.push(row.item_id.clone());
            BTreeMap::new()
        });
        if labels.insert(row.label, r).is_some() {
            return Err(Error::Validation(format!(
                "item {:?} has option {} twice",
                row.item_id, row.label
            )));
        }
    }
    for item in &items {
        let labels = &by_item[item];
        if let Some(missing) = OPTION_LABELS.iter().find(|l| !labels.contains_key(l)) {
            return Err(Error::Validation(format!(
                "item {item:?} is missing option {missing}"
            )));
        }
    }
    let models = list_dirs(&emb_dir)?;
    if models.is_empty() {
        return Err(Error::Validation(format!(
            "no model directories in {}",
            emb_dir.display()
        )));
    }
    let mut table = String::from("model\tlayer\tpooling\tn\tcorrect\tties\tcsaa\tpercent\n");
    let mut per_item = String::from("model\titem_id\tchosen\ttied\tcorrect\n");
    for dir in &models {
        let model = file_name(dir);
        let src_path = dir.join("source.nat");
        let opt_path = dir.join("options.nat");
        let source = embedding_rows(&read_tensor(&src_path)?, layer, &src_path)?;
        let options = embedding_rows(&read_tensor(&opt_path)?, layer, &opt_path)?;
        if source.len() != items.len() {
            return Err(Error::Mismatch(format!(
                "{} has {} rows for {} items in {}",
                src_path.display(),
                source.len(),
                items.len(),
                options_path.display()
            )));
        }
        if options.len() != rows.len() {
            return Err(Error::Mismatch(format!(
                "{} has {} rows for {} option rows in {}",
                opt_path.display(),
                options.len(),
                rows.len(),
                options_path.display()
            )));
        }
        let sets = items
            .iter()
            .zip(&source)
            .map(|(item, src)| {
                let labels = &by_item[item];
                let opts: [Vec<f64>; 5] = std::array::from_fn(|k| options[labels[&OPTION_LABELS[k]]].clone());
                OptionSet::new(item.clone(), src.clone(), opts)
            })
            .collect::<Result<Vec<_>>>()?;
        let res = csaa(&sets)?;
        let _ = writeln!(
            table,
            "{model}\t{layer}\t{pooling}\t{}\t{}\t{}\t{}\t{}",
            res.n,
            res.n_correct(),
            res.n_tied(),
            res.csaa,
            res.percent()
        );
        for (i, item) in items.iter().enumerate() {
            let _ = writeln!(
                per_item,
                "{model}\t{item}\t{}\t{}\t{}",
                OPTION_LABELS[res.chosen[i]],
                res.tied[i] as u8,
                (res.chosen[i] == CORRECT_INDEX && !res.tied[i]) as u8
            );
        }
        info!("{model}: CSAA {:.4} over {} items", res.csaa, res.n);
    }
    let out = ctx.path(&ctx.cfg.paths.csaa);
    write_text(&out.join("csaa.tsv"), &table)?;
    write_text(&out.join("items.tsv"), &per_item)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// stats

fn resolve_pairs(ctx: &Ctx, results: &EncodingResult) -> Result<Vec<RoiPair>> {
    let present: BTreeSet<String> = results.models().iter().flat_map(|m| results.rois(m)).collect();
    let regions: Vec<String> = if ctx.cfg.stats.pairs.is_empty() {
        ROI_REGIONS
            .iter()
            .filter(|r| present.contains(&format!("LH_{r}")) && present.contains(&format!("RH_{r}")))
            .map(|r| r.to_string())
            .collect()
    } else {
        ctx.cfg.stats.pairs.clone()
    };
    regions
        .iter()
        .map(|r| {
            if !ROI_REGIONS.contains(&r.as_str()) {
                return Err(Error::Config(format!("unknown region {r:?} in stats.pairs")));
            }
            let pair = RoiPair::new(format!("LH_{r}"), format!("RH_{r}"));
            for roi in [&pair.lh, &pair.rh] {
                if !present.contains(roi) {
                    return Err(Error::Validation(format!("no encoding results for ROI {roi}")));
                }
            }
            Ok(pair)
        })
        .collect()
}

/// Mean over ROIs of the best-layer score of the subject-averaged curve.
pub fn alignment_scores(results: &EncodingResult) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for model in results.models() {
        let rois = results.rois(&model);
        let mut total = 0.0;
        for roi in &rois {
            let curve = results.mean_curve(&model, roi).expect("roi listed for model");
            total += best_layer(&curve)?.rho;
        }
        out.insert(model, total / rois.len() as f64);
    }
    Ok(out)
}

/// Reads a TSV with a `model` column and a `percent` (or `score`) column.
pub fn read_performance(path: &Path) -> Result<BTreeMap<String, f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header = text.lines().next().unwrap_or("");
    let col = if header.split('\t').any(|h| h == "percent") {
        "percent"
    } else {
        "score"
    };
    let mut out = BTreeMap::new();
    for (line, r) in read_table(path, &["model", col])? {
        let v = parse_f64(&r[1], path, line)?;
        if out.insert(r[0].clone(), v).is_some() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("model {:?} listed twice", r[0]),
            });
        }
    }
    if out.is_empty() {
        return Err(Error::Validation(format!("{} has no rows", path.display())));
    }
    Ok(out)
}

/// Reads a `tuned\tbase` pairing file.
pub fn read_pairing(path: &Path) -> Result<Vec<(String, String)>> {
    let rows = read_table(path, &["tuned", "base"])?;
    if rows.is_empty() {
        return Err(Error::Validation(format!(
            "pairing file {} has no pairs",
            path.display()
        )));
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (line, r) in rows {
        for m in &r {
            if !seen.insert(m.clone()) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("model {m:?} appears in more than one pair"),
                });
            }
        }
        out.push((r[0].clone(), r[1].clone()));
    }
    Ok(out)
}

fn paired_values(
    pairs: &[(String, String)],
    values: &BTreeMap<String, f64>,
    what: &str,
) -> Result<PairedSample> {
    let get = |m: &String| {
        values
            .get(m)
            .copied()
            .ok_or_else(|| Error::Validation(format!("unpaired model {m:?}: no {what} value")))
    };
    let mut labels = Vec::new();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (tuned, base) in pairs {
        labels.push(tuned.clone());
        a.push(get(tuned)?);
        b.push(get(base)?);
    }
    PairedSample::new(labels, a, b)
}

fn stats_row(out: &mut String, analysis: &str, axis: &str, t: &TestResult) {
    let _ = writeln!(
        out,
        "{analysis}\t{axis}\t{}\t{}\t{}\t{}\t{}",
        t.statistic,
        t.p_value,
        t.n,
        t.sidedness.as_str(),
        t.method.as_str()
    );
}

pub fn cmd_stats(ctx: &Ctx) -> Result<()> {
    let s = &ctx.cfg.stats;
    let axis = ctx.cfg.unit_axis()?;
    let pairing_path = s.pairing.as_deref().map(|p| ctx.path(p));
    let perf_path = s.performance.as_deref().map(|p| ctx.path(p));
    if let Some(p) = &pairing_path {
        require_file(p, "pairing")?;
    }
    if let Some(p) = &perf_path {
        require_file(p, "performance")?;
    }
    let results = load_results(&ctx.path(&ctx.cfg.paths.encode))?;
    let pairs = resolve_pairs(ctx, &results)?;
    let models = results.models();

    let mut best = String::from("model\tsubject\troi\tbest_layer\trho\ttied\n");
    for model in &models {
        for roi in results.rois(model) {
            let b = best_layer(&results.mean_curve(model, &roi).expect("listed"))?;
            let _ = writeln!(
                best,
                "{model}\tmean\t{roi}\t{}\t{}\t{}",
                b.layer, b.rho, b.tied as u8
            );
            for subject in results.subjects(model) {
                if let Some(curve) = results.curve(model, &subject, &roi) {
                    let b = best_layer(&curve)?;
                    let _ = writeln!(
                        best,
                        "{model}\t{subject}\t{roi}\t{}\t{}\t{}",
                        b.layer, b.rho, b.tied as u8
                    );
                }
            }
        }
    }
    let alignment = alignment_scores(&results)?;
    let mut align_tsv = String::from("model\talignment\n");
    for (m, v) in &alignment {
        let _ = writeln!(align_tsv, "{m}\t{v}");
    }

    let performance = perf_path.as_deref().map(read_performance).transpose()?;
    if let Some(perf) = &performance {
        if let Some(m) = models.iter().find(|m| !perf.contains_key(*m)) {
            return Err(Error::Validation(format!("no performance score for model {m:?}")));
        }
    }
    let pairing = pairing_path.as_deref().map(read_pairing).transpose()?;

    let axis_s = axis.as_str();
    let mut stats = String::from("analysis\tunit_axis\tstatistic\tp\tn\tsidedness\tmethod\n");
    let mut asym_tsv = String::from("pair\tunit\tdiff\n");
    if !pairs.is_empty() {
        let asym = lh_rh_asymmetry(&results, &pairs, axis)?;
        for (pair, v) in &asym {
            for (u, d) in v.units.iter().zip(&v.diffs) {
                let _ = writeln!(asym_tsv, "{}\t{u}\t{d}", pair.label());
            }
            if v.diffs.len() < 2 {
                warn!(
                    "asymmetry t-test for {} skipped: only {} unit(s)",
                    pair.label(),
                    v.diffs.len()
                );
                continue;
            }
            let t = one_sample_ttest(&v.diffs, 0.0)?;
            stats_row(
                &mut stats,
                &format!("asymmetry_ttest:{}", pair.label()),
                axis_s,
                &t,
            );
        }
        if let Some(perf) = &performance {
            if axis == UnitAxis::Model {
                let perf_models: BTreeMap<String, f64> = perf
                    .iter()
                    .filter(|(m, _)| alignment.contains_key(*m))
                    .map(|(m, v)| (m.clone(), *v))
                    .collect();
                for (pair, t) in asymmetry_performance_association(&asym, &perf_models)? {
                    stats_row(
                        &mut stats,
                        &format!("asymmetry_performance:{}", pair.label()),
                        axis_s,
                        &t,
                    );
                }
            } else {
                warn!("asymmetry/performance correlation needs unit_axis = model; skipped");
            }
        }
    }
    if let Some(perf) = &performance {
        let xs: Vec<f64> = models.iter().map(|m| perf[m]).collect();
        let ys: Vec<f64> = models.iter().map(|m| alignment[m]).collect();
        stats_row(&mut stats, "performance_alignment", "model", &pearson(&xs, &ys)?);
    }
    if let Some(pairs) = &pairing {
        let sample = paired_values(pairs, &alignment, "encoding")?;
        let t = paired_permutation_test(&sample, ctx.cfg.seed)?;
        stats_row(&mut stats, "instruct_vs_base:alignment", "model", &t);
        if let Some(perf) = &performance {
            let sample = paired_values(pairs, perf, "performance")?;
            let t = paired_permutation_test(&sample, ctx.cfg.seed)?;
            stats_row(&mut stats, "instruct_vs_base:performance", "model", &t);
        }
    }

    let out = ctx.path(&ctx.cfg.paths.stats);
    write_text(&out.join("best_layers.tsv"), &best)?;
    write_text(&out.join("alignment.tsv"), &align_tsv)?;
    write_text(&out.join("asymmetry.tsv"), &asym_tsv)?;
    write_text(&out.join("stats.tsv"), &stats)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// report

pub fn cmd_report(ctx: &Ctx) -> Result<()> {
    let results = load_results(&ctx.path(&ctx.cfg.paths.encode))?;
    for model in results.models() {
        let n = results.subjects(&model).len();
        if n < 2 {
            return Err(Error::Validation(format!(
                "model {model}: confidence bands need at least 2 subjects, got {n}"
            )));
        }
    }
    let axis = ctx.cfg.unit_axis()?;
    let pairs = resolve_pairs(ctx, &results)?;
    let csaa_table = ctx.path(&ctx.cfg.paths.csaa).join("csaa.tsv");
    let curves = layer_curve_summary(&results)?;

    let mut files: Vec<(PathBuf, String)> = Vec::new();
    let out = ctx.path(&ctx.cfg.paths.report);
    let mut tsv = String::from("model\troi\tlayer\tn\tmean\tci_low\tci_high\n");
    for r in &curves {
        let _ = writeln!(
            tsv,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.model, r.roi, r.layer, r.summary.n, r.summary.mean, r.summary.ci_low, r.summary.ci_high
        );
    }
    files.push((out.join("layer_curves.tsv"), tsv));
    for model in results.models() {
        let rows: Vec<_> = curves.iter().filter(|r| r.model == model).cloned().collect();
        files.push((
            out.join(format!("layer_curves_{model}.svg")),
            layer_curve_svg(&model, &rows),
        ));
    }
    if !pairs.is_empty() {
        let asym = lh_rh_asymmetry(&results, &pairs, axis)?;
        let mut tsv = String::from("pair\tn\tmean_diff\n");
        let mut bars = Vec::new();
        for (pair, v) in &asym {
            let m = v.diffs.iter().sum::<f64>() / v.diffs.len() as f64;
            let _ = writeln!(tsv, "{}\t{}\t{m}", pair.label(), v.diffs.len());
            bars.push((pair.label(), m));
        }
        files.push((out.join("asymmetry.tsv"), tsv));
        files.push((
            out.join("asymmetry.svg"),
            bar_chart_svg("LH - RH best-layer encoding score", "mean difference", &bars),
        ));
    }
    if csaa_table.is_file() {
        let mut ranking: Vec<(String, f64)> = read_performance(&csaa_table)?.into_iter().collect();
        ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut tsv = String::from("rank\tmodel\tpercent\n");
        for (i, (m, v)) in ranking.iter().enumerate() {
            let _ = writeln!(tsv, "{}\t{m}\t{v}", i + 1);
        }
        files.push((out.join("csaa_ranking.tsv"), tsv));
        files.push((
            out.join("csaa_ranking.svg"),
            bar_chart_svg("CSAA by model", "CSAA (%)", &ranking),
        ));
    }
    for (path, text) in &files {
        write_text(path, text)?;
    }
    info!("wrote {} report files to {}", files.len(), out.display());
    Ok(())
}
