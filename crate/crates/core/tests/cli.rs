use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use neuroalign::cli::load_results;
use neuroalign::encoding::layer_curve_summary;
use neuroalign::linalg::matrix_from_tensor;
use neuroalign::tensorio::{read_tensor, write_tensor, TensorFile};

const BIN: &str = env!("CARGO_BIN_EXE_neuroalign");

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .arg("--quiet")
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) {
    let o = run(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

/// Small fixture: 60 trials keeps the GLM fast.
const SMALL: [&str; 6] = [
    "--set",
    "simulate.n=60",
    "--set",
    "simulate.d=8",
    "--set",
    "encode.k=3",
];

fn small_pipeline(dir: &Path, seed: &str) {
    for cmd in ["simulate", "glm", "extract-roi", "encode"] {
        let mut args: Vec<&str> = SMALL.to_vec();
        args.extend(["--seed", seed, cmd]);
        ok(dir, &args);
    }
}

fn nat_data(path: impl AsRef<Path>) -> Vec<f64> {
    read_tensor(path).unwrap().data
}

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let sab: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let saa: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let sbb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    sab / (saa * sbb).sqrt()
}

#[test]
fn glm_recovers_noise_free_amplitudes() {
    let dir = tempfile::tempdir().unwrap();
    let two = ["--set", "simulate.n=2", "--set", "simulate.trial_spacing=40"];
    for cmd in ["simulate", "glm", "extract-roi"] {
        let mut args = two.to_vec();
        args.push(cmd);
        ok(dir.path(), &args);
    }
    for s in ["sub01", "sub02"] {
        let est =
            matrix_from_tensor(&read_tensor(dir.path().join("betas").join(format!("{s}.nat"))).unwrap())
                .unwrap();
        let truth = matrix_from_tensor(
            &read_tensor(dir.path().join("truth/amplitudes").join(format!("{s}.nat"))).unwrap(),
        )
        .unwrap();
        assert!((est - truth).amax() < 1e-6);
    }
    for roi in ["LH_IFG", "RH_IFG", "LH_AntTemp"] {
        let name = format!("sub01_{roi}.nat");
        let got = nat_data(dir.path().join("responses").join(&name));
        let want = nat_data(dir.path().join("truth/responses").join(&name));
        let worst = got
            .iter()
            .zip(&want)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "{roi}: {worst}");
    }
}

#[test]
fn small_pipeline_tracks_truth() {
    let dir = tempfile::tempdir().unwrap();
    small_pipeline(dir.path(), "3");
    for s in ["sub01", "sub02"] {
        let est = nat_data(dir.path().join("betas").join(format!("{s}.nat")));
        let truth = nat_data(dir.path().join("truth/amplitudes").join(format!("{s}.nat")));
        let r = corr(&est, &truth);
        assert!(r > 0.9, "{s}: r = {r}");
    }
    let results = std::fs::read_to_string(dir.path().join("encode/results.tsv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 2 * 3 * 6);
    let truth = std::fs::read_to_string(dir.path().join("truth/truth.tsv")).unwrap();
    assert!(truth.lines().skip(1).all(|l| l.split('\t').nth(3) == Some("3")));
}

#[test]
fn seed_flag_overrides_config_and_set() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 1\n[simulate]\nn = 30\nd = 4\nsubjects = 1\n").unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let cfg_s = cfg.to_str().unwrap();
    ok(
        &a,
        &["--config", cfg_s, "--set", "seed=2", "--seed", "5", "simulate"],
    );
    ok(&b, &["--config", cfg_s, "--seed", "5", "simulate"]);
    for f in [
        "embeddings/synthetic.nat",
        "subjects/sub01/bold.nat",
        "truth/truth.tsv",
    ] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let c = dir.path().join("c");
    ok(&c, &["--config", cfg_s, "simulate"]);
    assert_ne!(
        std::fs::read(a.join("embeddings/synthetic.nat")).unwrap(),
        std::fs::read(c.join("embeddings/synthetic.nat")).unwrap()
    );
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    // config error, and nothing written
    let o = run(&out, &["--set", "simulate.rois=[\"LH_XYZ\"]", "simulate"]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
    assert_eq!(code(&run(&out, &["--set", "bogus.key=1", "simulate"])), 2);
    assert_eq!(code(&run(&out, &["--threads", "0", "simulate"])), 2);
    assert_eq!(code(&run(&out, &["glm"])), 2);
    assert_eq!(code(&run(&out, &["no-such-command"])), 2);

    // data error: subject without an events file
    let sub = out.join("subjects/sub01");
    std::fs::create_dir_all(&sub).unwrap();
    write_tensor(
        sub.join("bold.nat"),
        &TensorFile::new(vec![10, 2], vec![0.0; 20]).unwrap(),
    )
    .unwrap();
    let o = run(&out, &["glm"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("events.tsv"));
    assert!(!out.join("betas").exists());

    // numerical error: constant response cannot be standardised
    let enc = dir.path().join("enc");
    std::fs::create_dir_all(enc.join("embeddings")).unwrap();
    std::fs::create_dir_all(enc.join("responses")).unwrap();
    let x: Vec<f64> = (0..40 * 2 * 3).map(|i| ((i * 37) % 11) as f64).collect();
    write_tensor(
        enc.join("embeddings/m.nat"),
        &TensorFile::new(vec![40, 2, 3], x).unwrap(),
    )
    .unwrap();
    write_tensor(
        enc.join("responses/s1_LH_IFG.nat"),
        &TensorFile::vector(vec![1.0; 40]),
    )
    .unwrap();
    assert_eq!(code(&run(&enc, &["encode"])), 4);
    assert!(!enc.join("encode").exists());
}

#[test]
fn encode_names_both_files_on_length_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::create_dir_all(d.join("embeddings")).unwrap();
    std::fs::create_dir_all(d.join("responses")).unwrap();
    write_tensor(
        d.join("embeddings/m1.nat"),
        &TensorFile::new(vec![20, 1, 2], vec![1.0; 40]).unwrap(),
    )
    .unwrap();
    write_tensor(
        d.join("responses/s1_RH_AngG.nat"),
        &TensorFile::vector(vec![1.0; 19]),
    )
    .unwrap();
    let o = run(d, &["encode"]);
    assert_eq!(code(&o), 3);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("s1_RH_AngG.nat") && err.contains("m1.nat"), "{err}");
}

fn write_csaa_fixture(d: &Path, drop_option: Option<(&str, char)>) {
    let mut options = String::from("item_id\toption_label\ttext\n");
    let items = ["q1", "q2", "q3", "q4"];
    let mut rows = 0;
    for item in items {
        for label in ['A', 'B', 'C', 'D', 'E'] {
            if drop_option == Some((item, label)) {
                continue;
            }
            let _ = writeln!(options, "{item}\t{label}\ttext {label}");
            rows += 1;
        }
    }
    std::fs::write(d.join("options.tsv"), options).unwrap();
    // source i is e_i; option A of item i is 3 e_i, the others point elsewhere
    let dim = 6;
    let unit = |k: usize, s: f64| {
        (0..dim)
            .map(|j| if j == k { s } else { 0.0 })
            .collect::<Vec<f64>>()
    };
    let source: Vec<f64> = (0..items.len()).flat_map(|i| unit(i, 1.0)).collect();
    let mut opts = Vec::new();
    for (i, item) in items.iter().enumerate() {
        for (k, label) in ['A', 'B', 'C', 'D', 'E'].into_iter().enumerate() {
            if drop_option.is_some_and(|(it, l)| it == *item && label == l) {
                continue;
            }
            opts.extend(if k == 0 {
                unit(i, 3.0)
            } else {
                unit((i + k) % dim, 1.0)
            });
        }
    }
    let m = d.join("csaa_emb/model-x");
    std::fs::create_dir_all(&m).unwrap();
    write_tensor(
        m.join("source.nat"),
        &TensorFile::new(vec![items.len(), dim], source).unwrap(),
    )
    .unwrap();
    write_tensor(
        m.join("options.nat"),
        &TensorFile::new(vec![rows, dim], opts).unwrap(),
    )
    .unwrap();
}

const CSAA_ARGS: [&str; 9] = [
    "--set",
    "csaa.options=\"options.tsv\"",
    "--set",
    "csaa.embeddings=\"csaa_emb\"",
    "--set",
    "csaa.layer=0",
    "--set",
    "csaa.pooling=\"mean\"",
    "csaa",
];

#[test]
fn csaa_perfect_set_scores_100() {
    let dir = tempfile::tempdir().unwrap();
    write_csaa_fixture(dir.path(), None);
    ok(dir.path(), &CSAA_ARGS);
    let table = std::fs::read_to_string(dir.path().join("csaa/csaa.tsv")).unwrap();
    let row: Vec<&str> = table.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(row, ["model-x", "0", "mean", "4", "4", "0", "1", "100"]);
}

#[test]
fn csaa_requires_choices_and_complete_items() {
    let dir = tempfile::tempdir().unwrap();
    write_csaa_fixture(dir.path(), Some(("q3", 'D')));
    let o = run(dir.path(), &CSAA_ARGS);
    assert_eq!(code(&o), 3);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("q3") && err.contains('D'), "{err}");

    let dir = tempfile::tempdir().unwrap();
    write_csaa_fixture(dir.path(), None);
    let o = run(
        dir.path(),
        &CSAA_ARGS[..6].iter().copied().chain(["csaa"]).collect::<Vec<_>>(),
    );
    assert_eq!(code(&o), 2);
    assert!(!dir.path().join("csaa").exists());
}

/// Ten models (five tuned/base pairs), two subjects, LH/RH IFG, three layers.
fn write_planted_results(d: &Path) {
    let mut results = String::from("model\tsubject\troi\tlayer\trho\talpha\n");
    let mut pairing = String::from("tuned\tbase\n");
    let mut perf = String::from("model\tpercent\n");
    let mut models = Vec::new();
    for i in 0..5 {
        models.push((format!("m{i}-base"), 0.10 + 0.01 * i as f64, 20.0 + i as f64));
        models.push((
            format!("m{i}-tuned"),
            0.15 + 0.012 * i as f64,
            24.0 + 1.5 * i as f64,
        ));
        let _ = writeln!(pairing, "m{i}-tuned\tm{i}-base");
    }
    models.sort_by(|a, b| a.0.cmp(&b.0));
    for (m, peak, p) in &models {
        let _ = writeln!(perf, "{m}\t{p}");
        for (si, s) in ["s1", "s2"].iter().enumerate() {
            for (roi, shift) in [("LH_IFG", 0.02), ("RH_IFG", -0.01 * si as f64)] {
                for layer in 0..3 {
                    let rho = if layer == 1 {
                        peak + shift
                    } else {
                        peak / 2.0 + 0.001 * layer as f64
                    };
                    let _ = writeln!(results, "{m}\t{s}\t{roi}\t{layer}\t{rho}\t1");
                }
            }
        }
    }
    std::fs::create_dir_all(d.join("encode")).unwrap();
    std::fs::write(d.join("encode/results.tsv"), results).unwrap();
    std::fs::write(d.join("pairing.tsv"), pairing).unwrap();
    std::fs::write(d.join("performance.tsv"), perf).unwrap();
}

#[test]
fn stats_on_planted_results() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_planted_results(d);
    ok(
        d,
        &[
            "--set",
            "stats.pairing=\"pairing.tsv\"",
            "--set",
            "stats.performance=\"performance.tsv\"",
            "stats",
        ],
    );
    let stats = std::fs::read_to_string(d.join("stats/stats.tsv")).unwrap();
    let row = |name: &str| -> Vec<String> {
        stats
            .lines()
            .find(|l| l.starts_with(&format!("{name}\t")))
            .unwrap_or_else(|| panic!("no {name} row in\n{stats}"))
            .split('\t')
            .map(String::from)
            .collect()
    };
    let align = row("instruct_vs_base:alignment");
    assert_eq!(align[3], "0.03125");
    assert_eq!(align[5], "one");
    assert_eq!(row("instruct_vs_base:performance")[3], "0.03125");
    assert_eq!(row("asymmetry_ttest:IFG")[4], "10");
    assert_eq!(row("asymmetry_performance:IFG")[6], "pearson");
    assert_eq!(row("performance_alignment")[4], "10");
    let best = std::fs::read_to_string(d.join("stats/best_layers.tsv")).unwrap();
    assert!(best.lines().skip(1).all(|l| l.split('\t').nth(3) == Some("1")));
    // IFG asymmetry per model: LH peak + 0.02 minus mean RH peak (-0.005)
    let asym = std::fs::read_to_string(d.join("stats/asymmetry.tsv")).unwrap();
    for line in asym.lines().skip(1) {
        let diff: f64 = line.split('\t').nth(2).unwrap().parse().unwrap();
        assert!((diff - 0.025).abs() < 1e-12, "{line}");
    }
}

#[test]
fn stats_rejects_bad_pairings() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_planted_results(d);
    std::fs::write(d.join("empty.tsv"), "tuned\tbase\n").unwrap();
    std::fs::write(
        d.join("unpaired.tsv"),
        "tuned\tbase\nm0-tuned\tm9-base\nm1-tuned\tm1-base\n",
    )
    .unwrap();
    for (file, needle) in [("empty.tsv", "no pairs"), ("unpaired.tsv", "m9-base")] {
        let set = format!("stats.pairing=\"{file}\"");
        let o = run(d, &["--set", &set, "stats"]);
        assert_eq!(code(&o), 3, "{file}");
        assert!(String::from_utf8_lossy(&o.stderr).contains(needle));
    }
    assert!(!d.join("stats").exists());
}

#[test]
fn report_tables_match_summary_and_svgs_parse() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_planted_results(d);
    write_csaa_fixture(d, None);
    ok(d, &CSAA_ARGS);
    ok(d, &["report"]);
    let first: Vec<(PathBuf, Vec<u8>)> = std::fs::read_dir(d.join("report"))
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let bytes = std::fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    assert!(first.len() >= 14, "{} report files", first.len());
    for (p, bytes) in &first {
        if p.extension().is_some_and(|e| e == "svg") {
            let text = std::str::from_utf8(bytes).unwrap();
            let doc = roxmltree::Document::parse(text).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            assert_eq!(doc.root_element().tag_name().name(), "svg");
        }
    }
    let results = load_results(&d.join("encode")).unwrap();
    let rows = layer_curve_summary(&results).unwrap();
    let mut expected = String::from("model\troi\tlayer\tn\tmean\tci_low\tci_high\n");
    for r in &rows {
        let _ = writeln!(
            expected,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.model, r.roi, r.layer, r.summary.n, r.summary.mean, r.summary.ci_low, r.summary.ci_high
        );
    }
    assert_eq!(
        std::fs::read_to_string(d.join("report/layer_curves.tsv")).unwrap(),
        expected
    );
    let ranking = std::fs::read_to_string(d.join("report/csaa_ranking.tsv")).unwrap();
    assert_eq!(ranking, "rank\tmodel\tpercent\n1\tmodel-x\t100\n");

    ok(d, &["report"]);
    for (p, bytes) in &first {
        assert_eq!(&std::fs::read(p).unwrap(), bytes, "{} changed", p.display());
    }
}

#[test]
fn report_needs_two_subjects() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::create_dir_all(d.join("encode")).unwrap();
    std::fs::write(
        d.join("encode/results.tsv"),
        "model\tsubject\troi\tlayer\trho\talpha\nm\ts1\tLH_IFG\t0\t0.2\t1\nm\ts1\tLH_IFG\t1\t0.3\t1\n",
    )
    .unwrap();
    let o = run(d, &["report"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("at least 2 subjects"));
}
