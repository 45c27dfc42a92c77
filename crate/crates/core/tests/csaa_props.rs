use std::collections::BTreeMap;

use neuroalign::csaa::{
    cosine_similarity, csaa, delete_or_insert, scramble_words, select_option, substitute_words, tokenize,
    EditMode, OptionSet, N_OPTIONS,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

fn random_item(rng: &mut ChaCha8Rng, id: usize, d: usize) -> OptionSet {
    let source = gaussian(rng, d);
    let options = std::array::from_fn(|_| gaussian(rng, d));
    OptionSet::new(format!("i{id}"), source, options).unwrap()
}

/// Index of the unique best option by plain dot products over norms, or None on a tie.
fn oracle_choice(item: &OptionSet) -> Option<usize> {
    let sims: Vec<f64> = item
        .options
        .iter()
        .map(|o| {
            let dot: f64 = o.iter().zip(&item.source).map(|(a, b)| a * b).sum();
            let no: f64 = o.iter().map(|a| a * a).sum::<f64>().sqrt();
            let ns: f64 = item.source.iter().map(|a| a * a).sum::<f64>().sqrt();
            dot / (no * ns)
        })
        .collect();
    let best = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let winners: Vec<usize> = (0..N_OPTIONS).filter(|&k| sims[k] == best).collect();
    (winners.len() == 1).then(|| winners[0])
}

#[test]
fn selection_agrees_with_oracle_on_1000_items() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for id in 0..1000 {
        let d = 2 + id % 9;
        let item = random_item(&mut rng, id, d);
        let sel = select_option(&item).unwrap();
        assert_eq!(Some(sel.index), oracle_choice(&item), "item {id}");
        assert!(!sel.tied);
    }
}

#[test]
fn random_items_score_near_chance() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let items: Vec<OptionSet> = (0..5000).map(|i| random_item(&mut rng, i, 16)).collect();
    let res = csaa(&items).unwrap();
    assert!((0.17..=0.23).contains(&res.csaa), "csaa = {}", res.csaa);
}

#[test]
fn perfect_and_tied_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let perfect: Vec<OptionSet> = (0..50)
        .map(|i| {
            let mut item = random_item(&mut rng, i, 8);
            item.options[0] = item.source.iter().map(|v| 2.0 * v).collect();
            item
        })
        .collect();
    let res = csaa(&perfect).unwrap();
    assert_eq!(res.csaa, 1.0);
    assert_eq!(res.percent(), 100.0);

    let mut tied = random_item(&mut rng, 0, 8);
    tied.options[0] = tied.source.clone();
    tied.options[3] = tied.source.iter().map(|v| 5.0 * v).collect();
    let res = csaa(&[tied]).unwrap();
    assert_eq!(res.delta, vec![0]);
    assert_eq!(res.n_tied(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn selection_ignores_positive_rescaling(seed in any::<u64>(), which in 0usize..6, k in 1e-3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let item = random_item(&mut rng, 0, 6);
        let before = select_option(&item).unwrap().index;
        let mut scaled = item.clone();
        if which == N_OPTIONS {
            scaled.source.iter_mut().for_each(|v| *v *= k);
        } else {
            scaled.options[which].iter_mut().for_each(|v| *v *= k);
        }
        prop_assert_eq!(select_option(&scaled).unwrap().index, before);
    }

    #[test]
    fn csaa_is_mean_delta_and_order_free(seed in any::<u64>(), n in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut items: Vec<OptionSet> = (0..n).map(|i| random_item(&mut rng, i, 3)).collect();
        let a = csaa(&items).unwrap();
        let mean = a.delta.iter().map(|&d| d as f64).sum::<f64>() / n as f64;
        prop_assert_eq!(a.csaa, mean);
        items.reverse();
        let b = csaa(&items).unwrap();
        prop_assert_eq!(a.csaa, b.csaa);
    }

    #[test]
    fn cosine_is_symmetric_and_bounded(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (u, v) = (gaussian(&mut rng, 5), gaussian(&mut rng, 5));
        let c = cosine_similarity(&u, &v).unwrap();
        prop_assert_eq!(c, cosine_similarity(&v, &u).unwrap());
        prop_assert!((-1.0..=1.0).contains(&c));
    }
}

const SENTENCE: &str = "the quick brown fox saw a wild animal near the river bank";
const GOLDEN: &str = "tests/golden/generators.tsv";

fn generator_outputs() -> String {
    let tokens = tokenize(SENTENCE);
    let lexicon: BTreeMap<String, Vec<String>> = [
        ("animal", vec!["beast", "creature"]),
        ("river", vec!["stream"]),
        ("quick", vec!["fast", "rapid", "swift"]),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.into_iter().map(String::from).collect()))
    .collect();
    let payload = tokenize("at dawn");
    let mut out = String::from("generator\tseed\toutput\n");
    for seed in [0u64, 1, 42] {
        let rows = [
            ("scramble", scramble_words(&tokens, seed).unwrap()),
            (
                "delete",
                delete_or_insert(&tokens, &EditMode::Delete, seed).unwrap(),
            ),
            (
                "insert",
                delete_or_insert(&tokens, &EditMode::Insert(payload.clone()), seed).unwrap(),
            ),
            ("substitute", substitute_words(&tokens, &lexicon, seed).unwrap()),
        ];
        for (name, toks) in rows {
            out.push_str(&format!("{name}\t{seed}\t{}\n", toks.join(" ")));
        }
    }
    out
}

#[test]
fn generators_match_golden_file() {
    let actual = generator_outputs();
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join(GOLDEN);
    if std::env::var_os("NEUROALIGN_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).expect("golden file present");
    assert_eq!(actual, expected);
    assert_eq!(actual, generator_outputs());
}

#[test]
fn substitution_uses_the_lexicon() {
    let tokens = tokenize("a wild animal");
    let lexicon = BTreeMap::from([("animal".to_string(), vec!["beast".to_string()])]);
    for seed in 0..5 {
        assert_eq!(
            substitute_words(&tokens, &lexicon, seed).unwrap().join(" "),
            "a wild beast"
        );
    }
    let empty = BTreeMap::from([("zebra".to_string(), vec!["horse".to_string()])]);
    assert!(substitute_words(&tokens, &empty, 0).is_err());
}
