use std::path::Path;

use neuroalign::tensorio::{
    parse_options_tsv, read_tensor, roi_name, write_tensor, Event, EventTable, Hemisphere, RoiMask,
    RoiMaskSet, TensorFile, ROI_REGIONS,
};
use neuroalign::ErrorKind;
use proptest::prelude::*;

fn shape_and_data() -> impl Strategy<Value = (Vec<usize>, Vec<f64>)> {
    prop::collection::vec(0usize..6, 1..=4).prop_flat_map(|shape| {
        let len: usize = shape.iter().product();
        let val = prop_oneof![
            any::<f64>(),
            Just(0.0),
            Just(-0.0),
            Just(f64::INFINITY),
            Just(f64::MIN_POSITIVE / 2.0),
        ];
        (Just(shape), prop::collection::vec(val, len))
    })
}

fn id() -> impl Strategy<Value = String> {
    "[A-Za-z0-9_.:-]{1,12}"
}

fn finite_nonneg() -> impl Strategy<Value = f64> {
    prop_oneof![
        0.0..1e6f64,
        Just(0.0),
        (0u32..10_000).prop_map(|k| k as f64 * 0.1)
    ]
}

fn event_table() -> impl Strategy<Value = EventTable> {
    prop::collection::btree_set(id(), 0..30).prop_flat_map(|ids| {
        let ids: Vec<String> = ids.into_iter().collect();
        let n = ids.len();
        (
            Just(ids),
            prop::collection::vec((finite_nonneg(), finite_nonneg(), "[a-z]{1,6}"), n),
        )
            .prop_map(|(ids, rest)| EventTable {
                events: ids
                    .into_iter()
                    .zip(rest)
                    .map(|(trial_id, (onset, duration, condition))| Event {
                        trial_id,
                        onset,
                        duration,
                        condition,
                    })
                    .collect(),
            })
    })
}

fn mask_set() -> impl Strategy<Value = RoiMaskSet> {
    let all: Vec<(Hemisphere, &str)> = [Hemisphere::LH, Hemisphere::RH]
        .iter()
        .flat_map(|h| ROI_REGIONS.iter().map(move |r| (*h, *r)))
        .collect();
    prop::sample::subsequence(all, 0..=12).prop_flat_map(|rois| {
        let n = rois.len();
        (
            Just(rois),
            prop::collection::vec(prop::collection::btree_set(0usize..5000, 0..40), n),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_map(|(rois, idx, shuffle)| RoiMaskSet {
                masks: rois
                    .into_iter()
                    .zip(idx)
                    .zip(shuffle)
                    .map(|(((h, r), set), rev)| {
                        let mut voxel_indices: Vec<usize> = set.into_iter().collect();
                        if rev {
                            voxel_indices.reverse();
                        }
                        RoiMask {
                            name: roi_name(h, r),
                            hemisphere: h,
                            voxel_indices,
                        }
                    })
                    .collect(),
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn nat1_bytes_round_trip((shape, data) in shape_and_data()) {
        let t = TensorFile::new(shape, data).unwrap();
        let bytes = t.to_bytes().unwrap();
        prop_assert_eq!(bytes.len(), t.byte_len());
        let back = TensorFile::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back.shape, &t.shape);
        let a: Vec<u64> = back.data.iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = t.data.iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(a, b);
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn nat1_truncation_always_detected((shape, data) in shape_and_data(), cut in 1usize..64) {
        let bytes = TensorFile::new(shape, data).unwrap().to_bytes().unwrap();
        let keep = bytes.len().saturating_sub(cut);
        let err = TensorFile::from_bytes(&bytes[..keep]).unwrap_err();
        prop_assert_eq!(err.kind(), ErrorKind::Data);
    }

    #[test]
    fn events_round_trip(table in event_table()) {
        let text = table.to_tsv().unwrap();
        let back = EventTable::parse_tsv(&text, Path::new("ev.tsv")).unwrap();
        prop_assert_eq!(back.len(), table.len());
        for (a, b) in back.events.iter().zip(&table.events) {
            prop_assert_eq!(a.onset.to_bits(), b.onset.to_bits());
            prop_assert_eq!(a.duration.to_bits(), b.duration.to_bits());
            prop_assert_eq!(&a.trial_id, &b.trial_id);
            prop_assert_eq!(&a.condition, &b.condition);
        }
        prop_assert_eq!(back.to_tsv().unwrap(), text);
    }

    #[test]
    fn masks_round_trip(set in mask_set()) {
        let text = set.to_tsv().unwrap();
        let back = RoiMaskSet::parse_tsv(&text, Path::new("m.tsv")).unwrap();
        prop_assert_eq!(&back, &set);
        prop_assert_eq!(back.to_tsv().unwrap(), text);
    }
}

#[test]
fn nat1_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.nat");
    let t = TensorFile::new(vec![2, 3, 1], vec![1.5, -2.0, 0.0, 1e-300, 7.0, f64::MAX]).unwrap();
    write_tensor(&path, &t).unwrap();
    assert_eq!(read_tensor(&path).unwrap(), t);
    let err = read_tensor(dir.path().join("missing.nat")).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Data);
}

#[test]
fn columns_found_by_name() {
    let text = "condition\ttrial_id\tduration\tonset\nsent\tt1\t0\t4\nsent\tt2\t1.5\t16\n";
    let t = EventTable::parse_tsv(text, Path::new("e.tsv")).unwrap();
    assert_eq!(t.events[1].trial_id, "t2");
    assert_eq!(t.events[1].onset, 16.0);
    assert_eq!(t.events[1].duration, 1.5);
}

#[test]
fn option_rows_keep_order_and_reject_bad_labels() {
    let ok = "item_id\toption_label\ttext\n1\tA\ta b\n1\tB\tc\n2\tE\td\n";
    let rows = parse_options_tsv(ok, Path::new("o.tsv")).unwrap();
    assert_eq!(rows.iter().map(|r| r.label).collect::<String>(), "ABE");
    let bad = "item_id\toption_label\ttext\n1\tF\ta\n";
    assert!(parse_options_tsv(bad, Path::new("o.tsv")).is_err());
    let dup = "item_id\toption_label\ttext\n1\tA\ta\n1\tA\tb\n";
    assert!(parse_options_tsv(dup, Path::new("o.tsv")).is_err());
}
