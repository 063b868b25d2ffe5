//! Scenario-driven bad-channel detection checks against ground truth.

mod common;

use std::collections::BTreeSet;

use speed_core::badchan::{detect_bad_channels, detect_ransac, BadChanConfig, Criterion, RansacConfig};
use speed_core::channels::{apply_montage, AliasTable, Montage};
use speed_core::synth::{builtin_scenario, gen_scenario};

fn prepared(name: &str, seed: u64) -> speed_core::RawRecording<f64> {
    let sc = builtin_scenario(name, seed).unwrap();
    let (rec, _) = gen_scenario::<f64>(&sc);
    let (rec, _) = apply_montage(&rec, &Montage::standard_1020_19(), &AliasTable::standard()).unwrap();
    rec
}

#[test]
fn badmix_detection_without_ransac() {
    let rec = prepared("badmix", 2);
    let report =
        detect_bad_channels(&rec.data, rec.fs, &rec.channels, false, 99, &BadChanConfig::default())
            .unwrap();
    let want: BTreeSet<String> = ["T7", "O2", "F3", "P4"].iter().map(|s| s.to_string()).collect();
    assert_eq!(report.union, want, "z scores: {:?}", report.z_scores);
    // each fault lands under its criterion
    let flat = &report.by_criterion[&Criterion::Flat];
    assert!(flat.contains("T7") && flat.contains("O2"));
    assert!(report.by_criterion[&Criterion::Deviation].contains("F3"));
    let shuffled_caught = report
        .by_criterion
        .get(&Criterion::Correlation)
        .map(|s| s.contains("P4"))
        .unwrap_or(false);
    assert!(shuffled_caught, "shuffled channel not under correlation");
}

#[test]
fn badmix_detection_with_ransac() {
    let rec = prepared("badmix", 2);
    let report =
        detect_bad_channels(&rec.data, rec.fs, &rec.channels, true, 99, &BadChanConfig::default())
            .unwrap();
    let want: BTreeSet<String> = ["T7", "O2", "F3", "P4"].iter().map(|s| s.to_string()).collect();
    assert_eq!(report.union, want);
}

#[test]
fn clean_scenario_has_empty_union() {
    for seed in [1, 2, 3] {
        let rec = prepared("clean19", seed);
        for with_ransac in [false, true] {
            let report = detect_bad_channels(
                &rec.data,
                rec.fs,
                &rec.channels,
                with_ransac,
                7,
                &BadChanConfig::default(),
            )
            .unwrap();
            assert!(
                report.union.is_empty(),
                "seed {seed} ransac {with_ransac}: flagged {:?} (z: {:?})",
                report.union,
                report.z_scores
            );
        }
    }
}

#[test]
fn ransac_is_deterministic_across_runs() {
    let rec = prepared("badmix", 5);
    let run = || {
        detect_bad_channels(&rec.data, rec.fs, &rec.channels, true, 1234, &BadChanConfig::default())
            .unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a.union, b.union);
    assert_eq!(
        a.z_scores.get(&Criterion::Ransac),
        b.z_scores.get(&Criterion::Ransac)
    );
}

#[test]
fn ransac_flags_shuffled_channel_on_smooth_field() {
    use speed_core::filter::{fir_filter, FilterSpec};
    let rec = prepared("clean19", 9);
    let mut data = rec.data.clone();
    // destroy channel 6 by shuffling its samples (deterministic stride
    // permutation keeps the marginal distribution)
    let n = data.ncols();
    let row: Vec<f64> = data.row(6).to_vec();
    let stride = 7919; // prime, coprime with n
    for t in 0..n {
        data[[6, t]] = row[(t * stride) % n];
    }
    // callers hand RANSAC the 50 Hz-lowpassed detection copy
    let low = fir_filter(&data, rec.fs, &FilterSpec::lowpass(50.0)).unwrap();
    let positions: Vec<[f64; 3]> = rec.channels.iter().map(|c| c.position.unwrap()).collect();
    let cfg = RansacConfig { seed: 11, ..RansacConfig::default() };
    let (flagged, fracs) = detect_ransac(&low, rec.fs, &positions, &cfg).unwrap();
    assert!(flagged.contains(&6), "fracs {fracs:?}");
    // consistent smooth field: nothing else flagged
    assert_eq!(flagged.len(), 1, "extra flags: {flagged:?}");
}

#[test]
fn detection_does_not_mutate_input() {
    let rec = prepared("badmix", 3);
    let before = rec.data.clone();
    let _ = detect_bad_channels(&rec.data, rec.fs, &rec.channels, true, 42, &BadChanConfig::default())
        .unwrap();
    assert_eq!(rec.data, before);
}

#[test]
fn flat_channels_always_in_union() {
    let rec = prepared("badmix", 8);
    let report =
        detect_bad_channels(&rec.data, rec.fs, &rec.channels, false, 1, &BadChanConfig::default())
            .unwrap();
    for ch in &report.by_criterion[&Criterion::Flat] {
        assert!(report.union.contains(ch));
    }
}
