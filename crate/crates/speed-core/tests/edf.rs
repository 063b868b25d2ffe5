//! EDF write/parse round trips and header edge cases.

mod common;

use speed_core::edf::{parse_edf, EdfError, RawRecording};
use speed_core::synth::{builtin_scenario, gen_scenario, write_edf_to, Scenario};

fn parse_bytes(bytes: &[u8]) -> Result<speed_core::edf::EdfFile<f64>, EdfError> {
    parse_edf(std::io::Cursor::new(bytes))
}

#[test]
fn scenario_round_trip_within_one_quantum() {
    let sc = builtin_scenario("line60", 11).unwrap();
    let (rec, _) = gen_scenario::<f64>(&sc);
    let mut buf = Vec::new();
    write_edf_to(&rec, &mut buf).unwrap();
    let parsed = parse_bytes(&buf).unwrap();
    let back: RawRecording<f64> = parsed.into_recording("roundtrip").unwrap();
    assert_eq!(back.n_channels(), rec.n_channels());
    assert_eq!(back.n_samples(), rec.n_samples());
    assert_eq!(back.fs, rec.fs);
    // per-channel quantum from the written range
    for (c, (orig_row, back_row)) in rec.data.rows().into_iter().zip(back.data.rows()).enumerate()
    {
        let max_abs = orig_row.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
        let quantum = 2.0 * max_abs * 1.0001 / 65535.0;
        let worst = orig_row
            .iter()
            .zip(back_row.iter())
            .fold(0.0_f64, |a, (&x, &y)| a.max((x - y).abs()));
        assert!(worst <= quantum, "channel {c}: error {worst} > quantum {quantum}");
    }
}

#[test]
fn annotations_round_trip_exactly() {
    let sc = Scenario {
        name: "events".into(),
        duration_secs: 30.0,
        events: vec![
            (0.5, 0.0, "start".into()),
            (12.25, 1.5, "blink".into()),
            (29.0, 0.25, "end".into()),
        ],
        seed: 3,
        ..Scenario::default()
    };
    let (rec, _) = gen_scenario::<f64>(&sc);
    let mut buf = Vec::new();
    write_edf_to(&rec, &mut buf).unwrap();
    let parsed = parse_bytes(&buf).unwrap();
    assert_eq!(parsed.annotations.len(), 3);
    for (got, want) in parsed.annotations.iter().zip(rec.annotations.iter()) {
        assert_eq!(got.onset, want.onset);
        assert_eq!(got.duration, want.duration);
        assert_eq!(got.text, want.text);
    }
}

#[test]
fn no_events_parses_to_zero_annotations() {
    let sc = Scenario {
        duration_secs: 5.0,
        seed: 1,
        ..Scenario::default()
    };
    let (rec, _) = gen_scenario::<f64>(&sc);
    let mut buf = Vec::new();
    write_edf_to(&rec, &mut buf).unwrap();
    let parsed = parse_bytes(&buf).unwrap();
    assert!(parsed.annotations.is_empty());
    assert!(!parsed.header.edf_plus);
}

/// Hand-built minimal EDF: 1 signal, 1 record, 4 samples pinned to the
/// digital extremes and midpoints.
fn minimal_edf(reserved: &str, dig: &[i16], samples_per_record: usize, n_records: i32) -> Vec<u8> {
    let mut h = Vec::new();
    let pad = |s: &str, w: usize| -> Vec<u8> {
        let mut b = s.as_bytes().to_vec();
        b.truncate(w);
        b.resize(w, b' ');
        b
    };
    h.extend(pad("0", 8));
    h.extend(pad("patient", 80));
    h.extend(pad("recording", 80));
    h.extend(pad("01.01.01", 8));
    h.extend(pad("00.00.00", 8));
    h.extend(pad("512", 8)); // 256 * (1 + 1)
    h.extend(pad(reserved, 44));
    h.extend(pad(&n_records.to_string(), 8));
    h.extend(pad("1", 8));
    h.extend(pad("1", 4));
    // signal header block
    h.extend(pad("EEG FP1-REF", 16));
    h.extend(pad("", 80));
    h.extend(pad("uV", 8));
    h.extend(pad("-100", 8)); // phys min
    h.extend(pad("100", 8)); // phys max
    h.extend(pad("-32768", 8));
    h.extend(pad("32767", 8));
    h.extend(pad("", 80));
    h.extend(pad(&samples_per_record.to_string(), 8));
    h.extend(pad("", 32));
    for &d in dig {
        h.extend(d.to_le_bytes());
    }
    h
}

#[test]
fn calibration_endpoints_are_exact() {
    let bytes = minimal_edf("", &[-32768, 32767, 0, -32768], 4, 1);
    let parsed = parse_bytes(&bytes).unwrap();
    let sig = &parsed.signals[0];
    assert_eq!(sig.samples[0], -100.0);
    assert_eq!(sig.samples[1], 100.0);
    // affine and monotone in the digital code
    let gain = 200.0 / 65535.0;
    assert!((sig.samples[2] - (-100.0 + 32768.0 * gain)).abs() < 1e-9);
    assert!(sig.samples[0] < sig.samples[2] && sig.samples[2] < sig.samples[1]);
}

#[test]
fn discontinuous_files_are_rejected() {
    let bytes = minimal_edf("EDF+D", &[0, 0, 0, 0], 4, 1);
    assert!(matches!(parse_bytes(&bytes), Err(EdfError::Discontinuous)));
}

#[test]
fn truncated_file_is_a_size_mismatch() {
    let mut bytes = minimal_edf("", &[0, 0, 0, 0], 4, 1);
    bytes.truncate(bytes.len() - 3);
    assert!(matches!(parse_bytes(&bytes), Err(EdfError::SizeMismatch { .. })));
}

#[test]
fn unknown_record_count_resolves_from_file_size() {
    let bytes = minimal_edf("", &[100, 200, 300, 400], 2, -1);
    let parsed = parse_bytes(&bytes).unwrap();
    assert_eq!(parsed.header.n_data_records, 2);
    assert_eq!(parsed.signals[0].samples.len(), 4);
}

#[test]
fn zero_records_is_empty() {
    let bytes = minimal_edf("", &[], 4, 0);
    assert!(matches!(parse_bytes(&bytes), Err(EdfError::EmptyRecording)));
}

/// Two signals at different rates: parser keeps both; harmonization is the
/// caller's job.
fn mixed_rate_edf() -> Vec<u8> {
    let mut h = Vec::new();
    let pad = |s: &str, w: usize| -> Vec<u8> {
        let mut b = s.as_bytes().to_vec();
        b.truncate(w);
        b.resize(w, b' ');
        b
    };
    h.extend(pad("0", 8));
    h.extend(pad("p", 80));
    h.extend(pad("r", 80));
    h.extend(pad("02.03.99", 8));
    h.extend(pad("10.20.30", 8));
    h.extend(pad(&(256 * 3).to_string(), 8));
    h.extend(pad("", 44));
    h.extend(pad("2", 8));
    h.extend(pad("1", 8));
    h.extend(pad("2", 4));
    // labels
    h.extend(pad("EEG FP1-REF", 16));
    h.extend(pad("EEG CZ-REF", 16));
    h.extend(pad("", 80));
    h.extend(pad("", 80));
    h.extend(pad("uV", 8));
    h.extend(pad("uV", 8));
    for _ in 0..2 {
        h.extend(pad("-100", 8));
    }
    for _ in 0..2 {
        h.extend(pad("100", 8));
    }
    for _ in 0..2 {
        h.extend(pad("-32768", 8));
    }
    for _ in 0..2 {
        h.extend(pad("32767", 8));
    }
    h.extend(pad("", 80));
    h.extend(pad("", 80));
    h.extend(pad("4", 8)); // 4 Hz
    h.extend(pad("2", 8)); // 2 Hz
    h.extend(pad("", 32));
    h.extend(pad("", 32));
    // two records: signal0 4 samples then signal1 2 samples each
    for _rec in 0..2 {
        for d in [0i16, 100, 200, 300] {
            h.extend(d.to_le_bytes());
        }
        for d in [1000i16, 2000] {
            h.extend(d.to_le_bytes());
        }
    }
    h
}

#[test]
fn mixed_rates_parse_losslessly_and_block_recording_assembly() {
    let parsed = parse_bytes(&mixed_rate_edf()).unwrap();
    assert!(!parsed.uniform_rate());
    assert_eq!(parsed.signals[0].fs, 4.0);
    assert_eq!(parsed.signals[1].fs, 2.0);
    assert_eq!(parsed.signals[0].samples.len(), 8);
    assert_eq!(parsed.signals[1].samples.len(), 4);
    assert_eq!(parsed.header.start_datetime.year, 1999);
    assert_eq!(parsed.header.start_datetime.hour, 10);
    assert!(matches!(
        parsed.into_recording("x"),
        Err(EdfError::MixedSamplingRates)
    ));
}

#[test]
fn parse_is_deterministic() {
    let sc = builtin_scenario("clean19", 4).unwrap();
    let (rec, _) = gen_scenario::<f64>(&sc);
    let mut buf = Vec::new();
    write_edf_to(&rec, &mut buf).unwrap();
    let a = parse_bytes(&buf).unwrap().into_recording("a").unwrap();
    let b = parse_bytes(&buf).unwrap().into_recording("a").unwrap();
    assert_eq!(a.data, b.data);
}
