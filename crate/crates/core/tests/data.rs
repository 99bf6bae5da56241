use std::path::Path;

use proptest::prelude::*;

use xbar_snn::data::{
    format_event_records, parse_event_file, parse_event_records, poisson_encode, write_event_file, Dataset, EventStream,
    LabeledSample, SpikeEvent, SyntheticSpec,
};
use xbar_snn::Error;

fn stream() -> impl Strategy<Value = EventStream> {
    (1usize..20, 1usize..40).prop_flat_map(|(c, t)| {
        prop::collection::vec((0..t as u32, 0..c as u32), 0..60).prop_map(move |v| {
            let ev = v.into_iter().map(|(step, channel)| SpikeEvent { step, channel }).collect();
            EventStream::new(ev, c, t).unwrap()
        })
    })
}

fn is_canonical(s: &EventStream) -> bool {
    s.events().windows(2).all(|w| w[0] < w[1])
        && s.events().iter().all(|e| (e.channel as usize) < s.n_channels() && (e.step as usize) < s.n_steps())
}

proptest! {
    #[test]
    fn records_round_trip(streams in prop::collection::vec((stream(), 0usize..5), 1..4)) {
        let samples: Vec<LabeledSample> = streams.into_iter().map(|(stream, label)| LabeledSample { stream, label }).collect();
        let text = format_event_records(&samples);
        let back = parse_event_records(&text, Path::new("mem")).unwrap();
        prop_assert_eq!(back, samples);
    }

    #[test]
    fn streams_are_canonical(s in stream()) {
        prop_assert!(is_canonical(&s));
        let frames = s.frames(s.n_steps());
        let spikes: usize = frames.iter().map(|f| f.iter().filter(|&&b| b).count()).sum();
        prop_assert_eq!(spikes, s.len());
    }
}

#[test]
fn file_round_trip_and_silent_record() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.evt");
    let s = EventStream::new(vec![SpikeEvent { step: 3, channel: 1 }, SpikeEvent { step: 0, channel: 2 }], 4, 10).unwrap();
    let samples = vec![
        LabeledSample { stream: s, label: 1 },
        LabeledSample { stream: EventStream::empty(4, 10), label: 0 },
    ];
    write_event_file(&path, &samples).unwrap();
    assert_eq!(parse_event_file(&path).unwrap(), samples);

    let silent = parse_event_records("n_channels=3\nn_steps=5\nlabel=2\nstep,channel\n", Path::new("m")).unwrap();
    assert!(silent[0].stream.is_empty());
}

#[test]
fn malformed_input_reports_line() {
    let bad_channel = "n_channels=2\nn_steps=5\nlabel=0\nstep,channel\n0,1\n1,2\n";
    match parse_event_records(bad_channel, Path::new("f.evt")) {
        Err(Error::Parse { line, reason, .. }) => {
            assert_eq!(line, 6);
            assert!(reason.contains("channel"), "{reason}");
        }
        other => panic!("expected parse error, got {other:?}"),
    }
    let garbage = "n_channels=2\nn_steps=5\nlabel=0\nstep,channel\n0,x\n";
    assert!(matches!(parse_event_records(garbage, Path::new("f")), Err(Error::Parse { line: 5, .. })));
    let no_header = "step,channel\n0,0\n";
    assert!(parse_event_records(no_header, Path::new("f")).is_err());
    assert!(matches!(parse_event_file(Path::new("/nonexistent/x.evt")), Err(Error::Io { .. })));
}

#[test]
fn polarity_doubles_channels() {
    let text = "n_channels=3\nn_steps=4\nlabel=0\nstep,channel,polarity\n0,0,1\n1,2,0\n";
    let s = &parse_event_records(text, Path::new("p")).unwrap()[0].stream;
    assert_eq!(s.n_channels(), 6);
    let got: Vec<(u32, u32)> = s.events().iter().map(|e| (e.step, e.channel)).collect();
    assert_eq!(got, vec![(0, 1), (1, 4)]);
}

#[test]
fn poisson_examples() {
    assert!(poisson_encode(&[0.0, 0.0], 100, 1).unwrap().is_empty());
    let full = poisson_encode(&[1.0], 50, 1).unwrap();
    assert_eq!(full.len(), 50);
    let s = poisson_encode(&[0.2], 10_000, 7).unwrap();
    let f = s.len() as f64 / 10_000.0;
    assert!((f - 0.2).abs() < 0.01, "frequency {f}");
    assert_eq!(poisson_encode(&[0.3; 4], 200, 9).unwrap(), poisson_encode(&[0.3; 4], 200, 9).unwrap());
    assert!(poisson_encode(&[1.5], 10, 1).is_err());
}

#[test]
fn synthetic_examples() {
    let spec = SyntheticSpec {
        n_classes: 3,
        train_per_class: 5,
        test_per_class: 2,
        jitter: 0,
        noise_rate: 0.0,
        ..SyntheticSpec::default()
    };
    let ds = spec.generate().unwrap();
    for c in 0..3 {
        let of_class: Vec<_> = ds.train.iter().filter(|s| s.label == c).collect();
        assert_eq!(of_class.len(), 5);
        assert!(of_class.iter().all(|s| s.stream == of_class[0].stream));
    }
    assert_eq!(ds, spec.generate().unwrap());
    assert!(ds.train.iter().chain(&ds.test).all(|s| is_canonical(&s.stream)));
    assert!(SyntheticSpec { n_classes: 1, ..SyntheticSpec::default() }.generate().is_err());
}

#[test]
fn jittered_samples_concentrate_near_anchors() {
    let spec = SyntheticSpec {
        n_classes: 2,
        train_per_class: 200,
        test_per_class: 0,
        jitter: 3,
        noise_rate: 0.002,
        ..SyntheticSpec::default()
    };
    let templates = spec.templates().unwrap();
    let ds = spec.generate().unwrap();
    let near = |s: &EventStream, t: &EventStream| {
        s.events()
            .iter()
            .filter(|e| t.events().iter().any(|a| a.channel == e.channel && (a.step as i64 - e.step as i64).abs() <= 3))
            .count()
    };
    let (mut own, mut other, mut total) = (0usize, 0usize, 0usize);
    for s in ds.train.iter().filter(|s| s.label == 0) {
        own += near(&s.stream, &templates[0]);
        other += near(&s.stream, &templates[1]);
        total += s.stream.len();
    }
    assert!(own as f64 > 0.75 * total as f64, "{own} of {total} near own anchors");
    assert!(own > 2 * other);
}

#[test]
fn dataset_dir_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        n_classes: 2,
        train_per_class: 3,
        test_per_class: 1,
        ..SyntheticSpec::default()
    };
    let ds = spec.generate().unwrap();
    let manifest = ds.write_to_dir(dir.path()).unwrap();
    assert_eq!(Dataset::load(dir.path()).unwrap(), ds);
    assert_eq!(Dataset::load(&manifest).unwrap(), ds);
    assert!(Dataset::load(&dir.path().join("missing")).is_err());
}
