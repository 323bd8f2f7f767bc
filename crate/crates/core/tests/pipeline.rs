use gspf::io::{read_sequence, write_sequence};
use gspf::report::RunInfo;
use gspf::simlab::{generate, Family, SimulationSpec};
use gspf::{DetectionReport, Detector, DetectorConfig};

#[test]
fn csv_roundtrip_gives_the_same_detection() {
    let ds = generate(&SimulationSpec::new(Family::Symmetric, 5, 21)).unwrap();
    let mut buf = Vec::new();
    write_sequence(&mut buf, &ds.seq, true).unwrap();
    let back = read_sequence(buf.as_slice(), true).unwrap();

    let detector = Detector::default();
    let a = detector.detect(&ds.seq).unwrap();
    let b = detector.detect(&back).unwrap();
    assert_eq!(a.change_points, b.change_points);
    assert_eq!(a.change_points, ds.truth);
}

#[test]
fn report_links_every_stage() {
    let ds = generate(&SimulationSpec::new(Family::Asymmetric, 5, 3)).unwrap();
    let config = DetectorConfig::default();
    let detection = Detector::new(config.clone()).unwrap().detect(&ds.seq).unwrap();
    let report = DetectionReport::new(&detection, &config, RunInfo::default());

    for cp in &report.change_points {
        assert!(report.representatives.contains(cp));
    }
    assert_eq!(report.tests.len(), report.representatives.len());
    let retained: Vec<usize> = report.tests.iter().filter(|t| t.retained).map(|t| t.representative).collect();
    assert_eq!(retained, report.change_points);
    assert!(report.tests.iter().all(|t| t.p_adjusted >= t.p_raw));
    assert_eq!(report.config.n_curves, ds.seq.len());

    let json = serde_json::to_string(&report).unwrap();
    let back: DetectionReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, report);
}

#[test]
fn stricter_alpha_never_adds_change_points() {
    let ds = generate(&SimulationSpec::new(Family::Benchmark, 5, 8)).unwrap();
    let detection = Detector::default().detect(&ds.seq).unwrap();
    let mut previous = usize::MAX;
    for alpha in [0.05, 0.01, 1e-3, 1e-4, 1e-5] {
        let n = detection.change_points_at(alpha).len();
        assert!(n <= previous);
        previous = n;
    }
}
