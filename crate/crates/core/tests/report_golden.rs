use std::fs;
use std::path::PathBuf;

use servenet::metrics::{render_report, CategoryAccuracy, EvalReport, ReportFormat};

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests")
}

/// Per-category top-5 accuracies published for the full model, with the
/// published overall top-1/top-5 on 2061 test services.
fn published_report() -> EvalReport {
    let rows = fs::read_to_string(dir().join("fixtures/table3_servenet.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let (name, acc) = l.rsplit_once(',').unwrap();
            CategoryAccuracy {
                name: name.to_string(),
                support: None,
                accuracy: acc.parse().unwrap(),
            }
        })
        .collect();
    EvalReport::from_categories(2061, 5, 63.31, 88.40, rows)
}

#[test]
fn text_table_matches_golden() {
    let text = render_report(&published_report(), ReportFormat::Text).unwrap();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(dir().join("golden/table3_servenet.txt"), &text).unwrap();
    }
    assert_eq!(text, fs::read_to_string(dir().join("golden/table3_servenet.txt")).unwrap());
}

#[test]
fn published_sigma() {
    let r = published_report();
    assert_eq!(r.per_category.len(), 50);
    assert!((r.sigma - 11.69).abs() <= 0.05, "{}", r.sigma);
}

#[test]
fn radar_rows_and_json_round_trip() {
    let r = published_report();
    let csv = render_report(&r, ReportFormat::RadarCsv).unwrap();
    assert_eq!(csv.lines().count(), 51);
    assert!(csv.contains("\nProject Management,85.71\n"));
    let back: EvalReport = serde_json::from_str(&render_report(&r, ReportFormat::Json).unwrap()).unwrap();
    assert_eq!(back, r);
}

#[test]
fn emit_writes_files() {
    let tmp = tempfile::tempdir().unwrap();
    let r = published_report();
    for f in [ReportFormat::Text, ReportFormat::Json, ReportFormat::RadarCsv] {
        let path = tmp.path().join(format!("report.{}", f.extension()));
        servenet::metrics::emit_report(&r, f, &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), render_report(&r, f).unwrap());
    }
    let missing = tmp.path().join("no/such/dir/report.txt");
    assert!(matches!(
        servenet::metrics::emit_report(&r, ReportFormat::Text, missing),
        Err(servenet::Error::Io(_))
    ));
}
