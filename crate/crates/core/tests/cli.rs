//! End-to-end runs of the `gsmnmf` binary: exit codes, output files,
//! reproducibility and the grid CSV.

use std::path::Path;
use std::process::{Command, Output};

use gsmnmf::audio_io::read_wav;
use gsmnmf::harness::{config_hash, SeparationReport};
use gsmnmf::metrics::MetricReport;
use gsmnmf::model::SeparationConfig;
use gsmnmf::priors::GsmVariant;

fn gsmnmf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gsmnmf"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn synth(dir: &Path) {
    let out = gsmnmf(&[
        "synth",
        "--duration",
        "1",
        "--scene-seed",
        "3",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

const FAST: [&str; 6] = ["--iters", "5", "--n-fft", "256", "--hop", "64"];

#[test]
fn help_version_and_usage_errors() {
    assert_eq!(code(&gsmnmf(&["--help"])), 0);
    assert_eq!(code(&gsmnmf(&["separate", "--help"])), 0);
    assert_eq!(code(&gsmnmf(&["--version"])), 0);
    assert_eq!(code(&gsmnmf(&[])), 1);
    assert_eq!(code(&gsmnmf(&["separate"])), 1);
    let out = gsmnmf(&["separate", "mix.wav", "--model", "gg", "--beta", "2.5"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--beta"));
    assert_eq!(code(&gsmnmf(&["separate", "mix.wav", "--nu", "-1"])), 1);
    assert_eq!(code(&gsmnmf(&["synth", "--scene-sources", "3", "--mics", "2"])), 1);
}

#[test]
fn runtime_failures_exit_2() {
    assert_eq!(code(&gsmnmf(&["separate", "/nonexistent/mix.wav"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("grid.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(code(&gsmnmf(&["bench", bad.to_str().unwrap()])), 2);
}

#[test]
fn rank1_with_fewer_channels_than_sources_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let mix = dir.path().join("mixture.wav");
    let out = gsmnmf(&["separate", mix.to_str().unwrap(), "--rank1", "-N", "3"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn synth_separate_evaluate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let d = dir.path();
    for f in ["mixture.wav", "ref_0.wav", "ref_1.wav", "scene.json"] {
        assert!(d.join(f).exists(), "{f} missing");
    }
    let sep_dir = d.join("sep");
    let mix_path = d.join("mixture.wav");
    let mut args = vec![
        "separate",
        mix_path.to_str().unwrap(),
        "--model",
        "t",
        "--nu",
        "40",
        "-K",
        "4",
        "--seed",
        "7",
        "--images",
        "--out-dir",
        sep_dir.to_str().unwrap(),
    ];
    args.extend_from_slice(&FAST);
    let out = gsmnmf(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let report = SeparationReport::from_json(&std::fs::read_to_string(sep_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.config.variant, GsmVariant::StudentT { nu: 40.0 });
    assert_eq!((report.config.n_sources, report.config.n_bases, report.config.iterations), (2, 4, 5));
    assert_eq!(report.seed, 7);
    assert_eq!(report.ll_trace.values.len(), 5);
    assert_eq!(report.stft.n_fft, 256);
    let mix = read_wav(d.join("mixture.wav")).unwrap();
    for i in 0..2 {
        let src = read_wav(sep_dir.join(format!("source_{i}.wav"))).unwrap();
        assert_eq!((src.channels(), src.frames()), (1, mix.frames()));
        let img = read_wav(sep_dir.join(format!("image_{i}.wav"))).unwrap();
        assert_eq!(img.channels(), 2);
    }

    let eval_path = d.join("eval.json");
    let out = gsmnmf(&[
        "evaluate",
        "--estimates",
        sep_dir.join("source_0.wav").to_str().unwrap(),
        sep_dir.join("source_1.wav").to_str().unwrap(),
        "--references",
        d.join("ref_0.wav").to_str().unwrap(),
        d.join("ref_1.wav").to_str().unwrap(),
        "--mixture",
        d.join("mixture.wav").to_str().unwrap(),
        "--report",
        eval_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: MetricReport = serde_json::from_str(&std::fs::read_to_string(eval_path).unwrap()).unwrap();
    assert_eq!(metrics.per_source.len(), 2);
    assert!(metrics.input_si_sdr.is_some());
    let mut assigned: Vec<usize> = metrics.per_source.iter().map(|s| s.assigned_reference).collect();
    assigned.sort();
    assert_eq!(assigned, vec![0, 1]);

    // a mismatched estimate/reference count is a usage error
    let out = gsmnmf(&[
        "evaluate",
        "--estimates",
        sep_dir.join("source_0.wav").to_str().unwrap(),
        "--references",
        d.join("ref_0.wav").to_str().unwrap(),
        d.join("ref_1.wav").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn seeded_separation_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let mix = dir.path().join("mixture.wav");
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let mut args = vec![
            "separate",
            mix.to_str().unwrap(),
            "--seed",
            "11",
            "--out-dir",
            out_dir.to_str().unwrap(),
        ];
        args.extend_from_slice(&FAST);
        assert_eq!(code(&gsmnmf(&args)), 0);
        let mut r = SeparationReport::from_json(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
        r.runtime_ms = 0.0;
        reports.push((r, std::fs::read(out_dir.join("source_0.wav")).unwrap()));
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn bench_grid_rows_dedup_and_empty() {
    let dir = tempfile::tempdir().unwrap();
    let base = SeparationConfig {
        iterations: 2,
        ..Default::default()
    };
    let mut grid: Vec<SeparationConfig> = [2, 4, 8, 16, 32]
        .iter()
        .map(|&k| SeparationConfig { n_bases: k, ..base })
        .collect();
    grid.push(grid[1]);
    let grid_path = dir.path().join("grid.json");
    std::fs::write(&grid_path, serde_json::to_string(&grid).unwrap()).unwrap();
    let csv_path = dir.path().join("out.csv");
    let mut args = vec![
        "bench",
        grid_path.to_str().unwrap(),
        "--duration",
        "1",
        "--jobs",
        "2",
        "--out",
        csv_path.to_str().unwrap(),
    ];
    args.extend_from_slice(&["--n-fft", "256", "--hop", "64"]);
    let out = gsmnmf(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(&csv_path).unwrap();
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(&headers[0], "config_hash");
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 5);
    for (row, cfg) in rows.iter().zip(&grid) {
        assert_eq!(&row[0], config_hash(cfg));
        assert_eq!(row[3].parse::<usize>().unwrap(), cfg.n_bases);
        assert!(row[7].parse::<f64>().is_ok(), "mean SI-SDR present");
    }

    std::fs::write(&grid_path, "[]").unwrap();
    let out = gsmnmf(&["bench", grid_path.to_str().unwrap(), "--duration", "1"]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1);
    assert!(stdout.starts_with("config_hash,model,"));
}
