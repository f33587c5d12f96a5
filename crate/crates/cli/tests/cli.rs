use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dpagg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpagg"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

/// Drops columns whose values are wall-clock timings.
fn without_timings(path: &Path) -> Vec<Vec<String>> {
    let (header, rows) = read_csv(path);
    let keep: Vec<usize> = (0..header.len())
        .filter(|&i| !header[i].ends_with("_ms") && !header[i].contains("_ms_"))
        .collect();
    rows.iter()
        .map(|r| keep.iter().map(|&i| r[i].clone()).collect())
        .collect()
}

fn value(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no {key} in output:\n{text}"))
        .split_whitespace()
        .next()
        .unwrap()
        .trim_end_matches(',')
        .to_string()
}

#[test]
fn params_reports_capacity() {
    let dir = tempfile::tempdir().unwrap();
    let a = dpagg(dir.path(), &["params"]);
    assert!(a.status.success());
    assert_eq!(value(&stdout(&a), "max_clients"), "478");
    assert_eq!(value(&stdout(&a), "n"), "710");
    let c = dpagg(dir.path(), &["params", "--preset", "c"]);
    assert!(value(&stdout(&c), "max_clients").parse::<u64>().unwrap() >= 1000);
    let bad = dpagg(dir.path(), &["params", "--n", "16", "--q", "15"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(dir.path().join("params.resolved.conf").exists());
}

#[test]
fn config_errors_exit_2_and_missing_file_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    fs::write(&conf, "[aggregate]\nclients = 8\nbogus_key = 1\n").unwrap();
    let o = dpagg(
        dir.path(),
        &["aggregate", "--config", conf.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus_key"));
    let o = dpagg(dir.path(), &["aggregate", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    let o = dpagg(dir.path(), &["aggregate", "--mode", "paranoid"]);
    assert_eq!(o.status.code(), Some(2));
    let missing = dir.path().join("absent.conf");
    let o = dpagg(
        dir.path(),
        &["aggregate", "--config", missing.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn aggregate_succeeds_and_aborts() {
    let dir = tempfile::tempdir().unwrap();
    let ok = dpagg(
        dir.path(),
        &[
            "aggregate",
            "--clients",
            "8",
            "--dim",
            "64",
            "--report",
            "agg.csv",
        ],
    );
    assert!(
        ok.status.success(),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    assert!(stdout(&ok).contains("outcome: ok"));
    let (header, rows) = read_csv(&dir.path().join("agg.csv"));
    assert_eq!(header[..2], ["k", "m"]);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][..3], ["8", "64", "710"]);

    let abort = dpagg(
        dir.path(),
        &[
            "aggregate",
            "--clients",
            "8",
            "--dim",
            "64",
            "--mode",
            "malicious",
            "--adversary",
            "corrupt=1,behavior=bad-share-sum",
        ],
    );
    assert_eq!(abort.status.code(), Some(3), "{}", stdout(&abort));
}

#[test]
fn resolved_snapshot_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dpagg(
        dir.path(),
        &[
            "aggregate",
            "--clients",
            "12",
            "--dim",
            "200",
            "--dropout",
            "0.2",
            "--seed",
            "77",
            "--report",
            "first.csv",
        ],
    );
    assert!(first.status.success());
    let snap = dir.path().join("aggregate.resolved.conf");
    let saved = dir.path().join("saved.conf");
    fs::copy(&snap, &saved).unwrap();
    let second = dpagg(
        dir.path(),
        &[
            "aggregate",
            "--config",
            saved.to_str().unwrap(),
            "--report",
            "second.csv",
        ],
    );
    assert!(
        second.status.success(),
        "{}",
        String::from_utf8_lossy(&second.stderr)
    );
    assert_eq!(
        without_timings(&dir.path().join("first.csv")),
        without_timings(&dir.path().join("second.csv"))
    );
}

#[test]
fn bench_smoke_and_plan_validation() {
    let dir = tempfile::tempdir().unwrap();
    let o = dpagg(
        dir.path(),
        &[
            "bench",
            "--clients",
            "8,16",
            "--dims",
            "64,128",
            "--reps",
            "3",
            "--output",
            "b.csv",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&dir.path().join("b.csv"));
    assert_eq!(rows.len(), 2 * 2 * 3);
    assert!(header.iter().any(|h| h == "server_reconstruct_ms"));

    let bad = dpagg(
        dir.path(),
        &["bench", "--clients", "8,600", "--dims", "64", "--reps", "2"],
    );
    assert_eq!(bad.status.code(), Some(2));
    let err = String::from_utf8_lossy(&bad.stderr);
    assert!(err.contains("600"), "{err}");
    assert!(err.contains("reps"), "{err}");
}

#[test]
fn report_merges_and_builds_expansion_curves() {
    let dir = tempfile::tempdir().unwrap();
    let single = dpagg(
        dir.path(),
        &[
            "aggregate",
            "--clients",
            "8",
            "--dim",
            "32",
            "--report",
            "one.csv",
        ],
    );
    assert!(single.status.success());
    let one = dir.path().join("one.csv");
    let o = dpagg(
        dir.path(),
        &["report", one.to_str().unwrap(), "--output", "one_out.csv"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        read_csv(&dir.path().join("one.csv")),
        read_csv(&dir.path().join("one_out.csv"))
    );

    let mut inputs = Vec::new();
    for seed in ["1", "2", "3"] {
        let name = format!("sweep{seed}.csv");
        let o = dpagg(
            dir.path(),
            &[
                "bench",
                "--paper-scale",
                "--clients",
                "500",
                "--dims",
                "256,1024,4096",
                "--reps",
                "3",
                "--seed",
                seed,
                "--output",
                &name,
            ],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        inputs.push(dir.path().join(name).to_string_lossy().into_owned());
    }
    let mut args = vec!["report"];
    args.extend(inputs.iter().map(String::as_str));
    args.extend(["--output", "merged.csv", "--curves", "curves.csv"]);
    let o = dpagg(dir.path(), &args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("27 input rows"), "{}", stdout(&o));
    let (_, curve) = read_csv(&dir.path().join("curves.csv"));
    assert_eq!(curve.len(), 3);
    let e: Vec<f64> = curve.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(curve.iter().all(|r| r[0] == "500"));
    assert!(e.windows(2).all(|w| w[1] <= w[0]), "{e:?}");
}

#[test]
fn accountant_prints_epsilon_and_curves() {
    let dir = tempfile::tempdir().unwrap();
    let o = dpagg(
        dir.path(),
        &[
            "accountant",
            "--sigma",
            "16",
            "--batch",
            "128",
            "--epochs",
            "1",
            "--curves",
            "rdp.csv",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let eps: f64 = value(&text, "epsilon").parse().unwrap();
    assert!(eps > 0.0 && eps < 10.0, "{text}");
    let (header, rows) = read_csv(&dir.path().join("rdp.csv"));
    assert_eq!(header, ["alpha", "rdp_continuous", "rdp_discrete"]);
    assert!(rows.len() > 100);

    let degraded = dpagg(dir.path(), &["accountant", "--honest-fraction", "0.5"]);
    assert!(stdout(&degraded).contains("epsilon_degraded"));
    let bad = dpagg(dir.path(), &["accountant", "--sigma", "-1"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn train_dumps_and_replays_gradients() {
    let dir = tempfile::tempdir().unwrap();
    let o = dpagg(
        dir.path(),
        &[
            "train",
            "--features",
            "9",
            "--examples",
            "300",
            "--epochs",
            "2",
            "--batch",
            "16",
            "--sigma",
            "0",
            "--aggregator",
            "plaintext",
            "--dump-gradients",
            "g.bin",
            "--metrics",
            "m.csv",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&dir.path().join("m.csv"));
    assert_eq!(header[0], "epoch");
    assert_eq!(rows.len(), 2);
    assert!(dir.path().join("g.bin").exists());

    let dumped = dir.path().join("g.bin");
    let replay = dpagg(
        dir.path(),
        &[
            "train",
            "--gradients",
            dumped.to_str().unwrap(),
            "--epochs",
            "1",
            "--batch",
            "16",
            "--sigma",
            "1",
            "--metrics",
            "replay.csv",
        ],
    );
    assert!(
        replay.status.success(),
        "{}",
        String::from_utf8_lossy(&replay.stderr)
    );
    assert_eq!(read_csv(&dir.path().join("replay.csv")).1.len(), 1);

    let bad = dpagg(dir.path(), &["train", "--sigma", "3"]);
    assert_eq!(bad.status.code(), Some(2));
}
