use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn geodet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geodet"))
        .args(args)
        .current_dir(dir)
        .env_remove("GEODET_SEED")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn synth(dir: &Path, seed: &str, name: &str) -> PathBuf {
    let o = geodet(dir, &["synth", "--seed", seed, "--out", name]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir.join(name)
}

fn data_lines(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn synth_output_ingests_cleanly_with_matching_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let ws = synth(tmp.path(), "4", "ws");
    let o = geodet(tmp.path(), &["ingest", "--config", "ws/config.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains(&format!("stations: {} rows", data_lines(&ws.join("stations.csv")))), "{out}");
    assert!(out.contains(&format!("cases: {} rows", data_lines(&ws.join("cases.csv")))), "{out}");
    assert!(out.contains(&format!("cities: {} rows", data_lines(&ws.join("cities.csv")))), "{out}");
}

#[test]
fn seed_changes_data_but_not_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let a = synth(tmp.path(), "1", "a");
    let b = synth(tmp.path(), "2", "b");
    for f in ["stations.csv", "cases.csv", "cities.csv"] {
        let (x, y) = (fs::read_to_string(a.join(f)).unwrap(), fs::read_to_string(b.join(f)).unwrap());
        assert_eq!(x.lines().next(), y.lines().next(), "{f}");
        if f != "cities.csv" {
            assert_ne!(x, y, "{f}");
        }
    }
}

#[test]
fn synth_rejects_single_year() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("spec.json"), r#"{"years": 1}"#).unwrap();
    let o = geodet(tmp.path(), &["synth", "spec.json", "--out", "ws"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("years"), "{}", stderr(&o));
}

fn run(dir: &Path, config: &str, out: &str, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--config", config, "--out", out];
    args.extend_from_slice(extra);
    geodet(dir, &args)
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn planted_factor_tops_the_table_and_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "7", "ws");
    let o = run(tmp.path(), "ws/config.json", "r1", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(tmp.path(), "ws/config.json", "r2", &["--jobs", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let (r1, r2) = (files(&tmp.path().join("r1")), files(&tmp.path().join("r2")));
    let names: Vec<&str> = r1.iter().map(|f| f.0.as_str()).collect();
    assert_eq!(
        names,
        [
            "interaction_RSV_all_all_all.csv",
            "interaction_RSV_all_all_all.svg",
            "q_table.csv",
            "q_table.json",
            "region_tests.csv",
            "run_manifest.json"
        ]
    );
    assert_eq!(r1, r2);

    let table = fs::read_to_string(tmp.path().join("r1/q_table.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    let header: Vec<&str> = lines[0].split(',').collect();
    let row: Vec<&str> = lines[1].split(',').collect();
    let q = |s: &str| s.trim_end_matches(['*', '†']).parse::<f64>().unwrap();
    let (best, _) = header[5..]
        .iter()
        .zip(&row[5..])
        .max_by(|a, b| q(a.1).total_cmp(&q(b.1)))
        .unwrap();
    assert_eq!(*best, "Temp");
    let temp = row[header.iter().position(|h| *h == "Temp").unwrap()];
    assert!(temp.ends_with('*') || temp.ends_with('†'), "{temp}");

    let manifest = fs::read_to_string(tmp.path().join("r1/run_manifest.json")).unwrap();
    assert!(manifest.contains("\"sha256\""));
}

#[test]
fn report_rerenders_identically_from_saved_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "8", "ws");
    assert_eq!(code(&run(tmp.path(), "ws/config.json", "r", &[])), 0);
    let o = geodet(tmp.path(), &["report", "r/q_table.json", "--out", "again"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["q_table.csv", "q_table.json", "interaction_RSV_all_all_all.svg", "interaction_RSV_all_all_all.csv"] {
        let a = fs::read_to_string(tmp.path().join("r").join(f)).unwrap();
        let b = fs::read_to_string(tmp.path().join("again").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn intermediate_commands_write_their_tables() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "9", "ws");
    for (cmd, file) in [
        ("aggregate", "station_months.csv"),
        ("interpolate", "city_months.csv"),
        ("rates", "outcomes.csv"),
    ] {
        let o = geodet(tmp.path(), &[cmd, "--config", "ws/config.json", "--out", "mid"]);
        assert_eq!(code(&o), 0, "{cmd}: {}", stderr(&o));
        assert!(data_lines(&tmp.path().join("mid").join(file)) > 0, "{file}");
    }
    // two stations and two cities over five years; one series of 60 months
    assert_eq!(data_lines(&tmp.path().join("mid/station_months.csv")), 120);
    assert_eq!(data_lines(&tmp.path().join("mid/city_months.csv")), 120);
    assert_eq!(data_lines(&tmp.path().join("mid/outcomes.csv")), 60);
}

const STATIONS_HEADER: &str = "station_id,lat,lon,date,temp,pressure,vapour,rain,sun,rh,wind\n";

fn write_trio(dir: &Path, stations: &str, cases: &str) {
    fs::write(dir.join("stations.csv"), stations).unwrap();
    fs::write(dir.join("cases.csv"), cases).unwrap();
    fs::write(dir.join("cities.csv"), "city_id,lat,lon,region\nbj,39.9,116.4,north\n").unwrap();
}

fn ingest_trio(dir: &Path) -> Output {
    geodet(dir, &["ingest", "--stations", "stations.csv", "--cases", "cases.csv", "--cities", "cities.csv"])
}

const CASES_OK: &str = "month,city_or_region,virus,age_band,sex,tested,positive\n2010-01,bj,RSV,,,100,20\n";

#[test]
fn bad_latitude_is_reported_with_its_line() {
    let tmp = tempfile::tempdir().unwrap();
    let mut s = String::from(STATIONS_HEADER);
    for day in 1..=5 {
        s.push_str(&format!("a,39.9,116.4,2010-01-0{day},1,1000,5,0,5,50,2\n"));
    }
    s.push_str("b,95,116.4,2010-01-01,1,1000,5,0,5,50,2\n");
    write_trio(tmp.path(), &s, CASES_OK);
    let o = ingest_trio(tmp.path());
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("stations.csv:7: column lat"), "{err}");
}

#[test]
fn positive_above_tested_names_the_rule() {
    let tmp = tempfile::tempdir().unwrap();
    let stations = format!("{STATIONS_HEADER}a,39.9,116.4,2010-01-01,1,1000,5,0,5,50,2\n");
    let cases = "month,city_or_region,virus,age_band,sex,tested,positive\n2010-01,bj,RSV,,,10,12\n";
    write_trio(tmp.path(), &stations, cases);
    let o = ingest_trio(tmp.path());
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("cases.csv:2: column positive"), "{err}");
    assert!(err.contains("must not exceed tested"), "{err}");
}

#[test]
fn unknown_virus_in_config_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "1", "ws");
    fs::write(
        tmp.path().join("bad.json"),
        r#"{"seed": 1, "filters": {"viruses": ["RSV", "ebola"]}, "inputs": {"stations": "ws/stations.csv", "cases": "ws/cases.csv", "cities": "ws/cities.csv"}}"#,
    )
    .unwrap();
    let o = geodet(tmp.path(), &["run", "--config", "bad.json", "--out", "r"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("ebola"), "{}", stderr(&o));
}

#[test]
fn seed_falls_back_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "5", "ws");
    let cfg = r#"{"n_perm": 99, "inputs": {"stations": "ws/stations.csv", "cases": "ws/cases.csv", "cities": "ws/cities.csv"}}"#;
    fs::write(tmp.path().join("noseed.json"), cfg).unwrap();
    let o = geodet(tmp.path(), &["run", "--config", "noseed.json", "--out", "r"]);
    assert_eq!(code(&o), 2, "a seed is required");
    assert!(stderr(&o).contains("seed"));

    let with_env = Command::new(env!("CARGO_BIN_EXE_geodet"))
        .args(["run", "--config", "noseed.json", "--out", "env"])
        .current_dir(tmp.path())
        .env("GEODET_SEED", "11")
        .output()
        .unwrap();
    assert_eq!(code(&with_env), 0, "{}", stderr(&with_env));
    let flag = geodet(tmp.path(), &["run", "--config", "noseed.json", "--out", "flag", "--seed", "11"]);
    assert_eq!(code(&flag), 0);
    assert_eq!(
        fs::read(tmp.path().join("env/q_table.csv")).unwrap(),
        fs::read(tmp.path().join("flag/q_table.csv")).unwrap()
    );
}

#[test]
fn bad_flags_exit_with_usage_code() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&geodet(tmp.path(), &["run", "--strata", "quantile:0"])), 2);
    assert_eq!(code(&geodet(tmp.path(), &["frobnicate"])), 2);
    assert_eq!(code(&geodet(tmp.path(), &["ingest"])), 2);
    let missing = geodet(tmp.path(), &["ingest", "--stations", "x.csv", "--cases", "y.csv", "--cities", "z.csv"]);
    assert_eq!(code(&missing), 1, "missing files are runtime failures");
}
