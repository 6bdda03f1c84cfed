use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cpvbench"));
    c.env_remove("CPVBENCH_SEED");
    c
}

fn published_scenario() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/published_a_d.toml")
}

/// The shipped scenario shortened to `days` days, with `edit` applied.
fn short_scenario(dir: &Path, days: u32, edit: impl Fn(String) -> String) -> PathBuf {
    let text = fs::read_to_string(published_scenario()).unwrap();
    let text = text.replace("n_days = 20", &format!("n_days = {days}"));
    let path = dir.join("scenario.toml");
    fs::write(&path, edit(text)).unwrap();
    path
}

/// Replaces the acceptance session list.
fn set_sessions(text: &str, starts: &[&str]) -> String {
    let begin = text.find("sessions_utc = [").unwrap();
    let end = begin + text[begin..].find(']').unwrap() + 1;
    let list: Vec<String> = starts.iter().map(|s| format!("\"{s}\"")).collect();
    format!("{}sessions_utc = [{}]{}", &text[..begin], list.join(", "), &text[end..])
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn table2_check_prints_published_arithmetic() {
    let o = bin().arg("table2-check").output().unwrap();
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split_whitespace().collect()).collect();
    let expected = [("A", "226", "90%"), ("B", "222", "89%"), ("C", "204", "82%"), ("D", "172", "69%")];
    assert_eq!(rows.len(), 4);
    for (row, (id, c, ctm)) in rows.iter().zip(expected) {
        assert_eq!((row[0], row[4], row[5]), (id, c, ctm), "{text}");
    }
    assert!(text.contains("29.7%") && text.contains("14.7%"));
}

#[test]
fn help_lists_flags_with_defaults() {
    for (cmd, needles) in [
        ("simulate", vec!["--out", "[default: out]", "--seed", "CPVBENCH_SEED"]),
        ("rate", vec!["--scenario", "--jobs", "[default: 1]", "--table2-check"]),
        ("acceptance", vec!["--elevation-deg", "[default: 0]", "--out"]),
    ] {
        let o = bin().args([cmd, "--help"]).output().unwrap();
        assert!(o.status.success());
        let text = stdout(&o);
        for n in needles {
            assert!(text.contains(n), "{cmd}: missing {n}\n{text}");
        }
    }
}

#[test]
fn simulate_rate_and_map_the_published_rig() {
    let tmp = TempDir::new().unwrap();
    let scenario = short_scenario(tmp.path(), 2, |s| s);
    let out = tmp.path().join("run");
    let o = bin().arg("simulate").arg(&scenario).arg("--out").arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 4);
    for f in
        ["measurements.csv", "skips.csv", "weather.csv", "sessions.csv", "acceptance_A_1.csv", "acceptance_D_6.csv"]
    {
        assert!(out.join(f).is_file(), "{f}");
    }

    let o = bin()
        .arg("rate")
        .arg(out.join("measurements.csv"))
        .arg("--scenario")
        .arg(&scenario)
        .arg("--out")
        .arg(&out)
        .args(["--jobs", "4", "--table2-check"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("published-row arithmetic"));
    let report = read_csv(&out.join("report.csv"));
    let a = &report[0];
    assert_eq!(a[0], "A");
    let num = |s: &str| s.parse::<f64>().unwrap();
    assert!((num(&a[8]) - 90.0).abs() < 1.0, "CTM {}", a[8]);
    assert!((num(&a[6]) - 29.7).abs() < 0.3, "efficiency {}", a[6]);
    assert!(num(&report[3][5]) < 0.55, "D fill factor {}", report[3][5]);
    for f in ["report.txt", "isc_vs_dni.csv", "pmax_vs_dni.csv", "ff_vs_dni.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }

    let sessions = read_csv(&out.join("sessions.csv"));
    for id in ["A", "B", "C", "D"] {
        let mut cmd = bin();
        cmd.arg("acceptance");
        for row in sessions.iter().filter(|r| r[1] == id) {
            cmd.arg(out.join(&row[0])).args(["--elevation-deg", &row[3]]);
        }
        let dir = out.join(format!("acc_{id}"));
        let o = cmd.arg("--out").arg(&dir).output().unwrap();
        assert!(o.status.success(), "{id}: {}", stderr(&o));
        let angle: f64 = stdout(&o).split_whitespace().nth(2).unwrap().parse().unwrap();
        assert!((0.73..=0.84).contains(&angle), "{id}: {angle}");
        assert!(dir.join("acceptance_1d.csv").is_file() && dir.join("contour90.csv").is_file());
    }
}

#[test]
fn reruns_are_byte_identical_and_the_seed_variable_matters() {
    let tmp = TempDir::new().unwrap();
    let scenario = short_scenario(tmp.path(), 1, |s| {
        set_sessions(&s, &["2022-08-15T09:00:00Z"])
            .replace("noise_sigma_a = 0.0", "noise_sigma_a = 0.0002")
            .replace("submodules = []", "submodules = [\"A\"]")
    });
    let run = |name: &str, seed: Option<&str>| {
        let out = tmp.path().join(name);
        let mut cmd = bin();
        if let Some(s) = seed {
            cmd.env("CPVBENCH_SEED", s);
        }
        let o = cmd.arg("simulate").arg(&scenario).arg("-o").arg(&out).output().unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let (a, b, c) = (run("a", None), run("b", None), run("c", Some("7")));
    for f in ["measurements.csv", "skips.csv", "weather.csv", "acceptance_A.csv", "sessions.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(fs::read(a.join("measurements.csv")).unwrap(), fs::read(c.join("measurements.csv")).unwrap());
}

#[test]
fn missing_weather_file_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let scenario = short_scenario(tmp.path(), 1, |s| {
        let begin = s.find("[weather.synth]").unwrap();
        let end = s.find("# Sub-modules.").unwrap();
        format!("{}[weather]\nfile = \"nowhere.csv\"\n\n{}", &s[..begin], &s[end..])
    });
    let o = bin().arg("simulate").arg(&scenario).arg("-o").arg(tmp.path().join("o")).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere.csv"), "{}", stderr(&o));
}

#[test]
fn misspelled_key_names_the_field() {
    let tmp = TempDir::new().unwrap();
    let scenario = short_scenario(tmp.path(), 1, |s| s.replacen("jsc_eqe_ma_per_cm2", "jsc_ma_per_cm2", 1));
    let o = bin().arg("simulate").arg(&scenario).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("jsc_ma_per_cm2"), "{}", stderr(&o));

    let scenario = short_scenario(tmp.path(), 1, |s| s.replace("id = \"B\"", "id = \"A\""));
    let o = bin().arg("simulate").arg(&scenario).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("used twice"), "{}", stderr(&o));
}

#[test]
fn dim_sky_leaves_nothing_to_rate() {
    let tmp = TempDir::new().unwrap();
    let scenario = short_scenario(tmp.path(), 1, |s| {
        set_sessions(&s, &[]).replace("peak_dni_wm2 = 950.0", "peak_dni_wm2 = 600.0")
    });
    let out = tmp.path().join("o");
    let o = bin().arg("simulate").arg(&scenario).arg("-o").arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let o = bin()
        .arg("rate")
        .arg(out.join("measurements.csv"))
        .arg("-s")
        .arg(&scenario)
        .arg("-o")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("insufficient filtered data (n = 0"), "{}", stderr(&o));
}

/// Session file with a planted rotationally symmetric response.
fn planted_session(path: &Path, theta90: f64, p: f64, step: f64) {
    let mut w = csv::Writer::from_path(path).unwrap();
    w.write_record(["submodule", "daz_deg", "del_deg", "isc_over_dni"]).unwrap();
    let n = (3.0 / step).round() as i32;
    for j in 0..=n {
        for i in 0..=n {
            let (x, y) = (-1.5 + i as f64 * step, -1.5 + j as f64 * step);
            let v = 2e-4 * 0.9f64.powf((x.hypot(y) / theta90).powf(p));
            w.write_record(["S".to_string(), x.to_string(), y.to_string(), v.to_string()]).unwrap();
        }
    }
    w.flush().unwrap();
}

#[test]
fn acceptance_recovers_a_planted_angle() {
    let tmp = TempDir::new().unwrap();
    let session = tmp.path().join("s.csv");
    planted_session(&session, 0.78, 6.0, 0.25);
    let out = tmp.path().join("o");
    let o = bin().arg("acceptance").arg(&session).arg("-o").arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let angle: f64 = stdout(&o).split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!((angle - 0.78).abs() <= 0.03, "{angle}");
    let contour = read_csv(&out.join("contour90.csv"));
    assert!(contour.len() >= 8);
}

#[test]
fn acceptance_failures_have_distinct_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let empty = tmp.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let o = bin().arg("acceptance").arg(&empty).arg("-o").arg(tmp.path().join("o")).output().unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    // wide response: the whole frame stays above 90%
    let wide = tmp.path().join("wide.csv");
    planted_session(&wide, 5.0, 6.0, 0.25);
    let o = bin().arg("acceptance").arg(&wide).arg("-o").arg(tmp.path().join("o")).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("contour exceeds frame"), "{}", stderr(&o));

    let coarse = tmp.path().join("coarse.csv");
    planted_session(&coarse, 0.78, 6.0, 0.5);
    let o = bin().arg("acceptance").arg(&coarse).arg("-o").arg(tmp.path().join("o")).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no 90% crossing"), "{}", stderr(&o));

    let two = [tmp.path().join("a.csv"), tmp.path().join("b.csv")];
    for p in &two {
        planted_session(p, 0.78, 6.0, 0.25);
    }
    let o = bin().arg("acceptance").args(&two).args(["-e", "10", "-e", "20", "-e", "30"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}
