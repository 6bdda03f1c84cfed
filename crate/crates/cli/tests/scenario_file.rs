use std::path::Path;

use cpvbench::presets::{demo_day, demo_weather, published_submodules};
use cpvbench_cli::scenario::{Scenario, WeatherSource};

fn published() -> Scenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/published_a_d.toml");
    Scenario::load(&path, None).unwrap()
}

#[test]
fn shipped_scenario_matches_the_presets() {
    let s = published();
    assert_eq!(s.seed, 2022);
    assert_eq!(s.rig.day, demo_day());
    assert_eq!(s.weather, WeatherSource::Synth(demo_weather(20)));
    assert_eq!(s.sessions.len(), 6);
    assert_eq!(s.session_submodules, ["A", "B", "C", "D"]);
    for (got, want) in s.rig.submodules.iter().zip(published_submodules()) {
        assert_eq!(got.id, want.id);
        assert_eq!(got.mount_offset, want.mount_offset);
        assert_eq!(got.defect, want.defect);
        assert!((got.eta_opt / want.eta_opt - 1.0).abs() < 1e-9, "{}", got.id);
        assert!((got.diode.r_s / want.diode.r_s - 1.0).abs() < 1e-5, "{}", got.id);
    }
}

#[test]
fn seed_override_wins() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/published_a_d.toml");
    let s = Scenario::load(&path, Some(99)).unwrap();
    assert_eq!((s.seed, s.rig.seed), (99, 99));
}

#[test]
fn invalid_values_are_refused() {
    let text =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/published_a_d.toml"))
            .unwrap();
    for (from, to, needle) in [
        ("dni_min_wm2 = 750.0", "dni_min_wm2 = -1.0", "dni_min_wm2"),
        ("cycle_period_s = 196", "cycle_period_s = 20", "campaign"),
        ("coarse_n = 4", "coarse_n = 1", "coarse_n"),
        ("submodules = []", "submodules = [\"Z\"]", "`Z`"),
        ("start_date = \"2022-08-15\"", "start_date = \"15/08/2022\"", "start_date"),
        ("mode = \"astm\"", "mode = \"cubic\"", "cubic"),
    ] {
        assert!(text.contains(from), "{from}");
        let err = Scenario::from_toml(&text.replace(from, to), Path::new("."), None).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains(needle), "{needle}: {err}");
    }
}
