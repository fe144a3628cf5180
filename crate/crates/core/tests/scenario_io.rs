use proptest::prelude::*;
use voltmesh_core::{
    generate_synthetic, load_scenario_dir, parse_scenario, save_scenario, ScenarioConfig, SyntheticProfile,
};

#[test]
fn generate_save_load_round_trip() {
    let profile = SyntheticProfile::default();
    let cfg = ScenarioConfig { station: profile.station, battery: profile.battery };
    for seed in [0, 7, 42] {
        let sc = generate_synthetic(3, 2, seed, &profile);
        let dir = tempfile::tempdir().unwrap();
        save_scenario(&sc, dir.path()).unwrap();
        let back = load_scenario_dir(dir.path(), &ScenarioConfig { station: sc.config, ..cfg }).unwrap();
        assert_eq!(back, sc);
    }
}

#[test]
fn saved_files_use_exact_headers() {
    let sc = generate_synthetic(2, 1, 1, &SyntheticProfile::default());
    let dir = tempfile::tempdir().unwrap();
    save_scenario(&sc, dir.path()).unwrap();
    let first = |f: &str| std::fs::read_to_string(dir.path().join(f)).unwrap().lines().next().unwrap().to_string();
    assert_eq!(
        first("sessions.csv"),
        "session_id,charger_id,arrival_step,departure_step,e_demand_kwh,e_init_kwh,e_cap_kwh"
    );
    assert_eq!(first("prices.csv"), "step,buy,sell");
    assert_eq!(first("solar.csv"), "step,gen_kw");
}

#[test]
fn missing_directory_is_an_io_error() {
    let err = load_scenario_dir(std::path::Path::new("/nonexistent/voltmesh"), &ScenarioConfig::default());
    assert!(matches!(err, Err(voltmesh_core::ScenarioError::Io { .. })));
}

const SESSIONS: &str = "session_id,charger_id,arrival_step,departure_step,e_demand_kwh,e_init_kwh,e_cap_kwh\n";

fn arb_line() -> impl Strategy<Value = String> {
    prop_oneof![
        "[0-9,.\\-a-z ]{0,30}",
        (0u32..5, 0u32..3, 0u32..6, 0u32..8, -5.0f64..50.0, -5.0f64..50.0, -5.0f64..50.0)
            .prop_map(|(i, c, a, d, x, y, z)| format!("{i},{c},{a},{d},{x},{y},{z}")),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]
    #[test]
    fn malformed_inputs_error_cleanly(
        lines in prop::collection::vec(arb_line(), 0..6),
        prices in "[0-9,.\\-\n]{0,40}",
        solar in "[0-9,.\\-\n]{0,40}",
    ) {
        let sessions = format!("{SESSIONS}{}", lines.join("\n"));
        let prices = format!("step,buy,sell\n{prices}");
        let solar = format!("step,gen_kw\n{solar}");
        let cfg = ScenarioConfig { station: voltmesh_core::StationConfig { n_chargers: 3, ..Default::default() }, ..Default::default() };
        if let Ok(sc) = parse_scenario(&sessions, &prices, &solar, &cfg) {
            prop_assert!(sc.validate().is_ok());
        }
    }
}
