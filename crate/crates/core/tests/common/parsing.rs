use mapf_airsim::map::{parse_map, parse_scenario, GridMap, MapError, ScenarioError};

use super::fixture;

pub const FIXTURES: [&str; 5] = ["random-32-32-20", "random-64-64-20", "maze-32-32-2", "empty-48-48", "den312d-excerpt"];

pub fn load(name: &str) -> (GridMap, String) {
    let map = parse_map(&std::fs::read(fixture(&format!("{name}.map"))).unwrap()).unwrap();
    let scen = std::fs::read_to_string(fixture(&format!("{name}.scen"))).unwrap();
    (map, scen)
}

/// Parses, validates and round-trips every bundled fixture.
pub fn check_fixtures() -> Result<(), String> {
    for name in FIXTURES {
        let map = parse_map(&std::fs::read(fixture(&format!("{name}.map"))).map_err(|e| e.to_string())?)
            .map_err(|e| format!("{name}.map: {e}"))?;
        if map.free_cell_count() == 0 {
            return Err(format!("{name}: no free cells"));
        }
        if parse_map(map.to_movingai().as_bytes()).as_ref() != Ok(&map) {
            return Err(format!("{name}: map round trip"));
        }
        let text = std::fs::read(fixture(&format!("{name}.scen"))).map_err(|e| e.to_string())?;
        let scen = parse_scenario(&text, &map).map_err(|e| format!("{name}.scen: {e}"))?;
        if scen.len() != 256 {
            return Err(format!("{name}: {} scenario entries", scen.len()));
        }
        if parse_scenario(scen.to_movingai(&map).as_bytes(), &map).as_ref() != Ok(&scen) {
            return Err(format!("{name}: scenario round trip"));
        }
        if scen.entries.iter().any(|e| !map.is_free(e.start) || !map.is_free(e.goal)) {
            return Err(format!("{name}: entry on a blocked cell"));
        }
    }
    Ok(())
}

type MapCase = (&'static str, fn(&MapError) -> bool);

const MAP_CASES: [MapCase; 7] = [
    ("height 2\nwidth 2\nmap\n..\n..\n", |e| matches!(e, MapError::MalformedHeader(_))),
    ("type octile\nheight x\nwidth 2\nmap\n..\n..\n", |e| matches!(e, MapError::MalformedHeader(_))),
    ("type octile\nheight 2\nwidth 2\n..\n..\n", |e| matches!(e, MapError::MalformedHeader(_))),
    ("type octile\nheight 2\nwidth 2\nmap\n..\n", |e| matches!(e, MapError::RowCountMismatch { expected: 2, got: 1 })),
    ("type octile\nheight 2\nwidth 2\nmap\n..\n...\n", |e| matches!(e, MapError::RowLengthMismatch { row: 1, .. })),
    ("type octile\nheight 1\nwidth 2\nmap\n.x\n", |e| matches!(e, MapError::UnknownCharacter { ch: 'x', x: 1, y: 0 })),
    ("type octile\nheight 0\nwidth 2\nmap\n", |e| matches!(e, MapError::MalformedHeader(_))),
];

pub fn check_malformed_maps() -> Result<(), String> {
    for (text, ok) in MAP_CASES {
        match parse_map(text.as_bytes()) {
            Err(e) if ok(&e) => {}
            other => return Err(format!("{text:?} gave {other:?}")),
        }
    }
    match parse_map(&[0xff, 0xfe]) {
        Err(MapError::Encoding) => Ok(()),
        other => Err(format!("invalid UTF-8 gave {other:?}")),
    }
}

pub fn check_malformed_scenarios() -> Result<(), String> {
    let map = parse_map(b"type octile\nheight 1\nwidth 3\nmap\n..@\n").unwrap();
    let line = |s: &str| format!("version 1\n{s}\n");
    let cases: Vec<(String, fn(&ScenarioError) -> bool)> = vec![
        ("0\tm\t3\t1\t0\t0\t1\t0\t1\n".into(), |e| matches!(e, ScenarioError::MissingVersion)),
        (String::new(), |e| matches!(e, ScenarioError::MissingVersion)),
        (line("0\tm\t3\t1\t0\t0\t2\t0\t1"), |e| matches!(e, ScenarioError::OnObstacle { which: "goal", .. })),
        (line("0\tm\t3\t1\t2\t0\t0\t0\t1"), |e| matches!(e, ScenarioError::OnObstacle { which: "start", .. })),
        (line("0\tm\t3\t1\t0\t0\t5\t0\t1"), |e| matches!(e, ScenarioError::OutOfBounds { which: "goal", .. })),
        (line("0\tm\t4\t1\t0\t0\t1\t0\t1"), |e| matches!(e, ScenarioError::DimensionMismatch { width: 4, .. })),
        (line("0\tm\t3\t1\t0\t0\t1\t0"), |e| matches!(e, ScenarioError::Malformed { line: 2, .. })),
        (line("0\tm\t3\t1\ta\t0\t1\t0\t1"), |e| matches!(e, ScenarioError::Malformed { .. })),
    ];
    for (text, ok) in cases {
        match parse_scenario(text.as_bytes(), &map) {
            Err(e) if ok(&e) => {}
            other => return Err(format!("{text:?} gave {other:?}")),
        }
    }
    if !parse_scenario(b"version 1\n", &map).map_err(|e| e.to_string())?.is_empty() {
        return Err("header-only scenario should be empty".into());
    }
    Ok(())
}
