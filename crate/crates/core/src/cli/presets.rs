use serde_json::json;

use super::config::ExperimentConfig;

/// Named configurations shipped with the binary.
pub const NAMES: [&str; 5] = [
    "hormander-gauge",
    "grushin-gauge",
    "counterexample-infinity",
    "grushin-regularity",
    "hormander-feedback",
];

pub fn describe(name: &str) -> Option<&'static str> {
    Some(match name {
        "hormander-gauge" => "gauge on the Heisenberg-type Hormander system: residuals, certificates, AMF and representation",
        "grushin-gauge" => "gauge on the planar Grushin system against the minimum-time grid",
        "counterexample-infinity" => "isotropic infinity-Laplace counterexample with three characteristic branches",
        "grushin-regularity" => "regularity moduli of the Grushin minimum time and bound dominance on the grid",
        "hormander-feedback" => "closed-loop reach times from random starts on the Hormander system",
        _ => return None,
    })
}

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let value = match name {
        "hormander-gauge" => json!({
            "system": {"kind": "hormander", "m": 2},
            "candidate": {"kind": "gauge", "m": 2},
            "experiment": ["check-aronsson", "certify", "simulate", "amf-test", "representation"],
            "params": {
                "starts": [[1.0, 0.0, 0.2], [0.9, 0.5, -0.3], [1.2, -0.4, 0.5]],
                "directions": ["forward", "backward"],
                "integrate": {"horizon": 10.0, "target_radius": 1e-3},
                "amf_box": {"lo": [0.5, -0.5, -0.5], "hi": [1.5, 0.5, 0.5]},
                "amf": {"per_axis": 30},
                "representation_box": {"lo": [0.25, -1.0, -1.0], "hi": [1.75, 1.0, 1.0]},
            },
            "output": "out/hormander-gauge",
        }),
        "grushin-gauge" => json!({
            "system": {"kind": "grushin", "m": 1},
            "candidate": {"kind": "gauge", "m": 1},
            "experiment": [
                "check-aronsson", "certify", "simulate", "amf-test", "representation", "mintime-grid", "bound-compare",
            ],
            "params": {
                "starts": [[1.0, 0.3], [0.8, -0.2], [1.2, 0.5]],
                "integrate": {"horizon": 10.0, "target_radius": 0.1},
                "amf_box": {"lo": [0.5, -0.5], "hi": [1.5, 0.5]},
                "representation_box": {"lo": [0.25, -1.0], "hi": [1.75, 1.0]},
            },
            "output": "out/grushin-gauge",
        }),
        "counterexample-infinity" => json!({
            "system": {"kind": "isotropic", "n": 2},
            "candidate": {"kind": "infinity-laplace-counterexample"},
            "hamiltonian": {"mode": "squared", "scale": 0.5},
            "experiment": "counterexample",
            "output": "out/counterexample-infinity",
        }),
        "grushin-regularity" => json!({
            "system": {"kind": "grushin", "m": 1},
            "candidate": {"kind": "gauge", "m": 1},
            "experiment": ["mintime-grid", "modulus", "bound-compare"],
            "output": "out/grushin-regularity",
        }),
        "hormander-feedback" => json!({
            "system": {"kind": "hormander", "m": 2},
            "candidate": {"kind": "gauge", "m": 2},
            "experiment": "simulate",
            "params": {
                "seed": 7,
                "start_count": 50,
                "sample_box": {"lo": [-1.0, -1.0, -1.0], "hi": [1.0, 1.0, 1.0]},
                "sample_min_h": 0.5,
                "require_hit": true,
                "expect_constant_v": true,
                "integrate": {"horizon": 10.0, "target_radius": 1e-3},
            },
            "output": "out/hormander-feedback",
        }),
        _ => return None,
    };
    Some(serde_json::from_value(value).expect("preset is a valid config"))
}
