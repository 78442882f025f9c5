use std::path::Path;

use npns::config::DtChoice;
use npns::{load_config, parse_config_with, SimError};

const MINIMAL: &str = "\
[grid]
dim = 2
extents = 1, 1
cells = 16, 16

[physics]
epsilon = 0.1
nu = 1
coupling_k = 1

[species1]
valence = 1
diffusivity = 1
gamma = 1

[species2]
valence = -1
diffusivity = 1
gamma = 1

[run]
t_final = 0.5
";

fn parse(text: &str) -> npns::Result<npns::RunSpec> {
    parse_config_with(text, Path::new("."), &[])
}

#[test]
fn minimal_config_gets_defaults() {
    let s = parse(MINIMAL).unwrap();
    assert_eq!(s.params.species.len(), 2);
    assert_eq!(s.params.flow_mode, npns_core::FlowMode::Stokes);
    assert!(matches!(s.dt, DtChoice::Auto));
    assert_eq!(s.output_every, 1);
    assert_eq!(s.checkpoint_every, 0);
    assert_eq!(s.delta, 1.0);
    assert_eq!(s.negativity_exponent, 2);
    assert_eq!(s.seed, 0);
    assert_eq!(s.max_steps, None);
}

#[test]
fn missing_epsilon_is_named() {
    let text = MINIMAL.replace("epsilon = 0.1\n", "");
    let e = parse(&text).unwrap_err();
    assert!(matches!(e, SimError::Config(_)));
    assert!(e.to_string().contains("physics.epsilon"), "{e}");
}

#[test]
fn misspelled_key_is_rejected() {
    let text = MINIMAL.replace("epsilon = 0.1", "epsilonn = 0.1");
    let e = parse(&text).unwrap_err();
    assert!(e.to_string().contains("epsilonn"), "{e}");
}

#[test]
fn invalid_values_are_rejected() {
    for (from, to) in [
        ("diffusivity = 1\ngamma = 1\n\n[species2]", "diffusivity = 0\ngamma = 1\n\n[species2]"),
        ("t_final = 0.5", "t_final = -1"),
        ("cells = 16, 16", "cells = 16"),
        ("dim = 2", "dim = 4"),
        ("gamma = 1\n\n[run]", "gamma = bogus(1)\n\n[run]"),
    ] {
        let text = MINIMAL.replacen(from, to, 1);
        assert_ne!(text, MINIMAL);
        assert!(parse(&text).is_err(), "{to}");
    }
}

#[test]
fn tables_resolve_relative_to_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("profile.csv"), "0, 1.5\n1, 0.5\n").unwrap();
    let text = MINIMAL.replacen("gamma = 1", "gamma = table(0, profile.csv)", 1);
    let path = tmp.path().join("run.ini");
    std::fs::write(&path, text).unwrap();
    let s = load_config(&path).unwrap();
    let v = s.species[0].gamma.eval([0.25, 0.5, 0.0]).unwrap();
    assert!((v - 1.25).abs() < 1e-15);
}
