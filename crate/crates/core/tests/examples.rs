//! Runs every example.

mod anosov_criterion {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/anosov_criterion.rs"));
}

mod cohomology_probe {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/cohomology_probe.rs"));
}

mod conjugate_points {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/conjugate_points.rs"));
}

mod integral_identities {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/integral_identities.rs"));
}

mod pestov_identity {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/pestov_identity.rs"));
}

mod riccati_limits {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/riccati_limits.rs"));
}

mod structure_relations {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/structure_relations.rs"));
}

mod thermostat_orbit {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/thermostat_orbit.rs"));
}

mod xray_inversion {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/xray_inversion.rs"));
}

mod xray_kernel {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/xray_kernel.rs"));
}

#[test]
fn anosov_criterion_runs() {
    anosov_criterion::main().expect("anosov_criterion example runs");
}

#[test]
fn cohomology_probe_runs() {
    cohomology_probe::main().expect("cohomology_probe example runs");
}

#[test]
fn conjugate_points_runs() {
    conjugate_points::main().expect("conjugate_points example runs");
}

#[test]
fn integral_identities_runs() {
    integral_identities::main().expect("integral_identities example runs");
}

#[test]
fn pestov_identity_runs() {
    pestov_identity::main().expect("pestov_identity example runs");
}

#[test]
fn riccati_limits_runs() {
    riccati_limits::main().expect("riccati_limits example runs");
}

#[test]
fn structure_relations_runs() {
    structure_relations::main().expect("structure_relations example runs");
}

#[test]
fn thermostat_orbit_runs() {
    thermostat_orbit::main().expect("thermostat_orbit example runs");
}

#[test]
fn xray_inversion_runs() {
    xray_inversion::main().expect("xray_inversion example runs");
}

#[test]
fn xray_kernel_runs() {
    xray_kernel::main().expect("xray_kernel example runs");
}
