use scfm_core::gibbs::gir::{getting_it_right, GirConfig, FUNCTIONALS};

#[test]
fn tiny_model_passes_getting_it_right() {
    let checks = getting_it_right(&GirConfig::default()).unwrap();
    assert_eq!(checks.len(), FUNCTIONALS.len());
    for c in &checks {
        assert!(c.passes(3.0), "{}: z = {:.2}", c.name, c.z);
    }
}

#[test]
fn columnwise_shrinkage_passes_getting_it_right() {
    let cfg = GirConfig {
        dl_mode: scfm_core::DlMode::Columnwise,
        seed: 2,
        ..GirConfig::default()
    };
    for c in getting_it_right(&cfg).unwrap() {
        assert!(c.passes(3.0), "{}: z = {:.2}", c.name, c.z);
    }
}
