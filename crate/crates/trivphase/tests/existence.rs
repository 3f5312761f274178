use trivphase::covering::Pentapartition;
use trivphase::existence::{chain_geometries, extension_existence, minimal_width, recovery_existence};
use trivphase::factory::factory_suite;

#[test]
fn explicit_maps_meet_inversion_bound_on_factory_suite() {
    for (name, prep) in factory_suite().unwrap() {
        let s = minimal_width(&prep);
        let mut checked = 0;
        for parts in chain_geometries(prep.n(), s) {
            let r = if parts.d.is_empty() && parts.e.is_empty() {
                recovery_existence(&prep, &parts.a, &parts.b, &parts.c, s)
            } else {
                extension_existence(&prep, &parts, s)
            };
            let r = r.unwrap();
            assert!(r.holds, "{name}: distance {} above bound {} for {:?}", r.distance, r.bound, parts);
            checked += 1;
        }
        assert!(checked > 0, "{name}: no geometry");
    }
}

#[test]
fn extension_with_empty_de_matches_recovery() {
    let (_, prep) = factory_suite().unwrap().into_iter().find(|(n, _)| n.starts_with("noisy")).unwrap();
    let s = minimal_width(&prep);
    let parts = chain_geometries(prep.n(), s).into_iter().find(|p| p.d.is_empty() && !p.a.is_empty()).unwrap();
    let r = recovery_existence(&prep, &parts.a, &parts.b, &parts.c, s).unwrap();
    let e = extension_existence(&prep, &parts, s).unwrap();
    assert!((r.distance - e.distance).abs() < 1e-10);
}

#[test]
fn too_narrow_width_is_rejected() {
    let (_, prep) = factory_suite().unwrap().into_iter().next().unwrap();
    let parts = Pentapartition { a: prep.lattice.all(), ..Default::default() };
    assert!(extension_existence(&prep, &parts, prep.reach()).is_err());
}
