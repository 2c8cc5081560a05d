mod common;

use std::collections::HashSet;

use chrono::Duration;
use pinsim::metrics::{n_bloated, n_floating};
use pinsim::registry::{RegistrySnapshot, TimeView};
use pinsim::resolver::{pin_manifest, resolve, ResolveOptions, ResolvedGraph, ROOT};
use pinsim::semver::Version;
use pinsim::synth::{default_t0, generate_projects, generate_registry, GenConfig};
use proptest::prelude::*;

fn check_sound(g: &ResolvedGraph, view: &TimeView<'_>) {
    for e in g.edges() {
        let to = g.node(e.to);
        assert!(e.constraint.satisfies(&to.version), "{} does not admit {}", e.constraint, to.version);
        let published = to.published_at.expect("installed node");
        assert!(published <= view.cutoff());
    }
    let mut seen = HashSet::new();
    for (_, n) in g.installed() {
        assert!(seen.insert((n.package.clone(), n.version.clone())), "duplicate node {}@{}", n.package, n.version);
    }
}

#[test]
fn bloat_fixture() {
    let (snap, manifest, t) = common::fix_r();
    let view = snap.view_at(t);
    let opts = ResolveOptions::default();

    let g = resolve(&view, &manifest, &opts).unwrap();
    check_sound(&g, &view);
    assert_eq!(g.size(), 6);
    let xs: Vec<_> = g.installed().filter(|(_, n)| n.package == "x").collect();
    assert_eq!(xs.len(), 1);
    assert_eq!(xs[0].1.version, Version::new(1, 3, 0));
    assert_eq!(n_floating(&g), 7);
    assert_eq!(n_bloated(&g), 0);

    let pinned = pin_manifest(&manifest, &view);
    assert!(pinned.diagnostics.is_empty());
    let gp = resolve(&view, &pinned.manifest, &opts).unwrap();
    check_sound(&gp, &view);
    assert_eq!(gp.size(), 7);
    assert_eq!(n_floating(&gp), 9);
    assert_eq!(n_bloated(&gp), 1);
}

#[test]
fn releases_after_cutoff_are_invisible() {
    let (snap, manifest, t) = common::fix_r();
    let g = resolve(&snap.view_at(t), &manifest, &ResolveOptions::default()).unwrap();
    assert!(g.installed().all(|(_, n)| n.version != Version::new(1, 4, 0)));
    let later = resolve(&snap.view_at(common::ts("2022-07-01T00:00:00Z")), &manifest, &ResolveOptions::default()).unwrap();
    assert!(later.installed().any(|(_, n)| n.version == Version::new(1, 4, 0)));
}

#[test]
fn generated_projects_resolve_soundly() {
    for seed in 0..20 {
        let cfg = GenConfig { seed, n_packages: 120, ..GenConfig::default() };
        let (snap, _) = generate_registry(&cfg).unwrap();
        let projects = generate_projects(&cfg, &snap, 10, default_t0()).unwrap();
        for step in 0..5 {
            let view = snap.view_at(default_t0() + Duration::days(90 * step));
            for m in &projects {
                let g = resolve(&view, m, &ResolveOptions::default()).unwrap();
                check_sound(&g, &view);
                let again = resolve(&view, m, &ResolveOptions::default()).unwrap();
                assert_eq!(g, again);
                assert_eq!(g.root_edges().count(), m.dependencies.len());
                assert!(g.edges().iter().all(|e| e.to != ROOT));
            }
        }
    }
}

fn small_registry(seed: u64) -> RegistrySnapshot {
    generate_registry(&GenConfig { seed, n_packages: 30, ..GenConfig::default() }).unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn visibility_is_monotone_in_time(seed in 0u64..1000, a in 0i64..1100, b in 0i64..1100) {
        let snap = small_registry(seed);
        let (lo, hi) = (a.min(b), a.max(b));
        let start = GenConfig::default().time_window.0;
        let v1 = snap.view_at(start + Duration::days(lo));
        let v2 = snap.view_at(start + Duration::days(hi));
        prop_assert!(v1.visible_count() <= v2.visible_count());
        for (name, entry) in snap.packages() {
            for r in entry.releases() {
                prop_assert!(!v1.is_visible(r) || v2.is_visible(r));
            }
            let any = pinsim::semver::parse_constraint(">=0.0.0");
            if let (Some(x), Some(y)) = (v1.latest_satisfying(name, &any).unwrap(), v2.latest_satisfying(name, &any).unwrap()) {
                prop_assert!(x.version <= y.version);
            }
        }
    }
}
