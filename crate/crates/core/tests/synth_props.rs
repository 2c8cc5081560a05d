use pinsim::netsim::EcosystemNetwork;
use pinsim::registry::load_registry;
use pinsim::metrics::AdvisoryDb;
use pinsim::resolver::{resolve, ResolveOptions};
use pinsim::synth::{default_t0, generate_network, generate_projects, generate_registry, Attachment, GenConfig};

fn max_in_degree(net: &EcosystemNetwork) -> usize {
    net.ids().map(|p| net.in_degree(p)).max().unwrap_or(0)
}

#[test]
fn edge_count_tracks_the_configured_mean() {
    for seed in 0..5 {
        let cfg = GenConfig { seed, n_packages: 4000, deps_per_release: 5.0, ..GenConfig::default() };
        let net = generate_network(&cfg).unwrap();
        let expected = cfg.n_packages as f64 * cfg.deps_per_release;
        let ratio = net.edge_count() as f64 / expected;
        assert!((0.9..=1.1).contains(&ratio), "seed {seed}: {} edges", net.edge_count());
    }
}

#[test]
fn preferential_attachment_concentrates_in_degree() {
    let mut wins = 0;
    for seed in 0..10 {
        let base = GenConfig { seed, n_packages: 2000, deps_per_release: 3.0, ..GenConfig::default() };
        let pref = generate_network(&GenConfig { attachment: Attachment::Preferential, ..base.clone() }).unwrap();
        let unif = generate_network(&GenConfig { attachment: Attachment::Uniform, ..base }).unwrap();
        if max_in_degree(&pref) > max_in_degree(&unif) {
            wins += 1;
        }
    }
    assert!(wins >= 9, "preferential won {wins}/10");
}

#[test]
fn generated_networks_are_valid() {
    let cfg = GenConfig { seed: 1, n_packages: 300, cycle_rate: 0.1, ..GenConfig::default() };
    let net = generate_network(&cfg).unwrap();
    assert!(net.edges().all(|(a, b, _)| a != b));
    assert!(net.total_downloads() > 0);
    let (mut nodes, mut edges) = (Vec::new(), Vec::new());
    net.write_nodes_csv(&mut nodes).unwrap();
    net.write_edges_csv(&mut edges).unwrap();
    let again = pinsim::netsim::load_network(nodes.as_slice(), edges.as_slice()).unwrap();
    assert_eq!(again.edges().collect::<Vec<_>>(), net.edges().collect::<Vec<_>>());
}

#[test]
fn registry_artifacts_reload() {
    let cfg = GenConfig { seed: 12, ..GenConfig::default() };
    let (snap, db) = generate_registry(&cfg).unwrap();
    let mut reg = Vec::new();
    snap.write_jsonl(&mut reg).unwrap();
    let loaded = load_registry(reg.as_slice()).unwrap();
    assert_eq!(loaded.snapshot.release_count(), snap.release_count());
    let mut adv = Vec::new();
    db.write_jsonl(&mut adv).unwrap();
    assert_eq!(AdvisoryDb::load_jsonl(adv.as_slice()).unwrap().len(), db.len());
    assert!(!db.is_empty());
}

#[test]
fn manifests_resolve_strictly_at_end_of_window() {
    for seed in 0..100 {
        let cfg = GenConfig { seed, n_packages: 50, ..GenConfig::default() };
        let (snap, _) = generate_registry(&cfg).unwrap();
        let view = snap.view_at(cfg.time_window.1);
        for m in generate_projects(&cfg, &snap, 3, default_t0()).unwrap() {
            resolve(&view, &m, &ResolveOptions::default()).unwrap();
        }
        for (name, entry) in snap.packages() {
            let latest = entry.releases().last().unwrap();
            let m = pinsim::registry::Manifest::new("probe").with_dependency(name, &latest.version.to_string());
            resolve(&view, &m, &ResolveOptions::default()).unwrap();
        }
    }
}
