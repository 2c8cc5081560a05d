#![allow(dead_code)]

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use pinsim::netsim::{EcosystemNetwork, FloatingMode, Mechanism, NetworkBuilder, PackageId};
use pinsim::panel::PanelObservation;
use pinsim::registry::{parse_timestamp, Manifest, RegistryBuilder, RegistrySnapshot, Release, Timestamp};
use pinsim::semver::{ConstraintClass, Version, VersionConstraint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fix_n() -> EcosystemNetwork {
    let mut b = NetworkBuilder::new();
    for (name, dl) in [
        ("A", 90_000),
        ("B", 0),
        ("C", 1_000_000),
        ("D", 10_000),
        ("E", 5_000),
        ("F", 2_000),
        ("G", 1_000),
        ("H", 900),
        ("I", 500),
    ] {
        b.add_package(name, dl, None).unwrap();
    }
    for (from, to) in [
        ("C", "B"),
        ("D", "B"),
        ("E", "C"),
        ("F", "C"),
        ("F", "D"),
        ("G", "F"),
        ("H", "F"),
        ("I", "F"),
    ] {
        b.add_edge_by_name(from, to, ConstraintClass::FloatingMinor).unwrap();
    }
    b.build().unwrap()
}

pub fn names(net: &EcosystemNetwork, ids: impl IntoIterator<Item = PackageId>) -> BTreeSet<String> {
    ids.into_iter().map(|i| net.name(i).to_string()).collect()
}

pub fn ids(net: &EcosystemNetwork, names: &[&str]) -> Vec<PackageId> {
    names.iter().map(|n| net.id(n).unwrap()).collect()
}

pub fn ts(text: &str) -> Timestamp {
    parse_timestamp(text).unwrap()
}

fn release(pkg: &str, ver: &str, at: &str, deps: &[(&str, &str)]) -> Release {
    Release {
        package: pkg.into(),
        version: Version::parse(ver).unwrap(),
        published_at: ts(at),
        dependencies: deps
            .iter()
            .map(|(k, v)| (k.to_string(), VersionConstraint::parse(v)))
            .collect(),
        dev_dependencies: Default::default(),
    }
}

/// Root needs x ^1.2.0 and y ^2.0.0; y needs x ^1.3.0; every x release
/// floats on z1..z4.
pub fn fix_r() -> (RegistrySnapshot, Manifest, Timestamp) {
    let zs: Vec<(&str, &str)> = ["z1", "z2", "z3", "z4"].iter().map(|z| (*z, "^1.0.0")).collect();
    let mut rel = vec![
        release("x", "1.2.0", "2022-01-01T00:00:00Z", &zs),
        release("x", "1.3.0", "2022-02-01T00:00:00Z", &zs),
        release("y", "2.0.0", "2022-02-15T00:00:00Z", &[("x", "^1.3.0")]),
        release("x", "1.4.0", "2022-06-01T00:00:00Z", &zs),
    ];
    for z in ["z1", "z2", "z3", "z4"] {
        rel.push(release(z, "1.0.0", "2021-12-01T00:00:00Z", &[]));
    }
    let mut b = RegistryBuilder::new();
    for (i, r) in rel.into_iter().enumerate() {
        b.add_release(r, i + 1).unwrap();
    }
    let manifest = Manifest::new("app")
        .with_dependency("x", "^1.2.0")
        .with_dependency("y", "^2.0.0");
    (b.build(), manifest, ts("2022-03-01T00:00:00Z"))
}

/// Random digraph without self-loops or duplicate edges. Classes are drawn
/// uniformly so HonorDeclared mode has something to gate.
pub fn random_digraph(rng: &mut ChaCha8Rng, max_nodes: usize) -> EcosystemNetwork {
    let n = rng.random_range(1..=max_nodes);
    let p: f64 = rng.random_range(0.05..0.5);
    let mut b = NetworkBuilder::new();
    for i in 0..n {
        b.add_package(&format!("n{i:02}"), rng.random_range(0..1000), None).unwrap();
    }
    for x in 0..n {
        for y in 0..n {
            if x != y && rng.random_bool(p) {
                let class = ConstraintClass::ALL[rng.random_range(0..5)];
                b.add_edge(x, y, class).unwrap();
            }
        }
    }
    b.build().unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Affected set by explicit enumeration of every simple path that ends at
/// `a`: a package is hit when some path from it reaches `a` without being
/// blocked by the mechanism's rule.
pub fn brute_affected(
    net: &EcosystemNetwork,
    a: PackageId,
    defended: &[PackageId],
    mechanism: Mechanism,
    mode: FloatingMode,
) -> BTreeSet<PackageId> {
    let d: BTreeSet<PackageId> = defended.iter().copied().collect();
    let mut hit = BTreeSet::new();
    for start in net.ids() {
        if start == a {
            continue;
        }
        let mut path = vec![start];
        if path_exists(net, a, &d, mechanism, mode, &mut path) {
            hit.insert(start);
        }
    }
    hit
}

fn path_exists(
    net: &EcosystemNetwork,
    a: PackageId,
    d: &BTreeSet<PackageId>,
    mechanism: Mechanism,
    mode: FloatingMode,
    path: &mut Vec<PackageId>,
) -> bool {
    let v = *path.last().unwrap();
    if mechanism == Mechanism::TransitivePinning && d.contains(&v) {
        return false;
    }
    for &(w, class) in net.dependencies(v) {
        if w == a {
            let final_ok = !d.contains(&v) && (mode == FloatingMode::AssumeAllFloating || class.is_floating());
            if final_ok {
                return true;
            }
            continue;
        }
        if path.contains(&w) {
            continue;
        }
        path.push(w);
        let found = path_exists(net, a, d, mechanism, mode, path);
        path.pop();
        if found {
            return true;
        }
    }
    false
}

/// Betweenness by listing every shortest path between every ordered pair.
pub fn brute_betweenness(net: &EcosystemNetwork) -> Vec<f64> {
    let n = net.len();
    let mut dist = vec![vec![usize::MAX; n]; n];
    for s in 0..n {
        dist[s][s] = 0;
        let mut frontier = vec![s];
        let mut level = 0;
        while !frontier.is_empty() {
            level += 1;
            let mut next = Vec::new();
            for &v in &frontier {
                for &(w, _) in net.dependencies(v) {
                    if dist[s][w] == usize::MAX {
                        dist[s][w] = level;
                        next.push(w);
                    }
                }
            }
            frontier = next;
        }
    }
    let mut score = vec![0.0; n];
    for s in 0..n {
        for t in 0..n {
            if s == t || dist[s][t] == usize::MAX {
                continue;
            }
            let mut paths: Vec<Vec<PackageId>> = Vec::new();
            let mut stack = vec![vec![s]];
            while let Some(p) = stack.pop() {
                let v = *p.last().unwrap();
                if v == t {
                    paths.push(p);
                    continue;
                }
                for &(w, _) in net.dependencies(v) {
                    if dist[s][w] == p.len() && dist[w][t] != usize::MAX && dist[s][w] + dist[w][t] == dist[s][t] {
                        let mut q = p.clone();
                        q.push(w);
                        stack.push(q);
                    }
                }
            }
            let total = paths.len() as f64;
            for p in &paths {
                for &v in &p[1..p.len() - 1] {
                    score[v] += 1.0 / total;
                }
            }
        }
    }
    score
}

/// Least-squares dummy-variable regression: the three regressors, an
/// intercept, and one dummy per entity and per time beyond the first.
pub fn lsdv(obs: &[PanelObservation]) -> [f64; 3] {
    let entities: Vec<&str> = obs
        .iter()
        .map(|o| o.entity.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let times: Vec<usize> = obs.iter().map(|o| o.time).collect::<BTreeSet<_>>().into_iter().collect();
    let k = 4 + (entities.len() - 1) + (times.len() - 1);
    let mut x = DMatrix::<f64>::zeros(obs.len(), k);
    let mut y = DVector::<f64>::zeros(obs.len());
    for (r, o) in obs.iter().enumerate() {
        x[(r, 0)] = o.x_pinning;
        x[(r, 1)] = o.x_lnsize;
        x[(r, 2)] = o.x_interaction;
        x[(r, 3)] = 1.0;
        let e = entities.iter().position(|&e| e == o.entity).unwrap();
        if e > 0 {
            x[(r, 3 + e)] = 1.0;
        }
        let t = times.iter().position(|&t| t == o.time).unwrap();
        if t > 0 {
            x[(r, 3 + entities.len() - 1 + t)] = 1.0;
        }
        y[r] = o.y;
    }
    let beta = x.svd(true, true).solve(&y, 1e-12).unwrap();
    [beta[0], beta[1], beta[2]]
}

/// A balanced panel with planted slopes, entity and time effects, and
/// Gaussian-like noise from a sum of uniforms.
pub fn planted_panel(rng: &mut ChaCha8Rng, entities: usize, beta: [f64; 3], noise: f64) -> Vec<PanelObservation> {
    let time_fx: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut out = Vec::with_capacity(entities * 5);
    for e in 0..entities {
        let alpha: f64 = rng.random_range(-3.0..3.0);
        for (t, tf) in time_fx.iter().enumerate() {
            let pinning = rng.random_bool(0.5);
            let lnsize: f64 = rng.random_range(0.0..6.0) + alpha * 0.3;
            let p = if pinning { 1.0 } else { 0.0 };
            let eps: f64 = (0..12).map(|_| rng.random::<f64>()).sum::<f64>() - 6.0;
            let y = beta[0] * p + beta[1] * lnsize + beta[2] * p * lnsize + alpha + tf + noise * eps;
            out.push(PanelObservation::new(format!("e{e:03}"), t, y, pinning, lnsize));
        }
    }
    out
}
