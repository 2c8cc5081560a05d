//! Seeded generators for registries, advisory databases, project
//! manifests and package networks.
//!
//! Every generator draws from a single ChaCha8 stream in a fixed order, so
//! a configuration and seed always reproduce the same artifacts.

use chrono::{Duration, TimeZone, Utc};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{Advisory, AdvisoryDb};
use crate::netsim::{EcosystemNetwork, NetworkBuilder};
use crate::registry::{DependencyMap, Manifest, RegistryBuilder, RegistrySnapshot, Release, Timestamp};
use crate::semver::{ConstraintClass, Version, VersionConstraint};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid generator config: {0}")]
pub struct InvalidConfig(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attachment {
    Uniform,
    #[default]
    Preferential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub seed: u64,
    pub n_packages: usize,
    /// Mean of the geometric release-count distribution (at least 1).
    pub releases_per_package: f64,
    pub time_window: (Timestamp, Timestamp),
    /// Weights in `ConstraintClass::ALL` order.
    pub class_mix: [f64; 5],
    pub deps_per_release: f64,
    pub attachment: Attachment,
    /// Fraction of packages that receive one advisory.
    pub advisory_rate: f64,
    /// Per-package probability of an extra edge pointing at a higher index
    /// (networks only). Zero keeps networks acyclic.
    pub cycle_rate: f64,
}

/// Reference date for the default observation schedule.
pub fn default_t0() -> Timestamp {
    Utc.with_ymd_and_hms(2022, 9, 12, 0, 0, 0).unwrap()
}

impl Default for GenConfig {
    fn default() -> Self {
        let t0 = default_t0();
        GenConfig {
            seed: 0,
            n_packages: 200,
            releases_per_package: 4.0,
            time_window: (t0 - Duration::days(730), t0 + Duration::days(360)),
            class_mix: [0.0164, 0.7183, 0.0399, 0.2171, 0.0083],
            deps_per_release: 3.0,
            attachment: Attachment::Preferential,
            advisory_rate: 0.1,
            cycle_rate: 0.0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), InvalidConfig> {
        let bad = |m: &str| Err(InvalidConfig(m.to_string()));
        if self.n_packages == 0 {
            return bad("n_packages must be positive");
        }
        if !(self.releases_per_package >= 1.0 && self.releases_per_package.is_finite()) {
            return bad("releases_per_package must be at least 1");
        }
        if self.time_window.0 >= self.time_window.1 {
            return bad("time_window start must precede its end");
        }
        if self.class_mix.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return bad("class_mix weights must be non-negative");
        }
        if (self.class_mix.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return bad("class_mix must sum to 1");
        }
        if !(self.deps_per_release >= 0.0 && self.deps_per_release.is_finite()) {
            return bad("deps_per_release must be non-negative");
        }
        for (name, p) in [("advisory_rate", self.advisory_rate), ("cycle_rate", self.cycle_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(InvalidConfig(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

pub fn package_name(i: usize) -> String {
    format!("p{i}")
}

fn draw_class(rng: &mut ChaCha8Rng, mix: &[f64; 5]) -> ConstraintClass {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (class, w) in ConstraintClass::ALL.into_iter().zip(mix) {
        acc += w;
        if u < acc {
            return class;
        }
    }
    *ConstraintClass::ALL
        .iter()
        .zip(mix)
        .rev()
        .find(|(_, w)| **w > 0.0)
        .map(|(c, _)| c)
        .unwrap_or(&ConstraintClass::FloatingMinor)
}

/// Constraint text of the requested class that admits `anchor`.
pub fn constraint_for(class: ConstraintClass, anchor: &Version) -> VersionConstraint {
    let text = match class {
        ConstraintClass::FloatingMajor => format!(">={anchor}"),
        ConstraintClass::FloatingMinor => format!("^{anchor}"),
        ConstraintClass::FloatingPatch => format!("~{anchor}"),
        ConstraintClass::Pinned => anchor.to_string(),
        ConstraintClass::Other => format!("^{anchor} || ^{}.0.0", anchor.major + 2),
    };
    VersionConstraint::parse(&text)
}

/// Failures before the first success; mean `(1 - p) / p`.
fn geometric(rng: &mut ChaCha8Rng, p: f64, cap: usize) -> usize {
    let mut k = 0;
    while k < cap && !rng.random_bool(p) {
        k += 1;
    }
    k
}

/// Discrete Pareto draw with tail index 1.2 and scale 100.
fn pareto(rng: &mut ChaCha8Rng) -> u64 {
    let u: f64 = 1.0 - rng.random::<f64>();
    (100.0 * u.powf(-1.0 / 1.2)).min(1e12) as u64
}

fn next_version(rng: &mut ChaCha8Rng, v: &Version) -> Version {
    let roll = rng.random_range(0..100u32);
    let (major, minor, patch) = if roll < 5 {
        (v.major + 1, 0, 0)
    } else if roll < 30 {
        (v.major, v.minor + 1, 0)
    } else {
        (v.major, v.minor, v.patch + 1)
    };
    Version::new(major, minor, patch)
}

/// Draws `k` distinct targets in `0..limit`.
fn pick_targets(
    rng: &mut ChaCha8Rng,
    k: usize,
    limit: usize,
    attachment: Attachment,
    urn: &[usize],
) -> Vec<usize> {
    let k = k.min(limit);
    match attachment {
        Attachment::Uniform => sample(rng, limit, k).into_vec(),
        Attachment::Preferential => {
            let mut picked: Vec<usize> = Vec::with_capacity(k);
            let mut attempts = 0;
            while picked.len() < k && attempts < 20 * k {
                attempts += 1;
                let t = urn[rng.random_range(0..urn.len())];
                if !picked.contains(&t) {
                    picked.push(t);
                }
            }
            while picked.len() < k {
                let t = rng.random_range(0..limit);
                if !picked.contains(&t) {
                    picked.push(t);
                }
            }
            picked
        }
    }
}

/// Dependency lists where package `i` only points at lower indices. The
/// urn holds each package once plus once per incoming edge.
fn lower_index_dependencies(rng: &mut ChaCha8Rng, cfg: &GenConfig) -> (Vec<Vec<(usize, ConstraintClass)>>, Vec<usize>) {
    let max_k = (2.0 * cfg.deps_per_release).round() as usize;
    let mut urn: Vec<usize> = Vec::new();
    let mut in_degree = vec![0usize; cfg.n_packages];
    let mut deps = Vec::with_capacity(cfg.n_packages);
    for i in 0..cfg.n_packages {
        let k = rng.random_range(0..=max_k);
        let targets = if i == 0 { Vec::new() } else { pick_targets(rng, k, i, cfg.attachment, &urn) };
        let mut out = Vec::with_capacity(targets.len());
        for t in targets {
            out.push((t, draw_class(rng, &cfg.class_mix)));
            in_degree[t] += 1;
            urn.push(t);
        }
        urn.push(i);
        deps.push(out);
    }
    (deps, in_degree)
}

/// A registry whose releases only depend on lower-indexed packages, with
/// each dependency anchored at a release published no later than the
/// dependent release.
pub fn generate_registry(cfg: &GenConfig) -> Result<(RegistrySnapshot, AdvisoryDb), InvalidConfig> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_packages;
    let (start, end) = cfg.time_window;
    let span = (end - start).num_seconds();
    let (deps, in_degree) = lower_index_dependencies(&mut rng, cfg);
    let p_geo = 1.0 / cfg.releases_per_package;

    let mut releases: Vec<Vec<Release>> = Vec::with_capacity(n);
    for (i, dep_list) in deps.iter().enumerate() {
        let name = package_name(i);
        let count = 1 + geometric(&mut rng, p_geo, 63);
        // first releases are staggered by index so lower indices exist first
        let first = start + Duration::seconds(span * 3 / 5 * i as i64 / n as i64);
        let tail = (end - first).num_seconds().max(1);
        let mut times: Vec<Timestamp> = (1..count)
            .map(|_| first + Duration::seconds(rng.random_range(1..=tail)))
            .collect();
        times.sort_unstable();
        times.insert(0, first);
        let mut version = Version::new(1, 0, 0);
        let mut list: Vec<Release> = Vec::with_capacity(count);
        for (r, &published_at) in times.iter().enumerate() {
            if r > 0 {
                version = next_version(&mut rng, &version);
            }
            let mut dependencies = DependencyMap::new();
            for &(t, class) in dep_list {
                let anchor = releases[t]
                    .iter()
                    .rev()
                    .find(|rel| rel.published_at <= published_at)
                    .expect("lower-indexed packages publish first")
                    .version
                    .clone();
                dependencies.insert(package_name(t), constraint_for(class, &anchor));
            }
            list.push(Release {
                package: name.clone(),
                version: version.clone(),
                published_at,
                dependencies,
                dev_dependencies: DependencyMap::new(),
            });
        }
        releases.push(list);
    }

    let mut advisories = Vec::new();
    for (i, list) in releases.iter().enumerate() {
        if !rng.random_bool(cfg.advisory_rate) || list.len() < 2 {
            continue;
        }
        let k = rng.random_range(1..list.len());
        let fixed = &list[k];
        let delay = Duration::seconds(rng.random_range(3600..=30 * 86_400));
        advisories.push(Advisory {
            id: format!("ADV-{i:05}"),
            package: package_name(i),
            affected: VersionConstraint::parse(&format!("<{}", fixed.version)),
            published_at: fixed.published_at + delay,
        });
    }

    let mut builder = RegistryBuilder::new();
    for (i, list) in releases.into_iter().enumerate() {
        let downloads = pareto(&mut rng).saturating_mul(1 + in_degree[i] as u64);
        builder
            .set_downloads(&package_name(i), downloads, 0)
            .expect("fresh package");
        for rel in list {
            builder.add_release(rel, 0).expect("generated releases are unique");
        }
    }
    let db = AdvisoryDb::new(advisories).expect("advisory ids are unique");
    Ok((builder.build(), db))
}

/// `count` project manifests with one to six direct dependencies, each
/// anchored at the newest release visible at `as_of`.
pub fn generate_projects(
    cfg: &GenConfig,
    snapshot: &RegistrySnapshot,
    count: usize,
    as_of: Timestamp,
) -> Result<Vec<Manifest>, InvalidConfig> {
    cfg.validate()?;
    let view = snapshot.view_at(as_of);
    let candidates: Vec<(&str, Version)> = snapshot
        .packages()
        .filter_map(|(name, _)| {
            view.visible(name)
                .ok()
                .and_then(|mut it| it.next_back())
                .map(|r| (name, r.version.clone()))
        })
        .collect();
    if candidates.is_empty() && count > 0 {
        return Err(InvalidConfig("no package is visible at the project date".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5052_4f4a_4543_5453);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let k = rng.random_range(1..=6usize).min(candidates.len());
        let mut picks = sample(&mut rng, candidates.len(), k).into_vec();
        picks.sort_unstable();
        let mut manifest = Manifest::new(format!("project-{i:04}"));
        for idx in picks {
            let (name, version) = &candidates[idx];
            let class = draw_class(&mut rng, &cfg.class_mix);
            manifest
                .dependencies
                .insert(name.to_string(), constraint_for(class, version));
        }
        out.push(manifest);
    }
    Ok(out)
}

/// A package network with the same lower-index attachment process as the
/// registry, optional back-edges, Pareto downloads scaled by in-degree and
/// small maintainer counts.
pub fn generate_network(cfg: &GenConfig) -> Result<EcosystemNetwork, InvalidConfig> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_packages;
    let (mut deps, mut in_degree) = lower_index_dependencies(&mut rng, cfg);
    if cfg.cycle_rate > 0.0 {
        for i in 0..n.saturating_sub(1) {
            if rng.random_bool(cfg.cycle_rate) {
                let t = rng.random_range(i + 1..n);
                deps[i].push((t, draw_class(&mut rng, &cfg.class_mix)));
                in_degree[t] += 1;
            }
        }
    }
    let mut builder = NetworkBuilder::new();
    for (i, &indeg) in in_degree.iter().enumerate() {
        let downloads = pareto(&mut rng).saturating_mul(1 + indeg as u64);
        let maintainers = if rng.random_bool(0.05) {
            0
        } else {
            1 + geometric(&mut rng, 0.5, 20) as u32
        };
        builder
            .add_package(&package_name(i), downloads, Some(maintainers))
            .expect("names are unique");
    }
    for (i, out) in deps.iter().enumerate() {
        for &(t, class) in out {
            builder.add_edge(i, t, class).expect("no self-loops");
        }
    }
    builder
        .build()
        .map_err(|e| InvalidConfig(format!("generated network rejected: {e}")))
}
