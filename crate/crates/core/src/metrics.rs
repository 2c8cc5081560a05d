//! The five security/maintenance metrics over resolved graphs, and the
//! balanced control-vs-pinning panel built from them.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use chrono::Duration;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::{
    format_timestamp, parse_timestamp, Manifest, RegistrySnapshot, TimeView, Timestamp,
};
use crate::resolver::{pin_manifest, resolve, ResolveError, ResolveOptions, ResolvedGraph, ROOT};
use crate::semver::{ConstraintClass, Version, VersionConstraint};

#[derive(Debug, Error)]
pub enum AdvisoryError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate advisory id `{0}`")]
    DuplicateId(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Advisory {
    pub id: String,
    pub package: String,
    /// Range of vulnerable versions.
    pub affected: VersionConstraint,
    pub published_at: Timestamp,
}

#[derive(Debug, Serialize, Deserialize)]
struct AdvisoryRecord {
    id: String,
    package: String,
    affected: String,
    published_at: String,
}

#[derive(Debug, Clone, Default)]
pub struct AdvisoryDb {
    by_package: BTreeMap<String, Vec<Advisory>>,
    len: usize,
}

impl AdvisoryDb {
    pub fn new(advisories: impl IntoIterator<Item = Advisory>) -> Result<AdvisoryDb, AdvisoryError> {
        let mut ids = HashSet::new();
        let mut db = AdvisoryDb::default();
        for adv in advisories {
            if !ids.insert(adv.id.clone()) {
                return Err(AdvisoryError::DuplicateId(adv.id));
            }
            db.by_package.entry(adv.package.clone()).or_default().push(adv);
            db.len += 1;
        }
        Ok(db)
    }

    /// Reads `advisories.jsonl`.
    pub fn load_jsonl<R: BufRead>(reader: R) -> Result<AdvisoryDb, AdvisoryError> {
        let mut advisories = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| AdvisoryError::Parse {
                line: idx + 1,
                message,
            };
            let rec: AdvisoryRecord =
                serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            let published_at = parse_timestamp(&rec.published_at)
                .map_err(|e| parse_err(format!("published_at: {e}")))?;
            advisories.push(Advisory {
                id: rec.id,
                package: rec.package,
                affected: VersionConstraint::parse(&rec.affected),
                published_at,
            });
        }
        AdvisoryDb::new(advisories)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for adv in self.iter() {
            let rec = AdvisoryRecord {
                id: adv.id.clone(),
                package: adv.package.clone(),
                affected: adv.affected.source().to_string(),
                published_at: format_timestamp(&adv.published_at),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Advisory> {
        self.by_package.values().flatten()
    }

    pub fn for_package(&self, package: &str) -> &[Advisory] {
        self.by_package.get(package).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// True if some advisory published by `t` covers `package@version`.
    pub fn is_vulnerable(&self, package: &str, version: &Version, t: Timestamp) -> bool {
        self.for_package(package)
            .iter()
            .any(|a| a.published_at <= t && a.affected.satisfies(version))
    }
}

/// Edges whose constraint class is any floating variant, root edges included.
pub fn n_floating(g: &ResolvedGraph) -> u64 {
    g.edges().iter().filter(|e| e.constraint.is_floating()).count() as u64
}

/// Distinct packages present at two or more versions.
pub fn n_bloated(g: &ResolvedGraph) -> u64 {
    let mut versions: BTreeMap<&str, usize> = BTreeMap::new();
    for (_, node) in g.installed() {
        *versions.entry(node.package.as_str()).or_default() += 1;
    }
    versions.values().filter(|&&n| n >= 2).count() as u64
}

/// Installed nodes matching at least one advisory visible at `t`. Each
/// installed copy counts separately.
pub fn n_vuln(g: &ResolvedGraph, db: &AdvisoryDb, t: Timestamp) -> u64 {
    g.installed()
        .filter(|(_, n)| db.is_vulnerable(&n.package, &n.version, t))
        .count() as u64
}

/// Direct dependencies installed below the newest stable release visible in
/// `view`.
pub fn n_outdated_deps(g: &ResolvedGraph, view: &TimeView<'_>) -> u64 {
    g.root_edges()
        .filter(|e| {
            let node = g.node(e.to);
            matches!(view.latest_stable(&node.package), Ok(Some(r)) if node.version < r.version)
        })
        .count() as u64
}

/// Automatic updates between `t0` and `t` for the project's floating edges.
pub fn n_auto_updates(
    manifest: &Manifest,
    snapshot: &RegistrySnapshot,
    t0: Timestamp,
    t: Timestamp,
    opts: &ResolveOptions,
) -> Result<u64, ResolveError> {
    let g0 = resolve(&snapshot.view_at(t0), manifest, opts)?;
    let gt = resolve(&snapshot.view_at(t), manifest, opts)?;
    Ok(auto_updates_between(snapshot, &g0, &gt, t0, t))
}

type EdgeKey<'g> = (&'g str, Option<&'g Version>, &'g str, &'g str);

fn edge_key<'g>(g: &'g ResolvedGraph, e: &'g crate::resolver::Edge) -> EdgeKey<'g> {
    let from = g.node(e.from);
    let from_version = (e.from != ROOT).then_some(&from.version);
    let from_pkg = if e.from == ROOT { "" } else { from.package.as_str() };
    (from_pkg, from_version, g.node(e.to).package.as_str(), e.constraint.source())
}

/// Replays publish events per floating edge.
///
/// Edges of the `t0` graph start from their `t0` resolution. Edges that only
/// exist in the `t` graph start when their declaring release was published
/// (or `t0`, whichever is later).
pub fn auto_updates_between(
    snapshot: &RegistrySnapshot,
    g0: &ResolvedGraph,
    gt: &ResolvedGraph,
    t0: Timestamp,
    t: Timestamp,
) -> u64 {
    if t <= t0 {
        return 0;
    }
    let mut total = 0;
    let mut seen: HashSet<EdgeKey<'_>> = HashSet::new();
    for e in g0.edges().iter().filter(|e| e.constraint.is_floating()) {
        seen.insert(edge_key(g0, e));
        let to = g0.node(e.to);
        total += replay(snapshot, &to.package, &e.constraint, Some(to.version.clone()), t0, t);
    }
    for e in gt.edges().iter().filter(|e| e.constraint.is_floating()) {
        if seen.contains(&edge_key(gt, e)) {
            continue;
        }
        let from = gt.node(e.from);
        let start = from.published_at.map_or(t0, |p| p.max(t0));
        let package = &gt.node(e.to).package;
        let current = snapshot
            .view_at(start)
            .latest_satisfying(package, &e.constraint)
            .ok()
            .flatten()
            .map(|r| r.version.clone());
        total += replay(snapshot, package, &e.constraint, current, start, t);
    }
    total
}

fn replay(
    snapshot: &RegistrySnapshot,
    package: &str,
    constraint: &VersionConstraint,
    mut current: Option<Version>,
    start: Timestamp,
    end: Timestamp,
) -> u64 {
    let Some(entry) = snapshot.package(package) else {
        return 0;
    };
    let mut events: Vec<_> = entry
        .releases()
        .iter()
        .filter(|r| r.published_at > start && r.published_at <= end)
        .filter(|r| constraint.satisfies(&r.version))
        .collect();
    events.sort_by(|a, b| a.published_at.cmp(&b.published_at).then(a.version.cmp(&b.version)));
    let mut count = 0;
    for r in events {
        match &current {
            Some(cur) if r.version <= *cur => {}
            Some(_) => {
                count += 1;
                current = Some(r.version.clone());
            }
            // First appearance is an install, not an update.
            None => current = Some(r.version.clone()),
        }
    }
    count
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Control,
    Pinning,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Control => "control",
            Condition::Pinning => "pinning",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub project: String,
    pub time_index: usize,
    pub condition: Condition,
    pub n_floating: u64,
    pub n_auto_updates: u64,
    pub n_vuln: u64,
    pub n_outdated_deps: u64,
    pub n_bloated: u64,
    pub size_g: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    NFloating,
    NAutoUpdates,
    NVuln,
    NOutdatedDeps,
    NBloated,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::NFloating,
        Metric::NAutoUpdates,
        Metric::NVuln,
        Metric::NOutdatedDeps,
        Metric::NBloated,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::NFloating => "n_floating",
            Metric::NAutoUpdates => "n_auto_updates",
            Metric::NVuln => "n_vuln",
            Metric::NOutdatedDeps => "n_outdated_deps",
            Metric::NBloated => "n_bloated",
        }
    }

    pub fn value(self, r: &MetricRecord) -> u64 {
        match self {
            Metric::NFloating => r.n_floating,
            Metric::NAutoUpdates => r.n_auto_updates,
            Metric::NVuln => r.n_vuln,
            Metric::NOutdatedDeps => r.n_outdated_deps,
            Metric::NBloated => r.n_bloated,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown metric `{s}`"))
    }
}

/// `t0` followed by four 90-day steps.
pub fn default_schedule(t0: Timestamp) -> [Timestamp; 5] {
    std::array::from_fn(|i| t0 + Duration::days(90 * i as i64))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DroppedProject {
    pub project: String,
    pub condition: Condition,
    pub time_index: usize,
    pub error: ResolveError,
}

#[derive(Debug, Clone, Default)]
pub struct Panel {
    pub records: Vec<MetricRecord>,
    pub dropped: Vec<DroppedProject>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("schedule must be strictly increasing")]
pub struct InvalidSchedule;

/// Resolves every project under both conditions at every scheduled time.
/// Projects with any failed resolution are dropped so the panel stays
/// balanced. Output order follows `projects`, then time, then condition.
pub fn build_panel(
    projects: &[Manifest],
    snapshot: &RegistrySnapshot,
    schedule: &[Timestamp; 5],
    db: &AdvisoryDb,
    opts: &ResolveOptions,
) -> Result<Panel, InvalidSchedule> {
    if schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(InvalidSchedule);
    }
    let per_project: Vec<Result<Vec<MetricRecord>, DroppedProject>> = projects
        .par_iter()
        .map(|m| project_records(m, snapshot, schedule, db, opts))
        .collect();
    let mut panel = Panel::default();
    for result in per_project {
        match result {
            Ok(records) => panel.records.extend(records),
            Err(dropped) => panel.dropped.push(dropped),
        }
    }
    Ok(panel)
}

fn project_records(
    manifest: &Manifest,
    snapshot: &RegistrySnapshot,
    schedule: &[Timestamp; 5],
    db: &AdvisoryDb,
    opts: &ResolveOptions,
) -> Result<Vec<MetricRecord>, DroppedProject> {
    let t0 = schedule[0];
    let pinned = pin_manifest(manifest, &snapshot.view_at(t0)).manifest;
    let conditions = [(Condition::Control, manifest), (Condition::Pinning, &pinned)];
    let mut baselines = Vec::with_capacity(2);
    for (condition, m) in conditions {
        let g0 = resolve(&snapshot.view_at(t0), m, opts).map_err(|error| DroppedProject {
            project: manifest.name.clone(),
            condition,
            time_index: 0,
            error,
        })?;
        baselines.push(g0);
    }
    let mut records = Vec::with_capacity(10);
    for (time_index, &t) in schedule.iter().enumerate() {
        let view = snapshot.view_at(t);
        for ((condition, m), g0) in conditions.iter().zip(&baselines) {
            let g = resolve(&view, m, opts).map_err(|error| DroppedProject {
                project: manifest.name.clone(),
                condition: *condition,
                time_index,
                error,
            })?;
            records.push(MetricRecord {
                project: manifest.name.clone(),
                time_index,
                condition: *condition,
                n_floating: n_floating(&g),
                n_auto_updates: auto_updates_between(snapshot, g0, &g, t0, t),
                n_vuln: n_vuln(&g, db, t),
                n_outdated_deps: n_outdated_deps(&g, &view),
                n_bloated: n_bloated(&g),
                size_g: g.size() as u64,
            });
        }
    }
    Ok(records)
}

pub fn write_panel_csv<W: Write>(records: &[MetricRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_panel_csv<R: Read>(input: R) -> csv::Result<Vec<MetricRecord>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// Count of edges by constraint class.
pub fn edge_class_counts(g: &ResolvedGraph) -> BTreeMap<ConstraintClass, u64> {
    let mut counts = BTreeMap::new();
    for e in g.edges() {
        *counts.entry(e.constraint.class()).or_default() += 1;
    }
    counts
}

/// Distinct packages in the graph.
pub fn distinct_packages(g: &ResolvedGraph) -> BTreeSet<&str> {
    g.installed().map(|(_, n)| n.package.as_str()).collect()
}
