//! Immutable registry snapshots and time-restricted views of them.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::semver::{Version, VersionConstraint};

/// UTC timestamp at second resolution.
pub type Timestamp = DateTime<Utc>;

/// Parses an RFC 3339 timestamp, truncating to whole seconds.
pub fn parse_timestamp(text: &str) -> Result<Timestamp, chrono::ParseError> {
    let t = DateTime::parse_from_rfc3339(text)?.with_timezone(&Utc);
    Ok(DateTime::from_timestamp(t.timestamp(), 0).expect("in range"))
}

pub fn format_timestamp(t: &Timestamp) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub type DependencyMap = BTreeMap<String, VersionConstraint>;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate release {package}@{version}")]
    DuplicateRelease {
        line: usize,
        package: String,
        version: Version,
    },
    #[error("line {line}: {package} depends on itself")]
    SelfDependency { line: usize, package: String },
    #[error("line {line}: conflicting download counts for {package}")]
    ConflictingDownloads { line: usize, package: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown package `{0}`")]
pub struct UnknownPackage(pub String);

#[derive(Debug, Clone)]
pub struct Release {
    pub package: String,
    pub version: Version,
    pub published_at: Timestamp,
    pub dependencies: DependencyMap,
    pub dev_dependencies: DependencyMap,
}

#[derive(Debug, Clone, Default)]
pub struct PackageEntry {
    releases: Vec<Release>,
    downloads: u64,
}

impl PackageEntry {
    /// Releases in ascending version order.
    pub fn releases(&self) -> &[Release] {
        &self.releases
    }

    pub fn downloads(&self) -> u64 {
        self.downloads
    }
}

#[derive(Debug, Clone, Default)]
pub struct RegistrySnapshot {
    packages: BTreeMap<String, PackageEntry>,
}

/// Accumulates releases and enforces the snapshot invariants.
#[derive(Debug, Default)]
pub struct RegistryBuilder {
    packages: BTreeMap<String, PackageEntry>,
    downloads_seen: BTreeMap<String, u64>,
}

impl RegistryBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// `line` is only used for error reporting.
    pub fn add_release(&mut self, release: Release, line: usize) -> Result<(), RegistryError> {
        if release.dependencies.contains_key(&release.package)
            || release.dev_dependencies.contains_key(&release.package)
        {
            return Err(RegistryError::SelfDependency {
                line,
                package: release.package,
            });
        }
        let entry = self.packages.entry(release.package.clone()).or_default();
        if entry.releases.iter().any(|r| r.version == release.version) {
            return Err(RegistryError::DuplicateRelease {
                line,
                package: release.package,
                version: release.version,
            });
        }
        entry.releases.push(release);
        Ok(())
    }

    pub fn set_downloads(&mut self, package: &str, downloads: u64, line: usize) -> Result<(), RegistryError> {
        match self.downloads_seen.entry(package.to_string()) {
            Entry::Occupied(e) if *e.get() != downloads => Err(RegistryError::ConflictingDownloads {
                line,
                package: package.to_string(),
            }),
            Entry::Occupied(_) => Ok(()),
            Entry::Vacant(e) => {
                e.insert(downloads);
                self.packages.entry(package.to_string()).or_default().downloads = downloads;
                Ok(())
            }
        }
    }

    pub fn build(mut self) -> RegistrySnapshot {
        for entry in self.packages.values_mut() {
            entry.releases.sort_by(|a, b| a.version.cmp(&b.version));
        }
        RegistrySnapshot {
            packages: self.packages,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ReleaseRecord {
    name: String,
    version: String,
    published_at: String,
    #[serde(default)]
    dependencies: BTreeMap<String, String>,
    #[serde(default)]
    dev_dependencies: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    downloads: Option<u64>,
}

/// Result of [`load_registry`].
#[derive(Debug)]
pub struct LoadedRegistry {
    pub snapshot: RegistrySnapshot,
    pub records: usize,
}

/// Reads a `registry.jsonl` stream: one release object per line. Blank lines
/// are skipped.
pub fn load_registry<R: BufRead>(reader: R) -> Result<LoadedRegistry, RegistryError> {
    let mut builder = RegistryBuilder::new();
    let mut records = 0;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| RegistryError::Parse {
            line: line_no,
            message,
        };
        let record: ReleaseRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let version = Version::parse(&record.version)
            .map_err(|e| parse_err(format!("version `{}`: {e}", record.version)))?;
        let published_at = parse_timestamp(&record.published_at)
            .map_err(|e| parse_err(format!("published_at `{}`: {e}", record.published_at)))?;
        let convert = |m: BTreeMap<String, String>| -> DependencyMap {
            m.into_iter()
                .map(|(k, v)| (k, VersionConstraint::parse(&v)))
                .collect()
        };
        if let Some(d) = record.downloads {
            builder.set_downloads(&record.name, d, line_no)?;
        }
        builder.add_release(
            Release {
                package: record.name,
                version,
                published_at,
                dependencies: convert(record.dependencies),
                dev_dependencies: convert(record.dev_dependencies),
            },
            line_no,
        )?;
        records += 1;
    }
    Ok(LoadedRegistry {
        snapshot: builder.build(),
        records,
    })
}

impl RegistrySnapshot {
    pub fn package_count(&self) -> usize {
        self.packages.len()
    }

    pub fn release_count(&self) -> usize {
        self.packages.values().map(|p| p.releases.len()).sum()
    }

    pub fn packages(&self) -> impl Iterator<Item = (&str, &PackageEntry)> {
        self.packages.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn package(&self, name: &str) -> Option<&PackageEntry> {
        self.packages.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.packages.contains_key(name)
    }

    pub fn release(&self, name: &str, version: &Version) -> Option<&Release> {
        let entry = self.packages.get(name)?;
        entry
            .releases
            .binary_search_by(|r| r.version.cmp(version))
            .ok()
            .map(|i| &entry.releases[i])
    }

    /// Annual downloads; 0 for unknown packages.
    pub fn downloads(&self, name: &str) -> u64 {
        self.packages.get(name).map_or(0, |p| p.downloads)
    }

    pub fn view_at(&self, cutoff: Timestamp) -> TimeView<'_> {
        TimeView {
            snapshot: self,
            cutoff,
        }
    }

    /// Writes the snapshot in `registry.jsonl` form, packages by name then
    /// releases by version.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (name, entry) in &self.packages {
            for release in &entry.releases {
                let to_strings = |m: &DependencyMap| -> BTreeMap<String, String> {
                    m.iter()
                        .map(|(k, v)| (k.clone(), v.source().to_string()))
                        .collect()
                };
                let record = ReleaseRecord {
                    name: name.clone(),
                    version: release.version.to_string(),
                    published_at: format_timestamp(&release.published_at),
                    dependencies: to_strings(&release.dependencies),
                    dev_dependencies: to_strings(&release.dev_dependencies),
                    downloads: Some(entry.downloads),
                };
                serde_json::to_writer(&mut out, &record)?;
                out.write_all(b"\n")?;
            }
        }
        Ok(())
    }
}

pub fn view_at(snapshot: &RegistrySnapshot, cutoff: Timestamp) -> TimeView<'_> {
    snapshot.view_at(cutoff)
}

/// The registry as it looked at `cutoff` (inclusive).
#[derive(Debug, Clone, Copy)]
pub struct TimeView<'a> {
    snapshot: &'a RegistrySnapshot,
    cutoff: Timestamp,
}

impl<'a> TimeView<'a> {
    pub fn cutoff(&self) -> Timestamp {
        self.cutoff
    }

    pub fn snapshot(&self) -> &'a RegistrySnapshot {
        self.snapshot
    }

    pub fn is_visible(&self, release: &Release) -> bool {
        release.published_at <= self.cutoff
    }

    /// Visible releases of `package` in ascending version order.
    pub fn visible(&self, package: &str) -> Result<impl DoubleEndedIterator<Item = &'a Release> + '_, UnknownPackage> {
        let entry = self
            .snapshot
            .package(package)
            .ok_or_else(|| UnknownPackage(package.to_string()))?;
        let cutoff = self.cutoff;
        Ok(entry.releases.iter().filter(move |r| r.published_at <= cutoff))
    }

    pub fn visible_count(&self) -> usize {
        self.snapshot
            .packages
            .values()
            .flat_map(|p| &p.releases)
            .filter(|r| self.is_visible(r))
            .count()
    }

    /// Highest visible version of `package` admitted by `c`.
    pub fn latest_satisfying(
        &self,
        package: &str,
        c: &VersionConstraint,
    ) -> Result<Option<&'a Release>, UnknownPackage> {
        Ok(self.visible(package)?.rev().find(|r| c.satisfies(&r.version)))
    }

    /// Lowest visible version of `package` admitted by `c`.
    pub fn lowest_satisfying(
        &self,
        package: &str,
        c: &VersionConstraint,
    ) -> Result<Option<&'a Release>, UnknownPackage> {
        Ok(self.visible(package)?.find(|r| c.satisfies(&r.version)))
    }

    /// Highest visible non-prerelease version.
    pub fn latest_stable(&self, package: &str) -> Result<Option<&'a Release>, UnknownPackage> {
        Ok(self.visible(package)?.rev().find(|r| !r.version.is_prerelease()))
    }
}

pub fn latest_satisfying<'a>(
    view: &TimeView<'a>,
    package: &str,
    c: &VersionConstraint,
) -> Result<Option<&'a Version>, UnknownPackage> {
    Ok(view.latest_satisfying(package, c)?.map(|r| &r.version))
}

/// A project's direct dependency declarations.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    #[serde(default)]
    pub dependencies: DependencyMap,
    #[serde(default, alias = "devDependencies")]
    pub dev_dependencies: DependencyMap,
}

impl Manifest {
    pub fn new(name: impl Into<String>) -> Self {
        Manifest {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn with_dependency(mut self, package: &str, constraint: &str) -> Self {
        self.dependencies
            .insert(package.to_string(), VersionConstraint::parse(constraint));
        self
    }

    pub fn with_dev_dependency(mut self, package: &str, constraint: &str) -> Self {
        self.dev_dependencies
            .insert(package.to_string(), VersionConstraint::parse(constraint));
        self
    }
}

/// Reads one manifest per line (`projects.jsonl`).
pub fn load_manifests<R: BufRead>(reader: R) -> Result<Vec<Manifest>, RegistryError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let manifest: Manifest = serde_json::from_str(&line).map_err(|e| RegistryError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(manifest);
    }
    Ok(out)
}

pub fn write_manifests<W: Write>(manifests: &[Manifest], mut out: W) -> std::io::Result<()> {
    for m in manifests {
        serde_json::to_writer(&mut out, m)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
