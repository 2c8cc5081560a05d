//! npm-style dependency resolution with deduplication, plus the manifest
//! pinning transform.
//!
//! Requirements are processed breadth-first from the root. Within one depth
//! they are ordered by (package name, declaring node). Each requirement first
//! reuses the highest already-installed version of the package that satisfies
//! it; otherwise the latest visible satisfying release is installed as a new
//! node and expanded at the next depth. Reuse only sees what earlier depths
//! (and earlier requirements at the same depth) installed, so incompatible
//! declarations discovered at different depths end up as duplicate versions.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::{DependencyMap, Manifest, TimeView, Timestamp};
use crate::semver::{ConstraintClass, Version, VersionConstraint};

pub type NodeId = usize;

/// The manifest's node is always index 0.
pub const ROOT: NodeId = 0;

pub const ROOT_VERSION: &str = "0.0.0-root";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolveOptions {
    /// Install the root's dev dependencies. Transitive dev dependencies are
    /// never installed.
    pub include_dev_at_root: bool,
    /// Fail on an unresolvable requirement instead of recording it.
    pub strict: bool,
}

impl Default for ResolveOptions {
    fn default() -> Self {
        ResolveOptions {
            include_dev_at_root: false,
            strict: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolveError {
    #[error("no visible version of {package} satisfies `{constraint}` (via {})", .path.join(" > "))]
    UnresolvableRequirement {
        path: Vec<String>,
        package: String,
        constraint: String,
    },
    #[error("package {package} is not in the registry (via {})", .path.join(" > "))]
    UnknownPackage { path: Vec<String>, package: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub package: String,
    pub version: Version,
    /// `None` for the root.
    pub published_at: Option<Timestamp>,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub constraint: VersionConstraint,
}

/// A requirement that could not be satisfied in non-strict mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dangling {
    pub from: NodeId,
    pub package: String,
    pub constraint: VersionConstraint,
    pub unknown_package: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    dangling: Vec<Dangling>,
    resolved_at: Timestamp,
}

impl ResolvedGraph {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn dangling(&self) -> &[Dangling] {
        &self.dangling
    }

    pub fn resolved_at(&self) -> Timestamp {
        self.resolved_at
    }

    /// Node count excluding the root.
    pub fn size(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn root_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(|e| e.from == ROOT)
    }

    /// Non-root nodes.
    pub fn installed(&self) -> impl Iterator<Item = (NodeId, &Node)> {
        self.nodes.iter().enumerate().skip(1)
    }

    pub fn find(&self, package: &str, version: &Version) -> Option<NodeId> {
        self.installed()
            .find(|(_, n)| n.package == package && &n.version == version)
            .map(|(id, _)| id)
    }

    /// Node-list CSV: `package,version`, root first.
    pub fn write_nodes_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["package", "version"])?;
        for (id, node) in self.nodes.iter().enumerate() {
            let (pkg, ver) = self.export_key(id, node);
            w.write_record([pkg.as_str(), ver.as_str()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Edge-list CSV: `from_pkg,from_version,to_pkg,to_version,constraint,class`.
    pub fn write_edges_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["from_pkg", "from_version", "to_pkg", "to_version", "constraint", "class"])?;
        for edge in &self.edges {
            let (fp, fv) = self.export_key(edge.from, &self.nodes[edge.from]);
            let (tp, tv) = self.export_key(edge.to, &self.nodes[edge.to]);
            w.write_record([
                fp.as_str(),
                fv.as_str(),
                tp.as_str(),
                tv.as_str(),
                edge.constraint.source(),
                edge.constraint.class().as_str(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    fn export_key(&self, id: NodeId, node: &Node) -> (String, String) {
        if id == ROOT {
            (String::new(), ROOT_VERSION.to_string())
        } else {
            (node.package.clone(), node.version.to_string())
        }
    }
}

struct Requirement<'m> {
    package: &'m str,
    from: NodeId,
    constraint: &'m VersionConstraint,
}

fn root_requirements<'m>(manifest: &'m Manifest, opts: &ResolveOptions) -> Vec<(&'m str, &'m VersionConstraint)> {
    let mut deps: Vec<(&str, &VersionConstraint)> = manifest
        .dependencies
        .iter()
        .map(|(k, v)| (k.as_str(), v))
        .collect();
    if opts.include_dev_at_root {
        // Production declarations win on a name clash.
        deps.extend(
            manifest
                .dev_dependencies
                .iter()
                .filter(|(k, _)| !manifest.dependencies.contains_key(*k))
                .map(|(k, v)| (k.as_str(), v)),
        );
    }
    deps
}

pub fn resolve(
    view: &TimeView<'_>,
    manifest: &Manifest,
    opts: &ResolveOptions,
) -> Result<ResolvedGraph, ResolveError> {
    let snapshot = view.snapshot();
    let mut nodes = vec![Node {
        package: manifest.name.clone(),
        version: Version::parse(ROOT_VERSION).expect("valid"),
        published_at: None,
        depth: 0,
    }];
    let mut parent: Vec<Option<NodeId>> = vec![None];
    let mut installed: HashMap<&str, Vec<NodeId>> = HashMap::new();
    let mut edges = Vec::new();
    let mut dangling = Vec::new();

    let path_to = |nodes: &[Node], parent: &[Option<NodeId>], mut id: NodeId| -> Vec<String> {
        let mut path = Vec::new();
        loop {
            let n = &nodes[id];
            path.push(if id == ROOT {
                n.package.clone()
            } else {
                format!("{}@{}", n.package, n.version)
            });
            match parent[id] {
                Some(p) => id = p,
                None => break,
            }
        }
        path.reverse();
        path
    };

    let mut frontier = vec![ROOT];
    let mut depth = 0;
    while !frontier.is_empty() {
        depth += 1;
        let mut reqs: Vec<Requirement<'_>> = Vec::new();
        for &id in &frontier {
            let declared: Vec<(&str, &VersionConstraint)> = if id == ROOT {
                root_requirements(manifest, opts)
            } else {
                let n = &nodes[id];
                let release = snapshot
                    .release(&n.package, &n.version)
                    .expect("installed nodes come from the snapshot");
                release
                    .dependencies
                    .iter()
                    .map(|(k, v)| (k.as_str(), v))
                    .collect()
            };
            reqs.extend(declared.into_iter().map(|(package, constraint)| Requirement {
                package,
                from: id,
                constraint,
            }));
        }
        reqs.sort_by(|a, b| {
            a.package.cmp(b.package).then_with(|| {
                let (na, nb) = (&nodes[a.from], &nodes[b.from]);
                (a.from != ROOT, &na.package, &na.version).cmp(&(b.from != ROOT, &nb.package, &nb.version))
            })
        });

        let mut next = Vec::new();
        for req in reqs {
            let reuse = installed.get(req.package).and_then(|ids| {
                ids.iter()
                    .copied()
                    .filter(|&id| req.constraint.satisfies(&nodes[id].version))
                    .max_by(|&a, &b| nodes[a].version.cmp(&nodes[b].version))
            });
            if let Some(to) = reuse {
                edges.push(Edge {
                    from: req.from,
                    to,
                    constraint: req.constraint.clone(),
                });
                continue;
            }
            let found = view.latest_satisfying(req.package, req.constraint);
            let release = match found {
                Ok(Some(r)) => r,
                Ok(None) | Err(_) => {
                    let unknown = found.is_err();
                    if opts.strict {
                        let path = path_to(&nodes, &parent, req.from);
                        return Err(if unknown {
                            ResolveError::UnknownPackage {
                                path,
                                package: req.package.to_string(),
                            }
                        } else {
                            ResolveError::UnresolvableRequirement {
                                path,
                                package: req.package.to_string(),
                                constraint: req.constraint.source().to_string(),
                            }
                        });
                    }
                    dangling.push(Dangling {
                        from: req.from,
                        package: req.package.to_string(),
                        constraint: req.constraint.clone(),
                        unknown_package: unknown,
                    });
                    continue;
                }
            };
            let id = nodes.len();
            nodes.push(Node {
                package: release.package.clone(),
                version: release.version.clone(),
                published_at: Some(release.published_at),
                depth,
            });
            parent.push(Some(req.from));
            installed.entry(req.package).or_default().push(id);
            edges.push(Edge {
                from: req.from,
                to: id,
                constraint: req.constraint.clone(),
            });
            next.push(id);
        }
        frontier = next;
    }

    Ok(ResolvedGraph {
        nodes,
        edges,
        dangling,
        resolved_at: view.cutoff(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PinDiagnostic {
    pub package: String,
    pub constraint: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct PinnedManifest {
    pub manifest: Manifest,
    pub diagnostics: Vec<PinDiagnostic>,
}

/// Pins every direct dependency (production and dev).
///
/// Caret/tilde-shaped ranges pin to their declared lower bound. Ranges
/// without a usable lower bound pin to the lowest version visible in `view`.
pub fn pin_manifest(manifest: &Manifest, view: &TimeView<'_>) -> PinnedManifest {
    let mut diagnostics = Vec::new();
    let mut pin_map = |deps: &DependencyMap| -> DependencyMap {
        deps.iter()
            .map(|(name, c)| (name.clone(), pin_constraint(name, c, view, &mut diagnostics)))
            .collect()
    };
    let dependencies = pin_map(&manifest.dependencies);
    let dev_dependencies = pin_map(&manifest.dev_dependencies);
    PinnedManifest {
        manifest: Manifest {
            name: manifest.name.clone(),
            dependencies,
            dev_dependencies,
        },
        diagnostics,
    }
}

fn pin_constraint(
    name: &str,
    c: &VersionConstraint,
    view: &TimeView<'_>,
    diagnostics: &mut Vec<PinDiagnostic>,
) -> VersionConstraint {
    match c.class() {
        ConstraintClass::Pinned => c.clone(),
        ConstraintClass::FloatingMinor | ConstraintClass::FloatingPatch => match c.lower_bound() {
            Some(lb) => VersionConstraint::exact(&lb),
            None => c.clone(),
        },
        ConstraintClass::FloatingMajor | ConstraintClass::Other => {
            match view.lowest_satisfying(name, c) {
                Ok(Some(release)) => VersionConstraint::exact(&release.version),
                Ok(None) | Err(_) => {
                    diagnostics.push(PinDiagnostic {
                        package: name.to_string(),
                        constraint: c.source().to_string(),
                        message: "no visible version satisfies the constraint; left unchanged".into(),
                    });
                    c.clone()
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProjectStrategy {
    FloatingOnly,
    PinningOnly,
    Mixed,
    NoProd,
}

impl ProjectStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            ProjectStrategy::FloatingOnly => "floating-only",
            ProjectStrategy::PinningOnly => "pinning-only",
            ProjectStrategy::Mixed => "mixed",
            ProjectStrategy::NoProd => "no-prod",
        }
    }
}

/// Classifies a project by its production constraints; `Other` is ignored.
/// A project whose production dependencies are all `Other` counts as `NoProd`.
pub fn classify_strategy(manifest: &Manifest) -> ProjectStrategy {
    let mut floating = false;
    let mut pinned = false;
    for c in manifest.dependencies.values() {
        match c.class() {
            ConstraintClass::Pinned => pinned = true,
            ConstraintClass::Other => {}
            _ => floating = true,
        }
    }
    match (floating, pinned) {
        (true, true) => ProjectStrategy::Mixed,
        (true, false) => ProjectStrategy::FloatingOnly,
        (false, true) => ProjectStrategy::PinningOnly,
        (false, false) => ProjectStrategy::NoProd,
    }
}
