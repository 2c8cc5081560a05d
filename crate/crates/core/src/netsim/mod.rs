//! Ecosystem-level attack and defense simulation on a package dependency
//! network.
//!
//! Edges point from a dependent to its dependency. An attack on package `a`
//! propagates against edge direction, to everything that (transitively)
//! depends on `a`. Defended packages interrupt propagation in one of two
//! ways:
//!
//! * local pinning: a defended package pins its own direct dependencies, so
//!   only the final hop into `a` is blocked when it leaves a defended
//!   package. The defended package is still reached through other floating
//!   chains;
//! * transitive pinning: a defended package ships its whole resolved
//!   subtree, so no path may pass through it.

mod centrality;
mod defense;
mod propagate;
mod scc;

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::semver::ConstraintClass;

pub use centrality::{betweenness, Centrality};
pub use defense::{
    defense_curve, defense_curve_for_order, rank_targets, select_defense, select_defense_with,
    AttackModel, AttackSelection, CurvePoint, Strategy,
};
pub use propagate::{affected_set, impact, risk, Propagator};
pub use scc::{all_impacts, condensation, Condensation};

pub type PackageId = usize;

#[derive(Debug, Error)]
pub enum NetsimError {
    #[error("unknown package `{0}`")]
    UnknownPackage(String),
    #[error("duplicate package `{0}`")]
    DuplicatePackage(String),
    #[error("self-loop on `{0}`")]
    SelfLoop(String),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(String, String),
    #[error("total downloads are zero")]
    ZeroDownloads,
    #[error("attack target set is empty")]
    EmptyTargetSet,
    #[error("fragile-target selection needs maintainer counts")]
    MissingMaintainerData,
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mechanism {
    LocalPinning,
    TransitivePinning,
}

impl Mechanism {
    pub const ALL: [Mechanism; 2] = [Mechanism::LocalPinning, Mechanism::TransitivePinning];

    pub fn as_str(self) -> &'static str {
        match self {
            Mechanism::LocalPinning => "local",
            Mechanism::TransitivePinning => "transitive",
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mechanism {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mechanism::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mechanism `{s}` (expected local or transitive)"))
    }
}

/// Whether declared edge classes gate the final hop of an attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum FloatingMode {
    /// Every edge floats regardless of its label.
    #[default]
    AssumeAllFloating,
    /// Only edges labelled with a floating class carry the attack into
    /// the first dependent.
    HonorDeclared,
}

/// A defended-package set. `defended` is ordered so that its prefixes are
/// the smaller plans.
#[derive(Debug, Clone, PartialEq)]
pub struct DefensePlan {
    pub mechanism: Mechanism,
    pub defended: Vec<PackageId>,
    pub strategy: Option<Strategy>,
    pub floating_mode: FloatingMode,
}

impl DefensePlan {
    pub fn undefended() -> Self {
        DefensePlan {
            mechanism: Mechanism::TransitivePinning,
            defended: Vec::new(),
            strategy: None,
            floating_mode: FloatingMode::AssumeAllFloating,
        }
    }

    pub fn new(mechanism: Mechanism, defended: Vec<PackageId>) -> Self {
        DefensePlan {
            mechanism,
            defended,
            strategy: None,
            floating_mode: FloatingMode::AssumeAllFloating,
        }
    }

    pub fn with_floating_mode(mut self, mode: FloatingMode) -> Self {
        self.floating_mode = mode;
        self
    }

    /// The plan restricted to its first `n` defended packages.
    pub fn prefix(&self, n: usize) -> DefensePlan {
        DefensePlan {
            defended: self.defended[..n.min(self.defended.len())].to_vec(),
            ..self.clone()
        }
    }

    pub(crate) fn blocked_mask(&self, n: usize) -> Vec<bool> {
        let mut mask = vec![false; n];
        for &d in &self.defended {
            mask[d] = true;
        }
        mask
    }
}

/// Package-level dependency network. Package ids follow lexicographic name
/// order, so id order doubles as the name tie-break.
#[derive(Debug, Clone)]
pub struct EcosystemNetwork {
    names: Vec<String>,
    index: HashMap<String, PackageId>,
    downloads: Vec<u64>,
    maintainers: Vec<Option<u32>>,
    deps: Vec<Vec<(PackageId, ConstraintClass)>>,
    dependents: Vec<Vec<(PackageId, ConstraintClass)>>,
    edge_count: usize,
    total_downloads: u128,
}

impl EcosystemNetwork {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn name(&self, id: PackageId) -> &str {
        &self.names[id]
    }

    pub fn id(&self, name: &str) -> Result<PackageId, NetsimError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| NetsimError::UnknownPackage(name.to_string()))
    }

    pub fn downloads(&self, id: PackageId) -> u64 {
        self.downloads[id]
    }

    pub fn maintainers(&self, id: PackageId) -> Option<u32> {
        self.maintainers[id]
    }

    pub fn total_downloads(&self) -> u128 {
        self.total_downloads
    }

    /// Direct dependencies of `id` (out-edges).
    pub fn dependencies(&self, id: PackageId) -> &[(PackageId, ConstraintClass)] {
        &self.deps[id]
    }

    /// Direct dependents of `id` (in-edges).
    pub fn dependents(&self, id: PackageId) -> &[(PackageId, ConstraintClass)] {
        &self.dependents[id]
    }

    pub fn out_degree(&self, id: PackageId) -> usize {
        self.deps[id].len()
    }

    pub fn in_degree(&self, id: PackageId) -> usize {
        self.dependents[id].len()
    }

    pub fn ids(&self) -> std::ops::Range<PackageId> {
        0..self.names.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (PackageId, PackageId, ConstraintClass)> + '_ {
        self.deps
            .iter()
            .enumerate()
            .flat_map(|(from, out)| out.iter().map(move |&(to, c)| (from, to, c)))
    }

    /// `nodes.csv`: `package,downloads[,maintainers]`.
    pub fn write_nodes_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let with_maintainers = self.maintainers.iter().any(Option::is_some);
        if with_maintainers {
            w.write_record(["package", "downloads", "maintainers"])?;
        } else {
            w.write_record(["package", "downloads"])?;
        }
        for id in self.ids() {
            let downloads = self.downloads[id].to_string();
            if with_maintainers {
                let m = self.maintainers[id].map(|m| m.to_string()).unwrap_or_default();
                w.write_record([self.names[id].as_str(), &downloads, &m])?;
            } else {
                w.write_record([self.names[id].as_str(), &downloads])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// `edges.csv`: `dependent,dependency,class`.
    pub fn write_edges_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["dependent", "dependency", "class"])?;
        for (from, to, class) in self.edges() {
            w.write_record([self.names[from].as_str(), self.names[to].as_str(), class.as_str()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Collects packages and edges, then sorts packages by name.
#[derive(Debug, Default)]
pub struct NetworkBuilder {
    names: Vec<String>,
    downloads: Vec<u64>,
    maintainers: Vec<Option<u32>>,
    index: HashMap<String, usize>,
    edges: Vec<(usize, usize, ConstraintClass)>,
}

impl NetworkBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the builder-local id.
    pub fn add_package(
        &mut self,
        name: &str,
        downloads: u64,
        maintainers: Option<u32>,
    ) -> Result<usize, NetsimError> {
        if self.index.contains_key(name) {
            return Err(NetsimError::DuplicatePackage(name.to_string()));
        }
        let id = self.names.len();
        self.index.insert(name.to_string(), id);
        self.names.push(name.to_string());
        self.downloads.push(downloads);
        self.maintainers.push(maintainers);
        Ok(id)
    }

    pub fn local_id(&self, name: &str) -> Result<usize, NetsimError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| NetsimError::UnknownPackage(name.to_string()))
    }

    pub fn add_edge(&mut self, dependent: usize, dependency: usize, class: ConstraintClass) -> Result<(), NetsimError> {
        if dependent == dependency {
            return Err(NetsimError::SelfLoop(self.names[dependent].clone()));
        }
        self.edges.push((dependent, dependency, class));
        Ok(())
    }

    pub fn add_edge_by_name(&mut self, dependent: &str, dependency: &str, class: ConstraintClass) -> Result<(), NetsimError> {
        let (a, b) = (self.local_id(dependent)?, self.local_id(dependency)?);
        self.add_edge(a, b, class)
    }

    pub fn build(self) -> Result<EcosystemNetwork, NetsimError> {
        let n = self.names.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.names[a].cmp(&self.names[b]));
        let mut remap = vec![0; n];
        for (new, &old) in order.iter().enumerate() {
            remap[old] = new;
        }
        let names: Vec<String> = order.iter().map(|&o| self.names[o].clone()).collect();
        let downloads: Vec<u64> = order.iter().map(|&o| self.downloads[o]).collect();
        let maintainers: Vec<Option<u32>> = order.iter().map(|&o| self.maintainers[o]).collect();
        let mut deps: Vec<Vec<(PackageId, ConstraintClass)>> = vec![Vec::new(); n];
        let mut dependents: Vec<Vec<(PackageId, ConstraintClass)>> = vec![Vec::new(); n];
        for &(from, to, class) in &self.edges {
            deps[remap[from]].push((remap[to], class));
        }
        for (from, out) in deps.iter_mut().enumerate() {
            out.sort_by_key(|&(to, _)| to);
            if let Some(w) = out.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(NetsimError::DuplicateEdge(names[from].clone(), names[w[0].0].clone()));
            }
            for &(to, class) in out.iter() {
                dependents[to].push((from, class));
            }
        }
        let index = names.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let total_downloads = downloads.iter().map(|&d| d as u128).sum();
        Ok(EcosystemNetwork {
            names,
            index,
            downloads,
            maintainers,
            deps,
            dependents,
            edge_count: self.edges.len(),
            total_downloads,
        })
    }
}

#[derive(Debug, Deserialize)]
struct NodeRow {
    package: String,
    downloads: u64,
    #[serde(default, deserialize_with = "csv::invalid_option")]
    maintainers: Option<u32>,
}

#[derive(Debug, Deserialize)]
struct EdgeRow {
    dependent: String,
    dependency: String,
    class: String,
}

/// Reads `nodes.csv` and `edges.csv`.
pub fn load_network<N: Read, E: Read>(nodes: N, edges: E) -> Result<EcosystemNetwork, NetsimError> {
    let mut builder = NetworkBuilder::new();
    let mut reader = csv::Reader::from_reader(nodes);
    for row in reader.deserialize() {
        let row: NodeRow = row?;
        builder.add_package(&row.package, row.downloads, row.maintainers)?;
    }
    let mut reader = csv::Reader::from_reader(edges);
    let headers = reader.headers()?.clone();
    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record)? {
        let row: EdgeRow = record.deserialize(Some(&headers))?;
        let class = row.class.parse::<ConstraintClass>().map_err(|message| NetsimError::Parse {
            line: record.position().map_or(0, |p| p.line()),
            message,
        })?;
        builder.add_edge_by_name(&row.dependent, &row.dependency, class)?;
    }
    builder.build()
}
