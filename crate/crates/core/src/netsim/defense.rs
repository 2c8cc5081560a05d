use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::propagate::{mean, ratio, Propagator};
use super::{
    all_impacts, betweenness, Centrality, EcosystemNetwork, FloatingMode, Mechanism,
    NetsimError, PackageId,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    Downloads,
    OutDegree,
    Betweenness,
    DownloadsTimesOutDegree,
    DownloadsTimesBetweenness,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Downloads,
        Strategy::OutDegree,
        Strategy::Betweenness,
        Strategy::DownloadsTimesOutDegree,
        Strategy::DownloadsTimesBetweenness,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Downloads => "downloads",
            Strategy::OutDegree => "out-degree",
            Strategy::Betweenness => "betweenness",
            Strategy::DownloadsTimesOutDegree => "downloads-x-out-degree",
            Strategy::DownloadsTimesBetweenness => "downloads-x-betweenness",
        }
    }

    pub fn needs_betweenness(self) -> bool {
        matches!(self, Strategy::Betweenness | Strategy::DownloadsTimesBetweenness)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown strategy `{s}`"))
    }
}

/// Highest-scoring `n` packages under `strategy`, ties by name. Computes
/// exact betweenness when the strategy needs it.
pub fn select_defense(net: &EcosystemNetwork, strategy: Strategy, n: usize) -> Vec<PackageId> {
    if n == 0 {
        return Vec::new();
    }
    let scores = strategy
        .needs_betweenness()
        .then(|| betweenness(net, Centrality::Exact));
    select_defense_with(net, strategy, n, scores.as_deref())
}

/// As [`select_defense`] with precomputed betweenness scores.
///
/// # Panics
///
/// If the strategy needs betweenness and `centrality` is `None`.
pub fn select_defense_with(
    net: &EcosystemNetwork,
    strategy: Strategy,
    n: usize,
    centrality: Option<&[f64]>,
) -> Vec<PackageId> {
    let bc = |p: PackageId| centrality.expect("betweenness scores required")[p];
    let score = |p: PackageId| -> f64 {
        let d = net.downloads(p) as f64;
        let out = net.out_degree(p) as f64;
        match strategy {
            Strategy::Downloads => d,
            Strategy::OutDegree => out,
            Strategy::Betweenness => bc(p),
            Strategy::DownloadsTimesOutDegree => d * out,
            Strategy::DownloadsTimesBetweenness => d * bc(p),
        }
    };
    let scores: Vec<f64> = net.ids().map(score).collect();
    top_by(&scores, n)
}

fn top_by(scores: &[f64], n: usize) -> Vec<PackageId> {
    let mut ids: Vec<PackageId> = (0..scores.len()).collect();
    ids.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    ids.truncate(n);
    ids
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttackSelection {
    /// The `m` packages with the highest undefended impact.
    TopImpact(usize),
    /// A seeded uniform sample of `count` active packages. Packages count
    /// as active when they have at least one maintainer, or always when no
    /// maintainer data is loaded.
    RandomActive { count: usize, seed: u64 },
    /// The `k` packages with the fewest maintainers.
    Fragile(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackModel {
    pub targets: Vec<PackageId>,
    pub selection: Option<AttackSelection>,
}

impl AttackModel {
    pub fn explicit(targets: Vec<PackageId>) -> Self {
        AttackModel { targets, selection: None }
    }

    pub fn select(net: &EcosystemNetwork, selection: AttackSelection) -> Result<Self, NetsimError> {
        let targets = rank_targets(net, &selection)?;
        Ok(AttackModel { targets, selection: Some(selection) })
    }
}

pub fn rank_targets(net: &EcosystemNetwork, selection: &AttackSelection) -> Result<Vec<PackageId>, NetsimError> {
    match *selection {
        AttackSelection::TopImpact(m) => Ok(top_by(&all_impacts(net)?, m)),
        AttackSelection::RandomActive { count, seed } => {
            let has_data = net.ids().any(|p| net.maintainers(p).is_some());
            let active: Vec<PackageId> = net
                .ids()
                .filter(|&p| !has_data || net.maintainers(p).is_some_and(|m| m > 0))
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let picked = sample(&mut rng, active.len(), count.min(active.len()));
            Ok(picked.into_iter().map(|i| active[i]).collect())
        }
        AttackSelection::Fragile(k) => {
            let mut known: Vec<(u32, PackageId)> = net
                .ids()
                .filter_map(|p| net.maintainers(p).map(|m| (m, p)))
                .collect();
            if known.is_empty() && !net.is_empty() {
                return Err(NetsimError::MissingMaintainerData);
            }
            known.sort_unstable();
            Ok(known.into_iter().take(k).map(|(_, p)| p).collect())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: usize,
    pub risk: f64,
}

/// risk(A) with the first n packages of `strategy`'s ranking defended, for
/// n = 0..=n_max (capped at the network size).
pub fn defense_curve(
    net: &EcosystemNetwork,
    attack: &AttackModel,
    mechanism: Mechanism,
    strategy: Strategy,
    n_max: usize,
) -> Result<Vec<CurvePoint>, NetsimError> {
    let order = select_defense(net, strategy, n_max);
    defense_curve_for_order(net, &attack.targets, mechanism, FloatingMode::AssumeAllFloating, &order)
}

struct TargetState {
    impact: f64,
    affected: Vec<u64>,
}

/// Curve for an explicit defense order. Each step only recomputes targets
/// whose affected set can change: under local pinning the new package must
/// be a direct dependent of the target, under transitive pinning it must
/// currently be affected.
pub fn defense_curve_for_order(
    net: &EcosystemNetwork,
    targets: &[PackageId],
    mechanism: Mechanism,
    mode: FloatingMode,
    order: &[PackageId],
) -> Result<Vec<CurvePoint>, NetsimError> {
    if targets.is_empty() {
        return Err(NetsimError::EmptyTargetSet);
    }
    if net.total_downloads() == 0 {
        return Err(NetsimError::ZeroDownloads);
    }
    if let Some(&p) = targets.iter().chain(order).find(|&&p| p >= net.len()) {
        return Err(NetsimError::UnknownPackage(format!("#{p}")));
    }
    let n = net.len();
    let words = n.div_ceil(64);
    let total = net.total_downloads();
    let mut blocked = vec![false; n];

    let evaluate = |prop: &mut Propagator, t: PackageId, blocked: &[bool]| -> TargetState {
        let hit = prop.run(net, t, blocked, mechanism, mode);
        let mut affected = vec![0u64; words];
        let mut sum: u128 = 0;
        for &p in hit {
            affected[p / 64] |= 1 << (p % 64);
            sum += net.downloads(p) as u128;
        }
        TargetState { impact: ratio(sum, total), affected }
    };

    let mut states: Vec<TargetState> = targets
        .par_iter()
        .map_init(|| Propagator::new(net), |prop, &t| evaluate(prop, t, &blocked))
        .collect();
    let mut impacts: Vec<f64> = states.iter().map(|s| s.impact).collect();
    let mut curve = vec![CurvePoint { n: 0, risk: mean(&impacts) }];

    for (step, &d) in order.iter().enumerate() {
        if !blocked[d] {
            blocked[d] = true;
            let stale: Vec<usize> = (0..targets.len())
                .filter(|&i| match mechanism {
                    Mechanism::LocalPinning => net.dependencies(d).iter().any(|&(x, _)| x == targets[i]),
                    Mechanism::TransitivePinning => states[i].affected[d / 64] >> (d % 64) & 1 == 1,
                })
                .collect();
            let fresh: Vec<TargetState> = stale
                .par_iter()
                .map_init(|| Propagator::new(net), |prop, &i| evaluate(prop, targets[i], &blocked))
                .collect();
            for (i, s) in stale.into_iter().zip(fresh) {
                impacts[i] = s.impact;
                states[i] = s;
            }
        }
        curve.push(CurvePoint { n: step + 1, risk: mean(&impacts) });
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::fix_n;
    use super::super::{risk, DefensePlan};
    use super::*;

    #[test]
    fn selection_on_fixture() {
        let net = fix_n();
        assert!(select_defense(&net, Strategy::Downloads, 0).is_empty());
        assert_eq!(net.name(select_defense(&net, Strategy::OutDegree, 1)[0]), "F");
        assert_eq!(net.name(select_defense(&net, Strategy::Downloads, 1)[0]), "C");
        let all = select_defense(&net, Strategy::Betweenness, 100);
        assert_eq!(all.len(), 9);
    }

    #[test]
    fn top_impact_ranking() {
        let net = fix_n();
        let top = rank_targets(&net, &AttackSelection::TopImpact(1)).unwrap();
        assert_eq!(net.name(top[0]), "B");
        let all = rank_targets(&net, &AttackSelection::TopImpact(50)).unwrap();
        assert_eq!(all.len(), 9);
        let names: Vec<&str> = all.iter().map(|&p| net.name(p)).collect();
        // A, E, G, H, I have no dependents and tie at zero
        assert_eq!(names, ["B", "C", "D", "F", "A", "E", "G", "H", "I"]);
    }

    #[test]
    fn random_and_fragile_selection() {
        let net = fix_n();
        let sel = AttackSelection::RandomActive { count: 4, seed: 11 };
        let a = rank_targets(&net, &sel).unwrap();
        assert_eq!(a, rank_targets(&net, &sel).unwrap());
        assert_eq!(a.len(), 4);
        assert!(matches!(
            rank_targets(&net, &AttackSelection::Fragile(2)),
            Err(NetsimError::MissingMaintainerData)
        ));
    }

    #[test]
    fn curve_on_fixture() {
        let net = fix_n();
        let attack = AttackModel::explicit(vec![net.id("B").unwrap()]);
        let curve = defense_curve(&net, &attack, Mechanism::TransitivePinning, Strategy::OutDegree, 1).unwrap();
        assert_eq!(curve.len(), 2);
        assert_eq!(curve[0].risk, risk(&net, &attack.targets, &DefensePlan::undefended()).unwrap());
        assert_eq!(curve[1].risk, 1_015_000.0 / 1_109_400.0);
        let only = defense_curve(&net, &attack, Mechanism::LocalPinning, Strategy::OutDegree, 0).unwrap();
        assert_eq!(only, vec![CurvePoint { n: 0, risk: curve[0].risk }]);
    }

    #[test]
    fn incremental_curve_matches_direct_risk() {
        let net = fix_n();
        let targets: Vec<PackageId> = net.ids().collect();
        for mechanism in Mechanism::ALL {
            for strategy in Strategy::ALL {
                let order = select_defense(&net, strategy, 9);
                let curve = defense_curve_for_order(&net, &targets, mechanism, FloatingMode::AssumeAllFloating, &order)
                    .unwrap();
                for p in &curve {
                    let plan = DefensePlan::new(mechanism, order[..p.n].to_vec());
                    assert_eq!(p.risk, risk(&net, &targets, &plan).unwrap());
                }
            }
        }
    }
}
