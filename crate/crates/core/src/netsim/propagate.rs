use super::{DefensePlan, EcosystemNetwork, FloatingMode, Mechanism, NetsimError, PackageId};

/// Reusable BFS workspace. Visiting uses generation stamps so repeated
/// queries on one network allocate nothing.
#[derive(Debug, Clone)]
pub struct Propagator {
    stamp: Vec<u32>,
    generation: u32,
    queue: Vec<PackageId>,
}

impl Propagator {
    pub fn new(net: &EcosystemNetwork) -> Self {
        Propagator {
            stamp: vec![0; net.len()],
            generation: 0,
            queue: Vec::with_capacity(net.len()),
        }
    }

    fn next_generation(&mut self) -> u32 {
        if self.generation == u32::MAX {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.generation = 0;
        }
        self.generation += 1;
        self.generation
    }

    /// Packages hit by a malicious release of `a`, in BFS order. `blocked`
    /// is indexed by package id and marks the defended set.
    pub fn run(
        &mut self,
        net: &EcosystemNetwork,
        a: PackageId,
        blocked: &[bool],
        mechanism: Mechanism,
        mode: FloatingMode,
    ) -> &[PackageId] {
        let g = self.next_generation();
        self.queue.clear();
        self.stamp[a] = g;
        for &(w, class) in net.dependents(a) {
            if blocked[w] {
                continue;
            }
            if mode == FloatingMode::HonorDeclared && !class.is_floating() {
                continue;
            }
            self.stamp[w] = g;
            self.queue.push(w);
        }
        let transitive = mechanism == Mechanism::TransitivePinning;
        let mut head = 0;
        while head < self.queue.len() {
            let v = self.queue[head];
            head += 1;
            for &(u, _) in net.dependents(v) {
                if self.stamp[u] == g || (transitive && blocked[u]) {
                    continue;
                }
                self.stamp[u] = g;
                self.queue.push(u);
            }
        }
        &self.queue
    }

    /// Sum of downloads over the packages returned by [`Propagator::run`].
    pub fn affected_downloads(
        &mut self,
        net: &EcosystemNetwork,
        a: PackageId,
        blocked: &[bool],
        mechanism: Mechanism,
        mode: FloatingMode,
    ) -> u128 {
        self.run(net, a, blocked, mechanism, mode);
        self.queue.iter().map(|&p| net.downloads(p) as u128).sum()
    }
}

fn check_plan(net: &EcosystemNetwork, plan: &DefensePlan) -> Result<(), NetsimError> {
    match plan.defended.iter().find(|&&d| d >= net.len()) {
        Some(d) => Err(NetsimError::UnknownPackage(format!("#{d}"))),
        None => Ok(()),
    }
}

/// Affected packages sorted by id (equivalently, by name).
pub fn affected_set(
    net: &EcosystemNetwork,
    a: PackageId,
    plan: &DefensePlan,
) -> Result<Vec<PackageId>, NetsimError> {
    if a >= net.len() {
        return Err(NetsimError::UnknownPackage(format!("#{a}")));
    }
    check_plan(net, plan)?;
    let blocked = plan.blocked_mask(net.len());
    let mut prop = Propagator::new(net);
    let mut out = prop
        .run(net, a, &blocked, plan.mechanism, plan.floating_mode)
        .to_vec();
    out.sort_unstable();
    Ok(out)
}

pub(crate) fn ratio(affected: u128, total: u128) -> f64 {
    affected as f64 / total as f64
}

/// Mean of per-target impacts, summed in target order.
pub(crate) fn mean(impacts: &[f64]) -> f64 {
    impacts.iter().sum::<f64>() / impacts.len() as f64
}

pub fn impact(net: &EcosystemNetwork, a: PackageId, plan: &DefensePlan) -> Result<f64, NetsimError> {
    if net.total_downloads() == 0 {
        return Err(NetsimError::ZeroDownloads);
    }
    let affected = affected_set(net, a, plan)?;
    let sum: u128 = affected.iter().map(|&p| net.downloads(p) as u128).sum();
    Ok(ratio(sum, net.total_downloads()))
}

/// Mean impact over `targets`.
pub fn risk(net: &EcosystemNetwork, targets: &[PackageId], plan: &DefensePlan) -> Result<f64, NetsimError> {
    if targets.is_empty() {
        return Err(NetsimError::EmptyTargetSet);
    }
    if net.total_downloads() == 0 {
        return Err(NetsimError::ZeroDownloads);
    }
    check_plan(net, plan)?;
    if let Some(&t) = targets.iter().find(|&&t| t >= net.len()) {
        return Err(NetsimError::UnknownPackage(format!("#{t}")));
    }
    let blocked = plan.blocked_mask(net.len());
    let mut prop = Propagator::new(net);
    let total = net.total_downloads();
    let impacts: Vec<f64> = targets
        .iter()
        .map(|&t| ratio(prop.affected_downloads(net, t, &blocked, plan.mechanism, plan.floating_mode), total))
        .collect();
    Ok(mean(&impacts))
}
