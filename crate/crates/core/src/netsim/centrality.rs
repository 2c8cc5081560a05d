use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{EcosystemNetwork, PackageId};

/// Betweenness mode. Scores count ordered (source, target) pairs on the
/// dependent-to-dependency direction, without normalisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Centrality {
    Exact,
    /// Accumulate from `k` pivot sources chosen with `seed`, scaled by n/k.
    Sampled { k: usize, seed: u64 },
}

const CHUNK: usize = 256;

struct Workspace {
    sigma: Vec<f64>,
    dist: Vec<u32>,
    delta: Vec<f64>,
    order: Vec<PackageId>,
    preds: Vec<Vec<PackageId>>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Workspace {
            sigma: vec![0.0; n],
            dist: vec![u32::MAX; n],
            delta: vec![0.0; n],
            order: Vec::with_capacity(n),
            preds: vec![Vec::new(); n],
        }
    }

    fn accumulate(&mut self, net: &EcosystemNetwork, s: PackageId, score: &mut [f64]) {
        for &v in &self.order {
            self.sigma[v] = 0.0;
            self.dist[v] = u32::MAX;
            self.delta[v] = 0.0;
            self.preds[v].clear();
        }
        self.order.clear();
        self.sigma[s] = 1.0;
        self.dist[s] = 0;
        self.order.push(s);
        let mut head = 0;
        while head < self.order.len() {
            let v = self.order[head];
            head += 1;
            let dv = self.dist[v];
            for &(w, _) in net.dependencies(v) {
                if self.dist[w] == u32::MAX {
                    self.dist[w] = dv + 1;
                    self.order.push(w);
                }
                if self.dist[w] == dv + 1 {
                    self.sigma[w] += self.sigma[v];
                    self.preds[w].push(v);
                }
            }
        }
        for &w in self.order.iter().rev() {
            let coeff = (1.0 + self.delta[w]) / self.sigma[w];
            for &v in &self.preds[w] {
                self.delta[v] += self.sigma[v] * coeff;
            }
            if w != s {
                score[w] += self.delta[w];
            }
        }
    }
}

fn accumulate_sources(net: &EcosystemNetwork, sources: &[PackageId]) -> Vec<f64> {
    let n = net.len();
    let partials: Vec<Vec<f64>> = sources
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut ws = Workspace::new(n);
            let mut score = vec![0.0; n];
            for &s in chunk {
                ws.accumulate(net, s, &mut score);
            }
            score
        })
        .collect();
    let mut total = vec![0.0; n];
    for part in partials {
        total.iter_mut().zip(part).for_each(|(t, p)| *t += p);
    }
    total
}

/// Brandes betweenness, indexed by package id. The result does not depend
/// on the size of the rayon pool.
pub fn betweenness(net: &EcosystemNetwork, mode: Centrality) -> Vec<f64> {
    let n = net.len();
    match mode {
        Centrality::Exact => {
            let sources: Vec<PackageId> = (0..n).collect();
            accumulate_sources(net, &sources)
        }
        Centrality::Sampled { k, seed } => {
            let k = k.min(n);
            if k == 0 {
                return vec![0.0; n];
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut sources = sample(&mut rng, n, k).into_vec();
            sources.sort_unstable();
            let mut score = accumulate_sources(net, &sources);
            let scale = n as f64 / k as f64;
            score.iter_mut().for_each(|s| *s *= scale);
            score
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::NetworkBuilder;
    use super::*;
    use crate::semver::ConstraintClass;

    fn build(n: usize, edges: &[(usize, usize)]) -> EcosystemNetwork {
        let mut b = NetworkBuilder::new();
        for i in 0..n {
            b.add_package(&format!("n{i:02}"), 1, None).unwrap();
        }
        for &(x, y) in edges {
            b.add_edge(x, y, ConstraintClass::FloatingMinor).unwrap();
        }
        b.build().unwrap()
    }

    #[test]
    fn path_graph() {
        let net = build(3, &[(0, 1), (1, 2)]);
        assert_eq!(betweenness(&net, Centrality::Exact), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn bidirectional_star() {
        let n = 6;
        let mut edges = Vec::new();
        for leaf in 1..n {
            edges.push((0, leaf));
            edges.push((leaf, 0));
        }
        let net = build(n, &edges);
        let score = betweenness(&net, Centrality::Exact);
        assert_eq!(score[0], ((n - 1) * (n - 2)) as f64);
        assert!(score[1..].iter().all(|&s| s == 0.0));
    }

    #[test]
    fn full_sample_equals_exact() {
        let net = build(5, &[(0, 1), (1, 2), (0, 3), (3, 2), (2, 4), (4, 0)]);
        let exact = betweenness(&net, Centrality::Exact);
        assert_eq!(betweenness(&net, Centrality::Sampled { k: 5, seed: 9 }), exact);
        assert_eq!(exact[1], exact[3]);
    }
}
