use super::{EcosystemNetwork, NetsimError, PackageId};

/// Strongly connected components. Components are numbered in the order
/// Tarjan's algorithm completes them, so every edge between distinct
/// components goes from a higher index to a lower one.
#[derive(Debug, Clone)]
pub struct Condensation {
    pub component: Vec<usize>,
    pub members: Vec<Vec<PackageId>>,
}

pub fn condensation(net: &EcosystemNetwork) -> Condensation {
    let n = net.len();
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<PackageId> = Vec::new();
    let mut component = vec![UNSEEN; n];
    let mut members: Vec<Vec<PackageId>> = Vec::new();
    let mut counter = 0;
    // (node, next out-edge position)
    let mut call: Vec<(PackageId, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            let out = net.dependencies(v);
            if *pos < out.len() {
                let w = out[*pos].0;
                *pos += 1;
                if index[w] == UNSEEN {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let id = members.len();
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    component[w] = id;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                members.push(comp);
            }
        }
    }
    Condensation { component, members }
}

/// Undefended impact of every package, via ancestor bitsets over the
/// condensation. Matches per-target BFS exactly.
pub fn all_impacts(net: &EcosystemNetwork) -> Result<Vec<f64>, NetsimError> {
    let total = net.total_downloads();
    if total == 0 {
        return Err(NetsimError::ZeroDownloads);
    }
    let n = net.len();
    let cond = condensation(net);
    let words = n.div_ceil(64);
    let k = cond.members.len();
    let mut anc = vec![0u64; k * words];
    let mut out = vec![0.0; n];

    for c in (0..k).rev() {
        let rest = &mut anc[c * words..];
        for &v in &cond.members[c] {
            rest[v / 64] |= 1 << (v % 64);
        }
        for &v in &cond.members[c] {
            for &(u, _) in net.dependents(v) {
                let cu = cond.component[u];
                if cu != c {
                    let (lo, hi) = rest.split_at_mut(words);
                    let src = &hi[(cu - c - 1) * words..(cu - c) * words];
                    lo.iter_mut().zip(src).for_each(|(a, b)| *a |= b);
                }
            }
        }
        let own = &rest[..words];
        let mut sum: u128 = 0;
        for (wi, &word) in own.iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                let b = bits.trailing_zeros() as usize;
                sum += net.downloads(wi * 64 + b) as u128;
                bits &= bits - 1;
            }
        }
        for &v in &cond.members[c] {
            let self_dl = net.downloads(v) as u128;
            out[v] = super::propagate::ratio(sum - self_dl, total);
        }
    }
    Ok(out)
}
