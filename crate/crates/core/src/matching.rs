//! Exact assignment and transport solvers backing the Wasserstein metrics.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use crate::error::{PeError, Result};

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian method
/// with row/column potentials, O(n³)). Returns `assignment[row] = col` and
/// the total cost.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
    let n = cost.len();
    if n == 0 {
        return Ok((Vec::new(), 0.0));
    }
    if cost.iter().any(|r| r.len() != n) {
        return Err(PeError::SizeMismatch("cost matrix must be square".into()));
    }
    // 1-based arrays; column 0 is a virtual start.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[row_of[j] - 1] = j - 1;
    }
    let total = assignment.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    Ok((assignment, total))
}

/// Perfect matching using only edges with `cost <= limit` (Kuhn's
/// augmenting paths).
fn perfect_matching_under(cost: &[Vec<f64>], limit: f64) -> Option<Vec<usize>> {
    let n = cost.len();
    let mut match_col: Vec<Option<usize>> = vec![None; n];
    fn augment(
        row: usize,
        cost: &[Vec<f64>],
        limit: f64,
        seen: &mut [bool],
        match_col: &mut [Option<usize>],
    ) -> bool {
        for col in 0..cost.len() {
            if cost[row][col] <= limit && !seen[col] {
                seen[col] = true;
                if match_col[col].map_or(true, |r| augment(r, cost, limit, seen, match_col)) {
                    match_col[col] = Some(row);
                    return true;
                }
            }
        }
        false
    }
    for row in 0..n {
        let mut seen = vec![false; n];
        if !augment(row, cost, limit, &mut seen, &mut match_col) {
            return None;
        }
    }
    let mut assignment = vec![0usize; n];
    for (col, row) in match_col.iter().enumerate() {
        assignment[row.expect("perfect")] = col;
    }
    Some(assignment)
}

/// Perfect assignment minimizing the largest used cost: binary search over
/// the sorted distinct costs with a feasibility check at each threshold.
pub fn bottleneck_assignment(cost: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
    let n = cost.len();
    if n == 0 {
        return Ok((Vec::new(), 0.0));
    }
    if cost.iter().any(|r| r.len() != n) {
        return Err(PeError::SizeMismatch("cost matrix must be square".into()));
    }
    let mut values: Vec<f64> = cost.iter().flatten().copied().collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let (mut lo, mut hi) = (0usize, values.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if perfect_matching_under(cost, values[mid]).is_some() {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let assignment = perfect_matching_under(cost, values[lo]).expect("feasible at max cost");
    Ok((assignment, values[lo]))
}

/// Distinct points (by bit pattern) with their multiplicities, in first
/// occurrence order.
pub fn compress<P: AsRef<[f64]>>(points: &[P]) -> (Vec<Vec<f64>>, Vec<u64>) {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut distinct: Vec<Vec<f64>> = Vec::new();
    let mut weights: Vec<u64> = Vec::new();
    for p in points {
        let p = p.as_ref();
        let key: Vec<u64> = p.iter().map(|x| x.to_bits()).collect();
        match index.get(&key) {
            Some(&i) => weights[i] += 1,
            None => {
                index.insert(key, distinct.len());
                distinct.push(p.to_vec());
                weights.push(1);
            }
        }
    }
    (distinct, weights)
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Exact optimal transport between two integer-weighted discrete measures
/// with arbitrary total masses (both are normalized to probability). Uses
/// successive shortest paths with Dijkstra potentials on the bipartite
/// residual graph. Returns the optimal expected cost `Σ π_ij c_ij`.
pub fn transport_cost(cost: &[Vec<f64>], supply_w: &[u64], demand_w: &[u64]) -> Result<f64> {
    let n = supply_w.len();
    let m = demand_w.len();
    if n == 0 || m == 0 {
        return Err(PeError::NoSamples);
    }
    if cost.len() != n || cost.iter().any(|r| r.len() != m) {
        return Err(PeError::SizeMismatch("cost matrix shape does not match weights".into()));
    }
    let wa: u64 = supply_w.iter().sum();
    let wb: u64 = demand_w.iter().sum();
    if wa == 0 || wb == 0 {
        return Err(PeError::InvalidArgument("weights must have positive total".into()));
    }
    // Scale to a common total wa·wb so every flow stays integral.
    let mut supply: Vec<u64> = supply_w.iter().map(|w| w * wb).collect();
    let mut demand: Vec<u64> = demand_w.iter().map(|w| w * wa).collect();
    let total = (wa as f64) * (wb as f64);

    // Nodes: sources 0..n, sinks n..n+m and the super sink n+m. The super
    // source is implicit; unsaturated sources keep potential 0.
    let sink_node = n + m;
    let v = n + m + 1;
    let mut flow = vec![vec![0u64; m]; n];
    let mut pot = vec![0.0f64; v];
    let mut remaining = total;
    let mut objective = 0.0f64;
    let mut dist = vec![f64::INFINITY; v];
    let mut prev = vec![usize::MAX; v];
    let mut done = vec![false; v];

    while remaining > 0.5 {
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        prev.iter_mut().for_each(|p| *p = usize::MAX);
        done.iter_mut().for_each(|d| *d = false);
        let mut heap = BinaryHeap::new();
        for i in 0..n {
            if supply[i] > 0 {
                dist[i] = (-pot[i]).max(0.0);
                heap.push(HeapItem { dist: dist[i], node: i });
            }
        }
        let mut relax = |heap: &mut BinaryHeap<HeapItem>, dist: &mut [f64], to: usize, from: usize, nd: f64| {
            if nd < dist[to] {
                dist[to] = nd;
                prev[to] = from;
                heap.push(HeapItem { dist: nd, node: to });
            }
        };
        let mut d_sink = f64::INFINITY;
        while let Some(HeapItem { dist: d, node }) = heap.pop() {
            if done[node] || d > dist[node] {
                continue;
            }
            done[node] = true;
            if node == sink_node {
                d_sink = d;
                break;
            }
            if node < n {
                for j in 0..m {
                    let to = n + j;
                    let rc = (cost[node][j] + pot[node] - pot[to]).max(0.0);
                    relax(&mut heap, &mut dist, to, node, d + rc);
                }
            } else {
                let j = node - n;
                if demand[j] > 0 {
                    let rc = (pot[node] - pot[sink_node]).max(0.0);
                    relax(&mut heap, &mut dist, sink_node, node, d + rc);
                }
                for i in 0..n {
                    if flow[i][j] > 0 {
                        let rc = (-cost[i][j] + pot[node] - pot[i]).max(0.0);
                        relax(&mut heap, &mut dist, i, node, d + rc);
                    }
                }
            }
        }
        if !d_sink.is_finite() {
            return Err(PeError::InvalidArgument("transport infeasible".into()));
        }
        let sink = prev[sink_node];
        let target = sink - n;

        // Walk back to the starting source, collecting the bottleneck.
        let mut amount = demand[target];
        let mut node = sink;
        while prev[node] != usize::MAX {
            let p = prev[node];
            if node < n {
                amount = amount.min(flow[node][p - n]);
            }
            node = p;
        }
        amount = amount.min(supply[node]);
        let start = node;

        let mut node = sink;
        while prev[node] != usize::MAX {
            let p = prev[node];
            if node >= n {
                flow[p][node - n] += amount;
                objective += amount as f64 * cost[p][node - n];
            } else {
                flow[node][p - n] -= amount;
                objective -= amount as f64 * cost[node][p - n];
            }
            node = p;
        }
        supply[start] -= amount;
        demand[target] -= amount;
        remaining -= amount as f64;

        // Early-stopped Dijkstra: unsettled nodes are at least d_sink away.
        for k in 0..v {
            pot[k] += if done[k] { dist[k] } else { d_sink };
        }
    }
    Ok(objective / total)
}
