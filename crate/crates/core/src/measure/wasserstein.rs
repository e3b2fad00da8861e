use super::{ParticleMeasure, PROBABILITY_TOLERANCE};
use crate::error::MeasureError;

/// Largest atom count per measure accepted by the exact transport solver for `d > 1`.
pub const MAX_LP_ATOMS: usize = 512;

/// p-Wasserstein distance between two discrete probability measures.
///
/// In one dimension the optimal coupling is the monotone (quantile) coupling and is
/// computed by merging the two sorted CDFs. In higher dimensions the optimal transport
/// problem is solved exactly by successive shortest augmenting paths.
pub fn wasserstein_p(pi1: &ParticleMeasure, pi2: &ParticleMeasure, p: f64) -> Result<f64, MeasureError> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(MeasureError::InvalidOrder(p));
    }
    if pi1.dim() != pi2.dim() {
        return Err(MeasureError::DimensionMismatch { expected: pi1.dim(), found: pi2.dim() });
    }
    for m in [pi1, pi2] {
        let mass = m.total_mass();
        if (mass - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(MeasureError::MassMismatch(mass, 1.0));
        }
    }
    let cost = if pi1.dim() == 1 {
        quantile_cost(pi1, pi2, p)
    } else {
        for m in [pi1, pi2] {
            if m.len() > MAX_LP_ATOMS {
                return Err(MeasureError::TooLarge(m.len(), MAX_LP_ATOMS));
            }
        }
        let c: Vec<Vec<f64>> =
            pi1.atoms().map(|(x, _)| pi2.atoms().map(|(y, _)| distance(x, y).powf(p)).collect()).collect();
        transport_cost(pi1.weights(), pi2.weights(), &c)
    };
    Ok(cost.max(0.0).powf(1.0 / p))
}

fn distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn quantile_cost(pi1: &ParticleMeasure, pi2: &ParticleMeasure, p: f64) -> f64 {
    let sorted = |m: &ParticleMeasure| {
        let mut v: Vec<(f64, f64)> = m.atoms().map(|(x, w)| (x[0], w)).filter(|a| a.1 > 0.0).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    };
    let a = sorted(pi1);
    let b = sorted(pi2);
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a.first().map_or(0.0, |v| v.1), b.first().map_or(0.0, |v| v.1));
    let mut cost = crate::stats::CompensatedSum::new();
    while i < a.len() && j < b.len() {
        let m = ra.min(rb);
        cost.add(m * (a[i].0 - b[j].0).abs().powf(p));
        ra -= m;
        rb -= m;
        if ra <= 1e-15 {
            i += 1;
            ra = a.get(i).map_or(0.0, |v| v.1);
        }
        if rb <= 1e-15 {
            j += 1;
            rb = b.get(j).map_or(0.0, |v| v.1);
        }
    }
    cost.value()
}

/// Minimum-cost transport between supplies `a` and demands `b` with cost matrix `c`.
///
/// Successive shortest paths with Johnson potentials on the dense bipartite residual graph.
fn transport_cost(a: &[f64], b: &[f64], c: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let m = b.len();
    let scale = a.iter().sum::<f64>().max(b.iter().sum::<f64>());
    let eps = 1e-15 * scale;
    let mut supply = a.to_vec();
    let mut demand = b.to_vec();
    let mut flow = vec![vec![0.0; m]; n];
    let mut pot_src = vec![0.0; n];
    let mut pot_dst: Vec<f64> = (0..m).map(|j| (0..n).map(|i| c[i][j]).fold(f64::INFINITY, f64::min)).collect();
    if n == 0 {
        return 0.0;
    }

    loop {
        if supply.iter().all(|&s| s <= eps) || demand.iter().all(|&d| d <= eps) {
            break;
        }
        // Dijkstra over nodes 0..n (sources) and n..n+m (sinks).
        let total = n + m;
        let mut dist = vec![f64::INFINITY; total];
        let mut prev = vec![usize::MAX; total];
        let mut done = vec![false; total];
        for i in 0..n {
            if supply[i] > eps {
                dist[i] = 0.0;
            }
        }
        let mut target = usize::MAX;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..total {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u >= n && demand[u - n] > eps {
                target = u;
                break;
            }
            if u < n {
                for j in 0..m {
                    let v = n + j;
                    if done[v] {
                        continue;
                    }
                    let rc = (c[u][j] + pot_src[u] - pot_dst[j]).max(0.0);
                    if dist[u] + rc < dist[v] {
                        dist[v] = dist[u] + rc;
                        prev[v] = u;
                    }
                }
            } else {
                let j = u - n;
                for i in 0..n {
                    if done[i] || flow[i][j] <= eps {
                        continue;
                    }
                    let rc = (-c[i][j] + pot_dst[j] - pot_src[i]).max(0.0);
                    if dist[u] + rc < dist[i] {
                        dist[i] = dist[u] + rc;
                        prev[i] = u;
                    }
                }
            }
        }
        if target == usize::MAX {
            break;
        }
        let dt = dist[target];
        for i in 0..n {
            pot_src[i] += dist[i].min(dt);
        }
        for j in 0..m {
            pot_dst[j] += dist[n + j].min(dt);
        }
        // Bottleneck along the path.
        let mut delta = demand[target - n];
        let mut v = target;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u >= n {
                delta = delta.min(flow[v][u - n]);
            }
            v = u;
        }
        delta = delta.min(supply[v]);
        let source = v;
        let mut v = target;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u < n {
                flow[u][v - n] += delta;
            } else {
                flow[v][u - n] -= delta;
            }
            v = u;
        }
        supply[source] -= delta;
        demand[target - n] -= delta;
    }

    let mut cost = crate::stats::CompensatedSum::new();
    for i in 0..n {
        for j in 0..m {
            if flow[i][j] > 0.0 {
                cost.add(flow[i][j] * c[i][j]);
            }
        }
    }
    cost.value()
}
