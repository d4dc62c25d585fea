//! Maximum-weight bipartite matching via the Hungarian algorithm.

/// A matching and its total weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    pub weight: f64,
    /// Matched (row, column) pairs with positive weight.
    pub pairs: Vec<(usize, usize)>,
}

/// Maximum-weight matching over edges whose weight exceeds `delta`; lighter
/// edges are removed. `w` is row-major with `rows` rows of equal length.
pub fn max_weight_matching(w: &[Vec<f64>], delta: f64) -> Matching {
    let n = w.len();
    let m = w.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return Matching { weight: 0.0, pairs: Vec::new() };
    }
    let size = n.max(m);
    let kept = |i: usize, j: usize| -> f64 {
        if i < n && j < m && w[i][j] > delta {
            w[i][j]
        } else {
            0.0
        }
    };
    // Minimize negated weights on the padded square matrix.
    let cost = |i: usize, j: usize| -kept(i, j);
    let inf = f64::INFINITY;
    let mut u = vec![0.0; size + 1];
    let mut v = vec![0.0; size + 1];
    let mut p = vec![0usize; size + 1];
    let mut way = vec![0usize; size + 1];
    for i in 1..=size {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; size + 1];
        let mut used = vec![false; size + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta_min = inf;
            let mut j1 = 0;
            for j in 1..=size {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta_min {
                        delta_min = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=size {
                if used[j] {
                    u[p[j]] += delta_min;
                    v[j] -= delta_min;
                } else {
                    minv[j] -= delta_min;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs = Vec::new();
    let mut weight = 0.0;
    for j in 1..=size {
        let (r, c) = (p[j] - 1, j - 1);
        let x = kept(r, c);
        if x > 0.0 {
            pairs.push((r, c));
            weight += x;
        }
    }
    pairs.sort_unstable();
    Matching { weight, pairs }
}
