//! Optimal assignment on small square score matrices (Hungarian algorithm,
//! O(n^3) with potentials). Used for label alignment everywhere a minimum
//! over label permutations is required.

use ndarray::Array2;

/// Minimum-cost perfect matching on a square cost matrix.
///
/// Returns `(row_to_col, total_cost)`.
pub fn min_assignment(cost: &Array2<f64>) -> (Vec<usize>, f64) {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "assignment needs a square matrix");
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    // Classic potentials formulation, 1-based with a virtual column 0.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1]; // p[j]: row matched to column j
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
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
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    let total = (0..n).map(|i| cost[[i, row_to_col[i]]]).sum();
    (row_to_col, total)
}

/// Maximum-score perfect matching; `row_to_col[i]` is the column assigned to row `i`.
pub fn max_assignment(score: &Array2<f64>) -> (Vec<usize>, f64) {
    let neg = score.mapv(|x| -x);
    let (perm, c) = min_assignment(&neg);
    (perm, -c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn brute_force_max(score: &Array2<f64>) -> f64 {
        let n = score.nrows();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = f64::NEG_INFINITY;
        permute(&mut perm, 0, &mut |p| {
            let s: f64 = (0..n).map(|i| score[[i, p[i]]]).sum();
            if s > best {
                best = s;
            }
        });
        best
    }

    fn permute(v: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if k == v.len() {
            f(v);
            return;
        }
        for i in k..v.len() {
            v.swap(k, i);
            permute(v, k + 1, f);
            v.swap(k, i);
        }
    }

    #[test]
    fn matches_enumeration_small() {
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 33) as f64) / (u32::MAX as f64)
        };
        for n in 1..=5 {
            for _ in 0..20 {
                let m = Array2::from_shape_fn((n, n), |_| next());
                let (_, got) = max_assignment(&m);
                let want = brute_force_max(&m);
                assert!((got - want).abs() < 1e-12, "n={n} got={got} want={want}");
            }
        }
    }

    #[test]
    fn identity_on_diagonal_dominant() {
        let m = arr2(&[[5.0, 1.0, 0.0], [0.5, 7.0, 1.0], [0.0, 1.0, 3.0]]);
        let (perm, total) = max_assignment(&m);
        assert_eq!(perm, vec![0, 1, 2]);
        assert!((total - 15.0).abs() < 1e-12);
    }
}
