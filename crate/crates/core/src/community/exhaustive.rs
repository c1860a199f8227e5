//! Exhaustive reference computations for small graphs. Cost grows with
//! the Bell number of the node count, so keep n at about ten or below.

/// Literal double sum over all ordered node pairs.
pub fn brute_force_q(n: usize, edges: &[(usize, usize, f64)], assignment: &[usize]) -> f64 {
    let mut w = vec![vec![0.0; n]; n];
    for &(u, v, x) in edges {
        w[u][v] += x;
    }
    let total: f64 = w.iter().flatten().sum();
    let sout: Vec<f64> = (0..n).map(|i| w[i].iter().sum()).collect();
    let sin: Vec<f64> = (0..n).map(|j| (0..n).map(|i| w[i][j]).sum()).collect();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if assignment[i] == assignment[j] {
                q += w[i][j] - sout[i] * sin[j] / total;
            }
        }
    }
    q / total
}

/// Calls `f` with every set partition of `0..n` as a restricted growth string.
pub fn for_each_set_partition(n: usize, mut f: impl FnMut(&[usize])) {
    fn rec(a: &mut Vec<usize>, i: usize, max: usize, n: usize, f: &mut dyn FnMut(&[usize])) {
        if i == n {
            f(a);
            return;
        }
        for c in 0..=max + 1 {
            a[i] = c;
            rec(a, i + 1, max.max(c), n, f);
        }
    }
    if n == 0 {
        f(&[]);
        return;
    }
    let mut a = vec![0; n];
    rec(&mut a, 1, 0, n, &mut f);
}

/// Maximum of the brute-force modularity over every set partition, the
/// maximizing assignment, and the number of partitions visited.
pub fn best_partition_by_enumeration(n: usize, edges: &[(usize, usize, f64)]) -> (f64, Vec<usize>, usize) {
    let mut best = (f64::NEG_INFINITY, Vec::new());
    let mut count = 0;
    for_each_set_partition(n, |a| {
        count += 1;
        let q = brute_force_q(n, edges, a);
        if q > best.0 {
            best = (q, a.to_vec());
        }
    });
    (best.0, best.1, count)
}

/// Whether two assignments group nodes identically (labels may differ).
pub fn same_grouping(a: &[usize], b: &[usize]) -> bool {
    a.len() == b.len() && (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

#[cfg(test)]
#[test]
fn bell_numbers() {
    for (n, bell) in [(1, 1), (3, 5), (6, 203), (8, 4140)] {
        let mut c = 0;
        for_each_set_partition(n, |_| c += 1);
        assert_eq!(c, bell);
    }
}
