//! Non-dominated filtering and superior-set selection.

use std::cmp::Ordering;

/// `a` dominates `b` when it is no worse in every component and strictly
/// better in at least one (all components minimized).
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// Indices (ascending) of all non-dominated vectors. Exact duplicates of a
/// non-dominated vector are all kept.
///
/// Two-objective inputs use an `O(n log n)` sweep; other arities fall back to
/// pairwise comparison.
pub fn pareto_front<V: AsRef<[f64]>>(objectives: &[V]) -> Vec<usize> {
    if objectives.is_empty() {
        return Vec::new();
    }
    let arity = objectives[0].as_ref().len();
    debug_assert!(objectives.iter().all(|v| v.as_ref().len() == arity));
    if arity != 2 {
        return pairwise_front(objectives);
    }

    let f = |i: usize, k: usize| objectives[i].as_ref()[k];
    let mut order: Vec<usize> = (0..objectives.len()).collect();
    order.sort_by(|&a, &b| f(a, 0).total_cmp(&f(b, 0)).then(f(a, 1).total_cmp(&f(b, 1))));

    let mut front = Vec::new();
    let mut best_second = f64::INFINITY;
    let mut start = 0;
    while start < order.len() {
        // Group sharing the same first objective; its minimum second
        // objective comes first thanks to the sort.
        let first = f(order[start], 0);
        let mut end = start;
        while end < order.len() && f(order[end], 0).total_cmp(&first) == Ordering::Equal {
            end += 1;
        }
        let group_min = f(order[start], 1);
        if group_min < best_second {
            front.extend(
                order[start..end]
                    .iter()
                    .copied()
                    .take_while(|&i| f(i, 1).total_cmp(&group_min) == Ordering::Equal),
            );
            best_second = group_min;
        }
        start = end;
    }
    front.sort_unstable();
    front
}

fn pairwise_front<V: AsRef<[f64]>>(objectives: &[V]) -> Vec<usize> {
    (0..objectives.len())
        .filter(|&i| {
            !objectives
                .iter()
                .any(|other| dominates(other.as_ref(), objectives[i].as_ref()))
        })
        .collect()
}

/// Picks `max(1, ceil(n * kappa))` crows: the Pareto front of `objectives`,
/// truncated to the lowest scalar fitness if it is too large, or topped up
/// with the best remaining crows by fitness if it is too small. Ties go to
/// the lower index.
pub fn select_superior_set<V: AsRef<[f64]>>(objectives: &[V], fitness: &[f64], kappa: f64) -> Vec<usize> {
    assert_eq!(objectives.len(), fitness.len());
    let n = fitness.len();
    if n == 0 {
        return Vec::new();
    }
    let target = superior_size(n, kappa);
    let by_fitness = |a: &usize, b: &usize| fitness[*a].total_cmp(&fitness[*b]).then(a.cmp(b));

    let mut front = pareto_front(objectives);
    front.sort_by(by_fitness);
    if front.len() >= target {
        front.truncate(target);
        return front;
    }
    let mut in_front = vec![false; n];
    for &i in &front {
        in_front[i] = true;
    }
    let mut rest: Vec<usize> = (0..n).filter(|&i| !in_front[i]).collect();
    rest.sort_by(by_fitness);
    front.extend(rest.into_iter().take(target - front.len()));
    front
}

/// `max(1, ceil(n * kappa))`, capped at `n`.
pub fn superior_size(n: usize, kappa: f64) -> usize {
    // Guard against 25 * 0.4 = 10.000000000000002 style round-up.
    let raw = n as f64 * kappa;
    let size = if (raw - raw.round()).abs() < 1e-9 { raw.round() } else { raw.ceil() };
    (size as usize).clamp(1, n.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_front(v: &[[f64; 2]]) -> Vec<usize> {
        (0..v.len())
            .filter(|&i| {
                !(0..v.len()).any(|j| {
                    v[j][0] <= v[i][0] && v[j][1] <= v[i][1] && (v[j][0] < v[i][0] || v[j][1] < v[i][1])
                })
            })
            .collect()
    }

    #[test]
    fn small_fronts() {
        assert_eq!(pareto_front(&[[1.0, 2.0], [2.0, 1.0], [2.0, 2.0]]), vec![0, 1]);
        assert_eq!(pareto_front(&[[5.0, 5.0]]), vec![0]);
        assert_eq!(pareto_front(&[[1.0, 1.0], [1.0, 1.0], [0.5, 3.0]]), vec![0, 1, 2]);
        assert_eq!(pareto_front(&[[1.0, 2.0], [1.0, 3.0]]), vec![0]);
        assert!(pareto_front::<[f64; 2]>(&[]).is_empty());
    }

    #[test]
    fn three_objectives_use_pairwise_path() {
        let v = [[1.0, 2.0, 3.0], [1.0, 2.0, 4.0], [0.0, 5.0, 5.0]];
        assert_eq!(pareto_front(&v), vec![0, 2]);
    }

    #[test]
    fn sweep_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let n = rng.random_range(1..=200);
            // Coarse values force plenty of ties and duplicates.
            let v: Vec<[f64; 2]> = (0..n)
                .map(|_| [rng.random_range(0..20) as f64, rng.random_range(0..20) as f64])
                .collect();
            assert_eq!(pareto_front(&v), brute_front(&v));
        }
    }

    #[test]
    fn superior_set_sizes() {
        assert_eq!(superior_size(25, 0.4), 10);
        assert_eq!(superior_size(25, 0.01), 1);
        assert_eq!(superior_size(10, 1.0), 10);
    }

    #[test]
    fn superior_fill_and_truncate() {
        // Front is {0, 1, 2}; the rest ranked by fitness: 4 (0.5), 3 (0.7).
        let obj = [[1.0, 5.0], [2.0, 2.0], [5.0, 1.0], [6.0, 6.0], [3.0, 3.0], [9.0, 9.0]];
        let fit = [3.0, 2.0, 4.0, 0.7, 0.5, 9.0];
        assert_eq!(select_superior_set(&obj, &fit, 5.0 / 6.0), vec![1, 0, 2, 4, 3]);
        // Front of 8 mutually non-dominated points truncated to the best 5.
        let obj: Vec<[f64; 2]> = (0..8).map(|i| [i as f64, 8.0 - i as f64]).collect();
        let fit = [8.0, 1.0, 7.0, 2.0, 6.0, 3.0, 5.0, 4.0];
        assert_eq!(select_superior_set(&obj, &fit, 5.0 / 8.0), vec![1, 3, 5, 7, 6]);
    }

    #[test]
    fn best_fitness_always_selected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let n = rng.random_range(2..30);
            let obj: Vec<[f64; 2]> = (0..n).map(|_| [rng.random(), rng.random()]).collect();
            let fit: Vec<f64> = obj.iter().map(|o| o[0] + 4.0 * o[1]).collect();
            let best = (0..n).min_by(|&a, &b| fit[a].total_cmp(&fit[b])).unwrap();
            let set = select_superior_set(&obj, &fit, rng.random_range(0.01..1.0));
            assert!(set.contains(&best));
        }
    }
}
