mod common;

use aerotrack::assign::{gated_assignment, hungarian};
use common::{brute_force_assignment, brute_force_gated, hungarian_mismatches, rng};
use proptest::prelude::*;
use rand::RngExt;

fn total(cost: &[Vec<f64>], a: &[Option<usize>]) -> f64 {
    a.iter().enumerate().filter_map(|(r, c)| c.map(|c| cost[r][c])).sum()
}

#[test]
fn two_by_two_example() {
    let cost = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
    let a = hungarian(&cost);
    assert_eq!(a, vec![Some(1), Some(0)]);
    assert_eq!(total(&cost, &a), 4.0);
}

#[test]
fn matches_permutation_search_on_random_instances() {
    assert_eq!(hungarian_mismatches(0xA551, 10_000), 0);
}

#[test]
fn integer_costs_with_ties() {
    let mut r = rng(7);
    for _ in 0..2000 {
        let n = r.random_range(1..=5);
        let m = r.random_range(1..=5);
        let cost: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| r.random_range(0..4) as f64).collect()).collect();
        assert_eq!(total(&cost, &hungarian(&cost)), brute_force_assignment(&cost));
    }
}

#[test]
fn gated_matches_exhaustive_search() {
    let mut r = rng(0x6A7E);
    for _ in 0..3000 {
        let rows = r.random_range(0..=5);
        let cols = r.random_range(0..=5);
        let cost: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..cols).map(|_| r.random_range(0.0..30.0)).collect())
            .collect();
        let gate = 15.0;
        let a = gated_assignment(&cost, cols, gate);
        for &(i, j) in &a.pairs {
            assert!(cost[i][j] < gate);
        }
        assert_eq!(a.pairs.len() + a.unmatched_rows.len(), rows);
        assert_eq!(a.pairs.len() + a.unmatched_cols.len(), cols);
        let (n, best) = brute_force_gated(&cost, gate);
        assert_eq!(a.pairs.len(), n);
        assert!((a.total_cost(&cost) - best).abs() < 1e-9);
    }
}

#[test]
fn gate_is_strict() {
    let cost = vec![vec![15.0, 14.999]];
    let a = gated_assignment(&cost, 2, 15.0);
    assert_eq!(a.pairs, vec![(0, 1)]);
    assert_eq!(a.unmatched_cols, vec![0]);
}

#[test]
fn empty_rows_report_all_columns() {
    let a = gated_assignment(&[], 3, 15.0);
    assert!(a.pairs.is_empty());
    assert_eq!(a.unmatched_cols, vec![0, 1, 2]);
}

proptest! {
    #[test]
    fn hungarian_never_beaten_by_identity(n in 1usize..6, seed in any::<u64>()) {
        let mut r = rng(seed);
        let cost: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| r.random_range(-5.0..5.0)).collect()).collect();
        let identity: f64 = (0..n).map(|i| cost[i][i]).sum();
        prop_assert!(total(&cost, &hungarian(&cost)) <= identity + 1e-9);
    }

    #[test]
    fn shifting_a_row_keeps_the_solution_cost_offset(n in 1usize..6, shift in -10.0f64..10.0, seed in any::<u64>()) {
        let mut r = rng(seed);
        let cost: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| r.random_range(0.0..5.0)).collect()).collect();
        let mut shifted = cost.clone();
        for v in shifted[0].iter_mut() {
            *v += shift;
        }
        let a = total(&cost, &hungarian(&cost));
        let b = total(&shifted, &hungarian(&shifted));
        prop_assert!((a + shift - b).abs() < 1e-9);
    }
}
