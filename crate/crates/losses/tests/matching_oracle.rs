//! Exhaustive-permutation oracle for the Hungarian solver, plus GIoU range
//! properties and matching invariances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use grounder_losses::{giou_xyxy, hungarian_match, iou_xyxy};

/// Minimum assignment cost by enumerating every injective map of the smaller
/// side into the larger. Independent of the solver under test.
fn brute_force_min_cost(cost: &[Vec<f64>]) -> f64 {
    let nq = cost.len();
    let ngt = cost.first().map_or(0, Vec::len);
    if nq == 0 || ngt == 0 {
        return 0.0;
    }
    fn recurse(cost: &[Vec<f64>], gt: usize, ngt: usize, used: &mut [bool], acc: f64, best: &mut f64) {
        if gt == ngt {
            *best = best.min(acc);
            return;
        }
        for q in 0..cost.len() {
            if !used[q] {
                used[q] = true;
                recurse(cost, gt + 1, ngt, used, acc + cost[q][gt], best);
                used[q] = false;
            }
        }
    }
    if ngt <= nq {
        let mut best = f64::INFINITY;
        recurse(cost, 0, ngt, &mut vec![false; nq], 0.0, &mut best);
        best
    } else {
        // transpose so the enumerated side stays the smaller one
        let t: Vec<Vec<f64>> = (0..ngt)
            .map(|g| (0..nq).map(|q| cost[q][g]).collect())
            .collect();
        brute_force_min_cost(&t)
    }
}

#[test]
fn hungarian_equals_brute_force_on_1000_random_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for trial in 0..1000 {
        let nq = rng.gen_range(1..=9);
        let ngt = rng.gen_range(1..=7);
        let cost: Vec<Vec<f64>> = (0..nq)
            .map(|_| (0..ngt).map(|_| rng.gen_range(-5.0..5.0)).collect())
            .collect();
        let got = hungarian_match(&cost).unwrap();
        let want = brute_force_min_cost(&cost);
        assert!(
            (got.total_cost - want).abs() < 1e-9,
            "trial {trial}: solver {} vs brute force {want} on {cost:?}",
            got.total_cost
        );
        // assignment is injective on both sides and complete
        assert_eq!(got.pairs.len(), nq.min(ngt));
        let mut qs: Vec<usize> = got.pairs.iter().map(|p| p.0).collect();
        let mut gs: Vec<usize> = got.pairs.iter().map(|p| p.1).collect();
        qs.dedup();
        gs.sort_unstable();
        gs.dedup();
        assert_eq!(qs.len(), got.pairs.len());
        assert_eq!(gs.len(), got.pairs.len());
    }
}

#[test]
fn matching_invariant_under_positive_rescaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..200 {
        let nq = rng.gen_range(2..=8);
        let ngt = rng.gen_range(1..=6);
        let cost: Vec<Vec<f64>> = (0..nq)
            .map(|_| (0..ngt).map(|_| rng.gen_range(0.0..10.0)).collect())
            .collect();
        let scale: f64 = rng.gen_range(0.01..50.0);
        let scaled: Vec<Vec<f64>> = cost
            .iter()
            .map(|r| r.iter().map(|c| c * scale).collect())
            .collect();
        let a = hungarian_match(&cost).unwrap();
        let b = hungarian_match(&scaled).unwrap();
        assert_eq!(a.pairs, b.pairs);
    }
}

#[test]
fn giou_range_symmetry_and_iou_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10_000 {
        let rand_box = |r: &mut ChaCha8Rng| {
            let x1: f64 = r.gen_range(0.0..0.9);
            let y1: f64 = r.gen_range(0.0..0.9);
            let x2 = x1 + r.gen_range(0.01..0.5);
            let y2 = y1 + r.gen_range(0.01..0.5);
            [x1, y1, x2, y2]
        };
        let a = rand_box(&mut rng);
        let b = rand_box(&mut rng);
        let g = giou_xyxy(a, b);
        let i = iou_xyxy(a, b);
        assert!((-1.0..=1.0).contains(&g));
        assert!(g <= i + 1e-12, "GIoU {g} exceeded IoU {i}");
        assert!((g - giou_xyxy(b, a)).abs() < 1e-12, "asymmetric GIoU");
    }
}

#[test]
fn giou_equals_iou_when_enclosing_equals_union() {
    // containment: enclosing box == outer box == union region
    let outer = [0.0, 0.0, 1.0, 1.0];
    let inner = [0.2, 0.3, 0.7, 0.8];
    let g = giou_xyxy(outer, inner);
    let i = iou_xyxy(outer, inner);
    assert!((g - i).abs() < 1e-12);
}
