use maasim_core::metrics::{mann_whitney_u, significance_matrix, Alternative, Better, Direction};

/// U (a beats b, ties one half) by direct pair counting.
fn u_of(a: &[f64], b: &[f64]) -> f64 {
    a.iter().flat_map(|x| b.iter().map(move |y| if x > y { 1.0 } else if x == y { 0.5 } else { 0.0 })).sum()
}

/// Every way of choosing which 3 of the 6 pooled values belong to `a`.
fn splits(pooled: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut out = Vec::new();
    for mask in 0u32..64 {
        if mask.count_ones() != 3 {
            continue;
        }
        let a = (0..6).filter(|i| mask >> i & 1 == 1).map(|i| pooled[i]).collect();
        let b = (0..6).filter(|i| mask >> i & 1 == 0).map(|i| pooled[i]).collect();
        out.push((a, b));
    }
    out
}

#[test]
fn exact_p_values_match_enumeration_for_all_three_by_three_samples() {
    let pooled = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let all = splits(&pooled);
    assert_eq!(all.len(), 20);
    let null: Vec<f64> = all.iter().map(|(a, b)| u_of(a, b)).collect();
    for (a, b) in &all {
        let u = u_of(a, b);
        let upper = null.iter().filter(|&&v| v >= u).count() as f64 / 20.0;
        let lower = null.iter().filter(|&&v| v <= u).count() as f64 / 20.0;
        let two = (2.0 * upper.min(lower)).min(1.0);
        for (alt, want) in [(Alternative::AGreater, upper), (Alternative::ALess, lower), (Alternative::TwoSided, two)] {
            let r = mann_whitney_u(a, b, alt).unwrap();
            assert!(r.exact);
            assert_eq!(r.u_statistic, u);
            assert!((r.p_value - want).abs() < 1e-12, "{a:?} vs {b:?} {alt:?}: {} vs {want}", r.p_value);
        }
    }
}

#[test]
fn disjoint_samples_give_one_in_twenty() {
    let r = mann_whitney_u(&[4.0, 5.0, 6.0], &[1.0, 2.0, 3.0], Alternative::AGreater).unwrap();
    assert_eq!(r.u_statistic, 9.0);
    assert!((r.p_value - 0.05).abs() < 1e-12);
    // Exactly at the level, so not significant.
    assert_eq!(r.direction, Direction::None);
}

#[test]
fn matrix_is_antisymmetric() {
    let runs = vec![
        ("low".to_string(), vec![1.0, 1.2, 0.9, 1.1, 1.05, 0.95, 1.0, 1.15, 0.98, 1.02]),
        ("mid".to_string(), vec![2.0, 2.1, 1.9, 2.2, 2.05, 1.95, 2.0, 2.15, 1.98, 2.02]),
        ("high".to_string(), vec![3.0, 3.1, 2.9, 3.2, 3.05, 2.95, 3.0, 3.15, 2.98, 3.02]),
        ("same".to_string(), vec![2.0, 2.1, 1.9, 2.2, 2.05, 1.95, 2.0, 2.15, 1.98, 2.02]),
    ];
    for better in [Better::Higher, Better::Lower] {
        let m = significance_matrix(&runs, better).unwrap();
        for i in 0..4 {
            assert!(!m.flags[i][i]);
            for j in 0..4 {
                assert!(!(m.flags[i][j] && m.flags[j][i]));
            }
        }
        let (hi, lo) = if better == Better::Higher { (2, 0) } else { (0, 2) };
        assert!(m.flags[hi][lo]);
        assert!(!m.flags[1][3] && !m.flags[3][1]);
    }
}
