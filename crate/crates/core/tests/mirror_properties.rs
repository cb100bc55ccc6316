use mirrorflow::mirror::{dot, norm_sq};
use mirrorflow::MirrorMap;
use proptest::prelude::*;

fn dual(p: usize, scale: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-scale..scale, p)
}

fn maps() -> impl Strategy<Value = MirrorMap> {
    prop_oneof![
        (0.2f64..3.0, 1usize..4).prop_map(|(r, p)| MirrorMap::ball(r, p).unwrap()),
        (2usize..6).prop_map(|p| MirrorMap::simplex(p).unwrap()),
    ]
}

fn map_and_pair(scale: f64) -> impl Strategy<Value = (MirrorMap, Vec<f64>, Vec<f64>)> {
    maps().prop_flat_map(move |m| (Just(m), dual(m.dim(), scale), dual(m.dim(), scale)))
}

fn spectral_norm(h: &[f64], p: usize) -> f64 {
    // power iteration is enough for a symmetric PSD matrix of size <= 5
    let mut v = vec![1.0; p];
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w: Vec<f64> = (0..p)
            .map(|i| (0..p).map(|j| h[i * p + j] * v[j]).sum())
            .collect();
        let n = norm_sq(&w).sqrt();
        if n == 0.0 {
            return 0.0;
        }
        lambda = n / norm_sq(&v).sqrt();
        v = w.iter().map(|x| x / n).collect();
    }
    lambda
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn grad_psi_star_lands_in_interior((map, y, _) in map_and_pair(350.0)) {
        let a = map.grad_psi_star(&y);
        prop_assert!(map.is_interior(&a));
    }

    #[test]
    fn ball_conjugacy(r in 0.2f64..3.0, y in dual(3, 1e3)) {
        let map = MirrorMap::ball(r, 3).unwrap();
        let back = map.grad_psi(&map.grad_psi_star(&y)).unwrap();
        let scale = norm_sq(&y).sqrt().max(1.0);
        for k in 0..3 {
            prop_assert!((back[k] - y[k]).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn simplex_conjugacy(w in prop::collection::vec(0.01f64..1.0, 2..6)) {
        let total: f64 = w.iter().sum();
        let a: Vec<f64> = w.iter().map(|v| v / total).collect();
        let map = MirrorMap::simplex(a.len()).unwrap();
        let back = map.grad_psi_star(&map.grad_psi(&a).unwrap());
        for (x, y) in back.iter().zip(&a) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn fenchel_young_equality((map, y, _) in map_and_pair(50.0)) {
        let a = map.grad_psi_star(&y);
        let lhs = map.psi(&a) + map.psi_star(&y);
        let rhs = dot(&y, &a);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn hessian_is_jacobian_of_gradient((map, y, _) in map_and_pair(5.0)) {
        let p = map.dim();
        let h = map.hess_psi_star(&y);
        let step = 1e-5;
        let norm = spectral_norm(&h, p).max(1e-3);
        for j in 0..p {
            let mut up = y.clone();
            let mut dn = y.clone();
            up[j] += step;
            dn[j] -= step;
            let (gu, gd) = (map.grad_psi_star(&up), map.grad_psi_star(&dn));
            for i in 0..p {
                let fd = (gu[i] - gd[i]) / (2.0 * step);
                prop_assert!((fd - h[i * p + j]).abs() <= 1e-6 * norm);
            }
        }
    }

    #[test]
    fn hessian_symmetric_psd_and_bounded((map, y, v) in map_and_pair(20.0)) {
        let p = map.dim();
        let h = map.hess_psi_star(&y);
        for i in 0..p {
            for j in 0..p {
                prop_assert!((h[i * p + j] - h[j * p + i]).abs() <= 1e-14);
            }
        }
        let q: f64 = (0..p).map(|i| (0..p).map(|j| v[i] * h[i * p + j] * v[j]).sum::<f64>()).sum();
        prop_assert!(q >= -1e-12 * norm_sq(&v));
        let bound = match map {
            MirrorMap::Ball { radius, .. } => radius * radius / 2.0,
            MirrorMap::Simplex { .. } => 1.0,
        };
        prop_assert!(spectral_norm(&h, p) <= bound * (1.0 + 1e-9));
    }

    #[test]
    fn swapped_bregman_identity((map, y, y2) in map_and_pair(10.0)) {
        let primal = map
            .bregman_psi(&map.grad_psi_star(&y), &map.grad_psi_star(&y2))
            .unwrap();
        let dual = map.bregman_psi_star(&y2, &y);
        prop_assert!((primal - dual).abs() <= 1e-10 * dual.abs().max(1.0), "{primal} vs {dual}");
    }

    #[test]
    fn bregman_divergences_are_nonnegative((map, y, y2) in map_and_pair(10.0)) {
        prop_assert!(map.bregman_psi_star(&y, &y2) >= -1e-12);
        let (a, a2) = (map.grad_psi_star(&y), map.grad_psi_star(&y2));
        prop_assert!(map.bregman_psi(&a, &a2).unwrap() >= -1e-12);
        prop_assert!(map.bregman_psi(&a, &a).unwrap().abs() <= 1e-12);
        prop_assert_eq!(map.bregman_psi_star(&y, &y), 0.0);
    }

    #[test]
    fn bregman_positive_off_diagonal(r in 0.5f64..2.0, y in dual(2, 3.0), y2 in dual(2, 3.0)) {
        prop_assume!(norm_sq(&y.iter().zip(&y2).map(|(a, b)| a - b).collect::<Vec<_>>()) > 1e-4);
        let map = MirrorMap::ball(r, 2).unwrap();
        prop_assert!(map.bregman_psi_star(&y, &y2) > 0.0);
        prop_assert!(map.bregman_psi(&map.grad_psi_star(&y), &map.grad_psi_star(&y2)).unwrap() > 0.0);
    }

    #[test]
    fn simplex_hessian_annihilates_ones(p in 2usize..6, seed in dual(5, 30.0)) {
        let map = MirrorMap::simplex(p).unwrap();
        let h = map.hess_psi_star(&seed[..p]);
        for i in 0..p {
            let row: f64 = (0..p).map(|j| h[i * p + j]).sum();
            prop_assert!(row.abs() <= 1e-15);
        }
    }
}

#[test]
fn ball_gradient_tends_to_radius() {
    let map = MirrorMap::ball(1.5, 2).unwrap();
    let mut last = 0.0;
    for k in 0..7 {
        let t = 10f64.powi(k);
        let n = norm_sq(&map.grad_psi_star(&[t, 0.0])).sqrt();
        assert!(n > last && n < 1.5);
        last = n;
    }
    assert!((1.5 - last).abs() <= 1e-5);
}

#[test]
fn psi_is_infinite_outside_domain() {
    let ball = MirrorMap::ball(1.0, 2).unwrap();
    assert_eq!(ball.psi(&[1.0, 0.0]), f64::INFINITY);
    assert!(ball.grad_psi(&[1.0, 0.0]).is_err());
    let simplex = MirrorMap::simplex(3).unwrap();
    assert_eq!(simplex.psi(&[0.5, 0.6, -0.1]), f64::INFINITY);
    assert!(simplex
        .bregman_psi(&[0.5, 0.5, 0.0], &[1.0, 0.0, 0.0])
        .is_err());
    assert!(simplex
        .bregman_psi(&[0.5, 0.5, 0.0], &[0.2, 0.3, 0.5])
        .unwrap()
        .is_finite());
}
