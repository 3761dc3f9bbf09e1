use crowdsplat_core::scene::ply::{decode_gaussians, encode_gaussians};
use crowdsplat_core::scene::{dbscan, Gaussian};
use crowdsplat_core::Vec3;
use proptest::prelude::*;

fn points() -> impl Strategy<Value = Vec<Vec3>> {
    prop::collection::vec((0.0..3.0f64, 0.0..3.0f64, 0.0..3.0f64), 1..40)
        .prop_map(|v| v.into_iter().map(|(x, y, z)| Vec3::new(x, y, z)).collect())
}

fn near(a: &Vec3, b: &Vec3, eps: f64) -> bool {
    (a - b).norm_squared() <= eps * eps
}

proptest! {
    #[test]
    fn dbscan_labels_follow_core_connectivity(pts in points(), eps in 0.1..1.5f64, min_pts in 1usize..6) {
        let labels = dbscan(&pts, eps, min_pts);
        let n = pts.len();
        let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(&pts[i], &pts[j], eps)).count() >= min_pts).collect();
        for i in 0..n {
            let has_core_neighbour = (0..n).any(|j| core[j] && near(&pts[i], &pts[j], eps));
            prop_assert_eq!(labels[i].is_none(), !has_core_neighbour, "point {}", i);
            for j in 0..n {
                if core[i] && core[j] && near(&pts[i], &pts[j], eps) {
                    prop_assert_eq!(labels[i], labels[j]);
                }
            }
            // A border point joins a cluster one of its core neighbours owns.
            if let (false, Some(l)) = (core[i], labels[i]) {
                prop_assert!((0..n).any(|j| core[j] && near(&pts[i], &pts[j], eps) && labels[j] == Some(l)));
            }
        }
    }

    #[test]
    fn dbscan_with_one_point_minimum_has_no_noise(pts in points(), eps in 0.01..1.0f64) {
        prop_assert!(dbscan(&pts, eps, 1).iter().all(Option::is_some));
    }

    #[test]
    fn ply_roundtrip_is_exact(
        raw in prop::collection::vec(prop::array::uniform14(-5.0..5.0f64), 0..20)
    ) {
        let gs: Vec<Gaussian> = raw
            .iter()
            .map(|v| Gaussian::new(
                Vec3::new(v[0], v[1], v[2]),
                Vec3::new(v[3], v[4], v[5]),
                [v[6], v[7], v[8], v[9]],
                v[10],
                Vec3::new(v[11], v[12], v[13]),
            ))
            .collect();
        let bytes = encode_gaussians(&gs);
        let back = decode_gaussians(bytes.as_slice()).unwrap();
        prop_assert_eq!(encode_gaussians(&back), bytes);
        for (a, b) in gs.iter().zip(&back) {
            prop_assert_eq!(a.position, b.position);
            prop_assert_eq!(a.opacity_logit, b.opacity_logit);
            prop_assert_eq!(a.color, b.color);
        }
    }
}
