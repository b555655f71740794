use dpbv_core::distance::{build_distance_matrix_with, Combine};
use dpbv_core::{
    distance_consistence, kcluster, nmi, ConsistenceOptions, DistanceMatrix, EncodingConfig, Encoder, KClusterOptions,
    Mechanism, Record, Schema,
};
use proptest::prelude::*;

fn points(d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0f64..10.0, d), 2..25)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn estimated_matrices_are_symmetric_nonnegative_and_bounded(
        pts in points(3), seed in any::<u64>(), noise in any::<u64>(), raw in any::<bool>(),
    ) {
        let schema = Schema::uniform(EncodingConfig::new(0.0, 10.0, 2.0, 128, 1.0, seed).unwrap(), 3).unwrap();
        let recs: Vec<Record> = pts.iter().enumerate().map(|(i, p)| Record::new(i as u64, p.clone())).collect();
        let enc = Encoder::new(schema.clone(), Mechanism::Dpbv).unwrap().encode_all(&recs, noise).unwrap();
        let combine = if raw { Combine::Raw } else { Combine::Clamped };
        let m = build_distance_matrix_with(&enc, &schema, combine).unwrap();
        for i in 0..m.n() {
            prop_assert_eq!(m.get(i, i), 0.0);
            for j in 0..m.n() {
                prop_assert_eq!(m.get(i, j), m.get(j, i));
                prop_assert!(m.get(i, j) >= 0.0);
                if !raw {
                    prop_assert!(m.get(i, j) <= 4.0 * 3f64.sqrt() + 1e-9);
                }
            }
        }
    }

    #[test]
    fn encoding_is_order_independent(pts in points(2), seed in any::<u64>(), noise in any::<u64>()) {
        let schema = Schema::uniform(EncodingConfig::new(0.0, 10.0, 3.0, 64, 2.0, seed).unwrap(), 2).unwrap();
        let enc = Encoder::new(schema, Mechanism::Dpbv).unwrap();
        let recs: Vec<Record> = pts.iter().enumerate().map(|(i, p)| Record::new(i as u64 * 3, p.clone())).collect();
        let forward = enc.encode_all(&recs, noise).unwrap();
        let mut rev = recs.clone();
        rev.reverse();
        let mut backward = enc.encode_all(&rev, noise).unwrap();
        backward.reverse();
        prop_assert_eq!(forward, backward);
    }

    #[test]
    fn nmi_is_symmetric_bounded_and_relabel_invariant(
        a in prop::collection::vec(0i64..4, 1..60), perm in Just([2i64, 0, 3, 1]), salt in any::<u64>(),
    ) {
        let b: Vec<i64> = a.iter().enumerate().map(|(i, x)| (x + ((salt >> (i % 64)) & 1) as i64) % 4).collect();
        let ab = nmi(&a, &b).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
        prop_assert!((ab - nmi(&b, &a).unwrap()).abs() < 1e-12);
        let relabeled: Vec<i64> = a.iter().map(|x| perm[*x as usize]).collect();
        prop_assert!((nmi(&a, &relabeled).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn consistence_keeps_trusted_entries(pts in prop::collection::vec(0.0f64..30.0, 3..30), r in 1.0f64..10.0) {
        let rows: Vec<Vec<f64>> = pts.iter().map(|x| vec![*x]).collect();
        let exact = DistanceMatrix::euclidean(&rows);
        let saturated = DistanceMatrix::from_fn(exact.n(), |i, j| exact.get(i, j).min(r));
        let out = distance_consistence(&saturated, &ConsistenceOptions::new(0.01).with_known_local_radius(r - 0.5)).unwrap();
        for i in 0..exact.n() {
            for j in 0..exact.n() {
                let v = saturated.get(i, j);
                if v <= r - 0.5 {
                    prop_assert_eq!(out.matrix.get(i, j), v);
                } else if out.matrix.revision(i, j) > 0 {
                    // Chains of exact collinear hops never undershoot.
                    prop_assert!(out.matrix.get(i, j) >= exact.get(i, j) - 1e-9);
                }
            }
        }
    }

    #[test]
    fn kcluster_labels_are_in_range(pts in points(2), k in 1usize..4, seed in any::<u64>()) {
        prop_assume!(pts.len() >= k);
        let m = DistanceMatrix::euclidean(&pts);
        let r = kcluster(&m, &KClusterOptions::new(k).with_seed(seed)).unwrap();
        prop_assert_eq!(r.assignment.labels.len(), pts.len());
        prop_assert!(r.assignment.labels.iter().all(|l| (0..k as i64).contains(l)));
        prop_assert!(r.objective >= 0.0);
    }
}
