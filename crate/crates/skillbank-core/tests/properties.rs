//! Property tests for the parsing, sampling, and taxonomy invariants.

use proptest::prelude::*;

use skillbank_core::annotate::{AlignedInterval, AnnotatedSlice};
use skillbank_core::geometry::{
    sample_orientation_indices, transfer_orientation, CameraModel, Pose6D, Rotation, TrajectorySE3,
    Vec3,
};
use skillbank_core::modelgw::{Embedder, FixtureBackend, ImageRef};
use skillbank_core::skillparse::{format_signature, parse_signature, VerbLexicon};
use skillbank_core::taxonomy::{NodePayload, Repository};

fn lemma_strategy() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,7}"
}

fn signature_strategy() -> impl Strategy<Value = String> {
    (
        lemma_strategy(),
        proptest::collection::vec(("[a-z][a-z0-9_]{0,5}", "[A-Za-z0-9_]{1,6}"), 0..4),
    )
        .prop_filter_map("unique roles", |(lemma, params)| {
            let mut seen = std::collections::BTreeSet::new();
            for (role, _) in &params {
                if !seen.insert(role.clone()) {
                    return None;
                }
            }
            let body = params
                .iter()
                .map(|(r, v)| format!("{r}={v}"))
                .collect::<Vec<_>>()
                .join(" , ");
            Some(format!("{lemma} ( {body} )"))
        })
}

proptest! {
    #[test]
    fn parse_format_parse_is_identity(text in signature_strategy()) {
        let first = parse_signature(&text).expect("generated signature parses");
        let canonical = format_signature(&first);
        let second = parse_signature(&canonical).expect("canonical form parses");
        prop_assert_eq!(&first, &second);
        prop_assert_eq!(format_signature(&second), canonical);
    }

    #[test]
    fn lookup_class_is_total(lemma in lemma_strategy()) {
        let lookup = VerbLexicon::bundled().lookup(&lemma);
        prop_assert!(!lookup.class_id.is_empty());
        // Provisional ids still satisfy the class-id grammar the lexicon
        // enforces for its own entries.
        if lookup.provisional {
            prop_assert_eq!(lookup.class_id, format!("{}-unclassified-0.0", lemma));
        }
    }

    #[test]
    fn sampled_indices_are_valid(source_len in 1usize..200, n in 1usize..64) {
        let indices = sample_orientation_indices(source_len, n);
        prop_assert_eq!(indices.len(), n);
        prop_assert!(indices.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(indices.iter().all(|&i| i < source_len));
        if n >= 2 {
            prop_assert_eq!(indices[0], 0);
            prop_assert_eq!(*indices.last().unwrap(), source_len - 1);
        }
    }

    #[test]
    fn transfer_preserves_rotation_invariants(
        (a1, a2, a3) in (-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0),
        (b1, b2) in (-3.0f64..3.0, -3.0f64..3.0),
        c1 in -3.0f64..3.0,
    ) {
        let r_src = Rotation::about_z(a1).mul(&Rotation::about_x(a2)).mul(&Rotation::about_y(a3));
        let f_src = Rotation::about_y(b1).mul(&Rotation::about_z(b2));
        let f_tgt = Rotation::about_x(c1);
        let out = transfer_orientation(&r_src, &f_src, &f_tgt);
        prop_assert!(out.orthogonality_error() < 1e-9);
        prop_assert!((out.det() - 1.0).abs() < 1e-9);
    }
}

fn slice_for(lemma_idx: usize, desc_idx: usize, n: usize) -> AnnotatedSlice {
    let lemmas = ["wipe", "pick", "pour", "zorble", "stack"];
    let lemma = lemmas[lemma_idx % lemmas.len()];
    let signature = parse_signature(&format!("{lemma}(target=obj{})", desc_idx % 3)).unwrap();
    let poses: Vec<Pose6D> = (0..3)
        .map(|i| Pose6D {
            position: Vec3::new(0.02 * i as f64, 0.0, 0.1),
            orientation: Rotation::identity(),
        })
        .collect();
    let ts: Vec<f64> = (0..3).map(|i| 0.125 * i as f64).collect();
    AnnotatedSlice {
        slice_id: format!("v{n}/0-1/{lemma}"),
        video_id: format!("v{n}"),
        signature,
        description: format!("{lemma} variant {}", desc_idx % 3),
        interval: AlignedInterval {
            start_idx: 0,
            end_idx: 1,
            start_t: 0.0,
            end_t: 0.25,
        },
        trajectory: TrajectorySE3::new(poses, ts).unwrap(),
        camera: CameraModel::with_identity_extrinsic(100.0, 100.0, 50.0, 50.0, 100, 100),
        initial_frame: ImageRef::new(format!("f{n}")),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Any insertion sequence leaves the tree well-formed, with leaf count
    /// equal to the number of successful insertions.
    #[test]
    fn tree_stays_well_formed(
        inserts in proptest::collection::vec((0usize..5, 0usize..4), 1..40),
    ) {
        let embedder = FixtureBackend::new(24);
        let mut repo = Repository::new(embedder.dim());
        for (n, (lemma_idx, desc_idx)) in inserts.iter().enumerate() {
            repo.insert_slice(
                slice_for(*lemma_idx, *desc_idx, n),
                VerbLexicon::bundled(),
                &embedder,
                0.8,
            )
            .expect("unique slice ids insert cleanly");
        }
        repo.tree.validate().expect("tree invariants hold");
        prop_assert_eq!(repo.stats().slice_count, inserts.len());
        for node in repo.tree.nodes() {
            if matches!(node.payload, NodePayload::SliceLeaf { .. }) {
                prop_assert_eq!(repo.tree.path_to_root(&node.id).len(), 4);
            }
        }
    }
}
