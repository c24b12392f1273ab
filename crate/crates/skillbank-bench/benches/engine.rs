use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use skillbank_bench::corpus_repository;
use skillbank_core::geometry::{
    attach_orientations, build_local_frame, lift_pixel, project_point, transfer_orientation,
    CameraModel, Pose6D, Rotation, TrajectorySE3, Vec3, FALLBACK_REF, WORLD_UP,
};
use skillbank_core::modelgw::{Embedder, FixtureBackend, ImageRef};
use skillbank_core::retrieve::{retrieve, RetrievalParams, RetrievalQuery};
use skillbank_core::skillparse::{parse_signature, VerbLexicon};
use skillbank_core::synthetic::corpus_50;
use skillbank_core::taxonomy::Repository;

const DIM: usize = 512;

fn bench_geometry(c: &mut Criterion) {
    let mut group = c.benchmark_group("geometry");
    let r_src = Rotation::about_z(0.7).mul(&Rotation::about_x(-0.4));
    let f_src = Rotation::about_y(1.1);
    let f_tgt = Rotation::about_z(0.3).mul(&Rotation::about_y(-0.9));
    group.bench_function("transfer_orientation", |b| {
        b.iter(|| transfer_orientation(black_box(&r_src), black_box(&f_src), black_box(&f_tgt)))
    });

    let camera = CameraModel::with_identity_extrinsic(200.0, 200.0, 160.0, 120.0, 320, 240);
    let point = Vec3::new(0.21, -0.13, 1.4);
    group.bench_function("project_lift_round_trip", |b| {
        b.iter(|| {
            let (u, v) = project_point(black_box(&camera), black_box(point)).unwrap();
            lift_pixel(&camera, (u, v), 1.4).unwrap()
        })
    });

    let waypoints: Vec<Vec3> = (0..16)
        .map(|i| Vec3::new(0.02 * i as f64, 0.01 * (i as f64).sin(), 0.1))
        .collect();
    group.bench_function("build_local_frame", |b| {
        b.iter(|| build_local_frame(black_box(&waypoints), 7, WORLD_UP, FALLBACK_REF).unwrap())
    });

    let poses: Vec<Pose6D> = waypoints
        .iter()
        .enumerate()
        .map(|(i, &p)| Pose6D {
            position: p,
            orientation: Rotation::about_z(0.1 * i as f64),
        })
        .collect();
    let ts: Vec<f64> = (0..16).map(|i| 0.125 * i as f64).collect();
    let source = TrajectorySE3::new(poses, ts).unwrap();
    let targets: Vec<Vec3> = (0..6)
        .map(|i| Vec3::new(0.0, 0.03 * i as f64, 0.1))
        .collect();
    group.bench_function("attach_orientations_6", |b| {
        b.iter(|| {
            attach_orientations(
                black_box(&targets),
                black_box(&source),
                WORLD_UP,
                FALLBACK_REF,
            )
            .unwrap()
        })
    });
    group.finish();
}

fn bench_parsing(c: &mut Criterion) {
    c.bench_function("parse_signature", |b| {
        b.iter(|| parse_signature(black_box("wipe(target=desk, tool=sponge)")).unwrap())
    });
}

fn bench_embedding(c: &mut Criterion) {
    let backend = FixtureBackend::new(DIM);
    c.bench_function("fixture_embed_512", |b| {
        b.iter(|| {
            backend
                .embed_text(black_box("wipe(target=desk, tool=sponge)"))
                .unwrap()
        })
    });
}

fn bench_taxonomy(c: &mut Criterion) {
    let corpus = corpus_50();
    let embedder = FixtureBackend::new(DIM);
    c.bench_function("insert_corpus_50", |b| {
        b.iter_batched(
            || corpus.slices.clone(),
            |slices| {
                let mut repo = Repository::new(DIM);
                for slice in slices {
                    repo.insert_slice(slice, VerbLexicon::bundled(), &embedder, 0.8)
                        .unwrap();
                }
                repo
            },
            BatchSize::SmallInput,
        )
    });
}

fn bench_retrieval(c: &mut Criterion) {
    let repo = corpus_repository(DIM);
    let embedder = FixtureBackend::new(DIM);
    let query = RetrievalQuery {
        signature: parse_signature("wipe(target=desk, tool=sponge)").unwrap(),
        scene_embedding: embedder
            .embed_image(&ImageRef::new("scenes/00_2.png"))
            .unwrap(),
    };
    let params = RetrievalParams::default();
    c.bench_function("retrieve_top3", |b| {
        b.iter(|| {
            retrieve(
                black_box(&repo),
                black_box(&query),
                VerbLexicon::bundled(),
                &embedder,
                &params,
                3,
            )
            .unwrap()
        })
    });
}

criterion_group!(
    benches,
    bench_geometry,
    bench_parsing,
    bench_embedding,
    bench_taxonomy,
    bench_retrieval
);
criterion_main!(benches);
