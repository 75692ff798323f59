#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use curate::embeddings::{save_embeddings, EmbeddingSet, Format, Modality};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const BIN: &str = env!("CARGO_BIN_EXE_curate");

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect()
}

pub fn unit(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / norm).collect()
}

pub fn unit_set(rng: &mut ChaCha8Rng, n: usize, d: usize, modality: Modality) -> EmbeddingSet {
    let rows: Vec<Vec<f64>> = gaussian_rows(rng, n, d).iter().map(|r| unit(r)).collect();
    EmbeddingSet::from_f64_rows(modality, &rows).unwrap()
}

/// Image rows and text rows that are noisy copies of them, with a noise level
/// that varies per pair so pair quality is spread out.
pub fn paired_pool(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (EmbeddingSet, EmbeddingSet) {
    let img: Vec<Vec<f64>> = gaussian_rows(rng, n, d).iter().map(|r| unit(r)).collect();
    let txt: Vec<Vec<f64>> = img
        .iter()
        .map(|x| {
            let level: f64 = rng.random_range(0.05..1.5);
            let noisy: Vec<f64> = x.iter().map(|v| v + level * rng.sample::<f64, _>(StandardNormal) / (d as f64).sqrt()).collect();
            unit(&noisy)
        })
        .collect();
    (EmbeddingSet::from_f64_rows(Modality::Vision, &img).unwrap(), EmbeddingSet::from_f64_rows(Modality::Language, &txt).unwrap())
}

/// Pairs shaped like real contrastive embeddings: every row carries a shared
/// offset `offset * e_0`, so unrelated pairs still score about
/// `offset^2 / (1 + offset^2)`, and each text keeps a random fraction
/// `c in [0, c_max)` of its image's own direction.
pub fn offset_pool(rng: &mut ChaCha8Rng, n: usize, d: usize, offset: f64, c_max: f64) -> (EmbeddingSet, EmbeddingSet) {
    let scale = 1.0 / (d as f64).sqrt();
    let mut img = Vec::with_capacity(n);
    let mut txt = Vec::with_capacity(n);
    for _ in 0..n {
        let u: Vec<f64> = (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let w: Vec<f64> = (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let c: f64 = rng.random_range(0.0..c_max);
        let mut x = u.clone();
        let mut t: Vec<f64> = u.iter().zip(&w).map(|(u, w)| c * u + (1.0 - c * c).sqrt() * w).collect();
        x[0] += offset;
        t[0] += offset;
        img.push(unit(&x));
        txt.push(unit(&t));
    }
    (EmbeddingSet::from_f64_rows(Modality::Vision, &img).unwrap(), EmbeddingSet::from_f64_rows(Modality::Language, &txt).unwrap())
}

pub fn save(set: &EmbeddingSet, path: &Path) {
    save_embeddings(set, path, Format::Emb1).unwrap();
}

pub fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().expect("failed to start the curate binary")
}

pub fn run_ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(out.status.success(), "curate {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}
