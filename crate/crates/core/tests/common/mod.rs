// SPDX-License-Identifier: Apache-2.0

//! Shared fixtures and reference implementations for the integration tests.
//!
//! The reference scores here are written as plain nested loops straight from
//! the score definitions. They share no code with the library beyond the data
//! types, so agreement between the two is a meaningful check.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use oodbench::embedding_store::{write_manifest, ManifestEntry};
use oodbench::{
    write_embedding_set, DatasetManifest, EmbeddingSet, ImageFeatures, ScoreConfig, ScoreFunction,
    Split, TextFeatures,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixture_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

/// Uniform entries in [-1, 1], redrawn in the (measure-zero) all-zero case.
pub fn uniform_vec(rng: &mut impl Rng, len: usize) -> Vec<f32> {
    loop {
        let v: Vec<f32> = (0..len).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        if v.iter().any(|&x| x != 0.0) {
            return v;
        }
    }
}

pub fn gaussian_vec(rng: &mut impl Rng, len: usize, scale: f64) -> Vec<f32> {
    (0..len)
        .map(|_| (rng.sample::<f64, _>(StandardNormal) * scale) as f32)
        .collect()
}

pub fn class_names(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("class{i}")).collect()
}

/// A random small instance: K <= 4, H*W <= 4, C <= 8.
pub struct SmallInstance {
    pub text: TextFeatures,
    pub image: ImageFeatures,
    pub config: ScoreConfig,
}

pub fn small_instance(rng: &mut impl Rng) -> SmallInstance {
    let k = rng.random_range(1..=4usize);
    let c = rng.random_range(1..=8usize);
    let (h, w) = *[
        (1u16, 1u16),
        (1, 2),
        (2, 1),
        (1, 3),
        (3, 1),
        (2, 2),
        (1, 4),
        (4, 1),
    ]
    .get(rng.random_range(0..8))
    .unwrap();
    let rows: Vec<Vec<f32>> = (0..k).map(|_| uniform_vec(rng, c)).collect();
    let text = TextFeatures::from_rows(class_names(k), &rows).unwrap();
    let regions = usize::from(h) * usize::from(w);
    let local: Vec<f32> = (0..regions).flat_map(|_| uniform_vec(rng, c)).collect();
    let image = ImageFeatures::new("x", (h, w), uniform_vec(rng, c), local).unwrap();
    // log-uniform tau in [0.05, 10]
    let tau = (rng.random_range((0.05f64).ln()..(10.0f64).ln())).exp();
    let lambda = rng.random_range(0.0..2.0);
    let function = ScoreFunction::ALL[rng.random_range(0..ScoreFunction::ALL.len())];
    SmallInstance {
        text,
        image,
        config: ScoreConfig::new(function, tau, lambda).unwrap(),
    }
}

fn ref_cos(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for j in 0..a.len() {
        dot += a[j] as f64 * b[j] as f64;
        na += a[j] as f64 * a[j] as f64;
        nb += b[j] as f64 * b[j] as f64;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Naive softmax probability of class `t`, no max subtraction.
fn ref_prob(sims: &[f64], t: usize, tau: f64) -> f64 {
    let mut denom = 0.0;
    for c in 0..sims.len() {
        denom += (sims[c] / tau).exp();
    }
    (sims[t] / tau).exp() / denom
}

fn ref_entropy(sims: &[f64], tau: f64) -> f64 {
    let mut h = 0.0;
    for t in 0..sims.len() {
        let p = ref_prob(sims, t, tau);
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    h
}

fn ref_var(sims: &[f64]) -> f64 {
    let n = sims.len() as f64;
    let mut mean = 0.0;
    for s in sims {
        mean += s;
    }
    mean /= n;
    let mut v = 0.0;
    for s in sims {
        v += (s - mean) * (s - mean);
    }
    v / n
}

/// Double-loop reference for every score function.
pub fn reference_score(image: &ImageFeatures, text: &TextFeatures, config: &ScoreConfig) -> f64 {
    let k = text.num_classes();
    let c = text.dim;
    let n = image.regions();
    let tau = config.tau;
    let mut g = vec![0.0; k];
    let mut l = vec![vec![0.0; k]; n];
    for t in 0..k {
        let y = &text.matrix[t * c..(t + 1) * c];
        g[t] = ref_cos(&image.global, y);
        for i in 0..n {
            l[i][t] = ref_cos(&image.local[i * c..(i + 1) * c], y);
        }
    }

    let mcm = {
        let mut best = f64::MIN;
        for t in 0..k {
            best = best.max(ref_prob(&g, t, tau));
        }
        best
    };
    let lmcm = {
        let mut best = f64::MIN;
        for i in 0..n {
            for t in 0..k {
                best = best.max(ref_prob(&l[i], t, tau));
            }
        }
        best
    };
    let class_avg = {
        let mut sum = vec![0.0; k];
        let mut count = vec![0usize; k];
        for i in 0..n {
            let mut pred = 0;
            for t in 1..k {
                if ref_prob(&l[i], t, tau) > ref_prob(&l[i], pred, tau) {
                    pred = t;
                }
            }
            sum[pred] += ref_prob(&l[i], pred, tau);
            count[pred] += 1;
        }
        let mut best = f64::MIN;
        for t in 0..k {
            if count[t] > 0 {
                best = best.max(sum[t] / count[t] as f64);
            }
        }
        best
    };

    match config.function {
        ScoreFunction::Mcm => mcm,
        ScoreFunction::Lmcm => lmcm,
        ScoreFunction::Glmcm => mcm + config.lambda * lmcm,
        ScoreFunction::GOrL => mcm.max(lmcm),
        ScoreFunction::Entropy => {
            let mut worst: f64 = 0.0;
            for row in &l {
                worst = worst.max(ref_entropy(row, tau));
            }
            -(ref_entropy(&g, tau) + worst)
        }
        ScoreFunction::Var => {
            let mut best: f64 = 0.0;
            for row in &l {
                best = best.max(ref_var(row));
            }
            ref_var(&g) + best
        }
        ScoreFunction::Cos => {
            let mut gmax = f64::MIN;
            let mut lmax = f64::MIN;
            for t in 0..k {
                gmax = gmax.max(g[t]);
                for row in &l {
                    lmax = lmax.max(row[t]);
                }
            }
            gmax + lmax
        }
        ScoreFunction::ClassAvg => class_avg,
        ScoreFunction::ClassAvgPlusMcm => class_avg + mcm,
    }
}

/// Pairwise AUROC: ties count one half. Computed as an exact count of
/// half-wins before a single division.
pub fn brute_auroc(id: &[f64], ood: &[f64]) -> f64 {
    let mut half_wins: u64 = 0;
    for &a in id {
        for &b in ood {
            if a > b {
                half_wins += 2;
            } else if a == b {
                half_wins += 1;
            }
        }
    }
    half_wins as f64 / (2 * id.len() * ood.len()) as f64
}

/// Exhaustive search over every observed ID score: (threshold, fpr).
pub fn brute_fpr_at_tpr(id: &[f64], ood: &[f64], target: f64) -> (f64, f64) {
    let mut best: Option<f64> = None;
    for &t in id {
        let tp = id.iter().filter(|&&s| s >= t).count();
        if tp as f64 / id.len() as f64 >= target && best.is_none_or(|b| t > b) {
            best = Some(t);
        }
    }
    let t = best.expect("the minimum ID score always qualifies");
    let fp = ood.iter().filter(|&&s| s >= t).count();
    (t, fp as f64 / ood.len() as f64)
}

/// Score lists with deliberate duplicates, drawn from a coarse grid.
pub fn tied_scores(rng: &mut impl Rng, max_n: usize) -> (Vec<f64>, Vec<f64>) {
    let n_id = rng.random_range(1..=max_n);
    let n_ood = rng.random_range(1..=max_n);
    let levels = rng.random_range(2..=40u32);
    let shift = rng.random_range(0.0..(levels as f64 / 4.0));
    let draw = |rng: &mut ChaCha8Rng, n: usize, offset: f64| -> Vec<f64> {
        (0..n)
            .map(|_| (rng.random_range(0..levels) as f64 + offset).floor() / levels as f64)
            .collect()
    };
    let mut local = ChaCha8Rng::seed_from_u64(rng.random());
    let id = draw(&mut local, n_id, shift);
    let ood = draw(&mut local, n_ood, 0.0);
    (id, ood)
}

/// Parameters of the synthetic benchmark in which ID evidence lives in a
/// single local region of an otherwise OOD-looking image.
pub struct LocalSignalFixture {
    pub classes: usize,
    pub dim: usize,
    pub grid: (u16, u16),
    pub n_id: usize,
    pub n_ood: usize,
    /// Weight of the class direction mixed into the ID "object" region.
    pub object_strength: f64,
}

impl Default for LocalSignalFixture {
    fn default() -> Self {
        LocalSignalFixture {
            classes: 10,
            dim: 32,
            grid: (4, 4),
            n_id: 200,
            n_ood: 200,
            object_strength: 1.0,
        }
    }
}

impl LocalSignalFixture {
    /// One set holding both splits plus its manifest.
    pub fn build(&self, seed: u64) -> (EmbeddingSet, DatasetManifest) {
        let mut rng = rng(seed);
        let noise = 1.0 / (self.dim as f64).sqrt();
        let rows: Vec<Vec<f32>> = (0..self.classes)
            .map(|_| gaussian_vec(&mut rng, self.dim, noise))
            .collect();
        let text = TextFeatures::from_rows(class_names(self.classes), &rows).unwrap();
        let regions = usize::from(self.grid.0) * usize::from(self.grid.1);

        let mut images = Vec::new();
        let mut entries = Vec::new();
        for i in 0..self.n_id + self.n_ood {
            let is_id = i < self.n_id;
            let global = gaussian_vec(&mut rng, self.dim, noise);
            let mut local: Vec<f32> = (0..regions)
                .flat_map(|_| gaussian_vec(&mut rng, self.dim, noise))
                .collect();
            let mut categories = Vec::new();
            if is_id {
                let class = rng.random_range(0..self.classes);
                let region = rng.random_range(0..regions);
                let span = region * self.dim..(region + 1) * self.dim;
                for (dst, &y) in local[span].iter_mut().zip(&rows[class]) {
                    *dst = (*dst as f64 * 0.3 + self.object_strength * y as f64) as f32;
                }
                categories.push(text.vocabulary.classes[class].clone());
            }
            let id = if is_id {
                format!("id{i:04}")
            } else {
                format!("ood{i:04}")
            };
            images.push(ImageFeatures::new(&id, self.grid, global, local).unwrap());
            entries.push(ManifestEntry {
                image_id: id,
                split: if is_id { Split::Id } else { Split::Ood },
                dataset: if is_id {
                    "synthetic-id".into()
                } else {
                    "synthetic-ood".into()
                },
                categories,
            });
        }
        (
            EmbeddingSet::new(text, images, BTreeMap::new()).unwrap(),
            DatasetManifest { entries },
        )
    }
}

/// ID and OOD images drawn from the same distribution.
pub fn identical_distribution(seed: u64, n_each: usize) -> (EmbeddingSet, DatasetManifest) {
    let mut rng = rng(seed);
    let (k, c) = (5, 16);
    let rows: Vec<Vec<f32>> = (0..k).map(|_| gaussian_vec(&mut rng, c, 1.0)).collect();
    let text = TextFeatures::from_rows(class_names(k), &rows).unwrap();
    let mut images = Vec::new();
    let mut entries = Vec::new();
    for i in 0..2 * n_each {
        let id = format!("img{i:05}");
        images.push(
            ImageFeatures::new(
                &id,
                (2, 2),
                gaussian_vec(&mut rng, c, 1.0),
                gaussian_vec(&mut rng, 4 * c, 1.0),
            )
            .unwrap(),
        );
        entries.push(ManifestEntry {
            image_id: id,
            split: if i % 2 == 0 { Split::Id } else { Split::Ood },
            dataset: "same".into(),
            categories: vec![],
        });
    }
    (
        EmbeddingSet::new(text, images, BTreeMap::new()).unwrap(),
        DatasetManifest { entries },
    )
}

/// Writes `set` and `manifest` under `dir` and returns `features:manifest`.
pub fn write_pair(
    dir: &Path,
    stem: &str,
    set: &EmbeddingSet,
    manifest: &DatasetManifest,
) -> String {
    let features = dir.join(format!("{stem}.glmc"));
    let csv = dir.join(format!("{stem}.csv"));
    write_embedding_set(set, std::fs::File::create(&features).unwrap()).unwrap();
    write_manifest(manifest, std::fs::File::create(&csv).unwrap()).unwrap();
    format!("{}:{}", features.display(), csv.display())
}

/// Only the entries of `split`.
pub fn manifest_split(manifest: &DatasetManifest, split: Split) -> DatasetManifest {
    DatasetManifest {
        entries: manifest
            .entries
            .iter()
            .filter(|e| e.split == split)
            .cloned()
            .collect(),
    }
}

pub fn run_cli(args: &[&str]) -> (i32, Vec<u8>, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("oodbench").chain(args.iter().copied());
    let code = oodbench::cli::run(argv, &mut out, &mut err);
    (code, out, String::from_utf8(err).unwrap())
}

/// A random set: K <= 4, C <= 6, up to 5 images on grids up to 3x3.
pub fn random_set(rng: &mut impl Rng, with_meta: bool) -> EmbeddingSet {
    let k = rng.random_range(1..=4usize);
    let c = rng.random_range(1..=6usize);
    let rows: Vec<Vec<f32>> = (0..k).map(|_| gaussian_nonzero(rng, c, 10.0)).collect();
    let text = TextFeatures::from_rows(class_names(k), &rows).unwrap();
    let images = (0..rng.random_range(0..=5usize))
        .map(|i| {
            let (h, w) = (rng.random_range(1..=3u16), rng.random_range(1..=3u16));
            let local = (0..h * w)
                .flat_map(|_| gaussian_nonzero(rng, c, 100.0))
                .collect();
            ImageFeatures::new(
                format!("img{i}"),
                (h, w),
                gaussian_nonzero(rng, c, 100.0),
                local,
            )
            .unwrap()
        })
        .collect();
    let mut meta = BTreeMap::new();
    if with_meta {
        meta.insert("backbone".into(), "synthetic".into());
    }
    EmbeddingSet::new(text, images, meta).unwrap()
}

fn gaussian_nonzero(rng: &mut impl Rng, len: usize, scale: f64) -> Vec<f32> {
    loop {
        let v = gaussian_vec(rng, len, scale);
        if v.iter().any(|&x| x != 0.0) {
            return v;
        }
    }
}

/// Byte offsets of every f32 in the encoding of a set without metadata.
pub fn float_offsets(set: &EmbeddingSet) -> Vec<usize> {
    let mut pos = 20;
    for name in &set.text.vocabulary.classes {
        pos += 4 + name.len();
    }
    let mut offsets = Vec::new();
    for _ in 0..set.text.matrix.len() {
        offsets.push(pos);
        pos += 4;
    }
    for image in &set.images {
        pos += 4 + image.image_id.len() + 4;
        for _ in 0..image.global.len() + image.local.len() {
            offsets.push(pos);
            pos += 4;
        }
    }
    offsets
}

/// Factors with short mantissas: multiplying a quantised f32 by one is exact.
pub const EXACT_FACTORS: [f32; 9] = [0.625, 0.75, 1.25, 1.5, 3.0, 5.0, 7.0, 10.0, 100.0];

/// Rounds to multiples of 2^-10, keeping the vector nonzero.
pub fn quantise(v: &[f32]) -> Vec<f32> {
    let mut q: Vec<f32> = v.iter().map(|x| (x * 1024.0).round() / 1024.0).collect();
    if q.iter().all(|&x| x == 0.0) {
        q[0] = 1.0;
    }
    q
}

pub fn scaled(v: &[f32], by: f32) -> Vec<f32> {
    v.iter().map(|x| x * by).collect()
}

/// A quantised copy of an instance and a copy in which every image feature
/// vector and text row is multiplied by its own exact positive factor.
pub fn exactly_scaled_pair(
    rng: &mut impl Rng,
    inst: &SmallInstance,
) -> [(TextFeatures, ImageFeatures); 2] {
    let c = inst.text.dim;
    let names = inst.text.vocabulary.classes.clone();
    let mut factor = || EXACT_FACTORS[rng.random_range(0..EXACT_FACTORS.len())];
    let base_rows: Vec<Vec<f32>> = inst.text.rows().map(quantise).collect();
    let rows: Vec<Vec<f32>> = base_rows.iter().map(|r| scaled(r, factor())).collect();
    let base_local: Vec<Vec<f32>> = inst.image.local.chunks_exact(c).map(quantise).collect();
    let local: Vec<f32> = base_local
        .iter()
        .flat_map(|r| scaled(r, factor()))
        .collect();
    let base_global = quantise(&inst.image.global);
    let grid = (inst.image.height, inst.image.width);
    let image = ImageFeatures::new("x", grid, scaled(&base_global, factor()), local).unwrap();
    let base = ImageFeatures::new("x", grid, base_global, base_local.concat()).unwrap();
    [
        (
            TextFeatures::from_rows(names.clone(), &base_rows).unwrap(),
            base,
        ),
        (TextFeatures::from_rows(names, &rows).unwrap(), image),
    ]
}
