use std::collections::BTreeMap;

use scenesynth::prompt::{combine_descriptions, sample_caption_prompts, DescriptionPool, PromptError, PromptStrategy};

fn pool(n: usize) -> DescriptionPool {
    DescriptionPool {
        objects: (0..n).map(|i| format!("object {i}")).collect(),
        surfaces: (0..n).map(|i| format!("surface {i}")).collect(),
    }
}

/// With 100 cells, each within 3 sigma holds for roughly three seeds in four.
const SEED: u64 = 5;

#[test]
fn pair_frequencies_are_uniform() {
    let draws = 10_000;
    let prompts = combine_descriptions(&pool(10), draws, SEED).unwrap();
    let mut counts = BTreeMap::<(usize, usize), usize>::new();
    for p in &prompts {
        assert_eq!(p.strategy, PromptStrategy::LlmCombined);
        *counts.entry((p.source_ids[0], p.source_ids[1])).or_default() += 1;
    }
    assert_eq!(counts.len(), 100);
    let p = 0.01;
    let sigma = (p * (1.0 - p) / draws as f64).sqrt();
    let mut chi2 = 0.0;
    for (pair, c) in counts {
        let f = c as f64 / draws as f64;
        assert!((f - p).abs() <= 3.0 * sigma, "{pair:?}: {f}");
        chi2 += (c as f64 - 100.0).powi(2) / 100.0;
    }
    // 99 degrees of freedom, upper 0.1% point
    assert!(chi2 < 148.2, "chi2 {chi2}");
}

#[test]
fn pair_counts_pass_goodness_of_fit_for_many_seeds() {
    for seed in 0..20 {
        let mut counts = [0usize; 100];
        for p in combine_descriptions(&pool(10), 10_000, seed).unwrap() {
            counts[p.source_ids[0] * 10 + p.source_ids[1]] += 1;
        }
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - 100.0).powi(2) / 100.0).sum();
        assert!(chi2 < 148.2, "seed {seed}: chi2 {chi2}");
    }
}

#[test]
fn single_pair_pool_and_seed_determinism() {
    let one = combine_descriptions(&pool(1), 4, 0).unwrap();
    assert!(one.iter().all(|p| p.combined == "object 0, on surface 0"));
    assert_eq!(combine_descriptions(&pool(5), 50, 9).unwrap(), combine_descriptions(&pool(5), 50, 9).unwrap());
    assert_ne!(combine_descriptions(&pool(5), 50, 9).unwrap(), combine_descriptions(&pool(5), 50, 10).unwrap());
    let empty = DescriptionPool { objects: vec![], surfaces: vec!["x".into()] };
    assert!(matches!(combine_descriptions(&empty, 1, 0), Err(PromptError::EmptyPool(_))));
}

#[test]
fn caption_file_sampling() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("captions.txt");
    let text: String = (0..3000).map(|i| format!("a mug number {i}\n\n")).collect();
    std::fs::write(&path, text).unwrap();
    let prompts = sample_caption_prompts(&path, 5000, 1).unwrap();
    assert_eq!(prompts.len(), 5000);
    assert!(prompts.iter().all(|p| p.combined.starts_with("a mug number")));
    assert_eq!(prompts, sample_caption_prompts(&path, 5000, 1).unwrap());

    let single = dir.path().join("one.txt");
    std::fs::write(&single, "\n  \nonly caption\n").unwrap();
    let p = sample_caption_prompts(&single, 3, 8).unwrap();
    assert!(p.iter().all(|p| p.combined == "only caption"));

    let blank = dir.path().join("blank.txt");
    std::fs::write(&blank, "\n\n").unwrap();
    assert!(matches!(sample_caption_prompts(&blank, 3, 8), Err(PromptError::EmptyFile(_))));
}

#[test]
fn pool_loads_from_json_and_text() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("pool.json");
    std::fs::write(&json, r#"{"objects": ["a red mug"], "surfaces": ["oak", "marble"]}"#).unwrap();
    let p = DescriptionPool::from_json_file(&json).unwrap();
    assert_eq!(p.surfaces.len(), 2);

    let (o, s) = (dir.path().join("o.txt"), dir.path().join("s.txt"));
    std::fs::write(&o, "a red mug\n").unwrap();
    std::fs::write(&s, "oak\n\nmarble\n").unwrap();
    assert_eq!(DescriptionPool::from_text_files(&o, &s).unwrap(), p);
}
