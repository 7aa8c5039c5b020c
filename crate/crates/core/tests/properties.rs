//! Property tests over randomized inputs.

mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use common::*;
use isorec::augment::{augment_text, AugmentProfile, ProfileName, SynonymLexicon};
use isorec::catalog::{clean_text, parse_courses, split_statements, CatalogOptions, CourseKey, StatementRecord};
use isorec::embed::{masked_mean_pool, TokenEmbeddingSequence};
use isorec::eval::{f1_at_n, hit_rate, mrr, RankedList};
use isorec::geometry::isoscore;
use isorec::linalg::Matrix;
use isorec::model::{forward, HeadDims};
use isorec::objective::{isotropy_loss, ntxent_loss};
use isorec::serve::{recommend, CourseIndex, IndexEntry};
use nalgebra::DMatrix;

fn statement(i: usize) -> StatementRecord {
    let k = CourseKey::parse(&format!("ABC {}", 1000 + i % 7)).unwrap();
    StatementRecord { id: format!("s{i}"), text: format!("text {i}"), liked_courses: vec![k.clone()], contrastive_label: k }
}

fn profile() -> impl Strategy<Value = AugmentProfile> {
    (0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(d, s, i, w)| AugmentProfile {
        name: ProfileName::Heavy,
        p_delete: d,
        p_synonym: s,
        p_insert: i,
        p_swap: w,
    })
}

fn words() -> impl Strategy<Value = String> {
    prop::collection::vec("[a-z]{1,8}", 1..30).prop_map(|w| w.join(" "))
}

proptest! {
    #[test]
    fn clean_text_is_idempotent(s in any::<String>()) {
        let once = clean_text(&s);
        prop_assert_eq!(clean_text(&once), once);
    }

    #[test]
    fn retained_courses_are_well_formed(faculty in any::<String>(), code in any::<String>(), desc in any::<String>()) {
        let line = serde_json::json!({ "faculty": faculty, "code": code, "title": "T", "description": desc });
        if let Ok(courses) = parse_courses(line.to_string().as_bytes(), &CatalogOptions::default()) {
            for c in courses {
                prop_assert!(CourseKey::parse(c.key().as_str()).is_some());
                prop_assert!(!c.text_for_encoder.is_empty());
                prop_assert_eq!(clean_text(&c.text_for_encoder), c.text_for_encoder.clone());
            }
        }
    }

    #[test]
    fn split_is_a_partition(n in 1usize..1000, seed in any::<u64>(), fraction in 0.01f64..0.99) {
        let records: Vec<_> = (0..n).map(statement).collect();
        let split = split_statements(&records, seed, fraction).unwrap();
        prop_assert_eq!(split.train.len() + split.test.len(), n);
        let ids: BTreeSet<_> = split.train.iter().chain(&split.test).map(|s| s.id.clone()).collect();
        prop_assert_eq!(ids.len(), n);
    }

    #[test]
    fn augmentation_never_empties_text(text in words(), p in profile(), seed in any::<u64>()) {
        let out = augment_text(&text, &p, &SynonymLexicon::builtin(), seed).unwrap();
        prop_assert!(!out.trim().is_empty());
        prop_assert_eq!(augment_text(&text, &p, &SynonymLexicon::builtin(), seed).unwrap(), out);
    }

    #[test]
    fn deletion_only_keeps_a_sub_multiset(text in words(), p in 0.0..=1.0f64, seed in any::<u64>()) {
        let profile = AugmentProfile { p_delete: p, ..AugmentProfile::identity(ProfileName::Heavy) };
        let out = augment_text(&text, &profile, &SynonymLexicon::builtin(), seed).unwrap();
        let mut counts: BTreeMap<&str, i64> = BTreeMap::new();
        text.split_whitespace().for_each(|w| *counts.entry(w).or_default() += 1);
        for w in out.split_whitespace() {
            let c = counts.entry(w).or_default();
            *c -= 1;
            prop_assert!(*c >= 0, "{w} appears more often than in the input");
        }
    }

    #[test]
    fn masked_tokens_do_not_change_pooling(
        t in 1usize..16,
        extra in 1usize..8,
        width in prop::sample::select(vec![4usize, 768]),
        seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let hidden: Vec<f32> = (0..t * width).map(|_| gaussian(&mut r) as f32).collect();
        let mut mask = vec![1u8; t];
        for m in mask.iter_mut().skip(1) {
            *m = u8::from(gaussian(&mut r) > -0.5);
        }
        let base = TokenEmbeddingSequence::new("x", width, hidden.clone(), mask.clone()).unwrap();
        let mut longer = hidden;
        longer.extend((0..extra * width).map(|_| gaussian(&mut r) as f32));
        mask.extend(std::iter::repeat_n(0u8, extra));
        let padded = TokenEmbeddingSequence::new("x", width, longer, mask).unwrap();
        prop_assert_eq!(masked_mean_pool(&base).unwrap(), masked_mean_pool(&padded).unwrap());
    }

    #[test]
    fn pooling_identical_rows_returns_the_row(t in 1usize..32, seed in any::<u64>()) {
        let mut r = rng(seed);
        let row: Vec<f32> = (0..8).map(|_| gaussian(&mut r) as f32).collect();
        let mut mask: Vec<u8> = (0..t).map(|_| u8::from(gaussian(&mut r) > 0.0)).collect();
        mask[t - 1] = 1;
        let seq = TokenEmbeddingSequence::new("x", 8, row.repeat(t), mask).unwrap();
        let pooled = masked_mean_pool(&seq).unwrap().vector;
        for (p, v) in pooled.iter().zip(&row) {
            prop_assert!((p - f64::from(*v)).abs() <= 1e-6 * v.abs().max(1.0) as f64);
        }
    }

    #[test]
    fn head_output_is_unit_and_scale_free(seed in any::<u64>(), c in 0.01f64..100.0) {
        let mut r = rng(seed);
        let dims = HeadDims::new(6, 8, 4);
        let w = random_head(&mut r, dims);
        let x: Vec<f64> = (0..6).map(|_| gaussian(&mut r)).collect();
        let Ok(trace) = forward(&w, &x) else { return Ok(()) };
        prop_assert!((trace.output.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() < 1e-9);
        let mut scaled = w.clone();
        scaled.w2.iter_mut().chain(scaled.b2.iter_mut()).for_each(|v| *v *= c);
        let other = forward(&scaled, &x).unwrap();
        for (a, b) in trace.output.iter().zip(&other.output) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ntxent_is_permutation_equivariant(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = 8;
        let z: Vec<Vec<f64>> = (0..n).map(|_| unit_vector(&mut r, 5)).collect();
        let labels = [0, 0, 1, 1, 2, 2, 0, 3];
        let (loss, grad) = ntxent_loss(&Matrix::from_rows(&z).unwrap(), &labels, 0.1).unwrap();
        let perm = [3usize, 7, 0, 5, 1, 6, 2, 4];
        let pz: Vec<_> = perm.iter().map(|&i| z[i].clone()).collect();
        let pl: Vec<_> = perm.iter().map(|&i| labels[i]).collect();
        let (ploss, pgrad) = ntxent_loss(&Matrix::from_rows(&pz).unwrap(), &pl, 0.1).unwrap();
        prop_assert!((loss - ploss).abs() < 1e-12);
        for (row, &i) in perm.iter().enumerate() {
            for (a, b) in pgrad.row(row).iter().zip(grad.row(i)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ntxent_is_rotation_invariant(seed in any::<u64>()) {
        let mut r = rng(seed);
        let d = 6;
        let z: Vec<Vec<f64>> = (0..8).map(|_| unit_vector(&mut r, d)).collect();
        let q = random_rotation(&mut r, d);
        let rotated: Vec<Vec<f64>> = z
            .iter()
            .map(|row| (&q * nalgebra::DVector::from_column_slice(row)).iter().copied().collect())
            .collect();
        let labels = [0, 0, 1, 1, 0, 1, 2, 2];
        let (a, _) = ntxent_loss(&Matrix::from_rows(&z).unwrap(), &labels, 0.05).unwrap();
        let (b, _) = ntxent_loss(&Matrix::from_rows(&rotated).unwrap(), &labels, 0.05).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn isotropy_loss_detects_translation(seed in any::<u64>(), shift in prop::collection::vec(-3.0f64..3.0, 4)) {
        prop_assume!(shift.iter().any(|s| s.abs() > 1e-3));
        let mut r = rng(seed);
        let mut rows: Vec<Vec<f64>> = (0..10).map(|_| (0..4).map(|_| gaussian(&mut r)).collect()).collect();
        for c in 0..4 {
            let mean = rows.iter().map(|row| row[c]).sum::<f64>() / 10.0;
            rows.iter_mut().for_each(|row| row[c] -= mean);
        }
        let moved: Vec<Vec<f64>> = rows.iter().map(|row| row.iter().zip(&shift).map(|(v, s)| v + s).collect()).collect();
        let (base, _) = isotropy_loss(&Matrix::from_rows(&rows).unwrap()).unwrap();
        let (shifted, _) = isotropy_loss(&Matrix::from_rows(&moved).unwrap()).unwrap();
        prop_assert!(shifted > base);
    }

    #[test]
    fn metrics_ignore_query_order(seed in any::<u64>(), n in 1usize..8) {
        let mut r = rng(seed);
        let keys: Vec<CourseKey> = (0..10).map(|i| CourseKey::parse(&format!("ABC {}", 1000 + i)).unwrap()).collect();
        let mut lists: Vec<RankedList> = (0..12)
            .map(|q| {
                let scored = keys.iter().map(|k| (k.clone(), gaussian(&mut r))).collect();
                let relevant = keys.iter().filter(|_| gaussian(&mut r) > 0.8).cloned().collect();
                RankedList::new(format!("q{q}"), scored, relevant)
            })
            .collect();
        let before = (hit_rate(&lists, n).unwrap(), f1_at_n(&lists, n).unwrap(), mrr(&lists).unwrap());
        lists.reverse();
        lists.rotate_left(5);
        let after = (hit_rate(&lists, n).unwrap(), f1_at_n(&lists, n).unwrap(), mrr(&lists).unwrap());
        prop_assert!((before.0 - after.0).abs() < 1e-12);
        prop_assert!((before.1 - after.1).abs() < 1e-12);
        prop_assert!((before.2 - after.2).abs() < 1e-12);
        prop_assert!(after.2 >= hit_rate(&lists, 1).unwrap() - 1e-12);
    }

    #[test]
    fn isoscore_ignores_rotation_and_scale(seed in any::<u64>(), c in 0.001f64..1000.0) {
        let mut r = rng(seed);
        let d = 5;
        let scales: Vec<f64> = (0..d).map(|i| 1.0 + i as f64).collect();
        let pts: Vec<Vec<f64>> = (0..40).map(|_| scales.iter().map(|s| s * gaussian(&mut r)).collect()).collect();
        let x = DMatrix::from_fn(40, d, |i, j| pts[i][j]);
        let rotated = &x * random_rotation(&mut r, d);
        let base = isoscore(&Matrix::from_rows(&pts).unwrap()).unwrap();
        let rot_rows: Vec<Vec<f64>> = (0..40).map(|i| rotated.row(i).iter().copied().collect()).collect();
        let scaled: Vec<Vec<f64>> = pts.iter().map(|row| row.iter().map(|v| v * c).collect()).collect();
        prop_assert!((isoscore(&Matrix::from_rows(&rot_rows).unwrap()).unwrap() - base).abs() < 1e-6);
        prop_assert!((isoscore(&Matrix::from_rows(&scaled).unwrap()).unwrap() - base).abs() < 1e-6);
    }

    #[test]
    fn moving_a_course_toward_the_query_never_lowers_its_rank(seed in any::<u64>(), target in 0usize..6, t in 0.0f64..1.0) {
        let mut r = rng(seed);
        let query = unit_vector(&mut r, 4);
        let vectors: Vec<Vec<f64>> = (0..6).map(|_| unit_vector(&mut r, 4)).collect();
        let index_with = |vs: &[Vec<f64>]| {
            let entries = vs
                .iter()
                .enumerate()
                .map(|(i, v)| IndexEntry {
                    key: CourseKey::parse(&format!("ABC {}", 1000 + i)).unwrap(),
                    title: String::new(),
                    snippet: String::new(),
                    vector: v.iter().map(|&x| x as f32).collect(),
                })
                .collect();
            CourseIndex::from_entries(entries).unwrap()
        };
        let position = |index: &CourseIndex| index.rank(&query).unwrap().iter().position(|(i, _)| *i == target).unwrap();
        let before = position(&index_with(&vectors));
        let mut moved = vectors.clone();
        let mixed: Vec<f64> = vectors[target].iter().zip(&query).map(|(v, q)| (1.0 - t) * v + t * q).collect();
        let len = mixed.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(len > 1e-3);
        moved[target] = mixed.iter().map(|v| v / len).collect();
        prop_assert!(position(&index_with(&moved)) <= before);
    }
}

#[test]
fn recommend_is_deterministic() {
    let index = toy_index();
    let encoder = toy_encoder();
    let a = recommend(&index, TOY_QUERY, &encoder, 3).unwrap();
    let b = recommend(&index, TOY_QUERY, &encoder, 3).unwrap();
    assert_eq!(a, b);
}
