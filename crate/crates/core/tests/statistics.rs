mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use bugscope::analytics::{
    attributes_from_flags, bonferroni, cohens_d, count_gaps, genre_comparison, ks_normality,
    map_user_windows, t_test, Attribute, TTestKind, UserWindow, VideoAttributes,
};
use bugscope::segmentation::{Genre, Label, Segment, VideoMeta};

fn metas_and_attrs(action: &[f64], sports: &[f64]) -> (Vec<VideoMeta>, Vec<VideoAttributes>) {
    let mut metas = Vec::new();
    let mut attrs = Vec::new();
    for (genre, values) in [(Genre::Action, action), (Genre::Sports, sports)] {
        for (i, &ratio) in values.iter().enumerate() {
            let id = format!("{genre:?}_{i}");
            // 100 segments with the given buggy share, bugs in one block from the start.
            let buggy = (ratio * 100.0).round() as usize;
            let flags: Vec<bool> = (0..100).map(|s| s < buggy).collect();
            let starts: Vec<f64> = (0..100).map(|s| s as f64 * 5.0).collect();
            attrs.push(attributes_from_flags(&id, &flags, &starts, 500.0));
            metas.push(VideoMeta {
                video_id: id,
                duration: 500.0,
                genre,
                game_title: "g".into(),
            });
        }
    }
    (metas, attrs)
}

fn normal_sample(rng: &mut ChaCha8Rng, n: usize, mean: f64, sd: f64) -> Vec<f64> {
    let d = Normal::new(mean, sd).unwrap();
    (0..n).map(|_| d.sample(rng)).collect()
}

#[test]
fn ks_accepts_normal_quantiles() {
    // Evenly spaced standard normal quantiles, scaled and shifted.
    let normal = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
    use statrs::distribution::ContinuousCDF;
    let sample: Vec<f64> = (1..=100)
        .map(|i| 3.0 + 2.0 * normal.inverse_cdf((i as f64 - 0.5) / 100.0))
        .collect();
    let r = ks_normality(&sample).unwrap();
    assert!(r.statistic < 0.05, "D = {}", r.statistic);
    assert!(r.p_value > 0.5, "p = {}", r.p_value);
}

#[test]
fn ks_rejects_a_bimodal_sample() {
    let sample: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 0.0 } else { 10.0 } + i as f64 * 1e-3).collect();
    assert!(ks_normality(&sample).unwrap().p_value < 0.01);
}

#[test]
fn t_test_is_antisymmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let na = rng.random_range(2..30);
        let nb = rng.random_range(2..30);
        let (ma, sa) = (rng.random_range(-2.0..2.0), rng.random_range(0.1..3.0));
        let a = normal_sample(&mut rng, na, ma, sa);
        let (mb, sb) = (rng.random_range(-2.0..2.0), rng.random_range(0.1..3.0));
        let b = normal_sample(&mut rng, nb, mb, sb);
        for kind in [TTestKind::Welch, TTestKind::Student] {
            let ab = t_test(&a, &b, kind).unwrap();
            let ba = t_test(&b, &a, kind).unwrap();
            assert!((ab.statistic + ba.statistic).abs() < 1e-12);
            assert!((ab.p_value - ba.p_value).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&ab.p_value));
            assert!((cohens_d(&a, &b) + cohens_d(&b, &a)).abs() < 1e-12);
        }
    }
}

#[test]
fn t_test_matches_textbook_example() {
    let (t, p) = common::textbook_t_fixture();
    let a = [1.0, 2.0, 3.0, 4.0, 5.0];
    let b = [3.0, 4.0, 5.0, 6.0, 7.0];
    for kind in [TTestKind::Welch, TTestKind::Student] {
        let r = t_test(&a, &b, kind).unwrap();
        assert!((r.statistic - t).abs() < 1e-12);
        assert!((r.p_value - p).abs() < 1e-6, "{} vs {p}", r.p_value);
        assert!((r.degrees_of_freedom.unwrap() - 8.0).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn bonferroni_rejections_are_a_subset(
        ps in prop::collection::vec(0.0f64..=1.0, 1..20),
        alpha in 0.001f64..0.5,
    ) {
        let corrected = bonferroni(&ps, alpha).unwrap();
        for (p, rejected) in ps.iter().zip(corrected) {
            if rejected {
                prop_assert!(*p < alpha);
            }
        }
    }

    #[test]
    fn flipping_a_clean_segment_raises_the_ratio(
        flags in prop::collection::vec(any::<bool>(), 1..60),
        pick in any::<prop::sample::Index>(),
    ) {
        let starts: Vec<f64> = (0..flags.len()).map(|i| i as f64 * 6.0).collect();
        let duration = flags.len() as f64 * 6.0;
        let clean: Vec<usize> = (0..flags.len()).filter(|&i| !flags[i]).collect();
        prop_assume!(!clean.is_empty());
        let i = clean[pick.index(clean.len())];
        let before = attributes_from_flags("v", &flags, &starts, duration);
        let mut flipped = flags.clone();
        flipped[i] = true;
        let after = attributes_from_flags("v", &flipped, &starts, duration);
        prop_assert_eq!(after.buggy_segments, before.buggy_segments + 1);
        let step = 1.0 / flags.len() as f64;
        prop_assert!((after.buggy_ratio - before.buggy_ratio - step).abs() < 1e-12);
        prop_assert!(after.start_time_ratio.unwrap() <= before.start_time_ratio.unwrap_or(1.0));
    }

    #[test]
    fn gap_count_matches_run_length_oracle(flags in prop::collection::vec(any::<bool>(), 0..200)) {
        prop_assert_eq!(count_gaps(&flags), common::gaps_rle(&flags));
    }

    #[test]
    fn more_windows_mark_more_segments(
        cuts in prop::collection::btree_set(1u32..199, 1..30),
        windows in prop::collection::vec((0u32..200, 1u32..60), 0..12),
        extra in (0u32..200, 1u32..60),
    ) {
        let mut bounds = vec![0u32];
        bounds.extend(cuts.iter().copied());
        bounds.push(200);
        let segments: Vec<Segment> = bounds
            .windows(2)
            .enumerate()
            .map(|(i, w)| Segment {
                video_id: "v".into(),
                index: i,
                start: w[0] as f64,
                end: w[1] as f64,
                text: String::new(),
                label: Some(Label::Clean),
            })
            .collect();
        let window = |(a, len): (u32, u32)| UserWindow {
            participant_id: "p".into(),
            video_id: "v".into(),
            start: a as f64,
            end: (a + len).min(200) as f64,
        };
        let mut ws: Vec<UserWindow> = windows.into_iter().filter(|w| w.0 < 200).map(window).collect();
        let before = map_user_windows(&ws, &segments, 200.0).unwrap();
        if extra.0 < 200 {
            ws.push(window(extra));
        }
        let after = map_user_windows(&ws, &segments, 200.0).unwrap();
        for (b, a) in before.iter().zip(&after) {
            prop_assert!(!b || *a);
        }
    }
}

#[test]
fn genre_fixture_means() {
    let action = [0.40, 0.45, 0.50, 0.38, 0.42];
    let sports = [0.30, 0.25, 0.32, 0.28, 0.30];
    let (metas, attrs) = metas_and_attrs(&action, &sports);
    let cmp = genre_comparison(&attrs, &metas, 0.05, TTestKind::Welch).unwrap();
    let row = cmp.row(Attribute::BuggyRatio).unwrap();
    assert!((row.mean_action - 0.43).abs() < 1e-12);
    assert!((row.mean_sports - 0.29).abs() < 1e-12);
    assert_eq!((row.n_action, row.n_sports), (5, 5));
    assert!(row.t_test.as_ref().unwrap().statistic > 0.0);
}

#[test]
fn identical_genres_are_not_rejected() {
    let values = [0.1, 0.2, 0.3, 0.25, 0.15, 0.35];
    let (metas, attrs) = metas_and_attrs(&values, &values);
    let cmp = genre_comparison(&attrs, &metas, 0.05, TTestKind::Welch).unwrap();
    for row in &cmp.rows {
        assert!(!row.reject, "{}", row.attribute);
        if let Some(t) = &row.t_test {
            assert_eq!(t.statistic, 0.0);
        }
    }
}

#[test]
fn large_shift_is_rejected_after_correction() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let clamp = |v: Vec<f64>| v.into_iter().map(|x| x.clamp(0.01, 0.99)).collect::<Vec<_>>();
    let action = clamp(normal_sample(&mut rng, 69, 0.5, 0.05));
    let sports = clamp(normal_sample(&mut rng, 69, 0.4, 0.05));
    let (metas, attrs) = metas_and_attrs(&action, &sports);
    let cmp = genre_comparison(&attrs, &metas, 0.05, TTestKind::Welch).unwrap();
    assert!((cmp.corrected_alpha - 0.05 / 5.0).abs() < 1e-15);
    let row = cmp.row(Attribute::BuggyRatio).unwrap();
    assert!(row.reject);
    assert!(row.t_test.as_ref().unwrap().effect_size.unwrap() > 1.5);
}

#[test]
fn bug_free_videos_leave_start_ratio_out() {
    let (metas, attrs) = metas_and_attrs(&[0.0, 0.2, 0.3], &[0.0, 0.0, 0.1, 0.4]);
    let cmp = genre_comparison(&attrs, &metas, 0.05, TTestKind::Welch).unwrap();
    let start = cmp.row(Attribute::StartTimeRatio).unwrap();
    assert_eq!((start.n_action, start.n_sports), (2, 2));
    let ratio = cmp.row(Attribute::BuggyRatio).unwrap();
    assert_eq!((ratio.n_action, ratio.n_sports), (3, 4));
}
