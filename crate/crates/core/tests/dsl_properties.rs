mod common;

use common::{random_expr, random_window, LOOKBACK};
use efs_core::dsl::{evaluate, normalize_values, parse};
use efs_core::market::WindowRef;
use efs_core::metrics::spearman_rank_corr;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn print_parse_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let expr = random_expr(&mut rng);
        let text = expr.to_string();
        let back = parse(&text).unwrap();
        prop_assert_eq!(&back, &expr);
        prop_assert_eq!(back.to_string(), text);
    }

    #[test]
    fn evaluation_is_pure_and_finite(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let expr = random_expr(&mut rng);
        let (prices, returns) = random_window(&mut rng, LOOKBACK);
        let window = WindowRef { prices: &prices, returns: &returns };
        let first = evaluate(&expr, window);
        prop_assert!(first.is_finite());
        prop_assert_eq!(first.to_bits(), evaluate(&expr, window).to_bits());
    }

    #[test]
    fn normalization_bounds_and_order(values in prop::collection::vec(-1e6f64..1e6, 2..60)) {
        let norm = normalize_values(&values);
        prop_assert!(norm.iter().all(|v| (-1.0..=1.0).contains(v)));
        let distinct = values.iter().any(|v| *v != values[0]);
        if distinct {
            let rho = spearman_rank_corr(&values, &norm).value;
            prop_assert!((rho - 1.0).abs() < 1e-12, "rho {}", rho);
        } else {
            prop_assert!(norm.iter().all(|v| *v == 0.0));
        }
    }
}

#[test]
fn whitespace_and_spacing_normalize() {
    let expr = parse("  div( ts_mean(returns,7) ,ts_std( returns , 7 ) ) ").unwrap();
    assert_eq!(expr.to_string(), "div(ts_mean(returns, 7), ts_std(returns, 7))");
}

#[test]
fn invalid_text_is_rejected() {
    for text in ["", "ts_mean(returns, 5)", "foo(prices)", "add(prices)", "ts_mean(returns, 7", "prices prices"] {
        assert!(parse(text).is_err(), "{text}");
    }
}
