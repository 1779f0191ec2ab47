mod common;

use common::{random_market, random_window, LOOKBACK};
use efs_core::dsl::evaluate;
use efs_core::evolution::{run_evolution, EvolutionConfig, EvolutionOutput, Phase};
use efs_core::generator::{
    ChatTransport, FactorGenerator, GenerationRequest, OfflineGenerator, Prompt, RemoteGenerator, TransportError,
    Validator,
};
use efs_core::market::{MarketData, WindowRef};
use efs_core::seeds::all_seed_factors;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Answers every prompt with fresh factors and keeps what it was shown.
#[derive(Default)]
struct Stub {
    calls: usize,
    prompts: Vec<Prompt>,
}

impl ChatTransport for Stub {
    fn complete(&mut self, prompt: &Prompt) -> Result<String, TransportError> {
        self.prompts.push(prompt.clone());
        self.calls += 1;
        if self.calls.is_multiple_of(4) {
            return Err(TransportError("timeout".into()));
        }
        let items: Vec<String> = (0..5)
            .map(|k| {
                let id = self.calls * 10 + k;
                format!("\"stub{id}_7_v1 = mul(ts_mean(returns, 7), {id}.25)\"")
            })
            .collect();
        Ok(format!("Here you go:\n[{}]", items.join(", ")))
    }
}

fn cfg() -> EvolutionConfig {
    EvolutionConfig { portfolio_size: 5, ..EvolutionConfig::default() }
}

fn check_run(data: &MarketData, cfg: &EvolutionConfig, out: &EvolutionOutput) {
    let seeds = all_seed_factors().len();
    assert_eq!(out.ledger.rows.len(), data.n_periods());
    assert_eq!(out.ledger.replay_mismatch(1.0, 1e-12), None);
    for row in &out.ledger.rows {
        assert!(row.pool_size >= seeds && row.pool_size <= cfg.max_pool_size + cfg.candidates);
        if row.phase == Phase::Active {
            assert!(row.holdings.len() <= cfg.portfolio_size);
            let total: f64 = row.holdings.iter().map(|h| h.weight).sum();
            assert!((total - 1.0).abs() <= 1e-9);
        }
    }
    for record in &out.records {
        assert!(record.pool.len() >= seeds && record.pool.len() <= cfg.max_pool_size + cfg.candidates);
    }
}

#[test]
fn remote_and_offline_drive_the_same_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let data = random_market(&mut rng, 12, 110, LOOKBACK);
    let cfg = cfg();
    let offline = run_evolution(&data, &cfg, all_seed_factors(), &mut OfflineGenerator::default(), &mut |_| {}).unwrap();
    check_run(&data, &cfg, &offline);

    let mut remote = RemoteGenerator::new(Stub::default());
    let out = run_evolution(&data, &cfg, all_seed_factors(), &mut remote, &mut |_| {}).unwrap();
    check_run(&data, &cfg, &out);
    assert!(out.pool.iter().any(|f| f.name.starts_with("stub")));
    assert!(!remote.transport.prompts.is_empty());
    for prompt in &remote.transport.prompts {
        let text = format!("{}\n{}", prompt.system, prompt.user);
        for id in data.asset_ids().iter().chain(data.period_labels()) {
            assert!(!text.contains(id.as_str()), "prompt leaks `{id}`");
        }
    }
}

#[test]
fn offline_candidates_are_pure_and_evaluable() {
    let validator = Validator::new(Default::default(), LOOKBACK);
    let pool = all_seed_factors();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..40u64 {
        let req = GenerationRequest { top_factors: vec![], library_factors: pool.clone(), count: 5, rng_seed: seed, step: 90 };
        let a = OfflineGenerator::default().generate(&req, &pool, &validator);
        let b = OfflineGenerator::default().generate(&req, &pool, &validator);
        assert_eq!(a, b);
        for c in &a.candidates {
            assert_eq!(c.created_step, 90);
            for _ in 0..20 {
                let (prices, returns) = random_window(&mut rng, LOOKBACK);
                assert!(evaluate(&c.expr, WindowRef { prices: &prices, returns: &returns }).is_finite());
            }
        }
    }
}
