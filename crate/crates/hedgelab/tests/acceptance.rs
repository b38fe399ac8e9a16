//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//! Run with `cargo test -p hedgelab --test acceptance -- --nocapture` to see
//! the lines; the two training criteria are scaled-down smoke runs with
//! pinned seeds.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use hedgelab::cli::{run_command, run_strategy_episodes};
use hedgelab::drl::{
    self, quantile_huber_loss, Activation, Adam, ForwardCache, Gradients, Mlp, Objective,
    TrainerConfig,
};
use hedgelab::env::{EnvConfig, EnvMode, EnvSetup, HedgeInstrument};
use hedgelab::instruments::{AutocallableSpec, OptionKind};
use hedgelab::market::{simulate_paths, RngStream, SabrParams, TimeGrid};
use hedgelab::pricing::{
    binomial_american, bs_european, fd_greeks, lsmc_fit, lsmc_price, price_autocallable_mc,
    PricerConfig,
};
use hedgelab::risk::{cvar_q, mean, report, var_q, PnlSamples};
use hedgelab::strategies::Strategy;

fn verdict(criterion: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} - {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn gbm(vol: f64, rate: f64, spot0: f64) -> SabrParams {
    SabrParams {
        spot0,
        mu: rate,
        sigma0: vol,
        beta: 1.0,
        rho: 0.0,
        nu: 0.0,
    }
}

#[test]
fn criterion_01_pricing_oracles() {
    let t0 = Instant::now();
    let rate = 0.05;

    // Monthly-exercise LSMC put against the 2000-step tree.
    let grid = TimeGrid::new(12, 1.0 / 12.0);
    let config = PricerConfig::default();
    let fit = simulate_paths(&gbm(0.2, rate, 100.0), &grid, 10_000, &RngStream::new(101, 0)).unwrap();
    let model = lsmc_fit(
        &fit,
        OptionKind::AmericanPut,
        &[90.0, 95.0, 100.0, 105.0, 110.0],
        1.0,
        rate,
        &config,
    )
    .unwrap();
    let eval = simulate_paths(&gbm(0.2, rate, 100.0), &grid, 200_000, &RngStream::new(201, 0)).unwrap();
    let (lsmc, _se) = lsmc_price(&model, &eval, 100.0);
    let tree = binomial_american(OptionKind::AmericanPut, 100.0, 100.0, 0.2, rate, 1.0, 2000);
    let put_rel = (lsmc - tree).abs() / tree;

    // American call without dividends equals the European closed form.
    let call_tree = binomial_american(OptionKind::AmericanCall, 100.0, 100.0, 0.2, 0.0, 1.0, 2000);
    let call_bs = bs_european(OptionKind::EuropeanCall, 100.0, 100.0, 0.2, 0.0, 1.0).price;
    let call_rel = (call_tree - call_bs).abs() / call_bs;

    let elapsed = t0.elapsed();
    verdict(
        "1 (pricing oracles)",
        put_rel < 0.01 && call_rel < 0.001 && elapsed.as_secs() < 30,
        &format!(
            "lsmc put {lsmc:.4} vs tree {tree:.4} (rel {put_rel:.4}), call rel {call_rel:.5}, {elapsed:?}"
        ),
    );
}

#[test]
fn criterion_02_fd_greeks() {
    let analytic = bs_european(OptionKind::EuropeanCall, 100.0, 100.0, 0.2, 0.0, 1.0);
    let (delta, gamma) = fd_greeks(
        |s| bs_european(OptionKind::EuropeanCall, s, 100.0, 0.2, 0.0, 1.0).price,
        100.0,
        0.005,
    )
    .unwrap();
    let delta_err = (delta - analytic.delta).abs();
    let gamma_err = (gamma - analytic.gamma).abs();

    let (d_lin, g_lin) = fd_greeks(|s| 2.0 * s, 100.0, 0.005).unwrap();
    let (_, g_quad) = fd_greeks(|s| s * s, 100.0, 0.005).unwrap();

    verdict(
        "2 (finite-difference greeks)",
        delta_err < 1e-4
            && gamma_err < 1e-4
            && (d_lin - 2.0).abs() < 1e-12
            && g_lin.abs() < 1e-12
            && (g_quad - 2.0).abs() < 1e-9,
        &format!("delta err {delta_err:.2e}, gamma err {gamma_err:.2e}, quadratic gamma {g_quad}"),
    );
}

#[test]
fn criterion_03_note_degeneracies() {
    let spec = AutocallableSpec::default();
    let params = SabrParams {
        sigma0: 0.0,
        nu: 0.0,
        mu: 0.0,
        ..SabrParams::default()
    };
    let config = PricerConfig::default();
    let price_at = |spot: f64| {
        price_autocallable_mc(&spec, spot, 0.0, 0.0, &params, &config, &RngStream::new(1, 0)).price
    };
    let p100 = price_at(100.0);
    let p60 = price_at(60.0);
    let p70 = price_at(70.0);
    verdict(
        "3 (note degeneracies)",
        (p100 - 105.70).abs() < 1e-9 && (p60 - 60.0).abs() < 1e-9 && (p70 - 179.80).abs() < 1e-9,
        &format!("flat-100 {p100}, flat-60 {p60}, flat-70 {p70}"),
    );
}

#[test]
fn criterion_04_barrier_gamma_profile() {
    // Runs the CLI end to end at the default 2000 inner paths with the
    // structurally chosen default seed.
    let t0 = Instant::now();
    let out = tempfile_dir("c4_profile");
    let code = run_command([
        "hedgelab",
        "greeks-profile",
        "--spot-min",
        "90",
        "--spot-max",
        "110",
        "--spot-step",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(out.join("greeks_profile.csv")).unwrap();

    let mut gamma_1d_at_100 = f64::NAN;
    let mut gamma_60d_at_100 = f64::NAN;
    let mut all_finite = true;
    for line in csv.lines().skip(2) {
        let fields: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        let (spot, days, value, delta, gamma) = (fields[0], fields[1], fields[2], fields[3], fields[4]);
        all_finite &= value.is_finite() && delta.is_finite() && gamma.is_finite();
        if spot == 100.0 && days == 1.0 {
            gamma_1d_at_100 = gamma;
        }
        if spot == 100.0 && days == 60.0 {
            gamma_60d_at_100 = gamma;
        }
    }
    let elapsed = t0.elapsed();
    let ratio = gamma_1d_at_100.abs() / gamma_60d_at_100.abs();
    verdict(
        "4 (barrier gamma profile)",
        ratio >= 10.0 && all_finite && elapsed.as_secs() < 300,
        &format!(
            "1d gamma {gamma_1d_at_100:.4} vs 60d {gamma_60d_at_100:.4} (ratio {ratio:.1}), finite {all_finite}, {elapsed:?}"
        ),
    );
}

#[test]
fn criterion_05_mean_minus_column() {
    // Published (mean, std, printed Mean-Std) rows round to two decimals,
    // so the derived 1.645 rule is compared after rounding to that grid.
    let rows = [
        (0.1, 12.58, -20.59),
        (-11.4, 2.61, -15.68),
        (-5.27, 3.17, -10.49),
        (0.37, 11.09, -17.87),
        (-11.76, 2.71, -16.22),
        (-4.72, 3.92, -11.18),
    ];
    let mut worst: f64 = 0.0;
    for (m, s, printed) in rows {
        let mm: f64 = m - 1.645 * s;
        let rounded = (mm * 100.0).round() / 100.0;
        worst = worst.max((rounded - printed) as f64);
        worst = worst.max((printed - rounded) as f64);
    }
    verdict(
        "5 (mean-minus column)",
        worst <= 0.01 + 1e-12,
        &format!("max |rounded - printed| = {worst:.4} over six rows"),
    );
}

#[test]
fn criterion_06_baseline_gamma_ratios() {
    let market = SabrParams::default();
    let note = AutocallableSpec::default();

    // Autocallable mode with the American hedge pair: at-the-money options
    // always carry gamma, so the delta-gamma target is achievable at every
    // spot (a far-OTM digital has none at deeply fallen spots). Ratios are
    // then exact by construction and the inner-path count only affects
    // speed.
    let mut auto_env = EnvConfig::for_mode(EnvMode::Autocallable);
    auto_env.hedge_instrument = HedgeInstrument::AmericanPair;
    let auto_setup = Arc::new(
        EnvSetup::new(
            market,
            note,
            auto_env,
            PricerConfig {
                n_mc_paths: 300,
                ..PricerConfig::default()
            },
            RngStream::new(1, 9000),
        )
        .unwrap(),
    );
    let dn_auto = run_strategy_episodes(&auto_setup, &Strategy::DeltaNeutral, 500, 2).unwrap();
    let dg_auto = run_strategy_episodes(&auto_setup, &Strategy::DeltaGammaNeutral, 500, 2).unwrap();

    let vanilla_setup = Arc::new(
        EnvSetup::new(
            market,
            note,
            EnvConfig::for_mode(EnvMode::VanillaFlow),
            PricerConfig::default(),
            RngStream::new(1, 9000),
        )
        .unwrap(),
    );
    let dn_van = run_strategy_episodes(&vanilla_setup, &Strategy::DeltaNeutral, 500, 2).unwrap();
    let dg_van = run_strategy_episodes(&vanilla_setup, &Strategy::DeltaGammaNeutral, 500, 2).unwrap();

    verdict(
        "6 (baseline gamma ratios)",
        dn_auto.mean_gamma_ratio == 0.0
            && dn_van.mean_gamma_ratio == 0.0
            && (dg_auto.mean_gamma_ratio - 1.0).abs() < 0.01
            && (dg_van.mean_gamma_ratio - 1.0).abs() < 0.01,
        &format!(
            "delta-neutral ({}, {}), delta-gamma ({:.4}, {:.4})",
            dn_auto.mean_gamma_ratio,
            dn_van.mean_gamma_ratio,
            dg_auto.mean_gamma_ratio,
            dg_van.mean_gamma_ratio
        ),
    );
}

#[test]
fn criterion_07_accounting_identity() {
    let market = SabrParams::default();
    let note = AutocallableSpec::default();
    let mut worst: f64 = 0.0;

    let mut check_mode = |mode: EnvMode, episodes: u64, pricer: PricerConfig| {
        let mut config = EnvConfig::for_mode(mode);
        config.kappa = 0.0;
        config.underlying_cost_kappa = 0.0;
        let setup = Arc::new(
            EnvSetup::new(market, note, config, pricer, RngStream::new(3, 9000)).unwrap(),
        );
        let mut env = setup.make_env();
        for ep in 0..episodes {
            let mut actions = RngStream::new(9_000_000 + ep, 1).sampler();
            env.reset(RngStream::new(ep, 0));
            let p0 = env.state().book_value;
            let mut total = 0.0;
            loop {
                let tr = env.step(actions.uniform()).unwrap();
                total += tr.reward;
                if tr.done {
                    break;
                }
            }
            let pt = env.state().book_value;
            let scale = pt.abs().max(p0.abs()).max(1.0);
            worst = worst.max(((pt - p0) - total).abs() / scale);
        }
    };

    check_mode(
        EnvMode::Autocallable,
        700,
        PricerConfig {
            n_mc_paths: 64,
            ..PricerConfig::default()
        },
    );
    check_mode(EnvMode::VanillaFlow, 300, PricerConfig::default());

    verdict(
        "7 (accounting identity)",
        worst < 1e-8,
        &format!("max relative telescoping error {worst:.2e} over 1000 episodes"),
    );
}

#[test]
fn criterion_08_drl_unit_properties() {
    let t0 = Instant::now();

    // Gradient finite-difference checks on a random 3-hidden-layer net.
    let mut sampler = RngStream::new(42, 0).sampler();
    let net = Mlp::new(&[4, 8, 8, 8, 3], Activation::Relu, Activation::Identity, &mut sampler);
    let input: Vec<f64> = (0..4).map(|_| sampler.standard_normal()).collect();
    let target: Vec<f64> = (0..3).map(|_| sampler.standard_normal()).collect();
    let mut cache = ForwardCache::default();
    net.forward_cached(&input, &mut cache);
    let upstream: Vec<f64> = cache
        .outputs
        .last()
        .unwrap()
        .iter()
        .zip(&target)
        .map(|(y, t)| y - t)
        .collect();
    let mut grads = Gradients::zeros_like(&net);
    net.backward(&input, &cache, &upstream, &mut grads);
    let loss = |net: &Mlp| -> f64 {
        net.forward(&input)
            .iter()
            .zip(&target)
            .map(|(y, t)| 0.5 * (y - t) * (y - t))
            .sum()
    };
    let flat = net.flatten_params();
    let mut max_rel: f64 = 0.0;
    let h = 1e-5;
    for p in (0..flat.len()).step_by(7) {
        let mut plus = flat.clone();
        plus[p] += h;
        let mut minus = flat.clone();
        minus[p] -= h;
        let mut netw = net.clone();
        netw.load_params(&plus);
        let lp = loss(&netw);
        netw.load_params(&minus);
        let lm = loss(&netw);
        let numeric = (lp - lm) / (2.0 * h);
        let mut at = 0;
        let mut analytic = 0.0;
        for (li, l) in net.layers.iter().enumerate() {
            if p < at + l.weights.len() {
                analytic = grads.d_weights[li][p - at];
                break;
            }
            at += l.weights.len();
            if p < at + l.biases.len() {
                analytic = grads.d_biases[li][p - at];
                break;
            }
            at += l.biases.len();
        }
        let denom = analytic.abs().max(numeric.abs()).max(1e-6);
        max_rel = max_rel.max((analytic - numeric).abs() / denom);
    }

    // Quantile-regression bandits: train a small quantile head on sampled
    // rewards with Adam, 10^4 gradient steps each.
    let qr_bandit = |reward: &mut dyn FnMut(&mut hedgelab::market::Sampler) -> f64,
                     seed: u64|
     -> Vec<f64> {
        let mut init = RngStream::new(seed, 0).sampler();
        let mut net = Mlp::new(&[1, 32, 100], Activation::Relu, Activation::Identity, &mut init);
        let mut opt = Adam::new(&net, 1e-3);
        let mut draw = RngStream::new(seed, 1).sampler();
        let mut cache = ForwardCache::default();
        let mut grads = Gradients::zeros_like(&net);
        for _ in 0..10_000 {
            let targets: Vec<f64> = (0..32).map(|_| reward(&mut draw)).collect();
            net.forward_cached(&[0.0], &mut cache);
            let atoms = cache.outputs.last().unwrap();
            let (_, d_atoms) = quantile_huber_loss(atoms, &targets, 1.0);
            grads.zero();
            net.backward(&[0.0], &cache, &d_atoms, &mut grads);
            opt.step(&mut net, &grads);
        }
        net.forward(&[0.0])
    };

    let const_atoms = qr_bandit(&mut |_| 3.0, 7);
    let const_ok = const_atoms.iter().all(|a| (a - 3.0).abs() < 0.01);

    let mut bern_atoms = qr_bandit(
        &mut |s: &mut hedgelab::market::Sampler| if s.uniform() < 0.5 { 0.0 } else { 1.0 },
        8,
    );
    bern_atoms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let below = bern_atoms.iter().filter(|&&a| a < 0.5).count();
    let elapsed = t0.elapsed();

    verdict(
        "8 (drl unit properties)",
        max_rel < 1e-4 && const_ok && (47..=53).contains(&below) && elapsed.as_secs() < 60,
        &format!(
            "grad rel err {max_rel:.2e}, constant atoms ok {const_ok}, {below} atoms below 0.5, {elapsed:?}"
        ),
    );
}

/// Scaled-down trainer for the smoke criteria: small networks, n-step
/// targets and a slow actor under constant exploration noise, which keeps
/// the deterministic-policy gradient from whipsawing into bang-bang
/// policies at this episode budget.
fn smoke_trainer(episodes: usize) -> TrainerConfig {
    TrainerConfig {
        episodes,
        batch: 128,
        actor_hidden: vec![64, 64],
        critic_hidden: vec![128, 128],
        warmup_transitions: 500,
        updates_per_step: 1.0,
        eval_episodes_per_log: 0,
        objective: Objective::Mix595,
        actor_lr: 5e-5,
        n_step: 5,
        exploration_noise_std: 0.2,
        exploration_noise_final: 0.2,
        ..TrainerConfig::default()
    }
}

#[test]
fn criterion_09_smoke_training_beats_random_init() {
    // Scaled-down run: full-scale table values are out of reach at desk
    // scale, the gate is that learning moves the tail objective the right
    // way on held-out episodes.
    let t0 = Instant::now();
    let setup = Arc::new(
        EnvSetup::new(
            SabrParams::default(),
            AutocallableSpec::default(),
            EnvConfig::for_mode(EnvMode::VanillaFlow),
            PricerConfig::default(),
            RngStream::new(1, 9000),
        )
        .unwrap(),
    );
    let trainer = smoke_trainer(2000);
    let trained = drl::train(
        |_| setup.make_env(),
        setup.norm,
        &trainer,
        RngStream::new(1, 1),
        "acceptance",
    )
    .unwrap()
    .snapshot;
    // Same architecture and init stream, zero gradient steps.
    let random = drl::train(
        |_| setup.make_env(),
        setup.norm,
        &TrainerConfig {
            episodes: 1,
            warmup_transitions: usize::MAX,
            ..trainer.clone()
        },
        RngStream::new(1, 1),
        "acceptance",
    )
    .unwrap()
    .snapshot;

    let eval_stream = RngStream::new(2, 500);
    let objective = |snap: &drl::PolicySnapshot| {
        let samples =
            drl::evaluate(&snap.actor(), &|_i: usize| setup.make_env(), 500, eval_stream).unwrap();
        0.5 * var_q(&samples.values, 5.0).unwrap() + 0.5 * var_q(&samples.values, 95.0).unwrap()
    };
    let trained_obj = objective(&trained);
    let random_obj = objective(&random);
    let elapsed = t0.elapsed();
    verdict(
        "9 (smoke training)",
        trained_obj > random_obj && elapsed.as_secs() < 1800,
        &format!("trained {trained_obj:.4} vs random init {random_obj:.4}, {elapsed:?}"),
    );
}

#[test]
fn criterion_10_rl_tail_no_worse_than_delta_neutral() {
    // Stochastic criterion with pinned seeds (train 1, eval 2). The greeks
    // feeding the hedge sizing use a 4% bump: at 2000 inner paths the
    // default 0.5% bump leaves finite-difference gamma noise larger than
    // the note's true gamma, which no hedging discipline survives.
    let mut env_config = EnvConfig::for_mode(EnvMode::Autocallable);
    env_config.hedge_instrument = HedgeInstrument::AmericanPair;
    let pricer = PricerConfig {
        n_mc_paths: 2000,
        fd_bump_rel: 0.04,
        ..PricerConfig::default()
    };
    let setup = Arc::new(
        EnvSetup::new(
            SabrParams::default(),
            AutocallableSpec::default(),
            env_config,
            pricer,
            RngStream::new(1, 9000),
        )
        .unwrap(),
    );
    let trained = drl::train(
        |_| setup.make_env(),
        setup.norm,
        &smoke_trainer(5000),
        RngStream::new(1, 1),
        "acceptance",
    )
    .unwrap()
    .snapshot;

    let rl = run_strategy_episodes(&setup, &Strategy::RlPolicy(trained.actor()), 1000, 2).unwrap();
    let dn = run_strategy_episodes(&setup, &Strategy::DeltaNeutral, 1000, 2).unwrap();
    let rl_var95 = var_q(&rl.samples.values, 95.0).unwrap();
    let dn_var95 = var_q(&dn.samples.values, 95.0).unwrap();
    verdict(
        "10 (directional tail claim)",
        rl_var95 >= dn_var95,
        &format!(
            "RL 95%VaR {rl_var95:.3} (mean {:.3}, gamma ratio {:.2}) vs delta-neutral {dn_var95:.3} on shared seeds",
            mean(&rl.samples.values),
            rl.mean_gamma_ratio
        ),
    );
}

#[test]
fn criterion_11_estimator_exactness() {
    let mut worst_case_failed = false;
    for set in 0..1000u64 {
        let mut sampler = RngStream::new(set, 5).sampler();
        let n = 1 + (sampler.uniform() * 300.0) as usize;
        let values: Vec<f64> = (0..n).map(|_| sampler.standard_normal() * 100.0).collect();
        for q in [5.0, 95.0] {
            // Integer-arithmetic sort-and-slice oracle.
            let mut sorted = values.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let k = (((100 - q as usize) * n).div_ceil(100)).clamp(1, n);
            let oracle_var = sorted[k - 1];
            let tail: Vec<f64> = sorted.iter().copied().filter(|&x| x <= oracle_var).collect();
            let oracle_cvar = tail.iter().sum::<f64>() / tail.len() as f64;
            if var_q(&values, q).unwrap() != oracle_var || cvar_q(&values, q).unwrap() != oracle_cvar {
                worst_case_failed = true;
            }
            // Permutation invariance.
            let mut reversed = values.clone();
            reversed.reverse();
            if var_q(&reversed, q).unwrap() != oracle_var {
                worst_case_failed = true;
            }
        }
    }

    // Constant-shift behaviour of the full report.
    let base_vals: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64 - 50.0).collect();
    let shifted_vals: Vec<f64> = base_vals.iter().map(|x| x + 12.5).collect();
    let base = report(&PnlSamples::new(base_vals, vec![]), 0.3).unwrap();
    let shifted = report(&PnlSamples::new(shifted_vals, vec![]), 0.3).unwrap();
    let shift_ok = (shifted.mean - base.mean - 12.5).abs() < 1e-9
        && (shifted.var95 - base.var95 - 12.5).abs() < 1e-9
        && (shifted.cvar5 - base.cvar5 - 12.5).abs() < 1e-9
        && (shifted.mean_minus_1p645_std - base.mean_minus_1p645_std - 12.5).abs() < 1e-9
        && (shifted.std - base.std).abs() < 1e-9
        && (shifted.skewness - base.skewness).abs() < 1e-9;

    verdict(
        "11 (estimator exactness)",
        !worst_case_failed && shift_ok,
        &format!("1000 random sets exact, shift invariance {shift_ok}"),
    );
}

fn tempfile_dir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("hedgelab_acceptance_{tag}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    entries.sort();
    entries
}

#[test]
fn criterion_12_byte_identical_reruns() {
    let root = tempfile_dir("c12");
    let config_path = root.join("config.toml");
    std::fs::write(
        &config_path,
        "[pricer]\nn_mc_paths = 100\nlsmc_training_paths = 1000\n\n[trainer]\nepisodes = 16\nbatch = 32\nactor_hidden = [8, 8]\ncritic_hidden = [8, 8]\nwarmup_transitions = 32\neval_episodes_per_log = 2\ncollectors = 4\n",
    )
    .unwrap();
    let config_arg = config_path.to_str().unwrap().to_string();

    let runs: Vec<Vec<String>> = vec![
        vec!["price".into(), "--instrument".into(), "note".into(), "--vol".into(), "0".into()],
        vec![
            "greeks-profile".into(),
            "--spot-min".into(),
            "98".into(),
            "--spot-max".into(),
            "102".into(),
            "--spot-step".into(),
            "2".into(),
            "--days".into(),
            "60,1".into(),
        ],
        vec![
            "simulate-pnl".into(),
            "--strategy".into(),
            "delta-gamma".into(),
            "--episodes".into(),
            "8".into(),
            "--trace".into(),
        ],
        vec!["fit-lsmc".into()],
        vec!["train".into()],
    ];

    let mut all_identical = true;
    let mut compared_files = 0usize;
    for (i, args) in runs.iter().enumerate() {
        let mut outs = Vec::new();
        for attempt in 0..2 {
            let out = root.join(format!("run{i}_{attempt}"));
            let mut argv: Vec<String> = vec![
                "hedgelab".into(),
                "--config".into(),
                config_arg.clone(),
                "--seed".into(),
                "7".into(),
                "--threads".into(),
                "2".into(),
                "--out".into(),
                out.to_str().unwrap().into(),
            ];
            argv.extend(args.clone());
            let code = run_command(argv);
            assert_eq!(code, 0, "command {args:?} failed");
            outs.push(out);
        }
        let a = dir_bytes(&outs[0]);
        let b = dir_bytes(&outs[1]);
        compared_files += a.len();
        if a != b {
            all_identical = false;
            eprintln!("re-run of {args:?} differed");
        }
    }

    // evaluate + report on the train output.
    let policy = root.join("run4_0").join("policy.json");
    for attempt in 0..2 {
        let out = root.join(format!("run_eval_{attempt}"));
        let code = run_command([
            "hedgelab",
            "--config",
            &config_arg,
            "--seed",
            "7",
            "--threads",
            "2",
            "--out",
            out.to_str().unwrap(),
            "evaluate",
            "--policy",
            policy.to_str().unwrap(),
            "--episodes",
            "6",
        ]);
        assert_eq!(code, 0);
    }
    let report_a = root.join("run_eval_0").join("report.json");
    for attempt in 0..2 {
        let out = root.join(format!("run_report_{attempt}"));
        let code = run_command([
            "hedgelab",
            "--config",
            &config_arg,
            "--seed",
            "7",
            "--threads",
            "2",
            "--out",
            out.to_str().unwrap(),
            "report",
            "--compare",
            report_a.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
    }
    let pairs = [
        (root.join("run_eval_0"), root.join("run_eval_1")),
        (root.join("run_report_0"), root.join("run_report_1")),
    ];
    for (a, b) in pairs {
        let da = dir_bytes(&a);
        let db = dir_bytes(&b);
        compared_files += da.len();
        if da != db {
            all_identical = false;
        }
    }

    verdict(
        "12 (byte-identical reruns)",
        all_identical && compared_files > 10,
        &format!("{compared_files} files compared across 7 commands"),
    );
}
