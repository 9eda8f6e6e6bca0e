//! Acceptance criteria. Runs without the libtest harness so every check
//! prints its `PASS`/`FAIL` line; exits nonzero if any check fails.
//! A positional argument runs only the criteria whose name contains it.

use std::panic;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;

use desvn_core::association::check_feasibility;
use desvn_core::channel::{free_space_path_loss_db, los_probability, spectral_efficiency, Environment, FadingMode};
use desvn_core::geometry::{sample_matern_type1, PointProcessParams, Region};
use desvn_core::harness::instances::{compare_with_oracle, SMALL_MAX_DRONES, SMALL_MAX_RSUS};
use desvn_core::harness::plot::{auth_scaling_table, gas_limit_grid};
use desvn_core::harness::sweep::{replication_seeds, run_sweep, ResultRow, SweepParam, SweepSpec};
use desvn_core::harness::{run_recipe, run_scenario, Figure, PlotTable, ScenarioConfig};
use desvn_core::ledger::{gas_cost, Address, Block, EntityKind, EntityRecord, GasSchedule, LedgerChain};
use desvn_core::seed;

const REPLICATIONS: usize = 100;

static FAILED: AtomicUsize = AtomicUsize::new(0);

struct Report {
    criterion: u32,
    failures: Vec<String>,
}

impl Report {
    fn new(criterion: u32) -> Self {
        Report {
            criterion,
            failures: Vec::new(),
        }
    }

    fn check(&mut self, name: &str, ok: bool, detail: impl AsRef<str>) {
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!("criterion {} {verdict} {name}: {}", self.criterion, detail.as_ref());
        if !ok {
            self.failures.push(name.to_string());
        }
    }

    fn finish(self) {
        if !self.failures.is_empty() {
            println!("criterion {} failed: {}", self.criterion, self.failures.join(", "));
            FAILED.fetch_add(1, Ordering::SeqCst);
        }
    }
}

/// Indices `k` where `ys[k + 1] < ys[k]`.
fn decreases(ys: &[f64]) -> Vec<usize> {
    (0..ys.len().saturating_sub(1)).filter(|&k| ys[k + 1] < ys[k]).collect()
}

fn increases(ys: &[f64]) -> Vec<usize> {
    (0..ys.len().saturating_sub(1)).filter(|&k| ys[k + 1] > ys[k]).collect()
}

fn curve_column(table: &PlotTable, curve: usize, column: &str) -> Vec<f64> {
    let k = table.columns.iter().position(|c| c == column).unwrap();
    table.curves[curve].iter().map(|r| r[k]).collect()
}

fn criterion_1_operating_point() {
    let mut report = Report::new(1);
    let config = ScenarioConfig::default();
    let start = Instant::now();
    let seeds = replication_seeds(&config, 200);
    let outcomes: Vec<_> = seeds
        .par_iter()
        .map(|&s| run_scenario(&config, s).unwrap().metrics)
        .collect();
    let elapsed = start.elapsed();
    let n = outcomes.len() as f64;
    let served = outcomes.iter().map(|m| m.served_fraction).sum::<f64>() / n;
    let sum_rate = outcomes.iter().map(|m| m.sum_rate_bps).sum::<f64>() / n;
    let bandwidth = outcomes.iter().map(|m| m.avg_bandwidth_consumed_hz).sum::<f64>() / n;
    let over_cap = outcomes
        .iter()
        .filter(|m| m.sum_rate_bps > config.constraints.backhaul_rate_bps)
        .count();

    report.check(
        "served fraction within 71.23% +/- 10 pp",
        (served * 100.0 - 71.23).abs() <= 10.0,
        format!("{:.2}% over {} runs", served * 100.0, outcomes.len()),
    );
    report.check(
        "sum-rate within [1.2, 1.40] Gbps",
        (1.2e9..=1.40e9).contains(&sum_rate),
        format!("{:.4} Gbps", sum_rate / 1e9),
    );
    report.check(
        "no run above the backhaul limit",
        over_cap == 0,
        format!("{over_cap} runs above B_R"),
    );
    report.check(
        "avg bandwidth within 237.13 MHz +/- 30%",
        (bandwidth - 237.13e6).abs() <= 0.30 * 237.13e6,
        format!("{:.2} MHz", bandwidth / 1e6),
    );
    report.check(
        "runtime under 60 s",
        elapsed < Duration::from_secs(60),
        format!("{elapsed:?}"),
    );
    report.finish();
}

fn criterion_2_backhaul_cap() {
    let mut report = Report::new(2);
    let scenarios = 1_000u64;
    let results: Vec<(f64, f64, usize)> = (0..scenarios)
        .into_par_iter()
        .map(|s| {
            let mut rng = seed::rng(seed::derive(s, 0xb4c4));
            let mut c = ScenarioConfig::default();
            c.geometry.drone_count = rng.random_range(1..=10);
            c.geometry.rsu_density_per_m2 = rng.random_range(1e-6..9e-6);
            c.constraints.bandwidth_per_drone_hz = rng.random_range(10e6..400e6);
            c.constraints.max_links_per_drone = rng.random_range(1..=25);
            c.constraints.backhaul_rate_bps = rng.random_range(0.05e9..2.5e9);
            if rng.random_bool(0.5) {
                c.channel.fading_mode = FadingMode::Sampled;
            }
            let out = run_scenario(&c, s).unwrap();
            let violations = out.channel.as_ref().map_or(0, |ch| {
                check_feasibility(&out.association, ch, &out.demands, &c.constraints(), &c.transmit_policy()).len()
            });
            (out.metrics.sum_rate_bps, c.constraints.backhaul_rate_bps, violations)
        })
        .collect();
    let over = results.iter().filter(|(s, b, _)| s > b).count();
    let infeasible = results.iter().filter(|(_, _, v)| *v > 0).count();
    report.check(
        "post-enforcement sum-rate never exceeds B_R",
        over == 0,
        format!("{over} of {scenarios} randomized scenarios above the cap"),
    );
    report.check(
        "greedy output feasible on every scenario",
        infeasible == 0,
        format!("{infeasible} scenarios with violations"),
    );
    report.finish();
}

fn criterion_3_monotone_sweeps() {
    let mut report = Report::new(3);
    let base = ScenarioConfig::default();

    let fig2 = run_recipe(Figure::Fig2, &base, REPLICATIONS).unwrap();
    for (k, tau) in [5, 10, 15, 20].iter().enumerate() {
        let ys = curve_column(&fig2, k, "sum_rate_bps");
        let bad = decreases(&ys);
        report.check(
            &format!("fig2 sum-rate non-decreasing in W (tau={tau})"),
            bad.is_empty(),
            format!("{} decreasing steps {bad:?}", bad.len()),
        );
    }
    // Plateau: over the W interval where tau=20 still climbs, tau=5 stays flat.
    let tau5 = curve_column(&fig2, 0, "sum_rate_bps");
    let tau20 = curve_column(&fig2, 3, "sum_rate_bps");
    let w = curve_column(&fig2, 0, "W_hz");
    let rising: Vec<usize> = increases(&tau20);
    let plateau = rising.iter().filter(|&&k| tau5[k + 1] == tau5[k]).count();
    report.check(
        "tau=5 flattens while tau=20 rises",
        !rising.is_empty() && plateau * 2 >= rising.len() && tau5[tau5.len() - 1] < tau20[tau20.len() - 1],
        format!(
            "tau=20 rises on {} steps, tau=5 flat on {plateau} of them; final {:.3} vs {:.3} Gbps at W={} MHz",
            rising.len(),
            tau5[tau5.len() - 1] / 1e9,
            tau20[tau20.len() - 1] / 1e9,
            w[w.len() - 1] / 1e6
        ),
    );

    let fig3 = run_recipe(Figure::Fig3, &base, REPLICATIONS).unwrap();
    let curves: Vec<Vec<f64>> = (0..3).map(|k| curve_column(&fig3, k, "sum_rate_bps")).collect();
    for (k, b) in [1.5, 2.0, 2.5].iter().enumerate() {
        let bad = decreases(&curves[k]);
        report.check(
            &format!("fig3 sum-rate non-decreasing in W (B_R={b} Gbps)"),
            bad.is_empty(),
            format!("{} decreasing steps {bad:?}", bad.len()),
        );
    }
    let mut br_bad = 0;
    for i in 0..curves[0].len() {
        let at_w: Vec<f64> = curves.iter().map(|c| c[i]).collect();
        br_bad += decreases(&at_w).len();
    }
    report.check(
        "fig3 sum-rate non-decreasing in B_R at every W",
        br_bad == 0,
        format!("{br_bad} decreasing pairs"),
    );

    let fig5 = run_recipe(Figure::Fig5, &base, REPLICATIONS).unwrap();
    for (k, d) in ["3e-6", "5e-6", "7e-6"].iter().enumerate() {
        let ys = curve_column(&fig5, k, "sum_rate_bps");
        let bad = decreases(&ys);
        report.check(
            &format!("fig5 sum-rate non-decreasing in V (delta={d})"),
            bad.is_empty(),
            format!("{} decreasing steps {bad:?} in {ys:?}", bad.len()),
        );
    }
    report.finish();
}

fn criterion_4_drone_count_trends() {
    let mut report = Report::new(4);
    let fig4 = run_recipe(Figure::Fig4, &ScenarioConfig::default(), REPLICATIONS).unwrap();
    for (k, d) in ["3e-6", "5e-6", "7e-6"].iter().enumerate() {
        let served = curve_column(&fig4, k, "served_frac");
        let bad = decreases(&served);
        report.check(
            &format!("served fraction non-decreasing in V (delta={d})"),
            bad.is_empty(),
            format!("{} decreasing steps {bad:?}", bad.len()),
        );
        // Pairs from V=2 onward.
        let ee = curve_column(&fig4, k, "ee_bps_per_w");
        let bad: Vec<usize> = increases(&ee[1..]).into_iter().map(|i| i + 1).collect();
        report.check(
            &format!("EE non-increasing in V beyond V=1 (delta={d})"),
            bad.is_empty(),
            format!("{} increasing steps {bad:?} in {ee:?}", bad.len()),
        );
    }
    report.finish();
}

fn criterion_5_oracle_dominance() {
    let mut report = Report::new(5);
    let start = Instant::now();
    let results: Vec<_> = (0..600u64)
        .into_par_iter()
        .map(|s| compare_with_oracle(seed::derive(s, 0x0c1e)).unwrap())
        .collect();
    let elapsed = start.elapsed();
    let lost = results.iter().filter(|c| c.optimal_bps < c.greedy_bps).count();
    let infeasible = results.iter().filter(|c| c.greedy_violations > 0).count();
    let gaps = results.iter().filter(|c| c.optimal_bps > c.greedy_bps).count();
    report.check(
        "oracle sum-rate >= greedy sum-rate",
        lost == 0,
        format!(
            "{lost} losses over {} instances (U <= {SMALL_MAX_RSUS}, V <= {SMALL_MAX_DRONES}); greedy suboptimal on {gaps}",
            results.len()
        ),
    );
    report.check("greedy output feasible", infeasible == 0, format!("{infeasible} infeasible"));
    report.check("runtime under 30 s", elapsed < Duration::from_secs(30), format!("{elapsed:?}"));
    report.finish();
}

fn criterion_6_channel_units() {
    let mut report = Report::new(6);
    let env = Environment::default();

    let lambda = env.carrier_wavelength_m;
    let f0 = free_space_path_loss_db(lambda / (4.0 * std::f64::consts::PI), lambda).unwrap();
    report.check("F0 at d = lambda/4pi is 0 dB", f0 == 0.0, format!("{f0:e} dB"));

    let rho = los_probability(env.alpha, &env).unwrap();
    let want = 1.0 / (1.0 + env.alpha);
    report.check(
        "LoS probability at theta = alpha is 1/(1+alpha)",
        (rho - want).abs() <= 1e-12,
        format!("|diff| = {:e}", (rho - want).abs()),
    );

    let mut config = ScenarioConfig::default();
    config.channel.fading_mode = FadingMode::Sampled;
    let out = run_scenario(&config, 6).unwrap();
    let channel = out.channel.unwrap();
    let mut worst = 0.0f64;
    for ((i, j), &w) in channel.required_bandwidth_hz.indexed_iter() {
        let se = spectral_efficiency(channel.sinr_linear[[i, j]]);
        let rate = out.demands.rate(i);
        if w.is_finite() {
            worst = worst.max(((rate / w) - se).abs() / se);
        }
    }
    report.check(
        "rate / required bandwidth equals spectral efficiency on every link",
        worst <= 1e-9,
        format!("worst relative error {worst:e} over {} links", channel.required_bandwidth_hz.len()),
    );

    let region = Region::new(5_000.0, 5_000.0).unwrap();
    let params = PointProcessParams {
        density: 5e-6,
        min_distance: 200.0,
    };
    let counts: Vec<f64> = (0..1_000u64)
        .into_par_iter()
        .map(|s| sample_matern_type1(&region, &params, s).unwrap().len() as f64)
        .collect();
    let n = counts.len() as f64;
    let area = region.area();
    let mean = counts.iter().sum::<f64>() / n / area;
    let sd = (counts.iter().map(|c| (c / area - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let se = sd / n.sqrt();
    let theory = params.density * (-params.density * std::f64::consts::PI * params.min_distance.powi(2)).exp();
    report.check(
        "Matern retained intensity within 3 standard errors",
        (mean - theory).abs() <= 3.0 * se,
        format!("{mean:e} vs {theory:e} per m^2, {:.2} SE", (mean - theory).abs() / se),
    );
    report.finish();
}

fn criterion_7_ledger_protocol() {
    let mut report = Report::new(7);
    let mut rng = seed::rng(0x1ed9e7);
    let cc = Address::derive(0xcc);
    let mut chain = LedgerChain::new(cc, GasSchedule::default());

    let attempts = 10_000usize;
    let mut unauthorized_accepted = 0usize;
    let mut cc_submitted = std::collections::HashSet::new();
    for n in 0..attempts {
        let address = Address(rng.random());
        let record = match n % 3 {
            0 => EntityRecord::drone(address, "D".repeat(rng.random_range(0..=6)), "A".repeat(rng.random_range(0..=5))),
            1 => EntityRecord::rsu(address, "R".repeat(rng.random_range(0..=5))),
            _ => EntityRecord::sv(address),
        };
        let sender = if rng.random_bool(0.2) { cc } else { Address(rng.random()) };
        let accepted = chain.register_entity(sender, record.clone()).is_ok();
        if accepted && sender != cc {
            unauthorized_accepted += 1;
        }
        if sender == cc {
            cc_submitted.insert(record.address());
        }
        if n % 500 == 499 {
            chain.mine_block(6_000_000);
        }
    }
    while !chain.pending().is_empty() {
        chain.mine_block(6_000_000);
    }
    let foreign = chain.registered().filter(|r| !cc_submitted.contains(&r.address())).count();
    report.check(
        "no unauthorized registration accepted",
        unauthorized_accepted == 0 && foreign == 0,
        format!("{unauthorized_accepted} accepted from non-C&C senders, {foreign} foreign records over {attempts} attempts"),
    );

    let registered: Vec<EntityRecord> = chain.registered().cloned().collect();
    let mut mismatches = 0usize;
    let lookups = 10_000usize;
    for n in 0..lookups {
        let (kind, address) = if n % 2 == 0 {
            let r = &registered[rng.random_range(0..registered.len())];
            (r.kind(), r.address())
        } else {
            (EntityKind::ALL[n % 3], Address(rng.random()))
        };
        let member = chain.record(&address).is_some_and(|r| r.kind() == kind);
        if chain.authenticate(kind, &address).authenticated != member {
            mismatches += 1;
        }
    }
    report.check(
        "authenticate agrees with registry membership",
        mismatches == 0,
        format!("{mismatches} mismatches over {lookups} lookups ({} registered)", registered.len()),
    );

    report.check("built chain verifies", chain.verify_chain(), format!("{} blocks", chain.blocks().len()));
    let trials = 2_000usize;
    let mut undetected = 0usize;
    let mut rejected_on_load = 0usize;
    for _ in 0..trials {
        let k = rng.random_range(0..chain.blocks().len());
        let mut bytes = chain.blocks()[k].encode();
        let bit = rng.random_range(0..bytes.len() * 8);
        bytes[bit / 8] ^= 1 << (bit % 8);
        match Block::decode(&bytes) {
            Err(_) => rejected_on_load += 1,
            Ok(block) => {
                let mut tampered = chain.clone();
                tampered.blocks_mut()[k] = block;
                if tampered.verify_chain() {
                    undetected += 1;
                }
            }
        }
    }
    report.check(
        "every single-bit mutation detected",
        undetected == 0,
        format!("{undetected} undetected of {trials} ({rejected_on_load} no longer decode)"),
    );

    let config = ScenarioConfig::default();
    let spec = SweepSpec::new(SweepParam::BlockGasLimit, gas_limit_grid(), 10).unwrap();
    let rows = run_sweep(&config, &spec).unwrap();
    let includes_six_million = rows.iter().any(|r| r.value == 6e6);
    let mut bad = 0;
    for name in ["tx_per_block_drone", "tx_per_block_rsu", "tx_per_block_sv"] {
        let ys: Vec<f64> = rows.iter().map(|r: &ResultRow| r.mean_of(name)).collect();
        bad += decreases(&ys).len();
    }
    report.check(
        "transactions per block non-decreasing in gas limit",
        includes_six_million && bad == 0,
        format!("{bad} decreasing steps over {:?}", rows.iter().map(|r| r.value).collect::<Vec<_>>()),
    );

    let schedule = GasSchedule::default();
    let a = Address([1; 20]);
    let drone_min = gas_cost(&EntityRecord::drone(a, "", ""), &schedule);
    let rsu_max = gas_cost(&EntityRecord::rsu(a, "AAAA"), &schedule);
    let rsu_min = gas_cost(&EntityRecord::rsu(a, ""), &schedule);
    let sv = gas_cost(&EntityRecord::sv(a), &schedule);
    report.check(
        "drone gas >= RSU gas >= SV gas",
        drone_min >= rsu_max && rsu_min >= sv,
        format!("drone >= {drone_min}, RSU in [{rsu_min}, {rsu_max}], SV = {sv}"),
    );
    report.finish();
}

fn criterion_8_auth_scaling() {
    let mut report = Report::new(8);
    let table = auth_scaling_table(&[1], &[10, 20], &GasSchedule::default());
    let ten = table.column("comparisons_10_registered")[0] as u64;
    let twenty = table.column("comparisons_20_registered")[0] as u64;
    report.check(
        "worst-case comparisons double with registered count",
        ten == 10 && twenty == 20 && twenty == 2 * ten,
        format!("{ten} comparisons with 10 registered, {twenty} with 20"),
    );
    report.finish();
}

fn criterion_9_determinism() {
    let mut report = Report::new(9);
    let mut config = ScenarioConfig::default();
    config.channel.fading_mode = FadingMode::Sampled;
    config.ledger.unregistered_drones = vec![3];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_scenario(&config, 42).unwrap().write_artifacts(a.path()).unwrap();
    run_scenario(&config, 42).unwrap().write_artifacts(b.path()).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    let differing: Vec<_> = names
        .iter()
        .filter(|n| std::fs::read(a.path().join(n)).unwrap() != std::fs::read(b.path().join(n)).unwrap())
        .collect();
    report.check(
        "scenario artifacts byte-identical",
        differing.is_empty() && names.len() >= 6,
        format!("{} files compared, differing: {differing:?}", names.len()),
    );

    config.ledger.unregistered_drones.clear();
    let first = run_recipe(Figure::Fig5, &config, 8).unwrap().to_csv();
    let second = run_recipe(Figure::Fig5, &config, 8).unwrap().to_csv();
    report.check("parallel sweep CSV byte-identical", first == second, format!("{} bytes", first.len()));
    report.finish();
}

fn main() -> ExitCode {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [(&str, fn()); 9] = [
        ("criterion_1_operating_point", criterion_1_operating_point as fn()),
        ("criterion_2_backhaul_cap", criterion_2_backhaul_cap as fn()),
        ("criterion_3_monotone_sweeps", criterion_3_monotone_sweeps as fn()),
        ("criterion_4_drone_count_trends", criterion_4_drone_count_trends as fn()),
        ("criterion_5_oracle_dominance", criterion_5_oracle_dominance as fn()),
        ("criterion_6_channel_units", criterion_6_channel_units as fn()),
        ("criterion_7_ledger_protocol", criterion_7_ledger_protocol as fn()),
        ("criterion_8_auth_scaling", criterion_8_auth_scaling as fn()),
        ("criterion_9_determinism", criterion_9_determinism as fn()),
    ];
    let mut ran = 0;
    for (name, run) in criteria {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        ran += 1;
        if panic::catch_unwind(run).is_err() {
            println!("{name} FAIL panicked");
            FAILED.fetch_add(1, Ordering::SeqCst);
        }
    }
    let failed = FAILED.load(Ordering::SeqCst);
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
