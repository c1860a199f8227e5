//! Acceptance criteria on synthetic ground truth. Prints one PASS/FAIL line
//! per criterion and exits nonzero if any fails.

// failed comparisons with NaN must count as failures
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use geoflow::clean::{apply_source_filter, source_popularity_filter, speed_filter_all, speed_kmh, PopularityWeight};
use geoflow::community::exhaustive::{best_partition_by_enumeration, same_grouping};
use geoflow::community::{hierarchical_partition, modularity, optimize_partition, OptimizerConfig, WeightedDigraph};
use geoflow::config::Config;
use geoflow::geo::haversine_km;
use geoflow::ingest::{build_trajectories, GeoEvent};
use geoflow::models::{capital_distances, fit_gravity, fit_power_law, fit_power_law_truncated};
use geoflow::network::FlowWeight;
use geoflow::pipeline::{artifact_listing, files, read_json, read_rows, DailyRow, Fits, Pipeline};
use geoflow::synth::{
    expected_flows, generate_events, sample_power_law, write_synth_dir, EventConfig, GravityParams, HomeMotion,
    SynthWorld, UserAllocation, WorldConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("n{i:02}")).collect()
}

fn within_time(t: Duration, limit_s: f64) -> Result<(), String> {
    if t.as_secs_f64() < limit_s {
        Ok(())
    } else {
        Err(format!("took {:.2} s, limit {limit_s} s", t.as_secs_f64()))
    }
}

/// Gravity exponents from noiseless planted flows.
fn gravity_recovery() -> Outcome {
    let start = Instant::now();
    let params = GravityParams { a: 2.0, alpha: 0.8, beta: 0.6, gamma: 1.0 };
    let world = SynthWorld::generate(&WorldConfig {
        countries: 20,
        blocks: 4,
        gravity: params,
        block_boost: 1.0,
        min_capital_separation_km: 200.0,
        seed: 11,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let capitals: BTreeMap<_, _> = world.countries.iter().map(|c| (c.code.clone(), c.capital)).collect();
    let closest = world
        .countries
        .iter()
        .enumerate()
        .flat_map(|(i, a)| world.countries[i + 1..].iter().map(move |b| haversine_km(a.capital, b.capital)))
        .fold(f64::INFINITY, f64::min);
    ensure!(closest >= 200.0, "capitals only {closest:.1} km apart");
    let flows = expected_flows(&world).map_err(|e| e.to_string())?;
    let pops: BTreeMap<_, _> = world.countries.iter().map(|c| (c.code.clone(), c.population)).collect();
    let fit = fit_gravity(&flows.to_network(), FlowWeight::Est, &pops, &capital_distances(&capitals), 100.0)
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    for (name, got, want) in [("alpha", fit.alpha, 0.8), ("beta", fit.beta, 0.6), ("gamma", fit.gamma, 1.0)] {
        ensure!((got - want).abs() <= 1e-6, "{name} = {got}, want {want} within 1e-6");
    }
    ensure!((fit.r2 - 1.0).abs() <= 1e-9, "r2 = {}", fit.r2);
    ensure!((fit.log_a - 2f64.ln()).abs() <= 1e-6, "log A = {}", fit.log_a);
    within_time(elapsed, 1.0)?;
    Ok(format!(
        "alpha {:.9} beta {:.9} gamma {:.9} r2 {:.12} over {} pairs",
        fit.alpha, fit.beta, fit.gamma, fit.r2, fit.n_pairs
    ))
}

/// Truncated-power-law MLE on inverse-CDF samples.
fn power_law_recovery() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    for (seed, exponent) in [(1620, 1.62), (1250, 1.25)] {
        let xs = sample_power_law(seed, exponent, 1.0, 1e4, 100_000);
        let fit = fit_power_law_truncated(&xs, 1.0, 1e4).map_err(|e| e.to_string())?;
        let naive = fit_power_law(&xs, 1.0).map_err(|e| e.to_string())?;
        ensure!(
            (fit.exponent - exponent).abs() <= 0.02,
            "exponent {exponent}: estimate {:.4} outside +-0.02 (untruncated formula {:.4})",
            fit.exponent,
            naive.exponent
        );
        parts.push(format!(
            "{exponent} -> {:.4} +- {:.4} (untruncated formula {:.4})",
            fit.exponent, fit.stderr, naive.exponent
        ));
    }
    within_time(start.elapsed(), 5.0)?;
    Ok(parts.join("; "))
}

fn random_digraph(n: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize, f64)> {
    let density = rng.random_range(0.15..0.8);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random_bool(density) {
                // log-uniform weights over three decades
                edges.push((i, j, 10f64.powf(rng.random_range(-1.0..2.0))));
            }
        }
    }
    edges
}

fn blocks_graph(blocks: usize, size: usize, w_in: f64, w_out: f64) -> (WeightedDigraph, Vec<usize>) {
    let n = blocks * size;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                edges.push((i, j, if i / size == j / size { w_in } else { w_out }));
            }
        }
    }
    (WeightedDigraph::new(labels(n), edges).expect("valid"), (0..n).map(|i| i / size).collect())
}

/// Planted blocks, then agreement with exhaustive search on 8-node graphs.
fn planted_partition() -> Outcome {
    let start = Instant::now();
    let cfg = OptimizerConfig { seed: 20, restarts: 20 };
    let (g, planted) = blocks_graph(4, 5, 10.0, 0.1);
    let p = optimize_partition(&g, &cfg).map_err(|e| e.to_string())?;
    ensure!(same_grouping(&p.assignment, &planted), "20-node planted blocks not recovered: {:?}", p.assignment);

    let mut fixtures: Vec<Vec<(usize, usize, f64)>> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    while fixtures.len() < 40 {
        let e = random_digraph(8, &mut rng);
        if !e.is_empty() {
            fixtures.push(e);
        }
    }
    fixtures.push(blocks_graph(2, 4, 10.0, 0.1).0.edges().collect());
    fixtures.push((0..8).map(|i| (i, (i + 1) % 8, 1.0)).collect());
    fixtures.push((0..8).flat_map(|i| [(i, (i + 1) % 8, 3.0), ((i + 1) % 8, i, 0.5)]).collect());
    let mut worst: f64 = 0.0;
    for (k, edges) in fixtures.iter().enumerate() {
        let g = WeightedDigraph::new(labels(8), edges.iter().copied()).map_err(|e| e.to_string())?;
        let (q_best, _, visited) = best_partition_by_enumeration(8, edges);
        ensure!(visited == 4140, "enumeration visited {visited} partitions");
        let p = optimize_partition(&g, &OptimizerConfig { seed: k as u64, restarts: 20 }).map_err(|e| e.to_string())?;
        let gap = (p.q - q_best).abs();
        worst = worst.max(gap);
        ensure!(gap <= 1e-12, "fixture {k}: optimizer Q {} vs exhaustive {}", p.q, q_best);
    }
    within_time(start.elapsed(), 10.0)?;
    Ok(format!("planted 4x5 recovered; {} 8-node fixtures, max |dQ| {worst:.1e}", fixtures.len()))
}

/// Q of the one-community partition, and level-by-level nested recovery.
fn modularity_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < 100 {
        let n = rng.random_range(2..40);
        let edges = random_digraph(n, &mut rng);
        let Ok(g) = WeightedDigraph::new(labels(n), edges) else { continue };
        if g.total_weight() == 0.0 {
            continue;
        }
        let q = modularity(&g, &vec![0; n]).map_err(|e| e.to_string())?;
        worst = worst.max(q.abs());
        done += 1;
    }
    ensure!(worst <= 1e-12, "Q(all-in-one) reached {worst:e}");

    // 2 super-blocks x 2 sub-blocks x 4 nodes
    let size = 4;
    let mut edges = Vec::new();
    for i in 0..16 {
        for j in 0..16 {
            if i != j {
                let w = if i / size == j / size {
                    10.0
                } else if i / (2 * size) == j / (2 * size) {
                    5.0
                } else {
                    0.01
                };
                edges.push((i, j, w));
            }
        }
    }
    let g = WeightedDigraph::new(labels(16), edges).map_err(|e| e.to_string())?;
    let h = hierarchical_partition(&g, 3, &OptimizerConfig { seed: 4, restarts: 20 }).map_err(|e| e.to_string())?;
    let supers: Vec<usize> = (0..16).map(|i| i / (2 * size)).collect();
    let subs: Vec<usize> = (0..16).map(|i| i / size).collect();
    ensure!(h.is_nested(), "levels are not nested");
    ensure!(same_grouping(&h.levels[0].partition.assignment, &supers), "level 1 is not the super-blocks");
    ensure!(same_grouping(&h.levels[1].partition.assignment, &subs), "level 2 is not the sub-blocks");
    Ok(format!("max |Q(one community)| {worst:.1e} over 100 graphs; nested 2x2 resolved at levels 1 and 2"))
}

fn synth_into(dir: &Path, world: &WorldConfig, events: &EventConfig) -> Result<(), String> {
    let w = SynthWorld::generate(world).map_err(|e| e.to_string())?;
    let out = generate_events(&w, events).map_err(|e| e.to_string())?;
    write_synth_dir(dir, &w, &out).map_err(|e| e.to_string())?;
    geoflow::pipeline::write_desk_config(dir, events.year).map_err(|e| e.to_string())?;
    Ok(())
}

fn desk_config(dir: &Path, out: &str) -> Result<Config, String> {
    let mut c = Config::load(&dir.join("geoflow.json"), Vec::new()).map_err(|e| e.to_string())?;
    c.output_dir = dir.join(out);
    c.workers = 1;
    Ok(c)
}

/// Full pipeline on a 12-country, 2000-user world.
fn end_to_end() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let world = WorldConfig { countries: 12, blocks: 3, seed: 2012, ..Default::default() };
    let events = EventConfig { users: UserAllocation::Total(2_000), events_per_user: 50, ..Default::default() };
    synth_into(dir, &world, &events)?;

    let start = Instant::now();
    let report = Pipeline::new(desk_config(dir, "a")?).run_all().map_err(|e| e.to_string())?;
    let single = start.elapsed();
    Pipeline::new(desk_config(dir, "b")?).run_all().map_err(|e| e.to_string())?;

    let recovery = report["truth"]["residence_recovery"]["value"].as_f64().unwrap_or(0.0);
    ensure!(recovery == 1.0, "residence recovery {recovery}");
    let z = report["truth"]["mobility"]["max_abs_z"].as_f64().unwrap_or(f64::INFINITY);
    ensure!(z <= 3.0, "mobility rate off by {z:.2} sigma");
    let total = report["network"]["total_flow"]["value"].as_f64().unwrap_or(0.0);
    let bal = report["network"]["balance_sum"]["value"].as_f64().unwrap_or(f64::NAN);
    ensure!(bal.abs() <= 1e-12 * total, "sum of balances {bal:e} against total flow {total:e}");

    let out = dir.join("a");
    for f in [files::DAILY_OUTBOUND, files::DAILY_INBOUND] {
        let rows: Vec<DailyRow> = read_rows(&out.join(f)).map_err(|e| e.to_string())?;
        let mut peak: BTreeMap<String, (f64, u64)> = BTreeMap::new();
        for r in rows {
            let e = peak.entry(r.country.to_string()).or_insert((0.0, 0));
            e.0 = e.0.max(r.normalized);
            e.1 = e.1.max(r.count);
        }
        for (c, (max, count)) in peak {
            if count > 0 {
                ensure!(max == 100.0, "{f}: {c} peaks at {max}");
            }
        }
    }
    let a = artifact_listing(&out).map_err(|e| e.to_string())?;
    let b = artifact_listing(&dir.join("b")).map_err(|e| e.to_string())?;
    ensure!(a == b, "two runs differ");
    within_time(single, 10.0)?;
    Ok(format!(
        "recovery {recovery}, max mobility |z| {z:.2}, balance sum {bal:.1e}, {} identical artifacts, {:.2} s single worker",
        a.len(),
        single.as_secs_f64()
    ))
}

/// Speed-filter validity and idempotence, frozen source filter idempotence,
/// and bot-source removal.
fn cleaning_properties() -> Outcome {
    let world = SynthWorld::generate(&WorldConfig { countries: 10, seed: 6, ..Default::default() }).map_err(|e| e.to_string())?;
    let cfg = EventConfig { users: UserAllocation::Total(3_000), events_per_user: 30, bot_fraction: 0.05, ..Default::default() };
    let out = generate_events(&world, &cfg).map_err(|e| e.to_string())?;

    // teleports: random far-away events squeezed between real ones
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut events = out.events.clone();
    let mut injected = 0;
    for e in &out.events {
        if rng.random_bool(0.05) {
            let lat = rng.random_range(-60.0..60.0);
            let lon = rng.random_range(-180.0..180.0);
            let fake = GeoEvent::new(e.user_id.clone(), e.timestamp + 1, lat, lon, e.source.clone(), e.country.clone())?;
            events.push(fake);
            injected += 1;
        }
    }
    let trajs = build_trajectories(events);
    let (filtered, removed) = speed_filter_all(&trajs, 1000.0).map_err(|e| e.to_string())?;
    let mut pairs = 0usize;
    for t in filtered.values() {
        for w in t.events().windows(2) {
            pairs += 1;
            let v = speed_kmh(&w[0], &w[1]);
            ensure!(v <= 1000.0, "{} moves at {v:.1} km/h after filtering", t.user_id());
        }
    }
    let (again, removed_again) = speed_filter_all(&filtered, 1000.0).map_err(|e| e.to_string())?;
    ensure!(removed_again == 0 && again == filtered, "speed filter is not idempotent");

    let clean: Vec<GeoEvent> = filtered.into_values().flat_map(|t| t.into_events()).collect();
    let outcome = source_popularity_filter(clean, 0.95, PopularityWeight::Users).map_err(|e| e.to_string())?;
    let (frozen, stats) = apply_source_filter(outcome.events.clone(), &outcome.retained);
    ensure!(frozen == outcome.events && stats.events_after == stats.events_before, "source filter is not idempotent");
    let bots = &out.truth.bot_sources;
    ensure!(!bots.is_empty(), "corpus has no bot sources");
    let leaked: Vec<&String> = bots.iter().filter(|b| outcome.events.iter().any(|e| &e.source == *b)).collect();
    ensure!(leaked.is_empty(), "bot sources survived: {leaked:?}");
    let user_share = outcome.stats.user_retention();
    Ok(format!(
        "{injected} teleports injected, {removed} events removed, {pairs} pairs checked; {} bot sources removed, user retention {user_share:.3}",
        bots.len()
    ))
}

/// Pipeline fits on data generated with published empirical values.
fn estimator_sanity() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut parts = Vec::new();

    let walk = tmp.path().join("walk");
    synth_into(
        &walk,
        &WorldConfig { countries: 6, blocks: 2, seed: 162, ..Default::default() },
        &EventConfig {
            users: UserAllocation::Total(2_000),
            events_per_user: 60,
            trip_rate: 0.0,
            home_motion: HomeMotion::LevyWalk { exponent: 1.62, xmin_km: 1.0, xmax_km: 1e4 },
            ..Default::default()
        },
    )?;
    let mut c = desk_config(&walk, "out")?;
    c.fit.displacement_xmax_km = Some(1e4);
    let p = Pipeline::new(c);
    p.run_all().map_err(|e| e.to_string())?;
    let fits: Fits = read_json(&p.out(files::FITS)).map_err(|e| e.to_string())?;
    let beta = fits.powerlaw.displacement.truncated.as_ref().map(|f| f.exponent).unwrap_or(f64::NAN);
    ensure!((beta - 1.62).abs() <= 0.05, "displacement exponent {beta:.4}, want 1.62 +- 0.05");
    parts.push(format!("displacement {beta:.4}"));

    let grav = tmp.path().join("gravity");
    synth_into(
        &grav,
        &WorldConfig {
            countries: 16,
            blocks: 1,
            seed: 89,
            gravity: GravityParams { a: 1.0, alpha: 0.89, beta: 0.69, gamma: 1.1 },
            ..Default::default()
        },
        &EventConfig { users: UserAllocation::Total(200_000), events_per_user: 8, trip_rate: 1.0, ..Default::default() },
    )?;
    let p = Pipeline::new(desk_config(&grav, "out")?);
    p.run_all().map_err(|e| e.to_string())?;
    let fits: Fits = read_json(&p.out(files::FITS)).map_err(|e| e.to_string())?;
    let g = fits.gravity.ok_or("no gravity fit")?.est;
    for (name, got, want) in [("alpha", g.alpha, 0.89), ("beta", g.beta, 0.69), ("gamma", g.gamma, 1.1)] {
        ensure!((got - want).abs() <= 0.05, "gravity {name} {got:.4}, want {want} +- 0.05");
    }
    parts.push(format!("gravity {:.3}/{:.3}/{:.3} over {} pairs", g.alpha, g.beta, g.gamma, g.n_pairs));
    Ok(parts.join("; "))
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("gravity recovery", gravity_recovery),
        ("power-law recovery", power_law_recovery),
        ("planted partition", planted_partition),
        ("modularity invariants", modularity_invariants),
        ("end-to-end determinism and correctness", end_to_end),
        ("cleaning properties", cleaning_properties),
        ("estimator sanity", estimator_sanity),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name} ({detail}) [{secs:.2} s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {name} ({why}) [{secs:.2} s]", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
