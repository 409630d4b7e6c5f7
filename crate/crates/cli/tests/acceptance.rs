//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines show up in plain
//! `cargo test` output. Exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reclaim_core::bounds::{Activation, FeedForwardNetwork, Layer, PolicySpec};
use reclaim_core::compose::{recycle_graph, EdgeAsset, EdgeAssets};
use reclaim_core::infimum::{bound_infimum, InfimumBounds, RefinementConfig};
use reclaim_core::learner::{synthesize_certificate, TrainConfig};
use reclaim_core::model::{
    Aabb, Edge, ReachAvoidSpec, Region, StochasticSystem, TaskGraph, Vertex,
};
use reclaim_core::reclaim::{reclaim, reclaim_threshold, ReclaimStatus};
use reclaim_core::scenarios::{self, room_region};
use reclaim_core::simulate::{estimate_reach_avoid, make_absorbing, SimConfig};
use reclaim_core::verifier::{
    max_certifiable_threshold, verify_certificate, Condition, Verdict, VerificationConfig,
};
use serde_json::Value;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn load_cert(name: &str) -> FeedForwardNetwork {
    let text = std::fs::read_to_string(fixture(name)).expect("fixture exists");
    serde_json::from_str(&text).expect("fixture parses")
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> Result<Duration, String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:.2?}, limit {limit:?}"))?;
    Ok(t)
}

/// Edges checked against simulation and synthesis.
const EDGES: [Edge; 2] = [(4, 5), (0, 1)];

fn edge_fixture(e: Edge) -> String {
    format!("certs/nine_rooms_{}_{}.json", e.0, e.1)
}

/// Corners and centre of every initial box.
fn starts(spec: &ReachAvoidSpec) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for b in spec.initial.boxes() {
        let d = b.dim();
        for mask in 0..1usize << d {
            out.push(
                (0..d)
                    .map(|i| {
                        if mask >> i & 1 == 1 {
                            b.upper()[i]
                        } else {
                            b.lower()[i]
                        }
                    })
                    .collect(),
            );
        }
        out.push(b.center());
    }
    out
}

fn reclamation_formula() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 10_000;
    let bounds = |lo: f64, hi: f64| InfimumBounds {
        i_lower: lo,
        i_upper: hi,
        cells_explored: 1,
        converged: true,
    };
    for k in 0..n {
        let rho: f64 = rng.random_range(0.0..1.0);
        let i_lower = match k % 4 {
            0 => 1.0,
            1 => 1.0 / (1.0 - rho),
            _ => rng.random_range(0.0..10.0),
        };
        let i_upper = i_lower + rng.random_range(0.0..2.0);
        let r = reclaim_threshold(rho, bounds(i_lower, i_upper)).map_err(|e| e.to_string())?;
        if i_lower < 1.0 {
            ensure(r.status == ReclaimStatus::NoReclaimableThreshold, || {
                format!("I⁻ = {i_lower} reclaimed")
            })?;
            continue;
        }
        ensure(r.status == ReclaimStatus::Reclaimed, || {
            format!("I⁻ = {i_lower} not reclaimed")
        })?;
        let expect = if 1.0 / i_lower >= 1.0 - rho {
            1.0 - 1.0 / i_lower
        } else {
            rho
        };
        ensure((r.rho_lower - expect).abs() <= 1e-12, || {
            format!(
                "rho {rho}, I⁻ {i_lower}: got {}, want {expect}",
                r.rho_lower
            )
        })?;
        match k % 4 {
            0 => ensure(r.rho_lower.abs() <= 1e-12, || "I = 1 must give 0".into())?,
            1 => ensure((r.rho_lower - rho).abs() <= 1e-12, || {
                "I = 1/(1-ρ) must give ρ".into()
            })?,
            _ => {}
        }
        ensure(r.rho_lower <= r.rho_upper, || "ρ̃⁻ above ρ̃⁺".into())?;
    }
    let t = within(Duration::from_secs(1), start)?;
    Ok(format!("{n} triples in {t:.2?}"))
}

fn random_network(rng: &mut ChaCha8Rng) -> FeedForwardNetwork {
    let mut layer = |inp: usize, out: usize, act| {
        let scale = (2.0 / inp as f64).sqrt();
        let w = (0..out)
            .map(|_| (0..inp).map(|_| rng.random_range(-scale..scale)).collect())
            .collect();
        let b = (0..out).map(|_| rng.random_range(-0.5..0.5)).collect();
        Layer::new(w, b, act).unwrap()
    };
    FeedForwardNetwork::new(vec![
        layer(2, 16, Activation::Relu),
        layer(16, 16, Activation::Relu),
        layer(16, 1, Activation::Softplus),
    ])
    .unwrap()
}

fn random_box(rng: &mut ChaCha8Rng) -> Aabb {
    let lo: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..1.5)).collect();
    let hi = lo.iter().map(|l| l + rng.random_range(0.05..1.0)).collect();
    Aabb::new(lo, hi).unwrap()
}

fn infimum_soundness() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = RefinementConfig::default();
    let mut worst_slack = f64::INFINITY;
    for k in 0..100 {
        let net = random_network(&mut rng);
        let cell = random_box(&mut rng);
        let b =
            bound_infimum(&net, &Region::from(cell.clone()), &cfg).map_err(|e| e.to_string())?;
        let mut grid_min = f64::INFINITY;
        for i in 0..200 {
            for j in 0..200 {
                let x = cell.lerp(&[i as f64 / 199.0, j as f64 / 199.0]);
                grid_min = grid_min.min(net.evaluate(&x).unwrap()[0]);
            }
        }
        ensure(b.i_lower <= grid_min, || {
            format!("network {k}: I⁻ {} above grid min {grid_min}", b.i_lower)
        })?;
        ensure(b.i_lower <= b.i_upper, || {
            format!("network {k}: I⁻ above I⁺")
        })?;
        worst_slack = worst_slack.min(grid_min - b.i_lower);
    }
    let mut worst_gap: f64 = 0.0;
    for k in 0..20 {
        let w = vec![vec![
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
        ]];
        let affine = FeedForwardNetwork::new(vec![Layer::new(
            w,
            vec![rng.random_range(-1.0..1.0)],
            Activation::Identity,
        )
        .unwrap()])
        .unwrap();
        let b = bound_infimum(&affine, &Region::from(random_box(&mut rng)), &cfg)
            .map_err(|e| e.to_string())?;
        ensure(b.gap() <= 1e-6 && b.cells_explored <= 10_000, || {
            format!(
                "affine {k}: gap {} after {} cells",
                b.gap(),
                b.cells_explored
            )
        })?;
        worst_gap = worst_gap.max(b.gap());
    }
    let t = within(Duration::from_secs(60), start)?;
    Ok(format!(
        "100 networks sound (min slack {worst_slack:.2e}), affine gap <= {worst_gap:.1e}, {t:.2?}"
    ))
}

fn absorbing_soundness() -> Check {
    let start = Instant::now();
    let sim = SimConfig {
        horizon: 300,
        trajectories: 100_000,
        seed: 11,
        confidence: 0.99,
    };
    let refine = RefinementConfig::default();
    let mut cases = 0;
    let mut tightest = f64::INFINITY;
    let mut check = |label: String,
                     sys: &StochasticSystem,
                     policy: &PolicySpec,
                     spec: &ReachAvoidSpec,
                     cert: &FeedForwardNetwork,
                     region: &Region|
     -> Result<(), String> {
        let r = reclaim(cert, spec.rho, region, &refine).map_err(|e| e.to_string())?;
        let absorbing = make_absorbing(sys, region).map_err(|e| e.to_string())?;
        let est = estimate_reach_avoid(&absorbing, policy, spec, &starts(spec), &sim)
            .map_err(|e| e.to_string())?;
        let lower = est.worst.estimate.ci_lower;
        ensure(lower >= r.guaranteed() - 0.02, || {
            format!(
                "{label}: CP lower {lower:.4} below reclaimed {:.4} - 0.02",
                r.guaranteed()
            )
        })?;
        if r.is_reclaimed() {
            tightest = tightest.min(lower - r.guaranteed());
        }
        cases += 1;
        Ok(())
    };

    let toy = scenarios::toy_1d();
    let toy_cert = scenarios::toy_certificate();
    for (lo, hi) in [(0.2, 0.3), (0.5, 0.6), (0.8, 0.9)] {
        let region = Region::from(Aabb::cube(1, lo, hi).unwrap());
        check(
            format!("toy [{lo}, {hi}]"),
            &toy.system,
            &toy.policy,
            &toy.global_spec,
            &toy_cert,
            &region,
        )?;
    }
    let (capped, capped_cert) = scenarios::toy_safety_capped();
    let region = Region::from(Aabb::cube(1, 0.1, 0.15).unwrap());
    check(
        "capped toy [0.1, 0.15]".into(),
        &capped.system,
        &capped.policy,
        &capped.global_spec,
        &capped_cert,
        &region,
    )?;

    let rooms = scenarios::nine_rooms();
    let mut reclaimed = 0;
    for e in EDGES {
        let spec = rooms.edge_subtask(e, 0.5).map_err(|e| e.to_string())?;
        let policy = rooms.edge_policy(e).map_err(|e| e.to_string())?;
        let cert = load_cert(&edge_fixture(e));
        for v in (0..9).filter(|v| *v != e.0 && *v != e.1) {
            let region = room_region(v);
            if reclaim(&cert, spec.rho, &region, &refine)
                .map_err(|e| e.to_string())?
                .is_reclaimed()
            {
                reclaimed += 1;
            }
            check(
                format!("edge {e:?} room {v}"),
                &rooms.system,
                &policy,
                &spec,
                &cert,
                &region,
            )?;
        }
    }
    let t = start.elapsed();
    Ok(format!(
        "{cases} cases ({reclaimed} nine-rooms reclaims), min margin over reclaimed cases {tightest:.4}, {t:.2?}"
    ))
}

fn line_graph(n: usize, edges: Vec<Edge>) -> TaskGraph {
    let beta = (0..n)
        .map(|v| {
            (
                v,
                Region::from(Aabb::cube(1, v as f64, v as f64 + 0.5).unwrap()),
            )
        })
        .collect();
    TaskGraph::new((0..n).collect(), edges, 0, n - 1, beta, BTreeMap::new()).unwrap()
}

/// Best path by exhaustive enumeration: smallest `-log2` sum, ties to the
/// lexicographically smallest path.
fn enumerate_best(graph: &TaskGraph, rho: &BTreeMap<Edge, f64>) -> Option<(Vec<Vertex>, f64, f64)> {
    fn walk(
        graph: &TaskGraph,
        rho: &BTreeMap<Edge, f64>,
        path: &mut Vec<Vertex>,
        cost: f64,
        product: f64,
        best: &mut Option<(Vec<Vertex>, f64, f64)>,
    ) {
        let v = *path.last().unwrap();
        if v == graph.v_goal() {
            let better = match best {
                None => true,
                Some((p, c, _)) => cost < *c || (cost == *c && *path < *p),
            };
            if better {
                *best = Some((path.clone(), cost, product));
            }
            return;
        }
        for next in graph.successors(v).collect::<Vec<_>>() {
            let r = rho[&(v, next)];
            if r <= 0.0 || path.contains(&next) {
                continue;
            }
            path.push(next);
            walk(graph, rho, path, cost + -r.log2(), product * r, best);
            path.pop();
        }
    }
    let mut best = None;
    walk(graph, rho, &mut vec![graph.v_start()], 0.0, 1.0, &mut best);
    best
}

fn compare_plan(
    label: &str,
    graph: &TaskGraph,
    rng: &mut ChaCha8Rng,
    dim: usize,
    changed: &Region,
) -> Result<bool, String> {
    let mut assets = BTreeMap::new();
    let mut expect = BTreeMap::new();
    for e in graph.edges() {
        let c: f64 = rng.random_range(0.5..30.0);
        let rho: f64 = rng.random_range(0.05..0.99);
        let reclaimed = if c < 1.0 { 0.0 } else { rho.min(1.0 - 1.0 / c) };
        expect.insert(*e, reclaimed);
        assets.insert(
            *e,
            EdgeAsset {
                certificate: FeedForwardNetwork::constant(dim, c).unwrap(),
                threshold: rho,
                policy: PolicySpec::proportional(1.0, vec![0.0; dim]),
            },
        );
    }
    let assets = EdgeAssets::new(graph, assets).map_err(|e| e.to_string())?;
    let got = recycle_graph(graph, &assets, changed, &RefinementConfig::default())
        .map_err(|e| e.to_string())?;
    for r in &got.edges {
        let want = expect[&(r.from, r.to)];
        ensure((r.result.guaranteed() - want).abs() <= 1e-12, || {
            format!(
                "{label}: edge {:?} reclaimed {} want {want}",
                (r.from, r.to),
                r.result.guaranteed()
            )
        })?;
    }
    match (got.plan, enumerate_best(graph, &expect)) {
        (None, None) => Ok(false),
        (Some(plan), Some((path, _, product))) => {
            ensure(plan.path == path, || {
                format!("{label}: path {:?}, enumeration {path:?}", plan.path)
            })?;
            ensure((plan.global_threshold - product).abs() <= 1e-12, || {
                format!(
                    "{label}: threshold {} vs product {product}",
                    plan.global_threshold
                )
            })?;
            let along: f64 = plan
                .per_edge_thresholds
                .iter()
                .map(|t| t.threshold)
                .product();
            ensure((along - plan.global_threshold).abs() <= 1e-12, || {
                format!("{label}: per-edge product mismatch")
            })?;
            Ok(true)
        }
        (a, b) => Err(format!("{label}: plan {a:?} vs enumeration {b:?}")),
    }
}

fn run_cli(args: &[&str]) -> Result<(i32, Value), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_reclaim"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    let report = serde_json::from_slice(&out.stdout).map_err(|e| format!("bad report: {e}"))?;
    Ok((out.status.code().unwrap_or(-1), report))
}

fn composition() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let rooms = scenarios::nine_rooms();
    for k in 0..20 {
        compare_plan(
            &format!("nine rooms #{k}"),
            &rooms.graph,
            &mut rng,
            2,
            &room_region(4),
        )?;
    }
    let mut with_path = 0;
    for k in 0..200 {
        let n = rng.random_range(2..=12);
        let edges = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|_| rng.random_bool(0.35))
            .collect();
        let graph = line_graph(n, edges);
        let changed = Region::from(Aabb::cube(1, 0.0, 1.0).unwrap());
        if compare_plan(&format!("dag #{k}"), &graph, &mut rng, 1, &changed)? {
            with_path += 1;
        }
    }
    let graph = fixture("example_graph/graph.json");
    let (code, r) = run_cli(&[
        "compose",
        "--graph",
        graph.to_str().unwrap(),
        "--region",
        "room:2",
    ])?;
    let rho = r["result"]["plan"]["global_threshold"]
        .as_f64()
        .unwrap_or(f64::NAN);
    ensure(
        code == 0 && (rho - 0.343728).abs() <= 1e-12 && rho >= 0.33,
        || format!("example graph: exit {code}, threshold {rho}"),
    )?;
    let t = within(Duration::from_secs(10), start)?;
    Ok(format!("nine rooms x20 and 200 DAGs ({with_path} with a path) match enumeration; example graph {rho}; {t:.2?}"))
}

fn verifier_ground_truth() -> Check {
    let start = Instant::now();
    let toy = scenarios::toy_1d();
    let spec = toy.global_spec.with_rho(0.9).unwrap();
    let cfg = VerificationConfig::default();
    let verify = |cert: &FeedForwardNetwork, spec: &ReachAvoidSpec| {
        verify_certificate(cert, &toy.system, &toy.policy, spec, &cfg).map_err(|e| e.to_string())
    };
    let r = verify(&scenarios::toy_certificate(), &spec)?;
    ensure(r.verdict == Verdict::Certified, || {
        format!("toy certificate: {:?}", r.verdict)
    })?;

    let identity = FeedForwardNetwork::new(vec![Layer::new(
        vec![vec![1.0]],
        vec![0.0],
        Activation::Relu,
    )
    .unwrap()])
    .unwrap();
    let r = verify(&identity, &spec)?;
    ensure(
        r.verdict == Verdict::Refuted
            && r.counterexample_cells
                .iter()
                .any(|c| c.condition == Condition::Decrease && c.certain),
        || format!("C = x: {:?} {:?}", r.verdict, r.failed_condition),
    )?;

    let r = verify(&FeedForwardNetwork::constant(1, 2.0).unwrap(), &spec)?;
    ensure(
        r.verdict == Verdict::Refuted && r.failed_condition == Some(Condition::Initial),
        || format!("C = 2: {:?} {:?}", r.verdict, r.failed_condition),
    )?;

    let (capped, cert) = scenarios::toy_safety_capped();
    let tol = 1e-3;
    let best = max_certifiable_threshold(
        &cert,
        &capped.system,
        &capped.policy,
        &capped.global_spec,
        0.0,
        0.999,
        tol,
        &cfg,
    )
    .map_err(|e| e.to_string())?;
    ensure(
        best.is_some_and(|b| (0.75 - tol..=0.75).contains(&b)),
        || format!("capped toy threshold {best:?}"),
    )?;
    let t = within(Duration::from_secs(30), start)?;
    Ok(format!(
        "toy certified, C = x and C = 2 refuted, capped threshold {:.4}, {t:.2?}",
        best.unwrap()
    ))
}

fn timed_cli(args: &[&str]) -> Result<(Duration, Value), String> {
    let start = Instant::now();
    let (code, r) = run_cli(args)?;
    let t = start.elapsed();
    ensure(code == 0, || {
        format!("{} exited {code}: {}", args[0], r["result"])
    })?;
    Ok((t, r))
}

fn strs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

fn relative_speed() -> Check {
    let cert = fixture(&edge_fixture((4, 5)));
    let cert = cert.to_str().unwrap();
    let task = [
        "--scenario",
        "builtin:nine_rooms",
        "--edge",
        "4,5",
        "--rho",
        "0.5",
        "--certificate",
        cert,
    ];
    let with = |cmd: &str, extra: &[&str]| -> Vec<String> {
        std::iter::once(cmd)
            .chain(task)
            .chain(extra.iter().copied())
            .map(String::from)
            .collect()
    };

    let (t_reclaim, r) = timed_cli(&strs(&with("reclaim", &["--region", "room:1"])))?;
    let rho = r["result"]["rho_lower"].as_f64().unwrap_or(0.0);
    ensure(rho > 0.0, || "nothing reclaimed on room 1".into())?;
    let rho_arg = format!("{rho}");
    // Baseline: verify the reclaimed threshold on the worst case.
    let mut verify = with("verify", &["--worst-case", "room:1"]);
    verify[6] = rho_arg;
    let (t_verify, _) = timed_cli(&strs(&verify))?;
    let (t_recertify, _) = timed_cli(&strs(&with(
        "recertify",
        &["--region", "room:1", "--search-tol", "1e-2"],
    )))?;
    let ratio = t_recertify.as_secs_f64() / t_reclaim.as_secs_f64();
    ensure(ratio >= 50.0, || {
        format!("recertify only {ratio:.1}x slower")
    })?;
    ensure(t_reclaim < t_verify && t_verify < t_recertify, || {
        format!("ordering broken: {t_reclaim:.2?} / {t_verify:.2?} / {t_recertify:.2?}")
    })?;
    Ok(format!(
        "reclaim {t_reclaim:.2?} < worst-case verify {t_verify:.2?} < recertify {t_recertify:.2?} ({ratio:.0}x)"
    ))
}

fn fast_verification() -> VerificationConfig {
    VerificationConfig {
        initial_cells_per_dim: 64,
        max_refine_depth: 8,
        noise_cells_per_dim: 2,
        ..Default::default()
    }
}

fn synthesis() -> Check {
    let start = Instant::now();
    let mut notes = Vec::new();
    let run = |label: &str, sys, policy: &PolicySpec, spec: &ReachAvoidSpec, cfg: &TrainConfig| {
        let a =
            synthesize_certificate(sys, policy, spec, cfg).map_err(|e| format!("{label}: {e}"))?;
        let b =
            synthesize_certificate(sys, policy, spec, cfg).map_err(|e| format!("{label}: {e}"))?;
        ensure(a.report.is_certified() && a.log.len() <= 10, || {
            format!("{label}: {} rounds", a.log.len())
        })?;
        ensure(a.certificate == b.certificate, || {
            format!("{label}: reruns differ")
        })?;
        Ok::<_, String>((a.certificate, a.log.len()))
    };

    let toy = scenarios::toy_1d();
    let spec = toy.global_spec.with_rho(0.5).unwrap();
    let cfg = TrainConfig {
        sample_count: 1024,
        epochs: 20,
        verification: VerificationConfig {
            noise_cells_per_dim: 4,
            ..fast_verification()
        },
        ..Default::default()
    };
    let (_, rounds) = run("toy", &toy.system, &toy.policy, &spec, &cfg)?;
    notes.push(format!("toy {rounds}"));

    let rooms = scenarios::nine_rooms();
    let cfg = TrainConfig {
        verification: fast_verification(),
        ..Default::default()
    };
    for e in EDGES {
        let spec = rooms.edge_subtask(e, 0.5).unwrap();
        let policy = rooms.edge_policy(e).unwrap();
        let (cert, rounds) = run(&format!("edge {e:?}"), &rooms.system, &policy, &spec, &cfg)?;
        ensure(cert == load_cert(&edge_fixture(e)), || {
            format!("edge {e:?} differs from its fixture")
        })?;
        notes.push(format!("edge {e:?} {rounds}"));
    }
    let t = within(Duration::from_secs(15 * 60), start)?;
    Ok(format!(
        "certified at rho 0.5, rounds: {}; deterministic; {t:.2?}",
        notes.join(", ")
    ))
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("reclamation formula", reclamation_formula),
        ("infimum soundness", infimum_soundness),
        ("absorbing-dynamics soundness", absorbing_soundness),
        ("path composition", composition),
        ("verifier ground truth", verifier_ground_truth),
        ("reclaim vs recertify speed", relative_speed),
        ("end-to-end synthesis", synthesis),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
