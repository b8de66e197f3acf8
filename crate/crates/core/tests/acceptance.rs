//! Acceptance suite. Runs every criterion, prints one line each, and exits
//! nonzero if any fails.

mod common;

use std::time::{Duration, Instant};

use floydlab::cli::execute;
use floydlab::divergence::{
    criterion_check, div_function_estimate, growth_fit, CriterionVerdict, DivValue, DivergenceParams,
    EstimateOptions, FitThresholds, GrowthVerdict, TripleProtocol,
};
use floydlab::floyd::{
    check_sublinearity, floyd_distance, floyd_weighting, sphere_floyd_diameter, validate_floyd_function,
    DiameterOptions, FloydError, FloydFunction, SublinearityVerdict,
};
use floydlab::graph::GraphBall;
use floydlab::groups::{cayley_ball, parse_model, Free, FreeAbelian, GroupModel, DEFAULT_VERTEX_CAP};
use floydlab::quasigeodesic::{escape_constants, escape_inequality_sides, qg_certify};
use floydlab::thickness::{verify_chains, verify_cover, verify_thick, Subset, ThickParams, ThickStructure};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{ball_from, brute_force_floyd, inverse_power, random_connected_edges, Grid};

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Outcome,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn diameters(ball: &GraphBall, f: &FloydFunction, radii: impl IntoIterator<Item = u32>) -> Result<Vec<f64>, String> {
    let w = floyd_weighting(ball, f).map_err(|e| e.to_string())?;
    radii
        .into_iter()
        .map(|r| sphere_floyd_diameter(&w, r, DiameterOptions::default()).map(|d| d.diameter).map_err(|e| e.to_string()))
        .collect()
}

fn oracle_equivalence() -> Outcome {
    let f = FloydFunction::inverse_power(2.0).unwrap();
    let oracle_f = inverse_power(2.0);
    let mut graphs: Vec<(usize, Vec<(usize, usize)>)> =
        (0..200).map(|seed| random_connected_edges(seed, 8, 0.3)).collect();
    graphs.push((4, vec![(0, 1), (1, 2), (2, 3)]));
    graphs.push((4, vec![(0, 1), (1, 2), (2, 3), (0, 3)]));
    graphs.push((8, (0..8).flat_map(|u| (u + 1..8).map(move |v| (u, v))).collect()));
    graphs.push((8, (1..8).map(|v| (0, v)).collect()));
    let mut worst = 0.0f64;
    let mut pairs = 0;
    for (n, edges) in &graphs {
        let ball = ball_from(*n, edges);
        let w = floyd_weighting(&ball, &f).map_err(|e| e.to_string())?;
        let oracle = brute_force_floyd(*n, edges, 0, &oracle_f);
        for u in 0..*n {
            let d = w.distances_from(u);
            for v in 0..*n {
                let err = (d[v] - oracle[u][v]).abs();
                worst = worst.max(err);
                pairs += 1;
                ensure(err <= 1e-12, || format!("pair ({u},{v}) on {edges:?}: {} vs oracle {}", d[v], oracle[u][v]))?;
            }
        }
        ensure(floyd_distance(&w, 0, n - 1) == w.distances_from(0)[n - 1], || "floyd_distance disagrees".into())?;
    }
    Ok(format!("{} graphs, {pairs} pairs, max error {worst:e}", graphs.len()))
}

fn thick_side_signature() -> Outcome {
    let ball = cayley_ball(&FreeAbelian { rank: 2 }, 48, DEFAULT_VERTEX_CAP).map_err(|e| e.to_string())?;
    let d = diameters(&ball, &FloydFunction::inverse_power(2.0).unwrap(), 4..=16)?;
    ensure(d.windows(2).all(|p| p[1] < p[0]), || format!("not strictly decreasing: {d:?}"))?;
    let ratio = d[12] / d[0];
    ensure(ratio <= 0.35, || format!("diam(S16)/diam(S4) = {ratio}"))?;
    Ok(format!("diam(S4) = {:.6}, diam(S16) = {:.6}, ratio {ratio:.4}", d[0], d[12]))
}

fn non_thick_contrast() -> Outcome {
    let ball = cayley_ball(&Free { rank: 2 }, 10, DEFAULT_VERTEX_CAP).map_err(|e| e.to_string())?;
    let d = diameters(&ball, &FloydFunction::inverse_power(2.0).unwrap(), 2..=10)?;
    ensure(d.windows(2).all(|p| p[1] >= p[0]), || format!("decreasing somewhere: {d:?}"))?;
    ensure(d.iter().all(|&x| x >= 4.0), || format!("below 4: {d:?}"))?;
    let last = d[8];
    ensure((5.0..=5.3).contains(&last), || format!("diam(S10) = {last}"))?;
    // Unique tree paths through the identity: 2 Σ_{k<10} f(k).
    let oracle: f64 = 2.0 * (0..10).map(|k| inverse_power(2.0)(k)).sum::<f64>();
    ensure((last - oracle).abs() < 1e-12, || format!("diam(S10) = {last}, path sum {oracle}"))?;
    Ok(format!("diam(S2) = {}, diam(S10) = {last:.4} (path sum {oracle:.4})", d[0]))
}

fn margin_stability() -> Outcome {
    let f = FloydFunction::inverse_power(2.0).unwrap();
    let z2 = FreeAbelian { rank: 2 };
    let small = diameters(&cayley_ball(&z2, 48, DEFAULT_VERTEX_CAP).map_err(|e| e.to_string())?, &f, 1..=16)?;
    let large = diameters(&cayley_ball(&z2, 64, DEFAULT_VERTEX_CAP).map_err(|e| e.to_string())?, &f, 1..=16)?;
    let mut worst = (0.0, 0);
    for (i, (a, b)) in small.iter().zip(&large).enumerate() {
        let change = (a - b).abs() / b;
        if change > worst.0 {
            worst = (change, i + 1);
        }
    }
    ensure(worst.0 <= 0.05, || format!("r = {} changes by {:.2}%", worst.1, 100.0 * worst.0))?;
    Ok(format!("largest change {:.2}% at r = {}", 100.0 * worst.0, worst.1))
}

fn exhaustive(model: &dyn GroupModel, radius: u32, n_max: u32) -> Result<Vec<floydlab::divergence::DivergenceSample>, String> {
    let ball = cayley_ball(model, radius, DEFAULT_VERTEX_CAP).map_err(|e| e.to_string())?;
    let est = div_function_estimate(
        &ball,
        n_max,
        DivergenceParams::default(),
        TripleProtocol::Exhaustive,
        0,
        EstimateOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    Ok(est.samples)
}

fn divergence_dichotomy() -> Outcome {
    let z2 = exhaustive(&FreeAbelian { rank: 2 }, 36, 12)?;
    let window: Vec<_> = z2.iter().copied().filter(|s| s.n >= 4).collect();
    let fit = growth_fit(&window, FitThresholds::default()).map_err(|e| e.to_string())?;
    let slope = fit.slope.unwrap_or(f64::NAN);
    ensure((0.8..=1.2).contains(&slope), || format!("Z² slope {slope}"))?;
    let f2 = exhaustive(&Free { rank: 2 }, 10, 5)?;
    ensure(f2[0].value == DivValue::Finite(1), || format!("F₂ D(1) = {}", f2[0].value))?;
    ensure(f2[1..].iter().all(|s| s.value.is_infinite()), || {
        format!("F₂ values {:?}", f2.iter().map(|s| s.value.to_string()).collect::<Vec<_>>())
    })?;
    Ok(format!("Z² slope {slope:.4} over n = 4..12; F₂ D(n) = inf for n = 2..5"))
}

fn decay_pipeline() -> Outcome {
    let samples = exhaustive(&FreeAbelian { rank: 2 }, 180, 60)?;
    let f = FloydFunction::inverse_power(2.0).unwrap();
    let report = criterion_check(&samples, &f, DivergenceParams::default(), 1..=30).map_err(|e| e.to_string())?;
    let max = report.terms.iter().filter_map(|t| t.product).fold(0.0, f64::max);
    let last = report.terms.last().and_then(|t| t.product).unwrap_or(f64::NAN);
    ensure(report.verdict == CriterionVerdict::Decaying, || format!("verdict {}, final {last}, max {max}", report.verdict))?;
    ensure(last < 0.1 * max, || format!("final {last} vs max {max}"))?;
    Ok(format!("n = 1..30: final term {last:.4} < 0.1 · max {max:.4}"))
}

fn floyd_validation() -> Outcome {
    let inv = validate_floyd_function(&FloydFunction::inverse_power(2.0).unwrap(), 1000).map_err(|e| e.to_string())?;
    ensure(inv.k_observed == 4.0 && inv.condition_a_ok, || format!("invpow:2 K = {}", inv.k_observed))?;
    let exp = validate_floyd_function(&FloydFunction::exponential(0.5).unwrap(), 1000).map_err(|e| e.to_string())?;
    ensure(exp.k_observed == 2.0 && exp.condition_a_ok, || format!("exp:0.5 K = {}", exp.k_observed))?;
    let table = FloydFunction::table(vec![1.0, 2.0, 1.0]);
    let rejected = match table {
        Err(FloydError::ConditionAViolated { .. }) => true,
        Ok(t) => matches!(validate_floyd_function(&t, 3), Err(FloydError::ConditionAViolated { .. })),
        Err(_) => false,
    };
    ensure(rejected, || "table [1,2,1] not rejected with ConditionAViolated".into())?;
    let sub = check_sublinearity(&FloydFunction::inverse_power(2.0).unwrap(), 100).map_err(|e| e.to_string())?;
    let (first, last) = (sub.values[0], *sub.values.last().unwrap());
    ensure(last < 0.1 * first && sub.verdict == SublinearityVerdict::TendingToZero, || {
        format!("n·f(n): {first} → {last}")
    })?;
    Ok(format!("K(invpow:2) = {}, K(exp:0.5) = {}, [1,2,1] rejected, 100·f(100) = {last}", inv.k_observed, exp.k_observed))
}

fn escape_constants_grid() -> Outcome {
    for c in [1.0, 1.5, 2.0, 3.0, 4.0] {
        let e = escape_constants(c).map_err(|e| e.to_string())?;
        ensure(e.k == 4.0, || format!("K = {} for C = {c}", e.k))?;
        for step in 1..=200 {
            let r = e.r + 0.5 * step as f64;
            let (lhs, rhs) = escape_inequality_sides(e.k, c, r);
            ensure(lhs < rhs, || format!("C = {c}, r = {r}: {lhs} ≥ {rhs}"))?;
        }
    }
    let one = escape_constants(1.0).unwrap();
    ensure(one.r == 8.0, || format!("C = 1 gives R = {}", one.r))?;
    Ok("strict on (R, R+100] for C ∈ {1, 1.5, 2, 3, 4}; R(1) = 8".into())
}

fn qg_certification() -> Outcome {
    let models = ["zn:2", "zn:3", "free:2", "heis", "prod:zn:1,free:2", "freeprod:zn:2,zn:1"];
    let balls: Vec<GraphBall> =
        models.iter().map(|m| cayley_ball(parse_model(m).unwrap().as_ref(), 5, DEFAULT_VERTEX_CAP).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..100 {
        let ball = &balls[i % balls.len()];
        let u = rng.gen_range(0..ball.vertex_count());
        let v = rng.gen_range(0..ball.vertex_count());
        let dist = ball.distances_from(u);
        let path = ball.trace_geodesic(&dist, v).ok_or("no geodesic")?;
        let cert = qg_certify(ball, &path).map_err(|e| e.to_string())?;
        ensure(cert.c == 1.0, || format!("geodesic {i} on {} certifies at {}", models[i % balls.len()], cert.c))?;
    }
    let grid = Grid::new(14);
    for d in 2..=10i64 {
        // Up one, across d, down one: length d + 2 between points at distance d.
        let mut path = vec![grid.at(0, 0)];
        path.extend((0..=d).map(|x| grid.at(x, 1)));
        path.push(grid.at(d, 0));
        let cert = qg_certify(&grid.ball, &path).map_err(|e| e.to_string())?;
        let expected = (d + 2) as f64 / (d + 1) as f64;
        ensure(cert.c == expected, || format!("detour d = {d}: {} vs {expected}", cert.c))?;
    }
    Ok("100 geodesics at C = 1; detours at (d+2)/(d+1) for d = 2..10".into())
}

fn thick_params(n_min: u32, n_max: u32, margin: f64) -> ThickParams {
    ThickParams { n_min, n_max, margin, ..ThickParams::default() }
}

fn thickness_verifier() -> Outcome {
    let z2 = cayley_ball(&FreeAbelian { rank: 2 }, 15, DEFAULT_VERTEX_CAP).map_err(|e| e.to_string())?;
    let v = verify_thick(&z2, &ThickStructure::whole(&z2, 1.0, 0, 4), &thick_params(2, 5, 3.0)).map_err(|e| e.to_string())?;
    ensure(v.overall, || format!("Z² verdict {v:?}"))?;

    let f2 = cayley_ball(&Free { rank: 2 }, 10, DEFAULT_VERTEX_CAP).map_err(|e| e.to_string())?;
    let v = verify_thick(&f2, &ThickStructure::whole(&f2, 1.0, 0, 4), &thick_params(2, 5, 3.0)).map_err(|e| e.to_string())?;
    let verdict = v.subsets[0].leaf.as_ref().and_then(|l| l.divergence_verdict);
    ensure(!v.overall && verdict == Some(GrowthVerdict::Infinite), || format!("F₂ verdict {verdict:?}"))?;

    // Margin 2 keeps the product ball at radius 10 (margin 3 would need radius 15).
    let prod = parse_model("prod:zn:1,free:2").unwrap();
    let zf2 = cayley_ball(prod.as_ref(), 10, DEFAULT_VERTEX_CAP).map_err(|e| e.to_string())?;
    let v = verify_thick(&zf2, &ThickStructure::whole(&zf2, 1.0, 0, 4), &thick_params(2, 5, 2.0)).map_err(|e| e.to_string())?;
    ensure(v.overall, || format!("Z×F₂ verdict {:?}", v.subsets[0].leaf))?;

    let (ball, lines) = even_lines(12, None);
    let covers: Vec<bool> =
        [0.0, 1.0, 2.0, 3.0].iter().map(|&c| verify_cover(&ball, &ThickStructure { c, ..lines.clone() }).ok).collect();
    ensure(covers.windows(2).all(|p| !p[0] || p[1]) && covers == [false, true, true, true], || format!("cover by C: {covers:?}"))?;
    let (ball, clipped) = even_lines(12, Some(3));
    let chains: Vec<bool> = (1..=8)
        .map(|d_min| verify_chains(&ball, &ThickStructure { c: 2.0, d_min, ..clipped.clone() }).ok)
        .collect();
    ensure(chains.windows(2).all(|p| p[0] || !p[1]) && chains[3] && !chains[7], || format!("chains by D_min: {chains:?}"))?;
    Ok(format!("Z² pass, F₂ fail (infinite), Z×F₂ pass; cover by C {covers:?}; chains by D_min {chains:?}"))
}

/// Horizontal lines `y = 2j` of a Z² ball, clipped to `|x| ≤ w` when given.
/// Unclipped lines cover the ball; clipped ones all have full width.
fn even_lines(radius: u32, clip: Option<i64>) -> (GraphBall, ThickStructure) {
    let grid = Grid::new(radius);
    let r = radius as i64;
    let half = r / 2;
    let subsets = (-half..=half)
        .filter_map(|j| {
            let y = 2 * j;
            let w = clip.unwrap_or(r - y.abs());
            (y.abs() + w <= r).then(|| Subset {
                name: format!("y={y}"),
                vertices: (-w..=w).map(|x| grid.at(x, y)).collect(),
                substructure: None,
            })
        })
        .collect();
    (grid.ball, ThickStructure { c: 1.0, order: 1, d_min: 4, subsets })
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let graph = dir.path().join("cycle.txt");
    std::fs::write(&graph, "floydlab-graph v1\n6 6 0 3\n0 1\n0 5\n1 2\n2 3\n3 4\n4 5\n").map_err(|e| e.to_string())?;
    let structure = dir.path().join("structure.json");
    let all: Vec<String> = (0..481).map(|v| v.to_string()).collect();
    let json = format!(r#"{{"C": 1, "order": 0, "D_min": 2, "subsets": [{{"name": "all", "vertices": [{}]}}]}}"#, all.join(","));
    std::fs::write(&structure, json).map_err(|e| e.to_string())?;
    let commands: Vec<Vec<String>> = [
        "gen --model heis --radius 4",
        "floyd-diam --model zn:2 --radii 2..6",
        "floyd-diam --model free:2 --radii 1..5 --floyd exp:0.5",
        "divergence --model zn:2 --n 1..6 --protocol exhaustive",
        "divergence --model zn:2 --n 1..6 --ball-radius 20 --protocol sampled --samples 300 --seed 17",
        "criterion --model zn:2 --n 1..5",
        "verify-thick --model zn:2 --n 2..5",
        "floyd-diam --graph GRAPH --radii 0..1 --margin 3",
        "verify-thick --model zn:2 --ball-radius 15 --structure STRUCTURE --n 2..5 --segment 6",
    ]
    .iter()
    .map(|c| {
        c.replace("GRAPH", graph.to_str().unwrap())
            .replace("STRUCTURE", structure.to_str().unwrap())
            .split(' ')
            .map(String::from)
            .collect()
    })
    .collect();
    for cmd in &commands {
        let mut outputs = Vec::new();
        for threads in ["1", "4", "1", "4"] {
            let mut args = vec!["floydlab".to_string(), "--threads".into(), threads.into()];
            args.extend(cmd.iter().cloned());
            outputs.push(execute(args));
        }
        let first = &outputs[0];
        ensure(outputs.iter().all(|o| o == first), || format!("{} differs between runs", cmd.join(" ")))?;
    }
    // Same contract through --out files.
    let out = dir.path().join("div.csv");
    let mut files = Vec::new();
    for threads in ["1", "4"] {
        let args = [
            "floydlab", "--threads", threads, "divergence", "--model", "zn:2", "--n", "1..5", "--protocol", "sampled",
            "--samples", "200", "--seed", "3", "--out", out.to_str().unwrap(),
        ];
        let e = execute(args);
        ensure(e.code == 0, || e.stderr.clone())?;
        files.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    ensure(files[0] == files[1], || "--out files differ".into())?;
    Ok(format!("{} commands byte-identical across 4 runs at 1 and 4 threads", commands.len() + 1))
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "oracle equivalence", budget: Some(Duration::from_secs(30)), run: oracle_equivalence },
        Criterion { id: 2, name: "thick-side signature (Z²)", budget: Some(Duration::from_secs(120)), run: thick_side_signature },
        Criterion { id: 3, name: "non-thick contrast (F₂)", budget: Some(Duration::from_secs(60)), run: non_thick_contrast },
        Criterion { id: 4, name: "margin stability", budget: None, run: margin_stability },
        Criterion { id: 5, name: "divergence dichotomy", budget: Some(Duration::from_secs(120)), run: divergence_dichotomy },
        Criterion { id: 6, name: "decay criterion pipeline", budget: None, run: decay_pipeline },
        Criterion { id: 7, name: "Floyd function validation", budget: None, run: floyd_validation },
        Criterion { id: 8, name: "escape constants", budget: None, run: escape_constants_grid },
        Criterion { id: 9, name: "quasi-geodesic certification", budget: None, run: qg_certification },
        Criterion { id: 10, name: "thickness verifier", budget: None, run: thickness_verifier },
        Criterion { id: 11, name: "determinism", budget: None, run: determinism },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.budget) {
            (Ok(_), Some(budget)) if elapsed > budget => Err(format!("took {elapsed:.1?}, budget {budget:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {} ({detail}; {elapsed:.2?})", c.id, c.name),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {} ({detail}; {elapsed:.2?})", c.id, c.name);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
