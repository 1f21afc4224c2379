//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use stocknet::factors::{self, FactorOptions};
use stocknet::ingest::ReturnPanel;
use stocknet::marketstats::{self, Membership};
use stocknet::network::{self, DegreeBin, DisjointSet, DistanceMatrix, Edge};
use stocknet::numerics::{eigh, Matrix};
use stocknet::regression;
use stocknet::synth::{self, NormalStream, SynthSpec};
use stocknet::Error;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_secs: u64, detail: String) -> Outcome {
    let detail = format!(
        "{detail}; {:.2}s (limit {limit_secs}s)",
        elapsed.as_secs_f64()
    );
    check(elapsed <= Duration::from_secs(limit_secs), detail)
}

fn random_distances(n: usize, rng: &mut NormalStream) -> Matrix {
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let w = 0.01 + 1.99 * rng.uniform();
            d[(i, j)] = w;
            d[(j, i)] = w;
        }
    }
    d
}

/// Minimum spanning weight by enumerating every (n−1)-subset of edges. Edges
/// are visited in Kruskal order so equal sets sum identically.
fn brute_force_min(d: &Matrix) -> f64 {
    let n = d.rows();
    let mut edges: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            edges.push((d[(i, j)], i, j));
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let m = edges.len();
    let need = n - 1;
    let mut best = f64::INFINITY;
    let mut pick: Vec<usize> = (0..need).collect();
    loop {
        let mut ds = DisjointSet::new(n);
        if pick.iter().all(|&e| ds.union(edges[e].1, edges[e].2)) {
            let w = pick.iter().map(|&e| edges[e].0).sum::<f64>();
            best = best.min(w);
        }
        // next combination in lexicographic order
        let mut i = need;
        while i > 0 && pick[i - 1] == m - need + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return best;
        }
        pick[i - 1] += 1;
        for k in i..need {
            pick[k] = pick[k - 1] + 1;
        }
    }
}

fn mst_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = NormalStream::new(11);
    let mut worst = 0.0_f64;
    for (count, n) in [(100, 5), (20, 6)] {
        for _ in 0..count {
            let d = random_distances(n, &mut rng);
            let tree = network::kruskal_mst(
                &DistanceMatrix::from_matrix(d.clone()).map_err(|e| e.to_string())?,
            )
            .map_err(|e| e.to_string())?;
            tree.validate().map_err(|e| e.to_string())?;
            if tree.edges().len() != n - 1 {
                return Err(format!("{} edges for n = {n}", tree.edges().len()));
            }
            let best = brute_force_min(&d);
            if tree.total_weight() != best {
                return Err(format!(
                    "n = {n}: kruskal {} vs enumeration {best}",
                    tree.total_weight()
                ));
            }
            worst = worst.max((tree.total_weight() - best).abs());
        }
    }
    within(
        start.elapsed(),
        5,
        format!("120 graphs match enumeration exactly (max diff {worst:e})"),
    )
}

fn edge_set(edges: &[Edge]) -> BTreeSet<(usize, usize)> {
    edges.iter().map(|e| (e.i.min(e.j), e.i.max(e.j))).collect()
}

fn mst_order_invariance() -> Outcome {
    let mut rng = NormalStream::new(12);
    for trial in 0..50 {
        let d = random_distances(30, &mut rng);
        let mut g = d.clone();
        for i in 0..30 {
            for j in 0..30 {
                let x = d[(i, j)];
                g[(i, j)] = x * x * x + x;
            }
        }
        let a = network::kruskal_mst(&DistanceMatrix::from_matrix(d).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let b = network::kruskal_mst(&DistanceMatrix::from_matrix(g).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        if edge_set(a.edges()) != edge_set(b.edges()) {
            return Err(format!("instance {trial}: edge sets differ"));
        }
    }
    Ok("50 instances of 30 nodes keep identical edge sets".into())
}

fn eigensolver() -> Outcome {
    let start = Instant::now();
    let mut rng = NormalStream::new(13);
    let mut details = Vec::new();
    for n in [5, 50, 200] {
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = rng.next_normal();
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        let eig = eigh(&a).map_err(|e| e.to_string())?;
        let v = &eig.eigenvectors;
        let mut vl = v.clone();
        for i in 0..n {
            for k in 0..n {
                vl[(i, k)] *= eig.eigenvalues[k];
            }
        }
        let recon = vl.matmul(&v.transpose()).map_err(|e| e.to_string())?;
        let resid = recon.sub(&a).map_err(|e| e.to_string())?.max_abs();
        let bound = 1e-8 * a.frobenius();
        let trace: f64 = (0..n).map(|i| a[(i, i)]).sum();
        let trace_err = (eig.eigenvalues.iter().sum::<f64>() - trace).abs();
        if resid > bound || trace_err > 1e-8 {
            return Err(format!(
                "n = {n}: reconstruction {resid:e} (bound {bound:e}), trace error {trace_err:e}"
            ));
        }
        details.push(format!("n={n} resid {resid:.1e} trace {trace_err:.1e}"));
    }
    within(start.elapsed(), 10, details.join(", "))
}

fn kaiser_recovery() -> Outcome {
    let start = Instant::now();
    let mut hits = 0;
    let mut misses = Vec::new();
    for seed in 1..=100 {
        let market = synth::generate(&SynthSpec {
            seed,
            ..SynthSpec::default()
        })
        .map_err(|e| e.to_string())?;
        let model = factors::extract_factors(&market.returns, FactorOptions::default())
            .map_err(|e| e.to_string())?;
        if model.kaiser_k == 5 {
            hits += 1;
        } else {
            misses.push(format!("seed {seed}: {}", model.kaiser_k));
        }
    }
    let detail = format!("kaiser_count = 5 on {hits}/100 seeds (need 95) {misses:?}");
    if hits < 95 {
        return Err(detail);
    }
    within(start.elapsed(), 60, detail)
}

fn varimax_properties() -> Outcome {
    let mut rng = NormalStream::new(15);
    let mut worst_comm = 0.0_f64;
    for trial in 0..100 {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..3).map(|_| rng.next_normal()).collect())
            .collect();
        let l = Matrix::from_rows(&rows).map_err(|e| e.to_string())?;
        let vm = factors::varimax(&l).map_err(|e| e.to_string())?;
        let before = factors::communalities(&l);
        let after = factors::communalities(&vm.rotated);
        for (a, b) in before.iter().zip(&after) {
            worst_comm = worst_comm.max((a - b).abs());
        }
        if worst_comm > 1e-8 {
            return Err(format!("trial {trial}: communality drift {worst_comm:e}"));
        }
        if let Some(w) = vm
            .criterion_trace
            .windows(2)
            .find(|w| w[1] < w[0] - 1e-12 * w[0].abs())
        {
            return Err(format!(
                "trial {trial}: criterion fell from {} to {}",
                w[0], w[1]
            ));
        }
    }
    let single = Matrix::from_columns(&[(0..20).map(|i| 0.1 * i as f64 - 0.7).collect()])
        .map_err(|e| e.to_string())?;
    let vm = factors::varimax(&single).map_err(|e| e.to_string())?;
    check(
        vm.rotation == Matrix::identity(1) && vm.rotated == single,
        format!("100 matrices, max communality drift {worst_comm:.1e}, criterion monotone; K=1 identity exact"),
    )
}

fn score_multicollinearity() -> Outcome {
    let market = synth::generate(&SynthSpec::default()).map_err(|e| e.to_string())?;
    let model = factors::extract_factors(&market.returns, FactorOptions::default())
        .map_err(|e| e.to_string())?;
    let report = factors::multicollinearity_report(&model.scores).map_err(|e| e.to_string())?;
    let mean = report.mean_abs_offdiag().ok_or("no off-diagonal pairs")?;
    check(
        mean < 0.05,
        format!(
            "mean |corr| between {} scores = {mean:.3e} (limit 0.05)",
            model.k
        ),
    )
}

fn regression_exactness() -> Outcome {
    let err = |e: Error| e.to_string();
    // noiseless columns against their own factors
    let market = synth::generate(&SynthSpec {
        noise_sigma: 0.0,
        n_stocks: 20,
        n_days: 300,
        k_factors: 3,
        n_industries: 3,
        ..SynthSpec::default()
    })
    .map_err(err)?;
    let fits = regression::fit_panel(&market.returns, &market.true_scores).map_err(err)?;
    let noiseless = fits
        .iter()
        .map(|f| (1.0 - f.r_squared).abs())
        .fold(0.0, f64::max);
    if noiseless > 1e-10 {
        return Err(format!("noiseless R² off by {noiseless:e}"));
    }

    // target made orthogonal to the intercept and factors
    let mut rng = NormalStream::new(17);
    let scores = &market.true_scores;
    let raw: Vec<f64> = (0..scores.rows()).map(|_| rng.next_normal()).collect();
    let target = regression::fit_multifactor("raw", &raw, scores)
        .map_err(err)?
        .residuals;
    let orth = regression::fit_multifactor("orth", &target, scores)
        .map_err(err)?
        .r_squared;
    if orth > 1e-10 {
        return Err(format!("orthogonal target R² = {orth:e}"));
    }

    // y = 1 + 2 f1 − 3 f2 + e, with e orthogonal to 1, f1, f2
    let f = Matrix::from_columns(&[
        vec![-2.0, -1.0, 0.0, 1.0, 2.0],
        vec![2.0, -1.0, -2.0, -1.0, 2.0],
    ])
    .map_err(err)?;
    let y = [-8.0, -2.0, 13.0, 2.0, 0.0];
    let hand = regression::fit_multifactor("hand", &y, &f).map_err(err)?;
    let dev = [
        (hand.alpha - 1.0).abs(),
        (hand.betas[0] - 2.0).abs(),
        (hand.betas[1] + 3.0).abs(),
        (hand.r_squared - 166.0 / 236.0).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    if dev > 1e-10 {
        return Err(format!("hand-solved case off by {dev:e}"));
    }

    // span invariance under an invertible recombination
    let mix = Matrix::from_rows(&[
        vec![2.0, 0.5, -1.0],
        vec![0.3, 1.0, 0.0],
        vec![-0.7, 0.2, 1.5],
    ])
    .map_err(err)?;
    let noisy = synth::generate(&SynthSpec {
        n_stocks: 20,
        n_days: 300,
        k_factors: 3,
        n_industries: 3,
        ..SynthSpec::default()
    })
    .map_err(err)?;
    let remixed = noisy.true_scores.matmul(&mix).map_err(err)?;
    let mut span = 0.0_f64;
    for j in 0..noisy.returns.n_tickers() {
        let y = noisy.returns.column(j);
        let a = regression::fit_multifactor("a", &y, &noisy.true_scores)
            .map_err(err)?
            .r_squared;
        let b = regression::fit_multifactor("b", &y, &remixed)
            .map_err(err)?
            .r_squared;
        span = span.max((a - b).abs());
    }
    check(
        span <= 1e-10,
        format!(
            "noiseless {noiseless:.1e}, orthogonal {orth:.1e}, hand-solved {dev:.1e}, span invariance {span:.1e}"
        ),
    )
}

/// Market where a few members of each industry carry the top loading scale.
fn hub_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        n_stocks: 200,
        n_days: 3750,
        k_factors: 8,
        n_industries: 8,
        hubs_per_industry: 3,
        seed,
        ..SynthSpec::default()
    }
}

fn pipeline_spearman(returns: &ReturnPanel) -> Result<f64, Error> {
    let corr = network::correlation_matrix(returns)?;
    let tree = network::kruskal_mst(&network::distance_matrix(&corr))?;
    let model = factors::extract_factors(returns, FactorOptions::default())?;
    let fits = regression::fit_panel(returns, &model.scores)?;
    let profile = marketstats::degree_r2_profile(&tree, &fits)?;
    Ok(profile.degree_spearman().unwrap_or(f64::NAN))
}

fn degree_r2_relation() -> Outcome {
    let mut values = Vec::new();
    let mut slowest = Duration::ZERO;
    for seed in 1..=20 {
        let start = Instant::now();
        let market = synth::generate(&hub_spec(seed)).map_err(|e| e.to_string())?;
        let rho = pipeline_spearman(&market.returns).map_err(|e| e.to_string())?;
        slowest = slowest.max(start.elapsed());
        values.push(rho);
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let detail = format!(
        "Spearman(degree, mean R²) min {min:.3} mean {mean:.3} over 20 seeds (need > 0.5 each)"
    );
    if !(min > 0.5) {
        return Err(format!("{detail}: {values:.3?}"));
    }
    within(slowest, 30, format!("{detail}; slowest seed"))
}

const GAMMA: f64 = -2.36;

fn power_law_fit() -> Outcome {
    let kmax = 16;
    let weights: Vec<f64> = (1..=kmax).map(|k| (k as f64).powf(GAMMA)).collect();
    let total: f64 = weights.iter().sum();
    let exact: Vec<DegreeBin> = weights
        .iter()
        .enumerate()
        .map(|(i, w)| DegreeBin {
            degree: i + 1,
            count: 0,
            probability: w / total,
        })
        .collect();
    let fit = network::fit_power_law(&exact).map_err(|e| e.to_string())?;
    if (fit.gamma - GAMMA).abs() > 1e-9 {
        return Err(format!("tabulated gamma {}", fit.gamma));
    }

    let mut worst = 0.0_f64;
    for seed in 1..=20 {
        let mut rng = NormalStream::new(seed);
        let draws: Vec<usize> = (0..10_000)
            .map(|_| {
                let mut u = rng.uniform() * total;
                for (i, w) in weights.iter().enumerate() {
                    if u < *w {
                        return i + 1;
                    }
                    u -= w;
                }
                kmax
            })
            .collect();
        let fit = network::fit_power_law(&network::degree_histogram(&draws))
            .map_err(|e| e.to_string())?;
        worst = worst.max((fit.gamma - GAMMA).abs());
    }
    check(
        worst <= 0.35,
        format!("tabulated gamma exact to {:.1e}; sampled worst |gamma + 2.36| = {worst:.3} (limit 0.35)", (fit.gamma - GAMMA).abs()),
    )
}

fn industry_rule() -> Outcome {
    let err = |e: Error| e.to_string();
    let t = 40;
    let mut rng = NormalStream::new(19);
    let common: Vec<f64> = (0..t).map(|_| 0.01 * rng.next_normal()).collect();
    let mut columns = Vec::new();
    let mut tickers = Vec::new();
    let mut membership = Membership::new();
    for j in 0..5 {
        columns.push(common.clone());
        tickers.push(format!("A{j}"));
        membership.insert(format!("A{j}"), "FIVE".into());
    }
    for j in 0..4 {
        columns.push((0..t).map(|_| rng.next_normal()).collect());
        tickers.push(format!("B{j}"));
        membership.insert(format!("B{j}"), "FOUR".into());
    }
    let panel = ReturnPanel::new(
        tickers,
        synth::business_days(t),
        Matrix::from_columns(&columns).map_err(err)?,
    )
    .map_err(err)?;
    let indexes = marketstats::industry_indexes(&panel, &membership).map_err(err)?;
    let ids: Vec<&str> = indexes.iter().map(|x| x.industry_id.as_str()).collect();
    if ids != ["FIVE"] {
        return Err(format!("qualifying industries {ids:?}"));
    }
    check(
        indexes[0].series == common,
        "4-member industry excluded, 5-member kept, identical columns reproduce the column exactly"
            .into(),
    )
}

fn read_outputs(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let mut bytes = fs::read(&path).map_err(|e| e.to_string())?;
        if name == "summary.txt" {
            let text = String::from_utf8(bytes).map_err(|e| e.to_string())?;
            bytes = text
                .lines()
                .filter(|l| !l.starts_with("timestamp="))
                .collect::<Vec<_>>()
                .join("\n")
                .into_bytes();
        }
        files.push((name, bytes));
    }
    files.sort();
    Ok(files)
}

fn pipeline_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_stocknet");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = tmp.path().join("data");
    let run = |args: &[&str]| -> Result<(), String> {
        let status = Command::new(bin)
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        if status.status.success() {
            Ok(())
        } else {
            Err(format!(
                "{args:?}: {}",
                String::from_utf8_lossy(&status.stderr)
            ))
        }
    };
    let d = data.to_str().unwrap();
    run(&[
        "synth", "--out", d, "--stocks", "60", "--days", "500", "--seed", "5",
    ])?;
    let prices = data.join("prices.csv");
    let membership = data.join("membership.csv");
    let mut outputs = Vec::new();
    for name in ["run1", "run2"] {
        let out = tmp.path().join(name);
        run(&[
            "analyze",
            "--prices",
            prices.to_str().unwrap(),
            "--membership",
            membership.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])?;
        outputs.push(read_outputs(&out)?);
    }
    let names: Vec<&str> = outputs[0].iter().map(|(n, _)| n.as_str()).collect();
    if outputs[0] != outputs[1] {
        return Err(format!("outputs differ among {names:?}"));
    }
    Ok(format!(
        "{} output files byte-identical across two runs",
        names.len()
    ))
}

fn degree_normalization() -> Outcome {
    let (lo, hi) = (1, 9);
    let ends = [
        network::normalize_degree(lo, lo, hi),
        network::normalize_degree(hi, lo, hi),
        network::normalize_degree(5, lo, hi),
    ];
    if ends != [-1.0, 1.0, 0.0] {
        return Err(format!("endpoints map to {ends:?}"));
    }
    let pair = network::SpanningTree::from_edges(
        2,
        vec![Edge {
            i: 0,
            j: 1,
            weight: 0.5,
        }],
    )
    .map_err(|e| e.to_string())?;
    match network::normalize_degrees(&pair) {
        Err(Error::DegenerateDegreeRange(_)) => {
            Ok("min -> -1, max -> +1, mid -> 0 exactly; equal degrees rejected".into())
        }
        other => Err(format!("equal degrees gave {other:?}")),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("MST correctness", mst_correctness),
        ("MST order invariance", mst_order_invariance),
        ("eigensolver accuracy", eigensolver),
        ("Kaiser recovery", kaiser_recovery),
        ("varimax properties", varimax_properties),
        ("score multicollinearity", score_multicollinearity),
        ("regression exactness", regression_exactness),
        ("degree vs R² relation", degree_r2_relation),
        ("power-law fit", power_law_fit),
        ("industry rule", industry_rule),
        ("pipeline determinism", pipeline_determinism),
        ("degree normalization", degree_normalization),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
