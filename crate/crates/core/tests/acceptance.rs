//! Acceptance report: one PASS/FAIL line per headline criterion. Runs with
//! the scripted backend and surrogate evaluator only.
//!
//! `cargo test -p qdnas-core --test acceptance`

use std::process::ExitCode;
use std::thread;
use std::time::Instant;

use qdnas_core::domain::{
    update_curiosity, BestLossTracker, CuriosityOutcome, GenomeId, NetworkGenome, NetworkIndividual, NetworkMetrics,
    Origin, PromptIndividual, PromptStats,
};
use qdnas_core::eval::SurrogateEvaluator;
use qdnas_core::llm::ScriptedBackend;
use qdnas_core::operators::{mutate_temperature_feedback, wrap_class};
use qdnas_core::persist::{log_line, RunConfig, Snapshot};
use qdnas_core::qd::{generate_centroids, CentroidSet, CvtArchive, Descriptor, InsertOutcome, ScoreOrder};
use qdnas_core::search::{
    cached_centroids, crossover_pairs, crossover_schedule, draw_operator, Operator, RunState, Search, SearchConfig,
    SearchMode,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// ---- rule exactness --------------------------------------------------------

fn temperature_sequence() -> Result<usize, String> {
    const INF: f64 = f64::INFINITY;
    // (loss, best) -> temperature after the step, starting from 0.90.
    let steps: [(f64, f64, f64); 28] = [
        (0.3, 0.5, 0.95),
        (0.5, 0.5, 1.00),
        (0.1, 0.5, 1.00),
        (0.4, 0.5, 1.00),
        (0.6, 0.5, 0.95),
        (INF, 0.5, 0.90),
        (0.2, 0.5, 0.95),
        (0.9, 0.5, 0.90),
        (0.9, 0.5, 0.85),
        (0.9, 0.5, 0.80),
        (0.9, 0.5, 0.75),
        (0.9, 0.5, 0.70),
        (0.9, 0.5, 0.65),
        (0.9, 0.5, 0.60),
        (0.9, 0.5, 0.55),
        (0.9, 0.5, 0.50),
        (0.9, 0.5, 0.45),
        (0.9, 0.5, 0.40),
        (0.9, 0.5, 0.35),
        (0.9, 0.5, 0.30),
        (0.9, 0.5, 0.25),
        (0.9, 0.5, 0.20),
        (0.9, 0.5, 0.15),
        (0.9, 0.5, 0.10),
        (0.9, 0.5, 0.05),
        (0.9, 0.5, 0.00),
        (INF, INF, 0.00),
        (0.5, 0.5, 0.05),
    ];
    let mut t = 0.90;
    for (i, (loss, best, want)) in steps.iter().enumerate() {
        t = mutate_temperature_feedback(t, *loss, *best);
        ensure(t == *want, format!("temperature step {}: got {t}, want {want}", i + 1))?;
    }
    Ok(steps.len())
}

fn curiosity_sequence() -> Result<usize, String> {
    use CuriosityOutcome::{AddedToArchive as A, NotAdded as N, Untrainable as U};
    let steps = [
        (A, 1.0),
        (A, 2.0),
        (N, 1.5),
        (U, 0.5),
        (N, 0.0),
        (N, -0.5),
        (A, 0.5),
        (U, -0.5),
        (U, -1.5),
        (A, -0.5),
        (A, 0.5),
        (A, 1.5),
        (N, 1.0),
        (N, 0.5),
        (A, 1.5),
        (U, 0.5),
        (N, 0.0),
        (A, 1.0),
        (A, 2.0),
        (N, 1.5),
    ];
    let mut p = PromptIndividual::new(3, 0.5).map_err(|e| e.to_string())?;
    for (i, (outcome, want)) in steps.iter().enumerate() {
        update_curiosity(&mut p, *outcome);
        ensure(p.curiosity == *want, format!("curiosity step {}: got {}, want {want}", i + 1, p.curiosity))?;
    }
    Ok(steps.len())
}

fn collective_fitness_sequence() -> Result<usize, String> {
    const INF: f64 = f64::INFINITY;
    // (prompt, loss, counter moved, best after observing, counts after)
    let steps: [(u8, f64, bool, f64, [u64; 5]); 20] = [
        (0, 2.0, true, 2.0, [1, 0, 0, 0, 0]),
        (1, 2.5, false, 2.0, [1, 0, 0, 0, 0]),
        (1, 2.0, true, 2.0, [1, 1, 0, 0, 0]),
        (2, INF, false, 2.0, [1, 1, 0, 0, 0]),
        (0, 1.5, true, 1.5, [2, 1, 0, 0, 0]),
        (2, 1.6, false, 1.5, [2, 1, 0, 0, 0]),
        (3, 1.5, true, 1.5, [2, 1, 0, 1, 0]),
        (0, 1.7, false, 1.5, [2, 1, 0, 1, 0]),
        (1, 1.2, true, 1.2, [2, 2, 0, 1, 0]),
        (2, 1.2, true, 1.2, [2, 2, 1, 1, 0]),
        (3, 1.3, false, 1.2, [2, 2, 1, 1, 0]),
        (3, f64::NAN, false, 1.2, [2, 2, 1, 1, 0]),
        (0, 1.0, true, 1.0, [3, 2, 1, 1, 0]),
        (1, 1.1, false, 1.0, [3, 2, 1, 1, 0]),
        (2, 0.9, true, 0.9, [3, 2, 2, 1, 0]),
        (4, 0.95, false, 0.9, [3, 2, 2, 1, 0]),
        (4, 0.9, true, 0.9, [3, 2, 2, 1, 1]),
        (0, INF, false, 0.9, [3, 2, 2, 1, 1]),
        (3, 0.5, true, 0.5, [3, 2, 2, 2, 1]),
        (1, 0.5, true, 0.5, [3, 3, 2, 2, 1]),
    ];
    let mut stats = PromptStats::default();
    let mut best = BestLossTracker::default();
    for (i, (prompt, loss, moved, best_after, counts)) in steps.iter().enumerate() {
        let m = stats.update(*prompt, *loss, best.get()).map_err(|e| e.to_string())?;
        best.observe(*loss);
        ensure(m == *moved, format!("fitness step {}: moved={m}", i + 1))?;
        ensure(best.get() == *best_after, format!("fitness step {}: best {}", i + 1, best.get()))?;
        ensure(
            stats.collective_fitness[..5] == counts[..],
            format!("fitness step {}: counts {:?}", i + 1, &stats.collective_fitness[..5]),
        )?;
    }
    Ok(steps.len())
}

fn insertion_sequence() -> Result<usize, String> {
    use InsertOutcome::{AddedToEmpty as Add, Rejected as Rej, Replaced as Rep};
    let corners = CentroidSet {
        seed: 0,
        centroids: vec![
            Descriptor::new(0.0, 0.0),
            Descriptor::new(1.0, 0.0),
            Descriptor::new(0.0, 1.0),
            Descriptor::new(1.0, 1.0),
        ],
    };
    // (x, y, score, outcome, cell)
    let steps = [
        (0.1, 0.1, 5.0, Add, 0),
        (0.2, 0.1, 6.0, Rej, 0),
        (0.1, 0.2, 5.0, Rej, 0),
        (0.1, 0.1, 4.0, Rep, 0),
        (0.9, 0.1, 3.0, Add, 1),
        (0.8, 0.2, 3.5, Rej, 1),
        (0.1, 0.9, 7.0, Add, 2),
        (0.2, 0.8, 6.5, Rep, 2),
        (0.9, 0.9, 1.0, Add, 3),
        (0.6, 0.6, 0.5, Rep, 3),
        (0.4, 0.4, 0.1, Rep, 0),
        (0.6, 0.4, 2.0, Rep, 1),
        (0.4, 0.6, 9.0, Rej, 2),
        (0.5, 0.5, 0.05, Rep, 0),
        (0.5, 0.5, 0.05, Rej, 0),
        (1.0, 0.0, 2.0, Rej, 1),
        (1.0, 0.0, 1.9999, Rep, 1),
        (0.0, 1.0, 6.4, Rep, 2),
        (1.0, 1.0, 0.5, Rej, 3),
        (0.75, 0.75, 0.25, Rep, 3),
    ];
    let mut archive = CvtArchive::new(corners, ScoreOrder::LowerIsBetter);
    for (i, (x, y, score, outcome, cell)) in steps.iter().enumerate() {
        let d = Descriptor::new(*x, *y);
        ensure(archive.nearest_centroid(&d) == *cell, format!("insert step {}: wrong cell", i + 1))?;
        let got = archive.try_insert(i + 1, d, *score).map_err(|e| e.to_string())?;
        ensure(got == *outcome, format!("insert step {}: {got:?}, want {outcome:?}", i + 1))?;
    }
    let finals: Vec<(usize, f64, usize)> = archive.cells().map(|c| (c.centroid_index, c.score, c.occupant)).collect();
    ensure(
        finals == [(0, 0.05, 14), (1, 1.9999, 17), (2, 6.4, 18), (3, 0.25, 20)],
        format!("final archive {finals:?}"),
    )?;
    Ok(steps.len())
}

fn rule_exactness() -> Check {
    let t = temperature_sequence()?;
    let c = curiosity_sequence()?;
    let f = collective_fitness_sequence()?;
    let a = insertion_sequence()?;
    Ok(format!("temperature {t}, curiosity {c}, fitness {f}, insertion {a} steps; all exact"))
}

// ---- centroid lookup -------------------------------------------------------

fn scan(points: &[Descriptor], q: &Descriptor) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, p) in points.iter().enumerate() {
        let [px, py] = p.values();
        let [qx, qy] = q.values();
        let d = (px - qx) * (px - qx) + (py - qy) * (py - qy);
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

fn cvt_equivalence() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    for k in [1, 2, 10, 100] {
        let set = generate_centroids(k, 25_000, 0).map_err(|e| e.to_string())?;
        let archive: CvtArchive<()> = CvtArchive::new(set.clone(), ScoreOrder::LowerIsBetter);
        for _ in 0..1000 {
            let q = Descriptor::new(rng.random(), rng.random());
            let (tree, lin) = (archive.nearest_centroid(&q), scan(&set.centroids, &q));
            ensure(tree == lin, format!("k={k}: tree {tree} vs scan {lin} at {q:?}"))?;
            checked += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 5.0, format!("took {secs:.2}s"))?;
    Ok(format!("{checked}/{checked} lookups agree, {secs:.2}s including centroid generation"))
}

// ---- end to end ------------------------------------------------------------

fn default_run(cfg: SearchConfig, scripted_seed: u64) -> Result<RunState, String> {
    let backend = ScriptedBackend::new(scripted_seed);
    Search::new(cfg, &backend, &SurrogateEvaluator)
        .and_then(|s| s.run())
        .map_err(|e| e.to_string())
}

fn transcript(state: &RunState) -> String {
    let mut out: String = state.history.iter().map(|l| log_line(l) + "\n").collect();
    out.push_str(&serde_json::to_string(state).expect("state serializes"));
    out
}

fn deterministic_end_to_end() -> Check {
    let cfg = SearchConfig { rng_seed: 7, ..SearchConfig::default() };
    let (g, b) = (cfg.generations, cfg.batch_size);
    let t0 = Instant::now();
    let a = default_run(cfg.clone(), 7)?;
    let secs = t0.elapsed().as_secs_f64();
    let bstate = default_run(cfg, 7)?;
    ensure(transcript(&a) == transcript(&bstate), "two runs differ")?;
    ensure(a.history.len() as u64 == g, "wrong number of generations")?;
    ensure(
        a.history.windows(2).all(|w| w[1].best_loss <= w[0].best_loss),
        "best-loss curve increases",
    )?;
    ensure(!a.network_archive.is_empty(), "network archive empty")?;
    ensure(!a.prompt_archive.is_empty(), "prompt archive empty")?;
    ensure(secs < 60.0, format!("run took {secs:.1}s"))?;
    Ok(format!(
        "{g}x{b} identical twice, best {:.6}, {} network / {} prompt niches, {secs:.2}s per run",
        a.best_loss.get(),
        a.network_archive.len(),
        a.prompt_archive.len()
    ))
}

fn operator_mixing() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SearchConfig::default().rng_seed);
    let n = 1000;
    let m = (0..n).filter(|_| draw_operator(&mut rng, 0.7) == Operator::Mutation).count();
    let frac = m as f64 / n as f64;
    ensure((0.67..=0.73).contains(&frac), format!("mutation fraction {frac:.3}"))?;
    Ok(format!("mutation fraction {frac:.3} over {n} draws"))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn ablation_ordering() -> Check {
    let medians: Vec<(SearchMode, f64)> = thread::scope(|s| {
        let handles: Vec<_> = SearchMode::ALL
            .iter()
            .map(|&mode| {
                s.spawn(move || {
                    let finals: Result<Vec<f64>, String> = (1..=10u64)
                        .map(|seed| {
                            let cfg = SearchConfig { mode, rng_seed: seed, ..SearchConfig::default() };
                            default_run(cfg, seed).map(|st| st.best_loss.get())
                        })
                        .collect();
                    finals.map(|f| (mode, median(f)))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("ablation thread"))
            .collect::<Result<Vec<_>, String>>()
    })?;
    let get = |m: SearchMode| medians.iter().find(|(x, _)| *x == m).map(|x| x.1).unwrap();
    let table = medians
        .iter()
        .map(|(m, v)| format!("{}={v:.6}", m.name()))
        .collect::<Vec<_>>()
        .join(" ");
    let full = get(SearchMode::Full);
    let mutation = get(SearchMode::MutationOnly);
    let random = get(SearchMode::RandomGeneration);
    let mut broken = Vec::new();
    if full > mutation {
        broken.push("full > mutation-only");
    }
    if mutation > get(SearchMode::CrossoverOnly) {
        broken.push("mutation-only > crossover-only");
    }
    if mutation > get(SearchMode::NetworkArchiveOnly) {
        broken.push("mutation-only > network-archive-only");
    }
    if medians.iter().any(|(m, v)| *m != SearchMode::RandomGeneration && *v > random) {
        broken.push("random-generation not worst");
    }
    if broken.is_empty() {
        Ok(format!("medians over seeds 1..=10: {table}"))
    } else {
        Err(format!("{}; medians over seeds 1..=10: {table}", broken.join(", ")))
    }
}

// ---- crossover pairing -----------------------------------------------------

/// Straight enumeration: rank every filled cell, then for each of the top 10
/// sort all other filled cells by distance and keep three; deal round-robin.
fn pairing_oracle(cells: &[(usize, Descriptor, f64)], batch: usize) -> Vec<(usize, usize)> {
    let mut ranked: Vec<&(usize, Descriptor, f64)> = cells.iter().collect();
    ranked.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));
    let mut pairs = Vec::new();
    for parent in ranked.iter().take(10) {
        let [px, py] = parent.1.values();
        let mut others: Vec<(f64, usize)> = cells
            .iter()
            .filter(|c| c.0 != parent.0)
            .map(|c| {
                let [x, y] = c.1.values();
                ((x - px) * (x - px) + (y - py) * (y - py), c.0)
            })
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        pairs.extend(others.iter().take(3).map(|o| (parent.0, o.1)));
    }
    if pairs.is_empty() {
        return pairs;
    }
    let mut schedule = Vec::with_capacity(batch);
    while schedule.len() < batch {
        for p in &pairs {
            if schedule.len() == batch {
                break;
            }
            schedule.push(*p);
        }
    }
    schedule
}

fn crossover_pairing() -> Check {
    let centroids = cached_centroids(100, 25_000, 0).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let mut nonempty = 0;
    for state in 0..50 {
        let mut archive: CvtArchive<u32> = CvtArchive::new(centroids.clone(), ScoreOrder::LowerIsBetter);
        let inserts = rng.random_range(0..300);
        for i in 0..inserts {
            // Coarse scores so rank ties are frequent.
            let score = f64::from(rng.random_range(0..20u32)) / 10.0;
            let d = Descriptor::new(rng.random(), rng.random());
            archive.try_insert(i, d, score).map_err(|e| e.to_string())?;
        }
        let cells: Vec<(usize, Descriptor, f64)> =
            archive.cells().map(|c| (c.centroid_index, c.descriptor, c.score)).collect();
        let batch = 100;
        let got = crossover_schedule(&crossover_pairs(&archive, 10, 3), batch);
        let want = pairing_oracle(&cells, batch);
        ensure(got == want, format!("state {state} ({} cells) differs", cells.len()))?;
        nonempty += usize::from(!want.is_empty());
    }
    Ok(format!("50/50 archive states agree ({nonempty} with pairs)"))
}

// ---- persistence -----------------------------------------------------------

fn resume_fidelity() -> Check {
    let cfg = SearchConfig { rng_seed: 11, ..SearchConfig::default() };
    let run_config = RunConfig { search: cfg.clone(), ..RunConfig::default() };
    let uninterrupted = default_run(cfg.clone(), 0)?;

    let backend = ScriptedBackend::new(0);
    let text = {
        let search = Search::new(cfg.clone(), &backend, &SurrogateEvaluator).map_err(|e| e.to_string())?;
        let mut state = search.initial_state().map_err(|e| e.to_string())?;
        for _ in 0..7 {
            search.step(&mut state).map_err(|e| e.to_string())?;
        }
        Snapshot::new(run_config, state).to_json()
    };
    // Fresh process state from here on: only the snapshot text survives.
    let snap = Snapshot::from_json(&text, "snapshot.json".as_ref()).map_err(|e| e.to_string())?;
    ensure(snap.state.generation == 7, "snapshot not at generation 7")?;
    let backend = ScriptedBackend::new(0);
    let search = Search::new(snap.config.search.clone(), &backend, &SurrogateEvaluator).map_err(|e| e.to_string())?;
    let mut resumed = snap.state;
    search.run_from(&mut resumed, |_, _| Ok(())).map_err(|e| e.to_string())?;

    ensure(transcript(&resumed) == transcript(&uninterrupted), "resumed run diverges")?;
    Ok(format!("{} log lines and final state identical after resuming at 7", resumed.history.len()))
}

fn snapshot_round_trip() -> Check {
    let mut state = default_run(SearchConfig { generations: 4, batch_size: 20, ..SearchConfig::default() }, 0)?;
    let set = state.network_archive.centroid_set().clone();
    for (i, c) in set.centroids.iter().enumerate() {
        if state.network_archive.cell(i).is_some() {
            continue;
        }
        let body = format!(
            "class Net(nn.Module):\n    \"\"\"cell {i}: quotes \" ' \\ and ünïcode\"\"\"\n    def __init__(self):\n        super().__init__()\n        self.fc1 = nn.Linear(3072, {})\n\n    def forward(self, x):\n        return self.fc1(torch.flatten(x, 1))\n",
            10 + i
        );
        let genome = NetworkGenome::new(GenomeId(10_000 + i as u64), wrap_class(&body), vec![], Origin::Seed)
            .map_err(|e| e.to_string())?;
        let metrics = NetworkMetrics::trained(1.0 + i as f64 / 7.0, 1e6 * i as f64, 1, 10 + i as u64);
        state
            .network_archive
            .try_insert(NetworkIndividual { genome, metrics }, *c, 1.0 + i as f64 / 7.0)
            .map_err(|e| e.to_string())?;
    }
    ensure(state.network_archive.len() == 100, format!("archive has {} cells", state.network_archive.len()))?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("snapshot.json");
    let snap = Snapshot::new(RunConfig::default(), state);
    snap.save(&path).map_err(|e| e.to_string())?;
    let back = Snapshot::load(&path).map_err(|e| e.to_string())?;
    ensure(back == snap, "loaded snapshot differs")?;
    ensure(back.to_json() == snap.to_json(), "re-serialization differs")?;
    let bytes = std::fs::metadata(&path).map_err(|e| e.to_string())?.len();
    Ok(format!("100-cell archive with sources round-trips exactly ({bytes} bytes)"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("rule exactness", rule_exactness),
        ("cvt oracle equivalence", cvt_equivalence),
        ("deterministic end-to-end", deterministic_end_to_end),
        ("operator mixing", operator_mixing),
        ("ablation ordering", ablation_ordering),
        ("crossover pairing", crossover_pairing),
        ("resume fidelity", resume_fidelity),
        ("snapshot round-trip", snapshot_round_trip),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
