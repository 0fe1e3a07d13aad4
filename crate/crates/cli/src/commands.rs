//! One function per subcommand.

use crate::util::{self, adjacency_text, matrix_text, Run};
use crate::{ConstraintArgs, DataArgs, ScoreArgs};
use abnkit::dag::{parse_formula, render_formula, to_dot, DotStyle, LabeledMatrix};
use abnkit::glm::{frequentist_scores, marginal_densities, score_contribution, RangePolicy};
use abnkit::{
    BestParentTable, BootstrapConfig, Dag, Dataset, Error, FitMethod, FitResult, HeuristicConfig, LocalScores,
    PriorSpec, ScoreCache, ScoreType, SimSpec, StructuralPrior,
};
use anyhow::{Context, Result};
use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::Path;

/// Picks the score, rejecting types the method does not produce.
fn resolve_score(method: FitMethod, score: Option<&str>) -> Result<ScoreType> {
    let Some(s) = score else {
        return Ok(ScoreType::default_for(method));
    };
    let st: ScoreType = s.parse()?;
    if !ScoreType::for_method(method).contains(&st) {
        return Err(Error::ScoreMismatch(format!("score `{st}` is not available with method `{method}`")).into());
    }
    Ok(st)
}

fn read_cache(path: &Path, data: Option<&DataArgs>, run: &mut Run) -> Result<(ScoreCache, Option<Dataset>)> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    run.input(path);
    match data {
        Some(args) => {
            let ds = util::load_data(args)?;
            let cache = ScoreCache::read_for(BufReader::new(f), &ds)?;
            run.data(args, &ds);
            Ok((cache, Some(ds)))
        }
        None => {
            let cache = ScoreCache::read(BufReader::new(f))?;
            run.fingerprint(&cache.fingerprint);
            Ok((cache, None))
        }
    }
}

fn fits_text(fits: &[FitResult]) -> String {
    fits.iter().map(FitResult::to_text).collect::<Vec<_>>().join("\n")
}

/// Coefficient of each arc, `values[child][parent]`, for DOT pen widths.
fn coefficient_weights(dag: &Dag, fits: &[FitResult]) -> Vec<Vec<f64>> {
    let n = dag.n_nodes();
    let mut w = vec![vec![0.0; n]; n];
    for (p, c) in dag.arcs() {
        w[c][p] = fits[c].coefficient(&dag.nodes()[p]).unwrap_or(0.0);
    }
    w
}

pub fn build_cache(data: &DataArgs, cons: &ConstraintArgs, method: &str, out: &Path, argv: &[String]) -> Result<()> {
    let method: FitMethod = method.parse()?;
    let mut run = Run::new(out, "build-cache", argv)?;
    let ds = util::load_data(data)?;
    run.data(data, &ds);
    let mut extra = Vec::new();
    let cs = util::constraints(cons.ban.as_deref(), cons.retain.as_deref(), cons.max_parents, ds.names(), &mut extra)?;
    run.inputs(extra);
    let cache = abnkit::build_cache(&ds, &cs, method, &PriorSpec::default())?;
    let mut buf = Vec::new();
    cache.write(&mut buf)?;
    run.write("cache.txt", buf)?;
    let failures = cache.failures();
    for (node, mask, msg) in &failures {
        log::warn!("fit failed for {} | {:#x}: {msg}", cache.nodes[*node], mask);
    }
    println!(
        "cached {} parent sets for {} nodes ({} failed fits)",
        cache.len(),
        cache.n_nodes(),
        failures.len()
    );
    run.finish()
}

pub fn search_exact(
    cache_path: &Path,
    data: Option<DataArgs>,
    score: Option<&str>,
    prior: &str,
    memory_mb: u64,
    out: &Path,
    argv: &[String],
) -> Result<()> {
    let prior: StructuralPrior = prior.parse()?;
    let mut run = Run::new(out, "search exact", argv)?;
    let (cache, ds) = read_cache(cache_path, data.as_ref(), &mut run)?;
    let st = resolve_score(cache.method, score)?;
    let scores = cache.local_scores(st)?;
    let table = BestParentTable::build_with_budget(&scores, prior, memory_mb.saturating_mul(1 << 20))?;
    let res = abnkit::most_probable_dag(&table, &scores)?;
    let dag = &res.dag;

    run.write("dag.adj", adjacency_text(dag.nodes(), dag.parent_masks())?)?;
    let mut tsv = String::from("node\tparents\tscore\tlog_prior\n");
    for (i, (s, lp)) in res.per_node.iter().enumerate() {
        let parents: Vec<&str> = (0..dag.n_nodes())
            .filter(|&p| dag.has_arc(p, i))
            .map(|p| dag.nodes()[p].as_str())
            .collect();
        writeln!(tsv, "{}\t{}\t{s:e}\t{lp:e}", dag.nodes()[i], parents.join(","))?;
    }
    writeln!(tsv, "TOTAL\t\t{:e}\t{:e}", res.data_score, res.total - res.data_score)?;
    run.write("scores.tsv", tsv)?;

    println!("{}", render_formula(dag.parent_masks(), dag.nodes()));
    println!("score {st} prior {prior}: total {:.4} (data {:.4})", res.total, res.data_score);
    match ds {
        Some(ds) => {
            let fits = abnkit::fit_dag(&ds, dag, cache.method, &cache.priors)?;
            let w = coefficient_weights(dag, &fits);
            let style = DotStyle {
                distributions: Some(ds.dists()),
                weights: Some(&w),
            };
            run.write("dag.dot", to_dot(dag, &style))?;
            let text = fits_text(&fits);
            print!("{text}");
            run.write("fit.txt", text)?;
        }
        None => run.write("dag.dot", to_dot(dag, &DotStyle::default()))?,
    }
    run.finish()
}

pub fn search_heuristic(
    cache_path: &Path,
    data: Option<DataArgs>,
    score: Option<&str>,
    config: HeuristicConfig,
    threshold: f64,
    out: &Path,
    argv: &[String],
) -> Result<()> {
    let mut run = Run::new(out, "search heuristic", argv)?;
    run.seed(config.seed);
    let (cache, ds) = read_cache(cache_path, data.as_ref(), &mut run)?;
    let st = resolve_score(cache.method, score)?;
    let scores: LocalScores = cache.local_scores(st)?;
    let trace = abnkit::heuristic_search(&scores, &cache.constraints, &config)?;

    let mut tsv = String::from("restart\tstep\tbest_score\n");
    for (r, t) in trace.restarts.iter().enumerate() {
        for (s, v) in t.best_scores.iter().enumerate() {
            writeln!(tsv, "{r}\t{s}\t{v:e}")?;
        }
    }
    run.write("trace.tsv", tsv)?;

    let best = trace.best();
    let dag = &best.dag;
    run.write("dag.adj", adjacency_text(dag.nodes(), dag.parent_masks())?)?;
    run.write("dag.dot", to_dot(dag, &DotStyle::default()))?;

    let dags: Vec<Dag> = trace.restarts.iter().map(|t| t.dag.clone()).collect();
    let cons = abnkit::majority_consensus(&dags, threshold, true)?;
    let freq = LabeledMatrix {
        names: cons.nodes.clone(),
        values: cons.frequencies.clone(),
    };
    run.write("consensus.csv", matrix_text(&freq)?)?;
    let repaired = abnkit::repair_to_dag(cons.nodes.clone(), &cons.matrix, &cons.frequencies)?;
    run.write(
        "consensus-dag.adj",
        adjacency_text(repaired.nodes(), repaired.parent_masks())?,
    )?;

    println!("{}", render_formula(dag.parent_masks(), dag.nodes()));
    println!(
        "{} restarts of {}: best score {:.4}{}",
        trace.restarts.len(),
        config.algorithm,
        best.score,
        if cons.cyclic { " (consensus was cyclic and has been repaired)" } else { "" }
    );
    if let Some(ds) = ds {
        let fits = abnkit::fit_dag(&ds, dag, cache.method, &cache.priors)?;
        run.write("fit.txt", fits_text(&fits))?;
    }
    run.finish()
}

#[allow(clippy::too_many_arguments)]
pub fn fit(
    data: &DataArgs,
    dag_path: Option<&Path>,
    formula: Option<&str>,
    method: &str,
    marginals: usize,
    range: f64,
    contributions: bool,
    out: &Path,
    argv: &[String],
) -> Result<()> {
    let method: FitMethod = method.parse()?;
    if marginals > 0 && method != FitMethod::Bayes {
        return Err(Error::ScoreMismatch("marginal densities need --method bayes".into()).into());
    }
    let mut run = Run::new(out, "fit", argv)?;
    let ds = util::load_data(data)?;
    run.data(data, &ds);
    let dag = match (dag_path, formula) {
        (Some(p), _) => {
            run.input(p);
            util::read_dag_for(p, ds.names())?
        }
        (None, Some(f)) => Dag::new(ds.names().to_vec(), parse_formula(f, ds.names())?)?,
        (None, None) => return Err(Error::Parse("need --dag or --formula".into()).into()),
    };
    let priors = PriorSpec::default();
    let fits = abnkit::fit_dag(&ds, &dag, method, &priors)?;
    let mut text = fits_text(&fits);
    if method == FitMethod::Mle {
        text.push_str("\nnode\tloglik\taic\tbic\tmdl\n");
        for f in &fits {
            let s = frequentist_scores(f, ds.n_obs(), ds.n_vars() - 1);
            writeln!(text, "{}\t{:e}\t{:e}\t{:e}\t{:e}", f.child, s.loglik, s.aic, s.bic, s.mdl)?;
        }
    }
    print!("{text}");
    run.write("fit.txt", text)?;
    let w = coefficient_weights(&dag, &fits);
    let style = DotStyle {
        distributions: Some(ds.dists()),
        weights: Some(&w),
    };
    run.write("dag.dot", to_dot(&dag, &style))?;

    if marginals > 0 {
        let policy = RangePolicy { sd_multiple: range };
        let mut tsv = String::from("node\tparameter\tx\tdensity\n");
        let mut areas = String::from("node\tparameter\traw_area\n");
        for f in &fits {
            for m in marginal_densities(f, marginals, &policy)? {
                for (x, d) in m.grid.iter().zip(&m.density) {
                    writeln!(tsv, "{}\t{}\t{x:e}\t{d:e}", f.child, m.name)?;
                }
                writeln!(areas, "{}\t{}\t{:.6}", f.child, m.name, m.raw_area)?;
            }
        }
        run.write("marginals.tsv", tsv)?;
        run.write("marginal-areas.tsv", areas)?;
    }

    if contributions {
        let mut tsv = String::from("node\trow\tloglik\tleverage\n");
        for (i, f) in fits.iter().enumerate() {
            let design = abnkit::build_design(&ds, i, dag.parents_of(i))?;
            let c = score_contribution(f, &design, f.family)?;
            for (r, (l, h)) in c.log_likelihood.iter().zip(&c.hat_diagonal).enumerate() {
                writeln!(tsv, "{}\t{r}\t{l:e}\t{h:e}", f.child)?;
            }
        }
        run.write("contributions.tsv", tsv)?;
    }
    run.finish()
}

pub fn sweep_parents(
    data: &DataArgs,
    ban: Option<String>,
    retain: Option<String>,
    max: usize,
    score: &ScoreArgs,
    out: &Path,
    argv: &[String],
) -> Result<()> {
    let method: FitMethod = score.method.parse()?;
    let st = resolve_score(method, score.score.as_deref())?;
    let prior: StructuralPrior = score.prior.parse()?;
    if max == 0 {
        return Err(Error::Parse("--max must be at least 1".into()).into());
    }
    let mut run = Run::new(out, "sweep-parents", argv)?;
    let ds = util::load_data(data)?;
    run.data(data, &ds);
    let mut extra = Vec::new();
    let cs = util::constraints(ban.as_deref(), retain.as_deref(), max, ds.names(), &mut extra)?;
    run.inputs(extra);
    // One cache at the largest limit; smaller limits are subsets of it.
    let cache = abnkit::build_cache(&ds, &cs, method, &PriorSpec::default())?;
    let full = cache.local_scores(st)?;

    let mut tsv = String::from("max_parents\tscore\tn_arcs\tformula\n");
    for k in 1..=max {
        let limited = abnkit::ConstraintSet::new(cs.banned.clone(), cs.retained.clone(), vec![k; ds.n_vars()]);
        if let Err(e) = limited.validate(ds.names()) {
            log::info!("max_parents {k} skipped: {e}");
            writeln!(tsv, "{k}\tNA\tNA\t")?;
            continue;
        }
        let entries: Vec<Vec<(u64, f64)>> = (0..ds.n_vars())
            .map(|i| {
                full.entries(i)
                    .iter()
                    .copied()
                    .filter(|&(m, _)| m.count_ones() as usize <= k)
                    .collect()
            })
            .collect();
        let scores = LocalScores::new(ds.names().to_vec(), entries)?;
        let res = abnkit::exact_search(&scores, prior)?;
        let f = render_formula(res.dag.parent_masks(), res.dag.nodes());
        writeln!(tsv, "{k}\t{:e}\t{}\t{f}", res.total, res.dag.n_arcs())?;
        println!("max_parents {k}: score {:.4}, {} arcs", res.total, res.dag.n_arcs());
    }
    run.write("sweep.tsv", tsv)?;
    run.finish()
}

pub fn simulate_dag(nodes: usize, prob: f64, seed: u64, out: &Path, argv: &[String]) -> Result<()> {
    let mut run = Run::new(out, "simulate dag", argv)?;
    run.seed(seed);
    let dag = abnkit::simulate_dag(nodes, prob, seed)?;
    run.write("dag.adj", adjacency_text(dag.nodes(), dag.parent_masks())?)?;
    run.write("dag.dot", to_dot(&dag, &DotStyle::default()))?;
    println!("{}", render_formula(dag.parent_masks(), dag.nodes()));
    run.finish()
}

pub fn simulate_data(
    spec_path: &Path,
    n_obs: Option<usize>,
    seed: Option<u64>,
    thinning: Option<usize>,
    out: &Path,
    argv: &[String],
) -> Result<()> {
    if thinning.is_some() {
        eprintln!("note: --thinning has no effect; ancestral draws are independent");
    }
    let mut run = Run::new(out, "simulate data", argv)?;
    run.input(spec_path);
    let text = fs::read_to_string(spec_path).with_context(|| format!("reading {}", spec_path.display()))?;
    let mut spec = SimSpec::from_toml(&text)?;
    if let Some(n) = n_obs {
        spec.n_obs = n;
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    run.seed(spec.seed);
    let ds = abnkit::simulate_data(&spec)?;
    run.fingerprint(ds.fingerprint());
    let mut buf = Vec::new();
    ds.write_csv(&mut buf)?;
    run.write("data.csv", buf)?;
    run.write("dists.txt", ds.dist_spec().to_text())?;
    run.write("spec.toml", spec.to_toml()?)?;
    println!("simulated {} rows of {} variables", ds.n_obs(), ds.n_vars());
    run.finish()
}

pub fn bootstrap(
    data: &DataArgs,
    cons: &ConstraintArgs,
    dag_path: &Path,
    method: &str,
    config: BootstrapConfig,
    out: &Path,
    argv: &[String],
) -> Result<()> {
    let method: FitMethod = method.parse()?;
    let mut run = Run::new(out, "bootstrap", argv)?;
    run.seed(config.seed);
    let ds = util::load_data(data)?;
    run.data(data, &ds);
    run.input(dag_path);
    let dag = util::read_dag_for(dag_path, ds.names())?;
    let mut extra = Vec::new();
    let cs = util::constraints(cons.ban.as_deref(), cons.retain.as_deref(), cons.max_parents, ds.names(), &mut extra)?;
    run.inputs(extra);
    let fits = abnkit::fit_dag(&ds, &dag, method, &config.priors)?;
    let report = abnkit::run_bootstrap(&fits, &dag, &ds, &cs, &config)?;

    let support = LabeledMatrix {
        names: report.support.nodes.clone(),
        values: match report.mode {
            abnkit::SupportMode::Directed => report.support.directed.clone(),
            abnkit::SupportMode::Undirected => report.support.undirected.clone(),
        },
    };
    run.write("support.csv", matrix_text(&support)?)?;
    let mut tsv = String::from("replicate\tn_arcs\tscore\terror\n");
    for r in &report.replicates {
        let arcs = r.n_arcs.map(|a| a.to_string()).unwrap_or_else(|| "NA".into());
        let score = r.score.map(|s| format!("{s:e}")).unwrap_or_else(|| "NA".into());
        writeln!(tsv, "{}\t{arcs}\t{score}\t{}", r.index, r.error.as_deref().unwrap_or(""))?;
    }
    run.write("replicates.tsv", tsv)?;
    let pruned = &report.pruned;
    run.write("pruned.adj", adjacency_text(pruned.nodes(), pruned.parent_masks())?)?;
    let style = DotStyle {
        distributions: Some(ds.dists()),
        weights: Some(&support.values),
    };
    run.write("pruned.dot", to_dot(pruned, &style))?;

    println!(
        "{} replicates ({} failed); median arcs {} vs original {}; pruned DAG keeps {} arcs",
        report.n_replicates,
        report.n_failed,
        report.median_arc_count(),
        dag.n_arcs(),
        pruned.n_arcs()
    );
    println!("{}", render_formula(pruned.parent_masks(), pruned.nodes()));
    run.finish()
}

pub fn strength(data: &DataArgs, dag_path: &Path, rule: &str, out: &Path, argv: &[String]) -> Result<()> {
    let rule: abnkit::BinRule = rule.parse()?;
    let mut run = Run::new(out, "strength", argv)?;
    let ds = util::load_data(data)?;
    run.data(data, &ds);
    run.input(dag_path);
    let dag = util::read_dag_for(dag_path, ds.names())?;
    let disc = abnkit::discretize(&ds, rule);
    let pls = abnkit::pls_matrix(&dag, &disc)?;
    let mi = abnkit::strength::mi_matrix(&dag, &disc)?;
    run.write("pls.csv", matrix_text(&pls)?)?;
    run.write("mi.csv", matrix_text(&mi)?)?;
    let style = DotStyle {
        distributions: Some(ds.dists()),
        weights: Some(&pls.values),
    };
    run.write("strength.dot", to_dot(&dag, &style))?;
    for (p, c) in dag.arcs() {
        println!(
            "{} -> {}: pls {:.3} mi {:.4} bits",
            dag.nodes()[p],
            dag.nodes()[c],
            pls.values[c][p],
            mi.values[c][p]
        );
    }
    run.finish()
}

pub fn compare(reference: &Path, candidate: &Path) -> Result<()> {
    let r = util::read_dag(reference)?;
    let c = util::read_dag_for(candidate, r.nodes())?;
    let m = abnkit::compare_dags(&r, &c)?;
    println!("tp\t{}", m.tp);
    println!("fp\t{}", m.fp);
    println!("tn\t{}", m.tn);
    println!("fn\t{}", m.fn_);
    println!("tpr\t{:.6}", m.tpr);
    println!("fpr\t{:.6}", m.fpr);
    println!("accuracy\t{:.6}", m.accuracy);
    println!("g_measure\t{:.6}", m.g_measure);
    println!("ppv\t{:.6}", m.ppv);
    println!("false_omission_rate\t{:.6}", m.false_omission_rate);
    println!("hamming\t{}", m.hamming);
    Ok(())
}

pub fn info(dag_path: &Path, blanket: Option<&str>) -> Result<()> {
    let dag = util::read_dag(dag_path)?;
    let m = abnkit::info_metrics(&dag);
    println!("n_nodes\t{}", m.n_nodes);
    println!("n_arcs\t{}", m.n_arcs);
    println!("avg_markov_blanket\t{:.4}", m.avg_markov_blanket);
    println!("avg_neighborhood\t{:.4}", m.avg_neighborhood);
    println!("avg_parents\t{:.4}", m.avg_parents);
    println!("avg_children\t{:.4}", m.avg_children);
    if let Some(node) = blanket {
        println!("markov_blanket({node})\t{}", dag.markov_blanket_names(node)?.join(","));
    }
    Ok(())
}
