use clap::{Args, Parser, Subcommand};
use relsynth::error::{Error, Result};
use relsynth::eval::{
    evaluate_queries, gen_planted_db, gen_queries, pearson_report, summarize, Grouped, PearsonMode, PlantedSpec, QuerySpace,
};
use relsynth::orchestrator::{auto_delta, synthesize_database, RunSettings};
use relsynth::privacy::ci_width_demo;
use relsynth::relational::{load_database, load_synthetic, Schema};
use relsynth::rng::SeedTree;
use relsynth::synthesis::SynthesisConfig;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

const THREADS_ENV: &str = "RELSYNTH_THREADS";

#[derive(Parser)]
#[command(name = "relsynth", version, about = "Differentially private synthesis of relational databases")]
struct Cli {
    /// Worker threads (default: $RELSYNTH_THREADS, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize a database under (ε, δ)-differential privacy.
    Synthesize(SynthArgs),
    /// Compare a synthetic database with the real one.
    Evaluate(EvalArgs),
    /// Print confidence interval widths for one tuple against all M tuples of a group.
    DemoCi(CiArgs),
    /// Write a database with planted correlations.
    GenToy(ToyArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Re-run from a manifest written by an earlier run.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// A number, or "auto" for 1 / rows of the largest secondary relation.
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// τ for one foreign key, as relation.attribute=value; repeatable.
    #[arg(long = "tau", value_name = "FK=TAU")]
    tau: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    /// Also write every stored noisy marginal as CSV.
    #[arg(long)]
    dump_npms: bool,
    /// Also write every fitted model as JSON.
    #[arg(long)]
    dump_models: bool,
}

/// Keys accepted by `--config`.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    epsilon: Option<f64>,
    delta: Option<serde_json::Value>,
    seed: Option<u64>,
    synthesis: SynthesisConfig,
    tau: BTreeMap<String, f64>,
    stage_weights: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    schema: PathBuf,
    data: PathBuf,
    settings: RunSettings,
    #[serde(default)]
    plan: serde_json::Value,
    #[serde(default)]
    ledger: serde_json::Value,
    #[serde(default)]
    timings: serde_json::Value,
    #[serde(default)]
    reports: serde_json::Value,
    #[serde(default)]
    outputs: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    schema: PathBuf,
    /// Schema of the synthetic data if stored separately; must match.
    #[arg(long)]
    synthetic_schema: Option<PathBuf>,
    #[arg(long)]
    real: PathBuf,
    #[arg(long)]
    synthetic: PathBuf,
    #[arg(long, default_value_t = 1000)]
    queries: usize,
    #[arg(long, default_value_t = 0.2)]
    selectivity: f64,
    #[arg(long, default_value_t = 1)]
    c: usize,
    /// Let both member predicates of a c = 2 query be met by the same member.
    #[arg(long)]
    allow_same_member: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Foreign key to evaluate (default: every private foreign key).
    #[arg(long)]
    fk: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-query rows as CSV.
    #[arg(long)]
    queries_csv: Option<PathBuf>,
}

#[derive(Args)]
struct CiArgs {
    #[arg(long, default_value_t = 100.0)]
    m: f64,
    #[arg(long, default_value_t = 3.2)]
    epsilon: f64,
    #[arg(long, default_value_t = 1.0 / 3_000_000.0)]
    delta: f64,
    /// Also print widths for ε = 0.2, 0.4, ..., 3.2.
    #[arg(long)]
    sweep: bool,
}

#[derive(Args)]
struct ToyArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    households: usize,
    #[arg(long, default_value_t = 0.6)]
    intra: f64,
    #[arg(long, default_value_t = 0.5)]
    inter: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path.display().to_string(), e))
}

fn parse_delta(v: &str, db: &relsynth::relational::Database) -> Result<f64> {
    if v == "auto" {
        return auto_delta(db);
    }
    v.parse::<f64>()
        .ok()
        .filter(|d| *d > 0.0 && *d < 1.0)
        .ok_or_else(|| Error::Config(format!("delta must be \"auto\" or a number in (0, 1), got {v}")))
}

fn synthesize(a: SynthArgs) -> Result<()> {
    let (schema_path, data_path, settings) = if let Some(m) = &a.manifest {
        let man: Manifest = read_json(m)?;
        (man.schema, man.data, Some(man.settings))
    } else {
        let schema = a.schema.clone().ok_or_else(|| Error::Config("--schema is required".into()))?;
        let data = a.data.clone().ok_or_else(|| Error::Config("--data is required".into()))?;
        (schema, data, None)
    };
    let schema = Schema::load(&schema_path)?;
    let db = load_database(&schema, &data_path)?;
    let settings = match settings {
        Some(s) => s,
        None => {
            let cfg: RunConfig = match &a.config {
                Some(p) => read_json(p)?,
                None => RunConfig::default(),
            };
            let epsilon = a.epsilon.or(cfg.epsilon).ok_or_else(|| Error::Config("--epsilon is required".into()))?;
            if !(epsilon > 0.0) {
                return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
            }
            let delta_raw = match (&a.delta, &cfg.delta) {
                (Some(d), _) => d.clone(),
                (None, Some(serde_json::Value::String(s))) => s.clone(),
                (None, Some(serde_json::Value::Number(n))) => n.to_string(),
                (None, Some(v)) => return Err(Error::Config(format!("bad delta {v}"))),
                (None, None) => "auto".into(),
            };
            let mut tau = cfg.tau;
            for t in &a.tau {
                let (k, v) = t.split_once('=').ok_or_else(|| Error::Config(format!("--tau expects FK=VALUE, got {t}")))?;
                let v: f64 = v.parse().map_err(|_| Error::Config(format!("bad tau value in {t}")))?;
                tau.insert(k.to_string(), v);
            }
            for k in tau.keys() {
                if schema.find_fk(k).is_none() {
                    return Err(Error::Config(format!("tau given for unknown foreign key {k}")));
                }
            }
            RunSettings {
                epsilon,
                delta: parse_delta(&delta_raw, &db)?,
                seed: a.seed.or(cfg.seed).unwrap_or(0),
                config: cfg.synthesis,
                tau,
                stage_weights: cfg.stage_weights,
            }
        }
    };
    let res = synthesize_database(&db, &settings)?;
    let out = &a.out;
    res.database.write_dir(out)?;
    let mut outputs: Vec<String> = res.database.relations.iter().map(|r| format!("{}.csv", r.name)).collect();
    write_json(&out.join("ledger.json"), &res.ledger.to_json())?;
    outputs.push("ledger.json".into());
    if a.dump_npms {
        let dir = out.join("npms");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        for st in &res.stores {
            let name = format!("npms/{}.csv", st.stage);
            let path = out.join(&name);
            let mut f = std::fs::File::create(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
            st.store.dump_csv(&st.schema, &mut f).map_err(|e| Error::io(path.display().to_string(), e))?;
            outputs.push(name);
        }
    }
    if a.dump_models {
        write_json(&out.join("models.json"), &res.models)?;
        outputs.push("models.json".into());
    }
    let manifest = Manifest {
        schema: std::fs::canonicalize(&schema_path).unwrap_or(schema_path),
        data: std::fs::canonicalize(&data_path).unwrap_or(data_path),
        settings,
        plan: serde_json::to_value(&res.plan)?,
        ledger: serde_json::json!({ "budget": res.ledger.budget, "spent": res.ledger.spent(), "planned": res.plan.planned_total() }),
        timings: serde_json::to_value(&res.timings)?,
        reports: serde_json::to_value(&res.fk_reports)?,
        outputs,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    println!(
        "wrote {} relations to {}; privacy cost {:.6} of {:.6} (epsilon {}, delta {:e})",
        res.database.relations.len(),
        out.display(),
        res.ledger.spent(),
        res.ledger.budget,
        manifest.settings.epsilon,
        manifest.settings.delta
    );
    Ok(())
}

fn evaluate(a: EvalArgs) -> Result<()> {
    let schema = Schema::load(&a.schema)?;
    if let Some(p) = &a.synthetic_schema {
        if Schema::load(p)? != schema {
            return Err(Error::Schema(format!("{} differs from {}", p.display(), a.schema.display())));
        }
    }
    let real = load_database(&schema, &a.real)?;
    let syn = load_synthetic(&schema, &a.synthetic)?;
    let fks = if a.fk.is_empty() {
        schema.private_fks()
    } else {
        a.fk.iter()
            .map(|l| schema.find_fk(l).ok_or_else(|| Error::Config(format!("unknown foreign key {l}"))))
            .collect::<Result<Vec<_>>>()?
    };
    let seeds = SeedTree::new(a.seed);
    let mut report = serde_json::Map::new();
    let mut rows = Vec::new();
    for fk in fks {
        let label = schema.fk_label(fk);
        let gr = Grouped::new(&real, fk)?;
        let gs = Grouped::new(&syn, fk)?;
        let max_size = gr.groups.iter().chain(&gs.groups).map(|g| g.len()).max().unwrap_or(1).max(1);
        let space = QuerySpace {
            household_domains: gr.households.attributes.iter().map(|x| x.domain_size).collect(),
            individual_domains: gr.individuals.attributes.iter().map(|x| x.domain_size).collect(),
            max_size,
        };
        let queries = gen_queries(&space, a.queries, a.selectivity, a.c, &mut seeds.stream(&format!("queries:{label}")))?;
        let results = evaluate_queries(&gr, &gs, &queries, !a.allow_same_member);
        let summary = summarize(&results.iter().map(|r| r.rel_error).collect::<Vec<_>>());
        let nh = gr.households.attributes.len();
        let ni = gr.individuals.attributes.len();
        let inter: Vec<(usize, usize)> = (0..nh).flat_map(|h| (0..ni).map(move |i| (h, i))).collect();
        let intra: Vec<(usize, usize)> = (0..ni).flat_map(|x| (x..ni).map(move |y| (x, y))).collect();
        let pearson = serde_json::json!({
            "real": {
                "inter_relational": pearson_report(&gr, &inter, PearsonMode::InterRelational),
                "intra_group": pearson_report(&gr, &intra, PearsonMode::IntraGroup),
            },
            "synthetic": {
                "inter_relational": pearson_report(&gs, &inter, PearsonMode::InterRelational),
                "intra_group": pearson_report(&gs, &intra, PearsonMode::IntraGroup),
            },
        });
        println!("{label}: {} queries, mean relative error {:.4}, median {:.4}", summary.count, summary.mean, summary.median);
        for r in &results {
            rows.push((label.clone(), r.real, r.syn, r.rel_error, serde_json::to_string(&r.query)?));
        }
        report.insert(label, serde_json::json!({ "summary": summary, "pearson": pearson, "queries": results }));
    }
    if let Some(p) = &a.out {
        write_json(p, &report)?;
    }
    if let Some(p) = &a.queries_csv {
        let ps = p.display().to_string();
        let mut w = csv::Writer::from_path(p).map_err(|e| Error::Csv { path: ps.clone(), msg: e.to_string() })?;
        w.write_record(["foreign_key", "real", "synthetic", "rel_error", "query"])
            .map_err(|e| Error::Csv { path: ps.clone(), msg: e.to_string() })?;
        for (l, r, s, e, q) in rows {
            w.write_record([l, r.to_string(), s.to_string(), e.to_string(), q])
                .map_err(|e| Error::Csv { path: ps.clone(), msg: e.to_string() })?;
        }
        w.flush().map_err(|e| Error::io(ps, e))?;
    }
    Ok(())
}

fn demo_ci(a: CiArgs) -> Result<()> {
    let (all, one, ratio) = ci_width_demo(a.m, a.epsilon, a.delta)?;
    println!("M = {}, epsilon = {}, delta = {:e}", a.m, a.epsilon, a.delta);
    println!("95% CI width, one tuple:  {one:.4}");
    println!("95% CI width, all tuples: {all:.4}");
    println!("ratio: {ratio}");
    if a.sweep {
        println!("epsilon,one,all");
        for i in 1..=16 {
            let e = 0.2 * i as f64;
            let (all, one, _) = ci_width_demo(a.m, e, a.delta)?;
            println!("{e:.1},{one:.4},{all:.4}");
        }
    }
    Ok(())
}

fn gen_toy(a: ToyArgs) -> Result<()> {
    let spec = PlantedSpec { n_households: a.households, intra: a.intra, inter: a.inter, ..PlantedSpec::default() };
    let db = gen_planted_db(&spec, &mut SeedTree::new(a.seed).stream("planted"))?;
    db.write_dir(&a.out)?;
    write_json(&a.out.join("schema.json"), &db.schema)?;
    println!(
        "wrote {} households and {} individuals to {}",
        db.relations[0].len(),
        db.relations[1].len(),
        a.out.display()
    );
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()));
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} threads: {e}");
            std::process::exit(2);
        }
    }
    let res = match cli.cmd {
        Cmd::Synthesize(a) => synthesize(a),
        Cmd::Evaluate(a) => evaluate(a),
        Cmd::DemoCi(a) => demo_ci(a),
        Cmd::GenToy(a) => gen_toy(a),
    };
    if let Err(e) = res {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
