use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use critgraph::experiment::{run_experiment, write_outputs, ExperimentConfig};
use critgraph::graphgen::{sample_graphon_graph, sample_rank_one, sample_rgiv, EdgeRule, Graph, RankOneMode};
use critgraph::graphstats::{components, distance_stats_with, susceptibilities, write_component_csv};
use critgraph::kernels::{build_sbm_weights, build_weight_matrix, parse_key_values, KernelBlock, WeightScheme};
use critgraph::limits::{default_horizon, sample_crit_space, sample_limit_sizes, DEFAULT_DT, DEFAULT_EXCURSION_POOL};
use critgraph::rng::derive_seed;
use critgraph::spectral::{discretize_kernel, leading_eigenpair, limit_constants, Discretization, SbmInput};
use critgraph::stats::ks_two_sample;

#[derive(Parser)]
#[command(name = "critgraph", version, about = "Critical random graph simulation and limit-law checks")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Master seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Config file (key=value lines, or JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a graph and write it as an edge-list CSV.
    Gen(GenArgs),
    /// Component, susceptibility and distance statistics of an edge-list CSV.
    Stats {
        /// Graph CSV written by `gen`.
        input: PathBuf,
    },
    /// Perron eigenpair and limit constants of a discretized kernel.
    Spectral {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        /// Nodes at i/n instead of midpoints.
        #[arg(long)]
        grid_nodes: bool,
    },
    /// Sample the excursion sizes of the limit law, or a limit metric space.
    Limit {
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        lambda: f64,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_DT)]
        dt: f64,
        /// Write the metric space of mass `gamma` instead of excursion sizes.
        #[arg(long)]
        crit_space: Option<f64>,
        #[arg(long, default_value_t = 400)]
        grid: usize,
        #[arg(long, default_value_t = DEFAULT_EXCURSION_POOL)]
        pool: usize,
    },
    /// Run an experiment described by --config.
    Experiment,
    /// Two-sample KS test between one column of two CSV files.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Column name (default: first column).
        #[arg(long)]
        column: Option<String>,
        #[arg(long, default_value_t = 1e-3)]
        p_threshold: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Graphon,
    RankOne,
    Rgiv,
    Sbm,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value_t = Model::Graphon)]
    model: Model,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    lambda: f64,
    #[arg(long, default_value = "grid")]
    scheme: String,
    #[arg(long, default_value = "capped")]
    rule: String,
    /// Also write the weight matrix.
    #[arg(long)]
    weights: bool,
}

/// Exit status: check failures are 1, usage and configuration problems 2.
enum Failure {
    Check(String),
    Usage(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn read_config(g: &Global) -> anyhow::Result<String> {
    let p = g.config.as_ref().ok_or_else(|| anyhow!("--config is required for this command"))?;
    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
}

fn out_dir(g: &Global) -> anyhow::Result<PathBuf> {
    let d = g.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&d).with_context(|| format!("creating {}", d.display()))?;
    Ok(d)
}

fn write_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> anyhow::Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let g = &cli.global;
    match cli.command {
        Command::Gen(a) => gen(g, a)?,
        Command::Stats { input } => {
            let text = fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let graph = Graph::read_csv(&text).map_err(|e| anyhow!("{e}"))?;
            let cs = components(&graph);
            let ds = distance_stats_with(&graph, &cs);
            let s = susceptibilities(&cs, &[1, 2, 3]);
            if let Some(d) = &g.out {
                fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
                write_file(&d.join("components.csv"), |w| write_component_csv(w, &cs, &ds))?;
            }
            let v = serde_json::json!({
                "n": graph.n,
                "edges": graph.edge_count(),
                "components": cs.count(),
                "largest": cs.largest(),
                "s1": s[0], "s2": s[1], "s3": s[2],
                "mean_distance_sum": ds.mean_distance_sum,
                "diameter": ds.diameter,
            });
            println!("{}", serde_json::to_string_pretty(&v).map_err(|e| anyhow!(e))?);
        }
        Command::Spectral { n, grid_nodes } => {
            let block: KernelBlock = read_config(g)?.parse().map_err(|e| anyhow!("{e}"))?;
            let disc = if grid_nodes { Discretization::Grid } else { Discretization::Midpoint };
            let k = discretize_kernel(&block.w, n, disc);
            let summary = leading_eigenpair(&k).map_err(|e| anyhow!("{e}"))?;
            let h = block.h().map(|h| discretize_kernel(&h, n, disc));
            let c = limit_constants(&summary, h.as_ref()).map_err(|e| anyhow!("{e}"))?;
            let mut v = summary.to_json();
            v["alpha"] = c.alpha.into();
            v["chi"] = c.chi.into();
            v["zeta"] = c.zeta.into();
            let text = serde_json::to_string_pretty(&v).map_err(|e| anyhow!(e))?;
            match &g.out {
                Some(_) => fs::write(out_dir(g)?.join("spectral.json"), text + "\n").context("writing spectral.json")?,
                None => println!("{text}"),
            }
        }
        Command::Limit { lambda, horizon, dt, crit_space, grid, pool } => {
            let dir = out_dir(g)?;
            match crit_space {
                Some(gamma) => {
                    let s = sample_crit_space(gamma, grid, pool, g.seed).map_err(|e| anyhow!("{e}"))?;
                    let text = serde_json::to_string(&s.space.to_json()).map_err(|e| anyhow!(e))?;
                    fs::write(dir.join("crit_space.json"), text + "\n").context("writing crit_space.json")?;
                    println!("points={} links={} mass={}", s.space.m, s.links.len(), s.space.total_mass());
                }
                None => {
                    let t = horizon.unwrap_or_else(|| default_horizon(lambda));
                    let s = sample_limit_sizes(lambda, t, dt, g.seed).map_err(|e| anyhow!("{e}"))?;
                    write_file(&dir.join("limit.csv"), |w| s.write_csv(w))?;
                    println!("excursions={} gamma1={} truncated={}", s.excursions.len(), s.gamma1(), s.truncation_flag);
                    if s.truncation_flag {
                        return Err(Failure::Check(format!("path truncated at T={t}; rerun with a larger --horizon")));
                    }
                }
            }
        }
        Command::Experiment => {
            let mut cfg = ExperimentConfig::parse(&read_config(g)?).map_err(|e| anyhow!("{e}"))?;
            if g.seed != 0 {
                cfg.master_seed = g.seed;
            }
            let dir = match (&g.out, &cfg.out) {
                (Some(d), _) | (None, Some(d)) => d.clone(),
                (None, None) => PathBuf::from("."),
            };
            let outcome = run_experiment(&cfg).map_err(|e| match e {
                critgraph::experiment::ExperimentError::Config { .. } => Failure::Usage(anyhow!("{e}")),
                other => Failure::Usage(anyhow!("{other}")),
            })?;
            write_outputs(&outcome, &cfg, &dir).map_err(|e| anyhow!("{e}"))?;
            for c in &outcome.checks {
                println!("{} {}: statistic={} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.statistic, c.rule);
            }
            if !outcome.passed() {
                let n = outcome.checks.iter().filter(|c| !c.passed).count();
                return Err(Failure::Check(format!("{n} declared check(s) failed")));
            }
        }
        Command::Compare { a, b, column, p_threshold } => {
            let xa = read_column(&a, column.as_deref())?;
            let xb = read_column(&b, column.as_deref())?;
            if xa.is_empty() || xb.is_empty() {
                return Err(Failure::Usage(anyhow!("both samples must be nonempty")));
            }
            let t = ks_two_sample(&xa, &xb);
            println!("{}", serde_json::json!({ "ks_d": t.statistic, "p_value": t.p_value, "threshold": p_threshold, "n_a": xa.len(), "n_b": xb.len() }));
            if t.p_value <= p_threshold {
                return Err(Failure::Check(format!("KS p-value {} <= {p_threshold}", t.p_value)));
            }
        }
    }
    Ok(())
}

fn gen(g: &Global, a: GenArgs) -> anyhow::Result<()> {
    let dir = out_dir(g)?;
    let rule: EdgeRule = a.rule.parse().map_err(|e| anyhow!("{e}"))?;
    let graph = match a.model {
        Model::Graphon => {
            let block: KernelBlock = read_config(g)?.parse().map_err(|e| anyhow!("{e}"))?;
            let scheme: WeightScheme = a.scheme.parse().map_err(|e| anyhow!("{e}"))?;
            let h = block.h().or_else(|| (a.lambda != 0.0).then(|| block.w.scaled(a.lambda)));
            let seed = matches!(scheme, WeightScheme::UniformOrderStat).then(|| derive_seed(g.seed, 1));
            let wm = build_weight_matrix(&block.w, h.as_ref(), a.n, scheme, seed).map_err(|e| anyhow!("{e}"))?;
            if a.weights {
                write_file(&dir.join("weights.csv"), |w| wm.write_csv(w))?;
            }
            sample_graphon_graph(&wm, rule, g.seed)
        }
        Model::RankOne => {
            let nf = a.n as f64;
            let x = vec![nf.powf(-2.0 / 3.0); a.n];
            sample_rank_one(&x, nf.powf(1.0 / 3.0) + a.lambda, RankOneMode::Direct, g.seed).map_err(|e| anyhow!("{e}"))?.graph
        }
        Model::Rgiv => sample_rgiv(a.n, a.lambda, g.seed).map_err(|e| anyhow!("{e}"))?.graph,
        Model::Sbm => {
            let map = parse_key_values(&read_config(g)?).map_err(|e| anyhow!("{e}"))?;
            let input = sbm_from_map(&map)?;
            let (wm, _) = build_sbm_weights(&input, a.n).map_err(|e| anyhow!("{e}"))?;
            if a.weights {
                write_file(&dir.join("weights.csv"), |w| wm.write_csv(w))?;
            }
            sample_graphon_graph(&wm, rule, g.seed)
        }
    };
    write_file(&dir.join("graph.csv"), |w| graph.write_csv(w))?;
    println!("n={} edges={}", graph.n, graph.edge_count());
    Ok(())
}

fn sbm_from_map(map: &BTreeMap<String, String>) -> anyhow::Result<SbmInput> {
    let get = |k: &str| map.get(k).or_else(|| map.get(&format!("sbm.{k}"))).ok_or_else(|| anyhow!("missing sbm key `{k}`"));
    let list = |k: &str| -> anyhow::Result<Vec<f64>> {
        get(k)?
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| critgraph::kernels::parse_real(s).ok_or_else(|| anyhow!("sbm key `{k}`: cannot parse `{s}`")))
            .collect()
    };
    let k: usize = get("k")?.trim().parse().context("sbm key `k`")?;
    let a = if get("a").is_ok() { list("a")? } else { vec![0.0; k * k] };
    let b = if get("b").is_ok() { list("b")? } else { vec![0.0; k] };
    SbmInput::new(k, list("kappa")?, list("mu")?, a, b).map_err(|e| anyhow!("{e}"))
}

fn read_column(path: &Path, column: Option<&str>) -> anyhow::Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| anyhow!("{} is empty", path.display()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let (idx, has_header) = match column {
        Some(c) => (cols.iter().position(|h| *h == c).ok_or_else(|| anyhow!("{}: no column `{c}`", path.display()))?, true),
        None => (0, cols[0].parse::<f64>().is_err()),
    };
    let mut out = Vec::new();
    if !has_header {
        out.push(cols[0].parse::<f64>()?);
    }
    for (k, l) in lines.enumerate() {
        let cell = l.split(',').nth(idx).ok_or_else(|| anyhow!("{}: short row {}", path.display(), k + 2))?;
        let v: f64 = cell.trim().parse().with_context(|| format!("{}: bad number `{cell}`", path.display()))?;
        if v.is_nan() {
            bail!("{}: NaN in column", path.display());
        }
        out.push(v);
    }
    Ok(out)
}
