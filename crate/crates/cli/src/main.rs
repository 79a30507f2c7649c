use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;

use edgelab::chain::{validate_chain, ChainSpec, PinSet};
use edgelab::edgeworth::{classical_expansion, full_expansion_pinned, DropRule};
use edgelab::experiment::{run_experiment, ExperimentParams, ExperimentReport, K_GRID};
use edgelab::oracle::{residue_law, sum_pmf};
use edgelab::report::{emit_report, Format};
use edgelab::resonance::{prokhorov_classify, residue_profile, MStatistic};
use edgelab::rpf::{rpf_triplets, verify_rpf};
use edgelab::scenario::{Generator, Scenario};

#[derive(Parser)]
#[command(name = "edgelab", version, about = "Exact oracles and Edgeworth expansions for Markov additive sums")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check ellipticity and report mixing diagnostics.
    Validate(Source),
    /// Exact law of S_N and residue laws.
    Oracle {
        #[command(flatten)]
        src: Source,
        /// Also report the law of S_N mod m.
        #[arg(long)]
        modulus: Option<usize>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Out,
    },
    /// Classical or generalized expansion with an evaluation table.
    Expand {
        #[command(flatten)]
        src: Source,
        #[arg(long, default_value_t = 1)]
        order: usize,
        #[arg(long = "R")]
        r_threshold: Option<f64>,
        /// Keep only the classical part.
        #[arg(long)]
        classical: bool,
        #[arg(long, value_enum, default_value = "json")]
        format: Out,
    },
    /// Residue profiles and the drop criterion.
    Resonance {
        #[command(flatten)]
        src: Source,
        #[arg(long = "R", default_value_t = 10.0)]
        r_threshold: f64,
        #[arg(long, value_enum, default_value = "json")]
        format: Out,
    },
    /// Perron-Frobenius triplets of the perturbed transfer operators.
    Rpf {
        #[command(flatten)]
        src: Source,
        /// Perturbation as `re,im`.
        #[arg(long, default_value = "0.05,0")]
        z: String,
        #[arg(long, value_enum, default_value = "csv")]
        format: Out,
    },
    /// Run a ladder experiment; exit code 2 when a primary verdict fails.
    Experiment {
        /// llt-order-r, llt-order-<r>, prokhorov, necessity,
        /// conditional-equivalence, resonant-decomposition or rpf.
        name: String,
        /// Preset name or path to a scenario JSON file.
        #[arg(long, default_value = "random-elliptic")]
        scenario: String,
        #[command(flatten)]
        opts: ExperimentOpts,
    },
    /// Re-render a saved experiment report.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "csv,json,svg")]
        format: Vec<Format>,
    },
}

#[derive(Args)]
struct Source {
    /// Chain JSON file.
    #[arg(long, conflicts_with = "scenario")]
    spec: Option<PathBuf>,
    /// Preset scenario name (with --n).
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long, default_value_t = 64)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Pins as `step:state`, repeatable.
    #[arg(long = "pin")]
    pins: Vec<String>,
}

#[derive(Args)]
struct ExperimentOpts {
    /// JSON file with experiment parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    ladder: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "R")]
    r_threshold: Option<f64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "csv,json,svg")]
    format: Vec<Format>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Out {
    Csv,
    Json,
}

fn set_seed(g: &mut Generator, seed: u64) {
    match g {
        Generator::RandomElliptic { seed: s, .. } | Generator::EvenLattice { seed: s, .. } => *s = seed,
        _ => {}
    }
}

fn load_scenario(name: &str) -> Result<Scenario> {
    let p = Path::new(name);
    if p.is_file() {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        return serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()));
    }
    Ok(Scenario::preset(name)?)
}

impl Source {
    fn chain(&self) -> Result<ChainSpec> {
        match (&self.spec, &self.scenario) {
            (Some(p), _) => Ok(ChainSpec::from_path(p)?),
            (None, Some(name)) => {
                let mut s = load_scenario(name)?;
                if let Some(seed) = self.seed {
                    set_seed(&mut s.generator, seed);
                }
                Ok(s.generate(self.n)?)
            }
            (None, None) => bail!("one of --spec or --scenario is required"),
        }
    }

    fn pins(&self) -> Result<Option<PinSet>> {
        if self.pins.is_empty() {
            return Ok(None);
        }
        let mut set = PinSet::new();
        for p in &self.pins {
            let (a, b) = p.split_once(':').ok_or_else(|| anyhow!("pin '{p}' is not step:state"))?;
            set.insert(a.trim().parse()?, b.trim().parse()?);
        }
        Ok(Some(set))
    }
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Validate(src) => {
            let spec = src.chain()?;
            print_json(&validate_chain(&spec)?)?;
        }
        Cmd::Oracle { src, modulus, format } => {
            let spec = src.chain()?;
            let pins = src.pins()?;
            let pmf = sum_pmf(&spec, pins.as_ref())?;
            let law = modulus.map(|m| residue_law(&spec, m, pins.as_ref())).transpose()?;
            match format {
                Out::Csv => {
                    print!("{}", pmf.to_csv());
                    if let Some(l) = law {
                        eprintln!("{}", l.to_json());
                    }
                }
                Out::Json => {
                    let probs: Vec<_> = pmf.iter().map(|(k, p)| serde_json::json!([k, p])).collect();
                    print_json(&serde_json::json!({
                        "pmf": probs,
                        "residues": law.map(|l| l.to_json()),
                    }))?;
                }
            }
        }
        Cmd::Expand { src, order, r_threshold, classical, format } => {
            let spec = src.chain()?;
            let pins = src.pins()?;
            let exp = if classical {
                classical_expansion(&spec, order, pins.as_ref())?
            } else {
                let rule = r_threshold.map_or_else(DropRule::default, DropRule::with_threshold);
                full_expansion_pinned(&spec, order, rule, pins.as_ref())?
            };
            match format {
                Out::Json => print_json(&exp.to_json())?,
                Out::Csv => {
                    let pmf = sum_pmf(&spec, pins.as_ref())?;
                    let ks: Vec<i64> = K_GRID.iter().map(|x| (exp.mean + x * exp.sigma).round() as i64).collect();
                    print!("{}", exp.table_csv(&pmf, &ks));
                }
            }
        }
        Cmd::Resonance { src, r_threshold, format } => {
            let spec = src.chain()?;
            match format {
                Out::Json => print_json(&prokhorov_classify(&spec, r_threshold, MStatistic::SecondLargest)?)?,
                Out::Csv => {
                    let mut first = true;
                    for m in 2..=(2 * spec.bound()) as usize {
                        let csv = residue_profile(&spec, m, None)?.to_csv();
                        let body = if first { csv.as_str() } else { csv.split_once('\n').map_or("", |x| x.1) };
                        print!("{body}");
                        first = false;
                    }
                }
            }
        }
        Cmd::Rpf { src, z, format } => {
            let spec = src.chain()?;
            let (re, im) = z.split_once(',').ok_or_else(|| anyhow!("--z expects re,im"))?;
            let z = Complex64::new(re.trim().parse()?, im.trim().parse()?);
            let tr = rpf_triplets(&spec, z, None)?;
            match format {
                Out::Json => print_json(&tr)?,
                Out::Csv => print!("{}", verify_rpf(&spec, z, None, &tr)?.to_csv()),
            }
        }
        Cmd::Experiment { name, scenario, opts } => {
            let mut scen = load_scenario(&scenario)?;
            let mut params = match &opts.config {
                Some(p) => {
                    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    serde_json::from_str::<ExperimentParams>(&text)
                        .with_context(|| format!("parsing {}", p.display()))?
                }
                None => ExperimentParams::default(),
            };
            if let Some(r) = opts.order {
                params.order = r;
            }
            if let Some(t) = opts.r_threshold {
                params.drop_rule.threshold = t;
            }
            if let Some(seed) = opts.seed {
                params.seed = seed;
                set_seed(&mut scen.generator, seed);
            }
            if let Some(l) = opts.ladder {
                scen.ladder = l;
            }
            let report = run_experiment(&name, &scen, &params)?;
            summarize(&report);
            if let Some(dir) = &opts.out_dir {
                for p in emit_report(&report, dir, &opts.format)? {
                    eprintln!("wrote {}", p.display());
                }
                let full = dir.join(format!("{}_{}_report.json", report.id, report.scenario));
                std::fs::write(&full, serde_json::to_string_pretty(&report)? + "\n")
                    .with_context(|| format!("writing {}", full.display()))?;
                eprintln!("wrote {}", full.display());
            }
            return Ok(verdict_code(&report));
        }
        Cmd::Report { input, out_dir, format } => {
            let text = std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let report: ExperimentReport =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", input.display()))?;
            for p in emit_report(&report, &out_dir, &format)? {
                eprintln!("wrote {}", p.display());
            }
            summarize(&report);
            return Ok(verdict_code(&report));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn summarize(r: &ExperimentReport) {
    for v in &r.verdicts {
        println!(
            "{} {}{} [{}: {}] {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.name,
            if v.primary { "" } else { " (diagnostic)" },
            v.metric,
            v.threshold,
            v.detail
        );
    }
    for f in &r.flags {
        println!("note: {f}");
    }
    println!("{}: {} on {}", if r.passed() { "PASS" } else { "FAIL" }, r.id, r.scenario);
}

fn verdict_code(r: &ExperimentReport) -> ExitCode {
    if r.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
