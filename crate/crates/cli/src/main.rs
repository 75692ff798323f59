mod args;

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use curate::dynamic::dynamic_select;
use curate::embeddings::{load_embeddings, normalize_rows, pair, EmbeddingSet, Format, Modality};
use curate::files::{read_scores, read_selection, write_scores, write_selection, write_training_list};
use curate::quality::{clip_score, make_batch_plan, neg_clip_loss};
use curate::scores::ScoreVector;
use curate::select::{intersect, restrict, select_threshold, select_top, union_oversample, Amount, Keep};
use curate::target::{nn_rank_score, normsim, target_statistics, vas, NormOrder};
use curate::theory::experiments::{
    run_eym, run_lemma1, run_noise_decomp, run_testloss, run_theorem_main, ExperimentReport, EymParams, Lemma1Params, NoiseDecompParams,
    TestLossParams, TheoremMainParams,
};
use curate::Error;

use args::{
    Cli, CombineArgs, CombineOp, Command, DynamicArgs, Experiment, KeepArg, Metric, ScoreArgs, SelectArgs, SimulateArgs, VasModality,
};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_ASSERTION: u8 = 4;

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Assertion(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Data(_) => EXIT_DATA,
            Failure::Assertion(_) => EXIT_ASSERTION,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Assertion(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        classify(e, None)
    }
}

/// Parameter mistakes are usage errors; everything else is about the data.
fn classify(e: Error, file: Option<&Path>) -> Failure {
    let msg = match file {
        Some(p) => format!("{}: {e}", p.display()),
        None => e.to_string(),
    };
    match e {
        Error::InvalidParameter(_) | Error::InvalidTemperature(_) | Error::InvalidNormOrder(_) | Error::InvalidTarget { .. } => {
            Failure::Usage(msg)
        }
        _ => Failure::Data(msg),
    }
}

fn in_file<T>(path: &Path, r: curate::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| classify(e, Some(path)))
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("curate: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("curate: cannot start thread pool: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let result = match &cli.command {
        Command::Score(a) => cmd_score(a),
        Command::Select(a) => cmd_select(a),
        Command::Combine(a) => cmd_combine(a),
        Command::Dynamic(a) => cmd_dynamic(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("curate: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn join_paths(ps: &[PathBuf]) -> String {
    ps.iter().map(|p| path_str(p)).collect::<Vec<_>>().join(";")
}

fn load(path: &Path, normalize: bool) -> Result<EmbeddingSet, Failure> {
    let set = in_file(path, load_embeddings(path, Format::from_path(path)))?;
    if normalize {
        in_file(path, normalize_rows(&set))
    } else {
        Ok(set)
    }
}

fn load_concat(paths: &[PathBuf], normalize: bool) -> Result<EmbeddingSet, Failure> {
    let parts = paths.iter().map(|p| load(p, normalize)).collect::<Result<Vec<_>, _>>()?;
    Ok(EmbeddingSet::concat(&parts)?)
}

fn require<'a, T>(value: &'a Option<T>, flag: &str, metric: Metric) -> Result<&'a T, Failure> {
    value.as_ref().ok_or_else(|| Failure::Usage(format!("--metric {} needs {flag}", metric.name())))
}

fn require_targets(paths: &[PathBuf], metric: Metric) -> Result<(), Failure> {
    if paths.is_empty() {
        return Err(Failure::Usage(format!("--metric {} needs at least one --target", metric.name())));
    }
    Ok(())
}

fn parse_norm_order(p: &str, absolute: bool) -> Result<NormOrder, Failure> {
    if p.eq_ignore_ascii_case("inf") {
        return Ok(NormOrder::Infinity { absolute });
    }
    let v: f64 = p.parse().map_err(|_| Failure::Usage(format!("--p expects 2, inf or a number >= 1, got `{p}`")))?;
    if absolute {
        return Err(Failure::Usage("--abs-inf only applies to --p inf".into()));
    }
    Ok(NormOrder::Finite(v))
}

fn cmd_score(a: &ScoreArgs) -> Outcome {
    let image = load(&a.image, a.normalize)?.with_modality(Modality::Vision);
    let mut scores = match a.metric {
        Metric::Clipscore | Metric::Negcliploss => {
            let text = load(require(&a.text, "--text", a.metric)?, a.normalize)?.with_modality(Modality::Language);
            let pool = pair(&image, &text)?;
            if a.metric == Metric::Clipscore {
                clip_score(&pool)?
            } else {
                let plan = make_batch_plan(pool.n(), a.batch_size, a.k, a.seed)?;
                neg_clip_loss(&pool, &plan, a.tau)?
            }
        }
        Metric::Vas => {
            require_targets(&a.target, a.metric)?;
            let target = load_concat(&a.target, a.normalize)?;
            match a.modality {
                VasModality::Vision => {
                    if !a.target_text.is_empty() {
                        return Err(Failure::Usage("--target-text needs --modality cross".into()));
                    }
                    let stats = target_statistics(&target, &target)?;
                    vas(&image, &image, &stats)?
                }
                VasModality::Cross => {
                    let text = load(require(&a.text, "--text", a.metric)?, a.normalize)?;
                    if a.target_text.is_empty() {
                        return Err(Failure::Usage("--modality cross needs --target-text".into()));
                    }
                    let target_text = load_concat(&a.target_text, a.normalize)?;
                    let stats = target_statistics(&target, &target_text)?;
                    vas(&image, &text, &stats)?
                }
            }
            .with_param("modality", format!("{:?}", a.modality).to_lowercase())
        }
        Metric::Normsim => {
            require_targets(&a.target, a.metric)?;
            let target = load_concat(&a.target, a.normalize)?;
            normsim(&image, &target, parse_norm_order(&a.p, a.abs_inf)?)?
        }
        Metric::Nnrank => {
            require_targets(&a.target, a.metric)?;
            let target = load_concat(&a.target, a.normalize)?;
            nn_rank_score(&image, &target)?
        }
    };
    scores = scores.with_param("image", path_str(&a.image)).with_param("normalize", a.normalize);
    if let Some(t) = &a.text {
        scores = scores.with_param("text", path_str(t));
    }
    if !a.target.is_empty() {
        scores = scores.with_param("target", join_paths(&a.target));
    }
    if !a.target_text.is_empty() {
        scores = scores.with_param("target_text", join_paths(&a.target_text));
    }
    write_scores(&scores, &a.out)?;
    eprintln!("curate: {} scores ({}) -> {}", scores.len(), scores.metric, a.out.display());
    Ok(())
}

fn param(map: &mut BTreeMap<String, String>, key: &str, value: impl Display) {
    map.insert(key.to_string(), value.to_string());
}

fn cmd_select(a: &SelectArgs) -> Outcome {
    let scores: ScoreVector = in_file(&a.scores, read_scores(&a.scores))?;
    let n = scores.len();
    let within = match &a.within {
        Some(p) => Some(in_file(p, read_selection(p, Some(n)))?),
        None => None,
    };
    let mut params = BTreeMap::new();
    param(&mut params, "command", "select");
    param(&mut params, "scores", path_str(&a.scores));
    param(&mut params, "metric", &scores.metric);
    if let Some(p) = &a.within {
        param(&mut params, "within", path_str(p));
    }
    let amount = match (a.top_frac, a.top_n) {
        (Some(f), _) => {
            param(&mut params, "top_frac", format!("{f:?}"));
            Some(Amount::Fraction(f))
        }
        (_, Some(k)) => {
            param(&mut params, "top_n", k);
            Some(Amount::Count(k))
        }
        _ => None,
    };
    let sel = match amount {
        Some(amount) => {
            check_amount(amount)?;
            match &within {
                Some(w) => restrict(&scores, w)?.select_top(amount)?,
                None => select_top(&scores, amount)?,
            }
        }
        None => {
            let (theta, keep) = match (a.threshold, a.keep) {
                (Some(t), Some(k)) => (t, k),
                _ => return Err(Failure::Usage("--threshold needs --keep ge|le".into())),
            };
            param(&mut params, "threshold", format!("{theta:?}"));
            param(&mut params, "keep", if keep == KeepArg::Ge { "ge" } else { "le" });
            let keep = if keep == KeepArg::Ge { Keep::AtLeast } else { Keep::AtMost };
            let cut = select_threshold(&scores, theta, keep)?;
            match &within {
                Some(w) => intersect(&cut, w)?,
                None => cut,
            }
        }
    };
    write_selection(&sel, &params, &a.out)?;
    eprintln!("curate: selected {} of {} -> {}", sel.len(), n, a.out.display());
    Ok(())
}

fn check_amount(amount: Amount) -> Outcome {
    match amount {
        Amount::Fraction(f) if !(f > 0.0 && f <= 1.0) => Err(Failure::Usage(format!("--top-frac must be in (0, 1], got {f}"))),
        Amount::Count(0) => Err(Failure::Usage("--top-n must be at least 1".into())),
        _ => Ok(()),
    }
}

fn cmd_combine(a: &CombineArgs) -> Outcome {
    let left = in_file(&a.a, read_selection(&a.a, None))?;
    let right = in_file(&a.b, read_selection(&a.b, None))?;
    let mut params = BTreeMap::new();
    param(&mut params, "command", "combine");
    param(&mut params, "a", path_str(&a.a));
    param(&mut params, "b", path_str(&a.b));
    match a.op {
        CombineOp::Intersect => {
            param(&mut params, "op", "intersect");
            let sel = intersect(&left, &right)?;
            write_selection(&sel, &params, &a.out)?;
            eprintln!("curate: intersection has {} items -> {}", sel.len(), a.out.display());
        }
        CombineOp::Union => {
            param(&mut params, "op", "union");
            let list = union_oversample(&left, &right)?;
            write_training_list(&list, &params, &a.out)?;
            eprintln!("curate: training list has {} entries, {} unique -> {}", list.entries.len(), list.unique_count(), a.out.display());
        }
    }
    Ok(())
}

fn cmd_dynamic(a: &DynamicArgs) -> Outcome {
    let pool = load(&a.pool, a.normalize)?;
    if a.steps == 0 {
        return Err(Failure::Usage("--steps must be at least 1".into()));
    }
    let sel = dynamic_select(&pool, a.target_n, a.steps)?;
    let mut params = BTreeMap::new();
    param(&mut params, "command", "dynamic");
    param(&mut params, "pool", path_str(&a.pool));
    param(&mut params, "target_n", a.target_n);
    param(&mut params, "steps", a.steps);
    param(&mut params, "normalize", a.normalize);
    write_selection(&sel, &params, &a.out)?;
    eprintln!("curate: kept {} of {} -> {}", sel.len(), pool.n(), a.out.display());
    Ok(())
}

/// Names of the override flags that were given.
fn given_overrides(a: &SimulateArgs) -> Vec<&'static str> {
    let flags = [
        ("--d", a.d.is_some()),
        ("--r", a.r.is_some()),
        ("--n", a.n.is_some()),
        ("--seed", a.seed.is_some()),
        ("--rho", a.rho.is_some()),
        ("--noise", a.noise.is_some()),
        ("--eta", a.eta.is_some()),
        ("--subset-size", a.subset_size.is_some()),
        ("--subsets", a.subsets.is_some()),
        ("--test-n", a.test_n.is_some()),
        ("--max-tilt", a.max_tilt.is_some()),
        ("--instances", a.instances.is_some()),
        ("--competitors", a.competitors.is_some()),
        ("--replicates", a.replicates.is_some()),
        ("--sizes", a.sizes.is_some()),
        ("--trials", a.trials.is_some()),
        ("--select", a.select.is_some()),
        ("--teacher-noise-l", a.teacher_noise_l.is_some()),
        ("--noise-l", a.noise_l.is_some()),
    ];
    flags.iter().filter(|f| f.1).map(|f| f.0).collect()
}

fn only(a: &SimulateArgs, name: &str, allowed: &[&str]) -> Outcome {
    match given_overrides(a).into_iter().find(|f| !allowed.contains(f)) {
        Some(f) => Err(Failure::Usage(format!("{f} does not apply to --experiment {name}"))),
        None => Ok(()),
    }
}

fn set<T: Clone>(slot: &mut T, value: &Option<T>) {
    if let Some(v) = value {
        *slot = v.clone();
    }
}

fn run_experiment(a: &SimulateArgs) -> Result<ExperimentReport, Failure> {
    let report = match a.experiment {
        Experiment::Lemma1 => {
            only(
                a,
                "lemma1",
                &["--d", "--r", "--n", "--seed", "--rho", "--noise", "--eta", "--subset-size", "--subsets", "--test-n", "--max-tilt"],
            )?;
            let mut p = Lemma1Params::default();
            set(&mut p.d, &a.d);
            set(&mut p.r, &a.r);
            set(&mut p.n, &a.n);
            set(&mut p.seed, &a.seed);
            set(&mut p.rho, &a.rho);
            set(&mut p.eta, &a.eta);
            set(&mut p.subset_size, &a.subset_size);
            set(&mut p.subsets, &a.subsets);
            set(&mut p.test_n, &a.test_n);
            set(&mut p.max_tilt, &a.max_tilt);
            p.noise = a.noise.unwrap_or(1.0 / (p.d as f64).sqrt());
            run_lemma1(&p)
        }
        Experiment::Eym => {
            // --d, --r and --n bound the randomly drawn instance sizes.
            only(a, "eym", &["--d", "--r", "--n", "--seed", "--rho", "--instances", "--competitors"])?;
            let mut p = EymParams::default();
            set(&mut p.max_d, &a.d);
            set(&mut p.max_r, &a.r);
            set(&mut p.max_subset, &a.n);
            set(&mut p.seed, &a.seed);
            set(&mut p.rho, &a.rho);
            set(&mut p.instances, &a.instances);
            set(&mut p.competitors, &a.competitors);
            run_eym(&p)
        }
        Experiment::Testloss => {
            only(a, "testloss", &["--d", "--r", "--n", "--seed", "--rho", "--replicates", "--sizes"])?;
            let mut p = TestLossParams::default();
            set(&mut p.d, &a.d);
            set(&mut p.r, &a.r);
            set(&mut p.n, &a.n);
            set(&mut p.seed, &a.seed);
            set(&mut p.rho, &a.rho);
            set(&mut p.replicates, &a.replicates);
            set(&mut p.sizes, &a.sizes);
            run_testloss(&p)
        }
        Experiment::TheoremMain => {
            only(
                a,
                "theorem-main",
                &["--d", "--r", "--n", "--seed", "--rho", "--noise", "--noise-l", "--teacher-noise-l", "--trials", "--select", "--test-n"],
            )?;
            let mut p = TheoremMainParams::default();
            set(&mut p.d, &a.d);
            set(&mut p.r, &a.r);
            set(&mut p.n, &a.n);
            set(&mut p.seed, &a.seed);
            set(&mut p.rho, &a.rho);
            if let Some(s) = a.noise {
                p.noise = s;
                p.noise_l = s;
                p.teacher_noise_v = s;
            }
            set(&mut p.noise_l, &a.noise_l);
            set(&mut p.teacher_noise_l, &a.teacher_noise_l);
            set(&mut p.trials, &a.trials);
            set(&mut p.select, &a.select);
            set(&mut p.test_n, &a.test_n);
            run_theorem_main(&p)
        }
        Experiment::NoiseDecomp => {
            only(a, "noise-decomp", &["--d", "--r", "--n", "--seed", "--noise", "--subsets", "--subset-size"])?;
            let mut p = NoiseDecompParams::default();
            set(&mut p.d, &a.d);
            set(&mut p.r, &a.r);
            set(&mut p.subset_size, &a.n);
            set(&mut p.subset_size, &a.subset_size);
            set(&mut p.seed, &a.seed);
            set(&mut p.noise, &a.noise);
            set(&mut p.subsets, &a.subsets);
            run_noise_decomp(&p)
        }
    };
    Ok(report?)
}

fn cmd_simulate(a: &SimulateArgs) -> Outcome {
    let report = run_experiment(a)?;
    std::fs::write(&a.out, report.to_csv()).map_err(|e| Failure::Data(format!("{}: {e}", a.out.display())))?;
    for c in &report.checks {
        eprintln!("curate: [{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
    }
    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Assertion(format!("{} failed: {}", report.name, failed.join(", "))))
    }
}
