//! Subcommands and the dispatcher.
//!
//! Exit codes: 0 success, 1 recovery failure (the attack ran but could
//! not produce/validate its output), 2 i/o or parameter errors.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use mtpr::error::Error as MtprError;
use mtpr::floral::{count_houses, find_floral_submatrix, formula_house_budget};
use mtpr::gram::gram_extract;
use mtpr::model::{generate_instance, ModelParams};
use mtpr::pipeline::{
    evaluate_images, gram_eta, learn_private_images_with, AttackConfig,
};
use mtpr::public::PublicMethod;

use crate::format;
use crate::report;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RECOVERY: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser)]
#[command(
    name = "mtpr",
    about = "Synthetic mixed-and-folded Gaussian datasets and the private-image recovery attack",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a dataset file plus its separate ground-truth file.
    Generate(GenerateArgs),
    /// Run the recovery attack on a dataset file.
    Attack(AttackArgs),
    /// Compare recovered images against the ground truth.
    Evaluate(EvaluateArgs),
    /// Extract the integer overlap matrix and dump it as text.
    Gram(GramArgs),
    /// Find a floral submatrix in an overlap-matrix dump.
    Floral(FloralArgs),
    /// Run the built-in property smoke checks.
    Selftest,
    /// Time the main stages at a configurable scale.
    Bench(BenchArgs),
}

#[derive(Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 0)]
    pub n_pub: usize,
    #[arg(long, default_value_t = 0)]
    pub n_priv: usize,
    #[arg(long, default_value_t = 0)]
    pub k_pub: usize,
    #[arg(long, default_value_t = 0)]
    pub k_priv: usize,
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; receives data.mtpr and truth.mtpr.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct AttackArgs {
    /// Dataset file produced by `generate`.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output directory; receives recovered.mtpr and report.toml.
    #[arg(long)]
    pub out: PathBuf,
    /// Public-support method: "threshold" (default) or "sdp".
    #[arg(long, default_value = "threshold")]
    pub method: String,
    /// Diagonal-thresholding window (default max(25, 4 k_pub)).
    #[arg(long)]
    pub window: Option<usize>,
    /// Floral-search house budget; "formula" enables the calibrated
    /// bound, a number sets it directly, absent disables the guard.
    #[arg(long)]
    pub house_budget: Option<String>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// recovered.mtpr from `attack`.
    #[arg(long)]
    pub recovered: PathBuf,
    /// truth.mtpr from `generate`.
    #[arg(long)]
    pub truth: PathBuf,
    /// Optional path for the evaluation TOML (stdout otherwise).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct GramArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Accuracy parameter; defaults to min(1/(2k), 1/(2 grid)).
    #[arg(long)]
    pub eta: Option<f64>,
    /// Rounding grid; defaults to the params' canonical grid.
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Args)]
pub struct FloralArgs {
    /// Overlap-matrix text dump (all-private grid).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Sparsity k; must equal the dump's grid.
    #[arg(long)]
    pub k: usize,
    /// Optional output path for the assignment TOML (stdout otherwise).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 8000)]
    pub d: usize,
    #[arg(long, default_value_t = 20)]
    pub n_priv: usize,
    #[arg(long, default_value_t = 2)]
    pub k_priv: usize,
    #[arg(long, default_value_t = 400)]
    pub m: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Classifies library errors into exit codes: parameter/shape problems
/// are usage errors, everything else is a recovery failure.
fn exit_code_for(err: &MtprError) -> i32 {
    match err {
        MtprError::Stage { source, .. } => exit_code_for(source),
        MtprError::Parameter(_) | MtprError::DimensionMismatch(_) | MtprError::Sizing(_) => {
            EXIT_USAGE
        }
        _ => EXIT_RECOVERY,
    }
}

fn fail(code: i32, msg: impl std::fmt::Display) -> i32 {
    eprintln!("error: {msg}");
    code
}

/// Parses and runs one invocation; returns the process exit code.
pub fn cli_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version on stdout with success status
            let code = if e.exit_code() == 0 { EXIT_OK } else { EXIT_USAGE };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Generate(args) => run_generate(&args),
        Command::Attack(args) => run_attack(&args),
        Command::Evaluate(args) => run_evaluate(&args),
        Command::Gram(args) => run_gram(&args),
        Command::Floral(args) => run_floral(&args),
        Command::Selftest => run_selftest(),
        Command::Bench(args) => run_bench(&args),
    }
}

fn run_generate(args: &GenerateArgs) -> i32 {
    let params = ModelParams {
        d: args.d,
        n_pub: args.n_pub,
        n_priv: args.n_priv,
        k_pub: args.k_pub,
        k_priv: args.k_priv,
        m: args.m,
        seed: args.seed,
    };
    if let Err(e) = params.validate() {
        return fail(EXIT_USAGE, e);
    }
    if let Err(e) = std::fs::create_dir_all(&args.out) {
        return fail(EXIT_USAGE, e);
    }
    let (truth, data, ws) = match generate_instance(&params) {
        Ok(v) => v,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let data_path = args.out.join("data.mtpr");
    let truth_path = args.out.join("truth.mtpr");
    if let Err(e) = format::write_dataset(&data_path, &data) {
        return fail(EXIT_USAGE, e);
    }
    if let Err(e) = format::write_truth(&truth_path, &params, &truth, &ws) {
        return fail(EXIT_USAGE, e);
    }
    println!("wrote {} and {}", data_path.display(), truth_path.display());
    EXIT_OK
}

fn attack_config(args: &AttackArgs, params: &ModelParams) -> Result<AttackConfig, String> {
    let method = match args.method.as_str() {
        "threshold" => PublicMethod::Threshold {
            window: args.window,
        },
        "sdp" => PublicMethod::Sdp { tol: 1e-6 },
        other => return Err(format!("unknown method '{other}' (threshold or sdp)")),
    };
    let house_budget = match args.house_budget.as_deref() {
        None => None,
        Some("formula") => Some(formula_house_budget(
            params.k_priv,
            params.m,
            params.n_priv.max(1),
        )),
        Some(v) => Some(
            v.parse::<u64>()
                .map_err(|_| format!("bad house budget '{v}'"))?,
        ),
    };
    Ok(AttackConfig {
        method,
        house_budget,
        sdp_tol: 1e-6,
    })
}

fn run_attack(args: &AttackArgs) -> i32 {
    let data = match format::read_dataset(&args.input) {
        Ok(d) => d,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let config = match attack_config(args, &data.params) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    if let Err(e) = std::fs::create_dir_all(&args.out) {
        return fail(EXIT_USAGE, e);
    }
    let report = match learn_private_images_with(&data, &config) {
        Ok(r) => r,
        Err(e) => return fail(exit_code_for(&e), e),
    };
    let rec_path = args.out.join("recovered.mtpr");
    if let Err(e) = format::write_recovered(&rec_path, &data.params, &report.recovered) {
        return fail(EXIT_USAGE, e);
    }
    let doc = report::attack_doc(&report, &data.params);
    let report_path = args.out.join("report.toml");
    if let Err(e) = std::fs::write(&report_path, report::to_toml(&doc)) {
        return fail(EXIT_USAGE, e);
    }
    println!(
        "recovered {} images -> {} ({} ambiguous pixels)",
        report.recovered.ncols(),
        rec_path.display(),
        report.ambiguity_count
    );
    EXIT_OK
}

fn run_evaluate(args: &EvaluateArgs) -> i32 {
    let recovered = match format::read_dataset(&args.recovered) {
        Ok(d) => d,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let (_, truth, _) = match format::read_truth(&args.truth) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    if recovered.images.nrows() != truth.entries.nrows() {
        return fail(EXIT_USAGE, "recovered and truth pixel counts differ");
    }
    let eval = evaluate_images(&recovered.images, &truth);
    let text = report::to_toml(&report::evaluation_doc(&eval));
    match &args.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, text) {
                return fail(EXIT_USAGE, e);
            }
        }
        None => print!("{text}"),
    }
    EXIT_OK
}

fn run_gram(args: &GramArgs) -> i32 {
    let data = match format::read_dataset(&args.input) {
        Ok(d) => d,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let grid = args.grid.unwrap_or_else(|| data.params.grid());
    let eta = args.eta.unwrap_or_else(|| gram_eta(&data.params));
    let m = match gram_extract(&data, eta, grid) {
        Ok(m) => m,
        Err(e) => return fail(exit_code_for(&e), e),
    };
    if let Err(e) = format::write_overlap_text(&args.out, &m) {
        return fail(EXIT_USAGE, e);
    }
    println!("wrote {} ({}x{} grid {})", args.out.display(), m.order(), m.order(), grid);
    EXIT_OK
}

fn run_floral(args: &FloralArgs) -> i32 {
    let m = match format::read_overlap_text(&args.input) {
        Ok(m) => m,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    if m.grid() != args.k {
        return fail(
            EXIT_USAGE,
            format!(
                "dump is on grid {} but k = {}; the floral search needs an all-private matrix",
                m.grid(),
                args.k
            ),
        );
    }
    match find_floral_submatrix(&m, args.k, None) {
        Err(e) => fail(exit_code_for(&e), e),
        Ok(None) => fail(EXIT_RECOVERY, "no floral submatrix found"),
        Ok(Some(assignment)) => {
            let doc = report::FloralSection {
                indices: assignment.indices.clone(),
                labels: assignment.labels.clone(),
            };
            #[derive(serde::Serialize)]
            struct FloralDoc {
                floral: report::FloralSection,
            }
            let text = report::to_toml(&FloralDoc { floral: doc });
            match &args.out {
                Some(path) => {
                    if let Err(e) = std::fs::write(path, text) {
                        return fail(EXIT_USAGE, e);
                    }
                }
                None => print!("{text}"),
            }
            EXIT_OK
        }
    }
}

fn run_selftest() -> i32 {
    let mut failures = 0;
    let mut check = |name: &str, ok: bool| {
        println!("{} {name}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };

    // Psi identities and round trip
    check("psi(0) == 0", mtpr::gram::psi(0.0) == 0.0);
    check(
        "psi(1) == 1 - 2/pi",
        (mtpr::gram::psi(1.0) - (1.0 - std::f64::consts::FRAC_2_PI)).abs() < 1e-12,
    );
    check("psi_inv round trip", {
        (1..=1000).all(|i| {
            let z = i as f64 / 1000.0;
            (mtpr::gram::psi_inv(mtpr::gram::psi(z), 1e-14) - z).abs() <= 1e-9
        })
    });

    // set-system identification on shuffled families
    check("identify_family k=2..5", {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        [2usize, 3, 4, 5].iter().all(|&k| {
            (0..20).all(|_| {
                let n = (k + 2) as u8;
                let mut fam: Vec<Vec<u8>> = Vec::new();
                for u in 0..n {
                    for v in (u + 1)..n {
                        fam.push((0..n).filter(|&e| e != u && e != v).collect());
                    }
                }
                fam.shuffle(&mut rng);
                let l = fam.len();
                let mut p = vec![0i64; l * l];
                for a in 0..l {
                    for b in 0..l {
                        p[a * l + b] = if a == b {
                            k as i64
                        } else {
                            fam[a].iter().filter(|x| fam[b].contains(x)).count() as i64
                        };
                    }
                }
                mtpr::floral::identify_family(&p, k).is_ok()
            })
        })
    });

    // solver vs brute-force oracle
    check("sign solver oracle agreement", {
        use rand::Rng;
        use rand::SeedableRng;
        use rand_distr::StandardNormal;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let subsets: Vec<Vec<u8>> = vec![
            vec![0, 1],
            vec![0, 2],
            vec![0, 3],
            vec![1, 2],
            vec![1, 3],
            vec![2, 3],
        ];
        (0..100).all(|_| {
            let a: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
            let values: Vec<f64> = subsets
                .iter()
                .map(|s| s.iter().map(|&e| a[e as usize]).sum::<f64>().abs())
                .collect();
            let sys = mtpr::signsolve::SignedSystem::new(subsets.clone(), values).unwrap();
            let sol = mtpr::signsolve::solve_signed_system(&sys);
            let oracle = mtpr::signsolve::enumerate_all_solutions(&sys);
            matches!((sol, oracle), (Ok(s), Ok(o)) if !s.ambiguous && o.len() == 1)
        })
    });

    // small end-to-end recovery
    check("end-to-end recovery (all-private)", {
        let params = ModelParams {
            d: 6000,
            n_pub: 0,
            n_priv: 8,
            k_pub: 0,
            k_priv: 2,
            m: 150,
            seed: 11,
        };
        match generate_instance(&params) {
            Ok((truth, data, _)) => mtpr::pipeline::learn_private_images(&data)
                .map(|r| mtpr::pipeline::evaluate_recovery(&r, &truth).exact_count == 4)
                .unwrap_or(false),
            Err(_) => false,
        }
    });

    if failures == 0 {
        println!("selftest: all checks passed");
        EXIT_OK
    } else {
        println!("selftest: {failures} check(s) failed");
        EXIT_RECOVERY
    }
}

fn run_bench(args: &BenchArgs) -> i32 {
    use std::time::Instant;
    let params = ModelParams {
        d: args.d,
        n_pub: 0,
        n_priv: args.n_priv,
        k_pub: 0,
        k_priv: args.k_priv,
        m: args.m,
        seed: args.seed,
    };
    if let Err(e) = params.validate() {
        return fail(EXIT_USAGE, e);
    }
    println!("{:<22} {:>12}", "stage", "seconds");
    let clock = Instant::now();
    let (truth, data, _) = match generate_instance(&params) {
        Ok(v) => v,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    println!("{:<22} {:>12.3}", "generate", clock.elapsed().as_secs_f64());

    let clock = Instant::now();
    let gram = match gram_extract(&data, gram_eta(&params), params.grid()) {
        Ok(g) => g,
        Err(e) => return fail(exit_code_for(&e), e),
    };
    println!("{:<22} {:>12.3}", "gram-extract", clock.elapsed().as_secs_f64());

    let clock = Instant::now();
    let houses = count_houses(&gram, params.k_priv).unwrap_or(0);
    println!(
        "{:<22} {:>12.3}   ({houses} houses)",
        "count-houses",
        clock.elapsed().as_secs_f64()
    );

    let clock = Instant::now();
    let report = match mtpr::pipeline::learn_private_images(&data) {
        Ok(r) => r,
        Err(e) => return fail(exit_code_for(&e), e),
    };
    println!("{:<22} {:>12.3}", "full attack", clock.elapsed().as_secs_f64());
    for (stage, seconds) in &report.timing {
        println!("{:<22} {:>12.3}", format!("  {stage}"), seconds);
    }
    let eval = mtpr::pipeline::evaluate_recovery(&report, &truth);
    println!(
        "exact recoveries: {}/{} (max error {:.3e})",
        eval.exact_count,
        report.recovered.ncols(),
        eval.max_abs_error
    );
    EXIT_OK
}
