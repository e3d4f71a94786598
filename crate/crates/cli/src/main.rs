//! `cmseq`: generate trajectories from CM models, classify covariance
//! functions, fit models and export covariances.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cmseq::characterize::{self, ClassificationReport, DEFAULT_REL_TOL};
use cmseq::{io as cmio, BlockCovariance, Direction, Error, FitOptions};

#[derive(Parser)]
#[command(name = "cmseq", version, about = "Gaussian CM, reciprocal and Markov sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample trajectories from a model file into CSV.
    Generate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV, `-` for stdout.
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// Report Markov, reciprocal and CM verdicts for a covariance.
    Classify {
        #[command(flatten)]
        source: CovSource,
        #[command(flatten)]
        tol: TolArg,
        /// Extra interval CM windows `k1:k2`.
        #[arg(long = "windows", value_parser = parse_window)]
        windows: Vec<(usize, usize)>,
        /// Anchor of the interval windows.
        #[arg(long, default_value = "first")]
        direction: Direction,
        /// Also write the JSON report here, `-` for stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a CM model to a covariance file.
    Fit {
        #[arg(long)]
        cov: PathBuf,
        #[arg(long)]
        direction: Direction,
        #[arg(long, default_value = "-")]
        out: PathBuf,
        #[command(flatten)]
        tol: TolArg,
        /// Skip the CM characterization precondition.
        #[arg(long)]
        no_enforce: bool,
    },
    /// Write the covariance of a model, or the empirical covariance of a
    /// trajectory CSV.
    Covariance {
        #[arg(long, required_unless_present = "empirical", conflicts_with = "empirical")]
        model: Option<PathBuf>,
        /// Trajectory CSV, `-` for stdin.
        #[arg(long)]
        empirical: Option<PathBuf>,
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct CovSource {
    #[arg(long)]
    cov: Option<PathBuf>,
    /// Classify the empirical covariance of a trajectory CSV (`-` for
    /// stdin) at a sample-size dependent tolerance.
    #[arg(long)]
    empirical: Option<PathBuf>,
}

#[derive(Args)]
struct TolArg {
    /// Relative residual tolerance.
    #[arg(long, env = "CMSEQ_TOL")]
    tol: Option<f64>,
}

fn parse_window(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected k1:k2, got {s:?}"))?;
    let k1 = a.trim().parse().map_err(|_| format!("bad k1 in {s:?}"))?;
    let k2 = b.trim().parse().map_err(|_| format!("bad k2 in {s:?}"))?;
    Ok((k1, k2))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Parse(_) => 1,
        Error::Shape(_) | Error::NonFinite(_) | Error::Indefinite { .. } | Error::InvalidWindow { .. } => 2,
        Error::Precondition(_) | Error::Characterization(_) | Error::ScaleGuard { .. } => 3,
    }
}

fn is_stdio(path: &Path) -> bool {
    path.as_os_str() == "-"
}

fn read_text(path: &Path) -> Result<String, Error> {
    let mut s = String::new();
    if is_stdio(path) {
        io::stdin().read_to_string(&mut s)?;
    } else {
        s = fs::read_to_string(path)
            .map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    }
    Ok(s)
}

fn open_out(path: &Path) -> Result<Box<dyn Write>, Error> {
    if is_stdio(path) {
        Ok(Box::new(io::BufWriter::new(io::stdout().lock())))
    } else {
        let f = fs::File::create(path)
            .map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        Ok(Box::new(io::BufWriter::new(f)))
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    let mut w = open_out(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn read_empirical(path: &Path) -> Result<(BlockCovariance, usize), Error> {
    let paths = if is_stdio(path) {
        cmio::read_trajectories(io::stdin().lock())?
    } else {
        let f = fs::File::open(path)
            .map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        cmio::read_trajectories(io::BufReader::new(f))?
    };
    Ok((paths.empirical_covariance()?, paths.count()))
}

/// Residuals of an empirical covariance carry sampling error of order
/// `||C|| / sqrt(M)`; the default threshold sits a few standard errors above.
fn empirical_tolerance(count: usize) -> f64 {
    5.0 / (count as f64).sqrt()
}

fn format_report(r: &ClassificationReport) -> String {
    let indices: Vec<String> = r.worst_indices.iter().map(|i| i.to_string()).collect();
    format!(
        "{:<24} {}  worst residual {:.3e} at ({})  threshold {:.3e}  checks {}",
        r.property,
        if r.passed { "pass" } else { "FAIL" },
        r.worst_residual,
        indices.join(", "),
        r.threshold,
        r.checks
    )
}

fn classify(
    source: &CovSource,
    tol: Option<f64>,
    windows: &[(usize, usize)],
    direction: Direction,
    out: Option<&Path>,
) -> Result<(), Error> {
    let (c, rel_tol, samples) = match (&source.cov, &source.empirical) {
        (Some(path), _) => (cmio::parse_covariance(&read_text(path)?)?, tol.unwrap_or(DEFAULT_REL_TOL), None),
        (None, Some(path)) => {
            let (c, count) = read_empirical(path)?;
            (c, tol.unwrap_or_else(|| empirical_tolerance(count)), Some(count))
        }
        (None, None) => unreachable!("clap enforces one source"),
    };
    let mut reports = vec![
        characterize::is_markov(&c, rel_tol),
        characterize::is_reciprocal(&c, rel_tol),
        characterize::is_cm(&c, Direction::First, rel_tol),
        characterize::is_cm(&c, Direction::Last, rel_tol),
    ];
    for &(k1, k2) in windows {
        reports.push(characterize::is_interval_cm(&c, k1, k2, direction, rel_tol)?);
    }

    let mut text = format!("N = {}, d = {}, rel_tol = {:e}", c.horizon(), c.dim(), rel_tol);
    if let Some(m) = samples {
        text.push_str(&format!(", empirical from {m} paths"));
    }
    text.push('\n');
    for r in &reports {
        text.push_str(&format_report(r));
        text.push('\n');
    }
    print!("{text}");

    if let Some(path) = out {
        let json = serde_json::json!({
            "n": c.horizon(),
            "d": c.dim(),
            "rel_tol": rel_tol,
            "empirical_paths": samples,
            "reports": reports,
        });
        let mut s = serde_json::to_string_pretty(&json).expect("report serializes");
        s.push('\n');
        write_text(path, &s)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Generate { model, count, seed, out } => {
            let m = cmio::parse_model(&read_text(&model)?)?;
            let paths = m.sample(count, seed)?;
            let mut w = open_out(&out)?;
            cmio::write_trajectories(&paths, &mut w)?;
            w.flush()?;
        }
        Command::Classify {
            source,
            tol,
            windows,
            direction,
            out,
        } => classify(&source, tol.tol, &windows, direction, out.as_deref())?,
        Command::Fit {
            cov,
            direction,
            out,
            tol,
            no_enforce,
        } => {
            let c = cmio::parse_covariance(&read_text(&cov)?)?;
            let opts = FitOptions {
                enforce: !no_enforce,
                rel_tol: tol.tol.unwrap_or(DEFAULT_REL_TOL),
            };
            let m = cmseq::fit_cm_with(&c, direction, &opts)?;
            write_text(&out, &cmio::model_to_json(&m))?;
        }
        Command::Covariance { model, empirical, out } => {
            let c = match (model, empirical) {
                (Some(path), _) => cmio::parse_model(&read_text(&path)?)?.covariance_of(),
                (None, Some(path)) => read_empirical(&path)?.0,
                (None, None) => unreachable!("clap enforces one source"),
            };
            write_text(&out, &cmio::covariance_to_json(&c))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
