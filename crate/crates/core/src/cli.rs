//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on bad input, 2 when the diagonal is
//! infeasible (the Kadison report is still written), 3 when a `verify` or
//! `oracle` check fails.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::carpenter::{build, build_case2, Mode, Options, Pipeline};
use crate::diagonal::{classify, DiagonalSpec, Verdict};
use crate::error::{Error, Result};
use crate::matrix::SymmetricMatrix;
use crate::verify::{check_projection, necessity_oracle_report};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Exact,
    Approximate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PipelineArg {
    Shortcut,
    Full,
}

#[derive(Debug, Parser)]
#[command(name = "carpenter", version, about = "Orthogonal projections with a prescribed diagonal")]
pub struct CliConfig {
    #[command(subcommand)]
    pub command: Command,

    /// Diagonal spec as JSON (`-` or absent for stdin).
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,

    /// Output file (absent for stdout).
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value = "exact")]
    pub mode: ModeArg,

    #[arg(long, global = true, default_value_t = 1e-6)]
    pub epsilon: f64,

    /// Rows per block for non-summable diagonals.
    #[arg(long, global = true, default_value_t = 100)]
    pub rows: usize,

    #[arg(long, global = true, value_enum, default_value = "shortcut")]
    pub pipeline: PipelineArg,

    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, global = true, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the Kadison report.
    Classify,
    /// Build a dense projection and write a verification sidecar.
    Build,
    /// Emit tetris rows as JSON lines for a non-summable diagonal.
    Stream,
    /// Check a CSV matrix against a diagonal.
    Verify {
        #[arg(long)]
        matrix: PathBuf,
    },
    /// Sample random projections and test the integrality of a − b.
    Oracle {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        rank: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
    },
}

impl CliConfig {
    pub fn options(&self) -> Options {
        Options {
            mode: match self.mode {
                ModeArg::Exact => Mode::Exact,
                ModeArg::Approximate => Mode::Approximate,
            },
            epsilon: self.epsilon,
            truncation_rows: self.rows,
            pipeline: match self.pipeline {
                PipelineArg::Shortcut => Pipeline::Shortcut,
                PipelineArg::Full => Pipeline::Full,
            },
            ..Options::default()
        }
    }

    fn validate_paths(&self) -> Result<()> {
        if let Some(p) = self.input.as_ref().filter(|p| p.as_os_str() != "-") {
            if !p.is_file() {
                return Err(Error::Input(format!("input file {} not found", p.display())));
            }
        }
        if let Command::Verify { matrix } = &self.command {
            if !matrix.is_file() {
                return Err(Error::Input(format!("matrix file {} not found", matrix.display())));
            }
        }
        if let Some(out) = &self.output {
            let parent = out.parent().filter(|p| !p.as_os_str().is_empty());
            if parent.is_some_and(|p| !p.is_dir()) {
                return Err(Error::Input(format!("output directory for {} does not exist", out.display())));
            }
        }
        Ok(())
    }

    fn read_spec(&self) -> Result<DiagonalSpec> {
        let mut text = String::new();
        match self.input.as_ref().filter(|p| p.as_os_str() != "-") {
            Some(p) => {
                File::open(p)?.read_to_string(&mut text)?;
            }
            None => {
                io::stdin().read_to_string(&mut text)?;
            }
        }
        DiagonalSpec::from_json(&text).map_err(|e| Error::Input(format!("diagonal spec: {e}")))
    }

    fn output(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.output {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(BufWriter::new(io::stdout())),
        })
    }

    /// Sidecar next to the output file, or stderr.
    fn report_sink(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.output {
            Some(p) => Box::new(BufWriter::new(File::create(sidecar_path(p))?)),
            None => Box::new(io::stderr()),
        })
    }
}

/// `<output>.report.json`.
pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".report.json");
    PathBuf::from(s)
}

fn write_json<T: Serialize>(mut w: impl Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Plain decimal with 17 significant digits.
pub fn format_17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let exp: i32 = sci.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    let decimals = (16 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

pub fn write_csv<W: Write>(m: &SymmetricMatrix, w: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for row in m.rows() {
        wtr.write_record(row.iter().map(|&x| format_17(x)))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<SymmetricMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(r);
    let mut rows = Vec::new();
    for (lineno, record) in rdr.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .enumerate()
            .map(|(col, field)| {
                field.parse::<f64>().map_err(|e| {
                    Error::Input(format!("matrix line {}, column {}: {field:?}: {e}", lineno + 1, col + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    SymmetricMatrix::from_rows(&rows)
}

#[derive(Serialize)]
struct JsonMatrix<'a> {
    indices: &'a [usize],
    rows: Vec<&'a [f64]>,
}

#[derive(Serialize)]
struct StreamColumn {
    position: usize,
    index: usize,
    norm_sq: f64,
    target: f64,
}

#[derive(Serialize)]
struct StreamBlockReport {
    block: usize,
    head: Option<usize>,
    rows: usize,
    gram_defect: f64,
    completed_max_error: f64,
    /// Input index of each touched position.
    positions: Vec<usize>,
    completed: Vec<StreamColumn>,
}

#[derive(Serialize)]
struct StreamReport {
    kadison: crate::diagonal::KadisonReport,
    complemented: bool,
    identity_indices: Vec<usize>,
    blocks: Vec<StreamBlockReport>,
}

/// Runs one command and returns the process exit code.
pub fn run(config: &CliConfig) -> i32 {
    match dispatch(config) {
        Ok(code) => code,
        Err(Error::Infeasible(report)) => {
            log::warn!("infeasible diagonal: a - b = {:?}", report.a_minus_b);
            let sink = config.report_sink();
            if let Err(e) = sink.and_then(|w| write_json(w, &report)) {
                eprintln!("error: {e}");
            }
            EXIT_INFEASIBLE
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

fn dispatch(config: &CliConfig) -> Result<i32> {
    config.validate_paths()?;
    match &config.command {
        Command::Classify => {
            let report = classify(&config.read_spec()?);
            write_json(config.output()?, &report)?;
            Ok(if report.verdict == Verdict::Infeasible { EXIT_INFEASIBLE } else { EXIT_OK })
        }
        Command::Build => {
            let spec = config.read_spec()?;
            let result = build(&spec, &config.options())?;
            match &result.matrix {
                Some(m) => match config.format {
                    Format::Csv => write_csv(m, config.output()?)?,
                    Format::Json => write_json(
                        config.output()?,
                        &JsonMatrix { indices: &result.indices, rows: m.rows().collect() },
                    )?,
                },
                None => {
                    return Err(Error::Input(
                        "diagonal is not summable; use the stream command for its rows".into(),
                    ))
                }
            }
            write_json(config.report_sink()?, &result.summary())?;
            Ok(EXIT_OK)
        }
        Command::Stream => {
            let spec = config.read_spec()?;
            let kadison = classify(&spec);
            if kadison.verdict == Verdict::Infeasible {
                return Err(Error::Infeasible(Box::new(kadison)));
            }
            let mut streamed = build_case2(&spec)?;
            let multi = streamed.blocks.len() > 1;
            let mut out = config.output()?;
            let mut blocks = Vec::new();
            for (b, block) in streamed.blocks.iter_mut().enumerate() {
                for _ in 0..config.rows {
                    let row = block.stream.next_row()?;
                    let mut value = serde_json::to_value(&row)?;
                    if multi {
                        value["block"] = b.into();
                    }
                    serde_json::to_writer(&mut out, &value)?;
                    out.write_all(b"\n")?;
                }
                let cc = block.stream.completed_columns();
                blocks.push(StreamBlockReport {
                    block: b,
                    head: block.head,
                    rows: block.stream.rows_emitted(),
                    gram_defect: crate::verify::check_rows(block.stream.rows()),
                    completed_max_error: cc.max_error(),
                    positions: block.stream.position_origins(),
                    completed: (0..cc.count)
                        .map(|p| StreamColumn {
                            position: p,
                            index: cc.origins[p],
                            norm_sq: cc.norms_sq[p],
                            target: cc.targets[p],
                        })
                        .collect(),
                });
            }
            out.flush()?;
            let report = StreamReport {
                kadison,
                complemented: streamed.complemented,
                identity_indices: streamed.identity_indices.clone(),
                blocks,
            };
            write_json(config.report_sink()?, &report)?;
            Ok(EXIT_OK)
        }
        Command::Verify { matrix } => {
            let spec = config.read_spec()?;
            let d = spec
                .len()
                .map(|n| spec.materialize(n))
                .ok_or_else(|| Error::Input("verify needs a finite diagonal".into()))?;
            let m = read_csv(File::open(matrix)?)?;
            let report = check_projection(&m, &d, crate::carpenter::BUILD_TOL);
            write_json(config.output()?, &report)?;
            Ok(if report.pass { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
        Command::Oracle { n, rank, trials } => {
            if rank > n {
                return Err(Error::Input(format!("rank {rank} exceeds dimension {n}")));
            }
            let report = necessity_oracle_report(*n, *rank, *trials, config.seed);
            write_json(config.output()?, &report)?;
            Ok(if report.pass { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
    }
}

/// Parses arguments, runs, and maps clap's own errors to exit code 1.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match CliConfig::try_parse_from(args) {
        Ok(config) => run(&config),
        Err(e) => {
            let _ = e.print();
            match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INPUT,
            }
        }
    }
}
