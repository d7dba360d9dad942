//! `flexmac` command-line driver.
//!
//! Every failure prints one line `error: <kind>: <message>` on stderr and
//! exits nonzero: 1 for a verification mismatch, 2 for any other error.

use std::io::{ErrorKind, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use flexmac::bench::{compare, run_rigid, run_scenario, run_serialized, Scenario};
use flexmac::formats::FloatValue;
use flexmac::isa::{assemble, disassemble, from_bytes, to_bytes};
use flexmac::multiplier::verify::{verify_exhaustive, verify_samples};
use flexmac::multiplier::{multiply, Datatype, LaneValue, MultMode};
use flexmac::Error;

#[derive(Parser)]
#[command(
    name = "flexmac",
    version,
    about = "Multi-precision multiplier model and MAC array simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Multiply two operands and print the product.
    Mul(MulArgs),
    /// Check the multiplier against the exact oracle.
    Verify(VerifyArgs),
    /// Run a scenario on the flexible array and write its report.
    Run(RunArgs),
    /// Run a scenario on the flexible and rigid arrays and compare them.
    Compare(OutArgs),
    /// Assemble a text program into a little-endian binary.
    Asm(AsmArgs),
    /// Disassemble a binary program into text.
    Disasm(DisasmArgs),
}

#[derive(Args)]
struct MulArgs {
    /// Mode: int4, int8, uint4, uint8, int4x8, int8x4, uint4x8, uint8x4, bf16, fp8a, fp8b.
    #[arg(long)]
    mode: MultMode,
    /// Exponent bias for float modes (default: the format's own bias).
    #[arg(long, allow_negative_numbers = true)]
    bias: Option<i32>,
    /// Treat operands as full packed multiplier words and print every lane.
    #[arg(long)]
    packed: bool,
    /// First operand bit pattern (hex with 0x, binary with 0b, or decimal).
    a: String,
    /// Second operand bit pattern.
    b: String,
}

#[derive(Args)]
struct VerifyArgs {
    /// Modes to check.
    #[arg(required = true)]
    modes: Vec<MultMode>,
    /// Check every operand pair (modes with at most 2^16 pairs).
    #[arg(long, conflicts_with = "samples")]
    exhaustive: bool,
    /// Number of random multiplier passes.
    #[arg(long, required_unless_present = "exhaustive")]
    samples: Option<u64>,
    /// Seed for random passes.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Array {
    /// Tenants co-scheduled on the scenario's partitions.
    Flexible,
    /// Tenants one after another on the fully fused array.
    Serialized,
    /// Tenants one after another on the rigid baseline.
    Rigid,
}

#[derive(Args)]
struct OutArgs {
    /// Scenario file.
    scenario: PathBuf,
    /// Output directory.
    #[arg(long, env = "FLEXMAC_OUT_DIR", default_value = "reports")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    io: OutArgs,
    /// Which execution to report.
    #[arg(long, value_enum, default_value_t = Array::Flexible)]
    array: Array,
}

#[derive(Args)]
struct AsmArgs {
    /// Assembly source.
    input: PathBuf,
    /// Output binary (default: the input with a `.bin` extension).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DisasmArgs {
    /// Binary program.
    input: PathBuf,
    /// Output text file (default: standard output).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

enum Failure {
    Error(Error),
    Mismatch(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Error(e.into())
    }
}

/// `println!` that reports a closed stdout as an error instead of panicking.
macro_rules! say {
    ($($arg:tt)*) => {
        writeln!(std::io::stdout(), $($arg)*)?
    };
}

fn parse_bits(s: &str) -> Result<u64, Error> {
    let t = s.trim();
    let parsed = if let Some(h) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        u64::from_str_radix(h, 16)
    } else if let Some(b) = t.strip_prefix("0b") {
        u64::from_str_radix(b, 2)
    } else {
        t.parse()
    };
    parsed.map_err(|_| Error::Schema {
        field: "operand".into(),
        detail: format!("`{s}` is not a bit pattern"),
    })
}

fn render_float(v: &FloatValue) -> String {
    let digits = v.format().width().div_ceil(4) as usize;
    format!("{:#0w$x} ({})", v.bits(), v.decode(), w = digits + 2)
}

fn cmd_mul(args: MulArgs) -> Result<(), Failure> {
    let mut mode = args.mode;
    if let Some(bias) = args.bias {
        if mode.datatype != Datatype::Float {
            return Err(Error::ModeMismatch("--bias applies to float modes only".into()).into());
        }
        mode = mode.with_bias(bias);
    }
    let (a, b) = (parse_bits(&args.a)?, parse_bits(&args.b)?);
    if !args.packed {
        for (bits, width) in [(a, mode.a_element_width()), (b, mode.b_element_width())] {
            if bits >> width != 0 {
                return Err(Error::BitsOutOfRange { bits, width }.into());
            }
        }
    }
    let out = multiply(a, b, &mode)?;
    let lanes: Vec<String> = out
        .lanes
        .iter()
        .take(if args.packed { out.lanes.len() } else { 1 })
        .map(|l| match l {
            LaneValue::Float(v) => render_float(v),
            LaneValue::Int(v) => v.to_string(),
        })
        .collect();
    say!("{}", lanes.join(" "));
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<(), Failure> {
    let mut failed = vec![];
    for mode in &args.modes {
        let report = match args.samples {
            Some(n) => verify_samples(mode, n, args.seed)?,
            None => verify_exhaustive(mode)?,
        };
        say!("{report}");
        if !report.ok() {
            failed.push(mode.to_string());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Mismatch(format!(
            "oracle mismatch in {}",
            failed.join(", ")
        )))
    }
}

fn report_stem(s: &Scenario, what: &str) -> String {
    format!("{}.{what}", s.name)
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let s = Scenario::load(&args.io.scenario)?;
    let (report, what) = match args.array {
        Array::Flexible => (run_scenario(&s)?, "flexible"),
        Array::Serialized => (run_serialized(&s)?, "serialized"),
        Array::Rigid => (run_rigid(&s)?, "rigid"),
    };
    let stem = report_stem(&s, what);
    report.save(&args.io.out, &stem)?;
    say!("{}: {what} makespan {} cycles", s.name, report.makespan);
    for t in &report.tenants {
        say!(
            "  {} (stage {}, partition {}, {}x{}): {} cycles",
            t.name,
            t.stage,
            t.partition,
            t.rows,
            t.cols,
            t.cycles
        );
    }
    if let Some(u) = report.totals.utilization {
        say!("  utilization {u:.4}");
    }
    say!(
        "  wrote {}",
        args.io.out.join(format!("{stem}.{{json,csv}}")).display()
    );
    Ok(())
}

fn fmt_util(u: Option<f64>) -> String {
    u.map_or_else(|| "-".into(), |u| format!("{u:.4}"))
}

fn cmd_compare(args: OutArgs) -> Result<(), Failure> {
    let s = Scenario::load(&args.scenario)?;
    let flex = run_scenario(&s)?;
    let rigid = run_rigid(&s)?;
    let cmp = compare(&flex, &rigid)?;
    flex.save(&args.out, &report_stem(&s, "flexible"))?;
    rigid.save(&args.out, &report_stem(&s, "rigid"))?;
    let stem = report_stem(&s, "compare");
    cmp.save(&args.out, &stem)?;
    say!(
        "{}: speedup {:.4}, energy ratio {:.4}",
        s.name,
        cmp.speedup,
        cmp.energy_ratio
    );
    say!(
        "  utilization flexible {} rigid {}",
        fmt_util(cmp.flexible_utilization),
        fmt_util(cmp.rigid_utilization)
    );
    say!(
        "  makespan flexible {} rigid {} cycles",
        cmp.flexible_makespan,
        cmp.rigid_makespan
    );
    say!(
        "  wrote {}",
        args.out.join(format!("{stem}.{{json,csv}}")).display()
    );
    Ok(())
}

fn cmd_asm(args: AsmArgs) -> Result<(), Failure> {
    let words = assemble(&std::fs::read_to_string(&args.input)?)?;
    let out = args
        .output
        .unwrap_or_else(|| args.input.with_extension("bin"));
    std::fs::write(&out, to_bytes(&words))?;
    eprintln!("{} words -> {}", words.len(), out.display());
    Ok(())
}

fn cmd_disasm(args: DisasmArgs) -> Result<(), Failure> {
    let words = from_bytes(&std::fs::read(&args.input)?)?;
    let text = disassemble(&words);
    match args.output {
        Some(p) => std::fs::write(p, text)?,
        None => write!(std::io::stdout(), "{text}")?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Mul(a) => cmd_mul(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Asm(a) => cmd_asm(a),
        Command::Disasm(a) => cmd_disasm(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let head: Vec<&str> = msg
                .lines()
                .take_while(|l| !l.trim().is_empty())
                .map(str::trim)
                .collect();
            eprintln!(
                "error: usage: {}",
                head.join(" ").trim_start_matches("error: ")
            );
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(Error::Io(e))) if e.kind() == ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(Failure::Mismatch(msg)) => {
            eprintln!("error: mismatch: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {}: {e}", e.kind());
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn bit_patterns() {
        assert_eq!(parse_bits("0x38").unwrap(), 0x38);
        assert_eq!(parse_bits("0b101").unwrap(), 5);
        assert_eq!(parse_bits("12").unwrap(), 12);
        assert!(parse_bits("zz").is_err());
    }

    #[test]
    fn float_rendering_pads_to_width() {
        let fmt = flexmac::formats::FloatFormat::new(8, 7).unwrap();
        let v = FloatValue::new(0x3f80, fmt).unwrap();
        assert_eq!(render_float(&v), "0x3f80 (1.0)");
        let fp8 = flexmac::formats::FloatFormat::new(4, 3).unwrap();
        assert_eq!(
            render_float(&FloatValue::new(0x8, fp8).unwrap()),
            "0x08 (0.015625)"
        );
    }
}
