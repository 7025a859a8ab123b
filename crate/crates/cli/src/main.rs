//! `graphforge`: validate, run, differentiate, optimize and inspect
//! function documents.
//!
//! Exit codes: 0 success, 2 parse or validation failure, 3 execution
//! failure, 4 usage error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use graphforge::autodiff::{differentiate, AutodiffError};
use graphforge::interp::{compile, CompileOptions, ExecError, TensorValue};
use graphforge::ir::{Function, Node, NodeId, OpTag};
use graphforge::passes::{
    partition, run_pipeline, ConvLayout, LayoutPreferences, LiveInterval, Pass, PassError,
};
use graphforge::serial::{export_dot, parse_function, parse_tensor, print_function, print_tensor};

#[derive(Parser)]
#[command(
    name = "graphforge",
    version,
    about = "Graph compiler and reference interpreter"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a function document.
    Validate { file: PathBuf },
    /// Compile and execute a function.
    Run {
        file: PathBuf,
        /// `p<k>=path`, `<k>=path`, or a bare path bound in parameter order.
        #[arg(long = "input", short = 'i')]
        inputs: Vec<String>,
        /// Directory for result<k>.tensor.json files.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_optimize: bool,
    },
    /// Write the gradient function.
    Grad {
        file: PathBuf,
        /// Parameters to differentiate with respect to (default: all).
        #[arg(long, value_delimiter = ',')]
        wrt: Vec<String>,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply a pass pipeline.
    Optimize {
        file: PathBuf,
        #[arg(long, default_value = "simplify,cse,fold")]
        passes: String,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print live intervals, arena offsets and the arena size.
    Plan {
        file: PathBuf,
        #[arg(long)]
        no_optimize: bool,
    },
    /// Split the function between the main and fallback backends.
    Partition {
        file: PathBuf,
        /// Op names the main backend supports (default: all).
        #[arg(long)]
        supported: Option<String>,
    },
    /// Print Graphviz text.
    Dot { file: PathBuf },
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

fn invalid(message: impl ToString) -> Failure {
    Failure {
        code: 2,
        message: message.to_string(),
    }
}

fn runtime(message: impl ToString) -> Failure {
    Failure {
        code: 3,
        message: message.to_string(),
    }
}

fn usage(message: impl ToString) -> Failure {
    Failure {
        code: 4,
        message: message.to_string(),
    }
}

impl From<ExecError> for Failure {
    fn from(e: ExecError) -> Self {
        match e {
            ExecError::UnsupportedOp { .. } | ExecError::InvalidOrder(_) | ExecError::Pass(_) => {
                runtime(e)
            }
            _ => invalid(e),
        }
    }
}

type Outcome = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

fn load(path: &Path) -> Result<Function, Failure> {
    parse_function(&read(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn conv_layout() -> Result<ConvLayout, Failure> {
    ConvLayout::from_env().map_err(|e| usage(format!("{}: {e}", ConvLayout::ENV_VAR)))
}

fn options(no_optimize: bool) -> Result<CompileOptions, Failure> {
    Ok(CompileOptions {
        optimize: !no_optimize,
        conv_layout: conv_layout()?,
        ..CompileOptions::default()
    })
}

/// Resolves `p3` or `3` to a parameter index.
fn parameter_index(name: &str, count: usize) -> Result<usize, Failure> {
    let digits = name.strip_prefix('p').unwrap_or(name);
    match digits.parse::<usize>() {
        Ok(k) if k < count => Ok(k),
        Ok(k) => Err(usage(format!(
            "parameter {k} out of range ({count} parameters)"
        ))),
        Err(_) => Err(usage(format!(
            "`{name}` is not a parameter name (p<k> or <k>)"
        ))),
    }
}

fn bind_inputs(f: &Function, bindings: &[String]) -> Result<Vec<TensorValue>, Failure> {
    let count = f.parameters().len();
    let mut bound: Vec<Option<TensorValue>> = vec![None; count];
    let mut next = 0;
    for binding in bindings {
        let (index, path) = match binding.split_once('=') {
            Some((name, path)) => (parameter_index(name, count)?, path),
            None => {
                while next < count && bound[next].is_some() {
                    next += 1;
                }
                if next == count {
                    return Err(usage(format!("too many inputs: {binding}")));
                }
                (next, binding.as_str())
            }
        };
        if bound[index].is_some() {
            return Err(usage(format!("parameter p{index} bound twice")));
        }
        let text = read(Path::new(path))?;
        let tensor = parse_tensor(&text).map_err(|e| invalid(format!("{path}: {e}")))?;
        bound[index] = Some(tensor);
    }
    bound
        .into_iter()
        .enumerate()
        .map(|(k, t)| t.ok_or_else(|| usage(format!("no input for parameter p{k}"))))
        .collect()
}

fn cmd_validate(file: &Path) -> Outcome {
    load(file)?;
    println!("OK");
    Ok(())
}

fn cmd_run(file: &Path, inputs: &[String], out: Option<&Path>, no_optimize: bool) -> Outcome {
    let f = load(file)?;
    let inputs = bind_inputs(&f, inputs)?;
    let mut options = options(no_optimize)?;
    options.parameter_layouts = inputs.iter().map(|t| t.layout().clone()).collect();
    let exe = compile(&f, &options)?;
    let results = exe.call(&inputs)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)
            .map_err(|e| usage(format!("cannot create {}: {e}", dir.display())))?;
    }
    for (k, r) in results.iter().enumerate() {
        let row_major = TensorValue::from_row_major(r.descriptor().clone(), r.to_row_major())?;
        match out {
            Some(dir) => {
                let path = dir.join(format!("result{k}.tensor.json"));
                write(&path, &print_tensor(&row_major))?;
                println!("result{k}\t{}\t{}", r.descriptor(), path.display());
            }
            None => print!("{}", print_tensor(&row_major)),
        }
    }
    Ok(())
}

fn cmd_grad(file: &Path, wrt: &[String], out: Option<&Path>) -> Outcome {
    let f = load(file)?;
    let params = f.parameters();
    let wrt: Vec<NodeId> = if wrt.is_empty() {
        params.to_vec()
    } else {
        wrt.iter()
            .map(|name| parameter_index(name, params.len()).map(|k| params[k]))
            .collect::<Result<_, _>>()?
    };
    let g = differentiate(&f, &wrt).map_err(|e| match e {
        AutodiffError::Exec(e) => Failure::from(e),
        e => invalid(e),
    })?;
    let text = print_function(&g);
    match out {
        Some(path) => write(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_optimize(file: &Path, passes: &str, out: Option<&Path>) -> Outcome {
    let passes = Pass::parse_list(passes).map_err(usage)?;
    let f = load(file)?;
    let prefs = LayoutPreferences::for_conv(conv_layout()?);
    let g = run_pipeline(&f, &passes, &prefs).map_err(|e| match e {
        PassError::FoldFailure { .. } => runtime(e),
        e => invalid(e),
    })?;
    let text = print_function(&g);
    match out {
        Some(path) => {
            write(path, &text)?;
            println!("nodes {} -> {}", f.node_count(), g.node_count());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_plan(file: &Path, no_optimize: bool) -> Outcome {
    let f = load(file)?;
    let exe = compile(&f, &options(no_optimize)?)?;
    let plan = exe.plan();
    println!("tensor\tstart\tend\toffset\tsize");
    for iv in &plan.intervals {
        let end = if iv.end == LiveInterval::END_OF_PROGRAM {
            "end".to_string()
        } else {
            iv.end.to_string()
        };
        let bytes = exe.function().descriptor(iv.tensor).unwrap().byte_size();
        let offset = plan
            .offset_of(iv.tensor)
            .map_or_else(|| "-".to_string(), |o| o.to_string());
        let tensor = if iv.tensor.port == 0 {
            iv.tensor.node.to_string()
        } else {
            iv.tensor.to_string()
        };
        println!("{tensor}\t{}\t{end}\t{offset}\t{bytes}", iv.start);
    }
    println!("arena {} bytes", plan.arena_size);
    Ok(())
}

fn cmd_partition(file: &Path, supported: Option<&str>) -> Outcome {
    let allowed: Option<Vec<OpTag>> = supported
        .map(|list| {
            list.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<OpTag>().map_err(usage))
                .collect::<Result<_, _>>()
        })
        .transpose()?;
    let f = load(file)?;
    let p = partition(&f, |n: &Node| {
        allowed.as_ref().is_none_or(|a| a.contains(&n.op.tag()))
    });
    print!("{p}");
    Ok(())
}

fn cmd_dot(file: &Path) -> Outcome {
    print!("{}", export_dot(&load(file)?));
    Ok(())
}

fn dispatch(command: Command) -> Outcome {
    match command {
        Command::Validate { file } => cmd_validate(&file),
        Command::Run {
            file,
            inputs,
            out,
            no_optimize,
        } => cmd_run(&file, &inputs, out.as_deref(), no_optimize),
        Command::Grad { file, wrt, out } => cmd_grad(&file, &wrt, out.as_deref()),
        Command::Optimize { file, passes, out } => cmd_optimize(&file, &passes, out.as_deref()),
        Command::Plan { file, no_optimize } => cmd_plan(&file, no_optimize),
        Command::Partition { file, supported } => cmd_partition(&file, supported.as_deref()),
        Command::Dot { file } => cmd_dot(&file),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(4);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
