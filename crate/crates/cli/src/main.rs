use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "nonconv", version, about = "Run nonconventional sum experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the suites selected by a JSON configuration.
    Run {
        config: PathBuf,
        /// Worker threads for replica loops.
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Output directory; overrides `output_dir` in the configuration.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the available suites.
    ListSuites,
    /// Describe a built-in model or function, or a JSON spec file.
    Describe { entity: String },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, threads, out } => nonconv_cli::run_config_file(&config, threads, out.as_deref()),
        Command::ListSuites => {
            print!("{}", nonconv_cli::list_suites());
            0
        }
        Command::Describe { entity } => match nonconv_cli::describe::describe(&entity) {
            Ok(text) => {
                print!("{text}");
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
    };
    ExitCode::from(code as u8)
}
