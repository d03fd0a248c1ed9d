use clap::Parser;
use hdcpd_cli::args::{Cli, Command};
use hdcpd_cli::{commands, exit, CliError};

fn run(cli: &Cli) -> Result<i32, CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Detect(a) => commands::detect(a),
        Command::Simulate(a) => commands::simulate_cmd(a),
        Command::Evaluate(a) => commands::evaluate_cmd(a),
        Command::Gains(a) => commands::gains(a),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Help and version requests are not errors.
            std::process::exit(if e.use_stderr() { exit::CONFIG } else { exit::OK });
        }
    };
    let code = match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("hdcpd: {e}");
            e.exit_code()
        }
    };
    if code == exit::NOTHING_TO_SPLIT {
        eprintln!("hdcpd: no segment could be split");
    }
    std::process::exit(code);
}
