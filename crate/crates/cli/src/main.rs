use std::process::ExitCode;

use clap::Parser;
use leafsev_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let code = run(cli, &mut stdout.lock());
    ExitCode::from(code as u8)
}
