use std::process::ExitCode;

use clap::Parser;
use nsvi_cli::{execute, Cli};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // Help and version requests are not errors.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let code = execute(cli, &mut std::io::stdout(), &mut std::io::stderr());
    ExitCode::from(code as u8)
}
