use std::io::{self, Write};

use pmchat::cli::{self, Io};
use pmchat::config::Config;

fn main() {
    let config = match Config::from_env() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    };
    let stdin = io::stdin();
    let mut stdin = stdin.lock();
    let mut stdout = io::stdout();
    let mut stderr = io::stderr();
    let code = cli::run(
        std::env::args_os(),
        &config,
        &mut Io { stdin: &mut stdin, stdout: &mut stdout, stderr: &mut stderr },
    );
    let _ = stdout.flush();
    std::process::exit(code);
}
