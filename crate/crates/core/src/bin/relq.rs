use std::io::{self, BufReader};
use std::process::ExitCode;

fn main() -> ExitCode {
    let mut stdin = BufReader::new(io::stdin().lock());
    let code = relq::cli::run(std::env::args_os(), &mut stdin, &mut io::stdout().lock(), &mut io::stderr().lock());
    ExitCode::from(code as u8)
}
