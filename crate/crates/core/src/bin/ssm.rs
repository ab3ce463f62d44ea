use std::io::{stderr, stdout};

fn main() {
    let code = ssm_core::io::cli::run_cli(std::env::args_os(), &mut stdout().lock(), &mut stderr().lock());
    std::process::exit(code);
}
