use std::io::{stderr, stdout, Write};

fn main() {
    let mut out = stdout().lock();
    let mut err = stderr();
    let code = posi_cli::run(std::env::args_os(), &mut out, &mut err);
    let _ = out.flush();
    std::process::exit(code);
}
