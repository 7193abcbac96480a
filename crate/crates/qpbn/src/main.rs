use std::process::exit;

fn main() {
    exit(qpbn::cli::run(std::env::args_os()))
}
