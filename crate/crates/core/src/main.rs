use std::process::exit;

fn main() {
    exit(apcon::cli::run(std::env::args_os()));
}
