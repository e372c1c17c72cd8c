fn main() {
    std::process::exit(delaymp::cli::run_from(std::env::args_os()));
}
