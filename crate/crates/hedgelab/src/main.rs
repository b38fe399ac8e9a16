fn main() {
    std::process::exit(hedgelab::cli::run_command(std::env::args_os()));
}
