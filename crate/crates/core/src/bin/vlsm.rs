fn main() {
    std::process::exit(vlsm::cli::run_cli(std::env::args_os()));
}
