fn main() {
    std::process::exit(marstag_cli::run_cli(std::env::args_os()));
}
