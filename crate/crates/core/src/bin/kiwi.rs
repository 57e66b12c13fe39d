fn main() {
    kiwi::cli::init_logging();
    std::process::exit(kiwi::cli::run_command(std::env::args_os()));
}
