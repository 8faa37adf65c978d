fn main() {
    std::process::exit(stampfit::cli::run(std::env::args_os()));
}
