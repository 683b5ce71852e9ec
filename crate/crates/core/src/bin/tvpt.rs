fn main() {
    std::process::exit(tvpt::cli::run(std::env::args_os()));
}
