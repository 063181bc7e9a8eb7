fn main() {
    std::process::exit(crowtune::cli::run(std::env::args_os()));
}
