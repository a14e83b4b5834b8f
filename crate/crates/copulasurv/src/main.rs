fn main() {
    std::process::exit(copulasurv::cli::run(std::env::args_os()));
}
